//! Payoff distance between two market games and the 2-alpha check.

use serde::{Deserialize, Serialize};

use super::{
    certify_epsilon_equilibrium, certify_in, unit_margins, unit_space, EquilibriumCertificate, GameError, PlayerKind,
    StrategyScope,
};
use crate::market::{solve_market, EquilibriumSolution, MarketCase, MarketOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerDeviation {
    pub player: String,
    pub kind: PlayerKind,
    /// `max |u_a(s) - u_b(s)|` over the intersected strategy set, $/h.
    pub max_deviation_per_h: f64,
    /// The same difference at the supplied profiles, $/h.
    pub at_profiles_per_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameDistance {
    pub alpha_per_h: f64,
    /// `alpha` is the true supremum rather than a sampled lower bound.
    pub exact: bool,
    pub profiles_evaluated: usize,
    pub players: Vec<PlayerDeviation>,
    pub method: String,
}

fn check_compatible(a: &MarketCase, b: &MarketCase) -> Result<(), GameError> {
    let bad = |what: String| Err(GameError::IncompatibleGames(what));
    if a.network != b.network {
        return bad("networks differ".into());
    }
    if a.generators.len() != b.generators.len() || a.demands.len() != b.demands.len() {
        return bad("player sets differ".into());
    }
    for (x, y) in a.generators.iter().zip(&b.generators) {
        if x.id != y.id || x.bus != y.bus || x.blocks.len() != y.blocks.len() {
            return bad(format!("generator {} differs in identity or block count", x.id));
        }
    }
    for (x, y) in a.demands.iter().zip(&b.demands) {
        if x.id != y.id || x.bus != y.bus || x.blocks.len() != y.blocks.len() {
            return bad(format!("demand {} differs in identity or block count", x.id));
        }
    }
    Ok(())
}

fn profile_quantities(sol: &EquilibriumSolution, kind: PlayerKind, unit: usize) -> &[f64] {
    match kind {
        PlayerKind::GenCo => &sol.generation_mw[unit],
        _ => &sol.consumption_mw[unit],
    }
}

pub const DISTANCE_METHOD: &str = "exact: payoff differences are linear in each player's own blocks and independent \
     of prices, so the supremum is attained at a vertex of the intersected block polytope; the supplied \
     profiles are evaluated as well";

/// Largest payoff difference between the two games over every player and
/// every profile in the intersection of their strategy sets, plus the
/// supplied `profiles` (which need not lie in the intersection).
pub fn game_distance(
    case_a: &MarketCase,
    case_b: &MarketCase,
    profiles: &[&EquilibriumSolution],
) -> Result<GameDistance, GameError> {
    check_compatible(case_a, case_b)?;
    let zero = vec![0.0; case_a.network.buses.len()];
    let mut players = Vec::new();
    let units = (0..case_a.generators.len())
        .map(|i| (PlayerKind::GenCo, i, &case_a.generators[i].id))
        .chain((0..case_a.demands.len()).map(|j| (PlayerKind::ConCo, j, &case_a.demands[j].id)));
    for (kind, u, id) in units {
        // at zero prices the margins are the price-independent part
        let wa = unit_margins(case_a, &zero, kind, u);
        let wb = unit_margins(case_b, &zero, kind, u);
        let d: Vec<f64> = wa.iter().zip(&wb).map(|(x, y)| x - y).collect();
        let neg: Vec<f64> = d.iter().map(|x| -x).collect();
        let space = unit_space(case_a, kind, u).intersect(&unit_space(case_b, kind, u))?;
        let sup = space.maximize(&d).0.max(space.maximize(&neg).0).max(0.0);
        let at_profiles = profiles
            .iter()
            .map(|s| d.iter().zip(profile_quantities(s, kind, u)).map(|(x, p)| x * p).sum::<f64>().abs())
            .fold(0.0, f64::max);
        players.push(PlayerDeviation {
            player: id.clone(),
            kind,
            max_deviation_per_h: sup.max(at_profiles),
            at_profiles_per_h: at_profiles,
        });
    }
    // identical networks give the ISO identical rent functions
    players.push(PlayerDeviation { player: "iso".into(), kind: PlayerKind::Iso, max_deviation_per_h: 0.0, at_profiles_per_h: 0.0 });
    let alpha = players.iter().map(|p| p.max_deviation_per_h).fold(0.0, f64::max);
    Ok(GameDistance {
        alpha_per_h: alpha,
        exact: true,
        profiles_evaluated: profiles.len(),
        players,
        method: DISTANCE_METHOD.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoAlphaReport {
    pub alpha_per_h: f64,
    pub two_alpha_per_h: f64,
    /// `epsilon` of the perturbed equilibrium in the nominal game.
    pub epsilon_in_nominal_per_h: f64,
    /// `epsilon` of the perturbed equilibrium in its own game.
    pub epsilon_in_perturbed_per_h: f64,
    pub tolerance_per_h: f64,
    pub holds: bool,
    pub distance: GameDistance,
    pub certificate: EquilibriumCertificate,
    pub note: String,
}

pub const STRATEGY_SET_NOTE: &str =
    "best responses and payoff distances are taken over the intersection of the nominal and perturbed strategy sets";

/// Checks that the perturbed equilibrium is a `2 alpha`-equilibrium of the
/// nominal game. Fails with `AssertionFailed` naming the worst player when
/// it is not.
pub fn check_two_alpha(
    nominal: &MarketCase,
    perturbed: &MarketCase,
    sol_perturbed: &EquilibriumSolution,
    opts: &MarketOptions,
    tol: f64,
) -> Result<TwoAlphaReport, GameError> {
    let own = certify_epsilon_equilibrium(perturbed, sol_perturbed, tol)?;
    if !own.is_nash_within {
        return Err(GameError::NotAnEquilibrium { epsilon: own.epsilon_per_h, tolerance: tol });
    }
    let sol_nominal = solve_market(nominal, opts)?;
    let distance = game_distance(nominal, perturbed, &[&sol_nominal, sol_perturbed])?;
    let certificate = certify_in(nominal, StrategyScope::IntersectWith(perturbed), sol_perturbed, tol)?;
    let alpha = distance.alpha_per_h;
    let eps = certificate.epsilon_per_h;
    if eps > 2.0 * alpha + tol {
        let player = certificate.worst().map(|g| g.player.clone()).unwrap_or_default();
        return Err(GameError::AssertionFailed { player, epsilon: eps, two_alpha: 2.0 * alpha });
    }
    Ok(TwoAlphaReport {
        alpha_per_h: alpha,
        two_alpha_per_h: 2.0 * alpha,
        epsilon_in_nominal_per_h: eps,
        epsilon_in_perturbed_per_h: own.epsilon_per_h,
        tolerance_per_h: tol,
        holds: true,
        distance,
        certificate,
        note: STRATEGY_SET_NOTE.into(),
    })
}
