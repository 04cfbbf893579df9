//! Game-theoretic certification of market equilibria.
//!
//! Players are the generating units (profit), the consuming units (surplus)
//! and the ISO (congestion rent). Nodal prices belong to the profile being
//! evaluated: every player takes them as given, exactly as in its own
//! optimisation problem whose KKT conditions make up the market LCP. Each
//! payoff is linear in the player's own variables, so best responses and
//! game distances are exact linear optimisations, not samples.

mod distance;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distance::{check_two_alpha, game_distance, GameDistance, PlayerDeviation, TwoAlphaReport};

use crate::lp::{solve_lp, LinearProgram, LpError, LpOptions, Relation};
use crate::market::{assemble_lcp, EquilibriumSolution, MarketCase, MarketError, ValidationOptions};

/// Default certification tolerance, $/h.
pub const DEFAULT_NASH_TOLERANCE: f64 = 1e-6;
/// A gap below `-GAP_FLOOR` means the best-response solver lost to the
/// realised strategy, which can only be a bug.
pub const GAP_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerKind {
    GenCo,
    ConCo,
    Iso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerView {
    pub id: String,
    pub kind: PlayerKind,
    /// Index into `generators` or `demands`; `None` for the ISO.
    pub unit: Option<usize>,
    /// The player's entries of the LCP vector.
    pub variables: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("best response of {player} is unbounded")]
    UnboundedBestResponse { player: String },
    #[error("games are not comparable: {0}")]
    IncompatibleGames(String),
    #[error("solution is not an equilibrium of its own game: epsilon = {epsilon} $/h > {tolerance}")]
    NotAnEquilibrium { epsilon: f64, tolerance: f64 },
    #[error("{player}: epsilon {epsilon} $/h exceeds 2 alpha = {two_alpha} $/h")]
    AssertionFailed { player: String, epsilon: f64, two_alpha: f64 },
    #[error("{player}: best response is worse than the realised strategy by {gap} $/h")]
    NegativeGap { player: String, gap: f64 },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Lp(LpError),
}

/// Players in id order: generators, then demands, then the ISO.
pub fn players(case: &MarketCase) -> Result<Vec<PlayerView>, GameError> {
    let am = assemble_lcp(case, &ValidationOptions::default())?;
    let l = &am.layout;
    let mut out = Vec::with_capacity(case.generators.len() + case.demands.len() + 1);
    for (i, g) in case.generators.iter().enumerate() {
        out.push(PlayerView { id: g.id.clone(), kind: PlayerKind::GenCo, unit: Some(i), variables: l.gen_block[i].clone() });
    }
    for (j, d) in case.demands.iter().enumerate() {
        out.push(PlayerView { id: d.id.clone(), kind: PlayerKind::ConCo, unit: Some(j), variables: l.demand_block[j].clone() });
    }
    let angles = l.angle_pos.iter().chain(&l.angle_neg).flatten().copied().collect();
    out.push(PlayerView { id: "iso".into(), kind: PlayerKind::Iso, unit: None, variables: angles });
    Ok(out)
}

/// A block-structured strategy polytope
/// `{0 <= p_b <= size_b, lower <= sum p <= upper}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpace {
    pub sizes_mw: Vec<f64>,
    pub lower_mw: f64,
    pub upper_mw: f64,
}

impl BlockSpace {
    pub fn generator(case: &MarketCase, i: usize) -> Self {
        let g = &case.generators[i];
        BlockSpace { sizes_mw: g.blocks.iter().map(|b| b.size_mw).collect(), lower_mw: 0.0, upper_mw: g.unit_capacity_mw }
    }

    pub fn demand(case: &MarketCase, j: usize) -> Self {
        let d = &case.demands[j];
        let sizes: Vec<f64> = d.blocks.iter().map(|b| b.size_mw).collect();
        let upper = sizes.iter().sum();
        BlockSpace { sizes_mw: sizes, lower_mw: d.min_demand_mw, upper_mw: upper }
    }

    /// The set of strategies feasible in both spaces.
    pub fn intersect(&self, other: &BlockSpace) -> Result<BlockSpace, GameError> {
        if self.sizes_mw.len() != other.sizes_mw.len() {
            return Err(GameError::IncompatibleGames("block counts differ".into()));
        }
        let sizes: Vec<f64> = self.sizes_mw.iter().zip(&other.sizes_mw).map(|(a, b)| a.min(*b)).collect();
        let lower = self.lower_mw.max(other.lower_mw);
        let upper = self.upper_mw.min(other.upper_mw).min(sizes.iter().sum());
        if lower > upper + 1e-9 {
            return Err(GameError::IncompatibleGames(format!("strategy sets do not intersect ({lower} > {upper} MW)")));
        }
        Ok(BlockSpace { sizes_mw: sizes, lower_mw: lower, upper_mw: upper.max(lower) })
    }

    /// Membership with an absolute slack of `tol` MW.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        let total: f64 = p.iter().sum();
        p.len() == self.sizes_mw.len()
            && p.iter().zip(&self.sizes_mw).all(|(x, s)| *x >= -tol && *x <= s + tol)
            && total >= self.lower_mw - tol
            && total <= self.upper_mw + tol
    }

    /// Exact maximiser of `sum_b w_b p_b` over the space: blocks are taken
    /// in decreasing weight (ties by index), positive ones up to `upper`,
    /// the rest only as far as needed to reach `lower`.
    pub fn maximize(&self, weights: &[f64]) -> (f64, Vec<f64>) {
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
        let mut p = vec![0.0; weights.len()];
        let mut total = 0.0;
        for &b in &order {
            let target = if weights[b] > 0.0 { self.upper_mw } else { self.lower_mw };
            let take = self.sizes_mw[b].min(target - total).max(0.0);
            p[b] = take;
            total += take;
        }
        (weights.iter().zip(&p).map(|(w, x)| w * x).sum(), p)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-MW payoff of each block to its owner at the given nodal prices.
pub(crate) fn unit_margins(case: &MarketCase, lmp: &[f64], kind: PlayerKind, unit: usize) -> Vec<f64> {
    let net = &case.network;
    match kind {
        PlayerKind::GenCo => {
            let g = &case.generators[unit];
            let rho = lmp[net.bus_index(g.bus).expect("validated bus")];
            (0..g.blocks.len()).map(|b| rho - case.gen_bid(unit, b)).collect()
        }
        PlayerKind::ConCo => {
            let d = &case.demands[unit];
            let rho = lmp[net.bus_index(d.bus).expect("validated bus")];
            (0..d.blocks.len()).map(|k| case.demand_bid(unit, k) - rho).collect()
        }
        PlayerKind::Iso => unreachable!("the ISO has no blocks"),
    }
}

/// Congestion rent earned per MW of flow on each line: price at the
/// receiving end minus price at the sending end.
pub(crate) fn line_rent(case: &MarketCase, lmp: &[f64]) -> Vec<f64> {
    let net = &case.network;
    net.lines
        .iter()
        .map(|l| lmp[net.bus_index(l.to).expect("validated bus")] - lmp[net.bus_index(l.from).expect("validated bus")])
        .collect()
}

/// The player's payoff at `sol`, $/h.
pub fn payoff(case: &MarketCase, sol: &EquilibriumSolution, player: &PlayerView) -> f64 {
    match (player.kind, player.unit) {
        (PlayerKind::GenCo, Some(i)) => dot(&unit_margins(case, &sol.lmp, PlayerKind::GenCo, i), &sol.generation_mw[i]),
        (PlayerKind::ConCo, Some(j)) => dot(&unit_margins(case, &sol.lmp, PlayerKind::ConCo, j), &sol.consumption_mw[j]),
        _ => dot(&line_rent(case, &sol.lmp), &sol.line_flows_mw),
    }
}

/// Largest congestion rent the ISO can collect at fixed prices by choosing
/// angles that respect every line limit.
fn iso_best_rent(case: &MarketCase, lmp: &[f64], lp_opts: &LpOptions) -> Result<f64, GameError> {
    let net = &case.network;
    let r = net.reference_index().expect("validated reference bus");
    let nb = net.buses.len();
    // column of each non-reference angle, split into +/- parts
    let mut col = vec![None; nb];
    let mut n = 0;
    for (b, c) in col.iter_mut().enumerate() {
        if b != r {
            *c = Some(n);
            n += 1;
        }
    }
    let rent = line_rent(case, lmp);
    let mut cost = vec![0.0; 2 * n];
    let mut rows = Vec::with_capacity(net.lines.len());
    for (l, line) in net.lines.iter().enumerate() {
        let k = net.mva_base * line.susceptance_pu();
        let (f, t) = (net.bus_index(line.from).expect("validated bus"), net.bus_index(line.to).expect("validated bus"));
        let mut e = Vec::with_capacity(4);
        for (bus, s) in [(f, k), (t, -k)] {
            if let Some(c) = col[bus] {
                e.push((c, s));
                e.push((n + c, -s));
            }
        }
        // minimise the negative rent
        for &(c, s) in &e {
            cost[c] -= rent[l] * s;
        }
        rows.push((e, line.capacity_mw));
    }
    let mut lp = LinearProgram::new(cost);
    for (e, cap) in rows {
        lp.add_sparse(&e, Relation::Le, cap);
        lp.add_sparse(&e, Relation::Ge, -cap);
    }
    match solve_lp(&lp, lp_opts) {
        Ok(s) => Ok(-s.objective),
        Err(LpError::Unbounded { .. }) => Err(GameError::UnboundedBestResponse { player: "iso".into() }),
        Err(e) => Err(GameError::Lp(e)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerGap {
    pub player: String,
    pub kind: PlayerKind,
    pub realized_per_h: f64,
    pub best_response_per_h: f64,
    pub gap_per_h: f64,
    /// Whether the realised strategy lies in the searched strategy set. A
    /// strategy outside it (possible when sets are intersected) gets a
    /// gap floored at zero.
    pub in_strategy_set: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    pub gaps: Vec<PlayerGap>,
    pub epsilon_per_h: f64,
    pub tolerance_per_h: f64,
    pub is_nash_within: bool,
    pub method: String,
}

impl EquilibriumCertificate {
    /// Player with the largest gap, if any.
    pub fn worst(&self) -> Option<&PlayerGap> {
        self.gaps.iter().max_by(|a, b| a.gap_per_h.total_cmp(&b.gap_per_h))
    }
}

/// Where a player's best response is searched.
#[derive(Debug, Clone, Copy)]
pub enum StrategyScope<'a> {
    /// The strategy sets of the game whose payoffs are used.
    Own,
    /// The intersection with another game's strategy sets.
    IntersectWith(&'a MarketCase),
}

pub(crate) fn unit_space(case: &MarketCase, kind: PlayerKind, unit: usize) -> BlockSpace {
    match kind {
        PlayerKind::GenCo => BlockSpace::generator(case, unit),
        _ => BlockSpace::demand(case, unit),
    }
}

fn scoped_space(case: &MarketCase, scope: StrategyScope, kind: PlayerKind, unit: usize) -> Result<BlockSpace, GameError> {
    let own = unit_space(case, kind, unit);
    match scope {
        StrategyScope::Own => Ok(own),
        StrategyScope::IntersectWith(other) => own.intersect(&unit_space(other, kind, unit)),
    }
}

/// Optimal payoff against `sol` minus realised payoff, $/h. All other
/// players' variables and all prices are held at `sol`.
pub fn best_response_gap(case: &MarketCase, sol: &EquilibriumSolution, player: &PlayerView) -> Result<PlayerGap, GameError> {
    best_response_gap_in(case, StrategyScope::Own, sol, player, &LpOptions::default())
}

pub fn best_response_gap_in(
    case: &MarketCase,
    scope: StrategyScope,
    sol: &EquilibriumSolution,
    player: &PlayerView,
    lp_opts: &LpOptions,
) -> Result<PlayerGap, GameError> {
    let realized = payoff(case, sol, player);
    let (best, inside) = match (player.kind, player.unit) {
        (PlayerKind::Iso, _) => (iso_best_rent(case, &sol.lmp, lp_opts)?, true),
        (kind, Some(u)) => {
            let space = scoped_space(case, scope, kind, u)?;
            let p = match kind {
                PlayerKind::GenCo => &sol.generation_mw[u],
                _ => &sol.consumption_mw[u],
            };
            (space.maximize(&unit_margins(case, &sol.lmp, kind, u)).0, space.contains(p, 1e-9))
        }
        (_, None) => return Err(GameError::IncompatibleGames(format!("player {} has no unit", player.id))),
    };
    let gap = best - realized;
    let scale = 1.0 + best.abs().max(realized.abs());
    if inside && gap < -GAP_FLOOR * scale {
        return Err(GameError::NegativeGap { player: player.id.clone(), gap });
    }
    Ok(PlayerGap {
        player: player.id.clone(),
        kind: player.kind,
        realized_per_h: realized,
        best_response_per_h: best,
        gap_per_h: gap.max(0.0),
        in_strategy_set: inside,
    })
}

pub const CERTIFICATE_METHOD: &str =
    "unit players: exact greedy optimum over the block polytope; iso: simplex over bus angles within line limits";

/// `epsilon` = the largest best-response gap over all players.
pub fn certify_epsilon_equilibrium(
    case: &MarketCase,
    sol: &EquilibriumSolution,
    tol: f64,
) -> Result<EquilibriumCertificate, GameError> {
    certify_in(case, StrategyScope::Own, sol, tol)
}

pub fn certify_in(
    case: &MarketCase,
    scope: StrategyScope,
    sol: &EquilibriumSolution,
    tol: f64,
) -> Result<EquilibriumCertificate, GameError> {
    let lp_opts = LpOptions::default();
    let mut gaps = Vec::new();
    for p in players(case)? {
        gaps.push(best_response_gap_in(case, scope, sol, &p, &lp_opts)?);
    }
    let epsilon = gaps.iter().map(|g| g.gap_per_h).fold(0.0, f64::max);
    let mut method = CERTIFICATE_METHOD.to_string();
    if let StrategyScope::IntersectWith(other) = scope {
        method.push_str(&format!("; strategy sets intersected with case {:?}", other.name));
    }
    Ok(EquilibriumCertificate { gaps, epsilon_per_h: epsilon, tolerance_per_h: tol, is_nash_within: epsilon <= tol, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::fixtures::{one_bus, two_bus};
    use crate::market::{solve_market, MarketOptions};

    #[test]
    fn players_partition_primal_variables() {
        let c = two_bus(5.0);
        let am = assemble_lcp(&c, &ValidationOptions::default()).unwrap();
        let mut vars: Vec<usize> = players(&c).unwrap().into_iter().flat_map(|p| p.variables).collect();
        vars.sort();
        assert_eq!(vars, (0..am.layout.primal_len).collect::<Vec<_>>());
    }

    #[test]
    fn greedy_respects_bounds() {
        let s = BlockSpace { sizes_mw: vec![5.0, 5.0, 5.0], lower_mw: 7.0, upper_mw: 12.0 };
        let (v, p) = s.maximize(&[-1.0, 2.0, -3.0]);
        assert_eq!(p, vec![2.0, 5.0, 0.0]);
        assert_eq!(v, 8.0);
        let (v, p) = s.maximize(&[1.0, 2.0, 3.0]);
        assert_eq!(p, vec![2.0, 5.0, 5.0]);
        assert_eq!(v, 27.0);
    }

    #[test]
    fn hand_cases_are_exact_equilibria() {
        for c in [one_bus(), two_bus(5.0), two_bus(100.0)] {
            let sol = solve_market(&c, &MarketOptions::default()).unwrap();
            let cert = certify_epsilon_equilibrium(&c, &sol, DEFAULT_NASH_TOLERANCE).unwrap();
            assert!(cert.is_nash_within, "{}: {:?}", c.name, cert.worst());
        }
    }

    #[test]
    fn iso_collects_rent_when_congested() {
        let c = two_bus(5.0);
        let sol = solve_market(&c, &MarketOptions::default()).unwrap();
        let iso = players(&c).unwrap().pop().unwrap();
        let g = best_response_gap(&c, &sol, &iso).unwrap();
        assert!((g.realized_per_h - 150.0).abs() < 1e-9);
        assert!(g.gap_per_h < 1e-9);
    }

    #[test]
    fn mispriced_solution_has_a_positive_gap() {
        let c = two_bus(100.0);
        let mut sol = solve_market(&c, &MarketOptions::default()).unwrap();
        sol.lmp[0] += 1.0;
        let cert = certify_epsilon_equilibrium(&c, &sol, DEFAULT_NASH_TOLERANCE).unwrap();
        assert!(cert.gaps.iter().any(|g| g.kind == PlayerKind::GenCo && g.gap_per_h > 0.0));
        assert!(!cert.is_nash_within);
    }
}
