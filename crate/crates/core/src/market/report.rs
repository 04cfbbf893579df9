//! Post-solve accounting: welfare, settlement and wind penetration.

use serde::{Deserialize, Serialize};

use super::{EquilibriumSolution, MarketCase};

/// `sum lambda_D P_D - sum lambda_G P_G` over dispatchable blocks, $/h.
/// Fixed loads are excluded; their utility is an artificial clearing price.
pub fn social_welfare(sol: &EquilibriumSolution, case: &MarketCase) -> f64 {
    let mut w = 0.0;
    for (j, d) in case.demands.iter().enumerate() {
        if !d.dispatchable {
            continue;
        }
        for (k, p) in sol.consumption_mw[j].iter().enumerate() {
            w += case.demand_bid(j, k) * p;
        }
    }
    for (i, g) in sol.generation_mw.iter().enumerate() {
        for (b, p) in g.iter().enumerate() {
            w -= case.gen_bid(i, b) * p;
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSettlement {
    pub id: String,
    pub bus: usize,
    pub power_mw: f64,
    pub price_per_mwh: f64,
    pub revenue_per_h: f64,
    pub cost_per_h: f64,
    pub profit_per_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSettlement {
    pub id: String,
    pub bus: usize,
    pub consumption_mw: f64,
    pub price_per_mwh: f64,
    pub payment_per_h: f64,
    /// Value of the cleared blocks at marginal utility.
    pub utility_per_h: f64,
    pub surplus_per_h: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub generators: Vec<GeneratorSettlement>,
    /// Dispatchable demands only.
    pub demands: Vec<DemandSettlement>,
    pub fixed_load_mw: f64,
    pub fixed_load_payment_per_h: f64,
}

/// Revenues, costs and payments at the equilibrium prices. A unit's cost
/// includes any reserve adder carried by its blocks.
pub fn settlement(sol: &EquilibriumSolution, case: &MarketCase) -> SettlementReport {
    let price = |bus: usize| {
        let n = case.network.bus_index(bus).expect("validated bus reference");
        sol.lmp[n]
    };
    let generators = case
        .generators
        .iter()
        .zip(&sol.generation_mw)
        .map(|(g, out)| {
            let rho = price(g.bus);
            let power: f64 = out.iter().sum();
            let revenue = rho * power;
            let cost: f64 = out
                .iter()
                .zip(&g.blocks)
                .map(|(p, b)| (b.marginal_cost_per_mwh + b.reserve_adder_per_mwh) * p)
                .sum();
            GeneratorSettlement {
                id: g.id.clone(),
                bus: g.bus,
                power_mw: power,
                price_per_mwh: rho,
                revenue_per_h: revenue,
                cost_per_h: cost,
                profit_per_h: revenue - cost,
            }
        })
        .collect();
    let mut report = SettlementReport { generators, ..Default::default() };
    for (d, cons) in case.demands.iter().zip(&sol.consumption_mw) {
        let rho = price(d.bus);
        let mw: f64 = cons.iter().sum();
        if !d.dispatchable {
            report.fixed_load_mw += mw;
            report.fixed_load_payment_per_h += rho * mw;
            continue;
        }
        let utility: f64 = cons.iter().zip(&d.blocks).map(|(p, b)| b.marginal_utility_per_mwh * p).sum();
        let payment = rho * mw;
        report.demands.push(DemandSettlement {
            id: d.id.clone(),
            bus: d.bus,
            consumption_mw: mw,
            price_per_mwh: rho,
            payment_per_h: payment,
            utility_per_h: utility,
            surplus_per_h: utility - payment,
        });
    }
    report
}

#[derive(Debug, Clone, Copy)]
pub enum PenetrationMode<'a> {
    /// Wind block capacity over dispatchable demand capacity.
    Capacity,
    /// Scheduled wind output over dispatchable demand capacity.
    Scheduled(&'a EquilibriumSolution),
}

/// Wind penetration `x^w`: wind block power over the total block capacity
/// of dispatchable demand.
pub fn wind_penetration(case: &MarketCase, mode: PenetrationMode<'_>) -> f64 {
    let demand: f64 = case.demands.iter().filter(|d| d.dispatchable).map(|d| d.block_total_mw()).sum();
    let wind: f64 = case
        .generators
        .iter()
        .enumerate()
        .filter(|(_, g)| g.is_wind())
        .map(|(i, g)| match mode {
            PenetrationMode::Capacity => g.block_total_mw(),
            PenetrationMode::Scheduled(sol) => sol.generation_mw[i].iter().sum(),
        })
        .sum();
    if demand > 0.0 {
        wind / demand
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::*;
    use super::*;

    #[test]
    fn one_bus_welfare_and_settlement() {
        let c = one_bus();
        let sol = solve_market(&c, &MarketOptions::default()).unwrap();
        assert!((social_welfare(&sol, &c) - 50.0).abs() < 1e-9);
        let s = settlement(&sol, &c);
        assert!((s.generators[0].revenue_per_h - 100.0).abs() < 1e-9);
        assert!((s.generators[0].profit_per_h).abs() < 1e-9);
        assert!((s.demands[0].payment_per_h - 100.0).abs() < 1e-9);
    }

    #[test]
    fn idle_unit_settles_to_zero() {
        let c = two_bus(1e4);
        let sol = solve_market(&c, &MarketOptions::default()).unwrap();
        let s = settlement(&sol, &c);
        let g2 = &s.generators[1];
        assert_eq!((g2.power_mw, g2.revenue_per_h, g2.cost_per_h, g2.profit_per_h), (0.0, 0.0, 0.0, 0.0));
        assert!((s.fixed_load_mw - 10.0).abs() < 1e-9);
    }

    #[test]
    fn penetration_ratios() {
        let mut c = one_bus();
        assert_eq!(wind_penetration(&c, PenetrationMode::Capacity), 0.0);
        c.generators[0].kind =
            GeneratorKind::Wind { mean_power_mw: vec![10.0], reserve_cost_b: 5.0, reserve_cost_c: 1.0 };
        c.demands[0].blocks[0].size_mw = 10.0;
        assert_eq!(wind_penetration(&c, PenetrationMode::Capacity), 1.0);
    }
}
