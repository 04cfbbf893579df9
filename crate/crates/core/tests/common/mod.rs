//! Shared generators for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use market_lcp::lcp::LcpInstance;
use market_lcp::market::{
    BidPolicy, Bus, DemandBlock, DemandUnit, GenBlock, GeneratorKind, GeneratorUnit, Line, MarketCase, Network,
    DEFAULT_MVA_BASE,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Strictly row-diagonally-dominant matrix with a positive diagonal, which
/// makes every principal submatrix nonsingular with positive determinant.
pub fn dominant_matrix<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                let v = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                off += f64::abs(v);
            }
        }
        m[(i, i)] = off + rng.random_range(0.5..2.0);
    }
    m
}

pub fn random_p_lcp<R: Rng>(rng: &mut R, n: usize) -> LcpInstance {
    let m = dominant_matrix(rng, n);
    let q = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
    LcpInstance::unlabeled(m, q).expect("square instance")
}

/// A connected 2-5 bus market with increasing generator bids, decreasing
/// demand bids and enough generation capacity for every fixed and minimum
/// load. Line limits may still make it infeasible; callers redraw then.
pub fn random_market<R: Rng>(rng: &mut R, tag: usize) -> MarketCase {
    let nb = rng.random_range(2..=5usize);
    let buses = (1..=nb).map(|n| Bus { number: n, reference: n == 1 }).collect();
    let mut lines = Vec::new();
    let line = |rng: &mut R, from: usize, to: usize| Line {
        from,
        to,
        reactance_pu: rng.random_range(0.05..0.5),
        capacity_mw: rng.random_range(5.0..60.0),
    };
    for b in 2..=nb {
        let a = rng.random_range(1..b);
        lines.push(line(rng, a, b));
    }
    for _ in 0..rng.random_range(0..=2usize) {
        let a = rng.random_range(1..=nb);
        let b = rng.random_range(1..=nb);
        if a != b && !lines.iter().any(|l| (l.from, l.to) == (a, b) || (l.from, l.to) == (b, a)) {
            lines.push(line(rng, a, b));
        }
    }

    let mut fixed_total = 0.0;
    let mut demands = Vec::new();
    for j in 0..rng.random_range(1..=3usize) {
        let mut u = rng.random_range(40.0..90.0);
        let mut blocks = Vec::new();
        for _ in 0..rng.random_range(1..=3usize) {
            blocks.push(DemandBlock::new(rng.random_range(2.0..15.0), u));
            u = (u - rng.random_range(1.0..15.0)).max(1.0);
        }
        let min = if rng.random_bool(0.5) { rng.random_range(0.0..1.0) * blocks[0].size_mw } else { 0.0 };
        fixed_total += min;
        demands.push(DemandUnit {
            id: format!("d{}", j + 1),
            bus: rng.random_range(1..=nb),
            blocks,
            min_demand_mw: min,
            dispatchable: true,
        });
    }
    for k in 0..rng.random_range(0..=2usize) {
        let mw = rng.random_range(1.0..10.0);
        fixed_total += mw;
        demands.push(DemandUnit::fixed(format!("f{}", k + 1), rng.random_range(1..=nb), mw));
    }

    let mut generators = Vec::new();
    let mut cap_total = 0.0;
    let count = rng.random_range(1..=4usize);
    for i in 0..count {
        let mut c = rng.random_range(10.0..40.0);
        let mut blocks = Vec::new();
        for _ in 0..rng.random_range(1..=3usize) {
            blocks.push(GenBlock::new(rng.random_range(5.0..30.0), c));
            c += rng.random_range(1.0..20.0);
        }
        let sum: f64 = blocks.iter().map(|b| b.size_mw).sum();
        let cap = if rng.random_bool(0.3) { sum * rng.random_range(0.6..1.0) } else { sum };
        cap_total += cap;
        generators.push(GeneratorUnit {
            id: format!("g{}", i + 1),
            bus: rng.random_range(1..=nb),
            blocks,
            unit_capacity_mw: cap,
            kind: GeneratorKind::Conventional,
        });
    }
    if cap_total < 1.2 * fixed_total {
        let size = 1.2 * fixed_total - cap_total + 5.0;
        generators.push(GeneratorUnit {
            id: format!("g{}", count + 1),
            bus: rng.random_range(1..=nb),
            blocks: vec![GenBlock::new(size, rng.random_range(60.0..95.0))],
            unit_capacity_mw: size,
            kind: GeneratorKind::Conventional,
        });
    }
    MarketCase {
        name: format!("random-{tag}"),
        network: Network { mva_base: DEFAULT_MVA_BASE, buses, lines },
        generators,
        demands,
        bid_policy: BidPolicy::BidMarginalCost,
    }
}
