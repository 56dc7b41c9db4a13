#![allow(dead_code)]

use lobmm::model::{ArrivalSchedule, DemandMoments, MarketParams, SideMoments, TimeGrid};
use proptest::prelude::*;

/// Moments of a two-atom joint distribution of (c, p); always internally
/// consistent (Cauchy-Schwarz, Jensen).
pub fn two_atom_moments(c1: f64, p1: f64, c2: f64, p2: f64, w: f64) -> SideMoments {
    let e = |f: &dyn Fn(f64, f64) -> f64| w * f(c1, p1) + (1.0 - w) * f(c2, p2);
    SideMoments {
        mu_c: e(&|c, _| c),
        mu_c2: e(&|c, _| c * c),
        mu_cp: e(&|c, p| c * p),
        mu_c2p: e(&|c, p| c * c * p),
        mu_c2p2: e(&|c, p| c * c * p * p),
        mu_p: Some(e(&|_, p| p)),
        mu_p2: Some(e(&|_, p| p * p)),
    }
}

pub fn side_moments() -> impl Strategy<Value = SideMoments> {
    (
        1.0..400.0f64,
        0.5..20.0f64,
        1.0..400.0f64,
        0.5..20.0f64,
        0.05..0.95f64,
    )
        .prop_map(|(c1, p1, c2, p2, w)| two_atom_moments(c1, p1, c2, p2, w))
}

/// Joint probability anywhere in the Frechet interval, with extra mass on
/// both boundaries.
pub fn arrival_triple() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.01..=1.0f64, 0.01..=1.0f64, 0u8..4, 0.0..=1.0f64).prop_map(|(pp, pm, mode, u)| {
        let lo = (pp + pm - 1.0).max(0.0);
        let hi = pp.min(pm);
        let pj = match mode {
            0 => lo,
            1 => hi,
            _ => lo + u * (hi - lo),
        };
        (pp, pm, pj.clamp(lo, hi))
    })
}

/// Random valid parameters with step-varying arrivals.
pub fn market_params(max_steps: usize) -> impl Strategy<Value = MarketParams> {
    (
        prop::collection::vec(arrival_triple(), 1..=max_steps),
        side_moments(),
        side_moments(),
        prop_oneof![Just(0.0), 1e-5..0.05f64],
    )
        .prop_map(|(arr, plus, minus, lambda)| {
            let n = arr.len();
            MarketParams {
                grid: TimeGrid::new(n, 1.0),
                arrivals: ArrivalSchedule {
                    pi_plus: arr.iter().map(|a| a.0).collect(),
                    pi_minus: arr.iter().map(|a| a.1).collect(),
                    pi_joint: arr.iter().map(|a| a.2).collect(),
                },
                moments: DemandMoments { plus, minus },
                lambda,
                tick_size: 0.01,
            }
        })
}

/// Symmetric market with independent c and p and constant arrivals.
#[allow(clippy::too_many_arguments)]
pub fn symmetric_independent(
    mu_c: f64,
    var_c: f64,
    mu_p: f64,
    var_p: f64,
    pi: f64,
    pj: f64,
    lambda: f64,
    n: usize,
) -> MarketParams {
    let side = SideMoments::independent(mu_c, mu_c * mu_c + var_c, mu_p, mu_p * mu_p + var_p);
    MarketParams {
        grid: TimeGrid::new(n, 1.0),
        arrivals: ArrivalSchedule::constant(n, pi, pi, pj),
        moments: DemandMoments::symmetric(side),
        lambda,
        tick_size: 0.01,
    }
}

/// Symmetric slope moments and equal arrival probabilities per step, with
/// possibly different reservation means on the two sides.
pub fn positive_spread_params() -> impl Strategy<Value = MarketParams> {
    (
        1.0..300.0f64,
        0.0..3.0f64,
        0.5..15.0f64,
        0.5..15.0f64,
        prop::collection::vec((0.01..=1.0f64, 0.0..=1.0f64), 1..40),
        1e-5..0.05f64,
    )
        .prop_map(|(mu_c, cv2, pp, pm, arr, lambda)| {
            let mu_c2 = mu_c * mu_c * (1.0 + cv2);
            let side = |mu_p: f64| SideMoments::independent(mu_c, mu_c2, mu_p, mu_p * mu_p * 1.2);
            let n = arr.len();
            let pi: Vec<f64> = arr.iter().map(|a| a.0).collect();
            let pj: Vec<f64> = arr
                .iter()
                .map(|&(p, u)| {
                    let lo = (2.0 * p - 1.0).max(0.0);
                    lo + u * (p - lo)
                })
                .collect();
            MarketParams {
                grid: TimeGrid::new(n, 1.0),
                arrivals: ArrivalSchedule {
                    pi_plus: pi.clone(),
                    pi_minus: pi,
                    pi_joint: pj,
                },
                moments: DemandMoments {
                    plus: side(pp),
                    minus: side(pm),
                },
                lambda,
                tick_size: 0.01,
            }
        })
}
