//! Monte-Carlo engine for the discrete-time quoting model.
//!
//! Each path owns a ChaCha8 stream selected by its index, so a path's draws
//! do not depend on how many paths run or on which worker runs them. Every
//! step consumes the same fixed sequence of draws whatever the policy or
//! demand family, which gives common random numbers across policies.

mod brute_force;
mod demand;
mod synthetic;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use brute_force::{brute_force_value_small, BruteForceResult, ControlGrid, DiscreteMarket};
pub use demand::{check_moments, Atom, LogNormal, SideDemand, SideDraw, SAMPLE_FLOOR};
pub use synthetic::{
    u_shape, IntervalTruth, RegimeWalk, SyntheticDay, SyntheticOutput, REFRESH_LEAD_NS,
    SESSION_OPEN_NS, U_SHAPE,
};

use crate::error::SimError;
use crate::model::{ArrivalSchedule, MarketParams};
use crate::solver::{forecast_sensitivity, optimal_spreads, CoefficientTable, MarketState};

/// Deterministic part of the price increment over each interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Drift {
    Zero,
    Constant(f64),
    Scripted(Vec<f64>),
}

impl Drift {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::Constant(d) => *d,
            Drift::Scripted(v) => v.get(k).copied().unwrap_or(0.0),
        }
    }

    pub fn path(&self, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.at(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceModel {
    pub s0: f64,
    pub drift: Drift,
    /// Standard deviation of the Gaussian innovation per step.
    pub innovation_std: f64,
}

impl PriceModel {
    pub fn martingale(s0: f64, innovation_std: f64) -> Self {
        Self {
            s0,
            drift: Drift::Zero,
            innovation_std,
        }
    }
}

/// A simulated market: model parameters plus the demand laws and price
/// process that generate them.
#[derive(Debug, Clone)]
pub struct SimMarket {
    pub params: MarketParams,
    pub plus: SideDemand,
    pub minus: SideDemand,
    pub price: PriceModel,
    /// Clip fills at zero when the quote lies beyond the reservation price.
    pub truncate_fills: bool,
}

impl SimMarket {
    /// Builds a market whose demand laws reproduce `params.moments` to
    /// relative tolerance `rel_tol`.
    pub fn new(
        params: MarketParams,
        plus: SideDemand,
        minus: SideDemand,
        price: PriceModel,
        rel_tol: f64,
    ) -> Result<Self, SimError> {
        plus.validate()?;
        minus.validate()?;
        check_moments("plus", &plus.moments(), &params.moments.plus, rel_tol)?;
        check_moments("minus", &minus.moments(), &params.moments.minus, rel_tol)?;
        Ok(Self {
            params,
            plus,
            minus,
            price,
            truncate_fills: false,
        })
    }

    /// Builds a market without checking moments against `params`.
    pub fn unchecked(
        params: MarketParams,
        plus: SideDemand,
        minus: SideDemand,
        price: PriceModel,
    ) -> Self {
        Self {
            params,
            plus,
            minus,
            price,
            truncate_fills: false,
        }
    }

    /// Point-mass demand at each side's mean `(c, p)`; exact whenever the
    /// parameters come from `symmetric_params`.
    pub fn point_mass(params: MarketParams, price: PriceModel) -> Result<Self, SimError> {
        let side =
            |m: &crate::model::SideMoments| SideDemand::point_mass(m.mu_c, m.reservation_mean());
        let plus = side(&params.moments.plus);
        let minus = side(&params.moments.minus);
        Self::new(params, plus, minus, price, 1e-12)
    }

    pub fn with_truncation(mut self, on: bool) -> Self {
        self.truncate_fills = on;
        self
    }

    pub fn n_steps(&self) -> usize {
        self.params.grid.n_steps
    }
}

/// Quoting rule evaluated at every action time.
pub trait Policy: Sync {
    /// `(L+, L-)` at step `k` given price `s` and inventory `i`.
    fn spreads(&self, k: usize, s: f64, i: f64) -> (f64, f64);
}

/// Optimal policy from a coefficient table, optionally with a known
/// deterministic drift path.
pub struct OptimalPolicy<'a> {
    table: &'a CoefficientTable,
    /// Effective drift `Delta_k + sum_{j>k} prod xi Delta_j` per step.
    effective_drift: Option<Vec<f64>>,
}

impl<'a> OptimalPolicy<'a> {
    pub fn martingale(table: &'a CoefficientTable) -> Self {
        Self {
            table,
            effective_drift: None,
        }
    }

    /// Uses the full forecast path `drift[k..]` at each step.
    pub fn with_drift(table: &'a CoefficientTable, drift: &[f64]) -> Self {
        let n = table.n_steps();
        let mut eff = vec![0.0; n];
        let mut next = 0.0;
        for k in (0..n).rev() {
            let d = drift.get(k).copied().unwrap_or(0.0);
            let tail = if k + 1 < n {
                table.xi[k + 1] * next
            } else {
                0.0
            };
            eff[k] = d + tail;
            next = eff[k];
        }
        Self {
            table,
            effective_drift: Some(eff),
        }
    }
}

impl Policy for OptimalPolicy<'_> {
    fn spreads(&self, k: usize, _s: f64, i: f64) -> (f64, f64) {
        let (lp, lm) = optimal_spreads(self.table, k, i);
        match &self.effective_drift {
            None => (lp, lm),
            Some(eff) => {
                let (sp, sm) = forecast_sensitivity(self.table, k);
                (lp + sp * eff[k], lm - sm * eff[k])
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy {
    pub l_plus: f64,
    pub l_minus: f64,
}

impl Policy for ConstantPolicy {
    fn spreads(&self, _k: usize, _s: f64, _i: f64) -> (f64, f64) {
        (self.l_plus, self.l_minus)
    }
}

/// Adds fixed offsets to another policy's spreads.
pub struct PerturbedPolicy<P> {
    pub inner: P,
    pub eps_plus: f64,
    pub eps_minus: f64,
}

impl<P: Policy> PerturbedPolicy<P> {
    pub fn uniform(inner: P, eps: f64) -> Self {
        Self {
            inner,
            eps_plus: eps,
            eps_minus: eps,
        }
    }
}

impl<P: Policy> Policy for PerturbedPolicy<P> {
    fn spreads(&self, k: usize, s: f64, i: f64) -> (f64, f64) {
        let (a, b) = self.inner.spreads(k, s, i);
        (a + self.eps_plus, b + self.eps_minus)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn spreads(&self, k: usize, s: f64, i: f64) -> (f64, f64) {
        (**self).spreads(k, s, i)
    }
}

/// Everything drawn for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDraws {
    pub ind_plus: bool,
    pub ind_minus: bool,
    pub c_plus: f64,
    pub p_plus: f64,
    pub c_minus: f64,
    pub p_minus: f64,
    pub increment: f64,
}

/// Joint arrival indicators from a single uniform.
pub fn arrivals_from_uniform(schedule: &ArrivalSchedule, k: usize, u: f64) -> (bool, bool) {
    let pj = schedule.pi_joint[k];
    let pp = schedule.pi_plus[k];
    let pm = schedule.pi_minus[k];
    if u < pj {
        (true, true)
    } else if u < pp {
        (true, false)
    } else if u < pp + pm - pj {
        (false, true)
    } else {
        (false, false)
    }
}

pub fn sample_arrivals<R: Rng + ?Sized>(
    schedule: &ArrivalSchedule,
    k: usize,
    rng: &mut R,
) -> (bool, bool) {
    arrivals_from_uniform(schedule, k, rng.gen::<f64>())
}

pub(crate) fn side_draw<R: Rng>(rng: &mut R) -> SideDraw {
    SideDraw {
        u: rng.gen::<f64>(),
        z1: rng.sample(StandardNormal),
        z2: rng.sample(StandardNormal),
    }
}

/// Draws one step in the fixed order: arrivals, ask side, bid side, price.
pub fn draw_step<R: Rng>(market: &SimMarket, k: usize, rng: &mut R) -> StepDraws {
    let (ind_plus, ind_minus) = sample_arrivals(&market.params.arrivals, k, rng);
    let (c_plus, p_plus) = market.plus.sample(&side_draw(rng));
    let (c_minus, p_minus) = market.minus.sample(&side_draw(rng));
    let z: f64 = rng.sample(StandardNormal);
    StepDraws {
        ind_plus,
        ind_minus,
        c_plus,
        p_plus,
        c_minus,
        p_minus,
        increment: market.price.drift.at(k) + market.price.innovation_std * z,
    }
}

/// Filled quantities `(Q+, Q-)` for the given spreads.
pub fn fills(l_plus: f64, l_minus: f64, d: &StepDraws, truncate: bool) -> (f64, f64) {
    let mut qp = if d.ind_plus {
        d.c_plus * (d.p_plus - l_plus)
    } else {
        0.0
    };
    let mut qm = if d.ind_minus {
        d.c_minus * (d.p_minus - l_minus)
    } else {
        0.0
    };
    if truncate {
        qp = qp.max(0.0);
        qm = qm.max(0.0);
    }
    (qp, qm)
}

/// Applies one step of the cash, inventory and price dynamics.
pub fn step_dynamics(
    state: &MarketState,
    l_plus: f64,
    l_minus: f64,
    d: &StepDraws,
    truncate: bool,
) -> (MarketState, f64, f64) {
    let (qp, qm) = fills(l_plus, l_minus, d, truncate);
    let next = MarketState {
        k: state.k + 1,
        s: state.s + d.increment,
        w: state.w + (state.s + l_plus) * qp - (state.s - l_minus) * qm,
        i: state.i - qp + qm,
    };
    (next, qp, qm)
}

pub fn path_rng(base_seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(path);
    rng
}

/// One row of an episode log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub s: f64,
    pub l_plus: f64,
    pub l_minus: f64,
    pub ind_plus: u8,
    pub ind_minus: u8,
    pub c_plus: f64,
    pub p_plus: f64,
    pub c_minus: f64,
    pub p_minus: f64,
    pub q_plus: f64,
    pub q_minus: f64,
    pub w: f64,
    pub i: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// States at `t_0 .. t_{N+1}`.
    pub trajectory: Vec<MarketState>,
    pub log: Vec<StepLog>,
    pub terminal_objective: f64,
}

impl EpisodeResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.log {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn terminal_objective(state: &MarketState, lambda: f64) -> f64 {
    state.w + state.s * state.i - lambda * state.i * state.i
}

fn simulate_path<
    P: Policy + ?Sized,
    F: FnMut(&MarketState, f64, f64, &StepDraws, f64, f64, &MarketState),
>(
    policy: &P,
    market: &SimMarket,
    base_seed: u64,
    path: u64,
    mut observe: F,
) -> MarketState {
    let mut rng = path_rng(base_seed, path);
    let mut state = MarketState::initial(market.price.s0);
    for k in 0..market.n_steps() {
        let (lp, lm) = policy.spreads(k, state.s, state.i);
        let d = draw_step(market, k, &mut rng);
        let (next, qp, qm) = step_dynamics(&state, lp, lm, &d, market.truncate_fills);
        observe(&state, lp, lm, &d, qp, qm, &next);
        state = next;
    }
    state
}

/// Terminal objective of path `path` without recording anything.
pub fn path_objective<P: Policy + ?Sized>(
    policy: &P,
    market: &SimMarket,
    base_seed: u64,
    path: u64,
) -> f64 {
    let end = simulate_path(policy, market, base_seed, path, |_, _, _, _, _, _, _| {});
    terminal_objective(&end, market.params.lambda)
}

/// Path `path` of the stream family `base_seed`, fully logged.
pub fn run_path<P: Policy + ?Sized>(
    policy: &P,
    market: &SimMarket,
    base_seed: u64,
    path: u64,
) -> EpisodeResult {
    let mut trajectory = vec![MarketState::initial(market.price.s0)];
    let mut log = Vec::with_capacity(market.n_steps());
    let end = simulate_path(
        policy,
        market,
        base_seed,
        path,
        |st, lp, lm, d, qp, qm, next| {
            log.push(StepLog {
                step: st.k,
                s: st.s,
                l_plus: lp,
                l_minus: lm,
                ind_plus: d.ind_plus as u8,
                ind_minus: d.ind_minus as u8,
                c_plus: d.c_plus,
                p_plus: d.p_plus,
                c_minus: d.c_minus,
                p_minus: d.p_minus,
                q_plus: qp,
                q_minus: qm,
                w: next.w,
                i: next.i,
            });
            trajectory.push(*next);
        },
    );
    EpisodeResult {
        trajectory,
        log,
        terminal_objective: terminal_objective(&end, market.params.lambda),
    }
}

pub fn run_episode<P: Policy + ?Sized>(policy: &P, market: &SimMarket, seed: u64) -> EpisodeResult {
    run_path(policy, market, seed, 0)
}

/// Compensated (Neumaier) sum; the result does not depend on how the
/// inputs were produced, only on their order.
pub fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// `None` for a single path.
    pub std_error: Option<f64>,
    pub std_dev: f64,
    pub n_paths: usize,
}

impl McEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = neumaier_sum(values) / n as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let (std_dev, std_error) = if n > 1 {
            let var = neumaier_sum(&sq) / (n - 1) as f64;
            (var.sqrt(), Some((var / n as f64).sqrt()))
        } else {
            (0.0, None)
        };
        Self {
            mean,
            std_error,
            std_dev,
            n_paths: n,
        }
    }

    /// `(mean - reference) / std_error`.
    pub fn z_score(&self, reference: f64) -> Option<f64> {
        self.std_error.map(|se| (self.mean - reference) / se)
    }
}

/// Terminal objectives of paths `0..n_paths`, in path order.
pub fn path_objectives<P: Policy + ?Sized>(
    policy: &P,
    market: &SimMarket,
    n_paths: usize,
    base_seed: u64,
) -> Vec<f64> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|path| path_objective(policy, market, base_seed, path))
        .collect()
}

pub fn monte_carlo_value<P: Policy + ?Sized>(
    policy: &P,
    market: &SimMarket,
    n_paths: usize,
    base_seed: u64,
) -> McEstimate {
    assert!(n_paths >= 1, "n_paths must be at least 1");
    McEstimate::from_values(&path_objectives(policy, market, n_paths, base_seed))
}

/// Mean and standard error of `objective(a) - objective(b)` path by path,
/// both policies seeing the same draws.
pub fn paired_difference<A: Policy + ?Sized, B: Policy + ?Sized>(
    a: &A,
    b: &B,
    market: &SimMarket,
    n_paths: usize,
    base_seed: u64,
) -> McEstimate {
    let diffs: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            path_objective(a, market, base_seed, path) - path_objective(b, market, base_seed, path)
        })
        .collect();
    McEstimate::from_values(&diffs)
}

/// Exact `E[W' + alpha I'^2 + S' I' + h I' + g]` after one step from `state`
/// with spreads `(l_plus, l_minus)`, where the continuation coefficients are
/// given explicitly and `delta` is the expected price increment.
#[allow(clippy::too_many_arguments)]
pub fn expected_next_value(
    params: &MarketParams,
    state: &MarketState,
    l_plus: f64,
    l_minus: f64,
    alpha: f64,
    h: f64,
    g: f64,
    delta: f64,
) -> f64 {
    let k = state.k;
    let (a, b) = (&params.moments.plus, &params.moments.minus);
    let pp = params.arrivals.pi_plus[k];
    let pm = params.arrivals.pi_minus[k];
    let pj = params.arrivals.pi_joint[k];
    let eq_p = pp * (a.mu_cp - a.mu_c * l_plus);
    let eq_m = pm * (b.mu_cp - b.mu_c * l_minus);
    let eq2_p = pp * (a.mu_c2p2 - 2.0 * l_plus * a.mu_c2p + l_plus * l_plus * a.mu_c2);
    let eq2_m = pm * (b.mu_c2p2 - 2.0 * l_minus * b.mu_c2p + l_minus * l_minus * b.mu_c2);
    let eqq = pj * (a.mu_cp - a.mu_c * l_plus) * (b.mu_cp - b.mu_c * l_minus);
    let i = state.i;
    let s = state.s;
    let ew = state.w + (s + l_plus) * eq_p - (s - l_minus) * eq_m;
    let ei = i - eq_p + eq_m;
    let ei2 = i * i - 2.0 * i * eq_p + 2.0 * i * eq_m + eq2_p + eq2_m - 2.0 * eqq;
    ew + alpha * ei2 + (s + delta) * ei + h * ei + g
}

/// [`expected_next_value`] with the continuation taken from the table at
/// step `state.k + 1`.
pub fn expected_one_step(
    params: &MarketParams,
    table: &CoefficientTable,
    state: &MarketState,
    l_plus: f64,
    l_minus: f64,
    delta: f64,
) -> f64 {
    let k1 = state.k + 1;
    expected_next_value(
        params,
        state,
        l_plus,
        l_minus,
        table.alpha[k1],
        table.h[k1],
        table.g[k1],
        delta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::symmetric_params;

    fn draws(ind_plus: bool, ind_minus: bool) -> StepDraws {
        StepDraws {
            ind_plus,
            ind_minus,
            c_plus: 100.0,
            p_plus: 5.0,
            c_minus: 100.0,
            p_minus: 5.0,
            increment: 0.0,
        }
    }

    #[test]
    fn step_dynamics_examples() {
        let s = MarketState {
            k: 0,
            s: 100.0,
            w: 10.0,
            i: 3.0,
        };
        let (n, qp, qm) = step_dynamics(&s, 2.5, 2.5, &draws(false, false), false);
        assert_eq!((n.w, n.i, qp, qm), (10.0, 3.0, 0.0, 0.0));
        let (n, qp, _) = step_dynamics(&s, 2.5, 2.5, &draws(true, false), false);
        assert_eq!(qp, 250.0);
        assert_eq!(n.w, 10.0 + 25625.0);
        assert_eq!(n.i, 3.0 - 250.0);
        let (n, _, qm) = step_dynamics(&s, 2.5, 5.0, &draws(false, true), false);
        assert_eq!(qm, 0.0);
        assert_eq!((n.w, n.i), (10.0, 3.0));
    }

    #[test]
    fn negative_fills_follow_the_formula_unless_truncated() {
        let d = draws(true, true);
        assert_eq!(fills(6.0, 7.0, &d, false), (-100.0, -200.0));
        assert_eq!(fills(6.0, 7.0, &d, true), (0.0, 0.0));
    }

    #[test]
    fn arrival_partition() {
        let sched = ArrivalSchedule::constant(1, 0.2, 0.3, 0.05);
        assert_eq!(arrivals_from_uniform(&sched, 0, 0.04), (true, true));
        assert_eq!(arrivals_from_uniform(&sched, 0, 0.1), (true, false));
        assert_eq!(arrivals_from_uniform(&sched, 0, 0.3), (false, true));
        assert_eq!(arrivals_from_uniform(&sched, 0, 0.45), (false, false));
        let all = ArrivalSchedule::constant(1, 1.0, 1.0, 1.0);
        assert_eq!(arrivals_from_uniform(&all, 0, 0.999999), (true, true));
    }

    #[test]
    fn one_step_hand_example() {
        let p = symmetric_params(1.0, 4.0, 1.0, 1.0, 0.0, 1).unwrap();
        let m = SimMarket::point_mass(p, PriceModel::martingale(50.0, 0.0)).unwrap();
        let ep = run_episode(
            &ConstantPolicy {
                l_plus: 2.0,
                l_minus: 2.0,
            },
            &m,
            9,
        );
        assert_eq!(ep.terminal_objective, 8.0);
        assert_eq!(ep.trajectory.last().unwrap().i, 0.0);
        assert_eq!(ep.log[0].q_plus, 2.0);
    }

    #[test]
    fn zero_demand_gives_zero() {
        let p = symmetric_params(1.0, 4.0, 0.5, 0.1, 0.001, 20).unwrap();
        let m = SimMarket::unchecked(
            p,
            SideDemand::point_mass(0.0, 4.0),
            SideDemand::point_mass(0.0, 4.0),
            PriceModel::martingale(100.0, 0.3),
        );
        let ep = run_episode(
            &ConstantPolicy {
                l_plus: 1.0,
                l_minus: 1.0,
            },
            &m,
            1,
        );
        assert_eq!(ep.terminal_objective, 0.0);
    }

    #[test]
    fn compensated_sum() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(&v), 2.0);
        let e = McEstimate::from_values(&[1.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert!((e.std_dev - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(McEstimate::from_values(&[4.0]).std_error, None);
    }
}
