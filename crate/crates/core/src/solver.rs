//! Backward induction for the optimal quoting policy.
//!
//! Conventions: step `k` runs over `0..=N` with `N = n_steps - 1`. Per-step
//! coefficients (`gamma`, `beta`, `A1..A3`, `xi`) have `n_steps` entries and
//! the value-function coefficients (`alpha`, `h`, `g`) have `n_steps + 1`,
//! the last one being the terminal condition. The coefficients at step `k`
//! use the arrival probabilities of interval `k` and `alpha[k + 1]`.

use std::io::Write;

use serde::Serialize;

use crate::error::SolverError;
use crate::model::{validate_params, MarketParams, SideMoments};

const GAMMA_GUARD: f64 = 1e-300;
const XI_PRODUCT_CUTOFF: f64 = 1e-15;

/// Market-maker state at an action time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketState {
    pub k: usize,
    pub s: f64,
    pub w: f64,
    pub i: f64,
}

impl MarketState {
    pub fn initial(s: f64) -> Self {
        Self {
            k: 0,
            s,
            w: 0.0,
            i: 0.0,
        }
    }
}

/// Price-change forecasts made at step `k`: `deltas[i]` is the expected
/// increment over interval `k + i`. Missing entries count as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForecastVector {
    pub deltas: Vec<f64>,
}

impl ForecastVector {
    pub fn new(deltas: Vec<f64>) -> Self {
        Self { deltas }
    }

    pub fn single(delta: f64) -> Self {
        Self {
            deltas: vec![delta],
        }
    }

    pub fn get(&self, offset: usize) -> f64 {
        self.deltas.get(offset).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.deltas.iter().all(|&d| d == 0.0)
    }
}

/// Arrival probabilities and moments entering one backward step.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub pi_plus: f64,
    pub pi_minus: f64,
    pub pi_joint: f64,
    pub plus: &'a SideMoments,
    pub minus: &'a SideMoments,
}

impl<'a> StepInputs<'a> {
    pub fn at(params: &'a MarketParams, k: usize) -> Self {
        Self {
            pi_plus: params.arrivals.pi_plus[k],
            pi_minus: params.arrivals.pi_minus[k],
            pi_joint: params.arrivals.pi_joint[k],
            plus: &params.moments.plus,
            minus: &params.moments.minus,
        }
    }
}

/// Everything one backward step produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub gamma: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub a1_plus: f64,
    pub a1_minus: f64,
    pub a2_plus: f64,
    pub a2_minus: f64,
    pub a3_plus: f64,
    pub a3_minus: f64,
    pub alpha: f64,
    pub h: f64,
    pub g: f64,
    pub xi: f64,
}

impl StepCoefficients {
    pub fn spreads(&self, inventory: f64) -> (f64, f64) {
        (
            self.a1_plus * inventory + self.a2_plus + self.a3_plus,
            -self.a1_minus * inventory - self.a2_minus + self.a3_minus,
        )
    }
}

/// One backward step from `(alpha, h, g)` at `k + 1` to step `k`.
///
/// `delta` is the forecast price increment over the interval; zero gives the
/// martingale recursions, otherwise `h_next` and `g_next` are the
/// forecast-adjusted continuation coefficients.
pub fn backward_step(
    inp: &StepInputs<'_>,
    alpha: f64,
    h_next: f64,
    g_next: f64,
    delta: f64,
) -> Result<StepCoefficients, f64> {
    let (pp, pm, pj) = (inp.pi_plus, inp.pi_minus, inp.pi_joint);
    let (p, m) = (inp.plus, inp.minus);
    let (cp, cm) = (p.mu_c, m.mu_c);
    let bp = alpha * p.mu_c2 - cp;
    let bm = alpha * m.mu_c2 - cm;

    let cross = pj * alpha * cp * cm;
    let gamma = cross * cross - pp * pm * bp * bm;
    if !(gamma.abs() >= GAMMA_GUARD) {
        return Err(gamma);
    }
    let beta_plus = pp * pm * cp * bm - pm * pj * alpha * cp * cm * cm;
    let beta_minus = pp * pm * cm * bp - pp * pj * alpha * cm * cp * cp;

    let a1_plus = beta_plus * alpha / gamma;
    let a1_minus = beta_minus * alpha / gamma;
    let a2_plus = beta_plus * h_next / (2.0 * gamma);
    let a2_minus = beta_minus * h_next / (2.0 * gamma);

    let own_plus = pp * (p.mu_cp - 2.0 * alpha * p.mu_c2p) + 2.0 * alpha * pj * cp * m.mu_cp;
    let own_minus = pm * (m.mu_cp - 2.0 * alpha * m.mu_c2p) + 2.0 * alpha * pj * cm * p.mu_cp;
    let drift_plus = pp * delta * cp;
    let drift_minus = pm * delta * cm;
    let a3_plus = pm / (2.0 * gamma) * bm * (own_plus + drift_plus)
        + pj * alpha / (2.0 * gamma) * cp * cm * (own_minus - drift_minus);
    let a3_minus = pp / (2.0 * gamma) * bp * (own_minus - drift_minus)
        + pj * alpha / (2.0 * gamma) * cp * cm * (own_plus + drift_plus);

    let alpha_k = alpha
        + pp * (bp * a1_plus * a1_plus + 2.0 * alpha * cp * a1_plus)
        + pm * (bm * a1_minus * a1_minus + 2.0 * alpha * cm * a1_minus)
        + 2.0 * alpha * pj * cp * cm * a1_plus * a1_minus;

    // delta-signed intercepts: x+ = A3+ + A2+, x- = -A3- + A2-
    let x_plus = a3_plus + a2_plus;
    let x_minus = -a3_minus + a2_minus;
    let h_side = |pi: f64, sign: f64, b: f64, a1: f64, x: f64, s: &SideMoments| {
        pi * (2.0 * b * a1 * x + 2.0 * alpha * s.mu_c * x - 2.0 * alpha * sign * s.mu_cp
            + sign * a1 * (s.mu_cp + sign * h_next * s.mu_c - 2.0 * alpha * s.mu_c2p))
    };
    let h_k = h_next
        + h_side(pp, 1.0, bp, a1_plus, x_plus, p)
        + h_side(pm, -1.0, bm, a1_minus, x_minus, m)
        - 2.0
            * alpha
            * pj
            * cp
            * cm
            * (a1_plus * (a3_minus - a2_minus) - a1_minus * (a2_plus + a3_plus)
                + p.mu_cp / cp * a1_minus
                - m.mu_cp / cm * a1_plus)
        + delta * (a1_plus * pp * cp + a1_minus * pm * cm + 1.0);

    // intercept spreads at zero inventory: A3 + delta*A2
    let l_plus = a3_plus + a2_plus;
    let l_minus = a3_minus - a2_minus;
    let g_side = |pi: f64, sign: f64, b: f64, l: f64, s: &SideMoments| {
        pi * (b * l * l + alpha * s.mu_c2p2 - sign * h_next * s.mu_cp
            + (s.mu_cp + sign * h_next * s.mu_c - 2.0 * alpha * s.mu_c2p) * l)
    };
    let (rp, rm) = (p.mu_cp / cp, m.mu_cp / cm);
    let g_k = g_next + g_side(pp, 1.0, bp, l_plus, p) + g_side(pm, -1.0, bm, l_minus, m)
        - 2.0 * alpha * pj * cp * cm * (l_plus * l_minus - rp * l_minus - rm * l_plus + rp * rm)
        + delta * (l_plus * pp * cp - l_minus * pm * cm - pp * p.mu_cp + pm * m.mu_cp);

    let ag = alpha / gamma;
    let xi = 1.0
        + ag * (pp * beta_plus * (beta_plus / gamma * bp + 2.0 * cp)
            + pm * beta_minus * (beta_minus / gamma * bm + 2.0 * cm))
        + 2.0 * ag * ag * pj * cp * cm * beta_plus * beta_minus;

    Ok(StepCoefficients {
        gamma,
        beta_plus,
        beta_minus,
        a1_plus,
        a1_minus,
        a2_plus,
        a2_minus,
        a3_plus,
        a3_minus,
        alpha: alpha_k,
        h: h_k,
        g: g_k,
        xi,
    })
}

/// Output of [`backward_pass`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub gamma: Vec<f64>,
    pub beta_plus: Vec<f64>,
    pub beta_minus: Vec<f64>,
    pub a1_plus: Vec<f64>,
    pub a1_minus: Vec<f64>,
    pub a2_plus: Vec<f64>,
    pub a2_minus: Vec<f64>,
    pub a3_plus: Vec<f64>,
    pub a3_minus: Vec<f64>,
    pub xi: Vec<f64>,
    pub alpha: Vec<f64>,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    pub params: MarketParams,
}

impl CoefficientTable {
    pub fn n_steps(&self) -> usize {
        self.gamma.len()
    }

    /// Index `N` of the last action time.
    pub fn last_step(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    pub fn step(&self, k: usize) -> StepCoefficients {
        StepCoefficients {
            gamma: self.gamma[k],
            beta_plus: self.beta_plus[k],
            beta_minus: self.beta_minus[k],
            a1_plus: self.a1_plus[k],
            a1_minus: self.a1_minus[k],
            a2_plus: self.a2_plus[k],
            a2_minus: self.a2_minus[k],
            a3_plus: self.a3_plus[k],
            a3_minus: self.a3_minus[k],
            alpha: self.alpha[k],
            h: self.h[k],
            g: self.g[k],
            xi: self.xi[k],
        }
    }

    /// Columnar CSV; the terminal row carries only `alpha`, `h` and `g`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SolverError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "gamma",
            "beta_plus",
            "beta_minus",
            "a1_plus",
            "a1_minus",
            "a2_plus",
            "a2_minus",
            "a3_plus",
            "a3_minus",
            "alpha",
            "h",
            "g",
            "xi",
        ])?;
        let fmt = |v: f64| format!("{v:e}");
        for k in 0..self.n_steps() {
            w.write_record([
                k.to_string(),
                fmt(self.gamma[k]),
                fmt(self.beta_plus[k]),
                fmt(self.beta_minus[k]),
                fmt(self.a1_plus[k]),
                fmt(self.a1_minus[k]),
                fmt(self.a2_plus[k]),
                fmt(self.a2_minus[k]),
                fmt(self.a3_plus[k]),
                fmt(self.a3_minus[k]),
                fmt(self.alpha[k]),
                fmt(self.h[k]),
                fmt(self.g[k]),
                fmt(self.xi[k]),
            ])?;
        }
        let t = self.n_steps();
        let mut last = vec![t.to_string()];
        last.extend(std::iter::repeat_n(String::new(), 9));
        last.extend([
            fmt(self.alpha[t]),
            fmt(self.h[t]),
            fmt(self.g[t]),
            String::new(),
        ]);
        w.write_record(&last)?;
        w.flush()?;
        Ok(())
    }
}

/// Runs the backward recursions from the terminal condition
/// `alpha = -lambda, h = g = 0`.
pub fn backward_pass(p: &MarketParams) -> Result<CoefficientTable, SolverError> {
    let report = validate_params(p);
    if !report.is_valid() {
        return Err(SolverError::InvalidParams(report));
    }
    let n = p.grid.n_steps;
    let mut t = CoefficientTable {
        gamma: vec![0.0; n],
        beta_plus: vec![0.0; n],
        beta_minus: vec![0.0; n],
        a1_plus: vec![0.0; n],
        a1_minus: vec![0.0; n],
        a2_plus: vec![0.0; n],
        a2_minus: vec![0.0; n],
        a3_plus: vec![0.0; n],
        a3_minus: vec![0.0; n],
        xi: vec![0.0; n],
        alpha: vec![0.0; n + 1],
        h: vec![0.0; n + 1],
        g: vec![0.0; n + 1],
        params: p.clone(),
    };
    t.alpha[n] = -p.lambda;
    for k in (0..n).rev() {
        let inp = StepInputs::at(p, k);
        let c = backward_step(&inp, t.alpha[k + 1], t.h[k + 1], t.g[k + 1], 0.0)
            .map_err(|gamma| SolverError::SingularGamma { k, gamma })?;
        t.gamma[k] = c.gamma;
        t.beta_plus[k] = c.beta_plus;
        t.beta_minus[k] = c.beta_minus;
        t.a1_plus[k] = c.a1_plus;
        t.a1_minus[k] = c.a1_minus;
        t.a2_plus[k] = c.a2_plus;
        t.a2_minus[k] = c.a2_minus;
        t.a3_plus[k] = c.a3_plus;
        t.a3_minus[k] = c.a3_minus;
        t.xi[k] = c.xi;
        t.alpha[k] = c.alpha;
        t.h[k] = c.h;
        t.g[k] = c.g;
    }
    Ok(t)
}

/// Martingale-case optimal ask and bid spreads at step `k`, inventory `i`.
pub fn optimal_spreads(table: &CoefficientTable, k: usize, i: f64) -> (f64, f64) {
    (
        table.a1_plus[k] * i + table.a2_plus[k] + table.a3_plus[k],
        -table.a1_minus[k] * i - table.a2_minus[k] + table.a3_minus[k],
    )
}

/// `Delta_k + sum_{j>k} (prod_{l=k+1..j} xi_l) Delta_j`, the effective drift
/// seen by the step-`k` quotes.
pub fn discounted_forecast(table: &CoefficientTable, k: usize, f: &ForecastVector) -> f64 {
    let last = table.last_step();
    let mut total = f.get(0);
    let mut prod = 1.0;
    let horizon = f.deltas.len().min(last - k + 1);
    for offset in 1..horizon {
        prod *= table.xi[k + offset];
        if prod.abs() < XI_PRODUCT_CUTOFF {
            break;
        }
        total += prod * f.deltas[offset];
    }
    total
}

/// Forecast-adjusted optimal spreads.
pub fn optimal_spreads_with_forecasts(
    table: &CoefficientTable,
    k: usize,
    i: f64,
    f: &ForecastVector,
) -> (f64, f64) {
    let (lp, lm) = optimal_spreads(table, k, i);
    if f.is_zero() {
        return (lp, lm);
    }
    let (sp, sm) = forecast_sensitivity(table, k);
    let d = discounted_forecast(table, k, f);
    (lp + sp * d, lm - sm * d)
}

/// `L+ + L-` with the inventory and forecast terms grouped by coefficient
/// difference, so that in a symmetric market the result does not depend on
/// `i` or `f` even at the bit level.
pub fn total_spread(table: &CoefficientTable, k: usize, i: f64, f: &ForecastVector) -> f64 {
    let (sp, sm) = forecast_sensitivity(table, k);
    let d = if f.is_zero() {
        0.0
    } else {
        discounted_forecast(table, k, f)
    };
    (table.a3_plus[k] + table.a3_minus[k])
        + (table.a1_plus[k] - table.a1_minus[k]) * i
        + (table.a2_plus[k] - table.a2_minus[k])
        + (sp - sm) * d
}

/// `(beta+ / 2 gamma, beta- / 2 gamma)`: ask-spread increase and bid-spread
/// decrease per unit of effective drift.
pub fn forecast_sensitivity(table: &CoefficientTable, k: usize) -> (f64, f64) {
    let two_gamma = 2.0 * table.gamma[k];
    (
        table.beta_plus[k] / two_gamma,
        table.beta_minus[k] / two_gamma,
    )
}

fn snap_to_tick(x: f64, up: bool) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else if up {
        x.ceil()
    } else {
        x.floor()
    }
}

/// Rounds the ask up and the bid down to the tick grid. Values within
/// floating-point noise of a tick are treated as on the grid.
pub fn quote_prices(s: f64, l_plus: f64, l_minus: f64, tick_size: f64) -> (f64, f64) {
    let (a, b) = quote_ticks(s, l_plus, l_minus, tick_size);
    (a as f64 * tick_size, b as f64 * tick_size)
}

/// Same as [`quote_prices`] but returns integer tick indices.
pub fn quote_ticks(s: f64, l_plus: f64, l_minus: f64, tick_size: f64) -> (i64, i64) {
    let ask = snap_to_tick((s + l_plus) / tick_size, true);
    let bid = snap_to_tick((s - l_minus) / tick_size, false);
    (ask as i64, bid as i64)
}

/// `W + alpha I^2 + S I + h I + g` at `state.k`.
pub fn value_function(table: &CoefficientTable, state: &MarketState) -> f64 {
    let k = state.k;
    state.w
        + table.alpha[k] * state.i * state.i
        + state.s * state.i
        + table.h[k] * state.i
        + table.g[k]
}

/// Forecast-adjusted `h` at step `k` and the shift `g_tilde[k] - g[k]`.
///
/// The forecasts are treated as a deterministic path seen from step `k`;
/// `g_tilde` is obtained by running the drifted recursions backward along it.
pub fn nonmartingale_value_adjustments(
    table: &CoefficientTable,
    k: usize,
    f: &ForecastVector,
) -> (f64, f64) {
    let last = table.last_step();
    let horizon = last - k + 1;
    // h_tilde[j] for j = k..=N+1 along the path
    let mut h_tilde = vec![0.0; horizon + 1];
    for j in (k..=last).rev() {
        let d = f.get(j - k);
        h_tilde[j - k] = table.h[j] + table.xi[j] * (h_tilde[j + 1 - k] - table.h[j + 1] + d);
    }
    let mut g_tilde = 0.0;
    for j in (k..=last).rev() {
        let inp = StepInputs::at(&table.params, j);
        let c = backward_step(
            &inp,
            table.alpha[j + 1],
            h_tilde[j + 1 - k],
            g_tilde,
            f.get(j - k),
        )
        .expect("gamma was nonzero in the backward pass");
        g_tilde = c.g;
    }
    (h_tilde[0], g_tilde - table.g[k])
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

/// Checks the symmetric, independent, zero-variance-`c` configuration with
/// constant arrival probabilities.
pub fn check_symmetric(p: &MarketParams) -> Result<(), SolverError> {
    let (a, b) = (&p.moments.plus, &p.moments.minus);
    let pairs = [
        ("mu_c", a.mu_c, b.mu_c),
        ("mu_c2", a.mu_c2, b.mu_c2),
        ("mu_cp", a.mu_cp, b.mu_cp),
        ("mu_c2p", a.mu_c2p, b.mu_c2p),
        ("mu_c2p2", a.mu_c2p2, b.mu_c2p2),
    ];
    for (name, x, y) in pairs {
        if !rel_eq(x, y) {
            return Err(SolverError::NotSymmetric(format!(
                "{name} differs across sides ({x} vs {y})"
            )));
        }
    }
    if !rel_eq(a.mu_c2, a.mu_c * a.mu_c) {
        return Err(SolverError::NotSymmetric(
            "mu_c2 differs from mu_c squared".into(),
        ));
    }
    let arr = &p.arrivals;
    let pi = arr.pi_plus[0];
    let pj = arr.pi_joint[0];
    for k in 0..arr.len() {
        if arr.pi_plus[k] != pi || arr.pi_minus[k] != pi || arr.pi_joint[k] != pj {
            return Err(SolverError::NotSymmetric(format!(
                "arrival probabilities vary at step {k}"
            )));
        }
    }
    if let Some(mp) = a.mu_p {
        if !rel_eq(a.mu_cp, a.mu_c * mp) || !rel_eq(a.mu_c2p, a.mu_c2 * mp) {
            return Err(SolverError::NotSymmetric("c and p are correlated".into()));
        }
    }
    Ok(())
}

/// Closed-form total spread `L+ + L-` for symmetric parameters evaluated at a
/// given continuation `alpha`.
pub fn closed_form_spread_at_alpha(p: &MarketParams, alpha: f64) -> Result<f64, SolverError> {
    check_symmetric(p)?;
    let m = &p.moments.plus;
    let pi = p.arrivals.pi_plus[0];
    let pj = p.arrivals.pi_joint[0];
    let mu_p = m.reservation_mean();
    let num =
        (pi * (m.mu_c - 2.0 * alpha * m.mu_c2) + 2.0 * alpha * pj * m.mu_c * m.mu_c) * (2.0 * mu_p);
    let den = 2.0 * (pj * alpha * m.mu_c * m.mu_c - pi * (alpha * m.mu_c2 - m.mu_c));
    Ok(num / den)
}

/// Closed-form total spread at step `k`, using `alpha[k + 1]` from the
/// backward recursion.
pub fn closed_form_spread_symmetric(p: &MarketParams, k: usize) -> Result<f64, SolverError> {
    check_symmetric(p)?;
    let last = p.grid.n_steps - 1;
    if k > last {
        return Err(SolverError::StepOutOfRange { k, last });
    }
    let alpha = alpha_path(p)?[k + 1];
    closed_form_spread_at_alpha(p, alpha)
}

/// The `alpha` recursion alone (it does not depend on `h` or `g`).
pub fn alpha_path(p: &MarketParams) -> Result<Vec<f64>, SolverError> {
    let n = p.grid.n_steps;
    let mut alpha = vec![0.0; n + 1];
    alpha[n] = -p.lambda;
    for k in (0..n).rev() {
        let c = backward_step(&StepInputs::at(p, k), alpha[k + 1], 0.0, 0.0, 0.0)
            .map_err(|gamma| SolverError::SingularGamma { k, gamma })?;
        alpha[k] = c.alpha;
    }
    Ok(alpha)
}

/// Inventory levels `±mu_c2 mu_p / (2 mu_c)` at which the ask (bid) spread
/// equals half the mean reservation depth.
pub fn inventory_threshold(p: &MarketParams) -> Result<(f64, f64), SolverError> {
    let (a, b) = (&p.moments.plus, &p.moments.minus);
    if !(rel_eq(a.mu_c, b.mu_c) && rel_eq(a.mu_c2, b.mu_c2) && rel_eq(a.mu_cp, b.mu_cp)) {
        return Err(SolverError::NotSymmetric("side moments differ".into()));
    }
    if !rel_eq(a.reservation_mean(), b.reservation_mean()) {
        return Err(SolverError::NotSymmetric("reservation means differ".into()));
    }
    if p.arrivals.pi_joint.iter().any(|&x| x != 0.0) {
        return Err(SolverError::NotSymmetric(
            "threshold requires pi_joint = 0".into(),
        ));
    }
    if p.arrivals.pi_plus != p.arrivals.pi_minus {
        return Err(SolverError::NotSymmetric(
            "arrival probabilities differ across sides".into(),
        ));
    }
    let bar = a.mu_c2 * a.reservation_mean() / (2.0 * a.mu_c);
    Ok((bar, -bar))
}
