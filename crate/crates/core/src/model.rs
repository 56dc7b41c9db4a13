//! Market-model parameters: action grid, arrival probabilities, conditional
//! demand moments and the terminal inventory penalty.
//!
//! Arrival entry `k` always refers to the interval `[t_k, t_{k+1})`, so every
//! per-step array has exactly `grid.n_steps` entries.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Action times `t_k = session_start + k * step_seconds`, `k = 0..n_steps-1`;
/// the terminal time is `t_{n_steps}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_steps: usize,
    pub step_seconds: f64,
    #[serde(default)]
    pub session_start_ns: i64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, step_seconds: f64) -> Self {
        Self {
            n_steps,
            step_seconds,
            session_start_ns: 0,
        }
    }

    /// Index of the last action time (`N`).
    pub fn last_step(&self) -> usize {
        self.n_steps - 1
    }

    pub fn step_ns(&self) -> i64 {
        (self.step_seconds * 1e9).round() as i64
    }

    /// Timestamp of `t_k` in nanoseconds; `k == n_steps` gives the terminal time.
    pub fn time_ns(&self, k: usize) -> i64 {
        self.session_start_ns + k as i64 * self.step_ns()
    }

    pub fn terminal_ns(&self) -> i64 {
        self.time_ns(self.n_steps)
    }
}

/// Per-interval arrival probabilities of buy (`plus`) and sell (`minus`)
/// market orders and of both together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSchedule {
    pub pi_plus: Vec<f64>,
    pub pi_minus: Vec<f64>,
    pub pi_joint: Vec<f64>,
}

impl ArrivalSchedule {
    pub fn constant(n_steps: usize, pi_plus: f64, pi_minus: f64, pi_joint: f64) -> Self {
        Self {
            pi_plus: vec![pi_plus; n_steps],
            pi_minus: vec![pi_minus; n_steps],
            pi_joint: vec![pi_joint; n_steps],
        }
    }

    pub fn len(&self) -> usize {
        self.pi_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_plus.is_empty()
    }

    /// Probability of a buy-only arrival, `pi(1,0)`.
    pub fn pi_buy_only(&self, k: usize) -> f64 {
        self.pi_plus[k] - self.pi_joint[k]
    }

    /// Probability of a sell-only arrival, `pi(0,1)`.
    pub fn pi_sell_only(&self, k: usize) -> f64 {
        self.pi_minus[k] - self.pi_joint[k]
    }
}

/// Fréchet bounds on the joint arrival probability given the two marginals.
pub fn frechet_bounds(pi_plus: f64, pi_minus: f64) -> (f64, f64) {
    ((pi_plus + pi_minus - 1.0).max(0.0), pi_plus.min(pi_minus))
}

/// Conditional moments of `(c, p)` on one side, given an arrival on that side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideMoments {
    pub mu_c: f64,
    pub mu_c2: f64,
    pub mu_cp: f64,
    pub mu_c2p: f64,
    pub mu_c2p2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_p2: Option<f64>,
}

impl SideMoments {
    /// Moments of independent `c` and `p` with the given first two moments each.
    pub fn independent(mu_c: f64, mu_c2: f64, mu_p: f64, mu_p2: f64) -> Self {
        Self {
            mu_c,
            mu_c2,
            mu_cp: mu_c * mu_p,
            mu_c2p: mu_c2 * mu_p,
            mu_c2p2: mu_c2 * mu_p2,
            mu_p: Some(mu_p),
            mu_p2: Some(mu_p2),
        }
    }

    /// `mu_p` if stored, otherwise the value implied by `mu_cp / mu_c`
    /// (exact when `c` and `p` are uncorrelated).
    pub fn reservation_mean(&self) -> f64 {
        self.mu_p.unwrap_or(self.mu_cp / self.mu_c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandMoments {
    pub plus: SideMoments,
    pub minus: SideMoments,
}

impl DemandMoments {
    pub fn symmetric(side: SideMoments) -> Self {
        Self {
            plus: side,
            minus: side,
        }
    }

    pub fn side(&self, side: Side) -> &SideMoments {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }
}

/// Market side in the model's `±` convention: `Plus` is the ask side hit by
/// buy market orders, `Minus` the bid side hit by sell market orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Plus, Side::Minus];

    /// `+1` for the ask side, `-1` for the bid side.
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub grid: TimeGrid,
    pub arrivals: ArrivalSchedule,
    pub moments: DemandMoments,
    pub lambda: f64,
    pub tick_size: f64,
}

impl MarketParams {
    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn pi(&self, side: Side, k: usize) -> f64 {
        match side {
            Side::Plus => self.arrivals.pi_plus[k],
            Side::Minus => self.arrivals.pi_minus[k],
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Replaces the joint arrival probability with a constant at every step.
    pub fn with_constant_joint(mut self, pi_joint: f64) -> Self {
        self.arrivals.pi_joint = vec![pi_joint; self.grid.n_steps];
        self
    }

    pub fn validate(&self) -> ValidationReport {
        validate_params(self)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let file: ParamFile = toml::from_str(text)?;
        file.into_params()
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ModelError> {
        Ok(toml::to_string(&ParamFile::from(self))?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let text = self.to_toml_string()?;
        std::fs::write(path, text).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// One violated invariant found by [`validate_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub index: Option<usize>,
    pub description: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(k) => write!(f, "{}[{}]: {}", self.field, k, self.description),
            None => write!(f, "{}: {}", self.field, self.description),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter()
    }

    /// True if some violation description contains `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.violations
            .iter()
            .any(|v| v.description.contains(needle))
    }

    fn push(&mut self, field: &str, index: Option<usize>, description: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            index,
            description: description.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Collects every violated parameter invariant. Never fails.
pub fn validate_params(p: &MarketParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = p.grid.n_steps;
    if n < 1 {
        report.push("grid.n_steps", None, "must be at least 1");
    }
    if !(p.grid.step_seconds > 0.0) {
        report.push("grid.step_seconds", None, "must be positive");
    }
    if !(p.lambda >= 0.0) {
        report.push("lambda", None, "must be nonnegative");
    }
    if !(p.tick_size > 0.0) {
        report.push("tick_size", None, "must be positive");
    }

    let arr = &p.arrivals;
    for (name, len) in [
        ("arrivals.pi_plus", arr.pi_plus.len()),
        ("arrivals.pi_minus", arr.pi_minus.len()),
        ("arrivals.pi_joint", arr.pi_joint.len()),
    ] {
        if len != n {
            report.push(
                name,
                None,
                format!("length {len} does not match n_steps {n}"),
            );
        }
    }
    let m = arr
        .pi_plus
        .len()
        .min(arr.pi_minus.len())
        .min(arr.pi_joint.len());
    for k in 0..m {
        let (pp, pm, pj) = (arr.pi_plus[k], arr.pi_minus[k], arr.pi_joint[k]);
        if !(pp > 0.0 && pp <= 1.0) {
            report.push("arrivals.pi_plus", Some(k), format!("{pp} outside (0, 1]"));
        }
        if !(pm > 0.0 && pm <= 1.0) {
            report.push("arrivals.pi_minus", Some(k), format!("{pm} outside (0, 1]"));
        }
        if !(0.0..=1.0).contains(&pj) {
            report.push("arrivals.pi_joint", Some(k), format!("{pj} outside [0, 1]"));
        }
        let (lo, hi) = frechet_bounds(pp, pm);
        if pj > hi {
            report.push(
                "arrivals.pi_joint",
                Some(k),
                format!("pi_joint exceeds min marginal ({pj} > {hi})"),
            );
        }
        if pj < lo {
            report.push(
                "arrivals.pi_joint",
                Some(k),
                format!("pi_joint below Frechet lower bound ({pj} < {lo})"),
            );
        }
    }

    for (prefix, m) in [
        ("moments.plus", &p.moments.plus),
        ("moments.minus", &p.moments.minus),
    ] {
        for (name, v) in [
            ("mu_c", m.mu_c),
            ("mu_c2", m.mu_c2),
            ("mu_cp", m.mu_cp),
            ("mu_c2p", m.mu_c2p),
            ("mu_c2p2", m.mu_c2p2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                report.push(
                    &format!("{prefix}.{name}"),
                    None,
                    format!("{v} is not strictly positive"),
                );
            }
        }
        if m.mu_c2 < m.mu_c * m.mu_c {
            report.push(
                &format!("{prefix}.mu_c2"),
                None,
                format!("mu_c2 < mu_c squared ({} < {})", m.mu_c2, m.mu_c * m.mu_c),
            );
        }
        for (name, v) in [("mu_p", m.mu_p), ("mu_p2", m.mu_p2)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    report.push(
                        &format!("{prefix}.{name}"),
                        None,
                        format!("{v} is not strictly positive"),
                    );
                }
            }
        }
        if let (Some(mp), Some(mp2)) = (m.mu_p, m.mu_p2) {
            if mp2 < mp * mp {
                report.push(
                    &format!("{prefix}.mu_p2"),
                    None,
                    format!("mu_p2 < mu_p squared ({mp2} < {})", mp * mp),
                );
            }
        }
    }
    report
}

/// Symmetric market with deterministic-looking demand moments
/// (`mu_c2 = mu_c^2`, uncorrelated `c` and `p`) and constant arrival rates.
pub fn symmetric_params(
    mu_c: f64,
    mu_p: f64,
    pi: f64,
    pi_joint: f64,
    lambda: f64,
    n_steps: usize,
) -> Result<MarketParams, ModelError> {
    let side = SideMoments {
        mu_c,
        mu_c2: mu_c * mu_c,
        mu_cp: mu_c * mu_p,
        mu_c2p: mu_c * mu_c * mu_p,
        mu_c2p2: mu_c * mu_c * mu_p * mu_p,
        mu_p: Some(mu_p),
        mu_p2: Some(mu_p * mu_p),
    };
    let params = MarketParams {
        grid: TimeGrid::new(n_steps, 1.0),
        arrivals: ArrivalSchedule::constant(n_steps, pi, pi, pi_joint),
        moments: DemandMoments::symmetric(side),
        lambda,
        tick_size: 0.01,
    };
    let report = validate_params(&params);
    if report.is_valid() {
        Ok(params)
    } else {
        Err(ModelError::Invalid(report))
    }
}

/// A per-step array in the parameter file: dense values, a scalar broadcast
/// to every step, or quadratic coefficients `a0 + a1*k + a2*k^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepArray {
    Dense(Vec<f64>),
    Constant(f64),
    Quadratic { a0: f64, a1: f64, a2: f64 },
}

impl StepArray {
    pub fn expand(&self, n_steps: usize) -> Vec<f64> {
        match self {
            StepArray::Dense(v) => v.clone(),
            StepArray::Constant(c) => vec![*c; n_steps],
            StepArray::Quadratic { a0, a1, a2 } => (0..n_steps)
                .map(|k| {
                    let k = k as f64;
                    a0 + a1 * k + a2 * k * k
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrivalSpec {
    pub pi_plus: StepArray,
    pub pi_minus: StepArray,
    pub pi_joint: StepArray,
}

/// On-disk (TOML) layout of [`MarketParams`]. Unknown top-level tables are
/// ignored, so simulation and backtest settings can share the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamFile {
    pub lambda: f64,
    pub tick_size: f64,
    pub grid: TimeGrid,
    pub arrivals: ArrivalSpec,
    pub moments: DemandMoments,
}

impl ParamFile {
    pub fn into_params(self) -> Result<MarketParams, ModelError> {
        let n = self.grid.n_steps;
        let params = MarketParams {
            arrivals: ArrivalSchedule {
                pi_plus: self.arrivals.pi_plus.expand(n),
                pi_minus: self.arrivals.pi_minus.expand(n),
                pi_joint: self.arrivals.pi_joint.expand(n),
            },
            grid: self.grid,
            moments: self.moments,
            lambda: self.lambda,
            tick_size: self.tick_size,
        };
        Ok(params)
    }
}

impl From<&MarketParams> for ParamFile {
    fn from(p: &MarketParams) -> Self {
        let compact = |v: &[f64]| match v.first() {
            Some(&first) if v.iter().all(|&x| x == first) => StepArray::Constant(first),
            _ => StepArray::Dense(v.to_vec()),
        };
        ParamFile {
            lambda: p.lambda,
            tick_size: p.tick_size,
            grid: p.grid.clone(),
            arrivals: ArrivalSpec {
                pi_plus: compact(&p.arrivals.pi_plus),
                pi_minus: compact(&p.arrivals.pi_minus),
                pi_joint: compact(&p.arrivals.pi_joint),
            },
            moments: p.moments,
        }
    }
}
