//! Calibration of [`MarketParams`] from replayed order-book days.
//!
//! Per interval, the demand each side would have shown against a quote at a
//! grid of placement levels is regressed on the distance from the midprice.
//! Daily moments average those regressions over intervals with an arrival;
//! arrival probabilities are quadratic fits in the step index to cross-day
//! indicator means.

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::EstimationError;
use crate::lob::{fill_quantity, IntervalFlow, Replay, Side, Snapshot};
use crate::model::{
    frechet_bounds, ArrivalSchedule, DemandMoments, MarketParams, SideMoments, TimeGrid,
};

/// Placement levels per side used by the demand regression.
pub const DEFAULT_LEVELS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `w(l) = 1 / (1 + l / tick)`.
    #[default]
    Distance,
    Uniform,
}

impl WeightScheme {
    pub fn weight(self, distance: f64, tick_size: f64) -> f64 {
        match self {
            WeightScheme::Distance => 1.0 / (1.0 + distance / tick_size),
            WeightScheme::Uniform => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub levels: usize,
    pub weights: WeightScheme,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS,
            weights: WeightScheme::Distance,
        }
    }
}

/// Buy/sell market-order indicators per interval.
pub fn arrival_indicators(flows: &[IntervalFlow]) -> (Vec<bool>, Vec<bool>) {
    flows
        .iter()
        .map(|f| (f.has_side(Side::Ask), f.has_side(Side::Bid)))
        .unzip()
}

/// Least-squares quadratic `a0 + a1 k + a2 k^2` in the step index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadFit {
    pub coef: [f64; 3],
    pub se: [f64; 3],
    /// The normal equations were singular and the fit fell back to the mean.
    pub degenerate: bool,
}

impl QuadFit {
    pub fn eval(&self, k: f64) -> f64 {
        self.coef[0] + self.coef[1] * k + self.coef[2] * k * k
    }
}

/// OLS fit of `y[k]` on `{1, k, k^2}` with classical standard errors.
pub fn fit_quadratic(y: &[f64]) -> QuadFit {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n.max(1) as f64;
    let fallback = || {
        log::warn!("quadratic arrival fit is degenerate; using the constant mean");
        let var = if n > 1 {
            y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        QuadFit {
            coef: [mean, 0.0, 0.0],
            se: [(var / n.max(1) as f64).sqrt(), 0.0, 0.0],
            degenerate: true,
        }
    };
    if n < 4 {
        return fallback();
    }
    // regress on x = k / s for conditioning, then rescale
    let s = (n - 1) as f64;
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for (k, &v) in y.iter().enumerate() {
        let x = k as f64 / s;
        let row = Vector3::new(1.0, x, x * x);
        xtx += row * row.transpose();
        xty += row * v;
    }
    let Some(inv) = xtx.try_inverse() else {
        return fallback();
    };
    let b = inv * xty;
    let rss: f64 = y
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let x = k as f64 / s;
            (v - (b[0] + b[1] * x + b[2] * x * x)).powi(2)
        })
        .sum();
    let sigma2 = rss / (n - 3) as f64;
    let scale = [1.0, 1.0 / s, 1.0 / (s * s)];
    QuadFit {
        coef: [b[0], b[1] * scale[1], b[2] * scale[2]],
        se: [0, 1, 2].map(|i| (sigma2 * inv[(i, i)]).max(0.0).sqrt() * scale[i]),
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrivalFit {
    pub plus: QuadFit,
    pub minus: QuadFit,
    pub joint: QuadFit,
    pub schedule: ArrivalSchedule,
    /// Steps where the fitted joint probability had to be moved into its
    /// Frechet interval.
    pub frechet_clamped: usize,
}

/// Fits quadratic arrival curves to the cross-day means of per-day
/// `(buy, sell)` indicator arrays.
pub fn fit_arrival_curves(days: &[(&[bool], &[bool])]) -> Result<ArrivalFit, EstimationError> {
    let Some(first) = days.first() else {
        return Err(EstimationError::InsufficientData(
            "no indicator history".into(),
        ));
    };
    let n = first.0.len();
    if days.iter().any(|(a, b)| a.len() != n || b.len() != n) {
        return Err(EstimationError::InsufficientData(
            "indicator arrays differ in length".into(),
        ));
    }
    let d = days.len() as f64;
    let mut mp = vec![0.0; n];
    let mut mm = vec![0.0; n];
    let mut mj = vec![0.0; n];
    for (a, b) in days {
        for k in 0..n {
            mp[k] += a[k] as u8 as f64;
            mm[k] += b[k] as u8 as f64;
            mj[k] += (a[k] && b[k]) as u8 as f64;
        }
    }
    for v in [&mut mp, &mut mm, &mut mj] {
        v.iter_mut().for_each(|x| *x /= d);
    }
    let (plus, minus, joint) = (fit_quadratic(&mp), fit_quadratic(&mm), fit_quadratic(&mj));
    let unit = |f: &QuadFit, k: usize| f.eval(k as f64).clamp(0.0, 1.0);
    let mut schedule = ArrivalSchedule {
        pi_plus: Vec::with_capacity(n),
        pi_minus: Vec::with_capacity(n),
        pi_joint: Vec::with_capacity(n),
    };
    let mut clamped = 0;
    for k in 0..n {
        let (pp, pm) = (unit(&plus, k), unit(&minus, k));
        let pj = unit(&joint, k);
        let (lo, hi) = frechet_bounds(pp, pm);
        let pj_c = pj.clamp(lo.min(hi), hi);
        if pj_c != pj {
            clamped += 1;
        }
        schedule.pi_plus.push(pp);
        schedule.pi_minus.push(pm);
        schedule.pi_joint.push(pj_c);
    }
    if clamped > 0 {
        log::warn!("joint arrival fit moved into the Frechet interval at {clamped} steps");
    }
    Ok(ArrivalFit {
        plus,
        minus,
        joint,
        schedule,
        frechet_clamped: clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandEstimate {
    pub c: f64,
    pub p: f64,
    pub valid: bool,
}

impl DemandEstimate {
    pub const INVALID: Self = Self {
        c: f64::NAN,
        p: f64::NAN,
        valid: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalDemand {
    pub plus: DemandEstimate,
    pub minus: DemandEstimate,
}

/// Weighted regression of `demand` on `distance`; returns `(c, p)` from
/// `demand = c p - c distance`.
pub fn regress_demand(distance: &[f64], demand: &[f64], weights: &[f64]) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&x, &y), &w) in distance.iter().zip(demand).zip(weights) {
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    if distance.len() < 2 || !(det.abs() > 1e-12 * sw * sxx) {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    let c = -slope;
    Some((c, intercept / c))
}

fn side_demand(
    snapshot: &Snapshot,
    flow: &IntervalFlow,
    side: Side,
    tick_size: f64,
    cfg: &EstimationConfig,
) -> DemandEstimate {
    let Some(mid) = snapshot.mid_ticks else {
        return DemandEstimate::INVALID;
    };
    if !flow.has_side(side) {
        return DemandEstimate::INVALID;
    }
    let mut xs = Vec::with_capacity(cfg.levels);
    let mut ys = Vec::with_capacity(cfg.levels);
    let mut ws = Vec::with_capacity(cfg.levels);
    for j in 0..cfg.levels as i64 {
        let price = match side {
            Side::Ask => mid.floor() as i64 + 1 + j,
            Side::Bid => mid.ceil() as i64 - 1 - j,
        };
        if price <= 0 {
            break;
        }
        let q = fill_quantity(price as u32, u64::MAX, side, flow);
        if q == 0 {
            continue;
        }
        let dist = (price as f64 - mid).abs() * tick_size;
        xs.push(dist);
        ys.push(q as f64);
        ws.push(cfg.weights.weight(dist, tick_size));
    }
    match regress_demand(&xs, &ys, &ws) {
        Some((c, p)) if c > 0.0 && p > 0.0 && c.is_finite() && p.is_finite() => {
            DemandEstimate { c, p, valid: true }
        }
        _ => DemandEstimate::INVALID,
    }
}

/// Demand regressions for both sides of one interval. Only levels with
/// positive demand enter the fit; sides without an arrival or with fewer than
/// two such levels are flagged invalid.
pub fn estimate_demand_interval(
    snapshot: &Snapshot,
    flow: &IntervalFlow,
    tick_size: f64,
    cfg: &EstimationConfig,
) -> IntervalDemand {
    IntervalDemand {
        plus: side_demand(snapshot, flow, Side::Ask, tick_size, cfg),
        minus: side_demand(snapshot, flow, Side::Bid, tick_size, cfg),
    }
}

fn side_moments(estimates: impl Iterator<Item = DemandEstimate>) -> Option<(SideMoments, usize)> {
    let mut acc = [0.0f64; 7];
    let mut n = 0usize;
    for e in estimates.filter(|e| e.valid) {
        let (c, p) = (e.c, e.p);
        let terms = [c, c * c, c * p, c * c * p, c * c * p * p, p, p * p];
        for (a, t) in acc.iter_mut().zip(terms) {
            *a += t;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let m = acc.map(|a| a / n as f64);
    Some((
        SideMoments {
            mu_c: m[0],
            mu_c2: m[1],
            mu_cp: m[2],
            mu_c2p: m[3],
            mu_c2p2: m[4],
            mu_p: Some(m[5]),
            mu_p2: Some(m[6]),
        },
        n,
    ))
}

/// Means of the per-interval moment products over valid intervals.
pub fn daily_moments(
    demand: &[IntervalDemand],
) -> Result<(DemandMoments, [usize; 2]), EstimationError> {
    let insufficient =
        |side: &str| EstimationError::InsufficientData(format!("no valid {side} intervals"));
    let (plus, np) =
        side_moments(demand.iter().map(|d| d.plus)).ok_or_else(|| insufficient("buy-side"))?;
    let (minus, nm) =
        side_moments(demand.iter().map(|d| d.minus)).ok_or_else(|| insufficient("sell-side"))?;
    Ok((DemandMoments { plus, minus }, [np, nm]))
}

/// Midprices in currency at `t_0 .. t_{N+1}`, carrying the last two-sided
/// value over one-sided snapshots. Returns the number of filled gaps.
pub fn mid_series(
    snapshots: &[Snapshot],
    tick_size: f64,
) -> Result<(Vec<f64>, usize), EstimationError> {
    let first = snapshots
        .iter()
        .find_map(|s| s.mid_ticks)
        .ok_or_else(|| EstimationError::InsufficientData("book never two-sided".into()))?;
    let mut last = first;
    let mut filled = 0;
    let mids = snapshots
        .iter()
        .map(|s| {
            match s.mid_ticks {
                Some(m) => last = m,
                None => filled += 1,
            }
            last * tick_size
        })
        .collect();
    Ok((mids, filled))
}

#[derive(Debug, Clone)]
pub struct DayEstimates {
    pub day: u64,
    pub ind_plus: Vec<bool>,
    pub ind_minus: Vec<bool>,
    pub demand: Vec<IntervalDemand>,
    pub moments: DemandMoments,
    /// Valid intervals per side.
    pub n_valid: [usize; 2],
    pub mids: Vec<f64>,
}

impl DayEstimates {
    /// Fraction of intervals with both a buy and a sell market order.
    pub fn joint_rate(&self) -> f64 {
        let n = self.ind_plus.len().max(1) as f64;
        self.ind_plus
            .iter()
            .zip(&self.ind_minus)
            .filter(|(a, b)| **a && **b)
            .count() as f64
            / n
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EstimationError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "ind_plus",
            "ind_minus",
            "c_plus",
            "p_plus",
            "valid_plus",
            "c_minus",
            "p_minus",
            "valid_minus",
            "mid",
        ])?;
        for (k, d) in self.demand.iter().enumerate() {
            let num = |v: f64| {
                if v.is_finite() {
                    v.to_string()
                } else {
                    String::new()
                }
            };
            w.write_record([
                k.to_string(),
                (self.ind_plus[k] as u8).to_string(),
                (self.ind_minus[k] as u8).to_string(),
                num(d.plus.c),
                num(d.plus.p),
                (d.plus.valid as u8).to_string(),
                num(d.minus.c),
                num(d.minus.p),
                (d.minus.valid as u8).to_string(),
                self.mids[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the per-interval regressions and daily moments of one replayed day.
pub fn estimate_day(
    day: u64,
    replay: &Replay,
    tick_size: f64,
    cfg: &EstimationConfig,
) -> Result<DayEstimates, EstimationError> {
    let (ind_plus, ind_minus) = arrival_indicators(&replay.flows);
    let demand: Vec<IntervalDemand> = replay
        .flows
        .iter()
        .zip(&replay.snapshots)
        .map(|(f, s)| estimate_demand_interval(s, f, tick_size, cfg))
        .collect();
    let (moments, n_valid) = daily_moments(&demand)?;
    let (mids, _) = mid_series(&replay.snapshots, tick_size)?;
    Ok(DayEstimates {
        day,
        ind_plus,
        ind_minus,
        demand,
        moments,
        n_valid,
        mids,
    })
}

fn average_moments(days: &[DayEstimates]) -> DemandMoments {
    let n = days.len() as f64;
    let avg = |get: &dyn Fn(&DayEstimates) -> &SideMoments| {
        let opt = |f: &dyn Fn(&SideMoments) -> Option<f64>| -> Option<f64> {
            days.iter()
                .map(|d| f(get(d)))
                .sum::<Option<f64>>()
                .map(|s| s / n)
        };
        SideMoments {
            mu_c: days.iter().map(|d| get(d).mu_c).sum::<f64>() / n,
            mu_c2: days.iter().map(|d| get(d).mu_c2).sum::<f64>() / n,
            mu_cp: days.iter().map(|d| get(d).mu_cp).sum::<f64>() / n,
            mu_c2p: days.iter().map(|d| get(d).mu_c2p).sum::<f64>() / n,
            mu_c2p2: days.iter().map(|d| get(d).mu_c2p2).sum::<f64>() / n,
            mu_p: opt(&|m| m.mu_p),
            mu_p2: opt(&|m| m.mu_p2),
        }
    };
    DemandMoments {
        plus: avg(&|d| &d.moments.plus),
        minus: avg(&|d| &d.moments.minus),
    }
}

/// Parameters for day `i` from the `window` days before it: averaged daily
/// moments and arrival curves fitted to the same days.
pub fn rolling_params(
    i: usize,
    window: usize,
    days: &[DayEstimates],
    grid: &TimeGrid,
    lambda: f64,
    tick_size: f64,
) -> Result<(MarketParams, ArrivalFit), EstimationError> {
    if window == 0 || i < window || i > days.len() {
        return Err(EstimationError::InsufficientHistory {
            day: i,
            need: window.max(1),
            have: i.min(days.len()),
        });
    }
    let hist = &days[i - window..i];
    let ind: Vec<(&[bool], &[bool])> = hist
        .iter()
        .map(|d| (&d.ind_plus[..], &d.ind_minus[..]))
        .collect();
    let fit = fit_arrival_curves(&ind)?;
    if fit.schedule.len() != grid.n_steps {
        return Err(EstimationError::InsufficientData(
            "history grid differs from target grid".into(),
        ));
    }
    let params = MarketParams {
        grid: grid.clone(),
        arrivals: fit.schedule.clone(),
        moments: average_moments(hist),
        lambda,
        tick_size,
    };
    Ok((params, fit))
}

/// Average of the last five midprice increments at step `k`; zero (and
/// `false`) before six observations exist.
pub fn drift_forecast(mids: &[f64], k: usize) -> (f64, bool) {
    if k < 5 || k >= mids.len() {
        return (0.0, false);
    }
    ((mids[k] - mids[k - 5]) / 5.0, true)
}

/// Nearest-rank empirical quantile: the smallest value with at least a
/// fraction `q` of the sample at or below it.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakReport {
    pub days: Vec<u64>,
    pub err_cp_plus: Vec<f64>,
    pub err_cp_minus: Vec<f64>,
    pub err_pi11: Vec<f64>,
    pub q_cp_plus: f64,
    pub q_cp_minus: f64,
    pub q_pi11: f64,
    pub flag_cp: Vec<bool>,
    pub flag_pi11: Vec<bool>,
}

impl BreakReport {
    pub fn flagged_days(&self) -> Vec<u64> {
        self.days
            .iter()
            .zip(self.flag_cp.iter().zip(&self.flag_pi11))
            .filter(|(_, (a, b))| **a || **b)
            .map(|(d, _)| *d)
            .collect()
    }

    pub fn is_flagged(&self, day: u64) -> bool {
        self.days
            .iter()
            .position(|&d| d == day)
            .is_some_and(|i| self.flag_cp[i] || self.flag_pi11[i])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EstimationError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "day",
            "err_cp_plus",
            "err_cp_minus",
            "err_pi11",
            "flag_cp",
            "flag_pi11",
        ])?;
        for i in 0..self.days.len() {
            w.write_record([
                self.days[i].to_string(),
                self.err_cp_plus[i].to_string(),
                self.err_cp_minus[i].to_string(),
                self.err_pi11[i].to_string(),
                (self.flag_cp[i] as u8).to_string(),
                (self.flag_pi11[i] as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Flags days whose `mu_cp` was overestimated (either side) beyond the
/// `q`-quantile of its error series, or whose joint-arrival error exceeds the
/// `q`-quantile in absolute value. Ties at the quantile are not flagged.
pub fn structural_break_flags(
    days: &[u64],
    err_cp_plus: &[f64],
    err_cp_minus: &[f64],
    err_pi11: &[f64],
    q: f64,
) -> BreakReport {
    let abs_pi: Vec<f64> = err_pi11.iter().map(|e| e.abs()).collect();
    let (qp, qm, qj) = if days.is_empty() {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY)
    } else {
        (
            nearest_rank_quantile(err_cp_plus, q),
            nearest_rank_quantile(err_cp_minus, q),
            nearest_rank_quantile(&abs_pi, q),
        )
    };
    BreakReport {
        days: days.to_vec(),
        err_cp_plus: err_cp_plus.to_vec(),
        err_cp_minus: err_cp_minus.to_vec(),
        err_pi11: err_pi11.to_vec(),
        q_cp_plus: qp,
        q_cp_minus: qm,
        q_pi11: qj,
        flag_cp: err_cp_plus
            .iter()
            .zip(err_cp_minus)
            .map(|(a, b)| *a > qp || *b > qm)
            .collect(),
        flag_pi11: abs_pi.iter().map(|a| *a > qj).collect(),
    }
}

/// Rolling-window errors `mean(prior window) - day value` of `mu_cp` on each
/// side and of the joint-arrival rate, for every day with a full window.
pub fn break_errors(
    days: &[DayEstimates],
    window: usize,
) -> (Vec<u64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut ids = Vec::new();
    let (mut ep, mut em, mut ej) = (Vec::new(), Vec::new(), Vec::new());
    for i in window.max(1)..days.len() {
        let hist = &days[i - window..i];
        let w = window as f64;
        let mean = |f: &dyn Fn(&DayEstimates) -> f64| hist.iter().map(f).sum::<f64>() / w;
        let d = &days[i];
        ids.push(d.day);
        ep.push(mean(&|x| x.moments.plus.mu_cp) - d.moments.plus.mu_cp);
        em.push(mean(&|x| x.moments.minus.mu_cp) - d.moments.minus.mu_cp);
        ej.push(mean(&|x| x.joint_rate()) - d.joint_rate());
    }
    (ids, ep, em, ej)
}
