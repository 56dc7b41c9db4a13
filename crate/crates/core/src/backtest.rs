//! Event-replay backtests of quoting policies and the rolling
//! calibrate-solve-trade pipeline over a history of days.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::BacktestError;
use crate::estimation::{
    break_errors, drift_forecast, estimate_day, mid_series, rolling_params, structural_break_flags,
    BreakReport, DayEstimates, EstimationConfig,
};
use crate::lob::{
    fill_quantity, liquidate, load_events, replay_intervals, BookEvent, Replay, Side,
};
use crate::model::TimeGrid;
use crate::simulator::SyntheticDay;
use crate::solver::{
    backward_pass, optimal_spreads, optimal_spreads_with_forecasts, quote_ticks, CoefficientTable,
    ForecastVector,
};

pub const DEFAULT_ORDER_VOLUME: u64 = 500;
pub const DEFAULT_LAMBDA: f64 = 0.0005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    OptimalMartingale,
    OptimalForecast,
    /// Quote at the given occupied level (1 = touch) on each side.
    FixedLevel(usize),
    /// Martingale quotes from a caller-supplied coefficient table.
    CustomTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    pub order_volume: u64,
    pub min_spread_ticks: u32,
}

impl Policy {
    fn with_kind(kind: PolicyKind) -> Self {
        Self {
            kind,
            order_volume: DEFAULT_ORDER_VOLUME,
            min_spread_ticks: 1,
        }
    }

    pub fn optimal_martingale() -> Self {
        Self::with_kind(PolicyKind::OptimalMartingale)
    }

    pub fn optimal_forecast() -> Self {
        Self::with_kind(PolicyKind::OptimalForecast)
    }

    pub fn custom_table() -> Self {
        Self::with_kind(PolicyKind::CustomTable)
    }

    pub fn fixed_level(level: usize) -> Result<Self, BacktestError> {
        if level == 0 {
            return Err(BacktestError::InvalidPolicy(
                "fixed level must be at least 1".into(),
            ));
        }
        Ok(Self::with_kind(PolicyKind::FixedLevel(level)))
    }

    pub fn needs_table(&self) -> bool {
        !matches!(self.kind, PolicyKind::FixedLevel(_))
    }

    pub fn name(&self) -> String {
        match self.kind {
            PolicyKind::OptimalMartingale => "optimal_martingale".into(),
            PolicyKind::OptimalForecast => "optimal_forecast".into(),
            PolicyKind::FixedLevel(l) => format!("level_{l}"),
            PolicyKind::CustomTable => "custom_table".into(),
        }
    }

    /// Parses `optimal_martingale`, `optimal_forecast`, `custom_table` or `level_<n>`.
    pub fn parse(name: &str) -> Result<Self, BacktestError> {
        match name.trim() {
            "optimal_martingale" => Ok(Self::optimal_martingale()),
            "optimal_forecast" => Ok(Self::optimal_forecast()),
            "custom_table" => Ok(Self::custom_table()),
            other => other
                .strip_prefix("level_")
                .and_then(|l| l.parse().ok())
                .ok_or_else(|| BacktestError::InvalidPolicy(format!("unknown policy {other:?}")))
                .and_then(Self::fixed_level),
        }
    }

    /// The two optimal policies followed by fixed levels 1 through 6.
    pub fn standard_set() -> Vec<Self> {
        let mut v = vec![Self::optimal_forecast(), Self::optimal_martingale()];
        v.extend((1..=6).map(|l| Self::with_kind(PolicyKind::FixedLevel(l))));
        v
    }
}

/// One replayed day with its midprice path in currency.
#[derive(Debug, Clone)]
pub struct DayData {
    pub day: u64,
    pub replay: Replay,
    pub mids: Vec<f64>,
    pub tick_size: f64,
}

impl DayData {
    pub fn from_events(
        day: u64,
        events: &[BookEvent],
        grid: &TimeGrid,
        tick_size: f64,
        k_levels: usize,
    ) -> Result<Self, BacktestError> {
        let replay = replay_intervals(events, grid, k_levels)?;
        let (mids, _) = mid_series(&replay.snapshots, tick_size)?;
        Ok(Self {
            day,
            replay,
            mids,
            tick_size,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.replay.flows.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub mid: f64,
    pub ask_ticks: i64,
    pub bid_ticks: i64,
    pub filled_ask: u64,
    pub filled_bid: u64,
    pub cash: f64,
    pub inventory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub day: u64,
    pub policy: String,
    pub w_t: f64,
    pub i_t: f64,
    pub s_t: f64,
    pub lambda: f64,
    /// `W_T + S_T I_T - lambda I_T^2`.
    pub objective: f64,
    /// `W_T + avg_liquidation_price * I_T`.
    pub liquidation_value: f64,
    pub fills: u64,
    pub shares_filled: u64,
    /// False when the stream had a gap above the configured threshold.
    pub complete: bool,
    pub level_fallbacks: u64,
    pub clamped_quotes: u64,
    pub insufficient_depth: bool,
}

/// Replays `policy` over one day. Optimal kinds need `table`, whose grid must
/// match the day.
pub fn run_day(
    data: &DayData,
    policy: &Policy,
    table: Option<&CoefficientTable>,
    lambda: f64,
    max_gap_ns: Option<i64>,
) -> Result<DayResult, BacktestError> {
    run_day_inner(data, policy, table, lambda, max_gap_ns, None)
}

/// [`run_day`] that also returns the per-step log.
pub fn run_day_logged(
    data: &DayData,
    policy: &Policy,
    table: Option<&CoefficientTable>,
    lambda: f64,
    max_gap_ns: Option<i64>,
) -> Result<(DayResult, Vec<StepRecord>), BacktestError> {
    let mut log = Vec::with_capacity(data.n_steps());
    let r = run_day_inner(data, policy, table, lambda, max_gap_ns, Some(&mut log))?;
    Ok((r, log))
}

fn run_day_inner(
    data: &DayData,
    policy: &Policy,
    table: Option<&CoefficientTable>,
    lambda: f64,
    max_gap_ns: Option<i64>,
    mut log: Option<&mut Vec<StepRecord>>,
) -> Result<DayResult, BacktestError> {
    let n = data.n_steps();
    let tick = data.tick_size;
    let table = match (policy.needs_table(), table) {
        (true, None) => return Err(BacktestError::MissingTable(policy.name())),
        (true, Some(t)) if t.n_steps() != n => {
            return Err(BacktestError::InvalidPolicy(format!(
                "coefficient table has {} steps, day has {n}",
                t.n_steps()
            )))
        }
        (_, t) => t,
    };
    let min = policy.min_spread_ticks.max(1) as i64;
    let (mut w, mut inv) = (0.0f64, 0.0f64);
    let (mut fills, mut shares, mut fallbacks, mut clamped) = (0u64, 0u64, 0u64, 0u64);

    for k in 0..n {
        let snap = &data.replay.snapshots[k];
        let flow = &data.replay.flows[k];
        let s = data.mids[k];
        let mid_ticks = snap.mid_ticks.unwrap_or(s / tick);
        let quotes = match policy.kind {
            PolicyKind::FixedLevel(level) => {
                let pick = |side: Side| {
                    let ladder = snap.book.side(side);
                    let l = ladder.get(level - 1).or(ladder.last())?;
                    Some((l.price as i64, ladder.len() < level))
                };
                match (pick(Side::Ask), pick(Side::Bid)) {
                    (Some((a, fa)), Some((b, fb))) => {
                        fallbacks += fa as u64 + fb as u64;
                        Some((a, b))
                    }
                    _ => None,
                }
            }
            _ => {
                let t = table.expect("checked above");
                let (lp, lm) = match policy.kind {
                    PolicyKind::OptimalForecast => {
                        let (d, _) = drift_forecast(&data.mids, k);
                        optimal_spreads_with_forecasts(t, k, inv, &ForecastVector::single(d))
                    }
                    _ => optimal_spreads(t, k, inv),
                };
                let (a, b) = quote_ticks(s, lp, lm, tick);
                let (a_min, b_max) = (
                    mid_ticks.floor() as i64 + min,
                    mid_ticks.ceil() as i64 - min,
                );
                clamped += (a < a_min) as u64 + (b > b_max) as u64;
                Some((a.max(a_min), b.min(b_max)))
            }
        };
        let (ask, bid) = quotes.unwrap_or((i64::MAX, i64::MIN));
        let qa = if ask > 0 && ask <= u32::MAX as i64 {
            fill_quantity(ask as u32, policy.order_volume, Side::Ask, flow)
        } else {
            0
        };
        let qb = if bid > 0 && bid <= u32::MAX as i64 {
            fill_quantity(bid as u32, policy.order_volume, Side::Bid, flow)
        } else {
            0
        };
        if qa > 0 {
            w += ask as f64 * tick * qa as f64;
            inv -= qa as f64;
            fills += 1;
        }
        if qb > 0 {
            w -= bid as f64 * tick * qb as f64;
            inv += qb as f64;
            fills += 1;
        }
        shares += qa + qb;
        if let Some(log) = log.as_deref_mut() {
            log.push(StepRecord {
                step: k,
                mid: s,
                ask_ticks: ask,
                bid_ticks: bid,
                filled_ask: qa,
                filled_bid: qb,
                cash: w,
                inventory: inv,
            });
        }
    }

    let s_t = data.mids[n];
    let liq = liquidate(&data.replay.snapshots[n].book, inv, tick)?;
    Ok(DayResult {
        day: data.day,
        policy: policy.name(),
        w_t: w,
        i_t: inv,
        s_t,
        lambda,
        objective: w + s_t * inv - lambda * inv * inv,
        liquidation_value: w + liq.proceeds,
        fills,
        shares_filled: shares,
        complete: max_gap_ns.is_none_or(|g| data.replay.max_gap_ns <= g),
        level_fallbacks: fallbacks,
        clamped_quotes: clamped,
        insufficient_depth: liq.insufficient_depth,
    })
}

pub fn write_step_log<W: Write>(log: &[StepRecord], out: W) -> Result<(), BacktestError> {
    let mut w = csv::Writer::from_writer(out);
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub count: usize,
    pub single: bool,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Aggregate {
        mean,
        std,
        count: n,
        single: n == 1,
    })
}

fn z_value(level: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(0.5 + level / 2.0)
}

/// `mean -+ z * std / sqrt(n)`.
pub fn normal_ci(values: &[f64], level: f64) -> Option<(f64, f64)> {
    let a = aggregate(values)?;
    let half = z_value(level) * a.std / (a.count as f64).sqrt();
    Some((a.mean - half, a.mean + half))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub level: f64,
    /// Subsample size; `floor(n^(2/3))` when absent.
    pub m: Option<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            level: 0.95,
            m: None,
            replicates: 2000,
            seed: 20_190_101,
        }
    }
}

pub fn default_subsample_size(n: usize) -> usize {
    ((n as f64).powf(2.0 / 3.0).floor() as usize).max(1)
}

/// Subsampling confidence interval for the mean: quantiles of recentered
/// subsample means (drawn without replacement), rescaled by
/// `sqrt(m / (1 - m/n)) / sqrt(n)`. Requires `n >= 5` and `1 <= m < n`.
pub fn subsample_bootstrap_ci(
    values: &[f64],
    level: f64,
    m: usize,
    replicates: usize,
    seed: u64,
) -> Option<(f64, f64)> {
    let n = values.len();
    if n < 5 || m == 0 || m >= n || replicates == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roots: Vec<f64> = (0..replicates)
        .map(|_| {
            let s: f64 = sample(&mut rng, n, m).iter().map(|i| values[i]).sum();
            s / m as f64 - mean
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let idx = ((p * replicates as f64).ceil() as usize).clamp(1, replicates) - 1;
        roots[idx]
    };
    let alpha = 1.0 - level;
    let scale = (m as f64 / (1.0 - m as f64 / n as f64)).sqrt() / (n as f64).sqrt();
    Some((
        mean - scale * q(1.0 - alpha / 2.0),
        mean - scale * q(alpha / 2.0),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub policy: String,
    pub metric: String,
    /// `all` or `excluding_breaks`.
    pub subset: String,
    pub mean: f64,
    pub std: f64,
    pub ci_normal_lo: f64,
    pub ci_normal_hi: f64,
    pub ci_boot_lo: Option<f64>,
    pub ci_boot_hi: Option<f64>,
    pub n_days: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn row(&self, policy: &str, metric: &str, subset: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.policy == policy && r.metric == metric && r.subset == subset)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BacktestError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<(), BacktestError> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Per-policy aggregates of complete days, with and without days flagged by
/// `breaks`. Policies appear in the order given.
pub fn compare_strategies(
    results: &[DayResult],
    policies: &[String],
    breaks: Option<&BreakReport>,
    boot: &BootstrapConfig,
) -> Report {
    let mut rows = Vec::new();
    for policy in policies {
        let days: Vec<&DayResult> = results
            .iter()
            .filter(|r| &r.policy == policy && r.complete)
            .collect();
        let incomplete = results
            .iter()
            .filter(|r| &r.policy == policy && !r.complete)
            .count();
        let subsets: Vec<(&str, Vec<&DayResult>)> = {
            let mut v = vec![("all", days.clone())];
            if let Some(b) = breaks {
                v.push((
                    "excluding_breaks",
                    days.iter()
                        .copied()
                        .filter(|r| !b.is_flagged(r.day))
                        .collect(),
                ));
            }
            v
        };
        for (subset, members) in subsets {
            let excluded = days.len() - members.len() + incomplete;
            for metric in ["objective", "liquidation_value"] {
                let values: Vec<f64> = members
                    .iter()
                    .map(|r| {
                        if metric == "objective" {
                            r.objective
                        } else {
                            r.liquidation_value
                        }
                    })
                    .collect();
                let Some(a) = aggregate(&values) else {
                    continue;
                };
                let (lo, hi) = normal_ci(&values, boot.level).unwrap_or((a.mean, a.mean));
                let m = boot
                    .m
                    .unwrap_or_else(|| default_subsample_size(values.len()));
                let ci = subsample_bootstrap_ci(&values, boot.level, m, boot.replicates, boot.seed);
                rows.push(ReportRow {
                    policy: policy.clone(),
                    metric: metric.into(),
                    subset: subset.into(),
                    mean: a.mean,
                    std: a.std,
                    ci_normal_lo: lo,
                    ci_normal_hi: hi,
                    ci_boot_lo: ci.map(|c| c.0),
                    ci_boot_hi: ci.map(|c| c.1),
                    n_days: a.count,
                    n_excluded: excluded,
                });
            }
        }
    }
    Report { rows }
}

/// A history of trading days.
pub trait DaySource: Sync {
    fn n_days(&self) -> usize;
    fn day_id(&self, i: usize) -> u64;
    fn grid(&self) -> &TimeGrid;
    fn tick_size(&self) -> f64;
    fn events(&self, i: usize) -> Result<Vec<BookEvent>, BacktestError>;

    fn load(&self, i: usize, k_levels: usize) -> Result<DayData, BacktestError> {
        DayData::from_events(
            self.day_id(i),
            &self.events(i)?,
            self.grid(),
            self.tick_size(),
            k_levels,
        )
    }
}

/// Days drawn from a synthetic generator; day `i` uses stream `i` of `seed`.
pub struct SyntheticSource {
    pub day: SyntheticDay,
    pub seed: u64,
    pub n_days: usize,
}

impl DaySource for SyntheticSource {
    fn n_days(&self) -> usize {
        self.n_days
    }

    fn day_id(&self, i: usize) -> u64 {
        i as u64
    }

    fn grid(&self) -> &TimeGrid {
        &self.day.grid
    }

    fn tick_size(&self) -> f64 {
        1.0
    }

    fn events(&self, i: usize) -> Result<Vec<BookEvent>, BacktestError> {
        Ok(self.day.generate(self.seed, i as u64)?.events)
    }
}

/// One event file per day, timestamps in nanoseconds after midnight.
pub struct FileSource {
    pub paths: Vec<PathBuf>,
    pub grid: TimeGrid,
    pub tick_size: f64,
}

impl DaySource for FileSource {
    fn n_days(&self) -> usize {
        self.paths.len()
    }

    fn day_id(&self, i: usize) -> u64 {
        i as u64
    }

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn tick_size(&self) -> f64 {
        self.tick_size
    }

    fn events(&self, i: usize) -> Result<Vec<BookEvent>, BacktestError> {
        Ok(load_events(&self.paths[i])?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window: usize,
    pub lambda: f64,
    pub policies: Vec<Policy>,
    pub estimation: EstimationConfig,
    pub k_levels: usize,
    pub max_gap_ns: Option<i64>,
    pub break_quantile: f64,
    pub bootstrap: BootstrapConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: 20,
            lambda: DEFAULT_LAMBDA,
            policies: Policy::standard_set(),
            estimation: EstimationConfig::default(),
            k_levels: 20,
            max_gap_ns: None,
            break_quantile: 0.95,
            bootstrap: BootstrapConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Daily estimates without per-interval regressions, in day order.
    pub estimates: Vec<DayEstimates>,
    pub results: Vec<DayResult>,
    pub breaks: BreakReport,
    pub report: Report,
    /// `(day, error)` for days that could not be processed.
    pub failures: Vec<(u64, String)>,
}

/// Daily estimates (without per-interval regressions) of every loadable day,
/// in day order, plus `(day, error)` for the rest.
pub fn estimate_history<S: DaySource + ?Sized>(
    source: &S,
    cfg: &PipelineConfig,
) -> (Vec<DayEstimates>, Vec<(u64, String)>) {
    let tick = source.tick_size();
    let staged: Vec<Result<DayEstimates, (u64, String)>> = (0..source.n_days())
        .into_par_iter()
        .map(|i| {
            let fail = |e: BacktestError| (source.day_id(i), e.to_string());
            let data = source.load(i, cfg.k_levels).map_err(fail)?;
            let mut est = estimate_day(data.day, &data.replay, tick, &cfg.estimation)
                .map_err(|e| fail(e.into()))?;
            est.demand = Vec::new();
            Ok(est)
        })
        .collect();
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for s in staged {
        match s {
            Ok(e) => estimates.push(e),
            Err(f) => {
                log::warn!("day {} skipped: {}", f.0, f.1);
                failures.push(f);
            }
        }
    }
    (estimates, failures)
}

/// Structural-break screening of an estimate history.
pub fn break_report(estimates: &[DayEstimates], cfg: &PipelineConfig) -> BreakReport {
    let (ids, ep, em, ej) = break_errors(estimates, cfg.window);
    structural_break_flags(&ids, &ep, &em, &ej, cfg.break_quantile)
}

/// Estimates every day, then backtests each day with a full window of prior
/// estimates using parameters rolled from that window. Days are processed in
/// parallel on the current rayon pool; results are ordered by day.
pub fn run_pipeline<S: DaySource + ?Sized>(
    source: &S,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, BacktestError> {
    let tick = source.tick_size();
    let (estimates, mut failures) = estimate_history(source, cfg);
    if estimates.len() <= cfg.window {
        return Err(BacktestError::InsufficientDays {
            have: estimates.len(),
            window: cfg.window,
        });
    }
    // estimates carry the source day id; map back to source indices
    let index: Vec<usize> = {
        let ids: Vec<u64> = (0..source.n_days()).map(|i| source.day_id(i)).collect();
        estimates
            .iter()
            .map(|e| {
                ids.iter()
                    .position(|&d| d == e.day)
                    .expect("estimated day comes from the source")
            })
            .collect()
    };

    let per_day: Vec<Result<Vec<DayResult>, (u64, String)>> = (cfg.window..estimates.len())
        .into_par_iter()
        .map(|j| {
            let i = index[j];
            let fail = |e: BacktestError| (source.day_id(i), e.to_string());
            let (params, _) =
                rolling_params(j, cfg.window, &estimates, source.grid(), cfg.lambda, tick)
                    .map_err(|e| fail(e.into()))?;
            let table = if cfg.policies.iter().any(Policy::needs_table) {
                Some(backward_pass(&params).map_err(|e| fail(e.into()))?)
            } else {
                None
            };
            let data = source.load(i, cfg.k_levels).map_err(fail)?;
            cfg.policies
                .iter()
                .map(|p| {
                    run_day(&data, p, table.as_ref(), cfg.lambda, cfg.max_gap_ns).map_err(fail)
                })
                .collect()
        })
        .collect();
    let mut results = Vec::new();
    for r in per_day {
        match r {
            Ok(v) => results.extend(v),
            Err(f) => {
                log::warn!("day {} not backtested: {}", f.0, f.1);
                failures.push(f);
            }
        }
    }

    let breaks = break_report(&estimates, cfg);
    let names: Vec<String> = cfg.policies.iter().map(Policy::name).collect();
    let report = compare_strategies(&results, &names, Some(&breaks), &cfg.bootstrap);
    Ok(PipelineOutput {
        estimates,
        results,
        breaks,
        report,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lob::{BookEvent, EventKind};

    fn quiet_day() -> DayData {
        let grid = TimeGrid::new(10, 1.0);
        let mut ev = Vec::new();
        for j in 0..4u32 {
            ev.push(BookEvent::new(
                -1,
                EventKind::Add,
                Side::Bid,
                10000 - j,
                100,
                2 * j as u64 + 1,
            ));
            ev.push(BookEvent::new(
                -1,
                EventKind::Add,
                Side::Ask,
                10001 + j,
                100,
                2 * j as u64 + 2,
            ));
        }
        DayData::from_events(0, &ev, &grid, 0.01, 10).unwrap()
    }

    #[test]
    fn zero_flow_day_is_flat() {
        let d = quiet_day();
        for l in 1..=6 {
            let r = run_day(&d, &Policy::fixed_level(l).unwrap(), None, 0.0005, None).unwrap();
            assert_eq!((r.w_t, r.i_t, r.objective), (0.0, 0.0, 0.0));
            assert_eq!(r.level_fallbacks, if l > 4 { 20 } else { 0 });
        }
        assert!(matches!(
            run_day(&d, &Policy::optimal_martingale(), None, 0.0005, None),
            Err(BacktestError::MissingTable(_))
        ));
    }

    #[test]
    fn single_fill_arithmetic() {
        let grid = TimeGrid::new(2, 1.0);
        let ev = vec![
            BookEvent::new(-1, EventKind::Add, Side::Bid, 10000, 100, 1),
            BookEvent::new(-1, EventKind::Add, Side::Ask, 10001, 200, 2),
            BookEvent::new(-1, EventKind::Add, Side::Ask, 10002, 1000, 3),
            BookEvent::new(1_500_000_000, EventKind::Execute, Side::Ask, 10001, 200, 2),
            BookEvent::new(1_500_000_000, EventKind::Execute, Side::Ask, 10002, 400, 3),
        ];
        let d = DayData::from_events(0, &ev, &grid, 0.01, 10).unwrap();
        // level 2 before the order: ask at 100.02 behind 200 better-priced shares
        let r = run_day(&d, &Policy::fixed_level(2).unwrap(), None, 0.0, None).unwrap();
        assert_eq!(r.i_t, -400.0);
        assert!((r.w_t - 400.0 * 100.02).abs() < 1e-9);
        assert_eq!(r.fills, 1);
    }

    #[test]
    fn fixed_level_uses_occupied_levels() {
        let grid = TimeGrid::new(1, 1.0);
        let ev = vec![
            BookEvent::new(-1, EventKind::Add, Side::Bid, 10000, 100, 1),
            BookEvent::new(-1, EventKind::Add, Side::Ask, 10001, 100, 2),
            BookEvent::new(-1, EventKind::Add, Side::Ask, 10002, 100, 3),
            BookEvent::new(-1, EventKind::Add, Side::Ask, 10005, 100, 4),
        ];
        let d = DayData::from_events(0, &ev, &grid, 0.01, 10).unwrap();
        let (_, log) =
            run_day_logged(&d, &Policy::fixed_level(3).unwrap(), None, 0.0, None).unwrap();
        assert_eq!(log[0].ask_ticks, 10005);
        assert_eq!(log[0].bid_ticks, 10000);
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate(&[5.0]).unwrap();
        assert_eq!((a.mean, a.std, a.single), (5.0, 0.0, true));
        let a = aggregate(&[1.0, 3.0]).unwrap();
        assert_eq!(a.mean, 2.0);
        assert!((a.std - 2f64.sqrt()).abs() < 1e-15);
        assert!(aggregate(&[]).is_none());
    }

    #[test]
    fn bootstrap_collapses_on_constant_data() {
        let v = vec![3.5; 40];
        assert_eq!(
            subsample_bootstrap_ci(&v, 0.95, 11, 500, 1),
            Some((3.5, 3.5))
        );
        assert!(subsample_bootstrap_ci(&v[..4], 0.95, 2, 500, 1).is_none());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::standard_set() {
            assert_eq!(Policy::parse(&p.name()).unwrap(), p);
        }
        assert!(Policy::parse("level_0").is_err());
        assert!(Policy::parse("best").is_err());
    }
}
