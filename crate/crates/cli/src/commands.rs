use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use lobmm::backtest::{
    break_report, compare_strategies, estimate_history, run_day_logged, run_pipeline,
    write_step_log, DayResult, DaySource, FileSource, PipelineConfig, SyntheticSource,
};
use lobmm::estimation::{rolling_params, BreakReport, DayEstimates};
use lobmm::lob::save_events;
use lobmm::model::{MarketParams, SideMoments};
use lobmm::simulator::{
    monte_carlo_value, run_path, OptimalPolicy, PriceModel, SideDemand, SimMarket, SyntheticDay,
};
use lobmm::solver::{backward_pass, optimal_spreads, value_function, MarketState};

use crate::config::{self, DataSection, FileConfig, DEFAULT_SEED};
use crate::{Cli, Command, Exit, Global};

/// Fully resolved settings shared by every command.
struct Run {
    file: FileConfig,
    seed: u64,
    out: PathBuf,
    lambda: Option<f64>,
}

impl Run {
    fn new(g: &Global) -> anyhow::Result<Self> {
        let mut file = config::load(g.config.as_deref())?;
        if let Some(w) = g.window {
            file.pipeline.window = w;
        }
        if let Some(p) = &g.policies {
            file.pipeline.policies = Some(p.clone());
        }
        if let Some(l) = g.lambda {
            file.pipeline.lambda = l;
        }
        if let Some(n) = g.workers.or(file.workers) {
            if n == 0 {
                return Err(Exit::Invalid("workers must be at least 1".into()).into());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()?;
        }
        let seed = g.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        let out = g
            .out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            file,
            seed,
            out,
            lambda: g.lambda,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        Ok(BufWriter::new(
            File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        ))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        serde_json::to_writer_pretty(self.create(name)?, value)?;
        Ok(())
    }

    fn pipeline(&self) -> anyhow::Result<PipelineConfig> {
        self.file.pipeline.to_config(self.seed)
    }

    /// Parameter file from the flag or the config, checked for validity.
    fn params(&self, flag: Option<&Path>) -> anyhow::Result<MarketParams> {
        let path = flag.or(self.file.params.as_deref()).ok_or_else(|| {
            Exit::Invalid("no parameter file given (--params or `params` in the config)".into())
        })?;
        config::require_file(path)?;
        let mut p = MarketParams::load(path).map_err(|e| Exit::Invalid(e.to_string()))?;
        if let Some(l) = self.lambda {
            p.lambda = l;
        }
        check_valid(&p)?;
        Ok(p)
    }

    fn source(&self, data: Option<&Path>) -> anyhow::Result<Box<dyn DaySource>> {
        let section = match (data, &self.file.data) {
            (None, None) => {
                let day = self.file.synthetic.build()?;
                return Ok(Box::new(SyntheticSource {
                    day,
                    seed: self.seed,
                    n_days: self.file.synthetic.days,
                }));
            }
            (Some(dir), Some(s)) => DataSection {
                dir: dir.to_path_buf(),
                ..s.clone()
            },
            (None, Some(s)) => s.clone(),
            (Some(_), None) => {
                return Err(Exit::Invalid(
                    "an event directory needs a [data] section with its grid and tick size".into(),
                )
                .into())
            }
        };
        config::require_file(&section.dir)?;
        let mut paths: Vec<PathBuf> = fs::read_dir(&section.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv" || x == "bin"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Exit::Empty(format!(
                "no .csv or .bin event files in {}",
                section.dir.display()
            ))
            .into());
        }
        Ok(Box::new(FileSource {
            paths,
            grid: section.grid(),
            tick_size: section.tick_size,
        }))
    }
}

fn check_valid(p: &MarketParams) -> anyhow::Result<()> {
    let report = p.validate();
    if report.is_valid() {
        return Ok(());
    }
    for v in report.iter() {
        eprintln!("  {v}");
    }
    Err(Exit::Invalid(format!("{} parameter violation(s)", report.len())).into())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let run = Run::new(&cli.global)?;
    match cli.command {
        Command::Solve { params } => solve(&run, params.as_deref()),
        Command::Simulate { params, paths } => simulate(&run, params.as_deref(), paths),
        Command::Generate { days, steps, csv } => generate(&run, days, steps, csv),
        Command::Estimate { data } => estimate(&run, data.as_deref()),
        Command::Backtest { data, step_logs } => backtest(&run, data.as_deref(), step_logs),
        Command::Report { results, breaks } => report(&run, &results, breaks.as_deref()),
    }
}

#[derive(Serialize)]
struct SurfaceRow {
    step: usize,
    pi_joint: f64,
    inventory: f64,
    l_plus: f64,
    l_minus: f64,
    spread: f64,
}

fn solve(run: &Run, params: Option<&Path>) -> anyhow::Result<()> {
    let p = run.params(params)?;
    let table = backward_pass(&p)?;
    table.write_csv(run.create("coefficients.csv")?)?;

    let s = &run.file.surface;
    let n = p.n_steps();
    let stride = s.stride.max(1);
    let steps: Vec<usize> = (0..n).filter(|k| k % stride == 0 || *k == n - 1).collect();
    let mut w = csv::Writer::from_writer(run.create("spread_surface.csv")?);
    for &pj in &s.pi_joint {
        let variant = p.clone().with_constant_joint(pj);
        if !variant.validate().is_valid() {
            log::warn!("pi_joint = {pj} is infeasible for these arrival rates; skipped");
            continue;
        }
        let t = backward_pass(&variant)?;
        for &k in &steps {
            for &inv in &s.inventory {
                let (l_plus, l_minus) = optimal_spreads(&t, k, inv);
                w.serialize(SurfaceRow {
                    step: k,
                    pi_joint: pj,
                    inventory: inv,
                    l_plus,
                    l_minus,
                    spread: l_plus + l_minus,
                })?;
            }
        }
    }
    w.flush()?;
    println!(
        "wrote {} and {}",
        run.path("coefficients.csv").display(),
        run.path("spread_surface.csv").display()
    );
    Ok(())
}

/// Point-mass demand when the moments are degenerate, otherwise independent
/// lognormal size and depth.
fn demand_for(m: &SideMoments) -> SideDemand {
    let var_c = m.mu_c2 - m.mu_c * m.mu_c;
    let mu_p = m.reservation_mean();
    let var_p = m.mu_p2.map_or(0.0, |p2| p2 - mu_p * mu_p);
    if var_c.abs() <= 1e-12 * m.mu_c2 && var_p.abs() <= 1e-12 * mu_p * mu_p {
        SideDemand::point_mass(m.mu_c, mu_p)
    } else {
        SideDemand::lognormal(m.mu_c, var_c, mu_p, var_p)
    }
}

#[derive(Serialize)]
struct SimSummary {
    seed: u64,
    n_paths: usize,
    mean: f64,
    /// Absent for a single path.
    std_error: Option<f64>,
    std_dev: f64,
    g0: f64,
    z_score: Option<f64>,
}

fn simulate(run: &Run, params: Option<&Path>, paths: Option<usize>) -> anyhow::Result<()> {
    let p = run.params(params)?;
    let sim = &run.file.simulation;
    let n_paths = paths.unwrap_or(sim.paths);
    if n_paths == 0 {
        return Err(Exit::Invalid("paths must be at least 1".into()).into());
    }
    let plus = demand_for(&p.moments.plus);
    let minus = demand_for(&p.moments.minus);
    let price = PriceModel::martingale(sim.s0, sim.innovation_std);
    let market = SimMarket::new(p.clone(), plus, minus, price, 1e-6)
        .map_err(|e| {
            Exit::Invalid(format!(
                "no simple demand law matches the parameter moments: {e}"
            ))
        })?
        .with_truncation(sim.truncate_fills);
    let table = backward_pass(&p)?;
    let policy = OptimalPolicy::martingale(&table);
    let est = monte_carlo_value(&policy, &market, n_paths, run.seed);
    let g0 = value_function(&table, &MarketState::initial(sim.s0));
    for i in 0..sim.episodes.min(n_paths) {
        let ep = run_path(&policy, &market, run.seed, i as u64);
        ep.write_csv(run.create(&format!("episodes/path_{i:05}.csv"))?)?;
    }
    let summary = SimSummary {
        seed: run.seed,
        n_paths,
        mean: est.mean,
        std_error: est.std_error,
        std_dev: est.std_dev,
        g0,
        z_score: est.z_score(g0),
    };
    run.write_json("summary.json", &summary)?;
    match summary.z_score {
        Some(z) => println!(
            "mean {:.6} se {:.6} g0 {:.6} z {:.3}",
            est.mean,
            est.std_error.unwrap_or(0.0),
            g0,
            z
        ),
        None => println!(
            "mean {:.6} g0 {:.6} (single path, no standard error)",
            est.mean, g0
        ),
    }
    Ok(())
}

fn generate(run: &Run, days: Option<usize>, steps: Option<usize>, csv: bool) -> anyhow::Result<()> {
    let mut syn = run.file.synthetic.clone();
    syn.days = days.unwrap_or(syn.days);
    syn.steps = steps.unwrap_or(syn.steps);
    let day: SyntheticDay = syn.build()?;
    let dir = run.path("events");
    fs::create_dir_all(&dir)?;
    let ext = if csv { "csv" } else { "bin" };
    (0..syn.days as u64)
        .into_par_iter()
        .try_for_each(|d| -> anyhow::Result<()> {
            let out = day.generate(run.seed, d)?;
            save_events(&out.events, &dir.join(format!("day_{d:04}.{ext}")))?;
            Ok(())
        })?;
    day.params(run.file.pipeline.lambda)
        .save(&run.path("params.toml"))?;
    let data = format!(
        "seed = {}\n\n[data]\ndir = {:?}\nsteps = {}\nstep_seconds = {}\nsession_start_ns = {}\ntick_size = 1.0\n",
        run.seed,
        dir.canonicalize()?.display().to_string(),
        day.grid.n_steps,
        day.grid.step_seconds,
        day.grid.session_start_ns,
    );
    fs::write(run.path("data.toml"), data)?;
    println!("wrote {} days to {}", syn.days, dir.display());
    Ok(())
}

#[derive(Serialize)]
struct DaySummary {
    day: u64,
    rate_plus: f64,
    rate_minus: f64,
    rate_joint: f64,
    valid_plus: usize,
    valid_minus: usize,
    mu_c_plus: f64,
    mu_p_plus: f64,
    mu_c_minus: f64,
    mu_p_minus: f64,
}

impl DaySummary {
    fn new(e: &DayEstimates) -> Self {
        let rate = |v: &[bool]| v.iter().filter(|&&b| b).count() as f64 / v.len().max(1) as f64;
        Self {
            day: e.day,
            rate_plus: rate(&e.ind_plus),
            rate_minus: rate(&e.ind_minus),
            rate_joint: e.joint_rate(),
            valid_plus: e.n_valid[0],
            valid_minus: e.n_valid[1],
            mu_c_plus: e.moments.plus.mu_c,
            mu_p_plus: e.moments.plus.reservation_mean(),
            mu_c_minus: e.moments.minus.mu_c,
            mu_p_minus: e.moments.minus.reservation_mean(),
        }
    }
}

fn write_failures(run: &Run, failures: &[(u64, String)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(run.create("failures.csv")?);
    w.write_record(["day", "error"])?;
    for (d, e) in failures {
        w.write_record([d.to_string(), e.clone()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_breaks(run: &Run, breaks: &BreakReport) -> anyhow::Result<()> {
    breaks.write_csv(run.create("breaks.csv")?)?;
    run.write_json("breaks.json", breaks)
}

fn estimate(run: &Run, data: Option<&Path>) -> anyhow::Result<()> {
    let cfg = run.pipeline()?;
    let source = run.source(data)?;
    let (estimates, failures) = estimate_history(source.as_ref(), &cfg);
    write_failures(run, &failures)?;
    if estimates.is_empty() {
        anyhow::bail!("no day could be estimated ({} failures)", failures.len());
    }
    let mut w = csv::Writer::from_writer(run.create("estimates.csv")?);
    for e in &estimates {
        w.serialize(DaySummary::new(e))?;
    }
    w.flush()?;
    write_breaks(run, &break_report(&estimates, &cfg))?;

    fs::create_dir_all(run.path("params"))?;
    let mut written = 0;
    for j in cfg.window..=estimates.len() {
        let label = estimates
            .get(j)
            .map_or_else(|| "next".to_string(), |e| format!("{:04}", e.day));
        match rolling_params(
            j,
            cfg.window,
            &estimates,
            source.grid(),
            cfg.lambda,
            source.tick_size(),
        ) {
            Ok((p, _)) => {
                p.save(&run.path(&format!("params/day_{label}.toml")))?;
                written += 1;
            }
            Err(e) => log::warn!("no parameters for day {label}: {e}"),
        }
    }
    println!(
        "estimated {} days ({} failed); wrote {written} rolling parameter files",
        estimates.len(),
        failures.len()
    );
    Ok(())
}

fn write_results(run: &Run, results: &[DayResult]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(run.create("day_results.csv")?);
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    run.write_json("day_results.json", &results)
}

fn backtest(run: &Run, data: Option<&Path>, step_logs: bool) -> anyhow::Result<()> {
    let cfg = run.pipeline()?;
    let source = run.source(data)?;
    let out = run_pipeline(source.as_ref(), &cfg).map_err(|e| match e {
        lobmm::BacktestError::InsufficientDays { .. } => {
            anyhow::Error::from(Exit::Invalid(e.to_string()))
        }
        e => e.into(),
    })?;
    write_failures(run, &out.failures)?;
    if out.results.is_empty() {
        anyhow::bail!(
            "every backtest day failed ({} failures)",
            out.failures.len()
        );
    }
    write_results(run, &out.results)?;
    write_breaks(run, &out.breaks)?;
    out.report.write_csv(run.create("report.csv")?)?;
    out.report.write_json(run.create("report.json")?)?;
    if step_logs {
        write_first_day_logs(run, source.as_ref(), &cfg, &out.estimates)?;
    }
    print_report(&out.report.rows);
    Ok(())
}

fn write_first_day_logs(
    run: &Run,
    source: &dyn DaySource,
    cfg: &PipelineConfig,
    estimates: &[DayEstimates],
) -> anyhow::Result<()> {
    let j = cfg.window;
    let Some(target) = estimates.get(j) else {
        return Ok(());
    };
    let i = (0..source.n_days())
        .find(|&i| source.day_id(i) == target.day)
        .expect("estimated day comes from the source");
    let (p, _) = rolling_params(
        j,
        cfg.window,
        estimates,
        source.grid(),
        cfg.lambda,
        source.tick_size(),
    )?;
    let table = backward_pass(&p)?;
    let data = source.load(i, cfg.k_levels)?;
    for policy in &cfg.policies {
        let (_, log) = run_day_logged(&data, policy, Some(&table), cfg.lambda, cfg.max_gap_ns)?;
        write_step_log(
            &log,
            run.create(&format!(
                "step_logs/day_{:04}_{}.csv",
                target.day,
                policy.name()
            ))?,
        )?;
    }
    Ok(())
}

fn print_report(rows: &[lobmm::backtest::ReportRow]) {
    println!(
        "{:<20} {:>16} {:>16} {:>6}",
        "policy", "mean objective", "std", "days"
    );
    for r in rows
        .iter()
        .filter(|r| r.metric == "objective" && r.subset == "all")
    {
        println!(
            "{:<20} {:>16.2} {:>16.2} {:>6}",
            r.policy, r.mean, r.std, r.n_days
        );
    }
}

fn report(run: &Run, results: &Path, breaks: Option<&Path>) -> anyhow::Result<()> {
    config::require_file(results)?;
    let text = fs::read_to_string(results)?;
    let results: Vec<DayResult> = serde_json::from_str(&text)
        .map_err(|e| Exit::Invalid(format!("{}: {e}", results.display())))?;
    if results.is_empty() {
        return Err(Exit::Empty("the results file has no days".into()).into());
    }
    let breaks: Option<BreakReport> = match breaks {
        Some(path) => {
            config::require_file(path)?;
            let text = fs::read_to_string(path)?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| Exit::Invalid(format!("{}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    let names: Vec<String> = match &run.file.pipeline.policies {
        Some(list) => config::parse_policies(list)?
            .iter()
            .map(|p| p.name())
            .collect(),
        None => {
            let mut seen = Vec::new();
            for r in &results {
                if !seen.contains(&r.policy) {
                    seen.push(r.policy.clone());
                }
            }
            seen
        }
    };
    let rep = compare_strategies(
        &results,
        &names,
        breaks.as_ref(),
        &run.pipeline()?.bootstrap,
    );
    if rep.rows.is_empty() {
        return Err(Exit::Empty("no complete days for the requested policies".into()).into());
    }
    rep.write_csv(run.create("report.csv")?)?;
    rep.write_json(run.create("report.json")?)?;
    print_report(&rep.rows);
    Ok(())
}
