use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use volcast::evaluate::{compare, directional_accuracy, quartile_metrics, DIRECTIONAL_HORIZONS};
use volcast::experiment::{run_sweep, sensitivity_scenarios, ExperimentConfig, LoadedData};
use volcast::explain::{discretize_stats, explain_instance, flatten, flatten_names, ExplainerConfig};
use volcast::garch::{adf_test, conditional_variance, GarchEstimator};
use volcast::kv::KvRecord;
use volcast::neural::SearchSpace;
use volcast::pipeline::{
    align_runs, build_tables, tune, variant_seed, walk_forward, FeatureTable, ModelVariant, WalkForwardRun, WindowModel,
};
use volcast::timeseries::{descriptive_stats, inner_join, log_returns, DatedSeries, PriceSeries, SkippedRow};
use volcast::Error;

use crate::manifest::{self, sha256_file};
use crate::{Cli, Command, Global};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

fn lib_exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numeric() => 3,
        Error::Window { source, .. } | Error::ModelFailure { source, .. } => lib_exit_code(source),
        Error::Parse(_) | Error::InvalidParameter(_) => 1,
        _ => 2,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Lib(e) => lib_exit_code(e),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    fs::create_dir_all(&g.out).map_err(|e| Error::Io { path: g.out.clone(), source: e })?;
    match &cli.command {
        Command::Ingest => ingest(g, &cfg),
        Command::FitGarch { p_max, q_max } => fit_garch(g, &cfg, *p_max, *q_max),
        Command::Backtest { variants } => backtest(g, &cfg, variants),
        Command::Evaluate { run } => evaluate(g, run),
        Command::Compare { run, challenger } => compare_runs(g, run, *challenger),
        Command::Explain { run, variant, date, samples, features, kernel_width } => {
            let ec = ExplainerConfig {
                num_samples: *samples,
                kernel_width: *kernel_width,
                num_features: *features,
                seed: cfg.seed,
            };
            explain(g, run, *variant, date, &ec)
        }
        Command::Sweep => sweep(g, &cfg),
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::read(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(p) = &g.profile {
        cfg.set_profile(p)?;
    }
    if let Some(s) = g.garch_refit_stride {
        cfg.set_override("garch.refit_stride", s)?;
    }
    if let Some(p) = &g.sp500 {
        cfg.data.sp500 = p.clone();
    }
    if let Some(p) = &g.vix {
        cfg.data.vix = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Lib(Error::Io { path: path.to_path_buf(), source: e })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_skipped(path: &Path, rows: &[(&str, &SkippedRow)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["file", "line", "reason"]).map_err(Error::from)?;
    for (file, s) in rows {
        w.write_record([file.to_string(), s.line.to_string(), s.reason.clone()]).map_err(Error::from)?;
    }
    w.flush().map_err(io_err(path))
}

/// Loads prices; skipped rows are logged, or fatal under `--strict`.
fn load_data(g: &Global, cfg: &ExperimentConfig) -> Result<LoadedData> {
    let d = cfg.data.load()?;
    let skipped = d.skipped_sp500.len() + d.skipped_vix.len();
    for (name, rows) in [("S&P 500", &d.skipped_sp500), ("VIX", &d.skipped_vix)] {
        if !rows.is_empty() {
            log::warn!("skipped {} malformed {name} rows (first at line {})", rows.len(), rows[0].line);
        }
        for s in rows.iter() {
            log::info!("{name} line {}: {}", s.line, s.reason);
        }
    }
    if g.strict && skipped > 0 {
        return Err(CliError::Data(format!("{skipped} malformed input rows; rerun without --strict to skip them")));
    }
    Ok(d)
}

fn to_dated(p: &PriceSeries) -> DatedSeries {
    DatedSeries { dates: p.dates().to_vec(), values: p.close().to_vec() }
}

fn ingest(g: &Global, cfg: &ExperimentConfig) -> Result<()> {
    let d = cfg.data.load()?;
    let mut skipped: Vec<(&str, &SkippedRow)> = d.skipped_sp500.iter().map(|s| ("sp500", s)).collect();
    skipped.extend(d.skipped_vix.iter().map(|s| ("vix", s)));
    write_skipped(&g.out.join("skipped.csv"), &skipped)?;

    let sp = to_dated(&d.market.sp500);
    let (dates, columns, names, join_dropped) = match &d.market.vix {
        Some(v) => {
            let a = inner_join(&sp, &to_dated(v));
            (a.dates, vec![a.left, a.right], vec!["sp500_close", "vix_close"], a.dropped)
        }
        None => (sp.dates, vec![sp.values], vec!["sp500_close"], 0),
    };
    let path = g.out.join("dataset.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    let mut header = vec!["date"];
    header.extend(&names);
    w.write_record(&header).map_err(Error::from)?;
    for (i, day) in dates.iter().enumerate() {
        let mut rec = vec![day.to_string()];
        rec.extend(columns.iter().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush().map_err(io_err(&path))?;

    let mut m = manifest::manifest("ingest", cfg)?;
    m.set("rows", dates.len());
    m.set("skipped.sp500", d.skipped_sp500.len());
    m.set("skipped.vix", d.skipped_vix.len());
    m.set("join_dropped", join_dropped);
    if let (Some(a), Some(b)) = (dates.first(), dates.last()) {
        m.set("first_date", a);
        m.set("last_date", b);
    }
    manifest::write(&m, &g.out)?;
    println!(
        "{} rows ({} to {})",
        dates.len(),
        dates.first().map_or(String::new(), |d| d.to_string()),
        dates.last().map_or(String::new(), |d| d.to_string())
    );
    println!(
        "skipped: {} S&P rows, {} VIX rows; join dropped {join_dropped} dates",
        d.skipped_sp500.len(),
        d.skipped_vix.len()
    );
    if g.strict && !skipped.is_empty() {
        return Err(CliError::Data(format!("{} malformed rows (listed in skipped.csv)", skipped.len())));
    }
    Ok(())
}

fn fit_garch(g: &Global, cfg: &ExperimentConfig, p_max: usize, q_max: usize) -> Result<()> {
    let d = load_data(g, cfg)?;
    let r = log_returns(&d.market.sp500)?;
    let stats = descriptive_stats(&r.values)?;
    let adf = adf_test(&r.values)?;
    let (best, all) = GarchEstimator::with_seed(cfg.seed).select_order_all(&r.values, p_max, q_max)?;

    best.to_record().write(g.out.join("garch_fit.txt"))?;
    let path = g.out.join("garch_orders.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    w.write_record(["p", "q", "k", "loglik", "aic", "converged", "stationary"]).map_err(Error::from)?;
    for f in &all {
        w.write_record([
            f.order.0.to_string(),
            f.order.1.to_string(),
            f.k.to_string(),
            f.loglik.to_string(),
            f.aic.to_string(),
            f.converged.to_string(),
            f.stationary().to_string(),
        ])
        .map_err(Error::from)?;
    }
    w.flush().map_err(io_err(&path))?;

    let scaled: Vec<f64> = r.values.iter().map(|x| x * best.scale).collect();
    let var = conditional_variance(&best.params, &scaled)?;
    let path = g.out.join("conditional_volatility.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    w.write_record(["date", "log_return", "conditional_volatility"]).map_err(Error::from)?;
    for ((day, ret), v) in r.dates.iter().zip(&r.values).zip(&var) {
        w.write_record([day.to_string(), ret.to_string(), (v.sqrt() / best.scale).to_string()]).map_err(Error::from)?;
    }
    w.flush().map_err(io_err(&path))?;

    let mut m = manifest::manifest("fit-garch", cfg)?;
    m.set("p_max", p_max);
    m.set("q_max", q_max);
    m.set("nobs", r.values.len());
    manifest::write(&m, &g.out)?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "log returns: n {} mean {:.3e} std {:.3e} min {:.3e} max {:.3e}",
        stats.count, stats.mean, stats.std, stats.min, stats.max
    );
    let _ = writeln!(
        s,
        "ADF statistic {:.3} with {} lags (unit root rejected at 1%: {})",
        adf.statistic, adf.lags, adf.reject_1pct
    );
    let _ = writeln!(
        s,
        "selected GARCH({},{}) by AIC {:.2} (loglik {:.2}, k {})",
        best.order.0, best.order.1, best.aic, best.loglik, best.k
    );
    let raw = best.raw_params();
    let list = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    let _ = writeln!(
        s,
        "omega {:.4e} alpha [{}] beta [{}] persistence {:.4}",
        raw.omega,
        list(&raw.alpha),
        list(&raw.beta),
        raw.persistence()
    );
    print!("{s}");
    write_text(&g.out.join("garch_summary.txt"), &s)
}

fn backtest(g: &Global, cfg: &ExperimentConfig, variants: &[ModelVariant]) -> Result<()> {
    let variants = if variants.is_empty() { cfg.variants.clone() } else { variants.to_vec() };
    let d = load_data(g, cfg)?;
    let tables = build_tables(&variants, &d.market, None, &cfg.pipeline);
    let mut runs = BTreeMap::new();
    for (v, t) in tables {
        let run = t.and_then(|t| {
            t.write_csv(g.out.join(format!("features_{v}.csv")))?;
            let mut pc = cfg.pipeline.clone();
            if cfg.tuner.trials > 0 && v.is_neural() {
                let outcome = tune(&t, &pc, &SearchSpace::default(), cfg.tuner.trials, cfg.tuner.executions, cfg.seed)?;
                log::info!("{v}: tuned validation MSE {:.4e}", outcome.best_score);
                let mut rec = outcome.best.to_record();
                rec.set("validation_mse", outcome.best_score);
                rec.write(g.out.join(format!("tuned_{v}.txt")))?;
                pc.network = outcome.best;
            }
            walk_forward(&t, &pc, variant_seed(cfg.seed, v))
        });
        runs.insert(v, run);
    }
    align_runs(&mut runs);

    let mut m = manifest::manifest("backtest", cfg)?;
    let mut first_err: Option<ModelVariant> = None;
    for (v, r) in &runs {
        match r {
            Ok(run) => {
                run.write_csv(g.out.join(format!("predictions_{v}.csv")))?;
                run.manifest().write(g.out.join(format!("run_{v}.txt")))?;
                let dir = g.out.join("models").join(v.as_str());
                for w in &run.windows {
                    if let Some(model) = &w.model {
                        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                        model.save(dir.join(format!("window_{}.txt", w.plan.index)))?;
                    }
                }
                let mae = volcast::evaluate::mae(&run.predictions(), &run.actuals())?;
                println!("{v}: {} forecasts, MAE {mae:.4e}", run.len());
                m.set(format!("variant.{v}"), "ok");
                m.set(format!("variant.{v}.predictions"), run.len());
            }
            Err(e) => {
                eprintln!("{v}: failed: {e}");
                m.set(format!("variant.{v}"), format!("failed: {e}"));
                first_err.get_or_insert(*v);
            }
        }
    }
    manifest::write(&m, &g.out)?;
    match first_err {
        Some(v) => match runs.remove(&v) {
            Some(Err(e)) => Err(e.into()),
            _ => unreachable!("recorded as failed"),
        },
        None => Ok(()),
    }
}

/// Prediction files of a backtest directory, in variant order.
fn load_runs(dir: &Path) -> Result<Vec<(WalkForwardRun, PathBuf)>> {
    let mut out = Vec::new();
    for v in ModelVariant::ALL {
        let path = dir.join(format!("predictions_{v}.csv"));
        if path.exists() {
            let mut run = WalkForwardRun::read_csv(&path, v)?;
            if let Ok(m) = KvRecord::read(dir.join(format!("run_{v}.txt"))) {
                run.seed = m.parse_value("seed").unwrap_or(0);
                run.lookback = m.parse_value("lookback").unwrap_or(0);
            }
            out.push((run, path));
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("no predictions_<VARIANT>.csv files in {}", dir.display())));
    }
    Ok(out)
}

fn inputs_manifest(command: &str, files: &[PathBuf]) -> Result<KvRecord> {
    let mut m = KvRecord::new();
    m.set("command", command);
    m.set("version", env!("CARGO_PKG_VERSION"));
    for f in files {
        let name = f.file_name().map_or(String::new(), |n| n.to_string_lossy().into_owned());
        m.set(format!("input.{name}.sha256"), sha256_file(f)?);
    }
    Ok(m)
}

fn evaluate(g: &Global, dir: &Path) -> Result<()> {
    let runs = load_runs(dir)?;
    let mut s = String::new();
    let path = g.out.join("evaluation.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    w.write_record(["model", "segment", "mae", "rmse", "count"]).map_err(Error::from)?;
    let dpath = g.out.join("evaluation_directional.csv");
    let mut dw = csv::Writer::from_path(&dpath).map_err(Error::from)?;
    dw.write_record(["model", "horizon", "accuracy_pct"]).map_err(Error::from)?;
    for (run, _) in &runs {
        let rep = quartile_metrics(run)?;
        let _ = writeln!(s, "{} ({} forecasts)", run.variant, run.len());
        let _ = writeln!(s, "  {:<24}  {:>10}  {:>10}  {:>6}", "segment", "MAE", "RMSE", "n");
        for seg in &rep.segments {
            let label = format!("{} {}", seg.segment.label(), seg.segment.description());
            let _ = writeln!(s, "  {label:<24}  {:>10.3e}  {:>10.3e}  {:>6}", seg.mae, seg.rmse, seg.count);
            w.write_record([
                run.variant.to_string(),
                seg.segment.label().to_string(),
                seg.mae.to_string(),
                seg.rmse.to_string(),
                seg.count.to_string(),
            ])
            .map_err(Error::from)?;
        }
        let (p, a) = (run.predictions(), run.actuals());
        let _ = write!(s, "  directional accuracy:");
        for h in DIRECTIONAL_HORIZONS {
            match directional_accuracy(&p, &a, h) {
                Ok(x) => {
                    let _ = write!(s, " {h}d {x:.2}%");
                    dw.write_record([run.variant.to_string(), h.to_string(), x.to_string()]).map_err(Error::from)?;
                }
                Err(_) => {
                    let _ = write!(s, " {h}d n/a");
                }
            }
        }
        s.push_str("\n\n");
    }
    w.flush().map_err(io_err(&path))?;
    dw.flush().map_err(io_err(&dpath))?;
    let files: Vec<PathBuf> = runs.into_iter().map(|(_, p)| p).collect();
    manifest::write(&inputs_manifest("evaluate", &files)?, &g.out)?;
    print!("{s}");
    write_text(&g.out.join("evaluation.txt"), &s)
}

fn compare_runs(g: &Global, dir: &Path, challenger: Option<ModelVariant>) -> Result<()> {
    let loaded = load_runs(dir)?;
    let files: Vec<PathBuf> = loaded.iter().map(|(_, p)| p.clone()).collect();
    let runs: Vec<WalkForwardRun> = loaded.into_iter().map(|(r, _)| r).collect();
    let c = compare(&runs, challenger)?;
    c.write_csv(&g.out)?;
    let text = c.render_text();
    write_text(&g.out.join("comparison.txt"), &text)?;
    manifest::write(&inputs_manifest("compare", &files)?, &g.out)?;
    print!("{text}");
    Ok(())
}

fn parse_range(raw: &str) -> Option<std::ops::Range<usize>> {
    let (a, b) = raw.split_once("..")?;
    Some(a.parse().ok()?..b.parse().ok()?)
}

fn explain(g: &Global, dir: &Path, v: ModelVariant, date: &str, ec: &ExplainerConfig) -> Result<()> {
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
        .map_err(|e| CliError::Usage(format!("--date `{date}`: {e} (expected YYYY-MM-DD)")))?;
    if !v.is_neural() {
        return Err(CliError::Usage(format!("{v} has no network to explain")));
    }
    let run = WalkForwardRun::read_csv(dir.join(format!("predictions_{v}.csv")), v)?;
    let row = run.rows.iter().find(|r| r.date == date).copied().ok_or_else(|| {
        let span = match (run.rows.first(), run.rows.last()) {
            (Some(a), Some(b)) => format!("{} to {}", a.date, b.date),
            _ => "empty".into(),
        };
        CliError::Data(format!("{date} is not a forecast date of {v} (test span {span})"))
    })?;
    let meta = KvRecord::read(dir.join(format!("run_{v}.txt")))?;
    let lookback: usize = meta.parse_value("lookback")?;
    let train = meta
        .get(&format!("window.{}.train", row.window))
        .and_then(parse_range)
        .ok_or_else(|| CliError::Data(format!("run_{v}.txt lacks the training range of window {}", row.window)))?;
    let table = FeatureTable::read_csv(dir.join(format!("features_{v}.csv")), v)?;
    let r = table
        .dates
        .binary_search(&date)
        .map_err(|_| CliError::Data(format!("{date} missing from features_{v}.csv")))?;
    if r < lookback || train.start < lookback || train.end > table.len() {
        return Err(CliError::Data(format!("features_{v}.csv does not match run_{v}.txt")));
    }
    let model = WindowModel::load(dir.join("models").join(v.as_str()).join(format!("window_{}.txt", row.window)))?;

    let names = flatten_names(&table.names, lookback);
    let training: Vec<Vec<f64>> = train.map(|t| flatten(&table.rows[t - lookback..t])).collect();
    let stats = discretize_stats(&training, &names)?;
    let x = flatten(&table.rows[r - lookback..r]);
    let e = explain_instance(&|w: &[f64]| model.predict_raw(w), &x, &stats, ec)?;

    let mut text = format!("{v} forecast for {date} (window {}, actual {:.6e})\n\n", row.window, row.actual);
    text.push_str(&e.render_text());
    write_text(&g.out.join("explanation.txt"), &text)?;
    e.write_csv(g.out.join("explanation.csv"))?;
    let files = [
        dir.join(format!("predictions_{v}.csv")),
        dir.join(format!("features_{v}.csv")),
        dir.join("models").join(v.as_str()).join(format!("window_{}.txt", row.window)),
    ];
    let mut m = inputs_manifest("explain", &files)?;
    m.set("variant", v);
    m.set("date", date);
    m.set("samples", ec.num_samples);
    m.set("features", ec.num_features);
    m.set("kernel_width", e.kernel_width);
    m.set("seed", ec.seed);
    manifest::write(&m, &g.out)?;
    print!("{text}");
    Ok(())
}

fn sweep(g: &Global, cfg: &ExperimentConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    if cfg.sweep.is_empty() {
        cfg.sweep = sensitivity_scenarios();
    }
    let cfg = &cfg;
    let d = load_data(g, cfg)?;
    let outcome = run_sweep(cfg, &d.market, None)?;
    let mut top = manifest::manifest("sweep", cfg)?;
    for o in &outcome.outcomes {
        let dir = g.out.join(o.label());
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        manifest::write(&manifest::manifest("sweep", &o.config)?, &dir)?;
        match &o.run {
            Ok(run) => run.write_csv(dir.join("predictions.csv"))?,
            Err(e) => write_text(&dir.join("error.txt"), &format!("{e}\n"))?,
        }
        if let Some(s) = &o.scenario {
            top.set(format!("scenario.{}", s.label), format!("{}={}", s.key, s.value));
        }
    }
    manifest::write(&top, &g.out)?;
    let summary = outcome.summary();
    write_text(&g.out.join("summary.txt"), &summary)?;
    outcome.write_csv(g.out.join("summary.csv"))?;
    print!("{summary}");
    if outcome.outcomes.iter().all(|o| o.run.is_err()) {
        return Err(match outcome.outcomes.into_iter().next().map(|o| o.run) {
            Some(Err(e)) => e.into(),
            _ => CliError::Data("sweep produced no runs".into()),
        });
    }
    Ok(())
}
