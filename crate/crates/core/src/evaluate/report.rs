use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use super::{
    absolute_errors, directional_accuracy, improvement_table, mann_whitney_u, metric_report, Improvement, MetricReport,
    Segment, TestResult,
};
use crate::error::{Error, Result};
use crate::pipeline::{ModelVariant, WalkForwardRun};

fn format_p(p: f64) -> String {
    if p >= 1e-3 {
        format!("{p:.4}")
    } else {
        format!("{p:.2e}")
    }
}

pub const DIRECTIONAL_HORIZONS: [usize; 3] = [1, 5, 22];

/// Challenger against each other model, on the same dates.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub challenger: ModelVariant,
    /// One per run, in input order.
    pub metrics: Vec<MetricReport>,
    /// Absolute errors of the challenger against each other model.
    pub tests: Vec<(ModelVariant, TestResult)>,
    pub improvements: Vec<(ModelVariant, Vec<Improvement>)>,
    /// `None` where the run is too short for the horizon.
    pub directional: Vec<(ModelVariant, Vec<(usize, Option<f64>)>)>,
    pub dates: Vec<NaiveDate>,
}

/// Compare runs on the dates they all share.
///
/// The challenger defaults to the VIX hybrid when present, else the last
/// run.
pub fn compare(runs: &[WalkForwardRun], challenger: Option<ModelVariant>) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::TooShort { needed: 2, actual: runs.len() });
    }
    let variants: Vec<ModelVariant> = runs.iter().map(|r| r.variant).collect();
    for (i, v) in variants.iter().enumerate() {
        if variants[..i].contains(v) {
            return Err(Error::InvalidParameter(format!("variant {v} given twice")));
        }
    }
    let challenger = match challenger {
        Some(c) if variants.contains(&c) => c,
        Some(c) => return Err(Error::MissingInput(format!("no run for challenger {c}"))),
        None if variants.contains(&ModelVariant::LstmGarchVix) => ModelVariant::LstmGarchVix,
        None => *variants.last().expect("at least two runs"),
    };

    let mut dates = runs[0].dates();
    for r in &runs[1..] {
        let other = r.dates();
        dates.retain(|d| other.binary_search(d).is_ok());
    }
    if dates.is_empty() {
        return Err(Error::Empty("dates shared by all runs"));
    }
    let aligned: Vec<WalkForwardRun> = runs
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.restrict_to(&dates);
            r
        })
        .collect();
    let actuals = aligned[0].actuals();

    let mut metrics = Vec::with_capacity(aligned.len());
    let mut errors = Vec::with_capacity(aligned.len());
    let mut directional = Vec::with_capacity(aligned.len());
    for r in &aligned {
        let preds = r.predictions();
        metrics.push(metric_report(r.variant.as_str(), &preds, &actuals)?);
        errors.push(absolute_errors(&preds, &actuals)?);
        let da = DIRECTIONAL_HORIZONS.iter().map(|&h| (h, directional_accuracy(&preds, &actuals, h).ok())).collect();
        directional.push((r.variant, da));
    }

    let ci = variants.iter().position(|v| *v == challenger).expect("challenger is a run");
    let mut tests = Vec::new();
    let mut improvements = Vec::new();
    for (i, v) in variants.iter().enumerate() {
        if i == ci {
            continue;
        }
        tests.push((*v, mann_whitney_u(&errors[ci], &errors[i])?));
        improvements.push((*v, improvement_table(&metrics[i], &metrics[ci])?));
    }
    Ok(Comparison { challenger, metrics, tests, improvements, directional, dates })
}

impl Comparison {
    pub fn metrics_for(&self, variant: ModelVariant) -> Option<&MetricReport> {
        self.metrics.iter().find(|m| m.label == variant.as_str())
    }

    pub fn test_against(&self, base: ModelVariant) -> Option<&TestResult> {
        self.tests.iter().find(|(v, _)| *v == base).map(|(_, t)| t)
    }

    pub fn improvement_over(&self, base: ModelVariant, segment: Segment) -> Option<&Improvement> {
        self.improvements.iter().find(|(v, _)| *v == base)?.1.iter().find(|i| i.segment == segment)
    }

    /// Labels with the lowest MAE and lowest RMSE in `segment`.
    pub fn best_in(&self, segment: Segment) -> (&str, &str) {
        let pick = |f: fn(&super::SegmentMetrics) -> f64| {
            self.metrics
                .iter()
                .filter_map(|m| m.get(segment).map(|s| (m.label.as_str(), f(s))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(l, _)| l)
                .unwrap_or("")
        };
        (pick(|s| s.mae), pick(|s| s.rmse))
    }

    /// Plain-text tables: metrics, rank tests, improvements, quartiles and
    /// direction.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let w = self.metrics.iter().map(|m| m.label.len()).max().unwrap_or(5).max(14);
        let (first, last) = (self.dates[0], self.dates[self.dates.len() - 1]);
        let _ = writeln!(s, "Out-of-sample one-day forecasts, {first} to {last} ({} dates)\n", self.dates.len());

        let _ = writeln!(s, "Error metrics");
        let _ = writeln!(s, "{:<w$}  {:>10}  {:>10}", "model", "MAE", "RMSE");
        for m in &self.metrics {
            let f = m.full();
            let _ = writeln!(s, "{:<w$}  {:>10.3e}  {:>10.3e}", m.label, f.mae, f.rmse);
        }

        let _ = writeln!(s, "\nMann-Whitney U on absolute errors, {} vs", self.challenger);
        let _ = writeln!(s, "{:<w$}  {:>12}  {:>8}  {:>9}  {:>6}  {:>6}", "model", "U", "z", "p", "n", "m");
        for (v, t) in &self.tests {
            let _ = writeln!(
                s,
                "{:<w$}  {:>12.1}  {:>8.3}  {:>9}  {:>6}  {:>6}",
                v.as_str(),
                t.u,
                t.z,
                format_p(t.p),
                t.n,
                t.m
            );
        }

        let _ = writeln!(s, "\nImprovement of {} over (%)", self.challenger);
        let _ = writeln!(s, "{:<w$}  {:>8}  {:>8}", "model", "MAE", "RMSE");
        for (v, rows) in &self.improvements {
            if let Some(f) = rows.iter().find(|i| i.segment == Segment::Full) {
                let _ = writeln!(s, "{:<w$}  {:>8.2}  {:>8.2}", v.as_str(), f.mae_pct, f.rmse_pct);
            }
        }

        let _ = writeln!(s, "\nError metrics by quartile of actual volatility (* = lowest)");
        for seg in &Segment::ALL[1..] {
            let n = self.metrics[0].get(*seg).map_or(0, |m| m.count);
            let _ = writeln!(s, "{} {} ({n} dates)", seg.label(), seg.description());
            let (best_mae, best_rmse) = self.best_in(*seg);
            for m in &self.metrics {
                if let Some(x) = m.get(*seg) {
                    let star = |b: &str| if b == m.label { "*" } else { " " };
                    let line = format!(
                        "  {:<w$}  {:>10.3e}{}  {:>10.3e}{}",
                        m.label,
                        x.mae,
                        star(best_mae),
                        x.rmse,
                        star(best_rmse)
                    );
                    let _ = writeln!(s, "{}", line.trim_end());
                }
            }
        }

        let _ = writeln!(s, "\nDirectional accuracy (%)");
        let _ = write!(s, "{:<w$}", "model");
        for h in DIRECTIONAL_HORIZONS {
            let _ = write!(s, "  {:>7}", format!("{h}d"));
        }
        s.push('\n');
        for (v, row) in &self.directional {
            let _ = write!(s, "{:<w$}", v.as_str());
            for (_, a) in row {
                match a {
                    Some(a) => {
                        let _ = write!(s, "  {a:>7.2}");
                    }
                    None => {
                        let _ = write!(s, "  {:>7}", "n/a");
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    /// `metrics.csv`, `mann_whitney.csv`, `improvement.csv` and
    /// `directional.csv` under `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
        w.write_record(["model", "segment", "mae", "rmse", "count"])?;
        for m in &self.metrics {
            for s in &m.segments {
                w.write_record([
                    m.label.clone(),
                    s.segment.label().to_string(),
                    s.mae.to_string(),
                    s.rmse.to_string(),
                    s.count.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir.join("metrics.csv"), e))?;

        let mut w = csv::Writer::from_path(dir.join("mann_whitney.csv"))?;
        w.write_record(["challenger", "model", "u", "z", "p", "n", "m", "exact"])?;
        for (v, t) in &self.tests {
            w.write_record([
                self.challenger.to_string(),
                v.to_string(),
                t.u.to_string(),
                t.z.to_string(),
                t.p.to_string(),
                t.n.to_string(),
                t.m.to_string(),
                t.exact.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("mann_whitney.csv"), e))?;

        let mut w = csv::Writer::from_path(dir.join("improvement.csv"))?;
        w.write_record(["challenger", "model", "segment", "mae_pct", "rmse_pct"])?;
        for (v, rows) in &self.improvements {
            for i in rows {
                w.write_record([
                    self.challenger.to_string(),
                    v.to_string(),
                    i.segment.label().to_string(),
                    i.mae_pct.to_string(),
                    i.rmse_pct.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir.join("improvement.csv"), e))?;

        let mut w = csv::Writer::from_path(dir.join("directional.csv"))?;
        w.write_record(["model", "horizon", "accuracy_pct"])?;
        for (v, row) in &self.directional {
            for (h, a) in row {
                w.write_record([v.to_string(), h.to_string(), a.map_or(String::new(), |a| a.to_string())])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir.join("directional.csv"), e))?;
        Ok(())
    }
}
