use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use holdout_al::engine::{aggregate_runs, MeanStd, RunAggregate, StepRecord};

use crate::results::{parse_csv, read_run_jsons, render_csv, write_atomic, Row, RESULTS_FILE};
use crate::CliError;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const MISTAKES_CSV: &str = "mistakes.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Keyed by (dataset, strategy).
    pub groups: BTreeMap<(String, String), RunAggregate>,
    /// Steps shown in the mistake table.
    pub mistake_steps: Vec<usize>,
}

fn as_step(r: &Row) -> StepRecord {
    StepRecord {
        step: r.step,
        train_size: r.train_size,
        test_accuracy: r.test_accuracy,
        holdout_loss: r.holdout_loss,
        mistake_selection_rate: r.mistake_rate,
        selected_indices: Vec::new(),
        epochs: 0,
        wall_time_ms: 0,
    }
}

/// Steps 1, 5 and 10 once runs reach step 10, otherwise every step after 0.
pub fn table_steps(max_step: usize) -> Vec<usize> {
    if max_step >= 10 {
        vec![1, 5, 10]
    } else {
        (1..=max_step).collect()
    }
}

/// Aggregates rows per (dataset, strategy) across seeds.
pub fn build_report(rows: &[Row]) -> Report {
    let mut runs: BTreeMap<(String, String), BTreeMap<u64, Vec<StepRecord>>> = BTreeMap::new();
    let mut sorted: Vec<&Row> = rows.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    for r in sorted {
        runs.entry((r.dataset.clone(), r.strategy.clone()))
            .or_default()
            .entry(r.seed)
            .or_default()
            .push(as_step(r));
    }
    let groups: BTreeMap<_, _> = runs
        .into_iter()
        .map(|(key, seeds)| {
            let seeds: Vec<Vec<StepRecord>> = seeds.into_values().collect();
            (key, aggregate_runs(&seeds))
        })
        .collect();
    let max_step = groups
        .values()
        .flat_map(|g| g.steps.last().map(|s| s.step))
        .max()
        .unwrap_or(0);
    Report {
        groups,
        mistake_steps: table_steps(max_step),
    }
}

fn opt6(m: Option<f64>) -> String {
    m.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn pm(m: &MeanStd, scale: f64) -> String {
    let flag = if m.std_is_placeholder() { "*" } else { "" };
    format!("{:.1}±{:.1}{flag}", m.mean * scale, m.std * scale)
}

impl Report {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "dataset,strategy,step,runs,train_size,accuracy_mean,accuracy_std,mistake_mean,mistake_std,single_run\n",
        );
        for ((dataset, strategy), agg) in &self.groups {
            for s in &agg.steps {
                let _ = writeln!(
                    out,
                    "{dataset},{strategy},{},{},{:.1},{:.6},{:.6},{},{},{}",
                    s.step,
                    agg.runs,
                    s.train_size,
                    s.test_accuracy.mean,
                    s.test_accuracy.std,
                    opt6(s.mistake_rate.map(|m| m.mean)),
                    opt6(s.mistake_rate.map(|m| m.std)),
                    s.test_accuracy.std_is_placeholder()
                );
            }
        }
        out
    }

    fn mistake_cell(agg: &RunAggregate, step: usize) -> Option<MeanStd> {
        agg.steps.iter().find(|s| s.step == step).and_then(|s| s.mistake_rate)
    }

    pub fn mistakes_csv(&self) -> String {
        let mut out = String::from("dataset,strategy");
        for s in &self.mistake_steps {
            let _ = write!(out, ",step{s}_mean,step{s}_std");
        }
        out.push('\n');
        for ((dataset, strategy), agg) in &self.groups {
            let _ = write!(out, "{dataset},{strategy}");
            for &s in &self.mistake_steps {
                let m = Self::mistake_cell(agg, s);
                let _ = write!(out, ",{},{}", opt6(m.map(|m| m.mean)), opt6(m.map(|m| m.std)));
            }
            out.push('\n');
        }
        out
    }

    /// Aligned text: accuracy per step, then the mistake table (percent).
    /// A `*` marks a deviation computed from a single run.
    pub fn text(&self) -> String {
        let mut out = String::new();
        let mut datasets: Vec<&String> = self.groups.keys().map(|(d, _)| d).collect();
        datasets.dedup();
        for dataset in datasets {
            let groups: Vec<(&String, &RunAggregate)> = self
                .groups
                .iter()
                .filter(|((d, _), _)| d == dataset)
                .map(|((_, s), a)| (s, a))
                .collect();
            let name_w = groups.iter().map(|(s, _)| s.len()).max().unwrap_or(0).max(8);
            let steps = groups.iter().map(|(_, a)| a.steps.len()).max().unwrap_or(0);

            let _ = writeln!(out, "{dataset}: test accuracy (%)");
            let mut header = format!("{:<name_w$}", "strategy");
            for s in 0..steps {
                let _ = write!(header, " {:>11}", format!("step {s}"));
            }
            let _ = writeln!(out, "{header}");
            for (strategy, agg) in &groups {
                let mut line = format!("{strategy:<name_w$}");
                for s in &agg.steps {
                    let _ = write!(line, " {:>11}", pm(&s.test_accuracy, 100.0));
                }
                let _ = writeln!(out, "{}", line.trim_end());
            }

            let _ = writeln!(out, "\n{dataset}: wrongly predicted among selected (%)");
            let mut header = format!("{:<name_w$}", "strategy");
            for s in &self.mistake_steps {
                let _ = write!(header, " {:>11}", format!("step {s}"));
            }
            let _ = writeln!(out, "{header}");
            for (strategy, agg) in &groups {
                let mut line = format!("{strategy:<name_w$}");
                for &s in &self.mistake_steps {
                    let cell = Self::mistake_cell(agg, s).map_or("-".to_string(), |m| pm(&m, 100.0));
                    let _ = write!(line, " {cell:>11}");
                }
                let _ = writeln!(out, "{}", line.trim_end());
            }
            out.push('\n');
        }
        out
    }
}

/// Reads `dir/results.csv` (or, failing that, the JSON run records),
/// checks that both agree and writes the summary files into `dir`.
pub fn cmd_report(dir: &Path) -> Result<Report, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Validation(format!("{} is not a directory", dir.display())));
    }
    let csv_path = dir.join(RESULTS_FILE);
    let jsons = read_run_jsons(dir)?;
    let json_rows: Vec<Row> = jsons.iter().flat_map(|(_, r)| Row::from_record(r)).collect();
    let rows = if csv_path.exists() {
        let text = fs::read_to_string(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
        let rows = parse_csv(&text, &csv_path)?;
        for (path, run) in &jsons {
            let mine: Vec<Row> = Row::from_record(run).iter().map(Row::quantized).collect();
            let theirs: Vec<Row> = rows
                .iter()
                .filter(|r| r.dataset == run.dataset && r.strategy == run.strategy.as_str() && r.seed == run.seed)
                .cloned()
                .collect();
            if render_csv(&mine) != render_csv(&theirs) {
                return Err(CliError::Runtime(format!(
                    "{} disagrees with {}",
                    path.display(),
                    csv_path.display()
                )));
            }
        }
        rows
    } else {
        json_rows
    };
    if rows.is_empty() {
        return Err(CliError::Validation(format!("no results found in {}", dir.display())));
    }
    let report = build_report(&rows);
    write_atomic(&dir.join(SUMMARY_CSV), report.summary_csv().as_bytes())?;
    write_atomic(&dir.join(MISTAKES_CSV), report.mistakes_csv().as_bytes())?;
    write_atomic(&dir.join(SUMMARY_TXT), report.text().as_bytes())?;
    Ok(report)
}
