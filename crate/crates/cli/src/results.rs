use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use holdout_al::engine::RunRecord;

use crate::CliError;

pub const CSV_HEADER: &str = "dataset,strategy,seed,step,train_size,test_accuracy,holdout_loss,mistake_rate";
pub const RESULTS_FILE: &str = "results.csv";
pub const RUNS_DIR: &str = "runs";

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub dataset: String,
    pub strategy: String,
    pub seed: u64,
    pub step: usize,
    pub train_size: usize,
    pub test_accuracy: f64,
    pub holdout_loss: f64,
    pub mistake_rate: Option<f64>,
}

fn fixed6(x: f64) -> String {
    let s = format!("{x:.6}");
    // "-0.000000" would make equal values print differently.
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

impl Row {
    pub fn from_record(run: &RunRecord) -> Vec<Row> {
        run.steps
            .iter()
            .map(|s| Row {
                dataset: run.dataset.clone(),
                strategy: run.strategy.to_string(),
                seed: run.seed,
                step: s.step,
                train_size: s.train_size,
                test_accuracy: s.test_accuracy,
                holdout_loss: s.holdout_loss,
                mistake_rate: s.mistake_selection_rate,
            })
            .collect()
    }

    pub fn key(&self) -> (&str, &str, u64, usize) {
        (&self.dataset, &self.strategy, self.seed, self.step)
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.dataset,
            self.strategy,
            self.seed,
            self.step,
            self.train_size,
            fixed6(self.test_accuracy),
            fixed6(self.holdout_loss),
            self.mistake_rate.map(fixed6).unwrap_or_default()
        )
    }

    /// Same row after a trip through the CSV text.
    pub fn quantized(&self) -> Row {
        let q = |x: f64| fixed6(x).parse::<f64>().expect("formatted float");
        Row {
            test_accuracy: q(self.test_accuracy),
            holdout_loss: q(self.holdout_loss),
            mistake_rate: self.mistake_rate.map(q),
            ..self.clone()
        }
    }
}

/// Renders rows in canonical order: dataset, strategy, seed, step.
pub fn render_csv(rows: &[Row]) -> String {
    let mut sorted: Vec<&Row> = rows.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<Row>, CliError> {
    let bad = |line: usize, msg: String| CliError::Runtime(format!("{}:{line}: {msg}", origin.display()));
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(bad(1, format!("expected header '{CSV_HEADER}', found {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(n, format!("expected 8 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(n, format!("bad {what} '{s}'")));
        let int = |s: &str, what: &str| s.parse::<u64>().map_err(|_| bad(n, format!("bad {what} '{s}'")));
        rows.push(Row {
            dataset: f[0].to_string(),
            strategy: f[1].to_string(),
            seed: int(f[2], "seed")?,
            step: int(f[3], "step")? as usize,
            train_size: int(f[4], "train_size")? as usize,
            test_accuracy: num(f[5], "test_accuracy")?,
            holdout_loss: num(f[6], "holdout_loss")?,
            mistake_rate: if f[7].is_empty() { None } else { Some(num(f[7], "mistake_rate")?) },
        });
    }
    Ok(rows)
}

/// Writes `contents` next to `path` and renames it into place, so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn run_file_name(run: &RunRecord) -> String {
    format!("{}__{}__seed{}.json", run.dataset, run.strategy, run.seed)
}

pub fn write_run_json(dir: &Path, run: &RunRecord) -> Result<PathBuf, CliError> {
    let path = dir.join(RUNS_DIR).join(run_file_name(run));
    let mut json = serde_json::to_vec_pretty(run).map_err(|e| CliError::Runtime(e.to_string()))?;
    json.push(b'\n');
    write_atomic(&path, &json)?;
    Ok(path)
}

pub fn read_run_jsons(dir: &Path) -> Result<Vec<(PathBuf, RunRecord)>, CliError> {
    let runs = dir.join(RUNS_DIR);
    if !runs.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs)
        .map_err(|e| CliError::io(&runs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            let run = serde_json::from_str(&text)
                .map_err(|e| CliError::Runtime(format!("{}: not a run record: {e}", p.display())))?;
            Ok((p, run))
        })
        .collect()
}

/// Replaces the rows of every run in `runs` inside `dir/results.csv`,
/// keeping rows of other runs.
pub fn merge_results(dir: &Path, runs: &[RunRecord]) -> Result<PathBuf, CliError> {
    let path = dir.join(RESULTS_FILE);
    let mut rows = if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        parse_csv(&text, &path)?
    } else {
        Vec::new()
    };
    let fresh: Vec<Row> = runs.iter().flat_map(Row::from_record).collect();
    rows.retain(|r| {
        !runs
            .iter()
            .any(|run| run.dataset == r.dataset && run.strategy.as_str() == r.strategy && run.seed == r.seed)
    });
    rows.extend(fresh);
    write_atomic(&path, render_csv(&rows).as_bytes())?;
    Ok(path)
}
