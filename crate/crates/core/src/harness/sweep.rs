use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, ExperimentResult, ExperimentSpec, Scheme};
use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 22] = [
    "scheme",
    "M",
    "alphabet",
    "beta",
    "xi",
    "rho",
    "n",
    "n_eff",
    "K",
    "codebook_size",
    "trials",
    "errors",
    "error_rate",
    "ci_low",
    "ci_high",
    "bound_term1",
    "bound_term2",
    "bound_total",
    "zero_count_errors",
    "order_errors",
    "master_seed",
    "wall_time_ms",
];

/// One CSV row; field order is the on-disk column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    #[serde(rename = "M")]
    pub molecules: u64,
    pub alphabet: u32,
    pub beta: f64,
    pub xi: f64,
    pub rho: f64,
    pub n: u64,
    pub n_eff: u64,
    #[serde(rename = "K")]
    pub reads: u64,
    pub codebook_size: String,
    pub trials: u64,
    pub errors: u64,
    pub error_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound_term1: f64,
    pub bound_term2: f64,
    pub bound_total: f64,
    pub zero_count_errors: u64,
    pub order_errors: u64,
    pub master_seed: u64,
    pub wall_time_ms: u64,
}

impl From<&ExperimentResult> for SweepRow {
    fn from(r: &ExperimentResult) -> Self {
        let p = &r.spec.params;
        SweepRow {
            scheme: r.spec.scheme,
            molecules: p.molecules,
            alphabet: p.alphabet_size,
            beta: p.beta,
            xi: p.xi,
            rho: p.rho,
            n: r.sizes.n,
            n_eff: r.sizes.n_eff,
            reads: r.sizes.reads,
            codebook_size: r.codebook_size.clone(),
            trials: r.spec.trials,
            errors: r.errors,
            error_rate: r.error_rate,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            bound_term1: r.bound_term1,
            bound_term2: r.bound_term2,
            bound_total: r.bound_total,
            zero_count_errors: r.zero_count_errors,
            order_errors: r.order_errors,
            master_seed: r.spec.master_seed,
            wall_time_ms: r.wall_time_ms,
        }
    }
}

/// Identity of an experiment as recoverable from its CSV row. The RC size
/// column holds the requested size; for PC it is derived and left out.
fn key_parts(scheme: Scheme, m: u64, alphabet: u32, beta: f64, xi: f64, rho: f64, size: Option<&str>, trials: u64, seed: u64) -> String {
    format!(
        "{scheme}|{m}|{alphabet}|{:016x}|{:016x}|{:016x}|{}|{trials}|{seed}",
        beta.to_bits(),
        xi.to_bits(),
        rho.to_bits(),
        size.unwrap_or("-")
    )
}

impl SweepRow {
    pub fn key(&self) -> String {
        let size = (self.scheme == Scheme::RandomCoding).then_some(self.codebook_size.as_str());
        key_parts(self.scheme, self.molecules, self.alphabet, self.beta, self.xi, self.rho, size, self.trials, self.master_seed)
    }

    /// Copy with the timing column zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self { wall_time_ms: 0, ..self.clone() }
    }
}

pub fn spec_key(spec: &ExperimentSpec) -> String {
    let p = &spec.params;
    let size = match spec.scheme {
        Scheme::RandomCoding => Some(spec.codebook_size.map(|s| s.to_string()).unwrap_or_default()),
        Scheme::Partition => None,
    };
    key_parts(spec.scheme, p.molecules, p.alphabet_size, p.beta, p.xi, p.rho, size.as_deref(), spec.trials, spec.master_seed)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    /// Run experiments of the grid concurrently; rows are still written in grid order.
    pub parallel_experiments: bool,
}

#[derive(Debug, Default, Serialize)]
pub struct SweepSummary {
    pub computed: usize,
    pub skipped: usize,
    /// `(grid index, message)` for each experiment that failed.
    pub failures: Vec<(usize, String)>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    schema_version: u32,
    rows: &'a [SweepRow],
    failures: &'a [(usize, String)],
}

/// The JSON summary written next to a sweep CSV.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn read_rows(path: &Path) -> Result<Vec<SweepRow>, HarnessError> {
    if !path.exists() || std::fs::metadata(path)?.len() == 0 {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(HarnessError::InvalidSpec(format!("{} has an unexpected header", path.display())));
    }
    reader.deserialize().collect::<Result<Vec<SweepRow>, _>>().map_err(HarnessError::from)
}

fn append_row(path: &Path, row: &SweepRow) -> Result<(), HarnessError> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    writer.serialize(row)?;
    writer.flush()?;
    Ok(())
}

/// Run every spec of `grid` whose row is not already in `output`, appending
/// one CSV row per finished experiment, then write the JSON summary.
/// Failed experiments and failed writes are recorded and the sweep goes on.
pub fn run_sweep(grid: &[ExperimentSpec], output: &Path, options: SweepOptions) -> Result<SweepSummary, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::InvalidSpec("empty grid".into()));
    }
    let mut done: HashSet<String> = read_rows(output)?.iter().map(SweepRow::key).collect();
    let mut summary = SweepSummary::default();

    let mut pending = Vec::new();
    for (i, spec) in grid.iter().enumerate() {
        if done.insert(spec_key(spec)) {
            pending.push(i);
        } else {
            summary.skipped += 1;
        }
    }

    let record = |i: usize, outcome: Result<ExperimentResult, HarnessError>, summary: &mut SweepSummary| {
        match outcome.and_then(|r| append_row(output, &SweepRow::from(&r))) {
            Ok(()) => summary.computed += 1,
            Err(e) => summary.failures.push((i, e.to_string())),
        }
    };

    if options.parallel_experiments {
        let results: Vec<_> = pending.par_iter().map(|&i| (i, run_experiment(&grid[i]))).collect();
        for (i, outcome) in results {
            record(i, outcome, &mut summary);
        }
    } else {
        for &i in &pending {
            record(i, run_experiment(&grid[i]), &mut summary);
        }
    }

    let rows = read_rows(output)?;
    let file = File::create(summary_path(output))?;
    serde_json::to_writer_pretty(file, &SummaryFile { schema_version: SCHEMA_VERSION, rows: &rows, failures: &summary.failures })?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SystemParams;

    fn grid() -> Vec<ExperimentSpec> {
        let p = |m: u64, xi: f64| SystemParams::new(m, 2, 0.5, xi, 0.5).unwrap();
        vec![
            ExperimentSpec::partition(p(400, 0.05), 300, 1),
            ExperimentSpec::partition(p(900, 0.02), 300, 2),
            ExperimentSpec::random_coding(p(500, 0.02), 4, 200, 3),
            ExperimentSpec::partition(p(400, 0.1), 300, 4).with_parallelism(3),
        ]
    }

    fn timeless(path: &Path) -> Vec<SweepRow> {
        read_rows(path).unwrap().iter().map(SweepRow::without_timing).collect()
    }

    #[test]
    fn header_matches_schema() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("rows.csv");
        run_sweep(&grid()[..1], &out, SweepOptions::default()).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    }

    #[test]
    fn resume_and_idempotence() {
        let dir = tempfile::tempdir().unwrap();
        let full = dir.path().join("full.csv");
        let s = run_sweep(&grid(), &full, SweepOptions::default()).unwrap();
        assert_eq!((s.computed, s.skipped, s.failures.len()), (4, 0, 0));

        let again = run_sweep(&grid(), &full, SweepOptions::default()).unwrap();
        assert_eq!((again.computed, again.skipped), (0, 4));

        let resumed = dir.path().join("resumed.csv");
        run_sweep(&grid()[..2], &resumed, SweepOptions::default()).unwrap();
        let s = run_sweep(&grid(), &resumed, SweepOptions { parallel_experiments: true }).unwrap();
        assert_eq!((s.computed, s.skipped), (2, 2));
        assert_eq!(timeless(&full), timeless(&resumed));

        let summary: serde_json::Value = serde_json::from_reader(File::open(summary_path(&full)).unwrap()).unwrap();
        assert_eq!(summary["schema_version"], 1);
        assert_eq!(summary["rows"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn failures_do_not_abort() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("rows.csv");
        let mut g = grid();
        g.insert(1, ExperimentSpec::partition(SystemParams::new(5, 2, 1.4, 1.0, 0.5).unwrap(), 10, 0));
        let s = run_sweep(&g, &out, SweepOptions::default()).unwrap();
        assert_eq!(s.computed, 4);
        assert_eq!(s.failures.len(), 1);
        assert_eq!(s.failures[0].0, 1);
        assert!(run_sweep(&[], &out, SweepOptions::default()).is_err());
    }
}
