//! Experiment harness: configuration parsing, multi-seed sweeps, result
//! files and aggregate reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use raresim::correction::CorrectionConfig;
use raresim::engine::{run_many, Mode, RunConfig, RunResult, VERSION};
use raresim::exec::Execution;
use raresim::limit_state::{BenchmarkSpec, OscillatorConfig, BENCHMARK_IDS};
use raresim::local::RefinementPolicy;
use serde::{Deserialize, Serialize};

/// Fraction of failed runs above which an experiment exits with code 2.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no results in {0}")]
    NoResults(PathBuf),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Sweep axes; each list replaces the scalar of the same name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub p0: Option<Vec<f64>>,
    #[serde(default, rename = "N")]
    pub n: Option<Vec<usize>>,
}

/// The on-disk experiment document. Everything except `benchmark` is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    benchmark: String,
    d: Option<usize>,
    beta: Option<f64>,
    kappa: Option<f64>,
    tau: Option<f64>,
    nu: Option<f64>,
    oscillator: Option<OscillatorConfig>,
    pca_realizations: Option<usize>,
    pca_seed: Option<u64>,
    mode: Option<Mode>,
    modes: Option<Vec<Mode>>,
    #[serde(rename = "N")]
    n: Option<usize>,
    p0: Option<f64>,
    n_runs: Option<usize>,
    seed: Option<u64>,
    seeds: Option<Vec<u64>>,
    sweep: Option<Sweep>,
    reference_pf: Option<f64>,
    out: Option<PathBuf>,
    policy: Option<RefinementPolicy>,
    correction: Option<CorrectionConfig>,
    n0: Option<usize>,
    high_dim: Option<bool>,
    max_levels: Option<usize>,
    warm_up_fraction: Option<f64>,
    initial_lambda: Option<f64>,
    adapt_window: Option<usize>,
}

/// A fully resolved experiment: a base run configuration, the sweep cells
/// and the seeds every cell is run with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub base: RunConfig,
    pub modes: Vec<Mode>,
    pub p0: Vec<f64>,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
    pub reference_pf: Option<f64>,
    pub out: PathBuf,
}

/// One sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mode: Mode,
    pub p0: f64,
    pub n: usize,
}

impl Cell {
    /// Directory name under `runs/`.
    pub fn name(&self) -> String {
        format!("{}_p{}_N{}", self.mode, self.p0, self.n)
    }
}

pub const DEFAULT_N: usize = 1000;
pub const DEFAULT_P0: f64 = 0.1;
pub const DEFAULT_RUNS: usize = 20;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub n_runs: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config_str(&text, &Overrides::default())
}

pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<ExperimentSpec> {
    let f: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
    resolve(f, overrides)
}

fn resolve(f: ConfigFile, o: &Overrides) -> Result<ExperimentSpec> {
    let invalid = |m: String| CliError::Validation(m);
    if !BENCHMARK_IDS.contains(&f.benchmark.as_str()) {
        return Err(invalid(format!("unknown benchmark `{}` (known: {})", f.benchmark, BENCHMARK_IDS.join(", "))));
    }
    let mut bench = BenchmarkSpec::new(&f.benchmark, f.d.unwrap_or(2));
    if let Some(v) = f.beta {
        bench.beta = v;
    }
    if let Some(v) = f.kappa {
        bench.kappa = v;
    }
    if let Some(v) = f.tau {
        bench.tau = v;
    }
    if let Some(v) = f.nu {
        bench.nu = v;
    }
    if let Some(v) = f.oscillator {
        bench.oscillator = v;
    }
    if let Some(v) = f.pca_realizations {
        bench.pca_realizations = v;
    }
    if let Some(v) = f.pca_seed {
        bench.pca_seed = v;
    }

    let modes = match (o.mode, f.mode, f.modes) {
        (Some(m), _, _) => vec![m],
        (None, Some(_), Some(_)) => return Err(invalid("give either `mode` or `modes`, not both".into())),
        (None, Some(m), None) => vec![m],
        (None, None, Some(ms)) => ms,
        (None, None, None) => vec![Mode::Standard],
    };
    let sweep = f.sweep.unwrap_or_default();
    let p0 = sweep.p0.unwrap_or_else(|| vec![f.p0.unwrap_or(DEFAULT_P0)]);
    let n = sweep.n.unwrap_or_else(|| vec![f.n.unwrap_or(DEFAULT_N)]);
    if modes.is_empty() || p0.is_empty() || n.is_empty() {
        return Err(invalid("mode and sweep lists must be non-empty".into()));
    }
    let base_seed = o.seed.or(f.seed).unwrap_or(1);
    let seeds = match (o.seed, o.n_runs, f.seeds) {
        // an explicit list wins unless the command line asks otherwise
        (None, None, Some(list)) => list,
        _ => {
            let runs = o.n_runs.or(f.n_runs).unwrap_or(DEFAULT_RUNS);
            (0..runs as u64).map(|i| base_seed + i).collect()
        }
    };

    let mut base = RunConfig::new(bench, modes[0], n[0], p0[0], seeds.first().copied().unwrap_or(base_seed));
    if let Some(v) = f.policy {
        base.policy = v;
    }
    if let Some(v) = f.correction {
        base.correction = v;
    }
    base.n0 = f.n0;
    base.high_dim = f.high_dim;
    if let Some(v) = f.max_levels {
        base.max_levels = v;
    }
    if let Some(v) = f.warm_up_fraction {
        base.warm_up_fraction = v;
    }
    if let Some(v) = f.initial_lambda {
        base.initial_lambda = v;
    }
    if let Some(v) = f.adapt_window {
        base.adapt_window = v;
    }

    let spec = ExperimentSpec {
        base,
        modes,
        p0,
        n,
        seeds,
        reference_pf: f.reference_pf,
        out: o.out.clone().or(f.out).unwrap_or_else(|| PathBuf::from("results")),
    };
    spec.validate()?;
    Ok(spec)
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(CliError::Validation(m.into()));
        if self.seeds.is_empty() {
            return invalid("n_runs must be at least 1");
        }
        if self.modes.is_empty() || self.p0.is_empty() || self.n.is_empty() {
            return invalid("mode and sweep lists must be non-empty");
        }
        if let Some(r) = self.reference_pf {
            if !(r > 0.0 && r < 1.0) {
                return invalid("reference_pf must lie in (0, 1)");
            }
        }
        for cell in self.cells() {
            self.config(cell, self.seeds[0]).validate().map_err(|e| CliError::Validation(format!("cell {}: {e}", cell.name())))?;
        }
        Ok(())
    }

    /// Cells in mode-major order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &p0 in &self.p0 {
                for &n in &self.n {
                    out.push(Cell { mode, p0, n });
                }
            }
        }
        out
    }

    pub fn config(&self, cell: Cell, seed: u64) -> RunConfig {
        let mut c = self.base.clone();
        c.mode = cell.mode;
        c.p0 = cell.p0;
        c.n = cell.n;
        c.seed = seed;
        c
    }

    /// Reference failure probability from the config or the benchmark catalog.
    pub fn reference(&self) -> Option<f64> {
        self.reference_pf.or_else(|| self.base.benchmark.reference_pf())
    }
}

/// Per-run file contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunRecord {
    Ok(Box<RunResult>),
    Failed(FailedRun),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedRun {
    pub version: String,
    pub config: RunConfig,
    pub error: String,
}

impl RunRecord {
    pub fn config(&self) -> &RunConfig {
        match self {
            RunRecord::Ok(r) => &r.config,
            RunRecord::Failed(f) => &f.config,
        }
    }
}

/// One row of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub cell: String,
    pub benchmark: String,
    pub d: usize,
    pub mode: Mode,
    pub p0: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub runs: usize,
    pub failures: usize,
    /// Reference failure probability.
    pub pf_reference: Option<f64>,
    /// Mean estimate of the standard-mode cell with the same `p0` and `N`.
    pub pf_standard: Option<f64>,
    pub mean_pf: Option<f64>,
    pub std_pf: Option<f64>,
    /// Relative error of `mean_pf` against the reference.
    pub rel_error: Option<f64>,
    /// Relative error of `mean_pf` against the standard-mode mean.
    pub rel_error_standard: Option<f64>,
    pub mean_n0: Option<f64>,
    pub mean_n_total: Option<f64>,
    /// Evaluations standard subset simulation needs for the same levels.
    pub mean_n_total_standard: Option<f64>,
    pub mean_levels: Option<f64>,
    pub mean_cov_independent: Option<f64>,
    pub mean_cov_correlated: Option<f64>,
}

/// One row of `plotdata.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub mode: Mode,
    pub p0: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub mean_evals: f64,
    pub rel_error: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn std_dev(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

/// Aggregates run records grouped by cell name.
pub fn aggregate(groups: &BTreeMap<String, Vec<RunRecord>>, reference: Option<f64>) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = groups
        .iter()
        .filter(|(_, recs)| !recs.is_empty())
        .map(|(cell, recs)| {
            let cfg = recs[0].config();
            let ok: Vec<&RunResult> = recs
                .iter()
                .filter_map(|r| match r {
                    RunRecord::Ok(r) => Some(r.as_ref()),
                    RunRecord::Failed(_) => None,
                })
                .collect();
            let col = |f: &dyn Fn(&RunResult) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let pfs = col(&|r| r.pf);
            let mean_pf = mean(&pfs);
            let pf_reference = reference.or_else(|| cfg.benchmark.reference_pf());
            let covs = |f: &dyn Fn(&RunResult) -> Option<f64>| {
                let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                mean(&v)
            };
            AggregateRow {
                cell: cell.clone(),
                benchmark: cfg.benchmark.id.clone(),
                d: cfg.benchmark.input_dim(),
                mode: cfg.mode,
                p0: cfg.p0,
                n: cfg.n,
                runs: recs.len(),
                failures: recs.len() - ok.len(),
                pf_reference,
                pf_standard: None,
                mean_pf,
                std_pf: std_dev(&pfs),
                rel_error: mean_pf.zip(pf_reference).map(|(m, r)| (m - r).abs() / r),
                rel_error_standard: None,
                mean_n0: mean(&col(&|r| r.n0 as f64)),
                mean_n_total: mean(&col(&|r| r.n_total as f64)),
                mean_n_total_standard: mean(&col(&|r| r.n_total_standard as f64)),
                mean_levels: mean(&col(&|r| r.levels as f64)),
                mean_cov_independent: covs(&|r| r.cov_independent),
                mean_cov_correlated: covs(&|r| r.cov_correlated),
            }
        })
        .collect();
    let standard: Vec<(f64, usize, Option<f64>)> =
        rows.iter().filter(|r| r.mode == Mode::Standard).map(|r| (r.p0, r.n, r.mean_pf)).collect();
    for row in &mut rows {
        if let Some(&(_, _, s)) = standard.iter().find(|(p0, n, _)| *p0 == row.p0 && *n == row.n) {
            row.pf_standard = s;
            row.rel_error_standard = row.mean_pf.zip(s).map(|(m, s)| (m - s).abs() / s);
        }
    }
    rows
}

pub fn plot_rows(rows: &[AggregateRow]) -> Vec<PlotRow> {
    rows.iter()
        .filter_map(|r| {
            Some(PlotRow {
                mode: r.mode,
                p0: r.p0,
                n: r.n,
                mean_evals: r.mean_n_total?,
                rel_error: r.rel_error.or(r.rel_error_standard),
            })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text).map_err(io_err(path))
}

/// Outcome of an experiment or a report.
#[derive(Debug, Clone)]
pub struct Summary {
    pub rows: Vec<AggregateRow>,
    pub total_runs: usize,
    pub failed_runs: usize,
}

impl Summary {
    pub fn exit_code(&self) -> i32 {
        if self.failed_runs as f64 > MAX_FAILURE_FRACTION * self.total_runs as f64 {
            2
        } else {
            0
        }
    }
}

/// Runs every cell for every seed, writes per-run records, `aggregate.csv`
/// and `plotdata.csv` under `spec.out`, and returns the aggregate.
pub fn run_experiment(spec: &ExperimentSpec, exec: Execution) -> Result<Summary> {
    spec.validate()?;
    let cells = spec.cells();
    let mut configs = Vec::new();
    let mut owners = Vec::new();
    for cell in &cells {
        for &seed in &spec.seeds {
            configs.push(spec.config(*cell, seed));
            owners.push(cell.name());
        }
    }
    let results = run_many(&configs, exec);

    let runs_dir = spec.out.join("runs");
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for ((cfg, owner), res) in configs.into_iter().zip(owners).zip(results) {
        let record = match res {
            Ok(r) => RunRecord::Ok(Box::new(r)),
            Err(e) => RunRecord::Failed(FailedRun { version: VERSION.to_string(), config: cfg.clone(), error: e.to_string() }),
        };
        let dir = runs_dir.join(&owner);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_json(&dir.join(format!("{}.json", cfg.seed)), &record)?;
        groups.entry(owner).or_default().push(record);
    }
    write_json(&spec.out.join("experiment.json"), &ExperimentFile { version: VERSION.to_string(), spec: spec.clone() })?;
    finish(&spec.out, &groups, spec.reference())
}

#[derive(Debug, Serialize, Deserialize)]
struct ExperimentFile {
    version: String,
    spec: ExperimentSpec,
}

fn finish(dir: &Path, groups: &BTreeMap<String, Vec<RunRecord>>, reference: Option<f64>) -> Result<Summary> {
    let rows = aggregate(groups, reference);
    write_csv(&dir.join("aggregate.csv"), &rows)?;
    write_csv(&dir.join("plotdata.csv"), &plot_rows(&rows))?;
    let total_runs = groups.values().map(Vec::len).sum();
    let failed_runs = rows.iter().map(|r| r.failures).sum();
    Ok(Summary { rows, total_runs, failed_runs })
}

/// Re-aggregates the per-run records under `dir` and rewrites the CSV files.
pub fn report(dir: &Path) -> Result<Summary> {
    let runs_dir = dir.join("runs");
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    if runs_dir.is_dir() {
        for cell in fs::read_dir(&runs_dir).map_err(io_err(&runs_dir))? {
            let cell = cell.map_err(io_err(&runs_dir))?.path();
            if !cell.is_dir() {
                continue;
            }
            let name = cell.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let mut files: Vec<PathBuf> = fs::read_dir(&cell)
                .map_err(io_err(&cell))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            for f in files {
                let text = fs::read_to_string(&f).map_err(io_err(&f))?;
                let rec: RunRecord =
                    serde_json::from_str(&text).map_err(|source| CliError::Json { path: f.clone(), source })?;
                groups.entry(name.clone()).or_default().push(rec);
            }
        }
    }
    for recs in groups.values_mut() {
        recs.sort_by_key(|r| r.config().seed);
    }
    if groups.values().all(Vec::is_empty) {
        return Err(CliError::NoResults(dir.to_path_buf()));
    }
    let experiment = dir.join("experiment.json");
    let reference = fs::read_to_string(&experiment)
        .ok()
        .and_then(|t| serde_json::from_str::<ExperimentFile>(&t).ok())
        .and_then(|e| e.spec.reference());
    finish(dir, &groups, reference)
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(x) if x != 0.0 && (x.abs() < 1e-2 || x.abs() >= 1e5) => format!("{x:.precision$e}"),
        Some(x) => format!("{x:.precision$}"),
        None => "-".into(),
    }
}

/// Human-readable aggregate table.
pub fn render_table(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<28} {:>9} {:>9} {:>9} {:>9} {:>6} {:>6} {:>8} {:>10} {:>9} {:>6}\n",
        "cell", "P_ref", "P_std", "E[P]", "sd[P]", "eps", "eps0", "E[N0]", "E[N_tot]", "N_std", "fail"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<28} {:>9} {:>9} {:>9} {:>9} {:>6} {:>6} {:>8} {:>10} {:>9} {:>6}\n",
            r.cell,
            fmt_opt(r.pf_reference, 2),
            fmt_opt(r.pf_standard, 2),
            fmt_opt(r.mean_pf, 2),
            fmt_opt(r.std_pf, 1),
            fmt_opt(r.rel_error, 2),
            fmt_opt(r.rel_error_standard, 2),
            fmt_opt(r.mean_n0, 1),
            fmt_opt(r.mean_n_total, 1),
            fmt_opt(r.mean_n_total_standard, 0),
            format!("{}/{}", r.failures, r.runs),
        ));
    }
    if rows.iter().any(|r| r.benchmark == "g2") {
        out.push_str(
            "note: N_std = N + N(1 - p0)(L - 1); for the four-branch case at N = 1000 with \
             two intermediate levels this is 2800 (N = 10000 would give 28000).\n",
        );
    }
    out
}

/// Catalog of benchmark ids for `bench list`.
pub fn bench_list() -> String {
    let mut out = String::from("id              dim        reference P_F\n");
    for id in BENCHMARK_IDS {
        let spec = BenchmarkSpec::new(id, 2);
        let dim = match id {
            "g11" | "g12" | "g3" => "d (default 2)".to_string(),
            _ => spec.input_dim().to_string(),
        };
        let pf = spec.reference_pf().map_or("-".to_string(), |p| format!("{p:.3e}"));
        out.push_str(&format!("{id:<15} {dim:<14} {pf}\n"));
    }
    out
}
