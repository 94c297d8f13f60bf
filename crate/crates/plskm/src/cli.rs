//! Command-line front end.
//!
//! Everything the binary does lives here so it stays testable: CSV
//! ingestion with missing-value handling, the subcommand surface
//! (`fit`, `select-k`, `tandem`, `simulate`, `benchmark`, `validate-spec`),
//! and result serialization.
//!
//! Output files are written atomically (write to a temporary name, then
//! rename). The primary JSON output of a run depends only on the inputs and
//! the seed — timestamps and wall-clock durations go to a `*.meta.json`
//! sidecar so re-running a command reproduces the primary file byte for
//! byte.
//!
//! Exit codes: 0 on success, 2 for usage and validation problems (bad
//! flags, malformed or invalid model files, missing columns), 1 for
//! everything that goes wrong at run time (unreadable data, degenerate
//! input, failed fits).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::DataMatrix;
use crate::datagen::{
    generate_dataset, make_ecsi_synthetic, masked_dataset, run_experiment_grid, CellSummary,
    GridCell, SegmentProfile, SimConfig, StructureKind, SEPARATION_DEFAULT,
};
use crate::error::{Error, Result};
use crate::estimator::{
    fit, tandem, FitOptions, FittedModel, StartOutcome, StartRun, TandemFit,
};
use crate::metrics::{adjusted_rand_index, FitReport, ScoreBasis};
use crate::model::PathModelSpec;
use crate::selection::{select_k, SelectionOptions};

/// Tokens that mean "missing" in a CSV cell (case-insensitive, after
/// trimming).
const MISSING_TOKENS: &[&str] = &["", "na", "n/a", "nan", "null", "."];

/// A CSV table as read from disk: named columns, optionally missing cells.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub column_names: Vec<String>,
    /// Row-major cells; `None` is a missing value.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    /// Missing-value count per column, in column order.
    pub fn missing_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_cols()];
        for row in &self.cells {
            for (c, cell) in row.iter().enumerate() {
                if cell.is_none() {
                    counts[c] += 1;
                }
            }
        }
        counts
    }

    /// Map survey answers on a 1–10 scale onto 0–100:
    /// `x = (v − 1) · 100 / 9`. Missing cells stay missing.
    pub fn rescale_survey(&mut self) {
        for row in &mut self.cells {
            for cell in row.iter_mut() {
                if let Some(v) = cell {
                    *v = (*v - 1.0) * 100.0 / 9.0;
                }
            }
        }
    }

    /// Replace every missing cell with its column's observed mean.
    /// Returns how many cells were filled in.
    pub fn impute_mean(&mut self) -> Result<usize> {
        let mut filled = 0usize;
        for c in 0..self.n_cols() {
            let observed: Vec<f64> = self.cells.iter().filter_map(|r| r[c]).collect();
            if observed.is_empty() {
                return Err(Error::AllMissing {
                    name: self.column_names[c].clone(),
                });
            }
            if observed.len() == self.n_rows() {
                continue;
            }
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            for row in &mut self.cells {
                if row[c].is_none() {
                    row[c] = Some(mean);
                    filled += 1;
                }
            }
        }
        Ok(filled)
    }

    /// Error out if any column still has missing cells.
    pub fn require_complete(&self) -> Result<()> {
        for (c, count) in self.missing_counts().into_iter().enumerate() {
            if count > 0 {
                return Err(Error::MissingValues {
                    name: self.column_names[c].clone(),
                    count,
                });
            }
        }
        Ok(())
    }

    /// The cells as a dense matrix; the dataset must be complete.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        self.require_complete()?;
        let n = self.n_rows();
        let j = self.n_cols();
        let mut m = DMatrix::zeros(n, j);
        for (r, row) in self.cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                m[(r, c)] = cell.unwrap();
            }
        }
        Ok(m)
    }
}

/// Read a headed CSV file of numbers. Empty cells and the usual
/// missing-value spellings become `None`; anything else that does not parse
/// as a number is an error naming the row and column.
pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let column_names: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    if column_names.is_empty() {
        return Err(Error::Csv(format!("{}: no columns", path.display())));
    }
    for (i, name) in column_names.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::Csv(format!("column {} has an empty name", i + 1)));
        }
        if column_names[..i].contains(name) {
            return Err(Error::Csv(format!("duplicate column name {name:?}")));
        }
    }
    let mut cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let mut row = Vec::with_capacity(column_names.len());
        for (c, token) in record.iter().enumerate() {
            if MISSING_TOKENS.contains(&token.to_ascii_lowercase().as_str()) {
                row.push(None);
            } else {
                let value: f64 = token.parse().map_err(|_| Error::NonNumeric {
                    row: i + 1,
                    column: column_names[c].clone(),
                    token: token.to_string(),
                })?;
                row.push(Some(value));
            }
        }
        cells.push(row);
    }
    Ok(Dataset {
        column_names,
        cells,
    })
}

/// Read a one-column CSV of integer group labels (any base value; the
/// adjusted Rand index does not care).
pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let n_cols = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .len();
    if n_cols != 1 {
        return Err(Error::Csv(format!(
            "label file {} must have exactly one column, found {n_cols}",
            path.display()
        )));
    }
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let token = record.get(0).unwrap_or("");
        let value: usize = token.parse().map_err(|_| Error::NonNumeric {
            row: i + 1,
            column: "labels".into(),
            token: token.to_string(),
        })?;
        labels.push(value);
    }
    Ok(labels)
}

/// Five-number summary (plus mean) of one group's values.
#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    /// 1-based group number.
    pub group: usize,
    pub size: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Per-group five-number summaries of `values` split by `labels`
/// (0-based, `k` groups). Empty groups are skipped.
pub fn summarize_groups(values: &[f64], labels: &[usize], k: usize) -> Vec<GroupSummary> {
    assert_eq!(values.len(), labels.len(), "one label per value");
    let mut out = Vec::new();
    for g in 0..k {
        let mut group: Vec<f64> = values
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == g)
            .map(|(&v, _)| v)
            .collect();
        if group.is_empty() {
            continue;
        }
        group.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| crate::linalg::quantile_sorted(&group, p);
        out.push(GroupSummary {
            group: g + 1,
            size: group.len(),
            mean: group.iter().sum::<f64>() / group.len() as f64,
            min: group[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: group[group.len() - 1],
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

/// A dense matrix in JSON: row-major values plus explicit dimensions and
/// optional axis names.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub row_names: Option<Vec<String>>,
    pub col_names: Option<Vec<String>>,
    /// Row-major values, `rows × cols` of them.
    pub values: Vec<f64>,
}

impl MatrixJson {
    pub fn new(
        m: &DMatrix<f64>,
        row_names: Option<Vec<String>>,
        col_names: Option<Vec<String>>,
    ) -> Self {
        let mut values = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                values.push(m[(r, c)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            row_names,
            col_names,
            values,
        }
    }
}

/// Write `bytes` to `path` atomically: write a temporary sibling, then
/// rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug, Serialize)]
struct MetaJson {
    created_unix_ms: u128,
    elapsed_ms: u128,
    tool: &'static str,
    version: &'static str,
    argv: Vec<String>,
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Write the primary JSON output plus its timing sidecar. Only the sidecar
/// carries timestamps, so the primary file is reproducible.
fn write_result<T: Serialize>(
    path: &Path,
    value: &T,
    started: Instant,
    argv: &[String],
) -> Result<()> {
    write_atomic(path, &json_bytes(value)?)?;
    let meta = MetaJson {
        created_unix_ms: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
        elapsed_ms: started.elapsed().as_millis(),
        tool: "plskm",
        version: env!("CARGO_PKG_VERSION"),
        argv: argv.to_vec(),
    };
    write_atomic(&meta_path(path), &json_bytes(&meta)?)?;
    Ok(())
}

fn csv_into_bytes<F>(names: &[String], n_rows: usize, mut cell: F) -> Result<Vec<u8>>
where
    F: FnMut(usize, usize) -> Option<f64>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(names)
        .map_err(|e| Error::Csv(e.to_string()))?;
    for r in 0..n_rows {
        let row: Vec<String> = (0..names.len())
            .map(|c| cell(r, c).map_or_else(String::new, |v| format!("{v}")))
            .collect();
        writer
            .write_record(&row)
            .map_err(|e| Error::Csv(e.to_string()))?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Csv(e.to_string()))
}

fn write_labels_file(path: &Path, labels: &[usize]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["segment"])
        .map_err(|e| Error::Csv(e.to_string()))?;
    for &l in labels {
        writer
            .write_record([(l + 1).to_string()])
            .map_err(|e| Error::Csv(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Csv(e.to_string()))?;
    write_atomic(path, &bytes)
}

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "plskm",
    version,
    about = "Joint latent-variable path modeling and row clustering"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the joint model for a fixed number of clusters.
    Fit(FitArgs),
    /// Compare cluster counts and report pseudo-F and gap evidence.
    SelectK(SelectKArgs),
    /// Two-step baseline: fit the paths on the pooled data, then cluster
    /// the scores.
    Tandem(TandemArgs),
    /// Generate a synthetic dataset with known segments.
    Simulate(SimulateArgs),
    /// Run a replication grid and summarize recovery per cell.
    Benchmark(BenchmarkArgs),
    /// Check a model file and report every violation.
    ValidateSpec(ValidateSpecArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImputeArg {
    /// Replace missing cells with the column mean.
    Mean,
    /// No imputation: refuse to run when cells are missing.
    #[value(alias = "fail")]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    /// Score rows from the data (works for any cluster count).
    Data,
    /// Score rows from their cluster centroid.
    Fitted,
}

impl From<BasisArg> for ScoreBasis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Data => ScoreBasis::Data,
            BasisArg::Fitted => ScoreBasis::Fitted,
        }
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with one named column per manifest variable.
    #[arg(long)]
    data: PathBuf,
    /// Model description file.
    #[arg(long)]
    model: PathBuf,
    /// What to do about missing cells.
    #[arg(long, value_enum, default_value_t = ImputeArg::Mean)]
    impute: ImputeArg,
    /// Map 1–10 survey answers onto 0–100 before anything else.
    #[arg(long, visible_alias = "rescale-ecsi")]
    rescale_survey: bool,
}

#[derive(Debug, Args)]
struct FitTuning {
    /// Random restarts of the alternating fit.
    #[arg(long, default_value_t = 15)]
    starts: usize,
    /// Master seed for all randomness.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Cap on alternation sweeps per start.
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    /// Stop once the fitted structure moves less than this (squared).
    #[arg(long, default_value_t = 1e-12)]
    tolerance: f64,
}

impl FitTuning {
    fn options(&self) -> FitOptions {
        FitOptions {
            n_starts: self.starts,
            rng_seed: self.seed,
            max_iterations: self.max_iter,
            tolerance: self.tolerance,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of clusters.
    #[arg(long, visible_alias = "k")]
    clusters: usize,
    #[command(flatten)]
    tuning: FitTuning,
    /// Which scores the fit report uses.
    #[arg(long, value_enum, default_value_t = BasisArg::Data)]
    score_basis: BasisArg,
    /// Known labels to compare against (one-column CSV).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the full result as JSON here instead of printing a summary.
    #[arg(long, visible_alias = "out")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectKArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 6)]
    k_max: usize,
    /// Reference datasets for the gap statistic.
    #[arg(long, default_value_t = 50)]
    references: usize,
    /// K-means restarts per reference dataset.
    #[arg(long, default_value_t = 3)]
    reference_starts: usize,
    /// Cluster pooled-model scores instead of refitting jointly per K.
    #[arg(long)]
    plain_scores: bool,
    #[command(flatten)]
    tuning: FitTuning,
    #[arg(long, visible_alias = "out")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TandemArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of clusters.
    #[arg(long, visible_alias = "k")]
    clusters: usize,
    #[command(flatten)]
    tuning: FitTuning,
    /// Known labels to compare against (one-column CSV).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, visible_alias = "out")]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    /// Two exogenous drivers, one outcome; segments on a grid.
    TwoDriver,
    /// Driver → mediator → outcome; segments on a grid.
    Chain,
    /// Segments hidden behind irrelevant columns and an outcome unrelated
    /// to its drivers.
    Masked,
    /// Survey-shaped 24-item dataset on a 1–10 scale with missing cells.
    Survey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProfileArg {
    Balanced,
    OneDominant,
    OneSmall,
}

impl From<ProfileArg> for SegmentProfile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Balanced => SegmentProfile::Balanced,
            ProfileArg::OneDominant => SegmentProfile::OneDominant,
            ProfileArg::OneSmall => SegmentProfile::OneSmall,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    /// Rows to generate.
    #[arg(long, default_value_t = 150)]
    rows: usize,
    /// Number of segments (two-driver and chain scenarios only).
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    /// Segment-size profile (two-driver and chain scenarios only).
    #[arg(long, value_enum, default_value_t = ProfileArg::Balanced)]
    profile: ProfileArg,
    /// Noise level (two-driver and chain scenarios only).
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    /// Distance scale between segment centers (two-driver and chain
    /// scenarios only).
    #[arg(long, default_value_t = SEPARATION_DEFAULT)]
    separation: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Where to write the dataset CSV.
    #[arg(long, visible_alias = "out")]
    output: PathBuf,
    /// Also write the true segment labels here (one-column CSV, 1-based).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Also write the matching model file here.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// TOML file with a [[cells]] table per grid cell.
    #[arg(long)]
    grid: PathBuf,
    /// Also run the two-step baseline in every cell.
    #[arg(long)]
    tandem: bool,
    /// Override the replication count of every cell.
    #[arg(long)]
    replicates: Option<usize>,
    #[command(flatten)]
    tuning: FitTuning,
    #[arg(long, visible_alias = "out")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateSpecArgs {
    /// Model description file to check.
    model: PathBuf,
}

// ---------------------------------------------------------------------------
// JSON result shapes
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct StartJson {
    seed: u64,
    status: &'static str,
    objective: Option<f64>,
    iterations: Option<usize>,
    error: Option<String>,
}

fn start_json(run: &StartRun) -> StartJson {
    match &run.outcome {
        StartOutcome::Finished {
            objective,
            n_iterations,
            converged,
        } => StartJson {
            seed: run.seed,
            status: if *converged { "converged" } else { "stopped" },
            objective: Some(*objective),
            iterations: Some(*n_iterations),
            error: None,
        },
        StartOutcome::Failed { message } => StartJson {
            seed: run.seed,
            status: "failed",
            objective: None,
            iterations: None,
            error: Some(message.clone()),
        },
    }
}

#[derive(Debug, Serialize)]
struct LvGroupSummaries {
    lv: String,
    groups: Vec<GroupSummary>,
}

#[derive(Debug, Serialize)]
struct FitJson<'a> {
    command: &'static str,
    data_file: String,
    model_file: String,
    n_rows: usize,
    n_columns: usize,
    n_clusters: usize,
    seed: u64,
    n_starts: usize,
    max_iterations: usize,
    tolerance: f64,
    rescaled: bool,
    imputed_cells: usize,
    converged: bool,
    n_iterations: usize,
    best_start: usize,
    objective: f64,
    /// 1-based cluster label per row.
    membership: Vec<usize>,
    cluster_sizes: Vec<usize>,
    loadings: MatrixJson,
    centroids: MatrixJson,
    latent_centroids: MatrixJson,
    path_coefficients: MatrixJson,
    truth_ari: Option<f64>,
    report: &'a FitReport,
    lv_score_summaries: Vec<LvGroupSummaries>,
    starts: Vec<StartJson>,
}

#[derive(Debug, Serialize)]
struct TandemJson {
    command: &'static str,
    data_file: String,
    model_file: String,
    n_rows: usize,
    n_clusters: usize,
    seed: u64,
    n_starts: usize,
    rescaled: bool,
    imputed_cells: usize,
    pls_iterations: usize,
    pls_converged: bool,
    within_ss: f64,
    membership: Vec<usize>,
    cluster_sizes: Vec<usize>,
    loadings: MatrixJson,
    path_coefficients: MatrixJson,
    score_centroids: MatrixJson,
    truth_ari: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SelectKJson {
    command: &'static str,
    data_file: String,
    model_file: String,
    n_rows: usize,
    seed: u64,
    plain_scores: bool,
    rescaled: bool,
    imputed_cells: usize,
    result: crate::selection::KSelectionResult,
}

#[derive(Debug, Serialize)]
struct BenchmarkJson {
    command: &'static str,
    grid_file: String,
    master_seed: u64,
    include_tandem: bool,
    cells: Vec<CellSummary>,
}

// ---------------------------------------------------------------------------
// Command implementations
// ---------------------------------------------------------------------------

fn read_model_file(path: &Path) -> Result<PathModelSpec> {
    let text = std::fs::read_to_string(path)?;
    crate::model::parse_valid_model(&text)
}

/// Ingest, optionally rescale, impute, and standardize a data file.
fn load_prepared(args: &DataArgs) -> Result<(DataMatrix, usize)> {
    let mut dataset = ingest_csv(&args.data)?;
    if args.rescale_survey {
        dataset.rescale_survey();
    }
    let imputed = match args.impute {
        ImputeArg::Mean => dataset.impute_mean()?,
        ImputeArg::None => {
            dataset.require_complete()?;
            0
        }
    };
    let matrix = dataset.to_matrix()?;
    let standardized = DataMatrix::standardize(&matrix, &dataset.column_names)?;
    Ok((standardized, imputed))
}

fn load_truth(path: &Option<PathBuf>, n_rows: usize) -> Result<Option<Vec<usize>>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let labels = read_labels_csv(p)?;
            if labels.len() != n_rows {
                return Err(Error::Dimension {
                    context: "truth labels".into(),
                    expected: format!("{n_rows} rows"),
                    found: format!("{} labels", labels.len()),
                });
            }
            Ok(Some(labels))
        }
    }
}

fn fit_matrices(fitted: &FittedModel) -> (MatrixJson, MatrixJson, MatrixJson, MatrixJson) {
    let mv_names = fitted.column_names.clone();
    let lv_names = fitted.model.lv_names().to_vec();
    let cluster_names: Vec<String> = (1..=fitted.n_clusters)
        .map(|k| format!("cluster{k}"))
        .collect();
    (
        MatrixJson::new(&fitted.loadings, Some(mv_names.clone()), Some(lv_names.clone())),
        MatrixJson::new(&fitted.centroids, Some(cluster_names.clone()), Some(mv_names)),
        MatrixJson::new(
            &fitted.latent_centroids(),
            Some(cluster_names),
            Some(lv_names.clone()),
        ),
        MatrixJson::new(
            &fitted.path_coefficients,
            Some(lv_names.clone()),
            Some(lv_names),
        ),
    )
}

fn path_lines(model: &PathModelSpec, coefficients: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for &(source, target) in model.paths() {
        out.push_str(&format!(
            "  {} -> {}: {:+.4}\n",
            model.lv_names()[source],
            model.lv_names()[target],
            coefficients[(target, source)]
        ));
    }
    out
}

fn cmd_fit(args: &FitArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let (data, imputed) = load_prepared(&args.data)?;
    let model = read_model_file(&args.data.model)?;
    let truth = load_truth(&args.truth, data.n_rows())?;
    let opts = args.tuning.options();
    let fitted = fit(&data, &model, args.clusters, &opts)?;
    let report = FitReport::new(&fitted, &data, args.score_basis.into())?;
    let truth_ari = truth
        .as_ref()
        .map(|t| adjusted_rand_index(fitted.membership.labels(), t));

    let scores = fitted.scores(&data);
    let lv_score_summaries: Vec<LvGroupSummaries> = (0..model.n_lvs())
        .map(|p| {
            let column: Vec<f64> = (0..data.n_rows()).map(|i| scores[(i, p)]).collect();
            LvGroupSummaries {
                lv: model.lv_names()[p].clone(),
                groups: summarize_groups(&column, fitted.membership.labels(), args.clusters),
            }
        })
        .collect();

    let (loadings, centroids, latent_centroids, path_coefficients) = fit_matrices(&fitted);
    let result = FitJson {
        command: "fit",
        data_file: args.data.data.display().to_string(),
        model_file: args.data.model.display().to_string(),
        n_rows: data.n_rows(),
        n_columns: data.n_cols(),
        n_clusters: args.clusters,
        seed: opts.rng_seed,
        n_starts: opts.n_starts,
        max_iterations: opts.max_iterations,
        tolerance: opts.tolerance,
        rescaled: args.data.rescale_survey,
        imputed_cells: imputed,
        converged: fitted.converged,
        n_iterations: fitted.n_iterations,
        best_start: fitted.best_start,
        objective: fitted.objective,
        membership: fitted.membership.one_based(),
        cluster_sizes: fitted.membership.counts(),
        loadings,
        centroids,
        latent_centroids,
        path_coefficients,
        truth_ari,
        report: &report,
        lv_score_summaries,
        starts: fitted.start_runs.iter().map(start_json).collect(),
    };

    match &args.output {
        Some(path) => {
            write_result(path, &result, started, argv)?;
            println!("wrote {}", path.display());
        }
        None => {
            println!(
                "fit: {} rows, {} clusters, objective {:.6}, {} sweeps, converged: {}",
                data.n_rows(),
                args.clusters,
                fitted.objective,
                fitted.n_iterations,
                fitted.converged
            );
            println!("cluster sizes: {:?}", fitted.membership.counts());
            if imputed > 0 {
                println!("imputed {imputed} missing cells with column means");
            }
            if let Some(ari) = truth_ari {
                println!("adjusted Rand index against truth: {ari:.4}");
            }
            println!("\npath coefficients:\n{}", path_lines(&model, &fitted.path_coefficients));
            println!("{}", report.to_markdown());
        }
    }
    Ok(())
}

fn cmd_select_k(args: &SelectKArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let (data, imputed) = load_prepared(&args.data)?;
    let model = read_model_file(&args.data.model)?;
    let options = SelectionOptions {
        k_min: args.k_min,
        k_max: args.k_max,
        n_reference: args.references,
        reference_starts: args.reference_starts,
        use_plain_scores: args.plain_scores,
        fit: args.tuning.options(),
    };
    let result = select_k(&data, &model, &options)?;

    match &args.output {
        Some(path) => {
            let out = SelectKJson {
                command: "select-k",
                data_file: args.data.data.display().to_string(),
                model_file: args.data.model.display().to_string(),
                n_rows: data.n_rows(),
                seed: args.tuning.seed,
                plain_scores: args.plain_scores,
                rescaled: args.data.rescale_survey,
                imputed_cells: imputed,
                result,
            };
            write_result(path, &out, started, argv)?;
            println!("wrote {}", path.display());
        }
        None => {
            println!("k   objective      within-SS      pseudo-F       gap      gap-sd");
            for c in &result.candidates {
                let pf = c
                    .pseudo_f
                    .map_or_else(|| "      —".into(), |v| format!("{v:12.3}"));
                println!(
                    "{:<3} {:<14.6} {:<14.6} {} {:8.4} {:8.4}",
                    c.k, c.objective, c.within_ss, pf, c.gap, c.gap_sd
                );
            }
            println!("\nchosen k (pseudo-F): {}", result.chosen_k);
            match result.gap_choice {
                Some(k) => println!("gap statistic choice: {k}"),
                None => println!("gap statistic choice: none"),
            }
            if result.weak_evidence {
                println!("note: the evidence for any clustering here is weak");
            }
            for w in &result.warnings {
                println!("warning: {w}");
            }
        }
    }
    Ok(())
}

fn cmd_tandem(args: &TandemArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let (data, imputed) = load_prepared(&args.data)?;
    let model = read_model_file(&args.data.model)?;
    let truth = load_truth(&args.truth, data.n_rows())?;
    let opts = args.tuning.options();
    let result: TandemFit = tandem(&data, &model, args.clusters, &opts)?;
    let truth_ari = truth
        .as_ref()
        .map(|t| adjusted_rand_index(result.membership.labels(), t));

    let lv_names = model.lv_names().to_vec();
    let cluster_names: Vec<String> = (1..=args.clusters).map(|k| format!("cluster{k}")).collect();
    let out = TandemJson {
        command: "tandem",
        data_file: args.data.data.display().to_string(),
        model_file: args.data.model.display().to_string(),
        n_rows: data.n_rows(),
        n_clusters: args.clusters,
        seed: opts.rng_seed,
        n_starts: opts.n_starts,
        rescaled: args.data.rescale_survey,
        imputed_cells: imputed,
        pls_iterations: result.pls.n_iterations,
        pls_converged: result.pls.converged,
        within_ss: result.within_ss,
        membership: result.membership.one_based(),
        cluster_sizes: result.membership.counts(),
        loadings: MatrixJson::new(
            &result.pls.loadings,
            Some(result.pls.column_names.clone()),
            Some(lv_names.clone()),
        ),
        path_coefficients: MatrixJson::new(
            &result.pls.path_coefficients,
            Some(lv_names.clone()),
            Some(lv_names.clone()),
        ),
        score_centroids: MatrixJson::new(&result.centroids, Some(cluster_names), Some(lv_names)),
        truth_ari,
    };

    match &args.output {
        Some(path) => {
            write_result(path, &out, started, argv)?;
            println!("wrote {}", path.display());
        }
        None => {
            println!(
                "tandem: {} rows, {} clusters, score within-SS {:.6}",
                data.n_rows(),
                args.clusters,
                result.within_ss
            );
            println!("cluster sizes: {:?}", result.membership.counts());
            if let Some(ari) = truth_ari {
                println!("adjusted Rand index against truth: {ari:.4}");
            }
            println!(
                "\npath coefficients:\n{}",
                path_lines(&model, &result.pls.path_coefficients)
            );
        }
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (names, n_rows, cell_fn, truth, model): (
        Vec<String>,
        usize,
        Box<dyn FnMut(usize, usize) -> Option<f64>>,
        Vec<usize>,
        PathModelSpec,
    );
    match args.scenario {
        ScenarioArg::TwoDriver | ScenarioArg::Chain => {
            let kind = match args.scenario {
                ScenarioArg::TwoDriver => StructureKind::TwoDriver,
                _ => StructureKind::Chain,
            };
            let mut config = SimConfig::new(
                kind,
                args.clusters,
                args.rows,
                args.profile.into(),
                args.sigma,
                args.seed,
            )?;
            config.separation = args.separation;
            let d = generate_dataset(&config)?;
            let raw = d.raw.clone();
            names = d.column_names.clone();
            n_rows = raw.nrows();
            cell_fn = Box::new(move |r, c| Some(raw[(r, c)]));
            truth = d.truth.clone();
            model = d.model;
        }
        ScenarioArg::Masked => {
            let d = masked_dataset(args.rows, args.seed)?;
            let raw = d.raw.clone();
            names = d.column_names.clone();
            n_rows = raw.nrows();
            cell_fn = Box::new(move |r, c| Some(raw[(r, c)]));
            truth = d.truth.clone();
            model = d.model;
        }
        ScenarioArg::Survey => {
            let d = make_ecsi_synthetic(args.rows, args.seed)?;
            let rows = d.rows.clone();
            names = d.column_names.clone();
            n_rows = rows.len();
            cell_fn = Box::new(move |r, c| rows[r][c]);
            truth = d.truth.clone();
            model = d.model;
        }
    }

    let mut cell_fn = cell_fn;
    let bytes = csv_into_bytes(&names, n_rows, &mut *cell_fn)?;
    write_atomic(&args.output, &bytes)?;
    println!("wrote {} ({} rows, {} columns)", args.output.display(), n_rows, names.len());

    let mut sizes = std::collections::BTreeMap::new();
    for &t in &truth {
        *sizes.entry(t).or_insert(0usize) += 1;
    }
    let sizes: Vec<usize> = sizes.into_values().collect();
    println!("true segment sizes: {sizes:?}");

    if let Some(path) = &args.labels {
        write_labels_file(path, &truth)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = &args.model_out {
        write_atomic(path, model.to_text().as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Debug, serde::Deserialize)]
struct GridConfigFile {
    cells: Vec<GridCell>,
}

fn cmd_benchmark(args: &BenchmarkArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&args.grid)?;
    let mut grid: GridConfigFile =
        toml::from_str(&text).map_err(|e| Error::Toml(format!("{}: {e}", args.grid.display())))?;
    if grid.cells.is_empty() {
        return Err(Error::InvalidConfig("grid file has no cells".into()));
    }
    if let Some(reps) = args.replicates {
        for cell in &mut grid.cells {
            cell.replications = reps;
        }
    }
    let opts = args.tuning.options();
    let cells = run_experiment_grid(&grid.cells, &opts, args.tandem, args.tuning.seed)?;

    match &args.output {
        Some(path) => {
            let out = BenchmarkJson {
                command: "benchmark",
                grid_file: args.grid.display().to_string(),
                master_seed: args.tuning.seed,
                include_tandem: args.tandem,
                cells,
            };
            write_result(path, &out, started, argv)?;
            println!("wrote {}", path.display());
        }
        None => {
            println!(
                "{:<11} {:<2} {:<12} {:<5} {:<5} {:<5}  mean-ARI  sd-ARI  exact  tandem-ARI",
                "kind", "k", "profile", "sigma", "rows", "reps"
            );
            for cell in &cells {
                let tandem_col = cell
                    .mean_tandem_ari
                    .map_or_else(|| "     —".into(), |v| format!("{v:10.4}"));
                println!(
                    "{:<11} {:<2} {:<12} {:<5} {:<5} {:<5}  {:8.4} {:7.4} {:6.2} {}",
                    format!("{:?}", cell.cell.kind).to_lowercase(),
                    cell.cell.n_clusters,
                    format!("{:?}", cell.cell.profile).to_lowercase(),
                    cell.cell.sigma,
                    cell.cell.n_rows,
                    cell.cell.replications,
                    cell.mean_ari,
                    cell.sd_ari,
                    cell.exact_rate,
                    tandem_col
                );
            }
        }
    }
    Ok(())
}

fn cmd_validate_spec(args: &ValidateSpecArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.model)?;
    let model = crate::model::parse_model(&text)?;
    model.validate().into_result()?;
    println!("{} is valid", args.model.display());
    println!(
        "  {} latent variables ({} exogenous), {} manifest variables, {} paths",
        model.n_lvs(),
        model.n_exogenous(),
        model.n_mvs(),
        model.paths().len()
    );
    for p in 0..model.n_lvs() {
        let members: Vec<&str> = model
            .block_members(p)
            .iter()
            .map(|&j| model.mv_names()[j].as_str())
            .collect();
        println!("  {}: {}", model.lv_names()[p], members.join(", "));
    }
    Ok(())
}

/// Exit code for an error: 2 for problems in what the user asked for,
/// 1 for problems encountered while doing it.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. }
        | Error::InvalidModel(_)
        | Error::InvalidOptions(_)
        | Error::InvalidConfig(_)
        | Error::MissingColumn { .. }
        | Error::Dimension { .. } => 2,
        _ => 1,
    }
}

/// Parse `argv` and run the chosen subcommand. Returns the process exit
/// code; errors are printed to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv_strings: Vec<String> = argv
        .iter()
        .map(|s| s.to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Fit(args) => cmd_fit(args, &argv_strings),
        Command::SelectK(args) => cmd_select_k(args, &argv_strings),
        Command::Tandem(args) => cmd_tandem(args, &argv_strings),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Benchmark(args) => cmd_benchmark(args, &argv_strings),
        Command::ValidateSpec(args) => cmd_validate_spec(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::fs;

    fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn ingest_reads_numbers_and_missing_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "d.csv",
            "a,b\n1.5,2\nNA, -3e-1 \n,4\n",
        );
        let d = ingest_csv(&path).unwrap();
        assert_eq!(d.column_names, vec!["a", "b"]);
        assert_eq!(d.cells[0], vec![Some(1.5), Some(2.0)]);
        assert_eq!(d.cells[1], vec![None, Some(-0.3)]);
        assert_eq!(d.cells[2], vec![None, Some(4.0)]);
        assert_eq!(d.missing_counts(), vec![2, 0]);
    }

    #[test]
    fn ingest_rejects_garbage_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "d.csv", "a,b\n1,2\n3,oops\n");
        let err = ingest_csv(&path).unwrap_err();
        match err {
            Error::NonNumeric { row, column, token } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
                assert_eq!(token, "oops");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn ingest_rejects_duplicate_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "d.csv", "a,a\n1,2\n");
        assert!(matches!(ingest_csv(&path), Err(Error::Csv(_))));
    }

    #[test]
    fn mean_imputation_fills_in_column_means() {
        let mut d = Dataset {
            column_names: vec!["a".into(), "b".into()],
            cells: vec![
                vec![Some(1.0), Some(10.0)],
                vec![None, Some(20.0)],
                vec![Some(3.0), Some(30.0)],
            ],
        };
        let filled = d.impute_mean().unwrap();
        assert_eq!(filled, 1);
        assert_eq!(d.cells[1][0], Some(2.0));
    }

    #[test]
    fn imputation_needs_at_least_one_observed_value() {
        let mut d = Dataset {
            column_names: vec!["a".into()],
            cells: vec![vec![None], vec![None]],
        };
        assert!(matches!(d.impute_mean(), Err(Error::AllMissing { .. })));
    }

    #[test]
    fn require_complete_names_the_offending_column() {
        let d = Dataset {
            column_names: vec!["a".into(), "b".into()],
            cells: vec![vec![Some(1.0), None], vec![Some(2.0), None]],
        };
        match d.require_complete().unwrap_err() {
            Error::MissingValues { name, count } => {
                assert_eq!(name, "b");
                assert_eq!(count, 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn survey_rescaling_maps_the_endpoints_exactly() {
        let mut d = Dataset {
            column_names: vec!["a".into()],
            cells: vec![vec![Some(1.0)], vec![Some(10.0)], vec![Some(5.5)]],
        };
        d.rescale_survey();
        assert_abs_diff_eq!(d.cells[0][0].unwrap(), 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(d.cells[1][0].unwrap(), 100.0, epsilon = 0.0);
        assert_abs_diff_eq!(d.cells[2][0].unwrap(), 50.0, epsilon = 1e-12);
    }

    #[test]
    fn group_summaries_use_interpolated_quartiles() {
        let values = [1.0, 2.0, 3.0, 4.0, 100.0];
        let labels = [0usize, 0, 0, 0, 1];
        let s = summarize_groups(&values, &labels, 2);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].size, 4);
        assert_abs_diff_eq!(s[0].q1, 1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(s[0].median, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s[0].q3, 3.25, epsilon = 1e-12);
        assert_eq!(s[1].size, 1);
        assert_abs_diff_eq!(s[1].median, 100.0, epsilon = 0.0);
    }

    #[test]
    fn path_lines_follow_the_arrow_direction() {
        let model = crate::model::parse_valid_model(
            "lv A exogenous\nlv B endogenous\nmv x1 -> A\nmv x2 -> B\npath A -> B\n",
        )
        .unwrap();
        let mut coef = DMatrix::zeros(2, 2);
        coef[(1, 0)] = 0.5; // row = target, column = source
        let lines = path_lines(&model, &coef);
        assert!(lines.contains("A -> B: +0.5000"), "got: {lines}");
    }

    #[test]
    fn simulate_then_fit_round_trip_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("sim.csv");
        let labels = dir.path().join("labels.csv");
        let model = dir.path().join("model.spec");
        let args = |data: &Path, labels: &Path, model: &Path| {
            vec![
                "plskm".to_string(),
                "simulate".into(),
                "--scenario".into(),
                "two-driver".into(),
                "--rows".into(),
                "45".into(),
                "--sigma".into(),
                "0.1".into(),
                "--seed".into(),
                "7".into(),
                "--output".into(),
                data.display().to_string(),
                "--labels".into(),
                labels.display().to_string(),
                "--model-out".into(),
                model.display().to_string(),
            ]
        };
        assert_eq!(run(args(&data, &labels, &model)), 0);
        let first = fs::read(&data).unwrap();

        let data2 = dir.path().join("sim2.csv");
        assert_eq!(run(args(&data2, &labels, &model)), 0);
        assert_eq!(first, fs::read(&data2).unwrap(), "same seed, same bytes");

        // Fit against the generated truth; the primary JSON must be
        // reproducible byte for byte while the sidecar may differ.
        let out1 = dir.path().join("fit1.json");
        let out2 = dir.path().join("fit2.json");
        for out in [&out1, &out2] {
            let code = run(vec![
                "plskm".to_string(),
                "fit".into(),
                "--data".into(),
                data.display().to_string(),
                "--model".into(),
                model.display().to_string(),
                "--clusters".into(),
                "3".into(),
                "--starts".into(),
                "8".into(),
                "--truth".into(),
                labels.display().to_string(),
                "--output".into(),
                out.display().to_string(),
            ]);
            assert_eq!(code, 0);
        }
        let a = fs::read(&out1).unwrap();
        let b = fs::read(&out2).unwrap();
        assert_eq!(a, b, "primary output must not embed timestamps");
        assert!(meta_path(&out1).exists());

        let parsed: serde_json::Value = serde_json::from_slice(&a).unwrap();
        assert_eq!(parsed["command"], "fit");
        assert!(parsed["truth_ari"].as_f64().unwrap() > 0.99);
        assert_eq!(parsed["membership"].as_array().unwrap().len(), 45);
        // Membership labels are 1-based in the JSON output.
        let min_label = parsed["membership"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .min()
            .unwrap();
        assert_eq!(min_label, 1);
    }

    #[test]
    fn validate_spec_flags_broken_models_with_exit_code_2() {
        let dir = tempfile::tempdir().unwrap();
        let bad = write_file(
            dir.path(),
            "bad.spec",
            "lv A exogenous\nlv B endogenous\nmv x1 -> A\npath B -> A\n",
        );
        let code = run(vec![
            "plskm".to_string(),
            "validate-spec".into(),
            bad.display().to_string(),
        ]);
        assert_eq!(code, 2);

        let good = write_file(
            dir.path(),
            "good.spec",
            "lv A exogenous\nlv B endogenous\nmv x1 -> A\nmv x2 -> B\npath A -> B\n",
        );
        let code = run(vec![
            "plskm".to_string(),
            "validate-spec".into(),
            good.display().to_string(),
        ]);
        assert_eq!(code, 0);
    }

    #[test]
    fn missing_data_file_exits_with_code_1() {
        let dir = tempfile::tempdir().unwrap();
        let model = write_file(
            dir.path(),
            "m.spec",
            "lv A exogenous\nlv B endogenous\nmv x1 -> A\nmv x2 -> B\npath A -> B\n",
        );
        let code = run(vec![
            "plskm".to_string(),
            "fit".into(),
            "--data".into(),
            dir.path().join("nope.csv").display().to_string(),
            "--model".into(),
            model.display().to_string(),
            "--clusters".into(),
            "2".into(),
        ]);
        assert_eq!(code, 1);
    }
}
