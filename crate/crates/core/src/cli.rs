//! Command-line front end: dataset and model files, and the `matmix` subcommands.
//!
//! A dataset directory holds `manifest.json`, `data.csv` (sample `i` occupies
//! rows `i·r .. i·r+r-1`, one matrix row per line) and optionally `labels.csv`
//! (one integer label per line). Numbers are written as shortest round-trip
//! decimals, so reading a file back reproduces the in-memory values exactly.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::evalgen::{
    adjusted_rand_index, clustering_accuracy, generate_scenario, kmeans_vectorized, Scenario, ScenarioSpec,
};
use crate::linalg::derive_seed;
use crate::matnorm::{ComponentParams, MatrixStack};
use crate::mixture::{fit_em, FitConfig, FitReport, MixtureModel, PenaltyKind, PenaltySpec};
use crate::modelsel::{select_k, CvplConfig, CvplTable, Split};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MODEL_FILE: &str = "model.json";
pub const PRED_FILE: &str = "labels_pred.csv";
pub const BASELINE_FILE: &str = "labels_baseline.csv";
pub const CVPL_FILE: &str = "cvpl.csv";
pub const LAYOUT: &str = "row-major-stacked";
pub const SCHEMA_VERSION: &str = "1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Failure of a CLI command, carrying its exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Usage(format!("{}: file not found", path.display())),
        _ => io_err(path, e),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n: usize,
    pub r: usize,
    pub p: usize,
    pub layout: String,
    pub labels_present: bool,
    /// SHA-256 of `data.csv`, lowercase hex. Verified on load when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub stack: MatrixStack,
    pub labels: Option<Vec<usize>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn format_stack(stack: &MatrixStack) -> String {
    let mut out = String::new();
    for m in stack.iter() {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{:?}", m[(i, j)]).expect("writing to a String");
            }
            out.push('\n');
        }
    }
    out
}

/// Parse `n·r` lines of `p` comma-separated finite numbers; errors name the 1-based line.
pub fn parse_stack(text: &str, n: usize, r: usize, p: usize) -> Result<MatrixStack, CliError> {
    if n == 0 || r == 0 || p == 0 {
        return Err(CliError::Usage(format!("manifest dimensions must be positive, got n={n} r={r} p={p}")));
    }
    let mut values = Vec::with_capacity(n * r * p);
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if rows == n * r {
            if line.trim().is_empty() {
                continue;
            }
            return Err(CliError::Usage(format!("{DATA_FILE} row {row}: expected {} rows", n * r)));
        }
        let start = values.len();
        for field in line.split(',') {
            match field.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => values.push(x),
                _ => return Err(CliError::Usage(format!("{DATA_FILE} row {row}: bad value {:?}", field.trim()))),
            }
        }
        if values.len() - start != p {
            return Err(CliError::Usage(format!(
                "{DATA_FILE} row {row}: expected {p} columns, found {}",
                values.len() - start
            )));
        }
        rows += 1;
    }
    if rows != n * r {
        return Err(CliError::Usage(format!("{DATA_FILE} row {}: expected {} rows, found {rows}", rows + 1, n * r)));
    }
    let mats = values.chunks_exact(r * p).map(|chunk| DMatrix::from_row_slice(r, p, chunk)).collect();
    Ok(MatrixStack::new(mats)?)
}

pub fn format_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn parse_labels(text: &str, what: &str) -> Result<Vec<usize>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("{what} row {}: bad label {:?}", i + 1, l.trim())))
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let what = path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned());
    parse_labels(&read_text(path)?, &what)
}

pub fn write_dataset(dir: &Path, stack: &MatrixStack, labels: Option<&[usize]>) -> Result<DatasetManifest, CliError> {
    if let Some(l) = labels {
        if l.len() != stack.len() {
            return Err(CliError::Usage(format!("{} labels for {} samples", l.len(), stack.len())));
        }
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let data = format_stack(stack);
    let manifest = DatasetManifest {
        n: stack.len(),
        r: stack.rows(),
        p: stack.cols(),
        layout: LAYOUT.to_string(),
        labels_present: labels.is_some(),
        checksum: Some(sha256_hex(data.as_bytes())),
    };
    write_text(&dir.join(DATA_FILE), &data)?;
    if let Some(l) = labels {
        write_text(&dir.join(LABELS_FILE), &format_labels(l))?;
    }
    write_text(&dir.join(MANIFEST_FILE), &to_json(&manifest))?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let manifest: DatasetManifest = serde_json::from_str(&read_text(&dir.join(MANIFEST_FILE))?)
        .map_err(|e| CliError::Usage(format!("{MANIFEST_FILE}: {e}")))?;
    if manifest.layout != LAYOUT {
        return Err(CliError::Usage(format!("{MANIFEST_FILE}: unsupported layout {:?}", manifest.layout)));
    }
    let data = read_text(&dir.join(DATA_FILE))?;
    if let Some(expected) = &manifest.checksum {
        let actual = sha256_hex(data.as_bytes());
        if !actual.eq_ignore_ascii_case(expected) {
            return Err(CliError::Usage(format!("{DATA_FILE}: checksum {actual} does not match manifest {expected}")));
        }
    }
    let stack = parse_stack(&data, manifest.n, manifest.r, manifest.p)?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        let l = read_labels(&labels_path)?;
        if l.len() != manifest.n {
            return Err(CliError::Usage(format!("{LABELS_FILE}: {} labels for {} samples", l.len(), manifest.n)));
        }
        Some(l)
    } else {
        None
    };
    Ok(Dataset { manifest, stack, labels })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDocument {
    pub mean: Vec<Vec<f64>>,
    pub row_cov: Vec<Vec<f64>>,
    pub col_cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyDocument {
    pub kind: PenaltyKind,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub seed: u64,
}

/// Serialized fitted model. Matrices are stored as arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: String,
    pub k: usize,
    pub r: usize,
    pub p: usize,
    pub weights: Vec<f64>,
    pub components: Vec<ComponentDocument>,
    pub penalty: PenaltyDocument,
    pub fit: FitMetadata,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|row| row.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], r: usize, c: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Usage(format!("{MODEL_FILE}: {what} is not {r}x{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ModelDocument {
    pub fn from_report(report: &FitReport, penalty: &PenaltySpec) -> Self {
        let (r, p) = report.model.shape();
        ModelDocument {
            schema_version: SCHEMA_VERSION.to_string(),
            k: report.model.k(),
            r,
            p,
            weights: report.model.weights.clone(),
            components: report
                .model
                .components
                .iter()
                .map(|c| ComponentDocument {
                    mean: rows_of(&c.mean),
                    row_cov: rows_of(&c.row_cov),
                    col_cov: rows_of(&c.col_cov),
                })
                .collect(),
            penalty: PenaltyDocument { kind: penalty.kind, lambda: penalty.lambda },
            fit: FitMetadata {
                iterations: report.iterations,
                converged: report.converged,
                final_objective: report.final_objective(),
                seed: report.seed,
            },
        }
    }

    pub fn to_model(&self) -> Result<MixtureModel, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!("{MODEL_FILE}: unsupported schema version {:?}", self.schema_version)));
        }
        if self.components.len() != self.k || self.weights.len() != self.k {
            return Err(CliError::Usage(format!("{MODEL_FILE}: expected {} components and weights", self.k)));
        }
        let components = self
            .components
            .iter()
            .map(|c| {
                Ok(ComponentParams::new(
                    matrix_from_rows(&c.mean, self.r, self.p, "mean")?,
                    matrix_from_rows(&c.row_cov, self.r, self.r, "row_cov")?,
                    matrix_from_rows(&c.col_cov, self.p, self.p, "col_cov")?,
                )?)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(MixtureModel::new(components, self.weights.clone())?)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("{MODEL_FILE}: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_json(&read_text(path)?)
    }
}

const EXIT_CODE_HELP: &str = "\
Exit codes:
  0  success
  1  I/O failure
  2  usage or validation error (bad flags, malformed or inconsistent files)
  3  EM stopped at --max-iter without converging (model is still written)
  4  numeric failure (lost positive definiteness, empty cluster)";

#[derive(Debug, Parser)]
#[command(name = "matmix", version, about = "Penalized mixtures of matrix normal distributions", after_help = EXIT_CODE_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-cluster dataset.
    Simulate(SimulateArgs),
    /// Fit a penalized mixture with a fixed number of components.
    Fit(FitArgs),
    /// Choose the number of components by cross-validated penalized likelihood.
    Select(SelectArgs),
    /// Compare predicted labels with true labels.
    Eval(EvalArgs),
    /// Cluster the vectorized samples with k-means.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One of I, II, III, IV.
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of samples (overrides the scenario default).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// AR(1) coefficient of both covariances.
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    /// Scale of the mean images.
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Datasets to generate; more than one writes rep_000, rep_001, ... under --out.
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
}

#[derive(Debug, Args)]
pub struct EmArgs {
    #[arg(long, default_value = "none")]
    pub penalty: PenaltyKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// EM iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Convergence threshold on the summed change of the means (default 1e-4·sqrt(r·p)).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Random restarts per fit.
    #[arg(long, default_value_t = 3)]
    pub starts: usize,
}

impl EmArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            max_iter: self.max_iter,
            mean_tol: self.tol,
            seed: self.seed,
            n_starts: self.starts,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[command(flatten)]
    pub em: EmArgs,
    /// Output directory (defaults to the dataset directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub kmin: usize,
    #[arg(long, default_value_t = 4)]
    pub kmax: usize,
    /// Comma-separated penalty strengths; one table block per value.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 5, conflicts_with = "holdout")]
    pub folds: usize,
    /// Use a single random split holding out this fraction instead of folds.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Independent repetitions of the splitting.
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lloyd iteration cap.
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `args` (including the program name), run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run a parsed command, printing its summary to stdout.
pub fn execute(command: &Command) -> Result<i32, CliError> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Baseline(a) => cmd_baseline(a),
    }
}

fn metrics_line(pred: &[usize], truth: &[usize]) -> Result<String, CliError> {
    let ari = adjusted_rand_index(pred, truth)?;
    let acc = clustering_accuracy(pred, truth)?;
    Ok(format!("ari={ari} accuracy={acc}"))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32, CliError> {
    if a.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    for rep in 0..a.replicates {
        let (seed, dir) = if a.replicates == 1 {
            (a.seed, a.out.clone())
        } else {
            (derive_seed(a.seed, rep as u64), a.out.join(format!("rep_{rep:03}")))
        };
        let base = ScenarioSpec::new(a.scenario, seed);
        let spec = ScenarioSpec {
            n: a.n.unwrap_or(base.n),
            r: a.r.unwrap_or(base.r),
            p: a.p.unwrap_or(base.p),
            rho: a.rho,
            mean_amplitude: a.amplitude,
            ..base
        };
        let data = generate_scenario(&spec)?;
        let manifest = write_dataset(&dir, &data.stack, Some(&data.labels))?;
        println!(
            "wrote {} (scenario {} n={} r={} p={} seed={seed})",
            dir.display(),
            a.scenario,
            manifest.n,
            manifest.r,
            manifest.p
        );
    }
    Ok(EXIT_OK)
}

pub fn cmd_fit(a: &FitArgs) -> Result<i32, CliError> {
    let data = read_dataset(&a.data)?;
    let penalty = PenaltySpec::new(a.em.penalty, a.lambda)?;
    // A zero-strength penalty is no penalty; record it that way.
    let penalty = if penalty.is_active() { penalty } else { PenaltySpec::none() };
    let report = fit_em(&data.stack, a.k, &penalty, &a.em.config())?;
    let out = a.out.as_deref().unwrap_or(&a.data);
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    ModelDocument::from_report(&report, &penalty).save(&out.join(MODEL_FILE))?;
    write_text(&out.join(PRED_FILE), &format_labels(&report.hard_labels))?;
    println!("iterations={} converged={} objective={}", report.iterations, report.converged, report.final_objective());
    if let Some(truth) = &data.labels {
        println!("{}", metrics_line(&report.hard_labels, truth)?);
    }
    if report.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: EM did not converge within {} iterations", a.em.max_iter);
        Ok(EXIT_NOT_CONVERGED)
    }
}

pub fn format_cvpl(tables: &[CvplTable]) -> String {
    let mut out = String::from("penalty,lambda,k,cvpl_mean,cvpl_se,selected\n");
    for table in tables {
        for row in &table.rows {
            writeln!(
                out,
                "{},{:?},{},{:?},{:?},{}",
                row.penalty,
                row.lambda,
                row.k,
                row.mean,
                row.std_error,
                u8::from(row.k == table.selected_k)
            )
            .expect("writing to a String");
        }
    }
    out
}

pub fn cmd_select(a: &SelectArgs) -> Result<i32, CliError> {
    if a.kmin == 0 || a.kmin > a.kmax {
        return Err(CliError::Usage(format!("need 1 <= kmin <= kmax, got {}..{}", a.kmin, a.kmax)));
    }
    let data = read_dataset(&a.data)?;
    let split = match a.holdout {
        Some(f) => Split::Holdout(f),
        None => Split::KFold(a.folds),
    };
    let sel = CvplConfig { k_values: (a.kmin..=a.kmax).collect(), split, replicates: a.replicates, seed: a.em.seed };
    let cfg = a.em.config();
    let tables = a
        .lambda
        .iter()
        .map(|&lambda| select_k(&data.stack, &PenaltySpec::new(a.em.penalty, lambda)?, &sel, &cfg))
        .collect::<Result<Vec<_>, Error>>()?;
    let csv = format_cvpl(&tables);
    let out = a.out.as_deref().unwrap_or(&a.data);
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_text(&out.join(CVPL_FILE), &csv)?;
    print!("{csv}");
    Ok(EXIT_OK)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<i32, CliError> {
    let pred = read_labels(&a.pred)?;
    let truth = read_labels(&a.truth)?;
    println!("{}", metrics_line(&pred, &truth)?);
    Ok(EXIT_OK)
}

pub fn cmd_baseline(a: &BaselineArgs) -> Result<i32, CliError> {
    let data = read_dataset(&a.data)?;
    let labels = kmeans_vectorized(&data.stack, a.k, a.seed, a.max_iter)?;
    let out = a.out.as_deref().unwrap_or(&a.data);
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_text(&out.join(BASELINE_FILE), &format_labels(&labels))?;
    if let Some(truth) = &data.labels {
        println!("{}", metrics_line(&labels, truth)?);
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_stack() -> MatrixStack {
        let mats = (0..3).map(|i| DMatrix::from_fn(2, 3, |a, b| (i * 6 + a * 3 + b) as f64 * 0.1 - 0.35)).collect();
        MatrixStack::new(mats).unwrap()
    }

    #[test]
    fn stack_text_round_trip_is_exact() {
        let mut mats = small_stack().matrices().to_vec();
        mats[0][(0, 0)] = 1.0 / 3.0;
        mats[1][(1, 2)] = -2.5e-300;
        mats[2][(0, 1)] = 6.02214076e23;
        let stack = MatrixStack::new(mats).unwrap();
        let back = parse_stack(&format_stack(&stack), 3, 2, 3).unwrap();
        assert_eq!(back, stack);
    }

    #[test]
    fn sample_rows_are_contiguous() {
        let text = format_stack(&small_stack());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        // Sample 1, matrix row 0 holds the values 0.6-0.35, 0.7-0.35, 0.8-0.35.
        let second: Vec<f64> = lines[2].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(second, small_stack().get(1).row(0).iter().copied().collect::<Vec<_>>());
    }

    #[test]
    fn parse_errors_name_the_row() {
        let err = parse_stack("1,2\n3,x\n", 1, 2, 2).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
        assert!(err.to_string().contains("row 2"), "{err}");
        let err = parse_stack("1,2\n3\n", 1, 2, 2).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        let err = parse_stack("1,2\n", 1, 2, 2).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        let err = parse_stack("1,2\n3,4\n5,6\n", 1, 2, 2).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
        assert!(parse_stack("1,nan\n3,4\n", 1, 2, 2).is_err());
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_labels("0\n1\n\n2\n", "x").unwrap(), vec![0, 1, 2]);
        assert!(parse_labels("0\n-1\n", "x").unwrap_err().to_string().contains("row 2"));
    }

    #[test]
    fn numeric_errors_map_to_exit_4() {
        let e: CliError = Error::NotPositiveDefinite("U".into()).into();
        assert_eq!(e.exit_code(), EXIT_NUMERIC);
        let e: CliError = Error::LengthMismatch(1, 2).into();
        assert_eq!(e.exit_code(), EXIT_USAGE);
    }

    #[test]
    fn cvpl_csv_marks_selection() {
        use crate::modelsel::CvplRow;
        let row = |k, mean| CvplRow { penalty: PenaltyKind::L1, lambda: 0.5, k, mean, std_error: 0.0, scores: vec![] };
        let t = CvplTable { rows: vec![row(2, -1.0), row(3, -2.0)], selected_k: 2 };
        assert_eq!(
            format_cvpl(&[t]),
            "penalty,lambda,k,cvpl_mean,cvpl_se,selected\nl1,0.5,2,-1.0,0.0,1\nl1,0.5,3,-2.0,0.0,0\n"
        );
    }
}
