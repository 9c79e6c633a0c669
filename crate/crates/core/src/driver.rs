//! Configuration-driven convergence studies.
//!
//! A run builds `(A, B)`, optionally enriches `B` with random columns, runs
//! block Lanczos once to `m_max` steps and then evaluates, for every
//! requested `m` and every function, `F_m`, `F̃_{m+1}`, the bound and the
//! extrapolations. With the oracle on, errors against a direct solve are
//! reported in `convergence.csv`.

use crate::lanczos::{lanczos_run, BlockTridiagonal, LanczosError, LanczosOptions, LanczosStatus};
use crate::operators::{enrich, write_block, write_matrix_market, OperatorError, ProblemSpec};
use crate::quadrature::{nodes_weights, potential_rate, two_sided, PhiSpec, QuadratureError, ReferenceOracle};
use crate::smallmat::{norm2_c, CMat, Mat};
use crate::stieltjes::{check_identities, extract, radau_matrix, IdentityReport, StieltjesError, StieltjesParams};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const CSV_HEADER: &str = "phi,param,m,err_gauss,err_radau,err_hat,err_check,bound";

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot parse {path}: {source}")]
    Toml {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Lanczos(#[from] LanczosError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> DriverError + '_ {
    move |source| DriverError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One function entry of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhiEntry {
    /// `(A + sI)^{-1}` with `s = s + i·s_im`.
    Resolvent {
        s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s_im: Option<f64>,
    },
    /// `exp(−tA)`.
    Exponential { t: f64 },
}

impl PhiEntry {
    pub fn spec(&self) -> PhiSpec {
        match *self {
            PhiEntry::Resolvent { s, s_im } => PhiSpec::Resolvent(Complex64::new(s, s_im.unwrap_or(0.0))),
            PhiEntry::Exponential { t } => PhiSpec::Exponential(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrichConfig {
    /// Number of random columns appended to `B`.
    pub p: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub phi: Vec<PhiEntry>,
    pub m_max: usize,
    /// Restrict the reported iterations; defaults to every available `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_values: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrich: Option<EnrichConfig>,
    #[serde(default)]
    pub reorth: bool,
    #[serde(default = "default_true")]
    pub oracle: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Iterations for which `nodes_weights_m<k>.csv` is written.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes_weights: Vec<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str, source: &str) -> Result<Self, DriverError> {
        toml::from_str(text).map_err(|e| DriverError::Toml {
            path: source.to_string(),
            source: e,
        })
    }

    /// Reads a configuration; the second value is the directory relative
    /// paths are resolved against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), DriverError> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        let config = Self::from_toml(&text, &path.display().to_string())?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        if self.phi.is_empty() {
            return Err(DriverError::Config("at least one phi entry is required".into()));
        }
        if self.m_max < 2 {
            return Err(DriverError::Config(
                "m_max must be at least 2: F_m is paired with the Gauss-Radau value of step m + 1".into(),
            ));
        }
        for entry in &self.phi {
            entry.spec().validate()?;
        }
        Ok(())
    }
}

/// Errors and bound for one `(φ, m)`; `None` marks a value that is not
/// available (oracle off, non-real function, failed evaluation).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub phi: PhiSpec,
    pub m: usize,
    pub err_gauss: Option<f64>,
    pub err_radau: Option<f64>,
    pub err_hat: Option<f64>,
    pub err_check: Option<f64>,
    pub bound: Option<f64>,
    /// `‖F‖₂` of the reference value, for relative errors.
    pub reference_norm: Option<f64>,
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

impl ConvergenceRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.phi.kind(),
            self.phi.param_label(),
            self.m,
            cell(self.err_gauss),
            cell(self.err_radau),
            cell(self.err_hat),
            cell(self.err_check),
            cell(self.bound)
        )
    }

    pub fn relative_gauss(&self) -> Option<f64> {
        Some(self.err_gauss? / self.reference_norm?)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub build: f64,
    pub lanczos: f64,
    pub extraction: f64,
    pub evaluation: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiSummary {
    pub kind: String,
    pub param: String,
    /// Single-interval rate `g` with `θ_max = ‖A‖_est`, real shifts only.
    pub potential_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub problem: String,
    pub n: usize,
    pub p: usize,
    pub p_enriched: usize,
    pub m_max: usize,
    pub lanczos_steps: usize,
    pub breakdown_step: Option<usize>,
    /// Steps with valid Stieltjes parameters (equals `lanczos_steps` unless
    /// extraction failed part way).
    pub stieltjes_steps: usize,
    pub norm_estimate: f64,
    pub identities: Option<IdentityReport>,
    pub phi: Vec<PhiSummary>,
    pub rows: usize,
    pub warnings: Vec<String>,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<ConvergenceRecord>,
    pub summary: RunSummary,
    /// Lanczos coefficients of the (possibly enriched) block.
    pub tri: BlockTridiagonal,
}

impl RunOutcome {
    pub fn csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

fn leading(x: &CMat, p: usize) -> CMat {
    x.view((0, 0), (p, p)).into_owned()
}

/// Stieltjes parameters of the longest prefix that has them.
fn extract_longest(tri: &BlockTridiagonal, warnings: &mut Vec<String>) -> Option<StieltjesParams> {
    match extract(tri) {
        Ok(params) => Some(params),
        Err(StieltjesError::NotStieltjes { index, reason }) => {
            warnings.push(format!("Stieltjes extraction stopped at step {index}: {reason}"));
            (index > 1).then(|| extract(&tri.prefix(index - 1)).ok()).flatten()
        }
        Err(e) => {
            warnings.push(e.to_string());
            None
        }
    }
}

/// Runs a convergence study without touching the file system.
pub fn run(config: &RunConfig, base: &Path) -> Result<RunOutcome, DriverError> {
    config.validate()?;
    let mut timings = Timings::default();
    let mut warnings = Vec::new();

    let clock = Instant::now();
    let problem = config.problem.build(base)?;
    let (n, p) = problem.b.shape();
    let block = match config.enrich {
        Some(e) if e.p > 0 => enrich(&problem.b, e.p, e.seed)?,
        _ => problem.b.clone(),
    };
    timings.build = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let opts = LanczosOptions {
        reorth: config.reorth,
        ..Default::default()
    };
    let (tri, state) = lanczos_run(&problem.a, &block, config.m_max, opts)?;
    timings.lanczos = clock.elapsed().as_secs_f64();
    let breakdown_step = match state.status {
        LanczosStatus::Completed => None,
        LanczosStatus::Breakdown { step } => Some(step),
    };

    let clock = Instant::now();
    let params = extract_longest(&tri, &mut warnings);
    let stieltjes_steps = params.as_ref().map_or(0, StieltjesParams::steps);
    let identities = params.as_ref().map(|prm| {
        let t = tri.prefix(prm.steps());
        check_identities(&t, prm)
    });
    timings.extraction = clock.elapsed().as_secs_f64();

    let available: Vec<usize> = (1..stieltjes_steps).collect();
    let ms: Vec<usize> = match &config.m_values {
        Some(list) => {
            let mut ms: Vec<usize> = list.iter().copied().filter(|m| available.contains(m)).collect();
            ms.sort_unstable();
            ms.dedup();
            if ms.len() < list.len() {
                warnings.push(format!(
                    "requested iterations beyond the {} available were skipped",
                    available.len()
                ));
            }
            ms
        }
        None => available,
    };
    let phis: Vec<PhiSpec> = config.phi.iter().map(PhiEntry::spec).collect();

    let clock = Instant::now();
    let references: Vec<Option<CMat>> = if config.oracle {
        let oracle = ReferenceOracle::new(&problem.a);
        let results: Vec<Result<CMat, QuadratureError>> =
            phis.par_iter().map(|&phi| oracle.evaluate(&problem.b, phi)).collect();
        results
            .into_iter()
            .zip(&phis)
            .map(|(r, phi)| match r {
                Ok(v) => Some(v),
                Err(e) => {
                    warnings.push(format!("no reference for {} {}: {e}", phi.kind(), phi.param_label()));
                    None
                }
            })
            .collect()
    } else {
        vec![None; phis.len()]
    };
    timings.oracle = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let tasks: Vec<(usize, usize)> = (0..phis.len()).flat_map(|k| ms.iter().map(move |&m| (k, m))).collect();
    let evaluated: Vec<Result<ConvergenceRecord, String>> = tasks
        .par_iter()
        .map(|&(k, m)| {
            let params = params.as_ref().expect("tasks exist only with parameters");
            evaluate_row(&tri, params, phis[k], m, p, references[k].as_ref())
        })
        .collect();
    let mut records = Vec::with_capacity(evaluated.len());
    for ((k, m), r) in tasks.iter().zip(evaluated) {
        match r {
            Ok(record) => records.push(record),
            Err(e) => {
                warnings.push(format!("{} {} at m = {m}: {e}", phis[*k].kind(), phis[*k].param_label()));
                records.push(ConvergenceRecord {
                    phi: phis[*k],
                    m: *m,
                    err_gauss: None,
                    err_radau: None,
                    err_hat: None,
                    err_check: None,
                    bound: None,
                    reference_norm: None,
                });
            }
        }
    }
    timings.evaluation = clock.elapsed().as_secs_f64();

    let phi_summary = phis
        .iter()
        .map(|phi| PhiSummary {
            kind: phi.kind().to_string(),
            param: phi.param_label(),
            potential_rate: phi.real_shift().and_then(|s| potential_rate(state.norm_estimate, s).ok()),
        })
        .collect();
    let summary = RunSummary {
        problem: config.problem.kind().to_string(),
        n,
        p,
        p_enriched: block.ncols(),
        m_max: config.m_max,
        lanczos_steps: tri.steps(),
        breakdown_step,
        stieltjes_steps,
        norm_estimate: state.norm_estimate,
        identities,
        phi: phi_summary,
        rows: records.len(),
        warnings,
        timings,
    };
    Ok(RunOutcome { records, summary, tri })
}

fn evaluate_row(
    tri: &BlockTridiagonal,
    params: &StieltjesParams,
    phi: PhiSpec,
    m: usize,
    p: usize,
    reference: Option<&CMat>,
) -> Result<ConvergenceRecord, String> {
    let radau = radau_matrix(&tri.prefix(m + 1), params).map_err(|e| e.to_string())?;
    let set = two_sided(&tri.prefix(m), &radau, phi).map_err(|e| e.to_string())?;
    let gauss = leading(&set.gauss, p);
    let radau_value = leading(&set.radau, p);
    let hat = leading(&set.hat, p);
    let check = set.check.as_ref().map(|c| crate::smallmat::to_complex(&c.view((0, 0), (p, p)).into_owned()));
    let err = |x: &CMat| reference.map(|f| norm2_c(&(x - f)));
    Ok(ConvergenceRecord {
        phi,
        m,
        err_gauss: err(&gauss),
        err_radau: err(&radau_value),
        err_hat: err(&hat),
        err_check: check.as_ref().and_then(err),
        bound: Some(norm2_c(&(&radau_value - &gauss))),
        reference_norm: reference.map(norm2_c),
    })
}

/// Runs a study and writes `convergence.csv`, `summary.json` and the
/// requested `nodes_weights_m<k>.csv` into `out`.
pub fn run_to_dir(config: &RunConfig, base: &Path, out: &Path) -> Result<RunOutcome, DriverError> {
    let outcome = run(config, base)?;
    fs::create_dir_all(out).map_err(io_error(out))?;
    let csv_path = out.join("convergence.csv");
    fs::write(&csv_path, outcome.csv()).map_err(io_error(&csv_path))?;
    for &k in &config.nodes_weights {
        if k == 0 || k > outcome.summary.stieltjes_steps {
            continue;
        }
        let path = out.join(format!("nodes_weights_m{k}.csv"));
        fs::write(&path, nodes_weights_csv(&outcome.tri, k)?).map_err(io_error(&path))?;
    }
    let json_path = out.join("summary.json");
    let json = serde_json::to_string_pretty(&outcome.summary)?;
    fs::write(&json_path, json + "\n").map_err(io_error(&json_path))?;
    Ok(outcome)
}

/// Nodes and weights of `T_k` (`gauss`) and `T̃_k` (`radau`), one row per
/// node with the weight matrix flattened column by column.
pub fn nodes_weights_csv(tri: &BlockTridiagonal, k: usize) -> Result<String, DriverError> {
    let t = tri.prefix(k);
    let p = t.p();
    let radau = crate::stieltjes::RadauMatrix::from_lanczos(&t)
        .map_err(|e| DriverError::Config(format!("no Gauss-Radau matrix at m = {k}: {e}")))?;
    let mut out = String::from("rule,index,node");
    for j in 0..p {
        for i in 0..p {
            let _ = write!(out, ",w_{}_{}", i + 1, j + 1);
        }
    }
    out.push('\n');
    for (rule, matrix) in [("gauss", &t), ("radau", radau.tri())] {
        let nw = nodes_weights(matrix)?;
        for (idx, (x, w)) in nw.nodes.iter().zip(&nw.weights).enumerate() {
            let _ = write!(out, "{rule},{},{x:.16e}", idx + 1);
            for v in w.iter() {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Reads a problem file: either a bare problem table or one nested under
/// `[problem]`.
pub fn load_problem(path: &Path) -> Result<(ProblemSpec, PathBuf), DriverError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let parse_err = |source| DriverError::Toml {
        path: path.display().to_string(),
        source,
    };
    let table: toml::Table = toml::from_str(&text).map_err(parse_err)?;
    let spec = match table.get("problem") {
        Some(inner) => inner.clone().try_into(),
        None => toml::Value::Table(table).try_into(),
    }
    .map_err(parse_err)?;
    Ok((spec, path.parent().map(Path::to_path_buf).unwrap_or_default()))
}

/// Writes `A.mtx` and `B.txt` for a problem.
pub fn gen(spec: &ProblemSpec, base: &Path, out: &Path) -> Result<(PathBuf, PathBuf), DriverError> {
    let problem = spec.build(base)?;
    fs::create_dir_all(out).map_err(io_error(out))?;
    let a_path = out.join("A.mtx");
    let b_path = out.join("B.txt");
    write_matrix_market(&a_path, &problem.a)?;
    write_block(&b_path, &problem.b)?;
    Ok((a_path, b_path))
}

/// Applies command-line overrides on top of a configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub m_max: Option<usize>,
    pub enrich: Option<EnrichConfig>,
    pub reorth: bool,
    pub no_oracle: bool,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(m) = self.m_max {
            config.m_max = m;
        }
        if let Some(e) = self.enrich {
            config.enrich = Some(e);
        }
        config.reorth |= self.reorth;
        if self.no_oracle {
            config.oracle = false;
        }
    }
}

/// The leading `p x p` block of a real matrix.
pub fn leading_block(x: &Mat, p: usize) -> Mat {
    x.view((0, 0), (p, p)).into_owned()
}
