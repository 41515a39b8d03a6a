//! JSON model and scenario files, plus CSV number formatting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hierwalk_core::hierarchy::{Convention, ModelOptions};
use hierwalk_core::{ComplexMatrix, Error as CoreError, GraphModel, HierarchicalModel, RealMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// States whose norm is off by at most this much are normalized with a warning.
pub const RENORMALIZE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid JSON in {path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: CoreError,
    },
}

type Result<T> = std::result::Result<T, FormatError>;

fn model_err(context: impl Into<String>) -> impl FnOnce(CoreError) -> FormatError {
    let context = context.into();
    move |source| FormatError::Model { context, source }
}

/// A graph, either listed explicitly or named by family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    /// `path`, `cycle`, `star`, `complete` or `loop`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Size parameter for `kind` (leaves for `star`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Vec<f64>>,
}

impl GraphFile {
    pub fn to_graph(&self, name: &str) -> Result<GraphModel> {
        let err = || model_err(name.to_string());
        let g = match (&self.kind, self.vertex_count) {
            (Some(kind), _) => {
                let n = self.n.unwrap_or(1);
                match kind.as_str() {
                    "path" => GraphModel::path(n),
                    "cycle" => GraphModel::cycle(n),
                    "star" => GraphModel::star(n),
                    "complete" => GraphModel::complete_with_loops(n),
                    "loop" => Ok(GraphModel::single_loop()),
                    other => return Err(FormatError::Invalid(format!("{name}: unknown graph kind '{other}'"))),
                }
                .map_err(err())?
            }
            (None, Some(n)) => {
                let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
                GraphModel::new(n, &edges).map_err(err())?
            }
            (None, None) => {
                return Err(FormatError::Invalid(format!("{name}: needs 'kind' or 'vertex_count'")));
            }
        };
        let g = match &self.transition {
            Some(rows) => g.with_transition(RealMatrix::from_rows(rows).map_err(err())?).map_err(err())?,
            None => g,
        };
        match &self.measure {
            Some(pi) => g.with_measure(pi.clone()).map_err(err()),
            None => Ok(g),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    /// Global graph. When absent, `q` defines `K̄` with those weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global: Option<GraphFile>,
    pub locals: Vec<GraphFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    /// Explicit global Hamiltonian as rows of `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_hamiltonian: Option<Vec<Vec<[f64; 2]>>>,
}

/// A model file turned into library objects.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: HierarchicalModel,
    pub q: Option<Vec<f64>>,
    pub global_hamiltonian: Option<ComplexMatrix>,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn build(&self, options: ModelOptions) -> Result<LoadedModel> {
        let global = match (&self.global, &self.q) {
            (Some(g), _) => g.to_graph("global")?,
            (None, Some(q)) => GraphModel::kbar(q).map_err(model_err("q"))?,
            (None, None) => return Err(FormatError::Invalid("model needs 'global' or 'q'".into())),
        };
        let locals = self
            .locals
            .iter()
            .enumerate()
            .map(|(j, g)| g.to_graph(&format!("locals[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        let model = HierarchicalModel::new(global, locals, options).map_err(model_err("model"))?;
        let global_hamiltonian = match &self.global_hamiltonian {
            Some(rows) => {
                let rows: Vec<Vec<Complex64>> = rows.iter().map(|r| complex_vec(r)).collect();
                Some(ComplexMatrix::from_rows(&rows).map_err(model_err("global_hamiltonian"))?)
            }
            None => None,
        };
        Ok(LoadedModel {
            model,
            q: self.q.clone(),
            global_hamiltonian,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    /// Path relative to the scenario file.
    Path(String),
    Inline(ModelFile),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    General,
    Kbar,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ConventionName {
    #[default]
    Destination,
    Source,
}

impl From<ConventionName> for Convention {
    fn from(c: ConventionName) -> Self {
        match c {
            ConventionName::Destination => Convention::Destination,
            ConventionName::Source => Convention::Source,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputNames {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: ModelRef,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(rename = "psi_H")]
    pub psi_h: Vec<[f64; 2]>,
    pub psi_locals: Vec<Vec<[f64; 2]>>,
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<ConventionName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputNames>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Reads the referenced model; relative paths resolve against `base`.
    pub fn model_file(&self, base: &Path) -> Result<ModelFile> {
        match &self.model {
            ModelRef::Inline(m) => Ok(m.clone()),
            ModelRef::Path(p) => ModelFile::load(&base.join(p)),
        }
    }

    pub fn check_times(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(FormatError::Invalid("time grid is empty".into()));
        }
        if let Some(t) = self.times.iter().find(|t| !t.is_finite()) {
            return Err(FormatError::Invalid(format!("time {t} is not finite")));
        }
        Ok(())
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn complex_vec(pairs: &[[f64; 2]]) -> Vec<Complex64> {
    pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect()
}

/// Normalizes a state when its norm is within [`RENORMALIZE_TOL`] of one.
///
/// Returns the state and, when it had to be rescaled, a warning.
pub fn parse_state(name: &str, pairs: &[[f64; 2]]) -> Result<(Vec<Complex64>, Option<String>)> {
    let v = complex_vec(pairs);
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let defect = (norm - 1.0).abs();
    if v.is_empty() || defect.is_nan() || defect > RENORMALIZE_TOL {
        return Err(FormatError::Invalid(format!("{name} is not normalized (norm {norm})")));
    }
    if defect <= 1e-12 {
        return Ok((v, None));
    }
    let warning = format!("{name} had norm {norm}; normalized");
    Ok((v.into_iter().map(|z| z / norm).collect(), Some(warning)))
}

/// C `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(char::is_ascii_digit).collect();
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if !(-4..17).contains(&exp) {
        let frac = digits[1..].trim_end_matches('0');
        out.push_str(&digits[..1]);
        if !frac.is_empty() {
            out.push('.');
            out.push_str(frac);
        }
        let _ = write!(out, "e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    } else if exp >= 0 {
        let split = exp as usize + 1;
        out.push_str(&digits[..split]);
        let frac = digits[split..].trim_end_matches('0');
        if !frac.is_empty() {
            out.push('.');
            out.push_str(frac);
        }
    } else {
        out.push_str("0.");
        for _ in 0..(-exp - 1) {
            out.push('0');
        }
        out.push_str(digits.trim_end_matches('0'));
    }
    out
}
