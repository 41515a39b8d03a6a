//! Command line front end: `simulate`, `verify` and `spectra`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hierwalk_core::hierarchy::{ModelOptions, DEFAULT_CAP};
use hierwalk_core::linalg::IndexSpace;
use hierwalk_core::walk::{kbar_hamiltonian, JointDistribution};
use hierwalk_core::{
    eigh, ComplexMatrix, EigenSystem, HamiltonianAssembly, HierarchicalModel, KbarModel, QuantumState, RealMatrix,
};
use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::format::{fmt_g17, parse_state, ConventionName, FormatError, LoadedModel, Mode, ModelFile, ScenarioFile};
use crate::oracle::{self, Basis, CMat, ComparisonReport, OracleError, RMat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Spread of tuple overlaps below which `ψ_H` counts as constant-overlap.
pub const OVERLAP_TOL: f64 = 1e-9;

const VERIFY_TIMES: [f64; 3] = [0.3, 1.0, std::f64::consts::PI];
const SEMIGROUP_TIMES: [f64; 4] = [0.1, 0.5, 1.0, 2.0];
const MAX_SEMIGROUP_GRID: usize = 64;
const PROBE_STATES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn validation(context: &str) -> impl Fn(hierwalk_core::Error) -> Failure + '_ {
    move |e| Failure::Validation(format!("{context}: {e}"))
}

fn numerical(context: &str) -> impl Fn(hierwalk_core::Error) -> Failure + '_ {
    move |e| Failure::Numerical(format!("{context}: {e}"))
}

fn oracle_failure(e: OracleError) -> Failure {
    Failure::Numerical(format!("oracle: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "hierwalk", version, about = "Hierarchical random and quantum walks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the joint local distribution on a time grid and write CSV plus a JSON report.
    Simulate(SimulateArgs),
    /// Cross-check the spectral paths against brute-force oracles.
    Verify(VerifyArgs),
    /// Print eigenvalues and degenerate groups of every operator in a model.
    Spectra(SpectraArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file; overrides the model named by the scenario.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Tolerance override.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Which local graph moves on a global step.
    #[arg(long, value_enum)]
    pub selection_convention: Option<ConventionName>,
    /// Largest dimension for dense operators.
    #[arg(long)]
    pub cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Spectra,
    Evolution,
    Distribution,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Scenario supplying states and times. Without it, `--model` is used
    /// with uniform `ψ_H` and every local walker at vertex 0.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Also write the report to `verify.json` here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Also write the report to `spectra.json` here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub cap: Option<usize>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a).map(|_| ()),
        Command::Verify(a) => verify_command(&a),
        Command::Spectra(a) => spectra_command(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

/// A loaded model with states, times and run options.
#[derive(Debug, Clone)]
pub struct Setup {
    pub loaded: LoadedModel,
    pub mode: Mode,
    pub q: Option<Vec<f64>>,
    pub psi_h: QuantumState,
    pub psi_locals: Vec<QuantumState>,
    pub times: Vec<f64>,
    pub p: Option<f64>,
    pub tol: Option<f64>,
    pub csv_name: String,
    pub report_name: String,
    pub warnings: Vec<String>,
}

impl Setup {
    pub fn model(&self) -> &HierarchicalModel {
        &self.loaded.model
    }

    fn kbar_q(&self) -> Option<&[f64]> {
        match self.mode {
            Mode::Kbar => self.q.as_deref(),
            Mode::General => None,
        }
    }

    /// Quantum assembly; in kbar mode the global Hamiltonian is `√q √qᵀ`.
    pub fn assembly(&self) -> Result<HamiltonianAssembly, Failure> {
        let global = match self.kbar_q() {
            Some(q) => Some(kbar_hamiltonian(q).map_err(validation("q"))?.to_complex()),
            None => self.loaded.global_hamiltonian.clone(),
        };
        HamiltonianAssembly::from_model(self.model(), global).map_err(validation("hamiltonian"))
    }

    pub fn kbar(&self) -> Result<Option<KbarModel>, Failure> {
        match self.kbar_q() {
            Some(q) => KbarModel::from_model(q, self.model()).map(Some).map_err(validation("kbar model")),
            None => Ok(None),
        }
    }
}

fn options(args: &ModelArgs, scenario: Option<ConventionName>) -> ModelOptions {
    ModelOptions {
        convention: args.selection_convention.or(scenario).unwrap_or_default().into(),
        cap: args.cap.unwrap_or(DEFAULT_CAP),
    }
}

/// Reads a scenario and everything it references.
pub fn load_scenario(path: &Path, args: &ModelArgs) -> Result<Setup, Failure> {
    let scenario = ScenarioFile::load(path)?;
    scenario.check_times()?;
    let model_file = match &args.model {
        Some(m) => ModelFile::load(m)?,
        None => scenario.model_file(path.parent().unwrap_or(Path::new(".")))?,
    };
    let loaded = model_file.build(options(args, scenario.convention))?;
    let mut warnings = Vec::new();
    let (psi_h, w) = parse_state("psi_H", &scenario.psi_h)?;
    warnings.extend(w);
    let model = &loaded.model;
    if psi_h.len() != model.global_dim() {
        return Err(Failure::Validation(format!(
            "psi_H has {} entries but the global graph has {} vertices",
            psi_h.len(),
            model.global_dim()
        )));
    }
    if scenario.psi_locals.len() != model.locals().len() {
        return Err(Failure::Validation(format!(
            "psi_locals has {} states but the model has {} local graphs",
            scenario.psi_locals.len(),
            model.locals().len()
        )));
    }
    let mut psi_locals = Vec::new();
    for (j, (pairs, &n)) in scenario.psi_locals.iter().zip(model.local_dims()).enumerate() {
        let name = format!("psi_locals[{j}]");
        let (v, w) = parse_state(&name, pairs)?;
        warnings.extend(w);
        if v.len() != n {
            return Err(Failure::Validation(format!("{name} has {} entries, local graph has {n}", v.len())));
        }
        psi_locals.push(QuantumState::new(v).map_err(validation(&name))?);
    }
    let psi_h = QuantumState::new(psi_h).map_err(validation("psi_H"))?;
    let q = scenario.q.clone().or_else(|| loaded.q.clone());
    if scenario.mode == Mode::Kbar {
        check_kbar(model, q.as_deref())?;
    }
    if let Some(p) = scenario.p {
        if !(0.0..=1.0).contains(&p) {
            return Err(Failure::Validation(format!("p = {p} is outside [0, 1]")));
        }
    }
    let output = scenario.output.clone().unwrap_or_default();
    Ok(Setup {
        loaded,
        mode: scenario.mode,
        q,
        psi_h,
        psi_locals,
        times: scenario.times.clone(),
        p: scenario.p,
        tol: args.tol.or(scenario.tol),
        csv_name: output.csv.unwrap_or_else(|| "distribution.csv".into()),
        report_name: output.report.unwrap_or_else(|| "report.json".into()),
        warnings,
    })
}

/// Kbar mode needs `q` and a global walk that jumps to `k` with probability `q_k`.
fn check_kbar(model: &HierarchicalModel, q: Option<&[f64]>) -> Result<(), Failure> {
    let q = q.ok_or_else(|| Failure::Validation("kbar mode needs 'q'".into()))?;
    if q.len() != model.global_dim() {
        return Err(Failure::Validation(format!(
            "q has {} entries but the global graph has {} vertices",
            q.len(),
            model.global_dim()
        )));
    }
    let p = model.global_transition();
    for i in 0..p.rows() {
        for (k, &qk) in q.iter().enumerate() {
            if (p[(i, k)] - qk).abs() > 1e-12 {
                return Err(Failure::Validation(format!(
                    "kbar mode: global transition ({i}, {k}) is {} but q_{k} is {qk}",
                    p[(i, k)]
                )));
            }
        }
    }
    Ok(())
}

/// Setup from a bare model: uniform `ψ_H`, locals at vertex 0, default times.
pub fn setup_from_model(path: &Path, args: &ModelArgs) -> Result<Setup, Failure> {
    let file = ModelFile::load(path)?;
    let loaded = file.build(options(args, None))?;
    let g = loaded.model.global_dim();
    let psi_h = QuantumState::normalized(vec![Complex64::new(1.0, 0.0); g]).map_err(validation("psi_H"))?;
    let psi_locals = loaded.model.local_dims().iter().map(|&n| QuantumState::basis(n, 0)).collect();
    let (mode, q) = match &loaded.q {
        Some(q) if file.global.is_none() => (Mode::Kbar, Some(q.clone())),
        _ => (Mode::General, None),
    };
    Ok(Setup {
        loaded,
        mode,
        q,
        psi_h,
        psi_locals,
        times: VERIFY_TIMES.to_vec(),
        p: None,
        tol: args.tol,
        csv_name: "distribution.csv".into(),
        report_name: "report.json".into(),
        warnings: Vec::new(),
    })
}

/// Per-time entry of the simulate report.
#[derive(Debug, Clone, Serialize)]
pub struct TimeEntry {
    pub t: f64,
    pub mass: f64,
    pub normalization_defect: f64,
    pub min_probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_term_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factorized_residual: Option<f64>,
}

/// CSV text and report of a simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub csv: String,
    pub report: Value,
}

/// Evaluates every time point; nothing is written.
pub fn run_simulation(setup: &Setup) -> Result<Simulation, Failure> {
    let start = Instant::now();
    let model = setup.model();
    let mut warnings = setup.warnings.clone();
    let mut dists: Vec<JointDistribution> = Vec::with_capacity(setup.times.len());
    let mut entries = Vec::with_capacity(setup.times.len());
    let formula;
    match setup.kbar()? {
        None => {
            formula = "general";
            let assembly = setup.assembly()?;
            for &t in &setup.times {
                let d = assembly
                    .joint_distribution(t, &setup.psi_h, &setup.psi_locals)
                    .map_err(numerical(&format!("t = {t}")))?;
                entries.push(time_entry(&d, None, None));
                dists.push(d);
            }
        }
        Some(kb) => {
            let tol = setup.tol.unwrap_or(OVERLAP_TOL);
            if kb.constant_overlap(&setup.psi_h, tol).is_none() {
                let (lo, hi) = kb.overlap_range(&setup.psi_h);
                warnings.push(format!(
                    "overlaps are not constant (range [{lo}, {hi}]); the three-term values differ from the exact law by two_term_residual"
                ));
            }
            formula = "three-term";
            for &t in &setup.times {
                let ctx = format!("t = {t}");
                let two = kb
                    .two_term_distribution(t, &setup.psi_h, &setup.psi_locals)
                    .map_err(numerical(&ctx))?;
                let d = kb
                    .kbar_joint_distribution(t, &setup.psi_h, &setup.psi_locals)
                    .map_err(numerical(&ctx))?;
                let two_term_residual = Some(d.max_abs_diff(&two));
                let factorized_residual = match setup.p {
                    Some(p) => {
                        let f = kb
                            .factorized_checked(t, p, &setup.psi_h, &setup.psi_locals, tol)
                            .map_err(validation("p"))?;
                        Some(f.max_abs_diff(&d))
                    }
                    None => None,
                };
                entries.push(time_entry(&d, two_term_residual, factorized_residual));
                dists.push(d);
            }
        }
    }
    let csv = render_csv(model.local_space(), &dists);
    let report = json!({
        "mode": match setup.mode { Mode::General => "general", Mode::Kbar => "kbar" },
        "formula": formula,
        "convention": format!("{:?}", model.convention()).to_lowercase(),
        "local_dims": model.local_dims(),
        "rows": dists.len() * model.local_dim(),
        "times": entries,
        "max_normalization_defect": entries.iter().map(|e| e.normalization_defect).fold(0.0, f64::max),
        "warnings": warnings,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    Ok(Simulation { csv, report })
}

fn time_entry(d: &JointDistribution, two_term_residual: Option<f64>, factorized_residual: Option<f64>) -> TimeEntry {
    TimeEntry {
        t: d.time(),
        mass: d.mass(),
        normalization_defect: (d.mass() - 1.0).abs(),
        min_probability: d.probabilities().iter().copied().fold(f64::INFINITY, f64::min),
        two_term_residual,
        factorized_residual,
    }
}

/// `k_0,…,k_d,t,probability`, times in input order, last local index fastest.
pub fn render_csv(space: &IndexSpace, dists: &[JointDistribution]) -> String {
    let mut out = String::new();
    for j in 0..space.dims().len() {
        let _ = write!(out, "k_{j},");
    }
    out.push_str("t,probability\n");
    for d in dists {
        let t = fmt_g17(d.time());
        for (k, p) in space.iter().zip(d.probabilities()) {
            for kj in k {
                let _ = write!(out, "{kj},");
            }
            let _ = writeln!(out, "{t},{}", fmt_g17(*p));
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Validation(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Validation(format!("cannot create {}: {e}", dir.display())))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Runs `simulate` and writes both files once everything succeeded.
pub fn simulate(args: &SimulateArgs) -> Result<Simulation, Failure> {
    let setup = load_scenario(&args.scenario, &args.model)?;
    let sim = run_simulation(&setup)?;
    create_dir(&args.out_dir)?;
    write_file(&args.out_dir.join(&setup.csv_name), &sim.csv)?;
    write_file(&args.out_dir.join(&setup.report_name), &pretty(&sim.report))?;
    for w in sim.report["warnings"].as_array().into_iter().flatten() {
        eprintln!("warning: {}", w.as_str().unwrap_or_default());
    }
    Ok(sim)
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Eigen-data gathered by the spectra suite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectra: Option<Value>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Checker {
    report: VerifyReport,
    tol: Option<f64>,
}

impl Checker {
    fn push(&mut self, name: &str, residual: f64, default_tol: f64, detail: Option<String>) {
        let tolerance = self.tol.unwrap_or(default_tol);
        self.report.checks.push(Check {
            name: name.to_string(),
            max_residual: residual,
            tolerance,
            pass: residual <= tolerance,
            detail,
        });
    }

    fn push_report(&mut self, name: &str, r: &ComparisonReport, default_tol: f64) {
        let detail = Some(format!("worst entry at {:?}", r.location));
        self.push(name, r.max_abs_diff, default_tol, detail);
    }

    fn note(&mut self, s: String) {
        self.report.notes.push(s);
    }
}

fn rmat(m: &RealMatrix) -> RMat {
    oracle::from_row_major(m.rows(), m.cols(), m.as_slice())
}

fn cmat(m: &ComplexMatrix) -> CMat {
    oracle::from_row_major(m.rows(), m.cols(), m.as_slice())
}

fn spectrum_json<T>(s: &EigenSystem<T>) -> Value
where
    T: hierwalk_core::Scalar,
{
    let groups: Vec<Vec<usize>> = s.groups().iter().map(|g| g.clone().collect()).collect();
    json!({ "values": s.values(), "groups": groups })
}

/// Runs the selected suites on `setup`.
pub fn verify(setup: &Setup, suite: Suite) -> Result<VerifyReport, Failure> {
    let model = setup.model();
    if model.dim() > model.options().cap {
        return Err(Failure::Validation(format!(
            "total dimension {} exceeds cap {}",
            model.dim(),
            model.options().cap
        )));
    }
    let mut c = Checker {
        report: VerifyReport::default(),
        tol: setup.tol,
    };
    let all = suite == Suite::All;
    if all || suite == Suite::Spectra {
        spectra_suite(setup, &mut c)?;
    }
    if all || suite == Suite::Evolution {
        evolution_suite(setup, &mut c)?;
    }
    if all || suite == Suite::Distribution {
        distribution_suite(setup, &mut c)?;
    }
    c.report.pass = c.report.checks.iter().all(|ch| ch.pass);
    Ok(c.report)
}

fn spectra_suite(setup: &Setup, c: &mut Checker) -> Result<(), Failure> {
    let model = setup.model();
    let source = model.convention() == hierwalk_core::Convention::Source;
    let mut locals_json = Vec::new();
    let mut value_diff: f64 = 0.0;
    let mut residual: f64 = 0.0;
    for g in model.locals() {
        let l = g.laplacian().matrix();
        let eig = g.eigen();
        let mut reference: Vec<f64> = SymmetricEigen::new(rmat(l)).eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (a, b) in eig.values().iter().zip(&reference) {
            value_diff = value_diff.max((a - b).abs());
        }
        for (v, &mu) in eig.vectors().iter().zip(eig.values()) {
            for (lv, x) in l.mul_vec(v).iter().zip(v) {
                residual = residual.max((lv - mu * x).abs());
            }
        }
        locals_json.push(json!({ "vertex_count": g.dim(), "laplacian": spectrum_json(eig) }));
    }
    c.push("local_laplacian_values", value_diff, 1e-10, None);
    c.push("local_laplacian_residual", residual, 1e-10, None);
    c.report.spectra = Some(json!({ "locals": locals_json }));

    let global_p = rmat(model.global_transition());
    let local_p: Vec<RMat> = model.locals().iter().map(|g| rmat(g.transition())).collect();
    let dense = model.build_hdtrw().map_err(numerical("hdtrw"))?;
    let loop_p = oracle::hierarchical_loop(&global_p, &local_p, source);
    let r = oracle::compare_matrices(&rmat(&dense), &loop_p, c.tol.unwrap_or(1e-12)).map_err(oracle_failure)?;
    c.push_report("hdtrw_operator", &r, 1e-12);

    let spectrum = model.hdtrw_eigenpairs().map_err(numerical("hdtrw eigenpairs"))?;
    let pg = to_c(&loop_p);
    let mut worst: f64 = 0.0;
    for pair in &spectrum.pairs {
        let w = DVector::from_vec(pair.vector(model));
        let r = &pg * &w - &w * pair.value;
        worst = worst.max(r.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let detail = format!("{} eigenpairs", spectrum.pairs.len());
    c.push("hdtrw_eigenpairs", worst, 1e-8, Some(detail));
    for t in &spectrum.defective {
        c.note(format!("hdtrw block for tuple {t:?} is not diagonalizable; its pairs are incomplete"));
    }

    if let Err(e) = model.global_laplacian() {
        c.note(format!("hctrw checks skipped: global walk has no reversible measure ({e})"));
        return Ok(());
    }
    let mut recon: f64 = 0.0;
    let mut biorth: f64 = 0.0;
    for t in semigroup_grid(model.locals().len()) {
        let spec = model.hctrw_spectral(&t).map_err(numerical("hctrw spectrum"))?;
        biorth = biorth.max(spec.max_biorthogonality_defect());
        let m = spec.reconstruct(model).map_err(numerical("hctrw reconstruction"))?;
        let reference = oracle::hctrw_loop(&global_p, &local_p, &t, source).map_err(oracle_failure)?;
        let r = oracle::compare_matrices(&rmat(&m), &reference, 1.0).map_err(oracle_failure)?;
        recon = recon.max(r.max_abs_diff);
    }
    c.push("hctrw_reconstruction", recon, 1e-8, None);
    c.push("hctrw_biorthogonality", biorth, 1e-8, None);
    Ok(())
}

fn to_c(m: &RMat) -> CMat {
    oracle::to_complex(m)
}

/// Time vectors with coordinates from [`SEMIGROUP_TIMES`]: the full grid when
/// small, otherwise every constant vector plus cyclic mixtures.
pub fn semigroup_grid(n: usize) -> Vec<Vec<f64>> {
    let k = SEMIGROUP_TIMES.len();
    if k.checked_pow(n as u32).is_some_and(|size| size <= MAX_SEMIGROUP_GRID) {
        return IndexSpace::new(&vec![k; n])
            .iter()
            .map(|idx| idx.iter().map(|&i| SEMIGROUP_TIMES[i]).collect())
            .collect();
    }
    (0..k)
        .flat_map(|s| {
            [
                vec![SEMIGROUP_TIMES[s]; n],
                (0..n).map(|j| SEMIGROUP_TIMES[(s + j) % k]).collect(),
            ]
        })
        .collect()
}

/// Fixed, well-spread unit vectors used as extra evolution probes.
pub fn probe_states(dim: usize, count: usize) -> Vec<QuantumState> {
    (0..count)
        .map(|s| {
            let v = (0..dim)
                .map(|i| {
                    let x = (i + 1) as f64;
                    let y = (s + 1) as f64;
                    Complex64::new((1.3 * x * y + 0.2).cos(), (0.7 * x * x + 0.9 * y).sin())
                })
                .collect();
            QuantumState::normalized(v).expect("probe states are nonzero")
        })
        .collect()
}

fn check_times(setup: &Setup) -> Vec<f64> {
    let mut times = VERIFY_TIMES.to_vec();
    for &t in &setup.times {
        if !times.contains(&t) {
            times.push(t);
        }
    }
    times
}

fn evolution_suite(setup: &Setup, c: &mut Checker) -> Result<(), Failure> {
    let assembly = setup.assembly()?;
    let model = setup.model();
    let local_h: Vec<CMat> = model.locals().iter().map(|g| to_c(&rmat(g.laplacian().matrix()))).collect();
    let global_h = cmat(assembly.global_hamiltonian());
    let dense = assembly.dense_hamiltonian().map_err(numerical("hamiltonian"))?;
    let reference = oracle::dense_hamiltonian(&global_h, &local_h, model.options().cap).map_err(oracle_failure)?;
    let r = oracle::compare_matrices(&cmat(&dense), &reference, 1.0).map_err(oracle_failure)?;
    c.push_report("hamiltonian_assembly", &r, 1e-10);

    let n = assembly.dim();
    let times = check_times(setup);
    let mut unitarity: f64 = 0.0;
    for &t in &times {
        let cols = (0..n)
            .map(|i| assembly.evolve(t, &QuantumState::basis(n, i)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(numerical("evolve"))?;
        let u = CMat::from_fn(n, n, |r, col| cols[col].amplitudes()[r]);
        let defect = (u.adjoint() * &u - CMat::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        unitarity = unitarity.max(defect);
    }
    c.push("unitarity", unitarity, 1e-9, None);

    let mut parts = vec![&setup.psi_h];
    parts.extend(setup.psi_locals.iter());
    let mut states = vec![QuantumState::product(&parts)];
    states.extend(probe_states(n, PROBE_STATES));
    let kbar = setup.kbar()?;
    let mut evo: f64 = 0.0;
    let mut projector: f64 = 0.0;
    for &t in &times {
        let u = match oracle::unitary(&reference, t) {
            Ok(u) => u,
            Err(e @ OracleError::Overflow(_)) => {
                c.note(format!("dense evolution at t = {t} skipped: {e}"));
                continue;
            }
            Err(e) => return Err(oracle_failure(e)),
        };
        for psi in &states {
            let got = assembly.evolve(t, psi).map_err(numerical("evolve"))?;
            let want = &u * DVector::from_column_slice(psi.amplitudes());
            let d = got.amplitudes().iter().zip(want.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            evo = evo.max(d);
            if let Some(kb) = &kbar {
                let l = kb.projector_evolve(t, psi).map_err(numerical("projector evolve"))?;
                let d = got.amplitudes().iter().zip(l.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                projector = projector.max(d);
            }
        }
    }
    let detail = format!("{} states, {} times", states.len(), times.len());
    c.push("evolution_vs_dense", evo, 1e-8, Some(detail));
    if kbar.is_some() {
        c.push("projector_evolution", projector, 1e-10, None);
    }
    Ok(())
}

fn distribution_suite(setup: &Setup, c: &mut Checker) -> Result<(), Failure> {
    let assembly = setup.assembly()?;
    let model = setup.model();
    let cap = model.options().cap;
    let local_h: Vec<CMat> = model.locals().iter().map(|g| to_c(&rmat(g.laplacian().matrix()))).collect();
    let global_h = cmat(assembly.global_hamiltonian());
    let psi_h = setup.psi_h.amplitudes();
    let psi_locals: Vec<Vec<Complex64>> = setup.psi_locals.iter().map(|s| s.amplitudes().to_vec()).collect();
    let shape = model.local_dims();
    let kbar = setup.kbar()?;
    let overlap = kbar.as_ref().map(|kb| (kb.constant_overlap(&setup.psi_h, OVERLAP_TOL), kb.overlap_range(&setup.psi_h)));
    let mut worst = [0.0f64; 7];
    for &t in &setup.times {
        let ctx = format!("t = {t}");
        let general = assembly
            .joint_distribution(t, &setup.psi_h, &setup.psi_locals)
            .map_err(numerical(&ctx))?;
        let reference = oracle::dense_joint_distribution(&global_h, &local_h, t, psi_h, &psi_locals, Basis::Label, cap)
            .map_err(oracle_failure)?;
        let r = oracle::compare(general.probabilities(), &reference, shape, 1.0).map_err(oracle_failure)?;
        worst[0] = worst[0].max(r.max_abs_diff);
        worst[1] = worst[1].max((general.mass() - 1.0).abs());
        let vertex = assembly
            .vertex_marginal(t, &setup.psi_h, &setup.psi_locals)
            .map_err(numerical(&ctx))?;
        let reference = oracle::dense_joint_distribution(&global_h, &local_h, t, psi_h, &psi_locals, Basis::Vertex, cap)
            .map_err(oracle_failure)?;
        let r = oracle::compare(vertex.probabilities(), &reference, shape, 1.0).map_err(oracle_failure)?;
        worst[2] = worst[2].max(r.max_abs_diff);
        if let (Some(kb), Some((constant, _))) = (&kbar, &overlap) {
            let two = kb
                .two_term_distribution(t, &setup.psi_h, &setup.psi_locals)
                .map_err(numerical(&ctx))?;
            worst[3] = worst[3].max(two.max_abs_diff(&general));
            if constant.is_some() {
                let three = kb
                    .kbar_joint_distribution(t, &setup.psi_h, &setup.psi_locals)
                    .map_err(numerical(&ctx))?;
                worst[4] = worst[4].max(three.max_abs_diff(&general));
                worst[5] = worst[5].max(three.max_abs_diff(&two));
                if let Some(p) = setup.p {
                    let f = kb
                        .factorized_checked(t, p, &setup.psi_h, &setup.psi_locals, OVERLAP_TOL)
                        .map_err(validation("p"))?;
                    worst[6] = worst[6].max(f.max_abs_diff(&three));
                }
            }
        }
    }
    c.push("distribution_vs_oracle", worst[0], 1e-8, None);
    c.push("normalization", worst[1], 1e-9, None);
    c.push("vertex_marginal_vs_oracle", worst[2], 1e-8, None);
    if let (Some(_), Some((constant, (lo, hi)))) = (&kbar, overlap) {
        c.push("two_term_vs_general", worst[3], 1e-9, None);
        match constant {
            Some(p) => {
                c.push("three_term_vs_general", worst[4], 1e-9, None);
                c.push("three_term_vs_two_term", worst[5], 1e-9, None);
                match setup.p {
                    Some(_) => c.push("factorized_vs_three_term", worst[6], 1e-9, None),
                    None => c.note(format!("factorized check skipped: no 'p' given (common overlap is {p})")),
                }
            }
            None => c.note(format!(
                "three-term checks skipped: overlaps are not constant (range [{lo}, {hi}])"
            )),
        }
    }
    Ok(())
}

fn verify_command(args: &VerifyArgs) -> Result<(), Failure> {
    let setup = match (&args.scenario, &args.model.model) {
        (Some(s), _) => load_scenario(s, &args.model)?,
        (None, Some(m)) => setup_from_model(m, &args.model)?,
        (None, None) => return Err(Failure::Validation("verify needs --scenario or --model".into())),
    };
    let report = verify(&setup, args.suite)?;
    let text = pretty(&serde_json::to_value(&report).expect("report serializes"));
    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
        write_file(&dir.join("verify.json"), &text)?;
    }
    print!("{text}");
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("verification failed: {}", report.failed().join(", "))))
    }
}

/// Eigen-data of every operator in a model.
pub fn spectra(loaded: &LoadedModel) -> Result<Value, Failure> {
    let model = &loaded.model;
    let global = match model.global_laplacian() {
        Ok(l) => {
            let e = eigh(l.matrix(), hierwalk_core::spectral::GROUPING_TOL).map_err(numerical("global laplacian"))?;
            json!({ "laplacian": spectrum_json(&e) })
        }
        Err(e) => json!({ "notice": format!("no normalized Laplacian: {e}") }),
    };
    let locals: Vec<Value> = model
        .locals()
        .iter()
        .map(|g| {
            json!({
                "vertex_count": g.dim(),
                "laplacian": spectrum_json(g.eigen()),
                "transition": { "values": g.spectrum().values() },
            })
        })
        .collect();
    let mut out = json!({ "global": global, "locals": locals });
    let assembly = HamiltonianAssembly::from_model(model, loaded.global_hamiltonian.clone());
    match assembly {
        Ok(a) => {
            out["global_hamiltonian"] = spectrum_json(a.global_system());
            if a.dim() > model.options().cap {
                out["tuples_notice"] = json!(format!(
                    "tuple blocks omitted: dimension {} exceeds cap {}",
                    a.dim(),
                    model.options().cap
                ));
            } else {
                let tuples: Vec<Value> = a
                    .blocks()
                    .iter()
                    .map(|b| json!({ "tuple": b.tuple, "lambda": b.lambda, "values": b.system.values() }))
                    .collect();
                out["tuples"] = json!(tuples);
            }
        }
        Err(e) => out["hamiltonian_notice"] = json!(format!("no quantum assembly: {e}")),
    }
    Ok(out)
}

fn spectra_command(args: &SpectraArgs) -> Result<(), Failure> {
    let opts = ModelOptions {
        cap: args.cap.unwrap_or(DEFAULT_CAP),
        ..ModelOptions::default()
    };
    let loaded = ModelFile::load(&args.model)?.build(opts)?;
    let text = pretty(&spectra(&loaded)?);
    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
        write_file(&dir.join("spectra.json"), &text)?;
    }
    print!("{text}");
    Ok(())
}
