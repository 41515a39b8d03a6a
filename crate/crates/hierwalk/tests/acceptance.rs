//! Acceptance suite. Prints one line per criterion and exits non-zero if any fails.
//!
//! Every reference value is produced by the dense oracle or a closed form
//! computed here, never by the code under test.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hierwalk::cli::{load_scenario, run_simulation, ModelArgs};
use hierwalk::oracle::{self, Basis, CMat, RMat};
use hierwalk_core::hierarchy::{Convention, ModelOptions};
use hierwalk_core::spectral::{shift_to_nonnegative, ShiftMode, GROUPING_TOL};
use hierwalk_core::walk::{ctqw_distribution, single_ctqw_distribution};
use hierwalk_core::{
    eigh, ComplexMatrix, EigenSystem, GraphModel, HamiltonianAssembly, HierarchicalModel, KbarModel, QuantumState,
    RealMatrix,
};
use nalgebra::DVector;
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    summary: String,
    info: Vec<String>,
}

/// Running maximum of a residual against a tolerance.
#[derive(Clone, Copy)]
struct Worst {
    value: f64,
    tol: f64,
}

impl Worst {
    fn new(tol: f64) -> Self {
        Self { value: 0.0, tol }
    }

    fn see(&mut self, r: f64) {
        if r > self.value || r.is_nan() {
            self.value = r;
        }
    }

    fn ok(&self) -> bool {
        self.value <= self.tol
    }

    fn show(&self) -> String {
        format!("{:.2e} <= {:.0e}", self.value, self.tol)
    }
}

struct Case {
    name: &'static str,
    global: GraphModel,
    locals: Vec<GraphModel>,
    q: Option<Vec<f64>>,
}

fn p2() -> GraphModel {
    GraphModel::path(2).unwrap()
}

fn c3() -> GraphModel {
    GraphModel::cycle(3).unwrap()
}

fn kbar_case(name: &'static str, q: &[f64], locals: Vec<GraphModel>) -> Case {
    Case {
        name,
        global: GraphModel::kbar(q).unwrap(),
        locals,
        q: Some(q.to_vec()),
    }
}

/// The reference models plus one model whose global graph is not complete.
fn cases() -> Vec<Case> {
    vec![
        kbar_case("loop/P2", &[1.0], vec![p2()]),
        kbar_case("K2/P2,P2", &[0.5, 0.5], vec![p2(), p2()]),
        kbar_case("K2/P2,C3", &[0.3, 0.7], vec![p2(), c3()]),
        Case {
            name: "P2/P2,C3",
            global: p2(),
            locals: vec![p2(), c3()],
            q: None,
        },
    ]
}

impl Case {
    fn model(&self, convention: Convention) -> HierarchicalModel {
        let options = ModelOptions {
            convention,
            ..ModelOptions::default()
        };
        HierarchicalModel::new(self.global.clone(), self.locals.clone(), options).unwrap()
    }

    fn global_walk(&self) -> (RMat, Vec<f64>) {
        walk(&self.global)
    }

    fn local_walks(&self) -> Vec<(RMat, Vec<f64>)> {
        self.locals.iter().map(walk).collect()
    }

    /// `D^{1/2} P D^{−1/2}` of the global walk.
    fn global_h(&self) -> CMat {
        let (p, pi) = self.global_walk();
        oracle::to_complex(&symmetrized(&p, &pi))
    }

    /// Normalized Laplacians `I − D^{1/2} P D^{−1/2}`.
    fn local_h(&self) -> Vec<CMat> {
        self.local_walks()
            .iter()
            .map(|(p, pi)| {
                let n = p.nrows();
                oracle::to_complex(&(RMat::identity(n, n) - symmetrized(p, pi)))
            })
            .collect()
    }

    fn dims(&self) -> Vec<usize> {
        self.locals.iter().map(GraphModel::vertex_count).collect()
    }

    fn dim(&self) -> usize {
        self.global.vertex_count() * self.dims().iter().product::<usize>()
    }
}

/// Transition matrix and reversible measure of a graph's walk.
fn walk(g: &GraphModel) -> (RMat, Vec<f64>) {
    let g = g.clone().completed().unwrap();
    let p = g.transition().unwrap();
    (oracle::from_row_major(p.rows(), p.cols(), p.as_slice()), g.measure().unwrap().to_vec())
}

fn symmetrized(p: &RMat, pi: &[f64]) -> RMat {
    RMat::from_fn(p.nrows(), p.ncols(), |i, j| pi[i].sqrt() * p[(i, j)] / pi[j].sqrt())
}

fn dense(m: &RealMatrix) -> RMat {
    oracle::from_row_major(m.rows(), m.cols(), m.as_slice())
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C> {
    let v: Vec<C> = (0..n).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> QuantumState {
    QuantumState::new(random_vec(rng, n)).unwrap()
}

fn random_locals(rng: &mut ChaCha8Rng, dims: &[usize]) -> Vec<QuantumState> {
    dims.iter().map(|&n| random_state(rng, n)).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn cmax_diff(a: &[C], b: &[C]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn amplitudes_of(s: &[QuantumState]) -> Vec<Vec<C>> {
    s.iter().map(|x| x.amplitudes().to_vec()).collect()
}

fn kron_probs(parts: &[Vec<f64>]) -> Vec<f64> {
    parts.iter().fold(vec![1.0], |acc, p| acc.iter().flat_map(|a| p.iter().map(move |b| a * b)).collect())
}

/// `|⟨k|e^{itH}ψ⟩|²` by the series exponential.
fn dense_ctqw(h: &CMat, psi: &[C], t: f64) -> Vec<f64> {
    let u = oracle::unitary(h, t).unwrap();
    (&u * DVector::from_column_slice(psi)).iter().map(|z| z.norm_sqr()).collect()
}

fn hdtrw_residuals() -> Outcome {
    let start = Instant::now();
    let mut w = Worst::new(1e-8);
    let mut pairs = 0;
    let mut info = Vec::new();
    for case in cases() {
        for conv in [Convention::Destination, Convention::Source] {
            let model = case.model(conv);
            let (gp, _) = case.global_walk();
            let lps: Vec<RMat> = case.local_walks().into_iter().map(|(p, _)| p).collect();
            let p = oracle::to_complex(&oracle::hierarchical_loop(&gp, &lps, conv == Convention::Source));
            let spectrum = model.hdtrw_eigenpairs().unwrap();
            for pair in &spectrum.pairs {
                let v = DVector::from_vec(pair.vector(&model));
                let r = &p * &v - &v * pair.value;
                w.see(r.iter().map(|z| z.norm()).fold(0.0, f64::max));
                pairs += 1;
            }
            if !spectrum.defective.is_empty() {
                info.push(format!(
                    "{} ({conv:?}): non-diagonalizable blocks {:?} reported, not approximated",
                    case.name, spectrum.defective
                ));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: w.ok() && secs < 5.0,
        summary: format!("hDTRW eigenpair residuals: {} over {pairs} pairs, both conventions ({secs:.2} s < 5 s)", w.show()),
        info,
    }
}

fn hctrw_reconstruction() -> Outcome {
    let start = Instant::now();
    let grid = [0.1, 0.5, 1.0, 2.0];
    let mut w = Worst::new(1e-8);
    let mut count = 0;
    for case in cases() {
        let (gp, _) = case.global_walk();
        let lps: Vec<RMat> = case.local_walks().into_iter().map(|(p, _)| p).collect();
        let n = lps.len();
        let space = hierwalk_core::IndexSpace::new(&vec![grid.len(); n]);
        for conv in [Convention::Destination, Convention::Source] {
            let model = case.model(conv);
            for idx in space.iter() {
                let t: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
                let spectral = model.hctrw_spectral(&t).unwrap().reconstruct(&model).unwrap();
                let reference = oracle::hctrw_loop(&gp, &lps, &t, conv == Convention::Source).unwrap();
                let r = oracle::compare_matrices(&dense(&spectral), &reference, 1e-8).unwrap();
                w.see(r.max_abs_diff);
                count += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: w.ok() && secs < 10.0,
        summary: format!("hCTRW spectral reconstruction: {} over {count} time vectors ({secs:.2} s < 10 s)", w.show()),
        info: vec![],
    }
}

fn evolution_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut w = Worst::new(1e-8);
    let mut norm = Worst::new(1e-10);
    for case in cases() {
        let model = case.model(Convention::Destination);
        let asm = HamiltonianAssembly::from_model(&model, None).unwrap();
        let h = oracle::dense_hamiltonian(&case.global_h(), &case.local_h(), 4096).unwrap();
        let states: Vec<QuantumState> = (0..20).map(|_| random_state(&mut rng, case.dim())).collect();
        for t in [0.3, 1.0, PI] {
            let u = oracle::unitary(&h, t).unwrap();
            for psi in &states {
                let got = asm.evolve(t, psi).unwrap();
                let want = &u * DVector::from_column_slice(psi.amplitudes());
                w.see(cmax_diff(got.amplitudes(), want.as_slice()));
                norm.see((got.norm() - 1.0).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: w.ok() && norm.ok() && secs < 10.0,
        summary: format!(
            "spectral vs dense evolution: {}, norm defect {} (20 states x 3 times x 4 models, {secs:.2} s < 10 s)",
            w.show(),
            norm.show()
        ),
        info: vec![],
    }
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mass = Worst::new(1e-9);
    let mut oracle_diff = Worst::new(1e-8);
    let mut errors = Vec::new();
    for case in cases() {
        let model = case.model(Convention::Destination);
        let asm = HamiltonianAssembly::from_model(&model, None).unwrap();
        let (gh, lh) = (case.global_h(), case.local_h());
        for trial in 0..50 {
            let psi_h = random_state(&mut rng, case.global.vertex_count());
            let locals = random_locals(&mut rng, &case.dims());
            for t in [0.0, 1.0, PI, 10.0] {
                match asm.joint_distribution(t, &psi_h, &locals) {
                    Ok(d) => {
                        mass.see((d.probabilities().iter().sum::<f64>() - 1.0).abs());
                        if trial < 5 {
                            let reference = oracle::dense_joint_distribution(
                                &gh,
                                &lh,
                                t,
                                psi_h.amplitudes(),
                                &amplitudes_of(&locals),
                                Basis::Label,
                                4096,
                            )
                            .unwrap();
                            oracle_diff.see(max_diff(d.probabilities(), &reference));
                        }
                    }
                    Err(e) => errors.push(format!("{} t={t}: {e}", case.name)),
                }
            }
        }
    }
    Outcome {
        pass: mass.ok() && oracle_diff.ok() && errors.is_empty(),
        summary: format!(
            "joint law mass: {} (50 product states x 4 times x 4 models); dense-oracle agreement {}",
            mass.show(),
            oracle_diff.show()
        ),
        info: errors,
    }
}

/// `e^{iθ}(1, ±i)/√2`: overlap 1/2 with every real unit vector of ℝ².
fn circular_state(rng: &mut ChaCha8Rng) -> QuantumState {
    let phase = C::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    QuantumState::new(vec![phase * FRAC_1_SQRT_2, phase * C::new(0.0, sign * FRAC_1_SQRT_2)]).unwrap()
}

fn kbar_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let times = [0.0, 0.7, PI, 5.0];
    let mut general_two_term = Worst::new(1e-9);
    let mut three = Worst::new(1e-9);
    let mut oracle_diff = Worst::new(1e-8);
    for case in cases().into_iter().filter(|c| c.q.is_some()) {
        let q = case.q.clone().unwrap();
        let model = case.model(Convention::Destination);
        let asm = HamiltonianAssembly::from_model(&model, None).unwrap();
        let kb = KbarModel::from_model(&q, &model).unwrap();
        let (gh, lh) = (case.global_h(), case.local_h());
        for _ in 0..20 {
            let psi_h = random_state(&mut rng, q.len());
            let locals = random_locals(&mut rng, &case.dims());
            for t in times {
                let g = asm.joint_distribution(t, &psi_h, &locals).unwrap();
                let l = kb.two_term_distribution(t, &psi_h, &locals).unwrap();
                general_two_term.see(g.max_abs_diff(&l));
                let reference = oracle::dense_joint_distribution(
                    &gh,
                    &lh,
                    t,
                    psi_h.amplitudes(),
                    &amplitudes_of(&locals),
                    Basis::Label,
                    4096,
                )
                .unwrap();
                oracle_diff.see(max_diff(g.probabilities(), &reference));
            }
        }
        for _ in 0..10 {
            let psi_h = if q.len() == 2 {
                circular_state(&mut rng)
            } else {
                random_state(&mut rng, q.len())
            };
            assert!(kb.constant_overlap(&psi_h, 1e-12).is_some());
            let locals = random_locals(&mut rng, &case.dims());
            for t in times {
                let g = asm.joint_distribution(t, &psi_h, &locals).unwrap();
                let l = kb.two_term_distribution(t, &psi_h, &locals).unwrap();
                let k = kb.kbar_joint_distribution(t, &psi_h, &locals).unwrap();
                general_two_term.see(g.max_abs_diff(&l));
                three.see(k.max_abs_diff(&g).max(k.max_abs_diff(&l)));
            }
        }
    }
    let info = vec![three_term_counterexample()];
    Outcome {
        pass: general_two_term.ok() && three.ok() && oracle_diff.ok(),
        summary: format!(
            "K-bar formulas: general=two-term {} on all states; three-term vs both {} on constant-overlap states; general vs dense oracle {}",
            general_two_term.show(),
            three.show(),
            oracle_diff.show()
        ),
        info,
    }
}

/// The three-term law needs constant overlap; show by how much it misses otherwise.
fn three_term_counterexample() -> String {
    let case = kbar_case("K2/P2,P2", &[0.5, 0.5], vec![p2(), p2()]);
    let model = case.model(Convention::Destination);
    let asm = HamiltonianAssembly::from_model(&model, None).unwrap();
    let kb = KbarModel::from_model(&[0.5, 0.5], &model).unwrap();
    let psi_h = QuantumState::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap();
    let locals = [QuantumState::basis(2, 0), QuantumState::basis(2, 0)];
    let t = PI / 4.0;
    let raw = kb.three_term_values(t, &psi_h, &locals).unwrap();
    let g = asm.joint_distribution(t, &psi_h, &locals).unwrap();
    let (lo, hi) = kb.overlap_range(&psi_h);
    format!(
        "three-term formula without constant overlap (K2/P2,P2, psi_H=(1,1)/sqrt2, t=pi/4, overlaps in [{lo:.3}, {hi:.3}]): \
         min value {:.4}, off by {:.4}; simulate reports the gap as two_term_residual",
        raw.iter().copied().fold(f64::INFINITY, f64::min),
        max_diff(&raw, g.probabilities())
    )
}

fn factorization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let q = [0.5, 0.5];
    let case = kbar_case("K2/P2,P2", &q, vec![p2(), p2()]);
    let model = case.model(Convention::Destination);
    let kb = KbarModel::from_model(&q, &model).unwrap();
    let lh = case.local_h();
    let psi_h = QuantumState::new(vec![C::new(FRAC_1_SQRT_2, 0.0), C::new(0.0, FRAC_1_SQRT_2)]).unwrap();
    let (lo, hi) = kb.overlap_range(&psi_h);
    let p = 0.5;
    let mut spread = Worst::new(1e-12);
    spread.see((hi - lo).max((lo - p).abs()).max((hi - p).abs()));
    let mut mix = Worst::new(1e-9);
    let mut local_sets = vec![vec![QuantumState::basis(2, 0), QuantumState::basis(2, 0)]];
    local_sets.extend((0..10).map(|_| random_locals(&mut rng, &[2, 2])));
    for locals in &local_sets {
        for t in [0.0, 0.7, PI, 5.0] {
            let three = kb.kbar_joint_distribution(t, &psi_h, locals).unwrap();
            let moved: Vec<Vec<f64>> =
                locals.iter().zip(&lh).zip(q).map(|((s, h), qj)| dense_ctqw(h, s.amplitudes(), qj * t)).collect();
            let frozen: Vec<Vec<f64>> = locals.iter().map(QuantumState::probabilities).collect();
            let want: Vec<f64> =
                kron_probs(&moved).iter().zip(kron_probs(&frozen)).map(|(a, b)| p * a + (1.0 - p) * b).collect();
            mix.see(max_diff(three.probabilities(), &want));
        }
    }

    // Locals with zero Laplacian: every tuple vector is the same, so p = 1.
    let frozen_graph = |n: usize| {
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        edges.extend((1..n).map(|i| (i - 1, i)));
        GraphModel::new(n, &edges)
            .unwrap()
            .with_transition(RealMatrix::identity(n))
            .unwrap()
            .with_measure(vec![1.0 / n as f64; n])
            .unwrap()
    };
    let q2 = [0.3, 0.7];
    let trivial = HierarchicalModel::new(
        GraphModel::kbar(&q2).unwrap(),
        vec![frozen_graph(2), frozen_graph(3)],
        ModelOptions::default(),
    )
    .unwrap();
    let kb2 = KbarModel::from_model(&q2, &trivial).unwrap();
    let first = kb2.tuples()[0].vector.clone();
    let mut coincide = Worst::new(0.0);
    for tup in kb2.tuples() {
        coincide.see(max_diff(&tup.vector, &first));
    }
    let psi_h = QuantumState::from_real(&first).unwrap();
    let mut degenerate = Worst::new(1e-15);
    for _ in 0..10 {
        let locals = random_locals(&mut rng, &[2, 3]);
        let frozen: Vec<Vec<f64>> = locals.iter().map(QuantumState::probabilities).collect();
        let want = kron_probs(&frozen);
        for t in [0.0, 0.7, PI, 5.0] {
            let three = kb2.kbar_joint_distribution(t, &psi_h, &locals).unwrap();
            degenerate.see(max_diff(three.probabilities(), &want));
        }
    }
    Outcome {
        pass: spread.ok() && mix.ok() && coincide.ok() && degenerate.ok(),
        summary: format!(
            "factorization at p=1/2: overlap spread {}, mixture {}; zero-Laplacian locals (p=1): tuple vectors identical, law {}",
            spread.show(),
            mix.show(),
            degenerate.show()
        ),
        info: vec![],
    }
}

fn single_graph_closed_form() -> Outcome {
    let mut w = Worst::new(1e-10);
    let model = kbar_case("loop/P2", &[1.0], vec![p2()]).model(Convention::Destination);
    let asm = HamiltonianAssembly::from_model(&model, None).unwrap();
    for t in [0.0, PI / 4.0, PI / 2.0, 1.0] {
        let want = t.cos().powi(2);
        let single = single_ctqw_distribution(&p2(), &QuantumState::basis(2, 0), t).unwrap();
        w.see((single[0] - want).abs());
        let joint = asm.joint_distribution(t, &QuantumState::basis(1, 0), &[QuantumState::basis(2, 0)]).unwrap();
        w.see((joint.get(&[0]) - want).abs());
    }
    Outcome {
        pass: w.ok(),
        summary: format!("P2 from |0>: P(X_t = 0) = cos^2 t, single graph and one-vertex hierarchy: {}", w.show()),
        info: vec![],
    }
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize, real: bool) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let im = if real || i == j { 0.0 } else { rng.gen_range(-1.0..1.0) };
            let z = C::new(rng.gen_range(-1.0..1.0), im);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

fn invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let times = [0.3, 1.0, PI, 10.0];
    let mut phase = Worst::new(1e-12);
    let phases = [C::new(-1.0, 0.0), C::from_polar(1.0, 0.7)];

    for case in cases() {
        let model = case.model(Convention::Destination);
        let asm = HamiltonianAssembly::from_model(&model, None).unwrap();
        let base: Vec<EigenSystem<C>> = model.locals().iter().map(|g| g.eigen().to_complex()).collect();
        let psi_h = random_state(&mut rng, case.global.vertex_count());
        let locals = random_locals(&mut rng, &case.dims());
        for j in 0..base.len() {
            for m in 0..base[j].dim() {
                for u in phases {
                    let mut systems = base.clone();
                    systems[j] = systems[j].clone().with_vector_phase(m, u);
                    let flipped = HamiltonianAssembly::new(asm.global_hamiltonian(), systems.clone()).unwrap();
                    for t in times {
                        let a = asm.joint_distribution(t, &psi_h, &locals).unwrap();
                        let b = flipped.joint_distribution(t, &psi_h, &locals).unwrap();
                        phase.see(a.max_abs_diff(&b));
                        let a = ctqw_distribution(&base[j], &locals[j], t).unwrap();
                        let b = ctqw_distribution(&systems[j], &locals[j], t).unwrap();
                        phase.see(max_diff(&a, &b));
                    }
                }
                if let Some(q) = &case.q {
                    let real: Vec<EigenSystem<f64>> = model.locals().iter().map(|g| g.eigen().clone()).collect();
                    let mut flipped = real.clone();
                    flipped[j] = flipped[j].clone().with_vector_phase(m, -1.0);
                    let kb = KbarModel::new(q, real).unwrap();
                    let kf = KbarModel::new(q, flipped).unwrap();
                    let psi_c = if q.len() == 2 { circular_state(&mut rng) } else { psi_h.clone() };
                    for t in times {
                        let a = kb.two_term_distribution(t, &psi_h, &locals).unwrap();
                        let b = kf.two_term_distribution(t, &psi_h, &locals).unwrap();
                        phase.see(a.max_abs_diff(&b));
                        let a = kb.kbar_joint_distribution(t, &psi_c, &locals).unwrap();
                        let b = kf.kbar_joint_distribution(t, &psi_c, &locals).unwrap();
                        phase.see(a.max_abs_diff(&b));
                    }
                }
            }
        }
    }

    // Shifts of a single graph's Hamiltonian.
    let mut min_shift = Worst::new(1e-10);
    let mut reflect = Worst::new(1e-10);
    let mut hamiltonians: Vec<(ComplexMatrix, bool)> = Vec::new();
    for g in [p2(), c3(), GraphModel::star(3).unwrap()] {
        let l = g.completed().unwrap().laplacian().unwrap().matrix().clone();
        hamiltonians.push((l.to_complex(), true));
    }
    for n in [2, 3, 5] {
        hamiltonians.push((random_hermitian(&mut rng, n, true), true));
        hamiltonians.push((random_hermitian(&mut rng, n, false), false));
    }
    for (h, real) in &hamiltonians {
        let sys = eigh(h, GROUPING_TOL).unwrap();
        let (lo, _) = shift_to_nonnegative(&sys, ShiftMode::MinShift);
        let (hi, _) = shift_to_nonnegative(&sys, ShiftMode::MaxReflect);
        for _ in 0..5 {
            let psi = random_state(&mut rng, h.rows());
            let psi_real = QuantumState::normalized(psi.amplitudes().iter().map(|z| C::new(z.re, 0.0)).collect()).unwrap();
            for t in times {
                let base = ctqw_distribution(&sys, &psi, t).unwrap();
                min_shift.see(max_diff(&base, &ctqw_distribution(&lo, &psi, t).unwrap()));
                if *real {
                    let base = ctqw_distribution(&sys, &psi_real, t).unwrap();
                    reflect.see(max_diff(&base, &ctqw_distribution(&hi, &psi_real, t).unwrap()));
                }
            }
        }
    }

    Outcome {
        pass: phase.ok() && min_shift.ok() && reflect.ok(),
        summary: format!(
            "eigenvector phase invariance {}; single-graph min-shift {}; max-reflect (real H, real psi) {}",
            phase.show(),
            min_shift.show(),
            reflect.show()
        ),
        info: shift_counterexamples(),
    }
}

/// Cases where a shifted Hamiltonian gives a different law.
fn shift_counterexamples() -> Vec<String> {
    let mut out = Vec::new();
    let t = 0.4;
    let sys = eigh(&p2().completed().unwrap().laplacian().unwrap().matrix().to_complex(), GROUPING_TOL).unwrap();
    let (hi, _) = shift_to_nonnegative(&sys, ShiftMode::MaxReflect);
    let psi = QuantumState::new(vec![C::new(FRAC_1_SQRT_2, 0.0), C::new(0.0, FRAC_1_SQRT_2)]).unwrap();
    let d = max_diff(&ctqw_distribution(&sys, &psi, t).unwrap(), &ctqw_distribution(&hi, &psi, t).unwrap());
    out.push(format!("max-reflect with complex psi=(1,i)/sqrt2 on P2 reverses time: law changes by {d:.4} at t={t}"));

    let case = kbar_case("K2/P2,C3", &[0.5, 0.5], vec![p2(), c3()]);
    let model = case.model(Convention::Destination);
    let asm = HamiltonianAssembly::from_model(&model, None).unwrap();
    let psi_h = QuantumState::from_real(&[0.6, 0.8]).unwrap();
    let locals = [QuantumState::basis(2, 0), QuantumState::basis(3, 0)];
    let base = asm.joint_distribution(1.0, &psi_h, &locals).unwrap();
    let reflected: Vec<EigenSystem<C>> = model
        .locals()
        .iter()
        .map(|g| shift_to_nonnegative(&g.eigen().to_complex(), ShiftMode::MaxReflect).0)
        .collect();
    let other = HamiltonianAssembly::new(asm.global_hamiltonian(), reflected).unwrap();
    let d = base.max_abs_diff(&other.joint_distribution(1.0, &psi_h, &locals).unwrap());
    out.push(format!(
        "hierarchical law is not shift-invariant: max-reflecting the local Laplacians of K2/P2,C3 changes it by {d:.4}"
    ));
    let lifted: Vec<EigenSystem<C>> = model
        .locals()
        .iter()
        .map(|g| {
            let e = g.eigen().to_complex();
            EigenSystem::from_parts(e.values().iter().map(|v| v + 1.0).collect(), e.vectors().to_vec(), GROUPING_TOL)
        })
        .collect();
    let other = HamiltonianAssembly::new(asm.global_hamiltonian(), lifted).unwrap();
    let d = base.max_abs_diff(&other.joint_distribution(1.0, &psi_h, &locals).unwrap());
    out.push(format!("replacing the local Laplacians L by L + I (whose min-shift is L) changes it by {d:.4}"));
    out
}

fn oracle_self_tests() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut paths = Worst::new(1e-9);
    let mut inverse = Worst::new(1e-9);
    let mut semigroup = Worst::new(1e-8);
    let mut examples = Worst::new(1e-12);
    let max_entry = |m: &CMat| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for n in [1, 2, 5, 16, 64] {
        for _ in 0..3 {
            let h = random_hermitian(&mut rng, n, false);
            let h = CMat::from_fn(n, n, |i, j| h[(i, j)] / (n as f64).sqrt());
            let a = oracle::matrix_exp(&h, false).unwrap();
            let b = oracle::matrix_exp(&h, true).unwrap();
            paths.see(max_entry(&(a - b)));
            let g = CMat::from_fn(n, n, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / n as f64);
            for m in [h.clone(), g.clone(), h.map(|z| z * C::new(0.0, 2.0))] {
                let e = oracle::matrix_exp(&m, false).unwrap();
                let f = oracle::matrix_exp(&(-&m), false).unwrap();
                inverse.see(max_entry(&(&e * &f - CMat::identity(n, n))));
                let (s, t) = (0.3, 0.9);
                let es = oracle::matrix_exp(&(&m * C::new(s, 0.0)), false).unwrap();
                let et = oracle::matrix_exp(&(&m * C::new(t, 0.0)), false).unwrap();
                let est = oracle::matrix_exp(&(&m * C::new(s + t, 0.0)), false).unwrap();
                semigroup.see(max_entry(&(es * et - est)));
            }
        }
    }
    let zero = oracle::matrix_exp(&CMat::zeros(3, 3), false).unwrap();
    examples.see(max_entry(&(zero - CMat::identity(3, 3))));
    let diag = oracle::matrix_exp(&CMat::from_diagonal(&DVector::from_vec(vec![C::new(0.5, 0.0), C::new(-2.0, 0.0)])), false)
        .unwrap();
    examples.see((diag[(0, 0)].re - 0.5f64.exp()).abs().max((diag[(1, 1)].re - (-2.0f64).exp()).abs()));
    let th = PI / 2.0;
    let rot = oracle::matrix_exp(
        &CMat::from_row_slice(2, 2, &[C::new(0.0, 0.0), C::new(th, 0.0), C::new(-th, 0.0), C::new(0.0, 0.0)]),
        false,
    )
    .unwrap();
    let want = CMat::from_row_slice(2, 2, &[C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(-1.0, 0.0), C::new(0.0, 0.0)]);
    examples.see(max_entry(&(rot - want)));
    Outcome {
        pass: paths.ok() && inverse.ok() && semigroup.ok() && examples.ok(),
        summary: format!(
            "oracle exponential: series vs eigen {}; exp(A)exp(-A)=I {}; semigroup {}; closed forms {}",
            paths.show(),
            inverse.show(),
            semigroup.show(),
            examples.show()
        ),
        info: vec![],
    }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

fn cli_determinism() -> Outcome {
    let scenario = data_dir().join("reference_scenario.json");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    let mut info = Vec::new();
    for run in 0..3 {
        let out = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_hierwalk"))
            .arg("simulate")
            .arg("--scenario")
            .arg(&scenario)
            .arg("--out-dir")
            .arg(&out)
            .status()
            .unwrap();
        if !status.success() {
            info.push(format!("run {run} exited with {status}"));
        }
        outputs.push(std::fs::read(out.join("distribution.csv")).unwrap_or_default());
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]) && !outputs[0].is_empty();
    let setup = load_scenario(
        &scenario,
        &ModelArgs {
            model: None,
            tol: None,
            selection_convention: None,
            cap: None,
        },
    )
    .unwrap();
    let in_process = run_simulation(&setup).unwrap().csv;
    let same_as_library = in_process.as_bytes() == outputs[0].as_slice();
    let rows = in_process.lines().count() - 1;
    let want_rows = setup.times.len() * setup.model().local_dim();
    Outcome {
        pass: identical && same_as_library && rows == want_rows && info.is_empty(),
        summary: format!(
            "simulate on the reference scenario: 3 runs byte-identical = {identical}, equal to in-process output = {same_as_library}, {rows} rows (want {want_rows})"
        ),
        info,
    }
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, hdtrw_residuals),
        (2, hctrw_reconstruction),
        (3, evolution_equivalence),
        (4, normalization),
        (5, kbar_consistency),
        (6, factorization),
        (7, single_graph_closed_form),
        (8, invariance),
        (9, oracle_self_tests),
        (10, cli_determinism),
    ];
    let mut failed = Vec::new();
    for (n, f) in criteria {
        let outcome = f();
        println!("[{}] criterion {n}: {}", if outcome.pass { "PASS" } else { "FAIL" }, outcome.summary);
        for line in &outcome.info {
            println!("       info: {line}");
        }
        if !outcome.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
