//! Acceptance run: every criterion at its stated tolerance, one PASS/FAIL
//! line each. `ACCEPTANCE_ONLY=3,7` restricts the run to some criteria.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use polariton_cli::config::{Profile, RunConfig};
use polariton_cli::run::Context;
use polariton_cli::series::run_series;
use polariton_core::eigen::sym_eigen;
use polariton_core::exact::{densities, exact_ground_state, photon_mode_energy, resonance_frequency, ExactOptions, Spectrum};
use polariton_core::grid::{apply_laplacian, inner_product, integrate, make_grid, AxisSpec, Field, UniformGrid};
use polariton_core::model::{axis_hamiltonian, lambda_for, ModelSpec, PhotonMode, PotentialSpec};
use polariton_core::observables::{mode_energy_from_matrix, mode_occupation};
use polariton_core::solver::{energy, grid_hartree_fock, muller_start, occupation_gradient, solve, Functional, OneRdm, ScfOutcome, ScfSettings};
use polariton_core::spbasis::{build_integrals, ip_solve, orthonormal_set, IntegralTable, OrbitalSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OMEGA_HE: f64 = 0.5535;
const OMEGA_H2: f64 = 0.4194;

struct Verdict {
    passed: bool,
    lines: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Self { passed: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "MISS" }));
    }

    fn within(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        self.check((got - want).abs() <= tol, format!("{what}: {got:.6} vs {want} ± {tol:e}"));
    }

    fn runtime(&mut self, t: Instant, limit: Duration) {
        let e = t.elapsed();
        self.check(e < limit, format!("runtime {:.1} s (limit {} s)", e.as_secs_f64(), limit.as_secs()));
    }
}

fn grid(axes: &[(f64, f64)]) -> UniformGrid {
    make_grid(&axes.iter().map(|&(l, h)| AxisSpec::new(l, h)).collect::<Vec<_>>()).unwrap()
}

fn he() -> ModelSpec {
    ModelSpec::bare(PotentialSpec::helium(), 2)
}

fn coupled(bare: &ModelSpec, omega: f64, g_over_omega: f64) -> ModelSpec {
    bare.clone().with_mode(PhotonMode::new(omega, lambda_for(g_over_omega, omega)))
}

struct Basis {
    basis: OrbitalSet,
    table: IntegralTable,
}

fn basis(model: &ModelSpec, g: &UniformGrid, m: usize) -> Basis {
    let basis = ip_solve(model, g, m).unwrap();
    let table = build_integrals(&basis, model).unwrap();
    Basis { basis, table }
}

/// HF then Müller from the perturbed HF matrix.
fn hf_and_muller(b: &Basis, s: &ScfSettings) -> (ScfOutcome, ScfOutcome) {
    let hf = solve(&b.basis, &b.table, Functional::HartreeFock, None, s).unwrap();
    let mu = solve(&b.basis, &b.table, Functional::Muller, Some(muller_start(&hf.rdm, 2, 1e-2)), s).unwrap();
    (hf, mu)
}

fn photons(table: &IntegralTable, rdm: &OneRdm, omega: f64) -> f64 {
    mode_occupation(mode_energy_from_matrix(table, &rdm.matrix(), 0), omega, 2)
}

fn exact(model: &ModelSpec, g: &UniformGrid, opts: &ExactOptions) -> Spectrum {
    exact_ground_state(model, g, opts).unwrap()
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let mut v = Verdict::new();
    let g = grid(&[(20.0, 0.1)]);
    let b = ip_solve(&he(), &g, 4).unwrap();
    for (i, want) in [-1.483, -0.772, -0.461, -0.263].into_iter().enumerate() {
        v.within(&format!("He e_{}", i + 1), b.eigenvalues()[i], want, 3e-3);
    }
    let (levels, _) = sym_eigen(&axis_hamiltonian(g.axis(0), |q| 0.5 * OMEGA_HE * OMEGA_HE * q * q));
    for (k, want) in [0.277, 0.830, 1.384].into_iter().enumerate() {
        v.within(&format!("oscillator e_{k}"), levels[k], want, 3e-3);
    }
    v.runtime(t, Duration::from_secs(60));
    v
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let mut v = Verdict::new();
    let g = grid(&[(20.0, 0.1)]);
    let opts = ExactOptions { residual_tol: 1e-8, ..ExactOptions::default() };
    let w_he = resonance_frequency(&he(), &g, &opts).unwrap();
    v.within("ω_He", w_he, OMEGA_HE, 1e-3);
    let h2 = ModelSpec::bare(PotentialSpec::hydrogen_bond(1.628), 2);
    let w_h2 = resonance_frequency(&h2, &g, &opts).unwrap();
    v.within("ω_H2 (R = 1.628)", w_h2, OMEGA_H2, 1e-3);
    v.runtime(t, Duration::from_secs(600));
    v
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let mut v = Verdict::new();
    let g = grid(&[(20.0, 0.1)]);
    let model = he();
    let full = ip_solve(&model, &g, 81).unwrap();
    let mut series = Vec::new();
    for es in (10..=80).step_by(10) {
        let b = full.truncated(es + 1).unwrap();
        let table = build_integrals(&b, &model).unwrap();
        let mu = solve(&b, &table, Functional::Muller, None, &ScfSettings::paper()).unwrap();
        v.lines.push(format!("     ES {es}: {:.8} (converged {})", mu.energy.total, mu.converged));
        series.push((es, mu.energy.total, mu.converged));
    }
    v.check(series.iter().all(|r| r.2), "all ES runs converged".into());
    let e40 = series.iter().find(|r| r.0 == 40).unwrap().1;
    v.within("E(ES=40)", e40, -2.2427, 5e-4);
    let (es_min, _, _) = series.iter().cloned().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    v.check((30..=60).contains(&es_min), format!("minimum of the ES series at ES = {es_min}, want 30..=60"));
    v.runtime(t, Duration::from_secs(1800));
    v
}

fn criterion_4() -> Verdict {
    let t = Instant::now();
    let mut v = Verdict::new();
    let bare = he();
    let reference = grid_hartree_fock(&bare, &grid(&[(20.0, 0.1)]), 1e-12).unwrap();
    let model = coupled(&bare, OMEGA_HE, 0.0);
    let b = basis(&model, &grid(&[(20.0, 0.1), (20.0, 0.1)]), 81);
    let hf = solve(&b.basis, &b.table, Functional::HartreeFock, None, &ScfSettings::paper()).unwrap();
    let shift = hf.energy.total - (reference.energy + 2.0 * OMEGA_HE / 2.0);
    v.check(shift.abs() < 1e-5, format!("|E_dHF - (E_HF + Nω/2)| = {:.2e} (< 1e-5)", shift.abs()));
    let rho = hf.rdm.density(&b.basis).rho_x;
    let dev = max_abs_difference(&rho, &reference.density);
    v.check(dev < 1e-3, format!("max_x |ρ_HF - ρ_dHF| = {dev:.2e} (< 1e-3)"));
    v.runtime(t, Duration::from_secs(1200));
    v
}

fn max_abs_difference(a: &Field, b: &Field) -> f64 {
    assert_eq!(a.grid(), b.grid());
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// He on the reduced 4D grid at one coupling.
struct Reduced {
    exact: f64,
    muller: f64,
    hf: f64,
    n_exact: f64,
    n_muller: f64,
    n_hf: f64,
}

fn reduced_he(g_over_omega: f64) -> Reduced {
    let g = grid(&[(10.0, 0.25), (10.0, 0.25)]);
    let model = coupled(&he(), OMEGA_HE, g_over_omega);
    let ex = exact(&model, &g, &ExactOptions::default());
    let b = basis(&model, &g, 41);
    let (hf, mu) = hf_and_muller(&b, &ScfSettings::desk());
    Reduced {
        exact: ex.energies[0],
        muller: mu.energy.total,
        hf: hf.energy.total,
        n_exact: mode_occupation(photon_mode_energy(&ex.states[0], &model, 0), OMEGA_HE, 2),
        n_muller: photons(&b.table, &mu.rdm, OMEGA_HE),
        n_hf: photons(&b.table, &hf.rdm, OMEGA_HE),
    }
}

fn criterion_5(half: &mut Option<Reduced>) -> Verdict {
    let t = Instant::now();
    let mut v = Verdict::new();
    for go in [0.1, 0.5, 1.0] {
        let r = reduced_he(go);
        v.check(
            r.exact <= r.muller && r.muller <= r.hf,
            format!("g/ω = {go}: E_exact {:.7} <= E_dRDMFT {:.7} <= E_dHF {:.7}", r.exact, r.muller, r.hf),
        );
        if go >= 0.2 {
            let (em, eh) = ((r.muller - r.exact).abs(), (r.hf - r.exact).abs());
            v.check(em < eh, format!("g/ω = {go}: |dRDMFT error| {em:.2e} < |dHF error| {eh:.2e}"));
        }
        if go == 0.5 {
            *half = Some(r);
        }
    }
    v.runtime(t, Duration::from_secs(7200));
    v
}

/// Müller occupations on the full 2D grid.
fn criterion_6() -> Verdict {
    let t = Instant::now();
    let mut v = Verdict::new();
    let g = grid(&[(20.0, 0.1), (20.0, 0.1)]);
    let cases: [(&str, ModelSpec, f64, f64, usize, &[f64], f64); 3] = [
        ("He g/ω=0.1", he(), OMEGA_HE, 0.1, 41, &[1.978, 0.020, 0.001], 0.01),
        ("H2 g/ω=0.1", ModelSpec::bare(PotentialSpec::hydrogen_bond(1.628), 2), OMEGA_H2, 0.1, 71, &[1.878, 0.102, 0.015], 0.01),
        ("He g/ω=0.8", he(), OMEGA_HE, 0.8, 41, &[1.85, 0.14], 0.02),
    ];
    for (name, bare, omega, go, m, want, tol) in cases {
        let model = coupled(&bare, omega, go);
        let b = basis(&model, &g, m);
        let mu = solve(&b.basis, &b.table, Functional::Muller, None, &ScfSettings::paper()).unwrap();
        let occ = mu.rdm.sorted().occupations;
        for (i, &w) in want.iter().enumerate() {
            v.within(&format!("{name} n_{}", i + 1), occ[i], w, tol);
        }
    }
    v.runtime(t, Duration::from_secs(3600));
    v
}

fn criterion_7(half: Option<Reduced>) -> Verdict {
    let mut v = Verdict::new();
    // At λ=0 only the q discretization enters N_ph; this grid resolves it.
    let g = grid(&[(10.0, 0.5), (12.0, 0.1)]);
    let model = coupled(&he(), OMEGA_HE, 0.0);
    let opts = ExactOptions { residual_tol: 1e-8, ..ExactOptions::default() };
    let ex = exact(&model, &g, &opts);
    let n_ex = mode_occupation(photon_mode_energy(&ex.states[0], &model, 0), OMEGA_HE, 2);
    let b = basis(&model, &g, 41);
    let (hf, mu) = hf_and_muller(&b, &ScfSettings::desk());
    for (name, n) in [("exact", n_ex), ("dRDMFT", photons(&b.table, &mu.rdm, OMEGA_HE)), ("dHF", photons(&b.table, &hf.rdm, OMEGA_HE))] {
        v.check(n.abs() <= 1e-6, format!("λ=0 N_ph({name}) = {n:.2e} (|·| <= 1e-6)"));
    }
    let r = half.unwrap_or_else(|| reduced_he(0.5));
    v.check(
        r.n_exact >= r.n_muller && r.n_muller >= r.n_hf,
        format!("g/ω = 0.5: N_ph exact {:.5} >= dRDMFT {:.5} >= dHF {:.5}", r.n_exact, r.n_muller, r.n_hf),
    );
    v
}

/// Strict local maxima above 5% of the largest value.
fn peaks(x: &[f64], f: &[f64]) -> Vec<f64> {
    let top = f.iter().cloned().fold(f64::MIN, f64::max);
    (1..f.len() - 1)
        .filter(|&i| f[i] > f[i - 1] && f[i] > f[i + 1] && f[i] > 0.05 * top)
        .map(|i| x[i])
        .collect()
}

fn dissociation_shape(v: &mut Verdict, name: &str, d: f64, x: &[f64], delta: &[f64], h: f64) {
    let p = peaks(x, delta);
    let centre = delta[x.len() / 2];
    if d < 1.5 {
        v.check(p.len() == 1 && p[0].abs() < 1e-9, format!("{name} d={d}: single central maximum, peaks at {p:?}"));
    } else {
        let ok = p.len() == 2 && (p[0] + p[1]).abs() <= h + 1e-9 && {
            let at = |xp: f64| delta[x.iter().position(|&xi| xi == xp).unwrap()];
            centre < at(p[0]) && centre < at(p[1])
        };
        v.check(ok, format!("{name} d={d}: symmetric double peak, peaks at {p:?}, Δρ(0) = {centre:.4}"));
    }
}

fn criterion_8() -> Verdict {
    let mut v = Verdict::new();
    let g = grid(&[(10.0, 0.25), (10.0, 0.25)]);
    let x = g.axis(0).points();
    for d in [1.0, 2.0] {
        let mut ex_rho = Vec::new();
        let mut mu_rho = Vec::new();
        for go in [0.0, 1.0] {
            let model = coupled(&ModelSpec::bare(PotentialSpec::hydrogen_bond(d), 2), OMEGA_H2, go);
            let ex = exact(&model, &g, &ExactOptions::default());
            ex_rho.push(densities(&ex.states[0]).rho_x.into_values());
            let b = basis(&model, &g, 41);
            let (_, mu) = hf_and_muller(&b, &ScfSettings::desk());
            mu_rho.push(mu.rdm.density(&b.basis).rho_x.into_values());
        }
        for (name, pair) in [("exact", &ex_rho), ("dRDMFT", &mu_rho)] {
            let delta: Vec<f64> = pair[1].iter().zip(&pair[0]).map(|(a, b)| a - b).collect();
            dissociation_shape(&mut v, name, d, &x, &delta, 0.25);
        }
    }
    v
}

fn random_basis(g: &UniformGrid, m: usize, seed: u64) -> OrbitalSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = DMatrix::from_fn(g.len(), m, |i, _| {
        let r2: f64 = g.coordinates(i).iter().map(|c| c * c).sum();
        (-0.3 * r2).exp() * rng.random_range(-1.0..1.0)
    });
    orthonormal_set(g, &f, 1)
}

/// Direct double quadrature of `⟨ij|w'|kl⟩`.
fn quadrature_element(b: &OrbitalSet, model: &ModelSpec, idx: [usize; 4]) -> f64 {
    let g = b.grid();
    let phi = b.orbitals();
    let coords: Vec<Vec<f64>> = (0..g.len()).map(|p| g.coordinates(p)).collect();
    let dz = g.volume_element();
    let mut acc = 0.0;
    for (a, za) in coords.iter().enumerate() {
        let left = phi[(a, idx[0])] * phi[(a, idx[2])];
        for (c, zc) in coords.iter().enumerate() {
            let w = model.dressed_interaction(za[0], &za[1..], zc[0], &zc[1..]).unwrap();
            acc += left * w * phi[(c, idx[1])] * phi[(c, idx[3])];
        }
    }
    acc * dz * dz
}

fn random_rdm(m: usize, seed: u64) -> OneRdm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occ: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = occ.iter().sum();
    occ.iter_mut().for_each(|n| *n *= 2.0 / s);
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    let (_, u) = sym_eigen(&(&a + a.transpose()));
    OneRdm { occupations: occ, coefficients: u }
}

/// `Σ n_i h_ii + ½ Σ n_i n_j ⟨ij|ij⟩ − ½ Σ √(n_i n_j) ⟨ij|ji⟩` term by term.
fn double_loop(table: &IntegralTable, rdm: &OneRdm) -> f64 {
    let m = table.len();
    let c = &rdm.coefficients;
    let n = &rdm.occupations;
    let mut w = vec![0.0; m.pow(4)];
    for (p, slot) in w.iter_mut().enumerate() {
        *slot = table.dressed(p / (m * m * m), (p / (m * m)) % m, (p / m) % m, p % m);
    }
    let element = |i: usize, j: usize, k: usize, l: usize| {
        let mut acc = 0.0;
        for (p, wv) in w.iter().enumerate() {
            let (a, b, cc, d) = (p / (m * m * m), (p / (m * m)) % m, (p / m) % m, p % m);
            acc += c[(a, i)] * c[(b, j)] * c[(cc, k)] * c[(d, l)] * wv;
        }
        acc
    };
    let mut e = 0.0;
    for i in 0..m {
        let hii = (c.column(i).transpose() * &table.h * c.column(i))[(0, 0)];
        e += n[i] * hii;
        for j in 0..m {
            e += 0.5 * n[i] * n[j] * element(i, j, i, j);
            e -= 0.5 * (n[i] * n[j]).sqrt() * element(i, j, j, i);
        }
    }
    e
}

fn criterion_9() -> Verdict {
    let t = Instant::now();
    let mut v = Verdict::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let g = grid(&[(4.0, 0.25), (3.0, 0.2)]);
    let random_field = |rng: &mut ChaCha8Rng| Field::new(g.clone(), (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let (f, h) = (random_field(&mut rng), random_field(&mut rng));
    let asym = (inner_product(&f, &apply_laplacian(&h, &[0, 1])).unwrap() - inner_product(&apply_laplacian(&f, &[0, 1]), &h).unwrap()).abs();
    v.check(asym < 1e-10, format!("Laplacian symmetry defect {asym:.1e}"));
    let curvature = inner_product(&f, &apply_laplacian(&f, &[0, 1])).unwrap();
    v.check(curvature < 0.0, format!("⟨f, Δf⟩ = {curvature:.3e} < 0"));

    let line = grid(&[(20.0, 0.1)]);
    let gauss = integrate(&line.sample(|c| (-c[0] * c[0]).exp()));
    let err = (gauss - std::f64::consts::PI.sqrt()).abs();
    v.check(err < 1e-10, format!("Gaussian quadrature error {err:.1e}"));

    let small = grid(&[(3.0, 0.5), (3.0, 0.5)]);
    let model = coupled(&he(), 0.7, 0.6);
    let b = random_basis(&small, 4, 11);
    let table = build_integrals(&b, &model).unwrap();
    let mut worst = 0.0f64;
    for p in 0..256 {
        let idx = [p / 64, (p / 16) % 4, (p / 4) % 4, p % 4];
        worst = worst.max((table.dressed(idx[0], idx[1], idx[2], idx[3]) - quadrature_element(&b, &model, idx)).abs());
    }
    v.check(worst < 1e-8, format!("integral assembly vs 4D quadrature, M = 4: {worst:.1e}"));

    let mut worst = 0.0f64;
    for seed in 0..3 {
        let rdm = random_rdm(4, seed);
        worst = worst.max((energy(&table, &rdm).total - double_loop(&table, &rdm)).abs());
    }
    let aufbau = OneRdm::aufbau(4, 2);
    worst = worst.max((energy(&table, &aufbau).total - double_loop(&table, &aufbau)).abs());
    v.check(worst < 1e-12, format!("Müller/HF energy vs double loop: {worst:.1e}"));

    let rdm = random_rdm(4, 9);
    let grad = occupation_gradient(&table, &rdm);
    let step = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..4 {
        let (mut up, mut down) = (rdm.clone(), rdm.clone());
        up.occupations[i] += step;
        down.occupations[i] -= step;
        let fd = (energy(&table, &up).total - energy(&table, &down).total) / (2.0 * step);
        worst = worst.max((fd - grad[i]).abs());
    }
    v.check(worst < 1e-6, format!("occupation gradient vs finite differences: {worst:.1e}"));

    let line_model = he();
    let lb = basis(&line_model, &grid(&[(12.0, 0.2)]), 12);
    let lc = basis(&coupled(&line_model, OMEGA_HE, 0.5), &grid(&[(8.0, 0.4), (8.0, 0.4)]), 12);
    let mut iterates = 0;
    let mut violation = 0.0f64;
    for bb in [&lb, &lc] {
        let (hf, mu) = hf_and_muller(bb, &ScfSettings::desk());
        for rec in hf.history.iter().chain(&mu.history) {
            iterates += 1;
            violation = violation.max((rec.electron_sum - 2.0).abs()).max(-rec.min_occupation).max(rec.max_occupation - 2.0);
        }
    }
    v.check(iterates > 0 && violation < 1e-8, format!("N-representability over {iterates} SCF iterates: worst violation {violation:.1e}"));

    let (same, files) = jobs_reproducible();
    v.check(same, format!("series outputs with 1 and 3 jobs byte-identical over {files} files"));
    v.runtime(t, Duration::from_secs(300));
    v
}

fn jobs_reproducible() -> (bool, usize) {
    let cfg = RunConfig::parse(
        "[system]\nkind = \"he\"\n[cavity]\nomega = 0.5535\ng_over_omega = 0.3\n[grid]\nLx = 8.0\ndx = 0.25\nLq = 8.0\ndq = 0.25\n\
         [solver]\nmethod = \"rdmft\"\nES = 12\n[series]\nvariable = \"ES\"\nvalues = [4, 8, 12]\n",
    )
    .unwrap();
    let ctx = Context { cache: None, ..Context::new(Profile::Desk, 4.0) };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if run_series(&cfg, &ctx, &a, 1).is_err() || run_series(&cfg, &ctx, &b, 3).is_err() {
        return (false, 0);
    }
    let mut files = 0;
    let mut same = true;
    for path in walk(&a) {
        let rel = path.strip_prefix(&a).unwrap();
        if rel.ends_with("series_timing.csv") {
            continue;
        }
        files += 1;
        same &= std::fs::read(&path).ok() == std::fs::read(b.join(rel)).ok();
    }
    (same && files > 0, files)
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().is_none_or(|o| o.contains(&k));
    let mut half = None;
    let mut results = Vec::new();
    for k in 1..=9 {
        if !wanted(k) {
            continue;
        }
        let t = Instant::now();
        let verdict = match k {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(&mut half),
            6 => criterion_6(),
            7 => criterion_7(half.take()),
            8 => criterion_8(),
            _ => criterion_9(),
        };
        println!("criterion {k}: {} ({:.0} s)", if verdict.passed { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
        for l in &verdict.lines {
            println!("    {l}");
        }
        results.push((k, verdict.passed));
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
