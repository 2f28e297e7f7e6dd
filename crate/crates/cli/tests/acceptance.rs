//! Acceptance gate. Each test prints one `criterion N: PASS|FAIL` line;
//! run with `--nocapture` to see them.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use latticehom::elasticity::{green_coeff, green_coeff_f64, mandel_size, periodized_green, Lame, SymTensor2, Tensor4};
use latticehom::geometry::{sample_stiffness, InclusionShape, Microstructure, Sampling};
use latticehom::lattice::{Lattice, PatternMatrix};
use latticehom::pfft::{fourier_matrix, PatternFft};
use latticehom::solver::{
    dense_oracle, ls_fixed_point, midpoint_reference, ve_krylov, Scheme, SolverConfig, StiffnessField,
};
use latticehom::translates::{dirichlet_rule, dlvp_rule, orthonormalize, GeneratorSpec};
use latticehom_cli::config::ExperimentConfig;
use latticehom_cli::output::{strip_wall_time, GrayImage};
use latticehom_cli::sweep::sweep_alpha;
use latticehom_cli::{run_solve, Experiment};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn verdict(n: usize, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize, max_m: usize) -> PatternMatrix {
    let range = if d == 2 { 40 } else { 11 };
    loop {
        let e: Vec<i64> = (0..d * d).map(|_| rng.gen_range(-range..=range)).collect();
        if let Ok(m) = PatternMatrix::new(d, e) {
            if m.m() <= max_m {
                return m;
            }
        }
    }
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Tensor4 {
    let n = mandel_size(d);
    let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let s: f64 = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum();
                    s + if i == j { 0.5 } else { 0.0 }
                })
                .collect()
        })
        .collect();
    Tensor4::from_rows(d, &rows).unwrap()
}

#[test]
fn criterion_1_fft_matches_dense_fourier_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_fft, mut worst_unitary) = (0.0f64, 0.0f64);
    for case in 0..100 {
        let d = 2 + case % 2;
        let mat = random_matrix(&mut rng, d, 1024);
        let l = Lattice::new(&mat).unwrap();
        let n = l.m();
        let f = fourier_matrix(&l).unwrap();
        let a: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut b = a.clone();
        PatternFft::new(&l).forward_in_place(&mut b).unwrap();
        let dense: Vec<Complex64> = (0..n).map(|r| (0..n).map(|c| f[r * n + c] * a[c]).sum()).collect();
        let scale = dense.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let err = dense.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale;
        worst_fft = worst_fft.max(err);
        for r in 0..n {
            for c in 0..n {
                let s: Complex64 = (0..n).map(|k| f[r * n + k] * f[c * n + k].conj()).sum();
                let target = if r == c { 1.0 } else { 0.0 };
                worst_unitary = worst_unitary.max((s - target).norm());
            }
        }
    }
    verdict(
        1,
        worst_fft <= 1e-10 && worst_unitary < 1e-12,
        format!("max rel fft error {worst_fft:.2e}, max |FF^H - I| {worst_unitary:.2e} over 100 patterns"),
    );
}

#[test]
fn criterion_2_dirichlet_periodization_is_the_green_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let d = 2 + case % 2;
        let mat = random_matrix(&mut rng, d, if d == 2 { 1024 } else { 512 });
        let l = Arc::new(Lattice::new(&mat).unwrap());
        let c0 = random_spd(&mut rng, d);
        let table = periodized_green(&c0, &orthonormalize(&dirichlet_rule(l.clone())).unwrap()).unwrap();
        for (i, k) in l.frequencies().iter().enumerate() {
            let g = green_coeff(&c0, k).unwrap();
            let n = mandel_size(d);
            let block = table.block(i);
            for p in 0..n {
                for q in 0..n {
                    worst = worst.max((block[p * n + q] - g[(p, q)]).abs());
                }
            }
        }
    }
    verdict(2, worst <= 1e-12, format!("max entrywise difference {worst:.2e} over 20 patterns"));
}

/// Isotropic Green operator from its index form.
fn iso_green(lambda: f64, mu: f64, k: &[f64]) -> Tensor4 {
    let d = k.len();
    let k2: f64 = k.iter().map(|x| x * x).sum();
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let c = (lambda + mu) / (mu * (lambda + 2.0 * mu));
    Tensor4::from_full(d, |i, j, kk, l| {
        (delta(kk, i) * k[l] * k[j] + delta(l, i) * k[kk] * k[j] + delta(kk, j) * k[l] * k[i] + delta(l, j) * k[kk] * k[i])
            / (4.0 * mu * k2)
            - c * k[i] * k[j] * k[kk] * k[l] / (k2 * k2)
    })
}

#[test]
fn criterion_3_green_coefficients_match_isotropic_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let d = 2 + case % 2;
        let mu = rng.gen_range(0.1..10.0);
        let lambda = rng.gen_range(-0.4 * mu..10.0);
        let c0 = Lame::new(lambda, mu).stiffness(d).unwrap();
        let k: Vec<f64> = (0..d).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let g = green_coeff_f64(&c0, &k).unwrap();
        let oracle = iso_green(lambda, mu, &k);
        let err = (g - oracle).max_abs() / oracle.max_abs();
        worst = worst.max(err);
    }
    verdict(3, worst <= 1e-12, format!("max relative difference {worst:.2e} over 1000 frequencies"));
}

#[test]
fn criterion_4_fixed_point_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let cfg = SolverConfig {
        tolerance: 1e-12,
        ..SolverConfig::default()
    };
    for case in 0..25 {
        let d = if case % 5 == 4 { 3 } else { 2 };
        let mat = random_matrix(&mut rng, d, 64);
        let l = Arc::new(Lattice::new(&mat).unwrap());
        let mu = rng.gen_range(0.5..2.0);
        let a = Lame::new(rng.gen_range(0.0..2.0), mu);
        let contrast = rng.gen_range(1.0..10.0);
        let b = Lame::new(a.lambda * contrast, a.mu * contrast);
        let (ca, cb) = (a.stiffness(d).unwrap(), b.stiffness(d).unwrap());
        let values = (0..l.m()).map(|_| if rng.gen_bool(0.4) { cb } else { ca }).collect();
        let c = StiffnessField::new(d, values).unwrap();
        let c0 = midpoint_reference(&[a, b]).unwrap().stiffness(d).unwrap();
        let eps: Vec<f64> = (0..mandel_size(d)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eps0 = SymTensor2::from_mandel(d, &eps).unwrap();
        let alpha: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        for rule in [dirichlet_rule(l.clone()), dlvp_rule(l.clone(), &alpha).unwrap()] {
            let table = periodized_green(&c0, &orthonormalize(&rule).unwrap()).unwrap();
            let it = ls_fixed_point(&c, &c0, &eps0, &table, &cfg).unwrap();
            assert!(it.converged);
            let direct = dense_oracle(&c, &c0, &eps0, &table).unwrap();
            worst = worst.max(it.strain.relative_gap(&direct));
        }
    }
    verdict(4, worst <= 1e-7, format!("max relative l2 gap {worst:.2e} over 25 structures x 2 generators"));
}

fn ellipse(semi: [f64; 2], inclusion: Lame, matrix: Lame) -> Microstructure {
    Microstructure::Inclusion {
        shape: InclusionShape::Ellipse,
        semi_axes: semi.to_vec(),
        center: None,
        rotation: 0.4,
        inclusion,
        matrix,
    }
}

fn ls_ve_gap(mat: &PatternMatrix, ms: &Microstructure, spec: &GeneratorSpec) -> f64 {
    let l = Arc::new(Lattice::new(mat).unwrap());
    let c = sample_stiffness(ms, mat, Sampling::Node).unwrap();
    let c0 = midpoint_reference(&ms.phases()).unwrap().stiffness(2).unwrap();
    let eps0 = SymTensor2::from_mandel(2, &[1.0, 0.3, 0.2]).unwrap();
    let rule = latticehom::translates::rule_from_spec(l, spec).unwrap();
    let table = periodized_green(&c0, &orthonormalize(&rule).unwrap()).unwrap();
    let mut cfg = SolverConfig {
        tolerance: 1e-10,
        ..SolverConfig::default()
    };
    let ls = ls_fixed_point(&c, &c0, &eps0, &table, &cfg).unwrap();
    cfg.scheme = Scheme::VeKrylov;
    let ve = ve_krylov(&c, &c0, &eps0, &table, &cfg).unwrap();
    assert!(ls.converged && ve.converged);
    ls.strain.relative_gap(&ve.strain)
}

#[test]
fn criterion_5_ls_and_ve_coincide_only_for_dirichlet() {
    let soft = Lame::new(1.0, 1.0);
    let ms5 = ellipse([1.3, 0.7], Lame::new(5.0, 5.0), soft);
    let ms2 = ellipse([1.3, 0.7], Lame::new(2.0, 2.0), soft);
    // odd determinants: no Nyquist frequencies
    let odd = [
        PatternMatrix::from_rows(&[vec![31, 0], vec![0, 31]]).unwrap(),
        PatternMatrix::from_rows(&[vec![15, 34], vec![0, 15]]).unwrap(),
        PatternMatrix::from_rows(&[vec![27, 5], vec![-2, 37]]).unwrap(),
    ];
    let mut dirichlet = 0.0f64;
    for mat in &odd {
        assert!(mat.m() <= 1024 && mat.m() % 2 == 1);
        dirichlet = dirichlet.max(ls_ve_gap(mat, &ms5, &GeneratorSpec::Dirichlet));
    }
    let dlvp_spec = GeneratorSpec::Dlvp { alpha: vec![0.4, 0.0] };
    let dlvp = ls_ve_gap(&odd[0], &ms2, &dlvp_spec);
    let even = ls_ve_gap(&PatternMatrix::diagonal(&[32, 32]).unwrap(), &ms5, &GeneratorSpec::Dirichlet);
    verdict(
        5,
        dirichlet <= 1e-6 && dlvp > 1e-4,
        format!(
            "Dirichlet gap {dirichlet:.2e} (odd m), dlVP (0.4,0) contrast-2 gap {dlvp:.2e}; \
             even-m Dirichlet gap {even:.2e} (not a projector at Nyquist)"
        ),
    );
}

#[test]
fn criterion_6_homogeneous_and_constant_stiffness() {
    let mut worst_e = 0.0f64;
    let mut worst_eff = 0.0f64;
    for d in [2usize, 3] {
        let mat = PatternMatrix::diagonal(&vec![8; d]).unwrap();
        let l = Arc::new(Lattice::new(&mat).unwrap());
        let c0 = Lame::new(2.0, 1.5).stiffness(d).unwrap();
        let other = Lame::new(7.0, 0.5).stiffness(d).unwrap();
        let eps: Vec<f64> = (0..mandel_size(d)).map(|i| 0.5 - 0.2 * i as f64).collect();
        let eps0 = SymTensor2::from_mandel(d, &eps).unwrap();
        for spec in [GeneratorSpec::Dirichlet, GeneratorSpec::Dlvp { alpha: vec![0.3; d] }] {
            let rule = latticehom::translates::rule_from_spec(l.clone(), &spec).unwrap();
            let table = periodized_green(&c0, &orthonormalize(&rule).unwrap()).unwrap();
            for c_const in [c0, other] {
                let c = StiffnessField::uniform(c_const, l.m()).unwrap();
                for scheme in [Scheme::LsFixedPoint, Scheme::VeKrylov] {
                    let cfg = SolverConfig {
                        scheme,
                        ..SolverConfig::default()
                    };
                    let r = match scheme {
                        Scheme::LsFixedPoint => ls_fixed_point(&c, &c0, &eps0, &table, &cfg),
                        Scheme::VeKrylov => ve_krylov(&c, &c0, &eps0, &table, &cfg),
                    }
                    .unwrap();
                    worst_e = worst_e.max(r.strain.norm());
                    let exact = c_const.apply(&eps0);
                    worst_eff = worst_eff.max((r.effective_action - exact).norm() / exact.norm());
                }
            }
        }
    }
    verdict(
        6,
        worst_e <= 1e-12 && worst_eff <= 1e-14,
        format!("max |E| {worst_e:.2e}, max relative effective-action error {worst_eff:.2e}"),
    );
}

fn write_config(dir: &Path, name: &str, value: &Value) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn laminate_config(n: i64, out: Value) -> Value {
    json!({
        "pattern_matrix": [[n, 0], [0, n]],
        "microstructure": {"kind": "laminate", "normal": [1, 0], "fraction": 1.0 / 3.0,
                           "phases": [{"lambda": 1.0, "mu": 1.0}, {"lambda": 10.0, "mu": 10.0}]},
        "loading": [1.0, 0.5, 0.0],
        "reference": {"analytic": "laminate"},
        "output": out
    })
}

#[test]
fn criterion_7_laminate_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let mut errors = Vec::new();
    for n in [8i64, 16, 32, 64] {
        let p = write_config(dir.path(), "lam.json", &laminate_config(n, json!({})));
        let out = run_solve(ExperimentConfig::load(&p).unwrap()).unwrap();
        assert!(out.summary.converged);
        errors.push((n * n, out.summary.metrics.e_eff.unwrap()));
    }
    let monotone = errors.windows(2).all(|w| w[1].1 < w[0].1);
    let last = errors.last().unwrap().1;
    let listing: Vec<String> = errors.iter().map(|(m, e)| format!("m={m}: {e:.2e}")).collect();
    verdict(7, monotone && last < 1e-2, format!("e_eff {}", listing.join(", ")));
}

fn hashin(m: [[i64; 2]; 2], extra: Value) -> Value {
    let mut v = json!({
        "pattern_matrix": m,
        "microstructure": {
            "kind": "hashin_ellipses",
            "core": [1.0, 0.6],
            "coating": [1.6, 1.3856406460551018],
            "rotation": 0.5235987755982988,
            "core_phase": {"lambda": 0.1, "mu": 0.075},
            "coating_phase": {"lambda": 4.0, "mu": 3.0},
            "matrix_phase": {"lambda": 1.0, "mu": 0.75}
        },
        "loading": [1.0, 0.0, 0.0]
    });
    for (k, x) in extra.as_object().unwrap() {
        v[k] = x.clone();
    }
    v
}

#[test]
fn criterion_8_hashin_surrogate_and_elog_export() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        "surrogate.json",
        &hashin([[256, 544], [0, 256]], json!({"solver": {"tolerance": 1e-10}})),
    );
    let surrogate = run_solve(ExperimentConfig::load(&p).unwrap()).unwrap();
    assert!(surrogate.summary.converged);
    std::fs::write(
        dir.path().join("reference.json"),
        json!({"effective_action": surrogate.summary.effective_action, "note": "m = 65536 Dirichlet surrogate"})
            .to_string(),
    )
    .unwrap();
    let coarse = [[64, 136], [0, 64]];
    let p = write_config(
        dir.path(),
        "sweep.json",
        &hashin(
            coarse,
            json!({"reference": "reference.json", "sweep": {"axes": [1, 2], "budget": 16}}),
        ),
    );
    let cfg = ExperimentConfig::load(&p).unwrap();
    let exp = Experiment::prepare(cfg.clone()).unwrap();
    let fixed = exp
        .evaluate(&GeneratorSpec::Dlvp { alpha: vec![0.4, 0.0] })
        .unwrap()
        .metrics
        .e_eff
        .unwrap();
    let sweep = sweep_alpha(cfg).unwrap();
    let structural = elog_structure(dir.path());
    verdict(
        8,
        sweep.all_converged && sweep.best_e_eff < sweep.dirichlet_e_eff && structural.is_ok(),
        format!(
            "surrogate route (no analytic reference values), m=4096: e_eff Dirichlet {:.2e}, dlVP (0.4,0) {fixed:.2e}, optimised dlVP {:?} {:.2e} \
             ({:.0}% reduction); e_log PPM {}",
            sweep.dirichlet_e_eff,
            sweep.best_alpha,
            sweep.best_e_eff,
            100.0 * sweep.improvement,
            structural.map_or_else(|e| e, |_| "ok".into())
        ),
    );
}

/// Dimensions, normalisation and round trip of the e_log image.
fn elog_structure(dir: &Path) -> Result<(), String> {
    for (m, width, height) in [([[16, 0], [0, 16]], 16, 16), ([[8, 3], [0, 8]], 64, 1)] {
        let mut cfg = laminate_config(0, json!({"elog_image": "elog.ppm"}));
        cfg["pattern_matrix"] = json!(m);
        let p = write_config(dir, "elog.json", &cfg);
        run_solve(ExperimentConfig::load(&p).unwrap()).map_err(|e| e.to_string())?;
        let bytes = std::fs::read(dir.join("elog.ppm")).map_err(|e| e.to_string())?;
        let img = GrayImage::from_ppm(&bytes).map_err(|e| e.to_string())?;
        if (img.width, img.height) != (width, height) {
            return Err(format!("size {}x{} for {m:?}", img.width, img.height));
        }
        if img.pixels.iter().max() != Some(&255) {
            return Err("not normalised to the maximum".into());
        }
        if img.to_ppm() != bytes {
            return Err("round trip changed the bytes".into());
        }
    }
    Ok(())
}

#[test]
fn criterion_9_reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = json!({"report": "report.json", "strain": "strain.pfld", "residuals": "res.csv"});
    let configs = [
        ("laminate", laminate_config(32, out.clone())),
        ("hashin-dlvp", {
            let mut v = hashin([[32, 68], [0, 32]], json!({"generator": {"kind": "dlvp", "alpha": [0.4, 0.0]}}));
            v["output"] = out.clone();
            v
        }),
        ("hashin-ve", {
            let mut v = hashin([[33, 68], [0, 33]], json!({"solver": {"scheme": "ve_krylov"}}));
            v["output"] = out.clone();
            v
        }),
    ];
    let mut identical = true;
    for (name, cfg) in &configs {
        let mut runs = Vec::new();
        for threads in ["1", "4"] {
            let sub = dir.path().join(format!("{name}-{threads}"));
            std::fs::create_dir_all(&sub).unwrap();
            let p = write_config(&sub, "config.json", cfg);
            let status = Command::new(env!("CARGO_BIN_EXE_latticehom"))
                .arg("solve")
                .arg(&p)
                .env("LATTICEHOM_THREADS", threads)
                .output()
                .unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            let report = strip_wall_time(&std::fs::read_to_string(sub.join("report.json")).unwrap()).unwrap();
            let strain = std::fs::read(sub.join("strain.pfld")).unwrap();
            let residuals = std::fs::read(sub.join("res.csv")).unwrap();
            runs.push((report, strain, residuals));
        }
        identical &= runs[0] == runs[1];
    }
    let mut sweeps = Vec::new();
    for threads in ["1", "4"] {
        let mut cfg = laminate_config(16, json!({"report": format!("sweep-{threads}.json")}));
        cfg["sweep"] = json!({"axes": [1, 2], "budget": 5});
        let p = write_config(dir.path(), "sweep.json", &cfg);
        let status = Command::new(env!("CARGO_BIN_EXE_latticehom"))
            .arg("sweep-alpha")
            .arg(&p)
            .env("LATTICEHOM_THREADS", threads)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let report = std::fs::read_to_string(dir.path().join(format!("sweep-{threads}.json"))).unwrap();
        sweeps.push(strip_wall_time(&report).unwrap());
    }
    identical &= sweeps[0] == sweeps[1];
    verdict(
        9,
        identical,
        "solve reports, PFLD fields, residual CSVs and sweep reports byte-identical with 1 and 4 threads".into(),
    );
}
