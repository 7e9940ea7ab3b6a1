#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! End-to-end acceptance suite. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use semirobin::assembly::Forms;
use semirobin::config::parse_config;
use semirobin::energy::EnergyContext;
use semirobin::field::CoefficientField;
use semirobin::linalg::{dot, sub};
use semirobin::mesh::{build_interval_mesh, Mesh};
use semirobin::nonlinearity::{LinearReaction, SpectralLevels};
use semirobin::pipeline::{solve_problem, Problem, SolveReport};
use semirobin::reduction::{ReductionContext, TauControls};
use semirobin::spectrum::{random_in_span, solve_pencil, subspace_sine, EigenDecomposition, SpectrumOptions};
use semirobin::subspaces::Block;

type Outcome = Result<String, String>;

fn reference_config(n: usize, extra: &str) -> String {
    format!(
        "[meta]\nschema_version = 1\n[domain]\nkind = interval\na = 0\nb = {PI:?}\nn = {n}\n\
         [potential]\nkind = constant\nvalue = -0.5\n[reaction]\nkind = model\nm = 1\nl = 3\n{extra}"
    )
}

fn reference(n: usize) -> Problem {
    let cfg = parse_config(&reference_config(n, "")).expect("reference config parses");
    Problem::build(&cfg, Path::new("."), true).expect("reference problem builds")
}

fn check(cond: bool, pass: String, fail: String) -> Outcome {
    if cond {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn decompose(mesh: &Mesh, xi: &CoefficientField, beta: f64) -> (Forms, EigenDecomposition) {
    let forms = Forms::assemble(mesh, xi, &beta.into()).unwrap();
    let d = solve_pencil(&forms.gamma, &forms.mass, &SpectrumOptions::default()).unwrap();
    (forms, d)
}

/// Positive roots of `(k² − 1) sin k − 2k cos k` by scan and bisection.
fn robin_oracle(count: usize) -> Vec<f64> {
    let h = |k: f64| (k * k - 1.0) * k.sin() - 2.0 * k * k.cos();
    let mut roots = Vec::new();
    let mut a = 1e-6;
    while roots.len() < count {
        let b = a + 1e-3;
        if h(a).signum() != h(b).signum() {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if h(lo).signum() == h(mid).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let k = 0.5 * (lo + hi);
            roots.push(k * k);
        }
        a = b;
    }
    roots
}

fn spectrum_correctness() -> Outcome {
    let mesh = build_interval_mesh(0.0, PI, 512).unwrap();
    let (_, d) = decompose(&mesh, &0.0.into(), 0.0);
    let exact = [0.0, 1.0, 4.0, 9.0, 16.0, 25.0];
    let mut worst = 0.0f64;
    for (k, &e) in exact.iter().enumerate() {
        let err = if e == 0.0 { d.values[k].abs() } else { (d.values[k] - e).abs() / e };
        worst = worst.max(err);
    }
    let mesh = build_interval_mesh(0.0, 1.0, 512).unwrap();
    let (_, d) = decompose(&mesh, &0.0.into(), 1.0);
    let oracle = robin_oracle(5);
    let robin = oracle
        .iter()
        .enumerate()
        .map(|(k, &o)| (d.values[k] - o).abs() / o)
        .fold(0.0f64, f64::max);
    check(
        worst < 1e-3 && robin < 1e-4,
        format!("Neumann worst error {worst:.2e}, Robin worst relative error {robin:.2e}"),
        format!("Neumann worst error {worst:.2e} (need < 1e-3), Robin {robin:.2e} (need < 1e-4)"),
    )
}

fn constant_shift() -> Outcome {
    let mesh = build_interval_mesh(0.0, PI, 96).unwrap();
    let c = 2.75;
    let base = CoefficientField::function(|z| (2.0 * z[0]).cos() - 0.3);
    let shifted = CoefficientField::function(move |z| (2.0 * z[0]).cos() - 0.3 + c);
    let (forms, d0) = decompose(&mesh, &base, 0.5);
    let (_, d1) = decompose(&mesh, &shifted, 0.5);
    let shift_err = d0
        .values
        .iter()
        .zip(&d1.values)
        .map(|(a, b)| (b - a - c).abs())
        .fold(0.0f64, f64::max);
    let mut angle = 0.0f64;
    for cl in d0.clusters.iter().take(20) {
        let a: DMatrix<f64> = d0.vectors.columns(cl.start, cl.dim).into_owned();
        let b: DMatrix<f64> = d1.vectors.columns(cl.start, cl.dim).into_owned();
        angle = angle.max(subspace_sine(&a, &b, &forms.mass));
    }
    check(
        shift_err <= 1e-10 && angle <= 1e-8,
        format!("max shift error {shift_err:.2e}, max principal-angle sine {angle:.2e}"),
        format!("shift error {shift_err:.2e} (need <= 1e-10), angle sine {angle:.2e} (need <= 1e-8)"),
    )
}

fn coercivity_certificate(p: &Problem) -> Outcome {
    let cert = p.coercivity().map_err(|e| e.to_string())?;
    let shifted = p.forms.gamma.add_scaled(&p.forms.mass, cert.mu).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let n = p.mesh.n_nodes();
    let mut violations = 0;
    for _ in 0..1000 {
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if !(shifted.quad(&u) >= cert.c0 * p.forms.h1.quad(&u)) {
            violations += 1;
        }
    }
    check(
        violations == 0,
        format!("mu = {:.4}, c0 = {:.4e}, 0/1000 violations", cert.mu, cert.c0),
        format!("{violations}/1000 violations (mu = {}, c0 = {})", cert.mu, cert.c0),
    )
}

fn gap_certificates(p: &Problem) -> Outcome {
    let (a, b) = p.gap_certificates().map_err(|e| e.to_string())?;
    let lm = p.decomp.distinct(1).unwrap();
    let lm1 = p.decomp.distinct(2).unwrap();
    let eta_a = 0.5 * (lm + lm1);
    let eta_b = lm - 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (g, mass, h1) = (&p.forms.gamma, &p.forms.mass, &p.forms.h1);
    let mut violations = 0;
    for _ in 0..1000 {
        let y = random_in_span(&mut rng, &p.decomp.vectors, a.columns.clone());
        let t = h1.quad(&y);
        if !(g.quad(&y) - eta_a * mass.quad(&y) <= -a.constant * t + 1e-12 * t) {
            violations += 1;
        }
        let y = random_in_span(&mut rng, &p.decomp.vectors, b.columns.clone());
        let t = h1.quad(&y);
        if !(g.quad(&y) - eta_b * mass.quad(&y) >= b.constant * t - 1e-12 * t) {
            violations += 1;
        }
    }
    check(
        a.constant > 0.0 && b.constant > 0.0 && violations == 0,
        format!("c1 = {:.4e}, c2 = {:.4e}, 0/2000 violations", a.constant, b.constant),
        format!("c1 = {:e}, c2 = {:e}, {violations}/2000 violations", a.constant, b.constant),
    )
}

fn strong_concavity(p: &Problem) -> Outcome {
    let ctx = p.solver_context().map_err(|e| e.to_string())?;
    let red = &ctx.red;
    let en = &red.energy;
    let c1 = red.c1();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let minus = red.split.columns(Block::Minus);
    let v_cols = red.split.columns(Block::V);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let s: f64 = rng.gen_range(0.1..5.0);
        let v: Vec<f64> = random_in_span(&mut rng, red.split.basis(), v_cols.clone()).iter().map(|x| s * x).collect();
        let y: Vec<f64> = random_in_span(&mut rng, red.split.basis(), minus.clone()).iter().map(|x| s * x).collect();
        let y2: Vec<f64> = random_in_span(&mut rng, red.split.basis(), minus.clone()).iter().map(|x| s * x).collect();
        let gy = en.grad_phi(&semirobin::linalg::add(&v, &y));
        let gy2 = en.grad_phi(&semirobin::linalg::add(&v, &y2));
        let dy = sub(&y, &y2);
        let lhs = dot(&sub(&gy, &gy2), &dy);
        let bound = -c1 * en.h1.quad(&dy);
        worst = worst.max((lhs - bound) / (1.0 + en.h1.quad(&dy)));
    }
    check(
        worst <= 1e-8,
        format!("c1 = {c1:.4e}, worst normalized slack {worst:.2e} over 200 triples"),
        format!("monotonicity bound exceeded by {worst:e} (allowed 1e-8)"),
    )
}

fn reduction_map(p: &Problem) -> Outcome {
    let ctx = p.solver_context().map_err(|e| e.to_string())?;
    let red = &ctx.red;
    let dv = red.dim_v();
    let dm = red.dim_minus();
    let t0 = red.tau(&vec![0.0; dv]).map_err(|e| e.to_string())?;
    let tau0 = t0.y.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let mut spread = 0.0f64;
    for _ in 0..10 {
        let s: f64 = rng.gen_range(0.1..5.0);
        let v: Vec<f64> = (0..dv).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
        let starts: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..dm).map(|_| 5.0 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let (_, sp) = red.tau_multistart(&v, &starts).map_err(|e| e.to_string())?;
        spread = spread.max(sp);
    }

    // A linear reaction leaves the spectral blocks decoupled.
    let lv = SpectralLevels::from_decomposition(&p.decomp, 1, 3).unwrap();
    let slope = 0.5 * (lv.lambda_m + lv.lambda_m1);
    let en = EnergyContext::new(&p.mesh, &p.forms, Arc::new(LinearReaction { slope, delta: 0.1 })).unwrap();
    let lin = ReductionContext::new(en, &p.decomp, &p.mesh, 1, 3, TauControls::default()).map_err(|e| e.to_string())?;
    let mut decouple = 0.0f64;
    for _ in 0..50 {
        let s: f64 = rng.gen_range(0.1..10.0);
        let v: Vec<f64> = (0..dv).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
        let t = lin.tau(&v).map_err(|e| e.to_string())?;
        decouple = decouple.max(lin.minus_a_norm2(&t.y).sqrt());
    }
    check(
        tau0 <= 1e-9 && spread <= 1e-6 && decouple <= 1e-8,
        format!("|tau(0)| = {tau0:.1e}, multistart spread {spread:.1e}, linear |tau| <= {decouple:.1e}"),
        format!("|tau(0)| = {tau0:e} (<= 1e-9), spread {spread:e} (<= 1e-6), linear |tau| {decouple:e} (<= 1e-8)"),
    )
}

fn reduced_gradient_identity(p: &Problem) -> Outcome {
    let ctx = p.solver_context().map_err(|e| e.to_string())?;
    let red = &ctx.red;
    let dv = red.dim_v();
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let s: f64 = rng.gen_range(0.2..4.0);
        let v: Vec<f64> = (0..dv).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
        let d: Vec<f64> = (0..dv).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let h = 1e-5;
        let vp: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a + h * b).collect();
        let vm: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a - h * b).collect();
        let fd = (red.phi_tilde(&vp).map_err(|e| e.to_string())? - red.phi_tilde(&vm).map_err(|e| e.to_string())?)
            / (2.0 * h);
        let an = dot(&red.grad_phi_tilde(&v).map_err(|e| e.to_string())?, &d);
        worst = worst.max((fd - an).abs() / an.abs().max(1e-12));
    }
    check(
        worst <= 1e-5,
        format!("worst relative error {worst:.2e} at 10 points"),
        format!("worst relative error {worst:e} (need <= 1e-5)"),
    )
}

fn roundtrip(rep: &SolveReport) -> Outcome {
    let res = rep.roundtrip.iter().map(|r| r.residual).fold(0.0f64, f64::max);
    let rev = rep.roundtrip.iter().map(|r| r.reverse_error).fold(0.0f64, f64::max);
    check(
        res <= 1e-7 && rev <= 1e-6,
        format!("lifted residual <= {res:.2e}, reverse projection error <= {rev:.2e}"),
        format!("residual {res:e} (<= 1e-7), reverse error {rev:e} (<= 1e-6)"),
    )
}

fn linking(rep: &SolveReport) -> Outcome {
    let l = &rep.linking;
    check(
        l.compliant && l.samples >= 200 && l.w_fraction == 1.0 && l.e_fraction == 1.0,
        format!("{} samples per side, 100% compliant at radius {:.3e}", l.samples, l.radius),
        format!(
            "radius {:e}: W {:.3}, E-hat {:.3} of {} samples",
            l.radius, l.w_fraction, l.e_fraction, l.samples
        ),
    )
}

fn end_to_end(p: &Problem, rep: &SolveReport) -> Outcome {
    let d_min = p.config.solver.plan.d_min;
    let ok_each = rep
        .solutions
        .iter()
        .zip(&rep.verifications)
        .all(|(s, v)| v.passed && v.residual <= 1e-7 && s.l2_norm >= d_min);
    let again = solve_problem(p).map_err(|e| e.to_string())?;
    let same = rep
        .solutions
        .iter()
        .zip(&again.solutions)
        .all(|(a, b)| a.u.iter().zip(&b.u).all(|(x, y)| x.to_bits() == y.to_bits()) && a.energy.to_bits() == b.energy.to_bits());
    let same_json = serde_json::to_string(rep).unwrap() == serde_json::to_string(&again).unwrap();
    check(
        ok_each && rep.separation >= d_min && same && same_json,
        format!(
            "residuals {:.1e}/{:.1e}, L2 norms {:.3e}/{:.3e}, separation {:.3e} >= d_min {d_min:.1e}, rerun bit-identical",
            rep.verifications[0].residual,
            rep.verifications[1].residual,
            rep.solutions[0].l2_norm,
            rep.solutions[1].l2_norm,
            rep.separation
        ),
        format!(
            "verified {ok_each}, separation {:e} (d_min {d_min:e}), reproducible {same}/{same_json}",
            rep.separation
        ),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_semirobin"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn negative_controls() -> Outcome {
    let dir = std::env::temp_dir().join(format!("semirobin-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = format!("[output]\ndir = \"{}\"\n", dir.display());
    let lin_text = reference_config(128, &out).replace("kind = model", "kind = linear\nslope_eigen = 2");
    let sq_text = reference_config(128, &out).replace("kind = model", "kind = square");
    let lin = Problem::build(&parse_config(&lin_text).unwrap(), &dir, true).unwrap();
    let sq = Problem::build(&parse_config(&sq_text).unwrap(), &dir, true).unwrap();
    let lin_rep = lin.audit().map_err(|e| e.to_string())?;
    let sq_rep = sq.audit().map_err(|e| e.to_string())?;
    let lin_iii = lin_rep.clauses.iter().find(|c| c.clause == "H(f)(iii)").unwrap();
    let sq_i = sq_rep.clauses.iter().find(|c| c.clause == "H(f)(i)").unwrap();
    let cfg_path = dir.join("linear.ini");
    std::fs::write(&cfg_path, &lin_text).unwrap();
    let code = run_cli(&["solve", cfg_path.to_str().unwrap()]);
    let _ = std::fs::remove_dir_all(&dir);
    check(
        !lin_iii.passed && lin_iii.witness.is_some() && !sq_i.passed && sq_i.witness.is_some() && code == 1,
        format!(
            "linear fails {:?} with witness, square fails {:?}, solve exit {code}",
            lin_rep.failed_clauses(),
            sq_rep.failed_clauses()
        ),
        format!(
            "linear failed {:?}, square failed {:?}, solve exit {code} (want 1)",
            lin_rep.failed_clauses(),
            sq_rep.failed_clauses()
        ),
    )
}

fn coercivity_probe(rep: &SolveReport) -> Outcome {
    let c = &rep.coercivity_probe;
    let want = [1.0, 10.0, 50.0];
    check(
        c.rays.len() == 32 && c.flagged == 0 && c.radii == want && c.rays.iter().all(|r| r.tail_increasing),
        format!("32/32 rays tail-increasing at radii {:?}", c.radii),
        format!("{} of {} rays flagged at radii {:?}", c.flagged, c.rays.len(), c.radii),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 spectrum correctness", spectrum_correctness()));
    results.push(("2 constant-shift identity", constant_shift()));
    let small = reference(128);
    results.push(("3 coercivity certificate", coercivity_certificate(&small)));
    results.push(("4 spectral gap certificates", gap_certificates(&small)));
    results.push(("5 strong concavity on H_-", strong_concavity(&small)));
    results.push(("6 reduction map", reduction_map(&small)));
    results.push(("7 reduced gradient identity", reduced_gradient_identity(&small)));
    let big = reference(512);
    match solve_problem(&big) {
        Ok(rep) => {
            results.push(("8 critical point roundtrip", roundtrip(&rep)));
            results.push(("9 local linking signs", linking(&rep)));
            results.push(("10 two nontrivial solutions", end_to_end(&big, &rep)));
            results.push(("11 negative controls", negative_controls()));
            results.push(("12 coercivity probe", coercivity_probe(&rep)));
        }
        Err(e) => {
            for name in ["8 critical point roundtrip", "9 local linking signs", "10 two nontrivial solutions"] {
                results.push((name, Err(format!("solve failed: {e}"))));
            }
            results.push(("11 negative controls", negative_controls()));
            results.push(("12 coercivity probe", Err(format!("solve failed: {e}"))));
        }
    }
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(msg) => println!("PASS  {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg}");
            }
        }
    }
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
