//! Acceptance gate. Each test writes one `PASS`/`FAIL` line to stdout,
//! bypassing capture, and then asserts.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use unitlab::algebra::{self, Element, Superoperator, C64};
use unitlab::fock::{self, UnitParams};
use unitlab::kernels::{self, ConditionalConfig, CpdSemigroup, OperatorKernel};
use unitlab::random;
use unitlab::scenario::Scenario;
use unitlab::trotter::{self, Partition, PairingEngine, ScheduleSpec, Thresholds, Verdict, VerdictOptions};
use unitlab::units::{self, ExtensionOptions, TwistSide, UnitExpression, ZETA};

fn line(n: u32, pass: bool, detail: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance criterion {n}: {status} {detail}");
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)).unwrap()
}

fn generator(sc: &Scenario) -> OperatorKernel {
    sc.build_generator(Path::new(env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn dyadic(min: u32, max: u32) -> Vec<Partition> {
    ScheduleSpec::Dyadic { min, max }.build(1.0, 0).unwrap()
}

#[test]
fn criterion_1_weak_limit_values() {
    let start = Instant::now();
    let report = fock::counterexample_scenario(1.0, &[1, 8, 1024], &Thresholds::default()).unwrap();
    let elapsed = start.elapsed();
    let (e2, e4) = (0.5f64.exp(), 0.25f64.exp());
    let mut worst: f64 = 0.0;
    for r in &report.rows {
        for (got, want) in [(r.y_y, e2), (r.w_y, e4), (r.w_w, e4), (r.y_minus_w, e2 - e4)] {
            worst = worst.max((got - want).abs());
        }
    }
    let pass = worst <= 1e-12 && report.vs_w.verdict == Verdict::WeakOnly && elapsed < Duration::from_secs(1);
    line(1, pass, format!("max deviation {worst:e}, verdict {}, {elapsed:?}", report.vs_w.verdict));
    assert!(pass);
}

#[test]
fn criterion_2_adjoined_unit_in_multiplicity_two() {
    let start = Instant::now();
    let ns: Vec<usize> = (0..=12).map(|k| 1 << k).collect();
    let report = fock::counterexample_scenario(1.0, &ns, &Thresholds::default()).unwrap();
    let elapsed = start.elapsed();
    let zeta_zeta_err = report.rows.iter().map(|r| (r.zeta_zeta - 0.5f64.exp()).abs()).fold(0.0, f64::max);
    let criterion = report.vs_zeta.rows.iter().map(|r| r.3).fold(0.0, f64::max);
    let verdict = report.vs_zeta.verdict;
    let pass = zeta_zeta_err <= 1e-12
        && criterion <= 1e-12
        && verdict == Verdict::NormConvergent
        && elapsed < Duration::from_secs(1);
    line(
        2,
        pass,
        format!(
            "|⟨ζ,ζ⟩ - e^(1/2)| = {zeta_zeta_err:e}, max criterion defect {criterion:e} (⟨ζ,y⟩ = {:.15}), verdict {verdict}, {elapsed:?}",
            report.rows[0].zeta_y
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_kernel_engine_matches_fock_oracle() {
    let start = Instant::now();
    let mut rng = random::rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut unit = || UnitParams::scalar(random::gaussian(&mut rng) * 0.5, random::gaussian(&mut rng) * 0.5);
        let (u, v) = (unit(), unit());
        let t = random::uniform(&mut rng, 0.0, 2.0);
        let gamma = DMatrix::from_fn(2, 2, |i, j| [&u, &v][i].covariance([&u, &v][j]));
        let semigroup = CpdSemigroup::new(kernels::covariance_kernel(kernels::labels(&["u", "v"]), &gamma).unwrap());
        for (i, j, a, b) in [(0, 1, &u, &v), (1, 0, &v, &u), (0, 0, &u, &u)] {
            let engine = semigroup.entry_at(i, j, t).unwrap().rep()[(0, 0)];
            let oracle = fock::fock_inner(&a.at(t).unwrap(), &b.at(t).unwrap()).unwrap();
            worst = worst.max((engine - oracle).norm() / oracle.norm());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-10 && elapsed < Duration::from_secs(5);
    line(3, pass, format!("max relative disagreement {worst:e} over 100 pairs, {elapsed:?}"));
    assert!(pass);
}

#[test]
fn criterion_4_affine_construction() {
    let start = Instant::now();
    let sc = scenario("affine_42.scn");
    let q = generator(&sc);
    let y = UnitExpression::affine(2, &[(c(2.0, 0.0), "xi1"), (c(-1.0, 0.0), "xi2")]).unwrap();
    let report = trotter::convergence_verdict(&y, &q, 1.0, &dyadic(3, 12), &VerdictOptions::default()).unwrap();
    let elapsed = start.elapsed();
    let ext = units::extend_generator(&y, &q, &ExtensionOptions::default()).unwrap();
    let slope = report.criterion.rate.unwrap_or(f64::NAN);
    let pass = ext.report.conditionally_cpd
        && (0.9..=1.1).contains(&slope)
        && report.verdict == Verdict::NormConvergent
        && elapsed < Duration::from_secs(60);
    line(
        4,
        pass,
        format!(
            "extension conditionally CPD {}, criterion slope {slope:.4}, verdict {} (strict {}), {elapsed:?}",
            ext.report.conditionally_cpd, report.verdict, report.strict_verdict
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_normalization() {
    let mut rng = random::rng(5);
    let (eta, beta) = kernels::random_ce_parameters(&mut rng, 2, 1, 0.5);
    let q = kernels::ce_form_kernel(2, kernels::labels(&["xi"]), &eta, &beta).unwrap();
    let h = random::hermitian_matrix(&mut rng, 2);
    let options = ExtensionOptions::default();
    let right = units::normalize_unit("xi", &q, &h, TwistSide::Right, &options).unwrap();
    let left = units::normalize_unit("xi", &q, &h, TwistSide::Left, &options).unwrap();
    let one = algebra::identity(2);
    let mut unitality: f64 = 0.0;
    for n in [&right, &left] {
        for t in units::UNITALITY_TIMES {
            let v = n.extension.zeta_zeta.exp(t).unwrap().apply(&one);
            unitality = unitality.max((v - &one).norm());
        }
    }
    let k1 = right.unitality_defect.max(left.unitality_defect);
    let sides = right.extension.assembled.max_abs_diff(&left.extension.assembled);
    let pass = k1 <= 1e-10 && unitality <= 1e-10 && sides <= 1e-9;
    line(5, pass, format!("‖K(1)‖ = {k1:e}, max ‖exp(tK)(1) - 1‖ = {unitality:e}, left/right generator difference {sides:e}"));
    assert!(pass);
}

/// Richardson-extrapolated central difference of `s ↦ ⟨y_s, •y_s⟩` at zero.
fn derivative_at_zero(y: &UnitExpression, q: &OperatorKernel, h: f64) -> Superoperator {
    let semigroup = CpdSemigroup::new(q.clone());
    let mut engine = PairingEngine::new(&semigroup);
    let mut central = |s: f64| {
        let plus = engine.pair_over_length(y, y, s).unwrap();
        let minus = engine.pair_over_length(y, y, -s).unwrap();
        (&plus - &minus).scale(c(0.5 / s, 0.0))
    };
    let (coarse, fine) = (central(h), central(h / 2.0));
    (&fine.scale(c(4.0, 0.0)) - &coarse).scale(c(1.0 / 3.0, 0.0))
}

#[test]
fn criterion_6_kernel_modification() {
    let mut rng = random::rng(6);
    let (eta, beta) = kernels::random_ce_parameters(&mut rng, 2, 3, 0.3);
    let q = kernels::ce_form_kernel(2, kernels::labels(&["x0", "x1", "x2"]), &eta, &beta).unwrap();
    let a1 = random::gaussian_matrix(&mut rng, 2, 2) * c(0.5, 0.0);
    let b1 = random::gaussian_matrix(&mut rng, 2, 2) * c(0.5, 0.0);
    let a2 = random::gaussian_matrix(&mut rng, 2, 2) * c(0.5, 0.0);
    let b2 = -a2.clone().try_inverse().unwrap() * &a1 * &b1;
    let constraint = (&a1 * &b1 + &a2 * &b2).norm();
    let y = UnitExpression::modification(2, "x0", &[(a1, "x1", b1), (a2, "x2", b2)]).unwrap();
    let report = trotter::convergence_verdict(&y, &q, 1.0, &dyadic(3, 12), &VerdictOptions::default()).unwrap();
    let ext = units::extend_generator(&y, &q, &ExtensionOptions::default()).unwrap();
    let fd = derivative_at_zero(&y, &q, 1e-3);
    let scale = ext.zeta_zeta.frobenius().max(1.0);
    let diff = fd.max_abs_diff(&ext.zeta_zeta) / scale;
    let pass = constraint < 1e-12 && ext.report.conditionally_cpd && report.verdict == Verdict::NormConvergent && diff <= 1e-9;
    line(
        6,
        pass,
        format!(
            "‖Σab‖ = {constraint:e}, extension conditionally CPD {}, verdict {} (strict {}), ζ-diagonal vs finite difference {diff:e}",
            ext.report.conditionally_cpd, report.verdict, report.strict_verdict
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_covariance_affine_rule() {
    let mut rng = random::rng(7);
    let mut worst: f64 = 0.0;
    let mut worst_fock: f64 = 0.0;
    for k in 0..20 {
        let mut unit = || UnitParams::scalar(random::gaussian(&mut rng) * 0.5, random::gaussian(&mut rng) * 0.5);
        let (x, u, v) = (unit(), unit(), unit());
        let params = [&x, &u, &v];
        let gamma = DMatrix::from_fn(3, 3, |i, j| params[i].covariance(params[j]));
        let q = kernels::covariance_kernel(kernels::labels(&["x", "u", "v"]), &gamma).unwrap();
        let (kappa, y) = if k % 2 == 0 {
            let f = random::uniform(&mut rng, 0.1, 0.9);
            (c(f, 0.0), UnitExpression::concat(1, &[("u", f), ("v", 1.0 - f)]).unwrap())
        } else {
            let z = random::gaussian(&mut rng);
            (z, UnitExpression::affine(1, &[(z, "u"), (c(1.0, 0.0) - z, "v")]).unwrap())
        };
        let lambda = c(1.0, 0.0) - kappa;
        let expected = kappa * gamma[(0, 1)] + lambda * gamma[(0, 2)];
        let ext = units::extend_generator(&y, &q, &ExtensionOptions::default()).unwrap();
        let got = ext.assembled.get("x", ZETA).unwrap().rep()[(0, 0)];
        worst = worst.max((got - expected).norm());
        if kappa.im == 0.0 {
            // Same rule from exact Fock inner products: log⟨x_t, w_t⟩ / t.
            let t = 0.7;
            let w = fock::trotter_vector(&u, &v, t, 16, (kappa.re, lambda.re)).unwrap();
            let log = fock::fock_inner(&x.at(t).unwrap(), &w).unwrap().ln() / t;
            worst_fock = worst_fock.max((log - expected).norm().min((log - expected + c(0.0, std::f64::consts::TAU / t)).norm()));
        }
    }
    let pass = worst <= 1e-9 && worst_fock <= 1e-9;
    line(7, pass, format!("max |γ^(x,w) - (ϰγ^(x,u) + λγ^(x,v))| = {worst:e} (kernel), {worst_fock:e} (Fock), 20 triples"));
    assert!(pass);
}

fn negated_kolmogorov_kernel(rng: &mut random::Rng, d: usize, n: usize) -> OperatorKernel {
    let factors: Vec<Element> = (0..n).map(|_| random::gaussian_matrix(rng, d, d)).collect();
    OperatorKernel::from_fn(d, (0..n).map(|i| format!("s{i}")).collect(), |i, j| {
        Superoperator::sandwich(&factors[i].adjoint(), &factors[j]).scale(c(-1.0, 0.0))
    })
    .unwrap()
}

fn schoenberg_and_choi_suites() -> (usize, usize, usize, usize) {
    let mut rng = random::rng(8);
    let config = ConditionalConfig { samples: 200, ..ConditionalConfig::default() };
    let (mut forward, mut converse) = (0, 0);
    for k in 0..50 {
        let d = 1 + k % 3;
        let n = 1 + (k / 3) % 3;
        let (eta, beta) = kernels::random_ce_parameters(&mut rng, d, n, 1.0);
        let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let q = kernels::ce_form_kernel(d, names, &eta, &beta).unwrap();
        let report = kernels::is_conditionally_cpd(&q, algebra::PSD_TOL, &config).unwrap();
        if report.conditionally_cpd && report.schoenberg_pass && !report.discrepancy {
            forward += 1;
        }
        // With d = |S| = 1 the constraint subspace is zero and every kernel qualifies.
        let bad = negated_kolmogorov_kernel(&mut rng, d, if d == 1 { n.max(2) } else { n });
        let report = kernels::is_conditionally_cpd(&bad, algebra::PSD_TOL, &config).unwrap();
        if !report.conditionally_cpd && !report.schoenberg_pass && !report.discrepancy {
            converse += 1;
        }
    }
    let mut agree = 0;
    let mut witnesses = 0;
    for k in 0..100 {
        let d = 1 + k % 3;
        let n = 1 + (k / 3) % 3;
        let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let kernel = if k % 2 == 0 {
            let factors: Vec<Vec<Element>> =
                (0..n).map(|_| (0..2).map(|_| random::gaussian_matrix(&mut rng, d, d)).collect()).collect();
            OperatorKernel::from_fn(d, names, |i, j| {
                (0..2)
                    .map(|m| Superoperator::sandwich(&factors[i][m].adjoint(), &factors[j][m]))
                    .fold(Superoperator::zero(d), |acc, s| acc + s)
            })
            .unwrap()
        } else {
            let h: Vec<Element> = (0..n * n).map(|_| random::gaussian_matrix(&mut rng, d, d)).collect();
            let raw = OperatorKernel::from_fn(d, names, |i, j| Superoperator::sandwich(&h[i * n + j], &h[j * n + i].adjoint())).unwrap();
            raw.combine(&raw.clone(), |a, b| (a + &b.involuted()).scale(c(0.5, 0.0))).unwrap()
        };
        let kernel = kernel.combine(&kernel.clone(), |a, _| a.clone()).unwrap();
        let verdict = kernels::is_cpd(&kernel, algebra::PSD_TOL).unwrap();
        let sampled_ok = (0..50).all(|_| {
            let (sigma, a, b) = kernels::free_tuple(&mut rng, n, d, 3);
            let form = kernels::quadratic_form(&kernel, &sigma, &a, &b);
            let scale = kernels::form_scale(&kernel, &sigma, &a, &b).max(1.0);
            algebra::hermitian_spectrum(&algebra::hermitian_part(&form)).min() >= -1e-9 * scale
        });
        let consistent = match (&verdict.cpd, &verdict.witness) {
            (true, _) => sampled_ok,
            (false, Some(w)) => {
                witnesses += 1;
                w.form_min_eigenvalue < 0.0
            }
            (false, None) => false,
        };
        if consistent {
            agree += 1;
        }
    }
    (forward, converse, agree, witnesses)
}

#[test]
fn criterion_8_property_suites() {
    let start = Instant::now();
    let (forward, converse, agree, witnesses) = schoenberg_and_choi_suites();

    let mut runs = Vec::new();
    let opts = VerdictOptions::default();
    let cex = scenario("counterexample_41.scn");
    let cq = generator(&cex);
    let y = UnitExpression::concat(1, &[("u", 0.5), ("v", 0.5)]).unwrap();
    for candidate in [None, Some("w".to_string())] {
        let o = VerdictOptions { candidate, ..opts.clone() };
        runs.push(("counterexample", trotter::convergence_verdict(&y, &cq, 1.0, &dyadic(3, 12), &o).unwrap()));
    }
    let aq = generator(&scenario("affine_42.scn"));
    let ay = UnitExpression::affine(2, &[(c(2.0, 0.0), "xi1"), (c(-1.0, 0.0), "xi2")]).unwrap();
    for spec in ["dyadic:3:12", "random:8"] {
        let schedule = spec.parse::<ScheduleSpec>().unwrap().build(1.0, 17).unwrap();
        runs.push(("affine", trotter::convergence_verdict(&ay, &aq, 1.0, &schedule, &opts).unwrap()));
    }
    let mut rng = random::rng(88);
    for k in 0..6 {
        let d = 1 + k % 2;
        let (eta, beta) = kernels::random_ce_parameters(&mut rng, d, 2, 0.5);
        let q = kernels::ce_form_kernel(d, kernels::labels(&["a", "b"]), &eta, &beta).unwrap();
        let z = random::gaussian(&mut rng);
        let y = UnitExpression::affine(d, &[(z, "a"), (c(1.0, 0.0) - z, "b")]).unwrap();
        let horizon = random::uniform(&mut rng, 0.5, 2.0);
        let schedule = ScheduleSpec::Random { count: 6 }.build(horizon, k as u64).unwrap();
        runs.push(("random", trotter::convergence_verdict(&y, &q, horizon, &schedule, &opts).unwrap()));
    }
    let adjoint = runs.iter().map(|r| r.1.max_adjoint_residual).fold(0.0, f64::max);
    let bounded = runs.iter().all(|r| r.1.bounds.bounded);
    let defect_bound = runs.iter().filter(|r| r.1.bounds.defect_bound_holds).count();
    let literal = runs.iter().filter(|r| r.1.bounds.literal_bounded).count();
    let elapsed = start.elapsed();

    let pass = forward == 50
        && converse == 50
        && agree == 100
        && adjoint <= 1e-10
        && bounded
        && elapsed < Duration::from_secs(300);
    line(
        8,
        pass,
        format!(
            "Schoenberg forward {forward}/50, converse {converse}/50; Choi vs sampled {agree}/100 ({witnesses} witnesses); \
             adjoint identity residual {adjoint:e} over {} runs; boundedness {bounded} (max(‖K‖,M) rate {literal}/{}); \
             defect bound {defect_bound}/{}; {elapsed:?}",
            runs.len(),
            runs.len(),
            runs.len()
        ),
    );
    assert!(pass);
}
