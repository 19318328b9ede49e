//! End-to-end acceptance suite. Each test prints one `PASS`/`FAIL` line to
//! the real stdout (not the captured test output) and then asserts.
//! Tests share a lock so that the recorded runtimes are not inflated by
//! running concurrently.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use kfp_core::functionals::identities::{analytic_identities, discrete_identities, GaussianTest, IdentityOptions};
use kfp_core::functionals::IdentityKind;
use kfp_core::initial::{bump, dipole};
use kfp_core::model::{build_equilibrium, ConfinementModel, CutoffSpec, Equilibrium};
use kfp_core::operators::{assemble_full, Generators};
use kfp_core::phase_grid::{Field, LineGrid, PhaseGrid};
use kfp_core::semigroup::{
    duhamel_convolve, evolve_with, iterated_duhamel, matrix_exponential, EvolveConfig, Scheme, Stepper,
};
use kfp_core::verify::coercivity::{coercivity_study, hypocoercive_decay};
use kfp_core::verify::decay::{decay_study, polynomial_study, DecaySetup, PolynomialSetup};
use kfp_core::verify::drift::{certify_drift_exp, certify_drift_poly, drift_sweep, monotone_in_k, DriftKind};
use kfp_core::verify::fit::{fit_series, polynomial_rate, stretch_ceiling, DecayModel};
use kfp_core::verify::poincare::dichotomy_report;
use kfp_core::verify::regularization::{near_singular_family, regularization_rate};

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: usize, name: &str, pass: bool, elapsed: Duration, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id:>2} {status} {name} ({:.1} s): {detail}\n", elapsed.as_secs_f64());
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn setup(grid: PhaseGrid<f64>, gamma: f64, cutoff: Option<CutoffSpec>) -> (Equilibrium<f64>, Generators<f64>) {
    let eq = build_equilibrium(&grid, &ConfinementModel::new(gamma).unwrap()).unwrap();
    let gens = assemble_full(&eq, cutoff.as_ref()).unwrap();
    (eq, gens)
}

fn rel_l2(a: &Field<f64>, b: &Field<f64>) -> f64 {
    (a - b).l2_plain() / b.l2_plain()
}

#[test]
fn c01_stationarity_and_mass() {
    let _g = serial();
    let t0 = Instant::now();
    let (eq, gens) = setup(PhaseGrid::new(129, 129, 8.0, 8.0).unwrap(), 0.5, None);
    let g = eq.density().clone();
    let cfg = EvolveConfig::new(0.1, 10.0, Scheme::ImplicitEuler);
    let tr = evolve_with(&gens.l, &g, &cfg, vec!["mass".into()], |_, f| Ok(vec![f.integrate()])).unwrap();
    let drift = tr.series("mass").unwrap().iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
    let stat = (&tr.last - &g).max_abs() / g.max_abs();
    let el = t0.elapsed();
    let pass = stat <= 1e-6 && drift <= 1e-6 && el.as_secs_f64() <= 60.0;
    report(1, "stationarity and mass", pass, el, &format!("|S(10)G - G|/|G| = {stat:.2e}, mass drift = {drift:.2e}"));
    assert!(pass);
}

#[test]
fn c02_oracle_equivalence() {
    let _g = serial();
    let t0 = Instant::now();
    let (eq, gens) = setup(PhaseGrid::new(16, 16, 4.0, 7.0).unwrap(), 0.5, None);
    let f0 = bump(&eq, 0.7, -0.4, 0.8);
    let exact = matrix_exponential(&gens.l, 1.0, &f0).unwrap();
    let run = |dt: f64| {
        let s = Stepper::new(&gens.l, dt, Scheme::ImplicitEuler).unwrap();
        let mut y = f0.values().to_vec();
        for _ in 0..(1.0 / dt).round() as usize {
            s.step(&mut y);
        }
        rel_l2(&Field::from_values(*eq.grid(), y).unwrap(), &exact)
    };
    let (e_fine, e_coarse) = (run(1e-3), run(2e-3));
    let ratio = e_coarse / e_fine;
    let el = t0.elapsed();
    let pass = e_fine <= 1e-2 && (ratio - 2.0).abs() <= 0.3 * 2.0 && el.as_secs_f64() <= 60.0;
    report(
        2,
        "oracle equivalence",
        pass,
        el,
        &format!("error(dt=1e-3) = {e_fine:.2e}, error ratio on halving = {ratio:.3}"),
    );
    assert!(pass);
}

#[test]
fn c03_duhamel_identities() {
    let _g = serial();
    let t0 = Instant::now();
    let (eq, gens) = setup(PhaseGrid::new(16, 16, 4.0, 7.0).unwrap(), 0.5, Some(CutoffSpec::new(2.0, 2.0).unwrap()));
    let f0 = bump(&eq, 0.7, -0.4, 0.8);
    let conv = duhamel_convolve(&gens.b, &gens.l, &gens.a, 1.0, 64, &f0).unwrap();
    let sl = matrix_exponential(&gens.l, 1.0, &f0).unwrap();
    let sb = matrix_exponential(&gens.b, 1.0, &f0).unwrap();
    let two = (&(&sl - &sb) - &conv).l2_plain() / f0.l2_plain();
    let it = iterated_duhamel(&gens.l, &gens.b, &gens.a, 1.0, 64, 2, &f0).unwrap();
    let n2 = it.relative_residual(&f0);
    let el = t0.elapsed();
    let pass = two <= 1e-6 && n2 <= 1e-5 && el.as_secs_f64() <= 120.0;
    report(3, "Duhamel identities", pass, el, &format!("two-term residual = {two:.2e}, n = 2 residual = {n2:.2e}"));
    assert!(pass);
}

#[test]
fn c04_drift_certification() {
    let _g = serial();
    let t0 = Instant::now();
    let grid = PhaseGrid::new(129, 129, 8.0, 8.0).unwrap();
    let ks = [1.0, 2.0, 4.0, 8.0, 13.0, 16.0, 32.0, 64.0];
    let rs = [6.0, 7.0, 8.0];
    let exp_kind = DriftKind::Exp { delta: 0.25, eps_weight: 0.05, p: 2.0 };
    let exp_sweep = drift_sweep(0.5, exp_kind, &ks, &rs, &grid);
    let poly_sweep = drift_sweep(0.5, DriftKind::Poly { k: 2.0 }, &ks, &rs, &grid);
    let best = |s: &[kfp_core::verify::drift::DriftCertificate]| {
        s.iter().filter(|c| c.pass).min_by(|a, b| a.params.big_k.total_cmp(&b.params.big_k)).cloned()
    };
    let (be, bp) = (best(&exp_sweep), best(&poly_sweep));
    // the public entry points agree with the sweep
    let direct = match (&be, &bp) {
        (Some(e), Some(p)) => {
            certify_drift_exp(0.5, 0.25, 0.05, 2.0, e.params.big_k, e.params.r, &grid).unwrap().pass
                && certify_drift_poly(0.5, 2.0, p.params.big_k, p.params.r, &grid).unwrap().pass
        }
        _ => false,
    };
    let mono = monotone_in_k(&exp_sweep) && monotone_in_k(&poly_sweep);
    let el = t0.elapsed();
    let pass = direct && mono && el.as_secs_f64() <= 60.0;
    let show = |c: &Option<kfp_core::verify::drift::DriftCertificate>| match c {
        Some(c) => format!("K = {}, R = {}, C = {:.3e}", c.params.big_k, c.params.r, c.c),
        None => "none".into(),
    };
    report(
        4,
        "drift certification",
        pass,
        el,
        &format!("exp: {}; poly k=2: {}; monotone in K: {mono}", show(&be), show(&bp)),
    );
    assert!(pass);
}

#[test]
fn c05_dirichlet_coercivity() {
    let _g = serial();
    let t0 = Instant::now();
    let lambda = |n: usize| {
        let (eq, gens) = setup(PhaseGrid::new(n, n, 8.0, 8.0).unwrap(), 0.5, None);
        coercivity_study(&eq, &gens.l, 0.01, 100, 1).unwrap().lambda
    };
    let (l65, l129) = (lambda(65), lambda(129));
    let change = (l129 / l65 - 1.0).abs();
    let el = t0.elapsed();
    let pass = l65 > 0.0 && l129 > 0.0 && change <= 0.25 && el.as_secs_f64() <= 300.0;
    report(
        5,
        "Dirichlet coercivity",
        pass,
        el,
        &format!("lambda(65) = {l65:.4e}, lambda(129) = {l129:.4e}, change = {change:.2e}"),
    );
    assert!(pass);
}

#[test]
fn c06_hypocoercive_decay() {
    let _g = serial();
    let t0 = Instant::now();
    let (eq, gens) = setup(PhaseGrid::new(65, 65, 8.0, 8.0).unwrap(), 0.5, None);
    let h = hypocoercive_decay(&eq, &gens.l, &dipole(&eq, 2.0, 1.0), 0.01, 0.05, 20.0).unwrap();
    let el = t0.elapsed();
    let pass = h.max_increase <= 0.0 && h.c_measured > 0.0 && el.as_secs_f64() <= 300.0;
    report(
        6,
        "hypocoercive monotone decay",
        pass,
        el,
        &format!(
            "max relative increase = {:.2e}, C = {:.3e}, discretization budget = {:.3e}",
            h.max_increase, h.c_measured, h.budget
        ),
    );
    assert!(pass);
}

#[test]
fn c07_decay_exponents() {
    let _g = serial();
    let t0 = Instant::now();
    let s = decay_study(&[0.4, 0.6, 0.8], &DecaySetup::standard()).unwrap();
    let within = s.runs.iter().all(|r| {
        let b = r.fit.b.unwrap();
        (b / stretch_ceiling(r.gamma) - 1.0).abs() <= 0.5
    });
    let el = t0.elapsed();
    let pass = within && s.b_increasing && s.distance_decreasing && el.as_secs_f64() <= 900.0;
    let detail: Vec<String> = s
        .runs
        .iter()
        .map(|r| {
            format!(
                "gamma {}: b = {:.3} (target {:.3}), |f(20)| = {:.3e}",
                r.gamma,
                r.fit.b.unwrap(),
                r.ceiling,
                r.distance_at_compare
            )
        })
        .collect();
    report(7, "decay exponents", pass, el, &detail.join("; "));
    assert!(pass);
}

#[test]
fn c08_polynomial_decay() {
    let _g = serial();
    let t0 = Instant::now();
    let p = polynomial_study(0.5, &PolynomialSetup::standard()).unwrap();
    let target = polynomial_rate(2.0, 0.5, 0.5);
    let dev = p.fit.rate / target - 1.0;
    let el = t0.elapsed();
    let pass = dev.abs() <= 0.4 && el.as_secs_f64() <= 600.0;
    report(
        8,
        "polynomial S_B decay",
        pass,
        el,
        &format!("a = {:.3} (target {target:.3}, deviation {:+.1}%)", p.fit.rate, 100.0 * dev),
    );
    assert!(pass);
}

#[test]
fn c09_regularization() {
    let _g = serial();
    let t0 = Instant::now();
    let sup = |n: usize| {
        let (eq, gens) = setup(PhaseGrid::new(n, n, 4.0, 7.0).unwrap(), 0.5, Some(CutoffSpec::new(1.0, 2.0).unwrap()));
        let fam = near_singular_family(&eq, &[(0.0, 0.0), (1.0, 0.5), (-1.5, -1.0)], &[4.0]);
        regularization_rate(&eq, &gens.b, 0.5, 1.0, 0.05, 0.005, &fam).unwrap().sup
    };
    let (s65, s129) = (sup(65), sup(129));
    let change = (s129 / s65 - 1.0).abs();
    let el = t0.elapsed();
    let pass = s65.is_finite() && s129.is_finite() && change <= 0.3 && el.as_secs_f64() <= 600.0;
    report(
        9,
        "regularization bound",
        pass,
        el,
        &format!("sup(65) = {s65:.4e}, sup(129) = {s129:.4e}, change = {:.1}%", 100.0 * change),
    );
    assert!(pass);
}

#[test]
fn c10_poincare_dichotomy() {
    let _g = serial();
    let t0 = Instant::now();
    let model = ConfinementModel::new(0.5).unwrap();
    let r = dichotomy_report(&model, &LineGrid::new(4001, 40.0).unwrap(), &[2.0, 4.0, 6.0], 1.0, 1.0).unwrap();
    let el = t0.elapsed();
    let pass = r.pass && el.as_secs_f64() <= 60.0;
    let detail: Vec<String> =
        r.checks.iter().map(|c| format!("{} = {:.3e} ({})", c.name, c.value, c.threshold)).collect();
    report(10, "weak vs strong Poincare", pass, el, &detail.join("; "));
    assert!(pass);
}

#[test]
fn c11_identity_suite() {
    let _g = serial();
    let t0 = Instant::now();
    let fam = GaussianTest::family();
    let mut worst_order = f64::INFINITY;
    let mut worst_name = String::new();
    let mut margins_ok = true;
    for p in [1.0, 2.0] {
        let opts = IdentityOptions { p, ..Default::default() };
        // distance of each discrete side to its analytic value on two grids
        let errors = |n: usize| {
            let (eq, gens) = setup(PhaseGrid::new(n, n, 8.0, 8.0).unwrap(), 0.5, None);
            let (f, g) = (fam[0].field(eq.grid()), fam[1].field(eq.grid()));
            let d = discrete_identities(&f, &g, &eq, &gens, &opts).unwrap();
            let a = analytic_identities(&fam[0], &fam[1], &eq, &opts);
            let errs: Vec<(String, f64)> = d
                .entries
                .iter()
                .zip(&a.entries)
                .map(|(d, a)| (d.name.clone(), (d.lhs - a.lhs).abs().max((d.rhs - a.rhs).abs())))
                .collect();
            (errs, d)
        };
        let (coarse, _) = errors(129);
        let (fine, disc) = errors(257);
        for ((name, ec), (_, ef)) in coarse.iter().zip(&fine) {
            let order = (ec / ef).log2();
            if order < worst_order {
                worst_order = order;
                worst_name = format!("{name} (p = {p})");
            }
        }
        margins_ok &= disc.entries.iter().filter(|e| e.kind == IdentityKind::Inequality).all(|e| e.margin() >= 0.0);
    }
    // equality at p = 1 against closed-form derivatives; the wider box keeps
    // the tails of the flattest member below the target
    let eq =
        build_equilibrium(&PhaseGrid::new(129, 129, 10.0, 8.0).unwrap(), &ConfinementModel::new(0.5).unwrap()).unwrap();
    let opts = IdentityOptions { p: 1.0, ..Default::default() };
    let split = fam
        .iter()
        .map(|f| analytic_identities(f, f, &eq, &opts).get("splitting_drift").unwrap().relative_residual())
        .fold(0.0, f64::max);
    let el = t0.elapsed();
    let pass = (1.7..=2.5).contains(&worst_order) && margins_ok && split <= 1e-8 && el.as_secs_f64() <= 120.0;
    report(
        11,
        "identity suite",
        pass,
        el,
        &format!("lowest observed order {worst_order:.2} at {worst_name}; inequality margins >= 0: {margins_ok}; splitting drift at p = 1: {split:.2e}"),
    );
    assert!(pass);
}

#[test]
fn c12_fitter_self_test() {
    let _g = serial();
    let t0 = Instant::now();
    let ts: Vec<f64> = (0..400).map(|i| 0.1 + 59.9 * i as f64 / 399.0).collect();
    let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-0.8 * t.powf(0.4)).exp()).collect();
    let s = fit_series(&ts, &ys, DecayModel::StretchedExponential, (0.1, 60.0)).unwrap();
    let ys: Vec<f64> = ts.iter().map(|t| 1.7 * (1.0 + t).powf(-1.25)).collect();
    let q = fit_series(&ts, &ys, DecayModel::PowerLaw, (0.1, 60.0)).unwrap();
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    let worst = [rel(s.b.unwrap(), 0.4), rel(s.rate, 0.8), rel(s.c, 2.5), rel(q.rate, 1.25), rel(q.c, 1.7)]
        .into_iter()
        .fold(0.0, f64::max);
    let el = t0.elapsed();
    let pass = worst <= 0.01 && el.as_secs_f64() <= 1.0;
    report(
        12,
        "fitter self-test",
        pass,
        el,
        &format!(
            "b = {:.4}, lambda = {:.4}, a = {:.4}, worst relative error = {worst:.1e}",
            s.b.unwrap(),
            s.rate,
            q.rate
        ),
    );
    assert!(pass);
}
