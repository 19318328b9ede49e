//! Subcommand bodies. Setup failures are config errors; failures after the
//! operators are built are numerical errors.

use std::path::{Path, PathBuf};

use kfp_core::functionals::identities::{analytic_identities, discrete_identities, GaussianTest, IdentityOptions};
use kfp_core::functionals::{dirichlet_form, h1_norm, l1_norm, modified_inner, weighted_norm_field, IdentityKind};
use kfp_core::initial::{bump, InitialData};
use kfp_core::model::{build_equilibrium, eval_weight, ConfinementModel, CutoffSpec, Equilibrium, WeightSpec};
use kfp_core::operators::{assemble_full, Generators};
use kfp_core::phase_grid::{LineGrid, PhaseGrid};
use kfp_core::semigroup::{
    duhamel_convolve, evolve_with, iterated_duhamel, matrix_exponential, EvolveConfig, DENSE_LIMIT,
};
use kfp_core::verify::coercivity::{coercivity_study, hypocoercive_decay};
use kfp_core::verify::composition::composition_bounds_check;
use kfp_core::verify::decay::{decay_study, DecaySetup};
use kfp_core::verify::drift::{
    certify_drift_exp, certify_drift_poly, drift_sweep, monotone_in_k, DriftCertificate, DriftKind,
};
use kfp_core::verify::fit::stretch_ceiling;
use kfp_core::verify::poincare::dichotomy_report;
use kfp_core::verify::regularization::{l1_growth_check, l1_growth_report, near_singular_family, regularization_rate};
use kfp_core::verify::VerificationReport;

use crate::config::ExperimentConfig;
use crate::output::{csv, write_atomic};
use crate::{CliError, Suite};

fn config<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn equilibrium(cfg: &ExperimentConfig, grid: &PhaseGrid<f64>) -> Result<Equilibrium<f64>, CliError> {
    let model = ConfinementModel::new(cfg.gamma).map_err(config)?;
    build_equilibrium(grid, &model).map_err(config)
}

fn generators(eq: &Equilibrium<f64>, cutoff: Option<&CutoffSpec>) -> Result<Generators<f64>, CliError> {
    assemble_full(eq, cutoff).map_err(config)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from(&cfg.output)
}

pub const SIMULATE_COLUMNS: [&str; 8] =
    ["t", "mass", "l2_Ginv", "l2_Ginv_eps", "l1_Hk", "h1_weighted", "dirichlet", "modified_inner"];

/// Evolves `initial` under `S_L`. Norms are taken of `f - M(f0) G`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let grid = cfg.grid()?;
    let eq = equilibrium(cfg, &grid)?;
    let gens = generators(&eq, None)?;
    let f0 = cfg.initial.build(&eq);
    let mass0 = f0.integrate();
    // below this the deviation is roundoff and the quadratic forms vanish
    let floor = 1e-12 * l1_norm(&f0);
    let weight = |spec: WeightSpec| eval_weight(&spec, &eq).map_err(config);
    let w_half = weight(WeightSpec::EquilibriumPower { s: 0.5 })?;
    let w_eps = weight(WeightSpec::EquilibriumPower { s: 0.5 + cfg.eps_space })?;
    let w_hk = weight(WeightSpec::PolyH { k: cfg.k })?;
    let mut ev = EvolveConfig::new(cfg.dt, cfg.t_end, cfg.scheme);
    ev.record_every = cfg.record_every;
    let names = SIMULATE_COLUMNS[1..].iter().map(|s| s.to_string()).collect();
    let tr = evolve_with(&gens.l, &f0, &ev, names, |_, f| {
        let d = f.axpy(-mass0, eq.density())?;
        let resolved = l1_norm(&d) > floor;
        let quad = |q: Result<f64, _>| if resolved { q } else { Ok(0.0) };
        Ok(vec![
            f.integrate(),
            weighted_norm_field(&d, 2.0, &w_half),
            weighted_norm_field(&d, 2.0, &w_eps),
            weighted_norm_field(&d, 1.0, &w_hk),
            h1_norm(&d, &eq),
            quad(dirichlet_form(&d, cfg.eps_scalar, &gens.l, &eq))?,
            quad(modified_inner(&d, &d, cfg.eps_scalar, &eq))?,
        ])
    })
    .map_err(numerical)?;
    let rows: Vec<Vec<f64>> =
        tr.times.iter().zip(&tr.rows).map(|(t, r)| std::iter::once(*t).chain(r.iter().copied()).collect()).collect();
    let path = out_dir(cfg).join("simulate.csv");
    write_atomic(&path, &csv(&SIMULATE_COLUMNS, &rows, &cfg.hash()))?;
    Ok(path)
}

/// Runs one suite and writes `verify-<suite>.json` and `.txt`.
pub fn verify(cfg: &ExperimentConfig, suite: Suite) -> Result<(VerificationReport, PathBuf), CliError> {
    let mut report = match suite {
        Suite::Drift => drift(cfg)?,
        Suite::Poincare => poincare(cfg)?,
        Suite::Dirichlet => dirichlet(cfg)?,
        Suite::Regularization => regularization(cfg)?,
        Suite::Duhamel => duhamel(cfg)?,
        Suite::Composition => composition(cfg)?,
        Suite::L1growth => l1growth(cfg)?,
        Suite::Identities => identities(cfg)?,
    };
    report.input("config_sha256", cfg.hash());
    let dir = out_dir(cfg);
    let name = suite.name();
    write_atomic(&dir.join(format!("verify-{name}.json")), &report.to_json())?;
    let txt = dir.join(format!("verify-{name}.txt"));
    write_atomic(&txt, &report.to_text())?;
    Ok((report, txt))
}

fn drift(cfg: &ExperimentConfig) -> Result<VerificationReport, CliError> {
    let grid = cfg.grid()?;
    let (k, r) = (cfg.big_k, cfg.r);
    let exp = certify_drift_exp(cfg.gamma, cfg.delta_weight, cfg.eps_weight, cfg.p, k, r, &grid).map_err(config)?;
    let poly = certify_drift_poly(cfg.gamma, cfg.k, k, r, &grid).map_err(config)?;
    let ks: Vec<f64> = if k > 0.0 { vec![k / 4.0, k / 2.0, k, 2.0 * k, 4.0 * k] } else { vec![0.0, 1.0, 2.0, 4.0] };
    let exp_kind = DriftKind::Exp { delta: cfg.delta_weight, eps_weight: cfg.eps_weight, p: cfg.p };
    let mono = monotone_in_k(&drift_sweep(cfg.gamma, exp_kind, &ks, &[r], &grid))
        && monotone_in_k(&drift_sweep(cfg.gamma, DriftKind::Poly { k: cfg.k }, &ks, &[r], &grid));
    let mut rep = VerificationReport::new("drift");
    rep.input("gamma", cfg.gamma)
        .input("K", k)
        .input("R", r)
        .input("eps_weight", cfg.eps_weight)
        .input("delta_weight", cfg.delta_weight)
        .input("p", cfg.p)
        .input("k", cfg.k)
        .input(
            "grid",
            format!("{}x{} on [-{}, {}] x [-{}, {}]", cfg.nx, cfg.nv, cfg.x_max, cfg.x_max, cfg.v_max, cfg.v_max),
        );
    let mut add = |label: &str, c: &DriftCertificate| {
        rep.measure(&format!("{label}.exponent"), c.exponent)
            .measure(&format!("{label}.margin"), c.margin)
            .measure(&format!("{label}.worst_x"), c.worst.0)
            .measure(&format!("{label}.worst_v"), c.worst.1)
            .check(&format!("{label}.C"), c.c, "> 0", c.pass);
        if !c.pass {
            rep.note(format!(
                "{label}: drift is not negative at (x, v) = ({:.3}, {:.3}), phi + C H^e = {:.3e}",
                c.worst.0, c.worst.1, c.margin
            ));
        }
    };
    add("exp", &exp);
    add("poly", &poly);
    rep.check("monotone in K", f64::from(u8::from(mono)), "= 1", mono);
    Ok(rep)
}

fn poincare(cfg: &ExperimentConfig) -> Result<VerificationReport, CliError> {
    let model = ConfinementModel::new(cfg.gamma).map_err(config)?;
    let line = LineGrid::new(4001, 40.0).map_err(config)?;
    dichotomy_report(&model, &line, &[2.0, 4.0, 6.0], 1.0, 1.0).map_err(numerical)
}

fn dirichlet(cfg: &ExperimentConfig) -> Result<VerificationReport, CliError> {
    if cfg.initial == InitialData::Equilibrium {
        return Err(CliError::Config("dirichlet suite needs initial data other than the equilibrium".into()));
    }
    let grid = cfg.grid()?;
    let eq = equilibrium(cfg, &grid)?;
    let gens = generators(&eq, None)?;
    let study = coercivity_study(&eq, &gens.l, cfg.eps_scalar, cfg.samples, cfg.seed).map_err(numerical)?;
    let f0 = cfg.initial.build(&eq);
    let h = hypocoercive_decay(&eq, &gens.l, &f0, cfg.eps_scalar, cfg.dt, cfg.t_end).map_err(numerical)?;
    let mut rep = VerificationReport::new("dirichlet");
    rep.input("gamma", cfg.gamma)
        .input("eps_scalar", cfg.eps_scalar)
        .input("samples", cfg.samples)
        .input("seed", cfg.seed)
        .input("initial", serde_json::to_string(&cfg.initial).unwrap_or_default())
        .measure("worst seed", study.worst_seed as f64)
        .measure("equivalence.lo", study.equivalence.0)
        .measure("equivalence.hi", study.equivalence.1)
        .measure("discretization budget", h.budget)
        .check("lambda", study.lambda, "> 0", study.lambda > 0.0)
        .check("max relative increase of ((f, f))", h.max_increase, "<= 0", h.max_increase <= 0.0)
        .check("C", h.c_measured, "> 0", h.c_measured > 0.0);
    Ok(rep)
}

fn regularization(cfg: &ExperimentConfig) -> Result<VerificationReport, CliError> {
    let grid = cfg.grid()?;
    let eq = equilibrium(cfg, &grid)?;
    let gens = generators(&eq, Some(&cfg.cutoff()))?;
    let centers = [(0.0, 0.0), (1.0, 0.5), (-1.5, -1.0)];
    let fam = near_singular_family(&eq, &centers, &[4.0]);
    let dt = cfg.dt.min(cfg.eta / 200.0);
    let t_min = 0.05f64.min(0.5 * cfg.eta);
    let s = regularization_rate(&eq, &gens.b, cfg.delta, cfg.eta, t_min, dt, &fam).map_err(numerical)?;
    let mut rep = VerificationReport::new("regularization");
    rep.input("delta", cfg.delta)
        .input("eta", cfg.eta)
        .input("t_min", t_min)
        .input("dt", dt)
        .input("K", cfg.big_k)
        .input("R", cfg.r);
    let mut all_decreasing = true;
    for m in &s.members {
        rep.measure(&format!("sup_scaled[{}]", m.label), m.sup_scaled)
            .measure(&format!("ratio_at_eta[{}]", m.label), m.ratio_at_eta);
        all_decreasing &= m.decreasing;
    }
    rep.check("sup t^3 |S_B f|_2 / |f|_1", s.sup, "finite and > 0", s.sup.is_finite() && s.sup > 0.0).check(
        "ratio nonincreasing",
        f64::from(u8::from(all_decreasing)),
        "= 1",
        all_decreasing,
    );
    Ok(rep)
}

/// Equilibrium, generators and a note when the fallback grid was used.
type DenseSetup = (Equilibrium<f64>, Generators<f64>, Option<String>);

/// The configured grid if dense routines can handle it, else a 16 x 16 box.
fn dense_setup(cfg: &ExperimentConfig, fallback: (usize, f64, f64, f64)) -> Result<DenseSetup, CliError> {
    if cfg.nx * cfg.nv <= DENSE_LIMIT {
        let eq = equilibrium(cfg, &cfg.grid()?)?;
        let gens = generators(&eq, Some(&cfg.cutoff()))?;
        return Ok((eq, gens, None));
    }
    let (n, xm, vm, r) = fallback;
    let grid = PhaseGrid::new(n, n, xm, vm).map_err(config)?;
    let eq = equilibrium(cfg, &grid)?;
    let cut = CutoffSpec::new(cfg.big_k, r).map_err(config)?;
    let gens = generators(&eq, Some(&cut))?;
    let note = format!(
        "configured grid exceeds the dense limit ({DENSE_LIMIT} nodes); used {n}x{n} on [-{xm}, {xm}] x [-{vm}, {vm}] with R = {r}"
    );
    Ok((eq, gens, Some(note)))
}

fn duhamel(cfg: &ExperimentConfig) -> Result<VerificationReport, CliError> {
    let (eq, gens, note) = dense_setup(cfg, (16, 4.0, 7.0, 2.0))?;
    let f0 = bump(&eq, 0.7, -0.4, 0.8);
    let (t, nquad) = (1.0, 64);
    let conv = duhamel_convolve(&gens.b, &gens.l, &gens.a, t, nquad, &f0).map_err(numerical)?;
    let sl = matrix_exponential(&gens.l, t, &f0).map_err(numerical)?;
    let sb = matrix_exponential(&gens.b, t, &f0).map_err(numerical)?;
    let two = (&(&sl - &sb) - &conv).l2_plain() / f0.l2_plain();
    let it = iterated_duhamel(&gens.l, &gens.b, &gens.a, t, nquad, 2, &f0).map_err(numerical)?;
    let mut rep = VerificationReport::new("duhamel");
    rep.input("t", t).input("nquad", nquad).input("K", cfg.big_k);
    if let Some(n) = note {
        rep.note(n);
    }
    rep.check("two-term residual", two, "<= 1e-6", two <= 1e-6);
    let n2 = it.relative_residual(&f0);
    rep.check("n = 2 residual", n2, "<= 1e-5", n2 <= 1e-5);
    Ok(rep)
}

fn composition(cfg: &ExperimentConfig) -> Result<VerificationReport, CliError> {
    let (eq, gens, note) = dense_setup(cfg, (10, 4.0, 7.0, 2.0))?;
    let s = composition_bounds_check(&eq, &gens, 3, 0.25, 8, cfg.eps_space, 64).map_err(numerical)?;
    let mut rep = VerificationReport::new("composition");
    rep.input("levels", 3).input("dt", 0.25).input("steps", 8).input("eps_space", cfg.eps_space);
    if let Some(n) = note {
        rep.note(n);
    }
    rep.measure("|A|", s.a_norm).measure("|A S_B(1e-4)|", s.small_time_norm);
    if let Some(f) = &s.fit {
        rep.measure("fit.lambda", f.rate).measure("fit.b", f.b.unwrap_or(f64::NAN));
    }
    for (l, c) in s.bound_constants.iter().enumerate() {
        rep.measure(&format!("C[{}]", l + 1), *c);
    }
    let finite = s.norms.iter().flatten().all(|y| y.is_finite()) && s.bound_constants.iter().all(|c| c.is_finite());
    let jump = (s.small_time_norm / s.a_norm - 1.0).abs();
    rep.check("norms and constants finite", f64::from(u8::from(finite)), "= 1", finite)
        .check("| |A S_B(0+)| / |A| - 1 |", jump, "<= 1e-2", jump <= 1e-2)
        .check("expansion residual", s.remainder_residual, "<= 1e-5", s.remainder_residual <= 1e-5);
    Ok(rep)
}

fn l1growth(cfg: &ExperimentConfig) -> Result<VerificationReport, CliError> {
    let grid = cfg.grid()?;
    let eq = equilibrium(cfg, &grid)?;
    let gens = generators(&eq, Some(&cfg.cutoff()))?;
    let dt = cfg.dt.min(0.01);
    let g = l1_growth_check(&eq, &gens.b, cfg.delta, eq.density(), cfg.eta, dt).map_err(numerical)?;
    let mut rep = l1_growth_report(&g, 1e-6, true);
    rep.input("delta", cfg.delta).input("eta", cfg.eta).input("dt", dt).input("initial", "equilibrium");
    Ok(rep)
}

fn identities(cfg: &ExperimentConfig) -> Result<VerificationReport, CliError> {
    let grid = cfg.grid()?;
    let eq = equilibrium(cfg, &grid)?;
    let gens = generators(&eq, None)?;
    let fam = GaussianTest::family();
    let opts = IdentityOptions {
        delta: cfg.delta,
        p: cfg.p,
        eps_weight: cfg.eps_weight,
        delta_weight: cfg.delta_weight,
        k: cfg.k,
    };
    let (f, g) = (fam[0].field(&grid), fam[2].field(&grid));
    let disc = discrete_identities(&f, &g, &eq, &gens, &opts).map_err(numerical)?;
    let ana = analytic_identities(&fam[0], &fam[2], &eq, &opts);
    let p1 = analytic_identities(&fam[0], &fam[2], &eq, &IdentityOptions { p: 1.0, ..opts });
    let mut rep = VerificationReport::new("identities");
    rep.input("p", cfg.p).input("delta", cfg.delta).input("k", cfg.k);
    for e in &disc.entries {
        let key = format!("discrete.{}", e.name);
        match e.kind {
            IdentityKind::Equality => rep.measure(&format!("{key}.relative_residual"), e.relative_residual()),
            IdentityKind::Inequality => rep.check(&format!("{key}.margin"), e.margin(), ">= 0", e.margin() >= 0.0),
        };
    }
    for e in &ana.entries {
        let key = format!("analytic.{}", e.name);
        match e.kind {
            IdentityKind::Equality => {
                let r = e.relative_residual();
                rep.check(&format!("{key}.relative_residual"), r, "<= 1e-6", r <= 1e-6)
            }
            IdentityKind::Inequality => rep.check(&format!("{key}.margin"), e.margin(), ">= 0", e.margin() >= 0.0),
        };
    }
    let split = p1.get("splitting_drift").map(|e| e.relative_residual()).unwrap_or(f64::NAN);
    rep.check("splitting drift equality at p = 1", split, "<= 1e-8", split <= 1e-8);
    Ok(rep)
}

pub const TRAJECTORY_COLUMNS: [&str; 2] = ["t", "distance"];
pub const SUMMARY_COLUMNS: [&str; 7] = ["gamma", "target_b", "b", "lambda", "c", "residual", "distance_at_compare"];

pub struct DecayOutcome {
    pub summary: PathBuf,
    pub table: String,
    pub ordered: bool,
}

/// Fits the stretched law for each `gamma` and checks the orderings.
pub fn decay(cfg: &ExperimentConfig) -> Result<DecayOutcome, CliError> {
    if cfg.gammas.len() < 2 {
        return Err(CliError::Config(format!("decay-study needs at least two gammas, got {:?}", cfg.gammas)));
    }
    if cfg.p != 1.0 && cfg.p != 2.0 {
        return Err(CliError::Config(format!("decay-study needs p in {{1, 2}}, got {}", cfg.p)));
    }
    let setup = DecaySetup {
        grid: cfg.decay_grid()?,
        dt: cfg.decay_dt,
        t_end: cfg.decay_t_end,
        record_every: cfg.decay_record_every,
        window: cfg.window(),
        t_compare: cfg.decay_t_compare,
        initial: cfg.decay_initial,
        p: cfg.p as u8,
    };
    for &g in &cfg.gammas {
        let eq = ConfinementModel::new(g)
            .map_err(config)
            .and_then(|m| build_equilibrium(&setup.grid, &m).map_err(config))?;
        generators(&eq, None)?;
    }
    let study = decay_study(&cfg.gammas, &setup).map_err(numerical)?;
    let dir = out_dir(cfg);
    let hash = cfg.hash();
    let mut rows = Vec::new();
    let mut table = String::from("gamma  target_b  b       lambda    residual  distance@t_compare\n");
    for run in &study.runs {
        let traj: Vec<Vec<f64>> = run.times.iter().zip(&run.distance).map(|(t, d)| vec![*t, *d]).collect();
        write_atomic(&dir.join(format!("decay-gamma-{}.csv", run.gamma)), &csv(&TRAJECTORY_COLUMNS, &traj, &hash))?;
        let b = run.fit.b.unwrap_or(f64::NAN);
        rows.push(vec![
            run.gamma,
            stretch_ceiling(run.gamma),
            b,
            run.fit.rate,
            run.fit.c,
            run.fit.residual,
            run.distance_at_compare,
        ]);
        table += &format!(
            "{:<6} {:<9.4} {:<7.4} {:<9.4e} {:<9.2e} {:.4e}\n",
            run.gamma,
            stretch_ceiling(run.gamma),
            b,
            run.fit.rate,
            run.fit.residual,
            run.distance_at_compare
        );
    }
    let summary = dir.join("decay-summary.csv");
    write_atomic(&summary, &csv(&SUMMARY_COLUMNS, &rows, &hash))?;
    table += &format!("b increasing in gamma: {}\n", study.b_increasing);
    table += &format!("distance at t_compare decreasing in gamma: {}\n", study.distance_decreasing);
    Ok(DecayOutcome { summary, table, ordered: study.b_increasing && study.distance_decreasing })
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
