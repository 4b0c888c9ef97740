//! The five subcommands. Each resolves and validates its full effective
//! configuration before computing, and embeds it in every artifact.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use curvature_game::analysis::{
    ball_solution, hausdorff_distance, mc_operator_residual, study_row, superlevel_set, supersolution_bound,
    verify_band_lemma, BallOracle, LemmaFamily, LevelSetMask, Quadratic,
};
use curvature_game::game::{
    aligned_strategy, dpp_policy_strategy, estimate_value, fixed_axis_strategy, gradient_cap_strategy,
    martingale_diagnostic, mirror_strategy, play_episode, radial_exit_strategy, Game, Player, Strategy,
};
use curvature_game::solver::{
    check_dpp_supersolution, dpp_residual, value_iteration, DppOperator, SolveError, Solution, SolverConfig,
};
use curvature_game::sphere::game_theta;
use curvature_game::vector::{norm_sq, quad_form};
use curvature_game::{
    constant_c, equator_average, intersect_caps, region_average, Cap, Direction, Domain, DomainSpec, FieldHeader,
    ValueField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{RunConfig, SimMode, StrategySpec};
use crate::output::{cell, Outputs};
use crate::CliError;

/// Default episode count of `simulate`.
pub const DEFAULT_EPISODES: u64 = 10_000;
/// Default levels of `levelset` and `converge`.
pub const DEFAULT_T_LIST: [f64; 3] = [0.1, 0.25, 0.4];
/// Default eps list of `converge`.
pub const DEFAULT_EPS_LIST: [f64; 3] = [0.2, 0.1, 0.05];
/// Default eps of the solver checks in `verify`.
pub const DEFAULT_VERIFY_EPS: f64 = 0.2;
/// Default eps list of the band lemma check.
pub const DEFAULT_LEMMA_EPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
/// Band lemma: largest accepted error at the smallest eps.
pub const LEMMA_TOL: f64 = 1e-2;
/// `verify` oracle check: sup error at most this fraction of the oracle's maximum.
pub const ORACLE_REL_TOL: f64 = 0.1;

pub const FIELD_FILE: &str = "field.dat";

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

macro_rules! by_dim {
    ($dim:expr, $f:ident($($arg:expr),*)) => {
        match $dim {
            2 => $f::<2>($($arg),*),
            3 => $f::<3>($($arg),*),
            d => Err(usage(format!("dimension {d} is unsupported, expected 2 or 3"))),
        }
    };
}

fn require_domain(cfg: &RunConfig) -> Result<&DomainSpec, CliError> {
    cfg.domain.as_ref().ok_or_else(|| usage("config needs a domain"))
}

fn point<const N: usize>(v: &[f64], what: &str) -> Result<[f64; N], CliError> {
    if v.len() != N {
        return Err(usage(format!("{what} has {} components, expected {N}", v.len())));
    }
    Ok(std::array::from_fn(|i| v[i]))
}

/// Solver parameters from the run config, with `SolverConfig::new`
/// defaults for unset fields.
fn solver_config(cfg: &RunConfig, eps: f64, n: usize) -> Result<SolverConfig<f64>, CliError> {
    let mut s = SolverConfig::new(eps, n)?;
    if let Some(k) = cfg.k {
        s.k = k;
    }
    if let Some(m) = cfg.axis_count {
        s.axis_count = m;
    }
    if let Some(q) = cfg.quad_order {
        s.quad_order = q;
    }
    if let Some(t) = cfg.tol_iter {
        s.tol_iter = t;
    }
    if let Some(m) = cfg.max_iter {
        s.max_iter = m;
    }
    if let Some(h) = cfg.grid_h {
        s.grid_h = h;
    }
    s.validate()?;
    Ok(s)
}

fn field_meta(command: &str, effective: &Value) -> Value {
    json!({ "command": command, "config": effective })
}

fn write_field<const N: usize>(
    out: &Outputs,
    field: &ValueField<f64, N>,
    cfg: &SolverConfig<f64>,
    meta: Value,
) -> Result<PathBuf, CliError> {
    let header = field.header(cfg.eps, cfg.k, meta);
    out.write_with(FIELD_FILE, |w| field.write_to(&header, w))
}

fn field_dim(path: &Path) -> Result<usize, CliError> {
    let file = File::open(path).map_err(|e| usage(format!("cannot open field {}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| usage(format!("cannot read field {}: {e}", path.display())))?;
    let header: FieldHeader =
        serde_json::from_str(&first).map_err(|e| usage(format!("bad field header in {}: {e}", path.display())))?;
    Ok(header.dim)
}

fn read_field<const N: usize>(path: &Path) -> Result<(FieldHeader, ValueField<f64, N>), CliError> {
    let file = File::open(path).map_err(|e| usage(format!("cannot open field {}: {e}", path.display())))?;
    ValueField::read_from(BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- solve

pub fn solve(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let spec = require_domain(cfg)?;
    by_dim!(spec.dim(), solve_n(cfg, spec, out))
}

fn solve_n<const N: usize>(cfg: &RunConfig, spec: &DomainSpec, out: &Path) -> Result<(), CliError> {
    let domain = Domain::<f64, N>::from_spec(spec)?;
    let eps = cfg.eps.ok_or_else(|| usage("solve needs eps"))?;
    let solver = solver_config(cfg, eps, N)?;
    let effective = json!({ "dim": N, "domain": spec, "solver": solver.to_json() });
    let start = Instant::now();
    let (sol, converged) = match value_iteration(&domain, &solver) {
        Ok(s) => (s, true),
        Err(SolveError::NonConvergence(s)) => (*s, false),
        Err(SolveError::Failed(e)) => return Err(e.into()),
    };
    let wall = start.elapsed().as_secs_f64();
    let residual = dpp_residual(&sol.field, &solver)?;
    let outputs = Outputs::new(out);
    write_field(&outputs, &sol.field, &solver, field_meta("solve", &effective))?;
    outputs.write_json(
        "solve_manifest.json",
        &json!({
            "config": effective,
            "field": FIELD_FILE,
            "converged": converged,
            "iterations": sol.iterations,
            "increment": sol.increment,
            "residual": residual,
            "wall_time_s": wall,
        }),
    )?;
    if converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "increment {} after {} iterations (tol_iter {}); partial field written",
            sol.increment, sol.iterations, solver.tol_iter
        )))
    }
}

// ------------------------------------------------------------- simulate

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let dim = match (&cfg.domain, &cfg.field) {
        (Some(d), _) => d.dim(),
        (None, Some(f)) => field_dim(f)?,
        (None, None) => return Err(usage("simulate needs a domain or a field")),
    };
    by_dim!(dim, simulate_n(cfg, out))
}

struct SimSetup<const N: usize> {
    game: Game<f64, N>,
    field: Option<ValueField<f64, N>>,
    solver: SolverConfig<f64>,
    points: Vec<[f64; N]>,
    z: [f64; N],
    paul: StrategySpec,
    carol: StrategySpec,
    mode: SimMode,
    n: u64,
    seed: u64,
    traces: u64,
    effective: Value,
}

fn simulate_setup<const N: usize>(cfg: &RunConfig) -> Result<SimSetup<N>, CliError> {
    let mode = cfg.mode.unwrap_or(SimMode::Estimate);
    let paul = cfg.paul.clone().unwrap_or(StrategySpec::Gradient);
    let carol = match mode {
        SimMode::Estimate => cfg.carol.clone().unwrap_or(StrategySpec::Gradient),
        SimMode::Diagnostic => StrategySpec::Radial,
    };
    let field = match &cfg.field {
        Some(p) => Some(read_field::<N>(p)?),
        None if paul.needs_field() || carol.needs_field() => {
            return Err(usage(format!("strategies {paul} and {carol} need a field artifact")));
        }
        None => None,
    };
    let spec = match (&cfg.domain, &field) {
        (Some(d), _) => d.clone(),
        (None, Some((h, _))) => h.domain.clone(),
        (None, None) => return Err(usage("simulate needs a domain or a field")),
    };
    let domain = Domain::<f64, N>::from_spec(&spec)?;
    if let Some((_, f)) = &field {
        if f.domain() != &domain {
            return Err(usage("the field was computed on a different domain"));
        }
    }
    let eps = cfg
        .eps
        .or(field.as_ref().map(|(h, _)| h.eps))
        .ok_or_else(|| usage("simulate needs eps"))?;
    let mut solver_cfg = cfg.clone();
    if solver_cfg.k.is_none() {
        solver_cfg.k = field.as_ref().map(|(h, _)| h.k);
    }
    if solver_cfg.grid_h.is_none() {
        solver_cfg.grid_h = field.as_ref().map(|(h, _)| h.h.min(eps));
    }
    let solver = solver_config(&solver_cfg, eps, N)?;
    let mut game = Game::new(domain, eps, solver.k)?;
    if let Some(r) = cfg.max_rounds {
        game = game.with_max_rounds(r);
    }
    let center = *domain.center();
    let points = match &cfg.points {
        Some(ps) if ps.is_empty() => return Err(usage("points must not be empty")),
        Some(ps) => ps.iter().map(|p| point::<N>(p, "point")).collect::<Result<Vec<_>, _>>()?,
        None => vec![center],
    };
    if let Some(p) = points.iter().find(|p| !domain.contains(p)) {
        return Err(usage(format!("starting point {p:?} lies outside the domain")));
    }
    let z = match &cfg.z {
        Some(z) => point::<N>(z, "z")?,
        None => center,
    };
    for s in [&paul, &carol] {
        if let StrategySpec::Fixed(a) = s {
            Direction::<f64, N>::normalize(point::<N>(a, "fixed axis")?)?;
        }
    }
    let n = cfg.n_episodes.unwrap_or(DEFAULT_EPISODES);
    if n < 2 {
        return Err(usage("n_episodes must be at least 2"));
    }
    let seed = cfg.seed.unwrap_or(0);
    let traces = cfg.traces.unwrap_or(0);
    let effective = json!({
        "dim": N,
        "domain": spec,
        "eps": eps,
        "k": solver.k,
        "theta": game.theta(),
        "mode": mode,
        "paul": paul,
        "carol": carol,
        "z": z.to_vec(),
        "points": points.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
        "n_episodes": n,
        "seed": seed,
        "traces": traces,
        "max_rounds": cfg.max_rounds,
        "field": cfg.field,
        "solver": solver.to_json(),
    });
    Ok(SimSetup {
        game,
        field: field.map(|(_, f)| f),
        solver,
        points,
        z,
        paul,
        carol,
        mode,
        n,
        seed,
        traces,
        effective,
    })
}

fn build_strategy<'a, const N: usize>(
    spec: &StrategySpec,
    player: Player,
    setup: &'a SimSetup<N>,
    op: Option<&'a DppOperator<f64, N>>,
) -> Result<Box<dyn Strategy<f64, N> + 'a>, CliError> {
    let need_field = || setup.field.as_ref().ok_or_else(|| usage(format!("strategy {spec} needs a field")));
    Ok(match spec {
        StrategySpec::Gradient => Box::new(gradient_cap_strategy(need_field()?, player)),
        StrategySpec::Dpp => {
            let op = op.ok_or_else(|| usage("dpp strategy needs solver parameters"))?;
            Box::new(dpp_policy_strategy(op, need_field()?, player))
        }
        StrategySpec::Mirror => Box::new(mirror_strategy(setup.z)),
        StrategySpec::Aligned => Box::new(aligned_strategy(setup.z)),
        StrategySpec::Radial => Box::new(radial_exit_strategy(setup.z)),
        StrategySpec::Fixed(a) => Box::new(fixed_axis_strategy(Direction::normalize(point::<N>(a, "fixed axis")?)?)),
    })
}

/// Master seed of point `i`: `seed + i`.
fn point_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

fn simulate_n<const N: usize>(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let setup = simulate_setup::<N>(cfg)?;
    let op = if matches!(setup.paul, StrategySpec::Dpp) || matches!(setup.carol, StrategySpec::Dpp) {
        Some(DppOperator::new(&setup.solver)?)
    } else {
        None
    };
    let sp = build_strategy(&setup.paul, Player::Paul, &setup, op.as_ref())?;
    let sc = build_strategy(&setup.carol, Player::Carol, &setup, op.as_ref())?;
    let outputs = Outputs::new(out);
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (i, x) in setup.points.iter().enumerate() {
        let seed = point_seed(setup.seed, i);
        match setup.mode {
            SimMode::Estimate => {
                let e = estimate_value(x, sp.as_ref(), sc.as_ref(), setup.n, &setup.game, seed)?;
                rows.push(json!({ "point": x.to_vec(), "seed": seed, "estimate": e }));
            }
            SimMode::Diagnostic => {
                let r = martingale_diagnostic(x, &setup.z, sp.as_ref(), setup.n, &setup.game, seed)?;
                if !r.pass() {
                    failures.push(format!("martingale check at {x:?}"));
                }
                rows.push(json!({ "point": x.to_vec(), "seed": seed, "pass": r.pass(), "report": r }));
            }
        }
    }
    let (name, key) = match setup.mode {
        SimMode::Estimate => ("estimate.json", "estimates"),
        SimMode::Diagnostic => ("diagnostic.json", "reports"),
    };
    outputs.write_json(name, &json!({ "config": setup.effective, key: rows }))?;
    if setup.traces > 0 {
        outputs.write_with("traces.jsonl", |w| {
            for (i, x) in setup.points.iter().enumerate() {
                let seed = point_seed(setup.seed, i);
                for e in 0..setup.traces.min(setup.n) {
                    let ep = play_episode(x, sp.as_ref(), sc.as_ref(), &setup.game, seed, e)
                        .map_err(|err| std::io::Error::other(err.to_string()))?;
                    serde_json::to_writer(&mut *w, &ep.to_json())?;
                    w.write_all(b"\n")?;
                }
            }
            Ok(())
        })?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failures))
    }
}

// --------------------------------------------------------------- verify

pub fn verify(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let dim = cfg.domain.as_ref().map_or(2, |d| d.dim());
    by_dim!(dim, verify_n(cfg, out))
}

/// One named check of `verify`.
struct Check {
    name: &'static str,
    pass: bool,
    details: Value,
}

fn nonincreasing(errors: &[f64]) -> bool {
    errors.windows(2).all(|w| w[1] <= w[0] + 1e-15)
}

fn check_band_lemma<const N: usize>(eps: &[f64], order: usize) -> Result<Check, CliError> {
    type F<const N: usize> = fn(&[f64; N]) -> f64;
    let funcs: [(&str, F<N>); 4] = [
        ("one", |_| 1.0),
        ("v_last", |v| v[N - 1]),
        ("v1_squared", |v| v[0] * v[0]),
        ("bump", |v| {
            let d = (0..N).map(|i| (v[i] - if i == 0 { 1.0 } else { 0.0 }).powi(2)).sum::<f64>();
            (-d).exp()
        }),
    ];
    let mut pass = true;
    let mut rows = Vec::new();
    for (fname, f) in funcs {
        for fam in LemmaFamily::ALL {
            let r = verify_band_lemma::<f64, N, _>(f, eps, fam, order)?;
            let errors: Vec<f64> = r.iter().map(|x| x.error).collect();
            let ok = nonincreasing(&errors) && errors.last().is_some_and(|&e| e < LEMMA_TOL);
            // Without the drift hypothesis the conclusion need not hold.
            let required = r.iter().all(|x| x.hypothesis_ok);
            pass &= ok || !required;
            rows.push(json!({ "f": fname, "family": fam, "pass": ok, "required": required, "rows": r }));
        }
    }
    Ok(Check { name: "band_lemma", pass, details: json!({ "eps": eps, "order": order, "cases": rows }) })
}

fn random_direction<const N: usize>(rng: &mut ChaCha8Rng) -> Result<Direction<f64, N>, CliError> {
    loop {
        let v: [f64; N] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n2 = norm_sq(&v);
        if n2 > 1e-4 && n2 <= 1.0 {
            return Ok(Direction::normalize(v)?);
        }
    }
}

fn check_band_identity<const N: usize>(rng: &mut ChaCha8Rng) -> Result<Check, CliError> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: [f64; N] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let eps = rng.random_range(1e-3..0.5);
        let a = random_direction::<N>(rng)?;
        let theta = game_theta(eps, N)?;
        let band = intersect_caps(&Cap::new(a, theta)?, &Cap::new(a.neg(), theta)?)?;
        let avg = region_average(
            &band,
            |v| {
                let y: [f64; N] = std::array::from_fn(|i| x[i] + eps * v[i]);
                norm_sq(&y)
            },
            16,
        )?;
        worst = worst.max((avg - norm_sq(&x) - eps * eps).abs());
    }
    Ok(Check { name: "band_identity", pass: worst < 1e-10, details: json!({ "cases": 100, "max_error": worst }) })
}

fn check_operator_forms<const N: usize>(rng: &mut ChaCha8Rng, count: usize) -> Result<Check, CliError> {
    let mut worst: f64 = 0.0;
    let mut evaluated = 0;
    while evaluated < count {
        let mut h = [[0.0; N]; N];
        for i in 0..N {
            for j in i..N {
                h[i][j] = rng.random_range(-3.0..3.0);
                h[j][i] = h[i][j];
            }
        }
        let q = Quadratic { h, b: std::array::from_fn(|_| rng.random_range(-2.0..2.0)) };
        let x: [f64; N] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        match mc_operator_residual(&q, &x) {
            Ok((f1, f2)) => {
                worst = worst.max((f1 - f2).abs());
                evaluated += 1;
            }
            Err(curvature_game::Error::CriticalPoint { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Check { name: "operator_forms", pass: worst <= 1e-6, details: json!({ "cases": count, "max_difference": worst }) })
}

/// `⨍_{<v, x̂> = 0} ½ <D²u v, v> = -K L` for the ball oracle, which holds
/// exactly when `K = C(N)`.
fn check_oracle_identity<const N: usize>(rng: &mut ChaCha8Rng, k: f64) -> Result<Check, CliError> {
    let l = 1.0;
    let hess: [[f64; N]; N] = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { -l / (N as f64 - 1.0) } else { 0.0 }));
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let xhat = random_direction::<N>(rng)?;
        let avg = equator_average(&xhat, |v| 0.5 * quad_form(&hess, v), 64);
        worst = worst.max((avg + k * l).abs());
    }
    Ok(Check {
        name: "oracle_identity",
        pass: worst < 1e-8,
        details: json!({ "k": k, "c": constant_c::<f64>(N)?, "max_error": worst }),
    })
}

fn check_solver<const N: usize>(
    domain: &Domain<f64, N>,
    solver: &SolverConfig<f64>,
) -> Result<(Vec<Check>, Option<Solution<f64, N>>), CliError> {
    let sol = match value_iteration(domain, solver) {
        Ok(s) => s,
        Err(SolveError::NonConvergence(s)) => {
            let c = Check {
                name: "dpp_convergence",
                pass: false,
                details: json!({ "iterations": s.iterations, "increment": s.increment }),
            };
            return Ok((vec![c], None));
        }
        Err(SolveError::Failed(e)) => return Err(e.into()),
    };
    let residual = dpp_residual(&sol.field, solver)?;
    let r = domain.max_boundary_distance_from(&[0.0; N]).max(2.0);
    let w = ValueField::from_fn(sol.field.grid().clone(), *domain, |x| supersolution_bound(x, r, 2.0).unwrap_or(0.0));
    let (super_ok, super_worst) = check_dpp_supersolution(&w, solver)?;
    let below = sol.field.values().iter().zip(w.values()).all(|(u, w)| *u <= w + solver.tol_iter);
    let nonneg = sol.field.values().iter().all(|&u| u >= 0.0);
    let checks = vec![
        Check {
            name: "dpp_convergence",
            pass: residual < solver.tol_iter && nonneg,
            details: json!({ "iterations": sol.iterations, "increment": sol.increment, "residual": residual }),
        },
        Check {
            name: "dpp_comparison",
            pass: super_ok && below,
            details: json!({ "l": 2.0, "r": r, "supersolution_violation": super_worst, "solution_below": below }),
        },
    ];
    Ok((checks, Some(sol)))
}

fn check_oracle_convergence<const N: usize>(
    sol: &Solution<f64, N>,
    oracle: &BallOracle<f64, N>,
) -> Result<Check, CliError> {
    let row = study_row(&sol.field, oracle, &sol.config, sol.iterations, &[])?;
    let peak = ball_solution(&oracle.center, oracle);
    Ok(Check {
        name: "oracle_convergence",
        pass: row.sup_error <= ORACLE_REL_TOL * peak,
        details: json!({ "sup_error": row.sup_error, "oracle_max": peak, "relative_tol": ORACLE_REL_TOL }),
    })
}

fn verify_n<const N: usize>(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let spec = cfg.domain.clone().unwrap_or(DomainSpec::Ball { center: vec![0.0; N], radius: 1.0 });
    let domain = Domain::<f64, N>::from_spec(&spec)?;
    let eps = cfg.eps.unwrap_or(DEFAULT_VERIFY_EPS);
    let solver = solver_config(cfg, eps, N)?;
    let lemma_eps = cfg.lemma_eps.clone().unwrap_or(DEFAULT_LEMMA_EPS.to_vec());
    if lemma_eps.is_empty() || lemma_eps.iter().any(|&e| !(e > 0.0)) {
        return Err(usage("lemma_eps must be a nonempty list of positive numbers"));
    }
    let lemma_order = cfg.lemma_order.unwrap_or(48);
    let n_quadratics = cfg.n_quadratics.unwrap_or(100);
    let seed = cfg.seed.unwrap_or(0);
    let effective = json!({
        "dim": N,
        "domain": spec,
        "solver": solver.to_json(),
        "lemma_eps": lemma_eps,
        "lemma_order": lemma_order,
        "n_quadratics": n_quadratics,
        "seed": seed,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![
        check_band_lemma::<N>(&lemma_eps, lemma_order)?,
        check_band_identity::<N>(&mut rng)?,
        check_operator_forms::<N>(&mut rng, n_quadratics)?,
        check_oracle_identity::<N>(&mut rng, solver.k)?,
    ];
    let (solver_checks, sol) = check_solver(&domain, &solver)?;
    checks.extend(solver_checks);
    if let (Some(sol), Ok(oracle)) = (&sol, BallOracle::for_domain(&domain)) {
        checks.push(check_oracle_convergence(sol, &oracle)?);
    }
    let failures: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.to_string()).collect();
    let report: Vec<Value> =
        checks.iter().map(|c| json!({ "name": c.name, "pass": c.pass, "details": c.details })).collect();
    Outputs::new(out).write_json(
        "verify.json",
        &json!({ "config": effective, "pass": failures.is_empty(), "checks": report }),
    )?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failures))
    }
}

// ------------------------------------------------------------- levelset

fn t_list(cfg: &RunConfig, default: &[f64]) -> Result<Vec<f64>, CliError> {
    let t = cfg.t_list.clone().unwrap_or(default.to_vec());
    if t.is_empty() || t.iter().any(|x| x.is_nan()) {
        return Err(usage("t_list must be a nonempty list of numbers"));
    }
    Ok(t)
}

pub fn levelset(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let paths: Vec<PathBuf> = match (&cfg.fields, &cfg.field) {
        (Some(fs), _) if !fs.is_empty() => fs.clone(),
        (_, Some(f)) => vec![f.clone()],
        _ => return Err(usage("levelset needs at least one field")),
    };
    let ts = t_list(cfg, &DEFAULT_T_LIST)?;
    let mut table = Vec::new();
    let mut points = Vec::new();
    let mut dims = Vec::new();
    for (fi, p) in paths.iter().enumerate() {
        let dim = field_dim(p)?;
        dims.push(dim);
        by_dim!(dim, levelset_rows(p, fi, &ts, &mut table, &mut points))?;
    }
    let width = dims.iter().copied().max().unwrap_or(2);
    let outputs = Outputs::new(out);
    outputs.write_with("levelset.csv", |w| {
        writeln!(w, "field,eps,t,mask_size,hausdorff")?;
        for r in &table {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    outputs.write_with("levelset_points.csv", |w| {
        let coords: Vec<String> = (0..width).map(|i| format!("x{i}")).collect();
        writeln!(w, "field,t,{}", coords.join(","))?;
        for r in &points {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Rows for one field. Levels without nodes (including `t < 0`) give an
/// empty mask and an infinite distance to a nonempty oracle set.
fn levelset_rows<const N: usize>(
    path: &Path,
    fi: usize,
    ts: &[f64],
    table: &mut Vec<String>,
    points: &mut Vec<String>,
) -> Result<(), CliError> {
    let (header, field) = read_field::<N>(path)?;
    let c = constant_c::<f64>(N)?;
    let oracle = match field.domain() {
        Domain::Ball { center, radius } => Some(BallOracle::new(*center, *radius, header.k / c)?),
        Domain::Ellipse { .. } => None,
    };
    for &t in ts {
        let mask = if t >= 0.0 {
            superlevel_set(&field, t)?
        } else {
            LevelSetMask::from_predicate(field.grid(), |_| false)
        };
        let dist = match &oracle {
            Some(o) => {
                let exact = match (t >= 0.0).then(|| o.level_radius(t)).flatten() {
                    Some(r) => LevelSetMask::ball(field.grid(), &o.center, r),
                    None if t < 0.0 => LevelSetMask::from_predicate(field.grid(), |x| field.domain().contains(x)),
                    None => LevelSetMask::from_predicate(field.grid(), |_| false),
                };
                cell(hausdorff_distance(&mask, &exact)?)
            }
            None => String::new(),
        };
        table.push(format!("{fi},{},{},{},{dist}", cell(header.eps), cell(t), mask.count()));
        for (k, &m) in mask.mask().iter().enumerate() {
            if m {
                let x = field.grid().node(k);
                let xs: Vec<String> = x.iter().map(|&v| cell(v)).collect();
                points.push(format!("{fi},{},{}", cell(t), xs.join(",")));
            }
        }
    }
    Ok(())
}

// ------------------------------------------------------------- converge

pub fn converge(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let spec = require_domain(cfg)?;
    by_dim!(spec.dim(), converge_n(cfg, spec, out))
}

fn converge_n<const N: usize>(cfg: &RunConfig, spec: &DomainSpec, out: &Path) -> Result<(), CliError> {
    let domain = Domain::<f64, N>::from_spec(spec)?;
    let oracle = BallOracle::for_domain(&domain)?;
    let eps_list = cfg.eps_list.clone().unwrap_or(DEFAULT_EPS_LIST.to_vec());
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(usage("eps_list must be nonempty and strictly decreasing"));
    }
    // Solver parameters refer to the first eps; grid_h scales like eps and
    // tol_iter like eps².
    let mut template = solver_config(cfg, eps_list[0], N)?;
    template.k = constant_c(N)?;
    for &e in &eps_list {
        let mut c = template;
        c.eps = e;
        c.grid_h = template.grid_h / template.eps * e;
        c.tol_iter = template.tol_iter / (template.eps * template.eps) * e * e;
        c.validate()?;
    }
    let ts = t_list(cfg, &[0.25])?;
    if ts.iter().any(|&t| t < 0.0) {
        return Err(usage("t_list entries must be nonnegative"));
    }
    let parallel = cfg.parallel.unwrap_or(false);
    let effective = json!({
        "dim": N,
        "domain": spec,
        "eps_list": eps_list,
        "t_list": ts,
        "parallel": parallel,
        "template": template.to_json(),
        "k": template.k,
        "c": constant_c::<f64>(N)?,
        "oracle_l": 1.0,
    });
    let fail = |e: SolveError<f64, N>| match e {
        SolveError::NonConvergence(s) => {
            CliError::NonConvergence(format!("eps {} stopped at increment {}", s.config.eps, s.increment))
        }
        SolveError::Failed(e) => e.into(),
    };
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    if parallel {
        rows = curvature_game::analysis::convergence_study(&domain, &eps_list, &template, &ts, true).map_err(fail)?;
    } else {
        for &e in &eps_list {
            let t0 = Instant::now();
            let r = curvature_game::analysis::convergence_study(&domain, &[e], &template, &ts, false).map_err(fail)?;
            rows.extend(r);
            timings.push(json!({ "eps": e, "seconds": t0.elapsed().as_secs_f64() }));
        }
    }
    let grids: Vec<Value> = rows
        .iter()
        .map(|r| {
            let g = curvature_game::Grid::covering(&domain, r.h, r.eps).map(|g| g.shape().to_vec());
            json!({ "eps": r.eps, "h": r.h, "shape": g.ok() })
        })
        .collect();
    let outputs = Outputs::new(out);
    outputs.write_with("convergence.csv", |w| {
        let hs: Vec<String> = ts.iter().map(|t| format!("hausdorff_t{t}")).collect();
        writeln!(w, "eps,h,iterations,sup_error,boundary_max,center_value,{}", hs.join(","))?;
        for r in &rows {
            let hd: Vec<String> = r.hausdorff.iter().map(|&(_, d)| cell(d)).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                cell(r.eps),
                cell(r.h),
                r.iterations,
                cell(r.sup_error),
                cell(r.boundary_max),
                cell(r.center_value),
                hd.join(",")
            )?;
        }
        Ok(())
    })?;
    let monotone = |f: &dyn Fn(&curvature_game::analysis::StudyRow) -> f64| {
        rows.windows(2).all(|w| f(&w[1]) < f(&w[0]))
    };
    outputs.write_json(
        "convergence_manifest.json",
        &json!({
            "config": effective,
            "oracle": { "center": oracle.center.to_vec(), "radius": oracle.radius, "l": oracle.l },
            "grids": grids,
            "rows": rows,
            "sup_error_decreasing": monotone(&|r| r.sup_error),
            "boundary_max_decreasing": monotone(&|r| r.boundary_max),
            "timings": timings,
            "wall_time_s": start.elapsed().as_secs_f64(),
        }),
    )?;
    Ok(())
}
