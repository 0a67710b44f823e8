use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use mixcon::cq::{
    audit_implication_chain, check_global_eb_structure, check_neighborhood_cq, check_pointwise_cq, check_structural_calmness, estimate_error_bound, CqKind,
    ErrorBoundOptions, NeighborhoodOptions,
};
use mixcon::expr::EvalPoint;
use mixcon::localopt::AlOptions;
use mixcon::model::{load_problem, ProblemSpec, Trajectory};
use mixcon::ocp::{solve_al, transcribe};
use mixcon::setmap::{certify_gamma_pl, check_tempered_growth, estimate_bounded_slope, estimate_pl_modulus, RadiusProfile, SamplingOptions};
use mixcon::verify::{certify, NcOptions, Verdict};
use mixcon::Error;

const EXIT_OK: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_BEST_EFFORT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "mixcon", version, about = "Constraint qualification analysis, transcription solves and necessary-condition checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate constraint qualifications at one point (always exits 0 on valid input).
    AnalyzeCq(AnalyzeArgs),
    /// Solve the forward-Euler transcription (exit 3 when only a best-effort iterate is found).
    Solve(SolveArgs),
    /// Reconstruct multipliers and check the necessary conditions (exit 1 on violation).
    Verify(VerifyArgs),
    /// Check the implication chain between CQs on random instances (exit 1 on any violation).
    Audit(AuditArgs),
    /// Estimate velocity-map moduli near a point or along a trajectory.
    EstimateSetmap(SetmapArgs),
}

#[derive(Args, Debug)]
struct PointArgs {
    /// State, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Control, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    u: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t: f64,
    /// Take the point from this trajectory node instead of --x/--u.
    #[arg(long)]
    node: Option<usize>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[command(flatten)]
    point: PointArgs,
    /// Comma-separated CQ names; default is every check.
    #[arg(long)]
    cq: Option<String>,
    /// Neighborhood radius for sampling-based checks.
    #[arg(long, default_value_t = 1e-3)]
    radius: f64,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "tol-act", default_value_t = 1e-6)]
    tol_act: f64,
    #[arg(long = "tol-rank", default_value_t = 1e-8)]
    tol_rank: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Optional start trajectory.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long = "N", default_value_t = 1000)]
    intervals: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "tol-feas", default_value_t = 1e-6)]
    tol_feas: f64,
    #[arg(long = "tol-opt", default_value_t = 1e-6)]
    tol_opt: f64,
    /// Trajectory output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Convergence report path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    /// Constant Weierstrass radius; defaults to the problem's `R`.
    #[arg(long)]
    radius: Option<f64>,
    /// Random comparison controls per node.
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "tol-act")]
    tol_act: Option<f64>,
    #[arg(long = "tol-residual", default_value_t = 1e-8)]
    tol_residual: f64,
    #[arg(long = "tol-weierstrass", default_value_t = 1e-6)]
    tol_weierstrass: f64,
    /// Skip the CQ checks along the trajectory.
    #[arg(long)]
    no_cq: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SetmapArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[command(flatten)]
    point: PointArgs,
    /// State neighborhood radius ε.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Velocity radius; defaults to the problem's `R`.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction λ in the tempered growth condition.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error carrying the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Solver(_)) { EXIT_BEST_EFFORT } else { EXIT_INPUT };
        Failure { code, message: e.to_string() }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_INPUT, message: message.into() }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))
}

fn read_problem(path: &Path) -> Result<ProblemSpec, Failure> {
    Ok(load_problem(&read(path)?)?)
}

fn read_trajectory(path: &Path, ps: &ProblemSpec) -> Result<Trajectory<f64>, Failure> {
    let tr = Trajectory::from_json_bytes(&read(path)?)?;
    tr.validate(ps)?;
    Ok(tr)
}

fn write_json<S: Serialize>(out: Option<&Path>, value: &S) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| input_error(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).map_err(|e| input_error(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(input_error(format!("{name} must be a positive finite number, got {v}")))
    }
}

fn parse_vec(text: &str, name: &str, len: usize) -> Result<Vec<f64>, Failure> {
    let v: Vec<f64> = if text.trim().is_empty() {
        Vec::new()
    } else {
        text.split(',').map(|s| s.trim().parse::<f64>().map_err(|e| input_error(format!("--{name}: {e}")))).collect::<Result<_, _>>()?
    };
    if v.len() != len {
        return Err(input_error(format!("--{name} needs {len} values, got {}", v.len())));
    }
    Ok(v)
}

fn resolve_point(ps: &ProblemSpec, tr: Option<&Trajectory<f64>>, pa: &PointArgs) -> Result<EvalPoint<f64>, Failure> {
    match (tr, pa.node) {
        (Some(tr), node) => {
            let k = node.unwrap_or(0);
            if k > tr.intervals() {
                return Err(input_error(format!("--node {k} exceeds the trajectory's {} intervals", tr.intervals())));
            }
            let u = tr.u[k.min(tr.intervals() - 1)].clone();
            Ok(EvalPoint::new(tr.grid[k], tr.x[k].clone(), u))
        }
        (None, Some(_)) => Err(input_error("--node requires --trajectory")),
        (None, None) => {
            let x = parse_vec(pa.x.as_deref().unwrap_or(""), "x", ps.n)?;
            let u = parse_vec(pa.u.as_deref().unwrap_or(""), "u", ps.m)?;
            Ok(EvalPoint::new(pa.t, x, u))
        }
    }
}

fn radius_profile(ps: &ProblemSpec, radius: Option<f64>, nodes: usize) -> Result<RadiusProfile, Failure> {
    let r = match radius {
        Some(r) => mixcon::model::Radius::Constant(r),
        None => ps.radius,
    };
    Ok(RadiusProfile::new(r, nodes)?)
}

fn parse_kinds(list: Option<&str>) -> Result<Vec<CqKind>, Failure> {
    let all = [
        CqKind::Nnamcq,
        CqKind::Wbcq,
        CqKind::Mfc,
        CqKind::Ccq,
        CqKind::Plicq,
        CqKind::Cpld,
        CqKind::Rcpld,
        CqKind::Crsc,
        CqKind::CalmStructural,
        CqKind::ErrorBoundEst,
        CqKind::GlobalEbStructural,
    ];
    let Some(list) = list else { return Ok(all.to_vec()) };
    list.split(',')
        .map(|name| {
            let name = name.trim().to_ascii_uppercase();
            all.iter().copied().find(|k| k.name() == name).ok_or_else(|| input_error(format!("unknown CQ `{name}`")))
        })
        .collect()
}

fn analyze(a: &AnalyzeArgs) -> Result<u8, Failure> {
    positive("--radius", a.radius)?;
    positive("--tol-act", a.tol_act)?;
    positive("--tol-rank", a.tol_rank)?;
    let ps = read_problem(&a.problem)?;
    let tr = a.trajectory.as_deref().map(|p| read_trajectory(p, &ps)).transpose()?;
    let z = resolve_point(&ps, tr.as_ref(), &a.point)?;
    ps.feasibility_residual(&z)?;
    let kinds = parse_kinds(a.cq.as_deref())?;
    let nb = NeighborhoodOptions { radius: a.radius, samples: a.samples, rank_tol: a.tol_rank, seed: a.seed };
    let eb = ErrorBoundOptions { samples: a.samples, seed: a.seed, ..ErrorBoundOptions::default() };
    let mut verdicts = Vec::new();
    let mut summary = serde_json::Map::new();
    for kind in kinds {
        let result = match kind {
            CqKind::Nnamcq | CqKind::Wbcq | CqKind::Mfc | CqKind::Ccq | CqKind::Plicq => check_pointwise_cq(kind, &ps, &z, a.tol_act),
            CqKind::Cpld | CqKind::Rcpld | CqKind::Crsc => check_neighborhood_cq(kind, &ps, &z, &nb),
            CqKind::CalmStructural => Ok(check_structural_calmness(&ps, &z)),
            CqKind::ErrorBoundEst => estimate_error_bound(&ps, &z, &eb),
            CqKind::GlobalEbStructural => check_global_eb_structure(&ps),
        };
        match result {
            Ok(v) => {
                summary.insert(kind.name().into(), json!(v.holds));
                verdicts.push(serde_json::to_value(&v).expect("verdict serializes"));
            }
            Err(e @ (Error::Infeasible(_) | Error::Dimension(_))) => return Err(e.into()),
            Err(e) => {
                summary.insert(kind.name().into(), Value::Null);
                verdicts.push(json!({"kind": kind.name(), "holds": null, "error": e.to_string()}));
            }
        }
    }
    let gamma = match certify_gamma_pl(&ps, &z, &eb) {
        Ok(c) => serde_json::to_value(&c).expect("certificate serializes"),
        Err(e) => json!({"error": e.to_string()}),
    };
    let report = json!({
        "point": {"t": z.t, "x": z.x, "u": z.u},
        "summary": summary,
        "gamma_pseudo_lipschitz": gamma,
        "verdicts": verdicts,
    });
    write_json(a.out.as_deref(), &report)?;
    Ok(EXIT_OK)
}

fn solve(a: &SolveArgs) -> Result<u8, Failure> {
    if a.intervals < 2 {
        return Err(input_error(format!("--N must be at least 2, got {}", a.intervals)));
    }
    positive("--tol-feas", a.tol_feas)?;
    positive("--tol-opt", a.tol_opt)?;
    let ps = read_problem(&a.problem)?;
    let start = a.trajectory.as_deref().map(|p| read_trajectory(p, &ps)).transpose()?;
    let nlp = transcribe(&ps, a.intervals)?;
    let opts = AlOptions { feas_tol: a.tol_feas, opt_tol: a.tol_opt, ..AlOptions::default() };
    let (tr, rep) = solve_al(&nlp, start.as_ref(), &opts)?;
    write_json(a.out.as_deref(), &tr)?;
    if let Some(p) = &a.report {
        write_json(Some(p), &rep)?;
    }
    if rep.best_effort {
        eprintln!("best effort: constraint violation {:e}, projected gradient {:e}", rep.violation, rep.projected_gradient);
        Ok(EXIT_BEST_EFFORT)
    } else {
        Ok(EXIT_OK)
    }
}

fn verify(a: &VerifyArgs) -> Result<u8, Failure> {
    positive("--tol-residual", a.tol_residual)?;
    positive("--tol-weierstrass", a.tol_weierstrass)?;
    if let Some(v) = a.tol_act {
        positive("--tol-act", v)?;
    }
    let ps = read_problem(&a.problem)?;
    let tr = read_trajectory(&a.trajectory, &ps)?;
    let radius = radius_profile(&ps, a.radius, tr.grid.len())?;
    let opts = NcOptions {
        eps_act: a.tol_act,
        tol_residual: a.tol_residual,
        tol_weierstrass: a.tol_weierstrass,
        control_samples: a.samples,
        seed: a.seed,
        check_cq: !a.no_cq,
        ..NcOptions::default()
    };
    let cert = certify(&ps, &tr, &radius, &opts)?;
    write_json(a.out.as_deref(), &cert)?;
    match cert.verdict {
        Verdict::Pass => Ok(EXIT_OK),
        Verdict::Fail => {
            eprintln!("necessary conditions violated: {}", cert.failing.join(", "));
            Ok(EXIT_VIOLATION)
        }
    }
}

fn audit(a: &AuditArgs) -> Result<u8, Failure> {
    let report = audit_implication_chain(a.seed, a.count);
    write_json(a.out.as_deref(), &report)?;
    Ok(if report.violations.is_empty() { EXIT_OK } else { EXIT_VIOLATION })
}

fn setmap(a: &SetmapArgs) -> Result<u8, Failure> {
    positive("--eps", a.eps)?;
    if let Some(r) = a.radius {
        positive("--radius", r)?;
    }
    if !(a.lambda > 0.0 && a.lambda < 1.0) {
        return Err(input_error(format!("--lambda must lie in (0, 1), got {}", a.lambda)));
    }
    let ps = read_problem(&a.problem)?;
    let tr = a.trajectory.as_deref().map(|p| read_trajectory(p, &ps)).transpose()?;
    let z = resolve_point(&ps, tr.as_ref(), &a.point)?;
    let opts = SamplingOptions { samples: a.samples, seed: a.seed, ..SamplingOptions::default() };
    let v = ps.dynamics(&z)?;
    let r = a.radius.unwrap_or_else(|| ps.radius.value());
    let pl = estimate_pl_modulus(&ps, z.t, &z.x, &v, a.eps, r, &z.u, &opts)?;
    let eb = ErrorBoundOptions { samples: a.samples, seed: a.seed, ..ErrorBoundOptions::default() };
    let gamma = certify_gamma_pl(&ps, &z, &eb).map(|c| serde_json::to_value(c).expect("serializes")).unwrap_or_else(|e| json!({"error": e.to_string()}));
    let mut report = json!({
        "point": {"t": z.t, "x": z.x, "u": z.u, "v": v},
        "pseudo_lipschitz": pl,
        "gamma_pseudo_lipschitz": gamma,
    });
    if let Some(tr) = &tr {
        let profile = radius_profile(&ps, a.radius, tr.grid.len())?;
        report["bounded_slope"] = match estimate_bounded_slope(&ps, tr, a.eps, &profile, &opts) {
            Ok(b) => serde_json::to_value(b).expect("serializes"),
            Err(e) => json!({"error": e.to_string()}),
        };
        report["tempered_growth"] = match check_tempered_growth(&ps, tr, a.eps, &profile, a.lambda, &opts) {
            Ok(t) => serde_json::to_value(t).expect("serializes"),
            Err(e) => json!({"error": e.to_string()}),
        };
    }
    write_json(a.out.as_deref(), &report)?;
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::AnalyzeCq(a) => analyze(a),
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
        Command::Audit(a) => audit(a),
        Command::EstimateSetmap(a) => setmap(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
