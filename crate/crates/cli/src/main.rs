//! `psi`: solve truss problems with phase-space iterations or Newton-Raphson,
//! run the 1D diagnostics, generate test trusses and validate weight files.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 iteration limit
//! reached without convergence.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use psi_core::analysis::{
    closed_form_iterate, friedrichs_rate, invert_law, serial_rate_experiment, ErrorFrame,
};
use psi_core::io::{load_problem, save_problem, save_results, trace_csv, trajectory_csv};
use psi_core::phase_space::{ps_distance, ElementState};
use psi_core::{
    generate_truss, nr_solve, serial_bars, LinearLaw, LoadRecipe, Material, MaterialLaw, NeuralLaw,
    NrConfig, PdKind, PhasePoint, PowerLaw, PsiError, PsiSolver, QuadraticPerturbedLaw, Solution,
    SolverConfig, TrussProblem,
};

#[derive(Parser)]
#[command(
    name = "psi",
    version,
    about = "Phase-space iteration solver for nonlinear trusses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and write the solution and iteration trace.
    Solve(SolveArgs),
    /// Run PSI and Newton-Raphson on the same problem and report both.
    Compare(CompareArgs),
    /// Iterate one bar and print the trajectory with its error bounds.
    #[command(name = "analyze-1d")]
    Analyze1d(AnalyzeArgs),
    /// Measure the convergence rate on serial linear bars.
    Rate(RateArgs),
    /// Write a generated grid truss as a problem file.
    GenTruss(GenArgs),
    /// Validate a neural-network weight file.
    NnCheck(NnCheckArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Psi,
    Nr,
}

#[derive(Args, Clone)]
struct PsiFlags {
    /// Distance constant as a multiple of the zero-strain modulus.
    #[arg(long)]
    c_over_y0: Option<f64>,
    /// Relative force-residual tolerance.
    #[arg(long)]
    tol1: Option<f64>,
    /// Relative phase-space step tolerance (default tol1/10).
    #[arg(long)]
    tol2: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Threads for the per-element projection.
    #[arg(long, env = "PSI_WORKERS", default_value_t = 1)]
    workers: usize,
    /// derivative_free, newton or secant.
    #[arg(long)]
    pd_method: Option<PdKind>,
    /// Newton-Raphson weight of the current tangent.
    #[arg(long, default_value_t = 0.8)]
    damping: f64,
}

impl PsiFlags {
    fn psi_config(&self, problem: &TrussProblem) -> SolverConfig {
        let mut cfg = SolverConfig::from_settings(&problem.solver);
        if let Some(v) = self.c_over_y0 {
            cfg.c_over_y0 = v;
        }
        if let Some(v) = self.tol1 {
            cfg.tol1 = v;
        }
        if self.tol2.is_some() {
            cfg.tol2 = self.tol2;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        if let Some(k) = self.pd_method {
            cfg.pd.kind = k;
        }
        cfg.workers = self.workers;
        cfg
    }

    fn nr_config(&self, problem: &TrussProblem) -> NrConfig {
        let psi = self.psi_config(problem);
        NrConfig {
            damping: self.damping,
            tol: psi.tol1,
            max_iter: self
                .max_iter
                .or(problem.solver.max_iter)
                .unwrap_or(NrConfig::default().max_iter),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Psi)]
    method: Method,
    #[command(flatten)]
    flags: PsiFlags,
    /// Solution file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Iteration trace (CSV).
    #[arg(long)]
    trace: PathBuf,
    /// Per-element phase-space trajectory (CSV, PSI only).
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    problem: PathBuf,
    #[command(flatten)]
    flags: PsiFlags,
    /// Summary report (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Residual against iteration for both solvers (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LawKind {
    Linear,
    Quadratic,
    Power,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum, default_value_t = LawKind::Linear)]
    law: LawKind,
    /// Zero-strain modulus.
    #[arg(long, default_value_t = 1.0)]
    y: f64,
    /// Distance constant.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Stress carried by the bar.
    #[arg(long, default_value_t = 1.0)]
    f_over_a: f64,
    /// Quadratic coefficient for the quadratic law.
    #[arg(long, default_value_t = 0.05)]
    k: f64,
    /// Exponent for the power law.
    #[arg(long, default_value_t = 1e-4)]
    p: f64,
    #[arg(long, default_value_t = 40)]
    iters: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Frame {
    Raw,
    Translated,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    y: f64,
    #[arg(long)]
    c: f64,
    /// Number of bars in series.
    #[arg(long, default_value_t = 1)]
    ne: usize,
    /// Ratio of the longest to the shortest bar.
    #[arg(long, default_value_t = 1.0)]
    len_ratio: f64,
    #[arg(long, default_value_t = 30)]
    iters: usize,
    /// `translated` measures the error without cancellation against the solution.
    #[arg(long, value_enum, default_value_t = Frame::Translated)]
    frame: Frame,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Recipe {
    Benchmark,
    Cantilever,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 5)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    /// Bay width in m.
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    /// Bar area in m^2.
    #[arg(long, default_value_t = 1e-4)]
    area: f64,
    #[arg(long, value_enum, default_value_t = Recipe::Benchmark)]
    recipe: Recipe,
    /// Multiplier on the benchmark forces.
    #[arg(long, default_value_t = 0.1)]
    force_scale: f64,
    /// Imposed settlement in m for the benchmark recipe.
    #[arg(long, default_value_t = 1e-3)]
    imposed: f64,
    /// Tip force in N for the cantilever recipe.
    #[arg(long, default_value_t = -1000.0)]
    tip_force: f64,
    #[arg(long, value_enum, default_value_t = LawKind::Power)]
    material: LawKind,
    #[arg(long, default_value_t = 2e11)]
    y0: f64,
    #[arg(long, default_value_t = 1e-4)]
    p: f64,
    #[arg(long, default_value_t = 5.0)]
    k: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NnCheckArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Allowed reference mismatch in normalized stress units.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Required number of trainable parameters.
    #[arg(long)]
    expect_params: Option<usize>,
}

/// Failure with the exit code to report.
struct Failure {
    code: u8,
    message: String,
}

impl From<PsiError> for Failure {
    fn from(e: PsiError) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure {
            code: 1,
            message: format!("{}: {e}", p.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn status(solution: &Solution) -> Result<(), Failure> {
    if solution.converged() {
        Ok(())
    } else {
        Err(Failure {
            code: 2,
            message: format!("no convergence within {} iterations", solution.iterations),
        })
    }
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    let problem = load_problem(&args.problem)?;
    let solution = match args.method {
        Method::Psi => {
            let cfg = args.flags.psi_config(&problem);
            let solver = PsiSolver::new(&problem, cfg)?;
            match &args.trajectory {
                Some(path) => {
                    let mut points: Vec<PhasePoint> = Vec::new();
                    let s = solver.run_with(|z| points.push(z.clone()))?;
                    write_output(Some(path), &trajectory_csv(&points))?;
                    s
                }
                None => solver.run()?,
            }
        }
        Method::Nr => nr_solve(&problem, &args.flags.nr_config(&problem))?,
    };
    save_results(&args.out, &solution)?;
    write_output(Some(&args.trace), &trace_csv(&solution.trace))?;
    status(&solution)
}

#[derive(Serialize)]
struct CompareRow {
    solver: &'static str,
    iterations: usize,
    stop_reason: String,
    final_residual: f64,
    wall_ms: f64,
    t_pe_ms: f64,
    t_pd_ms: f64,
}

fn compare(args: CompareArgs) -> Result<(), Failure> {
    let problem = load_problem(&args.problem)?;
    let t0 = Instant::now();
    let psi = psi_core::psi_solve(&problem, &args.flags.psi_config(&problem))?;
    let t1 = Instant::now();
    let nr = nr_solve(&problem, &args.flags.nr_config(&problem))?;
    let t2 = Instant::now();

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = psi.u.iter().zip(&nr.u).map(|(a, b)| a - b).collect();
    let rel = norm(&diff) / norm(&nr.u);

    let row = |name, s: &Solution, wall: f64| CompareRow {
        solver: name,
        iterations: s.iterations,
        stop_reason: format!("{:?}", s.stop_reason),
        final_residual: s.final_residual(),
        wall_ms: wall,
        t_pe_ms: s.trace.iter().map(|r| r.t_pe_ms).sum(),
        t_pd_ms: s.trace.iter().map(|r| r.t_pd_ms).sum(),
    };
    let rows = [
        row("psi", &psi, (t1 - t0).as_secs_f64() * 1e3),
        row("nr", &nr, (t2 - t1).as_secs_f64() * 1e3),
    ];
    let mut out = String::from(
        "solver,iterations,stop_reason,final_residual,wall_ms,t_pe_ms,t_pd_ms,displacement_rel_diff\n",
    );
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:.3},{:.3},{:.3},{:e}",
            r.solver,
            r.iterations,
            r.stop_reason,
            r.final_residual,
            r.wall_ms,
            r.t_pe_ms,
            r.t_pd_ms,
            rel
        );
    }
    write_output(Some(&args.out), &out)?;
    if let Some(path) = &args.trace {
        let mut t = String::from("solver,iter,residual_rel\n");
        for (name, s) in [("psi", &psi), ("nr", &nr)] {
            for r in &s.trace {
                let _ = writeln!(t, "{name},{},{:e}", r.iter, r.residual_rel);
            }
        }
        write_output(Some(path), &t)?;
    }
    status(&psi).and(status(&nr))
}

fn analyze_1d(args: AnalyzeArgs) -> Result<(), Failure> {
    let material: Material = match args.law {
        LawKind::Linear => LinearLaw::new(args.y)?.into(),
        LawKind::Quadratic => QuadraticPerturbedLaw::new(args.y, args.k)?.into(),
        LawKind::Power => PowerLaw::new(args.y, args.p)?.into(),
    };
    let y0 = material.zero_strain_modulus();
    let eps_star = invert_law(&material, args.f_over_a, 1e-15)?;
    let beta = friedrichs_rate(material.tangent(eps_star), args.c);
    let problem = serial_bars(&[1.0], 1.0, args.f_over_a, material)?;
    let cfg = SolverConfig {
        c_over_y0: args.c / y0,
        tol1: f64::MIN_POSITIVE,
        tol2: Some(f64::MIN_POSITIVE),
        max_iter: usize::MAX,
        ..SolverConfig::default()
    };
    let mut solver = PsiSolver::new(&problem, cfg)?;
    let exact = PhasePoint::new(vec![ElementState::new(eps_star, args.f_over_a)]);
    let e0 = ps_distance(solver.current(), &exact, solver.metric())?;

    let mut out =
        String::from("n,strain,stress,error,geometric_bound,closed_strain,closed_stress\n");
    for n in 0..=args.iters {
        if n > 0 {
            solver.step()?;
        }
        let s = solver.current().states[0];
        let err = ps_distance(solver.current(), &exact, solver.metric())?;
        let closed = match args.law {
            LawKind::Linear => {
                let z = closed_form_iterate(args.y, args.c, args.f_over_a, 0.0, 0.0, n);
                format!("{:e},{:e}", z.strain, z.stress)
            }
            _ => ",".to_string(),
        };
        let _ = writeln!(
            out,
            "{n},{:e},{:e},{:e},{:e},{closed}",
            s.strain,
            s.stress,
            err,
            e0 * beta.powi(n as i32)
        );
    }
    write_output(args.out.as_deref(), &out)
}

fn rate(args: RateArgs) -> Result<(), Failure> {
    let frame = match args.frame {
        Frame::Raw => ErrorFrame::Raw,
        Frame::Translated => ErrorFrame::Translated,
    };
    let exp = serial_rate_experiment(args.y, args.c, args.ne, args.len_ratio, args.iters, frame)?;
    let mut out = String::from("n,error,beta_hat,friedrichs\n");
    for (n, e) in exp.errors.iter().enumerate() {
        let _ = writeln!(
            out,
            "{n},{e:e},{:.15e},{:.15e}",
            exp.estimate.beta_hat, exp.friedrichs
        );
    }
    write_output(args.out.as_deref(), &out)
}

fn gen_truss(args: GenArgs) -> Result<(), Failure> {
    let material: Material = match args.material {
        LawKind::Linear => LinearLaw::new(args.y0)?.into(),
        LawKind::Quadratic => QuadraticPerturbedLaw::new(args.y0, args.k)?.into(),
        LawKind::Power => PowerLaw::new(args.y0, args.p)?.into(),
    };
    let recipe = match args.recipe {
        Recipe::Benchmark => LoadRecipe::Benchmark {
            force_scale: args.force_scale,
            imposed_displacement: args.imposed,
        },
        Recipe::Cantilever => LoadRecipe::Cantilever {
            tip_force: args.tip_force,
        },
    };
    let problem = generate_truss(
        args.rows,
        args.cols,
        args.spacing,
        args.area,
        &recipe,
        material,
    )?;
    save_problem(&args.out, &problem)?;
    Ok(())
}

#[derive(Serialize)]
struct NnCheckOutput {
    path: String,
    layer_widths: Vec<usize>,
    parameter_count: usize,
    reference_count: usize,
    max_reference_error: f64,
    worst_sample: Option<usize>,
    stress_at_zero: f64,
    noise_floor: Option<f64>,
    passed: bool,
    problems: Vec<String>,
}

fn nn_check(args: NnCheckArgs) -> Result<(), Failure> {
    let law = NeuralLaw::load(&args.weights)?;
    let report = law.check(args.tol);
    let mut problems = Vec::new();
    if report.reference_count == 0 {
        problems.push("no reference samples".to_string());
    }
    if !report.passed() {
        let i = report.worst_sample.unwrap_or(0);
        let [e, s] = law.reference()[i];
        problems.push(format!(
            "reference sample {i} (strain {e:e}, stress {s:e}) off by {:e} > {:e}",
            report.max_reference_error, args.tol
        ));
    }
    if let Some(n) = args.expect_params {
        if n != report.parameter_count {
            problems.push(format!(
                "expected {n} parameters, found {}",
                report.parameter_count
            ));
        }
    }
    let at_zero = law.eval(0.0);
    if let Some(floor) = law.noise_floor() {
        if at_zero.abs() > floor {
            problems.push(format!(
                "|m(0)| = {:e} exceeds the declared noise floor {floor:e}",
                at_zero.abs()
            ));
        }
    }
    let out = NnCheckOutput {
        path: args.weights.display().to_string(),
        layer_widths: report.layer_widths.clone(),
        parameter_count: report.parameter_count,
        reference_count: report.reference_count,
        max_reference_error: report.max_reference_error,
        worst_sample: report.worst_sample,
        stress_at_zero: at_zero,
        noise_floor: law.noise_floor(),
        passed: problems.is_empty(),
        problems: problems.clone(),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&out).expect("report serializes")
    );
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: problems.join("; "),
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Compare(a) => compare(a),
        Command::Analyze1d(a) => analyze_1d(a),
        Command::Rate(a) => rate(a),
        Command::GenTruss(a) => gen_truss(a),
        Command::NnCheck(a) => nn_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
