use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use phasekit_core::config::{read_grid_config, read_problem};
use phasekit_core::experiments::{
    emit_outputs, find_crossing, run_grid, theory_predictions, Crossing, ExperimentVariant, RunOptions,
};
use phasekit_core::geometry::{build_family, Objective, SparseSignal};
use phasekit_core::solvers::{check_success, solve_recovery, AdmmParams};
use phasekit_core::statdim::{
    closed_form_estimate, mc_statdim_exact, minimize_j, psi_value, EstimateMethod, MinimizeOptions, PsiVariant,
    StatDimEstimate, Uncertainty,
};
use phasekit_core::verify::run_checks;
use phasekit_core::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "phasekit",
    version,
    about = "Phase transitions of sparse recovery with priors"
)]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "PHASEKIT_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate ψ(ρ) and the minimizing τ over a grid of ρ.
    Curve {
        #[arg(long, value_enum)]
        variant: CurveVariant,
        /// `start:stop:count`, inclusive, with 0 ≤ start ≤ stop ≤ 1.
        #[arg(long, default_value = "0.01:0.99:99")]
        grid: String,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Statistical dimension of the descent cone at an s-sparse signal.
    Statdim {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value = "l1_plain", value_parser = parse_variant)]
        variant: ExperimentVariant,
        #[arg(long, value_enum, default_value = "closed_form")]
        method: Method,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve one recovery problem read from a key = value file.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 50_000)]
        max_iters: usize,
        /// Result destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run (or resume) a success-probability grid and write its outputs.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long, conflicts_with = "reset")]
        resume: bool,
        /// Discard any checkpoint in the output directory first.
        #[arg(long)]
        reset: bool,
        /// Stop after evaluating this many new cells.
        #[arg(long)]
        max_cells: Option<usize>,
    },
    /// Cross-check closed forms and fast paths against slow references.
    Verify {
        #[arg(long)]
        fast: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveVariant {
    Psi1,
    Psi2,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Method {
    ClosedForm,
    McRecipe,
    McExact,
}

fn parse_variant(s: &str) -> Result<ExperimentVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConverged { .. } | Error::InnerNotConverged { .. } => EXIT_NOT_CONVERGED,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

/// Names the file in I/O errors, which otherwise only carry the OS message.
fn with_path(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| match e {
        Error::Io(io) => usage(format!("{}: {io}", path.display())),
        other => other.into(),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        msg: msg.into(),
    }
}

type Outcome = Result<u8, Failure>;

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `start:stop:count` → `count` evenly spaced points, endpoints exact.
fn parse_rho_grid(spec: &str) -> Option<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return None;
    };
    let (a, b, count): (f64, f64, usize) = (a.parse().ok()?, b.parse().ok()?, c.parse().ok()?);
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b || count == 0 {
        return None;
    }
    if count == 1 {
        return (a == b).then(|| vec![a]);
    }
    let last = (count - 1) as f64;
    Some(
        (0..count)
            .map(|i| {
                if i + 1 == count {
                    b
                } else {
                    a + (b - a) * i as f64 / last
                }
            })
            .collect(),
    )
}

fn cmd_curve(variant: CurveVariant, grid: &str, out: Option<&Path>) -> Outcome {
    let rhos = parse_rho_grid(grid)
        .ok_or_else(|| usage(format!("bad --grid `{grid}` (expected start:stop:count within [0, 1])")))?;
    let variant = match variant {
        CurveVariant::Psi1 => PsiVariant::Psi1,
        CurveVariant::Psi2 => PsiVariant::Psi2,
    };
    let mut csv = String::from("rho,psi,tau_star\n");
    for rho in rhos {
        let (psi, tau) = psi_value(rho, variant)?;
        let _ = writeln!(csv, "{rho},{psi},{tau}");
    }
    write_or_print(out, &csv)?;
    Ok(0)
}

fn format_estimate(e: &StatDimEstimate) -> String {
    let tau: Vec<String> = e.tau_star.iter().map(|t| t.to_string()).collect();
    let method = match e.method {
        EstimateMethod::ClosedFormPsi1 | EstimateMethod::ClosedFormPsi2 => "closed_form",
        EstimateMethod::McRecipe => "mc_recipe",
        EstimateMethod::McExact => "mc_exact",
    };
    let mut s = format!("method = {method}\nvalue = {}\ntau_star = {}\n", e.value, tau.join(" "));
    match e.uncertainty {
        Uncertainty::Bracket { lower, upper } => {
            let _ = writeln!(s, "lower = {lower}\nupper = {upper}");
        }
        Uncertainty::StdError { se, samples } => {
            let _ = writeln!(s, "std_error = {se}\nsamples = {samples}");
        }
    }
    s
}

fn cmd_statdim(n: usize, s: usize, variant: ExperimentVariant, method: Method, samples: usize, seed: u64) -> Outcome {
    if s == 0 || s > n {
        return Err(usage(format!("need 1 <= s <= n, got s = {s}, n = {n}")));
    }
    let estimate = match method {
        Method::ClosedForm => closed_form_estimate(s, n, variant.bound_variant())?,
        Method::McRecipe | Method::McExact => {
            let mut values = vec![0.0; n];
            values[..s].fill(1.0);
            let signal = SparseSignal::new(values, variant.signal_variant())?;
            let family = build_family(&signal, Objective::L1, variant.priors())?;
            match method {
                Method::McRecipe => minimize_j(&family, samples, seed, &MinimizeOptions::default())?,
                _ => mc_statdim_exact(&family, samples, seed)?,
            }
        }
    };
    print!("{}", format_estimate(&estimate));
    Ok(0)
}

fn cmd_solve(problem: &Path, rho: f64, max_iters: usize, out: Option<&Path>) -> Outcome {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(usage(format!("--rho must be positive, got {rho}")));
    }
    if max_iters == 0 {
        return Err(usage("--max-iters must be positive"));
    }
    let (problem, x_star) = read_problem(problem).map_err(with_path(problem))?;
    let params = AdmmParams {
        rho,
        max_iters,
        ..AdmmParams::default()
    };
    let result = solve_recovery(&problem, &params)?;
    let x: Vec<String> = result.x_hat.iter().map(|v| v.to_string()).collect();
    let mut text = format!(
        "status = {}\niterations = {}\nobjective = {}\nprimal_residual = {}\ndual_residual = {}\npolished = {}\nx_hat = {}\n",
        if result.converged() { "converged" } else { "max_iters" },
        result.iterations,
        result.objective(),
        result.primal_residual,
        result.dual_residual,
        result.polished,
        x.join(" "),
    );
    if let Some(x_star) = x_star {
        let _ = writeln!(text, "success = {}", check_success(&result.x_hat, &x_star)?);
    }
    write_or_print(out, &text)?;
    if result.converged() {
        Ok(0)
    } else {
        eprintln!("phasekit: solver stopped at max_iters = {max_iters} without converging");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_grid(config: &Path, out: &Path, resume: bool, reset: bool, max_cells: Option<usize>) -> Outcome {
    let config = read_grid_config(config).map_err(with_path(config))?;
    fs::create_dir_all(out).map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
    let checkpoint = out.join("checkpoint.txt");
    if checkpoint.exists() && !resume && !reset {
        return Err(usage(format!(
            "{} exists; pass --resume to continue or --reset to start over",
            checkpoint.display()
        )));
    }
    let opts = RunOptions {
        checkpoint: Some(&checkpoint),
        reset,
        max_new_cells: max_cells,
    };
    let grid = run_grid(&config, &opts)?;
    let predictions = theory_predictions(&config)?;
    let files = emit_outputs(&grid, &predictions, out)?;
    for p in &predictions {
        let m50 = match find_crossing(&grid, p.s) {
            Ok(Crossing::At(m)) => format!("{m:.2}"),
            Ok(Crossing::BelowRange { min_m }) => format!("< {min_m}"),
            Ok(Crossing::AboveRange { max_m }) => format!("> {max_m}"),
            Err(_) => "n/a".into(),
        };
        println!("s = {:>4}  m_theory = {:>9.2}  m50 = {m50}", p.s, p.m_theory_upper);
    }
    println!("wrote {}", files.grid_csv.display());
    println!("wrote {}", files.curve_csv.display());
    println!("wrote {}", files.heatmap_svg.display());
    if !grid.complete {
        println!(
            "stopped after {} cells; rerun with --resume to continue",
            grid.cells.len()
        );
    }
    Ok(0)
}

fn cmd_verify(fast: bool) -> Outcome {
    let results = run_checks(fast);
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    Ok(if results.iter().all(|r| r.passed) {
        0
    } else {
        EXIT_VERIFY_FAILED
    })
}

fn run(cli: Cli) -> Outcome {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| usage(format!("cannot start worker pool: {e}")))?;
    }
    log::debug!("workers: {}", rayon::current_num_threads());
    match cli.command {
        Command::Curve { variant, grid, out } => cmd_curve(variant, &grid, out.as_deref()),
        Command::Statdim {
            n,
            s,
            variant,
            method,
            samples,
            seed,
        } => cmd_statdim(n, s, variant, method, samples, seed),
        Command::Solve {
            problem,
            rho,
            max_iters,
            out,
        } => cmd_solve(&problem, rho, max_iters, out.as_deref()),
        Command::Grid {
            config,
            out,
            resume,
            reset,
            max_cells,
        } => cmd_grid(&config, &out, resume, reset, max_cells),
        Command::Verify { fast } => cmd_verify(fast),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let text = e.to_string();
            eprintln!(
                "phasekit: {}",
                text.lines().next().unwrap_or("").trim_start_matches("error: ")
            );
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("phasekit: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
