//! `llqfp` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 failed
//! assumption or precondition, 4 property violation detected.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use llqfp::equilibrium::{
    best_response_ne, projected_gradient_ne, solve_affine_ne, GradientSettings,
};
use llqfp::experiment::{self, ExperimentConfig, Setup};
use llqfp::game::{AffineGame, MonotoneGame};
use llqfp::linalg;
use llqfp::mechanism::{perturb, DrawRecord};
use llqfp::privacy::{audit_mechanism, check_params, plan, MechanismInput};
use llqfp::trunc_laplace::{self, GENERATOR_ID};
use llqfp::{
    EquilibriumResult, Error, LqGame, NoiseParams, PerturbationDraw, PrivacyBudget, VERSION,
};
use nalgebra::DVector;

#[derive(Parser)]
#[command(
    name = "llqfp",
    version,
    about = "Laplace linear-quadratic functional perturbation for network games"
)]
struct Cli {
    /// Experiment configuration (TOML); the built-in ring setup when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; overrides `base_seed` for experiments.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when omitted, except for experiments.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for experiments (default: all cores).
    #[arg(long, global = true)]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct BudgetArgs {
    /// Per-coordinate ε; accepts numbers and multiples of ln2 such as `3ln2`.
    #[arg(long, value_parser = parse_real)]
    epsilon: f64,
    #[arg(long, value_parser = parse_real)]
    delta: f64,
    #[arg(long, value_parser = parse_real)]
    mu: f64,
}

#[derive(Args, Clone)]
struct NoiseArgs {
    #[arg(long, value_parser = parse_real, requires = "lambda")]
    a: Option<f64>,
    #[arg(long, value_parser = parse_real, requires = "a")]
    lambda: Option<f64>,
    /// Label of a configured noise entry.
    #[arg(long, conflicts_with = "a")]
    noise: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    ClosedForm,
    ProjectedGradient,
    BestResponse,
}

#[derive(Subcommand)]
enum Command {
    /// Smallest (a, λ) for a budget, with an exact audit of the result.
    Plan {
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Draws from the truncated Laplace law.
    Sample {
        #[arg(long, value_parser = parse_real)]
        a: f64,
        #[arg(long, value_parser = parse_real)]
        lambda: f64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Draws perturbation coefficients and writes the replayable record.
    Perturb {
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Original equilibrium, and the perturbed one when a draw is given.
    Solve {
        #[command(flatten)]
        noise: NoiseArgs,
        /// Replay a record written by `perturb` instead of drawing.
        #[arg(long, conflicts_with = "seed")]
        draw: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "closed-form")]
        method: Method,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: usize,
    },
    /// Exact audit on the extremal adjacent pair for one player.
    Audit {
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Player whose parameters change (1-based).
        #[arg(long, default_value_t = 1)]
        player: usize,
    },
    /// Equilibrium distance against the accuracy bounds.
    Exp1,
    /// Distribution and bias of the perturbed equilibrium.
    Exp2,
    /// Payoffs at the original and perturbed equilibria.
    Exp3,
    /// Relative accuracy against ε at δ = 0.
    Sweep,
}

fn parse_real(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let value = match t.strip_suffix("ln2") {
        Some("") => Ok(std::f64::consts::LN_2),
        Some(k) => k
            .trim_end_matches('*')
            .parse::<f64>()
            .map(|k| k * std::f64::consts::LN_2),
        None => t.parse::<f64>(),
    };
    value.map_err(|e| format!("{s:?} is not a number: {e}"))
}

enum Failure {
    Lib(Error),
    Violation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotMonotone(_)
        | Error::NotInterior
        | Error::NotAdjacent(_)
        | Error::Singular
        | Error::NetworkMismatch => 3,
        _ => 2,
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("property violation: {msg}");
            ExitCode::from(4)
        }
    }
}

fn run(cli: &Cli) -> CmdResult {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.base_seed = seed;
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.parallel {
            if n == 0 {
                return Err(Error::Config("--parallel must be >= 1".into()).into());
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(e.to_string()))?
    };
    pool.install(|| match &cli.command {
        Command::Plan { budget } => cmd_plan(cli, &config, budget),
        Command::Sample { a, lambda, count } => cmd_sample(cli, *a, *lambda, *count),
        Command::Perturb { noise } => cmd_perturb(cli, &config, noise),
        Command::Solve {
            noise,
            draw,
            method,
            tol,
            max_iter,
        } => cmd_solve(
            cli,
            &config,
            noise,
            draw.as_deref(),
            *method,
            *tol,
            *max_iter,
        ),
        Command::Audit {
            budget,
            noise,
            player,
        } => cmd_audit(cli, &config, budget, noise, *player),
        Command::Exp1 => cmd_exp1(cli, config),
        Command::Exp2 => cmd_exp2(cli, config),
        Command::Exp3 => cmd_exp3(cli, config),
        Command::Sweep => cmd_sweep(cli, config),
    })
}

/// Writes to `--out/name`, or stdout without `--out`.
fn emit(cli: &Cli, name: &str, text: &str) -> Result<(), Error> {
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), text)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Experiments always write files, to `--out` or the working directory.
fn write_file(cli: &Cli, name: &str, text: &str) -> Result<(), Error> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Error> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn budget(args: &BudgetArgs, p: usize) -> Result<PrivacyBudget, Error> {
    PrivacyBudget::new(args.epsilon, args.delta, args.mu, p)
}

fn noise_params(
    config: &ExperimentConfig,
    game: &LqGame,
    args: &NoiseArgs,
) -> Result<NoiseParams, Error> {
    if let (Some(a), Some(lambda)) = (args.a, args.lambda) {
        return NoiseParams::new(a, lambda);
    }
    let entry = match &args.noise {
        Some(label) => config
            .noise
            .iter()
            .find(|c| &c.label == label)
            .ok_or_else(|| Error::Config(format!("no noise entry labelled {label:?}")))?,
        None => config
            .noise
            .first()
            .ok_or_else(|| Error::Config("no noise entry configured".into()))?,
    };
    entry.resolve(game.network().group_factor())
}

fn cmd_plan(cli: &Cli, config: &ExperimentConfig, args: &BudgetArgs) -> CmdResult {
    let game = config.build_game()?;
    let b = budget(args, game.network().group_factor())?;
    let params = plan(&b)?;
    let v = MechanismInput::from_game(&game)?;
    let vp = v.worst_case_neighbor(0, b.mu())?;
    let report = audit_mechanism(game.network(), &b, &params, &v, &vp)?;
    let required = report
        .coordinates
        .iter()
        .map(|c| c.delta_required)
        .fold(0.0, f64::max);
    let mut text = format!("a = {}\nlambda = {}\n", params.a(), params.lambda());
    text += &format!(
        "group factor p = {}, network-wide guarantee (p*eps, p*delta) = ({}, {})\n",
        b.p(),
        report.network_epsilon,
        report.network_delta
    );
    text += &format!(
        "exact delta at shift mu = {required} against delta = {}: {}\n",
        b.delta(),
        if report.pass { "PASS" } else { "FAIL" }
    );
    if let Some(a) = report.certified_a {
        text += &format!("smallest a passing the exact audit at this lambda = {a}\n");
    }
    emit(cli, "plan.txt", &text)?;
    if cli.out.is_some() {
        write_file(cli, "plan_audit.json", &json(&report)?)?;
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Violation(format!(
            "planned parameters need delta = {required} > {}",
            b.delta()
        )))
    }
}

fn cmd_sample(cli: &Cli, a: f64, lambda: f64, count: usize) -> CmdResult {
    let params = NoiseParams::new(a, lambda)?;
    let seed = cli.seed.unwrap_or(0);
    let draws = trunc_laplace::sample(count, &params, seed);
    let mut text = format!(
        "# llqfp sample {}\n# version: {VERSION}\n# generator: {GENERATOR_ID}\n# seed: {seed}\n# a: {a}\n# lambda: {lambda}\nindex,value\n",
        experiment::CSV_FORMAT
    );
    for (k, v) in draws.iter().enumerate() {
        text += &format!("{},{v}\n", k + 1);
    }
    emit(cli, "sample.csv", &text)?;
    if count > 0 {
        let ks = trunc_laplace::ks_statistic(&draws, |x| trunc_laplace::cdf(x, &params));
        eprintln!("KS statistic against the analytic CDF: {ks}");
    }
    Ok(())
}

fn cmd_perturb(cli: &Cli, config: &ExperimentConfig, noise: &NoiseArgs) -> CmdResult {
    let game = config.build_game()?;
    let params = noise_params(config, &game, noise)?;
    let draw = PerturbationDraw::draw(game.network(), &params, cli.seed.unwrap_or(0))?;
    emit(cli, "draw.json", &json(&draw.to_record())?)?;
    Ok(())
}

fn solve_with(
    game: &impl AffineGame,
    method: Method,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumResult, Error> {
    let x0 = DVector::from_fn(game.n(), |i, _| {
        let (lo, hi) = game.action_box().bounds()[i];
        0.5 * (lo + hi)
    });
    match method {
        Method::ClosedForm => solve_affine_ne(game),
        Method::ProjectedGradient => {
            let lipschitz = linalg::spectral_norm(&game.system_matrix());
            projected_gradient_ne(
                game,
                &GradientSettings::for_game(game, lipschitz, tol, max_iter),
                &x0,
            )
        }
        Method::BestResponse => best_response_ne(game, &x0, tol, max_iter),
    }
}

fn cmd_solve(
    cli: &Cli,
    config: &ExperimentConfig,
    noise: &NoiseArgs,
    draw_file: Option<&Path>,
    method: Method,
    tol: f64,
    max_iter: usize,
) -> CmdResult {
    let game = config.build_game()?;
    let original = solve_with(&game, method, tol, max_iter)?;
    let mut text = format!(
        "# llqfp solve {}\n# version: {VERSION}\n# generator: {GENERATOR_ID}\n{}\n{}\n",
        experiment::CSV_FORMAT,
        EquilibriumResult::csv_header(game.n()),
        original.csv_row(None)
    );
    let draw = match (draw_file, cli.seed) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(Error::from)?;
            let record: DrawRecord = serde_json::from_str(&text).map_err(Error::from)?;
            Some(PerturbationDraw::from_record(game.network(), &record)?)
        }
        (None, Some(seed)) => Some(PerturbationDraw::draw(
            game.network(),
            &noise_params(config, &game, noise)?,
            seed,
        )?),
        (None, None) => None,
    };
    let mut results = vec![original];
    if let Some(draw) = draw {
        let perturbed = solve_with(&perturb(&game, &draw)?, method, tol, max_iter)?;
        text += &perturbed.csv_row(Some(draw.seed()));
        text.push('\n');
        results.push(perturbed);
    }
    emit(cli, "solve.csv", &text)?;
    for r in &results {
        for d in &r.diagnostics {
            eprintln!("warning: {d}");
        }
        if !r.interior {
            return Err(Error::NotInterior.into());
        }
    }
    Ok(())
}

fn cmd_audit(
    cli: &Cli,
    config: &ExperimentConfig,
    args: &BudgetArgs,
    noise: &NoiseArgs,
    player: usize,
) -> CmdResult {
    let game = config.build_game()?;
    let b = budget(args, game.network().group_factor())?;
    let params = noise_params(config, &game, noise)?;
    if player == 0 || player > game.n() {
        return Err(Error::IndexOutOfRange {
            index: player,
            n: game.n(),
        }
        .into());
    }
    let v = MechanismInput::from_game(&game)?;
    let vp = v.worst_case_neighbor(player - 1, b.mu())?;
    let report = audit_mechanism(game.network(), &b, &params, &v, &vp)?;
    emit(cli, "audit.json", &json(&report)?)?;
    let check = check_params(&b, &params)?;
    if !check.compliant() {
        eprintln!(
            "parameters below the planner bounds: lambda {} (min {}), a {} (min {})",
            check.lambda, check.lambda_min, check.a, check.a_min
        );
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Violation(
            "a coordinate needs more than the budgeted delta".into(),
        ))
    }
}

fn setup(config: ExperimentConfig) -> Result<Setup, Error> {
    Setup::new(config)
}

fn cmd_exp1(cli: &Cli, config: ExperimentConfig) -> CmdResult {
    let s = setup(config)?;
    let report = experiment::experiment1(&s)?;
    write_file(cli, "exp1.csv", &experiment::exp1_csv(&s, &report)?)?;
    write_file(cli, "exp1_summary.json", &json(&report)?)?;
    for row in &report.summary {
        eprintln!(
            "{}: {} runs, {} accuracy violations, {} worst-case bound violations, median distance {}",
            row.config, row.runs, row.violations, row.worst_bound_violations, row.median_distance
        );
    }
    match report.total_violations() {
        0 => Ok(()),
        v => Err(Failure::Violation(format!("{v} accuracy bound violations"))),
    }
}

fn cmd_exp2(cli: &Cli, config: ExperimentConfig) -> CmdResult {
    let s = setup(config)?;
    let report = experiment::experiment2(&s)?;
    write_file(
        cli,
        "exp2_histogram.csv",
        &experiment::exp2_histogram_csv(&s, &report)?,
    )?;
    write_file(
        cli,
        "exp2_bias.csv",
        &experiment::exp2_bias_csv(&s, &report)?,
    )?;
    write_file(cli, "exp2_summary.json", &json(&report)?)?;
    for (label, _) in &s.noises {
        let bias = report.bias_for(label);
        let negative = bias.iter().filter(|b| **b < 0.0).count();
        eprintln!(
            "{label}: mean bias negative for {negative}/{} players",
            bias.len()
        );
    }
    Ok(())
}

fn cmd_exp3(cli: &Cli, config: ExperimentConfig) -> CmdResult {
    let s = setup(config)?;
    let report = experiment::experiment3(&s)?;
    write_file(cli, "exp3.csv", &experiment::exp3_csv(&s, &report))?;
    write_file(cli, "exp3_summary.json", &json(&report)?)?;
    Ok(())
}

fn cmd_sweep(cli: &Cli, config: ExperimentConfig) -> CmdResult {
    let s = setup(config)?;
    let report = experiment::sweep(&s)?;
    write_file(cli, "sweep.csv", &experiment::sweep_csv(&s, &report)?)?;
    write_file(cli, "sweep_summary.json", &json(&report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::parse_real;
    use std::f64::consts::LN_2;

    #[test]
    fn reals_accept_multiples_of_ln2() {
        assert_eq!(parse_real("ln2").unwrap(), LN_2);
        assert_eq!(parse_real("3ln2").unwrap(), 3.0 * LN_2);
        assert_eq!(parse_real("0.5*ln2").unwrap(), 0.5 * LN_2);
        assert_eq!(parse_real("0.05").unwrap(), 0.05);
        assert!(parse_real("xln2").is_err());
        assert!(parse_real("").is_err());
    }
}
