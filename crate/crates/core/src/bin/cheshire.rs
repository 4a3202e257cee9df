//! Command-line front end: synthesize fringe data files, fit them, rebuild
//! the published comparisons, and cross-check the numerical kernels.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 numerical failure.

use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use cheshire_core::config::{ConfigError, ExperimentConfig, OutputFormat, RunConfig};
use cheshire_core::fit::{fit_sinusoid, FitError};
use cheshire_core::hilbert::{expm, inner, CVec, C64};
use cheshire_core::ifgio::{self, DataError};
use cheshire_core::model::{
    completeness_check, detected_intensity, energy_x_path, intensity_perturbative,
    interaction_operator, preselection, spin_x_path, Interaction, InteractionKind, Path,
    Selection, DIM,
};
use cheshire_core::pan;
use cheshire_core::pipeline::PipelineError;
use cheshire_core::report::{self, Mode, Target};
use cheshire_core::rng::PointRng;
use cheshire_core::synth::{
    poissonize, run_measurement_set, sweep_ideal, Interferogram, Loop, Scenario, ScenarioKind,
    SynthError,
};

#[derive(Parser)]
#[command(
    name = "cheshire",
    version,
    about = "Simulator and analysis toolkit for three-path spin/energy interferometry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize interferogram data files.
    Simulate(SimulateArgs),
    /// Fit one interferogram file and print the parameters as JSON.
    Fit(FitArgs),
    /// Run the full pipeline and write a comparison report.
    Reproduce(ReproduceArgs),
    /// Run the numerical cross-check suites.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario id: all, adjust, prep[:PATH], empty:LOOP[:sweep=PATH], or
    /// weak:KIND:PATH[:sweep=PATH] with KIND one of dc|rf|abs.
    #[arg(long)]
    scenario: String,
    /// Poisson counting noise.
    #[arg(long, default_value = "off", value_parser = parse_on_off, action = clap::ArgAction::Set)]
    noise: bool,
    /// Override the counting seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Run configuration JSON; built-in defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the output directory from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Interferogram file (.csv or .json).
    #[arg(long)]
    input: PathBuf,
    /// Fix the fringe frequency instead of fitting it.
    #[arg(long)]
    fix_omega: Option<f64>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Which published comparison to rebuild.
    #[arg(long, value_parser = parse_target)]
    target: Target,
    /// Instrument realism of the simulated column.
    #[arg(long, default_value = "realistic", value_parser = parse_mode)]
    mode: Mode,
    /// Counting seed for the simulated campaign.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for the report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SelftestArgs {
    /// Deliberately corrupt the rotation-operator suite to prove failures
    /// are caught.
    #[arg(long, hide = true)]
    corrupt: bool,
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected `on` or `off`, got `{other}`")),
    }
}

fn parse_target(s: &str) -> Result<Target, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("self-test failed: {0} suite(s) reported errors")]
    SelfTest(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) | CliError::Data(_) | CliError::Io(_) | CliError::Synth(_) => 2,
            CliError::Fit(_) | CliError::SelfTest(_) => 3,
            CliError::Pipeline(e) => match e {
                PipelineError::Config(_) | PipelineError::Synth(_) => 2,
                _ => 3,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Reproduce(args) => cmd_reproduce(args),
        Command::Selftest(args) => cmd_selftest(args.corrupt),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Best-effort stdout: a reader that hangs up early (e.g. `head`) must not
/// abort the run, so write errors are dropped and the exit code still
/// reflects the command outcome.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn load_run_config(path: Option<&FsPath>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("read {}: {e}", p.display())))?;
            Ok(RunConfig::from_json(&text)?)
        }
    }
}

fn parse_kind(s: &str) -> Result<InteractionKind, String> {
    match s {
        "dc" => Ok(InteractionKind::Dc),
        "rf" => Ok(InteractionKind::Rf),
        "abs" => Ok(InteractionKind::Absorber),
        other => Err(format!("unknown interaction kind `{other}` (expected dc|rf|abs)")),
    }
}

fn parse_scenario(spec: &str, cfg: &ExperimentConfig) -> Result<Scenario, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let mut sweep: Option<Path> = None;
    let mut core = parts.as_slice();
    if let Some(tail) = parts.last().and_then(|last| last.strip_prefix("sweep=")) {
        sweep = Some(tail.parse::<Path>().map_err(CliError::Usage)?);
        core = &parts[..parts.len() - 1];
    }
    let kind = match core {
        ["adjust"] => ScenarioKind::AdjustScan(cfg.adjust),
        ["prep"] => ScenarioKind::Prep,
        ["prep", p] => {
            sweep = Some(p.parse::<Path>().map_err(CliError::Usage)?);
            ScenarioKind::Prep
        }
        ["empty", lp] => ScenarioKind::Empty(lp.parse::<Loop>().map_err(CliError::Usage)?),
        ["weak", k, p] => {
            let path = p.parse::<Path>().map_err(CliError::Usage)?;
            let x = match parse_kind(k).map_err(CliError::Usage)? {
                InteractionKind::Dc => Interaction::dc(path, cfg.alpha_rot),
                InteractionKind::Rf => Interaction::rf(path, cfg.alpha_rot),
                InteractionKind::Absorber => Interaction::absorber(path, cfg.absorption),
            }
            .map_err(|e| CliError::Usage(e.to_string()))?;
            ScenarioKind::Weak(x)
        }
        _ => {
            return Err(CliError::Usage(format!(
                "unknown scenario `{spec}` (expected all, adjust, prep[:PATH], \
                 empty:LOOP[:sweep=PATH], or weak:KIND:PATH[:sweep=PATH])"
            )))
        }
    };
    let grid = match &kind {
        ScenarioKind::AdjustScan(adj) => adj.currents(),
        _ => cfg.grid.points(),
    };
    let sweep = sweep.unwrap_or_else(|| Scenario::default_sweep(&kind));
    Scenario::new(kind, sweep, grid).map_err(|e| match e {
        // A sweep outside the requested loop is a bad flag combination.
        SynthError::SweepOutsideLoop { .. } => CliError::Usage(e.to_string()),
        other => CliError::Synth(other),
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut run = load_run_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        run.experiment.counting.seed = seed;
    }
    if let Some(out) = &args.out {
        run.output_dir = out.display().to_string();
    }
    run.experiment.validate()?;
    let hash = run.hash();
    let dir = PathBuf::from(&run.output_dir);
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("create {}: {e}", dir.display())))?;
    let cfg = &run.experiment;
    let ifgs: Vec<Interferogram> = if args.scenario == "all" {
        let set = run_measurement_set(cfg, args.noise)?;
        let mut v: Vec<Interferogram> = set.empties.into_iter().collect();
        for cell in set.cells {
            v.push(cell.prep);
            v.push(cell.weak);
        }
        v
    } else {
        let sc = parse_scenario(&args.scenario, cfg)?;
        if matches!(sc.kind(), ScenarioKind::AdjustScan(_)) && args.noise {
            return Err(CliError::Usage(
                "the adjustment scan is a derived contrast curve; counting noise applies to \
                 fringe scenarios only"
                    .to_string(),
            ));
        }
        let mut ifg = sweep_ideal(&sc, cfg.selection, &cfg.imperfections)?;
        if args.noise {
            ifg = poissonize(&ifg, cfg.counting)?;
        }
        vec![ifg]
    };
    let ext = match run.format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    for mut ifg in ifgs {
        ifg.meta.config_hash = hash.clone();
        let stem = ifg.meta.scenario.replace([':', '='], "-");
        let path = dir.join(format!("{stem}.{ext}"));
        ifgio::save(&ifg, &path)?;
        emit(&format!("wrote {}\n", path.display()));
    }
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let ifg = ifgio::load(&args.input)?;
    let fit = fit_sinusoid(&ifg, args.fix_omega)?;
    let mut text = serde_json::to_string_pretty(&fit).expect("fit results serialize");
    text.push('\n');
    emit(&text);
    Ok(())
}

fn cmd_reproduce(args: ReproduceArgs) -> Result<(), CliError> {
    let rep = report::build(args.target, args.mode, args.seed)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("create {}: {e}", args.out.display())))?;
    let stem = args.target.label();
    let write = |name: String, contents: &str| -> Result<(), CliError> {
        let path = args.out.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))
    };
    write(format!("{stem}.json"), &report::render_json(&rep))?;
    let text = report::render_text(&rep);
    write(format!("{stem}.txt"), &text)?;
    if args.target == Target::Fig8 {
        let curve = report::adjustment_curve(&report::config_for(args.mode, args.seed))?;
        write(format!("{stem}.csv"), &report::scan_csv(&curve))?;
    }
    emit(&text);
    Ok(())
}

fn cmd_selftest(corrupt: bool) -> Result<(), CliError> {
    let suites: [(&str, Result<String, String>); 4] = [
        ("operator-exponential", suite_operator_exponential(corrupt)),
        ("npath-closed-form", suite_npath_closed_form()),
        ("completeness", suite_completeness()),
        ("perturbative-order", suite_perturbative_order()),
    ];
    let mut failures = 0;
    for (name, outcome) in suites {
        match outcome {
            Ok(detail) => emit(&format!("selftest {name}: ok ({detail})\n")),
            Err(detail) => {
                failures += 1;
                emit(&format!("selftest {name}: FAIL ({detail})\n"));
            }
        }
    }
    if failures > 0 {
        return Err(CliError::SelfTest(failures));
    }
    emit("selftest: all suites passed\n");
    Ok(())
}

/// Closed-form rotation operators against the scaled matrix exponential.
fn suite_operator_exponential(corrupt: bool) -> Result<String, String> {
    use rand::RngExt;
    const CASES: u64 = 100;
    const TOL: f64 = 1e-10;
    let mut worst = 0.0_f64;
    for case in 0..CASES {
        let mut rng = PointRng::new(11, "selftest:expm", case);
        let path = Path::ALL[rng.random_range(0..3)];
        let spin = rng.random_bool(0.5);
        let alpha = rng.random_range(0.01..1.5);
        let x = if spin { Interaction::dc(path, alpha) } else { Interaction::rf(path, alpha) }
            .map_err(|e| e.to_string())?;
        let mut closed = interaction_operator(&x);
        if corrupt && case == 0 {
            // Test hook: a deliberate defect the suite must catch.
            let v = closed.at(0, 0);
            closed.set(0, 0, v + C64::new(1e-6, 0.0));
        }
        let generator = if spin { spin_x_path(path) } else { energy_x_path(path) };
        let exact = expm(&generator.scale(C64::new(0.0, -alpha / 2.0)), 1e-12)
            .map_err(|e| e.to_string())?;
        for r in 0..DIM {
            for c in 0..DIM {
                worst = worst.max((closed.at(r, c) - exact.at(r, c)).norm());
            }
        }
    }
    if worst <= TOL {
        Ok(format!("{CASES} cases, max |closed - expm| = {worst:.2e}"))
    } else {
        Err(format!("max |closed - expm| = {worst:.2e} exceeds {TOL:.0e}"))
    }
}

/// Brute-force generalized intensities against their closed form.
fn suite_npath_closed_form() -> Result<String, String> {
    use rand::RngExt;
    const TOL: f64 = 1e-12;
    let mut worst = 0.0_f64;
    let mut cases = 0_u64;
    for n in 2..=5 {
        for p in 1..n {
            for j in 1..=n {
                for (k, alpha) in [0.05, std::f64::consts::PI / 9.0, 1.0].into_iter().enumerate() {
                    let key = (((n * 8 + p) * 8 + j) * 8 + k) as u64;
                    let mut rng = PointRng::new(13, "selftest:npath", key);
                    for _ in 0..5 {
                        let chis: Vec<f64> = (0..n)
                            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                            .collect();
                        let exact =
                            pan::intensity(n, p, j, alpha, &chis).map_err(|e| e.to_string())?;
                        let closed = pan::intensity_closed(n, p, j, alpha, &chis)
                            .map_err(|e| e.to_string())?;
                        worst = worst.max((exact - closed).abs());
                        cases += 1;
                    }
                }
            }
        }
    }
    if worst <= TOL {
        Ok(format!("{cases} cases, max |exact - closed| = {worst:.2e}"))
    } else {
        Err(format!("max |exact - closed| = {worst:.2e} exceeds {TOL:.0e}"))
    }
}

/// Weighted weak values over a complete basis recover the plain expectation
/// value, and the spin-flip expectation vanishes in every path.
fn suite_completeness() -> Result<String, String> {
    const TOL: f64 = 1e-12;
    let basis: Vec<CVec> = (0..DIM).map(|k| CVec::basis(DIM, k)).collect();
    let i = preselection();
    let mut worst = 0.0_f64;
    for path in Path::ALL {
        let (lhs, rhs) = completeness_check(&basis, path).map_err(|e| e.to_string())?;
        worst = worst.max((lhs - 1.0 / 3.0).abs());
        worst = worst.max((rhs - 1.0 / 3.0).abs());
        let flipped = spin_x_path(path).apply(&i).map_err(|e| e.to_string())?;
        let expectation = inner(&i, &flipped).map_err(|e| e.to_string())?;
        worst = worst.max(expectation.norm());
    }
    if worst <= TOL {
        Ok(format!("occupation 1/3 per path, flip expectation 0, max deviation {worst:.2e}"))
    } else {
        Err(format!("max deviation {worst:.2e} exceeds {TOL:.0e}"))
    }
}

/// The perturbative intensity must miss the exact one at third order: the
/// worst-case gap shrinks close to eightfold per halving of the angle.
fn suite_perturbative_order() -> Result<String, String> {
    let gap = |alpha: f64| -> Result<f64, String> {
        let x = Interaction::dc(Path::I, alpha).map_err(|e| e.to_string())?;
        let mut worst = 0.0_f64;
        for k in 0..64 {
            let chi = 2.0 * std::f64::consts::TAU * k as f64 / 64.0;
            let sel = Selection { chi1: chi, ..Selection::default() };
            worst =
                worst.max((detected_intensity(Some(&x), sel) - intensity_perturbative(&x, sel)).abs());
        }
        Ok(worst)
    };
    let alphas = [0.4, 0.2, 0.1, 0.05];
    let gaps = alphas.iter().map(|&a| gap(a)).collect::<Result<Vec<_>, _>>()?;
    let mut ratios = Vec::new();
    for w in gaps.windows(2) {
        ratios.push(w[0] / w[1]);
    }
    if ratios.iter().all(|r| (6.5..=9.5).contains(r)) {
        Ok(format!(
            "halving ratios {:.2}, {:.2}, {:.2}",
            ratios[0], ratios[1], ratios[2]
        ))
    } else {
        Err(format!("halving ratios {ratios:?} leave the cubic-order band [6.5, 9.5]"))
    }
}
