//! `ldpcs`: privatize bounded streams and run locally private inference.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ldp_confseq::abtest::{ab_lower_cs, ab_two_sided_cs, privatize_ab, weak_null_eprocess, ABConfig};
use ldp_confseq::confseq::{
    gridkelly_cs, hoeffding_ci, hoeffding_cs, laplace_hoeffding_ci, laplace_hoeffding_cs, mixture_cs_lower,
    mixture_cs_two_sided, pmkelly_ci, sirr_lr_cs, BoundSeries,
};
use ldp_confseq::eprocess::{eprocess_hoeffding, eprocess_mixture, NullSpec};
use ldp_confseq::harness::engine::{privatize_values, ResolvedMechanism};
use ldp_confseq::harness::io::{self, Format};
use ldp_confseq::harness::{run_experiment, ExperimentConfig};
use ldp_confseq::mechanisms::{tune_rg_with, EntropyObjective, PrivacyParams, RandomSource};
use ldp_confseq::schedules::{beta_opt, LambdaSchedule, MixtureConfig, DEFAULT_BETTING_C, DEFAULT_LAPLACE_C};
use ldp_confseq::Error;

#[derive(Parser)]
#[command(name = "ldpcs", version, about = "Locally private confidence sequences and tests")]
struct Cli {
    /// Root seed for privatization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overall miscoverage or test level. Two-sided sets built from a union of
    /// one-sided bounds spend alpha/2 per side.
    #[arg(long, global = true, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Write here instead of stdout. The file appears only once complete.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Privatize raw data (CSV column `x`, plus `a` with --ab).
    Privatize(PrivatizeArgs),
    /// Fixed-sample confidence interval from privatized records.
    Ci(CiArgs),
    /// Confidence sequence from privatized records.
    Cs(CsArgs),
    /// Sequential test of a null about the mean.
    Test(TestArgs),
    /// Treatment-effect inference from privatized A/B records.
    Abtest(AbArgs),
    /// Choose NPRR parameters (r, G) for a privacy level.
    Tune(TuneArgs),
    /// Run a Monte Carlo experiment described by a TOML file.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Input {
    /// Input file; `.json` files are read as JSON, anything else as CSV.
    #[arg(long, short)]
    input: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Nprr,
    Sirr,
    Laplace,
}

#[derive(Args)]
struct PrivatizeArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value_t = MechanismArg::Nprr)]
    mechanism: MechanismArg,
    /// Explicit retention probability, instead of --epsilon.
    #[arg(long)]
    r: Option<f64>,
    /// Grid size for NPRR.
    #[arg(long, default_value_t = 1)]
    g: u32,
    /// Treat the input as A/B data and emit pseudo-outcome records.
    #[arg(long)]
    ab: bool,
    #[arg(long, default_value_t = 0.5)]
    pi: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum CiMethod {
    #[value(alias = "nprr-hoeffding")]
    Hoeffding,
    LaplaceHoeffding,
    Pmkelly,
}

#[derive(Args)]
struct CiArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value_t = CiMethod::Hoeffding)]
    method: CiMethod,
    /// Planned sample size; defaults to the number of records.
    #[arg(long)]
    n: Option<u64>,
    /// Truncation scale (pmKelly and Laplace-Hoeffding).
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CsMethod {
    #[value(alias = "hoeffding")]
    NprrHoeffding,
    MixtureTwoSided,
    MixtureLower,
    LaplaceHoeffding,
    Gridkelly,
    SirrLr,
}

#[derive(Args)]
struct CsArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value_t = CsMethod::NprrHoeffding)]
    method: CsMethod,
    /// Time at which mixture bounds are tightest.
    #[arg(long, default_value_t = 100)]
    t0: u64,
    #[arg(long, default_value_t = DEFAULT_LAPLACE_C)]
    c: f64,
    #[arg(long, default_value_t = 30)]
    d: u32,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestMethod {
    Hoeffding,
    Mixture,
}

#[derive(Clone, Copy, ValueEnum)]
enum NullKind {
    Point,
    Le,
    Ge,
    Interval,
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    Decision,
    Series,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value_t = TestMethod::Mixture)]
    method: TestMethod,
    #[arg(long, value_enum, default_value_t = NullKind::Le)]
    null: NullKind,
    #[arg(long)]
    mu0: f64,
    /// Upper end of an interval null.
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long, default_value_t = 100)]
    t0: u64,
    #[arg(long, value_enum, default_value_t = Report::Decision)]
    report: Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum AbKind {
    Lower,
    TwoSided,
    WeakNull,
}

#[derive(Args)]
struct AbArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value_t = AbKind::Lower)]
    kind: AbKind,
    #[arg(long, default_value_t = 0.5)]
    pi: f64,
    #[arg(long, default_value_t = 100)]
    t0: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    AsWritten,
    SignCorrected,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long, value_enum, default_value_t = ObjectiveArg::AsWritten)]
    objective: ObjectiveArg,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    /// Worker threads; overrides the config file.
    #[arg(long)]
    threads: Option<usize>,
}

fn format_of(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
        _ => Format::Csv,
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())).into())
}

fn emit(cli: &Cli, text: &str) -> anyhow::Result<()> {
    match &cli.output {
        Some(path) => io::write_atomic(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn require_epsilon(cli: &Cli) -> anyhow::Result<f64> {
    cli.epsilon.ok_or_else(|| Error::Argument("--epsilon is required".into()).into())
}

fn privatize(cli: &Cli, args: &PrivatizeArgs) -> anyhow::Result<String> {
    let text = read_text(&args.input.input)?;
    let mut rng = RandomSource::new(cli.seed.unwrap_or(0), 0);
    let params = |g: u32| -> anyhow::Result<PrivacyParams> {
        Ok(match (args.r, cli.epsilon) {
            (Some(r), _) => PrivacyParams::new(r, g)?,
            (None, Some(eps)) => PrivacyParams::for_epsilon(eps, g)?,
            (None, None) => bail!(Error::Argument("give --epsilon or --r".into())),
        })
    };
    if args.ab {
        let p = params(1)?;
        let cfg = ABConfig::new(args.pi, p, cli.alpha, 1.0)?;
        let recs = io::read_raw_ab(&text)?
            .into_iter()
            .enumerate()
            .map(|(i, (x, a))| privatize_ab(x, a, &cfg, i as u64 + 1, &mut rng))
            .collect::<ldp_confseq::Result<Vec<_>>>()?;
        return Ok(io::ab_records_to_string(&recs, p.r(), cli.format.into())?);
    }
    let xs = io::read_raw_values(&text)?;
    let mech = match args.mechanism {
        MechanismArg::Nprr => ResolvedMechanism::Nprr(params(args.g)?),
        MechanismArg::Sirr => ResolvedMechanism::Sirr(params(1)?),
        MechanismArg::Laplace => ResolvedMechanism::Laplace(require_epsilon(cli)?),
    };
    let recs = privatize_values(&xs, mech, &mut rng)?;
    Ok(io::records_to_string(&recs, cli.format.into())?)
}

fn read_records(path: &Path) -> anyhow::Result<Vec<ldp_confseq::mechanisms::PrivateRecord>> {
    let recs = io::read_records(&read_text(path)?, format_of(path))?;
    if recs.is_empty() {
        bail!(Error::Io(format!("{} holds no records", path.display())));
    }
    Ok(recs)
}

fn ci(cli: &Cli, args: &CiArgs) -> anyhow::Result<String> {
    let recs = read_records(&args.input.input)?;
    let n = args.n.unwrap_or(recs.len() as u64);
    let half = cli.alpha / 2.0;
    let series = match args.method {
        CiMethod::Hoeffding => hoeffding_ci(&recs, n, half)?,
        CiMethod::LaplaceHoeffding => laplace_hoeffding_ci(&recs, n, half, args.c.unwrap_or(DEFAULT_LAPLACE_C))?,
        CiMethod::Pmkelly => pmkelly_ci(&recs, n, half, args.c.unwrap_or(DEFAULT_BETTING_C))?,
    };
    Ok(io::bounds_to_string(&series, cli.format.into())?)
}

fn cs_series(cli: &Cli, args: &CsArgs) -> anyhow::Result<BoundSeries> {
    let recs = read_records(&args.input.input)?;
    let alpha = cli.alpha;
    let half = alpha / 2.0;
    Ok(match args.method {
        CsMethod::NprrHoeffding => hoeffding_cs(&recs, LambdaSchedule::TimeUniform { alpha: half }, half)?,
        CsMethod::MixtureTwoSided => mixture_cs_two_sided(&recs, MixtureConfig::two_sided(args.t0, alpha)?)?,
        CsMethod::MixtureLower => mixture_cs_lower(&recs, MixtureConfig::one_sided(args.t0, alpha)?)?,
        CsMethod::LaplaceHoeffding => {
            laplace_hoeffding_cs(&recs, LambdaSchedule::Laplace { alpha: half, c: args.c, n: None }, half)?
        }
        CsMethod::Gridkelly => gridkelly_cs(&recs, args.d, args.theta, alpha)?,
        CsMethod::SirrLr => sirr_lr_cs(&recs, alpha)?,
    })
}

fn test(cli: &Cli, args: &TestArgs) -> anyhow::Result<String> {
    let recs = read_records(&args.input.input)?;
    let null = match args.null {
        NullKind::Point => NullSpec::Point { mu0: args.mu0 },
        NullKind::Le => NullSpec::OneSidedLe { mu0: args.mu0 },
        NullKind::Ge => NullSpec::OneSidedGe { mu0: args.mu0 },
        NullKind::Interval => {
            let hi = args.mu1.ok_or_else(|| Error::Argument("an interval null needs --mu1".into()))?;
            NullSpec::Interval { lo: args.mu0, hi }
        }
    };
    null.validate()?;
    let series = match (args.method, null) {
        (TestMethod::Hoeffding, NullSpec::OneSidedLe { mu0 }) => {
            eprocess_hoeffding(&recs, LambdaSchedule::TimeUniform { alpha: cli.alpha }, mu0)?
        }
        (TestMethod::Hoeffding, _) => bail!(Error::Argument("the Hoeffding e-process tests `le` nulls only".into())),
        (TestMethod::Mixture, null) => {
            let config = match null {
                NullSpec::OneSidedLe { .. } | NullSpec::OneSidedGe { .. } => MixtureConfig::one_sided(args.t0, cli.alpha)?,
                _ => MixtureConfig::two_sided(args.t0, cli.alpha)?,
            };
            eprocess_mixture(&recs, config, null)?
        }
    };
    decision_or_series(cli, &series, args.report)
}

fn decision_or_series(
    cli: &Cli,
    series: &ldp_confseq::eprocess::EProcessSeries,
    report: Report,
) -> anyhow::Result<String> {
    let format: Format = cli.format.into();
    match report {
        Report::Series => Ok(io::eprocess_to_string(series, format)?),
        Report::Decision => {
            let decision = series.decision(cli.alpha);
            let p = series.states.last().map_or(1.0, |s| s.running_min_inv);
            Ok(match format {
                Format::Json => serde_json_line(&decision, p),
                Format::Csv => format!(
                    "rejected,first_rejection_time,p_value,alpha\n{},{},{},{}\n",
                    decision.rejected,
                    decision.first_rejection_time.map_or(String::new(), |t| t.to_string()),
                    p,
                    decision.alpha
                ),
            })
        }
    }
}

fn serde_json_line(decision: &ldp_confseq::eprocess::TestDecision, p: f64) -> String {
    let value = serde_json::json!({
        "rejected": decision.rejected,
        "first_rejection_time": decision.first_rejection_time,
        "p_value": p,
        "alpha": decision.alpha,
    });
    format!("{value:#}\n")
}

fn abtest(cli: &Cli, args: &AbArgs) -> anyhow::Result<String> {
    let path = &args.input.input;
    let (recs, r) = io::read_ab_records(&read_text(path)?, format_of(path))?;
    let params = PrivacyParams::new(r, 1)?;
    let beta = match args.kind {
        AbKind::TwoSided => beta_opt(args.t0, cli.alpha),
        AbKind::Lower | AbKind::WeakNull => beta_opt(args.t0, 2.0 * cli.alpha),
    };
    let cfg = ABConfig::new(args.pi, params, cli.alpha, beta)?;
    let format: Format = cli.format.into();
    Ok(match args.kind {
        AbKind::Lower => io::bounds_to_string(&ab_lower_cs(&recs, &cfg)?, format)?,
        AbKind::TwoSided => io::bounds_to_string(&ab_two_sided_cs(&recs, &cfg)?, format)?,
        AbKind::WeakNull => return decision_or_series(cli, &weak_null_eprocess(&recs, &cfg)?, Report::Series),
    })
}

fn tune(cli: &Cli, args: &TuneArgs) -> anyhow::Result<String> {
    let eps = require_epsilon(cli)?;
    let objective = match args.objective {
        ObjectiveArg::AsWritten => EntropyObjective::AsWritten,
        ObjectiveArg::SignCorrected => EntropyObjective::SignCorrected,
    };
    let p = tune_rg_with(eps, objective)?;
    Ok(match Format::from(cli.format) {
        Format::Csv => format!("r,G,epsilon\n{},{},{}\n", p.r(), p.g(), p.epsilon()),
        Format::Json => format!("{:#}\n", serde_json::json!({"r": p.r(), "G": p.g(), "epsilon": p.epsilon()})),
    })
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> anyhow::Result<String> {
    let mut config = ExperimentConfig::from_toml_str(&read_text(&args.config)?)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if args.threads.is_some() {
        config.threads = args.threads;
    }
    let table = run_experiment(&config)?;
    Ok(io::table_to_string(&table, cli.format.into())?)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let text = match &cli.command {
        Command::Privatize(a) => privatize(cli, a)?,
        Command::Ci(a) => ci(cli, a)?,
        Command::Cs(a) => io::bounds_to_string(&cs_series(cli, a)?, cli.format.into())?,
        Command::Test(a) => test(cli, a)?,
        Command::Abtest(a) => abtest(cli, a)?,
        Command::Tune(a) => tune(cli, a)?,
        Command::Simulate(a) => simulate(cli, a)?,
    };
    emit(cli, &text).context("writing output")
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Contract(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => {
            eprintln!("error: internal error");
            ExitCode::from(2)
        }
    }
}
