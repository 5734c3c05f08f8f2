//! Command-line parsing and the subcommands.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use rtgen_core::events::{Event, EventKind, EventSink};
use rtgen_core::experiment::{collect_records, experiment1_report};
use rtgen_core::interaction::{run_interactive, Context, RunError, RunOptions, RunResult, TestSuite};
use rtgen_core::scoring::{ConsoleScorer, HeuristicScorer, ReplayScorer, Scorer};
use rtgen_core::search::SearchConfig;
use rtgen_core::session::SessionLog;
use rtgen_core::subject::{extract_targets, load_subject, SubjectClass, TargetKind, TargetSet, ARRAY_INT_LIST};

use crate::config::{ConfigError, InteractionFlags, Mode, RunConfig, SearchFlags};
use crate::output::{self, JsonlSink, Tee};
use crate::server::{router, Session};

/// Exit status for a malformed or inconsistent configuration.
pub const EXIT_CONFIG: u8 = 3;
/// Exit status for a subject file that cannot be read or parsed.
pub const EXIT_SUBJECT: u8 = 4;
/// Exit status for a run that stopped before its budget.
pub const EXIT_ABORTED: u8 = 5;
/// Exit status for any other failure, such as an unwritable output
/// directory.
pub const EXIT_IO: u8 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "rtgen",
    version,
    about = "Search-based unit-test generation with interactive readability scoring",
    after_help = "Exit status: 0 success, 1 I/O failure, 2 usage error, 3 configuration error, \
                  4 subject error, 5 aborted session.\n\
                  Environment: RTGEN_OUTPUT_ROOT sets the default output root, RTGEN_BIND the \
                  default server address; flags and config file values take precedence."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a test suite.
    Run(RunArgs),
    /// Measure minimized test length against coverage generation over
    /// many seeds.
    Exp1(Exp1Args),
    /// Re-run a recorded session, taking every score from its log.
    Replay(ReplayArgs),
    /// Print a suite saved as suite.json.
    RenderSuite(RenderSuiteArgs),
    /// Parse a subject file and list its coverage targets.
    ValidateSubject(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Subject file [default: the bundled ArrayIntList].
    #[arg(long)]
    pub subject: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory holding one sub-directory per run.
    #[arg(long)]
    pub output_root: Option<PathBuf>,
    /// Name of the run directory [default: <subject>-seed<seed>].
    #[arg(long)]
    pub run_id: Option<String>,
    /// Only print the final summary.
    #[arg(long, short)]
    pub quiet: bool,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub interaction: InteractionFlags,
    /// Where scores come from.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Session log to take scores from in replay mode.
    #[arg(long)]
    pub replay_log: Option<PathBuf>,
    /// Server address in interactive-server mode.
    #[arg(long)]
    pub bind: Option<String>,
    /// Stop serving once the run ends instead of waiting for Ctrl-C.
    #[arg(long)]
    pub exit_when_done: bool,
    /// Give up on an unanswered interaction after this many seconds.
    #[arg(long)]
    pub score_timeout: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct Exp1Args {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of runs; seeds are consecutive from --seed (default 0).
    #[arg(long, default_value_t = 30)]
    pub seeds: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Session log of the recorded run.
    #[arg(long)]
    pub log: PathBuf,
    /// Must match the recorded seed when given.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Subject file [default: the bundled ArrayIntList].
    #[arg(long)]
    pub subject: Option<PathBuf>,
    #[arg(long)]
    pub output_root: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RenderSuiteArgs {
    /// A suite.json written by a run.
    pub suite: PathBuf,
    /// Subject the suite was generated for [default: the bundled
    /// ArrayIntList].
    #[arg(long)]
    pub subject: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Subject file [default: the bundled ArrayIntList].
    pub subject: Option<PathBuf>,
    /// Also print the normalized source.
    #[arg(long)]
    pub pretty: bool,
    /// Also list every target.
    #[arg(long)]
    pub targets: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Subject(String),
    #[error("{reason} (partial session log in {dir})")]
    Aborted { reason: String, dir: PathBuf },
    #[error("{0:#}")]
    Io(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Subject(_) => EXIT_SUBJECT,
            CliError::Aborted { .. } => EXIT_ABORTED,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

fn io_err(context: impl std::fmt::Display) -> impl FnOnce(io::Error) -> CliError {
    move |e| CliError::Io(anyhow::Error::new(e).context(context.to_string()))
}

/// Parses `args` and runs the chosen command, printing errors.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let config = run_config(&args)?;
            let extras = ServerOptions {
                exit_when_done: args.exit_when_done,
                score_timeout: args.score_timeout.map(Duration::from_secs),
            };
            let done = run(&config, &extras, args.common.quiet)?;
            println!("{}", done.summary());
            Ok(())
        }
        Command::Exp1(args) => exp1(&args),
        Command::Replay(args) => {
            let config = replay_config(&args)?;
            let done = run(&config, &ServerOptions::default(), args.quiet)?;
            println!("{}", done.summary());
            Ok(())
        }
        Command::RenderSuite(args) => {
            let subject = load(args.subject.as_deref())?;
            let text = std::fs::read_to_string(&args.suite).map_err(io_err(format!("cannot read {}", args.suite.display())))?;
            let suite: TestSuite = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(ConfigError::Invalid(format!("{} is not a suite file: {e}", args.suite.display()))))?;
            print!("{}", render_suite(&subject, &suite)?);
            Ok(())
        }
        Command::ValidateSubject(args) => {
            let subject = load(args.subject.as_deref())?;
            print!("{}", describe_subject(&subject, args.targets));
            if args.pretty {
                print!("\n{}", subject.pretty());
            }
            Ok(())
        }
    }
}

/// Loads `path`, or the bundled fixture when `None`.
pub fn load(path: Option<&Path>) -> Result<SubjectClass, CliError> {
    match path {
        Some(p) => load_subject(p).map_err(|e| CliError::Subject(format!("{}: {e}", p.display()))),
        None => SubjectClass::parse(ARRAY_INT_LIST).map_err(|e| CliError::Subject(e.to_string())),
    }
}

fn base_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.subject.is_some() {
        config.subject = common.subject.clone();
    }
    if common.seed.is_some() {
        config.seed = common.seed;
    }
    if common.output_root.is_some() {
        config.output_root = common.output_root.clone();
    }
    if common.run_id.is_some() {
        config.run_id = common.run_id.clone();
    }
    common.search.apply(&mut config.search);
    Ok(config)
}

/// The effective configuration of a `run` invocation.
pub fn run_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = base_config(&args.common)?;
    args.interaction.apply(&mut config.interaction);
    if let Some(m) = args.mode {
        config.mode = m;
    }
    if args.replay_log.is_some() {
        config.replay_log = args.replay_log.clone();
    }
    if args.bind.is_some() {
        config.bind = args.bind.clone();
    }
    if config.mode == Mode::Replay && config.replay_log.is_none() {
        return Err(ConfigError::Invalid("replay mode needs --replay-log".into()).into());
    }
    config.search_config()?;
    Ok(config)
}

/// A configuration reproducing the run recorded in `args.log`.
pub fn replay_config(args: &ReplayArgs) -> Result<RunConfig, CliError> {
    let log = load_log(&args.log)?;
    let header = log
        .header()
        .ok_or_else(|| ConfigError::Invalid(format!("{} has no header record", args.log.display())))?;
    if let Some(seed) = args.seed {
        if seed != header.seed {
            return Err(ConfigError::Invalid(format!(
                "{} was recorded with seed {}, not {seed}",
                args.log.display(),
                header.seed
            ))
            .into());
        }
    }
    let config = RunConfig {
        subject: args.subject.clone(),
        seed: Some(header.seed),
        mode: Mode::Replay,
        output_root: args.output_root.clone(),
        run_id: args.run_id.clone(),
        bind: None,
        replay_log: Some(args.log.clone()),
        search: crate::config::SearchSection::from_config(&header.search),
        interaction: header.interaction.clone(),
    };
    config.search_config()?;
    Ok(config)
}

fn load_log(path: &Path) -> Result<SessionLog, CliError> {
    SessionLog::load(path).map_err(|e| ConfigError::Invalid(format!("cannot use session log {}: {e}", path.display())).into())
}

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    pub exit_when_done: bool,
    pub score_timeout: Option<Duration>,
}

/// A finished run and where it was written.
#[derive(Debug)]
pub struct Completed {
    pub dir: PathBuf,
    pub result: RunResult,
    pub targets: usize,
}

impl Completed {
    pub fn summary(&self) -> String {
        let r = &self.result;
        format!(
            "{}: {} tests covering {} of {} targets after {} generations, {} interactions in {} moments\nsuite: {}",
            self.dir.display(),
            r.suite.len(),
            r.suite.covered().len(),
            self.targets,
            r.generations,
            r.interactions,
            r.moments,
            self.dir.join(output::SUITE_FILE).display()
        )
    }
}

/// Prints a progress line every 100 generations and at each moment.
struct Progress;

impl EventSink for Progress {
    fn emit(&mut self, event: &Event) {
        match &event.kind {
            EventKind::GenerationProgress {
                generation,
                coverage,
                covered,
                ..
            } if generation % 100 == 0 => {
                eprintln!("generation {generation}: {covered} targets covered ({:.1}%)", coverage * 100.0);
            }
            EventKind::MomentOpened { moment, generation } => {
                eprintln!("interaction moment {moment} at generation {generation}");
            }
            EventKind::RunAborted { reason } => eprintln!("run aborted: {reason}"),
            _ => {}
        }
    }
}

/// Runs with the configured scorer and writes the run directory.
pub fn run(config: &RunConfig, server: &ServerOptions, quiet: bool) -> Result<Completed, CliError> {
    let search = config.search_config()?;
    let subject = load(config.subject.as_deref())?;
    let targets = extract_targets(&subject);
    let replay = match (&config.mode, &config.replay_log) {
        (Mode::Replay, Some(path)) => Some(checked_replay(path, &subject, &search, config)?),
        _ => None,
    };
    let id = config
        .run_id
        .clone()
        .unwrap_or_else(|| format!("{}-seed{}", subject.name.to_lowercase(), search.seed));
    let root = config.resolved_output_root();
    let dir = output::create_run_dir(&root, &id).map_err(io_err(format!("cannot create run directory under {}", root.display())))?;
    output::write_config(&dir, config).map_err(io_err("cannot write config echo"))?;

    let result = match config.mode {
        Mode::InteractiveServer => serve(config, server, &subject, &targets, &search, &dir, quiet, &id),
        mode => {
            let mut scorer: Box<dyn Scorer> = match mode {
                Mode::Headless => Box::new(HeuristicScorer::default()),
                Mode::InteractiveConsole => Box::new(ConsoleScorer::new(io::stdin().lock(), io::stdout())),
                Mode::Replay => Box::new(replay.expect("replay log checked above")),
                Mode::InteractiveServer => unreachable!(),
            };
            engine(&subject, &targets, &search, config, scorer.as_mut(), None, &dir, quiet)
        }
    }?;
    Ok(Completed {
        dir,
        result,
        targets: targets.len(),
    })
}

fn checked_replay(path: &Path, subject: &SubjectClass, search: &SearchConfig, config: &RunConfig) -> Result<ReplayScorer, CliError> {
    let log = load_log(path)?;
    let header = log
        .header()
        .ok_or_else(|| ConfigError::Invalid(format!("{} has no header record", path.display())))?;
    if header.subject != subject.name {
        return Err(CliError::Subject(format!(
            "{} was recorded for subject {}, not {}",
            path.display(),
            header.subject,
            subject.name
        )));
    }
    if header.search != *search || header.interaction != config.interaction {
        return Err(ConfigError::Invalid(format!(
            "{} was recorded with a different configuration; use `rtgen replay --log {}`",
            path.display(),
            path.display()
        ))
        .into());
    }
    Ok(ReplayScorer::from_records(&log.records))
}

#[allow(clippy::too_many_arguments)]
fn engine(
    subject: &SubjectClass,
    targets: &TargetSet,
    search: &SearchConfig,
    config: &RunConfig,
    scorer: &mut dyn Scorer,
    extra: Option<&mut dyn EventSink>,
    dir: &Path,
    quiet: bool,
) -> Result<RunResult, CliError> {
    let mut file = JsonlSink::create(&dir.join(output::EVENTS_FILE)).map_err(io_err("cannot create event file"))?;
    let mut progress = Progress;
    let outcome = {
        let mut sinks: Vec<&mut dyn EventSink> = vec![&mut file];
        if !quiet {
            sinks.push(&mut progress);
        }
        if let Some(e) = extra {
            sinks.push(e);
        }
        let mut tee = Tee(sinks);
        let options = RunOptions {
            artifact_dir: Some(dir.to_path_buf()),
        };
        run_interactive(subject, targets, search, &config.interaction, scorer, &mut tee, &options)
    };
    file.finish().map_err(io_err("cannot write event file"))?;
    match outcome {
        Ok(result) => {
            output::write_result(dir, &result).map_err(io_err(format!("cannot write results to {}", dir.display())))?;
            Ok(result)
        }
        Err(RunError::Aborted { reason, log, .. }) => {
            output::write_log(dir, &log).map_err(io_err("cannot write session log"))?;
            Err(CliError::Aborted {
                reason,
                dir: dir.to_path_buf(),
            })
        }
        Err(RunError::Artifact(e)) => Err(io_err("cannot write interaction files")(e)),
    }
}

#[allow(clippy::too_many_arguments)]
fn serve(
    config: &RunConfig,
    options: &ServerOptions,
    subject: &SubjectClass,
    targets: &TargetSet,
    search: &SearchConfig,
    dir: &Path,
    quiet: bool,
    run_id: &str,
) -> Result<RunResult, CliError> {
    let runtime = tokio::runtime::Runtime::new().map_err(io_err("cannot start the server runtime"))?;
    let bind = config.resolved_bind();
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(io_err(format!("cannot listen on {bind}; choose another address with --bind")))?;
        let addr = listener.local_addr().map_err(io_err("cannot read the server address"))?;
        eprintln!("session server listening on http://{addr}");
        let (session, scorer) = Session::new(run_id, config.interaction.max_times);
        let server = tokio::spawn(std::future::IntoFuture::into_future(axum::serve(listener, router(session.clone()))));

        let (subject, targets, search, config, dir) =
            (subject.clone(), targets.clone(), search.clone(), config.clone(), dir.to_path_buf());
        let timeout = options.score_timeout;
        let engine_session = session.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            let mut scorer = scorer.with_timeout(timeout);
            let mut sink = engine_session.sink();
            engine(&subject, &targets, &search, &config, &mut scorer, Some(&mut sink), &dir, quiet)
        })
        .await
        .map_err(|e| CliError::Io(anyhow::anyhow!("engine thread failed: {e}")))?;
        match &outcome {
            Ok(result) => session.finish(result.suite_text.clone()),
            Err(e) => session.abort(e.to_string()),
        }
        if !options.exit_when_done {
            eprintln!("run complete; still serving on http://{addr} until interrupted");
            let _ = tokio::signal::ctrl_c().await;
        }
        server.abort();
        outcome
    })
}

fn exp1(args: &Exp1Args) -> Result<(), CliError> {
    let config = base_config(&args.common)?;
    let first = config.seed.unwrap_or(0);
    let search = config.search.with_seed(first);
    search.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if args.seeds == 0 {
        return Err(ConfigError::Invalid("--seeds must be positive".into()).into());
    }
    let subject = load(config.subject.as_deref())?;
    let targets = extract_targets(&subject);
    let seeds: Vec<u64> = (first..first + args.seeds).collect();
    if !args.common.quiet {
        eprintln!("running {} searches on {}", seeds.len(), subject.name);
    }
    let records = collect_records(&subject, &targets, &search, &seeds);
    let report = experiment1_report(&subject.name, seeds.len(), &records);
    let id = config
        .run_id
        .clone()
        .unwrap_or_else(|| format!("exp1-{}", subject.name.to_lowercase()));
    let root = config.resolved_output_root();
    let dir = output::create_run_dir(&root, &id).map_err(io_err(format!("cannot create output directory under {}", root.display())))?;
    output::write_config(&dir, &config).map_err(io_err("cannot write config echo"))?;
    let mut lines = String::new();
    for r in &records {
        lines.push_str(&serde_json::to_string(r).expect("records serialize"));
        lines.push('\n');
    }
    let text = report.render();
    let write = || -> io::Result<()> {
        std::fs::write(dir.join("records.jsonl"), &lines)?;
        std::fs::write(dir.join("report.txt"), &text)?;
        output::write_json(&dir.join("report.json"), &report)
    };
    write().map_err(io_err(format!("cannot write results to {}", dir.display())))?;
    let mut out = io::stdout().lock();
    let _ = write!(out, "{text}");
    let _ = writeln!(out, "records and report in {}", dir.display());
    Ok(())
}

/// The text form of a saved suite.
pub fn render_suite(subject: &SubjectClass, suite: &TestSuite) -> Result<String, CliError> {
    if suite.subject != subject.name {
        return Err(CliError::Subject(format!(
            "the suite was generated for {}, not {}; pass --subject",
            suite.subject, subject.name
        )));
    }
    let targets = extract_targets(subject);
    if suite.tests.iter().any(|t| t.test.target.0 as usize >= targets.len()) {
        return Err(CliError::Subject("the suite refers to targets this subject does not have".into()));
    }
    let ctx = Context {
        subject,
        targets: &targets,
        step_budget: 0,
    };
    Ok(suite.render(ctx))
}

pub fn describe_subject(subject: &SubjectClass, list_targets: bool) -> String {
    let targets = extract_targets(subject);
    let mut out = format!(
        "{}: {} constructors, {} methods, {} targets ({} lines, {} branch outcomes, {} mutants)\n",
        subject.name,
        subject.constructors.len(),
        subject.methods.len(),
        targets.len(),
        targets.count(TargetKind::Line),
        targets.count(TargetKind::BranchTrue) + targets.count(TargetKind::BranchFalse),
        targets.count(TargetKind::WeakMutant),
    );
    if list_targets {
        for t in targets.iter() {
            out.push_str(&format!("{:<10} {}\n", t.label, subject.method_name(t.method)));
        }
    }
    out
}
