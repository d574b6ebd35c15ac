//! Command implementations behind the `afm-forge` binary. Each command
//! returns a [`CommandOutcome`] instead of exiting, so tests can drive them.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use afm_forge::knowledge::{Decision, DomainKnowledge, Question, ScriptedProvider};
use afm_forge::labkit::{Axis, BenchPlan, Trend};
use afm_forge::pipeline::{ingest_with, synthesize, SynthesisError, SynthesisOptions};
use afm_forge::semantics::{audit_maximality, check_semantics, enumerate_configurations, SemanticsError, DEFAULT_BUDGET};
use afm_forge::{generate_matrix, load_dk, run_benchmark, AttributedFeatureModel, ConfigurationMatrix, GeneratorParams};
use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

/// What a command did: its exit code, what it has to say and the files it
/// wrote.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommandOutcome {
    pub code: i32,
    pub messages: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

impl CommandOutcome {
    fn fail(code: i32, message: impl Into<String>) -> Self {
        CommandOutcome { code, messages: vec![message.into()], artifacts: Vec::new() }
    }

    fn say(&mut self, message: impl Into<String>) {
        self.messages.push(message.into());
    }

    fn write(&mut self, path: &Path, contents: &str) -> Result<(), CommandOutcome> {
        std::fs::write(path, contents)
            .map_err(|e| CommandOutcome::fail(EXIT_INPUT, format!("io: cannot write {}: {e}", path.display())))?;
        self.artifacts.push(path.to_path_buf());
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "afm-forge", version, about = "Synthesize attributed feature models from configuration matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a model from a matrix.
    Synth(SynthArgs),
    /// Compare a model with a matrix and audit its maximality.
    Check(CheckArgs),
    /// List every configuration of a model.
    Enumerate(EnumerateArgs),
    /// Generate a random matrix.
    Gen(GenArgs),
    /// Time synthesis over a parameter sweep.
    Bench(BenchArgs),
    /// Serve interactive sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub matrix: PathBuf,
    /// Domain knowledge file.
    #[arg(long)]
    pub dk: Option<PathBuf>,
    /// Model JSON output; the text rendering goes next to it with a `.txt`
    /// extension. Defaults to `<matrix>.afm.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Leave the residual constraint out (diagram-only model).
    #[arg(long)]
    pub no_phi: bool,
    /// Compute or-groups, optionally with a budget in milliseconds.
    #[arg(long, value_name = "MS", num_args = 0..=1, require_equals = true, default_missing_value = "10000")]
    pub or_groups: Option<u64>,
    /// Only emit `=` comparisons on textual attributes.
    #[arg(long)]
    pub no_textual_equality: bool,
    /// Drop duplicate rows with a warning instead of rejecting them.
    #[arg(long)]
    pub dedup: bool,
    /// Ask on the terminal for each decision the knowledge file leaves open.
    #[arg(long, conflicts_with = "no_interactive")]
    pub interactive: bool,
    /// Fill open decisions with heuristic defaults (the default).
    #[arg(long)]
    pub no_interactive: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub afm: PathBuf,
    pub matrix: PathBuf,
    /// Knowledge file naming identifier columns of the matrix.
    #[arg(long)]
    pub dk: Option<PathBuf>,
    #[arg(long)]
    pub dedup: bool,
    /// Maximum search nodes per enumeration.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    pub afm: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    /// Print only the number of configurations.
    #[arg(long)]
    pub count: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of variables.
    #[arg(short = 'v', long = "v")]
    pub v: usize,
    /// Number of configurations requested.
    #[arg(short = 'c', long = "c")]
    pub c: usize,
    /// Maximum domain size.
    #[arg(short = 'd', long = "d")]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output; standard output if absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write the column classification as a knowledge file.
    #[arg(long)]
    pub dk_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// `axis=from:to` (doubling from `from`, ending at `to`) or
    /// `axis=a,b,c`; axis is one of v, c, d.
    #[arg(long)]
    pub sweep: String,
    #[arg(long = "v", default_value_t = 50)]
    pub v: usize,
    #[arg(long = "c", default_value_t = 1000)]
    pub c: usize,
    #[arg(long = "d", default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// `linear` or `sqrt`; defaults to linear for c and sqrt otherwise.
    #[arg(long)]
    pub trend: Option<String>,
    /// Include or-group computation. Runs longer than `--timeout` count as
    /// timed out.
    #[arg(long)]
    pub or_groups: bool,
    #[arg(long, default_value = "10s", value_parser = humantime::parse_duration)]
    pub timeout: Duration,
    #[arg(long)]
    pub no_phi: bool,
    /// Per-run CSV.
    #[arg(short, long, default_value = "bench.csv")]
    pub output: PathBuf,
    /// Medians and fitted line; defaults to `<output>.plot.csv`.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Directory where sessions are kept across restarts.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CommandOutcome {
    match cli.command {
        Command::Synth(a) => {
            let stdin = std::io::stdin();
            cmd_synth(&a, &mut stdin.lock(), &mut std::io::stderr())
        }
        Command::Check(a) => cmd_check(&a),
        Command::Enumerate(a) => cmd_enumerate(&a),
        Command::Gen(a) => cmd_gen(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Serve(a) => cmd_serve(&a),
    }
}

/// Sizes the global thread pool from `AFM_FORGE_THREADS` when set.
pub fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("AFM_FORGE_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| format!("AFM_FORGE_THREADS must be a number, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String, CommandOutcome> {
    std::fs::read_to_string(path)
        .map_err(|e| CommandOutcome::fail(EXIT_INPUT, format!("io: cannot read {}: {e}", path.display())))
}

fn read_dk(path: Option<&Path>) -> Result<DomainKnowledge, CommandOutcome> {
    match path {
        None => Ok(DomainKnowledge::default()),
        Some(p) => load_dk(&read(p)?)
            .map_err(|e| CommandOutcome::fail(EXIT_INPUT, format!("knowledge: {}: {e}", p.display()))),
    }
}

fn read_matrix(path: &Path, dk: &DomainKnowledge, dedup: bool) -> Result<ConfigurationMatrix, CommandOutcome> {
    ingest_with(&read(path)?, dk, dedup)
        .map_err(|e| CommandOutcome::fail(EXIT_INPUT, format!("matrix: {}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<AttributedFeatureModel, CommandOutcome> {
    AttributedFeatureModel::from_json(&read(path)?)
        .map_err(|e| CommandOutcome::fail(EXIT_INPUT, format!("model: {}: {e}", path.display())))
}

fn synthesis_failure(e: &SynthesisError) -> CommandOutcome {
    let code = if e.code() == "io" { EXIT_INPUT } else { EXIT_VALIDATION };
    CommandOutcome::fail(code, format!("{}: {e}", e.stage()))
}

fn semantics_failure(e: &SemanticsError) -> CommandOutcome {
    let code = if matches!(e, SemanticsError::BudgetExceeded(_)) { EXIT_BUDGET } else { EXIT_VALIDATION };
    CommandOutcome::fail(code, format!("semantics: {e}"))
}

/// `x.afm.json` -> `x.afm.txt`.
pub fn text_path(json: &Path) -> PathBuf {
    json.with_extension("txt")
}

fn default_output(matrix: &Path) -> PathBuf {
    let stem = matrix.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    matrix.with_file_name(format!("{stem}.afm.json"))
}

pub fn cmd_synth(args: &SynthArgs, input: &mut dyn BufRead, prompt: &mut dyn Write) -> CommandOutcome {
    match synth_inner(args, input, prompt) {
        Ok(o) | Err(o) => o,
    }
}

fn synth_inner(args: &SynthArgs, input: &mut dyn BufRead, prompt: &mut dyn Write) -> Result<CommandOutcome, CommandOutcome> {
    let dk = read_dk(args.dk.as_deref())?;
    let matrix = read_matrix(&args.matrix, &dk, args.dedup)?;
    let options = SynthesisOptions {
        or_groups: args.or_groups.map(Duration::from_millis),
        phi: !args.no_phi,
        textual_equality: !args.no_textual_equality,
    };
    let model = if args.interactive {
        ask_until_done(&matrix, &dk, &options, input, prompt)?
    } else {
        afm_forge::synthesize_with_knowledge(&matrix, &dk, &options).map_err(|e| synthesis_failure(&e))?
    };
    let mut out = CommandOutcome::default();
    if model.provenance.options.or_groups == "timed-out" {
        out.say("warning: or-group search ran out of time; or-groups omitted");
    }
    let json_path = args.output.clone().unwrap_or_else(|| default_output(&args.matrix));
    out.write(&json_path, &model.to_json())?;
    out.write(&text_path(&json_path), &model.render_text())?;
    out.say(format!(
        "{} features, {} constraints, written to {}",
        model.features.len(),
        model.constraints.len(),
        json_path.display()
    ));
    Ok(out)
}

/// Replays synthesis with the answers collected so far, asking for one
/// more whenever it stops at an open question. A rejected answer is
/// reported and asked again.
pub fn ask_until_done(
    matrix: &ConfigurationMatrix,
    dk: &DomainKnowledge,
    options: &SynthesisOptions,
    input: &mut dyn BufRead,
    prompt: &mut dyn Write,
) -> Result<AttributedFeatureModel, CommandOutcome> {
    let mut script: Vec<Decision> = Vec::new();
    let mut just_answered = false;
    loop {
        let mut provider = ScriptedProvider::new(dk.clone(), script.clone());
        let err = match synthesize(matrix, &mut provider, options) {
            Ok(m) => return Ok(m),
            Err(e) => e,
        };
        if let Some(q) = err.pending() {
            let answer = ask(q, input, prompt)?;
            script.push(Decision { kind: q.kind, subject: q.subject.clone(), candidates: q.candidates.clone(), answer });
            just_answered = true;
        } else if just_answered && err.code() == "illegal-answer" {
            let _ = writeln!(prompt, "rejected: {err}");
            script.pop();
            just_answered = false;
        } else {
            return Err(synthesis_failure(&err));
        }
    }
}

fn ask(q: &Question, input: &mut dyn BufRead, prompt: &mut dyn Write) -> Result<Vec<String>, CommandOutcome> {
    let io_err = |e: std::io::Error| CommandOutcome::fail(EXIT_INPUT, format!("io: {e}"));
    loop {
        writeln!(prompt, "{} {}:", q.kind.as_str(), q.subject).map_err(io_err)?;
        for (i, c) in q.candidates.iter().enumerate() {
            writeln!(prompt, "  {}) {c}", i + 1).map_err(io_err)?;
        }
        let hint = if q.kind.multi() { "numbers separated by spaces" } else { "a number" };
        write!(prompt, "choose {hint}> ").map_err(io_err)?;
        prompt.flush().map_err(io_err)?;
        let mut line = String::new();
        if input.read_line(&mut line).map_err(io_err)? == 0 {
            return Err(CommandOutcome::fail(EXIT_INPUT, "input ended with questions still open"));
        }
        match parse_choice(q, line.trim()) {
            Some(a) => return Ok(a),
            None => writeln!(prompt, "not understood: {:?}", line.trim()).map_err(io_err)?,
        }
    }
}

/// A candidate named in full, or 1-based candidate numbers.
fn parse_choice(q: &Question, line: &str) -> Option<Vec<String>> {
    if let Some(c) = q.candidates.iter().find(|c| c.as_str() == line) {
        return Some(vec![c.clone()]);
    }
    let picks: Vec<String> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().ok().filter(|&i| i >= 1).and_then(|i| q.candidates.get(i - 1).cloned()))
        .collect::<Option<_>>()?;
    let ok = if q.kind.multi() { !picks.is_empty() } else { picks.len() == 1 };
    ok.then_some(picks)
}

pub fn cmd_check(args: &CheckArgs) -> CommandOutcome {
    let run = || -> Result<CommandOutcome, CommandOutcome> {
        let model = read_model(&args.afm)?;
        let dk = read_dk(args.dk.as_deref())?;
        let matrix = read_matrix(&args.matrix, &dk, args.dedup)?;
        let report = check_semantics(&model, &matrix, args.budget).map_err(|e| semantics_failure(&e))?;
        let audit = audit_maximality(&model, &matrix, args.budget).map_err(|e| semantics_failure(&e))?;
        let mut out = CommandOutcome::default();
        out.say(report.render().trim_end());
        out.say(audit.render().trim_end());
        let ok = report.sound && report.complete && audit.maximal();
        out.code = if ok { EXIT_OK } else { EXIT_VALIDATION };
        Ok(out)
    };
    run().unwrap_or_else(|e| e)
}

pub fn cmd_enumerate(args: &EnumerateArgs) -> CommandOutcome {
    let run = || -> Result<CommandOutcome, CommandOutcome> {
        let model = read_model(&args.afm)?;
        let configs = enumerate_configurations(&model, args.budget).map_err(|e| semantics_failure(&e))?;
        let mut out = CommandOutcome::default();
        if !args.count {
            for c in &configs {
                out.say(c.to_string());
            }
        }
        out.say(format!("{} configurations", configs.len()));
        Ok(out)
    };
    run().unwrap_or_else(|e| e)
}

pub fn cmd_gen(args: &GenArgs) -> CommandOutcome {
    let run = || -> Result<CommandOutcome, CommandOutcome> {
        if args.v == 0 || args.c == 0 || args.d < 2 {
            return Err(CommandOutcome::fail(EXIT_INPUT, "gen: needs v >= 1, c >= 1 and d >= 2"));
        }
        let g = generate_matrix(GeneratorParams::new(args.v, args.c, args.d, args.seed));
        let mut out = CommandOutcome::default();
        let csv = g.matrix.to_csv();
        match &args.output {
            Some(p) => out.write(p, &csv)?,
            None => out.say(csv.trim_end()),
        }
        if let Some(p) = &args.dk_out {
            out.write(p, &g.knowledge.to_json())?;
        }
        if g.effective_rows < args.c {
            log::info!("{} distinct configurations of {} requested", g.effective_rows, args.c);
        }
        Ok(out)
    };
    run().unwrap_or_else(|e| e)
}

/// Parses `axis=from:to` or `axis=a,b,c`.
pub fn parse_sweep(s: &str) -> Result<(Axis, Vec<usize>), String> {
    let (axis, values) = s.split_once('=').ok_or_else(|| format!("sweep {s:?} lacks '='"))?;
    let axis = match axis.trim() {
        "v" => Axis::V,
        "c" => Axis::C,
        "d" => Axis::D,
        other => return Err(format!("unknown sweep axis {other:?}, expected v, c or d")),
    };
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad sweep value {t:?}"));
    let values = match values.split_once(':') {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            if a == 0 || a > b {
                return Err(format!("sweep range {a}:{b} must satisfy 0 < from <= to"));
            }
            let mut vs = Vec::new();
            let mut x = a;
            while x < b {
                vs.push(x);
                x *= 2;
            }
            vs.push(b);
            vs
        }
        None => values.split(',').map(num).collect::<Result<_, _>>()?,
    };
    if values.iter().any(|&x| x == 0) {
        return Err("sweep values must be positive".into());
    }
    Ok((axis, values))
}

pub fn cmd_bench(args: &BenchArgs) -> CommandOutcome {
    let run = || -> Result<CommandOutcome, CommandOutcome> {
        let (axis, values) = parse_sweep(&args.sweep).map_err(|e| CommandOutcome::fail(EXIT_INPUT, e))?;
        let trend = match args.trend.as_deref() {
            None if axis == Axis::C => Trend::Linear,
            None => Trend::Sqrt,
            Some("linear") => Trend::Linear,
            Some("sqrt") => Trend::Sqrt,
            Some(t) => return Err(CommandOutcome::fail(EXIT_INPUT, format!("unknown trend {t:?}"))),
        };
        let plan = BenchPlan {
            points: BenchPlan::sweep(axis, &values, args.v, args.c, args.d, args.seed),
            reps: args.reps,
            options: SynthesisOptions {
                or_groups: args.or_groups.then_some(args.timeout),
                phi: !args.no_phi,
                textual_equality: true,
            },
            axis,
            trend,
        };
        let report = run_benchmark(&plan);
        let mut out = CommandOutcome::default();
        out.write(&args.output, &report.to_csv())?;
        let plot = args.plot.clone().unwrap_or_else(|| args.output.with_extension("plot.csv"));
        out.write(&plot, &report.plot_data())?;
        out.say(report.summary().trim_end());
        Ok(out)
    };
    run().unwrap_or_else(|e| e)
}

pub fn cmd_serve(args: &ServeArgs) -> CommandOutcome {
    let state = match &args.store {
        Some(dir) => match afm_forge_session::AppState::persistent(dir) {
            Ok(s) => s,
            Err(e) => return CommandOutcome::fail(EXIT_INPUT, format!("io: {}: {e}", dir.display())),
        },
        None => afm_forge_session::AppState::in_memory(),
    };
    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => return CommandOutcome::fail(EXIT_INPUT, format!("io: {e}")),
    };
    match rt.block_on(afm_forge_session::serve(args.addr, state)) {
        Ok(()) => CommandOutcome::default(),
        Err(e) => CommandOutcome::fail(EXIT_INPUT, format!("io: {e}")),
    }
}
