//! Command-line front end: parses protocol and set files, dispatches to the
//! engines and prints `key=value` reports (or tab-separated rows).

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ensurelab::explicit::{self, ClosureOptions, ExplicitError};
use ensurelab::format::{self, ParseError, SetFile};
use ensurelab::sets::SetError;
use ensurelab::symbolic::{self, FormulaVerdict, StarOptions, SymbolicError};
use ensurelab::synth_pp::SynthError;
use ensurelab::{multiset, sim, Condition, Configuration, CountingSet, Protocol, StateId};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FALSE: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

/// Placeholder for absent report values.
const NONE: &str = "-";

/// Environment variable overriding the explicit engine's node budget.
pub const BUDGET_VAR: &str = "ENSURELAB_BUDGET";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read `{path}`: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write `{path}`: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("invalid --config: {0}")]
    Config(ParseError),
    #[error(transparent)]
    Explicit(#[from] ExplicitError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("{0}")]
    Data(String),
    #[error("output error: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Write { .. } => EXIT_USAGE,
            CliError::Explicit(ExplicitError::Budget { .. }) => EXIT_INCONCLUSIVE,
            CliError::Output(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ensurelab", version, about = "Synthesize and verify population protocols that ensure output conditions")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Tsv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a population protocol ensuring a size-flexible semilinear condition.
    SynthPp(SynthArgs),
    /// Synthesize an immediate observation protocol ensuring a counting condition.
    SynthIo(SynthArgs),
    /// Simulate one run under the uniform random scheduler.
    Simulate(SimulateArgs),
    /// Decide "ensures" size by size on the explicit state space.
    VerifyExplicit(VerifyExplicitArgs),
    /// Decide "ensures" with the symbolic pre* formula.
    VerifySymbolic(VerifySymbolicArgs),
    /// Check that a protocol computes a predicate over its inputs.
    CheckCompute(CheckComputeArgs),
    /// Simulate a run and remove one agent with the pruning construction.
    PruneDemo(PruneDemoArgs),
    /// Check that adding agents to bottom configurations keeps them bottom.
    BottomClosure(BottomClosureArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    condition: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    protocol: PathBuf,
    /// Initial configuration, e.g. `q1:3,q2:1`.
    #[arg(long)]
    config: String,
    #[arg(long, default_value_t = 100_000)]
    max_steps: usize,
    /// Write the run as tab-separated `step transition config` lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyExplicitArgs {
    #[arg(long)]
    protocol: PathBuf,
    #[arg(long)]
    condition: PathBuf,
    /// `1..8`, `5` or a comma list of either.
    #[arg(long, default_value = "1..6")]
    sizes: String,
}

#[derive(Args, Debug)]
struct VerifySymbolicArgs {
    #[arg(long)]
    protocol: PathBuf,
    #[arg(long)]
    condition: PathBuf,
    /// Iteration cap for each star computation.
    #[arg(long)]
    budget: Option<usize>,
    /// Also run the explicit oracle on sizes 1..=N and tabulate both.
    #[arg(long, value_name = "MAX_SIZE")]
    compare_oracle: Option<u32>,
}

#[derive(Args, Debug)]
struct CheckComputeArgs {
    #[arg(long)]
    protocol: PathBuf,
    /// Set file over the input state names; members map to `true`.
    #[arg(long)]
    predicate: PathBuf,
    #[arg(long, default_value_t = 8)]
    max_size: u32,
}

#[derive(Args, Debug)]
struct PruneDemoArgs {
    #[arg(long)]
    protocol: PathBuf,
    #[arg(long)]
    config: String,
    #[arg(long, default_value_t = 10_000)]
    max_steps: usize,
    /// Start state of the pruned class; with `--to`, otherwise the largest class is used.
    #[arg(long, requires = "to")]
    from: Option<String>,
    #[arg(long, requires = "from")]
    to: Option<String>,
}

#[derive(Args, Debug)]
struct BottomClosureArgs {
    #[arg(long)]
    protocol: PathBuf,
    #[arg(long, default_value_t = 4)]
    max_extra: u32,
    /// Defaults to |Q|^4.
    #[arg(long)]
    threshold: Option<u32>,
    /// Defaults to 2 * threshold + max-extra.
    #[arg(long)]
    max_size: Option<u32>,
}

/// Report records, rendered as `k=v` lines or as TSV with a header row
/// whenever the key set changes.
struct Report {
    format: Format,
    text: String,
    last_keys: Vec<&'static str>,
}

impl Report {
    fn new(format: Format) -> Self {
        Self { format, text: String::new(), last_keys: Vec::new() }
    }

    fn record(&mut self, fields: &[(&'static str, String)]) {
        match self.format {
            Format::Text => {
                let line: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let _ = writeln!(self.text, "{}", line.join(" "));
            }
            Format::Tsv => {
                let keys: Vec<&'static str> = fields.iter().map(|(k, _)| *k).collect();
                if keys != self.last_keys {
                    let _ = writeln!(self.text, "{}", keys.join("\t"));
                    self.last_keys = keys;
                }
                let values: Vec<&str> = fields.iter().map(|(_, v)| v.as_str()).collect();
                let _ = writeln!(self.text, "{}", values.join("\t"));
            }
        }
    }

    /// A comment line: `# ...` in both formats, skipped by TSV readers.
    fn note(&mut self, text: &str) {
        let _ = writeln!(self.text, "# {text}");
    }
}

/// Parses `argv` (including the program name), runs the command and writes
/// the report to `out` and diagnostics to `err`. Returns the exit code.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let budget = std::env::var(BUDGET_VAR).ok();
    run_command_with_budget(argv, budget.as_deref(), out, err)
}

/// [`run_command`] with the budget override passed explicitly.
pub fn run_command_with_budget<I, T>(argv: I, budget: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = out.write_all(rendered.as_bytes());
            } else {
                let _ = err.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    let mut report = Report::new(cli.format);
    report.record(&[
        ("tool", "ensurelab".into()),
        ("version", env!("CARGO_PKG_VERSION").into()),
        ("seed", cli.seed.to_string()),
    ]);
    let result = parse_budget(budget).and_then(|budget| dispatch(&cli, budget, &mut report));
    let _ = out.write_all(report.text.as_bytes());
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn parse_budget(value: Option<&str>) -> Result<usize, CliError> {
    match value {
        None => Ok(explicit::DEFAULT_BUDGET),
        Some(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&b| b > 0)
            .ok_or_else(|| CliError::Usage(format!("{BUDGET_VAR} must be a positive integer, got `{v}`"))),
    }
}

fn dispatch(cli: &Cli, budget: usize, r: &mut Report) -> Result<i32, CliError> {
    match &cli.command {
        Command::SynthPp(a) => synth_pp(a, r),
        Command::SynthIo(a) => synth_io(a, r),
        Command::Simulate(a) => simulate(a, cli.seed, r),
        Command::VerifyExplicit(a) => verify_explicit(a, budget, r),
        Command::VerifySymbolic(a) => verify_symbolic(a, budget, r),
        Command::CheckCompute(a) => check_compute(a, budget, r),
        Command::PruneDemo(a) => prune_demo(a, cli.seed, r),
        Command::BottomClosure(a) => bottom_closure(a, r),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

fn load_protocol(path: &Path) -> Result<Protocol, CliError> {
    format::parse_protocol(&read(path)?).map_err(|source| CliError::Parse { path: path.to_path_buf(), source })
}

fn load_set(path: &Path) -> Result<SetFile, CliError> {
    format::parse_set(&read(path)?).map_err(|source| CliError::Parse { path: path.to_path_buf(), source })
}

fn load_counting_set(path: &Path) -> Result<CountingSet, CliError> {
    match load_set(path)? {
        SetFile::Counting(s) => Ok(s),
        SetFile::Semilinear(_) => {
            Err(CliError::Data(format!("{}: this command needs a set of `cube:` lines", path.display())))
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn render(p: &Protocol, c: &Configuration) -> String {
    multiset::render(c.counts(), p.states())
}

fn state(p: &Protocol, name: &str) -> Result<StateId, CliError> {
    p.state_id(name).ok_or_else(|| CliError::Data(format!("unknown state `{name}`")))
}

fn verdict_word(holds: bool) -> String {
    if holds { "true" } else { "false" }.to_string()
}

fn synth_pp(a: &SynthArgs, r: &mut Report) -> Result<i32, CliError> {
    let s = match load_set(&a.condition)? {
        SetFile::Semilinear(s) => s,
        SetFile::Counting(s) => s.to_semilinear(),
    };
    if let Err(e @ SetError::NotSizeFlexible { .. }) = s.check_size_flexible() {
        r.record(&[("verdict", "not-size-flexible".into()), ("reason", e.to_string())]);
        return Ok(EXIT_FALSE);
    }
    let synth = ensurelab::synth_pp::synthesize_pp_ensurer(&s)?;
    emit_synthesis(&synth, &a.out, r)
}

fn synth_io(a: &SynthArgs, r: &mut Report) -> Result<i32, CliError> {
    let s = load_counting_set(&a.condition)?;
    let synth = match ensurelab::synth_io::synthesize_io_ensurer(&s) {
        Err(SynthError::Set(e @ SetError::NotSizeFlexible { .. })) => {
            r.record(&[("verdict", "not-size-flexible".into()), ("reason", e.to_string())]);
            return Ok(EXIT_FALSE);
        }
        other => other?,
    };
    emit_synthesis(&synth, &a.out, r)
}

fn emit_synthesis(synth: &ensurelab::synth_pp::Synthesis, out: &Path, r: &mut Report) -> Result<i32, CliError> {
    let p = &synth.protocol;
    write_file(out, &format::write_protocol(p, &synth.header))?;
    r.record(&[
        ("protocol", p.name().to_string()),
        ("states", p.num_states().to_string()),
        ("transitions", p.transitions().len().to_string()),
        ("io", p.is_io().to_string()),
        ("out", out.display().to_string()),
    ]);
    Ok(EXIT_OK)
}

fn simulate(a: &SimulateArgs, seed: u64, r: &mut Report) -> Result<i32, CliError> {
    let p = load_protocol(&a.protocol)?;
    let c0 = format::parse_config(&p, &a.config).map_err(CliError::Config)?;
    let trace = sim::run(&p, &c0, seed, a.max_steps);
    if let Some(path) = &a.trace {
        let mut text = String::new();
        let _ = writeln!(text, "0\t-\t{}", render(&p, &c0));
        for (i, (step, c)) in trace.steps().iter().zip(&trace.configs[1..]).enumerate() {
            let t = p.render_transition(&p.transitions()[step.transition]);
            let _ = writeln!(text, "{}\t{t}\t{}", i + 1, render(&p, c));
        }
        write_file(path, &text)?;
    }
    let last = trace.last();
    r.record(&[
        ("initial", render(&p, &c0)),
        ("steps", trace.steps().len().to_string()),
        ("terminated", trace.terminated.to_string()),
        ("final", render(&p, last)),
        ("outputs", multiset::render(&p.output_multiset(last), p.outputs())),
    ]);
    Ok(EXIT_OK)
}

fn verify_explicit(a: &VerifyExplicitArgs, budget: usize, r: &mut Report) -> Result<i32, CliError> {
    let p = load_protocol(&a.protocol)?;
    let cond = load_set(&a.condition)?.into_condition();
    let sizes = format::parse_sizes(&a.sizes).map_err(|e| CliError::Usage(format!("invalid --sizes: {e}")))?;
    let mut code = EXIT_OK;
    for n in sizes {
        match explicit::check_ensures_with_budget(&p, &cond, n, budget) {
            Ok(v) => {
                r.record(&[
                    ("size", n.to_string()),
                    ("verdict", verdict_word(v.holds)),
                    ("witness", v.witness.as_ref().map_or(NONE.into(), |c| render(&p, c))),
                    ("violator", v.violator.as_ref().map_or(NONE.into(), |c| render(&p, c))),
                ]);
                if !v.holds && code == EXIT_OK {
                    code = EXIT_FALSE;
                }
            }
            Err(ExplicitError::Budget { required, .. }) => {
                r.record(&[
                    ("size", n.to_string()),
                    ("verdict", "unknown".into()),
                    ("witness", NONE.into()),
                    ("violator", NONE.into()),
                ]);
                r.note(&format!("size {n} needs {required} configurations, budget is {budget}"));
                code = EXIT_INCONCLUSIVE;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(code)
}

fn verify_symbolic(a: &VerifySymbolicArgs, budget: usize, r: &mut Report) -> Result<i32, CliError> {
    let p = load_protocol(&a.protocol)?;
    let s = load_counting_set(&a.condition)?;
    let opts = StarOptions { budget: a.budget, ..StarOptions::default() };
    let report = symbolic::verify_ensures_symbolic(&p, &s, opts)?;
    let (word, mut code) = match &report.verdict {
        FormulaVerdict::Ensures => ("ensures", EXIT_OK),
        FormulaVerdict::NotEnsures(_) => ("not-ensures", EXIT_FALSE),
        FormulaVerdict::Inconclusive => ("inconclusive", EXIT_INCONCLUSIVE),
    };
    let witness = match &report.verdict {
        FormulaVerdict::NotEnsures(w) => multiset::render(w, p.states()),
        _ => NONE.into(),
    };
    r.record(&[
        ("formula", word.to_string()),
        ("iterations", report.iterations.to_string()),
        ("converged", (report.inner_converged && report.outer_converged).to_string()),
        ("witness", witness),
    ]);

    let Some(max) = a.compare_oracle else { return Ok(code) };
    let cond: Condition = s.into();
    let mut divergent = 0;
    for n in 1..=max {
        let formula = match report.verdict {
            FormulaVerdict::Inconclusive => "unknown",
            _ if report.bad_inputs.members_of_size(n).is_empty() => "true",
            _ => "false",
        };
        let oracle = match explicit::check_ensures_with_budget(&p, &cond, n, budget) {
            Ok(v) => verdict_word(v.holds),
            Err(ExplicitError::Budget { .. }) => "unknown".into(),
            Err(e) => return Err(e.into()),
        };
        let agree = if formula == "unknown" || oracle == "unknown" {
            "unknown"
        } else if formula == oracle {
            "yes"
        } else {
            divergent += 1;
            "no"
        };
        r.record(&[
            ("size", n.to_string()),
            ("formula", formula.into()),
            ("oracle", oracle),
            ("agree", agree.into()),
        ]);
    }
    if divergent > 0 {
        r.record(&[("verdict", "divergent".into()), ("divergent_sizes", divergent.to_string())]);
        code = EXIT_INCONCLUSIVE;
    }
    Ok(code)
}

fn check_compute(a: &CheckComputeArgs, budget: usize, r: &mut Report) -> Result<i32, CliError> {
    let p = load_protocol(&a.protocol)?;
    let pred = load_set(&a.predicate)?.into_condition();
    let dims: Vec<StateId> = pred.dims().iter().map(|d| state(&p, d)).collect::<Result<_, _>>()?;
    if let Some(&q) = dims.iter().find(|&&q| !p.is_input(q)) {
        return Err(CliError::Data(format!("predicate dimension `{}` is not an input state", p.state_name(q))));
    }
    let phi = |c: &Configuration| {
        let x: Vec<u32> = dims.iter().map(|&q| c.get(q)).collect();
        pred.contains(&x)
    };
    let v = explicit::check_computes_with_budget(&p, phi, 1..=a.max_size, budget)?;
    let (witness, bottom) = match &v.witness {
        Some((input, bottom)) => (render(&p, input), render(&p, bottom)),
        None => (NONE.into(), NONE.into()),
    };
    r.record(&[
        ("max_size", a.max_size.to_string()),
        ("inputs", v.inputs_checked.to_string()),
        ("verdict", verdict_word(v.holds)),
        ("witness", witness),
        ("bottom", bottom),
    ]);
    Ok(if v.holds { EXIT_OK } else { EXIT_FALSE })
}

fn prune_demo(a: &PruneDemoArgs, seed: u64, r: &mut Report) -> Result<i32, CliError> {
    let p = load_protocol(&a.protocol)?;
    let c0 = format::parse_config(&p, &a.config).map_err(CliError::Config)?;
    let trace = sim::run(&p, &c0, seed, a.max_steps);
    let e = &trace.execution;
    let endpoints = e.endpoints(&p).map_err(|e| CliError::Data(e.to_string()))?;
    let (q, q2) = match (&a.from, &a.to) {
        (Some(f), Some(t)) => (state(&p, f)?, state(&p, t)?),
        _ => {
            // the most populated class, first in state order on ties
            let mut best: Option<((StateId, StateId), usize)> = None;
            for &(f, t) in &endpoints {
                let k = endpoints.iter().filter(|&&x| x == (f, t)).count();
                if best.is_none_or(|(b, bk)| k > bk || (k == bk && (f, t) < b)) {
                    best = Some(((f, t), k));
                }
            }
            best.map(|(c, _)| c).ok_or_else(|| CliError::Data("configuration has no agents".into()))?
        }
    };
    let class = endpoints.iter().filter(|&&x| x == (q, q2)).count();
    let mut fields = vec![
        ("steps", e.steps().len().to_string()),
        ("from", p.state_name(q).to_string()),
        ("to", p.state_name(q2).to_string()),
        ("class", class.to_string()),
    ];
    fields.push(("final", render(&p, trace.last())));
    match explicit::prune_execution(&p, e, q, q2) {
        Ok(pruned) => {
            let configs = ensurelab::protocol::replay(&p, &pruned).map_err(|e| CliError::Data(e.to_string()))?;
            let last = configs.last().expect("replay starts from the initial configuration");
            fields.extend([
                ("verdict", "pruned".to_string()),
                ("pruned_steps", pruned.steps().len().to_string()),
                ("pruned_final", render(&p, last)),
            ]);
            r.record(&fields);
            Ok(EXIT_OK)
        }
        Err(ExplicitError::PruneClass { needed, .. }) => {
            fields.extend([("verdict", "refused".to_string()), ("pruned_steps", NONE.into()), ("pruned_final", NONE.into())]);
            r.record(&fields);
            r.note(&format!("the class needs more than {needed} agents"));
            Ok(EXIT_FALSE)
        }
        Err(e) => Err(e.into()),
    }
}

fn bottom_closure(a: &BottomClosureArgs, r: &mut Report) -> Result<i32, CliError> {
    let p = load_protocol(&a.protocol)?;
    let mut opts = ClosureOptions::for_protocol(&p, a.max_extra);
    if let Some(t) = a.threshold {
        opts.threshold = t;
        opts.max_size = 2 * t + a.max_extra;
    }
    if let Some(m) = a.max_size {
        opts.max_size = m;
    }
    let report = explicit::bottom_closure_check(&p, opts)?;
    r.record(&[
        ("threshold", opts.threshold.to_string()),
        ("max_extra", opts.max_extra.to_string()),
        ("max_size", opts.max_size.to_string()),
        ("checks", report.checks.to_string()),
        ("total_checks", report.total_checks.to_string()),
        ("violations", report.violations.len().to_string()),
        ("minimal_threshold", report.minimal_threshold.to_string()),
    ]);
    for (b, c) in report.violations.iter().take(10) {
        r.record(&[("bottom", render(&p, b)), ("extended", render(&p, c))]);
    }
    Ok(if report.violations.is_empty() { EXIT_OK } else { EXIT_FALSE })
}
