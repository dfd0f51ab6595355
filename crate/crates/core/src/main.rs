use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use shuffle_codes::bounds::{density_table, pc_error_bound, pc_error_bound_simplified, rc_error_bound, LogBase};
use shuffle_codes::channel::ReadCounts;
use shuffle_codes::harness::{
    rc_codebook, run_experiment, run_sweep, ExperimentResult, ExperimentSpec, HarnessError, SweepOptions, SweepRow,
};
use shuffle_codes::partition::{
    decode, encode, rank, subset_counts, unrank, CodewordRecord, MessageIndex, PartitionMessage,
};
use shuffle_codes::verify::{run_suite, Suite};
use shuffle_codes::{DerivedSizes, SystemParams};

const THREADS_ENV: &str = "SHUFFLECODE_THREADS";

#[derive(Parser)]
#[command(name = "shufflecode", version, about = "Random and partition coding over the shuffling-sampling DNA channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the partition-code error probability.
    PcRun(RunArgs),
    /// Estimate the random-coding error probability with a seeded codebook.
    RcRun(RcRunArgs),
    /// Run a grid of experiments into a resumable CSV file.
    Sweep(SweepArgs),
    /// Evaluate the partition-code bound (and optionally the random-coding bound).
    Bounds(BoundsArgs),
    /// Tabulate the leading density factors of both schemes over beta.
    Density(DensityArgs),
    /// Run the built-in self-check suites.
    Verify(VerifyArgs),
    /// Partition-code message and codeword tooling.
    #[command(subcommand)]
    Codec(CodecCommand),
}

#[derive(Args, Clone, Default)]
struct ParamArgs {
    /// Molecules per codeword.
    #[arg(long = "M")]
    molecules: Option<u64>,
    /// Alphabet size |A|.
    #[arg(long)]
    alphabet: Option<u32>,
    /// Molecule length parameter (natural-log units).
    #[arg(long)]
    beta: Option<f64>,
    /// Coverage depth K/M.
    #[arg(long)]
    xi: Option<f64>,
    /// Partition design parameter in [0, 1].
    #[arg(long)]
    rho: Option<f64>,
    /// key=value or JSON file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Pretty,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the trials.
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Only fail when more than subset_size used types are unseen.
    #[arg(long)]
    relaxed_zero_rule: bool,
    #[arg(long, value_enum, default_value = "pretty")]
    format: Format,
}

#[derive(Args)]
struct RcRunArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    codebook_size: Option<usize>,
    /// Rate slack used when reporting the random-coding bound.
    #[arg(long)]
    delta: Option<f64>,
    /// Write the generated codebook as JSON.
    #[arg(long)]
    save_codebook: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON array of experiment specs.
    #[arg(long)]
    grid: PathBuf,
    /// CSV file to create or resume; the JSON summary goes next to it.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    parallel_experiments: bool,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Also evaluate the random-coding bound with this rate slack.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long, default_value_t = 2)]
    alphabet: u32,
    /// Log base for beta and the factors: e, 2, 10 or any positive number.
    #[arg(long, default_value = "e")]
    log_base: LogBase,
    /// Partition design parameters, one column each.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.5, 1.0])]
    rho: Vec<f64>,
    /// Grid resolution over (0, 1/log|A|).
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Write the table here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write a gnuplot script plotting the table.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: Suite,
}

#[derive(Subcommand)]
enum CodecCommand {
    /// Message index to assignment.
    Unrank {
        #[command(flatten)]
        layout: LayoutArgs,
        #[arg(long)]
        index: String,
    },
    /// Assignment to message index.
    Rank {
        #[command(flatten)]
        layout: LayoutArgs,
        #[arg(long, value_delimiter = ',')]
        assignment: Vec<u32>,
    },
    /// Codeword counts for a message.
    Encode {
        #[command(flatten)]
        layout: LayoutArgs,
        #[arg(long = "M")]
        molecules: u64,
        #[arg(long, value_delimiter = ',', conflicts_with = "index")]
        assignment: Vec<u32>,
        #[arg(long)]
        index: Option<String>,
    },
    /// Sort-decode a vector of read counts.
    Decode {
        #[command(flatten)]
        layout: LayoutArgs,
        #[arg(long, value_delimiter = ',')]
        counts: Vec<u64>,
        #[arg(long)]
        relaxed_zero_rule: bool,
    },
}

#[derive(Args)]
struct LayoutArgs {
    /// Number of used molecule types.
    #[arg(long)]
    neff: u64,
    /// Number of subsets; must divide neff.
    #[arg(long)]
    subsets: u64,
}

impl LayoutArgs {
    fn sizes(&self, reads: u64) -> Result<DerivedSizes, CliError> {
        if self.subsets == 0 || self.neff == 0 || !self.neff.is_multiple_of(self.subsets) {
            return Err(CliError::Invalid(format!("--subsets {} must divide --neff {}", self.subsets, self.neff)));
        }
        Ok(DerivedSizes::from_layout(self.subsets, self.neff / self.subsets, reads))
    }
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Io(String),
    VerifyFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
            CliError::VerifyFailed(_) => 3,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

/// Values read from `--config`; flags given on the command line win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(alias = "m")]
    #[serde(rename = "M")]
    molecules: Option<u64>,
    alphabet: Option<u32>,
    beta: Option<f64>,
    xi: Option<f64>,
    rho: Option<f64>,
    trials: Option<u64>,
    seed: Option<u64>,
    threads: Option<usize>,
    codebook_size: Option<usize>,
    delta: Option<f64>,
}

fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value = if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).map_err(invalid)?
    } else {
        let mut map = Map::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("{}:{}: expected key=value", path.display(), lineno + 1)))?;
            let raw = raw.trim();
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
            map.insert(key.trim().to_owned(), value);
        }
        Value::Object(map)
    };
    serde_json::from_value(value).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn need<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| invalid(format!("missing --{name}")))
}

fn resolve_params(args: &ParamArgs) -> Result<(SystemParams, ConfigFile), CliError> {
    let config = match &args.config {
        Some(path) => load_config(path)?,
        None => ConfigFile::default(),
    };
    let params = SystemParams::new(
        need(args.molecules.or(config.molecules), "M")?,
        need(args.alphabet.or(config.alphabet), "alphabet")?,
        need(args.beta.or(config.beta), "beta")?,
        need(args.xi.or(config.xi), "xi")?,
        need(args.rho.or(config.rho), "rho")?,
    )
    .map_err(invalid)?;
    if !params.is_short_molecule() {
        eprintln!("warning: beta * ln|A| = {:.4} >= 1 is outside the short-molecule regime", params.type_exponent());
    }
    Ok((params, config))
}

fn build_spec(run: &RunArgs, config: &ConfigFile, params: SystemParams) -> ExperimentSpec {
    ExperimentSpec::partition(params, run.trials.or(config.trials).unwrap_or(10_000), run.seed.or(config.seed).unwrap_or(0))
        .with_parallelism(run.threads.or(config.threads).unwrap_or(1))
        .with_strict_zero_rule(!run.relaxed_zero_rule)
}

fn emit_result(result: &ExperimentResult, format: Format) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, result).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.serialize(SweepRow::from(result)).map_err(|e| CliError::Io(e.to_string()))?;
            w.flush()?;
        }
        Format::Pretty => {
            let s = &result.sizes;
            writeln!(out, "scheme        {}", result.spec.scheme)?;
            writeln!(out, "sizes         n={} n_eff={} K={} L={} subsets={}x{}", s.n, s.n_eff, s.reads, s.length, s.num_subsets, s.subset_size)?;
            writeln!(out, "codebook      {}", result.codebook_size)?;
            writeln!(out, "errors        {} / {}", result.errors, result.spec.trials)?;
            writeln!(out, "  zero-count  {}", result.zero_count_errors)?;
            writeln!(out, "  order       {}", result.order_errors)?;
            writeln!(out, "error rate    {:.6e}  (95% Wilson [{:.6e}, {:.6e}])", result.error_rate, result.ci_low, result.ci_high)?;
            writeln!(out, "bound         {:.6e}  (terms {:.6e}, {:.6e})", result.bound_total, result.bound_term1, result.bound_term2)?;
            writeln!(out, "seed          {}", result.spec.master_seed)?;
            writeln!(out, "wall time     {} ms", result.wall_time_ms)?;
        }
    }
    Ok(())
}

fn pc_run(args: RunArgs) -> Result<(), CliError> {
    let (params, config) = resolve_params(&args.params)?;
    let spec = build_spec(&args, &config, params);
    emit_result(&run_experiment(&spec)?, args.format)
}

fn rc_run(args: RcRunArgs) -> Result<(), CliError> {
    let (params, config) = resolve_params(&args.run.params)?;
    let mut spec = build_spec(&args.run, &config, params);
    spec.scheme = shuffle_codes::harness::Scheme::RandomCoding;
    spec.codebook_size = Some(
        args.codebook_size
            .or(config.codebook_size)
            .ok_or_else(|| invalid("missing --codebook-size"))?,
    );
    spec.rc_delta = args.delta.or(config.delta).unwrap_or(spec.rc_delta);
    if let Some(path) = &args.save_codebook {
        let book = rc_codebook(&spec)?;
        let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        book.write_json(BufWriter::new(file)).map_err(|e| CliError::Io(e.to_string()))?;
    }
    emit_result(&run_experiment(&spec)?, args.run.format)
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let file = File::open(&args.grid).map_err(|e| CliError::Io(format!("{}: {e}", args.grid.display())))?;
    let grid: Vec<ExperimentSpec> = serde_json::from_reader(io::BufReader::new(file)).map_err(invalid)?;
    let summary = run_sweep(&grid, &args.output, SweepOptions { parallel_experiments: args.parallel_experiments })?;
    eprintln!("computed {}, skipped {}, failed {}", summary.computed, summary.skipped, summary.failures.len());
    for (i, msg) in &summary.failures {
        eprintln!("  grid[{i}]: {msg}");
    }
    if summary.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{} experiment(s) failed", summary.failures.len())))
    }
}

fn bounds(args: BoundsArgs) -> Result<(), CliError> {
    let (params, config) = resolve_params(&args.params)?;
    let sizes = params.derive().map_err(invalid)?;
    let mut out = json!({
        "sizes": sizes,
        "partition": pc_error_bound(&params),
        "partition_simplified": pc_error_bound_simplified(&params).ok(),
    });
    if let Some(delta) = args.delta.or(config.delta) {
        out["random_coding"] = serde_json::to_value(rc_error_bound(&params, delta).map_err(invalid)?).map_err(invalid)?;
    }
    println!("{}", serde_json::to_string_pretty(&out).map_err(invalid)?);
    Ok(())
}

fn density(args: DensityArgs) -> Result<(), CliError> {
    if args.alphabet < 2 {
        return Err(invalid("--alphabet must be at least 2"));
    }
    if let Some(rho) = args.rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(invalid(format!("rho {rho} outside [0, 1]")));
    }
    if args.steps < 2 {
        return Err(invalid("--steps must be at least 2"));
    }
    let rows = density_table(args.alphabet, args.log_base, &args.rho, args.steps);
    let mut text = String::from("beta,rc");
    for rho in &args.rho {
        text.push_str(&format!(",pc_rho_{rho}"));
    }
    text.push('\n');
    for row in &rows {
        text.push_str(&format!("{:.9},{:.9}", row.beta, row.rc));
        for v in &row.pc {
            text.push_str(&format!(",{v:.9}"));
        }
        text.push('\n');
    }
    match &args.output {
        Some(path) => std::fs::write(path, &text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    if let Some(script) = &args.gnuplot {
        let data = args.output.as_ref().map_or("density.csv".to_owned(), |p| p.display().to_string());
        let mut plot = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'beta (log base {})'\nset ylabel 'leading factor'\nplot '{data}' using 1:2 with lines",
            args.log_base
        );
        for col in 0..args.rho.len() {
            plot.push_str(&format!(", '' using 1:{} with lines", col + 3));
        }
        plot.push('\n');
        std::fs::write(script, plot).map_err(|e| CliError::Io(format!("{}: {e}", script.display())))?;
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<(), CliError> {
    let outcomes = run_suite(args.suite);
    let mut failed = 0;
    for o in &outcomes {
        println!("{} {} ({} cases, {} failures)", if o.passed() { "PASS" } else { "FAIL" }, o.name, o.cases, o.failures);
        failed += usize::from(!o.passed());
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::VerifyFailed(failed))
    }
}

fn parse_index(text: &str) -> Result<MessageIndex, CliError> {
    text.parse().map(MessageIndex).map_err(|_| invalid(format!("invalid index '{text}'")))
}

fn codec(cmd: CodecCommand) -> Result<(), CliError> {
    let out = match cmd {
        CodecCommand::Unrank { layout, index } => {
            let sizes = layout.sizes(1)?;
            let msg = unrank(&parse_index(&index)?, &sizes).map_err(invalid)?;
            json!({ "assignment": msg.assignment })
        }
        CodecCommand::Rank { layout, assignment } => {
            let sizes = layout.sizes(1)?;
            let msg = PartitionMessage::new(assignment, &sizes).map_err(invalid)?;
            json!({ "index": rank(&msg, &sizes).map_err(invalid)? })
        }
        CodecCommand::Encode { layout, molecules, assignment, index } => {
            let sizes = layout.sizes(molecules)?;
            let msg = match index {
                Some(i) => unrank(&parse_index(&i)?, &sizes).map_err(invalid)?,
                None => PartitionMessage::new(assignment, &sizes).map_err(invalid)?,
            };
            let counts = subset_counts(molecules, &sizes).map_err(invalid)?;
            let cw = encode(&msg, &counts, &sizes);
            serde_json::to_value(CodewordRecord { counts: cw.counts()[..sizes.n_eff as usize].to_vec(), assignment: msg.assignment })
                .map_err(invalid)?
        }
        CodecCommand::Decode { layout, counts, relaxed_zero_rule } => {
            let reads = ReadCounts::new(counts).map_err(invalid)?;
            let sizes = layout.sizes(reads.reads())?;
            match decode(&reads, &sizes, !relaxed_zero_rule) {
                Ok(msg) => json!({ "assignment": msg.assignment }),
                Err(failure) => json!({ "failure": failure.to_string() }),
            }
        }
    };
    println!("{out}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::PcRun(a) => pc_run(a),
        Command::RcRun(a) => rc_run(a),
        Command::Sweep(a) => sweep(a),
        Command::Bounds(a) => bounds(a),
        Command::Density(a) => density(a),
        Command::Verify(a) => verify(a),
        Command::Codec(c) => codec(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Invalid(m) | CliError::Io(m) => eprintln!("error: {m}"),
                CliError::VerifyFailed(n) => eprintln!("error: {n} check(s) failed"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
