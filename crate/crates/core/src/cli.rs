use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use tardos::codegen::CodeBook;
use tardos::harness::{
    self, CodeMode, ComparisonRow, Experiment, ExperimentConfig, Provenance, Report, VERSION,
};
use tardos::model::{derive_scheme_params, ProblemInstance, Variant};
use tardos::optimize::{
    build_universal_ladder, default_grid, full_grid, geometric_grid, optimize_constants, sweep,
    Allocation, ConditionVariant,
};
use tardos::strategy::StrategyKind;
use tardos::Error;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TARDOS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "tardos", version, about = "Tardos traitor tracing: optimize, generate, trace, simulate")]
pub struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize the scheme constants for one instance, or sweep over c0.
    Optimize(OptimizeArgs),
    /// Build the per-c ladder of the universal scheme.
    Ladder(LadderArgs),
    /// Write a materialized codebook file.
    Generate(GenerateArgs),
    /// Run a single trial and write its full transcript.
    Trace(TraceArgs),
    /// Run all trials of an experiment config.
    Simulate(SimulateArgs),
    /// Compare summaries written by `simulate`.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

/// Accepts `1000000`, `1e6` or `1.5e3`, as long as the value is integral.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.fract() != 0.0 || !(0.0..1.8e19).contains(&v) {
        return Err(format!("`{s}` is not a non-negative integer"));
    }
    Ok(v as u64)
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let v = parse_count(s)?;
    u32::try_from(v).map_err(|_| format!("`{s}` is too large"))
}

#[derive(Debug, Args)]
struct InstanceArgs {
    #[arg(long, value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, value_parser = parse_count)]
    n: u64,
    #[arg(long)]
    eps1: f64,
    #[arg(long)]
    eps2: f64,
    #[arg(long, value_parser = parse_count)]
    c0: u64,
    /// Delay of the weakly dynamic schemes.
    #[arg(long = "B", visible_alias = "delay", value_parser = parse_u32)]
    b: Option<u32>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse()
}

impl InstanceArgs {
    fn instance(&self) -> tardos::Result<ProblemInstance> {
        let inst = ProblemInstance::new(self.n, self.eps1, self.eps2, self.c0, self.variant)?;
        match self.b {
            Some(b) => inst.with_delay(b),
            None => Ok(inst),
        }
    }
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Sweep c0 over `lo:hi[:step]` or a comma list and emit curve data.
    #[arg(long)]
    sweep: Option<String>,
    /// Override eta for the sweep.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Also write the JSON report (or sweep CSV) here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LadderArgs {
    #[arg(long, value_parser = parse_count)]
    n: u64,
    #[arg(long)]
    eps1: f64,
    #[arg(long)]
    eps2: f64,
    #[arg(long, value_parser = parse_count)]
    c_max: u64,
    #[arg(long, value_enum, default_value = "auto")]
    grid: GridArg,
    #[arg(long, default_value_t = 2.0)]
    ratio: f64,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridArg {
    Auto,
    Full,
    Geometric,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_parser = parse_count)]
    n: u64,
    #[arg(long, value_parser = parse_count)]
    ell: u64,
    /// Bias cutoff; 0 draws pure arcsine biases.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, value_parser = parse_count)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ConfigOverrides {
    #[arg(long, value_parser = parse_count)]
    trials: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    c: Option<u64>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<StrategyKind>,
    #[arg(long, value_parser = parse_count)]
    innocents: Option<u64>,
    /// Trajectory sampling period.
    #[arg(long, value_parser = parse_count)]
    sample_every: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_parser = parse_count)]
    max_positions: Option<u64>,
    /// Output directory; defaults to the config's, then $TARDOS_OUT_DIR, then `out`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Streaming,
    Materialized,
}

impl ConfigOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.c {
            cfg.c = v;
        }
        if let Some(v) = self.strategy {
            cfg.strategy = v;
        }
        if let Some(v) = self.innocents {
            cfg.innocents = Some(v);
        }
        if let Some(v) = self.sample_every {
            cfg.trajectory.every = v;
        }
        if let Some(v) = self.mode {
            cfg.code = match v {
                ModeArg::Streaming => CodeMode::Streaming,
                ModeArg::Materialized => CodeMode::Materialized,
            };
        }
        if let Some(v) = self.max_positions {
            cfg.max_positions = Some(v);
        }
        if let Some(v) = &self.out_dir {
            cfg.output_dir = Some(v.clone());
        }
        if cfg.output_dir.is_none() {
            cfg.output_dir = Some(default_out_dir());
        }
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long)]
    config: PathBuf,
    /// Trial index whose seed stream is used.
    #[arg(long, default_value = "0", value_parser = parse_count)]
    trial: u64,
    /// Trace against this codebook file instead of the seeded stream.
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// `summary.json` files written by `simulate`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Summary whose theoretical length the others are compared with.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

/// Runtime failures exit with 1, bad input with 2.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidInstance(_) | Error::Json(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Ladder(a) => ladder(a),
        Command::Generate(a) => generate(a),
        Command::Trace(a) => trace(a, verbose),
        Command::Simulate(a) => simulate(a, verbose),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value).map_err(Error::from)?)?;
    Ok(())
}

fn parse_c0_list(spec: &str) -> CliResult<Vec<u64>> {
    let bad = || usage(format!("bad --sweep `{spec}` (expected lo:hi[:step] or a comma list)"));
    let values: Vec<u64> = if spec.contains(':') {
        let parts: Vec<u64> = spec
            .split(':')
            .map(parse_count)
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let (lo, hi, step) = match parts[..] {
            [lo, hi] => (lo, hi, 1),
            [lo, hi, step] if step > 0 => (lo, hi, step),
            _ => return Err(bad()),
        };
        (lo..=hi).step_by(step as usize).collect()
    } else {
        spec.split(',')
            .map(|s| parse_count(s.trim()))
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?
    };
    if values.is_empty() || values.iter().any(|&c| c < 2) {
        return Err(usage("sweep values of c0 must be at least 2"));
    }
    Ok(values)
}

fn optimize(a: OptimizeArgs) -> CliResult {
    let inst = a.instance.instance()?;
    if let Some(spec) = &a.sweep {
        let c0s = parse_c0_list(spec)?;
        let eta = a.eta.unwrap_or_else(|| inst.eta());
        let variant = ConditionVariant::for_instance(&inst);
        let points = sweep(&c0s, inst.log_factor(), eta, variant)?;
        let mut text = format!(
            "# tardos {VERSION}\n# sweep: variant={} n={} eps1={} eps2={} B={} eta={eta}\n",
            inst.variant, inst.n, inst.eps1, inst.eps2, inst.b
        );
        text.push_str("c0,variant,eta,log_factor,d_ell,d_z,d_delta,a,b\n");
        for p in &points {
            let t = &p.constants;
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.c0, inst.variant, p.eta, p.log_factor, t.d_ell, t.d_z, t.d_delta, t.a, t.b
            ));
        }
        if let Some(out) = &a.out {
            fs::write(out, &text)?;
        }
        match a.format {
            Format::Table => print!("{text}"),
            Format::Json => println!(
                "{}",
                serde_json::to_string_pretty(&json!({ "version": VERSION, "instance": inst, "eta": eta, "points": points }))
                    .map_err(Error::from)?
            ),
        }
        return Ok(());
    }

    let tc = optimize_constants(&inst)?;
    let params = derive_scheme_params(&inst, &tc)?;
    let doc = json!({
        "version": VERSION,
        "command": "optimize",
        "instance": inst,
        "eta": inst.eta(),
        "constants": tc,
        "params": params,
        "contaminated_length_bound": (inst.variant == Variant::WeaklyDynamicA).then(|| params.contaminated_length_bound()),
    });
    if let Some(out) = &a.out {
        write_json(out, &doc)?;
    }
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&doc).map_err(Error::from)?),
        Format::Table => {
            let mut rows = vec![
                ("variant", inst.variant.to_string()),
                ("n", inst.n.to_string()),
                ("eps1", inst.eps1.to_string()),
                ("eps2", inst.eps2.to_string()),
                ("c0", inst.c0.to_string()),
            ];
            if inst.variant.is_weakly_dynamic() {
                rows.push(("B", inst.b.to_string()));
            }
            rows.extend([
                ("eta", format!("{:.6}", inst.eta())),
                ("d_ell", format!("{:.4}", tc.d_ell)),
                ("d_z", format!("{:.4}", tc.d_z)),
                ("d_delta", format!("{:.4}", tc.d_delta)),
                ("a", format!("{:.4}", tc.a)),
                ("b", format!("{:.4}", tc.b)),
                ("ell", params.ell.to_string()),
                ("Z", format!("{:.2}", params.z)),
                ("delta", format!("{:.4e}", params.delta)),
            ]);
            if inst.variant == Variant::WeaklyDynamicA {
                rows.push(("ell + B*c0", params.contaminated_length_bound().to_string()));
            }
            for (k, v) in rows {
                println!("{k:<12}{v}");
            }
        }
    }
    Ok(())
}

fn ladder(a: LadderArgs) -> CliResult {
    let grid = match a.grid {
        GridArg::Auto => default_grid(a.c_max),
        GridArg::Full => full_grid(a.c_max),
        GridArg::Geometric => geometric_grid(a.c_max, a.ratio),
    };
    let ladder = build_universal_ladder(a.n, a.eps1, a.eps2, &grid, &Allocation::Basel)?;
    let doc = json!({ "version": VERSION, "command": "ladder", "grid": grid, "ladder": ladder });
    if let Some(out) = &a.out {
        write_json(out, &doc)?;
    }
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&doc).map_err(Error::from)?),
        Format::Table => {
            println!("{:>5} {:>12} {:>8} {:>8} {:>9} {:>10} {:>10} {:>11}", "c", "eps1_c", "eta_c", "d_ell", "d_delta", "ell", "Z", "delta");
            for e in &ladder.entries {
                println!(
                    "{:>5} {:>12.4e} {:>8.4} {:>8.4} {:>9.4} {:>10} {:>10.2} {:>11.4e}",
                    e.c, e.eps1_c, e.eta_c, e.constants.d_ell, e.constants.d_delta, e.ell, e.z, e.delta
                );
            }
            println!("eps1 spent: {:.6e} of {}", ladder.eps1_spent(), a.eps1);
        }
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> CliResult {
    if a.n == 0 || a.ell == 0 {
        return Err(usage("n and ell must be positive"));
    }
    let book = CodeBook::generate(a.seed, a.n, a.ell, a.delta)?;
    book.write(&a.out)?;
    println!("wrote {} ({} users x {} positions, seed {})", a.out.display(), a.n, a.ell, a.seed);
    Ok(())
}

fn load_config(path: &Path, overrides: &ConfigOverrides) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn trace(a: TraceArgs, verbose: bool) -> CliResult {
    let mut cfg = load_config(&a.config, &a.overrides)?;
    cfg.keep_transcript = true;
    let scheme = harness::prepare(&cfg)?;
    if verbose {
        eprintln!("tracing trial {} of {}", a.trial, a.config.display());
    }
    let t = match &a.codebook {
        Some(path) => {
            let book = CodeBook::read(path)?;
            harness::run_trial_on(&cfg, &scheme, a.trial, &book, true)?
        }
        None => harness::run_trial(&cfg, &scheme, a.trial, true)?,
    };
    let dir = cfg.output_dir.clone().expect("set by overrides");
    fs::create_dir_all(&dir)?;
    let prov = Provenance::of(&cfg);
    let comments = prov.comment_lines()?;
    let mut f = fs::File::create(dir.join("transcript.csv"))?;
    f.write_all(comments.as_bytes())?;
    t.write_csv(f)?;
    if !t.trajectory.is_empty() {
        let mut f = fs::File::create(dir.join("trajectory.csv"))?;
        f.write_all(comments.as_bytes())?;
        t.write_trajectory_csv(f)?;
    }
    write_json(
        &dir.join("transcript.json"),
        &json!({ "version": VERSION, "seed": cfg.seed, "config": cfg, "trial": a.trial, "scheme": scheme, "outcome": t.outcome, "events": t.events }),
    )?;
    let o = &t.outcome;
    println!(
        "{}: {} positions, {} disconnected, catch-all {}, {:?}",
        cfg.instance.variant,
        o.positions,
        t.events.len(),
        o.catch_all.map_or("none".to_string(), |x| x.to_string()),
        o.termination
    );
    Ok(())
}

fn simulate(a: SimulateArgs, verbose: bool) -> CliResult {
    let cfg = load_config(&a.config, &a.overrides)?;
    if verbose {
        eprintln!("{} trials of {} (c = {}, {})", cfg.trials, cfg.instance.variant, cfg.c, cfg.strategy);
    }
    let e: Experiment = harness::run_trials(&cfg)?;
    let dir = cfg.output_dir.clone().expect("set by overrides");
    let written = harness::export(&e, &dir)?;
    print_rows(&harness::summarize(&[&e], None));
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn catch(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |x| format!("{x:.0}"))
}

fn print_rows(rows: &[ComparisonRow]) {
    println!(
        "{:<18} {:<13} {:>4} {:>7} {:>6} {:>9} {:>10} {:>10} {:>10} {:>9}",
        "scheme", "strategy", "c", "scores", "caught", "ell", "median", "p95", "fp_rate", "vs_base"
    );
    for r in rows {
        println!(
            "{:<18} {:<13} {:>4} {:>7} {:>6} {:>9} {:>10} {:>10} {:>10.3e} {:>9}",
            r.scheme.to_string(),
            r.strategy.to_string(),
            r.c,
            r.scores_per_user,
            r.guilty_caught,
            r.ell_theoretical,
            catch(r.median_catch),
            catch(r.p95_catch),
            r.fp_rate,
            r.vs_baseline.map_or("-".to_string(), |v| format!("{v:.3}"))
        );
    }
}

fn report(a: ReportArgs) -> CliResult {
    let load = |p: &Path| harness::read_report(p).map_err(|e| usage(format!("{}: {e}", p.display())));
    let reports: Vec<Report> = a.inputs.iter().map(|p| load(p)).collect::<CliResult<_>>()?;
    let baseline = a.baseline.as_deref().map(load).transpose()?;
    let experiments: Vec<Experiment> = reports
        .into_iter()
        .map(|r| Experiment {
            config: r.provenance.config,
            scheme: r.scheme,
            stats: harness::TrialStats {
                records: r.trials,
                summary: r.summary,
            },
            transcript: None,
        })
        .collect();
    let refs: Vec<&Experiment> = experiments.iter().collect();
    let rows = harness::summarize(&refs, baseline.as_ref().map(|b| &b.summary));
    match a.format {
        Format::Table => print_rows(&rows),
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&json!({ "version": VERSION, "rows": rows })).map_err(Error::from)?
        ),
    }
    Ok(())
}
