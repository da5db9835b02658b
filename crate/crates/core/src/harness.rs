//! Seeded Monte Carlo trials over the tracing engines.
//!
//! Trial `t` draws everything from streams keyed by
//! `key(master_seed, Trial, t, 0)`, so results do not depend on thread
//! scheduling or on how many trials run alongside it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::codegen::{Code, CodeBook, CodeStream};
use crate::error::{Error, Result};
use crate::model::{derive_scheme_params, ProblemInstance, SchemeParameters, UniversalLadder, Variant};
use crate::optimize::{
    build_universal_ladder, default_grid, full_grid, geometric_grid, optimize_constants, Allocation,
};
use crate::rng::{self, StreamRng, Tag};
use crate::strategy::{Coalition, StrategyKind};
use crate::trace::{
    self, transcript_csv_error, Termination, TraceOptions, TraceTranscript, TrajectoryPoint,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default number of explicitly scored innocents.
pub const DEFAULT_INNOCENTS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemberRule {
    /// Users `0..c`.
    #[default]
    First,
    /// A seeded uniform draw of `c` users per trial.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodeMode {
    #[default]
    Streaming,
    Materialized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// Full grid up to 64, geometric above.
    #[default]
    Auto,
    Full,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasCutoff {
    /// Pure arcsine biases.
    #[default]
    None,
    /// Biases drawn with the top entry's cutoff.
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniversalConfig {
    /// Largest coalition size on the ladder; defaults to `c0`.
    pub c_max: Option<u64>,
    pub grid: GridKind,
    pub ratio: f64,
    pub bias_cutoff: BiasCutoff,
}

impl Default for UniversalConfig {
    fn default() -> Self {
        UniversalConfig {
            c_max: None,
            grid: GridKind::Auto,
            ratio: 2.0,
            bias_cutoff: BiasCutoff::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    /// Sampling period in positions; 0 turns trajectories off.
    pub every: u64,
    /// Innocents logged individually; the others only feed the envelope.
    pub innocents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: ProblemInstance,
    pub strategy: StrategyKind,
    /// Actual coalition size.
    pub c: u64,
    #[serde(default)]
    pub members: MemberRule,
    pub trials: u64,
    /// Innocents scored explicitly per trial; `min(n - c, 10^4)` if absent.
    #[serde(default)]
    pub innocents: Option<u64>,
    pub seed: u64,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub universal: UniversalConfig,
    #[serde(default)]
    pub code: CodeMode,
    /// Stop every trial after this many positions.
    #[serde(default)]
    pub max_positions: Option<u64>,
    /// Keep the full transcript of trial 0.
    #[serde(default)]
    pub keep_transcript: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Config with defaults for everything but the essentials.
    pub fn new(instance: ProblemInstance, strategy: StrategyKind, c: u64, trials: u64, seed: u64) -> Self {
        ExperimentConfig {
            instance,
            strategy,
            c,
            members: MemberRule::First,
            trials,
            innocents: None,
            seed,
            trajectory: TrajectoryConfig::default(),
            universal: UniversalConfig::default(),
            code: CodeMode::Streaming,
            max_positions: None,
            keep_transcript: false,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn innocent_count(&self) -> u64 {
        let rest = self.instance.n.saturating_sub(self.c);
        self.innocents.unwrap_or(rest.min(DEFAULT_INNOCENTS))
    }

    /// Lists every problem at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(e) = self.instance.validate() {
            problems.push(e.to_string());
        }
        if self.trials == 0 {
            problems.push("trials must be at least 1".to_string());
        }
        if self.c == 0 {
            problems.push("coalition size c must be at least 1".to_string());
        }
        if self.c > self.instance.n {
            problems.push(format!("c = {} exceeds n = {}", self.c, self.instance.n));
        }
        if self.innocent_count() > self.instance.n.saturating_sub(self.c) {
            problems.push(format!(
                "innocents = {} exceeds n - c = {}",
                self.innocent_count(),
                self.instance.n.saturating_sub(self.c)
            ));
        }
        if self.instance.variant == Variant::Universal {
            let u = &self.universal;
            if u.c_max.is_some_and(|c| c < 2) {
                problems.push("universal.c_max must be at least 2".to_string());
            }
            if !(u.ratio > 1.0) {
                problems.push(format!("universal.ratio = {} must exceed 1", u.ratio));
            }
            if self.code == CodeMode::Materialized && self.max_positions.is_none() {
                problems.push("a materialized universal code needs max_positions".to_string());
            }
        }
        if self.max_positions == Some(0) {
            problems.push("max_positions must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Scheme numbers an experiment runs with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreparedScheme {
    Fixed(SchemeParameters),
    Universal(UniversalLadder),
}

impl PreparedScheme {
    /// Codelength the theory promises for this experiment.
    pub fn theoretical_length(&self, c: u64) -> u64 {
        match self {
            PreparedScheme::Fixed(p) if p.instance.variant == Variant::WeaklyDynamicA => {
                p.contaminated_length_bound()
            }
            PreparedScheme::Fixed(p) => p.ell,
            PreparedScheme::Universal(l) => l
                .entries
                .iter()
                .find(|e| e.c >= c)
                .or(l.top())
                .map_or(0, |e| e.ell),
        }
    }

    /// Bias cutoff for the shared code.
    pub fn code_cutoff(&self, cfg: &UniversalConfig) -> f64 {
        match self {
            PreparedScheme::Fixed(p) => p.delta,
            PreparedScheme::Universal(l) => match cfg.bias_cutoff {
                BiasCutoff::None => 0.0,
                BiasCutoff::Top => l.top().map_or(0.0, |e| e.delta),
            },
        }
    }

    /// Positions a materialized code must hold.
    pub fn code_length(&self, cap: Option<u64>) -> Option<u64> {
        match self {
            PreparedScheme::Fixed(p) => {
                let full = if p.instance.variant == Variant::WeaklyDynamicA {
                    p.contaminated_length_bound()
                } else {
                    p.ell
                };
                Some(cap.map_or(full, |m| m.min(full)))
            }
            PreparedScheme::Universal(_) => cap,
        }
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedScheme> {
    let inst = &config.instance;
    if inst.variant == Variant::Universal {
        let u = &config.universal;
        let c_max = u.c_max.unwrap_or(inst.c0);
        let grid = match u.grid {
            GridKind::Auto => default_grid(c_max),
            GridKind::Full => full_grid(c_max),
            GridKind::Geometric => geometric_grid(c_max, u.ratio),
        };
        let ladder = build_universal_ladder(inst.n, inst.eps1, inst.eps2, &grid, &Allocation::Basel)?;
        return Ok(PreparedScheme::Universal(ladder));
    }
    let tc = optimize_constants(inst)?;
    Ok(PreparedScheme::Fixed(derive_scheme_params(inst, &tc)?))
}

/// Outcome of a single trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    /// Position at which the last pirate was caught; `None` when censored.
    pub catch_all: Option<u64>,
    /// Catch position of each pirate, in coalition order.
    pub pirate_catches: Vec<Option<u64>>,
    pub innocent_crossings: u64,
    pub innocents_scored: u64,
    pub positions: u64,
    pub scored_positions: u64,
    pub coalition_score: f64,
    pub coalition_positions: u64,
    pub termination: Termination,
}

impl TrialRecord {
    pub fn caught_any(&self) -> bool {
        self.pirate_catches.iter().any(Option::is_some)
    }

    pub fn coalition_slope(&self) -> Option<f64> {
        (self.coalition_positions > 0).then(|| self.coalition_score / self.coalition_positions as f64)
    }
}

/// Two-sided exact binomial interval at the given confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Interval {
    if trials == 0 {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).expect("positive shape").inverse_cdf(alpha / 2.0)
    };
    let hi = if successes >= trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).expect("positive shape").inverse_cdf(1.0 - alpha / 2.0)
    };
    Interval { lo, hi }
}

/// Aggregates over all trials of one experiment. Catch times of censored
/// trials count as infinite; a `None` quantile means it fell on one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scheme: Variant,
    pub strategy: StrategyKind,
    pub c: u64,
    pub c0: u64,
    pub n: u64,
    pub eps1: f64,
    pub eps2: f64,
    pub ell_theoretical: u64,
    pub median_catch: Option<f64>,
    pub p95_catch: Option<f64>,
    /// Mean over uncensored trials.
    pub mean_catch: Option<f64>,
    pub fp_rate: f64,
    pub fp_interval: Interval,
    pub trials: u64,
    pub innocents: u64,
    /// Trials that missed every pirate (static) or some pirate (others).
    pub completeness_failures: u64,
    pub completeness_interval: Interval,
    /// Trials in which some sampled innocent crossed.
    pub soundness_failures: u64,
    pub soundness_interval: Interval,
    pub mean_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
}

/// Median with the midpoint rule; `None` if it touches a censored value.
pub fn median(sorted: &[f64]) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let m = sorted.len();
    let v = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    v.is_finite().then_some(v)
}

/// Nearest-rank quantile.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let v = sorted[rank - 1];
    v.is_finite().then_some(v)
}

pub fn aggregate(config: &ExperimentConfig, scheme: &PreparedScheme, records: Vec<TrialRecord>) -> TrialStats {
    let inst = &config.instance;
    let mut catches: Vec<f64> = records
        .iter()
        .map(|r| r.catch_all.map_or(f64::INFINITY, |x| x as f64))
        .collect();
    catches.sort_by(f64::total_cmp);
    let finite: Vec<f64> = catches.iter().copied().filter(|x| x.is_finite()).collect();
    let trials = records.len() as u64;
    let scored: u64 = records.iter().map(|r| r.innocents_scored).sum();
    let crossings: u64 = records.iter().map(|r| r.innocent_crossings).sum();
    let completeness_failures = records
        .iter()
        .filter(|r| {
            if inst.variant == Variant::Static {
                !r.caught_any()
            } else {
                r.catch_all.is_none()
            }
        })
        .count() as u64;
    let soundness_failures = records.iter().filter(|r| r.innocent_crossings > 0).count() as u64;
    let slopes: Vec<f64> = records.iter().filter_map(TrialRecord::coalition_slope).collect();
    let summary = Summary {
        scheme: inst.variant,
        strategy: config.strategy,
        c: config.c,
        c0: inst.c0,
        n: inst.n,
        eps1: inst.eps1,
        eps2: inst.eps2,
        ell_theoretical: scheme.theoretical_length(config.c),
        median_catch: median(&catches),
        p95_catch: quantile(&catches, 0.95),
        mean_catch: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        fp_rate: if scored == 0 { 0.0 } else { crossings as f64 / scored as f64 },
        fp_interval: clopper_pearson(crossings, scored, 0.99),
        trials,
        innocents: config.innocent_count(),
        completeness_failures,
        completeness_interval: clopper_pearson(completeness_failures, trials, 0.99),
        soundness_failures,
        soundness_interval: clopper_pearson(soundness_failures, trials, 0.99),
        mean_slope: (!slopes.is_empty()).then(|| slopes.iter().sum::<f64>() / slopes.len() as f64),
    };
    TrialStats { records, summary }
}

/// `r`-th user (0-based) outside the sorted `excluded` set.
fn nth_outside(mut r: u64, excluded: &[u64]) -> u64 {
    for &x in excluded {
        if x <= r {
            r += 1;
        } else {
            break;
        }
    }
    r
}

pub fn trial_seed(master: u64, trial: u64) -> u64 {
    rng::key(master, Tag::Trial, trial, 0)
}

/// Coalition members and sampled innocents for one trial.
pub fn draw_users(config: &ExperimentConfig, trial: u64) -> (Vec<u64>, Vec<u64>) {
    let seed = trial_seed(config.seed, trial);
    let n = config.instance.n;
    let pirates: Vec<u64> = match config.members {
        MemberRule::First => (0..config.c).collect(),
        MemberRule::Random => {
            let mut r = StreamRng::new(seed, Tag::Coalition, 1, 0);
            let mut v: Vec<u64> = index::sample(&mut r, n as usize, config.c as usize)
                .into_iter()
                .map(|x| x as u64)
                .collect();
            v.sort_unstable();
            v
        }
    };
    let m = config.innocent_count();
    let rest = n - config.c;
    let mut sorted = pirates.clone();
    sorted.sort_unstable();
    let innocents: Vec<u64> = if m == rest {
        (0..rest).map(|r| nth_outside(r, &sorted)).collect()
    } else {
        let mut r = StreamRng::new(seed, Tag::InnocentSample, 0, 0);
        let mut idx: Vec<u64> = index::sample(&mut r, rest as usize, m as usize)
            .into_iter()
            .map(|x| x as u64)
            .collect();
        idx.sort_unstable();
        idx.into_iter().map(|r| nth_outside(r, &sorted)).collect()
    };
    (pirates, innocents)
}

/// Runs trial `trial` on its own seeded code and returns the transcript.
pub fn run_trial(
    config: &ExperimentConfig,
    scheme: &PreparedScheme,
    trial: u64,
    keep: bool,
) -> Result<TraceTranscript> {
    let seed = trial_seed(config.seed, trial);
    let n = config.instance.n;
    let delta = scheme.code_cutoff(&config.universal);
    match config.code {
        CodeMode::Streaming => run_trial_on(config, scheme, trial, &CodeStream::new(seed, n, delta)?, keep),
        CodeMode::Materialized => {
            let len = scheme
                .code_length(config.max_positions)
                .ok_or_else(|| Error::Config(vec!["materialized code needs a length".to_string()]))?;
            let book = CodeBook::generate(seed, n, len, delta)?;
            run_trial_on(config, scheme, trial, &book, keep)
        }
    }
}

/// Runs trial `trial` against a given code, e.g. one read from disk.
pub fn run_trial_on(
    config: &ExperimentConfig,
    scheme: &PreparedScheme,
    trial: u64,
    code: &dyn Code,
    keep: bool,
) -> Result<TraceTranscript> {
    if code.n_users() != config.instance.n {
        return Err(Error::Codebook(crate::error::CodebookError::Dimension(format!(
            "code has {} users, instance has n = {}",
            code.n_users(),
            config.instance.n
        ))));
    }
    let seed = trial_seed(config.seed, trial);
    let (pirates, innocents) = draw_users(config, trial);
    let coalition = Coalition::new(pirates, config.strategy, StreamRng::new(seed, Tag::Coalition, 0, 0));
    let opts = TraceOptions {
        innocents,
        record_positions: keep,
        sample_every: if keep { config.trajectory.every } else { 0 },
        sampled_innocents: config.trajectory.innocents,
        extended: false,
        max_positions: config.max_positions,
    };
    let delay = config.instance.b;
    match scheme {
        PreparedScheme::Fixed(p) => match config.instance.variant {
            Variant::Static => trace::run_static(p, code, coalition, &opts),
            Variant::Dynamic => trace::run_dynamic(p, code, coalition, &opts),
            Variant::WeaklyDynamicA => trace::run_weakly_dynamic_a(p, code, coalition, delay, &opts),
            Variant::WeaklyDynamicB => trace::run_weakly_dynamic_b(p, code, coalition, delay, &opts),
            Variant::Universal => unreachable!("universal schemes are prepared as ladders"),
        },
        PreparedScheme::Universal(l) => trace::run_universal(l, code, coalition, &opts),
    }
}

fn record(trial: u64, t: &TraceTranscript, innocents: u64) -> TrialRecord {
    TrialRecord {
        trial,
        catch_all: t.outcome.catch_all,
        pirate_catches: t.pirate_catches().into_iter().map(|(_, at)| at).collect(),
        innocent_crossings: t.innocent_crossings() as u64,
        innocents_scored: innocents,
        positions: t.outcome.positions,
        scored_positions: t.outcome.scored_positions,
        coalition_score: t.outcome.coalition_score,
        coalition_positions: t.outcome.coalition_positions,
        termination: t.outcome.termination,
    }
}

/// Everything one experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scheme: PreparedScheme,
    pub stats: TrialStats,
    /// Trial 0, when trajectories or the transcript were requested.
    pub transcript: Option<TraceTranscript>,
}

pub fn run_trials(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let scheme = prepare(config)?;
    run_prepared(config, scheme)
}

/// Runs the trials for an already prepared scheme.
pub fn run_prepared(config: &ExperimentConfig, scheme: PreparedScheme) -> Result<Experiment> {
    config.validate()?;
    let keep_first = config.keep_transcript || config.trajectory.every > 0;
    let m = config.innocent_count();
    let results: Vec<(TrialRecord, Option<TraceTranscript>)> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let keep = keep_first && t == 0;
            let tr = run_trial(config, &scheme, t, keep)?;
            Ok((record(t, &tr, m), keep.then_some(tr)))
        })
        .collect::<Result<_>>()?;
    let mut transcript = None;
    let mut records = Vec::with_capacity(results.len());
    for (r, t) in results {
        records.push(r);
        if t.is_some() {
            transcript = t;
        }
    }
    let stats = aggregate(config, &scheme, records);
    Ok(Experiment {
        config: config.clone(),
        scheme,
        stats,
        transcript,
    })
}

/// One row of a scheme comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheme: Variant,
    pub strategy: StrategyKind,
    pub c: u64,
    /// Scores kept per user: one per ladder entry for universal runs.
    pub scores_per_user: usize,
    /// `one` when only some pirate is guaranteed, `all` otherwise.
    pub guilty_caught: String,
    pub ell_theoretical: u64,
    pub median_catch: Option<f64>,
    pub p95_catch: Option<f64>,
    pub fp_rate: f64,
    /// Median catch-all over the baseline's theoretical length.
    pub vs_baseline: Option<f64>,
}

pub fn summarize(experiments: &[&Experiment], baseline: Option<&Summary>) -> Vec<ComparisonRow> {
    experiments
        .iter()
        .map(|e| {
            let s = &e.stats.summary;
            ComparisonRow {
                scheme: s.scheme,
                strategy: s.strategy,
                c: s.c,
                scores_per_user: match &e.scheme {
                    PreparedScheme::Universal(l) => l.entries.len(),
                    PreparedScheme::Fixed(_) => 1,
                },
                guilty_caught: if s.scheme == Variant::Static { "one" } else { "all" }.to_string(),
                ell_theoretical: s.ell_theoretical,
                median_catch: s.median_catch,
                p95_catch: s.p95_catch,
                fp_rate: s.fp_rate,
                vs_baseline: baseline.and_then(|b| s.median_catch.map(|m| m / b.ell_theoretical as f64)),
            }
        })
        .collect()
}

/// Provenance block embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
}

impl Provenance {
    pub fn of(config: &ExperimentConfig) -> Self {
        Provenance {
            version: VERSION.to_string(),
            seed: config.seed,
            config: config.clone(),
        }
    }

    /// `# key: value` lines prefixed to CSV files.
    pub fn comment_lines(&self) -> Result<String> {
        Ok(format!(
            "# tardos {}\n# seed: {}\n# config: {}\n",
            self.version,
            self.seed,
            serde_json::to_string(&self.config)?
        ))
    }

    /// Reads the provenance block back from a CSV written by this module.
    pub fn from_csv_comments(text: &str) -> Option<Self> {
        let mut version = None;
        let mut seed = None;
        let mut config = None;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let l = line.trim_start_matches('#').trim();
            if let Some(v) = l.strip_prefix("tardos ") {
                version = Some(v.to_string());
            } else if let Some(v) = l.strip_prefix("seed: ") {
                seed = v.parse().ok();
            } else if let Some(v) = l.strip_prefix("config: ") {
                config = serde_json::from_str(v).ok();
            }
        }
        Some(Provenance {
            version: version?,
            seed: seed?,
            config: config?,
        })
    }
}

/// JSON summary document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub scheme: PreparedScheme,
    pub summary: Summary,
    pub trials: Vec<TrialRecord>,
}

impl Report {
    pub fn of(e: &Experiment) -> Self {
        Report {
            provenance: Provenance::of(&e.config),
            scheme: e.scheme.clone(),
            summary: e.stats.summary.clone(),
            trials: e.stats.records.clone(),
        }
    }
}

const SUMMARY_HEADER: [&str; 12] = [
    "scheme",
    "strategy",
    "c",
    "c0",
    "n",
    "eps1",
    "eps2",
    "ell_theoretical",
    "median_catch",
    "p95_catch",
    "fp_rate",
    "trials",
];

fn opt_catch(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |x| x.to_string())
}

/// Summary rows; censored quantiles are written as `inf`.
pub fn write_summary_csv<W: Write>(mut out: W, provenance: Option<&Provenance>, rows: &[Summary]) -> Result<()> {
    if let Some(p) = provenance {
        out.write_all(p.comment_lines()?.as_bytes())?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(transcript_csv_error)?;
    for s in rows {
        w.write_record([
            s.scheme.to_string(),
            s.strategy.to_string(),
            s.c.to_string(),
            s.c0.to_string(),
            s.n.to_string(),
            s.eps1.to_string(),
            s.eps2.to_string(),
            s.ell_theoretical.to_string(),
            opt_catch(s.median_catch),
            opt_catch(s.p95_catch),
            s.fp_rate.to_string(),
            s.trials.to_string(),
        ])
        .map_err(transcript_csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes summary CSV and JSON plus, when present, trajectory and
/// transcript CSVs of trial 0. Returns the paths written.
pub fn export(e: &Experiment, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let prov = Provenance::of(&e.config);
    let mut written = Vec::new();

    let path = dir.join("summary.csv");
    write_summary_csv(fs::File::create(&path)?, Some(&prov), std::slice::from_ref(&e.stats.summary))?;
    written.push(path);

    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&Report::of(e))?)?;
    written.push(path);

    if let Some(t) = &e.transcript {
        if !t.trajectory.is_empty() {
            let path = dir.join("trajectory.csv");
            let mut f = fs::File::create(&path)?;
            f.write_all(prov.comment_lines()?.as_bytes())?;
            trace::write_trajectory(&t.trajectory, f)?;
            written.push(path);
        }
        if e.config.keep_transcript {
            let path = dir.join("transcript.csv");
            let mut f = fs::File::create(&path)?;
            f.write_all(prov.comment_lines()?.as_bytes())?;
            t.write_csv(f)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Trajectory points of trial 0, if any were sampled.
pub fn trajectory(e: &Experiment) -> &[TrajectoryPoint] {
    e.transcript.as_ref().map_or(&[], |t| &t.trajectory)
}

pub fn read_report(path: &Path) -> Result<Report> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_with_censoring() {
        let v = [1.0, 2.0, 3.0, f64::INFINITY];
        assert_eq!(median(&v), Some(2.5));
        assert_eq!(quantile(&v, 0.5), Some(2.0));
        assert_eq!(quantile(&v, 0.95), None);
        assert_eq!(median(&[1.0, f64::INFINITY]), None);
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn clopper_pearson_reference() {
        // Zero successes: the upper end solves (1 - p)^n = alpha / 2.
        let iv = clopper_pearson(0, 100, 0.95);
        assert_eq!(iv.lo, 0.0);
        assert!((iv.hi - (1.0 - 0.025f64.powf(0.01))).abs() < 1e-10);
        let iv = clopper_pearson(100, 100, 0.95);
        assert!((iv.lo - 0.025f64.powf(0.01)).abs() < 1e-10);
        // scipy.stats.beta.ppf(0.025, 5, 16), beta.ppf(0.975, 6, 15)
        let iv = clopper_pearson(5, 20, 0.95);
        assert!((iv.lo - 0.086_571_469_1).abs() < 1e-8, "{}", iv.lo);
        assert!((iv.hi - 0.491_045_871_7).abs() < 1e-8, "{}", iv.hi);
    }

    #[test]
    fn nth_outside_skips_members() {
        let ex = [0, 2, 3, 7];
        let got: Vec<u64> = (0..5).map(|r| nth_outside(r, &ex)).collect();
        assert_eq!(got, vec![1, 4, 5, 6, 8]);
    }

    #[test]
    fn config_problems_are_all_listed() {
        let inst = ProblemInstance::new(100, 1e-2, 1e-2, 5, Variant::Dynamic).unwrap();
        let mut cfg = ExperimentConfig::new(inst, StrategyKind::Interleaving, 0, 0, 1);
        cfg.innocents = Some(500);
        match cfg.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn users_are_disjoint_and_in_range() {
        let inst = ProblemInstance::new(1000, 1e-2, 1e-2, 5, Variant::Dynamic).unwrap();
        let mut cfg = ExperimentConfig::new(inst, StrategyKind::Interleaving, 5, 1, 9);
        cfg.members = MemberRule::Random;
        cfg.innocents = Some(200);
        for t in 0..20 {
            let (p, i) = draw_users(&cfg, t);
            assert_eq!(p.len(), 5);
            assert_eq!(i.len(), 200);
            assert!(i.iter().all(|u| *u < 1000 && !p.contains(u)));
            let mut s = i.clone();
            s.dedup();
            assert_eq!(s.len(), 200);
        }
        cfg.innocents = Some(995);
        let (p, i) = draw_users(&cfg, 3);
        assert_eq!(i.len(), 995);
        assert!(i.iter().all(|u| !p.contains(u)));
    }
}
