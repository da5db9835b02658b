//! Accusation engines built on the symmetric score.
//!
//! Every engine tracks an explicit user set: all pirates plus whichever
//! innocents the caller wants scored. Innocents are exchangeable given the
//! biases and the forged sequence, so scoring a sample of them estimates the
//! per-user false-positive rate without touching all `n` rows.

mod dynamic;
mod transcript;
mod universal;

pub use dynamic::{
    dynamic_step, run_dynamic, run_static, run_weakly_dynamic_a, run_weakly_dynamic_b, ScoreState,
};
pub use transcript::{
    write_trajectory, DisconnectEvent, PositionRecord, Termination, Threshold, TraceOutcome,
    TraceTranscript, TrajectoryEvent, TrajectoryPoint, UserScore,
};
pub use universal::{run_universal, UniversalState};
pub(crate) use transcript::csv_err as transcript_csv_error;

use crate::codegen::Code;
use crate::error::{domain, Error, Result};

/// Score of symbol `x` against forged symbol `y` at bias `p`.
pub fn position_score(x: bool, y: bool, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("p", p, "(0, 1)"));
    }
    let (s1, s0) = score_pair(p);
    Ok(increment(x, y, s1, s0))
}

/// `(sqrt((1-p)/p), sqrt(p/(1-p)))`
#[inline]
pub(crate) fn score_pair(p: f64) -> (f64, f64) {
    let r = ((1.0 - p) / p).sqrt();
    (r, 1.0 / r)
}

#[inline]
pub(crate) fn increment(x: bool, y: bool, s1: f64, s0: f64) -> f64 {
    let mag = if x { s1 } else { s0 };
    if x == y {
        mag
    } else {
        -mag
    }
}

/// Static scores of `users` over the whole forged sequence `y`.
pub fn static_scores(code: &dyn Code, y: &[bool], users: &[u64]) -> Result<Vec<f64>> {
    if let Some(len) = code.len() {
        if len as usize != y.len() {
            return Err(Error::LengthMismatch {
                expected: len as usize,
                got: y.len(),
            });
        }
    }
    let mut scores = vec![0.0; users.len()];
    let mut column = Vec::with_capacity(users.len());
    for (k, &yi) in y.iter().enumerate() {
        let i = k as u64 + 1;
        let p = code.bias(i);
        if !(p > 0.0 && p < 1.0) {
            return Err(domain("p", p, "(0, 1)"));
        }
        let (s1, s0) = score_pair(p);
        code.column_into(i, users, &mut column);
        for (s, &x) in scores.iter_mut().zip(&column) {
            *s += increment(x, yi, s1, s0);
        }
    }
    Ok(scores)
}

/// Users of `users` whose static score exceeds `z`.
pub fn static_trace(z: f64, code: &dyn Code, y: &[bool], users: &[u64]) -> Result<Vec<u64>> {
    let scores = static_scores(code, y, users)?;
    Ok(users
        .iter()
        .zip(scores)
        .filter(|(_, s)| *s > z)
        .map(|(&u, _)| u)
        .collect())
}

/// What an engine records besides the outcome.
#[derive(Debug, Clone, Default)]
pub struct TraceOptions {
    /// Innocent users scored alongside the pirates.
    pub innocents: Vec<u64>,
    /// Keep one record per distributed position.
    pub record_positions: bool,
    /// Trajectory sampling period in positions; 0 disables sampling.
    pub sample_every: u64,
    /// Innocents that get individual trajectory rows; the rest only feed
    /// the min/max envelope.
    pub sampled_innocents: usize,
    /// Keep scoring disconnected users as if they were still active.
    pub extended: bool,
    /// Hard stop, mainly for unbounded universal runs.
    pub max_positions: Option<u64>,
}

impl TraceOptions {
    /// Every user of the code that is not a pirate.
    pub fn all_innocents(mut self, n: u64, pirates: &[u64]) -> Self {
        self.innocents = (0..n).filter(|u| !pirates.contains(u)).collect();
        self
    }
}

/// Pirates first, then the innocents not already listed.
pub(crate) fn tracked_users(code: &dyn Code, pirates: &[u64], innocents: &[u64]) -> Result<Vec<u64>> {
    let mut seen = std::collections::HashSet::new();
    let mut users = Vec::with_capacity(pirates.len() + innocents.len());
    for &u in pirates.iter().chain(innocents) {
        if u >= code.n_users() {
            return Err(Error::InvalidInstance(format!(
                "user {u} outside a code for {} users",
                code.n_users()
            )));
        }
        if seen.insert(u) {
            users.push(u);
        }
    }
    Ok(users)
}

/// Collects trajectory samples: individual rows for pirates and a few
/// innocents, plus the envelope over every tracked active innocent.
pub(crate) struct Sampler {
    every: u64,
    pirates: usize,
    individual: usize,
    pub points: Vec<crate::trace::TrajectoryPoint>,
}

impl Sampler {
    pub fn new(opts: &TraceOptions, pirates: usize) -> Self {
        Sampler {
            every: opts.sample_every,
            pirates,
            individual: pirates + opts.sampled_innocents,
            points: Vec::new(),
        }
    }

    pub fn every_enabled(&self) -> bool {
        self.every > 0
    }

    pub fn due(&self, position: u64) -> bool {
        self.every > 0 && position.is_multiple_of(self.every)
    }

    /// `score(k)` is the score of tracked user `k`; inactive users are
    /// skipped.
    pub fn sample(
        &mut self,
        position: u64,
        entry_c: Option<u64>,
        users: &[u64],
        active: &[bool],
        score: impl Fn(usize) -> f64,
    ) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (k, &u) in users.iter().enumerate() {
            if !active[k] {
                continue;
            }
            let s = score(k);
            if k < self.individual {
                self.points.push(TrajectoryPoint {
                    position,
                    user: Some(u),
                    entry_c,
                    score: s,
                    event: TrajectoryEvent::Sample,
                });
            }
            if k >= self.pirates {
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        if lo <= hi {
            for (event, score) in [(TrajectoryEvent::EnvelopeMin, lo), (TrajectoryEvent::EnvelopeMax, hi)] {
                self.points.push(TrajectoryPoint {
                    position,
                    user: None,
                    entry_c,
                    score,
                    event,
                });
            }
        }
    }
}
