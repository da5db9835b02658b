use std::collections::HashMap;

use crate::codegen::Code;
use crate::dist::in_window;
use crate::error::{Error, Result};
use crate::model::{UniversalLadder, Variant};
use crate::strategy::Coalition;

use super::transcript::{
    DisconnectEvent, PositionRecord, Termination, Threshold, TraceOutcome, TraceTranscript,
    TrajectoryEvent, TrajectoryPoint, UserScore,
};
use super::{increment, score_pair, tracked_users, Sampler, TraceOptions};

#[derive(Debug, Clone, Copy)]
struct Rung {
    c: u64,
    ell: u64,
    z: f64,
    delta: f64,
    t: u64,
    exhausted_at: Option<u64>,
}

impl Rung {
    fn live(&self) -> bool {
        self.t < self.ell
    }
}

/// Scores per (tracked user, ladder entry) plus the per-entry counters.
#[derive(Debug, Clone)]
pub struct UniversalState {
    users: Vec<u64>,
    rungs: Vec<Rung>,
    /// Row-major: user `k`, entry `e` at `k * rungs + e`.
    scores: Vec<f64>,
    active: Vec<bool>,
    position: u64,
}

impl UniversalState {
    pub fn new(ladder: &UniversalLadder, users: Vec<u64>) -> Result<Self> {
        if ladder.entries.is_empty() {
            return Err(Error::InvalidInstance("empty ladder".to_string()));
        }
        if ladder.entries.windows(2).any(|w| w[0].c >= w[1].c) {
            return Err(Error::InvalidInstance("ladder entries must be sorted by c".to_string()));
        }
        if let Some(e) = ladder.entries.iter().find(|e| !(e.delta > 0.0 && e.delta < 0.5)) {
            return Err(Error::InvalidInstance(format!(
                "entry c = {} has cutoff {} outside (0, 1/2)",
                e.c, e.delta
            )));
        }
        let rungs: Vec<Rung> = ladder
            .entries
            .iter()
            .map(|e| Rung {
                c: e.c,
                ell: e.ell,
                z: e.z,
                delta: e.delta,
                t: 0,
                exhausted_at: None,
            })
            .collect();
        let k = users.len();
        Ok(UniversalState {
            scores: vec![0.0; k * rungs.len()],
            active: vec![true; k],
            users,
            rungs,
            position: 0,
        })
    }

    pub fn users(&self) -> &[u64] {
        &self.users
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn counters(&self) -> Vec<u64> {
        self.rungs.iter().map(|r| r.t).collect()
    }

    pub fn scores_of(&self, k: usize) -> &[f64] {
        let w = self.rungs.len();
        &self.scores[k * w..(k + 1) * w]
    }

    pub fn exhausted(&self) -> bool {
        self.rungs.iter().all(|r| !r.live())
    }

    /// Counts the position against every entry whose window holds `p` and
    /// returns the entries still consulted, i.e. with `t <= ell`.
    fn count(&mut self, p: f64, updated: &mut Vec<usize>) {
        self.position += 1;
        updated.clear();
        for (e, r) in self.rungs.iter_mut().enumerate() {
            if !in_window(p, r.delta) {
                continue;
            }
            let live = r.live();
            r.t += 1;
            if live {
                if r.t == r.ell {
                    r.exhausted_at = Some(self.position);
                }
                updated.push(e);
            }
        }
    }

    /// Scores the consulted entries and disconnects users crossing any of
    /// their thresholds. The lowest crossing `c` is reported.
    fn score(&mut self, updated: &[usize], column: &[bool], y: bool, p: f64) -> Vec<DisconnectEvent> {
        let mut events = Vec::new();
        if updated.is_empty() {
            return events;
        }
        let (s1, s0) = score_pair(p);
        let w = self.rungs.len();
        for k in 0..self.users.len() {
            if !self.active[k] {
                continue;
            }
            let inc = increment(column[k], y, s1, s0);
            let mut crossed = None;
            for &e in updated {
                let s = &mut self.scores[k * w + e];
                *s += inc;
                if crossed.is_none() && *s > self.rungs[e].z {
                    crossed = Some((self.rungs[e].c, *s));
                }
            }
            if let Some((c, score)) = crossed {
                self.active[k] = false;
                events.push(DisconnectEvent {
                    position: self.position,
                    user: self.users[k],
                    entry_c: Some(c),
                    score,
                });
            }
        }
        events
    }
}

/// Runs every ladder entry in parallel on one shared code.
///
/// The code may use pure arcsine biases or the top entry's cutoff; each
/// entry ignores positions whose bias falls outside its own window and
/// stops being consulted once it has seen `ell^(c)` positions.
pub fn run_universal(
    ladder: &UniversalLadder,
    code: &dyn Code,
    coalition: Coalition,
    opts: &TraceOptions,
) -> Result<TraceTranscript> {
    let pirates = coalition.members().to_vec();
    let users = tracked_users(code, &pirates, &opts.innocents)?;
    let c = pirates.len();
    let pirate_idx: HashMap<u64, usize> = pirates.iter().enumerate().map(|(k, &u)| (u, k)).collect();
    let mut state = UniversalState::new(ladder, users.clone())?;
    let top = state.rungs.len() - 1;
    let mut coalition = coalition;
    let mut sampler = Sampler::new(opts, c);
    let mut events = Vec::new();
    let mut records = Vec::new();
    let mut column = Vec::with_capacity(users.len());
    let mut bits = Vec::with_capacity(c);
    let mut updated = Vec::with_capacity(state.rungs.len());

    let mut scored = 0u64;
    let mut catch_all = None;
    let mut coalition_score = 0.0;
    let mut coalition_positions = 0u64;

    let termination = loop {
        let i = state.position + 1;
        if state.exhausted() {
            break Termination::CodeExhausted;
        }
        if opts.max_positions.is_some_and(|m| i > m) {
            break Termination::PositionCap;
        }
        if code.len().is_some_and(|len| i > len) {
            break Termination::CodebookTooShort;
        }
        if !coalition.is_active() {
            break Termination::CoalitionInactive;
        }
        code.column_into(i, &users, &mut column);
        bits.clear();
        bits.extend(coalition.active().iter().map(|u| column[pirate_idx[u]]));
        let y = coalition.forge(&bits)?;
        let p = code.bias(i);

        state.count(p, &mut updated);
        if !updated.is_empty() {
            scored += 1;
        }
        if updated.last() == Some(&top) && state.active[..c].iter().any(|&a| a) {
            let (s1, s0) = score_pair(p);
            coalition_positions += 1;
            coalition_score += (0..c)
                .filter(|&k| state.active[k])
                .map(|k| increment(column[k], y, s1, s0))
                .sum::<f64>();
        }
        let fresh = state.score(&updated, &column, y, p);
        for e in &fresh {
            if pirate_idx.contains_key(&e.user) {
                coalition.on_disconnect(e.user)?;
            }
            sampler.points.push(TrajectoryPoint {
                position: i,
                user: Some(e.user),
                entry_c: e.entry_c,
                score: e.score,
                event: TrajectoryEvent::Disconnect,
            });
        }
        events.extend(fresh);
        if catch_all.is_none() && c > 0 && state.active[..c].iter().all(|&a| !a) {
            catch_all = Some(i);
        }
        if sampler.due(i) {
            sample_all(&mut sampler, &state, i);
        }
        if opts.record_positions {
            records.push(PositionRecord {
                position: i,
                p,
                y,
                scored: !updated.is_empty(),
                disregarded: state
                    .rungs
                    .iter()
                    .filter(|r| !in_window(p, r.delta))
                    .map(|r| r.c)
                    .collect(),
                counters: state.counters(),
            });
        }
    };

    let positions = state.position;
    if sampler.every_enabled() && !sampler.due(positions) && positions > 0 {
        sample_all(&mut sampler, &state, positions);
    }
    for r in &state.rungs {
        sampler.points.push(TrajectoryPoint {
            position: r.exhausted_at.unwrap_or(positions),
            user: None,
            entry_c: Some(r.c),
            score: r.z,
            event: TrajectoryEvent::Threshold,
        });
    }
    let accused = events.iter().map(|e| e.user).collect();
    let final_scores = users
        .iter()
        .enumerate()
        .map(|(k, &u)| UserScore {
            user: u,
            scores: state.scores_of(k).to_vec(),
            extended: None,
        })
        .collect();

    Ok(TraceTranscript {
        scheme: Variant::Universal,
        pirates,
        thresholds: state
            .rungs
            .iter()
            .map(|r| Threshold {
                entry_c: Some(r.c),
                z: r.z,
                ell: r.ell,
                delta: r.delta,
            })
            .collect(),
        events,
        trajectory: sampler.points,
        records,
        final_scores,
        outcome: TraceOutcome {
            accused,
            catch_all,
            termination,
            positions,
            scored_positions: scored,
            coalition_score,
            coalition_positions,
            exhausted_at: state.rungs.iter().map(|r| (r.c, r.exhausted_at)).collect(),
        },
    })
}

fn sample_all(sampler: &mut Sampler, state: &UniversalState, position: u64) {
    for (e, r) in state.rungs.iter().enumerate() {
        sampler.sample(position, Some(r.c), &state.users, &state.active, |k| {
            state.scores_of(k)[e]
        });
    }
}
