use std::collections::HashMap;

use crate::codegen::Code;
use crate::error::Result;
use crate::model::{SchemeParameters, Variant};
use crate::strategy::{Coalition, DelayedCoalition};

use super::transcript::{
    DisconnectEvent, PositionRecord, Termination, Threshold, TraceOutcome, TraceTranscript,
    TrajectoryEvent, TrajectoryPoint, UserScore,
};
use super::{increment, score_pair, tracked_users, Sampler, TraceOptions};

/// Running scores of the tracked users for a single threshold.
#[derive(Debug, Clone)]
pub struct ScoreState {
    users: Vec<u64>,
    scores: Vec<f64>,
    active: Vec<bool>,
    frozen: Vec<Option<(u64, f64)>>,
    position: u64,
}

impl ScoreState {
    pub fn new(users: Vec<u64>) -> Self {
        let k = users.len();
        ScoreState {
            users,
            scores: vec![0.0; k],
            active: vec![true; k],
            frozen: vec![None; k],
            position: 0,
        }
    }

    pub fn users(&self) -> &[u64] {
        &self.users
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Last position handled, scored or skipped.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// `(position, frozen score)` for a disconnected tracked user.
    pub fn frozen(&self, k: usize) -> Option<(u64, f64)> {
        self.frozen[k]
    }

    /// Moves past a position without scoring it.
    pub fn skip(&mut self) {
        self.position += 1;
    }
}

/// Scores the next position for every active user, then disconnects all
/// users now strictly above `z`. `column` is aligned with
/// [`ScoreState::users`].
pub fn dynamic_step(state: &mut ScoreState, z: f64, column: &[bool], y: bool, p: f64) -> Vec<DisconnectEvent> {
    assert_eq!(column.len(), state.users.len(), "column not aligned with tracked users");
    state.position += 1;
    let (s1, s0) = score_pair(p);
    let mut events = Vec::new();
    for k in 0..state.users.len() {
        if !state.active[k] {
            continue;
        }
        state.scores[k] += increment(column[k], y, s1, s0);
        if state.scores[k] > z {
            state.active[k] = false;
            state.frozen[k] = Some((state.position, state.scores[k]));
            events.push(DisconnectEvent {
                position: state.position,
                user: state.users[k],
                entry_c: None,
                score: state.scores[k],
            });
        }
    }
    events
}

struct Plan {
    scheme: Variant,
    z: f64,
    ell: u64,
    delta: f64,
    scored_limit: u64,
    delay: u32,
    contaminate: bool,
    accuse_at_end: bool,
}

/// Fixed-length code, full coalition throughout, accusation at the end.
pub fn run_static(
    params: &SchemeParameters,
    code: &dyn Code,
    coalition: Coalition,
    opts: &TraceOptions,
) -> Result<TraceTranscript> {
    run_plan(
        Plan {
            scheme: Variant::Static,
            z: params.z,
            ell: params.ell,
            delta: params.delta,
            scored_limit: params.ell,
            delay: 0,
            contaminate: false,
            accuse_at_end: true,
        },
        code,
        coalition,
        opts,
    )
}

pub fn run_dynamic(
    params: &SchemeParameters,
    code: &dyn Code,
    coalition: Coalition,
    opts: &TraceOptions,
) -> Result<TraceTranscript> {
    run_plan(
        Plan {
            scheme: Variant::Dynamic,
            z: params.z,
            ell: params.ell,
            delta: params.delta,
            scored_limit: params.ell,
            delay: 0,
            contaminate: false,
            accuse_at_end: false,
        },
        code,
        coalition,
        opts,
    )
}

/// Dynamic constants; after each disconnection the next `delay` positions
/// are left unscored because a caught pirate may still have fed them.
/// Triggers inside an open window extend it to `delay` past the new trigger.
pub fn run_weakly_dynamic_a(
    params: &SchemeParameters,
    code: &dyn Code,
    coalition: Coalition,
    delay: u32,
    opts: &TraceOptions,
) -> Result<TraceTranscript> {
    run_plan(
        Plan {
            scheme: Variant::WeaklyDynamicA,
            z: params.z,
            ell: params.ell,
            delta: params.delta,
            scored_limit: params.ell,
            delay,
            contaminate: true,
            accuse_at_end: false,
        },
        code,
        coalition,
        opts,
    )
}

/// Constants optimized for the delay; every position is scored.
pub fn run_weakly_dynamic_b(
    params: &SchemeParameters,
    code: &dyn Code,
    coalition: Coalition,
    delay: u32,
    opts: &TraceOptions,
) -> Result<TraceTranscript> {
    run_plan(
        Plan {
            scheme: Variant::WeaklyDynamicB,
            z: params.z,
            ell: params.ell,
            delta: params.delta,
            scored_limit: params.ell,
            delay,
            contaminate: false,
            accuse_at_end: false,
        },
        code,
        coalition,
        opts,
    )
}

fn run_plan(plan: Plan, code: &dyn Code, coalition: Coalition, opts: &TraceOptions) -> Result<TraceTranscript> {
    let pirates = coalition.members().to_vec();
    let users = tracked_users(code, &pirates, &opts.innocents)?;
    let c = pirates.len();
    let pirate_idx: HashMap<u64, usize> = pirates.iter().enumerate().map(|(k, &u)| (u, k)).collect();

    let mut state = ScoreState::new(users.clone());
    let mut extended = opts.extended.then(|| vec![0.0; users.len()]);
    let mut coalition = DelayedCoalition::new(coalition, plan.delay);
    let mut sampler = Sampler::new(opts, c);
    let mut events = Vec::new();
    let mut records = Vec::new();
    let mut column = Vec::with_capacity(users.len());
    let mut bits = Vec::with_capacity(c);

    let mut scored = 0u64;
    let mut contaminated_until = 0u64;
    let mut catch_all = None;
    let mut coalition_score = 0.0;
    let mut coalition_positions = 0u64;
    let step_z = if plan.accuse_at_end { f64::INFINITY } else { plan.z };

    let termination = loop {
        let i = state.position() + 1;
        if scored >= plan.scored_limit {
            break Termination::CodeExhausted;
        }
        if opts.max_positions.is_some_and(|m| i > m) {
            break Termination::PositionCap;
        }
        if code.len().is_some_and(|len| i > len) {
            break Termination::CodebookTooShort;
        }
        coalition.advance_to(i)?;
        if !coalition.is_active() {
            break Termination::CoalitionInactive;
        }
        code.column_into(i, &users, &mut column);
        bits.clear();
        bits.extend(coalition.active().iter().map(|u| column[pirate_idx[u]]));
        let y = coalition.forge(&bits)?;
        let p = code.bias(i);

        if plan.contaminate && i <= contaminated_until {
            state.skip();
            if opts.record_positions {
                records.push(PositionRecord {
                    position: i,
                    p,
                    y,
                    scored: false,
                    disregarded: Vec::new(),
                    counters: Vec::new(),
                });
            }
            continue;
        }

        scored += 1;
        let (s1, s0) = score_pair(p);
        if state.active()[..c].iter().any(|&a| a) {
            coalition_positions += 1;
            coalition_score += (0..c)
                .filter(|&k| state.active()[k])
                .map(|k| increment(column[k], y, s1, s0))
                .sum::<f64>();
        }
        if let Some(ext) = extended.as_mut() {
            for (s, &x) in ext.iter_mut().zip(&column) {
                *s += increment(x, y, s1, s0);
            }
        }
        let fresh = dynamic_step(&mut state, step_z, &column, y, p);
        for e in &fresh {
            if pirate_idx.contains_key(&e.user) {
                coalition.schedule_disconnect(e.user, i)?;
            }
            sampler.points.push(TrajectoryPoint {
                position: i,
                user: Some(e.user),
                entry_c: None,
                score: e.score,
                event: TrajectoryEvent::Disconnect,
            });
        }
        if plan.contaminate && !fresh.is_empty() {
            contaminated_until = contaminated_until.max(i + plan.delay as u64);
        }
        events.extend(fresh);
        if catch_all.is_none() && c > 0 && state.active()[..c].iter().all(|&a| !a) {
            catch_all = Some(i);
        }
        if sampler.due(i) {
            let scores = state.scores();
            sampler.sample(i, None, &users, state.active(), |k| scores[k]);
        }
        if opts.record_positions {
            records.push(PositionRecord {
                position: i,
                p,
                y,
                scored: true,
                disregarded: Vec::new(),
                counters: Vec::new(),
            });
        }
    };

    let positions = state.position();
    let accused: Vec<u64> = if plan.accuse_at_end {
        users
            .iter()
            .zip(state.scores())
            .filter(|(_, &s)| s > plan.z)
            .map(|(&u, _)| u)
            .collect()
    } else {
        events.iter().map(|e| e.user).collect()
    };
    if plan.accuse_at_end && c > 0 && pirates.iter().all(|u| accused.contains(u)) {
        catch_all = Some(positions);
    }
    if sampler.every_enabled() && !sampler.due(positions) && positions > 0 {
        let scores = state.scores();
        sampler.sample(positions, None, &users, state.active(), |k| scores[k]);
    }
    sampler.points.push(TrajectoryPoint {
        position: plan.ell,
        user: None,
        entry_c: None,
        score: plan.z,
        event: TrajectoryEvent::Threshold,
    });
    let final_scores = users
        .iter()
        .enumerate()
        .map(|(k, &u)| UserScore {
            user: u,
            scores: vec![state.scores()[k]],
            extended: extended.as_ref().map(|e| e[k]),
        })
        .collect();

    Ok(TraceTranscript {
        scheme: plan.scheme,
        pirates,
        thresholds: vec![Threshold {
            entry_c: None,
            z: plan.z,
            ell: plan.ell,
            delta: plan.delta,
        }],
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
            exhausted_at: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_threshold() {
        let mut st = ScoreState::new(vec![0, 1]);
        // p = 1/2 gives +-1 steps.
        let ev = dynamic_step(&mut st, 1.0, &[true, false], true, 0.5);
        assert!(ev.is_empty());
        assert_eq!(st.scores(), &[1.0, -1.0]);
        let ev = dynamic_step(&mut st, 1.0, &[true, false], true, 0.5);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].user, 0);
        assert_eq!(st.frozen(0), Some((2, 2.0)));
        // Frozen scores never move.
        dynamic_step(&mut st, 1.0, &[true, true], true, 0.5);
        assert_eq!(st.scores()[0], 2.0);
    }

    #[test]
    fn simultaneous_crossings() {
        let mut st = ScoreState::new(vec![4, 9, 11]);
        let ev = dynamic_step(&mut st, 0.5, &[true, true, false], true, 0.5);
        let who: Vec<u64> = ev.iter().map(|e| e.user).collect();
        assert_eq!(who, vec![4, 9]);
        assert!(ev.iter().all(|e| e.position == 1));
    }
}
