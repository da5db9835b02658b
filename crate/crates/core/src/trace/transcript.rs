use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisconnectEvent {
    pub position: u64,
    pub user: u64,
    /// Ladder entry whose threshold was crossed (universal runs only).
    pub entry_c: Option<u64>,
    /// Score at the moment of disconnection, frozen from then on.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub position: u64,
    pub p: f64,
    pub y: bool,
    /// False for positions skipped by contamination.
    pub scored: bool,
    /// Universal runs: entries whose cutoff window excluded `p`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disregarded: Vec<u64>,
    /// Universal runs: counters `t^(c)` after this position, in ladder order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counters: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryEvent {
    Sample,
    Disconnect,
    Threshold,
    EnvelopeMin,
    EnvelopeMax,
}

impl TrajectoryEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryEvent::Sample => "sample",
            TrajectoryEvent::Disconnect => "disconnect",
            TrajectoryEvent::Threshold => "threshold",
            TrajectoryEvent::EnvelopeMin => "envelope-min",
            TrajectoryEvent::EnvelopeMax => "envelope-max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub position: u64,
    pub user: Option<u64>,
    pub entry_c: Option<u64>,
    pub score: f64,
    pub event: TrajectoryEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// No coalition member is left to forge.
    CoalitionInactive,
    /// The scheme's codelength (or every ladder entry) is used up.
    CodeExhausted,
    /// A finite codebook ran out before the scheme finished.
    CodebookTooShort,
    /// The configured position cap was hit.
    PositionCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub entry_c: Option<u64>,
    pub z: f64,
    pub ell: u64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOutcome {
    pub accused: Vec<u64>,
    /// Position at which the last pirate was disconnected or accused.
    pub catch_all: Option<u64>,
    pub termination: Termination,
    /// Positions distributed, contaminated ones included.
    pub positions: u64,
    pub scored_positions: u64,
    /// Sum of score increments of tracer-active pirates.
    pub coalition_score: f64,
    /// Scored positions at which at least one pirate was still active.
    pub coalition_positions: u64,
    /// Universal runs: position at which each entry's counter reached its length.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exhausted_at: Vec<(u64, Option<u64>)>,
}

impl TraceOutcome {
    pub fn coalition_slope(&self) -> Option<f64> {
        (self.coalition_positions > 0).then(|| self.coalition_score / self.coalition_positions as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserScore {
    pub user: u64,
    /// One score per ladder entry; a single entry outside universal runs.
    pub scores: Vec<f64>,
    /// Scores as if the user had never been disconnected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extended: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTranscript {
    pub scheme: Variant,
    pub pirates: Vec<u64>,
    pub thresholds: Vec<Threshold>,
    pub events: Vec<DisconnectEvent>,
    pub trajectory: Vec<TrajectoryPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<PositionRecord>,
    pub final_scores: Vec<UserScore>,
    pub outcome: TraceOutcome,
}

impl TraceTranscript {
    pub fn forged(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.y).collect()
    }

    pub fn score_of(&self, user: u64) -> Option<&UserScore> {
        self.final_scores.iter().find(|s| s.user == user)
    }

    /// Pirates caught, by position of disconnection or final accusation.
    pub fn pirate_catches(&self) -> Vec<(u64, Option<u64>)> {
        self.pirates
            .iter()
            .map(|&u| {
                let at = self.events.iter().find(|e| e.user == u).map(|e| e.position);
                let at = at.or_else(|| {
                    self.outcome.accused.contains(&u).then_some(self.outcome.positions)
                });
                (u, at)
            })
            .collect()
    }

    pub fn innocent_crossings(&self) -> usize {
        self.outcome
            .accused
            .iter()
            .filter(|u| !self.pirates.contains(u))
            .count()
    }

    /// One row per disconnection and per recorded position:
    /// `position,event,user,entry_c,score,p,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["position", "event", "user", "entry_c", "score", "p", "y"])
            .map_err(csv_err)?;
        let record_at = |pos: u64| {
            self.records
                .binary_search_by_key(&pos, |r| r.position)
                .ok()
                .map(|k| &self.records[k])
        };
        let mut events = self.events.iter().peekable();
        for r in &self.records {
            let kind = if r.scored { "position" } else { "contaminated" };
            w.write_record([
                r.position.to_string(),
                kind.to_string(),
                String::new(),
                String::new(),
                String::new(),
                r.p.to_string(),
                u8::from(r.y).to_string(),
            ])
            .map_err(csv_err)?;
            while let Some(e) = events.next_if(|e| e.position == r.position) {
                write_event(&mut w, e, Some(r))?;
            }
        }
        for e in events {
            write_event(&mut w, e, record_at(e.position))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trajectory(&self.trajectory, out)
    }
}

fn write_event<W: Write>(
    w: &mut csv::Writer<W>,
    e: &DisconnectEvent,
    r: Option<&PositionRecord>,
) -> Result<()> {
    w.write_record([
        e.position.to_string(),
        "disconnect".to_string(),
        e.user.to_string(),
        opt(e.entry_c),
        e.score.to_string(),
        r.map(|r| r.p.to_string()).unwrap_or_default(),
        r.map(|r| u8::from(r.y).to_string()).unwrap_or_default(),
    ])
    .map_err(csv_err)
}

fn opt(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => std::io::Error::other(format!("{other:?}")).into(),
    }
}

/// `position,user,entry_c,score,event`
pub fn write_trajectory<W: Write>(points: &[TrajectoryPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["position", "user", "entry_c", "score", "event"])
        .map_err(csv_err)?;
    for t in points {
        w.write_record([
            t.position.to_string(),
            opt(t.user),
            opt(t.entry_c),
            t.score.to_string(),
            t.event.as_str().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
