//! Decisions, trajectory events and their JSON-lines encoding.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::state::{Slot, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Fill,
    Edit,
    Remask,
}

/// Which rule produced an edit or remask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorKind {
    #[serde(rename = "t2t")]
    T2t,
    #[serde(rename = "lowprob")]
    LowProb,
    #[serde(rename = "t2t_trigger")]
    T2tTrigger,
    #[serde(rename = "logitdiff")]
    LogitDiff,
    #[serde(rename = "random")]
    Random,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::T2t => "t2t",
            DetectorKind::LowProb => "lowprob",
            DetectorKind::T2tTrigger => "t2t_trigger",
            DetectorKind::LogitDiff => "logitdiff",
            DetectorKind::Random => "random",
        }
    }
}

/// A single fill, replacement or remask, before it is stamped with a step.
#[derive(Debug, Clone, PartialEq)]
pub struct EditDecision {
    pub phase: Phase,
    pub pos: usize,
    pub old: Slot,
    pub new: Slot,
    pub prob: f64,
    pub detector: Option<DetectorKind>,
}

impl EditDecision {
    pub fn fill(pos: usize, token: Token, prob: f64) -> Self {
        Self {
            phase: Phase::Fill,
            pos,
            old: None,
            new: Some(token),
            prob,
            detector: None,
        }
    }

    pub fn edit(pos: usize, old: Token, new: Token, prob: f64) -> Self {
        Self {
            phase: Phase::Edit,
            pos,
            old: Some(old),
            new: Some(new),
            prob,
            detector: Some(DetectorKind::T2t),
        }
    }

    pub fn remask(pos: usize, old: Token, prob: f64, detector: Option<DetectorKind>) -> Self {
        Self {
            phase: Phase::Remask,
            pos,
            old: Some(old),
            new: None,
            prob,
            detector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub step: usize,
    pub phase: Phase,
    pub pos: usize,
    pub old: Slot,
    pub new: Slot,
    pub prob: f64,
    pub detector: Option<DetectorKind>,
    pub block_index: usize,
}

impl TrajectoryEvent {
    pub fn new(step: usize, block_index: usize, d: &EditDecision) -> Self {
        Self {
            step,
            phase: d.phase,
            pos: d.pos,
            old: d.old,
            new: d.new,
            prob: d.prob,
            detector: d.detector,
            block_index,
        }
    }

    /// Phase constraints: fills replace masks, remasks produce masks, edits
    /// swap one token for a different one.
    pub fn is_well_formed(&self) -> bool {
        match self.phase {
            Phase::Fill => self.old.is_none() && self.new.is_some(),
            Phase::Remask => self.new.is_none() && self.old.is_some(),
            Phase::Edit => self.old.is_some() && self.new.is_some() && self.old != self.new,
        }
    }
}

/// Receives events in the order the engine produces them.
pub trait Recorder {
    fn record(&mut self, event: TrajectoryEvent);
}

impl Recorder for Vec<TrajectoryEvent> {
    fn record(&mut self, event: TrajectoryEvent) {
        self.push(event);
    }
}

/// Events of one run plus the layout needed to interpret positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub prompt_len: usize,
    pub block_len: usize,
    pub events: Vec<TrajectoryEvent>,
}

impl Trajectory {
    pub fn count(&self, phase: Phase) -> usize {
        self.events.iter().filter(|e| e.phase == phase).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &self.events).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

pub fn write_jsonl<W: Write>(mut w: W, events: &[TrajectoryEvent]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Vec<TrajectoryEvent>> {
    let mut events = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line)?);
    }
    Ok(events)
}
