//! Side-by-side comparison of two trajectories.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::state::Slot;
use crate::trajectory::{Phase, Trajectory};

/// One change at a position: the token it holds afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub block_index: usize,
    pub step: usize,
    pub phase: Phase,
    pub token: Slot,
    pub prob: f64,
}

impl DiffEntry {
    fn same_action(&self, other: &DiffEntry) -> bool {
        self.block_index == other.block_index
            && self.step == other.step
            && self.phase == other.phase
            && self.token == other.token
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionDiff {
    pub pos: usize,
    pub a: Vec<DiffEntry>,
    pub b: Vec<DiffEntry>,
    /// `(block_index, step)` of the first differing action, if any.
    pub first_divergence: Option<(usize, usize)>,
    pub final_a: Slot,
    pub final_b: Slot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDiff {
    pub positions: Vec<PositionDiff>,
    pub first_divergence: Option<(usize, usize)>,
    /// Blocks compared (common prefix of both runs).
    pub blocks_compared: usize,
    /// The runs visited different numbers of blocks; only the common prefix is compared.
    pub truncated: bool,
}

impl TrajectoryDiff {
    pub fn divergent(&self) -> impl Iterator<Item = &PositionDiff> {
        self.positions
            .iter()
            .filter(|p| p.first_divergence.is_some())
    }

    pub fn is_identical(&self) -> bool {
        self.first_divergence.is_none()
    }

    /// Aligned plain-text table; `label` renders tokens.
    pub fn to_table(&self, label: &dyn Fn(Slot) -> String) -> String {
        let cell = |entries: &[DiffEntry]| -> String {
            entries
                .iter()
                .map(|e| format!("t{}:{}({})", e.step, label(e.token), fmt_prob(e.prob)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let rows: Vec<[String; 4]> = self
            .positions
            .iter()
            .map(|p| {
                [
                    p.pos.to_string(),
                    cell(&p.a),
                    cell(&p.b),
                    p.first_divergence
                        .map_or_else(|| "-".to_string(), |(b, s)| format!("block {b} t{s}")),
                ]
            })
            .collect();
        let header = [
            "pos".to_string(),
            "A".to_string(),
            "B".to_string(),
            "diverges".to_string(),
        ];
        let mut widths = header.clone().map(|h| h.len());
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for r in std::iter::once(&header).chain(&rows) {
            let line: Vec<String> = r
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join(" | ").trim_end());
        }
        if self.truncated {
            let _ = writeln!(
                out,
                "(truncated to the first {} common blocks)",
                self.blocks_compared
            );
        }
        out
    }
}

fn fmt_prob(p: f64) -> String {
    if p != 0.0 && p.abs() < 1e-3 {
        format!("{p:.1e}")
    } else {
        format!("{p:.2}")
    }
}

fn block_sequence(t: &Trajectory) -> Vec<usize> {
    let mut blocks: Vec<usize> = t.events.iter().map(|e| e.block_index).collect();
    blocks.dedup();
    blocks
}

fn histories(t: &Trajectory, blocks: &[usize]) -> BTreeMap<usize, Vec<DiffEntry>> {
    let mut map: BTreeMap<usize, Vec<DiffEntry>> = BTreeMap::new();
    for e in t.events.iter().filter(|e| blocks.contains(&e.block_index)) {
        map.entry(e.pos).or_default().push(DiffEntry {
            block_index: e.block_index,
            step: e.step,
            phase: e.phase,
            token: e.new,
            prob: e.prob,
        });
    }
    map
}

fn divergence(a: &[DiffEntry], b: &[DiffEntry]) -> Option<(usize, usize)> {
    let at = |e: &DiffEntry| (e.block_index, e.step);
    for (x, y) in a.iter().zip(b) {
        if !x.same_action(y) {
            return Some(at(x).min(at(y)));
        }
    }
    match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Less => Some(at(&b[a.len()])),
        std::cmp::Ordering::Greater => Some(at(&a[b.len()])),
        std::cmp::Ordering::Equal => None,
    }
}

pub fn trajectory_diff(a: &Trajectory, b: &Trajectory) -> Result<TrajectoryDiff, AnalysisError> {
    if a.prompt_len != b.prompt_len {
        return Err(AnalysisError::PromptMismatch(a.prompt_len, b.prompt_len));
    }
    let (blocks_a, blocks_b) = (block_sequence(a), block_sequence(b));
    let common: Vec<usize> = blocks_a
        .iter()
        .zip(&blocks_b)
        .take_while(|(x, y)| x == y)
        .map(|(x, _)| *x)
        .collect();
    let truncated = blocks_a.len() != blocks_b.len() || common.len() != blocks_a.len();

    let (ha, hb) = (histories(a, &common), histories(b, &common));
    let mut all: Vec<usize> = ha.keys().chain(hb.keys()).copied().collect();
    all.sort_unstable();
    all.dedup();

    let positions: Vec<PositionDiff> = all
        .into_iter()
        .map(|pos| {
            let ea = ha.get(&pos).cloned().unwrap_or_default();
            let eb = hb.get(&pos).cloned().unwrap_or_default();
            PositionDiff {
                pos,
                first_divergence: divergence(&ea, &eb),
                final_a: ea.last().and_then(|e| e.token),
                final_b: eb.last().and_then(|e| e.token),
                a: ea,
                b: eb,
            }
        })
        .collect();
    let first_divergence = positions.iter().filter_map(|p| p.first_divergence).min();
    Ok(TrajectoryDiff {
        positions,
        first_divergence,
        blocks_compared: common.len(),
        truncated,
    })
}
