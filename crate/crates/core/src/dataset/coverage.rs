use std::collections::HashSet;

use serde::Serialize;

use super::{ActionCounts, GameDataset};
use crate::error::{Error, Result};
use crate::game::Player;
use crate::tree::GameTree;

/// How much of the game a dataset touches.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    pub trajectories: usize,
    pub distinct_terminals: usize,
    pub total_terminals: usize,
    /// Distinct `(infostate, action)` pairs observed, per player.
    pub visited_pairs: [usize; 2],
    pub total_pairs: [usize; 2],
    pub visited_infosets: [usize; 2],
    pub total_infosets: [usize; 2],
}

impl CoverageReport {
    pub fn terminal_fraction(&self) -> f64 {
        self.distinct_terminals as f64 / self.total_terminals as f64
    }

    pub fn pair_fraction(&self) -> f64 {
        let v: usize = self.visited_pairs.iter().sum();
        let t: usize = self.total_pairs.iter().sum();
        v as f64 / t as f64
    }

    /// `(metric, value)` rows for tabular output.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("trajectories".to_string(), self.trajectories as f64),
            ("distinct_terminals".into(), self.distinct_terminals as f64),
            ("total_terminals".into(), self.total_terminals as f64),
            ("terminal_coverage".into(), self.terminal_fraction()),
            ("pair_coverage".into(), self.pair_fraction()),
        ];
        for p in Player::BOTH {
            let i = p.index();
            rows.push((format!("p{i}_visited_pairs"), self.visited_pairs[i] as f64));
            rows.push((format!("p{i}_total_pairs"), self.total_pairs[i] as f64));
            rows.push((format!("p{i}_visited_infosets"), self.visited_infosets[i] as f64));
            rows.push((format!("p{i}_total_infosets"), self.total_infosets[i] as f64));
        }
        rows
    }
}

pub fn coverage_report(tree: &GameTree, d: &GameDataset) -> Result<CoverageReport> {
    let mut terminals = HashSet::new();
    for (i, t) in d.trajectories.iter().enumerate() {
        let node = tree.follow(&t.history()).ok_or_else(|| Error::InvalidTrajectory {
            index: i,
            reason: "history leaves the game tree".into(),
        })?;
        terminals.insert(node);
    }
    let mut visited_pairs = [0; 2];
    let mut total_pairs = [0; 2];
    let mut visited_infosets = [0; 2];
    let mut total_infosets = [0; 2];
    for p in Player::BOTH {
        let counts = ActionCounts::from_dataset(tree, d, p)?;
        let table = tree.infosets(p);
        visited_pairs[p.index()] = counts.counts.iter().filter(|c| **c > 0.0).count();
        total_pairs[p.index()] = table.num_sequences();
        visited_infosets[p.index()] = table.iter().filter(|(id, _)| counts.visited(tree, *id)).count();
        total_infosets[p.index()] = table.len();
    }
    Ok(CoverageReport {
        trajectories: d.len(),
        distinct_terminals: terminals.len(),
        total_terminals: tree.num_terminals(),
        visited_pairs,
        total_pairs,
        visited_infosets,
        total_infosets,
    })
}
