//! Versioned JSON files for policies, average-policy stores and policy
//! collections. Every file records the game it belongs to; all three kinds
//! can be turned back into a dense profile for evaluation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{make_game, GameSpec, InfoKey, Player};
use crate::off_fsp::{AveragePolicyStore, LearnedPolicy, PolicyCollection};
use crate::offline_rl::Algorithm;
use crate::policy::{BehaviorPolicy, Fallback, SequenceForm, TabularPolicy, TabularProfile};
use crate::tree::GameTree;

pub const ARTIFACT_FORMAT: u32 = 1;

/// Per-player sequence-form values keyed by infostate.
pub type SequenceTable = BTreeMap<InfoKey, Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionEntry {
    pub iteration: usize,
    pub algorithm: Option<Algorithm>,
    pub weight: f64,
    pub policy: BehaviorPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Content {
    Policy { players: [BehaviorPolicy; 2] },
    Store { iteration: usize, players: [SequenceTable; 2] },
    Collection { players: [Vec<CollectionEntry>; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub format: u32,
    pub game: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub label: String,
    pub content: Content,
}

fn header(tree: &GameTree, label: &str, content: Content) -> Artifact {
    Artifact {
        format: ARTIFACT_FORMAT,
        game: tree.spec().name().into(),
        params: tree.spec().params_json(),
        label: label.into(),
        content,
    }
}

fn sequence_table(tree: &GameTree, x: &SequenceForm) -> SequenceTable {
    let table = tree.infosets(x.player);
    table.iter().map(|(_, s)| (s.key.clone(), x.flat()[s.offset..s.offset + s.num_actions].to_vec())).collect()
}

fn check_keys<'a>(tree: &GameTree, player: Player, keys: impl Iterator<Item = &'a InfoKey>) -> Result<()> {
    let table = tree.infosets(player);
    for k in keys {
        if table.lookup(k).is_none() {
            return Err(Error::UnknownInfostate(k.0.clone()));
        }
    }
    Ok(())
}

impl Artifact {
    pub fn policy(tree: &GameTree, profile: &TabularProfile, label: &str) -> Artifact {
        let players = Player::BOTH.map(|p| profile[p.index()].to_behavior(tree.infosets(p)));
        header(tree, label, Content::Policy { players })
    }

    pub fn store(tree: &GameTree, store: &AveragePolicyStore, label: &str) -> Artifact {
        let players = Player::BOTH.map(|p| sequence_table(tree, &store.players[p.index()]));
        header(tree, label, Content::Store { iteration: store.iteration, players })
    }

    pub fn collection(tree: &GameTree, c: &PolicyCollection, label: &str) -> Artifact {
        let players = Player::BOTH.map(|p| {
            let i = p.index();
            c.entries[i]
                .iter()
                .zip(&c.weights[i])
                .map(|(e, w)| CollectionEntry {
                    iteration: e.iteration,
                    algorithm: e.algorithm,
                    weight: *w,
                    policy: e.policy.to_behavior(tree.infosets(p)),
                })
                .collect()
        });
        header(tree, label, Content::Collection { players })
    }

    pub fn kind(&self) -> &'static str {
        match self.content {
            Content::Policy { .. } => "policy",
            Content::Store { .. } => "store",
            Content::Collection { .. } => "collection",
        }
    }

    pub fn game_spec(&self) -> Result<GameSpec> {
        make_game(&self.game, &self.params)
    }

    /// Rebuilds the average-policy store. Every infostate must be present.
    pub fn to_store(&self, tree: &GameTree) -> Result<AveragePolicyStore> {
        let Content::Store { iteration, players } = &self.content else {
            return Err(Error::Config(format!("expected a store file, found a {} file", self.kind())));
        };
        let mut out = AveragePolicyStore::from_profile(tree, &crate::policy::uniform_profile(tree));
        out.iteration = *iteration;
        for p in Player::BOTH {
            let values = &players[p.index()];
            check_keys(tree, p, values.keys())?;
            let table = tree.infosets(p);
            let mut flat = vec![0.0; table.num_sequences()];
            for (_, s) in table.iter() {
                let v = values.get(&s.key).ok_or_else(|| Error::MissingInfostate(s.key.0.clone()))?;
                if v.len() != s.num_actions || v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::InvalidPolicy {
                        key: s.key.0.clone(),
                        reason: format!("expected {} non-negative values, found {v:?}", s.num_actions),
                    });
                }
                flat[s.offset..s.offset + s.num_actions].copy_from_slice(v);
            }
            out.players[p.index()] = SequenceForm::from_flat(table, p, flat);
        }
        Ok(out)
    }

    /// Rebuilds a policy collection; entry policies must be valid distributions.
    pub fn to_collection(&self, tree: &GameTree) -> Result<PolicyCollection> {
        let Content::Collection { players } = &self.content else {
            return Err(Error::Config(format!("expected a collection file, found a {} file", self.kind())));
        };
        let mut entries: [Vec<LearnedPolicy>; 2] = [vec![], vec![]];
        let mut weights: [Vec<f64>; 2] = [vec![], vec![]];
        for p in Player::BOTH {
            let list = &players[p.index()];
            if list.is_empty() {
                return Err(Error::Config(format!("collection for player {} is empty", p.index())));
            }
            for e in list {
                e.policy.validate()?;
                check_keys(tree, p, e.policy.iter().map(|(k, _)| k))?;
                if !(e.weight.is_finite() && e.weight >= 0.0) {
                    return Err(Error::Config(format!("invalid mixing weight {}", e.weight)));
                }
                let policy = TabularPolicy::from_behavior(tree, p, &e.policy, Fallback::Uniform)?;
                entries[p.index()].push(LearnedPolicy { iteration: e.iteration, algorithm: e.algorithm, policy });
                weights[p.index()].push(e.weight);
            }
            let total: f64 = weights[p.index()].iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("mixing weights of player {} sum to {total}", p.index())));
            }
        }
        Ok(PolicyCollection { entries, weights })
    }

    /// The behavior profile the file describes. Policies missing an
    /// infostate play uniformly there; a collection is evaluated as its
    /// realization-weighted mixture.
    pub fn to_profile(&self, tree: &GameTree) -> Result<TabularProfile> {
        match &self.content {
            Content::Policy { players } => {
                let mut out = crate::policy::uniform_profile(tree);
                for p in Player::BOTH {
                    let pol = &players[p.index()];
                    pol.validate()?;
                    check_keys(tree, p, pol.iter().map(|(k, _)| k))?;
                    out[p.index()] = TabularPolicy::from_behavior(tree, p, pol, Fallback::Uniform)?;
                }
                Ok(out)
            }
            Content::Store { .. } => Ok(self.to_store(tree)?.behavior(tree)),
            Content::Collection { .. } => {
                let c = self.to_collection(tree)?;
                Ok(Player::BOTH.map(|p| {
                    let table = tree.infosets(p);
                    let mut mix = vec![0.0; table.num_sequences()];
                    for (e, w) in c.entries[p.index()].iter().zip(&c.weights[p.index()]) {
                        let x = SequenceForm::from_policy(table, &e.policy);
                        mix.iter_mut().zip(x.flat()).for_each(|(m, v)| *m += w * v);
                    }
                    SequenceForm::from_flat(table, p, mix).to_policy(table)
                }))
            }
        }
    }

    pub fn to_writer(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_writer(File::create(path)?)
    }

    pub fn from_reader(r: impl Read) -> Result<Artifact> {
        let a: Artifact = serde_json::from_reader(BufReader::new(r))?;
        if a.format != ARTIFACT_FORMAT {
            return Err(Error::Config(format!("unsupported artifact format version {}", a.format)));
        }
        Ok(a)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Artifact> {
        Artifact::from_reader(File::open(path)?)
    }
}
