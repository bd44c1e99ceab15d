//! Full enumeration of a game into a flat arena.
//!
//! Nodes are stored in depth-first preorder, so every child has a larger
//! index than its parent. Decision nodes point into a per-player
//! [`InfosetTable`], which also records each infostate's parent sequence
//! (the owner's previous infostate and action), making realization plans a
//! single forward pass.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::game::{Action, GameSpec, GameState, InfoKey, NodeKind, Player};

#[derive(Clone, Debug)]
pub enum TreeNode {
    Chance { first_edge: u32, num: u32 },
    Decision { player: Player, infoset: u32, first_edge: u32, num: u32 },
    Terminal { returns: [f64; 2] },
}

#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub child: u32,
    /// Chance probability; 1 on decision edges.
    pub prob: f64,
}

/// One player's information state.
#[derive(Clone, Debug)]
pub struct Infoset {
    pub key: InfoKey,
    pub num_actions: usize,
    /// Offset of this infoset's first sequence in flat `(infoset, action)` vectors.
    pub offset: usize,
    /// Owner's previous `(infoset, action)` on every path here.
    pub parent: Option<(u32, Action)>,
    /// Number of own decisions preceding this infoset.
    pub depth: usize,
}

/// All information states of one player.
#[derive(Clone, Debug, Default)]
pub struct InfosetTable {
    infosets: Vec<Infoset>,
    index: HashMap<InfoKey, u32>,
    num_sequences: usize,
}

impl InfosetTable {
    pub fn len(&self) -> usize {
        self.infosets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infosets.is_empty()
    }

    /// Total number of `(infoset, action)` pairs.
    pub fn num_sequences(&self) -> usize {
        self.num_sequences
    }

    pub fn get(&self, id: u32) -> &Infoset {
        &self.infosets[id as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &Infoset)> {
        self.infosets.iter().enumerate().map(|(i, s)| (i as u32, s))
    }

    pub fn lookup(&self, key: &InfoKey) -> Option<u32> {
        self.index.get(key).copied()
    }

    pub fn lookup_str(&self, key: &str) -> Option<u32> {
        self.index.get(&InfoKey(key.to_string())).copied()
    }

    /// Flat sequence index of `(infoset, action)`.
    pub fn seq(&self, id: u32, action: Action) -> usize {
        self.infosets[id as usize].offset + action
    }

    fn intern(&mut self, key: InfoKey, num_actions: usize, parent: Option<(u32, Action)>, depth: usize) -> Result<u32> {
        if let Some(&id) = self.index.get(&key) {
            let s = &self.infosets[id as usize];
            if s.num_actions != num_actions || s.parent != parent {
                return Err(Error::InconsistentTree(format!(
                    "infostate `{key}` reached with different actions or own history"
                )));
            }
            return Ok(id);
        }
        let id = self.infosets.len() as u32;
        self.infosets.push(Infoset { key: key.clone(), num_actions, offset: self.num_sequences, parent, depth });
        self.num_sequences += num_actions;
        self.index.insert(key, id);
        Ok(id)
    }
}

/// A fully enumerated game.
#[derive(Clone, Debug)]
pub struct GameTree {
    spec: GameSpec,
    nodes: Vec<TreeNode>,
    edges: Vec<Edge>,
    tables: [InfosetTable; 2],
    num_terminals: usize,
}

impl GameTree {
    pub fn build(spec: &GameSpec) -> Result<GameTree> {
        let mut tree = GameTree {
            spec: spec.clone(),
            nodes: Vec::new(),
            edges: Vec::new(),
            tables: [InfosetTable::default(), InfosetTable::default()],
            num_terminals: 0,
        };
        tree.expand(&spec.initial_state(), [None, None])?;
        Ok(tree)
    }

    fn expand(&mut self, state: &GameState, last: [Option<(u32, Action)>; 2]) -> Result<u32> {
        let id = self.nodes.len() as u32;
        match state.node() {
            NodeKind::Terminal(r) => {
                self.nodes.push(TreeNode::Terminal { returns: *r });
                self.num_terminals += 1;
            }
            NodeKind::Chance(probs) => {
                let probs = probs.clone();
                self.nodes.push(TreeNode::Chance { first_edge: 0, num: probs.len() as u32 });
                let mut edges = Vec::with_capacity(probs.len());
                for (a, p) in probs.iter().enumerate() {
                    let child = self.expand(&self.spec.apply(state, a)?, last)?;
                    edges.push(Edge { child, prob: *p });
                }
                let first = self.edges.len() as u32;
                self.edges.extend(edges);
                self.nodes[id as usize] = TreeNode::Chance { first_edge: first, num: probs.len() as u32 };
            }
            &NodeKind::Decision { player, num_actions } => {
                let key = self.spec.infostate_key(state, player);
                let depth = match last[player.index()] {
                    Some((i, _)) => self.tables[player.index()].get(i).depth + 1,
                    None => 0,
                };
                let infoset = self.tables[player.index()].intern(key, num_actions, last[player.index()], depth)?;
                self.nodes.push(TreeNode::Decision { player, infoset, first_edge: 0, num: num_actions as u32 });
                let mut edges = Vec::with_capacity(num_actions);
                for a in 0..num_actions {
                    let mut next = last;
                    next[player.index()] = Some((infoset, a));
                    let child = self.expand(&self.spec.apply(state, a)?, next)?;
                    edges.push(Edge { child, prob: 1.0 });
                }
                let first = self.edges.len() as u32;
                self.edges.extend(edges);
                self.nodes[id as usize] =
                    TreeNode::Decision { player, infoset, first_edge: first, num: num_actions as u32 };
            }
        }
        Ok(id)
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn root(&self) -> u32 {
        0
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> &TreeNode {
        &self.nodes[id as usize]
    }

    /// Outgoing edges of a node, in action order.
    pub fn children(&self, id: u32) -> &[Edge] {
        match self.nodes[id as usize] {
            TreeNode::Chance { first_edge, num } | TreeNode::Decision { first_edge, num, .. } => {
                &self.edges[first_edge as usize..(first_edge + num) as usize]
            }
            TreeNode::Terminal { .. } => &[],
        }
    }

    pub fn infosets(&self, player: Player) -> &InfosetTable {
        &self.tables[player.index()]
    }

    pub fn num_terminals(&self) -> usize {
        self.num_terminals
    }

    /// Node reached by following `history` from the root.
    pub fn follow(&self, history: &[u8]) -> Option<u32> {
        let mut node = self.root();
        for &a in history {
            node = self.children(node).get(a as usize)?.child;
        }
        Some(node)
    }
}
