//! Offline fictitious self-play for two-player zero-sum extensive-form games.
//!
//! The crate contains the game engine ([`game`], [`tree`]), exact
//! evaluation ([`solver`]), offline datasets ([`dataset`]), importance
//! reweighting ([`reweight`]), tabular offline learners ([`offline_rl`]) and
//! the self-play loop that ties them together ([`off_fsp`]).

pub mod artifact;
pub mod dataset;
pub mod error;
pub mod game;
pub mod off_fsp;
pub mod offline_rl;
pub mod policy;
pub mod reweight;
pub mod solver;
pub mod tree;

pub use error::{Error, Result};
pub use game::{make_game, Action, Actor, GameSpec, GameState, InfoKey, Player};
pub use policy::{BehaviorPolicy, Fallback, SequenceForm, StrategyProfile, TabularPolicy, TabularProfile};
pub use tree::GameTree;
