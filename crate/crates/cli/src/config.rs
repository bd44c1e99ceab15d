//! Experiment configuration: a TOML file whose keys may be overridden from
//! the command line, validated before any work starts.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use offsp_core::offline_rl::{Algorithm, LearnerConfig};
use offsp_core::off_fsp::OffFspConfig;
use offsp_core::{make_game, GameSpec};
use serde::{Deserialize, Serialize};

/// A problem with user input (exit code 1).
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

macro_rules! invalid {
    ($($arg:tt)*) => { anyhow::Error::new($crate::config::Invalid(format!($($arg)*))) };
}
pub(crate) use invalid;

/// How the offline dataset is obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum Recipe {
    /// Skewed RPS, sampled.
    D1,
    /// Skewed RPS with exact joint proportions.
    D1Exact,
    /// Partially covered asymmetric RPS.
    D2,
    /// Expert/random mixture with the given expert ratio.
    Mix(f64),
    /// The first `k` solver checkpoints.
    Population(usize),
    File(PathBuf),
}

impl Recipe {
    pub fn parse(s: &str) -> Result<Recipe> {
        let (head, arg) = s.split_once(':').map_or((s, None), |(h, a)| (h, Some(a)));
        let recipe = match (head, arg) {
            ("d1", None) => Recipe::D1,
            ("d1-exact", None) => Recipe::D1Exact,
            ("d2", None) => Recipe::D2,
            ("mix", Some(r)) => {
                let r: f64 = r.parse().map_err(|_| invalid!("mix ratio `{r}` is not a number"))?;
                if !(0.0..=1.0).contains(&r) {
                    return Err(invalid!("mix ratio {r} outside [0, 1]"));
                }
                Recipe::Mix(r)
            }
            ("population", Some(k)) => {
                let k: usize = k.parse().map_err(|_| invalid!("population size `{k}` is not a count"))?;
                if k == 0 {
                    return Err(invalid!("population size must be at least 1"));
                }
                Recipe::Population(k)
            }
            ("file", Some(p)) if !p.is_empty() => Recipe::File(PathBuf::from(p)),
            _ => {
                return Err(invalid!(
                    "unknown dataset recipe `{s}` (expected d1, d1-exact, d2, mix:<ratio>, population:<k> or file:<path>)"
                ))
            }
        };
        Ok(recipe)
    }

    /// Name recorded in dataset provenance; selects per-recipe defaults.
    pub fn name(&self) -> String {
        match self {
            Recipe::D1 => "d1".into(),
            Recipe::D1Exact => "d1-exact".into(),
            Recipe::D2 => "d2".into(),
            Recipe::Mix(r) => format!("mix:{r}"),
            Recipe::Population(k) => format!("population:{k}"),
            Recipe::File(p) => format!("file:{}", p.display()),
        }
    }

    pub fn needs_experts(&self) -> bool {
        matches!(self, Recipe::Mix(r) if *r > 0.0) || matches!(self, Recipe::Population(k) if *k > 1)
    }
}

fn default_n() -> usize {
    10_000
}
fn default_iterations() -> usize {
    100
}
fn default_eval_every() -> usize {
    10
}
fn default_runs() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("runs/latest")
}

/// The experiment file schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: String,
    #[serde(default)]
    pub params: toml::Table,
    /// d1 | d1-exact | d2 | mix:<ratio> | population:<k> | file:<path>
    pub dataset: String,
    #[serde(default = "default_n")]
    pub n_trajectories: usize,
    /// Checkpoints written by `gen-expert`, used by mix and population recipes.
    #[serde(default)]
    pub expert_dir: Option<PathBuf>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of seeds, `seed, seed + 1, ...`.
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Single-agent baselines to evaluate: bc, qlearning, cql, bcq, crr.
    #[serde(default)]
    pub baselines: Vec<String>,
    /// Also write every learned policy (collection.json).
    #[serde(default)]
    pub keep_policies: bool,
    /// Learner overrides; unset keys take the game's defaults.
    #[serde(default)]
    pub learner: toml::Table,
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: GameSpec,
    pub recipe: Recipe,
    pub learner: LearnerConfig,
    pub baselines: Vec<Algorithm>,
}

impl Experiment {
    pub fn off_fsp(&self, seed: u64) -> OffFspConfig {
        OffFspConfig {
            iterations: self.config.iterations,
            eval_every: self.config.eval_every,
            seed,
            learner: self.learner.clone(),
            parallel: true,
            keep_policies: self.config.keep_policies,
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let base = self.config.seed;
        (0..self.config.runs as u64).map(move |i| base + i)
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// Applies a `dotted.key=value` override.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| invalid!("override `{assignment}` is not KEY=VALUE"))?;
    set_key(table, key.trim(), parse_value(value.trim()))
}

pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| invalid!("empty config key"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| invalid!("config key `{p}` is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse::<toml::Table>().map_err(|e| invalid!("{}: {e}", path.display()))
}

/// Loads `path` (if any), applies overrides in order and validates.
pub fn load_experiment(path: Option<&Path>, overrides: &[String]) -> Result<Experiment> {
    let mut table = match path {
        Some(p) => read_table(p)?,
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    resolve(table)
}

pub fn resolve(table: toml::Table) -> Result<Experiment> {
    let config: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e| invalid!("config: {e}"))?;
    let params = serde_json::to_value(&config.params)?;
    let spec = make_game(&config.game, &params).map_err(|e| invalid!("{e}"))?;
    let recipe = Recipe::parse(&config.dataset)?;
    match (&recipe, &spec) {
        (Recipe::D1 | Recipe::D1Exact, GameSpec::Rps) | (Recipe::D2, GameSpec::RpsAsym) => {}
        (Recipe::D1 | Recipe::D1Exact, _) => return Err(invalid!("recipe {} requires game rps", recipe.name())),
        (Recipe::D2, _) => return Err(invalid!("recipe d2 requires game rps_asym")),
        _ => {}
    }
    if recipe.needs_experts() && config.expert_dir.is_none() {
        return Err(invalid!(
            "recipe {} needs expert checkpoints: set expert_dir (create them with `offsp gen-expert`)",
            recipe.name()
        ));
    }
    if config.n_trajectories == 0 {
        return Err(invalid!("n_trajectories must be at least 1"));
    }
    if config.runs == 0 {
        return Err(invalid!("runs must be at least 1"));
    }

    let defaults = LearnerConfig::for_game(spec.name(), &recipe.name());
    let mut merged = toml::Table::try_from(&defaults)?;
    for (k, v) in &config.learner {
        merged.insert(k.clone(), v.clone());
    }
    let learner: LearnerConfig = toml::Value::Table(merged).try_into().map_err(|e| invalid!("learner: {e}"))?;
    learner.validate().map_err(|e| invalid!("{e}"))?;

    let baselines = config
        .baselines
        .iter()
        .map(|b| Algorithm::parse(b).map_err(|e| invalid!("baselines: {e}")))
        .collect::<Result<Vec<_>>>()?;
    let exp = Experiment { config, spec, recipe, learner, baselines };
    exp.off_fsp(0).validate().map_err(|e| invalid!("{e}"))?;
    Ok(exp)
}
