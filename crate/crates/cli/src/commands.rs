use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{bail, Context, Result};
use offsp_core::artifact::Artifact;
use offsp_core::dataset::{
    coverage_report, empirical_tabular, load, make_rps_d1, make_rps_d1_exact, make_rps_d2, sample_mix_dataset,
    sample_population_dataset, save, GameDataset,
};
use offsp_core::off_fsp::{run_off_fsp, single_agent_baseline};
use offsp_core::offline_rl::Algorithm;
use offsp_core::policy::{behavior_profile, uniform_profile};
use offsp_core::solver::{fp_solve, nash_conv, NashConvReport};
use offsp_core::{GameSpec, GameTree, StrategyProfile};
use serde::{Deserialize, Serialize};

use crate::config::{invalid, Experiment, Recipe};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn metric_rows(rows: &[(String, f64)]) -> Vec<Vec<String>> {
    // Adding zero folds -0 into 0.
    rows.iter().map(|(k, v)| vec![k.clone(), (v + 0.0).to_string()]).collect()
}

fn report_rows(r: &NashConvReport) -> Vec<(String, f64)> {
    vec![
        ("nashconv".into(), r.total),
        ("gain_p0".into(), r.per_player_gain[0]),
        ("gain_p1".into(), r.per_player_gain[1]),
        ("br_value_p0".into(), r.br_values[0]),
        ("br_value_p1".into(), r.br_values[1]),
        ("value_p0".into(), r.profile_values[0]),
        ("value_p1".into(), r.profile_values[1]),
    ]
}

fn checkpoint_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("checkpoint_{k:03}.json"))
}

/// Fictitious-play checkpoints: checkpoint `k` is the average policy after
/// `k - 1` iterations, so checkpoint 1 is the uniform starting policy.
pub fn gen_expert(spec: &GameSpec, checkpoints: usize, out: &Path) -> Result<()> {
    if checkpoints == 0 {
        return Err(invalid!("--iterations must be at least 1"));
    }
    let tree = GameTree::build(spec)?;
    create_dir(out)?;
    let mut profiles = vec![(0, uniform_profile(&tree))];
    if checkpoints > 1 {
        profiles.extend(fp_solve(&tree, checkpoints - 1, 1));
    }
    let mut rows = Vec::with_capacity(profiles.len());
    for (k, (iters, profile)) in profiles.iter().enumerate() {
        let path = checkpoint_path(out, k + 1);
        Artifact::policy(&tree, profile, &format!("fp:{iters}")).save(&path).with_context(|| format!("writing {}", path.display()))?;
        let nc = nash_conv(&tree, profile).total;
        rows.push(vec![(k + 1).to_string(), iters.to_string(), nc.to_string()]);
    }
    write_rows(&out.join("curve.csv"), &["checkpoint", "fp_iterations", "nashconv"], &rows)?;
    let last = rows.last().map(|r| r[2].clone()).unwrap_or_default();
    println!("wrote {} checkpoints to {}; final NashConv {last}", rows.len(), out.display());
    Ok(())
}

/// Loads checkpoints `1..=count` from `dir`.
fn load_checkpoints(dir: &Path, tree: &GameTree, count: usize) -> Result<Vec<StrategyProfile>> {
    let mut out = Vec::with_capacity(count);
    for k in 1..=count {
        let path = checkpoint_path(dir, k);
        if !path.exists() {
            return Err(invalid!(
                "missing expert checkpoint {}: run `offsp gen-expert --game {} --iterations {count} --out {}` first",
                path.display(),
                tree.spec().name(),
                dir.display()
            ));
        }
        let a = Artifact::load(&path).with_context(|| format!("reading {}", path.display()))?;
        if a.game_spec()? != *tree.spec() {
            return Err(invalid!("{} is for game {}, not {}", path.display(), a.game, tree.spec().name()));
        }
        out.push(behavior_profile(tree, &a.to_profile(tree)?));
    }
    Ok(out)
}

fn latest_checkpoint(dir: &Path) -> Result<usize> {
    let entries = fs::read_dir(dir).map_err(|e| invalid!("expert directory {}: {e}", dir.display()))?;
    let mut latest = 0;
    for e in entries {
        let name = e?.file_name();
        let name = name.to_string_lossy();
        if let Some(k) = name.strip_prefix("checkpoint_").and_then(|s| s.strip_suffix(".json")) {
            latest = latest.max(k.parse().unwrap_or(0));
        }
    }
    if latest == 0 {
        return Err(invalid!("no expert checkpoints in {}: run `offsp gen-expert` first", dir.display()));
    }
    Ok(latest)
}

/// Builds the dataset an experiment asks for, deterministically from `seed`.
pub fn materialize(exp: &Experiment, tree: &GameTree, seed: u64) -> Result<GameDataset> {
    let n = exp.config.n_trajectories;
    let spec = &exp.spec;
    let random = || behavior_profile(tree, &uniform_profile(tree));
    let experts = || exp.config.expert_dir.as_deref().expect("validated");
    let d = match &exp.recipe {
        Recipe::D1 => make_rps_d1(seed)?,
        Recipe::D1Exact => make_rps_d1_exact()?,
        Recipe::D2 => make_rps_d2(seed)?,
        Recipe::Mix(r) => {
            let expert = if *r > 0.0 {
                let dir = experts();
                load_checkpoints(dir, tree, latest_checkpoint(dir)?)?.pop().expect("non-empty")
            } else {
                random()
            };
            sample_mix_dataset(spec, &expert, &random(), *r, n, seed)?
        }
        Recipe::Population(k) => {
            let pop = if *k > 1 { load_checkpoints(experts(), tree, *k)? } else { vec![random()] };
            sample_population_dataset(spec, &pop, n, seed)?
        }
        Recipe::File(path) => load(path, Some(spec.name())).with_context(|| format!("loading {}", path.display()))?,
    };
    if d.game != *spec {
        return Err(invalid!("dataset is for {:?}, config says {:?}", d.game, spec));
    }
    Ok(d)
}

fn coverage_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    out.with_file_name(format!("{stem}.coverage.csv"))
}

pub fn sample(exp: &Experiment, out: &Path) -> Result<()> {
    let tree = GameTree::build(&exp.spec)?;
    let d = materialize(exp, &tree, exp.config.seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save(&d, out).with_context(|| format!("writing {}", out.display()))?;
    let cov = coverage_report(&tree, &d)?;
    let cov_path = coverage_path(out);
    write_rows(&cov_path, &["metric", "value"], &metric_rows(&cov.rows()))?;
    println!(
        "wrote {} trajectories ({}) to {}; terminal coverage {:.4}, pair coverage {:.4}",
        d.len(),
        d.provenance.recipe,
        out.display(),
        cov.terminal_fraction(),
        cov.pair_fraction()
    );
    Ok(())
}

/// What one seed of `run` produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub game: String,
    pub dataset: String,
    pub seed: u64,
    pub iterations: usize,
    pub algorithm: Algorithm,
    pub final_nash_conv: f64,
    pub baselines: BTreeMap<String, f64>,
}

fn run_seed(exp: &Experiment, tree: &GameTree, seed: u64, dir: &Path) -> Result<RunSummary> {
    create_dir(dir)?;
    let d = materialize(exp, tree, seed)?;
    let cov = coverage_report(tree, &d)?;
    write_rows(&dir.join("coverage.csv"), &["metric", "value"], &metric_rows(&cov.rows()))?;

    let mut baselines = BTreeMap::new();
    let mut rows = Vec::new();
    for &algorithm in &exp.baselines {
        let profile = if algorithm == Algorithm::Bc {
            empirical_tabular(tree, &d)?
        } else {
            let learner = offsp_core::offline_rl::LearnerConfig { algorithm, ..exp.learner.clone() };
            single_agent_baseline(tree, &d, &learner, seed)?
        };
        let r = nash_conv(tree, &profile);
        rows.push(vec![algorithm.to_string(), r.total.to_string(), r.per_player_gain[0].to_string(), r.per_player_gain[1].to_string()]);
        baselines.insert(algorithm.to_string(), r.total);
    }
    write_rows(&dir.join("baselines.csv"), &["baseline", "nashconv", "gain_p0", "gain_p1"], &rows)?;

    let run = run_off_fsp(tree, &d, &exp.off_fsp(seed))?;
    run.report.write_csv(create(&dir.join("report.csv"))?)?;
    run.report.write_timing_csv(create(&dir.join("timing.csv"))?)?;
    let label = format!("{} {} seed {seed}", exp.learner.algorithm, exp.recipe.name());
    Artifact::store(tree, &run.store, &label).save(dir.join("store.json"))?;
    if exp.config.keep_policies {
        Artifact::collection(tree, &run.collection, &label).save(dir.join("collection.json"))?;
    }
    let summary = RunSummary {
        game: exp.spec.name().into(),
        dataset: exp.recipe.name(),
        seed,
        iterations: exp.config.iterations,
        algorithm: exp.learner.algorithm,
        final_nash_conv: run.report.final_nash_conv(),
        baselines,
    };
    let mut f = create(&dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    Ok(summary)
}

fn write_experiment(exp: &Experiment, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(&exp.config)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs every seed of the experiment, in-process or across `jobs` worker processes.
pub fn run(exp: &Experiment, jobs: usize) -> Result<()> {
    let out = &exp.config.output;
    create_dir(out)?;
    write_experiment(exp, &out.join("experiment.toml"))?;
    let tree = GameTree::build(&exp.spec)?;
    let seeds: Vec<u64> = exp.seeds().collect();
    if seeds.len() == 1 {
        let s = run_seed(exp, &tree, seeds[0], out)?;
        print_summary(&s);
        return Ok(());
    }
    let dir_of = |seed: u64| out.join(format!("seed-{seed}"));
    let mut summaries = Vec::with_capacity(seeds.len());
    if jobs <= 1 {
        for &seed in &seeds {
            let s = run_seed(exp, &tree, seed, &dir_of(seed))?;
            print_summary(&s);
            summaries.push(s);
        }
    } else {
        let exe = std::env::current_exe().context("locating the offsp executable")?;
        for wave in seeds.chunks(jobs) {
            let children = wave
                .iter()
                .map(|&seed| {
                    Command::new(&exe)
                        .arg("run")
                        .arg("--config")
                        .arg(out.join("experiment.toml"))
                        .args(["--seed", &seed.to_string(), "--runs", "1", "--out"])
                        .arg(dir_of(seed))
                        .spawn()
                        .context("starting worker process")
                })
                .collect::<Result<Vec<_>>>()?;
            for (child, seed) in children.into_iter().zip(wave) {
                let status = child.wait_with_output()?.status;
                if !status.success() {
                    bail!("worker for seed {seed} failed ({status})");
                }
            }
        }
        for &seed in &seeds {
            let path = dir_of(seed).join("summary.json");
            let f = File::open(&path).with_context(|| format!("reading {}", path.display()))?;
            summaries.push(serde_json::from_reader(f)?);
        }
    }
    let mut header = vec!["seed".to_string(), "final_nashconv".into()];
    header.extend(exp.baselines.iter().map(|b| format!("{b}_nashconv")));
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s: &RunSummary| {
            let mut r = vec![s.seed.to_string(), s.final_nash_conv.to_string()];
            r.extend(exp.baselines.iter().map(|b| s.baselines[&b.to_string()].to_string()));
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(&out.join("summary.csv"), &header, &rows)?;
    let m = median(summaries.iter().map(|s| s.final_nash_conv).collect());
    println!("median final NashConv over {} seeds: {m}", summaries.len());
    Ok(())
}

fn print_summary(s: &RunSummary) {
    let mut line = format!("seed {}: Off-FSP-{} final NashConv {}", s.seed, s.algorithm, s.final_nash_conv);
    for (name, v) in &s.baselines {
        line.push_str(&format!(", {name} {v}"));
    }
    println!("{line}");
}

/// Exact evaluation of a policy, store or collection file, or of a
/// dataset's empirical behavior policy.
pub fn eval(artifact: Option<&Path>, dataset: Option<&Path>, game: Option<&str>, out: Option<&Path>) -> Result<()> {
    let (tree, profile) = match (artifact, dataset) {
        (Some(path), None) => {
            let a = Artifact::load(path).map_err(|e| invalid!("{}: {e}", path.display()))?;
            if let Some(g) = game.filter(|g| *g != a.game) {
                return Err(invalid!("{} holds a {} policy, not {g}", path.display(), a.game));
            }
            let tree = GameTree::build(&a.game_spec()?)?;
            let profile = a.to_profile(&tree).map_err(|e| invalid!("{}: {e}", path.display()))?;
            (tree, profile)
        }
        (None, Some(path)) => {
            let d = load(path, game).map_err(|e| invalid!("{}: {e}", path.display()))?;
            let tree = GameTree::build(&d.game)?;
            let profile = empirical_tabular(&tree, &d)?;
            (tree, profile)
        }
        _ => return Err(invalid!("give exactly one of a policy/store/collection file or --dataset")),
    };
    let rows = report_rows(&nash_conv(&tree, &profile));
    for (k, v) in &rows {
        println!("{k}\t{}", v + 0.0);
    }
    if let Some(out) = out {
        write_rows(out, &["metric", "value"], &metric_rows(&rows))?;
    }
    Ok(())
}

/// Dataset statistics and coverage.
pub fn inspect(path: &Path, out: Option<&Path>) -> Result<()> {
    let d = load(path, None).map_err(|e| invalid!("{}: {e}", path.display()))?;
    let tree = GameTree::build(&d.game)?;
    let mut rows = coverage_report(&tree, &d)?.rows();
    let n = d.len().max(1) as f64;
    let mean_return = d.trajectories.iter().map(|t| t.returns[0]).sum::<f64>() / n;
    let mean_events = d.trajectories.iter().map(|t| t.events.len() as f64).sum::<f64>() / n;
    rows.push(("mean_return_p0".into(), mean_return));
    rows.push(("mean_events".into(), mean_events));
    println!("game\t{}", d.game.name());
    println!("recipe\t{}", d.provenance.recipe);
    for (k, v) in &rows {
        println!("{k}\t{}", v + 0.0);
    }
    if let Some(out) = out {
        write_rows(out, &["metric", "value"], &metric_rows(&rows))?;
    }
    Ok(())
}
