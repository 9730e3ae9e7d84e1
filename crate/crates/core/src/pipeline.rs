//! The experiment pipeline behind the command-line subcommands:
//! gen -> closeness -> train -> eval -> report.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! scenes/scene_000.json ...   scenes/manifest.json
//! closeness.csv
//! checkpoints/<mode>/<scene_id>_seed<run_seed>.json
//! logs/<mode>/<scene_id>_seed<run_seed>.csv
//! results.csv
//! report.csv  table.csv  table.txt
//! ```
//!
//! Every stage is a pure function of the config; parallel work is merged in
//! (scene, seed) order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{self, Checkpoint, Environment, TrainConfig};
use crate::closeness::{fit_closeness, ClosenessTable};
use crate::config::ExperimentConfig;
use crate::eval::{self, ComparisonTable, ResultRow, STRATA};
use crate::scene::{generate_scene, AgentPose, Scene};
use crate::shaping::RewardMode;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl PipelineError {
    /// Process exit code: 1 config, 2 data, 3 invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Invariant(_) => 3,
        }
    }
}

fn data(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub id: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub scenes: Vec<ManifestEntry>,
    /// SHA-256 over the scene files' bytes, concatenated in index order.
    pub hash: String,
}

pub struct Experiment {
    pub config: ExperimentConfig,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Experiment, PipelineError> {
        config.validate().map_err(PipelineError::Config)?;
        Ok(Experiment { config })
    }

    pub fn load(path: &Path) -> Result<Experiment, PipelineError> {
        Experiment::new(ExperimentConfig::load(path).map_err(PipelineError::Config)?)
    }

    fn out(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn scenes_dir(&self) -> PathBuf {
        self.out().join("scenes")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.scenes_dir().join("manifest.json")
    }

    pub fn closeness_path(&self) -> PathBuf {
        self.out().join("closeness.csv")
    }

    pub fn results_path(&self) -> PathBuf {
        self.out().join("results.csv")
    }

    pub fn checkpoint_path(&self, mode: RewardMode, scene_id: &str, seed: u64) -> PathBuf {
        self.out()
            .join("checkpoints")
            .join(mode.as_str())
            .join(format!("{scene_id}_seed{seed}.json"))
    }

    pub fn log_path(&self, mode: RewardMode, scene_id: &str, seed: u64) -> PathBuf {
        self.out()
            .join("logs")
            .join(mode.as_str())
            .join(format!("{scene_id}_seed{seed}.csv"))
    }

    /// Per-scene generator seeds drawn from the corpus seed.
    pub fn scene_seeds(&self) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.corpus.seed);
        (0..self.config.corpus.size).map(|_| rng.gen()).collect()
    }

    pub fn generate_corpus(&self) -> Result<Vec<Scene>, PipelineError> {
        self.scene_seeds()
            .into_iter()
            .enumerate()
            .map(|(i, seed)| {
                generate_scene(seed, &self.config.scene)
                    .map_err(|e| PipelineError::Data(format!("scene {i}: {e}")))
            })
            .collect()
    }

    /// Writes the scene corpus and its manifest.
    pub fn cmd_gen(&self) -> Result<Manifest, PipelineError> {
        let scenes = self.generate_corpus()?;
        let mut entries = Vec::new();
        let mut all = Sha256::new();
        for (i, scene) in scenes.iter().enumerate() {
            let name = format!("scene_{i:03}.json");
            let text = scene.to_json();
            write(&self.scenes_dir().join(&name), &text)?;
            all.update(text.as_bytes());
            entries.push(ManifestEntry {
                index: i,
                id: scene.id.clone(),
                path: name,
                sha256: sha256_hex(text.as_bytes()),
            });
        }
        let manifest = Manifest {
            count: entries.len(),
            scenes: entries,
            hash: hex::encode(all.finalize()),
        };
        write(
            &self.manifest_path(),
            &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
        )?;
        Ok(manifest)
    }

    pub fn load_manifest(&self) -> Result<Manifest, PipelineError> {
        serde_json::from_str(&read(&self.manifest_path())?).map_err(data)
    }

    /// Loads the corpus, checking every file against the manifest.
    pub fn load_corpus(&self) -> Result<Vec<Scene>, PipelineError> {
        let manifest = self.load_manifest()?;
        manifest
            .scenes
            .iter()
            .map(|entry| {
                let text = read(&self.scenes_dir().join(&entry.path))?;
                if sha256_hex(text.as_bytes()) != entry.sha256 {
                    return Err(PipelineError::Data(format!("{} does not match manifest", entry.path)));
                }
                Scene::from_json(&text).map_err(|e| PipelineError::Data(format!("{}: {e}", entry.path)))
            })
            .collect()
    }

    pub fn cmd_closeness(&self) -> Result<ClosenessTable, PipelineError> {
        let scenes = self.load_corpus()?;
        let table = fit_closeness(&scenes).map_err(data)?;
        write(&self.closeness_path(), &table.to_csv())?;
        Ok(table)
    }

    pub fn load_closeness(&self) -> Result<ClosenessTable, PipelineError> {
        ClosenessTable::from_csv(&read(&self.closeness_path())?).map_err(data)
    }

    pub fn environments(&self, scenes: Vec<Scene>) -> Result<Vec<Environment>, PipelineError> {
        let d = self.config.reward.d_success_m;
        scenes
            .into_par_iter()
            .map(|s| Environment::new(s, &self.config.camera, d).map_err(data))
            .collect()
    }

    fn train_config(&self, run_seed: u64, scene_index: usize) -> TrainConfig {
        TrainConfig {
            seed: mix_seed(run_seed, scene_index as u64),
            ..self.config.train.clone()
        }
    }

    fn pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| PipelineError::Invariant(e.to_string()))
    }

    /// Trains one checkpoint per (scene, run seed) under `mode`.
    pub fn cmd_train(&self, mode: RewardMode, jobs: usize) -> Result<(), PipelineError> {
        let envs = self.environments(self.load_corpus()?)?;
        let table = self.load_closeness()?;
        let spec = self.config.reward.spec(mode);
        let work: Vec<(usize, u64)> = (0..envs.len())
            .flat_map(|i| self.config.run_seeds.iter().map(move |&s| (i, s)))
            .collect();
        let outputs: Vec<Result<(String, String), PipelineError>> = Self::pool(jobs)?.install(|| {
            work.par_iter()
                .map(|&(i, seed)| {
                    let env = &envs[i];
                    let cfg = self.train_config(seed, i);
                    let out = agent::train(env, &spec, &table, &cfg).map_err(|e| match e {
                        agent::AgentError::NonFinite(_) => PipelineError::Invariant(format!("scene {}: {e}", env.scene.id)),
                        other => PipelineError::Data(format!("scene {}: {other}", env.scene.id)),
                    })?;
                    let ck = Checkpoint::new(&env.scene.id, mode.as_str(), seed, out.tables.values());
                    let mut log = String::from("episode,reward,success\n");
                    for l in &out.log {
                        let _ = writeln!(log, "{},{},{}", l.episode, l.reward, u8::from(l.success));
                    }
                    Ok((ck.to_json(), log))
                })
                .collect()
        });
        for (&(i, seed), out) in work.iter().zip(outputs) {
            let (ck, log) = out?;
            let id = &envs[i].scene.id;
            write(&self.checkpoint_path(mode, id, seed), &ck)?;
            write(&self.log_path(mode, id, seed), &log)?;
        }
        Ok(())
    }

    /// The shared evaluation episodes for one scene: `(target, start)` pairs.
    pub fn eval_set(&self, env: &Environment, scene_index: usize) -> Vec<(String, AgentPose)> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.eval.seed, scene_index as u64));
        let classes: Vec<String> = env.target_classes().map(str::to_string).collect();
        let starts: Vec<Vec<AgentPose>> = classes.iter().map(|c| env.start_candidates(c)).collect();
        (0..self.config.eval.episodes_per_scene)
            .filter_map(|k| {
                let ci = k % classes.len();
                let pool = &starts[ci];
                (!pool.is_empty()).then(|| (classes[ci].clone(), pool[rng.gen_range(0..pool.len())]))
            })
            .collect()
    }

    pub fn load_checkpoint(
        &self,
        mode: RewardMode,
        env: &Environment,
        seed: u64,
    ) -> Result<BTreeMap<String, agent::QTable>, PipelineError> {
        let path = self.checkpoint_path(mode, &env.scene.id, seed);
        let text = fs::read_to_string(&path)
            .map_err(|_| PipelineError::Data(format!("missing checkpoint {}", path.display())))?;
        Checkpoint::from_json(&text)
            .and_then(|ck| ck.into_tables(&env.scene))
            .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
    }

    /// Greedy evaluation of every checkpoint of `mode`; replaces that mode's
    /// rows in the results file.
    pub fn cmd_eval(&self, mode: RewardMode, jobs: usize) -> Result<Vec<ResultRow>, PipelineError> {
        let envs = self.environments(self.load_corpus()?)?;
        let table = self.load_closeness()?;
        let spec = self.config.reward.spec(mode);
        let work: Vec<(u64, usize)> = self
            .config
            .run_seeds
            .iter()
            .flat_map(|&s| (0..envs.len()).map(move |i| (s, i)))
            .collect();
        let per: Vec<Result<Vec<ResultRow>, PipelineError>> = Self::pool(jobs)?.install(|| {
            work.par_iter()
                .map(|&(seed, i)| {
                    let env = &envs[i];
                    let tables = self.load_checkpoint(mode, env, seed)?;
                    let episodes = self.eval_set(env, i);
                    let results = agent::evaluate(env, &tables, &episodes, &spec, &table, &self.config.train)
                        .map_err(data)?;
                    Ok(results
                        .into_iter()
                        .map(|result| ResultRow { run_seed: seed, mode, result })
                        .collect())
                })
                .collect()
        });
        let mut rows = Vec::new();
        for r in per {
            rows.extend(r?);
        }

        let mut all = match fs::read_to_string(self.results_path()) {
            Ok(text) => eval::results_from_csv(&text).map_err(data)?,
            Err(_) => Vec::new(),
        };
        all.retain(|r| r.mode != mode);
        all.extend(rows.iter().cloned());
        // stable: keeps (seed, scene, episode) order within a mode
        all.sort_by_key(|r| r.mode);
        write(&self.results_path(), &eval::results_to_csv(&all))?;
        Ok(rows)
    }

    pub fn cmd_report(&self) -> Result<ComparisonTable, PipelineError> {
        let rows = eval::results_from_csv(&read(&self.results_path())?).map_err(data)?;
        for mode in RewardMode::ALL {
            if !rows.iter().any(|r| r.mode == mode) {
                return Err(PipelineError::Data(format!("missing results for reward mode '{mode}'")));
            }
        }
        let reports = eval::reports_from_rows(&rows, &STRATA).map_err(data)?;
        for r in &reports {
            if !(0.0 <= r.spl_pct && r.spl_pct <= r.success_rate_pct + 1e-9 && r.success_rate_pct <= 100.0) {
                return Err(PipelineError::Invariant(format!("metric bounds violated: {r:?}")));
            }
        }
        let cells = eval::cells_from_reports(&reports);
        let table = eval::compare_table(&cells).map_err(data)?;
        write(&self.out().join("report.csv"), &eval::report_to_csv(&cells))?;
        write(&self.out().join("table.csv"), &table.csv)?;
        write(&self.out().join("table.txt"), &table.text)?;
        Ok(table)
    }

    /// Every stage for every mode.
    pub fn run_all(&self, jobs: usize) -> Result<ComparisonTable, PipelineError> {
        self.cmd_gen()?;
        self.cmd_closeness()?;
        for mode in RewardMode::ALL {
            self.cmd_train(mode, jobs)?;
            self.cmd_eval(mode, jobs)?;
        }
        self.cmd_report()
    }
}

/// SplitMix64 finaliser over a pair of seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_mixing_separates_pairs() {
        assert_ne!(mix_seed(1, 0), mix_seed(0, 1));
        assert_ne!(mix_seed(1, 2), mix_seed(1, 3));
        assert_eq!(mix_seed(5, 7), mix_seed(5, 7));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Config("x".into()).exit_code(), 1);
        assert_eq!(PipelineError::Data("x".into()).exit_code(), 2);
        assert_eq!(PipelineError::Invariant("x".into()).exit_code(), 3);
    }
}
