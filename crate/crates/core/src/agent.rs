//! Tabular Q-learning over `(x, y, heading)` states.
//!
//! Tables are dense and per `(scene, target class)`: a tabular agent cannot
//! share values across scenes, and the target class decides which poses are
//! goals.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closeness::ClosenessTable;
use crate::scene::goal::{success_check, GoalMap};
use crate::scene::{step, Action, AgentPose, Scene};
use crate::sensor::{Camera, Detection, ObservationCache};
use crate::shaping::{RewardSpec, ShapingError, ShapingState, Terminal};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("scene {scene_id}: start {start} cannot reach target '{target_class}'")]
    UnreachableStart {
        scene_id: String,
        target_class: String,
        start: AgentPose,
    },
    #[error("scene {scene_id}: no success pose exists for target '{target_class}'")]
    NoGoal { scene_id: String, target_class: String },
    #[error("non-finite Q value {0}")]
    NonFinite(f64),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Shaping(#[from] ShapingError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub scene_id: String,
    pub target_class: String,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(scene: &Scene, target_class: &str) -> QTable {
        QTable {
            scene_id: scene.id.clone(),
            target_class: target_class.to_string(),
            width: scene.width,
            height: scene.height,
            values: vec![0.0; scene.pose_count() * Action::ALL.len()],
        }
    }

    fn slot(&self, pose: AgentPose, action: Action) -> usize {
        ((pose.y * self.width + pose.x) * 4 + pose.heading.index()) * 4 + action.index()
    }

    pub fn get(&self, pose: AgentPose, action: Action) -> f64 {
        self.values[self.slot(pose, action)]
    }

    pub fn set(&mut self, pose: AgentPose, action: Action, value: f64) -> Result<(), AgentError> {
        if !value.is_finite() {
            return Err(AgentError::NonFinite(value));
        }
        let i = self.slot(pose, action);
        self.values[i] = value;
        Ok(())
    }

    pub fn row(&self, pose: AgentPose) -> [f64; 4] {
        let i = self.slot(pose, Action::MoveAhead);
        self.values[i..i + 4].try_into().expect("four actions")
    }

    pub fn max_value(&self, pose: AgentPose) -> f64 {
        self.row(pose).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableDoc {
    pub target_class: String,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// On-disk Q tables for one (scene, run seed) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub scene_id: String,
    pub mode: String,
    pub run_seed: u64,
    pub tables: Vec<QTableDoc>,
}

impl Checkpoint {
    pub fn new<'a>(scene_id: &str, mode: &str, run_seed: u64, tables: impl IntoIterator<Item = &'a QTable>) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            scene_id: scene_id.to_string(),
            mode: mode.to_string(),
            run_seed,
            tables: tables
                .into_iter()
                .map(|q| QTableDoc {
                    target_class: q.target_class.clone(),
                    width: q.width,
                    height: q.height,
                    values: q.values.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Checkpoint, AgentError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(AgentError::Checkpoint(format!(
                "unsupported format version {}",
                ck.format_version
            )));
        }
        Ok(ck)
    }

    /// Rebuilds the tables, checking their shape against `scene`.
    pub fn into_tables(self, scene: &Scene) -> Result<BTreeMap<String, QTable>, AgentError> {
        if self.scene_id != scene.id {
            return Err(AgentError::Checkpoint(format!(
                "checkpoint is for {} not {}",
                self.scene_id, scene.id
            )));
        }
        let mut out = BTreeMap::new();
        for doc in self.tables {
            let mut q = QTable::new(scene, &doc.target_class);
            if doc.width != q.width || doc.height != q.height || doc.values.len() != q.values.len() {
                return Err(AgentError::Checkpoint("table shape mismatch".into()));
            }
            if let Some(&bad) = doc.values.iter().find(|v| !v.is_finite()) {
                return Err(AgentError::NonFinite(bad));
            }
            q.values = doc.values;
            out.insert(doc.target_class, q);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub max_steps: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub seed: u64,
    /// Emit a log line every this many episodes.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 20_000,
            max_steps: 100,
            alpha: 0.1,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 10_000,
            seed: 0,
            log_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon must lie in [0, 1]");
            }
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        if self.epsilon_decay_episodes == 0 {
            return self.epsilon_end;
        }
        let frac = (episode as f64 / self.epsilon_decay_episodes as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Epsilon-greedy choice; greedy ties go to the earliest action in [`Action::ALL`].
pub fn select_action<R: Rng>(q: &QTable, pose: AgentPose, epsilon: f64, rng: &mut R) -> Action {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return Action::ALL[rng.gen_range(0..Action::ALL.len())];
    }
    greedy_action(q, pose)
}

pub fn greedy_action(q: &QTable, pose: AgentPose) -> Action {
    let row = q.row(pose);
    let mut best = 0;
    for i in 1..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

/// One temporal-difference backup.
#[allow(clippy::too_many_arguments)]
pub fn q_update(
    q: &mut QTable,
    s: AgentPose,
    a: Action,
    r: f64,
    next: AgentPose,
    terminal: bool,
    cfg: &TrainConfig,
) -> Result<(), AgentError> {
    if !r.is_finite() {
        return Err(AgentError::NonFinite(r));
    }
    let bootstrap = if terminal { 0.0 } else { cfg.gamma * q.max_value(next) };
    let old = q.get(s, a);
    q.set(s, a, old + cfg.alpha * (r + bootstrap - old))
}

/// Scene plus everything precomputed for running episodes in it.
#[derive(Debug, Clone)]
pub struct Environment {
    pub scene: Scene,
    pub camera: Camera,
    pub d_success: f64,
    cache: ObservationCache,
    goals: BTreeMap<String, GoalMap>,
}

impl Environment {
    pub fn new(scene: Scene, camera: &Camera, d_success: f64) -> Result<Environment, AgentError> {
        let cache = ObservationCache::build(&scene, camera);
        let mut goals = BTreeMap::new();
        for class in scene.classes(crate::scene::Role::Target) {
            let map = GoalMap::build(&scene, &cache, &class, d_success);
            if !map.has_goal() {
                return Err(AgentError::NoGoal {
                    scene_id: scene.id.clone(),
                    target_class: class,
                });
            }
            goals.insert(class, map);
        }
        Ok(Environment {
            scene,
            camera: *camera,
            d_success,
            cache,
            goals,
        })
    }

    pub fn target_classes(&self) -> impl Iterator<Item = &str> {
        self.goals.keys().map(String::as_str)
    }

    pub fn detections(&self, pose: AgentPose) -> &[Detection] {
        self.cache.detections(&self.scene, pose)
    }

    pub fn cache(&self) -> &ObservationCache {
        &self.cache
    }

    /// Optimal number of moves and rotations to a success pose.
    pub fn path_length(&self, pose: AgentPose, target_class: &str) -> Option<u32> {
        self.goals.get(target_class)?.distance(&self.scene, pose)
    }

    /// Poses at least one action away from success, in pose-index order.
    pub fn start_candidates(&self, target_class: &str) -> Vec<AgentPose> {
        self.scene
            .poses()
            .filter(|&p| matches!(self.path_length(p, target_class), Some(d) if d >= 1))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Train,
    EvalGreedy,
}

pub enum Policy<'q> {
    Train { q: &'q mut QTable, epsilon: f64 },
    Greedy(&'q QTable),
}

impl Policy<'_> {
    fn table(&self) -> &QTable {
        match self {
            Policy::Train { q, .. } => q,
            Policy::Greedy(q) => q,
        }
    }

    pub fn mode(&self) -> RunMode {
        match self {
            Policy::Train { .. } => RunMode::Train,
            Policy::Greedy(_) => RunMode::EvalGreedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Actions taken, `Done` included.
    pub taken_steps: u32,
    /// Shortest path length plus the final `Done`.
    pub optimal_steps: u32,
    pub cumulative_reward: f64,
    pub scene_id: String,
    pub target_class: String,
    pub start: AgentPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub pose: AgentPose,
    pub action: Action,
    pub next: AgentPose,
    pub terminal: Terminal,
    pub reward: f64,
}

/// Runs one episode from `start`. `trace`, when given, receives every step.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<R: Rng>(
    env: &Environment,
    target_class: &str,
    start: AgentPose,
    spec: &RewardSpec,
    table: &ClosenessTable,
    mut policy: Policy<'_>,
    cfg: &TrainConfig,
    rng: &mut R,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<EpisodeResult, AgentError> {
    let shortest = match env.path_length(start, target_class) {
        Some(d) => d,
        None => {
            return Err(AgentError::UnreachableStart {
                scene_id: env.scene.id.clone(),
                target_class: target_class.to_string(),
                start,
            })
        }
    };
    let mut ledger = ShapingState::new();
    ledger.observe_start(env.detections(start));
    let mut pose = start;
    let mut cumulative = 0.0;
    let mut taken = 0u32;
    let mut success = false;

    for t in 0..cfg.max_steps {
        let action = match &policy {
            Policy::Train { q, epsilon } => select_action(q, pose, *epsilon, rng),
            Policy::Greedy(q) => greedy_action(q, pose),
        };
        taken += 1;
        let (next, terminal) = if action == Action::Done {
            let ok = success_check(env.detections(pose), target_class, env.d_success);
            (pose, if ok { Terminal::Success } else { Terminal::Failure })
        } else {
            let next = step(&env.scene, pose, action);
            let timeout = t + 1 == cfg.max_steps;
            (next, if timeout { Terminal::Failure } else { Terminal::Continue })
        };
        let reward = ledger.apply(spec, table, target_class, env.detections(next), terminal)?;
        cumulative += reward;
        if let Policy::Train { q, .. } = &mut policy {
            q_update(q, pose, action, reward, next, action == Action::Done, cfg)?;
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TraceStep { pose, action, next, terminal, reward });
        }
        pose = next;
        if action == Action::Done {
            success = terminal == Terminal::Success;
            break;
        }
    }
    debug_assert!(policy.table().values().iter().all(|v| v.is_finite()));

    Ok(EpisodeResult {
        success,
        taken_steps: taken,
        optimal_steps: shortest + 1,
        cumulative_reward: cumulative,
        scene_id: env.scene.id.clone(),
        target_class: target_class.to_string(),
        start,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub episode: usize,
    pub reward: f64,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub tables: BTreeMap<String, QTable>,
    pub log: Vec<LogLine>,
}

/// Trains one Q table per target class of the scene. Episodes cycle through
/// the target classes; starts are uniform over [`Environment::start_candidates`].
pub fn train(
    env: &Environment,
    spec: &RewardSpec,
    table: &ClosenessTable,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, AgentError> {
    cfg.validate()?;
    let classes: Vec<String> = env.target_classes().map(str::to_string).collect();
    let starts: Vec<Vec<AgentPose>> = classes.iter().map(|c| env.start_candidates(c)).collect();
    let mut tables: BTreeMap<String, QTable> = classes
        .iter()
        .map(|c| (c.clone(), QTable::new(&env.scene, c)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::new();

    for episode in 0..cfg.episodes {
        let ci = episode % classes.len();
        let class = &classes[ci];
        if starts[ci].is_empty() {
            continue;
        }
        let start = starts[ci][rng.gen_range(0..starts[ci].len())];
        let q = tables.get_mut(class).expect("table per class");
        let epsilon = cfg.epsilon_at(episode);
        let res = run_episode(
            env,
            class,
            start,
            spec,
            table,
            Policy::Train { q, epsilon },
            cfg,
            &mut rng,
            None,
        )?;
        if cfg.log_every > 0 && episode % cfg.log_every == 0 {
            log.push(LogLine {
                episode,
                reward: res.cumulative_reward,
                success: res.success,
            });
        }
    }
    Ok(TrainOutcome { tables, log })
}

/// Greedy rollouts of frozen tables over a fixed list of (target, start) pairs.
pub fn evaluate(
    env: &Environment,
    tables: &BTreeMap<String, QTable>,
    episodes: &[(String, AgentPose)],
    spec: &RewardSpec,
    table: &ClosenessTable,
    cfg: &TrainConfig,
) -> Result<Vec<EpisodeResult>, AgentError> {
    // greedy rollouts never draw from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    episodes
        .iter()
        .map(|(class, start)| {
            let fresh;
            let q = match tables.get(class) {
                Some(q) => q,
                None => {
                    fresh = QTable::new(&env.scene, class);
                    &fresh
                }
            };
            run_episode(env, class, *start, spec, table, Policy::Greedy(q), cfg, &mut rng, None)
        })
        .collect()
}
