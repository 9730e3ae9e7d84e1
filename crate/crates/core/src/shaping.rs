//! Per-step rewards for the four reward functions.
//!
//! * `Bin`: step penalty everywhere, target reward on success.
//! * `Base`: adds a one-shot partial reward `R_t * Pr(t|p) * k` for each parent
//!   seen within `parent_threshold`.
//! * `Depth`: partial reward for parents and targets with `k` replaced by
//!   `k * clamp(m * d + c, 0, 1)`, `d` the mean depth of the detection box.
//! * `Area`: `k` replaced by `k * max(0, 1 - sqrt(A1 / A2))` with `A1` the box
//!   area at first sighting in the episode and `A2` the current area.
//!
//! Distance-scaled credit is paid on a high-water basis: the total paid for
//! an object in an episode is the largest instantaneous partial value it has
//! reached, so revisiting an object at the same or a worse scale pays nothing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closeness::{ClosenessError, ClosenessTable};
use crate::scene::{ObjectId, Role};
use crate::sensor::Detection;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapingError {
    #[error("episode already finished")]
    EpisodeAlreadyDone,
    #[error("bounding box areas must be positive (A1={a1}, A2={a2})")]
    DegenerateArea { a1: f64, a2: f64 },
    #[error("detections with role {0:?} carry no partial reward")]
    UnshapedRole(Role),
    #[error("invalid reward spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Closeness(#[from] ClosenessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Bin,
    Base,
    Depth,
    Area,
}

impl RewardMode {
    pub const ALL: [RewardMode; 4] = [RewardMode::Bin, RewardMode::Base, RewardMode::Depth, RewardMode::Area];

    pub fn as_str(self) -> &'static str {
        match self {
            RewardMode::Bin => "bin",
            RewardMode::Base => "base",
            RewardMode::Depth => "depth",
            RewardMode::Area => "area",
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bin" => Ok(RewardMode::Bin),
            "base" => Ok(RewardMode::Base),
            "depth" => Ok(RewardMode::Depth),
            "area" | "bbox" => Ok(RewardMode::Area),
            other => Err(format!("unknown reward mode '{other}' (expected bin, base, depth or area)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub mode: RewardMode,
    /// Target reward `R_t`.
    pub r_t: f64,
    pub step_penalty: f64,
    pub k: f64,
    /// Slope per meter of the depth scale.
    pub m: f64,
    pub c: f64,
    /// Meters; `Base` mode only.
    pub parent_threshold: f64,
    /// Meters; success radius.
    pub d_success: f64,
    /// Added on timeout.
    pub failure_reward: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            mode: RewardMode::Bin,
            r_t: 5.0,
            step_penalty: -0.01,
            k: 0.1,
            m: -0.15,
            c: 1.0,
            parent_threshold: 1.0,
            d_success: 1.0,
            failure_reward: 0.0,
        }
    }
}

impl RewardSpec {
    pub fn with_mode(mode: RewardMode) -> Self {
        RewardSpec { mode, ..RewardSpec::default() }
    }

    pub fn validate(&self) -> Result<(), ShapingError> {
        let bad = |m: &str| Err(ShapingError::InvalidSpec(m.to_string()));
        let finite = [self.r_t, self.step_penalty, self.k, self.m, self.c, self.parent_threshold, self.d_success, self.failure_reward];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all constants must be finite");
        }
        if !(self.k > 0.0) {
            return bad("k must be positive");
        }
        if !(self.r_t > 0.0) {
            return bad("r_t must be positive");
        }
        if !(self.step_penalty < 0.0) {
            return bad("step_penalty must be negative");
        }
        if !(self.parent_threshold > 0.0) {
            return bad("parent_threshold must be positive");
        }
        if !(self.d_success > 0.0) {
            return bad("d_success must be positive");
        }
        Ok(())
    }

    /// Largest partial value a single object can earn in one episode.
    pub fn object_cap(&self, role: Role, closeness: f64) -> f64 {
        match role {
            Role::Parent => self.r_t * closeness * self.k,
            Role::Target => self.r_t * self.k,
            Role::Distractor => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terminal {
    Continue,
    Success,
    Failure,
}

/// Per-episode crediting ledger.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShapingState {
    first_area: BTreeMap<ObjectId, u64>,
    credited: BTreeMap<ObjectId, f64>,
    done: bool,
}

/// Depth scale: `k * clamp(m * d + c, 0, 1)`, in `[0, k]`.
pub fn k_depth(d: f64, spec: &RewardSpec) -> f64 {
    spec.k * (spec.m * d + spec.c).clamp(0.0, 1.0)
}

/// Area scale: `k * max(0, 1 - sqrt(A1 / A2))`, in `[0, k)`.
pub fn k_area(a1: f64, a2: f64, spec: &RewardSpec) -> Result<f64, ShapingError> {
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(ShapingError::DegenerateArea { a1, a2 });
    }
    Ok(spec.k * (1.0 - (a1 / a2).sqrt()).max(0.0))
}

/// Partial reward `R_t * Pr(t|p) * k'` for a parent, `R_t * k'` for a target.
pub fn partial_value(
    spec: &RewardSpec,
    table: &ClosenessTable,
    target_class: &str,
    det: &Detection,
    kprime: f64,
) -> Result<f64, ShapingError> {
    match det.role {
        Role::Parent => Ok(spec.r_t * table.lookup(target_class, &det.class)? * kprime),
        Role::Target => Ok(spec.r_t * kprime),
        Role::Distractor => Err(ShapingError::UnshapedRole(Role::Distractor)),
    }
}

impl ShapingState {
    pub fn new() -> Self {
        ShapingState::default()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn first_area(&self, id: ObjectId) -> Option<u64> {
        self.first_area.get(&id).copied()
    }

    pub fn credited(&self, id: ObjectId) -> f64 {
        self.credited.get(&id).copied().unwrap_or(0.0)
    }

    pub fn credited_objects(&self) -> impl Iterator<Item = (ObjectId, f64)> + '_ {
        self.credited.iter().map(|(&id, &v)| (id, v))
    }

    /// Sum of all partial credit paid so far.
    pub fn total_credit(&self) -> f64 {
        self.credited.values().sum()
    }

    /// Registers what is visible at the episode start; no reward is paid.
    pub fn observe_start(&mut self, detections: &[Detection]) {
        for det in detections {
            self.first_area.entry(det.object_id).or_insert(det.area);
        }
    }

    /// In-place form of [`step_reward`]. On error the ledger is untouched.
    pub fn apply(
        &mut self,
        spec: &RewardSpec,
        table: &ClosenessTable,
        target_class: &str,
        detections: &[Detection],
        terminal: Terminal,
    ) -> Result<f64, ShapingError> {
        if self.done {
            return Err(ShapingError::EpisodeAlreadyDone);
        }
        let mut next = None;
        let mut reward = spec.step_penalty;
        match spec.mode {
            RewardMode::Bin => {}
            RewardMode::Base => {
                for det in detections.iter().filter(|d| d.role == Role::Parent) {
                    if det.mean_depth <= spec.parent_threshold && self.credited(det.object_id) == 0.0 {
                        let v = partial_value(spec, table, target_class, det, spec.k)?;
                        reward += v;
                        next.get_or_insert_with(Vec::new).push((det.object_id, v));
                    }
                }
            }
            RewardMode::Depth | RewardMode::Area => {
                let mut areas = Vec::new();
                let mut credits = Vec::new();
                for det in detections.iter().filter(|d| d.role != Role::Distractor) {
                    let a1 = match self.first_area(det.object_id) {
                        Some(a) => a,
                        None => {
                            areas.push((det.object_id, det.area));
                            det.area
                        }
                    };
                    let kprime = match spec.mode {
                        RewardMode::Depth => k_depth(det.mean_depth, spec),
                        _ => k_area(a1 as f64, det.area as f64, spec)?,
                    };
                    let v = partial_value(spec, table, target_class, det, kprime)?;
                    let paid = self.credited(det.object_id);
                    if v > paid {
                        reward += v - paid;
                        credits.push((det.object_id, v));
                    }
                }
                for (id, a) in areas {
                    self.first_area.insert(id, a);
                }
                next = Some(credits);
            }
        }
        for (id, v) in next.into_iter().flatten() {
            self.credited.insert(id, v);
        }
        match terminal {
            Terminal::Continue => {}
            Terminal::Success => {
                reward += spec.r_t;
                self.done = true;
            }
            Terminal::Failure => {
                reward += spec.failure_reward;
                self.done = true;
            }
        }
        Ok(reward)
    }
}

/// Reward for one step plus the updated ledger.
pub fn step_reward(
    spec: &RewardSpec,
    table: &ClosenessTable,
    target_class: &str,
    detections: &[Detection],
    state: &ShapingState,
    terminal: Terminal,
) -> Result<(f64, ShapingState), ShapingError> {
    let mut next = state.clone();
    let r = next.apply(spec, table, target_class, detections, terminal)?;
    Ok((r, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::BBox;

    fn det(id: ObjectId, class: &str, role: Role, area: u64, depth: f64) -> Detection {
        Detection {
            object_id: id,
            class: class.into(),
            role,
            bbox: BBox::new(0, 0, 0, 0),
            area,
            mean_depth: depth,
        }
    }

    fn table() -> ClosenessTable {
        ClosenessTable::from_entries([("mug", "table", 0.5), ("mug", "sofa", 0.5)])
    }

    #[test]
    fn depth_scale_hand_values() {
        let s = RewardSpec::default();
        assert_eq!(k_depth(0.0, &s), 0.1);
        assert!((k_depth(2.0, &s) - 0.07).abs() < 1e-15);
        assert_eq!(k_depth(10.0, &s), 0.0);
    }

    #[test]
    fn area_scale_hand_values() {
        let s = RewardSpec::default();
        assert_eq!(k_area(64.0, 64.0, &s).unwrap(), 0.0);
        assert_eq!(k_area(16.0, 64.0, &s).unwrap(), 0.05);
        assert_eq!(k_area(64.0, 16.0, &s).unwrap(), 0.0);
        assert!(matches!(k_area(0.0, 16.0, &s), Err(ShapingError::DegenerateArea { .. })));
        assert!(k_area(4.0, -1.0, &s).is_err());
    }

    #[test]
    fn partial_value_cases() {
        let s = RewardSpec::default();
        let t = table();
        let p = det(1, "table", Role::Parent, 10, 1.0);
        assert_eq!(partial_value(&s, &t, "mug", &p, 0.1).unwrap(), 0.25);
        assert_eq!(partial_value(&s, &t, "mug", &p, 0.0).unwrap(), 0.0);
        let g = det(2, "mug", Role::Target, 10, 1.0);
        assert!((partial_value(&s, &t, "mug", &g, 0.07).unwrap() - 0.35).abs() < 1e-15);
        assert!(partial_value(&s, &t, "pen", &p, 0.1).is_err());
        let x = det(3, "plant", Role::Distractor, 10, 1.0);
        assert!(partial_value(&s, &t, "mug", &x, 0.1).is_err());
    }

    #[test]
    fn bin_step_is_the_penalty() {
        let s = RewardSpec::default();
        let (r, st) = step_reward(&s, &table(), "mug", &[], &ShapingState::new(), Terminal::Continue).unwrap();
        assert_eq!(r, -0.01);
        assert!(!st.is_done());
        let (r, st) = step_reward(&s, &table(), "mug", &[], &st, Terminal::Success).unwrap();
        assert_eq!(r, -0.01 + 5.0);
        assert!(st.is_done());
        assert_eq!(
            step_reward(&s, &table(), "mug", &[], &st, Terminal::Continue),
            Err(ShapingError::EpisodeAlreadyDone)
        );
    }

    #[test]
    fn base_pays_once_within_threshold() {
        let s = RewardSpec::with_mode(RewardMode::Base);
        let t = table();
        let far = [det(1, "table", Role::Parent, 10, 1.5)];
        let near = [det(1, "table", Role::Parent, 40, 0.8)];
        let st = ShapingState::new();
        let (r, st) = step_reward(&s, &t, "mug", &far, &st, Terminal::Continue).unwrap();
        assert_eq!(r, -0.01);
        let (r, st) = step_reward(&s, &t, "mug", &near, &st, Terminal::Continue).unwrap();
        assert_eq!(r, -0.01 + 0.25);
        let (r, _) = step_reward(&s, &t, "mug", &near, &st, Terminal::Continue).unwrap();
        assert_eq!(r, -0.01);
    }

    #[test]
    fn base_ignores_targets() {
        let s = RewardSpec::with_mode(RewardMode::Base);
        let seen = [det(2, "mug", Role::Target, 40, 0.5)];
        let (r, _) = step_reward(&s, &table(), "mug", &seen, &ShapingState::new(), Terminal::Continue).unwrap();
        assert_eq!(r, -0.01);
    }

    #[test]
    fn area_high_water_sequence() {
        let s = RewardSpec::with_mode(RewardMode::Area);
        let t = table();
        let mut st = ShapingState::new();
        let mut paid = Vec::new();
        for a in [16, 64, 32] {
            let r = st
                .apply(&s, &t, "mug", &[det(1, "table", Role::Parent, a, 2.0)], Terminal::Continue)
                .unwrap();
            paid.push(r - s.step_penalty);
        }
        assert!(paid[0].abs() < 1e-15);
        assert!((paid[1] - 0.125).abs() < 1e-15);
        assert!(paid[2].abs() < 1e-15);
        assert_eq!(st.first_area(1), Some(16));
        assert!((st.credited(1) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn depth_pays_increments_only() {
        let s = RewardSpec::with_mode(RewardMode::Depth);
        let t = table();
        let mut st = ShapingState::new();
        let seq = [4.0, 2.0, 3.0, 2.0, 1.0];
        let mut total = 0.0;
        for d in seq {
            total += st
                .apply(&s, &t, "mug", &[det(7, "mug", Role::Target, 9, d)], Terminal::Continue)
                .unwrap()
                - s.step_penalty;
        }
        // peak at d=1: 5 * 0.1 * 0.85
        assert!((total - 0.425).abs() < 1e-12);
        assert_eq!(st.first_area(7), Some(9));
    }

    #[test]
    fn start_observation_sets_first_area() {
        let s = RewardSpec::with_mode(RewardMode::Area);
        let mut st = ShapingState::new();
        st.observe_start(&[det(1, "table", Role::Parent, 16, 2.0)]);
        let r = st
            .apply(&s, &table(), "mug", &[det(1, "table", Role::Parent, 64, 1.0)], Terminal::Continue)
            .unwrap();
        assert!((r - s.step_penalty - 0.125).abs() < 1e-15);
    }

    #[test]
    fn failure_adds_failure_reward() {
        let s = RewardSpec { failure_reward: -1.0, ..RewardSpec::default() };
        let (r, st) = step_reward(&s, &table(), "mug", &[], &ShapingState::new(), Terminal::Failure).unwrap();
        assert_eq!(r, -1.01);
        assert!(st.is_done());
    }

    #[test]
    fn mode_parsing() {
        for m in RewardMode::ALL {
            assert_eq!(m.as_str().parse::<RewardMode>().unwrap(), m);
        }
        assert_eq!("bbox".parse::<RewardMode>().unwrap(), RewardMode::Area);
        assert!("dense".parse::<RewardMode>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(RewardSpec::default().validate().is_ok());
        assert!(RewardSpec { k: 0.0, ..RewardSpec::default() }.validate().is_err());
        assert!(RewardSpec { step_penalty: 0.0, ..RewardSpec::default() }.validate().is_err());
        assert!(RewardSpec { r_t: -1.0, ..RewardSpec::default() }.validate().is_err());
        assert!(RewardSpec { parent_threshold: 0.0, ..RewardSpec::default() }.validate().is_err());
    }
}
