//! Closeness distribution Pr(t|p) over parent classes, fitted from a corpus.
//!
//! For every co-occurring (target, parent) class pair a scene contributes the
//! kernel `1 / (1 + d)`, where `d` is the smallest cell-centre distance in
//! meters between any instance of the two classes. Scene contributions are
//! averaged over co-occurring scenes and normalised per target.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::scene::{Role, Scene};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosenessError {
    #[error("empty scene corpus")]
    EmptyCorpus,
    #[error("target class '{0}' never co-occurs with a parent")]
    NoParentCoverage(String),
    #[error("unknown target class '{0}'")]
    UnknownTarget(String),
    #[error("closeness csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClosenessTable {
    /// (target, parent) -> probability; only pairs in a target's support.
    entries: BTreeMap<(String, String), f64>,
    parent_classes: Vec<String>,
    target_classes: Vec<String>,
}

impl ClosenessTable {
    pub fn parent_classes(&self) -> &[String] {
        &self.parent_classes
    }

    pub fn target_classes(&self) -> &[String] {
        &self.target_classes
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.entries.iter().map(|((t, p), &v)| (t.as_str(), p.as_str(), v))
    }

    /// Pr(t|p); zero for parents outside the support of `target`.
    pub fn lookup(&self, target: &str, parent: &str) -> Result<f64, ClosenessError> {
        if self.target_classes.binary_search_by(|c| c.as_str().cmp(target)).is_err() {
            return Err(ClosenessError::UnknownTarget(target.to_string()));
        }
        Ok(self
            .entries
            .get(&(target.to_string(), parent.to_string()))
            .copied()
            .unwrap_or(0.0))
    }

    /// Builds a table from explicit entries, normalising nothing.
    pub fn from_entries<I, S>(entries: I) -> ClosenessTable
    where
        I: IntoIterator<Item = (S, S, f64)>,
        S: Into<String>,
    {
        let entries: BTreeMap<(String, String), f64> = entries
            .into_iter()
            .map(|(t, p, v)| ((t.into(), p.into()), v))
            .collect();
        let mut target_classes: Vec<String> = entries.keys().map(|(t, _)| t.clone()).collect();
        target_classes.dedup();
        let mut parent_classes: Vec<String> = entries.keys().map(|(_, p)| p.clone()).collect();
        parent_classes.sort();
        parent_classes.dedup();
        ClosenessTable { entries, parent_classes, target_classes }
    }

    /// `target,parent,prob` rows, lexicographically sorted, 9 decimals.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["target", "parent", "prob"]).expect("in-memory write");
        for ((t, p), v) in &self.entries {
            w.write_record([t.as_str(), p.as_str(), &format!("{v:.9}")])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<ClosenessTable, ClosenessError> {
        let err = |m: String| ClosenessError::Csv(m);
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| err(e.to_string()))?;
        if headers != vec!["target", "parent", "prob"] {
            return Err(err(format!("unexpected header {headers:?}")));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let prob: f64 = rec[2].parse().map_err(|_| err(format!("bad probability {:?}", &rec[2])))?;
            if !(0.0..=1.0).contains(&prob) {
                return Err(err(format!("probability {prob} outside [0, 1]")));
            }
            rows.push((rec[0].to_string(), rec[1].to_string(), prob));
        }
        let table = ClosenessTable::from_entries(rows);
        for t in &table.target_classes {
            let total: f64 = table.entries().filter(|e| e.0 == t).map(|e| e.2).sum();
            // 9-decimal rounding leaves up to half a nano per entry
            if (total - 1.0).abs() > 1e-6 {
                return Err(err(format!("probabilities for '{t}' sum to {total}")));
            }
        }
        Ok(table)
    }
}

/// Smallest cell-centre distance in meters between any instances of two classes.
fn min_class_distance(scene: &Scene, a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
    let mut best = f64::INFINITY;
    for &(ax, ay) in a {
        for &(bx, by) in b {
            let dx = ax as f64 - bx as f64;
            let dy = ay as f64 - by as f64;
            best = best.min((dx * dx + dy * dy).sqrt());
        }
    }
    best * scene.cell_size
}

fn class_cells(scene: &Scene, role: Role) -> BTreeMap<String, Vec<(usize, usize)>> {
    let mut out: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for o in scene.objects_with_role(role) {
        out.entry(o.class.clone()).or_default().extend(o.cells.iter().copied());
    }
    out
}

pub fn fit_closeness(scenes: &[Scene]) -> Result<ClosenessTable, ClosenessError> {
    if scenes.is_empty() {
        return Err(ClosenessError::EmptyCorpus);
    }
    let mut sums: BTreeMap<(String, String), (f64, u32)> = BTreeMap::new();
    let mut targets: Vec<String> = Vec::new();
    for scene in scenes {
        let tcells = class_cells(scene, Role::Target);
        let pcells = class_cells(scene, Role::Parent);
        for (t, tc) in &tcells {
            targets.push(t.clone());
            for (p, pc) in &pcells {
                let k = 1.0 / (1.0 + min_class_distance(scene, tc, pc));
                let slot = sums.entry((t.clone(), p.clone())).or_insert((0.0, 0));
                slot.0 += k;
                slot.1 += 1;
            }
        }
    }
    targets.sort();
    targets.dedup();

    let mut entries = Vec::new();
    for t in &targets {
        let weights: Vec<(&String, f64)> = sums
            .iter()
            .filter(|((tt, _), _)| tt == t)
            .map(|((_, p), &(s, n))| (p, s / n as f64))
            .collect();
        let total: f64 = weights.iter().map(|w| w.1).sum();
        if weights.is_empty() || !(total > 0.0) {
            return Err(ClosenessError::NoParentCoverage(t.clone()));
        }
        entries.extend(weights.into_iter().map(|(p, w)| (t.clone(), p.clone(), w / total)));
    }
    Ok(ClosenessTable::from_entries(entries))
}
