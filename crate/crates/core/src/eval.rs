//! Success rate and SPL with optimal-length strata, aggregated across runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::EpisodeResult;
use crate::shaping::RewardMode;

/// Stratum lower bounds reported by default.
pub const STRATA: [u32; 2] = [1, 5];

pub const RESULTS_HEADER: &str = "run_seed,scene_id,target_class,mode,success,taken_steps,optimal_steps,cum_reward";
pub const REPORT_HEADER: &str = "mode,metric,l_min,mean,std,n_runs";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no episodes with optimal length >= {0}")]
    EmptyStratum(u32),
    #[error("episode with zero optimal length in stratum")]
    InvalidLength,
    #[error("missing results for reward mode '{0}'")]
    MissingMode(RewardMode),
    #[error("results csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Sr,
    Spl,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Sr, Metric::Spl];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Sr => "sr",
            Metric::Spl => "spl",
        }
    }
}

fn stratum(results: &[EpisodeResult], l_min: u32) -> Result<Vec<&EpisodeResult>, EvalError> {
    let kept: Vec<_> = results.iter().filter(|r| r.optimal_steps >= l_min).collect();
    if kept.is_empty() {
        return Err(EvalError::EmptyStratum(l_min));
    }
    Ok(kept)
}

/// Percentage of successful episodes among those with `optimal_steps >= l_min`.
pub fn success_rate(results: &[EpisodeResult], l_min: u32) -> Result<f64, EvalError> {
    let kept = stratum(results, l_min)?;
    let wins = kept.iter().filter(|r| r.success).count();
    Ok(100.0 * wins as f64 / kept.len() as f64)
}

/// `100/N * sum S_i * l_i / max(p_i, l_i)` over the stratum.
pub fn spl(results: &[EpisodeResult], l_min: u32) -> Result<f64, EvalError> {
    let kept = stratum(results, l_min)?;
    let mut total = 0.0;
    for r in &kept {
        if r.optimal_steps == 0 {
            return Err(EvalError::InvalidLength);
        }
        if r.success {
            let l = r.optimal_steps as f64;
            total += l / l.max(r.taken_steps as f64);
        }
    }
    Ok(100.0 * total / kept.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub reward_mode: RewardMode,
    pub l_min: u32,
    pub success_rate_pct: f64,
    pub spl_pct: f64,
    pub n_episodes: usize,
    pub run_seed: u64,
}

impl MetricReport {
    pub fn compute(
        results: &[EpisodeResult],
        mode: RewardMode,
        l_min: u32,
        run_seed: u64,
    ) -> Result<MetricReport, EvalError> {
        Ok(MetricReport {
            reward_mode: mode,
            l_min,
            success_rate_pct: success_rate(results, l_min)?,
            spl_pct: spl(results, l_min)?,
            n_episodes: results.iter().filter(|r| r.optimal_steps >= l_min).count(),
            run_seed,
        })
    }

    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Sr => self.success_rate_pct,
            Metric::Spl => self.spl_pct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n_runs: usize,
}

/// Mean and population std of one metric across runs. `None` for no reports.
pub fn aggregate(reports: &[MetricReport], metric: Metric) -> Option<AggregateCell> {
    aggregate_values(&reports.iter().map(|r| r.value(metric)).collect::<Vec<_>>())
}

pub fn aggregate_values(values: &[f64]) -> Option<AggregateCell> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(AggregateCell {
        mean,
        std: var.sqrt(),
        n_runs: values.len(),
    })
}

pub type CellKey = (RewardMode, Metric, u32);

/// Aligned text and CSV renderings of the mode x (metric, stratum) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub text: String,
    pub csv: String,
}

/// Rows are reward modes; columns are metric x stratum. The best mean in each
/// column is marked with `*`; ties are all marked.
pub fn compare_table(cells: &BTreeMap<CellKey, AggregateCell>) -> Result<ComparisonTable, EvalError> {
    for mode in RewardMode::ALL {
        if !cells.keys().any(|k| k.0 == mode) {
            return Err(EvalError::MissingMode(mode));
        }
    }
    let mut columns: Vec<(Metric, u32)> = cells.keys().map(|k| (k.1, k.2)).collect();
    columns.sort();
    columns.dedup();

    let best: Vec<f64> = columns
        .iter()
        .map(|&(m, l)| {
            RewardMode::ALL
                .iter()
                .filter_map(|&mode| cells.get(&(mode, m, l)).map(|c| c.mean))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let header: Vec<String> = columns
        .iter()
        .map(|(m, l)| format!("{} L>={l}", m.as_str().to_uppercase()))
        .collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut csv_rows: Vec<Vec<String>> = Vec::new();
    for mode in RewardMode::ALL {
        let mut row = vec![format!("r_{mode}")];
        let mut csv_row = vec![mode.to_string()];
        for (i, &(m, l)) in columns.iter().enumerate() {
            match cells.get(&(mode, m, l)) {
                Some(c) => {
                    let mark = if c.mean == best[i] { "*" } else { "" };
                    row.push(format!("{:.1} ({:.1}){mark}", c.mean, c.std));
                    csv_row.push(format!("{:.4}{mark}", c.mean));
                }
                None => {
                    row.push("-".into());
                    csv_row.push(String::new());
                }
            }
        }
        rows.push(row);
        csv_rows.push(csv_row);
    }

    let mut widths = vec!["mode".len()];
    widths.extend(header.iter().map(String::len));
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut text = String::new();
    let head: Vec<String> = std::iter::once("mode".to_string()).chain(header.iter().cloned()).collect();
    write_aligned(&mut text, &head, &widths);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    write_aligned(&mut text, &rule, &widths);
    for row in &rows {
        write_aligned(&mut text, row, &widths);
    }

    let mut csv = String::from("mode");
    for (m, l) in &columns {
        let _ = write!(csv, ",{}_l{l}", m.as_str());
    }
    csv.push('\n');
    for row in csv_rows {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    Ok(ComparisonTable { text, csv })
}

fn write_aligned(out: &mut String, cells: &[String], widths: &[usize]) {
    let line: Vec<String> = cells
        .iter()
        .zip(widths)
        .enumerate()
        .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
        .collect();
    out.push_str(line.join("  ").trim_end());
    out.push('\n');
}

/// One row of the results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run_seed: u64,
    pub mode: RewardMode,
    pub result: EpisodeResult,
}

pub fn results_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let e = &r.result;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.run_seed,
            e.scene_id,
            e.target_class,
            r.mode,
            u8::from(e.success),
            e.taken_steps,
            e.optimal_steps,
            e.cumulative_reward
        );
    }
    out
}

/// Parses a results file. Start poses are not stored and come back as (0, 0, N).
pub fn results_from_csv(text: &str) -> Result<Vec<ResultRow>, EvalError> {
    let err = |m: String| EvalError::Csv(m);
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULTS_HEADER => {}
        other => return Err(err(format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(err(format!("line {}: expected 8 fields", i + 2)));
        }
        let num = |s: &str| -> Result<u64, EvalError> {
            s.parse().map_err(|_| err(format!("line {}: bad number {s:?}", i + 2)))
        };
        let success = match f[4] {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("line {}: bad success flag {other:?}", i + 2))),
        };
        rows.push(ResultRow {
            run_seed: num(f[0])?,
            mode: f[3].parse().map_err(err)?,
            result: EpisodeResult {
                success,
                taken_steps: num(f[5])? as u32,
                optimal_steps: num(f[6])? as u32,
                cumulative_reward: f[7]
                    .parse()
                    .map_err(|_| err(format!("line {}: bad reward", i + 2)))?,
                scene_id: f[1].to_string(),
                target_class: f[2].to_string(),
                start: crate::scene::AgentPose::new(0, 0, crate::scene::Heading::N),
            },
        });
    }
    Ok(rows)
}

/// Per-run metric reports for every (mode, stratum) present in `rows`.
pub fn reports_from_rows(rows: &[ResultRow], strata: &[u32]) -> Result<Vec<MetricReport>, EvalError> {
    let mut groups: BTreeMap<(RewardMode, u64), Vec<EpisodeResult>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.mode, r.run_seed)).or_default().push(r.result.clone());
    }
    let mut out = Vec::new();
    for ((mode, seed), results) in &groups {
        for &l in strata {
            out.push(MetricReport::compute(results, *mode, l, *seed)?);
        }
    }
    Ok(out)
}

pub fn cells_from_reports(reports: &[MetricReport]) -> BTreeMap<CellKey, AggregateCell> {
    let mut grouped: BTreeMap<(RewardMode, u32), Vec<MetricReport>> = BTreeMap::new();
    for r in reports {
        grouped.entry((r.reward_mode, r.l_min)).or_default().push(r.clone());
    }
    let mut cells = BTreeMap::new();
    for ((mode, l), group) in grouped {
        for metric in Metric::ALL {
            if let Some(cell) = aggregate(&group, metric) {
                cells.insert((mode, metric, l), cell);
            }
        }
    }
    cells
}

pub fn report_to_csv(cells: &BTreeMap<CellKey, AggregateCell>) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for ((mode, metric, l), c) in cells {
        let _ = writeln!(out, "{mode},{},{l},{:.6},{:.6},{}", metric.as_str(), c.mean, c.std, c.n_runs);
    }
    out
}
