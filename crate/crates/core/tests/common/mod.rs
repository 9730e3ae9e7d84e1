//! Independent reference implementations used by the integration tests.
//! None of these call into the code paths they check.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use objnav_core::agent::EpisodeResult;
use objnav_core::scene::{AgentPose, Cell, Heading, Role, Scene};
use objnav_core::sensor::Camera;

/// One object as seen by the brute-force renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleBox {
    pub object_id: u32,
    pub col_min: usize,
    pub row_min: usize,
    pub col_max: usize,
    pub row_max: usize,
    pub area: u64,
    pub mean_depth: f64,
}

fn heading_vector(h: Heading) -> (f64, f64) {
    let angle: f64 = match h {
        Heading::E => 0.0,
        Heading::S => 90.0,
        Heading::W => 180.0,
        Heading::N => 270.0,
    };
    let (s, c) = angle.to_radians().sin_cos();
    (c.round(), s.round())
}

/// Ray/box entry parameter (slab method), if the ray enters the cell ahead.
fn slab_entry(origin: (f64, f64), dir: (f64, f64), cell: (usize, usize)) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (o, d, lo) in [(origin.0, dir.0, cell.0 as f64), (origin.1, dir.1, cell.1 as f64)] {
        let hi = lo + 1.0;
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let a = (lo - o) / d;
            let b = (hi - o) / d;
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

/// Per-pixel renderer: every pixel's column ray is tested against every
/// blocking cell of every object and every wall.
pub fn brute_render(scene: &Scene, pose: AgentPose, cam: &Camera) -> (Vec<f64>, Vec<OracleBox>) {
    let (cols, rows) = (cam.columns, cam.rows);
    let origin = (pose.x as f64 + 0.5, pose.y as f64 + 0.5);
    let (fx, fy) = heading_vector(pose.heading);
    // image-plane direction: 90 degrees clockwise from forward (y down)
    let (px, py) = (-fy, fx);
    let half = (cam.horizontal_fov / 2.0).to_radians().tan();
    let focal = rows as f64 / 2.0 / half;

    let mut walls = Vec::new();
    for y in 0..scene.height {
        for x in 0..scene.width {
            if scene.cell(x, y) == Cell::Wall {
                walls.push((x, y));
            }
        }
    }

    let mut depth = vec![0.0; rows * cols];
    let mut owner: Vec<Option<u32>> = vec![None; rows * cols];
    for col in 0..cols {
        let u = (2 * col + 1) as f64 / cols as f64 - 1.0;
        let dir = (fx + px * half * u, fy + py * half * u);
        let wall_t = walls
            .iter()
            .filter_map(|&c| slab_entry(origin, dir, c))
            .fold(f64::INFINITY, f64::min);
        let object_t: Vec<(u32, f64, f64)> = scene
            .objects
            .iter()
            .filter_map(|o| {
                let t = o
                    .cells
                    .iter()
                    .filter_map(|&c| slab_entry(origin, dir, c))
                    .fold(f64::INFINITY, f64::min);
                t.is_finite().then_some((o.object_id, t, o.physical_height))
            })
            .collect();
        let nearest = object_t.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
        let background = (wall_t * scene.cell_size).min(cam.max_range);
        for row in 0..rows {
            let i = row * cols + col;
            depth[i] = background;
            for &(id, t, height) in &object_t {
                let d = t * scene.cell_size;
                if t != nearest || t >= wall_t || d > cam.max_range {
                    continue;
                }
                let h = ((height * focal / d).round() as usize).clamp(1, rows);
                let top = (rows - h) / 2;
                if row >= top && row < top + h {
                    depth[i] = d;
                    owner[i] = Some(id);
                }
            }
        }
    }

    let mut boxes: BTreeMap<u32, (usize, usize, usize, usize)> = BTreeMap::new();
    for row in 0..rows {
        for col in 0..cols {
            if let Some(id) = owner[row * cols + col] {
                let b = boxes.entry(id).or_insert((col, row, col, row));
                b.0 = b.0.min(col);
                b.1 = b.1.min(row);
                b.2 = b.2.max(col);
                b.3 = b.3.max(row);
            }
        }
    }
    let out = boxes
        .into_iter()
        .map(|(id, (c0, r0, c1, r1))| {
            // column-major accumulation, unlike the renderer
            let mut sum = 0.0;
            let mut n = 0u64;
            for col in c0..=c1 {
                for row in r0..=r1 {
                    sum += depth[row * cols + col];
                    n += 1;
                }
            }
            OracleBox {
                object_id: id,
                col_min: c0,
                row_min: r0,
                col_max: c1,
                row_max: r1,
                area: n,
                mean_depth: sum / n as f64,
            }
        })
        .collect();
    (depth, out)
}

/// Success predicate evaluated on the brute-force renderer.
pub fn brute_success(scene: &Scene, pose: AgentPose, cam: &Camera, target: &str, d_success: f64) -> bool {
    let (_, boxes) = brute_render(scene, pose, cam);
    boxes.iter().any(|b| {
        let o = &scene.objects[b.object_id as usize];
        o.class == target && b.mean_depth <= d_success
    })
}

/// All goal poses of a scene for a target class, by brute-force rendering.
pub fn brute_goals(scene: &Scene, cam: &Camera, target: &str, d_success: f64) -> Vec<bool> {
    let mut goals = vec![false; scene.width * scene.height * 4];
    for y in 0..scene.height {
        for x in 0..scene.width {
            if scene.cell(x, y) != Cell::Free {
                continue;
            }
            for (hi, h) in [Heading::N, Heading::E, Heading::S, Heading::W].into_iter().enumerate() {
                goals[(y * scene.width + x) * 4 + hi] =
                    brute_success(scene, AgentPose::new(x, y, h), cam, target, d_success);
            }
        }
    }
    goals
}

/// Dijkstra over an explicitly built unit-weight graph of (x, y, heading).
pub fn dijkstra_path_length(scene: &Scene, goals: &[bool], start: AgentPose) -> Option<u32> {
    let w = scene.width;
    let idx = |x: usize, y: usize, h: usize| (y * w + x) * 4 + h;
    let dirs: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for y in 0..scene.height {
        for x in 0..w {
            if scene.cell(x, y) != Cell::Free {
                continue;
            }
            for h in 0..4 {
                let mut out = vec![idx(x, y, (h + 1) % 4), idx(x, y, (h + 3) % 4)];
                let (dx, dy) = dirs[h];
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < scene.height
                    && scene.cell(nx as usize, ny as usize) == Cell::Free
                {
                    out.push(idx(nx as usize, ny as usize, h));
                }
                adj.insert(idx(x, y, h), out);
            }
        }
    }
    let h0 = match start.heading {
        Heading::N => 0,
        Heading::E => 1,
        Heading::S => 2,
        Heading::W => 3,
    };
    let s = idx(start.x, start.y, h0);
    let mut dist: HashMap<usize, u32> = HashMap::from([(s, 0)]);
    let mut heap = BinaryHeap::from([Reverse((0u32, s))]);
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist.get(&u).is_some_and(|&best| d > best) {
            continue;
        }
        if goals[u] {
            return Some(d);
        }
        for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            let nd = d + 1;
            if dist.get(&v).map_or(true, |&old| nd < old) {
                dist.insert(v, nd);
                heap.push(Reverse((nd, v)));
            }
        }
    }
    None
}

/// Closeness table by exhaustive instance-pair enumeration.
pub fn exhaustive_closeness(scenes: &[Scene]) -> BTreeMap<(String, String), f64> {
    let mut acc: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for scene in scenes {
        let mut best: BTreeMap<(String, String), f64> = BTreeMap::new();
        for t in scene.objects.iter().filter(|o| o.role == Role::Target) {
            for p in scene.objects.iter().filter(|o| o.role == Role::Parent) {
                for &(tx, ty) in &t.cells {
                    for &(px, py) in &p.cells {
                        let d = ((tx as f64 - px as f64).powi(2) + (ty as f64 - py as f64).powi(2)).sqrt()
                            * scene.cell_size;
                        let e = best.entry((t.class.clone(), p.class.clone())).or_insert(f64::INFINITY);
                        *e = e.min(d);
                    }
                }
            }
        }
        for (k, d) in best {
            acc.entry(k).or_default().push(1.0 / (1.0 + d));
        }
    }
    let weights: BTreeMap<(String, String), f64> = acc
        .into_iter()
        .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for ((t, _), w) in &weights {
        *totals.entry(t.clone()).or_default() += w;
    }
    weights
        .into_iter()
        .map(|((t, p), w)| {
            let z = totals[&t];
            ((t, p), w / z)
        })
        .collect()
}

pub fn brute_sr(results: &[EpisodeResult], l_min: u32) -> Option<f64> {
    let mut n = 0;
    let mut s = 0;
    for r in results {
        if r.optimal_steps >= l_min {
            n += 1;
            if r.success {
                s += 1;
            }
        }
    }
    (n > 0).then(|| s as f64 * 100.0 / n as f64)
}

pub fn brute_spl(results: &[EpisodeResult], l_min: u32) -> Option<f64> {
    let kept: Vec<&EpisodeResult> = results.iter().filter(|r| r.optimal_steps >= l_min).collect();
    if kept.is_empty() {
        return None;
    }
    let mut acc = 0.0;
    for r in &kept {
        let s = if r.success { 1.0 } else { 0.0 };
        let l = r.optimal_steps as f64;
        let p = r.taken_steps as f64;
        acc += s * l / if p > l { p } else { l };
    }
    Some(acc / kept.len() as f64 * 100.0)
}
