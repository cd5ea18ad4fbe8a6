// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference implementations and random scene builders shared
//! by the integration suites. Written independently of the library code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tribranch::boxes::{Box7, Proposal};
use tribranch::ckps::KeypointMask;
use tribranch::cloud::{Point, PointCloud};
use tribranch::des::DesConfig;
use tribranch::gas::GasConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, half_extent: f32) -> PointCloud {
    let pts = (0..n)
        .map(|_| {
            Point::new(
                rng.gen_range(-half_extent..half_extent),
                rng.gen_range(-half_extent..half_extent),
                rng.gen_range(-2.5f32..1.5),
                rng.gen_range(0.0f32..1.0),
            )
        })
        .collect();
    PointCloud::new(pts)
}

/// Three views sharing a random subset of points (copied, reordered),
/// plus view-private points, so that keypoints exist but are not total.
pub fn related_views(rng: &mut ChaCha8Rng, n: usize, half_extent: f32) -> [PointCloud; 3] {
    let base = random_cloud(rng, n, half_extent);
    let mut views: [Vec<Point>; 3] = Default::default();
    for view in views.iter_mut() {
        for p in base.iter() {
            if rng.gen_bool(0.7) {
                let mut q = *p;
                if rng.gen_bool(0.1) {
                    q.x += rng.gen_range(-0.002f32..0.002);
                }
                view.push(q);
            }
        }
        for _ in 0..n / 5 {
            view.push(Point::new(
                rng.gen_range(-half_extent..half_extent),
                rng.gen_range(-half_extent..half_extent),
                rng.gen_range(-2.5f32..1.5),
                rng.gen_range(0.0f32..1.0),
            ));
        }
        // Fisher-Yates by hand so the oracle does not share the library's shuffle.
        for i in (1..view.len()).rev() {
            let j = rng.gen_range(0..=i);
            view.swap(i, j);
        }
    }
    views.map(PointCloud::new)
}

pub fn random_box(rng: &mut ChaCha8Rng, half_extent: f64) -> Box7 {
    Box7::new(
        rng.gen_range(-half_extent..half_extent),
        rng.gen_range(-half_extent..half_extent),
        rng.gen_range(-1.5..0.5),
        rng.gen_range(0.5..6.0),
        rng.gen_range(0.5..3.0),
        rng.gen_range(0.5..2.5),
        rng.gen_range(-3.2..3.2),
    )
}

// ---------------------------------------------------------------- DES

/// Ring of a planar distance by linear scan over ring outer radii.
pub fn ring_oracle(d: f64, cfg: &DesConfig) -> Option<usize> {
    let n_r = (cfg.tau_far / cfg.d_t).round() as usize;
    if d > cfg.tau_far {
        return None;
    }
    for j in 1..=n_r {
        if d <= j as f64 * cfg.d_t {
            return Some(j);
        }
    }
    Some(n_r)
}

pub fn ring_area_oracle(j: usize, cfg: &DesConfig) -> f64 {
    let outer = j as f64 * cfg.d_t;
    let inner = (j as f64 - 1.0) * cfg.d_t;
    cfg.mu * std::f64::consts::PI * (outer * outer - inner * inner)
}

pub fn planar(p: &Point) -> f64 {
    ((p.x as f64).powi(2) + (p.y as f64).powi(2)).sqrt()
}

/// Expected per-ring output size after DES (without the fixed-count step).
pub fn des_counts_oracle(cloud: &PointCloud, cfg: &DesConfig) -> (Vec<usize>, usize) {
    let n_r = (cfg.tau_far / cfg.d_t).round() as usize;
    let mut counts = vec![0usize; n_r];
    let mut band = vec![0usize; n_r];
    let mut outside = 0;
    for p in cloud.iter() {
        match ring_oracle(planar(p), cfg) {
            Some(j) => {
                counts[j - 1] += 1;
                let z = p.z as f64;
                if z >= cfg.tau_z_min && z <= cfg.tau_z_max {
                    band[j - 1] += 1;
                }
            }
            None => outside += 1,
        }
    }
    let expected = (0..n_r)
        .map(|k| {
            let n = counts[k];
            let rho = n as f64 / ring_area_oracle(k + 1, cfg);
            let frac = |s: f64| (s * n as f64 + 1e-9).floor() as usize;
            if rho < cfg.rho_s {
                if band[k] > 0 {
                    n + frac(cfg.s1)
                } else {
                    n
                }
            } else if rho < cfg.rho_m {
                n
            } else if rho < cfg.rho_l {
                n - frac(cfg.s2)
            } else {
                n - frac(cfg.s3)
            }
        })
        .collect();
    (expected, outside)
}

// ---------------------------------------------------------------- GAS

/// Keep flags by scanning every point against every other point in the
/// same cell.
pub fn gas_oracle(cloud: &PointCloud, cfg: &GasConfig) -> Vec<bool> {
    let nx = ((cfg.x_l - cfg.x_s) / cfg.x_t).round() as i64;
    let ny = ((cfg.y_l - cfg.y_s) / cfg.y_t).round() as i64;
    let cell = |p: &Point| -> Option<(i64, i64)> {
        let (x, y) = (p.x as f64, p.y as f64);
        if x < cfg.x_s || x > cfg.x_l || y < cfg.y_s || y > cfg.y_l {
            return None;
        }
        let mut ix = ((x - cfg.x_s) / cfg.x_t).floor() as i64;
        let mut iy = ((y - cfg.y_s) / cfg.y_t).floor() as i64;
        if ix == nx {
            ix -= 1;
        }
        if iy == ny {
            iy -= 1;
        }
        Some((ix, iy))
    };
    cloud
        .iter()
        .map(|p| match cell(p) {
            None => cfg.passthrough_outside,
            Some(c) => {
                let floor = cloud
                    .iter()
                    .filter(|q| cell(q) == Some(c))
                    .map(|q| q.z)
                    .fold(f32::INFINITY, f32::min);
                p.z as f64 > floor as f64 + cfg.tau_h
            }
        })
        .collect()
}

// ---------------------------------------------------------------- CKPS

pub fn voxel_oracle(p: &Point, size: f64, origin: [f64; 3]) -> [i64; 3] {
    let c = [p.x as f64, p.y as f64, p.z as f64];
    let mut k = [0i64; 3];
    for a in 0..3 {
        k[a] = ((c[a] - origin[a]) / size).floor() as i64;
    }
    k
}

fn close(a: &Point, b: &Point, tau: f64) -> bool {
    let da = [
        (a.x as f64 - b.x as f64).abs(),
        (a.y as f64 - b.y as f64).abs(),
        (a.z as f64 - b.z as f64).abs(),
        (a.r as f64 - b.r as f64).abs(),
    ];
    da.iter().cloned().fold(0.0, f64::max) < tau
}

/// Exhaustive keypoint selection: for every voxel occupied in all three
/// views (in key order), scan view-1 points by index and pair each with the
/// lowest-index matches of the other views.
pub fn ckps_oracle(views: [&PointCloud; 3], size: f64, origin: [f64; 3], tau: f64) -> Vec<[u32; 3]> {
    let keys: Vec<Vec<[i64; 3]>> = views
        .iter()
        .map(|c| c.iter().map(|p| voxel_oracle(p, size, origin)).collect())
        .collect();
    let mut shared: Vec<[i64; 3]> = keys[0]
        .iter()
        .filter(|k| keys[1].contains(k) && keys[2].contains(k))
        .cloned()
        .collect();
    shared.sort();
    shared.dedup();
    let mut out = Vec::new();
    for key in shared {
        'anchor: for i in 0..views[0].len() {
            if keys[0][i] != key {
                continue;
            }
            let a = &views[0].points[i];
            let mut found = [i as u32, 0, 0];
            for v in 1..3 {
                let m = (0..views[v].len()).find(|&j| keys[v][j] == key && close(&views[v].points[j], a, tau));
                match m {
                    Some(j) => found[v] = j as u32,
                    None => continue 'anchor,
                }
            }
            out.push(found);
            break;
        }
    }
    out
}

// ---------------------------------------------------------------- boxes

pub fn corners_oracle(b: &Box7) -> Vec<[f64; 2]> {
    let (s, c) = (b.yaw.sin(), b.yaw.cos());
    let mut pts = Vec::new();
    for (u, v) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
        let (lx, ly) = (u * b.l / 2.0, v * b.w / 2.0);
        pts.push([b.cx + c * lx - s * ly, b.cy + s * lx + c * ly]);
    }
    pts
}

fn edge_side(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Inside test against the corner hull (counter-clockwise polygon).
pub fn footprint_oracle(x: f64, y: f64, b: &Box7) -> bool {
    let poly = corners_oracle(b);
    (0..4).all(|i| edge_side(poly[i], poly[(i + 1) % 4], [x, y]) >= -1e-9)
}

pub fn point_in_box_oracle(p: &Point, b: &Box7) -> bool {
    let z = p.z as f64;
    z >= b.cz - b.h / 2.0 && z <= b.cz + b.h / 2.0 && footprint_oracle(p.x as f64, p.y as f64, b)
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a[0] * b[1] - b[0] * a[1];
    }
    s.abs() / 2.0
}

/// Clip `subject` by each edge of the convex counter-clockwise `clip`.
pub fn sutherland_hodgman(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        if input.is_empty() {
            break;
        }
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = edge_side(a, b, cur) >= 0.0;
            let prev_in = edge_side(a, b, prev) >= 0.0;
            let crossing = || {
                let (d1, d2) = (edge_side(a, b, prev), edge_side(a, b, cur));
                let t = d1 / (d1 - d2);
                [prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])]
            };
            if cur_in {
                if !prev_in {
                    output.push(crossing());
                }
                output.push(cur);
            } else if prev_in {
                output.push(crossing());
            }
        }
    }
    output
}

pub fn iou_oracle(a: &Box7, b: &Box7) -> f64 {
    let clipped = sutherland_hodgman(&corners_oracle(a), &corners_oracle(b));
    let inter = if clipped.len() < 3 { 0.0 } else { polygon_area(&clipped) };
    let union = a.l * a.w + b.l * b.w - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Quadratic greedy NMS: repeatedly take the best remaining candidate and
/// strike everything overlapping it.
pub fn nms_oracle(props: &[Proposal], thr: f64, max_keep: usize) -> Vec<usize> {
    let score = |p: &Proposal| 1.0 / (1.0 + (-p.logit).exp());
    let mut alive = vec![true; props.len()];
    let mut kept = Vec::new();
    while kept.len() < max_keep {
        let mut best: Option<usize> = None;
        for i in 0..props.len() {
            if !alive[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) if score(&props[i]) > score(&props[b]) => Some(i),
                keep => keep,
            };
        }
        let Some(b) = best else { break };
        kept.push(b);
        alive[b] = false;
        for i in 0..props.len() {
            if alive[i] && iou_oracle(&props[b].bbox, &props[i].bbox) > thr {
                alive[i] = false;
            }
        }
    }
    kept
}

/// Keypoint triples whose view-1 point lies in some box, as per-view index lists.
pub fn foreground_oracle(views: [&PointCloud; 3], mask: &KeypointMask, gt: &[Box7]) -> [Vec<usize>; 3] {
    let mut out: [Vec<usize>; 3] = Default::default();
    for t in &mask.triples {
        let anchor = &views[0].points[t[0] as usize];
        if gt.iter().any(|b| point_in_box_oracle(anchor, b)) {
            for v in 0..3 {
                out[v].push(t[v] as usize);
            }
        }
    }
    out
}
