// SPDX-License-Identifier: Apache-2.0

//! Synthetic labeled LiDAR-like frames for testing and demos.
//!
//! A frame is a flat ground plane plus background clutter, both with an
//! inverse-square areal density falloff from the sensor, and 5-15 labeled
//! objects standing on the ground whose point counts fall off the same way.
//! Only the forward half-plane (`x >= 0`) is populated, as with a front
//! camera-aligned crop.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::boxes::{format_labels, Box7, Label};
use crate::cloud::{write_frame, Point, PointCloud};
use crate::seed::SampleSeed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub ground_z: f64,
    /// Half-width of uniform noise on ground heights (m).
    pub ground_noise: f64,
    /// Ground density is `ground_k / d^2` points per square meter.
    pub ground_k: f64,
    /// Clutter density is `clutter_k / d^2`, heights above the ground.
    pub clutter_k: f64,
    /// Object points: `object_k * (l * h) / d^2`, clamped.
    pub object_k: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub min_objects: usize,
    pub max_objects: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            ground_z: -1.7,
            ground_noise: 0.03,
            ground_k: 1200.0,
            clutter_k: 800.0,
            object_k: 25000.0,
            r_min: 2.0,
            r_max: 70.0,
            min_objects: 5,
            max_objects: 15,
        }
    }
}

const CLASSES: [(&str, f64, f64, f64); 3] = [
    ("Car", 3.9, 1.6, 1.56),
    ("Pedestrian", 0.8, 0.6, 1.73),
    ("Cyclist", 1.76, 0.6, 1.73),
];

/// Radius with density proportional to `1/r` on `[r0, r1]` (log-uniform),
/// which is an areal density proportional to `1/r^2`.
fn falloff_radius(rng: &mut ChaCha20Rng, r0: f64, r1: f64) -> f64 {
    r0 * (r1 / r0).powf(rng.gen::<f64>())
}

fn forward_angle(rng: &mut ChaCha20Rng) -> f64 {
    rng.gen_range(-PI / 2.0..PI / 2.0)
}

fn place_objects(rng: &mut ChaCha20Rng, p: &SceneParams) -> Vec<Label> {
    let n = rng.gen_range(p.min_objects..=p.max_objects);
    let mut labels: Vec<Label> = Vec::with_capacity(n);
    let mut attempts = 0;
    while labels.len() < n && attempts < 1000 {
        attempts += 1;
        let (class, l, w, h) = CLASSES[match rng.gen_range(0..10) {
            0..=5 => 0,
            6..=7 => 1,
            _ => 2,
        }];
        let l = l * rng.gen_range(0.9..1.1);
        let w = w * rng.gen_range(0.9..1.1);
        let h = h * rng.gen_range(0.95..1.05);
        let d = rng.gen_range(5.0..60.0);
        let a = rng.gen_range(-1.2..1.2);
        let (cx, cy) = (d * f64::cos(a), d * f64::sin(a));
        if cx < 1.0 || cy.abs() > 34.0 {
            continue;
        }
        let bbox = Box7::new(cx, cy, p.ground_z + h / 2.0, l, w, h, rng.gen_range(-PI..PI));
        let clear = labels.iter().all(|o| {
            (o.bbox.cx - cx).hypot(o.bbox.cy - cy) > o.bbox.bev_radius() + bbox.bev_radius() + 0.5
        });
        if clear {
            labels.push(Label {
                class: class.to_string(),
                bbox,
                score: 1.0,
            });
        }
    }
    labels
}

fn in_any_footprint(x: f64, y: f64, labels: &[Label]) -> bool {
    labels.iter().any(|l| l.bbox.contains_xy(x, y))
}

/// Generates frame `index` of a corpus; frames are independent and
/// reproducible from `(seed, index)`.
pub fn generate_frame(seed: SampleSeed, index: usize, p: &SceneParams) -> (PointCloud, Vec<Label>) {
    let mut rng = seed.rng(&format!("synthetic-frame:{index}"));
    let labels = place_objects(&mut rng, p);
    let mut points = Vec::new();
    let log_span = (p.r_max / p.r_min).ln();

    // Expected count over a half annulus: k * pi * ln(r_max / r_min).
    let n_ground = (p.ground_k * PI * log_span) as usize;
    while points.len() < n_ground {
        let r = falloff_radius(&mut rng, p.r_min, p.r_max);
        let a = forward_angle(&mut rng);
        let (x, y) = (r * a.cos(), r * a.sin());
        if in_any_footprint(x, y, &labels) {
            continue;
        }
        let z = p.ground_z + rng.gen_range(-p.ground_noise..=p.ground_noise);
        points.push(Point::new(x as f32, y as f32, z as f32, rng.gen_range(0.0..0.3)));
    }

    let n_clutter = (p.clutter_k * PI * log_span) as usize;
    let mut placed = 0;
    while placed < n_clutter {
        let r = falloff_radius(&mut rng, p.r_min, p.r_max);
        let a = forward_angle(&mut rng);
        let (x, y) = (r * a.cos(), r * a.sin());
        if in_any_footprint(x, y, &labels) {
            continue;
        }
        let z = p.ground_z + rng.gen_range(0.3..2.8);
        points.push(Point::new(x as f32, y as f32, z as f32, rng.gen_range(0.0..1.0)));
        placed += 1;
    }

    for label in &labels {
        let b = label.bbox;
        let d = b.cx.hypot(b.cy).max(1.0);
        let n = ((p.object_k * b.l * b.h / (d * d)) as usize).clamp(8, 4000);
        let (s, c) = b.yaw.sin_cos();
        for _ in 0..n {
            let u = rng.gen_range(-0.5..0.5) * b.l;
            let v = rng.gen_range(-0.5..0.5) * b.w;
            let w = rng.gen_range(-0.5..0.5) * b.h;
            let x = b.cx + u * c - v * s;
            let y = b.cy + u * s + v * c;
            points.push(Point::new(x as f32, y as f32, (b.cz + w) as f32, rng.gen_range(0.2..1.0)));
        }
    }

    (PointCloud::new(points).with_frame_id(format!("{index:06}")), labels)
}

pub fn generate_corpus(seed: SampleSeed, frames: usize, p: &SceneParams) -> Vec<(PointCloud, Vec<Label>)> {
    (0..frames).map(|i| generate_frame(seed, i, p)).collect()
}

/// Writes `<id>.bin` frames with `<id>.txt` labels into `dir`.
pub fn write_corpus(
    dir: &Path,
    seed: SampleSeed,
    frames: usize,
    p: &SceneParams,
) -> std::io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut ids = Vec::with_capacity(frames);
    for i in 0..frames {
        let (cloud, labels) = generate_frame(seed, i, p);
        std::fs::write(dir.join(format!("{}.bin", cloud.frame_id)), write_frame(&cloud))?;
        std::fs::write(dir.join(format!("{}.txt", cloud.frame_id)), format_labels(&labels))?;
        ids.push(cloud.frame_id);
    }
    Ok(ids)
}
