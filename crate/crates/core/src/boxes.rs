// SPDX-License-Identifier: Apache-2.0

//! Oriented 3D boxes, proposals and the line-oriented label format.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::Point;

/// 7-DoF box: center, size (length along heading, width, height) and yaw
/// around +z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Box7 {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let mut a = yaw.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

impl Box7 {
    pub fn new(cx: f64, cy: f64, cz: f64, l: f64, w: f64, h: f64, yaw: f64) -> Self {
        Self {
            cx,
            cy,
            cz,
            l,
            w,
            h,
            yaw: normalize_yaw(yaw),
        }
    }

    pub fn as_array(&self) -> [f64; 7] {
        [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6])
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite()) && self.l > 0.0 && self.w > 0.0 && self.h > 0.0
    }

    /// Grows every dimension by `2 * margin`.
    pub fn enlarged(&self, margin: f64) -> Self {
        Self {
            l: self.l + 2.0 * margin,
            w: self.w + 2.0 * margin,
            h: self.h + 2.0 * margin,
            ..*self
        }
    }

    pub fn bev_area(&self) -> f64 {
        self.l * self.w
    }

    /// Footprint corners, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(u, v)| {
            [self.cx + u * c - v * s, self.cy + u * s + v * c]
        })
    }

    /// Radius of the circle around the center enclosing the footprint.
    pub fn bev_radius(&self) -> f64 {
        0.5 * self.l.hypot(self.w)
    }

    /// xy-only containment, boundary inclusive.
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        u.abs() <= self.l / 2.0 && v.abs() <= self.w / 2.0
    }
}

/// True iff `p` lies inside `b`, faces included.
pub fn point_in_box(p: &Point, b: &Box7) -> bool {
    ((p.z as f64) - b.cz).abs() <= b.h / 2.0 && b.contains_xy(p.x as f64, p.y as f64)
}

/// A first-stage proposal: box plus raw (pre-sigmoid) score.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Proposal {
    #[serde(rename = "box")]
    pub bbox: Box7,
    pub logit: f64,
    pub class_id: u32,
}

impl Proposal {
    pub fn new(bbox: Box7, logit: f64, class_id: u32) -> Self {
        Self {
            bbox,
            logit,
            class_id,
        }
    }

    pub fn score(&self) -> f64 {
        sigmoid(self.logit)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("label line {line}: {message}")]
pub struct LabelError {
    pub line: usize,
    pub message: String,
}

/// One labeled box: `class cx cy cz l w h yaw [score]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: Box7,
    pub score: f64,
}

/// Parses a label file. Blank lines and `#` comments are skipped; a missing
/// score defaults to 1.
pub fn parse_labels(text: &str) -> Result<Vec<Label>, LabelError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| LabelError {
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 && fields.len() != 9 {
            return Err(err(format!("expected 8 or 9 fields, got {}", fields.len())));
        }
        let nums = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("invalid number {f:?}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let bbox = Box7::new(nums[0], nums[1], nums[2], nums[3], nums[4], nums[5], nums[6]);
        if !bbox.is_valid() {
            return Err(err("box sizes must be positive".into()));
        }
        out.push(Label {
            class: fields[0].to_string(),
            bbox,
            score: nums.get(7).copied().unwrap_or(1.0),
        });
    }
    Ok(out)
}

pub fn format_labels(labels: &[Label]) -> String {
    let mut s = String::new();
    for l in labels {
        let b = &l.bbox;
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            l.class, b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw, l.score
        );
    }
    s
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn inside_convex(p: [f64; 2], poly: &[[f64; 2]; 4]) -> bool {
    const EPS: f64 = 1e-9;
    (0..4).all(|i| cross(poly[i], poly[(i + 1) % 4], p) >= -EPS)
}

fn segment_intersection(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> Option<[f64; 2]> {
    let r = [b[0] - a[0], b[1] - a[1]];
    let s = [d[0] - c[0], d[1] - c[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom.abs() < 1e-12 {
        return None;
    }
    let q = [c[0] - a[0], c[1] - a[1]];
    let t = (q[0] * s[1] - q[1] * s[0]) / denom;
    let u = (q[0] * r[1] - q[1] * r[0]) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| [a[0] + t * r[0], a[1] + t * r[1]])
}

/// Area of the overlap of two box footprints.
///
/// Collects corners of each footprint inside the other plus all edge
/// crossings, orders them by angle around their centroid and applies the
/// shoelace formula.
pub fn bev_intersection_area(a: &Box7, b: &Box7) -> f64 {
    if (a.cx - b.cx).hypot(a.cy - b.cy) > a.bev_radius() + b.bev_radius() {
        return 0.0;
    }
    let pa = a.bev_corners();
    let pb = b.bev_corners();
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(16);
    pts.extend(pa.iter().filter(|p| inside_convex(**p, &pb)));
    pts.extend(pb.iter().filter(|p| inside_convex(**p, &pa)));
    for i in 0..4 {
        for j in 0..4 {
            if let Some(x) = segment_intersection(pa[i], pa[(i + 1) % 4], pb[j], pb[(j + 1) % 4]) {
                pts.push(x);
            }
        }
    }
    if pts.len() < 3 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    pts.sort_by(|p, q| {
        let ap = (p[1] - cy).atan2(p[0] - cx);
        let aq = (q[1] - cy).atan2(q[0] - cx);
        ap.total_cmp(&aq)
    });
    let mut area = 0.0;
    for i in 0..pts.len() {
        let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
        area += p[0] * q[1] - q[0] * p[1];
    }
    (area / 2.0).abs()
}

/// Rotated intersection-over-union of two footprints.
pub fn bev_iou(a: &Box7, b: &Box7) -> f64 {
    let inter = bev_intersection_area(a, b);
    let union = a.bev_area() + b.bev_area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
