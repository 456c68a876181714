use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::intent::Shape;
use super::SupervisionError;
use crate::Vec3;

/// Offsets of `N` slots relative to the formation center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationTemplate {
    pub shape: Option<Shape>,
    pub offsets: Vec<Vec3>,
}

impl FormationTemplate {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        mean(&self.offsets)
    }

    /// Smallest distance between two slots; infinite for a single slot.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.offsets.iter().enumerate() {
            for b in &self.offsets[i + 1..] {
                best = best.min((a - b).norm());
            }
        }
        best
    }

    /// Distance from each slot to its nearest other slot.
    pub fn nearest_neighbor_distances(&self) -> Vec<f64> {
        self.offsets
            .iter()
            .enumerate()
            .map(|(i, a)| {
                self.offsets
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, b)| (a - b).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }
}

pub(crate) fn mean(points: &[Vec3]) -> Vec3 {
    if points.is_empty() {
        return Vec3::zeros();
    }
    points.iter().sum::<Vec3>() / points.len() as f64
}

fn centered_xy(mut pts: Vec<Vec3>) -> Vec<Vec3> {
    let c = mean(&pts);
    for p in &mut pts {
        p.x -= c.x;
        p.y -= c.y;
    }
    pts
}

/// Deterministic slot geometry for `count` drones.
pub fn formation_offsets(shape: Shape, count: usize, spacing: f64, height: f64) -> Result<FormationTemplate, SupervisionError> {
    if count == 0 {
        return Err(SupervisionError::EmptyFormation);
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(SupervisionError::InvalidIntent(format!("spacing must be positive, got {spacing}")));
    }
    let s = spacing;
    let n = count;
    let flat = |x: f64, y: f64| Vec3::new(x, y, height);
    let offsets = match shape {
        Shape::Grid => {
            let cols = (1..=n).find(|c| c * c >= n).unwrap_or(1);
            centered_xy((0..n).map(|k| flat((k % cols) as f64 * s, (k / cols) as f64 * s)).collect())
        }
        Shape::Line => (0..n).map(|k| flat((k as f64 - (n as f64 - 1.0) / 2.0) * s, 0.0)).collect(),
        Shape::Circle => {
            if n == 1 {
                vec![flat(0.0, 0.0)]
            } else {
                let radius = s / (2.0 * (PI / n as f64).sin());
                (0..n)
                    .map(|k| {
                        let a = TAU * k as f64 / n as f64;
                        flat(radius * a.cos(), radius * a.sin())
                    })
                    .collect()
            }
        }
        Shape::Square => {
            if n == 1 {
                vec![flat(0.0, 0.0)]
            } else {
                // perimeter of length n*s walked counter-clockwise from the lower-left corner
                let side = n as f64 * s / 4.0;
                let h = side / 2.0;
                (0..n)
                    .map(|k| {
                        let d = k as f64 * s;
                        let edge = ((d / side).floor() as usize).min(3);
                        let t = d - edge as f64 * side;
                        match edge {
                            0 => flat(-h + t, -h),
                            1 => flat(h, -h + t),
                            2 => flat(h - t, h),
                            _ => flat(-h, h - t),
                        }
                    })
                    .collect()
            }
        }
        Shape::Cross => {
            let arms = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
            (0..n)
                .map(|k| {
                    if k == 0 {
                        flat(0.0, 0.0)
                    } else {
                        let (ax, ay) = arms[(k - 1) % 4];
                        let r = ((k - 1) / 4 + 1) as f64 * s;
                        flat(ax * r, ay * r)
                    }
                })
                .collect()
        }
        Shape::Cube => {
            let side = (1..=n).find(|c| c * c * c >= n).unwrap_or(1);
            let pts: Vec<Vec3> = (0..n)
                .map(|k| Vec3::new((k % side) as f64 * s, ((k / side) % side) as f64 * s, (k / (side * side)) as f64 * s))
                .collect();
            let c = mean(&pts);
            pts.into_iter().map(|p| p - c + Vec3::new(0.0, 0.0, height)).collect()
        }
        Shape::Spiral => {
            // Archimedean spiral r = s + b*theta with one spacing between turns
            let b = s / TAU;
            let mut theta: f64 = 0.0;
            let mut pts = Vec::with_capacity(n);
            for _ in 0..n {
                let r = s + b * theta;
                pts.push(flat(r * theta.cos(), r * theta.sin()));
                theta += s / (r * r + b * b).sqrt();
            }
            pts
        }
    };
    Ok(FormationTemplate { shape: Some(shape), offsets })
}
