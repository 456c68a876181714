//! Mission metrics computed from run logs alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::logs::{NodeKind, RunLogs, TrajectoryRow};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResidual {
    pub start: f64,
    pub end: f64,
    pub command: String,
    /// Mean over logged instants of the RMS drone distance to reference.
    pub mean_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub search_start: Option<f64>,
    pub time_to_detection: Option<f64>,
    pub reassignments: usize,
    pub waypoints_issued: usize,
    pub waypoints_cleared: usize,
    /// `(t, cleared / issued)` after every waypoint event.
    pub cleared_fraction: Vec<(f64, f64)>,
    pub circle_radius_rms: Option<f64>,
    pub spacing_cv: Option<f64>,
    pub phase_residuals: Vec<PhaseResidual>,
    pub final_group_sizes: Vec<usize>,
    pub final_shapes: Vec<String>,
}

fn vec3(row: &TrajectoryRow) -> Vec3 {
    Vec3::new(row.x, row.y, row.z)
}

fn reference(row: &TrajectoryRow) -> Option<Vec3> {
    Some(Vec3::new(row.ref_x?, row.ref_y?, row.ref_z?))
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len().max(1) as f64).sqrt()
}

/// Coefficient of variation of nearest-neighbor distances.
pub fn spacing_cv(points: &[Vec3]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let nn: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| (p - q).norm()).fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mean = nn.iter().sum::<f64>() / nn.len() as f64;
    if mean <= 0.0 {
        return None;
    }
    let var = nn.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / nn.len() as f64;
    Some(var.sqrt() / mean)
}

/// RMS of `‖p - c‖ - R`, with `c` and `R` fitted to the reference circle.
pub fn circle_radius_error(positions: &[Vec3], references: &[Vec3]) -> Option<f64> {
    if references.is_empty() {
        return None;
    }
    let c = references.iter().sum::<Vec3>() / references.len() as f64;
    let r = references.iter().map(|q| (q - c).norm()).sum::<f64>() / references.len() as f64;
    Some(rms(&positions.iter().map(|p| (p - c).norm() - r).collect::<Vec<_>>()))
}

pub fn metrics(logs: &RunLogs) -> Metrics {
    let mut m = Metrics::default();
    let commands: Vec<(f64, String, String)> = logs
        .events_of("command")
        .map(|e| {
            let text = e.payload["text"].as_str().unwrap_or_default().to_string();
            let mode = e.payload["intent"]["mode"].as_str().unwrap_or_default().to_string();
            (e.t, text, mode)
        })
        .collect();
    m.search_start = commands.iter().find(|c| c.2 == "search").map(|c| c.0);
    let detection = logs.events_of("detection").next().map(|e| e.t);
    m.time_to_detection = detection.map(|t| t - m.search_start.unwrap_or(0.0));

    let mut per_drone: BTreeMap<u64, usize> = BTreeMap::new();
    for e in &logs.events {
        match e.kind.as_str() {
            "waypoint" => {
                m.waypoints_issued += 1;
                if detection.is_none_or(|d| e.t < d) {
                    *per_drone.entry(e.payload["drone"].as_u64().unwrap_or(0)).or_default() += 1;
                }
            }
            "cleared" => m.waypoints_cleared += 1,
            _ => continue,
        }
        m.cleared_fraction.push((e.t, m.waypoints_cleared as f64 / m.waypoints_issued.max(1) as f64));
    }
    m.reassignments = per_drone.values().map(|c| c.saturating_sub(1)).sum();

    let snaps = logs.snapshots();
    if let (Some(last), Some(regroup)) = (snaps.last(), logs.events_of("reground").last()) {
        let drones: BTreeMap<usize, &TrajectoryRow> =
            last.1.iter().filter(|r| r.kind == NodeKind::Drone).map(|r| (r.node_id, r)).collect();
        let mut circle_err = Vec::new();
        let mut cvs = Vec::new();
        for g in regroup.payload["groups"].as_array().into_iter().flatten() {
            let shape = g["shape"].as_str().unwrap_or_default().to_string();
            let members: Vec<usize> =
                g["members"].as_array().into_iter().flatten().filter_map(|v| v.as_u64()).map(|v| v as usize).collect();
            let rows: Vec<&TrajectoryRow> = members.iter().filter_map(|i| drones.get(i).copied()).collect();
            let pos: Vec<Vec3> = rows.iter().map(|r| vec3(r)).collect();
            let refs: Vec<Vec3> = rows.iter().filter_map(|r| reference(r)).collect();
            if shape == "circle" {
                if let Some(e) = circle_radius_error(&pos, &refs) {
                    circle_err.push((e, pos.len()));
                }
            }
            if let Some(cv) = spacing_cv(&pos) {
                cvs.push(cv);
            }
            m.final_group_sizes.push(members.len());
            m.final_shapes.push(shape);
        }
        if !circle_err.is_empty() {
            let n: usize = circle_err.iter().map(|c| c.1).sum();
            m.circle_radius_rms = Some((circle_err.iter().map(|(e, k)| e * e * *k as f64).sum::<f64>() / n.max(1) as f64).sqrt());
        }
        if !cvs.is_empty() {
            m.spacing_cv = Some(cvs.iter().sum::<f64>() / cvs.len() as f64);
        }
    }

    let end = snaps.last().map_or(0.0, |s| s.0);
    for (k, (start, text, _)) in commands.iter().enumerate() {
        let stop = commands.get(k + 1).map_or(f64::INFINITY, |c| c.0);
        let per_instant: Vec<f64> = snaps
            .iter()
            .filter(|(t, _)| *t >= *start && *t < stop)
            .map(|(_, rows)| {
                rms(&rows
                    .iter()
                    .filter_map(|r| reference(r).map(|q| (vec3(r) - q).norm()))
                    .collect::<Vec<_>>())
            })
            .collect();
        if !per_instant.is_empty() {
            m.phase_residuals.push(PhaseResidual {
                start: *start,
                end: stop.min(end),
                command: text.clone(),
                mean_rms: per_instant.iter().sum::<f64>() / per_instant.len() as f64,
            });
        }
    }
    m
}
