//! Checks logged runs against the per-interval envelope, the jump inequality and
//! the horizon bound.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{horizon_bound, iss_envelope, HorizonParams, IntervalParams, TheoryError};
use crate::graph::{build_graph, lambda_bounds, InteractionGraph, NodeSet};
use crate::scenario::{NodeKind, RunLogs, ScenarioConfig};
use crate::Vec3;

pub const REPORT_CSV: &str = "bound_report.csv";
pub const SUMMARY_JSON: &str = "bound_summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyParams {
    /// Allowed envelope excess per second of step size, as a multiple of `w̄_k`.
    /// An explicit Euler step overshoots the continuous envelope by at most about `w̄·dt/2`.
    pub slack_factor: f64,
    /// Floating-point allowance relative to `max(1, ‖e0‖)`.
    pub abs_tol: f64,
}

impl Default for CertifyParams {
    fn default() -> Self {
        Self { slack_factor: 1.0, abs_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub k: usize,
    pub t_k: f64,
    pub lambda: Option<f64>,
    pub lambda_max: Option<f64>,
    pub w_bar: Option<f64>,
    pub e0: f64,
    pub samples: usize,
    pub measured_max: f64,
    /// Envelope value where the slack is smallest.
    pub bound_at_worst: Option<f64>,
    pub min_slack: Option<f64>,
    pub tolerance: f64,
    /// Edge set changed inside the interval.
    pub graph_changed: bool,
    /// `‖e(t_k⁺)‖ ≤ ‖e(t_k⁻)‖ + ‖Δz‖`; `None` when the edge set changed across the instant.
    pub jump_ok: Option<bool>,
    /// The envelope applies: actuated edges present and no graph change.
    pub asserted: bool,
    pub pass: bool,
}

/// Tracks one interval sample by sample.
#[derive(Debug, Clone)]
pub struct IntervalMonitor {
    row: IntervalRow,
    params: Option<IntervalParams>,
}

impl IntervalMonitor {
    /// `e0` is `‖e(t_k⁺)‖` under `graph`; `jump` is `(‖e⁻‖, ‖e⁺‖, ‖Δz‖, reinitialized)`.
    pub fn start(
        k: usize,
        t_k: f64,
        graph: &InteractionGraph,
        d_bar: f64,
        delta_t: f64,
        dt: f64,
        e0: f64,
        jump: Option<(f64, f64, f64, bool)>,
        cp: &CertifyParams,
    ) -> Self {
        let bounds = lambda_bounds(graph);
        let params = bounds.map(|(lambda, lmax)| IntervalParams {
            lambda,
            w_bar: lmax.sqrt() * d_bar,
            delta_t,
            e0_norm: e0,
            ..IntervalParams::default()
        });
        let scale = e0.max(1.0);
        let tolerance = cp.slack_factor * params.map_or(0.0, |p| p.w_bar) * dt + cp.abs_tol * scale;
        let jump_ok = jump.and_then(|(minus, plus, delta, reinit)| (!reinit).then_some(plus <= minus + delta + cp.abs_tol * scale));
        Self {
            row: IntervalRow {
                k,
                t_k,
                lambda: bounds.map(|b| b.0),
                lambda_max: bounds.map(|b| b.1),
                w_bar: params.map(|p| p.w_bar),
                e0,
                samples: 0,
                measured_max: 0.0,
                bound_at_worst: None,
                min_slack: None,
                tolerance,
                graph_changed: false,
                jump_ok,
                asserted: params.is_some(),
                pass: true,
            },
            params,
        }
    }

    pub fn sample(&mut self, t_rel: f64, e_norm: f64) {
        self.row.samples += 1;
        self.row.measured_max = self.row.measured_max.max(e_norm);
        if self.row.graph_changed {
            return;
        }
        if let Some(p) = &self.params {
            let bound = iss_envelope(p, t_rel.max(0.0)).unwrap_or(f64::INFINITY);
            let slack = bound - e_norm;
            if self.row.min_slack.is_none_or(|s| slack < s) {
                self.row.min_slack = Some(slack);
                self.row.bound_at_worst = Some(bound);
            }
        }
    }

    pub fn flag_graph_change(&mut self) {
        self.row.graph_changed = true;
        self.row.asserted = false;
    }

    pub fn row(&self) -> IntervalRow {
        let mut row = self.row.clone();
        let envelope_ok = !row.asserted || row.min_slack.is_none_or(|s| s >= -row.tolerance);
        row.pass = envelope_ok && row.jump_ok != Some(false);
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    /// Every interval certified, with no edge-set change anywhere in the run.
    pub applicable: bool,
    pub checks: usize,
    pub lambda_floor: Option<f64>,
    pub w_bar: f64,
    pub jump_bound: f64,
    pub alpha: Option<f64>,
    pub eta0: f64,
    pub eta_inf: Option<f64>,
    /// Post-check errors above the contraction closed form.
    pub eta_violations: usize,
    pub time_avg_error: f64,
    pub bound: Option<f64>,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub run: String,
    pub params: CertifyParams,
    pub rows: Vec<IntervalRow>,
    pub horizon: HorizonSummary,
    pub flagged: usize,
    pub asserted: usize,
    pub failed: usize,
    pub jump_failures: usize,
    pub pass: bool,
}

impl BoundReport {
    pub fn to_csv(&self) -> Result<Vec<u8>, TheoryError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| TheoryError::Structure(e.to_string()))?;
        }
        w.into_inner().map_err(|e| TheoryError::Structure(e.to_string()))
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            run: &'a str,
            params: &'a CertifyParams,
            intervals: usize,
            flagged: usize,
            asserted: usize,
            failed: usize,
            jump_failures: usize,
            worst_slack: Option<f64>,
            horizon: &'a HorizonSummary,
            pass: bool,
        }
        let worst_slack = self
            .rows
            .iter()
            .filter(|r| r.asserted)
            .filter_map(|r| r.min_slack.map(|s| s + r.tolerance))
            .reduce(f64::min);
        serde_json::to_string_pretty(&Summary {
            run: &self.run,
            params: &self.params,
            intervals: self.rows.len(),
            flagged: self.flagged,
            asserted: self.asserted,
            failed: self.failed,
            jump_failures: self.jump_failures,
            worst_slack,
            horizon: &self.horizon,
            pass: self.pass,
        })
        .expect("summary serializes")
    }

    pub fn write(&self, dir: &Path) -> Result<(), TheoryError> {
        std::fs::write(dir.join(REPORT_CSV), self.to_csv()?)?;
        std::fs::write(dir.join(SUMMARY_JSON), self.summary_json())?;
        Ok(())
    }

    pub fn verdict_line(&self) -> String {
        format!(
            "{}: {} intervals, {} asserted, {} flagged, {} failed, {} jump failures, horizon {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.rows.len(),
            self.asserted,
            self.flagged,
            self.failed,
            self.jump_failures,
            match (self.horizon.applicable, self.horizon.margin) {
                (true, Some(m)) => format!("margin {m:.4}"),
                _ => "not applicable".to_string(),
            }
        )
    }
}

fn positions_of(rows: &[crate::scenario::TrajectoryRow], na: usize, nb: usize) -> Result<Vec<Vec3>, TheoryError> {
    let mut pos = vec![None; na + nb];
    for r in rows {
        let slot = match r.kind {
            NodeKind::Drone if r.node_id < na => r.node_id,
            NodeKind::Target if r.node_id >= na && r.node_id < na + nb => r.node_id,
            _ => return Err(TheoryError::Structure(format!("unexpected node {} ({:?}) at t={}", r.node_id, r.kind, r.t))),
        };
        pos[slot] = Some(Vec3::new(r.x, r.y, r.z));
    }
    pos.into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| TheoryError::Structure(format!("node {i} missing from a logged instant"))))
        .collect()
}

/// Certifies in-memory logs of a run produced from `config`.
pub fn certify_logs(config: &ScenarioConfig, logs: &RunLogs, cp: &CertifyParams) -> Result<BoundReport, TheoryError> {
    let na = config.num_drones;
    let nb = config.targets.len();
    let nodes = NodeSet::new(na, nb, 3)?;
    let dt = config.dt;
    let delta = config.check_interval;
    let d_bar = config.disturbance.bound;
    let tol_t = 1e-9 * delta.max(1.0);

    for (k, s) in logs.supervision.iter().enumerate() {
        if s.k != k || (s.t - k as f64 * delta).abs() > tol_t {
            return Err(TheoryError::Structure(format!("supervision row {k} is at k={} t={}", s.k, s.t)));
        }
    }
    let snaps = logs.snapshots();
    if snaps.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(TheoryError::Structure("trajectory instants are not increasing".into()));
    }
    let change_times: Vec<f64> = logs.events_of("graph_change").map(|e| e.t).collect();

    let mut rows = Vec::with_capacity(logs.supervision.len());
    let mut cursor = 0;
    for (k, s) in logs.supervision.iter().enumerate() {
        let t_k = s.t;
        let t_next = t_k + delta;
        let last = k + 1 == logs.supervision.len();
        let graph = InteractionGraph::parse_edge_string(nodes, config.observation_radius, &s.edges)
            .ok_or_else(|| TheoryError::Structure(format!("unreadable edge list at k={k}")))?;
        while cursor < snaps.len() && snaps[cursor].0 < t_k - tol_t {
            cursor += 1;
        }
        let first = snaps
            .get(cursor)
            .filter(|(t, _)| (t - t_k).abs() <= tol_t)
            .ok_or_else(|| TheoryError::Structure(format!("no trajectory sample at check time {t_k}")))?;
        let e0 = first.1[0].edge_err_norm;
        if (e0 - s.e_plus).abs() > 1e-9 * e0.max(1.0) {
            return Err(TheoryError::Structure(format!("logs disagree on ‖e‖ at t={t_k}: {e0} vs {}", s.e_plus)));
        }
        let jump = (k > 0).then_some((s.e_minus, s.e_plus, s.jump_norm, s.reinitialized));
        let mut mon = IntervalMonitor::start(k, t_k, &graph, d_bar, delta, dt, e0, jump, cp);
        if change_times.iter().any(|&t| t > t_k + tol_t && t < t_next - tol_t) {
            mon.flag_graph_change();
        }
        let mut i = cursor;
        while i < snaps.len() {
            let (t, rows_at) = snaps[i];
            let inside = if last { t <= t_next + tol_t } else { t < t_next - tol_t };
            if !inside {
                break;
            }
            if i > cursor && !mon.row().graph_changed {
                let g = build_graph(&positions_of(rows_at, na, nb)?, nodes, config.observation_radius)?;
                if !g.same_edges(&graph) {
                    mon.flag_graph_change();
                }
            }
            mon.sample(t - t_k, rows_at[0].edge_err_norm);
            i += 1;
        }
        rows.push(mon.row());
    }

    let horizon = horizon_summary(&rows, logs, delta, dt, cp)?;
    let flagged = rows.iter().filter(|r| r.graph_changed).count();
    let asserted = rows.iter().filter(|r| r.asserted).count();
    let failed = rows.iter().filter(|r| !r.pass).count();
    let jump_failures = rows.iter().filter(|r| r.jump_ok == Some(false)).count();
    let horizon_ok = !horizon.applicable || (horizon.margin.is_some_and(|m| m >= -cp.abs_tol) && horizon.eta_violations == 0);
    Ok(BoundReport {
        run: config.name.clone(),
        params: *cp,
        pass: failed == 0 && horizon_ok,
        rows,
        horizon,
        flagged,
        asserted,
        failed,
        jump_failures,
    })
}

fn horizon_summary(rows: &[IntervalRow], logs: &RunLogs, delta: f64, dt: f64, cp: &CertifyParams) -> Result<HorizonSummary, TheoryError> {
    let snaps = logs.snapshots();
    let end = rows.last().map_or(0.0, |r| r.t_k + delta);
    let samples: Vec<f64> = snaps.iter().filter(|(t, _)| *t < end - 1e-9).map(|(_, r)| r[0].edge_err_norm).collect();
    let time_avg_error = if samples.is_empty() { 0.0 } else { samples.iter().sum::<f64>() / samples.len() as f64 };
    let lambda_floor = rows.iter().filter_map(|r| r.lambda).reduce(f64::min);
    let w_bar = rows.iter().filter_map(|r| r.w_bar).fold(0.0, f64::max);
    let jump_bound = logs.supervision.iter().skip(1).map(|s| s.jump_norm).fold(0.0, f64::max);
    let eta0 = rows.first().map_or(0.0, |r| r.e0);
    let applicable = !rows.is_empty()
        && rows.iter().all(|r| r.asserted)
        && logs.supervision.iter().skip(1).all(|s| !s.reinitialized);
    let mut summary = HorizonSummary {
        applicable,
        checks: rows.len(),
        lambda_floor,
        w_bar,
        jump_bound,
        alpha: None,
        eta0,
        eta_inf: None,
        eta_violations: 0,
        time_avg_error,
        bound: None,
        margin: None,
    };
    let Some(lam) = lambda_floor else { return Ok(summary) };
    let alpha = (-lam * delta).exp();
    let hp = HorizonParams {
        alpha,
        lambda_floor: lam,
        jump_bound,
        eps_correct: 0.0,
        eps_wrong: 0.0,
        markov_a: 0.5,
        markov_b: 0.5,
        p0: 0.5,
        k: rows.len() as u64,
        eta0,
    };
    let hb = horizon_bound(&hp, w_bar, delta)?;
    let eta_inf = hb.eta_inf;
    let mut ak = 1.0;
    for r in rows {
        let closed = ak * eta0 + (1.0 - ak) * eta_inf;
        let allowance = cp.slack_factor * w_bar * dt / (1.0 - alpha) + cp.abs_tol * r.e0.max(1.0);
        if r.e0 > closed + allowance {
            summary.eta_violations += 1;
        }
        ak *= alpha;
    }
    summary.alpha = Some(alpha);
    summary.eta_inf = Some(eta_inf);
    summary.bound = Some(hb.finite);
    summary.margin = Some(hb.finite + cp.slack_factor * w_bar * dt - time_avg_error);
    Ok(summary)
}

/// Reads a run directory, certifies it and writes the report next to the logs.
pub fn certify_run(dir: &Path, cp: &CertifyParams) -> Result<BoundReport, TheoryError> {
    let (config, logs) = RunLogs::read_dir(dir)?;
    let report = certify_logs(&config, &logs, cp)?;
    report.write(dir)?;
    Ok(report)
}
