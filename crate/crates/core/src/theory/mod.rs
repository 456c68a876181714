//! Closed-form stability and horizon bounds, with harnesses that check them
//! against simulated trajectories.

pub mod certify;
pub mod fixtures;
pub mod markov;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use certify::{certify_logs, certify_run, BoundReport, CertifyParams, HorizonSummary, IntervalMonitor, IntervalRow};
pub use markov::MarkovChain;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate chain: {0}")]
    Degenerate(String),
    #[error("bound not applicable: {0}")]
    Inapplicable(String),
    #[error("malformed run logs: {0}")]
    Structure(String),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
}

/// Per-interval constants for the single-interval envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalParams {
    pub lambda: f64,
    pub w_bar: f64,
    pub delta_t: f64,
    pub e0_norm: f64,
    pub eps_z: f64,
    pub delta_z: f64,
    pub nu_bar: f64,
    pub v_r_bar: f64,
    pub d_a_bar: f64,
    pub v_b_bar: f64,
}

fn positive(name: &str, v: f64) -> Result<(), TheoryError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(TheoryError::Parameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), TheoryError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(TheoryError::Parameter(format!("{name} must be non-negative and finite, got {v}")))
    }
}

impl IntervalParams {
    pub fn validate(&self) -> Result<(), TheoryError> {
        positive("lambda", self.lambda)?;
        for (n, v) in [
            ("w_bar", self.w_bar),
            ("delta_t", self.delta_t),
            ("e0_norm", self.e0_norm),
            ("eps_z", self.eps_z),
            ("delta_z", self.delta_z),
            ("nu_bar", self.nu_bar),
            ("v_r_bar", self.v_r_bar),
            ("d_a_bar", self.d_a_bar),
            ("v_b_bar", self.v_b_bar),
        ] {
            non_negative(n, v)?;
        }
        Ok(())
    }
}

/// `e^{-λt}·a + (c/λ)(1 - e^{-λt})`.
fn affine_decay(lambda: f64, a: f64, c: f64, t: f64) -> f64 {
    let decay = (-lambda * t).exp();
    decay * a + c / lambda * -(-lambda * t).exp_m1()
}

/// Edge-error envelope `e^{-λt}‖e0‖ + (w̄/λ)(1 - e^{-λt})` at `t` seconds after a check.
pub fn iss_envelope(p: &IntervalParams, t_rel: f64) -> Result<f64, TheoryError> {
    p.validate()?;
    non_negative("t_rel", t_rel)?;
    Ok(affine_decay(p.lambda, p.e0_norm, p.w_bar, t_rel))
}

/// Drone reference-tracking envelope with `ν̄` in place of `w̄`. `p.lambda` is the
/// smallest eigenvalue of `E_a E_a^T` on the component, positive only when anchored.
pub fn node_envelope(p: &IntervalParams, p_tilde0: f64, t_rel: f64, anchored: bool) -> Result<f64, TheoryError> {
    if !anchored {
        return Err(TheoryError::Inapplicable("component has no target; E_a E_a^T is singular".into()));
    }
    p.validate()?;
    non_negative("p_tilde0", p_tilde0)?;
    non_negative("t_rel", t_rel)?;
    Ok(affine_decay(p.lambda, p_tilde0, p.nu_bar, t_rel))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaMax {
    /// Largest post-check edge error that keeps the next pre-check error within `δ_z`; may be negative.
    pub threshold: f64,
    /// `ε_z + (w̄/λ)(1 - e^{-λΔ}) ≤ δ_z`.
    pub feasible: bool,
}

pub fn eta_max(p: &IntervalParams) -> Result<EtaMax, TheoryError> {
    p.validate()?;
    let grow = (p.lambda * p.delta_t).exp();
    let threshold = grow * (p.delta_z - p.eps_z) - p.w_bar / p.lambda * (grow - 1.0);
    let floor = p.eps_z + p.w_bar / p.lambda * -(-p.lambda * p.delta_t).exp_m1();
    Ok(EtaMax { threshold, feasible: floor <= p.delta_z })
}

/// Long-horizon constants for verification that is right or wrong at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonParams {
    pub alpha: f64,
    pub lambda_floor: f64,
    pub jump_bound: f64,
    pub eps_correct: f64,
    pub eps_wrong: f64,
    /// Probability of going from correct to wrong.
    pub markov_a: f64,
    /// Probability of going from wrong to correct.
    pub markov_b: f64,
    pub p0: f64,
    pub k: u64,
    pub eta0: f64,
}

impl HorizonParams {
    pub fn validate(&self) -> Result<(), TheoryError> {
        positive("lambda_floor", self.lambda_floor)?;
        non_negative("jump_bound", self.jump_bound)?;
        non_negative("eps_correct", self.eps_correct)?;
        non_negative("eta0", self.eta0)?;
        if !(self.eps_correct <= self.eps_wrong) {
            return Err(TheoryError::Parameter("eps_correct must not exceed eps_wrong".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(TheoryError::Parameter(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(TheoryError::Parameter(format!("p0 must be a probability, got {}", self.p0)));
        }
        MarkovChain::new(self.markov_a, self.markov_b)?;
        Ok(())
    }

    pub fn chain(&self) -> MarkovChain {
        MarkovChain { a: self.markov_a, b: self.markov_b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSequence {
    /// `η_0 .. η_K` by iteration.
    pub iterated: Vec<f64>,
    /// Same terms from the closed form.
    pub closed_form: Vec<f64>,
    pub eta_inf: f64,
    pub max_gap: f64,
}

/// Iterates the worst-case post-check error recursion and its closed form.
pub fn eta_recursion(h: &HorizonParams, w_bar: f64) -> Result<EtaSequence, TheoryError> {
    h.validate()?;
    non_negative("w_bar", w_bar)?;
    if h.alpha >= 1.0 {
        return Err(TheoryError::Parameter("alpha must be below 1 for a contraction".into()));
    }
    let a = h.alpha;
    let steady = w_bar / h.lambda_floor;
    let eta_inf = steady + h.jump_bound / (1.0 - a);
    let mut iterated = vec![h.eta0];
    let mut closed_form = vec![h.eta0];
    let mut eta = h.eta0;
    let mut ak = 1.0;
    for _ in 0..h.k {
        eta = a * eta + steady * (1.0 - a) + h.jump_bound;
        ak *= a;
        iterated.push(eta);
        closed_form.push(ak * h.eta0 + (1.0 - ak) * eta_inf);
    }
    let max_gap = iterated.iter().zip(&closed_form).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(EtaSequence { iterated, closed_form, eta_inf, max_gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonBound {
    pub finite: f64,
    pub asymptotic: f64,
    /// `w̄/λ̲ + J̄_z/(λ̲Δ)`.
    pub tracking: f64,
    /// `ε_C + (ε_W - ε_C)·mean p_k`.
    pub spec_gap: f64,
    pub transient: f64,
    pub mean_wrong: f64,
    pub stationary_wrong: f64,
    pub eta_inf: f64,
}

/// Finite-horizon and long-run bounds on the time-averaged ground-truth edge error.
pub fn horizon_bound(h: &HorizonParams, w_bar: f64, delta_t: f64) -> Result<HorizonBound, TheoryError> {
    h.validate()?;
    non_negative("w_bar", w_bar)?;
    positive("delta_t", delta_t)?;
    if h.k == 0 {
        return Err(TheoryError::Parameter("K must be at least 1".into()));
    }
    let lam = h.lambda_floor;
    let chain = h.chain();
    let mean_wrong = chain.mean_wrong_prob(h.p0, h.k)?;
    let stationary_wrong = chain.stationary_wrong()?;
    let tracking = w_bar / lam + h.jump_bound / (lam * delta_t);
    let spec_gap = h.eps_correct + (h.eps_wrong - h.eps_correct) * mean_wrong;
    let eta_inf = w_bar / lam + h.jump_bound / -(-lam * delta_t).exp_m1();
    let transient = (h.eta0 - eta_inf).max(0.0) / (h.k as f64 * lam * delta_t);
    Ok(HorizonBound {
        finite: tracking + spec_gap + transient,
        asymptotic: tracking + h.eps_correct + stationary_wrong * (h.eps_wrong - h.eps_correct),
        tracking,
        spec_gap,
        transient,
        mean_wrong,
        stationary_wrong,
        eta_inf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64, w_bar: f64, e0: f64) -> IntervalParams {
        IntervalParams { lambda, w_bar, e0_norm: e0, delta_t: 2.0, ..IntervalParams::default() }
    }

    #[test]
    fn envelope_endpoints() {
        let p = params(0.7, 0.2, 1.3);
        assert_eq!(iss_envelope(&p, 0.0).unwrap(), 1.3);
        assert!((iss_envelope(&p, 1e4).unwrap() - 0.2 / 0.7).abs() < 1e-15);
        assert!(iss_envelope(&params(0.0, 0.1, 1.0), 1.0).is_err());
    }

    #[test]
    fn node_envelope_needs_anchor() {
        let p = IntervalParams { lambda: 1.0, nu_bar: 0.3, ..IntervalParams::default() };
        assert!(node_envelope(&p, 2.0, 1.0, false).is_err());
        assert_eq!(node_envelope(&IntervalParams { nu_bar: 0.0, ..p }, 2.0, 0.0, true).unwrap(), 2.0);
    }

    #[test]
    fn eta_max_boundary_cases() {
        let p = IntervalParams { lambda: 1.0, delta_t: 1.0, delta_z: 1.0, eps_z: 0.0, ..IntervalParams::default() };
        let m = eta_max(&p).unwrap();
        assert!(m.feasible && (m.threshold - std::f64::consts::E).abs() < 1e-15);
        let edge = eta_max(&IntervalParams { eps_z: 1.0, w_bar: 0.1, ..p }).unwrap();
        assert!(!edge.feasible && edge.threshold < 0.0);
    }

    #[test]
    fn eta_fixed_point_is_constant() {
        let h = HorizonParams {
            alpha: 0.5,
            lambda_floor: 1.0,
            jump_bound: 0.25,
            eps_correct: 0.0,
            eps_wrong: 0.0,
            markov_a: 0.2,
            markov_b: 0.6,
            p0: 0.0,
            k: 10,
            eta0: 1.5,
        };
        let s = eta_recursion(&h, 1.0).unwrap();
        assert!(s.iterated.iter().all(|&e| (e - 1.5).abs() < 1e-15));
    }

    #[test]
    fn horizon_reduces_to_steady_state() {
        let h = HorizonParams {
            alpha: (-0.5f64).exp(),
            lambda_floor: 0.5,
            jump_bound: 0.0,
            eps_correct: 0.0,
            eps_wrong: 0.0,
            markov_a: 0.3,
            markov_b: 0.3,
            p0: 1.0,
            k: 7,
            eta0: 0.0,
        };
        let b = horizon_bound(&h, 0.2, 1.0).unwrap();
        assert!((b.finite - 0.4).abs() < 1e-15);
    }
}
