//! Small closed-loop fixtures that exercise each bound end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    eta_max, horizon_bound, iss_envelope, EtaMax, HorizonBound, HorizonParams, IntervalParams, MarkovChain, TheoryError,
};
use crate::dynamics::{
    apply_jump, edge_error, stacked_control, stacked_norm, step_with_control, DisturbanceModel, DisturbanceSampler,
    JumpRecord, RangeProjector, ReferenceSignal, SwarmState,
};
use crate::graph::{build_graph, lambda_bounds, InteractionGraph, NodeSet};
use crate::Vec3;

/// Hooks for a run of consecutive check intervals.
pub trait IntervalPlan {
    /// Drone reference enforced from check `k` on.
    fn reference(&mut self, k: usize, state: &SwarmState, graph: &InteractionGraph) -> Vec<Vec3>;
    /// Drone disturbance for the coming tick, given the control about to be applied.
    fn disturbance(&mut self, t: f64, control: &[Vec3]) -> Vec<Vec3>;
    /// Called at tick `n` of interval `k`; `n == steps` is the instant just before the next check.
    fn observe(&mut self, _k: usize, _n: usize, _state: &SwarmState, _graph: &InteractionGraph) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTrace {
    pub k: usize,
    pub t_k: f64,
    pub lambda: f64,
    pub w_bar: f64,
    pub e0: f64,
    pub jump: JumpRecord,
    pub graph_changed: bool,
    /// Largest `‖e(t)‖ - envelope(t)` over the interval, endpoint included.
    pub max_excess: f64,
    pub end_error: f64,
    /// Largest distance of `e` from `range(E_a^T ⊗ I_d)` over the interval.
    pub range_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSim {
    pub radius: f64,
    pub dt: f64,
    pub delta_t: f64,
    pub checks: usize,
    pub d_bar: f64,
}

impl IntervalSim {
    pub fn steps(&self) -> Result<usize, TheoryError> {
        let steps = (self.delta_t / self.dt).round();
        if !(steps >= 1.0) || (steps * self.dt - self.delta_t).abs() > 1e-9 * self.delta_t.max(1.0) {
            return Err(TheoryError::Parameter(format!(
                "check interval {} is not a whole number of steps of {}",
                self.delta_t, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn run(&self, init: SwarmState, plan: &mut dyn IntervalPlan) -> Result<(Vec<IntervalTrace>, SwarmState), TheoryError> {
        let steps = self.steps()?;
        let nodes = NodeSet::new(init.drones.len(), init.targets.len(), 3)?;
        let still = vec![Vec3::zeros(); init.targets.len()];
        let mut state = init;
        let mut reference = ReferenceSignal::hold(state.drones.clone(), state.time);
        let mut last_graph = build_graph(&state.positions(), nodes, self.radius)?;
        let mut traces = Vec::with_capacity(self.checks);
        for k in 0..self.checks {
            let graph_k = build_graph(&state.positions(), nodes, self.radius)?;
            let new_ref = plan.reference(k, &state, &graph_k);
            let (next_ref, jump) = apply_jump(&reference, new_ref, &last_graph, &graph_k, &state);
            reference = next_ref;
            let (lambda, lambda_max) = lambda_bounds(&graph_k)
                .ok_or_else(|| TheoryError::Inapplicable(format!("no edges at check {k}")))?;
            let w_bar = lambda_max.sqrt() * self.d_bar;
            let e0 = stacked_norm(&edge_error(&state, &reference, &graph_k));
            let params = IntervalParams { lambda, w_bar, delta_t: self.delta_t, e0_norm: e0, ..IntervalParams::default() };
            let t_k = state.time;
            let mut changed = false;
            let mut max_excess = f64::NEG_INFINITY;
            let mut graph = graph_k.clone();
            let mut projector = RangeProjector::new(&graph);
            let mut range_residual = 0.0f64;
            for n in 0..=steps {
                if n > 0 {
                    graph = build_graph(&state.positions(), nodes, self.radius)?;
                    changed |= !graph.same_edges(&graph_k);
                    if !projector.matches(&graph) {
                        projector = RangeProjector::new(&graph);
                    }
                }
                let e = edge_error(&state, &reference, &graph);
                range_residual = range_residual.max(projector.residual(&e));
                if !changed {
                    let bound = iss_envelope(&params, n as f64 * self.dt)?;
                    max_excess = max_excess.max(stacked_norm(&e) - bound);
                }
                plan.observe(k, n, &state, &graph);
                if n == steps {
                    traces.push(IntervalTrace {
                        k,
                        t_k,
                        lambda,
                        w_bar,
                        e0,
                        jump: jump.clone(),
                        graph_changed: changed,
                        max_excess,
                        end_error: stacked_norm(&e),
                        range_residual,
                    });
                    break;
                }
                let u = stacked_control(&graph, &e);
                let d = plan.disturbance(state.time, &u);
                state = step_with_control(&state, &u, &d, &still, self.dt)?;
                last_graph = graph.clone();
            }
        }
        Ok((traces, state))
    }
}

/// Bound-saturating disturbance: pushes against the control with full magnitude.
pub fn adversarial_disturbance(control: &[Vec3], d_bar: f64) -> Vec<Vec3> {
    let norm = stacked_norm(control);
    if norm > 0.0 {
        control.iter().map(|u| -u * (d_bar / norm)).collect()
    } else {
        let mut d = vec![Vec3::zeros(); control.len()];
        if let Some(first) = d.first_mut() {
            *first = Vec3::new(-d_bar, 0.0, 0.0);
        }
        d
    }
}

fn unit_ball<R: Rng>(rng: &mut R, radius: f64) -> Vec3 {
    loop {
        let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm_squared() <= 1.0 {
            return p * radius;
        }
    }
}

fn gaussian_direction<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec3> {
    let v: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = stacked_norm(&v);
    v.into_iter().map(|p| p / norm).collect()
}

/// `‖(E_a^T ⊗ I) x‖` for a drone-space vector.
fn edge_norm(graph: &InteractionGraph, x: &[Vec3]) -> f64 {
    let na = graph.nodes.num_drones;
    let sq: f64 = graph
        .edges
        .iter()
        .map(|&(i, j)| if j < na { (x[i] - x[j]).norm_squared() } else { x[i].norm_squared() })
        .sum();
    sq.sqrt()
}

/// Maps `f` over `0..n` on all cores, keeping order.
pub fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(n: usize, f: F) -> Vec<T> {
    let workers = std::thread::available_parallelism().map(|w| w.get()).unwrap_or(1).min(n.max(1));
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let chunks: Vec<_> = slots
            .chunks_mut(n.div_ceil(workers).max(1))
            .enumerate()
            .map(|(c, chunk)| {
                let start = c * n.div_ceil(workers).max(1);
                s.spawn(move || {
                    for (off, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(f(start + off));
                    }
                })
            })
            .collect();
        for h in chunks {
            h.join().expect("worker panicked");
        }
    });
    slots.into_iter().map(|s| s.expect("filled")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtSweep {
    pub dts: Vec<f64>,
    /// Largest envelope excess under the saturating disturbance, per step size.
    pub excess: Vec<f64>,
    /// `excess[i+1] / excess[i]`.
    pub ratios: Vec<f64>,
    /// Slack constant: largest `excess / dt` over the sweep.
    pub c: f64,
}

fn sweep(dts: &[f64], mut run: impl FnMut(f64) -> Result<f64, TheoryError>) -> Result<DtSweep, TheoryError> {
    let excess: Vec<f64> = dts.iter().map(|&h| run(h)).collect::<Result<_, _>>()?;
    let ratios = excess.windows(2).map(|w| w[1] / w[0]).collect();
    let c = dts.iter().zip(&excess).map(|(h, v)| v.max(0.0) / h).fold(0.0, f64::max);
    Ok(DtSweep { dts: dts.to_vec(), excess, ratios, c })
}

// ---------------------------------------------------------------------------
// single drone anchored to one target

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingFixture {
    pub d_bar: f64,
    pub dt: f64,
    pub delta_t: f64,
    pub duration: f64,
    pub radius: f64,
    /// Each check moves the reference to a random point within this distance of the target.
    pub jump_radius: f64,
    pub seeds: u64,
}

impl Default for TrackingFixture {
    fn default() -> Self {
        Self { d_bar: 0.3, dt: 1e-3, delta_t: 2.0, duration: 20.0, radius: 5.0, jump_radius: 1.0, seeds: 50 }
    }
}

struct TrackingPlan {
    offsets: ChaCha8Rng,
    noise: Option<DisturbanceSampler>,
    d_bar: f64,
    jump_radius: f64,
}

impl IntervalPlan for TrackingPlan {
    fn reference(&mut self, k: usize, state: &SwarmState, _graph: &InteractionGraph) -> Vec<Vec3> {
        if k == 0 {
            return state.drones.clone();
        }
        vec![state.targets[0] + unit_ball(&mut self.offsets, self.jump_radius)]
    }

    fn disturbance(&mut self, t: f64, control: &[Vec3]) -> Vec<Vec3> {
        match &mut self.noise {
            Some(s) => s.sample(t),
            None => adversarial_disturbance(control, self.d_bar),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub sweep: DtSweep,
    /// Excess ratio when `dt` is halved from the fixture value.
    pub halving_ratio: f64,
    pub tolerance: f64,
    /// Largest envelope excess per seed.
    pub seed_excess: Vec<f64>,
    pub samples_per_seed: usize,
    pub max_range_residual: f64,
    pub pass: bool,
}

impl TrackingFixture {
    fn sim(&self, dt: f64) -> IntervalSim {
        IntervalSim {
            radius: self.radius,
            dt,
            delta_t: self.delta_t,
            checks: (self.duration / self.delta_t).round() as usize,
            d_bar: self.d_bar,
        }
    }

    fn initial(&self) -> SwarmState {
        SwarmState::new(0.0, vec![Vec3::new(0.5, 0.0, 0.0)], vec![Vec3::zeros()])
    }

    pub fn run(&self, dt: f64, seed: Option<u64>) -> Result<Vec<IntervalTrace>, TheoryError> {
        let mut plan = TrackingPlan {
            offsets: ChaCha8Rng::seed_from_u64(seed.unwrap_or(0) ^ 0x5eed_0ff5),
            noise: seed.map(|s| DisturbanceModel::noise(self.d_bar, s).sampler(1, 3)),
            d_bar: self.d_bar,
            jump_radius: self.jump_radius,
        };
        Ok(self.sim(dt).run(self.initial(), &mut plan)?.0)
    }

    pub fn calibrate(&self) -> Result<DtSweep, TheoryError> {
        let dts = [2.0 * self.dt, self.dt, self.dt / 2.0];
        sweep(&dts, |h| Ok(self.run(h, None)?.iter().map(|t| t.max_excess).fold(f64::NEG_INFINITY, f64::max)))
    }

    pub fn certify(&self) -> Result<TrackingReport, TheoryError> {
        let sweep = self.calibrate()?;
        let tolerance = sweep.c * self.dt;
        let per_seed: Vec<(f64, f64)> = parallel_map(self.seeds as usize, |s| {
            self.run(self.dt, Some(s as u64)).map(|tr| {
                let excess = tr.iter().map(|t| t.max_excess).fold(f64::NEG_INFINITY, f64::max);
                (excess, tr.iter().map(|t| t.range_residual).fold(0.0, f64::max))
            })
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
        let seed_excess: Vec<f64> = per_seed.iter().map(|p| p.0).collect();
        let halving_ratio = sweep.ratios[1];
        let pass = seed_excess.iter().all(|&x| x <= tolerance) && (0.4..=0.6).contains(&halving_ratio);
        Ok(TrackingReport {
            sweep,
            halving_ratio,
            tolerance,
            seed_excess,
            samples_per_seed: self.sim(self.dt).steps()? * self.sim(self.dt).checks,
            max_range_residual: per_seed.iter().map(|p| p.1).fold(0.0, f64::max),
            pass,
        })
    }
}

// ---------------------------------------------------------------------------
// drone - drone - target path

/// Drones at (8,0,0) and (4,0,0), target at the origin, radius 5: a three-node path.
pub fn path_home() -> SwarmState {
    SwarmState::new(0.0, vec![Vec3::new(8.0, 0.0, 0.0), Vec3::new(4.0, 0.0, 0.0)], vec![Vec3::zeros()])
}

pub const PATH_RADIUS: f64 = 5.0;

fn jittered<R: Rng>(base: &[Vec3], amount: f64, rng: &mut R) -> Vec<Vec3> {
    base.iter()
        .map(|p| p + Vec3::new(rng.random_range(-amount..=amount), rng.random_range(-amount..=amount), rng.random_range(-amount..=amount)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopClosureFixture {
    pub eps_z: f64,
    pub delta_z: f64,
    pub d_bar: f64,
    pub delta_t: f64,
    pub dt: f64,
    pub intervals: usize,
    /// Goal formations differ from home by at most this much per coordinate.
    pub goal_jitter: f64,
    pub goal_every: usize,
    pub seed: u64,
}

impl Default for LoopClosureFixture {
    fn default() -> Self {
        Self {
            eps_z: 0.1,
            delta_z: 0.5,
            d_bar: 0.05,
            delta_t: 2.0,
            dt: 1e-3,
            intervals: 200,
            goal_jitter: 0.3,
            goal_every: 5,
            seed: 17,
        }
    }
}

struct LoopClosurePlan {
    fx: LoopClosureFixture,
    rng: ChaCha8Rng,
    noise: Option<DisturbanceSampler>,
    goal: Vec<Vec3>,
    star: Vec<Vec3>,
    /// `‖z - z^⋆‖` just before each next check.
    end_gaps: Vec<f64>,
    post_check: Vec<f64>,
    thresholds: Vec<f64>,
    feasible: bool,
}

impl IntervalPlan for LoopClosurePlan {
    fn reference(&mut self, k: usize, state: &SwarmState, graph: &InteractionGraph) -> Vec<Vec3> {
        if k.is_multiple_of(self.fx.goal_every) {
            self.goal = jittered(&path_home().drones, self.fx.goal_jitter, &mut self.rng);
        }
        let (lambda, lmax) = lambda_bounds(graph).unwrap_or((1.0, 1.0));
        let params = IntervalParams {
            lambda,
            w_bar: lmax.sqrt() * self.fx.d_bar,
            delta_t: self.fx.delta_t,
            eps_z: self.fx.eps_z,
            delta_z: self.fx.delta_z,
            ..IntervalParams::default()
        };
        let m = eta_max(&params).expect("valid interval parameters");
        self.feasible &= m.feasible;
        self.thresholds.push(m.threshold);
        let step: Vec<Vec3> = self.goal.iter().zip(&state.drones).map(|(g, p)| g - p).collect();
        let g = edge_norm(graph, &step);
        let budget = (m.threshold - self.fx.eps_z).max(0.0);
        let s = if g > budget { budget / g } else { 1.0 };
        self.star = state.drones.iter().zip(&step).map(|(p, d)| p + d * s).collect();
        let dir = gaussian_direction(&mut self.rng, state.drones.len());
        let gap = self.rng.random_range(0.0..=self.fx.eps_z) / edge_norm(graph, &dir);
        let reference: Vec<Vec3> = self.star.iter().zip(&dir).map(|(p, c)| p + c * gap).collect();
        let e_plus: Vec<Vec3> = reference.iter().zip(&state.drones).map(|(r, p)| r - p).collect();
        self.post_check.push(edge_norm(graph, &e_plus));
        reference
    }

    fn disturbance(&mut self, t: f64, control: &[Vec3]) -> Vec<Vec3> {
        match &mut self.noise {
            Some(s) => s.sample(t),
            None => adversarial_disturbance(control, self.fx.d_bar),
        }
    }

    fn observe(&mut self, _k: usize, n: usize, state: &SwarmState, graph: &InteractionGraph) {
        if n as f64 * self.fx.dt >= self.fx.delta_t - 1e-12 {
            let diff: Vec<Vec3> = state.drones.iter().zip(&self.star).map(|(p, s)| p - s).collect();
            self.end_gaps.push(edge_norm(graph, &diff));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopClosureReport {
    pub eps_z: f64,
    pub delta_z: f64,
    pub feasible: bool,
    pub eta_max: f64,
    pub sweep: DtSweep,
    pub tolerance: f64,
    pub intervals: usize,
    pub max_post_check: f64,
    pub max_end_gap: f64,
    pub violations: usize,
    pub graph_changes: usize,
    pub max_range_residual: f64,
    /// `None` when infeasible: reported, not asserted.
    pub pass: Option<bool>,
}

impl LoopClosureFixture {
    fn sim(&self, dt: f64) -> IntervalSim {
        IntervalSim { radius: PATH_RADIUS, dt, delta_t: self.delta_t, checks: self.intervals, d_bar: self.d_bar }
    }

    fn plan(&self, noisy: bool) -> LoopClosurePlan {
        LoopClosurePlan {
            fx: *self,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            noise: noisy.then(|| DisturbanceModel::noise(self.d_bar, self.seed).sampler(2, 3)),
            goal: path_home().drones,
            star: path_home().drones,
            end_gaps: Vec::new(),
            post_check: Vec::new(),
            thresholds: Vec::new(),
            feasible: true,
        }
    }

    /// Threshold and feasibility on the home formation.
    pub fn home_eta_max(&self) -> Result<EtaMax, TheoryError> {
        let graph = build_graph(&path_home().positions(), NodeSet::new(2, 1, 3)?, PATH_RADIUS)?;
        let (lambda, lmax) = lambda_bounds(&graph).expect("path graph has edges");
        eta_max(&IntervalParams {
            lambda,
            w_bar: lmax.sqrt() * self.d_bar,
            delta_t: self.delta_t,
            eps_z: self.eps_z,
            delta_z: self.delta_z,
            ..IntervalParams::default()
        })
    }

    pub fn certify(&self) -> Result<LoopClosureReport, TheoryError> {
        let home = self.home_eta_max()?;
        if !home.feasible {
            return Ok(LoopClosureReport {
                eps_z: self.eps_z,
                delta_z: self.delta_z,
                feasible: false,
                eta_max: home.threshold,
                sweep: DtSweep { dts: Vec::new(), excess: Vec::new(), ratios: Vec::new(), c: 0.0 },
                tolerance: 0.0,
                intervals: 0,
                max_post_check: 0.0,
                max_end_gap: 0.0,
                violations: 0,
                graph_changes: 0,
                max_range_residual: 0.0,
                pass: None,
            });
        }
        let short = LoopClosureFixture { intervals: 10, ..*self };
        let sweep = sweep(&[self.dt, self.dt / 2.0], |h| {
            let mut p = short.plan(false);
            let (tr, _) = short.sim(h).run(path_home(), &mut p)?;
            Ok(tr.iter().filter(|t| !t.graph_changed).map(|t| t.max_excess).fold(f64::NEG_INFINITY, f64::max))
        })?;
        let tolerance = sweep.c * self.dt;
        let mut plan = self.plan(true);
        let (traces, _) = self.sim(self.dt).run(path_home(), &mut plan)?;
        let graph_changes = traces.iter().filter(|t| t.graph_changed).count();
        let violations = plan.end_gaps.iter().filter(|&&g| g > self.delta_z + tolerance).count();
        let feasible = plan.feasible;
        Ok(LoopClosureReport {
            eps_z: self.eps_z,
            delta_z: self.delta_z,
            feasible,
            eta_max: plan.thresholds.iter().copied().fold(f64::INFINITY, f64::min),
            sweep,
            tolerance,
            intervals: plan.end_gaps.len(),
            max_post_check: plan.post_check.iter().copied().fold(0.0, f64::max),
            max_end_gap: plan.end_gaps.iter().copied().fold(0.0, f64::max),
            violations,
            graph_changes,
            max_range_residual: traces.iter().map(|t| t.range_residual).fold(0.0, f64::max),
            pass: feasible.then_some(violations == 0 && graph_changes == 0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonFixture {
    pub jump_bound: f64,
    pub eps_correct: f64,
    pub eps_wrong: f64,
    pub markov_a: f64,
    pub markov_b: f64,
    pub p0: f64,
    pub checks: usize,
    pub delta_t: f64,
    pub dt: f64,
    pub d_bar: f64,
    pub runs: u64,
    pub init_jitter: f64,
}

impl Default for HorizonFixture {
    fn default() -> Self {
        Self {
            jump_bound: 0.2,
            eps_correct: 0.05,
            eps_wrong: 0.5,
            markov_a: 0.2,
            markov_b: 0.6,
            p0: 0.5,
            checks: 20,
            delta_t: 2.0,
            dt: 1e-3,
            d_bar: 0.05,
            runs: 200,
            init_jitter: 0.3,
        }
    }
}

struct HorizonPlan {
    gaps: Vec<f64>,
    dir: Vec<Vec3>,
    noise: DisturbanceSampler,
    steps: usize,
    err_sum: f64,
    samples: usize,
}

impl IntervalPlan for HorizonPlan {
    fn reference(&mut self, k: usize, _state: &SwarmState, _graph: &InteractionGraph) -> Vec<Vec3> {
        path_home().drones.iter().zip(&self.dir).map(|(h, u)| h + u * self.gaps[k]).collect()
    }

    fn disturbance(&mut self, t: f64, _control: &[Vec3]) -> Vec<Vec3> {
        self.noise.sample(t)
    }

    fn observe(&mut self, _k: usize, n: usize, state: &SwarmState, graph: &InteractionGraph) {
        if n < self.steps {
            let diff: Vec<Vec3> = state.drones.iter().zip(&path_home().drones).map(|(p, h)| p - h).collect();
            self.err_sum += edge_norm(graph, &diff);
            self.samples += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRun {
    pub seed: u64,
    pub eta0: f64,
    pub measured: f64,
    pub bound: HorizonBound,
    pub wrong_fraction: f64,
    pub max_jump: f64,
    pub graph_changed: bool,
    pub range_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub lambda_floor: f64,
    pub alpha: f64,
    pub w_bar: f64,
    pub runs: Vec<HorizonRun>,
    pub mean_measured: f64,
    pub worst_margin: f64,
    /// `|finite(K → ∞, p0 = π_W) - asymptotic|`.
    pub limit_gap: f64,
    pub max_range_residual: f64,
    pub pass: bool,
}

impl HorizonFixture {
    pub fn horizon_params(&self, lambda_floor: f64, eta0: f64) -> HorizonParams {
        HorizonParams {
            alpha: (-lambda_floor * self.delta_t).exp(),
            lambda_floor,
            jump_bound: self.jump_bound,
            eps_correct: self.eps_correct,
            eps_wrong: self.eps_wrong,
            markov_a: self.markov_a,
            markov_b: self.markov_b,
            p0: self.p0,
            k: self.checks as u64,
            eta0,
        }
    }

    pub fn run_seed(&self, seed: u64) -> Result<HorizonRun, TheoryError> {
        let home = path_home();
        let nodes = NodeSet::new(2, 1, 3)?;
        let graph = build_graph(&home.positions(), nodes, PATH_RADIUS)?;
        let (lambda, lmax) = lambda_bounds(&graph).expect("path graph has edges");
        let w_bar = lmax.sqrt() * self.d_bar;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = MarkovChain::new(self.markov_a, self.markov_b)?;
        let states = chain.sample_path(self.p0, self.checks, &mut rng);
        // wrong offsets are capped so consecutive references never jump by more than the jump bound
        let wrong_cap = self.eps_wrong.min(self.jump_bound).max(self.eps_correct);
        let gaps: Vec<f64> = states
            .iter()
            .map(|&w| if w { rng.random_range(self.eps_correct..=wrong_cap) } else { rng.random_range(0.0..=self.eps_correct) })
            .collect();
        let raw = gaussian_direction(&mut rng, 2);
        let scale = edge_norm(&graph, &raw);
        let dir: Vec<Vec3> = raw.iter().map(|p| p / scale).collect();
        let mut init = home.clone();
        init.drones = jittered(&home.drones, self.init_jitter, &mut rng);
        let sim = IntervalSim { radius: PATH_RADIUS, dt: self.dt, delta_t: self.delta_t, checks: self.checks, d_bar: self.d_bar };
        let mut plan = HorizonPlan {
            gaps,
            dir,
            noise: DisturbanceModel::noise(self.d_bar, seed).sampler(2, 3),
            steps: sim.steps()?,
            err_sum: 0.0,
            samples: 0,
        };
        let (traces, _) = sim.run(init, &mut plan)?;
        let eta0 = traces[0].e0;
        let bound = horizon_bound(&self.horizon_params(lambda, eta0), w_bar, self.delta_t)?;
        Ok(HorizonRun {
            seed,
            eta0,
            measured: plan.err_sum / plan.samples as f64,
            bound,
            wrong_fraction: states.iter().filter(|&&w| w).count() as f64 / states.len() as f64,
            max_jump: traces.iter().skip(1).map(|t| t.jump.delta_norm).fold(0.0, f64::max),
            graph_changed: traces.iter().any(|t| t.graph_changed || t.jump.reinitialized && t.k > 0),
            range_residual: traces.iter().map(|t| t.range_residual).fold(0.0, f64::max),
        })
    }

    pub fn certify(&self) -> Result<HorizonReport, TheoryError> {
        let nodes = NodeSet::new(2, 1, 3)?;
        let graph = build_graph(&path_home().positions(), nodes, PATH_RADIUS)?;
        let (lambda, lmax) = lambda_bounds(&graph).expect("path graph has edges");
        let w_bar = lmax.sqrt() * self.d_bar;
        let runs: Vec<HorizonRun> = parallel_map(self.runs as usize, |s| self.run_seed(s as u64))
            .into_iter()
            .collect::<Result<_, _>>()?;
        let worst_margin = runs.iter().map(|r| r.bound.finite - r.measured).fold(f64::INFINITY, f64::min);
        let mean_measured = runs.iter().map(|r| r.measured).sum::<f64>() / runs.len().max(1) as f64;
        let pi = MarkovChain::new(self.markov_a, self.markov_b)?.stationary_wrong()?;
        let limit_params = HorizonParams { p0: pi, k: 1_000_000_000_000_000, ..self.horizon_params(lambda, 0.0) };
        let limit = horizon_bound(&limit_params, w_bar, self.delta_t)?;
        let limit_gap = (limit.finite - limit.asymptotic).abs();
        let assumptions = runs.iter().all(|r| !r.graph_changed && r.max_jump <= self.jump_bound + 1e-12);
        Ok(HorizonReport {
            lambda_floor: lambda,
            alpha: (-lambda * self.delta_t).exp(),
            w_bar,
            pass: worst_margin >= 0.0 && limit_gap <= 1e-12 && assumptions,
            max_range_residual: runs.iter().map(|r| r.range_residual).fold(0.0, f64::max),
            runs,
            mean_measured,
            worst_margin,
            limit_gap,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undisturbed_single_edge_decays_exponentially() {
        let fx = TrackingFixture { d_bar: 0.0, ..TrackingFixture::default() };
        let sim = IntervalSim { checks: 1, ..fx.sim(1e-3) };
        struct Fixed;
        impl IntervalPlan for Fixed {
            fn reference(&mut self, _: usize, _: &SwarmState, _: &InteractionGraph) -> Vec<Vec3> {
                vec![Vec3::zeros()]
            }
            fn disturbance(&mut self, _: f64, c: &[Vec3]) -> Vec<Vec3> {
                vec![Vec3::zeros(); c.len()]
            }
        }
        let init = SwarmState::new(0.0, vec![Vec3::new(1.0, 0.0, 0.0)], vec![Vec3::zeros()]);
        let (tr, _) = sim.run(init, &mut Fixed).unwrap();
        let exact = (-2.0f64).exp();
        assert!((tr[0].end_error - exact).abs() < 1e-3);
        assert!(tr[0].max_excess <= 1e-15);
    }

    #[test]
    fn sweep_is_first_order() {
        let fx = TrackingFixture { duration: 4.0, ..TrackingFixture::default() };
        let s = fx.calibrate().unwrap();
        for r in &s.ratios {
            assert!((0.4..=0.6).contains(r), "{s:?}");
        }
    }

    #[test]
    fn parallel_map_keeps_order() {
        assert_eq!(parallel_map(37, |i| i * 2), (0..37).map(|i| i * 2).collect::<Vec<_>>());
        assert!(parallel_map(0, |i| i).is_empty());
    }
}
