//! Parameterized backbones: GLS/ILS for TSP, ACO for CVRP and MKP, greedy
//! online assignment for BPP. Every run records its incumbent objective at
//! time 0 and at each improvement.

mod aco;
mod config;
mod gls;
mod goa;

pub use aco::{aco_step, ColonyProblem, CvrpColony, MkpColony, PHEROMONE_FLOOR};
pub use config::{
    bounds, Acceptance, AcceptanceRule, AcoMechanism, BinRule, DepositRule, GlsMechanism, GoaMechanism, Guidance,
    GuidanceRule, HeuristicRule, LocalImprovement, Mechanism, MoveOperator, PerturbOperator, Perturbation,
    PerturbationTrigger, Schedule, Scan, SolverConfig, TriggerMode,
};
pub use gls::{gls_guidance_update, nearest_neighbor_tour, Penalties};
pub use goa::{goa_assign, GoaOutcome};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{self, Instance, Payload, ProblemError, Solution, Task};
use crate::trajectory::{fold_incumbent, IncumbentTrace, TraceError, TracePoint};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("{backbone} backbone cannot solve {task} instances")]
    TaskMismatch { backbone: &'static str, task: Task },
    #[error("non-finite objective")]
    NonFinite,
    #[error("objective {objective} beats reference {reference}; the reference is not a valid bound")]
    ReferenceExceeded { objective: f64, reference: f64 },
    #[error("budget must be positive and finite, got {0}")]
    BadBudget(f64),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Time source for budgets and trace timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClockMode {
    /// Monotonic wall clock.
    #[default]
    Wall,
    /// Deterministic clock: elementary operations divided by a nominal rate.
    Work { ops_per_second: f64 },
}

impl ClockMode {
    /// Nominal rate roughly matching one core of a current desktop.
    pub const DEFAULT_OPS_PER_SECOND: f64 = 5e7;

    pub fn work() -> Self {
        ClockMode::Work {
            ops_per_second: Self::DEFAULT_OPS_PER_SECOND,
        }
    }
}

/// Budget clock shared by all backbones.
#[derive(Debug)]
pub struct Clock {
    mode: ClockMode,
    start: Instant,
    ops: u64,
}

impl Clock {
    pub fn start(mode: ClockMode) -> Self {
        Self {
            mode,
            start: Instant::now(),
            ops: 0,
        }
    }

    #[inline]
    pub fn tick(&mut self, n: u64) {
        self.ops += n;
    }

    pub fn ops(&self) -> u64 {
        self.ops
    }

    pub fn elapsed(&self) -> f64 {
        match self.mode {
            ClockMode::Wall => self.start.elapsed().as_secs_f64(),
            ClockMode::Work { ops_per_second } => self.ops as f64 / ops_per_second,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TimeLimit,
    LoopMax,
    Stagnation,
    Completed,
}

/// Per-run environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Metric horizon `T`; the budget is `min(time_limit_s, T)`.
    pub horizon: f64,
    pub seed: u64,
    pub clock: ClockMode,
}

/// Raw outcome of a backbone: incumbent objectives over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRun {
    /// `(time, objective)` at 0 and at every improvement.
    pub events: Vec<(f64, f64)>,
    pub solution: Solution,
    pub t_run: f64,
    pub loops: u64,
    pub stop: StopReason,
}

/// Records improvements as the run proceeds.
pub(crate) struct Recorder {
    events: Vec<(f64, f64)>,
}

impl Recorder {
    pub(crate) fn new(initial: f64) -> Self {
        Self {
            events: vec![(0.0, initial)],
        }
    }

    pub(crate) fn improve(&mut self, time: f64, objective: f64) {
        let last = self.events.last().expect("initial event").1;
        if objective < last {
            self.events.push((time, objective));
        }
    }

    pub(crate) fn finish(self, solution: Solution, t_run: f64, loops: u64, stop: StopReason) -> ObjectiveRun {
        ObjectiveRun {
            events: self.events,
            solution,
            t_run,
            loops,
            stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub trace: IncumbentTrace,
    pub solution: Solution,
    pub t_run: f64,
    pub seed: u64,
    pub loops: u64,
    pub stop: StopReason,
}

impl RunResult {
    pub fn final_gap(&self) -> f64 {
        self.trace.final_gap()
    }
}

/// Runs the backbone and reports raw objectives, no reference needed.
pub fn run_backbone(config: &SolverConfig, instance: &Instance, opts: &RunOptions) -> Result<ObjectiveRun, SolverError> {
    config.validate_for(instance.task())?;
    instance.validate()?;
    if !(opts.horizon.is_finite() && opts.horizon > 0.0) {
        return Err(SolverError::BadBudget(opts.horizon));
    }
    let budget = config.schedule.time_limit_s.min(opts.horizon);
    let run = match (&config.mechanism, instance) {
        (Mechanism::Gls(m), Instance::Tsp(t)) => gls::run(m, &config.schedule, t, budget, opts)?,
        (Mechanism::Aco(m), Instance::Cvrp(c)) => aco::run(&CvrpColony::new(c), m, &config.schedule, budget, opts)?,
        (Mechanism::Aco(m), Instance::Mkp(k)) => aco::run(&MkpColony::new(k), m, &config.schedule, budget, opts)?,
        (Mechanism::Goa(m), Instance::Bpp(b)) => goa::run(m, b, budget, opts)?,
        _ => unreachable!("validate_for checked the pairing"),
    };
    if run.events.iter().any(|e| !e.1.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    debug_assert!(problems::evaluate(instance, &run.solution.payload)
        .ok()
        .and_then(|v| v.objective())
        .is_some_and(|v| (v - run.solution.objective).abs() <= 1e-9 * v.abs().max(1.0)));
    Ok(run)
}

/// Converts objectives to relative gaps against `f_star`.
pub fn objective_trace(run: &ObjectiveRun, f_star: f64, horizon: f64) -> Result<IncumbentTrace, SolverError> {
    let mut raw = Vec::with_capacity(run.events.len() + 1);
    for &(t, f) in &run.events {
        let mut g = problems::relative_gap(f, f_star)?;
        if g.abs() <= 1e-12 {
            // summation-order noise on an optimal solution
            g = 0.0;
        } else if g < 0.0 {
            if g > -1e-9 {
                g = 0.0;
            } else {
                return Err(SolverError::ReferenceExceeded {
                    objective: f,
                    reference: f_star,
                });
            }
        }
        raw.push(TracePoint::new(t, g)?);
    }
    let last_t = raw.last().expect("initial event").time;
    if run.t_run > last_t {
        // end marker: repeats the final gap, so the fold drops it but keeps end_time
        let g = raw.last().expect("initial event").gap;
        raw.push(TracePoint::new(run.t_run, g)?);
    }
    Ok(fold_incumbent(&raw, horizon)?)
}

/// Runs a solver and returns its gap trajectory against `f_star`.
pub fn run_solver(
    config: &SolverConfig,
    instance: &Instance,
    f_star: f64,
    opts: &RunOptions,
) -> Result<RunResult, SolverError> {
    let run = run_backbone(config, instance, opts)?;
    let trace = objective_trace(&run, f_star, opts.horizon)?;
    Ok(RunResult {
        trace,
        solution: run.solution,
        t_run: run.t_run,
        seed: opts.seed,
        loops: run.loops,
        stop: run.stop,
    })
}

/// Objective of the fixed task-specific initial construction.
pub fn initial_objective(instance: &Instance) -> Result<f64, SolverError> {
    instance.validate()?;
    let payload = match instance {
        Instance::Tsp(t) => Payload::Tour(nearest_neighbor_tour(&t.distances(), 0)),
        Instance::Cvrp(c) => CvrpColony::new(c).initial_payload(),
        Instance::Mkp(m) => MkpColony::new(m).initial_payload(),
        Instance::Bpp(b) => Payload::Bins((0..b.items.len()).collect()),
    };
    Ok(Solution::checked(instance, payload)?.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{generate, oracle_optimum, GenParams, Point, TspInstance, TspParams};
    use crate::trajectory::{tldr, MetricConfig};

    fn opts(horizon: f64, seed: u64) -> RunOptions {
        RunOptions {
            horizon,
            seed,
            clock: ClockMode::work(),
        }
    }

    #[test]
    fn a280_config_solves_square_and_stagnates() {
        let sq = Instance::Tsp(
            TspInstance::new(vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 0.0),
                Point::new(0.0, 1.0),
            ])
            .unwrap(),
        );
        let cfg = SolverConfig::a280_specialist();
        let r = run_solver(&cfg, &sq, 4.0, &opts(4.0, 1)).unwrap();
        assert_eq!(r.final_gap(), 0.0);
        assert_eq!(r.stop, StopReason::Stagnation);
    }

    #[test]
    fn expired_horizon_leaves_initial_point() {
        let inst = generate(&GenParams::Tsp(TspParams::new(200)), 3).unwrap();
        let cfg = SolverConfig::seed(Task::Tsp);
        let o = RunOptions {
            horizon: 1e-12,
            seed: 0,
            clock: ClockMode::Work { ops_per_second: 1.0 },
        };
        let init = initial_objective(&inst).unwrap();
        let r = run_solver(&cfg, &inst, init * 0.8, &o).unwrap();
        assert_eq!(r.trace.points().len(), 1);
        let cfg_m = MetricConfig::with_horizon(1e-12).unwrap();
        assert_eq!(tldr(&r.trace, &cfg_m).unwrap(), 0.0);
    }

    #[test]
    fn work_clock_runs_are_deterministic() {
        let inst = generate(&GenParams::Tsp(TspParams::new(60)), 5).unwrap();
        let cfg = SolverConfig::seed(Task::Tsp);
        let a = run_backbone(&cfg, &inst, &opts(0.5, 9)).unwrap();
        let b = run_backbone(&cfg, &inst, &opts(0.5, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gls_finds_small_optimum() {
        for seed in 0..5 {
            let inst = generate(&GenParams::Tsp(TspParams::new(10)), seed).unwrap();
            let opt = oracle_optimum(&inst).unwrap();
            let r = run_solver(&SolverConfig::seed(Task::Tsp), &inst, opt, &opts(2.0, seed)).unwrap();
            assert_eq!(r.final_gap(), 0.0, "seed {seed}");
        }
    }

    #[test]
    fn mismatched_backbone_rejected() {
        let inst = generate(&GenParams::Tsp(TspParams::new(10)), 0).unwrap();
        let err = run_backbone(&SolverConfig::seed(Task::Bpp), &inst, &opts(1.0, 0)).unwrap_err();
        assert!(matches!(err, SolverError::TaskMismatch { .. }));
    }

    #[test]
    fn reference_above_optimum_is_an_error() {
        let inst = generate(&GenParams::Tsp(TspParams::new(10)), 0).unwrap();
        let opt = oracle_optimum(&inst).unwrap();
        let err = run_solver(&SolverConfig::seed(Task::Tsp), &inst, opt * 1.5, &opts(1.0, 0)).unwrap_err();
        assert!(matches!(err, SolverError::ReferenceExceeded { .. }));
    }
}
