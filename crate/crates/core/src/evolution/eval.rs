//! Stratified batch evaluation with a shared ℓ(0) cache.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accept::Metrics;
use super::EvolutionError;
use crate::problems::{Instance, Task};
use crate::profiles::{extract_profile, fit_groups, GroupModel, InstanceProfile};
use crate::seed;
use crate::solvers::{initial_objective, run_solver, ClockMode, RunOptions, SolverConfig};
use crate::trajectory::{log_residual, terminal_log_residual, tldr_anchored, IncumbentTrace, MetricConfig, DEFAULT_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainInstance {
    pub id: String,
    pub instance: Instance,
}

/// Grouped training pool. Every instance carries a reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub task: Task,
    pub items: Vec<TrainInstance>,
    pub profiles: Vec<InstanceProfile>,
    pub model: GroupModel,
    /// Group index per item.
    pub groups: Vec<usize>,
}

impl TrainingSet {
    /// Profiles and clusters the pool into `g` groups.
    pub fn build(items: Vec<TrainInstance>, g: usize, seed: u64) -> Result<Self, EvolutionError> {
        let first = items.first().ok_or_else(|| EvolutionError::Data("empty training set".into()))?;
        let task = first.instance.task();
        for it in &items {
            if it.instance.task() != task {
                return Err(EvolutionError::Data(format!("{} is a {} instance in a {task} pool", it.id, it.instance.task())));
            }
            if it.instance.reference().is_none() {
                return Err(EvolutionError::Data(format!("{} has no reference value", it.id)));
            }
            it.instance.validate().map_err(|e| EvolutionError::Data(format!("{}: {e}", it.id)))?;
        }
        let profiles: Vec<InstanceProfile> = items.par_iter().map(|it| extract_profile(&it.instance)).collect();
        let fit = fit_groups(&profiles, g, seed::derive(seed, "groups", 0)).map_err(|e| EvolutionError::Data(e.to_string()))?;
        Ok(Self {
            task,
            items,
            profiles,
            model: fit.model,
            groups: fit.assignments,
        })
    }

    pub fn g(&self) -> usize {
        self.model.g
    }

    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.items.len()).filter(|&i| self.groups[i] == g).collect()
    }
}

/// Instance indices per group plus the seed every run in the batch derives from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub groups: Vec<Vec<usize>>,
    pub seed: u64,
}

impl Batch {
    /// `m` instances per group without replacement; a group smaller than
    /// `m` contributes all of its members.
    pub fn sample(training: &TrainingSet, m: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, "batch", 0));
        let groups = (0..training.g())
            .map(|g| {
                let members = training.members(g);
                let take = m.min(members.len());
                let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), take).into_iter().map(|i| members[i]).collect();
                picked.sort_unstable();
                picked
            })
            .collect();
        Self {
            groups,
            seed: seed::derive(seed, "runs", 0),
        }
    }

    /// Every instance of the pool, grouped.
    pub fn full(training: &TrainingSet, seed: u64) -> Self {
        Self {
            groups: (0..training.g()).map(|g| training.members(g)).collect(),
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn entries(&self) -> Vec<(usize, usize)> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, ids)| ids.iter().map(move |&i| (g, i)))
            .collect()
    }
}

/// `ℓ(0)` per instance, computed once from the fixed initial construction.
#[derive(Debug, Default)]
pub struct InitialCache {
    values: Mutex<HashMap<usize, f64>>,
    computed: Mutex<u64>,
}

impl InitialCache {
    pub fn get(&self, idx: usize, instance: &Instance, metric: &MetricConfig) -> Result<f64, EvolutionError> {
        if let Some(&v) = self.values.lock().expect("cache lock").get(&idx) {
            return Ok(v);
        }
        let f0 = initial_objective(instance).map_err(|e| EvolutionError::Solver(e.to_string()))?;
        let f_star = instance.reference().expect("training instances carry references");
        let gap = crate::problems::relative_gap(f0, f_star).map_err(|e| EvolutionError::Solver(e.to_string()))?;
        let l0 = log_residual(gap.max(0.0), metric).map_err(|e| EvolutionError::Solver(e.to_string()))?;
        let mut values = self.values.lock().expect("cache lock");
        let v = *values.entry(idx).or_insert_with(|| {
            *self.computed.lock().expect("cache lock") += 1;
            l0
        });
        Ok(v)
    }

    /// How many distinct instances were constructed.
    pub fn computed(&self) -> u64 {
        *self.computed.lock().expect("cache lock")
    }
}

pub struct EvalContext<'a> {
    pub training: &'a TrainingSet,
    pub horizon: f64,
    pub clock: ClockMode,
    pub cache: &'a InitialCache,
}

impl EvalContext<'_> {
    pub fn metric(&self) -> MetricConfig {
        MetricConfig::new(DEFAULT_FLOOR, self.horizon).expect("horizon validated by the run config")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    pub index: usize,
    pub id: String,
    pub group: usize,
    pub seed: u64,
    pub t_run: f64,
    pub ell0: f64,
    pub ell: f64,
    pub ell_run: f64,
    pub k: f64,
    pub final_gap: f64,
    #[serde(skip)]
    pub trace: Option<IncumbentTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub ell: f64,
    pub k: f64,
    pub t: f64,
    pub n: usize,
}

/// Batch means and per-group means, without per-instance rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub metrics: Metrics,
    pub groups: Vec<GroupStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instances: Vec<InstanceEval>,
    pub summary: EvalSummary,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl EvalRecord {
    /// Arithmetic means over the union batch and over each group.
    pub fn from_instances(instances: Vec<InstanceEval>, g: usize) -> Self {
        let metrics = Metrics {
            ell: mean(instances.iter().map(|r| r.ell)),
            ell_run: mean(instances.iter().map(|r| r.ell_run)),
            k: mean(instances.iter().map(|r| r.k)),
            t: mean(instances.iter().map(|r| r.t_run)),
        };
        let groups = (0..g)
            .map(|grp| {
                let rows: Vec<&InstanceEval> = instances.iter().filter(|r| r.group == grp).collect();
                GroupStats {
                    ell: mean(rows.iter().map(|r| r.ell)),
                    k: mean(rows.iter().map(|r| r.k)),
                    t: mean(rows.iter().map(|r| r.t_run)),
                    n: rows.len(),
                }
            })
            .collect();
        Self {
            instances,
            summary: EvalSummary { metrics, groups },
        }
    }
}

/// Runs `config` on every instance of the batch. Instance `i` always runs
/// with seed `derive(batch.seed, "run", i)`, so two configs evaluated on
/// the same batch are paired run by run.
pub fn evaluate_batch(config: &SolverConfig, batch: &Batch, ctx: &EvalContext) -> Result<EvalRecord, EvolutionError> {
    let metric = ctx.metric();
    let rows: Result<Vec<InstanceEval>, EvolutionError> = batch
        .entries()
        .into_par_iter()
        .map(|(group, idx)| {
            let item = &ctx.training.items[idx];
            let run_seed = seed::derive(batch.seed, "run", idx as u64);
            let f_star = item.instance.reference().expect("training instances carry references");
            let opts = RunOptions {
                horizon: ctx.horizon,
                seed: run_seed,
                clock: ctx.clock,
            };
            let res = run_solver(config, &item.instance, f_star, &opts).map_err(|e| EvolutionError::Solver(format!("{}: {e}", item.id)))?;
            let ell0 = ctx.cache.get(idx, &item.instance, &metric)?;
            let trace_err = |e: crate::trajectory::TraceError| EvolutionError::Solver(format!("{}: {e}", item.id));
            let ell = terminal_log_residual(&res.trace, &metric).map_err(trace_err)?;
            let k = tldr_anchored(&res.trace, &metric, ell0).map_err(trace_err)?;
            let final_gap = crate::problems::relative_gap(res.solution.objective, f_star).map_err(|e| EvolutionError::Solver(e.to_string()))?.max(0.0);
            let ell_run = log_residual(final_gap, &metric).map_err(trace_err)?;
            Ok(InstanceEval {
                index: idx,
                id: item.id.clone(),
                group,
                seed: run_seed,
                t_run: res.t_run,
                ell0,
                ell,
                ell_run,
                k,
                final_gap,
                trace: Some(res.trace),
            })
        })
        .collect();
    Ok(EvalRecord::from_instances(rows?, ctx.training.g()))
}
