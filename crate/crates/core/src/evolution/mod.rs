//! The evolution loop: layer-wise acceptance on paired batch evaluations,
//! a size-k population and decoupled per-group archives.

mod accept;
mod archive;
mod eval;

pub use accept::{accept, within_tolerance, Metrics, MetricKind, ToleranceParams, K_FLOOR};
pub use archive::{rank_cmp, ArchiveEntry, GroupArchive, Member, Population, PopulationUpdate};
pub use eval::{
    evaluate_batch, Batch, EvalContext, EvalRecord, EvalSummary, GroupStats, InitialCache, InstanceEval, TrainInstance,
    TrainingSet,
};

use std::io::Write;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mutation::{check_frozen, Feedback, Layer, LlmSettings, MutationProvider, MutationRequest};
use crate::seed;
use crate::solvers::{ClockMode, SolverConfig};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("training data: {0}")]
    Data(String),
    #[error("evaluation failed: {0}")]
    Solver(String),
    #[error("event log: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderChoice {
    Stub,
    Llm(LlmSettings),
}

fn default_clock() -> ClockMode {
    ClockMode::work()
}

fn default_provider() -> ProviderChoice {
    ProviderChoice::Stub
}

/// Run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub iterations: usize,
    #[serde(rename = "G")]
    pub groups: usize,
    pub m: usize,
    #[serde(rename = "k")]
    pub population_size: usize,
    #[serde(rename = "K")]
    pub archive_size: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Evaluation horizon T in seconds.
    pub horizon: f64,
    pub seed: u64,
    #[serde(default = "default_clock")]
    pub clock: ClockMode,
    #[serde(default = "default_provider")]
    pub provider: ProviderChoice,
    /// Starting solver; the task's seed config when absent.
    #[serde(default)]
    pub seed_config: Option<SolverConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            groups: 10,
            m: 3,
            population_size: 5,
            archive_size: 5,
            epsilon: 0.02,
            delta: 0.05,
            horizon: 10.0,
            seed: 0,
            clock: default_clock(),
            provider: default_provider(),
            seed_config: None,
        }
    }
}

impl RunConfig {
    pub fn tolerance(&self) -> ToleranceParams {
        ToleranceParams {
            epsilon: self.epsilon,
            delta: self.delta,
        }
    }

    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: String| Err(EvolutionError::Config(m));
        self.tolerance().validate().map_err(EvolutionError::Config)?;
        if self.groups == 0 || self.m == 0 || self.population_size == 0 || self.archive_size == 0 {
            return bad("G, m, k and K must be at least 1".into());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if let ClockMode::Work { ops_per_second } = self.clock {
            if !(ops_per_second.is_finite() && ops_per_second > 0.0) {
                return bad("ops_per_second must be positive".into());
            }
        }
        if let Some(c) = &self.seed_config {
            c.validate().map_err(|e| EvolutionError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Start {
        config: RunConfig,
        task: crate::problems::Task,
        training_size: usize,
        provider: String,
        timestamp: f64,
    },
    Init {
        config_id: String,
        config: SolverConfig,
        summary: EvalSummary,
        seq: u64,
    },
    Iteration {
        iter: usize,
        parent_id: String,
        batch: Vec<Vec<String>>,
    },
    ParentEvaluated {
        iter: usize,
        config_id: String,
        summary: EvalSummary,
        seq: u64,
    },
    Proposal {
        iter: usize,
        layer: Layer,
        parent_id: String,
        parent: SolverConfig,
        candidate_id: String,
        candidate: SolverConfig,
        note: String,
    },
    ProviderFailure {
        iter: usize,
        layer: Layer,
        error: String,
    },
    EvalFailure {
        iter: usize,
        layer: Layer,
        config_id: String,
        error: String,
    },
    Decision {
        iter: usize,
        layer: Layer,
        parent_id: String,
        candidate_id: String,
        frozen_ok: bool,
        accepted: bool,
        parent: Metrics,
        candidate: Metrics,
        candidate_summary: EvalSummary,
        seq: u64,
    },
    ArchiveOffer {
        iter: usize,
        group: usize,
        config_id: String,
        ell: f64,
        k: f64,
        t: f64,
        seq: u64,
        entered: bool,
    },
    PopulationUpdate {
        iter: usize,
        config_id: String,
        inserted: bool,
        evicted: Option<String>,
        members: Vec<String>,
    },
    End {
        iterations: usize,
        population: Vec<String>,
        archives: Vec<Vec<String>>,
        provider_failures: usize,
        proposals: usize,
        timestamp: f64,
        wall_s: f64,
    },
}

/// Keys that hold wall-clock readings; everything else is deterministic
/// under the work clock.
pub const WALL_CLOCK_FIELDS: [&str; 2] = ["timestamp", "wall_s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionOutcome {
    pub population: Population,
    pub archives: Vec<GroupArchive>,
    pub seed_config: SolverConfig,
    pub seed_summary: EvalSummary,
    pub iterations: usize,
    pub proposals: usize,
    pub provider_failures: usize,
}

struct Logger<'w> {
    out: &'w mut dyn Write,
}

impl Logger<'_> {
    fn emit(&mut self, e: &Event) -> Result<(), EvolutionError> {
        let line = serde_json::to_string(e).map_err(|e| EvolutionError::Io(e.to_string()))?;
        writeln!(self.out, "{line}").map_err(|e| EvolutionError::Io(e.to_string()))
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn feedback(s: &EvalSummary) -> Feedback {
    Feedback {
        ell_bar: s.metrics.ell,
        k_bar: s.metrics.k,
        t_bar: s.metrics.t,
        group_ell: s.groups.iter().map(|g| g.ell).collect(),
    }
}

/// Evaluated solver awaiting archive offers at the end of the iteration.
struct Evaluated {
    id: String,
    config: SolverConfig,
    summary: EvalSummary,
    seq: u64,
}

fn offer_all(
    archives: &mut [GroupArchive],
    rec: &Evaluated,
    iter: usize,
    log: &mut Logger,
) -> Result<(), EvolutionError> {
    for (g, archive) in archives.iter_mut().enumerate() {
        let s = rec.summary.groups[g];
        let entered = archive.offer(ArchiveEntry {
            id: rec.id.clone(),
            config: rec.config.clone(),
            ell: s.ell,
            k: s.k,
            t: s.t,
            seq: rec.seq,
            summary: rec.summary.clone(),
        });
        log.emit(&Event::ArchiveOffer {
            iter,
            group: g,
            config_id: rec.id.clone(),
            ell: s.ell,
            k: s.k,
            t: s.t,
            seq: rec.seq,
            entered,
        })?;
    }
    Ok(())
}

/// Runs the evolution loop and streams events to `log` as JSON lines.
pub fn run_evolution(
    cfg: &RunConfig,
    training: &TrainingSet,
    provider: &dyn MutationProvider,
    log: &mut dyn Write,
) -> Result<EvolutionOutcome, EvolutionError> {
    cfg.validate()?;
    if training.g() != cfg.groups {
        return Err(EvolutionError::Config(format!(
            "training set has {} groups, config asks for {}",
            training.g(),
            cfg.groups
        )));
    }
    let started = Instant::now();
    let mut log = Logger { out: log };
    let task = training.task;
    let seed_config = cfg.seed_config.clone().unwrap_or_else(|| SolverConfig::seed(task));
    seed_config
        .validate_for(task)
        .map_err(|e| EvolutionError::Config(e.to_string()))?;
    let tol = cfg.tolerance();
    let cache = InitialCache::default();
    let ctx = EvalContext {
        training,
        horizon: cfg.horizon,
        clock: cfg.clock,
        cache: &cache,
    };
    let mut seq = 0u64;
    let mut next_seq = || {
        seq += 1;
        seq - 1
    };

    log.emit(&Event::Start {
        config: cfg.clone(),
        task,
        training_size: training.items.len(),
        provider: provider.name().to_string(),
        timestamp: unix_now(),
    })?;

    let init_batch = Batch::sample(training, cfg.m, seed::derive(cfg.seed, "init", 0));
    let seed_record = evaluate_batch(&seed_config, &init_batch, &ctx)?;
    let seed_id = seed_config.id();
    let init = Evaluated {
        id: seed_id.clone(),
        config: seed_config.clone(),
        summary: seed_record.summary.clone(),
        seq: next_seq(),
    };
    log.emit(&Event::Init {
        config_id: seed_id.clone(),
        config: seed_config.clone(),
        summary: init.summary.clone(),
        seq: init.seq,
    })?;
    let mut population = Population::new(cfg.population_size);
    population.insert(Member {
        id: seed_id.clone(),
        config: seed_config.clone(),
        summary: init.summary.clone(),
        seq: init.seq,
    });
    let mut archives: Vec<GroupArchive> = (0..cfg.groups).map(|g| GroupArchive::new(g, cfg.archive_size)).collect();
    offer_all(&mut archives, &init, 0, &mut log)?;

    let (mut proposals, mut provider_failures) = (0usize, 0usize);
    for iter in 1..=cfg.iterations {
        let mut rng = seed::rng(seed::derive(cfg.seed, "parent", iter as u64));
        let parent_member = population.members[rng.random_range(0..population.len())].clone();
        let batch = Batch::sample(training, cfg.m, seed::derive(cfg.seed, "iteration", iter as u64));
        log.emit(&Event::Iteration {
            iter,
            parent_id: parent_member.id.clone(),
            batch: batch
                .groups
                .iter()
                .map(|ids| ids.iter().map(|&i| training.items[i].id.clone()).collect())
                .collect(),
        })?;
        let parent_record = evaluate_batch(&parent_member.config, &batch, &ctx)?;
        let parent_seq = next_seq();
        log.emit(&Event::ParentEvaluated {
            iter,
            config_id: parent_member.id.clone(),
            summary: parent_record.summary.clone(),
            seq: parent_seq,
        })?;
        let mut records = vec![Evaluated {
            id: parent_member.id.clone(),
            config: parent_member.config.clone(),
            summary: parent_record.summary,
            seq: parent_seq,
        }];
        let mut current = 0usize;

        for layer in Layer::ALL {
            let cur = &records[current];
            let request = MutationRequest {
                layer,
                task,
                parent: cur.config.clone(),
                feedback: feedback(&cur.summary),
                seed: seed::derive(cfg.seed, "propose", iter as u64 * 4 + layer.index()),
            };
            let response = match provider.propose(&request) {
                Ok(r) => r,
                Err(e) => {
                    provider_failures += 1;
                    log.emit(&Event::ProviderFailure {
                        iter,
                        layer,
                        error: e.to_string(),
                    })?;
                    continue;
                }
            };
            proposals += 1;
            let cand = response.candidate;
            let cand_id = cand.id();
            log.emit(&Event::Proposal {
                iter,
                layer,
                parent_id: cur.id.clone(),
                parent: cur.config.clone(),
                candidate_id: cand_id.clone(),
                candidate: cand.clone(),
                note: response.note,
            })?;
            // providers are not trusted with the layer constraint
            let frozen_ok = check_frozen(layer, &cur.config, &cand) && cand.validate_for(task).is_ok();
            let record = match evaluate_batch(&cand, &batch, &ctx) {
                Ok(r) => r,
                Err(e) => {
                    log.emit(&Event::EvalFailure {
                        iter,
                        layer,
                        config_id: cand_id,
                        error: e.to_string(),
                    })?;
                    continue;
                }
            };
            let accepted = frozen_ok && accept(layer, &cur.summary.metrics, &record.summary.metrics, &tol);
            let cand_seq = next_seq();
            log.emit(&Event::Decision {
                iter,
                layer,
                parent_id: cur.id.clone(),
                candidate_id: cand_id.clone(),
                frozen_ok,
                accepted,
                parent: cur.summary.metrics,
                candidate: record.summary.metrics,
                candidate_summary: record.summary.clone(),
                seq: cand_seq,
            })?;
            if !frozen_ok {
                continue;
            }
            records.push(Evaluated {
                id: cand_id,
                config: cand,
                summary: record.summary,
                seq: cand_seq,
            });
            if accepted {
                current = records.len() - 1;
            }
        }

        if current != 0 {
            let fin = &records[current];
            let update = population.insert(Member {
                id: fin.id.clone(),
                config: fin.config.clone(),
                summary: fin.summary.clone(),
                seq: fin.seq,
            });
            log.emit(&Event::PopulationUpdate {
                iter,
                config_id: fin.id.clone(),
                inserted: update.inserted,
                evicted: update.evicted,
                members: population.members.iter().map(|m| m.id.clone()).collect(),
            })?;
        }
        for rec in &records {
            offer_all(&mut archives, rec, iter, &mut log)?;
        }
    }

    log.emit(&Event::End {
        iterations: cfg.iterations,
        population: population.members.iter().map(|m| m.id.clone()).collect(),
        archives: archives
            .iter()
            .map(|a| a.entries.iter().map(|e| e.id.clone()).collect())
            .collect(),
        provider_failures,
        proposals,
        timestamp: unix_now(),
        wall_s: started.elapsed().as_secs_f64(),
    })?;
    Ok(EvolutionOutcome {
        population,
        archives,
        seed_config,
        seed_summary: init.summary,
        iterations: cfg.iterations,
        proposals,
        provider_failures,
    })
}
