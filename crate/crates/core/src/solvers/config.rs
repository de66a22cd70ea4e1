//! Serializable solver configurations: mechanism θ plus schedule σ.

use serde::{Deserialize, Serialize};

use crate::problems::Task;

use super::SolverError;

/// Catalog bounds shared by validation and canonicalization.
pub mod bounds {
    pub const KNN_K: (usize, usize) = (2, 50);
    pub const TOP_K: (usize, usize) = (1, 32);
    pub const GLS_LAMBDA: (f64, f64) = (0.0, 10.0);
    pub const WEIGHT: (f64, f64) = (0.0, 10.0);
    pub const LAM: (f64, f64) = (0.0, 4.0);
    pub const KICK_STRENGTH: (u32, u32) = (1, 10);
    pub const ALPHA: (f64, f64) = (0.0, 5.0);
    pub const BETA: (f64, f64) = (0.0, 10.0);
    pub const RHO: (f64, f64) = (0.01, 0.99);
    pub const N_ANTS: (usize, usize) = (1, 200);
    pub const EXPONENT: (f64, f64) = (0.0, 4.0);
    pub const OPEN_THRESHOLD: (f64, f64) = (0.0, 1.0);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveOperator {
    #[serde(rename = "2opt")]
    TwoOpt,
    #[serde(rename = "or-opt")]
    OrOpt,
    #[serde(rename = "2opt+or-opt")]
    TwoOptOrOpt,
}

impl MoveOperator {
    pub fn uses_two_opt(self) -> bool {
        matches!(self, MoveOperator::TwoOpt | MoveOperator::TwoOptOrOpt)
    }

    pub fn uses_or_opt(self) -> bool {
        matches!(self, MoveOperator::OrOpt | MoveOperator::TwoOptOrOpt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scan {
    First,
    Best,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalImprovement {
    pub operator: MoveOperator,
    pub scan: Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceRule {
    ImproveOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub rule: AcceptanceRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceRule {
    /// Utility `d·(d/μ)^lam / (1+p)`; augmented cost `d + gls_lambda·μ·p`.
    EdgeUtility,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guidance {
    pub enabled: bool,
    #[serde(default = "default_guidance_rule")]
    pub rule: GuidanceRule,
    pub top_k: usize,
    pub gls_lambda: f64,
    /// Penalty increment per selected edge.
    pub weight: f64,
    pub lam: f64,
}

fn default_guidance_rule() -> GuidanceRule {
    GuidanceRule::EdgeUtility
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbOperator {
    #[serde(rename = "2opt_kick")]
    TwoOptKick,
    #[serde(rename = "double_bridge")]
    DoubleBridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub operator: PerturbOperator,
    pub kick_strength: u32,
}

/// GLS/ILS mechanism for TSP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlsMechanism {
    pub knn_k: usize,
    pub local_improvement: LocalImprovement,
    pub acceptance: Acceptance,
    pub guidance: Guidance,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepositRule {
    IterationBest,
    BestSoFar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicRule {
    /// CVRP: `η = 1/d`.
    InverseDistance,
    /// MKP: `η = p_i / mean_j(a_ij / b_j)`.
    ProfitDensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcoMechanism {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub n_ants: usize,
    pub deposit: DepositRule,
    pub heuristic: HeuristicRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BinRule {
    BestFit,
    FirstFit,
    /// Picks the feasible bin minimizing `(residual_after / C)^exponent`
    /// minus a small load preference; opens a new bin when even the best
    /// candidate would leave more than `open_threshold · C` unused.
    Scored { exponent: f64, open_threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoaMechanism {
    pub bin_rule: BinRule,
}

/// Mechanism θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backbone", rename_all = "snake_case")]
pub enum Mechanism {
    Gls(GlsMechanism),
    Aco(AcoMechanism),
    Goa(GoaMechanism),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    /// Fire when `no_improve > 0 && no_improve % period == 0`.
    StagnationMod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTrigger {
    pub mode: TriggerMode,
    pub period: u64,
}

/// Schedule σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub time_limit_s: f64,
    pub loop_max: u64,
    pub max_no_improve: u64,
    /// Guided descents between penalty updates.
    pub guidance_update_every: u64,
    pub perturbation_trigger: PerturbationTrigger,
    /// Phase cap: guided descents per outer loop.
    pub local_search_rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mechanism: Mechanism,
    pub schedule: Schedule,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), SolverError> {
    if ok {
        Ok(())
    } else {
        Err(SolverError::InvalidConfig(msg()))
    }
}

fn in_range<T: PartialOrd + Copy + std::fmt::Display>(name: &str, v: T, (lo, hi): (T, T)) -> Result<(), SolverError> {
    check(v >= lo && v <= hi, || format!("{name}={v} outside [{lo}, {hi}]"))
}

fn finite_in(name: &str, v: f64, b: (f64, f64)) -> Result<(), SolverError> {
    check(v.is_finite(), || format!("{name} must be finite"))?;
    in_range(name, v, b)
}

impl Mechanism {
    pub fn backbone(&self) -> &'static str {
        match self {
            Mechanism::Gls(_) => "gls",
            Mechanism::Aco(_) => "aco",
            Mechanism::Goa(_) => "goa",
        }
    }

    pub fn supports(&self, task: Task) -> bool {
        match self {
            Mechanism::Gls(_) => task == Task::Tsp,
            Mechanism::Aco(a) => match a.heuristic {
                HeuristicRule::InverseDistance => task == Task::Cvrp,
                HeuristicRule::ProfitDensity => task == Task::Mkp,
            },
            Mechanism::Goa(_) => task == Task::Bpp,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        match self {
            Mechanism::Gls(g) => {
                in_range("knn_k", g.knn_k, bounds::KNN_K)?;
                in_range("kick_strength", g.perturbation.kick_strength, bounds::KICK_STRENGTH)?;
                let gd = &g.guidance;
                if gd.enabled {
                    in_range("top_k", gd.top_k, bounds::TOP_K)?;
                }
                finite_in("gls_lambda", gd.gls_lambda, bounds::GLS_LAMBDA)?;
                finite_in("weight", gd.weight, bounds::WEIGHT)?;
                finite_in("lam", gd.lam, bounds::LAM)?;
            }
            Mechanism::Aco(a) => {
                finite_in("alpha", a.alpha, bounds::ALPHA)?;
                finite_in("beta", a.beta, bounds::BETA)?;
                finite_in("rho", a.rho, bounds::RHO)?;
                in_range("n_ants", a.n_ants, bounds::N_ANTS)?;
            }
            Mechanism::Goa(g) => {
                if let BinRule::Scored { exponent, open_threshold } = g.bin_rule {
                    finite_in("exponent", exponent, bounds::EXPONENT)?;
                    finite_in("open_threshold", open_threshold, bounds::OPEN_THRESHOLD)?;
                }
            }
        }
        Ok(())
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<(), SolverError> {
        check(self.time_limit_s.is_finite() && self.time_limit_s > 0.0, || {
            format!("time_limit_s={} must be positive", self.time_limit_s)
        })?;
        check(self.loop_max >= 1, || "loop_max must be >= 1".into())?;
        check(self.max_no_improve >= 1, || "max_no_improve must be >= 1".into())?;
        check(self.guidance_update_every >= 1, || "guidance_update_every must be >= 1".into())?;
        check(self.perturbation_trigger.period >= 1, || "perturbation period must be >= 1".into())?;
        check(self.local_search_rounds >= 1, || "local_search_rounds must be >= 1".into())
    }

    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Tsp => Schedule {
                time_limit_s: 10.0,
                loop_max: 10_000,
                max_no_improve: 200,
                guidance_update_every: 1,
                perturbation_trigger: PerturbationTrigger {
                    mode: TriggerMode::StagnationMod,
                    period: 10,
                },
                local_search_rounds: 20,
            },
            Task::Cvrp | Task::Mkp => Schedule {
                time_limit_s: 10.0,
                loop_max: 100_000,
                max_no_improve: 500,
                guidance_update_every: 1,
                perturbation_trigger: PerturbationTrigger {
                    mode: TriggerMode::StagnationMod,
                    period: 1,
                },
                local_search_rounds: 1,
            },
            Task::Bpp => Schedule {
                time_limit_s: 10.0,
                loop_max: 1,
                max_no_improve: 1,
                guidance_update_every: 1,
                perturbation_trigger: PerturbationTrigger {
                    mode: TriggerMode::StagnationMod,
                    period: 1,
                },
                local_search_rounds: 1,
            },
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        self.mechanism.validate()?;
        self.schedule.validate()
    }

    pub fn validate_for(&self, task: Task) -> Result<(), SolverError> {
        if !self.mechanism.supports(task) {
            return Err(SolverError::TaskMismatch {
                backbone: self.mechanism.backbone(),
                task,
            });
        }
        self.validate()
    }

    /// The fixed starting solver per task.
    pub fn seed(task: Task) -> Self {
        let mechanism = match task {
            Task::Tsp => Mechanism::Gls(GlsMechanism {
                knn_k: 10,
                local_improvement: LocalImprovement {
                    operator: MoveOperator::TwoOpt,
                    scan: Scan::First,
                },
                acceptance: Acceptance {
                    rule: AcceptanceRule::ImproveOnly,
                },
                guidance: Guidance {
                    enabled: true,
                    rule: GuidanceRule::EdgeUtility,
                    top_k: 2,
                    gls_lambda: 0.3,
                    weight: 1.0,
                    lam: 0.0,
                },
                perturbation: Perturbation {
                    operator: PerturbOperator::TwoOptKick,
                    kick_strength: 1,
                },
            }),
            Task::Cvrp => Mechanism::Aco(AcoMechanism {
                alpha: 1.0,
                beta: 2.0,
                rho: 0.1,
                n_ants: 20,
                deposit: DepositRule::IterationBest,
                heuristic: HeuristicRule::InverseDistance,
            }),
            Task::Mkp => Mechanism::Aco(AcoMechanism {
                alpha: 1.0,
                beta: 2.0,
                rho: 0.1,
                n_ants: 20,
                deposit: DepositRule::IterationBest,
                heuristic: HeuristicRule::ProfitDensity,
            }),
            Task::Bpp => Mechanism::Goa(GoaMechanism {
                bin_rule: BinRule::BestFit,
            }),
        };
        SolverConfig {
            mechanism,
            schedule: Schedule::default_for(task),
        }
    }

    /// Iterated local search: the GLS skeleton without guidance and with
    /// double-bridge kicks after every non-improving loop.
    pub fn ils() -> Self {
        let mut cfg = Self::seed(Task::Tsp);
        if let Mechanism::Gls(g) = &mut cfg.mechanism {
            g.guidance.enabled = false;
            g.local_improvement.operator = MoveOperator::TwoOptOrOpt;
            g.perturbation.operator = PerturbOperator::DoubleBridge;
        }
        cfg.schedule.perturbation_trigger.period = 1;
        cfg.schedule.max_no_improve = 1_000_000;
        cfg.schedule.loop_max = u64::MAX / 2;
        cfg
    }

    /// The published specialist for the 280-node drilling instance.
    pub fn a280_specialist() -> Self {
        let mut cfg = Self::seed(Task::Tsp);
        cfg.mechanism = Mechanism::Gls(GlsMechanism {
            knn_k: 16,
            local_improvement: LocalImprovement {
                operator: MoveOperator::TwoOpt,
                scan: Scan::First,
            },
            acceptance: Acceptance {
                rule: AcceptanceRule::ImproveOnly,
            },
            guidance: Guidance {
                enabled: true,
                rule: GuidanceRule::EdgeUtility,
                top_k: 4,
                gls_lambda: 1.2,
                weight: 1.0,
                lam: 0.5,
            },
            perturbation: Perturbation {
                operator: PerturbOperator::TwoOptKick,
                kick_strength: 1,
            },
        });
        cfg.schedule.time_limit_s = 4.0;
        cfg.schedule.loop_max = 150;
        cfg.schedule.max_no_improve = 30;
        cfg
    }

    pub fn gls(&self) -> Option<&GlsMechanism> {
        match &self.mechanism {
            Mechanism::Gls(g) => Some(g),
            _ => None,
        }
    }

    /// Stable identifier: SHA-256 of the canonical JSON, first 16 hex digits.
    pub fn id(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_validate_for_their_task() {
        for task in [Task::Tsp, Task::Cvrp, Task::Bpp, Task::Mkp] {
            SolverConfig::seed(task).validate_for(task).unwrap();
        }
        SolverConfig::ils().validate_for(Task::Tsp).unwrap();
        SolverConfig::a280_specialist().validate_for(Task::Tsp).unwrap();
        assert!(SolverConfig::seed(Task::Mkp).validate_for(Task::Cvrp).is_err());
    }

    #[test]
    fn json_uses_listing_names() {
        let v = serde_json::to_value(SolverConfig::a280_specialist()).unwrap();
        let m = &v["mechanism"];
        assert_eq!(m["backbone"], "gls");
        assert_eq!(m["knn_k"], 16);
        assert_eq!(m["local_improvement"]["operator"], "2opt");
        assert_eq!(m["guidance"]["top_k"], 4);
        assert_eq!(m["guidance"]["gls_lambda"], 1.2);
        assert_eq!(m["guidance"]["weight"], 1.0);
        assert_eq!(m["guidance"]["lam"], 0.5);
        assert_eq!(m["perturbation"]["operator"], "2opt_kick");
        assert_eq!(m["perturbation"]["kick_strength"], 1);
        let s = &v["schedule"];
        assert_eq!(s["time_limit_s"], 4.0);
        assert_eq!(s["loop_max"], 150);
        assert_eq!(s["max_no_improve"], 30);
        let back: SolverConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, SolverConfig::a280_specialist());
    }

    #[test]
    fn invariants_enforced() {
        let mut c = SolverConfig::seed(Task::Tsp);
        if let Mechanism::Gls(g) = &mut c.mechanism {
            g.knn_k = 1;
        }
        assert!(c.validate().is_err());
        let mut c = SolverConfig::seed(Task::Cvrp);
        if let Mechanism::Aco(a) = &mut c.mechanism {
            a.rho = 1.0;
        }
        assert!(c.validate().is_err());
        let mut c = SolverConfig::seed(Task::Bpp);
        c.schedule.time_limit_s = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn id_tracks_content() {
        let a = SolverConfig::seed(Task::Tsp);
        let mut b = a.clone();
        assert_eq!(a.id(), b.id());
        b.schedule.loop_max += 1;
        assert_ne!(a.id(), b.id());
        assert_eq!(a.id().len(), 16);
    }
}
