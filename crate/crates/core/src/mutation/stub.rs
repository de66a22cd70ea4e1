//! Deterministic offline provider with fixed factor sets.
//!
//! MDL: one θ field per proposal: knn_k ±{2,4}, scan toggle, kick strength
//! ±1, or one guidance float ×{0.8,1.25}. ACO and GOA mechanisms get the
//! analogous moves (rates ×{0.8,1.25}, n_ants ±{2,4}, deposit or rule toggle).
//! MCL: [`canonicalize`].
//! SSL1: time_limit ×{0.8,0.9}, loop_max and max_no_improve ×0.8, rounded up.
//! SSL2: max_no_improve ×{1.25,1.5} rounded up, or perturbation period ±{1,2};
//! time_limit is never raised.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{admit, Layer, MutationError, MutationProvider, MutationRequest, MutationResponse};
use crate::seed;
use crate::solvers::{bounds, AcoMechanism, BinRule, DepositRule, GlsMechanism, GoaMechanism, Mechanism, Scan, Schedule, SolverConfig};

const STEPS: [i64; 4] = [-4, -2, 2, 4];
const SCALE: [f64; 2] = [0.8, 1.25];
const SHRINK_TIME: [f64; 2] = [0.8, 0.9];
const SHRINK_COUNT: f64 = 0.8;
const RAISE_STAGNATION: [f64; 2] = [1.25, 1.5];
const PERIOD_STEPS: [i64; 4] = [-2, -1, 1, 2];
/// Float fields are snapped to this grid.
const GRID: f64 = 1e-6;
/// Guidance whose penalty weight rounds to zero at two decimals is inert.
const WEIGHT_ZERO: f64 = 0.005;

#[derive(Debug, Clone, Copy, Default)]
pub struct StubProvider;

impl MutationProvider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn propose(&self, request: &MutationRequest) -> Result<MutationResponse, MutationError> {
        request
            .parent
            .validate_for(request.task)
            .map_err(|e| MutationError::InvalidParent(e.to_string()))?;
        let mut rng = seed::rng(seed::derive(request.seed, "stub", request.layer.index()));
        let mut cand = request.parent.clone();
        let note = match request.layer {
            Layer::Mdl => discover(&mut cand.mechanism, &mut rng),
            Layer::Mcl => {
                cand.mechanism = canonicalize(&cand.mechanism);
                "canonicalize".to_string()
            }
            Layer::Ssl1 => compress(&mut cand.schedule, &mut rng),
            Layer::Ssl2 => enhance(&mut cand.schedule, &mut rng),
        };
        admit(request, &cand)?;
        Ok(MutationResponse { candidate: cand, note })
    }
}

fn snap(x: f64) -> f64 {
    let y = (x / GRID).round() * GRID;
    // strip the binary noise of the grid product
    format!("{y:.6}").parse().expect("formatted float parses")
}

fn clamp_f(x: f64, (lo, hi): (f64, f64)) -> f64 {
    snap(x).clamp(lo, hi)
}

fn step_usize(x: usize, d: i64, (lo, hi): (usize, usize)) -> usize {
    (x as i64 + d).clamp(lo as i64, hi as i64) as usize
}

fn discover(mech: &mut Mechanism, rng: &mut ChaCha8Rng) -> String {
    match mech {
        Mechanism::Gls(g) => discover_gls(g, rng),
        Mechanism::Aco(a) => discover_aco(a, rng),
        Mechanism::Goa(g) => discover_goa(g, rng),
    }
}

fn discover_gls(g: &mut GlsMechanism, rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..6) {
        0 => {
            let d = *STEPS.choose(rng).expect("non-empty");
            g.knn_k = step_usize(g.knn_k, d, bounds::KNN_K);
            format!("knn_k {d:+}")
        }
        1 => {
            g.local_improvement.scan = match g.local_improvement.scan {
                Scan::First => Scan::Best,
                Scan::Best => Scan::First,
            };
            "toggle scan".to_string()
        }
        2 => {
            let d = if rng.random_bool(0.5) { 1 } else { -1 };
            let (lo, hi) = bounds::KICK_STRENGTH;
            g.perturbation.kick_strength = (g.perturbation.kick_strength as i64 + d).clamp(lo as i64, hi as i64) as u32;
            format!("kick_strength {d:+}")
        }
        k => {
            let f = *SCALE.choose(rng).expect("non-empty");
            let gd = &mut g.guidance;
            let (name, slot, b) = match k {
                3 => ("gls_lambda", &mut gd.gls_lambda, bounds::GLS_LAMBDA),
                4 => ("weight", &mut gd.weight, bounds::WEIGHT),
                _ => ("lam", &mut gd.lam, bounds::LAM),
            };
            *slot = clamp_f(*slot * f, b);
            format!("{name} x{f}")
        }
    }
}

fn discover_aco(a: &mut AcoMechanism, rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..5) {
        0 => {
            let d = *STEPS.choose(rng).expect("non-empty");
            a.n_ants = step_usize(a.n_ants, d, bounds::N_ANTS);
            format!("n_ants {d:+}")
        }
        1 => {
            a.deposit = match a.deposit {
                DepositRule::IterationBest => DepositRule::BestSoFar,
                DepositRule::BestSoFar => DepositRule::IterationBest,
            };
            "toggle deposit".to_string()
        }
        k => {
            let f = *SCALE.choose(rng).expect("non-empty");
            let (name, slot, b) = match k {
                2 => ("alpha", &mut a.alpha, bounds::ALPHA),
                3 => ("beta", &mut a.beta, bounds::BETA),
                _ => ("rho", &mut a.rho, bounds::RHO),
            };
            *slot = clamp_f(*slot * f, b);
            format!("{name} x{f}")
        }
    }
}

fn discover_goa(g: &mut GoaMechanism, rng: &mut ChaCha8Rng) -> String {
    match g.bin_rule {
        BinRule::BestFit => {
            g.bin_rule = BinRule::FirstFit;
            "first_fit".to_string()
        }
        BinRule::FirstFit => {
            g.bin_rule = BinRule::Scored {
                exponent: 1.0,
                open_threshold: 1.0,
            };
            "scored".to_string()
        }
        BinRule::Scored {
            exponent,
            open_threshold,
        } => {
            let f = *SCALE.choose(rng).expect("non-empty");
            if rng.random_bool(0.5) {
                g.bin_rule = BinRule::Scored {
                    exponent: clamp_f(exponent * f, bounds::EXPONENT),
                    open_threshold,
                };
                format!("exponent x{f}")
            } else {
                g.bin_rule = BinRule::Scored {
                    exponent,
                    open_threshold: clamp_f(open_threshold * f, bounds::OPEN_THRESHOLD),
                };
                format!("open_threshold x{f}")
            }
        }
    }
}

/// Behavior-preserving normal form of θ: parameters clamped to the catalog
/// bounds and snapped to a 1e-6 grid; inert guidance disabled and reset.
/// Idempotent.
pub fn canonicalize(mech: &Mechanism) -> Mechanism {
    let mut m = mech.clone();
    match &mut m {
        Mechanism::Gls(g) => {
            g.knn_k = g.knn_k.clamp(bounds::KNN_K.0, bounds::KNN_K.1);
            let (lo, hi) = bounds::KICK_STRENGTH;
            g.perturbation.kick_strength = g.perturbation.kick_strength.clamp(lo, hi);
            let gd = &mut g.guidance;
            gd.gls_lambda = clamp_f(gd.gls_lambda, bounds::GLS_LAMBDA);
            gd.weight = clamp_f(gd.weight, bounds::WEIGHT);
            gd.lam = clamp_f(gd.lam, bounds::LAM);
            gd.top_k = gd.top_k.clamp(bounds::TOP_K.0, bounds::TOP_K.1);
            if gd.weight < WEIGHT_ZERO || gd.gls_lambda == 0.0 {
                gd.enabled = false;
            }
            if !gd.enabled {
                let seed = match SolverConfig::seed(crate::problems::Task::Tsp).mechanism {
                    Mechanism::Gls(s) => s.guidance,
                    _ => unreachable!("TSP seed is GLS"),
                };
                *gd = crate::solvers::Guidance { enabled: false, ..seed };
            }
        }
        Mechanism::Aco(a) => {
            a.alpha = clamp_f(a.alpha, bounds::ALPHA);
            a.beta = clamp_f(a.beta, bounds::BETA);
            a.rho = clamp_f(a.rho, bounds::RHO);
            a.n_ants = a.n_ants.clamp(bounds::N_ANTS.0, bounds::N_ANTS.1);
        }
        Mechanism::Goa(g) => {
            if let BinRule::Scored {
                exponent,
                open_threshold,
            } = g.bin_rule
            {
                g.bin_rule = BinRule::Scored {
                    exponent: clamp_f(exponent, bounds::EXPONENT),
                    open_threshold: clamp_f(open_threshold, bounds::OPEN_THRESHOLD),
                };
            }
        }
    }
    m
}

fn shrink_count(x: u64) -> u64 {
    ((x as f64 * SHRINK_COUNT).ceil() as u64).max(1)
}

fn compress(s: &mut Schedule, rng: &mut ChaCha8Rng) -> String {
    let f = *SHRINK_TIME.choose(rng).expect("non-empty");
    s.time_limit_s = snap(s.time_limit_s * f).max(GRID);
    s.loop_max = shrink_count(s.loop_max);
    s.max_no_improve = shrink_count(s.max_no_improve);
    format!("time_limit x{f}, loop caps x{SHRINK_COUNT}")
}

fn enhance(s: &mut Schedule, rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(0.5) {
        let f = *RAISE_STAGNATION.choose(rng).expect("non-empty");
        s.max_no_improve = (s.max_no_improve as f64 * f).ceil() as u64;
        format!("max_no_improve x{f}")
    } else {
        let p = s.perturbation_trigger.period as i64;
        let options: Vec<i64> = PERIOD_STEPS.iter().copied().filter(|d| p + d >= 1).collect();
        let d = *options.choose(rng).expect("a positive step always exists");
        s.perturbation_trigger.period = (p + d) as u64;
        format!("period {d:+}")
    }
}
