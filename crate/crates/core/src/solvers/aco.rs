//! Ant colony optimization for CVRP and MKP.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::problems::{CvrpInstance, DistanceMatrix, MkpInstance, Payload, Solution};
use crate::seed;

use super::config::{AcoMechanism, DepositRule, Schedule};
use super::{Clock, ObjectiveRun, Recorder, RunOptions, SolverError, StopReason};

pub const PHEROMONE_FLOOR: f64 = 1e-12;

/// One constructed solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Ant {
    pub payload: Payload,
    pub objective: f64,
    /// Pheromone entries reinforced when this ant deposits.
    pub trail: Vec<usize>,
}

/// A problem the colony can build solutions for.
pub trait ColonyProblem {
    fn pheromone_len(&self) -> usize;
    fn initial_pheromone(&self) -> f64;
    /// The deterministic task-specific constructor.
    fn initial_payload(&self) -> Payload;
    fn initial_ant(&self) -> Ant;
    fn construct(&self, tau: &[f64], mech: &AcoMechanism, rng: &mut ChaCha8Rng, clock: &mut Clock) -> Ant;
    /// Pheromone added per trail entry for a deposit by `ant`.
    fn deposit(&self, ant: &Ant) -> f64;
}

#[inline]
fn attractiveness(tau: f64, eta_beta: f64, alpha: f64) -> f64 {
    let t = if alpha == 1.0 { tau } else { tau.powf(alpha) };
    t * eta_beta
}

/// Roulette-wheel pick over `weights`; falls back to the first entry when the
/// weights carry no usable mass.
fn roulette(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return 0;
    }
    let mut r = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if r < w {
            return i;
        }
        r -= w;
    }
    weights.len() - 1
}

pub struct CvrpColony<'a> {
    inst: &'a CvrpInstance,
    d: DistanceMatrix,
    /// Node count including the depot.
    nodes: usize,
    tau0: f64,
}

impl<'a> CvrpColony<'a> {
    pub fn new(inst: &'a CvrpInstance) -> Self {
        let d = inst.distances();
        let nodes = d.len();
        let mut colony = Self {
            inst,
            d,
            nodes,
            tau0: 1.0,
        };
        let init = colony.initial_ant();
        colony.tau0 = 1.0 / init.objective.max(f64::MIN_POSITIVE);
        colony
    }

    fn cost(&self, routes: &[Vec<usize>]) -> f64 {
        routes
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| {
                let mut prev = 0;
                let mut c = 0.0;
                for &cust in r {
                    c += self.d.get(prev, cust + 1);
                    prev = cust + 1;
                }
                c + self.d.get(prev, 0)
            })
            .sum()
    }

    fn trail(&self, routes: &[Vec<usize>]) -> Vec<usize> {
        let mut t = Vec::new();
        for r in routes {
            let mut prev = 0;
            for &c in r.iter().chain(std::iter::once(&usize::MAX)) {
                let next = if c == usize::MAX { 0 } else { c + 1 };
                t.push(prev * self.nodes + next);
                t.push(next * self.nodes + prev);
                prev = next;
            }
        }
        t
    }

    fn ant(&self, routes: Vec<Vec<usize>>) -> Ant {
        Ant {
            objective: self.cost(&routes),
            trail: self.trail(&routes),
            payload: Payload::Routes(routes),
        }
    }

    fn eta_beta(&self, i: usize, j: usize, beta: f64) -> f64 {
        let d = self.d.get(i, j).max(1e-12);
        if beta == 0.0 {
            1.0
        } else {
            d.powf(-beta)
        }
    }
}

impl ColonyProblem for CvrpColony<'_> {
    fn pheromone_len(&self) -> usize {
        self.nodes * self.nodes
    }

    fn initial_pheromone(&self) -> f64 {
        self.tau0
    }

    fn initial_payload(&self) -> Payload {
        self.initial_ant().payload
    }

    fn initial_ant(&self) -> Ant {
        // nearest feasible customer; back to the depot when none fits
        let n = self.inst.customers.len();
        let cap = self.inst.capacity;
        let mut visited = vec![false; n];
        let mut routes = vec![Vec::new()];
        let (mut cur, mut load) = (0usize, 0u32);
        for _ in 0..n {
            let next = (0..n)
                .filter(|&j| !visited[j] && load + self.inst.customers[j].demand <= cap)
                .min_by(|&a, &b| self.d.get(cur, a + 1).total_cmp(&self.d.get(cur, b + 1)).then(a.cmp(&b)));
            let j = match next {
                Some(j) => j,
                None => {
                    routes.push(Vec::new());
                    load = 0;
                    (0..n)
                        .filter(|&j| !visited[j])
                        .min_by(|&a, &b| self.d.get(0, a + 1).total_cmp(&self.d.get(0, b + 1)).then(a.cmp(&b)))
                        .expect("unvisited customer remains")
                }
            };
            visited[j] = true;
            routes.last_mut().expect("route").push(j);
            load += self.inst.customers[j].demand;
            cur = j + 1;
        }
        self.ant(routes)
    }

    fn construct(&self, tau: &[f64], mech: &AcoMechanism, rng: &mut ChaCha8Rng, clock: &mut Clock) -> Ant {
        let n = self.inst.customers.len();
        let cap = self.inst.capacity;
        let mut visited = vec![false; n];
        let mut routes = vec![Vec::new()];
        let (mut cur, mut load) = (0usize, 0u32);
        let mut cands = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            cands.clear();
            weights.clear();
            for j in 0..n {
                if !visited[j] && load + self.inst.customers[j].demand <= cap {
                    cands.push(j);
                    weights.push(attractiveness(tau[cur * self.nodes + j + 1], self.eta_beta(cur, j + 1, mech.beta), mech.alpha));
                }
            }
            clock.tick(n as u64);
            if cands.is_empty() {
                // vehicle full: return to the depot and start a new route
                routes.push(Vec::new());
                load = 0;
                for j in 0..n {
                    if !visited[j] {
                        cands.push(j);
                        weights.push(attractiveness(tau[j + 1], self.eta_beta(0, j + 1, mech.beta), mech.alpha));
                    }
                }
            }
            let j = cands[roulette(&weights, rng)];
            visited[j] = true;
            routes.last_mut().expect("route").push(j);
            load += self.inst.customers[j].demand;
            cur = j + 1;
        }
        self.ant(routes)
    }

    fn deposit(&self, ant: &Ant) -> f64 {
        1.0 / ant.objective.max(f64::MIN_POSITIVE)
    }
}

pub struct MkpColony<'a> {
    inst: &'a MkpInstance,
    eta: Vec<f64>,
    total_profit: f64,
}

impl<'a> MkpColony<'a> {
    pub fn new(inst: &'a MkpInstance) -> Self {
        let d = inst.d() as f64;
        let eta = (0..inst.n())
            .map(|i| {
                let consumption: f64 = inst
                    .weights
                    .iter()
                    .zip(&inst.capacities)
                    .map(|(row, &b)| row[i] as f64 / b as f64)
                    .sum::<f64>()
                    / d;
                inst.profits[i] as f64 / consumption.max(1e-12)
            })
            .collect();
        let total_profit = inst.profits.iter().map(|&p| p as f64).sum();
        Self { inst, eta, total_profit }
    }

    fn fits(&self, used: &[u64], i: usize) -> bool {
        self.inst
            .weights
            .iter()
            .zip(used)
            .zip(&self.inst.capacities)
            .all(|((row, &u), &b)| u + row[i] as u64 <= b)
    }

    fn take(&self, used: &mut [u64], i: usize) {
        for (row, u) in self.inst.weights.iter().zip(used.iter_mut()) {
            *u += row[i] as u64;
        }
    }

    fn ant(&self, chosen: Vec<usize>) -> Ant {
        let mut sel = vec![false; self.inst.n()];
        let mut profit = 0u64;
        for &i in &chosen {
            sel[i] = true;
            profit += self.inst.profits[i] as u64;
        }
        Ant {
            payload: Payload::Selection(sel),
            objective: -(profit as f64),
            trail: chosen,
        }
    }
}

impl ColonyProblem for MkpColony<'_> {
    fn pheromone_len(&self) -> usize {
        self.inst.n()
    }

    fn initial_pheromone(&self) -> f64 {
        1.0
    }

    fn initial_payload(&self) -> Payload {
        self.initial_ant().payload
    }

    fn initial_ant(&self) -> Ant {
        let mut order: Vec<usize> = (0..self.inst.n()).collect();
        order.sort_by(|&a, &b| self.eta[b].total_cmp(&self.eta[a]).then(a.cmp(&b)));
        let mut used = vec![0u64; self.inst.d()];
        let mut chosen = Vec::new();
        for i in order {
            if self.fits(&used, i) {
                self.take(&mut used, i);
                chosen.push(i);
            }
        }
        self.ant(chosen)
    }

    fn construct(&self, tau: &[f64], mech: &AcoMechanism, rng: &mut ChaCha8Rng, clock: &mut Clock) -> Ant {
        let n = self.inst.n();
        let mut used = vec![0u64; self.inst.d()];
        let mut taken = vec![false; n];
        let mut chosen = Vec::new();
        let mut cands = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        loop {
            cands.clear();
            weights.clear();
            for i in 0..n {
                if !taken[i] && self.fits(&used, i) {
                    cands.push(i);
                    let eb = if mech.beta == 0.0 { 1.0 } else { self.eta[i].powf(mech.beta) };
                    weights.push(attractiveness(tau[i], eb, mech.alpha));
                }
            }
            clock.tick((n * self.inst.d()) as u64);
            if cands.is_empty() {
                break;
            }
            let i = cands[roulette(&weights, rng)];
            taken[i] = true;
            self.take(&mut used, i);
            chosen.push(i);
        }
        self.ant(chosen)
    }

    fn deposit(&self, ant: &Ant) -> f64 {
        -ant.objective / self.total_profit
    }
}

/// One colony iteration: `n_ants` constructions, evaporation with a floor,
/// then a deposit by the iteration best (or by `best_so_far` when the rule
/// asks for it). Returns the constructed ants.
pub fn aco_step<P: ColonyProblem>(
    problem: &P,
    pheromone: &mut [f64],
    mech: &AcoMechanism,
    best_so_far: Option<&Ant>,
    rng: &mut ChaCha8Rng,
    clock: &mut Clock,
) -> Vec<Ant> {
    let ants: Vec<Ant> = (0..mech.n_ants)
        .map(|_| problem.construct(pheromone, mech, rng, clock))
        .collect();
    for t in pheromone.iter_mut() {
        *t = ((1.0 - mech.rho) * *t).max(PHEROMONE_FLOOR);
    }
    clock.tick(pheromone.len() as u64);
    let iter_best = ants
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one ant");
    let depositor = match (mech.deposit, best_so_far) {
        (DepositRule::BestSoFar, Some(b)) if b.objective < iter_best.objective => b,
        _ => iter_best,
    };
    let amount = problem.deposit(depositor);
    for &k in &depositor.trail {
        pheromone[k] += amount;
    }
    ants
}

pub(super) fn run<P: ColonyProblem>(
    problem: &P,
    mech: &AcoMechanism,
    sched: &Schedule,
    budget: f64,
    opts: &RunOptions,
) -> Result<ObjectiveRun, SolverError> {
    let mut clock = Clock::start(opts.clock);
    let mut rng = seed::rng(seed::derive(opts.seed, "aco", 0));
    let init = problem.initial_ant();
    clock.tick(problem.pheromone_len() as u64);
    let mut rec = Recorder::new(init.objective);
    let mut best = init;
    let mut tau = vec![problem.initial_pheromone(); problem.pheromone_len()];
    let mut no_imp = 0u64;
    let mut loops = 0u64;
    let mut stop = StopReason::LoopMax;
    for _ in 0..sched.loop_max {
        if clock.elapsed() >= budget {
            stop = StopReason::TimeLimit;
            break;
        }
        if no_imp >= sched.max_no_improve {
            stop = StopReason::Stagnation;
            break;
        }
        loops += 1;
        let ants = aco_step(problem, &mut tau, mech, Some(&best), &mut rng, &mut clock);
        let it_best = ants
            .into_iter()
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
            .expect("at least one ant");
        if it_best.objective < best.objective - 1e-9 * best.objective.abs().max(1.0) {
            best = it_best;
            rec.improve(clock.elapsed(), best.objective);
            no_imp = 0;
        } else {
            no_imp += 1;
        }
    }
    let t_run = clock.elapsed();
    let solution = Solution {
        payload: best.payload,
        objective: best.objective,
    };
    Ok(rec.finish(solution, t_run, loops, stop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{evaluate, generate, oracle_optimum, CvrpParams, GenParams, Instance, MkpParams};
    use crate::solvers::config::HeuristicRule;
    use crate::solvers::ClockMode;

    fn mech(h: HeuristicRule) -> AcoMechanism {
        AcoMechanism {
            alpha: 1.0,
            beta: 2.0,
            rho: 0.1,
            n_ants: 20,
            deposit: DepositRule::IterationBest,
            heuristic: h,
        }
    }

    #[test]
    fn untouched_pheromone_halves() {
        let Instance::Mkp(m) = generate(&GenParams::Mkp(MkpParams { n: 8, m: 2 }), 1).unwrap() else {
            panic!()
        };
        let colony = MkpColony::new(&m);
        let mut mech = mech(HeuristicRule::ProfitDensity);
        mech.rho = 0.5;
        let mut tau = vec![1.0; 8];
        let mut rng = seed::rng(0);
        let mut clock = Clock::start(ClockMode::work());
        let ants = aco_step(&colony, &mut tau, &mech, None, &mut rng, &mut clock);
        let best = ants.iter().min_by(|a, b| a.objective.total_cmp(&b.objective)).unwrap();
        for (i, &t) in tau.iter().enumerate() {
            if !best.trail.contains(&i) {
                assert_eq!(t, 0.5);
            } else {
                assert!(t > 0.5);
            }
        }
    }

    #[test]
    fn dominant_item_always_chosen() {
        let m = MkpInstance {
            profits: vec![100, 1, 1, 1],
            weights: vec![vec![10, 4, 4, 4]],
            capacities: vec![11],
            reference_optimum: None,
        };
        let colony = MkpColony::new(&m);
        let mut mech = mech(HeuristicRule::ProfitDensity);
        mech.beta = 10.0;
        let tau = vec![1.0; 4];
        let mut rng = seed::rng(3);
        let mut clock = Clock::start(ClockMode::work());
        for _ in 0..50 {
            let ant = colony.construct(&tau, &mech, &mut rng, &mut clock);
            assert!(ant.trail.contains(&0));
        }
    }

    #[test]
    fn small_mkp_reaches_oracle() {
        let inst = generate(&GenParams::Mkp(MkpParams { n: 8, m: 3 }), 4).unwrap();
        let Instance::Mkp(m) = &inst else { panic!() };
        let colony = MkpColony::new(m);
        let mut sched = Schedule::default_for(crate::problems::Task::Mkp);
        sched.loop_max = 200;
        sched.max_no_improve = 200;
        let opts = RunOptions {
            horizon: 10.0,
            seed: 1,
            clock: ClockMode::work(),
        };
        let r = run(&colony, &mech(HeuristicRule::ProfitDensity), &sched, 10.0, &opts).unwrap();
        assert_eq!(r.solution.objective, oracle_optimum(&inst).unwrap());
    }

    #[test]
    fn cvrp_ants_are_feasible() {
        let inst = generate(&GenParams::Cvrp(CvrpParams { n: 30 }), 2).unwrap();
        let Instance::Cvrp(c) = &inst else { panic!() };
        let colony = CvrpColony::new(c);
        let tau = vec![colony.initial_pheromone(); colony.pheromone_len()];
        let mut rng = seed::rng(1);
        let mut clock = Clock::start(ClockMode::work());
        for _ in 0..10 {
            let ant = colony.construct(&tau, &mech(HeuristicRule::InverseDistance), &mut rng, &mut clock);
            let v = evaluate(&inst, &ant.payload).unwrap();
            assert!((v.objective().unwrap() - ant.objective).abs() < 1e-9);
        }
        let init = colony.initial_ant();
        assert!(evaluate(&inst, &init.payload).unwrap().objective().is_some());
    }
}
