//! Guided local search for TSP (ILS when guidance is off).

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::problems::{DistanceMatrix, Payload, Solution, TspInstance};
use crate::seed;

use super::config::{GlsMechanism, Guidance, MoveOperator, PerturbOperator, Scan, Schedule};
use super::{Clock, ObjectiveRun, Recorder, RunOptions, SolverError, StopReason};

/// Dense symmetric edge penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalties {
    n: usize,
    p: Vec<f64>,
}

impl Penalties {
    pub fn new(n: usize) -> Self {
        Self { n, p: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn add(&mut self, i: usize, j: usize, w: f64) {
        self.p[i * self.n + j] += w;
        self.p[j * self.n + i] += w;
    }
}

/// Greedy nearest-neighbor tour from `start`; ties go to the lower index.
pub fn nearest_neighbor_tour(d: &DistanceMatrix, start: usize) -> Vec<usize> {
    let n = d.len();
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    tour.push(cur);
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut best = f64::INFINITY;
        for (j, &v) in visited.iter().enumerate() {
            if !v && d.get(cur, j) < best {
                best = d.get(cur, j);
                next = j;
            }
        }
        visited[next] = true;
        tour.push(next);
        cur = next;
    }
    tour
}

/// Penalizes the `top_k` tour edges of highest utility
/// `u = d·(d/μ)^lam / (1 + p)` by `weight`. Returns the penalized edges.
pub fn gls_guidance_update(
    tour: &[usize],
    d: &DistanceMatrix,
    penalties: &mut Penalties,
    guidance: &Guidance,
    mu: f64,
) -> Vec<(usize, usize)> {
    let n = tour.len();
    let mut util: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let (a, b) = (tour[i], tour[(i + 1) % n]);
            let len = d.get(a, b);
            let shape = if guidance.lam == 0.0 || mu <= 0.0 {
                1.0
            } else {
                (len / mu).powf(guidance.lam)
            };
            (len * shape / (1.0 + penalties.get(a, b)), i)
        })
        .collect();
    util.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    util.iter()
        .take(guidance.top_k.min(n))
        .map(|&(_, i)| {
            let (a, b) = (tour[i], tour[(i + 1) % n]);
            penalties.add(a, b, guidance.weight);
            (a, b)
        })
        .collect()
}

fn knn_lists(d: &DistanceMatrix, k: usize) -> Vec<Vec<usize>> {
    let n = d.len();
    let k = k.min(n - 1);
    (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Move {
    /// Reverse the tour between positions `from` and `to` (inclusive, forward).
    Reverse { from: usize, to: usize },
    /// Move the `len` nodes starting at position `start` after node `after`.
    Relocate { start: usize, len: usize, after: usize, reversed: bool },
}

/// `(augmented gain, true length delta, move, nodes to re-activate)`.
type Candidate = (f64, f64, Move, [usize; 6]);

struct Search<'a> {
    n: usize,
    d: &'a DistanceMatrix,
    knn: Vec<Vec<usize>>,
    pen: Penalties,
    lam_eff: f64,
    operator: MoveOperator,
    scan: Scan,
    tour: Vec<usize>,
    pos: Vec<usize>,
    cur_len: f64,
    queue: VecDeque<usize>,
    queued: Vec<bool>,
    tol: f64,
}

impl<'a> Search<'a> {
    #[inline]
    fn aug(&self, i: usize, j: usize) -> f64 {
        self.d.get(i, j) + self.lam_eff * self.pen.get(i, j)
    }

    #[inline]
    fn succ(&self, v: usize) -> usize {
        self.tour[(self.pos[v] + 1) % self.n]
    }

    #[inline]
    fn pred(&self, v: usize) -> usize {
        self.tour[(self.pos[v] + self.n - 1) % self.n]
    }

    fn activate(&mut self, v: usize) {
        if !self.queued[v] {
            self.queued[v] = true;
            self.queue.push_back(v);
        }
    }

    fn activate_all(&mut self) {
        for i in 0..self.n {
            let v = self.tour[i];
            self.activate(v);
        }
    }

    fn set_tour(&mut self, tour: &[usize]) {
        self.tour.copy_from_slice(tour);
        for (i, &v) in self.tour.iter().enumerate() {
            self.pos[v] = i;
        }
    }

    fn true_length(&self) -> f64 {
        self.d.tour_length(&self.tour)
    }

    fn reverse(&mut self, from: usize, to: usize, clock: &mut Clock) {
        let n = self.n;
        let len = (to + n - from) % n + 1;
        let (mut i, mut j, steps) = if 2 * len <= n {
            (from, to, len / 2)
        } else {
            ((to + 1) % n, (from + n - 1) % n, (n - len) / 2)
        };
        clock.tick(steps as u64 + 1);
        for _ in 0..steps {
            self.tour.swap(i, j);
            self.pos[self.tour[i]] = i;
            self.pos[self.tour[j]] = j;
            i = (i + 1) % n;
            j = (j + n - 1) % n;
        }
    }

    fn relocate(&mut self, start: usize, len: usize, after: usize, reversed: bool, clock: &mut Clock) {
        let n = self.n;
        clock.tick(n as u64);
        let mut seg: Vec<usize> = (0..len).map(|k| self.tour[(start + k) % n]).collect();
        if reversed {
            seg.reverse();
        }
        let mut next = Vec::with_capacity(n);
        for k in 0..(n - len) {
            let v = self.tour[(start + len + k) % n];
            next.push(v);
            if v == after {
                next.extend_from_slice(&seg);
            }
        }
        self.set_tour(&next);
    }

    /// Improving moves starting at node `a`, as `(gain, true_delta, move, touched)`.
    fn scan_node(&self, a: usize, clock: &mut Clock) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        let first = self.scan == Scan::First;
        let tol = self.tol;
        let d = self.d;
        let consider = |best: &mut Option<Candidate>, cand: Candidate| -> bool {
            if cand.0 > tol && best.as_ref().is_none_or(|b| cand.0 > b.0) {
                *best = Some(cand);
            }
            first && best.is_some()
        };
        if self.operator.uses_two_opt() {
            // successor side: remove (a,b),(c,e); add (a,c),(b,e)
            let b = self.succ(a);
            let g1 = self.aug(a, b);
            for &c in &self.knn[a] {
                clock.tick(1);
                if d.get(a, c) >= g1 {
                    break;
                }
                let e = self.succ(c);
                if c == b || e == a {
                    continue;
                }
                let gain = g1 + self.aug(c, e) - self.aug(a, c) - self.aug(b, e);
                let delta = d.get(a, c) + d.get(b, e) - d.get(a, b) - d.get(c, e);
                let mv = Move::Reverse {
                    from: self.pos[b],
                    to: self.pos[c],
                };
                if consider(&mut best, (gain, delta, mv, [a, b, c, e, a, a])) {
                    return best;
                }
            }
            // predecessor side: remove (b,a),(e,c); add (a,c),(b,e)
            let b = self.pred(a);
            let g1 = self.aug(b, a);
            for &c in &self.knn[a] {
                clock.tick(1);
                if d.get(a, c) >= g1 {
                    break;
                }
                let e = self.pred(c);
                if c == b || e == a {
                    continue;
                }
                let gain = g1 + self.aug(e, c) - self.aug(a, c) - self.aug(b, e);
                let delta = d.get(a, c) + d.get(b, e) - d.get(b, a) - d.get(e, c);
                let mv = Move::Reverse {
                    from: self.pos[a],
                    to: self.pos[e],
                };
                if consider(&mut best, (gain, delta, mv, [a, b, c, e, a, a])) {
                    return best;
                }
            }
        }
        if self.operator.uses_or_opt() {
            let n = self.n;
            for len in 1..=3usize {
                if n < len + 3 {
                    break;
                }
                let start = self.pos[a];
                let e = self.tour[(start + len - 1) % n];
                let p = self.pred(a);
                let nx = self.succ(e);
                let removal = self.aug(p, a) + self.aug(e, nx) - self.aug(p, nx);
                let removal_true = d.get(p, a) + d.get(e, nx) - d.get(p, nx);
                if removal <= self.tol {
                    continue;
                }
                let in_seg = |v: usize| (self.pos[v] + n - start) % n < len;
                for (end, other) in [(a, e), (e, a)] {
                    for &c in &self.knn[end] {
                        clock.tick(1);
                        if d.get(end, c) >= removal {
                            break;
                        }
                        if in_seg(c) {
                            continue;
                        }
                        // insert between c and succ(c) with `end` next to c
                        if c != p {
                            let c2 = self.succ(c);
                            let add = self.aug(c, end) + self.aug(other, c2) - self.aug(c, c2);
                            let add_true = d.get(c, end) + d.get(other, c2) - d.get(c, c2);
                            let mv = Move::Relocate {
                                start,
                                len,
                                after: c,
                                reversed: end == e,
                            };
                            if consider(&mut best, (removal - add, add_true - removal_true, mv, [p, nx, a, e, c, c2])) {
                                return best;
                            }
                        }
                        // insert between pred(c) and c with `end` next to c
                        if c != nx {
                            let c1 = self.pred(c);
                            let add = self.aug(c1, other) + self.aug(end, c) - self.aug(c1, c);
                            let add_true = d.get(c1, other) + d.get(end, c) - d.get(c1, c);
                            let mv = Move::Relocate {
                                start,
                                len,
                                after: c1,
                                reversed: end == a,
                            };
                            if consider(&mut best, (removal - add, add_true - removal_true, mv, [p, nx, a, e, c1, c])) {
                                return best;
                            }
                        }
                    }
                }
            }
        }
        best
    }

    /// Descends on the augmented cost until no active node improves or the budget expires.
    fn descent(&mut self, clock: &mut Clock, budget: f64) {
        let mut pops = 0u32;
        while let Some(a) = self.queue.pop_front() {
            self.queued[a] = false;
            pops += 1;
            if pops.is_multiple_of(256) && clock.elapsed() >= budget {
                return;
            }
            if let Some((_, delta, mv, touched)) = self.scan_node(a, clock) {
                match mv {
                    Move::Reverse { from, to } => self.reverse(from, to, clock),
                    Move::Relocate {
                        start,
                        len,
                        after,
                        reversed,
                    } => self.relocate(start, len, after, reversed, clock),
                }
                self.cur_len += delta;
                for v in touched {
                    self.activate(v);
                }
            }
        }
    }

    fn perturb(&mut self, op: PerturbOperator, strength: u32, rng: &mut ChaCha8Rng, clock: &mut Clock) {
        let n = self.n;
        for _ in 0..strength {
            if op == PerturbOperator::DoubleBridge && n >= 8 {
                let mut cuts = [0usize; 3];
                loop {
                    for c in &mut cuts {
                        *c = rng.random_range(1..n);
                    }
                    cuts.sort_unstable();
                    if cuts[0] < cuts[1] && cuts[1] < cuts[2] {
                        break;
                    }
                }
                let [p1, p2, p3] = cuts;
                let t = &self.tour;
                let next: Vec<usize> = t[..p1]
                    .iter()
                    .chain(&t[p2..p3])
                    .chain(&t[p1..p2])
                    .chain(&t[p3..])
                    .copied()
                    .collect();
                clock.tick(n as u64);
                let ends = [0, p1 - 1, p1, p2 - 1, p2, p3 - 1, p3 % n, n - 1];
                let nodes: Vec<usize> = ends.iter().map(|&i| self.tour[i]).collect();
                self.set_tour(&next);
                for v in nodes {
                    self.activate(v);
                }
            } else {
                let mut i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n);
                if i > j {
                    std::mem::swap(&mut i, &mut j);
                }
                if i == j || j - i + 1 >= n {
                    continue;
                }
                let ends = [self.tour[(i + n - 1) % n], self.tour[i], self.tour[j], self.tour[(j + 1) % n]];
                self.reverse(i, j, clock);
                for v in ends {
                    self.activate(v);
                }
            }
        }
        self.cur_len = self.true_length();
    }
}

pub(super) fn run(
    mech: &GlsMechanism,
    sched: &Schedule,
    inst: &TspInstance,
    budget: f64,
    opts: &RunOptions,
) -> Result<ObjectiveRun, SolverError> {
    let mut clock = Clock::start(opts.clock);
    let mut rng = seed::rng(seed::derive(opts.seed, "gls", 0));
    let d = inst.distances();
    let n = d.len();
    clock.tick((n * n) as u64);
    let init = nearest_neighbor_tour(&d, 0);
    let knn = knn_lists(&d, mech.knn_k);
    clock.tick((n * n) as u64);

    let init_len = d.tour_length(&init);
    let mu = init_len / n as f64;
    let guided = mech.guidance.enabled && mech.guidance.weight > 0.0;
    let mut s = Search {
        n,
        d: &d,
        knn,
        pen: Penalties::new(n),
        lam_eff: if guided { mech.guidance.gls_lambda * mu } else { 0.0 },
        operator: mech.local_improvement.operator,
        scan: mech.local_improvement.scan,
        tour: init.clone(),
        pos: vec![0; n],
        cur_len: init_len,
        queue: VecDeque::with_capacity(n),
        queued: vec![false; n],
        tol: 1e-10 * mu.max(f64::MIN_POSITIVE),
    };
    s.set_tour(&init);
    s.activate_all();

    let mut best = init;
    let mut best_len = init_len;
    let mut rec = Recorder::new(best_len);
    let improve_tol = 1e-9 * init_len.max(f64::MIN_POSITIVE);
    let mut no_imp = 0u64;
    let mut rounds_total = 0u64;
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
        let before = best_len;
        for _ in 0..sched.local_search_rounds {
            if clock.elapsed() >= budget {
                break;
            }
            s.descent(&mut clock, budget);
            if s.cur_len < best_len - improve_tol {
                let exact = s.true_length();
                s.cur_len = exact;
                if exact < best_len - improve_tol {
                    best_len = exact;
                    best.copy_from_slice(&s.tour);
                    rec.improve(clock.elapsed(), best_len);
                }
            }
            if !guided {
                break;
            }
            rounds_total += 1;
            if rounds_total.is_multiple_of(sched.guidance_update_every) {
                let edges = gls_guidance_update(&s.tour, &d, &mut s.pen, &mech.guidance, mu);
                clock.tick(n as u64 * 2);
                for (a, b) in edges {
                    s.activate(a);
                    s.activate(b);
                }
            }
        }
        if best_len < before - improve_tol {
            no_imp = 0;
        } else {
            no_imp += 1;
        }
        // improve-only: a loop's end state survives only if it is the best
        if s.cur_len > best_len + improve_tol || s.tour != best {
            s.set_tour(&best);
            s.cur_len = best_len;
            clock.tick(n as u64);
            if guided {
                s.activate_all();
            }
        }
        let period = sched.perturbation_trigger.period;
        if no_imp > 0 && no_imp.is_multiple_of(period) {
            s.perturb(mech.perturbation.operator, mech.perturbation.kick_strength, &mut rng, &mut clock);
        }
    }
    let t_run = clock.elapsed();
    let solution = Solution {
        payload: Payload::Tour(best),
        objective: best_len,
    };
    Ok(rec.finish(solution, t_run, loops, stop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{DistanceKind, Point};
    use crate::solvers::config::GuidanceRule;
    use crate::solvers::ClockMode;

    fn guidance(top_k: usize) -> Guidance {
        Guidance {
            enabled: true,
            rule: GuidanceRule::EdgeUtility,
            top_k,
            gls_lambda: 0.3,
            weight: 1.0,
            lam: 0.0,
        }
    }

    fn line_tour() -> (Vec<usize>, DistanceMatrix) {
        // unit steps except one edge of length 2
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        ((0..5).collect(), DistanceMatrix::from_points(&pts, DistanceKind::Euclidean))
    }

    #[test]
    fn longest_edge_penalized_first() {
        let (tour, d) = line_tour();
        let mut pen = Penalties::new(5);
        let edges = gls_guidance_update(&tour, &d, &mut pen, &guidance(1), 1.0);
        // edges: 0-1 (1), 1-2 (2), 2-3 (1), 3-4 (3), 4-0 (1)
        assert_eq!(edges, vec![(3, 4)]);
        assert_eq!(pen.get(4, 3), 1.0);
    }

    #[test]
    fn top_k_counts_and_utility_drops() {
        let (tour, d) = line_tour();
        let mut pen = Penalties::new(5);
        let edges = gls_guidance_update(&tour, &d, &mut pen, &guidance(4), 1.0);
        assert_eq!(edges.len(), 4);
        let total: f64 = (0..5).map(|i| pen.get(tour[i], tour[(i + 1) % 5])).sum();
        assert_eq!(total, 4.0);
        let edges = gls_guidance_update(&tour, &d, &mut pen, &guidance(10), 1.0);
        assert_eq!(edges.len(), 5);
        // after one penalty the 3-length edge has utility 1.5 < 2
        let mut pen = Penalties::new(5);
        gls_guidance_update(&tour, &d, &mut pen, &guidance(1), 1.0);
        let again = gls_guidance_update(&tour, &d, &mut pen, &guidance(1), 1.0);
        assert_eq!(again, vec![(1, 2)]);
    }

    #[test]
    fn nn_tour_is_a_permutation_from_zero() {
        let pts: Vec<Point> = (0..30).map(|i| Point::new((i * 7 % 30) as f64, (i * 11 % 17) as f64)).collect();
        let d = DistanceMatrix::from_points(&pts, DistanceKind::Euclidean);
        let t = nearest_neighbor_tour(&d, 0);
        assert_eq!(t[0], 0);
        let mut s = t.clone();
        s.sort();
        assert_eq!(s, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn or_opt_and_best_scan_stay_consistent() {
        use crate::problems::{generate, GenParams, Instance, TspParams};
        use crate::solvers::config::{Mechanism, SolverConfig};
        let Instance::Tsp(t) = generate(&GenParams::Tsp(TspParams::new(80)), 2).unwrap() else {
            panic!()
        };
        for op in [MoveOperator::OrOpt, MoveOperator::TwoOptOrOpt, MoveOperator::TwoOpt] {
            for scan in [Scan::First, Scan::Best] {
                let mut cfg = SolverConfig::seed(crate::problems::Task::Tsp);
                let Mechanism::Gls(m) = &mut cfg.mechanism else { panic!() };
                m.local_improvement.operator = op;
                m.local_improvement.scan = scan;
                let opts = RunOptions {
                    horizon: 0.05,
                    seed: 1,
                    clock: ClockMode::work(),
                };
                let r = run(m, &cfg.schedule, &t, 0.05, &opts).unwrap();
                let Payload::Tour(tour) = &r.solution.payload else { panic!() };
                let len = t.distances().tour_length(tour);
                assert!((len - r.solution.objective).abs() < 1e-9);
                assert!(r.events.windows(2).all(|w| w[1].1 < w[0].1 && w[1].0 >= w[0].0));
                assert!(r.solution.objective < r.events[0].1);
            }
        }
    }
}
