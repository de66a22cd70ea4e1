mod common;

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use proptest::prelude::*;
use solvevo_core::evolution::{
    accept, evaluate_batch, rank_cmp, run_evolution, ArchiveEntry, Batch, EvalContext, EvalSummary, Event,
    EvolutionError, GroupArchive, InitialCache, Member, Metrics, Population, RunConfig, ToleranceParams, TrainingSet,
};
use solvevo_core::mutation::{Layer, MutationError, MutationProvider, MutationRequest, MutationResponse, StubProvider};
use solvevo_core::problems::Task;
use solvevo_core::solvers::{ClockMode, SolverConfig};

fn pool(g: usize) -> TrainingSet {
    static ITEMS: OnceLock<Vec<solvevo_core::evolution::TrainInstance>> = OnceLock::new();
    let items = ITEMS.get_or_init(|| common::tsp_pool(&[8, 9, 10, 11], 60, 500)).clone();
    TrainingSet::build(items, g, 3).unwrap()
}

fn run_config(g: usize, iterations: usize) -> RunConfig {
    RunConfig {
        iterations,
        groups: g,
        m: 2,
        horizon: 0.05,
        seed: 17,
        clock: ClockMode::work(),
        ..RunConfig::default()
    }
}

fn evolve(cfg: &RunConfig, training: &TrainingSet, provider: &dyn MutationProvider) -> (solvevo_core::evolution::EvolutionOutcome, Vec<Event>) {
    let mut log = Vec::new();
    let out = run_evolution(cfg, training, provider, &mut log).unwrap();
    let events = String::from_utf8(log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (out, events)
}

/// Acceptance rules written out directly from their definitions.
fn accept_oracle(layer: Layer, p: &Metrics, c: &Metrics, eps: f64, delta: f64) -> bool {
    let k_close = if p.k.abs() <= 1e-9 {
        c.k.abs() <= 1e-9
    } else {
        (c.k - p.k).abs() <= eps * p.k.abs()
    };
    let k_better = if p.k.abs() <= 1e-9 { c.k > 1e-9 } else { c.k >= (1.0 + delta) * p.k };
    match layer {
        Layer::Mdl => c.ell <= p.ell - delta || ((c.ell - p.ell).abs() <= eps && k_better),
        Layer::Mcl => (c.ell - p.ell).abs() <= eps && k_close,
        Layer::Ssl1 => c.t <= (1.0 - delta) * p.t && (c.ell_run - p.ell_run).abs() <= eps,
        Layer::Ssl2 => c.ell <= p.ell - delta && k_close,
    }
}

fn metrics() -> impl Strategy<Value = Metrics> {
    (-20.0..0.0f64, -20.0..0.0f64, prop_oneof![Just(0.0), 0.0..2.0f64], 0.01..10.0f64)
        .prop_map(|(ell, ell_run, k, t)| Metrics { ell, ell_run, k, t })
}

fn summary(ell: f64, k: f64, t: f64) -> EvalSummary {
    EvalSummary {
        metrics: Metrics { ell, ell_run: ell, k, t },
        groups: vec![],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn accept_matches_definitions(li in 0usize..4, p in metrics(), c in metrics(), eps in 0.0..0.1f64, delta in 0.001..0.2f64) {
        let layer = Layer::ALL[li];
        let tol = ToleranceParams::new(eps, delta).unwrap();
        prop_assert_eq!(accept(layer, &p, &c, &tol), accept_oracle(layer, &p, &c, eps, delta));
    }

    #[test]
    fn accepted_steps_move_the_right_way(li in 0usize..4, p in metrics(), c in metrics(), eps in 0.0..0.1f64, delta in 0.001..0.2f64) {
        let layer = Layer::ALL[li];
        let tol = ToleranceParams::new(eps, delta).unwrap();
        if accept(layer, &p, &c, &tol) {
            match layer {
                // the tie disjunct lets ℓ̄ drift up by at most ε
                Layer::Mdl => prop_assert!(c.ell <= p.ell + eps),
                Layer::Mcl => prop_assert!((c.ell - p.ell).abs() <= eps),
                Layer::Ssl1 => prop_assert!(c.t <= (1.0 - delta) * p.t),
                Layer::Ssl2 => prop_assert!(c.ell < p.ell),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn population_holds_best_distinct_ids(cap in 1usize..6, offers in prop::collection::vec((0usize..8, 0u8..4, 0u8..3), 1..40)) {
        let cfg = SolverConfig::seed(Task::Tsp);
        let mut pop = Population::new(cap);
        let mut distinct = HashSet::new();
        for (seq, (id, ell, k)) in offers.into_iter().enumerate() {
            let id = format!("c{id}");
            let s = summary(-(ell as f64), k as f64 * 0.1, 1.0);
            pop.insert(Member { id: id.clone(), config: cfg.clone(), summary: s, seq: seq as u64 });
            distinct.insert(id);
            prop_assert!(pop.len() <= cap);
        }
        prop_assert_eq!(pop.len(), cap.min(distinct.len()));
        let ids: HashSet<&str> = pop.members.iter().map(|m| m.id.as_str()).collect();
        prop_assert_eq!(ids.len(), pop.len());
        for w in pop.members.windows(2) {
            let key = |m: &Member| (m.summary.metrics.ell, m.summary.metrics.k, m.summary.metrics.t, m.seq);
            prop_assert!(rank_cmp(key(&w[0]), key(&w[1])).is_lt());
        }
    }

    #[test]
    fn archive_matches_brute_force(cap in 1usize..6, offers in prop::collection::vec((0usize..8, 0u8..4, 0u8..3, 0u8..3), 1..60)) {
        let cfg = SolverConfig::seed(Task::Tsp);
        let mut arch = GroupArchive::new(0, cap);
        let mut best: HashMap<String, (f64, f64, f64, u64)> = HashMap::new();
        for (seq, (id, ell, k, t)) in offers.into_iter().enumerate() {
            let id = format!("c{id}");
            let key = (-(ell as f64), k as f64 * 0.1, t as f64, seq as u64);
            arch.offer(ArchiveEntry { id: id.clone(), config: cfg.clone(), ell: key.0, k: key.1, t: key.2, seq: key.3, summary: summary(key.0, key.1, key.2) });
            best.entry(id).and_modify(|b| if rank_cmp(key, *b).is_lt() { *b = key }).or_insert(key);
            let mut expect: Vec<(String, (f64, f64, f64, u64))> = best.clone().into_iter().collect();
            expect.sort_by(|a, b| rank_cmp(a.1, b.1));
            expect.truncate(cap);
            let got: Vec<(String, u64)> = arch.entries.iter().map(|e| (e.id.clone(), e.seq)).collect();
            let want: Vec<(String, u64)> = expect.into_iter().map(|(id, k)| (id, k.3)).collect();
            prop_assert_eq!(got, want);
        }
    }
}

#[test]
fn population_evicts_the_worst() {
    let cfg = SolverConfig::seed(Task::Tsp);
    let mut pop = Population::new(2);
    for (i, ell) in [-1.0, -3.0, -2.0].into_iter().enumerate() {
        pop.insert(Member { id: format!("c{i}"), config: cfg.clone(), summary: summary(ell, 0.1, 1.0), seq: i as u64 });
    }
    let ids: Vec<&str> = pop.members.iter().map(|m| m.id.as_str()).collect();
    assert_eq!(ids, ["c1", "c2"]);
    let up = pop.insert(Member { id: "c3".into(), config: cfg, summary: summary(0.0, 0.1, 1.0), seq: 3 });
    assert!(!up.inserted);
    assert_eq!(up.evicted.as_deref(), Some("c3"));
}

#[test]
fn batch_covers_every_group_and_pairs_runs() {
    let training = pool(10);
    let sizes: Vec<usize> = (0..10).map(|g| training.members(g).len()).collect();
    let batch = Batch::sample(&training, 3, 5);
    assert_eq!(batch.len(), sizes.iter().map(|&s| s.min(3)).sum::<usize>());
    for (g, ids) in batch.groups.iter().enumerate() {
        assert!(ids.iter().all(|&i| training.groups[i] == g));
        assert_eq!(ids.iter().collect::<HashSet<_>>().len(), ids.len());
    }
    if sizes.iter().all(|&s| s >= 3) {
        assert_eq!(batch.len(), 30);
    }

    let cache = InitialCache::default();
    let ctx = EvalContext { training: &training, horizon: 0.05, clock: ClockMode::work(), cache: &cache };
    let seed_cfg = SolverConfig::seed(Task::Tsp);
    let a = evaluate_batch(&seed_cfg, &batch, &ctx).unwrap();
    assert_eq!(a.instances.len(), batch.len());
    assert_eq!(cache.computed(), batch.len() as u64);
    let b = evaluate_batch(&SolverConfig::ils(), &batch, &ctx).unwrap();
    // ℓ(0) is shared by every config on the same instance
    assert_eq!(cache.computed(), batch.len() as u64);
    for (x, y) in a.instances.iter().zip(&b.instances) {
        assert_eq!((x.index, x.seed, x.ell0), (y.index, y.seed, y.ell0));
    }
    assert_eq!(evaluate_batch(&seed_cfg, &batch, &ctx).unwrap(), a);
}

#[test]
fn summary_means_are_plain_averages() {
    let training = pool(3);
    let batch = Batch::sample(&training, 2, 1);
    let cache = InitialCache::default();
    let ctx = EvalContext { training: &training, horizon: 0.05, clock: ClockMode::work(), cache: &cache };
    let rec = evaluate_batch(&SolverConfig::seed(Task::Tsp), &batch, &ctx).unwrap();
    let n = rec.instances.len() as f64;
    let ell: f64 = rec.instances.iter().map(|r| r.ell).sum::<f64>() / n;
    assert!((rec.summary.metrics.ell - ell).abs() < 1e-12);
    for (g, s) in rec.summary.groups.iter().enumerate() {
        let rows: Vec<_> = rec.instances.iter().filter(|r| r.group == g).collect();
        assert_eq!(s.n, rows.len());
        let k = rows.iter().map(|r| r.k).sum::<f64>() / rows.len() as f64;
        assert!((s.k - k).abs() < 1e-12);
    }
}

#[test]
fn zero_iterations_keep_only_the_seed() {
    let training = pool(3);
    let (out, events) = evolve(&run_config(3, 0), &training, &StubProvider);
    let seed_id = SolverConfig::seed(Task::Tsp).id();
    assert_eq!(out.population.members.len(), 1);
    assert_eq!(out.population.members[0].id, seed_id);
    assert!(out.archives.iter().all(|a| a.entries.len() == 1 && a.entries[0].id == seed_id));
    assert!(matches!(events.first(), Some(Event::Start { .. })));
    assert!(matches!(events.last(), Some(Event::End { proposals: 0, .. })));
}

#[test]
fn group_count_mismatch_is_rejected() {
    let training = pool(3);
    let err = run_evolution(&run_config(4, 1), &training, &StubProvider, &mut Vec::new()).unwrap_err();
    assert!(matches!(err, EvolutionError::Config(_)));
}

#[test]
fn archives_replay_from_the_event_log() {
    let training = pool(3);
    let cfg = RunConfig { archive_size: 2, ..run_config(3, 6) };
    let (out, events) = evolve(&cfg, &training, &StubProvider);
    for g in 0..3 {
        let mut best: HashMap<String, (f64, f64, f64, u64)> = HashMap::new();
        for e in &events {
            if let Event::ArchiveOffer { group, config_id, ell, k, t, seq, .. } = e {
                if *group == g {
                    let key = (*ell, *k, *t, *seq);
                    best.entry(config_id.clone()).and_modify(|b| if rank_cmp(key, *b).is_lt() { *b = key }).or_insert(key);
                }
            }
        }
        let mut expect: Vec<_> = best.into_iter().collect();
        expect.sort_by(|a, b| rank_cmp(a.1, b.1));
        expect.truncate(2);
        let want: Vec<&str> = expect.iter().map(|(id, _)| id.as_str()).collect();
        let got: Vec<&str> = out.archives[g].entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(got, want, "group {g}");
    }
    let members = out.population.members.len();
    assert!((1..=cfg.population_size).contains(&members));
}

#[test]
fn evolution_is_deterministic_under_the_work_clock() {
    let training = pool(3);
    let cfg = run_config(3, 3);
    let (a, _) = evolve(&cfg, &training, &StubProvider);
    let (b, _) = evolve(&cfg, &training, &StubProvider);
    assert_eq!(a, b);
}

/// Answers MDL through the stub and refuses every other layer.
struct MdlOnly;

impl MutationProvider for MdlOnly {
    fn name(&self) -> &str {
        "mdl-only"
    }

    fn propose(&self, r: &MutationRequest) -> Result<MutationResponse, MutationError> {
        match r.layer {
            Layer::Mdl => StubProvider.propose(r),
            _ => Err(MutationError::Unreachable("offline".into())),
        }
    }
}

#[test]
fn rejected_candidate_reaches_archive_not_population() {
    let training = pool(1);
    // δ this large makes every rule unreachable
    let cfg = RunConfig { delta: 50.0, epsilon: 0.0, ..run_config(1, 1) };
    let (out, events) = evolve(&cfg, &training, &MdlOnly);
    let cand = events
        .iter()
        .find_map(|e| match e {
            Event::Decision { candidate_id, accepted: false, frozen_ok: true, .. } => Some(candidate_id.clone()),
            _ => None,
        })
        .expect("a rejected MDL decision");
    assert!(!out.population.contains(&cand));
    assert!(out.archives[0].entries.iter().any(|e| e.id == cand));
    assert_eq!(out.provider_failures, 3);
    assert_eq!(events.iter().filter(|e| matches!(e, Event::ProviderFailure { .. })).count(), 3);
}

/// Edits the schedule while claiming to be MDL.
struct Rogue;

impl MutationProvider for Rogue {
    fn name(&self) -> &str {
        "rogue"
    }

    fn propose(&self, r: &MutationRequest) -> Result<MutationResponse, MutationError> {
        let mut c = r.parent.clone();
        c.schedule.loop_max += 1 + r.layer.index();
        Ok(MutationResponse { candidate: c, note: "rogue".into() })
    }
}

#[test]
fn frozen_half_is_enforced_by_the_loop() {
    let training = pool(1);
    let (out, events) = evolve(&run_config(1, 1), &training, &Rogue);
    let mut violations = HashSet::new();
    for e in &events {
        if let Event::Decision { layer, frozen_ok, accepted, candidate_id, .. } = e {
            if layer.edits_mechanism() {
                assert!(!frozen_ok);
                assert!(!accepted);
                violations.insert(candidate_id.clone());
            }
        }
    }
    assert!(!violations.is_empty());
    for e in &events {
        if let Event::ArchiveOffer { config_id, .. } = e {
            assert!(!violations.contains(config_id));
        }
    }
    assert!(out.population.members.iter().all(|m| !violations.contains(&m.id)));
}
