use proptest::prelude::*;
use solvevo_core::problems::{
    evaluate, generate, oracle_optimum, BppParams, CvrpParams, GenParams, Instance, MkpParams, Task, TspParams,
};
use solvevo_core::solvers::{
    run_backbone, run_solver, ClockMode, Mechanism, RunOptions, SolverConfig, StopReason,
};

fn work(horizon: f64, seed: u64) -> RunOptions {
    RunOptions {
        horizon,
        seed,
        clock: ClockMode::work(),
    }
}

fn instance(task: Task, seed: u64) -> Instance {
    let p = match task {
        Task::Tsp => GenParams::Tsp(TspParams::new(30)),
        Task::Cvrp => GenParams::Cvrp(CvrpParams { n: 7 }),
        Task::Bpp => GenParams::Bpp(BppParams::new(200, 100)),
        Task::Mkp => GenParams::Mkp(MkpParams { n: 12, m: 3 }),
    };
    let mut inst = generate(&p, seed).unwrap();
    if let Ok(v) = oracle_optimum(&inst) {
        inst.set_reference(v);
    }
    inst
}

fn short(task: Task) -> SolverConfig {
    let mut c = SolverConfig::seed(task);
    c.schedule.time_limit_s = 0.2;
    c
}

/// Exhaustive best profit (as a negative objective) over all subsets.
fn mkp_brute_force(inst: &Instance) -> f64 {
    let Instance::Mkp(m) = inst else { panic!() };
    let n = m.n();
    let mut best = 0i64;
    for mask in 0u32..(1 << n) {
        let fits = m.weights.iter().zip(&m.capacities).all(|(row, &b)| {
            (0..n).filter(|i| mask >> i & 1 == 1).map(|i| row[i] as u64).sum::<u64>() <= b
        });
        if fits {
            let p: i64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| m.profits[i] as i64).sum();
            best = best.max(p);
        }
    }
    -(best as f64)
}

#[test]
fn runs_are_deterministic_under_the_work_clock() {
    for task in [Task::Tsp, Task::Cvrp, Task::Bpp, Task::Mkp] {
        let inst = instance(task, 4);
        let a = run_backbone(&short(task), &inst, &work(0.2, 9)).unwrap();
        let b = run_backbone(&short(task), &inst, &work(0.2, 9)).unwrap();
        assert_eq!(a.solution, b.solution, "{task}");
        assert_eq!(a.events, b.events, "{task}");
    }
}

#[test]
fn every_incumbent_is_feasible_and_within_budget() {
    for task in [Task::Tsp, Task::Cvrp, Task::Bpp, Task::Mkp] {
        for seed in 0..3 {
            let inst = instance(task, seed);
            let cfg = short(task);
            let run = run_backbone(&cfg, &inst, &work(0.2, seed)).unwrap();
            let v = evaluate(&inst, &run.solution.payload).unwrap();
            let exact = v.objective().unwrap();
            assert!((exact - run.solution.objective).abs() <= 1e-9 * exact.abs().max(1.0));
            assert!(run.events.windows(2).all(|w| w[1].1 < w[0].1 && w[1].0 >= w[0].0));
            assert_eq!(run.events.last().unwrap().1, run.solution.objective);
            if task != Task::Bpp {
                // one loop of slack at most
                assert!(run.t_run <= cfg.schedule.time_limit_s + 0.1, "{task} {}", run.t_run);
            }
        }
    }
}

#[test]
fn trace_final_gap_matches_solution() {
    let inst = instance(Task::Mkp, 2);
    let f_star = inst.reference().unwrap();
    let r = run_solver(&short(Task::Mkp), &inst, f_star, &work(0.2, 1)).unwrap();
    let gap = (r.solution.objective - f_star) / f_star.abs();
    assert!((r.final_gap() - gap.max(0.0)).abs() < 1e-12);
}

#[test]
fn aco_reaches_exhaustive_optimum_on_tiny_mkp() {
    let inst = generate(&GenParams::Mkp(MkpParams { n: 8, m: 2 }), 21).unwrap();
    let mut cfg = SolverConfig::seed(Task::Mkp);
    cfg.schedule.loop_max = 200;
    cfg.schedule.max_no_improve = 200;
    let run = run_backbone(&cfg, &inst, &work(10.0, 0)).unwrap();
    assert_eq!(run.solution.objective, mkp_brute_force(&inst));
    assert_eq!(run.stop, StopReason::LoopMax);
}

fn tiny_tsp_gaps(cfg: &SolverConfig) -> Vec<f64> {
    (0..5)
        .map(|seed| {
            let mut inst = generate(&GenParams::Tsp(TspParams::new(9)), 100 + seed).unwrap();
            let opt = oracle_optimum(&inst).unwrap();
            inst.set_reference(opt);
            let mut c = cfg.clone();
            c.schedule.time_limit_s = 1.0;
            run_solver(&c, &inst, opt, &work(1.0, seed)).unwrap().final_gap()
        })
        .collect()
}

#[test]
fn ils_reaches_tiny_optima() {
    assert!(tiny_tsp_gaps(&SolverConfig::ils()).iter().all(|&g| g == 0.0));
}

#[test]
fn specialist_mostly_reaches_tiny_optima() {
    // stagnation cap of 30 loops; an occasional near miss is expected
    let gaps = tiny_tsp_gaps(&SolverConfig::a280_specialist());
    assert!(gaps.iter().filter(|&&g| g == 0.0).count() >= 4, "{gaps:?}");
    assert!(gaps.iter().all(|&g| g < 0.05), "{gaps:?}");
}

#[test]
fn schedule_only_changes_do_not_change_early_trajectory() {
    // σ decides how long phases run, not which moves exist: a longer
    // stagnation cap replays the shorter run's prefix exactly.
    let inst = instance(Task::Tsp, 8);
    let mut a = SolverConfig::seed(Task::Tsp);
    a.schedule.max_no_improve = 5;
    let mut b = a.clone();
    b.schedule.max_no_improve = 50;
    let ra = run_backbone(&a, &inst, &work(10.0, 3)).unwrap();
    let rb = run_backbone(&b, &inst, &work(10.0, 3)).unwrap();
    assert_eq!(&rb.events[..ra.events.len()], &ra.events[..]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mismatched_task_never_runs(seed in 0u64..100) {
        let inst = instance(Task::Bpp, seed);
        for task in [Task::Tsp, Task::Cvrp, Task::Mkp] {
            prop_assert!(run_backbone(&SolverConfig::seed(task), &inst, &work(1.0, seed)).is_err());
        }
    }

    #[test]
    fn goa_rules_respect_lower_bound(seed in 0u64..1000, exponent in 0.5f64..3.0, open in 0.1f64..1.0) {
        let inst = instance(Task::Bpp, seed);
        let mut cfg = SolverConfig::seed(Task::Bpp);
        cfg.mechanism = Mechanism::Goa(solvevo_core::solvers::GoaMechanism {
            bin_rule: solvevo_core::solvers::BinRule::Scored { exponent, open_threshold: open },
        });
        let run = run_backbone(&cfg, &inst, &work(1.0, seed)).unwrap();
        prop_assert!(run.solution.objective >= inst.reference().unwrap());
    }
}
