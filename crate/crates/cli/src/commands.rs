use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use solvevo_core::evolution::{run_evolution, ProviderChoice, RunConfig, TrainInstance, TrainingSet};
use solvevo_core::library::SolverLibrary;
use solvevo_core::mutation::{LlmProvider, MutationProvider, StubProvider};
use solvevo_core::problems::{
    generate, held_karp, oracle_optimum, BppParams, CvrpParams, GenParams, Instance, MkpParams, Task, TspParams,
    TspPattern,
};
use solvevo_core::seed;
use solvevo_core::solvers::{run_solver, ClockMode, RunOptions, SolverConfig};
use solvevo_core::trajectory::{alt_metrics, tldr, MetricConfig, DEFAULT_FLOOR};

use crate::io::{data_err, ensure_dir, load_dir, load_instance, write_json, RunManifest};
use crate::{CmdResult, ClockArg, EvalArgs, EvolveArgs, Failure, GenArgs, OracleArgs, ProviderKind, ReferenceMode, RetrieveArgs};

/// Held-Karp memory at n=21 is about 170 MB; beyond that it is not offered.
const HELD_KARP_CLI_MAX: usize = 21;

fn parse_task(s: &str) -> Result<Task, Failure> {
    s.parse().map_err(|_| Failure::Usage(format!("unknown task '{s}' (expected tsp, cvrp, bpp or mkp)")))
}

fn gen_params(a: &GenArgs, task: Task, n: usize) -> Result<GenParams, Failure> {
    Ok(match task {
        Task::Tsp => match &a.pattern {
            Some(p) => {
                let pattern: TspPattern = serde_json::from_value(serde_json::Value::String(p.clone()))
                    .map_err(|_| Failure::Usage(format!("unknown TSP pattern '{p}'")))?;
                GenParams::Tsp(TspParams::with_pattern(n, pattern))
            }
            None => GenParams::Tsp(TspParams::new(n)),
        },
        Task::Cvrp => GenParams::Cvrp(CvrpParams { n }),
        Task::Bpp => GenParams::Bpp(BppParams::new(n, a.capacity)),
        Task::Mkp => GenParams::Mkp(MkpParams { n, m: a.dims }),
    })
}

fn attach_reference(inst: &mut Instance, mode: ReferenceMode) -> Result<(), Failure> {
    match (mode, &*inst) {
        (ReferenceMode::None, _) | (_, Instance::Bpp(_)) => {}
        (ReferenceMode::HeldKarp, Instance::Tsp(t)) => {
            if t.n() > HELD_KARP_CLI_MAX {
                return Err(Failure::Usage(format!("held-karp reference limited to n <= {HELD_KARP_CLI_MAX}")));
            }
            let v = held_karp(&t.distances());
            inst.set_reference(v);
        }
        _ => {
            if let Ok(v) = oracle_optimum(inst) {
                inst.set_reference(v);
            }
        }
    }
    Ok(())
}

pub fn gen(a: &GenArgs) -> CmdResult {
    let task = parse_task(&a.task)?;
    if a.count == 0 {
        return Err(Failure::Usage("--count must be at least 1".into()));
    }
    ensure_dir(&a.out)?;
    let mut manifest = RunManifest::new("gen", a, a.seed);
    let mut index = 0u64;
    for &n in &a.n {
        let params = gen_params(a, task, n)?;
        for c in 0..a.count {
            let s = seed::derive(a.seed, "gen", index);
            index += 1;
            let mut inst = generate(&params, s).map_err(|e| Failure::Usage(e.to_string()))?;
            attach_reference(&mut inst, a.reference)?;
            let name = format!("{task}{n}-{c:04}.json");
            write_json(&a.out.join(&name), &inst)?;
            manifest.outputs.push(name);
        }
    }
    println!("wrote {} instances to {}", manifest.outputs.len(), a.out.display());
    manifest.finish(&a.out.join("manifest.json"))
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn evolve(a: &EvolveArgs) -> CmdResult {
    let mut cfg: RunConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    match a.provider {
        Some(ProviderKind::Stub) => cfg.provider = ProviderChoice::Stub,
        Some(ProviderKind::Llm) if !matches!(cfg.provider, ProviderChoice::Llm(_)) => {
            cfg.provider = ProviderChoice::Llm(Default::default())
        }
        _ => {}
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if !a.train.is_dir() {
        return Err(Failure::Data(format!("{}: training directory not found", a.train.display())));
    }
    let items: Vec<TrainInstance> = load_dir(&a.train)?
        .into_iter()
        .map(|(id, instance)| TrainInstance { id, instance })
        .collect();
    let training = TrainingSet::build(items, cfg.groups, cfg.seed).map_err(|e| Failure::Data(e.to_string()))?;
    let provider: Box<dyn MutationProvider> = match &cfg.provider {
        ProviderChoice::Stub => Box::new(StubProvider),
        ProviderChoice::Llm(s) => Box::new(LlmProvider::new(s.clone()).map_err(|e| Failure::Provider(e.to_string()))?),
    };
    ensure_dir(&a.out)?;
    let mut manifest = RunManifest::new("evolve", &cfg, cfg.seed);
    let log_path = a.out.join("events.jsonl");
    let file = File::create(&log_path).map_err(|e| data_err(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let outcome = run_evolution(&cfg, &training, provider.as_ref(), &mut log).map_err(|e| Failure::Data(e.to_string()))?;
    log.flush().map_err(|e| data_err(&log_path, e))?;
    let library = SolverLibrary::from_outcome(&outcome, &training, &cfg);
    let lib_path = a.out.join("library.json");
    library.save(&lib_path).map_err(|e| data_err(&lib_path, e))?;
    manifest.outputs = vec!["library.json".into(), "events.jsonl".into()];
    manifest.finish(&a.out.join("manifest.json"))?;
    let best = outcome.population.best().expect("population never empty");
    println!(
        "iterations {}  proposals {}  provider failures {}  best {} (ell {:.4}, k {:.4}, t {:.4})",
        outcome.iterations,
        outcome.proposals,
        outcome.provider_failures,
        best.id,
        best.summary.metrics.ell,
        best.summary.metrics.k,
        best.summary.metrics.t
    );
    if outcome.proposals == 0 && outcome.provider_failures > 0 {
        return Err(Failure::Provider(format!("all {} proposals failed", outcome.provider_failures)));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct EvalRow {
    pub instance: String,
    pub gap_pct: f64,
    pub t_run: f64,
    pub tldr: f64,
    pub terminal_time: f64,
    pub time_to_10pct: f64,
    pub linear_auc: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalSummaryRow {
    pub instances: usize,
    pub gap_pct: f64,
    pub t_run: f64,
    pub tldr: f64,
    pub terminal_time: f64,
    pub time_to_10pct: f64,
    pub linear_auc: f64,
}

pub fn summarize(rows: &[EvalRow]) -> EvalSummaryRow {
    let n = rows.len() as f64;
    let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    EvalSummaryRow {
        instances: rows.len(),
        gap_pct: mean(|r| r.gap_pct),
        t_run: mean(|r| r.t_run),
        tldr: mean(|r| r.tldr),
        terminal_time: mean(|r| r.terminal_time),
        time_to_10pct: mean(|r| r.time_to_10pct),
        linear_auc: mean(|r| r.linear_auc),
    }
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("eval");
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| data_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| data_err(path, e))?;
    }
    w.flush().map_err(|e| data_err(path, e))
}

#[derive(Serialize)]
struct EvalManifestConfig<'a> {
    library: Option<&'a Path>,
    config: Option<&'a Path>,
    seed_solver: bool,
    instances: &'a Path,
    horizon: f64,
    clock: ClockMode,
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    if !(a.horizon.is_finite() && a.horizon > 0.0) {
        return Err(Failure::Usage("--horizon must be positive".into()));
    }
    let library = a.library.as_deref().map(SolverLibrary::load).transpose().map_err(|e| Failure::Data(e.to_string()))?;
    let fixed: Option<SolverConfig> = a.config.as_deref().map(read_config).transpose()?;
    if library.is_none() && fixed.is_none() && !a.seed_solver {
        return Err(Failure::Usage("one of --library, --config or --seed-solver is required".into()));
    }
    let clock = match a.clock {
        ClockArg::Wall => ClockMode::Wall,
        ClockArg::Work => ClockMode::work(),
    };
    let instances = load_dir(&a.instances)?;
    let metric = MetricConfig::new(DEFAULT_FLOOR, a.horizon).map_err(|e| Failure::Usage(e.to_string()))?;
    let rows: Result<Vec<EvalRow>, Failure> = instances
        .par_iter()
        .enumerate()
        .map(|(i, (id, inst))| {
            let config = match (&library, &fixed) {
                (Some(lib), _) => {
                    let r = lib.retrieve(inst).map_err(|e| Failure::Data(format!("{id}: {e}")))?;
                    log::info!("{id}: group {} -> {}", r.group, r.config_id);
                    r.config
                }
                (None, Some(c)) => c.clone(),
                (None, None) => SolverConfig::seed(inst.task()),
            };
            let f_star = inst
                .reference()
                .ok_or_else(|| Failure::Data(format!("{id}: no reference value")))?;
            let opts = RunOptions {
                horizon: a.horizon,
                seed: seed::derive(a.seed, "eval", i as u64),
                clock,
            };
            let res = run_solver(&config, inst, f_star, &opts).map_err(|e| Failure::Data(format!("{id}: {e}")))?;
            let alt = alt_metrics(&res.trace, &metric).map_err(|e| Failure::Data(format!("{id}: {e}")))?;
            Ok(EvalRow {
                instance: id.clone(),
                gap_pct: res.trace.gap_at(a.horizon) * 100.0,
                t_run: res.t_run,
                tldr: tldr(&res.trace, &metric).map_err(|e| Failure::Data(format!("{id}: {e}")))?,
                terminal_time: alt.terminal_time,
                time_to_10pct: alt.time_to_10pct,
                linear_auc: alt.linear_auc,
            })
        })
        .collect();
    let rows = rows?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_csv(&a.out, &rows)?;
    let summary = summarize(&rows);
    let sp = summary_path(&a.out);
    write_csv(&sp, std::slice::from_ref(&summary))?;
    let mut manifest = RunManifest::new(
        "eval",
        EvalManifestConfig {
            library: a.library.as_deref(),
            config: a.config.as_deref(),
            seed_solver: a.seed_solver,
            instances: &a.instances,
            horizon: a.horizon,
            clock,
        },
        a.seed,
    );
    manifest.outputs = vec![a.out.display().to_string(), sp.display().to_string()];
    let stem = a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("eval");
    manifest.finish(&a.out.with_file_name(format!("{stem}.manifest.json")))?;
    println!("instances {}  Gap % {:.3}  Time s {:.3}", summary.instances, summary.gap_pct, summary.t_run);
    Ok(())
}

pub fn retrieve(a: &RetrieveArgs) -> CmdResult {
    let lib = SolverLibrary::load(&a.library).map_err(|e| Failure::Data(e.to_string()))?;
    let inst = load_instance(&a.instance)?;
    let r = lib.retrieve(&inst).map_err(|e| Failure::Data(e.to_string()))?;
    println!("group {}", r.group);
    for (g, d) in r.distances.iter().enumerate() {
        println!("  distance[{g}] = {d:.6}");
    }
    println!("config {}", r.config_id);
    println!("{}", serde_json::to_string_pretty(&r.config).expect("config serializes"));
    Ok(())
}

pub fn oracle(a: &OracleArgs) -> CmdResult {
    let inst = load_instance(&a.instance)?;
    let v = oracle_optimum(&inst).map_err(|e| Failure::Data(e.to_string()))?;
    println!("{v}");
    Ok(())
}
