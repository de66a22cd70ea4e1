#![allow(dead_code)]

use solvevo_core::evolution::TrainInstance;
use solvevo_core::problems::{generate, held_karp, GenParams, Instance, TspParams};

/// Seeded TSP instances with exact Held-Karp references, sizes cycling through `sizes`.
pub fn tsp_pool(sizes: &[usize], count: usize, seed: u64) -> Vec<TrainInstance> {
    (0..count)
        .map(|i| {
            let n = sizes[i % sizes.len()];
            let mut inst = generate(&GenParams::Tsp(TspParams::new(n)), seed + i as u64).unwrap();
            let Instance::Tsp(t) = &inst else { unreachable!() };
            let v = held_karp(&t.distances());
            inst.set_reference(v);
            TrainInstance {
                id: format!("tsp{n}-{i:03}"),
                instance: inst,
            }
        })
        .collect()
}
