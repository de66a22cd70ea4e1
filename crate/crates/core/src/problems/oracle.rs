//! Exact reference values for desk-scale instances.

use super::{CvrpInstance, DistanceMatrix, Instance, MkpInstance, ProblemError};

pub const TSP_ORACLE_MAX: usize = 15;
pub const MKP_ORACLE_MAX: usize = 20;
pub const CVRP_ORACLE_MAX: usize = 8;

/// Exact optimum (BPP: relaxation lower bound) under the minimization convention.
pub fn oracle_optimum(instance: &Instance) -> Result<f64, ProblemError> {
    match instance {
        Instance::Tsp(t) => {
            if t.n() > TSP_ORACLE_MAX {
                return Err(ProblemError::TooLargeForOracle(format!(
                    "TSP n={} > {TSP_ORACLE_MAX}",
                    t.n()
                )));
            }
            Ok(held_karp(&t.distances()))
        }
        Instance::Cvrp(c) => cvrp_optimum(c),
        Instance::Bpp(b) => Ok(b.lower_bound() as f64),
        Instance::Mkp(m) => mkp_optimum(m),
    }
}

/// Optimal closed-tour length by the Held–Karp recursion. Memory is
/// `O(2^(n-1)·n)`, so callers should keep n around 20 or below.
pub fn held_karp(d: &DistanceMatrix) -> f64 {
    held_karp_tour(d).0
}

/// Optimal tour length and one optimal tour starting at node 0.
pub fn held_karp_tour(d: &DistanceMatrix) -> (f64, Vec<usize>) {
    let n = d.len();
    match n {
        0 => return (0.0, vec![]),
        1 => return (0.0, vec![0]),
        2 => return (2.0 * d.get(0, 1), vec![0, 1]),
        _ => {}
    }
    // node i in 1..n is bit i-1
    let m = n - 1;
    let full = 1usize << m;
    let mut dp = vec![f64::INFINITY; full * m];
    let mut parent = vec![u8::MAX; full * m];
    for j in 0..m {
        dp[(1 << j) * m + j] = d.get(0, j + 1);
    }
    for mask in 1..full {
        for j in 0..m {
            if mask & (1 << j) == 0 {
                continue;
            }
            let cur = dp[mask * m + j];
            if !cur.is_finite() {
                continue;
            }
            let mut rest = !mask & (full - 1);
            while rest != 0 {
                let k = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let next = mask | (1 << k);
                let cand = cur + d.get(j + 1, k + 1);
                if cand < dp[next * m + k] {
                    dp[next * m + k] = cand;
                    parent[next * m + k] = j as u8;
                }
            }
        }
    }
    let last = full - 1;
    let (mut best, mut end) = (f64::INFINITY, 0);
    for j in 0..m {
        let c = dp[last * m + j] + d.get(j + 1, 0);
        if c < best {
            best = c;
            end = j;
        }
    }
    let mut tour = Vec::with_capacity(n);
    let (mut mask, mut j) = (last, end);
    loop {
        tour.push(j + 1);
        let p = parent[mask * m + j];
        mask &= !(1 << j);
        if p == u8::MAX {
            break;
        }
        j = p as usize;
    }
    tour.push(0);
    tour.reverse();
    (best, tour)
}

fn mkp_optimum(inst: &MkpInstance) -> Result<f64, ProblemError> {
    let n = inst.n();
    if n > MKP_ORACLE_MAX {
        return Err(ProblemError::TooLargeForOracle(format!("MKP n={n} > {MKP_ORACLE_MAX}")));
    }
    // Gray-code walk: one item flips per step
    let d = inst.d();
    let mut used = vec![0u64; d];
    let mut profit = 0u64;
    let mut best = 0u64;
    let mut selected = vec![false; n];
    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        selected[i] = !selected[i];
        if selected[i] {
            profit += inst.profits[i] as u64;
            for (u, row) in used.iter_mut().zip(&inst.weights) {
                *u += row[i] as u64;
            }
        } else {
            profit -= inst.profits[i] as u64;
            for (u, row) in used.iter_mut().zip(&inst.weights) {
                *u -= row[i] as u64;
            }
        }
        if profit > best && used.iter().zip(&inst.capacities).all(|(u, b)| u <= b) {
            best = profit;
        }
    }
    Ok(-(best as f64))
}

fn cvrp_optimum(inst: &CvrpInstance) -> Result<f64, ProblemError> {
    let n = inst.customers.len();
    if n > CVRP_ORACLE_MAX {
        return Err(ProblemError::TooLargeForOracle(format!("CVRP n={n} > {CVRP_ORACLE_MAX}")));
    }
    let d = inst.distances();
    let full = 1usize << n;
    // path[mask][last]: depot -> customers in mask, ending at `last`
    let mut path = vec![f64::INFINITY; full * n];
    for j in 0..n {
        path[(1 << j) * n + j] = d.get(0, j + 1);
    }
    for mask in 1..full {
        for j in 0..n {
            let cur = path[mask * n + j];
            if mask & (1 << j) == 0 || !cur.is_finite() {
                continue;
            }
            for k in 0..n {
                if mask & (1 << k) == 0 {
                    let idx = (mask | (1 << k)) * n + k;
                    path[idx] = path[idx].min(cur + d.get(j + 1, k + 1));
                }
            }
        }
    }
    let mut route = vec![f64::INFINITY; full];
    for (mask, r) in route.iter_mut().enumerate().skip(1) {
        let load: u64 = (0..n)
            .filter(|&j| mask & (1 << j) != 0)
            .map(|j| inst.customers[j].demand as u64)
            .sum();
        if load <= inst.capacity as u64 {
            *r = (0..n)
                .filter(|&j| mask & (1 << j) != 0)
                .map(|j| path[mask * n + j] + d.get(j + 1, 0))
                .fold(f64::INFINITY, f64::min);
        }
    }
    // set partition: the route holding the lowest customer is chosen first
    let mut best = vec![f64::INFINITY; full];
    best[0] = 0.0;
    for mask in 1..full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let s = sub | low;
            let c = route[s] + best[mask ^ s];
            if c < best[mask] {
                best[mask] = c;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    Ok(best[full - 1])
}
