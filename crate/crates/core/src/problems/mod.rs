//! Problem definitions: TSP, CVRP, online BPP and MKP.
//!
//! Every task is scored under a minimization convention. MKP reports the
//! negated profit so that gaps are computed the same way for all four.

mod generate;
mod oracle;
mod tsplib;

pub use generate::{generate, BppParams, CvrpParams, GenParams, MkpParams, TspParams, TspPattern};
pub use oracle::{held_karp, held_karp_tour, oracle_optimum, CVRP_ORACLE_MAX, MKP_ORACLE_MAX, TSP_ORACLE_MAX};
pub use tsplib::{parse_tour, parse_tsplib, read_tsplib_file};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("solution does not match instance: {0}")]
    DimensionMismatch(String),
    #[error("malformed solution: {0}")]
    Malformed(String),
    #[error("reference value must be non-zero")]
    ZeroReference,
    #[error("instance too large for the exact oracle ({0})")]
    TooLargeForOracle(String),
    #[error("unsupported TSPLIB format: {0}")]
    Unsupported(String),
    #[error("TSPLIB parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Tsp,
    Cvrp,
    Bpp,
    Mkp,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Tsp => "tsp",
            Task::Cvrp => "cvrp",
            Task::Bpp => "bpp",
            Task::Mkp => "mkp",
        })
    }
}

impl FromStr for Task {
    type Err = ProblemError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsp" => Ok(Task::Tsp),
            "cvrp" => Ok(Task::Cvrp),
            "bpp" => Ok(Task::Bpp),
            "mkp" => Ok(Task::Mkp),
            other => Err(ProblemError::UnknownTask(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// How edge lengths are derived from coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Exact Euclidean length (synthetic instances).
    #[default]
    Euclidean,
    /// TSPLIB EUC_2D: Euclidean length rounded to the nearest integer.
    Euc2d,
}

impl DistanceKind {
    pub fn length(self, a: &Point, b: &Point) -> f64 {
        let d = a.dist(b);
        match self {
            DistanceKind::Euclidean => d,
            DistanceKind::Euc2d => (d + 0.5).floor(),
        }
    }
}

/// Dense symmetric distance matrix.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_points(points: &[Point], kind: DistanceKind) -> Self {
        let n = points.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = kind.length(&points[i], &points[j]);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn tour_length(&self, tour: &[usize]) -> f64 {
        let n = tour.len();
        (0..n).map(|i| self.get(tour[i], tour[(i + 1) % n])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspInstance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub coords: Vec<Point>,
    #[serde(default)]
    pub distance: DistanceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_optimum: Option<f64>,
}

impl TspInstance {
    pub fn new(coords: Vec<Point>) -> Result<Self, ProblemError> {
        let inst = Self {
            name: None,
            coords,
            distance: DistanceKind::Euclidean,
            reference_optimum: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.coords.len() < 3 {
            return Err(ProblemError::InvalidInstance(format!(
                "TSP needs at least 3 nodes, got {}",
                self.coords.len()
            )));
        }
        if self.coords.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(ProblemError::InvalidInstance("non-finite coordinate".into()));
        }
        check_reference(self.reference_optimum)
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn distances(&self) -> DistanceMatrix {
        DistanceMatrix::from_points(&self.coords, self.distance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub at: Point,
    pub demand: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvrpInstance {
    pub depot: Point,
    pub customers: Vec<Customer>,
    pub capacity: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_optimum: Option<f64>,
}

impl CvrpInstance {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.capacity == 0 {
            return Err(ProblemError::InvalidInstance("capacity must be positive".into()));
        }
        if self.customers.is_empty() {
            return Err(ProblemError::InvalidInstance("no customers".into()));
        }
        for (i, c) in self.customers.iter().enumerate() {
            if c.demand == 0 || c.demand > self.capacity {
                return Err(ProblemError::InvalidInstance(format!(
                    "customer {i} demand {} outside [1, {}]",
                    c.demand, self.capacity
                )));
            }
        }
        check_reference(self.reference_optimum)
    }

    /// Node 0 is the depot, node `i + 1` is customer `i`.
    pub fn nodes(&self) -> Vec<Point> {
        std::iter::once(self.depot)
            .chain(self.customers.iter().map(|c| c.at))
            .collect()
    }

    pub fn distances(&self) -> DistanceMatrix {
        DistanceMatrix::from_points(&self.nodes(), DistanceKind::Euclidean)
    }

    pub fn total_demand(&self) -> u64 {
        self.customers.iter().map(|c| c.demand as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BppInstance {
    pub items: Vec<u32>,
    pub capacity: u32,
}

impl BppInstance {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.capacity == 0 {
            return Err(ProblemError::InvalidInstance("capacity must be positive".into()));
        }
        if self.items.is_empty() {
            return Err(ProblemError::InvalidInstance("no items".into()));
        }
        if let Some(w) = self.items.iter().find(|&&w| w == 0 || w > self.capacity) {
            return Err(ProblemError::InvalidInstance(format!(
                "item size {w} outside (0, {}]",
                self.capacity
            )));
        }
        Ok(())
    }

    /// `⌈Σw / C⌉`, the continuous relaxation bound used as the reference.
    pub fn lower_bound(&self) -> u64 {
        let total: u64 = self.items.iter().map(|&w| w as u64).sum();
        total.div_ceil(self.capacity as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MkpInstance {
    pub profits: Vec<u32>,
    /// `weights[j][i]`: consumption of item `i` in constraint `j`.
    pub weights: Vec<Vec<u32>>,
    pub capacities: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_optimum: Option<f64>,
}

impl MkpInstance {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let n = self.profits.len();
        if n == 0 {
            return Err(ProblemError::InvalidInstance("no items".into()));
        }
        if self.profits.contains(&0) {
            return Err(ProblemError::InvalidInstance("profits must be positive".into()));
        }
        if self.weights.len() != self.capacities.len() || self.weights.is_empty() {
            return Err(ProblemError::InvalidInstance(
                "one weight row per capacity required".into(),
            ));
        }
        for (j, row) in self.weights.iter().enumerate() {
            if row.len() != n {
                return Err(ProblemError::InvalidInstance(format!(
                    "weight row {j} has {} entries, expected {n}",
                    row.len()
                )));
            }
            let sum: u64 = row.iter().map(|&a| a as u64).sum();
            let b = self.capacities[j];
            if b == 0 || b > sum {
                return Err(ProblemError::InvalidInstance(format!(
                    "capacity {j} = {b} not in [1, {sum}]"
                )));
            }
        }
        check_reference(self.reference_optimum)
    }

    pub fn n(&self) -> usize {
        self.profits.len()
    }

    pub fn d(&self) -> usize {
        self.capacities.len()
    }
}

fn check_reference(r: Option<f64>) -> Result<(), ProblemError> {
    match r {
        Some(v) if !v.is_finite() || v == 0.0 => Err(ProblemError::InvalidInstance(format!(
            "reference optimum {v} must be finite and non-zero"
        ))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Instance {
    Tsp(TspInstance),
    Cvrp(CvrpInstance),
    Bpp(BppInstance),
    Mkp(MkpInstance),
}

impl Instance {
    pub fn task(&self) -> Task {
        match self {
            Instance::Tsp(_) => Task::Tsp,
            Instance::Cvrp(_) => Task::Cvrp,
            Instance::Bpp(_) => Task::Bpp,
            Instance::Mkp(_) => Task::Mkp,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        match self {
            Instance::Tsp(i) => i.validate(),
            Instance::Cvrp(i) => i.validate(),
            Instance::Bpp(i) => i.validate(),
            Instance::Mkp(i) => i.validate(),
        }
    }

    /// Attached reference value under the minimization convention, if any.
    /// BPP always has one: its relaxation lower bound.
    pub fn reference(&self) -> Option<f64> {
        match self {
            Instance::Tsp(i) => i.reference_optimum,
            Instance::Cvrp(i) => i.reference_optimum,
            Instance::Bpp(i) => Some(i.lower_bound() as f64),
            Instance::Mkp(i) => i.reference_optimum,
        }
    }

    pub fn set_reference(&mut self, value: f64) {
        match self {
            Instance::Tsp(i) => i.reference_optimum = Some(value),
            Instance::Cvrp(i) => i.reference_optimum = Some(value),
            Instance::Bpp(_) => {}
            Instance::Mkp(i) => i.reference_optimum = Some(value),
        }
    }

    /// Number of decision elements (nodes, customers, items).
    pub fn size(&self) -> usize {
        match self {
            Instance::Tsp(i) => i.n(),
            Instance::Cvrp(i) => i.customers.len(),
            Instance::Bpp(i) => i.items.len(),
            Instance::Mkp(i) => i.n(),
        }
    }
}

/// Task-tagged solution payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// Permutation of node indices.
    Tour(Vec<usize>),
    /// Routes over customer indices (0-based, depot implicit at both ends).
    Routes(Vec<Vec<usize>>),
    /// Bin index for each item, in stream order.
    Bins(Vec<usize>),
    /// Selection flag per item.
    Selection(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Feasible { objective: f64 },
    Infeasible { reason: String },
}

impl Verdict {
    pub fn objective(&self) -> Option<f64> {
        match self {
            Verdict::Feasible { objective } => Some(*objective),
            Verdict::Infeasible { .. } => None,
        }
    }
}

/// A payload together with its recomputed objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub payload: Payload,
    pub objective: f64,
}

impl Solution {
    /// Checks feasibility and attaches the exact objective.
    pub fn checked(instance: &Instance, payload: Payload) -> Result<Self, ProblemError> {
        match evaluate(instance, &payload)? {
            Verdict::Feasible { objective } => Ok(Self { payload, objective }),
            Verdict::Infeasible { reason } => Err(ProblemError::Malformed(reason)),
        }
    }
}

fn check_permutation(seq: impl Iterator<Item = usize>, n: usize, what: &str) -> Result<(), ProblemError> {
    let mut seen = vec![false; n];
    let mut count = 0;
    for v in seq {
        if v >= n {
            return Err(ProblemError::DimensionMismatch(format!("{what} index {v} out of range 0..{n}")));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(ProblemError::Malformed(format!("duplicate {what} {v}")));
        }
        count += 1;
    }
    if count != n {
        let missing = seen.iter().position(|s| !s).unwrap_or(0);
        return Err(ProblemError::Malformed(format!("missing {what} {missing}")));
    }
    Ok(())
}

/// Exact objective plus feasibility verdict.
///
/// Structural defects (wrong payload kind, out-of-range or repeated indices)
/// are errors; constraint violations come back as [`Verdict::Infeasible`].
pub fn evaluate(instance: &Instance, payload: &Payload) -> Result<Verdict, ProblemError> {
    match (instance, payload) {
        (Instance::Tsp(inst), Payload::Tour(tour)) => {
            check_permutation(tour.iter().copied(), inst.n(), "tour node")?;
            let kind = inst.distance;
            let n = tour.len();
            let len = (0..n)
                .map(|i| kind.length(&inst.coords[tour[i]], &inst.coords[tour[(i + 1) % n]]))
                .sum();
            Ok(Verdict::Feasible { objective: len })
        }
        (Instance::Cvrp(inst), Payload::Routes(routes)) => {
            check_permutation(routes.iter().flatten().copied(), inst.customers.len(), "customer")?;
            let mut total = 0.0;
            for (r, route) in routes.iter().enumerate() {
                if route.is_empty() {
                    continue;
                }
                let load: u64 = route.iter().map(|&c| inst.customers[c].demand as u64).sum();
                if load > inst.capacity as u64 {
                    return Ok(Verdict::Infeasible {
                        reason: format!("route {r} load {load} exceeds capacity {}", inst.capacity),
                    });
                }
                let mut prev = inst.depot;
                for &c in route {
                    total += prev.dist(&inst.customers[c].at);
                    prev = inst.customers[c].at;
                }
                total += prev.dist(&inst.depot);
            }
            Ok(Verdict::Feasible { objective: total })
        }
        (Instance::Bpp(inst), Payload::Bins(assign)) => {
            if assign.len() != inst.items.len() {
                return Err(ProblemError::DimensionMismatch(format!(
                    "{} bin assignments for {} items",
                    assign.len(),
                    inst.items.len()
                )));
            }
            let mut loads: std::collections::BTreeMap<usize, u64> = Default::default();
            for (&b, &w) in assign.iter().zip(&inst.items) {
                *loads.entry(b).or_default() += w as u64;
            }
            if let Some((b, l)) = loads.iter().find(|(_, &l)| l > inst.capacity as u64) {
                return Ok(Verdict::Infeasible {
                    reason: format!("bin {b} load {l} exceeds capacity {}", inst.capacity),
                });
            }
            Ok(Verdict::Feasible {
                objective: loads.len() as f64,
            })
        }
        (Instance::Mkp(inst), Payload::Selection(sel)) => {
            if sel.len() != inst.n() {
                return Err(ProblemError::DimensionMismatch(format!(
                    "{} selection flags for {} items",
                    sel.len(),
                    inst.n()
                )));
            }
            for (j, row) in inst.weights.iter().enumerate() {
                let used: u64 = row.iter().zip(sel).filter(|(_, &s)| s).map(|(&a, _)| a as u64).sum();
                if used > inst.capacities[j] {
                    return Ok(Verdict::Infeasible {
                        reason: format!("constraint {j} uses {used} > {}", inst.capacities[j]),
                    });
                }
            }
            let profit: u64 = inst.profits.iter().zip(sel).filter(|(_, &s)| s).map(|(&p, _)| p as u64).sum();
            Ok(Verdict::Feasible {
                objective: -(profit as f64),
            })
        }
        (inst, _) => Err(ProblemError::DimensionMismatch(format!(
            "payload kind does not match a {} instance",
            inst.task()
        ))),
    }
}

/// Relative gap as a fraction: `(f − f*) / |f*|`.
pub fn relative_gap(f: f64, f_star: f64) -> Result<f64, ProblemError> {
    if f_star == 0.0 || !f_star.is_finite() {
        return Err(ProblemError::ZeroReference);
    }
    Ok((f - f_star) / f_star.abs())
}

/// Gap in percent: `(f − f*) / |f*| × 100`.
pub fn gap(f: f64, f_star: f64) -> Result<f64, ProblemError> {
    relative_gap(f, f_star).map(|g| g * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn square() -> TspInstance {
        TspInstance::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn tsp_square_perimeter() {
        let v = evaluate(&Instance::Tsp(square()), &Payload::Tour(vec![0, 1, 2, 3])).unwrap();
        assert_eq!(v, Verdict::Feasible { objective: 4.0 });
    }

    #[test]
    fn tsp_rejects_duplicates_and_wrong_kind() {
        let inst = Instance::Tsp(square());
        assert!(matches!(
            evaluate(&inst, &Payload::Tour(vec![0, 1, 1, 3])),
            Err(ProblemError::Malformed(_))
        ));
        assert!(matches!(
            evaluate(&inst, &Payload::Tour(vec![0, 1, 2])),
            Err(ProblemError::Malformed(_))
        ));
        assert!(matches!(
            evaluate(&inst, &Payload::Selection(vec![true; 4])),
            Err(ProblemError::DimensionMismatch(_))
        ));
    }

    fn small_cvrp() -> CvrpInstance {
        CvrpInstance {
            depot: Point::new(0.0, 0.0),
            customers: vec![
                Customer { at: Point::new(1.0, 0.0), demand: 3 },
                Customer { at: Point::new(0.0, 1.0), demand: 3 },
                Customer { at: Point::new(-1.0, 0.0), demand: 2 },
            ],
            capacity: 5,
            reference_optimum: None,
        }
    }

    #[test]
    fn cvrp_capacity_violation_is_a_verdict() {
        let inst = Instance::Cvrp(small_cvrp());
        let v = evaluate(&inst, &Payload::Routes(vec![vec![0, 1, 2]])).unwrap();
        assert!(matches!(v, Verdict::Infeasible { .. }));
        let ok = evaluate(&inst, &Payload::Routes(vec![vec![0, 2], vec![1]])).unwrap();
        assert!(ok.objective().is_some());
    }

    #[test]
    fn cvrp_cost_ignores_route_order() {
        let inst = Instance::Cvrp(small_cvrp());
        let a = evaluate(&inst, &Payload::Routes(vec![vec![0, 2], vec![1]])).unwrap();
        let b = evaluate(&inst, &Payload::Routes(vec![vec![1], vec![0, 2]])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mkp_empty_selection_is_zero() {
        let inst = Instance::Mkp(MkpInstance {
            profits: vec![3, 4],
            weights: vec![vec![2, 3]],
            capacities: vec![4],
            reference_optimum: None,
        });
        let v = evaluate(&inst, &Payload::Selection(vec![false, false])).unwrap();
        assert_eq!(v.objective(), Some(0.0));
        let v = evaluate(&inst, &Payload::Selection(vec![true, true])).unwrap();
        assert!(matches!(v, Verdict::Infeasible { .. }));
    }

    #[test]
    fn bpp_counts_bins() {
        let inst = Instance::Bpp(BppInstance { items: vec![60, 50, 40], capacity: 100 });
        let v = evaluate(&inst, &Payload::Bins(vec![0, 1, 0])).unwrap();
        assert_eq!(v.objective(), Some(2.0));
        let v = evaluate(&inst, &Payload::Bins(vec![0, 0, 1])).unwrap();
        assert!(matches!(v, Verdict::Infeasible { .. }));
    }

    #[test]
    fn gap_examples() {
        assert_eq!(gap(105.0, 100.0).unwrap(), 5.0);
        assert_eq!(gap(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(gap(-95.0, -100.0).unwrap(), 5.0);
        assert_eq!(gap(1.0, 0.0), Err(ProblemError::ZeroReference));
    }

    #[test]
    fn instance_json_is_task_tagged() {
        let inst = Instance::Tsp(square());
        let json = serde_json::to_value(&inst).unwrap();
        assert_eq!(json["task"], "tsp");
        let back: Instance = serde_json::from_value(json).unwrap();
        assert_eq!(back, inst);
    }
}
