//! Synthetic instance generators. Output is a pure function of `(params, seed)`.

use rand::Rng;
use rand_distr::{Distribution, Normal, Weibull};
use serde::{Deserialize, Serialize};

use super::{BppInstance, Customer, CvrpInstance, Instance, MkpInstance, Point, ProblemError, Task, TspInstance};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TspPattern {
    Uniform,
    Clustered,
    JitteredGrid,
    Ring,
    ElongatedRectangle,
}

impl TspPattern {
    pub const ALL: [TspPattern; 5] = [
        TspPattern::Uniform,
        TspPattern::Clustered,
        TspPattern::JitteredGrid,
        TspPattern::Ring,
        TspPattern::ElongatedRectangle,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspParams {
    pub n: usize,
    /// Fixed layout; drawn uniformly from the five patterns when absent.
    #[serde(default)]
    pub pattern: Option<TspPattern>,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "default_ring_radius")]
    pub ring_radius: f64,
    #[serde(default = "default_ring_noise")]
    pub ring_noise: f64,
    #[serde(default = "default_aspect")]
    pub aspect: f64,
}

fn default_clusters() -> usize {
    5
}
fn default_jitter() -> f64 {
    0.02
}
fn default_ring_radius() -> f64 {
    0.4
}
fn default_ring_noise() -> f64 {
    0.02
}
fn default_aspect() -> f64 {
    4.0
}

impl TspParams {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            pattern: None,
            clusters: default_clusters(),
            jitter: default_jitter(),
            ring_radius: default_ring_radius(),
            ring_noise: default_ring_noise(),
            aspect: default_aspect(),
        }
    }

    pub fn with_pattern(n: usize, pattern: TspPattern) -> Self {
        Self {
            pattern: Some(pattern),
            ..Self::new(n)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvrpParams {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BppParams {
    pub n_items: usize,
    pub capacity: u32,
    #[serde(default = "default_shape")]
    pub weibull_shape: f64,
    #[serde(default = "default_scale")]
    pub weibull_scale: f64,
}

fn default_shape() -> f64 {
    3.0
}
fn default_scale() -> f64 {
    45.0
}

impl BppParams {
    pub fn new(n_items: usize, capacity: u32) -> Self {
        Self {
            n_items,
            capacity,
            weibull_shape: default_shape(),
            weibull_scale: default_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MkpParams {
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum GenParams {
    Tsp(TspParams),
    Cvrp(CvrpParams),
    Bpp(BppParams),
    Mkp(MkpParams),
}

impl GenParams {
    pub fn task(&self) -> Task {
        match self {
            GenParams::Tsp(_) => Task::Tsp,
            GenParams::Cvrp(_) => Task::Cvrp,
            GenParams::Bpp(_) => Task::Bpp,
            GenParams::Mkp(_) => Task::Mkp,
        }
    }
}

pub fn generate(params: &GenParams, seed: u64) -> Result<Instance, ProblemError> {
    let mut rng = seed::rng(seed);
    let inst = match params {
        GenParams::Tsp(p) => Instance::Tsp(gen_tsp(p, &mut rng)?),
        GenParams::Cvrp(p) => Instance::Cvrp(gen_cvrp(p, &mut rng)?),
        GenParams::Bpp(p) => Instance::Bpp(gen_bpp(p, &mut rng)?),
        GenParams::Mkp(p) => Instance::Mkp(gen_mkp(p, &mut rng)?),
    };
    inst.validate()?;
    Ok(inst)
}

fn unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn gen_tsp(p: &TspParams, rng: &mut impl Rng) -> Result<TspInstance, ProblemError> {
    if p.n < 3 {
        return Err(ProblemError::InvalidParams(format!("TSP needs n >= 3, got {}", p.n)));
    }
    if p.clusters == 0 || p.aspect < 1.0 || p.jitter < 0.0 || p.ring_noise < 0.0 {
        return Err(ProblemError::InvalidParams("bad TSP pattern parameters".into()));
    }
    let pattern = match p.pattern {
        Some(pat) => pat,
        None => TspPattern::ALL[rng.random_range(0..TspPattern::ALL.len())],
    };
    let n = p.n;
    let coords = match pattern {
        TspPattern::Uniform => (0..n).map(|_| Point::new(rng.random(), rng.random())).collect(),
        TspPattern::Clustered => {
            let centers: Vec<Point> = (0..p.clusters)
                .map(|_| Point::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)))
                .collect();
            let spread = Normal::new(0.0, 0.05).expect("valid normal");
            (0..n)
                .map(|_| {
                    let c = centers[rng.random_range(0..centers.len())];
                    Point::new(unit(c.x + spread.sample(rng)), unit(c.y + spread.sample(rng)))
                })
                .collect()
        }
        TspPattern::JitteredGrid => {
            let side = (n as f64).sqrt().ceil() as usize;
            let mut cells: Vec<usize> = (0..side * side).collect();
            // partial Fisher-Yates: keep n random cells
            for i in 0..n {
                let j = rng.random_range(i..cells.len());
                cells.swap(i, j);
            }
            let jitter = Normal::new(0.0, p.jitter).expect("valid normal");
            cells[..n]
                .iter()
                .map(|&c| {
                    let (r, q) = (c / side, c % side);
                    let x = (q as f64 + 0.5) / side as f64;
                    let y = (r as f64 + 0.5) / side as f64;
                    Point::new(unit(x + jitter.sample(rng)), unit(y + jitter.sample(rng)))
                })
                .collect()
        }
        TspPattern::Ring => (0..n)
            .map(|_| {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let r = p.ring_radius + rng.random_range(-p.ring_noise..=p.ring_noise);
                Point::new(unit(0.5 + r * a.cos()), unit(0.5 + r * a.sin()))
            })
            .collect(),
        TspPattern::ElongatedRectangle => {
            let h = 1.0 / p.aspect;
            let y0 = 0.5 - h / 2.0;
            (0..n)
                .map(|_| Point::new(rng.random(), y0 + h * rng.random::<f64>()))
                .collect()
        }
    };
    TspInstance::new(coords)
}

fn gen_cvrp(p: &CvrpParams, rng: &mut impl Rng) -> Result<CvrpInstance, ProblemError> {
    if p.n < 1 {
        return Err(ProblemError::InvalidParams("CVRP needs at least one customer".into()));
    }
    let depot = Point::new(rng.random(), rng.random());
    let customers = (0..p.n)
        .map(|_| Customer {
            at: Point::new(rng.random(), rng.random()),
            demand: rng.random_range(1..=9),
        })
        .collect();
    // Q = ceil(0.5 n), but never below the largest possible demand
    let capacity = (p.n.div_ceil(2) as u32).max(9);
    Ok(CvrpInstance {
        depot,
        customers,
        capacity,
        reference_optimum: None,
    })
}

fn gen_bpp(p: &BppParams, rng: &mut impl Rng) -> Result<BppInstance, ProblemError> {
    if p.capacity == 0 {
        return Err(ProblemError::InvalidParams("capacity must be positive".into()));
    }
    if p.n_items == 0 {
        return Err(ProblemError::InvalidParams("need at least one item".into()));
    }
    let dist = Weibull::new(p.weibull_scale, p.weibull_shape)
        .map_err(|e| ProblemError::InvalidParams(format!("Weibull: {e}")))?;
    let items = (0..p.n_items)
        .map(|_| {
            let w: f64 = dist.sample(rng);
            (w.ceil() as u32).clamp(1, p.capacity)
        })
        .collect();
    Ok(BppInstance {
        items,
        capacity: p.capacity,
    })
}

fn gen_mkp(p: &MkpParams, rng: &mut impl Rng) -> Result<MkpInstance, ProblemError> {
    if p.n == 0 || p.m == 0 {
        return Err(ProblemError::InvalidParams("MKP needs n >= 1 and m >= 1".into()));
    }
    let profits = (0..p.n).map(|_| rng.random_range(1..=100)).collect();
    let weights: Vec<Vec<u32>> = (0..p.m)
        .map(|_| (0..p.n).map(|_| rng.random_range(1..=100)).collect())
        .collect();
    let capacities = weights
        .iter()
        .map(|row| (row.iter().map(|&a| a as u64).sum::<u64>() / 2).max(1))
        .collect();
    Ok(MkpInstance {
        profits,
        weights,
        capacities,
        reference_optimum: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cvrp_capacity_is_half_n() {
        let Instance::Cvrp(c) = generate(&GenParams::Cvrp(CvrpParams { n: 100 }), 1).unwrap() else {
            panic!()
        };
        assert_eq!(c.capacity, 50);
        assert!(c.customers.iter().all(|x| (1..=9).contains(&x.demand)));
    }

    #[test]
    fn mkp_capacities_are_half_column_sums() {
        let Instance::Mkp(m) = generate(&GenParams::Mkp(MkpParams { n: 100, m: 5 }), 3).unwrap() else {
            panic!()
        };
        assert_eq!(m.capacities.len(), 5);
        for (row, &b) in m.weights.iter().zip(&m.capacities) {
            let sum: u64 = row.iter().map(|&a| a as u64).sum();
            assert_eq!(b, sum / 2);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for params in [
            GenParams::Tsp(TspParams::new(50)),
            GenParams::Cvrp(CvrpParams { n: 20 }),
            GenParams::Bpp(BppParams::new(100, 100)),
            GenParams::Mkp(MkpParams { n: 30, m: 5 }),
        ] {
            let a = serde_json::to_string(&generate(&params, 42).unwrap()).unwrap();
            let b = serde_json::to_string(&generate(&params, 42).unwrap()).unwrap();
            let c = serde_json::to_string(&generate(&params, 43).unwrap()).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn every_tsp_pattern_stays_in_unit_square() {
        for pat in TspPattern::ALL {
            let Instance::Tsp(t) = generate(&GenParams::Tsp(TspParams::with_pattern(200, pat)), 9).unwrap() else {
                panic!()
            };
            assert_eq!(t.n(), 200);
            assert!(t.coords.iter().all(|p| (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)));
        }
    }

    #[test]
    fn bpp_items_fit_capacity() {
        let Instance::Bpp(b) = generate(&GenParams::Bpp(BppParams::new(1000, 100)), 5).unwrap() else {
            panic!()
        };
        assert!(b.items.iter().all(|&w| (1..=100).contains(&w)));
        let mean = b.items.iter().map(|&w| w as f64).sum::<f64>() / 1000.0;
        // Weibull(k=3, λ=45) has mean ≈ 40.2; ceiling adds about half a unit
        assert!((38.0..43.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(generate(&GenParams::Tsp(TspParams::new(2)), 0).is_err());
        assert!(generate(&GenParams::Bpp(BppParams::new(10, 0)), 0).is_err());
    }
}
