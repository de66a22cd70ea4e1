//! Instance profiles, z-score normalization, K-means grouping and
//! nearest-prototype assignment.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{BppInstance, CvrpInstance, Instance, MkpInstance, Point, Task, TspInstance};
use crate::seed;

/// Pairwise statistics are exact up to this many nodes and sampled above it.
pub const EXACT_PAIR_LIMIT: usize = 320;
pub const PAIR_SAMPLES: usize = 50_000;
pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;
/// Cap on the covariance eigenvalue ratio for (near-)collinear layouts.
const ANISOTROPY_CAP: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("need at least {groups} profiles, got {profiles}")]
    TooFewProfiles { profiles: usize, groups: usize },
    #[error("group count must be at least 1")]
    ZeroGroups,
    #[error("profile task {got} does not match model task {expected}")]
    TaskMismatch { expected: Task, got: Task },
    #[error("profiles have inconsistent lengths")]
    LengthMismatch,
    #[error("non-finite feature value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceProfile {
    pub task: Task,
    pub features: Vec<f64>,
    /// Set when a ratio feature had a zero denominator and was reported as 0.
    #[serde(default)]
    pub degenerate: bool,
}

impl InstanceProfile {
    pub fn feature_names(task: Task) -> &'static [&'static str] {
        const GEO: [&str; 8] = [
            "log_n",
            "pair_cv",
            "log_q90_q10",
            "dens",
            "nn_cv",
            "anisotropy",
            "log_bbox_aspect",
            "radial_cv",
        ];
        const CVRP: [&str; 9] = [
            "log_n",
            "pair_cv",
            "log_q90_q10",
            "dens",
            "nn_cv",
            "anisotropy",
            "log_bbox_aspect",
            "radial_cv",
            "demand_over_capacity",
        ];
        const BPP: [&str; 7] = ["log_items", "log_capacity", "mean_c", "std_c", "q10_c", "q50_c", "q90_c"];
        const MKP: [&str; 9] = [
            "log_n",
            "log_d",
            "profit_mean",
            "profit_std",
            "weight_mean",
            "weight_std",
            "cap_ratio_mean",
            "cap_ratio_min",
            "cap_ratio_max",
        ];
        match task {
            Task::Tsp => &GEO,
            Task::Cvrp => &CVRP,
            Task::Bpp => &BPP,
            Task::Mkp => &MKP,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct Ratios {
    degenerate: bool,
}

impl Ratios {
    /// `num / den`, or 0 with the degeneracy flag when `den` vanishes.
    fn div(&mut self, num: f64, den: f64) -> f64 {
        if den > 0.0 && den.is_finite() {
            num / den
        } else {
            self.degenerate = true;
            0.0
        }
    }

    /// `ln(num / den)`, or 0 with the flag when either side vanishes.
    fn log_ratio(&mut self, num: f64, den: f64) -> f64 {
        if num > 0.0 && den > 0.0 {
            (num / den).ln()
        } else {
            self.degenerate = true;
            0.0
        }
    }
}

fn pair_distances(pts: &[Point]) -> Vec<f64> {
    let n = pts.len();
    if n <= EXACT_PAIR_LIMIT {
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(pts[i].dist(&pts[j]));
            }
        }
        out
    } else {
        let mut rng = seed::rng(seed::derive(n as u64, "profile-pairs", 0));
        (0..PAIR_SAMPLES)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                pts[i].dist(&pts[j])
            })
            .collect()
    }
}

fn nn_distances(pts: &[Point]) -> Vec<f64> {
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            pts.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| p.dist(q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn geometric_features(pts: &[Point], r: &mut Ratios) -> Vec<f64> {
    let n = pts.len();
    let mut pair = pair_distances(pts);
    pair.sort_by(f64::total_cmp);
    let mu_pair = mean(&pair);
    let pair_cv = r.div(std_dev(&pair), mu_pair);
    let spread = r.log_ratio(quantile(&pair, 0.9), quantile(&pair, 0.1));
    let nn = nn_distances(pts);
    let mu_nn = mean(&nn);
    let dens = r.log_ratio(mu_pair, mu_nn);
    let nn_cv = r.div(std_dev(&nn), mu_nn);

    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n as f64;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        sxx += (p.x - cx).powi(2);
        syy += (p.y - cy).powi(2);
        sxy += (p.x - cx) * (p.y - cy);
    }
    let (sxx, syy, sxy) = (sxx / n as f64, syy / n as f64, sxy / n as f64);
    let half_tr = (sxx + syy) / 2.0;
    let disc = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
    let (l1, l2) = (half_tr + disc, (half_tr - disc).max(0.0));
    let anisotropy = if l1 <= 0.0 {
        r.degenerate = true;
        0.0
    } else if l2 <= l1 / (ANISOTROPY_CAP * ANISOTROPY_CAP) {
        r.degenerate = true;
        ANISOTROPY_CAP
    } else {
        (l1 / l2).sqrt()
    };

    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        xmin = xmin.min(p.x);
        xmax = xmax.max(p.x);
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    let (w, h) = (xmax - xmin, ymax - ymin);
    let aspect = r.log_ratio(w.max(h), w.min(h));

    let radial: Vec<f64> = pts.iter().map(|p| p.dist(&Point::new(cx, cy))).collect();
    let radial_cv = r.div(std_dev(&radial), mean(&radial));

    vec![
        (n as f64).ln(),
        pair_cv,
        spread,
        dens,
        nn_cv,
        anisotropy,
        aspect,
        radial_cv,
    ]
}

fn tsp_profile(t: &TspInstance) -> InstanceProfile {
    let mut r = Ratios { degenerate: false };
    let features = geometric_features(&t.coords, &mut r);
    InstanceProfile {
        task: Task::Tsp,
        features,
        degenerate: r.degenerate,
    }
}

fn cvrp_profile(c: &CvrpInstance) -> InstanceProfile {
    let mut r = Ratios { degenerate: false };
    let nodes = c.nodes();
    let mut features = geometric_features(&nodes, &mut r);
    features[0] = (c.customers.len() as f64).ln();
    features.push(c.total_demand() as f64 / c.capacity as f64);
    InstanceProfile {
        task: Task::Cvrp,
        features,
        degenerate: r.degenerate,
    }
}

fn bpp_profile(b: &BppInstance) -> InstanceProfile {
    let c = b.capacity as f64;
    let mut rel: Vec<f64> = b.items.iter().map(|&w| w as f64 / c).collect();
    rel.sort_by(f64::total_cmp);
    InstanceProfile {
        task: Task::Bpp,
        features: vec![
            (b.items.len() as f64).ln(),
            c.ln(),
            mean(&rel),
            std_dev(&rel),
            quantile(&rel, 0.1),
            quantile(&rel, 0.5),
            quantile(&rel, 0.9),
        ],
        degenerate: false,
    }
}

fn mkp_profile(m: &MkpInstance) -> InstanceProfile {
    let profits: Vec<f64> = m.profits.iter().map(|&p| p as f64).collect();
    let weights: Vec<f64> = m.weights.iter().flatten().map(|&a| a as f64).collect();
    let ratios: Vec<f64> = m
        .weights
        .iter()
        .zip(&m.capacities)
        .map(|(row, &b)| b as f64 / row.iter().map(|&a| a as f64).sum::<f64>())
        .collect();
    InstanceProfile {
        task: Task::Mkp,
        features: vec![
            (m.n() as f64).ln(),
            (m.d() as f64).ln(),
            mean(&profits),
            std_dev(&profits),
            mean(&weights),
            std_dev(&weights),
            mean(&ratios),
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ],
        degenerate: false,
    }
}

/// Task-specific profile vector φ(x).
pub fn extract_profile(instance: &Instance) -> InstanceProfile {
    match instance {
        Instance::Tsp(t) => tsp_profile(t),
        Instance::Cvrp(c) => cvrp_profile(c),
        Instance::Bpp(b) => bpp_profile(b),
        Instance::Mkp(m) => mkp_profile(m),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Fitted normalization plus G prototypes in normalized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupModel {
    pub task: Task,
    #[serde(rename = "G")]
    pub g: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub prototypes: Vec<Vec<f64>>,
}

impl GroupModel {
    pub fn normalize(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.g == 0 || self.prototypes.len() != self.g {
            return Err(ProfileError::ZeroGroups);
        }
        let p = self.means.len();
        if self.stds.len() != p || self.prototypes.iter().any(|c| c.len() != p) {
            return Err(ProfileError::LengthMismatch);
        }
        let finite = self.means.iter().chain(&self.stds).chain(self.prototypes.iter().flatten()).all(|v| v.is_finite());
        if !finite || self.stds.iter().any(|&s| s <= 0.0) {
            return Err(ProfileError::NonFinite);
        }
        Ok(())
    }
}

/// Result of [`fit_groups`]: the model plus training-side diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFit {
    pub model: GroupModel,
    /// Final group of each input profile (nearest prototype).
    pub assignments: Vec<usize>,
    /// Within-cluster SSE after every assignment step.
    pub sse_history: Vec<f64>,
}

/// Z-score statistics (population std, constant dimensions clamped to 1).
pub fn fit_normalization(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let p = rows[0].len();
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..p).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let stds = (0..p)
        .map(|k| {
            let var = rows.iter().map(|r| (r[k] - means[k]).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            if s > 1e-12 * (1.0 + means[k].abs()) {
                s
            } else {
                1.0
            }
        })
        .collect();
    (means, stds)
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (g, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (g, d);
        }
    }
    best
}

fn kmeans_pp(points: &[Vec<f64>], g: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < g {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

/// Assigns each point to its nearest center, re-seeding any empty cluster at
/// the point farthest from its current center. Returns (assignments, SSE).
fn assign(points: &[Vec<f64>], centers: &mut [Vec<f64>]) -> (Vec<usize>, f64) {
    loop {
        let mut labels = Vec::with_capacity(points.len());
        let mut dists = Vec::with_capacity(points.len());
        let mut counts = vec![0usize; centers.len()];
        for p in points {
            let (g, d) = nearest(p, centers);
            labels.push(g);
            dists.push(d);
            counts[g] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return (labels, dists.iter().sum());
        };
        // farthest point among clusters that can spare one
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .expect("at least as many points as clusters");
        centers[empty] = points[far].clone();
    }
}

/// Z-score normalizes the profiles and clusters them with k-means++ seeded
/// Lloyd iterations.
pub fn fit_groups(profiles: &[InstanceProfile], g: usize, seed: u64) -> Result<GroupFit, ProfileError> {
    if g == 0 {
        return Err(ProfileError::ZeroGroups);
    }
    if profiles.len() < g {
        return Err(ProfileError::TooFewProfiles {
            profiles: profiles.len(),
            groups: g,
        });
    }
    let task = profiles[0].task;
    let p = profiles[0].features.len();
    for pr in profiles {
        if pr.task != task {
            return Err(ProfileError::TaskMismatch { expected: task, got: pr.task });
        }
        if pr.features.len() != p {
            return Err(ProfileError::LengthMismatch);
        }
        if pr.features.iter().any(|v| !v.is_finite()) {
            return Err(ProfileError::NonFinite);
        }
    }
    let raw: Vec<Vec<f64>> = profiles.iter().map(|pr| pr.features.clone()).collect();
    let (means, stds) = fit_normalization(&raw);
    let points: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| r.iter().zip(means.iter().zip(&stds)).map(|(x, (m, s))| (x - m) / s).collect())
        .collect();

    let mut rng = seed::rng(seed);
    let mut centers = kmeans_pp(&points, g, &mut rng);
    let mut sse_history = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        let (new_labels, sse) = assign(&points, &mut centers);
        sse_history.push(sse);
        if new_labels == labels {
            break;
        }
        labels = new_labels;
        let mut sums = vec![vec![0.0; p]; g];
        let mut counts = vec![0usize; g];
        for (pt, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(pt) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for ((c, s), &k) in centers.iter_mut().zip(sums).zip(&counts) {
            let next: Vec<f64> = s.into_iter().map(|v| v / k as f64).collect();
            shift = shift.max(sq_dist(c, &next).sqrt());
            *c = next;
        }
        if shift <= KMEANS_TOL {
            let (_, sse) = assign(&points, &mut centers);
            sse_history.push(sse);
            break;
        }
    }
    let model = GroupModel {
        task,
        g,
        means,
        stds,
        prototypes: centers,
    };
    let assignments = points.iter().map(|pt| nearest(pt, &model.prototypes).0).collect();
    Ok(GroupFit {
        model,
        assignments,
        sse_history,
    })
}

/// `argmin_g ‖normalize(φ(x)) − φ_g‖₂`, ties to the lowest index.
pub fn nearest_group(profile: &InstanceProfile, model: &GroupModel) -> Result<usize, ProfileError> {
    if profile.task != model.task {
        return Err(ProfileError::TaskMismatch {
            expected: model.task,
            got: profile.task,
        });
    }
    if profile.features.len() != model.means.len() {
        return Err(ProfileError::LengthMismatch);
    }
    Ok(nearest(&model.normalize(&profile.features), &model.prototypes).0)
}
