//! Coarse-then-focus sampling: a cheap coarse pass, hitting-probability
//! PDFs, per-ray budgets, and inverse-transform focused sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{RadianceField, Rgb, Stage};
use crate::geometry::Ray;
use crate::volume::{intervals, weights_from_intervals};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Coarse points per ray.
    pub n_coarse: usize,
    /// Source views used by the coarse pass.
    pub coarse_views: usize,
    /// Average focused points per ray.
    pub n_focused: usize,
    /// Per-ray cap on focused points.
    pub n_max: usize,
    /// Hitting-probability threshold for critical points.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Jitter coarse depths within equal strata; otherwise use stratum
    /// midpoints.
    #[serde(default = "default_true")]
    pub stratified_coarse: bool,
}

fn default_tau() -> f64 {
    1e-2
}

fn default_true() -> bool {
    true
}

impl SamplingConfig {
    pub fn validate(&self, source_views: usize) -> Result<()> {
        if self.n_coarse == 0 {
            return Err(Error::Config("n_coarse must be at least 1".into()));
        }
        if self.coarse_views == 0 || self.coarse_views > source_views {
            return Err(Error::Config(format!("coarse_views must lie in 1..={source_views}")));
        }
        if self.n_focused == 0 || self.n_focused > self.n_max {
            return Err(Error::Config("need 1 <= n_focused <= n_max".into()));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::Config("tau must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

pub const COARSE_TAG: u64 = 0x636f_6172_7365;
pub const FOCUS_TAG: u64 = 0x66_6f63_7573;
const UNIFORM_TAG: u64 = 0x756e_6966;

/// Independent stream for `(seed, purpose, ray)`; identical regardless of
/// evaluation order or thread count.
pub fn ray_rng(seed: u64, tag: u64, ray: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(ray as u64);
    rng
}

/// `n` depths in `[t_near, t_far)`, one per equal stratum.
pub fn stratified_depths(t_near: f64, t_far: f64, n: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<f64> {
    let step = (t_far - t_near) / n as f64;
    match rng {
        Some(rng) => (0..n).map(|k| t_near + (k as f64 + rng.gen::<f64>()) * step).collect(),
        None => (0..n).map(|k| t_near + (k as f64 + 0.5) * step).collect(),
    }
}

/// Coarse-pass result for one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    pub t_near: f64,
    pub t_far: f64,
    pub depths: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub colors: Vec<Rgb>,
    pub transmittance: Vec<f64>,
    pub weights: Vec<f64>,
    /// Transmittance past the last interval.
    pub residual: f64,
}

impl WeightProfile {
    pub fn new(depths: Vec<f64>, sigmas: Vec<f64>, colors: Vec<Rgb>, t_near: f64, t_far: f64) -> Result<Self> {
        if depths.is_empty() {
            return Err(Error::Domain("profile needs at least one depth".into()));
        }
        if depths.windows(2).any(|w| !(w[0] < w[1])) || !(depths[0] >= t_near) || !(depths[depths.len() - 1] <= t_far) {
            return Err(Error::Domain("profile depths must increase within [t_near, t_far]".into()));
        }
        if sigmas.len() != depths.len() || colors.len() != depths.len() {
            return Err(Error::Domain("profile arrays differ in length".into()));
        }
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::NumericInput("density".into()));
        }
        let (weights, transmittance, residual) = weights_from_intervals(&sigmas, &intervals(&depths, t_far));
        Ok(Self { t_near, t_far, depths, sigmas, colors, transmittance, weights, residual })
    }

    pub fn critical_count(&self, tau: f64) -> usize {
        self.weights.iter().filter(|&&w| w >= tau).count()
    }
}

/// Evaluates the coarse stage on every ray. Depths are stratified with
/// per-ray streams (or midpoints when not stratified).
pub fn coarse_pass<F: RadianceField + ?Sized>(
    rays: &[Ray],
    cfg: &SamplingConfig,
    field: &F,
    seed: u64,
) -> Result<Vec<WeightProfile>> {
    if cfg.n_coarse == 0 {
        return Err(Error::Config("n_coarse must be at least 1".into()));
    }
    rays.par_iter().enumerate().map(|(j, ray)| coarse_profile(ray, j, cfg, field, seed)).collect()
}

/// Coarse profile of ray number `index`.
pub fn coarse_profile<F: RadianceField + ?Sized>(
    ray: &Ray,
    index: usize,
    cfg: &SamplingConfig,
    field: &F,
    seed: u64,
) -> Result<WeightProfile> {
    let depths = if cfg.stratified_coarse {
        let mut rng = ray_rng(seed, COARSE_TAG, index);
        stratified_depths(ray.t_near, ray.t_far, cfg.n_coarse, Some(&mut rng))
    } else {
        stratified_depths(ray.t_near, ray.t_far, cfg.n_coarse, None)
    };
    let evals = field.eval_ray(ray, &depths, Stage::Coarse)?;
    let (sigmas, colors) = evals.into_iter().unzip();
    WeightProfile::new(depths, sigmas, colors, ray.t_near, ray.t_far)
}

/// Focused-sampling density of one ray. `conditional[k]` is `P(k|j)` for
/// coarse point `k`; its mass is spread uniformly over the two intervals
/// adjacent to that point, since the coarse samples only say that matter
/// lies somewhere between their neighbors. The result is piecewise constant
/// over the partition `edges` (`t_near`, the coarse depths, `t_far`), with
/// `mass[i]` on `[edges[i], edges[i+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayPdf {
    pub conditional: Vec<f64>,
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl RayPdf {
    /// `P(k|j)` is proportional to every coarse weight; an all-zero ray (or
    /// the global fallback) is uniform over coarse points.
    pub fn from_profile(p: &WeightProfile, uniform: bool) -> Self {
        let n = p.weights.len();
        let total: f64 = p.weights.iter().sum();
        let conditional: Vec<f64> =
            if uniform || !(total > 0.0) { vec![1.0 / n as f64; n] } else { p.weights.iter().map(|w| w / total).collect() };
        let mut edges = Vec::with_capacity(n + 2);
        edges.push(p.t_near);
        edges.extend_from_slice(&p.depths);
        edges.push(p.t_far);
        let len: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
        let mut mass = vec![0.0; n + 1];
        for (k, &c) in conditional.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let span = len[k] + len[k + 1];
            if span > 0.0 {
                mass[k] += c * len[k] / span;
                mass[k + 1] += c * len[k + 1] / span;
            } else {
                mass[k] += c;
            }
        }
        Self { conditional, edges, mass }
    }

    fn cdf(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.mass.len() + 1);
        let mut acc = 0.0;
        c.push(0.0);
        for m in &self.mass {
            acc += m;
            c.push(acc);
        }
        *c.last_mut().unwrap() = 1.0;
        c
    }

    /// Inverse-transform of `u ∈ [0, 1)`.
    pub fn invert(&self, cdf: &[f64], u: f64) -> f64 {
        let n = self.mass.len();
        let mut k = cdf[1..].partition_point(|&c| c <= u).min(n - 1);
        while self.mass[k] <= 0.0 && k > 0 {
            k -= 1;
        }
        let frac = if self.mass[k] > 0.0 { ((u - cdf[k]) / self.mass[k]).clamp(0.0, 1.0) } else { 0.0 };
        self.edges[k] + frac * (self.edges[k + 1] - self.edges[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPdf {
    pub rays: Vec<RayPdf>,
    /// Selection probability `P(j)`.
    pub ray_prob: Vec<f64>,
    /// Critical-point count per ray.
    pub critical: Vec<u32>,
    /// No ray had a critical point; everything is uniform.
    pub fallback: bool,
}

pub fn critical_probabilities(critical: &[u32]) -> (Vec<f64>, bool) {
    let total: u64 = critical.iter().map(|&c| c as u64).sum();
    if total == 0 {
        let n = critical.len() as f64;
        (vec![1.0 / n; critical.len()], true)
    } else {
        (critical.iter().map(|&c| c as f64 / total as f64).collect(), false)
    }
}

pub fn build_pdf(profiles: &[WeightProfile], tau: f64) -> Result<SamplingPdf> {
    if profiles.is_empty() {
        return Err(Error::Domain("build_pdf needs at least one ray".into()));
    }
    let critical: Vec<u32> = profiles.iter().map(|p| p.critical_count(tau) as u32).collect();
    let (ray_prob, fallback) = critical_probabilities(&critical);
    let rays = profiles.iter().map(|p| RayPdf::from_profile(p, fallback)).collect();
    Ok(SamplingPdf { rays, ray_prob, critical, fallback })
}

/// Largest-remainder apportionment of `budget` by `prob`, capped at `n_max`
/// per ray with the overflow re-apportioned among uncapped rays. The total
/// is `min(budget, n_max · #{j : prob_j > 0})`.
pub fn allocate_budget(prob: &[f64], budget: u64, n_max: u32) -> Vec<u32> {
    let mut counts = vec![0u32; prob.len()];
    let mut active: Vec<usize> = (0..prob.len()).filter(|&j| prob[j] > 0.0).collect();
    let mut remaining = budget.min(active.len() as u64 * n_max as u64);
    while remaining > 0 && !active.is_empty() {
        let mass: f64 = active.iter().map(|&j| prob[j]).sum();
        let mut floors = Vec::with_capacity(active.len());
        let mut rems = Vec::with_capacity(active.len());
        let mut assigned = 0u64;
        for (i, &j) in active.iter().enumerate() {
            let q = remaining as f64 * prob[j] / mass;
            let f = (q.floor() as u64).min(remaining);
            floors.push(f);
            assigned += f;
            rems.push((q - f as f64, i));
        }
        let mut left = remaining.saturating_sub(assigned);
        if left > 0 {
            rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, i) in rems.iter().take(left as usize) {
                floors[i] += 1;
            }
            left = left.saturating_sub(rems.len() as u64);
            // Float slack can leave a few points over; hand them out in order.
            let (mut i, n) = (0, floors.len());
            while left > 0 {
                floors[i % n] += 1;
                left -= 1;
                i += 1;
            }
        }
        let mut next = Vec::with_capacity(active.len());
        let mut capped = false;
        for (i, &j) in active.iter().enumerate() {
            if counts[j] as u64 + floors[i] >= n_max as u64 {
                remaining -= n_max as u64 - counts[j] as u64;
                counts[j] = n_max;
                capped = true;
            } else {
                next.push((j, floors[i]));
            }
        }
        if !capped {
            for (j, f) in next {
                counts[j] += f as u32;
            }
            break;
        }
        // Redo the uncapped rays against what is left.
        active = next.into_iter().map(|(j, _)| j).collect();
    }
    counts
}

/// Per-ray focused depths: stratified inverse-transform samples of each
/// ray's conditional density, sorted ascending.
pub fn focused_sample(pdf: &SamplingPdf, counts: &[u32], seed: u64) -> Vec<Vec<f64>> {
    pdf.rays
        .par_iter()
        .zip(counts.par_iter())
        .enumerate()
        .map(|(j, (ray, &n))| sample_ray(ray, n as usize, &mut ray_rng(seed, FOCUS_TAG, j)))
        .collect()
}

pub fn sample_ray(pdf: &RayPdf, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let cdf = pdf.cdf();
    let mut out: Vec<f64> = (0..n).map(|i| pdf.invert(&cdf, (i as f64 + rng.gen::<f64>()) / n as f64)).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Stratified depths for the uniform-sampling baseline.
pub fn uniform_depths(ray: &Ray, n: usize, seed: u64, index: usize) -> Vec<f64> {
    stratified_depths(ray.t_near, ray.t_far, n, Some(&mut ray_rng(seed, UNIFORM_TAG, index)))
}
