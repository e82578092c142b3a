//! Cycle and FLOP accounting for the rendering engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::NetworkConfig;
use crate::sampling::SamplingConfig;

/// Systolic PE pool. Each cell does one MAC per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PePoolConfig {
    pub arrays: usize,
    pub rows: usize,
    pub cols: usize,
    pub frequency_hz: f64,
}

impl Default for PePoolConfig {
    fn default() -> Self {
        Self { arrays: 40, rows: 16, cols: 16, frequency_hz: 1e9 }
    }
}

impl PePoolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arrays == 0 || self.rows == 0 || self.cols == 0 || !(self.frequency_hz > 0.0) {
            return Err(Error::Config("PE pool dimensions and frequency must be positive".into()));
        }
        Ok(())
    }

    /// Peak FLOPs per cycle, counting a MAC as two.
    pub fn peak_flops_per_cycle(&self) -> u64 {
        2 * (self.arrays * self.rows * self.cols) as u64
    }

    pub fn peak_flops(&self) -> f64 {
        self.peak_flops_per_cycle() as f64 * self.frequency_hz
    }
}

/// Output-stationary `M×K · K×N`: `rows×cols` output tiles dealt round-robin
/// over the arrays, `K + rows + cols − 2` cycles per tile.
pub fn gemm_cycles(m: usize, k: usize, n: usize, pool: &PePoolConfig) -> u64 {
    if m == 0 || k == 0 || n == 0 {
        return 0;
    }
    let tiles = m.div_ceil(pool.rows) * n.div_ceil(pool.cols);
    (tiles.div_ceil(pool.arrays) * (k + pool.rows + pool.cols - 2)) as u64
}

/// Exponential and multiply-accumulate line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfuConfig {
    pub lanes: usize,
    pub latency: u64,
}

impl Default for SfuConfig {
    fn default() -> Self {
        Self { lanes: 16, latency: 4 }
    }
}

pub fn special_function_cycles(points: u64, sfu: &SfuConfig) -> u64 {
    points.div_ceil(sfu.lanes as u64) * sfu.latency
}

/// Projector and interpolator: `cycles_per_point` per point on each lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub cycles_per_point: u64,
    pub lanes: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { cycles_per_point: 8, lanes: 16 }
    }
}

pub fn preprocess_cycles(points: u64, pre: &PreprocessConfig) -> u64 {
    points.div_ceil(pre.lanes as u64) * pre.cycles_per_point
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Memory,
    Compute,
}

/// Per-patch cycle record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatchTiming {
    pub seq: usize,
    pub points: u64,
    pub bytes: u64,
    pub prefetch: u64,
    pub preprocess: u64,
    pub gemm: u64,
    pub special: u64,
}

impl PatchTiming {
    /// Preprocessing feeds the arrays in a pipeline, so the slower of the two
    /// dominates after one point's fill; rendering follows.
    pub fn compute(&self, pre: &PreprocessConfig) -> u64 {
        if self.points == 0 && self.gemm == 0 && self.special == 0 {
            return 0;
        }
        self.preprocess.max(self.gemm) + pre.cycles_per_point + self.special
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTrace {
    pub patches: Vec<PatchTiming>,
    pub total: u64,
    pub compute: u64,
    pub prefetch: u64,
    pub gemm: u64,
}

impl StageTrace {
    pub fn exposed(&self) -> u64 {
        self.total - self.compute
    }
}

/// Double-buffered schedule: the next patch's prefetch overlaps the current
/// patch's compute. Returns the total cycles.
pub fn overlap_total(prefetch: &[u64], compute: &[u64]) -> u64 {
    assert_eq!(prefetch.len(), compute.len());
    let n = prefetch.len();
    if n == 0 {
        return 0;
    }
    let mut total = prefetch[0];
    for i in 0..n - 1 {
        total += compute[i].max(prefetch[i + 1]);
    }
    total + compute[n - 1]
}

pub fn simulate_stage(patches: Vec<PatchTiming>, pre: &PreprocessConfig) -> StageTrace {
    let compute: Vec<u64> = patches.iter().map(|p| p.compute(pre)).collect();
    let prefetch: Vec<u64> = patches.iter().map(|p| p.prefetch).collect();
    StageTrace {
        total: overlap_total(&prefetch, &compute),
        compute: compute.iter().sum(),
        prefetch: prefetch.iter().sum(),
        gemm: patches.iter().map(|p| p.gemm).sum(),
        patches,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub coarse: StageTrace,
    /// PDF estimation between the stages, on the special function unit.
    pub pdf_cycles: u64,
    pub focused: StageTrace,
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub exposed_cycles: u64,
    pub gemm_cycles: u64,
    pub utilization: f64,
    pub bound: Bound,
}

impl PipelineTrace {
    pub fn new(coarse: StageTrace, pdf_cycles: u64, focused: StageTrace) -> Self {
        let total_cycles = coarse.total + pdf_cycles + focused.total;
        let compute_cycles = coarse.compute + pdf_cycles + focused.compute;
        let exposed_cycles = total_cycles - compute_cycles;
        let gemm_cycles = coarse.gemm + focused.gemm;
        let utilization = if total_cycles == 0 { 0.0 } else { gemm_cycles as f64 / total_cycles as f64 };
        let bound = if exposed_cycles > compute_cycles { Bound::Memory } else { Bound::Compute };
        Self { coarse, pdf_cycles, focused, total_cycles, compute_cycles, exposed_cycles, gemm_cycles, utilization, bound }
    }

    pub fn exposed_share(&self) -> f64 {
        if self.total_cycles == 0 {
            0.0
        } else {
            self.exposed_cycles as f64 / self.total_cycles as f64
        }
    }

    pub fn fps(&self, pool: &PePoolConfig) -> f64 {
        pool.frequency_hz / self.total_cycles as f64
    }
}

/// FLOPs of one frame, split by stage and block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub pixels: u64,
    pub per_pixel: f64,
    pub total: f64,
    pub coarse: BlockFlops,
    pub focused: BlockFlops,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockFlops {
    pub mlp: f64,
    pub mixer: f64,
    pub aggregation: f64,
    pub rendering: f64,
}

impl BlockFlops {
    pub fn sum(&self) -> f64 {
        self.mlp + self.mixer + self.aggregation + self.rendering
    }
}

impl FlopsReport {
    pub fn mflops_per_pixel(&self) -> f64 {
        self.per_pixel / 1e6
    }

    pub fn tflops(&self) -> f64 {
        self.total / 1e12
    }
}

/// FLOPs per ray of one stage with `points` samples and `views` sources.
///
/// Dense layers cost `2·K·N` per point. Aggregation is mean and variance
/// over views (`4·S·C + 2·C`). Token mixing costs `2·n²·Dσ` per ray, the
/// channel MLP `2·n·Dσ²` plus residual adds, the density head `2·n·Dσ`.
/// Weight computation costs `weight_flops` per point.
pub fn stage_flops(net: &NetworkConfig, points: f64, views: f64, weight_flops: f64) -> BlockFlops {
    let c = net.feature_channels as f64;
    let d = net.density_features as f64;
    let per_point_mlp: f64 = net.mlp_shapes().iter().map(|&(rows, cols)| 2.0 * (rows * cols) as f64).sum();
    BlockFlops {
        mlp: per_point_mlp * points,
        mixer: 2.0 * points * points * d + points * (2.0 * d * d + 4.0 * d) + 2.0 * points * d,
        aggregation: (4.0 * views * c + 2.0 * c) * points,
        rendering: weight_flops * points,
    }
}

/// Coarse points cost 5 FLOPs (delta, product, exponential, complement,
/// transmittance update); focused points add color accumulation for 11.
pub fn count_flops(net: &NetworkConfig, sampling: &SamplingConfig, views: usize, pixels: u64) -> FlopsReport {
    let coarse = stage_flops(&net.coarse(), sampling.n_coarse as f64, sampling.coarse_views as f64, 5.0);
    let focused = stage_flops(net, sampling.n_focused as f64, views as f64, 11.0);
    let per_pixel = coarse.sum() + focused.sum();
    FlopsReport { pixels, per_pixel, total: per_pixel * pixels as f64, coarse, focused }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::WeightSource;

    #[test]
    fn gemm_examples() {
        let one = PePoolConfig { arrays: 1, ..Default::default() };
        assert_eq!(gemm_cycles(16, 16, 16, &one), 46);
        assert_eq!(gemm_cycles(1, 1, 1, &PePoolConfig::default()), 31);
        let a = PePoolConfig { arrays: 4, ..Default::default() };
        let b = PePoolConfig { arrays: 8, ..Default::default() };
        assert_eq!(gemm_cycles(256, 32, 64, &a), 2 * gemm_cycles(256, 32, 64, &b));
    }

    #[test]
    fn sfu_examples() {
        let sfu = SfuConfig::default();
        assert_eq!(special_function_cycles(0, &sfu), 0);
        assert_eq!(special_function_cycles(64, &sfu), 16);
        assert_eq!(special_function_cycles(64, &SfuConfig { lanes: 32, latency: 4 }), 8);
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap_total(&[10, 50], &[100, 100]), 210);
        assert_eq!(overlap_total(&[7, 9, 4], &[0, 0, 0]), 20);
        assert_eq!(overlap_total(&[], &[]), 0);
    }

    #[test]
    fn trace_bound_classification() {
        let pre = PreprocessConfig::default();
        let p = |prefetch, gemm| PatchTiming { points: 1, prefetch, gemm, ..Default::default() };
        let fast = simulate_stage(vec![p(10, 92), p(50, 92)], &pre);
        assert_eq!(fast.total, 210);
        let t = PipelineTrace::new(fast, 0, StageTrace::default());
        assert_eq!(t.bound, Bound::Compute);
        let slow = simulate_stage(vec![p(500, 0), p(500, 0)], &pre);
        assert_eq!(PipelineTrace::new(slow, 0, StageTrace::default()).bound, Bound::Memory);
    }

    #[test]
    fn peak_is_20_tflops() {
        let pool = PePoolConfig::default();
        assert_eq!(pool.peak_flops_per_cycle(), 20_480);
        assert_eq!(pool.peak_flops(), 20.48e12);
    }

    #[test]
    fn zero_width_net_is_rendering_only() {
        let net = NetworkConfig {
            feature_channels: 1,
            hidden: vec![],
            density_features: 1,
            n_max: 4,
            coarse_channel_scale: 1.0,
            weights: WeightSource::Seeded { seed: 0 },
        };
        let r = stage_flops(&net, 4.0, 0.0, 11.0);
        assert_eq!(r.rendering, 44.0);
        let s = SamplingConfig { n_coarse: 2, coarse_views: 1, n_focused: 4, n_max: 4, tau: 0.01, stratified_coarse: true };
        let f = count_flops(&net, &s, 1, 100);
        assert_eq!(f.total, f.per_pixel * 100.0);
    }
}
