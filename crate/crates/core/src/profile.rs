//! Frame-level performance runs: point grids, dataflow variants, and the
//! two-stage pipeline trace.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{closest_views, NetworkConfig, RadianceField};
use crate::geometry::{CameraPose, Ray};
use crate::memmodel::{prefetch_cycles, BankedFeatureStore, DramConfig, Interleave, PrefetchBufferConfig};
use crate::perfmodel::{
    count_flops, gemm_cycles, preprocess_cycles, simulate_stage, special_function_cycles, FlopsReport, PatchTiming, PePoolConfig,
    PipelineTrace, PreprocessConfig, SfuConfig, StageTrace,
};
use crate::pipeline::pixel_rays;
use crate::sampling::{
    allocate_budget, coarse_profile, critical_probabilities, ray_rng, sample_ray, RayPdf, SamplingConfig, FOCUS_TAG,
};
use crate::scheduler::{run_queued, FeatureLayout, PatchShape, PointPatch, Scheduler, Slicing, WorkloadCube};

/// Partition and bank-interleave policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataflow {
    /// Greedy partition, spatial interleave.
    Gen,
    /// Fixed `k × k × D` slicing, spatial interleave.
    Var1,
    /// Fixed slicing, row interleave.
    Var2,
    /// Fixed slicing, view interleave.
    Var3,
}

impl Dataflow {
    pub const ALL: [Dataflow; 4] = [Dataflow::Gen, Dataflow::Var1, Dataflow::Var2, Dataflow::Var3];

    pub fn interleave(self, spatial: Interleave) -> Interleave {
        match self {
            Dataflow::Gen | Dataflow::Var1 => spatial,
            Dataflow::Var2 => Interleave::Row,
            Dataflow::Var3 => Interleave::View,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dataflow::Gen => "gen",
            Dataflow::Var1 => "var1",
            Dataflow::Var2 => "var2",
            Dataflow::Var3 => "var3",
        }
    }
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataflow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dataflow::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown dataflow `{s}` (expected gen, var1, var2 or var3)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    #[serde(default)]
    pub pool: PePoolConfig,
    #[serde(default)]
    pub sfu: SfuConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub dram: DramConfig,
    #[serde(default = "default_prefetch")]
    pub prefetch: PrefetchBufferConfig,
}

fn default_prefetch() -> PrefetchBufferConfig {
    PrefetchBufferConfig {
        capacity_bytes: 256 * 1024,
        buffers: 2,
        banks: 8,
        words_per_bank_cycle: 1,
        scheme: Interleave::Spatial { b1: 2, b2: 4 },
    }
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            pool: PePoolConfig::default(),
            sfu: SfuConfig::default(),
            preprocess: PreprocessConfig::default(),
            dram: DramConfig::default(),
            prefetch: default_prefetch(),
        }
    }
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<()> {
        self.pool.validate()?;
        self.dram.validate()?;
        self.prefetch.validate()?;
        if self.sfu.lanes == 0 || self.sfu.latency == 0 || self.preprocess.lanes == 0 || self.preprocess.cycles_per_point == 0 {
            return Err(Error::Config("special-function and preprocess units need positive lanes and latency".into()));
        }
        Ok(())
    }
}

/// Sample counts per `(pixel, depth bin)` cell, stored as per-ray prefix
/// sums over bins.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGrid {
    pub height: usize,
    pub width: usize,
    pub depth: usize,
    prefix: Vec<u16>,
}

impl PointGrid {
    /// Every cell holds `per_cell` points.
    pub fn uniform(height: usize, width: usize, depth: usize, per_cell: u16) -> Result<Self> {
        let ray: Vec<u16> = (0..=depth)
            .map(|d| u16::try_from(d * per_cell as usize).map_err(|_| Error::Config("too many points per ray".into())))
            .collect::<Result<_>>()?;
        Ok(Self { height, width, depth, prefix: ray.repeat(height * width) })
    }

    /// Builds a grid from per-ray bin histograms, row-major rays.
    pub fn from_histograms(height: usize, width: usize, depth: usize, counts: &[u16]) -> Result<Self> {
        if counts.len() != height * width * depth {
            return Err(Error::Domain("histogram size does not match the grid".into()));
        }
        let mut prefix = Vec::with_capacity(height * width * (depth + 1));
        for ray in counts.chunks(depth) {
            let mut acc = 0u16;
            prefix.push(0);
            for &c in ray {
                acc = acc.checked_add(c).ok_or_else(|| Error::Domain("ray point count overflows".into()))?;
                prefix.push(acc);
            }
        }
        Ok(Self { height, width, depth, prefix })
    }

    /// Points of pixel `(h, w)` in bins `d0..d1`.
    pub fn ray_points(&self, h: usize, w: usize, d0: usize, d1: usize) -> u64 {
        let base = (h * self.width + w) * (self.depth + 1);
        (self.prefix[base + d1] - self.prefix[base + d0]) as u64
    }

    pub fn patch_points(&self, anchor: (usize, usize, usize), shape: PatchShape) -> u64 {
        let (h0, w0, d0) = anchor;
        let mut n = 0;
        for h in h0..h0 + shape.dh {
            for w in w0..w0 + shape.dw {
                n += self.ray_points(h, w, d0, d0 + shape.dd);
            }
        }
        n
    }

    pub fn total(&self) -> u64 {
        (0..self.height * self.width).map(|r| self.prefix[r * (self.depth + 1) + self.depth] as u64).sum()
    }
}

const CHUNK: usize = 4096;

/// Focused sample placement of a full frame, binned into `cube`'s depth
/// bins. Runs the coarse pass twice (once for critical counts, once to draw
/// samples) so no per-ray profile is held for the whole frame. The samples
/// are identical to the numeric plane's for the same seed.
pub fn focused_grid<F: RadianceField + ?Sized>(
    rays: &[Ray],
    cube: &WorkloadCube,
    field: &F,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<PointGrid> {
    if rays.len() != cube.height * cube.width {
        return Err(Error::Domain("ray count does not match the cube".into()));
    }
    let critical: Vec<u32> = rays
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            chunk
                .iter()
                .enumerate()
                .map(|(i, ray)| Ok(coarse_profile(ray, c * CHUNK + i, cfg, field, seed)?.critical_count(cfg.tau) as u32))
                .collect::<Result<Vec<u32>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    let (prob, fallback) = critical_probabilities(&critical);
    let counts = allocate_budget(&prob, (rays.len() * cfg.n_focused) as u64, cfg.n_max as u32);
    let d = cube.depth_bins;
    let hist: Vec<u16> = rays
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut out = vec![0u16; chunk.len() * d];
            for (i, ray) in chunk.iter().enumerate() {
                let j = c * CHUNK + i;
                if counts[j] == 0 {
                    continue;
                }
                let pdf = RayPdf::from_profile(&coarse_profile(ray, j, cfg, field, seed)?, fallback);
                for t in sample_ray(&pdf, counts[j] as usize, &mut ray_rng(seed, FOCUS_TAG, j)) {
                    out[i * d + cube.bin_of(t)] += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    PointGrid::from_histograms(cube.height, cube.width, d, &hist)
}

/// Everything about a frame that does not depend on the dataflow.
#[derive(Debug, Clone)]
pub struct FrameWorkload {
    pub coarse_cube: WorkloadCube,
    pub focused_cube: WorkloadCube,
    pub coarse_grid: PointGrid,
    pub focused_grid: PointGrid,
    pub coarse_views: Vec<usize>,
}

impl FrameWorkload {
    /// Coarse cube: the `S_c` closest views, one bin per coarse point.
    /// Focused cube: all views, `focused_bins` bins.
    #[allow(clippy::too_many_arguments)]
    pub fn build<F: RadianceField + ?Sized>(
        novel: &CameraPose,
        sources: &[CameraPose],
        depth_range: (f64, f64),
        features: FeatureLayout,
        focused_bins: usize,
        field: &F,
        sampling: &SamplingConfig,
        seed: u64,
    ) -> Result<Self> {
        sampling.validate(sources.len())?;
        let focused_cube = WorkloadCube::new(novel.clone(), focused_bins, depth_range, sources.to_vec(), features)?;
        let coarse_views = closest_views(novel, sources, sampling.coarse_views);
        let coarse_cube = focused_cube.with_views(&coarse_views).with_depth_bins(sampling.n_coarse);
        let coarse_grid = PointGrid::uniform(coarse_cube.height, coarse_cube.width, sampling.n_coarse, 1)?;
        let rays = pixel_rays(novel, depth_range.0, depth_range.1)?;
        let focused_grid = focused_grid(&rays, &focused_cube, field, sampling, seed)?;
        Ok(Self { coarse_cube, focused_cube, coarse_grid, focused_grid, coarse_views })
    }
}

/// Patch stream for `dataflow`.
pub fn slicing(cube: &WorkloadCube, dataflow: Dataflow, candidates: &[PatchShape], capacity: u64) -> Result<Slicing> {
    Ok(match dataflow {
        Dataflow::Gen => Slicing::Greedy(candidates.to_vec()),
        _ => Slicing::Fixed(crate::scheduler::fixed_slice_size(cube, capacity)?),
    })
}

/// Cycles of one stage: the scheduler feeds a bounded queue, each patch is
/// timed as it arrives. Empty patches fetch nothing. A pixel tile's
/// Ray-Mixer runs with its deepest patch, once all its points are known.
pub fn stage_trace(
    cube: &WorkloadCube,
    grid: &PointGrid,
    net: &NetworkConfig,
    slicing: Slicing,
    store: &BankedFeatureStore,
    hw: &HardwareConfig,
) -> Result<StageTrace> {
    let capacity = hw.prefetch.capacity_bytes;
    let layers = net.mlp_shapes();
    let dsig = net.density_features;
    let pool = &hw.pool;
    let mut timings = Vec::new();
    let scheduler = Scheduler::new(cube, slicing, capacity)?;
    run_queued(scheduler, 64, |patch: PointPatch| {
        let points = grid.patch_points(patch.anchor, patch.shape);
        let mut t = PatchTiming { seq: patch.seq, points, ..Default::default() };
        if points > 0 {
            let set = cube.texel_set(&patch);
            t.bytes = patch.bytes();
            t.prefetch = prefetch_cycles(t.bytes, &set, &hw.dram, store, capacity)?;
            t.preprocess = preprocess_cycles(points, &hw.preprocess);
            t.gemm = layers.iter().map(|&(rows, cols)| gemm_cycles(points as usize, cols, rows, pool)).sum();
            t.special = special_function_cycles(points, &hw.sfu);
        }
        let (h0, w0, d0) = patch.anchor;
        if d0 + patch.shape.dd == cube.depth_bins {
            let tile = PatchShape { dd: cube.depth_bins, ..patch.shape };
            let tile_points = grid.patch_points((h0, w0, 0), tile) as usize;
            let rays = (h0..h0 + tile.dh)
                .flat_map(|h| (w0..w0 + tile.dw).map(move |w| (h, w)))
                .filter(|&(h, w)| grid.ray_points(h, w, 0, cube.depth_bins) > 0)
                .count();
            if tile_points > 0 {
                let per_ray = tile_points.div_ceil(rays);
                t.gemm += gemm_cycles(tile_points, per_ray, dsig, pool)
                    + gemm_cycles(tile_points, dsig, dsig, pool)
                    + gemm_cycles(tile_points, dsig, 1, pool);
            }
        }
        timings.push(t);
        Ok(())
    })?;
    Ok(simulate_stage(timings, &hw.preprocess))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub dataflow: Dataflow,
    pub trace: PipelineTrace,
    pub fps: f64,
    pub flops: FlopsReport,
    /// Frame FLOPs over total cycles.
    pub achieved_flops_per_cycle: f64,
}

pub fn profile_frame(
    work: &FrameWorkload,
    net: &NetworkConfig,
    sampling: &SamplingConfig,
    candidates: &[PatchShape],
    hw: &HardwareConfig,
    dataflow: Dataflow,
) -> Result<ProfileReport> {
    hw.validate()?;
    net.validate()?;
    let capacity = hw.prefetch.capacity_bytes;
    let scheme = dataflow.interleave(hw.prefetch.scheme);
    let f = work.focused_cube.features;
    let store_for = |cube: &WorkloadCube| -> Result<BankedFeatureStore> {
        hw.prefetch.store(cube.sources.len(), f.height, f.width, f.channels)?.with_scheme(scheme)
    };
    let coarse_net = net.coarse();
    let cc = &work.coarse_cube;
    let coarse =
        stage_trace(cc, &work.coarse_grid, &coarse_net, slicing(cc, dataflow, candidates, capacity)?, &store_for(cc)?, hw)?;
    let fc = &work.focused_cube;
    let focused = stage_trace(fc, &work.focused_grid, net, slicing(fc, dataflow, candidates, capacity)?, &store_for(fc)?, hw)?;
    let pdf_cycles = special_function_cycles(work.coarse_grid.total(), &hw.sfu);
    let trace = PipelineTrace::new(coarse, pdf_cycles, focused);
    let flops = count_flops(net, sampling, fc.sources.len(), (fc.height * fc.width) as u64);
    Ok(ProfileReport {
        dataflow,
        fps: trace.fps(&hw.pool),
        achieved_flops_per_cycle: flops.total / trace.total_cycles.max(1) as f64,
        flops,
        trace,
    })
}
