//! Workload scheduler: slices the `H × W × D` ray-sample cube into point
//! patches whose source-view footprints fit the prefetch buffer.

use std::io::{BufRead, Write};
use std::sync::mpsc::sync_channel;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_direction, polygon_area, project_frustum, CameraPose, ConvexPolygon2D, Footprint, Vec3};
use crate::memmodel::TexelSet;

/// Source feature tensor dimensions and element size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureLayout {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub bytes_per_feature: usize,
}

impl FeatureLayout {
    pub fn texel_bytes(&self) -> u64 {
        (self.channels * self.bytes_per_feature) as u64
    }

    pub fn map_texels(&self) -> u64 {
        (self.height * self.width) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadCube {
    pub height: usize,
    pub width: usize,
    pub depth_bins: usize,
    pub novel: CameraPose,
    pub t_near: f64,
    pub t_far: f64,
    pub sources: Vec<CameraPose>,
    pub features: FeatureLayout,
}

impl WorkloadCube {
    pub fn new(
        novel: CameraPose,
        depth_bins: usize,
        (t_near, t_far): (f64, f64),
        sources: Vec<CameraPose>,
        features: FeatureLayout,
    ) -> Result<Self> {
        if depth_bins == 0 {
            return Err(Error::Config("depth bin count must be at least 1".into()));
        }
        if !(t_near > 0.0 && t_near < t_far) {
            return Err(Error::Config(format!("invalid depth range [{t_near}, {t_far}]")));
        }
        if sources.is_empty() {
            return Err(Error::Config("at least one source view is required".into()));
        }
        if features.height < 2 || features.width < 2 || features.channels == 0 || features.bytes_per_feature == 0 {
            return Err(Error::Config("feature layout must be at least 2x2 with nonzero channels and bytes".into()));
        }
        Ok(Self {
            height: novel.image_height as usize,
            width: novel.image_width as usize,
            depth_bins,
            novel,
            t_near,
            t_far,
            sources,
            features,
        })
    }

    pub fn cells(&self) -> u64 {
        (self.height * self.width * self.depth_bins) as u64
    }

    pub fn bin_width(&self) -> f64 {
        (self.t_far - self.t_near) / self.depth_bins as f64
    }

    /// Depth of the boundary before bin `d`.
    pub fn bin_edge(&self, d: usize) -> f64 {
        self.t_near + d as f64 * self.bin_width()
    }

    /// Bin holding depth `t`, clamped to the cube.
    pub fn bin_of(&self, t: f64) -> usize {
        (((t - self.t_near) / self.bin_width()).floor().max(0.0) as usize).min(self.depth_bins - 1)
    }

    /// Corners of the frustum spanned by the pixel block's outer edges between
    /// the bounding depth-bin boundaries.
    pub fn frustum_corners(&self, anchor: (usize, usize, usize), shape: PatchShape) -> [Vec3; 8] {
        let (h0, w0, d0) = anchor;
        let rows = [h0 as f64 - 0.5, (h0 + shape.dh) as f64 - 0.5];
        let cols = [w0 as f64 - 0.5, (w0 + shape.dw) as f64 - 0.5];
        let ts = [self.bin_edge(d0), self.bin_edge(d0 + shape.dd)];
        let o = self.novel.center();
        let mut out = [Vec3::zeros(); 8];
        let mut i = 0;
        for &t in &ts {
            for &v in &rows {
                for &u in &cols {
                    out[i] = o + pixel_direction(&self.novel, u, v) * t;
                    i += 1;
                }
            }
        }
        out
    }

    /// Footprint of a frustum on one source view in texel coordinates.
    pub fn texel_footprint(&self, view: usize, corners: &[Vec3; 8]) -> Option<ConvexPolygon2D> {
        let pose = &self.sources[view];
        match project_frustum(corners, pose) {
            Footprint::Unprojectable => None,
            Footprint::Projected { clipped, .. } => {
                let sx = self.features.width as f64 / pose.image_width as f64;
                let sy = self.features.height as f64 / pose.image_height as f64;
                if sx == 1.0 && sy == 1.0 {
                    return Some(clipped);
                }
                let pts: Vec<[f64; 2]> =
                    clipped.vertices().iter().map(|p| [(p[0] + 0.5) * sx - 0.5, (p[1] + 0.5) * sy - 0.5]).collect();
                Some(ConvexPolygon2D::hull(&pts))
            }
        }
    }

    /// Per-view texel estimates for a patch.
    pub fn view_texels(&self, anchor: (usize, usize, usize), shape: PatchShape) -> Vec<u64> {
        let corners = self.frustum_corners(anchor, shape);
        (0..self.sources.len())
            .map(|s| match self.texel_footprint(s, &corners) {
                None => self.features.map_texels(),
                Some(poly) => texel_estimate(&poly, self.features.map_texels()),
            })
            .collect()
    }

    /// Texels a patch reads on every view, for bank accounting.
    pub fn texel_set(&self, patch: &PointPatch) -> TexelSet {
        let corners = self.frustum_corners(patch.anchor, patch.shape);
        let mut set = TexelSet::default();
        for s in 0..self.sources.len() {
            let part = match self.texel_footprint(s, &corners) {
                None => TexelSet::rect(s, 0..self.features.height, 0..self.features.width),
                Some(poly) => TexelSet::from_polygon(s, &poly, self.features.height, self.features.width),
            };
            set.extend(part);
        }
        set
    }

    /// Re-projects every patch and returns the per-view footprints of the
    /// views subset `views`, concatenated.
    pub fn texel_set_for_views(&self, patch: &PointPatch, views: &[usize]) -> TexelSet {
        let corners = self.frustum_corners(patch.anchor, patch.shape);
        let mut set = TexelSet::default();
        for &s in views {
            let part = match self.texel_footprint(s, &corners) {
                None => TexelSet::rect(s, 0..self.features.height, 0..self.features.width),
                Some(poly) => TexelSet::from_polygon(s, &poly, self.features.height, self.features.width),
            };
            set.extend(part);
        }
        set
    }

    /// Same cube restricted to a subset of source views.
    pub fn with_views(&self, views: &[usize]) -> Self {
        Self { sources: views.iter().map(|&s| self.sources[s].clone()).collect(), ..self.clone() }
    }

    pub fn with_depth_bins(&self, depth_bins: usize) -> Self {
        Self { depth_bins, ..self.clone() }
    }
}

/// Clipped hull area plus the one-texel bilinear ring, capped at the map.
///
/// The ring is the Minkowski sum with a 2×2 texel square, so a single point
/// reads 4 texels.
pub fn texel_estimate(clipped: &ConvexPolygon2D, map_texels: u64) -> u64 {
    if clipped.is_empty() {
        return 0;
    }
    let (ex, ey) = clipped.extents();
    let area = polygon_area(clipped) + 2.0 * (ex + ey) + 4.0;
    (area.ceil() as u64).min(map_texels)
}

/// Bytes of feature data a patch reads, summed over views.
pub fn estimate_memory_access(cube: &WorkloadCube, anchor: (usize, usize, usize), shape: PatchShape) -> u64 {
    cube.view_texels(anchor, shape).iter().sum::<u64>() * cube.features.texel_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchShape {
    pub dh: usize,
    pub dw: usize,
    pub dd: usize,
}

impl PatchShape {
    pub const fn new(dh: usize, dw: usize, dd: usize) -> Self {
        Self { dh, dw, dd }
    }

    pub fn volume(&self) -> usize {
        self.dh * self.dw * self.dd
    }
}

/// Default candidate set: four shapes of 256 cells.
pub fn default_candidates() -> Vec<PatchShape> {
    vec![PatchShape::new(8, 8, 4), PatchShape::new(8, 4, 8), PatchShape::new(4, 8, 8), PatchShape::new(16, 4, 4)]
}

pub fn validate_candidates(c: &[PatchShape]) -> Result<()> {
    let Some(first) = c.first() else {
        return Err(Error::Config("at least one patch shape candidate is required".into()));
    };
    if c.iter().any(|s| s.dh == 0 || s.dw == 0 || s.dd == 0) {
        return Err(Error::Config("patch extents must be at least 1".into()));
    }
    if c.iter().any(|s| s.volume() != first.volume()) {
        return Err(Error::Config("patch shape candidates must share one volume".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointPatch {
    pub seq: usize,
    pub anchor: (usize, usize, usize),
    /// Extent after clipping to the cube and to already-assigned pixels.
    pub shape: PatchShape,
    pub view_bytes: Vec<u64>,
}

impl PointPatch {
    pub fn bytes(&self) -> u64 {
        self.view_bytes.iter().sum()
    }

    pub fn contains(&self, h: usize, w: usize, d: usize) -> bool {
        let (h0, w0, d0) = self.anchor;
        (h0..h0 + self.shape.dh).contains(&h) && (w0..w0 + self.shape.dw).contains(&w) && (d0..d0 + self.shape.dd).contains(&d)
    }
}

const FREE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Tile {
    h0: usize,
    w0: usize,
    dh: usize,
    dw: usize,
    cursor: usize,
    /// Unclipped shape chosen at the tile's first patch.
    chosen: PatchShape,
}

/// Pixel-to-tile assignment plus per-tile depth cursors.
#[derive(Debug, Clone)]
pub struct MaskBitmap {
    height: usize,
    width: usize,
    depth: usize,
    owner: Vec<u32>,
    tiles: Vec<Tile>,
    scan: usize,
}

impl MaskBitmap {
    pub fn new(height: usize, width: usize, depth: usize) -> Self {
        Self { height, width, depth, owner: vec![FREE; height * width], tiles: Vec::new(), scan: 0 }
    }

    /// First pixel in row-major order with unfinished depth, at its tile's
    /// depth cursor; `None` once everything is assigned.
    pub fn next_anchor(&mut self) -> Option<(usize, usize, usize)> {
        while self.scan < self.owner.len() {
            let o = self.owner[self.scan];
            if o == FREE {
                return Some((self.scan / self.width, self.scan % self.width, 0));
            }
            let t = &self.tiles[o as usize];
            if t.cursor < self.depth {
                return Some((t.h0, t.w0, t.cursor));
            }
            self.scan += 1;
        }
        None
    }

    /// Free pixels to the right of `(h, w)` in its row, up to `limit`.
    fn free_run(&self, h: usize, w: usize, limit: usize) -> usize {
        let row = &self.owner[h * self.width..(h + 1) * self.width];
        row[w..].iter().take(limit).take_while(|&&o| o == FREE).count()
    }

    /// Shape `s` at a new tile anchor, clipped to the cube and to assigned
    /// pixels.
    fn clip_new(&self, (h, w): (usize, usize), s: PatchShape) -> PatchShape {
        PatchShape { dh: s.dh.min(self.height - h), dw: self.free_run(h, w, s.dw), dd: s.dd.min(self.depth) }
    }

    fn current_tile(&self) -> Option<&Tile> {
        let o = *self.owner.get(self.scan)?;
        (o != FREE).then(|| &self.tiles[o as usize])
    }

    /// Claims the pixel block for a new tile and advances its cursor.
    fn open_tile(&mut self, (h0, w0): (usize, usize), clipped: PatchShape, chosen: PatchShape) {
        let id = self.tiles.len() as u32;
        for h in h0..h0 + clipped.dh {
            for w in w0..w0 + clipped.dw {
                debug_assert_eq!(self.owner[h * self.width + w], FREE);
                self.owner[h * self.width + w] = id;
            }
        }
        self.tiles.push(Tile { h0, w0, dh: clipped.dh, dw: clipped.dw, cursor: clipped.dd, chosen });
    }

    fn advance(&mut self, dd: usize) {
        let o = self.owner[self.scan] as usize;
        self.tiles[o].cursor += dd;
    }
}

/// Which slicing policy produces the patch stream.
#[derive(Debug, Clone, PartialEq)]
pub enum Slicing {
    /// Greedy minimum-bytes choice among equal-volume candidates.
    Greedy(Vec<PatchShape>),
    /// Constant `k × k × D` tiles.
    Fixed(usize),
}

/// Incremental producer of point patches in scan order.
pub struct Scheduler<'a> {
    cube: &'a WorkloadCube,
    slicing: Slicing,
    capacity: u64,
    mask: MaskBitmap,
    seq: usize,
    failed: bool,
}

impl<'a> Scheduler<'a> {
    pub fn new(cube: &'a WorkloadCube, slicing: Slicing, capacity: u64) -> Result<Self> {
        match &slicing {
            Slicing::Greedy(c) => validate_candidates(c)?,
            Slicing::Fixed(k) if *k == 0 => return Err(Error::Config("fixed slice size must be at least 1".into())),
            Slicing::Fixed(_) => {}
        }
        Ok(Self {
            cube,
            slicing,
            capacity,
            mask: MaskBitmap::new(cube.height, cube.width, cube.depth_bins),
            seq: 0,
            failed: false,
        })
    }

    fn evaluate(&self, anchor: (usize, usize, usize), shape: PatchShape) -> Vec<u64> {
        let b = self.cube.features.texel_bytes();
        self.cube.view_texels(anchor, shape).into_iter().map(|t| t * b).collect()
    }

    /// Minimum-bytes feasible option; ties keep the earliest.
    fn pick(
        &self,
        anchor: (usize, usize, usize),
        options: &[(PatchShape, PatchShape)],
    ) -> Option<(PatchShape, PatchShape, Vec<u64>)> {
        let mut best: Option<(PatchShape, PatchShape, Vec<u64>)> = None;
        for &(chosen, clipped) in options {
            let vb = self.evaluate(anchor, clipped);
            let bytes: u64 = vb.iter().sum();
            if bytes > self.capacity {
                continue;
            }
            if best.as_ref().is_none_or(|b| bytes < b.2.iter().sum()) {
                best = Some((chosen, clipped, vb));
            }
        }
        best
    }

    fn step(&mut self) -> Result<Option<PointPatch>> {
        let Some(anchor) = self.mask.next_anchor() else {
            return Ok(None);
        };
        let (h, w, d) = anchor;
        let infeasible = Error::InfeasibleCapacity { h, w, d };
        let remaining = self.cube.depth_bins - d;
        let (clipped, view_bytes) = if d == 0 {
            let candidates: Vec<PatchShape> = match &self.slicing {
                Slicing::Greedy(c) => c.clone(),
                Slicing::Fixed(k) => vec![PatchShape::new(*k, *k, self.cube.depth_bins)],
            };
            let options: Vec<_> = candidates.iter().map(|&c| (c, self.mask.clip_new((h, w), c))).collect();
            let (chosen, clipped, vb) = self.pick(anchor, &options).ok_or(infeasible)?;
            self.mask.open_tile((h, w), clipped, chosen);
            (clipped, vb)
        } else {
            let tile = *self.mask.current_tile().expect("deep anchor belongs to a tile");
            let same: Vec<PatchShape> = match &self.slicing {
                Slicing::Greedy(c) => c.iter().copied().filter(|c| c.dh == tile.chosen.dh && c.dw == tile.chosen.dw).collect(),
                Slicing::Fixed(_) => vec![tile.chosen],
            };
            let clip = |s: PatchShape| PatchShape { dh: tile.dh, dw: tile.dw, dd: s.dd.min(remaining) };
            let options: Vec<_> = same.iter().map(|&s| (s, clip(s))).collect();
            let (_, clipped, vb) = match self.pick(anchor, &options) {
                Some(p) => p,
                None => self.pick(anchor, &[(tile.chosen, clip(tile.chosen))]).ok_or(infeasible)?,
            };
            self.mask.advance(clipped.dd);
            (clipped, vb)
        };
        let patch = PointPatch { seq: self.seq, anchor, shape: clipped, view_bytes };
        self.seq += 1;
        Ok(Some(patch))
    }
}

impl Iterator for Scheduler<'_> {
    type Item = Result<PointPatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let r = self.step().transpose();
        if matches!(r, Some(Err(_))) {
            self.failed = true;
        }
        r
    }
}

pub fn greedy_partition(cube: &WorkloadCube, candidates: &[PatchShape], capacity: u64) -> Result<Vec<PointPatch>> {
    Scheduler::new(cube, Slicing::Greedy(candidates.to_vec()), capacity)?.collect()
}

/// Largest `k` such that every `k × k × D` tile fits `capacity`.
pub fn fixed_slice_size(cube: &WorkloadCube, capacity: u64) -> Result<usize> {
    let fits = |k: usize| -> std::result::Result<(), (usize, usize)> {
        let anchors: Vec<(usize, usize)> =
            (0..cube.height).step_by(k).flat_map(|h| (0..cube.width).step_by(k).map(move |w| (h, w))).collect();
        let bad = anchors.par_iter().find_first(|&&(h, w)| {
            let shape = PatchShape::new(k.min(cube.height - h), k.min(cube.width - w), cube.depth_bins);
            estimate_memory_access(cube, (h, w, 0), shape) > capacity
        });
        bad.map_or(Ok(()), |&a| Err(a))
    };
    if let Err((h, w)) = fits(1) {
        return Err(Error::InfeasibleCapacity { h, w, d: 0 });
    }
    let (mut lo, mut hi) = (1, cube.height.max(cube.width));
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if fits(mid).is_ok() {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}

pub fn fixed_slicing_partition(cube: &WorkloadCube, capacity: u64) -> Result<Vec<PointPatch>> {
    let k = fixed_slice_size(cube, capacity)?;
    Scheduler::new(cube, Slicing::Fixed(k), capacity)?.collect()
}

/// Runs `producer` on its own thread feeding a bounded queue of `bound`
/// patches, and hands each patch to `consume` in emission order.
pub fn run_queued<I, F>(producer: I, bound: usize, mut consume: F) -> Result<()>
where
    I: Iterator<Item = Result<PointPatch>> + Send,
    F: FnMut(PointPatch) -> Result<()>,
{
    let (tx, rx) = sync_channel(bound.max(1));
    std::thread::scope(|scope| {
        scope.spawn(move || {
            for item in producer {
                let stop = item.is_err();
                if tx.send(item).is_err() || stop {
                    break;
                }
            }
        });
        for item in rx {
            consume(item?)?;
        }
        Ok(())
    })
}

/// Exact-cover and capacity re-check.
pub fn check_partition(cube: &WorkloadCube, patches: &[PointPatch], capacity: u64) -> Result<()> {
    let (h, w, d) = (cube.height, cube.width, cube.depth_bins);
    let mut hits = vec![0u8; h * w * d];
    for p in patches {
        if p.bytes() > capacity {
            return Err(Error::Capacity { what: "patch bytes", got: p.bytes(), max: capacity });
        }
        let (h0, w0, d0) = p.anchor;
        if h0 + p.shape.dh > h || w0 + p.shape.dw > w || d0 + p.shape.dd > d {
            return Err(Error::Domain(format!("patch {} leaves the cube", p.seq)));
        }
        for hh in h0..h0 + p.shape.dh {
            for ww in w0..w0 + p.shape.dw {
                for dd in d0..d0 + p.shape.dd {
                    let c = &mut hits[(hh * w + ww) * d + dd];
                    *c = c.saturating_add(1);
                }
            }
        }
    }
    if let Some(i) = hits.iter().position(|&c| c != 1) {
        return Err(Error::Domain(format!("cell ({}, {}, {}) covered {} times", i / (w * d), (i / d) % w, i % d, hits[i])));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PatchLine {
    seq: usize,
    anchor: [usize; 3],
    shape: [usize; 3],
    view_bytes: Vec<u64>,
    bytes: u64,
}

/// One JSON object per line: `seq`, `anchor`, `shape`, `view_bytes`, `bytes`.
pub fn write_jsonl(patches: &[PointPatch], mut w: impl Write) -> Result<()> {
    for p in patches {
        let line = PatchLine {
            seq: p.seq,
            anchor: [p.anchor.0, p.anchor.1, p.anchor.2],
            shape: [p.shape.dh, p.shape.dw, p.shape.dd],
            view_bytes: p.view_bytes.clone(),
            bytes: p.bytes(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<PointPatch>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: PatchLine = serde_json::from_str(&line).map_err(|e| Error::Io(format!("line {}: {e}", i + 1)))?;
        let p = PointPatch {
            seq: l.seq,
            anchor: (l.anchor[0], l.anchor[1], l.anchor[2]),
            shape: PatchShape::new(l.shape[0], l.shape[1], l.shape[2]),
            view_bytes: l.view_bytes,
        };
        if p.bytes() != l.bytes {
            return Err(Error::Io(format!("line {}: bytes field disagrees with view_bytes", i + 1)));
        }
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cube(h: u32, w: u32, d: usize) -> WorkloadCube {
        let up = Vec3::new(0.0, -1.0, 0.0);
        let novel = CameraPose::look_at_fov(Vec3::new(0.0, 0.0, -4.0), Vec3::zeros(), up, 40.0, w, h).unwrap();
        let src = vec![
            CameraPose::look_at_fov(Vec3::new(1.0, 0.2, -3.8), Vec3::zeros(), up, 40.0, 32, 32).unwrap(),
            CameraPose::look_at_fov(Vec3::new(-1.2, 0.0, -3.7), Vec3::zeros(), up, 40.0, 32, 32).unwrap(),
        ];
        let layout = FeatureLayout { height: 32, width: 32, channels: 4, bytes_per_feature: 1 };
        WorkloadCube::new(novel, d, (2.5, 5.5), src, layout).unwrap()
    }

    #[test]
    fn anchors_follow_cursor() {
        let mut m = MaskBitmap::new(4, 4, 4);
        assert_eq!(m.next_anchor(), Some((0, 0, 0)));
        m.open_tile((0, 0), PatchShape::new(2, 2, 2), PatchShape::new(2, 2, 2));
        assert_eq!(m.next_anchor(), Some((0, 0, 2)));
        m.advance(2);
        assert_eq!(m.next_anchor(), Some((0, 2, 0)));
    }

    #[test]
    fn fully_assigned_is_done() {
        let mut m = MaskBitmap::new(1, 1, 1);
        m.open_tile((0, 0), PatchShape::new(1, 1, 1), PatchShape::new(1, 1, 1));
        assert_eq!(m.next_anchor(), None);
    }

    #[test]
    fn single_candidate_tiling() {
        let cube = tiny_cube(4, 4, 4);
        let p = greedy_partition(&cube, &[PatchShape::new(2, 2, 2)], u64::MAX).unwrap();
        assert_eq!(p.len(), 8);
        let anchors: Vec<_> = p.iter().map(|p| p.anchor).collect();
        assert_eq!(anchors[..3], [(0, 0, 0), (0, 0, 2), (0, 2, 0)]);
        check_partition(&cube, &p, u64::MAX).unwrap();
    }

    #[test]
    fn clipped_boundaries_cover() {
        let cube = tiny_cube(5, 7, 3);
        let p = greedy_partition(&cube, &[PatchShape::new(2, 3, 2), PatchShape::new(3, 2, 2)], u64::MAX).unwrap();
        check_partition(&cube, &p, u64::MAX).unwrap();
        let cells: usize = p.iter().map(|p| p.shape.volume()).sum();
        assert_eq!(cells as u64, cube.cells());
    }

    #[test]
    fn tile_keeps_pixel_partition() {
        let cube = tiny_cube(8, 8, 8);
        let c = vec![PatchShape::new(4, 2, 2), PatchShape::new(2, 4, 2), PatchShape::new(2, 2, 4)];
        let p = greedy_partition(&cube, &c, u64::MAX).unwrap();
        check_partition(&cube, &p, u64::MAX).unwrap();
        for a in &p {
            for b in &p {
                if a.anchor.0 == b.anchor.0 && a.anchor.1 == b.anchor.1 {
                    assert_eq!((a.shape.dh, a.shape.dw), (b.shape.dh, b.shape.dw));
                }
            }
        }
    }

    #[test]
    fn infeasible_names_anchor() {
        let cube = tiny_cube(4, 4, 4);
        let err = greedy_partition(&cube, &[PatchShape::new(2, 2, 2)], 10).unwrap_err();
        assert_eq!(err, Error::InfeasibleCapacity { h: 0, w: 0, d: 0 });
        assert!(matches!(fixed_slicing_partition(&cube, 10), Err(Error::InfeasibleCapacity { .. })));
    }

    #[test]
    fn point_frustum_reads_four_texels() {
        let cube = tiny_cube(4, 4, 4);
        let corners = [Vec3::new(0.0, 0.0, 0.0); 8];
        let poly = cube.texel_footprint(0, &corners).unwrap();
        assert_eq!(texel_estimate(&poly, 1024), 4);
    }

    #[test]
    fn off_image_frustum_is_free() {
        let cube = tiny_cube(4, 4, 4);
        let corners = [Vec3::new(6.0, 0.0, 0.0); 8];
        let poly = cube.texel_footprint(0, &corners).unwrap();
        assert_eq!(texel_estimate(&poly, 1024), 0);
    }

    #[test]
    fn bytes_scale_with_channels() {
        let cube = tiny_cube(4, 4, 4);
        let mut wide = cube.clone();
        wide.features.channels *= 2;
        let s = PatchShape::new(2, 2, 2);
        assert_eq!(estimate_memory_access(&wide, (1, 1, 1), s), 2 * estimate_memory_access(&cube, (1, 1, 1), s));
    }

    #[test]
    fn fixed_slicing_counts() {
        let cube = tiny_cube(8, 8, 4);
        let k = fixed_slice_size(&cube, u64::MAX).unwrap();
        assert_eq!(k, 8);
        let cap = estimate_memory_access(&cube, (0, 0, 0), PatchShape::new(4, 4, 4))
            .max(estimate_memory_access(&cube, (0, 4, 0), PatchShape::new(4, 4, 4)))
            .max(estimate_memory_access(&cube, (4, 0, 0), PatchShape::new(4, 4, 4)))
            .max(estimate_memory_access(&cube, (4, 4, 0), PatchShape::new(4, 4, 4)));
        let k4 = fixed_slice_size(&cube, cap).unwrap();
        assert!(k4 >= 4);
        if k4 == 4 {
            assert_eq!(fixed_slicing_partition(&cube, cap).unwrap().len(), 4);
        }
    }

    #[test]
    fn queue_preserves_order_and_jsonl_round_trips() {
        let cube = tiny_cube(4, 4, 4);
        let direct = greedy_partition(&cube, &default_candidates(), u64::MAX).unwrap();
        let mut queued = Vec::new();
        let sched = Scheduler::new(&cube, Slicing::Greedy(default_candidates()), u64::MAX).unwrap();
        run_queued(sched, 2, |p| {
            queued.push(p);
            Ok(())
        })
        .unwrap();
        assert_eq!(direct, queued);
        let mut buf = Vec::new();
        write_jsonl(&direct, &mut buf).unwrap();
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), direct);
    }
}
