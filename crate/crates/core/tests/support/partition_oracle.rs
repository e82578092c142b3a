//! Brute-force reference for the greedy scheduler on tiny cubes.
//!
//! Enumerates every partition the scan-order tiling process can emit: at each
//! free anchor any candidate that fits the capacity after clipping, and
//! inside a tile any same-footprint depth step (or the tile's own depth when
//! none fits). Tiles are costed independently, so the planar search is
//! memoized on the set of assigned pixels.

use std::collections::HashMap;

use nerfsim_core::scheduler::{estimate_memory_access, PatchShape, PointPatch, WorkloadCube};

pub struct Oracle<'a> {
    cube: &'a WorkloadCube,
    candidates: &'a [PatchShape],
    capacity: u64,
    memo: HashMap<(u64, bool), Option<u64>>,
}

/// `(h, w, d, clipped shape, bytes)` of one emitted patch.
pub type Step = (usize, usize, usize, PatchShape, u64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub best: u64,
    pub worst: u64,
}

impl<'a> Oracle<'a> {
    pub fn new(cube: &'a WorkloadCube, candidates: &'a [PatchShape], capacity: u64) -> Self {
        assert!(cube.height * cube.width <= 64, "oracle handles at most 64 pixels");
        Self { cube, candidates, capacity, memo: HashMap::new() }
    }

    fn cost(&self, anchor: (usize, usize, usize), shape: PatchShape) -> Option<u64> {
        let b = estimate_memory_access(self.cube, anchor, shape);
        (b <= self.capacity).then_some(b)
    }

    fn first_free(&self, assigned: u64) -> Option<(usize, usize)> {
        let n = self.cube.height * self.cube.width;
        (0..n).find(|&i| assigned & (1 << i) == 0).map(|i| (i / self.cube.width, i % self.cube.width))
    }

    fn clip(&self, assigned: u64, (h, w): (usize, usize), c: PatchShape) -> PatchShape {
        let run = (w..self.cube.width).take(c.dw).take_while(|&x| assigned & (1 << (h * self.cube.width + x)) == 0).count();
        PatchShape { dh: c.dh.min(self.cube.height - h), dw: run, dd: c.dd.min(self.cube.depth_bins) }
    }

    fn claim(&self, assigned: u64, (h, w): (usize, usize), s: PatchShape) -> u64 {
        let mut a = assigned;
        for y in h..h + s.dh {
            for x in w..w + s.dw {
                a |= 1 << (y * self.cube.width + x);
            }
        }
        a
    }

    /// Depth options at cursor `d` of a tile: same-footprint candidates that
    /// fit, else the tile's own candidate if it fits.
    fn depth_options(
        &self,
        (h, w): (usize, usize),
        block: (usize, usize),
        chosen: PatchShape,
        d: usize,
    ) -> Vec<(PatchShape, u64)> {
        let remaining = self.cube.depth_bins - d;
        let step = |c: PatchShape| PatchShape { dh: block.0, dw: block.1, dd: c.dd.min(remaining) };
        let opts: Vec<_> = self
            .candidates
            .iter()
            .filter(|c| c.dh == chosen.dh && c.dw == chosen.dw)
            .filter_map(|&c| self.cost((h, w, d), step(c)).map(|b| (step(c), b)))
            .collect();
        if !opts.is_empty() {
            return opts;
        }
        self.cost((h, w, d), step(chosen)).map(|b| vec![(step(chosen), b)]).unwrap_or_default()
    }

    /// Cheapest (or dearest) completion of one tile from cursor `d`.
    fn tile(&self, anchor: (usize, usize), block: (usize, usize), chosen: PatchShape, d: usize, worst: bool) -> Option<u64> {
        if d == self.cube.depth_bins {
            return Some(0);
        }
        let totals = self
            .depth_options(anchor, block, chosen, d)
            .into_iter()
            .filter_map(|(s, b)| self.tile(anchor, block, chosen, d + s.dd, worst).map(|rest| b + rest));
        if worst {
            totals.max()
        } else {
            totals.min()
        }
    }

    fn plan(&mut self, assigned: u64, worst: bool) -> Option<u64> {
        let Some(anchor) = self.first_free(assigned) else {
            return Some(0);
        };
        if let Some(&v) = self.memo.get(&(assigned, worst)) {
            return v;
        }
        let mut out: Option<u64> = None;
        for &c in self.candidates {
            let s = self.clip(assigned, anchor, c);
            let Some(first) = self.cost((anchor.0, anchor.1, 0), s) else {
                continue;
            };
            let Some(rest_of_tile) = self.tile(anchor, (s.dh, s.dw), c, s.dd, worst) else {
                continue;
            };
            let Some(rest) = self.plan(self.claim(assigned, anchor, s), worst) else {
                continue;
            };
            let total = first + rest_of_tile + rest;
            out = Some(match out {
                None => total,
                Some(o) if worst => o.max(total),
                Some(o) => o.min(total),
            });
        }
        self.memo.insert((assigned, worst), out);
        out
    }

    /// Least and greatest total bytes over all reachable partitions; `None`
    /// when no partition is feasible.
    pub fn bounds(&mut self) -> Option<Bounds> {
        Some(Bounds { best: self.plan(0, false)?, worst: self.plan(0, true)? })
    }

    /// Replays the minimum-bytes choice at every anchor, earliest candidate
    /// first on ties.
    pub fn greedy_replay(&self) -> Option<Vec<Step>> {
        let pick = |opts: Vec<(PatchShape, PatchShape, u64)>| -> Option<(PatchShape, PatchShape, u64)> {
            let mut best: Option<(PatchShape, PatchShape, u64)> = None;
            for o in opts {
                if best.is_none_or(|b| o.2 < b.2) {
                    best = Some(o);
                }
            }
            best
        };
        let mut assigned = 0u64;
        let mut out = Vec::new();
        while let Some((h, w)) = self.first_free(assigned) {
            let opts = self
                .candidates
                .iter()
                .filter_map(|&c| {
                    let s = self.clip(assigned, (h, w), c);
                    self.cost((h, w, 0), s).map(|b| (c, s, b))
                })
                .collect();
            let (chosen, s, b) = pick(opts)?;
            out.push((h, w, 0, s, b));
            let mut d = s.dd;
            while d < self.cube.depth_bins {
                let opts = self.depth_options((h, w), (s.dh, s.dw), chosen, d);
                let (step, b) = *opts.iter().reduce(|a, o| if o.1 < a.1 { o } else { a })?;
                out.push((h, w, d, step, b));
                d += step.dd;
            }
            assigned = self.claim(assigned, (h, w), s);
        }
        Some(out)
    }
}

pub fn total(patches: &[PointPatch]) -> u64 {
    patches.iter().map(PointPatch::bytes).sum()
}
