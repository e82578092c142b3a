//! Banked feature storage, bank-conflict serialization, a latency/bandwidth
//! DRAM channel, and prefetch timing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexPolygon2D;

/// Texel-to-bank layout. All channel words of a texel live in one bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Interleave {
    /// Bank `h mod B`.
    Row,
    /// Bank `s mod B`.
    View,
    /// Bank `(h mod b1)·b2 + (w mod b2)`.
    Spatial { b1: usize, b2: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankedFeatureStore {
    pub views: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub scheme: Interleave,
    pub banks: usize,
    #[serde(default = "one")]
    pub words_per_bank_cycle: usize,
}

fn one() -> usize {
    1
}

impl BankedFeatureStore {
    pub fn new(
        (views, height, width, channels): (usize, usize, usize, usize),
        scheme: Interleave,
        banks: usize,
        words_per_bank_cycle: usize,
    ) -> Result<Self> {
        let s = Self { views, height, width, channels, scheme, banks, words_per_bank_cycle };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.banks == 0 || self.words_per_bank_cycle == 0 {
            return Err(Error::Config("bank count and words per bank cycle must be at least 1".into()));
        }
        if let Interleave::Spatial { b1, b2 } = self.scheme {
            if b1 == 0 || b2 == 0 || b1 * b2 != self.banks {
                return Err(Error::Config(format!("spatial interleave {b1}x{b2} does not match {} banks", self.banks)));
            }
        }
        Ok(())
    }

    pub fn with_scheme(&self, scheme: Interleave) -> Result<Self> {
        let s = Self { scheme, ..self.clone() };
        s.validate()?;
        Ok(s)
    }
}

pub fn map_bank(store: &BankedFeatureStore, s: usize, h: usize, w: usize) -> Result<usize> {
    if s >= store.views || h >= store.height || w >= store.width {
        return Err(Error::Domain(format!("texel ({s}, {h}, {w}) outside {}x{}x{}", store.views, store.height, store.width)));
    }
    Ok(bank_of(store.scheme, store.banks, s, h, w))
}

fn bank_of(scheme: Interleave, banks: usize, s: usize, h: usize, w: usize) -> usize {
    match scheme {
        Interleave::Row => h % banks,
        Interleave::View => s % banks,
        Interleave::Spatial { b1, b2 } => (h % b1) * b2 + (w % b2),
    }
}

/// Texels `col_start..col_end` of one row of one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TexelSpan {
    pub view: usize,
    pub row: usize,
    pub col_start: usize,
    pub col_end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TexelSet {
    pub spans: Vec<TexelSpan>,
}

impl TexelSet {
    pub fn rect(view: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        Self { spans: rows.map(|row| TexelSpan { view, row, col_start: cols.start, col_end: cols.end }).collect() }
    }

    pub fn texel_count(&self) -> u64 {
        self.spans.iter().map(|s| (s.col_end - s.col_start) as u64).sum()
    }

    pub fn extend(&mut self, other: TexelSet) {
        self.spans.extend(other.spans);
    }

    /// Texels read when bilinearly sampling anywhere inside `poly` (texel
    /// coordinates), limited to a `height × width` map: every texel within one
    /// unit below-or-left of the polygon on each axis.
    pub fn from_polygon(view: usize, poly: &ConvexPolygon2D, height: usize, width: usize) -> Self {
        let v = poly.vertices();
        if v.is_empty() {
            return Self::default();
        }
        let y_lo = v.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let y_hi = v.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        // Row r is touched iff the polygon meets y ∈ [r - 1, r + 1).
        let r0 = ((y_lo - 1.0).floor() + 1.0).max(0.0) as i64;
        let r1 = ((y_hi + 1.0).floor() as i64).min(height as i64 - 1);
        let mut spans = Vec::new();
        for r in r0..=r1 {
            let (a, b) = ((r as f64 - 1.0).max(y_lo), (r as f64 + 1.0).min(y_hi));
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for y in [a, b] {
                if let Some((l, h)) = poly.span_at(y) {
                    lo = lo.min(l);
                    hi = hi.max(h);
                }
            }
            for p in v.iter().filter(|p| p[1] >= a && p[1] <= b) {
                lo = lo.min(p[0]);
                hi = hi.max(p[0]);
            }
            if lo > hi {
                continue;
            }
            let c0 = ((lo - 1.0).floor() + 1.0).max(0.0) as i64;
            let c1 = ((hi + 1.0).floor() as i64).min(width as i64 - 1);
            if c0 <= c1 {
                spans.push(TexelSpan { view, row: r as usize, col_start: c0 as usize, col_end: c1 as usize + 1 });
            }
        }
        Self { spans }
    }
}

fn ceil_div(x: i64, q: i64) -> i64 {
    (x + q - 1).div_euclid(q)
}

/// Words requested from each bank.
pub fn bank_words(set: &TexelSet, store: &BankedFeatureStore) -> Vec<u64> {
    let mut words = vec![0u64; store.banks];
    let c = store.channels as u64;
    for s in &set.spans {
        let len = (s.col_end - s.col_start) as u64;
        match store.scheme {
            Interleave::Row | Interleave::View => words[bank_of(store.scheme, store.banks, s.view, s.row, 0)] += len * c,
            Interleave::Spatial { b1, b2 } => {
                let base = (s.row % b1) * b2;
                let q = b2 as i64;
                for m in 0..b2 {
                    let n = ceil_div(s.col_end as i64 - m as i64, q) - ceil_div(s.col_start as i64 - m as i64, q);
                    words[base + m] += n as u64 * c;
                }
            }
        }
    }
    words
}

/// Cycles to read `set`: the busiest bank's words over its per-cycle rate.
pub fn access_cycles(set: &TexelSet, store: &BankedFeatureStore) -> u64 {
    let max = bank_words(set, store).into_iter().max().unwrap_or(0);
    max.div_ceil(store.words_per_bank_cycle as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DramConfig {
    pub bandwidth_bytes_per_cycle: f64,
    pub latency_cycles: u64,
    #[serde(default = "default_burst")]
    pub burst_bytes: u64,
}

fn default_burst() -> u64 {
    64
}

impl Default for DramConfig {
    fn default() -> Self {
        Self { bandwidth_bytes_per_cycle: 17.8, latency_cycles: 100, burst_bytes: 64 }
    }
}

impl DramConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_bytes_per_cycle > 0.0 && self.bandwidth_bytes_per_cycle.is_finite()) || self.burst_bytes == 0 {
            return Err(Error::Config("DRAM bandwidth must be positive and burst at least 1 byte".into()));
        }
        Ok(())
    }

    pub fn transfer_cycles(&self, bytes: u64) -> u64 {
        let rounded = bytes.div_ceil(self.burst_bytes) * self.burst_bytes;
        (rounded as f64 / self.bandwidth_bytes_per_cycle).ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefetchBufferConfig {
    pub capacity_bytes: u64,
    #[serde(default = "two")]
    pub buffers: usize,
    pub banks: usize,
    #[serde(default = "one")]
    pub words_per_bank_cycle: usize,
    pub scheme: Interleave,
}

fn two() -> usize {
    2
}

impl PrefetchBufferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity_bytes == 0 {
            return Err(Error::Config("prefetch capacity must be positive".into()));
        }
        if self.buffers != 2 {
            return Err(Error::Config("the prefetch buffer is double-buffered; buffers must be 2".into()));
        }
        Ok(())
    }

    pub fn store(&self, views: usize, height: usize, width: usize, channels: usize) -> Result<BankedFeatureStore> {
        self.validate()?;
        BankedFeatureStore::new((views, height, width, channels), self.scheme, self.banks, self.words_per_bank_cycle)
    }
}

/// Latency plus the slower of the DRAM transfer and the bank-limited write
/// into the destination buffer. Zero bytes cost nothing.
pub fn prefetch_cycles(bytes: u64, set: &TexelSet, dram: &DramConfig, store: &BankedFeatureStore, capacity: u64) -> Result<u64> {
    if bytes > capacity {
        return Err(Error::Capacity { what: "prefetch bytes", got: bytes, max: capacity });
    }
    if bytes == 0 {
        return Ok(0);
    }
    Ok(dram.latency_cycles + dram.transfer_cycles(bytes).max(access_cycles(set, store)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(scheme: Interleave, banks: usize) -> BankedFeatureStore {
        BankedFeatureStore::new((6, 32, 32, 3), scheme, banks, 1).unwrap()
    }

    #[test]
    fn bank_formulas() {
        assert_eq!(map_bank(&store(Interleave::Spatial { b1: 2, b2: 2 }, 4), 0, 3, 5).unwrap(), 3);
        let row = store(Interleave::Row, 4);
        assert!((0..8).all(|w| map_bank(&row, 1, 6, w).unwrap() == 2));
        let view = store(Interleave::View, 6);
        for s in 0..6 {
            assert_eq!(map_bank(&view, s, 7, 9).unwrap(), s);
        }
        assert!(map_bank(&view, 6, 0, 0).is_err());
    }

    #[test]
    fn strip_and_block_cycles() {
        let strip = TexelSet::rect(0, 4..5, 3..11);
        assert_eq!(access_cycles(&strip, &store(Interleave::Row, 4)), 8 * 3);
        assert_eq!(access_cycles(&strip, &store(Interleave::Spatial { b1: 2, b2: 2 }, 4)), 4 * 3);
        let block = TexelSet::rect(0, 2..6, 1..5);
        assert_eq!(access_cycles(&block, &store(Interleave::Spatial { b1: 2, b2: 2 }, 4)), 4 * 3);
    }

    #[test]
    fn analytic_counts_match_enumeration() {
        let st = store(Interleave::Spatial { b1: 2, b2: 4 }, 8);
        let set = TexelSet { spans: vec![TexelSpan { view: 2, row: 5, col_start: 3, col_end: 18 }] };
        let mut brute = vec![0u64; 8];
        for w in 3..18 {
            brute[map_bank(&st, 2, 5, w).unwrap()] += 3;
        }
        assert_eq!(bank_words(&set, &st), brute);
    }

    #[test]
    fn polygon_raster_point_and_rect() {
        let pt = ConvexPolygon2D::hull(&[[2.5, 3.5]]);
        assert_eq!(TexelSet::from_polygon(0, &pt, 10, 10).texel_count(), 4);
        let lattice = ConvexPolygon2D::hull(&[[2.0, 3.0]]);
        assert_eq!(TexelSet::from_polygon(0, &lattice, 10, 10).texel_count(), 4);
        let sq = ConvexPolygon2D::hull(&[[1.0, 1.0], [3.0, 1.0], [3.0, 2.0], [1.0, 2.0]]);
        // cols 1..=4, rows 1..=3
        assert_eq!(TexelSet::from_polygon(0, &sq, 10, 10).texel_count(), 12);
        let corner = ConvexPolygon2D::hull(&[[-0.5, -0.5]]);
        assert_eq!(TexelSet::from_polygon(0, &corner, 10, 10).texel_count(), 1);
    }

    #[test]
    fn prefetch_bounds() {
        let st = store(Interleave::Spatial { b1: 2, b2: 2 }, 4);
        let tiny = TexelSet::rect(0, 0..1, 0..1);
        let fast = DramConfig { bandwidth_bytes_per_cycle: 1e9, latency_cycles: 100, burst_bytes: 1 };
        // one texel of three channel words behind a 100-cycle latency
        assert_eq!(prefetch_cycles(3, &tiny, &fast, &st, 1 << 20).unwrap(), 103);
        let dram = DramConfig { bandwidth_bytes_per_cycle: 4.0, latency_cycles: 100, burst_bytes: 1 };
        assert_eq!(prefetch_cycles(800, &tiny, &dram, &st, 1 << 20).unwrap(), 300);
        assert_eq!(prefetch_cycles(0, &tiny, &dram, &st, 1 << 20).unwrap(), 0);
        assert!(matches!(prefetch_cycles(10, &tiny, &dram, &st, 5), Err(Error::Capacity { .. })));
        // a long row strip under row interleave is bank-bound
        let strip = TexelSet::rect(0, 0..1, 0..32);
        let row = store(Interleave::Row, 4);
        let bytes = 32 * 3;
        let wide = DramConfig { bandwidth_bytes_per_cycle: 16.0, latency_cycles: 0, burst_bytes: 1 };
        assert!(access_cycles(&strip, &row) > wide.transfer_cycles(bytes));
        assert!(access_cycles(&strip, &st) <= access_cycles(&strip, &row));
    }
}
