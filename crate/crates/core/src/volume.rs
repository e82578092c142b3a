//! Volume-rendering quadrature, the dense reference integrator, and image
//! assembly and I/O.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::analytic::{eval_analytic, AnalyticScene, Rgb};
use crate::geometry::Ray;

/// Samples along one ray ready for compositing. Invalid entries are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySamples {
    pub depths: Vec<f64>,
    pub colors: Vec<Rgb>,
    pub sigmas: Vec<f64>,
    pub valid: Vec<bool>,
    pub t_far: f64,
    pub background: Rgb,
}

impl RaySamples {
    pub fn new(depths: Vec<f64>, colors: Vec<Rgb>, sigmas: Vec<f64>, t_far: f64, background: Rgb) -> Result<Self> {
        let valid = vec![true; depths.len()];
        Self::with_mask(depths, colors, sigmas, valid, t_far, background)
    }

    pub fn with_mask(
        depths: Vec<f64>,
        colors: Vec<Rgb>,
        sigmas: Vec<f64>,
        valid: Vec<bool>,
        t_far: f64,
        background: Rgb,
    ) -> Result<Self> {
        let n = depths.len();
        if colors.len() != n || sigmas.len() != n || valid.len() != n {
            return Err(Error::Domain("ray sample arrays differ in length".into()));
        }
        let mut last = f64::NEG_INFINITY;
        for k in (0..n).filter(|&k| valid[k]) {
            if !(depths[k] > last) {
                return Err(Error::Domain("valid depths must be strictly increasing".into()));
            }
            if !(sigmas[k] >= 0.0) {
                return Err(Error::Domain(format!("negative or NaN density {}", sigmas[k])));
            }
            last = depths[k];
        }
        if n > 0 && last > t_far {
            return Err(Error::Domain("sample beyond t_far".into()));
        }
        Ok(Self { depths, colors, sigmas, valid, t_far, background })
    }
}

/// Hitting weights `w_k = T_k (1 - exp(-σ_k Δ_k))` for interval lengths
/// `deltas`. Returns `(w, T, residual transmittance)`.
pub fn weights_from_intervals(sigmas: &[f64], deltas: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let mut w = Vec::with_capacity(sigmas.len());
    let mut trans = Vec::with_capacity(sigmas.len());
    let mut tau = 0.0;
    let mut t = 1.0;
    for (s, d) in sigmas.iter().zip(deltas) {
        trans.push(t);
        let od = s * d;
        let alpha = if od.is_infinite() { 1.0 } else { -(-od).exp_m1() };
        w.push(t * alpha);
        tau += od;
        t = (-tau).exp();
    }
    (w, trans, t)
}

/// Interval lengths `t_{k+1} - t_k`, with the last one running to `t_far`.
pub fn intervals(depths: &[f64], t_far: f64) -> Vec<f64> {
    let n = depths.len();
    (0..n).map(|k| if k + 1 < n { depths[k + 1] - depths[k] } else { t_far - depths[k] }).collect()
}

/// Compositing weights for the valid samples plus the residual background
/// weight. Weights of invalid entries are 0.
pub fn compositing_weights(s: &RaySamples) -> (Vec<f64>, f64) {
    let idx: Vec<usize> = (0..s.depths.len()).filter(|&k| s.valid[k]).collect();
    let d: Vec<f64> = idx.iter().map(|&k| s.depths[k]).collect();
    let sig: Vec<f64> = idx.iter().map(|&k| s.sigmas[k]).collect();
    let (w, _, residual) = weights_from_intervals(&sig, &intervals(&d, s.t_far));
    let mut full = vec![0.0; s.depths.len()];
    for (i, &k) in idx.iter().enumerate() {
        full[k] = w[i];
    }
    (full, residual)
}

fn composite(weights: &[f64], colors: &[Rgb], residual: f64, background: Rgb) -> Rgb {
    let mut out = [0.0; 3];
    for (w, c) in weights.iter().zip(colors) {
        for ch in 0..3 {
            out[ch] += w * c[ch];
        }
    }
    for ch in 0..3 {
        out[ch] = (out[ch] + residual * background[ch]).clamp(0.0, 1.0);
    }
    out
}

/// Quadrature of the rendering integral over the valid samples, composited
/// over the background with the residual transmittance.
pub fn render_ray(s: &RaySamples) -> Rgb {
    let (w, residual) = compositing_weights(s);
    composite(&w, &s.colors, residual, s.background)
}

/// Dense ground truth: one sample at the midpoint of each of `n_dense` equal
/// strata, each standing for its whole stratum. Exact for piecewise-constant
/// media aligned with the strata.
pub fn reference_render(scene: &AnalyticScene, ray: &Ray, n_dense: usize) -> Result<Rgb> {
    reference_render_with_depth(scene, ray, n_dense).map(|(c, _)| c)
}

/// [`reference_render`] plus the expected termination depth, with the
/// residual transmittance terminating at `t_far`.
pub fn reference_render_with_depth(scene: &AnalyticScene, ray: &Ray, n_dense: usize) -> Result<(Rgb, f64)> {
    if n_dense < 256 {
        return Err(Error::Domain(format!("reference integrator needs at least 256 samples, got {n_dense}")));
    }
    let step = (ray.t_far - ray.t_near) / n_dense as f64;
    let mut sig = Vec::with_capacity(n_dense);
    let mut col = Vec::with_capacity(n_dense);
    let mut ts = Vec::with_capacity(n_dense);
    for k in 0..n_dense {
        let t = ray.t_near + (k as f64 + 0.5) * step;
        let (s, c) = eval_analytic(scene, &ray.at(t), &ray.direction);
        sig.push(s);
        col.push(c);
        ts.push(t);
    }
    let (w, _, residual) = weights_from_intervals(&sig, &vec![step; n_dense]);
    let depth = w.iter().zip(&ts).map(|(w, t)| w * t).sum::<f64>() + residual * ray.t_far;
    Ok((composite(&w, &col, residual, scene.background()), depth))
}

/// An `H × W` RGB image plus per-pixel focused-sample counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<Rgb>,
    pub counts: Vec<u32>,
}

impl RenderedImage {
    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        self.pixels[row * self.width + col]
    }

    pub fn mean_abs_error(&self, other: &RenderedImage) -> Result<f64> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Domain("image sizes differ".into()));
        }
        let sum: f64 = self.pixels.iter().zip(&other.pixels).map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f64>()).sum();
        Ok(sum / (3 * self.pixels.len()) as f64)
    }

    /// Binary PPM (P6), 8 bits per channel.
    pub fn write_ppm(&self, mut w: impl Write) -> Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            for c in p {
                buf.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Raw dump, little-endian: `b"NRFI"`, `u32` version 1, `u32` height,
    /// `u32` width, `u32` channels (3), then `f32` pixels row-major, RGB
    /// interleaved.
    pub fn write_float_dump(&self, mut w: impl Write) -> Result<()> {
        w.write_all(b"NRFI")?;
        for v in [1u32, self.height as u32, self.width as u32, 3] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.pixels.len() * 12);
        for p in &self.pixels {
            for c in p {
                buf.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }
}

/// Parses a float dump written by [`RenderedImage::write_float_dump`]. The
/// count map is not stored and comes back as zeros.
pub fn read_float_dump(mut r: impl Read) -> Result<RenderedImage> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let bad = |m: &str| Error::Io(format!("float dump: {m}"));
    if buf.len() < 20 || &buf[..4] != b"NRFI" {
        return Err(bad("bad header"));
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (version, height, width, channels) = (word(0), word(1), word(2), word(3));
    if version != 1 || channels != 3 {
        return Err(bad("unsupported version or channel count"));
    }
    let body = &buf[20..];
    if body.len() != height * width * 12 {
        return Err(bad("size mismatch"));
    }
    let vals: Vec<f64> = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
    let pixels = vals.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(RenderedImage { height, width, pixels, counts: vec![0; height * width] })
}

/// Parses a binary PPM into `(width, height, bytes)`.
pub fn read_ppm(mut r: impl Read) -> Result<(usize, usize, Vec<u8>)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let bad = || Error::Io("ppm: malformed header".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < buf.len() && buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&buf[start..pos]).map_err(|_| bad())?.to_string());
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad());
    }
    let w: usize = fields[1].parse().map_err(|_| bad())?;
    let h: usize = fields[2].parse().map_err(|_| bad())?;
    let data = buf.get(pos..).ok_or_else(bad)?.to_vec();
    if data.len() != w * h * 3 {
        return Err(Error::Io("ppm: size mismatch".into()));
    }
    Ok((w, h, data))
}

/// One rendered pixel: `(row, col)`, color, focused-sample count.
pub type PixelResult = ((u32, u32), Rgb, u32);

/// Places per-ray results into an image. Every pixel must be supplied exactly
/// once; submission order does not matter.
pub fn assemble_image(results: impl IntoIterator<Item = PixelResult>, height: usize, width: usize) -> Result<RenderedImage> {
    let mut pixels = vec![[0.0; 3]; height * width];
    let mut counts = vec![0u32; height * width];
    let mut seen = vec![false; height * width];
    for ((row, col), rgb, count) in results {
        let (r, c) = (row as usize, col as usize);
        if r >= height || c >= width {
            return Err(Error::Assembly(format!("pixel ({r}, {c}) outside {height}x{width}")));
        }
        let i = r * width + c;
        if seen[i] {
            return Err(Error::Assembly(format!("pixel ({r}, {c}) supplied twice")));
        }
        if !rgb.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericInput(format!("pixel ({r}, {c}) is not finite")));
        }
        seen[i] = true;
        pixels[i] = rgb.map(|v| v.clamp(0.0, 1.0));
        counts[i] = count;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Assembly(format!("pixel ({}, {}) missing", i / width, i % width)));
    }
    Ok(RenderedImage { height, width, pixels, counts })
}
