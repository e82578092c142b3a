use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::analytic::AnalyticScene;
use crate::geometry::{pixel_direction, CameraPose, Ray};
use crate::volume::reference_render_with_depth;

/// Per-view feature tensor of shape `height × width × channels`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub view: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(view: usize, height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::Domain(format!("feature map must be at least 2x2, got {height}x{width}")));
        }
        if channels == 0 || data.len() != height * width * channels {
            return Err(Error::Domain("feature map data does not match its shape".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInput("feature map contains non-finite entries".into()));
        }
        Ok(Self { view, height, width, channels, data })
    }

    pub fn texel(&self, row: usize, col: usize) -> &[f64] {
        let o = (row * self.width + col) * self.channels;
        &self.data[o..o + self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Continuous texel coordinates of pixel position `(u, v)` of `pose`,
    /// for a map covering the same field of view at a different resolution.
    pub fn texel_coords(&self, pose: &CameraPose, u: f64, v: f64) -> (f64, f64) {
        let sx = self.width as f64 / pose.image_width as f64;
        let sy = self.height as f64 / pose.image_height as f64;
        ((u + 0.5) * sx - 0.5, (v + 0.5) * sy - 0.5)
    }
}

/// Bilinear blend of the four nearest texels after clamping `(u, v)` into the
/// map.
pub fn bilinear_sample(map: &FeatureMap, u: f64, v: f64) -> Vec<f64> {
    let mut out = vec![0.0; map.channels];
    bilinear_sample_into(map, u, v, &mut out);
    out
}

pub fn bilinear_sample_into(map: &FeatureMap, u: f64, v: f64, out: &mut [f64]) {
    let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, (map.width - 1) as f64) };
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, (map.height - 1) as f64) };
    let x0 = (u.floor() as usize).min(map.width - 2);
    let y0 = (v.floor() as usize).min(map.height - 2);
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;
    let (a, b, c, d) = (map.texel(y0, x0), map.texel(y0, x0 + 1), map.texel(y0 + 1, x0), map.texel(y0 + 1, x0 + 1));
    for (k, o) in out.iter_mut().enumerate() {
        let top = a[k] + (b[k] - a[k]) * fx;
        let bottom = c[k] + (d[k] - c[k]) * fx;
        *o = top + (bottom - top) * fy;
    }
}

/// Deterministic stand-in for a CNN encoder.
///
/// Channels 0..3 hold the scene color and channel 3 the normalized expected
/// depth, both rendered from each pose with the dense reference integrator.
/// Remaining channels are uniform noise in `[-1, 1]` drawn from a stream
/// keyed by `(seed, view)`.
pub fn synth_feature_maps(
    scene: &AnalyticScene,
    poses: &[CameraPose],
    height: usize,
    width: usize,
    channels: usize,
    depth_range: (f64, f64),
    seed: u64,
) -> Result<Vec<FeatureMap>> {
    if channels < 4 {
        return Err(Error::Domain(format!("feature maps need at least 4 channels, got {channels}")));
    }
    let (t_near, t_far) = depth_range;
    let mut maps = Vec::with_capacity(poses.len());
    for (view, pose) in poses.iter().enumerate() {
        let mut data = vec![0.0; height * width * channels];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(view as u64);
        let sx = pose.image_width as f64 / width as f64;
        let sy = pose.image_height as f64 / height as f64;
        for row in 0..height {
            for col in 0..width {
                let u = (col as f64 + 0.5) * sx - 0.5;
                let v = (row as f64 + 0.5) * sy - 0.5;
                let ray = subpixel_ray(pose, u, v, t_near, t_far)?;
                let (rgb, depth) = reference_render_with_depth(scene, &ray, 256)?;
                let texel = &mut data[(row * width + col) * channels..][..channels];
                texel[..3].copy_from_slice(&rgb);
                texel[3] = (depth - t_near) / (t_far - t_near);
                for t in texel[4..].iter_mut() {
                    *t = rng.gen_range(-1.0..=1.0);
                }
            }
        }
        maps.push(FeatureMap::new(view, height, width, channels, data)?);
    }
    Ok(maps)
}

fn subpixel_ray(pose: &CameraPose, u: f64, v: f64, t_near: f64, t_far: f64) -> Result<Ray> {
    Ray::new(pose.center(), pixel_direction(pose, u, v), t_near, t_far, (0, 0))
}
