//! End-to-end frame rendering on top of the sampling and volume modules.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{AnalyticScene, RadianceField, Stage};
use crate::geometry::{emit_ray, CameraPose, Ray};
use crate::sampling::{allocate_budget, build_pdf, coarse_pass, focused_sample, uniform_depths, SamplingConfig, WeightProfile};
use crate::volume::{assemble_image, reference_render, render_ray, RaySamples, RenderedImage};

/// Every pixel ray of `pose`, row-major.
pub fn pixel_rays(pose: &CameraPose, t_near: f64, t_far: f64) -> Result<Vec<Ray>> {
    let (h, w) = (pose.image_height as i64, pose.image_width as i64);
    let mut rays = Vec::with_capacity((h * w) as usize);
    for row in 0..h {
        for col in 0..w {
            rays.push(emit_ray(pose, (row, col), t_near, t_far)?);
        }
    }
    Ok(rays)
}

#[derive(Debug, Clone)]
pub struct CtfOutput {
    pub image: RenderedImage,
    pub profiles: Vec<WeightProfile>,
    pub focused: Vec<Vec<f64>>,
}

/// Coarse pass, PDF, budget, focused samples, then the final composite over
/// the union of coarse and focused depths evaluated by the focused stage.
/// Rays that receive no focused points keep their coarse result.
pub fn render_coarse_then_focus<F: RadianceField + ?Sized>(
    rays: &[Ray],
    height: usize,
    width: usize,
    field: &F,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<CtfOutput> {
    if rays.len() != height * width {
        return Err(Error::Domain("ray count does not match the image size".into()));
    }
    let profiles = coarse_pass(rays, cfg, field, seed)?;
    let pdf = build_pdf(&profiles, cfg.tau)?;
    let counts = allocate_budget(&pdf.ray_prob, (rays.len() * cfg.n_focused) as u64, cfg.n_max as u32);
    let focused = focused_sample(&pdf, &counts, seed);
    let bg = field.background();
    let results: Vec<_> = rays
        .par_iter()
        .zip(profiles.par_iter())
        .zip(focused.par_iter())
        .map(|((ray, prof), extra)| {
            let samples = if extra.is_empty() {
                RaySamples::new(prof.depths.clone(), prof.colors.clone(), prof.sigmas.clone(), ray.t_far, bg)?
            } else {
                let mut depths: Vec<f64> = prof.depths.iter().chain(extra).copied().collect();
                depths.sort_by(f64::total_cmp);
                depths.dedup();
                let evals = field.eval_ray(ray, &depths, Stage::Focused)?;
                let (sigmas, colors) = evals.into_iter().unzip();
                RaySamples::new(depths, colors, sigmas, ray.t_far, bg)?
            };
            Ok((ray.pixel, render_ray(&samples), extra.len() as u32))
        })
        .collect::<Result<_>>()?;
    let image = assemble_image(results, height, width)?;
    Ok(CtfOutput { image, profiles, focused })
}

/// Baseline: `n` stratified points per ray.
pub fn render_uniform<F: RadianceField + ?Sized>(
    rays: &[Ray],
    height: usize,
    width: usize,
    field: &F,
    n: usize,
    seed: u64,
) -> Result<RenderedImage> {
    let bg = field.background();
    let results: Vec<_> = rays
        .par_iter()
        .enumerate()
        .map(|(j, ray)| {
            let depths = uniform_depths(ray, n, seed, j);
            let (sigmas, colors) = field.eval_ray(ray, &depths, Stage::Focused)?.into_iter().unzip();
            Ok((ray.pixel, render_ray(&RaySamples::new(depths, colors, sigmas, ray.t_far, bg)?), n as u32))
        })
        .collect::<Result<_>>()?;
    assemble_image(results, height, width)
}

/// Ground-truth image from the dense reference integrator.
pub fn render_reference(
    scene: &AnalyticScene,
    rays: &[Ray],
    height: usize,
    width: usize,
    n_dense: usize,
) -> Result<RenderedImage> {
    let results: Vec<_> =
        rays.par_iter().map(|ray| Ok((ray.pixel, reference_render(scene, ray, n_dense)?, 0))).collect::<Result<_>>()?;
    assemble_image(results, height, width)
}
