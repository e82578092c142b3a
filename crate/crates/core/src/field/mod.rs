//! Radiance-field evaluators: analytic scenes for ground truth and the
//! feature-conditioned network path.

pub mod analytic;
pub mod features;
pub mod network;

pub use analytic::{eval_analytic, AnalyticScene, Primitive, Rgb, Shape};
pub use features::{bilinear_sample, synth_feature_maps, FeatureMap};
pub use network::{eval_point_mlp, ray_mixer_forward, Network, NetworkConfig, WeightSource};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Ray, MIN_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Coarse,
    Focused,
}

/// Anything that turns depths along a ray into `(σ, color)` pairs.
pub trait RadianceField: Sync {
    fn eval_ray(&self, ray: &Ray, depths: &[f64], stage: Stage) -> Result<Vec<(f64, Rgb)>>;
    fn background(&self) -> Rgb;
}

impl RadianceField for AnalyticScene {
    fn eval_ray(&self, ray: &Ray, depths: &[f64], _stage: Stage) -> Result<Vec<(f64, Rgb)>> {
        Ok(depths.iter().map(|&t| eval_analytic(self, &ray.at(t), &ray.direction)).collect())
    }

    fn background(&self) -> Rgb {
        AnalyticScene::background(self)
    }
}

/// Indices of the `k` source views whose optical axes are most aligned with
/// the novel view's, ties broken by lower index.
pub fn closest_views(novel: &CameraPose, sources: &[CameraPose], k: usize) -> Vec<usize> {
    let axis = novel.optical_axis();
    let mut idx: Vec<usize> = (0..sources.len()).collect();
    idx.sort_by(|&a, &b| {
        let ca = sources[a].optical_axis().dot(&axis);
        let cb = sources[b].optical_axis().dot(&axis);
        cb.total_cmp(&ca).then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Generalizable field: per-view features are sampled at each point's
/// projection, aggregated by the MLP, and densities fused by the Ray-Mixer.
pub struct NeuralField {
    focused: Network,
    coarse: Network,
    maps: Vec<FeatureMap>,
    poses: Vec<CameraPose>,
    coarse_views: Vec<usize>,
    background: Rgb,
}

impl NeuralField {
    pub fn new(
        cfg: &NetworkConfig,
        maps: Vec<FeatureMap>,
        poses: Vec<CameraPose>,
        novel: &CameraPose,
        coarse_view_count: usize,
        background: Rgb,
    ) -> Result<Self> {
        if maps.len() != poses.len() || poses.is_empty() {
            return Err(Error::Config("need one feature map per source pose".into()));
        }
        if coarse_view_count == 0 || coarse_view_count > poses.len() {
            return Err(Error::Config(format!("coarse view count {coarse_view_count} outside 1..={}", poses.len())));
        }
        if maps.iter().any(|m| m.channels != cfg.feature_channels) {
            return Err(Error::Config("feature map channels differ from network input".into()));
        }
        Ok(Self {
            focused: Network::build(cfg)?,
            coarse: Network::build(&cfg.coarse())?,
            coarse_views: closest_views(novel, &poses, coarse_view_count),
            maps,
            poses,
            background,
        })
    }

    pub fn coarse_views(&self) -> &[usize] {
        &self.coarse_views
    }

    /// `S × C` features of world point `x`; views that see it from behind
    /// contribute a zero row.
    fn gather(&self, x: &crate::geometry::Vec3, views: &[usize], out: &mut [f64]) {
        let c = self.maps[0].channels;
        for (row, &s) in out.chunks_exact_mut(c).zip(views) {
            let pose = &self.poses[s];
            let p = pose.to_camera(x);
            if p.z <= MIN_DEPTH {
                row.fill(0.0);
                continue;
            }
            let u = pose.fx * p.x / p.z + pose.cx;
            let v = pose.fy * p.y / p.z + pose.cy;
            let map = &self.maps[s];
            let (tu, tv) = map.texel_coords(pose, u, v);
            features::bilinear_sample_into(map, tu, tv, row);
        }
    }
}

impl RadianceField for NeuralField {
    fn eval_ray(&self, ray: &Ray, depths: &[f64], stage: Stage) -> Result<Vec<(f64, Rgb)>> {
        let all: Vec<usize>;
        let (net, views) = match stage {
            Stage::Coarse => (&self.coarse, self.coarse_views.as_slice()),
            Stage::Focused => {
                all = (0..self.poses.len()).collect();
                (&self.focused, all.as_slice())
            }
        };
        let c = self.maps[0].channels;
        let d = net.config().density_features;
        let mut feats = vec![0.0; views.len() * c];
        let mut colors = Vec::with_capacity(depths.len());
        let mut f_sigma = Vec::with_capacity(depths.len() * d);
        for &t in depths {
            self.gather(&ray.at(t), views, &mut feats);
            let (rgb, fs) = eval_point_mlp(net, &feats, views.len())?;
            colors.push(rgb);
            f_sigma.extend(fs);
        }
        let sigma = ray_mixer_forward(net, &f_sigma, &vec![true; depths.len()])?;
        Ok(sigma.into_iter().map(|s| s.max(0.0)).zip(colors).collect())
    }

    fn background(&self) -> Rgb {
        self.background
    }
}
