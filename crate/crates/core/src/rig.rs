//! Camera rigs: a ring generator and the shipped standard test rig.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AnalyticScene, Primitive, Shape};
use crate::geometry::{CameraPose, Vec3};

/// World up for generated cameras; image rows grow toward world +y.
fn world_up() -> Vec3 {
    Vec3::new(0.0, -1.0, 0.0)
}

/// `count` cameras on a horizontal arc of `radius` around `target`, spread
/// evenly over `arc_deg` degrees centered on the −z side, all looking at
/// `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingSpec {
    pub count: usize,
    pub radius: f64,
    #[serde(default)]
    pub elevation: f64,
    pub arc_deg: f64,
    #[serde(default)]
    pub target: [f64; 3],
    pub hfov_deg: f64,
    pub image_width: u32,
    pub image_height: u32,
}

pub fn ring_poses(spec: &RingSpec) -> Result<Vec<CameraPose>> {
    if spec.count == 0 {
        return Err(Error::Config("ring needs at least one camera".into()));
    }
    if !(spec.radius > 0.0) {
        return Err(Error::Config("ring radius must be positive".into()));
    }
    let target = Vec3::from(spec.target);
    (0..spec.count)
        .map(|i| {
            let frac = if spec.count == 1 { 0.5 } else { i as f64 / (spec.count - 1) as f64 };
            let theta = (frac - 0.5) * spec.arc_deg.to_radians();
            let c = target + Vec3::new(spec.radius * theta.sin(), spec.elevation, -spec.radius * theta.cos());
            CameraPose::look_at_fov(c, target, world_up(), spec.hfov_deg, spec.image_width, spec.image_height)
        })
        .collect()
}

/// Novel camera, source cameras, scene, and ray depth bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub novel: CameraPose,
    pub sources: Vec<CameraPose>,
    pub scene: AnalyticScene,
    pub depth_range: (f64, f64),
}

pub const STANDARD_SOURCE_VIEWS: usize = 6;
pub const STANDARD_FEATURE_SIZE: u32 = 400;

/// Novel camera on the −z axis at distance 4 from the origin.
pub fn standard_novel(resolution: u32) -> CameraPose {
    CameraPose::look_at_fov(Vec3::new(0.0, 0.0, -4.0), Vec3::zeros(), world_up(), 40.0, resolution, resolution)
        .expect("standard novel pose is valid")
}

pub fn standard_ring(count: usize, feature_size: u32) -> RingSpec {
    RingSpec {
        count,
        radius: 4.0,
        elevation: 0.0,
        arc_deg: 100.0,
        target: [0.0; 3],
        hfov_deg: 40.0,
        image_width: feature_size,
        image_height: feature_size,
    }
}

/// A translucent sphere in front of a translucent slab covering the lower
/// half of the standard view.
pub fn standard_scene() -> AnalyticScene {
    AnalyticScene::new(
        vec![
            Primitive { shape: Shape::Sphere { center: [0.0, 0.0, 0.0], radius: 0.8 }, density: 3.0, color: [0.85, 0.25, 0.2] },
            Primitive {
                shape: Shape::Box { min: [-4.0, 0.0, 1.2], max: [4.0, 4.0, 1.6] },
                density: 3.0,
                color: [0.2, 0.35, 0.8],
            },
        ],
        [1.0; 3],
    )
    .expect("standard scene is valid")
}

/// The standard rig at `resolution × resolution` with `views` ring sources.
pub fn standard_rig_with(resolution: u32, views: usize) -> Rig {
    Rig {
        novel: standard_novel(resolution),
        sources: ring_poses(&standard_ring(views, STANDARD_FEATURE_SIZE)).expect("standard ring is valid"),
        scene: standard_scene(),
        depth_range: (2.5, 6.5),
    }
}

pub fn standard_rig(resolution: u32) -> Rig {
    standard_rig_with(resolution, STANDARD_SOURCE_VIEWS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project_point;

    #[test]
    fn ring_cameras_see_the_target() {
        let spec = standard_ring(6, 64);
        for p in ring_poses(&spec).unwrap() {
            let (u, v) = project_point(&p, &Vec3::zeros()).unwrap();
            assert!((u - 31.5).abs() < 1e-9 && (v - 31.5).abs() < 1e-9);
            assert!((p.center().norm() - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_rig_has_distinct_centers() {
        let rig = standard_rig(64);
        for s in &rig.sources {
            assert!((s.center() - rig.novel.center()).norm() > 0.1);
        }
    }
}
