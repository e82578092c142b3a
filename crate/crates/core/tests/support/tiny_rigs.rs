//! Random tiny scheduling problems: cubes up to 4x4x4, up to three
//! equal-volume candidates, and a capacity the greedy scheduler can meet.

use nerfsim_core::geometry::{CameraPose, Vec3};
use nerfsim_core::rig::{ring_poses, RingSpec};
use nerfsim_core::scheduler::{greedy_partition, FeatureLayout, PatchShape, WorkloadCube};
use rand::seq::SliceRandom;
use rand::Rng;

pub struct TinyCase {
    pub cube: WorkloadCube,
    pub candidates: Vec<PatchShape>,
    pub capacity: u64,
}

fn shapes_of_volume(v: usize) -> Vec<PatchShape> {
    let mut out = Vec::new();
    for dh in 1..=4 {
        for dw in 1..=4 {
            for dd in 1..=4 {
                if dh * dw * dd == v {
                    out.push(PatchShape::new(dh, dw, dd));
                }
            }
        }
    }
    out
}

pub fn tiny_case(r: &mut impl Rng) -> TinyCase {
    let (h, w, d) = (r.gen_range(1..=4u32), r.gen_range(1..=4u32), r.gen_range(1..=4usize));
    let novel = CameraPose::look_at_fov(
        Vec3::new(r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5), -4.0),
        Vec3::zeros(),
        Vec3::new(0.0, -1.0, 0.0),
        r.gen_range(20.0..50.0),
        w,
        h,
    )
    .expect("valid novel pose");
    let ring = RingSpec {
        count: r.gen_range(1..=3),
        radius: r.gen_range(3.0..5.0),
        elevation: r.gen_range(-1.0..1.0),
        arc_deg: r.gen_range(20.0..120.0),
        target: [0.0; 3],
        hfov_deg: 40.0,
        image_width: 16,
        image_height: 16,
    };
    let sources = ring_poses(&ring).expect("valid ring");
    let layout = FeatureLayout { height: 16, width: 16, channels: r.gen_range(1..=4), bytes_per_feature: 1 };
    let cube = WorkloadCube::new(novel, d, (2.5, 6.5), sources, layout).expect("valid cube");
    let mut shapes = shapes_of_volume(*[1, 2, 4, 8].choose(r).unwrap());
    shapes.shuffle(r);
    shapes.truncate(r.gen_range(1..=3));
    let mut capacity = 16u64;
    while greedy_partition(&cube, &shapes, capacity).is_err() {
        capacity = capacity * 3 / 2;
    }
    capacity = (capacity as f64 * r.gen_range(1.0..2.0)) as u64;
    TinyCase { cube, candidates: shapes, capacity }
}
