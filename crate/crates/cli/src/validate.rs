//! Built-in invariant suites behind `nerfsim validate`, plus the parametrized
//! suites the acceptance tests reuse at full size.

use std::time::Instant;

use nerfsim_core::field::{
    eval_point_mlp, ray_mixer_forward, AnalyticScene, Network, NetworkConfig, Primitive, Shape, WeightSource,
};
use nerfsim_core::geometry::{
    compute_epipole, emit_ray, epipolar_line, pixel_direction, project_frustum, project_point, CameraPose, Footprint, Ray, Vec3,
};
use nerfsim_core::memmodel::{access_cycles, bank_words, prefetch_cycles, BankedFeatureStore, DramConfig, Interleave, TexelSet};
use nerfsim_core::perfmodel::{simulate_stage, PatchTiming, PreprocessConfig};
use nerfsim_core::pipeline::{pixel_rays, render_coarse_then_focus, render_reference, render_uniform};
use nerfsim_core::profile::{profile_frame, Dataflow, FrameWorkload, HardwareConfig};
use nerfsim_core::rig::{ring_poses, standard_novel, standard_rig, RingSpec};
use nerfsim_core::sampling::{build_pdf, ray_rng, sample_ray, RayPdf, SamplingConfig, WeightProfile};
use nerfsim_core::scheduler::{
    check_partition, default_candidates, fixed_slicing_partition, greedy_partition, write_jsonl, FeatureLayout, PatchShape,
    PointPatch, WorkloadCube,
};
use nerfsim_core::volume::{compositing_weights, weights_from_intervals, RaySamples};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_config, ExperimentConfig};

/// Deliberate defects for negative-control runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    /// Replace the spatial layout with a single-bank mapping.
    pub faulty_interleave: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(&Faults) -> Result<String, String>;

/// Every property checked by `validate`, in report order.
pub const CHECKS: &[(&str, Check)] = &[
    ("epipolar-property-1", check_property_1),
    ("epipolar-property-2", check_property_2),
    ("footprint-locality", check_locality),
    ("project-emit-consistency", check_project_emit),
    ("frustum-convex-containment", check_frustum_containment),
    ("mixer-zero-weight-passthrough", check_mixer_passthrough),
    ("mixer-padding-invariance", check_padding),
    ("mlp-view-permutation-invariance", check_view_permutation),
    ("field-outputs-finite", check_finite_outputs),
    ("weight-profile-invariants", check_profiles),
    ("pdf-normalization", check_pdf_normalization),
    ("focused-samples-in-support", check_sample_support),
    ("occlusion-sparsity", check_sparsity),
    ("ctf-beats-uniform", check_quality),
    ("compositing-weights-sum", check_weight_sum),
    ("weight-monotonicity", check_weight_monotone),
    ("quadrature-consistency", check_quadrature),
    ("exact-cover", check_cover),
    ("prefetch-capacity", check_capacity),
    ("depth-consistency", check_depth_consistency),
    ("greedy-dominance", check_greedy_dominance),
    ("scheduler-determinism", check_scheduler_determinism),
    ("balance-optimality", check_balance),
    ("bank-lower-bound", check_bank_lower_bound),
    ("prefetch-monotonicity", check_prefetch_monotone),
    ("pipeline-lower-bounds", check_pipeline_bounds),
    ("peak-throughput", check_peak),
    ("perf-monotonicity", check_perf_monotone),
    ("ablation-direction", check_ablation),
    ("config-round-trip", check_config_round_trip),
    ("output-round-trip", check_output_round_trip),
];

pub fn run_checks(faults: &Faults) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|&(name, f)| {
            let t = Instant::now();
            let r = f(faults);
            let seconds = t.elapsed().as_secs_f64();
            let (status, detail) = match r {
                Ok(d) if d.starts_with("skipped") => (Status::Skip, d),
                Ok(d) => (Status::Pass, d),
                Err(d) => (Status::Fail, d),
            };
            CheckResult { name, status, detail, seconds }
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A camera somewhere around the origin, looking near it.
pub fn random_pose(r: &mut ChaCha8Rng) -> CameraPose {
    loop {
        let c = Vec3::new(r.gen_range(-4.0..4.0), r.gen_range(-4.0..4.0), r.gen_range(-4.0..4.0));
        if c.norm() < 1.5 {
            continue;
        }
        let target = Vec3::new(r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5));
        let up = if (target - c).normalize().y.abs() > 0.95 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, -1.0, 0.0) };
        let (w, h) = (r.gen_range(32..=640), r.gen_range(32..=480));
        if let Ok(p) = CameraPose::look_at_fov(c, target, up, r.gen_range(30.0..80.0), w, h) {
            return p;
        }
    }
}

/// Two cameras at least 0.1 apart.
pub fn random_pair(r: &mut ChaCha8Rng) -> (CameraPose, CameraPose) {
    loop {
        let a = random_pose(r);
        let b = random_pose(r);
        if (a.center() - b.center()).norm() > 0.1 {
            return (a, b);
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EpipolarStats {
    pub pairs: usize,
    pub points: usize,
    pub max_residual: f64,
    pub max_disagreement: f64,
}

/// Property 1: projections of `points` samples along a random novel ray lie
/// on that ray's epipolar line, which passes through the epipole. Property
/// 2: pixels on one line through the novel-view epipole share an epipolar
/// line on the source.
pub fn epipolar_suite(pairs: usize, points: usize, seed: u64) -> EpipolarStats {
    let mut r = rng(seed);
    let mut st = EpipolarStats { pairs, ..Default::default() };
    for _ in 0..pairs {
        let (novel, src) = random_pair(&mut r);
        let pixel = (r.gen_range(0..novel.image_height as i64), r.gen_range(0..novel.image_width as i64));
        let ray = emit_ray(&novel, pixel, 0.1, 10.0).expect("pixel inside image");
        let Ok(line) = epipolar_line(&src, &novel, &ray) else { continue };
        // Far epipoles are checked relative to their magnitude.
        if let Some((u, v)) = compute_epipole(&src, &novel).ok().and_then(|e| e.to_euclidean()) {
            st.max_residual = st.max_residual.max(line.residual(u, v).abs() / (1.0 + u.abs().max(v.abs())));
        }
        for _ in 0..points {
            let x = ray.at(r.gen_range(ray.t_near..ray.t_far));
            if src.to_camera(&x).z < 0.05 {
                continue;
            }
            let (u, v) = project_point(&src, &x).expect("point in front");
            st.max_residual = st.max_residual.max(line.residual(u, v).abs());
            st.points += 1;
        }
        // Lines through the novel-view epipole.
        let e = compute_epipole(&novel, &src).expect("distinct centers").coords();
        let q = [r.gen_range(0.0..novel.image_width as f64), r.gen_range(0.0..novel.image_height as f64)];
        let along: Vec<[f64; 2]> = if e.z.abs() > 1e-9 * e.norm() {
            let (eu, ev) = (e.x / e.z, e.y / e.z);
            if ((q[0] - eu).powi(2) + (q[1] - ev).powi(2)).sqrt() < 5.0 {
                continue;
            }
            (0..8)
                .map(|i| {
                    let s = 0.5 + i as f64 / 7.0;
                    [eu + s * (q[0] - eu), ev + s * (q[1] - ev)]
                })
                .collect()
        } else {
            let d = Vec3::new(e.x, e.y, 0.0).normalize();
            (0..8).map(|i| [q[0] + 20.0 * i as f64 * d.x, q[1] + 20.0 * i as f64 * d.y]).collect()
        };
        let lines: Vec<_> = along
            .iter()
            .filter_map(|&[u, v]| {
                let ray = Ray::new(novel.center(), pixel_direction(&novel, u, v), 0.1, 10.0, (0, 0)).ok()?;
                epipolar_line(&src, &novel, &ray).ok()
            })
            .collect();
        for l in lines.iter().skip(1) {
            st.max_disagreement = st.max_disagreement.max(l.disagreement(&lines[0]));
        }
    }
    st
}

fn check_property_1(_: &Faults) -> Result<String, String> {
    let st = epipolar_suite(100, 64, 1);
    ensure(st.max_residual < 1e-6, || format!("max residual {:e} px", st.max_residual))?;
    Ok(format!("{} points, max residual {:.1e} px", st.points, st.max_residual))
}

fn check_property_2(_: &Faults) -> Result<String, String> {
    let st = epipolar_suite(100, 8, 2);
    ensure(st.max_disagreement < 1e-6, || format!("max disagreement {:e}", st.max_disagreement))?;
    Ok(format!("max disagreement {:.1e}", st.max_disagreement))
}

/// Corners of a random frustum in front of `pose`.
fn random_frustum(r: &mut ChaCha8Rng, pose: &CameraPose) -> [Vec3; 8] {
    let u0 = r.gen_range(0.0..pose.image_width as f64 - 8.0);
    let v0 = r.gen_range(0.0..pose.image_height as f64 - 8.0);
    let (du, dv) = (r.gen_range(1.0..8.0), r.gen_range(1.0..8.0));
    let t0 = r.gen_range(2.0..4.0);
    let t1 = t0 + r.gen_range(0.1..2.0);
    let mut out = [Vec3::zeros(); 8];
    let mut i = 0;
    for t in [t0, t1] {
        for (u, v) in [(u0, v0), (u0 + du, v0), (u0, v0 + dv), (u0 + du, v0 + dv)] {
            out[i] = pose.center() + pixel_direction(pose, u, v) * t;
            i += 1;
        }
    }
    out
}

fn hull_of(corners: &[Vec3; 8], pose: &CameraPose) -> Option<nerfsim_core::geometry::ConvexPolygon2D> {
    match project_frustum(corners, pose) {
        Footprint::Projected { hull, .. } => Some(hull),
        Footprint::Unprojectable => None,
    }
}

fn check_locality(_: &Faults) -> Result<String, String> {
    let mut r = rng(3);
    let mut tested = 0;
    for _ in 0..200 {
        let (novel, src) = random_pair(&mut r);
        let corners = random_frustum(&mut r, &novel);
        let Some(hull) = hull_of(&corners, &src) else { continue };
        let centroid = corners.iter().sum::<Vec3>() / 8.0;
        let s = r.gen_range(0.05..1.0);
        let shrunk = corners.map(|c| centroid + (c - centroid) * s);
        let small = hull_of(&shrunk, &src).ok_or("shrunk frustum became unprojectable")?;
        for p in small.vertices() {
            ensure(hull.contains(*p, 1e-6 * (1.0 + p[0].abs() + p[1].abs())), || format!("shrunk vertex {p:?} escapes"))?;
        }
        tested += 1;
    }
    Ok(format!("{tested} frusta"))
}

fn check_project_emit(_: &Faults) -> Result<String, String> {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let pose = random_pose(&mut r);
        let (row, col) = (r.gen_range(0..pose.image_height as i64), r.gen_range(0..pose.image_width as i64));
        let ray = emit_ray(&pose, (row, col), 0.1, 10.0).map_err(|e| e.to_string())?;
        let (u, v) = project_point(&pose, &ray.at(r.gen_range(0.1..10.0))).map_err(|e| e.to_string())?;
        worst = worst.max((u - col as f64).abs()).max((v - row as f64).abs());
    }
    ensure(worst < 1e-6, || format!("max pixel error {worst:e}"))?;
    Ok(format!("max pixel error {worst:.1e}"))
}

fn check_frustum_containment(_: &Faults) -> Result<String, String> {
    let mut r = rng(5);
    let mut n = 0;
    for _ in 0..200 {
        let (novel, src) = random_pair(&mut r);
        let corners = random_frustum(&mut r, &novel);
        let Some(hull) = hull_of(&corners, &src) else { continue };
        for _ in 0..20 {
            let (a, b, c) = (r.gen::<f64>(), r.gen::<f64>(), r.gen::<f64>());
            let lerp = |p: Vec3, q: Vec3, t: f64| p + (q - p) * t;
            let near = lerp(lerp(corners[0], corners[1], a), lerp(corners[2], corners[3], a), b);
            let far = lerp(lerp(corners[4], corners[5], a), lerp(corners[6], corners[7], a), b);
            let (u, v) = project_point(&src, &lerp(near, far, c)).map_err(|e| e.to_string())?;
            ensure(hull.contains([u, v], 1e-6 * (1.0 + u.abs() + v.abs())), || {
                format!("interior point ({u}, {v}) outside hull")
            })?;
            n += 1;
        }
    }
    Ok(format!("{n} interior points"))
}

fn small_net(seed: u64) -> NetworkConfig {
    NetworkConfig {
        feature_channels: 5,
        hidden: vec![7, 6],
        density_features: 4,
        n_max: 12,
        coarse_channel_scale: 0.5,
        weights: WeightSource::Seeded { seed },
    }
}

fn random_vec(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-scale..scale)).collect()
}

fn check_mixer_passthrough(_: &Faults) -> Result<String, String> {
    let cfg = small_net(6);
    let net = Network::seeded(&cfg, 6);
    let (_, w2, w3) = net.mixer_weights();
    let mut mats: Vec<_> = net.mlp_layers().to_vec();
    mats.extend([nalgebra_zero(cfg.n_max), w2.clone(), w3.clone()]);
    let zero = Network::from_parts(&cfg, mats).map_err(|e| e.to_string())?;
    let mut r = rng(6);
    let d = cfg.density_features;
    for n in 1..=cfg.n_max {
        let f = random_vec(&mut r, n * d, 2.0);
        let all = ray_mixer_forward(&zero, &f, &vec![true; n]).map_err(|e| e.to_string())?;
        for j in 0..n {
            let alone = ray_mixer_forward(&zero, &f[j * d..(j + 1) * d], &[true]).map_err(|e| e.to_string())?;
            ensure(all[j] == alone[0], || format!("n={n} point {j}: {} vs {}", all[j], alone[0]))?;
        }
    }
    Ok("exact".into())
}

fn nalgebra_zero(n: usize) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::zeros(n, n)
}

fn check_padding(_: &Faults) -> Result<String, String> {
    let cfg = small_net(7);
    let net = Network::seeded(&cfg, 7);
    let mut r = rng(7);
    let d = cfg.density_features;
    for n in 1..cfg.n_max {
        let f = random_vec(&mut r, n * d, 2.0);
        let base = ray_mixer_forward(&net, &f, &vec![true; n]).map_err(|e| e.to_string())?;
        let pad = r.gen_range(1..=cfg.n_max - n);
        let mut padded = f.clone();
        padded.extend(random_vec(&mut r, pad * d, 5.0));
        let mut valid = vec![true; n];
        valid.extend(vec![false; pad]);
        let out = ray_mixer_forward(&net, &padded, &valid).map_err(|e| e.to_string())?;
        ensure(out[..n] == base[..], || format!("n={n} pad={pad} changed valid densities"))?;
    }
    Ok("bit-exact".into())
}

fn check_view_permutation(_: &Faults) -> Result<String, String> {
    let cfg = small_net(8);
    let net = Network::seeded(&cfg, 8);
    let mut r = rng(8);
    let c = cfg.feature_channels;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let s = r.gen_range(1..8);
        let f = random_vec(&mut r, s * c, 3.0);
        let mut order: Vec<usize> = (0..s).collect();
        for i in (1..s).rev() {
            order.swap(i, r.gen_range(0..=i));
        }
        let g: Vec<f64> = order.iter().flat_map(|&v| f[v * c..(v + 1) * c].iter().copied()).collect();
        let (ca, da) = eval_point_mlp(&net, &f, s).map_err(|e| e.to_string())?;
        let (cb, db) = eval_point_mlp(&net, &g, s).map_err(|e| e.to_string())?;
        for (a, b) in ca.iter().chain(&da).zip(cb.iter().chain(&db)) {
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
        }
    }
    ensure(worst < 1e-12, || format!("max relative change {worst:e}"))?;
    Ok(format!("max relative change {worst:.1e}"))
}

fn check_finite_outputs(_: &Faults) -> Result<String, String> {
    let cfg = small_net(9);
    let net = Network::seeded(&cfg, 9);
    let mut r = rng(9);
    let (c, d) = (cfg.feature_channels, cfg.density_features);
    for _ in 0..10_000 {
        let s = r.gen_range(1..6);
        let (rgb, fs) = eval_point_mlp(&net, &random_vec(&mut r, s * c, 100.0), s).map_err(|e| e.to_string())?;
        ensure(rgb.iter().chain(&fs).all(|v| v.is_finite()), || "non-finite MLP output".into())?;
        let n = r.gen_range(1..=cfg.n_max);
        let sig = ray_mixer_forward(&net, &random_vec(&mut r, n * d, 100.0), &vec![true; n]).map_err(|e| e.to_string())?;
        ensure(sig.iter().all(|v| v.is_finite()), || "non-finite density".into())?;
    }
    Ok("10000 draws".into())
}

fn random_profile(r: &mut ChaCha8Rng, empty: bool) -> WeightProfile {
    let n = r.gen_range(1..24);
    let (t0, t1) = (2.0, 6.0);
    let mut depths: Vec<f64> = (0..n).map(|_| r.gen_range(t0..t1)).collect();
    depths.sort_by(f64::total_cmp);
    depths.dedup();
    let n = depths.len();
    let sigmas = (0..n).map(|_| if empty || r.gen_bool(0.5) { 0.0 } else { r.gen_range(0.0..8.0) }).collect();
    WeightProfile::new(depths, sigmas, vec![[0.5; 3]; n], t0, t1).expect("valid profile")
}

fn check_profiles(_: &Faults) -> Result<String, String> {
    let mut r = rng(10);
    for _ in 0..2000 {
        let p = random_profile(&mut r, false);
        ensure(p.transmittance[0] == 1.0, || "T_1 != 1".into())?;
        ensure(p.transmittance.windows(2).all(|w| w[1] <= w[0]), || "T increases".into())?;
        ensure(p.weights.iter().all(|w| (0.0..=1.0).contains(w)), || "weight outside [0, 1]".into())?;
        let sum: f64 = p.weights.iter().sum();
        ensure(sum <= 1.0 + 1e-12, || format!("weights sum to {sum}"))?;
        ensure((1.0 - sum - p.residual).abs() < 1e-12, || format!("gap {} vs residual {}", 1.0 - sum, p.residual))?;
    }
    Ok("2000 profiles".into())
}

fn joint_sum(pdf: &nerfsim_core::sampling::SamplingPdf) -> f64 {
    pdf.rays.iter().zip(&pdf.ray_prob).map(|(ray, p)| p * ray.conditional.iter().sum::<f64>()).sum()
}

fn check_pdf_normalization(_: &Faults) -> Result<String, String> {
    let mut r = rng(11);
    for i in 0..300 {
        let empty = i % 3 == 0;
        let profiles: Vec<_> = (0..r.gen_range(1..40)).map(|_| random_profile(&mut r, empty)).collect();
        let pdf = build_pdf(&profiles, 1e-2).map_err(|e| e.to_string())?;
        let s = joint_sum(&pdf);
        let tol = if pdf.fallback { 1e-12 } else { 1e-9 };
        ensure((s - 1.0).abs() <= tol, || format!("joint sum {s} (fallback {})", pdf.fallback))?;
        for ray in &pdf.rays {
            let m: f64 = ray.mass.iter().sum();
            ensure((m - 1.0).abs() <= 1e-9, || format!("bin masses sum to {m}"))?;
        }
    }
    Ok("300 ray sets".into())
}

fn check_sample_support(_: &Faults) -> Result<String, String> {
    let mut r = rng(12);
    let mut n = 0;
    for j in 0..2000 {
        let p = random_profile(&mut r, j % 5 == 0);
        let pdf = RayPdf::from_profile(&p, false);
        for t in sample_ray(&pdf, r.gen_range(1..64), &mut ray_rng(12, 0, j)) {
            ensure(t >= p.t_near && t <= p.t_far, || format!("depth {t} outside range"))?;
            let ok = (0..pdf.mass.len()).any(|k| pdf.mass[k] > 0.0 && t >= pdf.edges[k] && t <= pdf.edges[k + 1]);
            ensure(ok, || format!("depth {t} in a zero-mass bin"))?;
            n += 1;
        }
    }
    Ok(format!("{n} samples"))
}

/// A camera looking down +z at a dense slab occupying `z ∈ [4, 5]`, so the
/// far half of the `[2, 8]` depth range lies behind it.
pub fn occluder_rig(size: u32) -> (CameraPose, AnalyticScene, (f64, f64), f64) {
    let pose = CameraPose::look_at_fov(Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, -1.0, 0.0), 40.0, size, size)
        .expect("valid pose");
    let scene = AnalyticScene::new(
        vec![Primitive {
            shape: Shape::Box { min: [-50.0, -50.0, 4.0], max: [50.0, 50.0, 5.0] },
            density: 40.0,
            color: [0.3, 0.6, 0.2],
        }],
        [1.0; 3],
    )
    .expect("valid scene");
    (pose, scene, (2.0, 8.0), 5.0)
}

/// Share of focused samples landing behind the occluder of [`occluder_rig`].
pub fn occlusion_fraction(size: u32, cfg: &SamplingConfig, seed: u64) -> nerfsim_core::Result<f64> {
    let (pose, scene, (t0, t1), back) = occluder_rig(size);
    let rays = pixel_rays(&pose, t0, t1)?;
    let out = render_coarse_then_focus(&rays, size as usize, size as usize, &scene, cfg, seed)?;
    let (mut behind, mut total) = (0usize, 0usize);
    for (ray, ts) in rays.iter().zip(&out.focused) {
        total += ts.len();
        behind += ts.iter().filter(|&&t| ray.at(t).z > back).count();
    }
    Ok(behind as f64 / total.max(1) as f64)
}

pub fn default_sampling() -> SamplingConfig {
    SamplingConfig { n_coarse: 16, coarse_views: 4, n_focused: 48, n_max: 128, tau: 1e-2, stratified_coarse: true }
}

fn check_sparsity(_: &Faults) -> Result<String, String> {
    let f = occlusion_fraction(32, &default_sampling(), 13).map_err(|e| e.to_string())?;
    ensure(f < 0.05, || format!("{:.2}% of focused samples behind the slab", 100.0 * f))?;
    Ok(format!("{:.2}% behind", 100.0 * f))
}

/// Mean absolute error of coarse-then-focus `(16, 48)` and of uniform
/// 64-point sampling against the 1024-point reference, per seed.
pub fn quality_suite(size: u32, seeds: std::ops::Range<u64>) -> nerfsim_core::Result<Vec<(f64, f64)>> {
    let rig = standard_rig(size);
    let (t0, t1) = rig.depth_range;
    let rays = pixel_rays(&rig.novel, t0, t1)?;
    let n = size as usize;
    let reference = render_reference(&rig.scene, &rays, n, n, 1024)?;
    let cfg = default_sampling();
    seeds
        .map(|seed| {
            let ctf = render_coarse_then_focus(&rays, n, n, &rig.scene, &cfg, seed)?.image;
            let uni = render_uniform(&rays, n, n, &rig.scene, 64, seed)?;
            Ok((ctf.mean_abs_error(&reference)?, uni.mean_abs_error(&reference)?))
        })
        .collect()
}

fn check_quality(_: &Faults) -> Result<String, String> {
    let r = quality_suite(64, 0..10).map_err(|e| e.to_string())?;
    for (seed, (c, u)) in r.iter().enumerate() {
        ensure(c < u, || format!("seed {seed}: ctf {c:.5} vs uniform {u:.5}"))?;
    }
    let mean = |f: fn(&(f64, f64)) -> f64| r.iter().map(f).sum::<f64>() / r.len() as f64;
    Ok(format!("mean error ctf {:.5} vs uniform {:.5}", mean(|x| x.0), mean(|x| x.1)))
}

/// Worst `|Σ w + residual − 1|` over random rays.
pub fn weight_sum_error(rays: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..rays {
        let n = r.gen_range(1..64);
        let mut depths: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..10.0)).collect();
        depths.sort_by(f64::total_cmp);
        depths.dedup();
        let n = depths.len();
        let sigmas = (0..n).map(|_| if r.gen_bool(0.3) { 0.0 } else { r.gen_range(0.0..50.0) }).collect();
        let valid = (0..n).map(|_| r.gen_bool(0.9)).collect();
        let s = RaySamples::with_mask(depths, vec![[0.5; 3]; n], sigmas, valid, 10.0, [1.0; 3]).expect("valid samples");
        let (w, residual) = compositing_weights(&s);
        worst = worst.max((w.iter().sum::<f64>() + residual - 1.0).abs());
    }
    worst
}

fn check_weight_sum(_: &Faults) -> Result<String, String> {
    let e = weight_sum_error(20_000, 14);
    ensure(e <= 1e-9, || format!("max error {e:e}"))?;
    Ok(format!("max error {e:.1e}"))
}

fn check_weight_monotone(_: &Faults) -> Result<String, String> {
    let mut r = rng(15);
    for _ in 0..5000 {
        let n = r.gen_range(1..16);
        let mut sig: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..5.0)).collect();
        let deltas: Vec<f64> = (0..n).map(|_| r.gen_range(0.01..1.0)).collect();
        let k = r.gen_range(0..n);
        let (w0, _, _) = weights_from_intervals(&sig, &deltas);
        sig[k] += r.gen_range(0.0..5.0);
        let (w1, _, _) = weights_from_intervals(&sig, &deltas);
        ensure(w1[k] >= w0[k], || format!("w_{k} fell from {} to {}", w0[k], w1[k]))?;
    }
    Ok("5000 perturbations".into())
}

/// Image-level Cauchy differences of stratified renders at doubling point
/// counts. Per-ray differences oscillate at density jumps, so the mean over
/// the image is what must shrink.
fn check_quadrature(_: &Faults) -> Result<String, String> {
    let rig = standard_rig(32);
    let (t0, t1) = rig.depth_range;
    let rays = pixel_rays(&rig.novel, t0, t1).map_err(|e| e.to_string())?;
    let imgs: Vec<_> = (6..13)
        .map(|p| render_uniform(&rays, 32, 32, &rig.scene, 1 << p, 7))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let diffs: Vec<f64> =
        imgs.windows(2).map(|w| w[1].mean_abs_error(&w[0])).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(diffs.windows(2).all(|d| d[1] < d[0]), || format!("differences {diffs:?}"))?;
    let reference = render_reference(&rig.scene, &rays, 32, 32, 8192).map_err(|e| e.to_string())?;
    let last = imgs[imgs.len() - 1].mean_abs_error(&reference).map_err(|e| e.to_string())?;
    ensure(last < diffs[0], || format!("4096-point render is {last:e} from the reference"))?;
    Ok(format!("64 to 4096 points, last difference {:.1e}, reference gap {last:.1e}", diffs[diffs.len() - 1]))
}

fn scheduler_rig(r: &mut ChaCha8Rng) -> WorkloadCube {
    let size = r.gen_range(6..=16);
    let novel = standard_novel(size);
    let ring = RingSpec {
        count: r.gen_range(1..=4),
        radius: r.gen_range(3.0..5.0),
        elevation: r.gen_range(-1.0..1.0),
        arc_deg: r.gen_range(20.0..120.0),
        target: [0.0; 3],
        hfov_deg: 40.0,
        image_width: 32,
        image_height: 32,
    };
    let sources = ring_poses(&ring).expect("valid ring");
    let layout = FeatureLayout { height: 32, width: 32, channels: 4, bytes_per_feature: 1 };
    WorkloadCube::new(novel, r.gen_range(2..=8), (2.5, 6.5), sources, layout).expect("valid cube")
}

const SMALL_CANDIDATES: [PatchShape; 4] =
    [PatchShape::new(4, 4, 2), PatchShape::new(4, 2, 4), PatchShape::new(2, 4, 4), PatchShape::new(8, 2, 2)];

/// Random small rigs with a capacity both partitions can meet.
fn scheduler_cases(seed: u64, count: usize) -> Vec<(WorkloadCube, u64, Vec<PointPatch>, Vec<PointPatch>)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let cube = scheduler_rig(&mut r);
        let mut cap = 4096u64;
        loop {
            if let (Ok(g), Ok(f)) = (greedy_partition(&cube, &SMALL_CANDIDATES, cap), fixed_slicing_partition(&cube, cap)) {
                out.push((cube, cap, g, f));
                break;
            }
            cap *= 2;
        }
    }
    out
}

fn check_cover(_: &Faults) -> Result<String, String> {
    let cases = scheduler_cases(16, 40);
    for (i, (cube, _, g, f)) in cases.iter().enumerate() {
        for patches in [g, f] {
            let mut hits = vec![0u8; cube.cells() as usize];
            for p in patches {
                let (h0, w0, d0) = p.anchor;
                for h in h0..h0 + p.shape.dh {
                    for w in w0..w0 + p.shape.dw {
                        for d in d0..d0 + p.shape.dd {
                            hits[(h * cube.width + w) * cube.depth_bins + d] += 1;
                        }
                    }
                }
            }
            ensure(hits.iter().all(|&c| c == 1), || format!("rig {i}: cells not covered exactly once"))?;
        }
    }
    Ok(format!("{} rigs", cases.len()))
}

fn check_capacity(_: &Faults) -> Result<String, String> {
    let cases = scheduler_cases(17, 40);
    for (i, (cube, cap, g, f)) in cases.iter().enumerate() {
        ensure(g.iter().chain(f).all(|p| p.bytes() <= *cap), || format!("rig {i}: patch over capacity"))?;
        check_partition(cube, g, *cap).map_err(|e| format!("rig {i}: {e}"))?;
    }
    Ok(format!("{} rigs", cases.len()))
}

fn check_depth_consistency(_: &Faults) -> Result<String, String> {
    let cases = scheduler_cases(18, 40);
    for (i, (_, _, g, _)) in cases.iter().enumerate() {
        for a in g {
            for b in g {
                let overlap = a.anchor.0 < b.anchor.0 + b.shape.dh
                    && b.anchor.0 < a.anchor.0 + a.shape.dh
                    && a.anchor.1 < b.anchor.1 + b.shape.dw
                    && b.anchor.1 < a.anchor.1 + a.shape.dw;
                let same = (a.anchor.0, a.anchor.1, a.shape.dh, a.shape.dw) == (b.anchor.0, b.anchor.1, b.shape.dh, b.shape.dw);
                ensure(!overlap || same, || format!("rig {i}: patches {} and {} split a pixel tile", a.seq, b.seq))?;
            }
        }
    }
    Ok(format!("{} rigs", cases.len()))
}

/// Frame-sized rigs: a 40 to 64 pixel novel view over 64 depth bins, four to
/// eight ring sources with half-resolution feature maps, default candidates,
/// and the smallest capacity on a 1.25x ladder both partitions can meet.
/// Below about 40 pixels, or with capacity to spare, large fixed tiles can
/// read fewer bytes than the 256-cell candidates.
pub fn dominance_cases(seed: u64, count: usize) -> Vec<(usize, u64, u64)> {
    let mut r = rng(seed);
    let candidates = default_candidates();
    (0..count)
        .map(|_| {
            let size = r.gen_range(40..=64u32);
            let half = size / 2;
            let ring = RingSpec {
                count: r.gen_range(4..=8),
                radius: 4.0,
                elevation: 0.0,
                arc_deg: r.gen_range(60.0..120.0),
                target: [0.0; 3],
                hfov_deg: 40.0,
                image_width: half,
                image_height: half,
            };
            let sources = ring_poses(&ring).expect("valid ring");
            let layout = FeatureLayout { height: half as usize, width: half as usize, channels: 8, bytes_per_feature: 1 };
            let cube = WorkloadCube::new(standard_novel(size), 64, (2.5, 6.5), sources, layout).expect("valid cube");
            let mut cap = 256u64;
            loop {
                if let (Ok(g), Ok(f)) = (greedy_partition(&cube, &candidates, cap), fixed_slicing_partition(&cube, cap)) {
                    let total = |p: &[PointPatch]| p.iter().map(PointPatch::bytes).sum::<u64>();
                    break (size as usize, total(&g), total(&f));
                }
                cap = cap * 5 / 4;
            }
        })
        .collect()
}

fn check_greedy_dominance(_: &Faults) -> Result<String, String> {
    let cases = dominance_cases(19, 40);
    let losses: Vec<String> = cases
        .iter()
        .enumerate()
        .filter(|(_, (_, g, f))| g > f)
        .map(|(i, (size, g, f))| format!("rig {i} ({size}px): greedy {g} B > fixed {f} B"))
        .collect();
    ensure(losses.is_empty(), || losses.join("; "))?;
    let ratio = cases.iter().map(|&(_, g, f)| g as f64 / f as f64).sum::<f64>() / cases.len() as f64;
    Ok(format!("{} rigs, mean greedy/fixed bytes {ratio:.2}", cases.len()))
}

fn check_scheduler_determinism(_: &Faults) -> Result<String, String> {
    let a = scheduler_cases(20, 10);
    let b = scheduler_cases(20, 10);
    for ((_, _, g1, f1), (_, _, g2, f2)) in a.iter().zip(&b) {
        ensure(g1 == g2 && f1 == f2, || "queues differ between identical runs".into())?;
    }
    Ok("10 rigs".into())
}

/// Spatial, row and view cycles of one texel set.
pub fn interleave_cycles(set: &TexelSet, views: usize, banks: (usize, usize), faults: &Faults) -> (u64, u64, u64) {
    let (b1, b2) = banks;
    let dims = (views, 256, 256, 4);
    let spatial = if faults.faulty_interleave {
        BankedFeatureStore::new(dims, Interleave::Spatial { b1: 1, b2: 1 }, 1, 1)
    } else {
        BankedFeatureStore::new(dims, Interleave::Spatial { b1, b2 }, b1 * b2, 1)
    }
    .expect("valid store");
    let row = BankedFeatureStore::new(dims, Interleave::Row, b1 * b2, 1).expect("valid store");
    let view = BankedFeatureStore::new(dims, Interleave::View, b1 * b2, 1).expect("valid store");
    (access_cycles(set, &spatial), access_cycles(set, &row), access_cycles(set, &view))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BalanceStats {
    pub footprints: usize,
    /// Summed access cycles per scheme.
    pub spatial: u64,
    pub row: u64,
    pub view: u64,
    /// Footprints where spatial is slower than row or view.
    pub losses: usize,
    pub strips: usize,
    pub strict_strips: usize,
}

/// Random rectangles with both extents at least `(b1, b2)`; strips are the
/// ones at least four times longer than tall or wide.
pub fn balance_suite(footprints: usize, seed: u64, faults: &Faults) -> BalanceStats {
    let (b1, b2) = (2, 4);
    let mut r = rng(seed);
    let mut st = BalanceStats { footprints, ..Default::default() };
    for i in 0..footprints {
        let strip = i % 2 == 0;
        let (h, w) = if strip {
            if r.gen_bool(0.5) {
                let h = r.gen_range(b1..=b1 + 2);
                (h, r.gen_range(4 * h.max(b2)..=64))
            } else {
                let w = r.gen_range(b2..=b2 + 2);
                (r.gen_range(4 * w..=64), w)
            }
        } else {
            (r.gen_range(b1..=48), r.gen_range(b2..=48))
        };
        let (r0, c0) = (r.gen_range(0..256 - h), r.gen_range(0..256 - w));
        let set = TexelSet::rect(r.gen_range(0..6), r0..r0 + h, c0..c0 + w);
        let (s, row, view) = interleave_cycles(&set, 6, (b1, b2), faults);
        st.spatial += s;
        st.row += row;
        st.view += view;
        if s > row || s > view {
            st.losses += 1;
        }
        if strip {
            st.strips += 1;
            if s < row && s < view {
                st.strict_strips += 1;
            }
        }
    }
    st
}

/// Spatial must win in aggregate and strictly on at least half the strips.
/// Single footprints can lose: a tall rectangle whose width is not a
/// multiple of `b2` puts more texels in one spatial bank than row
/// interleaving puts in one row bank.
pub fn balance_holds(st: &BalanceStats) -> Result<(), String> {
    ensure(st.spatial <= st.row && st.spatial <= st.view, || {
        format!("summed cycles spatial {} vs row {} and view {}", st.spatial, st.row, st.view)
    })?;
    ensure(2 * st.strict_strips >= st.strips, || {
        format!("strict improvement on only {} of {} strips", st.strict_strips, st.strips)
    })
}

fn check_balance(f: &Faults) -> Result<String, String> {
    let st = balance_suite(1000, 21, f);
    balance_holds(&st)?;
    Ok(format!(
        "cycles spatial {} / row {} / view {}; strict on {} of {} strips; {} single-footprint losses",
        st.spatial, st.row, st.view, st.strict_strips, st.strips, st.losses
    ))
}

fn check_bank_lower_bound(_: &Faults) -> Result<String, String> {
    let mut r = rng(22);
    let mut balanced = 0;
    for _ in 0..2000 {
        let (b1, b2) = (r.gen_range(1..4), r.gen_range(1..5));
        let scheme = match r.gen_range(0..3) {
            0 => Interleave::Row,
            1 => Interleave::View,
            _ => Interleave::Spatial { b1, b2 },
        };
        let wpb = r.gen_range(1..4);
        let store = BankedFeatureStore::new((4, 64, 64, r.gen_range(1..5)), scheme, b1 * b2, wpb).map_err(|e| e.to_string())?;
        let mut set = TexelSet::default();
        for _ in 0..r.gen_range(1..4) {
            let (h, w) = (r.gen_range(1..20), r.gen_range(1..20));
            let (r0, c0) = (r.gen_range(0..64 - h), r.gen_range(0..64 - w));
            set.extend(TexelSet::rect(r.gen_range(0..4), r0..r0 + h, c0..c0 + w));
        }
        let words = bank_words(&set, &store);
        let total: u64 = words.iter().sum();
        let bound = total.div_ceil((store.banks * wpb) as u64);
        let cycles = access_cycles(&set, &store);
        ensure(cycles >= bound, || format!("{cycles} cycles below the parallel bound {bound}"))?;
        if words.iter().all(|&w| w == words[0]) {
            balanced += 1;
            ensure(cycles == bound, || format!("balanced set takes {cycles} cycles, bound {bound}"))?;
        }
    }
    Ok(format!("2000 sets, {balanced} balanced"))
}

fn check_prefetch_monotone(_: &Faults) -> Result<String, String> {
    let dram = DramConfig::default();
    let store =
        BankedFeatureStore::new((2, 128, 128, 8), Interleave::Spatial { b1: 2, b2: 4 }, 8, 1).map_err(|e| e.to_string())?;
    let mut prev = 0;
    for n in 1..100usize {
        let set = TexelSet::rect(0, 0..n, 0..n);
        let bytes = set.texel_count() * 8;
        let c = prefetch_cycles(bytes, &set, &dram, &store, u64::MAX).map_err(|e| e.to_string())?;
        ensure(c >= prev, || format!("{n}x{n} footprint: {c} < {prev} cycles"))?;
        prev = c;
    }
    Ok("nested footprints up to 99x99".into())
}

fn check_pipeline_bounds(_: &Faults) -> Result<String, String> {
    let mut r = rng(23);
    let pre = PreprocessConfig::default();
    for _ in 0..1000 {
        let patches: Vec<PatchTiming> = (0..r.gen_range(1..50))
            .map(|seq| PatchTiming {
                seq,
                points: r.gen_range(0..500),
                bytes: 0,
                prefetch: r.gen_range(0..5000),
                preprocess: r.gen_range(0..2000),
                gemm: r.gen_range(0..3000),
                special: r.gen_range(0..500),
            })
            .collect();
        let st = simulate_stage(patches, &pre);
        ensure(st.total >= st.compute && st.total >= st.prefetch, || format!("total {} below a bound", st.total))?;
    }
    Ok("1000 random stages".into())
}

struct SmallFrame {
    work: FrameWorkload,
    net: NetworkConfig,
    sampling: SamplingConfig,
}

fn small_frame() -> Result<SmallFrame, String> {
    let rig = standard_rig(48);
    let sampling = default_sampling();
    let net = NetworkConfig {
        feature_channels: 32,
        hidden: vec![24, 12],
        density_features: 16,
        n_max: 128,
        coarse_channel_scale: 0.25,
        weights: WeightSource::Seeded { seed: 0 },
    };
    let layout = FeatureLayout { height: 24, width: 24, channels: 32, bytes_per_feature: 1 };
    let work = FrameWorkload::build(&rig.novel, &rig.sources, rig.depth_range, layout, 32, &rig.scene, &sampling, 0)
        .map_err(|e| e.to_string())?;
    Ok(SmallFrame { work, net, sampling })
}

const SMALL_FRAME_CANDIDATES: [PatchShape; 4] =
    [PatchShape::new(8, 8, 4), PatchShape::new(8, 4, 8), PatchShape::new(4, 8, 8), PatchShape::new(16, 4, 4)];

fn profile_small(f: &SmallFrame, hw: &HardwareConfig, df: Dataflow) -> Result<nerfsim_core::profile::ProfileReport, String> {
    profile_frame(&f.work, &f.net, &f.sampling, &SMALL_FRAME_CANDIDATES, hw, df).map_err(|e| e.to_string())
}

fn check_peak(_: &Faults) -> Result<String, String> {
    let f = small_frame()?;
    let hw = HardwareConfig {
        dram: DramConfig { bandwidth_bytes_per_cycle: 1e15, latency_cycles: 0, burst_bytes: 1 },
        ..HardwareConfig::default()
    };
    let peak = hw.pool.peak_flops_per_cycle() as f64;
    ensure(peak == 20_480.0, || format!("peak {peak} FLOPs/cycle"))?;
    for df in Dataflow::ALL {
        let r = profile_small(&f, &hw, df)?;
        ensure(r.achieved_flops_per_cycle <= peak, || format!("{df}: {} FLOPs/cycle above peak", r.achieved_flops_per_cycle))?;
    }
    Ok(format!("peak {:.2} TFLOPS", hw.pool.peak_flops() / 1e12))
}

fn check_perf_monotone(_: &Faults) -> Result<String, String> {
    let f = small_frame()?;
    for df in [Dataflow::Gen, Dataflow::Var1] {
        let mut prev = 0;
        for bw in [64.0, 17.8, 8.0, 2.0] {
            let mut hw = HardwareConfig::default();
            hw.dram.bandwidth_bytes_per_cycle = bw;
            let t = profile_small(&f, &hw, df)?.trace.total_cycles;
            ensure(t >= prev, || format!("{df}: bandwidth {bw} gave {t} < {prev} cycles"))?;
            prev = t;
        }
        let mut prev = u64::MAX;
        for arrays in [4, 10, 40, 80] {
            let mut hw = HardwareConfig::default();
            hw.pool.arrays = arrays;
            let t = profile_small(&f, &hw, df)?.trace.total_cycles;
            ensure(t <= prev, || format!("{df}: {arrays} arrays gave {t} > {prev} cycles"))?;
            prev = t;
        }
    }
    Ok("bandwidth and array sweeps".into())
}

fn check_ablation(_: &Faults) -> Result<String, String> {
    Ok("skipped: needs the full standard rig; run the acceptance suite".into())
}

pub const STANDARD_CONFIG: &str = include_str!("../../../configs/standard.json");

fn check_config_round_trip(_: &Faults) -> Result<String, String> {
    let path = std::path::Path::new("configs/standard.json");
    let a = parse_config(STANDARD_CONFIG, path).map_err(|e| e.to_string())?;
    let text = serde_json::to_string_pretty(&a).map_err(|e| e.to_string())?;
    let b: ExperimentConfig = parse_config(&text, path).map_err(|e| e.to_string())?;
    ensure(a == b, || "config changed across a round trip".into())?;
    Ok("standard config".into())
}

fn check_output_round_trip(_: &Faults) -> Result<String, String> {
    let cases = scheduler_cases(24, 5);
    for (_, _, g, _) in &cases {
        let mut a = Vec::new();
        write_jsonl(g, &mut a).map_err(|e| e.to_string())?;
        let back = nerfsim_core::scheduler::read_jsonl(&a[..]).map_err(|e| e.to_string())?;
        ensure(&back == g, || "patch dump changed across a round trip".into())?;
        let mut b = Vec::new();
        write_jsonl(&back, &mut b).map_err(|e| e.to_string())?;
        ensure(a == b, || "patch dump is not byte-stable".into())?;
    }
    Ok("patch dumps".into())
}

/// Renders the report table.
pub fn format_report(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        let status = match r.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        s.push_str(&format!("{status}  {:width$}  {:7.2}s  {}\n", r.name, r.seconds, r.detail));
    }
    s
}
