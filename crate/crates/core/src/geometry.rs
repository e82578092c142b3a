//! Pinhole cameras, ray generation, and the epipolar geometry used by the
//! workload scheduler.
//!
//! Conventions: right-handed world frame, cameras look down +z in their own
//! frame with +x right and +y down. Pixel coordinates are `(u, v) = (col, row)`
//! and pixel centers sit on integer coordinates.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Smallest camera-frame depth accepted by [`project_point`].
pub const MIN_DEPTH: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Intrinsics plus a world-to-camera rotation and the camera center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct CameraPose {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    rotation: Matrix3<f64>,
    center: Vec3,
    pub image_width: u32,
    pub image_height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    /// Row-major world-to-camera rotation.
    rotation: [[f64; 3]; 3],
    center: [f64; 3],
    image_width: u32,
    image_height: u32,
}

impl TryFrom<PoseRepr> for CameraPose {
    type Error = Error;

    fn try_from(r: PoseRepr) -> Result<Self> {
        let rot = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        CameraPose::new(r.fx, r.fy, r.cx, r.cy, rot, Vec3::from(r.center), r.image_width, r.image_height)
    }
}

impl From<CameraPose> for PoseRepr {
    fn from(p: CameraPose) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = p.rotation[(i, j)];
            }
        }
        PoseRepr {
            fx: p.fx,
            fy: p.fy,
            cx: p.cx,
            cy: p.cy,
            rotation,
            center: [p.center.x, p.center.y, p.center.z],
            image_width: p.image_width,
            image_height: p.image_height,
        }
    }
}

impl CameraPose {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        center: Vec3,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Domain(format!("focal lengths must be positive (fx={fx}, fy={fy})")));
        }
        if image_width == 0 || image_height == 0 {
            return Err(Error::Domain("image dimensions must be at least 1".into()));
        }
        if ![cx, cy].iter().all(|v| v.is_finite()) || !center.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericInput("camera pose".into()));
        }
        let gram = rotation.transpose() * rotation;
        let off = (gram - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(off <= ORTHONORMAL_TOL && (det - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(Error::Domain(format!("rotation is not a proper orthonormal matrix (|RᵀR−I|={off:e}, det={det})")));
        }
        Ok(Self { fx, fy, cx, cy, rotation, center, image_width, image_height })
    }

    /// Camera at `center` looking at `target`. `up` is the world up direction;
    /// image +y points away from it.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        center: Vec3,
        target: Vec3,
        up: Vec3,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        let forward =
            (target - center).try_normalize(1e-12).ok_or_else(|| Error::Domain("look_at target coincides with center".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Domain("look_at up vector parallel to view direction".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self::new(fx, fy, cx, cy, rotation, center, image_width, image_height)
    }

    /// Centered principal point and a horizontal field of view in degrees.
    pub fn look_at_fov(center: Vec3, target: Vec3, up: Vec3, hfov_deg: f64, image_width: u32, image_height: u32) -> Result<Self> {
        let f = 0.5 * image_width as f64 / (0.5 * hfov_deg.to_radians()).tan();
        let cx = (image_width as f64 - 1.0) * 0.5;
        let cy = (image_height as f64 - 1.0) * 0.5;
        Self::look_at(center, target, up, f, f, cx, cy, image_width, image_height)
    }

    pub fn identity(f: f64, c: f64, image_width: u32, image_height: u32) -> Self {
        Self::new(f, f, c, c, Matrix3::identity(), Vec3::zeros(), image_width, image_height).expect("identity pose is valid")
    }

    /// Same camera moved to a new center.
    pub fn with_center(&self, center: Vec3) -> Self {
        Self { center, ..self.clone() }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    /// World-space optical axis.
    pub fn optical_axis(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation * (x - self.center)
    }

    /// Homogeneous image of a camera-frame vector.
    fn apply_intrinsics(&self, p: &Vec3) -> Vec3 {
        Vec3::new(self.fx * p.x + self.cx * p.z, self.fy * p.y + self.cy * p.z, p.z)
    }

    /// Homogeneous image of a world point; valid for any depth sign.
    pub fn project_homogeneous(&self, x: &Vec3) -> Vec3 {
        self.apply_intrinsics(&self.to_camera(x))
    }

    /// Homogeneous image of a world direction (its vanishing point).
    pub fn project_direction(&self, d: &Vec3) -> Vec3 {
        self.apply_intrinsics(&(self.rotation * d))
    }

    pub fn contains_pixel(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as u64) < self.image_height as u64 && (col as u64) < self.image_width as u64
    }
}

/// A camera ray `r(t) = origin + t·direction` with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
    /// `(row, col)` of the rendered pixel.
    pub pixel: (u32, u32),
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, t_near: f64, t_far: f64, pixel: (u32, u32)) -> Result<Self> {
        if ((direction.norm() - 1.0).abs()) > 1e-9 {
            return Err(Error::Domain("ray direction must be a unit vector".into()));
        }
        if !(t_near > 0.0 && t_near < t_far) {
            return Err(Error::Domain(format!("invalid depth bounds [{t_near}, {t_far}]")));
        }
        Ok(Self { origin, direction, t_near, t_far, pixel })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Homogeneous image point; may lie at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousPoint2D(Vec3);

impl HomogeneousPoint2D {
    pub fn new(h: Vec3) -> Result<Self> {
        if h.iter().all(|v| *v == 0.0) {
            return Err(Error::Domain("homogeneous point cannot be the zero vector".into()));
        }
        Ok(Self(h))
    }

    pub fn coords(&self) -> Vec3 {
        self.0
    }

    /// True when the third coordinate vanishes relative to the others.
    pub fn is_at_infinity(&self) -> bool {
        self.0.z.abs() <= 1e-12 * self.0.xy().norm().max(1.0)
    }

    pub fn to_euclidean(&self) -> Option<(f64, f64)> {
        if self.is_at_infinity() {
            None
        } else {
            Some((self.0.x / self.0.z, self.0.y / self.0.z))
        }
    }
}

/// Line `a·u + b·v + c = 0`, normalized so that `a² + b² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line2D {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Line2D {
    fn from_homogeneous(l: Vec3) -> Option<Self> {
        let n = l.xy().norm();
        if n <= 1e-12 * l.norm().max(1e-300) || n == 0.0 {
            return None;
        }
        Some(Self { a: l.x / n, b: l.y / n, c: l.z / n })
    }

    pub fn residual(&self, u: f64, v: f64) -> f64 {
        self.a * u + self.b * v + self.c
    }

    pub fn as_vector(&self) -> Vec3 {
        Vec3::new(self.a, self.b, self.c)
    }

    /// Norm of the cross product of the two (unit-normal) coefficient vectors,
    /// scaled to be sign-insensitive; zero iff the lines coincide.
    pub fn disagreement(&self, other: &Line2D) -> f64 {
        let p = self.as_vector();
        let q = other.as_vector();
        p.cross(&q).norm() / (p.norm() * q.norm())
    }
}

pub type Point2 = [f64; 2];

/// Counter-clockwise convex polygon in image coordinates. Zero, one, or two
/// vertices are allowed and have area zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvexPolygon2D {
    vertices: Vec<Point2>,
}

impl ConvexPolygon2D {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        let n = vertices.len();
        if n >= 3 {
            for i in 0..n {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                let c = vertices[(i + 2) % n];
                if cross(sub(b, a), sub(c, b)) < -1e-9 {
                    return Err(Error::Domain("polygon is not convex and counter-clockwise".into()));
                }
            }
        }
        Ok(Self { vertices })
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new() }
    }

    /// Convex hull (monotone chain) of arbitrary points.
    pub fn hull(points: &[Point2]) -> Self {
        let mut pts: Vec<Point2> = points.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
        if pts.len() <= 2 {
            return Self { vertices: pts };
        }
        let mut lower: Vec<Point2> = Vec::with_capacity(pts.len());
        for p in &pts {
            while lower.len() >= 2
                && cross(sub(lower[lower.len() - 1], lower[lower.len() - 2]), sub(*p, lower[lower.len() - 1])) <= 0.0
            {
                lower.pop();
            }
            lower.push(*p);
        }
        let mut upper: Vec<Point2> = Vec::with_capacity(pts.len());
        for p in pts.iter().rev() {
            while upper.len() >= 2
                && cross(sub(upper[upper.len() - 1], upper[upper.len() - 2]), sub(*p, upper[upper.len() - 1])) <= 0.0
            {
                upper.pop();
            }
            upper.push(*p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        Self { vertices: lower }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Axis-aligned extents `(width, height)`.
    pub fn extents(&self) -> (f64, f64) {
        if self.vertices.is_empty() {
            return (0.0, 0.0);
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            x0 = x0.min(v[0]);
            x1 = x1.max(v[0]);
            y0 = y0.min(v[1]);
            y1 = y1.max(v[1]);
        }
        (x1 - x0, y1 - y0)
    }

    /// Point containment with a tolerance in pixels (boundary counts as inside).
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        match self.vertices.len() {
            0 => false,
            1 => dist(self.vertices[0], p) <= tol,
            2 => segment_distance(self.vertices[0], self.vertices[1], p) <= tol,
            n => (0..n).all(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let e = sub(b, a);
                let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
                len == 0.0 || cross(e, sub(p, a)) / len >= -tol
            }),
        }
    }

    /// Sutherland–Hodgman clip against the rectangle `[x0,x1]×[y0,y1]`.
    pub fn clip_to_rect(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        let mut poly = self.vertices.clone();
        let planes: [(usize, f64, bool); 4] = [(0, x0, true), (0, x1, false), (1, y0, true), (1, y1, false)];
        for (axis, bound, keep_greater) in planes {
            if poly.is_empty() {
                break;
            }
            let inside = |p: &Point2| if keep_greater { p[axis] >= bound } else { p[axis] <= bound };
            let mut out = Vec::with_capacity(poly.len() + 2);
            let n = poly.len();
            for i in 0..n {
                let cur = poly[i];
                let prev = poly[(i + n - 1) % n];
                let (ci, pi) = (inside(&cur), inside(&prev));
                if ci {
                    if !pi {
                        out.push(intersect_axis(prev, cur, axis, bound));
                    }
                    out.push(cur);
                } else if pi {
                    out.push(intersect_axis(prev, cur, axis, bound));
                }
            }
            poly = out;
        }
        // Clipping can introduce duplicates and collinear points; re-hull.
        Self::hull(&poly)
    }

    /// Minkowski sum with the square `[-r, r]²`.
    pub fn dilate(&self, r: f64) -> Self {
        let mut pts = Vec::with_capacity(self.vertices.len() * 4);
        for v in &self.vertices {
            for (dx, dy) in [(-r, -r), (r, -r), (r, r), (-r, r)] {
                pts.push([v[0] + dx, v[1] + dy]);
            }
        }
        Self::hull(&pts)
    }

    /// Horizontal span `[x_min, x_max]` of the polygon at height `y`.
    pub fn span_at(&self, y: f64) -> Option<(f64, f64)> {
        let n = self.vertices.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let (ya, yb) = (a[1], b[1]);
            if (ya - y) * (yb - y) > 0.0 {
                continue;
            }
            if ya == yb {
                if ya == y {
                    lo = lo.min(a[0].min(b[0]));
                    hi = hi.max(a[0].max(b[0]));
                }
                continue;
            }
            let x = a[0] + (y - ya) / (yb - ya) * (b[0] - a[0]);
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if n == 1 && self.vertices[0][1] == y {
            return Some((self.vertices[0][0], self.vertices[0][0]));
        }
        (lo <= hi).then_some((lo, hi))
    }
}

fn sub(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Point2, b: Point2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dist(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn segment_distance(a: Point2, b: Point2, p: Point2) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(a, p);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist([a[0] + t * ab[0], a[1] + t * ab[1]], p)
}

fn intersect_axis(a: Point2, b: Point2, axis: usize, bound: f64) -> Point2 {
    let t = (bound - a[axis]) / (b[axis] - a[axis]);
    let mut p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    p[axis] = bound;
    p
}

/// Ray through the center of `pixel = (row, col)` on the pose's image plane.
pub fn emit_ray(pose: &CameraPose, pixel: (i64, i64), t_near: f64, t_far: f64) -> Result<Ray> {
    let (row, col) = pixel;
    if !pose.contains_pixel(row, col) {
        return Err(Error::Domain(format!("pixel ({row}, {col}) outside {}x{} image", pose.image_height, pose.image_width)));
    }
    Ray::new(pose.center, pixel_direction(pose, col as f64, row as f64), t_near, t_far, (row as u32, col as u32))
}

/// Unit world direction through the continuous image position `(u, v)`.
pub fn pixel_direction(pose: &CameraPose, u: f64, v: f64) -> Vec3 {
    let cam = Vec3::new((u - pose.cx) / pose.fx, (v - pose.cy) / pose.fy, 1.0);
    (pose.rotation.transpose() * cam).normalize()
}

/// Pinhole projection of a world point to `(u, v)`.
pub fn project_point(pose: &CameraPose, x: &Vec3) -> Result<(f64, f64)> {
    let p = pose.to_camera(x);
    if p.z <= MIN_DEPTH {
        return Err(Error::Projection { depth: p.z });
    }
    Ok((pose.fx * p.x / p.z + pose.cx, pose.fy * p.y / p.z + pose.cy))
}

/// Image of `pose_b`'s center on `pose_a`'s image plane.
pub fn compute_epipole(pose_a: &CameraPose, pose_b: &CameraPose) -> Result<HomogeneousPoint2D> {
    let baseline = (pose_a.center - pose_b.center).norm();
    if baseline <= 1e-9 {
        return Err(Error::DegenerateBaseline(format!("camera centers coincide (|Δ|={baseline:e})")));
    }
    HomogeneousPoint2D::new(pose_a.project_homogeneous(&pose_b.center))
}

/// Epipolar line of `ray` on the source image plane.
///
/// Built as the cross product of the source image of the ray origin and the
/// vanishing point of the ray direction, so epipoles at infinity need no
/// special casing.
pub fn epipolar_line(pose_src: &CameraPose, pose_novel: &CameraPose, ray: &Ray) -> Result<Line2D> {
    compute_epipole(pose_src, pose_novel)?;
    let origin = pose_src.project_homogeneous(&ray.origin);
    let vanishing = pose_src.project_direction(&ray.direction);
    Line2D::from_homogeneous(origin.cross(&vanishing))
        .ok_or_else(|| Error::DegenerateBaseline("ray passes through the source camera center".into()))
}

/// Projection of a patch frustum onto one source view.
#[derive(Debug, Clone, PartialEq)]
pub enum Footprint {
    Projected {
        /// Hull of the 8 projected corners, unclipped.
        hull: ConvexPolygon2D,
        /// Hull clipped to the image rectangle.
        clipped: ConvexPolygon2D,
    },
    /// Some corner has non-positive depth in the source camera.
    Unprojectable,
}

impl Footprint {
    pub fn clipped_area(&self) -> Option<f64> {
        match self {
            Footprint::Projected { clipped, .. } => Some(polygon_area(clipped)),
            Footprint::Unprojectable => None,
        }
    }
}

/// Image rectangle `[-0.5, W-0.5] × [-0.5, H-0.5]` covered by the pixels.
pub fn image_rect(pose: &CameraPose) -> (f64, f64, f64, f64) {
    (-0.5, -0.5, pose.image_width as f64 - 0.5, pose.image_height as f64 - 0.5)
}

pub fn project_frustum(corners: &[Vec3; 8], pose_src: &CameraPose) -> Footprint {
    let mut pts = [[0.0; 2]; 8];
    for (p, c) in pts.iter_mut().zip(corners) {
        match project_point(pose_src, c) {
            Ok((u, v)) => *p = [u, v],
            Err(_) => return Footprint::Unprojectable,
        }
    }
    let hull = ConvexPolygon2D::hull(&pts);
    let (x0, y0, x1, y1) = image_rect(pose_src);
    let clipped = hull.clip_to_rect(x0, y0, x1, y1);
    Footprint::Projected { hull, clipped }
}

/// Shoelace area; zero for fewer than three vertices.
pub fn polygon_area(p: &ConvexPolygon2D) -> f64 {
    let v = p.vertices();
    if v.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..v.len() {
        let a = v[i];
        let b = v[(i + 1) % v.len()];
        s += a[0] * b[1] - a[1] * b[0];
    }
    (0.5 * s).abs()
}

/// Assignment of novel-view pixels to epipolar ray groups for one source
/// view. Pixels on one line through the novel-view epipole share a group.
#[derive(Debug, Clone)]
pub struct RayGrouping {
    /// Row-major group index per pixel.
    pub group_of_pixel: Vec<u32>,
    pub group_count: u32,
    /// Index of the residual group holding pixels too close to the epipole.
    pub residual_group: u32,
}

impl RayGrouping {
    pub fn members(&self, group: u32) -> impl Iterator<Item = usize> + '_ {
        self.group_of_pixel.iter().enumerate().filter(move |(_, g)| **g == group).map(|(i, _)| i)
    }
}

/// Groups pixels by the epipolar line they lie on.
///
/// For a finite epipole the line angle about the epipole is binned into
/// `groups` bins and pixels within `residual_radius` of the epipole go to an
/// extra residual group. For an epipole at infinity the lines are parallel
/// and pixels are binned by their perpendicular offset.
pub fn group_rays(pose_novel: &CameraPose, pose_src: &CameraPose, groups: u32, residual_radius: f64) -> Result<RayGrouping> {
    if groups == 0 {
        return Err(Error::Domain("at least one ray group is required".into()));
    }
    let epipole = compute_epipole(pose_novel, pose_src)?;
    let (w, h) = (pose_novel.image_width as usize, pose_novel.image_height as usize);
    let mut group_of_pixel = vec![0u32; w * h];
    match epipole.to_euclidean() {
        Some((eu, ev)) => {
            for row in 0..h {
                for col in 0..w {
                    let (du, dv) = (col as f64 - eu, row as f64 - ev);
                    let g = if (du * du + dv * dv).sqrt() <= residual_radius {
                        groups
                    } else {
                        let angle = dv.atan2(du).rem_euclid(std::f64::consts::PI);
                        ((angle / std::f64::consts::PI * groups as f64) as u32).min(groups - 1)
                    };
                    group_of_pixel[row * w + col] = g;
                }
            }
        }
        None => {
            let d = epipole.coords();
            let n = d.xy().norm();
            let (nx, ny) = (-d.y / n, d.x / n);
            let offsets = [(0.0, 0.0), (w as f64 - 1.0, 0.0), (0.0, h as f64 - 1.0), (w as f64 - 1.0, h as f64 - 1.0)]
                .map(|(u, v)| u * nx + v * ny);
            let lo = offsets.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = (hi - lo).max(1e-12);
            for row in 0..h {
                for col in 0..w {
                    let s = col as f64 * nx + row as f64 * ny;
                    group_of_pixel[row * w + col] = (((s - lo) / span * groups as f64) as u32).min(groups - 1);
                }
            }
        }
    }
    Ok(RayGrouping { group_of_pixel, group_count: groups + 1, residual_group: groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ident() -> CameraPose {
        CameraPose::identity(100.0, 50.0, 200, 200)
    }

    #[test]
    fn principal_pixel_looks_down_z() {
        let r = emit_ray(&ident(), (50, 50), 1.0, 2.0).unwrap();
        assert!((r.direction - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn off_axis_pixel_direction() {
        let r = emit_ray(&ident(), (50, 150), 1.0, 2.0).unwrap();
        let expect = Vec3::new(1.0, 0.0, 1.0).normalize();
        assert!((r.direction - expect).norm() < 1e-12);
    }

    #[test]
    fn out_of_bounds_pixel() {
        assert!(matches!(emit_ray(&ident(), (-1, 0), 1.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(emit_ray(&ident(), (0, 200), 1.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn projection_examples() {
        let p = ident();
        assert_eq!(project_point(&p, &Vec3::new(0.0, 0.0, 2.0)).unwrap(), (50.0, 50.0));
        assert_eq!(project_point(&p, &Vec3::new(1.0, 0.0, 2.0)).unwrap(), (100.0, 50.0));
        match project_point(&p, &Vec3::new(0.0, 0.0, -1.0)) {
            Err(Error::Projection { depth }) => assert_eq!(depth, -1.0),
            other => panic!("expected projection error, got {other:?}"),
        }
    }

    #[test]
    fn epipole_examples() {
        let a = ident();
        let e = compute_epipole(&a, &a.with_center(Vec3::new(1.0, 0.0, 1.0))).unwrap();
        let (u, v) = e.to_euclidean().unwrap();
        assert!((u - 150.0).abs() < 1e-12 && (v - 50.0).abs() < 1e-12);

        let e = compute_epipole(&a, &a.with_center(Vec3::new(1.0, 0.0, 0.0))).unwrap();
        assert!(e.is_at_infinity());
        assert!(e.coords().x > 0.0 && e.coords().y == 0.0);

        assert!(matches!(compute_epipole(&a, &a), Err(Error::DegenerateBaseline(_))));
    }

    #[test]
    fn rejects_improper_rotation() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(CameraPose::new(1.0, 1.0, 0.0, 0.0, m, Vec3::zeros(), 4, 4).is_err());
        assert!(CameraPose::new(0.0, 1.0, 0.0, 0.0, Matrix3::identity(), Vec3::zeros(), 4, 4).is_err());
    }

    #[test]
    fn look_at_axes() {
        let p = CameraPose::look_at(
            Vec3::new(0.0, 0.0, -4.0),
            Vec3::zeros(),
            Vec3::new(0.0, -1.0, 0.0),
            100.0,
            100.0,
            50.0,
            50.0,
            101,
            101,
        )
        .unwrap();
        assert!((p.rotation() - Matrix3::identity()).norm() < 1e-12);
        let (u, v) = project_point(&p, &Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!((u - 50.0).abs() < 1e-12 && v > 50.0);
    }

    #[test]
    fn epipolar_line_passes_through_epipole() {
        let novel = ident();
        let src = CameraPose::look_at(
            Vec3::new(1.5, -0.3, 0.2),
            Vec3::new(0.0, 0.0, 5.0),
            Vec3::new(0.0, -1.0, 0.0),
            120.0,
            110.0,
            60.0,
            55.0,
            120,
            110,
        )
        .unwrap();
        let ray = emit_ray(&novel, (30, 70), 1.0, 8.0).unwrap();
        let line = epipolar_line(&src, &novel, &ray).unwrap();
        let e = compute_epipole(&src, &novel).unwrap().coords();
        assert!(line.as_vector().dot(&e).abs() / e.norm() < 1e-9);
        for k in 0..64 {
            let t = 1.0 + 7.0 * k as f64 / 63.0;
            if let Ok((u, v)) = project_point(&src, &ray.at(t)) {
                assert!(line.residual(u, v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn polygon_area_examples() {
        let sq = ConvexPolygon2D::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(polygon_area(&sq), 1.0);
        let tri = ConvexPolygon2D::new(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(polygon_area(&tri), 2.0);
        assert_eq!(polygon_area(&ConvexPolygon2D::empty()), 0.0);
    }

    #[test]
    fn clockwise_polygon_rejected() {
        assert!(ConvexPolygon2D::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).is_err());
    }

    #[test]
    fn point_frustum_collapses() {
        let c = [Vec3::new(0.1, 0.2, 3.0); 8];
        match project_frustum(&c, &ident()) {
            Footprint::Projected { hull, clipped } => {
                assert_eq!(hull.vertices().len(), 1);
                assert_eq!(polygon_area(&clipped), 0.0);
            }
            Footprint::Unprojectable => panic!("point in front of camera"),
        }
    }

    #[test]
    fn off_image_frustum_clips_to_empty() {
        let base = Vec3::new(100.0, 0.0, 2.0);
        let mut c = [base; 8];
        for (i, p) in c.iter_mut().enumerate() {
            *p += Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64 * 0.1, ((i >> 2) & 1) as f64 * 0.5);
        }
        let fp = project_frustum(&c, &ident());
        assert_eq!(fp.clipped_area(), Some(0.0));
        match fp {
            Footprint::Projected { clipped, .. } => assert!(clipped.is_empty()),
            _ => panic!(),
        }
    }

    #[test]
    fn behind_camera_is_unprojectable() {
        let mut c = [Vec3::new(0.0, 0.0, 2.0); 8];
        c[3].z = -0.5;
        assert_eq!(project_frustum(&c, &ident()), Footprint::Unprojectable);
    }

    #[test]
    fn clip_square_partially() {
        let sq = ConvexPolygon2D::new(vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]).unwrap();
        let c = sq.clip_to_rect(0.0, 0.0, 10.0, 10.0);
        assert!((polygon_area(&c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dilated_point_is_unit_ring() {
        let p = ConvexPolygon2D::hull(&[[3.3, 4.4]]);
        assert!((polygon_area(&p.dilate(1.0)) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn span_of_square() {
        let sq = ConvexPolygon2D::new(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]).unwrap();
        assert_eq!(sq.span_at(1.0), Some((0.0, 2.0)));
        assert_eq!(sq.span_at(3.0), None);
    }

    #[test]
    fn pose_serde_round_trip() {
        let p =
            CameraPose::look_at_fov(Vec3::new(1.0, 0.0, -3.0), Vec3::zeros(), Vec3::new(0.0, -1.0, 0.0), 40.0, 64, 48).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: CameraPose = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn grouping_puts_collinear_pixels_together() {
        let novel = ident();
        let src = novel.with_center(Vec3::new(0.5, 0.2, 0.0));
        let g = group_rays(&novel, &src, 32, 2.0).unwrap();
        // Epipole at infinity along (0.5, 0.2); pixels along that direction share a group.
        let a = g.group_of_pixel[100 * 200 + 20];
        let b = g.group_of_pixel[(100 + 4) * 200 + 30];
        assert_eq!(a, b);
        assert_eq!(g.group_count, 33);
    }
}
