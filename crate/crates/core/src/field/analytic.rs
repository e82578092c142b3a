use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub type Rgb = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
}

impl Shape {
    pub fn contains(&self, x: &Vec3) -> bool {
        match self {
            Shape::Sphere { center, radius } => (x - Vec3::from(*center)).norm_squared() <= radius * radius,
            Shape::Box { min, max } => (0..3).all(|i| x[i] >= min[i] && x[i] <= max[i]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub shape: Shape,
    /// Density per scene unit.
    pub density: f64,
    pub color: Rgb,
}

/// Constant-density primitives over a background color. Stands in for a
/// learned radiance field wherever ground truth is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneRepr", into = "SceneRepr")]
pub struct AnalyticScene {
    primitives: Vec<Primitive>,
    background: Rgb,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRepr {
    primitives: Vec<Primitive>,
    #[serde(default = "white")]
    background: Rgb,
}

fn white() -> Rgb {
    [1.0; 3]
}

impl TryFrom<SceneRepr> for AnalyticScene {
    type Error = Error;
    fn try_from(r: SceneRepr) -> Result<Self> {
        AnalyticScene::new(r.primitives, r.background)
    }
}

impl From<AnalyticScene> for SceneRepr {
    fn from(s: AnalyticScene) -> Self {
        SceneRepr { primitives: s.primitives, background: s.background }
    }
}

fn valid_color(c: &Rgb) -> bool {
    c.iter().all(|v| (0.0..=1.0).contains(v))
}

impl AnalyticScene {
    pub fn new(primitives: Vec<Primitive>, background: Rgb) -> Result<Self> {
        for (i, p) in primitives.iter().enumerate() {
            if !(p.density >= 0.0 && p.density.is_finite()) {
                return Err(Error::Config(format!("primitive {i}: density must be finite and >= 0")));
            }
            if !valid_color(&p.color) {
                return Err(Error::Config(format!("primitive {i}: color outside [0,1]")));
            }
            match &p.shape {
                Shape::Sphere { radius, .. } if !(*radius > 0.0) => {
                    return Err(Error::Config(format!("primitive {i}: sphere radius must be positive")))
                }
                Shape::Box { min, max } if (0..3).any(|k| min[k] > max[k]) => {
                    return Err(Error::Config(format!("primitive {i}: box min exceeds max")))
                }
                _ => {}
            }
        }
        if !valid_color(&background) {
            return Err(Error::Config("background color outside [0,1]".into()));
        }
        Ok(Self { primitives, background })
    }

    pub fn empty(background: Rgb) -> Self {
        Self { primitives: Vec::new(), background }
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn background(&self) -> Rgb {
        self.background
    }

    pub fn with_background(mut self, background: Rgb) -> Self {
        self.background = background;
        self
    }
}

/// Density and color at `x`. Overlapping primitives add densities and mix
/// colors weighted by density; outside every primitive the color is the
/// background. Direction is accepted for interface parity; the analytic field
/// is view-independent.
pub fn eval_analytic(scene: &AnalyticScene, x: &Vec3, _d: &Vec3) -> (f64, Rgb) {
    let mut sigma = 0.0;
    let mut acc = [0.0; 3];
    let mut hit = false;
    for p in &scene.primitives {
        if p.shape.contains(x) {
            hit = true;
            sigma += p.density;
            for (a, c) in acc.iter_mut().zip(p.color) {
                *a += p.density * c;
            }
        }
    }
    if !hit {
        return (0.0, scene.background);
    }
    if sigma > 0.0 {
        (sigma, acc.map(|v| v / sigma))
    } else {
        // Zero-density primitives: plain average so the color stays defined.
        let mut n = 0.0;
        let mut avg = [0.0; 3];
        for p in scene.primitives.iter().filter(|p| p.shape.contains(x)) {
            n += 1.0;
            for (a, c) in avg.iter_mut().zip(p.color) {
                *a += c;
            }
        }
        (0.0, avg.map(|v| v / n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(c: [f64; 3], r: f64, density: f64, color: Rgb) -> Primitive {
        Primitive { shape: Shape::Sphere { center: c, radius: r }, density, color }
    }

    #[test]
    fn empty_scene_is_background() {
        let s = AnalyticScene::empty([0.2, 0.3, 0.4]);
        assert_eq!(eval_analytic(&s, &Vec3::new(1.0, 2.0, 3.0), &Vec3::z()), (0.0, [0.2, 0.3, 0.4]));
    }

    #[test]
    fn sphere_containment() {
        let s = AnalyticScene::new(vec![sphere([0.0; 3], 1.0, 2.0, [1.0, 0.0, 0.0])], [1.0; 3]).unwrap();
        assert_eq!(eval_analytic(&s, &Vec3::new(0.0, 0.0, 0.5), &Vec3::z()), (2.0, [1.0, 0.0, 0.0]));
    }

    #[test]
    fn overlap_is_density_weighted() {
        let s = AnalyticScene::new(
            vec![sphere([0.0; 3], 1.0, 1.0, [1.0, 0.0, 0.0]), sphere([0.1, 0.0, 0.0], 1.0, 3.0, [0.0, 0.0, 1.0])],
            [1.0; 3],
        )
        .unwrap();
        let (sigma, c) = eval_analytic(&s, &Vec3::zeros(), &Vec3::z());
        assert_eq!(sigma, 4.0);
        assert_eq!(c, [0.25, 0.0, 0.75]);
    }

    #[test]
    fn rejects_bad_primitives() {
        assert!(AnalyticScene::new(vec![sphere([0.0; 3], 1.0, -1.0, [0.0; 3])], [1.0; 3]).is_err());
        assert!(AnalyticScene::new(vec![sphere([0.0; 3], 1.0, 1.0, [1.5, 0.0, 0.0])], [1.0; 3]).is_err());
    }

    #[test]
    fn scene_json_defaults_background() {
        let s: AnalyticScene = serde_json::from_str(
            r#"{"primitives":[{"shape":{"type":"box","min":[0,0,0],"max":[1,1,1]},"density":5,"color":[0,1,0]}]}"#,
        )
        .unwrap();
        assert_eq!(s.background(), [1.0; 3]);
        assert!(serde_json::from_str::<AnalyticScene>(r#"{"primitives":[],"bogus":1}"#).is_err());
    }
}
