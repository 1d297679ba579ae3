//! JSON descriptions of scenes and symbols.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Obstacle, Scene, SceneParams, Tolerances, Vec3};
use crate::parametrix::SymbolSurrogate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObstacleConfig {
    Sphere { center: [f64; 3], radius: f64 },
    Ellipsoid { center: [f64; 3], radii: [f64; 3] },
    Implicit { center: [f64; 3], quadratic: [f64; 3], quartic: [f64; 3] },
}

impl ObstacleConfig {
    pub fn build(&self, id: u8) -> Obstacle {
        let v = |a: &[f64; 3]| Vec3::new(a[0], a[1], a[2]);
        match self {
            Self::Sphere { center, radius } => Obstacle::sphere(id, v(center), *radius),
            Self::Ellipsoid { center, radii } => Obstacle::ellipsoid(id, v(center), v(radii)),
            Self::Implicit { center, quadratic, quartic } => {
                Obstacle::implicit(id, v(center), v(quadratic), v(quartic))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "default_tol")]
    pub tangency: f64,
    #[serde(default = "default_tol")]
    pub intersection: f64,
}

fn default_tol() -> f64 {
    1e-9
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { tangency: 1e-9, intersection: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub obstacles: [ObstacleConfig; 2],
    #[serde(default = "defaults::alpha0")]
    pub alpha0: f64,
    #[serde(default = "defaults::beta0")]
    pub beta0: f64,
    #[serde(default = "defaults::delta0")]
    pub delta0: f64,
    #[serde(default)]
    pub delta1: Option<f64>,
    #[serde(default = "defaults::eta")]
    pub eta: f64,
    #[serde(default)]
    pub u_radius: Option<f64>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

mod defaults {
    use crate::geometry::SceneParams;

    pub fn alpha0() -> f64 {
        SceneParams::default().alpha0
    }
    pub fn beta0() -> f64 {
        SceneParams::default().beta0
    }
    pub fn delta0() -> f64 {
        SceneParams::default().delta0
    }
    pub fn eta() -> f64 {
        SceneParams::default().eta
    }
}

impl SceneConfig {
    /// The symmetric reference scene: unit spheres at the origin and `(0, 0, 4)`.
    pub fn symmetric_two_spheres() -> Self {
        let p = SceneParams::default();
        Self {
            obstacles: [
                ObstacleConfig::Sphere { center: [0.0, 0.0, 0.0], radius: 1.0 },
                ObstacleConfig::Sphere { center: [0.0, 0.0, 4.0], radius: 1.0 },
            ],
            alpha0: p.alpha0,
            beta0: p.beta0,
            delta0: p.delta0,
            delta1: None,
            eta: p.eta,
            u_radius: None,
            tolerances: ToleranceConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene config serialises")
    }

    pub fn params(&self) -> SceneParams {
        SceneParams {
            alpha0: self.alpha0,
            beta0: self.beta0,
            delta0: self.delta0,
            delta1: self.delta1,
            eta: self.eta,
            u_radius: self.u_radius,
            tolerances: Tolerances {
                tangency: self.tolerances.tangency,
                intersection: self.tolerances.intersection,
            },
        }
    }

    pub fn build(&self) -> Result<Scene> {
        Scene::new(self.obstacles[0].build(1), self.obstacles[1].build(2), self.params())
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Overrides for [`SymbolSurrogate::for_scene`]; absent fields keep the defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolConfig {
    pub center: Option<[f64; 3]>,
    pub transverse_radius: Option<f64>,
    pub axial_radius: Option<f64>,
    /// `+1` for a cone around `e`, `−1` for a cone around `−e`.
    pub orientation: Option<f64>,
    pub cone_half_angle: Option<f64>,
    pub speed_center: Option<f64>,
    pub speed_half_width: Option<f64>,
    pub order: Option<u32>,
}

impl SymbolConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn build(&self, scene: &Scene) -> Result<SymbolSurrogate> {
        let mut s = SymbolSurrogate::for_scene(scene);
        if let Some(c) = self.center {
            s.center = Vec3::new(c[0], c[1], c[2]);
        }
        if let Some(v) = self.transverse_radius {
            s.transverse_radius = v;
        }
        if let Some(v) = self.axial_radius {
            s.axial_radius = v;
        }
        if let Some(v) = self.orientation {
            s.cone_axis = scene.axis_dir() * v.signum();
        }
        if let Some(v) = self.cone_half_angle {
            s.cone_half_angle = v;
        }
        if let Some(v) = self.speed_center {
            s.speed_center = v;
        }
        if let Some(v) = self.speed_half_width {
            s.speed_half_width = v;
        }
        if let Some(v) = self.order {
            s.order = v;
        }
        s.validate(scene).map_err(|e| Error::Config(e.to_string()))?;
        Ok(s)
    }
}
