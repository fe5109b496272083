//! JSON scene files describing a lens, its source and plotting windows.
//!
//! ```json
//! {
//!   "planes": [
//!     { "rhie": 2, "rotation": 1.5707963267948966 },
//!     { "rhie": 2, "scale": 0.1 },
//!     { "masses": [ { "position": [0.0, 0.5], "einstein_radius": 0.2 } ] }
//!   ],
//!   "epsilons": [0.01, 0.0],
//!   "source": [0.0, 0.0],
//!   "solve": { "grid_n": 256 },
//!   "curves": { "grid_n": 512, "window": { "center": [0.0, 0.0], "half_width": 3.0 } }
//! }
//! ```
//!
//! A plane is either a `rhie` ensemble (`g`, optional `rotation`, `scale`,
//! `central_b`) or an explicit `masses` list (optional `rotation`, `scale`).
//! Either kind accepts `beta` (default 1). An empty `epsilons` list means no
//! coupling; otherwise it holds one value per plane after the first.

use std::fmt::Display;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lens::{LensPlane, MultiplaneLens, PlanePoint, PointMass};
use crate::rhie::{rhie_plane_rotated, rhie_plane_with_central};
use crate::solver::{SolveOptions, Window};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scene field `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Display) -> SceneError {
    SceneError::Validation {
        field: field.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassSpec {
    pub position: [f64; 2],
    pub einstein_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhie: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<MassSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub central_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl PlaneSpec {
    pub fn rhie(g: usize) -> Self {
        PlaneSpec {
            rhie: Some(g),
            ..PlaneSpec::default()
        }
    }

    pub fn from_plane(plane: &LensPlane) -> Self {
        PlaneSpec {
            masses: Some(
                plane
                    .masses()
                    .iter()
                    .map(|m| MassSpec {
                        position: m.position.as_array(),
                        einstein_radius: m.einstein_radius,
                    })
                    .collect(),
            ),
            ..PlaneSpec::default()
        }
    }

    fn build(&self, idx: usize) -> Result<LensPlane, SceneError> {
        let field = |name: &str| format!("planes[{idx}].{name}");
        let rotation = self.rotation.unwrap_or(0.0);
        if !rotation.is_finite() {
            return Err(invalid(field("rotation"), "must be finite"));
        }
        let plane = match (&self.rhie, &self.masses) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    format!("planes[{idx}]"),
                    "give either `rhie` or `masses`, not both",
                ))
            }
            (None, None) => {
                return Err(invalid(
                    format!("planes[{idx}]"),
                    "needs `rhie` or `masses`",
                ))
            }
            (Some(g), None) => {
                let built = match self.central_b {
                    Some(b) => rhie_plane_with_central(*g, rotation, b),
                    None => rhie_plane_rotated(*g, rotation),
                };
                built.map_err(|e| invalid(field("rhie"), e))?.0
            }
            (None, Some(masses)) => {
                if self.central_b.is_some() {
                    return Err(invalid(field("central_b"), "only applies to `rhie` planes"));
                }
                let ms = masses
                    .iter()
                    .enumerate()
                    .map(|(k, m)| {
                        let p = PlanePoint::try_new(m.position[0], m.position[1]).map_err(|e| {
                            invalid(format!("planes[{idx}].masses[{k}].position"), e)
                        })?;
                        PointMass::new(p.rotated(rotation), m.einstein_radius).map_err(|e| {
                            invalid(format!("planes[{idx}].masses[{k}].einstein_radius"), e)
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                LensPlane::new(ms).map_err(|e| invalid(field("masses"), e))?
            }
        };
        match self.scale {
            Some(s) => plane.scaled(s).map_err(|e| invalid(field("scale"), e)),
            None => Ok(plane),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(default)]
    pub center: [f64; 2],
    pub half_width: f64,
}

impl WindowSpec {
    pub fn to_window(self, field: &str) -> Result<Window, SceneError> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(invalid(format!("{field}.half_width"), "must be positive"));
        }
        let center = PlanePoint::try_new(self.center[0], self.center[1])
            .map_err(|e| invalid(format!("{field}.center"), e))?;
        Ok(Window {
            center,
            half_width: self.half_width,
        })
    }
}

impl From<Window> for WindowSpec {
    fn from(w: Window) -> Self {
        WindowSpec {
            center: w.center.as_array(),
            half_width: w.half_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    /// Plane-1 window for critical curves and images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowSpec>,
    /// Source-plane window for caustics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_window: Option<WindowSpec>,
}

/// Default lattice size for critical curves.
pub const DEFAULT_CURVE_GRID: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub planes: Vec<PlaneSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub source: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curves: Option<CurveSpec>,
}

impl Scene {
    pub fn new(planes: Vec<PlaneSpec>) -> Self {
        Scene {
            note: None,
            planes,
            epsilons: Vec::new(),
            source: [0.0, 0.0],
            solve: None,
            curves: None,
        }
    }

    /// Expands the description into a lens, enforcing all lens invariants.
    pub fn lens(&self) -> Result<MultiplaneLens, SceneError> {
        if self.planes.is_empty() {
            return Err(invalid("planes", "at least one plane is required"));
        }
        let planes = self
            .planes
            .iter()
            .enumerate()
            .map(|(i, p)| p.build(i))
            .collect::<Result<Vec<_>, _>>()?;
        let source = PlanePoint::try_new(self.source[0], self.source[1])
            .map_err(|e| invalid("source", e))?;
        let mut lens = MultiplaneLens::new(planes, source).map_err(|e| invalid("planes", e))?;
        if self.planes.iter().any(|p| p.beta.is_some()) {
            let betas = self.planes.iter().map(|p| p.beta.unwrap_or(1.0)).collect();
            lens = lens
                .with_betas(betas)
                .map_err(|e| invalid("planes[].beta", e))?;
        }
        if !self.epsilons.is_empty() {
            let k = self.planes.len();
            if self.epsilons.len() != k - 1 {
                return Err(invalid(
                    "epsilons",
                    format!(
                        "expected {} values (one per plane after the first), got {}",
                        k - 1,
                        self.epsilons.len()
                    ),
                ));
            }
            lens = lens
                .with_epsilons(self.epsilons.clone())
                .map_err(|e| invalid("epsilons", e))?;
        }
        Ok(lens)
    }

    pub fn solve_options(&self) -> Result<SolveOptions, SceneError> {
        let mut opts = SolveOptions::default();
        if let Some(s) = &self.solve {
            if let Some(n) = s.grid_n {
                opts.grid_n = n;
            }
            if let Some(t) = s.newton_tol {
                opts.newton_tol = t;
            }
            if let Some(w) = s.window {
                opts.window = Some(w.to_window("solve.window")?);
            }
        }
        opts.validate().map_err(|e| invalid("solve", e))?;
        Ok(opts)
    }

    pub fn curve_grid(&self) -> usize {
        self.curves
            .as_ref()
            .and_then(|c| c.grid_n)
            .unwrap_or(DEFAULT_CURVE_GRID)
    }

    /// Plane-1 window for curves, falling back to the solver window.
    pub fn curve_window(&self, lens: &MultiplaneLens) -> Result<Window, SceneError> {
        match self.curves.as_ref().and_then(|c| c.window) {
            Some(w) => w.to_window("curves.window"),
            None => Ok(self
                .solve_options()?
                .window
                .unwrap_or_else(|| Window::default_for(lens))),
        }
    }

    pub fn source_window(&self) -> Result<Option<Window>, SceneError> {
        self.curves
            .as_ref()
            .and_then(|c| c.source_window)
            .map(|w| w.to_window("curves.source_window"))
            .transpose()
    }

    /// Canonical formatting: pretty JSON with a trailing newline.
    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serializes");
        s.push('\n');
        s
    }
}

/// Parses and validates scene text, returning the scene with its lens.
pub fn parse_scene(text: &str) -> Result<(Scene, MultiplaneLens), SceneError> {
    let scene: Scene = serde_json::from_str(text).map_err(|e| SceneError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    scene.solve_options()?;
    scene.source_window()?;
    if let Some(n) = scene.curves.as_ref().and_then(|c| c.grid_n) {
        if n < crate::caustics::MIN_GRID {
            return Err(invalid(
                "curves.grid_n",
                format!("must be at least {}", crate::caustics::MIN_GRID),
            ));
        }
    }
    let lens = scene.lens()?;
    scene.curve_window(&lens)?;
    Ok((scene, lens))
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<(Scene, MultiplaneLens), SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scene(&text)
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    std::fs::write(path, scene.to_canonical_string()).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rhie::rhie_plane;

    #[test]
    fn rhie_shorthand_expands() {
        let (_, lens) = parse_scene(r#"{"planes": [{"rhie": 2}], "source": [0.0, 0.0]}"#).unwrap();
        let expected =
            MultiplaneLens::single(rhie_plane(2).unwrap().0, PlanePoint::ORIGIN).unwrap();
        assert_eq!(lens, expected);
    }

    #[test]
    fn wrong_epsilon_length_names_field() {
        let err = parse_scene(
            r#"{"planes": [{"rhie": 2}, {"rhie": 2, "scale": 0.1}], "epsilons": [0.1, 0.2]}"#,
        )
        .unwrap_err();
        match err {
            SceneError::Validation { field, .. } => assert_eq!(field, "epsilons"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parse_error_has_line() {
        let err = parse_scene("{\n  \"planes\": [\n    {\"rhie\": }\n  ]\n}").unwrap_err();
        match err {
            SceneError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(matches!(
            parse_scene(r#"{"planes": [{"rhie": 2, "lambda": 1}]}"#),
            Err(SceneError::Parse { .. })
        ));
    }

    #[test]
    fn plane_needs_one_kind() {
        let err = parse_scene(r#"{"planes": [{"scale": 0.5}]}"#).unwrap_err();
        assert!(matches!(err, SceneError::Validation { ref field, .. } if field == "planes[0]"));
        let err = parse_scene(r#"{"planes": [{"rhie": 2, "scale": -1.0}]}"#).unwrap_err();
        assert!(
            matches!(err, SceneError::Validation { ref field, .. } if field == "planes[0].scale")
        );
    }

    #[test]
    fn canonical_round_trip() {
        let mut scene = Scene::new(vec![
            PlaneSpec {
                rotation: Some(std::f64::consts::FRAC_PI_2),
                ..PlaneSpec::rhie(2)
            },
            PlaneSpec {
                scale: Some(0.1),
                ..PlaneSpec::rhie(2)
            },
        ]);
        scene.epsilons = vec![0.01];
        scene.note = Some("two planes".into());
        let text = scene.to_canonical_string();
        let (back, _) = parse_scene(&text).unwrap();
        assert_eq!(back, scene);
        assert_eq!(back.to_canonical_string(), text);
    }
}
