//! Single-plane extremal ensembles producing `5g - 5` images of a source at
//! the origin, and the search for the radius of the source disk over which
//! that count persists.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{LensError, Result};
use crate::lens::{LensPlane, MultiplaneLens, PlanePoint, PointMass};
use crate::solver::{find_images, SolveOptions};

/// Parameters of a constructed ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhieConfig {
    pub g: usize,
    /// Radius of the polygon carrying the unit masses.
    pub polygon_radius: f64,
    /// Einstein radius of the central mass; zero for `g = 2, 3`.
    pub central_b: f64,
    /// Angle of polygon vertex 0 from the positive u-axis.
    pub rotation: f64,
}

/// Largest central Einstein radius tried by [`tune_central_mass`].
pub const CENTRAL_B_START: f64 = 0.1;
const MAX_HALVINGS: usize = 40;
const TUNE_MIN_DET: f64 = 1e-6;

/// Polygon radius `(g-2)^(-1/(g-1)) * sqrt((g-2)/(g-1))` for `g >= 4`.
pub fn polygon_radius(g: usize) -> f64 {
    let gf = g as f64;
    (gf - 2.0).powf(-1.0 / (gf - 1.0)) * ((gf - 2.0) / (gf - 1.0)).sqrt()
}

/// The `5g - 5` ensemble for `g` masses with vertex 0 on the positive u-axis.
pub fn rhie_plane(g: usize) -> Result<(LensPlane, RhieConfig)> {
    rhie_plane_rotated(g, 0.0)
}

pub fn rhie_plane_rotated(g: usize, rotation: f64) -> Result<(LensPlane, RhieConfig)> {
    if g < 2 {
        return Err(LensError::invalid(
            "g",
            format!("need at least 2 masses, got {g}"),
        ));
    }
    if g <= 3 {
        return rhie_plane_with_central(g, rotation, 0.0);
    }
    let b = tune_central_mass(g)?;
    rhie_plane_with_central(g, rotation, b)
}

/// Builds the ensemble with an explicit central Einstein radius (ignored for `g <= 3`).
pub fn rhie_plane_with_central(
    g: usize,
    rotation: f64,
    central_b: f64,
) -> Result<(LensPlane, RhieConfig)> {
    if g < 2 {
        return Err(LensError::invalid(
            "g",
            format!("need at least 2 masses, got {g}"),
        ));
    }
    if !rotation.is_finite() {
        return Err(LensError::invalid("rotation", "must be finite"));
    }
    if g <= 3 {
        let masses = (0..g)
            .map(|k| {
                PointMass::new(
                    PlanePoint::polar(1.0, rotation + TAU * k as f64 / g as f64),
                    1.0,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = RhieConfig {
            g,
            polygon_radius: 1.0,
            central_b: 0.0,
            rotation,
        };
        return Ok((LensPlane::new(masses)?, cfg));
    }
    if !(central_b >= 0.0 && central_b.is_finite()) {
        return Err(LensError::invalid(
            "central_b",
            format!("must be >= 0, got {central_b}"),
        ));
    }
    let a = polygon_radius(g);
    let n = g - 1;
    let mut masses = (0..n)
        .map(|k| {
            PointMass::new(
                PlanePoint::polar(a, rotation + TAU * k as f64 / n as f64),
                1.0,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    masses.push(PointMass::new(PlanePoint::ORIGIN, central_b)?);
    let cfg = RhieConfig {
        g,
        polygon_radius: a,
        central_b,
        rotation,
    };
    Ok((LensPlane::new(masses)?, cfg))
}

fn origin_census(plane: &LensPlane, opts: &SolveOptions) -> Result<(usize, f64)> {
    let lens = MultiplaneLens::single(plane.clone(), PlanePoint::ORIGIN)?;
    let set = find_images(&lens, opts)?;
    Ok((set.count(), set.min_abs_det()))
}

/// Largest central Einstein radius on the grid `0.1 * 2^-m` giving exactly
/// `5g - 5` images of a source at the origin (min |det| >= 1e-6), such that
/// the next smaller grid value gives the same count.
pub fn tune_central_mass(g: usize) -> Result<f64> {
    tune_central_mass_with(g, &SolveOptions::default())
}

pub fn tune_central_mass_with(g: usize, opts: &SolveOptions) -> Result<f64> {
    if g < 4 {
        return Err(LensError::invalid(
            "g",
            format!("central mass tuning needs g >= 4, got {g}"),
        ));
    }
    let target = 5 * g - 5;
    let census = |b: f64| -> Result<(usize, f64)> {
        let (plane, _) = rhie_plane_with_central(g, 0.0, b)?;
        origin_census(&plane, opts)
    };
    let mut b = CENTRAL_B_START;
    let mut current = census(b)?;
    for _ in 0..MAX_HALVINGS {
        let smaller = census(0.5 * b)?;
        log::debug!(
            "tune g={g} b={b:e}: {} images, min|det| {:e}",
            current.0,
            current.1
        );
        if current.0 == target && current.1 >= TUNE_MIN_DET && smaller.0 == target {
            return Ok(b);
        }
        b *= 0.5;
        current = smaller;
    }
    Err(LensError::Search(format!(
        "no central mass on the grid 0.1*2^-m (m < {MAX_HALVINGS}) gives a stable {target}-image ensemble for g={g}"
    )))
}

/// Outcome of [`max_source_radius`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceRadius {
    /// Largest radius accepted by the bisection.
    pub delta_hat: f64,
    /// Half of `delta_hat`.
    pub delta_safe: f64,
}

pub const SOURCE_RING_SAMPLES: usize = 64;
const SOURCE_BISECTIONS: usize = 20;
const SOURCE_MIN_DET: f64 = 1e-8;

/// Whether every one of 64 sources on the circle of radius `r` yields
/// `target_count` images with min |det| >= 1e-8.
pub fn ring_keeps_count(
    plane: &LensPlane,
    target_count: usize,
    r: f64,
    opts: &SolveOptions,
) -> Result<bool> {
    let lens = MultiplaneLens::single(plane.clone(), PlanePoint::ORIGIN)?;
    let samples = if r == 0.0 { 1 } else { SOURCE_RING_SAMPLES };
    for k in 0..samples {
        let source = PlanePoint::polar(r, TAU * k as f64 / SOURCE_RING_SAMPLES as f64);
        let set = find_images(&lens.clone().with_source(source)?, opts)?;
        if set.count() != target_count || set.min_abs_det() < SOURCE_MIN_DET {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Radius of a source disk around the origin on which the plane keeps
/// `target_count` nondegenerate images, by bisection on `[0, 1]`.
pub fn max_source_radius(plane: &LensPlane, target_count: usize) -> Result<SourceRadius> {
    max_source_radius_with(plane, target_count, &SolveOptions::coarse())
}

pub fn max_source_radius_with(
    plane: &LensPlane,
    target_count: usize,
    opts: &SolveOptions,
) -> Result<SourceRadius> {
    if !ring_keeps_count(plane, target_count, 0.0, opts)? {
        return Err(LensError::Search(format!(
            "a source at the origin does not give {target_count} nondegenerate images"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..SOURCE_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if ring_keeps_count(plane, target_count, mid, opts)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 {
        return Err(LensError::Search(
            "no positive source radius keeps the image count".into(),
        ));
    }
    Ok(SourceRadius {
        delta_hat: lo,
        delta_safe: 0.5 * lo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_ensembles_on_unit_circle() {
        let (p, cfg) = rhie_plane(2).unwrap();
        assert_eq!(cfg.central_b, 0.0);
        let pos: Vec<_> = p.masses().iter().map(|m| m.position).collect();
        assert!(pos[0].dist(&PlanePoint::new(1.0, 0.0)) < 1e-15);
        assert!(pos[1].dist(&PlanePoint::new(-1.0, 0.0)) < 1e-15);
        assert!(p.masses().iter().all(|m| m.einstein_radius == 1.0));

        let (p, _) = rhie_plane(3).unwrap();
        assert_eq!(p.len(), 3);
        for (k, m) in p.masses().iter().enumerate() {
            let t = TAU * k as f64 / 3.0;
            assert!(m.position.dist(&PlanePoint::new(t.cos(), t.sin())) < 1e-15);
        }
    }

    #[test]
    fn polygon_radius_formula() {
        let expected = 3f64.powf(-0.25) * 0.75f64.sqrt();
        assert!((polygon_radius(5) - expected).abs() < 1e-15);
        assert!((polygon_radius(5) - 0.658037).abs() < 1e-6);
    }

    #[test]
    fn explicit_central_mass_layout() {
        let (p, cfg) = rhie_plane_with_central(5, 0.0, 0.05).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.masses()[4].position, PlanePoint::ORIGIN);
        assert_eq!(p.masses()[4].einstein_radius, 0.05);
        for m in &p.masses()[..4] {
            assert!((m.position.norm() - cfg.polygon_radius).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_small_g() {
        assert!(rhie_plane(1).is_err());
        assert!(tune_central_mass(3).is_err());
    }

    #[test]
    fn rotation_moves_vertex_zero() {
        let (p, _) = rhie_plane_rotated(2, std::f64::consts::FRAC_PI_2).unwrap();
        assert!(p.masses()[0].position.dist(&PlanePoint::new(0.0, 1.0)) < 1e-15);
    }
}
