//! Cosmological distances in Hubble units and the plane parameters derived
//! from them.

use serde::Serialize;

use crate::error::{LensError, Result};

/// Absolute tolerance of [`comoving_distance`].
pub const QUADRATURE_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 48;
/// Curvature magnitudes below this are treated as flat.
pub const FLAT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cosmology {
    pub omega_m: f64,
    pub omega_lambda: f64,
    pub omega_k: f64,
}

impl Cosmology {
    pub fn new(omega_m: f64, omega_lambda: f64) -> Result<Self> {
        if !(omega_m >= 0.0 && omega_m.is_finite()) {
            return Err(LensError::invalid(
                "omega_m",
                format!("must be finite and >= 0, got {omega_m}"),
            ));
        }
        if !omega_lambda.is_finite() {
            return Err(LensError::invalid("omega_lambda", "must be finite"));
        }
        Ok(Cosmology {
            omega_m,
            omega_lambda,
            omega_k: 1.0 - omega_m - omega_lambda,
        })
    }

    /// Matter only, flat.
    pub fn einstein_de_sitter() -> Self {
        Cosmology {
            omega_m: 1.0,
            omega_lambda: 0.0,
            omega_k: 0.0,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.omega_k.abs() < FLAT_TOL
    }

    fn hubble_sq(&self, z: f64) -> f64 {
        let a = 1.0 + z;
        self.omega_m * a * a * a + self.omega_k * a * a + self.omega_lambda
    }
}

/// Redshifts of the lens planes followed by the source redshift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneRedshifts {
    zs: Vec<f64>,
}

impl PlaneRedshifts {
    pub fn new(zs: Vec<f64>) -> Result<Self> {
        if zs.len() < 2 {
            return Err(LensError::invalid(
                "redshifts",
                "need at least one plane and a source",
            ));
        }
        if let Some(z) = zs.iter().find(|z| !(**z > 0.0 && z.is_finite())) {
            return Err(LensError::invalid(
                "redshifts",
                format!("must be positive and finite, got {z}"),
            ));
        }
        if zs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LensError::invalid(
                "redshifts",
                "must be strictly increasing",
            ));
        }
        Ok(PlaneRedshifts { zs })
    }

    pub fn all(&self) -> &[f64] {
        &self.zs
    }

    pub fn planes(&self) -> &[f64] {
        &self.zs[..self.zs.len() - 1]
    }

    pub fn source(&self) -> f64 {
        self.zs[self.zs.len() - 1]
    }

    pub fn plane_count(&self) -> usize {
        self.zs.len() - 1
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

struct Integrand<'a> {
    c: &'a Cosmology,
}

impl Integrand<'_> {
    fn eval(&self, z: f64) -> Result<f64> {
        let e2 = self.c.hubble_sq(z);
        if e2.is_nan() || e2 <= 0.0 {
            return Err(LensError::Quadrature(format!(
                "expansion rate squared is {e2:e} at z = {z}; no real distance"
            )));
        }
        Ok(1.0 / e2.sqrt())
    }

    #[allow(clippy::too_many_arguments)]
    fn adapt(
        &self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (self.eval(lm)?, self.eval(rm)?);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(LensError::Quadrature(format!(
                "no convergence on [{a}, {b}]"
            )));
        }
        Ok(self.adapt(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + self.adapt(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
}

/// Line-of-sight comoving distance by adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn comoving_distance_tol(c: &Cosmology, z1: f64, z2: f64, tol: f64) -> Result<f64> {
    if !(z1 >= 0.0 && z2 >= z1 && z2.is_finite()) {
        return Err(LensError::invalid(
            "redshifts",
            format!("need 0 <= z1 <= z2, got {z1}, {z2}"),
        ));
    }
    let f = Integrand { c };
    let (fa, fb) = (f.eval(z1)?, f.eval(z2)?);
    if z1 == z2 {
        return Ok(0.0);
    }
    // start from a few panels so narrow features are not missed
    const PANELS: usize = 8;
    let h = (z2 - z1) / PANELS as f64;
    let mut total = 0.0;
    let mut left_val = fa;
    for k in 0..PANELS {
        let a = z1 + k as f64 * h;
        let b = if k + 1 == PANELS { z2 } else { a + h };
        let fr = if k + 1 == PANELS { fb } else { f.eval(b)? };
        let fm = f.eval(0.5 * (a + b))?;
        let whole = simpson(left_val, fm, fr, b - a);
        total += f.adapt(
            a,
            b,
            left_val,
            fm,
            fr,
            whole,
            tol / PANELS as f64,
            MAX_DEPTH,
        )?;
        left_val = fr;
    }
    Ok(total)
}

pub fn comoving_distance(c: &Cosmology, z1: f64, z2: f64) -> Result<f64> {
    comoving_distance_tol(c, z1, z2, QUADRATURE_TOL)
}

pub fn transverse_comoving(c: &Cosmology, dc: f64) -> f64 {
    if c.is_flat() {
        dc
    } else if c.omega_k > 0.0 {
        let s = c.omega_k.sqrt();
        (s * dc).sinh() / s
    } else {
        let s = (-c.omega_k).sqrt();
        (s * dc).sin() / s
    }
}

pub fn transverse_distance(c: &Cosmology, z1: f64, z2: f64) -> Result<f64> {
    Ok(transverse_comoving(c, comoving_distance(c, z1, z2)?))
}

pub fn angular_diameter(c: &Cosmology, z1: f64, z2: f64) -> Result<f64> {
    Ok(transverse_distance(c, z1, z2)? / (1.0 + z2))
}

/// Per-plane scale and coupling parameters; `epsilons[0]` is always zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneParameters {
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl PlaneParameters {
    /// Couplings of planes `2..K`, the form taken by the lens model.
    pub fn couplings(&self) -> &[f64] {
        &self.epsilons[1..]
    }
}

/// Observer distances `d^M_i` and consecutive distances `d^M_{i,i+1}` over
/// all redshifts including the source.
struct Distances {
    from_observer: Vec<f64>,
    consecutive: Vec<f64>,
}

fn distances(c: &Cosmology, zs: &[f64]) -> Result<Distances> {
    let from_observer = zs
        .iter()
        .map(|&z| transverse_distance(c, 0.0, z))
        .collect::<Result<Vec<_>>>()?;
    let consecutive = zs
        .windows(2)
        .map(|w| transverse_distance(c, w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Distances {
        from_observer,
        consecutive,
    })
}

pub fn plane_parameters(c: &Cosmology, zr: &PlaneRedshifts) -> Result<PlaneParameters> {
    let zs = zr.all();
    let k = zr.plane_count();
    let d = distances(c, zs)?;
    let betas = (0..k)
        .map(|i| d.consecutive[i] / d.from_observer[i + 1])
        .collect();
    let mut epsilons = vec![0.0; k];
    for j in 1..k {
        epsilons[j] = if c.is_flat() {
            d.from_observer[j - 1] * d.consecutive[j]
                / (d.consecutive[j - 1] * d.from_observer[j + 1])
        } else {
            let skip = transverse_distance(c, zs[j - 1], zs[j + 1])?;
            d.from_observer[j] * skip / (d.consecutive[j - 1] * d.from_observer[j + 1]) - 1.0
        };
    }
    Ok(PlaneParameters { betas, epsilons })
}

/// The mass-independent part of each plane's bending term,
/// `d^M_{i,i+1} / (d^A_i d^M_{i+1})`.
pub fn bending_scales(c: &Cosmology, zr: &PlaneRedshifts) -> Result<Vec<f64>> {
    let zs = zr.all();
    let d = distances(c, zs)?;
    Ok((0..zr.plane_count())
        .map(|i| {
            let da = d.from_observer[i] / (1.0 + zs[i]);
            d.consecutive[i] / (da * d.from_observer[i + 1])
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RealizationMode {
    /// Move the first plane toward the observer.
    Foreground,
    /// Move the source toward the second plane.
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Realization {
    pub redshifts: PlaneRedshifts,
    /// Factor applied to every mass of each plane.
    pub mass_factors: Vec<f64>,
    pub epsilon: f64,
}

const ENDPOINT_OFFSET: f64 = 1e-6;
const REALIZE_TOL: f64 = 1e-8;
const REALIZE_ITERS: usize = 200;

/// Moves one redshift of a flat two-plane configuration until the coupling
/// reaches `target_eps`, and returns mass factors that keep every plane's
/// bending term unchanged.
pub fn realize_small_epsilon(
    c: &Cosmology,
    zr: &PlaneRedshifts,
    target_eps: f64,
    mode: RealizationMode,
) -> Result<Realization> {
    if !c.is_flat() {
        return Err(LensError::invalid(
            "cosmology",
            "small-coupling realization needs a flat cosmology",
        ));
    }
    if zr.plane_count() != 2 {
        return Err(LensError::invalid(
            "redshifts",
            "small-coupling realization needs exactly two planes",
        ));
    }
    let eps_of = |zs: &[f64]| -> Result<f64> {
        Ok(plane_parameters(c, &PlaneRedshifts::new(zs.to_vec())?)?.epsilons[1])
    };
    let zs = zr.all().to_vec();
    let current = eps_of(&zs)?;
    if target_eps == current {
        return Ok(Realization {
            redshifts: zr.clone(),
            mass_factors: vec![1.0, 1.0],
            epsilon: current,
        });
    }
    if !(target_eps > 0.0 && target_eps < current) {
        return Err(LensError::invalid(
            "target_eps",
            format!("must lie in (0, {current}), got {target_eps}"),
        ));
    }
    let (slot, mut lo, mut hi) = match mode {
        RealizationMode::Foreground => (0, ENDPOINT_OFFSET, zs[0]),
        RealizationMode::Background => (2, zs[1] + ENDPOINT_OFFSET, zs[2]),
    };
    let at = |z: f64| -> Result<(Vec<f64>, f64)> {
        let mut moved = zs.clone();
        moved[slot] = z;
        let e = eps_of(&moved)?;
        Ok((moved, e))
    };
    if at(lo)?.1 > target_eps {
        return Err(LensError::Search(format!(
            "coupling at the end of the bracket exceeds the target {target_eps}"
        )));
    }
    let mut best = at(hi)?;
    for _ in 0..REALIZE_ITERS {
        let mid = 0.5 * (lo + hi);
        let (moved, e) = at(mid)?;
        if e > target_eps {
            hi = mid;
        } else {
            lo = mid;
        }
        if (e - target_eps).abs() < (best.1 - target_eps).abs() {
            best = (moved, e);
        }
        if (e - target_eps).abs() <= 1e-3 * REALIZE_TOL || hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    if (best.1 - target_eps).abs() > REALIZE_TOL {
        return Err(LensError::Search(format!(
            "bisection stalled at coupling {} for target {target_eps}",
            best.1
        )));
    }
    let redshifts = PlaneRedshifts::new(best.0)?;
    let before = bending_scales(c, zr)?;
    let after = bending_scales(c, &redshifts)?;
    let mass_factors = before.iter().zip(&after).map(|(b, a)| b / a).collect();
    Ok(Realization {
        redshifts,
        mass_factors,
        epsilon: best.1,
    })
}
