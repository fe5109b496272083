//! Finding every lensed image of a source: multi-start damped Newton on the
//! lensing map, with seeds pulled back from downstream planes, followed by
//! deduplication and classification. Also the image-count bounds.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LensError, Result};
use crate::lens::{
    lens_map_with_jacobian, trace, LensPlane, LensedImage, MorseType, MultiplaneLens, Parity,
    PlanePoint,
};
use crate::linalg::Mat2;

/// Axis-aligned square in plane 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Window {
    pub center: PlanePoint,
    pub half_width: f64,
}

impl Window {
    pub fn centered(half_width: f64) -> Self {
        Window {
            center: PlanePoint::ORIGIN,
            half_width,
        }
    }

    pub fn contains(&self, p: PlanePoint) -> bool {
        (p.u - self.center.u).abs() <= self.half_width
            && (p.v - self.center.v).abs() <= self.half_width
    }

    /// Default search window: twice the outermost mass radius plus two, widened
    /// to reach sources far from the deflectors.
    pub fn default_for(lens: &MultiplaneLens) -> Self {
        let r = lens.outer_radius();
        Window::centered(2.0 * r + 2.0 + 1.5 * lens.source().norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SolveOptions {
    /// Search window; `None` selects [`Window::default_for`].
    pub window: Option<Window>,
    pub grid_n: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub dedup_radius: f64,
    pub nondegeneracy_margin: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            window: None,
            grid_n: 256,
            newton_tol: 1e-12,
            newton_max_iter: 60,
            dedup_radius: 1e-8,
            nondegeneracy_margin: 1e-10,
        }
    }
}

impl SolveOptions {
    /// Lighter seeding used inside parameter searches that solve many
    /// single-plane problems.
    pub fn coarse() -> Self {
        SolveOptions {
            grid_n: 64,
            ..SolveOptions::default()
        }
    }

    pub fn with_grid(mut self, grid_n: usize) -> Self {
        self.grid_n = grid_n;
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.nondegeneracy_margin = margin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n == 0 || self.newton_max_iter == 0 {
            return Err(LensError::invalid(
                "solve options",
                "grid_n and newton_max_iter must be positive",
            ));
        }
        let positive = [
            self.newton_tol,
            self.dedup_radius,
            self.nondegeneracy_margin,
        ];
        if positive.iter().any(|x| x.is_nan() || *x <= 0.0) {
            return Err(LensError::invalid(
                "solve options",
                "tolerances must be positive",
            ));
        }
        if let Some(w) = self.window {
            if w.half_width.is_nan() || w.half_width <= 0.0 || !w.center.is_finite() {
                return Err(LensError::invalid("window", "half width must be positive"));
            }
        }
        Ok(())
    }
}

/// Result of an image search. Degenerate roots (|det| below the margin) are
/// kept apart in `suspects`: they signal a source on or near a caustic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageSet {
    pub images: Vec<LensedImage>,
    pub suspects: Vec<LensedImage>,
}

impl ImageSet {
    pub fn count(&self) -> usize {
        self.images.len()
    }

    pub fn positions(&self) -> Vec<PlanePoint> {
        self.images.iter().map(LensedImage::position).collect()
    }

    pub fn min_abs_det(&self) -> f64 {
        self.images
            .iter()
            .map(|i| i.lens_map_jacobian_det.abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Sum of parities over the nondegenerate images.
    pub fn signed_count(&self) -> i32 {
        self.images.iter().map(|i| i.parity.sign()).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Root {
    pub x: PlanePoint,
    pub residual: f64,
    pub jacobian: Mat2,
}

const RING_SEEDS: usize = 64;
const RING_RADII: [f64; 3] = [0.5, 1.0, 1.5];
const MAX_HALVINGS: usize = 20;
const SUB_GRID: usize = 96;
const LOCAL_GRID: usize = 16;
const LOCAL_RING_SEEDS: usize = 32;

/// Finds all images of `lens.source()` in the search window.
pub fn find_images(lens: &MultiplaneLens, opts: &SolveOptions) -> Result<ImageSet> {
    opts.validate()?;
    let roots = find_roots(lens, opts);
    let mut images = Vec::new();
    let mut suspects = Vec::new();
    for root in roots {
        let img = image_from_root(lens, &root)?;
        if img.lens_map_jacobian_det.abs() >= opts.nondegeneracy_margin {
            images.push(img);
        } else {
            suspects.push(img);
        }
    }
    if !suspects.is_empty() {
        log::warn!(
            "{} degenerate root(s) with |det| < {}: source is on or near a caustic",
            suspects.len(),
            opts.nondegeneracy_margin
        );
    }
    Ok(ImageSet { images, suspects })
}

/// Number of nondegenerate images together with their smallest |det|.
pub fn image_count(lens: &MultiplaneLens, opts: &SolveOptions) -> Result<(usize, f64)> {
    let set = find_images(lens, opts)?;
    Ok((set.count(), set.min_abs_det()))
}

fn image_from_root(lens: &MultiplaneLens, root: &Root) -> Result<LensedImage> {
    let path = trace(lens, root.x)?;
    let det = root.jacobian.det();
    let img = LensedImage {
        path,
        lens_map_jacobian_det: det,
        parity: Parity::from_det(det),
        morse_type: MorseType::Unavailable,
    };
    classify_image(lens, img)
}

/// Sets parity from the lens-map Jacobian and, for a single plane, the Morse
/// type from the Hessian of the time delay (which equals that Jacobian).
pub fn classify_image(lens: &MultiplaneLens, mut img: LensedImage) -> Result<LensedImage> {
    let jac = crate::lens::lens_map_jacobian(lens, img.position())?;
    let det = jac.det();
    img.lens_map_jacobian_det = det;
    img.parity = Parity::from_det(det);
    img.morse_type = if lens.plane_count() == 1 {
        let [lo, hi] = jac.symmetric_eigenvalues();
        if lo > 0.0 {
            MorseType::Minimum
        } else if hi < 0.0 {
            MorseType::Maximum
        } else {
            MorseType::Saddle
        }
    } else {
        MorseType::Unavailable
    };
    Ok(img)
}

/// Single-plane time delay `|x - y|^2 / 2 - sum b^2 log|x - xi|`.
pub fn time_delay(plane: &LensPlane, source: PlanePoint, x: PlanePoint) -> Result<f64> {
    // evaluating the deflection performs the obstruction check
    crate::lens::deflection(plane, x)?;
    let potential: f64 = plane
        .masses()
        .iter()
        .filter(|m| m.einstein_radius > 0.0)
        .map(|m| m.mass() * (x - m.position).norm().ln())
        .sum();
    Ok(0.5 * (x - source).norm_sq() - potential)
}

pub(crate) fn find_roots(lens: &MultiplaneLens, opts: &SolveOptions) -> Vec<Root> {
    let window = opts.window.unwrap_or_else(|| Window::default_for(lens));
    let mut seeds = grid_seeds(&window, opts.grid_n);
    seeds.extend(ring_seeds(&lens.planes()[0], lens.betas()[0], RING_SEEDS));
    seeds.push(lens.source());
    if lens.plane_count() > 1 {
        seeds.extend(pullback_seeds(lens, opts));
    }
    let escape = 10.0 * window.half_width + window.center.norm();
    let target = lens.source();
    let converged: Vec<Root> = seeds
        .par_iter()
        .filter_map(|&s| newton(lens, s, target, opts, escape))
        .collect();
    dedup(converged, opts.dedup_radius)
}

fn grid_seeds(w: &Window, n: usize) -> Vec<PlanePoint> {
    let h = 2.0 * w.half_width / n as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(PlanePoint::new(
                w.center.u - w.half_width + (j as f64 + 0.5) * h,
                w.center.v - w.half_width + (i as f64 + 0.5) * h,
            ));
        }
    }
    out
}

fn ring_seeds(plane: &LensPlane, beta: f64, per_ring: usize) -> Vec<PlanePoint> {
    let mut out = Vec::new();
    for m in plane.masses().iter().filter(|m| m.einstein_radius > 0.0) {
        let b = m.einstein_radius * beta.sqrt();
        for &f in &RING_RADII {
            for k in 0..per_ring {
                let t = (k as f64 + 0.25) * std::f64::consts::TAU / per_ring as f64;
                out.push(m.position + PlanePoint::polar(f * b, t));
            }
        }
    }
    out
}

/// Seeds near plane-1 preimages of downstream structure. For every plane
/// `j >= 2`, each mass and the mass centroid are pulled back through the
/// uncoupled chain of planes `1..j-1`; around each preimage a local lattice
/// and mass rings in plane `j` are mapped back with the inverse chain Jacobian.
fn pullback_seeds(lens: &MultiplaneLens, opts: &SolveOptions) -> Vec<PlanePoint> {
    let sub_opts = SolveOptions {
        window: None,
        grid_n: opts.grid_n.min(SUB_GRID),
        ..opts.clone()
    };
    let mut out = Vec::new();
    for j in 1..lens.plane_count() {
        let plane = &lens.planes()[j];
        let beta = lens.betas()[j];
        let centroid = plane.centroid();
        let spread = plane
            .masses()
            .iter()
            .map(|m| m.position.dist(&centroid))
            .fold(0.0, f64::max);
        let theta = (beta * plane.total_mass()).sqrt();
        let eps = lens.epsilon(j);

        let mut anchors: Vec<(PlanePoint, f64, bool)> =
            vec![(centroid, 1.5 * (spread + 2.0 * theta), true)];
        for m in plane.masses().iter().filter(|m| m.einstein_radius > 0.0) {
            anchors.push((m.position, 2.0 * m.einstein_radius * beta.sqrt(), false));
        }
        let local_rings = ring_seeds(plane, beta, LOCAL_RING_SEEDS);

        for (anchor, radius, with_rings) in anchors {
            let chain = match lens.prefix(j, anchor) {
                Ok(c) => c,
                Err(_) => continue,
            };
            for root in find_roots(&chain, &sub_opts) {
                let Some(inv) = root.jacobian.inverse() else {
                    continue;
                };
                let r = radius + eps * (root.x.norm() + 1.0);
                let local = Window {
                    center: anchor,
                    half_width: r,
                };
                let mut local_seeds = grid_seeds(&local, LOCAL_GRID);
                if with_rings {
                    local_seeds.extend(local_rings.iter().copied());
                }
                out.extend(
                    local_seeds
                        .into_iter()
                        .map(|s| root.x + (s - anchor).transform(&inv))
                        .filter(PlanePoint::is_finite),
                );
                out.push(root.x);
            }
        }
    }
    out
}

/// Damped Newton on `x -> eta(x) - target`. Steps that increase the residual
/// or hit an exclusion zone are halved, at most [`MAX_HALVINGS`] times.
fn newton(
    lens: &MultiplaneLens,
    seed: PlanePoint,
    target: PlanePoint,
    opts: &SolveOptions,
    escape: f64,
) -> Option<Root> {
    let (mut f, mut jac) = lens_map_with_jacobian(lens, seed).ok()?;
    let mut x = seed;
    let mut r = (f - target).norm();
    let mut polish = 0;
    for _ in 0..opts.newton_max_iter {
        if r <= opts.newton_tol {
            polish += 1;
            if polish > 2 || r == 0.0 {
                break;
            }
        }
        let inv = jac.inverse()?;
        let step = (target - f).transform(&inv);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let xn = x + step * t;
            if let Ok((fn_, jn)) = lens_map_with_jacobian(lens, xn) {
                let rn = (fn_ - target).norm();
                if rn < r {
                    x = xn;
                    f = fn_;
                    jac = jn;
                    r = rn;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted || x.norm() > escape {
            break;
        }
    }
    if r <= opts.newton_tol {
        Some(Root {
            x,
            residual: r,
            jacobian: jac,
        })
    } else {
        None
    }
}

fn dedup(roots: Vec<Root>, radius: f64) -> Vec<Root> {
    let mut unique: Vec<Root> = Vec::new();
    for root in roots {
        match unique.iter_mut().find(|u| u.x.dist(&root.x) <= radius) {
            Some(u) => {
                if root.residual < u.residual {
                    *u = root;
                }
            }
            None => unique.push(root),
        }
    }
    unique.sort_by(|a, b| a.x.u.total_cmp(&b.x.u).then(a.x.v.total_cmp(&b.x.v)));
    unique
}

/// Image-count bounds for a lens with `g_i` masses in plane `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundsReport {
    /// `prod (g_i + 1)`
    pub lower: u64,
    /// `E^2 + O^2` from the even/odd coefficient sums of `prod (1 + g_i Z)`.
    pub upper_eq1: u64,
    pub even_sum: u64,
    pub odd_sum: u64,
    /// `prod (5 g_i - 5)` when every `g_i >= 2`.
    pub conjectured_max: Option<u64>,
    /// `2 (2^(2(K-1)) - 1)` when every plane holds a single mass.
    pub single_mass_max: Option<u64>,
}

impl BoundsReport {
    pub fn admits(&self, count: u64) -> bool {
        self.lower <= count && count <= self.upper_eq1
    }
}

pub fn image_count_bounds(g_list: &[u64]) -> Result<BoundsReport> {
    const WHAT: &str = "image count bounds";
    if g_list.is_empty() {
        return Err(LensError::invalid(
            "g_list",
            "at least one plane is required",
        ));
    }
    if g_list.contains(&0) {
        return Err(LensError::invalid(
            "g_list",
            "every plane needs at least one mass",
        ));
    }
    let overflow = || LensError::Overflow(WHAT);

    // coefficients of prod (1 + g_i Z)
    let mut coeffs: Vec<u64> = vec![1];
    for &g in g_list {
        let mut next = vec![0u64; coeffs.len() + 1];
        for (d, &c) in coeffs.iter().enumerate() {
            next[d] = next[d].checked_add(c).ok_or_else(overflow)?;
            let t = c.checked_mul(g).ok_or_else(overflow)?;
            next[d + 1] = next[d + 1].checked_add(t).ok_or_else(overflow)?;
        }
        coeffs = next;
    }
    let mut even = 0u64;
    let mut odd = 0u64;
    for (d, &c) in coeffs.iter().enumerate() {
        let acc = if d % 2 == 0 { &mut even } else { &mut odd };
        *acc = acc.checked_add(c).ok_or_else(overflow)?;
    }
    let upper = even
        .checked_mul(even)
        .and_then(|e2| odd.checked_mul(odd).and_then(|o2| e2.checked_add(o2)))
        .ok_or_else(overflow)?;
    let lower = g_list
        .iter()
        .try_fold(1u64, |acc, &g| acc.checked_mul(g.checked_add(1)?))
        .ok_or_else(overflow)?;
    let conjectured_max = if g_list.iter().all(|&g| g >= 2) {
        Some(
            g_list
                .iter()
                .try_fold(1u64, |acc, &g| acc.checked_mul(5 * (g - 1)))
                .ok_or_else(overflow)?,
        )
    } else {
        None
    };
    let single_mass_max = if g_list.iter().all(|&g| g == 1) {
        let k = g_list.len() as u32;
        let pow = 2u32
            .checked_mul(k - 1)
            .and_then(|e| 1u64.checked_shl(e))
            .filter(|_| 2 * (k - 1) < 64)
            .ok_or_else(overflow)?;
        Some(2 * (pow - 1))
    } else {
        None
    };
    Ok(BoundsReport {
        lower,
        upper_eq1: upper,
        even_sum: even,
        odd_sum: odd,
        conjectured_max,
        single_mass_max,
    })
}
