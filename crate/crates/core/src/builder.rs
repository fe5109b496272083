//! Assembling K-plane lenses with `prod (5 g_i - 5)` images.
//!
//! Planes start as single-plane extremal ensembles. Working backward from the
//! last plane, the current tail is rescaled so that all of its images fall in
//! a source disk on which the next plane forward keeps its full image count.
//! The resulting uncoupled system is then perturbed to positive couplings.

use serde::Serialize;

use crate::error::{LensError, Result};
use crate::lens::{LensPlane, LensedImage, MultiplaneLens, PlanePoint};
use crate::rhie::{max_source_radius_with, rhie_plane_rotated};
use crate::solver::{find_images, SolveOptions};

/// Record of one construction run. Per-step vectors are indexed by plane
/// `2..=K` in order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionReport {
    pub g_list: Vec<usize>,
    /// Central Einstein radius of each ensemble (zero for `g <= 3`).
    pub central_bs: Vec<f64>,
    /// Step factors `lambda_2..lambda_K`.
    pub step_lambdas: Vec<f64>,
    /// Cumulative scale applied to planes `2..K`.
    pub lambdas: Vec<f64>,
    /// Source-disk radii chosen at each step (empty when factors were supplied).
    pub deltas: Vec<f64>,
    /// Solution radii measured at each step.
    pub radii: Vec<f64>,
    pub expected_count: u64,
    pub achieved_count_eps0: usize,
    pub epsilon_used: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    /// Explicit step factors `lambda_2..lambda_K`; `None` selects them automatically.
    pub lambdas: Option<Vec<f64>>,
    /// Per-plane rotation of each ensemble; missing entries are zero.
    pub rotations: Vec<f64>,
    /// Options for the image censuses of each tail.
    pub solve: SolveOptions,
    /// Options for the source-disk searches.
    pub search: SolveOptions,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            lambdas: None,
            rotations: Vec::new(),
            solve: SolveOptions::default(),
            search: SolveOptions::coarse(),
        }
    }
}

/// Scales positions and Einstein radii of every mass by `lambda`.
pub fn scale_plane(plane: &LensPlane, lambda: f64) -> Result<LensPlane> {
    plane.scaled(lambda)
}

/// 1.25 times the largest plane-1 distance from the origin over `images`.
pub fn solution_radius(images: &[LensedImage]) -> Result<f64> {
    if images.is_empty() {
        return Err(LensError::invalid(
            "images",
            "solution radius of an empty image set",
        ));
    }
    Ok(1.25
        * images
            .iter()
            .map(|i| i.position().norm())
            .fold(0.0, f64::max))
}

fn expected_product(gs: &[usize]) -> u64 {
    gs.iter().map(|&g| 5 * (g as u64 - 1)).product()
}

/// Builds the uncoupled system with automatically chosen scale factors.
pub fn build_preliminary(g_list: &[usize]) -> Result<(MultiplaneLens, ConstructionReport)> {
    build_preliminary_with(g_list, &BuildOptions::default())
}

pub fn build_preliminary_with(
    g_list: &[usize],
    opts: &BuildOptions,
) -> Result<(MultiplaneLens, ConstructionReport)> {
    let k = g_list.len();
    if k == 0 {
        return Err(LensError::invalid(
            "g_list",
            "at least one plane is required",
        ));
    }
    if let Some(&g) = g_list.iter().find(|&&g| g < 2) {
        return Err(LensError::invalid(
            "g_list",
            format!("every plane needs g >= 2, got {g}"),
        ));
    }
    if let Some(l) = &opts.lambdas {
        if l.len() != k - 1 {
            return Err(LensError::LengthMismatch {
                field: "lambdas",
                expected: k - 1,
                actual: l.len(),
            });
        }
        if let Some(x) = l.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(LensError::invalid(
                "lambdas",
                format!("must be > 0, got {x}"),
            ));
        }
    }

    let mut planes = Vec::with_capacity(k);
    let mut central_bs = Vec::with_capacity(k);
    for (i, &g) in g_list.iter().enumerate() {
        let rot = opts.rotations.get(i).copied().unwrap_or(0.0);
        let (plane, cfg) = rhie_plane_rotated(g, rot)?;
        planes.push(plane);
        central_bs.push(cfg.central_b);
    }

    let mut step_lambdas = vec![1.0; k - 1];
    let mut deltas = vec![0.0; k - 1];
    let mut radii = vec![0.0; k - 1];
    let census = |planes: &[LensPlane], expected: u64, what: &str| -> Result<Vec<LensedImage>> {
        let tail = MultiplaneLens::new(planes.to_vec(), PlanePoint::ORIGIN)?;
        let set = find_images(&tail, &opts.solve)?;
        if set.count() as u64 != expected || !set.suspects.is_empty() {
            return Err(LensError::Construction(format!(
                "{what}: expected {expected} nondegenerate images, found {} (+{} degenerate)",
                set.count(),
                set.suspects.len()
            )));
        }
        Ok(set.images)
    };

    for front in (1..k).rev() {
        let expected = expected_product(&g_list[front..]);
        let images = census(
            &planes[front..],
            expected,
            &format!("tail from plane {}", front + 1),
        )?;
        let r = solution_radius(&images)?;
        let lambda = match &opts.lambdas {
            Some(l) => l[front - 1],
            None => {
                let target = 5 * (g_list[front - 1] - 1);
                let delta =
                    max_source_radius_with(&planes[front - 1], target, &opts.search)?.delta_safe;
                deltas[front - 1] = delta;
                delta / r
            }
        };
        log::info!("plane {}: R = {r:e}, lambda = {lambda:e}", front + 1);
        radii[front - 1] = r;
        step_lambdas[front - 1] = lambda;
        for p in planes[front..].iter_mut() {
            *p = p.scaled(lambda)?;
        }
    }

    let expected = expected_product(g_list);
    let images = census(&planes, expected, "assembled system")?;
    if opts.lambdas.is_some() {
        deltas.clear();
    }
    let lambdas = (0..k - 1)
        .map(|i| step_lambdas[..=i].iter().product())
        .collect();
    let lens = MultiplaneLens::new(planes, PlanePoint::ORIGIN)?;
    let report = ConstructionReport {
        g_list: g_list.to_vec(),
        central_bs,
        step_lambdas,
        lambdas,
        deltas,
        radii,
        expected_count: expected,
        achieved_count_eps0: images.len(),
        epsilon_used: vec![0.0; k - 1],
    };
    Ok((lens, report))
}

/// The same lens with its couplings replaced.
pub fn perturb_epsilon(lens: &MultiplaneLens, epsilons: &[f64]) -> Result<MultiplaneLens> {
    lens.clone().with_epsilons(epsilons.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonSearch {
    /// Largest uniform coupling accepted by the bisection.
    pub threshold: f64,
    /// Half of `threshold`.
    pub certified: f64,
}

const EPS_BISECTIONS: usize = 30;
const EPS_MIN_DET: f64 = 1e-10;

/// Whether the lens with every coupling set to `eps` keeps `target_count`
/// images with min |det| >= 1e-10.
pub fn keeps_count_at(
    lens: &MultiplaneLens,
    target_count: usize,
    eps: f64,
    opts: &SolveOptions,
) -> Result<bool> {
    let l = lens.clone().with_uniform_epsilon(eps)?;
    let set = find_images(&l, opts)?;
    Ok(set.count() == target_count && set.min_abs_det() >= EPS_MIN_DET)
}

/// Bisection on `[0, 1]` for the largest uniform coupling preserving the count.
pub fn max_stable_epsilon(lens: &MultiplaneLens, target_count: usize) -> Result<EpsilonSearch> {
    max_stable_epsilon_with(lens, target_count, &SolveOptions::default())
}

pub fn max_stable_epsilon_with(
    lens: &MultiplaneLens,
    target_count: usize,
    opts: &SolveOptions,
) -> Result<EpsilonSearch> {
    if lens.plane_count() == 1 {
        return Ok(EpsilonSearch {
            threshold: 0.0,
            certified: 0.0,
        });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..EPS_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if keeps_count_at(lens, target_count, mid, opts)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(EpsilonSearch {
        threshold: lo,
        certified: 0.5 * lo,
    })
}
