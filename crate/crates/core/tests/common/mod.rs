#![allow(dead_code)]

use multilens::lens::{LensPlane, MultiplaneLens, PlanePoint, PointMass};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn point(r: &mut StdRng, half: f64) -> PlanePoint {
    PlanePoint::new(r.random_range(-half..half), r.random_range(-half..half))
}

/// A plane of 1 to `max_masses` masses in the square of half width 1.
pub fn random_plane(r: &mut StdRng, max_masses: usize) -> LensPlane {
    let n = r.random_range(1..=max_masses);
    let masses = (0..n)
        .map(|_| PointMass::new(point(r, 1.0), r.random_range(0.1..1.0)).unwrap())
        .collect();
    LensPlane::new(masses).unwrap()
}

/// Up to three planes with random couplings and a random source.
pub fn random_lens(r: &mut StdRng) -> MultiplaneLens {
    let k = r.random_range(1..=3);
    let planes = (0..k).map(|_| random_plane(r, 3)).collect();
    let eps = (1..k).map(|_| r.random_range(0.0..0.5)).collect();
    let betas = (0..k).map(|_| r.random_range(0.3..1.0)).collect();
    MultiplaneLens::new(planes, point(r, 0.5))
        .unwrap()
        .with_betas(betas)
        .unwrap()
        .with_epsilons(eps)
        .unwrap()
}

/// A point at least `clearance` away from every mass the ray meets, or `None`.
pub fn clear_point(lens: &MultiplaneLens, r: &mut StdRng, clearance: f64) -> Option<PlanePoint> {
    for _ in 0..100 {
        let x = point(r, 1.5);
        if let Ok(path) = multilens::lens::trace(lens, x) {
            let clear = path.impacts.iter().zip(lens.planes()).all(|(p, plane)| {
                plane
                    .masses()
                    .iter()
                    .all(|m| m.position.dist(p) > clearance)
            });
            if clear {
                return Some(x);
            }
        }
    }
    None
}
