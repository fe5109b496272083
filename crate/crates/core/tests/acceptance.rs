//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use multilens::builder::{build_preliminary, keeps_count_at, max_stable_epsilon};
use multilens::caustics::{compute_curves, critical_curves, hausdorff, Polyline};
use multilens::cluster::single_linkage;
use multilens::cosmology::{
    angular_diameter, comoving_distance, comoving_distance_tol, plane_parameters,
    realize_small_epsilon, transverse_distance, Cosmology, PlaneRedshifts, RealizationMode,
    QUADRATURE_TOL,
};
use multilens::lens::{
    lens_map, lens_map_jacobian, LensPlane, MultiplaneLens, PlanePoint, PointMass,
};
use multilens::linalg::{block_triangular_det, BlockMatrix, DenseMatrix};
use multilens::rhie::{rhie_plane, rhie_plane_rotated};
use multilens::scene::load_scene;
use multilens::solver::{
    find_images, image_count_bounds, time_delay, ImageSet, SolveOptions, Window,
};
use nalgebra::DMatrix;
use rand::RngExt;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn solve(lens: &MultiplaneLens) -> Result<ImageSet, String> {
    find_images(lens, &SolveOptions::default()).map_err(err)
}

fn two_plane(g: usize, lambda: f64, rotation: f64, eps: f64) -> Result<MultiplaneLens, String> {
    let p1 = rhie_plane_rotated(g, rotation).map_err(err)?.0;
    let p2 = rhie_plane(g).map_err(err)?.0.scaled(lambda).map_err(err)?;
    MultiplaneLens::new(vec![p1, p2], PlanePoint::ORIGIN)
        .and_then(|l| l.with_epsilons(vec![eps]))
        .map_err(err)
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn single_plane_counts() -> Outcome {
    let mut counts = Vec::new();
    for g in 2..=5 {
        let lens = MultiplaneLens::single(rhie_plane(g).map_err(err)?.0, PlanePoint::ORIGIN)
            .map_err(err)?;
        let set = solve(&lens)?;
        ensure(set.count() == 5 * g - 5, || {
            format!("g={g}: {} images", set.count())
        })?;
        ensure(set.suspects.is_empty(), || {
            format!("g={g}: {} suspects", set.suspects.len())
        })?;
        counts.push(set.count());
    }
    Ok(format!("counts {counts:?}, no suspects"))
}

fn two_by_two() -> Outcome {
    let mut notes = Vec::new();
    for eps in [0.0, 0.01] {
        let set = solve(&two_plane(2, 0.1, std::f64::consts::FRAC_PI_2, eps)?)?;
        ensure(set.count() == 25, || {
            format!("eps={eps}: {} images", set.count())
        })?;
        ensure(set.suspects.is_empty(), || format!("eps={eps}: suspects"))?;
        let c = single_linkage(&set.positions(), 5);
        ensure(c.sizes() == vec![5; 5], || {
            format!("eps={eps}: cluster sizes {:?}", c.sizes())
        })?;
        ensure(c.separation_ratio >= 5.0, || {
            format!("eps={eps}: separation ratio {:.3}", c.separation_ratio)
        })?;
        notes.push(format!(
            "eps={eps}: 25 in 5x5, separation {:.2} (mst gap {:.2})",
            c.separation_ratio, c.gap_ratio
        ));
    }
    Ok(notes.join("; "))
}

fn three_by_three() -> Outcome {
    let uncoupled = solve(&two_plane(3, 0.01, 0.0, 0.0)?)?;
    ensure(uncoupled.count() == 100, || {
        format!("eps=0: {} images", uncoupled.count())
    })?;
    let groups = single_linkage(&uncoupled.positions(), 10).sizes();
    ensure(groups == vec![10; 10], || {
        format!("eps=0: groups {groups:?}")
    })?;

    let mid = solve(&two_plane(3, 0.01, 0.0, 0.0003)?)?;
    ensure(mid.count() == 100, || {
        format!("eps=0.0003: {} images", mid.count())
    })?;

    let coupled = solve(&two_plane(3, 0.01, 0.0, 0.001)?)?;
    ensure(coupled.count() == 94, || {
        format!("eps=0.001: {} images", coupled.count())
    })?;
    let sizes = sorted(single_linkage(&coupled.positions(), 10).sizes());
    let eights = sizes.iter().filter(|&&s| s == 8).count();
    ensure(eights == 3, || format!("eps=0.001: group sizes {sizes:?}"))?;
    for s in [&uncoupled, &mid, &coupled] {
        ensure(s.suspects.is_empty(), || "suspect roots".into())?;
    }
    Ok(format!("100 (10x10), 100, 94 with sizes {sizes:?}"))
}

fn caustic_multiplicity() -> Outcome {
    let base = two_plane(2, 0.1, std::f64::consts::FRAC_PI_2, 0.0)?;
    let window = Window::default_for(&base);
    let before = compute_curves(&base, &window, 1024).map_err(err)?;
    let m0 = sorted(before.multiplicities());
    ensure(m0 == vec![1, 5], || format!("eps=0 multiplicities {m0:?}"))?;
    let after = compute_curves(
        &two_plane(2, 0.1, std::f64::consts::FRAC_PI_2, 0.01)?,
        &window,
        1024,
    )
    .map_err(err)?;
    let m1 = after.multiplicities();
    ensure(after.caustic.len() == before.caustic.len(), || {
        format!(
            "component count {} -> {}",
            before.caustic.len(),
            after.caustic.len()
        )
    })?;
    ensure(m1.iter().all(|&m| m == 1), || {
        format!("eps=0.01 multiplicities {m1:?}")
    })?;
    Ok(format!("eps=0 {m0:?}, eps=0.01 {m1:?}"))
}

fn scenes_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn bounds() -> Outcome {
    for (gs, expect) in [([2u64, 2], (9, 41, 25)), ([3, 3], (16, 136, 100))] {
        let b = image_count_bounds(&gs).map_err(err)?;
        let got = (b.lower, b.upper_eq1, b.conjectured_max.unwrap_or(0));
        // (1 + gZ)^2 = 1 + 2gZ + g^2 Z^2
        let g = gs[0];
        let (even, odd) = (1 + g * g, 2 * g);
        ensure(
            got == expect && (b.even_sum, b.odd_sum) == (even, odd),
            || format!("{gs:?}: got {got:?}"),
        )?;
        ensure(
            even * even + odd * odd == expect.1 && (g + 1) * (g + 1) == expect.0,
            || "hand expansion".into(),
        )?;
    }
    let mut names: Vec<_> = std::fs::read_dir(scenes_dir())
        .map_err(err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    for path in &names {
        let (scene, lens) = load_scene(path).map_err(err)?;
        let set = find_images(&lens, &scene.solve_options().map_err(err)?).map_err(err)?;
        let gs: Vec<u64> = lens
            .planes()
            .iter()
            .map(|p| p.masses().len() as u64)
            .collect();
        let b = image_count_bounds(&gs).map_err(err)?;
        ensure(
            set.count() as u64 >= b.lower && set.count() as u64 <= b.upper_eq1,
            || {
                format!(
                    "{}: {} outside [{}, {}]",
                    path.display(),
                    set.count(),
                    b.lower,
                    b.upper_eq1
                )
            },
        )?;
    }
    Ok(format!(
        "(2,2)=(9,41,25) (3,3)=(16,136,100), {} scenes within bounds",
        names.len()
    ))
}

fn fd_jacobian(lens: &MultiplaneLens, x: PlanePoint, h: f64) -> Result<[[f64; 2]; 2], String> {
    let f = |p: PlanePoint| lens_map(lens, p).map_err(err);
    let (du, dv) = (PlanePoint::new(h, 0.0), PlanePoint::new(0.0, h));
    let cu = (f(x + du)? - f(x - du)?) * (0.5 / h);
    let cv = (f(x + dv)? - f(x - dv)?) * (0.5 / h);
    Ok([[cu.u, cv.u], [cu.v, cv.v]])
}

fn properties() -> Outcome {
    // scaling equivariance
    let p1 = rhie_plane(3).map_err(err)?.0;
    let p2 = rhie_plane(2).map_err(err)?.0.scaled(0.05).map_err(err)?;
    let lens = MultiplaneLens::new(vec![p1, p2], PlanePoint::new(0.01, -0.02))
        .and_then(|l| l.with_epsilons(vec![0.002]))
        .map_err(err)?;
    let base = solve(&lens)?;
    for lambda in [0.1, 2.0, 10.0] {
        let scaled = solve(&lens.scaled(lambda).map_err(err)?)?;
        ensure(scaled.count() == base.count(), || {
            format!("lambda={lambda}: count changed")
        })?;
        let mut used = vec![false; scaled.count()];
        for img in &base.images {
            let target = img.position() * lambda;
            let k = scaled
                .images
                .iter()
                .enumerate()
                .position(|(k, o)| !used[k] && o.position().dist(&target) <= 1e-8 * lambda)
                .ok_or_else(|| format!("lambda={lambda}: no partner for {target}"))?;
            used[k] = true;
        }
    }

    let mut r = common::rng(101);
    let mut worst_fd = 0.0f64;
    let mut checked = 0;
    while checked < 100 {
        let lens = common::random_lens(&mut r);
        let Some(x) = common::clear_point(&lens, &mut r, 0.2) else {
            continue;
        };
        let j = lens_map_jacobian(&lens, x).map_err(err)?;
        let fd = fd_jacobian(&lens, x, 1e-5)?;
        let scale = j.max_abs().max(1.0);
        for (row, fd_row) in j.0.iter().zip(&fd) {
            for (a, b) in row.iter().zip(fd_row) {
                worst_fd = worst_fd.max((a - b).abs() / scale);
            }
        }
        checked += 1;
    }
    ensure(worst_fd <= 1e-6, || {
        format!("finite-difference Jacobian off by {worst_fd:e}")
    })?;

    let mut worst_det = 0.0f64;
    for _ in 0..200 {
        let n = r.random_range(1..=5);
        let sizes: Vec<usize> = (0..n).map(|_| r.random_range(1..=4)).collect();
        let mut blocks = Vec::new();
        for i in 0..n {
            for j in 0..n {
                blocks.push(if j < i {
                    DenseMatrix::zeros(sizes[i], sizes[j])
                } else {
                    let rows: Vec<Vec<f64>> = (0..sizes[i])
                        .map(|_| (0..sizes[j]).map(|_| r.random_range(-1.0..1.0)).collect())
                        .collect();
                    DenseMatrix::from_rows(&rows).map_err(err)?
                });
            }
        }
        let m = BlockMatrix::new(sizes.clone(), sizes, blocks).map_err(err)?;
        let dense = m.to_dense();
        let oracle =
            DMatrix::from_fn(dense.rows(), dense.cols(), |i, j| dense[(i, j)]).determinant();
        let det = block_triangular_det(&m).map_err(err)?;
        worst_det = worst_det.max((det - oracle).abs() / oracle.abs());
    }
    ensure(worst_det <= 1e-10, || {
        format!("block determinant off by {worst_det:e}")
    })?;

    let mut worst_grad = 0.0f64;
    let mut checked = 0;
    while checked < 50 {
        let plane = common::random_plane(&mut r, 4);
        let y = common::point(&mut r, 0.5);
        let lens = MultiplaneLens::single(plane.clone(), y).map_err(err)?;
        let Some(x) = common::clear_point(&lens, &mut r, 0.2) else {
            continue;
        };
        let h = 1e-5;
        let t = |p: PlanePoint| time_delay(&plane, y, p).map_err(err);
        let (du, dv) = (PlanePoint::new(h, 0.0), PlanePoint::new(0.0, h));
        let grad = PlanePoint::new(
            (t(x + du)? - t(x - du)?) / (2.0 * h),
            (t(x + dv)? - t(x - dv)?) / (2.0 * h),
        );
        let expected = lens_map(&lens, x).map_err(err)? - y;
        worst_grad = worst_grad.max(grad.dist(&expected));
        checked += 1;
    }
    ensure(worst_grad <= 1e-6, || {
        format!("time delay gradient off by {worst_grad:e}")
    })?;

    let unit =
        LensPlane::new(vec![PointMass::new(PlanePoint::ORIGIN, 1.0).map_err(err)?]).map_err(err)?;
    let lens = MultiplaneLens::single(unit, PlanePoint::ORIGIN).map_err(err)?;
    let curves = critical_curves(&lens, &Window::centered(2.0), 128).map_err(err)?;
    ensure(curves.len() == 1, || {
        format!("{} critical curves for one mass", curves.len())
    })?;
    let circle = Polyline {
        points: (0..4000)
            .map(|k| PlanePoint::polar(1.0, std::f64::consts::TAU * k as f64 / 4000.0))
            .collect(),
        closed: true,
        leaves_window: false,
    };
    let h = hausdorff(&curves[0], &circle);
    ensure(h <= 1e-3, || format!("unit circle Hausdorff {h:e}"))?;

    Ok(format!(
        "scaling ok, fd {worst_fd:.1e}, block det {worst_det:.1e}, grad {worst_grad:.1e}, circle {h:.1e}"
    ))
}

fn eds_distance(z: f64) -> f64 {
    2.0 * (1.0 - 1.0 / (1.0 + z).sqrt())
}

fn bending(c: &Cosmology, zs: &[f64], i: usize) -> Result<f64, String> {
    Ok(transverse_distance(c, zs[i], zs[i + 1]).map_err(err)?
        / (angular_diameter(c, 0.0, zs[i]).map_err(err)?
            * transverse_distance(c, 0.0, zs[i + 1]).map_err(err)?))
}

fn cosmology() -> Outcome {
    let c = Cosmology::einstein_de_sitter();
    for z in [0.5, 1.0, 2.0, 3.0, 8.0] {
        let d = comoving_distance(&c, 0.0, z).map_err(err)?;
        ensure((d - eds_distance(z)).abs() <= 1e-9, || {
            format!("z={z}: {d} vs closed form")
        })?;
        let halved = comoving_distance_tol(&c, 0.0, z, 0.5 * QUADRATURE_TOL).map_err(err)?;
        ensure((d - halved).abs() <= 1e-9, || {
            format!("z={z}: not converged")
        })?;
    }
    for (m, l, zs) in [
        (0.3, 0.7, vec![0.2, 0.7, 1.5]),
        (0.5, 0.3, vec![0.1, 0.4, 0.8, 2.0]),
    ] {
        let p = plane_parameters(
            &Cosmology::new(m, l).map_err(err)?,
            &PlaneRedshifts::new(zs).map_err(err)?,
        )
        .map_err(err)?;
        ensure(p.epsilons[0] == 0.0, || "first coupling nonzero".into())?;
    }
    let zr = PlaneRedshifts::new(vec![1.0, 2.0, 3.0]).map_err(err)?;
    let p = plane_parameters(&c, &zr).map_err(err)?;
    let (d1, d2, d3) = (eds_distance(1.0), eds_distance(2.0), eds_distance(3.0));
    let eps2_oracle = d1 * (d3 - d2) / ((d2 - d1) * d3);
    ensure(p.epsilons[0] == 0.0, || "first coupling nonzero".into())?;
    ensure((p.betas[0] - 0.307008).abs() <= 1e-5, || {
        format!("beta_1 = {}", p.betas[0])
    })?;
    ensure((p.epsilons[1] - eps2_oracle).abs() <= 1e-5, || {
        format!("eps_2 = {} vs closed form {eps2_oracle}", p.epsilons[1])
    })?;

    for mode in [RealizationMode::Foreground, RealizationMode::Background] {
        for target in [0.01, 0.1] {
            let r = realize_small_epsilon(&c, &zr, target, mode).map_err(err)?;
            let eps = plane_parameters(&c, &r.redshifts).map_err(err)?.epsilons[1];
            ensure((eps - target).abs() <= 1e-8, || {
                format!("{mode:?} {target}: got {eps}")
            })?;
            for i in 0..2 {
                let before = bending(&c, zr.all(), i)?;
                let after = bending(&c, r.redshifts.all(), i)? * r.mass_factors[i];
                ensure((after - before).abs() <= 1e-8 * before, || {
                    format!("{mode:?}: bending term {i} drifted")
                })?;
            }
        }
    }
    Ok(format!(
        "beta_1 {:.6}, eps_2 {:.7} (closed form {eps2_oracle:.7}; printed 0.349186 differs by {:.1e})",
        p.betas[0],
        p.epsilons[1],
        (eps2_oracle - 0.349186f64).abs()
    ))
}

fn end_to_end() -> Outcome {
    let mut notes = Vec::new();
    for (gs, expected) in [(vec![2, 2], 25usize), (vec![2, 3], 50)] {
        let (lens, report) = build_preliminary(&gs).map_err(err)?;
        ensure(report.expected_count == expected as u64, || {
            format!("{gs:?}: expected {}", report.expected_count)
        })?;
        ensure(report.achieved_count_eps0 == expected, || {
            format!("{gs:?}: achieved {}", report.achieved_count_eps0)
        })?;
        let search = max_stable_epsilon(&lens, expected).map_err(err)?;
        ensure(search.certified > 0.0, || {
            format!("{gs:?}: no stable coupling")
        })?;
        let kept = keeps_count_at(&lens, expected, search.certified, &SolveOptions::default())
            .map_err(err)?;
        ensure(kept, || {
            format!("{gs:?}: count lost at {}", search.certified)
        })?;
        notes.push(format!(
            "{gs:?} -> {expected} at lambda {:.4}, eps* {:.2e}",
            report.lambdas[0], search.certified
        ));
    }
    Ok(notes.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 8] = [
        ("single-plane counts", single_plane_counts),
        ("two-plane g=(2,2)", two_by_two),
        ("two-plane g=(3,3)", three_by_three),
        ("caustic multiplicity", caustic_multiplicity),
        ("image count bounds", bounds),
        ("property suites", properties),
        ("cosmology", cosmology),
        ("end-to-end construction", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let outcome = outcome.and_then(|s| {
            ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
            Ok(s)
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({secs:.1}s) {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({secs:.1}s) {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
