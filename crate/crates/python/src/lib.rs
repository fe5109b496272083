//! Python bindings: scenes in, plain tuples and dicts out.

use std::collections::BTreeMap;

use multilens::builder::{build_preliminary_with, BuildOptions};
use multilens::caustics::compute_curves;
use multilens::cosmology::{plane_parameters, Cosmology, PlaneRedshifts};
use multilens::lens::Parity;
use multilens::scene::{parse_scene, PlaneSpec, Scene};
use multilens::solver::{find_images, image_count_bounds};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type ImageRow = (f64, f64, i8, f64, &'static str);

fn lens_err(e: multilens::LensError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn scene_err(e: multilens::scene::SceneError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Image positions on the first plane as `(u, v, parity, det, morse_type)`.
#[pyfunction]
fn solve(scene_json: &str) -> PyResult<Vec<ImageRow>> {
    let (scene, lens) = parse_scene(scene_json).map_err(scene_err)?;
    let opts = scene.solve_options().map_err(scene_err)?;
    let set = find_images(&lens, &opts).map_err(lens_err)?;
    Ok(set
        .images
        .iter()
        .map(|img| {
            let p = img.position();
            let parity = match img.parity {
                Parity::Positive => 1,
                Parity::Negative => -1,
            };
            (
                p.u,
                p.v,
                parity,
                img.lens_map_jacobian_det,
                img.morse_type.as_str(),
            )
        })
        .collect())
}

/// Sizes of the caustic multiplicity groups, largest first.
#[pyfunction]
#[pyo3(signature = (scene_json, grid_n=None))]
fn caustic_multiplicities(scene_json: &str, grid_n: Option<usize>) -> PyResult<Vec<usize>> {
    let (scene, lens) = parse_scene(scene_json).map_err(scene_err)?;
    let window = scene.curve_window(&lens).map_err(scene_err)?;
    let set =
        compute_curves(&lens, &window, grid_n.unwrap_or(scene.curve_grid())).map_err(lens_err)?;
    let mut m = set.multiplicities();
    m.sort_unstable_by(|a, b| b.cmp(a));
    Ok(m)
}

#[pyfunction]
fn bounds(g: Vec<u64>) -> PyResult<BTreeMap<&'static str, u64>> {
    let b = image_count_bounds(&g).map_err(lens_err)?;
    let mut out = BTreeMap::from([
        ("lower", b.lower),
        ("upper", b.upper_eq1),
        ("even", b.even_sum),
        ("odd", b.odd_sum),
    ]);
    if let Some(c) = b.conjectured_max {
        out.insert("conjectured", c);
    }
    Ok(out)
}

/// `(betas, epsilons)` for plane redshifts followed by the source redshift.
#[pyfunction]
#[pyo3(signature = (redshifts, omega_m=0.3, omega_lambda=0.7))]
fn cosmology(
    redshifts: Vec<f64>,
    omega_m: f64,
    omega_lambda: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let c = Cosmology::new(omega_m, omega_lambda).map_err(lens_err)?;
    let zr = PlaneRedshifts::new(redshifts).map_err(lens_err)?;
    let p = plane_parameters(&c, &zr).map_err(lens_err)?;
    Ok((p.betas, p.epsilons))
}

/// Scene JSON for stacked Rhie planes, each later plane scaled by `lam`.
#[pyfunction]
#[pyo3(signature = (g, lam=None, eps=0.0))]
fn rhie_scene(g: Vec<usize>, lam: Option<f64>, eps: f64) -> PyResult<String> {
    let k = g.len();
    let opts = BuildOptions {
        lambdas: lam.map(|l| vec![l; k.saturating_sub(1)]),
        ..BuildOptions::default()
    };
    let (_, report) = build_preliminary_with(&g, &opts).map_err(lens_err)?;
    let mut scene = Scene::new(
        g.iter()
            .enumerate()
            .map(|(i, &gi)| PlaneSpec {
                scale: (i > 0).then(|| report.lambdas[i - 1]),
                central_b: (gi >= 4).then(|| report.central_bs[i]),
                ..PlaneSpec::rhie(gi)
            })
            .collect(),
    );
    if k > 1 && eps != 0.0 {
        scene.epsilons = vec![eps; k - 1];
    }
    scene.lens().map_err(scene_err)?;
    Ok(scene.to_canonical_string())
}

#[pymodule]
fn multilens_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(caustic_multiplicities, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(cosmology, m)?)?;
    m.add_function(wrap_pyfunction!(rhie_scene, m)?)?;
    Ok(())
}
