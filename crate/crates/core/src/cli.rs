//! Command-line front end: scene-driven solving, curve extraction and
//! rendering, automatic construction, cosmology tables and count bounds.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::builder::{build_preliminary_with, max_stable_epsilon, BuildOptions};
use crate::caustics::{compute_curves, CurveSet, Polyline};
use crate::cosmology::{
    angular_diameter, comoving_distance, plane_parameters, realize_small_epsilon,
    transverse_distance, Cosmology, PlaneRedshifts, RealizationMode,
};
use crate::error::LensError;
use crate::lens::{MultiplaneLens, Parity, PlanePoint};
use crate::rhie::{polygon_radius, tune_central_mass};
use crate::scene::{load_scene, save_scene, PlaneSpec, Scene, SceneError};
use crate::solver::{
    find_images, image_count_bounds, BoundsReport, ImageSet, SolveOptions, Window,
};
use crate::svg::{group_color, render, Marker, Panel};

pub const THREADS_ENV: &str = "MULTILENS_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Scene(#[from] SceneError),

    #[error(transparent)]
    Lens(#[from] LensError),
}

impl CliError {
    /// Process exit code: 1 I/O, 2 usage, 3 parse, 4 validation, 5 solver, 6 construction.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Scene(SceneError::Io { .. }) => 1,
            CliError::Usage(_) => 2,
            CliError::Scene(SceneError::Parse { .. }) => 3,
            CliError::Scene(SceneError::Validation { .. }) => 4,
            CliError::Lens(LensError::Invalid { .. } | LensError::LengthMismatch { .. }) => 4,
            CliError::Lens(LensError::Construction(_)) => 6,
            CliError::Lens(_) => 5,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Parser)]
#[command(
    name = "multilens",
    version,
    about = "Images, critical curves and constructions for multiplane point-mass lenses"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find every image of the scene's source.
    Solve(SceneArgs),
    /// Critical curves, caustics and their multiplicity groups.
    Curves(SceneArgs),
    /// Build a lens with prod(5 g_i - 5) images from Rhie ensembles.
    Build(BuildArgs),
    /// Distances and plane parameters for a list of redshifts.
    Cosmo(CosmoArgs),
    /// Image-count bounds for the given masses per plane.
    Bounds(BoundsArgs),
    /// Tune the central mass of a g-mass ensemble (g >= 4).
    Tune(TuneArgs),
    /// Image count as a function of a uniform coupling.
    EpsScan(EpsScanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        self != Format::Svg
    }

    fn svg(self) -> bool {
        self != Format::Csv
    }
}

/// Parses `W` (centered at the origin) or `U,V,W`.
pub fn parse_window(s: &str) -> Result<Window, String> {
    let parts = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad number `{p}`: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let w = match parts[..] {
        [w] => Window::centered(w),
        [u, v, w] => Window {
            center: PlanePoint::new(u, v),
            half_width: w,
        },
        _ => return Err("expected W or U,V,W".into()),
    };
    if !(w.half_width > 0.0 && w.half_width.is_finite() && w.center.is_finite()) {
        return Err("window half width must be positive and finite".into());
    }
    Ok(w)
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Output directory; tables go to standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed lattice size (solve) or curve lattice size (curves).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Newton residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Plane-1 window as `W` or `U,V,W`.
    #[arg(long, value_parser = parse_window)]
    pub window: Option<Window>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Masses per plane, front to back.
    #[arg(required = true, num_args = 1..)]
    pub g: Vec<usize>,
    /// Step scale factors: one value for every step or one per plane after the first.
    #[arg(long = "lambda", num_args = 1..)]
    pub lambdas: Vec<f64>,
    /// Uniform coupling for the reported lens.
    #[arg(long, conflicts_with = "auto_eps")]
    pub eps: Option<f64>,
    /// Use half of the largest uniform coupling that keeps the count.
    #[arg(long)]
    pub auto_eps: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Foreground,
    Background,
}

#[derive(Debug, Args)]
pub struct CosmoArgs {
    #[arg(long, default_value_t = 0.3)]
    pub omega_m: f64,
    #[arg(long, default_value_t = 0.7)]
    pub omega_lambda: f64,
    /// Plane redshifts followed by the source redshift.
    #[arg(required = true, num_args = 2..)]
    pub redshifts: Vec<f64>,
    /// Target coupling for a two-plane realization.
    #[arg(long)]
    pub realize: Option<f64>,
    #[arg(long, value_enum, default_value = "foreground")]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(required = true, num_args = 1..)]
    pub g: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub g: usize,
}

#[derive(Debug, Args)]
pub struct EpsScanArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long)]
    pub grid: Option<usize>,
}

/// Configures the global worker pool from `MULTILENS_THREADS`, if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{value}`"
            ))
        })?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(a) => cmd_solve(&a, out),
        Command::Curves(a) => cmd_curves(&a, out),
        Command::Build(a) => cmd_build(&a, out),
        Command::Cosmo(a) => cmd_cosmo(&a, out),
        Command::Bounds(a) => cmd_bounds(&a, out),
        Command::Tune(a) => cmd_tune(&a, out),
        Command::EpsScan(a) => cmd_eps_scan(&a, out),
    }
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(io_err("writing output"))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(io_err(format!("writing {}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))
}

fn solve_options(
    scene: &Scene,
    a: &SceneArgs,
    grid_is_seed: bool,
) -> Result<SolveOptions, CliError> {
    let mut opts = scene.solve_options()?;
    if grid_is_seed {
        if let Some(n) = a.grid {
            opts.grid_n = n;
        }
    }
    if let Some(t) = a.tol {
        opts.newton_tol = t;
    }
    if let Some(w) = a.window {
        opts.window = Some(w);
    }
    opts.validate()?;
    Ok(opts)
}

/// Image table: index, plane-1 position, impacts on later planes, residual,
/// determinant, parity and Morse type.
pub fn images_csv(lens: &MultiplaneLens, set: &ImageSet) -> String {
    let mut s = String::from("index,x1_u,x1_v");
    for j in 2..=lens.plane_count() {
        let _ = write!(s, ",x{j}_u,x{j}_v");
    }
    s.push_str(",residual,det,parity,morse_type\n");
    for (i, img) in set.images.iter().enumerate() {
        let _ = write!(s, "{i}");
        for p in &img.path.impacts {
            let _ = write!(s, ",{},{}", num(p.u), num(p.v));
        }
        let parity = match img.parity {
            Parity::Positive => "+",
            Parity::Negative => "-",
        };
        let _ = writeln!(
            s,
            ",{},{},{parity},{}",
            num(img.path.residual_norm),
            num(img.lens_map_jacobian_det),
            img.morse_type.as_str()
        );
    }
    s
}

fn bounds_for(lens: &MultiplaneLens) -> Option<BoundsReport> {
    let gs: Vec<u64> = lens
        .planes()
        .iter()
        .map(|p| {
            p.masses()
                .iter()
                .filter(|m| m.einstein_radius > 0.0)
                .count() as u64
        })
        .collect();
    image_count_bounds(&gs).ok()
}

fn bounds_text(b: &BoundsReport) -> String {
    let mut s = format!(
        "lower={} upper={} even={} odd={}",
        b.lower, b.upper_eq1, b.even_sum, b.odd_sum
    );
    if let Some(c) = b.conjectured_max {
        let _ = write!(s, " conjectured={c}");
    }
    if let Some(p) = b.single_mass_max {
        let _ = write!(s, " single_mass_max={p}");
    }
    s
}

pub fn summary_line(lens: &MultiplaneLens, set: &ImageSet) -> String {
    let mut s = format!(
        "images={} suspects={} signed={}",
        set.count(),
        set.suspects.len(),
        set.signed_count()
    );
    match bounds_for(lens) {
        Some(b) => {
            let _ = write!(
                s,
                " {} within_bounds={}",
                bounds_text(&b),
                b.admits(set.count() as u64)
            );
        }
        None => s.push_str(" bounds=n/a"),
    }
    s
}

fn cmd_solve(a: &SceneArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (scene, lens) = load_scene(&a.scene)?;
    let opts = solve_options(&scene, a, true)?;
    let set = find_images(&lens, &opts)?;
    let csv = images_csv(&lens, &set);
    let summary = summary_line(&lens, &set);
    let format = a.format.unwrap_or(Format::Csv);
    match &a.out {
        Some(dir) => {
            ensure_dir(dir)?;
            if format.csv() {
                write_file(&dir.join("images.csv"), &csv)?;
            }
            if format.svg() {
                let window = opts.window.unwrap_or_else(|| Window::default_for(&lens));
                let mut panel = Panel::new("images", window);
                add_lens_markers(&mut panel, &lens, &set, &opts);
                write_file(&dir.join("images.svg"), &render(&[panel]))?;
            }
            emit(out, &format!("{summary}\n"))
        }
        None => emit(out, &format!("{csv}# {summary}\n")),
    }
}

/// Plane-1 positions whose rays hit a mass of a later plane.
pub fn background_mass_preimages(lens: &MultiplaneLens, opts: &SolveOptions) -> Vec<PlanePoint> {
    let mut pts = Vec::new();
    for j in 1..lens.plane_count() {
        for m in lens.planes()[j].masses() {
            if m.einstein_radius == 0.0 {
                continue;
            }
            let Ok(head) = lens.head(j, m.position) else {
                continue;
            };
            match find_images(&head, opts) {
                Ok(set) => pts.extend(set.images.iter().chain(&set.suspects).map(|i| i.position())),
                Err(e) => log::warn!("preimages of a plane-{} mass: {e}", j + 1),
            }
        }
    }
    pts
}

fn add_lens_markers(panel: &mut Panel, lens: &MultiplaneLens, set: &ImageSet, opts: &SolveOptions) {
    for m in lens.planes()[0].masses() {
        panel
            .markers
            .push((m.position, Marker::FilledCircle, "black"));
    }
    for p in background_mass_preimages(lens, opts) {
        panel.markers.push((p, Marker::OpenCircle, "black"));
    }
    for img in &set.images {
        let kind = match img.parity {
            Parity::Positive => Marker::Plus,
            Parity::Negative => Marker::Cross,
        };
        panel.markers.push((img.position(), kind, "#222222"));
    }
}

fn curve_csv(tag: &str, id: usize, c: &Polyline) -> String {
    let mut s = String::from("plane,component,vertex,u,v\n");
    for (k, p) in c.points.iter().enumerate() {
        let _ = writeln!(s, "{tag},{id},{k},{},{}", num(p.u), num(p.v));
    }
    s
}

/// Square window around the caustics and the source, padded by 10%.
fn source_window(curves: &CurveSet, source: PlanePoint, fallback: Window) -> Window {
    let pts: Vec<PlanePoint> = curves
        .caustic
        .iter()
        .flat_map(|c| c.points.iter().copied())
        .collect();
    if pts.is_empty() {
        return Window {
            center: source,
            half_width: fallback.half_width,
        };
    }
    let (mut lo, mut hi) = (source, source);
    for p in pts {
        lo = PlanePoint::new(lo.u.min(p.u), lo.v.min(p.v));
        hi = PlanePoint::new(hi.u.max(p.u), hi.v.max(p.v));
    }
    let half = 0.55 * (hi.u - lo.u).max(hi.v - lo.v);
    Window {
        center: (lo + hi) * 0.5,
        half_width: if half > 0.0 {
            half
        } else {
            fallback.half_width * 0.1
        },
    }
}

pub fn curves_metadata(curves: &CurveSet) -> serde_json::Value {
    let describe = |cs: &[Polyline]| {
        cs.iter()
            .enumerate()
            .map(|(i, c)| json!({"id": i, "vertices": c.len(), "closed": c.closed, "leaves_window": c.leaves_window}))
            .collect::<Vec<_>>()
    };
    let groups: Vec<_> = curves
        .multiplicity_groups
        .iter()
        .map(|g| json!({"members": g, "multiplicity": g.len()}))
        .collect();
    json!({
        "critical": describe(&curves.critical),
        "caustic": describe(&curves.caustic),
        "groups": groups,
        "max_multiplicity": curves.multiplicities().into_iter().max().unwrap_or(0),
    })
}

fn cmd_curves(a: &SceneArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (scene, lens) = load_scene(&a.scene)?;
    let opts = solve_options(&scene, a, false)?;
    let window = match a.window {
        Some(w) => w,
        None => scene.curve_window(&lens)?,
    };
    let grid = a.grid.unwrap_or_else(|| scene.curve_grid());
    let curves = compute_curves(&lens, &window, grid)?;
    let format = a.format.unwrap_or(Format::Both);
    let dir = a.out.clone().unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&dir)?;

    if format.csv() {
        for (i, c) in curves.critical.iter().enumerate() {
            write_file(
                &dir.join(format!("critical_{i:03}.csv")),
                &curve_csv("lens", i, c),
            )?;
        }
        for (i, c) in curves.caustic.iter().enumerate() {
            write_file(
                &dir.join(format!("caustic_{i:03}.csv")),
                &curve_csv("source", i, c),
            )?;
        }
    }
    let meta =
        serde_json::to_string_pretty(&curves_metadata(&curves)).expect("metadata serializes");
    write_file(&dir.join("curves.json"), &(meta + "\n"))?;

    if format.svg() {
        let set = find_images(&lens, &opts)?;
        let mut color_of = vec![group_color(0); curves.caustic.len()];
        for (g, members) in curves.multiplicity_groups.iter().enumerate() {
            for &m in members {
                color_of[m] = group_color(g);
            }
        }
        let mut lens_panel = Panel::new("critical curves", window);
        lens_panel.curves = curves
            .critical
            .iter()
            .cloned()
            .zip(color_of.iter().copied())
            .collect();
        add_lens_markers(&mut lens_panel, &lens, &set, &opts);
        write_file(&dir.join("critical.svg"), &render(&[lens_panel]))?;

        let sw = match scene.source_window()? {
            Some(w) => w,
            None => source_window(&curves, lens.source(), window),
        };
        let mut src_panel = Panel::new("caustics", sw);
        src_panel.curves = curves
            .caustic
            .iter()
            .cloned()
            .zip(color_of.iter().copied())
            .collect();
        src_panel
            .markers
            .push((lens.source(), Marker::Star, "black"));
        write_file(&dir.join("caustic.svg"), &render(&[src_panel]))?;
    }
    emit(
        out,
        &format!(
            "critical={} groups={} multiplicities={:?}\n",
            curves.critical.len(),
            curves.multiplicity_groups.len(),
            curves.multiplicities()
        ),
    )
}

fn cmd_build(a: &BuildArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let k = a.g.len();
    let lambdas = match a.lambdas.len() {
        0 => None,
        1 => Some(vec![a.lambdas[0]; k.saturating_sub(1)]),
        n if n + 1 == k => Some(a.lambdas.clone()),
        n => {
            return Err(CliError::Usage(format!(
                "--lambda takes 1 or {} values for {k} planes, got {n}",
                k.saturating_sub(1)
            )))
        }
    };
    let opts = BuildOptions {
        lambdas,
        ..BuildOptions::default()
    };
    let (lens, mut report) = build_preliminary_with(&a.g, &opts)?;
    let expected = report.expected_count as usize;
    let eps = if a.auto_eps {
        max_stable_epsilon(&lens, expected)?.certified
    } else {
        a.eps.unwrap_or(0.0)
    };
    let final_lens = lens.clone().with_uniform_epsilon(eps)?;
    let set = find_images(&final_lens, &SolveOptions::default())?;
    if set.count() != expected {
        log::warn!(
            "coupling {eps} gives {} images instead of {expected}",
            set.count()
        );
    }
    report.epsilon_used = vec![eps; k - 1];

    let mut scene = Scene::new(
        a.g.iter()
            .enumerate()
            .map(|(i, &g)| PlaneSpec {
                scale: (i > 0).then(|| report.lambdas[i - 1]),
                central_b: (g >= 4).then(|| report.central_bs[i]),
                ..PlaneSpec::rhie(g)
            })
            .collect(),
    );
    if k > 1 && eps != 0.0 {
        scene.epsilons = vec![eps; k - 1];
    }
    let gs: Vec<String> = a.g.iter().map(|g| g.to_string()).collect();
    scene.note = Some(format!("built from g = {}", gs.join(" ")));

    ensure_dir(&a.out)?;
    save_scene(&scene, a.out.join("scene.json"))?;
    let mut report_json = serde_json::to_value(&report).expect("report serializes");
    report_json["count_at_epsilon"] = json!(set.count());
    let text = serde_json::to_string_pretty(&report_json).expect("report serializes") + "\n";
    write_file(&a.out.join("report.json"), &text)?;
    emit(
        out,
        &format!(
            "expected={expected} count_eps0={} epsilon={} count={}\n",
            report.achieved_count_eps0,
            num(eps),
            set.count()
        ),
    )
}

fn cmd_cosmo(a: &CosmoArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let c = Cosmology::new(a.omega_m, a.omega_lambda)?;
    let zr = PlaneRedshifts::new(a.redshifts.clone())?;
    let params = plane_parameters(&c, &zr)?;
    let mut s = String::from("plane,z,d_C,d_M,d_A,beta,epsilon\n");
    for (i, &z) in zr.planes().iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{z},{},{},{},{},{}",
            i + 1,
            num(comoving_distance(&c, 0.0, z)?),
            num(transverse_distance(&c, 0.0, z)?),
            num(angular_diameter(&c, 0.0, z)?),
            num(params.betas[i]),
            num(params.epsilons[i])
        );
    }
    let zs = zr.source();
    let _ = writeln!(
        s,
        "source,{zs},{},{},{},,",
        num(comoving_distance(&c, 0.0, zs)?),
        num(transverse_distance(&c, 0.0, zs)?),
        num(angular_diameter(&c, 0.0, zs)?)
    );
    if c.is_flat() {
        let mut all = vec![0.0];
        all.extend_from_slice(zr.all());
        let mut worst = 0.0f64;
        for w in all.windows(3) {
            let whole = transverse_distance(&c, w[0], w[2])?;
            let parts = transverse_distance(&c, w[0], w[1])? + transverse_distance(&c, w[1], w[2])?;
            worst = worst.max((whole - parts).abs());
        }
        let verdict = if worst <= 1e-9 { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "additivity: {verdict} (max deviation {worst:e})");
    }
    if let Some(target) = a.realize {
        let mode = match a.mode {
            ModeArg::Foreground => RealizationMode::Foreground,
            ModeArg::Background => RealizationMode::Background,
        };
        let r = realize_small_epsilon(&c, &zr, target, mode)?;
        let zs: Vec<String> = r.redshifts.all().iter().map(|z| num(*z)).collect();
        let fs: Vec<String> = r.mass_factors.iter().map(|f| num(*f)).collect();
        let _ = writeln!(
            s,
            "realized: redshifts={} epsilon={} mass_factors={}",
            zs.join(" "),
            num(r.epsilon),
            fs.join(" ")
        );
    }
    emit(out, &s)
}

fn cmd_bounds(a: &BoundsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let b = image_count_bounds(&a.g)?;
    emit(out, &format!("{}\n", bounds_text(&b)))
}

fn cmd_tune(a: &TuneArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let b = tune_central_mass(a.g)?;
    emit(
        out,
        &format!(
            "g={} polygon_radius={} central_b={}\n",
            a.g,
            num(polygon_radius(a.g)),
            num(b)
        ),
    )
}

fn cmd_eps_scan(a: &EpsScanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (scene, lens) = load_scene(&a.scene)?;
    if lens.plane_count() < 2 {
        return Err(CliError::Usage("eps-scan needs at least two planes".into()));
    }
    if a.steps == 0 || a.to.is_nan() || a.from.is_nan() || a.to < a.from {
        return Err(CliError::Usage("need steps >= 1 and --to >= --from".into()));
    }
    let mut opts = scene.solve_options()?;
    if let Some(n) = a.grid {
        opts.grid_n = n;
    }
    let mut s = String::from("epsilon,images,suspects,min_abs_det\n");
    for i in 0..=a.steps {
        let eps = a.from + (a.to - a.from) * i as f64 / a.steps as f64;
        let set = find_images(&lens.clone().with_uniform_epsilon(eps)?, &opts)?;
        let _ = writeln!(
            s,
            "{},{},{},{}",
            num(eps),
            set.count(),
            set.suspects.len(),
            num(set.min_abs_det())
        );
    }
    emit(out, &s)
}
