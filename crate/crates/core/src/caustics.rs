//! Critical curves and caustics.
//!
//! Critical curves are extracted with marching squares on the determinant of
//! the lens-map Jacobian, each crossing refined by bisection along its cell
//! edge, and then mapped to the source plane. Caustics that coincide (several
//! critical components landing on one caustic) are grouped by Hausdorff
//! distance.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LensError, Result};
use crate::lens::{lens_map, lens_map_jacobian, MultiplaneLens, PlanePoint};
use crate::solver::Window;

/// Minimum lattice size for [`critical_curves`].
pub const MIN_GRID: usize = 64;
const EDGE_BISECTIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polyline {
    pub points: Vec<PlanePoint>,
    pub closed: bool,
    /// Set when an open end lies on the window boundary.
    pub leaves_window: bool,
}

impl Polyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = (PlanePoint, PlanePoint)> + '_ {
        let n = self.points.len();
        let extra = usize::from(self.closed && n > 2);
        (0..(n.saturating_sub(1) + extra)).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        self.segments().map(|(a, b)| a.dist(&b)).collect()
    }

    pub fn bounding_box(&self) -> Option<(PlanePoint, PlanePoint)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (
                PlanePoint::new(lo.u.min(p.u), lo.v.min(p.v)),
                PlanePoint::new(hi.u.max(p.u), hi.v.max(p.v)),
            )
        }))
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                d = d.max(a.dist(b));
            }
        }
        d
    }

    /// Distance from `p` to the nearest point of the polyline.
    pub fn distance_to(&self, p: PlanePoint) -> f64 {
        if self.points.len() == 1 {
            return p.dist(&self.points[0]);
        }
        self.segments()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn point_segment_distance(p: PlanePoint, a: PlanePoint, b: PlanePoint) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_sq();
    if l2 == 0.0 {
        return p.dist(&a);
    }
    let t = ((p - a).dot(&ab) / l2).clamp(0.0, 1.0);
    p.dist(&(a + ab * t))
}

/// Symmetric Hausdorff distance between two polylines, vertices against segments.
pub fn hausdorff(a: &Polyline, b: &Polyline) -> f64 {
    let directed = |x: &Polyline, y: &Polyline| {
        x.points
            .iter()
            .map(|p| y.distance_to(*p))
            .fold(0.0f64, f64::max)
    };
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    directed(a, b).max(directed(b, a))
}

/// Whether the symmetric Hausdorff distance is at most `tol`, exiting early.
pub fn hausdorff_within(a: &Polyline, b: &Polyline, tol: f64) -> bool {
    let (Some((alo, ahi)), Some((blo, bhi))) = (a.bounding_box(), b.bounding_box()) else {
        return false;
    };
    let box_gap = [
        (blo.u - ahi.u).max(alo.u - bhi.u),
        (blo.v - ahi.v).max(alo.v - bhi.v),
        (alo.u - blo.u).abs(),
        (alo.v - blo.v).abs(),
        (ahi.u - bhi.u).abs(),
        (ahi.v - bhi.v).abs(),
    ];
    // every box edge of one curve is attained by a vertex, so each must be near the other box
    if box_gap.iter().any(|g| *g > tol) {
        return false;
    }
    let directed = |x: &Polyline, y: &Polyline| x.points.iter().all(|p| y.distance_to(*p) <= tol);
    directed(a, b) && directed(b, a)
}

/// Critical curves, their caustics (index-aligned) and caustic multiplicity groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSet {
    pub critical: Vec<Polyline>,
    pub caustic: Vec<Polyline>,
    pub multiplicity_groups: Vec<Vec<usize>>,
}

impl CurveSet {
    pub fn multiplicities(&self) -> Vec<usize> {
        self.multiplicity_groups.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EdgeKey {
    /// Between nodes (i, j) and (i, j + 1).
    H(usize, usize),
    /// Between nodes (i, j) and (i + 1, j).
    V(usize, usize),
}

struct Lattice<'a> {
    lens: &'a MultiplaneLens,
    window: Window,
    n: usize,
    h: f64,
    values: Vec<f64>,
}

impl Lattice<'_> {
    fn node(&self, i: usize, j: usize) -> PlanePoint {
        PlanePoint::new(
            self.window.center.u - self.window.half_width + j as f64 * self.h,
            self.window.center.v - self.window.half_width + i as f64 * self.h,
        )
    }

    fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    fn endpoints(&self, e: EdgeKey) -> ((usize, usize), (usize, usize)) {
        match e {
            EdgeKey::H(i, j) => ((i, j), (i, j + 1)),
            EdgeKey::V(i, j) => ((i, j), (i + 1, j)),
        }
    }

    fn crosses(&self, e: EdgeKey) -> bool {
        let (a, b) = self.endpoints(e);
        let (fa, fb) = (self.value(a.0, a.1), self.value(b.0, b.1));
        fa.is_finite() && fb.is_finite() && ((fa < 0.0) != (fb < 0.0))
    }

    fn on_boundary(&self, e: EdgeKey) -> bool {
        let last = self.n - 1;
        match e {
            EdgeKey::H(i, _) => i == 0 || i == last,
            EdgeKey::V(_, j) => j == 0 || j == last,
        }
    }

    /// Zero of det along the edge: bisection, then linear interpolation.
    fn refine(&self, e: EdgeKey) -> PlanePoint {
        let (a, b) = self.endpoints(e);
        let (mut pa, mut pb) = (self.node(a.0, a.1), self.node(b.0, b.1));
        let (mut fa, mut fb) = (self.value(a.0, a.1), self.value(b.0, b.1));
        for _ in 0..EDGE_BISECTIONS {
            let pm = (pa + pb) * 0.5;
            let Ok(fm) = det_at(self.lens, pm) else { break };
            if (fm < 0.0) == (fa < 0.0) {
                pa = pm;
                fa = fm;
            } else {
                pb = pm;
                fb = fm;
            }
        }
        let t = if fa != fb {
            (fa / (fa - fb)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        pa + (pb - pa) * t
    }
}

fn det_at(lens: &MultiplaneLens, x: PlanePoint) -> Result<f64> {
    let d = lens_map_jacobian(lens, x)?.det();
    if d.is_finite() {
        Ok(d)
    } else {
        Err(LensError::NonFinite("jacobian determinant"))
    }
}

/// Zero set of the lens-map Jacobian determinant inside `window`, sampled on a
/// `grid_n x grid_n` lattice. Cells with an obstructed corner are skipped.
pub fn critical_curves(
    lens: &MultiplaneLens,
    window: &Window,
    grid_n: usize,
) -> Result<Vec<Polyline>> {
    if grid_n < MIN_GRID {
        return Err(LensError::invalid(
            "grid_n",
            format!("need at least {MIN_GRID}, got {grid_n}"),
        ));
    }
    if window.half_width.is_nan() || window.half_width <= 0.0 {
        return Err(LensError::invalid("window", "half width must be positive"));
    }
    let n = grid_n;
    let h = 2.0 * window.half_width / (n - 1) as f64;
    let mut lattice = Lattice {
        lens,
        window: *window,
        n,
        h,
        values: Vec::new(),
    };
    lattice.values = (0..n * n)
        .into_par_iter()
        .map(|idx| det_at(lens, lattice.node(idx / n, idx % n)).unwrap_or(f64::NAN))
        .collect();

    // segments per cell, as pairs of edge keys
    let mut links: BTreeMap<EdgeKey, Vec<EdgeKey>> = BTreeMap::new();
    let mut link = |a: EdgeKey, b: EdgeKey| {
        links.entry(a).or_default().push(b);
        links.entry(b).or_default().push(a);
    };
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let corners = [
                lattice.value(i, j),
                lattice.value(i, j + 1),
                lattice.value(i + 1, j + 1),
                lattice.value(i + 1, j),
            ];
            if corners.iter().any(|c| !c.is_finite()) {
                continue;
            }
            let bottom = EdgeKey::H(i, j);
            let right = EdgeKey::V(i, j + 1);
            let top = EdgeKey::H(i + 1, j);
            let left = EdgeKey::V(i, j);
            let crossing: Vec<EdgeKey> = [bottom, right, top, left]
                .into_iter()
                .filter(|e| lattice.crosses(*e))
                .collect();
            match crossing.len() {
                2 => link(crossing[0], crossing[1]),
                4 => {
                    let centre = lattice.node(i, j) + PlanePoint::new(0.5 * h, 0.5 * h);
                    let fc = det_at(lens, centre).unwrap_or(corners.iter().sum::<f64>() * 0.25);
                    let neg_c = fc < 0.0;
                    // corners whose sign differs from the centre are cut off
                    let adj = [(bottom, left), (bottom, right), (right, top), (top, left)];
                    for (c, (ea, eb)) in corners.iter().zip(adj) {
                        if (*c < 0.0) != neg_c {
                            link(ea, eb);
                        }
                    }
                }
                _ => {}
            }
        }
    }

    let mut points: BTreeMap<EdgeKey, PlanePoint> = BTreeMap::new();
    let keys: Vec<EdgeKey> = links.keys().copied().collect();
    let refined: Vec<PlanePoint> = keys.par_iter().map(|e| lattice.refine(*e)).collect();
    points.extend(keys.iter().copied().zip(refined));

    let mut visited: BTreeMap<EdgeKey, bool> = keys.iter().map(|k| (*k, false)).collect();
    let mut curves = Vec::new();
    let walk = |start: EdgeKey, visited: &mut BTreeMap<EdgeKey, bool>| -> Vec<EdgeKey> {
        let mut chain = vec![start];
        visited.insert(start, true);
        let mut cur = start;
        loop {
            let next = links[&cur].iter().copied().find(|e| !visited[e]);
            match next {
                Some(e) => {
                    visited.insert(e, true);
                    chain.push(e);
                    cur = e;
                }
                None => break,
            }
        }
        chain
    };
    // open chains first, starting from their ends
    for &k in &keys {
        if !visited[&k] && links[&k].len() == 1 {
            let chain = walk(k, &mut visited);
            let leaves =
                lattice.on_boundary(chain[0]) || lattice.on_boundary(*chain.last().unwrap());
            curves.push(make_polyline(&chain, &points, false, leaves));
        }
    }
    for &k in &keys {
        if !visited[&k] {
            let chain = walk(k, &mut visited);
            let closed = chain.len() > 2 && links[chain.last().unwrap()].contains(&chain[0]);
            curves.push(make_polyline(&chain, &points, closed, false));
        }
    }
    curves.retain(|c| c.points.len() >= 2);
    let leaving = curves.iter().filter(|c| c.leaves_window).count();
    if leaving > 0 {
        log::warn!("{leaving} critical curve(s) leave the window; kept as open polylines");
    }
    Ok(curves)
}

fn make_polyline(
    chain: &[EdgeKey],
    points: &BTreeMap<EdgeKey, PlanePoint>,
    closed: bool,
    leaves: bool,
) -> Polyline {
    let mut pts: Vec<PlanePoint> = Vec::with_capacity(chain.len());
    for e in chain {
        let p = points[e];
        if pts.last() != Some(&p) {
            pts.push(p);
        }
    }
    if closed && pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    Polyline {
        points: pts,
        closed,
        leaves_window: leaves,
    }
}

/// Maps every critical polyline through the lensing map. Obstructed vertices
/// are dropped with a warning; the output stays index-aligned with the input.
pub fn map_to_caustics(lens: &MultiplaneLens, critical: &[Polyline]) -> Vec<Polyline> {
    critical
        .iter()
        .map(|c| {
            let mut dropped = 0;
            let points: Vec<PlanePoint> = c
                .points
                .iter()
                .filter_map(|p| match lens_map(lens, *p) {
                    Ok(q) => Some(q),
                    Err(_) => {
                        dropped += 1;
                        None
                    }
                })
                .collect();
            if dropped > 0 {
                log::warn!("dropped {dropped} obstructed vertices while mapping a critical curve");
            }
            Polyline {
                points,
                closed: c.closed && dropped == 0,
                leaves_window: c.leaves_window,
            }
        })
        .collect()
}

/// Three times the median caustic segment length.
pub fn default_group_tolerance(caustics: &[Polyline]) -> f64 {
    let mut lengths: Vec<f64> = caustics
        .iter()
        .flat_map(Polyline::segment_lengths)
        .collect();
    if lengths.is_empty() {
        return 0.0;
    }
    lengths.sort_by(|a, b| a.total_cmp(b));
    3.0 * lengths[lengths.len() / 2]
}

/// Single-linkage partition of the caustics: two caustics are linked when
/// their symmetric Hausdorff distance is at most `tol`.
pub fn group_by_caustic(caustics: &[Polyline], tol: f64) -> Vec<Vec<usize>> {
    let n = caustics.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let linked: Vec<(usize, usize)> = pairs
        .into_par_iter()
        .filter(|&(i, j)| hausdorff_within(&caustics[i], &caustics[j], tol))
        .collect();
    for (i, j) in linked {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        parent[a.max(b)] = a.min(b);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Critical curves, caustics and multiplicity groups (default tolerance).
pub fn compute_curves(lens: &MultiplaneLens, window: &Window, grid_n: usize) -> Result<CurveSet> {
    let critical = critical_curves(lens, window, grid_n)?;
    let caustic = map_to_caustics(lens, &critical);
    let tol = default_group_tolerance(&caustic);
    let multiplicity_groups = group_by_caustic(&caustic, tol);
    Ok(CurveSet {
        critical,
        caustic,
        multiplicity_groups,
    })
}
