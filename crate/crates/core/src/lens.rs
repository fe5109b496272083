//! Domain types for multiplane point-mass lenses, the deflection field,
//! backward ray tracing and the full-system residual and Jacobian.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};
use crate::linalg::{BlockMatrix, DenseMatrix, Mat2};

/// A ray closer than this to a point mass counts as obstructed.
pub const EXCLUSION_RADIUS: f64 = 1e-9;

/// Angular position in a lens or source plane (dimensionless units).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanePoint {
    pub u: f64,
    pub v: f64,
}

impl PlanePoint {
    pub const ORIGIN: PlanePoint = PlanePoint { u: 0.0, v: 0.0 };

    pub const fn new(u: f64, v: f64) -> Self {
        PlanePoint { u, v }
    }

    /// Checked constructor rejecting NaN and infinities.
    pub fn try_new(u: f64, v: f64) -> Result<Self> {
        if u.is_finite() && v.is_finite() {
            Ok(PlanePoint { u, v })
        } else {
            Err(LensError::invalid(
                "point",
                format!("non-finite coordinates ({u}, {v})"),
            ))
        }
    }

    pub fn polar(r: f64, theta: f64) -> Self {
        PlanePoint::new(r * theta.cos(), r * theta.sin())
    }

    pub fn norm(&self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn norm_sq(&self) -> f64 {
        self.u * self.u + self.v * self.v
    }

    pub fn dist(&self, other: &PlanePoint) -> f64 {
        (*self - *other).norm()
    }

    pub fn dot(&self, other: &PlanePoint) -> f64 {
        self.u * other.u + self.v * other.v
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        PlanePoint::new(c * self.u - s * self.v, s * self.u + c * self.v)
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.u, self.v]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        PlanePoint::new(a[0], a[1])
    }

    pub fn transform(&self, m: &Mat2) -> Self {
        PlanePoint::from_array(m.mul_vec(self.as_array()))
    }
}

impl Add for PlanePoint {
    type Output = PlanePoint;
    fn add(self, rhs: PlanePoint) -> PlanePoint {
        PlanePoint::new(self.u + rhs.u, self.v + rhs.v)
    }
}

impl Sub for PlanePoint {
    type Output = PlanePoint;
    fn sub(self, rhs: PlanePoint) -> PlanePoint {
        PlanePoint::new(self.u - rhs.u, self.v - rhs.v)
    }
}

impl Neg for PlanePoint {
    type Output = PlanePoint;
    fn neg(self) -> PlanePoint {
        PlanePoint::new(-self.u, -self.v)
    }
}

impl Mul<f64> for PlanePoint {
    type Output = PlanePoint;
    fn mul(self, s: f64) -> PlanePoint {
        PlanePoint::new(self.u * s, self.v * s)
    }
}

impl fmt::Display for PlanePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

/// One deflector: its position and Einstein radius. `b^2` plays the role of mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    pub position: PlanePoint,
    pub einstein_radius: f64,
}

impl PointMass {
    pub fn new(position: PlanePoint, einstein_radius: f64) -> Result<Self> {
        if !position.is_finite() {
            return Err(LensError::invalid("position", "non-finite mass position"));
        }
        if !(einstein_radius >= 0.0 && einstein_radius.is_finite()) {
            return Err(LensError::invalid(
                "einstein_radius",
                format!("must be finite and >= 0, got {einstein_radius}"),
            ));
        }
        Ok(PointMass {
            position,
            einstein_radius,
        })
    }

    pub fn mass(&self) -> f64 {
        self.einstein_radius * self.einstein_radius
    }
}

/// The point masses sharing one lens plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LensPlane {
    masses: Vec<PointMass>,
}

impl LensPlane {
    pub fn new(masses: Vec<PointMass>) -> Result<Self> {
        if masses.is_empty() {
            return Err(LensError::invalid(
                "masses",
                "a lens plane needs at least one mass",
            ));
        }
        for m in &masses {
            PointMass::new(m.position, m.einstein_radius)?;
        }
        for i in 0..masses.len() {
            for j in (i + 1)..masses.len() {
                if masses[i].position.dist(&masses[j].position) <= 0.0 {
                    return Err(LensError::invalid(
                        "masses",
                        format!("masses {i} and {j} share position {}", masses[i].position),
                    ));
                }
            }
        }
        Ok(LensPlane { masses })
    }

    pub fn masses(&self) -> &[PointMass] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().map(PointMass::mass).sum()
    }

    pub fn is_massless(&self) -> bool {
        self.masses.iter().all(|m| m.einstein_radius == 0.0)
    }

    /// Largest distance of a mass from the origin.
    pub fn outer_radius(&self) -> f64 {
        self.masses
            .iter()
            .map(|m| m.position.norm())
            .fold(0.0, f64::max)
    }

    pub fn centroid(&self) -> PlanePoint {
        let n = self.masses.len() as f64;
        let sum = self
            .masses
            .iter()
            .fold(PlanePoint::ORIGIN, |acc, m| acc + m.position);
        sum * (1.0 / n)
    }

    /// Scales positions and Einstein radii by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(LensError::invalid(
                "lambda",
                format!("must be > 0, got {lambda}"),
            ));
        }
        Ok(LensPlane {
            masses: self
                .masses
                .iter()
                .map(|m| PointMass {
                    position: m.position * lambda,
                    einstein_radius: m.einstein_radius * lambda,
                })
                .collect(),
        })
    }

    pub fn rotated(&self, angle: f64) -> Self {
        LensPlane {
            masses: self
                .masses
                .iter()
                .map(|m| PointMass {
                    position: m.position.rotated(angle),
                    einstein_radius: m.einstein_radius,
                })
                .collect(),
        }
    }

    /// Index of the first massive deflector within the exclusion radius of `x`.
    fn obstruction(&self, x: PlanePoint) -> Option<usize> {
        self.masses
            .iter()
            .position(|m| m.einstein_radius > 0.0 && (x - m.position).norm() <= EXCLUSION_RADIUS)
    }
}

/// Bending angle of one plane: `sum b^2 (x - xi) / |x - xi|^2`.
pub fn deflection(plane: &LensPlane, x: PlanePoint) -> Result<PlanePoint> {
    deflection_in(plane, 0, x)
}

fn deflection_in(plane: &LensPlane, plane_index: usize, x: PlanePoint) -> Result<PlanePoint> {
    if let Some(mass) = plane.obstruction(x) {
        return Err(LensError::Obstruction {
            plane: plane_index,
            mass,
        });
    }
    let mut out = PlanePoint::ORIGIN;
    for m in plane.masses.iter().filter(|m| m.einstein_radius > 0.0) {
        let d = x - m.position;
        out = out + d * (m.mass() / d.norm_sq());
    }
    Ok(out)
}

/// Derivative of the bending angle: `sum b^2 (|d|^2 I - 2 d d^T) / |d|^4`.
pub fn deflection_jacobian(plane: &LensPlane, x: PlanePoint) -> Result<Mat2> {
    deflection_with_jacobian(plane, 0, x).map(|(_, j)| j)
}

fn deflection_with_jacobian(
    plane: &LensPlane,
    plane_index: usize,
    x: PlanePoint,
) -> Result<(PlanePoint, Mat2)> {
    if let Some(mass) = plane.obstruction(x) {
        return Err(LensError::Obstruction {
            plane: plane_index,
            mass,
        });
    }
    let mut alpha = PlanePoint::ORIGIN;
    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
    for m in plane.masses.iter().filter(|m| m.einstein_radius > 0.0) {
        let dx = x - m.position;
        let r2 = dx.norm_sq();
        let w = m.mass() / r2;
        alpha = alpha + dx * w;
        let w2 = w / r2;
        let diff = dx.v * dx.v - dx.u * dx.u;
        a += w2 * diff;
        d -= w2 * diff;
        b -= 2.0 * w2 * dx.u * dx.v;
    }
    Ok((alpha, Mat2::new(a, b, b, d)))
}

/// Ordered lens planes with their couplings and a source position.
///
/// `epsilons[i]` couples plane `i + 2` (one-based); the first plane carries
/// no coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplaneLens {
    planes: Vec<LensPlane>,
    betas: Vec<f64>,
    epsilons: Vec<f64>,
    source: PlanePoint,
}

impl MultiplaneLens {
    /// Lens with unit betas, zero couplings.
    pub fn new(planes: Vec<LensPlane>, source: PlanePoint) -> Result<Self> {
        if planes.is_empty() {
            return Err(LensError::invalid(
                "planes",
                "at least one lens plane is required",
            ));
        }
        if !source.is_finite() {
            return Err(LensError::invalid("source", "non-finite source position"));
        }
        let k = planes.len();
        Ok(MultiplaneLens {
            planes,
            betas: vec![1.0; k],
            epsilons: vec![0.0; k - 1],
            source,
        })
    }

    pub fn single(plane: LensPlane, source: PlanePoint) -> Result<Self> {
        Self::new(vec![plane], source)
    }

    pub fn with_betas(mut self, betas: Vec<f64>) -> Result<Self> {
        if betas.len() != self.planes.len() {
            return Err(LensError::LengthMismatch {
                field: "betas",
                expected: self.planes.len(),
                actual: betas.len(),
            });
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(LensError::invalid("betas", format!("must be > 0, got {b}")));
        }
        self.betas = betas;
        Ok(self)
    }

    /// Replaces the couplings of planes 2..K (`K - 1` values).
    pub fn with_epsilons(mut self, epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.len() != self.planes.len() - 1 {
            return Err(LensError::LengthMismatch {
                field: "epsilons",
                expected: self.planes.len() - 1,
                actual: epsilons.len(),
            });
        }
        if let Some(e) = epsilons.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(LensError::invalid(
                "epsilons",
                format!("must be >= 0, got {e}"),
            ));
        }
        self.epsilons = epsilons;
        Ok(self)
    }

    pub fn with_uniform_epsilon(self, eps: f64) -> Result<Self> {
        let n = self.planes.len() - 1;
        self.with_epsilons(vec![eps; n])
    }

    pub fn with_source(mut self, source: PlanePoint) -> Result<Self> {
        if !source.is_finite() {
            return Err(LensError::invalid("source", "non-finite source position"));
        }
        self.source = source;
        Ok(self)
    }

    pub fn planes(&self) -> &[LensPlane] {
        &self.planes
    }

    pub fn plane_count(&self) -> usize {
        self.planes.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Couplings of planes 2..K.
    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    /// Coupling of the plane with zero-based index `i`; zero for the first plane.
    pub fn epsilon(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.epsilons[i - 1]
        }
    }

    pub fn source(&self) -> PlanePoint {
        self.source
    }

    pub fn mass_counts(&self) -> Vec<usize> {
        self.planes.iter().map(LensPlane::len).collect()
    }

    pub fn has_coupling(&self) -> bool {
        self.epsilons.iter().any(|&e| e != 0.0)
    }

    pub fn outer_radius(&self) -> f64 {
        self.planes
            .iter()
            .map(LensPlane::outer_radius)
            .fold(0.0, f64::max)
    }

    /// Every plane and the source scaled by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let planes = self
            .planes
            .iter()
            .map(|p| p.scaled(lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiplaneLens {
            planes,
            betas: self.betas.clone(),
            epsilons: self.epsilons.clone(),
            source: self.source * lambda,
        })
    }

    /// The first `n` planes as an uncoupled system aimed at `target`.
    pub fn prefix(&self, n: usize, target: PlanePoint) -> Result<Self> {
        if n == 0 || n > self.planes.len() {
            return Err(LensError::invalid(
                "prefix",
                format!("cannot take {n} planes"),
            ));
        }
        MultiplaneLens::new(self.planes[..n].to_vec(), target)?.with_betas(self.betas[..n].to_vec())
    }

    /// The first `n` planes with their couplings, aimed at `target`: solutions
    /// are the plane-1 positions whose rays reach `target` in plane `n + 1`.
    pub fn head(&self, n: usize, target: PlanePoint) -> Result<Self> {
        self.prefix(n, target)?
            .with_epsilons(self.epsilons[..n - 1].to_vec())
    }

    /// Planes `start..K` as their own system; the first of them loses its coupling.
    pub fn tail(&self, start: usize) -> Result<Self> {
        if start >= self.planes.len() {
            return Err(LensError::invalid(
                "tail",
                format!("no planes from index {start}"),
            ));
        }
        let eps = self.epsilons[start..].to_vec();
        MultiplaneLens::new(self.planes[start..].to_vec(), self.source)?
            .with_betas(self.betas[start..].to_vec())?
            .with_epsilons(eps)
    }

    /// Backward ray propagation returning the source-plane hit and, when
    /// requested, the lens-map Jacobian. Does not allocate.
    pub(crate) fn propagate(
        &self,
        x1: PlanePoint,
        want_jacobian: bool,
    ) -> Result<(PlanePoint, Mat2)> {
        let mut prev = x1;
        let mut cur = x1;
        let mut d_prev = Mat2::ZERO;
        let mut d_cur = Mat2::IDENTITY;
        for (i, plane) in self.planes.iter().enumerate() {
            let eps = self.epsilon(i);
            let beta = self.betas[i];
            let next;
            if want_jacobian {
                let (alpha, da) = deflection_with_jacobian(plane, i, cur)?;
                next = cur + (cur - prev) * eps - alpha * beta;
                let d_next = d_cur.scale(1.0 + eps) - d_prev.scale(eps) - (da * d_cur).scale(beta);
                d_prev = d_cur;
                d_cur = d_next;
            } else {
                let alpha = deflection_in(plane, i, cur)?;
                next = cur + (cur - prev) * eps - alpha * beta;
            }
            prev = cur;
            cur = next;
        }
        if !cur.is_finite() || (want_jacobian && !d_cur.is_finite()) {
            return Err(LensError::NonFinite("lens map"));
        }
        Ok((cur, d_cur))
    }

    /// All impact points and the source-plane hit.
    fn impacts(&self, x1: PlanePoint) -> Result<(Vec<PlanePoint>, PlanePoint)> {
        let mut xs = Vec::with_capacity(self.planes.len());
        let mut prev = x1;
        let mut cur = x1;
        for (i, plane) in self.planes.iter().enumerate() {
            xs.push(cur);
            let alpha = deflection_in(plane, i, cur)?;
            let next = cur + (cur - prev) * self.epsilon(i) - alpha * self.betas[i];
            prev = cur;
            cur = next;
        }
        if !cur.is_finite() {
            return Err(LensError::NonFinite("trace"));
        }
        Ok((xs, cur))
    }
}

/// A traced ray: impact points in planes 1..K and where it lands in the source plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayPath {
    pub impacts: Vec<PlanePoint>,
    pub source_hit: PlanePoint,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Parity {
    Positive,
    Negative,
}

impl Parity {
    pub fn from_det(det: f64) -> Self {
        if det >= 0.0 {
            Parity::Positive
        } else {
            Parity::Negative
        }
    }

    pub fn sign(&self) -> i32 {
        match self {
            Parity::Positive => 1,
            Parity::Negative => -1,
        }
    }
}

/// Critical-point type of an image in the single-plane time-delay surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MorseType {
    Minimum,
    Saddle,
    Maximum,
    Unavailable,
}

impl MorseType {
    pub fn as_str(&self) -> &'static str {
        match self {
            MorseType::Minimum => "minimum",
            MorseType::Saddle => "saddle",
            MorseType::Maximum => "maximum",
            MorseType::Unavailable => "unavailable",
        }
    }
}

/// A solved ray path with its local lens-map data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LensedImage {
    pub path: RayPath,
    pub lens_map_jacobian_det: f64,
    pub parity: Parity,
    pub morse_type: MorseType,
}

impl LensedImage {
    pub fn position(&self) -> PlanePoint {
        self.path.impacts[0]
    }
}

/// Traces a ray backward from plane 1 through every plane to the source plane.
pub fn trace(lens: &MultiplaneLens, x1: PlanePoint) -> Result<RayPath> {
    let (impacts, hit) = lens.impacts(x1)?;
    Ok(RayPath {
        impacts,
        source_hit: hit,
        residual_norm: hit.dist(&lens.source()),
    })
}

/// The lensing map from plane 1 to the source plane.
pub fn lens_map(lens: &MultiplaneLens, x1: PlanePoint) -> Result<PlanePoint> {
    lens.propagate(x1, false).map(|(p, _)| p)
}

/// Jacobian of the lensing map, via the recursion
/// `D_{i+1} = (1 + e_i) D_i - e_i D_{i-1} - b_i Da_i(x_i) D_i` with `D_1 = I`, `D_0 = 0`.
pub fn lens_map_jacobian(lens: &MultiplaneLens, x1: PlanePoint) -> Result<Mat2> {
    lens.propagate(x1, true).map(|(_, d)| d)
}

/// Lensing map and its Jacobian in one pass.
pub fn lens_map_with_jacobian(lens: &MultiplaneLens, x1: PlanePoint) -> Result<(PlanePoint, Mat2)> {
    lens.propagate(x1, true)
}

fn check_len(lens: &MultiplaneLens, xs: &[PlanePoint]) -> Result<()> {
    if xs.len() != lens.plane_count() {
        return Err(LensError::LengthMismatch {
            field: "impact points",
            expected: lens.plane_count(),
            actual: xs.len(),
        });
    }
    Ok(())
}

/// Stacked residuals `f_i = x_i + e_i (x_i - x_{i-1}) - b_i a_i(x_i) - x_{i+1}`,
/// with `x_{K+1}` the source. Flattened as `[f_1.u, f_1.v, f_2.u, ...]`.
pub fn system_residual(lens: &MultiplaneLens, xs: &[PlanePoint]) -> Result<Vec<f64>> {
    check_len(lens, xs)?;
    let k = lens.plane_count();
    let mut out = Vec::with_capacity(2 * k);
    for i in 0..k {
        let alpha = deflection_in(&lens.planes()[i], i, xs[i])?;
        let prev = if i == 0 { xs[0] } else { xs[i - 1] };
        let next = if i + 1 == k { lens.source() } else { xs[i + 1] };
        let f = xs[i] + (xs[i] - prev) * lens.epsilon(i) - alpha * lens.betas()[i] - next;
        out.push(f.u);
        out.push(f.v);
    }
    Ok(out)
}

/// Block-tridiagonal system Jacobian as a `K x K` grid of 2x2 blocks.
pub fn system_jacobian_blocks(lens: &MultiplaneLens, xs: &[PlanePoint]) -> Result<BlockMatrix> {
    check_len(lens, xs)?;
    let k = lens.plane_count();
    let mut blocks = vec![DenseMatrix::zeros(2, 2); k * k];
    let put = |blocks: &mut Vec<DenseMatrix>, i: usize, j: usize, m: Mat2| {
        let mut b = DenseMatrix::zeros(2, 2);
        b.set_block(0, 0, &m);
        blocks[i * k + j] = b;
    };
    for (i, &x) in xs.iter().enumerate() {
        let (_, da) = deflection_with_jacobian(&lens.planes()[i], i, x)?;
        let eps = lens.epsilon(i);
        put(
            &mut blocks,
            i,
            i,
            Mat2::scaled_identity(1.0 + eps) - da.scale(lens.betas()[i]),
        );
        if i + 1 < k {
            put(&mut blocks, i, i + 1, Mat2::scaled_identity(-1.0));
        }
        if i > 0 && eps != 0.0 {
            put(&mut blocks, i, i - 1, Mat2::scaled_identity(-eps));
        }
    }
    BlockMatrix::new(vec![2; k], vec![2; k], blocks)
}

/// Dense `2K x 2K` Jacobian of [`system_residual`].
pub fn system_jacobian(lens: &MultiplaneLens, xs: &[PlanePoint]) -> Result<DenseMatrix> {
    Ok(system_jacobian_blocks(lens, xs)?.to_dense())
}
