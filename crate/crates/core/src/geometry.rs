//! Geometry of constant-curvature manifolds embedded in their ambient space.
//!
//! A manifold of dimension `d` is the level set `{x ∈ R^{d+1} : <x, x> = 1/κ}`.
//! For `κ = +1` the scalar product is the Euclidean dot product and the level
//! set is the unit hypersphere. For `κ = -1` it is the pseudo-Euclidean product
//! with metric `diag(1, ..., 1, -1)`; we keep only the upper sheet of the
//! hyperboloid (last coordinate positive).
//!
//! The slice-based functions are the working API used by the training code;
//! [`AmbientPoint`] and [`TangentVector`] are validated wrappers for callers
//! that want the invariants enforced once at construction.

use std::fmt;
use std::ops::Deref;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|<x, x> - 1/κ|`, scaled by `max(1, ‖x‖²)`, for a point to
/// count as lying on the manifold.
pub const ON_MANIFOLD_TOL: f64 = 1e-6;

/// Tolerance on `|<x, v>|`, scaled by `1 + ‖x‖‖v‖`, for `v` to count as
/// tangent at `x`.
pub const TANGENT_TOL: f64 = 1e-6;

/// Sign of the curvature. Only the unit sphere and the unit hyperboloid are
/// supported; any other magnitude only rescales the representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Curvature {
    Spherical,
    Hyperbolic,
}

impl Curvature {
    pub fn new(kappa: f64) -> Result<Self> {
        if kappa == 1.0 {
            Ok(Curvature::Spherical)
        } else if kappa == -1.0 {
            Ok(Curvature::Hyperbolic)
        } else {
            Err(Error::Domain(format!(
                "curvature must be +1 or -1, got {kappa}"
            )))
        }
    }

    pub fn kappa(self) -> f64 {
        match self {
            Curvature::Spherical => 1.0,
            Curvature::Hyperbolic => -1.0,
        }
    }

    /// The value `1/κ` of the self scalar product on the manifold.
    pub fn level(self) -> f64 {
        1.0 / self.kappa()
    }
}

impl TryFrom<f64> for Curvature {
    type Error = Error;

    fn try_from(kappa: f64) -> Result<Self> {
        Curvature::new(kappa)
    }
}

impl From<Curvature> for f64 {
    fn from(k: Curvature) -> f64 {
        k.kappa()
    }
}

impl fmt::Display for Curvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Curvature::Spherical => write!(f, "+1"),
            Curvature::Hyperbolic => write!(f, "-1"),
        }
    }
}

/// A point of the ambient space `R^{d+1}`, with `d ≥ 1` and finite entries.
///
/// It need not lie on the manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint(Vec<f64>);

impl AmbientPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Dimension(format!(
                "ambient points need at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("coordinate {i} is not finite")));
        }
        Ok(AmbientPoint(coords))
    }

    /// The base point `(0, ..., 0, 1)` shared by the sphere and the
    /// hyperboloid of manifold dimension `dim`.
    pub fn origin(dim: usize) -> Self {
        let mut coords = vec![0.0; dim + 1];
        coords[dim] = 1.0;
        AmbientPoint(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for AmbientPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A direction in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: AmbientPoint,
    direction: Vec<f64>,
}

impl TangentVector {
    /// Checks that `base` lies on the manifold and `direction` is tangent to it.
    pub fn new(base: AmbientPoint, direction: Vec<f64>, k: Curvature) -> Result<Self> {
        check_on_manifold(&base, k)?;
        check_tangent(&base, &direction, k)?;
        Ok(TangentVector { base, direction })
    }

    pub fn base(&self) -> &AmbientPoint {
        &self.base
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// Length of the direction under the manifold metric.
    pub fn norm(&self, k: Curvature) -> f64 {
        inner_unchecked(&self.direction, &self.direction, k)
            .max(0.0)
            .sqrt()
    }
}

/// Width `ς > 0` of the membership function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MembershipWidth(f64);

impl MembershipWidth {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(MembershipWidth(sigma))
        } else {
            Err(Error::Domain(format!(
                "membership width must be positive, got {sigma}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for MembershipWidth {
    fn default() -> Self {
        MembershipWidth(5.0)
    }
}

impl TryFrom<f64> for MembershipWidth {
    type Error = Error;

    fn try_from(sigma: f64) -> Result<Self> {
        MembershipWidth::new(sigma)
    }
}

impl From<MembershipWidth> for f64 {
    fn from(w: MembershipWidth) -> f64 {
        w.0
    }
}

fn check_same_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "vectors have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// The scalar product without the length check. Panics in debug builds on
/// mismatched lengths.
#[inline]
pub fn inner_unchecked(x: &[f64], y: &[f64], k: Curvature) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    match k {
        Curvature::Spherical => dot,
        Curvature::Hyperbolic => {
            let last = x.len() - 1;
            dot - 2.0 * x[last] * y[last]
        }
    }
}

/// Scalar product of the ambient space selected by `k`.
pub fn ccm_inner(x: &[f64], y: &[f64], k: Curvature) -> Result<f64> {
    check_same_len(x, y)?;
    if x.is_empty() {
        return Err(Error::Dimension("empty vectors".into()));
    }
    Ok(inner_unchecked(x, y, k))
}

fn euclidean_norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum()
}

/// Signed deviation `<z, z> - 1/κ` from the manifold.
pub fn level_deviation(z: &[f64], k: Curvature) -> f64 {
    inner_unchecked(z, z, k) - k.level()
}

pub fn is_on_manifold(x: &[f64], k: Curvature) -> bool {
    if x.len() < 2 || x.iter().any(|c| !c.is_finite()) {
        return false;
    }
    let scale = euclidean_norm_sq(x).max(1.0);
    let ok = level_deviation(x, k).abs() <= ON_MANIFOLD_TOL * scale;
    match k {
        Curvature::Spherical => ok,
        Curvature::Hyperbolic => ok && x[x.len() - 1] > 0.0,
    }
}

pub fn check_on_manifold(x: &[f64], k: Curvature) -> Result<()> {
    if is_on_manifold(x, k) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "point is off the κ={k} manifold (<x,x> - 1/κ = {:.3e})",
            level_deviation(x, k)
        )))
    }
}

fn check_tangent(base: &[f64], v: &[f64], k: Curvature) -> Result<()> {
    check_same_len(base, v)?;
    let dot = inner_unchecked(base, v, k);
    let scale = 1.0 + euclidean_norm_sq(base).sqrt() * euclidean_norm_sq(v).sqrt();
    if dot.abs() > TANGENT_TOL * scale {
        return Err(Error::Domain(format!(
            "direction is not tangent at the base point (<x,v> = {dot:.3e})"
        )));
    }
    Ok(())
}

/// Geodesic distance between two on-manifold points.
///
/// Evaluated through the chordal forms `2·atan2(‖x−y‖, ‖x+y‖)` (sphere) and
/// `2·asinh(‖x−y‖_L / 2)` (hyperboloid), which equal `arccos(<x,y>)` and
/// `arccosh(−<x,y>)` on the manifold but keep full precision near zero.
pub fn geodesic_distance(x: &[f64], y: &[f64], k: Curvature) -> Result<f64> {
    check_same_len(x, y)?;
    check_on_manifold(x, k)?;
    check_on_manifold(y, k)?;
    Ok(distance_unchecked(x, y, k))
}

#[inline]
pub(crate) fn distance_unchecked(x: &[f64], y: &[f64], k: Curvature) -> f64 {
    match k {
        Curvature::Spherical => {
            let mut diff = 0.0;
            let mut sum = 0.0;
            for (a, b) in x.iter().zip(y) {
                diff += (a - b) * (a - b);
                sum += (a + b) * (a + b);
            }
            2.0 * diff.sqrt().atan2(sum.sqrt())
        }
        Curvature::Hyperbolic => {
            let last = x.len() - 1;
            let mut sq = 0.0;
            for (a, b) in x[..last].iter().zip(&y[..last]) {
                sq += (a - b) * (a - b);
            }
            let dt = x[last] - y[last];
            sq -= dt * dt;
            2.0 * (sq.max(0.0).sqrt() / 2.0).asinh()
        }
    }
}

/// Membership degree `exp(−(<z,z> − 1/κ)² / (2ς²))`, equal to 1 exactly on
/// the level set.
pub fn membership(z: &[f64], k: Curvature, width: MembershipWidth) -> f64 {
    let dev = level_deviation(z, k);
    let s = width.get();
    (-(dev * dev) / (2.0 * s * s)).exp()
}

/// Membership degree and its gradient with respect to `z`.
pub fn membership_with_grad(z: &[f64], k: Curvature, width: MembershipWidth) -> (f64, Vec<f64>) {
    let dev = level_deviation(z, k);
    let s2 = width.get() * width.get();
    let mu = (-(dev * dev) / (2.0 * s2)).exp();
    // d<z,z>/dz = 2Gz with G the metric.
    let scale = -mu * dev / s2 * 2.0;
    let mut grad: Vec<f64> = z.iter().map(|zi| scale * zi).collect();
    if k == Curvature::Hyperbolic {
        let last = grad.len() - 1;
        grad[last] = -grad[last];
    }
    (mu, grad)
}

/// Orthogonal projection onto the manifold.
///
/// Spherical case: radial normalisation. Hyperbolic case: pseudo-norm
/// normalisation `z / sqrt(−<z,z>)`, flipped onto the upper sheet if needed.
/// Zero vectors (sphere) and points with `<z,z> ≥ 0` (hyperboloid) are
/// rejected with [`Error::Unprojectable`].
pub fn project_to_ccm(z: &[f64], k: Curvature) -> Result<AmbientPoint> {
    if z.len() < 2 {
        return Err(Error::Dimension(format!(
            "ambient points need at least 2 coordinates, got {}",
            z.len()
        )));
    }
    let scale = projection_scale(z, k)?;
    AmbientPoint::new(z.iter().map(|c| c * scale).collect())
}

/// The signed factor `c` such that `c·z` is the projection of `z`.
fn projection_scale(z: &[f64], k: Curvature) -> Result<f64> {
    match k {
        Curvature::Spherical => {
            let n = euclidean_norm_sq(z).sqrt();
            if n > 0.0 && n.is_finite() {
                Ok(1.0 / n)
            } else {
                Err(Error::Unprojectable(format!(
                    "zero or non-finite vector (norm {n}) has no radial projection"
                )))
            }
        }
        Curvature::Hyperbolic => {
            let q = inner_unchecked(z, z, k);
            if q < 0.0 && q.is_finite() {
                let sign = if z[z.len() - 1] < 0.0 { -1.0 } else { 1.0 };
                Ok(sign / (-q).sqrt())
            } else {
                Err(Error::Unprojectable(format!(
                    "<z,z> = {q:.3e} is not negative, point lies outside the light cone"
                )))
            }
        }
    }
}

/// Vector-Jacobian product of [`project_to_ccm`] at `z`: maps a sensitivity
/// with respect to the projected point back to one with respect to `z`.
pub fn project_to_ccm_vjp(z: &[f64], k: Curvature, upstream: &[f64]) -> Result<Vec<f64>> {
    check_same_len(z, upstream)?;
    let scale = projection_scale(z, k)?;
    let zg = inner_unchecked(z, upstream, Curvature::Spherical);
    match k {
        Curvature::Spherical => {
            // (I - p pᵀ) g / ‖z‖ with p = z/‖z‖.
            let coef = zg * scale * scale;
            Ok(upstream
                .iter()
                .zip(z)
                .map(|(g, zi)| scale * (g - coef * zi))
                .collect())
        }
        Curvature::Hyperbolic => {
            // sign · (g/s + Gz (zᵀg) / s³), with scale = sign/s.
            let s = 1.0 / scale.abs();
            let sign = scale.signum();
            let coef = zg / (s * s * s);
            let last = z.len() - 1;
            Ok(upstream
                .iter()
                .zip(z)
                .enumerate()
                .map(|(i, (g, zi))| {
                    let gz = if i == last { -zi } else { *zi };
                    sign * (g / s + coef * gz)
                })
                .collect())
        }
    }
}

/// Places the point on the hyperboloid by keeping its spatial coordinates and
/// recomputing the last one as `sqrt(1 + ‖spatial‖²)`. Defined everywhere,
/// used as the fallback for points that [`project_to_ccm`] rejects.
pub fn lift_to_hyperboloid(z: &[f64]) -> Vec<f64> {
    let last = z.len() - 1;
    let mut out = z.to_vec();
    out[last] = (1.0 + euclidean_norm_sq(&z[..last])).sqrt();
    out
}

/// Vector-Jacobian product of [`lift_to_hyperboloid`].
pub fn lift_to_hyperboloid_vjp(z: &[f64], upstream: &[f64]) -> Vec<f64> {
    let last = z.len() - 1;
    let t = (1.0 + euclidean_norm_sq(&z[..last])).sqrt();
    let g_last = upstream[last];
    let mut out: Vec<f64> = z[..last]
        .iter()
        .zip(upstream)
        .map(|(zi, g)| g + g_last * zi / t)
        .collect();
    out.push(0.0);
    out
}

/// Exponential map at `t.base()` applied to `t.direction()`.
pub fn exp_map(t: &TangentVector, k: Curvature) -> Result<AmbientPoint> {
    AmbientPoint::new(exp_map_unchecked(t.base(), t.direction(), k))
}

/// Closed-form exponential map, assuming `base` is on the manifold and `v`
/// tangent to it.
pub fn exp_map_unchecked(base: &[f64], v: &[f64], k: Curvature) -> Vec<f64> {
    let norm = inner_unchecked(v, v, k).max(0.0).sqrt();
    if norm == 0.0 {
        return base.to_vec();
    }
    let (c, s) = match k {
        Curvature::Spherical => (norm.cos(), norm.sin() / norm),
        Curvature::Hyperbolic => (norm.cosh(), norm.sinh() / norm),
    };
    base.iter().zip(v).map(|(x, vi)| c * x + s * vi).collect()
}

/// Logarithm map: the tangent vector at `base` whose exponential is `target`.
///
/// Its length equals the geodesic distance. Antipodal points on the sphere
/// have no unique minimising geodesic and yield [`Error::Ambiguous`].
pub fn log_map(base: &AmbientPoint, target: &[f64], k: Curvature) -> Result<TangentVector> {
    check_same_len(base, target)?;
    check_on_manifold(base, k)?;
    check_on_manifold(target, k)?;
    let c = inner_unchecked(base, target, k);
    let mut u: Vec<f64> = match k {
        Curvature::Spherical => target
            .iter()
            .zip(base.iter())
            .map(|(y, x)| y - c * x)
            .collect(),
        Curvature::Hyperbolic => target
            .iter()
            .zip(base.iter())
            .map(|(y, x)| y + c * x)
            .collect(),
    };
    let s = inner_unchecked(&u, &u, k).max(0.0).sqrt();
    let dist = match k {
        Curvature::Spherical => {
            if s < 1e-12 && c < 0.0 {
                return Err(Error::Ambiguous(
                    "antipodal points have no unique geodesic".into(),
                ));
            }
            s.atan2(c)
        }
        Curvature::Hyperbolic => s.asinh(),
    };
    if s == 0.0 {
        u.iter_mut().for_each(|ui| *ui = 0.0);
    } else {
        let f = dist / s;
        u.iter_mut().for_each(|ui| *ui *= f);
        // remove the normal component left by rounding
        let along = inner_unchecked(base, &u, k) / k.level();
        u.iter_mut()
            .zip(base.iter())
            .for_each(|(ui, x)| *ui -= along * x);
    }
    Ok(TangentVector {
        base: base.clone(),
        direction: u,
    })
}

/// Symmetric matrix of pairwise geodesic distances between the rows of `batch`.
pub fn pairwise_geodesics(batch: ArrayView2<'_, f64>, k: Curvature) -> Result<Array2<f64>> {
    let n = batch.nrows();
    let rows: Vec<Vec<f64>> = batch.rows().into_iter().map(|r| r.to_vec()).collect();
    for (i, row) in rows.iter().enumerate() {
        check_on_manifold(row, k).map_err(|e| Error::Domain(format!("row {i}: {e}")))?;
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance_unchecked(&rows[i], &rows[j], k);
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    Ok(out)
}
