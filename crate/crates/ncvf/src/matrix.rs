//! Tracial matrix-algebra primitives.
//!
//! Everything in the crate runs over finite-dimensional fibers: dense complex
//! `d x d` matrices carrying the normalized trace `tr(x)/d`, so the identity
//! always has trace one. Spectral calculus is done through Hermitian
//! eigendecompositions, singular value profiles through the SVD.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Rejection threshold for self-adjointness before an eigendecomposition.
pub const SELF_ADJOINT_TOL: f64 = 1e-9;
/// Interval endpoints classify eigenvalues within this distance as *on* the
/// endpoint (inside a closed endpoint, outside an open one).
pub const ENDPOINT_TOL: f64 = 1e-9;
/// Tolerance used when extracting the eigenvalue-2 space of `e + q`.
pub const MEET_TOL: f64 = 1e-7;
/// Pseudo-inverse cutoff for singular values.
pub const PINV_TOL: f64 = 1e-10;

/// A trace-normalized dense complex matrix: `trace(identity) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
}

impl Operator {
    pub fn new(mat: DMatrix<C64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "operators are square");
        assert!(
            mat.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            "operator entries must be finite"
        );
        Operator { mat }
    }

    pub fn identity(dim: usize) -> Self {
        Operator::new(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Operator::new(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Operator::new(DMatrix::from_diagonal(&v))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    /// Normalized trace `tr(x)/d`.
    pub fn trace(&self) -> C64 {
        self.mat.trace() / C64::new(self.dim() as f64, 0.0)
    }

    pub fn adjoint(&self) -> Self {
        Operator::new(self.mat.adjoint())
    }

    pub fn scale(&self, z: C64) -> Self {
        Operator::new(&self.mat * z)
    }

    pub fn add(&self, rhs: &Operator) -> Self {
        Operator::new(&self.mat + &rhs.mat)
    }

    pub fn sub(&self, rhs: &Operator) -> Self {
        Operator::new(&self.mat - &rhs.mat)
    }

    pub fn mul(&self, rhs: &Operator) -> Self {
        Operator::new(&self.mat * &rhs.mat)
    }

    /// `||x - x*||_inf`, the drift from self-adjointness.
    pub fn self_adjoint_residual(&self) -> f64 {
        Operator::new(&self.mat - self.mat.adjoint()).op_norm()
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.self_adjoint_residual() <= SELF_ADJOINT_TOL
    }

    /// Hermitian part `(x + x*)/2`.
    pub fn symmetrize(&self) -> Self {
        Operator::new((&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0))
    }

    /// Singular values sorted nonincreasing.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self
            .mat
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    /// Operator norm (largest singular value).
    pub fn op_norm(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.mat.clone().svd(false, false).singular_values.max()
    }

    /// Eigenvalues of the symmetrized operator together with the unitary of
    /// eigenvectors. Rejects inputs drifting from self-adjointness.
    pub fn hermitian_eigen(&self) -> Result<(Vec<f64>, DMatrix<C64>)> {
        let residual = self.self_adjoint_residual();
        if residual > SELF_ADJOINT_TOL {
            return Err(Error::NotSelfAdjoint {
                residual,
                tol: SELF_ADJOINT_TOL,
            });
        }
        let eig = self.symmetrize().mat.symmetric_eigen();
        Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
    }

    /// `phi(x)` through the spectral decomposition of a self-adjoint `x`.
    pub fn functional_calculus<F: Fn(f64) -> f64>(&self, phi: F) -> Result<Operator> {
        let (vals, vecs) = self.hermitian_eigen()?;
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            vals.len(),
            vals.iter().map(|&v| C64::new(phi(v), 0.0)),
        ));
        Ok(Operator::new(&vecs * d * vecs.adjoint()))
    }

    /// Spectral projection `chi_B(x)` for an interval `B`.
    pub fn spectral_projection(&self, interval: Interval) -> Result<Projection> {
        let op = self.functional_calculus(|v| if interval.contains(v) { 1.0 } else { 0.0 })?;
        Projection::try_new(op)
    }

    /// Decreasing rearrangement of the singular values, each with weight `1/d`.
    pub fn mu_profile(&self) -> SingularProfile {
        SingularProfile::new(self.singular_values())
    }

    /// `[tau(|x|^p)]^{1/p}` from the singular values; `p = inf` gives the
    /// operator norm.
    pub fn norm_lp(&self, p: f64) -> Result<f64> {
        if p < 1.0 {
            return Err(Error::InvalidExponent(p));
        }
        Ok(self.mu_profile().norm_lp(p))
    }

    /// Weak quasi-norm `sup_t t^{1/p} mu(t, x)` over the finite profile.
    pub fn norm_weak(&self, p: f64) -> Result<f64> {
        if p < 1.0 {
            return Err(Error::InvalidExponent(p));
        }
        Ok(self.mu_profile().norm_weak(p))
    }

    /// Smallest eigenvalue of the Hermitian part; PSD checks go through here.
    pub fn min_eigenvalue(&self) -> f64 {
        let eig = self.symmetrize().mat.symmetric_eigen();
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(x*x)^{1/2}` through the SVD.
    pub fn abs(&self) -> Operator {
        let svd = self.mat.clone().svd(false, true);
        let vt = svd.v_t.expect("requested");
        let s = DMatrix::from_diagonal(&svd.singular_values.map(|v| C64::new(v, 0.0)));
        Operator::new(vt.adjoint() * s * vt)
    }

    /// Positive-semidefinite square root of a PSD operator. Negative
    /// eigenvalues below `-tol` are a caller bug; small negatives clamp to 0.
    pub fn psd_sqrt(&self) -> Result<Operator> {
        self.functional_calculus(|v| if v > 0.0 { v.sqrt() } else { 0.0 })
    }

    /// Moore-Penrose pseudo-inverse with cutoff [`PINV_TOL`].
    pub fn pinv(&self) -> Operator {
        let svd = self.mat.clone().svd(true, true);
        let u = svd.u.expect("requested");
        let vt = svd.v_t.expect("requested");
        let sinv = DMatrix::from_diagonal(&svd.singular_values.map(|v| {
            if v > PINV_TOL {
                C64::new(1.0 / v, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }));
        Operator::new(vt.adjoint() * sinv * u.adjoint())
    }
}

/// A real interval with open/closed endpoints; endpoints may be infinite.
/// Eigenvalues within [`ENDPOINT_TOL`] of an endpoint count as sitting on it.
#[derive(Debug, Clone, Copy)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Interval {
    pub fn open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            lo_closed: false,
            hi,
            hi_closed: false,
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            lo_closed: true,
            hi,
            hi_closed: true,
        }
    }

    /// `(lo, inf)`.
    pub fn above(lo: f64) -> Self {
        Interval::open(lo, f64::INFINITY)
    }

    /// `[lo, inf)`.
    pub fn from_closed(lo: f64) -> Self {
        Interval {
            lo,
            lo_closed: true,
            hi: f64::INFINITY,
            hi_closed: false,
        }
    }

    /// The singleton `{v}`.
    pub fn point(v: f64) -> Self {
        Interval::closed(v, v)
    }

    pub fn contains(&self, v: f64) -> bool {
        let at_lo = self.lo.is_finite() && (v - self.lo).abs() <= ENDPOINT_TOL;
        let at_hi = self.hi.is_finite() && (v - self.hi).abs() <= ENDPOINT_TOL;
        if at_lo {
            // on both endpoints only for (near-)degenerate intervals
            return self.lo_closed || (at_hi && self.hi_closed);
        }
        if at_hi {
            return self.hi_closed;
        }
        self.lo < v && v < self.hi
    }
}

/// A self-adjoint idempotent, validated on construction.
#[derive(Debug, Clone)]
pub struct Projection {
    op: Operator,
}

impl Projection {
    pub fn try_new(op: Operator) -> Result<Projection> {
        let sa = op.self_adjoint_residual();
        let idem = op.mul(&op).sub(&op).op_norm();
        let residual = sa.max(idem);
        if residual > SELF_ADJOINT_TOL {
            return Err(Error::NotAProjection {
                dim: op.dim(),
                residual,
            });
        }
        Ok(Projection { op })
    }

    pub fn one(dim: usize) -> Projection {
        Projection {
            op: Operator::identity(dim),
        }
    }

    pub fn zero(dim: usize) -> Projection {
        Projection {
            op: Operator::zeros(dim),
        }
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// `tau(e)`, the normalized rank.
    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    pub fn complement(&self) -> Projection {
        Projection {
            op: Operator::identity(self.dim()).sub(&self.op),
        }
    }
}

/// Projection onto `range(e) ∩ range(q)`: the eigenvalue-2 subspace of
/// `e + q`, extracted with the looser [`MEET_TOL`].
pub fn projection_meet(e: &Projection, q: &Projection) -> Result<Projection> {
    if e.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            left: e.dim(),
            right: q.dim(),
        });
    }
    let sum = e.operator().add(q.operator());
    let (vals, vecs) = sum.hermitian_eigen()?;
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter()
            .map(|&v| C64::new(if v >= 2.0 - MEET_TOL { 1.0 } else { 0.0 }, 0.0)),
    ));
    let raw = Operator::new(&vecs * d * vecs.adjoint());
    // re-round so the result satisfies the tight projection invariants
    let rounded = raw.functional_calculus(|v| if v >= 0.5 { 1.0 } else { 0.0 })?;
    Projection::try_new(rounded)
}

/// Singular value profile: the step function `t -> mu(t, x)` over `[0, 1)`,
/// constant on blocks of length `1/d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularProfile {
    values: Vec<f64>,
}

impl SingularProfile {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(values.iter().all(|v| *v >= 0.0 && v.is_finite()));
        SingularProfile { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `mu(t, x)` for `t` in `[0, 1)`.
    pub fn value_at(&self, t: f64) -> f64 {
        let d = self.values.len();
        let idx = (t * d as f64).floor() as usize;
        if idx >= d {
            0.0
        } else {
            self.values[idx]
        }
    }

    pub fn norm_lp(&self, p: f64) -> f64 {
        let d = self.values.len() as f64;
        if p.is_infinite() {
            return self.values.first().copied().unwrap_or(0.0);
        }
        (self.values.iter().map(|s| s.powf(p)).sum::<f64>() / d).powf(1.0 / p)
    }

    /// `max_i s_i (i/d)^{1/p}` with 1-based `i` over the nonincreasing values.
    pub fn norm_weak(&self, p: f64) -> f64 {
        let d = self.values.len() as f64;
        self.values
            .iter()
            .enumerate()
            .map(|(i, s)| s * (((i + 1) as f64) / d).powf(1.0 / p))
            .fold(0.0, f64::max)
    }
}
