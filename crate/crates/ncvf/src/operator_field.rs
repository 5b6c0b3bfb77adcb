//! Matrix-valued functions on a truncated Vilenkin group: the finite-depth
//! model of the semi-commutative algebra `L_inf(G) ⊗ M_d` with trace
//! `phi = ∫ ⊗ tau`.
//!
//! Fourier analysis (coefficients, partial sums, Cesàro means) runs against a
//! [`SystemContext`]; martingale structure (conditional expectations, Hardy
//! column norms, atoms) only needs the radix. Vector-valued norms are handled
//! by certificates: witnesses are verified, exact infima are never claimed.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Operator, Projection, SingularProfile, C64};
use crate::vilenkin::{KernelKind, RadixSequence, SystemContext};

/// One operator per group point, all fibers of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorField {
    radix: RadixSequence,
    fiber_dim: usize,
    values: Vec<Operator>,
}

impl OperatorField {
    pub fn new(radix: RadixSequence, values: Vec<Operator>) -> Self {
        assert_eq!(values.len() as u64, radix.group_size());
        let fiber_dim = values.first().map(Operator::dim).unwrap_or(0);
        assert!(values.iter().all(|v| v.dim() == fiber_dim));
        OperatorField {
            radix,
            fiber_dim,
            values,
        }
    }

    pub fn from_fn<F: FnMut(u64) -> Operator>(radix: RadixSequence, mut f: F) -> Self {
        let values = (0..radix.group_size()).map(|t| f(t)).collect();
        OperatorField::new(radix, values)
    }

    pub fn constant(radix: RadixSequence, fiber: Operator) -> Self {
        let n = radix.group_size() as usize;
        OperatorField::new(radix, vec![fiber; n])
    }

    pub fn zeros(radix: RadixSequence, fiber_dim: usize) -> Self {
        OperatorField::constant(radix, Operator::zeros(fiber_dim))
    }

    pub fn identity(radix: RadixSequence, fiber_dim: usize) -> Self {
        OperatorField::constant(radix, Operator::identity(fiber_dim))
    }

    pub fn radix(&self) -> &RadixSequence {
        &self.radix
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn points(&self) -> u64 {
        self.radix.group_size()
    }

    pub fn value(&self, t: u64) -> &Operator {
        &self.values[t as usize]
    }

    pub fn values(&self) -> &[Operator] {
        &self.values
    }

    pub fn map<F: Fn(&Operator) -> Operator>(&self, f: F) -> Self {
        OperatorField {
            radix: self.radix.clone(),
            fiber_dim: self.fiber_dim,
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn zip<F: Fn(&Operator, &Operator) -> Operator>(&self, rhs: &Self, f: F) -> Self {
        assert_eq!(self.radix, rhs.radix);
        let values = self
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(a, b)| f(a, b))
            .collect();
        OperatorField {
            radix: self.radix.clone(),
            fiber_dim: self.fiber_dim,
            values,
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        self.zip(rhs, |a, b| a.add(b))
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.zip(rhs, |a, b| a.sub(b))
    }

    /// Pointwise product.
    pub fn mul(&self, rhs: &Self) -> Self {
        self.zip(rhs, |a, b| a.mul(b))
    }

    pub fn scale(&self, z: C64) -> Self {
        self.map(|a| a.scale(z))
    }

    pub fn adjoint(&self) -> Self {
        self.map(Operator::adjoint)
    }

    /// Pointwise `|f| = (f* f)^{1/2}`.
    pub fn abs(&self) -> Self {
        self.map(Operator::abs)
    }

    /// The trace `phi(f)`: mean over points of the fiber trace.
    pub fn phi(&self) -> C64 {
        self.values.iter().map(Operator::trace).sum::<C64>()
            / C64::new(self.points() as f64, 0.0)
    }

    /// Smallest fiber eigenvalue over all points (of the Hermitian parts).
    pub fn min_eigenvalue(&self) -> (f64, u64) {
        let mut best = (f64::INFINITY, 0u64);
        for (t, v) in self.values.iter().enumerate() {
            let e = v.min_eigenvalue();
            if e < best.0 {
                best = (e, t as u64);
            }
        }
        best
    }

    /// Rejects fields that are not positive semidefinite within `tol`.
    pub fn require_positive(&self, tol: f64) -> Result<()> {
        let (min_eig, point) = self.min_eigenvalue();
        if min_eig < -tol {
            return Err(Error::NotPositive { min_eig, point });
        }
        Ok(())
    }

    pub fn self_adjoint_residual(&self) -> f64 {
        self.values
            .iter()
            .map(Operator::self_adjoint_residual)
            .fold(0.0, f64::max)
    }

    /// Merged singular value profile: every fiber singular value with weight
    /// `1/(points * d)`.
    pub fn mu_profile(&self) -> SingularProfile {
        let mut all = Vec::with_capacity(self.values.len() * self.fiber_dim);
        for v in &self.values {
            all.extend(v.singular_values());
        }
        SingularProfile::new(all)
    }

    pub fn norm_lp(&self, p: f64) -> Result<f64> {
        if p < 1.0 {
            return Err(Error::InvalidExponent(p));
        }
        Ok(self.mu_profile().norm_lp(p))
    }

    pub fn norm_weak(&self, p: f64) -> Result<f64> {
        if p < 1.0 {
            return Err(Error::InvalidExponent(p));
        }
        Ok(self.mu_profile().norm_weak(p))
    }

    /// `||f||_inf`: the largest fiber operator norm.
    pub fn norm_inf(&self) -> f64 {
        self.values.iter().map(Operator::op_norm).fold(0.0, f64::max)
    }

    /// Cube average `f_Q` over the level-`k` cube with the given id.
    pub fn cube_average(&self, k: usize, cube: u64) -> Operator {
        let mk = self.radix.cumulative(k);
        let mut sum = Operator::zeros(self.fiber_dim);
        let mut count = 0u64;
        let mut t = cube;
        while t < self.points() {
            sum = sum.add(&self.values[t as usize]);
            count += 1;
            t += mk;
        }
        sum.scale(C64::new(1.0 / count as f64, 0.0))
    }

    /// Conditional expectation onto level `k`: replace each fiber by the
    /// average over its level-`k` cube.
    pub fn cond_exp(&self, k: usize) -> Self {
        let mk = self.radix.cumulative(k);
        let averages: Vec<Operator> = (0..mk).map(|q| self.cube_average(k, q)).collect();
        OperatorField::from_fn(self.radix.clone(), |t| {
            averages[(t % mk) as usize].clone()
        })
    }

    /// Multiply by the indicator of the level-`k` cube with the given id.
    pub fn restrict_to_cube(&self, k: usize, cube: u64) -> Self {
        let mk = self.radix.cumulative(k);
        let zero = Operator::zeros(self.fiber_dim);
        OperatorField::from_fn(self.radix.clone(), |t| {
            if t % mk == cube {
                self.values[t as usize].clone()
            } else {
                zero.clone()
            }
        })
    }

    /// Multiply by the indicator of the complement of that cube.
    pub fn restrict_off_cube(&self, k: usize, cube: u64) -> Self {
        self.sub(&self.restrict_to_cube(k, cube))
    }

    pub(crate) fn check_ctx(&self, ctx: &SystemContext) -> Result<()> {
        if ctx.radix() != &self.radix {
            return Err(Error::InvalidParams {
                what: "operator field",
                detail: "system context and field use different radix sequences".into(),
            });
        }
        Ok(())
    }

    /// `f^(n) = ∫ f(t) conj(psi_n(t)) dmu(t)`.
    pub fn fourier_coeff(&self, ctx: &SystemContext, n: u64) -> Result<Operator> {
        self.check_ctx(ctx)?;
        let psi = ctx.psi(n)?;
        let mut sum = DMatrix::zeros(self.fiber_dim, self.fiber_dim);
        for (t, v) in self.values.iter().enumerate() {
            sum += v.matrix() * psi.value(t as u64).conj();
        }
        Ok(Operator::new(sum / C64::new(self.points() as f64, 0.0)))
    }

    /// All coefficients below `M_N`, in index order.
    pub fn fourier_coeffs(&self, ctx: &SystemContext) -> Result<Vec<Operator>> {
        (0..self.points())
            .map(|n| self.fourier_coeff(ctx, n))
            .collect()
    }

    /// Rebuild a field from multiplier weights applied to the coefficients:
    /// `sum_j w_j f^(j) psi_j`.
    fn multiplier(&self, ctx: &SystemContext, weights: &[f64]) -> Result<Self> {
        self.check_ctx(ctx)?;
        let d = self.fiber_dim;
        let mut out = vec![DMatrix::<C64>::zeros(d, d); self.points() as usize];
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let coeff = self.fourier_coeff(ctx, j as u64)?;
            let psi = ctx.psi(j as u64)?;
            for (t, m) in out.iter_mut().enumerate() {
                *m += coeff.matrix() * (psi.value(t as u64) * C64::new(w, 0.0));
            }
        }
        Ok(OperatorField::new(
            self.radix.clone(),
            out.into_iter().map(Operator::new).collect(),
        ))
    }

    /// Partial sum `S_n(f) = sum_{k<n} f^(k) psi_k`.
    pub fn partial_sum(&self, ctx: &SystemContext, n: u64) -> Result<Self> {
        if n > self.points() {
            return Err(Error::IndexOutOfRange {
                index: n,
                depth: self.radix.depth(),
                cap: self.points(),
            });
        }
        let mut w = vec![0.0; self.points() as usize];
        for wj in w.iter_mut().take(n as usize) {
            *wj = 1.0;
        }
        self.multiplier(ctx, &w)
    }

    /// Cesàro mean in multiplier form: `sum_{k<n} (1 - k/n) f^(k) psi_k`.
    pub fn cesaro(&self, ctx: &SystemContext, n: u64) -> Result<Self> {
        if n == 0 || n > self.points() {
            return Err(Error::IndexOutOfRange {
                index: n,
                depth: self.radix.depth(),
                cap: self.points(),
            });
        }
        let mut w = vec![0.0; self.points() as usize];
        for (k, wk) in w.iter_mut().enumerate().take(n as usize) {
            *wk = (n - k as u64) as f64 / n as f64;
        }
        self.multiplier(ctx, &w)
    }

    /// Cesàro mean through the kernel integral — the redundancy oracle for
    /// [`OperatorField::cesaro`].
    pub fn cesaro_kernel_form(&self, ctx: &SystemContext, n: u64) -> Result<Self> {
        self.check_ctx(ctx)?;
        let table = ctx.kernel(KernelKind::Fejer(n))?;
        let d = self.fiber_dim;
        let size = self.points();
        let mut out = Vec::with_capacity(size as usize);
        for eta in 0..size {
            let mut m = DMatrix::<C64>::zeros(d, d);
            for (t, v) in self.values.iter().enumerate() {
                m += v.matrix() * table.value(eta, t as u64);
            }
            out.push(Operator::new(m / C64::new(size as f64, 0.0)));
        }
        Ok(OperatorField::new(self.radix.clone(), out))
    }

    /// Positive maximal auxiliary: integrate a positive field against the
    /// sup-kernel of scale `n`.
    pub fn tilde_sigma(&self, ctx: &SystemContext, n: usize) -> Result<Self> {
        self.require_positive(1e-9)?;
        self.tilde_sigma_unchecked(ctx, n)
    }

    /// Sup-kernel integration without the positivity gate — for signed pieces
    /// (whose absolute value is taken afterwards) inside certificate sums.
    pub fn tilde_sigma_unchecked(&self, ctx: &SystemContext, n: usize) -> Result<Self> {
        self.check_ctx(ctx)?;
        let d = self.fiber_dim;
        let size = self.points();
        let mut out = Vec::with_capacity(size as usize);
        for eta in 0..size {
            // column t -> Ktilde_n(eta, t): sup_column fixes the second slot,
            // and the sup-kernel is symmetric in our tabulation order
            let col = ctx.sup_column(n, eta)?;
            let mut m = DMatrix::<C64>::zeros(d, d);
            for (t, v) in self.values.iter().enumerate() {
                m += v.matrix() * C64::new(col[t], 0.0);
            }
            out.push(Operator::new(m / C64::new(size as f64, 0.0)));
        }
        Ok(OperatorField::new(self.radix.clone(), out))
    }

    /// Martingale differences `df_1 = E_1(f)`, `df_k = E_k(f) - E_{k-1}(f)`.
    pub fn martingale_differences(&self) -> Vec<Self> {
        let depth = self.radix.depth();
        let mut prev = self.cond_exp(1);
        let mut out = vec![prev.clone()];
        for k in 2..=depth {
            let cur = self.cond_exp(k);
            out.push(cur.sub(&prev));
            prev = cur;
        }
        out
    }

    /// Column square function `S_c(f) = (sum_k df_k* df_k)^{1/2}`.
    pub fn square_function(&self) -> Result<Self> {
        let diffs = self.martingale_differences();
        square_function_of(&diffs)
    }

    /// Hardy column norm `||S_c(f)||_p` for `1 <= p <= 2`.
    pub fn hardy_c_norm(&self, p: f64) -> Result<f64> {
        if !(1.0..=2.0).contains(&p) {
            return Err(Error::InvalidExponent(p));
        }
        self.square_function()?.norm_lp(p)
    }

    /// Row variant: the column norm of the pointwise adjoint.
    pub fn hardy_r_norm(&self, p: f64) -> Result<f64> {
        self.adjoint().hardy_c_norm(p)
    }
}

/// `(sum_k x_k* x_k)^{1/2}` pointwise over a sequence of fields.
pub fn square_function_of(xs: &[OperatorField]) -> Result<OperatorField> {
    let first = xs.first().ok_or(Error::InvalidParams {
        what: "square function",
        detail: "empty sequence".into(),
    })?;
    let mut sum = OperatorField::zeros(first.radix().clone(), first.fiber_dim());
    for x in xs {
        sum = sum.add(&x.adjoint().mul(x));
    }
    let rooted = sum
        .values()
        .iter()
        .map(Operator::psd_sqrt)
        .collect::<Result<Vec<_>>>()?;
    Ok(OperatorField::new(first.radix().clone(), rooted))
}

/// `||(x_k)||_{L_p(l_2^c)} = ||(sum x_k* x_k)^{1/2}||_p`.
pub fn seq_l2c_norm(xs: &[OperatorField], p: f64) -> Result<f64> {
    square_function_of(xs)?.norm_lp(p)
}

/// Which maximal-norm flavor a certificate witnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateFlavor {
    /// `||e x_n e||_inf <= t` for every `n`.
    TwoSided,
    /// `||x_n e||_inf <= t` for every `n`.
    Column,
}

/// A verified weak-maximal certificate: the witness projection `e` and level
/// `t` with the certified value `t * phi(1 - e)^{1/p}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorNormCertificate {
    pub flavor: CertificateFlavor,
    pub p: f64,
    pub level: f64,
    pub tail: f64,
    pub certified: f64,
}

/// Verifies that `(e, t)` witnesses the maximal bound for the sequence and
/// returns the certified value. The projection field `e` must satisfy the
/// fiberwise projection invariants.
pub fn lambda_certificate(
    xs: &[OperatorField],
    e: &OperatorField,
    level: f64,
    p: f64,
    flavor: CertificateFlavor,
) -> Result<VectorNormCertificate> {
    if p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    for fiber in e.values() {
        Projection::try_new(fiber.clone())?;
    }
    for (index, x) in xs.iter().enumerate() {
        let compressed = match flavor {
            CertificateFlavor::TwoSided => e.mul(x).mul(e),
            CertificateFlavor::Column => x.mul(e),
        };
        let sup = compressed.norm_inf();
        if sup > level + 1e-9 {
            return Err(Error::CertificateViolation {
                index,
                residual: sup - level,
                level,
            });
        }
    }
    let tail = 1.0 - e.phi().re;
    Ok(VectorNormCertificate {
        flavor,
        p,
        level,
        tail,
        certified: level * tail.max(0.0).powf(1.0 / p),
    })
}

/// Certificate search outcome: best verified upper value over a λ-grid, the
/// trivial lower bound, and the (never hidden) gap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub best: Option<VectorNormCertificate>,
    pub lower_bound: f64,
    pub gap: f64,
}

/// Searches 64 log-spaced levels for the best verifiable certificate. For
/// each λ the witness is the spectral projection where the square function
/// (two-sided: the self-adjoint majorant) stays below λ.
pub fn lambda_search(
    xs: &[OperatorField],
    p: f64,
    flavor: CertificateFlavor,
) -> Result<LambdaSearch> {
    let first = xs.first().ok_or(Error::InvalidParams {
        what: "lambda search",
        detail: "empty sequence".into(),
    })?;
    let majorant = match flavor {
        CertificateFlavor::Column => square_function_of(xs)?,
        CertificateFlavor::TwoSided => {
            // for self-adjoint x_n, x_n <= |x_n| <= (sum x_k^2)^{1/2}
            let residual = xs
                .iter()
                .map(OperatorField::self_adjoint_residual)
                .fold(0.0, f64::max);
            if residual > 1e-9 {
                return Err(Error::NotSelfAdjoint {
                    residual,
                    tol: 1e-9,
                });
            }
            square_function_of(xs)?
        }
    };
    let mut lower_bound = 0.0f64;
    for x in xs {
        lower_bound = lower_bound.max(x.norm_weak(p)?);
    }
    let top = majorant.norm_inf().max(1e-12);
    let mut best: Option<VectorNormCertificate> = None;
    for i in 0..64 {
        let lam = top * (1e-4f64).powf(1.0 - (i as f64 + 1.0) / 64.0);
        let threshold = match flavor {
            CertificateFlavor::Column => lam * lam,
            CertificateFlavor::TwoSided => lam,
        };
        let gate = match flavor {
            CertificateFlavor::Column => majorant.mul(&majorant),
            CertificateFlavor::TwoSided => majorant.clone(),
        };
        let e_values = gate
            .values()
            .iter()
            .map(|v| {
                v.functional_calculus(|s| if s <= threshold { 1.0 } else { 0.0 })
            })
            .collect::<Result<Vec<_>>>()?;
        let e = OperatorField::new(first.radix().clone(), e_values);
        // tighten the level to the actual supremum under this witness
        let mut level = 0.0f64;
        for x in xs {
            let compressed = match flavor {
                CertificateFlavor::TwoSided => e.mul(x).mul(&e),
                CertificateFlavor::Column => x.mul(&e),
            };
            level = level.max(compressed.norm_inf());
        }
        let cert = lambda_certificate(xs, &e, level, p, flavor)?;
        if best
            .as_ref()
            .map(|b| cert.certified < b.certified)
            .unwrap_or(true)
        {
            best = Some(cert);
        }
    }
    let gap = best
        .as_ref()
        .map(|b| b.certified - lower_bound)
        .unwrap_or(f64::INFINITY);
    Ok(LambdaSearch {
        best,
        lower_bound,
        gap,
    })
}

/// A mean-zero field supported on one cube and one fiber projection, scaled
/// to saturate the size normalization `||a||_2 = phi(e)^{-1/2}`.
#[derive(Debug, Clone)]
pub struct SimpleAtom {
    pub field: OperatorField,
    /// The level `n_0` of the supporting cube.
    pub level: usize,
    pub cube: u64,
    pub e_q: Projection,
}

impl SimpleAtom {
    /// `phi(e)` for the support `e = e_Q chi_Q`.
    pub fn support_mass(&self) -> f64 {
        let radix = self.field.radix();
        self.e_q.trace() / radix.cumulative(self.level) as f64
    }
}

/// Generates a random simple atom at the given level and cube, right-supported
/// by `e_q`, mean-zero at its own level, with the L_2 normalization saturated.
pub fn make_simple_atom<R: Rng>(
    radix: &RadixSequence,
    level: usize,
    cube: u64,
    e_q: &Projection,
    rng: &mut R,
) -> Result<SimpleAtom> {
    let d = e_q.dim();
    if level == 0 || level >= radix.depth() {
        return Err(Error::DegenerateAtom(format!(
            "level {level} admits no nonzero mean-zero atom at depth {}",
            radix.depth()
        )));
    }
    if e_q.trace() <= 0.0 {
        return Err(Error::DegenerateAtom("zero fiber projection".into()));
    }
    if cube >= radix.cumulative(level) {
        return Err(Error::IndexOutOfRange {
            index: cube,
            depth: level,
            cap: radix.cumulative(level),
        });
    }
    let raw = OperatorField::from_fn(radix.clone(), |t| {
        if t % radix.cumulative(level) == cube {
            crate::harness::sample::gaussian(d, rng).mul(e_q.operator())
        } else {
            Operator::zeros(d)
        }
    });
    let centered = raw.sub(&raw.cond_exp(level));
    let norm = centered.norm_lp(2.0)?;
    if norm < 1e-12 {
        return Err(Error::DegenerateAtom("random draw collapsed to zero".into()));
    }
    let mass = e_q.trace() / radix.cumulative(level) as f64;
    let target = mass.powf(-0.5);
    let field = centered.scale(C64::new(target / norm, 0.0));
    let atom = SimpleAtom {
        field,
        level,
        cube,
        e_q: e_q.clone(),
    };
    verify_atom(&atom)?;
    Ok(atom)
}

/// Checks the three defining atom conditions plus `||a||_1 <= 1`.
pub fn verify_atom(atom: &SimpleAtom) -> Result<()> {
    let a = &atom.field;
    let radix = a.radix();
    let mk = radix.cumulative(atom.level);
    let complement = atom.e_q.complement();
    let mut worst = 0.0f64;
    for t in 0..a.points() {
        if t % mk == atom.cube {
            worst = worst.max(a.value(t).mul(complement.operator()).op_norm());
        } else {
            worst = worst.max(a.value(t).op_norm());
        }
    }
    let mean = a.cond_exp(atom.level).norm_inf();
    let size = a.norm_lp(2.0)? - atom.support_mass().powf(-0.5);
    let l1_excess = a.norm_lp(1.0)? - 1.0;
    for (what, residual, tol) in [
        ("atom support", worst, 1e-10),
        ("atom mean-zero", mean, 1e-10),
        ("atom normalization", size.abs(), 1e-10),
        ("atom L1 bound", l1_excess, 1e-10),
    ] {
        if residual > tol {
            return Err(Error::PipelineMismatch {
                what: what.into(),
                residual,
                tol,
            });
        }
    }
    Ok(())
}

/// Factorizes the bilinear form `∫ a*(t) b(t) dt = A u B` with
/// `A = (∫ a*a)^{1/2}`, `B = (∫ b*b)^{1/2}`, and a contraction `u`.
pub fn bilinear_factorization(
    a: &OperatorField,
    b: &OperatorField,
) -> Result<(Operator, Operator, Operator)> {
    let d = a.fiber_dim();
    let points = a.points() as f64;
    let integrate = |f: &OperatorField| {
        let mut m = DMatrix::<C64>::zeros(d, d);
        for v in f.values() {
            m += v.matrix();
        }
        Operator::new(m / C64::new(points, 0.0))
    };
    let gram_a = integrate(&a.adjoint().mul(a));
    let gram_b = integrate(&b.adjoint().mul(b));
    let cross = integrate(&a.adjoint().mul(b));
    let big_a = gram_a.psd_sqrt()?;
    let big_b = gram_b.psd_sqrt()?;
    let u = big_a.pinv().mul(&cross).mul(&big_b.pinv());
    let recon = big_a.mul(&u).mul(&big_b);
    let residual = recon.sub(&cross).op_norm();
    if residual > 1e-8 {
        return Err(Error::PipelineMismatch {
            what: "bilinear factorization reconstruction".into(),
            residual,
            tol: 1e-8,
        });
    }
    let excess = u.op_norm() - 1.0;
    if excess > 1e-8 {
        return Err(Error::PipelineMismatch {
            what: "bilinear factorization contraction".into(),
            residual: excess,
            tol: 1e-8,
        });
    }
    Ok((big_a, u, big_b))
}

/// Serialization container: header plus row-major complex entries per point.
#[derive(Serialize, Deserialize)]
struct FieldRepr {
    radix: Vec<u32>,
    fiber_dim: usize,
    /// `entries[point][row * d + col]` as `(re, im)` pairs.
    entries: Vec<Vec<(f64, f64)>>,
}

impl Serialize for OperatorField {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries = self
            .values
            .iter()
            .map(|op| {
                let m = op.matrix();
                let mut row = Vec::with_capacity(self.fiber_dim * self.fiber_dim);
                for r in 0..self.fiber_dim {
                    for c in 0..self.fiber_dim {
                        let z = m[(r, c)];
                        row.push((z.re, z.im));
                    }
                }
                row
            })
            .collect();
        FieldRepr {
            radix: self.radix.radices().to_vec(),
            fiber_dim: self.fiber_dim,
            entries,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OperatorField {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let repr = FieldRepr::deserialize(deserializer)?;
        let radix = RadixSequence::new(&repr.radix).map_err(DeError::custom)?;
        if repr.entries.len() as u64 != radix.group_size() {
            return Err(DeError::custom("point count does not match radix"));
        }
        let d = repr.fiber_dim;
        let values = repr
            .entries
            .iter()
            .map(|row| {
                if row.len() != d * d {
                    return Err(DeError::custom("fiber entry count mismatch"));
                }
                Ok(Operator::new(DMatrix::from_fn(d, d, |r, c| {
                    let (re, im) = row[r * d + c];
                    C64::new(re, im)
                })))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(OperatorField::new(radix, values))
    }
}
