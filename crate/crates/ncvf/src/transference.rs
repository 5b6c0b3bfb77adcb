//! The trace-preserving embedding of the matrix factor into the
//! semi-commutative algebra over the doubled group: each basis unitary `W_j`
//! is sent to the field `t -> psi_j(t) W_j`. Because both sides are indexed
//! through the same doubled codec, the embedding is a coefficientwise
//! identity, and every classical operation (partial sums, Cesàro means,
//! conditional expectations along even levels) intertwines exactly with its
//! factor-side counterpart. This module evaluates the embedding pointwise and
//! verifies the homomorphism, isometry, profile-equality, and intertwining
//! identities numerically.
//!
//! ```
//! use ncvf::harness::{derive_rng, sample};
//! use ncvf::nc_factor::build_factor;
//! use ncvf::transference::verify_transference;
//! use ncvf::vilenkin::{SystemContext, VilenkinCharacters};
//!
//! let fctx = build_factor(&[2, 2]).unwrap();
//! let sctx = SystemContext::new(&VilenkinCharacters, fctx.doubled().clone()).unwrap();
//! let mut rng = derive_rng(7, "doc-transference", 0);
//! let x = sample::gaussian(fctx.dim(), &mut rng);
//! let y = sample::gaussian(fctx.dim(), &mut rng);
//!
//! let report = verify_transference(&fctx, &sctx, &x, &y).unwrap();
//! assert!(report.pass());   // all residuals below 1e-9
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{Interval, Operator, Projection};
use crate::nc_factor::FactorContext;
use crate::operator_field::{square_function_of, OperatorField};
use crate::vilenkin::SystemContext;

const TRANSFER_TOL: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-10;

/// An embedded factor element: the field over the doubled group together with
/// its source.
#[derive(Debug, Clone)]
pub struct TransferredElement {
    pub source: Operator,
    pub field: OperatorField,
}

fn check_alignment(fctx: &FactorContext, sctx: &SystemContext) -> Result<()> {
    if sctx.radix().radices() != fctx.doubled().radices() {
        return Err(Error::InvalidParams {
            what: "transference",
            detail: format!(
                "classical radix {:?} does not match the doubled factor radix {:?}",
                sctx.radix().radices(),
                fctx.doubled().radices()
            ),
        });
    }
    Ok(())
}

/// Embed `x`: the field `t -> sum_j x^(j) psi_j(t) W_j`, verified
/// trace-preserving on construction.
pub fn gamma(fctx: &FactorContext, sctx: &SystemContext, x: &Operator) -> Result<TransferredElement> {
    check_alignment(fctx, sctx)?;
    let coeffs = fctx.nc_fourier_coeffs(x)?;
    let size = sctx.group_size();
    let dim = fctx.dim();
    let mut values = Vec::with_capacity(size as usize);
    for t in 0..size {
        let mut acc = Operator::zeros(dim);
        for (j, c) in coeffs.iter().enumerate() {
            if c.norm() == 0.0 {
                continue;
            }
            let scalar = *c * sctx.psi(j as u64)?.value(t);
            acc = acc.add(&fctx.walsh(j as u64)?.scale(scalar));
        }
        values.push(acc);
    }
    let field = OperatorField::new(sctx.radix().clone(), values);
    let trace_dev = (field.phi() - x.trace()).norm();
    if trace_dev > TRACE_TOL {
        return Err(Error::PipelineMismatch {
            what: "embedding trace preservation".into(),
            residual: trace_dev,
            tol: TRACE_TOL,
        });
    }
    Ok(TransferredElement {
        source: x.clone(),
        field,
    })
}

/// Residuals of the algebraic and metric transfer checks for a pair `(x, y)`.
#[derive(Debug, Clone, Serialize)]
pub struct TransferenceReport {
    /// `||gamma(xy) - gamma(x)gamma(y)||_inf`.
    pub homomorphism: f64,
    /// `||gamma(x*) - gamma(x)*||_inf`.
    pub adjoint: f64,
    /// `| ||gamma(x)||_p - ||x||_p |` for p = 1, 2, 4, infinity.
    pub isometry_l1: f64,
    pub isometry_l2: f64,
    pub isometry_l4: f64,
    pub isometry_linf: f64,
    /// Max quantile deviation between the merged singular profile of the
    /// embedded field and the profile of the source.
    pub mu_profile: f64,
}

impl TransferenceReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.homomorphism,
            self.adjoint,
            self.isometry_l1,
            self.isometry_l2,
            self.isometry_l4,
            self.isometry_linf,
            self.mu_profile,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn pass(&self) -> bool {
        self.max_residual() <= TRANSFER_TOL
    }
}

/// Check that the embedding is a *-homomorphism, an `L_p` isometry for
/// p in {1, 2, 4, inf}, and preserves the singular value profile.
pub fn verify_transference(
    fctx: &FactorContext,
    sctx: &SystemContext,
    x: &Operator,
    y: &Operator,
) -> Result<TransferenceReport> {
    let gx = gamma(fctx, sctx, x)?;
    let gy = gamma(fctx, sctx, y)?;
    let gxy = gamma(fctx, sctx, &x.mul(y))?;
    let homomorphism = gxy.field.sub(&gx.field.mul(&gy.field)).norm_inf();
    let gx_adj = gamma(fctx, sctx, &x.adjoint())?;
    let adjoint = gx_adj.field.sub(&gx.field.adjoint()).norm_inf();

    let iso = |p: f64| -> Result<f64> {
        Ok((gx.field.norm_lp(p)? - x.norm_lp(p)?).abs())
    };
    let isometry_l1 = iso(1.0)?;
    let isometry_l2 = iso(2.0)?;
    let isometry_l4 = iso(4.0)?;
    let isometry_linf = (gx.field.norm_inf() - x.op_norm()).abs();

    // compare the two step functions at the finest common quantile grid
    let field_profile = gx.field.mu_profile();
    let source_profile = x.mu_profile();
    let grid = (sctx.group_size() as usize) * fctx.dim();
    let mut mu_profile = 0.0_f64;
    for i in 0..grid {
        let t = (i as f64 + 0.5) / grid as f64;
        mu_profile = mu_profile.max((field_profile.value_at(t) - source_profile.value_at(t)).abs());
    }

    Ok(TransferenceReport {
        homomorphism,
        adjoint,
        isometry_l1,
        isometry_l2,
        isometry_l4,
        isometry_linf,
        mu_profile,
    })
}

/// Column Hardy norm of a factor element through its martingale differences
/// along the tensor filtration (first difference is the level-1 expectation).
pub fn factor_hardy_c_norm(fctx: &FactorContext, x: &Operator, p: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidExponent(p));
    }
    let depth = fctx.base().depth();
    let mut diffs = Vec::with_capacity(depth);
    let mut prev = fctx.factor_cond_exp(x, 1)?;
    diffs.push(prev.clone());
    for k in 2..=depth {
        let cur = fctx.factor_cond_exp(x, k)?;
        diffs.push(cur.sub(&prev));
        prev = cur;
    }
    let mut sq = Operator::zeros(fctx.dim());
    for d in &diffs {
        sq = sq.add(&d.adjoint().mul(d));
    }
    sq.psd_sqrt()?.norm_lp(p)
}

/// Hardy norm of a field over the doubled group along the *even* filtration
/// levels only — the doubled-filtration norm that matches the factor side.
pub fn even_hardy_c_norm(field: &OperatorField, p: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidExponent(p));
    }
    let depth = field.radix().depth() / 2;
    let mut diffs = Vec::with_capacity(depth);
    let mut prev = field.cond_exp(2);
    diffs.push(prev.clone());
    for k in 2..=depth {
        let cur = field.cond_exp(2 * k);
        diffs.push(cur.sub(&prev));
        prev = cur;
    }
    square_function_of(&diffs)?.norm_lp(p)
}

/// Residuals of the summation-theoretic intertwining identities at degree `n`
/// and level `k`, plus the Hardy-norm transfer at p = 1 and p = 2.
#[derive(Debug, Clone, Serialize)]
pub struct IntertwineReport {
    pub n: u64,
    pub k: usize,
    /// `||gamma(sigma_n(x)) - sigma_n(gamma(x))||_inf`.
    pub cesaro: f64,
    /// `||gamma(E_k(x)) - S_{M_{2k}}(gamma(x))||_inf`.
    pub fourier_truncation: f64,
    /// `||gamma(E_k(x)) - E_{2k}(gamma(x))||_inf`.
    pub cond_exp: f64,
    /// `| even-filtration Hardy norm of gamma(x) - factor Hardy norm |`, p = 1, 2.
    pub hardy_p1: f64,
    pub hardy_p2: f64,
}

impl IntertwineReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.cesaro,
            self.fourier_truncation,
            self.cond_exp,
            self.hardy_p1,
            self.hardy_p2,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn pass(&self) -> bool {
        self.max_residual() <= TRANSFER_TOL
    }
}

/// Verify that the embedding intertwines Cesàro means (`n`-th) and
/// conditional expectations (level `k`, doubled to `2k` classically), and
/// that Hardy norms transfer.
pub fn intertwine(
    fctx: &FactorContext,
    sctx: &SystemContext,
    x: &Operator,
    n: u64,
    k: usize,
) -> Result<IntertwineReport> {
    check_alignment(fctx, sctx)?;
    let gx = gamma(fctx, sctx, x)?;

    let factor_cesaro = gamma(fctx, sctx, &fctx.nc_cesaro(x, n)?)?;
    let field_cesaro = gx.field.cesaro(sctx, n)?;
    let cesaro = factor_cesaro.field.sub(&field_cesaro).norm_inf();

    let embedded_exp = gamma(fctx, sctx, &fctx.factor_cond_exp(x, k)?)?;
    let cutoff = fctx.doubled().cumulative(2 * k);
    let fourier_truncation = embedded_exp
        .field
        .sub(&gx.field.partial_sum(sctx, cutoff)?)
        .norm_inf();
    let cond_exp = embedded_exp.field.sub(&gx.field.cond_exp(2 * k)).norm_inf();

    let hardy_p1 = (even_hardy_c_norm(&gx.field, 1.0)? - factor_hardy_c_norm(fctx, x, 1.0)?).abs();
    let hardy_p2 = (even_hardy_c_norm(&gx.field, 2.0)? - factor_hardy_c_norm(fctx, x, 2.0)?).abs();

    Ok(IntertwineReport {
        n,
        k,
        cesaro,
        fourier_truncation,
        cond_exp,
        hardy_p1,
        hardy_p2,
    })
}

/// Level sets transfer: `phi(chi_{(lambda,inf)}(|gamma(x)|))` equals
/// `tau(chi_{(lambda,inf)}(|x|))` on a grid that keeps away from the singular
/// values of `x` (classification at a jump point is ill-posed). Returns the
/// max deviation over the grid actually used.
pub fn level_set_transfer(
    fctx: &FactorContext,
    sctx: &SystemContext,
    x: &Operator,
    grid: usize,
) -> Result<f64> {
    let gx = gamma(fctx, sctx, x)?;
    let singular = x.singular_values();
    let top = singular.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0.0);
    }
    let mut worst = 0.0_f64;
    for i in 0..grid {
        let lambda = top * (i as f64 + 0.5) / grid as f64;
        if singular.iter().any(|s| (s - lambda).abs() < 1e-6) {
            continue;
        }
        let source_mass = x
            .abs()
            .spectral_projection(Interval::above(lambda))?
            .trace();
        let mut field_mass = 0.0;
        for t in 0..gx.field.points() {
            field_mass += gx
                .field
                .value(t)
                .abs()
                .spectral_projection(Interval::above(lambda))?
                .trace();
        }
        field_mass /= gx.field.points() as f64;
        worst = worst.max((field_mass - source_mass).abs());
    }
    Ok(worst)
}

/// Projections embed to projection-valued fields.
pub fn projection_transfers(
    fctx: &FactorContext,
    sctx: &SystemContext,
    e: &Projection,
) -> Result<()> {
    let ge = gamma(fctx, sctx, e.operator())?;
    for t in 0..ge.field.points() {
        Projection::try_new(ge.field.value(t).clone())?;
    }
    Ok(())
}
