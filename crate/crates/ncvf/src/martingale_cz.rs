//! Stopping-time projections, the regularized Calderón-Zygmund splitting of a
//! positive operator field, and the weak-type (1,1) projection certificates
//! built from sup-kernel integrals of the bad parts.
//!
//! The recursion `q_0 = 1`, `q_n = q_{n-1} - chi_{(lambda,inf)}(q_{n-1} f_n
//! q_{n-1})` with `f_n = E_n(f)` produces a decreasing chain of cube-constant
//! projection fields: the noncommutative replacement for the first time a
//! martingale exceeds `lambda`. Everything downstream (good/bad splitting,
//! off-cube maximal sums, certificate projections) is assembled per level and
//! per cube, truncated exactly at the depth where the filtration stabilizes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{BoundReport, BoundRow};
use crate::matrix::{projection_meet, Interval, Operator, Projection};
use crate::operator_field::OperatorField;
use crate::vilenkin::SystemContext;

/// Commutator / endpoint tolerance for the stopping-time invariants.
const CUCULESCU_TOL: f64 = 1e-8;
/// Reconstruction and cube-average tolerance for the splitting.
const SPLIT_TOL: f64 = 1e-9;
/// Tolerance for the certificate sup-bounds, looser because the comparison
/// operators accumulate `O(N * M_N)` kernel-integral terms.
const CERT_TOL: f64 = 1e-7;

/// `chi_window(x)` applied fiberwise; fibers are symmetrized before the
/// eigendecomposition.
fn spectral_field(x: &OperatorField, window: Interval) -> Result<OperatorField> {
    let mut vals = Vec::with_capacity(x.points() as usize);
    for t in 0..x.points() {
        let p = x.value(t).symmetrize().spectral_projection(window)?;
        vals.push(p.into_operator());
    }
    Ok(OperatorField::new(x.radix().clone(), vals))
}

/// Fiberwise meet of two projection fields.
fn meet_field(a: &OperatorField, b: &OperatorField) -> Result<OperatorField> {
    let mut vals = Vec::with_capacity(a.points() as usize);
    for t in 0..a.points() {
        let e = Projection::try_new(a.value(t).clone())?;
        let q = Projection::try_new(b.value(t).clone())?;
        vals.push(projection_meet(&e, &q)?.into_operator());
    }
    Ok(OperatorField::new(a.radix().clone(), vals))
}

fn mismatch(what: &str, residual: f64, tol: f64) -> Error {
    Error::PipelineMismatch {
        what: what.to_string(),
        residual,
        tol,
    }
}

/// The decreasing chain of stopping-time projections at threshold `lambda`,
/// with the level increments `p_n` and the terminal projection `q`.
#[derive(Debug, Clone)]
pub struct CuculescuResult {
    lambda: f64,
    /// `q_1, ..., q_N`.
    q_seq: Vec<OperatorField>,
    /// `p_1 = 1 - q_1`, `p_n = q_{n-1} - q_n`.
    p_seq: Vec<OperatorField>,
    /// Terminal projection `q = q_N` (the meet of the decreasing chain).
    q: OperatorField,
}

impl CuculescuResult {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn depth(&self) -> usize {
        self.q_seq.len()
    }

    /// `q_n`; level 0 is the identity.
    pub fn q_level(&self, n: usize) -> OperatorField {
        if n == 0 {
            OperatorField::identity(self.q.radix().clone(), self.q.fiber_dim())
        } else {
            self.q_seq[n - 1].clone()
        }
    }

    /// `p_n` for `1 <= n <= N`.
    pub fn p_level(&self, n: usize) -> &OperatorField {
        &self.p_seq[n - 1]
    }

    pub fn q(&self) -> &OperatorField {
        &self.q
    }

    /// `phi(1 - q)`: the measure of the set where the martingale escaped.
    pub fn tail(&self) -> f64 {
        1.0 - self.q.phi().re
    }

    /// Fiber projection of `q_k` on the level-`k` cube `Q` (`Eq. q_Q`).
    pub fn q_fiber(&self, k: usize, cube: u64) -> Operator {
        self.q_level(k).value(cube).clone()
    }

    /// Fiber projection of `p_k` on the level-`k` cube `Q`.
    pub fn p_fiber(&self, k: usize, cube: u64) -> Operator {
        self.p_seq[k - 1].value(cube).clone()
    }
}

/// Run the stopping-time recursion on a positive field and verify the four
/// lemma properties (cube-constancy, commutation, `q_n f_n q_n <= lambda`,
/// and the weak-type bound `lambda phi(1-q) <= phi((1-q) f) <= ||f||_1`)
/// before returning.
pub fn cuculescu(f: &OperatorField, lambda: f64) -> Result<CuculescuResult> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    f.require_positive(1e-9)?;
    let radix = f.radix().clone();
    let depth = radix.depth();
    let dim = f.fiber_dim();

    let mut q_prev = OperatorField::identity(radix.clone(), dim);
    let mut q_seq = Vec::with_capacity(depth);
    let mut p_seq = Vec::with_capacity(depth);
    for n in 1..=depth {
        let f_n = f.cond_exp(n);
        let a = q_prev.mul(&f_n).mul(&q_prev).map(|x| x.symmetrize());
        let over = spectral_field(&a, Interval::above(lambda))?;
        let q_n = q_prev.sub(&over);

        // (i) each fiber is a projection, constant on level-n cubes
        for t in 0..q_n.points() {
            Projection::try_new(q_n.value(t).clone())?;
            let rep = radix.cube_of(t, n);
            let dev = q_n.value(t).sub(q_n.value(rep)).op_norm();
            if dev > 1e-9 {
                return Err(mismatch("stopping projection cube-constancy", dev, 1e-9));
            }
        }
        // (ii) q_n commutes with q_{n-1} f_n q_{n-1}
        let comm = q_n
            .mul(&a)
            .sub(&a.mul(&q_n))
            .values()
            .iter()
            .map(Operator::op_norm)
            .fold(0.0, f64::max);
        if comm > CUCULESCU_TOL {
            return Err(mismatch("stopping projection commutation", comm, CUCULESCU_TOL));
        }
        // (iii) q_n f_n q_n <= lambda
        let mut top = f64::NEG_INFINITY;
        for t in 0..q_n.points() {
            let b = q_n.value(t).mul(f_n.value(t)).mul(q_n.value(t)).symmetrize();
            let (vals, _) = b.hermitian_eigen()?;
            top = vals.iter().cloned().fold(top, f64::max);
        }
        if top > lambda + CUCULESCU_TOL {
            return Err(mismatch("stopped martingale level bound", top - lambda, CUCULESCU_TOL));
        }

        p_seq.push(q_prev.sub(&q_n));
        q_seq.push(q_n.clone());
        q_prev = q_n;
    }
    let q = q_prev;

    // telescoping: sum of the increments is exactly 1 - q
    let mut sump = OperatorField::zeros(radix.clone(), dim);
    for p in &p_seq {
        sump = sump.add(p);
    }
    let ident = OperatorField::identity(radix.clone(), dim);
    let tele = sump.sub(&ident.sub(&q)).norm_inf();
    if tele > 1e-12 {
        return Err(mismatch("increment telescoping", tele, 1e-12));
    }
    // p_Q q_Q = 0 per cube
    for (n, p) in p_seq.iter().enumerate() {
        let pq = p.mul(&q_seq[n]).norm_inf();
        if pq > CUCULESCU_TOL {
            return Err(mismatch("increment orthogonal to stopped part", pq, CUCULESCU_TOL));
        }
    }
    // (iv) weak-type bound
    let tail = 1.0 - q.phi().re;
    let escaped_mass = ident.sub(&q).mul(f).phi().re;
    let f_l1 = f.norm_lp(1.0)?;
    if lambda * tail > escaped_mass + CUCULESCU_TOL || escaped_mass > f_l1 + CUCULESCU_TOL {
        return Err(mismatch(
            "weak-type escape bound",
            (lambda * tail - escaped_mass).max(escaped_mass - f_l1),
            CUCULESCU_TOL,
        ));
    }

    Ok(CuculescuResult {
        lambda,
        q_seq,
        p_seq,
        q,
    })
}

/// Calderón-Zygmund splitting `f = g + b_d + b_off` driven by the
/// stopping-time projections, with the per-level/per-cube bad pieces cached
/// for certificate construction.
#[derive(Debug, Clone)]
pub struct CZDecomposition {
    pub f: OperatorField,
    pub lambda: f64,
    /// Regularity constant of the filtration: `max_k m_k`.
    pub r_reg: f64,
    pub stopping: CuculescuResult,
    /// Good part `g = q f q + sum_k p_k f_k p_k`.
    pub g: OperatorField,
    /// Diagonal bad part `b_d = sum_k p_k (f - f_k) p_k`.
    pub b_d: OperatorField,
    /// Off-diagonal bad part `b_off = sum_k p_k (f - f_k) q_k + q_k (f - f_k) p_k`.
    pub b_off: OperatorField,
    /// `bd_pieces[k-1][Q] = p_Q (f - f_Q) p_Q chi_Q` on level-`k` cubes.
    bd_pieces: Vec<Vec<OperatorField>>,
    /// `boff_pieces[k-1][Q] = p_Q (f - f_Q) q_Q chi_Q + q_Q (f - f_Q) p_Q chi_Q`.
    boff_pieces: Vec<Vec<OperatorField>>,
}

impl CZDecomposition {
    pub fn depth(&self) -> usize {
        self.bd_pieces.len()
    }

    pub fn bd_piece(&self, k: usize, cube: u64) -> &OperatorField {
        &self.bd_pieces[k - 1][cube as usize]
    }

    pub fn boff_piece(&self, k: usize, cube: u64) -> &OperatorField {
        &self.boff_pieces[k - 1][cube as usize]
    }
}

/// Split a positive field at threshold `lambda` and verify the splitting
/// invariants: exact reconstruction, `||g||_1 <= ||f||_1`,
/// `||g||_inf <= R_reg max(lambda, ||E_0 f||_inf)` (which is `R_reg lambda`
/// in the interesting regime `lambda >= ||E_0 f||_inf`), and the diagonal
/// `L_1` bound.
pub fn cz_decompose(f: &OperatorField, lambda: f64) -> Result<CZDecomposition> {
    let stopping = cuculescu(f, lambda)?;
    let radix = f.radix().clone();
    let depth = radix.depth();
    let r_reg = radix.m_max() as f64;

    let q = stopping.q().clone();
    let mut g = q.mul(f).mul(&q);
    let mut b_d = OperatorField::zeros(radix.clone(), f.fiber_dim());
    let mut b_off = b_d.clone();
    let mut bd_pieces = Vec::with_capacity(depth);
    let mut boff_pieces = Vec::with_capacity(depth);
    let mut diag_l1 = 0.0;
    for k in 1..=depth {
        let f_k = f.cond_exp(k);
        let p_k = stopping.p_level(k);
        let q_k = stopping.q_level(k);
        let dev = f.sub(&f_k);
        let diag = p_k.mul(&dev).mul(p_k);
        let off = p_k.mul(&dev).mul(&q_k).add(&q_k.mul(&dev).mul(p_k));
        g = g.add(&p_k.mul(&f_k).mul(p_k));
        b_d = b_d.add(&diag);
        b_off = b_off.add(&off);
        diag_l1 += diag.norm_lp(1.0)?;
        let cubes = radix.cumulative(k);
        bd_pieces.push((0..cubes).map(|c| diag.restrict_to_cube(k, c)).collect());
        boff_pieces.push((0..cubes).map(|c| off.restrict_to_cube(k, c)).collect());
    }

    let recon = f.sub(&g).sub(&b_d).sub(&b_off).norm_lp(1.0)?;
    if recon > SPLIT_TOL {
        return Err(mismatch("splitting reconstruction", recon, SPLIT_TOL));
    }
    let f_l1 = f.norm_lp(1.0)?;
    let g_l1 = g.norm_lp(1.0)?;
    if g_l1 > f_l1 + SPLIT_TOL {
        return Err(mismatch("good part L1 bound", g_l1 - f_l1, SPLIT_TOL));
    }
    // The first stopping step is seeded by the fiber average E_0(f), a
    // matrix, so the k = 1 good-part term is only controlled by its operator
    // norm; the uniform bound collapses to R_reg * lambda exactly when
    // lambda dominates ||E_0(f)||_inf.
    let g_inf = g.norm_inf();
    let g_cap = r_reg * lambda.max(f.cond_exp(0).norm_inf());
    if g_inf > g_cap + CUCULESCU_TOL {
        return Err(mismatch("good part uniform bound", g_inf - g_cap, CUCULESCU_TOL));
    }
    if diag_l1 > 2.0 * f_l1 + CUCULESCU_TOL {
        return Err(mismatch("diagonal L1 bound", diag_l1 - 2.0 * f_l1, CUCULESCU_TOL));
    }

    Ok(CZDecomposition {
        f: f.clone(),
        lambda,
        r_reg,
        stopping,
        g,
        b_d,
        b_off,
        bd_pieces,
        boff_pieces,
    })
}

/// Off-cube maximal sum of one off-diagonal piece:
/// `A_{k,Q} = sum_{n >= k} |sigma~_n(b_off^{k,Q})| chi_{complement of Q}`,
/// with the scale sum truncated at the last defined sup-kernel.
pub fn off_cube_maximal(
    cz: &CZDecomposition,
    ctx: &SystemContext,
    k: usize,
    cube: u64,
) -> Result<OperatorField> {
    let depth = cz.depth();
    let piece = cz.boff_piece(k, cube);
    let mut acc = OperatorField::zeros(piece.radix().clone(), piece.fiber_dim());
    for n in k..depth {
        let term = piece.tilde_sigma_unchecked(ctx, n)?.abs();
        acc = acc.add(&term.restrict_off_cube(k, cube));
    }
    Ok(acc)
}

/// Projection certificate for the weak-type (1,1) behaviour of the maximal
/// Cesàro operator at one threshold: on `e` all `sigma~_n` of the bad parts
/// stay below `lambda`, and the complement has measure `<= c ||f||_1 / lambda`.
#[derive(Debug, Clone, Serialize)]
pub struct WeakTypeCertificate {
    pub lambda: f64,
    pub depth: usize,
    /// `max_n ||e sigma~_n(f) e||_inf`.
    pub sup_bound: f64,
    /// `phi(1 - e)`.
    pub tail: f64,
    /// `lambda phi(1 - e_1) / ||f||_1`.
    pub fitted_c_bd: f64,
    /// `lambda phi(1 - e_2) / ||f||_1`.
    pub fitted_c_boff: f64,
    /// `lambda phi(1 - e) / ||f||_1`.
    pub fitted_c_total: f64,
    /// Where the diagonal comparison operator stays below `lambda`, meet `q`.
    pub e1: OperatorField,
    /// Same for the off-diagonal comparison operator.
    pub e2: OperatorField,
    /// `e = e1 /\ e2`: the certified projection.
    pub e: OperatorField,
}

impl WeakTypeCertificate {
    /// The scalar summary exported by the harness.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "lambda": self.lambda,
            "depth": self.depth,
            "fitted_c_bd": self.fitted_c_bd,
            "fitted_c_boff": self.fitted_c_boff,
            "fitted_c_total": self.fitted_c_total,
            "tail": self.tail,
            "sup_bound": self.sup_bound,
        })
    }
}

/// Build the weak-type certificate at threshold `lambda`: comparison operators
/// `B_d` (off-cube sup-kernel integrals of `|b_d^{k,Q}|`) and `B_off` (sums of
/// [`off_cube_maximal`]), certificate projections by spectral cutoff below
/// `lambda` met with the terminal stopping projection, and the sup-bounds
/// `||e sigma~_n(b) e||_inf <= lambda` verified for both bad parts. The good
/// part is controlled through `||sigma~_n(g)||_inf <= c_hat R_reg lambda` with
/// `c_hat` the fitted sup-kernel integral constant.
pub fn weak11_certificate(
    f: &OperatorField,
    lambda: f64,
    ctx: &SystemContext,
) -> Result<WeakTypeCertificate> {
    f.check_ctx(ctx)?;
    let cz = cz_decompose(f, lambda)?;
    let radix = f.radix().clone();
    let depth = radix.depth();

    let mut comp_d = OperatorField::zeros(radix.clone(), f.fiber_dim());
    let mut comp_off = comp_d.clone();
    for k in 1..=depth {
        for cube in 0..radix.cumulative(k) {
            let piece_abs = cz.bd_piece(k, cube).abs();
            for n in k..depth {
                let term = piece_abs.tilde_sigma(ctx, n)?;
                comp_d = comp_d.add(&term.restrict_off_cube(k, cube));
            }
            comp_off = comp_off.add(&off_cube_maximal(&cz, ctx, k, cube)?);
        }
    }

    let below = Interval {
        lo: f64::NEG_INFINITY,
        lo_closed: false,
        hi: lambda,
        hi_closed: false,
    };
    let q = cz.stopping.q();
    let e1 = meet_field(&spectral_field(&comp_d, below)?, q)?;
    let e2 = meet_field(&spectral_field(&comp_off, below)?, q)?;
    let e = meet_field(&e1, &e2)?;

    // e <= q
    let dom = q.mul(&e).sub(&e).norm_inf();
    if dom > CERT_TOL {
        return Err(mismatch("certificate below stopping projection", dom, CERT_TOL));
    }
    // sup-bounds on the bad parts over the certified projections
    let sup_int_c = ctx.verify_kernel_bound(crate::vilenkin::KernelLemma::SupIntegral)?.fitted_c();
    let mut sup_bound = f64::NEG_INFINITY;
    for n in 0..depth {
        let sd = e.mul(&cz.b_d.tilde_sigma_unchecked(ctx, n)?).mul(&e).norm_inf();
        if sd > lambda + CERT_TOL {
            return Err(mismatch("diagonal certificate sup-bound", sd - lambda, CERT_TOL));
        }
        let so = e.mul(&cz.b_off.tilde_sigma_unchecked(ctx, n)?).mul(&e).norm_inf();
        if so > lambda + CERT_TOL {
            return Err(mismatch("off-diagonal certificate sup-bound", so - lambda, CERT_TOL));
        }
        // the good-part cap degrades to R_reg * ||E_0(f)||_inf below that
        // threshold, matching the uniform bound proved by cz_decompose
        let g_cap = sup_int_c * cz.r_reg * lambda.max(f.cond_exp(0).norm_inf());
        let sg = cz.g.tilde_sigma(ctx, n)?.norm_inf();
        if sg > g_cap + CERT_TOL {
            return Err(mismatch("good part sup-bound", sg - g_cap, CERT_TOL));
        }
        let sf = e.mul(&f.tilde_sigma(ctx, n)?).mul(&e).norm_inf();
        sup_bound = sup_bound.max(sf);
    }
    if !sup_bound.is_finite() {
        sup_bound = 0.0;
    }

    let f_l1 = f.norm_lp(1.0)?;
    let fit = |tail: f64| if f_l1 > 0.0 { lambda * tail / f_l1 } else { 0.0 };
    let tail1 = 1.0 - e1.phi().re;
    let tail2 = 1.0 - e2.phi().re;
    let tail = 1.0 - e.phi().re;

    Ok(WeakTypeCertificate {
        lambda,
        depth,
        sup_bound,
        tail,
        fitted_c_bd: fit(tail1),
        fitted_c_boff: fit(tail2),
        fitted_c_total: fit(tail),
        e1,
        e2,
        e,
    })
}

/// `L_1` control of one off-cube maximal sum:
/// `||A_{k,Q}||_1 <= c lambda^{1/2} phi(p_Q chi_Q)^{1/2} phi(p_Q f p_Q chi_Q)^{1/2}`,
/// both sides computed exactly, with the `p_Q f_Q q_Q = 0` identity checked as
/// a precondition. A vanishing `p_Q` makes both sides zero (degenerate PASS).
pub fn verify_offdiag_l1(
    cz: &CZDecomposition,
    ctx: &SystemContext,
    k: usize,
    cube: u64,
) -> Result<BoundReport> {
    let radix = cz.f.radix();
    if k == 0 || k > radix.depth() || cube >= radix.cumulative(k) {
        return Err(Error::InvalidParams {
            what: "off-diagonal L1 check",
            detail: format!("level {k} / cube {cube} out of range"),
        });
    }
    let p_q = cz.stopping.p_fiber(k, cube);
    let q_q = cz.stopping.q_fiber(k, cube);
    let f_q = cz.f.cond_exp(k).value(cube).clone();
    let pfq = p_q.mul(&f_q).mul(&q_q).op_norm();
    if pfq > CUCULESCU_TOL {
        return Err(mismatch("averaged cross term vanishing", pfq, CUCULESCU_TOL));
    }

    let lhs = off_cube_maximal(cz, ctx, k, cube)?.norm_lp(1.0)?;
    let p_field = cz.stopping.p_level(k);
    let p_mass = p_field.restrict_to_cube(k, cube).phi().re;
    let pfp_mass = p_field
        .mul(&cz.f)
        .mul(p_field)
        .restrict_to_cube(k, cube)
        .phi()
        .re;
    let rhs = cz.lambda.sqrt() * p_mass.max(0.0).sqrt() * pfp_mass.max(0.0).sqrt();

    let mut report = BoundReport::new("offdiag-l1", ctx.name(), radix.depth(), ctx.delta());
    report.push(BoundRow::new(
        &[
            ("lambda", cz.lambda),
            ("k", k as f64),
            ("cube", cube as f64),
            ("p_mass", p_mass),
        ],
        lhs,
        rhs,
    ));
    Ok(report)
}

/// Sweep [`verify_offdiag_l1`] over every level and cube of a decomposition.
pub fn offdiag_l1_sweep(cz: &CZDecomposition, ctx: &SystemContext) -> Result<BoundReport> {
    let radix = cz.f.radix();
    let mut report = BoundReport::new("offdiag-l1", ctx.name(), radix.depth(), ctx.delta());
    for k in 1..=radix.depth() {
        for cube in 0..radix.cumulative(k) {
            let one = verify_offdiag_l1(cz, ctx, k, cube)?;
            for row in one.rows() {
                report.push(row.clone());
            }
        }
    }
    Ok(report)
}
