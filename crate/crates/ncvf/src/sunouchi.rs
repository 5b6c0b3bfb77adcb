//! Lacunary square functions of Cesàro-vs-martingale differences, on both the
//! semi-commutative side (`T_k = sigma_{n_k} - E_k`) and the factor side
//! (`sigma^R_{n_k} - E_k` with doubled index blocks), plus the multiplier
//! analysis that controls them in `L_2` and the asymmetric maximal-bound
//! assembly built on top.

use crate::error::{Error, Result};
use crate::harness::{BoundReport, BoundRow};
use crate::matrix::{Operator, C64};
use crate::nc_factor::FactorContext;
use crate::operator_field::{
    lambda_search, seq_l2c_norm, square_function_of, CertificateFlavor, OperatorField, SimpleAtom,
};
use crate::transference::{even_hardy_c_norm, factor_hardy_c_norm, gamma};
use crate::vilenkin::{KernelKind, RadixSequence, SystemContext};

const CROSS_TOL: f64 = 1e-9;
const RATIO_TOL: f64 = 1e-8;

/// One difference operator: Cesàro mean of the given degree against the
/// conditional expectation at the given filtration level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionEntry {
    /// Filtration level of the expectation (and the Dirichlet cutoff `M_level`).
    pub level: usize,
    /// Cesàro degree `n_k`.
    pub degree: u64,
}

/// A lacunary selection: degrees sandwiched into consecutive index blocks,
/// one per retained level. `stride = 1` walks every level; `stride = 2` walks
/// the even levels of a doubled radix (the factor-side convention).
#[derive(Debug, Clone)]
pub struct LacunarySelection {
    rule: String,
    stride: usize,
    entries: Vec<SelectionEntry>,
}

impl LacunarySelection {
    fn validate(radix: &RadixSequence, stride: usize, entries: &[SelectionEntry]) -> Result<()> {
        let mut prev_level = 0usize;
        for e in entries {
            if e.level < stride || e.level > radix.depth() || e.level % stride != 0 {
                return Err(Error::InvalidParams {
                    what: "lacunary selection",
                    detail: format!("level {} invalid for stride {stride}", e.level),
                });
            }
            if e.level <= prev_level && prev_level != 0 {
                return Err(Error::InvalidParams {
                    what: "lacunary selection",
                    detail: "levels must be strictly increasing".into(),
                });
            }
            let lo = radix.cumulative(e.level - stride);
            let hi = radix.cumulative(e.level);
            if e.degree < lo || e.degree >= hi {
                return Err(Error::InvalidParams {
                    what: "lacunary selection",
                    detail: format!(
                        "degree {} escapes the block [{lo}, {hi}) at level {}",
                        e.degree, e.level
                    ),
                });
            }
            prev_level = e.level;
        }
        Ok(())
    }

    pub fn new(radix: &RadixSequence, rule: &str, entries: Vec<SelectionEntry>) -> Result<Self> {
        Self::validate(radix, 1, &entries)?;
        Ok(LacunarySelection {
            rule: rule.to_string(),
            stride: 1,
            entries,
        })
    }

    /// Default rule `n_k = M_{k-1}` at every level.
    pub fn default_for(radix: &RadixSequence) -> Self {
        let entries = (1..=radix.depth())
            .map(|k| SelectionEntry {
                level: k,
                degree: radix.cumulative(k - 1),
            })
            .collect();
        LacunarySelection {
            rule: "n_k = M_{k-1}".into(),
            stride: 1,
            entries,
        }
    }

    /// Factor-side default over a doubled radix: degrees `M_{2(k-1)}` in the
    /// doubled blocks, expectations at the even levels.
    pub fn doubled_default(doubled: &RadixSequence) -> Result<Self> {
        let half = doubled.depth() / 2;
        if doubled.depth() % 2 != 0 {
            return Err(Error::InvalidParams {
                what: "lacunary selection",
                detail: "doubled selection needs an even depth".into(),
            });
        }
        let entries: Vec<SelectionEntry> = (1..=half)
            .map(|k| SelectionEntry {
                level: 2 * k,
                degree: doubled.cumulative(2 * (k - 1)),
            })
            .collect();
        Self::validate(doubled, 2, &entries)?;
        Ok(LacunarySelection {
            rule: "n_k = M_{2(k-1)}".into(),
            stride: 2,
            entries,
        })
    }

    /// Split a general increasing lacunary sequence into the minimal number
    /// of sub-selections, each with at most one degree per index block.
    pub fn split(radix: &RadixSequence, seq: &[u64]) -> Result<Vec<Self>> {
        if seq.windows(2).any(|w| w[1] <= w[0]) || seq.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParams {
                what: "lacunary selection",
                detail: "sequence must be strictly increasing and positive".into(),
            });
        }
        let mut blocks: Vec<Vec<u64>> = vec![Vec::new(); radix.depth() + 1];
        for &n in seq {
            if n >= radix.group_size() {
                return Err(Error::InvalidParams {
                    what: "lacunary selection",
                    detail: format!("degree {n} not representable at this depth"),
                });
            }
            let level = (1..=radix.depth())
                .find(|&k| n < radix.cumulative(k))
                .expect("bounded by group size");
            blocks[level].push(n);
        }
        let count = blocks.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let entries: Vec<SelectionEntry> = (1..=radix.depth())
                .filter_map(|level| {
                    blocks[level].get(i).map(|&degree| SelectionEntry { level, degree })
                })
                .collect();
            if entries.is_empty() {
                continue;
            }
            Self::validate(radix, 1, &entries)?;
            out.push(LacunarySelection {
                rule: format!("split {}/{count}", i + 1),
                stride: 1,
                entries,
            });
        }
        Ok(out)
    }

    pub fn rule(&self) -> &str {
        &self.rule
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn entries(&self) -> &[SelectionEntry] {
        &self.entries
    }

    /// Difference multiplier of one entry at frequency `j`:
    /// Fejér coefficient minus Dirichlet cutoff indicator.
    pub fn multiplier(&self, radix: &RadixSequence, entry: SelectionEntry, j: u64) -> f64 {
        let fejer = if j <= entry.degree {
            (entry.degree - j) as f64 / entry.degree as f64
        } else {
            0.0
        };
        let dirichlet = if j < radix.cumulative(entry.level) { 1.0 } else { 0.0 };
        fejer - dirichlet
    }
}

/// Exact supremum over all frequencies of the squared multiplier column sums
/// `sum_k m_k(j)^2` — the scalar constant behind the `L_2` bound.
pub fn multiplier_sup(radix: &RadixSequence, selection: &LacunarySelection) -> f64 {
    let mut sup = 0.0_f64;
    for j in 0..radix.group_size() {
        let s: f64 = selection
            .entries()
            .iter()
            .map(|&e| selection.multiplier(radix, e, j).powi(2))
            .sum();
        sup = sup.max(s);
    }
    sup
}

/// The difference family `T_k(f)` with its column square function.
#[derive(Debug, Clone)]
pub struct SunouchiData {
    pub entries: Vec<SelectionEntry>,
    pub terms: Vec<OperatorField>,
    /// `U(f) = (sum_k |T_k f|^2)^{1/2}`.
    pub u: OperatorField,
}

/// Apply every difference operator of the selection, cross-checking the
/// operator pipeline (`sigma_{n_k} - E_k`) against the multiplier pipeline
/// (coefficientwise `m_k(j) f^(j)`), and verifying the `L_2` ratio against
/// the scalar multiplier supremum.
pub fn apply_u(
    ctx: &SystemContext,
    f: &OperatorField,
    selection: &LacunarySelection,
) -> Result<SunouchiData> {
    f.check_ctx(ctx)?;
    let radix = ctx.radix();
    let coeffs = f.fourier_coeffs(ctx)?;
    let mut terms = Vec::with_capacity(selection.entries().len());
    for &entry in selection.entries() {
        let direct = f.cesaro(ctx, entry.degree)?.sub(&f.cond_exp(entry.level));
        // multiplier pipeline: sum_j m(j) f^(j) psi_j
        let mut by_multiplier =
            OperatorField::zeros(radix.clone(), f.fiber_dim());
        for (j, c) in coeffs.iter().enumerate() {
            let m = selection.multiplier(radix, entry, j as u64);
            if m == 0.0 {
                continue;
            }
            let psi = ctx.psi(j as u64)?;
            let mut vals = Vec::with_capacity(by_multiplier.points() as usize);
            for t in 0..by_multiplier.points() {
                vals.push(
                    by_multiplier
                        .value(t)
                        .add(&c.scale(psi.value(t) * C64::new(m, 0.0))),
                );
            }
            by_multiplier = OperatorField::new(radix.clone(), vals);
        }
        let dev = direct.sub(&by_multiplier).norm_inf();
        if dev > CROSS_TOL {
            return Err(Error::PipelineMismatch {
                what: format!(
                    "difference operator pipelines at level {} degree {}",
                    entry.level, entry.degree
                ),
                residual: dev,
                tol: CROSS_TOL,
            });
        }
        terms.push(direct);
    }
    let u = square_function_of(&terms)?;

    let f_l2 = f.norm_lp(2.0)?;
    if f_l2 > 0.0 {
        let ratio = seq_l2c_norm(&terms, 2.0)? / f_l2;
        let cap = multiplier_sup(radix, selection).sqrt();
        if ratio > cap + RATIO_TOL {
            return Err(Error::PipelineMismatch {
                what: "L2 square-function bound against the multiplier supremum".into(),
                residual: ratio - cap,
                tol: RATIO_TOL,
            });
        }
    }
    Ok(SunouchiData {
        entries: selection.entries().to_vec(),
        terms,
        u,
    })
}

/// Ratio of the column-square-function norm of the difference family to the
/// column Hardy norm of the input, `1 <= p <= 2`. A vanishing denominator
/// under a nonvanishing numerator is a hard failure.
pub fn so1_ratio(
    ctx: &SystemContext,
    f: &OperatorField,
    p: f64,
    selection: &LacunarySelection,
) -> Result<BoundReport> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidExponent(p));
    }
    let data = apply_u(ctx, f, selection)?;
    let numerator = seq_l2c_norm(&data.terms, p)?;
    let denominator = f.hardy_c_norm(p)?;
    if denominator <= 1e-12 && numerator > 1e-10 {
        return Err(Error::PipelineMismatch {
            what: "square-function norm without Hardy mass".into(),
            residual: numerator,
            tol: 1e-10,
        });
    }
    let mut report = BoundReport::new("sunouchi-hardy-ratio", ctx.name(), ctx.radix().depth(), ctx.delta());
    report.push(BoundRow::new(&[("p", p)], numerator, denominator));
    Ok(report)
}

/// Atom case at `p = 1`: the raw square-function numerator of a generated
/// atom, reported against a unit right side so the fitted constant is the
/// numerator itself.
pub fn so1_atom_report(
    ctx: &SystemContext,
    atom: &SimpleAtom,
    selection: &LacunarySelection,
) -> Result<BoundReport> {
    let data = apply_u(ctx, &atom.field, selection)?;
    let numerator = seq_l2c_norm(&data.terms, 1.0)?;
    let mut report = BoundReport::new("sunouchi-atom", ctx.name(), ctx.radix().depth(), ctx.delta());
    report.push(BoundRow::new(&[("level", atom.level as f64)], numerator, 1.0));
    Ok(report)
}

/// `sigma_n^+(f)`: integration against the absolute value of the Fejér
/// kernel — the positive majorant used by the full-range `p = 2` domination.
pub fn sigma_plus(ctx: &SystemContext, f: &OperatorField, n: u64) -> Result<OperatorField> {
    f.check_ctx(ctx)?;
    let table = ctx.kernel(KernelKind::Fejer(n))?;
    let size = f.points();
    let mut vals = Vec::with_capacity(size as usize);
    for eta in 0..size {
        let mut acc = Operator::zeros(f.fiber_dim());
        for t in 0..size {
            acc = acc.add(&f.value(t).scale(C64::new(table.value(eta, t).norm(), 0.0)));
        }
        vals.push(acc.scale(C64::new(1.0 / size as f64, 0.0)));
    }
    Ok(OperatorField::new(f.radix().clone(), vals))
}

/// Fit the smallest constant with `|sigma_n(f)|^2 <= c sigma_n^+(|f|^2)` in
/// semidefinite order, then re-verify positivity of `c B - A` pointwise at
/// the fitted constant. One row per degree.
pub fn full_range_domination(ctx: &SystemContext, f: &OperatorField) -> Result<BoundReport> {
    let mut report = BoundReport::new("full-range-domination", ctx.name(), ctx.radix().depth(), ctx.delta());
    let abs_sq = f.adjoint().mul(f);
    let size = f.points();
    let mut pairs = Vec::new();
    for n in 1..=size {
        let s = f.cesaro(ctx, n)?;
        let a = s.adjoint().mul(&s);
        let b = sigma_plus(ctx, &abs_sq, n)?;
        let mut needed = 0.0_f64;
        for t in 0..size {
            let root_inv = b.value(t).symmetrize().psd_sqrt()?.pinv();
            let pencil = root_inv.mul(a.value(t)).mul(&root_inv).symmetrize();
            let (vals, _) = pencil.hermitian_eigen()?;
            needed = needed.max(vals.into_iter().fold(0.0, f64::max));
        }
        report.push(BoundRow::new(&[("n", n as f64)], needed, 1.0));
        pairs.push((a, b));
    }
    let fitted = report.fitted_c();
    for (a, b) in &pairs {
        let diff = b.scale(C64::new(fitted, 0.0)).sub(a);
        let (min_eig, point) = diff.min_eigenvalue();
        if min_eig < -1e-8 {
            return Err(Error::CertificateViolation {
                index: point as usize,
                residual: -min_eig,
                level: fitted,
            });
        }
    }
    Ok(report)
}

/// Assemble the asymmetric maximal bound: the difference family controlled by
/// its column square function, the martingale family by the best maximal-norm
/// certificate found, their sum certified against the column Hardy norm. At
/// `p = 2` the full-range domination sweep is appended.
pub fn asym_maximal_report(
    ctx: &SystemContext,
    f: &OperatorField,
    p: f64,
    selection: &LacunarySelection,
) -> Result<BoundReport> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidExponent(p));
    }
    let data = apply_u(ctx, f, selection)?;
    let hardy = f.hardy_c_norm(p)?;
    let t_term = seq_l2c_norm(&data.terms, p)?;
    let martingale: Vec<OperatorField> = selection
        .entries()
        .iter()
        .map(|e| f.cond_exp(e.level))
        .collect();
    let cert = lambda_search(&martingale, p, CertificateFlavor::Column)?;
    let certified = cert.best.as_ref().map_or(cert.lower_bound, |b| b.certified);
    let mut report = BoundReport::new("asym-maximal", ctx.name(), ctx.radix().depth(), ctx.delta());
    report.push(BoundRow::new(&[("p", p)], t_term, hardy));
    report.push(BoundRow::new(&[("p", p)], certified, hardy));
    report.push(BoundRow::new(&[("p", p)], t_term + certified, hardy));
    if p == 2.0 {
        let dom = full_range_domination(ctx, f)?;
        for row in dom.rows() {
            report.push(row.clone());
        }
    }
    Ok(report)
}

/// Factor-side lacunary ratio, computed directly in the factor and again
/// through the embedding; the two pipelines must agree. The transfer identity
/// (embedded factor difference equals the classical difference of the
/// embedded element at the doubled level) is verified term by term.
pub fn nc_sunouchi_ratio(
    fctx: &FactorContext,
    sctx: &SystemContext,
    x: &Operator,
    p: f64,
    selection: &LacunarySelection,
) -> Result<BoundReport> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidExponent(p));
    }
    if selection.stride() != 2 {
        return Err(Error::InvalidParams {
            what: "factor-side selection",
            detail: "needs a doubled (stride 2) selection".into(),
        });
    }
    let gx = gamma(fctx, sctx, x)?;
    let mut factor_terms = Vec::new();
    let mut field_terms = Vec::new();
    for &entry in selection.entries() {
        let k = entry.level / 2;
        let direct = fctx
            .nc_cesaro(x, entry.degree)?
            .sub(&fctx.factor_cond_exp(x, k)?);
        let transferred = gamma(fctx, sctx, &direct)?;
        let classical = gx
            .field
            .cesaro(sctx, entry.degree)?
            .sub(&gx.field.cond_exp(entry.level));
        let dev = transferred.field.sub(&classical).norm_inf();
        if dev > CROSS_TOL {
            return Err(Error::PipelineMismatch {
                what: format!("difference transfer at level {}", entry.level),
                residual: dev,
                tol: CROSS_TOL,
            });
        }
        factor_terms.push(direct);
        field_terms.push(classical);
    }
    let mut sq = Operator::zeros(fctx.dim());
    for t in &factor_terms {
        sq = sq.add(&t.adjoint().mul(t));
    }
    let direct_num = sq.psd_sqrt()?.norm_lp(p)?;
    let direct_den = factor_hardy_c_norm(fctx, x, p)?;
    let transferred_num = seq_l2c_norm(&field_terms, p)?;
    let transferred_den = even_hardy_c_norm(&gx.field, p)?;

    let direct_ratio = if direct_den > 0.0 { direct_num / direct_den } else { 0.0 };
    let transferred_ratio = if transferred_den > 0.0 {
        transferred_num / transferred_den
    } else {
        0.0
    };
    if (direct_ratio - transferred_ratio).abs() > RATIO_TOL {
        return Err(Error::PipelineMismatch {
            what: "direct vs transferred lacunary ratio".into(),
            residual: (direct_ratio - transferred_ratio).abs(),
            tol: RATIO_TOL,
        });
    }
    let mut report = BoundReport::new("factor-sunouchi", sctx.name(), sctx.radix().depth(), sctx.delta());
    report.push(BoundRow::new(&[("p", p), ("pipeline", 0.0)], direct_num, direct_den));
    report.push(BoundRow::new(
        &[("p", p), ("pipeline", 1.0)],
        transferred_num,
        transferred_den,
    ));
    Ok(report)
}
