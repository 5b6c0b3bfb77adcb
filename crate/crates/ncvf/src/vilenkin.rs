//! Finite truncations of bounded Vilenkin groups, the generalized character
//! systems built over them, and the Dirichlet/Fejér kernel machinery with
//! numerical verifiers for the kernel estimates.
//!
//! A depth-`N` truncation identifies the group with the index range
//! `0..M_N` in mixed radix: the point with digits `(t_0, ..., t_{N-1})` is
//! `sum t_k M_k`. Two consequences used everywhere: the cube of level `k`
//! containing a point is its residue mod `M_k`, and digitwise operations are
//! plain arithmetic on digit vectors.
//!
//! ```
//! use ncvf::vilenkin::RadixSequence;
//!
//! let radix = RadixSequence::new(&[2, 3, 2]).unwrap();
//! assert_eq!(radix.group_size(), 12);
//! assert_eq!(radix.to_digits(7).unwrap(), vec![1, 0, 1]); // 7 = 1 + 0*2 + 1*6
//! assert_eq!(radix.cube_of(7, 1), 1);  // level-1 cube = first digit
//! ```
//!
//! Kernels are tabled exactly; at a scale jump the Dirichlet kernel is an
//! interval indicator and the Fejér multiplier has its closed form:
//!
//! ```
//! use ncvf::vilenkin::{KernelKind, RadixSequence, SystemContext, VilenkinCharacters};
//!
//! let radix = RadixSequence::new(&[2, 2, 2]).unwrap();
//! let ctx = SystemContext::new(&VilenkinCharacters, radix).unwrap();
//!
//! // at a scale jump the Dirichlet kernel is an interval indicator:
//! // D_{M_n}(eta, t) = M_n when eta and t share the first n digits, else 0
//! let d4 = ctx.kernel(KernelKind::Dirichlet(4)).unwrap();
//! assert_eq!(d4.value(5, 5).re, 4.0);
//! assert_eq!(d4.value(0, 5).re, 0.0);
//!
//! // the Fejér multiplier is exactly (n - j)/n for j <= n
//! let c = ctx.kernel_coefficient(KernelKind::Fejer(3), 1).unwrap();
//! assert!((c - 2.0 / 3.0).abs() < 1e-12);
//! ```

use crate::error::{Error, Result};
use crate::harness::{BoundReport, BoundRow};
use crate::matrix::C64;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Bounded radix sequence `m = (m_0, ..., m_{N-1})` with cumulative products
/// `M_0 = 1`, `M_{k+1} = m_k M_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadixSequence {
    m: Vec<u32>,
    cum: Vec<u64>,
}

impl RadixSequence {
    pub fn new(m: &[u32]) -> Result<Self> {
        for (position, &value) in m.iter().enumerate() {
            if value < 2 {
                return Err(Error::InvalidRadix { position, value });
            }
        }
        let mut cum = Vec::with_capacity(m.len() + 1);
        cum.push(1u64);
        for &mk in m {
            let last = *cum.last().unwrap();
            cum.push(last * mk as u64);
        }
        Ok(RadixSequence {
            m: m.to_vec(),
            cum,
        })
    }

    /// All-equal radix `(m, m, ..., m)` of the given depth.
    pub fn uniform(m: u32, depth: usize) -> Result<Self> {
        RadixSequence::new(&vec![m; depth])
    }

    pub fn depth(&self) -> usize {
        self.m.len()
    }

    pub fn radix(&self, k: usize) -> u32 {
        self.m[k]
    }

    pub fn radices(&self) -> &[u32] {
        &self.m
    }

    pub fn m_max(&self) -> u32 {
        self.m.iter().copied().max().unwrap_or(2)
    }

    /// `M_k` for `0 <= k <= depth`.
    pub fn cumulative(&self, k: usize) -> u64 {
        self.cum[k]
    }

    /// Group order `M_N`.
    pub fn group_size(&self) -> u64 {
        *self.cum.last().unwrap()
    }

    fn check_index(&self, n: u64) -> Result<()> {
        if n >= self.group_size() {
            return Err(Error::IndexOutOfRange {
                index: n,
                depth: self.depth(),
                cap: self.group_size(),
            });
        }
        Ok(())
    }

    pub fn to_digits(&self, n: u64) -> Result<Vec<u32>> {
        self.check_index(n)?;
        let mut rest = n;
        let mut digits = Vec::with_capacity(self.depth());
        for &mk in &self.m {
            digits.push((rest % mk as u64) as u32);
            rest /= mk as u64;
        }
        Ok(digits)
    }

    pub fn from_digits(&self, digits: &[u32]) -> u64 {
        assert_eq!(digits.len(), self.depth());
        digits
            .iter()
            .zip(&self.cum)
            .map(|(&d, &mk)| d as u64 * mk)
            .sum()
    }

    /// Digit `n_k`.
    pub fn digit(&self, n: u64, k: usize) -> u32 {
        ((n / self.cum[k]) % self.m[k] as u64) as u32
    }

    /// `n^{(k)}`: zero the digits below position `k`.
    pub fn truncate_below(&self, n: u64, k: usize) -> u64 {
        n - n % self.cum[k.min(self.depth())]
    }

    /// Digitwise addition mod `m_k`.
    pub fn triangle_add(&self, a: u64, b: u64) -> Result<u64> {
        self.check_index(a)?;
        self.check_index(b)?;
        let (da, db) = (self.to_digits(a)?, self.to_digits(b)?);
        let sum: Vec<u32> = da
            .iter()
            .zip(&db)
            .zip(&self.m)
            .map(|((&x, &y), &mk)| (x + y) % mk)
            .collect();
        Ok(self.from_digits(&sum))
    }

    /// Digitwise negation `(m_k - n_k) mod m_k`.
    pub fn negate(&self, n: u64) -> Result<u64> {
        self.check_index(n)?;
        let d = self.to_digits(n)?;
        let neg: Vec<u32> = d
            .iter()
            .zip(&self.m)
            .map(|(&x, &mk)| (mk - x) % mk)
            .collect();
        Ok(self.from_digits(&neg))
    }

    /// Does `eta` lie in the level-`n` cube of `t`? (first `n` digits agree)
    pub fn in_interval(&self, eta: u64, t: u64, n: usize) -> bool {
        eta % self.cum[n] == t % self.cum[n]
    }

    /// Cube id (residue mod `M_k`) of the level-`k` cube containing `t`.
    pub fn cube_of(&self, t: u64, k: usize) -> u64 {
        t % self.cum[k]
    }
}

/// A complex-valued function on the depth-`N` group, indexed by point index.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<C64>,
}

impl ScalarField {
    pub fn new(values: Vec<C64>) -> Self {
        assert!(values.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        ScalarField { values }
    }

    pub fn constant(value: C64, size: usize) -> Self {
        ScalarField {
            values: vec![value; size],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, t: u64) -> C64 {
        self.values[t as usize]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Mean over the group (uniform measure).
    pub fn integral(&self) -> C64 {
        self.values.iter().sum::<C64>() / C64::new(self.len() as f64, 0.0)
    }

    /// Level-`k` conditional expectation: average over each cube of level `k`.
    pub fn cond_exp(&self, radix: &RadixSequence, k: usize) -> ScalarField {
        let mk = radix.cumulative(k);
        let size = self.values.len() as u64;
        let per = (size / mk) as f64;
        let mut sums = vec![C64::new(0.0, 0.0); mk as usize];
        for (t, v) in self.values.iter().enumerate() {
            sums[t % mk as usize] += v;
        }
        let values = (0..size)
            .map(|t| sums[(t % mk) as usize] / C64::new(per, 0.0))
            .collect();
        ScalarField { values }
    }
}

/// Provider of the generating functions `r_k^n` of a Vilenkin-like system.
///
/// Implementations receive the full index `n` (not just its `k`-th digit) so
/// that systems whose generators genuinely depend on higher digits fit the
/// interface; both built-ins only read `n_k`.
pub trait VilenkinLikeSystem {
    fn name(&self) -> &str;

    /// `r_k^n(t)` where `t` is given by its digit vector.
    fn r(&self, radix: &RadixSequence, k: usize, n: u64, t: &[u32]) -> C64;
}

/// Classical characters of the product of cyclic groups:
/// `r_k^n(t) = exp(2 pi i t_k / m_k)^{n_k}`.
#[derive(Debug, Clone, Default)]
pub struct VilenkinCharacters;

impl VilenkinLikeSystem for VilenkinCharacters {
    fn name(&self) -> &str {
        "vilenkin"
    }

    fn r(&self, radix: &RadixSequence, k: usize, n: u64, t: &[u32]) -> C64 {
        let nk = radix.digit(n, k) as f64;
        let angle = TWO_PI * t[k] as f64 / radix.radix(k) as f64;
        C64::from_polar(1.0, angle * nk)
    }
}

/// Character system of the group of m-adic integers, where the phase of the
/// `k`-th generator also sees all lower digits through carry terms:
/// `r_k^n(t) = exp(2 pi i (t_k/m_k + t_{k-1}/(m_k m_{k-1}) + ...))^{n_k}`.
#[derive(Debug, Clone, Default)]
pub struct MAdicCharacters;

impl VilenkinLikeSystem for MAdicCharacters {
    fn name(&self) -> &str {
        "m-adic"
    }

    fn r(&self, radix: &RadixSequence, k: usize, n: u64, t: &[u32]) -> C64 {
        let nk = radix.digit(n, k) as f64;
        let mut phase = 0.0;
        let mut denom = 1.0;
        for j in (0..=k).rev() {
            denom *= radix.radix(j) as f64;
            phase += t[j] as f64 / denom;
        }
        C64::from_polar(1.0, TWO_PI * phase * nk)
    }
}

/// Outcome of the exhaustive admissibility check of a system at one depth.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub system: String,
    pub depth: usize,
    /// Largest delta for which the uniform bound `||r_k^n||_inf <= sqrt(m_k/delta)` holds.
    pub delta_max: f64,
    pub checks_run: usize,
}

/// Exhaustively verifies the admissibility conditions of a system below
/// `M_N` (tolerance 1e-10) and extracts the largest uniform-bound margin
/// `delta`. Fails with the first violated clause.
pub fn validate_system(
    system: &dyn VilenkinLikeSystem,
    radix: &RadixSequence,
) -> Result<AssumptionReport> {
    const TOL: f64 = 1e-10;
    let size = radix.group_size();
    let depth = radix.depth();
    let digits: Vec<Vec<u32>> = (0..size).map(|t| radix.to_digits(t).unwrap()).collect();
    let mut checks = 0usize;

    let violation = |clause: &str, k: usize, n: u64, l: u64, residual: f64| {
        Err(Error::AssumptionViolated {
            system: system.name().to_string(),
            clause: clause.to_string(),
            k,
            n,
            l,
            residual,
        })
    };

    let r_field = |k: usize, n: u64| -> ScalarField {
        ScalarField::new(
            digits
                .iter()
                .map(|t| system.r(radix, k, n, t))
                .collect::<Vec<_>>(),
        )
    };

    // (i): r_k^0 = 1 and r_k^n is determined by the first k+1 coordinates.
    for k in 0..depth {
        let one = r_field(k, 0);
        for t in 0..size {
            checks += 1;
            let residual = (one.value(t) - C64::new(1.0, 0.0)).norm();
            if residual > TOL {
                return violation("i: r_k^0 = 1", k, 0, 0, residual);
            }
        }
        let mk1 = radix.cumulative(k + 1);
        for n in 1..size {
            let f = r_field(k, n);
            for t in 0..size {
                checks += 1;
                let residual = (f.value(t) - f.value(t % mk1)).norm();
                if residual > TOL {
                    return violation("i: level-(k+1) measurability", k, n, 0, residual);
                }
            }
        }
    }

    // (iii): the m_k siblings above any multiple of M_{k+1} carry total mass
    // m_k. Checked before (ii) so a bad modulus is reported as a mass defect
    // rather than an orthogonality defect.
    for k in 0..depth {
        let mk = radix.cumulative(k);
        let mk1 = radix.cumulative(k + 1);
        let mut n = 0u64;
        while n < size {
            for t in 0..size {
                checks += 1;
                let total: f64 = (0..radix.radix(k) as u64)
                    .map(|j| system.r(radix, k, j * mk + n, &digits[t as usize]).norm_sqr())
                    .sum();
                let residual = (total - radix.radix(k) as f64).abs();
                if residual > TOL {
                    return violation("iii: sibling mass", k, n, 0, residual);
                }
            }
            n += mk1;
        }
    }

    // (ii): orthogonality of sibling generators under the level-k expectation.
    // Applies when the digits of n and l vanish below position k and agree
    // above it; the expectation must be the constant [n_k == l_k].
    for k in 0..depth {
        let mk = radix.cumulative(k) as usize;
        let mk1 = radix.cumulative(k + 1);
        let mut h = 0u64;
        while h < size {
            for nk in 0..radix.radix(k) as u64 {
                for lk in 0..radix.radix(k) as u64 {
                    let n = h + nk * mk as u64;
                    let l = h + lk * mk as u64;
                    let rn = r_field(k, n);
                    let rl = r_field(k, l);
                    let prod = ScalarField::new(
                        rn.values()
                            .iter()
                            .zip(rl.values())
                            .map(|(a, b)| a * b.conj())
                            .collect(),
                    );
                    let expect = prod.cond_exp(radix, k);
                    let target = if nk == lk { 1.0 } else { 0.0 };
                    for cube in 0..mk {
                        checks += 1;
                        let residual = (expect.value(cube as u64) - C64::new(target, 0.0)).norm();
                        if residual > TOL {
                            return violation("ii: conditional orthogonality", k, n, l, residual);
                        }
                    }
                }
            }
            h += mk1;
        }
    }

    // (iv): delta_max = min over (k, n) of m_k / ||r_k^n||_inf^2, required > 1.
    let mut delta_max = f64::INFINITY;
    for k in 0..depth {
        for n in 0..size {
            let f = r_field(k, n);
            let sup = f.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
            checks += 1;
            if sup > 0.0 {
                delta_max = delta_max.min(radix.radix(k) as f64 / (sup * sup));
            }
        }
    }
    if !(delta_max > 1.0) {
        return violation("iv: uniform bound margin", 0, 0, 0, delta_max);
    }

    Ok(AssumptionReport {
        system: system.name().to_string(),
        depth,
        delta_max,
        checks_run: checks,
    })
}

/// Which kernel a table or coefficient refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `D_n`, partial-sum kernel.
    Dirichlet(u64),
    /// `K_n`, Cesàro average of the first `n` partial-sum kernels.
    Fejer(u64),
    /// `K_{a,b} = D_{a+1} + ... + D_{a+b}`, the length-`b` block above `a`.
    Block(u64, u64),
    /// Pointwise maximum of `|K_l|` over `M_n <= l < M_{n+1}`.
    Sup(usize),
}

impl KernelKind {
    pub fn label(&self) -> String {
        match self {
            KernelKind::Dirichlet(n) => format!("D_{n}"),
            KernelKind::Fejer(n) => format!("K_{n}"),
            KernelKind::Block(a, b) => format!("K_{{{a},{b}}}"),
            KernelKind::Sup(n) => format!("Ktilde_{n}"),
        }
    }
}

/// Dense kernel table: one value per ordered pair `(eta, t)`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub kind: KernelKind,
    size: usize,
    /// Row-major: `values[eta * size + t]`.
    values: Vec<C64>,
}

impl KernelTable {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn value(&self, eta: u64, t: u64) -> C64 {
        self.values[eta as usize * self.size + t as usize]
    }
}

/// A validated system frozen at one depth: the full `psi` table plus the
/// admissibility margin `delta`, ready for kernel work.
pub struct SystemContext {
    radix: RadixSequence,
    name: String,
    delta: f64,
    /// `psi[n][t]` for all `n, t < M_N`.
    psi: Vec<ScalarField>,
}

impl SystemContext {
    /// Validates the system at this depth, then tabulates all `M_N` basis
    /// functions.
    pub fn new(system: &dyn VilenkinLikeSystem, radix: RadixSequence) -> Result<Self> {
        let report = validate_system(system, &radix)?;
        Self::new_unchecked_with_delta(system, radix, report.delta_max)
    }

    /// Tabulates without re-running validation; `delta` must come from a
    /// previous [`validate_system`] run.
    pub fn new_unchecked_with_delta(
        system: &dyn VilenkinLikeSystem,
        radix: RadixSequence,
        delta: f64,
    ) -> Result<Self> {
        let size = radix.group_size();
        let mut psi = Vec::with_capacity(size as usize);
        for n in 0..size {
            psi.push(psi_field(system, &radix, n)?);
        }
        Ok(SystemContext {
            name: system.name().to_string(),
            radix,
            delta,
            psi,
        })
    }

    pub fn radix(&self) -> &RadixSequence {
        &self.radix
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn group_size(&self) -> u64 {
        self.radix.group_size()
    }

    pub fn psi(&self, n: u64) -> Result<&ScalarField> {
        self.radix.check_index(n)?;
        Ok(&self.psi[n as usize])
    }

    /// Multiplier weights of a kernel: `T(eta,t) = sum_j w_j psi_j(eta) conj(psi_j(t))`.
    /// `Sup` has no multiplier representation.
    fn weights(&self, kind: KernelKind) -> Result<Vec<f64>> {
        let size = self.group_size();
        let reject = |index: u64| Error::IndexOutOfRange {
            index,
            depth: self.radix.depth(),
            cap: size,
        };
        let mut w = vec![0.0; size as usize];
        match kind {
            KernelKind::Dirichlet(n) => {
                if n > size {
                    return Err(reject(n));
                }
                for wj in w.iter_mut().take(n as usize) {
                    *wj = 1.0;
                }
            }
            KernelKind::Fejer(n) => {
                if n == 0 || n > size {
                    return Err(reject(n));
                }
                for (j, wj) in w.iter_mut().enumerate().take(n as usize) {
                    *wj = (n - j as u64) as f64 / n as f64;
                }
            }
            KernelKind::Block(a, b) => {
                // the block starting at a of length b sums D_{a+1} ... D_{a+b}
                // (this offset is what makes the digitwise decomposition of
                // l K_l into blocks exact); D_k carries frequency j iff j < k,
                // so j picks up weight #{k in (a, a+b] : k > j} = min(a+b-j, b)
                let top = a + b;
                if top > size {
                    return Err(reject(top));
                }
                for (j, wj) in w.iter_mut().enumerate() {
                    let j = j as u64;
                    if j >= top {
                        break;
                    }
                    *wj = (top - j).min(b) as f64;
                }
            }
            KernelKind::Sup(_) => {
                return Err(Error::InvalidParams {
                    what: "kernel multiplier",
                    detail: "the sup-kernel is not a Fourier multiplier".into(),
                })
            }
        }
        Ok(w)
    }

    /// One column of a multiplier kernel: `t -> T(eta, t)` for fixed `eta`...
    /// here fixed second argument `s`, i.e. the function `t -> T(t, s)`.
    fn weighted_column(&self, weights: &[f64], s: u64) -> Vec<C64> {
        let size = self.group_size() as usize;
        let mut col = vec![C64::new(0.0, 0.0); size];
        for (j, &wj) in weights.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let pj = &self.psi[j];
            let cs = pj.value(s).conj() * C64::new(wj, 0.0);
            for (t, c) in col.iter_mut().enumerate() {
                *c += pj.values()[t] * cs;
            }
        }
        col
    }

    /// `t -> |Ktilde_n(t, s)|` for fixed `s`: exact max of `|K_l(t,s)|` over
    /// the finite range `M_n <= l < M_{n+1}`.
    pub fn sup_column(&self, n: usize, s: u64) -> Result<Vec<f64>> {
        if n + 1 > self.radix.depth() {
            return Err(Error::IndexOutOfRange {
                index: n as u64,
                depth: self.radix.depth(),
                cap: self.radix.depth() as u64,
            });
        }
        let size = self.group_size() as usize;
        let lo = self.radix.cumulative(n);
        let hi = self.radix.cumulative(n + 1);
        let mut best = vec![0.0f64; size];
        for l in lo..hi {
            let col = self.weighted_column(&self.weights(KernelKind::Fejer(l))?, s);
            for (b, v) in best.iter_mut().zip(&col) {
                *b = b.max(v.norm());
            }
        }
        Ok(best)
    }

    /// Full kernel table. Quadratic in group size; meant for desk scale.
    pub fn kernel(&self, kind: KernelKind) -> Result<KernelTable> {
        let size = self.group_size() as usize;
        let mut values = vec![C64::new(0.0, 0.0); size * size];
        match kind {
            KernelKind::Sup(n) => {
                for s in 0..size as u64 {
                    let col = self.sup_column(n, s)?;
                    for (t, v) in col.iter().enumerate() {
                        values[t * size + s as usize] = C64::new(*v, 0.0);
                    }
                }
            }
            _ => {
                let w = self.weights(kind)?;
                for s in 0..size as u64 {
                    let col = self.weighted_column(&w, s);
                    for (t, v) in col.iter().enumerate() {
                        values[t * size + s as usize] = *v;
                    }
                }
            }
        }
        Ok(KernelTable { kind, size, values })
    }

    /// Closed-form multiplier value of a kernel at frequency `j`, cross-checked
    /// against the double integral `∫∫ T(eta,t) conj(psi_j(eta)) psi_j(t)`.
    pub fn kernel_coefficient(&self, kind: KernelKind, j: u64) -> Result<f64> {
        self.radix.check_index(j)?;
        let w = self.weights(kind)?;
        let closed = w[j as usize];
        let size = self.group_size();
        let pj = self.psi(j)?;
        let mut integral = C64::new(0.0, 0.0);
        for s in 0..size {
            let col = self.weighted_column(&w, s);
            let ps = pj.value(s);
            for (eta, v) in col.iter().enumerate() {
                integral += v * pj.value(eta as u64).conj() * ps;
            }
        }
        integral /= C64::new((size * size) as f64, 0.0);
        let residual = (integral - C64::new(closed, 0.0)).norm();
        if residual > 1e-9 {
            return Err(Error::PipelineMismatch {
                what: format!("multiplier of {} at frequency {j}", kind.label()),
                residual,
                tol: 1e-9,
            });
        }
        Ok(closed)
    }
}

/// `psi_n = prod_k r_k^{n^{(k)}}` tabulated over the whole group.
pub fn psi_field(
    system: &dyn VilenkinLikeSystem,
    radix: &RadixSequence,
    n: u64,
) -> Result<ScalarField> {
    radix.check_index(n)?;
    let size = radix.group_size();
    let mut values = Vec::with_capacity(size as usize);
    for t in 0..size {
        let digits = radix.to_digits(t)?;
        let mut v = C64::new(1.0, 0.0);
        for k in 0..radix.depth() {
            let nk = radix.truncate_below(n, k);
            if nk == 0 {
                break; // all remaining factors are r^0 = 1
            }
            v *= system.r(radix, k, nk, &digits);
        }
        values.push(v);
    }
    Ok(ScalarField::new(values))
}

/// The six verified kernel estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelLemma {
    /// Pointwise bound on block kernels off the diagonal cube, low block level.
    BlockPointwise,
    /// Square-integral bound on block kernels, high block level.
    BlockSquare,
    /// Integrability of `sup_n |K_n|` off a cube.
    FejerSupTail,
    /// Annulus integral of the sup-kernel.
    SupAnnulus,
    /// Annulus integral of the squared sup-kernel.
    SupSquareAnnulus,
    /// Uniform integrability of the sup-kernel over the whole group.
    SupIntegral,
}

impl KernelLemma {
    pub fn label(&self) -> &'static str {
        match self {
            KernelLemma::BlockPointwise => "block-pointwise",
            KernelLemma::BlockSquare => "block-square",
            KernelLemma::FejerSupTail => "fejer-sup-tail",
            KernelLemma::SupAnnulus => "sup-annulus",
            KernelLemma::SupSquareAnnulus => "sup-square-annulus",
            KernelLemma::SupIntegral => "sup-integral",
        }
    }
}

impl SystemContext {
    /// Sweeps one kernel estimate over every admissible parameter tuple at
    /// this depth and reports the fitted constant (max lhs/rhs with unit
    /// constant on the right). `delta` is the validated margin of the system.
    pub fn verify_kernel_bound(&self, lemma: KernelLemma) -> Result<BoundReport> {
        let mut report = BoundReport::new(
            lemma.label(),
            &self.name,
            self.radix.depth(),
            self.delta,
        );
        match lemma {
            KernelLemma::BlockPointwise => self.sweep_block_pointwise(&mut report)?,
            KernelLemma::BlockSquare => self.sweep_block_square(&mut report)?,
            KernelLemma::FejerSupTail => self.sweep_fejer_sup_tail(&mut report)?,
            KernelLemma::SupAnnulus => self.sweep_sup_annulus(&mut report, false)?,
            KernelLemma::SupSquareAnnulus => self.sweep_sup_annulus(&mut report, true)?,
            KernelLemma::SupIntegral => self.sweep_sup_integral(&mut report)?,
        }
        Ok(report)
    }

    /// Annulus membership: `t` agrees with `s` on the first `a` digits but not
    /// the `(a+1)`-st.
    fn in_annulus(&self, t: u64, s: u64, a: usize) -> bool {
        self.radix.in_interval(t, s, a) && !self.radix.in_interval(t, s, a + 1)
    }

    fn sweep_block_pointwise(&self, report: &mut BoundReport) -> Result<()> {
        let depth = self.radix.depth();
        let size = self.group_size();
        // |K_{l^{(b+1)} + j M_b, M_b}(t, s)| <= c delta^{a-n} M_b M_n
        // for M_n <= l < M_{n+1}, b <= a <= n, t in the level-a annulus of s.
        for n in 0..depth {
            for l in self.radix.cumulative(n)..self.radix.cumulative(n + 1) {
                for a in 0..=n {
                    for b in 0..=a {
                        let mb = self.radix.cumulative(b);
                        for j in 0..self.radix.radix(b) as u64 - 1 {
                            let start = self.radix.truncate_below(l, b + 1) + j * mb;
                            let w = self.weights(KernelKind::Block(start, mb))?;
                            let rhs = self.delta.powi(a as i32 - n as i32)
                                * mb as f64
                                * self.radix.cumulative(n) as f64;
                            for s in 0..size {
                                let col = self.weighted_column(&w, s);
                                for t in 0..size {
                                    if !self.in_annulus(t, s, a) {
                                        continue;
                                    }
                                    report.push(BoundRow::new(
                                        &[
                                            ("n", n as f64),
                                            ("l", l as f64),
                                            ("a", a as f64),
                                            ("b", b as f64),
                                            ("j", j as f64),
                                            ("s", s as f64),
                                            ("t", t as f64),
                                        ],
                                        col[t as usize].norm(),
                                        rhs,
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn sweep_block_square(&self, report: &mut BoundReport) -> Result<()> {
        let depth = self.radix.depth();
        let size = self.group_size();
        // annulus L_2 bound: int_{annulus a} |K_{l^{(b+1)}+jM_b, M_b}|^2
        //   <= c delta^{a-n} M_a M_b M_n  for a < b <= n.
        for n in 0..depth {
            for l in self.radix.cumulative(n)..self.radix.cumulative(n + 1) {
                for b in 1..=n {
                    let mb = self.radix.cumulative(b);
                    for a in 0..b {
                        for j in 0..self.radix.radix(b) as u64 - 1 {
                            let start = self.radix.truncate_below(l, b + 1) + j * mb;
                            let w = self.weights(KernelKind::Block(start, mb))?;
                            let rhs = self.delta.powi(a as i32 - n as i32)
                                * self.radix.cumulative(a) as f64
                                * mb as f64
                                * self.radix.cumulative(n) as f64;
                            for s in 0..size {
                                let col = self.weighted_column(&w, s);
                                let lhs: f64 = (0..size)
                                    .filter(|&t| self.in_annulus(t, s, a))
                                    .map(|t| col[t as usize].norm_sqr())
                                    .sum::<f64>()
                                    / size as f64;
                                report.push(BoundRow::new(
                                    &[
                                        ("n", n as f64),
                                        ("l", l as f64),
                                        ("a", a as f64),
                                        ("b", b as f64),
                                        ("j", j as f64),
                                        ("s", s as f64),
                                    ],
                                    lhs,
                                    rhs,
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn sweep_fejer_sup_tail(&self, report: &mut BoundReport) -> Result<()> {
        let size = self.group_size();
        let depth = self.radix.depth();
        // int_{complement of I_k(s)} sup_{n >= M_k} |K_n(t,s)| <= c,
        // with the sup truncated at the largest representable kernel (n = M_N).
        report.set_truncation(size);
        for k in 0..=depth {
            let lo = self.radix.cumulative(k);
            if k == depth {
                // at the truncation depth no cube coarser than a point exists
                // outside I_N(s); the tail domain is taken as empty
                for s in 0..size {
                    report.push(BoundRow::new(&[("k", k as f64), ("s", s as f64)], 0.0, 1.0));
                }
                continue;
            }
            for s in 0..size {
                let mut sup = vec![0.0f64; size as usize];
                for n in lo..=size {
                    let col = self.weighted_column(&self.weights(KernelKind::Fejer(n))?, s);
                    for (b, v) in sup.iter_mut().zip(&col) {
                        *b = b.max(v.norm());
                    }
                }
                let lhs: f64 = (0..size)
                    .filter(|&t| !self.radix.in_interval(t, s, k))
                    .map(|t| sup[t as usize])
                    .sum::<f64>()
                    / size as f64;
                report.push(BoundRow::new(&[("k", k as f64), ("s", s as f64)], lhs, 1.0));
            }
        }
        Ok(())
    }

    fn sweep_sup_annulus(&self, report: &mut BoundReport, squared: bool) -> Result<()> {
        let size = self.group_size();
        let depth = self.radix.depth();
        for n in 0..depth {
            for s in 0..size {
                let col = self.sup_column(n, s)?;
                for a in 0..=n {
                    let lhs: f64 = (0..size)
                        .filter(|&t| self.in_annulus(t, s, a))
                        .map(|t| {
                            let v = col[t as usize];
                            if squared {
                                v * v
                            } else {
                                v
                            }
                        })
                        .sum::<f64>()
                        / size as f64;
                    let gap = a as i32 - n as i32;
                    let rhs = if squared {
                        let root = self.radix.cumulative(a) as f64;
                        let base = root.sqrt() * self.delta.powi(gap)
                            + (n - a) as f64 * self.delta.powf(gap as f64 / 2.0) * root.sqrt();
                        base * base
                    } else {
                        self.delta.powi(gap)
                            + (n - a) as f64 * self.delta.powf(gap as f64 / 2.0)
                    };
                    report.push(BoundRow::new(
                        &[("n", n as f64), ("a", a as f64), ("s", s as f64)],
                        lhs,
                        rhs,
                    ));
                }
            }
        }
        Ok(())
    }

    fn sweep_sup_integral(&self, report: &mut BoundReport) -> Result<()> {
        let size = self.group_size();
        let depth = self.radix.depth();
        // sup_n int K~_n(t, eta) dmu(t) <= c
        for eta in 0..size {
            let mut worst = 0.0f64;
            for n in 0..depth {
                let col = self.sup_column(n, eta)?;
                let integral = col.iter().sum::<f64>() / size as f64;
                worst = worst.max(integral);
            }
            report.push(BoundRow::new(&[("eta", eta as f64)], worst, 1.0));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(system: &dyn VilenkinLikeSystem, m: &[u32]) -> SystemContext {
        SystemContext::new(system, RadixSequence::new(m).unwrap()).unwrap()
    }

    #[test]
    fn digit_codec_examples() {
        let r = RadixSequence::new(&[2, 3, 2]).unwrap();
        assert_eq!(r.cumulative(0), 1);
        assert_eq!(r.group_size(), 12);
        assert_eq!(r.to_digits(7).unwrap(), vec![1, 0, 1]);
        assert_eq!(r.to_digits(0).unwrap(), vec![0, 0, 0]);
        assert_eq!(r.to_digits(11).unwrap(), vec![1, 2, 1]);
        assert!(r.to_digits(12).is_err());
        assert!(RadixSequence::new(&[2, 1]).is_err());
    }

    #[test]
    fn triangle_add_examples() {
        let walsh = RadixSequence::uniform(2, 3).unwrap();
        assert_eq!(walsh.triangle_add(1, 1).unwrap(), 0);
        assert_eq!(walsh.triangle_add(1, 2).unwrap(), 3);
        let ternary = RadixSequence::uniform(3, 2).unwrap();
        assert_eq!(ternary.triangle_add(2, 2).unwrap(), 1);
    }

    proptest! {
        #[test]
        fn codec_roundtrip(n in 0u64..12) {
            let r = RadixSequence::new(&[2, 3, 2]).unwrap();
            prop_assert_eq!(r.from_digits(&r.to_digits(n).unwrap()), n);
        }

        #[test]
        fn negate_is_inverse(n in 0u64..12) {
            let r = RadixSequence::new(&[2, 3, 2]).unwrap();
            prop_assert_eq!(r.triangle_add(n, r.negate(n).unwrap()).unwrap(), 0);
        }
    }

    #[test]
    fn walsh_psi_examples() {
        let c = ctx(&VilenkinCharacters, &[2, 2]);
        let psi0 = c.psi(0).unwrap();
        assert!(psi0.values().iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-12));
        for t in 0..4u64 {
            let d = c.radix().to_digits(t).unwrap();
            let expect1 = if d[0] == 0 { 1.0 } else { -1.0 };
            assert!((c.psi(1).unwrap().value(t) - C64::new(expect1, 0.0)).norm() < 1e-12);
            let expect3 = if (d[0] + d[1]) % 2 == 0 { 1.0 } else { -1.0 };
            assert!((c.psi(3).unwrap().value(t) - C64::new(expect3, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn both_systems_validate_on_small_radix() {
        for system in [&VilenkinCharacters as &dyn VilenkinLikeSystem, &MAdicCharacters] {
            let radix = RadixSequence::uniform(2, 2).unwrap();
            let report = validate_system(system, &radix).unwrap();
            assert!((report.delta_max - 2.0).abs() < 1e-12, "{}", system.name());
        }
        let radix = RadixSequence::new(&[2, 3, 2]).unwrap();
        for system in [&VilenkinCharacters as &dyn VilenkinLikeSystem, &MAdicCharacters] {
            let report = validate_system(system, &radix).unwrap();
            assert!((report.delta_max - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn corrupted_system_fails_sibling_mass() {
        struct Corrupt;
        impl VilenkinLikeSystem for Corrupt {
            fn name(&self) -> &str {
                "corrupt"
            }
            fn r(&self, radix: &RadixSequence, k: usize, n: u64, t: &[u32]) -> C64 {
                let v = VilenkinCharacters.r(radix, k, n, t);
                if k == 0 && radix.digit(n, 0) == 1 {
                    v * C64::new(1.1, 0.0)
                } else {
                    v
                }
            }
        }
        let radix = RadixSequence::uniform(2, 2).unwrap();
        match validate_system(&Corrupt, &radix) {
            Err(Error::AssumptionViolated { clause, residual, .. }) => {
                assert!(clause.starts_with("iii"));
                assert!((residual - 0.21).abs() < 1e-9);
            }
            other => panic!("expected clause-iii failure, got {other:?}"),
        }
    }

    #[test]
    fn orthonormality_both_systems() {
        for system in [&VilenkinCharacters as &dyn VilenkinLikeSystem, &MAdicCharacters] {
            let c = ctx(system, &[2, 3, 2]);
            let size = c.group_size();
            for m in 0..size {
                for n in 0..size {
                    let inner: C64 = (0..size)
                        .map(|t| c.psi(m).unwrap().value(t) * c.psi(n).unwrap().value(t).conj())
                        .sum::<C64>()
                        / C64::new(size as f64, 0.0);
                    let target = if m == n { 1.0 } else { 0.0 };
                    assert!(
                        (inner - C64::new(target, 0.0)).norm() < 1e-10,
                        "{} m={m} n={n}",
                        c.name()
                    );
                }
            }
        }
    }

    #[test]
    fn character_property_vilenkin_only() {
        let c = ctx(&VilenkinCharacters, &[2, 3, 2]);
        let size = c.group_size();
        for m in 0..size {
            for n in 0..size {
                let mn = c.radix().triangle_add(m, n).unwrap();
                for t in 0..size {
                    let lhs = c.psi(m).unwrap().value(t) * c.psi(n).unwrap().value(t);
                    let rhs = c.psi(mn).unwrap().value(t);
                    assert!((lhs - rhs).norm() < 1e-10);
                }
            }
        }
        // multiplicativity in the point variable
        for m in 0..size {
            for t in 0..size {
                for s in 0..size {
                    let ts = c.radix().triangle_add(t, s).unwrap();
                    let lhs = c.psi(m).unwrap().value(ts);
                    let rhs = c.psi(m).unwrap().value(t) * c.psi(m).unwrap().value(s);
                    assert!((lhs - rhs).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn dirichlet_at_scale_jumps_is_interval_indicator() {
        for system in [&VilenkinCharacters as &dyn VilenkinLikeSystem, &MAdicCharacters] {
            let c = ctx(system, &[2, 3, 2]);
            let size = c.group_size();
            for n in 0..=c.radix().depth() {
                let mn = c.radix().cumulative(n);
                let table = c.kernel(KernelKind::Dirichlet(mn)).unwrap();
                for eta in 0..size {
                    for t in 0..size {
                        let expect = if c.radix().in_interval(eta, t, n) {
                            mn as f64
                        } else {
                            0.0
                        };
                        assert!(
                            (table.value(eta, t) - C64::new(expect, 0.0)).norm() < 1e-9,
                            "{} n={n} eta={eta} t={t}",
                            c.name()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn dirichlet_one_is_constant() {
        let c = ctx(&VilenkinCharacters, &[2, 2]);
        let d1 = c.kernel(KernelKind::Dirichlet(1)).unwrap();
        for eta in 0..4 {
            for t in 0..4 {
                assert!((d1.value(eta, t) - C64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn fejer_decomposes_into_blocks() {
        // l K_l = sum over digit positions b and 0 <= j < l_b of blocks
        // starting at l^(b+1) + j M_b with length M_b
        for system in [&VilenkinCharacters as &dyn VilenkinLikeSystem, &MAdicCharacters] {
            let c = ctx(system, &[2, 3, 2]);
            let size = c.group_size();
            for l in [1u64, 5, 7, 11] {
                let kl = c.kernel(KernelKind::Fejer(l)).unwrap();
                let mut residual: f64 = 0.0;
                for eta in 0..size {
                    for t in 0..size {
                        let mut total = C64::new(0.0, 0.0);
                        for b in 0..c.radix().depth() {
                            let mb = c.radix().cumulative(b);
                            for j in 0..c.radix().digit(l, b) as u64 {
                                let start = c.radix().truncate_below(l, b + 1) + j * mb;
                                let block = c.kernel(KernelKind::Block(start, mb)).unwrap();
                                total += block.value(eta, t);
                            }
                        }
                        let lhs = kl.value(eta, t) * C64::new(l as f64, 0.0);
                        residual = residual.max((lhs - total).norm());
                    }
                }
                assert!(residual < 1e-9, "{} l={l}: {residual}", c.name());
            }
        }
    }

    #[test]
    fn sup_kernel_dominates_each_fejer() {
        let c = ctx(&VilenkinCharacters, &[2, 3, 2]);
        let size = c.group_size();
        for n in 0..c.radix().depth() {
            let sup = c.kernel(KernelKind::Sup(n)).unwrap();
            let lo = c.radix().cumulative(n);
            let hi = c.radix().cumulative(n + 1);
            for t in 0..size {
                for s in 0..size {
                    let bound = sup.value(t, s).re;
                    assert!(sup.value(t, s).im.abs() < 1e-12);
                    let mut attained = false;
                    for l in lo..hi {
                        let v = c.kernel(KernelKind::Fejer(l)).unwrap().value(t, s).norm();
                        assert!(v <= bound + 1e-10);
                        if (v - bound).abs() < 1e-10 {
                            attained = true;
                        }
                    }
                    assert!(attained);
                }
            }
        }
    }

    #[test]
    fn kernel_coefficient_examples() {
        let c = ctx(&VilenkinCharacters, &[2, 2, 2]);
        assert!((c.kernel_coefficient(KernelKind::Fejer(4), 1).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(c.kernel_coefficient(KernelKind::Dirichlet(4), 5).unwrap(), 0.0);
        for n in [1u64, 3, 4, 7] {
            assert_eq!(c.kernel_coefficient(KernelKind::Fejer(n), n).unwrap(), 0.0);
        }
        let c2 = ctx(&MAdicCharacters, &[2, 3]);
        assert!((c2.kernel_coefficient(KernelKind::Fejer(5), 2).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn sup_integral_bound_is_finite() {
        let c = ctx(&VilenkinCharacters, &[2, 2]);
        let report = c.verify_kernel_bound(KernelLemma::SupIntegral).unwrap();
        let fitted = report.fitted_c();
        assert!(fitted.is_finite() && fitted > 0.0);
    }

    #[test]
    fn fejer_sup_tail_empty_complement_is_zero() {
        let c = ctx(&VilenkinCharacters, &[2, 2]);
        let report = c.verify_kernel_bound(KernelLemma::FejerSupTail).unwrap();
        // rows at k = depth integrate over an empty set
        for row in report.rows() {
            if row.param("k") == Some(c.radix().depth() as f64) {
                assert_eq!(row.lhs, 0.0);
            }
        }
        assert!(report.fitted_c().is_finite());
    }

    #[test]
    fn annulus_bounds_have_finite_constants() {
        let c = ctx(&MAdicCharacters, &[2, 2, 2]);
        for lemma in [
            KernelLemma::BlockPointwise,
            KernelLemma::BlockSquare,
            KernelLemma::SupAnnulus,
            KernelLemma::SupSquareAnnulus,
        ] {
            let report = c.verify_kernel_bound(lemma).unwrap();
            let fitted = report.fitted_c();
            assert!(fitted.is_finite(), "{}: {fitted}", lemma.label());
            assert!(!report.degenerate(), "{}", lemma.label());
        }
    }
}
