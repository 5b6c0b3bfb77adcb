//! Finite truncations of the hyperfinite II_1 factor as tensor products of
//! matrix algebras, together with the matrix analogue of the character system:
//! unitaries built from clock and shift matrices, indexed through the *same*
//! mixed-radix codec as the classical side but with every radix entry doubled
//! (`(2m)_{2k} = (2m)_{2k+1} = m_k`). One codec, two clients — the doubled
//! enumeration is what makes the transference map a coefficientwise identity.
//!
//! ```
//! use ncvf::nc_factor::build_factor;
//!
//! let fctx = build_factor(&[2, 2]).unwrap();   // two qubit slots, D = 4
//! assert_eq!(fctx.basis_size(), 16);           // doubled radix (2,2,2,2)
//!
//! // W_3 = (clock * shift) (x) I on qubit slots squares to -1
//! let w3 = fctx.walsh(3).unwrap();
//! let minus_one = ncvf::matrix::Operator::identity(4).scale((-1.0).into());
//! assert!(w3.mul(w3).sub(&minus_one).op_norm() < 1e-12);
//! ```

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::matrix::{Operator, C64};
use crate::vilenkin::RadixSequence;

const UNITARY_TOL: f64 = 1e-10;
const STRUCTURE_TOL: f64 = 1e-9;

/// One basis unitary `W_n = tensor_k A_k^{eta_{2k}} B_k^{eta_{2k+1}}` with its
/// doubled digit vector.
#[derive(Debug, Clone)]
pub struct WalshUnitary {
    n: u64,
    eta: Vec<u32>,
    op: Operator,
}

impl WalshUnitary {
    pub fn index(&self) -> u64 {
        self.n
    }

    /// Digits of the index in the doubled radix.
    pub fn digits(&self) -> &[u32] {
        &self.eta
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }
}

/// A finite tensor product of matrix algebras with its normalized trace, the
/// doubled index codec, and the full cached unitary basis.
#[derive(Debug, Clone)]
pub struct FactorContext {
    base: RadixSequence,
    doubled: RadixSequence,
    dim: usize,
    walsh: Vec<Operator>,
}

/// `A_k`: the clock matrix `diag(omega^j)` with `omega = exp(2 pi i / m)`.
fn clock(m: u32) -> DMatrix<C64> {
    DMatrix::from_fn(m as usize, m as usize, |r, c| {
        if r == c {
            Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * r as f64 / m as f64)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `B_k`: the cyclic shift with ones at `(j, j+1 mod m)`.
fn shift(m: u32) -> DMatrix<C64> {
    DMatrix::from_fn(m as usize, m as usize, |r, c| {
        if c == (r + 1) % m as usize {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn matrix_power(base: &DMatrix<C64>, e: u32) -> DMatrix<C64> {
    let mut acc = DMatrix::identity(base.nrows(), base.ncols());
    for _ in 0..e {
        acc = &acc * base;
    }
    acc
}

impl FactorContext {
    /// Build the truncation for a base radix, caching all `D^2` basis
    /// unitaries; each is checked unitary and traceless (except the identity).
    pub fn new(base: RadixSequence) -> Result<Self> {
        let mut doubled_radices = Vec::with_capacity(2 * base.depth());
        for &m in base.radices() {
            doubled_radices.push(m);
            doubled_radices.push(m);
        }
        let doubled = RadixSequence::new(&doubled_radices)?;
        let dim: usize = base.radices().iter().map(|&m| m as usize).product();
        debug_assert_eq!(doubled.group_size(), (dim as u64) * (dim as u64));

        let clocks: Vec<DMatrix<C64>> = base.radices().iter().map(|&m| clock(m)).collect();
        let shifts: Vec<DMatrix<C64>> = base.radices().iter().map(|&m| shift(m)).collect();
        let total = doubled.group_size();
        let mut walsh = Vec::with_capacity(total as usize);
        for n in 0..total {
            let eta = doubled.to_digits(n)?;
            let mut mat = DMatrix::identity(1, 1);
            for k in 0..base.depth() {
                let factor = matrix_power(&clocks[k], eta[2 * k]) * matrix_power(&shifts[k], eta[2 * k + 1]);
                mat = mat.kronecker(&factor);
            }
            let op = Operator::new(mat);
            let unit = op
                .mul(&op.adjoint())
                .sub(&Operator::identity(dim))
                .op_norm();
            if unit > UNITARY_TOL {
                return Err(Error::PipelineMismatch {
                    what: format!("basis unitary {n} unitarity"),
                    residual: unit,
                    tol: UNITARY_TOL,
                });
            }
            let tr = op.trace();
            let tr_residual = if n == 0 {
                (tr - C64::new(1.0, 0.0)).norm()
            } else {
                tr.norm()
            };
            if tr_residual > UNITARY_TOL {
                return Err(Error::PipelineMismatch {
                    what: format!("basis unitary {n} trace"),
                    residual: tr_residual,
                    tol: UNITARY_TOL,
                });
            }
            walsh.push(op);
        }
        Ok(FactorContext {
            base,
            doubled,
            dim,
            walsh,
        })
    }

    pub fn base(&self) -> &RadixSequence {
        &self.base
    }

    /// The doubled codec shared with the transferred classical side.
    pub fn doubled(&self) -> &RadixSequence {
        &self.doubled
    }

    /// Fiber dimension `D = prod_k m_k`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis unitaries, `D^2`.
    pub fn basis_size(&self) -> u64 {
        self.doubled.group_size()
    }

    fn check_element(&self, x: &Operator) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: x.dim(),
                right: self.dim,
            });
        }
        Ok(())
    }

    fn check_degree(&self, n: u64) -> Result<()> {
        if n > self.basis_size() {
            return Err(Error::IndexOutOfRange {
                index: n,
                depth: self.doubled.depth(),
                cap: self.basis_size(),
            });
        }
        Ok(())
    }

    pub fn walsh(&self, n: u64) -> Result<&Operator> {
        if n >= self.basis_size() {
            return Err(Error::IndexOutOfRange {
                index: n,
                depth: self.doubled.depth(),
                cap: self.basis_size(),
            });
        }
        Ok(&self.walsh[n as usize])
    }

    pub fn walsh_unitary(&self, n: u64) -> Result<WalshUnitary> {
        let op = self.walsh(n)?.clone();
        Ok(WalshUnitary {
            n,
            eta: self.doubled.to_digits(n)?,
            op,
        })
    }

    /// `x^(k) = tau(x W_k^*)`.
    pub fn nc_fourier(&self, x: &Operator, k: u64) -> Result<C64> {
        self.check_element(x)?;
        Ok(x.mul(&self.walsh(k)?.adjoint()).trace())
    }

    pub fn nc_fourier_coeffs(&self, x: &Operator) -> Result<Vec<C64>> {
        (0..self.basis_size()).map(|k| self.nc_fourier(x, k)).collect()
    }

    /// Partial sum of the matrix Fourier series up to (excluding) degree `n`.
    pub fn nc_partial_sum(&self, x: &Operator, n: u64) -> Result<Operator> {
        self.check_element(x)?;
        self.check_degree(n)?;
        let mut acc = Operator::zeros(self.dim);
        for k in 0..n {
            acc = acc.add(&self.walsh(k)?.scale(self.nc_fourier(x, k)?));
        }
        Ok(acc)
    }

    /// Cesàro mean: `sum_{k<n} (1 - k/n) x^(k) W_k`.
    pub fn nc_cesaro(&self, x: &Operator, n: u64) -> Result<Operator> {
        self.check_element(x)?;
        self.check_degree(n)?;
        if n == 0 {
            return Err(Error::InvalidParams {
                what: "factor Cesàro mean",
                detail: "degree must be at least 1".into(),
            });
        }
        let mut acc = Operator::zeros(self.dim);
        for k in 0..n {
            let w = 1.0 - k as f64 / n as f64;
            acc = acc.add(&self.walsh(k)?.scale(self.nc_fourier(x, k)? * C64::new(w, 0.0)));
        }
        Ok(acc)
    }

    /// Conditional expectation onto the first `k` tensor factors, computed as
    /// a normalized partial trace over the tail factors (tensored back with
    /// the identity) and cross-checked against the Fourier truncation at
    /// degree `M_{2k}`.
    pub fn factor_cond_exp(&self, x: &Operator, k: usize) -> Result<Operator> {
        self.check_element(x)?;
        if k > self.base.depth() {
            return Err(Error::InvalidParams {
                what: "factor conditional expectation",
                detail: format!("level {k} exceeds depth {}", self.base.depth()),
            });
        }
        let head: usize = self.base.radices()[..k].iter().map(|&m| m as usize).product();
        let tail = self.dim / head;
        let mut reduced = DMatrix::from_element(head, head, C64::new(0.0, 0.0));
        let m = x.matrix();
        for a in 0..head {
            for b in 0..head {
                let mut s = C64::new(0.0, 0.0);
                for t in 0..tail {
                    s += m[(a * tail + t, b * tail + t)];
                }
                reduced[(a, b)] = s / tail as f64;
            }
        }
        let embedded = Operator::new(reduced.kronecker(&DMatrix::identity(tail, tail)));
        let truncated = self.nc_partial_sum(x, self.doubled.cumulative(2 * k))?;
        let dev = embedded.sub(&truncated).op_norm();
        if dev > STRUCTURE_TOL {
            return Err(Error::PipelineMismatch {
                what: format!("conditional expectation dual forms at level {k}"),
                residual: dev,
                tol: STRUCTURE_TOL,
            });
        }
        Ok(embedded)
    }

    /// Scalars `(omega, u)` with `W_m W_n = omega W_{m [triangle] n}` and
    /// `W_n^* = u W_{-n}` (negation digitwise in the doubled radix). Both are
    /// computed, then the defining identities are re-verified; a residual
    /// above tolerance means the product rule fails in this implementation.
    pub fn structure_constants(&self, m: u64, n: u64) -> Result<(C64, C64)> {
        let t = self.doubled.triangle_add(m, n)?;
        let prod = self.walsh(m)?.mul(self.walsh(n)?);
        let omega = self.walsh(t)?.adjoint().mul(&prod).trace();
        let residual = prod.sub(&self.walsh(t)?.scale(omega)).op_norm();
        if residual > STRUCTURE_TOL || (omega.norm() - 1.0).abs() > UNITARY_TOL {
            return Err(Error::StructureConstantMismatch {
                m,
                n,
                residual: residual.max((omega.norm() - 1.0).abs()),
            });
        }
        let neg = self.doubled.negate(n)?;
        let adj = self.walsh(n)?.adjoint();
        let u = self.walsh(neg)?.adjoint().mul(&adj).trace();
        let u_residual = adj.sub(&self.walsh(neg)?.scale(u)).op_norm();
        if u_residual > STRUCTURE_TOL || (u.norm() - 1.0).abs() > UNITARY_TOL {
            return Err(Error::StructureConstantMismatch {
                m: neg,
                n,
                residual: u_residual.max((u.norm() - 1.0).abs()),
            });
        }
        Ok((omega, u))
    }
}

/// Convenience: build the context straight from radix entries.
pub fn build_factor(ms: &[u32]) -> Result<FactorContext> {
    FactorContext::new(RadixSequence::new(ms)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all2(n: usize) -> FactorContext {
        build_factor(&vec![2; n]).unwrap()
    }

    #[test]
    fn doubled_codec_squares_the_dimension() {
        for ms in [&[2u32, 3][..], &[2, 2, 2][..], &[3, 2][..]] {
            let ctx = build_factor(ms).unwrap();
            assert_eq!(ctx.basis_size(), (ctx.dim() as u64).pow(2));
            assert_eq!(ctx.doubled().depth(), 2 * ctx.base().depth());
        }
    }

    #[test]
    fn first_generators_for_qubits() {
        let ctx = all2(2);
        // W_1 = Z on the first factor
        let z = ctx.walsh(1).unwrap().matrix();
        for r in 0..4 {
            for c in 0..4 {
                let expect = if r != c {
                    0.0
                } else if r < 2 {
                    1.0
                } else {
                    -1.0
                };
                assert!((z[(r, c)] - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
        // W_2 = the 0<->1 permutation (X) on the first factor
        let x = ctx.walsh(2).unwrap();
        let mut expected = DMatrix::from_element(4, 4, C64::new(0.0, 0.0));
        for (r, c) in [(0, 2), (1, 3), (2, 0), (3, 1)] {
            expected[(r, c)] = C64::new(1.0, 0.0);
        }
        assert!(x.sub(&Operator::new(expected)).op_norm() < 1e-12);
        // W_3 = W_1 W_2
        let w3 = ctx.walsh(3).unwrap();
        assert!(w3
            .sub(&ctx.walsh(1).unwrap().mul(ctx.walsh(2).unwrap()))
            .op_norm()
            < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal() {
        for ctx in [all2(2), build_factor(&[2, 3]).unwrap()] {
            let n = ctx.basis_size();
            for a in 0..n {
                for b in 0..n {
                    let g = ctx.walsh(a).unwrap().mul(&ctx.walsh(b).unwrap().adjoint()).trace();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!(
                        (g - C64::new(expect, 0.0)).norm() < 1e-10,
                        "gram deviation at ({a},{b})"
                    );
                }
            }
        }
    }

    #[test]
    fn structure_constant_examples() {
        let ctx = all2(2);
        let (omega12, _) = ctx.structure_constants(1, 2).unwrap();
        assert!((omega12 - C64::new(1.0, 0.0)).norm() < 1e-12);
        let (omega21, _) = ctx.structure_constants(2, 1).unwrap();
        assert!((omega21 - C64::new(-1.0, 0.0)).norm() < 1e-12);
        let (_, u1) = ctx.structure_constants(0, 1).unwrap();
        assert!((u1 - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn structure_constants_unimodular_everywhere() {
        let ctx = build_factor(&[2, 3]).unwrap();
        for m in 0..ctx.basis_size() {
            for n in 0..ctx.basis_size() {
                let (omega, u) = ctx.structure_constants(m, n).unwrap();
                assert!((omega.norm() - 1.0).abs() < 1e-10);
                assert!((u.norm() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn qubit_basis_is_signed_pauli_strings() {
        let ctx = all2(3);
        for n in 0..ctx.basis_size() {
            let w = ctx.walsh(n).unwrap().matrix();
            for r in 0..8 {
                let mut nonzero = 0;
                for c in 0..8 {
                    let v = w[(r, c)];
                    assert!(v.im.abs() < 1e-14, "qubit string entries must be real");
                    if v.norm() > 1e-14 {
                        nonzero += 1;
                        assert!((v.re.abs() - 1.0).abs() < 1e-14);
                    }
                }
                assert_eq!(nonzero, 1);
            }
        }
    }

    #[test]
    fn cesaro_trivial_cases() {
        let ctx = all2(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = sample::gaussian(ctx.dim(), &mut rng);
        let s1 = ctx.nc_cesaro(&x, 1).unwrap();
        let expect = Operator::identity(ctx.dim()).scale(x.trace());
        assert!(s1.sub(&expect).op_norm() < 1e-12);
        for n in 2..=8u64 {
            let s = ctx.nc_cesaro(ctx.walsh(1).unwrap(), n).unwrap();
            let expect = ctx.walsh(1).unwrap().scale(C64::new(1.0 - 1.0 / n as f64, 0.0));
            assert!(s.sub(&expect).op_norm() < 1e-12);
        }
    }

    #[test]
    fn full_degree_reconstruction_and_decay() {
        let ctx = all2(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = sample::gaussian(ctx.dim(), &mut rng);
        let full = ctx.nc_partial_sum(&x, ctx.basis_size()).unwrap();
        assert!(full.sub(&x).op_norm() < 1e-9);
        let weight: f64 = (0..ctx.basis_size())
            .map(|k| k as f64 * ctx.nc_fourier(&x, k).unwrap().norm())
            .sum();
        let mut prev = f64::INFINITY;
        for n in [2u64, 4, 8, 16] {
            let dev = ctx.nc_cesaro(&x, n).unwrap().sub(&x).op_norm();
            assert!(dev <= weight / n as f64 + 1e-12);
            assert!(dev <= prev + 1e-12);
            prev = dev;
        }
    }

    #[test]
    fn cond_exp_examples() {
        let ctx = all2(2);
        // Z (x) X has traceless second factor: E_1 kills it
        let zx = ctx.walsh(1).unwrap().mul(ctx.walsh(8).unwrap());
        assert!(ctx.factor_cond_exp(&zx, 1).unwrap().op_norm() < 1e-12);
        // elements of the level-k subalgebra are fixed
        let y = ctx.walsh(3).unwrap(); // A_0 B_0 on the first factor only
        assert!(ctx.factor_cond_exp(y, 1).unwrap().sub(y).op_norm() < 1e-12);
    }

    #[test]
    fn cond_exp_tower_and_positivity() {
        let ctx = build_factor(&[2, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = sample::positive(ctx.dim(), &mut rng);
        for k in 0..=2usize {
            for j in 0..=2usize {
                let two_step = ctx
                    .factor_cond_exp(&ctx.factor_cond_exp(&x, j).unwrap(), k)
                    .unwrap();
                let direct = ctx.factor_cond_exp(&x, k.min(j)).unwrap();
                assert!(two_step.sub(&direct).op_norm() < 1e-9);
            }
            let e = ctx.factor_cond_exp(&x, k).unwrap();
            assert!(e.min_eigenvalue() > -1e-9);
            assert!((e.trace() - x.trace()).norm() < 1e-10);
        }
        // unital
        let one = Operator::identity(ctx.dim());
        assert!(ctx.factor_cond_exp(&one, 1).unwrap().sub(&one).op_norm() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        let ctx = all2(2);
        assert!(ctx.walsh(ctx.basis_size()).is_err());
        let x = Operator::identity(ctx.dim());
        assert!(ctx.nc_partial_sum(&x, ctx.basis_size() + 1).is_err());
        assert!(ctx.nc_cesaro(&x, 0).is_err());
        let wrong = Operator::identity(ctx.dim() + 1);
        assert!(ctx.nc_fourier(&wrong, 0).is_err());
    }
}
