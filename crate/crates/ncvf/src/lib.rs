//! Desk-scale numerical laboratory for Fourier analysis on finite Vilenkin
//! groups with matrix-valued (semi-commutative) coefficients, together with
//! the hyperfinite-factor side reached through a transference map.
//!
//! The crate is organized bottom-up:
//!
//! * [`matrix`] — trace-normalized complex matrices, spectral calculus,
//!   singular value profiles, L_p and weak quasi-norms.
//! * [`vilenkin`] — mixed-radix groups, character systems and their
//!   admissibility checks, Dirichlet/Fejér kernel tables and bound fitting.
//! * [`operator_field`] — matrix-valued functions on the group: Fourier
//!   coefficients, Cesàro means, conditional expectations, Hardy norms,
//!   atoms and weak-norm certificates.
//! * [`martingale_cz`] — Cuculescu projections, Calderón-Zygmund
//!   decomposition, and the weak-(1,1) certificate built on top of them.
//! * [`nc_factor`] — the truncated hyperfinite factor with its generating
//!   unitaries and conditional expectations.
//! * [`transference`] — the embedding of the factor into an operator field
//!   over a doubled-radix group, and its verification suite.
//! * [`sunouchi`] — square-function operators over lacunary subsequences on
//!   both sides of the transference map.
//! * [`harness`] — reproducible experiment driver, constant fitting, sample
//!   generators, and report writers.
//!
//! # A first computation
//!
//! Build a depth-3 dyadic group, validate the character system, and watch a
//! Cesàro mean reproduce a single character:
//!
//! ```
//! use ncvf::matrix::C64;
//! use ncvf::operator_field::OperatorField;
//! use ncvf::vilenkin::{RadixSequence, SystemContext, VilenkinCharacters};
//!
//! let radix = RadixSequence::new(&[2, 2, 2])?;
//! let ctx = SystemContext::new(&VilenkinCharacters, radix.clone())?;
//!
//! // f(t) = psi_1(t) * I_2, a pure frequency with a matrix fiber
//! let f = OperatorField::from_fn(radix, |t| {
//!     ncvf::matrix::Operator::identity(2).scale(ctx.psi(1).unwrap().value(t))
//! });
//!
//! // sigma_3 scales the coefficient at frequency 1 by (3 - 1)/3
//! let sigma = f.cesaro(&ctx, 3)?;
//! let dev = sigma.sub(&f.scale(C64::new(2.0 / 3.0, 0.0))).norm_inf();
//! assert!(dev < 1e-12);
//! # Ok::<(), ncvf::Error>(())
//! ```
//!
//! # Threshold splitting
//!
//! The stopping-time recursion and the good/bad splitting verify their own
//! invariants before returning:
//!
//! ```
//! use ncvf::harness::{derive_rng, sample};
//! use ncvf::martingale_cz::cz_decompose;
//! use ncvf::operator_field::OperatorField;
//! use ncvf::vilenkin::RadixSequence;
//!
//! let radix = RadixSequence::new(&[2, 2, 2])?;
//! let mut rng = derive_rng(7, "doc-splitting", 0);
//! let f = OperatorField::from_fn(radix, |_| sample::positive(2, &mut rng));
//!
//! let lambda = 2.0 * f.cond_exp(0).norm_inf();
//! let cz = cz_decompose(&f, lambda)?;
//! let recon = f.sub(&cz.g).sub(&cz.b_d).sub(&cz.b_off).norm_lp(1.0)?;
//! assert!(recon < 1e-9);
//! assert!(cz.g.norm_inf() <= cz.r_reg * lambda + 1e-8);
//! # Ok::<(), ncvf::Error>(())
//! ```

pub mod error;
pub mod harness;
pub mod martingale_cz;
pub mod matrix;
pub mod nc_factor;
pub mod operator_field;
pub mod sunouchi;
pub mod transference;
pub mod vilenkin;

pub use error::{Error, Result};
