//! Experiment driver: reproducible randomness, constant fitting, and report
//! writing. Sample generators live in [`sample`].
//!
//! ```
//! use ncvf::harness::{derive_rng, fit_constant};
//! use rand::RngCore;
//!
//! // same (seed, claim, trial) => same stream; any change => a new one
//! assert_eq!(derive_rng(7, "claim", 0).next_u64(), derive_rng(7, "claim", 0).next_u64());
//! assert_ne!(derive_rng(7, "claim", 0).next_u64(), derive_rng(7, "claim", 1).next_u64());
//!
//! // "there is a constant c" becomes the max observed ratio
//! let fit = fit_constant(&[(1.0, 2.0), (3.0, 3.0)]);
//! assert_eq!((fit.c_hat, fit.argmax), (1.0, Some(1)));
//! ```

use serde::{Deserialize, Serialize};

/// One verified inequality instance inside a sweep: parameters, exact left
/// side, and the right side evaluated with unit constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRow {
    pub params: Vec<(String, f64)>,
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundRow {
    pub fn new(params: &[(&str, f64)], lhs: f64, rhs: f64) -> Self {
        BoundRow {
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            lhs,
            rhs,
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// `lhs / rhs`; a vanishing right side with positive left side is
    /// infinite, `0/0` counts as 0.
    pub fn ratio(&self) -> f64 {
        if self.rhs == 0.0 {
            if self.lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.lhs / self.rhs
        }
    }
}

/// A parameter sweep of one uniform bound, with the fitted constant
/// `max lhs/rhs` over the sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub label: String,
    pub system: String,
    pub depth: usize,
    pub delta: f64,
    /// Where a formally infinite sup was cut off, if anywhere.
    pub truncation: Option<u64>,
    rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn new(label: &str, system: &str, depth: usize, delta: f64) -> Self {
        BoundReport {
            label: label.to_string(),
            system: system.to_string(),
            depth,
            delta,
            truncation: None,
            rows: Vec::new(),
        }
    }

    pub fn set_truncation(&mut self, at: u64) {
        self.truncation = Some(at);
    }

    pub fn push(&mut self, row: BoundRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[BoundRow] {
        &self.rows
    }

    /// Fitted constant: maximal ratio over the sweep; empty sweeps fit 0.
    /// Ties resolve to the earliest row (see [`BoundReport::argmax`]).
    pub fn fitted_c(&self) -> f64 {
        self.rows.iter().map(BoundRow::ratio).fold(0.0, f64::max)
    }

    /// Index of the first row attaining the fitted constant.
    pub fn argmax(&self) -> Option<usize> {
        let best = self.fitted_c();
        self.rows.iter().position(|r| r.ratio() >= best)
    }

    /// A sweep is degenerate when some row has `lhs > 0` over `rhs = 0`;
    /// the fitted constant is then meaningless.
    pub fn degenerate(&self) -> bool {
        self.rows.iter().any(|r| r.rhs == 0.0 && r.lhs > 0.0)
    }
}

pub mod sample {
    //! Random matrix generators. All draws go through a caller-provided RNG so
    //! experiments stay reproducible.

    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    use crate::matrix::{Operator, Projection, C64};

    /// Complex Ginibre matrix: i.i.d. entries `(g + i g') / sqrt(2)`.
    pub fn gaussian<R: Rng>(dim: usize, rng: &mut R) -> Operator {
        let m = DMatrix::from_fn(dim, dim, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im) / C64::new(std::f64::consts::SQRT_2, 0.0)
        });
        Operator::new(m)
    }

    /// Hermitian part of a Ginibre draw.
    pub fn self_adjoint<R: Rng>(dim: usize, rng: &mut R) -> Operator {
        gaussian(dim, rng).symmetrize()
    }

    /// Strictly positive operator `g* g + eps`, bounded away from zero.
    pub fn positive<R: Rng>(dim: usize, rng: &mut R) -> Operator {
        let g = gaussian(dim, rng);
        let eps = Operator::identity(dim).scale(C64::new(1e-6, 0.0));
        g.adjoint().mul(&g).add(&eps)
    }

    /// Random projection: spectral cut of a Hermitian draw at its median
    /// eigenvalue, so ranks concentrate around `dim / 2`.
    pub fn projection<R: Rng>(dim: usize, rng: &mut R) -> Projection {
        let x = self_adjoint(dim, rng);
        let (mut vals, _) = x.hermitian_eigen().expect("hermitian by construction");
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cut = vals[dim / 2] - 1e-12;
        let op = x
            .functional_calculus(|v| if v > cut { 1.0 } else { 0.0 })
            .expect("hermitian by construction");
        Projection::try_new(op).expect("spectral cut is a projection")
    }
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::martingale_cz::{cz_decompose, cuculescu, offdiag_l1_sweep, weak11_certificate};
use crate::matrix::{Interval, Operator, C64};
use crate::nc_factor::FactorContext;
use crate::operator_field::OperatorField;
use crate::sunouchi::{
    full_range_domination, nc_sunouchi_ratio, so1_ratio, LacunarySelection,
};
use crate::transference::{intertwine, verify_transference};
use crate::vilenkin::{
    KernelLemma, MAdicCharacters, RadixSequence, SystemContext, VilenkinCharacters,
    VilenkinLikeSystem,
};

/// Format with 17 significant digits ('.' decimal, scientific notation) —
/// enough to round-trip any f64.
pub fn format_sig(v: f64) -> String {
    format!("{v:.16e}")
}

/// A fitted uniform constant over a list of `(lhs, rhs)` pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedConstant {
    /// `max lhs/rhs` over pairs with positive right side; 0 when none exist.
    pub c_hat: f64,
    /// Lowest index attaining the max (ties break low).
    pub argmax: Option<usize>,
    /// No pair had a positive right side.
    pub degenerate: bool,
}

/// Realize a "there is a constant c" claim as the max observed ratio.
pub fn fit_constant(pairs: &[(f64, f64)]) -> FittedConstant {
    let mut c_hat = 0.0_f64;
    let mut argmax = None;
    let mut seen = false;
    for (i, &(lhs, rhs)) in pairs.iter().enumerate() {
        if rhs <= 0.0 {
            continue;
        }
        seen = true;
        let r = lhs / rhs;
        if argmax.is_none() || r > c_hat {
            c_hat = r;
            argmax = Some(i);
        }
    }
    FittedConstant {
        c_hat,
        argmax,
        degenerate: !seen && !pairs.is_empty(),
    }
}

/// Per-trial RNG: hash of (master seed, claim id, trial index). No stream is
/// shared between trials, so they can run in any order.
pub fn derive_rng(master: u64, claim: &str, trial: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master.to_be_bytes());
    h.update(claim.as_bytes());
    h.update(trial.to_be_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Fault-injected system for exercising failure paths: the Vilenkin
/// characters with one generating function scaled, which breaks the sibling
/// mass identity (clause iii) with residual 0.21 on an all-2 radix.
pub struct CorruptedVilenkin;

impl VilenkinLikeSystem for CorruptedVilenkin {
    fn name(&self) -> &str {
        "corrupted"
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

/// Full experiment configuration. Serializes to / parses from a flat
/// `key = value` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub radix: Vec<u32>,
    pub fiber_dim: usize,
    pub system: String,
    pub lambda_count: usize,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub lacunary: String,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Cap on `M_N * fiber_dim` (and the factor-side analogue).
    pub budget: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            radix: vec![2, 2, 2],
            fiber_dim: 2,
            system: "vilenkin-characters".into(),
            lambda_count: 8,
            lambda_lo: 0.25,
            lambda_hi: 4.0,
            lacunary: "default".into(),
            trials: 5,
            seed: 0,
            out: PathBuf::from("reports"),
            budget: 8192,
        }
    }
}

impl RunConfig {
    /// Apply one `key = value` assignment (config file line or CLI override).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |detail: String| Error::Config(detail);
        match key {
            "radix" => {
                self.radix = value
                    .split(',')
                    .map(|s| s.trim().parse::<u32>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(format!("radix: {e}")))?;
            }
            "depth" => {
                let d: usize = value.parse().map_err(|e| bad(format!("depth: {e}")))?;
                self.radix = vec![2; d];
            }
            "fiber_dim" => self.fiber_dim = value.parse().map_err(|e| bad(format!("fiber_dim: {e}")))?,
            "system" => self.system = value.to_string(),
            "lambda_count" => {
                self.lambda_count = value.parse().map_err(|e| bad(format!("lambda_count: {e}")))?
            }
            "lambda_lo" => self.lambda_lo = value.parse().map_err(|e| bad(format!("lambda_lo: {e}")))?,
            "lambda_hi" => self.lambda_hi = value.parse().map_err(|e| bad(format!("lambda_hi: {e}")))?,
            "lacunary" => self.lacunary = value.to_string(),
            "trials" => self.trials = value.parse().map_err(|e| bad(format!("trials: {e}")))?,
            "seed" => self.seed = value.parse().map_err(|e| bad(format!("seed: {e}")))?,
            "out" => self.out = PathBuf::from(value),
            "budget" => self.budget = value.parse().map_err(|e| bad(format!("budget: {e}")))?,
            other => return Err(bad(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Parse a flat key-value document (`#` comments, blank lines allowed).
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn radix_sequence(&self) -> Result<RadixSequence> {
        RadixSequence::new(&self.radix)
    }

    /// A one-deeper radix (the last entry repeated) for stability reporting.
    pub fn deeper_radix(&self) -> Result<RadixSequence> {
        let mut r = self.radix.clone();
        r.push(*r.last().expect("validated nonempty"));
        RadixSequence::new(&r)
    }

    pub fn system_impl(&self) -> Result<Box<dyn VilenkinLikeSystem>> {
        match self.system.as_str() {
            "vilenkin-characters" | "vilenkin" => Ok(Box::new(VilenkinCharacters)),
            "m-adic" => Ok(Box::new(MAdicCharacters)),
            "corrupted" => Ok(Box::new(CorruptedVilenkin)),
            other => Err(Error::Config(format!("unknown system `{other}`"))),
        }
    }

    pub fn build_context(&self) -> Result<SystemContext> {
        self.check_budget()?;
        SystemContext::new(self.system_impl()?.as_ref(), self.radix_sequence()?)
    }

    pub fn build_context_for(&self, radix: RadixSequence) -> Result<SystemContext> {
        SystemContext::new(self.system_impl()?.as_ref(), radix)
    }

    /// Factor context plus the classical context over the doubled radix.
    pub fn build_factor_pair(&self) -> Result<(FactorContext, SystemContext)> {
        let fctx = FactorContext::new(self.radix_sequence()?)?;
        let estimate = fctx.basis_size() * fctx.dim() as u64;
        if estimate > self.budget {
            return Err(Error::BudgetExceeded {
                estimate,
                budget: self.budget,
            });
        }
        let sctx = self.build_context_for(fctx.doubled().clone())?;
        Ok((fctx, sctx))
    }

    pub fn check_budget(&self) -> Result<()> {
        let radix = self.radix_sequence()?;
        let estimate = radix.group_size() * self.fiber_dim as u64;
        if estimate > self.budget {
            return Err(Error::BudgetExceeded {
                estimate,
                budget: self.budget,
            });
        }
        Ok(())
    }

    /// Log-spaced threshold grid.
    pub fn lambda_grid(&self) -> Vec<f64> {
        let n = self.lambda_count.max(1);
        (0..n)
            .map(|i| {
                if n == 1 {
                    self.lambda_lo
                } else {
                    let t = i as f64 / (n - 1) as f64;
                    self.lambda_lo * (self.lambda_hi / self.lambda_lo).powf(t)
                }
            })
            .collect()
    }

    pub fn random_positive_field(&self, radix: &RadixSequence, claim: &str, trial: u64) -> OperatorField {
        let mut rng = derive_rng(self.seed, claim, trial);
        OperatorField::from_fn(radix.clone(), |_| sample::positive(self.fiber_dim, &mut rng))
    }

    pub fn random_field(&self, radix: &RadixSequence, claim: &str, trial: u64) -> OperatorField {
        let mut rng = derive_rng(self.seed, claim, trial);
        OperatorField::from_fn(radix.clone(), |_| sample::gaussian(self.fiber_dim, &mut rng))
    }
}

/// CSV body of a sweep: fixed metadata columns, the union of parameter names
/// in order of first appearance, then lhs / rhs / ratio at full precision.
pub fn bound_report_csv(report: &BoundReport) -> String {
    let mut names: Vec<&str> = Vec::new();
    for row in report.rows() {
        for (k, _) in &row.params {
            if !names.iter().any(|n| n == k) {
                names.push(k);
            }
        }
    }
    let mut out = String::from("label,system,depth,delta,truncation");
    for n in &names {
        let _ = write!(out, ",{n}");
    }
    out.push_str(",lhs,rhs,ratio\n");
    for row in report.rows() {
        let _ = write!(
            out,
            "{},{},{},{}",
            report.label,
            report.system,
            report.depth,
            format_sig(report.delta)
        );
        match report.truncation {
            Some(t) => {
                let _ = write!(out, ",{t}");
            }
            None => out.push(','),
        }
        for n in &names {
            match row.param(n) {
                Some(v) => {
                    let _ = write!(out, ",{}", format_sig(v));
                }
                None => out.push(','),
            }
        }
        let _ = writeln!(
            out,
            ",{},{},{}",
            format_sig(row.lhs),
            format_sig(row.rhs),
            format_sig(row.ratio())
        );
    }
    out
}

/// One fitted constant with its depth-stability companion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantRow {
    pub claim: String,
    pub c_depth: f64,
    pub c_next: f64,
    /// `max / min` of the two fitted constants (1 = perfectly stable).
    pub stability: f64,
    pub trials: usize,
    pub worst_seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConstantTable {
    pub rows: Vec<ConstantRow>,
}

impl ConstantTable {
    pub fn push(&mut self, claim: &str, c_depth: f64, c_next: f64, trials: usize, worst_seed: u64) {
        let (lo, hi) = if c_depth <= c_next {
            (c_depth, c_next)
        } else {
            (c_next, c_depth)
        };
        let stability = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        self.rows.push(ConstantRow {
            claim: claim.to_string(),
            c_depth,
            c_next,
            stability,
            trials,
            worst_seed,
        });
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("claim,c_depth,c_next,stability,trials,worst_seed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.claim,
                format_sig(r.c_depth),
                format_sig(r.c_next),
                format_sig(r.stability),
                r.trials,
                r.worst_seed
            );
        }
        out
    }
}

/// Almost-uniform-convergence probe output for one tolerance: a projection
/// with small complement and the tail suprema of the compressed Cesàro
/// residuals, nonincreasing in the tail start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayTable {
    pub epsilon: f64,
    /// `phi(1 - e)` actually achieved (< epsilon).
    pub tail_mass: f64,
    /// `(n_0, sup_{n >= n_0} ||e (sigma_n - id) e||_inf)`; the sup runs over
    /// the residuals computed below the truncation degree, so the last tail
    /// start covers an empty set and reports 0.
    pub rows: Vec<(u64, f64)>,
}

/// Choose a spectral cut of the column square function of `residuals` whose
/// complement mass is below `epsilon`; returns (level, projections).
fn residual_witness(residuals: &[OperatorField], epsilon: f64) -> Result<(f64, OperatorField)> {
    let s = crate::operator_field::square_function_of(residuals)?;
    let mut eigs: Vec<f64> = Vec::new();
    for t in 0..s.points() {
        let (vals, _) = s.value(t).hermitian_eigen()?;
        eigs.extend(vals);
    }
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total = eigs.len();
    // highest level that still leaves fewer than epsilon * total eigenvalues above
    let allowed = ((epsilon * total as f64).ceil() as usize).min(total);
    let level = if allowed == 0 {
        eigs[0] + 1.0
    } else {
        eigs[allowed - 1].max(0.0) + 1e-12
    };
    let window = Interval {
        lo: f64::NEG_INFINITY,
        lo_closed: false,
        hi: level,
        hi_closed: true,
    };
    let mut vals = Vec::with_capacity(s.points() as usize);
    for t in 0..s.points() {
        vals.push(
            s.value(t)
                .symmetrize()
                .spectral_projection(window)?
                .into_operator(),
        );
    }
    Ok((level, OperatorField::new(s.radix().clone(), vals)))
}

/// Probe almost-uniform convergence of Cesàro means of a field: for each
/// tolerance pick a projection of small complement, then tabulate the tail
/// suprema of the compressed residuals over the grid of tail starts.
pub fn bau_probe_field(
    ctx: &SystemContext,
    f: &OperatorField,
    epsilons: &[f64],
    n0_grid: &[u64],
) -> Result<Vec<DecayTable>> {
    let size = ctx.group_size();
    let mut residuals = Vec::with_capacity(size as usize);
    for n in 1..size {
        residuals.push(f.cesaro(ctx, n)?.sub(f));
    }
    let mut out = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let (_, e) = residual_witness(&residuals, eps)?;
        let tail_mass = 1.0 - e.phi().re;
        let mut rows = Vec::with_capacity(n0_grid.len());
        for &n0 in n0_grid {
            let mut sup = 0.0_f64;
            for (i, r) in residuals.iter().enumerate() {
                let n = i as u64 + 1;
                if n >= n0 {
                    sup = sup.max(e.mul(r).mul(&e).norm_inf());
                }
            }
            rows.push((n0, sup));
        }
        out.push(DecayTable {
            epsilon: eps,
            tail_mass,
            rows,
        });
    }
    Ok(out)
}

/// Factor-side variant of [`bau_probe_field`].
pub fn bau_probe_factor(
    fctx: &FactorContext,
    x: &Operator,
    epsilons: &[f64],
    n0_grid: &[u64],
) -> Result<Vec<DecayTable>> {
    let size = fctx.basis_size();
    let mut residuals = Vec::with_capacity(size as usize);
    for n in 1..size {
        residuals.push(fctx.nc_cesaro(x, n)?.sub(x));
    }
    let mut sq = Operator::zeros(fctx.dim());
    for r in &residuals {
        sq = sq.add(&r.adjoint().mul(r));
    }
    let s = sq.psd_sqrt()?;
    let (mut eigs, _) = s.hermitian_eigen()?;
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut out = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let allowed = ((eps * eigs.len() as f64).ceil() as usize).min(eigs.len());
        let level = if allowed == 0 {
            eigs[0] + 1.0
        } else {
            eigs[allowed - 1].max(0.0) + 1e-12
        };
        let e = s
            .functional_calculus(|v| if v <= level { 1.0 } else { 0.0 })?;
        let tail_mass = 1.0 - e.trace().re;
        let mut rows = Vec::with_capacity(n0_grid.len());
        for &n0 in n0_grid {
            let mut sup = 0.0_f64;
            for (i, r) in residuals.iter().enumerate() {
                let n = i as u64 + 1;
                if n >= n0 {
                    sup = sup.max(e.mul(r).mul(&e).op_norm());
                }
            }
            rows.push((n0, sup));
        }
        out.push(DecayTable {
            epsilon: eps,
            tail_mass,
            rows,
        });
    }
    Ok(out)
}

/// Which family of verifiers to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Kernels,
    Cuculescu,
    Cz,
    Weak11,
    Transference,
    Sunouchi,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Suite> {
        Ok(match s {
            "kernels" => Suite::Kernels,
            "cuculescu" => Suite::Cuculescu,
            "cz" => Suite::Cz,
            "weak11" => Suite::Weak11,
            "transference" => Suite::Transference,
            "sunouchi" => Suite::Sunouchi,
            "all" => Suite::All,
            other => return Err(Error::Config(format!("unknown suite `{other}`"))),
        })
    }
}

/// Everything a suite run produced: written files, hard failures (empty means
/// success), and the fitted-constant table.
#[derive(Debug, Default)]
pub struct SuiteOutcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
    pub constants: ConstantTable,
}

fn write_file(outcome: &mut SuiteOutcome, dir: &Path, name: &str, body: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    outcome.files.push(path);
    Ok(())
}

fn run_kernels(cfg: &RunConfig, outcome: &mut SuiteOutcome) -> Result<()> {
    let ctx = cfg.build_context()?;
    let deeper = cfg.build_context_for(cfg.deeper_radix()?)?;
    for lemma in [
        KernelLemma::BlockPointwise,
        KernelLemma::BlockSquare,
        KernelLemma::FejerSupTail,
        KernelLemma::SupAnnulus,
        KernelLemma::SupSquareAnnulus,
        KernelLemma::SupIntegral,
    ] {
        let report = ctx.verify_kernel_bound(lemma)?;
        let next = deeper.verify_kernel_bound(lemma)?;
        if !report.fitted_c().is_finite() || report.degenerate() {
            outcome
                .failures
                .push(format!("kernel sweep {} degenerate or unbounded", report.label));
        }
        outcome.constants.push(
            &format!("kernel/{}", report.label),
            report.fitted_c(),
            next.fitted_c(),
            report.rows().len(),
            cfg.seed,
        );
        write_file(
            outcome,
            &cfg.out,
            &format!("kernels-{}.csv", report.label),
            &bound_report_csv(&report),
        )?;
    }
    Ok(())
}

fn run_stopping(cfg: &RunConfig, outcome: &mut SuiteOutcome, decompose: bool) -> Result<()> {
    let radix = cfg.radix_sequence()?;
    let claim = if decompose { "cz" } else { "cuculescu" };
    let mut report = BoundReport::new(claim, &cfg.system, radix.depth(), 0.0);
    for trial in 0..cfg.trials as u64 {
        let f = cfg.random_positive_field(&radix, claim, trial);
        for &lambda in &cfg.lambda_grid() {
            if decompose {
                match cz_decompose(&f, lambda) {
                    Ok(cz) => report.push(BoundRow::new(
                        &[("trial", trial as f64), ("lambda", lambda)],
                        cz.g.norm_inf(),
                        cz.r_reg * lambda.max(f.cond_exp(0).norm_inf()),
                    )),
                    Err(e) => outcome
                        .failures
                        .push(format!("cz trial {trial} lambda {lambda}: {e}")),
                }
            } else {
                match cuculescu(&f, lambda) {
                    Ok(r) => {
                        let escaped = OperatorField::identity(radix.clone(), cfg.fiber_dim)
                            .sub(r.q())
                            .mul(&f)
                            .phi()
                            .re;
                        report.push(BoundRow::new(
                            &[("trial", trial as f64), ("lambda", lambda)],
                            lambda * r.tail(),
                            escaped,
                        ));
                    }
                    Err(e) => outcome
                        .failures
                        .push(format!("cuculescu trial {trial} lambda {lambda}: {e}")),
                }
            }
        }
    }
    write_file(outcome, &cfg.out, &format!("{claim}.csv"), &bound_report_csv(&report))?;
    Ok(())
}

fn weak11_fitted(cfg: &RunConfig, radix: &RadixSequence, ctx: &SystemContext) -> Result<(f64, u64, BoundReport)> {
    let mut report = BoundReport::new("weak11", ctx.name(), radix.depth(), ctx.delta());
    let mut worst = (0.0_f64, 0u64);
    for trial in 0..cfg.trials as u64 {
        let f = cfg.random_positive_field(radix, "weak11", trial);
        for &lambda in &cfg.lambda_grid() {
            let cert = weak11_certificate(&f, lambda, ctx)?;
            report.push(BoundRow::new(
                &[("trial", trial as f64), ("lambda", lambda)],
                lambda * cert.tail,
                f.norm_lp(1.0)?,
            ));
            if cert.fitted_c_total > worst.0 {
                worst = (cert.fitted_c_total, trial);
            }
        }
    }
    Ok((report.fitted_c(), worst.1, report))
}

fn run_weak11(cfg: &RunConfig, outcome: &mut SuiteOutcome) -> Result<()> {
    let ctx = cfg.build_context()?;
    let radix = cfg.radix_sequence()?;
    let (c_here, worst_seed, report) = weak11_fitted(cfg, &radix, &ctx)?;
    let deeper_radix = cfg.deeper_radix()?;
    let deeper_ctx = cfg.build_context_for(deeper_radix.clone())?;
    let (c_next, _, _) = weak11_fitted(cfg, &deeper_radix, &deeper_ctx)?;
    outcome
        .constants
        .push("weak11/escape-mass", c_here, c_next, cfg.trials, worst_seed);
    write_file(outcome, &cfg.out, "weak11.csv", &bound_report_csv(&report))?;

    // one full certificate with witnesses, re-derivable offline
    let f = cfg.random_positive_field(&radix, "weak11", worst_seed);
    let lambda = cfg.lambda_grid()[cfg.lambda_count / 2];
    let cert = weak11_certificate(&f, lambda, &ctx)?;
    write_file(
        outcome,
        &cfg.out,
        "weak11-witness.json",
        &serde_json::to_string_pretty(&cert)?,
    )?;
    write_file(
        outcome,
        &cfg.out,
        "weak11-summary.json",
        &serde_json::to_string_pretty(&cert.summary_json())?,
    )?;

    let cz = cz_decompose(&f, lambda)?;
    let off = offdiag_l1_sweep(&cz, &ctx)?;
    write_file(outcome, &cfg.out, "weak11-offdiag.csv", &bound_report_csv(&off))?;
    Ok(())
}

fn run_transference(cfg: &RunConfig, outcome: &mut SuiteOutcome) -> Result<()> {
    let (fctx, sctx) = cfg.build_factor_pair()?;
    let mut report = BoundReport::new("transference", sctx.name(), sctx.radix().depth(), sctx.delta());
    for trial in 0..cfg.trials as u64 {
        let mut rng = derive_rng(cfg.seed, "transference", trial);
        let x = sample::gaussian(fctx.dim(), &mut rng);
        let y = sample::gaussian(fctx.dim(), &mut rng);
        match verify_transference(&fctx, &sctx, &x, &y) {
            Ok(r) => {
                report.push(BoundRow::new(
                    &[("trial", trial as f64)],
                    r.max_residual(),
                    1e-9,
                ));
                if !r.pass() {
                    outcome
                        .failures
                        .push(format!("transference trial {trial}: residual {}", r.max_residual()));
                }
            }
            Err(e) => outcome.failures.push(format!("transference trial {trial}: {e}")),
        }
        for n in [1, fctx.basis_size() / 2, fctx.basis_size()] {
            for k in 0..=fctx.base().depth() {
                match intertwine(&fctx, &sctx, &x, n, k) {
                    Ok(r) if r.pass() => {}
                    Ok(r) => outcome.failures.push(format!(
                        "intertwine trial {trial} n {n} k {k}: residual {}",
                        r.max_residual()
                    )),
                    Err(e) => outcome
                        .failures
                        .push(format!("intertwine trial {trial} n {n} k {k}: {e}")),
                }
            }
        }
    }
    write_file(outcome, &cfg.out, "transference.csv", &bound_report_csv(&report))?;
    Ok(())
}

fn run_sunouchi(cfg: &RunConfig, outcome: &mut SuiteOutcome) -> Result<()> {
    let ctx = cfg.build_context()?;
    let radix = cfg.radix_sequence()?;
    let selection = LacunarySelection::default_for(&radix);
    let mut merged = BoundReport::new("sunouchi", ctx.name(), radix.depth(), ctx.delta());
    for trial in 0..cfg.trials as u64 {
        let f = cfg.random_field(&radix, "sunouchi", trial);
        for p in [1.0, 2.0] {
            match so1_ratio(&ctx, &f, p, &selection) {
                Ok(r) => {
                    for row in r.rows() {
                        let mut params = vec![("trial".to_string(), trial as f64)];
                        params.extend(row.params.iter().cloned());
                        merged.push(BoundRow {
                            params,
                            lhs: row.lhs,
                            rhs: row.rhs,
                        });
                    }
                }
                Err(e) => outcome
                    .failures
                    .push(format!("sunouchi ratio trial {trial} p {p}: {e}")),
            }
        }
    }
    write_file(outcome, &cfg.out, "sunouchi.csv", &bound_report_csv(&merged))?;

    let f = cfg.random_field(&radix, "full-range", 0);
    match full_range_domination(&ctx, &f) {
        Ok(r) => {
            outcome
                .constants
                .push("sunouchi/full-range", r.fitted_c(), r.fitted_c(), 1, cfg.seed);
            write_file(outcome, &cfg.out, "full-range.csv", &bound_report_csv(&r))?;
        }
        Err(e) => outcome.failures.push(format!("full-range domination: {e}")),
    }

    match cfg.build_factor_pair() {
        Ok((fctx, sctx)) => {
            let sel = LacunarySelection::doubled_default(fctx.doubled())?;
            let mut rng = derive_rng(cfg.seed, "sunouchi-factor", 0);
            let x = sample::gaussian(fctx.dim(), &mut rng);
            match nc_sunouchi_ratio(&fctx, &sctx, &x, 2.0, &sel) {
                Ok(r) => write_file(outcome, &cfg.out, "sunouchi-factor.csv", &bound_report_csv(&r))?,
                Err(e) => outcome.failures.push(format!("factor sunouchi: {e}")),
            }
        }
        Err(e) => outcome.failures.push(format!("factor context: {e}")),
    }
    Ok(())
}

/// Run one verifier family (or all) under a configuration. Identical
/// configurations produce byte-identical report files; hard failures are
/// collected rather than aborting the sweep.
pub fn run_suite(cfg: &RunConfig, suite: Suite) -> Result<SuiteOutcome> {
    cfg.check_budget()?;
    let mut outcome = SuiteOutcome::default();
    match suite {
        Suite::Kernels => run_kernels(cfg, &mut outcome)?,
        Suite::Cuculescu => run_stopping(cfg, &mut outcome, false)?,
        Suite::Cz => run_stopping(cfg, &mut outcome, true)?,
        Suite::Weak11 => run_weak11(cfg, &mut outcome)?,
        Suite::Transference => run_transference(cfg, &mut outcome)?,
        Suite::Sunouchi => run_sunouchi(cfg, &mut outcome)?,
        Suite::All => {
            run_kernels(cfg, &mut outcome)?;
            run_stopping(cfg, &mut outcome, false)?;
            run_stopping(cfg, &mut outcome, true)?;
            run_weak11(cfg, &mut outcome)?;
            run_transference(cfg, &mut outcome)?;
            run_sunouchi(cfg, &mut outcome)?;
        }
    }
    let table = outcome.constants.csv();
    write_file(&mut outcome, &cfg.out, "constants.csv", &table)?;
    Ok(outcome)
}

/// CSV for a batch of decay tables: one row per (trial, epsilon, tail start).
pub fn decay_csv(tables: &[(u64, DecayTable)]) -> String {
    let mut out = String::from("trial,epsilon,tail_mass,n0,sup\n");
    for (trial, table) in tables {
        for &(n0, sup) in &table.rows {
            let _ = writeln!(
                out,
                "{trial},{},{},{n0},{}",
                format_sig(table.epsilon),
                format_sig(table.tail_mass),
                format_sig(sup)
            );
        }
    }
    out
}

/// Almost-uniform-convergence probes on both sides: random classical fields
/// and random factor elements, tabulated over tail starts at the scale
/// boundaries. Writes `bau-field.csv` and `bau-factor.csv`.
pub fn run_bau_probe(cfg: &RunConfig) -> Result<SuiteOutcome> {
    cfg.check_budget()?;
    let mut outcome = SuiteOutcome::default();
    let epsilons = [0.1, 0.25, 0.5];
    let ctx = cfg.build_context()?;
    let radix = cfg.radix_sequence()?;
    let mut n0s: Vec<u64> = (0..=radix.depth()).map(|k| radix.cumulative(k)).collect();
    n0s.dedup();

    let mut field_tables = Vec::new();
    for trial in 0..cfg.trials as u64 {
        let f = cfg.random_field(&radix, "bau-field", trial);
        match bau_probe_field(&ctx, &f, &epsilons, &n0s) {
            Ok(tables) => field_tables.extend(tables.into_iter().map(|t| (trial, t))),
            Err(e) => outcome.failures.push(format!("field probe trial {trial}: {e}")),
        }
    }
    write_file(&mut outcome, &cfg.out, "bau-field.csv", &decay_csv(&field_tables))?;

    match cfg.build_factor_pair() {
        Ok((fctx, _)) => {
            let doubled = fctx.doubled().clone();
            let mut f_n0s: Vec<u64> =
                (0..=doubled.depth()).map(|k| doubled.cumulative(k)).collect();
            f_n0s.dedup();
            let mut factor_tables = Vec::new();
            for trial in 0..cfg.trials as u64 {
                let mut rng = derive_rng(cfg.seed, "bau-factor", trial);
                let x = sample::gaussian(fctx.dim(), &mut rng);
                match bau_probe_factor(&fctx, &x, &epsilons, &f_n0s) {
                    Ok(tables) => {
                        for table in &tables {
                            for w in table.rows.windows(2) {
                                if w[1].1 > w[0].1 + 1e-12 {
                                    outcome.failures.push(format!(
                                        "factor probe trial {trial}: tail sup increased at n0={}",
                                        w[1].0
                                    ));
                                }
                            }
                        }
                        factor_tables.extend(tables.into_iter().map(|t| (trial, t)));
                    }
                    Err(e) => outcome.failures.push(format!("factor probe trial {trial}: {e}")),
                }
            }
            write_file(&mut outcome, &cfg.out, "bau-factor.csv", &decay_csv(&factor_tables))?;
        }
        Err(e) => outcome.failures.push(format!("factor context: {e}")),
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn fit_constant_examples() {
        let f = fit_constant(&[(1.0, 2.0), (3.0, 3.0)]);
        assert_eq!((f.c_hat, f.argmax, f.degenerate), (1.0, Some(1), false));
        let f = fit_constant(&[(0.0, 5.0)]);
        assert_eq!((f.c_hat, f.argmax, f.degenerate), (0.0, Some(0), false));
        let f = fit_constant(&[(1.0, 0.0)]);
        assert!(f.degenerate);
        assert_eq!(f.c_hat, 0.0);
        // ties break to the lowest index
        let f = fit_constant(&[(2.0, 2.0), (3.0, 3.0)]);
        assert_eq!(f.argmax, Some(0));
    }

    #[test]
    fn full_precision_roundtrip() {
        for v in [1.0 / 3.0, 2.0_f64.sqrt(), 1e-17, 123456.789012345678] {
            let s = format_sig(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "lost precision for {v}");
        }
    }

    #[test]
    fn derived_rngs_are_stable_and_independent() {
        let a1 = derive_rng(7, "claim", 0).next_u64();
        let a2 = derive_rng(7, "claim", 0).next_u64();
        assert_eq!(a1, a2);
        assert_ne!(a1, derive_rng(7, "claim", 1).next_u64());
        assert_ne!(a1, derive_rng(7, "other", 0).next_u64());
        assert_ne!(a1, derive_rng(8, "claim", 0).next_u64());
    }

    #[test]
    fn config_document_roundtrip() {
        let cfg = RunConfig::from_kv(
            "# comment\nradix = 2,3,2\nfiber_dim = 3\nsystem = m-adic\ntrials = 2\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(cfg.radix, vec![2, 3, 2]);
        assert_eq!(cfg.fiber_dim, 3);
        assert_eq!(cfg.system, "m-adic");
        assert_eq!(cfg.trials, 2);
        assert_eq!(cfg.seed, 42);
        // unchanged fields keep defaults
        assert_eq!(cfg.budget, 8192);
        assert!(RunConfig::from_kv("radix 2,2\n").is_err());
        assert!(RunConfig::from_kv("mystery = 1\n").is_err());
        let mut cfg = cfg;
        cfg.set("depth", "4").unwrap();
        assert_eq!(cfg.radix, vec![2, 2, 2, 2]);
    }

    #[test]
    fn budget_is_enforced() {
        let mut cfg = RunConfig::default();
        cfg.set("depth", "14").unwrap();
        match cfg.check_budget() {
            Err(Error::BudgetExceeded { estimate, budget }) => {
                assert_eq!(estimate, 2 * 16384);
                assert_eq!(budget, 8192);
            }
            other => panic!("expected budget refusal, got {other:?}"),
        }
    }

    #[test]
    fn lambda_grid_is_log_spaced() {
        let cfg = RunConfig::default();
        let grid = cfg.lambda_grid();
        assert_eq!(grid.len(), 8);
        assert!((grid[0] - 0.25).abs() < 1e-12);
        assert!((grid[7] - 4.0).abs() < 1e-12);
        for w in grid.windows(2) {
            assert!((w[1] / w[0] - grid[1] / grid[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn corrupted_system_refuses_validation() {
        let mut cfg = RunConfig::default();
        cfg.set("system", "corrupted").unwrap();
        match cfg.build_context() {
            Err(Error::AssumptionViolated { clause, residual, .. }) => {
                assert!(clause.starts_with("iii"));
                assert!((residual - 0.21).abs() < 1e-9);
            }
            Ok(_) => panic!("corrupted system validated"),
            Err(other) => panic!("expected assumption violation, got {other:?}"),
        }
    }

    #[test]
    fn bau_probe_tables_decay() {
        let cfg = RunConfig::default();
        let ctx = cfg.build_context().unwrap();
        let radix = cfg.radix_sequence().unwrap();
        // constants converge instantly
        let one = OperatorField::identity(radix.clone(), 2);
        let tables = bau_probe_field(&ctx, &one, &[0.5], &[1, 4, 8]).unwrap();
        assert!(tables[0].rows.iter().all(|&(_, s)| s < 1e-12));
        // random field: nonincreasing rows, empty tail reports zero
        let f = cfg.random_field(&radix, "bau", 0);
        let n0s: Vec<u64> = (1..=radix.group_size()).collect();
        for table in bau_probe_field(&ctx, &f, &[0.25, 0.5], &n0s).unwrap() {
            assert!(table.tail_mass < table.epsilon);
            for w in table.rows.windows(2) {
                assert!(w[1].1 <= w[0].1 + 1e-12);
            }
            assert!(table.rows.last().unwrap().1 < 1e-9);
        }
    }

    #[test]
    fn factor_probe_matches_single_coefficient_deficit() {
        let fctx = crate::nc_factor::build_factor(&[2, 2]).unwrap();
        let w1 = fctx.walsh(1).unwrap().clone();
        let n0s: Vec<u64> = (2..=8).collect();
        let tables = bau_probe_factor(&fctx, &w1, &[2.0], &n0s).unwrap();
        let table = &tables[0];
        assert!(table.tail_mass.abs() < 1e-12, "expected the full projection");
        for &(n0, sup) in &table.rows {
            assert!((sup - 1.0 / n0 as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn suite_runs_are_byte_identical() {
        let dir_a = std::env::temp_dir().join("ncvf-harness-test-a");
        let dir_b = std::env::temp_dir().join("ncvf-harness-test-b");
        for d in [&dir_a, &dir_b] {
            let _ = std::fs::remove_dir_all(d);
        }
        let mut cfg = RunConfig::default();
        cfg.set("radix", "2,2").unwrap();
        cfg.set("trials", "1").unwrap();
        cfg.out = dir_a.clone();
        let a = run_suite(&cfg, Suite::Kernels).unwrap();
        assert!(a.failures.is_empty(), "{:?}", a.failures);
        cfg.out = dir_b.clone();
        let b = run_suite(&cfg, Suite::Kernels).unwrap();
        assert_eq!(a.files.len(), b.files.len());
        for (fa, fb) in a.files.iter().zip(&b.files) {
            let ba = std::fs::read(fa).unwrap();
            let bb = std::fs::read(fb).unwrap();
            assert_eq!(ba, bb, "{fa:?} differs from {fb:?}");
        }
        // one CSV per kernel sweep plus the constant table
        assert_eq!(a.files.len(), 7);
        for d in [&dir_a, &dir_b] {
            let _ = std::fs::remove_dir_all(d);
        }
    }

    #[test]
    fn stopping_suites_produce_reports() {
        let dir = std::env::temp_dir().join("ncvf-harness-test-stop");
        let _ = std::fs::remove_dir_all(&dir);
        let mut cfg = RunConfig::default();
        cfg.set("radix", "2,2").unwrap();
        cfg.set("trials", "1").unwrap();
        cfg.set("lambda_count", "3").unwrap();
        cfg.out = dir.clone();
        for suite in [Suite::Cuculescu, Suite::Cz] {
            let out = run_suite(&cfg, suite).unwrap();
            assert!(out.failures.is_empty(), "{:?}", out.failures);
        }
        let csv = std::fs::read_to_string(dir.join("cuculescu.csv")).unwrap();
        assert!(csv.starts_with("label,system,depth,delta,truncation"));
        assert!(csv.lines().count() > 1);
        let _ = std::fs::remove_dir_all(&dir);
    }
}
