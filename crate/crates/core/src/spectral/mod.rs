//! Dense linear-algebra primitives: symmetric eigendecomposition, SVD,
//! Kronecker products, PSD square roots, pseudo-condition numbers and the
//! Weyl-type bounds on extreme eigenvalues of sums.
//!
//! Eigen- and singular-value solvers are delegated to `nalgebra`; everything
//! else operates on the row-major [`DenseMatrix`].

mod matrix;

use std::fmt;

use nalgebra::linalg::{SymmetricEigen, SVD};

pub use matrix::DenseMatrix;

use crate::error::{Error, Result};

/// Default upper limit on either dimension of an assembled matrix.
pub const DEFAULT_DIM_CAP: usize = 10_000;

const MAX_SOLVER_SWEEPS: usize = 10_000;

/// Eigen- or singular values sorted non-increasing, with the numerical rank
/// they were assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    numerical_rank: usize,
    tolerance: f64,
}

impl Spectrum {
    /// Sorts `values` descending and counts how many lie above `tolerance`.
    pub fn new(mut values: Vec<f64>, tolerance: f64) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("spectrum contains non-finite values".into()));
        }
        if !(tolerance >= 0.0) {
            return Err(Error::Validation(format!("tolerance {tolerance} is negative")));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        let numerical_rank = values.iter().take_while(|&&v| v > tolerance).count();
        Ok(Self {
            values,
            numerical_rank,
            tolerance,
        })
    }

    /// Builds a spectrum whose tolerance comes from `policy`.
    pub fn with_policy(values: Vec<f64>, policy: RankPolicy) -> Result<Self> {
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self::new(values, policy.cutoff(max_abs))
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

    pub fn numerical_rank(&self) -> usize {
        self.numerical_rank
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// The values above the tolerance.
    pub fn nonzero(&self) -> &[f64] {
        &self.values[..self.numerical_rank]
    }

    /// Every value multiplied by `c > 0`, tolerance scaled alongside.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.values.iter().map(|v| v * c).collect(),
            self.tolerance * c,
        )
    }

    /// Absolute values, re-sorted; used for indefinite spectra.
    pub fn magnitudes(&self) -> Result<Self> {
        Self::new(
            self.values.iter().map(|v| v.abs()).collect(),
            self.tolerance,
        )
    }
}

/// Rule selecting the smallest eigenvalue treated as nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankPolicy {
    /// The rank is known; the denominator is the `r`-th largest value.
    Analytic(usize),
    /// Values above `factor * max|λ|` count as nonzero.
    Relative(f64),
    /// Values above a fixed cutoff count as nonzero.
    Absolute(f64),
}

impl RankPolicy {
    /// `max(rows, cols) · ε` relative cutoff, the usual numerical-rank rule.
    pub fn default_for(rows: usize, cols: usize) -> Self {
        RankPolicy::Relative(rows.max(cols) as f64 * f64::EPSILON)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RankPolicy::Analytic(0) => {
                Err(Error::Validation("analytic rank must be at least 1".into()))
            }
            RankPolicy::Relative(f) | RankPolicy::Absolute(f) if !(f >= 0.0) => Err(
                Error::Validation(format!("rank threshold {f} must be non-negative")),
            ),
            _ => Ok(()),
        }
    }

    /// Absolute cutoff implied for a spectrum whose largest magnitude is
    /// `max_abs`. Analytic policies imply no cutoff.
    pub fn cutoff(&self, max_abs: f64) -> f64 {
        match *self {
            RankPolicy::Analytic(_) => 0.0,
            RankPolicy::Relative(f) => f * max_abs,
            RankPolicy::Absolute(c) => c,
        }
    }
}

impl fmt::Display for RankPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankPolicy::Analytic(r) => write!(f, "analytic:{r}"),
            RankPolicy::Relative(x) => write!(f, "relative:{x:e}"),
            RankPolicy::Absolute(x) => write!(f, "absolute:{x:e}"),
        }
    }
}

impl std::str::FromStr for RankPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mode, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Validation(format!("rank policy `{s}` needs mode:value")))?;
        let bad = |_| Error::Validation(format!("rank policy `{s}` has a malformed value"));
        let policy = match mode.trim() {
            "analytic" => RankPolicy::Analytic(arg.trim().parse().map_err(|_| {
                Error::Validation(format!("rank policy `{s}` has a malformed rank"))
            })?),
            "relative" => RankPolicy::Relative(arg.trim().parse().map_err(bad)?),
            "absolute" => RankPolicy::Absolute(arg.trim().parse().map_err(bad)?),
            other => {
                return Err(Error::Validation(format!("unknown rank policy mode `{other}`")))
            }
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Result of [`sym_eigendecompose`].
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub spectrum: Spectrum,
    /// Orthonormal eigenvectors as columns, ordered like `spectrum`.
    pub vectors: Option<DenseMatrix>,
}

fn check_symmetric(m: &DenseMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition of a non-square {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    let scale = m.max_abs();
    if m.asymmetry() > 1e-10 * scale {
        return Err(Error::Validation(format!(
            "matrix is not symmetric (asymmetry {:e} relative to max {:e})",
            m.asymmetry(),
            scale
        )));
    }
    Ok(())
}

/// Eigenvalues (descending) of the symmetrized input and, on request, the
/// matching orthonormal eigenvectors.
pub fn sym_eigendecompose(m: &DenseMatrix, want_vectors: bool) -> Result<EigenDecomposition> {
    check_symmetric(m)?;
    let n = m.rows();
    if n == 0 {
        return Ok(EigenDecomposition {
            spectrum: Spectrum::new(Vec::new(), 0.0)?,
            vectors: want_vectors.then(|| DenseMatrix::zeros(0, 0)),
        });
    }
    let sym = m.symmetrized().to_nalgebra();
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, MAX_SOLVER_SWEEPS).ok_or_else(|| {
        Error::Numeric(format!(
            "symmetric eigensolver did not converge within {MAX_SOLVER_SWEEPS} iterations"
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = want_vectors
        .then(|| DenseMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]));
    Ok(EigenDecomposition {
        spectrum: Spectrum::with_policy(values, RankPolicy::default_for(n, n))?,
        vectors,
    })
}

/// Eigenvalues only, descending.
pub fn eigenvalues(m: &DenseMatrix) -> Result<Spectrum> {
    Ok(sym_eigendecompose(m, false)?.spectrum)
}

/// Singular values, descending; `min(rows, cols)` of them.
pub fn singular_values(m: &DenseMatrix) -> Result<Spectrum> {
    if !m.is_finite() {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    let policy = RankPolicy::default_for(m.rows(), m.cols());
    if m.rows() == 0 || m.cols() == 0 {
        return Spectrum::with_policy(Vec::new(), policy);
    }
    let svd = SVD::try_new(m.to_nalgebra(), false, false, f64::EPSILON, MAX_SOLVER_SWEEPS)
        .ok_or_else(|| {
            Error::Numeric(format!(
                "SVD did not converge within {MAX_SOLVER_SWEEPS} iterations"
            ))
        })?;
    Spectrum::with_policy(svd.singular_values.iter().copied().collect(), policy)
}

/// Kronecker product under the row-major convention, capped at
/// [`DEFAULT_DIM_CAP`] per dimension.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    kron_with_cap(a, b, DEFAULT_DIM_CAP)
}

pub fn kron_with_cap(a: &DenseMatrix, b: &DenseMatrix, cap: usize) -> Result<DenseMatrix> {
    let rows = a.rows().checked_mul(b.rows());
    let cols = a.cols().checked_mul(b.cols());
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) if r <= cap && c <= cap => (r, c),
        _ => {
            return Err(Error::Size(format!(
                "Kronecker product of {}x{} and {}x{} exceeds the {cap}x{cap} cap",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )))
        }
    };
    let mut out = DenseMatrix::zeros(rows, cols);
    kron_accumulate(&mut out, a, b, 1.0);
    Ok(out)
}

/// `out += scale · (a ⊗ b)`; shapes must already agree.
pub(crate) fn kron_accumulate(out: &mut DenseMatrix, a: &DenseMatrix, b: &DenseMatrix, scale: f64) {
    let (br, bc) = b.shape();
    debug_assert_eq!(out.shape(), (a.rows() * br, a.cols() * bc));
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let aij = scale * a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..br {
                let row = i * br + k;
                for l in 0..bc {
                    out[(row, j * bc + l)] += aij * b[(k, l)];
                }
            }
        }
    }
}

fn check_psd_spectrum(spec: &Spectrum, name: &str) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::Validation(format!("spectrum {name} is empty")));
    }
    if spec.min() < -spec.tolerance() {
        return Err(Error::PsdViolation(format!(
            "spectrum {name} has eigenvalue {:e} below -{:e}",
            spec.min(),
            spec.tolerance()
        )));
    }
    Ok(())
}

/// Extreme eigenvalues of `A ⊗ B` for PSD `A`, `B`: the products of the
/// respective extremes.
pub fn kron_extreme_eigs(spec_a: &Spectrum, spec_b: &Spectrum) -> Result<(f64, f64)> {
    check_psd_spectrum(spec_a, "A")?;
    check_psd_spectrum(spec_b, "B")?;
    let clamp = |v: f64| v.max(0.0);
    Ok((
        clamp(spec_a.min()) * clamp(spec_b.min()),
        spec_a.max() * spec_b.max(),
    ))
}

/// Unique PSD square root. Eigenvalues down to `-1e-10 λ_max` are clamped
/// to zero; anything lower is rejected.
pub fn psd_sqrt(m: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = sym_eigendecompose(m, true)?;
    let n = m.rows();
    let lam_max = eig.spectrum.max().max(0.0);
    let floor = -1e-10 * lam_max;
    if let Some(&bad) = eig.spectrum.values().iter().find(|&&v| v < floor) {
        return Err(Error::PsdViolation(format!(
            "eigenvalue {bad:e} is below the clamp threshold {floor:e}"
        )));
    }
    let q = eig.vectors.expect("vectors requested");
    let roots: Vec<f64> = eig.spectrum.values().iter().map(|v| v.max(0.0).sqrt()).collect();
    let scaled = DenseMatrix::from_fn(n, n, |i, j| q[(i, j)] * roots[j]);
    Ok((&scaled * &q.transpose()).symmetrized())
}

/// `λ_max / λ_r` where `r` is the rank chosen by `policy`.
pub fn pseudo_condition_number(spec: &Spectrum, policy: RankPolicy) -> Result<f64> {
    policy.validate()?;
    let values = spec.values();
    let top = spec.max();
    match policy {
        RankPolicy::Analytic(r) => {
            if r > values.len() {
                return Err(Error::Index(format!(
                    "analytic rank {r} exceeds the {} available values",
                    values.len()
                )));
            }
            let denom = values[r - 1];
            if !(denom > 0.0) {
                return Err(Error::RankZero { cutoff: 0.0 });
            }
            Ok(top / denom)
        }
        RankPolicy::Relative(_) | RankPolicy::Absolute(_) => {
            let cutoff = policy.cutoff(top.abs());
            let rank = values.iter().take_while(|&&v| v > cutoff).count();
            if rank == 0 {
                return Err(Error::RankZero { cutoff });
            }
            Ok(top / values[rank - 1])
        }
    }
}

/// `κ(r) = λ_1 / λ_r` for every `r` up to the count of positive values.
pub fn rank_sensitivity_sweep(spec: &Spectrum) -> Vec<(usize, f64)> {
    let values = spec.values();
    let positive = values.iter().take_while(|&&v| v > 0.0).count();
    (1..=positive).map(|r| (r, values[0] / values[r - 1])).collect()
}

/// `(λ_max(A) + λ_max(B), λ_min(A) + λ_min(B))`, which bound `λ_max(A+B)`
/// from above and `λ_min(A+B)` from below.
pub fn weyl_sum_bounds(spec_a: &Spectrum, spec_b: &Spectrum) -> Result<(f64, f64)> {
    if spec_a.len() != spec_b.len() {
        return Err(Error::Dimension(format!(
            "spectra of length {} and {}",
            spec_a.len(),
            spec_b.len()
        )));
    }
    if spec_a.is_empty() {
        return Err(Error::Validation("empty spectra".into()));
    }
    Ok((spec_a.max() + spec_b.max(), spec_a.min() + spec_b.min()))
}

/// κ of a matrix from its singular values, using the full analytic
/// minimum (index `min(rows, cols)`). Returns `(κ, σ_max, σ_min)`.
pub(crate) fn analytic_condition(m: &DenseMatrix) -> Result<(f64, f64, f64)> {
    let sv = singular_values(m)?;
    let (hi, lo) = (sv.max(), sv.min());
    let kappa = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    Ok((kappa, hi, lo))
}
