//! Gauss-Newton matrices: the compact analytic forms for linear, residual,
//! Leaky-ReLU and lifted convolutional networks, the stacked-Jacobian oracle,
//! and the functional Hessian of a one-hidden-layer linear net.
//!
//! Two compact forms share the nonzero spectrum of the parameter-space
//! matrix `G = (1/n) Σ_i J_iᵀ J_i`:
//!
//! * `Σ_l P_l P_lᵀ ⊗ Σ^{1/2} Q_lᵀ Q_l Σ^{1/2}` (`kd x kd`, includes `1/n`
//!   through `Σ`), with `P_l = W^{L:l+1}` and `Q_l = W^{l-1:1}`;
//! * the data-indexed Gram `J Jᵀ` (`kn x kn`, no `1/n`), rows ordered
//!   sample-major (`j·k + c`).
//!
//! Only κ is comparable across the two; raw eigenvalues differ by `n`.

use rayon::prelude::*;

use crate::data::covariance_of;
use crate::error::{Error, Result};
use crate::network::{
    forward, leaky, lift_conv, partial_product, prefix_suffix_products, NetworkKind, NetworkSpec, Params, TeacherSpec,
};
use crate::spectral::{
    eigenvalues, kron_accumulate, psd_sqrt, pseudo_condition_number, singular_values, DenseMatrix,
    RankPolicy, Spectrum, DEFAULT_DIM_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnFamily {
    /// `kd x kd`, built from the input covariance.
    LinearSigmaForm,
    /// `kn x kn`, built from the data matrix.
    DataForm,
    /// Whichever of `JᵀJ` (`p x p`) or `J Jᵀ` (`kn x kn`) is smaller.
    ParameterForm,
}

#[derive(Debug, Clone)]
pub struct GnMatrix {
    pub matrix: DenseMatrix,
    pub family: GnFamily,
    /// Whether the `1/n` average is folded in.
    pub includes_inv_n: bool,
}

impl GnMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        eigenvalues(&self.matrix)
    }

    /// Pseudo-condition number; `None` selects the default policy for the
    /// matrix size.
    pub fn kappa(&self, policy: Option<RankPolicy>) -> Result<f64> {
        let policy = policy.unwrap_or_else(|| RankPolicy::default_for(self.dim(), self.dim()));
        pseudo_condition_number(&self.spectrum()?, policy)
    }
}

/// `Λ^i_{jj} = σ'(V_i x_j)`, stored as an `m x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitActivationPattern {
    pub slopes: DenseMatrix,
}

impl UnitActivationPattern {
    /// Diagonal of `Λ^i`.
    pub fn unit(&self, i: usize) -> &[f64] {
        self.slopes.row(i)
    }
}

fn check_cap(size: usize) -> Result<()> {
    if size > DEFAULT_DIM_CAP {
        return Err(Error::Size(format!(
            "Gauss-Newton matrix of size {size} exceeds the {DEFAULT_DIM_CAP} cap"
        )));
    }
    Ok(())
}

fn check_chain(layers: &[DenseMatrix]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Dimension("network has no layers".into()));
    }
    for (l, pair) in layers.windows(2).enumerate() {
        if pair[1].cols() != pair[0].rows() {
            return Err(Error::Dimension(format!(
                "layer {} outputs {} but layer {} takes {}",
                l + 1,
                pair[0].rows(),
                l + 2,
                pair[1].cols()
            )));
        }
    }
    Ok(())
}

/// `(P_l P_lᵀ, Σ^{1/2} Q_lᵀ Q_l Σ^{1/2})` for every layer, ascending `l`.
pub(crate) fn layer_factors(
    params: &Params,
    beta: f64,
    sigma_half: &DenseMatrix,
) -> Result<Vec<(DenseMatrix, DenseMatrix)>> {
    prefix_suffix_products(params, beta)?
        .into_par_iter()
        .map(|(q, p)| {
            let qs = q.matmul(sigma_half)?;
            Ok((p.outer_gram(), qs.gram().symmetrized()))
        })
        .collect()
}

fn sigma_form(params: &Params, beta: f64, sigma: &DenseMatrix) -> Result<GnMatrix> {
    check_chain(&params.layers)?;
    let d = params.layers[0].cols();
    let k = params.layers.last().expect("non-empty").rows();
    if sigma.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, network input is {d}",
            sigma.rows(),
            sigma.cols()
        )));
    }
    check_cap(k * d)?;
    let half = psd_sqrt(sigma)?;
    let mut g = DenseMatrix::zeros(k * d, k * d);
    for (a, b) in layer_factors(params, beta, &half)? {
        kron_accumulate(&mut g, &a, &b, 1.0);
    }
    Ok(GnMatrix {
        matrix: g.symmetrized(),
        family: GnFamily::LinearSigmaForm,
        includes_inv_n: true,
    })
}

/// `kd x kd` form for a deep linear net with input covariance `Σ`.
pub fn gn_linear(params: &Params, sigma: &DenseMatrix) -> Result<GnMatrix> {
    sigma_form(params, 0.0, sigma)
}

/// As [`gn_linear`] with every layer replaced by `W + βI`.
pub fn gn_residual(params: &Params, beta: f64, sigma: &DenseMatrix) -> Result<GnMatrix> {
    if !(beta >= 0.0) {
        return Err(Error::Validation(format!("residual scale {beta} must be >= 0")));
    }
    sigma_form(params, beta, sigma)
}

/// Lifted-network form of a convolutional chain: Toeplitz layers treated
/// as dense weights.
pub fn gn_conv(lifted_layers: &[DenseMatrix], sigma: &DenseMatrix) -> Result<GnMatrix> {
    gn_linear(&Params::new(lifted_layers.to_vec()), sigma)
}

/// Slopes of `σ(z) = max(αz, z)` at the pre-activations `V X`; zero counts
/// as negative.
pub fn unit_patterns(v: &DenseMatrix, x: &DenseMatrix, alpha: f64) -> Result<UnitActivationPattern> {
    let pre = v.matmul(x)?;
    Ok(UnitActivationPattern {
        slopes: pre.map(|z| if z > 0.0 { 1.0 } else { alpha }),
    })
}

/// `Σ_i Λ^i XᵀX Λ^i ⊗ W_{•i} W_{•i}ᵀ + Γ ⊗ I_k` for `W σ(V x)`, with
/// `Γ = Σ_i Λ^i Xᵀ V_iᵀ V_i X Λ^i`. Returns the matrix and `Γ`.
pub fn gn_leaky(
    w: &DenseMatrix,
    v: &DenseMatrix,
    x: &DenseMatrix,
    alpha: f64,
) -> Result<(GnMatrix, DenseMatrix)> {
    let (k, m) = w.shape();
    if v.rows() != m || v.cols() != x.rows() {
        return Err(Error::Dimension(format!(
            "W {k}x{m}, V {}x{}, X {}x{} do not chain",
            v.rows(),
            v.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let n = x.cols();
    check_cap(k * n)?;
    let pattern = unit_patterns(v, x, alpha)?;
    let hidden = v.matmul(x)?.map(|z| leaky(z, alpha));
    let gamma = hidden.gram().symmetrized();
    let xtx = x.gram();
    let lam = &pattern.slopes;

    let mut g = DenseMatrix::zeros(k * n, k * n);
    // coupling[(j, j')][(c, c')] = Σ_i λ_ij λ_ij' W_ci W_c'i
    let mut coupling = vec![0.0; k * k];
    for j in 0..n {
        for jp in j..n {
            coupling.iter_mut().for_each(|c| *c = 0.0);
            for i in 0..m {
                let s = lam[(i, j)] * lam[(i, jp)];
                if s == 0.0 {
                    continue;
                }
                for c in 0..k {
                    let wc = s * w[(c, i)];
                    for cp in 0..k {
                        coupling[c * k + cp] += wc * w[(cp, i)];
                    }
                }
            }
            for c in 0..k {
                for cp in 0..k {
                    let mut val = xtx[(j, jp)] * coupling[c * k + cp];
                    if c == cp {
                        val += gamma[(j, jp)];
                    }
                    g[(j * k + c, jp * k + cp)] = val;
                    g[(jp * k + cp, j * k + c)] = val;
                }
            }
        }
    }
    Ok((
        GnMatrix {
            matrix: g,
            family: GnFamily::DataForm,
            includes_inv_n: false,
        },
        gamma,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// Closed-form Jacobian; linear and residual nets only.
    AnalyticLinear,
    /// Central differences with step `√ε (1 + |θ_j|)`.
    FiniteDifference,
}

/// Outputs of all samples flattened sample-major: entry `j·k + c`.
fn stacked_outputs(spec: &NetworkSpec, params: &Params, x: &DenseMatrix) -> Result<Vec<f64>> {
    let out = forward(spec, params, x)?;
    if !out.is_finite() {
        return Err(Error::Numeric("forward pass produced non-finite outputs".into()));
    }
    Ok(out.transpose().into_vec())
}

/// Stacked Jacobian of all `kn` outputs with respect to all parameters,
/// parameters in [`Params::flatten`] order.
pub fn stacked_jacobian(
    spec: &NetworkSpec,
    params: &Params,
    x: &DenseMatrix,
    mode: JacobianMode,
) -> Result<DenseMatrix> {
    params.check(spec)?;
    match mode {
        JacobianMode::AnalyticLinear => analytic_jacobian(spec, params, x),
        JacobianMode::FiniteDifference => {
            let theta = params.flatten();
            let rows = spec.output_dim() * x.cols();
            let mut jac = DenseMatrix::zeros(rows, theta.len());
            let mut probe = theta.clone();
            for p in 0..theta.len() {
                let h = f64::EPSILON.sqrt() * (1.0 + theta[p].abs());
                probe[p] = theta[p] + h;
                let up = stacked_outputs(spec, &params.with_flat(&probe), x)?;
                probe[p] = theta[p] - h;
                let down = stacked_outputs(spec, &params.with_flat(&probe), x)?;
                probe[p] = theta[p];
                let step = (theta[p] + h) - (theta[p] - h);
                for r in 0..rows {
                    jac[(r, p)] = (up[r] - down[r]) / step;
                }
            }
            Ok(jac)
        }
    }
}

fn analytic_jacobian(spec: &NetworkSpec, params: &Params, x: &DenseMatrix) -> Result<DenseMatrix> {
    if !matches!(spec.kind, NetworkKind::LinearDeep | NetworkKind::Residual { .. }) {
        return Err(Error::Spec(
            "analytic Jacobian is available for linear and residual nets only".into(),
        ));
    }
    if x.rows() != spec.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} rows, network expects {}",
            x.rows(),
            spec.input_dim()
        )));
    }
    let beta = spec.beta();
    let depth = params.depth();
    let (k, n) = (spec.output_dim(), x.cols());
    let mut jac = DenseMatrix::zeros(k * n, params.count());
    let mut offset = 0;
    for l in 1..=depth {
        let p = partial_product(params, depth, l + 1, beta)?;
        let qx = partial_product(params, l - 1, 1, beta)?.matmul(x)?;
        let (rows, cols) = params.layers[l - 1].shape();
        // dF_c(x_j) / dW[a, b] = P[c, a] (Q x_j)[b]
        for j in 0..n {
            for c in 0..k {
                for a in 0..rows {
                    let pa = p[(c, a)];
                    for b in 0..cols {
                        jac[(j * k + c, offset + a * cols + b)] = pa * qx[(b, j)];
                    }
                }
            }
        }
        offset += rows * cols;
    }
    Ok(jac)
}

/// Gauss-Newton matrix `(1/n) Σ_i J_iᵀ J_i` from the stacked Jacobian,
/// returned as the smaller of `(1/n) JᵀJ` and `(1/n) J Jᵀ`.
pub fn gn_from_jacobian(
    spec: &NetworkSpec,
    params: &Params,
    x: &DenseMatrix,
    mode: JacobianMode,
) -> Result<GnMatrix> {
    let jac = stacked_jacobian(spec, params, x, mode)?;
    let n = x.cols() as f64;
    let gram = if jac.cols() <= jac.rows() {
        jac.gram()
    } else {
        jac.outer_gram()
    };
    let matrix = gram.scale(1.0 / n).symmetrized();
    if !matrix.is_finite() {
        return Err(Error::Numeric("Gauss-Newton matrix has non-finite entries".into()));
    }
    Ok(GnMatrix {
        matrix,
        family: GnFamily::ParameterForm,
        includes_inv_n: true,
    })
}

/// The analytic builder matching `spec`, fed from the data `x`. Batch-norm
/// nets have no closed form and fall back to finite differences.
pub fn gn_for(spec: &NetworkSpec, params: &Params, x: &DenseMatrix) -> Result<GnMatrix> {
    params.check(spec)?;
    match spec.kind {
        NetworkKind::LinearDeep => gn_linear(params, &covariance_of(x)?),
        NetworkKind::Residual { beta } => gn_residual(params, beta, &covariance_of(x)?),
        NetworkKind::LeakyOneHidden { alpha } => {
            Ok(gn_leaky(&params.layers[1], &params.layers[0], x, alpha)?.0)
        }
        NetworkKind::LinearConv => gn_conv(&lift_conv(spec, params)?, &covariance_of(x)?),
        NetworkKind::LinearBnOneHidden => {
            gn_from_jacobian(spec, params, x, JacobianMode::FiniteDifference)
        }
    }
}

/// `Ω = (WV - Z) Σ`.
pub fn residual_covariance(
    w: &DenseMatrix,
    v: &DenseMatrix,
    sigma: &DenseMatrix,
    teacher: &TeacherSpec,
) -> Result<DenseMatrix> {
    let wv = w.matmul(v)?;
    wv.sub(&teacher.z)?.matmul(sigma)
}

/// Spectrum of the functional Hessian of `x ↦ W V x` under the teacher
/// `Z`, together with the assembled `[[0, Ω⊗I_m], [Ωᵀ⊗I_m, 0]]`. The first
/// block indexes `W` row-major, the second indexes `V` column-major.
pub fn functional_hessian_spectrum(
    w: &DenseMatrix,
    v: &DenseMatrix,
    sigma: &DenseMatrix,
    teacher: &TeacherSpec,
) -> Result<(Spectrum, DenseMatrix)> {
    let (k, m) = w.shape();
    let d = v.cols();
    if v.rows() != m || sigma.shape() != (d, d) || teacher.z.shape() != (k, d) {
        return Err(Error::Dimension(format!(
            "W {k}x{m}, V {}x{d}, Σ {}x{}, Z {}x{} do not fit together",
            v.rows(),
            sigma.rows(),
            sigma.cols(),
            teacher.z.rows(),
            teacher.z.cols()
        )));
    }
    let omega = residual_covariance(w, v, sigma, teacher)?;
    let size = (k + d) * m;
    check_cap(size)?;
    let mut h = DenseMatrix::zeros(size, size);
    for c in 0..k {
        for b in 0..d {
            let o = omega[(c, b)];
            for i in 0..m {
                h[(c * m + i, k * m + b * m + i)] = o;
                h[(k * m + b * m + i, c * m + i)] = o;
            }
        }
    }
    let sv = singular_values(&omega)?;
    let mut values = Vec::with_capacity(size);
    for &s in sv.values() {
        for _ in 0..m {
            values.push(s);
            values.push(-s);
        }
    }
    values.resize(size, 0.0);
    let spectrum = Spectrum::with_policy(values, RankPolicy::default_for(size, size))?;
    Ok((spectrum, h))
}
