//! Analytic upper bounds on the condition number of the Gauss-Newton matrix.
//!
//! Every bound returns a [`BoundReport`] carrying the terms it was built
//! from. Weight-matrix extremes use the full analytic minimum singular value
//! (index `min(rows, cols)`); κ(Σ) uses the default rank policy.

use std::fmt;

use crate::error::{Error, Result};
use crate::gauss_newton::residual_covariance;
use crate::network::{prefix_suffix_products, Params, TeacherSpec};
use crate::spectral::{
    analytic_condition, eigenvalues, pseudo_condition_number, singular_values, DenseMatrix,
    RankPolicy, Spectrum,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    OneHidden,
    DeepConvex,
    DeepMax,
    ResidualConvex,
    ResidualMax,
    Leaky,
    GaussianNonAsymptotic,
    GaussianAsymptotic,
    FunctionalHessian,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BoundKind::OneHidden => "one_hidden",
            BoundKind::DeepConvex => "deep_convex",
            BoundKind::DeepMax => "deep_max",
            BoundKind::ResidualConvex => "residual_convex",
            BoundKind::ResidualMax => "residual_max",
            BoundKind::Leaky => "leaky",
            BoundKind::GaussianNonAsymptotic => "gaussian_nonasymptotic",
            BoundKind::GaussianAsymptotic => "gaussian_asymptotic",
            BoundKind::FunctionalHessian => "functional_hessian",
        };
        f.write_str(name)
    }
}

/// Per-layer ingredients of the convex-combination and max bounds.
/// "prefix" is `W^{l-1:1}`, "suffix" is `W^{L:l+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTerm {
    /// 1-based layer index.
    pub layer: usize,
    pub kappa_sq_prefix: f64,
    pub kappa_sq_suffix: f64,
    pub sigma_min_sq_prefix: f64,
    pub sigma_min_sq_suffix: f64,
    /// `σ²_min(suffix) · σ²_min(prefix)`.
    pub alpha: f64,
    pub gamma: f64,
    /// `γ · κ²(suffix) · κ²(prefix)`.
    pub weighted: f64,
}

impl LayerTerm {
    /// `κ²(suffix) · κ²(prefix)`.
    pub fn product(&self) -> f64 {
        self.kappa_sq_prefix * self.kappa_sq_suffix
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assumptions {
    /// Every hidden width exceeds `max(d, k)`.
    pub wide: bool,
    /// All `α_l > 0`.
    pub alphas_positive: bool,
    /// The formula is not vacuous (Gaussian bounds).
    pub nonvacuous: bool,
}

impl Assumptions {
    pub fn all_met(&self) -> bool {
        self.wide && self.alphas_positive && self.nonvacuous
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub value: f64,
    pub kind: BoundKind,
    pub terms: Vec<LayerTerm>,
    pub kappa_sigma: f64,
    pub assumptions: Assumptions,
    /// Layer attaining the maximum in the max bound.
    pub argmax_layer: Option<usize>,
    /// Named scalar ingredients (extremes, `β_w`, ...).
    pub scalars: Vec<(&'static str, f64)>,
    /// Probability the bound holds, for probabilistic bounds.
    pub confidence: Option<f64>,
}

impl BoundReport {
    fn new(value: f64, kind: BoundKind, kappa_sigma: f64) -> Self {
        Self {
            value,
            kind,
            terms: Vec::new(),
            kappa_sigma,
            assumptions: Assumptions {
                wide: true,
                alphas_positive: true,
                nonvacuous: true,
            },
            argmax_layer: None,
            scalars: Vec::new(),
            confidence: None,
        }
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

/// κ(Σ) under the default rank policy.
pub fn kappa_sigma(sigma: &DenseMatrix) -> Result<f64> {
    let spec = eigenvalues(sigma)?;
    pseudo_condition_number(&spec, RankPolicy::default_for(sigma.rows(), sigma.cols()))
}

fn hidden_wide(dims: &[usize]) -> bool {
    let (d, k) = (dims[0], *dims.last().expect("non-empty"));
    dims[1..dims.len() - 1].iter().all(|&m| m > d.max(k))
}

fn layer_terms(params: &Params, beta: f64) -> Result<Vec<LayerTerm>> {
    let products = prefix_suffix_products(params, beta)?;
    let mut terms = Vec::with_capacity(products.len());
    for (i, (prefix, suffix)) in products.iter().enumerate() {
        let (kp, _, sp) = analytic_condition(prefix)?;
        let (ks, _, ss) = analytic_condition(suffix)?;
        terms.push(LayerTerm {
            layer: i + 1,
            kappa_sq_prefix: kp * kp,
            kappa_sq_suffix: ks * ks,
            sigma_min_sq_prefix: sp * sp,
            sigma_min_sq_suffix: ss * ss,
            alpha: sp * sp * ss * ss,
            gamma: 0.0,
            weighted: 0.0,
        });
    }
    let total: f64 = terms.iter().map(|t| t.alpha).sum();
    if terms.iter().any(|t| !(t.alpha > 0.0)) || !total.is_finite() {
        let bad: Vec<usize> = terms.iter().filter(|t| !(t.alpha > 0.0)).map(|t| t.layer).collect();
        return Err(Error::Assumption(format!(
            "α_l vanishes for layers {bad:?}; the bound is undefined"
        )));
    }
    for t in &mut terms {
        t.gamma = t.alpha / total;
        t.weighted = t.gamma * t.product();
    }
    Ok(terms)
}

fn dims_of(params: &Params) -> Vec<usize> {
    let mut dims = vec![params.layers[0].cols()];
    dims.extend(params.layers.iter().map(DenseMatrix::rows));
    dims
}

fn deep_pair(params: &Params, beta: f64, sigma: &DenseMatrix, residual: bool) -> Result<(BoundReport, BoundReport)> {
    if params.depth() == 0 {
        return Err(Error::Dimension("network has no layers".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::Validation(format!("residual scale {beta} must be >= 0")));
    }
    let ks = kappa_sigma(sigma)?;
    let terms = layer_terms(params, beta)?;
    let wide = hidden_wide(&dims_of(params));
    let (ck, mk) = if residual {
        (BoundKind::ResidualConvex, BoundKind::ResidualMax)
    } else {
        (BoundKind::DeepConvex, BoundKind::DeepMax)
    };
    let convex_sum: f64 = terms.iter().map(|t| t.weighted).sum();
    let (argmax, max_term) = terms
        .iter()
        .map(|t| (t.layer, t.product()))
        .fold((1, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });

    let mut convex = BoundReport::new(ks * convex_sum, ck, ks);
    convex.terms = terms.clone();
    convex.assumptions.wide = wide;
    let mut max = BoundReport::new(ks * max_term, mk, ks);
    max.terms = terms;
    max.assumptions.wide = wide;
    max.argmax_layer = Some(argmax);
    if residual {
        convex.scalars.push(("beta", beta));
        max.scalars.push(("beta", beta));
    }
    Ok((convex, max))
}

/// `κ(Σ) Σ_l γ_l κ²(W^{L:l+1}) κ²(W^{l-1:1})` with `γ_l ∝ α_l`.
pub fn bound_deep_convex(params: &Params, sigma: &DenseMatrix) -> Result<BoundReport> {
    Ok(deep_pair(params, 0.0, sigma, false)?.0)
}

/// `κ(Σ) max_l κ²(W^{L:l+1}) κ²(W^{l-1:1})`.
pub fn bound_deep_max(params: &Params, sigma: &DenseMatrix) -> Result<BoundReport> {
    Ok(deep_pair(params, 0.0, sigma, false)?.1)
}

/// Convex bound with every product taken over `W + βI`.
pub fn bound_residual_convex(params: &Params, beta: f64, sigma: &DenseMatrix) -> Result<BoundReport> {
    Ok(deep_pair(params, beta, sigma, true)?.0)
}

pub fn bound_residual_max(params: &Params, beta: f64, sigma: &DenseMatrix) -> Result<BoundReport> {
    Ok(deep_pair(params, beta, sigma, true)?.1)
}

/// Convex and max bounds together, sharing the per-layer work.
pub fn bound_pair(params: &Params, beta: f64, sigma: &DenseMatrix) -> Result<(BoundReport, BoundReport)> {
    deep_pair(params, beta, sigma, beta != 0.0)
}

/// Per-layer table behind the convex bound; the weighted terms times κ(Σ)
/// sum to its value.
pub fn self_balancing_report(params: &Params, sigma: &DenseMatrix) -> Result<Vec<LayerTerm>> {
    Ok(bound_deep_convex(params, sigma)?.terms)
}

/// `κ(Σ) (σ²_max(W) + σ²_max(V)) / (σ²_min(W) + σ²_min(V))` for `x ↦ W V x`.
pub fn bound_one_hidden(w: &DenseMatrix, v: &DenseMatrix, sigma: &DenseMatrix) -> Result<BoundReport> {
    if w.cols() != v.rows() || v.cols() != sigma.rows() {
        return Err(Error::Dimension(format!(
            "W {}x{}, V {}x{}, Σ {}x{} do not chain",
            w.rows(),
            w.cols(),
            v.rows(),
            v.cols(),
            sigma.rows(),
            sigma.cols()
        )));
    }
    let ks = kappa_sigma(sigma)?;
    let (kw, wmax, wmin) = analytic_condition(w)?;
    let (kv, vmax, vmin) = analytic_condition(v)?;
    let denom = wmin * wmin + vmin * vmin;
    if !(denom > 0.0) {
        return Err(Error::Degenerate("σ_min(W) and σ_min(V) are both zero".into()));
    }
    let beta_w = wmin * wmin / denom;
    let value = ks * (wmax * wmax + vmax * vmax) / denom;
    let mut r = BoundReport::new(value, BoundKind::OneHidden, ks);
    r.assumptions.wide = w.cols() > w.rows().max(v.cols());
    r.scalars = vec![
        ("beta_w", beta_w),
        ("sigma_max_w", wmax),
        ("sigma_min_w", wmin),
        ("sigma_max_v", vmax),
        ("sigma_min_v", vmin),
        ("kappa_w", kw),
        ("kappa_v", kv),
    ];
    Ok(r)
}

/// `Π_{i≠l} ((σ_max(W^i) + β) / (σ_min(W^i) + β))²`, `l` 1-based.
pub fn residual_product_bound(spectra: &[Spectrum], beta: f64, layer: usize) -> Result<f64> {
    if layer == 0 || layer > spectra.len() {
        return Err(Error::Index(format!(
            "layer {layer} outside 1..={}",
            spectra.len()
        )));
    }
    Ok(spectra
        .iter()
        .enumerate()
        .filter(|&(i, _)| i + 1 != layer)
        .map(|(_, s)| {
            let r = (s.max() + beta) / (s.min() + beta);
            r * r
        })
        .product())
}

/// Upper bound for `W σ(V x)` with Leaky-ReLU slope `α`:
/// `(σ²_max(X) σ²_max(W) + λ_max(Γ)) / (α² σ²_min(X) σ²_min(W) + λ_min(Γ))`,
/// where `σ²_min(X) = λ_min(XᵀX)` and `σ²_min(W) = λ_min(WWᵀ)`.
pub fn bound_leaky(
    w: &DenseMatrix,
    v: &DenseMatrix,
    x: &DenseMatrix,
    alpha: f64,
    gamma: &DenseMatrix,
) -> Result<BoundReport> {
    let n = x.cols();
    if w.cols() != v.rows() || v.cols() != x.rows() || gamma.shape() != (n, n) {
        return Err(Error::Dimension("W, V, X and Γ do not fit together".into()));
    }
    let xtx = eigenvalues(&x.gram())?;
    let wwt = eigenvalues(&w.outer_gram())?;
    let g = eigenvalues(gamma)?;
    let (x_max, x_min) = (xtx.max().max(0.0), xtx.min().max(0.0));
    let (w_max, w_min) = (wwt.max().max(0.0), wwt.min().max(0.0));
    let (g_max, g_min) = (g.max().max(0.0), g.min().max(0.0));
    let num = x_max * w_max + g_max;
    let denom = alpha * alpha * x_min * w_min + g_min;
    if !(denom > 1e-14 * num) {
        return Err(Error::Degenerate(format!(
            "denominator {denom:e} vanishes against numerator {num:e}"
        )));
    }
    let mut r = BoundReport::new(num / denom, BoundKind::Leaky, f64::NAN);
    r.assumptions.wide = w.cols() > w.rows().max(x.rows());
    r.scalars = vec![
        ("sigma_max_sq_x", x_max),
        ("sigma_min_sq_x", x_min),
        ("sigma_max_sq_w", w_max),
        ("sigma_min_sq_w", w_min),
        ("lambda_max_gamma", g_max),
        ("lambda_min_gamma", g_min),
        ("alpha", alpha),
    ];
    Ok(r)
}

fn check_gaussian_inputs(m: usize, d: usize, k: usize, sw2: f64, sv2: f64, ks: f64) -> Result<()> {
    if m == 0 || d == 0 || k == 0 {
        return Err(Error::Validation("dimensions must be positive".into()));
    }
    if !(sw2 > 0.0) || !(sv2 > 0.0) || !(ks >= 1.0) {
        return Err(Error::Validation(format!(
            "need σ_w², σ_v² > 0 and κ_Σ >= 1, got {sw2}, {sv2}, {ks}"
        )));
    }
    Ok(())
}

/// High-probability bound for Gaussian `W` (`k x m`, variance `σ_w²`) and
/// `V` (`m x d`, variance `σ_v²`), holding with probability at least
/// `1 - 8 exp(-t²/2)`. When `√m - √d - t` or `√m - √k - t` is not positive
/// the result is flagged vacuous with an infinite value.
pub fn bound_gaussian_nonasymptotic(
    m: usize,
    d: usize,
    k: usize,
    sigma_w2: f64,
    sigma_v2: f64,
    t: f64,
    kappa_sigma: f64,
) -> Result<BoundReport> {
    check_gaussian_inputs(m, d, k, sigma_w2, sigma_v2, kappa_sigma)?;
    if !(t >= 0.0) {
        return Err(Error::Validation(format!("deviation t = {t} must be >= 0")));
    }
    let (sm, sd, sk) = ((m as f64).sqrt(), (d as f64).sqrt(), (k as f64).sqrt());
    let (lo_w, lo_v) = (sm - sk - t, sm - sd - t);
    let confidence = (1.0 - 8.0 * (-t * t / 2.0).exp()).max(0.0);
    let nonvacuous = lo_w > 0.0 && lo_v > 0.0;
    let value = if nonvacuous {
        let num = sigma_w2 * (sm + sk + t).powi(2) + sigma_v2 * (sm + sd + t).powi(2);
        let den = sigma_w2 * lo_w.powi(2) + sigma_v2 * lo_v.powi(2);
        kappa_sigma * num / den
    } else {
        f64::INFINITY
    };
    let mut r = BoundReport::new(value, BoundKind::GaussianNonAsymptotic, kappa_sigma);
    r.assumptions.wide = m >= d.max(k);
    r.assumptions.nonvacuous = nonvacuous;
    r.confidence = Some(confidence);
    r.scalars = vec![("t", t)];
    Ok(r)
}

/// Large-width limit of the Gaussian bound, with aspect ratios `d/m`, `k/m`.
pub fn bound_gaussian_asymptotic(
    m: usize,
    d: usize,
    k: usize,
    sigma_w2: f64,
    sigma_v2: f64,
    kappa_sigma: f64,
) -> Result<f64> {
    check_gaussian_inputs(m, d, k, sigma_w2, sigma_v2, kappa_sigma)?;
    if m <= d.max(k) {
        return Err(Error::Domain(format!("width {m} must exceed max(d, k) = {}", d.max(k))));
    }
    let (rk, rd) = ((k as f64 / m as f64).sqrt(), (d as f64 / m as f64).sqrt());
    let num = sigma_w2 * (1.0 + rk).powi(2) + sigma_v2 * (1.0 + rd).powi(2);
    let den = sigma_w2 * (1.0 - rk).powi(2) + sigma_v2 * (1.0 - rd).powi(2);
    Ok(kappa_sigma * num / den)
}

/// `κ(WV - Z) · κ(Σ)`, bounding the pseudo-condition number of the
/// functional Hessian.
pub fn bound_functional_hessian(
    w: &DenseMatrix,
    v: &DenseMatrix,
    teacher: &TeacherSpec,
    sigma: &DenseMatrix,
) -> Result<BoundReport> {
    let identity = DenseMatrix::identity(sigma.rows());
    let residual = residual_covariance(w, v, &identity, teacher)?;
    let sv = singular_values(&residual)?;
    if sv.numerical_rank() == 0 {
        return Err(Error::Degenerate("WV equals the teacher; κ(H_F) is undefined".into()));
    }
    let kr = pseudo_condition_number(&sv, RankPolicy::default_for(residual.rows(), residual.cols()))?;
    let ks = kappa_sigma(sigma)?;
    let mut r = BoundReport::new(kr * ks, BoundKind::FunctionalHessian, ks);
    r.scalars = vec![("kappa_residual", kr)];
    Ok(r)
}

/// Pseudo-condition number of a sign-symmetric spectrum, taken over the
/// magnitudes of its nonzero values.
pub fn magnitude_kappa(spec: &Spectrum) -> Result<f64> {
    let mags = spec.magnitudes()?;
    let n = mags.len();
    pseudo_condition_number(&mags, RankPolicy::default_for(n, n))
}
