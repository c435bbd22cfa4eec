//! Architectures, parameters, initializers, forward passes, Toeplitz lifting
//! of 1-D convolutions and magnitude pruning.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::random::{gaussian_matrix, random_orthogonal, rng_from_seed, SeededRng};
use crate::spectral::DenseMatrix;

/// Variance offset used by the batch-norm forward pass.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NetworkKind {
    LinearDeep,
    /// Every layer is `W + βI` with a rectangular top-left identity.
    Residual { beta: f64 },
    /// `W σ(V x)` with `σ(z) = max(αz, z)`.
    LeakyOneHidden { alpha: f64 },
    /// Chain of stride-1 valid 1-D convolutions.
    LinearConv,
    /// `W · bn(V x)`, normalising each hidden unit across the batch.
    LinearBnOneHidden,
}

/// One convolutional layer: `out_channels x in_channels` filters of width
/// `kernel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    /// Layer widths `[d, a_1, ..., k]`. For convolutional nets these are the
    /// spatial lengths `d_l`; channel counts live in `conv_layers`.
    pub dims: Vec<usize>,
    pub conv_layers: Option<Vec<ConvLayer>>,
}

impl NetworkSpec {
    pub fn linear(dims: Vec<usize>) -> Result<Self> {
        Self::checked(NetworkKind::LinearDeep, dims, None)
    }

    pub fn residual(dims: Vec<usize>, beta: f64) -> Result<Self> {
        Self::checked(NetworkKind::Residual { beta }, dims, None)
    }

    pub fn leaky(d: usize, m: usize, k: usize, alpha: f64) -> Result<Self> {
        Self::checked(NetworkKind::LeakyOneHidden { alpha }, vec![d, m, k], None)
    }

    pub fn batch_norm(d: usize, m: usize, k: usize) -> Result<Self> {
        Self::checked(NetworkKind::LinearBnOneHidden, vec![d, m, k], None)
    }

    /// Convolutional chain over inputs of spatial length `d0`.
    pub fn conv(d0: usize, layers: Vec<ConvLayer>) -> Result<Self> {
        let mut dims = vec![d0];
        for l in &layers {
            let prev = *dims.last().expect("non-empty");
            if l.kernel == 0 || l.kernel > prev {
                return Err(Error::Spec(format!(
                    "kernel {} does not fit spatial length {prev}",
                    l.kernel
                )));
            }
            dims.push(prev - l.kernel + 1);
        }
        Self::checked(NetworkKind::LinearConv, dims, Some(layers))
    }

    fn checked(kind: NetworkKind, dims: Vec<usize>, conv_layers: Option<Vec<ConvLayer>>) -> Result<Self> {
        let spec = Self {
            kind,
            dims,
            conv_layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::Spec(format!(
                "need at least two positive widths, got {:?}",
                self.dims
            )));
        }
        match self.kind {
            NetworkKind::Residual { beta } if !(beta >= 0.0) || !beta.is_finite() => {
                return Err(Error::Spec(format!("residual scale {beta} must be >= 0")))
            }
            NetworkKind::LeakyOneHidden { alpha } if !(0.0..=1.0).contains(&alpha) => {
                return Err(Error::Spec(format!("leaky slope {alpha} must lie in [0, 1]")))
            }
            NetworkKind::LeakyOneHidden { .. } | NetworkKind::LinearBnOneHidden
                if self.dims.len() != 3 =>
            {
                return Err(Error::Spec("one-hidden-layer nets need exactly [d, m, k]".into()))
            }
            NetworkKind::LinearConv => {
                let layers = self
                    .conv_layers
                    .as_ref()
                    .ok_or_else(|| Error::Spec("convolutional net without conv layers".into()))?;
                if layers.len() + 1 != self.dims.len() {
                    return Err(Error::Spec("conv layer count does not match dims".into()));
                }
                for (i, l) in layers.iter().enumerate() {
                    if l.out_channels == 0 || l.in_channels == 0 {
                        return Err(Error::Spec(format!("conv layer {} has no channels", i + 1)));
                    }
                    if i > 0 && layers[i - 1].out_channels != l.in_channels {
                        return Err(Error::Spec(format!(
                            "conv layer {} expects {} channels but receives {}",
                            i + 1,
                            l.in_channels,
                            layers[i - 1].out_channels
                        )));
                    }
                    if self.dims[i + 1] + l.kernel != self.dims[i] + 1 {
                        return Err(Error::Spec(format!(
                            "conv layer {} maps length {} to {}, kernel {}",
                            i + 1,
                            self.dims[i],
                            self.dims[i + 1],
                            l.kernel
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    /// Flattened input dimension (`channels · length` for conv nets).
    pub fn input_dim(&self) -> usize {
        self.lifted_width(0)
    }

    pub fn output_dim(&self) -> usize {
        self.lifted_width(self.depth())
    }

    /// Flattened width after layer `l` (0 is the input).
    pub fn lifted_width(&self, l: usize) -> usize {
        match &self.conv_layers {
            Some(layers) if self.kind == NetworkKind::LinearConv => {
                let channels = if l == 0 {
                    layers[0].in_channels
                } else {
                    layers[l - 1].out_channels
                };
                channels * self.dims[l]
            }
            _ => self.dims[l],
        }
    }

    /// Stored shape of each parameter matrix. Conv layers keep their filters
    /// as an `(out·in) x kernel` matrix, row `o·in + i`.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match (&self.kind, &self.conv_layers) {
            (NetworkKind::LinearConv, Some(layers)) => layers
                .iter()
                .map(|l| (l.out_channels * l.in_channels, l.kernel))
                .collect(),
            _ => self.dims.windows(2).map(|w| (w[1], w[0])).collect(),
        }
    }

    /// `β` for residual nets, 0 otherwise.
    pub fn beta(&self) -> f64 {
        match self.kind {
            NetworkKind::Residual { beta } => beta,
            _ => 0.0,
        }
    }

    fn fans(&self, l: usize) -> (usize, usize) {
        match (&self.kind, &self.conv_layers) {
            (NetworkKind::LinearConv, Some(layers)) => {
                let c = layers[l];
                (c.in_channels * c.kernel, c.out_channels * c.kernel)
            }
            _ => (self.dims[l], self.dims[l + 1]),
        }
    }
}

/// Teacher map `y = Z x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSpec {
    pub z: DenseMatrix,
}

impl TeacherSpec {
    pub fn new(z: DenseMatrix, d: usize, k: usize) -> Result<Self> {
        if z.shape() != (k, d) {
            return Err(Error::Dimension(format!(
                "teacher is {}x{}, expected {k}x{d}",
                z.rows(),
                z.cols()
            )));
        }
        Ok(Self { z })
    }

    pub fn targets(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.z.matmul(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<DenseMatrix>,
    /// 1 keeps a weight, 0 pins it at zero.
    pub masks: Option<Vec<DenseMatrix>>,
}

impl Params {
    pub fn new(layers: Vec<DenseMatrix>) -> Self {
        Self { layers, masks: None }
    }

    /// Checks layer (and mask) shapes against `spec`.
    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::Dimension(format!(
                "{} layers for a depth-{} network",
                self.layers.len(),
                shapes.len()
            )));
        }
        for (i, (layer, shape)) in self.layers.iter().zip(&shapes).enumerate() {
            if layer.shape() != *shape {
                return Err(Error::Dimension(format!(
                    "layer {} is {}x{}, expected {}x{}",
                    i + 1,
                    layer.rows(),
                    layer.cols(),
                    shape.0,
                    shape.1
                )));
            }
        }
        if let Some(masks) = &self.masks {
            if masks.len() != self.layers.len()
                || masks.iter().zip(&self.layers).any(|(m, l)| m.shape() != l.shape())
            {
                return Err(Error::Dimension("masks do not match layer shapes".into()));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Number of scalar parameters.
    pub fn count(&self) -> usize {
        self.layers.iter().map(|l| l.rows() * l.cols()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.as_slice().iter().copied()).collect()
    }

    /// Inverse of [`Params::flatten`] using this value's shapes.
    pub fn with_flat(&self, theta: &[f64]) -> Self {
        let mut offset = 0;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let len = l.rows() * l.cols();
                let mut out = l.clone();
                out.as_mut_slice().copy_from_slice(&theta[offset..offset + len]);
                offset += len;
                out
            })
            .collect();
        Self {
            layers,
            masks: self.masks.clone(),
        }
    }

    /// Zeroes every masked entry.
    pub fn apply_masks(&mut self) {
        if let Some(masks) = &self.masks {
            for (layer, mask) in self.layers.iter_mut().zip(masks) {
                for (w, &m) in layer.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    if m == 0.0 {
                        *w = 0.0;
                    }
                }
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            layers: self.layers.iter().map(|l| l.scale(c)).collect(),
            masks: self.masks.clone(),
        }
    }

    /// Text form: `layers=L`, then per layer a `rows cols` line followed by
    /// one line of doubles per row.
    pub fn to_text(&self) -> String {
        let mut out = format!("layers={}\n", self.layers.len());
        for l in &self.layers {
            let _ = writeln!(out, "{} {}", l.rows(), l.cols());
            for i in 0..l.rows() {
                let row: Vec<String> = l.row(i).iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::format(None, format!("unexpected end of input, wanted {what}")))
        };
        let (row, header) = next("header")?;
        let count: usize = header
            .trim()
            .strip_prefix("layers=")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::format(Some(row), "expected `layers=L`"))?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (row, dims) = next("layer shape")?;
            let dims: Vec<usize> = dims
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::format(Some(row), "bad layer shape")))
                .collect::<Result<_>>()?;
            let [r, c] = dims[..] else {
                return Err(Error::format(Some(row), "layer shape needs `rows cols`"));
            };
            let mut data = Vec::with_capacity(r * c);
            for _ in 0..r {
                let (row, line) = next("weights")?;
                let values: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| Error::format(Some(row), format!("bad number `{t}`"))))
                    .collect::<Result<_>>()?;
                if values.len() != c {
                    return Err(Error::format(Some(row), format!("{} values, expected {c}", values.len())));
                }
                data.extend(values);
            }
            layers.push(DenseMatrix::new(r, c, data)?);
        }
        Ok(Self::new(layers))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitScheme {
    /// Variance `1 / fan_in`.
    KaimingNormal,
    /// Variance `2 / (fan_in + fan_out)`.
    XavierNormal,
    /// Standard deviation per layer; a single value applies to all layers.
    Gaussian(Vec<f64>),
}

/// I.i.d. Gaussian initialization, layers drawn in order from one seeded
/// stream.
pub fn init(spec: &NetworkSpec, scheme: &InitScheme, seed: u64) -> Result<Params> {
    spec.validate()?;
    let shapes = spec.layer_shapes();
    if let InitScheme::Gaussian(s) = scheme {
        if s.len() != 1 && s.len() != shapes.len() {
            return Err(Error::Spec(format!(
                "{} standard deviations for {} layers",
                s.len(),
                shapes.len()
            )));
        }
        if s.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Spec("standard deviations must be >= 0".into()));
        }
    }
    let mut rng = rng_from_seed(seed);
    let layers = shapes
        .iter()
        .enumerate()
        .map(|(l, &(r, c))| {
            let (fan_in, fan_out) = spec.fans(l);
            let sigma = match scheme {
                InitScheme::KaimingNormal => (1.0 / fan_in as f64).sqrt(),
                InitScheme::XavierNormal => (2.0 / (fan_in + fan_out) as f64).sqrt(),
                InitScheme::Gaussian(s) => s[if s.len() == 1 { 0 } else { l }],
            };
            gaussian_matrix(r, c, sigma, &mut rng)
        })
        .collect();
    Ok(Params::new(layers))
}

/// Distribution of the singular values used by [`init_aligned_svd`].
#[derive(Debug, Clone, PartialEq)]
pub enum SingularValueLaw {
    /// `|N(0, σ²)|`.
    AbsGaussian(f64),
    /// Uniform on `[low, high]`.
    Uniform { low: f64, high: f64 },
    /// Given values per layer; a single list applies to every layer.
    Explicit(Vec<Vec<f64>>),
}

fn orthogonal_blocks(sizes: &[usize], rng: &mut SeededRng) -> DenseMatrix {
    let n: usize = sizes.iter().sum();
    let mut q = DenseMatrix::zeros(n, n);
    let mut at = 0;
    for &s in sizes {
        let block = random_orthogonal(s, rng);
        for i in 0..s {
            for j in 0..s {
                q[(at + i, at + j)] = block[(i, j)];
            }
        }
        at += s;
    }
    q
}

/// Layers `W_l = Q_{a_l} diag(s_l) Q_{a_{l-1}}ᵀ` sharing one orthogonal
/// basis, so consecutive layers have coinciding singular bases and
/// `σ(W_l + βI) = s_l + β` exactly.
///
/// All hidden widths must equal some `M >= max(d, k)`.
pub fn init_aligned_svd(spec: &NetworkSpec, law: &SingularValueLaw, seed: u64) -> Result<Params> {
    spec.validate()?;
    if matches!(spec.kind, NetworkKind::LinearConv) {
        return Err(Error::Spec("aligned init applies to dense layers only".into()));
    }
    let dims = &spec.dims;
    let (d, k) = (dims[0], *dims.last().expect("non-empty"));
    let hidden = &dims[1..dims.len() - 1];
    let big = hidden.first().copied().unwrap_or(d.max(k));
    if hidden.iter().any(|&m| m != big) || big < d.max(k) {
        return Err(Error::Spec(format!(
            "aligned init needs equal hidden widths >= max(d, k), got {dims:?}"
        )));
    }
    let depth = spec.depth();
    if let SingularValueLaw::Explicit(lists) = law {
        if lists.len() != 1 && lists.len() != depth {
            return Err(Error::Spec(format!("{} value lists for {depth} layers", lists.len())));
        }
    }
    let mut rng = rng_from_seed(seed);
    let (lo, hi) = (d.min(k), d.max(k));
    let q = orthogonal_blocks(&[lo, hi - lo, big - hi], &mut rng);
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let (rows, cols) = (dims[l + 1], dims[l]);
        let r = rows.min(cols);
        let mut s: Vec<f64> = match law {
            SingularValueLaw::AbsGaussian(sigma) => (0..r)
                .map(|_| (sigma * rng.sample::<f64, _>(rand_distr::StandardNormal)).abs())
                .collect(),
            SingularValueLaw::Uniform { low, high } => {
                if !(0.0 <= *low && low <= high) {
                    return Err(Error::Spec(format!("bad uniform range [{low}, {high}]")));
                }
                (0..r).map(|_| rng.random_range(*low..=*high)).collect()
            }
            SingularValueLaw::Explicit(lists) => {
                let list = &lists[if lists.len() == 1 { 0 } else { l }];
                if list.len() != r {
                    return Err(Error::Spec(format!(
                        "layer {} needs {r} singular values, got {}",
                        l + 1,
                        list.len()
                    )));
                }
                if list.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::Spec("singular values must be >= 0".into()));
                }
                list.clone()
            }
        };
        s.sort_by(|a, b| b.total_cmp(a));
        let left = q.top_left(rows, rows);
        let right = q.top_left(cols, cols);
        let core = DenseMatrix::rect_diag(rows, cols, &s);
        layers.push(&(&left * &core) * &right.transpose());
    }
    Ok(Params::new(layers))
}

/// `W + βI` with a rectangular top-left identity.
pub fn shifted(w: &DenseMatrix, beta: f64) -> DenseMatrix {
    if beta == 0.0 {
        return w.clone();
    }
    let mut out = w.clone();
    for i in 0..w.rows().min(w.cols()) {
        out[(i, i)] += beta;
    }
    out
}

/// `(W^from + βI) ⋯ (W^to + βI)` with 1-based layer indices. The empty range
/// `from = to - 1` yields the identity of size `a_from`.
pub fn partial_product(params: &Params, from: usize, to: usize, beta: f64) -> Result<DenseMatrix> {
    let depth = params.depth();
    if to == 0 || to > depth + 1 || from > depth || from + 1 < to {
        return Err(Error::Index(format!(
            "layer range {from}..{to} is invalid for depth {depth}"
        )));
    }
    if from + 1 == to {
        let size = if from == 0 {
            params.layers[0].cols()
        } else {
            params.layers[from - 1].rows()
        };
        return Ok(DenseMatrix::identity(size));
    }
    let mut acc = shifted(&params.layers[from - 1], beta);
    for l in (to..from).rev() {
        acc = acc.matmul(&shifted(&params.layers[l - 1], beta))?;
    }
    Ok(acc)
}

/// For every layer `l` (ascending), the prefix `W^{l-1:1}` and the suffix
/// `W^{L:l+1}` over `W + βI`, built cumulatively.
pub fn prefix_suffix_products(params: &Params, beta: f64) -> Result<Vec<(DenseMatrix, DenseMatrix)>> {
    let depth = params.depth();
    if depth == 0 {
        return Err(Error::Dimension("network has no layers".into()));
    }
    let factors: Vec<DenseMatrix> = params.layers.iter().map(|w| shifted(w, beta)).collect();
    let mut prefixes = Vec::with_capacity(depth);
    prefixes.push(DenseMatrix::identity(factors[0].cols()));
    for l in 1..depth {
        let next = factors[l - 1].matmul(&prefixes[l - 1])?;
        prefixes.push(next);
    }
    let mut suffixes = vec![DenseMatrix::identity(factors[depth - 1].rows())];
    for l in (1..depth).rev() {
        let next = suffixes.last().expect("non-empty").matmul(&factors[l])?;
        suffixes.push(next);
    }
    suffixes.reverse();
    Ok(prefixes.into_iter().zip(suffixes).collect())
}

/// Leaky-ReLU `max(αz, z)` for `α <= 1`.
pub fn leaky(z: f64, alpha: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        alpha * z
    }
}

/// Normalises each row across columns to zero mean and unit variance.
pub fn batch_normalize(h: &DenseMatrix) -> DenseMatrix {
    let n = h.cols() as f64;
    let mut out = h.clone();
    for i in 0..h.rows() {
        let row = h.row(i);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + BN_EPS).sqrt();
        for j in 0..h.cols() {
            out[(i, j)] = (row[j] - mean) * inv;
        }
    }
    out
}

/// Stride-1 valid correlation of each channel stack with its filters.
/// `x` is `(in · len) x n`, channel-major.
fn conv_direct(layer: &ConvLayer, fibres: &DenseMatrix, len: usize, x: &DenseMatrix) -> DenseMatrix {
    let out_len = len - layer.kernel + 1;
    let mut out = DenseMatrix::zeros(layer.out_channels * out_len, x.cols());
    for o in 0..layer.out_channels {
        for i in 0..layer.in_channels {
            let w = fibres.row(o * layer.in_channels + i);
            for t in 0..out_len {
                for (s, &ws) in w.iter().enumerate() {
                    if ws == 0.0 {
                        continue;
                    }
                    let src = i * len + t + s;
                    for c in 0..x.cols() {
                        out[(o * out_len + t, c)] += ws * x[(src, c)];
                    }
                }
            }
        }
    }
    out
}

/// Network outputs for the columns of `x`, as a `k x n` matrix.
pub fn forward(spec: &NetworkSpec, params: &Params, x: &DenseMatrix) -> Result<DenseMatrix> {
    params.check(spec)?;
    if x.rows() != spec.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} rows, network expects {}",
            x.rows(),
            spec.input_dim()
        )));
    }
    match spec.kind {
        NetworkKind::LinearDeep | NetworkKind::Residual { .. } => {
            let beta = spec.beta();
            let mut h = x.clone();
            for w in &params.layers {
                h = shifted(w, beta).matmul(&h)?;
            }
            Ok(h)
        }
        NetworkKind::LeakyOneHidden { alpha } => {
            let pre = params.layers[0].matmul(x)?;
            params.layers[1].matmul(&pre.map(|z| leaky(z, alpha)))
        }
        NetworkKind::LinearBnOneHidden => {
            let pre = params.layers[0].matmul(x)?;
            params.layers[1].matmul(&batch_normalize(&pre))
        }
        NetworkKind::LinearConv => {
            let layers = spec.conv_layers.as_ref().expect("validated");
            let mut h = x.clone();
            for (l, (layer, fibres)) in layers.iter().zip(&params.layers).enumerate() {
                h = conv_direct(layer, fibres, spec.dims[l], &h);
            }
            Ok(h)
        }
    }
}

/// `(d - kf + 1) x d` banded matrix with `w` on each shifted row.
pub fn toeplitz_from_filter(w: &[f64], d: usize) -> Result<DenseMatrix> {
    let kf = w.len();
    if kf == 0 || kf > d {
        return Err(Error::Shape(format!("filter of width {kf} on length {d}")));
    }
    let mut t = DenseMatrix::zeros(d - kf + 1, d);
    for r in 0..t.rows() {
        for (s, &v) in w.iter().enumerate() {
            t[(r, r + s)] = v;
        }
    }
    Ok(t)
}

/// Block matrix of per-filter Toeplitz blocks, shape
/// `out · d_out x in · d_in`, row blocks indexed by output channel.
pub fn toeplitz_layer(layer: &ConvLayer, fibres: &DenseMatrix, d_in: usize) -> Result<DenseMatrix> {
    if fibres.shape() != (layer.out_channels * layer.in_channels, layer.kernel) {
        return Err(Error::Shape(format!(
            "filters are {}x{}, expected {}x{}",
            fibres.rows(),
            fibres.cols(),
            layer.out_channels * layer.in_channels,
            layer.kernel
        )));
    }
    if layer.kernel == 0 || layer.kernel > d_in {
        return Err(Error::Shape(format!("filter of width {} on length {d_in}", layer.kernel)));
    }
    let d_out = d_in - layer.kernel + 1;
    let mut t = DenseMatrix::zeros(layer.out_channels * d_out, layer.in_channels * d_in);
    for o in 0..layer.out_channels {
        for i in 0..layer.in_channels {
            let block = toeplitz_from_filter(fibres.row(o * layer.in_channels + i), d_in)?;
            for r in 0..d_out {
                for c in 0..d_in {
                    t[(o * d_out + r, i * d_in + c)] = block[(r, c)];
                }
            }
        }
    }
    Ok(t)
}

/// Toeplitz lift of every layer of a convolutional net.
pub fn lift_conv(spec: &NetworkSpec, params: &Params) -> Result<Vec<DenseMatrix>> {
    params.check(spec)?;
    let layers = spec
        .conv_layers
        .as_ref()
        .filter(|_| spec.kind == NetworkKind::LinearConv)
        .ok_or_else(|| Error::Spec("not a convolutional network".into()))?;
    layers
        .iter()
        .zip(&params.layers)
        .enumerate()
        .map(|(l, (layer, fibres))| toeplitz_layer(layer, fibres, spec.dims[l]))
        .collect()
}

/// Zeroes the `⌊fraction · count⌋` smallest-magnitude weights of each layer
/// and records them in the masks. Ties go to the earlier entry; entries
/// already masked are pruned first, so repeating a fraction changes nothing.
pub fn prune_by_magnitude(params: &Params, fraction: f64) -> Result<Params> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Validation(format!("prune fraction {fraction} outside [0, 1]")));
    }
    let mut layers = Vec::with_capacity(params.depth());
    let mut masks = Vec::with_capacity(params.depth());
    for (l, layer) in params.layers.iter().enumerate() {
        let old = params.masks.as_ref().map(|m| &m[l]);
        let count = layer.rows() * layer.cols();
        let prune = (fraction * count as f64).floor() as usize;
        let kept = |i: usize| old.map_or(true, |m| m.as_slice()[i] != 0.0);
        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by(|&a, &b| {
            (kept(a), layer.as_slice()[a].abs()).partial_cmp(&(kept(b), layer.as_slice()[b].abs())).expect("finite weights")
        });
        let mut mask = old.cloned().unwrap_or_else(|| DenseMatrix::from_fn(layer.rows(), layer.cols(), |_, _| 1.0));
        for &i in &order[..prune] {
            mask.as_mut_slice()[i] = 0.0;
        }
        let mut pruned = layer.clone();
        for (w, &m) in pruned.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            if m == 0.0 {
                *w = 0.0;
            }
        }
        layers.push(pruned);
        masks.push(mask);
    }
    Ok(Params {
        layers,
        masks: Some(masks),
    })
}
