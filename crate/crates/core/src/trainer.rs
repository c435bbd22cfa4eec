//! Gradient descent under the mean-squared error, with condition-number
//! and bound tracing, plus the prune-then-train experiment.

use std::time::Instant;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::bounds::{bound_leaky, bound_pair};
use crate::data::{covariance_of, Dataset};
use crate::error::{Error, Result};
use crate::gauss_newton::{gn_for, gn_leaky};
use crate::network::{
    batch_normalize, forward, init, leaky, prune_by_magnitude, shifted, InitScheme, NetworkKind,
    NetworkSpec, Params, BN_EPS,
};
use crate::random::rng_from_seed;
use crate::spectral::{DenseMatrix, RankPolicy};

/// Loss above which a run counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Constant step size; zero leaves the parameters untouched.
    pub learning_rate: f64,
    /// Mini-batch size; 0 means full batch.
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Checkpoint stride in epochs.
    pub trace_every: usize,
    /// Record wall-clock time per checkpoint (makes traces non-reproducible).
    pub timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 0,
            epochs: 100,
            seed: 0,
            trace_every: 10,
            timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Validation(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.trace_every == 0 {
            return Err(Error::Validation("trace_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which bounds are evaluated at each checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSelector {
    None,
    /// Convex and max bounds for linear/residual nets, the Leaky-ReLU bound
    /// for leaky nets, nothing otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub loss: f64,
    pub kappa: Option<f64>,
    pub bound_convex: Option<f64>,
    pub bound_max: Option<f64>,
    pub bound_other: Option<f64>,
    /// Primary bound over κ.
    pub ratio: Option<f64>,
    /// Policy the κ was computed under.
    pub rank_policy: Option<RankPolicy>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub checkpoints: Vec<Checkpoint>,
    pub diverged: bool,
}

/// `(1/n) Σ_i ‖F(x_i) - y_i‖² / 2`.
pub fn mse_loss(spec: &NetworkSpec, params: &Params, x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    let out = forward(spec, params, x)?;
    let err = out.sub(y)?;
    Ok(err.as_slice().iter().map(|e| e * e).sum::<f64>() / (2.0 * x.cols() as f64))
}

/// Backpropagated gradient of [`mse_loss`], one matrix per layer; masked
/// entries are zero.
pub fn mse_gradient(spec: &NetworkSpec, params: &Params, x: &DenseMatrix, y: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
    params.check(spec)?;
    if x.cols() == 0 {
        return Err(Error::Validation("empty batch".into()));
    }
    let out = forward(spec, params, x)?;
    if y.shape() != out.shape() {
        return Err(Error::Dimension(format!(
            "targets are {}x{}, outputs {}x{}",
            y.rows(),
            y.cols(),
            out.rows(),
            out.cols()
        )));
    }
    let err = out.sub(y)?.scale(1.0 / x.cols() as f64);
    let mut grads = match spec.kind {
        NetworkKind::LinearDeep | NetworkKind::Residual { .. } => {
            let beta = spec.beta();
            let factors: Vec<DenseMatrix> = params.layers.iter().map(|w| shifted(w, beta)).collect();
            let mut acts = vec![x.clone()];
            for f in &factors {
                let next = f.matmul(acts.last().expect("non-empty"))?;
                acts.push(next);
            }
            let mut delta = err;
            let mut grads = vec![DenseMatrix::zeros(0, 0); factors.len()];
            for l in (0..factors.len()).rev() {
                grads[l] = delta.matmul(&acts[l].transpose())?;
                if l > 0 {
                    delta = factors[l].transpose().matmul(&delta)?;
                }
            }
            grads
        }
        NetworkKind::LeakyOneHidden { alpha } => {
            let (v, w) = (&params.layers[0], &params.layers[1]);
            let pre = v.matmul(x)?;
            let hidden = pre.map(|z| leaky(z, alpha));
            let gw = err.matmul(&hidden.transpose())?;
            let dh = w.transpose().matmul(&err)?;
            let mut dz = dh;
            for (d, &z) in dz.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if z <= 0.0 {
                    *d *= alpha;
                }
            }
            vec![dz.matmul(&x.transpose())?, gw]
        }
        NetworkKind::LinearBnOneHidden => {
            let (v, w) = (&params.layers[0], &params.layers[1]);
            let pre = v.matmul(x)?;
            let normed = batch_normalize(&pre);
            let gw = err.matmul(&normed.transpose())?;
            let dn = w.transpose().matmul(&err)?;
            let n = x.cols() as f64;
            let mut dz = DenseMatrix::zeros(pre.rows(), pre.cols());
            for i in 0..pre.rows() {
                let row = pre.row(i);
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n;
                let inv = 1.0 / (var + BN_EPS).sqrt();
                let g = dn.row(i);
                let xh = normed.row(i);
                let sum_g: f64 = g.iter().sum();
                let sum_gx: f64 = g.iter().zip(xh).map(|(a, b)| a * b).sum();
                for j in 0..pre.cols() {
                    dz[(i, j)] = inv / n * (n * g[j] - sum_g - xh[j] * sum_gx);
                }
            }
            vec![dz.matmul(&x.transpose())?, gw]
        }
        NetworkKind::LinearConv => conv_gradients(spec, params, x, err)?,
    };
    if let Some(masks) = &params.masks {
        for (g, m) in grads.iter_mut().zip(masks) {
            for (gv, &mv) in g.as_mut_slice().iter_mut().zip(m.as_slice()) {
                if mv == 0.0 {
                    *gv = 0.0;
                }
            }
        }
    }
    Ok(grads)
}

fn conv_gradients(spec: &NetworkSpec, params: &Params, x: &DenseMatrix, err: DenseMatrix) -> Result<Vec<DenseMatrix>> {
    let layers = spec.conv_layers.as_ref().expect("validated");
    let mut acts = vec![x.clone()];
    for l in 0..layers.len() {
        let sub = NetworkSpec::conv(spec.dims[l], vec![layers[l]])?;
        let next = forward(&sub, &Params::new(vec![params.layers[l].clone()]), acts.last().expect("non-empty"))?;
        acts.push(next);
    }
    let cols = x.cols();
    let mut delta = err;
    let mut grads = vec![DenseMatrix::zeros(0, 0); layers.len()];
    for l in (0..layers.len()).rev() {
        let c = layers[l];
        let (len, out_len) = (spec.dims[l], spec.dims[l + 1]);
        let fibres = &params.layers[l];
        let input = &acts[l];
        let mut g = DenseMatrix::zeros(fibres.rows(), fibres.cols());
        let mut back = DenseMatrix::zeros(c.in_channels * len, cols);
        for o in 0..c.out_channels {
            for i in 0..c.in_channels {
                let f = o * c.in_channels + i;
                for s in 0..c.kernel {
                    let w = fibres[(f, s)];
                    let mut acc = 0.0;
                    for t in 0..out_len {
                        for b in 0..cols {
                            let dv = delta[(o * out_len + t, b)];
                            acc += dv * input[(i * len + t + s, b)];
                            back[(i * len + t + s, b)] += w * dv;
                        }
                    }
                    g[(f, s)] = acc;
                }
            }
        }
        grads[l] = g;
        delta = back;
    }
    Ok(grads)
}

fn checkpoint(
    spec: &NetworkSpec,
    params: &Params,
    x: &DenseMatrix,
    y: &DenseMatrix,
    epoch: usize,
    selector: BoundSelector,
) -> Result<Checkpoint> {
    let loss = mse_loss(spec, params, x, y)?;
    let mut rank_policy = None;
    let kappa = match gn_for(spec, params, x).and_then(|g| {
        let policy = RankPolicy::default_for(g.dim(), g.dim());
        rank_policy = Some(policy);
        g.kappa(Some(policy))
    }) {
        Ok(k) => Some(k),
        Err(e) => {
            debug!("κ unavailable at epoch {epoch}: {e}");
            None
        }
    };
    let (mut convex, mut max, mut other) = (None, None, None);
    if selector == BoundSelector::Auto {
        match spec.kind {
            NetworkKind::LinearDeep | NetworkKind::Residual { .. } => {
                match covariance_of(x).and_then(|s| bound_pair(params, spec.beta(), &s)) {
                    Ok((c, m)) => {
                        convex = Some(c.value);
                        max = Some(m.value);
                    }
                    Err(e) => debug!("bounds unavailable at epoch {epoch}: {e}"),
                }
            }
            NetworkKind::LeakyOneHidden { alpha } => {
                let (v, w) = (&params.layers[0], &params.layers[1]);
                match gn_leaky(w, v, x, alpha).and_then(|(_, gamma)| bound_leaky(w, v, x, alpha, &gamma)) {
                    Ok(r) => other = Some(r.value),
                    Err(e) => debug!("leaky bound unavailable at epoch {epoch}: {e}"),
                }
            }
            _ => {}
        }
    }
    let ratio = kappa.and_then(|k| convex.or(other).map(|b| b / k));
    Ok(Checkpoint {
        epoch,
        loss,
        kappa,
        bound_convex: convex,
        bound_max: max,
        bound_other: other,
        ratio,
        rank_policy,
        wall_ms: None,
    })
}

/// Runs (mini-batch) gradient descent. The trace holds checkpoints at epoch
/// 0, every `trace_every` epochs and at the end; a diverging run stops early
/// with `diverged` set.
pub fn train(
    spec: &NetworkSpec,
    params: &Params,
    ds: &Dataset,
    cfg: &TrainConfig,
    selector: BoundSelector,
) -> Result<(Params, TrainTrace)> {
    cfg.validate()?;
    params.check(spec)?;
    let y = ds
        .y
        .as_ref()
        .ok_or_else(|| Error::Validation("training needs targets".into()))?;
    let x = &ds.x;
    let n = ds.len();
    let start = Instant::now();
    let stamp = |mut c: Checkpoint| {
        if cfg.timing {
            c.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
        c
    };

    let mut current = params.clone();
    current.apply_masks();
    let mut trace = TrainTrace {
        checkpoints: vec![stamp(checkpoint(spec, &current, x, y, 0, selector)?)],
        diverged: false,
    };
    let mut rng = rng_from_seed(cfg.seed);
    let full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        if cfg.learning_rate > 0.0 {
            if full_batch {
                step(spec, &mut current, x, y, cfg.learning_rate)?;
            } else {
                order.shuffle(&mut rng);
                for chunk in order.chunks_exact(cfg.batch_size) {
                    let batch = ds.select(chunk)?;
                    let by = batch.y.as_ref().expect("targets selected");
                    step(spec, &mut current, &batch.x, by, cfg.learning_rate)?;
                }
            }
        }
        let loss = if current.layers.iter().all(DenseMatrix::is_finite) {
            mse_loss(spec, &current, x, y).unwrap_or(f64::NAN)
        } else {
            f64::NAN
        };
        if !(loss <= DIVERGENCE_LOSS) {
            warn!("training diverged at epoch {epoch} (loss {loss:e})");
            trace.diverged = true;
            trace.checkpoints.push(stamp(Checkpoint {
                epoch,
                loss,
                kappa: None,
                bound_convex: None,
                bound_max: None,
                bound_other: None,
                ratio: None,
                rank_policy: None,
                wall_ms: None,
            }));
            break;
        }
        if epoch % cfg.trace_every == 0 || epoch == cfg.epochs {
            trace
                .checkpoints
                .push(stamp(checkpoint(spec, &current, x, y, epoch, selector)?));
        }
    }
    Ok((current, trace))
}

fn step(spec: &NetworkSpec, params: &mut Params, x: &DenseMatrix, y: &DenseMatrix, lr: f64) -> Result<()> {
    let grads = mse_gradient(spec, params, x, y)?;
    for (w, g) in params.layers.iter_mut().zip(&grads) {
        for (wv, gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *wv -= lr * gv;
        }
    }
    params.apply_masks();
    Ok(())
}

/// One (fraction, seed) cell of [`pruning_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct PruneCell {
    pub fraction: f64,
    pub seed: u64,
    /// `(epoch, loss)` at every checkpoint.
    pub losses: Vec<(usize, f64)>,
    pub kappa_init: Option<f64>,
    pub kappa_end: Option<f64>,
    pub diverged: bool,
    pub trace: TrainTrace,
}

/// Initializes with `scheme` per seed, prunes each layer by magnitude at
/// every fraction, then trains with the masks held fixed. Cells run in
/// parallel; the result is ordered by fraction, then seed.
pub fn pruning_experiment(
    spec: &NetworkSpec,
    ds: &Dataset,
    fractions: &[f64],
    seeds: &[u64],
    cfg: &TrainConfig,
    scheme: &InitScheme,
) -> Result<Vec<PruneCell>> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::Validation(format!("prune fraction {f} outside [0, 1)")));
    }
    cfg.validate()?;
    let cells: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(fraction, seed)| {
            let params = prune_by_magnitude(&init(spec, scheme, seed)?, fraction)?;
            let run_cfg = TrainConfig { seed, ..cfg.clone() };
            let (_, trace) = train(spec, &params, ds, &run_cfg, BoundSelector::None)?;
            let kappa_init = trace.checkpoints.first().and_then(|c| c.kappa);
            let kappa_end = trace.checkpoints.last().and_then(|c| c.kappa);
            Ok(PruneCell {
                fraction,
                seed,
                losses: trace.checkpoints.iter().map(|c| (c.epoch, c.loss)).collect(),
                kappa_init,
                kappa_end,
                diverged: trace.diverged,
                trace,
            })
        })
        .collect()
}
