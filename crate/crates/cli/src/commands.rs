use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use gn_lens::bounds::{bound_leaky, bound_pair, kappa_sigma};
use gn_lens::data::{
    empirical_covariance, load_csv, load_idx, load_idx_with_labels, synthesize_gaussian, whiten,
    write_csv, Dataset,
};
use gn_lens::gauss_newton::{gn_for, gn_leaky, GnMatrix};
use gn_lens::network::{
    init, init_aligned_svd, ConvLayer, InitScheme, NetworkSpec, Params, SingularValueLaw,
};
use gn_lens::random::{gaussian_matrix, rng_from_seed};
use gn_lens::spectral::{pseudo_condition_number, rank_sensitivity_sweep, RankPolicy};
use gn_lens::trainer::{pruning_experiment, train, BoundSelector, Checkpoint, TrainConfig};

use crate::config::{ConfigError, DataSource, ExperimentConfig, InitChoice, Kind};
use crate::output::{write_rows, write_table, ResultRow};
use crate::svg::{Chart, Series};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<gn_lens::Error> for CliError {
    fn from(e: gn_lens::Error) -> Self {
        match e {
            gn_lens::Error::Io(_) | gn_lens::Error::Format { .. } => CliError::Io(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Library errors raised while turning the config into networks are config
/// errors, not numeric ones.
fn as_config(e: gn_lens::Error) -> CliError {
    match e {
        gn_lens::Error::Io(_) | gn_lens::Error::Format { .. } => CliError::Io(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

pub struct Options {
    pub out: PathBuf,
    pub svg: bool,
    pub spectrum: bool,
    pub timing: bool,
}

/// One point of the architecture grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub depth: usize,
    pub width: usize,
    pub beta: f64,
    pub alpha: f64,
    pub kernel: usize,
    pub filters: usize,
}

pub fn load_data(cfg: &ExperimentConfig, apply_whitening: bool) -> Result<Dataset> {
    let ds = match &cfg.data {
        DataSource::Synthetic { d, n, decay } => {
            let spectrum: Vec<f64> = (0..*d)
                .map(|i| if *d == 1 { 1.0 } else { 10f64.powf(-decay * i as f64 / (*d - 1) as f64) })
                .collect();
            synthesize_gaussian(*d, *n, &spectrum, cfg.data_seed).map_err(as_config)?
        }
        DataSource::Idx { images, labels: Some(labels), limit } => {
            load_idx_with_labels(images, labels, *limit, cfg.data_seed)?
        }
        DataSource::Idx { images, labels: None, limit } => load_idx(images, *limit, cfg.data_seed)?,
        DataSource::Csv { path, label_column } => load_csv(path, *label_column)?,
    };
    info!("loaded {} (d = {}, n = {})", ds.name, ds.dim(), ds.len());
    if apply_whitening && cfg.whiten {
        let (white, report) = whiten(&ds, cfg.eigen_floor)?;
        info!("whitened: κ(Σ) {:.3e} -> {:.6}", report.kappa_before, report.kappa_after);
        return Ok(white);
    }
    Ok(ds)
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let base = Cell { depth: 2, width: 0, beta: 0.0, alpha: 1.0, kernel: 0, filters: 0 };
    let widths = |depth: usize| match cfg.width_per_layer {
        Some(c) => vec![c * depth],
        None => cfg.width.clone(),
    };
    let mut out = Vec::new();
    match cfg.kind {
        Kind::Linear | Kind::Residual => {
            let betas = if cfg.kind == Kind::Residual { cfg.beta.clone() } else { vec![0.0] };
            for &depth in &cfg.depth {
                for width in widths(depth) {
                    for &beta in &betas {
                        out.push(Cell { depth, width, beta, ..base });
                    }
                }
            }
        }
        Kind::Leaky => {
            for width in widths(2) {
                for &alpha in &cfg.alpha {
                    out.push(Cell { width, alpha, ..base });
                }
            }
        }
        Kind::BatchNorm => {
            for width in widths(2) {
                out.push(Cell { width, ..base });
            }
        }
        Kind::Conv => {
            for &filters in &cfg.filters {
                for &kernel in &cfg.kernel {
                    out.push(Cell { filters, kernel, ..base });
                }
            }
        }
    }
    out
}

pub fn network(cfg: &ExperimentConfig, cell: &Cell, d: usize) -> Result<NetworkSpec> {
    let hidden = |depth: usize| {
        let mut dims = vec![d];
        dims.extend(std::iter::repeat(cell.width).take(depth - 1));
        dims.push(cfg.k);
        dims
    };
    match cfg.kind {
        Kind::Linear => NetworkSpec::linear(hidden(cell.depth)),
        Kind::Residual => NetworkSpec::residual(hidden(cell.depth), cell.beta),
        Kind::Leaky => NetworkSpec::leaky(d, cell.width, cfg.k, cell.alpha),
        Kind::BatchNorm => NetworkSpec::batch_norm(d, cell.width, cfg.k),
        Kind::Conv => NetworkSpec::conv(
            d,
            vec![
                ConvLayer { out_channels: cell.filters, in_channels: 1, kernel: cell.kernel },
                ConvLayer { out_channels: 1, in_channels: cell.filters, kernel: cell.kernel },
            ],
        ),
    }
    .map_err(as_config)
}

fn scheme(choice: &InitChoice) -> Option<InitScheme> {
    match choice {
        InitChoice::Kaiming => Some(InitScheme::KaimingNormal),
        InitChoice::Xavier => Some(InitScheme::XavierNormal),
        InitChoice::Gaussian(s) => Some(InitScheme::Gaussian(vec![*s])),
        _ => None,
    }
}

pub fn init_params(cfg: &ExperimentConfig, spec: &NetworkSpec, seed: u64) -> gn_lens::Result<Params> {
    match (&cfg.init, scheme(&cfg.init)) {
        (_, Some(s)) => init(spec, &s, seed),
        (InitChoice::AlignedUniform { low, high }, None) => {
            init_aligned_svd(spec, &SingularValueLaw::Uniform { low: *low, high: *high }, seed)
        }
        (InitChoice::AlignedAbsGaussian(s), None) => init_aligned_svd(spec, &SingularValueLaw::AbsGaussian(*s), seed),
        _ => unreachable!("every init choice is covered"),
    }
}

fn experiment_label(cfg: &ExperimentConfig, cell: &Cell) -> String {
    if cfg.kind == Kind::Conv {
        format!("{}/kernel={}", cfg.name, cell.kernel)
    } else {
        cfg.name.clone()
    }
}

fn base_row(cfg: &ExperimentConfig, cell: &Cell, spec: &NetworkSpec, ds: &Dataset, seed: u64) -> ResultRow {
    ResultRow {
        experiment: experiment_label(cfg, cell),
        seed: Some(seed),
        depth: Some(spec.depth()),
        width: Some(if cfg.kind == Kind::Conv { cell.filters } else { cell.width }),
        d: Some(ds.dim()),
        k: Some(spec.output_dim()),
        n: Some(ds.len()),
        beta: matches!(cfg.kind, Kind::Linear | Kind::Residual).then_some(cell.beta),
        alpha: (cfg.kind == Kind::Leaky).then_some(cell.alpha),
        ..Default::default()
    }
}

struct Evaluation {
    row: ResultRow,
    gn: GnMatrix,
    params: Params,
}

fn evaluate(cfg: &ExperimentConfig, cell: &Cell, ds: &Dataset, seed: u64, timing: bool) -> Result<Evaluation> {
    let started = Instant::now();
    let spec = network(cfg, cell, ds.dim())?;
    let params = init_params(cfg, &spec, seed).map_err(as_config)?;
    let sigma = empirical_covariance(ds)?;
    let mut row = base_row(cfg, cell, &spec, ds, seed);
    let (gn, gamma) = if cfg.kind == Kind::Leaky {
        let (g, gamma) = gn_leaky(&params.layers[1], &params.layers[0], &ds.x, cell.alpha)?;
        (g, Some(gamma))
    } else {
        (gn_for(&spec, &params, &ds.x)?, None)
    };
    let policy = cfg.rank_policy.unwrap_or_else(|| RankPolicy::default_for(gn.dim(), gn.dim()));
    row.kappa = Some(pseudo_condition_number(&gn.spectrum()?, policy)?);
    row.rank_policy = Some(policy.to_string());
    row.kappa_sigma = kappa_sigma(&sigma).ok();
    if cfg.bounds {
        match cfg.kind {
            Kind::Linear | Kind::Residual => match bound_pair(&params, cell.beta, &sigma) {
                Ok((convex, max)) => {
                    row.bound_convex = Some(convex.value);
                    row.bound_max = Some(max.value);
                }
                Err(e) => warn!("seed {seed}: bounds skipped: {e}"),
            },
            Kind::Leaky => {
                let gamma = gamma.expect("leaky builder returns Γ");
                match bound_leaky(&params.layers[1], &params.layers[0], &ds.x, cell.alpha, &gamma) {
                    Ok(b) => row.bound_other = Some(b.value),
                    Err(e) => warn!("seed {seed}: leaky bound skipped: {e}"),
                }
            }
            Kind::BatchNorm | Kind::Conv => {}
        }
    }
    if timing {
        row.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    }
    Ok(Evaluation { row, gn, params })
}

fn prepare_out(opts: &Options) -> Result<()> {
    fs::create_dir_all(&opts.out).map_err(|e| CliError::Io(format!("{}: {e}", opts.out.display())))
}

fn out_file(opts: &Options, name: &str) -> PathBuf {
    opts.out.join(name)
}

fn f(v: f64) -> String {
    v.to_string()
}

pub fn analyze(cfg: &ExperimentConfig, opts: &Options) -> Result<()> {
    let ds = load_data(cfg, true)?;
    let cell = cells(cfg)[0];
    let seed = cfg.seeds[0];
    let eval = evaluate(cfg, &cell, &ds, seed, opts.timing)?;
    prepare_out(opts)?;
    write_rows(&out_file(opts, "analysis.csv"), std::slice::from_ref(&eval.row))?;

    if matches!(cfg.kind, Kind::Linear | Kind::Residual) && cfg.bounds {
        let sigma = empirical_covariance(&ds)?;
        if let Ok((convex, max)) = bound_pair(&eval.params, cell.beta, &sigma) {
            let rows: Vec<Vec<String>> = convex
                .terms
                .iter()
                .map(|t| {
                    vec![
                        t.layer.to_string(),
                        f(t.kappa_sq_prefix),
                        f(t.kappa_sq_suffix),
                        f(t.sigma_min_sq_prefix),
                        f(t.sigma_min_sq_suffix),
                        f(t.alpha),
                        f(t.gamma),
                        f(t.weighted),
                        (max.argmax_layer == Some(t.layer)).to_string(),
                    ]
                })
                .collect();
            write_table(
                &out_file(opts, "bound_terms.csv"),
                &[
                    "layer", "kappa_sq_prefix", "kappa_sq_suffix", "sigma_min_sq_prefix",
                    "sigma_min_sq_suffix", "alpha", "gamma", "weighted", "argmax",
                ],
                &rows,
            )?;
        }
    }
    if opts.spectrum {
        let spec = eval.gn.spectrum()?;
        let rows: Vec<Vec<String>> = spec.values().iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), f(*v)]).collect();
        write_table(&out_file(opts, "spectrum.csv"), &["index", "eigenvalue"], &rows)?;
        let sweep: Vec<Vec<String>> = rank_sensitivity_sweep(&spec).into_iter().map(|(r, k)| vec![r.to_string(), f(k)]).collect();
        write_table(&out_file(opts, "rank_sweep.csv"), &["rank", "kappa"], &sweep)?;
    }
    Ok(())
}

/// Axes in display order: the first with several values becomes the x axis
/// of the chart, the rest split series.
fn axes(cfg: &ExperimentConfig, cell: &Cell) -> Vec<(&'static str, f64)> {
    match cfg.kind {
        Kind::Linear => vec![("L", cell.depth as f64), ("m", cell.width as f64)],
        Kind::Residual => vec![("L", cell.depth as f64), ("m", cell.width as f64), ("beta", cell.beta)],
        Kind::Leaky => vec![("m", cell.width as f64), ("alpha", cell.alpha)],
        Kind::BatchNorm => vec![("m", cell.width as f64)],
        Kind::Conv => vec![("filters", cell.filters as f64), ("kernel", cell.kernel as f64)],
    }
}

fn sweep_chart(cfg: &ExperimentConfig, grid: &[Cell], results: &[(usize, ResultRow)]) -> Chart {
    let coords: Vec<Vec<(&str, f64)>> = grid.iter().map(|c| axes(cfg, c)).collect();
    let naxes = coords.first().map_or(0, Vec::len);
    let varies = |a: usize| coords.iter().any(|c| c[a].1 != coords[0][a].1);
    let x_axis = (0..naxes).find(|&a| varies(a)).unwrap_or(0);
    let mut series: Vec<Series> = Vec::new();
    let metrics: [(&str, fn(&ResultRow) -> Option<f64>); 4] = [
        ("κ", |r| r.kappa),
        ("convex", |r| r.bound_convex),
        ("max", |r| r.bound_max),
        ("bound", |r| r.bound_other),
    ];
    for (metric, get) in metrics {
        if !results.iter().any(|(_, r)| get(r).is_some()) {
            continue;
        }
        for (ci, coord) in coords.iter().enumerate() {
            let label: Vec<String> = coord
                .iter()
                .enumerate()
                .filter(|&(a, _)| a != x_axis && varies(a))
                .map(|(_, (name, v))| format!("{name}={v}"))
                .collect();
            let name = if label.is_empty() { metric.to_string() } else { format!("{metric} {}", label.join(" ")) };
            let samples: Vec<f64> = results.iter().filter(|(c, _)| *c == ci).filter_map(|(_, r)| get(r)).collect();
            let x = coord.get(x_axis).map_or(0.0, |p| p.1);
            match series.iter_mut().find(|s| s.name == name) {
                Some(s) => s.points.push((x, samples)),
                None => series.push(Series { name, points: vec![(x, samples)] }),
            }
        }
    }
    Chart {
        title: cfg.name.clone(),
        x_label: coords.first().and_then(|c| c.get(x_axis)).map_or("", |p| p.0).to_string(),
        y_label: "condition number".into(),
        log_y: true,
        series,
    }
}

pub fn sweep(cfg: &ExperimentConfig, opts: &Options) -> Result<()> {
    let ds = load_data(cfg, true)?;
    let grid = cells(cfg);
    for cell in &grid {
        network(cfg, cell, ds.dim())?;
    }
    let jobs: Vec<(usize, u64)> = (0..grid.len()).flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    info!("sweep: {} cells x {} seeds", grid.len(), cfg.seeds.len());
    let outcomes: Vec<(usize, u64, Result<ResultRow>)> = jobs
        .par_iter()
        .map(|&(c, s)| (c, s, evaluate(cfg, &grid[c], &ds, s, opts.timing).map(|e| e.row)))
        .collect();
    prepare_out(opts)?;
    let mut rows = Vec::new();
    let mut errors = String::new();
    for (c, s, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push((c, row)),
            Err(e) => errors.push_str(&format!("cell {c} ({:?}) seed {s}: {e}\n", grid[c])),
        }
    }
    fs::write(out_file(opts, "errors.log"), &errors)?;
    if rows.is_empty() {
        return Err(CliError::Numeric("every sweep cell failed; see errors.log".into()));
    }
    if !errors.is_empty() {
        warn!("{} sweep cells failed; see errors.log", errors.lines().count());
    }
    let plain: Vec<ResultRow> = rows.iter().map(|(_, r)| r.clone()).collect();
    write_rows(&out_file(opts, "sweep.csv"), &plain)?;
    if opts.svg {
        fs::write(out_file(opts, "sweep.svg"), sweep_chart(cfg, &grid, &rows).render())?;
    }
    Ok(())
}

/// Dataset with regression targets: the file's labels when their width
/// matches the network output, otherwise a Gaussian linear teacher.
fn with_targets(cfg: &ExperimentConfig, ds: Dataset, k: usize) -> Result<Dataset> {
    if ds.y.as_ref().is_some_and(|y| y.rows() == k) {
        return Ok(ds);
    }
    let mut rng = rng_from_seed(cfg.data_seed ^ 0x7eac_4e12);
    let z = gaussian_matrix(k, ds.dim(), 1.0 / (ds.dim() as f64).sqrt(), &mut rng);
    let y = z.matmul(&ds.x)?;
    Ok(Dataset::new(ds.x, Some(y), format!("{}+teacher", ds.name))?)
}

fn train_config(cfg: &ExperimentConfig, seed: u64, timing: bool) -> TrainConfig {
    TrainConfig {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed,
        trace_every: cfg.trace_every,
        timing,
    }
}

fn checkpoint_row(base: &ResultRow, c: &Checkpoint) -> ResultRow {
    ResultRow {
        epoch: Some(c.epoch),
        kappa: c.kappa,
        bound_convex: c.bound_convex,
        bound_max: c.bound_max,
        bound_other: c.bound_other,
        rank_policy: c.rank_policy.map(|p| p.to_string()),
        wall_ms: c.wall_ms,
        ..base.clone()
    }
}

fn trace_charts(opts: &Options, name: &str, x_label: &str, kappa: Vec<Series>, loss: Vec<Series>) -> Result<()> {
    let panels = [("kappa", "condition number", kappa), ("loss", "loss", loss)];
    for (suffix, y_label, series) in panels {
        let chart = Chart { title: format!("{name}: {suffix}"), x_label: x_label.into(), y_label: y_label.into(), log_y: true, series };
        fs::write(out_file(opts, &format!("{name}_{suffix}.svg")), chart.render())?;
    }
    Ok(())
}

/// Groups `(x, value)` samples into one median series.
fn pooled(name: &str, samples: impl Iterator<Item = (f64, f64)>) -> Series {
    let mut points: Vec<(f64, Vec<f64>)> = Vec::new();
    for (x, v) in samples {
        match points.iter_mut().find(|p| p.0 == x) {
            Some(p) => p.1.push(v),
            None => points.push((x, vec![v])),
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Series { name: name.into(), points }
}

pub fn train_cmd(cfg: &ExperimentConfig, opts: &Options) -> Result<()> {
    let raw = load_data(cfg, true)?;
    let cell = cells(cfg)[0];
    let spec = network(cfg, &cell, raw.dim())?;
    let ds = with_targets(cfg, raw, spec.output_dim())?;
    let selector = if cfg.bounds { BoundSelector::Auto } else { BoundSelector::None };
    let runs: Vec<(u64, Result<gn_lens::trainer::TrainTrace>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = init_params(cfg, &spec, seed)
                .map_err(as_config)
                .and_then(|p| Ok(train(&spec, &p, &ds, &train_config(cfg, seed, opts.timing), selector)?.1));
            (seed, run)
        })
        .collect();
    prepare_out(opts)?;
    let (mut rows, mut losses, mut errors) = (Vec::new(), Vec::new(), String::new());
    for (seed, run) in &runs {
        match run {
            Ok(trace) => {
                if trace.diverged {
                    warn!("seed {seed} diverged");
                }
                let base = base_row(cfg, &cell, &spec, &ds, *seed);
                for c in &trace.checkpoints {
                    rows.push(checkpoint_row(&base, c));
                    losses.push(vec![base.experiment.clone(), seed.to_string(), String::new(), c.epoch.to_string(), f(c.loss)]);
                }
            }
            Err(e) => errors.push_str(&format!("seed {seed}: {e}\n")),
        }
    }
    fs::write(out_file(opts, "errors.log"), &errors)?;
    if rows.is_empty() {
        return Err(runs.into_iter().find_map(|(_, r)| r.err()).unwrap_or(CliError::Numeric("no runs".into())));
    }
    write_rows(&out_file(opts, "trace.csv"), &rows)?;
    write_table(&out_file(opts, "loss.csv"), &["experiment", "seed", "fraction", "epoch", "loss"], &losses)?;
    if opts.svg {
        let mut kappa = vec![pooled("κ", rows.iter().filter_map(|r| Some((r.epoch? as f64, r.kappa?))))];
        if rows.iter().any(|r| r.bound_convex.is_some()) {
            kappa.push(pooled("convex bound", rows.iter().filter_map(|r| Some((r.epoch? as f64, r.bound_convex?)))));
        }
        let loss = vec![pooled("loss", losses.iter().map(|l| (l[3].parse().unwrap_or(0.0), l[4].parse().unwrap_or(f64::NAN))))];
        trace_charts(opts, "trace", "epoch", kappa, loss)?;
    }
    Ok(())
}

pub fn prune_cmd(cfg: &ExperimentConfig, opts: &Options) -> Result<()> {
    let raw = load_data(cfg, true)?;
    let cell = cells(cfg)[0];
    let spec = network(cfg, &cell, raw.dim())?;
    let ds = with_targets(cfg, raw, spec.output_dim())?;
    let init_scheme = scheme(&cfg.init)
        .ok_or_else(|| CliError::Config("prune supports kaiming, xavier and gaussian init only".into()))?;
    let mut fractions = cfg.fractions.clone();
    fractions.sort_by(f64::total_cmp);
    let cells = pruning_experiment(&spec, &ds, &fractions, &cfg.seeds, &train_config(cfg, 0, opts.timing), &init_scheme)?;
    prepare_out(opts)?;
    let (mut rows, mut losses) = (Vec::new(), Vec::new());
    for pc in &cells {
        let base = ResultRow { fraction: Some(pc.fraction), ..base_row(cfg, &cell, &spec, &ds, pc.seed) };
        for c in &pc.trace.checkpoints {
            rows.push(checkpoint_row(&base, c));
            losses.push(vec![base.experiment.clone(), pc.seed.to_string(), f(pc.fraction), c.epoch.to_string(), f(c.loss)]);
        }
    }
    fs::write(out_file(opts, "errors.log"), "")?;
    write_rows(&out_file(opts, "prune.csv"), &rows)?;
    write_table(&out_file(opts, "loss.csv"), &["experiment", "seed", "fraction", "epoch", "loss"], &losses)?;
    if opts.svg {
        let kappa = vec![pooled("κ at init", cells.iter().filter_map(|c| Some((c.fraction, c.kappa_init?))))];
        let loss = vec![pooled("final loss", cells.iter().filter_map(|c| Some((c.fraction, c.losses.last()?.1))))];
        trace_charts(opts, "prune", "fraction", kappa, loss)?;
    }
    Ok(())
}

pub fn whiten_cmd(cfg: &ExperimentConfig, opts: &Options) -> Result<()> {
    let ds = load_data(cfg, false)?;
    let (white, report) = whiten(&ds, cfg.eigen_floor)?;
    prepare_out(opts)?;
    write_csv(out_file(opts, "whitened.csv"), &white)?;
    write_table(
        &out_file(opts, "whiten.csv"),
        &["dataset", "d", "n", "retained", "eigen_floor", "kappa_before", "kappa_after"],
        &[vec![
            ds.name.clone(),
            ds.dim().to_string(),
            ds.len().to_string(),
            report.retained.to_string(),
            f(report.eigen_floor),
            f(report.kappa_before),
            f(report.kappa_after),
        ]],
    )?;
    Ok(())
}

pub fn default_out(cfg: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("gn-lens-out"))
}
