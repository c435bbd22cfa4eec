//! Datasets: IDX/CSV ingestion, Gaussian synthesis with a prescribed
//! covariance spectrum, empirical covariance, ZCA whitening and average
//! pooling.
//!
//! Inputs are stored as columns: `X` is `d x n`, targets `Y` are `k x n`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::random::{gaussian_matrix, random_orthogonal, rng_from_seed};
use crate::spectral::{pseudo_condition_number, sym_eigendecompose, DenseMatrix, RankPolicy};

const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

/// Relative eigenvalue floor used when whitening, unless overridden.
pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: Option<DenseMatrix>,
    pub name: String,
}

impl Dataset {
    pub fn new(x: DenseMatrix, y: Option<DenseMatrix>, name: impl Into<String>) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::Validation(format!(
                "dataset needs d >= 1 and n >= 1, got {}x{}",
                x.rows(),
                x.cols()
            )));
        }
        if let Some(y) = &y {
            if y.cols() != x.cols() {
                return Err(Error::Dimension(format!(
                    "inputs have {} samples but targets have {}",
                    x.cols(),
                    y.cols()
                )));
            }
        }
        Ok(Self {
            x,
            y,
            name: name.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.x.rows()
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.cols() == 0
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let pick = |m: &DenseMatrix| DenseMatrix::from_fn(m.rows(), indices.len(), |i, j| m[(i, indices[j])]);
        Self::new(pick(&self.x), self.y.as_ref().map(pick), self.name.clone())
    }
}

/// Outcome of [`whiten`].
#[derive(Debug, Clone)]
pub struct WhitenReport {
    /// The applied `d x d` map `Σ_f^{-1/2}`.
    pub transform: DenseMatrix,
    /// Relative floor the eigenvalues were clamped to.
    pub eigen_floor: f64,
    pub kappa_before: f64,
    /// κ of the whitened covariance on the retained eigenspace.
    pub kappa_after: f64,
    /// Number of eigen-directions at or above the floor.
    pub retained: usize,
}

/// `(1/n) X Xᵀ`.
pub fn empirical_covariance(ds: &Dataset) -> Result<DenseMatrix> {
    covariance_of(&ds.x)
}

pub(crate) fn covariance_of(x: &DenseMatrix) -> Result<DenseMatrix> {
    let n = x.cols();
    if n == 0 {
        return Err(Error::Validation("empty dataset".into()));
    }
    Ok(x.outer_gram().scale(1.0 / n as f64).symmetrized())
}

/// ZCA whitening `X' = Σ_f^{-1/2} X`, where `Σ_f` floors the eigenvalues of
/// the empirical covariance at `eigen_floor · λ_max`.
pub fn whiten(ds: &Dataset, eigen_floor: f64) -> Result<(Dataset, WhitenReport)> {
    if !(eigen_floor > 0.0) {
        return Err(Error::Validation(format!("eigen floor {eigen_floor} must be positive")));
    }
    let sigma = empirical_covariance(ds)?;
    let d = sigma.rows();
    let eig = sym_eigendecompose(&sigma, true)?;
    let lam_max = eig.spectrum.max();
    if !(lam_max > 0.0) {
        return Err(Error::Degenerate("covariance has rank zero".into()));
    }
    let policy = RankPolicy::default_for(d, d);
    let kappa_before = pseudo_condition_number(&eig.spectrum, policy)?;

    let floor = eigen_floor * lam_max;
    let q = eig.vectors.expect("vectors requested");
    let inv_roots: Vec<f64> = eig
        .spectrum
        .values()
        .iter()
        .map(|&v| 1.0 / v.max(floor).sqrt())
        .collect();
    let scaled = DenseMatrix::from_fn(d, d, |i, j| q[(i, j)] * inv_roots[j]);
    let transform = (&scaled * &q.transpose()).symmetrized();
    let retained = eig.spectrum.values().iter().filter(|&&v| v >= floor).count();

    let x = &transform * &ds.x;
    let whitened = Dataset::new(x, ds.y.clone(), format!("{}+zca", ds.name))?;
    let after = sym_eigendecompose(&empirical_covariance(&whitened)?, false)?.spectrum;
    let kappa_after = pseudo_condition_number(&after, RankPolicy::Analytic(retained.max(1)))?;
    Ok((
        whitened,
        WhitenReport {
            transform,
            eigen_floor,
            kappa_before,
            kappa_after,
            retained,
        },
    ))
}

struct IdxArray {
    dims: Vec<usize>,
    bytes: Vec<u8>,
}

fn parse_idx(raw: &[u8], expected_magic: u32) -> Result<IdxArray> {
    if raw.len() < 4 {
        return Err(Error::format(None, "IDX file shorter than its magic number"));
    }
    let magic = u32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]);
    if magic != expected_magic {
        return Err(Error::format(
            None,
            format!("bad IDX magic {magic:#010x}, expected {expected_magic:#010x}"),
        ));
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if raw.len() < header {
        return Err(Error::format(None, "IDX header is truncated"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes([raw[o], raw[o + 1], raw[o + 2], raw[o + 3]]) as usize
        })
        .collect();
    let count: usize = dims.iter().product();
    if raw.len() < header + count {
        return Err(Error::format(
            None,
            format!("IDX payload truncated: {} of {count} bytes", raw.len() - header),
        ));
    }
    Ok(IdxArray {
        dims,
        bytes: raw[header..header + count].to_vec(),
    })
}

fn subsample_indices(total: usize, limit: usize, seed: u64) -> Vec<usize> {
    if limit == 0 || limit >= total {
        return (0..total).collect();
    }
    let mut picked = sample(&mut rng_from_seed(seed), total, limit).into_vec();
    picked.sort_unstable();
    picked
}

fn images_to_columns(arr: &IdxArray, indices: &[usize]) -> Result<DenseMatrix> {
    let pixels: usize = arr.dims[1..].iter().product();
    DenseMatrix::new(
        pixels,
        indices.len(),
        (0..pixels)
            .flat_map(|p| indices.iter().map(move |&s| (s, p)))
            .map(|(s, p)| arr.bytes[s * pixels + p] as f64 / 255.0)
            .collect(),
    )
}

/// Loads an uncompressed IDX image file (magic `0x00000803`) as a `d x n`
/// matrix with pixels in `[0, 1]`. A label file (magic `0x00000801`) loads
/// as a `1 x n` matrix of raw label values. When `limit` is nonzero and below
/// the record count a seeded uniform subsample (file order kept) is taken.
pub fn load_idx(path: impl AsRef<Path>, limit: usize, seed: u64) -> Result<Dataset> {
    let path = path.as_ref();
    let raw = fs::read(path)?;
    let name = path.display().to_string();
    if raw.len() >= 4 && u32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]) == IDX_LABELS_MAGIC {
        let arr = parse_idx(&raw, IDX_LABELS_MAGIC)?;
        let idx = subsample_indices(arr.dims[0], limit, seed);
        let x = DenseMatrix::new(1, idx.len(), idx.iter().map(|&i| arr.bytes[i] as f64).collect())?;
        return Dataset::new(x, None, name);
    }
    let arr = parse_idx(&raw, IDX_IMAGES_MAGIC)?;
    let idx = subsample_indices(arr.dims[0], limit, seed);
    Dataset::new(images_to_columns(&arr, &idx)?, None, name)
}

/// Images plus one-hot targets from a matching label file; the same
/// subsample is applied to both.
pub fn load_idx_with_labels(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    limit: usize,
    seed: u64,
) -> Result<Dataset> {
    let img = parse_idx(&fs::read(images.as_ref())?, IDX_IMAGES_MAGIC)?;
    let lab = parse_idx(&fs::read(labels.as_ref())?, IDX_LABELS_MAGIC)?;
    if img.dims[0] != lab.dims[0] {
        return Err(Error::format(
            None,
            format!("{} images but {} labels", img.dims[0], lab.dims[0]),
        ));
    }
    let idx = subsample_indices(img.dims[0], limit, seed);
    let classes = lab.bytes.iter().copied().max().map_or(1, |m| m as usize + 1);
    let y = DenseMatrix::from_fn(classes, idx.len(), |c, j| {
        if lab.bytes[idx[j]] as usize == c {
            1.0
        } else {
            0.0
        }
    });
    Dataset::new(
        images_to_columns(&img, &idx)?,
        Some(y),
        images.as_ref().display().to_string(),
    )
}

/// Numeric CSV, one sample per row, no header. With `label_column` the last
/// column becomes a `1 x n` target matrix.
pub fn load_csv(path: impl AsRef<Path>, label_column: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::format(None, e.to_string()))?;
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(Some(row), e.to_string()))?;
        let values = record
            .iter()
            .map(|cell| {
                cell.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::format(Some(row), format!("cell `{cell}` is not a finite number"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = samples.first() {
            if first.len() != values.len() {
                return Err(Error::format(
                    Some(row),
                    format!("{} columns, expected {}", values.len(), first.len()),
                ));
            }
        }
        samples.push(values);
    }
    let n = samples.len();
    let width = samples.first().map_or(0, Vec::len);
    if n == 0 || width == 0 || (label_column && width < 2) {
        return Err(Error::format(None, "CSV holds no usable samples"));
    }
    let d = if label_column { width - 1 } else { width };
    let x = DenseMatrix::from_fn(d, n, |i, j| samples[j][i]);
    let y = label_column.then(|| DenseMatrix::from_fn(1, n, |_, j| samples[j][d]));
    Dataset::new(x, y, path.display().to_string())
}

/// Writes one sample per row, inputs then targets. Values are printed in
/// their shortest round-trip form, so [`load_csv`] recovers them bitwise.
pub fn write_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for j in 0..ds.len() {
        let mut cells: Vec<String> = ds.x.column(j).iter().map(|v| v.to_string()).collect();
        if let Some(y) = &ds.y {
            cells.extend(y.column(j).iter().map(|v| v.to_string()));
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Columns drawn i.i.d. from `N(0, Q diag(spectrum) Qᵀ)` with a seeded
/// random orthogonal `Q`.
pub fn synthesize_gaussian(d: usize, n: usize, covariance_spectrum: &[f64], seed: u64) -> Result<Dataset> {
    if covariance_spectrum.len() != d {
        return Err(Error::Dimension(format!(
            "spectrum has {} values for d = {d}",
            covariance_spectrum.len()
        )));
    }
    if let Some(bad) = covariance_spectrum.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!("covariance eigenvalue {bad} is negative")));
    }
    let mut rng = rng_from_seed(seed);
    let q = random_orthogonal(d, &mut rng);
    let g = gaussian_matrix(d, n, 1.0, &mut rng);
    let roots: Vec<f64> = covariance_spectrum.iter().map(|v| v.sqrt()).collect();
    let mixing = DenseMatrix::from_fn(d, d, |i, j| q[(i, j)] * roots[j]);
    Dataset::new(&mixing * &g, None, format!("gaussian-d{d}-n{n}-s{seed}"))
}

/// Averages non-overlapping `factor x factor` blocks of each channel. Inputs
/// are laid out channel-major, rows then columns within a channel.
pub fn avg_pool_downsample(ds: &Dataset, h: usize, w: usize, factor: usize) -> Result<Dataset> {
    if h == 0 || w == 0 || factor == 0 || ds.dim() % (h * w) != 0 {
        return Err(Error::Shape(format!(
            "d = {} is not channels x {h} x {w}",
            ds.dim()
        )));
    }
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::Shape(format!("{h}x{w} is not divisible by {factor}")));
    }
    let channels = ds.dim() / (h * w);
    let (oh, ow) = (h / factor, w / factor);
    let inv = 1.0 / (factor * factor) as f64;
    let x = DenseMatrix::from_fn(channels * oh * ow, ds.len(), |out, s| {
        let c = out / (oh * ow);
        let (r, col) = ((out % (oh * ow)) / ow, out % ow);
        let mut acc = 0.0;
        for dr in 0..factor {
            for dc in 0..factor {
                acc += ds.x[(c * h * w + (r * factor + dr) * w + col * factor + dc, s)];
            }
        }
        acc * inv
    });
    Dataset::new(x, ds.y.clone(), format!("{}+pool{factor}", ds.name))
}
