//! CSV tables in the shared result schema.

use std::path::Path;

use csv::Writer;

pub const HEADER: [&str; 18] = [
    "experiment", "seed", "L", "m", "d", "k", "n", "beta", "alpha", "fraction", "epoch", "kappa",
    "bound_convex", "bound_max", "bound_other", "kappa_sigma", "rank_policy", "wall_ms",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub fraction: Option<f64>,
    pub epoch: Option<usize>,
    pub kappa: Option<f64>,
    pub bound_convex: Option<f64>,
    pub bound_max: Option<f64>,
    pub bound_other: Option<f64>,
    pub kappa_sigma: Option<f64>,
    pub rank_policy: Option<String>,
    pub wall_ms: Option<f64>,
}

fn cell<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

impl ResultRow {
    pub fn record(&self) -> [String; 18] {
        [
            self.experiment.clone(),
            cell(&self.seed),
            cell(&self.depth),
            cell(&self.width),
            cell(&self.d),
            cell(&self.k),
            cell(&self.n),
            cell(&self.beta),
            cell(&self.alpha),
            cell(&self.fraction),
            cell(&self.epoch),
            cell(&self.kappa),
            cell(&self.bound_convex),
            cell(&self.bound_max),
            cell(&self.bound_other),
            cell(&self.kappa_sigma),
            cell(&self.rank_policy),
            cell(&self.wall_ms),
        ]
    }
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> std::io::Result<()> {
    let mut w = Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()
}

/// Writes an arbitrary table with the given header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}
