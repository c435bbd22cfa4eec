//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use gn_lens::spectral::RankPolicy;

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key `{k}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Linear,
    Residual,
    Leaky,
    BatchNorm,
    Conv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Gaussian samples whose covariance eigenvalues decay geometrically
    /// over `decay` decades.
    Synthetic { d: usize, n: usize, decay: f64 },
    Idx { images: PathBuf, labels: Option<PathBuf>, limit: usize },
    Csv { path: PathBuf, label_column: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitChoice {
    Kaiming,
    Xavier,
    Gaussian(f64),
    AlignedUniform { low: f64, high: f64 },
    AlignedAbsGaussian(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub data: DataSource,
    pub data_seed: u64,
    pub whiten: bool,
    pub eigen_floor: f64,
    pub kind: Kind,
    pub depth: Vec<usize>,
    pub width: Vec<usize>,
    /// When set, hidden width is `width_per_layer * L` and `width` is ignored.
    pub width_per_layer: Option<usize>,
    pub k: usize,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub kernel: Vec<usize>,
    pub filters: Vec<usize>,
    pub init: InitChoice,
    pub seeds: Vec<u64>,
    pub bounds: bool,
    pub rank_policy: Option<RankPolicy>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub trace_every: usize,
    pub fractions: Vec<f64>,
    pub out: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "name", "data", "data_path", "labels_path", "limit", "label_column", "d", "n", "decay",
    "data_seed", "whiten", "eigen_floor", "kind", "depth", "width", "width_per_layer", "k", "beta",
    "alpha", "kernel", "filters", "init", "seeds", "bounds", "rank_policy", "learning_rate",
    "batch_size", "epochs", "trace_every", "fractions", "out",
];

struct Raw {
    values: BTreeMap<String, (usize, String)>,
    base: PathBuf,
}

impl Raw {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.values.get(key).map(|(l, _)| *l),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.str(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.err(key, format!("cannot parse `{v}`"))),
        }
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let v = self.str(key).ok_or_else(|| ConfigError {
            line: None,
            key: Some(key.into()),
            message: "required key is missing".into(),
        })?;
        v.parse().map_err(|_| self.err(key, format!("cannot parse `{v}`")))
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.str(key) {
            None => Ok(default),
            Some("true" | "on" | "yes" | "1") => Ok(true),
            Some("false" | "off" | "no" | "0") => Ok(false),
            Some(v) => Err(self.err(key, format!("`{v}` is not a boolean"))),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.str(key).map(|p| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                self.base.join(p)
            }
        })
    }

    fn list<T: std::str::FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError> {
        let Some(v) = self.str(key) else { return Ok(default) };
        let items: Result<Vec<T>, _> = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| self.err(key, format!("cannot parse list item `{s}`"))))
            .collect();
        let items = items?;
        if items.is_empty() {
            return Err(self.err(key, "list is empty"));
        }
        Ok(items)
    }

    /// Comma list whose items may also be inclusive ranges `a:b` or `a:b:step`.
    fn int_list(&self, key: &str, default: Vec<u64>) -> Result<Vec<u64>, ConfigError> {
        let Some(v) = self.str(key) else { return Ok(default) };
        let mut out = Vec::new();
        for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let parts: Result<Vec<u64>, _> = item.split(':').map(|p| p.trim().parse::<u64>()).collect();
            let parts = parts.map_err(|_| self.err(key, format!("cannot parse `{item}`")))?;
            match parts.as_slice() {
                [x] => out.push(*x),
                [a, b] | [a, b, _] if a > b => {
                    return Err(self.err(key, format!("range `{item}` is empty")));
                }
                [a, b] => out.extend(*a..=*b),
                [_, _, 0] => return Err(self.err(key, format!("range `{item}` has step 0"))),
                [a, b, s] => out.extend((*a..=*b).step_by(*s as usize)),
                _ => return Err(self.err(key, format!("malformed range `{item}`"))),
            }
        }
        if out.is_empty() {
            return Err(self.err(key, "list is empty"));
        }
        Ok(out)
    }

    fn usize_list(&self, key: &str, default: Vec<usize>) -> Result<Vec<usize>, ConfigError> {
        Ok(self
            .int_list(key, default.into_iter().map(|v| v as u64).collect())?
            .into_iter()
            .map(|v| v as usize)
            .collect())
    }
}

impl ExperimentConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: PathBuf) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError {
                line: Some(line),
                key: None,
                message: format!("expected key = value, got `{content}`"),
            })?;
            let key = key.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError { line: Some(line), key: Some(key), message: "unknown key".into() });
            }
            if values.contains_key(&key) {
                return Err(ConfigError { line: Some(line), key: Some(key), message: "duplicate key".into() });
            }
            values.insert(key, (line, value.trim().to_string()));
        }
        Raw { values, base }.build()
    }
}

impl Raw {
    fn build(&self) -> Result<ExperimentConfig, ConfigError> {
        let data = match self.str("data").unwrap_or("synthetic") {
            "synthetic" => DataSource::Synthetic {
                d: self.required("d")?,
                n: self.required("n")?,
                decay: self.parse("decay", 0.0)?,
            },
            "idx" => DataSource::Idx {
                images: self.path("data_path").ok_or_else(|| self.err("data", "idx data needs data_path"))?,
                labels: self.path("labels_path"),
                limit: self.parse("limit", 0)?,
            },
            "csv" => DataSource::Csv {
                path: self.path("data_path").ok_or_else(|| self.err("data", "csv data needs data_path"))?,
                label_column: self.bool("label_column", false)?,
            },
            other => return Err(self.err("data", format!("unknown data source `{other}`"))),
        };
        let kind = match self.str("kind").unwrap_or("linear") {
            "linear" => Kind::Linear,
            "residual" => Kind::Residual,
            "leaky" => Kind::Leaky,
            "bn" | "batch_norm" => Kind::BatchNorm,
            "conv" => Kind::Conv,
            other => return Err(self.err("kind", format!("unknown network kind `{other}`"))),
        };
        let init = self.init()?;
        let rank_policy = match self.str("rank_policy") {
            None | Some("default") => None,
            Some(v) => Some(v.parse().map_err(|e| self.err("rank_policy", format!("{e}")))?),
        };
        let cfg = ExperimentConfig {
            name: self.str("name").unwrap_or("experiment").to_string(),
            data,
            data_seed: self.parse("data_seed", 0)?,
            whiten: self.bool("whiten", false)?,
            eigen_floor: self.parse("eigen_floor", gn_lens::data::DEFAULT_EIGEN_FLOOR)?,
            kind,
            depth: self.usize_list("depth", vec![2])?,
            width: self.usize_list("width", vec![16])?,
            width_per_layer: self.str("width_per_layer").map(|_| self.required("width_per_layer")).transpose()?,
            k: self.parse("k", 1)?,
            beta: self.list("beta", vec![0.0])?,
            alpha: self.list("alpha", vec![0.01])?,
            kernel: self.usize_list("kernel", vec![3])?,
            filters: self.usize_list("filters", vec![4])?,
            init,
            seeds: self.int_list("seeds", vec![0])?,
            bounds: self.bool("bounds", true)?,
            rank_policy,
            learning_rate: self.parse("learning_rate", 0.05)?,
            batch_size: self.parse("batch_size", 0)?,
            epochs: self.parse("epochs", 100)?,
            trace_every: self.parse("trace_every", 10)?,
            fractions: self.list("fractions", vec![0.0])?,
            out: self.path("out"),
        };
        if cfg.k == 0 {
            return Err(self.err("k", "output dimension must be positive"));
        }
        if cfg.trace_every == 0 {
            return Err(self.err("trace_every", "must be at least 1"));
        }
        if let Some(&f) = cfg.fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
            return Err(self.err("fractions", format!("fraction {f} is outside [0, 1)")));
        }
        if cfg.depth.contains(&0) {
            return Err(self.err("depth", "depth must be at least 1"));
        }
        Ok(cfg)
    }

    fn init(&self) -> Result<InitChoice, ConfigError> {
        let v = self.str("init").unwrap_or("kaiming");
        let parts: Vec<&str> = v.split(':').map(str::trim).collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| self.err("init", format!("cannot parse `{s}`")));
        Ok(match parts.as_slice() {
            ["kaiming"] => InitChoice::Kaiming,
            ["xavier"] => InitChoice::Xavier,
            ["gaussian", s] => InitChoice::Gaussian(num(s)?),
            ["aligned_uniform", lo, hi] => InitChoice::AlignedUniform { low: num(lo)?, high: num(hi)? },
            ["aligned_abs_gaussian", s] => InitChoice::AlignedAbsGaussian(num(s)?),
            _ => return Err(self.err("init", format!("unknown init `{v}`"))),
        })
    }
}
