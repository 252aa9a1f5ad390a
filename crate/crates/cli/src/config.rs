//! Experiment configuration: one JSON document, parsed with line-referenced
//! errors and validated against the ranges the library accepts.

use std::fs;
use std::path::{Path, PathBuf};

use haarweights::conditions::RH_LADDER;
use haarweights::dyadic::{Mesh, Window};
use haarweights::hilbert_avg::{default_window, LevelSpan, DEFAULT_EVAL_DEPTH};
use haarweights::seeds::substream;
use haarweights::weights::{generate, MatrixWeight, WeightKind};
use serde::Deserialize;

/// A problem with the configuration, reported with exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// A weight given inline as a generator description or as a path to a weight file.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum WeightSource {
    File { file: PathBuf },
    Generated(WeightKind),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HilbertConfig {
    #[serde(default = "default_window")]
    pub window: Window,
    #[serde(default = "default_eval_depth")]
    pub eval_depth: u32,
    /// Depth of the mesh carrying the weights for the weighted scan.
    #[serde(default = "default_scan_depth")]
    pub scan_depth: u32,
    #[serde(default)]
    pub levels: LevelSpan,
    #[serde(default = "default_num_grids")]
    pub num_grids: usize,
}

impl Default for HilbertConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            eval_depth: DEFAULT_EVAL_DEPTH,
            scan_depth: default_scan_depth(),
            levels: LevelSpan::default(),
            num_grids: default_num_grids(),
        }
    }
}

fn default_eval_depth() -> u32 {
    DEFAULT_EVAL_DEPTH
}
fn default_scan_depth() -> u32 {
    6
}
fn default_num_grids() -> usize {
    20
}
fn default_dim() -> usize {
    1
}
fn default_depth() -> u32 {
    5
}
fn default_unit() -> Window {
    Window::unit()
}
fn default_ladder() -> Vec<f64> {
    RH_LADDER.to_vec()
}
fn default_rh_budget() -> f64 {
    2.0
}
fn default_num_sigma() -> usize {
    16
}
fn default_num_samples() -> usize {
    20000
}
fn default_directions() -> usize {
    64
}
fn default_k_max() -> usize {
    64
}
fn default_band_radius() -> u32 {
    2
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "N", alias = "dim", default = "default_dim")]
    pub dim: usize,
    #[serde(rename = "D", alias = "depth", default = "default_depth")]
    pub depth: u32,
    #[serde(default = "default_unit")]
    pub window: Window,
    #[serde(rename = "U")]
    pub u: WeightSource,
    /// Defaults to `U`.
    #[serde(rename = "V", default)]
    pub v: Option<WeightSource>,
    /// Stopping threshold; defaults to `1.5·N·(2 + C)` with `C` the joint A₂ constant.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_ladder")]
    pub r_ladder: Vec<f64>,
    /// Reverse Hölder budget used to pick the reported exponent.
    #[serde(default = "default_rh_budget")]
    pub rh_budget: f64,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_num_sigma")]
    pub num_sigma: usize,
    #[serde(default = "default_num_samples")]
    pub num_samples: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_band_radius")]
    pub band_radius: u32,
    #[serde(default)]
    pub hilbert: HilbertConfig,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Directory that relative weight file paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    text: String,
    /// Prefix of error messages, normally the config path.
    #[serde(skip)]
    source: String,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse_named(&text, &path.display().to_string())?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    /// Parses and validates; messages start with `line:column:`.
    #[cfg(test)]
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_named(text, "")
    }

    fn parse_named(text: &str, source: &str) -> Result<Self, ConfigError> {
        let prefix = if source.is_empty() { String::new() } else { format!("{source}:") };
        let mut config: Self = serde_json::from_str(text)
            .map_err(|e| ConfigError(format!("{prefix}{}:{}: {e}", e.line(), e.column())))?;
        config.text = text.to_string();
        config.source = prefix;
        config.validate()?;
        Ok(config)
    }

    /// `line:column: message` pointing at the first occurrence of `key`.
    fn error_at(&self, key: &str, message: String) -> ConfigError {
        let needle = format!("\"{key}\"");
        match self.text.lines().enumerate().find_map(|(n, l)| l.find(&needle).map(|c| (n + 1, c + 1))) {
            Some((line, col)) => ConfigError(format!("{}{line}:{col}: {message}", self.source)),
            None => ConfigError(format!("{}1:1: {message}", self.source)),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim == 0 || self.dim > 8 {
            return Err(self.error_at("N", format!("N must be in 1..=8, got {}", self.dim)));
        }
        if self.depth > 10 {
            return Err(self.error_at("D", format!("D must be at most 10, got {}", self.depth)));
        }
        if !(self.window.start < self.window.end) {
            return Err(self.error_at("window", "window must have start < end".into()));
        }
        if let Some(l) = self.lambda {
            if !(l > 1.0 && l.is_finite()) {
                return Err(self.error_at("lambda", format!("lambda must exceed 1, got {l}")));
            }
        }
        if self.r_ladder.is_empty() || self.r_ladder.iter().any(|r| !(*r > 2.0 && r.is_finite())) {
            return Err(self.error_at("r_ladder", "r_ladder needs exponents above 2".into()));
        }
        if !(self.rh_budget > 1.0) {
            return Err(self.error_at("rh_budget", format!("rh_budget must exceed 1, got {}", self.rh_budget)));
        }
        if self.num_sigma == 0 {
            return Err(self.error_at("num_sigma", "num_sigma must be at least 1".into()));
        }
        if self.num_samples == 0 {
            return Err(self.error_at("num_samples", "num_samples must be at least 1".into()));
        }
        if self.k_max == 0 {
            return Err(self.error_at("k_max", "k_max must be at least 1".into()));
        }
        let h = &self.hilbert;
        if h.eval_depth > 12 {
            return Err(self.error_at("eval_depth", format!("eval_depth must be at most 12, got {}", h.eval_depth)));
        }
        if h.scan_depth > 8 {
            return Err(self.error_at("scan_depth", format!("scan_depth must be at most 8, got {}", h.scan_depth)));
        }
        if h.levels.coarsest >= h.levels.finest {
            return Err(self.error_at("levels", "levels need coarsest < finest".into()));
        }
        if h.num_grids == 0 {
            return Err(self.error_at("num_grids", "num_grids must be at least 1".into()));
        }
        if !(h.window.start <= 0.0 && h.window.end >= 1.0) {
            return Err(self.error_at("hilbert", "the Hilbert window must contain [0, 1)".into()));
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh, ConfigError> {
        Mesh::new(self.window, self.depth).map_err(|e| self.error_at("window", e.to_string()))
    }

    fn load_weight(&self, source: &WeightSource, mesh: Mesh, key: &str) -> Result<MatrixWeight, ConfigError> {
        let w = match source {
            WeightSource::File { file } => {
                let path = self.base_dir.join(file);
                let text = fs::read_to_string(&path).map_err(|e| self.error_at(key, format!("{}: {e}", path.display())))?;
                MatrixWeight::from_json(&text).map_err(|e| self.error_at(key, format!("{}: {e}", path.display())))?
            }
            WeightSource::Generated(kind) => generate(kind, self.dim, mesh, substream(self.seed, &format!("weight.{key}")))
                .map_err(|e| self.error_at(key, e.to_string()))?,
        };
        if w.mesh() != &mesh || w.dim() != self.dim {
            return Err(self.error_at(
                key,
                format!(
                    "weight lives on depth {} with N = {}, the experiment uses depth {} with N = {}",
                    w.mesh().depth,
                    w.dim(),
                    mesh.depth,
                    self.dim
                ),
            ));
        }
        Ok(w)
    }

    /// `(U, V)` on the given mesh.
    pub fn weights_on(&self, mesh: Mesh) -> Result<(MatrixWeight, MatrixWeight), ConfigError> {
        let u = self.load_weight(&self.u, mesh, "U")?;
        let v = match &self.v {
            Some(src) => self.load_weight(src, mesh, "V")?,
            None => u.clone(),
        };
        Ok((u, v))
    }

    pub fn weights(&self) -> Result<(MatrixWeight, MatrixWeight), ConfigError> {
        self.weights_on(self.mesh()?)
    }

    /// Named sub-stream of the top-level seed.
    pub fn stream(&self, name: &str) -> u64 {
        substream(self.seed, name)
    }
}
