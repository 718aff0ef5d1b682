use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dictionary::{constant_mu_gram, minimal_mu_gram, GramMatrix};
use crate::error::{Error, Result};
use crate::identifiability::Method;
use crate::models::SparsityModel;
use crate::objective::DescentConfig;

use super::io::read_gram_file;

/// One-parameter dictionary family swept along the `mu` axis.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `μ11ᵀ + (1−μ)I`.
    ConstantMu,
    /// Identity with a single off-diagonal pair `μ`.
    MinimalMu,
    /// `I + μ(G − I)` for a Gram matrix `G` read from a file.
    GramFile(GramMatrix),
}

impl Family {
    pub fn gram(&self, k: usize, mu: f64) -> Result<GramMatrix> {
        match self {
            Family::ConstantMu => constant_mu_gram(k, mu),
            Family::MinimalMu => minimal_mu_gram(k, mu),
            Family::GramFile(g) => {
                if g.k() != k {
                    return Err(Error::DimensionMismatch { expected: k, got: g.k() });
                }
                let id = nalgebra::DMatrix::<f64>::identity(k, k);
                GramMatrix::new(&id + (g.matrix() - &id) * mu)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::ConstantMu => "constant_mu",
            Family::MinimalMu => "minimal_mu",
            Family::GramFile(_) => "gram_file",
        }
    }

    /// Parses `constant_mu`, `minimal_mu`, or `gram_file` (with the Gram at `path`).
    pub fn parse(name: &str, path: Option<&Path>) -> Result<Family> {
        match name.trim() {
            "constant_mu" => Ok(Family::ConstantMu),
            "minimal_mu" => Ok(Family::MinimalMu),
            "gram_file" => {
                let p = path.ok_or_else(|| Error::Parse("family gram_file needs a gram_file path".into()))?;
                Ok(Family::GramFile(read_gram_file(p)?))
            }
            other => Err(Error::Parse(format!("family must be constant_mu, minimal_mu or gram_file, got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SG,
    BG,
}

impl ModelKind {
    pub fn model(self, value: f64) -> Result<SparsityModel> {
        match self {
            ModelKind::SG => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::Parse(format!("SG sparsity must be a positive integer, got {value}")));
                }
                Ok(SparsityModel::SG(value as usize))
            }
            ModelKind::BG => Ok(SparsityModel::BG(value)),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sg" => Ok(ModelKind::SG),
            "bg" => Ok(ModelKind::BG),
            other => Err(Error::Parse(format!("model must be sg or bg, got '{other}'"))),
        }
    }
}

/// A phase-diagram sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGridConfig {
    pub k: usize,
    pub family: Family,
    pub mu_values: Vec<f64>,
    pub sparsity_values: Vec<f64>,
    pub model_kind: ModelKind,
    pub n: usize,
    pub batches: usize,
    pub seed: u64,
    pub descent: DescentConfig,
    pub method: Method,
    pub error_threshold_low: f64,
    pub error_threshold_high: f64,
    /// Cells with `|theory_margin| ≤ margin_band` are left out of the agreement rate.
    pub margin_band: f64,
}

impl PhaseGridConfig {
    /// The constant-μ sweep at `K = 10`, `N = 2000`, ten batches: `μ ∈ {0, 0.05, …, 0.95}`
    /// and `s ∈ {1, …, 10}` (SG) or `p ∈ {0.1, …, 1}` (BG).
    pub fn reference(model_kind: ModelKind) -> Self {
        let sparsity_values = match model_kind {
            ModelKind::SG => (1..=10).map(|s| s as f64).collect(),
            ModelKind::BG => (1..=10).map(|i| i as f64 / 10.0).collect(),
        };
        PhaseGridConfig {
            k: 10,
            family: Family::ConstantMu,
            mu_values: (0..20).map(|i| i as f64 * 0.05).collect(),
            sparsity_values,
            model_kind,
            n: 2000,
            batches: 10,
            seed: 0,
            descent: DescentConfig::default(),
            method: Method::ExactDual,
            error_threshold_low: 1e-2,
            error_threshold_high: 1e-1,
            margin_band: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Parse(format!("config field '{field}': {why}")));
        if self.k < 2 {
            return bad("k", format!("must be at least 2, got {}", self.k));
        }
        if self.mu_values.is_empty() {
            return bad("mu_values", "must be nonempty".into());
        }
        if self.sparsity_values.is_empty() {
            return bad("sparsity_values", "must be nonempty".into());
        }
        for &v in &self.sparsity_values {
            if let Err(e) = self.model_kind.model(v).and_then(|m| m.validate(self.k)) {
                return bad("sparsity_values", e.to_string());
            }
        }
        for &mu in &self.mu_values {
            if let Err(e) = self.family.gram(self.k, mu) {
                return bad("mu_values", e.to_string());
            }
        }
        if self.n == 0 {
            return bad("n", "must be positive".into());
        }
        if self.batches == 0 {
            return bad("batches", "must be positive".into());
        }
        if let Err(e) = self.descent.validate() {
            return bad("descent", e.to_string());
        }
        if !(self.error_threshold_low > 0.0 && self.error_threshold_low < self.error_threshold_high) {
            return bad("error_threshold_low", "need 0 < error_threshold_low < error_threshold_high".into());
        }
        if !(self.margin_band >= 0.0) {
            return bad("margin_band", "must be nonnegative".into());
        }
        Ok(())
    }

    /// Parses the flat `key = value` format. Lists are comma separated or
    /// `start:step:stop` ranges; `#` starts a comment. Relative `gram_file`
    /// paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            kv.insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
        }
        let model_kind: ModelKind = kv.get("model").map(|s| s.parse()).transpose()?.unwrap_or(ModelKind::SG);
        let mut cfg = PhaseGridConfig::reference(model_kind);
        let gram_path = kv.get("gram_file").map(|p| {
            let p = PathBuf::from(p);
            match base_dir {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p,
            }
        });
        for (key, value) in &kv {
            let field = |what: &str| Error::Parse(format!("config field '{key}': cannot parse '{value}' as {what}"));
            match key.as_str() {
                "model" | "gram_file" => {}
                "k" => cfg.k = value.parse().map_err(|_| field("an integer"))?,
                "family" => cfg.family = Family::parse(value, gram_path.as_deref())?,
                "mu_values" => cfg.mu_values = parse_list(value).map_err(|_| field("a list of reals"))?,
                "sparsity_values" => cfg.sparsity_values = parse_list(value).map_err(|_| field("a list of reals"))?,
                "n" => cfg.n = value.parse().map_err(|_| field("an integer"))?,
                "batches" => cfg.batches = value.parse().map_err(|_| field("an integer"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| field("an unsigned integer"))?,
                "max_iters" => cfg.descent.max_iters = value.parse().map_err(|_| field("an integer"))?,
                "step0" => cfg.descent.step0 = value.parse().map_err(|_| field("a real"))?,
                "stop_tol" => cfg.descent.stop_tol = value.parse().map_err(|_| field("a real"))?,
                "singular_guard" => cfg.descent.singular_guard = value.parse().map_err(|_| field("a real"))?,
                "patience" => cfg.descent.patience = Some(value.parse().map_err(|_| field("an integer"))?),
                "method" => cfg.method = value.parse()?,
                "error_threshold_low" => cfg.error_threshold_low = value.parse().map_err(|_| field("a real"))?,
                "error_threshold_high" => cfg.error_threshold_high = value.parse().map_err(|_| field("a real"))?,
                "margin_band" => cfg.margin_band = value.parse().map_err(|_| field("a real"))?,
                other => return Err(Error::Parse(format!("unknown config field '{other}'"))),
            }
        }
        if matches!(cfg.family, Family::GramFile(_)) && !kv.contains_key("k") {
            if let Family::GramFile(g) = &cfg.family {
                cfg.k = g.k();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        PhaseGridConfig::parse(&text, path.parent())
    }
}

/// Comma-separated reals, or an inclusive `start:step:stop` range.
pub fn parse_list(value: &str) -> Result<Vec<f64>> {
    let err = || Error::Parse(format!("cannot parse list '{value}'"));
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts.iter().map(|p| p.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| err())?;
        let (start, step, stop) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || stop < start {
            return Err(err());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // Index-based so values carry no accumulated round-off beyond one product.
        return Ok((0..count).map(|i| start + i as f64 * step).collect());
    }
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| err()))
        .collect()
}
