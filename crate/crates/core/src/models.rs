//! Sparse coefficient laws and noiseless signal generation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dictionary::Dictionary;
use crate::error::{invalid, Result};

/// Coefficient-generation law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparsityModel {
    /// Uniformly random size-`s` support, standard normal values on it.
    SG(usize),
    /// Each entry independently nonzero with probability `p`, standard normal when nonzero.
    BG(f64),
}

impl SparsityModel {
    pub fn validate(&self, k: usize) -> Result<()> {
        match *self {
            SparsityModel::SG(s) if s == 0 || s > k => invalid(format!("SG(s): s={s} out of [1, {k}]")),
            SparsityModel::BG(p) if !(p > 0.0 && p <= 1.0) => invalid(format!("BG(p): p={p} out of (0, 1]")),
            _ => Ok(()),
        }
    }

    /// `s = K` or `p = 1`.
    pub fn is_non_sparse(&self, k: usize) -> bool {
        match *self {
            SparsityModel::SG(s) => s == k,
            SparsityModel::BG(p) => p >= 1.0,
        }
    }

    /// Expected fraction of nonzero coefficients (`s/K` or `p`).
    pub fn fraction(&self, k: usize) -> f64 {
        match *self {
            SparsityModel::SG(s) => s as f64 / k as f64,
            SparsityModel::BG(p) => p,
        }
    }

    /// The sparsity parameter as a real (`s` or `p`).
    pub fn parameter(&self) -> f64 {
        match *self {
            SparsityModel::SG(s) => s as f64,
            SparsityModel::BG(p) => p,
        }
    }
}

impl std::fmt::Display for SparsityModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SparsityModel::SG(s) => write!(f, "sg:{s}"),
            SparsityModel::BG(p) => write!(f, "bg:{p}"),
        }
    }
}

impl std::str::FromStr for SparsityModel {
    type Err = crate::Error;

    /// Parses `sg:<s>` or `bg:<p>`.
    fn from_str(text: &str) -> Result<Self> {
        let parse_err = || crate::Error::Parse(format!("model must be sg:<s> or bg:<p>, got '{text}'"));
        let (kind, value) = text.trim().split_once(':').ok_or_else(parse_err)?;
        match kind.to_ascii_lowercase().as_str() {
            "sg" => Ok(SparsityModel::SG(value.trim().parse().map_err(|_| parse_err())?)),
            "bg" => Ok(SparsityModel::BG(value.trim().parse().map_err(|_| parse_err())?)),
            _ => Err(parse_err()),
        }
    }
}

/// Noiseless signals `x_i = D0 α_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBatch {
    /// `K × N`, one signal per column.
    pub signals: DMatrix<f64>,
    /// `N × K`, row `i` is `α_i`.
    pub coefficients: DMatrix<f64>,
    pub model: SparsityModel,
    pub seed: u64,
}

impl SignalBatch {
    pub fn n(&self) -> usize {
        self.signals.ncols()
    }

    pub fn k(&self) -> usize {
        self.signals.nrows()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent seed for the substream addressed by `path`
/// (e.g. `[mu_index, sparsity_index, batch]`).
pub fn substream_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `n` coefficient vectors as the rows of an `n × K` matrix.
pub fn sample_coefficients(k: usize, model: SparsityModel, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if k == 0 {
        return invalid("K must be positive");
    }
    model.validate(k)?;
    let mut rng = rng_from_seed(seed);
    let mut out = DMatrix::zeros(n, k);
    match model {
        SparsityModel::SG(s) => {
            let mut idx: Vec<usize> = (0..k).collect();
            for row in 0..n {
                // Partial Fisher–Yates: the first s slots form a uniform s-subset.
                for t in 0..s {
                    let j = rng.random_range(t..k);
                    idx.swap(t, j);
                }
                for &j in &idx[..s] {
                    out[(row, j)] = rng.sample(StandardNormal);
                }
            }
        }
        SparsityModel::BG(p) => {
            for row in 0..n {
                for j in 0..k {
                    if rng.random::<f64>() < p {
                        out[(row, j)] = rng.sample(StandardNormal);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `x_i = D0 α_i` for `n` coefficient draws.
pub fn generate_signals(d0: &Dictionary, model: SparsityModel, n: usize, seed: u64) -> Result<SignalBatch> {
    let coefficients = sample_coefficients(d0.k(), model, n, seed)?;
    let signals = d0.matrix() * coefficients.transpose();
    Ok(SignalBatch { signals, coefficients, model, seed })
}
