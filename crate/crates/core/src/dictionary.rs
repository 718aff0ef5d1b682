//! Dictionaries on the oblique manifold, their Gram (collinearity) matrices,
//! canonical dictionary families, and distance modulo sign-permutation.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::hungarian::hungarian_min;

/// Tolerance on `‖D[,k]‖₂ = 1`.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Full rank means `σ_min > RANK_RTOL · σ_max`.
pub const RANK_RTOL: f64 = 1e-10;
/// Tolerance for Gram diagonal, symmetry and positive semidefiniteness.
pub const GRAM_TOL: f64 = 1e-10;

/// A complete (square, full rank) dictionary whose columns have unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    mat: DMatrix<f64>,
}

impl Dictionary {
    /// Validates unit columns and full rank.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch { expected: mat.nrows(), got: mat.ncols() });
        }
        if mat.nrows() == 0 {
            return invalid("dictionary must have at least one atom");
        }
        for (k, col) in mat.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotUnitNorm { column: k, norm });
            }
        }
        check_full_rank(&mat)?;
        Ok(Dictionary { mat })
    }

    /// Rescales every column to unit norm, then validates.
    pub fn normalized(mut mat: DMatrix<f64>) -> Result<Self> {
        normalize_columns(&mut mat);
        Dictionary::new(mat)
    }

    pub fn identity(k: usize) -> Self {
        Dictionary { mat: DMatrix::identity(k, k) }
    }

    /// Caller guarantees unit columns and full rank.
    pub(crate) fn from_parts_unchecked(mat: DMatrix<f64>) -> Self {
        Dictionary { mat }
    }

    /// Symmetric square root of the Gram matrix: `D = M0^{1/2}`, so `DᵀD = M0`.
    pub fn from_gram(gram: &GramMatrix) -> Result<Self> {
        let eig = SymmetricEigen::new(gram.mat.clone());
        let k = gram.k();
        let mut sqrt_vals = eig.eigenvalues.clone();
        for v in sqrt_vals.iter_mut() {
            *v = v.max(0.0).sqrt();
        }
        let q = &eig.eigenvectors;
        let mut mat = q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose();
        // Round-off leaves the columns unit only to ~1e-15.
        normalize_columns(&mut mat);
        debug_assert_eq!(mat.nrows(), k);
        Dictionary::new(mat)
    }

    /// Number of atoms.
    pub fn k(&self) -> usize {
        self.mat.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.mat.clone().try_inverse().ok_or(Error::RankDeficient { sigma_min: 0.0, sigma_max: 0.0 })
    }

    pub fn min_singular_value(&self) -> f64 {
        self.mat.singular_values().min()
    }

    /// `D·P·Λ`: column `k` of the result is `signs[k] · D[, perm[k]]`.
    pub fn apply(&self, sp: &SignedPermutation) -> Result<Dictionary> {
        if sp.len() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), got: sp.len() });
        }
        let mut out = DMatrix::zeros(self.k(), self.k());
        for k in 0..self.k() {
            out.set_column(k, &(self.mat.column(sp.perm[k]) * f64::from(sp.signs[k])));
        }
        Ok(Dictionary { mat: out })
    }
}

pub(crate) fn normalize_columns(mat: &mut DMatrix<f64>) {
    for mut col in mat.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
}

fn check_full_rank(mat: &DMatrix<f64>) -> Result<()> {
    let sv = mat.singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    if !(sigma_min > RANK_RTOL * sigma_max) || !sigma_min.is_finite() {
        return Err(Error::RankDeficient { sigma_min, sigma_max });
    }
    Ok(())
}

/// Collinearity matrix `M0 = D0ᵀD0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    mat: DMatrix<f64>,
}

impl GramMatrix {
    /// Validates unit diagonal, symmetry, off-diagonals strictly inside (-1,1)
    /// and positive semidefiniteness. The stored matrix is exactly symmetric.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let k = mat.nrows();
        if k != mat.ncols() {
            return Err(Error::DimensionMismatch { expected: k, got: mat.ncols() });
        }
        if k == 0 {
            return Err(Error::InvalidGram("empty matrix".into()));
        }
        for i in 0..k {
            if (mat[(i, i)] - 1.0).abs() > GRAM_TOL {
                return Err(Error::InvalidGram(format!("diagonal entry {i} is {}", mat[(i, i)])));
            }
            for j in 0..i {
                if (mat[(i, j)] - mat[(j, i)]).abs() > GRAM_TOL {
                    return Err(Error::InvalidGram(format!("not symmetric at ({i},{j})")));
                }
                if mat[(i, j)].abs() >= 1.0 || !mat[(i, j)].is_finite() {
                    return Err(Error::InvalidGram(format!(
                        "off-diagonal ({i},{j}) = {} has magnitude >= 1",
                        mat[(i, j)]
                    )));
                }
            }
        }
        let mut sym = (&mat + mat.transpose()) * 0.5;
        sym.fill_diagonal(1.0);
        let min_eig = SymmetricEigen::new(sym.clone()).eigenvalues.min();
        if min_eig < -GRAM_TOL {
            return Err(Error::InvalidGram(format!("not positive semidefinite (min eigenvalue {min_eig:e})")));
        }
        Ok(GramMatrix { mat: sym })
    }

    pub fn identity(k: usize) -> Self {
        GramMatrix { mat: DMatrix::identity(k, k) }
    }

    pub fn k(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// `M0[-j, j]`: column `j` without its diagonal entry.
    pub fn column_without_diagonal(&self, j: usize) -> Vec<f64> {
        (0..self.k()).filter(|&i| i != j).map(|i| self.mat[(i, j)]).collect()
    }

    /// `max_{i≠j} |M0[i,j]|`.
    pub fn mutual_coherence(&self) -> f64 {
        let k = self.k();
        let mut best = 0.0f64;
        for j in 0..k {
            for i in 0..k {
                if i != j {
                    best = best.max(self.mat[(i, j)].abs());
                }
            }
        }
        best
    }

    pub fn is_identity(&self) -> bool {
        self.mutual_coherence() == 0.0
    }
}

/// A column permutation combined with column sign flips.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedPermutation {
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
}

impl SignedPermutation {
    pub fn new(perm: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        if perm.len() != signs.len() {
            return Err(Error::DimensionMismatch { expected: perm.len(), got: signs.len() });
        }
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return invalid("perm is not a bijection");
            }
            seen[p] = true;
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return invalid("signs must be +1 or -1");
        }
        Ok(SignedPermutation { perm, signs })
    }

    pub fn identity(k: usize) -> Self {
        SignedPermutation { perm: (0..k).collect(), signs: vec![1; k] }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

/// `DᵀD`. Fails when `D` is rank deficient.
pub fn gram(d: &Dictionary) -> Result<GramMatrix> {
    check_full_rank(&d.mat)?;
    GramMatrix::new(d.mat.tr_mul(&d.mat))
}

fn check_constant_mu(k: usize, mu: f64) -> Result<()> {
    if k == 0 {
        return invalid("K must be positive");
    }
    let lower = if k > 1 { -1.0 / (k as f64 - 1.0) } else { -1.0 };
    if !(mu > lower && mu < 1.0) {
        return invalid(format!("constant inner product mu={mu} must lie in ({lower}, 1) for K={k}"));
    }
    Ok(())
}

/// `μ11ᵀ + (1-μ)I`.
pub fn constant_mu_gram(k: usize, mu: f64) -> Result<GramMatrix> {
    check_constant_mu(k, mu)?;
    let mut mat = DMatrix::from_element(k, k, mu);
    mat.fill_diagonal(1.0);
    GramMatrix::new(mat)
}

/// A dictionary whose atoms all have pairwise inner product `mu`.
pub fn constant_mu_dictionary(k: usize, mu: f64) -> Result<Dictionary> {
    Dictionary::from_gram(&constant_mu_gram(k, mu)?)
}

/// Identity except `M0[0,1] = M0[1,0] = mu`.
pub fn minimal_mu_gram(k: usize, mu: f64) -> Result<GramMatrix> {
    if !(mu.abs() < 1.0) {
        return invalid(format!("|mu| must be < 1, got {mu}"));
    }
    let mut mat = DMatrix::identity(k, k);
    if k >= 2 {
        mat[(0, 1)] = mu;
        mat[(1, 0)] = mu;
    } else if mu != 0.0 {
        return invalid("minimal-mu family needs K >= 2");
    }
    GramMatrix::new(mat)
}

/// Signed permutation `P·Λ` such that `Db·P·Λ` is closest to `Da` in Frobenius norm.
pub fn best_signed_permutation(da: &Dictionary, db: &Dictionary) -> Result<SignedPermutation> {
    let k = da.k();
    if db.k() != k {
        return Err(Error::DimensionMismatch { expected: k, got: db.k() });
    }
    let corr = da.mat.tr_mul(&db.mat);
    let cost: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| -corr[(i, j)].abs()).collect()).collect();
    let perm = hungarian_min(&cost);
    let signs = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| if corr[(i, j)] < 0.0 { -1 } else { 1 })
        .collect();
    Ok(SignedPermutation { perm, signs })
}

/// `min_{P,Λ} ‖Da − Db·P·Λ‖_F` over signed permutations.
pub fn dictionary_distance(da: &Dictionary, db: &Dictionary) -> Result<f64> {
    let sp = best_signed_permutation(da, db)?;
    let aligned = db.apply(&sp)?;
    Ok((&da.mat - &aligned.mat).norm())
}
