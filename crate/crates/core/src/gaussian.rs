//! Information-form ("canonical") Gaussians over ordered sets of variable blocks.
//!
//! A [`CanonicalGaussian`] stores the information vector `ζ = Σ⁻¹μ` and the
//! information matrix `Λ = Σ⁻¹`. Products of densities are sums of their
//! canonical parameters, which is what makes factor graphs over Gaussians cheap
//! to assemble. Individual factors may carry indefinite or rank-deficient
//! information matrices; only full joints are required to be positive definite.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eliminated blocks whose condition number exceeds this are regularized.
pub const REGULARIZE_CONDITION: f64 = 1e12;
/// Diagonal loading applied to ill-conditioned eliminated blocks.
pub const REGULARIZATION: f64 = 1e-9;
/// Beyond this condition number (after regularization) elimination fails.
pub const HARD_CONDITION_LIMIT: f64 = 1e15;
/// Eigenvalues of `Λ_sp` below this are treated as zero in `Λ_sp^{-1/2}`.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-10;
/// Slack allowed on every PSD guarantee.
pub const PSD_TOLERANCE: f64 = 1e-9;

const ASYMMETRY_TOLERANCE: f64 = 1e-8;
const LAMBDA_SNAP: f64 = 1e-13;
const LAMBDA_FLOOR: f64 = 1e-12;

/// What a variable block describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subject {
    Target(u32),
    Bias(u32),
    Label(u32),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Target(id) => write!(f, "target({id})"),
            Subject::Bias(id) => write!(f, "bias({id})"),
            Subject::Label(id) => write!(f, "label({id})"),
        }
    }
}

/// Time index of a variable block. Static blocks sort after every timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Timestep {
    At(u32),
    Static,
}

impl Timestep {
    pub fn is_static(self) -> bool {
        matches!(self, Timestep::Static)
    }
}

impl fmt::Display for Timestep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timestep::At(k) => write!(f, "{k}"),
            Timestep::Static => f.write_str("static"),
        }
    }
}

/// A state block. Identity (equality, ordering, hashing) is `(subject, timestep)`;
/// `dim` is an attribute checked for consistency whenever two densities meet.
#[derive(Debug, Clone, Copy)]
pub struct VariableKey {
    pub subject: Subject,
    pub timestep: Timestep,
    pub dim: usize,
}

impl VariableKey {
    pub fn new(subject: Subject, timestep: Timestep, dim: usize) -> Self {
        assert!(dim > 0, "variable blocks must have positive dimension");
        VariableKey {
            subject,
            timestep,
            dim,
        }
    }

    pub fn target(id: u32, k: u32, dim: usize) -> Self {
        Self::new(Subject::Target(id), Timestep::At(k), dim)
    }

    pub fn bias(id: u32, dim: usize) -> Self {
        Self::new(Subject::Bias(id), Timestep::Static, dim)
    }

    pub fn label(id: u32, timestep: Timestep, dim: usize) -> Self {
        Self::new(Subject::Label(id), timestep, dim)
    }

    /// Same subject and dimension at another timestep.
    pub fn at(&self, k: u32) -> Self {
        VariableKey {
            timestep: Timestep::At(k),
            ..*self
        }
    }

    pub fn is_static(&self) -> bool {
        self.timestep.is_static()
    }

    fn identity(&self) -> (Subject, Timestep) {
        (self.subject, self.timestep)
    }
}

impl PartialEq for VariableKey {
    fn eq(&self, other: &Self) -> bool {
        self.identity() == other.identity()
    }
}

impl Eq for VariableKey {}

impl PartialOrd for VariableKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VariableKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.identity().cmp(&other.identity())
    }
}

impl std::hash::Hash for VariableKey {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.identity().hash(state)
    }
}

impl fmt::Display for VariableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}[{}]", self.subject, self.timestep, self.dim)
    }
}

pub type VarSet = BTreeSet<VariableKey>;

/// Gaussian in information form over a sorted list of variable blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalGaussian {
    vars: Vec<VariableKey>,
    offsets: Vec<usize>,
    info_vector: DVector<f64>,
    info_matrix: DMatrix<f64>,
}

fn offsets_of(vars: &[VariableKey]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(vars.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for v in vars {
        acc += v.dim;
        offsets.push(acc);
    }
    offsets
}

/// Sorted union of two sorted key lists, rejecting dimension conflicts.
fn union_vars(a: &[VariableKey], b: &[VariableKey]) -> Result<Vec<VariableKey>> {
    let mut merged: Vec<VariableKey> = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                if x.dim != y.dim {
                    return Err(Error::structural(format!(
                        "dimension mismatch for {}: {} vs {}",
                        x, x.dim, y.dim
                    )));
                }
                i += 1;
                j += 1;
                *x
            }
            (Some(x), Some(y)) if x < y => {
                i += 1;
                *x
            }
            (Some(x), None) => {
                i += 1;
                *x
            }
            (_, Some(y)) => {
                j += 1;
                *y
            }
            (None, None) => unreachable!(),
        };
        merged.push(next);
    }
    Ok(merged)
}

/// Make `m` exactly symmetric by averaging with its transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::structural(format!(
            "{what} is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = max_abs(m).max(1.0);
    let asym = max_abs(&(m - m.transpose()));
    if asym > ASYMMETRY_TOLERANCE * scale {
        return Err(Error::structural(format!(
            "{what} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

fn condition_from_eigenvalues(eigs: &DVector<f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for e in eigs.iter() {
        lo = lo.min(e.abs());
        hi = hi.max(e.abs());
    }
    if eigs.is_empty() {
        1.0
    } else if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Condition number estimate of a symmetric matrix from its eigenvalues.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    condition_from_eigenvalues(&SymmetricEigen::new(m.clone()).eigenvalues)
}

/// Solve `m x = rhs` for a symmetric `m`, using Cholesky when possible.
fn solve_symmetric(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(chol) = m.clone().cholesky() {
        return Some(chol.solve(rhs));
    }
    m.clone().lu().solve(rhs)
}

/// Smallest eigenvalue of a symmetric matrix. Empty matrices report `+∞`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(m, "matrix")?;
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    Ok(SymmetricEigen::new(s).eigenvalues.min())
}

/// The deflation constant: smallest eigenvalue of `Λ_sp^{-1/2} Λ_tr Λ_sp^{-1/2}`,
/// clamped to `(0, 1]`, so that `Λ_tr − λ Λ_sp ⪰ 0`.
///
/// `Λ_sp^{-1/2}` is a pseudo-inverse square root: eigen-directions of `Λ_sp`
/// below [`PSEUDO_INVERSE_CUTOFF`] are dropped. If `Λ_sp` is rank deficient and
/// `Λ_tr` couples its null space to its range, the restricted eigenvalue is not
/// sufficient; the constant is then recomputed from the equivalent generalized
/// problem `1 / λ_max(Λ_tr^{-1/2} Λ_sp Λ_tr^{-1/2})`, which needs `Λ_tr ≻ 0`.
pub fn deflation_constant(tr: &DMatrix<f64>, sp: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(tr, "true information matrix")?;
    check_symmetric(sp, "sparse information matrix")?;
    if tr.shape() != sp.shape() {
        return Err(Error::structural(format!(
            "deflation inputs differ in shape: {:?} vs {:?}",
            tr.shape(),
            sp.shape()
        )));
    }
    if tr == sp || tr.nrows() == 0 {
        return Ok(1.0);
    }
    let mut sp_sym = sp.clone();
    symmetrize(&mut sp_sym);
    let eig = SymmetricEigen::new(sp_sym);
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.min() < -PSD_TOLERANCE * scale {
        return Err(Error::numerical(
            "sparse information matrix is not positive semi-definite",
            condition_from_eigenvalues(&eig.eigenvalues),
        ));
    }
    let range: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > PSEUDO_INVERSE_CUTOFF)
        .collect();
    if range.is_empty() {
        return Ok(1.0);
    }
    // Columns of V scaled by d^{-1/2}, restricted to the range of Λ_sp.
    let mut basis = DMatrix::zeros(tr.nrows(), range.len());
    for (c, &i) in range.iter().enumerate() {
        let w = 1.0 / eig.eigenvalues[i].sqrt();
        basis.set_column(c, &(eig.eigenvectors.column(i) * w));
    }
    let mut q = basis.transpose() * tr * &basis;
    symmetrize(&mut q);
    let mut lambda = SymmetricEigen::new(q).eigenvalues.min().min(1.0);

    let residual = min_eigenvalue(&(tr - sp * lambda))?;
    if residual < -PSD_TOLERANCE && range.len() < tr.nrows() {
        lambda = generalized_deflation(tr, sp)?;
    }
    if !lambda.is_finite() || lambda <= LAMBDA_FLOOR {
        return Err(Error::numerical(
            format!("deflation constant {lambda:e} is not positive; inputs are inconsistent"),
            condition_number(tr),
        ));
    }
    if 1.0 - lambda < LAMBDA_SNAP {
        lambda = 1.0;
    }
    Ok(lambda)
}

fn generalized_deflation(tr: &DMatrix<f64>, sp: &DMatrix<f64>) -> Result<f64> {
    let chol = tr.clone().cholesky().ok_or_else(|| {
        Error::numerical(
            "true information matrix must be positive definite when the sparse one is rank deficient",
            condition_number(tr),
        )
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("Cholesky factor not invertible", f64::INFINITY))?;
    let mut m = &l_inv * sp * l_inv.transpose();
    symmetrize(&mut m);
    let mu = SymmetricEigen::new(m).eigenvalues.max();
    Ok(if mu <= 0.0 { 1.0 } else { (1.0 / mu).min(1.0) })
}

impl CanonicalGaussian {
    /// Build from parts. Variables may arrive in any order; they are sorted and
    /// the vector/matrix permuted to match.
    pub fn new(
        vars: Vec<VariableKey>,
        info_vector: DVector<f64>,
        info_matrix: DMatrix<f64>,
    ) -> Result<Self> {
        let n: usize = vars.iter().map(|v| v.dim).sum();
        if info_vector.len() != n || info_matrix.nrows() != n || info_matrix.ncols() != n {
            return Err(Error::structural(format!(
                "canonical parameters have shapes {} / {:?}, variables need {n}",
                info_vector.len(),
                info_matrix.shape()
            )));
        }
        check_symmetric(&info_matrix, "information matrix")?;
        let mut sorted = vars.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::structural("duplicate variable in canonical Gaussian"));
        }
        let (vector, mut matrix) = if sorted.iter().zip(&vars).all(|(a, b)| a == b) {
            (info_vector, info_matrix)
        } else {
            let src_offsets = offsets_of(&vars);
            let mut perm = Vec::with_capacity(n);
            for key in &sorted {
                let pos = vars.iter().position(|v| v == key).unwrap();
                perm.extend(src_offsets[pos]..src_offsets[pos + 1]);
            }
            (
                info_vector.select_rows(&perm),
                info_matrix.select_rows(&perm).select_columns(&perm),
            )
        };
        symmetrize(&mut matrix);
        Ok(CanonicalGaussian {
            offsets: offsets_of(&sorted),
            vars: sorted,
            info_vector: vector,
            info_matrix: matrix,
        })
    }

    /// Zero information over `vars` (the multiplicative identity on that scope).
    pub fn zero(vars: Vec<VariableKey>) -> Result<Self> {
        let n = vars.iter().map(|v| v.dim).sum();
        Self::new(vars, DVector::zeros(n), DMatrix::zeros(n, n))
    }

    pub fn empty() -> Self {
        CanonicalGaussian {
            vars: Vec::new(),
            offsets: vec![0],
            info_vector: DVector::zeros(0),
            info_matrix: DMatrix::zeros(0, 0),
        }
    }

    /// Canonical form of `𝒩(mean, cov)`; `cov` must be positive definite.
    pub fn from_moment(
        vars: Vec<VariableKey>,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
    ) -> Result<Self> {
        let chol = cov.clone().cholesky().ok_or_else(|| {
            Error::numerical("covariance is not positive definite", condition_number(cov))
        })?;
        let info = chol.inverse();
        let zeta = &info * mean;
        Self::new(vars, zeta, info)
    }

    pub fn vars(&self) -> &[VariableKey] {
        &self.vars
    }

    pub fn var_set(&self) -> VarSet {
        self.vars.iter().copied().collect()
    }

    pub fn info_vector(&self) -> &DVector<f64> {
        &self.info_vector
    }

    pub fn info_matrix(&self) -> &DMatrix<f64> {
        &self.info_matrix
    }

    /// Total scalar dimension.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn contains(&self, key: &VariableKey) -> bool {
        self.vars.binary_search(key).is_ok()
    }

    /// Scalar index range of one block.
    pub fn range_of(&self, key: &VariableKey) -> Option<std::ops::Range<usize>> {
        let pos = self.vars.binary_search(key).ok()?;
        Some(self.offsets[pos]..self.offsets[pos + 1])
    }

    /// Scalar indices of the given blocks, in the order given.
    pub fn indices_of<'a>(
        &self,
        keys: impl IntoIterator<Item = &'a VariableKey>,
    ) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for key in keys {
            let range = self
                .range_of(key)
                .ok_or_else(|| Error::structural(format!("{key} not in density scope")))?;
            out.extend(range);
        }
        Ok(out)
    }

    /// Sub-block `Λ[rows, cols]`.
    pub fn matrix_block(&self, rows: &VarSet, cols: &VarSet) -> Result<DMatrix<f64>> {
        let r = self.indices_of(rows)?;
        let c = self.indices_of(cols)?;
        Ok(self.info_matrix.select_rows(&r).select_columns(&c))
    }

    pub fn vector_segment(&self, keys: &VarSet) -> Result<DVector<f64>> {
        Ok(self.info_vector.select_rows(&self.indices_of(keys)?))
    }

    /// Zero-pad onto a sorted superset of variables.
    fn embed(&self, target: &[VariableKey]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let target_offsets = offsets_of(target);
        let n = *target_offsets.last().unwrap();
        let mut idx = Vec::with_capacity(self.dim());
        for key in &self.vars {
            let pos = target
                .binary_search(key)
                .map_err(|_| Error::structural(format!("{key} missing from target scope")))?;
            if target[pos].dim != key.dim {
                return Err(Error::structural(format!(
                    "dimension mismatch for {key}: {} vs {}",
                    key.dim, target[pos].dim
                )));
            }
            idx.extend(target_offsets[pos]..target_offsets[pos + 1]);
        }
        let mut vector = DVector::zeros(n);
        let mut matrix = DMatrix::zeros(n, n);
        for (a, &ia) in idx.iter().enumerate() {
            vector[ia] = self.info_vector[a];
            for (b, &ib) in idx.iter().enumerate() {
                matrix[(ia, ib)] = self.info_matrix[(a, b)];
            }
        }
        Ok((vector, matrix))
    }

    /// The same density written over a larger scope (extra blocks carry zero information).
    pub fn extend_to(&self, vars: &VarSet) -> Result<Self> {
        let target: Vec<VariableKey> = vars.iter().copied().collect();
        let (vector, matrix) = self.embed(&target)?;
        Ok(CanonicalGaussian {
            offsets: offsets_of(&target),
            vars: target,
            info_vector: vector,
            info_matrix: matrix,
        })
    }

    /// Product of many densities, written over `scope` (which must contain every part's variables).
    pub fn product<'a>(
        scope: &VarSet,
        parts: impl IntoIterator<Item = &'a CanonicalGaussian>,
    ) -> Result<Self> {
        let vars: Vec<VariableKey> = scope.iter().copied().collect();
        let offsets = offsets_of(&vars);
        let n = *offsets.last().unwrap();
        let mut vector = DVector::zeros(n);
        let mut matrix = DMatrix::zeros(n, n);
        for part in parts {
            let mut idx = Vec::with_capacity(part.dim());
            for key in &part.vars {
                let pos = vars
                    .binary_search(key)
                    .map_err(|_| Error::structural(format!("{key} missing from product scope")))?;
                if vars[pos].dim != key.dim {
                    return Err(Error::structural(format!(
                        "dimension mismatch for {key}: {} vs {}",
                        key.dim, vars[pos].dim
                    )));
                }
                idx.extend(offsets[pos]..offsets[pos + 1]);
            }
            for (a, &ia) in idx.iter().enumerate() {
                vector[ia] += part.info_vector[a];
                for (b, &ib) in idx.iter().enumerate() {
                    matrix[(ia, ib)] += part.info_matrix[(a, b)];
                }
            }
        }
        symmetrize(&mut matrix);
        Ok(CanonicalGaussian {
            vars,
            offsets,
            info_vector: vector,
            info_matrix: matrix,
        })
    }

    /// Product of densities: aligned sum of canonical parameters over the union scope.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        let vars = union_vars(&self.vars, &other.vars)?;
        let (va, ma) = self.embed(&vars)?;
        let (vb, mb) = other.embed(&vars)?;
        let mut matrix = ma + mb;
        symmetrize(&mut matrix);
        Ok(CanonicalGaussian {
            offsets: offsets_of(&vars),
            vars,
            info_vector: va + vb,
            info_matrix: matrix,
        })
    }

    /// Quotient of densities. `other`'s scope must be contained in `self`'s.
    /// The result may be indefinite.
    pub fn divide(&self, other: &Self) -> Result<Self> {
        if let Some(missing) = other.vars.iter().find(|v| !self.contains(v)) {
            return Err(Error::structural(format!(
                "divisor variable {missing} absent from dividend"
            )));
        }
        let (vb, mb) = other.embed(&self.vars)?;
        let mut matrix = &self.info_matrix - mb;
        symmetrize(&mut matrix);
        Ok(CanonicalGaussian {
            vars: self.vars.clone(),
            offsets: self.offsets.clone(),
            info_vector: &self.info_vector - vb,
            info_matrix: matrix,
        })
    }

    /// Multiply both canonical parameters by `factor`.
    pub fn scale(&self, factor: f64) -> Self {
        CanonicalGaussian {
            vars: self.vars.clone(),
            offsets: self.offsets.clone(),
            info_vector: &self.info_vector * factor,
            info_matrix: &self.info_matrix * factor,
        }
    }

    /// Marginal over `keep` by Schur complement.
    ///
    /// When the eliminated block has condition number above
    /// [`REGULARIZE_CONDITION`] it is loaded with `1e-9·I` first.
    pub fn marginalize(&self, keep: &VarSet) -> Result<Self> {
        if let Some(missing) = keep.iter().find(|v| !self.contains(v)) {
            return Err(Error::structural(format!(
                "cannot keep {missing}: not in density scope"
            )));
        }
        let eliminated: VarSet = self
            .vars
            .iter()
            .filter(|v| !keep.contains(v))
            .copied()
            .collect();
        let keep_vars: Vec<VariableKey> = self
            .vars
            .iter()
            .filter(|v| keep.contains(v))
            .copied()
            .collect();
        let k_idx = self.indices_of(&keep_vars)?;
        if eliminated.is_empty() {
            return Ok(self.clone());
        }
        let e_idx = self.indices_of(&eliminated)?;

        let lkk = self.info_matrix.select_rows(&k_idx).select_columns(&k_idx);
        let lke = self.info_matrix.select_rows(&k_idx).select_columns(&e_idx);
        let mut lee = self.info_matrix.select_rows(&e_idx).select_columns(&e_idx);
        let zk = self.info_vector.select_rows(&k_idx);
        let ze = self.info_vector.select_rows(&e_idx);

        let mut condition = condition_number(&lee);
        if condition > REGULARIZE_CONDITION {
            for i in 0..lee.nrows() {
                lee[(i, i)] += REGULARIZATION;
            }
            condition = condition_number(&lee);
            if condition > HARD_CONDITION_LIMIT {
                return Err(Error::numerical(
                    "eliminated block is singular even after regularization",
                    condition,
                ));
            }
        }

        let mut rhs = DMatrix::zeros(e_idx.len(), k_idx.len() + 1);
        rhs.view_mut((0, 0), (e_idx.len(), k_idx.len()))
            .copy_from(&lke.transpose());
        rhs.set_column(k_idx.len(), &ze);
        let solved = solve_symmetric(&lee, &rhs)
            .ok_or_else(|| Error::numerical("eliminated block is singular", condition))?;
        let gain = solved.columns(0, k_idx.len());
        let shift = solved.column(k_idx.len());

        let mut matrix = lkk - &lke * gain;
        symmetrize(&mut matrix);
        let vector = zk - &lke * shift;
        Ok(CanonicalGaussian {
            offsets: offsets_of(&keep_vars),
            vars: keep_vars,
            info_vector: vector,
            info_matrix: matrix,
        })
    }

    /// Mean and covariance. Requires `Λ ≻ 0`.
    pub fn to_moment(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let chol = self.info_matrix.clone().cholesky().ok_or_else(|| {
            Error::numerical(
                "information matrix is not positive definite",
                condition_number(&self.info_matrix),
            )
        })?;
        let mean = chol.solve(&self.info_vector);
        let mut cov = chol.inverse();
        symmetrize(&mut cov);
        Ok((mean, cov))
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        Ok(self.to_moment()?.0)
    }

    /// Replace `(ζ_sp, Λ_sp) = self` by `(λ Λ_sp Λ_tr⁻¹ ζ_tr, λ Λ_sp)`: a scaled-down
    /// information matrix whose mean equals that of `truth` exactly.
    pub fn deflate(&self, truth: &CanonicalGaussian, lambda: f64) -> Result<Self> {
        if self.vars != truth.vars {
            return Err(Error::structural(
                "deflation requires identical variable order for sparse and true densities",
            ));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::structural(format!(
                "deflation constant {lambda} outside (0, 1]"
            )));
        }
        let true_mean = truth.mean()?;
        let matrix = &self.info_matrix * lambda;
        let vector = &matrix * true_mean;
        Ok(CanonicalGaussian {
            vars: self.vars.clone(),
            offsets: self.offsets.clone(),
            info_vector: vector,
            info_matrix: matrix,
        })
    }

    /// Largest absolute element-wise difference, or `None` if scopes differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.vars != other.vars || self.vars.iter().zip(&other.vars).any(|(a, b)| a.dim != b.dim)
        {
            return None;
        }
        let dv = (&self.info_vector - &other.info_vector).amax();
        let dm = max_abs(&(&self.info_matrix - &other.info_matrix));
        Some(dv.max(dm))
    }

    /// True when every canonical parameter is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.info_vector.iter().all(|x| *x == 0.0) && self.info_matrix.iter().all(|x| *x == 0.0)
    }
}
