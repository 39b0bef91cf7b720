//! Dense complex matrix kernel.
//!
//! Every norm in the crate is a largest singular value; every spectrum comes
//! from a Hermitian eigendecomposition. Both routines first split the matrix
//! into the connected components of its sparsity pattern, which is exact
//! (a permutation similarity) and keeps block-local operators such as
//! `D_A ⊗ 1 + 1 ⊗ M_l` cheap to diagonalize.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance for the Hermitian check.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Largest matrix side `kron_dirsum` will produce.
pub const DEFAULT_MAX_DIM: usize = 16384;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn check_finite(m: &CMatrix) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    Ok(())
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn is_hermitian(m: &CMatrix, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m);
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Connected components of the bipartite row/column graph of the nonzero
/// pattern. Returns `(rows, cols)` per component; rows or cols may be empty
/// for zero rows/columns.
pub fn components(m: &CMatrix) -> Vec<(Vec<usize>, Vec<usize>)> {
    let (nr, nc) = m.shape();
    // union-find over nr + nc nodes
    let mut parent: Vec<usize> = (0..nr + nc).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for j in 0..nc {
        for i in 0..nr {
            if m[(i, j)] != C64::new(0.0, 0.0) {
                let a = find(&mut parent, i);
                let b = find(&mut parent, nr + j);
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut index = std::collections::BTreeMap::new();
    let mut out: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for node in 0..nr + nc {
        let root = find(&mut parent, node);
        let k = *index.entry(root).or_insert_with(|| {
            out.push((Vec::new(), Vec::new()));
            out.len() - 1
        });
        if node < nr {
            out[k].0.push(node);
        } else {
            out[k].1.push(node - nr);
        }
    }
    out
}

/// Connected components of the index graph `i ~ j` when `m[i,j] != 0`, for
/// square matrices whose pattern is symmetric.
pub fn symmetric_components(m: &CMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for j in 0..n {
        for i in 0..n {
            if m[(i, j)] != C64::new(0.0, 0.0) {
                let a = find(&mut parent, i);
                let b = find(&mut parent, j);
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut index = std::collections::BTreeMap::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for node in 0..n {
        let root = find(&mut parent, node);
        let k = *index.entry(root).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[k].push(node);
    }
    out
}

pub fn submatrix(m: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn dense_singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![0.0];
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return vec![m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()];
    }
    m.clone().singular_values().iter().copied().collect()
}

/// Operator norm (largest singular value).
pub fn opnorm(m: &CMatrix) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::Input("opnorm of an empty matrix".into()));
    }
    check_finite(m)?;
    Ok(opnorm_unchecked(m))
}

pub(crate) fn opnorm_unchecked(m: &CMatrix) -> f64 {
    let comps = components(m);
    if comps.len() == 1 {
        return dense_singular_values(m).into_iter().fold(0.0, f64::max);
    }
    comps
        .iter()
        .filter(|(r, cl)| !r.is_empty() && !cl.is_empty())
        .map(|(r, cl)| {
            dense_singular_values(&submatrix(m, r, cl))
                .into_iter()
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// All singular values, descending.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s = dense_singular_values(m);
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Hermitian eigendecomposition with ascending eigenvalues and a unitary
/// eigenvector matrix (columns).
pub fn herm_eig(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !m.is_square() || m.is_empty() {
        return Err(Error::Input("herm_eig needs a nonempty square matrix".into()));
    }
    check_finite(m)?;
    if !is_hermitian(m, HERMITIAN_TOL) {
        return Err(Error::Input("matrix is not Hermitian".into()));
    }
    let n = m.nrows();
    let h = symmetrize(m);
    let mut vals = vec![0.0; n];
    let mut vecs = CMatrix::zeros(n, n);
    let mut col = 0;
    for rows in symmetric_components(&h) {
        let sub = submatrix(&h, &rows, &rows);
        let eig = SymmetricEigen::new(sub);
        for k in 0..rows.len() {
            vals[col] = eig.eigenvalues[k];
            for (i, &r) in rows.iter().enumerate() {
                vecs[(r, col)] = eig.eigenvectors[(i, k)];
            }
            col += 1;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
    let sorted_vals = order.iter().map(|&k| vals[k]).collect();
    let sorted_vecs = CMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    Ok((sorted_vals, sorted_vecs))
}

/// Eigenvalues only, ascending.
pub fn herm_eigvals(m: &CMatrix) -> Result<Vec<f64>> {
    if !m.is_square() || m.is_empty() {
        return Err(Error::Input("herm_eigvals needs a nonempty square matrix".into()));
    }
    check_finite(m)?;
    if !is_hermitian(m, HERMITIAN_TOL) {
        return Err(Error::Input("matrix is not Hermitian".into()));
    }
    let h = symmetrize(m);
    let mut vals = Vec::with_capacity(h.nrows());
    for rows in symmetric_components(&h) {
        let sub = submatrix(&h, &rows, &rows);
        if rows.len() == 1 {
            vals.push(sub[(0, 0)].re);
        } else {
            vals.extend(sub.symmetric_eigenvalues().iter().copied());
        }
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assembly {
    Tensor,
    DirectSum,
}

fn check_capacity(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::Capacity { requested: n, limit });
    }
    Ok(())
}

pub fn kron_dirsum(a: &CMatrix, b: &CMatrix, mode: Assembly) -> Result<CMatrix> {
    kron_dirsum_with_limit(a, b, mode, DEFAULT_MAX_DIM)
}

pub fn kron_dirsum_with_limit(a: &CMatrix, b: &CMatrix, mode: Assembly, limit: usize) -> Result<CMatrix> {
    match mode {
        Assembly::Tensor => {
            check_capacity(a.nrows() * b.nrows(), limit)?;
            check_capacity(a.ncols() * b.ncols(), limit)?;
            Ok(a.kronecker(b))
        }
        Assembly::DirectSum => {
            check_capacity(a.nrows() + b.nrows(), limit)?;
            check_capacity(a.ncols() + b.ncols(), limit)?;
            Ok(direct_sum(a, b))
        }
    }
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    kron_dirsum(a, b, Assembly::Tensor)
}

pub fn direct_sum(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

/// 2×2 block matrix `[[a, b], [c, d]]`.
pub fn block2(a: &CMatrix, b: &CMatrix, cc: &CMatrix, d: &CMatrix) -> CMatrix {
    let (r0, c0) = a.shape();
    let (r1, c1) = d.shape();
    let mut out = CMatrix::zeros(r0 + r1, c0 + c1);
    out.view_mut((0, 0), (r0, c0)).copy_from(a);
    out.view_mut((0, c0), (r0, c1)).copy_from(b);
    out.view_mut((r0, 0), (r1, c0)).copy_from(cc);
    out.view_mut((r0, c0), (r1, c1)).copy_from(d);
    out
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn diag_real(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(values.len(), values.iter().map(|&v| c(v))))
}

/// Numerical rank with singular-value cutoff `rel_tol · σ_max`.
pub fn rank(m: &CMatrix, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = dense_singular_values(m);
    let top = s.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

/// Orthonormal basis (columns) of the column space.
pub fn column_space(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| top > 0.0 && svd.singular_values[k] > rel_tol * top)
        .collect();
    CMatrix::from_fn(m.nrows(), keep.len(), |i, j| u[(i, keep[j])])
}

/// Nullspace dimension of the linear map with matrix `m` (columns = inputs).
pub fn nullity(m: &CMatrix, rel_tol: f64) -> usize {
    m.ncols() - rank(m, rel_tol)
}

/// Largest singular value together with all singular pairs within
/// `rel_tol` of it.
pub fn top_singular_pairs(m: &CMatrix, rel_tol: f64) -> (f64, Vec<(CVector, CVector)>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut pairs = Vec::new();
    for k in 0..svd.singular_values.len() {
        if svd.singular_values[k] >= top * (1.0 - rel_tol) {
            let uk = u.column(k).into_owned();
            let vk = vt.row(k).adjoint();
            pairs.push((uk, vk));
        }
    }
    (top, pairs)
}

pub fn is_unitary(u: &CMatrix, tol: f64) -> bool {
    u.is_square() && (u.adjoint() * u - identity(u.nrows())).iter().all(|z| z.norm() <= tol)
}

/// Group sorted eigenvalues into `(value, multiplicity)` with absolute
/// tolerance `tol`.
pub fn multiplicities(sorted: &[f64], tol: f64) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] - sorted[start] <= tol {
            end += 1;
        }
        let mean = sorted[start..end].iter().sum::<f64>() / (end - start) as f64;
        out.push((mean, end - start));
        start = end;
    }
    out
}

/// `vec` in row-major order, matching the coordinate layout of matrix units.
pub fn vec_rowmajor(m: &CMatrix) -> CVector {
    let (r, cl) = m.shape();
    CVector::from_fn(r * cl, |k, _| m[(k / cl, k % cl)])
}

/// Max deviation between two sorted spectra of equal length.
pub fn spectral_deviation(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
