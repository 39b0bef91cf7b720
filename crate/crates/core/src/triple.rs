//! Spectral triples as finite data: a representation given on algebra
//! coordinates, a Hermitian Dirac matrix and an optional grading.
//!
//! Gradings are always `γ = diag(I_k, -I_{n-k})` in the stored basis, so an
//! even triple is described by the split index `k`; the full Dirac matrix is
//! kept alongside its off-diagonal corner.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{
    self, block2, c, commutator, diag_real, identity, is_hermitian, kron, multiplicities, opnorm_unchecked, CMatrix,
    CVector, C64, I,
};

/// A linear map from algebra coordinates to matrices, together with the
/// algebra's unit and involution expressed in the same coordinates.
pub trait Representation: Send + Sync + Debug {
    fn algebra_dim(&self) -> usize;
    fn hilbert_dim(&self) -> usize;
    fn represent(&self, a: &CVector) -> CMatrix;
    fn unit(&self) -> CVector;
    /// Conjugate-linear involution: `a* = J · conj(a)`; returns `J`.
    fn involution(&self) -> CMatrix;

    fn adjoint(&self, a: &CVector) -> CVector {
        self.involution() * a.map(|z| z.conj())
    }

    fn basis_element(&self, k: usize) -> CVector {
        let mut e = CVector::zeros(self.algebra_dim());
        e[k] = c(1.0);
        e
    }
}

/// Representation given by an explicit list of basis images.
#[derive(Debug, Clone)]
pub struct MatrixRep {
    pub basis: Vec<CMatrix>,
    pub unit: CVector,
    pub involution: CMatrix,
}

impl MatrixRep {
    pub fn new(basis: Vec<CMatrix>, unit: CVector, involution: CMatrix) -> Result<Self> {
        let Some(first) = basis.first() else {
            return Err(Error::Input("representation needs at least one basis element".into()));
        };
        let n = first.nrows();
        if basis.iter().any(|b| b.shape() != (n, n)) {
            return Err(Error::Input("basis images must be square of equal size".into()));
        }
        if unit.len() != basis.len() || involution.shape() != (basis.len(), basis.len()) {
            return Err(Error::Input("unit/involution do not match the basis".into()));
        }
        Ok(Self {
            basis,
            unit,
            involution,
        })
    }
}

impl Representation for MatrixRep {
    fn algebra_dim(&self) -> usize {
        self.basis.len()
    }
    fn hilbert_dim(&self) -> usize {
        self.basis[0].nrows()
    }
    fn represent(&self, a: &CVector) -> CMatrix {
        let mut out = CMatrix::zeros(self.hilbert_dim(), self.hilbert_dim());
        for (k, b) in self.basis.iter().enumerate() {
            if a[k] != c(0.0) {
                out += b * a[k];
            }
        }
        out
    }
    fn unit(&self) -> CVector {
        self.unit.clone()
    }
    fn involution(&self) -> CMatrix {
        self.involution.clone()
    }
}

/// `a ↦ I_copies ⊗ π(a)`.
#[derive(Debug, Clone)]
pub struct AmplifiedRep {
    pub inner: Arc<dyn Representation>,
    pub copies: usize,
}

impl Representation for AmplifiedRep {
    fn algebra_dim(&self) -> usize {
        self.inner.algebra_dim()
    }
    fn hilbert_dim(&self) -> usize {
        self.copies * self.inner.hilbert_dim()
    }
    fn represent(&self, a: &CVector) -> CMatrix {
        let block = self.inner.represent(a);
        let n = block.nrows();
        let mut out = CMatrix::zeros(self.hilbert_dim(), self.hilbert_dim());
        for k in 0..self.copies {
            out.view_mut((k * n, k * n), (n, n)).copy_from(&block);
        }
        out
    }
    fn unit(&self) -> CVector {
        self.inner.unit()
    }
    fn involution(&self) -> CMatrix {
        self.inner.involution()
    }
}

/// Representation of the algebraic tensor product on `H_A ⊗ H_B`;
/// coordinate `(i, j)` sits at `i · dim_B + j`.
#[derive(Debug, Clone)]
pub struct TensorRep {
    pub left: Arc<dyn Representation>,
    pub right: Arc<dyn Representation>,
}

impl Representation for TensorRep {
    fn algebra_dim(&self) -> usize {
        self.left.algebra_dim() * self.right.algebra_dim()
    }
    fn hilbert_dim(&self) -> usize {
        self.left.hilbert_dim() * self.right.hilbert_dim()
    }
    fn represent(&self, a: &CVector) -> CMatrix {
        let (na, nb) = (self.left.algebra_dim(), self.right.algebra_dim());
        let mut out = CMatrix::zeros(self.hilbert_dim(), self.hilbert_dim());
        for i in 0..na {
            let row = CVector::from_fn(nb, |j, _| a[i * nb + j]);
            if row.iter().all(|z| *z == c(0.0)) {
                continue;
            }
            let left = self.left.represent(&self.left.basis_element(i));
            let right = self.right.represent(&row);
            out += left.kronecker(&right);
        }
        out
    }
    fn unit(&self) -> CVector {
        self.left.unit().kronecker(&self.right.unit())
    }
    fn involution(&self) -> CMatrix {
        self.left.involution().kronecker(&self.right.involution())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

#[derive(Debug, Clone)]
pub struct SpectralTriple {
    pub rep: Arc<dyn Representation>,
    pub dirac: CMatrix,
    /// Size of the even half when graded.
    pub grading_split: Option<usize>,
    pub label: String,
}

impl SpectralTriple {
    pub fn odd(rep: Arc<dyn Representation>, dirac: CMatrix, label: impl Into<String>) -> Result<Self> {
        check_dirac(&*rep, &dirac)?;
        Ok(Self {
            rep,
            dirac,
            grading_split: None,
            label: label.into(),
        })
    }

    pub fn even(rep: Arc<dyn Representation>, dirac: CMatrix, split: usize, label: impl Into<String>) -> Result<Self> {
        check_dirac(&*rep, &dirac)?;
        let n = dirac.nrows();
        if split == 0 || split >= n {
            return Err(Error::Parity(format!(
                "grading split {split} invalid for dimension {n}"
            )));
        }
        let scale = matops::max_abs(&dirac).max(1.0);
        let diagonal_leak = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| (i < split) == (j < split))
            .map(|(i, j)| dirac[(i, j)].norm())
            .fold(0.0, f64::max);
        if diagonal_leak > 1e-10 * scale {
            return Err(Error::Parity(
                "Dirac operator does not anticommute with the grading".into(),
            ));
        }
        Ok(Self {
            rep,
            dirac,
            grading_split: Some(split),
            label: label.into(),
        })
    }

    pub fn parity(&self) -> Parity {
        if self.grading_split.is_some() {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        self.dirac.nrows()
    }

    pub fn algebra_dim(&self) -> usize {
        self.rep.algebra_dim()
    }

    pub fn grading_matrix(&self) -> Option<CMatrix> {
        let split = self.grading_split?;
        let n = self.hilbert_dim();
        Some(matops::diag_real(
            &(0..n).map(|i| if i < split { 1.0 } else { -1.0 }).collect::<Vec<_>>(),
        ))
    }

    /// Off-diagonal corner `D_0 : H_1 → H_0` of an even Dirac operator.
    pub fn even_corner(&self) -> Result<CMatrix> {
        let split = self
            .grading_split
            .ok_or_else(|| Error::Parity(format!("triple '{}' is not graded", self.label)))?;
        let n = self.hilbert_dim();
        Ok(self.dirac.view((0, split), (split, n - split)).into_owned())
    }

    /// Max deviation of `γ² = I`, `γD + Dγ = 0` and `[γ, π(a)] = 0` over the
    /// given elements.
    pub fn grading_defect(&self, elements: &[CVector]) -> Option<f64> {
        let g = self.grading_matrix()?;
        let n = self.hilbert_dim();
        let mut worst = matops::max_abs(&(&g * &g - identity(n)));
        worst = worst.max(matops::max_abs(&(&g * &self.dirac + &self.dirac * &g)));
        for a in elements {
            worst = worst.max(matops::max_abs(&commutator(&g, &self.rep.represent(a))));
        }
        Some(worst)
    }

    pub fn represent(&self, a: &CVector) -> CMatrix {
        self.rep.represent(a)
    }

    /// `L_D(a) = ‖[D, π(a)]‖`.
    pub fn seminorm(&self, a: &CVector) -> Result<f64> {
        if a.len() != self.algebra_dim() {
            return Err(Error::Input(format!(
                "element has {} coordinates, algebra has dimension {}",
                a.len(),
                self.algebra_dim()
            )));
        }
        Ok(self.seminorm_of_matrix(&self.rep.represent(a)))
    }

    pub fn seminorm_of_matrix(&self, m: &CMatrix) -> f64 {
        opnorm_unchecked(&commutator(&self.dirac, m))
    }

    pub fn spectrum(&self) -> Result<Vec<f64>> {
        matops::herm_eigvals(&self.dirac)
    }

    /// Coordinates of the commutator map `a ↦ [D, π(a)]` as a matrix whose
    /// columns are the vectorized images of the basis.
    pub fn commutator_map(&self) -> CMatrix {
        let n = self.hilbert_dim();
        let dim = self.algebra_dim();
        let mut out = CMatrix::zeros(n * n, dim);
        for k in 0..dim {
            let cm = commutator(&self.dirac, &self.rep.represent(&self.rep.basis_element(k)));
            out.column_mut(k).copy_from(&matops::vec_rowmajor(&cm));
        }
        out
    }

    pub fn nondegenerate(&self, basis: &[CVector]) -> NondegeneracyReport {
        let n = self.hilbert_dim();
        let mut cmap = CMatrix::zeros(n * n, basis.len());
        let mut rmap = CMatrix::zeros(n * n, basis.len());
        for (k, b) in basis.iter().enumerate() {
            let p = self.rep.represent(b);
            cmap.column_mut(k)
                .copy_from(&matops::vec_rowmajor(&commutator(&self.dirac, &p)));
            rmap.column_mut(k).copy_from(&matops::vec_rowmajor(&p));
        }
        let kernel_dim = matops::nullity(&cmap, NULL_TOL);
        let faithful = matops::rank(&rmap, NULL_TOL) == basis.len();
        NondegeneracyReport {
            nondegenerate: faithful && kernel_dim == 1,
            kernel_dim,
            faithful,
        }
    }

    /// Non-degeneracy over the full coordinate basis.
    pub fn nondegenerate_on_basis(&self) -> NondegeneracyReport {
        let basis: Vec<CVector> = (0..self.algebra_dim()).map(|k| self.rep.basis_element(k)).collect();
        self.nondegenerate(&basis)
    }

    pub fn with_scaled_dirac(&self, t: f64) -> Self {
        Self {
            dirac: &self.dirac * c(t),
            ..self.clone()
        }
    }

    pub fn summary(&self) -> Result<TripleSummary> {
        let spectrum = self.spectrum()?;
        Ok(TripleSummary {
            label: self.label.clone(),
            parity: self.parity(),
            hilbert_dim: self.hilbert_dim(),
            algebra_dim: self.algebra_dim(),
            spectrum,
        })
    }
}

/// Relative singular-value cutoff for kernel and rank computations.
pub const NULL_TOL: f64 = 1e-9;

fn check_dirac(rep: &dyn Representation, dirac: &CMatrix) -> Result<()> {
    if !dirac.is_square() || dirac.nrows() != rep.hilbert_dim() {
        return Err(Error::Input(format!(
            "Dirac matrix {:?} does not act on the representation space of dimension {}",
            dirac.shape(),
            rep.hilbert_dim()
        )));
    }
    matops::check_finite(dirac)?;
    if !is_hermitian(dirac, 1e-10) {
        return Err(Error::Input("Dirac matrix is not Hermitian".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub nondegenerate: bool,
    pub kernel_dim: usize,
    pub faithful: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripleSummary {
    pub label: String,
    pub parity: Parity,
    pub hilbert_dim: usize,
    pub algebra_dim: usize,
    pub spectrum: Vec<f64>,
}

/// CSV rows `index,eigenvalue,multiplicity` over distinct eigenvalues.
pub fn spectrum_csv(spectrum: &[f64]) -> String {
    let mut out = String::from("index,eigenvalue,multiplicity\n");
    for (k, (v, m)) in multiplicities(spectrum, 1e-9).into_iter().enumerate() {
        out.push_str(&format!("{k},{v:.12e},{m}\n"));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummabilityReport {
    pub p: f64,
    pub partial_sums: Vec<f64>,
    /// Least-squares slope of `log(1+|λ|)` against `log(cumulative weight)`
    /// over the tail half.
    pub growth_exponent: f64,
    /// `1 / growth_exponent`: the summability threshold suggested by the fit.
    pub critical_p: f64,
}

/// Partial sums of `Σ w_m (1+λ_m²)^{-p/2}` in the given order.
pub fn summability_report(eigs: &[f64], weights: &[f64], p: f64) -> Result<SummabilityReport> {
    if !(p > 0.0) {
        return Err(Error::Input(format!("summability exponent must be positive, got {p}")));
    }
    if eigs.len() != weights.len() {
        return Err(Error::Input("eigenvalue and weight lists differ in length".into()));
    }
    let mut partial_sums = Vec::with_capacity(eigs.len());
    let mut acc = 0.0;
    for (l, w) in eigs.iter().zip(weights) {
        acc += w * (1.0 + l * l).powf(-p / 2.0);
        partial_sums.push(acc);
    }
    let mut cumulative = 0.0;
    let points: Vec<(f64, f64)> = eigs
        .iter()
        .zip(weights)
        .map(|(l, w)| {
            cumulative += w;
            (cumulative, *l)
        })
        .collect();
    let tail: Vec<(f64, f64)> = points[points.len() / 2..]
        .iter()
        .filter(|(n, l)| *n > 0.0 && l.abs() > 0.0)
        .map(|(n, l)| (n.ln(), (1.0 + l.abs()).ln()))
        .collect();
    let growth_exponent = least_squares_slope(&tail);
    Ok(SummabilityReport {
        p,
        partial_sums,
        growth_exponent,
        critical_p: 1.0 / growth_exponent,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

/// Both sides of `(x+y-1)^{-(α+β)} ≤ x^{-α} y^{-β}` for `x, y > 1`.
pub fn product_summability_bound(x: f64, y: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let lhs = (x + y - 1.0).powf(-(alpha + beta));
    let rhs = x.powf(-alpha) * y.powf(-beta);
    (lhs, rhs)
}

fn require_odd(t: &SpectralTriple) -> Result<()> {
    if t.parity() != Parity::Odd {
        return Err(Error::Parity(format!("triple '{}' must be odd", t.label)));
    }
    Ok(())
}

/// Even triple on the tensor product of two odd triples, acting on
/// `(H_A ⊗ H_B) ⊕ (H_A ⊗ H_B)` with corner `D_A ⊗ 1 - i ⊗ D_B`.
pub fn tensor_even(ta: &SpectralTriple, tb: &SpectralTriple) -> Result<SpectralTriple> {
    require_odd(ta)?;
    require_odd(tb)?;
    let (na, nb) = (ta.hilbert_dim(), tb.hilbert_dim());
    let da = kron(&ta.dirac, &identity(nb))?;
    let db = kron(&identity(na), &tb.dirac)?;
    let corner = &da - &db * I;
    let n = na * nb;
    if 2 * n > matops::DEFAULT_MAX_DIM {
        return Err(Error::Capacity {
            requested: 2 * n,
            limit: matops::DEFAULT_MAX_DIM,
        });
    }
    let dirac = block2(&CMatrix::zeros(n, n), &corner, &corner.adjoint(), &CMatrix::zeros(n, n));
    let rep = Arc::new(AmplifiedRep {
        inner: Arc::new(TensorRep {
            left: ta.rep.clone(),
            right: tb.rep.clone(),
        }),
        copies: 2,
    });
    SpectralTriple::even(rep, dirac, n, format!("({}) x ({})", ta.label, tb.label))
}

/// Odd triple from an even and an odd one:
/// `D = [[1 ⊗ D_B, D_0 ⊗ 1], [D_0* ⊗ 1, -1 ⊗ D_B]]`, i.e. `D_even ⊗ 1 + γ ⊗ D_B`.
pub fn product_odd(ta: &SpectralTriple, tb: &SpectralTriple) -> Result<SpectralTriple> {
    let gamma = ta
        .grading_matrix()
        .ok_or_else(|| Error::Parity(format!("first factor '{}' must be graded", ta.label)))?;
    require_odd(tb)?;
    let nb = tb.hilbert_dim();
    let dirac = kron(&ta.dirac, &identity(nb))? + kron(&gamma, &tb.dirac)?;
    let rep = Arc::new(TensorRep {
        left: ta.rep.clone(),
        right: tb.rep.clone(),
    });
    SpectralTriple::odd(rep, dirac, format!("({}) x ({})", ta.label, tb.label))
}

/// Scalar coordinates: the one-dimensional algebra `ℂ` on `ℂ^n` as multiples
/// of the identity.
pub fn scalar_rep(n: usize) -> MatrixRep {
    MatrixRep::new(vec![identity(n)], CVector::from_element(1, c(1.0)), identity(1))
        .expect("scalar representation is well formed")
}

/// Commutative algebra `ℂ^n` acting diagonally on `ℂ^n`.
pub fn diagonal_rep(n: usize) -> MatrixRep {
    let basis = (0..n)
        .map(|k| {
            let mut m = CMatrix::zeros(n, n);
            m[(k, k)] = c(1.0);
            m
        })
        .collect();
    MatrixRep::new(basis, CVector::from_element(n, c(1.0)), identity(n))
        .expect("diagonal representation is well formed")
}

/// Odd triple on `C({p, q})` with `D = [[0, λ], [λ, 0]]`.
pub fn two_point_triple(lambda: f64) -> SpectralTriple {
    let d = CMatrix::from_row_slice(2, 2, &[c(0.0), c(lambda), c(lambda), c(0.0)]);
    SpectralTriple::odd(Arc::new(diagonal_rep(2)), d, format!("two-point({lambda})"))
        .expect("two-point triple is well formed")
}

/// Odd triple `ℂ^n` diagonal with an arbitrary Hermitian Dirac matrix.
pub fn diagonal_triple(dirac: CMatrix, label: impl Into<String>) -> Result<SpectralTriple> {
    let n = dirac.nrows();
    SpectralTriple::odd(Arc::new(diagonal_rep(n)), dirac, label)
}

/// Trigonometric polynomials of degree at most `F` acting on the modes
/// `[-K, K]` of `ℓ²(ℤ)`, `e_n` by the zero-padded shift by `n`, with
/// `D = diag(n)`. Coordinate `j` is the mode `j - F`.
pub fn circle_triple(fourier_radius: usize, mode_radius: usize) -> Result<SpectralTriple> {
    if mode_radius < fourier_radius {
        return Err(Error::Input("mode window must contain the Fourier window".into()));
    }
    let f = fourier_radius as i64;
    let k = mode_radius as i64;
    let dim = 2 * fourier_radius + 1;
    let h = 2 * mode_radius + 1;
    let basis = (-f..=f)
        .map(|n| {
            let mut m = CMatrix::zeros(h, h);
            for col in -k..=k {
                let row = col + n;
                if row.abs() <= k {
                    m[((row + k) as usize, (col + k) as usize)] = c(1.0);
                }
            }
            m
        })
        .collect();
    let mut unit = CVector::zeros(dim);
    unit[fourier_radius] = c(1.0);
    let mut involution = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        involution[(dim - 1 - j, j)] = c(1.0);
    }
    let rep = MatrixRep::new(basis, unit, involution)?;
    let dirac = diag_real(&(-k..=k).map(|n| n as f64).collect::<Vec<_>>());
    SpectralTriple::odd(Arc::new(rep), dirac, format!("circle[{fourier_radius}]"))
}

pub fn elements_from_coords(rows: &[Vec<C64>]) -> Vec<CVector> {
    rows.iter().map(|r| CVector::from_vec(r.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::{herm_eigvals, spectral_deviation};
    use crate::random::{complex_vec, random_hermitian, rng};

    fn random_odd(seed: u64, n: usize) -> SpectralTriple {
        let mut r = rng(seed);
        diagonal_triple(random_hermitian(&mut r, n), format!("rand{seed}")).unwrap()
    }

    #[test]
    fn seminorm_of_unit_is_zero() {
        let t = random_odd(1, 4);
        assert!(t.seminorm(&t.rep.unit()).unwrap() < 1e-12);
    }

    #[test]
    fn two_point_seminorm_closed_form() {
        let t = two_point_triple(3.0);
        let f = CVector::from_vec(vec![c(2.5), c(-1.0)]);
        assert!((t.seminorm(&f).unwrap() - 3.0 * 3.5).abs() < 1e-12);
    }

    #[test]
    fn seminorm_dimension_mismatch() {
        let t = two_point_triple(1.0);
        assert!(matches!(t.seminorm(&CVector::zeros(3)), Err(Error::Input(_))));
    }

    #[test]
    fn nondegeneracy_of_trivial_dirac() {
        let t = SpectralTriple::odd(Arc::new(scalar_rep(1)), CMatrix::zeros(1, 1), "C").unwrap();
        let r = t.nondegenerate_on_basis();
        assert!(r.nondegenerate && r.kernel_dim == 1);
        let t = diagonal_triple(CMatrix::zeros(2, 2), "C2").unwrap();
        let r = t.nondegenerate_on_basis();
        assert!(!r.nondegenerate && r.kernel_dim == 2);
    }

    #[test]
    fn summability_examples() {
        let r = summability_report(&[0.0; 5], &[1.0; 5], 2.0).unwrap();
        assert_eq!(r.partial_sums, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let eigs: Vec<f64> = (0..2000).map(|m| m as f64).collect();
        let r = summability_report(&eigs, &vec![1.0; 2000], 3.0).unwrap();
        assert!(r.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.partial_sums[1999] - r.partial_sums[100] < 1e-3);
        assert!((r.growth_exponent - 1.0).abs() < 0.05);
        assert!(summability_report(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn product_summability_bound_on_grid() {
        for i in 0..10 {
            for j in 0..10 {
                for a in 1..=5 {
                    for b in 1..=5 {
                        let x = 1.1 + i as f64;
                        let y = 1.1 + j as f64;
                        let (l, r) = product_summability_bound(x, y, 0.6 * a as f64, 0.6 * b as f64);
                        assert!(l <= r * (1.0 + 1e-14));
                    }
                }
            }
        }
    }

    #[test]
    fn tensor_even_with_zero_second_dirac() {
        let ta = random_odd(2, 3);
        let tb = diagonal_triple(CMatrix::zeros(2, 2), "zero").unwrap();
        let t = tensor_even(&ta, &tb).unwrap();
        let ea = herm_eigvals(&ta.dirac).unwrap();
        let mut expected: Vec<f64> = ea.iter().flat_map(|l| [l.abs(), -l.abs(), l.abs(), -l.abs()]).collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(spectral_deviation(&t.spectrum().unwrap(), &expected) < 1e-10);
        let mut r = rng(4);
        let samples: Vec<CVector> = (0..3)
            .map(|_| CVector::from_vec(complex_vec(&mut r, t.algebra_dim())))
            .collect();
        assert!(t.grading_defect(&samples).unwrap() < 1e-12);
    }

    #[test]
    fn tensor_even_requires_odd_inputs() {
        let ta = random_odd(2, 2);
        let t = tensor_even(&ta, &ta).unwrap();
        assert!(matches!(tensor_even(&t, &ta), Err(Error::Parity(_))));
        assert!(matches!(product_odd(&ta, &ta), Err(Error::Parity(_))));
    }

    #[test]
    fn product_odd_examples() {
        // D_B = 0: spectrum is ± singular values of the corner, with multiplicity.
        let t1 = random_odd(7, 2);
        let t2 = random_odd(8, 2);
        let te = tensor_even(&t1, &t2).unwrap();
        let zero = diagonal_triple(CMatrix::zeros(1, 1), "zero").unwrap();
        let t = product_odd(&te, &zero).unwrap();
        let corner = te.even_corner().unwrap();
        let mut expected: Vec<f64> = matops::singular_values(&corner)
            .into_iter()
            .flat_map(|s| [s, -s])
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(spectral_deviation(&t.spectrum().unwrap(), &expected) < 1e-10);

        // D_B = μ I: ±sqrt(σ² + μ²)
        let mu = 0.7;
        let tb = diagonal_triple(matops::diag_real(&[mu]), "mu").unwrap();
        let t = product_odd(&te, &tb).unwrap();
        let mut expected: Vec<f64> = matops::singular_values(&corner)
            .into_iter()
            .flat_map(|s| {
                let r = (s * s + mu * mu).sqrt();
                [r, -r]
            })
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(spectral_deviation(&t.spectrum().unwrap(), &expected) < 1e-10);
    }

    #[test]
    fn spectrum_csv_groups_multiplicities() {
        let csv = spectrum_csv(&[-1.0, 1.0, 1.0]);
        assert!(csv.starts_with("index,eigenvalue,multiplicity\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().last().unwrap().ends_with(",2"));
    }
}
