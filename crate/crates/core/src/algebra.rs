//! Finite-dimensional C*-algebras `⊕ M_{d_b}`, AF filtrations given by
//! explicit coordinate inclusions, states, the GNS construction and the
//! layered Dirac operator `D = Σ λ_m Q_m`.
//!
//! Coordinates: the matrix unit `E_ij` of block `b` sits at
//! `offset_b + i·d_b + j`. The GNS space is `⊕ M_{d_b}` with the
//! Hilbert–Schmidt inner product, vectorized row-major, so `π(a)` acts on
//! block `b` as `a_b ⊗ I`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{self, c, CMatrix, CVector, C64};
use crate::triple::{Representation, SpectralTriple};

const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiMatrixAlgebra {
    pub block_dims: Vec<usize>,
    pub label: String,
}

impl MultiMatrixAlgebra {
    pub fn new(block_dims: Vec<usize>, label: impl Into<String>) -> Result<Self> {
        if block_dims.is_empty() || block_dims.contains(&0) {
            return Err(Error::Input(format!("invalid block dimensions {block_dims:?}")));
        }
        Ok(Self {
            block_dims,
            label: label.into(),
        })
    }

    pub fn scalars() -> Self {
        Self {
            block_dims: vec![1],
            label: "C".into(),
        }
    }

    /// `C(X)` for a set of `n` points.
    pub fn commutative(n: usize) -> Self {
        Self {
            block_dims: vec![1; n.max(1)],
            label: format!("C^{n}"),
        }
    }

    pub fn full_matrix(d: usize) -> Self {
        Self {
            block_dims: vec![d.max(1)],
            label: format!("M_{d}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.block_dims.iter().map(|d| d * d).sum()
    }

    pub fn is_commutative(&self) -> bool {
        self.block_dims.iter().all(|&d| d == 1)
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.block_dims.len());
        let mut acc = 0;
        for d in &self.block_dims {
            out.push(acc);
            acc += d * d;
        }
        out
    }

    /// `(block, i, j)` of coordinate `k`.
    pub fn coord_label(&self, k: usize) -> (usize, usize, usize) {
        let mut rest = k;
        for (b, &d) in self.block_dims.iter().enumerate() {
            if rest < d * d {
                return (b, rest / d, rest % d);
            }
            rest -= d * d;
        }
        panic!("coordinate {k} out of range for {:?}", self.block_dims);
    }

    pub fn basis_element(&self, k: usize) -> CVector {
        let mut e = CVector::zeros(self.dim());
        e[k] = c(1.0);
        e
    }

    pub fn basis(&self) -> Vec<CVector> {
        (0..self.dim()).map(|k| self.basis_element(k)).collect()
    }

    pub fn unit(&self) -> CVector {
        let mut u = CVector::zeros(self.dim());
        for (off, &d) in self.offsets().iter().zip(&self.block_dims) {
            for i in 0..d {
                u[off + i * d + i] = c(1.0);
            }
        }
        u
    }

    pub fn blocks(&self, a: &CVector) -> Vec<CMatrix> {
        self.offsets()
            .iter()
            .zip(&self.block_dims)
            .map(|(&off, &d)| CMatrix::from_fn(d, d, |i, j| a[off + i * d + j]))
            .collect()
    }

    pub fn from_blocks(&self, blocks: &[CMatrix]) -> CVector {
        let mut a = CVector::zeros(self.dim());
        for ((off, &d), m) in self.offsets().iter().zip(&self.block_dims).zip(blocks) {
            for i in 0..d {
                for j in 0..d {
                    a[off + i * d + j] = m[(i, j)];
                }
            }
        }
        a
    }

    pub fn multiply(&self, a: &CVector, b: &CVector) -> CVector {
        let prods: Vec<CMatrix> = self.blocks(a).iter().zip(self.blocks(b)).map(|(x, y)| x * y).collect();
        self.from_blocks(&prods)
    }

    pub fn adjoint(&self, a: &CVector) -> CVector {
        let adj: Vec<CMatrix> = self.blocks(a).iter().map(|m| m.adjoint()).collect();
        self.from_blocks(&adj)
    }

    /// Permutation `J` with `a* = J conj(a)`.
    pub fn involution_matrix(&self) -> CMatrix {
        let n = self.dim();
        let mut j = CMatrix::zeros(n, n);
        for (off, &d) in self.offsets().iter().zip(&self.block_dims) {
            for r in 0..d {
                for s in 0..d {
                    j[(off + s * d + r, off + r * d + s)] = c(1.0);
                }
            }
        }
        j
    }

    /// C*-norm: the largest block operator norm.
    pub fn norm(&self, a: &CVector) -> f64 {
        self.blocks(a).iter().map(matops::opnorm_unchecked).fold(0.0, f64::max)
    }

    /// Left-regular representation on the GNS space.
    pub fn regular_rep(&self) -> BlockRep {
        BlockRep { algebra: self.clone() }
    }
}

/// `a ↦ ⊕_b a_b ⊗ I_{d_b}` on `⊕ M_{d_b}`.
#[derive(Debug, Clone)]
pub struct BlockRep {
    pub algebra: MultiMatrixAlgebra,
}

impl Representation for BlockRep {
    fn algebra_dim(&self) -> usize {
        self.algebra.dim()
    }
    fn hilbert_dim(&self) -> usize {
        self.algebra.dim()
    }
    fn represent(&self, a: &CVector) -> CMatrix {
        let n = self.algebra.dim();
        let mut out = CMatrix::zeros(n, n);
        let offsets = self.algebra.offsets();
        for ((block, &d), &off) in self
            .algebra
            .blocks(a)
            .iter()
            .zip(&self.algebra.block_dims)
            .zip(&offsets)
        {
            for i in 0..d {
                for k in 0..d {
                    let v = block[(i, k)];
                    if v == c(0.0) {
                        continue;
                    }
                    for j in 0..d {
                        out[(off + i * d + j, off + k * d + j)] = v;
                    }
                }
            }
        }
        out
    }
    fn unit(&self) -> CVector {
        self.algebra.unit()
    }
    fn involution(&self) -> CMatrix {
        self.algebra.involution_matrix()
    }
}

/// A state given by one density block per matrix block.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgState {
    pub densities: Vec<CMatrix>,
}

impl AlgState {
    pub fn new(alg: &MultiMatrixAlgebra, densities: Vec<CMatrix>) -> Result<Self> {
        if densities.len() != alg.block_dims.len() {
            return Err(Error::Input(format!(
                "{} density blocks for {} algebra blocks",
                densities.len(),
                alg.block_dims.len()
            )));
        }
        let mut total = 0.0;
        for (b, (rho, &d)) in densities.iter().zip(&alg.block_dims).enumerate() {
            if rho.shape() != (d, d) {
                return Err(Error::Input(format!("density block {b} has wrong shape")));
            }
            matops::check_finite(rho)?;
            if !matops::is_hermitian(rho, 1e-10) && matops::max_abs(rho) > 0.0 {
                return Err(Error::Input(format!("density block {b} is not Hermitian")));
            }
            let min = matops::herm_eigvals(rho)?[0];
            if min < -1e-12 {
                return Err(Error::Input(format!(
                    "density block {b} is not positive (min eig {min:.3e})"
                )));
            }
            total += rho.trace().re;
        }
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Input(format!("state has total mass {total}, expected 1")));
        }
        Ok(Self { densities })
    }

    /// `a ↦ Σ_b tr(a_b) / Σ_b d_b`; the uniform measure when commutative.
    pub fn normalized_trace(alg: &MultiMatrixAlgebra) -> Self {
        let total: usize = alg.block_dims.iter().sum();
        Self {
            densities: alg
                .block_dims
                .iter()
                .map(|&d| matops::identity(d) * c(1.0 / total as f64))
                .collect(),
        }
    }

    /// Trace state `tr(a)/dim` of a single full matrix algebra, or the
    /// dimension-weighted trace on a multi-matrix algebra.
    pub fn tracial(alg: &MultiMatrixAlgebra) -> Self {
        Self::normalized_trace(alg)
    }

    /// Evaluation at a point of a commutative algebra (any block of size 1).
    pub fn point_mass(alg: &MultiMatrixAlgebra, block: usize) -> Result<Self> {
        if alg.block_dims.get(block) != Some(&1) {
            return Err(Error::Input(format!("block {block} is not one-dimensional")));
        }
        let densities = alg
            .block_dims
            .iter()
            .enumerate()
            .map(|(b, &d)| {
                let mut m = CMatrix::zeros(d, d);
                if b == block {
                    m[(0, 0)] = c(1.0);
                }
                m
            })
            .collect();
        Ok(Self { densities })
    }

    /// Diagonal densities from per-block weight lists.
    pub fn diagonal(alg: &MultiMatrixAlgebra, weights: &[Vec<f64>]) -> Result<Self> {
        let densities = weights.iter().map(|w| matops::diag_real(w)).collect();
        Self::new(alg, densities)
    }

    /// Probability vector on the points of a commutative algebra.
    pub fn from_measure(alg: &MultiMatrixAlgebra, mu: &[f64]) -> Result<Self> {
        if !alg.is_commutative() || mu.len() != alg.dim() {
            return Err(Error::Input("measure does not match a commutative algebra".into()));
        }
        let w: Vec<Vec<f64>> = mu.iter().map(|&x| vec![x]).collect();
        Self::diagonal(alg, &w)
    }

    /// Functional coefficients `w` with `φ(a) = Σ_k w_k a_k`.
    pub fn functional(&self, alg: &MultiMatrixAlgebra) -> CVector {
        let mut w = CVector::zeros(alg.dim());
        for ((off, &d), rho) in alg.offsets().iter().zip(&alg.block_dims).zip(&self.densities) {
            for i in 0..d {
                for j in 0..d {
                    w[off + i * d + j] = rho[(j, i)];
                }
            }
        }
        w
    }

    /// Inverse of [`AlgState::functional`]; the result is validated as a state.
    pub fn from_functional(alg: &MultiMatrixAlgebra, w: &CVector) -> Result<Self> {
        let densities = alg
            .offsets()
            .iter()
            .zip(&alg.block_dims)
            .map(|(&off, &d)| CMatrix::from_fn(d, d, |i, j| w[off + j * d + i]))
            .collect();
        Self::new(alg, densities)
    }

    pub fn eval(&self, alg: &MultiMatrixAlgebra, a: &CVector) -> C64 {
        self.functional(alg).dot(a)
    }

    /// Smallest density eigenvalue per block.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.densities
            .iter()
            .map(|rho| matops::herm_eigvals(rho).map(|v| v[0]).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn is_faithful(&self) -> bool {
        self.min_eigenvalues().iter().all(|&m| m > 1e-12)
    }
}

#[derive(Debug, Clone)]
pub struct GNSData {
    pub algebra: MultiMatrixAlgebra,
    pub state: AlgState,
    pub cyclic: CVector,
    pub rep: Arc<BlockRep>,
}

impl GNSData {
    pub fn hilbert_dim(&self) -> usize {
        self.algebra.dim()
    }

    pub fn represent(&self, a: &CVector) -> CMatrix {
        self.rep.represent(a)
    }

    /// `max_k |⟨ξ, π(e_k)ξ⟩ - φ(e_k)|`.
    pub fn state_defect(&self) -> f64 {
        let w = self.state.functional(&self.algebra);
        (0..self.algebra.dim())
            .map(|k| {
                let e = self.algebra.basis_element(k);
                let v = self.cyclic.dotc(&(self.represent(&e) * &self.cyclic));
                (v - w[k]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Max deviation of multiplicativity, unitality and `*`-preservation on
    /// basis products.
    pub fn homomorphism_defect(&self) -> f64 {
        let alg = &self.algebra;
        let reps: Vec<CMatrix> = alg.basis().iter().map(|e| self.represent(e)).collect();
        let mut worst = matops::max_abs(&(self.represent(&alg.unit()) - matops::identity(self.hilbert_dim())));
        for (i, ei) in alg.basis().iter().enumerate() {
            worst = worst.max(matops::max_abs(&(self.represent(&alg.adjoint(ei)) - reps[i].adjoint())));
            for (j, ej) in alg.basis().iter().enumerate() {
                let prod = self.represent(&alg.multiply(ei, ej));
                worst = worst.max(matops::max_abs(&(prod - &reps[i] * &reps[j])));
            }
        }
        worst
    }
}

/// GNS construction with cyclic vector `ξ = ⊕ ρ_b^{1/2}`.
pub fn gns(alg: &MultiMatrixAlgebra, state: &AlgState) -> Result<GNSData> {
    if state.densities.len() != alg.block_dims.len() {
        return Err(Error::Input("state does not match the algebra".into()));
    }
    for (b, m) in state.min_eigenvalues().into_iter().enumerate() {
        if !(m > 1e-12) {
            return Err(Error::Degeneracy(format!(
                "state is not faithful on block {b} (min density eigenvalue {m:.3e})"
            )));
        }
    }
    let roots: Vec<CMatrix> = state
        .densities
        .iter()
        .map(|rho| {
            let (vals, u) = matops::herm_eig(rho)?;
            let s = matops::diag_real(&vals.iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>());
            Ok(&u * s * u.adjoint())
        })
        .collect::<Result<_>>()?;
    let cyclic = alg.from_blocks(&roots);
    Ok(GNSData {
        algebra: alg.clone(),
        state: state.clone(),
        cyclic,
        rep: Arc::new(alg.regular_rep()),
    })
}

/// Nested unital inclusions `ℂ = A_0 ⊂ A_1 ⊂ … ⊂ A_n`; `inclusions[k]` maps
/// coordinates of level `k` into level `k+1`.
#[derive(Debug, Clone)]
pub struct Filtration {
    pub levels: Vec<MultiMatrixAlgebra>,
    pub inclusions: Vec<CMatrix>,
}

/// Largest algebra dimension a filtration level may have; the GNS space
/// and the inclusion matrices are dense.
pub const MAX_ALGEBRA_DIM: usize = 4096;

fn check_tower_capacity(dims: impl Iterator<Item = usize>) -> Result<()> {
    match dims.max() {
        Some(d) if d > MAX_ALGEBRA_DIM => Err(Error::Capacity {
            requested: d,
            limit: MAX_ALGEBRA_DIM,
        }),
        _ => Ok(()),
    }
}

impl Filtration {
    pub fn new(levels: Vec<MultiMatrixAlgebra>, inclusions: Vec<CMatrix>) -> Result<Self> {
        if levels.first().map(|l| l.block_dims.as_slice()) != Some(&[1][..]) {
            return Err(Error::Input("level 0 of a filtration must be the scalars".into()));
        }
        if inclusions.len() + 1 != levels.len() {
            return Err(Error::Input(format!(
                "{} levels need {} inclusions, got {}",
                levels.len(),
                levels.len() - 1,
                inclusions.len()
            )));
        }
        for (k, inc) in inclusions.iter().enumerate() {
            let (src, dst) = (&levels[k], &levels[k + 1]);
            if inc.shape() != (dst.dim(), src.dim()) {
                return Err(Error::Input(format!(
                    "inclusion {k} has shape {:?}, expected ({}, {})",
                    inc.shape(),
                    dst.dim(),
                    src.dim()
                )));
            }
            matops::check_finite(inc)?;
            let defect = homomorphism_defect(src, dst, inc);
            if defect > STRUCTURE_TOL {
                return Err(Error::Input(format!(
                    "inclusion {k} is not a unital *-homomorphism (defect {defect:.3e})"
                )));
            }
            let r = matops::rank(inc, 1e-10);
            if r != src.dim() {
                return Err(Error::Input(format!("inclusion {k} is not injective (rank {r})")));
            }
        }
        Ok(Self { levels, inclusions })
    }

    /// Only the scalars.
    pub fn trivial() -> Self {
        Self {
            levels: vec![MultiMatrixAlgebra::scalars()],
            inclusions: vec![],
        }
    }

    /// `ℂ ⊂ A` through the unit.
    pub fn over_scalars(alg: MultiMatrixAlgebra) -> Result<Self> {
        let unit = alg.unit();
        let inc = CMatrix::from_column_slice(alg.dim(), 1, unit.as_slice());
        Self::new(vec![MultiMatrixAlgebra::scalars(), alg], vec![inc])
    }

    /// Commutative tower from point counts (level 0 has one point) and, for
    /// each level `k ≥ 1`, the map sending a point of level `k` to its
    /// parent in level `k-1`. Functions are pulled back along the parents.
    pub fn commutative(sizes: &[usize], parents: &[Vec<usize>]) -> Result<Self> {
        if sizes.first() != Some(&1) || parents.len() + 1 != sizes.len() {
            return Err(Error::Input(
                "commutative tower needs sizes[0] = 1 and one parent map per level".into(),
            ));
        }
        check_tower_capacity(sizes.iter().copied())?;
        let levels: Vec<MultiMatrixAlgebra> = sizes.iter().map(|&n| MultiMatrixAlgebra::commutative(n)).collect();
        let mut inclusions = Vec::new();
        for (k, par) in parents.iter().enumerate() {
            if par.len() != sizes[k + 1] || par.iter().any(|&p| p >= sizes[k]) {
                return Err(Error::Input(format!("parent map {k} is malformed")));
            }
            let mut inc = CMatrix::zeros(sizes[k + 1], sizes[k]);
            for (p, &q) in par.iter().enumerate() {
                inc[(p, q)] = c(1.0);
            }
            inclusions.push(inc);
        }
        Self::new(levels, inclusions)
    }

    /// `ℂ ⊂ C(X_1) ⊂ … ⊂ C(X_n)` with `X_k = ℤ_{m_1⋯m_k}` in mixed-radix
    /// coordinates; a point of level `k` projects to its value mod `m_1⋯m_{k-1}`.
    pub fn odometer(moduli: &[usize]) -> Result<Self> {
        if moduli.iter().any(|&m| m < 2) {
            return Err(Error::Input(format!("odometer moduli must be ≥ 2, got {moduli:?}")));
        }
        let mut sizes = vec![1usize];
        for m in moduli {
            sizes.push(sizes.last().unwrap().saturating_mul(*m));
        }
        check_tower_capacity(sizes.iter().copied())?;
        let parents: Vec<Vec<usize>> = (1..sizes.len())
            .map(|k| (0..sizes[k]).map(|p| p % sizes[k - 1]).collect())
            .collect();
        Self::commutative(&sizes, &parents)
    }

    /// `ℂ ⊂ M_{k_1} ⊂ M_{k_1 k_2} ⊂ …` with `a ↦ a ⊗ I`.
    pub fn uhf(sizes: &[usize]) -> Result<Self> {
        if sizes.iter().any(|&k| k < 2) {
            return Err(Error::Input(format!("UHF sizes must be ≥ 2, got {sizes:?}")));
        }
        let mut dims = vec![1usize];
        for k in sizes {
            dims.push(dims.last().unwrap().saturating_mul(*k));
        }
        check_tower_capacity(dims.iter().map(|d| d.saturating_mul(*d)))?;
        let levels = dims.iter().map(|&d| MultiMatrixAlgebra::full_matrix(d)).collect();
        let inclusions = sizes
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let d = dims[j];
                let big = d * k;
                let mut inc = CMatrix::zeros(big * big, d * d);
                for i in 0..d {
                    for l in 0..d {
                        for r in 0..k {
                            inc[((i * k + r) * big + l * k + r, i * d + l)] = c(1.0);
                        }
                    }
                }
                inc
            })
            .collect();
        Self::new(levels, inclusions)
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn top(&self) -> &MultiMatrixAlgebra {
        self.levels.last().unwrap()
    }

    /// Coordinate map from level `k` into the top level.
    pub fn to_top(&self, k: usize) -> CMatrix {
        let mut m = matops::identity(self.levels[k].dim());
        for inc in &self.inclusions[k..] {
            m = inc * m;
        }
        m
    }

    pub fn embed(&self, k: usize, a: &CVector) -> CVector {
        self.to_top(k) * a
    }

    /// Smallest level containing the top-level element `a`.
    pub fn minimal_level(&self, a: &CVector) -> usize {
        let scale = a.norm().max(1.0);
        for k in 0..self.levels.len() {
            let q = matops::column_space(&self.to_top(k), 1e-10);
            let residual = a - &q * (q.adjoint() * a);
            if residual.norm() <= 1e-10 * scale {
                return k;
            }
        }
        self.depth()
    }

    /// Restriction of a top-level state to level `k`.
    pub fn restrict_state(&self, state: &AlgState, k: usize) -> Result<AlgState> {
        let w = state.functional(self.top());
        let wk = self.to_top(k).transpose() * w;
        AlgState::from_functional(&self.levels[k], &wk)
    }
}

/// Max deviation of `map` from a unital `*`-homomorphism on basis products.
pub fn homomorphism_defect(src: &MultiMatrixAlgebra, dst: &MultiMatrixAlgebra, inc: &CMatrix) -> f64 {
    let mut worst = (inc * src.unit() - dst.unit()).camax();
    let images: Vec<CVector> = (0..src.dim()).map(|k| inc.column(k).into_owned()).collect();
    for (i, ei) in src.basis().iter().enumerate() {
        worst = worst.max((inc * src.adjoint(ei) - dst.adjoint(&images[i])).camax());
        for (j, ej) in src.basis().iter().enumerate() {
            let lhs = inc * src.multiply(ei, ej);
            let rhs = dst.multiply(&images[i], &images[j]);
            worst = worst.max((lhs - rhs).camax());
        }
    }
    worst
}

/// Orthogonal layers `Q_0, Q_1, …` with `Q_m` projecting onto
/// `π(A_m)ξ ⊖ π(A_{m-1})ξ`.
pub fn ortho_layers(f: &Filtration, g: &GNSData) -> Result<Vec<CMatrix>> {
    if g.algebra.block_dims != f.top().block_dims {
        return Err(Error::Input(
            "GNS data is not built on the top level of the filtration".into(),
        ));
    }
    let n = g.hilbert_dim();
    let mut layers = Vec::with_capacity(f.levels.len());
    let mut previous = CMatrix::zeros(n, n);
    for (m, level) in f.levels.iter().enumerate() {
        let emb = f.to_top(m);
        let mut span = CMatrix::zeros(n, level.dim());
        for k in 0..level.dim() {
            let a = emb.column(k).into_owned();
            span.column_mut(k).copy_from(&(g.represent(&a) * &g.cyclic));
        }
        let q = matops::column_space(&span, 1e-10);
        if q.ncols() != level.dim() {
            return Err(Error::RankDeficiency {
                level: m,
                expected: level.dim(),
                found: q.ncols(),
            });
        }
        let p = &q * q.adjoint();
        layers.push(&p - &previous);
        previous = p;
    }
    Ok(layers)
}

/// Ranks of the layers, i.e. `dim A_m - dim A_{m-1}`.
pub fn layer_ranks(f: &Filtration) -> Vec<usize> {
    let dims: Vec<usize> = f.levels.iter().map(|l| l.dim()).collect();
    (0..dims.len())
        .map(|m| if m == 0 { dims[0] } else { dims[m] - dims[m - 1] })
        .collect()
}

pub fn check_schedule(schedule: &[f64], layers: usize) -> Result<()> {
    if schedule.len() != layers {
        return Err(Error::Schedule(format!(
            "schedule has {} entries for {} layers",
            schedule.len(),
            layers
        )));
    }
    if schedule.iter().any(|l| !l.is_finite()) {
        return Err(Error::Schedule("schedule entries must be finite".into()));
    }
    if schedule[0] != 0.0 {
        return Err(Error::Schedule(format!("λ_0 must be 0, got {}", schedule[0])));
    }
    for m in 1..schedule.len() {
        if schedule[m].abs() <= schedule[m - 1].abs() {
            return Err(Error::Schedule(format!(
                "|λ_{m}| = {} does not exceed |λ_{}| = {}",
                schedule[m].abs(),
                m - 1,
                schedule[m - 1].abs()
            )));
        }
    }
    Ok(())
}

/// `λ_0 = 0`, `λ_m = (Σ_{k≤m} rank E_k)^{1/s}`. Aims at
/// summability just above `s`.
pub fn default_schedule(f: &Filtration, s: f64) -> Result<Vec<f64>> {
    if !(s > 0.0) {
        return Err(Error::Schedule(format!("summability target must be positive, got {s}")));
    }
    let ranks = layer_ranks(f);
    let mut cumulative = 0usize;
    let out: Vec<f64> = ranks
        .iter()
        .enumerate()
        .map(|(m, r)| {
            cumulative += r;
            if m == 0 {
                0.0
            } else {
                (cumulative as f64).powf(1.0 / s)
            }
        })
        .collect();
    check_schedule(&out, ranks.len())?;
    Ok(out)
}

/// `D = Σ_m λ_m Q_m`.
pub fn ci_dirac(f: &Filtration, g: &GNSData, schedule: &[f64]) -> Result<CMatrix> {
    check_schedule(schedule, f.levels.len())?;
    let layers = ortho_layers(f, g)?;
    let n = g.hilbert_dim();
    let mut d = CMatrix::zeros(n, n);
    for (q, &l) in layers.iter().zip(schedule) {
        d += q * c(l);
    }
    Ok(matops::symmetrize(&d))
}

/// Odd triple `(A_top, L²(A, φ), Σ λ_m Q_m)`.
pub fn ci_triple(f: &Filtration, state: &AlgState, schedule: &[f64]) -> Result<SpectralTriple> {
    let g = gns(f.top(), state)?;
    let d = ci_dirac(f, &g, schedule)?;
    SpectralTriple::odd(g.rep.clone(), d, format!("CI({})", f.top().label))
}

/// Matrix entry in JSON: a real number or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    pub fn value(self) -> C64 {
        match self {
            Entry::Real(x) => c(x),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }

    pub fn from_value(z: C64) -> Self {
        if z.im == 0.0 {
            Entry::Real(z.re)
        } else {
            Entry::Complex([z.re, z.im])
        }
    }
}

pub fn matrix_from_rows(rows: &[Vec<Entry>]) -> Result<CMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("matrix rows must be nonempty and of equal length".into()));
    }
    Ok(CMatrix::from_fn(nrows, ncols, |i, j| rows[i][j].value()))
}

pub fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<Entry>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| Entry::from_value(m[(i, j)])).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StateSpec {
    /// Normalized trace (uniform measure in the commutative case).
    Trace,
    Point {
        index: usize,
    },
    Weights {
        weights: Vec<Vec<f64>>,
    },
    Densities {
        densities: Vec<Vec<Vec<Entry>>>,
    },
}

impl StateSpec {
    pub fn build(&self, alg: &MultiMatrixAlgebra) -> Result<AlgState> {
        match self {
            StateSpec::Trace => Ok(AlgState::normalized_trace(alg)),
            StateSpec::Point { index } => AlgState::point_mass(alg, *index),
            StateSpec::Weights { weights } => AlgState::diagonal(alg, weights),
            StateSpec::Densities { densities } => {
                let blocks = densities
                    .iter()
                    .map(|rows| matrix_from_rows(rows))
                    .collect::<Result<Vec<_>>>()?;
                AlgState::new(alg, blocks)
            }
        }
    }
}

/// JSON description `{levels, inclusions, state}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiltrationSpec {
    pub levels: Vec<Vec<usize>>,
    pub inclusions: Vec<Vec<Vec<Entry>>>,
    pub state: StateSpec,
}

impl FiltrationSpec {
    pub fn build(&self) -> Result<(Filtration, AlgState)> {
        let levels = self
            .levels
            .iter()
            .enumerate()
            .map(|(k, dims)| MultiMatrixAlgebra::new(dims.clone(), format!("A_{k}")))
            .collect::<Result<Vec<_>>>()?;
        let inclusions = self
            .inclusions
            .iter()
            .map(|rows| matrix_from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        let f = Filtration::new(levels, inclusions)?;
        let state = self.state.build(f.top())?;
        Ok((f, state))
    }

    pub fn describe(f: &Filtration, state: StateSpec) -> Self {
        Self {
            levels: f.levels.iter().map(|l| l.block_dims.clone()).collect(),
            inclusions: f.inclusions.iter().map(matrix_to_rows).collect(),
            state,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("filtration spec serializes")
    }
}
