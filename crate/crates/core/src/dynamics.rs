//! Group actions on truncated algebras: odometers and their dual
//! automorphisms, product-type and inner automorphisms, equicontinuity
//! suprema with period certificates, the two-sided constant `C` with
//! `L ≤ L_Γ ≤ C·L`, ε-chain partitions of finite metric actions, and the
//! tail diagnostic for infinite tensor products of unitaries.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{homomorphism_defect, Filtration, MultiMatrixAlgebra};
use crate::error::{Error, Result};
use crate::matops::{self, c, CMatrix, CVector, C64};
use crate::qmetric::Smoothed;

type RVector = nalgebra::DVector<f64>;
use crate::random;
use crate::triple::{SpectralTriple, NULL_TOL};

/// Longest period searched for when detecting `α^p = id`.
pub const MAX_PERIOD: usize = 64;
const MAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdometerSpec {
    pub moduli: Vec<usize>,
    pub level: usize,
}

impl OdometerSpec {
    pub fn new(moduli: Vec<usize>, level: usize) -> Result<Self> {
        let s = Self { moduli, level };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.moduli.iter().any(|&m| m < 2) {
            return Err(Error::Input(format!(
                "odometer moduli must be ≥ 2, got {:?}",
                self.moduli
            )));
        }
        if self.level == 0 || self.level > self.moduli.len() {
            return Err(Error::Input(format!(
                "level {} outside 1..={}",
                self.level,
                self.moduli.len()
            )));
        }
        Ok(())
    }

    pub fn active_moduli(&self) -> &[usize] {
        &self.moduli[..self.level]
    }

    pub fn size(&self) -> usize {
        self.active_moduli().iter().product()
    }

    /// `x_1 + x_2 m_1 + x_3 m_1 m_2 + …`
    pub fn encode(&self, digits: &[usize]) -> Result<usize> {
        let m = self.active_moduli();
        if digits.len() != m.len() {
            return Err(Error::Input(format!(
                "expected {} digits, got {}",
                m.len(),
                digits.len()
            )));
        }
        let mut value = 0;
        let mut scale = 1;
        for (k, (&x, &mk)) in digits.iter().zip(m).enumerate() {
            if x >= mk {
                return Err(Error::Input(format!("digit {k} = {x} out of range 0..{mk}")));
            }
            value += x * scale;
            scale *= mk;
        }
        Ok(value)
    }

    pub fn decode(&self, mut value: usize) -> Vec<usize> {
        self.active_moduli()
            .iter()
            .map(|&m| {
                let d = value % m;
                value /= m;
                d
            })
            .collect()
    }

    /// Add one to the first digit and carry to the right, wrapping at the top.
    pub fn step(&self, digits: &[usize]) -> Result<Vec<usize>> {
        self.encode(digits)?;
        let mut out = digits.to_vec();
        for (x, &m) in out.iter_mut().zip(self.active_moduli()) {
            *x += 1;
            if *x < m {
                return Ok(out);
            }
            *x = 0;
        }
        Ok(out)
    }

    pub fn orbit_length(&self, start: &[usize]) -> Result<usize> {
        let mut x = self.step(start)?;
        let mut n = 1;
        while x != start {
            x = self.step(&x)?;
            n += 1;
        }
        Ok(n)
    }
}

/// Certificate attached to a supremum over the group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Certificate {
    /// `α^p = id` on the element's level, so the scan over one period is exact.
    ExactByPeriod { period: Vec<usize> },
    /// Only `|g_i| ≤ range` was scanned.
    WindowBounded { range: usize },
}

impl Certificate {
    pub fn is_exact(&self) -> bool {
        matches!(self, Certificate::ExactByPeriod { .. })
    }
}

/// An action of `ℤ^d` on algebra coordinates by invertible coordinate maps,
/// with optional filtration and per-level period certificates.
#[derive(Debug, Clone)]
pub struct ActionModel {
    pub algebra_dim: usize,
    /// Used for automorphism checks when the coordinates carry an algebra.
    pub algebra: Option<MultiMatrixAlgebra>,
    pub filtration: Option<Filtration>,
    pub generators: Vec<CMatrix>,
    pub inverses: Vec<CMatrix>,
    /// `periods[i][k]`: period of generator `i` on level `k`.
    pub periods: Vec<Vec<Option<usize>>>,
    /// Whether generator `i` maps every level into itself.
    pub fixes_filtration: Vec<bool>,
    pub label: String,
}

impl ActionModel {
    /// Validates each generator as a unital `*`-automorphism of `algebra`
    /// (when given) and detects periods on every filtration level.
    pub fn new(
        algebra: Option<MultiMatrixAlgebra>,
        filtration: Option<Filtration>,
        generators: Vec<CMatrix>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let Some(first) = generators.first() else {
            return Err(Error::Input("an action needs at least one generator".into()));
        };
        let n = first.nrows();
        if let Some(f) = &filtration {
            if f.top().dim() != n {
                return Err(Error::Input(
                    "filtration top level does not match the coordinate space".into(),
                ));
            }
        }
        if let Some(a) = &algebra {
            if a.dim() != n {
                return Err(Error::Input("algebra does not match the coordinate space".into()));
            }
        }
        let mut inverses = Vec::new();
        for (i, g) in generators.iter().enumerate() {
            if g.shape() != (n, n) {
                return Err(Error::Input(format!("generator {i} has shape {:?}", g.shape())));
            }
            matops::check_finite(g)?;
            if let Some(a) = &algebra {
                let defect = homomorphism_defect(a, a, g);
                if defect > 1e-10 {
                    return Err(Error::Input(format!(
                        "generator {i} is not a unital *-automorphism (defect {defect:.3e})"
                    )));
                }
            }
            let inv = g
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Input(format!("generator {i} is not invertible")))?;
            inverses.push(inv);
        }
        let levels: Vec<CMatrix> = match &filtration {
            Some(f) => (0..f.levels.len()).map(|k| f.to_top(k)).collect(),
            None => vec![matops::identity(n)],
        };
        let mut periods = Vec::new();
        let mut fixes = Vec::new();
        for g in &generators {
            periods.push(levels.iter().map(|e| detect_period(g, e)).collect());
            fixes.push(levels.iter().all(|e| maps_into(g, e)));
        }
        Ok(Self {
            algebra_dim: n,
            algebra,
            filtration,
            generators,
            inverses,
            periods,
            fixes_filtration: fixes,
            label: label.into(),
        })
    }

    pub fn trivial(algebra: MultiMatrixAlgebra, filtration: Option<Filtration>, d: usize) -> Result<Self> {
        let n = algebra.dim();
        Self::new(
            Some(algebra),
            filtration,
            vec![matops::identity(n); d.max(1)],
            "trivial",
        )
    }

    /// Dual of the odometer on `ℂ ⊂ C(X_1) ⊂ … ⊂ C(X_n)`: `θ(f) = f ∘ T^{-1}`.
    pub fn odometer_dual(spec: &OdometerSpec) -> Result<Self> {
        spec.validate()?;
        let f = Filtration::odometer(spec.active_moduli())?;
        let n = spec.size();
        let mut g = CMatrix::zeros(n, n);
        for x in 0..n {
            g[(x, (x + n - 1) % n)] = c(1.0);
        }
        Self::new(
            Some(f.top().clone()),
            Some(f),
            vec![g],
            format!("odometer{:?}", spec.active_moduli()),
        )
    }

    /// Commuting coordinate shifts on `C(X^(1) × … × X^(d))`, one odometer per
    /// coordinate; points are ordered lexicographically with coordinate 1
    /// most significant. Level `k` of the filtration is the product of the
    /// level-`k` truncations.
    pub fn product_odometer(moduli: &[Vec<usize>]) -> Result<Self> {
        if moduli.is_empty() {
            return Err(Error::Input("product odometer needs at least one coordinate".into()));
        }
        let specs = moduli
            .iter()
            .map(|m| OdometerSpec::new(m.clone(), m.len()))
            .collect::<Result<Vec<_>>>()?;
        let sizes: Vec<usize> = specs.iter().map(|s| s.size()).collect();
        let total: usize = sizes.iter().product();
        let depth = moduli.iter().map(|m| m.len()).max().unwrap();
        let level_size = |k: usize, i: usize| moduli[i][..k.min(moduli[i].len())].iter().product::<usize>();
        let decode = |mut p: usize, dims: &[usize]| -> Vec<usize> {
            let mut out = vec![0; dims.len()];
            for i in (0..dims.len()).rev() {
                out[i] = p % dims[i];
                p /= dims[i];
            }
            out
        };
        let encode = |x: &[usize], dims: &[usize]| x.iter().zip(dims).fold(0, |acc, (v, d)| acc * d + v);
        let mut level_counts = Vec::new();
        let mut parents = Vec::new();
        for k in 0..=depth {
            let dims: Vec<usize> = (0..moduli.len()).map(|i| level_size(k, i)).collect();
            level_counts.push(dims.iter().product::<usize>());
            if k > 0 {
                let prev: Vec<usize> = (0..moduli.len()).map(|i| level_size(k - 1, i)).collect();
                let par = (0..level_counts[k])
                    .map(|p| {
                        let x = decode(p, &dims);
                        let y: Vec<usize> = x.iter().zip(&prev).map(|(v, m)| v % m).collect();
                        encode(&y, &prev)
                    })
                    .collect();
                parents.push(par);
            }
        }
        let f = Filtration::commutative(&level_counts, &parents)?;
        let generators = (0..moduli.len())
            .map(|i| {
                let mut g = CMatrix::zeros(total, total);
                for p in 0..total {
                    let mut x = decode(p, &sizes);
                    x[i] = (x[i] + sizes[i] - 1) % sizes[i];
                    g[(p, encode(&x, &sizes))] = c(1.0);
                }
                g
            })
            .collect();
        Self::new(
            Some(f.top().clone()),
            Some(f),
            generators,
            format!("product-odometer{moduli:?}"),
        )
    }

    /// `Ad(U_1 ⊗ … ⊗ U_n)` on the UHF truncation `M_{k_1} ⊗ … ⊗ M_{k_n}`.
    pub fn product_automorphism(unitaries: &[CMatrix]) -> Result<Self> {
        let sizes = unitaries
            .iter()
            .enumerate()
            .map(|(i, u)| {
                if !u.is_square() || !matops::is_unitary(u, 1e-10) {
                    return Err(Error::Input(format!("factor {i} is not unitary")));
                }
                Ok(u.nrows())
            })
            .collect::<Result<Vec<_>>>()?;
        let f = Filtration::uhf(&sizes)?;
        let mut w = matops::identity(1);
        for u in unitaries {
            w = matops::kron(&w, u)?;
        }
        Self::new(
            Some(f.top().clone()),
            Some(f),
            vec![conjugation_map(&w)],
            format!("product-type{sizes:?}"),
        )
    }

    /// `Ad(V)` on a single full matrix algebra, with an optional filtration.
    pub fn inner(v: &CMatrix, filtration: Option<Filtration>) -> Result<Self> {
        if !v.is_square() || !matops::is_unitary(v, 1e-10) {
            return Err(Error::Input("implementing matrix is not unitary".into()));
        }
        let alg = MultiMatrixAlgebra::full_matrix(v.nrows());
        Self::new(Some(alg), filtration, vec![conjugation_map(v)], "inner")
    }

    /// Diagonal phase action `e_n ↦ e^{2πinθ} e_n` on Fourier modes `n ∈ [-F, F]`.
    pub fn rotation(fourier_radius: usize, theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::Input("rotation angle must be finite".into()));
        }
        let n = 2 * fourier_radius + 1;
        let phases: Vec<C64> = (0..n)
            .map(|k| {
                let mode = k as f64 - fourier_radius as f64;
                C64::from_polar(1.0, 2.0 * std::f64::consts::PI * mode * theta)
            })
            .collect();
        let g = CMatrix::from_diagonal(&CVector::from_vec(phases));
        Self::new(None, None, vec![g], format!("rotation({theta})"))
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn levels(&self) -> usize {
        self.periods[0].len()
    }

    /// Coordinate map of `α_g` for `g ∈ ℤ^d`.
    pub fn group_map(&self, g: &[i64]) -> CMatrix {
        assert_eq!(g.len(), self.rank(), "group element has wrong rank");
        let mut m = matops::identity(self.algebra_dim);
        for (i, &gi) in g.iter().enumerate() {
            let base = if gi >= 0 {
                &self.generators[i]
            } else {
                &self.inverses[i]
            };
            for _ in 0..gi.unsigned_abs() {
                m = base * m;
            }
        }
        m
    }

    pub fn act(&self, g: &[i64], a: &CVector) -> CVector {
        self.group_map(g) * a
    }

    /// Smallest filtration level containing `a` (0 without a filtration).
    pub fn level_of(&self, a: &CVector) -> usize {
        match &self.filtration {
            Some(f) => f.minimal_level(a),
            None => 0,
        }
    }

    /// Group elements to scan for elements of level `k`: one full period box
    /// when every generator has a period there, otherwise `[-R, R]^d`.
    pub fn scan_set(&self, level: usize, range: usize) -> (Vec<Vec<i64>>, Certificate) {
        let periods: Option<Vec<usize>> = self.periods.iter().map(|p| p[level]).collect();
        match periods {
            Some(p) => (
                box_points(&p.iter().map(|&x| (0, x as i64 - 1)).collect::<Vec<_>>()),
                Certificate::ExactByPeriod { period: p },
            ),
            None => {
                let r = range as i64;
                (
                    box_points(&vec![(-r, r); self.rank()]),
                    Certificate::WindowBounded { range },
                )
            }
        }
    }

    /// Verifies `α_i β_j = β_j α_i` on every basis vector.
    pub fn check_commutes(&self, other: &ActionModel) -> Result<()> {
        if other.algebra_dim != self.algebra_dim {
            return Err(Error::Input("actions live on different coordinate spaces".into()));
        }
        for a in &self.generators {
            for b in &other.generators {
                let diff = a * b - b * a;
                for k in 0..self.algebra_dim {
                    let dev = diff.column(k).iter().map(|z| z.norm()).fold(0.0, f64::max);
                    if dev > 1e-10 {
                        return Err(Error::Commutation {
                            basis_index: k,
                            deviation: dev,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Functional of `φ ∘ α_g` from the functional of `φ`.
    pub fn pullback_functional(&self, w: &CVector, g: &[i64]) -> CVector {
        self.group_map(g).transpose() * w
    }
}

/// Coordinate map of `a ↦ W a W*` on `M_n` with row-major coordinates.
pub fn conjugation_map(w: &CMatrix) -> CMatrix {
    w.kronecker(&w.map(|z| z.conj()))
}

fn box_points(ranges: &[(i64, i64)]) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for &(lo, hi) in ranges {
        out = out
            .into_iter()
            .flat_map(|p| {
                (lo..=hi).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

fn detect_period(g: &CMatrix, level: &CMatrix) -> Option<usize> {
    let mut v = level.clone();
    for p in 1..=MAX_PERIOD {
        v = g * v;
        if matops::max_abs(&(&v - level)) <= MAP_TOL {
            return Some(p);
        }
    }
    None
}

fn maps_into(g: &CMatrix, level: &CMatrix) -> bool {
    let q = matops::column_space(level, 1e-10);
    let image = g * level;
    let residual = &image - &q * (q.adjoint() * &image);
    matops::max_abs(&residual) <= 1e-10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquicontSup {
    pub value: f64,
    pub certificate: Certificate,
    /// `(g, L(α_g(a)))` over the scanned set.
    pub profile: Vec<(Vec<i64>, f64)>,
}

fn check_dims(t: &SpectralTriple, action: &ActionModel) -> Result<()> {
    if t.algebra_dim() != action.algebra_dim {
        return Err(Error::Input(format!(
            "triple has {} algebra coordinates, action acts on {}",
            t.algebra_dim(),
            action.algebra_dim
        )));
    }
    Ok(())
}

/// `L_Γ(a) = sup_g L(α_g(a))`, exact over one period when available.
pub fn equicontinuity_sup(t: &SpectralTriple, action: &ActionModel, a: &CVector, range: usize) -> Result<EquicontSup> {
    check_dims(t, action)?;
    let level = action.level_of(a);
    let (gs, certificate) = action.scan_set(level, range);
    let profile: Vec<(Vec<i64>, f64)> = gs
        .par_iter()
        .map(|g| {
            let moved = action.act(g, a);
            Ok((g.clone(), t.seminorm(&moved)?))
        })
        .collect::<Result<_>>()?;
    let value = profile.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(EquicontSup {
        value,
        certificate,
        profile,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsometryWitness {
    pub element: usize,
    pub g: Vec<i64>,
    pub seminorm: f64,
    pub moved_seminorm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsometryReport {
    pub isometric: bool,
    pub max_deviation: f64,
    pub witness: Option<IsometryWitness>,
    pub certificates: Vec<Certificate>,
}

/// `|L(α_g a) - L(a)| ≤ 1e-9 (1 + L(a))` over one period (or the window
/// when no period is known) for each sampled element.
pub fn isometry_check(
    t: &SpectralTriple,
    action: &ActionModel,
    sample: &[CVector],
    range: usize,
) -> Result<IsometryReport> {
    check_dims(t, action)?;
    let mut report = IsometryReport {
        isometric: true,
        max_deviation: 0.0,
        witness: None,
        certificates: Vec::new(),
    };
    let mut worst_excess = 0.0;
    for (i, a) in sample.iter().enumerate() {
        let base = t.seminorm(a)?;
        let sup = equicontinuity_sup(t, action, a, range)?;
        for (g, l) in &sup.profile {
            let dev = (l - base).abs();
            report.max_deviation = report.max_deviation.max(dev);
            let excess = dev / (1.0 + base);
            if excess > 1e-9 && excess > worst_excess {
                worst_excess = excess;
                report.isometric = false;
                report.witness = Some(IsometryWitness {
                    element: i,
                    g: g.clone(),
                    seminorm: base,
                    moved_seminorm: *l,
                });
            }
        }
        report.certificates.push(sup.certificate);
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquicontOptions {
    pub restarts: usize,
    pub samples: usize,
    pub validation: usize,
    pub seed: u64,
    pub range: usize,
}

impl Default for EquicontOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            samples: 200,
            validation: 200,
            seed: 0,
            range: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquicontConstant {
    pub constant: f64,
    /// Best ratio `L(α_g a) / L(a)` found for each scanned `g`.
    pub ratios: Vec<(Vec<i64>, f64)>,
    pub certificate: Certificate,
    pub validation_samples: usize,
    pub validation_violations: usize,
}

/// Matrix whose columns are `vec([D, π(b_i)])`.
fn commutator_columns(t: &SpectralTriple, elements: &[CVector]) -> CMatrix {
    let n = t.hilbert_dim();
    let mut out = CMatrix::zeros(n * n, elements.len());
    for (i, b) in elements.iter().enumerate() {
        let cm = matops::commutator(&t.dirac, &t.represent(b));
        out.column_mut(i).copy_from(&matops::vec_rowmajor(&cm));
    }
    out
}

fn unvec(v: &CVector, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| v[i * n + j])
}

/// `‖unvec(M c)‖` and its ascent direction in `c`.
pub(crate) fn norm_and_direction(m: &CMatrix, coeffs: &CVector, n: usize) -> (f64, CVector) {
    let x = unvec(&(m * coeffs), n);
    let (sigma, pairs) = matops::top_singular_pairs(&x, 1e-9);
    let mut dir = CVector::zeros(coeffs.len());
    if sigma == 0.0 || pairs.is_empty() {
        return (sigma, dir);
    }
    for (u, v) in &pairs {
        let outer = CMatrix::from_fn(n, n, |r, s| u[r].conj() * v[s]);
        let w = m.transpose() * matops::vec_rowmajor(&outer);
        dir += w.map(|z| z.conj());
    }
    (sigma, dir / c(pairs.len() as f64))
}

const POLISHED_STARTS: usize = 3;
const POLISHED_GROUP_ELEMENTS: usize = 2;
const POLISH_BUDGET: usize = 2000;
const REFINE_ROUNDS: usize = 12;

struct RatioProblem<'a> {
    num: &'a CMatrix,
    den: &'a CMatrix,
    n: usize,
    kernel: &'a CMatrix,
}

impl RatioProblem<'_> {
    fn project(&self, v: &CVector) -> CVector {
        let mut out = v - self.kernel * (self.kernel.adjoint() * v);
        let norm = out.norm();
        if norm > 0.0 {
            out /= c(norm);
        }
        out
    }

    fn ratio(&self, v: &CVector) -> f64 {
        let top = matops::opnorm_unchecked(&unvec(&(self.num * v), self.n));
        let bottom = matops::opnorm_unchecked(&unvec(&(self.den * v), self.n));
        top / bottom
    }

    fn ascend(&self, start: &CVector) -> (f64, CVector) {
        let mut x = self.project(start);
        let mut best = self.ratio(&x);
        let mut step = 0.5;
        for _ in 0..400 {
            let (top, gt) = norm_and_direction(self.num, &x, self.n);
            let (bottom, gb) = norm_and_direction(self.den, &x, self.n);
            let grad = gt / c(bottom) - gb * c(top / (bottom * bottom));
            let grad = &grad - self.kernel * (self.kernel.adjoint() * &grad);
            let gnorm = grad.norm();
            if gnorm < 1e-14 {
                break;
            }
            let mut improved = false;
            while step > 1e-12 {
                let cand = self.project(&(&x + &grad * c(step / gnorm)));
                let r = self.ratio(&cand);
                if r > best {
                    best = r;
                    x = cand;
                    improved = true;
                    step = (step * 2.0).min(1.0);
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (best, x)
    }

    /// Block ascent: with the top singular pair `(u, v)` of the moved
    /// commutator fixed, `min ‖[D, a]‖ s.t. Re⟨u, N(a) v⟩ = 1` is convex;
    /// each round cannot lower the ratio.
    fn refine(&self, start: &CVector, rounds: usize) -> (f64, CVector) {
        let k = start.len();
        let mut x = self.project(start);
        let mut best = self.ratio(&x);
        // real coordinates (Re a, Im a), with the kernel directions removed
        let mut fixed: Vec<RVector> = Vec::new();
        for col in self.kernel.column_iter() {
            for z in [c(1.0), C64::new(0.0, 1.0)] {
                fixed.push(realify(&(col.into_owned() * z)));
            }
        }
        for _ in 0..rounds {
            let (_, pairs) = matops::top_singular_pairs(&unvec(&(self.num * &x), self.n), 1e-12);
            let Some((u, v)) = pairs.first() else { break };
            let g = CVector::from_iterator(
                k,
                (0..k).map(|j| u.dotc(&(unvec(&self.num.column(j).into_owned(), self.n) * v))),
            );
            let w = RVector::from_iterator(2 * k, g.iter().map(|z| z.re).chain(g.iter().map(|z| -z.im)));
            let ww = w.norm_squared();
            if ww == 0.0 {
                break;
            }
            let a0 = complexify(&(&w / ww));
            let mut span = fixed.clone();
            orthonormalize_into(&mut span, &w);
            let first_free = span.len();
            for i in 0..2 * k {
                let mut e = RVector::zeros(2 * k);
                e[i] = 1.0;
                orthonormalize_into(&mut span, &e);
            }
            let free: Vec<CVector> = span[first_free..].iter().map(complexify).collect();
            let pencil = Smoothed {
                a0: self.dilation(&a0),
                dirs: free.iter().map(|b| self.dilation(b)).collect(),
            };
            let (_, y) = pencil.minimize(RVector::zeros(free.len()), 200);
            let cand = free.iter().zip(y.iter()).fold(a0, |acc, (b, &t)| acc + b * c(t));
            let cand = self.project(&cand);
            let r = self.ratio(&cand);
            if r <= best * (1.0 + 1e-14) {
                if r > best {
                    best = r;
                    x = cand;
                }
                break;
            }
            best = r;
            x = cand;
        }
        (best, x)
    }

    /// `[[0, X], [X*, 0]]` for `X = [D, π(b)]`.
    fn dilation(&self, b: &CVector) -> CMatrix {
        let m = unvec(&(self.den * b), self.n);
        matops::block2(
            &CMatrix::zeros(self.n, self.n),
            &m,
            &m.adjoint(),
            &CMatrix::zeros(self.n, self.n),
        )
    }

    /// Pattern search from `start`; the top singular value is often
    /// degenerate at the optimum, where the gradient step stalls.
    fn polish<R: Rng>(&self, start: &CVector, rng: &mut R, budget: usize) -> f64 {
        let dim = start.len();
        let mut x = self.project(start);
        let mut best = self.ratio(&x);
        let mut step = 1e-2;
        let mut evals = 0;
        while step > 1e-10 && evals < budget {
            let mut dirs: Vec<CVector> = Vec::with_capacity(4 * dim + 2 * dim);
            for k in 0..dim {
                for z in [c(1.0), c(-1.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)] {
                    let mut e = CVector::zeros(dim);
                    e[k] = z;
                    dirs.push(e);
                }
            }
            for _ in 0..2 * dim {
                let d = CVector::from_vec(random::complex_vec(rng, dim));
                let norm = d.norm();
                dirs.push(d / c(norm));
            }
            let mut improved = false;
            for d in &dirs {
                let cand = self.project(&(&x + d * c(step)));
                let r = self.ratio(&cand);
                evals += 1;
                if r > best {
                    best = r;
                    x = cand;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best
    }
}

/// Computed constant `C ≥ 1` with `L ≤ L_Γ ≤ C·L` on the span of `basis`,
/// by ratio ascent from the best random samples, then validated on fresh
/// random elements.
pub fn equicont_constant(
    t: &SpectralTriple,
    action: &ActionModel,
    basis: &[CVector],
    opts: &EquicontOptions,
) -> Result<EquicontConstant> {
    check_dims(t, action)?;
    if basis.is_empty() {
        return Err(Error::Input("empty basis".into()));
    }
    let n = t.hilbert_dim();
    // the ratio is scale free; fixing the scale keeps D and tD on the same path
    let raw = commutator_columns(t, basis);
    let scale = match matops::max_abs(&raw) {
        m if m > 0.0 => 1.0 / m,
        _ => 1.0,
    };
    let den = raw * c(scale);
    let svd = den.clone().svd(false, true);
    let vt = svd.v_t.as_ref().expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let kernel_rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= NULL_TOL * smax.max(1.0))
        .collect();
    let mut kernel_dim = kernel_rows.len() + basis.len().saturating_sub(svd.singular_values.len());
    let mut kernel = CMatrix::zeros(basis.len(), kernel_rows.len());
    for (j, &i) in kernel_rows.iter().enumerate() {
        kernel.column_mut(j).copy_from(&vt.row(i).adjoint());
    }
    // constants in the span are allowed in the kernel
    let unit = t.rep.unit();
    let scalars_in_span = kernel_rows.iter().all(|&i| {
        let coeffs = vt.row(i).adjoint();
        let elem = basis
            .iter()
            .zip(coeffs.iter())
            .fold(CVector::zeros(unit.len()), |acc, (b, z)| acc + b * *z);
        let p = t.represent(&elem);
        let scalar = p[(0, 0)];
        matops::max_abs(&(p - matops::identity(n) * scalar)) < 1e-8
    });
    if kernel_dim > 1 || !scalars_in_span {
        return Err(Error::Degeneracy(format!(
            "seminorm kernel on the span has dimension {kernel_dim} beyond the constants"
        )));
    }
    kernel_dim = kernel_dim.min(1);
    let kernel = kernel.columns(0, kernel_dim.min(kernel.ncols())).into_owned();

    let level = basis.iter().map(|b| action.level_of(b)).max().unwrap_or(0);
    let (gs, certificate) = action.scan_set(level, opts.range);
    let moved: Vec<CMatrix> = gs
        .iter()
        .map(|g| {
            let moved: Vec<CVector> = basis.iter().map(|b| action.act(g, b)).collect();
            commutator_columns(t, &moved) * c(scale)
        })
        .collect();

    let problem = |gi: usize| RatioProblem {
        num: &moved[gi],
        den: &den,
        n,
        kernel: &kernel,
    };
    let seeded = |gi: usize, salt: u64| random::rng(opts.seed ^ salt ^ (gi as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let ascended: Vec<Vec<(f64, CVector)>> = (0..gs.len())
        .into_par_iter()
        .map(|gi| {
            let problem = problem(gi);
            let mut rng = seeded(gi, 0);
            let mut samples: Vec<(f64, CVector)> = (0..opts.samples.max(opts.restarts))
                .map(|_| {
                    let v = problem.project(&CVector::from_vec(random::complex_vec(&mut rng, basis.len())));
                    (problem.ratio(&v), v)
                })
                .collect();
            samples.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
            let mut out: Vec<(f64, CVector)> = samples
                .iter()
                .take(opts.restarts)
                .map(|(_, v)| problem.ascend(v))
                .collect();
            out.push(samples[0].clone());
            out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
            out.truncate(POLISHED_STARTS);
            out
        })
        .collect();
    let mut ratios: Vec<(Vec<i64>, f64)> = gs.iter().cloned().zip(ascended.iter().map(|a| a[0].0)).collect();
    // only the leading group elements can set the constant
    let mut order: Vec<usize> = (0..gs.len()).collect();
    order.sort_by(|&a, &b| {
        ratios[b]
            .1
            .partial_cmp(&ratios[a].1)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let polished: Vec<(usize, f64)> = order
        .into_iter()
        .take(POLISHED_GROUP_ELEMENTS)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|gi| {
            let problem = problem(gi);
            let mut rng = seeded(gi, 0x9011_5E);
            let best = ascended[gi]
                .iter()
                .map(|(_, v)| {
                    let (r, x) = problem.refine(v, REFINE_ROUNDS);
                    r.max(problem.polish(&x, &mut rng, POLISH_BUDGET))
                })
                .fold(ascended[gi][0].0, f64::max);
            (gi, best)
        })
        .collect();
    for (gi, best) in polished {
        ratios[gi].1 = best;
    }
    let constant = ratios.iter().map(|r| r.1).fold(1.0, f64::max);

    let mut rng = random::rng(opts.seed.wrapping_add(0x5EED));
    let mut violations = 0;
    for _ in 0..opts.validation {
        let v = CVector::from_vec(random::complex_vec(&mut rng, basis.len()));
        let l = matops::opnorm_unchecked(&unvec(&(&den * &v), n));
        let lg = moved
            .iter()
            .map(|m| matops::opnorm_unchecked(&unvec(&(m * &v), n)))
            .fold(0.0, f64::max);
        let slack = 1e-9 * (1.0 + l);
        if l > lg + slack || lg > constant * l + slack {
            violations += 1;
        }
    }
    Ok(EquicontConstant {
        constant,
        ratios,
        certificate,
        validation_samples: opts.validation,
        validation_violations: violations,
    })
}

/// Max ratio `L_Γ(a)/L(a)` over plain random combinations of `basis`; an
/// independent lower estimate of the constant.
pub fn sampled_ratio<R: Rng>(
    t: &SpectralTriple,
    action: &ActionModel,
    basis: &[CVector],
    samples: usize,
    range: usize,
    rng: &mut R,
) -> Result<f64> {
    check_dims(t, action)?;
    let level = basis.iter().map(|b| action.level_of(b)).max().unwrap_or(0);
    let (gs, _) = action.scan_set(level, range);
    let maps: Vec<CMatrix> = gs.iter().map(|g| action.group_map(g)).collect();
    let mut best: f64 = 1.0;
    for _ in 0..samples {
        let coeffs = random::complex_vec(rng, basis.len());
        let a = basis
            .iter()
            .zip(&coeffs)
            .fold(CVector::zeros(action.algebra_dim), |acc, (b, z)| acc + b * *z);
        let l = t.seminorm(&a)?;
        if l <= 1e-12 {
            continue;
        }
        for m in &maps {
            best = best.max(t.seminorm(&(m * &a))? / l);
        }
    }
    Ok(best)
}

/// Finite metric space with a group acting by permutations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteMetricAction {
    pub points: usize,
    pub dist: Vec<Vec<f64>>,
    /// `generators[i][x]` is the image of point `x`.
    pub generators: Vec<Vec<usize>>,
}

impl FiniteMetricAction {
    pub fn new(dist: Vec<Vec<f64>>, generators: Vec<Vec<usize>>) -> Result<Self> {
        let m = Self {
            points: dist.len(),
            dist,
            generators,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points;
        if n == 0 || self.dist.len() != n || self.dist.iter().any(|r| r.len() != n) {
            return Err(Error::Input("distance matrix must be square with `points` rows".into()));
        }
        check_metric(&self.dist)?;
        for (i, g) in self.generators.iter().enumerate() {
            let mut seen = vec![false; n];
            if g.len() != n {
                return Err(Error::Input(format!("generator {i} has wrong length")));
            }
            for &y in g {
                if y >= n || seen[y] {
                    return Err(Error::Input(format!("generator {i} is not a permutation")));
                }
                seen[y] = true;
            }
        }
        Ok(())
    }

    /// Level-`n` odometer points with `d(x, y) = 1/k`, `k` the first
    /// (1-based) differing digit, and the odometer step as generator.
    pub fn odometer(spec: &OdometerSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.size();
        let digits: Vec<Vec<usize>> = (0..n).map(|x| spec.decode(x)).collect();
        let dist = (0..n)
            .map(|x| {
                (0..n)
                    .map(|y| match digits[x].iter().zip(&digits[y]).position(|(a, b)| a != b) {
                        Some(k) => 1.0 / (k + 1) as f64,
                        None => 0.0,
                    })
                    .collect()
            })
            .collect();
        let step = (0..n).map(|x| (x + 1) % n).collect();
        Self::new(dist, vec![step])
    }

    /// Sets `d(x, y) = value` and restores the triangle inequality by
    /// shortest-path closure.
    pub fn with_shortcut(&self, x: usize, y: usize, value: f64) -> Result<Self> {
        if x >= self.points || y >= self.points || x == y || !(value > 0.0) {
            return Err(Error::Input("invalid shortcut".into()));
        }
        let mut d = self.dist.clone();
        d[x][y] = d[x][y].min(value);
        d[y][x] = d[x][y];
        let n = self.points;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        Self::new(d, self.generators.clone())
    }
}

pub fn check_metric(d: &[Vec<f64>]) -> Result<()> {
    let n = d.len();
    for i in 0..n {
        if d[i].len() != n {
            return Err(Error::Input("distance matrix is not square".into()));
        }
        if d[i][i] != 0.0 {
            return Err(Error::Input(format!("d({i},{i}) ≠ 0")));
        }
        for j in 0..n {
            if !d[i][j].is_finite() || d[i][j] < 0.0 || (d[i][j] - d[j][i]).abs() > 1e-12 {
                return Err(Error::Input(format!("d({i},{j}) invalid or asymmetric")));
            }
            if i != j && d[i][j] == 0.0 {
                return Err(Error::Input(format!("points {i} and {j} at distance 0")));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if d[i][k] > d[i][j] + d[j][k] + 1e-12 {
                    return Err(Error::Input(format!("triangle inequality fails for ({i},{j},{k})")));
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainPartition {
    pub epsilon: f64,
    pub classes: Vec<Vec<usize>>,
    pub class_of: Vec<usize>,
    /// `quotient[i][c]`: class reached from class `c` by generator `i`.
    pub quotient: Vec<Vec<usize>>,
    /// Orbit size of the class of point 0 under the generated group.
    pub index: usize,
}

/// Classes of the graph with edges `d(x, y) < ε`, the induced permutation
/// action on classes, and the stabilizer index of the class of point 0.
pub fn epsilon_chain_partition(m: &FiniteMetricAction, epsilon: f64) -> Result<ChainPartition> {
    if !(epsilon > 0.0) {
        return Err(Error::Input(format!("ε must be positive, got {epsilon}")));
    }
    m.validate()?;
    let n = m.points;
    let mut class_of = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if class_of[start] != usize::MAX {
            continue;
        }
        let id = classes.len();
        let mut members = vec![start];
        class_of[start] = id;
        let mut head = 0;
        while head < members.len() {
            let x = members[head];
            head += 1;
            for y in 0..n {
                if class_of[y] == usize::MAX && m.dist[x][y] < epsilon {
                    class_of[y] = id;
                    members.push(y);
                }
            }
        }
        members.sort_unstable();
        classes.push(members);
    }
    let mut quotient = Vec::new();
    for (gi, g) in m.generators.iter().enumerate() {
        let mut image = vec![usize::MAX; classes.len()];
        for x in 0..n {
            for y in 0..n {
                if class_of[x] == class_of[y] && class_of[g[x]] != class_of[g[y]] {
                    return Err(Error::Invariance { generator: gi, x, y });
                }
            }
            image[class_of[x]] = class_of[g[x]];
        }
        quotient.push(image);
    }
    let mut seen = vec![false; classes.len()];
    let mut orbit = vec![class_of[0]];
    seen[class_of[0]] = true;
    let mut head = 0;
    while head < orbit.len() {
        let cl = orbit[head];
        head += 1;
        for q in &quotient {
            let forward = q[cl];
            let backward = q.iter().position(|&v| v == cl).unwrap_or(cl);
            for next in [forward, backward] {
                if !seen[next] {
                    seen[next] = true;
                    orbit.push(next);
                }
            }
        }
    }
    Ok(ChainPartition {
        epsilon,
        classes,
        class_of,
        quotient,
        index: orbit.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerDiagnostic {
    /// `tails[j][m - j - 1] = ‖U_{j+1} ⊗ … ⊗ U_m - 1‖` for `m = j+1..=n`.
    pub tails: Vec<Vec<f64>>,
    pub sup_tails: Vec<f64>,
    /// Heuristic at finite depth: the last supremum is at most half the first.
    pub decaying: bool,
}

/// Eigenphases of a unitary, read off a generic real combination of its
/// Hermitian and skew-Hermitian parts.
pub fn eigenphases(u: &CMatrix) -> Result<Vec<f64>> {
    if !u.is_square() || !matops::is_unitary(u, 1e-10) {
        return Err(Error::Input("matrix is not unitary".into()));
    }
    let re = (u + u.adjoint()) * c(0.5);
    let im = (u - u.adjoint()) * C64::new(0.0, -0.5);
    let mix = matops::symmetrize(&(&re + &im * c(0.618_033_988_749_894_8)));
    let (_, vecs) = matops::herm_eig(&mix)?;
    Ok((0..u.nrows())
        .map(|k| {
            let v = vecs.column(k);
            v.dotc(&(u * v)).arg()
        })
        .collect())
}

pub fn inner_convergence_diagnostic(unitaries: &[CMatrix]) -> Result<InnerDiagnostic> {
    if unitaries.len() < 2 {
        return Err(Error::Input("need at least two unitaries".into()));
    }
    let total: usize = unitaries.iter().map(|u| u.nrows()).product();
    if total > 4096 {
        return Err(Error::Capacity {
            requested: total,
            limit: 4096,
        });
    }
    let phases = unitaries.iter().map(eigenphases).collect::<Result<Vec<_>>>()?;
    let n = unitaries.len();
    let mut tails = Vec::with_capacity(n);
    for j in 0..n {
        let mut sums = vec![0.0f64];
        let mut row = Vec::new();
        for p in &phases[j..] {
            sums = sums.iter().flat_map(|s| p.iter().map(move |t| s + t)).collect();
            let worst = sums
                .iter()
                .map(|s| (C64::from_polar(1.0, *s) - c(1.0)).norm())
                .fold(0.0, f64::max);
            row.push(worst);
        }
        tails.push(row);
    }
    let sup_tails: Vec<f64> = tails.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).collect();
    let first = sup_tails[0];
    let last = *sup_tails.last().unwrap();
    let decaying = first < 1e-12 || last <= 0.5 * first;
    Ok(InnerDiagnostic {
        tails,
        sup_tails,
        decaying,
    })
}

fn realify(z: &CVector) -> RVector {
    RVector::from_iterator(2 * z.len(), z.iter().map(|v| v.re).chain(z.iter().map(|v| v.im)))
}

fn complexify(r: &RVector) -> CVector {
    let k = r.len() / 2;
    CVector::from_fn(k, |i, _| C64::new(r[i], r[k + i]))
}

/// Gram-Schmidt step: appends the normalized part of `v` orthogonal to `span`.
fn orthonormalize_into(span: &mut Vec<RVector>, v: &RVector) {
    let mut v = v.clone();
    for _ in 0..2 {
        for q in span.iter() {
            let p = q.dot(&v);
            v -= q * p;
        }
    }
    let norm = v.norm();
    if norm > 1e-10 {
        span.push(v / norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{ci_triple, default_schedule, AlgState};

    fn spec235() -> OdometerSpec {
        OdometerSpec::new(vec![2, 3, 5], 3).unwrap()
    }

    #[test]
    fn encode_examples() {
        let s = spec235();
        assert_eq!(s.encode(&[1, 0, 0]).unwrap(), 1);
        assert_eq!(s.encode(&[1, 2, 4]).unwrap(), 29);
        assert_eq!(s.encode(&[1, 2, 4]).unwrap(), s.size() - 1);
        assert!(s.encode(&[2, 0, 0]).is_err());
        for x in 0..s.size() {
            assert_eq!(s.encode(&s.decode(x)).unwrap(), x);
        }
    }

    #[test]
    fn step_examples() {
        let s = spec235();
        assert_eq!(s.step(&[0, 0, 0]).unwrap(), vec![1, 0, 0]);
        assert_eq!(s.step(&[1, 2, 4]).unwrap(), vec![0, 0, 0]);
        assert_eq!(s.orbit_length(&[0, 0, 0]).unwrap(), 30);
        for x in 0..s.size() {
            let y = s.encode(&s.step(&s.decode(x)).unwrap()).unwrap();
            assert_eq!(y, (x + 1) % 30);
        }
    }

    #[test]
    fn dual_automorphism_examples() {
        let a = ActionModel::odometer_dual(&OdometerSpec::new(vec![2], 1).unwrap()).unwrap();
        let swap = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        assert_eq!(a.generators[0], swap);

        let a = ActionModel::odometer_dual(&OdometerSpec::new(vec![2, 3], 2).unwrap()).unwrap();
        // θ(δ_x) = δ_{x+1}
        for x in 0..6 {
            let e = a.filtration.as_ref().unwrap().top().basis_element(x);
            let img = a.act(&[1], &e);
            assert_eq!(img[(x + 1) % 6], c(1.0));
        }
        assert_eq!(a.periods[0], vec![Some(1), Some(2), Some(6)]);
        assert!(a.fixes_filtration[0]);
        let alg = a.filtration.as_ref().unwrap().top().clone();
        let w = AlgState::normalized_trace(&alg).functional(&alg);
        assert!((a.pullback_functional(&w, &[1]) - &w).norm() < 1e-15);
    }

    #[test]
    fn product_automorphism_examples() {
        let id = matops::identity(2);
        let a = ActionModel::product_automorphism(&[id.clone(), id.clone()]).unwrap();
        assert!(matops::max_abs(&(&a.generators[0] - matops::identity(16))) < 1e-15);

        let theta = 0.3;
        let u = CMatrix::from_diagonal(&CVector::from_vec(vec![
            c(1.0),
            C64::from_polar(1.0, std::f64::consts::PI * theta),
        ]));
        let a = ActionModel::product_automorphism(std::slice::from_ref(&u)).unwrap();
        let alg = MultiMatrixAlgebra::full_matrix(2);
        for k in [0, 3] {
            let e = alg.basis_element(k);
            assert!((a.act(&[1], &e) - &e).norm() < 1e-14);
        }
        let w = AlgState::normalized_trace(&alg).functional(&alg);
        assert!((a.pullback_functional(&w, &[1]) - &w).norm() < 1e-14);
        assert!(ActionModel::product_automorphism(&[matops::diag_real(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn trivial_and_isometric_sups() {
        let f = Filtration::odometer(&[2, 3]).unwrap();
        let s = default_schedule(&f, 1.5).unwrap();
        let t = ci_triple(&f, &AlgState::normalized_trace(f.top()), &s).unwrap();
        let triv = ActionModel::trivial(f.top().clone(), Some(f.clone()), 1).unwrap();
        let odo = ActionModel::odometer_dual(&OdometerSpec::new(vec![2, 3], 2).unwrap()).unwrap();
        let mut r = random::rng(3);
        for _ in 0..5 {
            let a = CVector::from_vec(random::complex_vec(&mut r, 6));
            let l = t.seminorm(&a).unwrap();
            let sup = equicontinuity_sup(&t, &triv, &a, 4).unwrap();
            assert!((sup.value - l).abs() < 1e-12);
            let sup = equicontinuity_sup(&t, &odo, &a, 4).unwrap();
            assert!((sup.value - l).abs() < 1e-9 * (1.0 + l));
            assert_eq!(sup.certificate, Certificate::ExactByPeriod { period: vec![6] });
            let scaled = equicontinuity_sup(&t, &odo, &(&a * C64::new(0.0, -2.5)), 4).unwrap();
            assert!((scaled.value - 2.5 * sup.value).abs() < 1e-9 * (1.0 + l));
        }
        let basis = f.top().basis();
        assert!(isometry_check(&t, &odo, &basis, 4).unwrap().isometric);
        let ec = equicont_constant(&t, &odo, &basis, &EquicontOptions::default()).unwrap();
        assert!((ec.constant - 1.0).abs() < 1e-9);
        assert_eq!(ec.validation_violations, 0);
    }

    #[test]
    fn non_invariant_state_breaks_isometry() {
        let f = Filtration::odometer(&[2, 3]).unwrap();
        let s = default_schedule(&f, 1.5).unwrap();
        let mu = [0.05, 0.25, 0.1, 0.2, 0.3, 0.1];
        let t = ci_triple(&f, &AlgState::from_measure(f.top(), &mu).unwrap(), &s).unwrap();
        let odo = ActionModel::odometer_dual(&OdometerSpec::new(vec![2, 3], 2).unwrap()).unwrap();
        let report = isometry_check(&t, &odo, &f.top().basis(), 4).unwrap();
        assert!(!report.isometric);
        let w = report.witness.unwrap();
        assert!((w.seminorm - w.moved_seminorm).abs() > 1e-9);
    }

    #[test]
    fn inner_conjugation_constant() {
        let f = Filtration::over_scalars(MultiMatrixAlgebra::full_matrix(2)).unwrap();
        let rho = matops::diag_real(&[0.7, 0.3]);
        let state = AlgState::new(f.top(), vec![rho]).unwrap();
        let t = ci_triple(&f, &state, &[0.0, 1.0]).unwrap();
        let w = random::random_unitary(&mut random::rng(5), 2);
        let v = &w * CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0), C64::new(0.0, 1.0)])) * w.adjoint();
        let act = ActionModel::inner(&v, Some(f.clone())).unwrap();
        assert_eq!(act.periods[0][1], Some(4));
        let basis = f.top().basis();
        let opts = EquicontOptions::default();
        let ec = equicont_constant(&t, &act, &basis, &opts).unwrap();
        assert!(ec.constant > 1.0 + 1e-6);
        assert_eq!(ec.validation_violations, 0);
        let mut r = random::rng(11);
        let sampled = sampled_ratio(&t, &act, &basis, 500, 4, &mut r).unwrap();
        assert!(sampled <= ec.constant * (1.0 + 1e-9));
        let scaled = equicont_constant(&t.with_scaled_dirac(3.0), &act, &basis, &opts).unwrap();
        assert!((scaled.constant - ec.constant).abs() < 1e-6 * ec.constant);
    }

    #[test]
    fn degenerate_triple_rejected() {
        let f = Filtration::odometer(&[2]).unwrap();
        let t = crate::triple::diagonal_triple(CMatrix::zeros(2, 2), "zero").unwrap();
        let act = ActionModel::odometer_dual(&OdometerSpec::new(vec![2], 1).unwrap()).unwrap();
        let r = equicont_constant(&t, &act, &f.top().basis(), &EquicontOptions::default());
        assert!(matches!(r, Err(Error::Degeneracy(_))));
    }

    #[test]
    fn chain_partitions() {
        let spec = OdometerSpec::new(vec![2, 3, 4], 3).unwrap();
        let m = FiniteMetricAction::odometer(&spec).unwrap();
        let p = epsilon_chain_partition(&m, 2.0).unwrap();
        assert_eq!((p.classes.len(), p.index), (1, 1));
        let p = epsilon_chain_partition(&m, 1.0 / 1.5).unwrap();
        assert_eq!((p.classes.len(), p.index), (2, 2));
        let p = epsilon_chain_partition(&m, 1.0 / 2.5).unwrap();
        assert_eq!((p.classes.len(), p.index), (6, 6));
        let p = epsilon_chain_partition(&m, 1.0 / 3.5).unwrap();
        assert_eq!((p.classes.len(), p.index), (24, 24));
        // classes are cylinders: same first digits
        for cl in &p.classes {
            assert_eq!(cl.len(), 1);
        }
        // no edge shorter than ε crosses classes
        let p = epsilon_chain_partition(&m, 0.4).unwrap();
        for x in 0..24 {
            for y in 0..24 {
                if m.dist[x][y] < 0.4 {
                    assert_eq!(p.class_of[x], p.class_of[y]);
                }
            }
        }
        let bad = m.with_shortcut(0, 2, 0.1).unwrap();
        assert!(matches!(
            epsilon_chain_partition(&bad, 0.4),
            Err(Error::Invariance { .. })
        ));
    }

    #[test]
    fn metric_validation() {
        assert!(FiniteMetricAction::new(vec![vec![0.0, 1.0], vec![2.0, 0.0]], vec![]).is_err());
        let tri = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]];
        assert!(FiniteMetricAction::new(tri, vec![]).is_err());
        assert!(epsilon_chain_partition(&FiniteMetricAction::new(vec![vec![0.0]], vec![]).unwrap(), 0.0).is_err());
    }

    #[test]
    fn inner_diagnostics() {
        let id = matops::identity(2);
        let d = inner_convergence_diagnostic(&[id.clone(), id.clone(), id]).unwrap();
        assert!(d.tails.iter().flatten().all(|&t| t < 1e-12));
        assert!(d.decaying);

        let flip = matops::diag_real(&[1.0, -1.0]);
        let d = inner_convergence_diagnostic(&vec![flip; 5]).unwrap();
        assert!(d.tails.iter().flatten().all(|&t| (t - 2.0).abs() < 1e-12));
        assert!(!d.decaying);

        let us: Vec<CMatrix> = (1..=6)
            .map(|i| {
                CMatrix::from_diagonal(&CVector::from_vec(vec![
                    c(1.0),
                    C64::from_polar(1.0, std::f64::consts::PI / 2f64.powi(i)),
                ]))
            })
            .collect();
        let d = inner_convergence_diagnostic(&us).unwrap();
        for (j, row) in d.tails.iter().enumerate() {
            let bound: f64 = (j + 1..=6).map(|i| std::f64::consts::PI / 2f64.powi(i as i32)).sum();
            assert!(row.iter().all(|&t| t <= bound + 1e-12));
        }
        assert!(d.decaying);
        assert!(inner_convergence_diagnostic(&vec![matops::identity(4); 7]).is_err());
    }

    #[test]
    fn product_odometer_commutes() {
        let a = ActionModel::product_odometer(&[vec![2], vec![3]]).unwrap();
        assert_eq!(a.rank(), 2);
        let b0 = ActionModel::new(None, None, vec![a.generators[0].clone()], "a").unwrap();
        let b1 = ActionModel::new(None, None, vec![a.generators[1].clone()], "b").unwrap();
        b0.check_commutes(&b1).unwrap();
        assert_eq!(a.periods[0][1], Some(2));
        assert_eq!(a.periods[1][1], Some(3));
        let inner = ActionModel::inner(&crate::random::random_unitary(&mut random::rng(1), 2), None).unwrap();
        let other = ActionModel::inner(&matops::diag_real(&[1.0, -1.0]), None).unwrap();
        assert!(matches!(inner.check_commutes(&other), Err(Error::Commutation { .. })));
    }
}
