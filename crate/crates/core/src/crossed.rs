//! Truncated crossed products `A ⋊ ℤ^d`: covariant representations on
//! `𝖧_A ⊗ ℓ²(window)`, the even and odd crossed Dirac operators, interior
//! seminorms, Fourier coefficients, band cut-downs and the iterated `ℤ^d`
//! construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::Entry;
use crate::dynamics::{ActionModel, Certificate};
use crate::error::{Error, Result};
use crate::groupgeo::{m_l_operator, sup_norm, LatticeWindow, LengthFunction};
use crate::matops::{self, c, CMatrix, CVector, C64, I};
use crate::random;
use crate::triple::{scalar_rep, AmplifiedRep, Parity, Representation, SpectralTriple};

/// Finite sum `Σ_k x_k λ_k` with algebra coordinates `x_k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrossedElement {
    pub terms: BTreeMap<Vec<i64>, CVector>,
}

impl CrossedElement {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(k: Vec<i64>, a: CVector) -> Self {
        let mut x = Self::new();
        x.add_term(k, a);
        x
    }

    pub fn add_term(&mut self, k: Vec<i64>, a: CVector) {
        match self.terms.get_mut(&k) {
            Some(v) => *v += a,
            None => {
                self.terms.insert(k, a);
            }
        }
    }

    pub fn coeff(&self, k: &[i64]) -> Option<&CVector> {
        self.terms.get(k)
    }

    pub fn support_radius(&self) -> usize {
        self.terms
            .iter()
            .filter(|(_, v)| v.iter().any(|z| z.norm() > 0.0))
            .map(|(k, _)| sup_norm(k))
            .max()
            .unwrap_or(0)
    }

    /// Coordinates ordered by support point (outer) and algebra coordinate.
    pub fn to_coords(&self, support: &LatticeWindow, n_a: usize) -> Result<CVector> {
        let mut out = CVector::zeros(support.size() * n_a);
        for (k, v) in &self.terms {
            if v.len() != n_a {
                return Err(Error::Input(format!(
                    "coefficient at {k:?} has {} coordinates, expected {n_a}",
                    v.len()
                )));
            }
            let idx = support.index_of(k).ok_or_else(|| {
                Error::Input(format!(
                    "{k:?} lies outside the support window of radius {}",
                    support.radius
                ))
            })?;
            out.rows_mut(idx * n_a, n_a).copy_from(v);
        }
        Ok(out)
    }

    pub fn from_coords(coords: &CVector, support: &LatticeWindow, n_a: usize) -> Self {
        let mut x = Self::new();
        for (idx, k) in support.points().into_iter().enumerate() {
            let v = coords.rows(idx * n_a, n_a).into_owned();
            if v.iter().any(|z| z.norm() > 0.0) {
                x.terms.insert(k, v);
            }
        }
        x
    }

    pub fn scaled(&self, z: C64) -> Self {
        Self {
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v * z)).collect(),
        }
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut x = self.clone();
        for (k, v) in &other.terms {
            x.add_term(k.clone(), -v);
        }
        x
    }

    /// Terms with `|k|_∞ ≤ radius`.
    pub fn truncated(&self, radius: usize) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| sup_norm(k) <= radius)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Gaussian coefficients on every point of `[-radius, radius]^d`.
    pub fn random<R: Rng>(rng: &mut R, d: usize, radius: usize, n_a: usize) -> Self {
        let w = LatticeWindow { d, radius };
        let mut x = Self::new();
        for k in w.points() {
            x.terms.insert(k, CVector::from_vec(random::complex_vec(rng, n_a)));
        }
        x
    }

    pub fn to_json(&self) -> String {
        let json = ElementJson {
            terms: self
                .terms
                .iter()
                .map(|(k, v)| TermJson {
                    k: if k.len() == 1 {
                        KeyJson::Scalar(k[0])
                    } else {
                        KeyJson::Vector(k.clone())
                    },
                    coeff: v.iter().map(|z| Entry::from_value(*z)).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&json).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let json: ElementJson = serde_json::from_str(s)?;
        let mut x = Self::new();
        let mut dim = None;
        for t in json.terms {
            let k = match t.k {
                KeyJson::Scalar(v) => vec![v],
                KeyJson::Vector(v) => v,
            };
            if *dim.get_or_insert(k.len()) != k.len() || k.is_empty() {
                return Err(Error::Config("group elements of mixed dimension".into()));
            }
            x.add_term(
                k,
                CVector::from_iterator(t.coeff.len(), t.coeff.into_iter().map(Entry::value)),
            );
        }
        Ok(x)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementJson {
    terms: Vec<TermJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermJson {
    k: KeyJson,
    coeff: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KeyJson {
    Scalar(i64),
    Vector(Vec<i64>),
}

/// Covariant pair `(π̃, λ)` on `𝖧_A ⊗ ℓ²(window)`, with `𝖧_A` the outer
/// factor. Shifts are zero-padded at the window boundary. Algebra
/// coordinates are `(support point, A-coordinate)`.
#[derive(Debug)]
pub struct CrossedRep {
    pub base: Arc<dyn Representation>,
    pub action: ActionModel,
    pub window: LatticeWindow,
    pub support: LatticeWindow,
    back_maps: Vec<CMatrix>,
    involution: CMatrix,
}

impl CrossedRep {
    pub fn new(
        base: Arc<dyn Representation>,
        action: ActionModel,
        window: LatticeWindow,
        support_radius: usize,
    ) -> Result<Self> {
        if action.algebra_dim != base.algebra_dim() {
            return Err(Error::Input(format!(
                "action acts on {} coordinates, algebra has {}",
                action.algebra_dim,
                base.algebra_dim()
            )));
        }
        if action.rank() != window.d {
            return Err(Error::Input(format!(
                "action of ℤ^{} on a window of dimension {}",
                action.rank(),
                window.d
            )));
        }
        if support_radius > window.radius {
            return Err(Error::Capacity {
                requested: support_radius,
                limit: window.radius,
            });
        }
        let h = base.hilbert_dim() * window.size();
        if h > matops::DEFAULT_MAX_DIM {
            return Err(Error::Capacity {
                requested: h,
                limit: matops::DEFAULT_MAX_DIM,
            });
        }
        let support = LatticeWindow {
            d: window.d,
            radius: support_radius,
        };
        let back_maps: Vec<CMatrix> = window.points().iter().map(|g| action.group_map(&negate(g))).collect();
        let n_a = base.algebra_dim();
        let j_a = base.involution();
        let mut involution = CMatrix::zeros(support.size() * n_a, support.size() * n_a);
        for (ki, k) in support.points().iter().enumerate() {
            let target = support.index_of(&negate(k)).expect("support is symmetric");
            let g = &back_maps[window.index_of(k).expect("support inside window")];
            involution
                .view_mut((target * n_a, ki * n_a), (n_a, n_a))
                .copy_from(&(g * &j_a));
        }
        Ok(Self {
            base,
            action,
            window,
            support,
            back_maps,
            involution,
        })
    }

    pub fn fiber_dim(&self) -> usize {
        self.base.hilbert_dim()
    }

    /// `π̃(a)`: block `π(α_{-g}(a))` at window point `g`.
    pub fn pi_tilde(&self, a: &CVector) -> CMatrix {
        let (nh, nw) = (self.fiber_dim(), self.window.size());
        let mut out = CMatrix::zeros(nh * nw, nh * nw);
        for (gi, map) in self.back_maps.iter().enumerate() {
            let block = self.base.represent(&(map * a));
            place_block(&mut out, &block, nw, gi, gi);
        }
        out
    }

    /// Zero-padded shift `ξ ⊗ δ_g ↦ ξ ⊗ δ_{g+h}`.
    pub fn lambda(&self, h: &[i64]) -> CMatrix {
        let (nh, nw) = (self.fiber_dim(), self.window.size());
        let mut out = CMatrix::zeros(nh * nw, nh * nw);
        for (gi, g) in self.window.points().iter().enumerate() {
            if let Some(ti) = self.window.index_of(&add(g, h)) {
                for r in 0..nh {
                    out[(r * nw + ti, r * nw + gi)] = c(1.0);
                }
            }
        }
        out
    }

    /// Hilbert indices of fibers over points with `|g|_∞ ≤ N - margin`.
    pub fn interior_columns(&self, margin: usize) -> Vec<usize> {
        let nw = self.window.size();
        let pts = self.window.interior(margin);
        (0..self.fiber_dim())
            .flat_map(|r| pts.iter().map(move |&p| r * nw + p))
            .collect()
    }

    /// `‖λ_h π̃(a) λ_h* - π̃(α_h(a))‖` on vectors supported within `N - |h|`.
    pub fn covariance_defect(&self, a: &CVector, h: &[i64]) -> f64 {
        let lam = self.lambda(h);
        let lhs = &lam * self.pi_tilde(a) * lam.adjoint();
        let rhs = self.pi_tilde(&self.action.act(h, a));
        restricted_norm(&(lhs - rhs), &self.interior_columns(sup_norm(h)))
    }

    pub fn element(&self, x: &CrossedElement) -> Result<CMatrix> {
        Ok(self.represent(&x.to_coords(&self.support, self.base.algebra_dim())?))
    }

    /// Block `(0, -k)` of `x`, which equals `π(x_k)` for interior-supported `x`,
    /// read back in algebra coordinates.
    pub fn fourier_coefficient(&self, x: &CMatrix, k: &[i64]) -> Result<CVector> {
        let (nh, nw) = (self.fiber_dim(), self.window.size());
        let col = self
            .window
            .index_of(&negate(k))
            .ok_or_else(|| Error::Input(format!("{k:?} outside the window")))?;
        let row = self.window.origin_index();
        let block = CMatrix::from_fn(nh, nh, |r, s| x[(r * nw + row, s * nw + col)]);
        self.base_preimage(&block)
    }

    fn base_preimage(&self, block: &CMatrix) -> Result<CVector> {
        let n_a = self.base.algebra_dim();
        let nh = self.fiber_dim();
        let mut basis = CMatrix::zeros(nh * nh, n_a);
        for i in 0..n_a {
            let m = self.base.represent(&self.base.basis_element(i));
            basis.column_mut(i).copy_from(&matops::vec_rowmajor(&m));
        }
        let svd = basis.svd(true, true);
        svd.solve(&matops::vec_rowmajor(block), 1e-12)
            .map_err(|e| Error::Input(format!("coefficient recovery failed: {e}")))
    }
}

impl Representation for CrossedRep {
    fn algebra_dim(&self) -> usize {
        self.support.size() * self.base.algebra_dim()
    }

    fn hilbert_dim(&self) -> usize {
        self.fiber_dim() * self.window.size()
    }

    fn represent(&self, coords: &CVector) -> CMatrix {
        let (nh, nw, n_a) = (self.fiber_dim(), self.window.size(), self.base.algebra_dim());
        let mut out = CMatrix::zeros(nh * nw, nh * nw);
        let points = self.window.points();
        for (ki, k) in self.support.points().iter().enumerate() {
            let xk = coords.rows(ki * n_a, n_a).into_owned();
            if xk.iter().all(|z| *z == c(0.0)) {
                continue;
            }
            for (gi, g) in points.iter().enumerate() {
                let Some(ti) = self.window.index_of(&add(g, k)) else {
                    continue;
                };
                let block = self.base.represent(&(&self.back_maps[ti] * &xk));
                place_block(&mut out, &block, nw, ti, gi);
            }
        }
        out
    }

    fn unit(&self) -> CVector {
        let n_a = self.base.algebra_dim();
        let mut out = CVector::zeros(self.algebra_dim());
        let origin = self.support.origin_index();
        out.rows_mut(origin * n_a, n_a).copy_from(&self.base.unit());
        out
    }

    fn involution(&self) -> CMatrix {
        self.involution.clone()
    }
}

fn negate(g: &[i64]) -> Vec<i64> {
    g.iter().map(|x| -x).collect()
}

fn add(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn place_block(out: &mut CMatrix, block: &CMatrix, nw: usize, row: usize, col: usize) {
    for r in 0..block.nrows() {
        for s in 0..block.ncols() {
            let z = block[(r, s)];
            if z != c(0.0) {
                out[(r * nw + row, s * nw + col)] += z;
            }
        }
    }
}

/// `A ⊗ I_n` written into `out` scaled by `scale`, with offset.
fn add_kron_identity(out: &mut CMatrix, a: &CMatrix, n: usize, offset: usize, scale: C64) {
    for r in 0..a.nrows() {
        for s in 0..a.ncols() {
            let z = a[(r, s)] * scale;
            if z != c(0.0) {
                for p in 0..n {
                    out[(offset + r * n + p, offset + s * n + p)] += z;
                }
            }
        }
    }
}

/// `I_m ⊗ B` written into `out` scaled by `scale`, with offset.
fn add_identity_kron(out: &mut CMatrix, m: usize, b: &CMatrix, offset: usize, scale: C64) {
    let n = b.nrows();
    for i in 0..m {
        for p in 0..n {
            for q in 0..n {
                let z = b[(p, q)] * scale;
                if z != c(0.0) {
                    out[(offset + i * n + p, offset + i * n + q)] += z;
                }
            }
        }
    }
}

pub fn restricted_norm(m: &CMatrix, cols: &[usize]) -> f64 {
    let rows: Vec<usize> = (0..m.nrows()).collect();
    matops::opnorm_unchecked(&matops::submatrix(m, &rows, cols))
}

/// Odd triple of the group on `ℓ²(window)` with Dirac `M_l`; the algebra is
/// the span of `λ_k`, `|k|_∞ ≤ support`.
pub fn group_triple(length: &LengthFunction, window: LatticeWindow, support: usize) -> Result<SpectralTriple> {
    if !length.is_scalar() {
        return Err(Error::Input("group triple needs a scalar length function".into()));
    }
    let trivial = ActionModel::new(None, None, vec![matops::identity(1); window.d], "trivial")?;
    let rep = CrossedRep::new(Arc::new(scalar_rep(1)), trivial, window, support)?;
    let dirac = m_l_operator(length, &window)?;
    SpectralTriple::odd(Arc::new(rep), dirac, format!("group[{}]", window.radius))
}

/// A crossed-product truncation with its Dirac operator and the two
/// commutator parts kept separately.
#[derive(Debug, Clone)]
pub struct CrossedTriple {
    pub triple: SpectralTriple,
    pub rep: Arc<CrossedRep>,
    pub base: SpectralTriple,
    pub length: LengthFunction,
}

impl CrossedTriple {
    /// Even triple from an odd one: corner `D_A ⊗ 1 - i ⊗ M_l`.
    pub fn even(
        base: &SpectralTriple,
        action: &ActionModel,
        length: &LengthFunction,
        window: LatticeWindow,
        support: usize,
    ) -> Result<Self> {
        if base.parity() != Parity::Odd {
            return Err(Error::Parity(format!(
                "'{}' must be odd for the even construction",
                base.label
            )));
        }
        let (rep, m_l) = Self::setup(base, action, length, window, support)?;
        let n = rep.hilbert_dim();
        if 2 * n > matops::DEFAULT_MAX_DIM {
            return Err(Error::Capacity {
                requested: 2 * n,
                limit: matops::DEFAULT_MAX_DIM,
            });
        }
        let nw = window.size();
        let nh = base.hilbert_dim();
        let mut corner = CMatrix::zeros(n, n);
        add_kron_identity(&mut corner, &base.dirac, nw, 0, c(1.0));
        add_identity_kron(&mut corner, nh, &m_l, 0, -I);
        let mut dirac = CMatrix::zeros(2 * n, 2 * n);
        dirac.view_mut((0, n), (n, n)).copy_from(&corner);
        dirac.view_mut((n, 0), (n, n)).copy_from(&corner.adjoint());
        drop(corner);
        let amplified = Arc::new(AmplifiedRep {
            inner: rep.clone(),
            copies: 2,
        });
        let label = format!("({}) x| {}", base.label, action.label);
        let triple = SpectralTriple::even(amplified, dirac, n, label)?;
        Ok(Self {
            triple,
            rep,
            base: base.clone(),
            length: length.clone(),
        })
    }

    /// Odd triple from an even one: `D_T ⊗ 1 + γ ⊗ M_l`.
    pub fn odd(
        base: &SpectralTriple,
        action: &ActionModel,
        length: &LengthFunction,
        window: LatticeWindow,
        support: usize,
    ) -> Result<Self> {
        let Some(split) = base.grading_split else {
            return Err(Error::Parity(format!(
                "'{}' must be graded for the odd construction",
                base.label
            )));
        };
        let (rep, m_l) = Self::setup(base, action, length, window, support)?;
        let n = rep.hilbert_dim();
        let nw = window.size();
        let nh = base.hilbert_dim();
        let mut dirac = CMatrix::zeros(n, n);
        add_kron_identity(&mut dirac, &base.dirac, nw, 0, c(1.0));
        add_identity_kron(&mut dirac, split, &m_l, 0, c(1.0));
        add_identity_kron(&mut dirac, nh - split, &m_l, split * nw, c(-1.0));
        let label = format!("({}) x| {}", base.label, action.label);
        let triple = SpectralTriple::odd(rep.clone(), dirac, label)?;
        Ok(Self {
            triple,
            rep,
            base: base.clone(),
            length: length.clone(),
        })
    }

    fn setup(
        base: &SpectralTriple,
        action: &ActionModel,
        length: &LengthFunction,
        window: LatticeWindow,
        support: usize,
    ) -> Result<(Arc<CrossedRep>, CMatrix)> {
        if !length.is_scalar() {
            return Err(Error::Input(
                "crossed construction needs a scalar length function".into(),
            ));
        }
        let m_l = m_l_operator(length, &window)?;
        let rep = Arc::new(CrossedRep::new(base.rep.clone(), action.clone(), window, support)?);
        Ok((rep, m_l))
    }

    pub fn output_parity(&self) -> Parity {
        self.triple.parity()
    }

    /// Same construction on a window of another radius.
    pub fn with_radius(&self, radius: usize) -> Result<Self> {
        let window = LatticeWindow::new(self.rep.window.d, radius)?;
        let build = if self.output_parity() == Parity::Even {
            Self::even
        } else {
            Self::odd
        };
        build(
            &self.base,
            &self.rep.action,
            &self.length,
            window,
            self.rep.support.radius,
        )
    }

    /// `D_A ⊗ 1` (odd input) or `D_T ⊗ 1` (even input) on `𝖧 ⊗ ℓ²`.
    pub fn horizontal(&self) -> CMatrix {
        let n = self.rep.hilbert_dim();
        let mut out = CMatrix::zeros(n, n);
        add_kron_identity(&mut out, &self.base.dirac, self.rep.window.size(), 0, c(1.0));
        out
    }

    /// `1 ⊗ M_l` (odd input) or `γ ⊗ M_l` (even input).
    pub fn vertical(&self) -> CMatrix {
        let n = self.rep.hilbert_dim();
        let nw = self.rep.window.size();
        let nh = self.base.hilbert_dim();
        let m_l = m_l_operator(&self.length, &self.rep.window).expect("validated at construction");
        let mut out = CMatrix::zeros(n, n);
        match self.base.grading_split {
            None => add_identity_kron(&mut out, nh, &m_l, 0, c(1.0)),
            Some(split) => {
                add_identity_kron(&mut out, split, &m_l, 0, c(1.0));
                add_identity_kron(&mut out, nh - split, &m_l, split * nw, c(-1.0));
            }
        }
        out
    }

    /// `(‖[x, D_A⊗1]‖, ‖[x, 1⊗M_l]‖, ‖[D, x⊕x]‖)` on vectors supported within
    /// `N - support`.
    pub fn interior_parts(&self, x: &CMatrix) -> (f64, f64, f64) {
        let cols = self.rep.interior_columns(self.rep.support.radius);
        let h = matops::commutator(&self.horizontal(), x);
        let v = matops::commutator(&self.vertical(), x);
        let a_part = restricted_norm(&h, &cols);
        let l_part = restricted_norm(&v, &cols);
        let full = match self.output_parity() {
            Parity::Even => {
                let minus = &h - &v * I;
                let plus = &h + &v * I;
                restricted_norm(&minus, &cols).max(restricted_norm(&plus, &cols))
            }
            Parity::Odd => restricted_norm(&(&h + &v), &cols),
        };
        (a_part, l_part, full)
    }

    /// `‖[D, b⊕b]‖` on interior vectors for algebra coordinates `b`.
    pub fn interior_seminorm(&self, b: &CVector) -> f64 {
        self.interior_parts(&self.rep.represent(b)).2
    }

    /// Kernel dimension of `b ↦ [D, π(b)]` over the crossed basis.
    pub fn kernel_dim(&self) -> usize {
        self.triple.nondegenerate_on_basis().kernel_dim
    }

    /// Commutator norms for `x` from the symbol of the periodic band
    /// operator, when the action has a period on `x`'s level, `d = 1` and
    /// `l = ι`.
    pub fn exact_parts(&self, x: &CrossedElement) -> Result<Option<(f64, f64, f64)>> {
        if self.rep.window.d != 1 || self.length != LengthFunction::Iota {
            return Ok(None);
        }
        let level = x.terms.values().map(|v| self.rep.action.level_of(v)).max().unwrap_or(0);
        let Certificate::ExactByPeriod { period } = self.rep.action.scan_set(level, 0).1 else {
            return Ok(None);
        };
        let p = period[0];
        let d_t = &self.base.dirac;
        let gamma = self.base.grading_matrix();
        let mut h_terms = Vec::new();
        let mut v_terms = Vec::new();
        for (k, xk) in &x.terms {
            let k = k[0];
            let mut hs = Vec::with_capacity(p);
            let mut vs = Vec::with_capacity(p);
            for r in 0..p {
                // block from column g ≡ r to row g + k is π(α_{-(g+k)}(x_k))
                let target = -(r as i64 + k);
                let b = self.base.represent(&self.rep.action.act(&[target], xk));
                hs.push(d_t * &b - &b * d_t);
                let shift = match &gamma {
                    None => b * c(k as f64),
                    Some(g) => g * b * c(k as f64),
                };
                vs.push(shift);
            }
            h_terms.push((k, hs));
            v_terms.push((k, vs));
        }
        let combine = |z: C64| -> Vec<(i64, Vec<CMatrix>)> {
            h_terms
                .iter()
                .zip(&v_terms)
                .map(|((k, hs), (_, vs))| (*k, hs.iter().zip(vs).map(|(a, b)| a + b * z).collect()))
                .collect()
        };
        let a_part = bloch_norm(p, &h_terms);
        let l_part = bloch_norm(p, &v_terms);
        let full = match self.output_parity() {
            Parity::Even => bloch_norm(p, &combine(-I)).max(bloch_norm(p, &combine(I))),
            Parity::Odd => bloch_norm(p, &combine(c(1.0))),
        };
        Ok(Some((a_part, l_part, full)))
    }
}

/// Norm of a `P`-periodic band operator on `ℓ²(ℤ) ⊗ ℂ^m` given by
/// `terms = [(k, [B_k(0), …, B_k(P-1)])]`, where `B_k(r)` maps the fiber at
/// `g ≡ r` to the fiber at `g + k`: the supremum over `θ` of its symbol.
pub fn bloch_norm(p: usize, terms: &[(i64, Vec<CMatrix>)]) -> f64 {
    let Some(first) = terms.first() else { return 0.0 };
    let m = first.1[0].nrows();
    let symbol_norm = |theta: f64| -> f64 {
        let mut s = CMatrix::zeros(p * m, p * m);
        for (k, blocks) in terms {
            for (r, b) in blocks.iter().enumerate() {
                let target = r as i64 + k;
                let rr = target.rem_euclid(p as i64) as usize;
                let q = (target - rr as i64) / p as i64;
                let phase = C64::from_polar(1.0, -theta * q as f64);
                let mut view = s.view_mut((rr * m, r * m), (m, m));
                view += b * phase;
            }
        }
        matops::opnorm_unchecked(&s)
    };
    let grid = 256;
    let step = 2.0 * std::f64::consts::PI / grid as f64;
    let (best_i, best) = (0..grid)
        .map(|i| (i, symbol_norm(i as f64 * step)))
        .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
    let (mut lo, mut hi) = ((best_i as f64 - 1.0) * step, (best_i as f64 + 1.0) * step);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (symbol_norm(x1), symbol_norm(x2));
    for _ in 0..60 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = symbol_norm(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = symbol_norm(x2);
        }
    }
    best.max(f1).max(f2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossedSeminorms {
    pub horizontal: f64,
    pub vertical: f64,
    pub full: f64,
    pub window_converged: bool,
    /// Symbol-based values when available.
    pub exact: Option<(f64, f64, f64)>,
    pub envelope_ok: bool,
}

/// Interior commutator norms at window `N`, compared with window `N + 4`.
pub fn crossed_seminorms(ct: &CrossedTriple, x: &CrossedElement) -> Result<CrossedSeminorms> {
    let (a, l, full) = ct.interior_parts(&ct.rep.element(x)?);
    let wider = ct.with_radius(ct.rep.window.radius + 4)?;
    let (_, _, full_wide) = wider.interior_parts(&wider.rep.element(x)?);
    let slack = 1e-10 * (1.0 + a + l);
    let envelope_ok = a.max(l) <= full + slack && full <= a + l + slack;
    Ok(CrossedSeminorms {
        horizontal: a,
        vertical: l,
        full,
        window_converged: (full_wide - full).abs() < 1e-8,
        exact: ct.exact_parts(x)?,
        envelope_ok,
    })
}

#[derive(Debug, Clone)]
pub struct Cutdown {
    pub truncated: CrossedElement,
    /// `‖x - truncation‖` on interior vectors.
    pub residual: f64,
    /// Max entry deviation between the truncation and the band projection
    /// `Σ_{|k| ≤ N} Σ_m P_m x P_{m+k}`.
    pub band_defect: f64,
}

/// Entries of `x` between fibers at lattice distance at most `width`.
pub fn band_projection(rep: &CrossedRep, x: &CMatrix, width: usize) -> CMatrix {
    let nw = rep.window.size();
    let pts = rep.window.points();
    CMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let (p, q) = (&pts[i % nw], &pts[j % nw]);
        let dist = p
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b).unsigned_abs() as usize)
            .max()
            .unwrap_or(0);
        if dist <= width {
            x[(i, j)]
        } else {
            c(0.0)
        }
    })
}

pub fn cutdown(rep: &CrossedRep, x: &CrossedElement, n_cut: usize) -> Result<Cutdown> {
    let truncated = x.truncated(n_cut);
    let full = rep.element(x)?;
    let band = band_projection(rep, &full, n_cut);
    let band_defect = matops::max_abs(&(rep.element(&truncated)? - band));
    let rest = rep.element(&x.minus(&truncated))?;
    let residual = restricted_norm(&rest, &rep.interior_columns(rep.support.radius));
    Ok(Cutdown {
        truncated,
        residual,
        band_defect,
    })
}

/// `β` acting coefficientwise on the crossed coordinates.
pub fn extend_action(action: &ActionModel, support: &LatticeWindow) -> Result<ActionModel> {
    let m = support.size();
    let generators = action
        .generators
        .iter()
        .map(|g| matops::kron(&matops::identity(m), g))
        .collect::<Result<Vec<_>>>()?;
    ActionModel::new(None, None, generators, format!("{}~", action.label))
}

/// Generator `i` of a `ℤ^d` action as a `ℤ` action.
pub fn coordinate_action(action: &ActionModel, i: usize) -> Result<ActionModel> {
    if i >= action.rank() {
        return Err(Error::Input(format!("no generator {i}")));
    }
    Ok(ActionModel {
        algebra_dim: action.algebra_dim,
        algebra: action.algebra.clone(),
        filtration: action.filtration.clone(),
        generators: vec![action.generators[i].clone()],
        inverses: vec![action.inverses[i].clone()],
        periods: vec![action.periods[i].clone()],
        fixes_filtration: vec![action.fixes_filtration[i]],
        label: format!("{}[{i}]", action.label),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRow {
    pub index: usize,
    pub sup: f64,
    pub certificate: Certificate,
}

/// `sup_{g'} ‖[D, β̃_{g'}(b) ⊕ β̃_{g'}(b)]‖` for each basis element `b` of the
/// crossed truncation, with `β` commuting with the crossing action.
pub fn commuting_action_bound(ct: &CrossedTriple, other: &ActionModel, range: usize) -> Result<Vec<BoundRow>> {
    ct.rep.action.check_commutes(other)?;
    let ext = extend_action(other, &ct.rep.support)?;
    let (gs, certificate) = ext.scan_set(0, range);
    let maps: Vec<CMatrix> = gs.iter().map(|g| ext.group_map(g)).collect();
    let n = ct.rep.algebra_dim();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let b = ct.rep.basis_element(i);
            let sup = maps.iter().map(|m| ct.interior_seminorm(&(m * &b))).fold(0.0, f64::max);
            BoundRow {
                index: i,
                sup,
                certificate: certificate.clone(),
            }
        })
        .collect())
}

/// Alternates the even and odd constructions over the coordinates of a
/// `ℤ^d` action in the given order, with `l = ι` and the same window radius
/// in every direction. The Hilbert space is ordered as
/// `ℂ^{2^⌈d/2⌉} ⊗ 𝖧_A ⊗ ℓ²(W^d)` with the first crossed coordinate outermost.
pub fn iterate_zd(
    base: &SpectralTriple,
    action: &ActionModel,
    radius: usize,
    support: usize,
    order: &[usize],
) -> Result<SpectralTriple> {
    let d = action.rank();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..d).collect::<Vec<_>>() {
        return Err(Error::Input(format!("order {order:?} is not a permutation of 0..{d}")));
    }
    if base.parity() != Parity::Odd {
        return Err(Error::Parity("iteration starts from an odd triple".into()));
    }
    let side = 2 * radius + 1;
    let final_dim = side
        .checked_pow(d as u32)
        .and_then(|w| w.checked_mul(base.hilbert_dim()))
        .and_then(|w| w.checked_mul(1 << d.div_ceil(2)))
        .unwrap_or(usize::MAX);
    if final_dim > matops::DEFAULT_MAX_DIM {
        return Err(Error::Capacity {
            requested: final_dim,
            limit: matops::DEFAULT_MAX_DIM,
        });
    }
    let mut coords = (0..d)
        .map(|i| coordinate_action(action, i))
        .collect::<Result<Vec<_>>>()?;
    for i in 0..d {
        for j in i + 1..d {
            coords[i].check_commutes(&coords[j])?;
        }
    }
    let window = LatticeWindow::new(1, radius)?;
    let mut current = base.clone();
    for (step, &j) in order.iter().enumerate() {
        let ct = match current.parity() {
            Parity::Odd => CrossedTriple::even(&current, &coords[j], &LengthFunction::Iota, window, support)?,
            Parity::Even => CrossedTriple::odd(&current, &coords[j], &LengthFunction::Iota, window, support)?,
        };
        for &i in &order[step + 1..] {
            coords[i] = extend_action(&coords[i], &ct.rep.support)?;
        }
        current = ct.triple;
    }
    Ok(current)
}

/// Direct construction with the matrix-valued length `l^(d)`:
/// `D_A ⊗ 1 ⊗ σ_x + 1 ⊗ M_{l^(d)}`, reordered so the Clifford factor is
/// outermost. Only `d ∈ {1, 2}`.
pub fn direct_ld_triple(
    base: &SpectralTriple,
    action: &ActionModel,
    radius: usize,
    support: usize,
) -> Result<SpectralTriple> {
    let d = action.rank();
    if d > 2 {
        return Err(Error::Input(format!(
            "direct l^(d) construction supports d ≤ 2, got {d}"
        )));
    }
    if base.parity() != Parity::Odd {
        return Err(Error::Parity("direct construction needs an odd triple".into()));
    }
    let window = LatticeWindow::new(d, radius)?;
    let rep = Arc::new(CrossedRep::new(base.rep.clone(), action.clone(), window, support)?);
    let n = rep.hilbert_dim();
    if 2 * n > matops::DEFAULT_MAX_DIM {
        return Err(Error::Capacity {
            requested: 2 * n,
            limit: matops::DEFAULT_MAX_DIM,
        });
    }
    let m_l = m_l_operator(&LengthFunction::Ld { d }, &window)?;
    let nh = base.hilbert_dim();
    let nw = window.size();
    // native order 𝖧_A ⊗ ℓ²(W) ⊗ ℂ², index (h, c) ↦ h·2 + c; written with ℂ² outer
    let mut dirac = CMatrix::zeros(2 * n, 2 * n);
    let at = |h: usize, cl: usize| cl * n + h;
    for r in 0..nh {
        for s in 0..nh {
            let z = base.dirac[(r, s)];
            if z == c(0.0) {
                continue;
            }
            for p in 0..nw {
                let (hr, hs) = (r * nw + p, s * nw + p);
                dirac[(at(hr, 0), at(hs, 1))] += z;
                dirac[(at(hr, 1), at(hs, 0))] += z;
            }
        }
    }
    for r in 0..nh {
        for p in 0..nw {
            for cl in 0..2 {
                for q in 0..2 {
                    let z = m_l[(p * 2 + cl, p * 2 + q)];
                    if z != c(0.0) {
                        dirac[(at(r * nw + p, cl), at(r * nw + p, q))] += z;
                    }
                }
            }
        }
    }
    let amplified = Arc::new(AmplifiedRep { inner: rep, copies: 2 });
    let label = format!("({}) x| l^({d}) {}", base.label, action.label);
    if d % 2 == 1 {
        SpectralTriple::even(amplified, dirac, n, label)
    } else {
        SpectralTriple::odd(amplified, dirac, label)
    }
}

/// Spectra of two triples agree eigenvalue by eigenvalue.
pub fn spectra_deviation(a: &SpectralTriple, b: &SpectralTriple) -> Result<f64> {
    Ok(matops::spectral_deviation(&a.spectrum()?, &b.spectrum()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{ci_triple, default_schedule, AlgState, Filtration};
    use crate::dynamics::OdometerSpec;
    use crate::triple::tensor_even;

    fn odometer_setup(moduli: &[usize]) -> (SpectralTriple, ActionModel) {
        let f = Filtration::odometer(moduli).unwrap();
        let s = default_schedule(&f, 1.5).unwrap();
        let t = ci_triple(&f, &AlgState::normalized_trace(f.top()), &s).unwrap();
        let a = ActionModel::odometer_dual(&OdometerSpec::new(moduli.to_vec(), moduli.len()).unwrap()).unwrap();
        (t, a)
    }

    #[test]
    fn trivial_action_is_amplification() {
        let (t, _) = odometer_setup(&[2, 3]);
        let triv = ActionModel::trivial(crate::algebra::MultiMatrixAlgebra::commutative(6), None, 1).unwrap();
        let rep = CrossedRep::new(t.rep.clone(), triv, LatticeWindow::line(3), 1).unwrap();
        let a = CVector::from_vec(random::complex_vec(&mut random::rng(1), 6));
        let expect = matops::kron(&t.represent(&a), &matops::identity(7)).unwrap();
        assert!(matops::max_abs(&(rep.pi_tilde(&a) - expect)) < 1e-14);
    }

    #[test]
    fn covariance_on_interior() {
        let (t, act) = odometer_setup(&[2, 3]);
        let rep = CrossedRep::new(t.rep.clone(), act, LatticeWindow::line(8), 1).unwrap();
        let a = CVector::from_vec(random::complex_vec(&mut random::rng(2), 6));
        assert!(rep.covariance_defect(&a, &[1]) < 1e-12);
        assert!(rep.covariance_defect(&a, &[-3]) < 1e-12);
    }

    #[test]
    fn pi_tilde_blocks_are_periodic() {
        let (t, act) = odometer_setup(&[2, 3]);
        let rep = CrossedRep::new(t.rep.clone(), act, LatticeWindow::line(8), 0).unwrap();
        let a = CVector::from_vec(random::complex_vec(&mut random::rng(3), 6));
        let m = rep.pi_tilde(&a);
        let nw = 17;
        for g in 0..nw - 6 {
            for r in 0..6 {
                for s in 0..6 {
                    assert!((m[(r * nw + g, s * nw + g)] - m[(r * nw + g + 6, s * nw + g + 6)]).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn represent_respects_adjoint() {
        let (t, act) = odometer_setup(&[2, 3]);
        let rep = CrossedRep::new(t.rep.clone(), act, LatticeWindow::line(5), 2).unwrap();
        let mut r = random::rng(4);
        let x = CVector::from_vec(random::complex_vec(&mut r, rep.algebra_dim()));
        let lhs = rep.represent(&x).adjoint();
        let rhs = rep.represent(&rep.adjoint(&x));
        assert!(matops::max_abs(&(lhs - rhs)) < 1e-12);
        let u = rep.represent(&rep.unit());
        assert!(matops::max_abs(&(u - matops::identity(rep.hilbert_dim()))) < 1e-14);
    }

    #[test]
    fn trivial_action_matches_tensor_product() {
        let (t, _) = odometer_setup(&[2, 3]);
        let triv = ActionModel::trivial(crate::algebra::MultiMatrixAlgebra::commutative(6), None, 1).unwrap();
        let w = LatticeWindow::line(6);
        let ct = CrossedTriple::even(&t, &triv, &LengthFunction::Iota, w, 1).unwrap();
        let g = group_triple(&LengthFunction::Iota, w, 1).unwrap();
        let te = tensor_even(&t, &g).unwrap();
        assert!(spectra_deviation(&ct.triple, &te).unwrap() < 1e-10);
    }

    #[test]
    fn commutator_identities() {
        let (t, act) = odometer_setup(&[2, 3]);
        let ct = CrossedTriple::even(&t, &act, &LengthFunction::Iota, LatticeWindow::line(6), 2).unwrap();
        let mut r = random::rng(5);
        let a = CVector::from_vec(random::complex_vec(&mut r, 6));
        let h = 2i64;
        let x = CrossedElement::single(vec![h], a.clone());
        let xm = ct.rep.element(&x).unwrap();
        let cols = ct.rep.interior_columns(2);
        let rows: Vec<usize> = (0..xm.nrows()).collect();
        let vc = matops::commutator(&ct.vertical(), &xm);
        let lhs = matops::submatrix(&vc, &rows, &cols);
        let rhs = matops::submatrix(&(&xm * c(h as f64)), &rows, &cols);
        assert!(matops::max_abs(&(lhs - rhs)) < 1e-12);
        // [D_A ⊗ 1, π̃(a)] has fiber blocks [D_A, π(α_{-g}(a))]
        let hc = matops::commutator(&ct.horizontal(), &ct.rep.pi_tilde(&a));
        let nw = 13;
        for (gi, g) in ct.rep.window.points().iter().enumerate() {
            let b = t.represent(&act.act(&[-g[0]], &a));
            let expect = matops::commutator(&t.dirac, &b);
            for i in 0..6 {
                for j in 0..6 {
                    assert!((hc[(i * nw + gi, j * nw + gi)] - expect[(i, j)]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn odd_construction_examples() {
        let (t, act) = odometer_setup(&[2]);
        let g = group_triple(&LengthFunction::Iota, LatticeWindow::line(3), 1).unwrap();
        let even = tensor_even(&t, &g).unwrap();
        let triv = ActionModel::trivial(crate::algebra::MultiMatrixAlgebra::commutative(2), None, 1).unwrap();
        let w = LatticeWindow::line(2);
        let a = CrossedTriple::even(&t, &triv, &LengthFunction::Iota, LatticeWindow::line(3), 1).unwrap();
        let ext = extend_action(&triv, &a.rep.support).unwrap();
        let odd = CrossedTriple::odd(&a.triple, &ext, &LengthFunction::Iota, w, 1).unwrap();
        let g2 = group_triple(&LengthFunction::Iota, w, 1).unwrap();
        let prod = crate::triple::product_odd(&even, &g2).unwrap();
        assert!(matops::max_abs(&(&odd.triple.dirac - &prod.dirac)) < 1e-10);
        assert_eq!(odd.output_parity(), Parity::Odd);
        assert!(matches!(
            CrossedTriple::odd(&t, &act, &LengthFunction::Iota, w, 1),
            Err(Error::Parity(_))
        ));
        assert!(matches!(
            CrossedTriple::even(&a.triple, &ext, &LengthFunction::Iota, w, 1),
            Err(Error::Parity(_))
        ));
    }

    #[test]
    fn zero_dirac_gives_doubled_length_spectrum() {
        let t_even = SpectralTriple::even(Arc::new(scalar_rep(2)), CMatrix::zeros(2, 2), 1, "zero").unwrap();
        let act = ActionModel::new(None, None, vec![matops::identity(1)], "trivial").unwrap();
        let w = LatticeWindow::line(3);
        let odd = CrossedTriple::odd(&t_even, &act, &LengthFunction::Iota, w, 1).unwrap();
        let mut spec = odd.triple.spectrum().unwrap();
        let mut expect: Vec<f64> = (-3..=3).flat_map(|n| [n as f64, -n as f64]).collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        spec.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(matops::spectral_deviation(&spec, &expect) < 1e-12);
        assert!(odd.triple.grading_split.is_none());
    }

    #[test]
    fn seminorm_examples() {
        let (t, act) = odometer_setup(&[2, 3]);
        let triv = ActionModel::trivial(crate::algebra::MultiMatrixAlgebra::commutative(6), None, 1).unwrap();
        let ct = CrossedTriple::even(&t, &triv, &LengthFunction::Iota, LatticeWindow::line(4), 1).unwrap();
        let mut r = random::rng(6);
        let a = CVector::from_vec(random::complex_vec(&mut r, 6));
        let s = crossed_seminorms(&ct, &CrossedElement::single(vec![0], a.clone())).unwrap();
        let l = t.seminorm(&a).unwrap();
        assert!((s.horizontal - l).abs() < 1e-10 && s.vertical < 1e-12 && (s.full - l).abs() < 1e-10);
        assert!(s.window_converged);

        let ct = CrossedTriple::even(&t, &act, &LengthFunction::Iota, LatticeWindow::line(6), 2).unwrap();
        let x = CrossedElement::single(vec![-2], a.clone());
        let s = crossed_seminorms(&ct, &x).unwrap();
        let norm_a = matops::opnorm(&t.represent(&a)).unwrap();
        assert!((s.vertical - 2.0 * norm_a).abs() < 1e-10);
        for seed in 0..20 {
            let x = CrossedElement::random(&mut random::rng(100 + seed), 1, 2, 6);
            assert!(crossed_seminorms(&ct, &x).unwrap().envelope_ok);
        }
    }

    #[test]
    fn bloch_norm_bounds_window_norms() {
        let (t, act) = odometer_setup(&[2, 3]);
        let x = CrossedElement::random(&mut random::rng(7), 1, 2, 6);
        let small = CrossedTriple::even(&t, &act, &LengthFunction::Iota, LatticeWindow::line(8), 2).unwrap();
        let big = small.with_radius(40).unwrap();
        let (a8, l8, f8) = small.interior_parts(&small.rep.element(&x).unwrap());
        let (a40, l40, f40) = big.interior_parts(&big.rep.element(&x).unwrap());
        let (ea, el, ef) = small.exact_parts(&x).unwrap().unwrap();
        for (w8, w40, e) in [(a8, a40, ea), (l8, l40, el), (f8, f40, ef)] {
            assert!(w8 <= w40 + 1e-10 && w40 <= e + 1e-9, "{w8} {w40} {e}");
            assert!((e - w40) / e < 2e-2, "{w40} vs {e}");
        }
        // support {0}: the symbol reduces to a max over residues
        let a = CVector::from_vec(random::complex_vec(&mut random::rng(8), 6));
        let (ea, _, _) = small
            .exact_parts(&CrossedElement::single(vec![0], a.clone()))
            .unwrap()
            .unwrap();
        let residues = (0..6)
            .map(|g| t.seminorm(&act.act(&[-g], &a)).unwrap())
            .fold(0.0, f64::max);
        assert!((ea - residues).abs() < 1e-10);
    }

    #[test]
    fn fourier_round_trip_and_cutdown() {
        let (t, act) = odometer_setup(&[2, 3]);
        let rep = CrossedRep::new(t.rep.clone(), act, LatticeWindow::line(6), 3).unwrap();
        let x = CrossedElement::random(&mut random::rng(9), 1, 3, 6);
        let m = rep.element(&x).unwrap();
        for k in -3..=3i64 {
            let got = rep.fourier_coefficient(&m, &[k]).unwrap();
            assert!((got - x.coeff(&[k]).unwrap()).norm() < 1e-12);
        }
        assert!(rep.fourier_coefficient(&m, &[7]).is_err());
        let single = CrossedElement::single(vec![1], x.coeff(&[1]).unwrap().clone());
        let ms = rep.element(&single).unwrap();
        assert!(rep.fourier_coefficient(&ms, &[0]).unwrap().norm() < 1e-12);
        for n in 0..=3 {
            let cd = cutdown(&rep, &x, n).unwrap();
            assert!(cd.band_defect < 1e-12);
            if n == 3 {
                assert_eq!(cd.residual, 0.0);
            }
        }
    }

    #[test]
    fn nondegeneracy_propagates() {
        let (t, act) = odometer_setup(&[2, 3]);
        let ct = CrossedTriple::even(&t, &act, &LengthFunction::Iota, LatticeWindow::line(3), 1).unwrap();
        assert_eq!(ct.kernel_dim(), 1);
    }

    #[test]
    fn commuting_bounds() {
        let act = ActionModel::product_odometer(&[vec![2], vec![3]]).unwrap();
        let f = act.filtration.clone().unwrap();
        let s = default_schedule(&f, 1.5).unwrap();
        let t = ci_triple(&f, &AlgState::normalized_trace(f.top()), &s).unwrap();
        let a0 = coordinate_action(&act, 0).unwrap();
        let a1 = coordinate_action(&act, 1).unwrap();
        let ct = CrossedTriple::even(&t, &a0, &LengthFunction::Iota, LatticeWindow::line(3), 1).unwrap();
        let rows = commuting_action_bound(&ct, &a1, 4).unwrap();
        assert!(rows.iter().all(|r| r.sup.is_finite() && r.certificate.is_exact()));
        let triv = ActionModel::trivial(f.top().clone(), None, 1).unwrap();
        let rows_t = commuting_action_bound(&ct, &triv, 4).unwrap();
        for r in rows_t.iter().take(6) {
            let b = ct.rep.basis_element(r.index);
            let x = CrossedElement::from_coords(&b, &ct.rep.support, 6);
            assert!((r.sup - crossed_seminorms(&ct, &x).unwrap().full).abs() < 1e-12);
        }
        let inner = ActionModel::inner(&random::random_unitary(&mut random::rng(1), 2), None).unwrap();
        let f2 = Filtration::over_scalars(crate::algebra::MultiMatrixAlgebra::full_matrix(2)).unwrap();
        let t2 = ci_triple(&f2, &AlgState::normalized_trace(f2.top()), &[0.0, 1.0]).unwrap();
        let ct2 = CrossedTriple::even(&t2, &inner, &LengthFunction::Iota, LatticeWindow::line(2), 1).unwrap();
        let other = ActionModel::inner(&matops::diag_real(&[1.0, -1.0]), None).unwrap();
        assert!(matches!(
            commuting_action_bound(&ct2, &other, 2),
            Err(Error::Commutation { .. })
        ));
    }

    #[test]
    fn zd_iteration_matches_direct() {
        let act = ActionModel::product_odometer(&[vec![2], vec![3]]).unwrap();
        let f = act.filtration.clone().unwrap();
        let s = default_schedule(&f, 1.5).unwrap();
        let t = ci_triple(&f, &AlgState::normalized_trace(f.top()), &s).unwrap();
        let one = iterate_zd(&t, &coordinate_action(&act, 0).unwrap(), 2, 1, &[0]).unwrap();
        let even = CrossedTriple::even(
            &t,
            &coordinate_action(&act, 0).unwrap(),
            &LengthFunction::Iota,
            LatticeWindow::line(2),
            1,
        )
        .unwrap();
        assert_eq!(one.dirac, even.triple.dirac);
        let d1 = direct_ld_triple(&t, &coordinate_action(&act, 0).unwrap(), 2, 1).unwrap();
        assert!(spectra_deviation(&d1, &one).unwrap() < 1e-9);
        let ab = iterate_zd(&t, &act, 2, 1, &[0, 1]).unwrap();
        let ba = iterate_zd(&t, &act, 2, 1, &[1, 0]).unwrap();
        let direct = direct_ld_triple(&t, &act, 2, 1).unwrap();
        assert_eq!(ab.parity(), Parity::Odd);
        assert!(spectra_deviation(&ab, &ba).unwrap() < 1e-9);
        assert!(spectra_deviation(&ab, &direct).unwrap() < 1e-9);
        assert!(iterate_zd(&t, &act, 2, 1, &[0, 0]).is_err());

        let point = crate::triple::diagonal_triple(CMatrix::zeros(1, 1), "point").unwrap();
        let triv3 = ActionModel::new(None, None, vec![matops::identity(1); 3], "trivial").unwrap();
        assert_eq!(
            iterate_zd(&point, &triv3, 1, 1, &[2, 0, 1]).unwrap().parity(),
            Parity::Even
        );
        assert!(matches!(direct_ld_triple(&point, &triv3, 1, 1), Err(Error::Input(_))));
    }

    #[test]
    fn element_json_round_trip() {
        let x = CrossedElement::random(&mut random::rng(10), 1, 1, 2);
        let back = CrossedElement::from_json(&x.to_json()).unwrap();
        assert!(x.terms.iter().all(|(k, v)| (v - back.coeff(k).unwrap()).norm() < 1e-15));
        let y = CrossedElement::from_json(r#"{"terms":[{"k":[1,-1],"coeff":[1.0,[0.0,2.0]]}]}"#).unwrap();
        assert_eq!(y.coeff(&[1, -1]).unwrap()[1], C64::new(0.0, 2.0));
        assert!(CrossedElement::from_json(r#"{"terms":[{"k":1,"coeff":[1.0],"x":0}]}"#).is_err());
    }
}
