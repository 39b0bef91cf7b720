//! Connes distances between states of a finite spectral triple: a smoothed
//! convex solver over the quotient by the seminorm kernel, a grid oracle for
//! small commutative algebras, exact Wasserstein distances, effective point
//! metrics and cross-level stabilization tables.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{ci_triple, default_schedule, AlgState, Filtration};
use crate::dynamics::check_metric;
use crate::error::{Error, Result};
use crate::lp::{self, LpOutcome, Q};
use crate::matops::{self, c, CMatrix, CVector, C64, I};
use crate::random;
use crate::triple::{circle_triple, MatrixRep, Representation, SpectralTriple};

type RMatrix = DMatrix<f64>;
type RVector = DVector<f64>;

const KERNEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnesOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for ConnesOptions {
    fn default() -> Self {
        Self {
            restarts: 40,
            seed: 0,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Distance {
    pub value: f64,
    pub unbounded: bool,
    /// Self-adjoint `a*` with `L(a*) = 1` attaining `value`.
    pub optimizer: Option<CVector>,
    /// Kernel direction on which the two states differ.
    pub witness: Option<CVector>,
    pub diagnostics: SolverDiagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub value: f64,
    pub unbounded: bool,
    pub optimizer_seminorm: f64,
    /// Distance certified by each restart.
    pub restarts: Vec<f64>,
}

/// `φ(1) = 1` and `φ(a*) = conj φ(a)` for the functional `w`.
pub fn check_functional(rep: &dyn Representation, w: &CVector) -> Result<()> {
    if w.len() != rep.algebra_dim() {
        return Err(Error::Input(format!(
            "functional has {} coordinates, algebra has {}",
            w.len(),
            rep.algebra_dim()
        )));
    }
    if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Input("functional has non-finite entries".into()));
    }
    let unit = w.dot(&rep.unit());
    if (unit - c(1.0)).norm() > 1e-9 {
        return Err(Error::Input(format!("functional is not unital: φ(1) = {unit}")));
    }
    let adj = rep.involution().transpose() * w;
    if (adj - w.map(|z| z.conj())).camax() > 1e-9 {
        return Err(Error::Input("functional is not Hermitian".into()));
    }
    Ok(())
}

/// `a ↦ ⟨ξ, π(a) ξ⟩` for a unit vector `ξ`.
pub fn vector_state(rep: &dyn Representation, xi: &CVector) -> Result<CVector> {
    let norm = xi.norm();
    if xi.len() != rep.hilbert_dim() || norm == 0.0 {
        return Err(Error::Input(
            "vector state needs a nonzero vector in the Hilbert space".into(),
        ));
    }
    let xi = xi / c(norm);
    Ok(CVector::from_fn(rep.algebra_dim(), |k, _| {
        xi.dotc(&(rep.represent(&rep.basis_element(k)) * &xi))
    }))
}

/// Real basis of the self-adjoint part of the algebra.
pub fn self_adjoint_basis(rep: &dyn Representation) -> Vec<CVector> {
    let n = rep.algebra_dim();
    let j = rep.involution();
    let mut out: Vec<CVector> = Vec::new();
    let mut real: Vec<RVector> = Vec::new();
    for k in 0..n {
        let e = rep.basis_element(k);
        let star = &j * &e;
        for cand in [&e + &star, (&e - &star) * I] {
            let mut v = RVector::from_iterator(2 * n, cand.iter().map(|z| z.re).chain(cand.iter().map(|z| z.im)));
            for q in &real {
                let p = q.dot(&v);
                v -= q * p;
            }
            let norm = v.norm();
            if norm > 1e-10 {
                let unit_v = &v / norm;
                out.push(CVector::from_fn(n, |i, _| C64::new(unit_v[i], unit_v[n + i])));
                real.push(unit_v);
            }
        }
    }
    out
}

fn realified_columns(mats: &[CMatrix]) -> RMatrix {
    let n = mats.first().map(|m| m.len()).unwrap_or(0);
    RMatrix::from_fn(2 * n, mats.len(), |r, col| {
        let z = mats[col].as_slice()[r % n];
        if r < n {
            z.re
        } else {
            z.im
        }
    })
}

/// Spectral norm of the Hermitian pencil `a0 + Σ y_k dirs_k`.
pub(crate) struct Smoothed {
    pub(crate) a0: CMatrix,
    pub(crate) dirs: Vec<CMatrix>,
}

impl Smoothed {
    fn matrix(&self, y: &RVector) -> CMatrix {
        let mut h = self.a0.clone();
        for (k, d) in self.dirs.iter().enumerate() {
            if y[k] != 0.0 {
                h += d * c(y[k]);
            }
        }
        h
    }

    fn exact(&self, y: &RVector) -> f64 {
        matops::opnorm_unchecked(&self.matrix(y))
    }

    /// `μ log tr(e^{H/μ} + e^{-H/μ})` and its gradient; also the exact norm.
    fn smooth(&self, y: &RVector, mu: f64) -> (f64, RVector, f64) {
        let h = matops::symmetrize(&self.matrix(y));
        let (vals, vecs) = matops::herm_eig(&h).expect("finite Hermitian matrix");
        let top = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut z = 0.0;
        let mut weights = Vec::with_capacity(vals.len());
        for &v in &vals {
            let p = ((v - top) / mu).exp();
            let q = ((-v - top) / mu).exp();
            z += p + q;
            weights.push(p - q);
        }
        let f = top + mu * z.ln();
        let scaled: Vec<C64> = weights.iter().map(|w| c(w / z)).collect();
        let w = &vecs * CMatrix::from_diagonal(&CVector::from_vec(scaled)) * vecs.adjoint();
        let grad = RVector::from_iterator(
            self.dirs.len(),
            self.dirs.iter().map(|d| {
                // tr(W d) with both Hermitian
                w.iter().zip(d.transpose().iter()).map(|(a, b)| (a * b).re).sum::<f64>()
            }),
        );
        (f, grad, top)
    }

    /// BFGS with Armijo steps under decreasing smoothing; returns the best
    /// exact value seen and its point.
    pub(crate) fn minimize(&self, start: RVector, max_iter: usize) -> (f64, RVector) {
        let k = self.dirs.len();
        let mut y = start;
        let mut best = (self.exact(&y), y.clone());
        if k == 0 {
            return best;
        }
        let mut mu = 0.1 * best.0.max(f64::MIN_POSITIVE);
        loop {
            let mut hinv = RMatrix::identity(k, k);
            let (mut f, mut g, top) = self.smooth(&y, mu);
            if top < best.0 {
                best = (top, y.clone());
            }
            for _ in 0..max_iter {
                if g.norm() <= 1e-13 * (1.0 + f.abs()) {
                    break;
                }
                let mut p = -(&hinv * &g);
                if p.dot(&g) >= 0.0 {
                    hinv = RMatrix::identity(k, k);
                    p = -g.clone();
                }
                let slope = p.dot(&g);
                let mut t = 1.0;
                let mut accepted = None;
                for _ in 0..60 {
                    let cand = &y + &p * t;
                    let (fc, gc, tc) = self.smooth(&cand, mu);
                    if fc <= f + 1e-4 * t * slope {
                        accepted = Some((cand, fc, gc, tc));
                        break;
                    }
                    t *= 0.5;
                }
                let Some((cand, fc, gc, tc)) = accepted else { break };
                let s = &cand - &y;
                let yk = &gc - &g;
                let sy = s.dot(&yk);
                if sy > 1e-16 * s.norm() * yk.norm() {
                    let rho = 1.0 / sy;
                    let id = RMatrix::identity(k, k);
                    let left = &id - &s * yk.transpose() * rho;
                    let right = &id - &yk * s.transpose() * rho;
                    hinv = &left * &hinv * &right + &s * s.transpose() * rho;
                }
                let moved = s.norm();
                y = cand;
                f = fc;
                g = gc;
                if tc < best.0 {
                    best = (tc, y.clone());
                }
                if moved <= 1e-15 * (1.0 + y.norm()) {
                    break;
                }
            }
            if mu <= 1e-10 * best.0 {
                break;
            }
            mu *= 0.1;
        }
        best
    }
}

/// `sup { φ(a) - ψ(a) : a = a*, L(a) ≤ 1 }` via the equivalent problem
/// `min { L(a) : (φ - ψ)(a) = 1 }` on the quotient by the seminorm kernel.
pub fn connes_distance(t: &SpectralTriple, phi: &CVector, psi: &CVector, opts: &ConnesOptions) -> Result<Distance> {
    let rep = &*t.rep;
    check_functional(rep, phi)?;
    check_functional(rep, psi)?;
    let delta_c = phi - psi;
    let zero = |restarts: Vec<f64>| Distance {
        value: 0.0,
        unbounded: false,
        optimizer: None,
        witness: None,
        diagnostics: SolverDiagnostics {
            value: 0.0,
            unbounded: false,
            optimizer_seminorm: 0.0,
            restarts,
        },
    };
    if delta_c.camax() <= 1e-15 {
        return Ok(zero(vec![0.0; opts.restarts]));
    }
    let basis = self_adjoint_basis(rep);
    let gens: Vec<CMatrix> = basis
        .iter()
        .map(|b| matops::commutator(&t.dirac, &t.represent(b)) * I)
        .collect();
    let delta = RVector::from_iterator(basis.len(), basis.iter().map(|b| delta_c.dot(b).re));
    let svd = realified_columns(&gens).svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let r = basis.len();
    let mut range_vecs = Vec::new();
    let mut kernel_vecs = Vec::new();
    for i in 0..vt.nrows() {
        let v = vt.row(i).transpose();
        if svd.singular_values[i] > KERNEL_TOL * smax.max(1e-300) {
            range_vecs.push(v);
        } else {
            kernel_vecs.push(v);
        }
    }
    // columns beyond the row count of a wide matrix are kernel too
    if vt.nrows() < r {
        let mut extra = complete_basis(&range_vecs.iter().chain(&kernel_vecs).cloned().collect::<Vec<_>>(), r);
        kernel_vecs.append(&mut extra);
    }
    let combine = |coeffs: &RVector| -> CVector {
        basis
            .iter()
            .zip(coeffs.iter())
            .fold(CVector::zeros(rep.algebra_dim()), |acc, (b, &x)| acc + b * c(x))
    };
    for k in &kernel_vecs {
        if delta.dot(k).abs() > 1e-9 * delta.norm() {
            let witness = combine(k);
            return Ok(Distance {
                value: f64::INFINITY,
                unbounded: true,
                optimizer: None,
                witness: Some(witness),
                diagnostics: SolverDiagnostics {
                    value: f64::INFINITY,
                    unbounded: true,
                    optimizer_seminorm: 0.0,
                    restarts: vec![],
                },
            });
        }
    }
    let q = RMatrix::from_columns(&range_vecs);
    let dq = q.transpose() * &delta;
    let dn = dq.norm();
    if dn <= 1e-14 {
        return Ok(zero(vec![0.0; opts.restarts]));
    }
    let z0 = &dq / (dn * dn);
    let unit = &dq / dn;
    let null = complete_basis(std::slice::from_ref(&unit), dq.len());
    let to_matrix = |z: &RVector| -> CMatrix {
        let coeffs = &q * z;
        gens.iter()
            .zip(coeffs.iter())
            .fold(CMatrix::zeros(t.hilbert_dim(), t.hilbert_dim()), |acc, (g, &x)| {
                acc + g * c(x)
            })
    };
    let problem = Smoothed {
        a0: to_matrix(&z0),
        dirs: null.iter().map(&to_matrix).collect(),
    };
    let k = problem.dirs.len();
    let spread = 1.0 / (dn * (k.max(1) as f64).sqrt());
    let runs: Vec<(f64, RVector)> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|i| {
            let start = if i == 0 {
                RVector::zeros(k)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
                RVector::from_fn(k, |_, _| random::normal(&mut rng) * spread)
            };
            problem.minimize(start, opts.max_iter)
        })
        .collect();
    let (best_l, best_y) = runs.iter().fold((f64::INFINITY, RVector::zeros(k)), |acc, (l, y)| {
        if *l < acc.0 {
            (*l, y.clone())
        } else {
            acc
        }
    });
    let z = null
        .iter()
        .zip(best_y.iter())
        .fold(z0.clone(), |acc, (n, &yi)| acc + n * yi);
    let mut a = combine(&(&q * z)) / c(best_l);
    let mut l = t.seminorm(&a)?;
    if l > 1.0 {
        a /= c(l);
        l = t.seminorm(&a)?;
    }
    let value = delta_c.dot(&a).re;
    Ok(Distance {
        value,
        unbounded: false,
        optimizer: Some(a),
        witness: None,
        diagnostics: SolverDiagnostics {
            value,
            unbounded: false,
            optimizer_seminorm: l,
            restarts: runs.iter().map(|(l, _)| 1.0 / l).collect(),
        },
    })
}

/// Orthonormal vectors completing `given` (orthonormal) to a basis of `ℝ^n`.
fn complete_basis(given: &[RVector], n: usize) -> Vec<RVector> {
    let mut all: Vec<RVector> = given.to_vec();
    let mut out = Vec::new();
    for i in 0..n {
        let mut v = RVector::zeros(n);
        v[i] = 1.0;
        for _ in 0..2 {
            for q in &all {
                let p = q.dot(&v);
                v -= q * p;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= norm;
            all.push(v.clone());
            out.push(v);
        }
    }
    out
}

/// Checks that the algebra is `ℂ^n` in the basis of minimal projections.
fn commutative_points(t: &SpectralTriple) -> Result<Vec<CMatrix>> {
    let rep = &*t.rep;
    let n = rep.algebra_dim();
    let mats: Vec<CMatrix> = (0..n).map(|k| rep.represent(&rep.basis_element(k))).collect();
    let ones = CVector::from_element(n, c(1.0));
    if (rep.unit() - ones).camax() > 1e-12 || matops::max_abs(&(rep.involution() - matops::identity(n))) > 1e-12 {
        return Err(Error::Input(
            "algebra is not given in a basis of self-adjoint minimal projections".into(),
        ));
    }
    for i in 0..n {
        if matops::max_abs(&(&mats[i] * &mats[i] - &mats[i])) > 1e-12 {
            return Err(Error::Input(format!("basis element {i} is not a projection")));
        }
        for j in 0..i {
            if matops::max_abs(&matops::commutator(&mats[i], &mats[j])) > 1e-12 {
                return Err(Error::Input("algebra is not commutative".into()));
            }
        }
    }
    Ok(mats)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bruteforce {
    pub value: f64,
    /// Maximizing function values, the last point gauge-fixed to 0.
    pub witness: Vec<f64>,
    pub evaluations: usize,
}

/// Grid search over directions of the quotient sphere for commutative
/// algebras with at most five points, followed by local zooming.
pub fn connes_distance_bruteforce(t: &SpectralTriple, phi: &CVector, psi: &CVector, h: f64) -> Result<Bruteforce> {
    let n = t.algebra_dim();
    if n > 5 {
        return Err(Error::Capacity { requested: n, limit: 5 });
    }
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::Input(format!("grid step {h} outside (0, 1]")));
    }
    let mats = commutative_points(t)?;
    check_functional(&*t.rep, phi)?;
    check_functional(&*t.rep, psi)?;
    let p = n - 1;
    if p == 0 {
        return Ok(Bruteforce {
            value: 0.0,
            witness: vec![0.0],
            evaluations: 0,
        });
    }
    let comms: Vec<CMatrix> = mats[..p].iter().map(|m| matops::commutator(&t.dirac, m)).collect();
    let delta: Vec<f64> = (0..p).map(|k| (phi[k] - psi[k]).re).collect();
    let mut evaluations = 0;
    let mut ratio = |y: &[f64]| -> f64 {
        evaluations += 1;
        let obj: f64 = y.iter().zip(&delta).map(|(a, b)| a * b).sum();
        if obj == 0.0 {
            return 0.0;
        }
        let m = y
            .iter()
            .zip(&comms)
            .fold(CMatrix::zeros(t.hilbert_dim(), t.hilbert_dim()), |acc, (&a, cm)| {
                acc + cm * c(a)
            });
        let l = matops::opnorm_unchecked(&m);
        if l <= 1e-300 {
            f64::INFINITY
        } else {
            obj.abs() / l
        }
    };
    let mut steps = (2.0 / h).ceil() as usize;
    while 2 * p * (steps + 1).pow(p as u32 - 1) > 2_000_000 {
        steps -= 1;
    }
    let grid = |i: usize| -1.0 + 2.0 * i as f64 / steps as f64;
    let mut best = (0.0, vec![0.0; p]);
    for face in 0..p {
        for sign in [-1.0, 1.0] {
            let cells = (steps + 1).pow(p as u32 - 1);
            for cell in 0..cells {
                let mut rest = cell;
                let mut y = vec![0.0; p];
                for (k, slot) in y.iter_mut().enumerate() {
                    if k == face {
                        *slot = sign;
                    } else {
                        *slot = grid(rest % (steps + 1));
                        rest /= steps + 1;
                    }
                }
                let r = ratio(&y);
                if r > best.0 {
                    best = (r, y);
                }
            }
        }
    }
    let mut step = 2.0 / steps as f64;
    for _ in 0..40 {
        step *= 0.5;
        let centre = best.1.clone();
        for cell in 0..5usize.pow(p as u32) {
            let mut rest = cell;
            let y: Vec<f64> = centre
                .iter()
                .map(|v| {
                    let off = (rest % 5) as f64 - 2.0;
                    rest /= 5;
                    v + off * step
                })
                .collect();
            let r = ratio(&y);
            if r > best.0 {
                best = (r, y);
            }
        }
    }
    let mut witness = best.1;
    witness.push(0.0);
    Ok(Bruteforce {
        value: best.0,
        witness,
        evaluations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Wasserstein {
    pub primal: f64,
    pub dual: f64,
    pub potential: Vec<f64>,
    /// Optimal plan in row-major order.
    pub plan: Vec<f64>,
}

fn probability(v: &[f64], n: usize) -> Result<Vec<Q>> {
    if v.len() != n || v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Input(
            "measure must be a nonnegative vector over the points".into(),
        ));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("measure has total mass {total}")));
    }
    let q: Vec<Q> = v.iter().map(|&x| lp::rational(x)).collect();
    let sum = q.iter().fold(lp::integer(0), |acc, x| acc + x);
    Ok(q.into_iter().map(|x| x / &sum).collect())
}

/// `W_1(μ, ν)` by an exact transportation LP, cross-checked against the
/// Kantorovich dual.
pub fn wasserstein_lp(d: &[Vec<f64>], mu: &[f64], nu: &[f64]) -> Result<Wasserstein> {
    check_metric(d)?;
    let n = d.len();
    let mu = probability(mu, n)?;
    let nu = probability(nu, n)?;
    let dq: Vec<Vec<Q>> = d.iter().map(|r| r.iter().map(|&x| lp::rational(x)).collect()).collect();
    let (plan, primal) = match lp::transport(&dq, &mu, &nu) {
        LpOutcome::Optimal { x, value } => (x, value),
        other => return Err(Error::Degeneracy(format!("transport problem ended {other:?}"))),
    };
    let (potential, dual) = lp::kantorovich_dual(&dq, &mu, &nu)
        .ok_or_else(|| Error::Degeneracy("Kantorovich dual did not reach an optimum".into()))?;
    let (primal, dual) = (lp::to_f64(&primal), lp::to_f64(&dual));
    if (primal - dual).abs() > 1e-9 {
        return Err(Error::Degeneracy(format!("duality gap {primal} vs {dual}")));
    }
    Ok(Wasserstein {
        primal,
        dual,
        potential: potential.iter().map(lp::to_f64).collect(),
        plan: plan.iter().map(lp::to_f64).collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveMetric {
    pub dist: Vec<Vec<f64>>,
    pub unbounded: Vec<(usize, usize)>,
    pub metric_ok: bool,
}

/// Connes distances between point evaluations of a commutative triple.
pub fn effective_metric(t: &SpectralTriple, opts: &ConnesOptions) -> Result<EffectiveMetric> {
    commutative_points(t)?;
    let n = t.algebra_dim();
    let point = |x: usize| {
        let mut w = CVector::zeros(n);
        w[x] = c(1.0);
        w
    };
    let mut dist = vec![vec![0.0; n]; n];
    let mut unbounded = Vec::new();
    for x in 0..n {
        for y in x + 1..n {
            let d = connes_distance(t, &point(x), &point(y), opts)?;
            if d.unbounded {
                unbounded.push((x, y));
            }
            dist[x][y] = d.value;
            dist[y][x] = d.value;
        }
    }
    let scale = dist
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .cloned()
        .fold(1.0, f64::max);
    let mut metric_ok = unbounded.is_empty();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if dist[i][k] > dist[i][j] + dist[j][k] + 1e-8 * scale {
                    metric_ok = false;
                }
            }
        }
    }
    Ok(EffectiveMetric {
        dist,
        unbounded,
        metric_ok,
    })
}

/// Commutative triple whose seminorm is the Lipschitz constant for `d`:
/// one `2×2` block `[[0, 1/d_xy], [1/d_xy, 0]]` per pair of points.
pub fn pair_triple(d: &[Vec<f64>]) -> Result<SpectralTriple> {
    check_metric(d)?;
    let n = d.len();
    if n < 2 {
        return Err(Error::Input("need at least two points".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|x| (x + 1..n).map(move |y| (x, y))).collect();
    let h = 2 * pairs.len();
    let basis = (0..n)
        .map(|z| {
            let diag: Vec<f64> = pairs
                .iter()
                .flat_map(|&(x, y)| [(x == z) as u8 as f64, (y == z) as u8 as f64])
                .collect();
            matops::diag_real(&diag)
        })
        .collect();
    let mut dirac = CMatrix::zeros(h, h);
    for (p, &(x, y)) in pairs.iter().enumerate() {
        let v = c(1.0 / d[x][y]);
        dirac[(2 * p, 2 * p + 1)] = v;
        dirac[(2 * p + 1, 2 * p)] = v;
    }
    let rep = MatrixRep::new(basis, CVector::from_element(n, c(1.0)), matops::identity(n))?;
    SpectralTriple::odd(std::sync::Arc::new(rep), dirac, format!("pairs[{n}]"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StabilizationScenario {
    /// CI triples on odometer levels with cylinder states on the first digit.
    Odometer {
        moduli: Vec<usize>,
        levels: Vec<usize>,
        s: f64,
    },
    /// Circle triples on Fourier windows; Haar state against the point state at 0.
    Rotation { windows: Vec<usize> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilizationRow {
    pub pair: String,
    pub parameters: Vec<usize>,
    pub distances: Vec<f64>,
    pub differences: Vec<f64>,
    pub stabilizing: bool,
}

fn stabilization_row(pair: &str, parameters: Vec<usize>, distances: Vec<f64>) -> StabilizationRow {
    let differences: Vec<f64> = distances.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let stabilizing = differences.last().is_some_and(|&d| d < 1e-3);
    StabilizationRow {
        pair: pair.into(),
        parameters,
        distances,
        differences,
        stabilizing,
    }
}

/// Distances between fixed states recomputed across truncation levels.
pub fn lip_stabilization_report(
    scenario: &StabilizationScenario,
    opts: &ConnesOptions,
) -> Result<Vec<StabilizationRow>> {
    match scenario {
        StabilizationScenario::Odometer { moduli, levels, s } => {
            if levels.is_empty() || levels.iter().any(|&k| k == 0 || k > moduli.len()) {
                return Err(Error::Input(format!("levels {levels:?} outside 1..={}", moduli.len())));
            }
            let m1 = moduli[0];
            let mut cyl = Vec::new();
            let mut same = Vec::new();
            for &k in levels {
                let f = Filtration::odometer(&moduli[..k])?;
                let schedule = default_schedule(&f, *s)?;
                let t = ci_triple(&f, &AlgState::normalized_trace(f.top()), &schedule)?;
                let n = f.top().dim();
                let cylinder = |digit: usize| {
                    let w = CVector::from_fn(n, |x, _| if x % m1 == digit { c(1.0) } else { c(0.0) });
                    let total = w.iter().map(|z| z.re).sum::<f64>();
                    w / c(total)
                };
                cyl.push(connes_distance(&t, &cylinder(0), &cylinder(1), opts)?.value);
                same.push(connes_distance(&t, &cylinder(0), &cylinder(0), opts)?.value);
            }
            Ok(vec![
                stabilization_row("cylinder[0] vs cylinder[1]", levels.clone(), cyl),
                stabilization_row("cylinder[0] vs cylinder[0]", levels.clone(), same),
            ])
        }
        StabilizationScenario::Rotation { windows } => {
            if windows.is_empty() {
                return Err(Error::Input("no Fourier windows given".into()));
            }
            let mut dists = Vec::new();
            for &f in windows {
                let t = circle_triple(f, 2 * f)?;
                let dim = 2 * f + 1;
                let mut haar = CVector::zeros(dim);
                haar[f] = c(1.0);
                let point = CVector::from_element(dim, c(1.0));
                dists.push(connes_distance(&t, &haar, &point, opts)?.value);
            }
            Ok(vec![stabilization_row(
                "haar vs point(0), window distance",
                windows.clone(),
                dists,
            )])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triple::{diagonal_triple, two_point_triple};

    fn point(n: usize, x: usize) -> CVector {
        let mut w = CVector::zeros(n);
        w[x] = c(1.0);
        w
    }

    #[test]
    fn two_point_closed_form() {
        for lambda in [0.5, 1.0, 3.0, -2.0] {
            let t = two_point_triple(lambda);
            let d = connes_distance(&t, &point(2, 0), &point(2, 1), &ConnesOptions::default()).unwrap();
            assert!((d.value - 1.0 / lambda.abs()).abs() < 1e-9, "{}", d.value);
            assert!((d.diagnostics.optimizer_seminorm - 1.0).abs() < 1e-9);
            let b = connes_distance_bruteforce(&t, &point(2, 0), &point(2, 1), 1e-2).unwrap();
            assert!((b.value - 1.0 / lambda.abs()).abs() < 1e-3);
        }
        let t = two_point_triple(2.0);
        assert_eq!(
            connes_distance(&t, &point(2, 0), &point(2, 0), &ConnesOptions::default())
                .unwrap()
                .value,
            0.0
        );
        assert_eq!(
            connes_distance_bruteforce(&t, &point(2, 1), &point(2, 1), 1e-2)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn rejects_non_states() {
        let t = two_point_triple(1.0);
        let bad = CVector::from_vec(vec![c(0.7), c(0.7)]);
        assert!(matches!(
            connes_distance(&t, &bad, &point(2, 0), &ConnesOptions::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn degenerate_kernel_is_unbounded() {
        let t = diagonal_triple(CMatrix::zeros(3, 3), "zero").unwrap();
        let d = connes_distance(&t, &point(3, 0), &point(3, 2), &ConnesOptions::default()).unwrap();
        assert!(d.unbounded && d.value.is_infinite());
        let w = d.witness.unwrap();
        assert!(t.seminorm(&w).unwrap() < 1e-12);
    }

    #[test]
    fn solver_matches_oracle_on_random_instances() {
        let mut r = random::rng(21);
        for n in [3usize, 4] {
            let d = random::random_hermitian(&mut r, n);
            let t = diagonal_triple(d, "random").unwrap();
            let mu: Vec<f64> = (0..n).map(|_| rand::Rng::random::<f64>(&mut r)).collect();
            let total: f64 = mu.iter().sum();
            let phi = CVector::from_iterator(n, mu.iter().map(|x| c(x / total)));
            let psi = point(n, 0);
            let s = connes_distance(&t, &phi, &psi, &ConnesOptions::default()).unwrap();
            let b = connes_distance_bruteforce(&t, &phi, &psi, 1e-2).unwrap();
            assert!((s.value - b.value).abs() / b.value < 1e-3, "{} vs {}", s.value, b.value);
            let scaled = connes_distance(&t.with_scaled_dirac(4.0), &phi, &psi, &ConnesOptions::default()).unwrap();
            assert!((scaled.value * 4.0 - s.value).abs() < 1e-8 * s.value);
        }
    }

    #[test]
    fn wasserstein_examples() {
        let d = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let w = wasserstein_lp(&d, &[1.0, 0.0, 0.0], &[0.0, 0.5, 0.5]).unwrap();
        assert_eq!(w.primal, 1.0);
        assert_eq!(w.dual, 1.0);
        let line = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 2.0], vec![3.0, 2.0, 0.0]];
        assert_eq!(
            wasserstein_lp(&line, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0])
                .unwrap()
                .primal,
            3.0
        );
        assert_eq!(
            wasserstein_lp(&line, &[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5])
                .unwrap()
                .primal,
            0.0
        );
        let broken = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]];
        assert!(matches!(
            wasserstein_lp(&broken, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn effective_metric_and_duality() {
        let t = two_point_triple(4.0);
        let m = effective_metric(&t, &ConnesOptions::default()).unwrap();
        assert!((m.dist[0][1] - 0.25).abs() < 1e-9 && m.metric_ok);

        let d = vec![vec![0.0, 1.0, 1.5], vec![1.0, 0.0, 2.0], vec![1.5, 2.0, 0.0]];
        let t = pair_triple(&d).unwrap();
        let m = effective_metric(&t, &ConnesOptions::default()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.dist[i][j] - d[i][j]).abs() < 1e-8);
            }
        }
        let mu = [0.2, 0.5, 0.3];
        let nu = [0.6, 0.1, 0.3];
        let phi = CVector::from_iterator(3, mu.iter().map(|&x| c(x)));
        let psi = CVector::from_iterator(3, nu.iter().map(|&x| c(x)));
        let connes = connes_distance(&t, &phi, &psi, &ConnesOptions::default())
            .unwrap()
            .value;
        let w = wasserstein_lp(&m.dist, &mu, &nu).unwrap();
        assert!((connes - w.primal).abs() < 1e-6, "{connes} vs {}", w.primal);
    }

    #[test]
    fn odometer_effective_metric_is_shift_invariant() {
        let f = Filtration::odometer(&[2, 3]).unwrap();
        let s = default_schedule(&f, 1.5).unwrap();
        let t = ci_triple(&f, &AlgState::normalized_trace(f.top()), &s).unwrap();
        let m = effective_metric(&t, &ConnesOptions::default()).unwrap();
        assert!(m.metric_ok);
        for x in 0..6 {
            for y in 0..6 {
                assert!((m.dist[x][y] - m.dist[(x + 1) % 6][(y + 1) % 6]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn stabilization_tables() {
        let opts = ConnesOptions {
            restarts: 8,
            ..Default::default()
        };
        let rows = lip_stabilization_report(
            &StabilizationScenario::Odometer {
                moduli: vec![2, 3, 2],
                levels: vec![1, 2, 3],
                s: 1.5,
            },
            &opts,
        )
        .unwrap();
        assert_eq!(rows[0].distances.len(), 3);
        assert!(rows[0].distances.iter().all(|d| d.is_finite() && *d > 0.0));
        assert!(rows[1].distances.iter().all(|&d| d == 0.0));
        let rows = lip_stabilization_report(&StabilizationScenario::Rotation { windows: vec![2, 4] }, &opts).unwrap();
        assert!(rows[0].distances.iter().all(|d| d.is_finite() && *d > 0.0));
    }

    #[test]
    fn vector_states_are_states() {
        let t = two_point_triple(1.0);
        let w = vector_state(&*t.rep, &CVector::from_vec(vec![c(1.0), c(1.0)])).unwrap();
        check_functional(&*t.rep, &w).unwrap();
        assert!((w[0] - c(0.5)).norm() < 1e-15);
    }
}
