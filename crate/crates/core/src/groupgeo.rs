//! Lattice windows `[-N, N]^d`, proper translation-bounded length functions
//! on `ℤ` and `ℤ^d`, and the multiplication operators `M_l`.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{self, c, CMatrix, I};

pub const MAX_LD_DIM: usize = 6;

/// Points of `[-N, N]^d` in lexicographic order (first coordinate most
/// significant). The origin sits at index `(size - 1) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeWindow {
    pub d: usize,
    pub radius: usize,
}

impl LatticeWindow {
    pub fn new(d: usize, radius: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Input("lattice dimension must be positive".into()));
        }
        let side = 2 * radius + 1;
        let size = side.checked_pow(d as u32).unwrap_or(usize::MAX);
        if size > matops::DEFAULT_MAX_DIM {
            return Err(Error::Capacity {
                requested: size,
                limit: matops::DEFAULT_MAX_DIM,
            });
        }
        Ok(Self { d, radius })
    }

    pub fn line(radius: usize) -> Self {
        Self { d: 1, radius }
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn size(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn origin_index(&self) -> usize {
        (self.size() - 1) / 2
    }

    pub fn point(&self, mut idx: usize) -> Vec<i64> {
        let side = self.side();
        let mut p = vec![0i64; self.d];
        for k in (0..self.d).rev() {
            p[k] = (idx % side) as i64 - self.radius as i64;
            idx /= side;
        }
        p
    }

    pub fn points(&self) -> Vec<Vec<i64>> {
        (0..self.size()).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        p.len() == self.d && p.iter().all(|x| x.unsigned_abs() as usize <= self.radius)
    }

    pub fn index_of(&self, p: &[i64]) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let side = self.side() as i64;
        Some(p.iter().fold(0i64, |acc, &x| acc * side + x + self.radius as i64) as usize)
    }

    /// Indices of points with all coordinates of modulus at most `N - margin`.
    pub fn interior(&self, margin: usize) -> Vec<usize> {
        if margin > self.radius {
            return vec![];
        }
        let inner = (self.radius - margin) as i64;
        (0..self.size())
            .filter(|&i| self.point(i).iter().all(|x| x.abs() <= inner))
            .collect()
    }
}

/// Sup norm of a lattice vector.
pub fn sup_norm(g: &[i64]) -> usize {
    g.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LengthFunction {
    /// `ι(n) = n` on `ℤ`.
    Iota,
    /// Word length on `ℤ` for the symmetric closure of the generators.
    WordLength { generators: Vec<i64> },
    /// Matrix-valued `l^(d)` on `ℤ^d`.
    Ld { d: usize },
}

impl LengthFunction {
    pub fn word_length(generators: Vec<i64>) -> Result<Self> {
        let l = LengthFunction::WordLength { generators };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LengthFunction::Iota => Ok(()),
            LengthFunction::WordLength { generators } => {
                let g = generators.iter().fold(0i64, |acc, &s| gcd(acc, s.abs()));
                if g != 1 {
                    return Err(Error::Input(format!(
                        "generators {generators:?} do not generate ℤ (gcd {g})"
                    )));
                }
                Ok(())
            }
            LengthFunction::Ld { d } => {
                if *d == 0 || *d > MAX_LD_DIM {
                    return Err(Error::Capacity {
                        requested: *d,
                        limit: MAX_LD_DIM,
                    });
                }
                Ok(())
            }
        }
    }

    pub fn group_dim(&self) -> usize {
        match self {
            LengthFunction::Ld { d } => *d,
            _ => 1,
        }
    }

    pub fn matrix_size(&self) -> usize {
        match self {
            LengthFunction::Ld { d } => 1 << d.div_ceil(2),
            _ => 1,
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.matrix_size() == 1
    }

    /// Word lengths for generating sets other than `{±1}` are tagged as an
    /// open case.
    pub fn open_case(&self) -> bool {
        match self {
            LengthFunction::WordLength { generators } => {
                let mut s: Vec<i64> = generators.iter().map(|g| g.abs()).collect();
                s.sort_unstable();
                s.dedup();
                s != [1]
            }
            _ => false,
        }
    }

    pub fn value(&self, g: &[i64]) -> Result<CMatrix> {
        if g.len() != self.group_dim() {
            return Err(Error::Input(format!(
                "group element {g:?} has wrong dimension for this length function"
            )));
        }
        match self {
            LengthFunction::Iota => Ok(CMatrix::from_element(1, 1, c(g[0] as f64))),
            LengthFunction::WordLength { generators } => {
                Ok(CMatrix::from_element(1, 1, c(word_length(g[0], generators)? as f64)))
            }
            LengthFunction::Ld { d } => length_matrix(*d, g),
        }
    }

    /// Scalar value; errors for matrix-valued kinds.
    pub fn scalar(&self, g: i64) -> Result<f64> {
        if !self.is_scalar() || self.group_dim() != 1 {
            return Err(Error::Input("length function is not scalar on ℤ".into()));
        }
        Ok(self.value(&[g])?[(0, 0)].re)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Minimal number of steps from the symmetric generator set reaching `n`.
/// An optimal word can be ordered so that partial sums stay within
/// `max|s|` of the segment `[min(0,n), max(0,n)]`, which bounds the search.
pub fn word_length(n: i64, generators: &[i64]) -> Result<usize> {
    let steps: Vec<i64> = generators.iter().flat_map(|&s| [s, -s]).filter(|&s| s != 0).collect();
    if steps.is_empty() {
        return Err(Error::Input("empty generating set".into()));
    }
    let reach = steps.iter().map(|s| s.abs()).max().unwrap();
    let lo = n.min(0) - reach;
    let hi = n.max(0) + reach;
    let width = (hi - lo + 1) as usize;
    let mut dist = vec![usize::MAX; width];
    let mut queue = VecDeque::new();
    dist[(0 - lo) as usize] = 0;
    queue.push_back(0i64);
    while let Some(x) = queue.pop_front() {
        let dx = dist[(x - lo) as usize];
        if x == n {
            return Ok(dx);
        }
        for s in &steps {
            let y = x + s;
            if y < lo || y > hi {
                continue;
            }
            let slot = &mut dist[(y - lo) as usize];
            if *slot == usize::MAX {
                *slot = dx + 1;
                queue.push_back(y);
            }
        }
    }
    Err(Error::Input(format!(
        "{n} is not reachable from generators {generators:?}"
    )))
}

/// `l^(d)(n)` by the recursion: `l^(1)(n) = [[0, -in], [in, 0]]`; for even
/// `d` add `diag(n_d I, -n_d I)`; for odd `d` the off-diagonal blocks are
/// `l^(d-1) - i n_d I` and its adjoint.
pub fn length_matrix(d: usize, n: &[i64]) -> Result<CMatrix> {
    if d == 0 || d > MAX_LD_DIM {
        return Err(Error::Capacity {
            requested: d,
            limit: MAX_LD_DIM,
        });
    }
    if n.len() != d {
        return Err(Error::Input(format!("l^({d}) needs {d} coordinates, got {}", n.len())));
    }
    if d == 1 {
        let x = n[0] as f64;
        return Ok(CMatrix::from_row_slice(2, 2, &[c(0.0), -I * x, I * x, c(0.0)]));
    }
    let prev = length_matrix(d - 1, &n[..d - 1])?;
    let nd = n[d - 1] as f64;
    let k = prev.nrows();
    if d % 2 == 0 {
        let half = k / 2;
        let diag: Vec<f64> = (0..k).map(|i| if i < half { nd } else { -nd }).collect();
        Ok(prev + matops::diag_real(&diag))
    } else {
        let id = matops::identity(k);
        let upper = &prev - &id * (I * nd);
        let lower = prev.adjoint() + &id * (I * nd);
        Ok(matops::block2(
            &CMatrix::zeros(k, k),
            &upper,
            &lower,
            &CMatrix::zeros(k, k),
        ))
    }
}

/// `sup_x ‖l(x) - l(x - g)‖` over the window; exactly `|g|` for `ι`.
pub fn translation_spread(l: &LengthFunction, g: &[i64], w: &LatticeWindow) -> Result<f64> {
    if g.len() != l.group_dim() || w.d != l.group_dim() {
        return Err(Error::Input(
            "group element, window and length function dimensions differ".into(),
        ));
    }
    if sup_norm(g) > 2 * w.radius {
        return Err(Error::Input(format!("{g:?} is farther than 2N from the origin")));
    }
    if let LengthFunction::Iota = l {
        return Ok(g[0].abs() as f64);
    }
    let mut worst: f64 = 0.0;
    for x in w.points() {
        let shifted: Vec<i64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
        let diff = l.value(&x)? - l.value(&shifted)?;
        worst = worst.max(matops::opnorm_unchecked(&diff));
    }
    Ok(worst)
}

/// Block-diagonal multiplication operator, block at point `x` equal to `l(x)`.
pub fn m_l_operator(l: &LengthFunction, w: &LatticeWindow) -> Result<CMatrix> {
    l.validate()?;
    if w.d != l.group_dim() {
        return Err(Error::Input(format!(
            "window dimension {} does not match length function dimension {}",
            w.d,
            l.group_dim()
        )));
    }
    let k = l.matrix_size();
    let n = w.size() * k;
    if n > matops::DEFAULT_MAX_DIM {
        return Err(Error::Capacity {
            requested: n,
            limit: matops::DEFAULT_MAX_DIM,
        });
    }
    let mut m = CMatrix::zeros(n, n);
    for (i, x) in w.points().iter().enumerate() {
        m.view_mut((i * k, i * k), (k, k)).copy_from(&l.value(x)?);
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProperReport {
    pub radius: usize,
    /// `(value, multiplicity)` of the eigenvalues of `M_l` on the window.
    pub histogram: Vec<(f64, usize)>,
    /// Values below this bound are fully enumerated by the window.
    pub complete_below: f64,
    pub warnings: Vec<String>,
    pub open_case: bool,
}

fn eigen_histogram(l: &LengthFunction, w: &LatticeWindow) -> Result<Vec<(f64, usize)>> {
    let mut values = Vec::new();
    for x in w.points() {
        let v = l.value(&x)?;
        if v.nrows() == 1 {
            values.push(v[(0, 0)].re);
        } else {
            values.extend(matops::herm_eigvals(&v)?);
        }
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(matops::multiplicities(&values, 1e-9))
}

/// Smallest `|eigenvalue|` attained on the window boundary; for the length
/// functions here the values strictly below it come only from interior points.
fn boundary_floor(l: &LengthFunction, w: &LatticeWindow) -> Result<f64> {
    let mut floor = f64::INFINITY;
    for x in w.points() {
        if sup_norm(&x) != w.radius {
            continue;
        }
        let v = l.value(&x)?;
        let m = if v.nrows() == 1 {
            v[(0, 0)].re.abs()
        } else {
            matops::herm_eigvals(&v)?
                .iter()
                .map(|e| e.abs())
                .fold(f64::INFINITY, f64::min)
        };
        floor = floor.min(m);
    }
    Ok(floor)
}

/// Multiplicity histogram on the window, compared against the window of
/// radius `2N`; a warning is raised for any value below the completeness
/// bound whose multiplicity changes.
pub fn properness_report(l: &LengthFunction, w: &LatticeWindow) -> Result<ProperReport> {
    l.validate()?;
    let histogram = eigen_histogram(l, w)?;
    let bigger = LatticeWindow::new(w.d, 2 * w.radius)?;
    let big_hist: BTreeMap<i64, usize> = eigen_histogram(l, &bigger)?
        .into_iter()
        .map(|(v, m)| ((v * 1e6).round() as i64, m))
        .collect();
    let complete_below = boundary_floor(l, w)?;
    let mut warnings = Vec::new();
    for (v, m) in &histogram {
        if v.abs() >= complete_below {
            continue;
        }
        let key = (v * 1e6).round() as i64;
        let m2 = big_hist.get(&key).copied().unwrap_or(0);
        if m2 != *m {
            warnings.push(format!(
                "multiplicity of {v:.6} grows from {m} to {m2} when the radius doubles"
            ));
        }
    }
    Ok(ProperReport {
        radius: w.radius,
        histogram,
        complete_below,
        warnings,
        open_case: l.open_case(),
    })
}
