//! Exact two-phase simplex over the rationals with Bland's rule, for small
//! transportation problems and their Kantorovich duals.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<Q>, value: Q },
    Infeasible,
    Unbounded,
}

pub fn rational(x: f64) -> Q {
    Q::from_float(x).expect("finite input")
}

pub fn to_f64(q: &Q) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

struct Tableau {
    rows: Vec<Vec<Q>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> &Q {
        &self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col].clone();
        for v in self.rows[r].iter_mut() {
            *v = &*v / &p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v = &*v - &f * pv;
                }
            }
        }
        self.basis[r] = col;
    }

    /// Minimizes `cost` over the current basis using columns `< allowed`.
    fn optimize(&mut self, cost: &[Q], allowed: usize) -> bool {
        loop {
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j].clone();
                for (i, &b) in self.basis.iter().enumerate() {
                    if !self.rows[i][j].is_zero() && !cost[b].is_zero() {
                        r -= &cost[b] * &self.rows[i][j];
                    }
                }
                if r.is_negative() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else { return true };
            let mut leave: Option<(usize, Q)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][col];
                if a.is_positive() {
                    let ratio = self.rhs(i) / a;
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, col),
                None => return false,
            }
        }
    }
}

/// Minimizes `cost · x` subject to `a x = b`, `x ≥ 0`.
pub fn minimize(a: &[Vec<Q>], b: &[Q], cost: &[Q]) -> LpOutcome {
    let m = a.len();
    let n = cost.len();
    assert!(a.iter().all(|r| r.len() == n) && b.len() == m, "inconsistent LP shape");
    let width = n + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let sign = if b[i].is_negative() { -Q::one() } else { Q::one() };
        let mut row: Vec<Q> = a[i].iter().map(|v| v * &sign).collect();
        row.extend((0..m).map(|k| if k == i { Q::one() } else { Q::zero() }));
        row.push(&b[i] * &sign);
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        basis: (n..n + m).collect(),
        width,
    };
    let phase1: Vec<Q> = (0..width).map(|j| if j >= n { Q::one() } else { Q::zero() }).collect();
    t.optimize(&phase1, width);
    let infeasibility: Q = t
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &bj)| bj >= n)
        .map(|(i, _)| t.rhs(i).clone())
        .fold(Q::zero(), |acc, v| acc + v);
    if infeasibility.is_positive() {
        return LpOutcome::Infeasible;
    }
    // drive artificial variables out of the basis, dropping redundant rows
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n {
            match (0..n).find(|&j| !t.rows[i][j].is_zero()) {
                Some(j) => t.pivot(i, j),
                None => {
                    t.rows.remove(i);
                    t.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }
    let mut full_cost = cost.to_vec();
    full_cost.extend((0..m).map(|_| Q::zero()));
    if !t.optimize(&full_cost, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![Q::zero(); n];
    for (i, &bj) in t.basis.iter().enumerate() {
        x[bj] = t.rhs(i).clone();
    }
    let value = x.iter().zip(cost).fold(Q::zero(), |acc, (xi, ci)| acc + xi * ci);
    LpOutcome::Optimal { x, value }
}

/// Optimal transport cost between `mu` and `nu` under cost matrix `d`,
/// with the optimal plan in row-major order.
pub fn transport(d: &[Vec<Q>], mu: &[Q], nu: &[Q]) -> LpOutcome {
    let n = mu.len();
    let mut a = Vec::with_capacity(2 * n);
    for i in 0..n {
        a.push(
            (0..n * n)
                .map(|k| if k / n == i { Q::one() } else { Q::zero() })
                .collect(),
        );
    }
    for j in 0..n {
        a.push(
            (0..n * n)
                .map(|k| if k % n == j { Q::one() } else { Q::zero() })
                .collect(),
        );
    }
    let b: Vec<Q> = mu.iter().chain(nu).cloned().collect();
    let cost: Vec<Q> = d.iter().flatten().cloned().collect();
    minimize(&a, &b, &cost)
}

/// `max Σ f_i (μ_i - ν_i)` subject to `f_i - f_j ≤ d_ij`; returns the
/// optimal potential and value.
pub fn kantorovich_dual(d: &[Vec<Q>], mu: &[Q], nu: &[Q]) -> Option<(Vec<Q>, Q)> {
    let n = mu.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .collect();
    let vars = 2 * n + pairs.len();
    let mut a = Vec::with_capacity(pairs.len());
    let mut b = Vec::with_capacity(pairs.len());
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let mut row = vec![Q::zero(); vars];
        row[i] += Q::one();
        row[n + i] -= Q::one();
        row[j] -= Q::one();
        row[n + j] += Q::one();
        row[2 * n + p] = Q::one();
        a.push(row);
        b.push(d[i][j].clone());
    }
    let mut cost = vec![Q::zero(); vars];
    for i in 0..n {
        let w = &mu[i] - &nu[i];
        cost[i] = -w.clone();
        cost[n + i] = w;
    }
    if n == 1 {
        return Some((vec![Q::zero()], Q::zero()));
    }
    match minimize(&a, &b, &cost) {
        LpOutcome::Optimal { x, value } => {
            let f = (0..n).map(|i| &x[i] - &x[n + i]).collect();
            Some((f, -value))
        }
        _ => None,
    }
}

pub fn integer(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v: i64, d: i64) -> Q {
        Q::new(BigInt::from(v), BigInt::from(d))
    }

    #[test]
    fn small_lp() {
        // min -x - y, x + y + s = 4, x + 3y + t = 6
        let a = vec![
            vec![integer(1), integer(1), integer(1), integer(0)],
            vec![integer(1), integer(3), integer(0), integer(1)],
        ];
        let b = vec![integer(4), integer(6)];
        let cost = vec![integer(-1), integer(-1), integer(0), integer(0)];
        match minimize(&a, &b, &cost) {
            LpOutcome::Optimal { value, .. } => assert_eq!(value, integer(-4)),
            other => panic!("{other:?}"),
        }
        let unb = minimize(
            &[vec![integer(1), integer(-1)]],
            &[integer(1)],
            &[integer(0), integer(-1)],
        );
        assert_eq!(unb, LpOutcome::Unbounded);
        let inf = minimize(
            &[vec![integer(1)], vec![integer(1)]],
            &[integer(1), integer(2)],
            &[integer(0)],
        );
        assert_eq!(inf, LpOutcome::Infeasible);
    }

    #[test]
    fn three_point_transport() {
        let d = vec![
            vec![integer(0), integer(1), integer(1)],
            vec![integer(1), integer(0), integer(1)],
            vec![integer(1), integer(1), integer(0)],
        ];
        let mu = vec![integer(1), integer(0), integer(0)];
        let nu = vec![integer(0), q(1, 2), q(1, 2)];
        match transport(&d, &mu, &nu) {
            LpOutcome::Optimal { value, .. } => assert_eq!(value, integer(1)),
            other => panic!("{other:?}"),
        }
        let (_, dual) = kantorovich_dual(&d, &mu, &nu).unwrap();
        assert_eq!(dual, integer(1));
    }
}
