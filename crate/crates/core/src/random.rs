//! Seeded random sampling of matrices and algebra elements.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matops::{c, CMatrix, C64};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<R: Rng>(r: &mut R) -> f64 {
    r.sample(StandardNormal)
}

pub fn complex_normal<R: Rng>(r: &mut R) -> C64 {
    C64::new(normal(r), normal(r)) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_vec<R: Rng>(r: &mut R, n: usize) -> Vec<C64> {
    (0..n).map(|_| complex_normal(r)).collect()
}

pub fn random_matrix<R: Rng>(r: &mut R, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| complex_normal(r))
}

pub fn random_hermitian<R: Rng>(r: &mut R, n: usize) -> CMatrix {
    let g = random_matrix(r, n, n);
    (&g + g.adjoint()) * c(0.5)
}

/// Haar-distributed unitary via QR with phase correction.
pub fn random_unitary<R: Rng>(r: &mut R, n: usize) -> CMatrix {
    let g = random_matrix(r, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..n {
        let d = rr[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}
