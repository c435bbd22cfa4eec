//! Seeded random matrices shared by initializers, data synthesis and tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spectral::DenseMatrix;

/// The generator used everywhere a seed is accepted.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries i.i.d. `N(0, sigma²)`, drawn in row-major order.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, sigma: f64, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        sigma * z
    })
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DenseMatrix {
    if n == 0 {
        return DenseMatrix::zeros(0, 0);
    }
    let g = gaussian_matrix(n, n, 1.0, rng);
    let qr = DMatrix::from_row_slice(n, n, g.as_slice()).qr();
    let q = qr.q();
    let r = qr.r();
    DenseMatrix::from_fn(n, n, |i, j| {
        let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        q[(i, j)] * s
    })
}
