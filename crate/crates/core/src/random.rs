//! Seeded random draws shared by generators and samplers.
//!
//! Every consumer takes a `ChaCha8Rng`. Independent runs that need their own
//! stream (multi-start, per-instance corpora) derive it with [`substream`],
//! which selects a ChaCha stream id rather than reseeding, so results do not
//! depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matrix::DenseMatrix;

pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// i.i.d. N(0, scale²) entries, drawn in row-major order.
pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    })
}

/// `rows x k` matrix with orthonormal columns (Gram-Schmidt on a Gaussian
/// draw, applied twice).
pub fn orthonormal_columns<R: Rng>(rng: &mut R, rows: usize, k: usize) -> DenseMatrix {
    assert!(k <= rows, "cannot draw {k} orthonormal columns in R^{rows}");
    loop {
        let g = gaussian_matrix(rng, rows, k, 1.0);
        let mut cols: Vec<Vec<f64>> = (0..k).map(|j| g.column(j)).collect();
        let mut ok = true;
        for j in 0..k {
            for _ in 0..2 {
                for i in 0..j {
                    let proj: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                    let prev = cols[i].clone();
                    for (x, p) in cols[j].iter_mut().zip(&prev) {
                        *x -= proj * p;
                    }
                }
            }
            let norm: f64 = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            cols[j].iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            let mut q = DenseMatrix::zeros(rows, k);
            for (j, c) in cols.iter().enumerate() {
                q.set_column(j, c);
            }
            return q;
        }
    }
}
