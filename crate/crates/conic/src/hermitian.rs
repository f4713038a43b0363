//! Hermitian matrices, real symmetric embeddings, and eigenvalue helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Hermitian matrix stored as the packed upper triangle (column major,
/// diagonal included). The diagonal is kept real by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    upper: Vec<Complex64>,
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            upper: vec![Complex64::new(0.0, 0.0); n * (n + 1) / 2],
        }
    }

    /// Builds from a dense matrix, averaging `(M + M^H)/2` so that slightly
    /// non-Hermitian numerical input is accepted.
    pub fn from_matrix(m: &CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "square matrix required");
        let n = m.nrows();
        let mut upper = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for i in 0..=j {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
                let avg = if i == j {
                    Complex64::new(avg.re, 0.0)
                } else {
                    avg
                };
                upper.push(avg);
            }
        }
        Self { n, upper }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn packed_index(&self, i: usize, j: usize) -> usize {
        // upper triangle, column major: column j holds j+1 entries
        debug_assert!(i <= j);
        j * (j + 1) / 2 + i
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if i <= j {
            self.upper[self.packed_index(i, j)]
        } else {
            self.upper[self.packed_index(j, i)].conj()
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        if i <= j {
            let idx = self.packed_index(i, j);
            self.upper[idx] = if i == j { Complex64::new(v.re, 0.0) } else { v };
        } else {
            let idx = self.packed_index(j, i);
            self.upper[idx] = v.conj();
        }
    }

    pub fn to_matrix(&self) -> CMat {
        CMat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).re).sum()
    }

    /// Real quadratic form `v^H H v`.
    pub fn quad_form(&self, v: &CVec) -> f64 {
        assert_eq!(v.len(), self.n);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.n {
            for j in 0..self.n {
                acc += v[i].conj() * self.get(i, j) * v[j];
            }
        }
        acc.re
    }

    /// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]` of size 2n.
    ///
    /// `H` is PSD iff the embedding is PSD; the embedding trace is twice the
    /// Hermitian trace and each eigenvalue of `H` appears with doubled
    /// multiplicity.
    pub fn embed(&self) -> RMat {
        let n = self.n;
        let mut out = RMat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let v = self.get(i, j);
                out[(i, j)] = v.re;
                out[(n + i, n + j)] = v.re;
                out[(i, n + j)] = -v.im;
                out[(n + i, j)] = v.im;
            }
        }
        out
    }

    /// Inverse of [`HermitianMatrix::embed`]: averages the embedding blocks
    /// back into a Hermitian matrix, discarding numerical asymmetry.
    pub fn from_embedding(y: &RMat) -> Self {
        assert_eq!(y.nrows(), y.ncols());
        assert_eq!(y.nrows() % 2, 0, "embedding has even dimension");
        let n = y.nrows() / 2;
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let re = 0.5 * (y[(i, j)] + y[(n + i, n + j)]);
                let im = 0.5 * (y[(n + i, j)] - y[(i, n + j)]);
                m[(i, j)] = Complex64::new(re, im);
            }
        }
        Self::from_matrix(&m)
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig(h: &HermitianMatrix) -> f64 {
    if h.dim() == 0 {
        return 0.0;
    }
    let eig = h.to_matrix().symmetric_eigenvalues();
    eig.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Stacks a complex vector as `[Re v; Im v]`, the vector companion of
/// [`HermitianMatrix::embed`]: `embed(H) * embed_vector(v) = embed_vector(H v)`
/// and `embed_vector(v)' embed(H) embed_vector(v) = v^H H v`.
pub fn embed_vector(v: &CVec) -> RVec {
    let n = v.len();
    RVec::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
        let m = CMat::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        HermitianMatrix::from_matrix(&(&m + m.adjoint()))
    }

    /// Test-only eigenvalue oracle: bisection on t with a hand-rolled complex
    /// Cholesky as the PSD test for `H - t I`. Independent of the
    /// `symmetric_eigenvalues` path used by `min_eig`.
    fn min_eig_bisect(h: &HermitianMatrix) -> f64 {
        fn chol_ok(m: &CMat) -> bool {
            let n = m.nrows();
            let mut l = CMat::zeros(n, n);
            for j in 0..n {
                let mut d = m[(j, j)].re;
                for k in 0..j {
                    d -= l[(j, k)].norm_sqr();
                }
                if d <= 0.0 {
                    return false;
                }
                let dj = d.sqrt();
                l[(j, j)] = Complex64::new(dj, 0.0);
                for i in (j + 1)..n {
                    let mut s = m[(i, j)];
                    for k in 0..j {
                        s -= l[(i, k)] * l[(j, k)].conj();
                    }
                    l[(i, j)] = s / dj;
                }
            }
            true
        }
        let n = h.dim();
        let bound: f64 = (0..n)
            .map(|i| (0..n).map(|j| h.get(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
            + 1.0;
        let (mut lo, mut hi) = (-bound, bound);
        let eye = CMat::identity(n, n);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let shifted = h.to_matrix() - eye.scale(mid);
            if chol_ok(&shifted) {
                lo = mid; // H - mid I is PD, so min eig > mid
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn min_eig_identity_and_diag() {
        let eye = HermitianMatrix::from_matrix(&CMat::identity(4, 4));
        assert_relative_eq!(min_eig(&eye), 1.0, epsilon = 1e-12);
        let d = CMat::from_diagonal(&CVec::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(-2.0, 0.0),
        ]));
        assert_relative_eq!(
            min_eig(&HermitianMatrix::from_matrix(&d)),
            -2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn min_eig_matches_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..6 {
            let h = random_hermitian(6, &mut rng);
            let fast = min_eig(&h);
            let slow = min_eig_bisect(&h);
            let scale = fast.abs().max(1.0);
            assert!(
                (fast - slow).abs() <= 1e-10 * scale,
                "min_eig {fast} vs bisection {slow}"
            );
        }
    }

    #[test]
    fn embedding_of_real_matrix_is_block_duplicate() {
        let m = CMat::from_fn(3, 3, |i, j| Complex64::new((i + j) as f64, 0.0));
        let h = HermitianMatrix::from_matrix(&m);
        let e = h.embed();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(e[(i, j)], e[(3 + i, 3 + j)]);
                assert_eq!(e[(i, 3 + j)], 0.0);
                assert_eq!(e[(3 + i, j)], 0.0);
            }
        }
    }

    #[test]
    fn embedding_pauli_y_spectrum() {
        // H = [[0, -i], [i, 0]] has eigenvalues +-1; the embedding doubles them.
        let mut h = HermitianMatrix::zeros(2);
        h.set(0, 1, Complex64::new(0.0, -1.0));
        let mut eig: Vec<f64> = h.embed().symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let want = [-1.0, -1.0, 1.0, 1.0];
        for (a, b) in eig.iter().zip(want.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn embedding_doubles_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(5, &mut rng);
        let mut herm_eigs: Vec<f64> = h
            .to_matrix()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        herm_eigs.sort_by(f64::total_cmp);
        let mut emb_eigs: Vec<f64> = h.embed().symmetric_eigenvalues().iter().copied().collect();
        emb_eigs.sort_by(f64::total_cmp);
        for (k, &ev) in herm_eigs.iter().enumerate() {
            assert_relative_eq!(emb_eigs[2 * k], ev, epsilon = 1e-9, max_relative = 1e-9);
            assert_relative_eq!(emb_eigs[2 * k + 1], ev, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn embedding_quadratic_form_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let h = random_hermitian(4, &mut rng);
            let v = CVec::from_fn(4, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let direct = h.quad_form(&v);
            // Vector identity: embedded quadratic form equals v^H H v.
            let ve = embed_vector(&v);
            let via_vec = (ve.transpose() * h.embed() * &ve)[(0, 0)];
            // Trace identity: v^H H v = tr(H vv^H) = tr(embed(H) embed(vv^H)) / 2.
            let vvh = HermitianMatrix::from_matrix(&CMat::from_fn(4, 4, |i, j| {
                v[i] * v[j].conj()
            }));
            let via_trace = 0.5 * (h.embed() * vvh.embed()).trace();
            assert_relative_eq!(direct, via_vec, epsilon = 1e-10, max_relative = 1e-10);
            assert_relative_eq!(direct, via_trace, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn from_embedding_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let h = random_hermitian(4, &mut rng);
        let back = HermitianMatrix::from_embedding(&h.embed());
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(h.get(i, j).re, back.get(i, j).re, epsilon = 1e-14);
                assert_relative_eq!(h.get(i, j).im, back.get(i, j).im, epsilon = 1e-14);
            }
        }
    }
}
