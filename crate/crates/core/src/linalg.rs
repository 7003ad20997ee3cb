//! Dense helpers and matrix-free linear operators.
//!
//! The dense path is nalgebra throughout. The [`LinearOperator`] trait lets the
//! Kronecker-structured measurement matrices be applied without materializing
//! them, which is what the extremal-eigenvalue solver uses for large `M`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RVector = DVector<f64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigenvalues of a Hermitian matrix, sorted ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Largest deviation from Hermitian symmetry, `max |m_ij - conj(m_ji)|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn cmax_abs(v: &CVector) -> f64 {
    v.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn cnorm2(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Explicit Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// A linear map `C^ncols -> C^nrows` with an adjoint.
pub trait LinearOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &CVector) -> CVector;
    fn apply_adjoint(&self, y: &CVector) -> CVector;

    /// Materializes the operator column by column. Intended for small operators and tests.
    fn to_dense(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.nrows(), self.ncols());
        let mut e = CVector::zeros(self.ncols());
        for j in 0..self.ncols() {
            e[j] = ONE;
            out.set_column(j, &self.apply(&e));
            e[j] = ZERO;
        }
        out
    }
}

impl LinearOperator for CMatrix {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &CVector) -> CVector {
        self * x
    }
    fn apply_adjoint(&self, y: &CVector) -> CVector {
        self.ad_mul(y)
    }
}

/// Lazy `left ⊗ right` acting on column-major `vec(X)`, i.e. `vec(right · X · leftᵀ)`.
pub struct Kronecker<L, R> {
    pub left: L,
    pub right: R,
}

impl<L: LinearOperator, R: LinearOperator> Kronecker<L, R> {
    pub fn new(left: L, right: R) -> Self {
        Self { left, right }
    }

    fn apply_with(
        &self,
        x: &CVector,
        right_rows: usize,
        right_cols: usize,
        left_rows: usize,
        left_cols: usize,
        adjoint: bool,
    ) -> CVector {
        // X is right_cols x left_cols; first act on its columns, then on its rows.
        let mut z = CMatrix::zeros(right_rows, left_cols);
        for c in 0..left_cols {
            let col = CVector::from_iterator(right_cols, x.rows(c * right_cols, right_cols).iter().copied());
            let out = if adjoint {
                self.right.apply_adjoint(&col)
            } else {
                self.right.apply(&col)
            };
            z.set_column(c, &out);
        }
        let mut y = CVector::zeros(right_rows * left_rows);
        for r in 0..right_rows {
            let row = CVector::from_iterator(left_cols, z.row(r).iter().copied());
            // Rows transform as Y[r,:]ᵀ = L·Z[r,:]ᵀ, and as Lᴴ·Z[r,:]ᵀ for the adjoint.
            let out = if adjoint {
                self.left.apply_adjoint(&row)
            } else {
                self.left.apply(&row)
            };
            for (c, v) in out.iter().enumerate() {
                y[c * right_rows + r] = *v;
            }
        }
        y
    }
}

impl<L: LinearOperator, R: LinearOperator> LinearOperator for Kronecker<L, R> {
    fn nrows(&self) -> usize {
        self.left.nrows() * self.right.nrows()
    }
    fn ncols(&self) -> usize {
        self.left.ncols() * self.right.ncols()
    }
    fn apply(&self, x: &CVector) -> CVector {
        self.apply_with(
            x,
            self.right.nrows(),
            self.right.ncols(),
            self.left.nrows(),
            self.left.ncols(),
            false,
        )
    }
    fn apply_adjoint(&self, y: &CVector) -> CVector {
        // (L ⊗ R)ᴴ = Lᴴ ⊗ Rᴴ; the roles of rows and columns swap.
        self.apply_with(
            y,
            self.right.ncols(),
            self.right.nrows(),
            self.left.ncols(),
            self.left.nrows(),
            true,
        )
    }
}

/// `inner · E` where `E` keeps the listed columns (strictly increasing indices).
pub struct ColumnSelect<Op> {
    pub inner: Op,
    pub columns: Vec<usize>,
}

impl<Op: LinearOperator> LinearOperator for ColumnSelect<Op> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.columns.len()
    }
    fn apply(&self, x: &CVector) -> CVector {
        let mut full = CVector::zeros(self.inner.ncols());
        for (k, &c) in self.columns.iter().enumerate() {
            full[c] = x[k];
        }
        self.inner.apply(&full)
    }
    fn apply_adjoint(&self, y: &CVector) -> CVector {
        let full = self.inner.apply_adjoint(y);
        CVector::from_iterator(self.columns.len(), self.columns.iter().map(|&c| full[c]))
    }
}

/// Which end of the spectrum to hunt for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Largest,
    Smallest,
}

/// Extremal eigenvalue of a Hermitian map `x -> h(x)` by restarted Lanczos
/// with full reorthogonalization.
///
/// Stops once the Ritz residual `|beta_k s_k|` is at most `tol * scale`, where
/// `scale` is the largest Ritz magnitude seen (at least 1).
pub fn lanczos_extreme<F>(h: F, dim: usize, which: Extreme, tol: f64) -> f64
where
    F: Fn(&CVector) -> CVector,
{
    const MAX_BASIS: usize = 80;
    const MAX_RESTARTS: usize = 200;

    let basis_cap = MAX_BASIS.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let mut start = CVector::from_fn(dim, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let mut best = f64::NAN;

    for _ in 0..MAX_RESTARTS {
        let norm = cnorm2(&start);
        start /= Complex64::new(norm, 0.0);
        let mut basis: Vec<CVector> = vec![start.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut ritz_vec = start.clone();

        for j in 0..basis_cap {
            let mut w = h(&basis[j]);
            let alpha = basis[j].dotc(&w).re;
            alphas.push(alpha);
            // Two passes of classical Gram-Schmidt against the whole basis.
            for _ in 0..2 {
                for v in &basis {
                    let c = v.dotc(&w);
                    w.axpy(-c, v, ONE);
                }
            }
            let beta = cnorm2(&w);

            let k = alphas.len();
            let t = DMatrix::<f64>::from_fn(k, k, |r, c| {
                if r == c {
                    alphas[r]
                } else if r + 1 == c {
                    betas[r]
                } else if c + 1 == r {
                    betas[c]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let idx = pick(&eig.eigenvalues, which);
            let theta = eig.eigenvalues[idx];
            let s_last = eig.eigenvectors[(k - 1, idx)];
            let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            best = theta;

            let exhausted = beta <= 1e-14 * scale || k == dim;
            if (beta * s_last).abs() <= tol * scale || exhausted {
                return theta;
            }
            if k == basis_cap {
                ritz_vec = CVector::zeros(dim);
                for (i, v) in basis.iter().enumerate() {
                    ritz_vec.axpy(Complex64::new(eig.eigenvectors[(i, idx)], 0.0), v, ONE);
                }
                break;
            }
            betas.push(beta);
            basis.push(w / Complex64::new(beta, 0.0));
        }
        start = ritz_vec;
    }
    best
}

fn pick(vals: &RVector, which: Extreme) -> usize {
    let mut idx = 0;
    for (i, v) in vals.iter().enumerate() {
        let better = match which {
            Extreme::Largest => *v > vals[idx],
            Extreme::Smallest => *v < vals[idx],
        };
        if better {
            idx = i;
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn lazy_kronecker_matches_explicit() {
        let p = sample(3, 4, 1);
        let q = sample(2, 5, 2);
        let explicit = kron(&p, &q);
        let lazy = Kronecker::new(p, q);
        let x = sample(20, 1, 3).column(0).into_owned();
        let y = sample(6, 1, 4).column(0).into_owned();
        assert_abs_diff_eq!((lazy.apply(&x) - &explicit * &x).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            (lazy.apply_adjoint(&y) - explicit.ad_mul(&y)).norm(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!((lazy.to_dense() - explicit).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn nested_kronecker_with_column_select() {
        let a = sample(2, 3, 5);
        let b = sample(2, 2, 6);
        let c = sample(3, 2, 7);
        let explicit = kron(&a, &kron(&b, &c));
        let cols = vec![0, 3, 4, 9, 11];
        let sel = ColumnSelect {
            inner: Kronecker::new(a, Kronecker::new(b, c)),
            columns: cols.clone(),
        };
        let expected = CMatrix::from_fn(explicit.nrows(), cols.len(), |i, j| explicit[(i, cols[j])]);
        assert_abs_diff_eq!((sel.to_dense() - &expected).norm(), 0.0, epsilon = 1e-12);
        let y = sample(12, 1, 8).column(0).into_owned();
        assert_abs_diff_eq!(
            (sel.apply_adjoint(&y) - expected.ad_mul(&y)).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn lanczos_agrees_with_dense_eigensolver() {
        let a = sample(40, 120, 9);
        let g = a.ad_mul(&a);
        let dense = hermitian_eigenvalues(&g);
        let hi = lanczos_extreme(|x| &g * x, 120, Extreme::Largest, 1e-11);
        let lo = lanczos_extreme(|x| &g * x, 120, Extreme::Smallest, 1e-11);
        assert!((hi - dense[119]).abs() <= 1e-9 * dense[119]);
        // 80 of the 120 eigenvalues are exactly zero.
        assert!(lo.abs() <= 1e-9 * dense[119]);
    }

    #[test]
    fn hermitian_defect_detects_asymmetry() {
        let a = sample(4, 4, 10);
        let h = a.ad_mul(&a);
        assert!(hermitian_defect(&h) < 1e-14);
        assert!(hermitian_defect(&a) > 1e-3);
    }
}
