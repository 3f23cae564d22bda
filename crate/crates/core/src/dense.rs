//! Blocked dense Cholesky factorization and triangular solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};

const BLOCK: usize = 64;

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = M`.
#[derive(Clone, Debug)]
pub struct DenseCholesky {
    l: DMatrix<f64>,
}

impl DenseCholesky {
    /// Factorizes a symmetric positive-definite matrix. Only the lower
    /// triangle of `m` is read.
    pub fn new(mut m: DMatrix<f64>) -> Result<Self> {
        assert!(m.is_square(), "cholesky of a non-square matrix");
        let n = m.nrows();
        let mut k = 0;
        while k < n {
            let b = BLOCK.min(n - k);
            factor_diagonal_block(&mut m, k, b)?;
            let rest = n - k - b;
            if rest > 0 {
                solve_panel(&mut m, k, b);
                let panel = m.view((k + b, k), (rest, b)).clone_owned();
                let panel_t = panel.transpose();
                // Lower-triangle-only trailing update, one column block at a time.
                let mut c = 0;
                while c < rest {
                    let w = BLOCK.min(rest - c);
                    let rows = rest - c;
                    let mut target = m.view_mut((k + b + c, k + b + c), (rows, w));
                    target.gemm(
                        -1.0,
                        &panel.view((c, 0), (rows, b)),
                        &panel_t.view((0, c), (b, w)),
                        1.0,
                    );
                    c += w;
                }
            }
            k += b;
        }
        m.fill_upper_triangle(0.0, 1);
        Ok(Self { l: m })
    }

    /// Factorizes with one retry after adding `1e-10 * trace / n` to the diagonal.
    pub fn with_jitter(m: DMatrix<f64>) -> Result<Self> {
        match Self::new(m.clone()) {
            Ok(f) => Ok(f),
            Err(e) => {
                let n = m.nrows().max(1);
                let jitter = 1e-10 * m.trace() / n as f64;
                log::warn!("cholesky failed ({e}); retrying with diagonal jitter {jitter:e}");
                let mut m = m;
                for i in 0..m.nrows() {
                    m[(i, i)] += jitter;
                }
                Self::new(m)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn into_l(self) -> DMatrix<f64> {
        self.l
    }

    /// `log |M| = 2 Σ log L_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Overwrites `b` with `L⁻¹ b`.
    pub fn forward_in_place(&self, b: &mut DMatrix<f64>) {
        forward_blocked(&self.l, b);
    }

    /// Overwrites `b` with `L⁻ᵀ b`.
    pub fn backward_in_place(&self, b: &mut DMatrix<f64>) {
        backward_blocked(&self.l, b);
    }

    pub fn forward_vec(&self, b: &mut [f64]) {
        let n = self.dim();
        for j in 0..n {
            let col = self.l.column(j);
            let xj = b[j] / col[j];
            b[j] = xj;
            for i in (j + 1)..n {
                b[i] -= col[i] * xj;
            }
        }
    }

    pub fn backward_vec(&self, b: &mut [f64]) {
        let n = self.dim();
        for j in (0..n).rev() {
            let col = self.l.column(j);
            let mut s = b[j];
            for i in (j + 1)..n {
                s -= col[i] * b[i];
            }
            b[j] = s / col[j];
        }
    }

    /// `M⁻¹ b`.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.forward_vec(x.as_mut_slice());
        self.backward_vec(x.as_mut_slice());
        x
    }

    /// `M⁻¹ B`.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    /// `M⁻¹`, formed as `L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let mut linv = DMatrix::identity(self.dim(), self.dim());
        self.forward_in_place(&mut linv);
        linv.tr_mul(&linv)
    }
}

fn factor_diagonal_block(m: &mut DMatrix<f64>, k: usize, b: usize) -> Result<()> {
    for j in k..k + b {
        for p in k..j {
            let ljp = m[(j, p)];
            if ljp != 0.0 {
                for i in j..k + b {
                    let v = m[(i, p)];
                    m[(i, j)] -= v * ljp;
                }
            }
        }
        let d = m[(j, j)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(GpError::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        m[(j, j)] = d;
        for i in (j + 1)..k + b {
            m[(i, j)] /= d;
        }
    }
    Ok(())
}

/// Panel below the diagonal block: `A21 <- A21 L11⁻ᵀ`.
fn solve_panel(m: &mut DMatrix<f64>, k: usize, b: usize) {
    let n = m.nrows();
    for j in k..k + b {
        for p in k..j {
            let ljp = m[(j, p)];
            if ljp != 0.0 {
                let (src, mut dst) = m.columns_range_pair_mut(p, j);
                let src = src.rows(k + b, n - k - b);
                let mut dst = dst.rows_mut(k + b, n - k - b);
                dst.axpy(-ljp, &src, 1.0);
            }
        }
        let d = m[(j, j)];
        m.view_mut((k + b, j), (n - k - b, 1)).scale_mut(1.0 / d);
    }
}

fn forward_blocked(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    assert_eq!(b.nrows(), n, "forward solve dimension mismatch");
    let ncols = b.ncols();
    let mut i0 = 0;
    while i0 < n {
        let bi = BLOCK.min(n - i0);
        if i0 > 0 {
            let (done, mut cur) = b.rows_range_pair_mut(0..i0, i0..i0 + bi);
            cur.gemm(-1.0, &l.view((i0, 0), (bi, i0)), &done, 1.0);
        }
        for c in 0..ncols {
            for p in i0..i0 + bi {
                let xp = b[(p, c)] / l[(p, p)];
                b[(p, c)] = xp;
                if xp != 0.0 {
                    for i in (p + 1)..i0 + bi {
                        b[(i, c)] -= l[(i, p)] * xp;
                    }
                }
            }
        }
        i0 += bi;
    }
}

fn backward_blocked(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    assert_eq!(b.nrows(), n, "backward solve dimension mismatch");
    let ncols = b.ncols();
    let mut i1 = n;
    while i1 > 0 {
        let bi = BLOCK.min(i1);
        let i0 = i1 - bi;
        if i1 < n {
            let (mut cur, done) = b.rows_range_pair_mut(i0..i1, i1..n);
            cur.gemm_tr(-1.0, &l.view((i1, i0), (n - i1, bi)), &done, 1.0);
        }
        for c in 0..ncols {
            for p in (i0..i1).rev() {
                let mut s = b[(p, c)];
                for i in (p + 1)..i1 {
                    s -= l[(i, p)] * b[(i, c)];
                }
                b[(p, c)] = s / l[(p, p)];
            }
        }
        i1 = i0;
    }
}
