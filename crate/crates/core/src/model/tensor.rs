//! Row-major f64 matrices backed by `matrixmultiply` GEMM.

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape mismatch");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[derive(Clone, Copy)]
pub enum Tr {
    N,
    T,
}

/// `c = beta * c + a' * b'` where `a'`/`b'` are `a`/`b` optionally
/// transposed. All buffers are row-major.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    ta: Tr,
    a: &[f64],
    a_rows: usize,
    a_cols: usize,
    tb: Tr,
    b: &[f64],
    b_rows: usize,
    b_cols: usize,
    beta: f64,
    c: &mut [f64],
) {
    let (m, k, rsa, csa) = match ta {
        Tr::N => (a_rows, a_cols, a_cols as isize, 1),
        Tr::T => (a_cols, a_rows, 1, a_cols as isize),
    };
    let (k2, n, rsb, csb) = match tb {
        Tr::N => (b_rows, b_cols, b_cols as isize, 1),
        Tr::T => (b_cols, b_rows, 1, b_cols as isize),
    };
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(c.len(), m * n, "output shape mismatch");
    assert!(a.len() >= a_rows * a_cols && b.len() >= b_rows * b_cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: shapes and strides checked above describe in-bounds views.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `x (n x in) * w^T (in x out)` for a weight stored as `out x in`.
pub fn linear(x: &Mat, w: &Mat) -> Mat {
    let mut y = Mat::zeros(x.rows, w.rows);
    gemm(Tr::N, &x.data, x.rows, x.cols, Tr::T, &w.data, w.rows, w.cols, 0.0, &mut y.data);
    y
}

/// Backward of `linear`: accumulates `dw += dy^T x` and returns `dx = dy w`.
pub fn linear_backward(x: &Mat, w: &Mat, dy: &Mat, dw: &mut Mat) -> Mat {
    gemm(Tr::T, &dy.data, dy.rows, dy.cols, Tr::N, &x.data, x.rows, x.cols, 1.0, &mut dw.data);
    let mut dx = Mat::zeros(x.rows, x.cols);
    gemm(Tr::N, &dy.data, dy.rows, dy.cols, Tr::N, &w.data, w.rows, w.cols, 0.0, &mut dx.data);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        let mut c = Mat::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                c.data[i * b.cols + j] = (0..a.cols).map(|k| a.data[i * a.cols + k] * b.data[k * b.cols + j]).sum();
            }
        }
        c
    }

    fn transpose(a: &Mat) -> Mat {
        let mut t = Mat::zeros(a.cols, a.rows);
        for i in 0..a.rows {
            for j in 0..a.cols {
                t.data[j * a.rows + i] = a.data[i * a.cols + j];
            }
        }
        t
    }

    #[test]
    fn gemm_matches_naive_in_all_layouts() {
        let a = Mat::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.7).sin()).collect());
        let b = Mat::from_vec(4, 5, (0..20).map(|i| (i as f64 * 1.3).cos()).collect());
        let want = naive(&a, &b);
        let at = transpose(&a);
        let bt = transpose(&b);
        for (ta, aa, tb, bb) in [(Tr::N, &a, Tr::N, &b), (Tr::T, &at, Tr::N, &b), (Tr::N, &a, Tr::T, &bt), (Tr::T, &at, Tr::T, &bt)] {
            let mut c = vec![0.0; 15];
            gemm(ta, &aa.data, aa.rows, aa.cols, tb, &bb.data, bb.rows, bb.cols, 0.0, &mut c);
            for (x, y) in c.iter().zip(&want.data) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
