//! Small dense linear algebra: just what the dynamics, optimizer, and
//! controller kernels need (systems here are at most a few dozen unknowns).

use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(x).map(|(&a, &b)| a * b).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// max_ij |a_ij - a_ji|; zero for symmetric matrices.
    pub fn asymmetry(&self) -> T {
        assert_eq!(self.rows, self.cols);
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                let d = (self[(i, j)] - self[(j, i)]).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Cholesky factorization; returns the lower factor, or `None` if the
    /// matrix is not (numerically) symmetric positive definite.
    pub fn cholesky(&self) -> Option<Mat<T>> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self[(i, j)];
                for k in 0..j {
                    sum = sum - l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if sum <= T::zero() || !sum.is_finite() {
                        return None;
                    }
                    l[(i, i)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Some(l)
    }

    /// Solve `self * x = b` given `self`'s lower Cholesky factor `l`.
    pub fn cholesky_solve(l: &Mat<T>, b: &[T]) -> Vec<T> {
        let n = l.rows;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let t = l[(i, k)] * y[k];
                y[i] = y[i] - t;
            }
            y[i] = y[i] / l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let t = l[(k, i)] * y[k];
                y[i] = y[i] - t;
            }
            y[i] = y[i] / l[(i, i)];
        }
        y
    }

    /// LU factorization with partial pivoting, solving for several right-hand
    /// sides at once. Returns `None` when the matrix is numerically singular.
    pub fn lu_solve_multi(&self, rhs: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut xs: Vec<Vec<T>> = rhs.iter().map(|r| {
            assert_eq!(r.len(), n);
            r.clone()
        }).collect();
        for col in 0..n {
            // partial pivot
            let mut piv = col;
            let mut best = a[(col, col)].abs();
            for r in col + 1..n {
                let v = a[(r, col)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if !(best > T::zero()) || !best.is_finite() {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    let tmp = a[(col, j)];
                    a[(col, j)] = a[(piv, j)];
                    a[(piv, j)] = tmp;
                }
                for x in xs.iter_mut() {
                    x.swap(col, piv);
                }
            }
            let d = a[(col, col)];
            for r in col + 1..n {
                let factor = a[(r, col)] / d;
                if factor == T::zero() {
                    continue;
                }
                for j in col..n {
                    let t = factor * a[(col, j)];
                    a[(r, j)] = a[(r, j)] - t;
                }
                for x in xs.iter_mut() {
                    let t = factor * x[col];
                    x[r] = x[r] - t;
                }
            }
        }
        for x in xs.iter_mut() {
            for i in (0..n).rev() {
                let mut sum = x[i];
                for j in i + 1..n {
                    let t = a[(i, j)] * x[j];
                    sum = sum - t;
                }
                x[i] = sum / a[(i, i)];
            }
        }
        Some(xs)
    }

    pub fn lu_solve(&self, b: &[T]) -> Option<Vec<T>> {
        self.lu_solve_multi(std::slice::from_ref(&b.to_vec()))
            .map(|mut v| v.pop().unwrap())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm_inf<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

pub fn norm2<T: Scalar>(x: &[T]) -> T {
    dot(x, x).sqrt()
}
