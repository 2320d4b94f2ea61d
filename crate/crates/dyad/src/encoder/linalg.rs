//! Small dense-matrix kernel for the encoders. Row-major `f64` storage,
//! just the handful of operations the cells and their gradients need.

use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(lo..=hi)).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| dot(self.row(r), x))
            .collect()
    }

    /// `y += A x`
    pub fn matvec_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            y[r] += dot(self.row(r), x);
        }
    }

    /// `x = Aᵀ y`
    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        self.matvec_transpose_add(y, &mut x);
        x
    }

    /// `x += Aᵀ y`
    pub fn matvec_transpose_add(&self, y: &[f64], x: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for (xc, a) in x.iter_mut().zip(self.row(r)) {
                *xc += a * yr;
            }
        }
    }

    /// `A += s * a bᵀ`
    pub fn add_scaled_outer(&mut self, s: f64, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for r in 0..self.rows {
            let sa = s * a[r];
            if sa == 0.0 {
                continue;
            }
            for (dst, bv) in self.row_mut(r).iter_mut().zip(b) {
                *dst += sa * bv;
            }
        }
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += s * x`
#[inline]
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += s * xv;
    }
}

/// A random orthogonal `d x d` matrix: a standard-normal draw is
/// orthonormalized column by column (modified Gram-Schmidt, run twice for
/// full precision), then each column's sign is fixed so the diagonal is
/// non-negative. The same seed always yields the same matrix.
pub fn orthogonal(d: usize, rng: &mut impl Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for j in 0..d {
        for _pass in 0..2 {
            for i in 0..j {
                let (qi, vj) = borrow_two(&mut cols, i, j);
                let proj = dot(qi, vj);
                axpy(-proj, qi, vj);
            }
        }
        let norm = dot(&cols[j], &cols[j]).sqrt();
        // A singular draw has probability zero; guard against it anyway.
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        for v in &mut cols[j] {
            *v *= scale;
        }
        if scale == 0.0 {
            cols[j][j] = 1.0;
        }
        if cols[j][j] < 0.0 {
            for v in &mut cols[j] {
                *v = -*v;
            }
        }
    }
    let mut m = Matrix::zeros(d, d);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            m.set(i, j, v);
        }
    }
    m
}

fn borrow_two<T>(v: &mut [T], i: usize, j: usize) -> (&T, &mut T) {
    debug_assert!(i < j);
    let (a, b) = v.split_at_mut(j);
    (&a[i], &mut b[0])
}

/// Largest absolute entry of `QᵀQ - I`.
pub fn orthogonality_defect(m: &Matrix) -> f64 {
    let d = m.rows;
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += m.get(k, i) * m.get(k, j);
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
        }
    }
    worst
}
