use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest dimension `lu_factor` accepts by default; dense factorization
/// beyond this is almost certainly a mistake at desk scale.
pub const DEFAULT_DIM_CAP: usize = 20_000;

pub fn vdot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot product length mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn vnorm(a: &[f64]) -> f64 {
    vdot(a, a).sqrt()
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec length mismatch");
        (0..self.rows).map(|i| vdot(self.row(i), x)).collect()
    }

    pub fn matvec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec length mismatch");
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (yj, &aij) in y.iter_mut().zip(self.row(i)) {
                    *yj += xi * aij;
                }
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.at(j, i))
    }

    /// Adds `c * u vᵀ` in place.
    pub fn add_rank_one(&mut self, c: f64, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for (i, &ui) in u.iter().enumerate() {
            let f = c * ui;
            for (a, &vj) in self.row_mut(i).iter_mut().zip(v) {
                *a += f * vj;
            }
        }
    }

    /// Averages the matrix with its transpose, squashing roundoff asymmetry.
    pub fn symmetrized(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self.at(i, j) + self.at(j, i)))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Packed LU factors of a square matrix with the partial-pivot row swaps
/// recorded in order. Immutable once built; every solve reuses the factors.
#[derive(Clone, Debug)]
pub struct LuFactorization {
    n: usize,
    lu: Vec<f64>,
    swaps: Vec<usize>,
}

pub fn lu_factor(a: DenseMatrix) -> Result<LuFactorization> {
    lu_factor_with_cap(a, DEFAULT_DIM_CAP)
}

pub fn lu_factor_with_cap(a: DenseMatrix, cap: usize) -> Result<LuFactorization> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.rows(), got: a.cols() });
    }
    let n = a.rows();
    if n > cap {
        return Err(Error::MatrixTooLarge { dim: n, cap });
    }
    let mut lu = a.data;
    let mut swaps = vec![0usize; n];
    for k in 0..n {
        let mut p = k;
        let mut best = lu[k * n + k].abs();
        for i in k + 1..n {
            let v = lu[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if lu[p * n + k] == 0.0 {
            return Err(Error::SingularMatrix { pivot: k });
        }
        swaps[k] = p;
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
        }
        let inv_pivot = 1.0 / lu[k * n + k];
        let (top, bottom) = lu.split_at_mut((k + 1) * n);
        let pivot_row = &top[k * n + k + 1..k * n + n];
        for chunk in bottom[..(n - k - 1) * n].chunks_exact_mut(n) {
            let f = chunk[k] * inv_pivot;
            chunk[k] = f;
            if f != 0.0 {
                for (c, &r) in chunk[k + 1..n].iter_mut().zip(pivot_row) {
                    *c -= f * r;
                }
            }
        }
    }
    Ok(LuFactorization { n, lu, swaps })
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` from the stored factors.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "solve length mismatch");
        let n = self.n;
        let mut x = b.to_vec();
        for (k, &p) in self.swaps.iter().enumerate() {
            x.swap(k, p);
        }
        for i in 1..n {
            let row = &self.lu[i * n..i * n + i];
            x[i] -= vdot(row, &x[..i]);
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s = vdot(row, &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Solves `Aᵀ x = b` from the same factors.
    pub fn solve_transposed(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "solve length mismatch");
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[j * n + i] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[j * n + i] * x[j];
            }
            x[i] = s;
        }
        for (k, &p) in self.swaps.iter().enumerate().rev() {
            x.swap(k, p);
        }
        x
    }
}

/// Extreme eigenvalues `(λ_min, λ_max)` of the symmetric pencil `A x = λ B x`
/// with `B` positive definite, by inverse iteration on `A` and power
/// iteration on `B⁻¹A`.
///
/// With `deflate = Some(d)` every iterate is kept B-orthogonal to `d`, which
/// restricts the pencil to the complement of a known neutral direction; the
/// caller must make `A` itself nonsingular (for instance by adding a rank-one
/// term along `B d`, which leaves the complement untouched).
pub fn smallest_generalized_eig(
    a: &DenseMatrix,
    b: &DenseMatrix,
    deflate: Option<&[f64]>,
) -> Result<(f64, f64)> {
    assert!(a.is_square() && b.is_square(), "pencil matrices must be square");
    assert_eq!(a.rows(), b.rows(), "pencil dimension mismatch");
    let n = a.rows();
    let lu_a = lu_factor(a.clone())?;
    let lu_b = lu_factor(b.clone())?;
    let guard = deflate.map(|d| {
        assert_eq!(d.len(), n, "deflation vector length mismatch");
        let bd = b.matvec(d);
        let dbd = vdot(d, &bd);
        (d.to_vec(), bd, dbd)
    });
    let project = |v: &mut [f64]| {
        if let Some((d, bd, dbd)) = &guard {
            let c = vdot(bd, v) / dbd;
            for (vi, di) in v.iter_mut().zip(d) {
                *vi -= c * di;
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x00d1_5c01);
    let mut run = |towards_min: bool| -> Result<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        project(&mut v);
        let nb = vdot(&v, &b.matvec(&v)).sqrt();
        for vi in &mut v {
            *vi /= nb;
        }
        let mut rho = f64::NAN;
        let mut calm = 0;
        let cap = 5000;
        for it in 0..cap {
            let mut w = if towards_min {
                lu_a.solve(&b.matvec(&v))
            } else {
                lu_b.solve(&a.matvec(&v))
            };
            project(&mut w);
            let nb = vdot(&w, &b.matvec(&w)).sqrt();
            if !nb.is_finite() || nb == 0.0 {
                return Err(Error::EigNonConvergence { iterations: it, residual: nb });
            }
            for wi in &mut w {
                *wi /= nb;
            }
            let next = vdot(&w, &a.matvec(&w));
            v = w;
            let drift = (next - rho).abs();
            if drift <= 1e-13 * next.abs().max(f64::MIN_POSITIVE) {
                calm += 1;
                if calm >= 3 {
                    return Ok(next);
                }
            } else {
                calm = 0;
            }
            rho = next;
        }
        let residual = {
            let av = a.matvec(&v);
            let bv = b.matvec(&v);
            let r: Vec<f64> =
                av.iter().zip(&bv).map(|(x, y)| x - rho * y).collect();
            vnorm(&r) / vnorm(&av).max(f64::MIN_POSITIVE)
        };
        Err(Error::EigNonConvergence { iterations: cap, residual })
    };
    let lo = run(true)?;
    let hi = run(false)?;
    Ok((lo, hi))
}

/// Rank of a matrix by Gaussian elimination with full pivoting; a pivot
/// counts while its magnitude exceeds `tol` times the largest initial entry.
pub fn numeric_rank(a: &DenseMatrix, tol: f64) -> usize {
    let mut m = a.clone();
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0;
    }
    let steps = m.rows().min(m.cols());
    let mut rank = 0;
    for k in 0..steps {
        let mut best = (k, k, 0.0f64);
        for i in k..m.rows() {
            for j in k..m.cols() {
                let v = m.at(i, j).abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        let (pi, pj, pv) = best;
        if pv <= tol * scale {
            break;
        }
        rank += 1;
        if pi != k {
            for j in 0..m.cols() {
                let (x, y) = (m.at(k, j), m.at(pi, j));
                m.set(k, j, y);
                m.set(pi, j, x);
            }
        }
        if pj != k {
            for i in 0..m.rows() {
                let (x, y) = (m.at(i, k), m.at(i, pj));
                m.set(i, k, y);
                m.set(i, pj, x);
            }
        }
        let inv_pivot = 1.0 / m.at(k, k);
        for i in k + 1..m.rows() {
            let f = m.at(i, k) * inv_pivot;
            if f != 0.0 {
                for j in k..m.cols() {
                    let v = m.at(i, j) - f * m.at(k, j);
                    m.set(i, j, v);
                }
            }
        }
    }
    rank
}
