//! Small dense complex kernels on row-major square matrices stored as flat
//! slices, plus thin wrappers around the Hermitian eigensolver.
//!
//! Bond matrices are tiny (χ ≲ 32) and multiplied millions of times per
//! gradient evaluation, so they live in plain `Vec<C64>` buffers and are
//! multiplied into caller-owned scratch space.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// `out = a * b` for `n x n` row-major matrices.
#[inline]
pub fn matmul(a: &[C64], b: &[C64], out: &mut [C64], n: usize) {
    debug_assert!(a.len() >= n * n && b.len() >= n * n && out.len() >= n * n);
    out[..n * n].fill(ZERO);
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == ZERO {
                continue;
            }
            let brow = &b[k * n..(k + 1) * n];
            for (o, &bkj) in row.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out += alpha * a` elementwise.
#[inline]
pub fn axpy(alpha: C64, a: &[C64], out: &mut [C64]) {
    for (o, &v) in out.iter_mut().zip(a) {
        *o += alpha * v;
    }
}

#[inline]
pub fn trace(a: &[C64], n: usize) -> C64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

/// `tr(a * b) = Σ_ij a_ij b_ji` without forming the product.
#[inline]
pub fn trace_of_product(a: &[C64], b: &[C64], n: usize) -> C64 {
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[i * n + j] * b[j * n + i];
        }
    }
    acc
}

pub fn identity(n: usize) -> Vec<C64> {
    let mut m = vec![ZERO; n * n];
    for i in 0..n {
        m[i * n + i] = ONE;
    }
    m
}

pub fn set_identity(m: &mut [C64], n: usize) {
    m[..n * n].fill(ZERO);
    for i in 0..n {
        m[i * n + i] = ONE;
    }
}

/// Product of a sequence of `n x n` matrices, left to right. Empty input gives
/// the identity.
pub fn chain_product<'a, I>(mats: I, n: usize) -> Vec<C64>
where
    I: IntoIterator<Item = &'a [C64]>,
{
    let mut acc = identity(n);
    let mut scratch = vec![ZERO; n * n];
    for m in mats {
        matmul(&acc, m, &mut scratch, n);
        std::mem::swap(&mut acc, &mut scratch);
    }
    acc
}

/// `c += a^H a` for a row-major `rows x cols` matrix `a`; `c` is `cols x cols`
/// row-major. Backed by a blocked complex GEMM.
pub fn gram_accumulate(a: &[C64], rows: usize, cols: usize, c: &mut [C64]) {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(c.len(), cols * cols);
    if rows == 0 || cols == 0 {
        return;
    }
    let conj: Vec<C64> = a.iter().map(|z| z.conj()).collect();
    // SAFETY: Complex64 is #[repr(C)] { re, im }, layout-identical to [f64; 2];
    // the strides describe in-bounds views of the asserted buffer sizes.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            cols,
            rows,
            cols,
            [1.0, 0.0],
            conj.as_ptr() as *const [f64; 2],
            1,
            cols as isize,
            a.as_ptr() as *const [f64; 2],
            cols as isize,
            1,
            [1.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            cols as isize,
            1,
        );
    }
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

pub fn hermitian_eigen(m: &DMatrix<C64>) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::Numerical("eigendecomposition of a non-square matrix".into()));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical(format!(
            "metric contains non-finite entries (dimension {})",
            m.nrows()
        )));
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Result<Vec<f64>> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("matrix contains non-finite entries".into()));
    }
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}
