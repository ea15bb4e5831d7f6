//! Small dense complex linear-algebra helpers shared by the modules.
//!
//! Arrays are `ndarray` throughout; the few decompositions we need (SVD for
//! ranks and pseudo-inverses) go through `nalgebra`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};
use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Signed element index for storage position `pos` of an `n`-element array,
/// `pos = 0` mapping to `-n/2 + 1`.
#[inline]
pub fn signed_index(pos: usize, n: usize) -> i64 {
    pos as i64 - (n as i64) / 2 + 1
}

/// Inverse of [`signed_index`]; `None` when outside `{-n/2+1, ..., n/2}`.
#[inline]
pub fn storage_index(idx: i64, n: usize) -> Option<usize> {
    let pos = idx + (n as i64) / 2 - 1;
    (0..n as i64).contains(&pos).then_some(pos as usize)
}

/// `exp(-j 2 pi cycles)` with the integer part of `cycles` removed before the
/// trig call, so large path-length-to-wavelength ratios keep full phase accuracy.
#[inline]
pub fn cis_cycles_neg(cycles: f64) -> C64 {
    let frac = cycles - cycles.round();
    C64::from_polar(1.0, -std::f64::consts::TAU * frac)
}

/// Column-major vectorization: stacks the columns of `m`.
pub fn vec_col_major(m: &ArrayView2<C64>) -> Array1<C64> {
    m.t().iter().copied().collect()
}

/// Inverse of [`vec_col_major`] for a `rows x cols` matrix.
pub fn unvec_col_major(v: &ArrayView1<C64>, rows: usize, cols: usize) -> Array2<C64> {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    Array2::from_shape_vec((rows, cols).f(), v.to_vec()).expect("shape checked")
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ArrayView2<C64>, b: &ArrayView2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &av) in a.indexed_iter() {
        out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
            .assign(&b.mapv(|bv| av * bv));
    }
    out
}

/// Kronecker product of two vectors, `a ⊗ b`.
pub fn kron_vec(a: &ArrayView1<C64>, b: &ArrayView1<C64>) -> Array1<C64> {
    let mut out = Array1::zeros(a.len() * b.len());
    for (i, &av) in a.iter().enumerate() {
        for (j, &bv) in b.iter().enumerate() {
            out[i * b.len() + j] = av * bv;
        }
    }
    out
}

/// Conjugate transpose.
pub fn herm(m: &ArrayView2<C64>) -> Array2<C64> {
    m.t().mapv(|x| x.conj())
}

/// Hermitian inner product `<a, b> = a^H b`.
pub fn inner(a: &ArrayView1<C64>, b: &ArrayView1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: impl IntoIterator<Item = C64>) -> f64 {
    v.into_iter().map(|x| x.norm_sqr()).sum()
}

pub fn frob_norm(m: &ArrayView2<C64>) -> f64 {
    norm_sqr(m.iter().copied()).sqrt()
}

pub fn to_nalgebra(m: &ArrayView2<C64>) -> DMatrix<C64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &ArrayView2<C64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = to_nalgebra(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Outcome of a least-squares solve.
#[derive(Debug, Clone)]
pub struct LsSolution {
    pub coeffs: Array1<C64>,
    /// Set when the system was rank deficient and a ridge term was added.
    pub regularized: bool,
}

/// Relative singular-value cutoff below which a column set counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Minimum-norm least squares `argmin ||a x - y||` via the SVD of `a`.
///
/// When `a` is numerically rank deficient the normal equations are solved with
/// ridge `mu = 1e-10 * tr(a^H a) / cols` instead, and the result is flagged.
pub fn least_squares(a: &ArrayView2<C64>, y: &ArrayView1<C64>) -> LsSolution {
    let (rows, cols) = a.dim();
    assert_eq!(rows, y.len(), "least squares row mismatch");
    if cols == 0 {
        return LsSolution { coeffs: Array1::zeros(0), regularized: false };
    }
    let am = to_nalgebra(a);
    let ym = nalgebra::DVector::from_iterator(rows, y.iter().copied());
    let svd = am.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax > 0.0 && smin > RANK_TOL * smax && cols <= rows {
        let x = svd
            .solve(&ym, 0.0)
            .expect("U and V were requested from the SVD");
        return LsSolution { coeffs: x.iter().copied().collect(), regularized: false };
    }
    let gram = am.adjoint() * &am;
    let trace: f64 = (0..cols).map(|i| gram[(i, i)].re).sum();
    let mu = 1e-10 * (trace / cols as f64).max(f64::MIN_POSITIVE);
    let mut reg = gram;
    for i in 0..cols {
        reg[(i, i)] += C64::new(mu, 0.0);
    }
    let rhs = am.adjoint() * ym;
    let x = reg
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| reg.lu().solve(&rhs).unwrap_or_else(|| nalgebra::DVector::zeros(cols)));
    LsSolution { coeffs: x.iter().copied().collect(), regularized: true }
}
