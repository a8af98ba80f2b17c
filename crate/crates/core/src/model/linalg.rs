//! Dense row-major kernels over plain slices.
//!
//! Matrix products go through `matrixmultiply`, which is single-threaded and
//! deterministic; everything else is a straightforward loop.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Element type of parameters and activations: `f32` for storage and
/// training, `f64` for gradient verification.
pub trait Scalar: Float + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static {
    /// # Safety
    /// Pointers and strides must address valid memory for the given shapes,
    /// and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("finite cast")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("cast to f64")
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Read-only strided matrix view.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, F> {
    pub data: &'a [F],
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, F> View<'a, F> {
    /// Dense row-major `rows × cols`.
    pub fn new(data: &'a [F], rows: usize, cols: usize) -> Self {
        Self { data, off: 0, rows, cols, rs: cols, cs: 1 }
    }

    /// Columns `[c0, c0 + width)` of a dense row-major matrix with `cols` columns.
    pub fn cols_of(data: &'a [F], rows: usize, cols: usize, c0: usize, width: usize) -> Self {
        Self { data, off: c0, rows, cols: width, rs: cols, cs: 1 }
    }

    pub fn t(self) -> Self {
        Self { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = self.off + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "view out of bounds");
        }
    }
}

pub(crate) struct ViewMut<'a, F> {
    pub data: &'a mut [F],
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, F> ViewMut<'a, F> {
    pub fn new(data: &'a mut [F], rows: usize, cols: usize) -> Self {
        Self { data, off: 0, rows, cols, rs: cols, cs: 1 }
    }

    pub fn cols_of(data: &'a mut [F], rows: usize, cols: usize, c0: usize, width: usize) -> Self {
        Self { data, off: c0, rows, cols: width, rs: cols, cs: 1 }
    }
}

/// `c = alpha · a · b + beta · c`. With `beta == 0` the old contents of `c`
/// are ignored.
pub(crate) fn gemm<F: Scalar>(alpha: F, a: View<F>, b: View<F>, beta: F, c: ViewMut<F>) {
    assert_eq!(a.cols, b.rows, "inner dimensions");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "output shape");
    a.check();
    b.check();
    if c.rows > 0 && c.cols > 0 {
        let last = c.off + (c.rows - 1) * c.rs + (c.cols - 1) * c.cs;
        assert!(last < c.data.len(), "output view out of bounds");
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let x = &mut c.data[c.off + i * c.rs + j * c.cs];
                *x = if beta == F::zero() { F::zero() } else { *x * beta };
            }
        }
        return;
    }
    // SAFETY: all three views were bounds-checked above and `c` is a unique
    // borrow, so it cannot alias `a` or `b`.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.off),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.off),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.off),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// `a (m×k) · b (k×n)` as a fresh buffer.
pub(crate) fn matmul<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * n];
    gemm(F::one(), View::new(a, m, k), View::new(b, k, n), F::zero(), ViewMut::new(&mut c, m, n));
    c
}

/// `c += aᵀ · b` with `a: k×m`, `b: k×n`, `c: m×n`.
pub(crate) fn add_at_b<F: Scalar>(c: &mut [F], a: &[F], b: &[F], k: usize, m: usize, n: usize) {
    gemm(F::one(), View::new(a, k, m).t(), View::new(b, k, n), F::one(), ViewMut::new(c, m, n));
}

/// `a (m×k) · bᵀ` with `b: n×k`.
pub(crate) fn matmul_bt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * n];
    gemm(F::one(), View::new(a, m, k), View::new(b, n, k).t(), F::zero(), ViewMut::new(&mut c, m, n));
    c
}

/// `c += a (m×k) · bᵀ` with `b: n×k`.
pub(crate) fn add_a_bt<F: Scalar>(c: &mut [F], a: &[F], b: &[F], m: usize, k: usize, n: usize) {
    gemm(F::one(), View::new(a, m, k), View::new(b, n, k).t(), F::one(), ViewMut::new(c, m, n));
}

pub(crate) fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

/// Column sums of a `rows × cols` matrix added into `dst`.
pub(crate) fn add_col_sums<F: Scalar>(dst: &mut [F], m: &[F], cols: usize) {
    for row in m.chunks_exact(cols) {
        add_into(dst, row);
    }
}

/// Add `bias` to every row.
pub(crate) fn add_row_bias<F: Scalar>(m: &mut [F], bias: &[F]) {
    for row in m.chunks_exact_mut(bias.len()) {
        add_into(row, bias);
    }
}

/// Row-wise log-softmax accumulated in f64.
pub fn log_softmax_row<F: Scalar>(row: &[F]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.as_f64()));
    let lse = max + row.iter().map(|&x| (x.as_f64() - max).exp()).sum::<f64>().ln();
    row.iter().map(|&x| x.as_f64() - lse).collect()
}
