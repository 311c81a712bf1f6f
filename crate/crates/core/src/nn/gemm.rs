//! Safe strided wrapper over `matrixmultiply::dgemm`.

/// Strided matrix view descriptor: element (i, j) lives at `off + i*rs + j*cs`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl Layout {
    /// Contiguous row-major `rows x cols`.
    pub fn rows(cols: usize) -> Self {
        Layout { off: 0, rs: cols, cs: 1 }
    }

    /// Transposed view of a contiguous row-major matrix with `cols` columns.
    pub fn trans(cols: usize) -> Self {
        Layout { off: 0, rs: 1, cs: cols }
    }

    fn last(self, rows: usize, cols: usize) -> usize {
        self.off + (rows - 1) * self.rs + (cols - 1) * self.cs
    }
}

/// `C = alpha * A(m x k) * B(k x n) + beta * C` over strided views.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    beta: f64,
    c: &mut [f64],
    lc: Layout,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[lc.off + i * lc.rs + j * lc.cs] *= beta;
            }
        }
        return;
    }
    assert!(la.last(m, k) < a.len(), "gemm: A view out of bounds");
    assert!(lb.last(k, n) < b.len(), "gemm: B view out of bounds");
    assert!(lc.last(m, n) < c.len(), "gemm: C view out of bounds");
    // SAFETY: the asserts above bound every element each view touches, and
    // `c` is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(la.off),
            la.rs as isize,
            la.cs as isize,
            b.as_ptr().add(lb.off),
            lb.rs as isize,
            lb.cs as isize,
            beta,
            c.as_mut_ptr().add(lc.off),
            lc.rs as isize,
            lc.cs as isize,
        );
    }
}
