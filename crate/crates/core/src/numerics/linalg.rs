//! Row-major GEMM wrapper over `matrixmultiply`.

/// Layout of a row-major operand, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) enum Layout {
    /// `[rows, cols]` stored row-major.
    Normal,
    /// Stored row-major as `[cols, rows]`, read as its transpose.
    Transposed,
}

/// `c = alpha * op(a) * op(b) + beta * c` with `op(a)` of size `m x k` and `op(b)` of size `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = match la {
        Layout::Normal => (k as isize, 1),
        Layout::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match lb {
        Layout::Normal => (n as isize, 1),
        Layout::Transposed => (1, k as isize),
    };
    // SAFETY: the asserts above bound every index the kernel touches for the
    // given strides, and `c` does not alias `a` or `b`.
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

/// `[m, k] x [k, n]` row-major product.
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    gemm(m, k, n, a, Layout::Normal, b, Layout::Normal, &mut c, 0.0);
    c
}
