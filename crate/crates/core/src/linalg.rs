//! Bounds-checked wrappers around the GEMM kernel.

use crate::Real;

/// Whether an operand is read as stored or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

/// `c (m×n) = a' (m×k) · b' (k×n) + beta · c`, where `a'`/`b'` are `a`/`b`
/// optionally transposed. All matrices are dense row-major.
///
/// `a` is stored as m×k when `op_a == N` and as k×m when `op_a == T`; same
/// for `b`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<F: Real>(
    op_a: Op,
    op_b: Op,
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    b: &[F],
    beta: F,
    c: &mut [F],
) {
    assert!(a.len() >= m * k, "gemm: lhs too short");
    assert!(b.len() >= k * n, "gemm: rhs too short");
    assert!(c.len() >= m * n, "gemm: output too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in &mut c[..m * n] {
            *x = if beta == F::zero() { F::zero() } else { *x * beta };
        }
        return;
    }
    let (rsa, csa) = match op_a {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match op_b {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    // SAFETY: lengths checked above cover every (row, col) addressed with the
    // strides chosen for the stored layout; `c` is a distinct &mut borrow.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            F::one(),
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

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn transposes_match_naive_product() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, -1.0, 2.0, 0.5, 1.0]; // 3x2
        let mut c = vec![0.0f64; 4];
        gemm(Op::N, Op::N, 2, 3, 2, &a, &b, 0.0, &mut c);
        assert_eq!(c, vec![1.0 - 2.0 + 1.5, 0.0 + 4.0 + 3.0, 4.0 - 5.0 + 3.0, 10.0 + 6.0]);

        // a^T stored as 3x2, b^T stored as 2x3
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [1.0, -1.0, 0.5, 0.0, 2.0, 1.0];
        let mut c2 = vec![1.0f64; 4];
        gemm(Op::T, Op::T, 2, 3, 2, &at, &bt, 0.0, &mut c2);
        assert_eq!(c, c2);
    }
}
