//! Naive GEMM on raw slices in `(i, k, j)` order, mirroring Darknet's
//! `gemm_nn` argument convention.

#[allow(clippy::too_many_arguments)]
pub fn gemm_nn_raw(m: usize, n: usize, k: usize, alpha: f32, a: &[f32], lda: usize, b: &[f32], ldb: usize, c: &mut [f32], ldc: usize) {
    for i in 0..m {
        for p in 0..k {
            let a_part = alpha * a[i * lda + p];
            for j in 0..n {
                c[i * ldc + j] += a_part * b[p * ldb + j];
            }
        }
    }
}
