fn main() {
    // System BLAS/LAPACK: GEMM-heavy paths use ndarray's pure-Rust kernels,
    // while factorizations (SVD, symmetric eig, Cholesky solves) go through
    // LAPACKE backed by OpenBLAS.
    println!("cargo:rustc-link-lib=dylib=lapacke");
    println!("cargo:rustc-link-lib=dylib=openblas");
}
