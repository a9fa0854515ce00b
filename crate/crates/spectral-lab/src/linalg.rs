//! Thin safe layer over system LAPACKE (OpenBLAS backend).
//!
//! Matrix products stay on ndarray's native kernels; this module only covers
//! the factorizations: thin SVD (`dgesdd`), symmetric eigendecomposition
//! (`dsyevd`) and SPD solves (`dposv`). All wrappers take row-major,
//! standard-layout `f64` arrays.

use ndarray::{Array1, Array2};
use std::os::raw::{c_char, c_int};

use crate::error::{Error, Result};

const LAPACK_ROW_MAJOR: c_int = 101;

extern "C" {
    fn LAPACKE_dgesdd(
        matrix_layout: c_int,
        jobz: c_char,
        m: c_int,
        n: c_int,
        a: *mut f64,
        lda: c_int,
        s: *mut f64,
        u: *mut f64,
        ldu: c_int,
        vt: *mut f64,
        ldvt: c_int,
    ) -> c_int;

    fn dgesdd_(
        jobz: *const c_char,
        m: *const c_int,
        n: *const c_int,
        a: *mut f64,
        lda: *const c_int,
        s: *mut f64,
        u: *mut f64,
        ldu: *const c_int,
        vt: *mut f64,
        ldvt: *const c_int,
        work: *mut f64,
        lwork: *const c_int,
        iwork: *mut c_int,
        info: *mut c_int,
    );

    fn LAPACKE_dsyevd(
        matrix_layout: c_int,
        jobz: c_char,
        uplo: c_char,
        n: c_int,
        a: *mut f64,
        lda: c_int,
        w: *mut f64,
    ) -> c_int;

    fn LAPACKE_dposv(
        matrix_layout: c_int,
        uplo: c_char,
        n: c_int,
        nrhs: c_int,
        a: *mut f64,
        lda: c_int,
        b: *mut f64,
        ldb: c_int,
    ) -> c_int;

    fn openblas_get_num_threads() -> c_int;
    fn openblas_set_num_threads(n: c_int);
}

/// Number of threads the BLAS/LAPACK backend currently uses.
pub fn blas_threads() -> usize {
    unsafe { openblas_get_num_threads() as usize }
}

pub fn set_blas_threads(n: usize) {
    unsafe { openblas_set_num_threads(n.max(1) as c_int) }
}

fn as_standard(a: &Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a.to_owned()
    } else {
        Array2::from_shape_vec(a.dim(), a.iter().copied().collect()).expect("shape")
    }
}

/// Thin SVD `a = u * diag(s) * vt` with `u: m x b`, `s: b`, `vt: b x n`,
/// `b = min(m, n)`. Singular values come back nonincreasing.
pub fn svd_thin(a: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (m, n) = a.dim();
    let b = m.min(n);
    let mut work = as_standard(a);
    let mut s = Array1::<f64>::zeros(b);
    let mut u = Array2::<f64>::zeros((m, b));
    let mut vt = Array2::<f64>::zeros((b, n));
    let info = unsafe {
        LAPACKE_dgesdd(
            LAPACK_ROW_MAJOR,
            b'S' as c_char,
            m as c_int,
            n as c_int,
            work.as_mut_ptr(),
            n as c_int,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            b as c_int,
            vt.as_mut_ptr(),
            n as c_int,
        )
    };
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dgesdd",
            info,
        });
    }
    Ok((u, s, vt))
}

/// Singular values only (nonincreasing). Uses the Fortran interface on the
/// transpose view: a row-major `m x n` buffer is a column-major `n x m`
/// matrix, and transposition leaves singular values unchanged.
pub fn singular_values(a: &Array2<f64>) -> Result<Array1<f64>> {
    let (m, n) = a.dim();
    let b = m.min(n);
    let mut work = as_standard(a);
    let mut s = Array1::<f64>::zeros(b);
    let jobz = b'N' as c_char;
    let fm = n as c_int;
    let fn_ = m as c_int;
    let lda = n.max(1) as c_int;
    let one: c_int = 1;
    let mut u = [0.0f64];
    let mut vt = [0.0f64];
    let mut iwork = vec![0 as c_int; 8 * b.max(1)];
    let mut info: c_int = 0;
    // workspace query, then the real call
    let mut lwork: c_int = -1;
    let mut wk_query = [0.0f64];
    unsafe {
        dgesdd_(
            &jobz,
            &fm,
            &fn_,
            work.as_mut_ptr(),
            &lda,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &one,
            vt.as_mut_ptr(),
            &one,
            wk_query.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dgesdd",
            info,
        });
    }
    lwork = wk_query[0] as c_int;
    let mut wk = vec![0.0f64; lwork.max(1) as usize];
    unsafe {
        dgesdd_(
            &jobz,
            &fm,
            &fn_,
            work.as_mut_ptr(),
            &lda,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &one,
            vt.as_mut_ptr(),
            &one,
            wk.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dgesdd",
            info,
        });
    }
    Ok(s)
}

/// Full eigendecomposition of a symmetric matrix. Returns eigenvalues in
/// ascending order and eigenvectors as columns of the second array.
pub fn eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (m, n) = a.dim();
    if m != n {
        return Err(Error::ShapeMismatch(format!(
            "eigh needs a square matrix, got {m}x{n}"
        )));
    }
    let mut work = as_standard(a);
    let mut w = Array1::<f64>::zeros(n);
    let info = unsafe {
        LAPACKE_dsyevd(
            LAPACK_ROW_MAJOR,
            b'V' as c_char,
            b'L' as c_char,
            n as c_int,
            work.as_mut_ptr(),
            n as c_int,
            w.as_mut_ptr(),
        )
    };
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dsyevd",
            info,
        });
    }
    Ok((w, work))
}

/// Solve `a x = rhs` for symmetric positive definite `a` via Cholesky.
pub fn solve_spd(a: &Array2<f64>, rhs: &Array1<f64>) -> Result<Array1<f64>> {
    let (m, n) = a.dim();
    if m != n || rhs.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "solve_spd: a is {m}x{n}, rhs has length {}",
            rhs.len()
        )));
    }
    let mut work = as_standard(a);
    let mut b = rhs.to_owned();
    let info = unsafe {
        LAPACKE_dposv(
            LAPACK_ROW_MAJOR,
            b'L' as c_char,
            n as c_int,
            1,
            work.as_mut_ptr(),
            n as c_int,
            b.as_mut_ptr(),
            1,
        )
    };
    if info > 0 {
        return Err(Error::SingularSystem(format!(
            "leading minor {info} not positive definite"
        )));
    }
    if info < 0 {
        return Err(Error::Lapack {
            routine: "dposv",
            info,
        });
    }
    Ok(b)
}

/// Largest singular value. Power iteration on the Gram operator, with a
/// `dgesdd` fallback when the iteration has not settled (tiny or absent
/// spectral gap).
pub fn spectral_norm(a: &Array2<f64>) -> Result<f64> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Ok(0.0);
    }
    // Deterministic start vector with components on every direction.
    let mut v = Array1::from_shape_fn(n, |i| {
        let z = crate::rng::mix_seed(0x5f3c_79a1, i as u64);
        (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        return Err(Error::NonFinite("power iteration start vector".into()));
    }
    v /= norm;
    let mut sigma = 0.0f64;
    for _ in 0..200 {
        let u = a.dot(&v);
        let mut w = a.t().dot(&u);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return Ok(0.0);
        }
        w /= wn;
        let s_new = wn.sqrt();
        let settled = (s_new - sigma).abs() <= 1e-12 * s_new.max(1.0);
        sigma = s_new;
        v = w;
        if settled {
            return Ok(sigma);
        }
    }
    let s = singular_values(a)?;
    Ok(s[0])
}
