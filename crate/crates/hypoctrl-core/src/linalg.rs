//! Dense linear-algebra helpers shared by the compute modules.

use nalgebra::SymmetricEigen;

use crate::{CMatrix, CVector, CoreError, RMatrix, Result, C64};

/// Relative singular-value cutoff used for numerical ranks and kernels.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

pub fn symmetrize(m: &RMatrix) -> RMatrix {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_complex(m: &CMatrix) -> CMatrix {
    (m + m.transpose()) * C64::new(0.5, 0.0)
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_sym_eig(m: &RMatrix) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric PSD square root; negative eigenvalues are clipped to zero.
pub fn sqrt_psd(m: &RMatrix, tol: f64) -> Result<RMatrix> {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max).max(1.0);
    if min < -tol * scale {
        return Err(CoreError::NotPsd(min));
    }
    // eigenvalues at roundoff level would come out of the square root at
    // sqrt(eps) and masquerade as genuine rank, so flush them first
    let sqrt_vals = eig.eigenvalues.map(|l| if l < tol * scale { 0.0 } else { l.sqrt() });
    Ok(&eig.eigenvectors * RMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose())
}

/// Numerical rank and orthonormal kernel basis of a real matrix.
///
/// Singular values below `rel_tol * sigma_max` count as zero. The returned
/// flag is set when some singular value sits within a factor 10 of the
/// threshold on either side, signalling an ambiguous cutoff.
pub struct RankReport {
    pub rank: usize,
    pub nullity: usize,
    pub kernel: RMatrix,
    pub near_threshold: bool,
}

pub fn rank_and_kernel(m: &RMatrix, rel_tol: f64) -> RankReport {
    let ncols = m.ncols();
    let svd = m.clone().svd(false, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let thresh = rel_tol * smax.max(f64::MIN_POSITIVE);
    let mut rank = 0;
    let mut near = false;
    for &s in svd.singular_values.iter() {
        if s >= thresh {
            rank += 1;
        }
        if smax > 0.0 && s > thresh / 10.0 && s < thresh * 10.0 {
            near = true;
        }
    }
    let vt = svd.v_t.expect("svd with v_t requested");
    // rows of vt beyond `rank` span the kernel (plus any columns never reached)
    let nullity = ncols - rank.min(ncols);
    let mut kernel = RMatrix::zeros(ncols, nullity);
    for j in 0..nullity {
        let row = vt.row(rank + j);
        for i in 0..ncols {
            kernel[(i, j)] = row[i];
        }
    }
    RankReport { rank, nullity, kernel, near_threshold: near }
}

/// Solves the continuous Lyapunov equation `B X + X Bᵀ = -Q` by a dense
/// Kronecker solve over the n²-dimensional vector space.
pub fn lyapunov_solve(b: &RMatrix, q: &RMatrix) -> Result<RMatrix> {
    let n = b.nrows();
    if q.nrows() != n || q.ncols() != n || b.ncols() != n {
        return Err(CoreError::Dimension("lyapunov_solve expects square n x n inputs".into()));
    }
    let eye = RMatrix::identity(n, n);
    // column-major vec: vec(BX) = (I (x) B) vec X, vec(X Bᵀ) = (B (x) I) vec X
    let coeff = eye.kronecker(b) + b.kronecker(&eye);
    let rhs = nalgebra::DVector::from_column_slice((-q).as_slice());
    let lu = coeff.lu();
    let sol = lu.solve(&rhs).ok_or_else(|| {
        CoreError::InvalidParameter("singular Lyapunov operator (B and -B share eigenvalues)".into())
    })?;
    let x = RMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(&x))
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jac = RMatrix::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gauss-Hermite nodes and weights for the weight e^{-x²}.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jac = RMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], sqrt_pi * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Spectral (2-)norm of a complex matrix estimated by power iteration on
/// A†A; 30 iterations with relative tolerance 1e-8 suffice at desk scale.
pub fn operator_norm(a: &CMatrix) -> f64 {
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = CVector::from_fn(n, |i, _| {
        // deterministic pseudo-random start vector
        let x = ((i as f64) * 12.9898).sin() * 43758.5453;
        C64::new(x - x.floor() - 0.5, 1e-3)
    });
    let mut norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v /= C64::new(norm, 0.0);
    let mut prev = 0.0f64;
    for _ in 0..30 {
        let w = a * &v;
        let u = a.adjoint() * w;
        norm = u.norm().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let unorm = u.norm();
        v = u / C64::new(unorm, 0.0);
        if (norm - prev).abs() <= 1e-8 * norm {
            break;
        }
        prev = norm;
    }
    norm
}

/// Largest real part over the (complex) spectrum of a real matrix.
///
/// The Schur iteration in nalgebra can stall on exactly structured input
/// (the zero matrix, for one), so triangular matrices are read off the
/// diagonal and the general path runs with a bounded iteration count plus
/// a tiny similarity-safe jitter retry.
pub fn max_re_eigenvalue(m: &RMatrix) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let mut lower = 0.0f64;
    let mut upper = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)].abs();
            if i > j {
                lower = lower.max(v);
            } else if i < j {
                upper = upper.max(v);
            }
        }
    }
    if lower <= 1e-14 * scale || upper <= 1e-14 * scale {
        return (0..n).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    }
    for attempt in 0..5 {
        let mm = if attempt == 0 {
            m.clone()
        } else {
            let eps = scale * 1e-13 * 10f64.powi(attempt);
            m + RMatrix::from_fn(n, n, |i, j| eps * (((i * 31 + j * 17 + attempt as usize) % 7) as f64 - 3.0))
        };
        if let Some(schur) = nalgebra::linalg::Schur::try_new(mm, 1e-14, 100_000) {
            return schur.complex_eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    f64::NAN
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub fn real_part(m: &CMatrix) -> RMatrix {
    m.map(|z| z.re)
}

pub fn imag_part(m: &CMatrix) -> RMatrix {
    m.map(|z| z.im)
}
