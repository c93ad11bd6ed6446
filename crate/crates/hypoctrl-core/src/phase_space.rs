//! Linear-algebraic analysis of complex quadratic symbols on phase space:
//! Hamilton maps, singular spaces, Kalman indices, weighted conjugations
//! and the built-in symbol presets.
//!
//! Phase-space vectors are ordered (x-block, xi-block) throughout; the
//! symplectic form is sigma(X, Y) = <xi, y> - <x, eta>.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{
    self, gauss_legendre, imag_part, lyapunov_solve, max_re_eigenvalue, min_sym_eig,
    rank_and_kernel, real_part, sqrt_psd, symmetrize_complex, to_complex, DEFAULT_RANK_TOL,
};
use crate::{CMatrix, CVector, CoreError, RMatrix, RVector, Result, C64};

const ACCRETIVE_TOL: f64 = 1e-12;

/// Complex quadratic form q(X) = <M X, X> on R^{2n}, M symmetric.
#[derive(Debug, Clone)]
pub struct QuadraticSymbol {
    n: usize,
    m: CMatrix,
}

impl QuadraticSymbol {
    pub fn new(n: usize, m: CMatrix) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::InvalidParameter("dimension must be positive".into()));
        }
        if m.nrows() != 2 * n || m.ncols() != 2 * n {
            return Err(CoreError::Dimension(format!(
                "symbol matrix must be {0}x{0}, got {1}x{2}",
                2 * n,
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { n, m: symmetrize_complex(&m) })
    }

    /// Builds a symbol from a list of monomial terms `coef * u_i * u_j`
    /// over phase-space coordinates indexed 0..2n.
    pub fn from_terms(n: usize, terms: &[(usize, usize, C64)]) -> Result<Self> {
        let d = 2 * n;
        let mut m = CMatrix::zeros(d, d);
        for &(i, j, c) in terms {
            if i >= d || j >= d {
                return Err(CoreError::Dimension(format!(
                    "term index ({i},{j}) out of range for 2n={d}"
                )));
            }
            if i == j {
                m[(i, i)] += c;
            } else {
                let h = c * C64::new(0.5, 0.0);
                m[(i, j)] += h;
                m[(j, i)] += h;
            }
        }
        Self::new(n, m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn re_matrix(&self) -> RMatrix {
        real_part(&self.m)
    }

    pub fn im_matrix(&self) -> RMatrix {
        imag_part(&self.m)
    }

    /// q(X) for a real phase-space point.
    pub fn eval(&self, x: &RVector) -> C64 {
        let xc = CVector::from_iterator(x.len(), x.iter().map(|&v| C64::new(v, 0.0)));
        (xc.transpose() * &self.m * &xc)[(0, 0)]
    }

    /// Polarized form q(X, Y) = <M X, Y>.
    pub fn polarized(&self, x: &CVector, y: &CVector) -> C64 {
        (y.transpose() * &self.m * x)[(0, 0)]
    }

    /// min eigenvalue of Re M; the symbol is accretive when this is >= -tol.
    pub fn accretivity_margin(&self) -> f64 {
        min_sym_eig(&self.re_matrix())
    }

    pub fn is_accretive(&self) -> bool {
        self.accretivity_margin() >= -ACCRETIVE_TOL
    }

    /// Complex conjugate symbol.
    pub fn conjugate(&self) -> Self {
        Self { n: self.n, m: self.m.map(|z| z.conj()) }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(CoreError::Dimension("symbol dimensions differ".into()));
        }
        Self::new(self.n, &self.m + &other.m)
    }

    /// True when Re q is definite on the span of the given (orthonormal)
    /// columns, i.e. q does not vanish on that subspace away from 0.
    pub fn re_definite_on(&self, basis: &RMatrix) -> bool {
        if basis.ncols() == 0 {
            return true;
        }
        let restricted = basis.transpose() * self.re_matrix() * basis;
        min_sym_eig(&restricted) > 1e-10
    }

    pub fn to_json(&self) -> serde_json::Value {
        let ser = SymbolSer {
            n: self.n,
            m_re: matrix_rows(&self.re_matrix()),
            m_im: matrix_rows(&self.im_matrix()),
        };
        serde_json::to_value(ser).expect("symbol serialization")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let ser: SymbolSer = serde_json::from_value(v.clone())?;
        let re = rows_to_matrix(&ser.m_re)?;
        let im = rows_to_matrix(&ser.m_im)?;
        if re.shape() != im.shape() {
            return Err(CoreError::Dimension("M_re and M_im shapes differ".into()));
        }
        let m = CMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]));
        Self::new(ser.n, m)
    }
}

#[derive(Serialize, Deserialize)]
struct SymbolSer {
    n: usize,
    #[serde(rename = "M_re")]
    m_re: Vec<Vec<f64>>,
    #[serde(rename = "M_im")]
    m_im: Vec<Vec<f64>>,
}

fn matrix_rows(m: &RMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<RMatrix> {
    let nr = rows.len();
    if nr == 0 {
        return Err(CoreError::Dimension("empty matrix".into()));
    }
    let nc = rows[0].len();
    if rows.iter().any(|r| r.len() != nc) {
        return Err(CoreError::Dimension("ragged matrix rows".into()));
    }
    Ok(RMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Hamilton map F of a quadratic symbol: sigma(X, F Y) = q(X, Y).
#[derive(Debug, Clone)]
pub struct HamiltonMap {
    n: usize,
    f: CMatrix,
}

impl HamiltonMap {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> &CMatrix {
        &self.f
    }

    pub fn re_f(&self) -> RMatrix {
        real_part(&self.f)
    }

    pub fn im_f(&self) -> RMatrix {
        imag_part(&self.f)
    }
}

/// Symplectic pairing sigma(X, Y) = <xi, y> - <x, eta> for X=(x,xi), Y=(y,eta).
pub fn symplectic_form(x: &CVector, y: &CVector) -> C64 {
    let n = x.len() / 2;
    let mut s = C64::new(0.0, 0.0);
    for j in 0..n {
        s += x[n + j] * y[j] - x[j] * y[n + j];
    }
    s
}

/// Computes the Hamilton map F = J M with J = [[0, I], [-I, 0]].
pub fn hamilton_map(q: &QuadraticSymbol) -> HamiltonMap {
    let n = q.n();
    let d = 2 * n;
    let m = q.matrix();
    let mut f = CMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..n {
            f[(i, j)] = m[(n + i, j)];
            f[(n + i, j)] = -m[(i, j)];
        }
    }
    HamiltonMap { n, f }
}

/// Exact rational value, used for the subelliptic loss 2k0/(2k0+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: u64,
    pub den: u64,
}

impl Rational {
    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Kernel-chain analysis of a Hamilton map.
#[derive(Debug, Clone)]
pub struct SingularSpaceReport {
    /// dim of the intersection of Ker[Re F (Im F)^j] for j <= p, p = 0..2n-1.
    pub chain_dims: Vec<usize>,
    /// Orthonormal basis of the singular space (columns).
    pub s_basis: RMatrix,
    /// Smallest chain depth with trivial intersection, if any.
    pub k0: Option<usize>,
    pub delta_loss: Option<Rational>,
    /// Some singular value fell near the rank threshold; dims may be fragile.
    pub near_threshold: bool,
}

impl SingularSpaceReport {
    pub fn s_dim(&self) -> usize {
        *self.chain_dims.last().unwrap_or(&0)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "chain_dims": self.chain_dims,
            "k0": self.k0,
            "delta_loss": self.delta_loss,
            "S_basis": matrix_rows(&self.s_basis),
            "near_threshold": self.near_threshold,
        })
    }
}

/// Computes the singular space S = cap_j Ker[Re F (Im F)^j] over R^{2n}
/// by stacking the real matrices Re F (Im F)^j and taking SVD kernels.
pub fn singular_space(f: &HamiltonMap, tol: f64) -> SingularSpaceReport {
    let d = 2 * f.n();
    let re_f = f.re_f();
    let im_f = f.im_f();
    let mut chain_dims = Vec::with_capacity(d);
    let mut near = false;
    let mut power = RMatrix::identity(d, d);
    let mut stacked = RMatrix::zeros(0, d);
    let mut s_basis = RMatrix::identity(d, d);
    let mut k0 = None;
    for p in 0..d {
        let block = &re_f * &power;
        let mut grown = RMatrix::zeros(stacked.nrows() + d, d);
        grown.rows_mut(0, stacked.nrows()).copy_from(&stacked);
        grown.rows_mut(stacked.nrows(), d).copy_from(&block);
        stacked = grown;
        let rep = rank_and_kernel(&stacked, tol);
        near |= rep.near_threshold;
        chain_dims.push(rep.nullity);
        if rep.nullity == 0 && k0.is_none() {
            k0 = Some(p);
        }
        if p == d - 1 {
            s_basis = rep.kernel;
        }
        power = &power * &im_f;
    }
    let delta_loss = k0.map(|k| Rational { num: 2 * k as u64, den: 2 * k as u64 + 1 });
    SingularSpaceReport { chain_dims, s_basis, k0, delta_loss, near_threshold: near }
}

/// Real OU data (Q, B) for the generator ½ Tr(Q ∇²) + <Bx, ∇>.
#[derive(Debug, Clone)]
pub struct OUSystem {
    n: usize,
    q: RMatrix,
    b: RMatrix,
    stable_flag: bool,
}

impl OUSystem {
    pub fn new(q: RMatrix, b: RMatrix) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n || b.nrows() != n || b.ncols() != n {
            return Err(CoreError::Dimension("Q and B must be square of equal size".into()));
        }
        if (&q - q.transpose()).abs().max() > 1e-12 * (1.0 + q.abs().max()) {
            return Err(CoreError::InvalidParameter("Q must be symmetric".into()));
        }
        let min_eig = min_sym_eig(&q);
        if min_eig < -ACCRETIVE_TOL * (1.0 + q.abs().max()) {
            return Err(CoreError::NotPsd(min_eig));
        }
        let stable_flag = max_re_eigenvalue(&b) < -ACCRETIVE_TOL;
        Ok(Self { n, q: linalg::symmetrize(&q), b, stable_flag })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &RMatrix {
        &self.q
    }

    pub fn b(&self) -> &RMatrix {
        &self.b
    }

    pub fn stable(&self) -> bool {
        self.stable_flag
    }

    pub fn sqrt_q(&self) -> RMatrix {
        sqrt_psd(&self.q, 1e-10).expect("Q validated PSD at construction")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "Q": matrix_rows(&self.q),
            "B": matrix_rows(&self.b),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Ser {
            #[serde(rename = "Q")]
            q: Vec<Vec<f64>>,
            #[serde(rename = "B")]
            b: Vec<Vec<f64>>,
        }
        let ser: Ser = serde_json::from_value(v.clone())?;
        Self::new(rows_to_matrix(&ser.q)?, rows_to_matrix(&ser.b)?)
    }
}

/// Symbol of the OU generator: q(x, xi) = ½<Q xi, xi> - i<B x, xi>.
pub fn build_ou_symbol(sys: &OUSystem) -> Result<QuadraticSymbol> {
    let n = sys.n();
    let d = 2 * n;
    let mut m = CMatrix::zeros(d, d);
    for i in 0..n {
        for j in 0..n {
            m[(n + i, n + j)] = C64::new(sys.q()[(i, j)] * 0.5, 0.0);
            // cross block: -i<Bx, xi> split symmetrically over (x, xi) pairs
            let c = C64::new(0.0, -0.5 * sys.b()[(j, i)]);
            m[(i, n + j)] = c;
            m[(n + j, i)] = c;
        }
    }
    QuadraticSymbol::new(n, m)
}

/// Kalman rank of [Q^{1/2}, B Q^{1/2}, ..., B^{n-1} Q^{1/2}] and the
/// smallest block count achieving full rank.
pub fn kalman_analysis(sys: &OUSystem) -> (usize, Option<usize>) {
    let n = sys.n();
    let sq = sys.sqrt_q();
    let mut blocks = Vec::with_capacity(n);
    let mut cur = sq;
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = sys.b() * cur;
    }
    let mut rank = 0;
    let mut kalman_k0 = None;
    for p in 0..n {
        let mut stacked = RMatrix::zeros(n, (p + 1) * n);
        for (j, blk) in blocks.iter().take(p + 1).enumerate() {
            stacked.columns_mut(j * n, n).copy_from(blk);
        }
        let rep = rank_and_kernel(&stacked.transpose(), DEFAULT_RANK_TOL);
        rank = rep.rank;
        if rank == n && kalman_k0.is_none() {
            kalman_k0 = Some(p);
        }
    }
    (rank, kalman_k0)
}

/// Coefficient matrix of the flow-averaged real part
/// (1/2T) ∫_{-T}^{T} Re q(e^{2t Im F} X) dt.
///
/// The Hamilton flow of Im q is the matrix exponential of 2t Im F since the
/// Hamilton vector field of a quadratic form acts as twice its Hamilton map.
pub fn averaged_real_part(q: &QuadraticSymbol, t_avg: f64) -> Result<RMatrix> {
    if t_avg <= 0.0 {
        return Err(CoreError::InvalidParameter("averaging window must be positive".into()));
    }
    let f = hamilton_map(q);
    let im_f = f.im_f();
    let re_m = q.re_matrix();
    let avg = |nodes: usize| -> RMatrix {
        let (xs, ws) = gauss_legendre(nodes);
        let d = re_m.nrows();
        let mut acc = RMatrix::zeros(d, d);
        for (x, w) in xs.iter().zip(&ws) {
            let t = x * t_avg;
            let phi = (&im_f * (2.0 * t)).exp();
            acc += phi.transpose() * &re_m * phi * (w * 0.5);
        }
        acc
    };
    let coarse = avg(64);
    let fine = avg(128);
    let diff = (&fine - &coarse).abs().max();
    if diff > 1e-8 * (1.0 + fine.abs().max()) {
        return Err(CoreError::QuadratureNonConvergence(format!(
            "flow average changed by {diff:e} when doubling nodes"
        )));
    }
    Ok(linalg::symmetrize(&fine))
}

/// Gaussian invariant-measure data: covariance and normalizing constant.
#[derive(Debug, Clone)]
pub struct RhoParams {
    pub q_inf: RMatrix,
    pub normalization: f64,
}

#[derive(Debug, Clone)]
pub struct WeightedConjugation {
    pub l_symbol: QuadraticSymbol,
    pub lfrak_symbol: QuadraticSymbol,
    pub q_inf: RMatrix,
    pub rho: RhoParams,
}

/// Symbols of the operators obtained by conjugating the OU generator with
/// the square root of its invariant Gaussian density:
/// L = ½|Q^{1/2}xi|² + ⅛|Q^{1/2}Q_inf^{-1}x|² - i<(½ Q Q_inf^{-1} + B)x, xi>,
/// and its complex conjugate.
pub fn weighted_conjugation_symbols(sys: &OUSystem) -> Result<WeightedConjugation> {
    if !sys.stable() {
        return Err(CoreError::UnstableDrift);
    }
    let (rank, _) = kalman_analysis(sys);
    if rank < sys.n() {
        return Err(CoreError::HypoellipticityFails { rank, n: sys.n() });
    }
    let q_inf = lyapunov_solve(sys.b(), sys.q())?;
    let q_inf_inv = q_inf
        .clone()
        .try_inverse()
        .ok_or_else(|| CoreError::IllConditioned(f64::INFINITY))?;
    let n = sys.n();
    let d = 2 * n;
    let xx = &q_inf_inv * sys.q() * &q_inf_inv * 0.125;
    let drift = sys.q() * &q_inf_inv * 0.5 + sys.b();
    let mut m = CMatrix::zeros(d, d);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = C64::new(xx[(i, j)], 0.0);
            m[(n + i, n + j)] = C64::new(sys.q()[(i, j)] * 0.5, 0.0);
            let c = C64::new(0.0, -0.5 * drift[(j, i)]);
            m[(i, n + j)] = c;
            m[(n + j, i)] = c;
        }
    }
    let l_symbol = QuadraticSymbol::new(n, m)?;
    let lfrak_symbol = l_symbol.conjugate();
    let det = q_inf.determinant();
    let normalization = (2.0 * std::f64::consts::PI).powf(-(n as f64) / 2.0) / det.sqrt();
    let rho = RhoParams { q_inf: q_inf.clone(), normalization };
    Ok(WeightedConjugation { l_symbol, lfrak_symbol, q_inf, rho })
}

/// Two-particle oscillator-chain symbol on R^6 with its accretivity flag.
#[derive(Debug, Clone)]
pub struct ChainSymbol {
    pub symbol: QuadraticSymbol,
    pub accretive: bool,
    /// Zero exactly when the generic-position condition fails.
    pub coupling_discriminant: f64,
}

/// Builds the 12-variable chain symbol over (x1,x2,y1,y2,z1,z2) and duals.
pub fn chain_preset(
    a: f64,
    b: f64,
    c: f64,
    alpha: f64,
    alpha1: f64,
    alpha2: f64,
) -> Result<ChainSymbol> {
    if alpha <= 0.0 || alpha1 <= 0.0 || alpha2 <= 0.0 {
        return Err(CoreError::InvalidParameter("alpha parameters must be positive".into()));
    }
    let beta1 = (alpha1 / alpha) * (2.0 / alpha1 - 1.0 / alpha);
    let beta2 = (alpha2 / alpha) * (2.0 / alpha2 - 1.0 / alpha);
    let delta1 = alpha1 / alpha - 1.0;
    let delta2 = alpha2 / alpha - 1.0;
    // coordinate indices: x1 x2 y1 y2 z1 z2 | xi1 xi2 eta1 eta2 zeta1 zeta2
    let (x1, x2, y1, y2, z1, z2) = (0usize, 1, 2, 3, 4, 5);
    let (xi1, xi2, eta1, eta2, zeta1, zeta2) = (6usize, 7, 8, 9, 10, 11);
    let re = |v: f64| C64::new(v, 0.0);
    let im = |v: f64| C64::new(0.0, v);
    let terms = vec![
        (zeta1, zeta1, re(alpha1)),
        (zeta2, zeta2, re(alpha2)),
        (z1, z1, re(beta1)),
        (x1, x1, re(beta1)),
        (z1, x1, re(-2.0 * beta1)),
        (z2, z2, re(beta2)),
        (x2, x2, re(beta2)),
        (z2, x2, re(-2.0 * beta2)),
        (zeta1, z1, im(2.0 * delta1)),
        (zeta1, x1, im(-2.0 * delta1)),
        (zeta2, z2, im(2.0 * delta2)),
        (zeta2, x2, im(-2.0 * delta2)),
        (y1, xi1, im(1.0)),
        (y2, xi2, im(1.0)),
        (eta1, x1, im(-(a + c))),
        (eta1, x2, im(c)),
        (eta1, z1, im(1.0)),
        (eta2, x1, im(c)),
        (eta2, x2, im(-(b + c))),
        (eta2, z2, im(1.0)),
    ];
    let symbol = QuadraticSymbol::from_terms(6, &terms)?;
    let accretive = symbol.is_accretive();
    let coupling_discriminant = (a + c - 1.0) * (b + c - 1.0) - c * c;
    Ok(ChainSymbol { symbol, accretive, coupling_discriminant })
}

// ---- presets ----

/// Heat system: Q = 2 I_n, B = 0.
pub fn heat_system(n: usize) -> OUSystem {
    OUSystem::new(RMatrix::identity(n, n) * 2.0, RMatrix::zeros(n, n)).unwrap()
}

/// Kolmogorov system in d=1: Q = diag(0, 2), B = [[0, -1], [0, 0]].
pub fn kolmogorov_system() -> OUSystem {
    let q = RMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]);
    let b = RMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0]);
    OUSystem::new(q, b).unwrap()
}

/// Kramers-Fokker-Planck symbol q = eta² + v²/4 + i(v xi - a x eta)
/// in the variables (x, v, xi, eta).
pub fn kfp_symbol(a: f64) -> QuadraticSymbol {
    let re = |v: f64| C64::new(v, 0.0);
    let im = |v: f64| C64::new(0.0, v);
    QuadraticSymbol::from_terms(
        2,
        &[(3, 3, re(1.0)), (1, 1, re(0.25)), (1, 2, im(1.0)), (0, 3, im(-a))],
    )
    .unwrap()
}

/// Harmonic oscillator symbol |x|² + |xi|².
pub fn harmonic_symbol(n: usize) -> QuadraticSymbol {
    QuadraticSymbol::new(n, to_complex(&RMatrix::identity(2 * n, 2 * n))).unwrap()
}

/// Model symbol with a prescribed chain depth k0 >= 0.
pub fn catalogue_k0_symbol(k0: usize) -> QuadraticSymbol {
    let re = |v: f64| C64::new(v, 0.0);
    let im = |v: f64| C64::new(0.0, v);
    match k0 {
        0 => harmonic_symbol(1),
        1 => {
            // xi2² + x2² + i(x2 xi1 - x1 xi2) in n = 2
            QuadraticSymbol::from_terms(
                2,
                &[(3, 3, re(1.0)), (1, 1, re(1.0)), (1, 2, im(1.0)), (0, 3, im(-1.0))],
            )
            .unwrap()
        }
        k => {
            let p = k / 2;
            let n = p + 1;
            let mut terms: Vec<(usize, usize, C64)> = Vec::new();
            if k % 2 == 0 {
                terms.push((n, n, re(1.0))); // xi1²
                terms.push((0, 0, re(1.0))); // x1²
            } else {
                terms.push((0, 0, re(1.0))); // x1²
            }
            for j in 0..p {
                terms.push((n + j, n + j, im(1.0))); // i xi_j²
                terms.push((j + 1, n + j, im(2.0))); // 2i x_{j+1} xi_j
            }
            terms.push((n + p, n + p, im(1.0))); // i xi_{p+1}²
            QuadraticSymbol::from_terms(n, &terms).unwrap()
        }
    }
}

/// Draws a random stable OU system with full Kalman rank and a degenerate
/// diffusion (rank Q < n when n > 1), rejection-sampled.
pub fn random_stable_hypoelliptic<R: Rng>(n: usize, rng: &mut R) -> OUSystem {
    loop {
        let r = 1.max(n.saturating_sub(1));
        let g = RMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
        let q = &g * g.transpose();
        let mut b = RMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let shift = max_re_eigenvalue(&b);
        b -= RMatrix::identity(n, n) * (shift + 0.3);
        let sys = match OUSystem::new(q, b) {
            Ok(s) => s,
            Err(_) => continue,
        };
        if !sys.stable() {
            continue;
        }
        let (rank, k0) = kalman_analysis(&sys);
        if rank == n && k0.is_some() {
            return sys;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_real_vec<R: Rng>(d: usize, rng: &mut R) -> RVector {
        RVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn hamilton_map_defining_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sym in [kfp_symbol(1.3), harmonic_symbol(2), catalogue_k0_symbol(3)] {
            let f = hamilton_map(&sym);
            let d = 2 * sym.n();
            for _ in 0..100 {
                let x = rand_real_vec(d, &mut rng).map(|v| C64::new(v, 0.0));
                let y = rand_real_vec(d, &mut rng).map(|v| C64::new(v, 0.0));
                let lhs = sym.polarized(&y, &x);
                let rhs = symplectic_form(&x, &(f.f() * &y));
                assert!((lhs - rhs).norm() < 1e-12 * (1.0 + lhs.norm()));
            }
        }
    }

    #[test]
    fn hamilton_map_simple_cases() {
        // q = x² + xi² in n = 1
        let f = hamilton_map(&harmonic_symbol(1));
        let expect = CMatrix::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
            C64::new(0.0, 0.0),
        ]);
        assert!((f.f() - expect).norm() < 1e-14);

        // q = xi² in n = 1
        let q = QuadraticSymbol::from_terms(1, &[(1, 1, C64::new(1.0, 0.0))]).unwrap();
        let f = hamilton_map(&q);
        assert_relative_eq!(f.f()[(0, 1)].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(f.f()[(1, 0)].re, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn kfp_hamilton_map_regression() {
        let f = hamilton_map(&kfp_symbol(1.0));
        let z = C64::new(0.0, 0.0);
        let expect = CMatrix::from_row_slice(4, 4, &[
            z, C64::new(0.0, 0.5), z, z,
            C64::new(0.0, -0.5), z, z, C64::new(1.0, 0.0),
            z, z, z, C64::new(0.0, 0.5),
            z, C64::new(-0.25, 0.0), C64::new(0.0, -0.5), z,
        ]);
        assert!((f.f() - expect).map(|z| z.norm()).max() < 1e-12);
    }

    #[test]
    fn kfp_singular_space_trivial() {
        let rep = singular_space(&hamilton_map(&kfp_symbol(1.0)), DEFAULT_RANK_TOL);
        assert_eq!(rep.chain_dims[0], 2);
        assert_eq!(rep.chain_dims[1], 0);
        assert_eq!(rep.k0, Some(1));
        assert_eq!(rep.s_dim(), 0);
        assert_eq!(rep.delta_loss, Some(Rational { num: 2, den: 3 }));
    }

    #[test]
    fn harmonic_singular_space() {
        let rep = singular_space(&hamilton_map(&harmonic_symbol(1)), DEFAULT_RANK_TOL);
        assert_eq!(rep.k0, Some(0));
        assert_eq!(rep.s_dim(), 0);
        assert_eq!(rep.delta_loss, Some(Rational { num: 0, den: 1 }));
    }

    #[test]
    fn kolmogorov_singular_space_is_position_block() {
        let sym = build_ou_symbol(&kolmogorov_system()).unwrap();
        let rep = singular_space(&hamilton_map(&sym), DEFAULT_RANK_TOL);
        assert_eq!(rep.k0, None);
        assert_eq!(rep.s_dim(), 2);
        // basis spans {(x, 0)}: xi components vanish
        for j in 0..2 {
            assert!(rep.s_basis[(2, j)].abs() < 1e-10);
            assert!(rep.s_basis[(3, j)].abs() < 1e-10);
        }
    }

    #[test]
    fn catalogue_chain_depths() {
        for k0 in 0..=5 {
            let rep =
                singular_space(&hamilton_map(&catalogue_k0_symbol(k0)), DEFAULT_RANK_TOL);
            assert_eq!(rep.k0, Some(k0), "catalogue entry {k0}");
        }
    }

    #[test]
    fn ou_symbol_examples() {
        // heat n = 1: q = xi²
        let sym = build_ou_symbol(&heat_system(1)).unwrap();
        let mut expect = CMatrix::zeros(2, 2);
        expect[(1, 1)] = C64::new(1.0, 0.0);
        assert!((sym.matrix() - expect).norm() < 1e-14);

        // Kolmogorov: q = xi2² + i x2 xi1
        let sym = build_ou_symbol(&kolmogorov_system()).unwrap();
        let x = RVector::from_row_slice(&[0.3, 0.7, 0.2, -0.4]);
        let expect = C64::new(0.16, 0.0) + C64::new(0.0, 0.7 * 0.2);
        assert!((sym.eval(&x) - expect).norm() < 1e-14);
        assert!(sym.is_accretive());
    }

    #[test]
    fn kalman_examples() {
        assert_eq!(kalman_analysis(&heat_system(3)), (3, Some(0)));
        assert_eq!(kalman_analysis(&kolmogorov_system()), (2, Some(1)));
        let degenerate = OUSystem::new(
            RMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            RMatrix::zeros(2, 2),
        )
        .unwrap();
        assert_eq!(kalman_analysis(&degenerate), (1, None));
    }

    #[test]
    fn averaged_real_part_cases() {
        // Im q = 0: average is Re M for any window
        let sym = harmonic_symbol(2);
        let avg = averaged_real_part(&sym, 0.7).unwrap();
        assert!((avg - sym.re_matrix()).abs().max() < 1e-12);

        // KFP: positive definite average
        let avg = averaged_real_part(&kfp_symbol(1.0), 1.0).unwrap();
        assert!(min_sym_eig(&avg) > 1e-4);

        // Kolmogorov OU symbol: kernel of the average matches S
        let sym = build_ou_symbol(&kolmogorov_system()).unwrap();
        let avg = averaged_real_part(&sym, 1.0).unwrap();
        let rep = rank_and_kernel(&avg, DEFAULT_RANK_TOL);
        assert_eq!(rep.nullity, 2);
        for j in 0..2 {
            assert!(rep.kernel[(2, j)].abs() < 1e-8);
            assert!(rep.kernel[(3, j)].abs() < 1e-8);
        }
    }

    #[test]
    fn averaged_positivity_iff_trivial_singular_space() {
        let presets: Vec<(QuadraticSymbol, bool)> = vec![
            (harmonic_symbol(1), true),
            (kfp_symbol(1.0), true),
            (catalogue_k0_symbol(1), true),
            (catalogue_k0_symbol(2), true),
            (build_ou_symbol(&kolmogorov_system()).unwrap(), false),
        ];
        for (sym, trivial) in presets {
            let rep = singular_space(&hamilton_map(&sym), DEFAULT_RANK_TOL);
            assert_eq!(rep.s_dim() == 0, trivial);
            let avg = averaged_real_part(&sym, 1.0).unwrap();
            assert_eq!(min_sym_eig(&avg) > 1e-8, trivial);
        }
    }

    #[test]
    fn weighted_conjugation_scalar_example() {
        // Q = 2, B = -1: Q_inf = 1, cross coefficient vanishes
        let sys = OUSystem::new(
            RMatrix::from_row_slice(1, 1, &[2.0]),
            RMatrix::from_row_slice(1, 1, &[-1.0]),
        )
        .unwrap();
        let wc = weighted_conjugation_symbols(&sys).unwrap();
        assert_relative_eq!(wc.q_inf[(0, 0)], 1.0, epsilon = 1e-12);
        let m = wc.l_symbol.matrix();
        assert_relative_eq!(m[(1, 1)].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m[(0, 0)].re, 0.25, epsilon = 1e-12);
        assert!(m[(0, 1)].norm() < 1e-12);
        assert_relative_eq!(
            wc.rho.normalization,
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn conjugated_symbol_k0_matches_kalman() {
        // damped Kolmogorov: the raw transport drift is not Hurwitz and has
        // no invariant measure, so subtract the identity before conjugating;
        // the damping leaves the Kalman structure untouched
        let raw = kolmogorov_system();
        let sys = OUSystem::new(raw.q().clone(), raw.b() - RMatrix::identity(2, 2)).unwrap();
        let wc = weighted_conjugation_symbols(&sys).unwrap();
        assert!((wc.lfrak_symbol.matrix() - wc.l_symbol.conjugate().matrix()).norm() < 1e-14);
        let rep = singular_space(&hamilton_map(&wc.l_symbol), DEFAULT_RANK_TOL);
        let (_, k0) = kalman_analysis(&sys);
        assert_eq!(rep.k0, k0);
        assert_eq!(rep.k0, Some(1));
    }

    #[test]
    fn weighted_conjugation_rejects_bad_systems() {
        let unstable = OUSystem::new(
            RMatrix::identity(1, 1) * 2.0,
            RMatrix::from_row_slice(1, 1, &[0.5]),
        )
        .unwrap();
        assert!(matches!(
            weighted_conjugation_symbols(&unstable),
            Err(CoreError::UnstableDrift)
        ));
        let degenerate = OUSystem::new(
            RMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            RMatrix::identity(2, 2) * -1.0,
        )
        .unwrap();
        assert!(matches!(
            weighted_conjugation_symbols(&degenerate),
            Err(CoreError::HypoellipticityFails { rank: 1, n: 2 })
        ));
    }

    #[test]
    fn chain_preset_generic_dims() {
        let chain = chain_preset(2.0, 2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(chain.accretive);
        assert_relative_eq!(chain.coupling_discriminant, 3.0, epsilon = 1e-14);
        let rep = singular_space(&hamilton_map(&chain.symbol), DEFAULT_RANK_TOL);
        assert_eq!(rep.chain_dims[0], 8);
        assert_eq!(rep.chain_dims[1], 4);
        assert_eq!(rep.chain_dims[2], 0);
        assert_eq!(rep.s_dim(), 0);
    }

    #[test]
    fn chain_preset_degenerate_coupling() {
        // a = b = 1 makes (a+c-1)(b+c-1) = c² for every c
        let chain = chain_preset(1.0, 1.0, 0.7, 1.0, 1.0, 1.0).unwrap();
        assert!(chain.coupling_discriminant.abs() < 1e-14);
        let rep = singular_space(&hamilton_map(&chain.symbol), DEFAULT_RANK_TOL);
        assert!(rep.s_dim() > 0);
    }

    #[test]
    fn chain_accretivity_threshold() {
        let flip = 0.5; // = max(alpha1, alpha2) / 2
        let above = chain_preset(2.0, 2.0, 1.0, flip * (1.0 + 1e-6), 1.0, 1.0).unwrap();
        let below = chain_preset(2.0, 2.0, 1.0, flip * (1.0 - 1e-6), 1.0, 1.0).unwrap();
        assert!(above.accretive);
        assert!(!below.accretive);
    }

    #[test]
    fn kalman_k0_equals_conjugated_hamilton_k0() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let n = 1 + (trial % 4);
            let sys = random_stable_hypoelliptic(n, &mut rng);
            let (_, kalman_k0) = kalman_analysis(&sys);
            let wc = weighted_conjugation_symbols(&sys).unwrap();
            let rep = singular_space(&hamilton_map(&wc.l_symbol), DEFAULT_RANK_TOL);
            assert_eq!(rep.k0, kalman_k0, "system {trial} (n = {n})");
        }
    }

    #[test]
    fn singular_space_orthogonal_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sym = build_ou_symbol(&kolmogorov_system()).unwrap();
        let base = singular_space(&hamilton_map(&sym), DEFAULT_RANK_TOL);
        // random rotation applied simultaneously to x and xi blocks
        let g = RMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let qr = g.qr();
        let o = qr.q();
        let mut u = RMatrix::zeros(4, 4);
        u.view_mut((0, 0), (2, 2)).copy_from(&o);
        u.view_mut((2, 2), (2, 2)).copy_from(&o);
        let uc = to_complex(&u);
        let rotated =
            QuadraticSymbol::new(2, uc.transpose() * sym.matrix() * &uc).unwrap();
        let rep = singular_space(&hamilton_map(&rotated), DEFAULT_RANK_TOL);
        assert_eq!(rep.chain_dims, base.chain_dims);
    }

    #[test]
    fn json_round_trip() {
        let sym = kfp_symbol(0.8);
        let back = QuadraticSymbol::from_json(&sym.to_json()).unwrap();
        assert!((sym.matrix() - back.matrix()).norm() < 1e-15);
        let sys = kolmogorov_system();
        let back = OUSystem::from_json(&sys.to_json()).unwrap();
        assert!((sys.q() - back.q()).norm() < 1e-15);
        assert!((sys.b() - back.b()).norm() < 1e-15);
    }
}
