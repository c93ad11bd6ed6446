//! Observability-cost constant machinery: the two-scale constants gamma and
//! M, the admissible step horizon, the assembled cost evaluator and a
//! telescoping-series audit on synthetic diagonal semigroup models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::{CoreError, Result};

/// Hypothesis constants: spectral inequality ‖π_k g‖ <= e^{c1 k^a}‖π_k g‖_ω
/// and high-mode dissipation ‖(1-π_k)e^{tA}g‖ <= (1/c2) e^{-c2 t^m k^b}‖g‖
/// valid for 0 < t < t0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LRParams {
    pub c1: f64,
    pub c2: f64,
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub t0: f64,
}

impl LRParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c1 > 0.0
            && self.c2 > 0.0
            && self.a > 0.0
            && self.b > self.a
            && self.m > 0.0
            && self.t0 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidParameter(
                "constants must be positive with a < b".into(),
            ))
        }
    }

    /// The cost exponent am/(b-a).
    pub fn exponent(&self) -> f64 {
        self.a * self.m / (self.b - self.a)
    }
}

/// Scale constants in both linear and log form; the log values stay finite
/// for parameter ranges where the linear ones overflow.
#[derive(Debug, Clone, Copy)]
pub struct GammaM {
    pub gamma: f64,
    pub m_const: f64,
    pub log_gamma: f64,
    pub log_m: f64,
}

/// gamma(q) = (3 c1 2^{a+m} / (c2 q^{am/(b-a)}))^{1/(b-a)} and
/// M(q) = 3 c1 (2 gamma)^a, with the defining identity
/// c2 gamma^b 2^{-m} = 3 c1 (2 gamma)^a q^{-am/(b-a)} asserted.
pub fn gamma_and_m(p: &LRParams, q: f64) -> Result<GammaM> {
    p.validate()?;
    if !(0.0 < q && q < 1.0) {
        return Err(CoreError::InvalidParameter("q must lie in (0, 1)".into()));
    }
    let ex = p.exponent();
    let ln2 = std::f64::consts::LN_2;
    let log_gamma =
        (3f64.ln() + p.c1.ln() + (p.a + p.m) * ln2 - p.c2.ln() - ex * q.ln()) / (p.b - p.a);
    let log_m = 3f64.ln() + p.c1.ln() + p.a * (ln2 + log_gamma);

    let lhs = p.c2.ln() + p.b * log_gamma - p.m * ln2;
    let rhs = 3f64.ln() + p.c1.ln() + p.a * (ln2 + log_gamma) - ex * q.ln();
    if (lhs - rhs).abs() > 1e-10 * lhs.abs().max(1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "scale identity violated: {lhs} vs {rhs}"
        )));
    }
    Ok(GammaM { gamma: log_gamma.exp(), m_const: log_m.exp(), log_gamma, log_m })
}

/// Smallest admissible spectral level for step length tau:
/// k = floor(gamma tau^{-m/(b-a)}) + 1, guaranteed <= 2 gamma tau^{-m/(b-a)}.
pub fn mode_index(p: &LRParams, gm: &GammaM, tau: f64) -> Result<usize> {
    let ratio = (gm.log_gamma - p.m / (p.b - p.a) * tau.ln()).exp();
    if !(ratio > 1.0) {
        return Err(CoreError::InvalidParameter(
            "step length too large for an admissible level".into(),
        ));
    }
    // saturate: tiny tau drives the level out of usize range
    let k = (ratio.floor().min(1e18) as usize).saturating_add(1);
    debug_assert!((k as f64) <= 2.0 * ratio.max(1e18));
    Ok(k)
}

/// Margins of the three admissibility conditions at step length tau; the
/// conditions hold iff every margin is nonnegative. All in log scale.
fn condition_margins(p: &LRParams, gm: &GammaM, tau: f64) -> [f64; 3] {
    let ex = p.exponent();
    let lt = tau.ln();
    // gamma / tau^{m/(b-a)} > 1
    let m1 = gm.log_gamma - p.m / (p.b - p.a) * lt;
    // tau/4 >= exp(-c1 (2 gamma)^a / tau^{am/(b-a)})
    let u = p.c1.ln() + p.a * (std::f64::consts::LN_2 + gm.log_gamma) - ex * lt;
    let m2 = lt - (4f64).ln() + u.exp();
    // tau/c2^2 <= exp(c2 gamma^b 2^{-m} / tau^{am/(b-a)})
    let v = p.c2.ln() + p.b * gm.log_gamma - p.m * std::f64::consts::LN_2 - ex * lt;
    let m3 = v.exp() - (lt - 2.0 * p.c2.ln());
    [m1, m2, m3]
}

/// Largest step horizon tau0' <= t0 below which all three admissibility
/// conditions hold, found by per-condition bisection. Each condition is
/// checked for single-crossing behavior on a log-spaced sample first.
pub fn tau0_prime(p: &LRParams, gm: &GammaM) -> Result<f64> {
    p.validate()?;
    let samples = 400usize;
    let lo_ln = (p.t0 * 1e-12).ln();
    let hi_ln = p.t0.ln();
    let mut best = p.t0;
    for cond in 0..3usize {
        let holds = |tau: f64| condition_margins(p, gm, tau)[cond] >= 0.0;
        if !holds(p.t0 * 1e-12) {
            return Err(CoreError::NoAdmissibleTau { condition: cond });
        }
        // the conditions need not be monotone in tau; the requirement is
        // that they hold on all of (0, tau], so the first failure when
        // scanning upward caps the admissible range
        let mut transition: Option<(f64, f64)> = None;
        let mut prev = p.t0 * 1e-12;
        for s in 1..=samples {
            let tau = (lo_ln + (hi_ln - lo_ln) * s as f64 / samples as f64).exp();
            if !holds(tau) {
                transition = Some((prev, tau));
                break;
            }
            prev = tau;
        }
        let threshold = match transition {
            None => p.t0, // holds on the whole sampled range
            Some((mut lo, mut hi)) => {
                for _ in 0..100 {
                    let mid = (lo * hi).sqrt();
                    if holds(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
        };
        best = best.min(threshold);
    }
    if best <= 0.0 {
        return Err(CoreError::NoAdmissibleTau { condition: 0 });
    }
    Ok(best)
}

/// Fully assembled observability-cost constants, log-scaled internally.
#[derive(Debug, Clone)]
pub struct CostReport {
    pub params: LRParams,
    pub q: f64,
    pub exponent: f64,
    pub gamma: GammaM,
    pub tau0_prime: f64,
    pub t_tilde0: f64,
    pub log_c1: f64,
    pub log_c2: f64,
    pub log_c: f64,
}

impl CostReport {
    pub fn c1_const(&self) -> f64 {
        self.log_c1.exp()
    }

    pub fn c2_const(&self) -> f64 {
        self.log_c2.exp()
    }

    pub fn c_const(&self) -> f64 {
        self.log_c.exp()
    }

    /// log of cost(T) = C exp(C / T^exponent).
    pub fn log_cost(&self, t_horizon: f64) -> f64 {
        self.log_c + (self.log_c - self.exponent * t_horizon.ln()).exp()
    }

    pub fn cost(&self, t_horizon: f64) -> f64 {
        self.log_cost(t_horizon).exp()
    }

    /// The step weight f_q(s) = exp(-M / s^exponent).
    pub fn f_q(&self, s: f64) -> f64 {
        (-(self.gamma.log_m - self.exponent * s.ln()).exp()).exp()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "C": self.c_const(),
            "C1": self.c1_const(),
            "C2": self.c2_const(),
            "M": self.gamma.m_const,
            "T_tilde0": self.t_tilde0,
            "exponent": self.exponent,
            "gamma": self.gamma.gamma,
            "log_C": self.log_c,
            "log_C1": self.log_c1,
            "log_C2": self.log_c2,
            "params": {
                "a": self.params.a,
                "b": self.params.b,
                "c1": self.params.c1,
                "c2": self.params.c2,
                "m": self.params.m,
                "t0": self.params.t0,
            },
            "q": self.q,
            "tau0_prime": self.tau0_prime,
        })
    }
}

/// Builds the cost report at q = 1/2: C1 = M 2^exponent, T̃0 = 2 tau0',
/// C2 = exp(2^exponent C1 / T̃0^exponent), C = max(C1, C2). The constants
/// form an upper-bound construction, not an optimized one.
pub fn observability_cost(p: &LRParams) -> Result<CostReport> {
    let q = 0.5;
    let gm = gamma_and_m(p, q)?;
    let tau0 = tau0_prime(p, &gm)?;
    let ex = p.exponent();
    let t_tilde0 = 2.0 * tau0;
    let log_c1 = gm.log_m + ex * std::f64::consts::LN_2;
    // C2 = exp(2^ex C1 / T̃0^ex), so log C2 is itself an exponential
    let log_c2 = (ex * std::f64::consts::LN_2 + log_c1 - ex * t_tilde0.ln()).exp();
    let log_c = log_c1.max(log_c2);
    Ok(CostReport {
        params: *p,
        q,
        exponent: ex,
        gamma: gm,
        tau0_prime: tau0,
        t_tilde0,
        log_c1,
        log_c2,
        log_c,
    })
}

/// Diagonal contraction semigroup on D modes built to satisfy the two
/// hypotheses with the given constants: mode j sits at level j+1, decays at
/// rate c2 t0^{m-1} level^b (so e^{-rate t} <= (1/c2) e^{-c2 t^m k^b} for
/// levels above k and t <= t0, provided c2 <= 1), and is observed through
/// the diagonal weight e^{-c1 level^a}.
#[derive(Debug, Clone)]
pub struct DiagonalSemigroupModel {
    pub levels: Vec<usize>,
    pub rates: Vec<f64>,
    pub obs: Vec<f64>,
}

impl DiagonalSemigroupModel {
    pub fn from_params(p: &LRParams, d: usize) -> Result<Self> {
        p.validate()?;
        if p.c2 > 1.0 {
            return Err(CoreError::InvalidParameter(
                "diagonal model construction needs c2 <= 1".into(),
            ));
        }
        let levels: Vec<usize> = (1..=d).collect();
        let rates = levels
            .iter()
            .map(|&l| p.c2 * p.t0.powf(p.m - 1.0) * (l as f64).powf(p.b))
            .collect();
        let obs = levels.iter().map(|&l| (-p.c1 * (l as f64).powf(p.a)).exp()).collect();
        Ok(Self { levels, rates, obs })
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    /// ‖e^{tA} g‖².
    pub fn evolved_norm2(&self, g: &[f64], t: f64) -> f64 {
        g.iter()
            .zip(&self.rates)
            .map(|(gi, r)| gi * gi * (-2.0 * r * t).exp())
            .sum()
    }

    /// ‖(1 - π_k) e^{tA} g‖².
    pub fn tail_norm2(&self, g: &[f64], t: f64, k: usize) -> f64 {
        g.iter()
            .zip(&self.rates)
            .zip(&self.levels)
            .filter(|(_, &l)| l > k)
            .map(|((gi, r), _)| gi * gi * (-2.0 * r * t).exp())
            .sum()
    }

    /// Exact observation energy ∫_{t0}^{t1} ‖Obs e^{tA} g‖² dt.
    pub fn observed_energy(&self, g: &[f64], t_lo: f64, t_hi: f64) -> f64 {
        g.iter()
            .zip(&self.rates)
            .zip(&self.obs)
            .map(|((gi, r), o)| {
                let w = gi * gi * o * o;
                if *r == 0.0 {
                    w * (t_hi - t_lo)
                } else {
                    w * ((-2.0 * r * t_lo).exp() - (-2.0 * r * t_hi).exp()) / (2.0 * r)
                }
            })
            .sum()
    }

    /// Samples both hypotheses with the claimed constants; returns the first
    /// (k, t) pair where either fails, or None when all sampled pairs hold.
    pub fn check_hypotheses(&self, p: &LRParams) -> Option<(usize, f64)> {
        let kmax = self.dim().saturating_sub(1);
        for k in 1..=kmax {
            // spectral inequality on unit modes of level <= k
            for (j, &l) in self.levels.iter().enumerate() {
                if l <= k && self.obs[j] < (-p.c1 * (k as f64).powf(p.a)).exp() - 1e-12 {
                    return Some((k, 0.0));
                }
            }
            // dissipation at sampled times
            for s in 1..=20 {
                let t = p.t0 * s as f64 / 20.0;
                let bound = (-(p.c2) * t.powf(p.m) * (k as f64).powf(p.b)).exp() / p.c2;
                for (j, &l) in self.levels.iter().enumerate() {
                    if l > k && (-self.rates[j] * t).exp() > bound + 1e-12 {
                        return Some((k, t));
                    }
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct TelescopeStep {
    pub k: usize,
    pub t_k: f64,
    pub tau_k: f64,
    pub mode_k: usize,
    /// Worst signed residual of the one-step inequality over the test
    /// vectors; nonpositive means the step held.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct TelescopingTrace {
    pub steps: Vec<TelescopeStep>,
    pub passed: bool,
    pub first_failure: Option<usize>,
    /// Worst signed residual of the final observability bound.
    pub final_residual: f64,
}

impl TelescopingTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,T_k,tau_k,mode_k,residual\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{:e},{:e},{},{:e}\n",
                s.k, s.t_k, s.tau_k, s.mode_k, s.residual
            ));
        }
        out
    }
}

/// Runs the telescoping audit: checks the claimed hypotheses on the model,
/// then for random data the one-step inequalities
/// f(tau_k)‖e^{T_k A}g‖² - f(tau_{k+1})‖e^{T_{k+1}A}g‖² <= observed energy
/// on (T_{k+1}, T_k), and finally the assembled bound
/// ‖e^{TA}g‖² <= cost(T) ∫_0^T ‖Obs e^{tA}g‖² dt.
pub fn telescoping_trace(
    p: &LRParams,
    t_horizon: f64,
    model: &DiagonalSemigroupModel,
    n_vectors: usize,
    seed: u64,
) -> Result<TelescopingTrace> {
    if t_horizon <= 0.0 {
        return Err(CoreError::InvalidParameter("horizon must be positive".into()));
    }
    let report = observability_cost(p)?;
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<Vec<f64>> = (0..n_vectors)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let hypothesis_failure = model.check_hypotheses(p);

    let mut steps = Vec::new();
    let mut first_failure = None;
    let mut t_k = t_horizon;
    for k in 0..60usize {
        let tau_k = t_horizon / 2f64.powi(k as i32 + 1);
        let t_next = t_k - tau_k;
        let mode_k = mode_index(p, &report.gamma, tau_k).unwrap_or(1);
        let mut worst = f64::NEG_INFINITY;
        for g in &vectors {
            let lhs = report.f_q(tau_k) * model.evolved_norm2(g, t_k)
                - report.f_q(0.5 * tau_k) * model.evolved_norm2(g, t_next);
            let rhs = model.observed_energy(g, t_next, t_k);
            let scale = model.evolved_norm2(g, 0.0).max(1e-300);
            worst = worst.max((lhs - rhs) / scale);
        }
        if worst > 1e-12 && first_failure.is_none() {
            first_failure = Some(k);
        }
        steps.push(TelescopeStep { k, t_k, tau_k, mode_k, residual: worst });
        t_k = t_next;
        if t_k < t_horizon * 1e-12 {
            break;
        }
    }

    let mut final_residual = f64::NEG_INFINITY;
    let cost = report.cost(t_horizon);
    for g in &vectors {
        let lhs = model.evolved_norm2(g, t_horizon);
        let rhs = cost * model.observed_energy(g, 0.0, t_horizon);
        let scale = model.evolved_norm2(g, 0.0).max(1e-300);
        final_residual = final_residual.max((lhs - rhs) / scale);
    }
    if first_failure.is_none() {
        if let Some((k, _)) = hypothesis_failure {
            // the claimed hypotheses themselves fail at level k
            first_failure = Some(k);
        }
    }
    let passed = first_failure.is_none() && final_residual <= 1e-12;
    Ok(TelescopingTrace { steps, passed, first_failure, final_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn unit_params() -> LRParams {
        LRParams { c1: 1.0, c2: 1.0, a: 0.5, b: 1.0, m: 1.0, t0: 1.0 }
    }

    #[test]
    fn worked_constants() {
        let gm = gamma_and_m(&unit_params(), 0.5).unwrap();
        assert_relative_eq!(gm.gamma, 288.0, max_relative = 1e-12);
        assert_relative_eq!(gm.m_const, 72.0, max_relative = 1e-12);
        assert_relative_eq!((576f64).sqrt(), 24.0, max_relative = 1e-15);
    }

    #[test]
    fn scale_identity_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a = rng.gen_range(0.1..1.5);
            let p = LRParams {
                c1: rng.gen_range(0.1..5.0),
                c2: rng.gen_range(0.05..1.0),
                a,
                b: a + rng.gen_range(0.1..2.0),
                m: rng.gen_range(1.0..5.0),
                t0: 1.0,
            };
            let q: f64 = rng.gen_range(0.05..0.95);
            let gm = gamma_and_m(&p, q).unwrap();
            let lhs = p.c2.ln() + p.b * gm.log_gamma - p.m * std::f64::consts::LN_2;
            let rhs = 3f64.ln()
                + p.c1.ln()
                + p.a * (std::f64::consts::LN_2 + gm.log_gamma)
                - p.exponent() * q.ln();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn gamma_decreasing_in_q() {
        let p = unit_params();
        let mut last = f64::INFINITY;
        for i in 1..20 {
            let q = i as f64 / 20.0;
            let g = gamma_and_m(&p, q).unwrap().gamma;
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn exponent_identity_for_both_instantiations() {
        for k0 in 0..=7usize {
            let m = (2 * k0 + 1) as f64;
            let quad = LRParams { c1: 1.0, c2: 1.0, a: 0.5, b: 1.0, m, t0: 1.0 };
            let ou = LRParams { c1: 1.0, c2: 1.0, a: 1.0, b: 2.0, m, t0: 1.0 };
            assert_eq!(quad.exponent(), m);
            assert_eq!(ou.exponent(), m);
        }
    }

    #[test]
    fn tau0_matches_grid_scan() {
        let p = unit_params();
        let gm = gamma_and_m(&p, 0.5).unwrap();
        let tau0 = tau0_prime(&p, &gm).unwrap();
        // brute-force upward scan with step 1e-6: first failing tau caps tau0
        let mut scan = p.t0;
        let n = 1_000_000usize;
        for i in 1..n {
            let tau = i as f64 * p.t0 / n as f64;
            if condition_margins(&p, &gm, tau).iter().any(|&m| m < 0.0) {
                scan = tau;
                break;
            }
        }
        assert!((tau0 - scan).abs() <= 2e-6 * p.t0, "bisection {tau0} vs scan {scan}");
    }

    #[test]
    fn boundary_behavior() {
        let p = LRParams { c1: 0.01, c2: 1.0, a: 0.5, b: 1.0, m: 1.0, t0: 5.0 };
        let gm = gamma_and_m(&p, 0.5).unwrap();
        let tau0 = tau0_prime(&p, &gm).unwrap();
        let inside = condition_margins(&p, &gm, tau0 * (1.0 - 1e-6));
        assert!(inside.iter().all(|&m| m >= 0.0));
        if tau0 < p.t0 * (1.0 - 1e-9) {
            let outside = condition_margins(&p, &gm, tau0 * (1.0 + 1e-6));
            assert!(outside.iter().any(|&m| m < 0.0));
        }
    }

    #[test]
    fn mode_interval_nonempty() {
        let p = unit_params();
        let gm = gamma_and_m(&p, 0.5).unwrap();
        let tau0 = tau0_prime(&p, &gm).unwrap();
        let tau = tau0 / 2.0;
        let k = mode_index(&p, &gm, tau).unwrap();
        let ratio = gm.gamma * tau.powf(-p.m / (p.b - p.a));
        assert!(ratio < k as f64 && (k as f64) <= 2.0 * ratio);
    }

    #[test]
    fn cost_report_assembly() {
        let report = observability_cost(&unit_params()).unwrap();
        assert_eq!(report.exponent, 1.0);
        assert_relative_eq!(report.c1_const(), 144.0, max_relative = 1e-12);
        assert!(report.c_const() >= report.c1_const());
        assert!(report.c_const() >= report.c2_const());
        // cost decreasing in T with limit C
        let mut last = f64::INFINITY;
        for &t in &[0.5, 1.0, 2.0, 8.0, 64.0] {
            let c = report.log_cost(t);
            assert!(c <= last);
            last = c;
        }
        // limit C: pick a horizon with C / T^exponent = e^{-20}
        let t_large = ((report.log_c + 20.0) / report.exponent).exp();
        assert!((report.log_cost(t_large) - report.log_c).abs() < 1e-6);
    }

    #[test]
    fn f_q_shape() {
        let report = observability_cost(&unit_params()).unwrap();
        let mut last = 0.0;
        for i in 1..50 {
            let s = i as f64 / 10.0;
            let f = report.f_q(s);
            assert!(f >= last && f <= 1.0);
            last = f;
        }
    }

    #[test]
    fn partition_identities() {
        let t = 0.8;
        let mut sum = 0.0;
        let mut t_k = t;
        for k in 0..200 {
            let tau_k = t / 2f64.powi(k + 1);
            sum += tau_k;
            t_k -= tau_k;
        }
        assert_relative_eq!(sum, t, max_relative = 1e-12);
        assert!(t_k.abs() < 1e-12);
    }

    fn model_params() -> LRParams {
        LRParams { c1: 0.5, c2: 0.5, a: 0.5, b: 1.0, m: 1.0, t0: 1.0 }
    }

    #[test]
    fn telescoping_passes_on_exact_model() {
        let p = model_params();
        let model = DiagonalSemigroupModel::from_params(&p, 40).unwrap();
        assert!(model.check_hypotheses(&p).is_none());
        let report = observability_cost(&p).unwrap();
        let trace =
            telescoping_trace(&p, report.t_tilde0 / 2.0, &model, 50, 1234).unwrap();
        assert!(trace.passed, "first failure {:?}", trace.first_failure);
    }

    #[test]
    fn telescoping_locates_overstated_dissipation() {
        let p = model_params();
        let model = DiagonalSemigroupModel::from_params(&p, 40).unwrap();
        let mut claimed = p;
        claimed.c2 *= 2.0;
        assert!(model.check_hypotheses(&claimed).is_some());
        let report = observability_cost(&claimed).unwrap();
        let trace =
            telescoping_trace(&claimed, report.t_tilde0 / 2.0, &model, 50, 1234).unwrap();
        assert!(!trace.passed);
        assert!(trace.first_failure.is_some());
    }

    #[test]
    fn trace_csv_shape() {
        let p = model_params();
        let model = DiagonalSemigroupModel::from_params(&p, 10).unwrap();
        let trace = telescoping_trace(&p, 0.25, &model, 5, 1).unwrap();
        let csv = trace.to_csv();
        assert!(csv.starts_with("k,T_k,tau_k,mode_k,residual\n"));
        assert_eq!(csv.lines().count(), trace.steps.len() + 1);
    }
}
