//! Exponent algebra for `u_t = Δu^m + |x|^σ u^p`.
//!
//! Everything here is a pure function of the four numbers `(m, p, σ, N)`:
//! validation, the two critical exponents, regime classification, the
//! self-similar exponents, the CKN condition checker and the closed-form
//! constants used by the blow-up and global-existence arguments.
//!
//! ## Critical exponents
//!
//! * `p_G = 1 - σ(m-1)/2` separates universal global existence from blow-up.
//! * `p_F = m + (σ+2)/N` separates blow-up of all data from small-data
//!   global existence.
//! * `r_0 = N(p-m)/(σ+2) - 1` is the critical integrability index and
//!   `r_c = max(r_0, 0)`.
//!
//! Quantities that are meaningless in a given regime are `None`, never NaN.

use std::fmt;

use thiserror::Error;

/// Relative tolerance used to decide that `p` sits exactly on `p_G` or `p_F`.
///
/// Both thresholds are evaluated in floating point, so `p = 7.0/3.0` and
/// `m + (σ+2)/N` may differ in the last bit.
pub const BOUNDARY_RTOL: f64 = 1e-12;

/// Name of a constrained input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    M,
    P,
    Sigma,
    Dim,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Field::M => "m",
            Field::P => "p",
            Field::Sigma => "sigma",
            Field::Dim => "dim",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeError {
    #[error("{field} out of range: {reason}")]
    OutOfRange { field: Field, reason: String },
    #[error("r1 = {r1} is below the critical index r_c = {rc}")]
    IndexBelowCritical { r1: f64, rc: f64 },
    #[error("r = {r} must satisfy r >= r1 = {r1}")]
    IndexOrder { r: f64, r1: f64 },
    #[error("wrong regime: {0}")]
    WrongRegime(String),
}

/// Validated problem parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentTriple {
    m: f64,
    p: f64,
    sigma: f64,
    dim: u32,
}

impl ExponentTriple {
    /// Validates `m > 1`, `p > 1` and `max(-2, -N) < σ < 0`.
    pub fn new(m: f64, p: f64, sigma: f64, dim: u32) -> Result<Self, RegimeError> {
        validate(m, p, sigma, f64::from(dim))
    }

    /// Diffusion exponent.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// Reaction exponent.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Potential exponent.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Spatial dimension.
    pub fn dim(&self) -> u32 {
        self.dim
    }

    /// Spatial dimension as a float.
    pub fn n(&self) -> f64 {
        f64::from(self.dim)
    }

    /// Same `(m, σ, N)` with a different reaction exponent.
    pub fn with_p(&self, p: f64) -> Result<Self, RegimeError> {
        Self::new(self.m, p, self.sigma, self.dim)
    }

    pub fn p_g(&self) -> f64 {
        1.0 - self.sigma * (self.m - 1.0) / 2.0
    }

    pub fn p_f(&self) -> f64 {
        self.m + (self.sigma + 2.0) / self.n()
    }

    pub fn r0(&self) -> f64 {
        self.n() * (self.p - self.m) / (self.sigma + 2.0) - 1.0
    }
}

/// Checks the raw inputs and builds an [`ExponentTriple`].
///
/// `dim` is taken as a real number so that non-integer input is reported
/// rather than silently truncated.
pub fn validate(m: f64, p: f64, sigma: f64, dim: f64) -> Result<ExponentTriple, RegimeError> {
    let out = |field, reason: &str| RegimeError::OutOfRange { field, reason: reason.to_string() };
    if !(dim.is_finite() && dim >= 1.0 && dim.fract() == 0.0 && dim <= f64::from(u32::MAX)) {
        return Err(out(Field::Dim, "dim must be a positive integer"));
    }
    if !(m.is_finite() && m > 1.0) {
        return Err(out(Field::M, "m > 1 required"));
    }
    if !(p.is_finite() && p > 1.0) {
        return Err(out(Field::P, "p > 1 required"));
    }
    let lower = (-2.0f64).max(-dim);
    if !(sigma.is_finite() && sigma > lower && sigma < 0.0) {
        return Err(out(Field::Sigma, "max(-2, -N) < sigma < 0 required"));
    }
    Ok(ExponentTriple { m, p, sigma, dim: dim as u32 })
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= BOUNDARY_RTOL * a.abs().max(b.abs())
}

/// Comparison-principle threshold on `p`, which depends on the dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonThreshold {
    /// Threshold value.
    pub value: f64,
    /// Whether `p = value` is itself covered.
    pub inclusive: bool,
}

impl ComparisonThreshold {
    pub fn covers(&self, p: f64) -> bool {
        if near(p, self.value) {
            self.inclusive
        } else {
            p > self.value
        }
    }
}

/// Closed-form constants attached to an [`ExponentTriple`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub p_g: f64,
    pub p_f: f64,
    pub r0: f64,
    pub rc: f64,
    /// Backward exponent `α = (σ+2)/(2(p-p_G))`; absent when `p = p_G`.
    pub alpha: Option<f64>,
    /// Backward exponent `β = (m-p)/(2(p-p_G))`; absent when `p = p_G`.
    pub beta: Option<f64>,
    /// Forward exponent `α* = -α`; present only for `p < p_G`.
    pub alpha_star: Option<f64>,
    /// Forward exponent `β* = -β`; present only for `p < p_G`.
    pub beta_star: Option<f64>,
    /// Threshold above which comparison holds without positivity near the origin.
    pub uniq_threshold: ComparisonThreshold,
    /// Volume of the unit ball in `R^N`.
    pub omega_n: f64,
}

impl DerivedConstants {
    /// The common value `α+1 = αm - 2β = αp + σβ = (2p+mσ)/(2(p-p_G))`.
    pub fn matched_time_exponent(&self, e: &ExponentTriple) -> Option<f64> {
        self.alpha.map(|_| (2.0 * e.p + e.m * e.sigma) / (2.0 * (e.p - self.p_g)))
    }
}

/// Volume of the unit ball, `π^{N/2}/Γ(N/2+1)`, by the two-step recurrence.
pub fn unit_ball_volume(dim: u32) -> f64 {
    let (mut w, start) = if dim.is_multiple_of(2) { (1.0, 2) } else { (2.0, 3) };
    let mut k = start;
    while k <= dim {
        w *= 2.0 * std::f64::consts::PI / f64::from(k);
        k += 2;
    }
    w
}

pub fn derive(e: &ExponentTriple) -> DerivedConstants {
    let p_g = e.p_g();
    let p_f = e.p_f();
    let r0 = e.r0();
    let on_pg = near(e.p, p_g);
    let (alpha, beta) = if on_pg {
        (None, None)
    } else {
        let d = 2.0 * (e.p - p_g);
        (Some((e.sigma + 2.0) / d), Some((e.m - e.p) / d))
    };
    let forward = !on_pg && e.p < p_g;
    let uniq_threshold = match e.dim {
        1 => ComparisonThreshold { value: 1.0 - e.sigma * (e.m - 1.0), inclusive: false },
        2 => ComparisonThreshold { value: p_g, inclusive: false },
        _ => ComparisonThreshold { value: p_g, inclusive: true },
    };
    DerivedConstants {
        p_g,
        p_f,
        r0,
        rc: r0.max(0.0),
        alpha,
        beta,
        alpha_star: if forward { alpha.map(|a| -a) } else { None },
        beta_star: if forward { beta.map(|b| -b) } else { None },
        uniq_threshold,
        omega_n: unit_ball_volume(e.dim),
    }
}

/// Long-time behaviour predicted from `(m, p, σ, N)` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeTag {
    /// `1 < p <= p_G`: every solution is global.
    GlobalAllData,
    /// `p_G < p <= p_F`: every nontrivial solution blows up.
    BlowUpAllData,
    /// `p > p_F`: small data are global, negative-energy data blow up.
    Conditional,
}

/// Whether the comparison principle needs positivity of one solution near 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparisonTag {
    Unconditional,
    NeedsPositivityNearOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regime {
    pub tag: RegimeTag,
    pub comparison: ComparisonTag,
}

impl fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for ComparisonTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Classifies by `(p, p_G, p_F)`; each boundary belongs to the lower interval.
pub fn classify(e: &ExponentTriple) -> Regime {
    let d = derive(e);
    let tag = if e.p < d.p_g || near(e.p, d.p_g) {
        RegimeTag::GlobalAllData
    } else if e.p < d.p_f || near(e.p, d.p_f) {
        RegimeTag::BlowUpAllData
    } else {
        RegimeTag::Conditional
    };
    let comparison = if d.uniq_threshold.covers(e.p) {
        ComparisonTag::Unconditional
    } else {
        ComparisonTag::NeedsPositivityNearOrigin
    };
    Regime { tag, comparison }
}

/// Exponents of the weighted interpolation inequality
/// `‖|x|^{γ1} z‖_{q1} <= C ‖|x|^{γ2} ∇z‖_{q2}^a ‖|x|^{γ3} z‖_{q3}^{1-a}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CknParams {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub a: f64,
}

/// One flag per admissibility condition, labelled `a` to `e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CknReport {
    /// `q1 > 0`, `q2 >= 1`, `q3 > 0`, `a ∈ [0,1]`.
    pub a: bool,
    /// `1/q_i + γ_i/N > 0` for `i = 1, 2, 3`.
    pub b: bool,
    /// Dimensional balance.
    pub c: bool,
    /// `γ1 <= aγ2 + (1-a)γ3`.
    pub d: bool,
    /// `1/q1 <= a/q2 + (1-a)/q3`, only enforced when `a ∈ {0, 1}`.
    pub e: bool,
}

impl CknReport {
    pub fn all(&self) -> bool {
        self.a && self.b && self.c && self.d && self.e
    }
}

/// Tolerance for the equality condition `c`, relative to the term sizes.
pub const CKN_BALANCE_RTOL: f64 = 1e-12;

pub fn ckn_check(k: &CknParams, dim: u32) -> CknReport {
    let n = f64::from(dim);
    let cond_a = k.q1 > 0.0 && k.q2 >= 1.0 && k.q3 > 0.0 && (0.0..=1.0).contains(&k.a);
    let cond_b = 1.0 / k.q1 + k.gamma1 / n > 0.0 && 1.0 / k.q2 + k.gamma2 / n > 0.0 && 1.0 / k.q3 + k.gamma3 / n > 0.0;
    let lhs = 1.0 / k.q1 + k.gamma1 / n;
    let t2 = k.a * (1.0 / k.q2 + (k.gamma2 - 1.0) / n);
    let t3 = (1.0 - k.a) * (1.0 / k.q3 + k.gamma3 / n);
    let scale = lhs.abs().max(t2.abs()).max(t3.abs()).max(f64::MIN_POSITIVE);
    let cond_c = (lhs - t2 - t3).abs() <= CKN_BALANCE_RTOL * scale;
    let cond_d = k.gamma1 <= k.a * k.gamma2 + (1.0 - k.a) * k.gamma3;
    let cond_e = if k.a == 0.0 || k.a == 1.0 { 1.0 / k.q1 <= k.a / k.q2 + (1.0 - k.a) / k.q3 } else { true };
    CknReport { a: cond_a, b: cond_b, c: cond_c, d: cond_d, e: cond_e }
}

/// Interpolation exponents for `∫|x|^σ w^{p+r} <= Λ ‖∇w^{(m+r)/2}‖_2^{2ω_r} (‖w‖_{r1+1}^{r1+1})^{μ_r}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpExponents {
    pub omega_r: f64,
    pub mu_r: f64,
    /// `μ_r/(1-ω_r)`; absent when `ω_r = 1`, i.e. `r1 = r0`.
    pub nu_r: Option<f64>,
    /// CKN weight `a = ((m+r)/(p+r)) ω_r`.
    pub a: f64,
    /// `1-a` from its own closed form `((r1+1)/(p+r)) μ_r`.
    pub one_minus_a: f64,
    /// `1 - ν_r` from its own closed form; absent with `ν_r`.
    pub one_minus_nu: Option<f64>,
    /// The CKN exponents realizing the inequality.
    pub ckn: CknParams,
}

pub fn interp_exponents(e: &ExponentTriple, r1: f64, r: f64) -> Result<InterpExponents, RegimeError> {
    let rc = e.r0().max(0.0);
    if r1 < rc && !near(r1, rc) {
        return Err(RegimeError::IndexBelowCritical { r1, rc });
    }
    if r < r1 {
        return Err(RegimeError::IndexOrder { r, r1 });
    }
    let (m, p, s, n) = (e.m, e.p, e.sigma, e.n());
    let den = n * (m - 1.0) + 2.0 * (r1 + 1.0) + n * (r - r1);
    let omega_r = (n * (p - 1.0) - s * (r1 + 1.0) + n * (r - r1)) / den;
    let mu_r = ((n - 2.0) * (m - p) + (s + 2.0) * (m + r)) / den;
    let at_r0 = near(r1 + 1.0, e.r0() + 1.0);
    let (nu_r, one_minus_nu) = if at_r0 {
        (None, None)
    } else {
        // 1 - ω_r = (σ+2)(r1-r0)/den, so ν_r has the reduced denominator below.
        let nu_den = n * (m - p) + (s + 2.0) * (r1 + 1.0);
        let nu = ((n - 2.0) * (m - p) + (s + 2.0) * (m + r)) / nu_den;
        let one_minus = -(2.0 * (p - e.p_g()) + (s + 2.0) * (r - r1)) / nu_den;
        (Some(nu), Some(one_minus))
    };
    let a = (m + r) / (p + r) * omega_r;
    let one_minus_a = (r1 + 1.0) / (p + r) * mu_r;
    let ckn = CknParams {
        q1: 2.0 * (p + r) / (m + r),
        q2: 2.0,
        q3: 2.0 * (r1 + 1.0) / (m + r),
        gamma1: s * (m + r) / (2.0 * (p + r)),
        gamma2: 0.0,
        gamma3: 0.0,
        a,
    };
    Ok(InterpExponents { omega_r, mu_r, nu_r, a, one_minus_a, one_minus_nu, ckn })
}

/// Constants of the compactly supported blow-up subsolution
/// `S(t,x) = (T-t)^{-α} A (1 - |x|²(T-t)^{2β}/a²)_+^{1/(m-1)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsolutionConstants {
    pub alpha: f64,
    pub beta: f64,
    /// Amplitude the constants were evaluated for.
    pub amplitude: f64,
    /// Support parameter `a = sqrt(m A^{m-1}/(β(m-1)))`.
    pub a: f64,
    pub z0: f64,
    /// Right-hand side `A_0^{p-p_G}` of the amplitude condition.
    pub a0_condition: f64,
    /// Threshold amplitude `A_0`.
    pub a0: f64,
    /// Whether `A^{p-p_G} >= A_0^{p-p_G}`.
    pub satisfied: bool,
}

pub fn subsolution_constants(e: &ExponentTriple, amplitude: f64) -> Result<SubsolutionConstants, RegimeError> {
    let p_g = e.p_g();
    if !(e.p > p_g && e.p < e.m) || near(e.p, p_g) {
        return Err(RegimeError::WrongRegime(format!(
            "subsolution needs p_G < p < m, got p = {} with p_G = {p_g}, m = {}",
            e.p, e.m
        )));
    }
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(RegimeError::WrongRegime("amplitude must be positive".into()));
    }
    let (m, p, s, n) = (e.m, e.p, e.sigma, e.n());
    let alpha = (s + 2.0) / (2.0 * (p - p_g));
    let beta = (m - p) / (2.0 * (p - p_g));
    let a_sq = m * amplitude.powf(m - 1.0) / (beta * (m - 1.0));
    let k = n * (m - 1.0) + 2.0;
    let z0 = (1.0 / (2.0 * k)).min(beta);
    let a0_condition = (m / (beta * (m - 1.0))).powf(-s / 2.0) * (1.0 - z0).powf(-s / 2.0)
        / ((m - 1.0) * z0.powf((p - 1.0) / (m - 1.0)))
        * (1.0 + 2.0 * k * beta);
    let a0 = a0_condition.powf(1.0 / (p - p_g));
    Ok(SubsolutionConstants {
        alpha,
        beta,
        amplitude,
        a: a_sq.sqrt(),
        z0,
        a0_condition,
        a0,
        satisfied: amplitude.powf(p - p_g) >= a0_condition,
    })
}

/// Lines of `key=value` text describing the constants and the regime.
pub fn report(e: &ExponentTriple) -> String {
    let d = derive(e);
    let g = classify(e);
    let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.17e}"));
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    kv("m", format!("{:.17e}", e.m));
    kv("p", format!("{:.17e}", e.p));
    kv("sigma", format!("{:.17e}", e.sigma));
    kv("dim", e.dim.to_string());
    kv("p_G", format!("{:.17e}", d.p_g));
    kv("p_F", format!("{:.17e}", d.p_f));
    kv("r_0", format!("{:.17e}", d.r0));
    kv("r_c", format!("{:.17e}", d.rc));
    kv("alpha", opt(d.alpha));
    kv("beta", opt(d.beta));
    kv("alpha_star", opt(d.alpha_star));
    kv("beta_star", opt(d.beta_star));
    kv("uniq_threshold", format!("{:.17e}", d.uniq_threshold.value));
    kv("uniq_threshold_inclusive", d.uniq_threshold.inclusive.to_string());
    kv("omega_N", format!("{:.17e}", d.omega_n));
    kv("regime", g.tag.to_string());
    kv("comparison", g.comparison.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64 as Q;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    fn qf(x: Q) -> f64 {
        *x.numer() as f64 / *x.denom() as f64
    }

    fn e(m: f64, p: f64, s: f64, n: u32) -> ExponentTriple {
        ExponentTriple::new(m, p, s, n).unwrap()
    }

    // Exact rational evaluation of the closed forms, independent of `derive`.
    struct Exact {
        p_g: Q,
        p_f: Q,
        r0: Q,
        alpha: Option<Q>,
        beta: Option<Q>,
    }

    fn exact(m: Q, p: Q, s: Q, n: i64) -> Exact {
        let one = q(1, 1);
        let two = q(2, 1);
        let nq = q(n, 1);
        let p_g = one - s * (m - one) / two;
        let p_f = m + (s + two) / nq;
        let r0 = nq * (p - m) / (s + two) - one;
        let (alpha, beta) = if p == p_g {
            (None, None)
        } else {
            (Some((s + two) / (two * (p - p_g))), Some((m - p) / (two * (p - p_g))))
        };
        Exact { p_g, p_f, r0, alpha, beta }
    }

    #[test]
    fn validate_examples() {
        assert!(validate(2.0, 1.5, -1.0, 3.0).is_ok());
        assert_eq!(
            validate(2.0, 1.5, -2.0, 3.0).unwrap_err(),
            RegimeError::OutOfRange { field: Field::Sigma, reason: "max(-2, -N) < sigma < 0 required".into() }
        );
        assert!(matches!(validate(1.0, 2.0, -0.5, 2.0), Err(RegimeError::OutOfRange { field: Field::M, .. })));
        assert!(matches!(validate(2.0, 1.0, -0.5, 2.0), Err(RegimeError::OutOfRange { field: Field::P, .. })));
        assert!(matches!(validate(2.0, 1.5, -1.0, 0.0), Err(RegimeError::OutOfRange { field: Field::Dim, .. })));
        assert!(matches!(validate(2.0, 1.5, -1.0, 2.5), Err(RegimeError::OutOfRange { field: Field::Dim, .. })));
        // N = 1 tightens the lower bound on sigma to -1.
        assert!(matches!(validate(2.0, 1.5, -1.0, 1.0), Err(RegimeError::OutOfRange { field: Field::Sigma, .. })));
        assert!(validate(2.0, 1.5, -0.99, 1.0).is_ok());
        assert!(matches!(validate(2.0, 1.5, 0.0, 3.0), Err(RegimeError::OutOfRange { field: Field::Sigma, .. })));
        assert!(validate(f64::NAN, 1.5, -1.0, 3.0).is_err());
    }

    #[test]
    fn derive_matches_rational_worked_examples() {
        let ex = exact(q(2, 1), q(3, 1), q(-1, 1), 3);
        let d = derive(&e(2.0, 3.0, -1.0, 3));
        assert_eq!(ex.p_g, q(3, 2));
        assert_eq!(ex.p_f, q(7, 3));
        assert_eq!(ex.r0, q(2, 1));
        assert!((d.p_g - qf(ex.p_g)).abs() <= 1e-12);
        assert!((d.p_f - qf(ex.p_f)).abs() <= 1e-12);
        assert!((d.r0 - qf(ex.r0)).abs() <= 1e-12);
        assert_eq!(d.rc, d.r0);

        let ex = exact(q(2, 1), q(6, 5), q(-1, 1), 3);
        let d = derive(&e(2.0, 1.2, -1.0, 3));
        let a_star = -ex.alpha.unwrap();
        let b_star = -ex.beta.unwrap();
        assert_eq!(a_star, q(5, 3));
        assert_eq!(b_star, q(4, 3));
        assert!((d.alpha_star.unwrap() - qf(a_star)).abs() <= 1e-12);
        assert!((d.beta_star.unwrap() - qf(b_star)).abs() <= 1e-12);
        assert_eq!(d.rc, 0.0);
    }

    #[test]
    fn absent_fields_are_none_not_nan() {
        let d = derive(&e(2.0, 1.5, -1.0, 3));
        assert!(d.alpha.is_none() && d.beta.is_none());
        assert!(d.alpha_star.is_none() && d.beta_star.is_none());
        let d = derive(&e(2.0, 1.8, -1.0, 3));
        assert!(d.alpha.unwrap() > 0.0);
        assert!(d.alpha_star.is_none());
    }

    #[test]
    fn classify_examples_and_closed_boundaries() {
        assert_eq!(classify(&e(2.0, 1.2, -1.0, 3)).tag, RegimeTag::GlobalAllData);
        assert_eq!(classify(&e(2.0, 1.8, -1.0, 3)).tag, RegimeTag::BlowUpAllData);
        assert_eq!(classify(&e(2.0, 3.0, -1.0, 3)).tag, RegimeTag::Conditional);
        assert_eq!(classify(&e(2.0, 1.5, -1.0, 3)).tag, RegimeTag::GlobalAllData);
        assert_eq!(classify(&e(2.0, 7.0 / 3.0, -1.0, 3)).tag, RegimeTag::BlowUpAllData);
        assert_eq!(classify(&e(2.0, 7.0 / 3.0 + 1e-9, -1.0, 3)).tag, RegimeTag::Conditional);
    }

    #[test]
    fn comparison_tag_by_dimension() {
        use ComparisonTag::*;
        // N >= 3: p >= p_G.
        assert_eq!(classify(&e(2.0, 1.5, -1.0, 3)).comparison, Unconditional);
        assert_eq!(classify(&e(2.0, 1.4, -1.0, 3)).comparison, NeedsPositivityNearOrigin);
        // N = 2: p > p_G strictly.
        assert_eq!(classify(&e(2.0, 1.5, -1.0, 2)).comparison, NeedsPositivityNearOrigin);
        assert_eq!(classify(&e(2.0, 1.51, -1.0, 2)).comparison, Unconditional);
        // N = 1: p > 1 - σ(m-1) = 1.5 for σ = -0.5, m = 2.
        assert_eq!(classify(&e(2.0, 1.5, -0.5, 1)).comparison, NeedsPositivityNearOrigin);
        assert_eq!(classify(&e(2.0, 1.6, -0.5, 1)).comparison, Unconditional);
        // p_G = 1.25 here, so 1.3 blows up but comparison is still conditional.
        let g = classify(&e(2.0, 1.3, -0.5, 1));
        assert_eq!((g.tag, g.comparison), (RegimeTag::BlowUpAllData, NeedsPositivityNearOrigin));
    }

    #[test]
    fn ckn_interp_worked_example() {
        let x = interp_exponents(&e(2.0, 1.8, -1.0, 3), 1.0, 1.0).unwrap();
        assert!((x.omega_r - 4.4 / 7.0).abs() < 1e-14);
        assert!((x.mu_r - 3.2 / 7.0).abs() < 1e-14);
        assert!((x.a - 3.0 / 2.8 * 4.4 / 7.0).abs() < 1e-14);
        assert!((x.a + x.one_minus_a - 1.0).abs() < 1e-14);
        assert!((x.one_minus_nu.unwrap() + 0.6 / 2.6).abs() < 1e-14);
        assert!((x.nu_r.unwrap() - x.mu_r / (1.0 - x.omega_r)).abs() < 1e-13);
        assert!(ckn_check(&x.ckn, 3).all());
    }

    #[test]
    fn ckn_constructed_violations() {
        let base = interp_exponents(&e(2.0, 1.8, -1.0, 3), 1.0, 1.0).unwrap().ckn;
        let bad_d = CknParams { gamma1: 0.5, ..base };
        let r = ckn_check(&bad_d, 3);
        assert!(!r.d);
        // a = 1 with 1/q1 > 1/q2 trips the endpoint condition; balance is set up to hold.
        let n = 3.0;
        let q2 = 2.0;
        let q1: f64 = 1.5;
        let gamma1 = n * (1.0 / q2 - 1.0 / n) - n / q1;
        let k = CknParams { q1, q2, q3: 2.0, gamma1, gamma2: 0.0, gamma3: 0.0, a: 1.0 };
        let r = ckn_check(&k, 3);
        assert!(r.c);
        assert!(!r.e);
        assert!(!r.all());
    }

    #[test]
    fn omega_is_one_exactly_at_r0() {
        let t = e(2.0, 3.0, -1.0, 3);
        let x = interp_exponents(&t, 2.0, 2.5).unwrap();
        assert!((x.omega_r - 1.0).abs() <= 1e-15);
        assert!(x.nu_r.is_none());
        assert!(matches!(interp_exponents(&t, 1.5, 2.0), Err(RegimeError::IndexBelowCritical { .. })));
    }

    #[test]
    fn subsolution_worked_example() {
        let c = subsolution_constants(&e(2.0, 1.8, -1.0, 3), 2.0).unwrap();
        assert!((c.beta - 1.0 / 3.0).abs() < 1e-14);
        assert!((c.z0 - 0.1).abs() < 1e-15);
        assert!((c.a * c.a - 6.0 * 2.0).abs() < 1e-12);
        // Independent evaluation: (6)^{1/2} (0.9)^{1/2} / (0.1^{0.8}) (1 + 10/3).
        let rhs = 6f64.sqrt() * 0.9f64.sqrt() / 0.1f64.powf(0.8) * (1.0 + 10.0 / 3.0);
        assert!((c.a0_condition - rhs).abs() < 1e-12 * rhs);
        let below = subsolution_constants(&e(2.0, 1.8, -1.0, 3), 0.5 * c.a0).unwrap();
        assert!(!below.satisfied);
        let above = subsolution_constants(&e(2.0, 1.8, -1.0, 3), 1.01 * c.a0).unwrap();
        assert!(above.satisfied);
        assert!(subsolution_constants(&e(2.0, 1.2, -1.0, 3), 1.0).is_err());
        assert!(subsolution_constants(&e(2.0, 2.5, -1.0, 3), 1.0).is_err());
    }

    #[test]
    fn unit_ball_volumes() {
        use std::f64::consts::PI;
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn report_has_regime_line() {
        let r = report(&e(2.0, 1.8, -1.0, 3));
        assert!(r.lines().any(|l| l == "regime=BlowUpAllData"));
        assert!(r.lines().any(|l| l == "alpha_star=undefined"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn triple() -> impl Strategy<Value = ExponentTriple> {
            (1.01f64..5.0, 1.01f64..8.0, 1u32..6, 0.01f64..0.99).prop_map(|(m, p, n, frac)| {
                let lower = (-2.0f64).max(-f64::from(n));
                ExponentTriple::new(m, p, lower * frac, n).unwrap()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn threshold_ordering(t in triple()) {
                let d = derive(&t);
                prop_assert!(1.0 < d.p_g && d.p_g < t.m() && t.m() < d.p_f);
            }

            #[test]
            fn matched_exponents(t in triple()) {
                let d = derive(&t);
                if let (Some(a), Some(b)) = (d.alpha, d.beta) {
                    let base = d.matched_time_exponent(&t).unwrap();
                    let tol = 1e-9 * (1.0 + base.abs());
                    prop_assert!((a + 1.0 - base).abs() <= tol);
                    prop_assert!((a * t.m() - 2.0 * b - base).abs() <= tol);
                    prop_assert!((a * t.p() + t.sigma() * b - base).abs() <= tol);
                }
            }

            #[test]
            fn interp_instantiation_admissible(t in triple(), s1 in 0.0f64..5.0, s2 in 0.0f64..5.0) {
                let r1 = t.r0().max(0.0) + s1;
                let r = r1 + s2;
                let x = interp_exponents(&t, r1, r).unwrap();
                prop_assert!(x.a > 0.0 && x.a < 1.0);
                prop_assert!((x.a + x.one_minus_a - 1.0).abs() <= 1e-12);
                prop_assert!(x.omega_r > 0.0 && x.omega_r <= 1.0);
                prop_assert!(x.mu_r > 0.0);
                prop_assert!(ckn_check(&x.ckn, t.dim()).all());
                if let Some(om) = x.one_minus_nu {
                    let pg = t.p_g();
                    if (t.p() - pg).abs() > 1e-9 && s2 == 0.0 {
                        prop_assert_eq!(om.signum(), -(t.p() - pg).signum());
                    }
                    prop_assert!((om - (1.0 - x.nu_r.unwrap())).abs() <= 1e-9 * (1.0 + om.abs()));
                }
            }
        }
    }
}
