//! Energies, fits and property checks on runs and profiles.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::profiles::{evaluate_selfsimilar, Profile, ProfileKind};
use crate::radial::{dirichlet_integral, pow, weighted_integral, RadialError, RadialField, RadialGrid};
use crate::regimes::{ckn_check, derive, interp_exponents, CknParams, ExponentTriple, RegimeError};
use crate::solver::{run, RegularizedProblem, RunOptions, SimulationRun, SolverError, Verdict};

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("no data points in window [{lo}, {hi}]")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("non-positive value {0} cannot be fitted on a log scale")]
    NonPositive(f64),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("CKN conditions fail for {0:?}")]
    ConditionsFail(CknParams),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
}

/// Fits with `r² < 0.99` carry no verdict.
pub const MIN_R_SQUARED: f64 = 0.99;

/// `E(v) = ‖∇v^m‖²/2 - (m/(m+p)) ∫|x|^σ v^{m+p}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub dirichlet: f64,
    pub potential: f64,
    pub total: f64,
}

/// Dirichlet part from the same edge differences as the Laplacian, potential
/// part with exact singular weights.
pub fn energy(f: &RadialField, e: &ExponentTriple) -> EnergyReport {
    let (m, p) = (e.m(), e.p());
    let g: Vec<f64> = f.values().iter().map(|&v| pow(v, m)).collect();
    let dirichlet = 0.5 * dirichlet_integral(f.grid(), &g);
    let potential = m / (m + p) * weighted_integral(f, m + p, e.sigma()).expect("sigma > -N");
    EnergyReport { dirichlet, potential, total: dirichlet - potential }
}

/// True when `E` never rises by more than `rtol · max|E|` between rows.
pub fn energy_nonincreasing(energies: &[f64], rtol: f64) -> bool {
    let scale = energies.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    energies.windows(2).all(|w| w[1] <= w[0] + rtol * scale)
}

/// Least-squares line `y = slope·x + intercept`.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    linear_fit_r2(pts).map(|(s, i, _)| (s, i))
}

/// Least-squares line and its coefficient of determination.
pub fn linear_fit_r2(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Some((slope, my - slope * mx, r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    /// `y = c t^k`, fitted on `(ln t, ln y)`.
    PowerLaw,
    /// `y = c e^{ρt}`, fitted on `(t, ln y)`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub window: (f64, f64),
    pub model: RateModel,
    /// Exponent `k` or rate `ρ`.
    pub fitted: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl RateFit {
    /// The fitted value, or `None` when `r²` is below [`MIN_R_SQUARED`].
    pub fn verdict(&self) -> Option<f64> {
        (self.r_squared >= MIN_R_SQUARED).then_some(self.fitted)
    }
}

/// Least-squares rate over the points of `series` with `t` in `window`.
pub fn rate_fit(series: &[(f64, f64)], model: RateModel, window: (f64, f64)) -> Result<RateFit, DiagError> {
    let (lo, hi) = window;
    let mut pts = Vec::new();
    for &(t, y) in series.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        if !(y > 0.0) {
            return Err(DiagError::NonPositive(y));
        }
        let x = match model {
            RateModel::PowerLaw if t > 0.0 => t.ln(),
            RateModel::PowerLaw => continue,
            RateModel::Exponential => t,
        };
        pts.push((x, y.ln()));
    }
    let (fitted, _, r_squared) = linear_fit_r2(&pts).ok_or(DiagError::EmptyWindow { lo, hi })?;
    Ok(RateFit { window, model, fitted, r_squared, points: pts.len() })
}

/// `I = ‖u‖_{m+1}^{m+1}`, the energy and, when a test function is given, `∫u v*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowUpFunctional {
    pub i: f64,
    pub e: f64,
    pub kaplan: Option<f64>,
}

pub fn blowup_functional(u: &RadialField, e: &ExponentTriple, vstar: Option<&RadialField>) -> BlowUpFunctional {
    BlowUpFunctional { i: u.power_integral(e.m() + 1.0), e: energy(u, e).total, kaplan: vstar.map(|v| pairing(u, v)) }
}

/// `∫ u v dx` by the midpoint rule on cells.
pub fn pairing(u: &RadialField, v: &RadialField) -> f64 {
    u.values().iter().zip(v.values()).zip(u.grid().volumes()).map(|((a, b), w)| a * b * w).sum()
}

/// Outcome of comparing a blow-up run with `‖u(t)‖_{m+1} <= K (T - t)^{-1/(p-1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// `K = [m ‖u_0‖_{m+1}^{m+p} / ((p-1)(m+p)|E(u_0)|)]^{1/(p-1)}`.
    pub k: f64,
    pub energy0: f64,
    /// Zero of the affine fit of `‖u‖_{m+1}^{-(p-1)}`.
    pub t_hat: f64,
    /// `m ‖u_0‖_{m+1}^{m+1} / ((p-1)(m+p)|E(u_0)|)`, the bound read at `t = 0`.
    pub t_upper: f64,
    pub t_detect: f64,
    /// Largest `‖u(t)‖_{m+1} (T̂ - t)^{1/(p-1)} / K` over the window.
    pub margin: f64,
    pub window: (f64, f64),
    pub points: usize,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.points > 0 && self.margin <= 1.0
    }
}

/// Checks the `L^{m+1}` blow-up rate bound over the last decade of growth
/// of `‖u‖_{m+1}` before detection.
pub fn blowup_bound_check(run: &SimulationRun, e: &ExponentTriple) -> Result<BoundReport, DiagError> {
    let (m, p) = (e.m(), e.p());
    if p < m {
        return Err(DiagError::RegimeMismatch(format!("bound needs p >= m, got p = {p}")));
    }
    let Verdict::BlowUpDetected { t_detect, .. } = run.verdict else {
        return Err(DiagError::PreconditionViolated("run did not detect blow-up".into()));
    };
    let u0 = &run.snapshots[0].1;
    let e0 = energy(u0, e).total;
    if e0 >= 0.0 {
        return Err(DiagError::PreconditionViolated(format!("E(u0) = {e0} is not negative")));
    }
    let n0 = u0.lq_norm(m + 1.0);
    let k = (m * n0.powf(m + p) / ((p - 1.0) * (m + p) * e0.abs())).powf(1.0 / (p - 1.0));
    let t_upper = m * n0.powf(m + 1.0) / ((p - 1.0) * (m + p) * e0.abs());
    let last = run.series.last().map_or(0.0, |r| r.l_m1);
    let rows: Vec<_> = run.series.iter().filter(|r| r.l_m1 >= last / 10.0).collect();
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.l_m1.powf(1.0 - p))).collect();
    let (slope, intercept) = linear_fit(&pts).ok_or(DiagError::EmptyWindow { lo: t_detect, hi: t_detect })?;
    if !(slope < 0.0) {
        return Err(DiagError::PreconditionViolated("norm is not growing towards blow-up".into()));
    }
    let t_hat = -intercept / slope;
    let mut margin = 0.0f64;
    let mut points = 0;
    for r in rows.iter().filter(|r| r.t < t_hat) {
        margin = margin.max(r.l_m1 * (t_hat - r.t).powf(1.0 / (p - 1.0)) / k);
        points += 1;
    }
    let window = (rows.first().map_or(t_detect, |r| r.t), rows.last().map_or(t_detect, |r| r.t));
    Ok(BoundReport { k, energy0: e0, t_hat, t_upper, t_detect, margin, window, points })
}

/// `∫u v*` along a run against the lower solution of `X' = C X^m/(m-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanReport {
    /// `(t, ∫ u(t) v* dx)` at every snapshot.
    pub series: Vec<(f64, f64)>,
    /// `C(v*) = ‖v*‖_1^{1-m} ‖v*‖_∞^{-(m-1)/m}`.
    pub constant: f64,
    /// Time at which the lower solution diverges, `X_0^{1-m}/C`.
    pub bound_divergence: f64,
    pub nondecreasing: bool,
    /// Whether `X(t)` stays above the lower solution at every snapshot.
    pub lower_bound_holds: bool,
    pub t_detect: Option<f64>,
}

impl KaplanReport {
    /// `t_detect / bound_divergence`, when blow-up was detected.
    pub fn ratio(&self) -> Option<f64> {
        self.t_detect.map(|t| t / self.bound_divergence)
    }
}

pub fn kaplan_monitor(run: &SimulationRun, vstar: &Profile) -> Result<KaplanReport, DiagError> {
    let e = &run.config.exponents;
    if vstar.kind != ProfileKind::Kaplan {
        return Err(DiagError::RegimeMismatch(format!("test function has kind {}", vstar.kind)));
    }
    if (e.p() - e.m()).abs() > 1e-12 * e.m() {
        return Err(DiagError::RegimeMismatch(format!("Kaplan monitor needs p = m, got p = {}", e.p())));
    }
    let m = e.m();
    let grid = run.snapshots[0].1.grid().clone();
    if grid.r_max() < vstar.support_radius {
        return Err(DiagError::PreconditionViolated("grid does not cover the support of v*".into()));
    }
    let v = vstar.sample(grid)?;
    let constant = v.mass().powf(1.0 - m) * v.max().powf(-(m - 1.0) / m);
    let series: Vec<(f64, f64)> = run.snapshots.iter().map(|(t, u)| (*t, pairing(u, &v))).collect();
    let x0 = series[0].1;
    let bound_divergence = if x0 > 0.0 { x0.powf(1.0 - m) / constant } else { f64::INFINITY };
    let nondecreasing = series.windows(2).all(|w| w[0].1 <= 0.0 || w[1].1 >= w[0].1 * (1.0 - 1e-12));
    let lower_bound_holds = series.iter().all(|&(t, x)| {
        let base = x0.powf(1.0 - m) - constant * t;
        base <= 0.0 || x >= base.powf(-1.0 / (m - 1.0)) * (1.0 - 1e-9)
    });
    let t_detect = match run.verdict {
        Verdict::BlowUpDetected { t_detect, .. } => Some(t_detect),
        Verdict::ReachedHorizon { .. } => None,
    };
    Ok(KaplanReport { series, constant, bound_divergence, nondecreasing, lower_bound_holds, t_detect })
}

/// `(t, t^{-α*} ‖u(t) - U*(t)‖_∞)` at every snapshot with `t > 0`.
pub fn selfsim_convergence(run: &SimulationRun, profile: &Profile) -> Result<Vec<(f64, f64)>, DiagError> {
    let e = &run.config.exponents;
    if profile.kind != ProfileKind::Forward || derive(e).alpha_star.is_none() {
        return Err(DiagError::RegimeMismatch("self-similar convergence needs a forward profile and p < p_G".into()));
    }
    let mut out = Vec::new();
    for (t, u) in run.snapshots.iter().filter(|(t, _)| *t > 0.0) {
        let target = evaluate_selfsimilar(profile, *t, u.grid().clone())?;
        let diff = u.values().iter().zip(target.values()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        out.push((*t, diff * t.powf(-profile.alpha)));
    }
    Ok(out)
}

/// `2p - [2(p-1) - τ(m-1)] - τm - (2-τ)`, identically zero.
pub fn power_gap_exponent_sum(m: f64, p: f64, tau: f64) -> f64 {
    2.0 * p - (2.0 * (p - 1.0) - tau * (m - 1.0)) - tau * m - (2.0 - tau)
}

/// `|X^p-Y^p|² / (max^{2(p-1)-τ(m-1)} |X^m-Y^m|^τ |X-Y|^{2-τ})`, evaluated
/// through `ζ = min/max` so that nearby pairs do not cancel.
pub fn power_gap_ratio(m: f64, p: f64, tau: f64, x: f64, y: f64) -> f64 {
    let (lo, hi) = if x < y { (x, y) } else { (y, x) };
    let lz = (lo / hi).ln();
    let one_minus = |q: f64| -(q * lz).exp_m1();
    one_minus(p).powi(2) / (one_minus(m).powf(tau) * one_minus(1.0).powf(2.0 - tau))
}

/// The same ratio from the raw powers, for audits away from the diagonal.
pub fn power_gap_ratio_direct(m: f64, p: f64, tau: f64, x: f64, y: f64) -> f64 {
    let mx = x.max(y);
    (x.powf(p) - y.powf(p)).powi(2)
        / (mx.powf(2.0 * (p - 1.0) - tau * (m - 1.0))
            * (x.powf(m) - y.powf(m)).abs().powf(tau)
            * (x - y).abs().powf(2.0 - tau))
}

/// Largest ratio over `samples` log-uniform pairs in `[1e-6, 1e6]²`, skipping the diagonal.
pub fn power_gap_test(m: f64, p: f64, tau: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = 1e6f64.ln();
    let mut sup = 0.0f64;
    let mut drawn = 0;
    while drawn < samples {
        let x = (rng.random_range(-span..span)).exp();
        let y = (rng.random_range(-span..span)).exp();
        if x == y {
            continue;
        }
        drawn += 1;
        sup = sup.max(power_gap_ratio(m, p, tau, x, y));
    }
    sup
}

/// `∫_{a<|x|<b} |x|^s dx`.
fn shell_integral(dim: u32, s: f64, a: f64, b: f64) -> f64 {
    let n = f64::from(dim);
    let area = n * crate::regimes::unit_ball_volume(dim);
    let k = n + s;
    if k.abs() < 1e-14 {
        area * (b / a).ln()
    } else {
        area * (b.powf(k) - a.powf(k)) / k
    }
}

/// `‖|x|^{γ1} z‖_{q1} / (‖|x|^{γ2} ∇z‖_{q2}^a ‖|x|^{γ3} z‖_{q3}^{1-a})`, zero when
/// the numerator vanishes.
///
/// The gradient lives on the edges between cell centres and is weighted by
/// the exact `|x|^{γ2 q2}` integral over the dual cell.
pub fn ckn_ratio(params: &CknParams, trial: &RadialField) -> Result<f64, DiagError> {
    let grid = trial.grid();
    if !ckn_check(params, grid.dim()).all() {
        return Err(DiagError::ConditionsFail(*params));
    }
    let z = trial.values();
    let wnorm = |gamma: f64, q: f64| -> Result<f64, DiagError> {
        let w = grid.singular_weights(gamma * q)?;
        Ok(z.iter().zip(&w).map(|(v, w)| pow(v.abs(), q) * w).sum::<f64>().powf(1.0 / q))
    };
    let lhs = wnorm(params.gamma1, params.q1)?;
    if lhs == 0.0 {
        return Ok(0.0);
    }
    let c = grid.centers();
    let s2 = params.gamma2 * params.q2;
    let mut grad = 0.0;
    for i in 1..z.len() {
        let d = (z[i] - z[i - 1]).abs() / (c[i] - c[i - 1]);
        if d > 0.0 {
            grad += d.powf(params.q2) * shell_integral(grid.dim(), s2, c[i - 1], c[i]);
        }
    }
    let grad = grad.powf(1.0 / params.q2);
    let third = wnorm(params.gamma3, params.q3)?;
    Ok(lhs / (grad.powf(params.a) * third.powf(1.0 - params.a)))
}

/// Supremum of [`ckn_ratio`] over `(1-(r/R)²)_+^k`, `k = 1..=k_max`, each on
/// a grid of `n_cells` cells scaled to its radius `R`.
pub fn ckn_lambda_lower(
    params: &CknParams,
    dim: u32,
    k_max: u32,
    radii: &[f64],
    n_cells: usize,
) -> Result<f64, DiagError> {
    let mut best = 0.0f64;
    for &r in radii {
        let grid = Arc::new(RadialGrid::uniform(dim, r, n_cells)?);
        for k in 1..=k_max {
            let z = RadialField::from_fn(grid.clone(), |x| (1.0 - (x / r).powi(2)).max(0.0).powi(k as i32))?;
            best = best.max(ckn_ratio(params, &z)?);
        }
    }
    Ok(best)
}

/// Numerical lower bound for the constant `Λ` in
/// `∫|x|^σ w^{p+r} <= Λ ‖∇w^{(m+r)/2}‖² (‖w‖_{r0+1}^{r0+1})^{(σ+2)/N}`,
/// taken over `r ∈ [r0, r0+1]`.
pub fn lambda_lower_critical(e: &ExponentTriple, n_cells: usize) -> Result<f64, DiagError> {
    let r0 = e.r0();
    let mut best = 0.0f64;
    for j in 0..=4 {
        let r = r0 + f64::from(j) / 4.0;
        let x = interp_exponents(e, r0, r)?;
        let c = ckn_lambda_lower(&x.ckn, e.dim(), 6, &[1.0], n_cells)?;
        best = best.max(c.powf(2.0 * (e.p() + r) / (e.m() + r)));
    }
    Ok(best)
}

/// `C_0 = (4 m r0 / (Λ (r0+1) (m+r0)²))^{N/(σ+2)}` for a given `Λ`.
pub fn c0_formula(e: &ExponentTriple, lambda: f64) -> f64 {
    let (m, r0) = (e.m(), e.r0());
    (4.0 * m * r0 / (lambda * (r0 + 1.0) * (m + r0).powi(2))).powf(e.n() / (e.sigma() + 2.0))
}

/// Exponent of the interpolation `‖w‖_{r+1} <= C ‖∇w^{(m+r)/2}‖^{2Θ/(r+m)} ‖w‖_{r0+1}^{1-Θ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaReport {
    pub theta: f64,
    /// `1-Θ` from its own closed form.
    pub one_minus_theta: f64,
    /// The form `(p-m)/((σ+2)(r+1)) · (N(m-1)+2(r+1))/D`, which lacks a factor `N`.
    pub one_minus_theta_uncorrected: f64,
}

pub fn theta_exponents(e: &ExponentTriple, r: f64) -> Result<ThetaReport, DiagError> {
    let (m, p, s, n) = (e.m(), e.p(), e.sigma(), e.n());
    let r0 = e.r0();
    if !(r > r0) || !(p > m) {
        return Err(DiagError::PreconditionViolated(format!("need r > r0 = {r0} and p > m")));
    }
    let d = n * (r - r0) + n * (m - 1.0) + 2.0 * (r0 + 1.0);
    let theta = (r + m) / (r + 1.0) * n * (r - r0) / d;
    let tail = (n * (m - 1.0) + 2.0 * (r + 1.0)) / d;
    Ok(ThetaReport {
        theta,
        one_minus_theta: n * (p - m) / ((s + 2.0) * (r + 1.0)) * tail,
        one_minus_theta_uncorrected: (p - m) / ((s + 2.0) * (r + 1.0)) * tail,
    })
}

/// Amplitude bisection between global-so-far and blow-up runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// Amplitude bracket after each bisection step.
    pub history: Vec<(f64, f64)>,
    pub amplitude_bracket: (f64, f64),
    /// `‖u_0‖_{r0+1}` at the two ends of the bracket.
    pub norm_bracket: (f64, f64),
    /// `C_0` from the numeric lower bound for `Λ`, an upper bound for the true formula value.
    pub c0_informational: Option<f64>,
}

/// Bisects `amplitude -> u0(amplitude)` between a global-so-far run at `lo`
/// and a blow-up run at `hi`.
pub fn smallness_threshold(
    e: &ExponentTriple,
    eta: f64,
    u0: impl Fn(f64) -> RadialField,
    bracket: (f64, f64),
    steps: usize,
    opts: &RunOptions,
    lambda_lower: Option<f64>,
) -> Result<ThresholdReport, DiagError> {
    if e.p() <= e.p_f() {
        return Err(DiagError::RegimeMismatch(format!("threshold needs p > p_F = {}", e.p_f())));
    }
    let blows = |a: f64| -> Result<bool, DiagError> {
        let r = run(&RegularizedProblem::new(*e, eta, u0(a))?, opts)?;
        Ok(r.verdict.is_blowup())
    };
    let (mut lo, mut hi) = bracket;
    if blows(lo)? || !blows(hi)? {
        return Err(DiagError::PreconditionViolated(format!("[{lo}, {hi}] does not bracket the threshold")));
    }
    let mut history = vec![(lo, hi)];
    for _ in 0..steps {
        let mid = (lo * hi).sqrt();
        if blows(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        history.push((lo, hi));
    }
    let q = e.r0() + 1.0;
    Ok(ThresholdReport {
        history,
        amplitude_bracket: (lo, hi),
        norm_bracket: (u0(lo).lq_norm(q), u0(hi).lq_norm(q)),
        c0_informational: lambda_lower.map(|l| c0_formula(e, l)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regimes::interp_exponents;

    fn e(m: f64, p: f64, s: f64, n: u32) -> ExponentTriple {
        ExponentTriple::new(m, p, s, n).unwrap()
    }

    fn grid(dim: u32, r: f64, n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::uniform(dim, r, n).unwrap())
    }

    #[test]
    fn energy_of_zero_and_homogeneity() {
        let ex = e(2.0, 3.0, -1.0, 3);
        let g = grid(3, 2.0, 200);
        let z = energy(&RadialField::zeros(g.clone()), &ex);
        assert_eq!((z.dirichlet, z.potential, z.total), (0.0, 0.0, 0.0));
        let f = RadialField::from_fn(g.clone(), |r| (1.0 - r * r).max(0.0)).unwrap();
        let lam = 1.7f64;
        let fl = RadialField::new(g, f.values().iter().map(|v| lam * v).collect()).unwrap();
        let (a, b) = (energy(&f, &ex), energy(&fl, &ex));
        assert!((b.dirichlet / a.dirichlet - lam.powf(4.0)).abs() < 1e-12 * lam.powf(4.0));
        assert!((b.potential / a.potential - lam.powf(5.0)).abs() < 1e-12 * lam.powf(5.0));
        assert_eq!(a.total, a.dirichlet - a.potential);
    }

    #[test]
    fn tall_narrow_bump_has_negative_energy() {
        let ex = e(2.0, 3.0, -1.0, 3);
        let g = grid(3, 1.0, 400);
        let shape = RadialField::from_fn(g.clone(), |r| (1.0 - (r / 0.3).powi(2)).max(0.0).powi(2)).unwrap();
        let mut amp = 1.0;
        loop {
            let f = RadialField::new(g.clone(), shape.values().iter().map(|v| amp * v).collect()).unwrap();
            if energy(&f, &ex).total < 0.0 {
                break;
            }
            amp *= 2.0;
            assert!(amp < 1e12);
        }
        // Crossover amplitude is (dirichlet / potential)^{1/(p-m)} of the shape.
        let r = energy(&shape, &ex);
        assert!(amp >= r.dirichlet / r.potential);
    }

    #[test]
    fn rate_fits_on_exact_data() {
        let pw: Vec<(f64, f64)> = (1..50).map(|i| (f64::from(i) * 0.3, 3.0 * (f64::from(i) * 0.3).powi(2))).collect();
        let f = rate_fit(&pw, RateModel::PowerLaw, (0.0, 100.0)).unwrap();
        assert!((f.fitted - 2.0).abs() < 1e-10 && (f.r_squared - 1.0).abs() < 1e-12);
        let ex: Vec<(f64, f64)> = (0..50).map(|i| (f64::from(i) * 0.1, (0.7 * f64::from(i) * 0.1).exp())).collect();
        let f = rate_fit(&ex, RateModel::Exponential, (0.0, 100.0)).unwrap();
        assert!((f.fitted - 0.7).abs() < 1e-10 && f.verdict().is_some());
        assert!(matches!(rate_fit(&ex, RateModel::Exponential, (100.0, 200.0)), Err(DiagError::EmptyWindow { .. })));
        let noisy: Vec<(f64, f64)> = (0..50).map(|i| (f64::from(i), if i % 2 == 0 { 1.0 } else { 5.0 })).collect();
        assert!(rate_fit(&noisy, RateModel::Exponential, (0.0, 100.0)).unwrap().verdict().is_none());
    }

    #[test]
    fn barenblatt_decay_exponent() {
        let b = crate::solver::Barenblatt::new(1, 2.0, 1.0);
        let s: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let t = 10f64.powf(f64::from(i) / 20.0);
                (t, b.sup(t))
            })
            .collect();
        let f = rate_fit(&s, RateModel::PowerLaw, (1.0, 100.0)).unwrap();
        assert!((f.fitted + 1.0 / 3.0).abs() < 0.02 / 3.0);
    }

    #[test]
    fn power_gap_properties() {
        for &(m, p, tau) in &[(2.0, 1.5, 1.0), (1.0, 4.0, 2.0), (3.3, 1.0, 0.5), (4.0, 2.5, 0.0)] {
            assert!(power_gap_exponent_sum(m, p, tau).abs() < 1e-12);
            for &(x, y) in &[(0.3, 2.0), (5.0, 1e-3), (7.0, 7.5)] {
                let a = power_gap_ratio(m, p, tau, x, y);
                let b = power_gap_ratio(m, p, tau, 13.0 * x, 13.0 * y);
                assert!((a - b).abs() < 1e-12 * a.max(1.0));
                let d = power_gap_ratio_direct(m, p, tau, x, y);
                assert!((a - d).abs() < 1e-10 * a.max(1.0), "{a} vs {d}");
            }
        }
        // p = 1, τ = 0: the ratio is identically 1.
        for &(x, y) in &[(0.1, 3.0), (1e-5, 1e5)] {
            assert!((power_gap_ratio(2.0, 1.0, 0.0, x, y) - 1.0).abs() < 1e-12);
        }
        let s = power_gap_test(2.0, 1.5, 1.0, 10_000, 7);
        assert!(s.is_finite() && s > 0.0);
    }

    #[test]
    fn theta_sums_to_one() {
        let ex = e(2.0, 3.0, -1.0, 3);
        for r in [2.5, 3.0, 10.0] {
            let t = theta_exponents(&ex, r).unwrap();
            assert!(t.theta > 0.0 && t.theta < 1.0);
            assert!((t.theta + t.one_minus_theta - 1.0).abs() < 1e-12);
            assert!((t.theta + t.one_minus_theta_uncorrected - 1.0).abs() > 1e-3);
        }
        // In one dimension the two forms coincide.
        let one = e(2.0, 4.0, -0.5, 1);
        let t = theta_exponents(&one, one.r0() + 1.0).unwrap();
        assert!((t.one_minus_theta - t.one_minus_theta_uncorrected).abs() < 1e-15);
    }

    #[test]
    fn ckn_ratio_invariances() {
        let ex = e(2.0, 3.0, -1.0, 3);
        let x = interp_exponents(&ex, ex.r0(), ex.r0() + 0.5).unwrap();
        let g = grid(3, 2.0, 400);
        let z = RadialField::from_fn(g.clone(), |r| (1.0 - (r / 2.0).powi(2)).max(0.0).powi(3)).unwrap();
        assert_eq!(ckn_ratio(&x.ckn, &RadialField::zeros(g.clone())).unwrap(), 0.0);
        let base = ckn_ratio(&x.ckn, &z).unwrap();
        let scaled = RadialField::new(g.clone(), z.values().iter().map(|v| 4.5 * v).collect()).unwrap();
        assert!((ckn_ratio(&x.ckn, &scaled).unwrap() / base - 1.0).abs() < 1e-12);
        // Dilating grid and trial together.
        let g2 = grid(3, 7.0, 400);
        let z2 = RadialField::from_fn(g2, |r| (1.0 - (r / 7.0).powi(2)).max(0.0).powi(3)).unwrap();
        assert!((ckn_ratio(&x.ckn, &z2).unwrap() / base - 1.0).abs() < 1e-10);
        // The supremum grows with the family.
        let small = ckn_lambda_lower(&x.ckn, 3, 2, &[1.0], 400).unwrap();
        let large = ckn_lambda_lower(&x.ckn, 3, 6, &[1.0], 400).unwrap();
        assert!(large >= small && small >= base.min(small));
        let bad = CknParams { a: 0.5, ..x.ckn };
        assert!(matches!(ckn_ratio(&bad, &z), Err(DiagError::ConditionsFail(_))));
    }

    #[test]
    fn c0_is_positive_and_decreasing_in_lambda() {
        let ex = e(2.0, 3.0, -1.0, 3);
        assert!(c0_formula(&ex, 1.0) > c0_formula(&ex, 2.0));
        assert!(c0_formula(&ex, 2.0) > 0.0);
    }

    #[test]
    fn energy_monotone_helper() {
        assert!(energy_nonincreasing(&[3.0, 2.0, 2.0, -1.0], 0.0));
        assert!(!energy_nonincreasing(&[3.0, 2.0, 2.5], 1e-3));
    }
}
