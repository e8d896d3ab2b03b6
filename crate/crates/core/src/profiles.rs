//! Self-similar profiles by shooting.
//!
//! Forward, backward and exponential profiles all satisfy
//!
//! ```text
//! (f^m)'' + (N-1)/y (f^m)' + y^σ f^p - a f + b y f' = 0
//! ```
//!
//! with `(a, b)` equal to `(α*, β*)`, `(α, β)` or `(α*, (m-1)α*/2)`.
//! The Kaplan test function solves
//!
//! ```text
//! v'' + (N-1)/y v' = v^{1/m}/(m-1) - y^σ v.
//! ```
//!
//! Integration runs in the flux variables `(g, g')` with `g = f^m`, starting
//! from the local expansion at `y_0 > 0`. A trajectory either reaches `g = 0`
//! with negative flux (`Crossing`) or reaches zero flux with `g > 0`
//! (`Turning`); the compactly supported profile sits on the boundary between
//! the two and is located by bisection.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::radial::{laplacian, pow, RadialError, RadialField, RadialGrid};
use crate::regimes::{derive, subsolution_constants, ExponentTriple, RegimeError};

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("no sign change of the shooting outcome in [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("{kind} profile requested but {reason}")]
    RegimeMismatch { kind: ProfileKind, reason: String },
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Radial(#[from] RadialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// `t^{α*} f(|x| t^{-β*})`, `p < p_G`.
    Forward,
    /// `(T-t)^{-α} f(|x| (T-t)^β)`, `p_G < p < m`.
    Backward,
    /// `e^{α* t} f(|x| e^{-β* t})`, `p = p_G`.
    Exponential,
    /// Stationary test function for `p = m`.
    Kaplan,
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for ProfileKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "forward" => Ok(Self::Forward),
            "backward" => Ok(Self::Backward),
            "exponential" => Ok(Self::Exponential),
            "kaplan" => Ok(Self::Kaplan),
            _ => Err(format!("unknown profile kind `{s}`")),
        }
    }
}

/// A shot profile sampled on `[0, ϱ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub kind: ProfileKind,
    pub exponents: ExponentTriple,
    pub y: Vec<f64>,
    pub f: Vec<f64>,
    /// `(f^m)'` for self-similar kinds, `v'` for Kaplan.
    pub flux: Vec<f64>,
    pub support_radius: f64,
    /// `f(0)`; fixed to 1 for the exponential kind.
    pub amplitude: f64,
    /// Time exponents `(a, b)` the profile was shot with (zero for Kaplan).
    pub alpha: f64,
    pub beta: f64,
    /// Relative defect in the contact conditions at `ϱ`.
    pub residual: f64,
    /// Final bisection bracket of the shooting parameter.
    pub bracket: (f64, f64),
}

impl Profile {
    pub fn max(&self) -> f64 {
        self.f.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// Linear interpolation of `f`, zero beyond the support.
    pub fn value(&self, y: f64) -> f64 {
        if y >= self.support_radius || y < 0.0 {
            return 0.0;
        }
        let i = self.y.partition_point(|&s| s <= y);
        if i == 0 {
            return self.f[0];
        }
        if i >= self.y.len() {
            return *self.f.last().unwrap();
        }
        let (y0, y1) = (self.y[i - 1], self.y[i]);
        let w = (y - y0) / (y1 - y0);
        self.f[i - 1] * (1.0 - w) + self.f[i] * w
    }

    /// Cell averages of the profile on `grid`, using 8 midpoint samples per cell.
    pub fn sample(&self, grid: Arc<RadialGrid>) -> Result<RadialField, RadialError> {
        let e = grid.edges();
        let vals = (0..grid.n_cells())
            .map(|i| {
                let (a, b) = (e[i], e[i + 1]);
                let k = 8;
                (0..k).map(|j| self.value(a + (j as f64 + 0.5) * (b - a) / k as f64)).sum::<f64>() / k as f64
            })
            .collect();
        RadialField::new(grid, vals)
    }

    /// CSV with columns `y,f,flux` under a `# key=value` header line.
    pub fn write_csv(&self, out: &mut impl Write, extra_header: &str) -> io::Result<()> {
        let e = &self.exponents;
        writeln!(
            out,
            "# kind={} m={} p={} sigma={} dim={} shoot_param={:.17e} alpha={:.17e} beta={:.17e} rho={:.17e} residual={:.6e}{}",
            self.kind,
            e.m(),
            e.p(),
            e.sigma(),
            e.dim(),
            self.shoot_param(),
            self.alpha,
            self.beta,
            self.support_radius,
            self.residual,
            extra_header
        )?;
        writeln!(out, "y,f,flux")?;
        for ((y, f), q) in self.y.iter().zip(&self.f).zip(&self.flux) {
            writeln!(out, "{y:.17e},{f:.17e},{q:.17e}")?;
        }
        Ok(())
    }

    /// The parameter that was bisected: `α*` for the exponential kind, `f(0)` otherwise.
    pub fn shoot_param(&self) -> f64 {
        if self.kind == ProfileKind::Exponential {
            self.alpha
        } else {
            self.amplitude
        }
    }
}

/// Right-hand side of the first-order system in `(g, g')`.
///
/// For the self-similar kinds `g = f^m` and `(a, b)` are the time exponents;
/// for Kaplan `g = v` and `(a, b)` are ignored. Returns `None` when `g < 0`.
pub fn profile_ode_rhs(
    kind: ProfileKind,
    e: &ExponentTriple,
    a: f64,
    b: f64,
    y: f64,
    g: f64,
    flux: f64,
) -> Option<[f64; 2]> {
    if g < 0.0 || !(y > 0.0) {
        return None;
    }
    let (m, p, s, n) = (e.m(), e.p(), e.sigma(), e.n());
    let ys = y.powf(s);
    let d2 = match kind {
        ProfileKind::Kaplan => -(n - 1.0) / y * flux + pow(g, 1.0 / m) / (m - 1.0) - ys * g,
        _ => {
            if g == 0.0 {
                if flux != 0.0 {
                    return None;
                }
                -(n - 1.0) / y * flux
            } else {
                let f = pow(g, 1.0 / m);
                let df = flux / (m * g / f);
                -(n - 1.0) / y * flux - ys * pow(f, p) + a * f - b * y * df
            }
        }
    };
    Some([flux, d2])
}

/// How a trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// `g` reached zero at `y` with flux `flux < 0`.
    Crossing { y: f64, flux: f64 },
    /// Flux reached zero at `y` with `g > 0`.
    Turning { y: f64, g: f64 },
    /// Neither happened before the integration limit.
    Unresolved,
}

impl Outcome {
    fn sign(&self) -> i8 {
        match self {
            Outcome::Crossing { .. } => 1,
            Outcome::Turning { .. } => -1,
            Outcome::Unresolved => 0,
        }
    }
}

/// Tolerances and brackets for [`shoot`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootSearch {
    pub lo: f64,
    pub hi: f64,
    pub scan_points: usize,
    pub ode_rtol: f64,
    /// Relative width at which bisection stops.
    pub bisect_rtol: f64,
    /// Number of samples in the returned profile.
    pub samples: usize,
    pub y_limit: f64,
}

impl Default for ShootSearch {
    fn default() -> Self {
        Self { lo: 1e-4, hi: 1e4, scan_points: 97, ode_rtol: 1e-11, bisect_rtol: 1e-15, samples: 4000, y_limit: 1e6 }
    }
}

struct Trajectory {
    y: Vec<f64>,
    g: Vec<f64>,
    q: Vec<f64>,
    outcome: Outcome,
}

/// Problem data for one trajectory: kind, exponents and the time exponents.
#[derive(Clone, Copy)]
struct Ode {
    kind: ProfileKind,
    e: ExponentTriple,
    a: f64,
    b: f64,
}

impl Ode {
    fn rhs(&self, y: f64, s: [f64; 2]) -> Option<[f64; 2]> {
        profile_ode_rhs(self.kind, &self.e, self.a, self.b, y, s[0], s[1])
    }

    /// Local expansion at small `y` for `f(0) = f0` (or `v(0) = f0`).
    fn start(&self, f0: f64, y0: f64) -> [f64; 2] {
        let (m, p, s, n) = (self.e.m(), self.e.p(), self.e.sigma(), self.e.n());
        let k = (s + 2.0) * (s + n);
        let (g0, c, d) = match self.kind {
            ProfileKind::Kaplan => (f0, -f0 / k, pow(f0, 1.0 / m) / ((m - 1.0) * 2.0 * n)),
            _ => (pow(f0, m), -pow(f0, p) / k, self.a * f0 / (2.0 * n)),
        };
        [g0 + c * y0.powf(s + 2.0) + d * y0 * y0, c * (s + 2.0) * y0.powf(s + 1.0) + 2.0 * d * y0]
    }

    /// Adaptive Dormand–Prince integration from the origin expansion.
    fn integrate(&self, f0: f64, rtol: f64, y_limit: f64, h_max: f64, record: bool) -> Trajectory {
        let scale = self.length_scale(f0);
        let mut y = 1e-6 * scale;
        let mut s = self.start(f0, y);
        let g_ref = s[0];
        let mut tr = Trajectory { y: Vec::new(), g: Vec::new(), q: Vec::new(), outcome: Outcome::Unresolved };
        if record {
            tr.y.push(0.0);
            tr.g.push(self.start(f0, 0.0)[0]);
            tr.q.push(0.0);
            tr.y.push(y);
            tr.g.push(s[0]);
            tr.q.push(s[1]);
        }
        let mut h = (1e-3 * scale).min(h_max);
        let mut seen_negative = s[1] < 0.0;
        let atol = 1e-14 * g_ref.max(1e-300);
        let mut qmax = s[1].abs();
        for _ in 0..500_000 {
            if y > y_limit {
                break;
            }
            if h < 1e-14 * y {
                tr.outcome = Outcome::Crossing { y, flux: s[1] };
                break;
            }
            match dp45(|yy, ss| self.rhs(yy, ss), y, s, h) {
                Some((next, err)) if next[0] >= 0.0 => {
                    let sc0 = atol + rtol * s[0].abs().max(next[0].abs());
                    let sc1 = rtol * (qmax + atol).max(next[1].abs());
                    let en = ((err[0] / sc0).powi(2) + (err[1] / sc1).powi(2)).sqrt() / 2f64.sqrt();
                    if en <= 1.0 {
                        y += h;
                        s = next;
                        qmax = qmax.max(s[1].abs());
                        if record {
                            tr.y.push(y);
                            tr.g.push(s[0]);
                            tr.q.push(s[1]);
                        }
                        if s[1] < 0.0 {
                            seen_negative = true;
                            if self.relaxes_to_turning(y, s) {
                                tr.outcome = Outcome::Turning { y, g: s[0] };
                                break;
                            }
                        } else if seen_negative {
                            tr.outcome = Outcome::Turning { y, g: s[0] };
                            break;
                        }
                        // Below roundoff of g(0) the contact point is reached.
                        if s[0] <= 1e-14 * g_ref {
                            tr.outcome = Outcome::Crossing { y, flux: s[1] };
                            break;
                        }
                        let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                        h = (h * fac).min(h_max);
                    } else {
                        h *= (0.9 * en.powf(-0.25)).clamp(0.1, 0.5);
                    }
                }
                _ => h *= 0.5,
            }
        }
        tr
    }

    /// Near `g = 0` the drift term `b y f'` relaxes the flux towards a
    /// positive value on the scale `m f^{m-1}/(b y)`. When that is much
    /// shorter than the distance to `g = 0` and the relaxed flux is
    /// positive, the trajectory turns; integrating this explicitly is stiff.
    fn relaxes_to_turning(&self, y: f64, s: [f64; 2]) -> bool {
        if self.kind == ProfileKind::Kaplan || !(self.b > 0.0) {
            return false;
        }
        let (m, p) = (self.e.m(), self.e.p());
        let f = pow(s[0], 1.0 / m);
        let relax = self.b * y * f / (m * s[1].abs());
        relax > 1e3 && self.a * f > y.powf(self.e.sigma()) * pow(f, p)
    }

    /// Natural length scale of a trajectory started at amplitude `f0`.
    fn length_scale(&self, f0: f64) -> f64 {
        let (m, p, s) = (self.e.m(), self.e.p(), self.e.sigma());
        // Balance of diffusion and source: f0^m / y² ~ y^σ f0^p.
        let src = match self.kind {
            ProfileKind::Kaplan => 1.0,
            _ => f0.powf((m - p) / (s + 2.0)),
        };
        let abs = match self.kind {
            ProfileKind::Kaplan => 1.0,
            _ if self.a > 0.0 => (f0.powf(m - 1.0) / self.a).sqrt(),
            _ => f64::INFINITY,
        };
        src.min(abs).max(1e-12)
    }
}

const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// One Dormand–Prince 5(4) step; `None` if a stage leaves the domain.
fn dp45(f: impl Fn(f64, [f64; 2]) -> Option<[f64; 2]>, y: f64, s: [f64; 2], h: f64) -> Option<([f64; 2], [f64; 2])> {
    let mut k = [[0.0; 2]; 7];
    k[0] = f(y, s)?;
    for st in 0..6 {
        let mut x = s;
        for (j, kj) in k.iter().enumerate().take(st + 1) {
            x[0] += h * DP_A[st][j] * kj[0];
            x[1] += h * DP_A[st][j] * kj[1];
        }
        k[st + 1] = f(y + DP_C[st] * h, x)?;
    }
    let mut next = s;
    let mut err = [0.0; 2];
    for j in 0..7 {
        if j < 6 {
            next[0] += h * DP_A[5][j] * k[j][0];
            next[1] += h * DP_A[5][j] * k[j][1];
        }
        err[0] += h * DP_E[j] * k[j][0];
        err[1] += h * DP_E[j] * k[j][1];
    }
    Some((next, err))
}

fn kind_exponents(kind: ProfileKind, e: &ExponentTriple) -> Result<(f64, f64), ProfileError> {
    let d = derive(e);
    let mismatch = |reason: String| ProfileError::RegimeMismatch { kind, reason };
    let on_pg = d.alpha.is_none();
    match kind {
        ProfileKind::Forward => match (d.alpha_star, d.beta_star) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(mismatch(format!("p = {} is not below p_G = {}", e.p(), d.p_g))),
        },
        ProfileKind::Backward => match (d.alpha, d.beta) {
            (Some(a), Some(b)) if e.p() > d.p_g && e.p() < e.m() => Ok((a, b)),
            _ => Err(mismatch(format!("p = {} is not in (p_G, m) = ({}, {})", e.p(), d.p_g, e.m()))),
        },
        ProfileKind::Exponential if on_pg => Ok((f64::NAN, f64::NAN)),
        ProfileKind::Exponential => Err(mismatch(format!("p = {} differs from p_G = {}", e.p(), d.p_g))),
        ProfileKind::Kaplan if (e.p() - e.m()).abs() <= 1e-12 * e.m() => Ok((0.0, 0.0)),
        ProfileKind::Kaplan => Err(mismatch(format!("p = {} differs from m = {}", e.p(), e.m()))),
    }
}

/// Shoots the profile of the given kind.
///
/// The bisection parameter is `f(0)` except for the exponential kind, where
/// `f(0) = 1` is fixed (the equation is invariant under `f -> λf`,
/// `y -> λ^{(m-1)/2} y` at `p = p_G`) and `α*` is bisected with
/// `β* = (m-1)α*/2`.
pub fn shoot(kind: ProfileKind, e: &ExponentTriple, search: &ShootSearch) -> Result<Profile, ProfileError> {
    let (a, b) = kind_exponents(kind, e)?;
    let m = e.m();
    let ode_for = |x: f64| -> (Ode, f64) {
        if kind == ProfileKind::Exponential {
            (Ode { kind, e: *e, a: x, b: 0.5 * (m - 1.0) * x }, 1.0)
        } else {
            (Ode { kind, e: *e, a, b }, x)
        }
    };
    let classify = |x: f64, h_max: f64| -> Outcome {
        let (ode, f0) = ode_for(x);
        ode.integrate(f0, search.ode_rtol, search.y_limit, h_max, false).outcome
    };

    let n = search.scan_points.max(2);
    let ratio = (search.hi / search.lo).ln();
    let xs: Vec<f64> = (0..n).map(|i| search.lo * (ratio * i as f64 / (n - 1) as f64).exp()).collect();
    let outcomes: Vec<Outcome> = xs.par_iter().map(|&x| classify(x, f64::INFINITY)).collect();
    let i = outcomes
        .windows(2)
        .position(|w| w[0].sign() * w[1].sign() == -1)
        .ok_or(ProfileError::NoSignChange { lo: search.lo, hi: search.hi })?;
    let (mut lo, mut hi) = (xs[i], xs[i + 1]);
    // Refinement uses a step cap tied to the support so that the sampled
    // trajectory below is the one that was bisected.
    let rho_scan = match (outcomes[i], outcomes[i + 1]) {
        (Outcome::Crossing { y, .. }, _) | (_, Outcome::Crossing { y, .. }) => y,
        _ => unreachable!("a sign change involves a crossing"),
    };
    let h_max = rho_scan / search.samples.max(10) as f64;
    let s_lo = classify(lo, h_max).sign();
    let s_hi = classify(hi, h_max).sign();
    if s_lo * s_hi != -1 {
        return Err(ProfileError::NoSignChange { lo, hi });
    }
    for _ in 0..200 {
        if hi / lo - 1.0 <= search.bisect_rtol {
            break;
        }
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let s = classify(mid, h_max).sign();
        if s == 0 {
            break;
        }
        if s == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (x_cross, x_turn) = if s_lo == 1 { (lo, hi) } else { (hi, lo) };

    let (ode, f0) = ode_for(x_cross);
    let tr = ode.integrate(f0, search.ode_rtol, search.y_limit, h_max, true);
    let Outcome::Crossing { y: rho, flux: q_edge } = tr.outcome else {
        return Err(ProfileError::NoSignChange { lo, hi });
    };
    let (ode_t, f0_t) = ode_for(x_turn);
    let g_turn = match ode_t.integrate(f0_t, search.ode_rtol, search.y_limit, h_max, false).outcome {
        Outcome::Turning { g, .. } => g,
        _ => 0.0,
    };
    let q_scale = tr.q.iter().fold(0.0f64, |acc, q| acc.max(q.abs()));
    let g_scale = tr.g[0];
    let residual = (q_edge.abs() / q_scale).max(g_turn / g_scale);

    let f =
        tr.g.iter()
            .map(|&g| match kind {
                ProfileKind::Kaplan => g,
                _ => pow(g, 1.0 / m),
            })
            .collect();
    Ok(Profile {
        kind,
        exponents: *e,
        y: tr.y,
        f,
        flux: tr.q,
        support_radius: rho,
        amplitude: f0,
        alpha: ode.a,
        beta: ode.b,
        residual,
        bracket: (lo, hi),
    })
}

/// Samples the self-similar solution built from `profile` at time `t`.
///
/// For the backward kind `t` is the time left before blow-up, `T - t`.
/// The Kaplan function is stationary and `t` is ignored.
pub fn evaluate_selfsimilar(profile: &Profile, t: f64, grid: Arc<RadialGrid>) -> Result<RadialField, RadialError> {
    let (amp, stretch) = match profile.kind {
        ProfileKind::Forward => (t.powf(profile.alpha), t.powf(-profile.beta)),
        ProfileKind::Backward => (t.powf(-profile.alpha), t.powf(profile.beta)),
        ProfileKind::Exponential => ((profile.alpha * t).exp(), (-profile.beta * t).exp()),
        ProfileKind::Kaplan => (1.0, 1.0),
    };
    let scaled = Profile {
        y: profile.y.iter().map(|y| y / stretch).collect(),
        f: profile.f.iter().map(|f| f * amp).collect(),
        support_radius: profile.support_radius / stretch,
        ..profile.clone()
    };
    scaled.sample(grid)
}

/// `S(t, r) = (T-t)^{-α} A (1 - r²(T-t)^{2β}/a²)_+^{1/(m-1)}` at cell centres.
pub fn subsolution_field(
    e: &ExponentTriple,
    amplitude: f64,
    blowup_time: f64,
    t: f64,
    grid: Arc<RadialGrid>,
) -> Result<RadialField, ProfileError> {
    let c = subsolution_constants(e, amplitude)?;
    if !(t >= 0.0 && t < blowup_time) {
        return Err(ProfileError::Regime(RegimeError::WrongRegime(format!(
            "need 0 <= t < T, got t = {t}, T = {blowup_time}"
        ))));
    }
    let tau = blowup_time - t;
    let amp = amplitude * tau.powf(-c.alpha);
    let stretch = tau.powf(c.beta) / c.a;
    let k = 1.0 / (e.m() - 1.0);
    Ok(RadialField::from_fn(grid, |r| {
        let z = 1.0 - (r * stretch).powi(2);
        if z <= 0.0 {
            0.0
        } else {
            amp * z.powf(k)
        }
    })?)
}

/// Discrete `∂_t S - Δ S^m - |x|^σ S^p` for the subsolution at time `t`,
/// with a central time difference of step `dt`, together with `‖∂_t S‖_∞`.
pub fn subsolution_residual(
    e: &ExponentTriple,
    amplitude: f64,
    blowup_time: f64,
    t: f64,
    dt: f64,
    grid: Arc<RadialGrid>,
) -> Result<(Vec<f64>, f64), ProfileError> {
    let s = subsolution_field(e, amplitude, blowup_time, t, grid.clone())?;
    let sp = subsolution_field(e, amplitude, blowup_time, t + dt, grid.clone())?;
    let sm = subsolution_field(e, amplitude, blowup_time, t - dt, grid.clone())?;
    let g: Vec<f64> = s.values().iter().map(|&v| pow(v, e.m())).collect();
    let lap = laplacian(&grid, &g);
    let w = grid.singular_weights(e.sigma())?;
    let mut dt_max = 0.0f64;
    let res = (0..grid.n_cells())
        .map(|i| {
            let st = (sp.values()[i] - sm.values()[i]) / (2.0 * dt);
            dt_max = dt_max.max(st.abs());
            st - lap[i] - w[i] / grid.volumes()[i] * pow(s.values()[i], e.p())
        })
        .collect();
    Ok((res, dt_max))
}

/// Relative residual of the Kaplan equation by central differences on the
/// stored samples, over `[lo ϱ, hi ϱ]`.
pub fn kaplan_residual(profile: &Profile, lo: f64, hi: f64) -> f64 {
    let e = &profile.exponents;
    let (m, s, n) = (e.m(), e.sigma(), e.n());
    let (a, b) = (lo * profile.support_radius, hi * profile.support_radius);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 1..profile.y.len().saturating_sub(1) {
        let (y0, y1, y2) = (profile.y[i - 1], profile.y[i], profile.y[i + 1]);
        if y1 < a || y1 > b {
            continue;
        }
        let (v0, v1, v2) = (profile.f[i - 1], profile.f[i], profile.f[i + 1]);
        let (h0, h1) = (y1 - y0, y2 - y1);
        let d1 = (v2 - v0) / (h0 + h1);
        let d2 = 2.0 * (h0 * v2 - (h0 + h1) * v1 + h1 * v0) / (h0 * h1 * (h0 + h1));
        let absorb = pow(v1, 1.0 / m) / (m - 1.0);
        let r = d2 + (n - 1.0) / y1 * d1 - absorb + y1.powf(s) * v1;
        worst = worst.max(r.abs());
        scale = scale.max(absorb).max(y1.powf(s) * v1);
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(m: f64, p: f64, s: f64, n: u32) -> ExponentTriple {
        ExponentTriple::new(m, p, s, n).unwrap()
    }

    #[test]
    fn zero_is_stationary_for_self_similar_kinds() {
        let ex = e(2.0, 1.2, -1.0, 3);
        assert_eq!(profile_ode_rhs(ProfileKind::Forward, &ex, 5.0 / 3.0, 4.0 / 3.0, 0.7, 0.0, 0.0), Some([0.0, 0.0]));
    }

    #[test]
    fn kaplan_dominant_balance() {
        let ex = e(2.0, 2.0, -1.0, 3);
        let y = 1e-3;
        let v = 1e6;
        let d = profile_ode_rhs(ProfileKind::Kaplan, &ex, 0.0, 0.0, y, v, 0.0).unwrap();
        assert!(d[1] < 0.0);
        assert!((d[1] / (-y.powf(-1.0) * v) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn matched_time_exponents_forward_example() {
        let d = derive(&e(2.0, 1.2, -1.0, 3));
        let (a, b) = (d.alpha_star.unwrap(), d.beta_star.unwrap());
        assert!((a - 5.0 / 3.0).abs() < 1e-12 && (b - 4.0 / 3.0).abs() < 1e-12);
        let lhs = a - 1.0;
        assert!((a * 2.0 - 2.0 * b - lhs).abs() < 1e-12);
        assert!((a * 1.2 - b - lhs).abs() < 1e-12);
    }

    #[test]
    fn regime_mismatch() {
        let err = shoot(ProfileKind::Forward, &e(2.0, 1.8, -1.0, 3), &ShootSearch::default());
        assert!(matches!(err, Err(ProfileError::RegimeMismatch { .. })));
        assert!(matches!(
            shoot(ProfileKind::Kaplan, &e(2.0, 1.8, -1.0, 3), &ShootSearch::default()),
            Err(ProfileError::RegimeMismatch { .. })
        ));
        assert!(matches!(
            shoot(ProfileKind::Exponential, &e(2.0, 1.8, -1.0, 3), &ShootSearch::default()),
            Err(ProfileError::RegimeMismatch { .. })
        ));
    }

    #[test]
    fn forward_profile_is_compactly_supported() {
        let ex = e(2.0, 1.2, -1.0, 3);
        let pr = shoot(ProfileKind::Forward, &ex, &ShootSearch::default()).unwrap();
        assert!(pr.residual < 1e-6, "residual {}", pr.residual);
        assert!(pr.support_radius.is_finite() && pr.support_radius > 0.0);
        assert!(pr.f.iter().all(|&f| f >= 0.0));
        // Flux behaves like y^{σ+1} = const near the origin.
        let lim = pr.flux[1] / pr.y[1].powf(0.0);
        let c = -pr.amplitude.powf(1.2) / (1.0 * 2.0);
        assert!((lim / c - 1.0).abs() < 1e-3);
        // Edge slope for m = 2 is β ϱ / 2.
        let rho = pr.support_radius;
        let delta = 1e-3 * rho;
        let slope = pr.value(rho - delta) / delta;
        assert!((slope / (pr.beta * rho / 2.0) - 1.0).abs() < 1e-2, "slope {slope}");
    }

    #[test]
    fn selfsimilar_scalings() {
        let ex = e(2.0, 1.2, -1.0, 3);
        let pr = shoot(ProfileKind::Forward, &ex, &ShootSearch::default()).unwrap();
        let rho = pr.support_radius;
        let grid = Arc::new(RadialGrid::uniform(3, 4.0 * rho, 800).unwrap());
        let one = evaluate_selfsimilar(&pr, 1.0, grid.clone()).unwrap();
        let direct = pr.sample(grid.clone()).unwrap();
        assert_eq!(one.values(), direct.values());
        // A grid stretched by t^{β*} carries the same samples times t^{α*}.
        let t: f64 = 2.0;
        let stretched =
            Arc::new(RadialGrid::from_edges(3, grid.edges().iter().map(|r| r * t.powf(pr.beta)).collect()).unwrap());
        let u = evaluate_selfsimilar(&pr, t, stretched.clone()).unwrap();
        let amp = t.powf(pr.alpha);
        for (a, b) in u.values().iter().zip(direct.values()) {
            assert!((a - amp * b).abs() <= 1e-12 * amp * pr.max());
        }
        assert!(u.max() <= amp * pr.max() * (1.0 + 1e-12));
        let supp = rho * t.powf(pr.beta);
        assert!((u.support_radius(0.0) - supp).abs() <= stretched.min_width() * t.powf(pr.beta));
    }

    #[test]
    fn kaplan_profile_residual() {
        let ex = e(2.0, 2.0, -1.0, 3);
        let pr = shoot(ProfileKind::Kaplan, &ex, &ShootSearch::default()).unwrap();
        assert!(pr.f.iter().all(|&v| v >= 0.0));
        let r = kaplan_residual(&pr, 0.05, 0.95);
        assert!(r < 1e-5, "kaplan residual {r}");
    }

    #[test]
    fn exponential_exponents_are_slaved() {
        let ex = e(2.0, 1.5, -1.0, 3);
        let pr = shoot(ProfileKind::Exponential, &ex, &ShootSearch::default()).unwrap();
        assert!((2.0 * pr.beta / ((2.0 - 1.0) * pr.alpha) - 1.0).abs() < 1e-12);
        assert!(pr.alpha > 0.0 && pr.residual < 1e-4, "{} {}", pr.alpha, pr.residual);
    }

    #[test]
    fn subsolution_shape() {
        let ex = e(2.0, 1.8, -1.0, 3);
        let a_amp = 10.0 * subsolution_constants(&ex, 1.0).unwrap().a0;
        let c = subsolution_constants(&ex, a_amp).unwrap();
        assert!((c.a * c.a / (6.0 * a_amp) - 1.0).abs() < 1e-12);
        let t_b = 1.0;
        let grid = Arc::new(RadialGrid::uniform(3, 2.0 * c.a, 1000).unwrap());
        let s0 = subsolution_field(&ex, a_amp, t_b, 0.0, grid.clone()).unwrap();
        assert!((s0.values()[0] / a_amp - 1.0).abs() < 1e-3);
        let sup = subsolution_field(&ex, a_amp, t_b, 0.9, grid.clone()).unwrap().max();
        assert!(sup > s0.max() * 0.1f64.powf(-c.alpha) * 0.99);
        assert!((s0.support_radius(0.0) - c.a).abs() <= grid.min_width());
        assert!(subsolution_field(&ex, a_amp, t_b, 1.0, grid).is_err());
    }

    #[test]
    fn csv_header_carries_parameters() {
        let ex = e(2.0, 1.2, -1.0, 3);
        let pr = shoot(ProfileKind::Forward, &ex, &ShootSearch { samples: 50, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        pr.write_csv(&mut buf, "").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let head = text.lines().next().unwrap();
        assert!(head.contains("kind=Forward") && head.contains("rho=") && head.contains("residual="));
        assert_eq!(text.lines().nth(1), Some("y,f,flux"));
    }
}
