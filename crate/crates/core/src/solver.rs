//! Explicit time stepping of the η-regularized problem
//!
//! ```text
//! ∂_t u = Δu^m + (|x|² + η²)^{σ/2} u^p / (1 + η u^{p-1}),   u(0) = u_0 1_{B(0,1/η)}
//! ```
//!
//! on a radial grid. For fixed `η` the source is globally Lipschitz, so the
//! scheme is the porous medium equation plus a bounded perturbation; the
//! limit `η → 0` recovers the singular problem.
//!
//! Each step is forward Euler with
//!
//! ```text
//! dt = safety · min( Δr_min² / (2 N m max u^{m-1}),  1 / L(u) )
//! ```
//!
//! where `L(u)` is the largest source derivative over the current values.
//! For `safety <= 1` on uniform or mildly graded grids every update is a
//! nondecreasing function of the previous cell values, so ordered data stay
//! ordered. [`run_ensemble`] advances several problems with one shared `dt`
//! sequence, which makes that ordering exact up to rounding; η-families and
//! comparison runs are built on it.
//!
//! Blow-up is detected, not resolved: a run stops once `‖u‖_∞ >= M_stop`
//! and `dt <= dt_floor`.

use std::sync::Arc;

use thiserror::Error;

use crate::diagnostics;
use crate::radial::{pow, RadialError, RadialField, RadialGrid};
use crate::regimes::ExponentTriple;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("time step {dt} exceeds the stability bound {bound}")]
    UnstableStep { dt: f64, bound: f64 },
    #[error("support reached r_max = {r_max} at t = {t}; enlarge the domain")]
    DomainEscape { t: f64, r_max: f64 },
    #[error("step budget of {0} steps exhausted")]
    StepLimit(u64),
    #[error("non-finite value at t = {0}")]
    NonFinite(f64),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Radial(#[from] RadialError),
}

/// Which terms of the equation are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceMode {
    #[default]
    Full,
    /// Pure porous medium equation.
    DiffusionOnly,
    /// Pointwise ODE `u' = source(u)`.
    ReactionOnly,
}

/// One member of an η-regularized family.
#[derive(Debug, Clone)]
pub struct RegularizedProblem {
    exponents: ExponentTriple,
    eta: f64,
    initial: RadialField,
    mode: SourceMode,
    safety: f64,
    truncation_noop: bool,
}

impl RegularizedProblem {
    /// Builds the problem and zeroes `u_0` outside `B(0, 1/η)`.
    pub fn new(exponents: ExponentTriple, eta: f64, u0: RadialField) -> Result<Self, SolverError> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(SolverError::Invalid(format!("eta = {eta} must lie in (0, 1)")));
        }
        if u0.grid().dim() != exponents.dim() {
            return Err(SolverError::Invalid("grid dimension differs from N".into()));
        }
        let cut = 1.0 / eta;
        let truncation_noop = cut >= u0.grid().r_max();
        let initial = if truncation_noop {
            u0
        } else {
            let grid = u0.grid().clone();
            let vals = u0.values().iter().zip(grid.centers()).map(|(&u, &r)| if r > cut { 0.0 } else { u }).collect();
            RadialField::new(grid, vals)?
        };
        Ok(Self { exponents, eta, initial, mode: SourceMode::Full, safety: 0.9, truncation_noop })
    }

    pub fn with_mode(mut self, mode: SourceMode) -> Self {
        self.mode = mode;
        self
    }

    /// Sets the step safety factor in `(0, 1]`.
    pub fn with_safety(mut self, safety: f64) -> Result<Self, SolverError> {
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(SolverError::Invalid(format!("safety = {safety} must lie in (0, 1]")));
        }
        self.safety = safety;
        Ok(self)
    }

    pub fn exponents(&self) -> &ExponentTriple {
        &self.exponents
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn initial(&self) -> &RadialField {
        &self.initial
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.initial.grid()
    }

    pub fn mode(&self) -> SourceMode {
        self.mode
    }

    pub fn safety(&self) -> f64 {
        self.safety
    }

    /// True when `1/η >= r_max`, so the initial truncation changed nothing.
    pub fn truncation_noop(&self) -> bool {
        self.truncation_noop
    }
}

/// Precomputed operator for one problem.
#[derive(Debug, Clone)]
pub struct Scheme {
    grid: Arc<RadialGrid>,
    m: f64,
    p: f64,
    eta: f64,
    mode: SourceMode,
    safety: f64,
    weights: Vec<f64>,
    inv_vol: Vec<f64>,
    diff_scale: f64,
    lip_global: f64,
}

/// Source derivative `d/du [u^p/(1+ηu^{p-1})]` written in terms of `s = u^{p-1}`.
#[inline]
fn source_slope(s: f64, p: f64, eta: f64) -> f64 {
    let d = 1.0 + eta * s;
    s * (p + eta * s) / (d * d)
}

impl Scheme {
    pub fn new(prob: &RegularizedProblem) -> Result<Self, SolverError> {
        let grid = prob.grid().clone();
        let e = prob.exponents;
        let weights = grid.regularized_weight_averages(e.sigma(), prob.eta)?;
        let inv_vol = grid.volumes().iter().map(|v| 1.0 / v).collect();
        let h = grid.min_width();
        let w_max = weights.iter().fold(0.0f64, |a, &b| a.max(b));
        let p = e.p();
        let slope_sup = if p > 2.0 { (p * p / (4.0 * (p - 1.0))).max(1.0) } else { 1.0 };
        Ok(Self {
            m: e.m(),
            p,
            eta: prob.eta,
            mode: prob.mode,
            safety: prob.safety,
            weights,
            inv_vol,
            diff_scale: h * h / (2.0 * e.n() * e.m()),
            lip_global: w_max * slope_sup / prob.eta,
            grid,
        })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    /// Cell-averaged `(|x|²+η²)^{σ/2}`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Regularized source at cell `i`.
    #[inline]
    pub fn source(&self, i: usize, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        let s = pow(u, self.p - 1.0);
        self.weights[i] * u * s / (1.0 + self.eta * s)
    }

    /// Time derivative and the two step limits, in one pass over the support.
    fn evaluate(&self, u: &[f64], rhs: &mut [f64], g: &mut [f64]) -> StepLimits {
        let n = u.len();
        let active = u.iter().rposition(|&v| v > 0.0).map_or(0, |i| (i + 2).min(n));
        let mut umax = 0.0f64;
        let mut lip = 0.0f64;
        for i in 0..active {
            let v = u[i];
            umax = umax.max(v);
            g[i] = pow(v, self.m);
            rhs[i] = 0.0;
        }
        for r in rhs.iter_mut().skip(active) {
            *r = 0.0;
        }
        if self.mode != SourceMode::ReactionOnly {
            let t = self.grid.transmissibilities();
            for i in 1..active {
                let flux = t[i] * (g[i] - g[i - 1]);
                rhs[i - 1] += flux;
                rhs[i] -= flux;
            }
            for (r, iv) in rhs[..active].iter_mut().zip(&self.inv_vol) {
                *r *= iv;
            }
        }
        if self.mode != SourceMode::DiffusionOnly {
            for i in 0..active {
                let v = u[i];
                if v > 0.0 {
                    let s = pow(v, self.p - 1.0);
                    let w = self.weights[i];
                    rhs[i] += w * v * s / (1.0 + self.eta * s);
                    lip = lip.max(w * source_slope(s, self.p, self.eta));
                }
            }
        }
        StepLimits { umax, lip }
    }

    /// Largest stable step at safety 1.
    fn bound_from(&self, lim: StepLimits) -> f64 {
        let diff = if self.mode == SourceMode::ReactionOnly || lim.umax == 0.0 {
            f64::INFINITY
        } else {
            self.diff_scale / pow(lim.umax, self.m - 1.0)
        };
        let reac = match self.mode {
            SourceMode::DiffusionOnly => f64::INFINITY,
            _ if lim.lip > 0.0 => 1.0 / lim.lip,
            _ => 1.0 / self.lip_global,
        };
        diff.min(reac)
    }

    /// `safety · min(diffusion limit, 1 / Lipschitz bound)`.
    pub fn stable_dt(&self, u: &[f64]) -> f64 {
        let mut rhs = vec![0.0; u.len()];
        let mut g = vec![0.0; u.len()];
        let lim = self.evaluate(u, &mut rhs, &mut g);
        self.safety * self.bound_from(lim)
    }
}

#[derive(Debug, Clone, Copy)]
struct StepLimits {
    umax: f64,
    lip: f64,
}

/// Step size that [`step`] would accept for `state`, scaled by the problem's safety.
pub fn stable_dt(state: &RadialField, prob: &RegularizedProblem) -> Result<f64, SolverError> {
    Ok(Scheme::new(prob)?.stable_dt(state.values()))
}

/// One forward Euler step; negative values are clipped to zero.
pub fn step(state: &RadialField, prob: &RegularizedProblem, dt: f64) -> Result<RadialField, SolverError> {
    let scheme = Scheme::new(prob)?;
    let mut work = Workspace::new(state.values().len());
    let mut u = state.values().to_vec();
    scheme_step(&scheme, &mut u, dt, &mut work, true)?;
    Ok(RadialField::new(state.grid().clone(), u)?)
}

#[derive(Debug, Clone)]
struct Workspace {
    rhs: Vec<f64>,
    g: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self { rhs: vec![0.0; n], g: vec![0.0; n] }
    }
}

/// Advances `u` in place and returns the clipped mass.
fn scheme_step(s: &Scheme, u: &mut [f64], dt: f64, w: &mut Workspace, check: bool) -> Result<f64, SolverError> {
    let lim = s.evaluate(u, &mut w.rhs, &mut w.g);
    if check {
        let bound = s.bound_from(lim);
        if dt > bound * (1.0 + 1e-12) {
            return Err(SolverError::UnstableStep { dt, bound });
        }
    }
    Ok(apply(s, u, dt, &w.rhs))
}

fn apply(s: &Scheme, u: &mut [f64], dt: f64, rhs: &[f64]) -> f64 {
    let vol = s.grid.volumes();
    let mut clipped = 0.0;
    for i in 0..u.len() {
        let v = u[i] + dt * rhs[i];
        if v < 0.0 {
            clipped -= v * vol[i];
            u[i] = 0.0;
        } else {
            u[i] = v;
        }
    }
    clipped
}

/// Termination caps for [`run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caps {
    /// Blow-up cap on `‖u‖_∞`; `None` means `1e6 ‖u_0‖_∞`.
    pub m_stop: Option<f64>,
    /// Step floor; `None` means `1e-3` times the first step.
    pub dt_floor: Option<f64>,
    pub max_steps: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Self { m_stop: None, dt_floor: None, max_steps: 50_000_000 }
    }
}

/// Recording and termination options shared by all members of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub horizon: f64,
    pub caps: Caps,
    /// Times at which full fields are stored (the initial field is always stored).
    pub snapshot_times: Vec<f64>,
    /// A series row is written every this many steps, plus at snapshots and at the end.
    pub series_every: u64,
    /// Cells above `escape_rtol · ‖u‖_∞` in the last cell trigger `DomainEscape`.
    pub escape_rtol: f64,
}

impl RunOptions {
    pub fn new(horizon: f64) -> Self {
        Self { horizon, caps: Caps::default(), snapshot_times: Vec::new(), series_every: 50, escape_rtol: 1e-10 }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_caps(mut self, caps: Caps) -> Self {
        self.caps = caps;
        self
    }

    pub fn with_series_every(mut self, k: u64) -> Self {
        self.series_every = k.max(1);
        self
    }
}

/// Norms and energy at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub l1: f64,
    /// `‖u‖_{m+1}`.
    pub l_m1: f64,
    /// `‖u‖_{r_0+1}`, recorded only when `r_0 + 1 > 0`, i.e. `p > m`.
    pub l_r0: Option<f64>,
    pub linf: f64,
    pub energy: f64,
    /// Step that will be taken from this state (0 at the final row).
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    ReachedHorizon {
        t: f64,
    },
    BlowUpDetected {
        t_detect: f64,
        /// Zero of the affine fit of `‖u‖_∞^{-(p-1)}` over the last decade of growth.
        t_hat: Option<f64>,
    },
}

impl Verdict {
    pub fn is_blowup(&self) -> bool {
        matches!(self, Verdict::BlowUpDetected { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::ReachedHorizon { .. } => "ReachedHorizon",
            Verdict::BlowUpDetected { .. } => "BlowUpDetected",
        }
    }
}

/// Parameters a run was produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub exponents: ExponentTriple,
    pub eta: f64,
    pub mode: SourceMode,
    pub safety: f64,
    pub truncation_noop: bool,
    pub horizon: f64,
    pub m_stop: f64,
    pub dt_floor: f64,
    pub n_cells: usize,
    pub r_max: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub snapshots: Vec<(f64, RadialField)>,
    pub series: Vec<SeriesRow>,
    pub verdict: Verdict,
    pub config: RunRecord,
    pub steps: u64,
    /// Total mass removed by clipping negative values.
    pub clipped_mass: f64,
}

impl SimulationRun {
    pub fn final_field(&self) -> &RadialField {
        &self.snapshots.last().expect("initial snapshot always present").1
    }

    /// Snapshot recorded at exactly `t`, if any.
    pub fn snapshot_at(&self, t: f64) -> Option<&RadialField> {
        self.snapshots.iter().find(|(s, _)| *s == t).map(|(_, f)| f)
    }
}

/// Integrates one problem until the horizon or blow-up.
pub fn run(prob: &RegularizedProblem, opts: &RunOptions) -> Result<SimulationRun, SolverError> {
    Ok(run_ensemble(std::slice::from_ref(prob), opts)?.pop().expect("one member"))
}

/// Runs an η-family on a shared grid with a shared step sequence.
///
/// `etas` must be strictly decreasing in `(0, 1)`; runs come back in the
/// same order.
pub fn eta_family(
    e: &ExponentTriple,
    u0: &RadialField,
    etas: &[f64],
    opts: &RunOptions,
) -> Result<Vec<SimulationRun>, SolverError> {
    if etas.is_empty() || etas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(SolverError::Invalid("etas must be non-empty and strictly decreasing".into()));
    }
    let probs = etas.iter().map(|&eta| RegularizedProblem::new(*e, eta, u0.clone())).collect::<Result<Vec<_>, _>>()?;
    run_ensemble(&probs, opts)
}

struct Member<'a> {
    prob: &'a RegularizedProblem,
    scheme: Scheme,
    u: Vec<f64>,
    work: Workspace,
    lim: StepLimits,
    snapshots: Vec<(f64, RadialField)>,
    series: Vec<SeriesRow>,
    verdict: Option<Verdict>,
    m_stop: f64,
    dt_floor: f64,
    clipped: f64,
    steps: u64,
}

impl Member<'_> {
    fn row(&self, t: f64, dt: f64) -> SeriesRow {
        let f = RadialField::new(self.scheme.grid.clone(), self.u.clone()).expect("state stays non-negative");
        let e = self.prob.exponents;
        let r0 = e.r0();
        SeriesRow {
            t,
            l1: f.mass(),
            l_m1: f.lq_norm(e.m() + 1.0),
            l_r0: (r0 + 1.0 > 0.0).then(|| f.lq_norm(r0 + 1.0)),
            linf: f.max(),
            energy: diagnostics::energy(&f, &e).total,
            dt,
        }
    }

    fn snapshot(&mut self, t: f64) {
        let f = RadialField::new(self.scheme.grid.clone(), self.u.clone()).expect("state stays non-negative");
        self.snapshots.push((t, f));
    }

    fn escaped(&self, rtol: f64) -> bool {
        if self.scheme.mode == SourceMode::ReactionOnly {
            return false;
        }
        let last = *self.u.last().unwrap();
        last > 0.0 && last > rtol * self.lim.umax
    }
}

/// Advances several problems in lockstep with `dt = min` of their stable steps.
///
/// A member that detects blow-up is frozen; the others continue. All
/// problems must live on the same grid.
pub fn run_ensemble(probs: &[RegularizedProblem], opts: &RunOptions) -> Result<Vec<SimulationRun>, SolverError> {
    let Some(first) = probs.first() else {
        return Ok(Vec::new());
    };
    if !(opts.horizon > 0.0 && opts.horizon.is_finite()) {
        return Err(SolverError::Invalid(format!("horizon = {} must be positive", opts.horizon)));
    }
    let grid = first.grid().clone();
    if probs.iter().any(|p| p.grid() != &grid) {
        return Err(SolverError::Invalid("ensemble members must share one grid".into()));
    }
    let mut snaps: Vec<f64> = opts.snapshot_times.iter().copied().filter(|&t| t > 0.0 && t <= opts.horizon).collect();
    snaps.sort_by(f64::total_cmp);
    snaps.dedup();
    let n = grid.n_cells();

    let mut members = Vec::with_capacity(probs.len());
    for prob in probs {
        let scheme = Scheme::new(prob)?;
        let u = prob.initial.values().to_vec();
        let mut work = Workspace::new(n);
        let lim = scheme.evaluate(&u, &mut work.rhs, &mut work.g);
        let dt0 = scheme.safety * scheme.bound_from(lim);
        let m_stop = opts.caps.m_stop.unwrap_or(1e6 * prob.initial.max());
        let dt_floor = opts.caps.dt_floor.unwrap_or(1e-3 * dt0.min(opts.horizon));
        members.push(Member {
            prob,
            scheme,
            u,
            work,
            lim,
            snapshots: Vec::new(),
            series: Vec::new(),
            verdict: None,
            m_stop,
            dt_floor,
            clipped: 0.0,
            steps: 0,
        });
    }

    let mut t = 0.0f64;
    let mut next_snap = 0usize;
    let mut steps: u64 = 0;
    for mb in members.iter_mut() {
        mb.snapshot(0.0);
    }
    loop {
        // Shared step from the members still running; rhs is already evaluated.
        let mut dt = f64::INFINITY;
        for mb in members.iter().filter(|m| m.verdict.is_none()) {
            dt = dt.min(mb.scheme.safety * mb.scheme.bound_from(mb.lim));
        }
        if dt.is_infinite() {
            dt = opts.horizon - t;
        }
        for mb in members.iter_mut().filter(|m| m.verdict.is_none()) {
            if mb.escaped(opts.escape_rtol) {
                return Err(SolverError::DomainEscape { t, r_max: grid.r_max() });
            }
            if mb.lim.umax >= mb.m_stop && dt <= mb.dt_floor {
                let row = mb.row(t, dt);
                mb.series.push(row);
                mb.snapshot(t);
                let t_hat = blowup_time_from_linf(&mb.series, mb.prob.exponents.p());
                mb.verdict = Some(Verdict::BlowUpDetected { t_detect: t, t_hat });
            }
        }
        if members.iter().all(|m| m.verdict.is_some()) {
            break;
        }
        // Recompute dt if a member just froze.
        let mut dt = f64::INFINITY;
        for mb in members.iter().filter(|m| m.verdict.is_none()) {
            dt = dt.min(mb.scheme.safety * mb.scheme.bound_from(mb.lim));
        }
        let target = snaps.get(next_snap).copied().unwrap_or(opts.horizon);
        let mut hit = false;
        if t + dt >= target {
            dt = target - t;
            hit = true;
        }
        let record = steps.is_multiple_of(opts.series_every);
        for mb in members.iter_mut().filter(|m| m.verdict.is_none()) {
            if record {
                let row = mb.row(t, dt);
                mb.series.push(row);
            }
            let (u, rhs) = (&mut mb.u, &mb.work.rhs);
            mb.clipped += apply(&mb.scheme, u, dt, rhs);
            mb.steps += 1;
        }
        t = if hit { target } else { t + dt };
        steps += 1;
        if steps > opts.caps.max_steps {
            return Err(SolverError::StepLimit(opts.caps.max_steps));
        }
        for mb in members.iter_mut().filter(|m| m.verdict.is_none()) {
            let Member { scheme, u, work, lim, .. } = mb;
            *lim = scheme.evaluate(u, &mut work.rhs, &mut work.g);
            if !lim.umax.is_finite() || !work.rhs.iter().all(|r| r.is_finite()) {
                return Err(SolverError::NonFinite(t));
            }
        }
        if hit {
            if t >= opts.horizon {
                for mb in members.iter_mut().filter(|m| m.verdict.is_none()) {
                    if mb.escaped(opts.escape_rtol) {
                        return Err(SolverError::DomainEscape { t, r_max: grid.r_max() });
                    }
                    let row = mb.row(t, 0.0);
                    mb.series.push(row);
                    mb.snapshot(t);
                    mb.verdict = Some(Verdict::ReachedHorizon { t });
                }
                break;
            }
            for mb in members.iter_mut().filter(|m| m.verdict.is_none()) {
                let row = mb.row(t, 0.0);
                mb.series.push(row);
                mb.snapshot(t);
            }
            next_snap += 1;
        }
    }

    let r_max = grid.r_max();
    Ok(members
        .into_iter()
        .map(|mb| {
            let mut snapshots = mb.snapshots;
            snapshots.dedup_by(|a, b| a.0 == b.0);
            SimulationRun {
                snapshots,
                series: mb.series,
                verdict: mb.verdict.expect("every member terminates"),
                config: RunRecord {
                    exponents: mb.prob.exponents,
                    eta: mb.prob.eta,
                    mode: mb.prob.mode,
                    safety: mb.prob.safety,
                    truncation_noop: mb.prob.truncation_noop,
                    horizon: opts.horizon,
                    m_stop: mb.m_stop,
                    dt_floor: mb.dt_floor,
                    n_cells: n,
                    r_max,
                },
                steps: mb.steps,
                clipped_mass: mb.clipped,
            }
        })
        .collect())
}

/// Zero of the least-squares line through `(t, ‖u‖_∞^{-(p-1)})` over the
/// rows whose `‖u‖_∞` lies within a factor 10 of the last one.
pub fn blowup_time_from_linf(series: &[SeriesRow], p: f64) -> Option<f64> {
    let last = series.last()?.linf;
    let pts: Vec<(f64, f64)> =
        series.iter().filter(|r| r.linf >= last / 10.0 && r.linf > 0.0).map(|r| (r.t, r.linf.powf(1.0 - p))).collect();
    let (slope, intercept) = diagnostics::linear_fit(&pts)?;
    (slope < 0.0).then(|| -intercept / slope)
}

/// Closed-form source-type solution of `u_t = Δu^m` in `R^N`:
/// `U(t,r) = t^{-a} (C - k r² t^{-2b})_+^{1/(m-1)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barenblatt {
    pub dim: u32,
    pub m: f64,
    pub c: f64,
}

impl Barenblatt {
    pub fn new(dim: u32, m: f64, c: f64) -> Self {
        Self { dim, m, c }
    }

    /// Decay exponent `a = N/(N(m-1)+2)`.
    pub fn a(&self) -> f64 {
        let n = f64::from(self.dim);
        n / (n * (self.m - 1.0) + 2.0)
    }

    /// Spreading exponent `b = a/N`.
    pub fn b(&self) -> f64 {
        self.a() / f64::from(self.dim)
    }

    pub fn k(&self) -> f64 {
        self.a() * (self.m - 1.0) / (2.0 * self.m * f64::from(self.dim))
    }

    pub fn value(&self, t: f64, r: f64) -> f64 {
        let z = self.c - self.k() * r * r * t.powf(-2.0 * self.b());
        if z <= 0.0 {
            0.0
        } else {
            t.powf(-self.a()) * z.powf(1.0 / (self.m - 1.0))
        }
    }

    pub fn sup(&self, t: f64) -> f64 {
        t.powf(-self.a()) * self.c.powf(1.0 / (self.m - 1.0))
    }

    pub fn support_radius(&self, t: f64) -> f64 {
        (self.c / self.k()).sqrt() * t.powf(self.b())
    }

    pub fn field(&self, grid: Arc<RadialGrid>, t: f64) -> Result<RadialField, RadialError> {
        RadialField::from_fn(grid, |r| self.value(t, r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dim: u32, r_max: f64, n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::uniform(dim, r_max, n).unwrap())
    }

    fn bump(g: &Arc<RadialGrid>, amp: f64, radius: f64) -> RadialField {
        RadialField::from_fn(g.clone(), |r| amp * (1.0 - (r / radius).powi(2)).max(0.0).powi(2)).unwrap()
    }

    fn e(m: f64, p: f64, s: f64, n: u32) -> ExponentTriple {
        ExponentTriple::new(m, p, s, n).unwrap()
    }

    #[test]
    fn barenblatt_solves_pme_by_finite_differences() {
        // Independent of the solver: central differences of the closed form.
        for dim in [1u32, 2, 3] {
            let b = Barenblatt::new(dim, 2.0, 1.0);
            let n = f64::from(dim);
            let (t, h, dt) = (1.3, 1e-4, 1e-6);
            let rf = b.support_radius(t);
            for &r in &[0.2 * rf, 0.5 * rf, 0.8 * rf] {
                let ut = (b.value(t + dt, r) - b.value(t - dt, r)) / (2.0 * dt);
                let g = |x: f64| b.value(t, x).powi(2);
                let lap =
                    (g(r + h) - 2.0 * g(r) + g(r - h)) / (h * h) + (n - 1.0) / r * (g(r + h) - g(r - h)) / (2.0 * h);
                assert!((ut - lap).abs() < 1e-5 * ut.abs().max(1.0), "dim {dim} r {r}: {ut} vs {lap}");
            }
            // Mass is conserved in time.
            let gr = grid(dim, 3.0 * b.support_radius(8.0), 4000);
            let m1 = b.field(gr.clone(), 1.0).unwrap().mass();
            let m8 = b.field(gr, 8.0).unwrap().mass();
            assert!((m1 / m8 - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = grid(3, 5.0, 50);
        let prob = RegularizedProblem::new(e(2.0, 1.8, -1.0, 3), 0.1, RadialField::zeros(g.clone())).unwrap();
        let dt = stable_dt(prob.initial(), &prob).unwrap();
        assert!(dt > 0.0 && dt.is_finite());
        let next = step(prob.initial(), &prob, dt).unwrap();
        assert!(next.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stable_dt_scalings() {
        let ex = e(2.0, 1.8, -1.0, 3);
        let g = grid(3, 4.0, 100);
        let u = RadialField::from_fn(g.clone(), |_| 1.0).unwrap();
        let p = RegularizedProblem::new(ex, 0.2, u.clone()).unwrap().with_mode(SourceMode::DiffusionOnly);
        let d1 = stable_dt(&u, &p).unwrap();
        let u2 = RadialField::new(g.clone(), u.values().iter().map(|v| 2.0 * v).collect()).unwrap();
        let d2 = stable_dt(&u2, &p).unwrap();
        assert!((d1 / d2 - 2.0).abs() < 1e-12);
        let gf = grid(3, 4.0, 200);
        let uf = RadialField::from_fn(gf.clone(), |_| 1.0).unwrap();
        let pf = RegularizedProblem::new(ex, 0.2, uf.clone()).unwrap().with_mode(SourceMode::DiffusionOnly);
        let df = stable_dt(&uf, &pf).unwrap();
        assert!((d1 / df - 4.0).abs() < 1e-9);
    }

    #[test]
    fn oversized_step_rejected() {
        let g = grid(3, 4.0, 100);
        let u = bump(&g, 1.0, 2.0);
        let p = RegularizedProblem::new(e(2.0, 1.8, -1.0, 3), 0.1, u.clone()).unwrap();
        let dt = stable_dt(&u, &p).unwrap() / p.safety();
        assert!(step(&u, &p, dt).is_ok());
        assert!(matches!(step(&u, &p, 1.5 * dt), Err(SolverError::UnstableStep { .. })));
    }

    #[test]
    fn truncation_to_inverse_eta_ball() {
        let g = grid(3, 10.0, 100);
        let u = RadialField::from_fn(g.clone(), |_| 1.0).unwrap();
        let p = RegularizedProblem::new(e(2.0, 1.8, -1.0, 3), 0.25, u.clone()).unwrap();
        assert!(!p.truncation_noop());
        assert_eq!(p.initial().support_radius(0.0), 4.0);
        let p = RegularizedProblem::new(e(2.0, 1.8, -1.0, 3), 0.05, u).unwrap();
        assert!(p.truncation_noop());
        assert!(RegularizedProblem::new(e(2.0, 1.8, -1.0, 3), 1.0, p.initial().clone()).is_err());
    }

    // Spatially constant data with diffusion off against RK4 on the scalar ODE.
    #[test]
    fn reaction_only_matches_scalar_ode() {
        let ex = e(2.0, 1.8, -1.0, 3);
        let eta = 0.2;
        let g = grid(3, 1.0, 4);
        let u0 = 0.7;
        let f = RadialField::from_fn(g.clone(), |_| u0).unwrap();
        let horizon = 0.5;
        let w_last = g.regularized_weight_averages(-1.0, eta).unwrap()[3];
        let rhs = |u: f64| w_last * u.powf(1.8) / (1.0 + eta * u.powf(0.8));
        let mut y = u0;
        let k = 20000;
        let h = horizon / k as f64;
        for _ in 0..k {
            let k1 = rhs(y);
            let k2 = rhs(y + 0.5 * h * k1);
            let k3 = rhs(y + 0.5 * h * k2);
            let k4 = rhs(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let mut errs = Vec::new();
        for safety in [0.2, 0.1] {
            let p = RegularizedProblem::new(ex, eta, f.clone())
                .unwrap()
                .with_mode(SourceMode::ReactionOnly)
                .with_safety(safety)
                .unwrap();
            let run = run(&p, &RunOptions::new(horizon)).unwrap();
            errs.push((run.final_field().values()[3] - y).abs());
        }
        assert!(errs[0] < 0.05 * y);
        // First order: halving the step halves the error.
        assert!((errs[0] / errs[1] - 2.0).abs() < 0.3, "{errs:?}");
    }

    #[test]
    fn mass_budget_matches_source_integral() {
        let ex = e(2.0, 1.8, -1.0, 3);
        let g = grid(3, 6.0, 120);
        let u0 = bump(&g, 0.8, 1.5);
        let p = RegularizedProblem::new(ex, 0.1, u0.clone()).unwrap().with_safety(0.2).unwrap();
        let s = Scheme::new(&p).unwrap();
        let src: f64 = u0.values().iter().enumerate().map(|(i, &u)| s.source(i, u) * g.volumes()[i]).sum();
        let dt = 1e-4;
        let next = step(&u0, &p, dt).unwrap();
        let rate = (next.mass() - u0.mass()) / dt;
        assert!((rate - src).abs() < 1e-10 * src, "{rate} vs {src}");
    }

    // d/dt Σ V u^{r+1} = (r+1) [ -Σ_edges T Δ(u^r) Δ(u^m) + Σ V u^r S(u) ],
    // and Δ(u^r)Δ(u^m) >= 4mr/(m+r)² (Δ u^{(m+r)/2})² edge by edge.
    #[test]
    fn lr_energy_identity_discrete() {
        let ex = e(2.0, 1.8, -1.0, 3);
        let g = grid(3, 6.0, 150);
        let u0 = bump(&g, 1.2, 2.0);
        let p = RegularizedProblem::new(ex, 0.05, u0.clone()).unwrap();
        let s = Scheme::new(&p).unwrap();
        let tr = g.transmissibilities();
        let m = 2.0;
        for r in [1.0, m] {
            let u = u0.values();
            let dissip: f64 = (1..u.len())
                .map(|i| tr[i] * (u[i].powf(r) - u[i - 1].powf(r)) * (u[i].powi(2) - u[i - 1].powi(2)))
                .sum();
            let gn: f64 =
                (1..u.len()).map(|i| tr[i] * (u[i].powf((m + r) / 2.0) - u[i - 1].powf((m + r) / 2.0)).powi(2)).sum();
            assert!(dissip >= 4.0 * m * r / (m + r).powi(2) * gn * (1.0 - 1e-12));
            let src: f64 = u.iter().enumerate().map(|(i, &v)| g.volumes()[i] * v.powf(r) * s.source(i, v)).sum();
            let predicted = (r + 1.0) * (-dissip + src);
            let dt = 1e-7;
            let next = step(&u0, &p, dt).unwrap();
            let measured = (next.power_integral(r + 1.0) - u0.power_integral(r + 1.0)) / dt;
            assert!((measured - predicted).abs() < 1e-4 * predicted.abs(), "r={r}: {measured} vs {predicted}");
        }
    }

    #[test]
    fn pme_tracks_barenblatt_short() {
        let b = Barenblatt::new(1, 2.0, 1.0);
        let (t0, t1) = (1.0, 2.0);
        let g = grid(1, 2.0 * b.support_radius(t1), 400);
        let u0 = b.field(g.clone(), t0).unwrap();
        let p = RegularizedProblem::new(e(2.0, 2.0, -0.5, 1), 0.1, u0).unwrap().with_mode(SourceMode::DiffusionOnly);
        let run = run(&p, &RunOptions::new(t1 - t0)).unwrap();
        let exact = b.field(g.clone(), t1).unwrap();
        let err = run.final_field().values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 0.01 * exact.max(), "{err}");
        assert!(matches!(run.verdict, Verdict::ReachedHorizon { .. }));
        assert!(run.clipped_mass < 1e-12);
    }

    #[test]
    fn blowup_detected_and_single_eta_family_matches_run() {
        let ex = e(2.0, 3.0, -1.0, 3);
        let g = grid(3, 6.0, 120);
        let u0 = bump(&g, 20.0, 0.8);
        let opts = RunOptions::new(10.0).with_snapshots(vec![0.01]);
        let single = run(&RegularizedProblem::new(ex, 1e-12, u0.clone()).unwrap(), &opts).unwrap();
        assert!(single.verdict.is_blowup());
        let last = single.series.last().unwrap();
        assert!(last.linf >= single.config.m_stop);
        assert!(last.dt <= single.config.dt_floor);
        let fam = eta_family(&ex, &u0, &[1e-12], &opts).unwrap();
        assert_eq!(fam[0].series, single.series);
        assert_eq!(fam[0].verdict, single.verdict);
        for w in single.series.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }

    #[test]
    fn domain_escape_is_an_error() {
        let g = grid(1, 2.0, 40);
        let u0 = bump(&g, 1.0, 1.5);
        let p = RegularizedProblem::new(e(2.0, 2.0, -0.5, 1), 0.5, u0).unwrap().with_mode(SourceMode::DiffusionOnly);
        assert!(matches!(run(&p, &RunOptions::new(50.0)), Err(SolverError::DomainEscape { .. })));
    }

    #[test]
    fn eta_family_zero_data_stays_zero() {
        let g = grid(3, 3.0, 30);
        let runs =
            eta_family(&e(2.0, 1.2, -1.0, 3), &RadialField::zeros(g), &[0.2, 0.1], &RunOptions::new(1.0)).unwrap();
        for r in runs {
            assert!(r.final_field().values().iter().all(|&v| v == 0.0));
        }
        assert!(eta_family(
            &e(2.0, 1.2, -1.0, 3),
            &RadialField::zeros(grid(3, 3.0, 30)),
            &[0.1, 0.2],
            &RunOptions::new(1.0)
        )
        .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            // Ordered data stay ordered under the shared-step scheme.
            #[test]
            fn discrete_comparison(amp in 0.1f64..3.0, lift in 0.0f64..1.0, p in 1.1f64..3.5, rad in 0.3f64..1.5) {
                let ex = e(2.0, p, -1.0, 3);
                let g = grid(3, 4.0, 60);
                let lo = bump(&g, amp, rad);
                let hi = RadialField::new(g.clone(), lo.values().iter().zip(g.centers())
                    .map(|(v, r)| v + lift * (1.0 - r / 2.0).max(0.0)).collect()).unwrap();
                let probs = vec![
                    RegularizedProblem::new(ex, 0.05, lo).unwrap(),
                    RegularizedProblem::new(ex, 0.05, hi).unwrap(),
                ];
                let caps = Caps { max_steps: 20_000, ..Caps::default() };
                let opts = RunOptions::new(0.05).with_snapshots(vec![0.01, 0.02, 0.03, 0.04]).with_caps(caps);
                let runs = run_ensemble(&probs, &opts).unwrap();
                for (t, a) in &runs[0].snapshots {
                    if let Some(b) = runs[1].snapshot_at(*t) {
                        let tol = 1e-10 * b.max();
                        prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| *x <= *y + tol));
                    }
                }
            }
        }
    }
}
