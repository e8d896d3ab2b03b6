//! Radial grids, cell-centred fields and finite-volume operators.
//!
//! A grid splits `[0, r_max]` into shells. Cell `i` is the shell between
//! `edges[i]` and `edges[i+1]`; its value sits at the midpoint. All volume
//! and weight integrals are closed forms in `r^{N+s}`, so the singular
//! weight `|x|^σ` is integrated exactly even in the cell touching the
//! origin.
//!
//! The discrete Laplacian is the divergence of two-point fluxes across the
//! interior edges, with zero flux through `r = 0` and `r = r_max`. Summing
//! it against the cell volumes telescopes to zero, and the same edge
//! differences define the discrete Dirichlet integral used by the energy.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::regimes::unit_ball_volume;

#[derive(Debug, Error)]
pub enum RadialError {
    #[error("weight |x|^{s} is not integrable near the origin in dimension {dim}")]
    WeightNotIntegrable { s: f64, dim: u32 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field value {value} at cell {cell} is negative or not finite")]
    InvalidValue { cell: usize, value: f64 },
    #[error("length mismatch: grid has {cells} cells, got {values} values")]
    LengthMismatch { cells: usize, values: usize },
    #[error("malformed field file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Shell decomposition of the ball `B(0, r_max)` in `R^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    dim: u32,
    edges: Vec<f64>,
    centers: Vec<f64>,
    volumes: Vec<f64>,
    /// `N ω_N r^{N-1} / (c_i - c_{i-1})` for interior edge `i`, index 0 unused.
    trans: Vec<f64>,
    omega_n: f64,
}

impl RadialGrid {
    /// Grid with arbitrary strictly increasing edges starting at 0.
    pub fn from_edges(dim: u32, edges: Vec<f64>) -> Result<Self, RadialError> {
        if dim == 0 {
            return Err(RadialError::InvalidGrid("dimension must be positive".into()));
        }
        if edges.len() < 2 || edges[0] != 0.0 {
            return Err(RadialError::InvalidGrid("need at least one cell starting at r = 0".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(RadialError::InvalidGrid("edges must be finite and strictly increasing".into()));
        }
        let n = f64::from(dim);
        let omega_n = unit_ball_volume(dim);
        let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let volumes = edges.windows(2).map(|w| omega_n * (w[1].powf(n) - w[0].powf(n))).collect();
        let mut trans = vec![0.0; centers.len()];
        for i in 1..centers.len() {
            trans[i] = n * omega_n * edges[i].powf(n - 1.0) / (centers[i] - centers[i - 1]);
        }
        Ok(Self { dim, edges, centers, volumes, trans, omega_n })
    }

    /// `n` equal cells on `[0, r_max]`.
    pub fn uniform(dim: u32, r_max: f64, n: usize) -> Result<Self, RadialError> {
        if !(r_max > 0.0 && r_max.is_finite()) || n == 0 {
            return Err(RadialError::InvalidGrid(format!("r_max = {r_max}, n = {n}")));
        }
        let h = r_max / n as f64;
        let mut edges: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        edges[n] = r_max;
        Self::from_edges(dim, edges)
    }

    /// `n` cells whose widths grow by `ratio` from the origin outwards.
    pub fn geometric(dim: u32, r_max: f64, n: usize, ratio: f64) -> Result<Self, RadialError> {
        if !(ratio >= 1.0 && ratio.is_finite()) {
            return Err(RadialError::InvalidGrid(format!("ratio = {ratio} must be >= 1")));
        }
        if ratio == 1.0 {
            return Self::uniform(dim, r_max, n);
        }
        if !(r_max > 0.0 && r_max.is_finite()) || n == 0 {
            return Err(RadialError::InvalidGrid(format!("r_max = {r_max}, n = {n}")));
        }
        let h0 = r_max * (ratio - 1.0) / (ratio.powi(n as i32) - 1.0);
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(0.0);
        let mut w = h0;
        for _ in 0..n {
            let last = *edges.last().unwrap();
            edges.push(last + w);
            w *= ratio;
        }
        edges[n] = r_max;
        Self::from_edges(dim, edges)
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }

    pub fn r_max(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Exact cell volumes `ω_N (r_hi^N - r_lo^N)`.
    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Edge transmissibilities; entry `i` couples cells `i-1` and `i`.
    pub fn transmissibilities(&self) -> &[f64] {
        &self.trans
    }

    pub fn omega_n(&self) -> f64 {
        self.omega_n
    }

    /// Smallest cell width.
    pub fn min_width(&self) -> f64 {
        self.edges.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Exact `N ω_N ∫ r^{N-1+s} dr` over each cell.
    pub fn singular_weights(&self, s: f64) -> Result<Vec<f64>, RadialError> {
        let n = f64::from(self.dim);
        if !(s > -n) {
            return Err(RadialError::WeightNotIntegrable { s, dim: self.dim });
        }
        let k = n + s;
        let c = n * self.omega_n / k;
        Ok(self.edges.windows(2).map(|w| c * (w[1].powf(k) - w[0].powf(k))).collect())
    }

    /// Cell averages of `(r² + η²)^{s/2}` with respect to volume.
    ///
    /// Cells are split at `r = η`. Below it the integrand is smooth in `r`;
    /// above it the substitution `v = r^{N+s}` moves `r^s` into the measure
    /// and leaves the bounded factor `(1 + η²/r²)^{s/2}`. Both pieces use
    /// 8-point Gauss-Legendre. At `η = 0` this is `singular_weights(s) / volumes`.
    pub fn regularized_weight_averages(&self, s: f64, eta: f64) -> Result<Vec<f64>, RadialError> {
        let exact = self.singular_weights(s)?;
        if eta == 0.0 {
            return Ok(exact.iter().zip(&self.volumes).map(|(w, v)| w / v).collect());
        }
        let n = f64::from(self.dim);
        let k = n + s;
        let c = n * self.omega_n;
        let inner = |a: f64, b: f64| gauss_legendre(a, b, |r| c * r.powf(n - 1.0) * (r * r + eta * eta).powf(0.5 * s));
        let outer = |a: f64, b: f64| {
            gauss_legendre(a.powf(k), b.powf(k), |v| {
                let r = v.powf(1.0 / k);
                c / k * (1.0 + (eta / r).powi(2)).powf(0.5 * s)
            })
        };
        let out = self
            .edges
            .windows(2)
            .zip(&self.volumes)
            .map(|(w, vol)| {
                let (lo, hi) = (w[0], w[1]);
                let total = if hi <= eta {
                    inner(lo, hi)
                } else if lo >= eta {
                    outer(lo, hi)
                } else {
                    inner(lo, eta) + outer(eta, hi)
                };
                total / vol
            })
            .collect();
        Ok(out)
    }
}

fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut acc = 0.0;
    for (x, w) in GAUSS_LEGENDRE_8 {
        acc += w * (f(mid - x * half) + f(mid + x * half));
    }
    acc * half
}

/// Positive nodes and weights of the 8-point Gauss-Legendre rule on [-1, 1].
const GAUSS_LEGENDRE_8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Non-negative cell-centred samples on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self, RadialError> {
        if values.len() != grid.n_cells() {
            return Err(RadialError::LengthMismatch { cells: grid.n_cells(), values: values.len() });
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(RadialError::InvalidValue { cell, value });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.n_cells();
        Self { grid, values: vec![0.0; n] }
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self, RadialError> {
        let values = grid.centers().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// `∫ u dx`.
    pub fn mass(&self) -> f64 {
        self.values.iter().zip(self.grid.volumes()).map(|(u, v)| u * v).sum()
    }

    /// `‖u‖_q` for `q > 0` (a quasi-norm when `q < 1`).
    pub fn lq_norm(&self, q: f64) -> f64 {
        let s: f64 = self.values.iter().zip(self.grid.volumes()).map(|(u, v)| u.powf(q) * v).sum();
        s.powf(1.0 / q)
    }

    /// `∫ u^q dx`.
    pub fn power_integral(&self, q: f64) -> f64 {
        self.values.iter().zip(self.grid.volumes()).map(|(u, v)| pow(*u, q) * v).sum()
    }

    /// Outer edge of the last cell whose value exceeds `threshold`.
    pub fn support_radius(&self, threshold: f64) -> f64 {
        match self.values.iter().rposition(|&u| u > threshold) {
            Some(i) => self.grid.edges()[i + 1],
            None => 0.0,
        }
    }

    /// Writes one header line and `r_center,value` rows.
    pub fn write_csv(&self, out: &mut impl Write, extra_header: &str) -> io::Result<()> {
        let g = &self.grid;
        writeln!(
            out,
            "# dim={} n_cells={} r_max={:.17e} grid={}{}",
            g.dim(),
            g.n_cells(),
            g.r_max(),
            if is_uniform(g) { "uniform" } else { "edges" },
            extra_header
        )?;
        writeln!(out, "r_center,value")?;
        for (r, u) in g.centers().iter().zip(&self.values) {
            writeln!(out, "{r:.17e},{u:.17e}")?;
        }
        Ok(())
    }

    /// Reads a field written by [`RadialField::write_csv`] onto `grid`.
    pub fn read_csv(grid: Arc<RadialGrid>, input: impl BufRead) -> Result<Self, RadialError> {
        let mut values = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("r_center") {
                continue;
            }
            let (_, v) = line.split_once(',').ok_or_else(|| RadialError::Parse(line.to_string()))?;
            values.push(v.trim().parse::<f64>().map_err(|e| RadialError::Parse(e.to_string()))?);
        }
        Self::new(grid, values)
    }
}

fn is_uniform(g: &RadialGrid) -> bool {
    let h = g.r_max() / g.n_cells() as f64;
    g.edges().windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
}

/// Finite-volume `Δ(u^m)` at each cell (values may be negative).
pub fn laplacian_of_power(f: &RadialField, m: f64) -> Vec<f64> {
    let g: Vec<f64> = f.values().iter().map(|u| pow(*u, m)).collect();
    laplacian(f.grid(), &g)
}

/// Finite-volume Laplacian of arbitrary cell values `g`.
pub fn laplacian(grid: &RadialGrid, g: &[f64]) -> Vec<f64> {
    let n = grid.n_cells();
    let t = grid.transmissibilities();
    let vol = grid.volumes();
    let mut out = vec![0.0; n];
    for i in 1..n {
        let flux = t[i] * (g[i] - g[i - 1]);
        out[i - 1] += flux;
        out[i] -= flux;
    }
    for (o, v) in out.iter_mut().zip(vol) {
        *o /= v;
    }
    out
}

/// `Σ_edges T_i (g_i - g_{i-1})²`, the discrete `‖∇g‖_2²`.
pub fn dirichlet_integral(grid: &RadialGrid, g: &[f64]) -> f64 {
    let t = grid.transmissibilities();
    (1..grid.n_cells()).map(|i| t[i] * (g[i] - g[i - 1]).powi(2)).sum()
}

/// `Σ_cells f_i^q W_i(s)` with exact singular weights.
pub fn weighted_integral(f: &RadialField, q: f64, s: f64) -> Result<f64, RadialError> {
    let w = f.grid().singular_weights(s)?;
    Ok(f.values().iter().zip(&w).map(|(u, w)| pow(*u, q) * w).sum())
}

/// `u^q` with the common integer cases kept exact.
#[inline]
pub fn pow(u: f64, q: f64) -> f64 {
    if q == 1.0 {
        u
    } else if q == 2.0 {
        u * u
    } else if u == 0.0 {
        0.0
    } else {
        u.powf(q)
    }
}
