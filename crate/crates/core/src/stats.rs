//! Ensemble statistics of tip snapshots: smoothed marginal and current
//! densities, pointwise ensemble moments, stalk density, y-reduced profiles
//! in the traveling frame and empirical structure functions.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DeltaKernel, GridSpec, Tip};

/// Gridded nonnegative density (or its n-th ensemble moment) at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    grid: GridSpec,
    values: Vec<f64>,
    time: f64,
    order: u32,
}

impl DensityGrid {
    pub fn zeros(grid: GridSpec, time: f64, order: u32) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid,
            time,
            order,
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>, time: f64, order: u32) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density grid"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::Domain("densities must be >= 0".into()));
        }
        Ok(Self { grid, values, time, order })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Trapezoidal integral over the grid footprint.
    pub fn integral(&self) -> f64 {
        self.y_reduce().integral()
    }

    /// Trapezoidal integration over y at every x node.
    pub fn y_reduce(&self) -> Profile {
        let g = &self.grid;
        let values = (0..g.nx)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..g.ny {
                    let w = if j == 0 || j == g.ny - 1 { 0.5 } else { 1.0 };
                    s += w * self.at(i, j);
                }
                s * g.hy
            })
            .collect();
        Profile {
            xs: g.xs(),
            values,
            time: self.time,
            order: self.order,
        }
    }
}

/// One-dimensional profile over x (lab frame) or ξ (traveling frame).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub time: f64,
    pub order: u32,
}

impl Profile {
    pub fn new(xs: Vec<f64>, values: Vec<f64>, time: f64, order: u32) -> Result<Self> {
        if xs.len() != values.len() || xs.len() < 2 {
            return Err(Error::Dimension(format!(
                "profile needs matching abscissae and values (>= 2), got {} and {}",
                xs.len(),
                values.len()
            )));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("profile abscissae must be strictly increasing".into()));
        }
        Ok(Self { xs, values, time, order })
    }

    pub fn integral(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Linear interpolation; zero outside the sampled range.
    pub fn sample(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let k = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let t = (x - x0) / (x1 - x0);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }

    pub fn peak(&self) -> (f64, f64) {
        self.xs
            .iter()
            .zip(&self.values)
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, (&x, &v)| if v > acc.1 { (x, v) } else { acc })
    }

    /// Resamples onto `xi_grid` in the frame centred on `center`: value(ξ) = p(center + ξ).
    pub fn traveling_frame(&self, center: f64, xi_grid: &[f64]) -> Profile {
        Profile {
            xs: xi_grid.to_vec(),
            values: xi_grid.iter().map(|&xi| self.sample(center + xi)).collect(),
            time: self.time,
            order: self.order,
        }
    }
}

/// Uniform ξ-grid of `n` points on [−half_width, half_width].
pub fn xi_grid(half_width: f64, n: usize) -> Vec<f64> {
    let step = 2.0 * half_width / (n - 1) as f64;
    (0..n).map(|k| -half_width + k as f64 * step).collect()
}

fn smoothed_sum(
    tips: &[Tip],
    grid: &GridSpec,
    sigma_x: f64,
    sigma_y: f64,
    time: f64,
    weight: impl Fn(&Tip) -> f64,
) -> Result<DensityGrid> {
    let kernel = DeltaKernel::new(sigma_x, sigma_y)?;
    let mut out = DensityGrid::zeros(*grid, time, 1);
    for tip in tips.iter().filter(|t| t.alive) {
        if !tip.pos.is_finite() {
            return Err(Error::NonFinite("tip position"));
        }
        kernel.splat(grid, &mut out.values, tip.pos, weight(tip));
    }
    Ok(out)
}

/// p̃(x) = Σ_k δ_σ(x − X^k) over alive tips.
pub fn marginal_density(
    tips: &[Tip],
    grid: &GridSpec,
    sigma_x: f64,
    sigma_y: f64,
    time: f64,
) -> Result<DensityGrid> {
    smoothed_sum(tips, grid, sigma_x, sigma_y, time, |_| 1.0)
}

/// j(x) = Σ_k |v^k| δ_σ(x − X^k) over alive tips.
pub fn current_density(
    tips: &[Tip],
    grid: &GridSpec,
    sigma_x: f64,
    sigma_y: f64,
    time: f64,
) -> Result<DensityGrid> {
    smoothed_sum(tips, grid, sigma_x, sigma_y, time, |t| t.vel.norm())
}

/// ⟨p̃ⁿ⟩ = (1/𝒩) Σ_ω p̃(x; ω)ⁿ, pointwise.
pub fn ensemble_moment(realizations: &[DensityGrid], n: u32) -> Result<DensityGrid> {
    let first = realizations
        .first()
        .ok_or_else(|| Error::Input("ensemble is empty".into()))?;
    if n == 0 {
        return Err(Error::Input("moment order must be >= 1".into()));
    }
    for r in realizations {
        if !r.grid.congruent(&first.grid) || r.time != first.time {
            return Err(Error::Dimension(
                "realizations differ in grid or snapshot time".into(),
            ));
        }
    }
    let count = realizations.len() as f64;
    let mut values = vec![0.0; first.grid.len()];
    for r in realizations {
        for (acc, &v) in values.iter_mut().zip(&r.values) {
            *acc += v.powi(n as i32);
        }
    }
    for v in values.iter_mut() {
        *v /= count;
    }
    Ok(DensityGrid {
        grid: first.grid,
        values,
        time: first.time,
        order: n,
    })
}

/// ⟨pⁿ⟩ over y-reduced realizations, pointwise in x.
pub fn profile_moment(profiles: &[Profile], n: u32) -> Result<Profile> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::Input("ensemble is empty".into()))?;
    if n == 0 {
        return Err(Error::Input("moment order must be >= 1".into()));
    }
    if profiles.iter().any(|p| p.xs != first.xs || p.time != first.time) {
        return Err(Error::Dimension("profiles differ in abscissae or time".into()));
    }
    let count = profiles.len() as f64;
    let mut values = vec![0.0; first.xs.len()];
    for p in profiles {
        for (acc, &v) in values.iter_mut().zip(&p.values) {
            *acc += v.powi(n as i32);
        }
    }
    for v in values.iter_mut() {
        *v /= count;
    }
    Profile::new(first.xs.clone(), values, first.time, n)
}

/// Alternative estimator (power first, smooth after): tips are binned into
/// cell counts, the count density is raised to the n-th power, averaged over
/// realizations and only then convolved with the delta kernel. Differs from
/// [`ensemble_moment`] at O(σ); kept as a diagnostic.
pub fn power_then_smooth_moment(
    realizations: &[Vec<Tip>],
    grid: &GridSpec,
    sigma_x: f64,
    sigma_y: f64,
    n: u32,
    time: f64,
) -> Result<DensityGrid> {
    if realizations.is_empty() {
        return Err(Error::Input("ensemble is empty".into()));
    }
    let kernel = DeltaKernel::new(sigma_x, sigma_y)?;
    let cell_area = grid.hx * grid.hy;
    let mut mean_power = vec![0.0; grid.len()];
    for tips in realizations {
        let mut counts = vec![0.0f64; grid.len()];
        for tip in tips.iter().filter(|t| t.alive) {
            if let Some((i, j)) = grid.cell_of(tip.pos) {
                counts[grid.index(i, j)] += 1.0;
            }
        }
        for (m, c) in mean_power.iter_mut().zip(&counts) {
            *m += (c / cell_area).powi(n as i32);
        }
    }
    let mut out = DensityGrid::zeros(*grid, time, n);
    let scale = cell_area / realizations.len() as f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let m = mean_power[grid.index(i, j)];
            if m > 0.0 {
                kernel.splat(grid, &mut out.values, grid.node(i, j), m * scale);
            }
        }
    }
    Ok(out)
}

/// Stalk density S(t, x) = ∫₀ᵗ p̃(s, x) ds by the trapezoidal rule over the
/// snapshot series. The series must start at time 0 unless `t` is 0; a `t`
/// between snapshots is handled by linear interpolation of p̃.
pub fn stalk_density(series: &[DensityGrid], t: f64) -> Result<DensityGrid> {
    let first = series
        .first()
        .ok_or_else(|| Error::Input("empty density series".into()))?;
    if series.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::Input("snapshot times must be strictly increasing".into()));
    }
    if series.iter().any(|g| !g.grid.congruent(&first.grid)) {
        return Err(Error::Dimension("series grids differ".into()));
    }
    let mut out = DensityGrid::zeros(first.grid, t, 1);
    if t <= 0.0 {
        return Ok(out);
    }
    if first.time > 0.0 {
        return Err(Error::Input("series must start at t = 0".into()));
    }
    let last = series.last().expect("nonempty");
    if t > last.time + 1e-12 {
        return Err(Error::Range(format!(
            "t = {t} beyond the last snapshot at {}",
            last.time
        )));
    }
    for w in series.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.time >= t {
            break;
        }
        let upper = b.time.min(t);
        let frac = (upper - a.time) / (b.time - a.time);
        let h = upper - a.time;
        for ((acc, &va), &vb) in out.values.iter_mut().zip(&a.values).zip(&b.values) {
            let v_upper = va + frac * (vb - va);
            *acc += 0.5 * h * (va + v_upper);
        }
    }
    Ok(out)
}

/// ⟨(p(ξ₀ + l) − p(ξ₀))ⁿ⟩ over per-realization traveling-frame profiles,
/// reported on the ξ₀ nodes for which ξ₀ + l stays inside the frame.
pub fn empirical_structure_function(profiles: &[Profile], lag: f64, n: u32) -> Result<Profile> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::Input("no profiles".into()))?;
    if profiles.iter().any(|p| p.xs != first.xs) {
        return Err(Error::Dimension("profiles must share the ξ-grid".into()));
    }
    let lo = first.xs[0];
    let hi = *first.xs.last().expect("nonempty");
    let width = hi - lo;
    if lag.abs() >= width {
        return Err(Error::Range(format!(
            "lag {lag} exceeds the frame width {width}"
        )));
    }
    let nodes: Vec<f64> = first
        .xs
        .iter()
        .copied()
        .filter(|&x| x + lag >= lo - 1e-12 && x + lag <= hi + 1e-12)
        .collect();
    let count = profiles.len() as f64;
    let values = nodes
        .iter()
        .map(|&x0| {
            profiles
                .iter()
                .map(|p| (p.sample((x0 + lag).clamp(lo, hi)) - p.sample(x0)).powi(n as i32))
                .sum::<f64>()
                / count
        })
        .collect();
    Profile::new(nodes, values, first.time, n)
}

/// Moments of an ensemble at several snapshot times.
#[derive(Debug, Clone)]
pub struct EnsembleMoments {
    pub realizations: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// snapshot index → order → moment grid
    pub moments: Vec<BTreeMap<u32, DensityGrid>>,
}

impl EnsembleMoments {
    /// `per_time[k]` holds every realization's density at snapshot `k`.
    pub fn compute(
        per_time: &[Vec<DensityGrid>],
        orders: &[u32],
        sigma_x: f64,
        sigma_y: f64,
    ) -> Result<Self> {
        let realizations = per_time.first().map(|v| v.len()).unwrap_or(0);
        if realizations == 0 {
            return Err(Error::Input("no realizations".into()));
        }
        let mut moments = Vec::with_capacity(per_time.len());
        for grids in per_time {
            if grids.len() != realizations {
                return Err(Error::Dimension("realization count varies across times".into()));
            }
            let mut by_order = BTreeMap::new();
            for &n in orders {
                by_order.insert(n, ensemble_moment(grids, n)?);
            }
            moments.push(by_order);
        }
        Ok(Self {
            realizations,
            sigma_x,
            sigma_y,
            moments,
        })
    }
}

/// Least-squares slope and intercept of y on x, plus R².
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, r2)
}

/// Slope of log(err) against log(h).
pub fn log_log_slope(hs: &[f64], errs: &[f64]) -> f64 {
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    linear_fit(&lx, &ly).0
}
