//! Shared domain types and the closed-form kernels of the tip model:
//! regularized delta, branching rate and chemotactic force.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taf::TafField;

/// Planar vector used for positions, velocities and forces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Dimensionless parameters of the hybrid tip model.
///
/// Symbols in the doc comments follow the usual notation of the tip-cell
/// literature (A, Γ, Γ₁, δ₁, q, σ, κ, χ, v₀, σ_v, σ_x, σ_y, L, ε).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// A: branching amplitude, α(C) = A·C/(1+C).
    pub branching_amplitude: f64,
    /// Γ: anastomosis coefficient. Zero switches anastomosis off in the simulator.
    pub anastomosis_coeff: f64,
    /// Γ₁: saturation of the chemotactic force.
    pub force_saturation: f64,
    /// δ₁: chemotactic strength.
    pub chemotactic_strength: f64,
    /// q: saturation exponent.
    pub saturation_exponent: f64,
    /// σ: friction and noise coefficient of the Langevin equation.
    pub friction: f64,
    /// κ: TAF diffusivity.
    pub taf_diffusivity: f64,
    /// χ: TAF consumption rate.
    pub taf_consumption: f64,
    /// v₀: mean velocity of a new sprout.
    pub sprout_velocity: Vec2,
    /// σ_v: per-component spread of sprout velocities.
    pub sprout_velocity_spread: f64,
    /// σ_x: regularized delta width along x.
    pub delta_width_x: f64,
    /// σ_y: regularized delta width along y.
    pub delta_width_y: f64,
    /// L: distance from the primary vessel (x = 0) to the tumor plane.
    pub tumor_distance: f64,
    pub dt: f64,
    pub t_end: f64,
    /// ε: noise amplitude of the stochastic density equation, in [0, 1].
    pub noise_amplitude: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            branching_amplitude: 22.42,
            anastomosis_coeff: 0.32,
            force_saturation: 0.145,
            chemotactic_strength: 0.255,
            saturation_exponent: 5.0 / 3.0,
            friction: 5.59,
            taf_diffusivity: 0.0045,
            taf_consumption: 0.002,
            sprout_velocity: Vec2::new(1.0, 0.0),
            sprout_velocity_spread: 0.08,
            delta_width_x: 0.15,
            delta_width_y: 0.15,
            tumor_distance: 5.0,
            dt: 0.004,
            t_end: 3.0,
            noise_amplitude: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 11] = [
            (self.branching_amplitude > 0.0, "branching_amplitude must be > 0"),
            (self.anastomosis_coeff >= 0.0, "anastomosis_coeff must be >= 0"),
            (self.friction > 0.0, "friction must be > 0"),
            (self.taf_diffusivity >= 0.0, "taf_diffusivity must be >= 0"),
            (self.taf_consumption >= 0.0, "taf_consumption must be >= 0"),
            (self.sprout_velocity_spread > 0.0, "sprout_velocity_spread must be > 0"),
            (self.delta_width_x > 0.0 && self.delta_width_y > 0.0, "delta widths must be > 0"),
            (self.dt > 0.0, "dt must be > 0"),
            (self.t_end >= 0.0, "t_end must be >= 0"),
            ((0.0..=1.0).contains(&self.noise_amplitude), "noise_amplitude must lie in [0, 1]"),
            (self.force_saturation >= 0.0, "force_saturation must be >= 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Parameter(msg.into()));
            }
        }
        let all = [
            self.branching_amplitude,
            self.anastomosis_coeff,
            self.force_saturation,
            self.chemotactic_strength,
            self.saturation_exponent,
            self.friction,
            self.taf_diffusivity,
            self.taf_consumption,
            self.sprout_velocity.x,
            self.sprout_velocity.y,
            self.sprout_velocity_spread,
            self.tumor_distance,
            self.dt,
            self.t_end,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(())
    }

    pub fn delta_kernel(&self) -> Result<DeltaKernel> {
        DeltaKernel::new(self.delta_width_x, self.delta_width_y)
    }
}

/// Node-centred rectangular grid. Node (i, j) sits at `origin + (i·hx, j·hy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub origin: Vec2,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64, origin: Vec2) -> Result<Self> {
        let grid = Self { nx, ny, hx, hy, origin };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.ny < 3 {
            return Err(Error::Parameter(format!(
                "grid needs at least 3x3 nodes, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.hx > 0.0 && self.hy > 0.0) {
            return Err(Error::Parameter("grid spacings must be > 0".into()));
        }
        if !self.origin.is_finite() {
            return Err(Error::NonFinite("grid origin"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + i as f64 * self.hx,
            self.origin.y + j as f64 * self.hy,
        )
    }

    pub fn x_max(&self) -> f64 {
        self.origin.x + (self.nx - 1) as f64 * self.hx
    }

    pub fn y_max(&self) -> f64 {
        self.origin.y + (self.ny - 1) as f64 * self.hy
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.origin.x + i as f64 * self.hx).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.origin.y + j as f64 * self.hy).collect()
    }

    /// Interior region: at least one spacing away from every edge.
    pub fn in_interior(&self, p: Vec2) -> bool {
        p.x >= self.origin.x + self.hx
            && p.x <= self.origin.x + (self.nx - 2) as f64 * self.hx
            && p.y >= self.origin.y + self.hy
            && p.y <= self.origin.y + (self.ny - 2) as f64 * self.hy
    }

    /// Cell owned by the nearest node, if inside the grid footprint.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let u = ((p.x - self.origin.x) / self.hx + 0.5).floor();
        let v = ((p.y - self.origin.y) / self.hy + 0.5).floor();
        if u < 0.0 || v < 0.0 || u >= self.nx as f64 || v >= self.ny as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }

    /// Whether two grids describe the same nodes.
    pub fn congruent(&self, other: &GridSpec) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.hx == other.hx
            && self.hy == other.hy
            && self.origin == other.origin
    }

    /// Bilinear interpolation of a node field at `p`. Points outside the
    /// footprint are clamped onto it.
    pub fn bilinear(&self, values: &[f64], p: Vec2) -> f64 {
        let (i, tx) = locate(p.x, self.origin.x, self.hx, self.nx);
        let (j, ty) = locate(p.y, self.origin.y, self.hy, self.ny);
        let v00 = values[self.index(i, j)];
        let v10 = values[self.index(i + 1, j)];
        let v01 = values[self.index(i, j + 1)];
        let v11 = values[self.index(i + 1, j + 1)];
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }

    /// Second-order gradient of a node field at node (i, j): central in the
    /// interior, one-sided three-point on the edges.
    pub fn gradient_at_node(&self, values: &[f64], i: usize, j: usize) -> Vec2 {
        let at = |ii: usize, jj: usize| values[self.index(ii, jj)];
        let gx = if i == 0 {
            (-3.0 * at(0, j) + 4.0 * at(1, j) - at(2, j)) / (2.0 * self.hx)
        } else if i == self.nx - 1 {
            (3.0 * at(i, j) - 4.0 * at(i - 1, j) + at(i - 2, j)) / (2.0 * self.hx)
        } else {
            (at(i + 1, j) - at(i - 1, j)) / (2.0 * self.hx)
        };
        let gy = if j == 0 {
            (-3.0 * at(i, 0) + 4.0 * at(i, 1) - at(i, 2)) / (2.0 * self.hy)
        } else if j == self.ny - 1 {
            (3.0 * at(i, j) - 4.0 * at(i, j - 1) + at(i, j - 2)) / (2.0 * self.hy)
        } else {
            (at(i, j + 1) - at(i, j - 1)) / (2.0 * self.hy)
        };
        Vec2::new(gx, gy)
    }

    /// Gradient at an arbitrary point: node gradients bilinearly interpolated.
    pub fn gradient_at(&self, values: &[f64], p: Vec2) -> Vec2 {
        let (i, tx) = locate(p.x, self.origin.x, self.hx, self.nx);
        let (j, ty) = locate(p.y, self.origin.y, self.hy, self.ny);
        let g00 = self.gradient_at_node(values, i, j);
        let g10 = self.gradient_at_node(values, i + 1, j);
        let g01 = self.gradient_at_node(values, i, j + 1);
        let g11 = self.gradient_at_node(values, i + 1, j + 1);
        (g00 * ((1.0 - tx) * (1.0 - ty)))
            + (g10 * (tx * (1.0 - ty)))
            + (g01 * ((1.0 - tx) * ty))
            + (g11 * (tx * ty))
    }
}

#[inline]
fn locate(x: f64, origin: f64, h: f64, n: usize) -> (usize, f64) {
    let u = ((x - origin) / h).clamp(0.0, (n - 1) as f64);
    let i = (u.floor() as usize).min(n - 2);
    (i, u - i as f64)
}

/// One active (or retired) vessel tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tip {
    pub id: u64,
    pub pos: Vec2,
    pub vel: Vec2,
    /// T^k: time at which the tip appeared.
    pub birth_time: f64,
    pub alive: bool,
    pub parent_id: Option<u64>,
}

/// Anisotropic Gaussian regularization of the Dirac delta with validated widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaKernel {
    sigma_x: f64,
    sigma_y: f64,
    norm: f64,
}

/// Splatting stops at this many widths; the neglected tail is below e^-16.
pub const DELTA_CUTOFF_WIDTHS: f64 = 4.0;

impl DeltaKernel {
    pub fn new(sigma_x: f64, sigma_y: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_y > 0.0) || !sigma_x.is_finite() || !sigma_y.is_finite() {
            return Err(Error::Parameter(format!(
                "regularized delta widths must be positive, got ({sigma_x}, {sigma_y})"
            )));
        }
        Ok(Self {
            sigma_x,
            sigma_y,
            norm: 1.0 / (PI * sigma_x * sigma_y),
        })
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn peak(&self) -> f64 {
        self.norm
    }

    #[inline]
    pub fn eval(&self, r: Vec2) -> f64 {
        let ex = r.x / self.sigma_x;
        let ey = r.y / self.sigma_y;
        self.norm * (-ex * ex).exp() * (-ey * ey).exp()
    }

    /// Adds `weight · δ(node − center)` to every node within the cutoff box.
    pub fn splat(&self, grid: &GridSpec, values: &mut [f64], center: Vec2, weight: f64) {
        if weight == 0.0 {
            return;
        }
        let rx = DELTA_CUTOFF_WIDTHS * self.sigma_x;
        let ry = DELTA_CUTOFF_WIDTHS * self.sigma_y;
        let (i0, i1) = node_span(center.x - rx, center.x + rx, grid.origin.x, grid.hx, grid.nx);
        let (j0, j1) = node_span(center.y - ry, center.y + ry, grid.origin.y, grid.hy, grid.ny);
        if i0 > i1 || j0 > j1 {
            return;
        }
        let gx: Vec<f64> = (i0..=i1)
            .map(|i| {
                let d = (grid.origin.x + i as f64 * grid.hx - center.x) / self.sigma_x;
                (-d * d).exp()
            })
            .collect();
        for j in j0..=j1 {
            let d = (grid.origin.y + j as f64 * grid.hy - center.y) / self.sigma_y;
            let wy = weight * self.norm * (-d * d).exp();
            let row = &mut values[grid.index(i0, j)..=grid.index(i1, j)];
            for (v, g) in row.iter_mut().zip(&gx) {
                *v += wy * g;
            }
        }
    }
}

fn node_span(lo: f64, hi: f64, origin: f64, h: f64, n: usize) -> (usize, usize) {
    let a = ((lo - origin) / h).ceil().max(0.0);
    let b = ((hi - origin) / h).floor().min((n - 1) as f64);
    if b < 0.0 || a > (n - 1) as f64 || a > b {
        return (1, 0);
    }
    (a as usize, b as usize)
}

/// δ_σ(r) = exp(−x²/σx²)·exp(−y²/σy²)/(π σx σy).
pub fn regularized_delta(r: Vec2, sigma_x: f64, sigma_y: f64) -> Result<f64> {
    Ok(DeltaKernel::new(sigma_x, sigma_y)?.eval(r))
}

/// α(C) = A·C/(1+C).
pub fn branching_rate(c: f64, amplitude: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(Error::Domain(format!("TAF concentration must be >= 0, got {c}")));
    }
    if c.is_infinite() {
        return Ok(amplitude);
    }
    Ok(amplitude * c / (1.0 + c))
}

/// F = δ₁ ∇C / (1 + Γ₁ C)^q evaluated at `pos`.
pub fn chemotactic_force(field: &TafField, pos: Vec2, params: &ModelParams) -> Result<Vec2> {
    let grid = field.grid();
    if !pos.is_finite() || !grid.in_interior(pos) {
        return Err(Error::Boundary { x: pos.x, y: pos.y });
    }
    Ok(force_unchecked(field, pos, params))
}

#[inline]
pub(crate) fn force_unchecked(field: &TafField, pos: Vec2, params: &ModelParams) -> Vec2 {
    let grid = field.grid();
    let values = field.values();
    let grad = grid.gradient_at(values, pos);
    let c = grid.bilinear(values, pos).max(0.0);
    let saturation = (1.0 + params.force_saturation * c).powf(params.saturation_exponent);
    grad * (params.chemotactic_strength / saturation)
}
