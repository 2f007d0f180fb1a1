//! Tumor angiogenic factor (TAF) field: explicit diffusion plus consumption
//! by tips (hybrid model) or by a current-density grid (mean-field model).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DeltaKernel, GridSpec, ModelParams, Tip};
use crate::stats::DensityGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    ZeroFlux,
    Periodic,
}

/// Named initial TAF profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialProfile {
    Zero,
    Uniform { value: f64 },
    /// C₀·exp(−(x−L)²/w²), a ridge along the tumor plane x = L.
    TumorRidge { amplitude: f64, width: f64 },
}

impl InitialProfile {
    pub fn parse(name: &str, amplitude: f64, width: f64) -> Result<Self> {
        match name {
            "zero" => Ok(Self::Zero),
            "uniform" => Ok(Self::Uniform { value: amplitude }),
            "tumor-ridge" => Ok(Self::TumorRidge { amplitude, width }),
            other => Err(Error::Config(format!(
                "unknown TAF profile '{other}' (expected zero, uniform or tumor-ridge)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// Concentration mass (Σ|clamped|·hx·hy) removed by the positivity clamp.
    pub clamped_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TafField {
    grid: GridSpec,
    values: Vec<f64>,
    time: f64,
    boundary: Boundary,
    scratch: Vec<f64>,
}

impl TafField {
    pub fn from_values(grid: GridSpec, values: Vec<f64>, boundary: Boundary) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "TAF values have {} entries, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("TAF field"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::Domain("TAF concentration must be >= 0".into()));
        }
        Ok(Self {
            grid,
            values,
            time: 0.0,
            boundary,
            scratch: vec![0.0; grid.len()],
        })
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

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Σ C·hx·hy over all nodes.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.hx * self.grid.hy
    }

    /// Mass that pure diffusion conserves: plain sum for periodic grids,
    /// trapezoid weights (half on edge nodes) for mirrored zero-flux edges.
    pub fn conserved_mass(&self) -> f64 {
        if self.boundary == Boundary::Periodic {
            return self.total_mass();
        }
        let g = &self.grid;
        let w = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let mut s = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                s += w(i, g.nx) * w(j, g.ny) * self.values[g.index(i, j)];
            }
        }
        s * g.hx * g.hy
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_stability(&self, kappa: f64, dt: f64) -> Result<()> {
        let g = &self.grid;
        let number = kappa * dt * (1.0 / (g.hx * g.hx) + 1.0 / (g.hy * g.hy));
        if number > 0.5 {
            return Err(Error::StepSize(format!(
                "kappa*dt*(1/hx^2 + 1/hy^2) = {number:.4} exceeds 1/2"
            )));
        }
        Ok(())
    }

    /// Writes the field as CSV with header `x,y,C`, row by row in y.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "x,y,C")?;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let p = self.grid.node(i, j);
                writeln!(out, "{},{},{}", p.x, p.y, self.at(i, j))?;
            }
        }
        Ok(())
    }

    fn laplacian_at(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (il, ir, jd, ju) = match self.boundary {
            Boundary::Periodic => (
                if i == 0 { nx - 1 } else { i - 1 },
                if i == nx - 1 { 0 } else { i + 1 },
                if j == 0 { ny - 1 } else { j - 1 },
                if j == ny - 1 { 0 } else { j + 1 },
            ),
            // mirrored ghost nodes
            Boundary::ZeroFlux => (
                if i == 0 { 1 } else { i - 1 },
                if i == nx - 1 { nx - 2 } else { i + 1 },
                if j == 0 { 1 } else { j - 1 },
                if j == ny - 1 { ny - 2 } else { j + 1 },
            ),
        };
        let c = self.at(i, j);
        let dxx = (self.at(il, j) + self.at(ir, j) - 2.0 * c) / (g.hx * g.hx);
        let dyy = (self.at(i, jd) + self.at(i, ju) - 2.0 * c) / (g.hy * g.hy);
        dxx + dyy
    }

    /// C ← C + dt·[κΔC − χ·C·sink], then clamp negatives to zero.
    fn advance(&mut self, sink: Option<&[f64]>, params: &ModelParams, dt: f64) -> Result<StepDiagnostics> {
        if !(dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be > 0, got {dt}")));
        }
        let kappa = params.taf_diffusivity;
        let chi = params.taf_consumption;
        self.check_stability(kappa, dt)?;

        let mut next = std::mem::take(&mut self.scratch);
        next.resize(self.grid.len(), 0.0);
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let k = self.grid.index(i, j);
                let c = self.values[k];
                let diffusion = if kappa > 0.0 { kappa * self.laplacian_at(i, j) } else { 0.0 };
                let consumption = match sink {
                    Some(s) => chi * c * s[k],
                    None => 0.0,
                };
                next[k] = c + dt * (diffusion - consumption);
            }
        }
        let mut clamped = 0.0;
        for v in next.iter_mut() {
            if !v.is_finite() {
                self.scratch = next;
                return Err(Error::NonFinite("TAF update"));
            }
            if *v < 0.0 {
                clamped -= *v;
                *v = 0.0;
            }
        }
        self.scratch = std::mem::replace(&mut self.values, next);
        self.time += dt;
        Ok(StepDiagnostics {
            clamped_mass: clamped * self.grid.hx * self.grid.hy,
        })
    }
}

pub fn init_taf(
    grid: GridSpec,
    profile: InitialProfile,
    params: &ModelParams,
    boundary: Boundary,
) -> Result<TafField> {
    grid.validate()?;
    let values = match profile {
        InitialProfile::Zero => vec![0.0; grid.len()],
        InitialProfile::Uniform { value } => {
            if !(value >= 0.0) {
                return Err(Error::Config("uniform TAF value must be >= 0".into()));
            }
            vec![value; grid.len()]
        }
        InitialProfile::TumorRidge { amplitude, width } => {
            if !(amplitude >= 0.0) || !(width > 0.0) {
                return Err(Error::Config(
                    "tumor-ridge needs amplitude >= 0 and width > 0".into(),
                ));
            }
            let l = params.tumor_distance;
            let column: Vec<f64> = grid
                .xs()
                .iter()
                .map(|&x| amplitude * (-((x - l) / width).powi(2)).exp())
                .collect();
            (0..grid.ny).flat_map(|_| column.iter().copied()).collect()
        }
    };
    TafField::from_values(grid, values, boundary)
}

/// Hybrid update: consumption by Σ|vⁱ|·δ_σ(x − Xⁱ) over alive tips.
pub fn step_taf_hybrid(
    field: &mut TafField,
    tips: &[Tip],
    params: &ModelParams,
    dt: f64,
) -> Result<StepDiagnostics> {
    let kernel = params.delta_kernel()?;
    step_taf_hybrid_with(field, tips, &kernel, params, dt)
}

pub(crate) fn step_taf_hybrid_with(
    field: &mut TafField,
    tips: &[Tip],
    kernel: &DeltaKernel,
    params: &ModelParams,
    dt: f64,
) -> Result<StepDiagnostics> {
    let consuming = params.taf_consumption > 0.0 && tips.iter().any(|t| t.alive);
    if !consuming {
        return field.advance(None, params, dt);
    }
    let grid = *field.grid();
    let mut sink = vec![0.0; grid.len()];
    for tip in tips.iter().filter(|t| t.alive) {
        kernel.splat(&grid, &mut sink, tip.pos, tip.vel.norm());
    }
    field.advance(Some(&sink), params, dt)
}

/// Mean-field update with a precomputed current density j ≥ 0.
pub fn step_taf_meanfield(
    field: &mut TafField,
    current: &DensityGrid,
    params: &ModelParams,
    dt: f64,
) -> Result<StepDiagnostics> {
    if !current.grid().congruent(field.grid()) {
        return Err(Error::Dimension(
            "current density grid does not match the TAF grid".into(),
        ));
    }
    if current.values().iter().any(|&j| !(j >= 0.0)) {
        return Err(Error::Domain("current density must be >= 0 and finite".into()));
    }
    field.advance(Some(current.values()), params, dt)
}
