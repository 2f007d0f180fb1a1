//! In-memory analysis shared by the subcommands: densities of one snapshot
//! time, their moments in the traveling frame, and the moment fit.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use angio_core::config::{FrameChoice, RunConfig};
use angio_core::soliton::{
    derived_constants, fit_moments, fit_soliton, FrameShape, MomentCell, MomentFitReport, RateContext,
    SolitonFit, SolitonParams,
};
use angio_core::stats::{ensemble_moment, linear_fit, marginal_density, profile_moment, xi_grid, DensityGrid, Profile};
use angio_core::Tip;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Pointwise ⟨p̃²⟩ ≥ ⟨p̃⟩² over the 2-D cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JensenCheck {
    /// Largest (⟨p̃⟩² − ⟨p̃²⟩)/max(⟨p̃²⟩, tiny) over cells; ≤ 0 up to rounding.
    pub worst_deficit: f64,
    pub cells: usize,
    pub passed: bool,
}

/// Relative rounding slack of the Jensen gate.
pub const JENSEN_SLACK: f64 = 1e-12;

pub fn jensen_check(grids: &[DensityGrid]) -> Result<JensenCheck> {
    let m1 = ensemble_moment(grids, 1)?;
    let m2 = ensemble_moment(grids, 2)?;
    let worst = m1
        .values()
        .iter()
        .zip(m2.values())
        .map(|(&a, &b)| (a * a - b) / b.max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(JensenCheck {
        worst_deficit: worst,
        cells: m1.values().len(),
        passed: worst <= JENSEN_SLACK,
    })
}

/// Statistics of the ensemble at one snapshot time.
#[derive(Debug, Clone)]
pub struct Slice {
    pub t_hours: f64,
    pub realizations: usize,
    pub mean_alive: f64,
    /// Fit of the y-reduced mean density, or the reason it failed.
    pub frame: std::result::Result<SolitonFit, String>,
    /// x of ξ = 0.
    pub center: f64,
    /// y-reduced ⟨pⁿ⟩ over x.
    pub lab: BTreeMap<u32, Profile>,
    /// Same on the ξ window.
    pub framed: BTreeMap<u32, Profile>,
    /// Per-realization y-reduced densities on the ξ window.
    pub realizations_framed: Vec<Profile>,
    pub jensen: JensenCheck,
}

/// y-reduced density of every realization, then moments over realizations.
pub fn analyze_slice(cfg: &RunConfig, t_hours: f64, tips: &[&[Tip]], orders: &[u32]) -> Result<Slice> {
    if tips.is_empty() {
        bail!("no realizations at t = {t_hours} h");
    }
    let t_model = t_hours / cfg.run.hours_per_unit;
    let (sx, sy) = (cfg.model.delta_width_x, cfg.model.delta_width_y);
    let grids: Vec<DensityGrid> = tips
        .par_iter()
        .map(|t| marginal_density(t, &cfg.grid, sx, sy, t_model))
        .collect::<angio_core::Result<_>>()?;
    let jensen = jensen_check(&grids)?;
    let profiles: Vec<Profile> = grids.iter().map(DensityGrid::y_reduce).collect();
    let mut lab = BTreeMap::new();
    for &n in orders.iter().chain(std::iter::once(&1)) {
        lab.insert(n, profile_moment(&profiles, n)?);
    }
    let mean = &lab[&1];
    let theory = &cfg.theory.soliton;
    let frame = fit_soliton(mean, theory.gamma, theory.mu, theory.fx).map_err(|e| e.to_string());
    let center = match (cfg.stats.frame, &frame) {
        (FrameChoice::Lab, _) => 0.0,
        (FrameChoice::Soliton, Ok(f)) => f.x_p,
        (FrameChoice::Soliton, Err(_)) => mean.peak().0,
    };
    let xi = xi_grid(cfg.stats.xi_half_width, cfg.stats.xi_points);
    let framed = orders
        .iter()
        .map(|&n| (n, lab[&n].traveling_frame(center, &xi)))
        .collect();
    let realizations_framed = profiles.iter().map(|p| p.traveling_frame(center, &xi)).collect();
    let alive: usize = tips.iter().map(|t| t.iter().filter(|k| k.alive).count()).sum();
    Ok(Slice {
        t_hours,
        realizations: tips.len(),
        mean_alive: alive as f64 / tips.len() as f64,
        frame,
        center,
        lab,
        framed,
        realizations_framed,
        jensen,
    })
}

/// Peak drift of the fitted fronts: (speed per hour, intercept, R²) of x_p
/// against t.
pub fn front_drift(fits: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if fits.len() < 3 {
        return None;
    }
    let (ts, xs): (Vec<f64>, Vec<f64>) = fits.iter().copied().unzip();
    Some(linear_fit(&ts, &xs))
}

/// One snapshot time as seen by the moment fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSlice {
    pub t_hours: f64,
    pub frame: SolitonFit,
    /// ξ-window moment profiles for n = 2, 3.
    pub moments: BTreeMap<u32, (Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOutcome {
    /// Fitted soliton at the snapshot closest to the middle of the run; it
    /// sets S(∞) and ln B of the rate mapping.
    pub reference_time_hours: f64,
    pub soliton: SolitonParams,
    pub frames: Vec<SolitonFit>,
    pub table: MomentFitReport,
}

pub fn rate_context(cfg: &RunConfig, soliton: &SolitonParams) -> Result<RateContext> {
    let dc = derived_constants(soliton)?;
    Ok(RateContext {
        gamma: soliton.gamma,
        s_inf: dc.s_inf,
        ln_b: dc.ln_b,
        h_b: cfg.theory.rates.h_b,
        h_a: cfg.theory.rates.h_a,
        d0: cfg.theory.d0,
    })
}

/// Runs the moment fit over the given times (each needs n = 2 and 3).
pub fn fit_table(cfg: &RunConfig, slices: &[FitSlice]) -> Result<FitOutcome> {
    if slices.is_empty() {
        bail!("no snapshot times to fit");
    }
    let hours: Vec<f64> = slices.iter().map(|s| s.t_hours).collect();
    let mid = 0.5 * (hours[0] + hours[hours.len() - 1]);
    let reference = slices
        .iter()
        .min_by(|a, b| (a.t_hours - mid).abs().total_cmp(&(b.t_hours - mid).abs()))
        .expect("nonempty");
    let soliton = reference.frame.params;
    let ctx = rate_context(cfg, &soliton).context("mapping the reference soliton")?;
    let mut cells = Vec::new();
    let mut frames = Vec::new();
    for s in slices {
        for n in [2u32, 3] {
            let (xi, v) = s
                .moments
                .get(&n)
                .with_context(|| format!("moment n = {n} missing at t = {} h", s.t_hours))?;
            cells.push(MomentCell {
                n,
                t_hours: s.t_hours,
                xi: xi.clone(),
                log_values: v.iter().map(|x| x.ln()).collect(),
            });
        }
        frames.push(FrameShape {
            t_hours: s.t_hours,
            a: s.frame.a,
            b: s.frame.b,
        });
    }
    let table = fit_moments(&cells, &frames, &ctx)?;
    Ok(FitOutcome {
        reference_time_hours: reference.t_hours,
        soliton,
        frames: slices.iter().map(|s| s.frame).collect(),
        table,
    })
}
