//! Log-Poisson processes, geometric Brownian factors and geometric Lévy
//! paths, with closed-form moments and Monte Carlo verifiers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::log_log_slope;

/// q_P = b^γ·β^N with N ~ Poisson(λ), λ = −γ·ln(b)/(β−1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogPoissonSpec {
    pub gamma: f64,
    pub beta: f64,
    pub base: f64,
}

impl LogPoissonSpec {
    pub fn new(gamma: f64, beta: f64, base: f64) -> Result<Self> {
        let spec = Self { gamma, beta, base };
        log_poisson_mean(&spec)?;
        Ok(spec)
    }
}

pub fn log_poisson_mean(spec: &LogPoissonSpec) -> Result<f64> {
    if !(spec.gamma.is_finite() && spec.beta.is_finite() && spec.base.is_finite()) {
        return Err(Error::NonFinite("log-Poisson spec"));
    }
    if spec.base <= 0.0 {
        return Err(Error::InvalidSpec(format!("base must be > 0, got {}", spec.base)));
    }
    if spec.beta == 1.0 {
        return Err(Error::Degenerate("beta = 1".into()));
    }
    let lambda = -spec.gamma * spec.base.ln() / (spec.beta - 1.0);
    // −0.0 is fine
    if lambda < 0.0 {
        return Err(Error::InvalidSpec(format!("Poisson mean {lambda} < 0")));
    }
    Ok(lambda.max(0.0))
}

/// E[q_Pⁿ] = b^{γ(n − (βⁿ−1)/(β−1))}.
pub fn analytic_qp_moment(spec: &LogPoissonSpec, n: u32) -> Result<f64> {
    log_poisson_mean(spec)?;
    if n == 0 {
        return Ok(1.0);
    }
    let geometric = geometric_sum(spec.beta, n);
    Ok((spec.gamma * (n as f64 - geometric) * spec.base.ln()).exp())
}

/// (βⁿ−1)/(β−1) = 1 + β + … + β^{n−1}, summed directly so n = 1 gives 1 exactly.
pub(crate) fn geometric_sum(beta: f64, n: u32) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for _ in 0..n {
        sum += term;
        term *= beta;
    }
    sum
}

pub fn sample_log_poisson<R: Rng + ?Sized>(
    spec: &LogPoissonSpec,
    rng: &mut R,
    count: usize,
) -> Result<Vec<f64>> {
    let lambda = log_poisson_mean(spec)?;
    let scale = spec.base.powf(spec.gamma);
    if lambda == 0.0 {
        return Ok(vec![scale; count]);
    }
    let poisson = Poisson::new(lambda).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    Ok((0..count)
        .map(|_| {
            let n: f64 = poisson.sample(rng);
            scale * spec.beta.powi(n as i32)
        })
        .collect())
}

/// Finitely many Fourier modes of the geometric Brownian factor, with an
/// explicit bound on the neglected tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeomBrownianSpec {
    pub dk: Vec<f64>,
    pub ck: Vec<f64>,
    pub b0k: Vec<f64>,
    /// Bound on Σ|d_k|t + Σc_k^{1/2}|b₀^k| over the truncated modes.
    pub tail_bound: f64,
}

impl GeomBrownianSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dk.len() != self.ck.len() || self.dk.len() != self.b0k.len() {
            return Err(Error::Dimension("d_k, c_k and b0_k must have equal length".into()));
        }
        if self.ck.iter().any(|&c| !(c >= 0.0)) {
            return Err(Error::InvalidSpec("c_k must be >= 0".into()));
        }
        let all = self.dk.iter().chain(&self.ck).chain(&self.b0k);
        if all.clone().any(|v| !v.is_finite()) || !(self.tail_bound >= 0.0) {
            return Err(Error::NonFinite("geometric Brownian spec"));
        }
        Ok(())
    }

    fn weights<'a>(&self, weights: Option<&'a [f64]>) -> Result<std::borrow::Cow<'a, [f64]>> {
        match weights {
            Some(w) if w.len() != self.dk.len() => {
                Err(Error::Dimension("one weight per mode required".into()))
            }
            Some(w) => Ok(std::borrow::Cow::Borrowed(w)),
            None => Ok(std::borrow::Cow::Owned(vec![1.0; self.dk.len()])),
        }
    }

    /// d = −Σ w_k d_k.
    pub fn decay(&self, weights: Option<&[f64]>) -> Result<f64> {
        let w = self.weights(weights)?;
        Ok(-self.dk.iter().zip(w.iter()).map(|(d, w)| w * d).sum::<f64>())
    }

    /// d₀ = −Σ w_k c_k^{1/2} b₀^k.
    pub fn offset(&self, weights: Option<&[f64]>) -> Result<f64> {
        let w = self.weights(weights)?;
        Ok(-self
            .ck
            .iter()
            .zip(&self.b0k)
            .zip(w.iter())
            .map(|((c, b), w)| w * c.sqrt() * b)
            .sum::<f64>())
    }
}

/// E[q_B] = exp(−d·t − d₀).
pub fn geom_brownian_expectation(
    spec: &GeomBrownianSpec,
    t: f64,
    weights: Option<&[f64]>,
) -> Result<f64> {
    spec.validate()?;
    if !(t >= 0.0) {
        return Err(Error::Domain("t must be >= 0".into()));
    }
    Ok((-spec.decay(weights)? * t - spec.offset(weights)?).exp())
}

/// Samples of exp{Σ_k (d_k − c_k/2)t + Σ_k √c_k (b₀^k + B_t^k)}.
pub fn sample_geom_brownian<R: Rng + ?Sized>(
    spec: &GeomBrownianSpec,
    t: f64,
    rng: &mut R,
    count: usize,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let drift: f64 = spec.dk.iter().zip(&spec.ck).map(|(d, c)| (d - 0.5 * c) * t).sum();
    let start: f64 = spec.ck.iter().zip(&spec.b0k).map(|(c, b)| c.sqrt() * b).sum();
    let st = t.sqrt();
    Ok((0..count)
        .map(|_| {
            let noise: f64 = spec
                .ck
                .iter()
                .map(|c| c.sqrt() * st * rng.sample::<f64, _>(StandardNormal))
                .sum();
            (drift + start + noise).exp()
        })
        .collect())
}

/// Distribution of multiplicative jump sizes h (with 1 + h > 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JumpLaw {
    Constant { h: f64 },
    Uniform { lo: f64, hi: f64 },
    TwoPoint { h1: f64, h2: f64, p1: f64 },
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            JumpLaw::Constant { h } => h > -1.0,
            JumpLaw::Uniform { lo, hi } => lo > -1.0 && hi >= lo,
            JumpLaw::TwoPoint { h1, h2, p1 } => h1 > -1.0 && h2 > -1.0 && (0.0..=1.0).contains(&p1),
        };
        let finite = match *self {
            JumpLaw::Constant { h } => h.is_finite(),
            JumpLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite(),
            JumpLaw::TwoPoint { h1, h2, p1 } => h1.is_finite() && h2.is_finite() && p1.is_finite(),
        };
        if ok && finite {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("jump law {self:?} allows 1 + h <= 0")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            JumpLaw::Constant { h } => h,
            JumpLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            JumpLaw::TwoPoint { h1, h2, p1 } => p1 * h1 + (1.0 - p1) * h2,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpLaw::Constant { h } => h,
            JumpLaw::Uniform { lo, hi } => {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            }
            JumpLaw::TwoPoint { h1, h2, p1 } => {
                if rng.random::<f64>() < p1 {
                    h1
                } else {
                    h2
                }
            }
        }
    }
}

/// dZ = Z[r·dt + α·dB + ∫h N̄(dz, dt)], Z₀ = z₀, compound-Poisson jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomLevySpec {
    pub r: f64,
    pub alpha: f64,
    pub jump_law: JumpLaw,
    pub jump_rate: f64,
    pub z0: f64,
}

impl GeomLevySpec {
    pub fn validate(&self) -> Result<()> {
        self.jump_law.validate()?;
        if !(self.jump_rate >= 0.0) || !self.jump_rate.is_finite() {
            return Err(Error::InvalidSpec("jump_rate must be >= 0".into()));
        }
        if !(self.z0 > 0.0) || !self.r.is_finite() || !self.alpha.is_finite() {
            return Err(Error::InvalidSpec("need z0 > 0 and finite r, alpha".into()));
        }
        Ok(())
    }

    /// Drift after compensation: r − λ·E[h].
    pub fn compensated_drift(&self) -> f64 {
        self.r - self.jump_rate * self.jump_law.mean()
    }
}

/// One realization of the driving noise on [0, T]: Brownian increments on a
/// fine grid and the exact jump times and sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyNoise {
    pub horizon: f64,
    pub fine_dt: f64,
    pub dw: Vec<f64>,
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
}

impl LevyNoise {
    pub fn sample<R: Rng + ?Sized>(spec: &GeomLevySpec, horizon: f64, fine_dt: f64, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let steps = step_count(horizon, fine_dt)?;
        let h = horizon / steps as f64;
        let sh = h.sqrt();
        let dw = (0..steps).map(|_| sh * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut jump_times = Vec::new();
        let mut jump_sizes = Vec::new();
        if spec.jump_rate > 0.0 {
            let exp = Exp::new(spec.jump_rate).map_err(|e| Error::InvalidSpec(e.to_string()))?;
            let mut t: f64 = exp.sample(rng);
            while t <= horizon {
                jump_times.push(t);
                jump_sizes.push(spec.jump_law.sample(rng));
                t += exp.sample(rng);
            }
        }
        Ok(Self {
            horizon,
            fine_dt: h,
            dw,
            jump_times,
            jump_sizes,
        })
    }

    pub fn brownian_terminal(&self) -> f64 {
        self.dw.iter().sum()
    }
}

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::Domain("need T > 0 and dt > 0".into()));
    }
    let n = (horizon / dt).round();
    if n < 1.0 || ((n * dt - horizon) / horizon).abs() > 1e-9 {
        return Err(Error::Domain(format!("dt = {dt} does not divide T = {horizon}")));
    }
    Ok(n as usize)
}

/// Z_T = z₀·exp{(r − λE[h] − α²/2)T + αB_T}·Π(1 + h_i).
pub fn geometric_levy_closed_form(spec: &GeomLevySpec, noise: &LevyNoise) -> Result<f64> {
    spec.validate()?;
    let t = noise.horizon;
    let mut log_z = spec.z0.ln()
        + (spec.compensated_drift() - 0.5 * spec.alpha * spec.alpha) * t
        + spec.alpha * noise.brownian_terminal();
    for &h in &noise.jump_sizes {
        log_z += (1.0 + h).ln();
    }
    Ok(log_z.exp())
}

/// Simulated path of a geometric Lévy process.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl LevyPath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("path has at least the initial point")
    }
}

/// Milstein steps of size dt for the continuous part, driven by the fine
/// increments of `noise` summed in blocks; each jump multiplies the path by
/// (1 + h) at the end of the step containing it. dt must be a multiple of
/// the noise's fine step.
pub fn simulate_with_noise(spec: &GeomLevySpec, noise: &LevyNoise, dt: f64) -> Result<LevyPath> {
    spec.validate()?;
    let steps = step_count(noise.horizon, dt)?;
    let block = (dt / noise.fine_dt).round() as usize;
    if block == 0 || block * steps != noise.dw.len() {
        return Err(Error::Domain(format!(
            "dt = {dt} is not a multiple of the noise step {}",
            noise.fine_dt
        )));
    }
    let h = noise.horizon / steps as f64;
    let mu = spec.compensated_drift();
    let a = spec.alpha;
    if (0.5 * a * a - mu) * h >= 0.5 {
        return Err(Error::StepSize(format!(
            "dt = {h} too coarse for alpha = {a}, drift = {mu}"
        )));
    }
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut z = spec.z0;
    times.push(0.0);
    values.push(z);
    let mut next_jump = 0;
    for k in 0..steps {
        let db: f64 = noise.dw[k * block..(k + 1) * block].iter().sum();
        z *= 1.0 + mu * h + a * db + 0.5 * a * a * (db * db - h);
        let t_end = (k + 1) as f64 * h;
        while next_jump < noise.jump_times.len() && noise.jump_times[next_jump] <= t_end + 1e-12 * t_end {
            z *= 1.0 + noise.jump_sizes[next_jump];
            next_jump += 1;
        }
        times.push(t_end);
        values.push(z);
    }
    Ok(LevyPath { times, values })
}

/// Draws fresh noise with fine step dt and simulates on it.
pub fn simulate_geometric_levy<R: Rng + ?Sized>(
    spec: &GeomLevySpec,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<LevyPath> {
    let noise = LevyNoise::sample(spec, horizon, dt, rng)?;
    simulate_with_noise(spec, &noise, dt)
}

/// Mean pathwise relative error against the closed form at each step size,
/// every path sharing one noise draw across all refinements, and the fitted
/// log–log slope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub dts: Vec<f64>,
    pub mean_rel_errors: Vec<f64>,
    pub slope: f64,
    pub paths: usize,
}

pub fn strong_convergence<R: Rng + ?Sized>(
    spec: &GeomLevySpec,
    horizon: f64,
    dts: &[f64],
    paths: usize,
    rng: &mut R,
) -> Result<ConvergenceStudy> {
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sums = vec![0.0; dts.len()];
    for _ in 0..paths {
        let noise = LevyNoise::sample(spec, horizon, finest, rng)?;
        let exact = geometric_levy_closed_form(spec, &noise)?;
        for (s, &dt) in sums.iter_mut().zip(dts) {
            let sim = simulate_with_noise(spec, &noise, dt)?.terminal();
            *s += ((sim - exact) / exact).abs();
        }
    }
    let mean_rel_errors: Vec<f64> = sums.iter().map(|s| s / paths as f64).collect();
    Ok(ConvergenceStudy {
        dts: dts.to_vec(),
        slope: log_log_slope(dts, &mean_rel_errors),
        mean_rel_errors,
        paths,
    })
}

/// Mean and standard error.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub spec: serde_json::Value,
    pub analytic: f64,
    pub monte_carlo: f64,
    pub standard_error: f64,
    /// Allowed deviation in standard errors (or, for convergence, in slope).
    pub tolerance: f64,
    pub samples: usize,
    pub seed: u64,
    pub stream: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub samples: usize,
    pub brownian_paths: usize,
    pub levy_paths: usize,
    /// Negative control: checks are run against a spec with a wrong β.
    pub tamper: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 20240,
            samples: 1_000_000,
            brownian_paths: 100_000,
            levy_paths: 400,
            tamper: false,
        }
    }
}

/// Default spec of the log-Poisson checks.
pub const VERIFY_LOG_POISSON: LogPoissonSpec = LogPoissonSpec {
    gamma: 1.0,
    beta: 0.5,
    base: 2.0,
};

pub fn verify_geom_brownian_spec() -> GeomBrownianSpec {
    GeomBrownianSpec {
        dk: vec![-0.1],
        ck: vec![0.04],
        b0k: vec![0.0],
        tail_bound: 0.0,
    }
}

pub const VERIFY_GEOM_LEVY: GeomLevySpec = GeomLevySpec {
    r: 0.05,
    alpha: 0.4,
    jump_law: JumpLaw::Uniform { lo: -0.3, hi: 0.5 },
    jump_rate: 2.0,
    z0: 1.0,
};

/// Monte Carlo against closed forms: E[q_P] = 1, E[q_P²], E[q_P³], the
/// geometric Brownian expectation and the strong order of the geometric
/// Lévy scheme. Each check draws from its own stream of `seed`.
pub fn verify_levy(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let lp = VERIFY_LOG_POISSON;
    let sampled = if opts.tamper {
        LogPoissonSpec { beta: 0.6, ..lp }
    } else {
        lp
    };
    let rng_for = |stream: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(opts.seed);
        r.set_stream(stream);
        r
    };
    let mut checks = Vec::new();

    let mut rng = rng_for(1);
    let samples = sample_log_poisson(&sampled, &mut rng, opts.samples)?;
    for n in 1..=3u32 {
        let powered: Vec<f64> = samples.iter().map(|q| q.powi(n as i32)).collect();
        let (mean, se) = mean_se(&powered);
        let analytic = analytic_qp_moment(&lp, n)?;
        checks.push(Check {
            name: format!("log-poisson moment n={n}"),
            spec: spec_json(&lp),
            analytic,
            monte_carlo: mean,
            standard_error: se,
            tolerance: 4.0,
            samples: opts.samples,
            seed: opts.seed,
            stream: 1,
            pass: (mean - analytic).abs() <= 4.0 * se,
        });
    }

    let gb = verify_geom_brownian_spec();
    let t = 10.0;
    let mut rng = rng_for(2);
    let gb_sampled = if opts.tamper {
        GeomBrownianSpec { dk: vec![-0.12], ..gb.clone() }
    } else {
        gb.clone()
    };
    let draws = sample_geom_brownian(&gb_sampled, t, &mut rng, opts.brownian_paths)?;
    let (mean, se) = mean_se(&draws);
    let analytic = geom_brownian_expectation(&gb, t, None)?;
    checks.push(Check {
        name: "geometric brownian expectation t=10".into(),
        spec: spec_json(&gb),
        analytic,
        monte_carlo: mean,
        standard_error: se,
        tolerance: 3.0,
        samples: opts.brownian_paths,
        seed: opts.seed,
        stream: 2,
        pass: (mean - analytic).abs() <= 3.0 * se,
    });

    let gl = VERIFY_GEOM_LEVY;
    let mut rng = rng_for(3);
    let dts = [0.01, 0.005, 0.0025];
    let study = if opts.tamper {
        // Euler–Maruyama (no Milstein term) converges at order 1/2
        strong_convergence_euler(&gl, 1.0, &dts, opts.levy_paths, &mut rng)?
    } else {
        strong_convergence(&gl, 1.0, &dts, opts.levy_paths, &mut rng)?
    };
    let decreasing = study.mean_rel_errors.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check {
        name: "geometric levy strong order".into(),
        spec: spec_json(&gl),
        analytic: 1.0,
        monte_carlo: study.slope,
        standard_error: 0.0,
        tolerance: 0.3,
        samples: opts.levy_paths,
        seed: opts.seed,
        stream: 3,
        pass: decreasing && (study.slope - 1.0).abs() <= 0.3,
    });
    Ok(checks)
}

fn strong_convergence_euler<R: Rng + ?Sized>(
    spec: &GeomLevySpec,
    horizon: f64,
    dts: &[f64],
    paths: usize,
    rng: &mut R,
) -> Result<ConvergenceStudy> {
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sums = vec![0.0; dts.len()];
    let mu = spec.compensated_drift();
    for _ in 0..paths {
        let noise = LevyNoise::sample(spec, horizon, finest, rng)?;
        let exact = geometric_levy_closed_form(spec, &noise)?;
        for (s, &dt) in sums.iter_mut().zip(dts) {
            let block = (dt / noise.fine_dt).round() as usize;
            let mut z = spec.z0;
            for chunk in noise.dw.chunks(block) {
                let db: f64 = chunk.iter().sum();
                z *= 1.0 + mu * dt + spec.alpha * db;
            }
            for h in &noise.jump_sizes {
                z *= 1.0 + h;
            }
            *s += ((z - exact) / exact).abs();
        }
    }
    let mean_rel_errors: Vec<f64> = sums.iter().map(|s| s / paths as f64).collect();
    Ok(ConvergenceStudy {
        dts: dts.to_vec(),
        slope: log_log_slope(dts, &mean_rel_errors),
        mean_rel_errors,
        paths,
    })
}

fn spec_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rng(stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(77);
        r.set_stream(stream);
        r
    }

    #[test]
    fn poisson_mean_values() {
        let l = log_poisson_mean(&VERIFY_LOG_POISSON).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_poisson_mean(&LogPoissonSpec { gamma: 1.0, beta: 0.5, base: 1.0 }).unwrap(), 0.0);
        let k: f64 = 7.0;
        let ns = LogPoissonSpec { gamma: 2.0 / 3.0, beta: 2.0 / 3.0, base: k };
        assert!((log_poisson_mean(&ns).unwrap() - 2.0 * k.ln()).abs() < 1e-14);
    }

    #[test]
    fn poisson_mean_errors() {
        assert!(matches!(
            log_poisson_mean(&LogPoissonSpec { gamma: 1.0, beta: 1.0, base: 2.0 }),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            log_poisson_mean(&LogPoissonSpec { gamma: 1.0, beta: 2.0, base: 2.0 }),
            Err(Error::InvalidSpec(_))
        ));
        assert!(LogPoissonSpec::new(1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn moment_values() {
        let s = VERIFY_LOG_POISSON;
        assert_eq!(analytic_qp_moment(&s, 0).unwrap(), 1.0);
        assert_eq!(analytic_qp_moment(&s, 1).unwrap(), 1.0);
        assert!((analytic_qp_moment(&s, 2).unwrap() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn zero_rate_samples_are_constant() {
        let s = LogPoissonSpec { gamma: 0.7, beta: 0.5, base: 1.0 };
        let v = sample_log_poisson(&s, &mut rng(0), 10).unwrap();
        assert!(v.iter().all(|&q| q == 1.0));
    }

    #[test]
    fn log_poisson_mc_matches_moments() {
        let s = VERIFY_LOG_POISSON;
        let v = sample_log_poisson(&s, &mut rng(1), 200_000).unwrap();
        let (m, se) = mean_se(&v);
        assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
        let sq: Vec<f64> = v.iter().map(|q| q * q).collect();
        let (m2, se2) = mean_se(&sq);
        assert!((m2 - 2f64.sqrt()).abs() < 4.0 * se2);
        // Jensen: E[ln q] ≤ ln E[q] = 0
        let mean_log = v.iter().map(|q| q.ln()).sum::<f64>() / v.len() as f64;
        assert!(mean_log <= 0.0);
    }

    #[test]
    fn geom_brownian_values() {
        let zero = GeomBrownianSpec { dk: vec![-0.3], ck: vec![1.0], b0k: vec![0.0], tail_bound: 0.0 };
        assert_eq!(geom_brownian_expectation(&zero, 0.0, None).unwrap(), 1.0);
        let one = GeomBrownianSpec { dk: vec![-0.1], ck: vec![0.04], b0k: vec![0.0], tail_bound: 0.0 };
        assert!((geom_brownian_expectation(&one, 10.0, None).unwrap() - (-1f64).exp()).abs() < 1e-15);
        // d = 1.8 per hour, d₀ = 0, t = 20 h
        let table = GeomBrownianSpec { dk: vec![-1.0, -0.8], ck: vec![0.0, 0.0], b0k: vec![0.0, 0.0], tail_bound: 0.0 };
        let e = geom_brownian_expectation(&table, 20.0, None).unwrap();
        assert!((e.ln() + 36.0).abs() < 1e-12);
        let w = [0.5, 0.25];
        assert!((table.decay(Some(&w)).unwrap() - 0.7).abs() < 1e-15);
        let off = GeomBrownianSpec { dk: vec![0.0], ck: vec![4.0], b0k: vec![0.5], tail_bound: 0.0 };
        assert!((off.offset(None).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn geom_brownian_mc() {
        let s = verify_geom_brownian_spec();
        let v = sample_geom_brownian(&s, 10.0, &mut rng(2), 100_000).unwrap();
        let (m, se) = mean_se(&v);
        assert!((m - (-1f64).exp()).abs() < 3.0 * se);
    }

    #[test]
    fn deterministic_levy_is_exponential() {
        let spec = GeomLevySpec { r: 0.3, alpha: 0.0, jump_law: JumpLaw::Constant { h: 0.0 }, jump_rate: 0.0, z0: 2.0 };
        let noise = LevyNoise::sample(&spec, 1.0, 0.01, &mut rng(3)).unwrap();
        let cf = geometric_levy_closed_form(&spec, &noise).unwrap();
        assert!((cf - 2.0 * 0.3f64.exp()).abs() < 1e-14);
        let sim = simulate_with_noise(&spec, &noise, 0.01).unwrap().terminal();
        // Milstein with α = 0 is explicit Euler on the drift
        assert!((sim - 2.0 * 1.003f64.powi(100)).abs() < 1e-12);
    }

    #[test]
    fn jumps_are_exact() {
        let spec = GeomLevySpec { r: 0.0, alpha: 0.0, jump_law: JumpLaw::Constant { h: 1.0 }, jump_rate: 3.0, z0: 1.0 };
        let noise = LevyNoise::sample(&spec, 2.0, 0.01, &mut rng(4)).unwrap();
        let sim = simulate_with_noise(&spec, &noise, 0.01).unwrap().terminal();
        let cf = geometric_levy_closed_form(&spec, &noise).unwrap();
        // compensator −λE[h] = −3 per unit time, Euler on the drift part
        let expected = 2f64.powi(noise.jump_times.len() as i32) * 0.97f64.powi(200);
        assert!((sim - expected).abs() < 1e-9 * expected);
        assert!((cf - 2f64.powi(noise.jump_times.len() as i32) * (-6f64).exp()).abs() < 1e-9 * cf);
    }

    #[test]
    fn compensated_pure_jumps_are_a_martingale() {
        let spec = GeomLevySpec { r: 0.0, alpha: 0.0, jump_law: JumpLaw::Constant { h: 1.0 }, jump_rate: 0.5, z0: 1.0 };
        let mut r = rng(5);
        let v: Vec<f64> = (0..100_000)
            .map(|_| {
                let noise = LevyNoise::sample(&spec, 1.0, 1.0, &mut r).unwrap();
                geometric_levy_closed_form(&spec, &noise).unwrap()
            })
            .collect();
        let (m, se) = mean_se(&v);
        assert!((m - 1.0).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn invalid_jump_law_is_rejected() {
        let spec = GeomLevySpec { r: 0.0, alpha: 0.1, jump_law: JumpLaw::Constant { h: -1.0 }, jump_rate: 1.0, z0: 1.0 };
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
        let spec = GeomLevySpec { jump_law: JumpLaw::Uniform { lo: -1.5, hi: 0.2 }, ..spec };
        assert!(simulate_geometric_levy(&spec, 1.0, 0.01, &mut rng(6)).is_err());
    }

    #[test]
    fn milstein_converges_at_order_one() {
        let study = strong_convergence(&VERIFY_GEOM_LEVY, 1.0, &[0.01, 0.005, 0.0025], 200, &mut rng(7)).unwrap();
        assert!((study.slope - 1.0).abs() < 0.3, "{study:?}");
    }

    #[test]
    fn tamper_mode_fails_checks() {
        let opts = VerifyOptions { samples: 100_000, brownian_paths: 20_000, levy_paths: 100, tamper: true, ..Default::default() };
        let checks = verify_levy(&opts).unwrap();
        assert!(checks.iter().filter(|c| !c.pass).count() >= 3);
        let clean = verify_levy(&VerifyOptions { tamper: false, ..opts }).unwrap();
        assert!(clean.iter().all(|c| c.pass), "{clean:#?}");
    }

    proptest! {
        #[test]
        fn first_moment_is_one(gamma in -3.0f64..3.0, beta in -4.0f64..4.0, base in 0.05f64..50.0) {
            let spec = LogPoissonSpec { gamma, beta, base };
            if let Ok(m) = analytic_qp_moment(&spec, 1) {
                prop_assert_eq!(m, 1.0);
            }
        }

        #[test]
        fn log_moment_is_convex(gamma in 0.05f64..2.0, beta in 0.05f64..0.95, base in 1.01f64..20.0) {
            let spec = LogPoissonSpec { gamma, beta, base };
            let l: Vec<f64> = (0..=5).map(|n| analytic_qp_moment(&spec, n).unwrap().ln()).collect();
            for w in l.windows(3) {
                prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-9);
            }
        }

        #[test]
        fn levy_paths_stay_positive(alpha in 0.0f64..1.5, lo in -0.9f64..0.0, rate in 0.0f64..5.0, seed in 0u64..1000) {
            let spec = GeomLevySpec { r: 0.1, alpha, jump_law: JumpLaw::Uniform { lo, hi: 0.5 }, jump_rate: rate, z0: 1.0 };
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let path = simulate_geometric_levy(&spec, 1.0, 0.01, &mut r).unwrap();
            prop_assert!(path.values.iter().all(|&z| z > 0.0));
        }
    }
}
