//! Subcommands. Each returns an error (nonzero exit) when an artifact could
//! not be produced or an enabled gate failed; outputs written before a gate
//! failure are kept for inspection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use angio_core::config::{parse_hours, parse_snapshot_list, FrameChoice, Preset, RunConfig};
use angio_core::levy::{verify_levy, Check, VerifyOptions};
use angio_core::soliton::{
    betas, derived_constants, theoretical_moment, theoretical_structure_function, zeta, ExponentMode, Increment,
    MomentFitReport, RateContext, Rates, SolitonFit, SolitonParams, TheoryExponents,
};
use angio_core::stats::{empirical_structure_function, xi_grid};
use angio_core::tips::run_realization;
use angio_core::GridSpec;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::output::*;
use crate::pipeline::{analyze_slice, fit_table, FitOutcome, FitSlice, JensenCheck, Slice};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub realizations: Option<u64>,
    pub snapshots: Option<String>,
    pub preset: Option<String>,
}

/// Config file (or defaults), then preset, then explicit flags.
pub fn resolve_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &o.preset {
        cfg.apply_preset(Preset::parse(p)?);
    }
    if let Some(s) = o.seed {
        cfg.run.seed = s;
    }
    if let Some(n) = o.realizations {
        cfg.run.realizations = n;
    }
    if let Some(s) = &o.snapshots {
        cfg.run.snapshots = parse_snapshot_list(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| anyhow!("thread pool: {e}"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_path: Option<PathBuf>,
    pub config_hash: String,
    pub seed: u64,
    pub realizations: u64,
    pub snapshots: Vec<String>,
    pub snapshot_hours: Vec<f64>,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub complete: bool,
    /// Realizations computed by the invocation that wrote this manifest.
    pub computed_now: u64,
    pub wall_time_s: f64,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PartialMarker {
    config_hash: String,
    seed: u64,
}

fn existing_hash(out: &Path) -> Result<Option<String>> {
    let marker = out.join(PARTIAL_MARKER);
    if marker.exists() {
        return Ok(Some(read_json::<PartialMarker>(&marker)?.config_hash));
    }
    let manifest = out.join(MANIFEST);
    if manifest.exists() {
        return Ok(Some(read_json::<RunManifest>(&manifest)?.config_hash));
    }
    Ok(None)
}

/// Runs realizations ω = 1..𝒩 that have no snapshot file yet and writes the
/// manifest. A run with another config hash in `out` is refused unless
/// `force`, which clears it first.
pub fn simulate(
    cfg: &RunConfig,
    config_path: Option<&Path>,
    out: &Path,
    workers: Option<usize>,
    force: bool,
) -> Result<RunManifest> {
    let started = Instant::now();
    cfg.validate()?;
    let hash = cfg.hash();
    let seed = cfg.run.seed;
    if let Some(old) = existing_hash(out)? {
        if old != hash {
            if !force {
                bail!(
                    "{} holds a run with config hash {old}, this config hashes to {hash}; \
                     choose another --out or pass --force to discard it",
                    out.display()
                );
            }
            warn!("discarding run {old} in {}", out.display());
            let dir = out.join(REALIZATIONS_DIR);
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
            let _ = fs::remove_file(out.join(MANIFEST));
        }
    }
    fs::create_dir_all(out.join(REALIZATIONS_DIR))
        .with_context(|| format!("output directory {} is not writable", out.display()))?;
    write_json(&out.join(PARTIAL_MARKER), &PartialMarker { config_hash: hash.clone(), seed })?;

    let setup = cfg.sim_setup()?;
    let times = cfg.snapshot_times()?;
    let hours = cfg.snapshot_hours()?;
    let missing: Vec<u64> = (1..=cfg.run.realizations)
        .filter(|&w| !realization_path(out, w).exists())
        .collect();
    if (missing.len() as u64) < cfg.run.realizations {
        info!(
            "resuming: {} of {} realizations already on disk",
            cfg.run.realizations - missing.len() as u64,
            cfg.run.realizations
        );
    }
    pool(workers)?.install(|| {
        missing.par_iter().try_for_each(|&omega| -> Result<()> {
            let r = run_realization(&setup, seed, omega, &times, false)
                .with_context(|| format!("realization {omega}"))?;
            if r.saturated {
                warn!("realization {omega} reached max_alive_tips; branching was capped");
            }
            let snaps: Vec<(f64, &[angio_core::Tip])> =
                hours.iter().zip(&r.snapshots).map(|(&h, s)| (h, s.tips.as_slice())).collect();
            atomic_write(&realization_path(out, omega), snapshot_csv(&hash, seed, omega, &snaps).as_bytes())
        })
    })?;

    let manifest = RunManifest {
        version: VERSION.into(),
        config_path: config_path.map(Path::to_path_buf),
        config_hash: hash,
        seed,
        realizations: cfg.run.realizations,
        snapshots: cfg.run.snapshots.clone(),
        snapshot_hours: hours,
        out_dir: out.to_path_buf(),
        workers,
        complete: true,
        computed_now: missing.len() as u64,
        wall_time_s: started.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    atomic_write(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    fs::remove_file(out.join(PARTIAL_MARKER))?;
    Ok(manifest)
}

pub fn load_manifest(out: &Path) -> Result<RunManifest> {
    if out.join(PARTIAL_MARKER).exists() {
        bail!(
            "the run in {} is incomplete; rerun `angio simulate` with the same config to resume it",
            out.display()
        );
    }
    let path = out.join(MANIFEST);
    if !path.exists() {
        bail!("no run manifest in {}; run `angio simulate` first", out.display());
    }
    read_json(&path)
}

/// Reads every realization file of a run, failing with the list of absent ω.
pub fn load_realizations(out: &Path, m: &RunManifest) -> Result<Vec<RealizationFile>> {
    let absent: Vec<u64> = (1..=m.realizations)
        .filter(|&w| !realization_path(out, w).exists())
        .collect();
    if !absent.is_empty() {
        let shown: Vec<String> = absent.iter().take(20).map(u64::to_string).collect();
        bail!(
            "{} of {} realization files are missing (ω = {}{}); rerun `angio simulate` to fill them in",
            absent.len(),
            m.realizations,
            shown.join(", "),
            if absent.len() > 20 { ", ..." } else { "" }
        );
    }
    (1..=m.realizations)
        .into_par_iter()
        .map(|w| {
            let path = realization_path(out, w);
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let f = parse_snapshot_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
            if f.config_hash.as_deref() != Some(m.config_hash.as_str()) {
                bail!("{} was written by another config", path.display());
            }
            Ok(f)
        })
        .collect()
}

/// Slices at the requested hours (all recorded ones by default).
pub fn slices_from_files(
    cfg: &RunConfig,
    files: &[RealizationFile],
    hours: &[f64],
    orders: &[u32],
) -> Result<Vec<Slice>> {
    hours
        .iter()
        .map(|&h| {
            let tips: Vec<&[angio_core::Tip]> = files
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    f.tips_at(h)
                        .ok_or_else(|| anyhow!("realization {} has no snapshot at {h} h", k + 1))
                })
                .collect::<Result<_>>()?;
            analyze_slice(cfg, h, &tips, orders)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentFile {
    pub n: u32,
    pub file: String,
    /// ∫ value dξ over the window.
    pub integral: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentTime {
    pub t_hours: f64,
    /// x of ξ = 0.
    pub center: f64,
    pub mean_alive: f64,
    pub fit: Option<SolitonFit>,
    pub fit_error: Option<String>,
    pub jensen: JensenCheck,
    pub files: Vec<MomentFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsIndex {
    pub config_hash: String,
    pub seed: u64,
    pub realizations: u64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub grid: GridSpec,
    pub frame: FrameChoice,
    pub xi_half_width: f64,
    pub xi_points: usize,
    /// Each realization's density is integrated over y before powers are taken.
    pub y_reduction: String,
    pub jensen_gate: bool,
    pub times: Vec<MomentTime>,
}

fn select_hours(m: &RunManifest, snapshots: Option<&str>) -> Result<Vec<f64>> {
    let Some(list) = snapshots else {
        return Ok(m.snapshot_hours.clone());
    };
    let wanted: Vec<f64> = parse_snapshot_list(list)?
        .iter()
        .map(|s| parse_hours(s))
        .collect::<angio_core::Result<_>>()?;
    let absent: Vec<String> = wanted
        .iter()
        .filter(|h| !m.snapshot_hours.iter().any(|r| (r - *h).abs() < 1e-9))
        .map(|h| hours_label(*h))
        .collect();
    if !absent.is_empty() {
        bail!(
            "snapshots {} were not recorded (run has {})",
            absent.join(", "),
            m.snapshots.join(", ")
        );
    }
    Ok(wanted)
}

pub fn moment_file_name(n: u32, hours: f64) -> String {
    format!("m{n}_t{}.csv", hours_label(hours))
}

/// y-reduced traveling-frame moments per (n, t); with `jensen` the command
/// fails when ⟨p̃²⟩ < ⟨p̃⟩² in any cell.
pub fn moments(out: &Path, orders: Option<&[u32]>, snapshots: Option<&str>, jensen: bool) -> Result<MomentsIndex> {
    let m = load_manifest(out)?;
    let cfg = &m.config;
    let orders: Vec<u32> = orders.map(<[u32]>::to_vec).unwrap_or_else(|| cfg.stats.orders.clone());
    if orders.is_empty() || orders.contains(&0) {
        bail!("moment orders must be >= 1");
    }
    let hours = select_hours(&m, snapshots)?;
    let files = load_realizations(out, &m)?;
    let slices = slices_from_files(cfg, &files, &hours, &orders)?;
    let comments = provenance_comments(&m.config_hash, m.seed);
    let dir = out.join(MOMENTS_DIR);
    let mut times = Vec::new();
    for s in &slices {
        let mut entries = Vec::new();
        for (&n, p) in &s.framed {
            let name = moment_file_name(n, s.t_hours);
            let head = format!("{comments}# n={n}\n# t_hours={}\n# center={}\n", s.t_hours, s.center);
            atomic_write(&dir.join(&name), profile_csv(&head, &p.xs, &p.values).as_bytes())?;
            entries.push(MomentFile {
                n,
                file: name,
                integral: p.integral(),
            });
        }
        if let Err(e) = &s.frame {
            warn!("soliton fit at {} h failed: {e}", s.t_hours);
        }
        times.push(MomentTime {
            t_hours: s.t_hours,
            center: s.center,
            mean_alive: s.mean_alive,
            fit: s.frame.as_ref().ok().copied(),
            fit_error: s.frame.as_ref().err().cloned(),
            jensen: s.jensen,
            files: entries,
        });
    }
    let index = MomentsIndex {
        config_hash: m.config_hash.clone(),
        seed: m.seed,
        realizations: m.realizations,
        sigma_x: cfg.model.delta_width_x,
        sigma_y: cfg.model.delta_width_y,
        grid: cfg.grid,
        frame: cfg.stats.frame,
        xi_half_width: cfg.stats.xi_half_width,
        xi_points: cfg.stats.xi_points,
        y_reduction: "per-realization y-integral, then powers".into(),
        jensen_gate: jensen,
        times,
    };
    write_json(&dir.join("index.json"), &index)?;
    if jensen {
        let bad: Vec<String> = index
            .times
            .iter()
            .filter(|t| !t.jensen.passed)
            .map(|t| format!("{} h (deficit {:e})", t.t_hours, t.jensen.worst_deficit))
            .collect();
        if !bad.is_empty() {
            bail!("Jensen gate failed: <p^2> < <p>^2 at {}", bad.join(", "));
        }
    }
    Ok(index)
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReportFile<'a> {
    pub config_hash: &'a str,
    pub seed: u64,
    pub realizations: u64,
    pub columns: [&'static str; 6],
    pub reference_time_hours: f64,
    pub soliton: SolitonParams,
    pub s_inf: f64,
    pub big_b: f64,
    pub frames: &'a [SolitonFit],
    pub table: &'a MomentFitReport,
}

/// Fitted soliton frames plus the moment table; fails when a frame or a
/// table cell could not be fitted.
pub fn fit(out: &Path) -> Result<FitOutcome> {
    let m = load_manifest(out)?;
    let dir = out.join(MOMENTS_DIR);
    let index_path = dir.join("index.json");
    if !index_path.exists() {
        bail!("no moments in {}; run `angio moments` first", out.display());
    }
    let index: MomentsIndex = read_json(&index_path)?;
    if index.config_hash != m.config_hash {
        bail!("moments in {} belong to another run; rerun `angio moments`", dir.display());
    }
    let mut slices = Vec::new();
    let mut failures = Vec::new();
    for t in &index.times {
        let Some(frame) = t.fit else {
            failures.push(format!(
                "{} h: {}",
                t.t_hours,
                t.fit_error.clone().unwrap_or_else(|| "no fit".into())
            ));
            continue;
        };
        let mut moments = BTreeMap::new();
        for n in [2u32, 3] {
            let f = t
                .files
                .iter()
                .find(|f| f.n == n)
                .ok_or_else(|| anyhow!("moment n = {n} at {} h missing; run `angio moments` with orders 2,3", t.t_hours))?;
            let text = fs::read_to_string(dir.join(&f.file))?;
            moments.insert(n, parse_profile_csv(&text)?);
        }
        slices.push(FitSlice {
            t_hours: t.t_hours,
            frame,
            moments,
        });
    }
    if !failures.is_empty() {
        bail!("soliton fit failed at {}", failures.join("; "));
    }
    let outcome = fit_table(&m.config, &slices)?;
    let fdir = out.join(FIT_DIR);
    let table_csv = format!(
        "{}{}",
        provenance_comments(&m.config_hash, m.seed),
        outcome.table.to_csv()
    );
    atomic_write(&fdir.join("table.csv"), table_csv.as_bytes())?;
    let dc = derived_constants(&outcome.soliton)?;
    write_json(
        &fdir.join("report.json"),
        &FitReportFile {
            config_hash: &m.config_hash,
            seed: m.seed,
            realizations: m.realizations,
            columns: ["m_b", "h_b", "m_a", "h_a", "d_t", "d"],
            reference_time_hours: outcome.reference_time_hours,
            soliton: outcome.soliton,
            s_inf: dc.s_inf,
            big_b: dc.big_b,
            frames: &outcome.frames,
            table: &outcome.table,
        },
    )?;
    if !outcome.table.all_ok {
        let bad: Vec<String> = outcome
            .table
            .rows
            .iter()
            .filter(|r| r.status != "ok")
            .map(|r| format!("{}: {}", r.label, r.status))
            .collect();
        bail!("moment fit has degenerate cells: {}", bad.join("; "));
    }
    Ok(outcome)
}

/// Where the theory takes its soliton and rates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheorySource {
    /// `fit/report.json` of the run in the output directory.
    Fit,
    /// The `[theory]` section of the config.
    Config,
    /// K = 266, c = 3, Γ = 0.32, μ = 8.5 with the averaged table rates.
    Reference,
}

impl TheorySource {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fit" => Ok(Self::Fit),
            "config" => Ok(Self::Config),
            "reference" => Ok(Self::Reference),
            other => bail!("unknown theory source '{other}' (expected fit, config or reference)"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct StoredAverage {
    m_b: Option<f64>,
    m_a: Option<f64>,
    d: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
struct StoredTable {
    average: StoredAverage,
    context: RateContext,
    all_ok: bool,
}

#[derive(Debug, Clone, Deserialize)]
struct StoredFit {
    soliton: SolitonParams,
    table: StoredTable,
}

/// Soliton, rates and decay of a theory evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryInputs {
    pub soliton: SolitonParams,
    pub rates: Rates,
    pub d: f64,
    pub d0: f64,
}

pub fn theory_inputs(out: &Path, source: TheorySource, cfg: &RunConfig) -> Result<TheoryInputs> {
    Ok(match source {
        TheorySource::Reference => TheoryInputs {
            soliton: SolitonParams::REFERENCE,
            rates: Rates::REFERENCE,
            d: 1.8,
            d0: 0.0,
        },
        TheorySource::Config => TheoryInputs {
            soliton: cfg.theory.soliton,
            rates: cfg.theory.rates,
            d: cfg.theory.d,
            d0: cfg.theory.d0,
        },
        TheorySource::Fit => {
            let path = out.join(FIT_DIR).join("report.json");
            if !path.exists() {
                bail!(
                    "no fitted soliton at {}: run `angio fit` on this output directory first \
                     (or pass --params config|reference)",
                    path.display()
                );
            }
            let f: StoredFit = read_json(&path)?;
            let avg = &f.table.average;
            match (f.table.all_ok, avg.m_b, avg.m_a, avg.d) {
                (true, Some(m_b), Some(m_a), Some(d)) => TheoryInputs {
                    soliton: f.soliton,
                    rates: Rates {
                        m_b,
                        h_b: f.table.context.h_b,
                        m_a,
                        h_a: f.table.context.h_a,
                    },
                    d,
                    d0: f.table.context.d0,
                },
                _ => bail!("{} has degenerate cells; rerun `angio fit`", path.display()),
            }
        }
    })
}

pub fn exponents_for(inputs: &TheoryInputs, eps: f64) -> Result<TheoryExponents> {
    let dc = derived_constants(&inputs.soliton)?;
    Ok(TheoryExponents::from_rates(
        inputs.rates,
        inputs.soliton.gamma,
        dc.s_inf,
        dc.ln_b,
        inputs.d,
        inputs.d0,
        eps,
    )?)
}

/// Header of the theory output: constants and both readings of the
/// ambiguous quantities.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryHeader {
    pub config_hash: String,
    pub seed: u64,
    pub source: TheorySource,
    pub inputs: TheoryInputs,
    pub eps: f64,
    pub s_inf: f64,
    pub big_b: f64,
    pub ln_b: f64,
    pub soliton_amplitude: f64,
    pub soliton_width: f64,
    pub gamma_b: f64,
    pub gamma_a: f64,
    pub beta_b: f64,
    /// h̄_a + 1 with the reference h̄_a; used for ζₙ.
    pub beta_a: f64,
    /// −½ΓS(∞) + 1, reported only.
    pub beta_a_from_formula: f64,
    pub h_a_from_formula: f64,
    /// ζ₂ of the closed formula.
    pub zeta2_formula: f64,
    /// 0.6ε, the exponent applied in the ε-scaled mode.
    pub zeta2_eps_scaled: f64,
    /// Reference value of the second-moment exponent.
    pub zeta2_reference: f64,
    pub files: Vec<String>,
}

fn mode_label(mode: ExponentMode) -> &'static str {
    match mode {
        ExponentMode::Formula => "formula",
        ExponentMode::EpsScaled => "eps",
    }
}

fn modes_for(n: u32) -> Vec<ExponentMode> {
    if n <= 2 {
        vec![ExponentMode::Formula, ExponentMode::EpsScaled]
    } else {
        vec![ExponentMode::Formula]
    }
}

pub fn theory_header(cfg: &RunConfig, source: TheorySource, inputs: &TheoryInputs, config_hash: &str, seed: u64) -> Result<TheoryHeader> {
    let dc = derived_constants(&inputs.soliton)?;
    let exps = exponents_for(inputs, cfg.theory.eps)?;
    let h_a_formula = -0.5 * inputs.soliton.gamma * dc.s_inf;
    let (_, beta_a_formula) = betas(inputs.rates.h_b, h_a_formula);
    Ok(TheoryHeader {
        config_hash: config_hash.into(),
        seed,
        source,
        inputs: *inputs,
        eps: cfg.theory.eps,
        s_inf: dc.s_inf,
        big_b: dc.big_b,
        ln_b: dc.ln_b,
        soliton_amplitude: dc.a,
        soliton_width: dc.b_width,
        gamma_b: exps.gamma_b,
        gamma_a: exps.gamma_a,
        beta_b: exps.beta_b,
        beta_a: exps.beta_a,
        beta_a_from_formula: beta_a_formula,
        h_a_from_formula: h_a_formula,
        zeta2_formula: zeta(2, &exps)?,
        zeta2_eps_scaled: exps.effective_exponent(2, ExponentMode::EpsScaled)?,
        zeta2_reference: 0.59,
        files: Vec::new(),
    })
}

/// Theoretical ⟨pⁿ⟩(ξ) and structure functions; with `--params fit` this
/// needs a prior `angio fit`.
pub fn theory(out: &Path, source: TheorySource, cfg_override: Option<&RunConfig>) -> Result<TheoryHeader> {
    let (cfg, hash, seed) = match (cfg_override, load_manifest(out)) {
        (Some(c), _) => (c.clone(), c.hash(), c.run.seed),
        (None, Ok(m)) => (m.config, m.config_hash, m.seed),
        (None, Err(_)) => {
            let c = RunConfig::default();
            let h = c.hash();
            let s = c.run.seed;
            (c, h, s)
        }
    };
    let inputs = theory_inputs(out, source, &cfg)?;
    let exps = exponents_for(&inputs, cfg.theory.eps)?;
    let mut header = theory_header(&cfg, source, &inputs, &hash, seed)?;
    let xi = xi_grid(cfg.stats.xi_half_width, cfg.stats.xi_points);
    let comments = provenance_comments(&hash, seed);
    let dir = out.join(THEORY_DIR);
    for &h in &cfg.snapshot_hours()? {
        for &n in &cfg.stats.orders {
            let mut s = format!("{comments}# n={n}\n# t_hours={h}\nxi,value,mode\n");
            for mode in modes_for(n) {
                for &x in &xi {
                    let v = theoretical_moment(n, x, h, &inputs.soliton, &exps, mode)?;
                    let _ = writeln!(s, "{x},{v},{}", mode_label(mode));
                }
            }
            let name = format!("moment_n{n}_t{}.csv", hours_label(h));
            atomic_write(&dir.join(&name), s.as_bytes())?;
            header.files.push(name);
            for &l in &cfg.theory.lags {
                let mut s = format!("{comments}# n={n}\n# t_hours={h}\n# lag={l}\nxi,value,mode\n");
                for mode in modes_for(n) {
                    for kind in [Increment::Linearized, Increment::Exact] {
                        let label = format!(
                            "{}-{}",
                            mode_label(mode),
                            if kind == Increment::Linearized { "linearized" } else { "exact" }
                        );
                        for &x in &xi {
                            let v = theoretical_structure_function(n, x, l, h, &inputs.soliton, &exps, mode, kind)?;
                            let _ = writeln!(s, "{x},{v},{label}");
                        }
                    }
                }
                let name = format!("sf_n{n}_t{}_l{l}.csv", hours_label(h));
                atomic_write(&dir.join(&name), s.as_bytes())?;
                header.files.push(name);
            }
        }
    }
    write_json(&dir.join("index.json"), &header)?;
    Ok(header)
}

/// Plot-ready overlays of simulated and theoretical moments and structure
/// functions; needs `simulate`, `moments` and `fit`.
pub fn report(out: &Path) -> Result<Vec<String>> {
    let m = load_manifest(out)?;
    let cfg = &m.config;
    let inputs = theory_inputs(out, TheorySource::Fit, cfg)?;
    let exps = exponents_for(&inputs, cfg.theory.eps)?;
    let stored: serde_json::Value = read_json(&out.join(FIT_DIR).join("report.json"))?;
    let frames: Vec<SolitonFit> = serde_json::from_value(stored["frames"].clone())?;
    let files = load_realizations(out, &m)?;
    let orders = cfg.stats.orders.clone();
    let hours: Vec<f64> = frames.iter().map(|f| f.time * cfg.run.hours_per_unit).collect();
    let slices = slices_from_files(cfg, &files, &hours, &orders)?;
    let comments = provenance_comments(&m.config_hash, m.seed);
    let dir = out.join(REPORT_DIR);
    let mut written = Vec::new();
    for (s, frame) in slices.iter().zip(&frames) {
        let h = s.t_hours;
        for &n in &orders {
            let sim = &s.framed[&n];
            let mut text = format!("{comments}# n={n}\n# t_hours={h}\nxi,simulated,theory_formula,theory_eps\n");
            for (&x, &v) in sim.xs.iter().zip(&sim.values) {
                let f = theoretical_moment(n, x, h, &frame.params, &exps, ExponentMode::Formula)?;
                let e = if n <= 2 {
                    theoretical_moment(n, x, h, &frame.params, &exps, ExponentMode::EpsScaled)?.to_string()
                } else {
                    String::new()
                };
                let _ = writeln!(text, "{x},{v},{f},{e}");
            }
            let name = format!("overlay_n{n}_t{}.csv", hours_label(h));
            atomic_write(&dir.join(&name), text.as_bytes())?;
            written.push(name);
            for &l in &cfg.theory.lags {
                let emp = empirical_structure_function(&s.realizations_framed, l, n)?;
                let mut text =
                    format!("{comments}# n={n}\n# t_hours={h}\n# lag={l}\nxi,simulated,theory_formula,theory_eps\n");
                for (&x, &v) in emp.xs.iter().zip(&emp.values) {
                    let f = theoretical_structure_function(
                        n,
                        x,
                        l,
                        h,
                        &frame.params,
                        &exps,
                        ExponentMode::Formula,
                        Increment::Linearized,
                    )?;
                    let e = if n <= 2 {
                        theoretical_structure_function(
                            n,
                            x,
                            l,
                            h,
                            &frame.params,
                            &exps,
                            ExponentMode::EpsScaled,
                            Increment::Linearized,
                        )?
                        .to_string()
                    } else {
                        String::new()
                    };
                    let _ = writeln!(text, "{x},{v},{f},{e}");
                }
                let name = format!("sf_n{n}_t{}_l{l}.csv", hours_label(h));
                atomic_write(&dir.join(&name), text.as_bytes())?;
                written.push(name);
            }
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct LevyReport {
    pub config_hash: String,
    pub seed: u64,
    pub samples: u64,
    pub brownian_paths: u64,
    pub levy_paths: u64,
    pub tamper: bool,
    pub all_pass: bool,
    pub checks: Vec<Check>,
}

/// Monte Carlo against the closed forms; fails when any check is outside
/// its tolerance.
pub fn verify_levy_cmd(out: &Path, opts: &VerifyOptions, config_hash: &str) -> Result<LevyReport> {
    let checks = verify_levy(opts)?;
    let report = LevyReport {
        config_hash: config_hash.into(),
        seed: opts.seed,
        samples: opts.samples as u64,
        brownian_paths: opts.brownian_paths as u64,
        levy_paths: opts.levy_paths as u64,
        tamper: opts.tamper,
        all_pass: checks.iter().all(|c| c.pass),
        checks,
    };
    write_json(&out.join("verify_levy.json"), &report)?;
    if !report.all_pass {
        let bad: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        bail!("Lévy verification failed: {}", bad.join(", "));
    }
    Ok(report)
}
