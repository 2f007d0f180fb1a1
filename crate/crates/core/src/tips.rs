//! One realization of the tip process: Langevin motion, Poissonian branching
//! and trail-based anastomosis, plus a deterministic parallel ensemble runner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{branching_rate, force_unchecked, DeltaKernel, GridSpec, ModelParams, Tip, Vec2};
use crate::taf::{init_taf, step_taf_hybrid_with, Boundary, InitialProfile, TafField};

/// Grace period for anastomosis, in steps.
pub const GRACE_STEPS: f64 = 10.0;

/// Everything needed to start a realization apart from its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetup {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub taf_profile: InitialProfile,
    pub boundary: Boundary,
    /// N₀: sprouts seeded on the primary vessel x = 0.
    pub initial_tips: usize,
    /// Branching is suppressed while this many tips are alive.
    pub max_alive_tips: usize,
    /// Hours per model time unit, used to read snapshot labels such as "16h".
    pub hours_per_unit: f64,
}

impl SimSetup {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.grid.validate()?;
        if self.initial_tips == 0 {
            return Err(Error::Config("initial_tips must be >= 1".into()));
        }
        if self.max_alive_tips < self.initial_tips {
            return Err(Error::Config("max_alive_tips must be >= initial_tips".into()));
        }
        if !(self.hours_per_unit > 0.0 && self.hours_per_unit.is_finite()) {
            return Err(Error::Config("hours_per_unit must be positive".into()));
        }
        if !self.grid.in_interior(Vec2::new(0.0, self.grid.origin.y + 0.5 * (self.grid.y_max() - self.grid.origin.y))) {
            return Err(Error::Config("the primary vessel x = 0 must lie inside the grid interior".into()));
        }
        Ok(())
    }

    pub fn t_grace(&self) -> f64 {
        GRACE_STEPS * self.params.dt
    }

    pub fn hours_to_time(&self, hours: f64) -> f64 {
        hours / self.hours_per_unit
    }

    pub fn time_to_hours(&self, t: f64) -> f64 {
        t * self.hours_per_unit
    }
}

/// Cell-based record of where tips have been; first writer wins.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    grid: GridSpec,
    cells: Vec<Option<(u64, f64)>>,
    occupied: usize,
}

impl OccupancyGrid {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            cells: vec![None; grid.len()],
            grid,
            occupied: 0,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn get(&self, cell: (usize, usize)) -> Option<(u64, f64)> {
        self.cells[self.grid.index(cell.0, cell.1)]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied
    }

    /// Marks an empty cell; returns true if it was newly written.
    pub fn mark(&mut self, cell: (usize, usize), id: u64, t: f64) -> bool {
        let slot = &mut self.cells[self.grid.index(cell.0, cell.1)];
        if slot.is_none() {
            *slot = Some((id, t));
            self.occupied += 1;
            true
        } else {
            false
        }
    }

    /// Marks every cell crossed by the segment a → b; returns the newly written count.
    pub fn mark_segment(&mut self, a: Vec2, b: Vec2, id: u64, t: f64) -> usize {
        cells_on_segment(&self.grid, a, b)
            .into_iter()
            .filter(|&c| self.mark(c, id, t))
            .count()
    }
}

/// Cells (nearest-node partition) crossed by a segment, in traversal order.
pub fn cells_on_segment(grid: &GridSpec, a: Vec2, b: Vec2) -> Vec<(usize, usize)> {
    let to_u = |p: Vec2| {
        (
            (p.x - grid.origin.x) / grid.hx + 0.5,
            (p.y - grid.origin.y) / grid.hy + 0.5,
        )
    };
    let (ua, va) = to_u(a);
    let (ub, vb) = to_u(b);
    let (du, dv) = (ub - ua, vb - va);
    let mut i = ua.floor() as i64;
    let mut j = va.floor() as i64;
    let axis = |d: f64, start: f64, idx: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((idx + 1) as f64 - start) / d, 1.0 / d)
        } else if d < 0.0 {
            (-1, (start - idx as f64) / -d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (si, mut tx, dtx) = axis(du, ua, i);
    let (sj, mut ty, dty) = axis(dv, va, j);
    let inside = |i: i64, j: i64| i >= 0 && j >= 0 && (i as usize) < grid.nx && (j as usize) < grid.ny;
    let mut out = Vec::new();
    if inside(i, j) {
        out.push((i as usize, j as usize));
    }
    let limit = (du.abs() + dv.abs()).ceil() as usize + 2;
    for _ in 0..limit {
        if tx.min(ty) > 1.0 {
            break;
        }
        if tx < ty {
            i += si;
            tx += dtx;
        } else {
            j += sj;
            ty += dty;
        }
        if inside(i, j) {
            out.push((i as usize, j as usize));
        }
    }
    out
}

/// Per-tip bookkeeping that is not part of the public tip record.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Track {
    prev_pos: Vec2,
    cell: Option<(usize, usize)>,
    entered_new_cell: bool,
}

/// Tip population, trail and TAF of one realization.
#[derive(Debug, Clone)]
pub struct RealizationState {
    pub tips: Vec<Tip>,
    pub trail: OccupancyGrid,
    pub taf: TafField,
    pub time: f64,
    pub rng_seed: u64,
    pub stream: u64,
    pub next_tip_id: u64,
    pub n_alive: usize,
    /// Set once branching has been suppressed by the population cap.
    pub saturated: bool,
    /// Mass removed by the nonnegativity clamp of the TAF update, accumulated.
    pub clamped_mass: f64,
    tracks: Vec<Track>,
    rng: ChaCha8Rng,
    kernel: DeltaKernel,
    setup: SimSetup,
    warned_branching_dt: bool,
}

/// Tips and (optionally) TAF at one output time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub tips: Vec<Tip>,
    pub taf: Option<TafField>,
}

impl Snapshot {
    pub fn alive(&self) -> impl Iterator<Item = &Tip> {
        self.tips.iter().filter(|t| t.alive)
    }

    pub fn n_alive(&self) -> usize {
        self.alive().count()
    }
}

/// Deterministic stream for realization `stream` under base seed `seed`.
pub fn realization_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal_pair<R: Rng + ?Sized>(rng: &mut R) -> Vec2 {
    Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Euler–Maruyama step with an explicit standard-normal pair ξ.
pub fn langevin_update(tip: &Tip, force: Vec2, sigma: f64, dt: f64, xi: Vec2) -> Tip {
    let mut next = *tip;
    next.pos = tip.pos + tip.vel * dt;
    next.vel = tip.vel + (force - tip.vel * sigma) * dt + xi * (sigma.sqrt() * dt.sqrt());
    next
}

/// X ← X + v·dt; v ← v + (−σv + F)·dt + √σ·√dt·ξ.
pub fn step_langevin<R: Rng + ?Sized>(tip: &Tip, force: Vec2, sigma: f64, dt: f64, rng: &mut R) -> Tip {
    langevin_update(tip, force, sigma, dt, normal_pair(rng))
}

/// Velocity of a new sprout: v₀ + σ_v·(ξ₁, ξ₂).
pub fn sprout_velocity<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Vec2 {
    params.sprout_velocity + normal_pair(rng) * params.sprout_velocity_spread
}

impl RealizationState {
    /// Seeds N₀ tips on x = 0 with y uniform over the interior and deposits their cells.
    pub fn new(setup: &SimSetup, seed: u64, stream: u64) -> Result<Self> {
        setup.validate()?;
        let params = &setup.params;
        let taf = init_taf(setup.grid, setup.taf_profile, params, setup.boundary)?;
        taf.check_stability(params.taf_diffusivity, params.dt)?;
        let kernel = params.delta_kernel()?;
        let mut rng = realization_rng(seed, stream);
        let g = setup.grid;
        let (y_lo, y_hi) = (g.origin.y + g.hy, g.origin.y + (g.ny - 2) as f64 * g.hy);
        let mut state = Self {
            tips: Vec::with_capacity(setup.initial_tips * 4),
            trail: OccupancyGrid::new(g),
            taf,
            time: 0.0,
            rng_seed: seed,
            stream,
            next_tip_id: 0,
            n_alive: 0,
            saturated: false,
            clamped_mass: 0.0,
            tracks: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            kernel,
            setup: setup.clone(),
            warned_branching_dt: false,
        };
        for _ in 0..setup.initial_tips {
            let y = rng.random_range(y_lo..=y_hi);
            let vel = sprout_velocity(params, &mut rng);
            state.push_tip(Vec2::new(0.0, y), vel, None);
        }
        state.rng = rng;
        Ok(state)
    }

    pub fn setup(&self) -> &SimSetup {
        &self.setup
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Adds a tip at `pos` and writes its cell to the trail.
    pub fn push_tip(&mut self, pos: Vec2, vel: Vec2, parent_id: Option<u64>) -> u64 {
        let id = self.next_tip_id;
        debug_assert_eq!(id as usize, self.tips.len());
        self.next_tip_id += 1;
        self.tips.push(Tip {
            id,
            pos,
            vel,
            birth_time: self.time,
            alive: true,
            parent_id,
        });
        let cell = self.trail.grid().cell_of(pos);
        if let Some(c) = cell {
            self.trail.mark(c, id, self.time);
        }
        self.tracks.push(Track {
            prev_pos: pos,
            cell,
            entered_new_cell: false,
        });
        self.n_alive += 1;
        id
    }

    /// Moves a tip to a new state (test and scripting hook); trail is not touched.
    pub fn set_tip(&mut self, index: usize, pos: Vec2, vel: Vec2) {
        self.tracks[index].prev_pos = self.tips[index].pos;
        self.tips[index].pos = pos;
        self.tips[index].vel = vel;
    }

    pub fn kill(&mut self, index: usize) {
        if self.tips[index].alive {
            self.tips[index].alive = false;
            self.n_alive -= 1;
        }
    }

    pub fn total_created(&self) -> usize {
        self.tips.len()
    }

    pub fn snapshot(&self, keep_taf: bool) -> Snapshot {
        Snapshot {
            time: self.time,
            tips: self.tips.clone(),
            taf: keep_taf.then(|| self.taf.clone()),
        }
    }

    /// One full time step in the fixed order TAF → force → Langevin →
    /// trail → anastomosis → branching.
    pub fn step(&mut self) -> Result<()> {
        let params = self.setup.params.clone();
        let dt = params.dt;
        let diag = step_taf_hybrid_with(&mut self.taf, &self.tips, &self.kernel, &params, dt)?;
        self.clamped_mass += diag.clamped_mass;

        for k in 0..self.tips.len() {
            if !self.tips[k].alive {
                continue;
            }
            let force = force_unchecked(&self.taf, self.tips[k].pos, &params);
            if !force.is_finite() {
                return Err(Error::NonFinite("chemotactic force"));
            }
            let prev = self.tips[k].pos;
            self.tips[k] = step_langevin(&self.tips[k], force, params.friction, dt, &mut self.rng);
            self.tracks[k].prev_pos = prev;
        }
        self.time = self.taf.time();

        for k in 0..self.tips.len() {
            if self.tips[k].alive && !self.setup.grid.in_interior(self.tips[k].pos) {
                self.kill(k);
            }
        }
        for k in 0..self.tips.len() {
            if self.tips[k].alive {
                deposit_trail(self, k);
            }
        }
        apply_anastomosis(self);
        attempt_branching(self);
        Ok(())
    }
}

/// Marks the cells crossed since the previous position and updates the
/// tip's current cell.
pub fn deposit_trail(state: &mut RealizationState, index: usize) {
    let tip = state.tips[index];
    if !tip.alive {
        return;
    }
    let from = state.tracks[index].prev_pos;
    state.trail.mark_segment(from, tip.pos, tip.id, state.time);
    let cell = state.trail.grid().cell_of(tip.pos);
    let track = &mut state.tracks[index];
    track.entered_new_cell = cell != track.cell;
    track.cell = cell;
}

/// Kills tips that just entered a cell first written by another tip, or by
/// themselves more than t_grace ago. A cell written within t_grace by the
/// tip's parent or child is harmless.
pub fn apply_anastomosis(state: &mut RealizationState) -> usize {
    if state.setup.params.anastomosis_coeff == 0.0 {
        return 0;
    }
    let cutoff = state.time - state.setup.t_grace() - 1e-12 * state.time.abs().max(1.0);
    let mut doomed = Vec::new();
    for (k, tip) in state.tips.iter().enumerate() {
        let track = &state.tracks[k];
        if !tip.alive || !track.entered_new_cell {
            continue;
        }
        let Some((owner, t_occ)) = track.cell.and_then(|c| state.trail.get(c)) else {
            continue;
        };
        let recent = t_occ >= cutoff;
        let lethal = if owner == tip.id {
            !recent
        } else {
            let kin = tip.parent_id == Some(owner)
                || state.tips[owner as usize].parent_id == Some(tip.id);
            !(kin && recent)
        };
        if lethal {
            doomed.push(k);
        }
    }
    for &k in &doomed {
        state.kill(k);
    }
    doomed.len()
}

/// Each alive tip spawns a child with probability α(C(Xⁱ))·dt. Returns the
/// ids of the new tips.
pub fn attempt_branching(state: &mut RealizationState) -> Vec<u64> {
    let params = &state.setup.params;
    let (amp, dt) = (params.branching_amplitude, params.dt);
    let cap = state.setup.max_alive_tips;
    let parents: Vec<usize> = (0..state.tips.len()).filter(|&k| state.tips[k].alive).collect();
    let mut born = Vec::new();
    for k in parents {
        let pos = state.tips[k].pos;
        let c = state.taf.grid().bilinear(state.taf.values(), pos).max(0.0);
        let rate = branching_rate(c, amp).unwrap_or(0.0);
        let p = rate * dt;
        if p > 0.1 && !state.warned_branching_dt {
            log::warn!("branching probability per step {p:.3} exceeds 0.1; reduce dt");
            state.warned_branching_dt = true;
        }
        let u: f64 = state.rng.random();
        if u < p {
            if state.n_alive >= cap {
                state.saturated = true;
                continue;
            }
            let vel = sprout_velocity(&state.setup.params, &mut state.rng);
            let id = state.push_tip(pos, vel, Some(state.tips[k].id));
            born.push(id);
        }
    }
    born
}

/// Snapshot times must be sorted, nonnegative and not beyond t_end.
fn check_snapshot_times(times: &[f64], params: &ModelParams) -> Result<()> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("snapshot times must be sorted".into()));
    }
    if let Some(&t) = times.iter().find(|&&t| !(t >= 0.0) || t > params.t_end + 0.5 * params.dt) {
        return Err(Error::Config(format!(
            "snapshot time {t} outside [0, t_end = {}]",
            params.t_end
        )));
    }
    Ok(())
}

/// Output of one realization.
#[derive(Debug, Clone)]
pub struct RealizationOutput {
    pub index: u64,
    pub snapshots: Vec<Snapshot>,
    pub total_created: usize,
    pub saturated: bool,
    pub clamped_mass: f64,
}

/// Runs one realization and records the state at the step nearest to each
/// snapshot time (model units).
pub fn run_realization(
    setup: &SimSetup,
    seed: u64,
    stream: u64,
    snapshot_times: &[f64],
    keep_taf: bool,
) -> Result<RealizationOutput> {
    check_snapshot_times(snapshot_times, &setup.params)?;
    let mut state = RealizationState::new(setup, seed, stream)?;
    let dt = setup.params.dt;
    let targets: Vec<u64> = snapshot_times.iter().map(|t| (t / dt).round() as u64).collect();
    let last = targets.last().copied().unwrap_or(0);
    let mut snapshots = Vec::with_capacity(targets.len());
    let mut next = 0;
    let mut step = 0u64;
    loop {
        while next < targets.len() && targets[next] == step {
            let mut snap = state.snapshot(keep_taf);
            snap.time = snapshot_times[next];
            snapshots.push(snap);
            next += 1;
        }
        if step >= last {
            break;
        }
        state.step()?;
        step += 1;
    }
    Ok(RealizationOutput {
        index: stream,
        total_created: state.total_created(),
        saturated: state.saturated,
        clamped_mass: state.clamped_mass,
        snapshots,
    })
}

/// Runs the given realization indices in parallel. Output order follows
/// `indices` and every realization depends only on (seed, index), so the
/// result does not depend on the worker count.
pub fn run_ensemble(
    setup: &SimSetup,
    seed: u64,
    indices: &[u64],
    snapshot_times: &[f64],
    keep_taf: bool,
    workers: Option<usize>,
) -> Result<Vec<RealizationOutput>> {
    setup.validate()?;
    check_snapshot_times(snapshot_times, &setup.params)?;
    let job = || {
        indices
            .par_iter()
            .map(|&i| run_realization(setup, seed, i, snapshot_times, keep_taf))
            .collect::<Result<Vec<_>>>()
    };
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}
