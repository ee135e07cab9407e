//! Time integration with nonnegativity (step rejection, never clipping) and
//! discrete conservation (pointwise stoichiometric cancellation plus the
//! divergence theorem of the no-flux stencil).

use crate::entropy::{DiagnosticsContext, DiagnosticsRecord};
use crate::equilibrium;
use crate::error::{Error, Result};
use crate::grid::{FieldSet, Grid};
use crate::kernels;
use crate::network::{GeneralSystem, ReactionSystem};

/// Additive floor in the reaction limiter of [`stable_dt`]. Sized well above
/// rounding so a single freshly-filled near-vacuum cell cannot collapse the
/// step; the rejection loop is the actual safety mechanism.
pub const REACTION_LIMITER_FLOOR: f64 = 1e-3;

/// Maximum dt halvings before a step is declared stiff.
pub const MAX_HALVINGS: u32 = 40;

/// Hard cap on steps per run.
pub const MAX_STEPS: u64 = 20_000_000;

const CG_RELATIVE_TOL: f64 = 1e-10;

/// Time discretization of the diffusion term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Forward Euler with adaptive dt; conserves masses to rounding.
    Explicit,
    /// Backward Euler on the lagged-coefficient diffusion, reactions
    /// explicit; linear solves by conjugate gradient.
    SemiImplicit,
}

/// Either system flavor behind one stepping interface.
#[derive(Debug, Clone)]
pub enum SystemModel {
    Reversible(ReactionSystem),
    General(GeneralSystem),
}

impl SystemModel {
    pub fn species(&self) -> usize {
        match self {
            SystemModel::Reversible(sys) => sys.species_total(),
            SystemModel::General(sys) => sys.species(),
        }
    }

    pub fn diffusion(&self, s: usize) -> (f64, f64) {
        match self {
            SystemModel::Reversible(sys) => sys.diffusion(s),
            SystemModel::General(sys) => sys.diffusion(s),
        }
    }

    pub fn species_labels(&self) -> Vec<String> {
        match self {
            SystemModel::Reversible(sys) => (0..sys.species_total())
                .map(|s| sys.species_label(s))
                .collect(),
            SystemModel::General(sys) => (1..=sys.species()).map(|s| format!("u_{s}")).collect(),
        }
    }
}

/// Full description of one run.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub system: SystemModel,
    pub grid: Grid,
    pub initial: FieldSet,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub sample_interval: f64,
    /// Reaction regularization of the approximating scheme; 0 disables it.
    pub epsilon: f64,
    pub scheme: Scheme,
    pub store_snapshots: bool,
    pub p_norms: Vec<f64>,
}

impl SimConfig {
    pub fn new(system: SystemModel, grid: Grid, initial: FieldSet, t_end: f64) -> Self {
        SimConfig {
            system,
            grid,
            initial,
            t_end,
            cfl_safety: 0.4,
            sample_interval: if t_end > 0.0 { t_end / 100.0 } else { 1.0 },
            epsilon: 0.0,
            scheme: Scheme::Explicit,
            store_snapshots: false,
            p_norms: vec![1.0, 2.0],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.initial.species() != self.system.species() {
            return Err(Error::InvalidSystem(format!(
                "initial data has {} species, system has {}",
                self.initial.species(),
                self.system.species()
            )));
        }
        if self.initial.cells() != self.grid.cells() {
            return Err(Error::InvalidSystem(format!(
                "initial data has {} cells, grid has {}",
                self.initial.cells(),
                self.grid.cells()
            )));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::Domain(format!(
                "t_end must be >= 0, got {}",
                self.t_end
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Domain(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.sample_interval > 0.0) {
            return Err(Error::Domain(format!(
                "sample_interval must be > 0, got {}",
                self.sample_interval
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Domain(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        for &p in &self.p_norms {
            if p.is_nan() || p < 1.0 {
                return Err(Error::Domain(format!(
                    "norm exponent must be >= 1, got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Time-ordered run output: diagnostics at the sample times and, when
/// enabled, full field snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub p_norms: Vec<f64>,
    /// Equilibrium (reversible) or conserved-average (diffusion) reference.
    pub equilibrium: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<(f64, FieldSet)>,
}

impl Trajectory {
    /// `(t, summed L^p distance)` series for one of the configured norms.
    pub fn distance_series(&self, p: f64) -> Option<Vec<(f64, f64)>> {
        let idx = self.p_norms.iter().position(|&q| (q - p).abs() <= 1e-12)?;
        Some(
            self.records
                .iter()
                .map(|r| (r.t, r.lp_distances[idx]))
                .collect(),
        )
    }

    pub fn final_record(&self) -> &DiagnosticsRecord {
        self.records
            .last()
            .expect("a trajectory always has the initial record")
    }
}

struct StepBuffers {
    powered: Vec<f64>,
    rhs: Vec<Vec<f64>>,
    reaction: Vec<Vec<f64>>,
    rates: Vec<f64>,
    candidate: FieldSet,
}

impl StepBuffers {
    fn new(species: usize, cells: usize) -> Self {
        StepBuffers {
            powered: vec![0.0; cells],
            rhs: vec![vec![0.0; cells]; species],
            reaction: vec![vec![0.0; cells]; species],
            rates: vec![0.0; cells],
            candidate: FieldSet::zeros(species, cells),
        }
    }
}

/// Fills `bufs.reaction` with the (possibly regularized) reaction terms.
fn assemble_reactions(cfg: &SimConfig, state: &FieldSet, bufs: &mut StepBuffers) {
    match &cfg.system {
        SystemModel::Reversible(sys) => {
            sys.rates_over_cells(state, cfg.epsilon, &mut bufs.rates);
            for s in 0..state.species() {
                let factor = sys.stoichiometric_signed(s);
                for (o, &r) in bufs.reaction[s].iter_mut().zip(&bufs.rates) {
                    *o = factor * r;
                }
            }
        }
        SystemModel::General(sys) => {
            sys.reactions_over_cells(state, cfg.epsilon, &mut bufs.reaction);
        }
    }
}

/// Fills `bufs.rhs` with `coeff * Laplacian(u^m) + f(u)` per species.
fn assemble_rhs(cfg: &SimConfig, state: &FieldSet, bufs: &mut StepBuffers) {
    assemble_reactions(cfg, state, bufs);
    for s in 0..state.species() {
        let (coeff, m) = cfg.system.diffusion(s);
        kernels::pow_field(state.field(s), m, &mut bufs.powered);
        kernels::neumann_laplacian(&cfg.grid, &bufs.powered, coeff, &mut bufs.rhs[s]);
        for (o, &r) in bufs.rhs[s].iter_mut().zip(&bufs.reaction[s]) {
            *o += r;
        }
    }
}

fn min_over_fields(fields: &FieldSet) -> f64 {
    let mut lo = f64::INFINITY;
    for s in 0..fields.species() {
        lo = lo.min(fields.min_max(s).0);
    }
    lo
}

/// Adaptive step bound: the diffusion CFL of the lagged-coefficient form
/// `div(m u^(m-1) grad u)` combined with a reaction limiter, scaled by the
/// configured safety factor. Strictly positive for every admissible state.
///
/// Backward-Euler diffusion is unconditionally stable, so the semi-implicit
/// scheme is bounded by the reaction limiter (and the sampling boundaries)
/// only; holding it to the explicit CFL would both defeat its purpose on
/// stiff runs and accumulate linear-solver residual over needless steps.
pub fn stable_dt(cfg: &SimConfig, state: &FieldSet) -> f64 {
    let mut diff_scale: f64 = 0.0;
    if cfg.scheme == Scheme::Explicit {
        for s in 0..state.species() {
            let (coeff, m) = cfg.system.diffusion(s);
            let (_, hi) = state.min_max(s);
            let speed = if m == 1.0 {
                coeff
            } else {
                coeff * m * hi.powf(m - 1.0)
            };
            diff_scale = diff_scale.max(speed);
        }
    }
    let h = cfg.grid.min_spacing();
    let diffusion_limit = if diff_scale > 0.0 {
        h * h / (2.0 * cfg.grid.dim() as f64 * diff_scale)
    } else {
        f64::INFINITY
    };

    let species = state.species();
    let cells = state.cells();
    let mut bufs = StepBuffers::new(species, cells);
    assemble_reactions(cfg, state, &mut bufs);
    let max_reaction = bufs
        .reaction
        .iter()
        .flat_map(|f| f.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let floor = REACTION_LIMITER_FLOOR + state.min_positive().unwrap_or(0.0);
    let reaction_limit = 1.0 / (1.0 + max_reaction / floor);

    cfg.cfl_safety * diffusion_limit.min(reaction_limit)
}

fn try_explicit(
    state: &FieldSet,
    bufs: &mut StepBuffers,
    dt: f64,
) -> std::result::Result<(), (usize, f64)> {
    for s in 0..state.species() {
        kernels::axpy(
            state.field(s),
            &bufs.rhs[s],
            dt,
            bufs.candidate.field_mut(s),
        );
    }
    for s in 0..state.species() {
        let lo = bufs.candidate.min_max(s).0;
        if lo < 0.0 {
            return Err((s, lo));
        }
    }
    Ok(())
}

fn step_explicit_core(
    cfg: &SimConfig,
    state: &FieldSet,
    dt: f64,
    bufs: &mut StepBuffers,
) -> Result<(FieldSet, f64)> {
    assemble_rhs(cfg, state, bufs);
    let mut dt_try = dt;
    let mut last_fail = (0usize, 0.0f64);
    for _ in 0..=MAX_HALVINGS {
        match try_explicit(state, bufs, dt_try) {
            Ok(()) => return Ok((bufs.candidate.clone(), dt_try)),
            Err(fail) => {
                last_fail = fail;
                dt_try *= 0.5;
            }
        }
    }
    Err(Error::Stiffness(format!(
        "explicit step rejected after {MAX_HALVINGS} halvings (dt down to {dt_try:.3e}); \
         species {} still reaches {:.3e}; state min {:.3e}, max {:.3e}",
        last_fail.0,
        last_fail.1,
        min_over_fields(state),
        state.max_value()
    )))
}

/// One forward-Euler step `u + dt (coeff Laplacian(u^m) + f(u))`; a step
/// producing any negative component is rejected and retried at half the dt
/// (at most [`MAX_HALVINGS`] times). Returns the accepted state and the dt
/// actually taken.
pub fn step_explicit(cfg: &SimConfig, state: &FieldSet, dt: f64) -> Result<(FieldSet, f64)> {
    cfg.validate()?;
    let mut bufs = StepBuffers::new(state.species(), state.cells());
    step_explicit_core(cfg, state, dt, &mut bufs)
}

/// Face-lagged diffusion coefficients `m ((u_L + u_R)/2)^(m-1)`.
struct LaggedFaces {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn lagged_faces(grid: &Grid, field: &[f64], m: f64) -> LaggedFaces {
    let (nx, ny) = grid.shape();
    let coeff_of = |left: f64, right: f64| -> f64 {
        let mean = 0.5 * (left + right);
        if m == 1.0 {
            1.0
        } else if m == 2.0 {
            2.0 * mean
        } else {
            m * mean.powf(m - 1.0)
        }
    };
    let mut x = vec![0.0; (nx - 1) * ny];
    for j in 0..ny {
        for i in 0..nx - 1 {
            x[j * (nx - 1) + i] = coeff_of(field[j * nx + i], field[j * nx + i + 1]);
        }
    }
    let mut y = Vec::new();
    if ny > 1 {
        y = vec![0.0; nx * (ny - 1)];
        for j in 0..ny - 1 {
            for i in 0..nx {
                y[j * nx + i] = coeff_of(field[j * nx + i], field[(j + 1) * nx + i]);
            }
        }
    }
    LaggedFaces { x, y }
}

/// `out = v - dt*coeff*div(D grad v)` for the lagged operator; symmetric
/// positive definite, so CG applies.
fn apply_semi_implicit(
    grid: &Grid,
    faces: &LaggedFaces,
    dt_coeff: f64,
    v: &[f64],
    out: &mut [f64],
) {
    let (nx, ny) = grid.shape();
    let (hx, hy) = grid.spacing();
    let ix2 = 1.0 / (hx * hx);
    let iy2 = 1.0 / (hy * hy);
    for j in 0..ny {
        for i in 0..nx {
            let idx = j * nx + i;
            let mut div = 0.0;
            if i > 0 {
                div += faces.x[j * (nx - 1) + i - 1] * (v[idx - 1] - v[idx]) * ix2;
            }
            if i + 1 < nx {
                div += faces.x[j * (nx - 1) + i] * (v[idx + 1] - v[idx]) * ix2;
            }
            if ny > 1 {
                if j > 0 {
                    div += faces.y[(j - 1) * nx + i] * (v[idx - nx] - v[idx]) * iy2;
                }
                if j + 1 < ny {
                    div += faces.y[j * nx + i] * (v[idx + nx] - v[idx]) * iy2;
                }
            }
            out[idx] = v[idx] - dt_coeff * div;
        }
    }
}

fn conjugate_gradient(
    grid: &Grid,
    faces: &LaggedFaces,
    dt_coeff: f64,
    b: &[f64],
    x0: &[f64],
) -> Result<Vec<f64>> {
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(a, b)| a * b).sum() };
    let norm_b = dot(b, b).sqrt();
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = x0.to_vec();
    let mut ap = vec![0.0; n];
    apply_semi_implicit(grid, faces, dt_coeff, &x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, yi)| bi - yi).collect();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    if rs.sqrt() <= CG_RELATIVE_TOL * norm_b {
        return Ok(x);
    }
    let max_iters = 10 * n;
    for _ in 0..max_iters {
        apply_semi_implicit(grid, faces, dt_coeff, &p, &mut ap);
        let denom = dot(&p, &ap);
        if denom <= 0.0 {
            return Err(Error::LinearSolver(format!(
                "conjugate gradient lost positive definiteness (p.Ap = {denom:.3e})"
            )));
        }
        let alpha = rs / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() <= CG_RELATIVE_TOL * norm_b {
            return Ok(x);
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolver(format!(
        "conjugate gradient did not reach relative residual {CG_RELATIVE_TOL:.1e} \
         within {max_iters} iterations"
    )))
}

fn step_semi_implicit_core(
    cfg: &SimConfig,
    state: &FieldSet,
    dt: f64,
    bufs: &mut StepBuffers,
) -> Result<(FieldSet, f64)> {
    assemble_reactions(cfg, state, bufs);
    let species = state.species();
    let faces: Vec<LaggedFaces> = (0..species)
        .map(|s| {
            let (_, m) = cfg.system.diffusion(s);
            lagged_faces(&cfg.grid, state.field(s), m)
        })
        .collect();
    let mut dt_try = dt;
    let mut rhs = vec![0.0; state.cells()];
    for _ in 0..=MAX_HALVINGS {
        let mut ok = true;
        for (s, face) in faces.iter().enumerate() {
            let (coeff, _) = cfg.system.diffusion(s);
            kernels::axpy(state.field(s), &bufs.reaction[s], dt_try, &mut rhs);
            let x = conjugate_gradient(&cfg.grid, face, dt_try * coeff, &rhs, state.field(s))?;
            if x.iter().any(|&v| v < 0.0) {
                ok = false;
                break;
            }
            bufs.candidate.field_mut(s).copy_from_slice(&x);
        }
        if ok {
            return Ok((bufs.candidate.clone(), dt_try));
        }
        dt_try *= 0.5;
    }
    Err(Error::Stiffness(format!(
        "semi-implicit step rejected after {MAX_HALVINGS} halvings (dt down to {dt_try:.3e})"
    )))
}

/// One backward-Euler diffusion step with lagged face coefficients
/// `m ((u_L+u_R)/2)^(m-1)` and explicit reactions; linear systems solved by
/// conjugate gradient to relative residual 1e-10. Negative components
/// trigger dt halving exactly as in the explicit step.
pub fn step_semi_implicit(cfg: &SimConfig, state: &FieldSet, dt: f64) -> Result<(FieldSet, f64)> {
    cfg.validate()?;
    let mut bufs = StepBuffers::new(state.species(), state.cells());
    step_semi_implicit_core(cfg, state, dt, &mut bufs)
}

/// Reference state the run relaxes to: the detailed-balance equilibrium for
/// reversible systems, the vector of initial averages otherwise.
pub fn equilibrium_reference(cfg: &SimConfig) -> Result<Vec<f64>> {
    let averages: Vec<f64> = (0..cfg.initial.species())
        .map(|s| crate::grid::average(&cfg.grid, cfg.initial.field(s)))
        .collect();
    match &cfg.system {
        SystemModel::Reversible(sys) => {
            let m = sys.species_a();
            let mass = equilibrium::conserved_masses(sys, &averages[..m], &averages[m..])?;
            Ok(equilibrium::solve_equilibrium(sys, &mass)?.combined())
        }
        SystemModel::General(_) => Ok(averages),
    }
}

/// Diagnostics context matching [`equilibrium_reference`].
pub fn diagnostics_context(cfg: &SimConfig) -> Result<DiagnosticsContext> {
    let reference = equilibrium_reference(cfg)?;
    Ok(match &cfg.system {
        SystemModel::Reversible(sys) => {
            DiagnosticsContext::reversible(sys.clone(), reference, cfg.p_norms.clone())
        }
        SystemModel::General(sys) => DiagnosticsContext::diffusion_only(
            sys.diffusions().to_vec(),
            sys.exponents().to_vec(),
            reference,
            cfg.p_norms.clone(),
        ),
    })
}

/// Like [`simulate`], but on a step failure returns the trajectory advanced
/// so far together with the error, so partial output can be preserved.
pub fn simulate_partial(cfg: &SimConfig) -> Result<(Trajectory, Option<Error>)> {
    cfg.validate()?;
    let ctx = diagnostics_context(cfg)?;
    let mut state = cfg.initial.clone();
    let mut records = vec![ctx.record(&cfg.grid, 0.0, &state)];
    let mut snapshots = Vec::new();
    if cfg.store_snapshots {
        snapshots.push((0.0, state.clone()));
    }
    let mut bufs = StepBuffers::new(state.species(), state.cells());
    let mut t = 0.0;
    let mut next_sample = cfg.sample_interval.min(cfg.t_end);
    let mut steps: u64 = 0;
    let mut failure = None;
    while t < cfg.t_end {
        let boundary = next_sample.min(cfg.t_end);
        let dt_cap = stable_dt(cfg, &state);
        let dt = dt_cap.min(boundary - t);
        let stepped = match cfg.scheme {
            Scheme::Explicit => step_explicit_core(cfg, &state, dt, &mut bufs),
            Scheme::SemiImplicit => step_semi_implicit_core(cfg, &state, dt, &mut bufs),
        };
        let (new_state, dt_used) = match stepped {
            Ok(pair) => pair,
            Err(err) => {
                failure = Some(err);
                break;
            }
        };
        state = new_state;
        t = if dt_used == dt && dt == boundary - t {
            boundary
        } else {
            t + dt_used
        };
        steps += 1;
        if steps > MAX_STEPS {
            failure = Some(Error::Stiffness(format!(
                "exceeded {MAX_STEPS} steps at t = {t:.6e} (t_end = {})",
                cfg.t_end
            )));
            break;
        }
        if t >= boundary {
            records.push(ctx.record(&cfg.grid, t, &state));
            if cfg.store_snapshots {
                snapshots.push((t, state.clone()));
            }
            while next_sample <= t {
                next_sample += cfg.sample_interval;
            }
        }
    }
    if failure.is_some() && records.last().map(|r| r.t) != Some(t) {
        records.push(ctx.record(&cfg.grid, t, &state));
        if cfg.store_snapshots {
            snapshots.push((t, state.clone()));
        }
    }
    Ok((
        Trajectory {
            grid: cfg.grid.clone(),
            p_norms: cfg.p_norms.clone(),
            equilibrium: ctx.equilibrium().to_vec(),
            records,
            snapshots,
        },
        failure,
    ))
}

/// Advances the configured system to `t_end` with adaptive dt, emitting a
/// diagnostics record every `sample_interval` and at `t_end` exactly.
pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    let (traj, failure) = simulate_partial(cfg)?;
    match failure {
        None => Ok(traj),
        Some(err) => Err(err),
    }
}

/// Worst conservation-law drift over the run:
/// `max over laws and samples of |law(t) - law(0)|`.
pub fn check_discrete_conservation(traj: &Trajectory) -> f64 {
    let reference = &traj.records[0].masses;
    let mut worst: f64 = 0.0;
    for rec in &traj.records {
        for (current, initial) in rec.masses.iter().zip(reference) {
            worst = worst.max((current - initial).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn symmetric_system() -> ReactionSystem {
        ReactionSystem::new(
            vec![1.0],
            vec![1.0],
            vec![1.0],
            vec![1.0],
            vec![2.0],
            vec![2.0],
        )
        .unwrap()
    }

    fn config(system: SystemModel, grid: Grid, initial: FieldSet, t_end: f64) -> SimConfig {
        SimConfig::new(system, grid, initial, t_end)
    }

    #[test]
    fn stable_dt_heat_limit() {
        // m = 1, unit coefficient, h = 0.1, no reactions:
        // dt = 0.5 * 0.01 / 2 = 0.0025.
        let grid = Grid::line(10).unwrap();
        let sys = GeneralSystem::new(
            vec![1.0 + 1e-12],
            vec![1.0],
            vec![1.0],
            1.0,
            |_u: &[f64], out: &mut [f64]| out.fill(0.0),
        )
        .unwrap();
        let initial = FieldSet::constant(&[1.0], 10).unwrap();
        let mut cfg = config(SystemModel::General(sys), grid, initial, 1.0);
        cfg.cfl_safety = 0.5;
        let state = cfg.initial.clone();
        let dt = stable_dt(&cfg, &state);
        assert_abs_diff_eq!(dt, 0.0025, epsilon = 1e-8);
    }

    #[test]
    fn stable_dt_scales_with_state() {
        // Doubling the max state halves the m = 2 diffusion-limited dt.
        let grid = Grid::line(16).unwrap();
        let sys = GeneralSystem::pure_diffusion(vec![2.0], vec![1.0]).unwrap();
        let base = config(
            SystemModel::General(sys.clone()),
            grid.clone(),
            FieldSet::constant(&[1.0], 16).unwrap(),
            1.0,
        );
        let doubled = config(
            SystemModel::General(sys),
            grid,
            FieldSet::constant(&[2.0], 16).unwrap(),
            1.0,
        );
        let dt1 = stable_dt(&base, &base.initial);
        let dt2 = stable_dt(&doubled, &doubled.initial);
        assert_abs_diff_eq!(dt1 / dt2, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn stable_dt_positive_at_vacuum() {
        let grid = Grid::line(8).unwrap();
        let sys = symmetric_system();
        let initial = FieldSet::constant(&[0.0, 0.0], 8).unwrap();
        let mut cfg = config(SystemModel::Reversible(sys), grid, initial, 1.0);
        cfg.cfl_safety = 0.7;
        let dt = stable_dt(&cfg, &cfg.initial.clone());
        assert_abs_diff_eq!(dt, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn explicit_step_hand_values() {
        // 1A <=> 1B with constant a = 2, b = 0 and dt = 0.1:
        // rate 2, a' = 1.8, b' = 0.2, conservation a' + b' = 2.
        let grid = Grid::line(4).unwrap();
        let sys = symmetric_system();
        let initial = FieldSet::constant(&[2.0, 0.0], 4).unwrap();
        let cfg = config(SystemModel::Reversible(sys), grid, initial, 1.0);
        let (next, dt) = step_explicit(&cfg, &cfg.initial, 0.1).unwrap();
        assert_eq!(dt, 0.1);
        for c in 0..4 {
            assert_abs_diff_eq!(next.field(0)[c], 1.8, epsilon = 1e-14);
            assert_abs_diff_eq!(next.field(1)[c], 0.2, epsilon = 1e-14);
        }
    }

    #[test]
    fn equilibrium_state_is_stationary() {
        let grid = Grid::line(8).unwrap();
        let sys = symmetric_system();
        let initial = FieldSet::constant(&[0.5, 0.5], 8).unwrap();
        let cfg = config(SystemModel::Reversible(sys), grid, initial, 1.0);
        let (next, _) = step_explicit(&cfg, &cfg.initial, 0.05).unwrap();
        assert_eq!(next, cfg.initial);
        let mut cfg_si = cfg.clone();
        cfg_si.scheme = Scheme::SemiImplicit;
        let (next, _) = step_semi_implicit(&cfg_si, &cfg_si.initial, 0.05).unwrap();
        for s in 0..2 {
            for c in 0..8 {
                assert_abs_diff_eq!(next.field(s)[c], 0.5, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn negative_step_is_halved() {
        // dt large enough that a full step drives a negative; the stepper
        // must shrink rather than clip.
        let grid = Grid::line(4).unwrap();
        let sys = symmetric_system();
        let initial = FieldSet::constant(&[1.0, 0.0], 4).unwrap();
        let cfg = config(SystemModel::Reversible(sys), grid, initial, 1.0);
        let (next, dt_used) = step_explicit(&cfg, &cfg.initial, 4.0).unwrap();
        assert!(dt_used < 4.0);
        assert!(next.field(0).iter().all(|&v| v >= 0.0));
        assert!(next.field(1).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn semi_implicit_backward_euler_eigenmode() {
        // m = 1 reduces to backward-Euler heat. The discrete cosine mode is
        // an exact eigenvector: amplification 1/(1 + dt * lambda_h).
        let n = 32;
        let grid = Grid::line(n).unwrap();
        let sys = GeneralSystem::new(
            vec![1.0 + 1e-14],
            vec![1.0],
            vec![1.0],
            1.0,
            |_u: &[f64], out: &mut [f64]| out.fill(0.0),
        )
        .unwrap();
        let field: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.25 * (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos())
            .collect();
        let initial = FieldSet::from_fields(vec![field.clone()]).unwrap();
        let cfg = config(SystemModel::General(sys), grid, initial, 1.0);
        let dt = 0.01;
        let (next, _) = step_semi_implicit(&cfg, &cfg.initial, dt).unwrap();
        let h = 1.0 / n as f64;
        let lambda_h = (2.0 - 2.0 * (std::f64::consts::PI * h).cos()) / (h * h);
        // m is 1 + 1e-14 rather than exactly 1 (construction requires m > 1),
        // which perturbs the eigenvalue at rounding level only.
        let gain = 1.0 / (1.0 + dt * lambda_h);
        for (i, &v) in next.field(0).iter().enumerate() {
            let expect = 1.0 + (field[i] - 1.0) * gain;
            assert_abs_diff_eq!(v, expect, epsilon = 1e-7);
        }
        assert!((lambda_h - std::f64::consts::PI.powi(2)).abs() < 0.05);
    }

    #[test]
    fn semi_implicit_matches_explicit_at_second_order() {
        // Richardson comparison at m = 2, where the arithmetic-mean lag is
        // exact for the power flux: one-step difference shrinks at O(dt^2).
        let n = 32;
        let grid = Grid::line(n).unwrap();
        let sys = symmetric_system();
        let a: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.2 * (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos())
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|i| 1.0 - 0.1 * (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos())
            .collect();
        let initial = FieldSet::from_fields(vec![a, b]).unwrap();
        let cfg = config(SystemModel::Reversible(sys), grid, initial, 1.0);
        let diff_at = |dt: f64| -> f64 {
            let (ex, d1) = step_explicit(&cfg, &cfg.initial, dt).unwrap();
            let (si, d2) = step_semi_implicit(&cfg, &cfg.initial, dt).unwrap();
            assert_eq!(d1, dt);
            assert_eq!(d2, dt);
            let mut norm = 0.0;
            for s in 0..2 {
                for (x, y) in ex.field(s).iter().zip(si.field(s)) {
                    norm += (x - y) * (x - y);
                }
            }
            norm.sqrt()
        };
        let d1 = diff_at(2e-4);
        let d2 = diff_at(1e-4);
        let rate = (d1 / d2).log2();
        assert!(
            rate >= 1.9,
            "one-step agreement order {rate}, diffs {d1:.3e}/{d2:.3e}"
        );
    }

    #[test]
    fn simulate_zero_horizon() {
        let grid = Grid::line(8).unwrap();
        let sys = symmetric_system();
        let initial = FieldSet::constant(&[1.0, 0.5], 8).unwrap();
        let cfg = config(SystemModel::Reversible(sys), grid, initial, 0.0);
        let traj = simulate(&cfg).unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(traj.records[0].t, 0.0);
    }

    #[test]
    fn simulate_pure_diffusion_preserves_average() {
        let n = 32;
        let grid = Grid::line(n).unwrap();
        let sys = GeneralSystem::pure_diffusion(vec![2.5], vec![0.8]).unwrap();
        let field: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.5 } else { 0.0 }).collect();
        let initial = FieldSet::from_fields(vec![field]).unwrap();
        let mut cfg = config(SystemModel::General(sys), grid, initial, 0.5);
        cfg.sample_interval = 0.1;
        let traj = simulate(&cfg).unwrap();
        let initial_avg = traj.records[0].averages[0];
        let mut sup_prev = f64::INFINITY;
        for rec in &traj.records {
            assert_abs_diff_eq!(rec.averages[0], initial_avg, epsilon = 1e-12);
            let sup = rec.extrema[0].1;
            assert!(sup <= sup_prev + 1e-12, "max norm grew: {sup} > {sup_prev}");
            sup_prev = sup;
        }
        assert_eq!(traj.final_record().t, 0.5);
        assert!(check_discrete_conservation(&traj) <= 1e-12);
    }

    #[test]
    fn simulate_records_are_strictly_ordered() {
        let grid = Grid::line(16).unwrap();
        let sys = symmetric_system();
        let field: Vec<f64> = (0..16).map(|i| if i < 8 { 2.0 } else { 0.0 }).collect();
        let initial = FieldSet::from_fields(vec![field, vec![0.0; 16]]).unwrap();
        let mut cfg = config(SystemModel::Reversible(sys), grid, initial, 0.3);
        cfg.sample_interval = 0.05;
        cfg.store_snapshots = true;
        let traj = simulate(&cfg).unwrap();
        assert_eq!(traj.records[0].t, 0.0);
        for w in traj.records.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        assert_eq!(traj.final_record().t, 0.3);
        assert_eq!(traj.snapshots.len(), traj.records.len());
    }

    #[test]
    fn degenerate_initial_data_is_reported() {
        let grid = Grid::line(8).unwrap();
        let sys = ReactionSystem::new(
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0; 2],
            vec![1.0; 2],
            vec![2.0; 2],
            vec![2.0; 2],
        )
        .unwrap();
        // a_2 and b_2 both empty: the corresponding mass vanishes.
        let initial =
            FieldSet::from_fields(vec![vec![1.0; 8], vec![0.0; 8], vec![1.0; 8], vec![0.0; 8]])
                .unwrap();
        let cfg = config(SystemModel::Reversible(sys), grid, initial, 0.1);
        assert!(matches!(simulate(&cfg), Err(Error::DegenerateMass(_))));
    }
}
