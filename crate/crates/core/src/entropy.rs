//! Entropy and entropy-production functionals, the functional-inequality
//! diagnostics, decay-rate fitting and growth diagnostics.
//!
//! Quadrature is cellwise midpoint in space and trapezoid in time. Ratio
//! diagnostics report empirical constants (running minima along runs); the
//! underlying inequalities assert positivity, not specific values.

use crate::error::{Error, Result};
use crate::grid::{self, FieldSet, Grid};
use crate::network::ReactionSystem;
use crate::solver::Trajectory;

/// Reported value of a genuinely infinite reactive integrand (exactly one of
/// the two monomials vanishes somewhere).
pub const SINGULAR_CAP: f64 = 1e30;

/// Relative-entropy floor below which ratio diagnostics are skipped
/// (equilibrium reached).
pub const EEP_REL_FLOOR: f64 = 1e-12;

/// `x ln x`, continuously extended by 0 at the origin.
#[inline]
pub fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Entropy integrand `x ln x - x + 1` (value 1 at vacuum).
#[inline]
fn entropy_integrand(x: f64) -> f64 {
    xlnx(x) - x + 1.0
}

/// Entropy `sum_species integral (u ln u - u + 1)`; nonnegative, zero only
/// for fields identically one.
pub fn entropy(grid: &Grid, fields: &FieldSet) -> f64 {
    let vol = grid.cell_volume();
    let mut total = 0.0;
    for s in 0..fields.species() {
        total += fields
            .field(s)
            .iter()
            .map(|&u| entropy_integrand(u))
            .sum::<f64>()
            * vol;
    }
    total
}

/// Reactive integrand `(x - y) ln(x/y)` with the conventions `r(x,x) = 0`,
/// `r(0,0) = 0`, and genuinely infinite value when exactly one argument
/// vanishes (the second return flags that case).
#[inline]
pub fn reactive_term(x: f64, y: f64) -> (f64, bool) {
    if x == y {
        return (0.0, false);
    }
    if x == 0.0 || y == 0.0 {
        return (f64::INFINITY, true);
    }
    ((x - y) * (x / y).ln(), false)
}

/// Entropy production split into its diffusive and reactive parts.
#[derive(Debug, Clone, Copy)]
pub struct ProductionParts {
    /// Fisher-type part `sum d_i m_i integral |grad u|^2 u^(m-2)`; the
    /// factor `m_i` makes `-dE/dt = D` an identity for porous-medium flux
    /// (the inequality machinery is insensitive to it).
    pub diffusion: f64,
    /// `integral (k_f a^alpha - k_b b^beta) ln(k_f a^alpha / (k_b b^beta))`,
    /// capped at [`SINGULAR_CAP`] when the integrand is infinite somewhere.
    pub reactive: f64,
    /// Set when the reactive integrand was genuinely infinite (exactly one
    /// monomial vanished in some cell); vacuum initial data hit this.
    pub singular: bool,
}

impl ProductionParts {
    pub fn total(&self) -> f64 {
        self.diffusion + self.reactive
    }
}

/// Entropy production of the reversible system at a state.
pub fn entropy_production(grid: &Grid, sys: &ReactionSystem, fields: &FieldSet) -> ProductionParts {
    debug_assert_eq!(fields.species(), sys.species_total());
    let mut diffusion = 0.0;
    for s in 0..fields.species() {
        let (coeff, m) = sys.diffusion(s);
        diffusion += coeff
            * m
            * grid::gradient_quadratic_form(grid, fields.field(s), m)
                .expect("solver states are nonnegative");
    }
    let m = sys.species_a();
    let (a_fields, b_fields) = fields.fields().split_at(m);
    let (k_f, k_b) = sys.rates();
    let vol = grid.cell_volume();
    let mut reactive = 0.0;
    let mut singular = false;
    for cell in 0..fields.cells() {
        let x = k_f * crate::kernels::monomial_at(a_fields, sys.alpha(), cell);
        let y = k_b * crate::kernels::monomial_at(b_fields, sys.beta(), cell);
        let (r, flag) = reactive_term(x, y);
        if flag {
            singular = true;
        } else {
            reactive += r * vol;
        }
    }
    if singular {
        reactive = SINGULAR_CAP;
    }
    ProductionParts {
        diffusion,
        reactive,
        singular,
    }
}

/// Relative entropy and its additive split into spatial fluctuation and
/// average drift.
#[derive(Debug, Clone, Copy)]
pub struct RelativeEntropy {
    /// `sum integral (u ln(u/u_inf) - u + u_inf)`.
    pub total: f64,
    /// `I_1 = sum integral u ln(u / mean(u))`.
    pub spatial: f64,
    /// `I_2 = sum (mean(u) ln(mean(u)/u_inf) - mean(u) + u_inf)`.
    pub mean: f64,
}

/// Relative entropy against a strictly positive reference state, decomposed
/// by additivity; `total = spatial + mean` to rounding and `total >= 0`.
pub fn relative_entropy(
    grid: &Grid,
    fields: &FieldSet,
    equilibrium: &[f64],
) -> Result<RelativeEntropy> {
    if equilibrium.len() != fields.species() {
        return Err(Error::Domain(format!(
            "equilibrium has {} species, fields have {}",
            equilibrium.len(),
            fields.species()
        )));
    }
    if let Some(v) = equilibrium.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!(
            "equilibrium components must be positive, got {v}"
        )));
    }
    let vol = grid.cell_volume();
    let mut total = 0.0;
    let mut spatial = 0.0;
    let mut mean = 0.0;
    for (s, &u_inf) in equilibrium.iter().enumerate() {
        let field = fields.field(s);
        let avg = grid::average(grid, field);
        let ent: f64 = field.iter().map(|&u| xlnx(u)).sum::<f64>() * vol;
        total += ent - avg * u_inf.ln() - avg + u_inf;
        spatial += ent - xlnx(avg);
        mean += xlnx(avg) - avg * u_inf.ln() - avg + u_inf;
    }
    let out = RelativeEntropy {
        total,
        spatial,
        mean,
    };
    debug_assert!((out.total - out.spatial - out.mean).abs() <= 1e-10 * (1.0 + out.total.abs()));
    debug_assert!(out.total >= -1e-10);
    Ok(out)
}

/// Quotients of the generalized logarithmic Sobolev inequality.
#[derive(Debug, Clone, Copy)]
pub struct LsiRatios {
    /// `[integral |grad u|^2 u^(m-2)] / [mean(u)^(m-1) integral u ln(u/mean(u))]`.
    pub entropy_ratio: f64,
    /// Same numerator against `mean(u)^(m-1) * ||sqrt(u) - mean(sqrt(u))||^2`.
    pub sqrt_ratio: f64,
}

/// Computes both Sobolev quotients; both denominators vanish exactly for
/// constant fields, which is an error.
pub fn lsi_ratio(grid: &Grid, field: &[f64], m: f64) -> Result<LsiRatios> {
    let avg = grid::average(grid, field);
    if !(avg > 0.0) {
        return Err(Error::Domain(format!(
            "field average must be positive, got {avg}"
        )));
    }
    let vol = grid.cell_volume();
    let ent: f64 = field.iter().map(|&u| xlnx(u)).sum::<f64>() * vol - xlnx(avg);
    let sqrt_avg: f64 = field.iter().map(|&u| u.sqrt()).sum::<f64>() * vol;
    let sqrt_fluct = avg - sqrt_avg * sqrt_avg;
    if ent <= 0.0 || sqrt_fluct <= 0.0 {
        return Err(Error::Domain(
            "Sobolev quotient undefined for constant fields".into(),
        ));
    }
    let fisher = grid::gradient_quadratic_form(grid, field, m)?;
    let weight = if m == 1.0 { 1.0 } else { avg.powf(m - 1.0) };
    Ok(LsiRatios {
        entropy_ratio: fisher / (weight * ent),
        sqrt_ratio: fisher / (weight * sqrt_fluct),
    })
}

/// Square-root variables of a state of the reversible system: fields
/// `A_i = sqrt(a_i)`, `B_j = sqrt(b_j)`, their averages and fluctuations, and
/// the cellwise monomials `A^alpha`, `B^beta`.
#[derive(Debug, Clone)]
pub struct SqrtDecomposition {
    pub sqrt_fields: Vec<Vec<f64>>,
    pub averages: Vec<f64>,
    pub fluctuations: Vec<Vec<f64>>,
    pub monomial_a: Vec<f64>,
    pub monomial_b: Vec<f64>,
    vol: f64,
}

impl SqrtDecomposition {
    pub fn new(grid: &Grid, sys: &ReactionSystem, fields: &FieldSet) -> Self {
        let species = fields.species();
        let cells = fields.cells();
        let mut sqrt_fields = Vec::with_capacity(species);
        let mut averages = Vec::with_capacity(species);
        let mut fluctuations = Vec::with_capacity(species);
        for s in 0..species {
            let sq: Vec<f64> = fields.field(s).iter().map(|&u| u.sqrt()).collect();
            let avg = grid::average(grid, &sq);
            fluctuations.push(sq.iter().map(|&v| v - avg).collect());
            averages.push(avg);
            sqrt_fields.push(sq);
        }
        let m = sys.species_a();
        let mut monomial_a = vec![0.0; cells];
        let mut monomial_b = vec![0.0; cells];
        let (a_sq, b_sq) = sqrt_fields.split_at(m);
        for cell in 0..cells {
            monomial_a[cell] = crate::kernels::monomial_at(a_sq, sys.alpha(), cell);
            monomial_b[cell] = crate::kernels::monomial_at(b_sq, sys.beta(), cell);
        }
        SqrtDecomposition {
            sqrt_fields,
            averages,
            fluctuations,
            monomial_a,
            monomial_b,
            vol: grid.cell_volume(),
        }
    }

    /// `||delta_s||^2 = integral (sqrt(u_s) - mean(sqrt(u_s)))^2`.
    pub fn fluctuation_norm_sq(&self, s: usize) -> f64 {
        self.fluctuations[s].iter().map(|&v| v * v).sum::<f64>() * self.vol
    }

    /// `||A^alpha - B^beta||^2`.
    pub fn monomial_gap_sq(&self) -> f64 {
        self.monomial_a
            .iter()
            .zip(&self.monomial_b)
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<f64>()
            * self.vol
    }
}

/// Sides of the indirect-diffusion-transfer inequality.
#[derive(Debug, Clone, Copy)]
pub struct IndirectDiffusion {
    /// `sum_i ||delta_i||^2 + sum_{j > J} ||eta_j||^2 + ||A^alpha - B^beta||^2`.
    pub lhs: f64,
    /// `sum_{j <= J} ||eta_j||^2`.
    pub rhs: f64,
}

impl IndirectDiffusion {
    /// Empirical transfer constant; infinite when the right side vanishes
    /// (the inequality is then trivial).
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else {
            f64::INFINITY
        }
    }
}

/// Evaluates both sides of the indirect-diffusion inequality for the first
/// `j_small` b-species, whose averages must satisfy `mean(b_j) <= eps`.
pub fn indirect_diffusion_ratio(
    grid: &Grid,
    sys: &ReactionSystem,
    fields: &FieldSet,
    j_small: usize,
    eps: f64,
) -> Result<IndirectDiffusion> {
    let m = sys.species_a();
    let n = sys.species_b();
    if j_small == 0 || j_small > n {
        return Err(Error::Domain(format!(
            "j_small must lie in 1..={n}, got {j_small}"
        )));
    }
    for j in 0..j_small {
        let avg = grid::average(grid, fields.field(m + j));
        if avg > eps {
            return Err(Error::Domain(format!(
                "precondition fails for b_{}: mean {avg} exceeds eps = {eps}",
                j + 1
            )));
        }
    }
    let decomp = SqrtDecomposition::new(grid, sys, fields);
    let mut lhs = decomp.monomial_gap_sq();
    for i in 0..m {
        lhs += decomp.fluctuation_norm_sq(i);
    }
    for j in j_small..n {
        lhs += decomp.fluctuation_norm_sq(m + j);
    }
    let mut rhs = 0.0;
    for j in 0..j_small {
        rhs += decomp.fluctuation_norm_sq(m + j);
    }
    Ok(IndirectDiffusion { lhs, rhs })
}

/// Time weight `1 / (1 + ln(1 + t))` of the time-dependent
/// entropy-entropy-production estimate.
#[inline]
pub fn theta_weight(t: f64) -> f64 {
    1.0 / (1.0 + (1.0 + t).ln())
}

/// Quotient `D / (theta(t) * rel_E)`; its running minimum along a run is the
/// empirical constant of the time-dependent estimate. Skipped (None) once
/// the relative entropy falls below [`EEP_REL_FLOOR`].
pub fn eep_ratio(t: f64, production: f64, rel_entropy: f64) -> Option<f64> {
    if rel_entropy <= EEP_REL_FLOOR {
        None
    } else {
        Some(production / (theta_weight(t) * rel_entropy))
    }
}

/// Csiszar-Kullback-Pinsker quotient
/// `rel_E / sum_species ||u - u_inf||_1^2`; None at equilibrium (0/0).
pub fn ckp_ratio(grid: &Grid, fields: &FieldSet, equilibrium: &[f64]) -> Option<f64> {
    let mut dist_sq = 0.0;
    for (s, &u_inf) in equilibrium.iter().enumerate() {
        let diff: Vec<f64> = fields.field(s).iter().map(|&u| u - u_inf).collect();
        let d1 = grid::lp_norm(grid, &diff, 1.0).expect("p = 1 is valid");
        dist_sq += d1 * d1;
    }
    if dist_sq <= 1e-28 {
        return None;
    }
    let rel = relative_entropy(grid, fields, equilibrium).ok()?;
    Some(rel.total / dist_sq)
}

/// The comparison function `Phi(x,y) = (x ln(x/y) - x + y) / (sqrt(x) - sqrt(y))^2`,
/// continuously extended by 2 on the diagonal; increasing in its first
/// argument. Infinite at `y = 0` with `x > 0`; undefined at the origin.
pub fn phi(x: f64, y: f64) -> Result<f64> {
    if x < 0.0 || y < 0.0 {
        return Err(Error::Domain(format!(
            "Phi needs nonnegative arguments, got ({x}, {y})"
        )));
    }
    if x == 0.0 && y == 0.0 {
        return Err(Error::Domain("Phi is undefined at the origin".into()));
    }
    if y == 0.0 {
        return Ok(f64::INFINITY);
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    // Phi is scale invariant; work with u = x/y.
    let u = x / y;
    let r = u.sqrt();
    let e = r - 1.0;
    if e.abs() < 1e-4 {
        // Series through the removable singularity at the diagonal.
        return Ok(2.0 + (2.0 / 3.0) * e - e * e / 6.0);
    }
    Ok((u * u.ln() - u + 1.0) / (e * e))
}

/// Exponential fit of a distance-to-equilibrium series.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Decay rate (negated log-linear slope).
    pub lambda: f64,
    /// Fitted amplitude `C` in `C e^{-lambda t}`.
    pub amplitude: f64,
    /// RMS residual of the fit in log scale.
    pub residual: f64,
    pub samples_used: usize,
}

/// Least-squares line through `(t, ln d)`. Samples below `1e-12` times the
/// initial distance are floored rounding noise and excluded.
pub fn fit_decay_rate(samples: &[(f64, f64)]) -> Result<DecayFit> {
    let initial = samples
        .iter()
        .map(|&(_, d)| d)
        .find(|&d| d > 0.0)
        .unwrap_or(0.0);
    let valid: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(_, d)| d > 1e-12 * initial && d > 0.0)
        .map(|&(t, d)| (t, d.ln()))
        .collect();
    if valid.len() < 5 {
        return Err(Error::Fit(format!(
            "need at least 5 positive samples above the floating-point floor, got {}",
            valid.len()
        )));
    }
    let n = valid.len() as f64;
    let mean_t = valid.iter().map(|v| v.0).sum::<f64>() / n;
    let mean_y = valid.iter().map(|v| v.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for &(t, y) in &valid {
        cov += (t - mean_t) * (y - mean_y);
        var += (t - mean_t) * (t - mean_t);
    }
    if var == 0.0 {
        return Err(Error::Fit("all samples share one time coordinate".into()));
    }
    let slope = cov / var;
    let intercept = mean_y - slope * mean_t;
    let residual = (valid
        .iter()
        .map(|&(t, y)| {
            let r = y - (intercept + slope * t);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        lambda: -slope,
        amplitude: intercept.exp(),
        residual,
        samples_used: valid.len(),
    })
}

/// Slope of `ln y` against `ln(1 + t)` over positive samples; 0 when fewer
/// than two usable points remain.
fn loglog_growth(samples: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(_, y)| y > 0.0)
        .map(|&(t, y)| ((1.0 + t).ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|v| v.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|v| v.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for &(x, y) in &pts {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}

/// Space-time norm and sup-norm growth of one species along a trajectory.
#[derive(Debug, Clone)]
pub struct SpaceTimeNorm {
    /// `||u||_{L^{m+1}(Q_T)}` by trapezoid quadrature over the snapshots.
    pub norm: f64,
    /// Running sup-norm `t -> sup_{s <= t} ||u(s)||_inf`.
    pub sup_curve: Vec<(f64, f64)>,
    /// Fitted slope of `ln sup` against `ln(1+t)` over the whole window.
    pub growth_exponent: f64,
}

/// Computes the duality-order space-time norm (`exponent` is the species'
/// porous-medium exponent `m`, integrated at order `m + 1`) and the running
/// sup-norm curve. Requires stored field snapshots.
pub fn spacetime_norm(traj: &Trajectory, species: usize, exponent: f64) -> Result<SpaceTimeNorm> {
    if traj.snapshots.is_empty() {
        return Err(Error::Domain(
            "trajectory has no field snapshots; enable snapshot sampling".into(),
        ));
    }
    let order = exponent + 1.0;
    let vol = traj.grid.cell_volume();
    let values: Vec<(f64, f64, f64)> = traj
        .snapshots
        .iter()
        .map(|(t, fields)| {
            let field = fields.field(species);
            let power: f64 = field.iter().map(|&u| u.powf(order)).sum::<f64>() * vol;
            let sup = field.iter().fold(0.0f64, |a, &b| a.max(b));
            (*t, power, sup)
        })
        .collect();
    let mut integral = 0.0;
    for w in values.windows(2) {
        integral += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
    }
    let mut sup_curve = Vec::with_capacity(values.len());
    let mut running = 0.0f64;
    for &(t, _, sup) in &values {
        running = running.max(sup);
        sup_curve.push((t, running));
    }
    let growth_exponent = loglog_growth(&sup_curve);
    Ok(SpaceTimeNorm {
        norm: integral.powf(1.0 / order),
        sup_curve,
        growth_exponent,
    })
}

/// Growth exponent of the trajectory-level running sup-norm (max over
/// species), computed from the diagnostics records.
pub fn supnorm_growth_exponent(traj: &Trajectory) -> f64 {
    let mut curve = Vec::with_capacity(traj.records.len());
    let mut running = 0.0f64;
    for rec in &traj.records {
        let sup = rec.extrema.iter().fold(0.0f64, |a, &(_, hi)| a.max(hi));
        running = running.max(sup);
        curve.push((rec.t, running));
    }
    loglog_growth(&curve)
}

/// One time-stamped diagnostics row.
#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub entropy: f64,
    /// Entropy production (capped at [`SINGULAR_CAP`] when flagged).
    pub production: f64,
    pub production_singular: bool,
    /// Relative entropy to the context equilibrium (NaN when no positive
    /// reference exists).
    pub rel_entropy: f64,
    /// Conservation-law values (reversible systems, row-major over `(i,j)`)
    /// or per-species averages (diffusion-only contexts).
    pub masses: Vec<f64>,
    /// Per-species averages, in species order.
    pub averages: Vec<f64>,
    /// Summed `L^p` distances to equilibrium, aligned with the context's
    /// norm list.
    pub lp_distances: Vec<f64>,
    /// Per-species `(min, max)`.
    pub extrema: Vec<(f64, f64)>,
    /// Per-species generalized-Sobolev quotients (NaN where undefined).
    pub lsi_ratios: Vec<f64>,
    /// `D / (theta(t) rel_E)` (NaN when skipped).
    pub eep_ratio: f64,
    /// `rel_E / sum ||u - u_inf||_1^2` (NaN at equilibrium).
    pub ckp_ratio: f64,
}

#[derive(Debug, Clone)]
enum DiagKind {
    Reversible(ReactionSystem),
    DiffusionOnly { diffs: Vec<f64>, exps: Vec<f64> },
}

/// Everything needed to turn a state into a [`DiagnosticsRecord`].
#[derive(Debug, Clone)]
pub struct DiagnosticsContext {
    kind: DiagKind,
    equilibrium: Vec<f64>,
    p_norms: Vec<f64>,
}

impl DiagnosticsContext {
    pub fn reversible(sys: ReactionSystem, equilibrium: Vec<f64>, p_norms: Vec<f64>) -> Self {
        DiagnosticsContext {
            kind: DiagKind::Reversible(sys),
            equilibrium,
            p_norms,
        }
    }

    /// Context for pure-diffusion runs; the natural long-time reference is
    /// the vector of conserved per-species averages.
    pub fn diffusion_only(
        diffs: Vec<f64>,
        exps: Vec<f64>,
        equilibrium: Vec<f64>,
        p_norms: Vec<f64>,
    ) -> Self {
        DiagnosticsContext {
            kind: DiagKind::DiffusionOnly { diffs, exps },
            equilibrium,
            p_norms,
        }
    }

    pub fn equilibrium(&self) -> &[f64] {
        &self.equilibrium
    }

    pub fn p_norms(&self) -> &[f64] {
        &self.p_norms
    }

    pub fn species_labels(&self) -> Vec<String> {
        match &self.kind {
            DiagKind::Reversible(sys) => (0..sys.species_total())
                .map(|s| sys.species_label(s))
                .collect(),
            DiagKind::DiffusionOnly { exps, .. } => {
                (0..exps.len()).map(|s| format!("u_{}", s + 1)).collect()
            }
        }
    }

    /// Column labels of the `masses` entries.
    pub fn mass_labels(&self) -> Vec<String> {
        match &self.kind {
            DiagKind::Reversible(sys) => {
                let mut labels = Vec::new();
                for i in 1..=sys.species_a() {
                    for j in 1..=sys.species_b() {
                        labels.push(format!("mass_{i}_{j}"));
                    }
                }
                labels
            }
            DiagKind::DiffusionOnly { exps, .. } => {
                (1..=exps.len()).map(|s| format!("avg_u_{s}")).collect()
            }
        }
    }

    pub fn record(&self, grid: &Grid, t: f64, fields: &FieldSet) -> DiagnosticsRecord {
        let species = fields.species();
        let averages: Vec<f64> = (0..species)
            .map(|s| grid::average(grid, fields.field(s)))
            .collect();
        let (production, production_singular, masses, lsi_params): (
            f64,
            bool,
            Vec<f64>,
            Vec<(f64, f64)>,
        ) = match &self.kind {
            DiagKind::Reversible(sys) => {
                let parts = entropy_production(grid, sys, fields);
                let m = sys.species_a();
                let mut masses = Vec::with_capacity(m * sys.species_b());
                for i in 0..m {
                    for j in 0..sys.species_b() {
                        masses.push(sys.beta()[j] * averages[i] + sys.alpha()[i] * averages[m + j]);
                    }
                }
                let params = (0..species).map(|s| sys.diffusion(s)).collect();
                (parts.total(), parts.singular, masses, params)
            }
            DiagKind::DiffusionOnly { diffs, exps } => {
                let mut total = 0.0;
                for s in 0..species {
                    total += diffs[s]
                        * exps[s]
                        * grid::gradient_quadratic_form(grid, fields.field(s), exps[s])
                            .expect("solver states are nonnegative");
                }
                let params = diffs.iter().zip(exps).map(|(&d, &m)| (d, m)).collect();
                (total, false, averages.clone(), params)
            }
        };
        let rel_entropy = if self.equilibrium.iter().all(|&v| v > 0.0) {
            relative_entropy(grid, fields, &self.equilibrium)
                .map(|r| r.total)
                .unwrap_or(f64::NAN)
        } else {
            f64::NAN
        };
        let lp_distances = self
            .p_norms
            .iter()
            .map(|&p| {
                (0..species)
                    .map(|s| {
                        let diff: Vec<f64> = fields
                            .field(s)
                            .iter()
                            .map(|&u| u - self.equilibrium[s])
                            .collect();
                        grid::lp_norm(grid, &diff, p).expect("validated p list")
                    })
                    .sum()
            })
            .collect();
        let extrema = (0..species).map(|s| fields.min_max(s)).collect();
        let lsi_ratios = (0..species)
            .map(|s| {
                let (_, m) = lsi_params[s];
                lsi_ratio(grid, fields.field(s), m)
                    .map(|r| r.entropy_ratio)
                    .unwrap_or(f64::NAN)
            })
            .collect();
        let eep = eep_ratio(t, production, rel_entropy).unwrap_or(f64::NAN);
        let ckp = ckp_ratio(grid, fields, &self.equilibrium).unwrap_or(f64::NAN);
        DiagnosticsRecord {
            t,
            entropy: entropy(grid, fields),
            production,
            production_singular,
            rel_entropy,
            masses,
            averages,
            lp_distances,
            extrema,
            lsi_ratios,
            eep_ratio: eep,
            ckp_ratio: ckp,
        }
    }
}

/// First record time at which every species average exceeds half its
/// equilibrium value (the empirically observed end of the transient).
pub fn first_time_averages_above_half(
    records: &[DiagnosticsRecord],
    equilibrium: &[f64],
) -> Option<f64> {
    records
        .iter()
        .find(|rec| {
            rec.averages
                .iter()
                .zip(equilibrium)
                .all(|(&avg, &eq)| avg >= 0.5 * eq)
        })
        .map(|rec| rec.t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_grid(n: usize) -> Grid {
        Grid::line(n).unwrap()
    }

    #[test]
    fn entropy_reference_values() {
        let g = unit_grid(8);
        let ones = FieldSet::constant(&[1.0, 1.0], 8).unwrap();
        assert_abs_diff_eq!(entropy(&g, &ones), 0.0, epsilon = 1e-14);

        let e_field = FieldSet::constant(&[std::f64::consts::E], 8).unwrap();
        assert_abs_diff_eq!(entropy(&g, &e_field), 1.0, epsilon = 1e-12);

        let vacuum = FieldSet::constant(&[0.0, 0.0, 0.0], 8).unwrap();
        assert_abs_diff_eq!(entropy(&g, &vacuum), 3.0, epsilon = 1e-14);
    }

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

    #[test]
    fn production_hand_value() {
        // Constant fields a=4, b=1: gradient terms vanish and the reactive
        // part is (4-1) ln 4.
        let g = unit_grid(16);
        let sys = symmetric_system();
        let fields = FieldSet::constant(&[4.0, 1.0], 16).unwrap();
        let parts = entropy_production(&g, &sys, &fields);
        assert_eq!(parts.diffusion, 0.0);
        assert!(!parts.singular);
        assert_abs_diff_eq!(parts.reactive, 3.0 * 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn production_zero_at_balance_and_singular_at_vacuum() {
        let g = unit_grid(16);
        let sys = symmetric_system();
        let balanced = FieldSet::constant(&[0.5, 0.5], 16).unwrap();
        let parts = entropy_production(&g, &sys, &balanced);
        assert_eq!(parts.total(), 0.0);

        let vacuum_b = FieldSet::constant(&[1.0, 0.0], 16).unwrap();
        let parts = entropy_production(&g, &sys, &vacuum_b);
        assert!(parts.singular);
        assert_eq!(parts.reactive, SINGULAR_CAP);
    }

    #[test]
    fn relative_entropy_split() {
        let g = unit_grid(64);
        // Step profile with average one against equilibrium one: the mean
        // part vanishes and the spatial part is ln 2.
        let field: Vec<f64> = (0..64).map(|i| if i < 32 { 2.0 } else { 0.0 }).collect();
        let fields = FieldSet::from_fields(vec![field]).unwrap();
        let rel = relative_entropy(&g, &fields, &[1.0]).unwrap();
        assert_abs_diff_eq!(rel.mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rel.spatial, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(rel.total, rel.spatial + rel.mean, epsilon = 1e-12);

        // Constant off-equilibrium field: no spatial part.
        let fields = FieldSet::constant(&[2.0], 64).unwrap();
        let rel = relative_entropy(&g, &fields, &[1.0]).unwrap();
        assert_abs_diff_eq!(rel.spatial, 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(rel.total, rel.mean, epsilon = 1e-13);

        // Fields at equilibrium: everything vanishes.
        let fields = FieldSet::constant(&[1.0], 64).unwrap();
        let rel = relative_entropy(&g, &fields, &[1.0]).unwrap();
        assert_abs_diff_eq!(rel.total, 0.0, epsilon = 1e-14);

        assert!(relative_entropy(&g, &fields, &[0.0]).is_err());
    }

    #[test]
    fn lsi_ratio_positive_and_scale_invariant_at_m1() {
        let g = unit_grid(64);
        let field: Vec<f64> = (0..64)
            .map(|i| {
                let x = (i as f64 + 0.5) / 64.0;
                1.0 + 0.1 * (std::f64::consts::PI * x).cos()
            })
            .collect();
        let r1 = lsi_ratio(&g, &field, 1.0).unwrap();
        assert!(r1.entropy_ratio > 0.0 && r1.sqrt_ratio > 0.0);
        let scaled: Vec<f64> = field.iter().map(|v| 3.0 * v).collect();
        let r2 = lsi_ratio(&g, &scaled, 1.0).unwrap();
        assert_abs_diff_eq!(
            r1.entropy_ratio,
            r2.entropy_ratio,
            epsilon = 1e-10 * r1.entropy_ratio
        );

        assert!(lsi_ratio(&g, &[1.0; 64], 1.0).is_err());
    }

    #[test]
    fn sqrt_decomposition_invariants() {
        let g = unit_grid(32);
        let sys = symmetric_system();
        let a: Vec<f64> = (0..32).map(|i| 0.5 + 0.4 * ((i as f64) / 31.0)).collect();
        let b: Vec<f64> = (0..32).map(|i| 0.9 - 0.2 * ((i as f64) / 31.0)).collect();
        let fields = FieldSet::from_fields(vec![a, b]).unwrap();
        let dec = SqrtDecomposition::new(&g, &sys, &fields);
        for s in 0..2 {
            let avg_fluct = grid::average(&g, &dec.fluctuations[s]);
            assert_abs_diff_eq!(avg_fluct, 0.0, epsilon = 1e-12);
            let direct = dec.fluctuation_norm_sq(s);
            let identity = grid::average(&g, fields.field(s)) - dec.averages[s].powi(2);
            assert_abs_diff_eq!(direct, identity, epsilon = 1e-12);
        }
    }

    #[test]
    fn indirect_diffusion_trivial_when_b_constant() {
        let g = unit_grid(32);
        let sys = symmetric_system();
        let a: Vec<f64> = (0..32)
            .map(|i| 1.0 + 0.3 * (std::f64::consts::PI * (i as f64 + 0.5) / 32.0).cos())
            .collect();
        let b = vec![1e-4; 32];
        let fields = FieldSet::from_fields(vec![a, b]).unwrap();
        let id = indirect_diffusion_ratio(&g, &sys, &fields, 1, 1e-3).unwrap();
        assert_eq!(id.rhs, 0.0);
        assert!(id.ratio().is_infinite());
    }

    #[test]
    fn indirect_diffusion_precondition_enforced() {
        let g = unit_grid(16);
        let sys = symmetric_system();
        let fields = FieldSet::constant(&[0.5, 0.5], 16).unwrap();
        let err = indirect_diffusion_ratio(&g, &sys, &fields, 1, 1e-3);
        assert!(err.is_err());
    }

    #[test]
    fn eep_ratio_reference_points() {
        assert_eq!(theta_weight(0.0), 1.0);
        // Synthetic record with D = rel_E at t = 0 gives ratio one.
        assert_abs_diff_eq!(eep_ratio(0.0, 0.5, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert!(eep_ratio(1.0, 0.5, 0.0).is_none());
    }

    #[test]
    fn ckp_positive_off_equilibrium() {
        let g = unit_grid(32);
        let fields = FieldSet::constant(&[0.8, 0.3], 32).unwrap();
        let q = ckp_ratio(&g, &fields, &[0.5, 0.5]).unwrap();
        assert!(q > 0.0);
        let eq = FieldSet::constant(&[0.5, 0.5], 32).unwrap();
        assert!(ckp_ratio(&g, &eq, &[0.5, 0.5]).is_none());
    }

    #[test]
    fn phi_reference_values() {
        for x in [0.2, 1.0, 5.0] {
            assert_abs_diff_eq!(phi(x, x).unwrap(), 2.0, epsilon = 1e-9);
        }
        // Phi(e, 1) = 1/(sqrt(e)-1)^2 since the numerator is exactly one.
        let e = std::f64::consts::E;
        let expect = 1.0 / (e.sqrt() - 1.0).powi(2);
        assert_abs_diff_eq!(phi(e, 1.0).unwrap(), expect, epsilon = 1e-12);
        assert!((phi(e, 1.0).unwrap() - 2.3762).abs() < 1e-3);

        assert!(phi(4.0, 1.0).unwrap() > phi(2.0, 1.0).unwrap());
        assert!(phi(1.0, 0.0).unwrap().is_infinite());
        assert_eq!(phi(0.0, 2.0).unwrap(), 1.0);
        assert!(phi(0.0, 0.0).is_err());
    }

    #[test]
    fn phi_diagonal_extension_error_bound() {
        for x in [0.1, 1.0, 10.0] {
            for eps in [1e-3, 1e-4, 1e-6] {
                let v = phi(x, x * (1.0 + eps)).unwrap();
                assert!((v - 2.0).abs() <= 10.0 * eps, "x={x} eps={eps} v={v}");
            }
        }
    }

    #[test]
    fn decay_fit_exact_exponential() {
        let samples: Vec<(f64, f64)> = (0..50)
            .map(|k| (k as f64 * 0.1, (-2.0 * k as f64 * 0.1).exp()))
            .collect();
        let fit = fit_decay_rate(&samples).unwrap();
        assert_abs_diff_eq!(fit.lambda, 2.0, epsilon = 1e-10);
        assert!(fit.residual < 1e-10);
        assert_abs_diff_eq!(fit.amplitude, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn decay_fit_constant_series() {
        let samples: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 0.7)).collect();
        let fit = fit_decay_rate(&samples).unwrap();
        assert_abs_diff_eq!(fit.lambda, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn decay_fit_needs_samples() {
        let samples = vec![(0.0, 1.0), (1.0, 0.1)];
        assert!(fit_decay_rate(&samples).is_err());
    }

    #[test]
    fn elementary_inequality_bank() {
        // The three pointwise inequalities behind the functional estimates,
        // on 10^4 random pairs each.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x: f64 = rng.random_range(1e-6..50.0);
            let y: f64 = rng.random_range(1e-6..50.0);
            let sq = (x.sqrt() - y.sqrt()).powi(2);
            let (r, flag) = reactive_term(x, y);
            assert!(!flag);
            assert!(
                r >= 4.0 * sq - 1e-12 * (1.0 + r.abs()),
                "(x-y)ln(x/y) >= 4(sqrt x - sqrt y)^2"
            );
            let kl = x * (x / y).ln() - x + y;
            assert!(
                kl >= sq - 1e-12 * (1.0 + kl.abs()),
                "x ln(x/y) - x + y >= (sqrt x - sqrt y)^2"
            );
            let half = (x - y).powi(2);
            assert!(
                half >= 0.5 * x * x - y * y - 1e-9 * (1.0 + half),
                "(x-y)^2 >= x^2/2 - y^2"
            );
        }
    }
}
