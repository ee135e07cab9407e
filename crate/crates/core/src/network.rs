//! Reaction-diffusion system definitions and structural condition checks.
//!
//! Two system flavors are supported: the single reversible mass-action
//! reaction (stoichiometric coefficients `alpha`, `beta`, porous-medium
//! exponents per species) and a general system with a caller-supplied
//! locally-Lipschitz reaction map, polynomial growth exponent `nu`,
//! dissipation weights `lambda` and quasi-positivity.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::FieldSet;
use crate::kernels;

/// Caller-supplied reaction map `u -> f(u)` writing into a species-length
/// output slice.
pub type ReactionMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Growth exponent of the mass-action terms: the larger of the two
/// stoichiometric coordinate sums.
pub fn max_growth_exponent(alpha: &[f64], beta: &[f64]) -> Result<f64> {
    if alpha.is_empty() || beta.is_empty() {
        return Err(Error::InvalidSystem(
            "stoichiometric vectors must be nonempty".into(),
        ));
    }
    for &c in alpha.iter().chain(beta) {
        if !(c >= 1.0) {
            return Err(Error::InvalidSystem(format!(
                "stoichiometric coefficients must be >= 1, got {c}"
            )));
        }
    }
    Ok(alpha.iter().sum::<f64>().max(beta.iter().sum::<f64>()))
}

/// A single reversible reaction
/// `alpha_1 A_1 + ... + alpha_M A_M  <=>  beta_1 B_1 + ... + beta_N B_N`
/// with porous-medium diffusion per species.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionSystem {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    diff_a: Vec<f64>,
    diff_b: Vec<f64>,
    exp_a: Vec<f64>,
    exp_b: Vec<f64>,
    k_f: f64,
    k_b: f64,
}

impl ReactionSystem {
    /// Builds a system with unit rate constants.
    pub fn new(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        diff_a: Vec<f64>,
        diff_b: Vec<f64>,
        exp_a: Vec<f64>,
        exp_b: Vec<f64>,
    ) -> Result<Self> {
        Self::with_rates(alpha, beta, diff_a, diff_b, exp_a, exp_b, 1.0, 1.0)
    }

    /// Builds a system with explicit forward/backward rate constants.
    #[allow(clippy::too_many_arguments)]
    pub fn with_rates(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        diff_a: Vec<f64>,
        diff_b: Vec<f64>,
        exp_a: Vec<f64>,
        exp_b: Vec<f64>,
        k_f: f64,
        k_b: f64,
    ) -> Result<Self> {
        max_growth_exponent(&alpha, &beta)?;
        let m = alpha.len();
        let n = beta.len();
        if diff_a.len() != m || exp_a.len() != m {
            return Err(Error::InvalidSystem(format!(
                "a-side lengths disagree: alpha {m}, d {}, m {}",
                diff_a.len(),
                exp_a.len()
            )));
        }
        if diff_b.len() != n || exp_b.len() != n {
            return Err(Error::InvalidSystem(format!(
                "b-side lengths disagree: beta {n}, h {}, p {}",
                diff_b.len(),
                exp_b.len()
            )));
        }
        for &d in diff_a.iter().chain(&diff_b) {
            if !(d > 0.0) {
                return Err(Error::InvalidSystem(format!(
                    "diffusion coefficients must be > 0, got {d}"
                )));
            }
        }
        for &e in exp_a.iter().chain(&exp_b) {
            if !(e > 1.0) {
                return Err(Error::InvalidSystem(format!(
                    "porous-medium exponents must be > 1, got {e}"
                )));
            }
        }
        if !(k_f > 0.0) || !(k_b > 0.0) {
            return Err(Error::InvalidSystem(format!(
                "rate constants must be > 0, got k_f={k_f}, k_b={k_b}"
            )));
        }
        Ok(ReactionSystem {
            alpha,
            beta,
            diff_a,
            diff_b,
            exp_a,
            exp_b,
            k_f,
            k_b,
        })
    }

    pub fn species_a(&self) -> usize {
        self.alpha.len()
    }

    pub fn species_b(&self) -> usize {
        self.beta.len()
    }

    pub fn species_total(&self) -> usize {
        self.alpha.len() + self.beta.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn diffusion_a(&self) -> &[f64] {
        &self.diff_a
    }

    pub fn diffusion_b(&self) -> &[f64] {
        &self.diff_b
    }

    pub fn exponents_a(&self) -> &[f64] {
        &self.exp_a
    }

    pub fn exponents_b(&self) -> &[f64] {
        &self.exp_b
    }

    pub fn rates(&self) -> (f64, f64) {
        (self.k_f, self.k_b)
    }

    /// Diffusion coefficient and porous-medium exponent of species `s` in the
    /// combined order `(a_1..a_M, b_1..b_N)`.
    pub fn diffusion(&self, s: usize) -> (f64, f64) {
        if s < self.alpha.len() {
            (self.diff_a[s], self.exp_a[s])
        } else {
            let j = s - self.alpha.len();
            (self.diff_b[j], self.exp_b[j])
        }
    }

    /// Human-readable label of species `s` (`a_1`, ..., `b_N`).
    pub fn species_label(&self, s: usize) -> String {
        if s < self.alpha.len() {
            format!("a_{}", s + 1)
        } else {
            format!("b_{}", s - self.alpha.len() + 1)
        }
    }

    pub fn nu(&self) -> f64 {
        max_growth_exponent(&self.alpha, &self.beta).expect("validated at construction")
    }

    /// Net mass-action rate `k_f a^alpha - k_b b^beta` at a single point.
    pub fn mass_action_rate(&self, a: &[f64], b: &[f64]) -> f64 {
        let mono_a: f64 = a
            .iter()
            .zip(&self.alpha)
            .map(|(&v, &e)| v.powf(e))
            .product();
        let mono_b: f64 = b.iter().zip(&self.beta).map(|(&v, &e)| v.powf(e)).product();
        self.k_f * mono_a - self.k_b * mono_b
    }

    /// Mass-action reaction terms `f_i = -alpha_i (k_f a^alpha - k_b b^beta)`
    /// and `g_j = beta_j (k_f a^alpha - k_b b^beta)`.
    pub fn evaluate_reactions(&self, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.regularized_reactions(a, b, 0.0)
    }

    /// Reaction terms damped by the approximating-scheme factor
    /// `1 / (1 + eps * sum_k |f_k|)`; every component is bounded by `1/eps`
    /// for `eps > 0` and `eps = 0` returns the plain terms.
    pub fn regularized_reactions(
        &self,
        a: &[f64],
        b: &[f64],
        eps: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if a.len() != self.alpha.len() || b.len() != self.beta.len() {
            return Err(Error::Domain(format!(
                "state lengths ({}, {}) disagree with system ({}, {})",
                a.len(),
                b.len(),
                self.alpha.len(),
                self.beta.len()
            )));
        }
        if eps < 0.0 {
            return Err(Error::Domain(format!(
                "regularization must satisfy eps >= 0, got {eps}"
            )));
        }
        if let Some(v) = a.iter().chain(b).find(|v| **v < 0.0) {
            return Err(Error::Domain(format!("negative concentration {v}")));
        }
        let rate = self.mass_action_rate(a, b);
        let scale = if eps > 0.0 {
            let stoich_sum: f64 = self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>();
            1.0 / (1.0 + eps * stoich_sum * rate.abs())
        } else {
            1.0
        };
        let f = self.alpha.iter().map(|&ai| -ai * scale * rate).collect();
        let g = self.beta.iter().map(|&bj| bj * scale * rate).collect();
        Ok((f, g))
    }

    /// Cellwise net rate over a field set (species order `a..b`), damped for
    /// `eps > 0`.
    pub(crate) fn rates_over_cells(&self, fields: &FieldSet, eps: f64, out: &mut [f64]) {
        let m = self.alpha.len();
        let (a_fields, b_fields) = fields.fields().split_at(m);
        kernels::reversible_rates(
            a_fields,
            &self.alpha,
            b_fields,
            &self.beta,
            self.k_f,
            self.k_b,
            eps,
            out,
        );
    }

    /// Signed stoichiometric factor of species `s`:
    /// `-alpha_i` on the a-side, `+beta_j` on the b-side.
    pub(crate) fn stoichiometric_signed(&self, s: usize) -> f64 {
        if s < self.alpha.len() {
            -self.alpha[s]
        } else {
            self.beta[s - self.alpha.len()]
        }
    }

    /// Structural conditions for the mass-action terms. Mass dissipation and
    /// quasi-positivity hold identically for this system, so they are
    /// certified; the growth constant is fitted by sampling as for general
    /// systems.
    pub fn check_conditions(&self, cfg: &SamplingConfig) -> ConditionReport {
        let nu = self.nu();
        let total = self.species_total();
        let m = self.species_a();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut growth_constant: f64 = 0.0;
        let mut buf = vec![0.0; total];
        for _ in 0..cfg.samples {
            for v in buf.iter_mut() {
                *v = rng.random_range(0.0..=cfg.box_max);
            }
            let (f, g) = self
                .regularized_reactions(&buf[..m], &buf[m..], 0.0)
                .expect("sampled state is admissible");
            let norm = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = 1.0 + norm.powf(nu);
            for v in f.iter().chain(&g) {
                growth_constant = growth_constant.max(v.abs() / scale);
            }
        }
        ConditionReport {
            mass_dissipation: ConditionCheck::Certified,
            quasi_positivity: ConditionCheck::Certified,
            growth_constant,
            nu,
            samples: cfg.samples,
        }
    }

    /// Existence/boundedness exponent thresholds in spatial dimension `dim`,
    /// species order `a..b`.
    pub fn check_exponent_conditions(&self, dim: usize) -> ExponentReport {
        let exps: Vec<f64> = self.exp_a.iter().chain(&self.exp_b).copied().collect();
        exponent_report(self.nu(), &exps, dim)
    }

    /// Wraps the mass-action terms as a general system, with the canonical
    /// dissipation weights `lambda_i = 1/(M alpha_i)`, `lambda_j = 1/(N beta_j)`
    /// under which the weighted sum of the reaction terms vanishes.
    pub fn to_general(&self) -> GeneralSystem {
        let m = self.species_a();
        let sys = self.clone();
        let lambda: Vec<f64> = self
            .alpha
            .iter()
            .map(|&ai| 1.0 / (m as f64 * ai))
            .chain(
                self.beta
                    .iter()
                    .map(|&bj| 1.0 / (self.species_b() as f64 * bj)),
            )
            .collect();
        let exps: Vec<f64> = self.exp_a.iter().chain(&self.exp_b).copied().collect();
        let diffs: Vec<f64> = self.diff_a.iter().chain(&self.diff_b).copied().collect();
        GeneralSystem::new(
            exps,
            diffs,
            lambda,
            self.nu(),
            move |u: &[f64], out: &mut [f64]| {
                let (f, g) = sys
                    .regularized_reactions(&u[..m], &u[m..], 0.0)
                    .expect("nonnegative input required");
                out[..m].copy_from_slice(&f);
                out[m..].copy_from_slice(&g);
            },
        )
        .expect("parameters validated on the reversible system")
    }
}

/// System with a caller-supplied reaction map, porous-medium exponents and
/// mass-dissipation weights.
#[derive(Clone)]
pub struct GeneralSystem {
    exps: Vec<f64>,
    diffs: Vec<f64>,
    lambda: Vec<f64>,
    nu: f64,
    f: ReactionMap,
}

impl fmt::Debug for GeneralSystem {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("GeneralSystem")
            .field("species", &self.exps.len())
            .field("m", &self.exps)
            .field("d", &self.diffs)
            .field("lambda", &self.lambda)
            .field("nu", &self.nu)
            .finish_non_exhaustive()
    }
}

impl GeneralSystem {
    pub fn new<F>(exps: Vec<f64>, diffs: Vec<f64>, lambda: Vec<f64>, nu: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        let s = exps.len();
        if s == 0 {
            return Err(Error::InvalidSystem(
                "system needs at least one species".into(),
            ));
        }
        if diffs.len() != s || lambda.len() != s {
            return Err(Error::InvalidSystem(format!(
                "lengths disagree: m {s}, d {}, lambda {}",
                diffs.len(),
                lambda.len()
            )));
        }
        for &e in &exps {
            if !(e > 1.0) {
                return Err(Error::InvalidSystem(format!(
                    "porous-medium exponents must be > 1, got {e}"
                )));
            }
        }
        for &d in &diffs {
            if !(d > 0.0) {
                return Err(Error::InvalidSystem(format!(
                    "diffusion coefficients must be > 0, got {d}"
                )));
            }
        }
        for &l in &lambda {
            if !(l > 0.0) {
                return Err(Error::InvalidSystem(format!(
                    "dissipation weights must be > 0, got {l}"
                )));
            }
        }
        if !(nu >= 1.0) {
            return Err(Error::InvalidSystem(format!(
                "growth exponent must be >= 1, got {nu}"
            )));
        }
        Ok(GeneralSystem {
            exps,
            diffs,
            lambda,
            nu,
            f: Arc::new(f),
        })
    }

    /// Pure porous-medium diffusion (zero reaction map).
    pub fn pure_diffusion(exps: Vec<f64>, diffs: Vec<f64>) -> Result<Self> {
        let s = exps.len();
        Self::new(
            exps,
            diffs,
            vec![1.0; s],
            1.0,
            |_u: &[f64], out: &mut [f64]| {
                out.fill(0.0);
            },
        )
    }

    pub fn species(&self) -> usize {
        self.exps.len()
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exps
    }

    pub fn diffusions(&self) -> &[f64] {
        &self.diffs
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn diffusion(&self, s: usize) -> (f64, f64) {
        (self.diffs[s], self.exps[s])
    }

    /// Evaluates the reaction map at one point.
    pub fn evaluate(&self, u: &[f64], out: &mut [f64]) {
        (self.f)(u, out);
    }

    /// Reaction map damped by `1 / (1 + eps * sum_k |f_k|)`.
    pub fn regularized(&self, u: &[f64], eps: f64, out: &mut [f64]) -> Result<()> {
        if eps < 0.0 {
            return Err(Error::Domain(format!(
                "regularization must satisfy eps >= 0, got {eps}"
            )));
        }
        if let Some(v) = u.iter().find(|v| **v < 0.0) {
            return Err(Error::Domain(format!("negative concentration {v}")));
        }
        (self.f)(u, out);
        if eps > 0.0 {
            let total: f64 = out.iter().map(|v| v.abs()).sum();
            let scale = 1.0 / (1.0 + eps * total);
            for v in out.iter_mut() {
                *v *= scale;
            }
        }
        Ok(())
    }

    pub(crate) fn reactions_over_cells(&self, fields: &FieldSet, eps: f64, out: &mut [Vec<f64>]) {
        kernels::general_reactions(fields.fields(), eps, self.f.as_ref(), out);
    }

    /// Samples the structural conditions on the box `[0, box_max]^S`.
    ///
    /// Mass dissipation is falsified where `sum lambda_i f_i(u) > tolerance`;
    /// quasi-positivity where `f_i(u) < -tolerance` on the face `u_i = 0`.
    /// The growth constant is the largest observed `|f_i(u)| / (1 + |u|^nu)`.
    pub fn check_conditions(&self, cfg: &SamplingConfig) -> ConditionReport {
        let s = self.species();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut samples: Vec<Vec<f64>> = Vec::with_capacity(cfg.samples);
        for _ in 0..cfg.samples {
            samples.push(
                (0..s)
                    .map(|_| rng.random_range(0.0..=cfg.box_max))
                    .collect(),
            );
        }
        // Quasi-positivity probes: zero out one coordinate per sample,
        // cycling through the species.
        let mut face_samples: Vec<(usize, Vec<f64>)> = Vec::with_capacity(cfg.samples);
        for k in 0..cfg.samples {
            let i = k % s;
            let mut u: Vec<f64> = (0..s)
                .map(|_| rng.random_range(0.0..=cfg.box_max))
                .collect();
            u[i] = 0.0;
            face_samples.push((i, u));
        }

        let eval = |u: &[f64]| {
            let mut out = vec![0.0; s];
            (self.f)(u, &mut out);
            out
        };

        let mass_hits: Vec<Violation> = map_samples(&samples, |u: &Vec<f64>| {
            let f = eval(u);
            let total: f64 = f.iter().zip(&self.lambda).map(|(fi, li)| fi * li).sum();
            if total > cfg.tolerance {
                Some(Violation {
                    point: u.to_vec(),
                    value: total,
                })
            } else {
                None
            }
        });
        let positivity_hits: Vec<Violation> = map_samples(&face_samples, |(i, u)| {
            let f = eval(u);
            if f[*i] < -cfg.tolerance {
                Some(Violation {
                    point: u.clone(),
                    value: f[*i],
                })
            } else {
                None
            }
        });
        let growth_constant = samples
            .iter()
            .map(|u| {
                let f = eval(u);
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = 1.0 + norm.powf(self.nu);
                f.iter().fold(0.0f64, |acc, v| acc.max(v.abs() / scale))
            })
            .fold(0.0f64, f64::max);

        ConditionReport {
            mass_dissipation: ConditionCheck::from_violations(mass_hits),
            quasi_positivity: ConditionCheck::from_violations(positivity_hits),
            growth_constant,
            nu: self.nu,
            samples: cfg.samples,
        }
    }

    pub fn check_exponent_conditions(&self, dim: usize) -> ExponentReport {
        exponent_report(self.nu, &self.exps, dim)
    }
}

#[cfg(feature = "parallel")]
fn map_samples<T: Sync, F>(samples: &[T], f: F) -> Vec<Violation>
where
    F: Fn(&T) -> Option<Violation> + Sync + Send,
{
    use rayon::prelude::*;
    samples.par_iter().filter_map(f).collect::<Vec<Violation>>()
}

#[cfg(not(feature = "parallel"))]
fn map_samples<T, F>(samples: &[T], f: F) -> Vec<Violation>
where
    F: Fn(&T) -> Option<Violation>,
{
    samples.iter().filter_map(f).collect()
}

/// Sampling policy for the condition checks.
#[derive(Debug, Clone)]
pub struct SamplingConfig {
    pub samples: usize,
    pub box_max: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            samples: 10_000,
            box_max: 10.0,
            tolerance: 1e-9,
            seed: 0,
        }
    }
}

/// A sample point where a condition failed.
#[derive(Debug, Clone)]
pub struct Violation {
    pub point: Vec<f64>,
    pub value: f64,
}

const MAX_WITNESSES: usize = 16;

/// Outcome of one structural condition.
#[derive(Debug, Clone)]
pub enum ConditionCheck {
    /// Holds identically by the system's algebraic structure.
    Certified,
    /// Checked by sampling; `witnesses` holds up to 16 violating points.
    Sampled {
        violation_count: usize,
        witnesses: Vec<Violation>,
    },
}

impl ConditionCheck {
    fn from_violations(mut hits: Vec<Violation>) -> Self {
        let violation_count = hits.len();
        hits.truncate(MAX_WITNESSES);
        ConditionCheck::Sampled {
            violation_count,
            witnesses: hits,
        }
    }

    pub fn passed(&self) -> bool {
        match self {
            ConditionCheck::Certified => true,
            ConditionCheck::Sampled {
                violation_count, ..
            } => *violation_count == 0,
        }
    }

    pub fn certified(&self) -> bool {
        matches!(self, ConditionCheck::Certified)
    }
}

/// Report of the structural condition checks.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub mass_dissipation: ConditionCheck,
    pub quasi_positivity: ConditionCheck,
    /// Fitted constant of the polynomial growth bound (largest observed
    /// quotient `|f_i(u)| / (1 + |u|^nu)`); the bound always holds on a
    /// compact box for some constant, so this is reported rather than judged.
    pub growth_constant: f64,
    pub nu: f64,
    pub samples: usize,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.mass_dissipation.passed() && self.quasi_positivity.passed()
    }
}

/// Per-species exponent thresholds.
#[derive(Debug, Clone)]
pub struct SpeciesExponents {
    pub index: usize,
    pub exponent: f64,
    /// `m > max(nu - 1, 1)` (global weak solutions).
    pub existence_ok: bool,
    /// `m > nu - 4/(d+2)` in dimensions >= 3, vacuously true in 1D/2D
    /// (bounded solutions with polynomially growing sup norm).
    pub boundedness_ok: bool,
    /// `m + 1`, the space-time integrability order from the duality bound.
    pub duality_exponent: f64,
}

/// Exponent-threshold report for a system in spatial dimension `dim`.
#[derive(Debug, Clone)]
pub struct ExponentReport {
    pub nu: f64,
    pub dim: usize,
    pub species: Vec<SpeciesExponents>,
}

impl ExponentReport {
    pub fn all_existence(&self) -> bool {
        self.species.iter().all(|s| s.existence_ok)
    }

    pub fn all_boundedness(&self) -> bool {
        self.species.iter().all(|s| s.boundedness_ok)
    }
}

fn exponent_report(nu: f64, exponents: &[f64], dim: usize) -> ExponentReport {
    assert!(dim >= 1, "spatial dimension must be >= 1");
    let existence_threshold = (nu - 1.0).max(1.0);
    let species = exponents
        .iter()
        .enumerate()
        .map(|(index, &m)| {
            let existence_ok = m > existence_threshold;
            let boundedness_ok = if dim <= 2 {
                true
            } else {
                m > nu - 4.0 / (dim as f64 + 2.0)
            };
            // In d >= 3 the boundedness threshold dominates nu - 1, so for
            // exponents m > 1 boundedness implies existence.
            if dim >= 3 && m > 1.0 {
                debug_assert!(!boundedness_ok || existence_ok);
            }
            SpeciesExponents {
                index,
                exponent: m,
                existence_ok,
                boundedness_ok,
                duality_exponent: m + 1.0,
            }
        })
        .collect();
    ExponentReport { nu, dim, species }
}
