//! Conserved masses and the unique positive detailed-balance equilibrium.
//!
//! For the single reversible reaction the stoichiometric subspace is
//! one-dimensional, so the equilibrium system collapses to a scalar equation
//! along the reaction extent `xi`:
//! `a_i(xi) = a_i(0) - alpha_i xi`, `b_j(xi) = b_j(0) + beta_j xi`
//! satisfies every conservation law identically, and the detailed-balance
//! condition `k_f a^alpha = k_b b^beta` has exactly one root in the interval
//! where all components stay positive.

use crate::error::{Error, Result};
use crate::network::ReactionSystem;

/// Relative root tolerance on the reaction extent.
const XI_TOL: f64 = 1e-14;

/// Conserved quantities `M_ij = beta_j * mean(a_i,0) + alpha_i * mean(b_j,0)`
/// together with the generating initial averages.
#[derive(Debug, Clone)]
pub struct MassVector {
    values: Vec<f64>,
    base_a: Vec<f64>,
    base_b: Vec<f64>,
    independent: Vec<(usize, usize)>,
}

impl MassVector {
    pub fn species_a(&self) -> usize {
        self.base_a.len()
    }

    pub fn species_b(&self) -> usize {
        self.base_b.len()
    }

    /// `M_ij` (zero-based indices).
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.base_b.len() + j]
    }

    /// All `M_ij` in row-major order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// The selected maximal linearly independent subset: row 1 union
    /// column 1, which has `M + N - 1` members.
    pub fn independent_laws(&self) -> &[(usize, usize)] {
        &self.independent
    }

    /// Initial averages the vector was computed from.
    pub fn initial_averages(&self) -> (&[f64], &[f64]) {
        (&self.base_a, &self.base_b)
    }
}

/// Computes the mass vector from initial averages.
pub fn conserved_masses(sys: &ReactionSystem, a0: &[f64], b0: &[f64]) -> Result<MassVector> {
    let m = sys.species_a();
    let n = sys.species_b();
    if a0.len() != m || b0.len() != n {
        return Err(Error::Domain(format!(
            "average lengths ({}, {}) disagree with system ({m}, {n})",
            a0.len(),
            b0.len()
        )));
    }
    if let Some(v) = a0.iter().chain(b0).find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "initial averages must be >= 0, got {v}"
        )));
    }
    if a0.iter().chain(b0).all(|&v| v == 0.0) {
        return Err(Error::DegenerateMass(
            "all initial averages vanish; no positive equilibrium exists".into(),
        ));
    }
    let alpha = sys.alpha();
    let beta = sys.beta();
    let mut values = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            values.push(beta[j] * a0[i] + alpha[i] * b0[j]);
        }
    }
    let mut independent = Vec::with_capacity(m + n - 1);
    for j in 0..n {
        independent.push((0, j));
    }
    for i in 1..m {
        independent.push((i, 0));
    }
    Ok(MassVector {
        values,
        base_a: a0.to_vec(),
        base_b: b0.to_vec(),
        independent,
    })
}

/// Detailed-balance equilibrium with solver residuals.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub a_inf: Vec<f64>,
    pub b_inf: Vec<f64>,
    /// Reaction extent that carries the initial averages to the equilibrium.
    pub xi: f64,
    /// `|k_f a^alpha - k_b b^beta|` at the computed state.
    pub residual_balance: f64,
    /// Worst conservation-law defect over all `M * N` laws.
    pub residual_mass: f64,
}

impl EquilibriumResult {
    /// Equilibrium values in the combined species order `(a.., b..)`.
    pub fn combined(&self) -> Vec<f64> {
        self.a_inf.iter().chain(&self.b_inf).copied().collect()
    }
}

/// The admissible open extent interval `(xi_min, xi_max)`.
pub fn extent_interval(sys: &ReactionSystem, mass: &MassVector) -> Result<(f64, f64)> {
    let xi_max = mass
        .base_a
        .iter()
        .zip(sys.alpha())
        .map(|(&a, &al)| a / al)
        .fold(f64::INFINITY, f64::min);
    let xi_min = -mass
        .base_b
        .iter()
        .zip(sys.beta())
        .map(|(&b, &be)| b / be)
        .fold(f64::INFINITY, f64::min);
    if !(xi_max > xi_min) {
        return Err(Error::DegenerateMass(format!(
            "empty extent interval ({xi_min}, {xi_max}); some M_ij vanishes"
        )));
    }
    Ok((xi_min, xi_max))
}

/// State along the extent parametrization.
pub fn extent_state(sys: &ReactionSystem, mass: &MassVector, xi: f64) -> (Vec<f64>, Vec<f64>) {
    let a = mass
        .base_a
        .iter()
        .zip(sys.alpha())
        .map(|(&a0, &al)| (a0 - al * xi).max(0.0))
        .collect();
    let b = mass
        .base_b
        .iter()
        .zip(sys.beta())
        .map(|(&b0, &be)| (b0 + be * xi).max(0.0))
        .collect();
    (a, b)
}

/// Entropy of the state at extent `xi`:
/// `sum phi(a_i(xi)) + sum phi(b_j(xi)) + xi ln(k_b/k_f)` with
/// `phi(x) = x ln x - x + 1`. The linear term vanishes for unit rate
/// constants and makes the minimizer the detailed-balance state in general.
pub fn extent_entropy(sys: &ReactionSystem, mass: &MassVector, xi: f64) -> f64 {
    let (a, b) = extent_state(sys, mass, xi);
    let phi = |x: f64| if x > 0.0 { x * x.ln() - x + 1.0 } else { 1.0 };
    let (k_f, k_b) = sys.rates();
    a.iter().map(|&x| phi(x)).sum::<f64>()
        + b.iter().map(|&x| phi(x)).sum::<f64>()
        + xi * (k_b / k_f).ln()
}

/// Derivative of [`extent_entropy`] in `xi`:
/// `ln(k_b b^beta) - ln(k_f a^alpha)`, strictly increasing on the interior.
fn extent_entropy_slope(sys: &ReactionSystem, mass: &MassVector, xi: f64) -> f64 {
    let (a, b) = extent_state(sys, mass, xi);
    let (k_f, k_b) = sys.rates();
    let log_a: f64 = a.iter().zip(sys.alpha()).map(|(&x, &e)| e * x.ln()).sum();
    let log_b: f64 = b.iter().zip(sys.beta()).map(|(&x, &e)| e * x.ln()).sum();
    k_b.ln() + log_b - k_f.ln() - log_a
}

fn balance(sys: &ReactionSystem, mass: &MassVector, xi: f64) -> f64 {
    let (a, b) = extent_state(sys, mass, xi);
    sys.mass_action_rate(&a, &b)
}

fn balance_slope(sys: &ReactionSystem, mass: &MassVector, xi: f64) -> f64 {
    let (a, b) = extent_state(sys, mass, xi);
    let (k_f, k_b) = sys.rates();
    let mono_a: f64 = a
        .iter()
        .zip(sys.alpha())
        .map(|(&v, &e)| v.powf(e))
        .product();
    let mono_b: f64 = b.iter().zip(sys.beta()).map(|(&v, &e)| v.powf(e)).product();
    let da: f64 = a.iter().zip(sys.alpha()).map(|(&v, &e)| -e * e / v).sum();
    let db: f64 = b.iter().zip(sys.beta()).map(|(&v, &e)| e * e / v).sum();
    k_f * mono_a * da - k_b * mono_b * db
}

fn package(sys: &ReactionSystem, mass: &MassVector, xi: f64) -> Result<EquilibriumResult> {
    let (a_inf, b_inf) = extent_state(sys, mass, xi);
    if a_inf.iter().chain(&b_inf).any(|&v| v <= 0.0) {
        return Err(Error::Inconsistency(format!(
            "equilibrium extent {xi} produced a nonpositive component"
        )));
    }
    let residual_balance = sys.mass_action_rate(&a_inf, &b_inf).abs();
    let mut residual_mass: f64 = 0.0;
    for (i, (&ai, &alpha_i)) in a_inf.iter().zip(sys.alpha()).enumerate() {
        for (j, (&bj, &beta_j)) in b_inf.iter().zip(sys.beta()).enumerate() {
            let law = beta_j * ai + alpha_i * bj;
            residual_mass = residual_mass.max((law - mass.value(i, j)).abs());
        }
    }
    Ok(EquilibriumResult {
        a_inf,
        b_inf,
        xi,
        residual_balance,
        residual_mass,
    })
}

/// Solves the detailed-balance equations by bisection bracketing followed by
/// safeguarded Newton on `G(xi) = k_f a(xi)^alpha - k_b b(xi)^beta`, which is
/// strictly decreasing on the admissible interval.
pub fn solve_equilibrium(sys: &ReactionSystem, mass: &MassVector) -> Result<EquilibriumResult> {
    let (xi_min, xi_max) = extent_interval(sys, mass)?;
    let width = xi_max - xi_min;
    let g_lo = balance(sys, mass, xi_min);
    let g_hi = balance(sys, mass, xi_max);
    if !(g_lo > 0.0) || !(g_hi < 0.0) {
        // Cannot occur for admissible positive masses.
        return Err(Error::Inconsistency(format!(
            "no sign change on the extent interval: G({xi_min}) = {g_lo}, G({xi_max}) = {g_hi}"
        )));
    }
    let mut lo = xi_min;
    let mut hi = xi_max;
    // A few bisection rounds pull the iterate well inside the interval where
    // Newton is safe (all components strictly positive).
    for _ in 0..8 {
        let mid = 0.5 * (lo + hi);
        if balance(sys, mass, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tol = XI_TOL * width;
    let mut xi = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = balance(sys, mass, xi);
        if g > 0.0 {
            lo = xi;
        } else if g < 0.0 {
            hi = xi;
        } else {
            return package(sys, mass, xi);
        }
        let slope = balance_slope(sys, mass, xi);
        let newton = xi - g / slope;
        let next = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - xi).abs() <= tol || hi - lo <= tol {
            return package(sys, mass, next);
        }
        xi = next;
    }
    package(sys, mass, xi)
}

/// Independent cross-check: minimizes the extent entropy, whose interior
/// critical point is the detailed-balance state. Golden-section narrows the
/// bracket; the monotone entropy slope (a sum of logarithms, a different
/// algebraic route than the monomial balance) then bisects to full precision.
pub fn entropy_minimization_oracle(
    sys: &ReactionSystem,
    mass: &MassVector,
) -> Result<EquilibriumResult> {
    let (xi_min, xi_max) = extent_interval(sys, mass)?;
    let width = xi_max - xi_min;
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut lo = xi_min;
    let mut hi = xi_max;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = extent_entropy(sys, mass, x1);
    let mut f2 = extent_entropy(sys, mass, x2);
    while hi - lo > 1e-4 * width {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = extent_entropy(sys, mass, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = extent_entropy(sys, mass, x2);
        }
    }
    if extent_entropy_slope(sys, mass, lo) >= 0.0 {
        return package(sys, mass, lo);
    }
    if extent_entropy_slope(sys, mass, hi) <= 0.0 {
        return package(sys, mass, hi);
    }
    let tol = XI_TOL * width;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if extent_entropy_slope(sys, mass, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    package(sys, mass, 0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn system(alpha: Vec<f64>, beta: Vec<f64>) -> ReactionSystem {
        let d = vec![1.0; alpha.len()];
        let h = vec![1.0; beta.len()];
        let m = vec![2.0; alpha.len()];
        let p = vec![2.0; beta.len()];
        ReactionSystem::new(alpha, beta, d, h, m, p).unwrap()
    }

    #[test]
    fn mass_vector_hand_values() {
        let sys = system(vec![1.0], vec![1.0]);
        let mv = conserved_masses(&sys, &[1.0], &[0.0]).unwrap();
        assert_eq!(mv.value(0, 0), 1.0);

        let sys = system(vec![2.0], vec![1.0]);
        let mv = conserved_masses(&sys, &[1.0], &[1.0]).unwrap();
        assert_eq!(mv.value(0, 0), 3.0);

        let sys = system(vec![1.0, 1.0], vec![1.0]);
        let mv = conserved_masses(&sys, &[1.0, 2.0], &[0.0]).unwrap();
        assert_eq!(mv.value(0, 0), 1.0);
        assert_eq!(mv.value(1, 0), 2.0);
        assert_eq!(mv.independent_laws(), &[(0, 0), (1, 0)]);
    }

    #[test]
    fn mass_vector_rejects_all_zero() {
        let sys = system(vec![1.0], vec![1.0]);
        assert!(matches!(
            conserved_masses(&sys, &[0.0], &[0.0]),
            Err(Error::DegenerateMass(_))
        ));
    }

    #[test]
    fn independent_subset_size() {
        let sys = system(vec![1.0, 2.0, 1.0], vec![1.0, 1.0]);
        let mv = conserved_masses(&sys, &[1.0, 1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(mv.independent_laws().len(), 3 + 2 - 1);
    }

    #[test]
    fn symmetric_single_reaction() {
        // 1A <=> 1B with total mass 1: a = b and a + b = 1.
        let sys = system(vec![1.0], vec![1.0]);
        let mv = conserved_masses(&sys, &[1.0], &[0.0]).unwrap();
        let eq = solve_equilibrium(&sys, &mv).unwrap();
        assert_abs_diff_eq!(eq.a_inf[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(eq.b_inf[0], 0.5, epsilon = 1e-12);
        assert!(eq.residual_balance <= 1e-12 * (1.0 + eq.a_inf[0]));
        assert!(eq.residual_mass <= 1e-12 * mv.max_value());
    }

    #[test]
    fn quadratic_case_solved_by_hand() {
        // 2A <=> B with a + 2b = 3 and a^2 = b: root of 2a^2 + a - 3 at a = 1.
        let sys = system(vec![2.0], vec![1.0]);
        let mv = conserved_masses(&sys, &[1.0], &[1.0]).unwrap();
        let eq = solve_equilibrium(&sys, &mv).unwrap();
        assert_abs_diff_eq!(eq.a_inf[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eq.b_inf[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn balanced_input_is_fixed_point() {
        let sys = system(vec![1.0], vec![1.0]);
        let mv = conserved_masses(&sys, &[0.5], &[0.5]).unwrap();
        let eq = solve_equilibrium(&sys, &mv).unwrap();
        assert_abs_diff_eq!(eq.xi, 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(eq.a_inf[0], 0.5, epsilon = 1e-13);
    }

    #[test]
    fn oracle_matches_solver_on_hand_cases() {
        for (alpha, beta, a0, b0) in [
            (vec![1.0], vec![1.0], vec![1.0], vec![0.0]),
            (vec![2.0], vec![1.0], vec![1.0], vec![1.0]),
            (vec![1.0], vec![1.0], vec![0.5], vec![0.5]),
        ] {
            let sys = system(alpha, beta);
            let mv = conserved_masses(&sys, &a0, &b0).unwrap();
            let eq = solve_equilibrium(&sys, &mv).unwrap();
            let oracle = entropy_minimization_oracle(&sys, &mv).unwrap();
            for (x, y) in eq.combined().iter().zip(oracle.combined()) {
                assert_abs_diff_eq!(x, &y, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn oracle_objective_is_convex_on_grid() {
        let sys = system(vec![2.0, 1.0], vec![1.5]);
        let mv = conserved_masses(&sys, &[1.5, 0.8], &[0.3]).unwrap();
        let (lo, hi) = extent_interval(&sys, &mv).unwrap();
        let width = hi - lo;
        let n = 200;
        let at = |k: usize| lo + width * (k as f64 + 0.5) / (n as f64 + 1.0);
        for k in 1..n - 1 {
            let second = extent_entropy(&sys, &mv, at(k - 1))
                - 2.0 * extent_entropy(&sys, &mv, at(k))
                + extent_entropy(&sys, &mv, at(k + 1));
            assert!(second >= -1e-10, "second difference {second} at k={k}");
        }
    }

    #[test]
    fn oracle_slope_blows_up_at_boundaries() {
        let sys = system(vec![1.0, 1.0], vec![2.0]);
        let mv = conserved_masses(&sys, &[1.0, 2.0], &[0.5]).unwrap();
        let (lo, hi) = extent_interval(&sys, &mv).unwrap();
        let w = hi - lo;
        let mut prev = f64::INFINITY;
        for k in [1e-3, 1e-6, 1e-9] {
            let slope = extent_entropy_slope(&sys, &mv, lo + k * w);
            assert!(slope < prev && slope < 0.0);
            prev = slope;
        }
        let mut prev = f64::NEG_INFINITY;
        for k in [1e-3, 1e-6, 1e-9] {
            let slope = extent_entropy_slope(&sys, &mv, hi - k * w);
            assert!(slope > prev && slope > 0.0);
            prev = slope;
        }
    }

    #[test]
    fn empty_interval_is_degenerate() {
        // One a-average and one b-average vanish: xi_min = xi_max = 0.
        let sys = system(vec![1.0, 1.0], vec![1.0, 1.0]);
        let mv = conserved_masses(&sys, &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!(matches!(
            solve_equilibrium(&sys, &mv),
            Err(Error::DegenerateMass(_))
        ));
    }

    #[test]
    fn scaling_of_symmetric_case() {
        // 1A <=> 1B: a = b = M/2 for any total mass M.
        for total in [0.1, 1.0, 7.3, 50.0] {
            let sys = system(vec![1.0], vec![1.0]);
            let mv = conserved_masses(&sys, &[total], &[0.0]).unwrap();
            let eq = solve_equilibrium(&sys, &mv).unwrap();
            assert_abs_diff_eq!(eq.a_inf[0], total / 2.0, epsilon = 1e-12 * total.max(1.0));
            assert_abs_diff_eq!(eq.b_inf[0], total / 2.0, epsilon = 1e-12 * total.max(1.0));
        }
    }

    #[test]
    fn rate_constants_shift_equilibrium() {
        // k_f a = k_b b with a + b = 2, k_f = 4 k_b: a = 2/5, b = 8/5.
        let sys = ReactionSystem::with_rates(
            vec![1.0],
            vec![1.0],
            vec![1.0],
            vec![1.0],
            vec![2.0],
            vec![2.0],
            4.0,
            1.0,
        )
        .unwrap();
        let mv = conserved_masses(&sys, &[2.0], &[0.0]).unwrap();
        let eq = solve_equilibrium(&sys, &mv).unwrap();
        assert_abs_diff_eq!(eq.a_inf[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(eq.b_inf[0], 1.6, epsilon = 1e-12);
        let oracle = entropy_minimization_oracle(&sys, &mv).unwrap();
        assert_abs_diff_eq!(oracle.a_inf[0], 0.4, epsilon = 1e-9);
    }
}
