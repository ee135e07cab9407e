//! Property tests for the structural invariants: stoichiometric
//! cancellation, quasi-positivity, regularization monotonicity, discrete
//! divergence, entropy positivity and additivity, comparison-function
//! monotonicity, and step-level conservation.

use proptest::prelude::*;

use porodiff::entropy;
use porodiff::equilibrium::{conserved_masses, solve_equilibrium};
use porodiff::grid::{self, FieldSet, Grid};
use porodiff::network::{max_growth_exponent, ReactionSystem};
use porodiff::solver::{self, SimConfig, SystemModel};

fn stoich(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0..3.0f64, n..=n)
}

fn exps(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.2..3.0f64, n..=n)
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2..2.0f64, n..=n)
}

fn state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..4.0f64, n..=n)
}

prop_compose! {
    fn reaction_system()(m in 1..4usize, n in 1..4usize)(
        alpha in stoich(m),
        beta in stoich(n),
        d in coeffs(m),
        h in coeffs(n),
        ma in exps(m),
        pb in exps(n),
        a in state(m),
        b in state(n),
    ) -> (ReactionSystem, Vec<f64>, Vec<f64>) {
        (ReactionSystem::new(alpha, beta, d, h, ma, pb).unwrap(), a, b)
    }
}

proptest! {
    // The weighted reaction sum vanishes identically (the mass-dissipation
    // identity of the reversible network).
    #[test]
    fn stoichiometric_cancellation((sys, a, b) in reaction_system()) {
        let (f, g) = sys.evaluate_reactions(&a, &b).unwrap();
        let m = f.len() as f64;
        let n = g.len() as f64;
        let sum: f64 = f.iter().zip(sys.alpha()).map(|(fi, ai)| fi / ai / m).sum::<f64>()
            + g.iter().zip(sys.beta()).map(|(gj, bj)| gj / bj / n).sum::<f64>();
        let scale = f.iter().chain(&g).fold(1.0f64, |acc, v| acc.max(v.abs()));
        prop_assert!(sum.abs() <= 1e-14 * scale);
    }

    // Quasi-positivity: with one a-species empty the forward monomial
    // vanishes, so its reaction term is nonnegative.
    #[test]
    fn quasi_positive_on_zero_faces((sys, mut a, b) in reaction_system(), which in 0..4usize) {
        let idx = which % a.len();
        a[idx] = 0.0;
        let (f, _) = sys.evaluate_reactions(&a, &b).unwrap();
        prop_assert!(f[idx] >= 0.0);
    }

    // Damping is monotone in the regularization strength.
    #[test]
    fn regularization_monotone((sys, a, b) in reaction_system(),
                               e1 in 0.0..2.0f64, e2 in 0.0..2.0f64) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (f_lo, g_lo) = sys.regularized_reactions(&a, &b, lo).unwrap();
        let (f_hi, g_hi) = sys.regularized_reactions(&a, &b, hi).unwrap();
        for (x, y) in f_lo.iter().zip(&f_hi).chain(g_lo.iter().zip(&g_hi)) {
            prop_assert!(x.abs() >= y.abs() - 1e-15);
        }
    }

    // The growth exponent only sees the coordinate sums.
    #[test]
    fn growth_exponent_permutation_invariant(mut alpha in prop::collection::vec(1.0..3.0f64, 1..5),
                                             beta in prop::collection::vec(1.0..3.0f64, 1..5),
                                             rot in 0..4usize) {
        let before = max_growth_exponent(&alpha, &beta).unwrap();
        let k = rot % alpha.len();
        alpha.rotate_left(k);
        let after = max_growth_exponent(&alpha, &beta).unwrap();
        prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
    }

    // Discrete divergence theorem on random fields and exponents.
    #[test]
    fn laplacian_integrates_to_zero(field in prop::collection::vec(0.0..3.0f64, 8..80),
                                    m in 1.0..3.0f64) {
        let grid = Grid::line(field.len()).unwrap();
        let lap = grid::neumann_laplacian_of_power(&grid, &field, m, 1.0).unwrap();
        let total = grid::average(&grid, &lap).abs();
        let mass: f64 = lap.iter().map(|v| v.abs()).sum::<f64>() * grid.cell_volume();
        prop_assert!(total <= 1e-12 * mass.max(1e-300));
    }

    // The Fisher-type quadratic form is nonnegative and vanishes exactly on
    // constants.
    #[test]
    fn gradient_form_positive(field in prop::collection::vec(0.0..3.0f64, 4..60),
                              m in 1.2..3.0f64) {
        let grid = Grid::line(field.len()).unwrap();
        let form = grid::gradient_quadratic_form(&grid, &field, m).unwrap();
        prop_assert!(form >= 0.0);
        let lo = field.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = field.iter().cloned().fold(0.0f64, f64::max);
        if hi - lo > 1e-9 {
            prop_assert!(form > 0.0);
        } else if hi == lo {
            prop_assert!(form == 0.0);
        }
    }

    // Entropy is nonnegative and vanishes only at the all-ones state.
    #[test]
    fn entropy_positive(field in prop::collection::vec(0.0..4.0f64, 4..60)) {
        let grid = Grid::line(field.len()).unwrap();
        let fields = FieldSet::from_fields(vec![field.clone()]).unwrap();
        let e = entropy::entropy(&grid, &fields);
        prop_assert!(e >= 0.0);
        if field.iter().any(|&u| (u - 1.0).abs() > 1e-3) {
            prop_assert!(e > 0.0);
        }
    }

    // Entropy production is a sum of nonnegative parts.
    #[test]
    fn production_nonnegative((sys, _, _) in reaction_system(),
                              seedling in prop::collection::vec(0.01..3.0f64, 16..17)) {
        let grid = Grid::line(16).unwrap();
        let species = sys.species_total();
        let fields: Vec<Vec<f64>> = (0..species)
            .map(|s| {
                (0..16)
                    .map(|c| seedling[c] * (1.0 + 0.1 * ((s + c) % 3) as f64))
                    .collect()
            })
            .collect();
        let fields = FieldSet::from_fields(fields).unwrap();
        let parts = entropy::entropy_production(&grid, &sys, &fields);
        prop_assert!(parts.diffusion >= 0.0);
        prop_assert!(parts.reactive >= 0.0);
    }

    // Additivity of the relative entropy against the detailed-balance state
    // determined by the fields' own averages.
    #[test]
    fn relative_entropy_additivity((sys, _, _) in reaction_system(),
                                   cells_seed in prop::collection::vec(0.05..2.0f64, 24..25)) {
        let grid = Grid::line(24).unwrap();
        let species = sys.species_total();
        let fields: Vec<Vec<f64>> = (0..species)
            .map(|s| {
                (0..24)
                    .map(|c| cells_seed[c] * (0.6 + 0.2 * ((s * 7 + c) % 5) as f64))
                    .collect()
            })
            .collect();
        let fields = FieldSet::from_fields(fields).unwrap();
        let averages: Vec<f64> =
            (0..species).map(|s| grid::average(&grid, fields.field(s))).collect();
        let m = sys.species_a();
        let mass = conserved_masses(&sys, &averages[..m], &averages[m..]).unwrap();
        let eq = solve_equilibrium(&sys, &mass).unwrap();
        let rel = entropy::relative_entropy(&grid, &fields, &eq.combined()).unwrap();
        prop_assert!((rel.total - rel.spatial - rel.mean).abs()
            <= 1e-10 * (1.0 + rel.total.abs()));
        prop_assert!(rel.total >= -1e-10);
        prop_assert!(rel.spatial >= -1e-10);
        prop_assert!(rel.mean >= -1e-10);
    }

    // The elementary chain behind the second Sobolev estimate:
    // integral u ln(u/mean) >= integral (sqrt u - sqrt mean)^2 >= ||sqrt u - mean sqrt u||^2.
    #[test]
    fn sobolev_secondary_quotient(field in prop::collection::vec(0.01..4.0f64, 8..60)) {
        let grid = Grid::line(field.len()).unwrap();
        let vol = grid.cell_volume();
        let avg = grid::average(&grid, &field);
        let ent: f64 =
            field.iter().map(|&u| entropy::xlnx(u)).sum::<f64>() * vol - entropy::xlnx(avg);
        let sq_mean: f64 = field
            .iter()
            .map(|&u| (u.sqrt() - avg.sqrt()) * (u.sqrt() - avg.sqrt()))
            .sum::<f64>()
            * vol;
        let avg_sqrt: f64 = field.iter().map(|&u| u.sqrt()).sum::<f64>() * vol;
        let fluct = avg - avg_sqrt * avg_sqrt;
        prop_assert!(ent >= sq_mean - 1e-10 * (1.0 + ent.abs()));
        prop_assert!(sq_mean >= fluct - 1e-10 * (1.0 + sq_mean.abs()));
        if sq_mean > 1e-12 {
            prop_assert!(ent / sq_mean >= 1.0 - 1e-10);
        }
    }

    // Phi is increasing in its first argument.
    #[test]
    fn phi_monotone(x1 in 0.01..20.0f64, gap in 0.001..5.0f64, y in 0.01..20.0f64) {
        let lo = entropy::phi(x1, y).unwrap();
        let hi = entropy::phi(x1 + gap, y).unwrap();
        prop_assert!(hi >= lo - 1e-9 * (1.0 + hi.abs()));
    }

    // One explicit step preserves every conservation law to rounding and
    // never yields negative states.
    #[test]
    fn explicit_step_conserves((sys, a, b) in reaction_system(), dt in 1e-6..0.5f64) {
        let grid = Grid::line(16).unwrap();
        let species = sys.species_total();
        let m = sys.species_a();
        let combined: Vec<f64> = a.iter().chain(&b).copied().collect();
        let fields: Vec<Vec<f64>> = (0..species)
            .map(|s| (0..16).map(|c| combined[s] * (0.5 + 0.05 * (c % 4) as f64)).collect())
            .collect();
        let initial = FieldSet::from_fields(fields).unwrap();
        let cfg = SimConfig::new(SystemModel::Reversible(sys.clone()), grid.clone(), initial, 1.0);
        let (next, _) = solver::step_explicit(&cfg, &cfg.initial, dt).unwrap();
        for s in 0..species {
            prop_assert!(next.field(s).iter().all(|&v| v >= 0.0));
        }
        let avg = |fs: &FieldSet, s: usize| grid::average(&grid, fs.field(s));
        for i in 0..m {
            for j in 0..sys.species_b() {
                let before = sys.beta()[j] * avg(&cfg.initial, i) + sys.alpha()[i] * avg(&cfg.initial, m + j);
                let after = sys.beta()[j] * avg(&next, i) + sys.alpha()[i] * avg(&next, m + j);
                prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
            }
        }
    }
}
