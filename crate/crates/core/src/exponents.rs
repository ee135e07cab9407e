//! Bootstrap exponent calculus: smoothing exponents of the porous medium
//! equation, the integrability-improvement recursions and their fixed points,
//! interpolation exponents, and the step count to sup-norm control.

use crate::error::{Error, Result};

/// Hard cap on recursion length; above the threshold the recursions provably
/// terminate in far fewer steps, below it they stall.
pub const ITERATION_CAP: usize = 10_000;

/// An integrability exponent that may be unbounded. The unbounded smoothing
/// case is a semantic outcome, so it gets its own variant rather than a
/// sentinel float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Unbounded,
}

impl Exponent {
    pub fn finite(self) -> Option<f64> {
        match self {
            Exponent::Finite(v) => Some(v),
            Exponent::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Exponent::Unbounded)
    }
}

/// Parameter bundle for the recursions (`m = 1` admitted as the linear
/// limit).
#[derive(Debug, Clone, Copy)]
pub struct BootstrapParams {
    pub dim: usize,
    pub m: f64,
    pub p0: f64,
    pub nu: f64,
}

fn check_common(dim: usize, m: f64, p0: f64) {
    assert!(dim >= 1, "spatial dimension must be >= 1, got {dim}");
    assert!(m >= 1.0, "porous-medium exponent must be >= 1, got {m}");
    assert!(p0 > 1.0, "initial integrability must exceed 1, got {p0}");
}

/// Space-time integrability gained from one smoothing round of the
/// porous-medium flow with an `L^p0` right-hand side: unbounded once
/// `p0 >= (d+2)/2`, else `(m d + 2) p0 / (d + 2 - 2 p0)`.
pub fn smoothing_exponent(dim: usize, m: f64, p0: f64) -> Exponent {
    check_common(dim, m, p0);
    let d = dim as f64;
    if p0 >= 0.5 * (d + 2.0) {
        Exponent::Unbounded
    } else {
        Exponent::Finite((m * d + 2.0) * p0 / (d + 2.0 - 2.0 * p0))
    }
}

/// Fixed point of the `p`-recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixedPoint {
    Finite(f64),
    /// `p0 = (d+2)/2`: the recursion runs off to infinity.
    Unbounded,
    /// `p0 > (d+2)/2`: the algebraic fixed point is negative, so no positive
    /// finite fixed point exists (the sequence still increases without bound).
    NoPositive,
}

/// Fixed point `p_inf = d[(m-1)(p0-1) + p0] / (2[(d+2)/2 - p0])` of the
/// `p`-recursion; dimensions 1 and 2 reach unbounded integrability in a
/// single smoothing round, matching [`p_iteration`].
pub fn p_fixed_point(dim: usize, m: f64, p0: f64) -> FixedPoint {
    check_common(dim, m, p0);
    if dim < 3 {
        return FixedPoint::Unbounded;
    }
    let d = dim as f64;
    let gap = 0.5 * (d + 2.0) - p0;
    if gap == 0.0 {
        return FixedPoint::Unbounded;
    }
    let value = d * ((m - 1.0) * (p0 - 1.0) + p0) / (2.0 * gap);
    if value < 0.0 {
        FixedPoint::NoPositive
    } else {
        FixedPoint::Finite(value)
    }
}

/// Direction of the `p`-sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
    /// Dimensions 1 and 2: the Sobolev exponent is arbitrary finite, so the
    /// bootstrap reaches every integrability order in one round and no
    /// recursion is run.
    UnboundedOneRound,
}

/// The `p`-recursion together with its fixed point and direction.
#[derive(Debug, Clone)]
pub struct PIteration {
    /// `p_0, p_1, ...` (just `p_0` in dimensions 1 and 2).
    pub values: Vec<f64>,
    pub fixed_point: FixedPoint,
    pub monotonicity: Monotonicity,
}

/// One application of the recursion map with coefficients from `p0`:
/// `value * d(p0-1)/(p0(d-2)+2) + d[(m-1)(p0-1)+p0]/(p0(d-2)+2)`
/// (dimension >= 3). The finite fixed point of [`p_iteration`] is a fixed
/// point of this map.
pub fn p_step(dim: usize, m: f64, p0: f64, value: f64) -> f64 {
    check_common(dim, m, p0);
    assert!(
        dim >= 3,
        "the recursion map is the Sobolev form, defined for d >= 3"
    );
    let d = dim as f64;
    let denom = p0 * (d - 2.0) + 2.0;
    let ratio = d * (p0 - 1.0) / denom;
    let affine = d * ((m - 1.0) * (p0 - 1.0) + p0) / denom;
    ratio * value + affine
}

/// Runs `p_{n+1} = p_n d(p0-1)/(p0(d-2)+2) + d[(m-1)(p0-1)+p0]/(p0(d-2)+2)`
/// for `n_max` steps (dimension >= 3; lower dimensions return the one-round
/// classification).
pub fn p_iteration(dim: usize, m: f64, p0: f64, n_max: usize) -> PIteration {
    check_common(dim, m, p0);
    if dim < 3 {
        return PIteration {
            values: vec![p0],
            fixed_point: FixedPoint::Unbounded,
            monotonicity: Monotonicity::UnboundedOneRound,
        };
    }
    let d = dim as f64;
    let denom = p0 * (d - 2.0) + 2.0;
    assert!(
        denom > 0.0,
        "recursion denominator must be positive for p0 > 1, d >= 3"
    );
    let ratio = d * (p0 - 1.0) / denom;
    let affine = d * ((m - 1.0) * (p0 - 1.0) + p0) / denom;
    let steps = n_max.min(ITERATION_CAP);
    let mut values = Vec::with_capacity(steps + 1);
    values.push(p0);
    let mut p = p0;
    for _ in 0..steps {
        p = ratio * p + affine;
        values.push(p);
        if !p.is_finite() {
            break;
        }
    }
    let fixed_point = p_fixed_point(dim, m, p0);
    let monotonicity = match fixed_point {
        FixedPoint::Unbounded | FixedPoint::NoPositive => Monotonicity::Increasing,
        FixedPoint::Finite(p_inf) => {
            if p0 < p_inf {
                Monotonicity::Increasing
            } else if p0 > p_inf {
                Monotonicity::Decreasing
            } else {
                Monotonicity::Constant
            }
        }
    };
    PIteration {
        values,
        fixed_point,
        monotonicity,
    }
}

/// Interpolation exponent
/// `theta = 1 - (2/d) ((p0-1)/p0) (p_next/(p_next-1))`, required to land in
/// `(0,1)`.
pub fn theta_exponent(dim: usize, p0: f64, p_next: f64) -> Result<f64> {
    assert!(dim >= 1, "spatial dimension must be >= 1, got {dim}");
    if !(p_next > p0 && p0 > 1.0) {
        return Err(Error::InconsistentParameters(format!(
            "need p_next > p0 > 1, got p0 = {p0}, p_next = {p_next}"
        )));
    }
    let d = dim as f64;
    let theta = 1.0 - (2.0 / d) * ((p0 - 1.0) / p0) * (p_next / (p_next - 1.0));
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InconsistentParameters(format!(
            "interpolation exponent {theta} outside (0,1) for d = {dim}, p0 = {p0}, p_next = {p_next}"
        )));
    }
    Ok(theta)
}

/// Residual of the interpolation identity
/// `(p0-1)/(p0(p_next-1)) = (1-theta)/p_next + theta/s_n`.
pub fn theta_identity_residual(theta: f64, p0: f64, p_next: f64, s_n: f64) -> f64 {
    let lhs = (p0 - 1.0) / (p0 * (p_next - 1.0));
    let rhs = (1.0 - theta) / p_next + theta / s_n;
    (lhs - rhs).abs()
}

/// Threshold the starting exponent must exceed for the `q`-recursion to
/// climb: `(d(nu - m) + 2(nu - 1)) / 2`. It is also the nonzero fixed point
/// of the recursion.
pub fn q_threshold(dim: usize, m: f64, nu: f64) -> f64 {
    0.5 * (dim as f64 * (nu - m) + 2.0 * (nu - 1.0))
}

/// Once `q_n` exceeds `(d+2) nu / 2` the nonlinearity lands in the unbounded
/// smoothing regime and the sup norm is controlled.
pub fn linf_trigger(dim: usize, nu: f64) -> f64 {
    0.5 * (dim as f64 + 2.0) * nu
}

/// Outcome of the `q`-recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QOutcome {
    /// Reached the sup-norm trigger after `steps` applications.
    Triggered { steps: usize },
    /// Non-increasing below the trigger (start at or below the threshold);
    /// the bootstrap never reaches sup-norm control.
    Stalled,
}

/// The `q`-recursion `q_{n+1} = (m d + 2) q_n / (nu (d+2) - 2 q_n)`.
#[derive(Debug, Clone)]
pub struct QIteration {
    pub values: Vec<f64>,
    pub outcome: QOutcome,
    pub threshold: f64,
    pub trigger: f64,
}

pub fn q_iteration(dim: usize, m: f64, nu: f64, q0: f64) -> QIteration {
    check_common(dim, m, q0);
    assert!(nu >= 1.0, "growth exponent must be >= 1, got {nu}");
    let d = dim as f64;
    let threshold = q_threshold(dim, m, nu);
    let trigger = linf_trigger(dim, nu);
    let mut values = vec![q0];
    let mut q = q0;
    let mut outcome = QOutcome::Stalled;
    for n in 0..=ITERATION_CAP {
        if q > trigger {
            outcome = QOutcome::Triggered { steps: n };
            break;
        }
        let denom = nu * (d + 2.0) - 2.0 * q;
        if denom <= 0.0 {
            // q at or past the trigger point; counts as triggered.
            outcome = QOutcome::Triggered { steps: n };
            break;
        }
        let next = (m * d + 2.0) * q / denom;
        if next <= q {
            // At or below the fixed point: the sequence cannot climb.
            values.push(next);
            outcome = QOutcome::Stalled;
            break;
        }
        q = next;
        values.push(q);
    }
    QIteration {
        values,
        outcome,
        threshold,
        trigger,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn smoothing_case_split() {
        assert_eq!(smoothing_exponent(3, 2.0, 2.5), Exponent::Unbounded);
        let s = smoothing_exponent(3, 2.0, 2.0).finite().unwrap();
        assert_abs_diff_eq!(s, 16.0, epsilon = 1e-12);
        let s = smoothing_exponent(2, 1.0, 1.5).finite().unwrap();
        assert_abs_diff_eq!(s, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn smoothing_gains_strictly() {
        for (d, m, p0) in [(3, 1.0, 1.2), (3, 2.5, 2.4), (4, 1.5, 1.01), (1, 1.0, 1.2)] {
            if let Exponent::Finite(s) = smoothing_exponent(d, m, p0) {
                assert!(s > p0, "no gain at d={d}, m={m}, p0={p0}: s={s}");
            }
        }
    }

    #[test]
    fn p_iteration_hand_step() {
        // d=3, m=2, p0=2: ratio 3/4, affine 9/4, so p1 = 3.75.
        let it = p_iteration(3, 2.0, 2.0, 4);
        assert_abs_diff_eq!(it.values[1], 3.75, epsilon = 1e-13);
        assert_eq!(it.monotonicity, Monotonicity::Increasing);
        match it.fixed_point {
            FixedPoint::Finite(p) => assert_abs_diff_eq!(p, 9.0, epsilon = 1e-12),
            other => panic!("expected finite fixed point, got {other:?}"),
        }
    }

    #[test]
    fn p_iteration_converges_to_fixed_point() {
        let it = p_iteration(3, 2.0, 2.0, 200);
        let last = *it.values.last().unwrap();
        assert_abs_diff_eq!(last, 9.0, epsilon = 1e-9);
    }

    #[test]
    fn p_fixed_point_cases() {
        assert_eq!(p_fixed_point(3, 1.0, 2.5), FixedPoint::Unbounded);
        assert_eq!(p_fixed_point(3, 1.0, 3.0), FixedPoint::NoPositive);
        match p_fixed_point(3, 2.0, 2.0) {
            FixedPoint::Finite(p) => assert_abs_diff_eq!(p, 9.0, epsilon = 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn p_step_fixes_the_fixed_point() {
        if let FixedPoint::Finite(p_inf) = p_fixed_point(3, 2.0, 2.0) {
            let next = p_step(3, 2.0, 2.0, p_inf);
            assert!((next - p_inf).abs() <= 1e-10 * p_inf.max(1.0));
        } else {
            panic!("fixed point expected");
        }
    }

    #[test]
    fn p_iteration_above_critical_increases() {
        // p0 = 3 > (d+2)/2 = 2.5 with m = 1: strictly increasing.
        let it = p_iteration(3, 1.0, 3.0, 30);
        assert_eq!(it.monotonicity, Monotonicity::Increasing);
        assert_eq!(it.fixed_point, FixedPoint::NoPositive);
        for w in it.values.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn low_dimensions_are_one_round() {
        for d in [1, 2] {
            let it = p_iteration(d, 1.5, 1.4, 10);
            assert_eq!(it.values, vec![1.4]);
            assert_eq!(it.monotonicity, Monotonicity::UnboundedOneRound);
        }
    }

    #[test]
    fn theta_hand_value_and_identity() {
        // d=3, p0=2, p_next=3.75 (one recursion step at m=2).
        let theta = theta_exponent(3, 2.0, 3.75).unwrap();
        assert_abs_diff_eq!(
            theta,
            1.0 - (2.0 / 3.0) * 0.5 * (3.75 / 2.75),
            epsilon = 1e-15
        );
        assert!((theta - 0.5455).abs() < 1e-3);
        // s_0 from r_0 = m + p_0 - 1 and the Sobolev relation s = r d/(d-2).
        let s0 = (2.0 + 2.0 - 1.0) * 3.0 / 1.0;
        assert!(theta_identity_residual(theta, 2.0, 3.75, s0) <= 1e-12);
    }

    #[test]
    fn theta_error_branch() {
        // d=2, p_next=2, large p0: theta tends to -1.
        assert!(theta_exponent(2, 1.0e6, 2.0).is_err());
        assert!(theta_exponent(3, 2.0, 1.5).is_err());
    }

    #[test]
    fn q_iteration_hand_case() {
        // d=3, m=2, nu=2: threshold 1, trigger 5; q0=3 -> q1 = 24/4 = 6.
        let it = q_iteration(3, 2.0, 2.0, 3.0);
        assert_eq!(it.threshold, 1.0);
        assert_eq!(it.trigger, 5.0);
        assert_eq!(it.values, vec![3.0, 6.0]);
        assert_eq!(it.outcome, QOutcome::Triggered { steps: 1 });
    }

    #[test]
    fn q_at_threshold_is_constant_and_stalls() {
        let threshold = q_threshold(3, 1.5, 2.0);
        assert!(threshold > 1.0);
        let it = q_iteration(3, 1.5, 2.0, threshold);
        assert_eq!(it.outcome, QOutcome::Stalled);
        assert_abs_diff_eq!(it.values[1], threshold, epsilon = 1e-12);
    }

    #[test]
    fn q_linear_limit_triggers() {
        // nu = m = 1: threshold 0, so any q0 > 1 climbs in finitely many steps.
        let it = q_iteration(2, 1.0, 1.0, 1.01);
        assert!(matches!(it.outcome, QOutcome::Triggered { .. }));
        for w in it.values.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn q_below_threshold_stalls() {
        // threshold = (3(3-1.5) + 2*2)/2 = 4.25 > q0.
        let it = q_iteration(3, 1.5, 3.0, 2.0);
        assert_eq!(it.outcome, QOutcome::Stalled);
    }

    #[test]
    fn q_already_above_trigger() {
        let it = q_iteration(3, 2.0, 1.0, 3.0);
        assert_eq!(it.outcome, QOutcome::Triggered { steps: 0 });
        assert_eq!(it.values.len(), 1);
    }
}
