//! Online power control over one recharge epoch.
//!
//! A recharge at age 1 is followed by a geometric number of slots, the slot
//! of age `i` being reached with probability `(1-p)^(i-1)`. The online
//! program spreads the battery `b_bar` over ages so as to maximize
//!
//! ```text
//!     Σ_i p (1-p)^(i-1) · ½ log₂(1 + ε_i)   s.t.  ε_i >= 0,  Σ ε_i <= b_bar.
//! ```
//!
//! The KKT conditions give a water-filling solution over the first `Ñ` ages
//! ([`optimal_allocation`]); [`numeric_oracle_allocation`] solves the same
//! concave program by projected gradient ascent and shares no code with it.

use crate::error::{Error, Result};
use crate::model::{rate, Bits, ChannelParams};
use crate::scalar::{one_minus_pow_complement, Real};

/// Upper limit on the threshold search.
pub const N_TILDE_CAP: usize = 1_000_000_000;
const ORACLE_MAX_ITERATIONS: usize = 1_000_000;
const LINE_SEARCH_BISECTIONS: usize = 60;

/// Optimal energy per age within an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution<T> {
    /// `eps[i-1]` is the energy spent at age `i`; ages past the end get 0.
    pub eps: Vec<T>,
    /// Number of ages receiving energy. Zero only for an empty battery.
    pub n_tilde: usize,
    /// Multiplier of the total energy constraint (nats per unit energy).
    pub lambda_tilde: T,
    pub value_bits: Bits<T>,
}

impl<T: Real> AllocationSolution<T> {
    fn empty() -> Self {
        Self { eps: Vec::new(), n_tilde: 0, lambda_tilde: T::zero(), value_bits: Bits::zero() }
    }

    /// True when the battery is empty and nothing is allocated.
    pub fn is_degenerate(&self) -> bool {
        self.eps.is_empty()
    }

    /// Energy spent at `age` (1-based).
    pub fn energy_at(&self, age: usize) -> T {
        if age == 0 {
            return T::zero();
        }
        self.eps.get(age - 1).copied().unwrap_or_else(T::zero)
    }

    /// The allocation padded with zeros to `len` ages.
    pub fn padded(&self, len: usize) -> Vec<T> {
        (1..=len).map(|age| self.energy_at(age)).collect()
    }

    pub fn total_energy(&self) -> T {
        self.eps.iter().fold(T::zero(), |acc, &e| acc + e)
    }
}

/// `(1-p)^n (1 + p (b_bar + n)) < 1`.
pub fn threshold_holds<T: Real>(params: &ChannelParams<T>, n: usize) -> bool {
    let p = params.p();
    let survive = T::one() - one_minus_pow_complement(p, n);
    survive * (T::one() + p * (params.b_bar() + T::from_count(n))) < T::one()
}

/// Smallest `Ñ >= 1` with `(1-p)^Ñ (1 + p (b_bar + Ñ)) < 1`.
pub fn find_n_tilde<T: Real>(params: &ChannelParams<T>) -> Result<usize> {
    let p = params.p();
    let b = params.b_bar();
    let mut survive = T::one();
    for n in 1..=N_TILDE_CAP {
        survive = survive * (T::one() - p);
        if survive * (T::one() + p * (b + T::from_count(n))) < T::one() {
            return Ok(n);
        }
    }
    Err(Error::Internal(format!("threshold search exceeded {N_TILDE_CAP} iterations for p = {p}, b_bar = {b}")))
}

/// `Σ_i p (1-p)^(i-1) r(ε_i)` by direct summation.
pub fn objective_bits<T: Real>(params: &ChannelParams<T>, eps: &[T]) -> Result<Bits<T>> {
    let mut total = T::zero();
    for (i, &e) in eps.iter().enumerate() {
        let w = params.age_weight(i + 1);
        if w == T::zero() {
            break;
        }
        total = total + w * rate(e)?.value();
    }
    Ok(Bits(total))
}

/// Closed-form KKT solution of the online program.
///
/// `ε_i = (Ñ + b_bar) p (1-p)^(i-1) / (1 - (1-p)^Ñ) - 1` for `i <= Ñ`, and
/// `λ̃ = (1 - (1-p)^Ñ) / (2 (b_bar + Ñ))`. The value is summed directly,
/// which stays accurate at `p = 1`.
pub fn optimal_allocation<T: Real>(params: &ChannelParams<T>) -> Result<AllocationSolution<T>> {
    if params.b_bar() == T::zero() {
        return Ok(AllocationSolution::empty());
    }
    let n_tilde = find_n_tilde(params)?;
    let reach = one_minus_pow_complement(params.p(), n_tilde);
    let level = (T::from_count(n_tilde) + params.b_bar()) / reach;
    // The last entry is exactly zero when the threshold inequality is tight
    // at Ñ - 1; clamp the rounding there.
    let eps: Vec<T> = if params.p() >= T::one() {
        vec![params.b_bar()]
    } else {
        (1..=n_tilde).map(|i| (level * params.age_weight(i) - T::one()).max(T::zero())).collect()
    };
    let lambda_tilde = reach / (T::lit(2.0) * (params.b_bar() + T::from_count(n_tilde)));
    let value_bits = objective_bits(params, &eps)?;
    Ok(AllocationSolution { eps, n_tilde, lambda_tilde, value_bits })
}

/// Closed-form optimal value, `p < 1` only.
pub fn closed_form_value<T: Real>(params: &ChannelParams<T>) -> Result<Bits<T>> {
    let p = params.p();
    if p >= T::one() {
        return Err(Error::domain(
            "closed form is indeterminate at p = 1; use optimal_allocation instead",
        ));
    }
    let n_tilde = find_n_tilde(params)?;
    let n = T::from_count(n_tilde);
    let two = T::lit(2.0);
    let reach = one_minus_pow_complement(p, n_tilde);
    let survive = T::one() - reach;
    let q = T::one() - p;
    let first = reach / two * (p * (params.b_bar() + n) / reach).ln();
    let second = (q - survive * (q + n * p)) / (two * p) * (-p).ln_1p();
    Ok(Bits((first + second) / T::LN_2()))
}

/// Euclidean projection onto `{x >= 0, Σ x <= budget}`.
fn project_capped_simplex<T: Real>(v: &mut [T], budget: T) {
    let clipped_sum = v.iter().fold(T::zero(), |acc, &x| acc + x.max(T::zero()));
    if clipped_sum <= budget {
        v.iter_mut().for_each(|x| *x = x.max(T::zero()));
        return;
    }
    let mut sorted: Vec<T> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite iterate"));
    let mut cumulative = T::zero();
    let mut shift = T::zero();
    for (k, &s) in sorted.iter().enumerate() {
        cumulative = cumulative + s;
        let candidate = (cumulative - budget) / T::from_count(k + 1);
        if s - candidate > T::zero() {
            shift = candidate;
        } else {
            break;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - shift).max(T::zero()));
}

/// Spectral projected gradient ascent on the first `horizon` ages: a
/// Barzilai-Borwein step, then an exact search along the projected
/// direction. Stops once the projected-gradient residual, taken with a step
/// that moves the steepest age by `1 + b_bar`, is below `tol (1 + b_bar)`.
pub fn numeric_oracle_allocation<T: Real>(
    params: &ChannelParams<T>,
    horizon: usize,
    tol: T,
) -> Result<AllocationSolution<T>> {
    if !(tol > T::zero()) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    if horizon == 0 {
        return Err(Error::domain("horizon must be positive"));
    }
    if params.b_bar() == T::zero() {
        return Ok(AllocationSolution::empty());
    }
    let two_ln2 = T::lit(2.0) * T::LN_2();
    let budget = params.b_bar();
    let weights: Vec<T> = (1..=horizon).map(|i| params.age_weight(i)).collect();
    let value = |x: &[T]| -> T {
        weights.iter().zip(x).fold(T::zero(), |acc, (&w, &e)| acc + w * e.ln_1p()) / two_ln2
    };
    let gradient =
        |x: &[T]| -> Vec<T> { x.iter().zip(&weights).map(|(&e, &w)| w / (two_ln2 * (T::one() + e))).collect() };
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |acc, (&u, &v)| acc + u * v);
    // Iterates stay on the face `Σ x = b_bar`, so directions sum to zero up to
    // rounding; removing the mean gradient over the moving ages keeps that
    // rounding out of the slope.
    let slope = |g: &[T], d: &[T]| {
        let (total, count) = g
            .iter()
            .zip(d)
            .filter(|(_, &v)| v != T::zero())
            .fold((T::zero(), 0usize), |(acc, n), (&u, _)| (acc + u, n + 1));
        let mean = if count == 0 { T::zero() } else { total / T::from_count(count) };
        g.iter().zip(d).fold(T::zero(), |acc, (&u, &v)| acc + (u - mean) * v)
    };
    let projected = |x: &[T], g: &[T], alpha: T| -> Vec<T> {
        let mut y: Vec<T> = x.iter().zip(g).map(|(&e, &d)| e + alpha * d).collect();
        project_capped_simplex(&mut y, budget);
        y
    };

    let mut x = vec![budget / T::from_count(horizon); horizon];
    let mut g = gradient(&x);
    let mut current = value(&x);
    // Reference step moving the steepest coordinate by one budget unit.
    let reference = (T::one() + budget) / g.iter().fold(T::zero(), |acc, &d| acc.max(d));
    let threshold = tol * (T::one() + budget);
    let mut alpha = reference;
    let (alpha_min, alpha_max) = (reference * T::lit(1e-6), reference * T::lit(1e6));
    let mut converged = false;
    for _ in 0..ORACLE_MAX_ITERATIONS {
        let residual = projected(&x, &g, reference)
            .iter()
            .zip(&x)
            .fold(T::zero(), |acc, (&y, &e)| acc.max((y - e).abs()));
        if residual < threshold {
            converged = true;
            break;
        }
        let mut direction: Vec<T> = projected(&x, &g, alpha).iter().zip(&x).map(|(&y, &e)| y - e).collect();
        if !(slope(&g, &direction) > T::zero()) {
            direction = projected(&x, &g, reference).iter().zip(&x).map(|(&y, &e)| y - e).collect();
            if !(slope(&g, &direction) > T::zero()) {
                break;
            }
        }
        // Exact line search on the segment: the directional derivative is
        // decreasing along it, so bisect for its sign change.
        let point = |t: T| -> Vec<T> { x.iter().zip(&direction).map(|(&e, &d)| (e + t * d).max(T::zero())).collect() };
        let derivative = |t: T| slope(&gradient(&point(t)), &direction);
        let mut t = T::one();
        if derivative(t) < T::zero() {
            let (mut lo, mut hi) = (T::zero(), T::one());
            for _ in 0..LINE_SEARCH_BISECTIONS {
                let mid = (lo + hi) / T::lit(2.0);
                if derivative(mid) >= T::zero() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            t = lo;
        }
        if t == T::zero() {
            break;
        }
        let next = point(t);
        let v = value(&next);
        let next_g = gradient(&next);
        let s: Vec<T> = next.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = next_g.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let curvature = -dot(&s, &y);
        alpha = if curvature > T::zero() { (dot(&s, &s) / curvature).max(alpha_min).min(alpha_max) } else { reference };
        x = next;
        g = next_g;
        current = v;
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: ORACLE_MAX_ITERATIONS,
            detail: "projected-gradient residual still above tolerance".into(),
        });
    }

    let n_tilde = x.iter().rposition(|&e| e > T::zero()).map_or(0, |k| k + 1);
    x.truncate(n_tilde);
    let active = T::from_count(n_tilde.max(1));
    let lambda_tilde = x
        .iter()
        .zip(&weights)
        .fold(T::zero(), |acc, (&e, &w)| acc + w / (T::lit(2.0) * (T::one() + e)))
        / active;
    Ok(AllocationSolution { eps: x, n_tilde, lambda_tilde, value_bits: Bits(current) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, b: f64) -> ChannelParams<f64> {
        ChannelParams::new(p, b).unwrap()
    }

    /// Scan the threshold inequality with independent arithmetic.
    fn brute_n_tilde(p: f64, b: f64) -> usize {
        (1..).find(|&n| (1.0 - p).powi(n as i32) * (1.0 + p * (b + n as f64)) < 1.0).unwrap()
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(find_n_tilde(&params(1.0, 5.0)).unwrap(), 1);
        assert_eq!(find_n_tilde(&params(1.0, 0.0)).unwrap(), 1);
        assert_eq!(brute_n_tilde(0.5, 2.0), 2);
        assert_eq!(find_n_tilde(&params(0.5, 2.0)).unwrap(), 2);
        let brute = brute_n_tilde(0.01, 100.0);
        assert_eq!(find_n_tilde(&params(0.01, 100.0)).unwrap(), brute);
        assert_eq!(brute, 114);
    }

    #[test]
    fn threshold_matches_scan_on_grid() {
        for &p in &[0.01, 0.05, 0.1, 0.3, 0.5, 0.9] {
            for &b in &[0.1, 1.0, 10.0, 100.0, 1000.0] {
                let n = find_n_tilde(&params(p, b)).unwrap();
                assert_eq!(n, brute_n_tilde(p, b), "p={p} b={b}");
                assert!(threshold_holds(&params(p, b), n));
                if n >= 2 {
                    assert!(!threshold_holds(&params(p, b), n - 1));
                }
            }
        }
    }

    #[test]
    fn hand_checked_point() {
        let sol = optimal_allocation(&params(0.5, 2.0)).unwrap();
        assert_eq!(sol.n_tilde, 2);
        assert!((sol.eps[0] - 5.0 / 3.0).abs() < 1e-14);
        assert!((sol.eps[1] - 1.0 / 3.0).abs() < 1e-14);
        // 0.5·½log₂(8/3) + 0.25·½log₂(4/3)
        let expected = 0.25 * (8.0f64 / 3.0).log2() + 0.125 * (4.0f64 / 3.0).log2();
        assert!((sol.value_bits.value() - expected).abs() < 1e-15);
        assert!((sol.value_bits.value() - 0.4056).abs() < 5e-5);
        assert!((sol.lambda_tilde - 0.75 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_recharge_spends_everything() {
        let sol = optimal_allocation(&params(1.0, 3.0)).unwrap();
        assert_eq!(sol.n_tilde, 1);
        assert!((sol.eps[0] - 3.0).abs() < 1e-14);
        assert!((sol.value_bits.value() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_battery_is_degenerate() {
        let sol = optimal_allocation(&params(0.3, 0.0)).unwrap();
        assert!(sol.is_degenerate());
        assert_eq!(sol.value_bits.value(), 0.0);
        let o = numeric_oracle_allocation(&params(0.3, 0.0), 20, 1e-12).unwrap();
        assert!(o.is_degenerate());
        assert_eq!(o.value_bits.value(), 0.0);
    }

    #[test]
    fn closed_form_agrees_with_summation() {
        for &(p, b) in &[(0.5, 2.0), (0.99, 1.0), (0.01, 100.0), (0.1, 10.0), (0.3, 0.0)] {
            let cf = closed_form_value(&params(p, b)).unwrap().value();
            let sum = optimal_allocation(&params(p, b)).unwrap().value_bits.value();
            let scale = sum.abs().max(1e-300);
            assert!((cf - sum).abs() <= 1e-10 * scale.max(1e-10), "p={p} b={b}: {cf} vs {sum}");
        }
        assert!(matches!(closed_form_value(&params(1.0, 1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn allocation_invariants() {
        for &p in &[0.01, 0.05, 0.1, 0.3, 0.5, 0.9, 1.0] {
            for &b in &[0.1, 1.0, 10.0, 100.0, 1000.0] {
                let sol = optimal_allocation(&params(p, b)).unwrap();
                assert_eq!(sol.eps.len(), sol.n_tilde);
                let pr = params(p, b);
                let (last, head) = sol.eps.split_last().unwrap();
                assert!(head.iter().all(|&e| e > 0.0), "p={p} b={b}");
                if *last <= 1e-12 {
                    // Only a tie in the threshold inequality at Ñ - 1 may zero the last slot.
                    let n = sol.n_tilde as i32;
                    let tie = (1.0 - p).powi(n - 1) * (1.0 + p * (b + (n - 1) as f64));
                    assert!((tie - 1.0).abs() < 1e-12, "p={p} b={b}");
                }
                assert!(sol.eps.windows(2).all(|w| w[0] > w[1]));
                assert!((sol.total_energy() - b).abs() <= 1e-10 * b);
                // Stationarity: w_i / (2(1+ε_i)) = λ̃ on the support; the
                // unconstrained solution past Ñ would be negative.
                for (i, &e) in sol.eps.iter().enumerate() {
                    let lhs = pr.age_weight(i + 1) / (2.0 * (1.0 + e));
                    assert!((lhs - sol.lambda_tilde).abs() <= 1e-10 * sol.lambda_tilde);
                }
                assert!(pr.age_weight(sol.n_tilde + 1) < 2.0 * sol.lambda_tilde);
            }
        }
    }

    #[test]
    fn oracle_matches_hand_point() {
        let pr = params(0.5, 2.0);
        let o = numeric_oracle_allocation(&pr, 50, 1e-12).unwrap();
        assert!((o.energy_at(1) - 5.0 / 3.0).abs() < 1e-6);
        assert!((o.energy_at(2) - 1.0 / 3.0).abs() < 1e-6);
        assert!(o.padded(50)[2..].iter().all(|&e| e.abs() < 1e-9));
    }

    #[test]
    fn oracle_deterministic_recharge() {
        let o = numeric_oracle_allocation(&params(1.0, 3.0), 20, 1e-12).unwrap();
        assert!((o.energy_at(1) - 3.0).abs() < 1e-9);
        assert!(o.padded(20)[1..].iter().all(|&e| e.abs() < 1e-9));
    }

    #[test]
    fn capped_simplex_projection() {
        let mut v = vec![0.5, -1.0, 0.2];
        project_capped_simplex(&mut v, 1.0);
        assert_eq!(v, vec![0.5, 0.0, 0.2]);
        let mut v: Vec<f64> = vec![2.0, 1.0, -3.0];
        project_capped_simplex(&mut v, 1.0);
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1] == 0.0 && v[2] == 0.0);
        let mut v: Vec<f64> = vec![1.0, 1.0];
        project_capped_simplex(&mut v, 1.0);
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_parameters() {
        let bs = [0.1, 1.0, 10.0, 100.0];
        let ps = [0.01, 0.05, 0.1, 0.3, 0.5, 0.9, 1.0];
        for &b in &bs {
            let vals: Vec<f64> =
                ps.iter().map(|&p| optimal_allocation(&params(p, b)).unwrap().value_bits.value()).collect();
            assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-15), "b={b}: {vals:?}");
        }
        for &p in &ps {
            let vals: Vec<f64> =
                bs.iter().map(|&b| optimal_allocation(&params(p, b)).unwrap().value_bits.value()).collect();
            assert!(vals.windows(2).all(|w| w[0] < w[1]), "p={p}: {vals:?}");
        }
    }

    #[test]
    fn single_precision_solution() {
        let pr = ChannelParams::new(0.5f32, 2.0f32).unwrap();
        let sol = optimal_allocation(&pr).unwrap();
        assert_eq!(sol.n_tilde, 2);
        assert!((sol.eps[0] - 5.0 / 3.0).abs() < 1e-5);
        assert!((sol.value_bits.value() - 0.4056).abs() < 1e-4);
    }
}
