//! Capacity bounds for the random battery recharge channel.
//!
//! With causal knowledge of the recharges the capacity lies within
//! `½log₂(πe/2)` bits below the online power-control value `C̄`. With
//! noncausal knowledge the transmitter spreads `B̄/k` evenly over an epoch of
//! length `k`, which gives a series upper bound; a matching lower bound
//! replaces each Gaussian term with the amplitude-constrained capacity.
//! Lower bounds are returned unclamped.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::model::{Bits, ChannelParams};
use crate::power_control::{find_n_tilde, optimal_allocation};
use crate::scalar::{gap_constant, half_log2_1p, Real};
use crate::smith::SmithSolver;

/// Default truncation tolerance of the epoch-length series, in bits.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default bracket width for each amplitude-constrained capacity, in bits.
pub const DEFAULT_SMITH_TOL: f64 = 1e-6;

/// Every bound at one `(p, b_bar)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport<T> {
    pub params: ChannelParams<T>,
    pub causal_upper: Bits<T>,
    pub causal_lower: Bits<T>,
    pub noncausal_upper: Bits<T>,
    pub noncausal_lower_analytic: Bits<T>,
    pub noncausal_lower_smith: Bits<T>,
    pub infinite_battery_upper: Bits<T>,
    pub n_tilde: usize,
}

pub fn causal_upper<T: Real>(params: &ChannelParams<T>) -> Result<Bits<T>> {
    Ok(optimal_allocation(params)?.value_bits)
}

pub fn causal_lower<T: Real>(params: &ChannelParams<T>) -> Result<Bits<T>> {
    Ok(causal_upper(params)? - Bits(gap_constant::<T>()))
}

/// `½log₂(1 + p·b_bar)`: the capacity with an unlimited battery.
pub fn infinite_battery_upper<T: Real>(params: &ChannelParams<T>) -> Bits<T> {
    Bits(half_log2_1p(params.p() * params.b_bar()))
}

/// Number of epoch lengths kept so that the dropped tail of either series is
/// below `tol` bits.
///
/// Term `k` is at most `p²(1-p)^(k-1)·b_bar/(2 ln 2)`, so the tail after `K`
/// terms is at most `p(1-p)^K·b_bar/(2 ln 2)`.
pub fn series_length<T: Real>(params: &ChannelParams<T>, tol: T) -> Result<usize> {
    if !(tol > T::zero()) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let p = params.p();
    let scale = p * params.b_bar() / (T::lit(2.0) * T::LN_2());
    let tail = |k: usize| -> T {
        if p >= T::one() {
            return if k == 0 { scale } else { T::zero() };
        }
        scale * (T::from_count(k) * (-p).ln_1p()).exp()
    };
    if tail(0) < tol {
        return Ok(0);
    }
    if p >= T::one() {
        return Ok(1);
    }
    let guess = ((tol / scale).ln() / (-p).ln_1p()).floor().to_usize().unwrap_or(0);
    let mut k = guess.saturating_sub(2);
    while tail(k) >= tol {
        k += 1;
    }
    while k > 0 && tail(k - 1) < tol {
        k -= 1;
    }
    Ok(k)
}

/// Weight `p²(1-p)^(k-1)` of an epoch of length `k` in the per-symbol average.
fn epoch_weight<T: Real>(params: &ChannelParams<T>, k: usize) -> T {
    params.p() * params.age_weight(k)
}

/// `Σ_k p²(1-p)^(k-1)·(k/2)·log₂(1 + b_bar/k)`, truncated within `tol`.
pub fn noncausal_upper<T: Real>(params: &ChannelParams<T>, tol: T) -> Result<Bits<T>> {
    let terms = series_length(params, tol)?;
    let b = params.b_bar();
    let mut sum = T::zero();
    for k in 1..=terms {
        let kk = T::from_count(k);
        sum = sum + epoch_weight(params, k) * kk * half_log2_1p(b / kk);
    }
    Ok(Bits(sum))
}

pub fn noncausal_lower_analytic<T: Real>(params: &ChannelParams<T>, tol: T) -> Result<Bits<T>> {
    Ok(noncausal_upper(params, tol)? - Bits(gap_constant::<T>()))
}

/// Memo of amplitude-constrained capacities shared by a sweep.
///
/// Entries are keyed by the amplitude rounded to `1e-12`, the tolerance and
/// the input grid size. Concurrent callers may both solve the same key; the
/// results are identical, so the second insert is harmless.
#[derive(Debug)]
pub struct SmithCache<T> {
    solver: SmithSolver<T>,
    entries: Mutex<HashMap<(u64, u64, usize), T>>,
    solves: AtomicUsize,
}

impl<T: Real> Default for SmithCache<T> {
    fn default() -> Self {
        Self::new(SmithSolver::default())
    }
}

impl<T: Real> SmithCache<T> {
    pub fn new(solver: SmithSolver<T>) -> Self {
        Self { solver, entries: Mutex::new(HashMap::new()), solves: AtomicUsize::new(0) }
    }

    pub fn solver(&self) -> &SmithSolver<T> {
        &self.solver
    }

    /// Capacity in bits for `amplitude`, solving on a miss.
    pub fn capacity(&self, amplitude: T, tol: T) -> Result<T> {
        let rounded = (amplitude.as_f64() * 1e12).round();
        let key = (rounded as u64, tol.as_f64().to_bits(), self.solver.config.grid_points);
        if let Some(&c) = self.lock().get(&key) {
            return Ok(c);
        }
        let c = self.solver.solve(amplitude, tol)?.capacity_bits.value();
        self.solves.fetch_add(1, Ordering::Relaxed);
        self.lock().insert(key, c);
        Ok(c)
    }

    /// Number of distinct entries.
    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of solver runs so far, including duplicated concurrent ones.
    pub fn solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<(u64, u64, usize), T>> {
        self.entries.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

/// `Σ_k p²(1-p)^(k-1)·k·C_Smith(b_bar/k)` over the same terms as
/// [`noncausal_upper`]. Every term is a lower bound, so the partial sum is
/// one as well.
pub fn noncausal_lower_smith<T: Real>(
    params: &ChannelParams<T>,
    tol: T,
    smith_tol: T,
    cache: &SmithCache<T>,
) -> Result<Bits<T>> {
    if !(smith_tol > T::zero()) {
        return Err(Error::domain(format!("smith tolerance must be positive, got {smith_tol}")));
    }
    let terms = series_length(params, tol)?;
    let b = params.b_bar();
    let mut sum = T::zero();
    for k in 1..=terms {
        let kk = T::from_count(k);
        let c = cache.capacity((b / kk).sqrt(), smith_tol)?;
        sum = sum + epoch_weight(params, k) * kk * c;
    }
    Ok(Bits(sum))
}

pub fn bounds_report<T: Real>(
    params: &ChannelParams<T>,
    tol: T,
    smith_tol: T,
    cache: &SmithCache<T>,
) -> Result<BoundsReport<T>> {
    let causal_upper = causal_upper(params)?;
    let noncausal_upper = noncausal_upper(params, tol)?;
    let gap = Bits(gap_constant::<T>());
    Ok(BoundsReport {
        params: *params,
        causal_upper,
        causal_lower: causal_upper - gap,
        noncausal_upper,
        noncausal_lower_analytic: noncausal_upper - gap,
        noncausal_lower_smith: noncausal_lower_smith(params, tol, smith_tol, cache)?,
        infinite_battery_upper: infinite_battery_upper(params),
        n_tilde: find_n_tilde(params)?,
    })
}

/// Reports for every battery size in `b_bar_grid`, in grid order.
///
/// Points are spread over up to `threads` workers that share `cache`; the
/// output does not depend on the thread count.
pub fn sweep<T: Real>(
    p: T,
    b_bar_grid: &[T],
    tol: T,
    smith_tol: T,
    cache: &SmithCache<T>,
    threads: usize,
) -> Result<Vec<BoundsReport<T>>> {
    if b_bar_grid.is_empty() {
        return Err(Error::domain("battery grid must be nonempty"));
    }
    if b_bar_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("battery grid must be strictly increasing"));
    }
    let params: Vec<ChannelParams<T>> =
        b_bar_grid.iter().map(|&b| ChannelParams::new(p, b)).collect::<Result<_>>()?;

    let threads = threads.clamp(1, params.len());
    if threads == 1 {
        return params.iter().map(|pr| bounds_report(pr, tol, smith_tol, cache)).collect();
    }
    // Larger batteries are slower, so hand out points from the top down.
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<BoundsReport<T>>>>> = params.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let n = next.fetch_add(1, Ordering::Relaxed);
                if n >= params.len() {
                    break;
                }
                let i = params.len() - 1 - n;
                let r = bounds_report(&params[i], tol, smith_tol, cache);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .unwrap_or_else(|e| e.into_inner())
                .unwrap_or_else(|| Err(Error::Internal("sweep worker exited early".into())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, b: f64) -> ChannelParams<f64> {
        ChannelParams::new(p, b).unwrap()
    }

    #[test]
    fn simple_points() {
        assert!((causal_upper(&params(1.0, 1.0)).unwrap().value() - 0.5).abs() < 1e-15);
        assert_eq!(causal_upper(&params(0.3, 0.0)).unwrap().value(), 0.0);
        assert!((infinite_battery_upper(&params(0.1, 10.0)).value() - 0.5).abs() < 1e-15);
        assert!((infinite_battery_upper(&params(1.0, 3.0)).value() - 1.0).abs() < 1e-15);
        assert!((noncausal_upper(&params(1.0, 3.0), 1e-9).unwrap().value() - 1.0).abs() < 1e-15);
        assert_eq!(noncausal_upper(&params(0.2, 0.0), 1e-9).unwrap().value(), 0.0);
        let lower = noncausal_lower_analytic(&params(1.0, 3.0), 1e-9).unwrap().value();
        assert!((lower - (1.0 - gap_constant::<f64>())).abs() < 1e-15);
    }

    #[test]
    fn degenerate_report() {
        let cache = SmithCache::default();
        let r = bounds_report(&params(1.0, 0.0), 1e-9, 1e-6, &cache).unwrap();
        let g = gap_constant::<f64>();
        assert_eq!(r.causal_upper.value(), 0.0);
        assert_eq!(r.noncausal_upper.value(), 0.0);
        assert_eq!(r.noncausal_lower_smith.value(), 0.0);
        assert_eq!(r.infinite_battery_upper.value(), 0.0);
        assert_eq!(r.causal_lower.value(), -g);
        assert_eq!(r.noncausal_lower_analytic.value(), -g);
    }

    #[test]
    fn single_epoch_smith_term() {
        let cache = SmithCache::default();
        let v = noncausal_lower_smith(&params(1.0, 3.0), 1e-9, 1e-6, &cache).unwrap().value();
        let (lo, hi) = crate::smith::analytic_sandwich(3.0).unwrap();
        assert!(v >= lo.value() && v <= hi.value());
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn series_length_is_minimal() {
        for &(p, b, tol) in &[(0.01, 1e6, 1e-9), (0.3, 10.0, 1e-9), (0.5, 2.0, 1e-12), (0.9, 0.1, 1e-6)] {
            let pr = params(p, b);
            let k = series_length(&pr, tol).unwrap();
            let tail = |k: i32| p * (1.0 - p).powi(k) * b / (2.0 * std::f64::consts::LN_2);
            assert!(tail(k as i32) < tol);
            assert!(k == 0 || tail(k as i32 - 1) >= tol);
        }
        assert_eq!(series_length(&params(1.0, 5.0), 1e-9).unwrap(), 1);
        assert_eq!(series_length(&params(0.5, 0.0), 1e-9).unwrap(), 0);
        assert!(series_length(&params(0.5, 1.0), 0.0).is_err());
    }

    #[test]
    fn truncation_is_sound() {
        for &p in &[0.01, 0.1, 0.5] {
            for &b in &[0.1, 10.0, 1000.0] {
                let pr = params(p, b);
                let coarse = noncausal_upper(&pr, 1e-6).unwrap().value();
                let fine = noncausal_upper(&pr, 1e-12).unwrap().value();
                assert!(fine >= coarse && fine - coarse < 1e-6, "p={p} b={b}");
            }
        }
    }

    #[test]
    fn ordering_and_gap() {
        let cache = SmithCache::default();
        let g = gap_constant::<f64>();
        for &p in &[0.05, 0.3, 1.0] {
            for &b in &[0.1, 1.0, 10.0, 100.0] {
                let r = bounds_report(&params(p, b), 1e-9, 1e-6, &cache).unwrap();
                assert!((r.causal_upper.value() - r.causal_lower.value() - g).abs() < 1e-12);
                assert!(r.causal_upper.value() <= r.infinite_battery_upper.value() + 1e-15, "p={p} b={b} {} {}", r.causal_upper, r.infinite_battery_upper);
                assert!(r.causal_upper <= r.noncausal_upper, "p={p} b={b} {:?} {:?}", r.causal_upper, r.noncausal_upper);
                assert!(r.noncausal_lower_analytic <= r.noncausal_lower_smith);
                assert!(r.noncausal_lower_smith <= r.noncausal_upper);
            }
        }
    }

    #[test]
    fn sweep_is_ordered_and_thread_independent() {
        let grid = [0.5, 2.0, 8.0, 32.0];
        let serial = sweep(0.2, &grid, 1e-9, 1e-6, &SmithCache::default(), 1).unwrap();
        let parallel = sweep(0.2, &grid, 1e-9, 1e-6, &SmithCache::default(), 3).unwrap();
        assert_eq!(serial, parallel);
        assert!(serial.windows(2).all(|w| w[0].params.b_bar() < w[1].params.b_bar()));
        assert!(serial.windows(2).all(|w| w[0].causal_upper <= w[1].causal_upper));
        assert!(serial.windows(2).all(|w| w[0].noncausal_lower_smith <= w[1].noncausal_lower_smith));
        assert_eq!(sweep(0.2, &[3.0], 1e-9, 1e-6, &SmithCache::default(), 4).unwrap().len(), 1);
        assert!(sweep(0.2, &[], 1e-9, 1e-6, &SmithCache::default(), 1).is_err());
        assert!(sweep(0.2, &[2.0, 2.0], 1e-9, 1e-6, &SmithCache::default(), 1).is_err());
    }
}
