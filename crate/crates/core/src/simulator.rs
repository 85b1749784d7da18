//! Monte-Carlo simulation of the battery under online power policies.
//!
//! Recharges are drawn from a ChaCha8 stream seeded with the caller's seed,
//! one draw per channel use, so a run is reproducible on every platform.

use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{battery_step, rate, BatteryState, Bits, ChannelParams};
use crate::power_control::optimal_allocation;
use crate::scalar::Real;

/// Fewest channel uses accepted by [`simulate`].
pub const MIN_STEPS: usize = 10_000;
/// Number of batches behind the batch-means standard error.
pub const BATCHES: usize = 100;
/// Fewest completed epochs accepted by [`epoch_statistics`].
pub const MIN_EPOCHS: usize = 100;

/// Decides how much energy to spend in the current slot.
pub trait Policy<T> {
    /// Energy to spend; must not exceed `state.level`.
    fn spend(&self, state: &BatteryState<T>, params: &ChannelParams<T>) -> T;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind<T> {
    /// The KKT allocation: `ε_age` for `age <= Ñ`, nothing afterwards.
    Optimal,
    /// Spend the whole battery.
    Greedy,
    /// Spend a fixed fraction of the current level.
    ConstantFraction(T),
    Zero,
}

impl<T: Real> PolicyKind<T> {
    pub fn name(&self) -> String {
        match self {
            PolicyKind::Optimal => "optimal".into(),
            PolicyKind::Greedy => "greedy".into(),
            PolicyKind::ConstantFraction(f) => format!("constant_fraction({f})"),
            PolicyKind::Zero => "zero".into(),
        }
    }
}

/// One of the built-in policies, bound to a parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerPolicy<T> {
    kind: PolicyKind<T>,
    schedule: Vec<T>,
}

impl<T: Real> PowerPolicy<T> {
    pub fn kind(&self) -> PolicyKind<T> {
        self.kind
    }
}

impl<T: Real> Policy<T> for PowerPolicy<T> {
    fn spend(&self, state: &BatteryState<T>, _params: &ChannelParams<T>) -> T {
        let wanted = match self.kind {
            PolicyKind::Optimal => self.schedule.get(state.age - 1).copied().unwrap_or(T::zero()),
            PolicyKind::Greedy => state.level,
            PolicyKind::ConstantFraction(f) => f * state.level,
            PolicyKind::Zero => T::zero(),
        };
        // The optimal schedule sums to b_bar only up to rounding.
        wanted.min(state.level)
    }
}

pub fn make_policy<T: Real>(kind: PolicyKind<T>, params: &ChannelParams<T>) -> Result<PowerPolicy<T>> {
    let schedule = match kind {
        PolicyKind::Optimal => optimal_allocation(params)?.eps,
        PolicyKind::ConstantFraction(f) if !(f >= T::zero() && f <= T::one()) => {
            return Err(Error::domain(format!("spending fraction must lie in [0, 1], got {f}")));
        }
        _ => Vec::new(),
    };
    Ok(PowerPolicy { kind, schedule })
}

/// Outcome of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport<T> {
    pub steps: usize,
    pub seed: u64,
    /// Mean of `r(spend_t)` over all channel uses.
    pub empirical_throughput_bits: Bits<T>,
    /// Batch-means standard error over [`BATCHES`] batches.
    pub std_error_bits: T,
    /// Completed epochs, i.e. recharges after the first slot.
    pub epoch_count: usize,
    /// Average length of the completed epochs; zero if none completed.
    pub mean_epoch_length: T,
    /// Steps whose spend exceeded the battery level. A violation aborts the
    /// run, so a returned report always holds zero.
    pub battery_violations: usize,
}

fn recharge_draws(params: &ChannelParams<impl Real>, seed: u64) -> Result<impl FnMut() -> bool> {
    let coin = Bernoulli::new(params.p().as_f64()).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(move || coin.sample(&mut rng))
}

/// Runs `policy` for `steps` channel uses starting from a full battery.
pub fn simulate<T: Real, P: Policy<T> + ?Sized>(
    params: &ChannelParams<T>,
    policy: &P,
    steps: usize,
    seed: u64,
) -> Result<SimReport<T>> {
    if steps < MIN_STEPS {
        return Err(Error::domain(format!("need at least {MIN_STEPS} steps, got {steps}")));
    }
    let mut recharge = recharge_draws(params, seed)?;
    let mut state = BatteryState::full(params);
    let mut batch_sums = vec![0.0f64; BATCHES];
    let mut total = 0.0f64;
    let mut epochs = 0usize;
    let mut epoch_len_total = 0usize;

    for t in 0..steps {
        let next_recharge = recharge();
        let spend = policy.spend(&state, params);
        let r = rate(spend)?.value().as_f64();
        total += r;
        batch_sums[t * BATCHES / steps] += r;
        let age = state.age;
        state = battery_step(state, spend, next_recharge, params).map_err(|e| match e {
            Error::EnergyViolation { spent, level } => Error::Internal(format!(
                "policy spent {spent} with only {level} stored at step {t} (age {age})"
            )),
            other => other,
        })?;
        if next_recharge {
            epochs += 1;
            epoch_len_total += age;
        }
    }

    let batch_means: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let len = (b + 1) * steps / BATCHES - b * steps / BATCHES;
            batch_sums[b] / len as f64
        })
        .collect();
    let grand = batch_means.iter().sum::<f64>() / BATCHES as f64;
    let var = batch_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(SimReport {
        steps,
        seed,
        empirical_throughput_bits: Bits(T::lit(total / steps as f64)),
        std_error_bits: T::lit((var / BATCHES as f64).sqrt()),
        epoch_count: epochs,
        mean_epoch_length: if epochs == 0 { T::zero() } else { T::lit(epoch_len_total as f64 / epochs as f64) },
        battery_violations: 0,
    })
}

/// Empirical epoch-length distribution of the recharge process.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStatistics {
    pub epochs: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Chi-square goodness of fit against geometric(p) on `{1, 2, ...}`.
    pub chi_square_pvalue: f64,
    pub degrees_of_freedom: usize,
}

/// Epoch lengths completed in `steps` slots of the recharge process driven
/// by the same random stream as [`simulate`].
pub fn epoch_lengths<T: Real>(params: &ChannelParams<T>, steps: usize, seed: u64) -> Result<Vec<usize>> {
    let mut recharge = recharge_draws(params, seed)?;
    let mut lengths = Vec::new();
    let mut age = 1usize;
    for _ in 0..steps {
        if recharge() {
            lengths.push(age);
            age = 1;
        } else {
            age += 1;
        }
    }
    Ok(lengths)
}

pub fn epoch_statistics<T: Real>(params: &ChannelParams<T>, steps: usize, seed: u64) -> Result<EpochStatistics> {
    let lengths = epoch_lengths(params, steps, seed)?;
    let n = lengths.len();
    if n < MIN_EPOCHS {
        return Err(Error::InsufficientEpochs { observed: n, required: MIN_EPOCHS });
    }
    let mean = lengths.iter().sum::<usize>() as f64 / n as f64;
    let variance = lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let (chi_square_pvalue, degrees_of_freedom) = geometric_fit(&lengths, params.p().as_f64());
    Ok(EpochStatistics { epochs: n, mean, variance, chi_square_pvalue, degrees_of_freedom })
}

/// Pearson test with bins `1, ..., K` and the tail `{> K}` pooled, `K` being
/// the largest length whose own bin and tail both expect at least 5 counts.
fn geometric_fit(lengths: &[usize], p: f64) -> (f64, usize) {
    let n = lengths.len() as f64;
    let q = 1.0 - p;
    let prob = |k: usize| p * q.powi(k as i32 - 1);
    let tail = |k: usize| q.powi(k as i32);
    let mut bins = 0usize;
    while n * prob(bins + 1) >= 5.0 && n * tail(bins + 1) >= 5.0 {
        bins += 1;
    }
    if bins == 0 {
        return (1.0, 0);
    }
    let mut observed = vec![0usize; bins + 1];
    for &l in lengths {
        observed[(l - 1).min(bins)] += 1;
    }
    let mut stat = 0.0;
    for (k, &o) in observed.iter().enumerate() {
        let e = n * if k < bins { prob(k + 1) } else { tail(bins) };
        stat += (o as f64 - e).powi(2) / e;
    }
    let df = bins;
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    (dist.sf(stat), df)
}
