//! Capacity of the scalar AWGN channel `Y = X + Z`, `Z ~ N(0, 1)`, under a
//! peak amplitude constraint `|X| <= A`.
//!
//! The capacity is computed with Blahut–Arimoto over a fixed symmetric input
//! grid `{-A + 2A j/(m-1)}`. Restricting the inputs can only lose rate, so the
//! reported value is a lower bound on the continuous-input capacity, and the
//! standard bracket `max_x D(x) - I(q)` certifies how far it sits from the
//! best distribution on the grid.
//!
//! Implementation notes:
//! - The optimal input law on a symmetric grid is symmetric, so the iteration
//!   runs on the folded grid `x >= 0` and the folded output axis `y >= 0`.
//! - Output integrals use the trapezoid rule on a uniform grid covering
//!   `[-A - margin, A + margin]`. The step is fixed in noise units because the
//!   kernel width never changes with `A`.
//! - Weights are kept in log space so that no grid point is ever lost to
//!   underflow, and `log q_Y` falls back to log-sum-exp when the mixture
//!   density underflows.
//! - The default method grows an active support: Newton steps on the current
//!   support points, with new grid points entering at local maxima of `D`
//!   through a Frank–Wolfe line search. Plain Blahut–Arimoto needs far more
//!   than 10⁵ iterations to close a 10⁻⁶ bit bracket once the optimal law has
//!   interior mass points, because neighbouring grid points are nearly
//!   indistinguishable through the noise. It is kept as a second method for
//!   cross-checks.
//! - Both methods only accept iterates that do not decrease the mutual
//!   information.

use crate::error::{Error, Result};
use crate::linalg::BandedSym;
use crate::model::Bits;
use crate::scalar::{half_log2_1p, uniform_input_loss, Real};

/// Distance (noise standard deviations) beyond which the Gaussian kernel is
/// dropped from the tables. Its weight there is below `e^-72`; output points
/// that no tabulated kernel reaches fall back to exact log-sum-exp.
const KERNEL_CUTOFF: f64 = 12.0;
/// Support points further apart than this (noise units) are treated as
/// uncoupled in the Newton model.
const CURVATURE_REACH: f64 = 12.0;
/// Bisection steps in the Frank–Wolfe line search; the Newton polish that
/// follows absorbs the remaining error.
const LINE_SEARCH_STEPS: usize = 12;
const MAX_HALVINGS: usize = 60;
/// Step halvings tried before the Newton model is stiffened.
const RIDGE_HALVINGS: usize = 4;
const MAX_RELAXATION: f64 = 1_048_576.0;
/// Multiplicative steps per fallback round in the active-set method.
const REWEIGHT_STEPS: usize = 200;
/// Support points below this weight are dropped from the reported law.
const SUPPORT_WEIGHT_FLOOR: f64 = 1e-9;

/// Discretization and iteration limits for the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmithConfig<T> {
    /// Number of input grid points, odd so that 0 is on the grid.
    pub grid_points: usize,
    /// Trapezoid step on the output axis, in noise standard deviations.
    pub output_step: T,
    /// Output axis extends this far beyond `[-A, A]`.
    pub output_margin: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for SmithConfig<T> {
    fn default() -> Self {
        Self {
            grid_points: 801,
            output_step: T::lit(0.25),
            output_margin: T::lit(8.0),
            max_iterations: 100_000,
        }
    }
}

impl<T: Real> SmithConfig<T> {
    fn validate(&self) -> Result<()> {
        if self.grid_points < 3 || self.grid_points % 2 == 0 {
            return Err(Error::domain(format!(
                "input grid size must be odd and at least 3, got {}",
                self.grid_points
            )));
        }
        if !(self.output_step > T::zero()) || !(self.output_margin > T::zero()) {
            return Err(Error::domain("output quadrature step and margin must be positive"));
        }
        Ok(())
    }

    /// One-line description of the discretization, for output metadata.
    pub fn describe(&self) -> String {
        format!(
            "m={} trapezoid step={} margin={} max_iter={}",
            self.grid_points, self.output_step, self.output_margin, self.max_iterations
        )
    }
}

/// Result of one amplitude-constrained capacity solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SmithSolution<T> {
    pub amplitude: T,
    /// Mutual information achieved on the grid; a lower bound on capacity.
    pub capacity_bits: Bits<T>,
    /// `(location, weight)` pairs with weight above `1e-9`, sorted by
    /// location and renormalized to sum to one.
    pub support: Vec<(T, T)>,
    /// Width of the Blahut–Arimoto bracket.
    pub optimality_gap_bits: T,
    pub iterations: usize,
}

impl<T: Real> SmithSolution<T> {
    /// Upper end of the certified bracket on the grid capacity.
    pub fn certified_upper_bits(&self) -> T {
        self.capacity_bits.value() + self.optimality_gap_bits
    }
}

/// Analytic bracket around the amplitude-constrained capacity for
/// `X² <= energy`: a uniform input on `[-√ε, √ε]` from below, the
/// average-power Gaussian capacity from above.
pub fn analytic_sandwich<T: Real>(energy: T) -> Result<(Bits<T>, Bits<T>)> {
    if energy.is_nan() || energy < T::zero() {
        return Err(Error::domain(format!("energy must be nonnegative, got {energy}")));
    }
    let lower = half_log2_1p(energy / T::lit(3.0)) - uniform_input_loss::<T>();
    let upper = half_log2_1p(energy);
    Ok((Bits(lower), Bits(upper)))
}

/// Trapezoid nodes and weights on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> Quadrature<T> {
    /// Uniform trapezoid rule on `[lo, hi]` with step at most `step`.
    pub fn trapezoid(lo: T, hi: T, step: T) -> Result<Self> {
        if !(hi > lo) || !(step > T::zero()) {
            return Err(Error::domain("trapezoid rule needs lo < hi and a positive step"));
        }
        let intervals = ((hi - lo) / step).ceil().to_usize().unwrap_or(1).max(1);
        let h = (hi - lo) / T::from_count(intervals);
        let nodes: Vec<T> = (0..=intervals).map(|i| lo + h * T::from_count(i)).collect();
        let mut weights = vec![h; intervals + 1];
        weights[0] = h / T::lit(2.0);
        weights[intervals] = h / T::lit(2.0);
        Ok(Self { nodes, weights })
    }

    /// The rule the solver uses for amplitude `amplitude`.
    pub fn for_amplitude(amplitude: T, config: &SmithConfig<T>) -> Result<Self> {
        let half = amplitude + config.output_margin;
        Self::trapezoid(-half, half, config.output_step)
    }
}

#[inline]
fn log_phi<T: Real>(u: T) -> T {
    -(u * u) / T::lit(2.0) - T::lit(0.5) * (T::lit(2.0) * T::PI()).ln()
}

fn log_sum_exp<T: Real>(values: impl Iterator<Item = T> + Clone) -> T {
    let max = values.clone().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).fold(T::zero(), |a, b| a + b).ln()
}

/// Relative entropy (bits) between the channel output law given input `x`
/// and the output mixture induced by `(support, weights)`, evaluated with
/// `quadrature`. Mixture densities are formed in log space.
pub fn information_density<T: Real>(
    support: &[T],
    weights: &[T],
    x: T,
    quadrature: &Quadrature<T>,
) -> Result<T> {
    if support.is_empty() || support.len() != weights.len() {
        return Err(Error::domain("support and weights must be nonempty and of equal length"));
    }
    if weights.iter().any(|&w| w.is_nan() || w < T::zero()) {
        return Err(Error::domain("weights must be nonnegative"));
    }
    let log_w: Vec<T> = weights.iter().map(|&w| w.ln()).collect();
    let mut acc = T::zero();
    for (&y, &h) in quadrature.nodes.iter().zip(&quadrature.weights) {
        let lk = log_phi(y - x);
        let kernel = lk.exp();
        if kernel == T::zero() {
            continue;
        }
        let log_q = log_sum_exp(support.iter().zip(&log_w).map(|(&s, &lw)| lw + log_phi(y - s)));
        if !log_q.is_finite() {
            return Err(Error::Quadrature(format!("output mixture vanished at y = {y}")));
        }
        acc = acc + h * kernel * (lk - log_q);
    }
    Ok(acc / T::LN_2())
}

/// Kernel tables on the folded grids. Row `j` holds
/// `G[j][i] = ½(φ(y_i - x_j) + φ(y_i + x_j))` for `i` in `band[j]`.
struct FoldedKernel<T> {
    x: Vec<T>,
    y: Vec<T>,
    /// Folded trapezoid weights on `y >= 0`.
    y_weight: Vec<T>,
    band: Vec<(usize, usize)>,
    offset: Vec<usize>,
    g: Vec<T>,
    /// `∫ φ(y - x_j) log φ(y - x_j) dy` under the same rule.
    self_term: Vec<T>,
}

impl<T: Real> FoldedKernel<T> {
    fn new(amplitude: T, config: &SmithConfig<T>) -> Self {
        let half_m = (config.grid_points - 1) / 2;
        let x: Vec<T> = (0..=half_m)
            .map(|j| amplitude * T::from_count(j) / T::from_count(half_m))
            .collect();
        let y_max = amplitude + config.output_margin;
        let n = (y_max / config.output_step).ceil().to_usize().unwrap_or(1).max(1);
        let h = y_max / T::from_count(n);
        let y: Vec<T> = (0..=n).map(|i| h * T::from_count(i)).collect();
        let mut y_weight = vec![h + h; n + 1];
        y_weight[0] = h;
        y_weight[n] = h;

        let cut = T::lit(KERNEL_CUTOFF);
        let two = T::lit(2.0);
        let mut band = Vec::with_capacity(x.len());
        let mut offset = Vec::with_capacity(x.len());
        let mut g = Vec::new();
        let mut self_term = Vec::with_capacity(x.len());
        for &xj in &x {
            let lo = ((xj - cut) / h).floor().max(T::zero()).to_usize().unwrap_or(0).min(n);
            let hi = ((xj + cut) / h).ceil().to_usize().unwrap_or(n).min(n);
            band.push((lo, hi));
            offset.push(g.len());
            let mut s = T::zero();
            for i in lo..=hi {
                let (lm, lp) = (log_phi(y[i] - xj), log_phi(y[i] + xj));
                let (pm, pp) = (lm.exp(), lp.exp());
                g.push((pm + pp) / two);
                s = s + y_weight[i] * (pm * lm + pp * lp) / two;
            }
            self_term.push(s);
        }
        Self { x, y, y_weight, band, offset, g, self_term }
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    #[inline]
    fn row(&self, j: usize) -> (usize, &[T]) {
        let (lo, hi) = self.band[j];
        let start = self.offset[j];
        (lo, &self.g[start..start + hi - lo + 1])
    }

    /// `log G[j][i]` without underflow.
    fn log_g(&self, j: usize, i: usize) -> T {
        let (a, b) = (log_phi(self.y[i] - self.x[j]), log_phi(self.y[i] + self.x[j]));
        let m = a.max(b);
        m + ((a - m).exp() + (b - m).exp()).ln() - T::LN_2()
    }

    /// Output log-density on the folded grid for the mixture with folded
    /// weights `w` on grid indices `idx`.
    fn log_mixture(&self, idx: &[usize], w: &[T], out: &mut Output<T>) -> Result<()> {
        let tiny = T::min_positive_value() * T::lit(1e20);
        out.q.iter_mut().for_each(|v| *v = T::zero());
        for (&j, &wj) in idx.iter().zip(w) {
            if wj == T::zero() {
                continue;
            }
            let (lo, row) = self.row(j);
            for (qi, &gji) in out.q[lo..lo + row.len()].iter_mut().zip(row) {
                *qi = *qi + wj * gji;
            }
        }
        let mut sorted: Option<Vec<(T, T, usize)>> = None;
        for i in 0..self.y.len() {
            let qi = out.q[i];
            out.log_q[i] = if qi > tiny {
                out.inv_q[i] = self.y_weight[i] / qi;
                qi.ln()
            } else {
                out.inv_q[i] = T::zero();
                let support = sorted.get_or_insert_with(|| {
                    let mut v: Vec<(T, T, usize)> = idx
                        .iter()
                        .zip(w)
                        .filter(|(_, &wj)| wj > T::zero())
                        .map(|(&j, &wj)| (self.x[j], wj.ln(), j))
                        .collect();
                    v.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite grid"));
                    v
                });
                let v = self.far_log_mixture(support, i);
                if !v.is_finite() {
                    return Err(Error::Quadrature(format!("output mixture vanished at y = {}", self.y[i])));
                }
                v
            };
        }
        Ok(())
    }

    /// `log q_Y(y_i)` by log-sum-exp over the support sorted by location.
    /// Terms are gathered outward from `y_i` and a side stops once even a
    /// unit weight could not lift its terms within `e^-80` of the largest.
    fn far_log_mixture(&self, support: &[(T, T, usize)], i: usize) -> T {
        let y = self.y[i];
        let start = support.partition_point(|&(x, _, _)| x < y);
        let mut terms = Vec::new();
        let mut best = T::neg_infinity();
        let floor = T::lit(80.0);
        let reachable = |x: T, best: T| -((y - x) * (y - x)) / T::lit(2.0) >= best - floor;
        let push = |k: usize, terms: &mut Vec<T>, best: &mut T| {
            let (_, lw, j) = support[k];
            let t = lw + self.log_g(j, i);
            *best = best.max(t);
            terms.push(t);
        };
        for k in start..support.len() {
            if !reachable(support[k].0, best) {
                break;
            }
            push(k, &mut terms, &mut best);
        }
        for k in (0..start).rev() {
            if !reachable(support[k].0, best) {
                break;
            }
            push(k, &mut terms, &mut best);
        }
        log_sum_exp(terms.iter().copied())
    }

    /// Information density `D(x_j)` in nats for the mixture in `out`.
    #[inline]
    fn density(&self, j: usize, out: &Output<T>) -> T {
        let (lo, row) = self.row(j);
        let cross = row
            .iter()
            .zip(&out.log_q[lo..lo + row.len()])
            .zip(&self.y_weight[lo..lo + row.len()])
            .fold(T::zero(), |acc, ((&gji, &lq), &yw)| acc + yw * gji * lq);
        self.self_term[j] - cross
    }

    /// `M[a][b] = ∫ ψ_a ψ_b / q_Y`, the negated Hessian of the mutual
    /// information with respect to the folded weights on `idx` (sorted).
    /// Pairs further apart than `CURVATURE_REACH` are dropped.
    fn curvature(&self, idx: &[usize], out: &Output<T>) -> BandedSym<T> {
        let n = idx.len();
        let reach = T::lit(CURVATURE_REACH);
        let bandwidth = (0..n)
            .map(|a| idx[a..].iter().take_while(|&&j| self.x[j] - self.x[idx[a]] < reach).count() - 1)
            .max()
            .unwrap_or(0);
        let mut m = BandedSym::zeros(n, bandwidth);
        for b in 0..n {
            let (lo_b, row_b) = self.row(idx[b]);
            let hi_b = lo_b + row_b.len();
            for a in b..(b + m.bandwidth() + 1).min(n) {
                let (lo_a, row_a) = self.row(idx[a]);
                let lo = lo_a.max(lo_b);
                let hi = (lo_a + row_a.len()).min(hi_b);
                let mut s = T::zero();
                for i in lo..hi {
                    s = s + row_a[i - lo_a] * row_b[i - lo_b] * out.inv_q[i];
                }
                m.set(a, b, s);
            }
        }
        m
    }
}

struct Output<T> {
    q: Vec<T>,
    log_q: Vec<T>,
    /// Trapezoid weight over `q_Y`, zero where `q_Y` underflowed.
    inv_q: Vec<T>,
}

impl<T: Real> Output<T> {
    fn new(n: usize) -> Self {
        Self { q: vec![T::zero(); n], log_q: vec![T::zero(); n], inv_q: vec![T::zero(); n] }
    }
}

fn normalize_log<T: Real>(log_w: &mut [T]) {
    let z = log_sum_exp(log_w.iter().copied());
    log_w.iter_mut().for_each(|v| *v = *v - z);
}

fn normalize<T: Real>(w: &mut [T]) {
    let z = w.iter().fold(T::zero(), |a, &b| a + b);
    w.iter_mut().for_each(|v| *v = *v / z);
}

/// Iteration used to reach the bracket tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmithMethod {
    /// Fully corrective Frank–Wolfe: Newton steps on the active support,
    /// new points entering at the local maxima of `D`.
    #[default]
    ActiveSet,
    /// Over-relaxed Blahut–Arimoto on the whole grid.
    BlahutArimoto,
}

/// Folded weights on a subset of the grid together with their densities.
struct State<T> {
    idx: Vec<usize>,
    w: Vec<T>,
    mutual_info: T,
}

struct Progress<'a, T> {
    iterations: usize,
    max_iterations: usize,
    observe: &'a mut dyn FnMut(T),
}

impl<T: Real> Progress<'_, T> {
    fn accept(&mut self, mutual_info: T) {
        self.iterations += 1;
        (self.observe)(mutual_info / T::LN_2());
    }

    fn exhausted(&self) -> bool {
        self.iterations >= self.max_iterations
    }
}

/// Mutual information (nats) of a sparse folded mixture; leaves `out`
/// holding its output density.
fn mutual_info_of<T: Real>(kernel: &FoldedKernel<T>, idx: &[usize], w: &[T], out: &mut Output<T>) -> Result<T> {
    kernel.log_mixture(idx, w, out)?;
    Ok(idx.iter().zip(w).fold(T::zero(), |acc, (&j, &wj)| acc + wj * kernel.density(j, out)))
}

/// Newton ascent on the simplex restricted to `state.idx` until the
/// densities on the support agree to within `spread_tol` nats.
fn polish<T: Real>(
    kernel: &FoldedKernel<T>,
    state: &mut State<T>,
    out: &mut Output<T>,
    spread_tol: T,
    progress: &mut Progress<'_, T>,
) -> Result<()> {
    let mut order: Vec<usize> = (0..state.idx.len()).collect();
    order.sort_by_key(|&k| state.idx[k]);
    state.idx = order.iter().map(|&k| state.idx[k]).collect();
    state.w = order.iter().map(|&k| state.w[k]).collect();
    let mut stalls = 0;
    while !progress.exhausted() {
        kernel.log_mixture(&state.idx, &state.w, out)?;
        let d: Vec<T> = state.idx.iter().map(|&j| kernel.density(j, out)).collect();
        let (lo, hi) = d.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
        if state.idx.len() == 1 || hi - lo < spread_tol {
            break;
        }

        let m = kernel.curvature(&state.idx, out);
        let scale = (0..m.n()).map(|i| m.get(i, i)).fold(T::zero(), T::max);
        let mut ridge = scale * T::lit(1e-12);
        let mut accepted = None;
        // Levenberg–Marquardt: a rejected step first stiffens the model,
        // which turns the direction toward the projected gradient, and only
        // the stiffest model falls back to a long halving search.
        while accepted.is_none() && ridge < scale * T::lit(1e6) {
            let mut reg = m.clone();
            reg.add_diagonal(ridge);
            let Some(chol) = reg.cholesky() else {
                ridge = ridge * T::lit(100.0);
                continue;
            };
            let a = chol.solve(&d);
            let b = chol.solve(&vec![T::one(); d.len()]);
            let sum = |v: &[T]| v.iter().fold(T::zero(), |acc, &x| acc + x);
            let nu = sum(&a) / sum(&b);
            let dir: Vec<T> = a.iter().zip(&b).map(|(&ai, &bi)| ai - nu * bi).collect();

            ridge = ridge * T::lit(100.0);
            let halvings = if ridge < scale * T::lit(1e6) { RIDGE_HALVINGS } else { MAX_HALVINGS };
            // Projected arc search: weights pushed below zero leave the
            // support together instead of one per step.
            let mut t = T::one();
            for _ in 0..halvings {
                let mut w: Vec<T> =
                    state.w.iter().zip(&dir).map(|(&wk, &dk)| (wk + t * dk).max(T::zero())).collect();
                normalize(&mut w);
                let mi = mutual_info_of(kernel, &state.idx, &w, out)?;
                if mi > state.mutual_info {
                    accepted = Some((w, mi));
                    break;
                }
                t = t / T::lit(2.0);
            }
        }
        let Some((w, mi)) = accepted else { break };
        let gain = mi - state.mutual_info;
        let keep: Vec<usize> = (0..w.len()).filter(|&k| w[k] > T::zero()).collect();
        state.idx = keep.iter().map(|&k| state.idx[k]).collect();
        state.w = keep.iter().map(|&k| w[k]).collect();
        state.mutual_info = mi;
        progress.accept(mi);
        if gain <= state.mutual_info.abs() * T::epsilon() {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Ok(())
}

/// Frank–Wolfe step from `state` toward the uniform law on `entering`, with
/// an exact line search on the concave one-dimensional objective.
fn enter_points<T: Real>(
    kernel: &FoldedKernel<T>,
    state: &mut State<T>,
    entering: &[usize],
    out: &mut Output<T>,
    progress: &mut Progress<'_, T>,
) -> Result<()> {
    let mut idx = state.idx.clone();
    idx.extend_from_slice(entering);
    let share = T::one() / T::from_count(entering.len());
    let blend = |t: T| -> Vec<T> {
        let mut w: Vec<T> = state.w.iter().map(|&wk| (T::one() - t) * wk).collect();
        w.extend(std::iter::repeat(t * share).take(entering.len()));
        w
    };
    // Directional derivative of the mutual information along the blend.
    let slope = |t: T, out: &mut Output<T>| -> Result<T> {
        let w = blend(t);
        kernel.log_mixture(&idx, &w, out)?;
        let mut s = T::zero();
        for (k, &j) in idx.iter().enumerate() {
            let step = if k >= state.idx.len() { share } else { -state.w[k] };
            s = s + step * kernel.density(j, out);
        }
        Ok(s)
    };
    // Bracket the maximizer by halving from t = 1, then bisect.
    let (mut lo, mut hi) = (T::zero(), T::one());
    if slope(hi, out)? >= T::zero() {
        lo = hi;
    } else {
        for _ in 0..MAX_HALVINGS {
            let t = hi / T::lit(2.0);
            if slope(t, out)? > T::zero() {
                lo = t;
                break;
            }
            hi = t;
        }
        if lo > T::zero() {
            for _ in 0..LINE_SEARCH_STEPS {
                let mid = (lo + hi) / T::lit(2.0);
                if slope(mid, out)? > T::zero() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
    }
    if lo == T::zero() {
        return Ok(());
    }
    let w = blend(lo);
    let mi = mutual_info_of(kernel, &idx, &w, out)?;
    if mi >= state.mutual_info {
        state.idx = idx;
        state.w = w;
        state.mutual_info = mi;
        progress.accept(mi);
    }
    Ok(())
}

/// Over-relaxed Blahut–Arimoto steps `w_j <- w_j exp(r D_j) / Z` on the
/// current support, until the densities there agree to within `spread_tol`
/// or no relaxation improves the mutual information.
fn reweight<T: Real>(
    kernel: &FoldedKernel<T>,
    state: &mut State<T>,
    out: &mut Output<T>,
    spread_tol: T,
    progress: &mut Progress<'_, T>,
) -> Result<()> {
    let mut relax = T::one();
    for _ in 0..REWEIGHT_STEPS {
        if progress.exhausted() {
            break;
        }
        kernel.log_mixture(&state.idx, &state.w, out)?;
        let d: Vec<T> = state.idx.iter().map(|&j| kernel.density(j, out)).collect();
        let (lo, hi) = d.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
        if hi - lo < spread_tol {
            break;
        }
        loop {
            let mut w: Vec<T> =
                state.w.iter().zip(&d).map(|(&wj, &dj)| wj * (relax * (dj - hi)).exp()).collect();
            normalize(&mut w);
            let mi = mutual_info_of(kernel, &state.idx, &w, out)?;
            if mi > state.mutual_info {
                state.w = w;
                state.mutual_info = mi;
                progress.accept(mi);
                relax = (relax + relax).min(T::lit(MAX_RELAXATION));
                break;
            }
            if relax == T::one() {
                return Ok(());
            }
            relax = (relax / T::lit(4.0)).max(T::one());
        }
    }
    Ok(())
}

/// Certificate over the whole grid: every density, the mutual information
/// and the bracket width, all in nats.
fn certify<T: Real>(kernel: &FoldedKernel<T>, state: &State<T>, out: &mut Output<T>) -> Result<(Vec<T>, T)> {
    kernel.log_mixture(&state.idx, &state.w, out)?;
    let d: Vec<T> = (0..kernel.len()).map(|j| kernel.density(j, out)).collect();
    let mi = state.idx.iter().zip(&state.w).fold(T::zero(), |acc, (&j, &wj)| acc + wj * d[j]);
    Ok((d, mi))
}

fn solve_active_set<T: Real>(
    kernel: &FoldedKernel<T>,
    tol_nats: T,
    progress: &mut Progress<'_, T>,
) -> Result<(State<T>, T)> {
    let mut out = Output::new(kernel.y.len());
    let edge = kernel.len() - 1;
    let mut state = State { idx: vec![edge], w: vec![T::one()], mutual_info: T::zero() };
    state.mutual_info = mutual_info_of(kernel, &state.idx, &state.w, &mut out)?;
    (progress.observe)(state.mutual_info / T::LN_2());

    loop {
        polish(kernel, &mut state, &mut out, tol_nats / T::lit(8.0), progress)?;
        let (d, mi) = certify(kernel, &state, &mut out)?;
        let max_d = d.iter().copied().fold(T::neg_infinity(), T::max);
        let gap = max_d - mi;
        if gap < tol_nats {
            return Ok((state, gap));
        }
        if progress.exhausted() {
            return Err(Error::NonConvergence {
                iterations: progress.iterations,
                detail: format!("bracket {} bits above tolerance", gap / T::LN_2()),
            });
        }
        let threshold = mi + gap / T::lit(2.0);
        let entering: Vec<usize> = (0..d.len())
            .filter(|&j| {
                let left = if j == 0 { d[1.min(d.len() - 1)] } else { d[j - 1] };
                let right = if j + 1 < d.len() { d[j + 1] } else { T::neg_infinity() };
                d[j] > threshold && d[j] >= left && d[j] >= right && !state.idx.contains(&j)
            })
            .collect();
        let before = progress.iterations;
        if !entering.is_empty() {
            enter_points(kernel, &mut state, &entering, &mut out, progress)?;
        }
        if progress.iterations == before {
            // Either the maximizer is already on the support or the entering
            // step found no gain; the Newton model has stalled on a nearly
            // flat support, so fall back to multiplicative steps.
            reweight(kernel, &mut state, &mut out, tol_nats / T::lit(8.0), progress)?;
        }
        if progress.iterations == before {
            return Err(Error::NonConvergence {
                iterations: progress.iterations,
                detail: format!("stalled with bracket {} bits", gap / T::LN_2()),
            });
        }
    }
}

fn solve_blahut_arimoto<T: Real>(
    kernel: &FoldedKernel<T>,
    tol_nats: T,
    grid_points: usize,
    progress: &mut Progress<'_, T>,
) -> Result<(State<T>, T)> {
    let mut out = Output::new(kernel.y.len());
    let all: Vec<usize> = (0..kernel.len()).collect();
    let m = T::from_count(grid_points);
    let mut log_w: Vec<T> =
        all.iter().map(|&j| if j == 0 { (T::one() / m).ln() } else { (T::lit(2.0) / m).ln() }).collect();
    normalize_log(&mut log_w);

    let eval = |log_w: &[T], out: &mut Output<T>| -> Result<(Vec<T>, T, T)> {
        let w: Vec<T> = log_w.iter().map(|&v| v.exp()).collect();
        kernel.log_mixture(&all, &w, out)?;
        let d: Vec<T> = all.iter().map(|&j| kernel.density(j, out)).collect();
        let mi = w.iter().zip(&d).fold(T::zero(), |acc, (&wj, &dj)| acc + wj * dj);
        let max_d = d.iter().copied().fold(T::neg_infinity(), T::max);
        Ok((d, mi, max_d))
    };

    let (mut d, mut mi, mut max_d) = eval(&log_w, &mut out)?;
    (progress.observe)(mi / T::LN_2());
    let mut relax = T::one();
    loop {
        if max_d - mi < tol_nats {
            break;
        }
        if progress.exhausted() {
            return Err(Error::NonConvergence {
                iterations: progress.iterations,
                detail: format!("bracket {} bits above tolerance", (max_d - mi) / T::LN_2()),
            });
        }
        let mut next: Vec<T> = log_w.iter().zip(&d).map(|(&lw, &dj)| lw + relax * (dj - max_d)).collect();
        normalize_log(&mut next);
        let (nd, nmi, nmax) = eval(&next, &mut out)?;
        if nmi >= mi {
            log_w = next;
            (d, mi, max_d) = (nd, nmi, nmax);
            progress.accept(mi);
            relax = (relax + relax).min(T::lit(MAX_RELAXATION));
        } else if relax > T::one() {
            relax = (relax / T::lit(4.0)).max(T::one());
        } else if max_d - mi < tol_nats * T::lit(10.0) {
            // A plain step can only lose to rounding.
            break;
        } else {
            return Err(Error::NonConvergence {
                iterations: progress.iterations,
                detail: format!("stalled with bracket {} bits", (max_d - mi) / T::LN_2()),
            });
        }
    }
    let state = State { idx: all.clone(), w: log_w.iter().map(|&v| v.exp()).collect(), mutual_info: mi };
    Ok((state, max_d - mi))
}

/// Amplitude-constrained capacity solver with a fixed discretization.
#[derive(Debug, Clone, Copy)]
pub struct SmithSolver<T> {
    pub config: SmithConfig<T>,
    pub method: SmithMethod,
}

impl<T: Real> Default for SmithSolver<T> {
    fn default() -> Self {
        Self { config: SmithConfig::default(), method: SmithMethod::default() }
    }
}

impl<T: Real> SmithSolver<T> {
    pub fn new(config: SmithConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, method: SmithMethod::default() })
    }

    pub fn with_method(mut self, method: SmithMethod) -> Self {
        self.method = method;
        self
    }

    pub fn describe(&self) -> String {
        let method = match self.method {
            SmithMethod::ActiveSet => "active-set",
            SmithMethod::BlahutArimoto => "blahut-arimoto",
        };
        format!("{method} {}", self.config.describe())
    }

    /// Solves until the bracket is below `tol` bits.
    pub fn solve(&self, amplitude: T, tol: T) -> Result<SmithSolution<T>> {
        self.solve_traced(amplitude, tol, |_| {})
    }

    /// Like [`solve`](Self::solve), calling `observe` with the mutual
    /// information (bits) of the starting point and of every accepted
    /// iterate.
    pub fn solve_traced(&self, amplitude: T, tol: T, mut observe: impl FnMut(T)) -> Result<SmithSolution<T>> {
        self.config.validate()?;
        if !amplitude.is_finite() || amplitude < T::zero() {
            return Err(Error::domain(format!("amplitude must be finite and nonnegative, got {amplitude}")));
        }
        if !(tol > T::zero()) {
            return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
        }
        if amplitude == T::zero() {
            observe(T::zero());
            return Ok(SmithSolution {
                amplitude,
                capacity_bits: Bits(T::zero()),
                support: vec![(T::zero(), T::one())],
                optimality_gap_bits: T::zero(),
                iterations: 0,
            });
        }

        let kernel = FoldedKernel::new(amplitude, &self.config);
        let mut progress =
            Progress { iterations: 0, max_iterations: self.config.max_iterations, observe: &mut observe };
        let tol_nats = tol * T::LN_2();
        let (state, gap) = match self.method {
            SmithMethod::ActiveSet => solve_active_set(&kernel, tol_nats, &mut progress),
            SmithMethod::BlahutArimoto => {
                solve_blahut_arimoto(&kernel, tol_nats, self.config.grid_points, &mut progress)
            }
        }
        .map_err(|e| match e {
            Error::NonConvergence { iterations, detail } => {
                Error::NonConvergence { iterations, detail: format!("amplitude {amplitude}: {detail}") }
            }
            other => other,
        })?;

        Ok(SmithSolution {
            amplitude,
            // The mutual information is a difference of O(1) integrals, so it
            // can overshoot the Gaussian ceiling by rounding at tiny amplitudes.
            capacity_bits: Bits((state.mutual_info / T::LN_2()).max(T::zero()).min(half_log2_1p(amplitude * amplitude))),
            support: unfold_support(&kernel.x, &state.idx, &state.w),
            optimality_gap_bits: (gap / T::LN_2()).max(T::zero()),
            iterations: progress.iterations,
        })
    }
}

fn unfold_support<T: Real>(x: &[T], idx: &[usize], w: &[T]) -> Vec<(T, T)> {
    let floor = T::lit(SUPPORT_WEIGHT_FLOOR);
    let half = T::lit(0.5);
    let mut support = Vec::new();
    for (&j, &wj) in idx.iter().zip(w) {
        if j == 0 {
            if wj > floor {
                support.push((x[0], wj));
            }
        } else if wj * half > floor {
            support.push((-x[j], wj * half));
            support.push((x[j], wj * half));
        }
    }
    support.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite support"));
    let total = support.iter().fold(T::zero(), |acc, &(_, w)| acc + w);
    support.iter_mut().for_each(|(_, w)| *w = *w / total);
    support
}

/// Amplitude-constrained capacity with the default discretization.
pub fn capacity_amplitude_constrained<T: Real>(amplitude: T, tol: T) -> Result<SmithSolution<T>> {
    SmithSolver::default().solve(amplitude, tol)
}
