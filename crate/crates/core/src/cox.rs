//! Cox partial-likelihood machinery shared by all linear-predictor learners:
//! likelihood, gradient, per-observation residuals, Newton fitting for
//! low-dimensional blocks, and the baseline / marginal hazard estimators.
//!
//! Ties are handled with the Breslow convention throughout: tied event times
//! share one risk set `R_i = {l : t_l >= t_i}`.

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::dataset::{standardize, FeatureGroupMap, SurvivalOutcome};
use crate::error::FitError;
use crate::stepfn::StepFunction;

/// Newton iterations abort once any coefficient magnitude exceeds this cap;
/// a deterministic stand-in for monotone-likelihood divergence.
pub const NEWTON_COEF_CAP: f64 = 50.0;
const NEWTON_MAX_ITER: usize = 50;
const NEWTON_REL_TOL: f64 = 1e-9;

/// A fitted linear-predictor survival model: coefficients on the original
/// feature scale plus the Breslow cumulative baseline hazard.
#[derive(Debug, Clone)]
pub struct LinearSurvivalModel {
    pub coefficients: Vec<f64>,
    pub baseline_cumhaz: StepFunction,
    pub feature_groups: Option<FeatureGroupMap>,
    pub training_meta: TrainingMeta,
}

/// Fitted-hyperparameter record carried by every linear model.
#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainingMeta {
    pub method: String,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub m_stop: Option<usize>,
    pub boost_penalty: Option<f64>,
    pub newton_iterations: Option<usize>,
}

impl LinearSurvivalModel {
    pub fn linear_predictor(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let p = self.coefficients.len();
        assert_eq!(x.ncols(), p, "feature width mismatch");
        (0..x.nrows())
            .map(|i| (0..p).map(|j| x[[i, j]] * self.coefficients[j]).sum())
            .collect()
    }

    pub fn selected_count(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }
}

/// Survival probabilities `S(t|x) = exp(-L0(t) * exp(x'beta))` at the given
/// times. Values lie in `[0, 1]` and are non-increasing in `t`.
pub fn predict_survival(model: &LinearSurvivalModel, x_new: &[f64], times: &[f64]) -> Vec<f64> {
    assert_eq!(x_new.len(), model.coefficients.len());
    let eta: f64 = x_new
        .iter()
        .zip(&model.coefficients)
        .map(|(x, b)| x * b)
        .sum();
    let risk = eta.exp();
    times
        .iter()
        .map(|&t| (-model.baseline_cumhaz.eval(t) * risk).exp())
        .collect()
}

/// Observation order and tie blocks shared by every likelihood sweep.
/// Built once per dataset ordering and reused across learners.
#[derive(Debug, Clone)]
pub struct RiskOrder {
    /// observation indices sorted by ascending time (stable in input order)
    asc: Vec<usize>,
    /// half-open ranges of `asc` sharing one time, with the indices of the
    /// deaths in that block
    blocks: Vec<TieBlock>,
}

#[derive(Debug, Clone)]
struct TieBlock {
    start: usize,
    end: usize,
    time: f64,
    deaths: Vec<usize>,
}

impl RiskOrder {
    pub fn new(outcomes: &[SurvivalOutcome]) -> Self {
        let mut asc: Vec<usize> = (0..outcomes.len()).collect();
        asc.sort_by(|&a, &b| outcomes[a].time.partial_cmp(&outcomes[b].time).unwrap());
        let mut blocks = Vec::new();
        let mut start = 0;
        while start < asc.len() {
            let t = outcomes[asc[start]].time;
            let mut end = start + 1;
            while end < asc.len() && outcomes[asc[end]].time == t {
                end += 1;
            }
            let deaths: Vec<usize> = asc[start..end]
                .iter()
                .copied()
                .filter(|&i| outcomes[i].event)
                .collect();
            blocks.push(TieBlock {
                start,
                end,
                time: t,
                deaths,
            });
            start = end;
        }
        Self { asc, blocks }
    }

    pub fn n(&self) -> usize {
        self.asc.len()
    }

    /// Distinct event times in ascending order with their death counts.
    pub fn event_times(&self) -> Vec<(f64, usize)> {
        self.blocks
            .iter()
            .filter(|b| !b.deaths.is_empty())
            .map(|b| (b.time, b.deaths.len()))
            .collect()
    }

    fn check_finite(eta: &[f64]) -> Result<(), FitError> {
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(FitError::Numerical(
                "non-finite linear predictor".to_string(),
            ));
        }
        Ok(())
    }

    /// Risk-set denominators `s0(u) = sum_{l in R_u} exp(eta_l - shift)` for
    /// every event block, returned newest-to-oldest-safe as (block index,
    /// s0). `shift` is `max(eta)`.
    fn event_denominators(&self, eta: &[f64]) -> (f64, Vec<(usize, f64)>) {
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denoms = Vec::new();
        let mut s0 = 0.0;
        for (bi, block) in self.blocks.iter().enumerate().rev() {
            for &i in &self.asc[block.start..block.end] {
                s0 += (eta[i] - shift).exp();
            }
            if !block.deaths.is_empty() {
                denoms.push((bi, s0));
            }
        }
        denoms.reverse(); // ascending time
        (shift, denoms)
    }

    /// Negative partial log-likelihood of the linear predictor `eta`
    /// (Breslow ties, log-sum-exp-stable accumulation).
    pub fn npl(&self, eta: &[f64]) -> Result<f64, FitError> {
        Self::check_finite(eta)?;
        let (shift, denoms) = self.event_denominators(eta);
        let mut total = 0.0;
        for &(bi, s0) in &denoms {
            let block = &self.blocks[bi];
            let log_s0 = shift + s0.ln();
            for &i in &block.deaths {
                total += log_s0 - eta[i];
            }
        }
        if !total.is_finite() {
            return Err(FitError::Numerical(
                "non-finite partial likelihood".to_string(),
            ));
        }
        Ok(total)
    }

    /// Per-observation negative gradient of the partial likelihood with
    /// respect to `eta` together with the diagonal of its Hessian:
    /// `u_i = delta_i - exp(eta_i) * C1(t_i)` and
    /// `w_i = exp(eta_i) * C1(t_i) - exp(2 eta_i) * C2(t_i)` with
    /// `Ck(t) = sum_{event times u <= t} d_u / s0(u)^k`.
    pub fn residuals_and_weights(&self, eta: &[f64]) -> Result<(Vec<f64>, Vec<f64>), FitError> {
        Self::check_finite(eta)?;
        let (shift, denoms) = self.event_denominators(eta);
        let n = self.asc.len();
        let mut u = vec![0.0; n];
        let mut w = vec![0.0; n];
        // Walk blocks in ascending time, accumulating the cumulative sums.
        let mut c1 = 0.0;
        let mut c2 = 0.0;
        let mut di = 0; // cursor into denoms
        for (bi, block) in self.blocks.iter().enumerate() {
            if di < denoms.len() && denoms[di].0 == bi {
                let s0 = denoms[di].1;
                let d = block.deaths.len() as f64;
                c1 += d / s0;
                c2 += d / (s0 * s0);
                di += 1;
            }
            for &i in &self.asc[block.start..block.end] {
                let e = (eta[i] - shift).exp();
                let delta = if block.deaths.contains(&i) { 1.0 } else { 0.0 };
                u[i] = delta - e * c1;
                w[i] = e * c1 - e * e * c2;
            }
        }
        Ok((u, w))
    }

    /// Analytic gradient of [`npl`](Self::npl) with respect to `beta`,
    /// computed by a direct risk-set sweep over `S1/S0` (independent of the
    /// residual route, which the tests cross-check against it).
    pub fn npl_gradient_x(&self, x: ArrayView2<f64>, eta: &[f64]) -> Result<Vec<f64>, FitError> {
        Self::check_finite(eta)?;
        let p = x.ncols();
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut grad = vec![0.0; p];
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        for block in self.blocks.iter().rev() {
            for &i in &self.asc[block.start..block.end] {
                let e = (eta[i] - shift).exp();
                s0 += e;
                for j in 0..p {
                    s1[j] += e * x[[i, j]];
                }
            }
            if !block.deaths.is_empty() {
                let d = block.deaths.len() as f64;
                for j in 0..p {
                    let mut death_sum = 0.0;
                    for &i in &block.deaths {
                        death_sum += x[[i, j]];
                    }
                    grad[j] -= death_sum - d * s1[j] / s0;
                }
            }
        }
        Ok(grad)
    }

    /// Full `p x p` Hessian of [`npl`](Self::npl) with respect to `beta`.
    /// Intended for small `p`.
    pub fn npl_hessian_x(&self, x: ArrayView2<f64>, eta: &[f64]) -> Result<Array2<f64>, FitError> {
        Self::check_finite(eta)?;
        let p = x.ncols();
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut hess = Array2::<f64>::zeros((p, p));
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = Array2::<f64>::zeros((p, p));
        for block in self.blocks.iter().rev() {
            for &i in &self.asc[block.start..block.end] {
                let e = (eta[i] - shift).exp();
                s0 += e;
                for j in 0..p {
                    let xj = x[[i, j]];
                    s1[j] += e * xj;
                    for l in j..p {
                        s2[[j, l]] += e * xj * x[[i, l]];
                    }
                }
            }
            if !block.deaths.is_empty() {
                let d = block.deaths.len() as f64;
                for j in 0..p {
                    for l in j..p {
                        let v = d * (s2[[j, l]] / s0 - (s1[j] / s0) * (s1[l] / s0));
                        hess[[j, l]] += v;
                        if l != j {
                            hess[[l, j]] += v;
                        }
                    }
                }
            }
        }
        Ok(hess)
    }
}

fn total_eta(
    features: ArrayView2<f64>,
    beta: &[f64],
    offset: &[f64],
) -> Result<Vec<f64>, FitError> {
    let n = features.nrows();
    let p = features.ncols();
    if beta.len() != p || offset.len() != n {
        return Err(FitError::Numerical("dimension mismatch".to_string()));
    }
    Ok((0..n)
        .map(|i| offset[i] + (0..p).map(|j| features[[i, j]] * beta[j]).sum::<f64>())
        .collect())
}

/// Negative partial log-likelihood
/// `-sum_i delta_i [eta_i + x_i'beta - log sum_{l in R_i} exp(eta_l + x_l'beta)]`.
pub fn neg_partial_loglik(
    features: ArrayView2<f64>,
    outcomes: &[SurvivalOutcome],
    beta: &[f64],
    offset: &[f64],
) -> Result<f64, FitError> {
    let order = RiskOrder::new(outcomes);
    order.npl(&total_eta(features, beta, offset)?)
}

/// Exact analytic gradient of [`neg_partial_loglik`] with respect to `beta`.
pub fn npl_gradient(
    features: ArrayView2<f64>,
    outcomes: &[SurvivalOutcome],
    beta: &[f64],
    offset: &[f64],
) -> Result<Vec<f64>, FitError> {
    let order = RiskOrder::new(outcomes);
    order.npl_gradient_x(features, &total_eta(features, beta, offset)?)
}

/// Per-observation negative gradient of the partial likelihood at linear
/// predictor `eta`: `u_i = delta_i - exp(eta_i) * sum_{t_u <= t_i} d_u / S0(u)`.
/// Equals `-d(neg_partial_loglik)/d(eta)`.
pub fn boosting_residuals(
    outcomes: &[SurvivalOutcome],
    eta: &[f64],
) -> Result<Vec<f64>, FitError> {
    let order = RiskOrder::new(outcomes);
    let (u, _) = order.residuals_and_weights(eta)?;
    Ok(u)
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot collapses to (near) zero.
pub(crate) fn solve_dense(a: &Array2<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let p = b.len();
    assert_eq!(a.nrows(), p);
    assert_eq!(a.ncols(), p);
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    for col in 0..p {
        let mut pivot = col;
        for row in col + 1..p {
            if m[[row, col]].abs() > m[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if m[[pivot, col]].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..p {
                let tmp = m[[col, j]];
                m[[col, j]] = m[[pivot, j]];
                m[[pivot, j]] = tmp;
            }
            rhs.swap(col, pivot);
        }
        for row in col + 1..p {
            let factor = m[[row, col]] / m[[col, col]];
            if factor != 0.0 {
                for j in col..p {
                    m[[row, j]] -= factor * m[[col, j]];
                }
                rhs[row] -= factor * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; p];
    for row in (0..p).rev() {
        let mut acc = rhs[row];
        for j in row + 1..p {
            acc -= m[[row, j]] * x[j];
        }
        x[row] = acc / m[[row, row]];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(x)
}

/// Newton-Raphson maximum-partial-likelihood fit with step halving.
///
/// Runs on standardized features (constant columns get coefficient 0),
/// converges when the relative objective change falls below 1e-9, retries a
/// singular Hessian once with a ridge jitter of 1e-8, and reports
/// divergence once any standardized coefficient exceeds [`NEWTON_COEF_CAP`].
pub fn fit_cox_newton(
    features: ArrayView2<f64>,
    outcomes: &[SurvivalOutcome],
) -> Result<LinearSurvivalModel, FitError> {
    fit_cox_newton_offset(features, outcomes, &vec![0.0; outcomes.len()])
}

/// [`fit_cox_newton`] with a fixed per-observation offset.
pub fn fit_cox_newton_offset(
    features: ArrayView2<f64>,
    outcomes: &[SurvivalOutcome],
    offset: &[f64],
) -> Result<LinearSurvivalModel, FitError> {
    let (xs, info) = standardize(&features.to_owned());
    let order = RiskOrder::new(outcomes);
    let p = xs.ncols();
    let n = xs.nrows();
    let mut beta = vec![0.0; p];
    let mut eta = offset.to_vec();
    let mut objective = order.npl(&eta)?;
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..NEWTON_MAX_ITER {
        iterations = iter + 1;
        let grad = order.npl_gradient_x(xs.view(), &eta)?;
        let mut hess = order.npl_hessian_x(xs.view(), &eta)?;
        // Constant columns carry no information; pin them to zero updates.
        for j in 0..p {
            if info.constant[j] {
                hess[[j, j]] = 1.0;
            }
        }
        let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
        let direction = match solve_dense(&hess, &neg_grad) {
            Some(d) => d,
            None => {
                let mut jittered = hess.clone();
                for j in 0..p {
                    jittered[[j, j]] += 1e-8;
                }
                solve_dense(&jittered, &neg_grad).ok_or(FitError::SingularHessian)?
            }
        };
        // Step halving against the objective.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(&direction)
                .map(|(b, d)| b + step * d)
                .collect();
            let cand_eta: Vec<f64> = (0..n)
                .map(|i| offset[i] + (0..p).map(|j| xs[[i, j]] * candidate[j]).sum::<f64>())
                .collect();
            if let Ok(f) = order.npl(&cand_eta) {
                if f <= objective + 1e-12 {
                    if candidate.iter().any(|b| b.abs() > NEWTON_COEF_CAP) {
                        return Err(FitError::CoefficientCap {
                            cap: NEWTON_COEF_CAP,
                        });
                    }
                    let rel_change = (objective - f).abs() / (1.0 + objective.abs());
                    beta = candidate;
                    eta = cand_eta;
                    objective = f;
                    accepted = true;
                    if rel_change < NEWTON_REL_TOL {
                        converged = true;
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // No descent step found: already at a stationary point?
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gmax < 1e-8 {
                converged = true;
            } else {
                return Err(FitError::Numerical(
                    "newton step halving failed".to_string(),
                ));
            }
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(FitError::NonConvergence {
            iterations: NEWTON_MAX_ITER,
        });
    }

    let coefficients = info.restore_coefficients(&beta);
    let baseline = breslow_baseline_offset(features, outcomes, &coefficients, offset);
    Ok(LinearSurvivalModel {
        coefficients,
        baseline_cumhaz: baseline,
        feature_groups: None,
        training_meta: TrainingMeta {
            method: "cox_newton".to_string(),
            newton_iterations: Some(iterations),
            ..TrainingMeta::default()
        },
    })
}

/// Breslow cumulative baseline hazard: jumps of `d_t / sum_{l in R_t}
/// exp(x_l'beta)` at the distinct event times.
pub fn breslow_baseline(
    features: ArrayView2<f64>,
    outcomes: &[SurvivalOutcome],
    beta: &[f64],
) -> StepFunction {
    breslow_baseline_offset(features, outcomes, beta, &vec![0.0; outcomes.len()])
}

pub(crate) fn breslow_baseline_offset(
    features: ArrayView2<f64>,
    outcomes: &[SurvivalOutcome],
    beta: &[f64],
    offset: &[f64],
) -> StepFunction {
    let eta = total_eta(features, beta, offset).expect("dimension mismatch");
    let order = RiskOrder::new(outcomes);
    let (shift, denoms) = order.event_denominators(&eta);
    let mut times = Vec::with_capacity(denoms.len());
    let mut values = Vec::with_capacity(denoms.len());
    let mut cumulative = 0.0;
    for &(bi, s0) in &denoms {
        let block = &order.blocks[bi];
        cumulative += block.deaths.len() as f64 / (s0 * shift.exp());
        times.push(block.time);
        values.push(cumulative);
    }
    StepFunction::new(times, values)
}

/// Nelson-Aalen cumulative hazard `L(t) = sum_{t_l <= t} d_l / n_l`.
pub fn nelson_aalen(outcomes: &[SurvivalOutcome]) -> StepFunction {
    let order = RiskOrder::new(outcomes);
    let mut at_risk = order.n();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut cumulative = 0.0;
    for block in &order.blocks {
        if !block.deaths.is_empty() {
            cumulative += block.deaths.len() as f64 / at_risk as f64;
            times.push(block.time);
            values.push(cumulative);
        }
        at_risk -= block.end - block.start;
    }
    StepFunction::new(times, values)
}

/// Kaplan-Meier survival estimate `S(t) = prod_{t_l <= t} (1 - d_l / n_l)`,
/// equal to 1 before the first event.
pub fn kaplan_meier(outcomes: &[SurvivalOutcome]) -> StepFunction {
    let order = RiskOrder::new(outcomes);
    let mut at_risk = order.n();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut survival = 1.0;
    for block in &order.blocks {
        if !block.deaths.is_empty() {
            survival *= 1.0 - block.deaths.len() as f64 / at_risk as f64;
            times.push(block.time);
            values.push(survival);
        }
        at_risk -= block.end - block.start;
    }
    StepFunction::with_initial(times, values, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn outcomes(spec: &[(f64, u8)]) -> Vec<SurvivalOutcome> {
        spec.iter()
            .map(|&(t, e)| SurvivalOutcome::new(t, e == 1))
            .collect()
    }

    fn random_instance(seed: u64, n: usize, p: usize) -> (Array2<f64>, Vec<SurvivalOutcome>) {
        let mut rng = derive_rng(seed, &[n as u64, p as u64]);
        let x = Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0);
        let outs: Vec<SurvivalOutcome> = (0..n)
            .map(|_| {
                SurvivalOutcome::new(rng.random::<f64>() * 5.0 + 0.1, rng.random::<f64>() < 0.7)
            })
            .collect();
        (x, outs)
    }

    #[test]
    fn npl_at_zero_counts_risk_sets() {
        // times (1,2,3), all events, beta=0: sum of log risk-set sizes.
        let x = array![[0.0], [0.0], [0.0]];
        let outs = outcomes(&[(1.0, 1), (2.0, 1), (3.0, 1)]);
        let val = neg_partial_loglik(x.view(), &outs, &[0.0], &[0.0; 3]).unwrap();
        assert_abs_diff_eq!(val, 3.0_f64.ln() + 2.0_f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(val, 1.791759469228055, epsilon = 1e-6);
    }

    #[test]
    fn npl_two_point_hand_value() {
        // n=2, times (1,2) both events, x=(1,0), beta=1: log(1+e) - 1.
        let x = array![[1.0], [0.0]];
        let outs = outcomes(&[(1.0, 1), (2.0, 1)]);
        let val = neg_partial_loglik(x.view(), &outs, &[1.0], &[0.0; 2]).unwrap();
        assert_abs_diff_eq!(val, (1.0 + std::f64::consts::E).ln() - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(val, 0.313262, epsilon = 1e-6);
    }

    #[test]
    fn constant_offset_cancels() {
        let (x, outs) = random_instance(5, 12, 3);
        let beta = [0.4, -0.2, 0.9];
        let zero = vec![0.0; 12];
        let shifted = vec![3.7; 12];
        let a = neg_partial_loglik(x.view(), &outs, &beta, &zero).unwrap();
        let b = neg_partial_loglik(x.view(), &outs, &beta, &shifted).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        let ga = npl_gradient(x.view(), &outs, &beta, &zero).unwrap();
        let gb = npl_gradient(x.view(), &outs, &beta, &shifted).unwrap();
        for (u, v) in ga.iter().zip(&gb) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..100u64 {
            let (x, outs) = random_instance(seed, 20, 5);
            let mut rng = derive_rng(seed, &[77]);
            let beta: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
            let offset = vec![0.0; 20];
            let grad = npl_gradient(x.view(), &outs, &beta, &offset).unwrap();
            for j in 0..5 {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (neg_partial_loglik(x.view(), &outs, &up, &offset).unwrap()
                    - neg_partial_loglik(x.view(), &outs, &dn, &offset).unwrap())
                    / (2.0 * h);
                let denom = grad[j].abs().max(1e-3);
                assert!(
                    (grad[j] - fd).abs() / denom < 1e-6,
                    "seed {seed} coord {j}: {} vs {}",
                    grad[j],
                    fd
                );
            }
        }
    }

    #[test]
    fn gradient_zero_for_constant_features() {
        let x = array![[2.0], [2.0], [2.0], [2.0]];
        let outs = outcomes(&[(1.0, 1), (2.0, 0), (3.0, 1), (4.0, 1)]);
        let grad = npl_gradient(x.view(), &outs, &[0.7], &[0.0; 4]).unwrap();
        assert_abs_diff_eq!(grad[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_at_zero_is_risk_set_centering() {
        // At beta=0 the gradient is -sum_i delta_i (x_i - mean_{l in R_i} x_l).
        let (x, outs) = random_instance(9, 15, 1);
        let grad = npl_gradient(x.view(), &outs, &[0.0], &[0.0; 15]).unwrap();
        let mut expected = 0.0;
        for i in 0..15 {
            if !outs[i].event {
                continue;
            }
            let risk: Vec<usize> = (0..15).filter(|&l| outs[l].time >= outs[i].time).collect();
            let mean = risk.iter().map(|&l| x[[l, 0]]).sum::<f64>() / risk.len() as f64;
            expected -= x[[i, 0]] - mean;
        }
        assert_abs_diff_eq!(grad[0], expected, epsilon = 1e-10);
    }

    #[test]
    fn residuals_match_offset_finite_differences() {
        let h = 1e-5;
        let (_, outs) = random_instance(21, 15, 1);
        let mut rng = derive_rng(21, &[4]);
        let eta: Vec<f64> = (0..15).map(|_| rng.random::<f64>() - 0.5).collect();
        let u = boosting_residuals(&outs, &eta).unwrap();
        let x0 = Array2::<f64>::zeros((15, 1));
        for i in 0..15 {
            let mut up = eta.clone();
            let mut dn = eta.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (neg_partial_loglik(x0.view(), &outs, &[0.0], &up).unwrap()
                - neg_partial_loglik(x0.view(), &outs, &[0.0], &dn).unwrap())
                / (2.0 * h);
            assert!((u[i] + fd).abs() < 1e-6, "obs {i}: {} vs {}", u[i], -fd);
        }
    }

    #[test]
    fn residual_of_single_event_is_zero() {
        let outs = outcomes(&[(2.0, 1)]);
        let u = boosting_residuals(&outs, &[1.3]).unwrap();
        assert_abs_diff_eq!(u[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn residuals_sum_to_zero_all_events() {
        for n in 2..=6usize {
            let outs: Vec<SurvivalOutcome> =
                (0..n).map(|i| SurvivalOutcome::new((i + 1) as f64, true)).collect();
            let u = boosting_residuals(&outs, &vec![0.0; n]).unwrap();
            assert_abs_diff_eq!(u.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_and_gradient_routes_agree() {
        // X' u(eta) must equal -grad at matching beta (two algebraic routes).
        for seed in 0..20u64 {
            let (x, outs) = random_instance(seed, 18, 4);
            let mut rng = derive_rng(seed, &[13]);
            let beta: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
            let eta: Vec<f64> = (0..18)
                .map(|i| (0..4).map(|j| x[[i, j]] * beta[j]).sum())
                .collect();
            let u = boosting_residuals(&outs, &eta).unwrap();
            let grad = npl_gradient(x.view(), &outs, &beta, &vec![0.0; 18]).unwrap();
            for j in 0..4 {
                let xtu: f64 = (0..18).map(|i| x[[i, j]] * u[i]).sum();
                assert_abs_diff_eq!(xtu, -grad[j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn npl_is_convex_along_midpoints() {
        for seed in 0..25u64 {
            let (x, outs) = random_instance(seed, 14, 3);
            let mut rng = derive_rng(seed, &[29]);
            let b1: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let b2: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let mid: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| (a + b) / 2.0).collect();
            let off = vec![0.0; 14];
            let f1 = neg_partial_loglik(x.view(), &outs, &b1, &off).unwrap();
            let f2 = neg_partial_loglik(x.view(), &outs, &b2, &off).unwrap();
            let fm = neg_partial_loglik(x.view(), &outs, &mid, &off).unwrap();
            assert!(fm <= (f1 + f2) / 2.0 + 1e-10);
        }
    }

    #[test]
    fn newton_reaches_stationary_point() {
        let (x, outs) = random_instance(31, 50, 3);
        let model = fit_cox_newton(x.view(), &outs).unwrap();
        let grad = npl_gradient(x.view(), &outs, &model.coefficients, &vec![0.0; 50]).unwrap();
        for g in grad {
            assert!(g.abs() < 1e-6, "gradient component {g}");
        }
    }

    #[test]
    fn newton_zero_feature_gets_zero_coefficient() {
        let mut rng = derive_rng(33, &[]);
        let x = Array2::from_shape_fn((30, 2), |(_, j)| {
            if j == 0 {
                0.0
            } else {
                rng.random::<f64>() - 0.5
            }
        });
        let outs: Vec<SurvivalOutcome> = (0..30)
            .map(|_| SurvivalOutcome::new(rng.random::<f64>() * 4.0 + 0.1, rng.random::<f64>() < 0.6))
            .collect();
        let model = fit_cox_newton(x.view(), &outs).unwrap();
        assert_eq!(model.coefficients[0], 0.0);
    }

    #[test]
    fn newton_detects_separation() {
        // Every event has larger x than every censored observation and the
        // hazard ordering is monotone: the likelihood is maximized at
        // beta -> infinity, so the fit must fail rather than return.
        let n = 12;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| if i < 6 { 1.0 } else { 0.0 });
        let outs: Vec<SurvivalOutcome> = (0..n)
            .map(|i| {
                if i < 6 {
                    SurvivalOutcome::new(1.0 + i as f64 * 0.1, true)
                } else {
                    SurvivalOutcome::new(10.0 + i as f64, false)
                }
            })
            .collect();
        let result = fit_cox_newton(x.view(), &outs);
        assert!(
            matches!(
                result,
                Err(FitError::CoefficientCap { .. }) | Err(FitError::NonConvergence { .. })
            ),
            "expected divergence failure, got {result:?}"
        );
    }

    #[test]
    fn breslow_reduces_to_nelson_aalen_at_zero() {
        let (x, outs) = random_instance(41, 25, 2);
        let breslow = breslow_baseline(x.view(), &outs, &[0.0, 0.0]);
        let na = nelson_aalen(&outs);
        assert_eq!(breslow.jump_times(), na.jump_times());
        for (a, b) in breslow.values().iter().zip(na.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn breslow_hand_value() {
        let x = Array2::<f64>::zeros((3, 1));
        let outs = outcomes(&[(1.0, 1), (2.0, 0), (3.0, 1)]);
        let bl = breslow_baseline(x.view(), &outs, &[0.0]);
        assert_eq!(bl.jump_times(), &[1.0, 3.0]);
        assert_abs_diff_eq!(bl.values()[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bl.values()[1], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_feature_shift_leaves_survival_invariant() {
        // Shifting beta along a constant feature rescales the baseline but
        // leaves S(t|x) unchanged for training x.
        let mut rng = derive_rng(43, &[]);
        let mut x = Array2::from_shape_fn((5, 2), |_| rng.random::<f64>());
        for i in 0..5 {
            x[[i, 0]] = 1.0; // constant column
        }
        let outs = outcomes(&[(1.0, 1), (2.0, 1), (3.0, 0), (4.0, 1), (5.0, 0)]);
        let beta_a = [0.0, 0.8];
        let beta_b = [1.5, 0.8];
        let base_a = breslow_baseline(x.view(), &outs, &beta_a);
        let base_b = breslow_baseline(x.view(), &outs, &beta_b);
        for i in 0..5 {
            let eta_a: f64 = (0..2).map(|j| x[[i, j]] * beta_a[j]).sum();
            let eta_b: f64 = (0..2).map(|j| x[[i, j]] * beta_b[j]).sum();
            for &t in &[1.0, 2.5, 4.0, 5.0] {
                let sa = (-base_a.eval(t) * eta_a.exp()).exp();
                let sb = (-base_b.eval(t) * eta_b.exp()).exp();
                assert_abs_diff_eq!(sa, sb, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn nelson_aalen_hand_values() {
        let na = nelson_aalen(&outcomes(&[(1.0, 1), (2.0, 0), (3.0, 1)]));
        assert_abs_diff_eq!(na.eval(1.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(na.eval(2.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(na.eval(3.0), 4.0 / 3.0, epsilon = 1e-15);

        // single event among censored
        let na2 = nelson_aalen(&outcomes(&[(1.0, 1), (2.0, 0), (3.0, 0), (4.0, 0)]));
        assert_eq!(na2.jump_times(), &[1.0]);
        assert_abs_diff_eq!(na2.values()[0], 0.25, epsilon = 1e-15);

        // tied events share a risk set
        let na3 = nelson_aalen(&outcomes(&[(1.0, 1), (1.0, 1), (2.0, 1)]));
        assert_abs_diff_eq!(na3.eval(1.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(na3.eval(2.0), 2.0 / 3.0 + 1.0, epsilon = 1e-15);
    }

    #[test]
    fn kaplan_meier_hand_values() {
        let km = kaplan_meier(&outcomes(&[(1.0, 1), (2.0, 0), (3.0, 1)]));
        assert_abs_diff_eq!(km.eval(1.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(km.eval(2.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(km.eval(3.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(km.eval(0.5), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn kaplan_meier_no_events_is_one() {
        let km = kaplan_meier(&outcomes(&[(1.0, 0), (2.0, 0)]));
        assert!(km.is_empty());
        assert_eq!(km.eval(100.0), 1.0);
    }

    #[test]
    fn exp_neg_na_dominates_km() {
        for seed in 0..50u64 {
            let mut rng = derive_rng(seed, &[55]);
            let n = 5 + (seed as usize % 10);
            let outs: Vec<SurvivalOutcome> = (0..n)
                .map(|_| {
                    SurvivalOutcome::new(rng.random::<f64>() * 3.0 + 0.1, rng.random::<f64>() < 0.6)
                })
                .collect();
            if !outs.iter().any(|o| o.event) {
                continue;
            }
            let na = nelson_aalen(&outs);
            let km = kaplan_meier(&outs);
            for &t in na.jump_times() {
                assert!((-na.eval(t)).exp() >= km.eval(t) - 1e-12);
            }
        }
    }

    #[test]
    fn predict_survival_reduces_and_is_monotone() {
        let (x, outs) = random_instance(61, 20, 2);
        let model = LinearSurvivalModel {
            coefficients: vec![0.0, 0.0],
            baseline_cumhaz: nelson_aalen(&outs),
            feature_groups: None,
            training_meta: TrainingMeta::default(),
        };
        let na = nelson_aalen(&outs);
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.06).collect();
        let preds = predict_survival(&model, &[x[[0, 0]], x[[0, 1]]], &times);
        for (i, &t) in times.iter().enumerate() {
            assert_abs_diff_eq!(preds[i], (-na.eval(t)).exp(), epsilon = 1e-12);
        }
        // before the first event time the prediction is exactly 1
        let first = na.jump_times()[0];
        assert_eq!(predict_survival(&model, &[0.3, 0.4], &[first * 0.5])[0], 1.0);

        // monotone over a fine grid for a fitted model
        let fitted = fit_cox_newton(x.view(), &outs).unwrap();
        let preds = predict_survival(&fitted, &[0.2, -0.4], &times);
        for w in preds.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
            assert!((0.0..=1.0).contains(&w[0]));
        }
    }

    #[test]
    fn solve_dense_roundtrip() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let x = solve_dense(&a, &[1.0, 2.0, 3.0]).unwrap();
        let back: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[[i, j]] * x[j]).sum())
            .collect();
        assert_abs_diff_eq!(back[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back[2], 3.0, epsilon = 1e-12);
        assert!(solve_dense(&array![[1.0, 1.0], [1.0, 1.0]], &[1.0, 2.0]).is_none());
    }
}
