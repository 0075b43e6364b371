//! Chain statistics, closed-form Gaussian Wasserstein-2 distance, HPD
//! summaries, the sampler's Lyapunov functional, and the theoretical
//! convergence-bound calculator.
//!
//! The bound calculator evaluates, for each algorithm, the admissible step
//! threshold γ̄, the per-step contraction rate 1 − γm/2, the asymptotic bias
//! constant and the transient constants, from the smoothness profile of the
//! potential and the compression/participation/minibatch configuration.
//! [`w2_bound_curve`] then evaluates the full right-hand side of the matching
//! convergence theorem at any iteration, which is what the acceptance suite
//! compares empirical Wasserstein errors against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PotentialModel;
use crate::oracles::OracleKind;
use crate::vector::ParamVector;

/// Numerically stable single-pass mean/second-moment tracker with exact
/// merging (Welford/Chan updates, per coordinate).
#[derive(Debug, Clone, Default)]
pub struct MomentAccumulator {
    count: u64,
    mean: Vec<f64>,
    sq_dev: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        MomentAccumulator { count: 0, mean: vec![0.0; dim], sq_dev: vec![0.0; dim] }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, value: &ParamVector) {
        debug_assert_eq!(value.dim(), self.mean.len());
        self.count += 1;
        let n = self.count as f64;
        for j in 0..self.mean.len() {
            let delta = value[j] - self.mean[j];
            self.mean[j] += delta / n;
            self.sq_dev[j] += delta * (value[j] - self.mean[j]);
        }
    }

    /// Combine two accumulators; equals accumulating the concatenation.
    pub fn merge(&self, other: &MomentAccumulator) -> MomentAccumulator {
        if self.count == 0 {
            return other.clone();
        }
        if other.count == 0 {
            return self.clone();
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let mut mean = vec![0.0; self.mean.len()];
        let mut sq_dev = vec![0.0; self.mean.len()];
        for j in 0..mean.len() {
            let delta = other.mean[j] - self.mean[j];
            mean[j] = self.mean[j] + delta * nb / n;
            sq_dev[j] = self.sq_dev[j] + other.sq_dev[j] + delta * delta * na * nb / n;
        }
        MomentAccumulator { count: self.count + other.count, mean, sq_dev }
    }

    pub fn mean(&self) -> Result<ParamVector> {
        if self.count == 0 {
            return Err(Error::State("no samples accumulated".into()));
        }
        Ok(ParamVector::new(self.mean.clone()))
    }

    /// Per-coordinate sample variance (n − 1 denominator).
    pub fn variance(&self) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(Error::State("need at least two samples for a variance".into()));
        }
        let denom = (self.count - 1) as f64;
        Ok(self.sq_dev.iter().map(|&s| s / denom).collect())
    }

    /// Per-coordinate standard error of the mean, sqrt(variance / n).
    /// Never grows as more samples of the same population arrive.
    pub fn standard_error(&self) -> Result<Vec<f64>> {
        let n = self.count as f64;
        Ok(self.variance()?.into_iter().map(|v| (v / n).sqrt()).collect())
    }
}

/// Fit a diagonal Gaussian to samples: (mean, per-coordinate variance).
pub fn fit_diagonal_gaussian<'a, I>(samples: I) -> Result<(ParamVector, Vec<f64>)>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    let mut iter = samples.into_iter();
    let first = iter.next().ok_or_else(|| Error::State("no samples".into()))?;
    let mut acc = MomentAccumulator::new(first.dim());
    acc.push(first);
    for s in iter {
        acc.push(s);
    }
    Ok((acc.mean()?, acc.variance()?))
}

/// Squared Wasserstein-2 distance between diagonal Gaussians:
/// ‖m₁ − m₂‖² + Σ_k (√v1_k − √v2_k)².
pub fn gaussian_w2_sq(
    mean1: &ParamVector,
    var1: &[f64],
    mean2: &ParamVector,
    var2: &[f64],
) -> Result<f64> {
    if mean1.dim() != mean2.dim() || var1.len() != mean1.dim() || var2.len() != mean2.dim() {
        return Err(Error::Config("dimension mismatch".into()));
    }
    if var1.iter().chain(var2.iter()).any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("variances must be positive".into()));
    }
    let mut total = mean1.dist_sq(mean2);
    for (a, b) in var1.iter().zip(var2.iter()) {
        let diff = a.sqrt() - b.sqrt();
        total += diff * diff;
    }
    Ok(total)
}

/// Squared error of the chain estimate of E_π ‖θ‖:
/// (mean_k ‖θ_k‖ − reference)².
pub fn mse_test_functional<'a, I>(samples: I, reference: f64) -> Result<f64>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    let mut count = 0u64;
    let mut sum = 0.0;
    for s in samples {
        count += 1;
        sum += s.norm();
    }
    if count == 0 {
        return Err(Error::State("no samples".into()));
    }
    let diff = sum / count as f64 - reference;
    Ok(diff * diff)
}

/// Type-7 quantile (linear interpolation) of raw values at probability q.
pub fn quantile_type7(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::State("no values".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile probability {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return Ok(sorted[sorted.len() - 1]);
    }
    Ok(sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo]))
}

/// Highest-posterior-density threshold estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HpdEstimate {
    /// Empirical (1−α)-quantile of U(θ) = −log unnormalized posterior over
    /// the samples.
    pub eta: f64,
    /// Set when fewer than 1/α samples were available.
    pub low_sample_warning: bool,
}

/// Estimate the HPD threshold η_α: the (1−α)-quantile of the negative log
/// unnormalized posterior over the chain samples. Both a test chain and its
/// reference must be evaluated on the same unnormalized scale for the
/// relative error to make sense.
pub fn hpd_eta<'a, I>(samples: I, model: &PotentialModel, alpha: f64) -> Result<HpdEstimate>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, 1)")));
    }
    let values: Vec<f64> = samples.into_iter().map(|s| model.potential(s)).collect();
    if values.is_empty() {
        return Err(Error::State("no samples".into()));
    }
    let eta = quantile_type7(&values, 1.0 - alpha)?;
    Ok(HpdEstimate { eta, low_sample_warning: (values.len() as f64) < 1.0 / alpha })
}

/// |η − η_ref| / |η_ref|.
pub fn hpd_relative_error(eta: f64, eta_reference: f64) -> f64 {
    (eta - eta_reference).abs() / eta_reference.abs()
}

/// The sampler's Lyapunov functional: ‖θ − θ*‖² plus the memory penalty
/// (3/α) max_i{(ω_i + 1 − p_i)/p_i} γ² Σ_i ‖∇U_i(θ*) − η^{(i)}‖².
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_psi(
    theta: &ParamVector,
    eta: &[ParamVector],
    theta_star: &ParamVector,
    grad_at_star: &[ParamVector],
    gamma: f64,
    alpha: f64,
    omega: &[f64],
    participation: &[f64],
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain("lyapunov functional needs alpha > 0".into()));
    }
    if eta.len() != grad_at_star.len() || omega.len() != eta.len() || participation.len() != eta.len() {
        return Err(Error::Config("per-client argument lengths differ".into()));
    }
    let weight = omega
        .iter()
        .zip(participation.iter())
        .map(|(&w, &p)| (w + 1.0 - p) / p)
        .fold(0.0f64, f64::max);
    let memory_gap: f64 = eta
        .iter()
        .zip(grad_at_star.iter())
        .map(|(e, g)| g.dist_sq(e))
        .sum();
    Ok(theta.dist_sq(theta_star) + (3.0 / alpha) * weight * gamma * gamma * memory_gap)
}

/// Without-replacement minibatch variance factor N(N − n)/(n(N − 1)),
/// with the convention 0 for N = n = 1.
pub fn subset_variance_factor(n_records: usize, n_batch: usize) -> f64 {
    if n_records <= 1 || n_batch >= n_records {
        return 0.0;
    }
    let n = n_records as f64;
    let m = n_batch as f64;
    n * (n - m) / (m * (n - 1.0))
}

/// Exact second-moment summary of the per-client oracles at the minimizer,
/// from the closed-form without-replacement variance identity
/// Var[(N/n) Σ_{j∈S} a_j] = (N−n)/(n(N−1)) [N Σ‖a_j‖² − ‖Σ a_j‖²].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleStarMoments {
    /// E‖Σ_i H_i(θ*)‖² (σ*² witness).
    pub aggregate_second_moment: f64,
    /// b · max_i E‖H_i(θ*)‖² — the per-client-max reading of the bound.
    pub client_bound_max_reading: f64,
    /// Σ_i E‖H_i(θ*)‖² — the sum reading of the bound.
    pub client_bound_sum_reading: f64,
    /// Per-client E‖H_i(θ*)‖².
    pub per_client: Vec<f64>,
}

impl OracleStarMoments {
    /// The larger of the two readings of the per-client bound; the
    /// convergence-bound tests use this conservative value.
    pub fn conservative_client_bound(&self) -> f64 {
        self.client_bound_max_reading.max(self.client_bound_sum_reading)
    }
}

/// Compute σ*² and the per-client second-moment bound exactly for a given
/// oracle family at θ*. `minibatch` is consulted for the stochastic kinds.
pub fn oracle_star_moments(
    model: &PotentialModel,
    theta_star: &ParamVector,
    kind: &OracleKind,
    minibatch: &[usize],
) -> Result<OracleStarMoments> {
    let b = model.num_clients();
    let d = model.dim();
    let mut per_client = Vec::with_capacity(b);
    let mut mean_total = ParamVector::zeros(d);
    let mut variance_total = 0.0;
    for i in 0..b {
        let n_i = model.client_size(i);
        let (mean, variance) = match kind {
            OracleKind::Full => (model.grad_client(i, theta_star)?, 0.0),
            OracleKind::Minibatch | OracleKind::Svrg => {
                // at θ* the SVRG oracle with ζ = θ* coincides with minibatch
                let n_batch = *minibatch
                    .get(i)
                    .ok_or_else(|| Error::Config("missing minibatch size".into()))?;
                let mut sum = ParamVector::zeros(d);
                let mut sum_sq = 0.0;
                for j in 0..n_i {
                    let g = model.grad_component(i, j, theta_star)?;
                    sum_sq += g.norm_sq();
                    sum.add_assign(&g);
                }
                let variance = if n_batch >= n_i || n_i <= 1 {
                    0.0
                } else {
                    let n = n_i as f64;
                    let m = n_batch as f64;
                    (n - m) / (m * (n - 1.0)) * (n * sum_sq - sum.norm_sq())
                };
                (sum, variance)
            }
            OracleKind::Star { theta_star: anchor } => {
                // components are ∇U_{i,j}(θ*) − ∇U_{i,j}(anchor); at the
                // anchor itself both mean and variance vanish identically
                let n_batch = *minibatch
                    .get(i)
                    .ok_or_else(|| Error::Config("missing minibatch size".into()))?;
                let mut sum = ParamVector::zeros(d);
                let mut sum_sq = 0.0;
                for j in 0..n_i {
                    let mut g = model.grad_component(i, j, theta_star)?;
                    g.sub_assign(&model.grad_component(i, j, anchor)?);
                    sum_sq += g.norm_sq();
                    sum.add_assign(&g);
                }
                let variance = if n_batch >= n_i || n_i <= 1 {
                    0.0
                } else {
                    let n = n_i as f64;
                    let m = n_batch as f64;
                    (n - m) / (m * (n - 1.0)) * (n * sum_sq - sum.norm_sq())
                };
                (sum, variance)
            }
        };
        per_client.push(mean.norm_sq() + variance);
        mean_total.add_assign(&mean);
        variance_total += variance;
    }
    let max = per_client.iter().copied().fold(0.0f64, f64::max);
    Ok(OracleStarMoments {
        aggregate_second_moment: mean_total.norm_sq() + variance_total,
        client_bound_max_reading: b as f64 * max,
        client_bound_sum_reading: per_client.iter().sum(),
        per_client,
    })
}

/// Σ_i ‖∇U_i(θ*) − η₀^{(i)}‖², the initial memory gap of the memory
/// variants. A missing η₀ means the all-zero initialisation.
pub fn initial_memory_gap_sq(
    model: &PotentialModel,
    theta_star: &ParamVector,
    eta0: Option<&[ParamVector]>,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..model.num_clients() {
        let grad = model.grad_client(i, theta_star)?;
        total += match eta0 {
            Some(eta) => grad.dist_sq(&eta[i]),
            None => grad.norm_sq(),
        };
    }
    Ok(total)
}

/// Everything the bound calculator needs about a configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Strong convexity m of U.
    pub strong_convexity: f64,
    /// Gradient Lipschitz constant L of U.
    pub lipschitz: f64,
    /// Per-client oracle curvature bounds M_i.
    pub client_curvature: Vec<f64>,
    /// Per-component curvature bound M̄.
    pub component_curvature: f64,
    pub dim: usize,
    /// Per-client compressor variance constants ω_i.
    pub omega: Vec<f64>,
    /// Per-client participation probabilities.
    pub participation: Vec<f64>,
    /// Per-client minibatch sizes n_i.
    pub minibatch: Vec<usize>,
    /// Per-client dataset sizes N_i.
    pub client_sizes: Vec<usize>,
    /// σ*²: second moment of the aggregated oracle at θ*.
    pub aggregate_second_moment: f64,
    /// B*: bound with E‖H_i(θ*)‖² ≤ B*/b.
    pub client_second_moment_bound: f64,
    /// Control-variate refresh period l (memory variant only).
    pub refresh_period: u64,
    /// Optional tighter γ̄ to evaluate the bias constants at.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_bar_override: Option<f64>,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        if !(self.strong_convexity > 0.0) {
            return Err(Error::Domain("strong convexity must be positive".into()));
        }
        if self.lipschitz < self.strong_convexity {
            return Err(Error::Domain("need m <= L".into()));
        }
        let b = self.client_curvature.len();
        if b == 0
            || self.omega.len() != b
            || self.participation.len() != b
            || self.client_sizes.len() != b
        {
            return Err(Error::Config("per-client input lengths differ".into()));
        }
        if self.omega.iter().any(|&w| w < 0.0) {
            return Err(Error::Domain("omega must be nonnegative".into()));
        }
        if self.participation.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Domain("participation must lie in (0, 1]".into()));
        }
        if self.client_curvature.iter().any(|&m| m < 0.0) || self.component_curvature < 0.0 {
            return Err(Error::Domain("curvature bounds must be nonnegative".into()));
        }
        if self.aggregate_second_moment < 0.0 || self.client_second_moment_bound < 0.0 {
            return Err(Error::Domain("second moments must be nonnegative".into()));
        }
        Ok(())
    }

    fn num_clients(&self) -> usize {
        self.client_curvature.len()
    }

    /// Per-client A_{n_i, N_i}.
    fn subset_factors(&self) -> Result<Vec<f64>> {
        if self.minibatch.len() != self.num_clients() {
            return Err(Error::Config("per-client minibatch sizes missing".into()));
        }
        Ok(self
            .client_sizes
            .iter()
            .zip(self.minibatch.iter())
            .map(|(&n, &m)| subset_variance_factor(n, m))
            .collect())
    }

    /// Σ_i (ω_i + 1 − p_i)/p_i and max_i (ω_i + 1 − p_i)/p_i.
    fn participation_weights(&self) -> (f64, f64) {
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for (&w, &p) in self.omega.iter().zip(self.participation.iter()) {
            let weight = (w + 1.0 - p) / p;
            sum += weight;
            max = max.max(weight);
        }
        (sum, max)
    }
}

/// Which convergence theorem a report instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundAlgorithm {
    Qlsd,
    QlsdStar,
    QlsdPp,
}

/// Evaluated theoretical constants for one algorithm/configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub algorithm: BoundAlgorithm,
    /// Largest admissible step size γ̄ (γ̄_α for the memory variant).
    pub gamma_max: f64,
    /// Per-step contraction rate 1 − γ̄ m / 2 at the threshold step size.
    pub contraction: f64,
    /// Asymptotic bias constant: the stationary error floor is γ · bias.
    pub bias: f64,
    /// Transient constant multiplying k γ² (1 − γm/2)^{k−1} ∫‖θ−θ*‖² dμ.
    pub transient: f64,
    /// Per-client A_{n_i, N_i} minibatch variance factors.
    pub subset_variance_factors: Vec<f64>,
    /// Coefficient of ‖θ−θ*‖² in the one-step second-moment recursion
    /// (memory variant only).
    pub grad_variance_rate: f64,
    /// Coefficient of ‖θ−θ*‖² in the memory-gap recursion (memory variant).
    pub memory_drift_rate: f64,
    /// Uniform envelope on the stochastic-gradient variance (memory variant).
    pub variance_envelope: f64,
    /// Strong convexity m, echoed for curve evaluation.
    pub strong_convexity: f64,
    /// Control-variate refresh period l (memory variant).
    pub refresh_period: u64,
    /// Memory step α the report was evaluated at (memory variant).
    pub alpha: f64,
    /// Σ_i (ω_i + 1 − p_i)/p_i.
    pub participation_weight_sum: f64,
    /// max_i (ω_i + 1 − p_i)/p_i.
    pub participation_weight_max: f64,
}

/// γ̄ template shared by the memory-free variants:
/// min(2/[5(m+L)], 1/(m+L+M̃), 1/(10m)).
fn gamma_bar(m: f64, lipschitz: f64, variance_slope: f64) -> f64 {
    let g1 = 2.0 / (5.0 * (m + lipschitz));
    let g2 = 1.0 / (m + lipschitz + variance_slope);
    let g3 = 1.0 / (10.0 * m);
    g1.min(g2).min(g3)
}

/// Bias and transient constants of the generic compressed-Langevin bound for
/// oracle noise E‖ΣF_i − ∇U‖² ≤ M̃⟨θ−θ*, ∇U⟩ + B̃*.
fn generic_constants(m: f64, lipschitz: f64, d: f64, gamma_bar: f64, m_tilde: f64, b_tilde: f64) -> (f64, f64) {
    let discretisation = (2.0 * d * lipschitz * lipschitz / m)
        * (1.0 / m + 5.0 * gamma_bar)
        * (1.0 + gamma_bar * lipschitz * lipschitz / (2.0 * m)
            + gamma_bar * gamma_bar * lipschitz * lipschitz / 12.0);
    let bias = discretisation
        + 2.0 * b_tilde / m
        + 2.0 * lipschitz * m_tilde * (2.0 * d + gamma_bar * b_tilde) / (m * m);
    let transient = lipschitz * m_tilde;
    (bias, transient)
}

fn resolve_gamma_bar(inputs: &BoundInputs, computed: f64) -> Result<f64> {
    match inputs.gamma_bar_override {
        None => Ok(computed),
        Some(requested) => {
            if !(requested > 0.0 && requested <= computed * (1.0 + 1e-12)) {
                return Err(Error::Domain(format!(
                    "requested gamma_bar {requested} exceeds admissible threshold {computed}"
                )));
            }
            Ok(requested.min(computed))
        }
    }
}

/// Constants of the convergence bound for the generic compressed sampler
/// (full-gradient or minibatch oracles).
pub fn bound_qlsd(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    let m = inputs.strong_convexity;
    let lipschitz = inputs.lipschitz;
    let m_tilde = 2.0
        * inputs
            .client_curvature
            .iter()
            .zip(inputs.omega.iter())
            .zip(inputs.participation.iter())
            .map(|((&mi, &wi), &pi)| mi * (1.0 + wi) / pi)
            .fold(0.0f64, f64::max);
    let (weight_sum, weight_max) = inputs.participation_weights();
    let b = inputs.num_clients() as f64;
    let b_tilde = 2.0
        * (inputs.aggregate_second_moment
            + inputs.client_second_moment_bound / b * weight_sum);
    let gamma_max = resolve_gamma_bar(inputs, gamma_bar(m, lipschitz, m_tilde))?;
    let (bias, transient) =
        generic_constants(m, lipschitz, inputs.dim as f64, gamma_max, m_tilde, b_tilde);
    Ok(BoundReport {
        algorithm: BoundAlgorithm::Qlsd,
        gamma_max,
        contraction: 1.0 - gamma_max * m / 2.0,
        bias,
        transient,
        subset_variance_factors: Vec::new(),
        grad_variance_rate: 0.0,
        memory_drift_rate: 0.0,
        variance_envelope: 0.0,
        strong_convexity: m,
        refresh_period: 0,
        alpha: 0.0,
        participation_weight_sum: weight_sum,
        participation_weight_max: weight_max,
    })
}

/// Constants of the convergence bound for the fixed-point variance-reduced
/// sampler. Its oracle noise vanishes at θ*, so the bound carries no
/// heterogeneity term.
pub fn bound_qlsd_star(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    let m = inputs.strong_convexity;
    let lipschitz = inputs.lipschitz;
    let factors = inputs.subset_factors()?;
    let m_tilde = inputs.component_curvature
        * inputs
            .client_sizes
            .iter()
            .zip(inputs.omega.iter())
            .zip(inputs.participation.iter())
            .zip(factors.iter())
            .map(|(((&ni, &wi), &pi), &ai)| {
                let ni = ni as f64;
                wi * ni + (wi + 1.0) * (ni * (1.0 - pi) / pi + ai)
            })
            .fold(0.0f64, f64::max);
    let (weight_sum, weight_max) = inputs.participation_weights();
    let gamma_max = resolve_gamma_bar(inputs, gamma_bar(m, lipschitz, m_tilde))?;
    let (bias, transient) =
        generic_constants(m, lipschitz, inputs.dim as f64, gamma_max, m_tilde, 0.0);
    Ok(BoundReport {
        algorithm: BoundAlgorithm::QlsdStar,
        gamma_max,
        contraction: 1.0 - gamma_max * m / 2.0,
        bias,
        transient,
        subset_variance_factors: factors,
        grad_variance_rate: 0.0,
        memory_drift_rate: 0.0,
        variance_envelope: 0.0,
        strong_convexity: m,
        refresh_period: 0,
        alpha: 0.0,
        participation_weight_sum: weight_sum,
        participation_weight_max: weight_max,
    })
}

/// Constants of the convergence bound for the memory variant at memory step
/// α ∈ (0, 1/(1 + ω_max)].
pub fn bound_qlsd_pp(inputs: &BoundInputs, alpha: f64) -> Result<BoundReport> {
    inputs.validate()?;
    let omega_max = inputs.omega.iter().copied().fold(0.0f64, f64::max);
    let alpha_max = 1.0 / (1.0 + omega_max);
    if !(alpha > 0.0 && alpha <= alpha_max * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!(
            "alpha = {alpha} outside (0, 1/(1+omega_max)] = (0, {alpha_max}]"
        )));
    }
    if inputs.refresh_period == 0 {
        return Err(Error::Config("refresh period must be >= 1".into()));
    }
    let m = inputs.strong_convexity;
    let lipschitz = inputs.lipschitz;
    let m_bar = inputs.component_curvature;
    let factors = inputs.subset_factors()?;
    let b = inputs.num_clients();

    let mut grad_variance_rate = lipschitz * lipschitz;
    let mut memory_drift_rate = 0.0;
    let mut anchored_sum = 0.0; // Σ_i ((ω_i+1)/p_i) A_i M_i
    let mut bias_sum = 0.0; // Σ_i M_i (ω_i+1)(M_i + M̄ A_i)/p_i
    for i in 0..b {
        let mi = inputs.client_curvature[i];
        let wi = inputs.omega[i];
        let pi = inputs.participation[i];
        let ai = factors[i];
        grad_variance_rate +=
            2.0 * (mi * mi / pi * (wi + 1.0 - pi) + (wi + 1.0) / pi * ai * m_bar * mi);
        memory_drift_rate += 2.0 * (ai * m_bar * mi + mi * mi);
        anchored_sum += (wi + 1.0) / pi * ai * mi;
        bias_sum += mi * (wi + 1.0) * (mi + m_bar * ai) / pi;
    }
    let (weight_sum, weight_max) = inputs.participation_weights();
    let variance_envelope = (grad_variance_rate - lipschitz * lipschitz)
        + 2.0 * m_bar * anchored_sum
        + 4.0 * memory_drift_rate * weight_sum;

    let gamma_alpha_1 = (m / (grad_variance_rate + 3.0 * weight_max * memory_drift_rate))
        .min(alpha / (3.0 * m));
    let pp_max = inputs
        .omega
        .iter()
        .zip(inputs.participation.iter())
        .map(|(&w, &p)| (w + 1.0) / p)
        .fold(0.0f64, f64::max);
    let anchor_coupling = 16.0 * inputs.refresh_period as f64 * m_bar * pp_max
        * inputs
            .client_curvature
            .iter()
            .zip(factors.iter())
            .map(|(&mi, &ai)| ai * mi)
            .sum::<f64>();
    let gamma_alpha_2 = if anchor_coupling > 0.0 {
        gamma_alpha_1.min((m / anchor_coupling).cbrt())
    } else {
        gamma_alpha_1
    };
    let gamma_max = resolve_gamma_bar(inputs, gamma_alpha_2.min(1.0 / (10.0 * m)))?;

    let d = inputs.dim as f64;
    let bias = 2.0 * d * lipschitz * lipschitz
        * (1.0 / m + 5.0 * gamma_max)
        * (1.0 + gamma_max * lipschitz * lipschitz / (2.0 * m)
            + gamma_max * gamma_max * lipschitz * lipschitz / 12.0)
        / m
        + 96.0 * inputs.refresh_period as f64 * d * bias_sum / (m * m);

    Ok(BoundReport {
        algorithm: BoundAlgorithm::QlsdPp,
        gamma_max,
        contraction: 1.0 - gamma_max * m / 2.0,
        bias,
        transient: 0.0,
        subset_variance_factors: factors,
        grad_variance_rate,
        memory_drift_rate,
        variance_envelope,
        strong_convexity: m,
        refresh_period: inputs.refresh_period,
        alpha,
        participation_weight_sum: weight_sum,
        participation_weight_max: weight_max,
    })
}

/// Evaluate the right-hand side of the convergence theorem matching `report`
/// at iteration k.
///
/// `w2_init_sq` is W₂²(μ, π) at the start, `second_moment_init` is
/// ∫‖θ − θ*‖² dμ, and `memory_gap_init_sq` is Σ_i ‖∇U_i(θ*) − η₀^{(i)}‖²
/// (only consulted by the memory variant).
pub fn w2_bound_curve(
    report: &BoundReport,
    gamma: f64,
    k: u64,
    w2_init_sq: f64,
    second_moment_init: f64,
    memory_gap_init_sq: f64,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= report.gamma_max * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!(
            "gamma = {gamma} outside the admissible range (0, {}]",
            report.gamma_max
        )));
    }
    let m = report.strong_convexity;
    let rate = 1.0 - gamma * m / 2.0;
    let kf = k as f64;
    match report.algorithm {
        BoundAlgorithm::Qlsd | BoundAlgorithm::QlsdStar => {
            let transient = if k == 0 {
                0.0
            } else {
                gamma * gamma * report.transient * kf * rate.powf(kf - 1.0) * second_moment_init
            };
            Ok(rate.powf(kf) * w2_init_sq + gamma * report.bias + transient)
        }
        BoundAlgorithm::QlsdPp => {
            let epochs = (k / report.refresh_period) as f64;
            let psi0 = second_moment_init
                + (3.0 / report.alpha)
                    * report.participation_weight_max
                    * gamma
                    * gamma
                    * memory_gap_init_sq;
            let anchored = (2.0 * gamma / m) * rate.powf(epochs) * report.variance_envelope * psi0;
            let memory = (4.0 * gamma / m)
                * report.participation_weight_sum
                * (1.0 - report.alpha).powf(kf)
                * memory_gap_init_sq;
            Ok(rate.powf(kf) * w2_init_sq + anchored + memory + gamma * report.bias)
        }
    }
}
