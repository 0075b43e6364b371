//! Server loop for the quantised Langevin sampler family.
//!
//! One iteration: the active clients evaluate their stochastic gradient
//! oracle at θ_k, compress it (minus their memory term, for the memory
//! variants), and the server aggregates the decoded messages, takes a
//! Langevin step θ_{k+1} = θ_k − γ g + sqrt(2γ) Z, and updates the memories.
//!
//! Two aggregation rules are implemented. The analytic rule weights each
//! active client by 1/p_i, which is exactly unbiased and is the estimator
//! the convergence theory assumes. The algorithmic rule rescales by b/|A| as
//! the pseudocode-style description does. They coincide at full
//! participation.
//!
//! Randomness is organised as per-(purpose, iteration, client) substreams of
//! the experiment seed, so client evaluations can be scheduled in any order
//! without changing results and toggling one client's participation never
//! perturbs another client's draws. Clients are always aggregated in index
//! order to keep floating-point sums deterministic.

use serde::{Deserialize, Serialize};

use crate::compression::{bit_cost, decode, omega, quantize, CompressedMessage, QuantizerSpec};
use crate::error::{Error, Result};
use crate::models::PotentialModel;
use crate::oracles::{oracle_eval, sample_minibatch, MinibatchDraw, OracleKind};
use crate::rng::{gaussian_draw, purpose, RandomStream};
use crate::trace::{BitLedger, IterationRecord, Trace};
use crate::vector::ParamVector;

/// The sampler family. The `lsd-*` entries are the uncompressed counterparts
/// and run the same code path with identity compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Full local gradients, compressed.
    Qlsd,
    /// Minibatch local gradients, compressed.
    QlsdSharp,
    /// Fixed-point variance reduction anchored at the minimizer.
    QlsdStar,
    /// SVRG-style control variates plus per-client memories.
    QlsdPp,
    /// Uncompressed counterpart of `QlsdStar`.
    LsdStar,
    /// Uncompressed counterpart of `QlsdPp`.
    LsdPp,
}

impl Algorithm {
    pub fn uses_memory(self) -> bool {
        matches!(self, Algorithm::QlsdPp | Algorithm::LsdPp)
    }

    pub fn requires_identity(self) -> bool {
        matches!(self, Algorithm::LsdStar | Algorithm::LsdPp)
    }

    pub fn needs_minimizer(self) -> bool {
        matches!(self, Algorithm::QlsdStar | Algorithm::LsdStar)
    }

    pub fn uses_minibatch(self) -> bool {
        !matches!(self, Algorithm::Qlsd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Qlsd => "qlsd",
            Algorithm::QlsdSharp => "qlsd-sharp",
            Algorithm::QlsdStar => "qlsd-star",
            Algorithm::QlsdPp => "qlsd-pp",
            Algorithm::LsdStar => "lsd-star",
            Algorithm::LsdPp => "lsd-pp",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qlsd" => Ok(Algorithm::Qlsd),
            "qlsd-sharp" => Ok(Algorithm::QlsdSharp),
            "qlsd-star" => Ok(Algorithm::QlsdStar),
            "qlsd-pp" => Ok(Algorithm::QlsdPp),
            "lsd-star" => Ok(Algorithm::LsdStar),
            "lsd-pp" => Ok(Algorithm::LsdPp),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// How the server combines the active clients' messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationRule {
    /// g = Σ_{i∈A} g_i / p_i — unbiased, used by the convergence analysis.
    Analytic,
    /// g = (b/|A|) Σ_{i∈A} g_i — the pseudocode-style rescaling.
    Algorithmic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub algorithm: Algorithm,
    /// Step size γ.
    pub gamma: f64,
    /// Per-client participation probabilities, in (0, 1].
    pub participation: Vec<f64>,
    /// Per-client compression operators.
    pub compressors: Vec<QuantizerSpec>,
    /// Per-client minibatch sizes n_i (unused by the full-gradient variant).
    pub minibatch: Vec<usize>,
    /// Memory step α (memory variants only).
    pub alpha: f64,
    /// Control-variate refresh period l (memory variants only).
    pub refresh_period: u64,
    /// Number of iterations K.
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
    pub aggregation: AggregationRule,
    /// Starting point; zero vector when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<ParamVector>,
    /// Externally supplied minimizer for the fixed-point variants; computed
    /// from the model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<ParamVector>,
}

impl SamplerConfig {
    /// Full participation, identity compression, single-chain defaults.
    pub fn basic(algorithm: Algorithm, gamma: f64, b: usize, iterations: u64, seed: u64) -> Self {
        SamplerConfig {
            algorithm,
            gamma,
            participation: vec![1.0; b],
            compressors: vec![QuantizerSpec::Identity; b],
            minibatch: Vec::new(),
            alpha: 0.0,
            refresh_period: 1,
            iterations,
            burn_in: 0,
            thinning: 1,
            seed,
            aggregation: AggregationRule::Analytic,
            theta0: None,
            theta_star: None,
        }
    }

    pub fn validate(&self, model: &PotentialModel) -> Result<()> {
        let b = model.num_clients();
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config("step size gamma must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("need at least one iteration".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config("burn-in must be smaller than the iteration count".into()));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.participation.len() != b {
            return Err(Error::Config(format!(
                "expected {b} participation probabilities, got {}",
                self.participation.len()
            )));
        }
        if self.participation.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Config("participation probabilities must lie in (0, 1]".into()));
        }
        if self.compressors.len() != b {
            return Err(Error::Config(format!(
                "expected {b} compressor specs, got {}",
                self.compressors.len()
            )));
        }
        if self.compressors.iter().any(|c| matches!(c, QuantizerSpec::Stochastic { s: 0 })) {
            return Err(Error::Config("quantizer needs at least one level".into()));
        }
        if self.algorithm.requires_identity() && self.compressors.iter().any(|c| !c.is_identity()) {
            return Err(Error::Config(format!(
                "{} is the uncompressed variant; use identity compressors",
                self.algorithm.name()
            )));
        }
        if self.algorithm.uses_minibatch() {
            if self.minibatch.len() != b {
                return Err(Error::Config(format!(
                    "expected {b} minibatch sizes, got {}",
                    self.minibatch.len()
                )));
            }
            for (i, &n) in self.minibatch.iter().enumerate() {
                if n == 0 || n > model.client_size(i) {
                    return Err(Error::Config(format!(
                        "minibatch size {n} out of range for client {i} (N_i = {})",
                        model.client_size(i)
                    )));
                }
            }
        }
        if self.algorithm.uses_memory() {
            if self.refresh_period == 0 {
                return Err(Error::Config("control-variate refresh period must be >= 1".into()));
            }
            let omega_max = self
                .compressors
                .iter()
                .map(|&c| omega(c, model.dim()))
                .fold(0.0f64, f64::max);
            let alpha_max = 1.0 / (1.0 + omega_max);
            if !(self.alpha >= 0.0 && self.alpha <= alpha_max * (1.0 + 1e-12)) {
                return Err(Error::Config(format!(
                    "memory step alpha = {} outside [0, 1/(1+omega_max)] = [0, {alpha_max}]",
                    self.alpha
                )));
            }
        }
        if let Some(theta0) = &self.theta0 {
            if theta0.dim() != model.dim() {
                return Err(Error::Config("theta0 dimension does not match the model".into()));
            }
            theta0.check_finite("theta0")?;
        }
        Ok(())
    }

    fn oracle_kind(&self, theta_star: Option<&ParamVector>) -> OracleKind {
        match self.algorithm {
            Algorithm::Qlsd => OracleKind::Full,
            Algorithm::QlsdSharp => OracleKind::Minibatch,
            Algorithm::QlsdStar | Algorithm::LsdStar => OracleKind::Star {
                theta_star: theta_star.expect("checked by ChainRunner").clone(),
            },
            Algorithm::QlsdPp | Algorithm::LsdPp => OracleKind::Svrg,
        }
    }
}

/// Server-held sampler state.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub theta: ParamVector,
    /// Control variate ζ_k (memory variants; mirrors θ_0 otherwise).
    pub zeta: ParamVector,
    /// Client-held full gradients ∇U_i(ζ_k), recomputed only when the
    /// control variate refreshes (empty for memory-free variants).
    pub zeta_grads: Vec<ParamVector>,
    /// Per-client memories η_k^{(i)} (empty for memory-free variants).
    pub eta: Vec<ParamVector>,
    /// Σ_i η_k^{(i)}, maintained incrementally and re-verified periodically.
    pub eta_sum: ParamVector,
    pub k: u64,
}

impl ServerState {
    pub fn initial(config: &SamplerConfig, model: &PotentialModel) -> Self {
        let d = model.dim();
        let theta = config.theta0.clone().unwrap_or_else(|| ParamVector::zeros(d));
        let eta = if config.algorithm.uses_memory() {
            vec![ParamVector::zeros(d); model.num_clients()]
        } else {
            Vec::new()
        };
        ServerState {
            zeta: theta.clone(),
            theta,
            zeta_grads: Vec::new(),
            eta,
            eta_sum: ParamVector::zeros(d),
            k: 0,
        }
    }
}

/// What one iteration produced.
#[derive(Debug, Clone)]
pub struct StepInfo {
    /// The 1-based index of the completed iteration.
    pub k: u64,
    pub bits_uplink: u64,
    pub active_count: usize,
    /// Per-client message (None for inactive clients).
    pub messages: Vec<Option<CompressedMessage>>,
}

/// Draw the active set: client i participates iff its coin u ≤ p_i. The
/// coins live in per-client substreams of `parent`, so changing p_j never
/// perturbs the randomness any other client consumes.
pub fn participation_draw(p: &[f64], parent: &RandomStream) -> Vec<usize> {
    (0..p.len())
        .filter(|&i| p[i] >= 1.0 || parent.substream(&[i as u64]).uniform() <= p[i])
        .collect()
}

const MEMORY_VERIFY_PERIOD: u64 = 1000;
const DIVERGENCE_NORM: f64 = 1e12;

fn step_impl(
    state: &mut ServerState,
    config: &SamplerConfig,
    model: &PotentialModel,
    theta_star: Option<&ParamVector>,
) -> Result<StepInfo> {
    let b = model.num_clients();
    let d = model.dim();
    let k = state.k;
    let memory = config.algorithm.uses_memory();
    let root = RandomStream::new(config.seed);

    if memory && (k % config.refresh_period == 0 || state.zeta_grads.is_empty()) {
        state.zeta = state.theta.clone();
        state.zeta_grads.clear();
        for i in 0..b {
            state.zeta_grads.push(model.grad_client(i, &state.zeta)?);
        }
    }

    let active = participation_draw(
        &config.participation,
        &root.substream(&[purpose::PARTICIPATION, k]),
    );

    let kind = config.oracle_kind(theta_star);
    let mut messages: Vec<Option<CompressedMessage>> = vec![None; b];
    let mut decoded: Vec<Option<ParamVector>> = vec![None; b];
    let mut bits_uplink = 0u64;
    for &i in &active {
        let draw: Option<MinibatchDraw> = if kind.needs_draw() {
            let mut batch_stream = root.substream(&[purpose::MINIBATCH, k, i as u64]);
            Some(sample_minibatch(model.client_size(i), config.minibatch[i], &mut batch_stream)?)
        } else {
            None
        };
        let mut payload = if kind.needs_zeta() {
            // SVRG oracle with the anchor gradient reused from the refresh:
            // (N_i/n_i) Σ_{j∈S} [∇U_{i,j}(θ) − ∇U_{i,j}(ζ)] + ∇U_i(ζ)
            let draw = draw.as_ref().expect("stochastic oracle");
            let scale = model.client_size(i) as f64 / draw.len() as f64;
            let mut sum = ParamVector::zeros(d);
            for &j in draw.indices() {
                sum.add_assign(&model.grad_component(i, j, &state.theta)?);
                sum.sub_assign(&model.grad_component(i, j, &state.zeta)?);
            }
            sum.scale(scale);
            sum.add_assign(&state.zeta_grads[i]);
            sum
        } else {
            oracle_eval(&kind, model, i, &state.theta, None, draw.as_ref())?
        };
        if memory {
            payload.sub_assign(&state.eta[i]);
        }
        let msg = match config.compressors[i] {
            QuantizerSpec::Identity => CompressedMessage::Dense(payload),
            spec @ QuantizerSpec::Stochastic { .. } => {
                let mut quant_stream = root.substream(&[purpose::QUANTIZER, k, i as u64]);
                quantize(&payload, spec, &mut quant_stream)
            }
        };
        bits_uplink += bit_cost(&msg);
        decoded[i] = Some(decode(&msg)?);
        messages[i] = Some(msg);
    }

    // aggregate in client index order for floating-point determinism
    let mut drift = if memory { state.eta_sum.clone() } else { ParamVector::zeros(d) };
    match config.aggregation {
        AggregationRule::Analytic => {
            for i in 0..b {
                if let Some(value) = &decoded[i] {
                    drift.axpy(1.0 / config.participation[i], value);
                }
            }
        }
        AggregationRule::Algorithmic => {
            if !active.is_empty() {
                let mut sum = ParamVector::zeros(d);
                for value in decoded.iter().flatten() {
                    sum.add_assign(value);
                }
                drift.axpy(b as f64 / active.len() as f64, &sum);
            }
        }
    }

    let mut noise_stream = root.substream(&[purpose::NOISE, k]);
    let noise = gaussian_draw(&mut noise_stream, d)?;
    let mut theta_next = state.theta.clone();
    theta_next.axpy(-config.gamma, &drift);
    theta_next.axpy((2.0 * config.gamma).sqrt(), &noise);

    if !theta_next.is_finite() || theta_next.norm_sq() > DIVERGENCE_NORM * DIVERGENCE_NORM {
        return Err(Error::Divergence { iteration: k + 1 });
    }

    if memory && config.alpha != 0.0 {
        for i in 0..b {
            if let Some(value) = &decoded[i] {
                state.eta[i].axpy(config.alpha, value);
                state.eta_sum.axpy(config.alpha, value);
            }
        }
        if (k + 1) % MEMORY_VERIFY_PERIOD == 0 {
            let mut fresh = ParamVector::zeros(d);
            for eta in &state.eta {
                fresh.add_assign(eta);
            }
            let drift_norm = fresh.sub(&state.eta_sum).norm();
            if drift_norm > 1e-12 * (1.0 + fresh.norm()) {
                return Err(Error::State(format!(
                    "memory sum drifted by {drift_norm:e} at iteration {}",
                    k + 1
                )));
            }
            state.eta_sum = fresh;
        }
    }

    state.theta = theta_next;
    state.k = k + 1;
    Ok(StepInfo { k: k + 1, bits_uplink, active_count: active.len(), messages })
}

/// One iteration of the memory-free variants (full/minibatch/fixed-point
/// oracles through compression).
pub fn qlsd_step(
    state: &mut ServerState,
    config: &SamplerConfig,
    model: &PotentialModel,
    theta_star: Option<&ParamVector>,
) -> Result<StepInfo> {
    if config.algorithm.uses_memory() {
        return Err(Error::Contract("qlsd_step called with a memory algorithm".into()));
    }
    step_impl(state, config, model, theta_star)
}

/// One iteration of the memory variants (SVRG oracle, compressed residuals,
/// per-client memories, control-variate refresh every l iterations).
pub fn qlsd_pp_step(
    state: &mut ServerState,
    config: &SamplerConfig,
    model: &PotentialModel,
) -> Result<StepInfo> {
    if !config.algorithm.uses_memory() {
        return Err(Error::Contract("qlsd_pp_step called without a memory algorithm".into()));
    }
    step_impl(state, config, model, None)
}

/// Drives a configured chain over a model, producing a [`Trace`].
pub struct ChainRunner<'a> {
    config: SamplerConfig,
    model: &'a PotentialModel,
    state: ServerState,
    theta_star: Option<ParamVector>,
}

impl<'a> ChainRunner<'a> {
    pub fn new(config: SamplerConfig, model: &'a PotentialModel) -> Result<Self> {
        config.validate(model)?;
        let theta_star = if config.algorithm.needs_minimizer() {
            let star = match &config.theta_star {
                Some(star) => star.clone(),
                None => model.minimizer(1e-8)?,
            };
            star.check_finite("theta_star")?;
            let grad_norm = model.grad_full(&star).norm();
            if grad_norm > 1e-6 {
                return Err(Error::Config(format!(
                    "theta_star is not a minimizer: gradient norm {grad_norm:e}"
                )));
            }
            Some(star)
        } else {
            None
        };
        let state = ServerState::initial(&config, model);
        Ok(ChainRunner { config, model, state, theta_star })
    }

    pub fn state(&self) -> &ServerState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ServerState {
        &mut self.state
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn theta_star(&self) -> Option<&ParamVector> {
        self.theta_star.as_ref()
    }

    pub fn step(&mut self) -> Result<StepInfo> {
        step_impl(&mut self.state, &self.config, self.model, self.theta_star.as_ref())
    }

    /// Run the remaining iterations, recording thinned post-burn-in samples
    /// and the full per-iteration bit ledger.
    pub fn run(mut self) -> Result<Trace> {
        let config = self.config.clone();
        let mut ledger = BitLedger::new();
        let expected = ((config.iterations - config.burn_in) + config.thinning - 1) / config.thinning;
        let mut records = Vec::with_capacity(expected as usize);
        for _ in 0..config.iterations {
            let info = self.step()?;
            ledger.push(info.bits_uplink);
            let k = info.k;
            if k > config.burn_in && (k - config.burn_in - 1) % config.thinning == 0 {
                records.push(IterationRecord {
                    k,
                    theta: self.state.theta.clone(),
                    bits_uplink: info.bits_uplink,
                    active_count: info.active_count,
                });
            }
        }
        debug_assert_eq!(records.len() as u64, expected);
        Ok(Trace { records, ledger })
    }
}

/// Execute K iterations from θ_0 and collect the trace. Fully deterministic
/// per (config, seed).
pub fn run_chain(config: &SamplerConfig, model: &PotentialModel) -> Result<Trace> {
    ChainRunner::new(config.clone(), model)?.run()
}
