//! Per-client stochastic gradient oracles.
//!
//! Four variants: the full local gradient, the minibatch estimator
//! (N_i/n_i) Σ_{j∈S} ∇U_{i,j}(θ), the fixed-point variance-reduced estimator
//! anchored at the minimizer θ*, and the SVRG estimator anchored at a control
//! variate ζ. Minibatches are uniform size-n subsets drawn without
//! replacement; summation is always in ascending component order so results
//! do not depend on scheduling.

use crate::error::{Error, Result};
use crate::models::PotentialModel;
use crate::rng::RandomStream;
use crate::vector::ParamVector;

/// Which stochastic gradient oracle each client evaluates. The per-client
/// minibatch sizes live in the sampler config; `n` here is the size for the
/// client being evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleKind {
    /// ∇U_i(θ), deterministic.
    Full,
    /// (N_i/n_i) Σ_{j∈S} ∇U_{i,j}(θ).
    Minibatch,
    /// (N_i/n_i) Σ_{j∈S} [∇U_{i,j}(θ) - ∇U_{i,j}(θ*)]; biased per client,
    /// unbiased after summing over clients because Σ_i ∇U_i(θ*) = 0.
    Star { theta_star: ParamVector },
    /// (N_i/n_i) Σ_{j∈S} [∇U_{i,j}(θ) - ∇U_{i,j}(ζ)] + ∇U_i(ζ).
    Svrg,
}

impl OracleKind {
    pub fn needs_draw(&self) -> bool {
        !matches!(self, OracleKind::Full)
    }

    pub fn needs_zeta(&self) -> bool {
        matches!(self, OracleKind::Svrg)
    }
}

/// A uniformly drawn size-n subset of [0, N).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinibatchDraw {
    indices: Vec<usize>,
}

impl MinibatchDraw {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Build from explicit indices (enumeration tests).
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        MinibatchDraw { indices }
    }
}

/// Draw a uniform size-n subset of [0, N) by partial Fisher-Yates on the
/// stream. Indices come back sorted so downstream sums are order-fixed.
pub fn sample_minibatch(n_records: usize, n_batch: usize, stream: &mut RandomStream) -> Result<MinibatchDraw> {
    if n_batch == 0 || n_batch > n_records {
        return Err(Error::Config(format!(
            "minibatch size {n_batch} out of range for {n_records} records"
        )));
    }
    let mut pool: Vec<usize> = (0..n_records).collect();
    for slot in 0..n_batch {
        let pick = slot + stream.uniform_index(n_records - slot);
        pool.swap(slot, pick);
    }
    pool.truncate(n_batch);
    pool.sort_unstable();
    Ok(MinibatchDraw { indices: pool })
}

/// Evaluate client i's oracle at θ. `draw` must be present exactly for the
/// stochastic variants and `zeta` exactly for the SVRG variant.
pub fn oracle_eval(
    kind: &OracleKind,
    model: &PotentialModel,
    i: usize,
    theta: &ParamVector,
    zeta: Option<&ParamVector>,
    draw: Option<&MinibatchDraw>,
) -> Result<ParamVector> {
    if kind.needs_draw() != draw.is_some() {
        return Err(Error::Contract("minibatch draw presence does not match oracle kind".into()));
    }
    if kind.needs_zeta() != zeta.is_some() {
        return Err(Error::Contract("control variate presence does not match oracle kind".into()));
    }
    match kind {
        OracleKind::Full => model.grad_client(i, theta),
        OracleKind::Minibatch => {
            let draw = draw.expect("checked above");
            let scale = model.client_size(i) as f64 / draw.len() as f64;
            let mut sum = ParamVector::zeros(model.dim());
            for &j in draw.indices() {
                sum.add_assign(&model.grad_component(i, j, theta)?);
            }
            sum.scale(scale);
            Ok(sum)
        }
        OracleKind::Star { theta_star } => {
            let draw = draw.expect("checked above");
            let scale = model.client_size(i) as f64 / draw.len() as f64;
            let mut sum = ParamVector::zeros(model.dim());
            for &j in draw.indices() {
                sum.add_assign(&model.grad_component(i, j, theta)?);
                sum.sub_assign(&model.grad_component(i, j, theta_star)?);
            }
            sum.scale(scale);
            Ok(sum)
        }
        OracleKind::Svrg => {
            let draw = draw.expect("checked above");
            let zeta = zeta.expect("checked above");
            let scale = model.client_size(i) as f64 / draw.len() as f64;
            let mut sum = ParamVector::zeros(model.dim());
            for &j in draw.indices() {
                sum.add_assign(&model.grad_component(i, j, theta)?);
                sum.sub_assign(&model.grad_component(i, j, zeta)?);
            }
            sum.scale(scale);
            sum.add_assign(&model.grad_client(i, zeta)?);
            Ok(sum)
        }
    }
}

/// All size-n subsets of [0, N), for exact-expectation tests and the
/// closed-form oracle moment checks.
pub fn enumerate_subsets(n_records: usize, n_batch: usize) -> Vec<MinibatchDraw> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n_batch);
    fn recurse(start: usize, n_records: usize, n_batch: usize, current: &mut Vec<usize>, out: &mut Vec<MinibatchDraw>) {
        if current.len() == n_batch {
            out.push(MinibatchDraw { indices: current.clone() });
            return;
        }
        for j in start..n_records {
            current.push(j);
            recurse(j + 1, n_records, n_batch, current, out);
            current.pop();
        }
    }
    recurse(0, n_records, n_batch, &mut current, &mut out);
    out
}
