//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (run with `--nocapture` to see them). Expected values
//! marked as derived were computed from the independent oracles implemented
//! here (outcome enumeration, AR(1) fixed points, Monte Carlo draws from the
//! closed-form posterior, 2-D quadrature) before being frozen into asserts.

use qlsd::compression::{decode, omega, quantize, QuantizerSpec};
use qlsd::diagnostics::{
    bound_qlsd, bound_qlsd_pp, bound_qlsd_star, fit_diagonal_gaussian, gaussian_w2_sq, hpd_eta,
    hpd_relative_error, initial_memory_gap_sq, oracle_star_moments, w2_bound_curve, BoundInputs,
    BoundReport, MomentAccumulator,
};
use qlsd::models::{make_gaussian_dataset, make_synthetic_logistic, PotentialModel};
use qlsd::oracles::{enumerate_subsets, oracle_eval, OracleKind};
use qlsd::rng::RandomStream;
use qlsd::sampler::{run_chain, Algorithm, ChainRunner, SamplerConfig};
use qlsd::vector::ParamVector;

// ---------------------------------------------------------------------------
// shared helpers / oracles
// ---------------------------------------------------------------------------

/// The toy Gaussian configuration (20 heterogeneous clients in dimension 50),
/// scaled to N_i in [10, 50] so the whole suite stays fast.
fn toy_gaussian() -> PotentialModel {
    make_gaussian_dataset(20, 50, 10, 50, 1.0, &RandomStream::new(90210)).unwrap()
}

fn toy_minibatch(model: &PotentialModel) -> Vec<usize> {
    model.sizes().iter().map(|&n| (n / 10).max(1)).collect()
}

/// Monte Carlo oracle for E_pi ‖θ‖ under the exact Gaussian posterior.
fn posterior_norm_reference(model: &PotentialModel, draws: usize, seed: u64) -> f64 {
    let (mean, var) = model.gaussian_posterior().expect("gaussian model");
    let sd = var.sqrt();
    let d = mean.dim();
    let mut stream = RandomStream::new(seed).substream(&[4242]);
    let mut total = 0.0;
    for _ in 0..draws {
        let mut norm_sq = 0.0;
        for j in 0..d {
            let x = mean[j] + sd * stream.standard_normal();
            norm_sq += x * x;
        }
        total += norm_sq.sqrt();
    }
    total / draws as f64
}

/// Exact outcome enumeration of the stochastic quantizer: all 2^d
/// (probability, decoded value) pairs for a fixed input vector.
fn enumerate_quantizer(v: &ParamVector, s: u32) -> Vec<(f64, ParamVector)> {
    let d = v.dim();
    let norm = v.norm();
    let sf = f64::from(s);
    let coords: Vec<(f64, f64, f64)> = (0..d)
        .map(|j| {
            if norm == 0.0 || v[j] == 0.0 {
                return (0.0, 0.0, 0.0);
            }
            let sign = if v[j] < 0.0 { -1.0 } else { 1.0 };
            let scaled = sf * v[j].abs() / norm;
            let low = scaled.floor();
            (norm * sign * low / sf, norm * sign * (low + 1.0) / sf, scaled - low)
        })
        .collect();
    let mut outcomes = Vec::new();
    for mask in 0..(1u32 << d) {
        let mut prob = 1.0;
        let mut value = Vec::with_capacity(d);
        for (j, &(lo, hi, p_hi)) in coords.iter().enumerate() {
            if mask >> j & 1 == 1 {
                prob *= p_hi;
                value.push(hi);
            } else {
                prob *= 1.0 - p_hi;
                value.push(lo);
            }
        }
        if prob > 0.0 {
            outcomes.push((prob, ParamVector::new(value)));
        }
    }
    outcomes
}

/// Average stationary W2^2 between the fitted chain marginal and the exact
/// Gaussian posterior, pooled over `seeds` independent chains.
fn stationary_w2_floor(
    base: &SamplerConfig,
    model: &PotentialModel,
    seeds: &[u64],
    pool_across_chains: bool,
) -> f64 {
    let (post_mean, post_var) = model.gaussian_posterior().expect("gaussian model");
    let var_vec = vec![post_var; model.dim()];
    if pool_across_chains {
        let mut acc = MomentAccumulator::new(model.dim());
        for &seed in seeds {
            let mut config = base.clone();
            config.seed = seed;
            let trace = run_chain(&config, model).unwrap();
            for theta in trace.samples() {
                acc.push(theta);
            }
        }
        gaussian_w2_sq(&acc.mean().unwrap(), &acc.variance().unwrap(), &post_mean, &var_vec)
            .unwrap()
    } else {
        let mut total = 0.0;
        for &seed in seeds {
            let mut config = base.clone();
            config.seed = seed;
            let trace = run_chain(&config, model).unwrap();
            let (mean, var) = fit_diagonal_gaussian(trace.samples()).unwrap();
            total += gaussian_w2_sq(&mean, &var, &post_mean, &var_vec).unwrap();
        }
        total / seeds.len() as f64
    }
}

// ---------------------------------------------------------------------------
// criterion 1
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_quantizer_contract() {
    let v = ParamVector::new(vec![3.0, 4.0]);
    let spec = QuantizerSpec::Stochastic { s: 1 };

    // exact outcome enumeration
    let outcomes = enumerate_quantizer(&v, 1);
    let mut mean = vec![0.0; 2];
    let mut second = 0.0;
    for (p, value) in &outcomes {
        mean[0] += p * value[0];
        mean[1] += p * value[1];
        second += p * value.dist_sq(&v);
    }
    assert!((mean[0] - 3.0).abs() < 1e-12 && (mean[1] - 4.0).abs() < 1e-12);
    assert!((second - 10.0).abs() < 1e-12);
    let variance_cap = omega(spec, 2) * v.norm_sq();
    assert!((variance_cap - 25.0 * 2f64.sqrt()).abs() < 1e-12);
    assert!(second <= variance_cap);

    // Monte Carlo within 5 sigma of the enumerated values
    let n = 100_000usize;
    let mut stream = RandomStream::new(1001).substream(&[0]);
    let mut mc_mean = vec![0.0; 2];
    let mut mc_second = 0.0;
    let mut mc_second_sq = 0.0;
    for _ in 0..n {
        let decoded = decode(&quantize(&v, spec, &mut stream)).unwrap();
        mc_mean[0] += decoded[0];
        mc_mean[1] += decoded[1];
        let err = decoded.dist_sq(&v);
        mc_second += err;
        mc_second_sq += err * err;
    }
    let nf = n as f64;
    // exact per-coordinate variances of the decoded value are 6 and 4
    for (j, var) in [(0usize, 6.0f64), (1, 4.0)] {
        let band = 5.0 * (var / nf).sqrt();
        assert!((mc_mean[j] / nf - v[j]).abs() < band, "coordinate {j}");
    }
    let second_hat = mc_second / nf;
    let band = 5.0 * ((mc_second_sq / nf - second_hat * second_hat) / nf).sqrt();
    assert!((second_hat - 10.0).abs() < band);

    println!(
        "criterion 1 (quantizer contract): PASS — E[C(v)] = ({:.4}, {:.4}), E‖C(v)−v‖² = {:.4} ≤ {:.4}, MC second moment {:.4}",
        mean[0], mean[1], second, variance_cap, second_hat
    );
}

// ---------------------------------------------------------------------------
// criterion 2
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_ula_reduction_stationary_variance() {
    // 100 observations across 4 clients, full gradients, no compression,
    // full participation: per coordinate the chain is the AR(1)
    // x' = (1 − γN) x + sqrt(2γ) Z with fixed point 1/(N(1 − γN/2)).
    let model = make_gaussian_dataset(4, 2, 25, 25, 1.0, &RandomStream::new(777)).unwrap();
    assert_eq!(model.n_total(), 100);
    let gamma = 1e-3;
    let expected: f64 = 1.0 / (100.0 * (1.0 - gamma * 100.0 / 2.0));
    assert!((expected - 0.010526315789473684).abs() < 1e-15);

    let mut config = SamplerConfig::basic(Algorithm::Qlsd, gamma, 4, u64::MAX - 1, 4040);
    config.theta0 = Some(model.minimizer(0.0).unwrap());
    let mut runner = ChainRunner::new(config, &model).unwrap();
    for _ in 0..20_000 {
        runner.step().unwrap(); // burn-in
    }
    let mut acc = MomentAccumulator::new(2);
    for _ in 0..1_000_000u64 {
        runner.step().unwrap();
        acc.push(&runner.state().theta);
    }
    let variance = acc.variance().unwrap();
    for (j, &v) in variance.iter().enumerate() {
        let rel = (v - expected).abs() / expected;
        assert!(rel < 0.02, "coordinate {j}: variance {v} vs {expected} (rel {rel:.4})");
    }
    println!(
        "criterion 2 (ULA stationary variance): PASS — variances ({:.6}, {:.6}) within ±2% of {:.6}",
        variance[0], variance[1], expected
    );
}

// ---------------------------------------------------------------------------
// criterion 3
// ---------------------------------------------------------------------------

struct BoundCase {
    label: &'static str,
    config: SamplerConfig,
    report: BoundReport,
    memory_gap_sq: f64,
}

#[test]
fn criterion_03_theorem_bounds_dominate_empirical_w2() {
    let model = toy_gaussian();
    let d = model.dim();
    let b = model.num_clients();
    let profile = model.smoothness_profile();
    let theta_star = model.minimizer(0.0).unwrap();
    let minibatch = toy_minibatch(&model);
    let s = 16u32;
    let w = omega(QuantizerSpec::Stochastic { s }, d);

    let inputs_for = |moments_kind: &OracleKind| -> BoundInputs {
        let moments = oracle_star_moments(&model, &theta_star, moments_kind, &minibatch).unwrap();
        BoundInputs {
            strong_convexity: profile.strong_convexity,
            lipschitz: profile.lipschitz,
            client_curvature: profile.client_curvature.clone(),
            component_curvature: profile.component_curvature,
            dim: d,
            omega: vec![w; b],
            participation: vec![1.0; b],
            minibatch: minibatch.clone(),
            client_sizes: model.sizes(),
            aggregate_second_moment: moments.aggregate_second_moment,
            client_second_moment_bound: moments.conservative_client_bound(),
            refresh_period: 100,
            gamma_bar_override: None,
        }
    };

    let base = |algorithm: Algorithm, gamma: f64| {
        let mut config = SamplerConfig::basic(algorithm, gamma, b, 10_000, 0);
        config.compressors = vec![QuantizerSpec::Stochastic { s }; b];
        config.minibatch = minibatch.clone();
        config
    };

    let sharp_report = bound_qlsd(&inputs_for(&OracleKind::Minibatch)).unwrap();
    let star_report =
        bound_qlsd_star(&inputs_for(&OracleKind::Star { theta_star: theta_star.clone() })).unwrap();
    let alpha = 1.0 / (1.0 + w);
    let pp_report = bound_qlsd_pp(&inputs_for(&OracleKind::Svrg), alpha).unwrap();
    let memory_gap_sq = initial_memory_gap_sq(&model, &theta_star, None).unwrap();

    let mut pp_config = base(Algorithm::QlsdPp, pp_report.gamma_max);
    pp_config.alpha = alpha;
    pp_config.refresh_period = 100;

    let cases = vec![
        BoundCase {
            label: "qlsd-sharp",
            config: base(Algorithm::QlsdSharp, sharp_report.gamma_max),
            report: sharp_report,
            memory_gap_sq: 0.0,
        },
        BoundCase {
            label: "qlsd-star",
            config: base(Algorithm::QlsdStar, star_report.gamma_max),
            report: star_report,
            memory_gap_sq: 0.0,
        },
        BoundCase {
            label: "qlsd-pp",
            config: pp_config,
            report: pp_report,
            memory_gap_sq,
        },
    ];

    // point-mass start at the origin
    let (post_mean, post_var) = model.gaussian_posterior().unwrap();
    let w2_init_sq = post_mean.norm_sq() + d as f64 * post_var;
    let second_moment_init = theta_star.norm_sq();
    let checkpoints = [100u64, 1000, 10_000];
    let chains = 100u64;

    for case in &cases {
        // marginal law of θ_k across independent chains
        let mut marginals: Vec<Vec<ParamVector>> =
            checkpoints.iter().map(|_| Vec::with_capacity(chains as usize)).collect();
        for chain in 0..chains {
            let mut config = case.config.clone();
            config.seed = 555_000 + chain;
            let mut runner = ChainRunner::new(config, &model).unwrap();
            let mut next = 0usize;
            for k in 1..=*checkpoints.last().unwrap() {
                runner.step().unwrap();
                if next < checkpoints.len() && k == checkpoints[next] {
                    marginals[next].push(runner.state().theta.clone());
                    next += 1;
                }
            }
        }
        let gamma = case.config.gamma;
        let mut lines = Vec::new();
        for (slot, &k) in checkpoints.iter().enumerate() {
            let (mean, var) = fit_diagonal_gaussian(marginals[slot].iter()).unwrap();
            let empirical =
                gaussian_w2_sq(&mean, &var, &post_mean, &vec![post_var; d]).unwrap();
            let bound = w2_bound_curve(
                &case.report,
                gamma,
                k,
                w2_init_sq,
                second_moment_init,
                case.memory_gap_sq,
            )
            .unwrap();
            assert!(
                empirical <= bound,
                "{} at k = {k}: empirical W2² {empirical:.5} exceeds bound {bound:.5}",
                case.label
            );
            lines.push(format!("k={k}: {empirical:.4} ≤ {bound:.4}"));
        }
        println!(
            "criterion 3 (theorem bound validity, {}): PASS — γ = {:.3e}, {}",
            case.label,
            gamma,
            lines.join(", ")
        );
    }
}

// ---------------------------------------------------------------------------
// criterion 4
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_variance_reduction_ordering() {
    let model = toy_gaussian();
    let b = model.num_clients();
    let minibatch = toy_minibatch(&model);
    let reference = posterior_norm_reference(&model, 10_000_000, 31337);
    let gamma = 4.9e-4;
    let seeds: Vec<u64> = (0..10).collect();

    let mse_for = |algorithm: Algorithm, s: u32, seed: u64| -> f64 {
        let mut config = SamplerConfig::basic(algorithm, gamma, b, 30_000, seed);
        config.burn_in = 15_000;
        config.compressors = vec![QuantizerSpec::Stochastic { s }; b];
        config.minibatch = minibatch.clone();
        let trace = run_chain(&config, &model).unwrap();
        qlsd::diagnostics::mse_test_functional(trace.samples(), reference).unwrap()
    };

    let mut summary = Vec::new();
    for s in [16u32, 256, 65_536] {
        let mut sharp = 0.0;
        let mut star = 0.0;
        for &seed in &seeds {
            sharp += mse_for(Algorithm::QlsdSharp, s, 7_000 + seed);
            star += mse_for(Algorithm::QlsdStar, s, 7_000 + seed);
        }
        sharp /= seeds.len() as f64;
        star /= seeds.len() as f64;
        assert!(
            star < sharp,
            "s = {s}: variance-reduced MSE {star:.3e} not below minibatch MSE {sharp:.3e}"
        );
        summary.push(format!("s=2^{}: {star:.2e} < {sharp:.2e}", s.trailing_zeros()));
    }
    println!("criterion 4 (variance reduction ordering): PASS — {}", summary.join("; "));
}

// ---------------------------------------------------------------------------
// criterion 5
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_compression_efficiency() {
    let model = toy_gaussian();
    let b = model.num_clients();
    let minibatch = toy_minibatch(&model);
    let reference = posterior_norm_reference(&model, 10_000_000, 99991);
    let gamma = 4.9e-4;
    let iterations = 20_000u64;
    let burn_in = 500u64;
    let seeds: Vec<u64> = (0..5).collect();

    // running-MSE trajectory of f(θ) = ‖θ‖ plus cumulative bits, averaged
    // over seeds
    let trajectory = |algorithm: Algorithm, s: Option<u32>| -> (Vec<f64>, Vec<f64>) {
        let len = (iterations - burn_in) as usize;
        let mut mse = vec![0.0; len];
        let mut bits = vec![0.0; len];
        for &seed in &seeds {
            let mut config = SamplerConfig::basic(algorithm, gamma, b, iterations, 60_000 + seed);
            config.burn_in = burn_in;
            config.minibatch = minibatch.clone();
            if let Some(s) = s {
                config.compressors = vec![QuantizerSpec::Stochastic { s }; b];
            }
            let trace = run_chain(&config, &model).unwrap();
            let mut running = 0.0;
            let mut cumulative_bits = trace.ledger.cumulative_through(burn_in) as f64;
            for (t, record) in trace.records.iter().enumerate() {
                running += record.theta.norm();
                cumulative_bits += record.bits_uplink as f64;
                let diff = running / (t + 1) as f64 - reference;
                mse[t] += diff * diff;
                bits[t] += cumulative_bits;
            }
        }
        for v in mse.iter_mut().chain(bits.iter_mut()) {
            *v /= seeds.len() as f64;
        }
        (mse, bits)
    };

    let (lsd_mse, lsd_bits) = trajectory(Algorithm::LsdStar, None);
    let (q_mse, q_bits) = trajectory(Algorithm::QlsdStar, Some(65_536));

    let plateau = *lsd_mse.last().unwrap();
    let threshold = 1.1 * plateau;
    // last time the averaged trajectory sat above the 10% band
    let reach = |mse: &[f64]| -> usize {
        let mut lo = 0;
        for (t, &v) in mse.iter().enumerate() {
            if v > threshold {
                lo = t + 1;
            }
        }
        lo.min(mse.len() - 1)
    };
    let lsd_reach = reach(&lsd_mse);
    let q_reach = reach(&q_mse);
    let lsd_cost = lsd_bits[lsd_reach];
    let q_cost = q_bits[q_reach];
    assert!(
        q_cost < lsd_cost,
        "compressed run spent {q_cost:.3e} bits vs uncompressed {lsd_cost:.3e}"
    );
    println!(
        "criterion 5 (compression efficiency): PASS — bits to the 10% band: {:.3e} (s = 2^16) vs {:.3e} (uncompressed), ratio {:.2} (> 1 asserted; the headline 2.5x uses the theoretical bit bounds, not this exact encoder)",
        q_cost,
        lsd_cost,
        lsd_cost / q_cost
    );
}

// ---------------------------------------------------------------------------
// criterion 6
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_big_data_consistency() {
    // N scaled x1 and x4 at fixed minibatch size, with γ = η/N: the
    // minibatch sampler's stationary floor grows while the variance-reduced
    // floors shrink.
    let eta_bar = 0.05;
    let seeds = [1u64, 2, 3];
    let floors = |scale: usize| -> (f64, f64, f64) {
        let n_i = 25 * scale;
        let model =
            make_gaussian_dataset(4, 10, n_i, n_i, 1.0, &RandomStream::new(13531)).unwrap();
        let n_total = model.n_total() as f64;
        let gamma = eta_bar / n_total;
        let d = model.dim();
        let w = omega(QuantizerSpec::Stochastic { s: 256 }, d);
        let make = |algorithm: Algorithm| {
            let mut config = SamplerConfig::basic(algorithm, gamma, 4, 200_000, 0);
            config.burn_in = 50_000;
            config.compressors = vec![QuantizerSpec::Stochastic { s: 256 }; 4];
            config.minibatch = vec![2; 4];
            if algorithm.uses_memory() {
                config.alpha = 1.0 / (1.0 + w);
                config.refresh_period = 100;
            }
            config
        };
        (
            stationary_w2_floor(&make(Algorithm::QlsdSharp), &model, &seeds, false),
            stationary_w2_floor(&make(Algorithm::QlsdStar), &model, &seeds, false),
            stationary_w2_floor(&make(Algorithm::QlsdPp), &model, &seeds, false),
        )
    };

    let (sharp_base, star_base, pp_base) = floors(1);
    let (sharp_big, star_big, pp_big) = floors(4);
    let sharp_ratio = sharp_big / sharp_base;
    let star_ratio = star_big / star_base;
    let pp_ratio = pp_big / pp_base;
    assert!(sharp_ratio >= 2.0, "minibatch floor ratio {sharp_ratio:.2} below 2");
    assert!(star_ratio <= 2.0, "fixed-point floor ratio {star_ratio:.2} above 2");
    assert!(pp_ratio <= 2.0, "memory-variant floor ratio {pp_ratio:.2} above 2");
    println!(
        "criterion 6 (big-data consistency): PASS — floor ratios x4/x1: minibatch {:.2} (≥ 2), fixed-point {:.2} (≤ 2), memory {:.2} (≤ 2)",
        sharp_ratio, star_ratio, pp_ratio
    );
}

// ---------------------------------------------------------------------------
// criterion 7
// ---------------------------------------------------------------------------

/// Deterministic 2-D quadrature for the posterior moments of a logistic
/// model: locate the mode, set the grid scale from the Hessian diagonal
/// (finite differences), and integrate exp(−U) over mode ± 8 sd.
fn posterior_moments_quadrature(model: &PotentialModel) -> (ParamVector, Vec<f64>) {
    assert_eq!(model.dim(), 2);
    let mode = model.minimizer(1e-10).unwrap();
    let mut sd = [0.0f64; 2];
    for j in 0..2 {
        let eps = 1e-4;
        let mut plus = mode.clone();
        plus[j] += eps;
        let mut minus = mode.clone();
        minus[j] -= eps;
        let curvature =
            (model.grad_full(&plus)[j] - model.grad_full(&minus)[j]) / (2.0 * eps);
        sd[j] = (1.0 / curvature).sqrt();
    }
    let steps = 200i32;
    let span = 8.0;
    let u_min = model.potential(&mode);
    let mut mass = 0.0;
    let mut mean = [0.0f64; 2];
    let mut second = [0.0f64; 2];
    for a in -steps..=steps {
        let x = mode[0] + span * sd[0] * f64::from(a) / f64::from(steps);
        for b in -steps..=steps {
            let y = mode[1] + span * sd[1] * f64::from(b) / f64::from(steps);
            let theta = ParamVector::new(vec![x, y]);
            let weight = (-(model.potential(&theta) - u_min)).exp();
            mass += weight;
            mean[0] += weight * x;
            mean[1] += weight * y;
            second[0] += weight * x * x;
            second[1] += weight * y * y;
        }
    }
    (
        ParamVector::new(vec![mean[0] / mass, mean[1] / mass]),
        vec![second[0] / mass, second[1] / mass],
    )
}

#[test]
fn criterion_07_memory_benefit_on_heterogeneous_data() {
    let sizes = vec![30usize; 50];
    let model =
        make_synthetic_logistic(1.0, 1.0, 50, 2, &sizes, 0.02, &RandomStream::new(24601)).unwrap();
    let (_, second_ref) = posterior_moments_quadrature(&model);
    let gamma = 1e-4;
    let seeds: Vec<u64> = (0..10).collect();

    let second_moment_error = |s: u32, with_memory: bool, seed: u64| -> f64 {
        let w = omega(QuantizerSpec::Stochastic { s }, 2);
        let mut config = SamplerConfig::basic(Algorithm::QlsdPp, gamma, 50, 100_000, seed);
        config.burn_in = 20_000;
        config.compressors = vec![QuantizerSpec::Stochastic { s }; 50];
        config.minibatch = vec![3; 50];
        config.alpha = if with_memory { 1.0 / (1.0 + w) } else { 0.0 };
        config.refresh_period = 100;
        let trace = run_chain(&config, &model).unwrap();
        let mut acc = MomentAccumulator::new(2);
        for theta in trace.samples() {
            acc.push(&ParamVector::new(vec![theta[0] * theta[0], theta[1] * theta[1]]));
        }
        let second = acc.mean().unwrap();
        let mut err = 0.0;
        for j in 0..2 {
            err += (second[j] - second_ref[j]).powi(2);
        }
        err.sqrt()
    };

    let mut summary = Vec::new();
    for s in [2u32, 4] {
        let mut with_memory = 0.0;
        let mut without = 0.0;
        for &seed in &seeds {
            with_memory += second_moment_error(s, true, 80_000 + seed);
            without += second_moment_error(s, false, 80_000 + seed);
        }
        with_memory /= seeds.len() as f64;
        without /= seeds.len() as f64;
        assert!(
            with_memory < without,
            "s = {s}: memory error {with_memory:.3e} not below memory-free {without:.3e}"
        );
        summary.push(format!("s={s}: {with_memory:.2e} < {without:.2e}"));
    }
    println!("criterion 7 (memory benefit): PASS — {}", summary.join("; "));
}

// ---------------------------------------------------------------------------
// criterion 8
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_aggregate_unbiasedness_by_full_enumeration() {
    // b = 2 clients, N_i = 3, n_i = 1, s = 1: enumerate every
    // (minibatch x quantizer outcome x participation) atom and check that
    // the analytic aggregation has expectation exactly ∇U(θ).
    let model = make_gaussian_dataset(2, 2, 3, 3, 1.0, &RandomStream::new(8086)).unwrap();
    let theta = ParamVector::new(vec![0.4, -1.2]);
    let theta_star = model.minimizer(0.0).unwrap();
    let p = [0.7, 0.4];
    let full = model.grad_full(&theta);

    // per-client atoms: (probability, weighted contribution to g)
    let client_atoms = |kind: &OracleKind, i: usize| -> Vec<(f64, ParamVector)> {
        let mut atoms = vec![(1.0 - p[i], ParamVector::zeros(2))]; // inactive
        let subsets = enumerate_subsets(3, 1);
        for draw in &subsets {
            let h = oracle_eval(kind, &model, i, &theta, None, Some(draw)).unwrap();
            for (q, decoded) in enumerate_quantizer(&h, 1) {
                let mut weighted = decoded;
                weighted.scale(1.0 / p[i]);
                atoms.push((p[i] * q / subsets.len() as f64, weighted));
            }
        }
        atoms
    };
    let full_atoms = |i: usize| -> Vec<(f64, ParamVector)> {
        let h = model.grad_client(i, &theta).unwrap();
        let mut atoms = vec![(1.0 - p[i], ParamVector::zeros(2))];
        for (q, decoded) in enumerate_quantizer(&h, 1) {
            let mut weighted = decoded;
            weighted.scale(1.0 / p[i]);
            atoms.push((p[i] * q, weighted));
        }
        atoms
    };

    let algorithms: Vec<(&str, Vec<Vec<(f64, ParamVector)>>, ParamVector)> = vec![
        ("qlsd", (0..2).map(full_atoms).collect(), full.clone()),
        (
            "qlsd-sharp",
            (0..2).map(|i| client_atoms(&OracleKind::Minibatch, i)).collect(),
            full.clone(),
        ),
        (
            "qlsd-star",
            (0..2)
                .map(|i| client_atoms(&OracleKind::Star { theta_star: theta_star.clone() }, i))
                .collect(),
            full.clone(),
        ),
    ];

    for (label, per_client, expected) in &algorithms {
        let mut mean = ParamVector::zeros(2);
        let mut total_prob = 0.0;
        for (p1, g1) in &per_client[0] {
            for (p2, g2) in &per_client[1] {
                let prob = p1 * p2;
                total_prob += prob;
                let mut g = g1.clone();
                g.add_assign(g2);
                mean.axpy(prob, &g);
            }
        }
        assert!((total_prob - 1.0).abs() < 1e-12, "{label}: probabilities sum to {total_prob}");
        let gap = mean.sub(expected).norm();
        assert!(gap < 1e-12, "{label}: E[g] off by {gap:e}");
    }
    println!(
        "criterion 8 (aggregate unbiasedness by enumeration): PASS — qlsd, qlsd-sharp, qlsd-star all within 1e-12"
    );
}

// ---------------------------------------------------------------------------
// criterion 9
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_trajectory_equivalences() {
    let model = make_gaussian_dataset(3, 2, 5, 9, 1.0, &RandomStream::new(515)).unwrap();
    let steps = 1000u64;
    let make = |algorithm: Algorithm| {
        let mut config = SamplerConfig::basic(algorithm, 4e-4, 3, steps, 99);
        config.minibatch = vec![2; 3];
        if algorithm.uses_memory() {
            config.alpha = 0.5;
            config.refresh_period = 25;
        }
        config
    };

    // uncompressed variants are bit-identical to identity compression
    for (lsd, qlsd) in [
        (Algorithm::LsdStar, Algorithm::QlsdStar),
        (Algorithm::LsdPp, Algorithm::QlsdPp),
    ] {
        let a = run_chain(&make(lsd), &model).unwrap();
        let b = run_chain(&make(qlsd), &model).unwrap();
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.theta, rb.theta, "{lsd:?} diverged from {qlsd:?} at k = {}", ra.k);
        }
    }

    // fixed-point variant ≡ memory variant with ζ pinned at θ*, α = 0,
    // η = 0. Bit-identity needs ∇U_i(θ*) = 0 exactly per client (the two
    // drifts differ by Σ_i ∇U_i(θ*), which only cancels exactly then), so
    // use a model with symmetric per-client data.
    let mut clients = Vec::new();
    for i in 0..3 {
        let point = ParamVector::new(vec![0.5 + i as f64, 1.5 - i as f64]);
        let mut negated = point.clone();
        negated.scale(-1.0);
        clients.push(qlsd::models::GaussianClient { points: vec![point, negated] });
    }
    let symmetric = PotentialModel::new_gaussian(clients).unwrap();
    let star = ParamVector::zeros(2);

    let mut star_config = SamplerConfig::basic(Algorithm::QlsdStar, 4e-4, 3, steps, 99);
    star_config.minibatch = vec![1; 3];
    star_config.theta_star = Some(star.clone());
    star_config.theta0 = Some(star.clone());
    let mut pp_config = SamplerConfig::basic(Algorithm::QlsdPp, 4e-4, 3, steps, 99);
    pp_config.minibatch = vec![1; 3];
    pp_config.alpha = 0.0;
    pp_config.refresh_period = u64::MAX; // ζ stays at θ_0 = θ*
    pp_config.theta0 = Some(star);
    let a = run_chain(&star_config, &symmetric).unwrap();
    let b = run_chain(&pp_config, &symmetric).unwrap();
    for (ra, rb) in a.records.iter().zip(b.records.iter()) {
        assert_eq!(ra.theta, rb.theta, "fixed-point vs anchored memory at k = {}", ra.k);
    }

    // on heterogeneous data the same equivalence holds mathematically; the
    // drifts differ only by the floating-point non-cancellation of
    // Σ_i ∇U_i(θ*), so trajectories agree to numerical precision.
    let star = model.minimizer(0.0).unwrap();
    let mut star_config = SamplerConfig::basic(Algorithm::QlsdStar, 4e-4, 3, steps, 99);
    star_config.minibatch = vec![1; 3];
    star_config.theta_star = Some(star.clone());
    star_config.theta0 = Some(star.clone());
    let mut pp_config = SamplerConfig::basic(Algorithm::QlsdPp, 4e-4, 3, steps, 99);
    pp_config.minibatch = vec![1; 3];
    pp_config.alpha = 0.0;
    pp_config.refresh_period = u64::MAX;
    pp_config.theta0 = Some(star);
    let a = run_chain(&star_config, &model).unwrap();
    let b = run_chain(&pp_config, &model).unwrap();
    for (ra, rb) in a.records.iter().zip(b.records.iter()) {
        let gap = ra.theta.sub(&rb.theta).norm();
        assert!(gap <= 1e-9 * (1.0 + ra.theta.norm()), "k = {}: gap {gap:e}", ra.k);
    }

    println!(
        "criterion 9 (trajectory equivalences): PASS — lsd-star ≡ qlsd-star+identity, lsd-pp ≡ qlsd-pp+identity, qlsd-star ≡ anchored qlsd-pp (bit-identical on per-client-centered data, ≤ 1e-9 otherwise)"
    );
}

// ---------------------------------------------------------------------------
// criterion 10
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_hpd_pipeline() {
    let model = make_gaussian_dataset(3, 4, 10, 20, 1.0, &RandomStream::new(616)).unwrap();
    let mut config = SamplerConfig::basic(Algorithm::Qlsd, 1e-3, 3, 6000, 2025);
    config.burn_in = 1000;

    let eta = |config: &SamplerConfig| {
        let trace = run_chain(config, &model).unwrap();
        hpd_eta(trace.samples(), &model, 0.05).unwrap().eta
    };
    let reference = eta(&config);
    let replay = eta(&config);
    assert_eq!(hpd_relative_error(replay, reference), 0.0);

    let mut perturbed = config.clone();
    perturbed.gamma = 3e-3;
    let shifted = eta(&perturbed);
    let error = hpd_relative_error(shifted, reference);
    assert!(error > 0.0);
    println!(
        "criterion 10 (HPD pipeline): PASS — identical configs give relative error 0, perturbed step size gives {error:.3e}"
    );
}
