//! Monte Carlo detection model used to cross-check the analytic formulas.
//!
//! Two scenarios are simulated: per-gate click/sift/error sampling for the
//! single-photon protocols, and Poisson click streams fed through a
//! coincidence window for the BBM92 accidental rate. Runs are deterministic:
//! a fixed seed yields bitwise-identical estimates regardless of thread
//! count, because trials are partitioned into fixed chunks that each own a
//! dedicated counter-mode RNG stream and reduce to integer counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::bbm92::{EntangledSourceParams, SourcePlacement};
use crate::error::{Error, Result};
use crate::math::{Probability, Transmittance};
use crate::single_photon::{DeviceParams, SingleProtocolKind};

/// How a gate with both a signal click and a noise click is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseConvention {
    /// The signal click wins; noise contributes only on signal-free gates.
    #[default]
    SignalWins,
    /// A collision is ambiguous and the recorded bit is drawn at random.
    CollisionRandomizes,
}

/// Per-gate detection model for BB84 / six-state.
#[derive(Debug, Clone, PartialEq)]
pub struct SinglePhotonScenario {
    pub kind: SingleProtocolKind,
    pub device: DeviceParams,
    pub transmittance: Transmittance,
    pub convention: NoiseConvention,
}

/// Poisson click-stream model for BBM92 accidental coincidences.
#[derive(Debug, Clone, PartialEq)]
pub struct AccidentalsScenario {
    pub source: EntangledSourceParams,
    pub placement: SourcePlacement,
    pub transmittance: Transmittance,
    pub noise_count_prob: Probability,
}

/// What to simulate.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    SinglePhoton(SinglePhotonScenario),
    Bbm92Accidentals(AccidentalsScenario),
}

/// One simulation request.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    /// Number of gates (single-photon) or total click budget (accidentals).
    pub trials: u64,
    /// RNG seed; equal seeds give bitwise-equal results.
    pub seed: u64,
    pub scenario: Scenario,
}

/// QBER estimate from a single-photon run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    /// Empirical QBER, errors / sifted.
    pub qber_hat: f64,
    pub sifted_count: u64,
    pub error_count: u64,
    /// Binomial standard error sqrt(q(1-q)/sifted).
    pub stderr: f64,
}

/// Accidental-coincidence estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccidentalEstimate {
    /// Empirical raw coincidence rate (counts/s) within the window.
    pub rate_hz: f64,
    pub coincidences: u64,
    /// Simulated observation time (s).
    pub duration_s: f64,
    /// Poisson standard error sqrt(count)/duration (counts/s).
    pub sigma_hz: f64,
    /// Set when the window is at least the mean click spacing on a side, so
    /// multiple clicks pile into one window and the a*b*tau model degrades.
    pub pileup_warning: bool,
}

const CHUNK: u64 = 1 << 16;

/// Simulates per-gate detection for a single-photon protocol and estimates
/// the QBER of the sifted key.
///
/// Per gate: a usable signal photon arrives with probability
/// `T * eta * q * mu` (capped at 1) and is misread with probability `p_opt`;
/// independently, at least one of the `n` detectors fires from noise with
/// probability `1 - (1 - p_nc)^n`, carrying a random bit. Clicks survive
/// sifting with the protocol's sift fraction.
pub fn simulate_single_photon(cfg: &McConfig) -> Result<McEstimate> {
    let scenario = match &cfg.scenario {
        Scenario::SinglePhoton(s) => s,
        Scenario::Bbm92Accidentals(_) => {
            return Err(Error::ScenarioMismatch { expected: "single-photon" })
        }
    };
    scenario.device.validate()?;
    if cfg.trials == 0 {
        return Err(Error::InsufficientStatistics { trials: 0 });
    }
    let dev = &scenario.device;
    let signal_prob =
        (scenario.transmittance.value() * dev.eta * dev.q * dev.mu).min(1.0);
    let noise_prob = 1.0 - (1.0 - dev.p_nc).powi(dev.n as i32);
    let sift = scenario.kind.sift_fraction();
    let convention = scenario.convention;
    let p_opt = dev.p_opt;

    let chunks = cfg.trials.div_ceil(CHUNK);
    let (sifted, errors) = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let len = CHUNK.min(cfg.trials - chunk * CHUNK);
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(chunk);
            let mut sifted = 0u64;
            let mut errors = 0u64;
            for _ in 0..len {
                let signal = rng.random::<f64>() < signal_prob;
                let noise = rng.random::<f64>() < noise_prob;
                let error_prob = match (signal, noise) {
                    (false, false) => continue,
                    (true, false) => p_opt,
                    (true, true) => match convention {
                        NoiseConvention::SignalWins => p_opt,
                        NoiseConvention::CollisionRandomizes => 0.5,
                    },
                    (false, true) => 0.5,
                };
                if rng.random::<f64>() < sift {
                    sifted += 1;
                    if rng.random::<f64>() < error_prob {
                        errors += 1;
                    }
                }
            }
            (sifted, errors)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    if sifted == 0 {
        return Err(Error::InsufficientStatistics { trials: cfg.trials });
    }
    let qber_hat = errors as f64 / sifted as f64;
    let stderr = (qber_hat * (1.0 - qber_hat) / sifted as f64).sqrt();
    Ok(McEstimate { qber_hat, sifted_count: sifted, error_count: errors, stderr })
}

/// Draws a homogeneous Poisson arrival stream of the given rate over
/// `duration` seconds.
fn poisson_stream(rng: &mut ChaCha12Rng, rate: f64, duration: f64) -> Vec<f64> {
    let mut times = Vec::with_capacity((rate * duration * 1.1) as usize + 16);
    let mut t = 0.0;
    loop {
        // Inverse-CDF exponential spacing; 1-u in (0, 1] keeps ln finite.
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / rate;
        if t > duration {
            break;
        }
        times.push(t);
    }
    times
}

/// Simulates the two uncorrelated click streams behind BBM92 accidentals
/// and counts coincidences with |t_A - t_B| <= tau_c / 2.
///
/// `trials` is the total click budget; the observation time follows as
/// trials / (rate_A + rate_B). The analytic raw rate is a*b*tau_c.
pub fn simulate_bbm92_accidentals(cfg: &McConfig) -> Result<AccidentalEstimate> {
    let scenario = match &cfg.scenario {
        Scenario::Bbm92Accidentals(s) => s,
        Scenario::SinglePhoton(_) => {
            return Err(Error::ScenarioMismatch { expected: "bbm92-accidentals" })
        }
    };
    let (rate_a, rate_b) = uncorrelated_rates(scenario)?;
    if cfg.trials == 0 || rate_a + rate_b <= 0.0 {
        return Err(Error::InsufficientStatistics { trials: cfg.trials });
    }
    let duration = cfg.trials as f64 / (rate_a + rate_b);
    let tau = scenario.source.coincidence_window_s;

    let mut rng_a = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng_a.set_stream(0);
    let clicks_a = poisson_stream(&mut rng_a, rate_a, duration);
    let mut rng_b = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng_b.set_stream(1);
    let clicks_b = poisson_stream(&mut rng_b, rate_b, duration);

    let half = tau / 2.0;
    let mut coincidences = 0u64;
    let mut lo = 0usize;
    for &ta in &clicks_a {
        while lo < clicks_b.len() && clicks_b[lo] < ta - half {
            lo += 1;
        }
        let mut j = lo;
        while j < clicks_b.len() && clicks_b[j] <= ta + half {
            coincidences += 1;
            j += 1;
        }
    }

    let rate_hz = coincidences as f64 / duration;
    let sigma_hz = (coincidences as f64).sqrt() / duration;
    let pileup_warning = tau * rate_a >= 1.0 || tau * rate_b >= 1.0;
    Ok(AccidentalEstimate { rate_hz, coincidences, duration_s: duration, sigma_hz, pileup_warning })
}

/// The uncorrelated click rates (alice-side, bob-side) the accidental model
/// multiplies; mirrors the analytic brackets.
fn uncorrelated_rates(s: &AccidentalsScenario) -> Result<(f64, f64)> {
    s.source.validate()?;
    let rc = s.source.resolved_coincidence_rate();
    let (r1, r2) = (s.source.singles_rate_alice, s.source.singles_rate_bob);
    let (p, tv) = (s.noise_count_prob.value(), s.transmittance.value());
    let (a, b) = match s.placement {
        SourcePlacement::AtAlice => (r1 - tv * rc, p * r2 + tv * (r2 - rc)),
        SourcePlacement::InMiddle => (p * r1 + tv * (r1 - rc), p * r2 + tv * (r2 - rc)),
    };
    if a < 0.0 || b < 0.0 {
        return Err(Error::InconsistentRates {
            detail: format!("uncorrelated rates (alice {a:.3}, bob {b:.3})"),
        });
    }
    Ok((a, b))
}
