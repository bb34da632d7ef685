//! Entanglement-based E91: CHSH correlations under loss and noise, the
//! visibility factor, and the device-independent key rate.
//!
//! A polarization-entangled pair is split between Alice and Bob, who measure
//! along analyzer angles `theta_a`, `theta_b`. Loss and noise counts wash out
//! the correlation by a visibility factor `N`, built from the probabilities
//! that both photons survive (`pair_prob`), exactly one survives
//! (`single_prob`), or none does (`vacuum_prob`). Security is certified
//! device-independently: Eve's information is bounded by the measured CHSH
//! parameter `S` alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Probability, Transmittance, TWO_SQRT_2};

/// Analyzer orientations for the CHSH measurement and the pair phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerConfig {
    /// Alice's three analyzer angles (rad).
    pub alice_angles_rad: [f64; 3],
    /// Bob's three analyzer angles (rad).
    pub bob_angles_rad: [f64; 3],
    /// Relative phase of the entangled state (rad).
    pub phase_rad: f64,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};
        Self {
            alice_angles_rad: [0.0, FRAC_PI_8, FRAC_PI_4],
            bob_angles_rad: [-FRAC_PI_8, 0.0, FRAC_PI_8],
            phase_rad: PI,
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<()> {
        for angle in self.alice_angles_rad.iter().chain(self.bob_angles_rad.iter()) {
            if !angle.is_finite() {
                return Err(Error::OutOfRange {
                    name: "analyzer.angles",
                    value: *angle,
                    constraint: "finite angle (rad)",
                });
            }
        }
        if !self.phase_rad.is_finite() {
            return Err(Error::OutOfRange {
                name: "analyzer.phase_rad",
                value: self.phase_rad,
                constraint: "finite phase (rad)",
            });
        }
        Ok(())
    }
}

/// How a single total channel transmittance maps onto the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmSplit {
    /// Each arm gets sqrt(T_total), so the pair survival equals T_total.
    #[default]
    SqrtTotal,
    /// Each arm gets the full T_total (the channel describes one arm).
    PerArm,
}

/// Per-arm transmittances of the two-photon link, each in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmTransmittances {
    alice: f64,
    bob: f64,
}

impl ArmTransmittances {
    pub fn new(alice: Transmittance, bob: Transmittance) -> Result<Self> {
        for (value, name) in [(alice.value(), "arm.alice"), (bob.value(), "arm.bob")] {
            if value <= 0.0 {
                return Err(Error::OutOfRange {
                    name,
                    value,
                    constraint: "arm transmittance in (0, 1]",
                });
            }
        }
        Ok(Self { alice: alice.value(), bob: bob.value() })
    }

    /// Splits a total transmittance across the arms per `split`.
    pub fn from_total(total: Transmittance, split: ArmSplit) -> Result<Self> {
        let t = match split {
            ArmSplit::SqrtTotal => total.value().sqrt(),
            ArmSplit::PerArm => total.value(),
        };
        let arm = Transmittance::new(t)?;
        Self::new(arm, arm)
    }

    pub fn alice(&self) -> f64 {
        self.alice
    }

    pub fn bob(&self) -> f64 {
        self.bob
    }
}

/// Probabilities that both, exactly one, or neither photon of a pair
/// survives the arms: (pair, single, vacuum). Always sums to 1.
pub fn survival_partition(arms: &ArmTransmittances) -> (f64, f64, f64) {
    let (ta, tb) = (arms.alice, arms.bob);
    let pair = ta * tb;
    let single = ta * (1.0 - tb) + tb * (1.0 - ta);
    let vacuum = (1.0 - ta) * (1.0 - tb);
    (pair, single, vacuum)
}

/// Visibility factor N in [0, 1]: the fraction of coincidences carrying the
/// two-photon correlation once noise-count coincidences are counted in.
///
/// `eta_t` is the per-station total detection efficiency (detector times
/// collection), in (0, 1]. With `g = eta_t + 2 p_nc (1 - eta_t)` the
/// probability that a station fires given a surviving photon,
/// `N = pair * eta_t^2 / (pair g^2 + 2 single p_nc g + 4 vacuum p_nc^2)`.
pub fn visibility_factor(
    arms: &ArmTransmittances,
    eta_t: f64,
    p_nc: Probability,
) -> Result<f64> {
    if !(eta_t > 0.0 && eta_t <= 1.0) {
        return Err(Error::OutOfRange {
            name: "eta_t",
            value: eta_t,
            constraint: "0 < eta_t <= 1",
        });
    }
    let (pair, single, vacuum) = survival_partition(arms);
    let p = p_nc.value();
    let g = eta_t + 2.0 * p * (1.0 - eta_t);
    let denom = pair * g * g + 2.0 * single * p * g + 4.0 * vacuum * p * p;
    if denom <= 0.0 {
        return Err(Error::DegenerateRates);
    }
    Ok(pair * eta_t * eta_t / denom)
}

/// Two-party correlation coefficient at analyzer angles `theta_a`,
/// `theta_b`, pair phase `phase`, scaled by the visibility:
/// E = N * (-cos 2a cos 2b + cos(phase) sin 2a sin 2b).
pub fn correlation_coefficient(theta_a: f64, theta_b: f64, phase: f64, visibility: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&visibility));
    visibility
        * (-(2.0 * theta_a).cos() * (2.0 * theta_b).cos()
            + phase.cos() * (2.0 * theta_a).sin() * (2.0 * theta_b).sin())
}

/// CHSH parameter S = |E(a1,b1) + E(a1,b3) - E(a3,b1) + E(a3,b3)| from the
/// first and third analyzer angles of each party. At the default angles and
/// phase pi this reduces to 2*sqrt(2)*N.
pub fn bell_parameter(cfg: &AnalyzerConfig, visibility: f64) -> f64 {
    let a = cfg.alice_angles_rad;
    let b = cfg.bob_angles_rad;
    let e = |ta: f64, tb: f64| correlation_coefficient(ta, tb, cfg.phase_rad, visibility);
    (e(a[0], b[0]) + e(a[0], b[2]) - e(a[2], b[0]) + e(a[2], b[2])).abs()
}

/// QBER implied by a CHSH value under the maximally-entangled relation
/// S = 2*sqrt(2)*(1 - 2Q): Q = (1 - S / (2*sqrt(2))) / 2.
pub fn qber_from_bell(s: f64) -> Result<Probability> {
    if s.is_nan() || s < 0.0 || s > TWO_SQRT_2 + 1e-9 {
        return Err(Error::TsirelsonViolation { s });
    }
    Probability::new(((1.0 - s / TWO_SQRT_2) / 2.0).max(0.0))
}

/// Eve's information bound from a measured CHSH value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EveBound {
    /// I_E in bits; 1 when the correlations admit a local model.
    pub information: f64,
    /// True when S < 2, i.e. no Bell violation certifies the channel.
    pub below_locality: bool,
}

/// Device-independent bound on Eve's information,
/// I_E = h((1 + sqrt(S^2/4 - 1)) / 2) for S >= 2; for S < 2 the
/// correlations are classical and I_E = 1.
pub fn eve_information(s: f64) -> Result<EveBound> {
    if s.is_nan() || s < 0.0 || s > TWO_SQRT_2 + 1e-9 {
        return Err(Error::TsirelsonViolation { s });
    }
    if s < 2.0 {
        return Ok(EveBound { information: 1.0, below_locality: true });
    }
    let x = ((1.0 + (s * s / 4.0 - 1.0).sqrt()) / 2.0).min(1.0);
    Ok(EveBound { information: math::entropy(x), below_locality: false })
}

/// E91 secret key rate: max(0, 1/3 * nu_s * T * (1 - h(Q) - I_E(S))) bits/s.
/// The 1/3 is the sifting fraction of the three-angle analyzer sets.
pub fn skr_e91(qber: Probability, s: f64, t: Transmittance, nu_s: f64) -> Result<f64> {
    debug_assert!(nu_s >= 0.0 && nu_s.is_finite());
    let eve = eve_information(s)?;
    let bracket = 1.0 - math::binary_entropy(qber) - eve.information;
    Ok((nu_s * t.value() * bracket / 3.0).max(0.0))
}

/// E91 key rate with S derived from Q via S = 2*sqrt(2)*(1 - 2Q), for use
/// when only an error rate is known.
pub fn skr_e91_consistent(qber: Probability, t: Transmittance, nu_s: f64) -> Result<f64> {
    let s = TWO_SQRT_2 * (1.0 - 2.0 * qber.value());
    skr_e91(qber, s.max(0.0), t, nu_s)
}

/// Everything the E91 chain produces for one channel configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellDiagnostics {
    pub pair_prob: f64,
    pub single_prob: f64,
    pub vacuum_prob: f64,
    pub visibility: f64,
    pub s_chsh: f64,
}

impl BellDiagnostics {
    /// Evaluates the full chain: survival partition, visibility, CHSH value.
    pub fn evaluate(
        arms: &ArmTransmittances,
        eta_t: f64,
        p_nc: Probability,
        analyzer: &AnalyzerConfig,
    ) -> Result<Self> {
        analyzer.validate()?;
        let (pair_prob, single_prob, vacuum_prob) = survival_partition(arms);
        let visibility = visibility_factor(arms, eta_t, p_nc)?;
        let s_chsh = bell_parameter(analyzer, visibility);
        Ok(Self { pair_prob, single_prob, vacuum_prob, visibility, s_chsh })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arms(ta: f64, tb: f64) -> ArmTransmittances {
        ArmTransmittances::new(Transmittance::new(ta).unwrap(), Transmittance::new(tb).unwrap())
            .unwrap()
    }

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    #[test]
    fn partition_covers_all_outcomes() {
        assert_eq!(survival_partition(&arms(1.0, 1.0)), (1.0, 0.0, 0.0));
        let (pair, single, vacuum) = survival_partition(&arms(0.5, 0.5));
        assert_eq!((pair, single, vacuum), (0.25, 0.5, 0.25));
        let (pair, single, vacuum) = survival_partition(&arms(0.3, 0.8));
        assert!((pair + single + vacuum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn visibility_at_lossless_arms_and_low_noise() {
        let n = visibility_factor(&arms(1.0, 1.0), 0.36, p(1e-5)).unwrap();
        assert!((n - 0.9999288926813019).abs() < 1e-12);
    }

    #[test]
    fn visibility_with_heavy_loss_and_noise() {
        let n = visibility_factor(&arms(0.1, 0.1), 0.36, p(1e-4)).unwrap();
        assert!((n - 0.989374324470174).abs() < 1e-12);
    }

    #[test]
    fn visibility_is_one_without_noise_counts() {
        let n = visibility_factor(&arms(0.2, 0.7), 1.0, p(0.0)).unwrap();
        assert!((n - 1.0).abs() < 1e-15);
    }

    #[test]
    fn visibility_rejects_a_dead_station() {
        assert!(visibility_factor(&arms(0.5, 0.5), 0.0, p(1e-5)).is_err());
        assert!(visibility_factor(&arms(0.5, 0.5), 1.5, p(1e-5)).is_err());
    }

    #[test]
    fn correlation_at_reference_angles() {
        use std::f64::consts::{FRAC_PI_8, PI};
        let e = correlation_coefficient(FRAC_PI_8, 0.0, PI, 0.9);
        assert!((e - (-0.6363961030678928)).abs() < 1e-15);
        // Perfect anticorrelation at parallel analyzers, visibility 1.
        assert!((correlation_coefficient(0.0, 0.0, PI, 1.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn bell_parameter_is_linear_in_visibility() {
        let cfg = AnalyzerConfig::default();
        assert!((bell_parameter(&cfg, 1.0) - TWO_SQRT_2).abs() < 1e-12);
        assert_eq!(bell_parameter(&cfg, 0.0), 0.0);
        let s = bell_parameter(&cfg, 0.70711);
        assert!((s - 2.0000091041792785).abs() < 1e-9);
        for n in [0.1, 0.25, 0.5, 0.9] {
            assert!((bell_parameter(&cfg, n) - TWO_SQRT_2 * n).abs() < 1e-12);
        }
    }

    #[test]
    fn qber_from_bell_endpoints() {
        assert_eq!(qber_from_bell(TWO_SQRT_2).unwrap().value(), 0.0);
        let q = qber_from_bell(2.0).unwrap().value();
        assert!((q - 0.14644660940672627).abs() < 1e-15);
        assert_eq!(qber_from_bell(0.0).unwrap().value(), 0.5);
        assert!(matches!(qber_from_bell(2.9), Err(Error::TsirelsonViolation { .. })));
    }

    #[test]
    fn eve_bound_endpoints_and_a_midpoint() {
        let at_max = eve_information(TWO_SQRT_2).unwrap();
        assert_eq!(at_max.information, 0.0);
        assert!(!at_max.below_locality);
        let at_local = eve_information(2.0).unwrap();
        assert_eq!(at_local.information, 1.0);
        assert!(!at_local.below_locality);
        let mid = eve_information(2.5).unwrap();
        assert!((mid.information - 0.5435644431995964).abs() < 1e-12);
        let classical = eve_information(1.9).unwrap();
        assert_eq!(classical.information, 1.0);
        assert!(classical.below_locality);
    }

    #[test]
    fn skr_e91_reference_points() {
        let one = Transmittance::new(1.0).unwrap();
        let perfect = skr_e91(p(0.0), TWO_SQRT_2, one, 0.64e6).unwrap();
        assert!((perfect - 213333.33333333334).abs() < 1e-9);
        let golden =
            skr_e91(p(0.05), TWO_SQRT_2 * 0.9, Transmittance::new(0.1).unwrap(), 0.64e6).unwrap();
        assert!((golden - 4798.943786659555).abs() < 1e-9);
        // No key at the locality boundary, whatever the transmittance.
        assert_eq!(skr_e91(p(0.14644660940672627), 2.0, one, 0.64e6).unwrap(), 0.0);
        assert_eq!(skr_e91(p(0.3), 1.5, one, 0.64e6).unwrap(), 0.0);
    }

    #[test]
    fn skr_e91_consistent_matches_the_explicit_form() {
        let one = Transmittance::new(1.0).unwrap();
        for q in [0.0, 0.01, 0.05, 0.0714917588444842, 0.2] {
            let qp = p(q);
            let s = TWO_SQRT_2 * (1.0 - 2.0 * q);
            let a = skr_e91(qp, s, one, 0.64e6).unwrap();
            let b = skr_e91_consistent(qp, one, 0.64e6).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn key_rate_bracket_vanishes_before_the_locality_bound() {
        // The h(Q) term pushes the first zero of 1 - h(Q) - I_E(S(Q)) to
        // Q ~ 0.0715 (S ~ 2.424), well above S = 2.
        let one = Transmittance::new(1.0).unwrap();
        let q_zero = 0.0714917588444842;
        let s = |q: f64| TWO_SQRT_2 * (1.0 - 2.0 * q);
        assert!(skr_e91(p(q_zero - 1e-4), s(q_zero - 1e-4), one, 0.64e6).unwrap() > 0.0);
        assert_eq!(skr_e91(p(q_zero + 1e-4), s(q_zero + 1e-4), one, 0.64e6).unwrap(), 0.0);
        assert!((s(q_zero) - 2.424008664923085).abs() < 1e-12);
    }

    #[test]
    fn full_chain_at_zero_loss_and_defaults() {
        let arms = ArmTransmittances::from_total(Transmittance::new(1.0).unwrap(), ArmSplit::SqrtTotal)
            .unwrap();
        let diag =
            BellDiagnostics::evaluate(&arms, 0.36, p(1e-5), &AnalyzerConfig::default()).unwrap();
        assert!((diag.s_chsh - 2.8282260028772166).abs() < 1e-9);
        assert!((diag.pair_prob - 1.0).abs() < 1e-15);
        let q = qber_from_bell(diag.s_chsh).unwrap();
        assert!((q.value() - 3.555365934904131e-5).abs() < 1e-12);
        let skr = skr_e91(q, diag.s_chsh, Transmittance::new(1.0).unwrap(), 0.64e6).unwrap();
        assert!((skr - 212979.36782017388).abs() < 1e-6);
    }

    #[test]
    fn arm_split_conventions() {
        let total = Transmittance::new(0.25).unwrap();
        let sqrt = ArmTransmittances::from_total(total, ArmSplit::SqrtTotal).unwrap();
        assert!((sqrt.alice() - 0.5).abs() < 1e-15);
        assert!((sqrt.alice() * sqrt.bob() - 0.25).abs() < 1e-15);
        let per_arm = ArmTransmittances::from_total(total, ArmSplit::PerArm).unwrap();
        assert_eq!(per_arm.alice(), 0.25);
        assert!(ArmTransmittances::from_total(Transmittance::new(0.0).unwrap(), ArmSplit::SqrtTotal)
            .is_err());
    }
}
