//! QBER and secret key rate for the prepare-and-measure single-photon
//! protocols BB84 and six-state.
//!
//! The error model combines a loss-independent optical misalignment error
//! `p_opt` with noise counts (dark/background) that compete with the
//! attenuated signal: the noise term is `beta * p_nc * n / (T * eta * q * mu)`,
//! where `beta` is the fraction of noise clicks that land in the wrong bin
//! after sifting (1/2 for BB84's two bases, 2/3 for the six-state set).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, bisect_root, LossDb, Probability, Tolerance, Transmittance};

/// Detector and source imperfections shared by the single-photon protocols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    /// Detector efficiency, in (0, 1].
    pub eta: f64,
    /// Noise-count probability per detector per gate, in [0, 1).
    pub p_nc: f64,
    /// Optical misalignment error probability, in [0, 0.5).
    pub p_opt: f64,
    /// Number of gated detectors contributing noise counts, >= 1.
    pub n: u32,
    /// Basis/path factor: 0.5 for passive basis selection, 1.0 for active.
    pub q: f64,
    /// Mean photon number per gate, > 0.
    pub mu: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self { eta: 0.6, p_nc: 1e-5, p_opt: 1e-3, n: 4, q: 0.5, mu: 1.0 }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::OutOfRange {
                name: "device.eta",
                value: self.eta,
                constraint: "0 < eta <= 1",
            });
        }
        if !(0.0..1.0).contains(&self.p_nc) {
            return Err(Error::OutOfRange {
                name: "device.p_nc",
                value: self.p_nc,
                constraint: "0 <= p_nc < 1",
            });
        }
        if !(0.0..0.5).contains(&self.p_opt) {
            return Err(Error::OutOfRange {
                name: "device.p_opt",
                value: self.p_opt,
                constraint: "0 <= p_opt < 0.5",
            });
        }
        if self.n < 1 {
            return Err(Error::OutOfRange {
                name: "device.n",
                value: f64::from(self.n),
                constraint: "n >= 1",
            });
        }
        if self.q != 0.5 && self.q != 1.0 {
            return Err(Error::OutOfRange {
                name: "device.q",
                value: self.q,
                constraint: "q in {0.5, 1.0}",
            });
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::OutOfRange {
                name: "device.mu",
                value: self.mu,
                constraint: "mu > 0 and finite",
            });
        }
        Ok(())
    }
}

/// The two prepare-and-measure protocols covered by this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleProtocolKind {
    Bb84,
    SixState,
}

impl SingleProtocolKind {
    /// Fraction of noise clicks scored as errors after sifting.
    pub fn noise_fraction(self) -> f64 {
        match self {
            SingleProtocolKind::Bb84 => 0.5,
            SingleProtocolKind::SixState => 2.0 / 3.0,
        }
    }

    /// Fraction of detections surviving basis reconciliation.
    pub fn sift_fraction(self) -> f64 {
        match self {
            SingleProtocolKind::Bb84 => 0.5,
            SingleProtocolKind::SixState => 1.0 / 3.0,
        }
    }

    /// Unconditional-security QBER threshold where the key rate vanishes.
    pub fn qber_threshold(self) -> f64 {
        match self {
            SingleProtocolKind::Bb84 => 0.11,
            SingleProtocolKind::SixState => 0.126,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SingleProtocolKind::Bb84 => "bb84",
            SingleProtocolKind::SixState => "six-state",
        }
    }
}

/// A QBER value together with a saturation flag. The first-order error
/// model exceeds 0.5 at extreme loss; such values are reported as-is with
/// `saturated` set so sweeps can traverse the region gracefully.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QberOutcome {
    pub value: f64,
    pub saturated: bool,
}

/// QBER of a single-photon protocol over a channel of transmittance `t`.
pub fn qber_single(
    kind: SingleProtocolKind,
    dev: &DeviceParams,
    t: Transmittance,
) -> Result<QberOutcome> {
    dev.validate()?;
    if t.value() == 0.0 {
        return Err(Error::DegenerateChannel);
    }
    let noise = kind.noise_fraction() * dev.p_nc * f64::from(dev.n)
        / (t.value() * dev.eta * dev.q * dev.mu);
    let value = dev.p_opt + noise;
    Ok(QberOutcome { value, saturated: value >= 0.5 })
}

/// BB84 secret key rate: max(0, 1/2 * nu_s * T * (1 - 2 h(Q))) bits/s.
pub fn skr_bb84(qber: Probability, t: Transmittance, nu_s: f64) -> f64 {
    debug_assert!(nu_s >= 0.0 && nu_s.is_finite());
    let bracket = 1.0 - 2.0 * math::binary_entropy(qber);
    (0.5 * nu_s * t.value() * bracket).max(0.0)
}

/// Six-state secret key rate:
/// max(0, 1/3 * nu_s * T * [1 + (3Q/2) log2(Q/2) + (1 - 3Q/2) log2(1 - 3Q/2)])
/// bits/s. For Q >= 2/3 the bracket diverges to -inf and the rate is 0.
pub fn skr_six_state(qber: Probability, t: Transmittance, nu_s: f64) -> f64 {
    debug_assert!(nu_s >= 0.0 && nu_s.is_finite());
    let q = qber.value();
    let x = 1.0 - 1.5 * q;
    if x < 0.0 {
        return 0.0;
    }
    // 0*log(0) = 0 at both degenerate corners.
    let term_q = if q > 0.0 { 1.5 * q * (q / 2.0).log2() } else { 0.0 };
    let term_x = if x > 0.0 { x * x.log2() } else { 0.0 };
    let bracket = 1.0 + term_q + term_x;
    (nu_s * t.value() * bracket / 3.0).max(0.0)
}

/// Channel loss (dB) at which the protocol QBER reaches its threshold,
/// searched on [0, ceiling_db] and bisected to well under 0.01 dB.
///
/// Returns [`Tolerance::ExceedsCeiling`] when the QBER stays below the
/// threshold over the whole range (e.g. p_nc = 0), and an error when the
/// QBER is already at the threshold with no loss applied.
pub fn loss_tolerance_single(
    kind: SingleProtocolKind,
    dev: &DeviceParams,
    ceiling_db: f64,
) -> Result<Tolerance> {
    dev.validate()?;
    let threshold = kind.qber_threshold();
    let at = |loss_db: f64| -> Result<f64> {
        let t = Transmittance::from_loss_db(LossDb::new(loss_db)?);
        Ok(qber_single(kind, dev, t)?.value)
    };
    let q0 = at(0.0)?;
    if q0 >= threshold {
        return Err(Error::NoTolerance { qber: q0, threshold });
    }
    if at(ceiling_db)? < threshold {
        return Ok(Tolerance::ExceedsCeiling(ceiling_db));
    }
    let root = bisect_root(
        |loss| at(loss).expect("loss in [0, ceiling] is valid") - threshold,
        0.0,
        ceiling_db,
        1e-3,
    )?;
    Ok(Tolerance::CrossesAt(root))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(loss_db: f64) -> Transmittance {
        Transmittance::from_loss_db(LossDb::new(loss_db).unwrap())
    }

    fn p(q: f64) -> Probability {
        Probability::new(q).unwrap()
    }

    #[test]
    fn qber_at_perfect_transmission_is_dominated_by_p_opt() {
        let dev = DeviceParams::default();
        let q = qber_single(SingleProtocolKind::Bb84, &dev, Transmittance::new(1.0).unwrap()).unwrap();
        assert!((q.value - 0.0010666666666666667).abs() < 1e-15);
        assert!(!q.saturated);
    }

    #[test]
    fn qber_at_the_30_km_reference_link() {
        let dev = DeviceParams::default();
        let t30k = Transmittance::new(8.61964480053046e-4).unwrap();
        let qb = qber_single(SingleProtocolKind::Bb84, &dev, t30k).unwrap();
        assert!((qb.value - 0.07834270751222133).abs() < 1e-12);
        let qs = qber_single(SingleProtocolKind::SixState, &dev, t30k).unwrap();
        assert!((qs.value - 0.10412361001629511).abs() < 1e-12);
    }

    #[test]
    fn six_state_qber_dominates_bb84_pointwise() {
        let dev = DeviceParams::default();
        for loss in [0.0, 10.0, 20.0, 30.0, 40.0] {
            let qb = qber_single(SingleProtocolKind::Bb84, &dev, t(loss)).unwrap().value;
            let qs = qber_single(SingleProtocolKind::SixState, &dev, t(loss)).unwrap().value;
            assert!(qs >= qb, "six-state noise fraction 2/3 must dominate 1/2");
        }
    }

    #[test]
    fn qber_saturates_at_extreme_loss() {
        let dev = DeviceParams::default();
        let q = qber_single(SingleProtocolKind::Bb84, &dev, t(60.0)).unwrap();
        assert!(q.saturated);
        assert!(q.value > 0.5);
    }

    #[test]
    fn qber_rejects_zero_transmittance() {
        let dev = DeviceParams::default();
        let err = qber_single(SingleProtocolKind::Bb84, &dev, Transmittance::new(0.0).unwrap());
        assert!(matches!(err, Err(Error::DegenerateChannel)));
    }

    #[test]
    fn skr_bb84_reference_points() {
        // Zero error: half the sifted rate survives privacy amplification.
        assert_eq!(skr_bb84(p(0.0), Transmittance::new(1.0).unwrap(), 0.64e6), 320_000.0);
        // At the 11% threshold the bracket is ~1.7e-4, giving ~54 bits/s at T=1.
        let near_zero = skr_bb84(p(0.11), Transmittance::new(1.0).unwrap(), 0.64e6);
        assert!((near_zero - 53.786774702082596).abs() < 1e-6);
        assert!(near_zero < 0.64e6 * 1e-3);
        // 30 km reference link.
        let skr = skr_bb84(p(0.0783), Transmittance::new(8.63e-4).unwrap(), 0.64e6);
        assert!((skr - 57.35256357169125).abs() < 1e-9);
    }

    #[test]
    fn skr_bb84_is_zero_above_threshold() {
        assert_eq!(skr_bb84(p(0.12), Transmittance::new(1.0).unwrap(), 0.64e6), 0.0);
        assert_eq!(skr_bb84(p(0.5), Transmittance::new(1.0).unwrap(), 0.64e6), 0.0);
    }

    #[test]
    fn skr_six_state_reference_points() {
        let one = Transmittance::new(1.0).unwrap();
        assert!((skr_six_state(p(0.0), one, 0.64e6) - 213333.33333333334).abs() < 1e-9);
        let mid = skr_six_state(p(0.05), one, 0.64e6);
        assert!((mid - 105987.47057480877).abs() < 1e-6);
        // At the 12.6% threshold the bracket is ~1e-3 of its zero-error value.
        let near_zero = skr_six_state(p(0.126), one, 0.64e6);
        assert!((near_zero - 227.6785919158364).abs() < 1e-6);
        assert!(near_zero < 0.64e6 * 2e-3);
    }

    #[test]
    fn skr_six_state_handles_the_degenerate_corner() {
        let one = Transmittance::new(1.0).unwrap();
        assert_eq!(skr_six_state(p(2.0 / 3.0), one, 0.64e6), 0.0);
        assert_eq!(skr_six_state(p(0.9), one, 0.64e6), 0.0);
    }

    #[test]
    fn skr_is_linear_in_rate_and_transmittance() {
        let q = p(0.03);
        let a = skr_bb84(q, Transmittance::new(0.5).unwrap(), 0.64e6);
        let b = skr_bb84(q, Transmittance::new(1.0).unwrap(), 0.32e6);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn loss_tolerance_bb84_under_the_active_basis_convention() {
        let dev = DeviceParams { eta: 0.4, q: 1.0, ..DeviceParams::default() };
        let tol = loss_tolerance_single(SingleProtocolKind::Bb84, &dev, 200.0).unwrap();
        let db = tol.crossing_db().expect("crossing exists");
        assert!((db - 33.38456493604605).abs() < 0.01);
    }

    #[test]
    fn loss_tolerance_bb84_under_the_passive_basis_convention() {
        let dev = DeviceParams { eta: 0.4, ..DeviceParams::default() };
        let db = loss_tolerance_single(SingleProtocolKind::Bb84, &dev, 200.0)
            .unwrap()
            .crossing_db()
            .unwrap();
        assert!((db - 30.374264979406238).abs() < 0.01);
        let dev6 = DeviceParams { eta: 0.6, ..DeviceParams::default() };
        let db6 = loss_tolerance_single(SingleProtocolKind::Bb84, &dev6, 200.0)
            .unwrap()
            .crossing_db()
            .unwrap();
        assert!((db6 - 32.13517756996305).abs() < 0.01);
    }

    #[test]
    fn loss_tolerance_six_state_lands_below_bb84_at_shared_parameters() {
        // The 2/3 noise fraction costs more loss budget than the higher
        // 12.6% threshold recovers when p_opt is small: six-state crosses
        // ~0.65 dB earlier at every eta.
        for eta in [0.4, 0.6, 0.8] {
            let dev = DeviceParams { eta, ..DeviceParams::default() };
            let bb = loss_tolerance_single(SingleProtocolKind::Bb84, &dev, 200.0)
                .unwrap()
                .crossing_db()
                .unwrap();
            let six = loss_tolerance_single(SingleProtocolKind::SixState, &dev, 200.0)
                .unwrap()
                .crossing_db()
                .unwrap();
            assert!((bb - six - 0.6489590667775301).abs() < 0.01);
        }
    }

    #[test]
    fn loss_tolerance_six_state_under_the_two_detector_active_convention() {
        let dev = DeviceParams { eta: 0.4, q: 1.0, n: 2, ..DeviceParams::default() };
        let db = loss_tolerance_single(SingleProtocolKind::SixState, &dev, 200.0)
            .unwrap()
            .crossing_db()
            .unwrap();
        assert!((db - 35.74031267727719).abs() < 0.01);
    }

    #[test]
    fn loss_tolerance_errors_when_already_above_threshold() {
        let dev = DeviceParams { p_opt: 0.2, ..DeviceParams::default() };
        // 0.2 optical error plus noise exceeds 0.11 immediately at p_nc high.
        let dev = DeviceParams { p_nc: 0.1, ..dev };
        let err = loss_tolerance_single(SingleProtocolKind::Bb84, &dev, 200.0);
        assert!(matches!(err, Err(Error::NoTolerance { .. })));
    }

    #[test]
    fn loss_tolerance_reports_a_ceiling_when_noise_free() {
        let dev = DeviceParams { p_nc: 0.0, ..DeviceParams::default() };
        let tol = loss_tolerance_single(SingleProtocolKind::Bb84, &dev, 200.0).unwrap();
        assert_eq!(tol, Tolerance::ExceedsCeiling(200.0));
    }

    #[test]
    fn validation_rejects_out_of_range_devices() {
        for dev in [
            DeviceParams { eta: 0.0, ..DeviceParams::default() },
            DeviceParams { eta: 1.5, ..DeviceParams::default() },
            DeviceParams { p_nc: 1.0, ..DeviceParams::default() },
            DeviceParams { p_opt: 0.5, ..DeviceParams::default() },
            DeviceParams { n: 0, ..DeviceParams::default() },
            DeviceParams { q: 0.7, ..DeviceParams::default() },
            DeviceParams { mu: 0.0, ..DeviceParams::default() },
        ] {
            assert!(dev.validate().is_err(), "{dev:?} must be rejected");
        }
        assert!(DeviceParams::default().validate().is_ok());
        assert!(DeviceParams { q: 1.0, ..DeviceParams::default() }.validate().is_ok());
    }

    #[test]
    fn qber_is_monotone_in_the_driving_parameters() {
        let dev = DeviceParams::default();
        let q = |d: &DeviceParams, tr: f64| {
            qber_single(SingleProtocolKind::Bb84, d, Transmittance::new(tr).unwrap())
                .unwrap()
                .value
        };
        assert!(q(&dev, 0.5) > q(&dev, 1.0), "decreasing in T");
        let more_eta = DeviceParams { eta: 0.8, ..dev };
        assert!(q(&more_eta, 0.5) < q(&dev, 0.5), "decreasing in eta");
        let more_noise = DeviceParams { p_nc: 1e-4, ..dev };
        assert!(q(&more_noise, 0.5) > q(&dev, 0.5), "increasing in p_nc");
        let more_detectors = DeviceParams { n: 6, ..dev };
        assert!(q(&more_detectors, 0.5) > q(&dev, 0.5), "increasing in n");
        let more_popt = DeviceParams { p_opt: 0.01, ..dev };
        assert!(q(&more_popt, 0.5) > q(&dev, 0.5), "increasing in p_opt");
        let brighter = DeviceParams { mu: 2.0, ..dev };
        assert!(q(&brighter, 0.5) < q(&dev, 0.5), "decreasing in mu");
    }
}
