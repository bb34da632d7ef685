//! Entanglement-based BBM92: coincidence bookkeeping with accidental
//! counts, intrinsic source error, and the error-corrected key rate.
//!
//! One photon of each pair is detected locally (or both travel, for a
//! source placed mid-link); true coincidences arrive at rate `r_c` scaled by
//! the channel, while uncorrelated singles and noise counts fall into the
//! coincidence window `tau_c` at random, producing accidental coincidences
//! that carry a random bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, bisect_root, LossDb, Probability, Tolerance, Transmittance};

/// Pair-source and detection-chain parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntangledSourceParams {
    /// Singles rate at Alice's detectors, r_1 (counts/s).
    pub singles_rate_alice: f64,
    /// Singles rate at Bob's detectors, r_2 (counts/s).
    pub singles_rate_bob: f64,
    /// True coincidence rate r_c (counts/s). When omitted it is derived as
    /// eta^2 * eta_c^2 * r_1 from the efficiencies below.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coincidence_rate: Option<f64>,
    /// Coincidence window tau_c (s).
    pub coincidence_window_s: f64,
    /// Intrinsic source error rate q_i, in [0, 0.5).
    pub intrinsic_qber: f64,
    /// Detector efficiency eta at the stations, in (0, 1].
    pub detector_efficiency: f64,
    /// Collection efficiency eta_c into the transmission mode, in (0, 1].
    pub collection_efficiency: f64,
}

impl Default for EntangledSourceParams {
    fn default() -> Self {
        Self {
            singles_rate_alice: 0.64e6,
            singles_rate_bob: 0.64e6,
            coincidence_rate: None,
            coincidence_window_s: 2e-9,
            intrinsic_qber: 0.043,
            detector_efficiency: 0.6,
            collection_efficiency: 0.6,
        }
    }
}

impl EntangledSourceParams {
    /// The coincidence rate in effect: the explicit value if set, otherwise
    /// eta^2 * eta_c^2 * r_1.
    pub fn resolved_coincidence_rate(&self) -> f64 {
        self.coincidence_rate.unwrap_or_else(|| {
            let eff = self.detector_efficiency * self.collection_efficiency;
            eff * eff * self.singles_rate_alice
        })
    }

    /// Returns a copy with a new detector efficiency and the coincidence
    /// rate re-derived from it (any explicit override is cleared).
    pub fn with_detector_efficiency(&self, eta: f64) -> Self {
        Self { detector_efficiency: eta, coincidence_rate: None, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        for (value, name) in [
            (self.singles_rate_alice, "source.singles_rate_alice"),
            (self.singles_rate_bob, "source.singles_rate_bob"),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::OutOfRange { name, value, constraint: "rate >= 0 and finite" });
            }
        }
        // tau_c = 0 is allowed as the no-accidentals limit.
        if !(self.coincidence_window_s >= 0.0 && self.coincidence_window_s.is_finite()) {
            return Err(Error::OutOfRange {
                name: "source.coincidence_window_s",
                value: self.coincidence_window_s,
                constraint: "tau_c >= 0 and finite",
            });
        }
        if !(0.0..0.5).contains(&self.intrinsic_qber) {
            return Err(Error::OutOfRange {
                name: "source.intrinsic_qber",
                value: self.intrinsic_qber,
                constraint: "0 <= q_i < 0.5",
            });
        }
        for (value, name) in [
            (self.detector_efficiency, "source.detector_efficiency"),
            (self.collection_efficiency, "source.collection_efficiency"),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::OutOfRange { name, value, constraint: "0 < eff <= 1" });
            }
        }
        let rc = self.resolved_coincidence_rate();
        if !(rc >= 0.0 && rc.is_finite())
            || rc > self.singles_rate_alice
            || rc > self.singles_rate_bob
        {
            return Err(Error::OutOfRange {
                name: "source.coincidence_rate",
                value: rc,
                constraint: "0 <= r_c <= min(r_1, r_2)",
            });
        }
        Ok(())
    }
}

/// Where the pair source sits relative to the lossy channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePlacement {
    /// Source at Alice's station: her photon is detected locally, Bob's
    /// photon takes the whole channel.
    #[default]
    AtAlice,
    /// Source mid-link: both photons take the channel; singles on both
    /// sides are attenuated.
    InMiddle,
}

impl SourcePlacement {
    pub fn label(self) -> &'static str {
        match self {
            SourcePlacement::AtAlice => "at_alice",
            SourcePlacement::InMiddle => "in_middle",
        }
    }
}

/// Two-photon interference visibilities in the two measured bases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Visibilities {
    /// Visibility in the H/V basis.
    pub v_hv: f64,
    /// Visibility in the +/-45 degree basis.
    pub v_pm45: f64,
}

/// Intrinsic source error rate q_i = (1 - (V_HV + V_pm45)/2) / 2.
pub fn intrinsic_qber(v: &Visibilities) -> Result<Probability> {
    for (value, name) in [(v.v_hv, "visibility.v_hv"), (v.v_pm45, "visibility.v_pm45")] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange { name, value, constraint: "0 <= V <= 1" });
        }
    }
    Probability::new((1.0 - (v.v_hv + v.v_pm45) / 2.0) / 2.0)
}

/// Sifted true-coincidence rate, r_sig = 1/2 * r_c * T (counts/s).
pub fn signal_rate(src: &EntangledSourceParams, t: Transmittance) -> f64 {
    0.5 * src.resolved_coincidence_rate() * t.value()
}

/// The two uncorrelated click rates whose product drives accidentals:
/// Alice-side and Bob-side singles left after removing true coincidences,
/// plus noise counts. `p_nc * r_i` models the noise-count background.
fn accidental_brackets(
    src: &EntangledSourceParams,
    t: Transmittance,
    placement: SourcePlacement,
    p_nc: Probability,
) -> Result<(f64, f64)> {
    src.validate()?;
    let rc = src.resolved_coincidence_rate();
    let (r1, r2) = (src.singles_rate_alice, src.singles_rate_bob);
    let (p, tv) = (p_nc.value(), t.value());
    let (a, b) = match placement {
        SourcePlacement::AtAlice => (r1 - tv * rc, p * r2 + tv * (r2 - rc)),
        SourcePlacement::InMiddle => (p * r1 + tv * (r1 - rc), p * r2 + tv * (r2 - rc)),
    };
    if a < 0.0 || b < 0.0 {
        return Err(Error::InconsistentRates {
            detail: format!(
                "uncorrelated rates (alice {a:.3}, bob {b:.3}) with r_c = {rc:.3} at T = {tv:.6}"
            ),
        });
    }
    Ok((a, b))
}

/// Sifted accidental-coincidence rate, 1/2 * r_A * r_B * tau_c (counts/s),
/// where r_A, r_B are the uncorrelated click rates on the two sides.
pub fn accidental_rate(
    src: &EntangledSourceParams,
    t: Transmittance,
    placement: SourcePlacement,
    p_nc: Probability,
) -> Result<f64> {
    let (a, b) = accidental_brackets(src, t, placement, p_nc)?;
    Ok(0.5 * a * b * src.coincidence_window_s)
}

/// BBM92 QBER: accidentals carry a random bit (error rate 1/2), true
/// coincidences err at the intrinsic rate q_i:
/// Q = (q_i * r_sig + 1/2 * r_acc) / (r_sig + r_acc).
pub fn qber_bbm92(
    src: &EntangledSourceParams,
    t: Transmittance,
    placement: SourcePlacement,
    p_nc: Probability,
) -> Result<Probability> {
    let r_sig = signal_rate(src, t);
    let r_acc = accidental_rate(src, t, placement, p_nc)?;
    let total = r_sig + r_acc;
    if total <= 0.0 {
        return Err(Error::DegenerateRates);
    }
    Probability::new((src.intrinsic_qber * r_sig + 0.5 * r_acc) / total)
}

/// Error-correction inefficiency f(Q) >= 1, piecewise linear in Q with
/// clamped extrapolation beyond the outermost knots.
#[derive(Debug, Clone, PartialEq)]
pub struct EcInefficiency {
    knots: Vec<(f64, f64)>,
}

impl Default for EcInefficiency {
    /// The conventional flat 1.2 multiplier.
    fn default() -> Self {
        Self::constant(1.2)
    }
}

impl EcInefficiency {
    pub fn constant(f: f64) -> Self {
        Self { knots: vec![(0.0, f)] }
    }

    /// Builds a table from (Q, f) pairs; Q strictly increasing in [0, 0.5],
    /// every f >= 1.
    pub fn from_table(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Ok(Self::default());
        }
        let mut prev = -1.0;
        for &(q, f) in &knots {
            if !(0.0..=0.5).contains(&q) || q <= prev {
                return Err(Error::OutOfRange {
                    name: "fq_table.q",
                    value: q,
                    constraint: "strictly increasing Q in [0, 0.5]",
                });
            }
            if !(f >= 1.0 && f.is_finite()) {
                return Err(Error::OutOfRange {
                    name: "fq_table.f",
                    value: f,
                    constraint: "f >= 1",
                });
            }
            prev = q;
        }
        Ok(Self { knots })
    }

    /// f at error rate `q`, linearly interpolated.
    pub fn at(&self, q: f64) -> f64 {
        let first = self.knots[0];
        if q <= first.0 {
            return first.1;
        }
        for pair in self.knots.windows(2) {
            let (q0, f0) = pair[0];
            let (q1, f1) = pair[1];
            if q <= q1 {
                return f0 + (f1 - f0) * (q - q0) / (q1 - q0);
            }
        }
        self.knots[self.knots.len() - 1].1
    }
}

/// BBM92 secret key rate:
/// max(0, 1/2 * nu_s * T * [1 - f(Q) h(Q) - h(Q)]) bits/s.
pub fn skr_bbm92(qber: Probability, t: Transmittance, nu_s: f64, f: &EcInefficiency) -> f64 {
    debug_assert!(nu_s >= 0.0 && nu_s.is_finite());
    let h = math::binary_entropy(qber);
    let bracket = 1.0 - (1.0 + f.at(qber.value())) * h;
    (0.5 * nu_s * t.value() * bracket).max(0.0)
}

/// Channel loss (dB) at which the BBM92 key rate reaches zero, searched on
/// [0, ceiling_db]. Errors when the rate is already zero with no loss;
/// reports the ceiling when accidentals never swamp the signal (e.g.
/// tau_c = 0).
pub fn loss_tolerance_bbm92(
    src: &EntangledSourceParams,
    placement: SourcePlacement,
    p_nc: Probability,
    f: &EcInefficiency,
    ceiling_db: f64,
) -> Result<Tolerance> {
    src.validate()?;
    let bracket_at = |loss_db: f64| -> Result<f64> {
        let t = Transmittance::from_loss_db(LossDb::new(loss_db)?);
        let q = qber_bbm92(src, t, placement, p_nc)?;
        let h = math::binary_entropy(q);
        Ok(1.0 - (1.0 + f.at(q.value())) * h)
    };
    let b0 = bracket_at(0.0)?;
    if b0 <= 0.0 {
        let q0 = qber_bbm92(src, Transmittance::new(1.0)?, placement, p_nc)?;
        return Err(Error::NoTolerance { qber: q0.value(), threshold: f64::NAN });
    }
    if bracket_at(ceiling_db)? > 0.0 {
        return Ok(Tolerance::ExceedsCeiling(ceiling_db));
    }
    let root = bisect_root(
        |loss| bracket_at(loss).expect("loss in [0, ceiling] is valid"),
        0.0,
        ceiling_db,
        1e-3,
    )?;
    Ok(Tolerance::CrossesAt(root))
}
