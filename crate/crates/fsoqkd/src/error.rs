//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar parameter failed its range check.
    #[error("{name} = {value} violates {constraint}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    /// Bisection was called on a bracket without a sign change.
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo:.6e}, f(hi) = {f_hi:.6e}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    /// Zero transmittance makes the noise-to-signal ratio diverge.
    #[error("channel transmittance is zero; the noise term diverges")]
    DegenerateChannel,
    /// The error rate is already at or above the protocol threshold with no
    /// channel loss applied, so no loss tolerance exists.
    #[error("QBER {qber:.4} is at or above the threshold {threshold:.4} at 0 dB")]
    NoTolerance { qber: f64, threshold: f64 },
    /// A Bell parameter above the quantum bound was supplied.
    #[error("S = {s:.6} exceeds the Tsirelson bound 2*sqrt(2)")]
    TsirelsonViolation { s: f64 },
    /// Singles and coincidence rates are mutually inconsistent.
    #[error("rate bracket went negative: {detail}")]
    InconsistentRates { detail: String },
    /// Signal and accidental rates are both zero, leaving QBER undefined.
    #[error("signal and accidental rates are both zero; QBER is undefined")]
    DegenerateRates,
    /// A Monte Carlo run produced no sifted events.
    #[error("no sifted events after {trials} trials; cannot estimate QBER")]
    InsufficientStatistics { trials: u64 },
    /// A simulation was invoked with the wrong scenario variant.
    #[error("scenario mismatch: this simulation expects a {expected} scenario")]
    ScenarioMismatch { expected: &'static str },
    /// Sweep specifications disagree on the loss grid.
    #[error("loss grids differ between sweep specs: {detail}")]
    GridMismatch { detail: String },
    /// Configuration document rejected.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
