//! Parameter sweeps over channel loss, threshold searches, protocol
//! comparisons, and the built-in reference-table reports.
//!
//! All sweeps emit rows in a canonical order (loss outer, then eta, then
//! p_nc) independent of execution parallelism, so CSV artifacts are
//! diff-able across runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bbm92::{self, EcInefficiency, SourcePlacement};
use crate::channel::{self, AlphaUnit, ChannelParams};
use crate::config::RunConfig;
use crate::e91::{self, ArmTransmittances, BellDiagnostics};
use crate::error::{Error, Result};
use crate::math::{LossDb, Probability, Tolerance, Transmittance};
use crate::single_photon::{self, DeviceParams, SingleProtocolKind};

/// Default ceiling for open-ended threshold searches (dB).
pub const DEFAULT_CEILING_DB: f64 = 200.0;

/// QBER at which the E91 CHSH parameter reaches the locality bound S = 2.
pub const E91_QBER_THRESHOLD: f64 = 0.14644660940672627;

/// A protocol selection, including the source placement for BBM92.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Bb84,
    SixState,
    E91,
    Bbm92(SourcePlacement),
}

impl Protocol {
    /// Short machine-readable name (placement reported separately).
    pub fn label(self) -> &'static str {
        match self {
            Protocol::Bb84 => "bb84",
            Protocol::SixState => "six-state",
            Protocol::E91 => "e91",
            Protocol::Bbm92(_) => "bbm92",
        }
    }

    /// Placement tag for the CSV placement column; empty when not a BBM92 run.
    pub fn placement_label(self) -> &'static str {
        match self {
            Protocol::Bbm92(p) => p.label(),
            _ => "",
        }
    }

    /// Unique column label for comparison tables.
    pub fn display_label(self) -> String {
        match self {
            Protocol::Bbm92(p) => format!("bbm92:{}", p.label()),
            other => other.label().to_string(),
        }
    }

    /// QBER threshold used for threshold-crossing searches.
    pub fn qber_threshold(self) -> f64 {
        match self {
            Protocol::Bb84 => 0.11,
            Protocol::SixState => 0.126,
            Protocol::E91 => E91_QBER_THRESHOLD,
            Protocol::Bbm92(_) => 0.11,
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bb84" => Ok(Protocol::Bb84),
            "six-state" | "six_state" | "sixstate" | "six" => Ok(Protocol::SixState),
            "e91" => Ok(Protocol::E91),
            "bbm92" | "bbm92-alice" | "bbm92_alice" => Ok(Protocol::Bbm92(SourcePlacement::AtAlice)),
            "bbm92-middle" | "bbm92_middle" => Ok(Protocol::Bbm92(SourcePlacement::InMiddle)),
            other => Err(Error::Config(format!(
                "unknown protocol '{other}' (expected bb84, six-state, e91, bbm92[-alice|-middle])"
            ))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_label())
    }
}

/// An inclusive arithmetic loss grid in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGrid {
    pub start_db: f64,
    pub stop_db: f64,
    pub step_db: f64,
}

impl LossGrid {
    pub fn new(start_db: f64, stop_db: f64, step_db: f64) -> Result<Self> {
        let grid = Self { start_db, stop_db, step_db };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start_db >= 0.0 && self.start_db.is_finite()) {
            return Err(Error::OutOfRange {
                name: "loss.start_db",
                value: self.start_db,
                constraint: "start >= 0 and finite",
            });
        }
        if !(self.stop_db >= self.start_db && self.stop_db.is_finite()) {
            return Err(Error::OutOfRange {
                name: "loss.stop_db",
                value: self.stop_db,
                constraint: "stop >= start and finite",
            });
        }
        if !(self.step_db > 0.0 && self.step_db.is_finite()) {
            return Err(Error::OutOfRange {
                name: "loss.step_db",
                value: self.step_db,
                constraint: "step > 0 and finite",
            });
        }
        Ok(())
    }

    /// Grid values start, start+step, ... up to stop (inclusive up to a
    /// relative epsilon on the step).
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop_db - self.start_db) / self.step_db + 1e-9).floor() as usize;
        (0..=count).map(|i| self.start_db + i as f64 * self.step_db).collect()
    }
}

/// A full sweep request: protocol, loss grid, device grids, fixed config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub protocol: Protocol,
    pub loss: LossGrid,
    pub eta_values: Vec<f64>,
    pub p_nc_values: Vec<f64>,
    pub fixed: RunConfig,
}

impl SweepSpec {
    /// A single-cell grid at the config's own eta and p_nc.
    pub fn point(protocol: Protocol, loss: LossGrid, fixed: RunConfig) -> Self {
        let eta = fixed.device.eta;
        let p_nc = fixed.device.p_nc;
        Self { protocol, loss, eta_values: vec![eta], p_nc_values: vec![p_nc], fixed }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.eta_values.is_empty() {
            return Err(Error::OutOfRange {
                name: "eta_values",
                value: 0.0,
                constraint: "at least one eta",
            });
        }
        if self.p_nc_values.is_empty() {
            return Err(Error::OutOfRange {
                name: "p_nc_values",
                value: 0.0,
                constraint: "at least one p_nc",
            });
        }
        for &eta in &self.eta_values {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::OutOfRange {
                    name: "eta_values",
                    value: eta,
                    constraint: "0 < eta <= 1",
                });
            }
        }
        for &p_nc in &self.p_nc_values {
            if !(0.0..1.0).contains(&p_nc) {
                return Err(Error::OutOfRange {
                    name: "p_nc_values",
                    value: p_nc,
                    constraint: "0 <= p_nc < 1",
                });
            }
        }
        self.fixed.validate()
    }
}

/// Row status in sweep output.
#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Ok,
    /// QBER formula exceeded 0.5; value reported, key rate forced to 0.
    Saturated,
    /// E91 CHSH value below 2: no Bell violation, no key.
    BelowLocality,
    Error(String),
}

impl PointStatus {
    /// CSV field (commas sanitized out of error messages).
    pub fn csv_value(&self) -> String {
        match self {
            PointStatus::Ok => "ok".to_string(),
            PointStatus::Saturated => "saturated".to_string(),
            PointStatus::BelowLocality => "below_locality".to_string(),
            PointStatus::Error(msg) => format!("error:{}", msg.replace(',', ";")),
        }
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolPoint {
    pub protocol: Protocol,
    pub loss_db: f64,
    pub eta: f64,
    pub p_nc: f64,
    /// QBER; NaN on an errored cell.
    pub qber: f64,
    /// Secret key rate (bits/s); NaN on an errored cell.
    pub skr: f64,
    /// CHSH parameter, for E91 rows.
    pub s_chsh: Option<f64>,
    pub status: PointStatus,
}

fn eval_cell(
    protocol: Protocol,
    loss_db: f64,
    eta: f64,
    p_nc: f64,
    fixed: &RunConfig,
    fq: &EcInefficiency,
) -> ProtocolPoint {
    let mut point = ProtocolPoint {
        protocol,
        loss_db,
        eta,
        p_nc,
        qber: f64::NAN,
        skr: f64::NAN,
        s_chsh: None,
        status: PointStatus::Ok,
    };
    let result = (|| -> Result<()> {
        let t = Transmittance::from_loss_db(LossDb::new(loss_db)?);
        match protocol {
            Protocol::Bb84 | Protocol::SixState => {
                let kind = match protocol {
                    Protocol::Bb84 => SingleProtocolKind::Bb84,
                    _ => SingleProtocolKind::SixState,
                };
                let dev = DeviceParams { eta, p_nc, ..fixed.device };
                let outcome = single_photon::qber_single(kind, &dev, t)?;
                point.qber = outcome.value;
                if outcome.saturated {
                    point.skr = 0.0;
                    point.status = PointStatus::Saturated;
                } else {
                    let q = Probability::new(outcome.value)?;
                    point.skr = match kind {
                        SingleProtocolKind::Bb84 => single_photon::skr_bb84(q, t, fixed.nu_s),
                        SingleProtocolKind::SixState => {
                            single_photon::skr_six_state(q, t, fixed.nu_s)
                        }
                    };
                }
            }
            Protocol::E91 => {
                let arms = ArmTransmittances::from_total(t, fixed.arm_split)?;
                let eta_t = eta * fixed.source.collection_efficiency;
                let p = Probability::new(p_nc)?;
                let diag = BellDiagnostics::evaluate(&arms, eta_t, p, &fixed.analyzer)?;
                let q = e91::qber_from_bell(diag.s_chsh)?;
                let eve = e91::eve_information(diag.s_chsh)?;
                point.qber = q.value();
                point.s_chsh = Some(diag.s_chsh);
                point.skr = e91::skr_e91(q, diag.s_chsh, t, fixed.nu_s)?;
                if eve.below_locality {
                    point.status = PointStatus::BelowLocality;
                }
            }
            Protocol::Bbm92(placement) => {
                let src = fixed.source.with_detector_efficiency(eta);
                let p = Probability::new(p_nc)?;
                let q = bbm92::qber_bbm92(&src, t, placement, p)?;
                point.qber = q.value();
                point.skr = bbm92::skr_bbm92(q, t, fixed.nu_s, fq);
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        point.qber = f64::NAN;
        point.skr = f64::NAN;
        point.s_chsh = None;
        point.status = PointStatus::Error(e.to_string());
    }
    point
}

/// Runs the sweep; one row per grid cell in canonical order (loss outer,
/// then eta, then p_nc). Per-cell failures become [`PointStatus::Error`]
/// rows rather than aborting the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ProtocolPoint>> {
    spec.validate()?;
    let fq = spec.fixed.ec_inefficiency()?;
    let mut cells = Vec::new();
    for &loss in &spec.loss.values() {
        for &eta in &spec.eta_values {
            for &p_nc in &spec.p_nc_values {
                cells.push((loss, eta, p_nc));
            }
        }
    }
    Ok(cells
        .into_par_iter()
        .map(|(loss, eta, p_nc)| eval_cell(spec.protocol, loss, eta, p_nc, &spec.fixed, &fq))
        .collect())
}

/// Threshold-crossing results for one (protocol, eta, p_nc) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub protocol: Protocol,
    pub eta: f64,
    pub p_nc: f64,
    /// Loss where the key rate reaches zero.
    pub skr_zero: Tolerance,
    /// Loss where the QBER reaches `qber_threshold_value`.
    pub qber_cross: Tolerance,
    pub qber_threshold_value: f64,
}

/// Bisects a monotone predicate boundary on [lo, hi]; `inside(lo)` must be
/// true and `inside(hi)` false when this is called.
fn bisect_boundary<F: Fn(f64) -> bool>(inside: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-3 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// For every requested (eta, p_nc) cell, finds the loss where the key
/// rate reaches zero and the loss where the QBER crosses the protocol
/// threshold, both bisected over [start, stop] of the loss grid. Reports
/// [`Tolerance::ExceedsCeiling`] when a curve never crosses in range.
pub fn find_threshold(spec: &SweepSpec) -> Result<Vec<ThresholdReport>> {
    spec.validate()?;
    let fq = spec.fixed.ec_inefficiency()?;
    let (lo, hi) = (spec.loss.start_db, spec.loss.stop_db);
    let mut reports = Vec::new();
    for &eta in &spec.eta_values {
        for &p_nc in &spec.p_nc_values {
            let cell = |loss: f64| eval_cell(spec.protocol, loss, eta, p_nc, &spec.fixed, &fq);
            let skr_at = |loss: f64| -> f64 {
                let p = cell(loss);
                if p.skr.is_nan() {
                    0.0
                } else {
                    p.skr
                }
            };
            let qber_at = |loss: f64| -> f64 {
                let p = cell(loss);
                if p.qber.is_nan() {
                    f64::INFINITY
                } else {
                    p.qber
                }
            };
            let skr_zero = if skr_at(lo) <= 0.0 {
                Tolerance::BelowFloor(lo)
            } else if skr_at(hi) > 0.0 {
                Tolerance::ExceedsCeiling(hi)
            } else {
                Tolerance::CrossesAt(bisect_boundary(|l| skr_at(l) > 0.0, lo, hi))
            };
            let threshold = spec.protocol.qber_threshold();
            let qber_cross = if qber_at(lo) >= threshold {
                Tolerance::BelowFloor(lo)
            } else if qber_at(hi) < threshold {
                Tolerance::ExceedsCeiling(hi)
            } else {
                Tolerance::CrossesAt(bisect_boundary(|l| qber_at(l) < threshold, lo, hi))
            };
            reports.push(ThresholdReport {
                protocol: spec.protocol,
                eta,
                p_nc,
                skr_zero,
                qber_cross,
                qber_threshold_value: threshold,
            });
        }
    }
    Ok(reports)
}

/// One protocol column of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonColumn {
    pub label: String,
    pub eta: f64,
    pub p_nc: f64,
    pub skr: Vec<f64>,
    pub skr_zero: Tolerance,
}

/// Aligned per-loss key rates of several protocols over a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub loss_db: Vec<f64>,
    pub columns: Vec<ComparisonColumn>,
}

impl Comparison {
    /// Pairwise crossover losses: where two key-rate curves swap order while
    /// both are positive. None when a pair never crosses.
    pub fn crossovers(&self) -> Vec<(String, String, Option<f64>)> {
        let mut out = Vec::new();
        for i in 0..self.columns.len() {
            for j in i + 1..self.columns.len() {
                let a = &self.columns[i];
                let b = &self.columns[j];
                let mut found = None;
                for k in 0..self.loss_db.len().saturating_sub(1) {
                    let (d0, d1) = (a.skr[k] - b.skr[k], a.skr[k + 1] - b.skr[k + 1]);
                    let positive = a.skr[k] > 0.0 && b.skr[k] > 0.0;
                    if positive && d0 * d1 < 0.0 {
                        let t = d0 / (d0 - d1);
                        found = Some(
                            self.loss_db[k] + t * (self.loss_db[k + 1] - self.loss_db[k]),
                        );
                        break;
                    }
                }
                out.push((a.label.clone(), b.label.clone(), found));
            }
        }
        out
    }

    /// Plain-text table with tolerance and crossover summary lines.
    pub fn render(&self) -> String {
        let mut out = String::from("loss_db");
        for col in &self.columns {
            out.push_str(&format!(",{}", col.label));
        }
        out.push('\n');
        for (k, loss) in self.loss_db.iter().enumerate() {
            out.push_str(&format!("{loss}"));
            for col in &self.columns {
                out.push_str(&format!(",{:.6e}", col.skr[k]));
            }
            out.push('\n');
        }
        for col in &self.columns {
            out.push_str(&format!(
                "# tolerance[{}] (eta={}, p_nc={}): SKR reaches 0 at {}\n",
                col.label, col.eta, col.p_nc, col.skr_zero
            ));
        }
        for (a, b, cross) in self.crossovers() {
            match cross {
                Some(db) => out.push_str(&format!("# crossover {a}/{b} at {db:.2} dB\n")),
                None => out.push_str(&format!("# crossover {a}/{b}: none\n")),
            }
        }
        out
    }
}

/// Runs the given specs (each with exactly one eta and one p_nc) over their
/// shared loss grid and aligns the key-rate columns.
pub fn compare_protocols(specs: &[SweepSpec]) -> Result<Comparison> {
    if specs.is_empty() {
        return Err(Error::GridMismatch { detail: "no sweep specs supplied".to_string() });
    }
    let grid = specs[0].loss;
    for spec in specs {
        if spec.eta_values.len() != 1 || spec.p_nc_values.len() != 1 {
            return Err(Error::GridMismatch {
                detail: "comparison specs must carry exactly one eta and one p_nc each".to_string(),
            });
        }
        let g = spec.loss;
        if (g.start_db - grid.start_db).abs() > 1e-12
            || (g.stop_db - grid.stop_db).abs() > 1e-12
            || (g.step_db - grid.step_db).abs() > 1e-12
        {
            return Err(Error::GridMismatch {
                detail: format!(
                    "grid {:?} of {} differs from {:?}",
                    g,
                    spec.protocol.display_label(),
                    grid
                ),
            });
        }
    }
    let loss_db = grid.values();
    let mut columns = Vec::with_capacity(specs.len());
    for spec in specs {
        let points = run_sweep(spec)?;
        let skr = points.iter().map(|p| if p.skr.is_nan() { 0.0 } else { p.skr }).collect();
        let report = find_threshold(spec)?.remove(0);
        columns.push(ComparisonColumn {
            label: spec.protocol.display_label(),
            eta: spec.eta_values[0],
            p_nc: spec.p_nc_values[0],
            skr,
            skr_zero: report.skr_zero,
        });
    }
    Ok(Comparison { loss_db, columns })
}

// --- Reference scenarios and quoted values -------------------------------

/// The three reference link scenarios: (label, length_m, dr_mm). The other
/// geometry parameters are the defaults (dt 10 mm, 0.025 mrad, 0.1/km).
pub const REFERENCE_SCENARIOS: [(&str, f64, f64); 3] =
    [("10 m", 10.0, 10.0), ("500 m", 500.0, 12.0), ("30 km", 30_000.0, 100.0)];

/// Quoted channel losses (dB) for the reference scenarios.
pub const REFERENCE_LOSS_DB: [f64; 3] = [0.02, 5.68, 30.64];

const PROTOCOL_NAMES: [&str; 4] = ["BB84", "six-state", "BBM92", "E91"];

/// Quoted QBER (%) per scenario, in protocol order BB84, six-state, BBM92, E91.
pub const REFERENCE_QBER_PCT: [[f64; 4]; 3] = [
    [0.107, 0.105, 5.18, 0.006],
    [0.125, 0.12, 5.22, 0.007],
    [7.6, 5.21, 5.24, 7.17],
];

/// Quoted SKR (bits/s) per scenario, same protocol order.
pub const REFERENCE_SKR: [[f64; 4]; 3] = [
    [3.11e5, 2.09e5, 1.16e5, 2.1e5],
    [0.84e5, 0.57e5, 0.31e5, 1.8e5],
    [86.0, 132.0, 106.0, 4.42],
];

fn scenario_channel(index: usize, alpha_unit: AlphaUnit) -> ChannelParams {
    let (_, length_m, dr_mm) = REFERENCE_SCENARIOS[index];
    ChannelParams { length_m, dr_mm, alpha_unit, ..ChannelParams::default() }
}

/// One row of the loss-budget report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub label: &'static str,
    pub computed_db: f64,
    pub reference_db: f64,
    pub note: Option<String>,
}

/// Loss-budget report over the reference scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Report {
    pub rows: Vec<Table1Row>,
}

impl Table1Report {
    pub fn render(&self) -> String {
        let mut out = String::from("link      computed    quoted\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{:<8}{:>9.2} dB{:>7.2} dB\n",
                row.label, row.computed_db, row.reference_db
            ));
        }
        for row in &self.rows {
            if let Some(note) = &row.note {
                out.push_str(&format!("* {}: {note}\n", row.label));
            }
        }
        out
    }
}

/// Computes the channel loss of the three reference links and compares them
/// with the quoted values. Only the alpha interpretation follows the
/// config; the geometry is fixed by the scenarios.
pub fn reproduce_table1(alpha_unit: AlphaUnit) -> Result<Table1Report> {
    let mut rows = Vec::with_capacity(3);
    for (i, (label, _, _)) in REFERENCE_SCENARIOS.iter().enumerate() {
        let p = scenario_channel(i, alpha_unit);
        let computed_db = channel::total_transmittance(&p)?.loss_db();
        let reference_db = REFERENCE_LOSS_DB[i];
        let note = if i == 0 && (computed_db - reference_db).abs() > 0.05 {
            Some(format!(
                "computed {computed_db:.3} dB vs quoted {reference_db} dB; the quoted figure \
                 matches no term of the loss budget and is likely a misprint of 0.2"
            ))
        } else if (computed_db - reference_db).abs() > 0.05 {
            Some(format!("computed {computed_db:.2} dB vs quoted {reference_db} dB"))
        } else {
            None
        };
        rows.push(Table1Row { label, computed_db, reference_db, note });
    }
    Ok(Table1Report { rows })
}

/// Metric of a QBER/SKR report cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    QberPct,
    SkrBitsPerS,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::QberPct => "QBER %",
            Metric::SkrBitsPerS => "SKR bits/s",
        }
    }
}

/// One computed-vs-quoted cell of the protocol performance report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table2Cell {
    pub scenario: &'static str,
    pub protocol: &'static str,
    pub metric: Metric,
    pub computed: f64,
    pub reference: f64,
    pub annotation: Option<String>,
}

impl Table2Cell {
    /// Relative deviation (computed - quoted) / quoted.
    pub fn relative_deviation(&self) -> f64 {
        (self.computed - self.reference) / self.reference
    }
}

/// The full 24-cell performance report (3 scenarios x 4 protocols x 2
/// metrics); BBM92 cells quote the at-alice placement and carry the
/// in-middle value as an annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table2Report {
    pub cells: Vec<Table2Cell>,
}

impl Table2Report {
    pub fn cell(&self, scenario: &str, protocol: &str, metric: Metric) -> Option<&Table2Cell> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.protocol == protocol && c.metric == metric)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<10}{:<11}{:<11}{:>16}{:>16}{:>10}\n",
            "scenario", "protocol", "metric", "computed", "quoted", "rel_dev"
        );
        let mut notes = Vec::new();
        for cell in &self.cells {
            out.push_str(&format!(
                "{:<10}{:<11}{:<11}{:>16.6}{:>16.6}{:>+9.1}%\n",
                cell.scenario,
                cell.protocol,
                cell.metric.label(),
                cell.computed,
                cell.reference,
                100.0 * cell.relative_deviation(),
            ));
            if let Some(note) = &cell.annotation {
                notes.push(format!(
                    "* {} {} {}: {note}",
                    cell.scenario,
                    cell.protocol,
                    cell.metric.label()
                ));
            }
        }
        for note in notes {
            out.push_str(&note);
            out.push('\n');
        }
        out
    }
}

/// Computes QBER and SKR of all four protocols over the three reference
/// links and compares them with the quoted values. Never asserts equality;
/// cells outside tolerance carry an explicit annotation instead.
pub fn reproduce_table2(cfg: &RunConfig) -> Result<Table2Report> {
    cfg.validate()?;
    let fq = cfg.ec_inefficiency()?;
    let p_nc = Probability::new(cfg.device.p_nc)?;
    let mut cells = Vec::with_capacity(24);
    for (i, (label, _, _)) in REFERENCE_SCENARIOS.iter().enumerate() {
        let t = channel::total_transmittance(&scenario_channel(i, cfg.alpha_unit))?;
        for (p_idx, name) in PROTOCOL_NAMES.iter().enumerate() {
            let (qber_pct, skr, extra_qber, extra_skr): (f64, f64, Option<String>, Option<String>) =
                match p_idx {
                    0 | 1 => {
                        let kind = if p_idx == 0 {
                            SingleProtocolKind::Bb84
                        } else {
                            SingleProtocolKind::SixState
                        };
                        let outcome = single_photon::qber_single(kind, &cfg.device, t)?;
                        let skr = if outcome.saturated {
                            0.0
                        } else {
                            let q = Probability::new(outcome.value)?;
                            match kind {
                                SingleProtocolKind::Bb84 => {
                                    single_photon::skr_bb84(q, t, cfg.nu_s)
                                }
                                SingleProtocolKind::SixState => {
                                    single_photon::skr_six_state(q, t, cfg.nu_s)
                                }
                            }
                        };
                        (100.0 * outcome.value, skr, None, None)
                    }
                    2 => {
                        let q_a = bbm92::qber_bbm92(
                            &cfg.source,
                            t,
                            SourcePlacement::AtAlice,
                            p_nc,
                        )?;
                        let skr_a = bbm92::skr_bbm92(q_a, t, cfg.nu_s, &fq);
                        let q_m = bbm92::qber_bbm92(
                            &cfg.source,
                            t,
                            SourcePlacement::InMiddle,
                            p_nc,
                        )?;
                        let skr_m = bbm92::skr_bbm92(q_m, t, cfg.nu_s, &fq);
                        (
                            100.0 * q_a.value(),
                            skr_a,
                            Some(format!("in_middle: {:.4}%", 100.0 * q_m.value())),
                            Some(format!("in_middle: {skr_m:.4e} bits/s")),
                        )
                    }
                    _ => {
                        let arms = ArmTransmittances::from_total(t, cfg.arm_split)?;
                        let eta_t = cfg.device.eta * cfg.source.collection_efficiency;
                        let diag =
                            BellDiagnostics::evaluate(&arms, eta_t, p_nc, &cfg.analyzer)?;
                        let q = e91::qber_from_bell(diag.s_chsh)?;
                        let skr = e91::skr_e91(q, diag.s_chsh, t, cfg.nu_s)?;
                        let other_arms = ArmTransmittances::from_total(
                            t,
                            match cfg.arm_split {
                                e91::ArmSplit::SqrtTotal => e91::ArmSplit::PerArm,
                                e91::ArmSplit::PerArm => e91::ArmSplit::SqrtTotal,
                            },
                        )?;
                        let other =
                            BellDiagnostics::evaluate(&other_arms, eta_t, p_nc, &cfg.analyzer)?;
                        let other_q = e91::qber_from_bell(other.s_chsh)?;
                        (
                            100.0 * q.value(),
                            skr,
                            Some(format!(
                                "other arm-split mode: {:.4}%",
                                100.0 * other_q.value()
                            )),
                            None,
                        )
                    }
                };
            let reference_q = REFERENCE_QBER_PCT[i][p_idx];
            let mut q_notes = Vec::new();
            if (qber_pct - reference_q).abs() > 1.5 {
                q_notes.push(format!(
                    "does not reproduce from the stated parameters (computed {qber_pct:.4}% \
                     vs quoted {reference_q}%)"
                ));
            }
            if let Some(extra) = extra_qber {
                q_notes.push(extra);
            }
            cells.push(Table2Cell {
                scenario: label,
                protocol: name,
                metric: Metric::QberPct,
                computed: qber_pct,
                reference: reference_q,
                annotation: if q_notes.is_empty() { None } else { Some(q_notes.join("; ")) },
            });
            let reference_s = REFERENCE_SKR[i][p_idx];
            let ratio = skr / reference_s;
            let mut s_notes = Vec::new();
            if !(0.8..=1.25).contains(&ratio) {
                s_notes.push(format!(
                    "quoted value does not reproduce (computed/quoted = {ratio:.3})"
                ));
            }
            if let Some(extra) = extra_skr {
                s_notes.push(extra);
            }
            cells.push(Table2Cell {
                scenario: label,
                protocol: name,
                metric: Metric::SkrBitsPerS,
                computed: skr,
                reference: reference_s,
                annotation: if s_notes.is_empty() { None } else { Some(s_notes.join("; ")) },
            });
        }
    }
    Ok(Table2Report { cells })
}

// --- CSV / gnuplot emission ----------------------------------------------

/// Column header of sweep CSV output.
pub const CSV_HEADER: &str = "protocol,placement,loss_db,eta,p_nc,qber,skr_bits_per_s,s_chsh,status";

fn csv_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Renders sweep rows as CSV with the fixed [`CSV_HEADER`] schema. Errored
/// cells keep their row with empty numeric fields and an error status.
pub fn points_to_csv(points: &[ProtocolPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.protocol.label(),
            p.protocol.placement_label(),
            p.loss_db,
            p.eta,
            p.p_nc,
            csv_float(p.qber),
            csv_float(p.skr),
            p.s_chsh.map(csv_float).unwrap_or_default(),
            p.status.csv_value(),
        ));
    }
    out
}

/// Which value a gnuplot series tracks against loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesColumn {
    Qber,
    Skr,
    SChsh,
}

/// Renders two-column (loss, value) gnuplot blocks, one per (eta, p_nc)
/// combination, separated by blank lines. Errored cells are skipped.
pub fn gnuplot_series(points: &[ProtocolPoint], column: SeriesColumn) -> String {
    let mut groups: Vec<(f64, f64)> = Vec::new();
    for p in points {
        if !groups.contains(&(p.eta, p.p_nc)) {
            groups.push((p.eta, p.p_nc));
        }
    }
    let mut out = String::new();
    for (eta, p_nc) in groups {
        out.push_str(&format!(
            "# {} eta={eta} p_nc={p_nc}\n",
            points.first().map(|p| p.protocol.display_label()).unwrap_or_default()
        ));
        for p in points.iter().filter(|p| p.eta == eta && p.p_nc == p_nc) {
            let value = match column {
                SeriesColumn::Qber => p.qber,
                SeriesColumn::Skr => p.skr,
                SeriesColumn::SChsh => p.s_chsh.unwrap_or(f64::NAN),
            };
            if !value.is_nan() {
                out.push_str(&format!("{} {}\n", p.loss_db, value));
            }
        }
        out.push('\n');
    }
    out
}
