//! End-to-end tests of the fsoqkd binary; every documented invocation in
//! the README is exercised here.

use std::process::{Command, Output};

use fsoqkd::math::{LossDb, Probability, Transmittance};
use fsoqkd::single_photon::{self, DeviceParams, SingleProtocolKind};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsoqkd"))
        .args(args)
        .env_remove("FSOQKD_CONFIG")
        .output()
        .expect("binary should spawn")
}

fn stdout_of(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[cfg(unix)]
#[test]
fn closing_the_pipe_early_does_not_panic() {
    // `fsoqkd sweep | head` must die on SIGPIPE, not unwind with a backtrace.
    let out = Command::new("sh")
        .arg("-c")
        .arg(format!(
            "{} sweep --protocol bb84 --loss-stop 200 --loss-step 0.01 | head -2",
            env!("CARGO_BIN_EXE_fsoqkd")
        ))
        .env_remove("FSOQKD_CONFIG")
        .output()
        .expect("shell should spawn");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(!stderr.contains("panicked"), "{stderr}");
    assert!(out.status.success(), "{stderr}");
}

/// Extracts the first float after `label` in `text`.
fn number_after(text: &str, label: &str) -> f64 {
    let rest = &text[text.find(label).unwrap_or_else(|| panic!("'{label}' in {text}")) + label.len()..];
    let token: String = rest
        .trim_start()
        .chars()
        .take_while(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
        .collect();
    token.parse().unwrap_or_else(|_| panic!("number after '{label}' in {text}"))
}

#[test]
fn channel_reproduces_the_reference_links() {
    let out = stdout_of(&["channel", "--length-m", "500", "--dr-mm", "12"]);
    assert!(out.contains("5.677 dB"), "{out}");
    let out = stdout_of(&["channel", "--length-m", "30000", "--dr-mm", "100"]);
    assert!(out.contains("30.645 dB"), "{out}");
    let out = stdout_of(&["channel"]);
    assert!(out.contains("geometric loss"), "{out}");
    assert!(out.contains("atmospheric loss"), "{out}");
}

#[test]
fn bell_reports_the_maximal_violation_at_zero_loss() {
    let out = stdout_of(&["bell", "--loss-db", "0"]);
    assert!(out.contains("S_CHSH = 2.8282"), "{out}");
    assert!(out.contains("Eve information bound"), "{out}");
}

#[test]
fn qber_matches_the_library_value() {
    let out = stdout_of(&["qber", "--protocol", "bb84", "--loss-db", "20"]);
    let printed = number_after(&out, "QBER =");
    let t = Transmittance::from_loss_db(LossDb::new(20.0).unwrap());
    let expected = single_photon::qber_single(SingleProtocolKind::Bb84, &DeviceParams::default(), t)
        .unwrap()
        .value;
    assert!((printed - expected).abs() < 1e-6, "printed {printed} vs {expected}");
    assert!(out.contains("0.7667%"), "{out}");
}

#[test]
fn skr_matches_the_library_value() {
    let out = stdout_of(&["skr", "--protocol", "six-state", "--loss-db", "10"]);
    let printed = number_after(&out, "SKR =");
    let t = Transmittance::from_loss_db(LossDb::new(10.0).unwrap());
    let q = single_photon::qber_single(SingleProtocolKind::SixState, &DeviceParams::default(), t)
        .unwrap()
        .value;
    let expected = single_photon::skr_six_state(Probability::new(q).unwrap(), t, 0.64e6);
    assert!((printed - expected).abs() < 1e-2, "printed {printed} vs {expected}");
}

#[test]
fn qber_distinguishes_bbm92_placements() {
    let alice = number_after(
        &stdout_of(&["qber", "--protocol", "bbm92", "--loss-db", "20"]),
        "QBER =",
    );
    let middle = number_after(
        &stdout_of(&["qber", "--protocol", "bbm92", "--placement", "middle", "--loss-db", "20"]),
        "QBER =",
    );
    assert!(middle < alice, "in-middle {middle} should sit below at-alice {alice}");
    let spelled = number_after(
        &stdout_of(&["qber", "--protocol", "bbm92-middle", "--loss-db", "20"]),
        "QBER =",
    );
    assert_eq!(middle, spelled, "--placement and protocol spelling must agree");
}

#[test]
fn sweep_emits_the_documented_csv_schema() {
    let out = stdout_of(&["sweep", "--protocol", "bb84", "--loss-stop", "40"]);
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "protocol,placement,loss_db,eta,p_nc,qber,skr_bits_per_s,s_chsh,status"
    );
    assert_eq!(out.lines().count(), 42, "header + 41 rows");
    assert!(out.lines().last().unwrap().starts_with("bb84,,40,"));
}

#[test]
fn sweep_gnuplot_blocks_per_combination() {
    let out = stdout_of(&[
        "sweep",
        "--protocol",
        "e91",
        "--loss-stop",
        "10",
        "--loss-step",
        "5",
        "--etas",
        "0.4,0.8",
        "--format",
        "gnuplot",
        "--series",
        "s-chsh",
    ]);
    assert_eq!(out.matches("# e91").count(), 2, "{out}");
}

#[test]
fn sweep_writes_the_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep",
        "--protocol",
        "bb84",
        "--loss-stop",
        "5",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(written.lines().count(), 7);
}

#[test]
fn threshold_reports_both_searches() {
    let out = stdout_of(&["threshold", "--protocol", "bb84"]);
    assert!(out.contains("SKR reaches zero at 32.1"), "{out}");
    assert!(out.contains("QBER crosses 0.1100 at 32.1"), "{out}");
    // The two E91 searches legitimately disagree: the entropy term kills
    // the key near 63.2 dB while S reaches 2 only near 70.6 dB.
    let out = stdout_of(&["threshold", "--protocol", "e91"]);
    let skr_zero = number_after(&out, "SKR reaches zero at");
    assert!((skr_zero - 63.19).abs() < 0.05, "{out}");
    assert!(out.contains("70.6"), "{out}");
}

#[test]
fn compare_renders_aligned_columns() {
    let out = stdout_of(&[
        "compare",
        "--protocols",
        "bb84,six-state,e91,bbm92-middle",
        "--loss-stop",
        "20",
        "--loss-step",
        "5",
    ]);
    assert!(out.starts_with("loss_db,bb84,six-state,e91,bbm92:in_middle"), "{out}");
    assert_eq!(out.matches("# tolerance").count(), 4);
    assert!(out.contains("# crossover"));
}

#[test]
fn table1_flags_the_misprinted_row() {
    let out = stdout_of(&["table1"]);
    assert!(out.contains("5.68"), "{out}");
    assert!(out.contains("30.64"), "{out}");
    assert!(out.contains("misprint"), "{out}");
    let db = stdout_of(&["table1", "--alpha-unit", "db"]);
    assert!(db.contains("20.62"), "dB reading of alpha changes the 30 km row: {db}");
}

#[test]
fn table2_carries_discrepancy_annotations() {
    let out = stdout_of(&["table2"]);
    assert!(out.contains("BB84"), "{out}");
    assert!(out.contains("six-state"), "{out}");
    assert!(out.contains("does not reproduce"), "{out}");
    assert!(out.contains("in_middle"), "{out}");
}

#[test]
fn validate_reports_sigma_distance() {
    let out = stdout_of(&["validate", "--trials", "400000", "--loss-db", "15"]);
    assert!(out.contains("analytic QBER"), "{out}");
    assert!(out.contains("ratio (empirical/analytic)"), "{out}");
    assert!(out.contains("sigma"), "{out}");
    let acc = stdout_of(&[
        "validate",
        "--protocol",
        "bbm92",
        "--loss-db",
        "0",
        "--trials",
        "500000",
    ]);
    assert!(acc.contains("raw window rate"), "{acc}");
    assert!(acc.contains("sigma"), "{acc}");
    let sigma = number_after(&acc, "distance: ");
    assert!(sigma < 4.0, "raw-rate check drifted: {acc}");
}

#[test]
fn config_file_and_env_var_are_honored() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        "alpha_unit = \"db\"\n\n[channel]\nlength_m = 30000.0\ndr_mm = 100.0\n",
    )
    .unwrap();
    let via_flag = stdout_of(&["--config", path.to_str().unwrap(), "channel"]);
    assert!(via_flag.contains("20.616 dB"), "{via_flag}");
    let out = Command::new(env!("CARGO_BIN_EXE_fsoqkd"))
        .args(["channel"])
        .env("FSOQKD_CONFIG", &path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("20.616 dB"));
}

#[test]
fn config_subcommand_echoes_the_effective_toml() {
    let out = stdout_of(&["config", "--eta", "0.8"]);
    assert!(out.contains("eta = 0.8"), "{out}");
    assert!(out.contains("[channel]"), "{out}");
    assert!(out.contains("detector_efficiency = 0.8"), "--eta must reach the source too: {out}");
}

#[test]
fn invalid_config_values_fail_with_a_named_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[device]\neta = 1.5\n").unwrap();
    let out = run(&["--config", path.to_str().unwrap(), "channel"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("device.eta"), "{err}");
}

#[test]
fn unknown_flags_exit_with_usage_error() {
    let out = run(&["qber", "--protocol", "bb84", "--loss-db", "20", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["qber", "--protocol", "nonsense", "--loss-db", "20"]);
    assert_eq!(out.status.code(), Some(2), "bad protocol token is a usage error");
}

#[test]
fn e91_validate_is_refused_with_guidance() {
    let out = run(&["validate", "--protocol", "e91"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("closed-form"), "{err}");
}
