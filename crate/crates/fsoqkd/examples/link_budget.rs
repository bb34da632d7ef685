//! Minimal library tour: loss budget of a link, then QBER and secret key
//! rate of BB84 over it. Run with `cargo run -p fsoqkd --example link_budget`.

use fsoqkd::channel::{self, ChannelParams};
use fsoqkd::single_photon::{self, DeviceParams, SingleProtocolKind};
use fsoqkd::{LossDb, Probability, Transmittance};

fn main() -> fsoqkd::Result<()> {
    // 500 m link with a 12 mm receiver; everything else at defaults.
    let link = ChannelParams { length_m: 500.0, dr_mm: 12.0, ..ChannelParams::default() };
    let t = channel::total_transmittance(&link)?;
    println!("channel loss = {:.3} dB (T = {:.4e})", t.loss_db(), t.value());

    // BB84 over that channel with the default detector package.
    let dev = DeviceParams::default();
    let qber = single_photon::qber_single(SingleProtocolKind::Bb84, &dev, t)?;
    let skr = single_photon::skr_bb84(Probability::new(qber.value)?, t, 0.64e6);
    println!("BB84: QBER = {:.6}, SKR = {:.1} bits/s", qber.value, skr);

    // A channel can also be specified directly by its loss in dB.
    let t20 = Transmittance::from_loss_db(LossDb::new(20.0)?);
    let qber20 = single_photon::qber_single(SingleProtocolKind::Bb84, &dev, t20)?;
    println!("BB84 at 20 dB: QBER = {:.6}", qber20.value);
    Ok(())
}
