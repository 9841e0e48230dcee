//! Closed-form Jensen approximation against the Monte Carlo oracle over an
//! SNR sweep for one channel.

use smmi::channel::{sample_rayleigh_channel, ChannelRealization};
use smmi::constellation::standard_set;
use smmi::jensen::jensen_mi;
use smmi::oracle::mi_finite;

fn main() -> smmi::error::Result<()> {
    let h = sample_rayleigh_channel(3, 2)?;
    println!("snr_db,constellation,oracle,std_error,jensen");
    for snr_db in (-20..=20).step_by(5) {
        let ch = ChannelRealization::from_db(h.clone(), snr_db as f64)?;
        for c in standard_set() {
            let e = mi_finite(&ch, &c, 2_000, 1)?;
            println!("{snr_db},{},{:.4},{:.4},{:.4}", c.kind(), e.value, e.std_error, jensen_mi(&ch, &c));
        }
    }
    Ok(())
}
