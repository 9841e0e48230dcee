//! Monte Carlo mutual information of one 2x2 channel for every supported
//! constellation, next to the Gaussian-input capacity.
//!
//! cargo run --example oracle_mi -- [snr_db] [draws]

use smmi::channel::{sample_rayleigh_channel, ChannelRealization};
use smmi::constellation::{Constellation, ConstellationKind};
use smmi::oracle::{capacity_gaussian, mi_finite};

fn main() -> smmi::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let snr_db: f64 = args.next().map_or(Ok(10.0), |s| s.parse()).expect("snr_db is a number");
    let draws: usize = args.next().map_or(Ok(5_000), |s| s.parse()).expect("draws is an integer");

    let h = sample_rayleigh_channel(42, 2)?;
    let ch = ChannelRealization::from_db(h, snr_db)?;
    println!("SNR {snr_db} dB, {draws} noise draws");
    for kind in ConstellationKind::ALL {
        let c = Constellation::new(kind);
        let e = mi_finite(&ch, &c, draws, 7)?;
        println!("{kind:>6}: {:.4} +- {:.4} bpcu (max {:.0})", e.value, e.std_error, c.max_mi(2));
    }
    let cap = capacity_gaussian(&ch, draws, 7)?;
    println!("gaussian: {:.4} +- {:.4} bpcu", cap.value, cap.std_error);
    Ok(())
}
