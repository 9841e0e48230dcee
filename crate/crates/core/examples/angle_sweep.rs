//! MI of unit-column 2x2 channels as a function of the Hermitian angle and
//! the Kasner pseudo-angle.

use std::f64::consts::{FRAC_PI_2, PI};

use smmi::constellation::ConstellationKind;
use smmi::experiments::{angle_sweep, linspace};

fn main() -> smmi::error::Result<()> {
    let thetas = linspace(0.0, FRAC_PI_2, 7);
    let phis: Vec<f64> = linspace(-PI, PI, 13).into_iter().skip(1).collect();
    let s = angle_sweep(2.0, &thetas, &phis, ConstellationKind::Qpsk, 2_000, 1)?;
    println!("theta_h,mean_mi,ripple");
    for (i, t) in thetas.iter().enumerate() {
        println!("{t:.4},{:.4},{:.4}", s.row_mean(i), s.ripple(i));
    }
    let (i, j) = s.argmax();
    println!("max at theta_h {:.3}, phi {:.3}; largest std error {:.1e}", thetas[i], phis[j], s.max_std_error());
    Ok(())
}
