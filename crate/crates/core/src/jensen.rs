//! Jensen-bound approximation of the finite-constellation mutual information,
//! `-log2( Σ_Δ exp(-½ ΔᴴHᴴHΔ) / (nt·M)² )`, where `Δ = sqrt(γ)(e_l s_k - e_l' s_k')`
//! runs over all ordered pairs of transmitted points.
//!
//! The quadratic form is evaluated densely against the Gram matrix `HᴴH`, so
//! each of the `(nt·M)²` terms costs `4nt² + 4nt + 1` real products and one
//! exponential. The Gram matrix is shared between constellations.

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::constellation::Constellation;
use crate::ops::{self, OpCount};

pub fn jensen_mi(channel: &ChannelRealization, constellation: &Constellation) -> f64 {
    jensen_mi_all(channel, std::slice::from_ref(constellation))[0]
}

pub fn jensen_mi_all(channel: &ChannelRealization, constellations: &[Constellation]) -> Vec<f64> {
    let nt = channel.nt();
    let gram = channel.h.gram();
    ops::record((4 * nt * nt * channel.nr()) as u64, 0, 0, 0);
    let scale = channel.gamma.sqrt();
    constellations
        .iter()
        .map(|c| jensen_with_gram(&gram, nt, scale, c))
        .collect()
}

fn jensen_with_gram(gram: &[Complex64], nt: usize, scale: f64, c: &Constellation) -> f64 {
    let scaled: Vec<Complex64> = c.symbols().iter().map(|s| s * scale).collect();
    let m = scaled.len();
    let n = nt * m;
    let zero = Complex64::new(0.0, 0.0);
    let mut delta = vec![zero; nt];
    let mut g_delta = vec![zero; nt];
    let mut sum = 0.0;
    for l in 0..nt {
        for sk in &scaled {
            for lp in 0..nt {
                for skp in &scaled {
                    delta.fill(zero);
                    delta[l] += sk;
                    delta[lp] -= skp;
                    for (i, gd) in g_delta.iter_mut().enumerate() {
                        *gd = gram[i * nt..(i + 1) * nt].iter().zip(&delta).map(|(g, d)| g * d).sum();
                    }
                    let quad: Complex64 = delta.iter().zip(&g_delta).map(|(d, gd)| d.conj() * gd).sum();
                    sum += (-0.5 * quad.re).exp();
                }
            }
        }
    }
    let terms = (n * n) as u64;
    ops::record(
        2 * m as u64 + terms * (4 * (nt * nt + nt) as u64 + 1) + 1,
        terms,
        1,
        0,
    );
    // the sum is at most n², so the value is nonnegative up to rounding
    (-(sum / (n * n) as f64).log2()).max(0.0)
}

/// Operation count of [`jensen_mi_all`] for the given constellation orders.
pub fn static_op_count(nt: usize, nr: usize, orders: &[usize]) -> OpCount {
    let mut total = OpCount::new((4 * nt * nt * nr) as u64, 0, 0, 0);
    for &m in orders {
        let terms = ((nt * m) * (nt * m)) as u64;
        total += OpCount::new(2 * m as u64 + terms * (4 * (nt * nt + nt) as u64 + 1) + 1, terms, 1, 0);
    }
    total
}
