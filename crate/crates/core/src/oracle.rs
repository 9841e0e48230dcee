//! Monte Carlo ground truth for the mutual information of a spatial modulation
//! link with a finite constellation, and for the Gaussian-input capacity.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{complex_normal, inner, ChannelRealization};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::geometry::supersymbols;
use crate::rng::{derive_seed, rng_from_seed};

/// Terms more than this many nats below the running maximum are dropped from
/// the log-sum-exp; each contributes less than `4.3e-18` relative.
const LSE_CUTOFF: f64 = -40.0;

/// Monte Carlo estimate in bits per channel use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiEstimate {
    pub value: f64,
    pub n_noise_draws: usize,
    /// Standard error of the Monte Carlo mean.
    pub std_error: f64,
}

impl MiEstimate {
    /// The estimate restricted to `[0, max]`.
    pub fn clamped(&self, max: f64) -> f64 {
        self.value.clamp(0.0, max)
    }
}

/// Streaming mean/variance of the per-draw integrand.
#[derive(Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

fn check(channel: &ChannelRealization, n_draws: usize) -> Result<()> {
    if n_draws == 0 {
        return Err(Error::invalid("at least one noise draw is required"));
    }
    if !channel.gamma.is_finite() || channel.gamma < 0.0 || !channel.h.is_finite() {
        return Err(Error::invalid("channel or SNR is not finite"));
    }
    Ok(())
}

/// Mutual information `I(s, l; y | H)` for a finite constellation.
///
/// For every noise draw `w ~ CN(0, I)` (shared by all transmitted points) the
/// integrand is the average over transmitted supersymbols `x` of
/// `log2 Σ_x' exp(-‖a_x - a_x' + w‖² + ‖w‖²)` with `a_x = sqrt(γ) h_l s_k`.
/// The exponent is expanded as `q_x' - q_x - ‖a_x - a_x'‖²` with
/// `q_x = 2 Re(a_xᴴ w)`, so `γ = 0` needs no special case.
pub fn mi_finite(
    channel: &ChannelRealization,
    constellation: &Constellation,
    n_draws: usize,
    seed: u64,
) -> Result<MiEstimate> {
    check(channel, n_draws)?;
    let nr = channel.nr();
    let scale = channel.gamma.sqrt();
    let points: Vec<Complex64> = supersymbols(&channel.h, constellation)
        .into_iter()
        .flatten()
        .map(|z| z * scale)
        .collect();
    let n = points.len() / nr;
    let point = |x: usize| &points[x * nr..(x + 1) * nr];

    let mut dist = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..x {
            let d: f64 = point(x).iter().zip(point(y)).map(|(a, b)| (a - b).norm_sqr()).sum();
            dist[x * n + y] = d;
            dist[y * n + x] = d;
        }
    }

    let mut rng = rng_from_seed(seed);
    let mut w = vec![Complex64::new(0.0, 0.0); nr];
    let mut q = vec![0.0; n];
    let mut expo = vec![0.0; n];
    let mut stats = Welford::default();
    let norm = 1.0 / (n as f64 * LN_2);
    let inv_n = 1.0 / n as f64;

    for _ in 0..n_draws {
        for wr in w.iter_mut() {
            *wr = complex_normal(&mut rng);
        }
        for (x, qx) in q.iter_mut().enumerate() {
            *qx = 2.0 * point(x).iter().zip(&w).map(|(a, b)| a.re * b.re + a.im * b.im).sum::<f64>();
        }
        let mut acc = 0.0;
        for x in 0..n {
            let row = &dist[x * n..(x + 1) * n];
            let qx = q[x];
            // the x' = x term is exactly 0, so the maximum is at least 0
            let mut max = 0.0f64;
            for ((e, &qy), &d) in expo.iter_mut().zip(&q).zip(row) {
                *e = qy - qx - d;
                max = max.max(*e);
            }
            let mut sum = 0.0;
            for &e in &expo {
                let t = e - max;
                if t > LSE_CUTOFF {
                    sum += t.exp();
                }
            }
            acc += max + (sum * inv_n).ln();
        }
        stats.push(-acc * norm);
    }

    Ok(MiEstimate {
        value: stats.mean,
        n_noise_draws: n_draws,
        std_error: stats.std_error(),
    })
}

/// Capacity with Gaussian symbols and a uniformly chosen active antenna,
/// `C = h(y | H) - h(w)`.
///
/// `y` is an equal-weight mixture of `CN(0, Φ_l)` with `Φ_l = γ h_l h_lᴴ + I`.
/// Each draw samples one `y` per component (stratified over `l`) and averages
/// `-log2 p(y)`; the rank-one structure gives `det Φ_l = 1 + γ‖h_l‖²` and
/// `yᴴ Φ_l⁻¹ y = ‖y‖² - γ |h_lᴴ y|² / (1 + γ‖h_l‖²)`.
pub fn capacity_gaussian(channel: &ChannelRealization, n_draws: usize, seed: u64) -> Result<MiEstimate> {
    check(channel, n_draws)?;
    let nt = channel.nt();
    let nr = channel.nr();
    let gamma = channel.gamma;
    let sqrt_gamma = gamma.sqrt();
    let energies: Vec<f64> = (0..nt).map(|l| channel.h.column_energy(l)).collect();
    let log_det: Vec<f64> = energies.iter().map(|e| (1.0 + gamma * e).ln()).collect();
    let shrink: Vec<f64> = energies.iter().map(|e| gamma / (1.0 + gamma * e)).collect();

    let noise_entropy = nr as f64 * (PI * std::f64::consts::E).log2();
    let base = nr as f64 * PI.ln() + (nt as f64).ln();

    let mut rng = rng_from_seed(seed);
    let mut y = vec![Complex64::new(0.0, 0.0); nr];
    let mut terms = vec![0.0; nt];
    let mut stats = Welford::default();
    for _ in 0..n_draws {
        let mut acc = 0.0;
        for l in 0..nt {
            let z = complex_normal(&mut rng) * sqrt_gamma;
            for (yr, &hr) in y.iter_mut().zip(channel.h.column(l)) {
                *yr = hr * z + complex_normal(&mut rng);
            }
            let y2: f64 = y.iter().map(|v| v.norm_sqr()).sum();
            let mut max = f64::NEG_INFINITY;
            for (lp, t) in terms.iter_mut().enumerate() {
                let proj = inner(channel.h.column(lp), &y).norm_sqr();
                *t = -(y2 - shrink[lp] * proj) - log_det[lp];
                max = max.max(*t);
            }
            let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
            // -ln p(y) = Nr ln π + ln Nt - LSE
            acc += base - lse;
        }
        stats.push(acc / (nt as f64 * LN_2));
    }

    Ok(MiEstimate {
        value: stats.mean - noise_entropy,
        n_noise_draws: n_draws,
        std_error: stats.std_error(),
    })
}

/// Seed of cell `(i, j)` in [`mi_finite_batch`].
pub fn batch_cell_seed(base_seed: u64, i: usize, j: usize) -> u64 {
    derive_seed(base_seed, &[i as u64, j as u64])
}

/// `mi_finite` over every (channel, constellation) pair. Cells run in parallel;
/// each cell's seed depends only on `(base_seed, i, j)`, so results do not
/// depend on the worker count.
pub fn mi_finite_batch(
    channels: &[ChannelRealization],
    constellations: &[Constellation],
    n_draws: usize,
    base_seed: u64,
) -> Result<Vec<Vec<MiEstimate>>> {
    if channels.is_empty() || constellations.is_empty() {
        return Err(Error::invalid("batch needs at least one channel and one constellation"));
    }
    let k = constellations.len();
    let flat: Vec<MiEstimate> = (0..channels.len() * k)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / k, cell % k);
            mi_finite(&channels[i], &constellations[j], n_draws, batch_cell_seed(base_seed, i, j))
        })
        .collect::<Result<_>>()?;
    Ok(flat.chunks(k).map(|c| c.to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_rayleigh_channel, ChannelMatrix};
    use crate::constellation::ConstellationKind;

    fn qpsk() -> Constellation {
        Constellation::new(ConstellationKind::Qpsk)
    }

    #[test]
    fn zero_snr_gives_exactly_zero() {
        let ch = ChannelRealization::new(sample_rayleigh_channel(4, 2).unwrap(), 0.0).unwrap();
        let est = mi_finite(&ch, &qpsk(), 50, 1).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn high_snr_identity_saturates() {
        let ch = ChannelRealization::new(ChannelMatrix::identity(2), 1e4).unwrap();
        let est = mi_finite(&ch, &qpsk(), 500, 2).unwrap();
        assert!((est.value - 3.0).abs() < 0.02, "{est:?}");
    }

    #[test]
    fn zero_draws_and_nonfinite_inputs_are_rejected() {
        let ch = ChannelRealization::new(ChannelMatrix::identity(2), 1.0).unwrap();
        assert!(mi_finite(&ch, &qpsk(), 0, 0).is_err());
        assert!(capacity_gaussian(&ch, 0, 0).is_err());
        let mut bad = ch.clone();
        bad.gamma = f64::INFINITY;
        assert!(mi_finite(&bad, &qpsk(), 10, 0).is_err());
    }

    #[test]
    fn same_seed_same_estimate() {
        let ch = ChannelRealization::new(sample_rayleigh_channel(8, 2).unwrap(), 3.0).unwrap();
        let a = mi_finite(&ch, &qpsk(), 100, 9).unwrap();
        let b = mi_finite(&ch, &qpsk(), 100, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_capacity_vanishes_at_zero_snr() {
        let ch = ChannelRealization::new(sample_rayleigh_channel(5, 2).unwrap(), 0.0).unwrap();
        let est = capacity_gaussian(&ch, 5000, 3).unwrap();
        assert!(est.value.abs() <= 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn batch_shape() {
        let ch = ChannelRealization::new(ChannelMatrix::identity(2), 2.0).unwrap();
        let out = mi_finite_batch(&[ch], &crate::constellation::standard_set(), 20, 4).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 3);
        assert!(mi_finite_batch(&[], &[qpsk()], 10, 0).is_err());
    }

    /// Reference values from an independent brute-force run (10⁶ draws,
    /// separate noise per transmitted point, dense covariance inverses).
    const REF_MI_QPSK_I2_GAMMA2: (f64, f64) = (1.873_000, 0.000_52);
    const REF_CAPACITY_I2_GAMMA10: (f64, f64) = (4.202_943, 0.002_13);

    #[test]
    fn matches_independent_reference_runs() {
        let h = crate::geometry::angle_parametrized_channel(std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        let ch = ChannelRealization::new(h, 2.0).unwrap();
        let est = mi_finite(&ch, &qpsk(), 5000, 21).unwrap();
        let (v, se) = REF_MI_QPSK_I2_GAMMA2;
        assert!((est.value - v).abs() <= 4.0 * est.std_error.hypot(se), "{est:?}");

        let ch = ChannelRealization::new(ChannelMatrix::identity(2), 10.0).unwrap();
        let est = capacity_gaussian(&ch, 20_000, 22).unwrap();
        let (c, se) = REF_CAPACITY_I2_GAMMA10;
        assert!((est.value - c).abs() <= 4.0 * est.std_error.hypot(se), "{est:?}");
    }

    #[test]
    fn capacity_dominates_qpsk() {
        for seed in 0..20 {
            let h = sample_rayleigh_channel(seed, 2).unwrap();
            let ch = ChannelRealization::from_db(h, -10.0 + seed as f64).unwrap();
            let c = capacity_gaussian(&ch, 2000, seed).unwrap();
            let m = mi_finite(&ch, &qpsk(), 500, seed).unwrap();
            assert!(c.value >= m.value - 4.0 * c.std_error.hypot(m.std_error), "{c:?} {m:?}");
        }
    }

    #[test]
    fn monotone_in_snr_within_error() {
        for seed in 0..200 {
            let h = sample_rayleigh_channel(1000 + seed, 2).unwrap();
            let lo_db = -20.0 + (seed % 35) as f64;
            let lo = mi_finite(&ChannelRealization::from_db(h.clone(), lo_db).unwrap(), &qpsk(), 200, seed).unwrap();
            let hi = mi_finite(&ChannelRealization::from_db(h, lo_db + 3.0).unwrap(), &qpsk(), 200, seed + 1).unwrap();
            assert!(lo.value <= hi.value + 4.0 * lo.std_error.hypot(hi.std_error));
        }
    }

    #[test]
    fn column_swap_and_rotation_within_error() {
        let c16 = Constellation::new(ConstellationKind::Qam16);
        for seed in 0..10 {
            let h = sample_rayleigh_channel(seed, 2).unwrap();
            let base = mi_finite(&ChannelRealization::new(h.clone(), 2.5).unwrap(), &c16, 1000, seed).unwrap();
            let swapped = ChannelRealization::new(h.permute_columns(&[1, 0]), 2.5).unwrap();
            let a = mi_finite(&swapped, &c16, 1000, seed + 50).unwrap();
            let b = mi_finite(&ChannelRealization::new(h, 2.5).unwrap(), &c16.rotated(0.37), 1000, seed + 90).unwrap();
            for other in [a, b] {
                assert!((other.value - base.value).abs() <= 4.0 * other.std_error.hypot(base.std_error));
            }
        }
    }

    #[test]
    fn std_error_halves_when_draws_quadruple() {
        let ch = ChannelRealization::from_db(sample_rayleigh_channel(77, 2).unwrap(), 3.0).unwrap();
        let a = mi_finite(&ch, &qpsk(), 2000, 1).unwrap();
        let b = mi_finite(&ch, &qpsk(), 8000, 2).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!((2.0 / 1.5..=2.0 * 1.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn random_channels_stay_in_range() {
        for (seed, c) in (0..30).zip(crate::constellation::standard_set().into_iter().cycle()) {
            let ch = ChannelRealization::from_db(sample_rayleigh_channel(seed, 2).unwrap(), seed as f64 - 15.0).unwrap();
            let est = mi_finite(&ch, &c, 300, seed).unwrap();
            let max = c.max_mi(2);
            assert!(est.value >= -3.0 * est.std_error && est.value <= max + 3.0 * est.std_error);
            assert!((0.0..=max).contains(&est.clamped(max)));
        }
    }

    #[test]
    fn batch_equals_sequential_calls() {
        let chans: Vec<_> = (0..4)
            .map(|i| ChannelRealization::from_db(sample_rayleigh_channel(i, 2).unwrap(), 5.0).unwrap())
            .collect();
        let cs = crate::constellation::standard_set();
        let out = mi_finite_batch(&chans, &cs, 50, 6).unwrap();
        for (i, ch) in chans.iter().enumerate() {
            for (j, c) in cs.iter().enumerate() {
                assert_eq!(out[i][j], mi_finite(ch, c, 50, batch_cell_seed(6, i, j)).unwrap());
            }
        }
    }
}
