//! Received-space geometry of spatial modulation: supersymbols, squared
//! distance matrices and the Hermitian/Kasner angle pair between two columns.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{inner, ChannelMatrix};
use crate::constellation::Constellation;
use crate::error::{Error, Result};

/// All `nt·M` received points `h_l s_k`, antenna-major: index `l·M + k`.
pub fn supersymbols(h: &ChannelMatrix, c: &Constellation) -> Vec<Vec<Complex64>> {
    h.columns()
        .flat_map(|col| {
            c.symbols()
                .iter()
                .map(move |&s| col.iter().map(|&z| z * s).collect())
        })
        .collect()
}

/// Squared Euclidean distances between the supersymbols of a two-column channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSet {
    m: usize,
    /// `2M × 2M`, row-major.
    pub d: Vec<f64>,
    /// `M × M`, `|s_k - s_k'|²`.
    pub d_s: Vec<f64>,
    /// `M × M`, `‖h_1 s_m - h_2 s_n‖²`.
    pub d_l: Vec<f64>,
}

impl DistanceSet {
    pub fn order(&self) -> usize {
        self.m
    }

    pub fn d_at(&self, i: usize, j: usize) -> f64 {
        self.d[i * 2 * self.m + j]
    }

    /// Numerical rank of `D_L`: singular values above `rel_tol` times the largest.
    pub fn cross_rank(&self, rel_tol: f64) -> usize {
        numerical_rank(&self.d_l, self.m, rel_tol)
    }
}

pub fn numerical_rank(a: &[f64], n: usize, rel_tol: f64) -> usize {
    let m = DMatrix::from_row_slice(n, n, a);
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Block form of the supersymbol distance matrix for two transmit antennas:
/// diagonal blocks `‖h_l‖² D_S`, off-diagonal `D_L` and its transpose.
pub fn distance_set(h: &ChannelMatrix, c: &Constellation) -> Result<DistanceSet> {
    if h.nt() != 2 {
        return Err(Error::Dimension(format!(
            "distance_set needs two transmit antennas, got {}",
            h.nt()
        )));
    }
    let s = c.symbols();
    let m = s.len();
    let e1 = h.column_energy(0);
    let e2 = h.column_energy(1);
    let p = inner(h.column(0), h.column(1));

    let mut d_s = vec![0.0; m * m];
    let mut d_l = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            d_s[a * m + b] = (s[a] - s[b]).norm_sqr();
            d_l[a * m + b] = e1 * s[a].norm_sqr() + e2 * s[b].norm_sqr()
                - 2.0 * (s[a].conj() * s[b] * p).re;
        }
    }

    let n = 2 * m;
    let mut d = vec![0.0; n * n];
    for a in 0..m {
        for b in 0..m {
            d[a * n + b] = e1 * d_s[a * m + b];
            d[(m + a) * n + m + b] = e2 * d_s[a * m + b];
            d[a * n + m + b] = d_l[a * m + b];
            d[(m + b) * n + a] = d_l[a * m + b];
        }
    }
    Ok(DistanceSet { m, d, d_s, d_l })
}

/// Hermitian angle `theta_h ∈ [0, π/2]` and Kasner pseudo-angle `phi ∈ (-π, π]`
/// with `h1ᴴ h2 = ‖h1‖‖h2‖ cos(theta_h) e^{i phi}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    pub theta_h: f64,
    pub phi: f64,
}

pub fn hermitian_angles(h1: &[Complex64], h2: &[Complex64]) -> Result<AnglePair> {
    let e1: f64 = h1.iter().map(|z| z.norm_sqr()).sum();
    let e2: f64 = h2.iter().map(|z| z.norm_sqr()).sum();
    angles_from_inner(inner(h1, h2), e1, e2)
}

/// Angle pair from a precomputed inner product and the two column energies.
pub(crate) fn angles_from_inner(p: Complex64, e1: f64, e2: f64) -> Result<AnglePair> {
    if !(e1 > 0.0) || !(e2 > 0.0) {
        return Err(Error::invalid("angles are undefined for a zero-norm column"));
    }
    let cos = (p.norm_sqr() / (e1 * e2)).sqrt().min(1.0);
    let theta_h = cos.acos();
    let phi = if p.re == 0.0 && p.im == 0.0 {
        0.0
    } else {
        let a = p.im.atan2(p.re);
        if a <= -PI {
            PI
        } else {
            a
        }
    };
    Ok(AnglePair { theta_h, phi })
}

/// Two-antenna channel with unit-norm columns at the given angle pair:
/// `[[1, cos θ e^{iφ}], [0, sin θ]]`.
pub fn angle_parametrized_channel(theta_h: f64, phi: f64) -> Result<ChannelMatrix> {
    if !(0.0..=FRAC_PI_2).contains(&theta_h) {
        return Err(Error::invalid(format!("theta_h = {theta_h} outside [0, pi/2]")));
    }
    if !(phi > -PI - 1e-12 && phi <= PI + 1e-12) {
        return Err(Error::invalid(format!("phi = {phi} outside (-pi, pi]")));
    }
    let h1 = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let h2 = vec![
        Complex64::from_polar(theta_h.cos(), phi),
        Complex64::new(theta_h.sin(), 0.0),
    ];
    ChannelMatrix::from_columns(&[h1, h2])
}
