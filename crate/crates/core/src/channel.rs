use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Antenna counts supported for channel realizations.
pub const SUPPORTED_ANTENNAS: [usize; 3] = [2, 4, 8];

/// Complex `nr × nt` matrix stored column-major, so that `column(l)` is the
/// receive signature of transmit antenna `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    nr: usize,
    nt: usize,
    data: Vec<Complex64>,
}

impl ChannelMatrix {
    pub fn from_columns(columns: &[Vec<Complex64>]) -> Result<Self> {
        let nt = columns.len();
        if nt == 0 {
            return Err(Error::invalid("channel matrix needs at least one column"));
        }
        let nr = columns[0].len();
        if nr == 0 || columns.iter().any(|c| c.len() != nr) {
            return Err(Error::Dimension("columns must share a nonzero length".into()));
        }
        Ok(Self {
            nr,
            nt,
            data: columns.concat(),
        })
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(nr: usize, nt: usize, rows: &[Complex64]) -> Result<Self> {
        if rows.len() != nr * nt || nr == 0 || nt == 0 {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {nr}x{nt} matrix, got {}",
                nr * nt,
                rows.len()
            )));
        }
        let mut data = Vec::with_capacity(nr * nt);
        for c in 0..nt {
            for r in 0..nr {
                data.push(rows[r * nt + c]);
            }
        }
        Ok(Self { nr, nt, data })
    }

    /// Parses `2·nr·nt` reals laid out as `(re, im)` pairs in row-major order.
    pub fn from_interleaved(nr: usize, nt: usize, reals: &[f64]) -> Result<Self> {
        if reals.len() != 2 * nr * nt {
            return Err(Error::Dimension(format!(
                "expected {} reals for a {nr}x{nt} complex matrix, got {}",
                2 * nr * nt,
                reals.len()
            )));
        }
        let rows: Vec<Complex64> = reals
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        Self::from_rows(nr, nt, &rows)
    }

    /// Inverse of [`ChannelMatrix::from_interleaved`].
    pub fn to_interleaved(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.nr * self.nt);
        for r in 0..self.nr {
            for c in 0..self.nt {
                let z = self.get(r, c);
                out.push(z.re);
                out.push(z.im);
            }
        }
        out
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        Self { nr: n, nt: n, data }
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[c * self.nr + r]
    }

    pub fn column(&self, l: usize) -> &[Complex64] {
        &self.data[l * self.nr..(l + 1) * self.nr]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.nr)
    }

    pub fn column_energy(&self, l: usize) -> f64 {
        self.column(l).iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Returns the matrix with its columns reordered: column `i` of the result
    /// is column `order[i]` of `self`.
    pub fn permute_columns(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.nt);
        let columns: Vec<Vec<Complex64>> = order.iter().map(|&l| self.column(l).to_vec()).collect();
        Self::from_columns(&columns).expect("permutation keeps dimensions")
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            nr: self.nr,
            nt: self.nt,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// `u · self` for a row-major `nr × nr` matrix `u`.
    pub fn left_mul(&self, u: &[Complex64]) -> Self {
        assert_eq!(u.len(), self.nr * self.nr);
        let mut data = vec![Complex64::new(0.0, 0.0); self.data.len()];
        for c in 0..self.nt {
            let col = self.column(c);
            for r in 0..self.nr {
                data[c * self.nr + r] = (0..self.nr).map(|j| u[r * self.nr + j] * col[j]).sum();
            }
        }
        Self {
            nr: self.nr,
            nt: self.nt,
            data,
        }
    }

    /// Gram matrix `Hᴴ H`, row-major `nt × nt`.
    pub fn gram(&self) -> Vec<Complex64> {
        let mut g = vec![Complex64::new(0.0, 0.0); self.nt * self.nt];
        for i in 0..self.nt {
            for j in 0..self.nt {
                g[i * self.nt + j] = inner(self.column(i), self.column(j));
            }
        }
        g
    }
}

/// `aᴴ b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// One channel-use snapshot: channel matrix plus linear SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: ChannelMatrix,
    pub gamma: f64,
}

impl ChannelRealization {
    /// Validates a square `nt × nt` channel with `nt ∈ {2, 4, 8}` and a finite,
    /// nonnegative SNR.
    pub fn new(h: ChannelMatrix, gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::invalid(format!("SNR must be finite and >= 0, got {gamma}")));
        }
        if !h.is_finite() {
            return Err(Error::invalid("channel matrix has non-finite entries"));
        }
        if h.nr() != h.nt() || !SUPPORTED_ANTENNAS.contains(&h.nt()) {
            return Err(Error::Dimension(format!(
                "channel must be square with 2, 4 or 8 antennas, got {}x{}",
                h.nr(),
                h.nt()
            )));
        }
        Ok(Self { h, gamma })
    }

    pub fn from_db(h: ChannelMatrix, gamma_db: f64) -> Result<Self> {
        Self::new(h, db_to_linear(gamma_db))
    }

    pub fn gamma_db(&self) -> f64 {
        10.0 * self.gamma.log10()
    }

    pub fn nt(&self) -> usize {
        self.h.nt()
    }

    pub fn nr(&self) -> usize {
        self.h.nr()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws an `nt × nt` matrix with i.i.d. `CN(0, 1)` entries (row-major draw order).
pub fn sample_rayleigh_channel(seed: u64, nt: usize) -> Result<ChannelMatrix> {
    if !SUPPORTED_ANTENNAS.contains(&nt) {
        return Err(Error::invalid(format!("unsupported antenna count {nt}")));
    }
    let mut rng = rng_from_seed(seed);
    let rows: Vec<Complex64> = (0..nt * nt).map(|_| complex_normal(&mut rng)).collect();
    ChannelMatrix::from_rows(nt, nt, &rows)
}

/// Uniform SNR draw in decibels on `[lo_db, hi_db]`.
pub fn sample_snr_db(seed: u64, lo_db: f64, hi_db: f64) -> Result<f64> {
    if !(lo_db < hi_db) || !lo_db.is_finite() || !hi_db.is_finite() {
        return Err(Error::invalid(format!("SNR range [{lo_db}, {hi_db}] is empty")));
    }
    let mut rng = rng_from_seed(seed);
    Ok(rng.random_range(lo_db..=hi_db))
}
