//! Network input features `x = f(γ, H)`.
//!
//! Every option starts from the SNR-scaled column energies `γ‖h_l‖²` sorted
//! ascending. The columns are reindexed by that sort before any pairwise
//! quantity is computed, which makes every option invariant to the labeling
//! of the transmit antennas.
//!
//! | option   | F      | composition after the sorted energies                       |
//! |----------|--------|-------------------------------------------------------------|
//! | `i`      | 4      | Re, Im of `h1ᴴh2 / (‖h1‖‖h2‖)`                              |
//! | `ii`     | 4      | Hermitian angle, Kasner pseudo-angle                         |
//! | `iii`    | 6      | four sorted QPSK cross distances                             |
//! | `iv`     | 8      | distances, normalized projection                             |
//! | `v`      | 8      | distances, angles                                            |
//! | `multi4` | 16     | six angle pairs `(θ, φ)` in lexicographic column-pair order   |
//! | `quant8` | 8 + 2Q | Q quantiles of the 28 Hermitian angles, then of the 28 phases |
//! | `raw`    | 1+2N²  | SNR in dB followed by raw `(re, im)` entries (baseline only)  |

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{inner, ChannelMatrix};
use crate::error::{Error, Result};
use crate::geometry::{angles_from_inner, AnglePair};
use crate::ops::{self, OpCount};

pub const DEFAULT_QUANTILES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureOption {
    I,
    II,
    III,
    IV,
    V,
    Multi4,
    Quant8(usize),
    /// SNR and raw channel entries; the un-engineered baseline.
    Raw,
}

impl FeatureOption {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureOption::I => "i",
            FeatureOption::II => "ii",
            FeatureOption::III => "iii",
            FeatureOption::IV => "iv",
            FeatureOption::V => "v",
            FeatureOption::Multi4 => "multi4",
            FeatureOption::Quant8(_) => "quant8",
            FeatureOption::Raw => "raw",
        }
    }

    pub fn quantiles(&self) -> Option<usize> {
        match self {
            FeatureOption::Quant8(q) => Some(*q),
            _ => None,
        }
    }

    /// Antenna count the option is defined for; `None` means any.
    pub fn antennas(&self) -> Option<usize> {
        match self {
            FeatureOption::I | FeatureOption::II | FeatureOption::III | FeatureOption::IV | FeatureOption::V => Some(2),
            FeatureOption::Multi4 => Some(4),
            FeatureOption::Quant8(_) => Some(8),
            FeatureOption::Raw => None,
        }
    }

    /// Feature count for an `nt × nt` channel.
    pub fn len(&self, nt: usize) -> usize {
        match self {
            FeatureOption::I | FeatureOption::II => 4,
            FeatureOption::III => 6,
            FeatureOption::IV | FeatureOption::V => 8,
            FeatureOption::Multi4 => 16,
            FeatureOption::Quant8(q) => 8 + 2 * q,
            FeatureOption::Raw => 1 + 2 * nt * nt,
        }
    }

    pub fn check_antennas(&self, nt: usize) -> Result<()> {
        match self.antennas() {
            Some(n) if n != nt => Err(Error::invalid(format!(
                "feature option {self} needs {n} antennas, channel has {nt}"
            ))),
            _ => Ok(()),
        }
    }

    /// Parses a stable option name plus the quantile count used by `quant8`.
    pub fn from_parts(name: &str, quantiles: Option<usize>) -> Result<Self> {
        let opt: FeatureOption = name.parse()?;
        Ok(match (opt, quantiles) {
            (FeatureOption::Quant8(_), Some(q)) => FeatureOption::Quant8(q),
            (o, _) => o,
        })
    }
}

impl fmt::Display for FeatureOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(q) = s.strip_prefix("quant8:") {
            let q: usize = q
                .parse()
                .map_err(|_| Error::invalid(format!("bad quantile count in `{s}`")))?;
            if q < 2 {
                return Err(Error::invalid("quant8 needs at least 2 quantiles"));
            }
            return Ok(FeatureOption::Quant8(q));
        }
        Ok(match s.as_str() {
            "i" => FeatureOption::I,
            "ii" => FeatureOption::II,
            "iii" => FeatureOption::III,
            "iv" => FeatureOption::IV,
            "v" => FeatureOption::V,
            "multi4" => FeatureOption::Multi4,
            "quant8" => FeatureOption::Quant8(DEFAULT_QUANTILES),
            "raw" => FeatureOption::Raw,
            other => {
                return Err(Error::invalid(format!(
                    "unknown feature option `{other}` (expected i, ii, iii, iv, v, multi4, quant8 or raw)"
                )))
            }
        })
    }
}

impl Serialize for FeatureOption {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FeatureOption {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub option: FeatureOption,
    pub values: Vec<f64>,
    pub nt: usize,
}

/// Column order that sorts the energies ascending (stable on ties).
fn energy_order(energies: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    order
}

fn column_energies(h: &ChannelMatrix) -> Vec<f64> {
    ops::record((2 * h.nr() * h.nt()) as u64, 0, 0, 0);
    (0..h.nt()).map(|l| h.column_energy(l)).collect()
}

/// Sorted `γ‖h_l‖²` and the matching column order.
fn scaled_energies(gamma: f64, h: &ChannelMatrix) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let energies = column_energies(h);
    let order = energy_order(&energies);
    let sorted: Vec<f64> = order.iter().map(|&l| energies[l]).collect();
    ops::record(h.nt() as u64, 0, 0, 0);
    let scaled = sorted.iter().map(|e| gamma * e).collect();
    (scaled, sorted, order)
}

fn checked_inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    ops::record(4 * a.len() as u64, 0, 0, 0);
    inner(a, b)
}

fn counted_angles(p: Complex64, e1: f64, e2: f64) -> Result<AnglePair> {
    // |p|², e1·e2, the ratio; sqrt, acos and atan2
    ops::record(4, 0, 0, 3);
    angles_from_inner(p, e1, e2)
}

fn require_nonzero(energies: &[f64]) -> Result<()> {
    if let Some(l) = energies.iter().position(|&e| !(e > 0.0)) {
        return Err(Error::invalid(format!("column {l} of H has zero norm")));
    }
    Ok(())
}

/// State shared by the two-antenna options.
struct PairState {
    scaled: Vec<f64>,
    e: [f64; 2],
    p: Complex64,
}

fn pair_state(gamma: f64, h: &ChannelMatrix) -> Result<PairState> {
    if h.nt() != 2 {
        return Err(Error::invalid(format!("option needs two antennas, channel has {}", h.nt())));
    }
    let (scaled, e, order) = scaled_energies(gamma, h);
    require_nonzero(&e)?;
    let p = checked_inner(h.column(order[0]), h.column(order[1]));
    Ok(PairState {
        scaled,
        e: [e[0], e[1]],
        p,
    })
}

fn cross_distances(gamma: f64, st: &PairState) -> [f64; 4] {
    let units = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    // u·p (4), ×2, ×γ per distance
    ops::record(4 * 6, 0, 0, 0);
    let mut d = units.map(|u| gamma * (st.e[0] + st.e[1] - 2.0 * (u * st.p).re));
    d.sort_by(f64::total_cmp);
    d
}

fn normalized_projection(st: &PairState) -> [f64; 2] {
    // e1·e2, complex over real; sqrt
    ops::record(3, 0, 0, 1);
    let rho = st.p / (st.e[0] * st.e[1]).sqrt();
    [rho.re, rho.im]
}

/// The four distinct cross distances `γ(‖h1‖² + ‖h2‖² - 2 Re{u h1ᴴh2})`,
/// `u ∈ {1, i, -1, -i}`, sorted ascending.
pub fn qpsk_cross_distances(gamma: f64, h: &ChannelMatrix) -> Result<[f64; 4]> {
    let st = pair_state(gamma, h)?;
    Ok(cross_distances(gamma, &st))
}

/// Extracts the feature vector for `option`.
pub fn extract(option: FeatureOption, gamma: f64, h: &ChannelMatrix) -> Result<FeatureVector> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::invalid(format!("SNR must be finite and >= 0, got {gamma}")));
    }
    option.check_antennas(h.nt())?;
    let values = match option {
        FeatureOption::I | FeatureOption::II | FeatureOption::III | FeatureOption::IV | FeatureOption::V => {
            let st = pair_state(gamma, h)?;
            let mut v = st.scaled.clone();
            match option {
                FeatureOption::I => v.extend(normalized_projection(&st)),
                FeatureOption::II => {
                    let a = counted_angles(st.p, st.e[0], st.e[1])?;
                    v.extend([a.theta_h, a.phi]);
                }
                FeatureOption::III => v.extend(cross_distances(gamma, &st)),
                FeatureOption::IV => {
                    v.extend(cross_distances(gamma, &st));
                    v.extend(normalized_projection(&st));
                }
                _ => {
                    v.extend(cross_distances(gamma, &st));
                    let a = counted_angles(st.p, st.e[0], st.e[1])?;
                    v.extend([a.theta_h, a.phi]);
                }
            }
            v
        }
        FeatureOption::Multi4 => return extract_multi4(gamma, h),
        FeatureOption::Quant8(q) => return extract_quantile(gamma, h, q),
        FeatureOption::Raw => {
            if !(gamma > 0.0) {
                return Err(Error::invalid("raw features need a positive SNR"));
            }
            ops::record(1, 0, 1, 0);
            let mut v = vec![10.0 * gamma.log10()];
            v.extend(h.to_interleaved());
            v
        }
    };
    Ok(FeatureVector {
        option,
        values,
        nt: h.nt(),
    })
}

/// Operations recorded by one call of [`extract`] for `option` on an
/// `nt × nt` channel.
pub fn static_op_count(option: FeatureOption, nt: usize) -> OpCount {
    let nr = nt as u64;
    let n = nt as u64;
    let energies = OpCount::new(2 * nr * n + n, 0, 0, 0);
    let inner = OpCount::new(4 * nr, 0, 0, 0);
    let angles = OpCount::new(4, 0, 0, 3);
    let distances = OpCount::new(24, 0, 0, 0);
    let projection = OpCount::new(3, 0, 0, 1);
    let pairs = n * n.saturating_sub(1) / 2;
    let per_pair = inner + angles;
    let pair_total = OpCount::new(per_pair.products * pairs, 0, 0, per_pair.other * pairs);
    match option {
        FeatureOption::I => energies + inner + projection,
        FeatureOption::II => energies + inner + angles,
        FeatureOption::III => energies + inner + distances,
        FeatureOption::IV => energies + inner + distances + projection,
        FeatureOption::V => energies + inner + distances + angles,
        FeatureOption::Multi4 => energies + pair_total,
        FeatureOption::Quant8(q) => energies + pair_total + OpCount::new(2 * q as u64, 0, 0, 0),
        FeatureOption::Raw => OpCount::new(1, 0, 1, 0),
    }
}

/// Angle pairs of all column pairs `(i, j)`, `i < j`, after energy sorting.
fn sorted_pair_angles(gamma: f64, h: &ChannelMatrix) -> Result<(Vec<f64>, Vec<AnglePair>)> {
    let (scaled, e, order) = scaled_energies(gamma, h);
    require_nonzero(&e)?;
    let n = h.nt();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let p = checked_inner(h.column(order[i]), h.column(order[j]));
            pairs.push(counted_angles(p, e[i], e[j])?);
        }
    }
    Ok((scaled, pairs))
}

/// Four sorted energies and the six `(θ, φ)` pairs: 16 features.
pub fn extract_multi4(gamma: f64, h: &ChannelMatrix) -> Result<FeatureVector> {
    if h.nt() != 4 {
        return Err(Error::invalid(format!("multi4 needs four antennas, channel has {}", h.nt())));
    }
    let (mut values, pairs) = sorted_pair_angles(gamma, h)?;
    for a in pairs {
        values.push(a.theta_h);
        values.push(a.phi);
    }
    Ok(FeatureVector {
        option: FeatureOption::Multi4,
        values,
        nt: 4,
    })
}

/// Eight sorted energies, then `q` quantiles of the Hermitian angles and `q`
/// quantiles of the pseudo-angles at probabilities `0, 1/(q-1), ..., 1`.
pub fn extract_quantile(gamma: f64, h: &ChannelMatrix, q: usize) -> Result<FeatureVector> {
    if h.nt() != 8 {
        return Err(Error::invalid(format!("quant8 needs eight antennas, channel has {}", h.nt())));
    }
    if q < 2 {
        return Err(Error::invalid("at least two quantiles are required"));
    }
    let (mut values, pairs) = sorted_pair_angles(gamma, h)?;
    let mut theta: Vec<f64> = pairs.iter().map(|a| a.theta_h).collect();
    let mut phi: Vec<f64> = pairs.iter().map(|a| a.phi).collect();
    theta.sort_by(f64::total_cmp);
    phi.sort_by(f64::total_cmp);
    values.extend(quantiles_sorted(&theta, q));
    values.extend(quantiles_sorted(&phi, q));
    Ok(FeatureVector {
        option: FeatureOption::Quant8(q),
        values,
        nt: 8,
    })
}

/// Quantiles of sorted data at `q` equally spaced probabilities, linearly
/// interpolating between order statistics.
pub fn quantiles_sorted(sorted: &[f64], q: usize) -> Vec<f64> {
    ops::record(q as u64, 0, 0, 0);
    let n = sorted.len();
    (0..q)
        .map(|i| {
            let pos = i as f64 / (q - 1) as f64 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        })
        .collect()
}
