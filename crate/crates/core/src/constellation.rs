use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ConstellationKind {
    Bpsk,
    Qpsk,
    Psk8,
    Qam16,
}

impl ConstellationKind {
    pub const ALL: [ConstellationKind; 4] = [
        ConstellationKind::Bpsk,
        ConstellationKind::Qpsk,
        ConstellationKind::Psk8,
        ConstellationKind::Qam16,
    ];

    /// The three constellations the estimators are trained and evaluated on.
    pub const STANDARD: [ConstellationKind; 3] = [
        ConstellationKind::Qpsk,
        ConstellationKind::Psk8,
        ConstellationKind::Qam16,
    ];

    pub fn order(self) -> usize {
        match self {
            ConstellationKind::Bpsk => 2,
            ConstellationKind::Qpsk => 4,
            ConstellationKind::Psk8 => 8,
            ConstellationKind::Qam16 => 16,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ConstellationKind::Bpsk => "bpsk",
            ConstellationKind::Qpsk => "qpsk",
            ConstellationKind::Psk8 => "8psk",
            ConstellationKind::Qam16 => "16qam",
        }
    }
}

impl fmt::Display for ConstellationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstellationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bpsk" => Ok(ConstellationKind::Bpsk),
            "qpsk" | "4psk" => Ok(ConstellationKind::Qpsk),
            "8psk" | "psk8" => Ok(ConstellationKind::Psk8),
            "16qam" | "qam16" => Ok(ConstellationKind::Qam16),
            other => Err(Error::invalid(format!(
                "unknown constellation `{other}` (expected bpsk, qpsk, 8psk or 16qam)"
            ))),
        }
    }
}

impl TryFrom<String> for ConstellationKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ConstellationKind> for String {
    fn from(k: ConstellationKind) -> String {
        k.name().to_string()
    }
}

/// A unit-average-power symbol alphabet.
///
/// PSK symbols sit on the unit circle starting at angle 0; 16QAM is the
/// `{±1,±3}×{±1,±3}` grid scaled by `1/sqrt(10)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: ConstellationKind,
    symbols: Vec<Complex64>,
}

impl Constellation {
    pub fn new(kind: ConstellationKind) -> Self {
        let symbols = match kind {
            ConstellationKind::Bpsk | ConstellationKind::Qpsk | ConstellationKind::Psk8 => {
                psk(kind.order())
            }
            ConstellationKind::Qam16 => {
                let scale = 1.0 / 10f64.sqrt();
                let levels = [-3.0, -1.0, 1.0, 3.0];
                levels
                    .iter()
                    .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re, im) * scale))
                    .collect()
            }
        };
        Self { kind, symbols }
    }

    /// Same alphabet rotated by `alpha` radians. Mutual information is
    /// invariant to this rotation.
    pub fn rotated(&self, alpha: f64) -> Self {
        let r = Complex64::from_polar(1.0, alpha);
        Self {
            kind: self.kind,
            symbols: self.symbols.iter().map(|s| s * r).collect(),
        }
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn order(&self) -> usize {
        self.symbols.len()
    }

    pub fn bits_per_symbol(&self) -> f64 {
        (self.order() as f64).log2()
    }

    /// Upper bound on the mutual information with `nt` transmit antennas, `log2(nt * M)`.
    pub fn max_mi(&self, nt: usize) -> f64 {
        ((nt * self.order()) as f64).log2()
    }

    pub fn mean_power(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.order() as f64
    }
}

pub fn make_constellation(kind: ConstellationKind) -> Constellation {
    Constellation::new(kind)
}

pub fn standard_set() -> Vec<Constellation> {
    ConstellationKind::STANDARD.iter().map(|&k| Constellation::new(k)).collect()
}

fn psk(m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|k| {
            // exact values on the axes so that QPSK is {1, i, -1, -i} bit for bit
            match (4 * k) % m {
                0 => match 4 * k / m {
                    0 => Complex64::new(1.0, 0.0),
                    1 => Complex64::new(0.0, 1.0),
                    2 => Complex64::new(-1.0, 0.0),
                    _ => Complex64::new(0.0, -1.0),
                },
                _ => Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpsk_is_the_four_axis_points() {
        let c = Constellation::new(ConstellationKind::Qpsk);
        let expected = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        assert_eq!(c.symbols(), &expected);
        assert_eq!(c.mean_power(), 1.0);
    }

    #[test]
    fn bpsk_is_plus_minus_one() {
        let c = Constellation::new(ConstellationKind::Bpsk);
        assert_eq!(c.symbols(), &[Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
    }

    #[test]
    fn qam16_has_unit_power() {
        let c = Constellation::new(ConstellationKind::Qam16);
        assert_eq!(c.order(), 16);
        assert!((c.mean_power() - 1.0).abs() < 1e-12);
        let s = 1.0 / 10f64.sqrt();
        assert!(c.symbols().contains(&Complex64::new(-3.0 * s, 3.0 * s)));
    }

    #[test]
    fn every_kind_has_unit_power_and_distinct_symbols() {
        for kind in ConstellationKind::ALL {
            let c = Constellation::new(kind);
            assert!((c.mean_power() - 1.0).abs() < 1e-12, "{kind}");
            for (i, a) in c.symbols().iter().enumerate() {
                for b in &c.symbols()[i + 1..] {
                    assert!((a - b).norm() > 1e-6, "{kind} has repeated symbols");
                }
            }
        }
    }

    #[test]
    fn max_mi_is_log2_of_supersymbol_count() {
        let c = Constellation::new(ConstellationKind::Psk8);
        assert_eq!(c.max_mi(2), 4.0);
        assert_eq!(c.bits_per_symbol(), 3.0);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!("64qam".parse::<ConstellationKind>().is_err());
        assert_eq!("8PSK".parse::<ConstellationKind>().unwrap(), ConstellationKind::Psk8);
    }
}
