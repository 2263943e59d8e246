//! Gray-labelled QAM and PSK constellations with unit average energy.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Qam,
    Psk,
}

/// Constellation descriptor: order and family.
///
/// Parsed from strings such as `bpsk`, `qpsk`, `qam16`, `qam64`, `psk8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Modulation {
    order: usize,
    family: Family,
}

impl Modulation {
    /// Square orders (4, 16, 64, 256) map to QAM, everything else to PSK.
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::Config(format!(
                "constellation order {order} must be a power of two >= 2"
            )));
        }
        let bits = order.trailing_zeros();
        let family = if bits % 2 == 0 { Family::Qam } else { Family::Psk };
        Ok(Self { order, family })
    }

    pub fn psk(order: usize) -> Result<Self> {
        let mut m = Self::new(order)?;
        m.family = Family::Psk;
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn bits(&self) -> usize {
        self.order.trailing_zeros() as usize
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.family, self.order) {
            (Family::Psk, 2) => write!(f, "bpsk"),
            (Family::Qam, 4) => write!(f, "qpsk"),
            (Family::Qam, m) => write!(f, "qam{m}"),
            (Family::Psk, m) => write!(f, "psk{m}"),
        }
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let parse_order = |digits: &str| {
            digits
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("unknown modulation '{s}'")))
        };
        match lower.as_str() {
            "bpsk" => Self::new(2),
            "qpsk" | "4qam" => Self::new(4),
            _ => {
                if let Some(d) = lower.strip_prefix("qam") {
                    let m = Self::new(parse_order(d)?)?;
                    if m.family != Family::Qam {
                        return Err(Error::Config(format!(
                            "'{s}': square QAM needs an even number of bits per symbol"
                        )));
                    }
                    Ok(m)
                } else if let Some(d) = lower.strip_prefix("psk") {
                    Self::psk(parse_order(d)?)
                } else {
                    Err(Error::Config(format!("unknown modulation '{s}'")))
                }
            }
        }
    }
}

impl TryFrom<String> for Modulation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Modulation> for String {
    fn from(m: Modulation) -> String {
        m.to_string()
    }
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

/// Points indexed by bit label; label bits are read MSB first.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    modulation: Modulation,
    points: Vec<Complex64>,
    // QAM: per-axis level count and scale, used by the fast slicer.
    side: usize,
    scale: f64,
    // QAM: level index -> Gray label along one axis.
    axis_label: Vec<usize>,
    // PSK: angular position -> label.
    ring_label: Vec<usize>,
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let m = modulation.order();
        let mut points = vec![Complex64::new(0.0, 0.0); m];
        let mut side = 0;
        let mut scale = 0.0;
        let mut axis_label = Vec::new();
        let mut ring_label = Vec::new();
        match modulation.family() {
            Family::Qam => {
                let half = modulation.bits() / 2;
                side = 1 << half;
                // average energy of the unnormalised grid {±1, ±3, ...}^2
                scale = (2.0 * (m as f64 - 1.0) / 3.0).sqrt().recip();
                axis_label = (0..side).map(gray).collect();
                for (i, &li) in axis_label.iter().enumerate() {
                    for (q, &lq) in axis_label.iter().enumerate() {
                        let re = (2.0 * i as f64 - (side as f64 - 1.0)) * scale;
                        let im = (2.0 * q as f64 - (side as f64 - 1.0)) * scale;
                        points[(li << half) | lq] = Complex64::new(re, im);
                    }
                }
            }
            Family::Psk => {
                ring_label = (0..m).map(gray).collect();
                for (p, &label) in ring_label.iter().enumerate() {
                    points[label] = Complex64::from_polar(1.0, 2.0 * PI * p as f64 / m as f64);
                }
            }
        }
        Self {
            modulation,
            points,
            side,
            scale,
            axis_label,
            ring_label,
        }
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits(&self) -> usize {
        self.modulation.bits()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Label of the nearest constellation point.
    pub fn slice(&self, z: Complex64) -> usize {
        match self.modulation.family() {
            Family::Qam => {
                let half = self.bits() / 2;
                let level = |v: f64| {
                    let idx = ((v / self.scale + (self.side as f64 - 1.0)) / 2.0).round();
                    idx.clamp(0.0, (self.side - 1) as f64) as usize
                };
                (self.axis_label[level(z.re)] << half) | self.axis_label[level(z.im)]
            }
            Family::Psk => {
                let m = self.order() as f64;
                let pos = (z.arg() * m / (2.0 * PI)).round().rem_euclid(m) as usize;
                self.ring_label[pos % self.order()]
            }
        }
    }

    /// Label of an exact member of the constellation, if it is one.
    pub fn label_of(&self, value: Complex64) -> Option<usize> {
        let label = self.slice(value);
        ((self.points[label] - value).norm() <= 1e-9).then_some(label)
    }

    /// Writes the `bits()` label bits of `label` MSB first.
    pub fn label_to_bits(&self, label: usize, out: &mut [u8]) {
        let k = self.bits();
        for (j, b) in out[..k].iter_mut().enumerate() {
            *b = ((label >> (k - 1 - j)) & 1) as u8;
        }
    }

    pub fn bits_to_label(&self, bits: &[u8]) -> usize {
        bits[..self.bits()]
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<Constellation> {
        ["bpsk", "qpsk", "psk8", "qam16", "psk32", "qam64", "qam256"]
            .iter()
            .map(|s| Constellation::new(s.parse().unwrap()))
            .collect()
    }

    #[test]
    fn unit_average_energy() {
        for c in all() {
            let e: f64 =
                c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / c.order() as f64;
            assert!((e - 1.0).abs() < 1e-12, "{}: {e}", c.modulation());
        }
    }

    #[test]
    fn slicer_is_identity_on_points() {
        for c in all() {
            for (label, &p) in c.points().iter().enumerate() {
                assert_eq!(c.slice(p), label);
                assert_eq!(c.slice(p * 1.05 + Complex64::new(0.01, -0.01)), label);
            }
        }
    }

    #[test]
    fn slicer_matches_brute_force() {
        let c = Constellation::new("qam16".parse().unwrap());
        for i in -20..=20 {
            for q in -20..=20 {
                let z = Complex64::new(i as f64 * 0.071, q as f64 * 0.067);
                let brute = (0..16)
                    .min_by(|&a, &b| {
                        (c.point(a) - z)
                            .norm()
                            .partial_cmp(&(c.point(b) - z).norm())
                            .unwrap()
                    })
                    .unwrap();
                assert_eq!(
                    (c.point(c.slice(z)) - z).norm(),
                    (c.point(brute) - z).norm()
                );
            }
        }
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let c = Constellation::new("qam64".parse().unwrap());
        let d_min = 2.0 * c.scale;
        for a in 0..64 {
            for b in 0..64 {
                if ((c.point(a) - c.point(b)).norm() - d_min).abs() < 1e-9 {
                    assert_eq!((a ^ b).count_ones(), 1);
                }
            }
        }
        let p = Constellation::new("psk8".parse().unwrap());
        for a in 0..8 {
            let next = p.slice(p.point(a) * Complex64::from_polar(1.0, PI / 4.0));
            assert_eq!((a ^ next).count_ones(), 1);
        }
    }

    #[test]
    fn qpsk_label_zero() {
        let c = Constellation::new("qpsk".parse().unwrap());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c.point(0) - Complex64::new(-h, -h)).norm() < 1e-15);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["bpsk", "qpsk", "qam16", "qam64", "psk8"] {
            let m: Modulation = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("qam8".parse::<Modulation>().is_err());
        assert!("qam12".parse::<Modulation>().is_err());
        assert!("foo".parse::<Modulation>().is_err());
    }
}
