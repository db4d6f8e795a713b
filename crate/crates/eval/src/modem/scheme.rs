//! Scheme parameters and the derived carrier layout.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use uasim_core::rng::stream_rng;

use crate::error::{EvalError, Result};

const PRESETS: &str = include_str!("schemes.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Bpsk,
    Qpsk,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
        }
    }

    /// BPSK: `b -> 1 - 2b`. QPSK (Gray): `((1 - 2b0) + i(1 - 2b1)) / sqrt(2)`.
    pub fn map(self, bits: &[u8]) -> Complex64 {
        match self {
            Modulation::Bpsk => Complex64::new(1.0 - 2.0 * bits[0] as f64, 0.0),
            Modulation::Qpsk => {
                Complex64::new(1.0 - 2.0 * bits[0] as f64, 1.0 - 2.0 * bits[1] as f64) * std::f64::consts::FRAC_1_SQRT_2
            }
        }
    }

    /// Hard decision, the inverse of [`Modulation::map`].
    pub fn decide(self, x: Complex64, out: &mut Vec<u8>) {
        out.push((x.re < 0.0) as u8);
        if self == Modulation::Qpsk {
            out.push((x.im < 0.0) as u8);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfdmScheme {
    pub name: String,
    pub num_carriers: usize,
    pub num_null_carriers: usize,
    pub center_carrier_number: usize,
    /// In samples.
    pub cp_length: usize,
    pub windowed: bool,
    pub modulation: Modulation,
    pub pilot_count: usize,
    pub bits_per_block: usize,
    /// In bytes; informational only.
    pub frame_length: usize,
    /// Seed of the known pilot sequence shared by both link ends.
    #[serde(default)]
    pub pilot_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Deserialize)]
struct PresetFile {
    scheme: Vec<OfdmScheme>,
}

/// Which FFT bins carry pilots and data, in ascending frequency order.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierLayout {
    /// FFT bin of every used carrier, lowest frequency first.
    pub bins: Vec<usize>,
    /// Indices into `bins` that carry pilots; always includes both ends.
    pub pilot_slots: Vec<usize>,
    /// Indices into `bins` that carry data.
    pub data_slots: Vec<usize>,
    pub pilots: Vec<Complex64>,
}

impl OfdmScheme {
    /// Every preset shipped with the crate: schemes "1" to "32" and "NOF1".
    pub fn presets() -> Vec<OfdmScheme> {
        let file: PresetFile = toml::from_str(PRESETS).expect("bundled scheme presets parse");
        file.scheme
    }

    pub fn preset(name: &str) -> Result<OfdmScheme> {
        Self::presets()
            .into_iter()
            .find(|s| s.name == name)
            .ok_or_else(|| EvalError::Config(format!("no scheme preset named {name:?}")))
    }

    /// Parses a TOML document holding `[[scheme]]` tables.
    pub fn parse_many(text: &str) -> Result<Vec<OfdmScheme>> {
        let file: PresetFile = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        for s in &file.scheme {
            s.validate()?;
        }
        Ok(file.scheme)
    }

    pub fn data_carriers(&self) -> usize {
        self.bits_per_block / self.modulation.bits_per_symbol()
    }

    pub fn used_carriers(&self) -> usize {
        self.data_carriers() + self.pilot_count
    }

    /// Spacing between used carriers in bins.
    pub fn carrier_step(&self) -> usize {
        if self.windowed {
            2
        } else {
            1
        }
    }

    /// Samples per block including the prefix.
    pub fn block_length(&self) -> usize {
        self.num_carriers + self.cp_length
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(EvalError::Config(format!("scheme {}: {m}", self.name)));
        if self.num_carriers == 0 {
            return fail("no carriers".into());
        }
        if self.num_null_carriers >= self.num_carriers {
            return fail(format!("{} null carriers of {}", self.num_null_carriers, self.num_carriers));
        }
        if self.cp_length > self.num_carriers {
            return fail(format!("prefix of {} samples exceeds the block", self.cp_length));
        }
        if self.bits_per_block == 0 || self.bits_per_block % self.modulation.bits_per_symbol() != 0 {
            return fail(format!("{} bits per block do not fill whole symbols", self.bits_per_block));
        }
        if self.pilot_count < 2 {
            return fail("at least two pilots are needed for interpolation".into());
        }
        let span = self.carrier_step() * (self.used_carriers() - 1) + 1;
        if span > self.num_carriers {
            return fail(format!("{} used carriers span {span} bins of {}", self.used_carriers(), self.num_carriers));
        }
        Ok(())
    }

    /// The used carriers form a contiguous comb centred on DC. Pilots sit at
    /// `round(k (U - 1) / (P - 1))` among the `U` used carriers, so both band
    /// edges are pilots and data carriers are always bracketed.
    pub fn layout(&self) -> Result<CarrierLayout> {
        self.validate()?;
        let (n, u, p, step) = (self.num_carriers, self.used_carriers(), self.pilot_count, self.carrier_step());
        let lowest = -((step * ((u - 1) / 2)) as i64);
        let bins = (0..u).map(|i| (lowest + (step * i) as i64).rem_euclid(n as i64) as usize).collect();
        let pilot_slots: Vec<usize> =
            (0..p).map(|k| ((k * (u - 1)) as f64 / (p - 1) as f64).round() as usize).collect();
        let mut is_pilot = vec![false; u];
        pilot_slots.iter().for_each(|&s| is_pilot[s] = true);
        let data_slots = (0..u).filter(|&s| !is_pilot[s]).collect();
        let mut rng = stream_rng(self.pilot_seed, 0);
        let pilots = (0..p)
            .map(|_| Modulation::Qpsk.map(&[rng.random_range(0..2u8), rng.random_range(0..2u8)]))
            .collect();
        Ok(CarrierLayout { bins, pilot_slots, data_slots, pilots })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_complete_and_valid() {
        let all = OfdmScheme::presets();
        assert_eq!(all.len(), 33);
        for s in &all {
            s.validate().unwrap();
            assert!(s.num_null_carriers < s.num_carriers);
        }
        let windowed = all.iter().filter(|s| s.windowed).count();
        assert_eq!(windowed, 16);
        assert_eq!(OfdmScheme::preset("27").unwrap().bits_per_block, 818);
        let nof1 = OfdmScheme::preset("NOF1").unwrap();
        assert_eq!((nof1.num_carriers, nof1.pilot_count, nof1.cp_length), (1024, 256, 480));
        assert_eq!(nof1.modulation, Modulation::Qpsk);
        assert_eq!(nof1.used_carriers(), 1024);
        assert!(OfdmScheme::preset("33").is_err());
    }

    #[test]
    fn layout_geometry() {
        for s in OfdmScheme::presets() {
            let l = s.layout().unwrap();
            assert_eq!(l.bins.len(), s.used_carriers());
            assert_eq!(l.data_slots.len(), s.data_carriers());
            assert_eq!(l.pilot_slots.first(), Some(&0));
            assert_eq!(l.pilot_slots.last(), Some(&(s.used_carriers() - 1)));
            let mut b = l.bins.clone();
            b.sort();
            b.dedup();
            assert_eq!(b.len(), l.bins.len());
            assert!(l.pilots.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn mapping_round_trip() {
        for m in [Modulation::Bpsk, Modulation::Qpsk] {
            let k = m.bits_per_symbol();
            for v in 0..(1u8 << k) {
                let bits: Vec<u8> = (0..k).map(|i| (v >> i) & 1).collect();
                let mut out = Vec::new();
                m.decide(m.map(&bits), &mut out);
                assert_eq!(out, bits);
                assert!((m.map(&bits).norm() - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(Modulation::Bpsk.map(&[0]), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn rejects_inconsistent_schemes() {
        let mut s = OfdmScheme::preset("2").unwrap();
        s.bits_per_block = 600;
        assert!(s.validate().is_err());
        let mut q = OfdmScheme::preset("NOF1").unwrap();
        q.bits_per_block = 1535;
        assert!(q.validate().is_err());
        assert!(OfdmScheme::parse_many("[[scheme]]\nname = 1").is_err());
    }
}
