//! Physical-layer quality of transmission for a CO-OFDM lightpath: nonlinear
//! noise threshold, multi-span enhancement, ASE, OSNR with node penalties,
//! coding gain and the OSNR to BER mapping.
//!
//! Parameters are stored in engineering units (1/km, ps²/km, GHz, W/GHz).
//! [`SiTerms`] is the only place where they are converted; every formula
//! below works on those converted terms.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::topology::RoutePath;

/// Smallest residual dispersion ratio used by the enhancement factor; the
/// closed form is 0/0 at zero.
pub const MIN_ZETA: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum QotError {
    #[error("span count must be at least 1")]
    NoSpans,
    #[error("invalid fiber parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("nonlinear threshold undefined: {term} = {value} must be positive")]
    Domain { term: &'static str, value: f64 },
    #[error("unknown modulation format `{0}`")]
    UnknownModulation(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberParams {
    /// Nonlinearity coefficient, 1/(W·km).
    pub gamma: f64,
    /// Linear attenuation, 1/km (0.0461/km is 0.2 dB/km).
    pub alpha: f64,
    /// Group-velocity dispersion, ps²/km.
    pub beta2: f64,
    pub span_length_km: f64,
    /// Residual dispersion ratio, 0..=1.
    pub zeta: f64,
    pub slot_bandwidth_ghz: f64,
    pub guard_band_ghz: f64,
    /// Total channel count 2N+1. Scenario runs set it to the slot count.
    pub channels: usize,
    /// Launched signal spectral density, W/GHz.
    pub launch_density: f64,
    pub planck: f64,
    pub frequency_hz: f64,
    /// Amplifier noise figure, linear.
    pub noise_figure: f64,
    /// Per-hop cross-connect penalty, dB.
    pub node_penalty_db: f64,
    pub d_free: f64,
    pub code_rate: f64,
}

impl Default for FiberParams {
    fn default() -> Self {
        FiberParams {
            gamma: 1.3,
            alpha: 0.0461,
            beta2: -21.7,
            span_length_km: 80.0,
            zeta: 1.0,
            slot_bandwidth_ghz: 12.5,
            guard_band_ghz: 0.0,
            channels: 128,
            launch_density: DEFAULT_LAUNCH_DENSITY,
            planck: 6.626_070_15e-34,
            frequency_hz: 193.4e12,
            noise_figure: 3.16,
            node_penalty_db: 1.0,
            d_free: 1.0,
            code_rate: 1.0,
        }
    }
}

/// Default launch density, W/GHz; close to the optimum of a ~10-span route.
pub const DEFAULT_LAUNCH_DENSITY: f64 = 1.0e-5;

impl FiberParams {
    pub fn validate(&self) -> Result<(), QotError> {
        let positive = [
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("span_length_km", self.span_length_km),
            ("slot_bandwidth_ghz", self.slot_bandwidth_ghz),
            ("launch_density", self.launch_density),
            ("planck", self.planck),
            ("frequency_hz", self.frequency_hz),
            ("noise_figure", self.noise_figure),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(QotError::InvalidParam { name, value });
            }
        }
        let checks = [
            ("beta2", self.beta2, self.beta2 != 0.0 && self.beta2.is_finite()),
            ("zeta", self.zeta, (0.0..=1.0).contains(&self.zeta)),
            ("guard_band_ghz", self.guard_band_ghz, self.guard_band_ghz >= 0.0),
            (
                "code_rate",
                self.code_rate,
                self.code_rate > 0.0 && self.code_rate <= 1.0,
            ),
            ("d_free", self.d_free, self.d_free >= 1.0),
            ("channels", self.channels as f64, self.channels >= 1),
            ("node_penalty_db", self.node_penalty_db, self.node_penalty_db >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok {
                return Err(QotError::InvalidParam { name, value });
            }
        }
        Ok(())
    }
}

/// Parameters converted to SI (Hz, s²/km, W/Hz).
#[derive(Clone, Copy, Debug)]
pub struct SiTerms {
    pub alpha_per_km: f64,
    pub beta2_abs_s2_per_km: f64,
    pub gamma: f64,
    pub slot_spacing_hz: f64,
    pub guard_band_hz: f64,
    pub total_bandwidth_hz: f64,
    pub photon_energy_j: f64,
}

/// W/Hz to W/GHz.
const PER_HZ_TO_PER_GHZ: f64 = 1e9;

impl SiTerms {
    pub fn from_params(p: &FiberParams) -> Self {
        let slot_spacing_hz = (p.slot_bandwidth_ghz + p.guard_band_ghz) * 1e9;
        SiTerms {
            alpha_per_km: p.alpha,
            beta2_abs_s2_per_km: p.beta2.abs() * 1e-24,
            gamma: p.gamma,
            slot_spacing_hz,
            guard_band_hz: p.guard_band_ghz * 1e9,
            total_bandwidth_hz: p.channels as f64 * slot_spacing_hz,
            photon_energy_j: p.planck * p.frequency_hz,
        }
    }

    /// f_w = sqrt(α/|β₂|) / 2π, Hz.
    pub fn dispersion_frequency_hz(&self) -> f64 {
        (self.alpha_per_km / self.beta2_abs_s2_per_km).sqrt() / (2.0 * PI)
    }

    /// B₀ = 4 f_w² / B, Hz.
    pub fn b0_hz(&self) -> f64 {
        4.0 * self.dispersion_frequency_hz().powi(2) / self.total_bandwidth_hz
    }
}

/// Multi-span nonlinear noise enhancement factor h_e.
pub fn noise_enhancement(p: &FiberParams, spans: u32) -> Result<f64, QotError> {
    if spans == 0 {
        return Err(QotError::NoSpans);
    }
    let mut zeta = p.zeta;
    if zeta < MIN_ZETA {
        log::warn!("residual dispersion ratio {zeta} clamped to {MIN_ZETA}");
        zeta = MIN_ZETA;
    }
    let ns = spans as f64;
    let e = (-p.alpha * zeta * p.span_length_km).exp();
    let en = (-p.alpha * zeta * p.span_length_km * ns).exp();
    let num = 2.0 * (ns - 1.0 + en - ns * e) * e;
    let den = ns * (e - 1.0).powi(2);
    Ok(num / den + 1.0)
}

/// Nonlinear threshold density I₀ in W/GHz.
pub fn nonlinear_threshold(p: &FiberParams, spans: u32) -> Result<f64, QotError> {
    let he = noise_enhancement(p, spans)?;
    let si = SiTerms::from_params(p);
    let b0 = si.b0_hz();
    let ratio = si.guard_band_hz / si.slot_spacing_hz;
    let log_bw = (si.total_bandwidth_hz / b0).ln();
    if !(log_bw > 0.0) {
        return Err(QotError::Domain {
            term: "ln(B/B0)",
            value: log_bw,
        });
    }
    let guard_log = if ratio > 0.0 {
        let m = 2.0 * ((p.channels as f64 - 1.0) / 2.0) - 1.0;
        if !(m > 0.0) {
            return Err(QotError::Domain { term: "2N-1", value: m });
        }
        ratio * m.ln()
    } else {
        0.0
    };
    let bracket = log_bw - guard_log;
    if !(bracket > 0.0) {
        return Err(QotError::Domain {
            term: "ln(B/B0) - (dg/dB)ln(2N-1)",
            value: bracket,
        });
    }
    let base = (PI * si.alpha_per_km * si.beta2_abs_s2_per_km / (si.gamma * si.gamma * spans as f64 * he)).sqrt();
    let i0_per_hz = base * (1.0 - ratio).powf(-0.5) * bracket.powf(-0.5);
    Ok(i0_per_hz * PER_HZ_TO_PER_GHZ)
}

/// Nonlinear interference density I_NL = (I/I₀)²·I, W/GHz.
pub fn nonlinear_noise_density(p: &FiberParams, spans: u32) -> Result<f64, QotError> {
    let i0 = nonlinear_threshold(p, spans)?;
    Ok((p.launch_density / i0).powi(2) * p.launch_density)
}

/// ASE density n₀ = 0.5·N_s·e^{αL}·hν·N_F, W/GHz.
pub fn ase_density(p: &FiberParams, spans: u32) -> Result<f64, QotError> {
    if spans == 0 {
        return Err(QotError::NoSpans);
    }
    let si = SiTerms::from_params(p);
    let per_hz = 0.5 * spans as f64 * (p.alpha * p.span_length_km).exp() * si.photon_energy_j * p.noise_figure;
    Ok(per_hz * PER_HZ_TO_PER_GHZ)
}

fn osnr_exact(i: f64, i0: f64, n0: f64) -> f64 {
    let s = i * (-(i / i0).powi(2)).exp();
    s / (n0 + i - s)
}

/// Linear OSNR of `spans` amplified spans at the configured launch density.
pub fn link_osnr(p: &FiberParams, spans: u32) -> Result<f64, QotError> {
    link_osnr_at(p, spans, p.launch_density)
}

/// [`link_osnr`] at an explicit launch density.
pub fn link_osnr_at(p: &FiberParams, spans: u32, launch_density: f64) -> Result<f64, QotError> {
    let i0 = nonlinear_threshold(p, spans)?;
    let n0 = ase_density(p, spans)?;
    Ok(osnr_exact(launch_density, i0, n0))
}

/// Small-nonlinearity approximation I / (n₀ + I·(I/I₀)²).
pub fn link_osnr_approx(p: &FiberParams, spans: u32, launch_density: f64) -> Result<f64, QotError> {
    let i0 = nonlinear_threshold(p, spans)?;
    let n0 = ase_density(p, spans)?;
    let i = launch_density;
    Ok(i / (n0 + i * (i / i0).powi(2)))
}

/// Launch density maximizing the approximate OSNR: (n₀·I₀²/2)^{1/3}.
pub fn optimal_launch_density(p: &FiberParams, spans: u32) -> Result<f64, QotError> {
    let i0 = nonlinear_threshold(p, spans)?;
    let n0 = ase_density(p, spans)?;
    Ok((n0 * i0 * i0 / 2.0).cbrt())
}

/// Amplified spans on a route of `length_km`, at least one.
pub fn span_count(p: &FiberParams, length_km: f64) -> u32 {
    ((length_km / p.span_length_km).ceil() as u32).max(1)
}

/// End-to-end OSNR in dB: link OSNR over the route's spans minus the
/// per-hop cross-connect penalty.
pub fn path_osnr_db(p: &FiberParams, path: &RoutePath) -> Result<f64, QotError> {
    osnr_db_for(p, path.length_km(), path.hop_count())
}

pub fn osnr_db_for(p: &FiberParams, length_km: f64, hops: usize) -> Result<f64, QotError> {
    let spans = span_count(p, length_km);
    Ok(to_db(link_osnr(p, spans)?) - hops as f64 * p.node_penalty_db)
}

/// Coding gain applied to the received OSNR: d_free·R_C·OSNR.
pub fn apparent_osnr(osnr_sd: f64, p: &FiberParams) -> f64 {
    p.d_free * p.code_rate * osnr_sd
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Bpsk,
    #[default]
    Qpsk,
}

impl FromStr for Modulation {
    type Err = QotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            other => Err(QotError::UnknownModulation(other.to_string())),
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
        })
    }
}

/// Gaussian-channel bit error rate for a linear (apparent) OSNR.
pub fn osnr_to_ber(osnr_app: f64, modulation: Modulation) -> f64 {
    let snr = osnr_app.max(0.0);
    match modulation {
        Modulation::Bpsk => 0.5 * erfc(snr.sqrt()),
        Modulation::Qpsk => 0.5 * erfc((snr / 2.0).sqrt()),
    }
}

/// OSNR (dB, end to end) to BER with coding gain applied.
pub fn ber_for_osnr_db(p: &FiberParams, osnr_db: f64, modulation: Modulation) -> f64 {
    osnr_to_ber(apparent_osnr(from_db(osnr_db), p), modulation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn single_span_enhancement_is_one() {
        assert_eq!(noise_enhancement(&FiberParams::default(), 1).unwrap(), 1.0);
    }

    #[test]
    fn two_span_enhancement() {
        let h = noise_enhancement(&FiberParams::default(), 2).unwrap();
        assert!((h - 1.025).abs() < 1e-3, "{h}");
    }

    #[test]
    fn enhancement_monotone_in_spans() {
        let p = FiberParams::default();
        let mut prev = 0.0;
        for n in 1..=20 {
            let h = noise_enhancement(&p, n).unwrap();
            assert!(h >= prev && h >= 1.0);
            prev = h;
        }
        assert_eq!(noise_enhancement(&p, 0), Err(QotError::NoSpans));
    }

    #[test]
    fn zero_zeta_is_clamped() {
        let p = FiberParams {
            zeta: 0.0,
            ..FiberParams::default()
        };
        let h = noise_enhancement(&p, 5).unwrap();
        assert!(h.is_finite() && h >= 1.0);
    }

    #[test]
    fn threshold_scales_inverse_with_gamma() {
        let p = FiberParams::default();
        let q = FiberParams {
            gamma: 2.0 * p.gamma,
            ..p.clone()
        };
        let a = nonlinear_threshold(&p, 4).unwrap();
        let b = nonlinear_threshold(&q, 4).unwrap();
        assert!(rel(b, a / 2.0) < 1e-14);
    }

    #[test]
    fn zero_guard_band_ignores_channel_log() {
        // with no guard band the 2N-1 term drops out, even for tiny grids
        let p = FiberParams::default();
        let q = FiberParams {
            channels: 2,
            ..p.clone()
        };
        let tiny = SiTerms::from_params(&q);
        let i0 = nonlinear_threshold(&q, 1).unwrap();
        let expect = (PI * p.alpha * p.beta2.abs() * 1e-24 / (p.gamma * p.gamma)).sqrt()
            / (tiny.total_bandwidth_hz / tiny.b0_hz()).ln().sqrt()
            * 1e9;
        assert!(rel(i0, expect) < 1e-12);
    }

    #[test]
    fn threshold_order_of_magnitude() {
        // a few hundred µW/GHz for a single span on a 1.6 THz band
        let i0 = nonlinear_threshold(&FiberParams::default(), 1).unwrap();
        assert!(i0 > 1e-4 && i0 < 1e-3, "{i0}");
    }

    #[test]
    fn guard_band_domain_error() {
        let p = FiberParams {
            guard_band_ghz: 2.0,
            channels: 1,
            ..FiberParams::default()
        };
        assert!(matches!(nonlinear_threshold(&p, 1), Err(QotError::Domain { .. })));
    }

    #[test]
    fn low_power_limit_is_ase_limited() {
        let p = FiberParams::default();
        let n0 = ase_density(&p, 5).unwrap();
        let i = 1e-12;
        let osnr = link_osnr_at(&p, 5, i).unwrap();
        assert!(rel(osnr, i / n0) < 1e-6);
    }

    #[test]
    fn approx_agrees_at_low_power() {
        let p = FiberParams::default();
        let i0 = nonlinear_threshold(&p, 10).unwrap();
        for frac in [0.01, 0.05, 0.1, 0.2, 0.3] {
            let i = frac * i0;
            let a = link_osnr_at(&p, 10, i).unwrap();
            let b = link_osnr_approx(&p, 10, i).unwrap();
            // the two forms differ at second order in I/I0
            assert!(rel(a, b) < 1.1 * frac * frac, "frac {frac}: {a} vs {b}");
        }
    }

    #[test]
    fn default_launch_near_optimum() {
        let p = FiberParams::default();
        let opt = optimal_launch_density(&p, 10).unwrap();
        assert!(rel(p.launch_density, opt) < 0.2, "{opt:e}");
    }

    #[test]
    fn node_penalty_subtracts_per_hop() {
        let p = FiberParams::default();
        let q = FiberParams {
            node_penalty_db: 0.0,
            ..p.clone()
        };
        let base = osnr_db_for(&q, 400.0, 1).unwrap();
        assert!((base - to_db(link_osnr(&q, 5).unwrap())).abs() < 1e-12);
        let three = osnr_db_for(&p, 400.0, 3).unwrap();
        assert!((base - three - 3.0).abs() < 1e-12);
    }

    #[test]
    fn coding_gain() {
        let p = FiberParams::default();
        assert_eq!(apparent_osnr(7.5, &p), 7.5);
        let coded = FiberParams {
            d_free: 5.0,
            code_rate: 0.5,
            ..p
        };
        assert_eq!(apparent_osnr(4.0, &coded), 10.0);
        let gain_db = to_db(apparent_osnr(from_db(12.0), &coded)) - 12.0;
        assert!((gain_db - to_db(2.5)).abs() < 1e-12);
    }

    #[test]
    fn ber_mapping() {
        assert_eq!(osnr_to_ber(0.0, Modulation::Qpsk), 0.5);
        assert_eq!(osnr_to_ber(0.0, Modulation::Bpsk), 0.5);
        let b = osnr_to_ber(10.0, Modulation::Qpsk);
        assert!(rel(b, 7.827_011_290_012_744e-4) < 1e-9, "{b}");
        let sweep: Vec<f64> = [0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|&s| osnr_to_ber(s, Modulation::Qpsk))
            .collect();
        assert!(sweep.windows(2).all(|w| w[1] < w[0]));
        assert!(matches!(
            "ook".parse::<Modulation>(),
            Err(QotError::UnknownModulation(_))
        ));
    }

    #[test]
    fn parameter_validation() {
        assert!(FiberParams::default().validate().is_ok());
        let bad = FiberParams {
            code_rate: 1.5,
            ..FiberParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = FiberParams {
            beta2: 0.0,
            ..FiberParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
