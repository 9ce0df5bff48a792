//! Video quality model: an analytic GOP packet-loss generator that stands in
//! for decoded-video measurements, its exact expectation by enumeration, and
//! the PSNR/utility/cost functions used by the RSA engine.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// PSNR reported for a lossless reconstruction (mse = 0), dB.
pub const PSNR_CAP_DB: f64 = 60.0;
/// Utility at or below which the video cost saturates.
pub const UTILITY_FLOOR: f64 = 1e-3;
/// log10(1 / UTILITY_FLOOR).
pub const MAX_VIDEO_COST: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum VideoError {
    #[error("mean squared error must be non-negative, got {0}")]
    NegativeMse(f64),
    #[error("invalid GOP model: {0}")]
    InvalidGop(String),
    #[error("unknown frame type `{0}`")]
    UnknownFrame(char),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameType {
    I,
    P,
    B,
}

impl FrameType {
    pub fn is_anchor(self) -> bool {
        matches!(self, FrameType::I | FrameType::P)
    }
}

impl TryFrom<char> for FrameType {
    type Error = VideoError;

    fn try_from(c: char) -> Result<Self, Self::Error> {
        match c.to_ascii_uppercase() {
            'I' => Ok(FrameType::I),
            'P' => Ok(FrameType::P),
            'B' => Ok(FrameType::B),
            other => Err(VideoError::UnknownFrame(other)),
        }
    }
}

/// Frame-type sequence of one GOP, e.g. `IBBPBBPBBPBB`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GopPattern(Vec<FrameType>);

impl GopPattern {
    pub fn frames(&self) -> &[FrameType] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for GopPattern {
    type Err = VideoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let frames = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(FrameType::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GopPattern(frames))
    }
}

impl TryFrom<String> for GopPattern {
    type Error = VideoError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GopPattern> for String {
    fn from(p: GopPattern) -> String {
        p.to_string()
    }
}

impl fmt::Display for GopPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.0 {
            f.write_str(match t {
                FrameType::I => "I",
                FrameType::P => "P",
                FrameType::B => "B",
            })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GopModel {
    pub pattern: GopPattern,
    pub i_frame_bits: u64,
    pub p_frame_bits: u64,
    pub b_frame_bits: u64,
    pub packet_bits: u64,
    /// Minimum intact-packet fraction for a frame to be usable.
    pub decodability_threshold: f64,
    /// PSNR lost per unit lost-packet fraction of a decoded frame, dB.
    pub concealment_slope_db: f64,
    /// PSNR of an error-free decode, dB.
    pub baseline_psnr_db: f64,
}

impl Default for GopModel {
    fn default() -> Self {
        GopModel {
            pattern: "IBBPBBPBBPBB".parse().expect("static pattern"),
            i_frame_bits: 160_000,
            p_frame_bits: 80_000,
            b_frame_bits: 40_000,
            packet_bits: 8_000,
            decodability_threshold: 1.0,
            concealment_slope_db: 20.0,
            baseline_psnr_db: 40.0,
        }
    }
}

impl GopModel {
    pub fn validate(&self) -> Result<(), VideoError> {
        let bad = |m: &str| Err(VideoError::InvalidGop(m.to_string()));
        if self.pattern.frames().first() != Some(&FrameType::I) {
            return bad("pattern must start with an I frame");
        }
        if self.pattern.len() > 20 {
            return bad("pattern longer than 20 frames");
        }
        if !(self.decodability_threshold > 0.0 && self.decodability_threshold <= 1.0) {
            return bad("decodability threshold must lie in (0, 1]");
        }
        if !(self.baseline_psnr_db > 0.0) {
            return bad("baseline PSNR must be positive");
        }
        if self.packet_bits == 0 || self.i_frame_bits == 0 || self.p_frame_bits == 0 || self.b_frame_bits == 0 {
            return bad("frame and packet sizes must be positive");
        }
        Ok(())
    }

    pub fn gop_length(&self) -> usize {
        self.pattern.len()
    }

    pub fn frame_bits(&self, t: FrameType) -> u64 {
        match t {
            FrameType::I => self.i_frame_bits,
            FrameType::P => self.p_frame_bits,
            FrameType::B => self.b_frame_bits,
        }
    }

    pub fn packets_per_frame(&self, t: FrameType) -> u64 {
        self.frame_bits(t).div_ceil(self.packet_bits)
    }

    /// Reference frames of each position. P frames use the previous anchor;
    /// B frames use the previous anchor and the next anchor inside the GOP,
    /// so trailing B frames depend on the last P only (closed GOP).
    pub fn references(&self) -> Vec<Vec<usize>> {
        let frames = self.pattern.frames();
        let prev_anchor = |i: usize| (0..i).rev().find(|&j| frames[j].is_anchor());
        let next_anchor = |i: usize| (i + 1..frames.len()).find(|&j| frames[j].is_anchor());
        frames
            .iter()
            .enumerate()
            .map(|(i, t)| match t {
                FrameType::I => vec![],
                FrameType::P => prev_anchor(i).into_iter().collect(),
                FrameType::B => prev_anchor(i).into_iter().chain(next_anchor(i)).collect(),
            })
            .collect()
    }

    /// Which frames decode, given which frames arrived intact enough.
    pub fn decodable(&self, usable: &[bool], refs: &[Vec<usize>]) -> Vec<bool> {
        let frames = self.pattern.frames();
        let mut ok = vec![false; frames.len()];
        // anchors reference only earlier anchors; B frames only anchors
        for pass_anchor in [true, false] {
            for (i, t) in frames.iter().enumerate() {
                if t.is_anchor() == pass_anchor {
                    ok[i] = usable[i] && refs[i].iter().all(|&r| ok[r]);
                }
            }
        }
        ok
    }

    /// Per-packet loss probability for independent bit errors.
    pub fn packet_loss_probability(&self, ber: f64) -> f64 {
        let ber = ber.clamp(0.0, 1.0);
        -((self.packet_bits as f64) * (-ber).ln_1p()).exp_m1()
    }

    /// Probability that a frame of type `t` is not intact enough to decode.
    pub fn frame_loss_probability(&self, t: FrameType, ber: f64) -> f64 {
        let n = self.packets_per_frame(t);
        let p = self.packet_loss_probability(ber);
        // frame usable iff lost <= n(1-θ)
        let max_lost = max_tolerated_losses(n, self.decodability_threshold);
        let usable: f64 = (0..=max_lost).map(|k| binomial_pmf(n, k, p)).sum();
        (1.0 - usable).clamp(0.0, 1.0)
    }
}

fn max_tolerated_losses(packets: u64, threshold: f64) -> u64 {
    let allowed = packets as f64 * (1.0 - threshold) + 1e-9;
    (allowed.floor() as u64).min(packets)
}

fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln_choose: f64 = (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum();
    (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// One ground-truth observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoSample {
    pub ber: f64,
    pub psnr: f64,
    pub dfr: f64,
}

/// Monte Carlo summary over a batch of GOPs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GopRunStats {
    pub ber: f64,
    pub dfr: f64,
    /// Standard error of the per-GOP decodable fraction.
    pub dfr_std_error: f64,
    pub psnr: f64,
    pub decoded_frames: u64,
    pub total_frames: u64,
}

/// Simulates `gop_count` GOPs whose packets each fail independently with
/// probability 1-(1-ber)^packet_bits.
pub fn simulate_gops(gop: &GopModel, ber: f64, gop_count: usize, seed: u64) -> GopRunStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = gop.pattern.frames();
    let refs = gop.references();
    let p = gop.packet_loss_probability(ber);
    let dists: Vec<(u64, Binomial)> = frames
        .iter()
        .map(|&t| {
            let n = gop.packets_per_frame(t);
            (n, Binomial::new(n, p).expect("probability in [0,1]"))
        })
        .collect();

    let mut usable = vec![false; frames.len()];
    let mut lost_frac = vec![0.0; frames.len()];
    let mut decoded = 0u64;
    let mut psnr_sum = 0.0;
    let mut per_gop_sum = 0.0;
    let mut per_gop_sq = 0.0;
    let len = frames.len() as f64;
    for _ in 0..gop_count.max(1) {
        for (i, (n, dist)) in dists.iter().enumerate() {
            let lost = dist.sample(&mut rng);
            lost_frac[i] = lost as f64 / *n as f64;
            usable[i] = 1.0 - lost_frac[i] >= gop.decodability_threshold - 1e-12;
        }
        let ok = gop.decodable(&usable, &refs);
        let mut here = 0u64;
        for (i, &d) in ok.iter().enumerate() {
            if d {
                here += 1;
                psnr_sum += gop.baseline_psnr_db - gop.concealment_slope_db * lost_frac[i];
            }
        }
        decoded += here;
        let f = here as f64 / len;
        per_gop_sum += f;
        per_gop_sq += f * f;
    }
    let n = gop_count.max(1) as f64;
    let total = gop_count.max(1) as u64 * frames.len() as u64;
    let mean = per_gop_sum / n;
    let var = if n > 1.0 {
        ((per_gop_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let psnr = if decoded > 0 {
        psnr_sum / decoded as f64
    } else {
        // infimum of the PSNR a decodable frame can have
        gop.baseline_psnr_db - gop.concealment_slope_db * (1.0 - gop.decodability_threshold)
    };
    GopRunStats {
        ber,
        dfr: decoded as f64 / total as f64,
        dfr_std_error: (var / n).sqrt(),
        psnr,
        decoded_frames: decoded,
        total_frames: total,
    }
}

pub fn generate_ground_truth(gop: &GopModel, ber: f64, gop_count: usize, seed: u64) -> VideoSample {
    let s = simulate_gops(gop, ber, gop_count, seed);
    VideoSample {
        ber,
        psnr: s.psnr,
        dfr: s.dfr,
    }
}

/// Exact expected DFR of one GOP when every frame is independently unusable
/// with probability `frame_error_prob`, by enumerating all loss patterns.
pub fn dfr_expectation_oracle(gop: &GopModel, frame_error_prob: f64) -> f64 {
    dfr_expectation_exact(gop, &vec![frame_error_prob; gop.gop_length()])
}

/// As [`dfr_expectation_oracle`] with a separate loss probability per frame.
pub fn dfr_expectation_exact(gop: &GopModel, frame_error_probs: &[f64]) -> f64 {
    let len = gop.gop_length();
    assert_eq!(frame_error_probs.len(), len, "one probability per frame");
    assert!(len <= 20, "enumeration limited to 20 frames");
    let refs = gop.references();
    let mut expected = 0.0;
    let mut usable = vec![false; len];
    for mask in 0u32..(1 << len) {
        let mut weight = 1.0;
        for (i, u) in usable.iter_mut().enumerate() {
            let lost = mask & (1 << i) != 0;
            *u = !lost;
            weight *= if lost {
                frame_error_probs[i]
            } else {
                1.0 - frame_error_probs[i]
            };
        }
        if weight == 0.0 {
            continue;
        }
        let decoded = gop.decodable(&usable, &refs).iter().filter(|&&d| d).count();
        expected += weight * decoded as f64 / len as f64;
    }
    expected
}

/// Exact expected DFR under the packet model at a given BER.
pub fn expected_dfr_for_ber(gop: &GopModel, ber: f64) -> f64 {
    let probs: Vec<f64> = gop
        .pattern
        .frames()
        .iter()
        .map(|&t| gop.frame_loss_probability(t, ber))
        .collect();
    dfr_expectation_exact(gop, &probs)
}

/// 10·log10(255²/mse), capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> Result<f64, VideoError> {
    if mse < 0.0 || mse.is_nan() {
        return Err(VideoError::NegativeMse(mse));
    }
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// User utility: PSNR of decoded frames times the decodable frame rate.
pub fn utility(psnr: f64, dfr: f64) -> f64 {
    psnr * dfr
}

/// log10(1/U), saturating at [`MAX_VIDEO_COST`] for U at or below the floor.
pub fn video_cost(u: f64) -> f64 {
    if u <= UTILITY_FLOOR || u.is_nan() {
        MAX_VIDEO_COST
    } else {
        -u.log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_packet_gop() -> GopModel {
        GopModel {
            i_frame_bits: 1000,
            p_frame_bits: 1000,
            b_frame_bits: 1000,
            packet_bits: 1000,
            ..GopModel::default()
        }
    }

    #[test]
    fn psnr_values() {
        assert_eq!(psnr_from_mse(255.0 * 255.0).unwrap(), 0.0);
        assert!((psnr_from_mse(65.025).unwrap() - 30.0).abs() < 1e-12);
        assert_eq!(psnr_from_mse(0.0).unwrap(), PSNR_CAP_DB);
        assert_eq!(psnr_from_mse(-1.0), Err(VideoError::NegativeMse(-1.0)));
    }

    #[test]
    fn utility_and_cost() {
        assert_eq!(utility(40.0, 1.0), 40.0);
        assert_eq!(utility(40.0, 0.5), 20.0);
        assert_eq!(utility(0.0, 0.7), 0.0);
        assert_eq!(video_cost(1.0), 0.0);
        assert!((video_cost(20.0) - (1.0f64 / 20.0).log10()).abs() < 1e-15);
        assert!((video_cost(20.0) + 1.30103).abs() < 1e-5);
        assert_eq!(video_cost(0.0), MAX_VIDEO_COST);
        assert_eq!(video_cost(UTILITY_FLOOR), MAX_VIDEO_COST);
        assert!(video_cost(UTILITY_FLOOR * 1.0001) < MAX_VIDEO_COST);
    }

    #[test]
    fn default_gop_shape() {
        let g = GopModel::default();
        g.validate().unwrap();
        assert_eq!(g.gop_length(), 12);
        assert_eq!(g.packets_per_frame(FrameType::I), 20);
        assert_eq!(g.packets_per_frame(FrameType::P), 10);
        assert_eq!(g.packets_per_frame(FrameType::B), 5);
        let refs = g.references();
        assert_eq!(refs[3], vec![0]);
        assert_eq!(refs[1], vec![0, 3]);
        assert_eq!(refs[10], vec![9]);
        let bad = GopModel {
            pattern: "PBB".parse().unwrap(),
            ..GopModel::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!("IXB".parse::<GopPattern>(), Err(VideoError::UnknownFrame('X')));
    }

    #[test]
    fn lossless_channel() {
        let g = GopModel::default();
        let s = simulate_gops(&g, 0.0, 200, 1);
        assert_eq!(s.dfr, 1.0);
        assert_eq!(s.psnr, g.baseline_psnr_db);
        assert_eq!(s.dfr_std_error, 0.0);
    }

    #[test]
    fn dependency_cases() {
        let g = GopModel::default();
        let refs = g.references();
        let mut usable = vec![true; 12];
        usable[0] = false;
        assert!(g.decodable(&usable, &refs).iter().all(|&d| !d));
        let mut usable = vec![true; 12];
        usable[10] = false;
        usable[11] = false;
        let n = g.decodable(&usable, &refs).iter().filter(|&&d| d).count();
        assert_eq!(n, 10);
        // losing the middle P takes every later frame but the first two Bs
        let mut usable = vec![true; 12];
        usable[6] = false;
        let n = g.decodable(&usable, &refs).iter().filter(|&&d| d).count();
        assert_eq!(n, 4);
    }

    #[test]
    fn every_i_packet_lost() {
        // with θ = 1 one lost packet kills the I frame, and with it the GOP
        let g = GopModel::default();
        let s = simulate_gops(&g, 0.5, 100, 3);
        assert_eq!(s.dfr, 0.0);
    }

    #[test]
    fn oracle_endpoints_and_closed_form() {
        let g = GopModel::default();
        assert_eq!(dfr_expectation_oracle(&g, 0.0), 1.0);
        assert_eq!(dfr_expectation_oracle(&g, 1.0), 0.0);
        // anchor chain I,P,P,P plus B pairs hanging off consecutive anchors
        let q: f64 = 0.9;
        let closed = (q + q.powi(2) + 3.0 * q.powi(3) + 3.0 * q.powi(4) + 4.0 * q.powi(5)) / 12.0;
        let got = dfr_expectation_oracle(&g, 0.1);
        assert!((got - closed).abs() < 1e-12);
        assert!((got - 0.685_605).abs() < 1e-9);
    }

    #[test]
    fn monte_carlo_tracks_oracle() {
        let g = single_packet_gop();
        let p: f64 = 0.1;
        let ber = 1.0 - (1.0 - p).powf(1.0 / 1000.0);
        assert!((g.packet_loss_probability(ber) - p).abs() < 1e-12);
        let s = simulate_gops(&g, ber, 10_000, 42);
        let exact = dfr_expectation_oracle(&g, p);
        assert!((s.dfr - exact).abs() < 3.0 * s.dfr_std_error, "{} vs {exact}", s.dfr);
    }

    #[test]
    fn packet_model_expectation() {
        let g = GopModel::default();
        for ber in [1e-7, 1e-6, 5e-6] {
            let s = simulate_gops(&g, ber, 10_000, 9);
            let exact = expected_dfr_for_ber(&g, ber);
            assert!((s.dfr - exact).abs() < 3.0 * s.dfr_std_error + 1e-12, "ber {ber}");
        }
    }

    #[test]
    fn frame_loss_with_partial_threshold() {
        let g = GopModel {
            decodability_threshold: 0.8,
            ..GopModel::default()
        };
        // B frames (5 packets) tolerate one loss
        let p = g.packet_loss_probability(1e-5);
        let expect = 1.0 - (1.0 - p).powi(5) - 5.0 * p * (1.0 - p).powi(4);
        assert!((g.frame_loss_probability(FrameType::B, 1e-5) - expect).abs() < 1e-12);
        let s = simulate_gops(&g, 2e-5, 2_000, 5);
        assert!(s.psnr < g.baseline_psnr_db && s.psnr >= g.baseline_psnr_db - 4.0);
    }

    #[test]
    fn generator_deterministic() {
        let g = GopModel::default();
        assert_eq!(simulate_gops(&g, 3e-6, 500, 11), simulate_gops(&g, 3e-6, 500, 11));
    }

    #[test]
    fn pattern_serde() {
        let g = GopModel::default();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"IBBPBBPBBPBB\""));
        let back: GopModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }
}
