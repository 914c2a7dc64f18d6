//! Screen-state comparison: the crop/grayscale/resize preprocessing, a
//! mean-hash prefilter and windowed SSIM, combined into the [`same`]
//! observation-equivalence predicate.

mod hash;
mod preprocess;
mod resample;
mod ssim;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hash::{average_hash, hash_similarity, BitHash};
pub use preprocess::{grayscale_value, preprocess, PreprocessConfig};
pub use ssim::ssim;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("thumbnail dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("{width}x{height} thumbnail is smaller than the {window}x{window} SSIM window")]
    SmallerThanWindow { width: usize, height: usize, window: usize },
    #[error("status bar crop of {crop} rows leaves nothing of a {height}-row frame")]
    CropExceedsFrame { crop: usize, height: usize },
    #[error("zero-sized image")]
    ZeroSized,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Output of the preprocessing pipeline: 8-bit grayscale, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Thumbnail {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Thumbnail {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroSized);
        }
        if pixels.len() != width * height {
            return Err(ImageError::InvalidConfig(format!(
                "{} pixels for a {width}x{height} thumbnail",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Photometric negative, `255 - v` per pixel.
    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| 255 - v).collect(),
        }
    }
}

pub(crate) fn check_same_dims(a: &Thumbnail, b: &Thumbnail) -> Result<(), ImageError> {
    if a.dims() != b.dims() {
        return Err(ImageError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    Ok(())
}

/// Thresholds and constants for screen matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// SSIM at or above which two screens count as the same state.
    pub theta: f64,
    /// Pairs whose mean-hash agreement falls below this are rejected
    /// without computing SSIM.
    pub hash_prefilter_threshold: f64,
    /// Side length of the mean-hash grid.
    pub hash_size: usize,
    /// Side length of the uniform SSIM window (stride 1).
    pub ssim_window: usize,
    pub c1: f64,
    pub c2: f64,
}

pub const DEFAULT_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const DEFAULT_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            theta: 0.95,
            hash_prefilter_threshold: 0.80,
            hash_size: 8,
            ssim_window: 8,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), ImageError> {
        let bad = |msg: String| Err(ImageError::InvalidConfig(msg));
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if !(0.0..=1.0).contains(&self.hash_prefilter_threshold) {
            return bad(format!(
                "hash_prefilter_threshold must lie in [0, 1], got {}",
                self.hash_prefilter_threshold
            ));
        }
        if self.hash_size == 0 || self.ssim_window == 0 {
            return bad("hash_size and ssim_window must be positive".into());
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return bad("SSIM stabilising constants must be positive".into());
        }
        Ok(())
    }
}

/// Counters describing how much comparison work was done. Shared across
/// threads; every SSIM computed on behalf of [`same_observed`] or the fork
/// detector is counted in `ssim_evaluations`.
#[derive(Debug, Default)]
pub struct MatchStats {
    hash_comparisons: AtomicU64,
    prefilter_rejections: AtomicU64,
    ssim_evaluations: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub hash_comparisons: u64,
    pub prefilter_rejections: u64,
    pub ssim_evaluations: u64,
}

impl MatchStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> MatchCounts {
        MatchCounts {
            hash_comparisons: self.hash_comparisons.load(Ordering::Relaxed),
            prefilter_rejections: self.prefilter_rejections.load(Ordering::Relaxed),
            ssim_evaluations: self.ssim_evaluations.load(Ordering::Relaxed),
        }
    }

    pub(crate) fn record_ssim(&self) {
        self.ssim_evaluations.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn record_hash_comparison(&self) {
        self.hash_comparisons.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn record_prefilter_rejection(&self) {
        self.prefilter_rejections.fetch_add(1, Ordering::Relaxed);
    }
}

/// A thumbnail with its mean-hash precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedThumbnail {
    pub thumbnail: Thumbnail,
    pub hash: BitHash,
}

impl PreparedThumbnail {
    pub fn new(thumbnail: Thumbnail, cfg: &MatchConfig) -> Self {
        let hash = average_hash(&thumbnail, cfg.hash_size);
        Self { thumbnail, hash }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SameOutcome {
    pub same: bool,
    pub hash_similarity: f64,
    /// `None` when the prefilter rejected the pair before SSIM was computed.
    pub ssim: Option<f64>,
}

/// Observation equivalence: mean-hash prefilter, then `SSIM >= theta`.
pub fn same(a: &Thumbnail, b: &Thumbnail, cfg: &MatchConfig) -> Result<SameOutcome, ImageError> {
    same_observed(a, b, cfg, &MatchStats::new())
}

/// [`same`], recording the work done in `stats`.
pub fn same_observed(
    a: &Thumbnail,
    b: &Thumbnail,
    cfg: &MatchConfig,
    stats: &MatchStats,
) -> Result<SameOutcome, ImageError> {
    check_same_dims(a, b)?;
    let a = PreparedThumbnail::new(a.clone(), cfg);
    let b = PreparedThumbnail::new(b.clone(), cfg);
    same_prepared(&a, &b, cfg, stats)
}

pub fn same_prepared(
    a: &PreparedThumbnail,
    b: &PreparedThumbnail,
    cfg: &MatchConfig,
    stats: &MatchStats,
) -> Result<SameOutcome, ImageError> {
    check_same_dims(&a.thumbnail, &b.thumbnail)?;
    stats.record_hash_comparison();
    let hash_similarity = a.hash.similarity(&b.hash);
    if hash_similarity < cfg.hash_prefilter_threshold {
        stats.record_prefilter_rejection();
        return Ok(SameOutcome {
            same: false,
            hash_similarity,
            ssim: None,
        });
    }
    let score = ssim_observed(&a.thumbnail, &b.thumbnail, cfg, stats)?;
    Ok(SameOutcome {
        same: score >= cfg.theta,
        hash_similarity,
        ssim: Some(score),
    })
}

pub(crate) fn ssim_observed(
    a: &Thumbnail,
    b: &Thumbnail,
    cfg: &MatchConfig,
    stats: &MatchStats,
) -> Result<f64, ImageError> {
    stats.record_ssim();
    ssim(a, b, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Thumbnail {
        let px = (0..w * h).map(|i| ((i * 7 + i / w * 13) % 256) as u8).collect();
        Thumbnail::new(w, h, px).unwrap()
    }

    #[test]
    fn identical_thumbnails_are_same() {
        let t = ramp(64, 128);
        let cfg = MatchConfig::default();
        let out = same(&t, &t, &cfg).unwrap();
        assert!(out.same);
        assert_eq!(out.hash_similarity, 1.0);
        assert_eq!(out.ssim, Some(1.0));
    }

    #[test]
    fn prefilter_short_circuits() {
        // Left half bright vs right half bright: every hash bit disagrees.
        let w = 16;
        let h = 16;
        let a: Vec<u8> = (0..w * h).map(|i| if i % w < w / 2 { 200 } else { 20 }).collect();
        let b: Vec<u8> = a.iter().map(|&v| if v == 200 { 20 } else { 200 }).collect();
        let a = Thumbnail::new(w, h, a).unwrap();
        let b = Thumbnail::new(w, h, b).unwrap();
        let stats = MatchStats::new();
        let out = same_observed(&a, &b, &MatchConfig::default(), &stats).unwrap();
        assert!(!out.same);
        assert!(out.ssim.is_none());
        assert!(out.hash_similarity < 0.8);
        let counts = stats.snapshot();
        assert_eq!(counts.ssim_evaluations, 0);
        assert_eq!(counts.prefilter_rejections, 1);
    }

    #[test]
    fn threshold_applies_after_prefilter() {
        // Mild noise keeps the hash intact but pulls SSIM under a strict theta.
        let base = ramp(32, 32);
        let noisy: Vec<u8> = base
            .pixels()
            .iter()
            .enumerate()
            .map(|(i, &v)| if i % 3 == 0 { v.saturating_add(9) } else { v })
            .collect();
        let noisy = Thumbnail::new(32, 32, noisy).unwrap();
        let score = ssim(&base, &noisy, &MatchConfig::default()).unwrap();
        let cfg = MatchConfig {
            theta: (score + 1.0) / 2.0,
            hash_prefilter_threshold: 0.0,
            ..MatchConfig::default()
        };
        let out = same(&base, &noisy, &cfg).unwrap();
        assert_eq!(out.ssim, Some(score));
        assert!(!out.same);
        let lenient = MatchConfig { theta: score, ..cfg };
        assert!(same(&base, &noisy, &lenient).unwrap().same);
    }

    #[test]
    fn config_validation() {
        assert!(MatchConfig::default().validate().is_ok());
        for bad in [
            MatchConfig {
                theta: 0.0,
                ..Default::default()
            },
            MatchConfig {
                theta: 1.5,
                ..Default::default()
            },
            MatchConfig {
                hash_prefilter_threshold: -0.1,
                ..Default::default()
            },
            MatchConfig {
                hash_size: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(MatchConfig {
            theta: 1.0,
            ..Default::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = ramp(16, 16);
        let b = ramp(16, 17);
        assert!(matches!(
            same(&a, &b, &MatchConfig::default()),
            Err(ImageError::DimensionMismatch { .. })
        ));
    }
}
