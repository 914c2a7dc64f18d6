use serde::{Deserialize, Serialize};

use super::resample::{box_sums, div_round_half_up};
use super::{ImageError, Thumbnail};
use crate::pnm::{Channels, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Rows dropped from the top of the native frame.
    pub statusbar_crop_px: usize,
    pub thumb_width: usize,
    pub thumb_height: usize,
}

pub const MIN_THUMB_SIDE: usize = 8;

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            statusbar_crop_px: 48,
            thumb_width: 64,
            thumb_height: 128,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), ImageError> {
        if self.thumb_width < MIN_THUMB_SIDE || self.thumb_height < MIN_THUMB_SIDE {
            return Err(ImageError::InvalidConfig(format!(
                "thumbnail must be at least {MIN_THUMB_SIDE}x{MIN_THUMB_SIDE}, got {}x{}",
                self.thumb_width, self.thumb_height
            )));
        }
        Ok(())
    }
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)` with halves rounded up,
/// evaluated exactly in integers.
pub fn grayscale_value(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Crop the status bar, convert to grayscale, then box-filter down (or up)
/// to the configured thumbnail size.
pub fn preprocess(frame: &Frame, cfg: &PreprocessConfig) -> Result<Thumbnail, ImageError> {
    cfg.validate()?;
    let (w, h) = (frame.width(), frame.height());
    if w == 0 || h == 0 {
        return Err(ImageError::ZeroSized);
    }
    if cfg.statusbar_crop_px >= h {
        return Err(ImageError::CropExceedsFrame {
            crop: cfg.statusbar_crop_px,
            height: h,
        });
    }
    let rows = h - cfg.statusbar_crop_px;
    let data = frame.data();
    let plane: Vec<u8> = match frame.channels() {
        Channels::Gray => data[cfg.statusbar_crop_px * w..].to_vec(),
        Channels::Rgb => data[cfg.statusbar_crop_px * w * 3..]
            .chunks_exact(3)
            .map(|px| grayscale_value(px[0], px[1], px[2]))
            .collect(),
    };
    let den = (w * rows) as u64;
    let pixels = box_sums(&plane, w, rows, cfg.thumb_width, cfg.thumb_height)
        .into_iter()
        .map(|s| div_round_half_up(s, den) as u8)
        .collect();
    Thumbnail::new(cfg.thumb_width, cfg.thumb_height, pixels)
}
