//! Subject crop geometry: scale the box so its longer side hits the target
//! canvas, center it, pad the remainder white.

use serde::{Deserialize, Serialize};

use super::record::SubjectBox;
use crate::error::{Error, Result};

/// Canvas side in pixels.
pub const CROP_TARGET: u32 = 224;

/// Pad value in normalized pixel space (white).
pub const PAD_WHITE: f64 = 1.0;

/// Placement of a resized subject box on the square canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub source: SubjectBox,
    pub scale: f64,
    /// (width, height) after resize; the longer side equals the target.
    pub resized: (u32, u32),
    /// (x, y) paste offset that centers the resize on the canvas.
    pub offset: (u32, u32),
}

fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor() as u32
}

/// Computes the crop placement for a box: scale = target / max(w, h),
/// dimensions rounded half-up (floored at 1 px), paste centered.
pub fn compute_crop(source: &SubjectBox, target: u32) -> Result<CropSpec> {
    let (w, h) = (source.width(), source.height());
    if w <= 0.0 || h <= 0.0 {
        return Err(Error::Embedding(format!("degenerate box {w}x{h}")));
    }
    let scale = f64::from(target) / w.max(h);
    let rw = round_half_up(w * scale).clamp(1, target);
    let rh = round_half_up(h * scale).clamp(1, target);
    debug_assert_eq!(rw.max(rh), target);
    Ok(CropSpec {
        source: source.clone(),
        scale,
        resized: (rw, rh),
        offset: ((target - rw) / 2, (target - rh) / 2),
    })
}
