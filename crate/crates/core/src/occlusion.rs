//! Forward–backward consistency occlusion estimation.
//!
//! A pixel is visible when composing its forward displacement with the
//! backward displacement found at its destination nearly cancels out:
//!
//! ```text
//! |f + R|² < α1 (|f|² + |R|²) + α2,    R = warp(backward, f)
//! ```
//!
//! Masks are hard thresholds and carry no gradient.

use crate::error::{Error, Result};
use crate::field::{ops, CorrField, OcclusionMap};

/// Threshold used to re-binarize a bilinearly warped mask.
pub const REBINARIZE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionParams {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Default for OcclusionParams {
    fn default() -> Self {
        OcclusionParams {
            alpha1: 0.01,
            alpha2: 0.5,
        }
    }
}

/// Visibility of each pixel of the forward field's frame in the other frame.
/// Pixels whose forward sample leaves the image are marked occluded.
pub fn estimate_occlusion(
    forward: &CorrField,
    backward: &CorrField,
    params: OcclusionParams,
) -> Result<OcclusionMap> {
    let (f, b) = (forward.as_field(), backward.as_field());
    f.check_same_extent(b, "estimate_occlusion")?;
    if params.alpha1 < 0.0 || params.alpha2 < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "occlusion thresholds must be nonnegative, got {params:?}"
        )));
    }
    let r = ops::warp(b, f);
    let valid = ops::validity_mask(f);
    let (fu, fv) = (f.channel(0), f.channel(1));
    let (ru, rv) = (r.channel(0), r.channel(1));
    let w = f.width();
    Ok(OcclusionMap::from_fn(f.height(), w, |y, x| {
        let p = y * w + x;
        let lhs = (fu[p] + ru[p]).powi(2) + (fv[p] + rv[p]).powi(2);
        let norms = fu[p] * fu[p] + fv[p] * fv[p] + ru[p] * ru[p] + rv[p] * rv[p];
        let rhs = params.alpha1 * norms + params.alpha2;
        valid.data()[p] == 1.0 && lhs < rhs
    }))
}

/// Moves a flow occlusion map into another view with a stereo field, then
/// re-binarizes at [`REBINARIZE_THRESHOLD`]. Out-of-image samples are occluded.
pub fn two_warp_occlusion(
    flow_occ: &OcclusionMap,
    stereo_corr: &CorrField,
) -> Result<OcclusionMap> {
    let (m, s) = (flow_occ.as_field(), stereo_corr.as_field());
    m.check_same_extent(s, "two_warp_occlusion")?;
    let warped = ops::warp(m, s);
    let valid = ops::validity_mask(s);
    let mut out = OcclusionMap::threshold(&warped, REBINARIZE_THRESHOLD)?;
    out = out.and(&OcclusionMap::new(valid)?)?;
    Ok(out)
}
