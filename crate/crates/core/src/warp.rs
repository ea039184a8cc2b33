//! Differentiable backward warping.
//!
//! `warp(source, corr)(p) = source(p + corr(p))`, sampled bilinearly with
//! pixel centers at integer coordinates. Sample locations outside the image
//! are clamped to the border; [`validity_mask`] marks where that happened so
//! losses can exclude fabricated values.

use crate::error::{Error, Result};
use crate::field::{ops, CorrField, Field, OcclusionMap, Tape, Var};

/// Warps any field (image, correspondence field or mask) by `corr`.
pub fn warp(source: &Field, corr: &CorrField) -> Result<Field> {
    source.check_same_extent(corr.as_field(), "warp")?;
    Ok(ops::warp(source, corr.as_field()))
}

pub fn warp_corr(source: &CorrField, corr: &CorrField) -> Result<CorrField> {
    CorrField::new(warp(source.as_field(), corr)?)
}

/// Records a warp on the tape; gradients reach both the source values and
/// the displacements.
pub fn warp_var(tape: &mut Tape, source: Var, corr: Var) -> Result<Var> {
    tape.warp(source, corr)
}

/// 1 where `p + corr(p)` stays inside the image, else 0. Not differentiated.
pub fn validity_mask(corr: &CorrField) -> OcclusionMap {
    OcclusionMap::new(ops::validity_mask(corr.as_field())).expect("validity mask is binary")
}

pub(crate) fn validity_of(field: &Field) -> Result<Field> {
    if field.channels() != 2 {
        return Err(Error::InvalidField(format!(
            "validity mask needs a 2-channel field, got {}",
            field.channels()
        )));
    }
    Ok(ops::validity_mask(field))
}
