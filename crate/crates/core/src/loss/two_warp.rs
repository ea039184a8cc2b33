//! Composition descriptors for the two-warp consistency term.
//!
//! A path reconstructs a target frame twice: once through two chained warps
//! starting from a `source` frame (`inner`, then `outer`), once through a
//! single `direct` warp. The photometric disagreement between the two
//! reconstructions is penalized where the occlusion recipe says the target
//! pixel is visible.
//!
//! Variant 1 chains flow then stereo from the diagonal frame at t+1.
//! Variant 2 chains stereo then flow from the same diagonal frame and compares
//! against the direct stereo reconstruction. Variant 3 uses the opposite
//! diagonal, i.e. variant 1 with the two time steps swapped. Each variant is
//! evaluated for both mirrored targets (left/right views exchanged).

use std::fmt;

use crate::cycle::{Frame, MapId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TwoWarpVariant {
    FlowThenStereo,
    StereoThenFlow,
    OppositeDiagonal,
}

impl TwoWarpVariant {
    pub const ALL: [TwoWarpVariant; 3] = [
        TwoWarpVariant::FlowThenStereo,
        TwoWarpVariant::StereoThenFlow,
        TwoWarpVariant::OppositeDiagonal,
    ];

    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            1 => Ok(TwoWarpVariant::FlowThenStereo),
            2 => Ok(TwoWarpVariant::StereoThenFlow),
            3 => Ok(TwoWarpVariant::OppositeDiagonal),
            other => Err(Error::UnknownVariant(other)),
        }
    }

    pub fn id(self) -> u32 {
        match self {
            TwoWarpVariant::FlowThenStereo => 1,
            TwoWarpVariant::StereoThenFlow => 2,
            TwoWarpVariant::OppositeDiagonal => 3,
        }
    }

    /// The variant's path toward a right-view target and its mirror.
    pub fn paths(self, carrier: OcclusionCarrier) -> [TwoWarpPath; 2] {
        let primary = match self {
            TwoWarpVariant::FlowThenStereo => flow_then_stereo(carrier),
            TwoWarpVariant::StereoThenFlow => stereo_then_flow(),
            TwoWarpVariant::OppositeDiagonal => flow_then_stereo(carrier).swap_times(),
        };
        [primary, primary.mirror_views()]
    }

    pub fn primary_path(self, carrier: OcclusionCarrier) -> TwoWarpPath {
        self.paths(carrier)[0]
    }
}

impl fmt::Display for TwoWarpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Which stereo field carries the flow occlusion map into the target view
/// for the flow-then-stereo paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OcclusionCarrier {
    /// The stereo map of the other time step (`rt1 → lt1` for target `rt`).
    #[default]
    OtherTime,
    /// The path's own outer stereo map (`rt → lt` for target `rt`).
    Outer,
}

impl OcclusionCarrier {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "other_time" | "literal" => Ok(OcclusionCarrier::OtherTime),
            "outer" => Ok(OcclusionCarrier::Outer),
            other => Err(Error::InvalidArgument(format!(
                "unknown occlusion carrier `{other}` (expected other_time or outer)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoWarpPath {
    pub target: Frame,
    pub source: Frame,
    /// `intermediate → source`, applied first.
    pub inner: MapId,
    /// `target → intermediate`, applied to the inner reconstruction.
    pub outer: MapId,
    /// `target → direct.to`, the single-warp reference.
    pub direct: MapId,
    /// Flow map whose estimated occlusion masks the comparison.
    pub occlusion: MapId,
    /// Stereo map that moves that occlusion mask into the target frame, if
    /// it does not already live there.
    pub carrier: Option<MapId>,
}

fn flow_then_stereo(carrier: OcclusionCarrier) -> TwoWarpPath {
    let outer = MapId::new(Frame::RT, Frame::LT);
    TwoWarpPath {
        target: Frame::RT,
        source: Frame::LT1,
        inner: MapId::new(Frame::LT, Frame::LT1),
        outer,
        direct: MapId::new(Frame::RT, Frame::RT1),
        occlusion: MapId::new(Frame::LT, Frame::LT1),
        carrier: Some(match carrier {
            OcclusionCarrier::OtherTime => MapId::new(Frame::RT1, Frame::LT1),
            OcclusionCarrier::Outer => outer,
        }),
    }
}

fn stereo_then_flow() -> TwoWarpPath {
    TwoWarpPath {
        target: Frame::RT,
        source: Frame::LT1,
        inner: MapId::new(Frame::RT1, Frame::LT1),
        outer: MapId::new(Frame::RT, Frame::RT1),
        direct: MapId::new(Frame::RT, Frame::LT),
        occlusion: MapId::new(Frame::RT, Frame::RT1),
        carrier: None,
    }
}

impl TwoWarpPath {
    pub fn direct_source(&self) -> Frame {
        self.direct.to
    }

    /// Every correspondence map the path reads.
    pub fn maps(&self) -> Vec<MapId> {
        let mut v = vec![
            self.inner,
            self.outer,
            self.direct,
            self.occlusion,
            self.occlusion.reverse(),
        ];
        v.extend(self.carrier);
        v
    }

    pub fn mirror_views(&self) -> TwoWarpPath {
        TwoWarpPath {
            target: self.target.other_view(),
            source: self.source.other_view(),
            inner: self.inner.mirror_views(),
            outer: self.outer.mirror_views(),
            direct: self.direct.mirror_views(),
            occlusion: self.occlusion.mirror_views(),
            carrier: self.carrier.map(MapId::mirror_views),
        }
    }

    pub fn swap_times(&self) -> TwoWarpPath {
        TwoWarpPath {
            target: self.target.other_time(),
            source: self.source.other_time(),
            inner: self.inner.swap_times(),
            outer: self.outer.swap_times(),
            direct: self.direct.swap_times(),
            occlusion: self.occlusion.swap_times(),
            carrier: self.carrier.map(MapId::swap_times),
        }
    }

    /// Checks that the maps chain into the declared frames.
    pub fn validate(&self) -> Result<()> {
        let ok = self.inner.to == self.source
            && self.inner.from == self.outer.to
            && self.outer.from == self.target
            && self.direct.from == self.target
            && self.direct.to != self.outer.to
            && self.carrier.is_none_or(|c| c.from.view == self.target.view);
        let occ_frame = match self.carrier {
            Some(c) => c.to.view == self.occlusion.from.view,
            None => self.occlusion.from == self.target,
        };
        if ok && occ_frame {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "inconsistent two-warp path {self:?}"
            )))
        }
    }
}
