//! Frames, correspondence-map identifiers and the four-image cycle.
//!
//! A map `A → B` reconstructs frame `A` by sampling frame `B`:
//! `Ã(p) = B(p + map(p))`. Two views at two time steps give eight maps:
//! four stereo maps (same time, different view) and four flow maps
//! (same view, different time).

use std::fmt;

use crate::error::{Error, Result};
use crate::field::{CorrField, Image, OcclusionMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum View {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Time {
    T0,
    T1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Frame {
    pub view: View,
    pub time: Time,
}

impl Frame {
    pub const LT: Frame = Frame::new(View::Left, Time::T0);
    pub const RT: Frame = Frame::new(View::Right, Time::T0);
    pub const LT1: Frame = Frame::new(View::Left, Time::T1);
    pub const RT1: Frame = Frame::new(View::Right, Time::T1);
    pub const ALL: [Frame; 4] = [Frame::LT, Frame::RT, Frame::LT1, Frame::RT1];

    pub const fn new(view: View, time: Time) -> Self {
        Frame { view, time }
    }

    pub fn index(self) -> usize {
        let v = match self.view {
            View::Left => 0,
            View::Right => 1,
        };
        let t = match self.time {
            Time::T0 => 0,
            Time::T1 => 2,
        };
        v + t
    }

    pub fn label(self) -> &'static str {
        match (self.view, self.time) {
            (View::Left, Time::T0) => "lt",
            (View::Right, Time::T0) => "rt",
            (View::Left, Time::T1) => "lt1",
            (View::Right, Time::T1) => "rt1",
        }
    }

    pub fn other_view(self) -> Frame {
        let view = match self.view {
            View::Left => View::Right,
            View::Right => View::Left,
        };
        Frame { view, ..self }
    }

    pub fn other_time(self) -> Frame {
        let time = match self.time {
            Time::T0 => Time::T1,
            Time::T1 => Time::T0,
        };
        Frame { time, ..self }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Stereo,
    Flow,
}

/// Correspondence map `from → to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MapId {
    pub from: Frame,
    pub to: Frame,
}

impl MapId {
    /// Stereo maps first (t, then t+1), then left and right flow maps.
    pub const ALL: [MapId; 8] = [
        MapId::new(Frame::LT, Frame::RT),
        MapId::new(Frame::RT, Frame::LT),
        MapId::new(Frame::LT1, Frame::RT1),
        MapId::new(Frame::RT1, Frame::LT1),
        MapId::new(Frame::LT, Frame::LT1),
        MapId::new(Frame::LT1, Frame::LT),
        MapId::new(Frame::RT, Frame::RT1),
        MapId::new(Frame::RT1, Frame::RT),
    ];

    pub const fn new(from: Frame, to: Frame) -> Self {
        MapId { from, to }
    }

    /// Checked constructor: the frames must differ in exactly one of view/time.
    pub fn between(from: Frame, to: Frame) -> Result<Self> {
        let id = MapId { from, to };
        if (from.view != to.view) ^ (from.time != to.time) {
            Ok(id)
        } else {
            Err(Error::InvalidArgument(format!(
                "no correspondence map between {from} and {to}"
            )))
        }
    }

    pub fn kind(self) -> MapKind {
        if self.from.time == self.to.time {
            MapKind::Stereo
        } else {
            MapKind::Flow
        }
    }

    pub fn reverse(self) -> MapId {
        MapId::new(self.to, self.from)
    }

    pub fn index(self) -> usize {
        MapId::ALL
            .iter()
            .position(|m| *m == self)
            .expect("map ids are constructed between adjacent frames")
    }

    pub fn mirror_views(self) -> MapId {
        MapId::new(self.from.other_view(), self.to.other_view())
    }

    pub fn swap_times(self) -> MapId {
        MapId::new(self.from.other_time(), self.to.other_time())
    }

    /// File-name friendly label, e.g. `lt_to_rt`.
    pub fn label(self) -> String {
        format!("{}_to_{}", self.from.label(), self.to.label())
    }

    pub fn parse(label: &str) -> Result<MapId> {
        MapId::ALL
            .into_iter()
            .find(|m| m.label() == label)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown map label `{label}`")))
    }
}

impl fmt::Display for MapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Up to one value per correspondence map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSet<T> {
    slots: [Option<T>; 8],
}

impl<T> Default for MapSet<T> {
    fn default() -> Self {
        MapSet {
            slots: Default::default(),
        }
    }
}

impl<T> MapSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fn(mut f: impl FnMut(MapId) -> T) -> Self {
        let mut s = Self::new();
        for id in MapId::ALL {
            s.insert(id, f(id));
        }
        s
    }

    pub fn insert(&mut self, id: MapId, value: T) {
        self.slots[id.index()] = Some(value);
    }

    pub fn get(&self, id: MapId) -> Option<&T> {
        self.slots[id.index()].as_ref()
    }

    pub fn get_mut(&mut self, id: MapId) -> Option<&mut T> {
        self.slots[id.index()].as_mut()
    }

    pub fn require(&self, id: MapId) -> Result<&T> {
        self.get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("map {id} is not available")))
    }

    pub fn contains(&self, id: MapId) -> bool {
        self.get(id).is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = MapId> + '_ {
        MapId::ALL.into_iter().filter(|id| self.contains(*id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (MapId, &T)> {
        MapId::ALL
            .into_iter()
            .zip(self.slots.iter())
            .filter_map(|(id, s)| s.as_ref().map(|v| (id, v)))
    }

    pub fn map<U>(&self, mut f: impl FnMut(MapId, &T) -> U) -> MapSet<U> {
        let mut out = MapSet::new();
        for (id, v) in self.iter() {
            out.insert(id, f(id, v));
        }
        out
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(MapId, &T) -> Result<U>) -> Result<MapSet<U>> {
        let mut out = MapSet::new();
        for (id, v) in self.iter() {
            out.insert(id, f(id, v)?);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ground truth attached to a cycle for evaluation.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub maps: MapSet<CorrField>,
    /// Visibility masks for the flow maps.
    pub occlusion: MapSet<OcclusionMap>,
}

/// Two temporally adjacent stereo pairs.
#[derive(Debug, Clone)]
pub struct Cycle {
    images: [Image; 4],
    pub ground_truth: Option<GroundTruth>,
    /// Focal length times baseline (meters·pixels), for depth conversion.
    pub focal_length_times_baseline: Option<f64>,
}

impl Cycle {
    pub fn new(lt: Image, rt: Image, lt1: Image, rt1: Image) -> Result<Self> {
        for other in [&rt, &lt1, &rt1] {
            if other.height() != lt.height()
                || other.width() != lt.width()
                || other.channels() != lt.channels()
            {
                return Err(Error::shape(
                    "cycle images",
                    lt.as_field().shape(),
                    other.as_field().shape(),
                ));
            }
        }
        Ok(Cycle {
            images: [lt, rt, lt1, rt1],
            ground_truth: None,
            focal_length_times_baseline: None,
        })
    }

    pub fn image(&self, frame: Frame) -> &Image {
        &self.images[frame.index()]
    }

    pub fn images(&self) -> &[Image; 4] {
        &self.images
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_distinct_maps_with_kinds() {
        let stereo = MapId::ALL
            .iter()
            .filter(|m| m.kind() == MapKind::Stereo)
            .count();
        assert_eq!(stereo, 4);
        for (i, m) in MapId::ALL.iter().enumerate() {
            assert_eq!(m.index(), i);
            assert!(MapId::ALL.contains(&m.reverse()));
            assert!(MapId::ALL.contains(&m.mirror_views()));
            assert!(MapId::ALL.contains(&m.swap_times()));
            assert_eq!(MapId::parse(&m.label()).unwrap(), *m);
        }
    }

    #[test]
    fn diagonal_is_not_a_map() {
        assert!(MapId::between(Frame::LT, Frame::RT1).is_err());
        assert!(MapId::between(Frame::LT, Frame::LT).is_err());
        assert!(MapId::between(Frame::LT, Frame::LT1).is_ok());
    }

    #[test]
    fn cycle_rejects_mismatched_images() {
        let a = Image::constant(4, 4, 1, 0.5).unwrap();
        let b = Image::constant(4, 5, 1, 0.5).unwrap();
        assert!(Cycle::new(a.clone(), a.clone(), a.clone(), b).is_err());
    }
}
