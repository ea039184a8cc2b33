//! Synthetic stereo-video cycles with exact ground truth.
//!
//! A scene is a stack of fronto-parallel layers: a textured background plus
//! rectangular or elliptical sprites. Each layer has a depth (giving its
//! disparity `fb / depth`) and a velocity in pixels per frame. A layer point
//! at layer coordinate `q` appears in frame `F` at `q + offset(F)`, with
//!
//! ```text
//! offset(F) = time(F) · velocity − [right(F) · disparity, 0]
//! ```
//!
//! Pixels take the texture of the nearest covering layer. Ground-truth maps
//! are offset differences of that layer; a map entry is visible when its
//! destination lies inside the image and the same layer is in front there.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cycle::{Cycle, Frame, GroundTruth, MapId, MapSet, Time, View};
use crate::error::{Error, Result};
use crate::field::{CorrField, Field, Image, OcclusionMap};

/// Layer mean intensities of the built-in scenes; sprites differ from the
/// background so object boundaries are image edges.
const BACKGROUND_BRIGHTNESS: f64 = 0.3;
const SPRITE_BRIGHTNESS: [f64; 2] = [0.7, 0.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Axis-aligned box covering `[cx − rx, cx + rx) × [cy − ry, cy + ry)`.
    Rect,
    Ellipse,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Rect => "rect",
            Shape::Ellipse => "ellipse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sprite {
    pub shape: Shape,
    /// Center in left-view coordinates at time t, `(x, y)`.
    pub center: (f64, f64),
    /// Half extents `(rx, ry)`.
    pub radius: (f64, f64),
    /// Meters; must be positive.
    pub depth: f64,
    /// Pixels per frame, `(u, v)`.
    pub velocity: (f64, f64),
    /// Mean intensity of the sprite texture.
    pub brightness: f64,
}

impl Sprite {
    fn covers(&self, qx: f64, qy: f64) -> bool {
        let (dx, dy) = (qx - self.center.0, qy - self.center.1);
        let (rx, ry) = self.radius;
        match self.shape {
            Shape::Rect => dx >= -rx && dx < rx && dy >= -ry && dy < ry,
            Shape::Ellipse => (dx / rx).powi(2) + (dy / ry).powi(2) <= 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    /// 1 (gray) or 3 (RGB).
    pub channels: usize,
    /// Infinite depth means zero disparity.
    pub background_depth: f64,
    pub background_velocity: (f64, f64),
    /// Mean intensity of the background texture.
    pub background_brightness: f64,
    pub sprites: Vec<Sprite>,
    /// Focal length times baseline, meters·pixels.
    pub fb: f64,
    /// Amplitude of each texture component; a texture sums
    /// `texture_components` of them around its layer brightness.
    pub texture_amplitude: f64,
    pub texture_components: usize,
    /// Wavelength range of the texture components, pixels.
    pub wavelength: (f64, f64),
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            height: 64,
            width: 64,
            channels: 1,
            background_depth: f64::INFINITY,
            background_velocity: (0.0, 0.0),
            background_brightness: 0.5,
            sprites: Vec::new(),
            fb: 40.0,
            texture_amplitude: 0.012,
            texture_components: 24,
            wavelength: (6.0, 32.0),
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Static background at disparity 2 with a brighter 20×20 square at
    /// disparity 4 moving 4 px to the right.
    pub fn occlusion_scene() -> Self {
        SceneSpec {
            background_depth: 20.0,
            background_brightness: BACKGROUND_BRIGHTNESS,
            sprites: vec![Sprite {
                shape: Shape::Rect,
                center: (28.0, 32.0),
                radius: (10.0, 10.0),
                depth: 10.0,
                velocity: (4.0, 0.0),
                brightness: SPRITE_BRIGHTNESS[0],
            }],
            seed: 7,
            ..Default::default()
        }
    }

    /// A single textured plane: every flow map is `±flow`, every stereo
    /// map `∓disparity` horizontally.
    pub fn global_translation(
        height: usize,
        width: usize,
        flow: (f64, f64),
        disparity: f64,
        seed: u64,
    ) -> Self {
        let fb = 40.0;
        SceneSpec {
            height,
            width,
            background_depth: if disparity == 0.0 {
                f64::INFINITY
            } else {
                fb / disparity
            },
            background_velocity: flow,
            fb,
            seed,
            ..Default::default()
        }
    }

    /// Seeded rigid scene: one textured plane with integer flow
    /// `|u|, |v| ≤ max_motion` and integer disparity in `1..=max_disparity`.
    pub fn random_rigid(
        seed: u64,
        height: usize,
        width: usize,
        max_motion: i32,
        max_disparity: i32,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0017_1d5e);
        let flow = (
            rng.random_range(-max_motion..=max_motion) as f64,
            rng.random_range(-max_motion..=max_motion) as f64,
        );
        let disparity = rng.random_range(1..=max_disparity.max(1)) as f64;
        SceneSpec::global_translation(height, width, flow, disparity, seed)
    }

    /// Seeded random scene: a moving background and one or two sprites in
    /// front of it, all with integer motions `|·| ≤ max_motion` and integer
    /// disparities `≤ max_disparity`.
    pub fn random(
        seed: u64,
        height: usize,
        width: usize,
        max_motion: i32,
        max_disparity: i32,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce7e);
        let fb = 40.0;
        let motion = |rng: &mut ChaCha8Rng| {
            (
                rng.random_range(-max_motion..=max_motion) as f64,
                rng.random_range(-max_motion / 2..=max_motion / 2) as f64,
            )
        };
        let bg_disp = rng.random_range(1..=(max_disparity / 2).max(1));
        let background_velocity = motion(&mut rng);
        let count = rng.random_range(1..=2);
        let mut sprites = Vec::new();
        for i in 0..count {
            let disp = rng.random_range(bg_disp + 1..=max_disparity.max(bg_disp + 1));
            let r = (
                rng.random_range(width as f64 * 0.12..width as f64 * 0.2)
                    .round(),
                rng.random_range(height as f64 * 0.12..height as f64 * 0.2)
                    .round(),
            );
            let center = (
                rng.random_range(width as f64 * 0.3..width as f64 * 0.7)
                    .round(),
                rng.random_range(height as f64 * 0.3..height as f64 * 0.7)
                    .round(),
            );
            sprites.push(Sprite {
                shape: if i % 2 == 0 {
                    Shape::Rect
                } else {
                    Shape::Ellipse
                },
                center,
                radius: r,
                depth: fb / disp as f64,
                velocity: motion(&mut rng),
                brightness: SPRITE_BRIGHTNESS[i % SPRITE_BRIGHTNESS.len()],
            });
        }
        SceneSpec {
            height,
            width,
            background_depth: fb / bg_disp as f64,
            background_velocity,
            background_brightness: BACKGROUND_BRIGHTNESS,
            sprites,
            fb,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 2 || self.width < 2 {
            return Err(Error::InvalidArgument(format!(
                "scene extent {}x{} too small",
                self.height, self.width
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if !(self.fb.is_finite() && self.fb > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fb must be positive, got {}",
                self.fb
            )));
        }
        if !(self.background_depth > 0.0) {
            return Err(Error::InvalidArgument(
                "background depth must be positive".into(),
            ));
        }
        if !(self.texture_amplitude > 0.0) || self.texture_components == 0 {
            return Err(Error::InvalidArgument(
                "texture needs positive contrast".into(),
            ));
        }
        let swing = self.texture_amplitude * self.texture_components as f64;
        let brightness = std::iter::once(self.background_brightness)
            .chain(self.sprites.iter().map(|s| s.brightness));
        for b in brightness {
            if b - swing < 0.0 || b + swing > 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "layer brightness {b} with texture swing {swing} leaves [0, 1]"
                )));
            }
        }
        let (lo, hi) = self.wavelength;
        if !(lo >= 2.0 && hi >= lo) {
            return Err(Error::InvalidArgument(format!(
                "bad wavelength range {lo}..{hi}"
            )));
        }
        for (i, s) in self.sprites.iter().enumerate() {
            if !(s.depth.is_finite() && s.depth > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sprite {i}: depth must be positive"
                )));
            }
            if !(s.radius.0 > 0.0 && s.radius.1 > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sprite {i}: radius must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Sum of oriented sinusoids, one set per channel.
#[derive(Debug, Clone)]
struct Texture {
    // (kx, ky, phase) per component, per channel
    waves: Vec<Vec<(f64, f64, f64)>>,
    amplitude: f64,
    mean: f64,
}

impl Texture {
    fn sample(spec: &SceneSpec, mean: f64, rng: &mut ChaCha8Rng) -> Self {
        let (lo, hi) = spec.wavelength;
        let waves = (0..spec.channels)
            .map(|_| {
                (0..spec.texture_components)
                    .map(|_| {
                        let lambda = if hi > lo {
                            rng.random_range(lo..hi)
                        } else {
                            lo
                        };
                        let theta = rng.random_range(0.0..std::f64::consts::PI);
                        let k = std::f64::consts::TAU / lambda;
                        (
                            k * theta.cos(),
                            k * theta.sin(),
                            rng.random_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect()
            })
            .collect();
        Texture {
            waves,
            amplitude: spec.texture_amplitude,
            mean,
        }
    }

    fn at(&self, c: usize, x: f64, y: f64) -> f64 {
        self.mean
            + self.amplitude
                * self.waves[c]
                    .iter()
                    .map(|(kx, ky, p)| (kx * x + ky * y + p).sin())
                    .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    disparity: f64,
    velocity: (f64, f64),
    /// `None` for the background.
    sprite: Option<usize>,
}

impl Layer {
    fn offset(&self, frame: Frame) -> (f64, f64) {
        let t = match frame.time {
            Time::T0 => 0.0,
            Time::T1 => 1.0,
        };
        let r = match frame.view {
            View::Left => 0.0,
            View::Right => 1.0,
        };
        (
            t * self.velocity.0 - r * self.disparity,
            t * self.velocity.1,
        )
    }
}

struct Scene<'a> {
    spec: &'a SceneSpec,
    layers: Vec<Layer>,
    textures: Vec<Texture>,
    /// Front-to-back layer order (background last).
    order: Vec<usize>,
}

impl<'a> Scene<'a> {
    fn new(spec: &'a SceneSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut layers = vec![Layer {
            disparity: spec.fb / spec.background_depth,
            velocity: spec.background_velocity,
            sprite: None,
        }];
        layers.extend(spec.sprites.iter().enumerate().map(|(i, s)| Layer {
            disparity: spec.fb / s.depth,
            velocity: s.velocity,
            sprite: Some(i),
        }));
        let textures = layers
            .iter()
            .map(|l| {
                let mean = l
                    .sprite
                    .map_or(spec.background_brightness, |i| spec.sprites[i].brightness);
                Texture::sample(spec, mean, &mut rng)
            })
            .collect();
        let mut order: Vec<usize> = (1..layers.len()).collect();
        // Stable sort keeps the earlier sprite in front on depth ties.
        order.sort_by(|&a, &b| {
            spec.sprites[a - 1]
                .depth
                .total_cmp(&spec.sprites[b - 1].depth)
        });
        order.push(0);
        Scene {
            spec,
            layers,
            textures,
            order,
        }
    }

    fn layer_coord(&self, layer: usize, frame: Frame, x: f64, y: f64) -> (f64, f64) {
        let (ox, oy) = self.layers[layer].offset(frame);
        (x - ox, y - oy)
    }

    fn front_layer(&self, frame: Frame, x: f64, y: f64) -> usize {
        for &l in &self.order {
            match self.layers[l].sprite {
                None => return l,
                Some(s) => {
                    let (qx, qy) = self.layer_coord(l, frame, x, y);
                    if self.spec.sprites[s].covers(qx, qy) {
                        return l;
                    }
                }
            }
        }
        0
    }

    fn layer_map(&self, frame: Frame) -> Vec<usize> {
        let (h, w) = (self.spec.height, self.spec.width);
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                out.push(self.front_layer(frame, x as f64, y as f64));
            }
        }
        out
    }

    fn render(&self, frame: Frame, layers: &[usize]) -> Result<Image> {
        let w = self.spec.width;
        Image::from_fn(self.spec.height, w, self.spec.channels, |c, y, x| {
            let l = layers[y * w + x];
            let (qx, qy) = self.layer_coord(l, frame, x as f64, y as f64);
            self.textures[l].at(c, qx, qy)
        })
    }

    fn correspondence(&self, id: MapId, layers_from: &[usize]) -> CorrField {
        let w = self.spec.width;
        CorrField::from_fn(self.spec.height, w, |y, x| {
            let l = &self.layers[layers_from[y * w + x]];
            let (a, b) = (l.offset(id.from), l.offset(id.to));
            (b.0 - a.0, b.1 - a.1)
        })
    }

    fn visibility(
        &self,
        id: MapId,
        corr: &CorrField,
        layers_from: &[usize],
        layers_to: &[usize],
    ) -> OcclusionMap {
        let (h, w) = (self.spec.height, self.spec.width);
        OcclusionMap::from_fn(h, w, |y, x| {
            let (u, v) = corr.at(y, x);
            let (tx, ty) = (x as f64 + u, y as f64 + v);
            let inside = tx >= 0.0 && ty >= 0.0 && tx <= (w - 1) as f64 && ty <= (h - 1) as f64;
            inside && {
                let l = layers_from[y * w + x];
                if tx.fract() == 0.0 && ty.fract() == 0.0 {
                    layers_to[ty as usize * w + tx as usize] == l
                } else {
                    self.front_layer(id.to, tx, ty) == l
                }
            }
        })
    }
}

/// Renders the four frames with ground-truth maps and visibility for all
/// eight maps, and records `fb` on the cycle.
pub fn render_cycle(spec: &SceneSpec) -> Result<Cycle> {
    spec.validate()?;
    let scene = Scene::new(spec);
    let layer_maps: Vec<Vec<usize>> = Frame::ALL.iter().map(|f| scene.layer_map(*f)).collect();
    for (i, _) in spec.sprites.iter().enumerate() {
        for (f, lm) in Frame::ALL.iter().zip(&layer_maps) {
            if !lm.contains(&(i + 1)) {
                return Err(Error::DegenerateScene(format!(
                    "sprite {i} is not visible in frame {f}"
                )));
            }
        }
    }
    let images: Vec<Image> = Frame::ALL
        .iter()
        .zip(&layer_maps)
        .map(|(f, lm)| scene.render(*f, lm))
        .collect::<Result<_>>()?;
    let mut maps = MapSet::new();
    let mut occlusion = MapSet::new();
    for id in MapId::ALL {
        let from = &layer_maps[id.from.index()];
        let to = &layer_maps[id.to.index()];
        let corr = scene.correspondence(id, from);
        occlusion.insert(id, scene.visibility(id, &corr, from, to));
        maps.insert(id, corr);
    }
    let [lt, rt, lt1, rt1]: [Image; 4] = images.try_into().expect("four frames");
    let mut cycle = Cycle::new(lt, rt, lt1, rt1)?;
    cycle.ground_truth = Some(GroundTruth { maps, occlusion });
    cycle.focal_length_times_baseline = Some(spec.fb);
    Ok(cycle)
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma` px to every
/// displacement, drawing maps in [`MapId::ALL`] order.
pub fn perturb(maps: &MapSet<CorrField>, sigma: f64, seed: u64) -> Result<MapSet<CorrField>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be nonnegative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(maps.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    maps.try_map(|_, c| {
        let f = c.as_field();
        let data = f
            .data()
            .iter()
            .map(|v| v + normal.sample(&mut rng))
            .collect();
        CorrField::new(Field::from_vec(f.height(), f.width(), 2, data)?)
    })
}
