//! Unsupervised objectives over a stereo-video cycle.
//!
//! * reconstruction: occlusion-aware mix of SSIM and L1 photometric error
//! * smoothness: edge-aware second-order penalty on correspondence fields
//! * left-right consistency: stereo maps should invert each other
//! * two-warp consistency: chained flow/stereo warps must agree with a
//!   direct warp (see [`two_warp`])
//!
//! The `*_var` functions record onto a [`Tape`]; the plain functions are
//! value-only conveniences built on them.

pub mod two_warp;

use std::fmt;

use crate::cycle::{Cycle, Frame, MapId, MapKind, MapSet};
use crate::error::{Error, Result};
use crate::field::{ops, Axis, CorrField, Field, Image, OcclusionMap, Order, Tape, Var};
use crate::occlusion::{
    estimate_occlusion, two_warp_occlusion, OcclusionParams, REBINARIZE_THRESHOLD,
};

pub use two_warp::{OcclusionCarrier, TwoWarpPath, TwoWarpVariant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// SSIM share of the photometric error; the rest is L1.
    pub alpha: f64,
    /// Edge sensitivity of the smoothness weights.
    pub beta: f64,
    pub lambda_sm: f64,
    pub lambda_lr: f64,
    pub lambda_2warp: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    /// Odd box-window side length.
    pub ssim_window: usize,
    /// Units in which the total loss measures smoothness and left-right
    /// consistency of the fields.
    pub regularizer_units: FieldUnits,
}

/// Unit convention for the regularizers inside the total loss. Warping
/// always uses pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldUnits {
    Pixels,
    /// Displacements divided by the image width at each scale, so both terms
    /// are resolution independent.
    #[default]
    ImageWidth,
}

impl FieldUnits {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pixels" => Ok(FieldUnits::Pixels),
            "image_width" => Ok(FieldUnits::ImageWidth),
            other => Err(Error::InvalidArgument(format!(
                "unknown field units `{other}` (expected pixels or image_width)"
            ))),
        }
    }

    fn factor(self, width: usize) -> f64 {
        match self {
            FieldUnits::Pixels => 1.0,
            FieldUnits::ImageWidth => 1.0 / width as f64,
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.85,
            beta: 10.0,
            lambda_sm: 10.0,
            lambda_lr: 0.5,
            lambda_2warp: 0.2,
            ssim_c1: 0.01 * 0.01,
            ssim_c2: 0.03 * 0.03,
            ssim_window: 3,
            regularizer_units: FieldUnits::default(),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda_sm", self.lambda_sm),
            ("lambda_lr", self.lambda_lr),
            ("lambda_2warp", self.lambda_2warp),
            ("ssim_c1", self.ssim_c1),
            ("ssim_c2", self.ssim_c2),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if self.alpha > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "alpha must be at most 1, got {}",
                self.alpha
            )));
        }
        if self.ssim_window.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "ssim_window must be odd, got {}",
                self.ssim_window
            )));
        }
        Ok(())
    }

    fn ssim_radius(&self) -> usize {
        self.ssim_window / 2
    }
}

/// Per-SSIM-window statistics on the tape, averaged over channels.
pub fn ssim_var(tape: &mut Tape, a: Var, b: Var, weights: &LossWeights) -> Result<Var> {
    let r = weights.ssim_radius();
    let mu_a = tape.box_filter(a, r);
    let mu_b = tape.box_filter(b, r);
    let aa = tape.mul(a, a)?;
    let bb = tape.mul(b, b)?;
    let ab = tape.mul(a, b)?;
    let mu_aa = tape.square(mu_a);
    let mu_bb = tape.square(mu_b);
    let mu_ab = tape.mul(mu_a, mu_b)?;
    let e_aa = tape.box_filter(aa, r);
    let e_bb = tape.box_filter(bb, r);
    let e_ab = tape.box_filter(ab, r);
    let var_a = tape.sub(e_aa, mu_aa)?;
    let var_b = tape.sub(e_bb, mu_bb)?;
    let cov = tape.sub(e_ab, mu_ab)?;

    let two_mu = tape.scale(mu_ab, 2.0);
    let lum_num = tape.offset(two_mu, weights.ssim_c1);
    let mu_sq = tape.add(mu_aa, mu_bb)?;
    let lum_den = tape.offset(mu_sq, weights.ssim_c1);
    let two_cov = tape.scale(cov, 2.0);
    let cs_num = tape.offset(two_cov, weights.ssim_c2);
    let var_sum = tape.add(var_a, var_b)?;
    let cs_den = tape.offset(var_sum, weights.ssim_c2);

    let num = tape.mul(lum_num, cs_num)?;
    let den = tape.mul(lum_den, cs_den)?;
    let s = tape.div(num, den)?;
    Ok(tape.mean_channels(s))
}

/// Per-pixel `α (1 − SSIM)/2 + (1 − α) |a − b|`, channel-averaged.
pub fn photometric_var(tape: &mut Tape, a: Var, b: Var, weights: &LossWeights) -> Result<Var> {
    let s = ssim_var(tape, a, b, weights)?;
    let neg = tape.scale(s, -1.0);
    let dissim = tape.offset(neg, 1.0);
    let ssim_part = tape.scale(dissim, weights.alpha / 2.0);
    let diff = tape.sub(a, b)?;
    let ad = tape.abs(diff);
    let l1 = tape.mean_channels(ad);
    let l1_part = tape.scale(l1, 1.0 - weights.alpha);
    tape.add(ssim_part, l1_part)
}

pub fn reconstruction_var(
    tape: &mut Tape,
    target: Var,
    reconstructed: Var,
    mask: &Field,
    weights: &LossWeights,
) -> Result<Var> {
    let per_pixel = photometric_var(tape, target, reconstructed, weights)?;
    tape.reduce_mean(per_pixel, Some(mask))
}

/// `exp(−β |∂_d I|)` along x and y, with the first-order image derivative
/// averaged over channels.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    pub x: Field,
    pub y: Field,
}

impl EdgeWeights {
    pub fn new(image: &Image, beta: f64) -> Self {
        let along = |axis| {
            let g = ops::spatial_gradient(image.as_field(), axis, Order::First);
            let c = g.channels() as f64;
            let mut acc = Field::zeros(g.height(), g.width(), 1);
            for ch in 0..g.channels() {
                for (a, v) in acc.data_mut().iter_mut().zip(g.channel(ch)) {
                    *a += v.abs();
                }
            }
            acc.map(|s| (-beta * (s / c)).exp())
        };
        EdgeWeights {
            x: along(Axis::X),
            y: along(Axis::Y),
        }
    }
}

/// `(1/N) ∑ ∑_d ∑_{u,v} |∂²_d corr| · w_d`.
pub fn smoothness_var(tape: &mut Tape, corr: Var, edges: &EdgeWeights) -> Result<Var> {
    let mut acc = None;
    for (axis, w) in [(Axis::X, &edges.x), (Axis::Y, &edges.y)] {
        let g = tape.spatial_gradient(corr, axis, Order::Second);
        let a = tape.abs(g);
        let s = tape.sum_channels(a);
        let wv = tape.constant(w.clone());
        let term = tape.mul(s, wv)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    tape.reduce_mean(acc.expect("two axes"), None)
}

/// Mean of `|d_lr + warp(d_rl, d_lr)|` (summed over u, v) over pixels where
/// `d_lr` samples inside the image.
pub fn lr_consistency_var(tape: &mut Tape, d_lr: Var, d_rl: Var) -> Result<Var> {
    let back = tape.warp(d_rl, d_lr)?;
    let r = tape.add(d_lr, back)?;
    let a = tape.abs(r);
    let s = tape.sum_channels(a);
    let mask = crate::warp::validity_of(tape.value(d_lr))?;
    tape.reduce_mean(s, Some(&mask))
}

/// Images of one pyramid scale with their cached edge weights.
#[derive(Debug, Clone)]
pub struct ScaleImages {
    frames: [Option<Image>; 4],
    edges: [Option<EdgeWeights>; 4],
}

impl ScaleImages {
    pub fn new(frames: [Option<Image>; 4], beta: f64) -> Self {
        let edges =
            std::array::from_fn(|i| frames[i].as_ref().map(|im| EdgeWeights::new(im, beta)));
        ScaleImages { frames, edges }
    }

    pub fn from_cycle(cycle: &Cycle, beta: f64) -> Self {
        Self::new(
            std::array::from_fn(|i| Some(cycle.images()[i].clone())),
            beta,
        )
    }

    pub fn image(&self, frame: Frame) -> Result<&Image> {
        self.frames[frame.index()]
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("frame {frame} is not available")))
    }

    fn edges(&self, frame: Frame) -> Result<&EdgeWeights> {
        self.edges[frame.index()]
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("frame {frame} is not available")))
    }

    pub fn height(&self) -> usize {
        self.frames.iter().flatten().next().map_or(0, Image::height)
    }

    pub fn width(&self) -> usize {
        self.frames.iter().flatten().next().map_or(0, Image::width)
    }

    pub fn downsample(&self, beta: f64) -> Self {
        Self::new(
            std::array::from_fn(|i| self.frames[i].as_ref().map(Image::downsample)),
            beta,
        )
    }

    /// This scale followed by `count - 1` successively halved copies.
    pub fn pyramid(self, count: usize, beta: f64) -> Vec<ScaleImages> {
        let mut out = vec![self];
        while out.len() < count {
            let next = out.last().expect("nonempty").downsample(beta);
            out.push(next);
        }
        out
    }
}

/// Which maps are optimized and which cross-map terms apply. Flow maps are
/// always occlusion-masked and stereo maps always get left-right
/// consistency; only active maps contribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub maps: Vec<MapId>,
    pub two_warp: Option<TwoWarpVariant>,
    pub carrier: OcclusionCarrier,
}

impl Objective {
    pub fn full_cycle(two_warp: Option<TwoWarpVariant>) -> Self {
        Objective {
            maps: MapId::ALL.to_vec(),
            two_warp,
            carrier: OcclusionCarrier::default(),
        }
    }

    pub fn pair(forward: MapId) -> Self {
        Objective {
            maps: vec![forward, forward.reverse()],
            two_warp: None,
            carrier: OcclusionCarrier::default(),
        }
    }

    pub fn is_active(&self, id: MapId) -> bool {
        self.maps.contains(&id)
    }

    pub fn two_warp_paths(&self) -> Vec<TwoWarpPath> {
        self.two_warp
            .map(|v| v.paths(self.carrier).to_vec())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Reconstruction,
    Smoothness,
    LrConsistency,
    TwoWarp,
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermKind::Reconstruction => "rec",
            TermKind::Smoothness => "sm",
            TermKind::LrConsistency => "lr",
            TermKind::TwoWarp => "twowarp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subject {
    Map(MapId),
    Target(Frame),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Map(m) => write!(f, "{m}"),
            Subject::Target(t) => write!(f, "target {t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermValue {
    pub kind: TermKind,
    pub scale: usize,
    pub subject: Subject,
    pub value: f64,
}

/// Every term of one total-loss evaluation plus the weighted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleLossReport {
    pub terms: Vec<TermValue>,
    pub rec: f64,
    pub sm: f64,
    pub lr: f64,
    pub two_warp: f64,
    pub weights: LossWeights,
    pub total: f64,
    pub degenerate_masks: usize,
}

impl CycleLossReport {
    /// Weighted contribution of one term kind to the total.
    pub fn contribution(&self, kind: TermKind) -> f64 {
        match kind {
            TermKind::Reconstruction => self.rec,
            TermKind::Smoothness => self.weights.lambda_sm * self.sm,
            TermKind::LrConsistency => self.weights.lambda_lr * self.lr,
            TermKind::TwoWarp => self.weights.lambda_2warp * self.two_warp,
        }
    }

    /// The first non-finite term, described for diagnostics.
    pub fn first_non_finite(&self) -> Option<String> {
        self.terms
            .iter()
            .find(|t| !t.value.is_finite())
            .map(|t| format!("{} (scale {}, {})", t.kind, t.scale, t.subject))
            .or_else(|| (!self.total.is_finite()).then(|| "total".to_string()))
    }
}

/// Inputs of the total loss at one scale.
pub struct ScaleTerms<'a> {
    pub images: &'a ScaleImages,
    pub maps: &'a MapSet<Var>,
    /// Occlusion masks of flow maps; missing entries count as all visible.
    pub occlusion: &'a MapSet<OcclusionMap>,
}

/// Mask of one two-warp path in the target frame.
pub fn two_warp_mask(
    path: &TwoWarpPath,
    maps: &MapSet<CorrField>,
    occlusion: &MapSet<OcclusionMap>,
) -> Result<OcclusionMap> {
    let outer = maps.require(path.outer)?;
    let (h, w) = (outer.height(), outer.width());
    let occ = occlusion
        .get(path.occlusion)
        .cloned()
        .unwrap_or_else(|| OcclusionMap::all_visible(h, w));
    let mut mask = match path.carrier {
        Some(c) => two_warp_occlusion(&occ, maps.require(c)?)?,
        None => occ,
    };
    mask = mask.and(&crate::warp::validity_mask(outer))?;
    let inner_valid = crate::warp::validity_mask(maps.require(path.inner)?);
    let carried = ops::warp(inner_valid.as_field(), outer.as_field());
    mask = mask.and(&OcclusionMap::threshold(&carried, REBINARIZE_THRESHOLD)?)?;
    mask.and(&crate::warp::validity_mask(maps.require(path.direct)?))
}

/// Per-pixel photometric disagreement of a two-warp path (before masking).
pub fn two_warp_photometric_var(
    tape: &mut Tape,
    images: &ScaleImages,
    maps: &MapSet<Var>,
    path: &TwoWarpPath,
    weights: &LossWeights,
) -> Result<Var> {
    let source = tape.constant(images.image(path.source)?.as_field().clone());
    let inner = tape.warp(source, *maps.require(path.inner)?)?;
    let chained = tape.warp(inner, *maps.require(path.outer)?)?;
    let direct_src = tape.constant(images.image(path.direct_source())?.as_field().clone());
    let direct = tape.warp(direct_src, *maps.require(path.direct)?)?;
    photometric_var(tape, chained, direct, weights)
}

fn field_values(tape: &Tape, maps: &MapSet<Var>) -> Result<MapSet<CorrField>> {
    maps.try_map(|_, v| CorrField::new(tape.value(*v).clone()))
}

/// Records the total loss over all scales. Two-warp terms use scale 0 only.
pub fn total_loss_var(
    tape: &mut Tape,
    scales: &[ScaleTerms<'_>],
    objective: &Objective,
    weights: &LossWeights,
) -> Result<(Var, CycleLossReport)> {
    weights.validate()?;
    let degenerate_before = tape.degenerate_masks();
    let mut terms = Vec::new();
    let mut vars: [Vec<Var>; 4] = Default::default();

    for (s, scale) in scales.iter().enumerate() {
        let unit = weights.regularizer_units.factor(scale.images.width());
        let mut frame_vars: [Option<Var>; 4] = [None; 4];
        let mut frame_var = |tape: &mut Tape, frame: Frame| -> Result<Var> {
            if let Some(v) = frame_vars[frame.index()] {
                return Ok(v);
            }
            let v = tape.constant(scale.images.image(frame)?.as_field().clone());
            frame_vars[frame.index()] = Some(v);
            Ok(v)
        };

        for &id in &objective.maps {
            let corr = *scale.maps.require(id)?;
            let target = frame_var(tape, id.from)?;
            let source = frame_var(tape, id.to)?;
            let recon = tape.warp(source, corr)?;
            let mut mask = crate::warp::validity_of(tape.value(corr))?;
            if id.kind() == MapKind::Flow {
                if let Some(o) = scale.occlusion.get(id) {
                    mask.check_same_shape(o.as_field(), "occlusion mask")?;
                    mask = mask.zip_map(o.as_field(), |a, b| a * b);
                }
            }
            let rec = reconstruction_var(tape, target, recon, &mask, weights)?;
            terms.push((TermKind::Reconstruction, s, Subject::Map(id), rec));
            vars[0].push(rec);

            let sm = smoothness_var(tape, corr, scale.images.edges(id.from)?)?;
            let sm = tape.scale(sm, unit);
            terms.push((TermKind::Smoothness, s, Subject::Map(id), sm));
            vars[1].push(sm);

            if id.kind() == MapKind::Stereo && objective.is_active(id.reverse()) {
                let back = *scale.maps.require(id.reverse())?;
                let lr = lr_consistency_var(tape, corr, back)?;
                let lr = tape.scale(lr, unit);
                terms.push((TermKind::LrConsistency, s, Subject::Map(id), lr));
                vars[2].push(lr);
            }
        }

        if s == 0 {
            let paths = objective.two_warp_paths();
            let values = if paths.is_empty() {
                None
            } else {
                Some(field_values(tape, scale.maps)?)
            };
            for path in paths {
                let maps = values.as_ref().expect("computed when paths exist");
                let mask = two_warp_mask(&path, maps, scale.occlusion)?;
                let per_pixel =
                    two_warp_photometric_var(tape, scale.images, scale.maps, &path, weights)?;
                let tw = tape.reduce_mean(per_pixel, Some(mask.as_field()))?;
                terms.push((TermKind::TwoWarp, s, Subject::Target(path.target), tw));
                vars[3].push(tw);
            }
        }
    }

    let rec = tape.add_all(&vars[0])?;
    let sm = tape.add_all(&vars[1])?;
    let lr = tape.add_all(&vars[2])?;
    let tw = tape.add_all(&vars[3])?;
    let sm_w = tape.scale(sm, weights.lambda_sm);
    let lr_w = tape.scale(lr, weights.lambda_lr);
    let tw_w = tape.scale(tw, weights.lambda_2warp);
    let total = tape.add_all(&[rec, sm_w, lr_w, tw_w])?;

    let report = CycleLossReport {
        terms: terms
            .into_iter()
            .map(|(kind, scale, subject, v)| TermValue {
                kind,
                scale,
                subject,
                value: tape.scalar(v),
            })
            .collect(),
        rec: tape.scalar(rec),
        sm: tape.scalar(sm),
        lr: tape.scalar(lr),
        two_warp: tape.scalar(tw),
        weights: *weights,
        total: tape.scalar(total),
        degenerate_masks: tape.degenerate_masks() - degenerate_before,
    };
    Ok((total, report))
}

/// Forward–backward occlusion masks for every flow map whose reverse is present.
pub fn estimate_flow_occlusions(
    maps: &MapSet<CorrField>,
    params: OcclusionParams,
) -> Result<MapSet<OcclusionMap>> {
    let mut out = MapSet::new();
    for (id, fwd) in maps.iter() {
        if id.kind() != MapKind::Flow {
            continue;
        }
        if let Some(bwd) = maps.get(id.reverse()) {
            out.insert(id, estimate_occlusion(fwd, bwd, params)?);
        }
    }
    Ok(out)
}

fn check_pair(a: &Field, b: &Field, op: &'static str) -> Result<()> {
    a.check_same_shape(b, op)
}

/// Per-pixel SSIM, averaged over channels.
pub fn ssim(a: &Image, b: &Image, weights: &LossWeights) -> Result<Field> {
    check_pair(a.as_field(), b.as_field(), "ssim")?;
    let mut tape = Tape::new();
    let va = tape.constant(a.as_field().clone());
    let vb = tape.constant(b.as_field().clone());
    let s = ssim_var(&mut tape, va, vb, weights)?;
    Ok(tape.value(s).clone())
}

pub fn reconstruction_loss(
    target: &Image,
    reconstructed: &Image,
    mask: &OcclusionMap,
    weights: &LossWeights,
) -> Result<f64> {
    check_pair(
        target.as_field(),
        reconstructed.as_field(),
        "reconstruction_loss",
    )?;
    let mut tape = Tape::new();
    let t = tape.constant(target.as_field().clone());
    let r = tape.constant(reconstructed.as_field().clone());
    let l = reconstruction_var(&mut tape, t, r, mask.as_field(), weights)?;
    Ok(tape.scalar(l))
}

pub fn smoothness_loss(corr: &CorrField, image: &Image, beta: f64) -> Result<f64> {
    corr.as_field()
        .check_same_extent(image.as_field(), "smoothness_loss")?;
    let mut tape = Tape::new();
    let c = tape.constant(corr.as_field().clone());
    let l = smoothness_var(&mut tape, c, &EdgeWeights::new(image, beta))?;
    Ok(tape.scalar(l))
}

pub fn lr_consistency_loss(d_lr: &CorrField, d_rl: &CorrField) -> Result<f64> {
    check_pair(d_lr.as_field(), d_rl.as_field(), "lr_consistency_loss")?;
    let mut tape = Tape::new();
    let a = tape.constant(d_lr.as_field().clone());
    let b = tape.constant(d_rl.as_field().clone());
    let l = lr_consistency_var(&mut tape, a, b)?;
    Ok(tape.scalar(l))
}

/// Options for evaluating [`total_loss`] on fixed fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLossOptions {
    pub scales: usize,
    pub two_warp: Option<TwoWarpVariant>,
    pub carrier: OcclusionCarrier,
    pub occlusion: OcclusionParams,
}

impl Default for TotalLossOptions {
    fn default() -> Self {
        TotalLossOptions {
            scales: 4,
            two_warp: Some(TwoWarpVariant::FlowThenStereo),
            carrier: OcclusionCarrier::default(),
            occlusion: OcclusionParams::default(),
        }
    }
}

/// Builds the per-scale map pyramid by repeated downsampling of the
/// finest-scale maps.
pub fn map_pyramid(maps: &MapSet<CorrField>, scales: usize) -> Vec<MapSet<CorrField>> {
    let mut out = vec![maps.clone()];
    while out.len() < scales {
        let next = out.last().expect("nonempty").map(|_, c| c.downsample());
        out.push(next);
    }
    out
}

/// Evaluates the full objective on fixed correspondence fields, estimating
/// flow occlusion at every scale from the fields themselves.
pub fn total_loss(
    cycle: &Cycle,
    maps: &MapSet<CorrField>,
    weights: &LossWeights,
    options: &TotalLossOptions,
) -> Result<CycleLossReport> {
    let objective = Objective {
        maps: MapId::ALL.to_vec(),
        two_warp: options.two_warp,
        carrier: options.carrier,
    };
    evaluate_objective(
        ScaleImages::from_cycle(cycle, weights.beta),
        maps,
        &objective,
        weights,
        options.scales,
        options.occlusion,
    )
}

pub(crate) fn evaluate_objective(
    finest: ScaleImages,
    maps: &MapSet<CorrField>,
    objective: &Objective,
    weights: &LossWeights,
    scales: usize,
    occlusion: OcclusionParams,
) -> Result<CycleLossReport> {
    let scales = scales.max(1);
    for id in &objective.maps {
        let m = maps.require(*id)?;
        if m.height() != finest.height() || m.width() != finest.width() {
            return Err(Error::shape(
                "total_loss",
                m.as_field().shape(),
                format!("{}x{}", finest.height(), finest.width()),
            ));
        }
    }
    let images = finest.pyramid(scales, weights.beta);
    let fields = map_pyramid(maps, scales);
    let occ = fields
        .iter()
        .map(|m| estimate_flow_occlusions(m, occlusion))
        .collect::<Result<Vec<_>>>()?;
    let mut tape = Tape::new();
    let vars: Vec<MapSet<Var>> = fields
        .iter()
        .map(|m| m.map(|_, c| tape.constant(c.as_field().clone())))
        .collect();
    let scale_terms: Vec<ScaleTerms<'_>> = (0..scales)
        .map(|s| ScaleTerms {
            images: &images[s],
            maps: &vars[s],
            occlusion: &occ[s],
        })
        .collect();
    let (_, report) = total_loss_var(&mut tape, &scale_terms, objective, weights)?;
    Ok(report)
}

/// Two-warp loss of a variant's primary (right-view target) path.
pub fn two_warp_loss(
    cycle: &Cycle,
    maps: &MapSet<CorrField>,
    variant: u32,
    weights: &LossWeights,
) -> Result<f64> {
    let path = TwoWarpVariant::from_id(variant)?.primary_path(OcclusionCarrier::default());
    two_warp_path_loss(cycle, maps, &path, weights, OcclusionParams::default())
}

pub fn two_warp_path_loss(
    cycle: &Cycle,
    maps: &MapSet<CorrField>,
    path: &TwoWarpPath,
    weights: &LossWeights,
    occlusion: OcclusionParams,
) -> Result<f64> {
    let (per_pixel, mask) = two_warp_residual(cycle, maps, path, weights, occlusion)?;
    let mut tape = Tape::new();
    let p = tape.constant(per_pixel);
    let l = tape.reduce_mean(p, Some(mask.as_field()))?;
    Ok(tape.scalar(l))
}

/// Per-pixel two-warp photometric disagreement and the mask the loss uses.
pub fn two_warp_residual(
    cycle: &Cycle,
    maps: &MapSet<CorrField>,
    path: &TwoWarpPath,
    weights: &LossWeights,
    occlusion: OcclusionParams,
) -> Result<(Field, OcclusionMap)> {
    path.validate()?;
    let images = ScaleImages::from_cycle(cycle, weights.beta);
    let occ = estimate_flow_occlusions(maps, occlusion)?;
    let mask = two_warp_mask(path, maps, &occ)?;
    let mut tape = Tape::new();
    let vars = maps.map(|_, c| tape.constant(c.as_field().clone()));
    let per_pixel = two_warp_photometric_var(&mut tape, &images, &vars, path, weights)?;
    Ok((tape.value(per_pixel).clone(), mask))
}
