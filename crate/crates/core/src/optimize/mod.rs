//! Coarse-to-fine direct optimization of correspondence fields.
//!
//! Fields start at zero on the coarsest pyramid level. Each level runs Adam
//! on the total loss (multi-scale below the current level), with flow
//! occlusion masks re-estimated from the current fields every
//! `occlusion_refresh_interval` iterations and held fixed in between. Fields
//! are bilinearly upsampled into the next level.

mod adam;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cycle::{Cycle, Frame, MapId, MapSet};
use crate::error::{Error, Result};
use crate::field::{ops, CorrField, Field, Image, OcclusionMap, Tape, Var};
use crate::loss::{
    estimate_flow_occlusions, map_pyramid, total_loss_var, CycleLossReport, LossWeights, Objective,
    OcclusionCarrier, ScaleImages, ScaleTerms, TwoWarpVariant,
};
use crate::occlusion::OcclusionParams;

pub use adam::{Adam, AdamParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub pyramid_levels: usize,
    pub iterations_per_level: usize,
    /// Maximum number of loss scales evaluated at one level.
    pub loss_scales: usize,
    pub step_size: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub occlusion_refresh_interval: usize,
    /// Step size at the end of each level as a fraction of `step_size`; the
    /// step follows a cosine from `step_size` down to this within a level.
    pub final_step_fraction: f64,
    /// Iterations over which the step size ramps up linearly at the start
    /// of each level, so Adam's first sign-like steps stay small.
    pub warmup_iterations: usize,
    pub occlusion: OcclusionParams,
    /// `None` disables the two-warp term.
    pub two_warp_variant: Option<TwoWarpVariant>,
    pub carrier: OcclusionCarrier,
    pub seed: u64,
    /// Optimize each level over a multi-resolution sum of components
    /// instead of raw per-pixel values. The objective is unchanged.
    pub multiscale_basis: bool,
    /// Standard deviation (px) of the Gaussian noise added to the zero
    /// initialization.
    pub init_noise: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            pyramid_levels: 4,
            iterations_per_level: 300,
            loss_scales: 4,
            step_size: 0.02,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            occlusion_refresh_interval: 25,
            final_step_fraction: 0.05,
            warmup_iterations: 20,
            occlusion: OcclusionParams::default(),
            two_warp_variant: Some(TwoWarpVariant::FlowThenStereo),
            carrier: OcclusionCarrier::default(),
            seed: 0,
            multiscale_basis: true,
            init_noise: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("pyramid_levels", self.pyramid_levels),
            ("iterations_per_level", self.iterations_per_level),
            ("loss_scales", self.loss_scales),
            (
                "occlusion_refresh_interval",
                self.occlusion_refresh_interval,
            ),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidArgument(
                "adam betas must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.final_step_fraction) {
            return Err(Error::InvalidArgument(format!(
                "final_step_fraction must lie in [0, 1], got {}",
                self.final_step_fraction
            )));
        }
        if !(self.adam_eps > 0.0) || !(self.init_noise >= 0.0) {
            return Err(Error::InvalidArgument(
                "adam_eps must be positive and init_noise nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Step size for iteration `it` of a level: a linear warmup followed by
    /// cosine annealing over the whole level.
    pub fn step_size_at(&self, it: usize) -> f64 {
        let n = self.iterations_per_level;
        let warmup = ((it + 1) as f64 / self.warmup_iterations.max(1) as f64).min(1.0);
        if n <= 1 {
            return self.step_size * warmup;
        }
        let progress = it as f64 / (n - 1) as f64;
        let floor = self.final_step_fraction;
        let cosine = floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.step_size * warmup * cosine
    }

    fn adam(&self) -> AdamParams {
        AdamParams {
            step_size: self.step_size,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// One optimizer step. `refresh_jump` is the change of the total caused by
/// re-estimating occlusion before this step (0 when no refresh happened).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub level: usize,
    pub rec: f64,
    pub sm: f64,
    pub lr: f64,
    pub two_warp: f64,
    pub total: f64,
    pub refreshed: bool,
    pub refresh_jump: f64,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub maps: MapSet<CorrField>,
    /// Flow occlusion masks estimated from the final fields.
    pub occlusion: MapSet<OcclusionMap>,
    pub history: Vec<HistoryEntry>,
    /// Loss report of the final fields.
    pub report: CycleLossReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    Flow,
    Stereo,
}

impl PairMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "flow" => Ok(PairMode::Flow),
            "stereo" => Ok(PairMode::Stereo),
            other => Err(Error::InvalidArgument(format!(
                "unknown pair mode `{other}` (expected flow or stereo)"
            ))),
        }
    }

    /// Map reconstructing the first image from the second. The first image
    /// plays `lt`; the second `lt1` (flow) or `rt` (stereo).
    pub fn forward_map(self) -> MapId {
        match self {
            PairMode::Flow => MapId::new(Frame::LT, Frame::LT1),
            PairMode::Stereo => MapId::new(Frame::LT, Frame::RT),
        }
    }
}

pub fn optimize_cycle(
    cycle: &Cycle,
    weights: &LossWeights,
    config: &OptimizerConfig,
) -> Result<Estimate> {
    let objective = Objective {
        maps: MapId::ALL.to_vec(),
        two_warp: config.two_warp_variant,
        carrier: config.carrier,
    };
    let frames = std::array::from_fn(|i| Some(cycle.images()[i].clone()));
    optimize_objective(frames, &objective, weights, config)
}

/// Single-task baseline: the forward and backward maps of one image pair.
/// Flow mode masks reconstruction by occlusion; stereo mode adds
/// left-right consistency. The two-warp term is never used.
pub fn optimize_pair(
    a: &Image,
    b: &Image,
    mode: PairMode,
    weights: &LossWeights,
    config: &OptimizerConfig,
) -> Result<Estimate> {
    a.as_field()
        .check_same_shape(b.as_field(), "optimize_pair")?;
    let forward = mode.forward_map();
    let mut frames: [Option<Image>; 4] = Default::default();
    frames[forward.from.index()] = Some(a.clone());
    frames[forward.to.index()] = Some(b.clone());
    optimize_objective(frames, &Objective::pair(forward), weights, config)
}

/// Optimizes many cycles concurrently. Each result equals what
/// [`optimize_cycle`] returns for that cycle alone.
pub fn optimize_batch(
    cycles: &[Cycle],
    weights: &LossWeights,
    config: &OptimizerConfig,
) -> Vec<Result<Estimate>> {
    cycles
        .par_iter()
        .map(|c| optimize_cycle(c, weights, config))
        .collect()
}

fn optimize_objective(
    frames: [Option<Image>; 4],
    objective: &Objective,
    weights: &LossWeights,
    config: &OptimizerConfig,
) -> Result<Estimate> {
    config.validate()?;
    weights.validate()?;
    let finest = ScaleImages::new(frames, weights.beta);
    let (h, w) = (finest.height(), finest.width());
    let min_side = 1usize << (config.pyramid_levels - 1);
    if h < min_side || w < min_side {
        return Err(Error::InvalidArgument(format!(
            "{h}x{w} images are too small for {} pyramid levels",
            config.pyramid_levels
        )));
    }

    // pyramid[k] is k halvings below the finest scale.
    let pyramid = finest.pyramid(config.pyramid_levels, weights.beta);
    let coarsest = &pyramid[config.pyramid_levels - 1];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut maps = MapSet::new();
    for &id in &objective.maps {
        maps.insert(
            id,
            initial_field(
                coarsest.height(),
                coarsest.width(),
                config.init_noise,
                &mut rng,
            )?,
        );
    }

    let mut history = Vec::with_capacity(config.pyramid_levels * config.iterations_per_level);
    for level in 0..config.pyramid_levels {
        let k = config.pyramid_levels - 1 - level;
        if level > 0 {
            let (lh, lw) = (pyramid[k].height(), pyramid[k].width());
            maps = maps.map(|_, c| c.upsample(lh, lw));
        }
        let scales = config.loss_scales.min(config.pyramid_levels - k);
        let images = &pyramid[k..k + scales];
        maps = run_level(
            images,
            maps,
            objective,
            weights,
            config,
            level,
            &mut history,
        )?;
    }

    let pyr = map_pyramid(&maps, config.loss_scales.min(config.pyramid_levels));
    let occ = pyr
        .iter()
        .map(|m| estimate_flow_occlusions(m, config.occlusion))
        .collect::<Result<Vec<_>>>()?;
    let images = &pyramid[..pyr.len()];
    let report = evaluate(images, &pyr[0], &occ, objective, weights)?;
    Ok(Estimate {
        occlusion: occ.into_iter().next().expect("at least one scale"),
        maps,
        history,
        report,
    })
}

fn initial_field(h: usize, w: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Result<CorrField> {
    if sigma == 0.0 {
        return Ok(CorrField::zeros(h, w));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let data = (0..2 * h * w).map(|_| normal.sample(rng)).collect();
    CorrField::new(Field::from_vec(h, w, 2, data)?)
}

/// Field parameterization at one level: a fixed base plus zero-initialized
/// components at the level resolution and successively halved resolutions,
/// each bilinearly upsampled to the level size. The loss sees only the sum;
/// coarse components let smooth motion move as a whole, which per-pixel
/// Adam steps cannot do when the L1 smoothness gradient dominates.
#[derive(Debug, Clone)]
struct Basis {
    height: usize,
    width: usize,
    base: Field,
    components: Vec<Field>,
}

impl Basis {
    fn new(base: &CorrField, multiscale: bool) -> Self {
        let (mut h, mut w) = (base.height(), base.width());
        let mut components = vec![Field::zeros(h, w, 2)];
        while multiscale && h.min(w) >= 4 {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
            components.push(Field::zeros(h, w, 2));
        }
        Basis {
            height: base.height(),
            width: base.width(),
            base: base.as_field().clone(),
            components,
        }
    }

    fn field(&self) -> Result<CorrField> {
        let mut out = self.base.clone();
        for c in &self.components {
            if c.height() == self.height && c.width() == self.width {
                out.add_assign(c);
            } else {
                out.add_assign(&ops::upsample_bilinear(c, self.height, self.width, &[]));
            }
        }
        CorrField::new(out)
    }

    /// Records the composed field with every component as a parameter.
    fn record(&self, tape: &mut Tape) -> Result<(Var, Vec<Var>)> {
        let mut v = tape.constant(self.base.clone());
        let mut params = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let p = tape.param(c.clone());
            params.push(p);
            let up = if c.height() == self.height && c.width() == self.width {
                p
            } else {
                tape.upsample(p, self.height, self.width, false)?
            };
            v = tape.add(v, up)?;
        }
        Ok((v, params))
    }
}

fn scale_terms(
    tape: &mut Tape,
    images: &[ScaleImages],
    finest: MapSet<Var>,
) -> Result<Vec<MapSet<Var>>> {
    let mut per_scale = vec![finest];
    for _ in 1..images.len() {
        let prev = per_scale.last().expect("nonempty");
        let mut next = MapSet::new();
        for (id, v) in prev.iter() {
            next.insert(id, tape.downsample(*v, true)?);
        }
        per_scale.push(next);
    }
    Ok(per_scale)
}

fn report_on_tape(
    tape: &mut Tape,
    images: &[ScaleImages],
    maps: MapSet<Var>,
    occlusion: &[MapSet<OcclusionMap>],
    objective: &Objective,
    weights: &LossWeights,
) -> Result<(Var, CycleLossReport)> {
    let per_scale = scale_terms(tape, images, maps)?;
    let terms: Vec<ScaleTerms<'_>> = images
        .iter()
        .zip(&per_scale)
        .zip(occlusion)
        .map(|((images, maps), occlusion)| ScaleTerms {
            images,
            maps,
            occlusion,
        })
        .collect();
    total_loss_var(tape, &terms, objective, weights)
}

/// Loss of fixed fields at `images[0]`'s resolution.
fn evaluate(
    images: &[ScaleImages],
    maps: &MapSet<CorrField>,
    occlusion: &[MapSet<OcclusionMap>],
    objective: &Objective,
    weights: &LossWeights,
) -> Result<CycleLossReport> {
    let mut tape = Tape::new();
    let vars = maps.map(|_, c| tape.constant(c.as_field().clone()));
    Ok(report_on_tape(&mut tape, images, vars, occlusion, objective, weights)?.1)
}

fn occlusion_pyramid(
    maps: &MapSet<CorrField>,
    scales: usize,
    params: OcclusionParams,
) -> Result<Vec<MapSet<OcclusionMap>>> {
    map_pyramid(maps, scales)
        .iter()
        .map(|m| estimate_flow_occlusions(m, params))
        .collect()
}

fn run_level(
    images: &[ScaleImages],
    maps: MapSet<CorrField>,
    objective: &Objective,
    weights: &LossWeights,
    config: &OptimizerConfig,
    level: usize,
    history: &mut Vec<HistoryEntry>,
) -> Result<MapSet<CorrField>> {
    let ids: Vec<MapId> = maps.ids().collect();
    let mut bases: Vec<Basis> = ids
        .iter()
        .map(|id| {
            maps.require(*id)
                .map(|c| Basis::new(c, config.multiscale_basis))
        })
        .collect::<Result<_>>()?;
    let mut current = maps;
    let mut adam = Adam::new(config.adam());
    let mut occlusion = occlusion_pyramid(&current, images.len(), config.occlusion)?;

    for it in 0..config.iterations_per_level {
        let iteration = history.len();
        let refreshed = it > 0 && it % config.occlusion_refresh_interval == 0;
        let mut refresh_jump = 0.0;
        if refreshed {
            let before = evaluate(images, &current, &occlusion, objective, weights)?;
            occlusion = occlusion_pyramid(&current, images.len(), config.occlusion)?;
            let after = evaluate(images, &current, &occlusion, objective, weights)?;
            refresh_jump = after.total - before.total;
        }

        let mut tape = Tape::new();
        let mut vars = MapSet::new();
        let mut params = Vec::new();
        for (id, b) in ids.iter().zip(&bases) {
            let (v, p) = b.record(&mut tape)?;
            vars.insert(*id, v);
            params.extend(p);
        }
        let (total, report) =
            report_on_tape(&mut tape, images, vars, &occlusion, objective, weights)?;
        if let Some(term) = report.first_non_finite() {
            return Err(Error::NonFiniteLoss {
                term,
                level,
                iteration,
            });
        }
        history.push(HistoryEntry {
            iteration,
            level,
            rec: report.rec,
            sm: report.sm,
            lr: report.lr,
            two_warp: report.two_warp,
            total: report.total,
            refreshed,
            refresh_jump,
        });

        let grads = tape.backward(total);
        let g: Vec<Field> = params.iter().map(|p| grads.wrt(&tape, *p)).collect();
        let counts: Vec<usize> = bases.iter().map(|b| b.components.len()).collect();
        let mut comps: Vec<Field> = bases
            .iter_mut()
            .flat_map(|b| b.components.drain(..))
            .collect();
        adam.set_step_size(config.step_size_at(it));
        adam.step(&mut comps, &g);
        let mut comps = comps.into_iter();
        for (b, n) in bases.iter_mut().zip(counts) {
            b.components.extend(comps.by_ref().take(n));
        }
        for (id, b) in ids.iter().zip(&bases) {
            current.insert(*id, b.field()?);
        }
    }
    Ok(current)
}
