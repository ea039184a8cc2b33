//! Flow and depth evaluation.

use crate::error::{Error, Result};
use crate::field::{CorrField, Field, OcclusionMap};

/// A pixel counts toward Fl when its end-point error exceeds both bounds.
pub const FL_ABS_THRESHOLD: f64 = 3.0;
pub const FL_REL_THRESHOLD: f64 = 0.05;

pub const DEPTH_CAP: (f64, f64) = (1e-3, 80.0);

/// Smallest disparity magnitude used when converting to depth.
pub const MIN_DISPARITY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEval {
    pub epe_all: f64,
    pub epe_noc: f64,
    pub epe_occ: f64,
    pub fl_all: f64,
    pub fl_noc: f64,
    pub fl_occ: f64,
    pub count_all: usize,
    pub count_noc: usize,
    pub count_occ: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthEval {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub count: usize,
}

#[derive(Default, Clone, Copy)]
struct Split {
    epe: f64,
    wrong: usize,
    count: usize,
}

impl Split {
    fn add(&mut self, epe: f64, wrong: bool) {
        self.epe += epe;
        self.wrong += wrong as usize;
        self.count += 1;
    }

    fn mean_epe(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.epe / self.count as f64
        }
    }

    fn fl(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.wrong as f64 / self.count as f64
        }
    }
}

fn check_mask(mask: &OcclusionMap, h: usize, w: usize, what: &str) -> Result<()> {
    if mask.height() != h || mask.width() != w {
        return Err(Error::shape(
            "metrics",
            format!("{h}x{w}"),
            format!("{what} {}x{}", mask.height(), mask.width()),
        ));
    }
    Ok(())
}

/// End-point error and Fl outlier rate over `valid` pixels. With a `noc`
/// mask the errors are also split into non-occluded (`valid ∧ noc`) and
/// occluded (`valid ∧ ¬noc`) pixels; without one the occluded split is empty
/// and the noc split equals the full set. Empty splits report 0.
pub fn flow_metrics(
    pred: &CorrField,
    gt: &CorrField,
    valid: &OcclusionMap,
    noc: Option<&OcclusionMap>,
) -> Result<FlowEval> {
    pred.as_field()
        .check_same_shape(gt.as_field(), "flow_metrics")?;
    let (h, w) = (gt.height(), gt.width());
    check_mask(valid, h, w, "valid mask")?;
    if let Some(n) = noc {
        check_mask(n, h, w, "noc mask")?;
    }
    let (mut all, mut noc_split, mut occ_split) =
        (Split::default(), Split::default(), Split::default());
    for y in 0..h {
        for x in 0..w {
            if !valid.is_visible(y, x) {
                continue;
            }
            let (pu, pv) = pred.at(y, x);
            let (gu, gv) = gt.at(y, x);
            let epe = (pu - gu).hypot(pv - gv);
            let mag = gu.hypot(gv);
            let wrong = epe > FL_ABS_THRESHOLD && epe > FL_REL_THRESHOLD * mag;
            all.add(epe, wrong);
            if noc.is_none_or(|n| n.is_visible(y, x)) {
                noc_split.add(epe, wrong);
            } else {
                occ_split.add(epe, wrong);
            }
        }
    }
    if all.count == 0 {
        return Err(Error::EmptyEval);
    }
    Ok(FlowEval {
        epe_all: all.mean_epe(),
        epe_noc: noc_split.mean_epe(),
        epe_occ: occ_split.mean_epe(),
        fl_all: all.fl(),
        fl_noc: noc_split.fl(),
        fl_occ: occ_split.fl(),
        count_all: all.count,
        count_noc: noc_split.count,
        count_occ: occ_split.count,
    })
}

/// Evaluation rectangle in pixels, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Crop {
    pub fn full(height: usize, width: usize) -> Self {
        Crop {
            top: 0,
            bottom: height,
            left: 0,
            right: width,
        }
    }

    /// The crop of Garg et al. used for KITTI depth evaluation.
    pub fn garg(height: usize, width: usize) -> Self {
        let (h, w) = (height as f64, width as f64);
        Crop {
            top: (0.40810811 * h) as usize,
            bottom: (0.99189189 * h) as usize,
            left: (0.03594771 * w) as usize,
            right: (0.96405229 * w) as usize,
        }
    }

    fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.top && y < self.bottom && x >= self.left && x < self.right
    }
}

/// `fb / max(|u|, ε)` per pixel.
pub fn disparity_to_depth(disparity: &CorrField, fb: f64) -> Result<Field> {
    if !(fb.is_finite() && fb > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "fb must be positive, got {fb}"
        )));
    }
    let u = disparity.u();
    let data = u.iter().map(|d| fb / d.abs().max(MIN_DISPARITY)).collect();
    Field::from_vec(disparity.height(), disparity.width(), 1, data)
}

/// Standard monocular-depth error metrics of the depth implied by
/// `pred_disp`'s horizontal channel against `gt_depth`. Pixels with
/// non-positive or non-finite ground truth, or outside `crop`, are ignored.
/// Both depths are clamped to [`DEPTH_CAP`] first.
pub fn depth_metrics(
    pred_disp: &CorrField,
    gt_depth: &Field,
    fb: f64,
    crop: Option<Crop>,
) -> Result<DepthEval> {
    if gt_depth.channels() != 1 {
        return Err(Error::InvalidField(format!(
            "ground-truth depth must have 1 channel, got {}",
            gt_depth.channels()
        )));
    }
    pred_disp
        .as_field()
        .check_same_extent(gt_depth, "depth_metrics")?;
    let pred = disparity_to_depth(pred_disp, fb)?;
    let (h, w) = (gt_depth.height(), gt_depth.width());
    let crop = crop.unwrap_or(Crop::full(h, w));
    let (lo, hi) = DEPTH_CAP;
    let mut acc = [0.0f64; 7];
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            let g = gt_depth.get(0, y, x);
            if !(g.is_finite() && g > 0.0) || !crop.contains(y, x) {
                continue;
            }
            let g = g.clamp(lo, hi);
            let p = pred.get(0, y, x).clamp(lo, hi);
            let diff = p - g;
            acc[0] += diff.abs() / g;
            acc[1] += diff * diff / g;
            acc[2] += diff * diff;
            acc[3] += (p.ln() - g.ln()).powi(2);
            let ratio = (p / g).max(g / p);
            acc[4] += (ratio < 1.25) as u8 as f64;
            acc[5] += (ratio < 1.25f64.powi(2)) as u8 as f64;
            acc[6] += (ratio < 1.25f64.powi(3)) as u8 as f64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyEval);
    }
    let nf = n as f64;
    Ok(DepthEval {
        abs_rel: acc[0] / nf,
        sq_rel: acc[1] / nf,
        rmse: (acc[2] / nf).sqrt(),
        rmse_log: (acc[3] / nf).sqrt(),
        delta1: acc[4] / nf,
        delta2: acc[5] / nf,
        delta3: acc[6] / nf,
        count: n,
    })
}

/// Mean `|v|` of a stereo field; ideal rectified stereo has none.
pub fn stereo_vertical_diagnostic(d: &CorrField) -> f64 {
    let v = d.v();
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}
