//! `key = value` configuration files with `#` comments.
//!
//! One file configures the loss weights and optimizer together; scene
//! descriptions for the generator use the same syntax with their own keys.
//! Scalar keys may appear once; `sprite` may repeat.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use super::read_bytes;
use crate::error::{Error, Result};
use crate::loss::{FieldUnits, LossWeights, OcclusionCarrier, TwoWarpVariant};
use crate::optimize::OptimizerConfig;
use crate::synth::{SceneSpec, Shape, Sprite};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    entries: Vec<Entry>,
}

const REPEATABLE: &[&str] = &["sprite"];

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(Error::Config {
                    line,
                    message: "empty key".into(),
                });
            }
            if !REPEATABLE.contains(&key) && !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
            entries.push(Entry {
                line,
                key: key.to_string(),
                value: value.to_string(),
            });
        }
        Ok(ConfigFile { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Malformed(format!("{} is not UTF-8", path.display())))?;
        Self::parse(&text)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Loss weights and optimizer settings; unset keys keep their defaults.
    pub fn optimization(&self) -> Result<(LossWeights, OptimizerConfig)> {
        let mut w = LossWeights::default();
        let mut c = OptimizerConfig::default();
        for e in &self.entries {
            match e.key.as_str() {
                "alpha" => w.alpha = value(e)?,
                "beta" => w.beta = value(e)?,
                "lambda_sm" => w.lambda_sm = value(e)?,
                "lambda_lr" => w.lambda_lr = value(e)?,
                "lambda_2warp" => w.lambda_2warp = value(e)?,
                "ssim_c1" => w.ssim_c1 = value(e)?,
                "ssim_c2" => w.ssim_c2 = value(e)?,
                "ssim_window" => w.ssim_window = value(e)?,
                "regularizer_units" => w.regularizer_units = wrap(e, FieldUnits::parse(&e.value))?,
                "pyramid_levels" => c.pyramid_levels = value(e)?,
                "iterations_per_level" => c.iterations_per_level = value(e)?,
                "loss_scales" => c.loss_scales = value(e)?,
                "step_size" => c.step_size = value(e)?,
                "adam_beta1" => c.adam_beta1 = value(e)?,
                "adam_beta2" => c.adam_beta2 = value(e)?,
                "adam_eps" => c.adam_eps = value(e)?,
                "occlusion_refresh_interval" => c.occlusion_refresh_interval = value(e)?,
                "final_step_fraction" => c.final_step_fraction = value(e)?,
                "warmup_iterations" => c.warmup_iterations = value(e)?,
                "alpha1" => c.occlusion.alpha1 = value(e)?,
                "alpha2" => c.occlusion.alpha2 = value(e)?,
                "two_warp_variant" => {
                    c.two_warp_variant = match e.value.as_str() {
                        "none" | "0" => None,
                        _ => Some(wrap(e, TwoWarpVariant::from_id(value(e)?))?),
                    }
                }
                "occlusion_carrier" => c.carrier = wrap(e, OcclusionCarrier::parse(&e.value))?,
                "seed" => c.seed = value(e)?,
                "multiscale_basis" => c.multiscale_basis = value(e)?,
                "init_noise" => c.init_noise = value(e)?,
                other => return Err(unknown(e, other)),
            }
        }
        w.validate()?;
        c.validate()?;
        Ok((w, c))
    }

    /// Scene description. Sprites are given as
    /// `sprite = <rect|ellipse> cx cy rx ry depth vx vy brightness`.
    pub fn scene(&self) -> Result<SceneSpec> {
        let mut s = SceneSpec::default();
        for e in &self.entries {
            match e.key.as_str() {
                "height" => s.height = value(e)?,
                "width" => s.width = value(e)?,
                "channels" => s.channels = value(e)?,
                "background_depth" => s.background_depth = value(e)?,
                "background_velocity" => s.background_velocity = pair(e)?,
                "background_brightness" => s.background_brightness = value(e)?,
                "fb" => s.fb = value(e)?,
                "texture_amplitude" => s.texture_amplitude = value(e)?,
                "texture_components" => s.texture_components = value(e)?,
                "wavelength" => s.wavelength = pair(e)?,
                "seed" => s.seed = value(e)?,
                "sprite" => s.sprites.push(sprite(e)?),
                other => return Err(unknown(e, other)),
            }
        }
        s.validate()?;
        Ok(s)
    }
}

fn unknown(e: &Entry, key: &str) -> Error {
    Error::Config {
        line: e.line,
        message: format!("unknown key `{key}`"),
    }
}

fn wrap<T>(e: &Entry, r: Result<T>) -> Result<T> {
    r.map_err(|err| Error::Config {
        line: e.line,
        message: err.to_string(),
    })
}

fn parse_token<T: FromStr>(e: &Entry, token: &str) -> Result<T> {
    token.parse().map_err(|_| Error::Config {
        line: e.line,
        message: format!("invalid value `{token}` for `{}`", e.key),
    })
}

fn value<T: FromStr>(e: &Entry) -> Result<T> {
    parse_token(e, &e.value)
}

fn numbers(e: &Entry, count: usize) -> Result<Vec<f64>> {
    let tokens: Vec<&str> = e.value.split_whitespace().collect();
    if tokens.len() != count {
        return Err(Error::Config {
            line: e.line,
            message: format!("`{}` expects {count} numbers, got {}", e.key, tokens.len()),
        });
    }
    tokens.iter().map(|t| parse_token(e, t)).collect()
}

fn pair(e: &Entry) -> Result<(f64, f64)> {
    let n = numbers(e, 2)?;
    Ok((n[0], n[1]))
}

fn sprite(e: &Entry) -> Result<Sprite> {
    let (shape, rest) = e
        .value
        .split_once(char::is_whitespace)
        .unwrap_or((&e.value, ""));
    let shape = match shape {
        "rect" => Shape::Rect,
        "ellipse" => Shape::Ellipse,
        other => {
            return Err(Error::Config {
                line: e.line,
                message: format!("unknown sprite shape `{other}`"),
            })
        }
    };
    let rest = Entry {
        value: rest.to_string(),
        ..e.clone()
    };
    let n = numbers(&rest, 8)?;
    Ok(Sprite {
        shape,
        center: (n[0], n[1]),
        radius: (n[2], n[3]),
        depth: n[4],
        velocity: (n[5], n[6]),
        brightness: n[7],
    })
}
