//! Named configurations for the standard experiments.

use super::config::RawConfig;
use crate::error::{Error, Result};

pub const PRESET_NAMES: &[&str] = &[
    "linear-full",
    "linear-partial",
    "triad-full",
    "triad-partial",
    "l96-sweep",
    "letkf-ne20",
    "letkf-ne6",
];

fn text(name: &str) -> Option<&'static str> {
    Some(match name {
        "linear-full" => {
            "\
model = linear
model.obs = full
filter = kf
estimator = mbl
estimator.lags = 1
estimator.tau = 1000
steps = 10000
"
        }
        "linear-partial" => {
            "\
model = linear
model.obs = partial
filter = kf
estimator = mbl
estimator.lags = 4
estimator.tau = 1000
steps = 50000
"
        }
        "triad-full" => {
            "\
model = triad
model.obs = full
filter = etkf
filter.ensemble = 16
estimator = mbl
estimator.lags = 1
estimator.tau = 100
steps = 20000
"
        }
        "triad-partial" => {
            "\
model = triad
model.obs = partial
filter = etkf
filter.ensemble = 16
estimator = mbl
estimator.lags = 8
estimator.tau = 1000
steps = 20000
"
        }
        // the tr(R)/tr(Q) values are a chosen subset; N covers 1..=6
        "l96-sweep" => {
            "\
model = l96
filter = etkf
filter.ensemble = 50
estimator = mbl
estimator.lags = 1
estimator.tau = 1000
steps = 50000
sweep.model.every = 1, 2, 3, 4, 5, 6
sweep.model.ratio = 0.2, 0.5, 1, 2, 5
"
        }
        "letkf-ne20" => {
            "\
model = l96-deterministic
filter = letkf
filter.ensemble = 20
filter.radius = 5
estimator = mbl
estimator.lags = 1
estimator.tau = 1000
estimator.q0 = 0
estimator.r0 = 0.5
steps = 2000
"
        }
        "letkf-ne6" => {
            "\
model = l96-deterministic
filter = letkf
filter.ensemble = 6
filter.radius = 5
estimator = mbl
estimator.lags = 1
estimator.tau = 1000
estimator.q0 = 0
estimator.r0 = 0.5
steps = 2000
"
        }
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<RawConfig> {
    let body = text(name).ok_or_else(|| {
        Error::InvalidInput(format!(
            "unknown preset `{name}`; available: {}",
            PRESET_NAMES.join(", ")
        ))
    })?;
    RawConfig::parse(body)
}

/// Divides `steps` by `scale`, keeping at least one step.
pub fn apply_scale(raw: &mut RawConfig, scale: usize) -> Result<()> {
    if scale == 0 {
        return Err(Error::InvalidInput("--scale must be at least 1".into()));
    }
    let steps: usize = raw.field("steps", 1000)?;
    raw.set("steps", (steps / scale).max(1));
    Ok(())
}
