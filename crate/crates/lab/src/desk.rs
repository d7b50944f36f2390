//! Scenario presets: the nine pedestrian/car mixes at full size and scaled
//! down for desk runs.

use anyhow::{bail, Context};

use dtnlab_core::mobility::Regime;
use dtnlab_core::scenario::MapSource;
use dtnlab_core::ScenarioSpec;

/// (pedestrians, cars) of the nine full-size mixes.
pub const FULL_MIXES: [(u32, u32); 9] =
    [(50, 50), (50, 60), (60, 50), (60, 60), (70, 70), (70, 80), (80, 80), (80, 90), (90, 80)];

pub const DESK_SCALE: f64 = 0.4;
pub const FULL_DURATION: f64 = 43_200.0;

/// The full mixes scaled by [`DESK_SCALE`], P20_C20 through P36_C32.
pub fn desk_mixes() -> Vec<(u32, u32)> {
    FULL_MIXES
        .iter()
        .map(|&(p, c)| ((f64::from(p) * DESK_SCALE).round() as u32, (f64::from(c) * DESK_SCALE).round() as u32))
        .collect()
}

pub fn mixes(full: bool) -> Vec<(u32, u32)> {
    if full {
        FULL_MIXES.to_vec()
    } else {
        desk_mixes()
    }
}

/// `P20_C20` → (20, 20).
pub fn parse_mix(name: &str) -> anyhow::Result<(u32, u32)> {
    let upper = name.trim().to_ascii_uppercase().replace(' ', "_");
    let Some((p, c)) = upper.strip_prefix('P').and_then(|r| r.split_once("_C")) else {
        bail!("scenario `{name}` is not of the form P<pedestrians>_C<cars>");
    };
    let p = p.parse().with_context(|| format!("pedestrian count in `{name}`"))?;
    let c = c.parse().with_context(|| format!("car count in `{name}`"))?;
    Ok((p, c))
}

/// Default scenario for a mix. Full-size runs last 12 h on a map stretched
/// so node density matches the desk profile.
pub fn scenario(mix: (u32, u32), regime: Regime, full: bool) -> ScenarioSpec {
    let mut spec = ScenarioSpec::default().with_nodes(mix.0, mix.1).with_regime(regime);
    if full {
        spec = spec.with_duration(FULL_DURATION);
        if let MapSource::Grid { spacing, .. } = &mut spec.map.source {
            *spacing /= DESK_SCALE.sqrt();
        }
    }
    spec
}
