//! TOML model files.
//!
//! ```toml
//! [levels]
//! zpl_wavelength = "638 nm"
//! pl_lifetime = "11.6 ns"
//! ground_offsets = ["0 meV", "65 meV"]
//! branching = [0.7, 0.3]
//! phonon_rates = ["1 THz"]
//!
//! [cavity]
//! q = 36500
//! volume = "1 lambda^3"
//! refractive_index = 2.4
//!
//! [coupling]
//! resonant_kappa_ratio = 2.5
//!
//! [pump]
//! r0 = "1e13 Hz"
//! width = "0.56 ps"
//!
//! [truncation]
//! cavity = 1
//! waveguide = 1
//! ```
//!
//! Other top-level tables are ignored here so that experiment settings can
//! share the file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    coupling_from_dipole, kappa_from_q, CavityConfig, CouplingConvention, CouplingSpec,
    NVLevelScheme, PumpPulse, SystemModel, Truncation,
};
use crate::error::{Error, Result};
use crate::units::{parse_quantity, split_quantity, Dimension};

#[derive(Debug, Clone, Deserialize)]
struct ModelFile {
    levels: LevelsSection,
    cavity: CavitySection,
    coupling: CouplingSection,
    #[serde(default)]
    pump: Option<PumpSection>,
    truncation: TruncationSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelsSection {
    zpl_wavelength: String,
    #[serde(default = "default_lifetime")]
    pl_lifetime: String,
    #[serde(default)]
    ground_offsets: Option<Vec<String>>,
    #[serde(default)]
    branching: Option<Vec<f64>>,
    #[serde(default)]
    phonon_rates: Vec<String>,
    /// Marks a branching table as illustrative rather than measured.
    #[serde(default)]
    illustrative: bool,
}

fn default_lifetime() -> String {
    "11.6 ns".into()
}

/// Which wavelength the `lambda^3` volume shorthand refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeWavelength {
    #[default]
    FreeSpace,
    Medium,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CavitySection {
    #[serde(default)]
    wavelength: Option<String>,
    q: f64,
    volume: String,
    #[serde(default)]
    volume_wavelength: VolumeWavelength,
    #[serde(default = "default_index")]
    refractive_index: f64,
    #[serde(default)]
    resonant_transition: usize,
}

fn default_index() -> f64 {
    2.4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingSection {
    #[serde(default)]
    convention: CouplingConvention,
    #[serde(default)]
    resonant_kappa_ratio: Option<f64>,
    #[serde(default)]
    omegas: Option<Vec<String>>,
    #[serde(default)]
    dipoles: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PumpSection {
    r0: String,
    width: String,
    #[serde(default)]
    start: Option<String>,
    #[serde(default)]
    rep_rate: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruncationSection {
    cavity: usize,
    #[serde(default)]
    waveguide: usize,
    #[serde(default)]
    ground_levels: Option<Vec<usize>>,
}

/// A parsed model plus the facts about the file that are not part of the physics.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: SystemModel,
    pub illustrative_branching: bool,
    /// True when the file gave an explicit branching table.
    pub has_branching: bool,
    pub volume_wavelength: VolumeWavelength,
}

pub fn parse_model(text: &str) -> Result<LoadedModel> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    build(file)
}

pub fn load_model(path: &std::path::Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

fn quantities(list: &[String], dim: Dimension) -> Result<Vec<f64>> {
    list.iter().map(|s| parse_quantity(s, dim)).collect()
}

fn build(file: ModelFile) -> Result<LoadedModel> {
    let lv = &file.levels;
    let zpl = parse_quantity(&lv.zpl_wavelength, Dimension::Length)?;
    let lifetime = parse_quantity(&lv.pl_lifetime, Dimension::Time)?;
    let offsets = match &lv.ground_offsets {
        Some(list) => quantities(list, Dimension::AngularFrequency)?,
        None => vec![0.0],
    };
    let has_branching = lv.branching.is_some();
    let branching = match &lv.branching {
        Some(b) => b.clone(),
        None if offsets.len() == 1 => vec![1.0],
        None => {
            return Err(Error::Config(format!(
                "[levels] lists {} ground sublevels but no `branching` table; \
                 radiative branching weights are required for multi-level schemes",
                offsets.len()
            )))
        }
    };
    let phonon = quantities(&lv.phonon_rates, Dimension::Rate)?;
    let scheme = NVLevelScheme::from_branching(zpl, &offsets, &branching, &phonon, lifetime)?;

    let cs = &file.cavity;
    let resonant = cs.resonant_transition;
    if resonant >= scheme.n_ground() {
        return Err(Error::invalid(
            "resonant_transition",
            "no such ground sublevel",
        ));
    }
    let wavelength = match &cs.wavelength {
        Some(w) => parse_quantity(w, Dimension::Length)?,
        None => {
            2.0 * std::f64::consts::PI * crate::units::SPEED_OF_LIGHT
                / scheme.transition_frequency(resonant)
        }
    };
    let volume = parse_volume(
        &cs.volume,
        wavelength,
        cs.refractive_index,
        cs.volume_wavelength,
    )?;
    let cavity = CavityConfig {
        wavelength,
        q: cs.q,
        volume,
        refractive_index: cs.refractive_index,
        resonant_transition: resonant,
    };

    let cp = &file.coupling;
    let n = scheme.n_ground();
    let given = [
        cp.omegas.is_some(),
        cp.dipoles.is_some(),
        cp.resonant_kappa_ratio.is_some(),
    ]
    .iter()
    .filter(|b| **b)
    .count();
    if given != 1 {
        return Err(Error::Config(
            "[coupling] needs exactly one of `omegas`, `dipoles`, `resonant_kappa_ratio`".into(),
        ));
    }
    let omegas = if let Some(list) = &cp.omegas {
        quantities(list, Dimension::AngularFrequency)?
    } else if let Some(list) = &cp.dipoles {
        quantities(list, Dimension::DipoleMoment)?
            .into_iter()
            .map(|d| coupling_from_dipole(d, &cavity))
            .collect::<Result<_>>()?
    } else {
        let ratio = cp.resonant_kappa_ratio.unwrap_or_default();
        if !(ratio > 0.0) {
            return Err(Error::invalid("resonant_kappa_ratio", "must be positive"));
        }
        // dipoles scale as the square root of the radiative rate
        let w_res = kappa_from_q(&cavity)? / ratio;
        let rates = &scheme.radiative_rates;
        if rates[resonant] <= 0.0 {
            return Err(Error::invalid(
                "resonant_kappa_ratio",
                "the resonant transition has zero radiative rate",
            ));
        }
        rates
            .iter()
            .map(|g| w_res * (g / rates[resonant]).sqrt())
            .collect()
    };
    if omegas.len() != n {
        return Err(Error::invalid(
            "omegas",
            format!("{} couplings given for {n} ground sublevels", omegas.len()),
        ));
    }
    let coupling = CouplingSpec {
        omegas,
        convention: cp.convention,
    };

    let pump = match &file.pump {
        Some(p) => {
            let rep_period = match &p.rep_rate {
                Some(r) => {
                    let rate = parse_quantity(r, Dimension::Rate)?;
                    if !(rate > 0.0) {
                        return Err(Error::invalid("rep_rate", "must be positive"));
                    }
                    Some(1.0 / rate)
                }
                None => None,
            };
            PumpPulse {
                r0: parse_quantity(&p.r0, Dimension::Rate)?,
                width: parse_quantity(&p.width, Dimension::Time)?,
                t_start: match &p.start {
                    Some(s) => parse_quantity(s, Dimension::Time)?,
                    None => 0.0,
                },
                rep_period,
            }
        }
        None => PumpPulse::off(),
    };

    let tr = &file.truncation;
    let truncation = Truncation {
        n_cavity: tr.cavity,
        n_waveguide: tr.waveguide,
        ground_levels: tr.ground_levels.clone(),
    };

    let model = SystemModel::new(scheme, cavity, coupling, pump, truncation)?;
    Ok(LoadedModel {
        model,
        illustrative_branching: lv.illustrative,
        has_branching,
        volume_wavelength: cs.volume_wavelength,
    })
}

/// `"<x> lambda^3"` in units of the cavity wavelength cubed, otherwise an
/// absolute volume.
fn parse_volume(
    text: &str,
    wavelength: f64,
    index: f64,
    convention: VolumeWavelength,
) -> Result<f64> {
    let (value, unit) = split_quantity(text)?;
    if unit == "lambda^3" {
        let lambda = match convention {
            VolumeWavelength::FreeSpace => wavelength,
            VolumeWavelength::Medium => wavelength / index,
        };
        Ok(value * lambda.powi(3))
    } else {
        parse_quantity(text, Dimension::Volume)
    }
}

/// SHA-256 over the canonical JSON encoding of the resolved model.
pub fn model_hash(model: &SystemModel) -> String {
    let json = serde_json::to_vec(model).expect("model serialises");
    hex::encode(Sha256::digest(&json))
}

#[cfg(test)]
mod tests {
    use super::super::presets;
    use super::*;
    use approx::assert_relative_eq;

    const TWO_LEVEL: &str = r#"
[levels]
zpl_wavelength = "638 nm"
pl_lifetime = "11.6 ns"

[cavity]
q = 36500
volume = "1 lambda^3"
refractive_index = 2.4

[coupling]
resonant_kappa_ratio = 2.5

[pump]
r0 = "1e13 Hz"
width = "0.56 ps"

[truncation]
cavity = 1
waveguide = 1

[sweep]
anything = "ignored here"
"#;

    #[test]
    fn two_level_file_matches_preset() {
        let loaded = parse_model(TWO_LEVEL).unwrap();
        let preset = presets::two_level(1, 1);
        let m = &loaded.model;
        assert_relative_eq!(
            m.cavity.wavelength,
            preset.cavity.wavelength,
            max_relative = 1e-12
        );
        assert_relative_eq!(m.cavity.volume, preset.cavity.volume, max_relative = 1e-12);
        assert_relative_eq!(
            m.coupling.omegas[0],
            preset.coupling.omegas[0],
            max_relative = 1e-12
        );
        assert_relative_eq!(
            m.scheme.radiative_rates[0],
            1.0 / 11.6e-9,
            max_relative = 1e-12
        );
        assert_eq!(m.pump.r0, 1e13);
        assert_relative_eq!(m.pump.width, 0.56e-12, max_relative = 1e-12);
        assert_eq!(m.space().total_dim(), 8);
        assert!(!loaded.has_branching);
    }

    #[test]
    fn missing_unit_is_an_error() {
        let text = TWO_LEVEL.replace("\"0.56 ps\"", "\"0.56\"");
        let err = parse_model(&text).unwrap_err();
        assert!(matches!(err, Error::Unit { .. }));
        assert!(err.is_config_error());
    }

    #[test]
    fn multilevel_without_branching_is_rejected() {
        let text = TWO_LEVEL.replace(
            "pl_lifetime = \"11.6 ns\"",
            "pl_lifetime = \"11.6 ns\"\nground_offsets = [\"0 meV\", \"65 meV\"]\nphonon_rates = [\"1 THz\"]",
        );
        let err = parse_model(&text).unwrap_err();
        assert!(err.to_string().contains("branching"));
    }

    #[test]
    fn medium_volume_convention() {
        let text = TWO_LEVEL.replace(
            "volume = \"1 lambda^3\"",
            "volume = \"1 lambda^3\"\nvolume_wavelength = \"medium\"",
        );
        let loaded = parse_model(&text).unwrap();
        assert_relative_eq!(
            loaded.model.cavity.volume,
            (638e-9f64 / 2.4).powi(3),
            max_relative = 1e-12
        );
        assert_eq!(loaded.volume_wavelength, VolumeWavelength::Medium);
    }

    #[test]
    fn rep_rate_sets_period() {
        let text = TWO_LEVEL.replace(
            "width = \"0.56 ps\"",
            "width = \"0.56 ps\"\nrep_rate = \"1 GHz\"",
        );
        let loaded = parse_model(&text).unwrap();
        assert_relative_eq!(
            loaded.model.pump.rep_period.unwrap(),
            1e-9,
            max_relative = 1e-12
        );
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = TWO_LEVEL.replace("q = 36500", "q = 36500\nqq = 1");
        assert!(matches!(parse_model(&text), Err(Error::Config(_))));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse_model(TWO_LEVEL).unwrap().model;
        let b = parse_model(TWO_LEVEL).unwrap().model;
        assert_eq!(model_hash(&a), model_hash(&b));
        assert_eq!(model_hash(&a).len(), 64);
        let c = a.clone().with_pump(PumpPulse::single(2e13, 0.56e-12));
        assert_ne!(model_hash(&a), model_hash(&c));
    }
}
