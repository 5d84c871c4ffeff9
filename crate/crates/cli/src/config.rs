//! Toolkit configuration: a strict, versioned JSON document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use qfc_core::conversion::{Component, ComponentChain, WaveguideSpec};
use qfc_core::link::{surrogate_converter, FiberSpec, LinkModel, SourceSpec};
use qfc_core::noise::{wavelength_width_to_hz, DetectorSpec, FilterSpec, PhysicalConstants};

pub const SCHEMA_VERSION: u32 = 1;
pub const CONFIG_ENV: &str = "QFC_CONFIG";

/// The configuration shipped with the tool.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.json");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {origin}: {path}: {message}")]
    Schema { origin: String, path: String, message: String },
    #[error("config {origin}: {path}: {message}")]
    Invalid { origin: String, path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wavelengths {
    pub signal_nm: f64,
    pub pump_nm: f64,
    pub target_nm: f64,
}

/// A filter element; the width is given either in Hz or in pm at the
/// target wavelength.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterEntry {
    pub label: String,
    #[serde(default)]
    pub bandwidth_hz: Option<f64>,
    #[serde(default)]
    pub bandwidth_pm: Option<f64>,
    pub transmission: f64,
    pub extinction: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSettings {
    /// Noise photon rate inside the reference filter at the reference temperature, Hz.
    pub reference_npr_hz: f64,
    pub reference_filter: String,
    pub reference_temp_c: f64,
    pub cooled_temp_c: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSettings {
    pub conversion_efficiency: f64,
    pub photon_noise_rate_hz: f64,
    /// Identity weight of the background-free converter channel.
    pub converter_fidelity: f64,
    /// Fiber length at which the surrogate converter is calibrated to lose entanglement, km.
    pub calibration_anchor_km: f64,
    /// Attenuation of the unconverted wavelength in fiber, dB/km.
    pub signal_attenuation_db_per_km: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySettings {
    pub signal_rate_hz: f64,
    pub signal_to_background: f64,
    pub duration_per_setting_s: f64,
    pub rng_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolkitConfig {
    pub schema_version: u32,
    pub wavelengths: Wavelengths,
    pub waveguides: BTreeMap<String, WaveguideSpec>,
    pub passive_losses: BTreeMap<String, ComponentChain>,
    pub filters: BTreeMap<String, Vec<FilterEntry>>,
    pub detector: DetectorSpec,
    pub fiber: FiberSpec,
    pub source: SourceSpec,
    pub noise: NoiseSettings,
    pub link: LinkSettings,
    pub tomography: TomographySettings,
    #[serde(default)]
    pub constants: Option<PhysicalConstants>,
}

impl ToolkitConfig {
    pub fn bundled() -> Self {
        parse_config(DEFAULT_CONFIG, "<bundled>").expect("bundled config is valid")
    }

    pub fn constants(&self) -> PhysicalConstants {
        self.constants.unwrap_or_default()
    }

    pub fn waveguide(&self, name: &str) -> Option<&WaveguideSpec> {
        self.waveguides.get(name)
    }

    /// Filter stack resolved to Hz bandwidths.
    pub fn filter_stack(&self, name: &str) -> Option<Vec<FilterSpec>> {
        let target = self.wavelengths.target_nm;
        self.filters.get(name).map(|stack| {
            stack
                .iter()
                .map(|f| FilterSpec {
                    bandwidth_hz: resolve_bandwidth(f, target),
                    transmission: f.transmission,
                    extinction: f.extinction,
                })
                .collect()
        })
    }

    /// Narrowest bandwidth of a stack, Hz.
    pub fn stack_bandwidth_hz(&self, name: &str) -> Option<f64> {
        self.filter_stack(name)
            .map(|s| s.iter().map(|f| f.bandwidth_hz).fold(f64::INFINITY, f64::min))
    }

    /// Link model with the surrogate converter at the configured fidelity.
    pub fn link_model(&self) -> LinkModel {
        LinkModel {
            source: self.source,
            conversion_efficiency: self.link.conversion_efficiency,
            converter: surrogate_converter(self.link.converter_fidelity).expect("validated at load"),
            photon_noise_rate_hz: self.link.photon_noise_rate_hz,
            fiber: self.fiber,
            detector: self.detector,
        }
    }

    fn validate(&self) -> Result<(), (String, String)> {
        let fail = |path: String, msg: String| Err((path, msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(
                "schema_version".into(),
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version),
            );
        }
        let positive = |path: &str, v: f64| -> Result<(), (String, String)> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err((path.to_string(), format!("must be positive, got {v}")))
            }
        };
        let unit = |path: &str, v: f64, open_zero: bool| -> Result<(), (String, String)> {
            let ok = if open_zero { v > 0.0 && v <= 1.0 } else { (0.0..=1.0).contains(&v) };
            if ok {
                Ok(())
            } else {
                let range = if open_zero { "(0, 1]" } else { "[0, 1]" };
                Err((path.to_string(), format!("must be in {range}, got {v}")))
            }
        };

        let w = &self.wavelengths;
        positive("wavelengths.signal_nm", w.signal_nm)?;
        positive("wavelengths.target_nm", w.target_nm)?;
        if !(w.pump_nm > w.signal_nm) {
            return fail("wavelengths.pump_nm".into(), "must exceed the signal wavelength".into());
        }
        if !(w.pump_nm > w.target_nm) {
            return fail("wavelengths.pump_nm".into(), "must exceed the target wavelength".into());
        }

        for (name, wg) in &self.waveguides {
            let p = |f: &str| format!("waveguides.{name}.{f}");
            positive(&p("length_cm"), wg.length_cm)?;
            positive(&p("eta_nor_per_w_cm2"), wg.eta_nor_per_w_cm2)?;
            if !(wg.amplitude >= 0.0) {
                return fail(p("amplitude"), format!("must be non-negative, got {}", wg.amplitude));
            }
            positive(&p("temp_fwhm_c"), wg.temp_fwhm_c)?;
            positive(&p("spectral_acceptance_nm"), wg.spectral_acceptance_nm)?;
        }
        for (name, chain) in &self.passive_losses {
            for (i, Component { transmission, .. }) in chain.components.iter().enumerate() {
                unit(&format!("passive_losses.{name}[{i}].transmission"), *transmission, true)?;
            }
        }
        for (name, stack) in &self.filters {
            if stack.is_empty() {
                return fail(format!("filters.{name}"), "filter stack is empty".into());
            }
            for (i, f) in stack.iter().enumerate() {
                let p = |field: &str| format!("filters.{name}[{i}].{field}");
                match (f.bandwidth_hz, f.bandwidth_pm) {
                    (Some(v), None) => positive(&p("bandwidth_hz"), v)?,
                    (None, Some(v)) => positive(&p("bandwidth_pm"), v)?,
                    _ => {
                        return fail(
                            format!("filters.{name}[{i}]"),
                            "exactly one of bandwidth_hz and bandwidth_pm is required".into(),
                        )
                    }
                }
                unit(&p("transmission"), f.transmission, true)?;
                if !(f.extinction >= 1.0) {
                    return fail(p("extinction"), format!("must be at least 1, got {}", f.extinction));
                }
            }
        }
        unit("detector.efficiency", self.detector.efficiency, true)?;
        if !(self.detector.dark_rate_hz >= 0.0) {
            return fail("detector.dark_rate_hz".into(), "must be non-negative".into());
        }
        if !(self.detector.dead_time_s >= 0.0) {
            return fail("detector.dead_time_s".into(), "must be non-negative".into());
        }
        positive("fiber.attenuation_db_per_km", self.fiber.attenuation_db_per_km)?;
        positive("fiber.propagation_delay_us_per_km", self.fiber.propagation_delay_us_per_km)?;
        positive("source.attempt_rate_hz", self.source.attempt_rate_hz)?;
        positive("source.wavepacket_duration_us", self.source.wavepacket_duration_us)?;
        unit("source.duty_cycle", self.source.duty_cycle, true)?;

        positive("noise.reference_npr_hz", self.noise.reference_npr_hz)?;
        if !self.filters.contains_key(&self.noise.reference_filter) {
            return fail(
                "noise.reference_filter".into(),
                format!("unknown filter stack \"{}\"", self.noise.reference_filter),
            );
        }
        for (path, t) in [
            ("noise.reference_temp_c", self.noise.reference_temp_c),
            ("noise.cooled_temp_c", self.noise.cooled_temp_c),
        ] {
            if !(t > -273.15) {
                return fail(path.into(), format!("below absolute zero: {t}"));
            }
        }

        unit("link.conversion_efficiency", self.link.conversion_efficiency, false)?;
        if !(self.link.photon_noise_rate_hz >= 0.0) {
            return fail("link.photon_noise_rate_hz".into(), "must be non-negative".into());
        }
        if !(0.25..=1.0).contains(&self.link.converter_fidelity) {
            return fail(
                "link.converter_fidelity".into(),
                format!("must be in [0.25, 1], got {}", self.link.converter_fidelity),
            );
        }
        positive("link.calibration_anchor_km", self.link.calibration_anchor_km)?;
        if !(self.link.signal_attenuation_db_per_km > self.fiber.attenuation_db_per_km) {
            return fail(
                "link.signal_attenuation_db_per_km".into(),
                "must exceed fiber.attenuation_db_per_km".into(),
            );
        }

        if !(self.tomography.signal_rate_hz >= 0.0) {
            return fail("tomography.signal_rate_hz".into(), "must be non-negative".into());
        }
        positive("tomography.signal_to_background", self.tomography.signal_to_background)?;
        positive("tomography.duration_per_setting_s", self.tomography.duration_per_setting_s)?;

        if let Some(c) = &self.constants {
            positive("constants.h", c.h)?;
            positive("constants.k_b", c.k_b)?;
            positive("constants.c", c.c)?;
        }
        Ok(())
    }
}

fn resolve_bandwidth(f: &FilterEntry, target_nm: f64) -> f64 {
    match (f.bandwidth_hz, f.bandwidth_pm) {
        (Some(hz), _) => hz,
        (None, Some(pm)) => wavelength_width_to_hz(pm * 1e-3, target_nm),
        (None, None) => f64::NAN,
    }
}

/// Parses and validates a configuration document. `origin` names the source
/// in error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<ToolkitConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ToolkitConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Schema {
            origin: origin.to_string(),
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    cfg.validate().map_err(|(path, message)| ConfigError::Invalid {
        origin: origin.to_string(),
        path,
        message,
    })?;
    Ok(cfg)
}

/// Loads the configuration: an explicit path, else `QFC_CONFIG`, else the
/// bundled default.
pub fn load_config(explicit: Option<&Path>) -> Result<ToolkitConfig, ConfigError> {
    let path = explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    match path {
        None => parse_config(DEFAULT_CONFIG, "<bundled>"),
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
            parse_config(&text, &p.display().to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_loads() {
        let cfg = ToolkitConfig::bundled();
        assert_eq!(cfg.detector.dark_rate_hz, 1.8);
        assert_eq!(cfg.schema_version, SCHEMA_VERSION);
        assert!(cfg.filter_stack(&cfg.noise.reference_filter).is_some());
    }

    #[test]
    fn out_of_range_transmission_names_the_field() {
        let text = DEFAULT_CONFIG.replacen("\"transmission\": 0.63", "\"transmission\": 1.2", 1);
        assert_ne!(text, DEFAULT_CONFIG);
        let err = parse_config(&text, "t").unwrap_err().to_string();
        assert!(err.contains("filters.") && err.contains("transmission"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let text = DEFAULT_CONFIG.replacen("\"dark_rate_hz\"", "\"dark_rate\": 1.0, \"dark_rate_hz\"", 1);
        let err = parse_config(&text, "t").unwrap_err().to_string();
        assert!(err.contains("detector") && err.contains("dark_rate"), "{err}");
    }

    #[test]
    fn empty_document_is_a_parse_error() {
        assert!(matches!(parse_config("", "t"), Err(ConfigError::Schema { .. })));
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let text = DEFAULT_CONFIG.replacen("\"schema_version\": 1", "\"schema_version\": 7", 1);
        let err = parse_config(&text, "t").unwrap_err().to_string();
        assert!(err.contains("schema_version"), "{err}");
    }
}
