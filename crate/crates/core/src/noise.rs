//! Pump-induced noise, filtering and detection.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const ZERO_CELSIUS_K: f64 = 273.15;

pub fn celsius_to_kelvin(t_c: f64) -> f64 {
    t_c + ZERO_CELSIUS_K
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    /// Planck constant, J·s.
    pub h: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Speed of light in vacuum, m/s.
    pub c: f64,
}

impl PhysicalConstants {
    pub const CODATA: Self = Self {
        h: 6.626_070_15e-34,
        k_b: 1.380_649e-23,
        c: 299_792_458.0,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA
    }
}

/// Anti-Stokes Raman noise following the phonon occupation,
/// NPR(T) = A·exp(−hΔν / (k_B·T)).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RamanNoiseModel {
    pub amplitude_hz: f64,
    pub lambda_pump_nm: f64,
    pub lambda_target_nm: f64,
    pub constants: PhysicalConstants,
}

impl RamanNoiseModel {
    pub fn new(amplitude_hz: f64, lambda_pump_nm: f64, lambda_target_nm: f64) -> Result<Self> {
        Self::with_constants(amplitude_hz, lambda_pump_nm, lambda_target_nm, PhysicalConstants::CODATA)
    }

    pub fn with_constants(
        amplitude_hz: f64,
        lambda_pump_nm: f64,
        lambda_target_nm: f64,
        constants: PhysicalConstants,
    ) -> Result<Self> {
        if !(amplitude_hz >= 0.0) {
            return Err(domain(format!("noise amplitude must be non-negative, got {amplitude_hz}")));
        }
        if !(lambda_target_nm > 0.0) || !(lambda_pump_nm > lambda_target_nm) {
            return Err(domain(format!(
                "pump wavelength ({lambda_pump_nm} nm) must exceed target wavelength ({lambda_target_nm} nm)"
            )));
        }
        Ok(Self { amplitude_hz, lambda_pump_nm, lambda_target_nm, constants })
    }

    /// Pump–target frequency difference Δν, Hz.
    pub fn frequency_offset_hz(&self) -> f64 {
        self.constants.c * (1.0 / (self.lambda_target_nm * 1e-9) - 1.0 / (self.lambda_pump_nm * 1e-9))
    }

    /// hΔν/k_B, K.
    pub fn temperature_scale_k(&self) -> f64 {
        self.constants.h * self.frequency_offset_hz() / self.constants.k_b
    }

    pub fn npr_at_temperature(&self, temp_k: f64) -> Result<f64> {
        if !(temp_k > 0.0) {
            return Err(domain(format!("temperature must be positive in kelvin, got {temp_k}")));
        }
        Ok(self.amplitude_hz * (-self.temperature_scale_k() / temp_k).exp())
    }
}

/// Δν for the model's wavelengths, Hz.
pub fn raman_frequency_offset(model: &RamanNoiseModel) -> f64 {
    model.frequency_offset_hz()
}

pub fn npr_at_temperature(model: &RamanNoiseModel, temp_k: f64) -> Result<f64> {
    model.npr_at_temperature(temp_k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemperaturePoint {
    pub temp_k: f64,
    pub npr_hz: f64,
    pub sigma: f64,
}

/// Amplitude A of the Boltzmann law with Δν fixed. Each point gives
/// ln A = ln NPR + hΔν/(k_B·T); these are averaged with weights (NPR/σ)²,
/// the inverse variance of ln NPR.
pub fn fit_boltzmann(
    points: &[TemperaturePoint],
    lambda_pump_nm: f64,
    lambda_target_nm: f64,
    constants: PhysicalConstants,
) -> Result<RamanNoiseModel> {
    if points.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 points, got {}", points.len())));
    }
    let shape = RamanNoiseModel::with_constants(1.0, lambda_pump_nm, lambda_target_nm, constants)?;
    let theta = shape.temperature_scale_k();
    let (mut sw, mut swy) = (0.0, 0.0);
    for p in points {
        if !(p.temp_k > 0.0) || !(p.npr_hz > 0.0) || !(p.sigma > 0.0) {
            return Err(Error::Fit(format!(
                "degenerate point (T = {} K, rate = {} Hz, sigma = {}): temperature, rate and sigma must be positive",
                p.temp_k, p.npr_hz, p.sigma
            )));
        }
        let w = (p.npr_hz / p.sigma).powi(2);
        sw += w;
        swy += w * (p.npr_hz.ln() + theta / p.temp_k);
    }
    RamanNoiseModel::with_constants((swy / sw).exp(), lambda_pump_nm, lambda_target_nm, constants)
}

/// Reads `temp_C,counts_Hz,sigma` rows; temperatures are returned in kelvin.
pub fn read_temperature_csv<R: Read>(input: R) -> Result<Vec<TemperaturePoint>> {
    const HEADER: [&str; 3] = ["temp_C", "counts_Hz", "sigma"];
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Format(format!("line 1: {e}")))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Format(format!("line 1: expected header `{}`", HEADER.join(","))));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Format(e.to_string()))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let mut vals = [0.0; 3];
        for (i, v) in vals.iter_mut().enumerate() {
            let field = row.get(i).unwrap_or("");
            *v = field
                .parse()
                .map_err(|_| Error::Format(format!("line {line}: cannot parse {} \"{field}\"", HEADER[i])))?;
        }
        out.push(TemperaturePoint { temp_k: celsius_to_kelvin(vals[0]), npr_hz: vals[1], sigma: vals[2] });
    }
    Ok(out)
}

/// White-noise bandwidth scaling, npr_ref·bw_new/bw_ref.
pub fn scale_npr_bandwidth(npr_ref: f64, bw_ref: f64, bw_new: f64) -> Result<f64> {
    if !(bw_ref > 0.0) || !(bw_new > 0.0) {
        return Err(domain(format!("bandwidths must be positive, got {bw_ref} and {bw_new}")));
    }
    Ok(npr_ref * (bw_new / bw_ref))
}

/// Converts a wavelength width at `center_nm` to a frequency width, c·Δλ/λ².
pub fn wavelength_width_to_hz(width_nm: f64, center_nm: f64) -> f64 {
    PhysicalConstants::CODATA.c * width_nm * 1e-9 / (center_nm * 1e-9).powi(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub bandwidth_hz: f64,
    pub transmission: f64,
    /// Out-of-band suppression ratio.
    pub extinction: f64,
}

impl FilterSpec {
    /// Filter whose width is given in pm at `center_nm`.
    pub fn from_pm(width_pm: f64, center_nm: f64, transmission: f64, extinction: f64) -> Result<Self> {
        let f = Self {
            bandwidth_hz: wavelength_width_to_hz(width_pm * 1e-3, center_nm),
            transmission,
            extinction,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(domain(format!("filter bandwidth must be positive, got {}", self.bandwidth_hz)));
        }
        if !(self.transmission > 0.0 && self.transmission <= 1.0) {
            return Err(domain(format!("filter transmission must be in (0, 1], got {}", self.transmission)));
        }
        if !(self.extinction >= 1.0) {
            return Err(domain(format!("filter extinction must be at least 1, got {}", self.extinction)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub dead_time_s: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self { efficiency: 0.10, dark_rate_hz: 1.8, dead_time_s: 20e-6 }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(domain(format!("detector efficiency must be in (0, 1], got {}", self.efficiency)));
        }
        if !(self.dark_rate_hz >= 0.0) {
            return Err(domain(format!("dark rate must be non-negative, got {}", self.dark_rate_hz)));
        }
        if !(self.dead_time_s >= 0.0) {
            return Err(domain(format!("dead time must be non-negative, got {}", self.dead_time_s)));
        }
        Ok(())
    }
}

/// Click rate for photons arriving at `true_rate`: η·rate + dark, optionally
/// divided by 1 + r·τ for a non-paralyzable dead time τ.
pub fn detected_rate(true_rate: f64, det: &DetectorSpec, dead_time_correction: bool) -> Result<f64> {
    if !(true_rate >= 0.0) {
        return Err(domain(format!("incident rate must be non-negative, got {true_rate}")));
    }
    let r = det.efficiency * true_rate + det.dark_rate_hz;
    Ok(if dead_time_correction { r / (1.0 + r * det.dead_time_s) } else { r })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnrDefinition {
    /// signal / (noise + dark)
    SignalOverBackground,
    /// (signal + dark) / dark
    TotalOverDark,
}

pub fn snr(signal: f64, noise: f64, dark: f64, definition: SnrDefinition) -> Result<f64> {
    match definition {
        SnrDefinition::SignalOverBackground => {
            let bg = noise + dark;
            if !(bg > 0.0) {
                return Err(domain("signal-to-background ratio needs a positive background"));
            }
            Ok(signal / bg)
        }
        SnrDefinition::TotalOverDark => {
            if !(dark > 0.0) {
                return Err(domain("total-over-dark ratio needs a positive dark rate"));
            }
            Ok((signal + dark) / dark)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> RamanNoiseModel {
        RamanNoiseModel::new(1.0, 1902.0, 1550.0).unwrap()
    }

    #[test]
    fn offset_and_temperature_scale() {
        let m = model();
        let c = 299_792_458.0;
        let dnu = c / 1550e-9 - c / 1902e-9;
        assert!((m.frequency_offset_hz() / dnu - 1.0).abs() < 1e-12);
        assert!((m.frequency_offset_hz() / 3.58e13 - 1.0).abs() < 2e-3);
        assert!((m.temperature_scale_k() / 1.72e3 - 1.0).abs() < 2e-3);
        let farther = RamanNoiseModel::new(1.0, 1902.0, 1311.0).unwrap();
        assert!(farther.frequency_offset_hz() > m.frequency_offset_hz());
        assert!(RamanNoiseModel::new(1.0, 1550.0, 1550.0).is_err());
    }

    #[test]
    fn cooling_ratio() {
        let m = model();
        let ratio = m.npr_at_temperature(311.15).unwrap() / m.npr_at_temperature(223.15).unwrap();
        let theta = 6.626_070_15e-34 * m.frequency_offset_hz() / 1.380_649e-23;
        assert!((ratio - (theta * (1.0 / 223.15 - 1.0 / 311.15)).exp()).abs() < 1e-12);
        assert!((ratio - 8.82).abs() < 0.01, "{ratio}");
        assert!(m.npr_at_temperature(0.0).is_err());
        assert!((m.npr_at_temperature(1e12).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn boltzmann_fit_noiseless() {
        let truth = RamanNoiseModel::new(2.5e6, 1902.0, 1550.0).unwrap();
        let pts: Vec<_> = [283.15, 293.15, 303.15, 311.15]
            .iter()
            .map(|&t| {
                let n = truth.npr_at_temperature(t).unwrap();
                TemperaturePoint { temp_k: t, npr_hz: n, sigma: 0.05 * n }
            })
            .collect();
        let fit = fit_boltzmann(&pts, 1902.0, 1550.0, PhysicalConstants::CODATA).unwrap();
        assert!((fit.amplitude_hz / 2.5e6 - 1.0).abs() < 1e-9);
        assert!(fit_boltzmann(&pts[..1], 1902.0, 1550.0, PhysicalConstants::CODATA).is_err());
        let mut bad = pts.clone();
        bad[0].npr_hz = 0.0;
        assert!(matches!(
            fit_boltzmann(&bad, 1902.0, 1550.0, PhysicalConstants::CODATA),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn bandwidth_scaling() {
        assert!((scale_npr_bandwidth(14e3, 12_000.0, 2.0).unwrap() - 2.3333).abs() < 1e-4);
        assert!((scale_npr_bandwidth(14e3, 12_000.0, 15.0).unwrap() - 17.5).abs() < 1e-12);
        assert_eq!(scale_npr_bandwidth(14e3, 3.0, 3.0).unwrap(), 14e3);
        assert!(scale_npr_bandwidth(1.0, 0.0, 1.0).is_err());
        let wide = FilterSpec::from_pm(12_000.0, 1550.0, 1.0, 1e3).unwrap();
        let narrow = FilterSpec::from_pm(2.0, 1550.0, 1.0, 1e3).unwrap();
        let via_hz = scale_npr_bandwidth(14e3, wide.bandwidth_hz, narrow.bandwidth_hz).unwrap();
        assert!((via_hz - 14e3 * 2.0 / 12_000.0).abs() < 1e-9);
    }

    #[test]
    fn detector_response() {
        let det = DetectorSpec::default();
        assert!((detected_rate(10e3, &DetectorSpec { dark_rate_hz: 0.0, ..det }, false).unwrap() - 1e3).abs() < 1e-9);
        let r = detected_rate(14e3, &det, false).unwrap();
        assert!((r - 1401.8).abs() < 1e-9);
        let corrected = detected_rate(14e3, &det, true).unwrap();
        assert!((corrected / r - 1.0 / (1.0 + r * 20e-6)).abs() < 1e-12);
        assert!((corrected / r - 0.973).abs() < 1e-3);
        assert!(detected_rate(-1.0, &det, false).is_err());
    }

    #[test]
    fn snr_definitions() {
        let s = |a, b, c, d| snr(a, b, c, d).unwrap();
        assert!((s(136.0, 0.26, 1.8, SnrDefinition::SignalOverBackground) - 66.0).abs() < 0.1);
        assert!((s(304.0, 5.8, 1.8, SnrDefinition::SignalOverBackground) - 40.0).abs() < 1e-12);
        assert!((s(6.27, 0.0, 1.8, SnrDefinition::TotalOverDark) - 4.4833).abs() < 1e-4);
        assert!(snr(1.0, 0.0, 0.0, SnrDefinition::SignalOverBackground).is_err());
        assert!(snr(1.0, 5.0, 0.0, SnrDefinition::TotalOverDark).is_err());
    }

    #[test]
    fn temperature_csv() {
        let text = "temp_C,counts_Hz,sigma\n38,1400,40\n-50,160,10\n";
        let pts = read_temperature_csv(text.as_bytes()).unwrap();
        assert!((pts[0].temp_k - 311.15).abs() < 1e-12);
        assert!((pts[1].temp_k - 223.15).abs() < 1e-12);
        assert!(read_temperature_csv("temp_K,counts_Hz,sigma\n".as_bytes()).is_err());
    }
}
