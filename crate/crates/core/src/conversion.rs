//! Difference-frequency conversion: efficiency versus pump power, curve
//! fitting, loss bookkeeping, phase-matching acceptance and the two-waveguide
//! polarization-preserving arrangement.

use std::io::Read;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::optimize::golden_section;
use crate::quantum::{DensityMatrix, PolarizationState};

/// Speed of light, m/s.
const C_LIGHT: f64 = 299_792_458.0;

/// Argument at which sinc²(x) = 1/2.
pub const SINC2_HALF_POINT: f64 = 1.391_557_378_251_51;

/// Number of log-spaced η_nor starting points used by [`fit_efficiency_curve`].
pub const FIT_GRID_POINTS: usize = 241;
pub const FIT_ETA_RANGE: (f64, f64) = (1e-2, 1e1);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideSpec {
    pub length_cm: f64,
    /// Normalized efficiency, W⁻¹·cm⁻².
    pub eta_nor_per_w_cm2: f64,
    /// Peak of the efficiency curve; dimensionless or a count rate when
    /// fitting detected rates.
    pub amplitude: f64,
    pub phase_match_temp_c: f64,
    pub temp_fwhm_c: f64,
    /// Spectral acceptance FWHM at the input wavelength, nm.
    pub spectral_acceptance_nm: f64,
}

impl WaveguideSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_cm > 0.0) {
            return Err(domain(format!("waveguide length must be positive, got {}", self.length_cm)));
        }
        if !(self.eta_nor_per_w_cm2 > 0.0) {
            return Err(domain(format!(
                "normalized efficiency must be positive, got {}",
                self.eta_nor_per_w_cm2
            )));
        }
        if !(self.amplitude >= 0.0) {
            return Err(domain(format!("amplitude must be non-negative, got {}", self.amplitude)));
        }
        if !(self.temp_fwhm_c > 0.0) {
            return Err(domain(format!("temperature FWHM must be positive, got {}", self.temp_fwhm_c)));
        }
        if !(self.spectral_acceptance_nm > 0.0) {
            return Err(domain(format!(
                "spectral acceptance must be positive, got {}",
                self.spectral_acceptance_nm
            )));
        }
        Ok(())
    }

    /// Coupling phase √(η_nor·P)·L at pump power `pump_w`.
    fn phase(&self, pump_w: f64) -> f64 {
        (self.eta_nor_per_w_cm2 * pump_w).sqrt() * self.length_cm
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub label: String,
    pub transmission: f64,
}

/// Ordered optical components between two reference planes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentChain {
    pub components: Vec<Component>,
}

impl ComponentChain {
    pub fn from_transmissions(ts: &[f64]) -> Self {
        Self {
            components: ts
                .iter()
                .enumerate()
                .map(|(i, &t)| Component { label: format!("c{i}"), transmission: t })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            if !(c.transmission > 0.0 && c.transmission <= 1.0) {
                return Err(domain(format!(
                    "component \"{}\" transmission must be in (0, 1], got {}",
                    c.label, c.transmission
                )));
            }
        }
        Ok(())
    }

    pub fn total_transmission(&self) -> f64 {
        self.components.iter().map(|c| c.transmission).product()
    }
}

/// Pump power and its split between the two waveguides: |γ|² of the power
/// drives the first stage, |δ|² the second.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PumpConfig {
    pub total_power_w: f64,
    pub delta: Complex64,
    pub gamma: Complex64,
}

impl PumpConfig {
    pub fn new(total_power_w: f64, delta: Complex64, gamma: Complex64) -> Result<Self> {
        if !(total_power_w >= 0.0) {
            return Err(domain(format!("pump power must be non-negative, got {total_power_w}")));
        }
        let norm = delta.norm_sqr() + gamma.norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(domain(format!("pump polarization split must be normalized, |δ|²+|γ|² = {norm}")));
        }
        Ok(Self { total_power_w, delta, gamma })
    }

    /// Equal split between the two stages.
    pub fn balanced(total_power_w: f64) -> Result<Self> {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::new(total_power_w, a, a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EfficiencyCurvePoint {
    pub pump_w: f64,
    pub value: f64,
    pub sigma: f64,
}

impl EfficiencyCurvePoint {
    pub fn new(pump_w: f64, value: f64, sigma: f64) -> Result<Self> {
        if !(pump_w >= 0.0) || !pump_w.is_finite() {
            return Err(domain(format!("pump power must be non-negative, got {pump_w}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(domain(format!("sigma must be positive, got {sigma}")));
        }
        if !value.is_finite() {
            return Err(domain(format!("value must be finite, got {value}")));
        }
        Ok(Self { pump_w, value, sigma })
    }
}

/// A·sin²(√(η_nor·P)·L).
pub fn conversion_efficiency(pump_w: f64, spec: &WaveguideSpec) -> f64 {
    let s = spec.phase(pump_w.max(0.0)).sin();
    spec.amplitude * s * s
}

/// Pump power of the first efficiency maximum, (π / (2·L·√η_nor))².
pub fn optimal_pump_power(spec: &WaveguideSpec) -> f64 {
    let x = std::f64::consts::PI / (2.0 * spec.length_cm * spec.eta_nor_per_w_cm2.sqrt());
    x * x
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyFit {
    #[serde(rename = "A")]
    pub amplitude: f64,
    #[serde(rename = "eta_nor_per_W_cm2")]
    pub eta_nor: f64,
    /// Weighted sum of squared residuals (χ²).
    pub residual: f64,
}

/// Weighted least-squares fit of A·sin²(√(η_nor·P)·L) to measured points.
///
/// A enters linearly, so for each η_nor it is solved in closed form and only
/// η_nor is searched: a fixed log-spaced grid over [1e-2, 1e1] W⁻¹cm⁻², then
/// golden-section refinement around the best node.
pub fn fit_efficiency_curve(points: &[EfficiencyCurvePoint], length_cm: f64) -> Result<EfficiencyFit> {
    if points.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", points.len())));
    }
    if !(length_cm > 0.0) {
        return Err(domain(format!("waveguide length must be positive, got {length_cm}")));
    }
    let first = points[0].pump_w;
    if points.iter().all(|p| p.pump_w == first) {
        return Err(Error::Fit("degenerate data: all pump powers are equal".into()));
    }

    let profile = |eta: f64| -> (f64, f64) {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        let shapes: Vec<f64> = points
            .iter()
            .map(|p| ((eta * p.pump_w).sqrt() * length_cm).sin().powi(2))
            .collect();
        for (p, s) in points.iter().zip(&shapes) {
            let w = 1.0 / (p.sigma * p.sigma);
            sxy += w * s * p.value;
            sxx += w * s * s;
        }
        if sxx <= 0.0 {
            return (0.0, f64::INFINITY);
        }
        let a = sxy / sxx;
        let chi2 = points
            .iter()
            .zip(&shapes)
            .map(|(p, s)| ((a * s - p.value) / p.sigma).powi(2))
            .sum();
        (a, chi2)
    };

    let (lo, hi) = (FIT_ETA_RANGE.0.ln(), FIT_ETA_RANGE.1.ln());
    let node = |k: usize| lo + (hi - lo) * k as f64 / (FIT_GRID_POINTS - 1) as f64;
    let best = (0..FIT_GRID_POINTS)
        .map(|k| (k, profile(node(k).exp()).1))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|(_, chi2)| chi2.is_finite())
        .ok_or_else(|| Error::Fit("model is identically zero on the data".into()))?
        .0;
    let bracket = (node(best.saturating_sub(1)), node((best + 1).min(FIT_GRID_POINTS - 1)));
    let (log_eta, _) = golden_section(|x| profile(x.exp()).1, bracket.0, bracket.1, 1e-12);
    let eta = log_eta.exp();
    let (amplitude, residual) = profile(eta);
    Ok(EfficiencyFit { amplitude, eta_nor: eta, residual })
}

/// Reads `pump_mW,value,sigma` rows; pump powers are returned in W.
pub fn read_efficiency_csv<R: Read>(input: R) -> Result<Vec<EfficiencyCurvePoint>> {
    const HEADER: [&str; 3] = ["pump_mW", "value", "sigma"];
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
        out.push(
            EfficiencyCurvePoint::new(vals[0] * 1e-3, vals[1], vals[2])
                .map_err(|e| Error::Format(format!("line {line}: {e}")))?,
        );
    }
    Ok(out)
}

/// Internal efficiency after removing the known passive losses of `chain`,
/// dividing out one component at a time in chain order.
pub fn deduct_passive_losses(measured: f64, chain: &ComponentChain) -> Result<f64> {
    if !(measured >= 0.0) {
        return Err(domain(format!("measured efficiency must be non-negative, got {measured}")));
    }
    chain.validate()?;
    Ok(chain.components.iter().fold(measured, |acc, c| acc / c.transmission))
}

/// Target wavelength from energy conservation, 1/λ_t = 1/λ_s − 1/λ_p (nm).
/// An infinite pump wavelength is accepted and returns λ_s.
pub fn dfg_target_wavelength(lambda_signal_nm: f64, lambda_pump_nm: f64) -> Result<f64> {
    if !(lambda_signal_nm > 0.0) || !lambda_signal_nm.is_finite() {
        return Err(domain(format!("signal wavelength must be positive, got {lambda_signal_nm}")));
    }
    if !(lambda_pump_nm > lambda_signal_nm) {
        return Err(domain(format!(
            "no difference-frequency solution: pump {lambda_pump_nm} nm must exceed signal {lambda_signal_nm} nm"
        )));
    }
    Ok(1.0 / (1.0 / lambda_signal_nm - 1.0 / lambda_pump_nm))
}

/// Whether pump photons carry less energy than target photons, which rules
/// out pump-induced down-conversion noise at the target.
pub fn long_pump_regime(lambda_target_nm: f64, lambda_pump_nm: f64) -> bool {
    lambda_pump_nm > lambda_target_nm
}

/// Relative efficiency sinc²(x) versus crystal temperature, with x scaled so
/// the full width at half maximum equals `spec.temp_fwhm_c`.
pub fn temperature_acceptance(temp_c: f64, spec: &WaveguideSpec) -> f64 {
    let x = 2.0 * SINC2_HALF_POINT * (temp_c - spec.phase_match_temp_c) / spec.temp_fwhm_c;
    if x.abs() < 1e-8 {
        1.0 - x * x / 3.0
    } else {
        (x.sin() / x).powi(2)
    }
}

/// Spectral acceptance converted to frequency, c·Δλ/λ² (Hz).
pub fn spectral_acceptance_hz(spec: &WaveguideSpec, center_nm: f64) -> f64 {
    C_LIGHT * spec.spectral_acceptance_nm * 1e-9 / (center_nm * 1e-9).powi(2)
}

/// True if a photon of the given bandwidth fits inside the acceptance window.
pub fn within_spectral_acceptance(spec: &WaveguideSpec, center_nm: f64, photon_bandwidth_hz: f64) -> bool {
    photon_bandwidth_hz < spectral_acceptance_hz(spec, center_nm)
}

/// Fraction of input light left at the input wavelength after the device:
/// T_passive·(1 − (1 − floor)·sin²(√(η_nor·P)·L)).
pub fn residual_854(pump_w: f64, spec: &WaveguideSpec, t_passive: f64, unconverted_floor: f64) -> Result<f64> {
    for (name, v) in [("passive transmission", t_passive), ("unconverted floor", unconverted_floor)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(domain(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    let s = spec.phase(pump_w.max(0.0)).sin();
    Ok(t_passive * (1.0 - (1.0 - unconverted_floor) * s * s))
}

/// Heralded output of the two-stage converter.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub state: DensityMatrix,
    pub success_probability: f64,
}

/// Two-waveguide polarization-preserving conversion. Stage 1 converts the V
/// component, an ideal half-wave flip swaps H and V, and stage 2 converts what
/// was H. The converted photon is α√η₂|V⟩ + β√η₁|H⟩ before renormalization.
pub fn polarization_chain(
    input: &PolarizationState,
    pump: &PumpConfig,
    wg1: &WaveguideSpec,
    wg2: &WaveguideSpec,
) -> Result<ChainOutput> {
    wg1.validate()?;
    wg2.validate()?;
    let eta1 = conversion_efficiency(pump.gamma.norm_sqr() * pump.total_power_w, wg1);
    let eta2 = conversion_efficiency(pump.delta.norm_sqr() * pump.total_power_w, wg2);
    polarization_chain_with_efficiencies(input, eta1, eta2)
}

/// [`polarization_chain`] with the stage efficiencies given directly.
pub fn polarization_chain_with_efficiencies(
    input: &PolarizationState,
    eta1: f64,
    eta2: f64,
) -> Result<ChainOutput> {
    for (name, eta) in [("stage 1", eta1), ("stage 2", eta2)] {
        if !(0.0..=1.0).contains(&eta) {
            return Err(domain(format!("{name} efficiency must be in [0, 1], got {eta}")));
        }
    }
    let (alpha, beta) = (input.alpha(), input.beta());
    let h = beta * eta1.sqrt();
    let v = alpha * eta2.sqrt();
    let p = h.norm_sqr() + v.norm_sqr();
    if p <= 0.0 {
        return Err(Error::ZeroProbability(format!(
            "no photon converted (stage efficiencies {eta1}, {eta2})"
        )));
    }
    let norm = p.sqrt();
    let state = DensityMatrix::from_pure(&[h / norm, v / norm])?;
    Ok(ChainOutput { state, success_probability: p })
}
