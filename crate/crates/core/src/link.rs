//! Ion–photon link budget over telecom fiber.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::noise::{snr, DetectorSpec, SnrDefinition};
use crate::quantum::{
    apply_to_photon_half, depolarize, min_partial_transpose_eigenvalue, negativity, DensityMatrix,
    ProcessMatrix,
};

/// Search interval for the entanglement threshold, km.
pub const SEARCH_RANGE_KM: (f64, f64) = (0.0, 500.0);
/// Bisection stops once the bracket is narrower than this, km.
pub const DISTANCE_RESOLUTION_KM: f64 = 1e-5;
/// Negativity below this counts as separable.
pub const NEGATIVITY_THRESHOLD: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    pub attenuation_db_per_km: f64,
    pub propagation_delay_us_per_km: f64,
}

impl Default for FiberSpec {
    fn default() -> Self {
        Self { attenuation_db_per_km: 0.2, propagation_delay_us_per_km: 5.0 }
    }
}

impl FiberSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.attenuation_db_per_km > 0.0) {
            return Err(domain(format!("attenuation must be positive, got {}", self.attenuation_db_per_km)));
        }
        if !(self.propagation_delay_us_per_km > 0.0) {
            return Err(domain(format!(
                "propagation delay must be positive, got {}",
                self.propagation_delay_us_per_km
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub attempt_rate_hz: f64,
    pub wavepacket_duration_us: f64,
    /// Fraction of time the detector gate is open.
    pub duty_cycle: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self { attempt_rate_hz: 10e3, wavepacket_duration_us: 20.0, duty_cycle: 0.2 }
    }
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.attempt_rate_hz > 0.0) {
            return Err(domain(format!("attempt rate must be positive, got {}", self.attempt_rate_hz)));
        }
        if !(self.wavepacket_duration_us > 0.0) {
            return Err(domain(format!(
                "wavepacket duration must be positive, got {}",
                self.wavepacket_duration_us
            )));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(domain(format!("duty cycle must be in (0, 1], got {}", self.duty_cycle)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkModel {
    pub source: SourceSpec,
    /// End-to-end device efficiency from ion photon to fiber-coupled telecom photon.
    pub conversion_efficiency: f64,
    /// Polarization channel of the converter with background already removed.
    pub converter: ProcessMatrix,
    /// Converter noise photons entering the fiber, Hz.
    pub photon_noise_rate_hz: f64,
    pub fiber: FiberSpec,
    pub detector: DetectorSpec,
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.fiber.validate()?;
        self.detector.validate()?;
        if !(0.0..=1.0).contains(&self.conversion_efficiency) {
            return Err(domain(format!(
                "conversion efficiency must be in [0, 1], got {}",
                self.conversion_efficiency
            )));
        }
        if !(self.photon_noise_rate_hz >= 0.0) {
            return Err(domain(format!(
                "photon noise rate must be non-negative, got {}",
                self.photon_noise_rate_hz
            )));
        }
        Ok(())
    }

    pub fn with_converter(&self, converter: ProcessMatrix) -> Self {
        Self { converter, ..self.clone() }
    }
}

/// 10^(−α·L/10).
pub fn fiber_transmission(length_km: f64, fiber: &FiberSpec) -> f64 {
    10f64.powf(-fiber.attenuation_db_per_km * length_km / 10.0)
}

/// Fiber length beyond which converting first and sending over the
/// low-loss fiber beats sending the unconverted photon.
pub fn breakeven_length(eta_conv: f64, alpha_target: f64, alpha_signal: f64) -> Result<f64> {
    if !(eta_conv > 0.0 && eta_conv <= 1.0) {
        return Err(domain(format!("conversion efficiency must be in (0, 1], got {eta_conv}")));
    }
    if !(alpha_signal > alpha_target) {
        return Err(domain(format!(
            "unconverted attenuation ({alpha_signal} dB/km) must exceed converted attenuation ({alpha_target} dB/km)"
        )));
    }
    Ok(10.0 * (1.0 / eta_conv).log10() / (alpha_signal - alpha_target))
}

fn check_length(length_km: f64) -> Result<()> {
    if !(length_km >= 0.0) || !length_km.is_finite() {
        return Err(domain(format!("fiber length must be non-negative, got {length_km}")));
    }
    Ok(())
}

/// Telecom photons detected per second at the far end.
pub fn detected_signal_rate(model: &LinkModel, length_km: f64) -> f64 {
    model.source.attempt_rate_hz
        * model.conversion_efficiency
        * fiber_transmission(length_km, &model.fiber)
        * model.detector.efficiency
}

/// Converter noise clicks at the far end; shares every loss with the signal.
pub fn detected_noise_rate(model: &LinkModel, length_km: f64) -> f64 {
    model.photon_noise_rate_hz * fiber_transmission(length_km, &model.fiber) * model.detector.efficiency
}

/// Ion–photon state at the far end: the maximally entangled state, the
/// converter channel on the photon, then depolarization with weight
/// S/(S+D) for detected signal S and dark rate D.
pub fn ion_photon_state(model: &LinkModel, length_km: f64) -> Result<DensityMatrix> {
    check_length(length_km)?;
    let s = detected_signal_rate(model, length_km);
    let d = model.detector.dark_rate_hz;
    if !(s + d > 0.0) {
        return Err(domain("signal and dark rates are both zero"));
    }
    let converted = apply_to_photon_half(&model.converter, &DensityMatrix::ion_photon_bell())?;
    depolarize(&converted, s / (s + d))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkBudgetResult {
    pub length_km: f64,
    pub signal_hz: f64,
    pub noise_hz: f64,
    pub dark_hz: f64,
    /// signal / (noise + dark)
    pub snr: f64,
    /// (signal + dark) / dark
    pub snr_total_over_dark: f64,
    pub negativity: f64,
    #[serde(skip)]
    pub state: DensityMatrix,
}

pub fn link_budget(model: &LinkModel, length_km: f64) -> Result<LinkBudgetResult> {
    model.validate()?;
    let state = ion_photon_state(model, length_km)?;
    let signal = detected_signal_rate(model, length_km);
    let noise = detected_noise_rate(model, length_km);
    let dark = model.detector.dark_rate_hz;
    let ratio = |def| snr(signal, noise, dark, def).unwrap_or(f64::INFINITY);
    Ok(LinkBudgetResult {
        length_km,
        signal_hz: signal,
        noise_hz: noise,
        dark_hz: dark,
        snr: ratio(SnrDefinition::SignalOverBackground),
        snr_total_over_dark: ratio(SnrDefinition::TotalOverDark),
        negativity: negativity(&state)?,
        state,
    })
}

pub fn sweep(model: &LinkModel, lengths_km: &[f64]) -> Result<Vec<LinkBudgetResult>> {
    lengths_km.iter().map(|&l| link_budget(model, l)).collect()
}

/// Writes `length_km,signal_hz,negativity` rows.
pub fn write_sweep_csv<W: Write>(rows: &[LinkBudgetResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["length_km", "signal_hz", "negativity"]).map_err(err)?;
    for r in rows {
        w.write_record([r.length_km.to_string(), r.signal_hz.to_string(), r.negativity.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceSearch {
    /// Largest length with negativity above [`NEGATIVITY_THRESHOLD`], or the
    /// search bound when the state stays entangled throughout.
    pub distance_km: f64,
    pub threshold_found: bool,
    /// Minimum partial-transpose eigenvalue at `distance_km`.
    pub min_partial_transpose_eigenvalue: f64,
    /// Bisection points (length, negativity) sorted by length.
    #[serde(skip)]
    pub trace: Vec<(f64, f64)>,
}

/// Largest fiber length keeping the ion–photon state entangled, by bisection
/// on [0, 500] km. Errors if the state is separable already at zero length or
/// if negativity is not monotone along the evaluated points.
pub fn max_entanglement_distance(model: &LinkModel) -> Result<DistanceSearch> {
    model.validate()?;
    let n_at = |l: f64| ion_photon_state(model, l).and_then(|s| negativity(&s));
    let (mut lo, mut hi) = SEARCH_RANGE_KM;
    let n_lo = n_at(lo)?;
    if n_lo <= NEGATIVITY_THRESHOLD {
        return Err(Error::DegenerateModel("no entanglement at zero fiber length".into()));
    }
    let mut trace = vec![(lo, n_lo)];
    let n_hi = n_at(hi)?;
    trace.push((hi, n_hi));
    let threshold_found = n_hi <= NEGATIVITY_THRESHOLD;
    if threshold_found {
        while hi - lo > DISTANCE_RESOLUTION_KM {
            let mid = 0.5 * (lo + hi);
            let n = n_at(mid)?;
            trace.push((mid, n));
            if n > NEGATIVITY_THRESHOLD {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    } else {
        lo = hi;
    }
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = trace.windows(2).find(|w| w[1].1 > w[0].1 + 1e-12) {
        return Err(Error::DegenerateModel(format!(
            "negativity increases from {} at {} km to {} at {} km",
            w[0].1, w[0].0, w[1].1, w[1].0
        )));
    }
    Ok(DistanceSearch {
        distance_km: lo,
        threshold_found,
        min_partial_transpose_eigenvalue: min_partial_transpose_eigenvalue(&ion_photon_state(model, lo)?)?,
        trace,
    })
}

/// Converter stand-in with identity weight `fidelity`: the identity process
/// mixed with the fully depolarizing one.
pub fn surrogate_converter(fidelity: f64) -> Result<ProcessMatrix> {
    if !(0.25..=1.0).contains(&fidelity) {
        return Err(domain(format!("surrogate identity weight must be in [0.25, 1], got {fidelity}")));
    }
    ProcessMatrix::depolarizing((4.0 * fidelity - 1.0) / 3.0)
}

/// Identity weight of the surrogate converter that places the entanglement
/// threshold of `model` at `target_km`, by bisection.
pub fn calibrate_surrogate_fidelity(model: &LinkModel, target_km: f64) -> Result<f64> {
    if !(target_km > SEARCH_RANGE_KM.0 && target_km < SEARCH_RANGE_KM.1) {
        return Err(domain(format!("calibration target must lie inside the search range, got {target_km} km")));
    }
    let distance = |f: f64| -> Result<f64> {
        let m = model.with_converter(surrogate_converter(f)?);
        match max_entanglement_distance(&m) {
            Ok(r) => Ok(r.distance_km),
            Err(Error::DegenerateModel(_)) => Ok(0.0),
            Err(e) => Err(e),
        }
    };
    if distance(1.0)? < target_km {
        return Err(Error::Fit(format!(
            "target {target_km} km is beyond reach even with a perfect converter"
        )));
    }
    let (mut lo, mut hi) = (0.25, 1.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if distance(mid)? < target_km {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Dark counts remaining when the detector is gated open only a fraction of the time.
pub fn gated_dark_rate(dark_hz: f64, duty_cycle: f64) -> Result<f64> {
    if !(duty_cycle > 0.0 && duty_cycle <= 1.0) {
        return Err(domain(format!("duty cycle must be in (0, 1], got {duty_cycle}")));
    }
    Ok(dark_hz * duty_cycle)
}

/// One-way photon travel time, μs.
pub fn travel_time_us(length_km: f64, fiber: &FiberSpec) -> f64 {
    length_km * fiber.propagation_delay_us_per_km
}

/// Attempt rate of a single ion when each attempt waits for the photon to
/// arrive, Hz.
pub fn max_single_ion_rate(length_km: f64, source: &SourceSpec, fiber: &FiberSpec) -> f64 {
    let t = travel_time_us(length_km, fiber);
    if t <= 0.0 {
        source.attempt_rate_hz
    } else {
        source.attempt_rate_hz.min(1e6 / t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> LinkModel {
        LinkModel {
            source: SourceSpec::default(),
            conversion_efficiency: 0.30,
            converter: ProcessMatrix::identity(),
            photon_noise_rate_hz: 58.0,
            fiber: FiberSpec::default(),
            detector: DetectorSpec::default(),
        }
    }

    #[test]
    fn transmission_reference_values() {
        let f = FiberSpec::default();
        assert_eq!(fiber_transmission(0.0, &f), 1.0);
        assert!((0.3 * fiber_transmission(50.0, &f) - 0.03).abs() < 1e-15);
        assert!((0.3 * fiber_transmission(100.0, &f) - 0.003).abs() < 1e-15);
        let nir = FiberSpec { attenuation_db_per_km: 3.0, ..f };
        assert!((fiber_transmission(50.0, &nir) / 1e-15 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn breakeven_reference_values() {
        assert!((breakeven_length(0.3, 0.2, 3.0).unwrap() - 1.867_424).abs() < 1e-6);
        assert!((breakeven_length(0.3, 0.32, 3.0).unwrap() - 1.951_040).abs() < 1e-6);
        assert_eq!(breakeven_length(1.0, 0.2, 3.0).unwrap(), 0.0);
        assert!(breakeven_length(0.0, 0.2, 3.0).is_err());
        assert!(breakeven_length(0.3, 3.0, 0.2).is_err());
    }

    #[test]
    fn signal_rates() {
        let m = model();
        assert!((detected_signal_rate(&m, 0.0) - 300.0).abs() < 1e-9);
        assert!((detected_signal_rate(&m, 84.0) - 6.267_888).abs() < 1e-6);
        let doubled = LinkModel {
            fiber: FiberSpec { attenuation_db_per_km: 0.4, ..m.fiber },
            ..m.clone()
        };
        assert!((detected_signal_rate(&doubled, 30.0) / detected_signal_rate(&m, 60.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn state_examples() {
        let mut m = model();
        m.detector.dark_rate_hz = 0.0;
        let n = negativity(&ion_photon_state(&m, 250.0).unwrap()).unwrap();
        assert!((n - 0.5).abs() < 1e-12);
        m.converter = ProcessMatrix::basis_conjugation(2).unwrap();
        let n = negativity(&ion_photon_state(&m, 40.0).unwrap()).unwrap();
        assert!((n - 0.5).abs() < 1e-12);

        let mut m = model();
        m.detector.dark_rate_hz = detected_signal_rate(&m, 10.0);
        let n = negativity(&ion_photon_state(&m, 10.0).unwrap()).unwrap();
        assert!((n - 0.125).abs() < 1e-12);
    }

    #[test]
    fn threshold_matches_werner_closed_form() {
        for f in [0.6, 0.8, 0.95] {
            let m = model().with_converter(surrogate_converter(f).unwrap());
            let found = max_entanglement_distance(&m).unwrap();
            assert!(found.threshold_found);
            let wc = (4.0 * f - 1.0) / 3.0;
            let s_threshold = m.detector.dark_rate_hz / (3.0 * wc - 1.0);
            let l_threshold = 10.0 / 0.2 * (300.0 / s_threshold).log10();
            assert!((found.distance_km - l_threshold).abs() < 1e-4, "{f}: {found:?} vs {l_threshold}");
            assert!(found.min_partial_transpose_eigenvalue.abs() < 1e-6);
        }
    }

    #[test]
    fn perfect_converter_without_dark_counts_has_no_threshold() {
        let mut m = model();
        m.detector.dark_rate_hz = 0.0;
        let found = max_entanglement_distance(&m).unwrap();
        assert!(!found.threshold_found);
        assert_eq!(found.distance_km, SEARCH_RANGE_KM.1);
    }

    #[test]
    fn separable_at_origin_is_degenerate() {
        let m = model().with_converter(ProcessMatrix::depolarizing(0.0).unwrap());
        assert!(matches!(max_entanglement_distance(&m), Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn calibration_hits_target() {
        let f = calibrate_surrogate_fidelity(&model(), 84.0).unwrap();
        let m = model().with_converter(surrogate_converter(f).unwrap());
        let d = max_entanglement_distance(&m).unwrap().distance_km;
        assert!((d - 84.0).abs() < 1e-3, "{d}");
        assert!(surrogate_converter(0.2).is_err());
    }

    #[test]
    fn timing() {
        let f = FiberSpec::default();
        let s = SourceSpec::default();
        assert_eq!(travel_time_us(84.0, &f), 420.0);
        assert_eq!(travel_time_us(0.0, &f), 0.0);
        assert!((max_single_ion_rate(84.0, &s, &f) - 1e6 / 420.0).abs() < 1e-9);
        assert_eq!(max_single_ion_rate(1.0, &s, &f), 10e3);
        assert_eq!(max_single_ion_rate(20.0, &s, &f), 10e3);
        assert!(max_single_ion_rate(20.001, &s, &f) < 10e3);
    }

    #[test]
    fn gating() {
        assert!((gated_dark_rate(1.8, 0.2).unwrap() - 0.36).abs() < 1e-15);
        assert_eq!(gated_dark_rate(1.8, 1.0).unwrap(), 1.8);
        assert!(gated_dark_rate(1.8, 0.0).is_err());
    }

    #[test]
    fn budget_json_fields() {
        let r = link_budget(&model(), 84.0).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            ["dark_hz", "length_km", "negativity", "noise_hz", "signal_hz", "snr", "snr_total_over_dark"]
        );
        assert!((r.snr_total_over_dark - 4.48).abs() < 0.01);
    }
}
