//! Polarization process tomography.
//!
//! Six probe states are sent through the channel and each output is analyzed
//! in the three Pauli bases. Counts are modeled as independent Poisson
//! variables; the process matrix is recovered by maximizing that likelihood
//! over completely positive, trace-preserving channels.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{domain, Error, Result};
use crate::linalg::ComplexMatrix;
use crate::optimize::{gradient_norm, nelder_mead, nelder_mead_restarting, SimplexOptions};
use crate::quantum::{
    chi_of_linear_map, project_trace_preserving, unitary_from_angles, OperatorBasis,
    PolarizationState, ProcessMatrix,
};

/// Expected-rate floor (Hz) keeping every Poisson term finite.
pub const RATE_FLOOR_HZ: f64 = 1e-12;
pub const MLE_MAX_ITERATIONS: usize = 100_000;
pub const MLE_TOLERANCE: f64 = 1e-9;

pub const CSV_HEADER: [&str; 5] = ["probe", "analyzer", "outcome", "counts", "duration_s"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Probe {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Probe {
    pub const ALL: [Probe; 6] = [Probe::H, Probe::V, Probe::D, Probe::A, Probe::R, Probe::L];

    pub fn state(self) -> PolarizationState {
        match self {
            Probe::H => PolarizationState::h(),
            Probe::V => PolarizationState::v(),
            Probe::D => PolarizationState::d(),
            Probe::A => PolarizationState::a(),
            Probe::R => PolarizationState::r(),
            Probe::L => PolarizationState::l(),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Probe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Probe::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::Format(format!("unknown probe \"{s}\" (expected H, V, D, A, R or L)")))
    }
}

/// The six standard polarization probes.
#[derive(Clone, Debug)]
pub struct ProbeSet {
    states: [PolarizationState; 6],
}

impl ProbeSet {
    pub fn standard() -> Self {
        Self {
            states: Probe::ALL.map(Probe::state),
        }
    }

    pub fn state(&self, probe: Probe) -> PolarizationState {
        self.states[probe.index()]
    }
}

/// Analyzer setting; outcome 0 projects on the first-named state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Analyzer {
    HV,
    DA,
    RL,
}

impl Analyzer {
    pub const ALL: [Analyzer; 3] = [Analyzer::HV, Analyzer::DA, Analyzer::RL];

    pub fn outcome_state(self, outcome: u8) -> PolarizationState {
        match (self, outcome) {
            (Analyzer::HV, 0) => PolarizationState::h(),
            (Analyzer::HV, _) => PolarizationState::v(),
            (Analyzer::DA, 0) => PolarizationState::d(),
            (Analyzer::DA, _) => PolarizationState::a(),
            (Analyzer::RL, 0) => PolarizationState::r(),
            (Analyzer::RL, _) => PolarizationState::l(),
        }
    }
}

impl fmt::Display for Analyzer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Analyzer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Analyzer::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::Format(format!("unknown analyzer \"{s}\" (expected HV, DA or RL)")))
    }
}

/// Counts for one probe, analyzer setting and outcome. Counts are real so
/// background-corrected data fits the same type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub probe: Probe,
    pub analyzer: Analyzer,
    pub outcome: u8,
    pub counts: f64,
    pub duration_s: f64,
}

impl MeasurementRecord {
    pub fn new(probe: Probe, analyzer: Analyzer, outcome: u8, counts: f64, duration_s: f64) -> Result<Self> {
        if outcome > 1 {
            return Err(domain(format!("outcome must be 0 or 1, got {outcome}")));
        }
        if !(counts >= 0.0) || !counts.is_finite() {
            return Err(domain(format!("counts must be finite and non-negative, got {counts}")));
        }
        if !(duration_s > 0.0) || !duration_s.is_finite() {
            return Err(domain(format!("duration must be positive, got {duration_s}")));
        }
        Ok(Self { probe, analyzer, outcome, counts, duration_s })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TomographyConfig {
    /// Photon arrival rate at the analyzer (Hz).
    pub signal_rate_hz: f64,
    /// Polarization-isotropic background rate, noise plus dark counts (Hz).
    pub background_rate_hz: f64,
    pub duration_per_setting_s: f64,
    pub rng_seed: u64,
}

impl TomographyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_rate_hz >= 0.0) || !(self.background_rate_hz >= 0.0) {
            return Err(domain("tomography rates must be non-negative"));
        }
        if !(self.duration_per_setting_s > 0.0) {
            return Err(domain("tomography duration must be positive"));
        }
        Ok(())
    }
}

/// Mean counts of every (probe, analyzer, outcome) setting, in record order.
pub fn expected_counts(chi: &ProcessMatrix, cfg: &TomographyConfig) -> Result<Vec<MeasurementRecord>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(36);
    for probe in Probe::ALL {
        let rho_out = chi.apply_operator(probe.state().density().matrix());
        for analyzer in Analyzer::ALL {
            for outcome in 0..2u8 {
                let proj = analyzer.outcome_state(outcome).amplitudes();
                let p = quadratic_form(&rho_out, &proj).max(0.0);
                let rate = cfg.signal_rate_hz * p + cfg.background_rate_hz / 2.0;
                out.push(MeasurementRecord::new(
                    probe,
                    analyzer,
                    outcome,
                    rate * cfg.duration_per_setting_s,
                    cfg.duration_per_setting_s,
                )?);
            }
        }
    }
    Ok(out)
}

/// Poisson-sampled counts for all 36 settings. Deterministic for a given seed.
pub fn simulate_counts(chi: &ProcessMatrix, cfg: &TomographyConfig) -> Result<Vec<MeasurementRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    expected_counts(chi, cfg)?
        .into_iter()
        .map(|mut r| {
            r.counts = if r.counts > 0.0 {
                Poisson::new(r.counts)
                    .map_err(|e| domain(format!("invalid Poisson mean {}: {e}", r.counts)))?
                    .sample(&mut rng)
            } else {
                0.0
            };
            Ok(r)
        })
        .collect()
}

/// Removes `background_rate/2 × duration` from every record, clamping at zero.
pub fn subtract_background(records: &[MeasurementRecord], background_rate_hz: f64) -> Result<Vec<MeasurementRecord>> {
    if !(background_rate_hz >= 0.0) {
        return Err(domain(format!("background rate must be non-negative, got {background_rate_hz}")));
    }
    Ok(records
        .iter()
        .map(|r| MeasurementRecord {
            counts: (r.counts - background_rate_hz / 2.0 * r.duration_s).max(0.0),
            ..*r
        })
        .collect())
}

fn quadratic_form(m: &ComplexMatrix, psi: &[Complex64; 2]) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            acc += psi[i].conj() * m[(i, j)] * psi[j];
        }
    }
    acc.re
}

/// A single Poisson term of the likelihood.
struct Term {
    probe: usize,
    /// K_ij = ⟨o|O_i ρ_probe O_j†|o⟩, so that p = Re Σ χ_ij K_ij.
    kernel: [Complex64; 16],
    counts: f64,
    duration: f64,
}

struct Likelihood {
    terms: Vec<Term>,
    probe_counts: [f64; 6],
}

impl Likelihood {
    fn new(records: &[MeasurementRecord]) -> Result<Self> {
        check_coverage(records)?;
        let basis = OperatorBasis::standard();
        let mut probe_counts = [0.0; 6];
        let mut terms = Vec::with_capacity(records.len());
        for r in records {
            let rho = r.probe.state().density();
            let proj = r.analyzer.outcome_state(r.outcome).amplitudes();
            let mut kernel = [Complex64::new(0.0, 0.0); 16];
            for i in 0..4 {
                let left = basis.get(i) * rho.matrix();
                for j in 0..4 {
                    let m = &left * &basis.get(j).adjoint();
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..2 {
                        for b in 0..2 {
                            acc += proj[a].conj() * m[(a, b)] * proj[b];
                        }
                    }
                    kernel[4 * i + j] = acc;
                }
            }
            probe_counts[r.probe.index()] += r.counts;
            terms.push(Term {
                probe: r.probe.index(),
                kernel,
                counts: r.counts,
                duration: r.duration_s,
            });
        }
        Ok(Self { terms, probe_counts })
    }

    /// Poisson log-likelihood relative to the saturated model (≤ 0). The
    /// incident flux of each probe is a nuisance parameter, profiled out in
    /// closed form.
    fn evaluate(&self, chi: &ComplexMatrix) -> f64 {
        let chi_flat = chi.entries();
        let probs: Vec<f64> = self
            .terms
            .iter()
            .map(|t| {
                t.kernel
                    .iter()
                    .zip(chi_flat)
                    .map(|(k, c)| c * k)
                    .sum::<Complex64>()
                    .re
                    .max(0.0)
            })
            .collect();
        let mut exposure = [0.0; 6];
        for (t, p) in self.terms.iter().zip(&probs) {
            exposure[t.probe] += p * t.duration;
        }
        let mut ll = 0.0;
        for (t, p) in self.terms.iter().zip(&probs) {
            let flux = if exposure[t.probe] > 0.0 {
                self.probe_counts[t.probe] / exposure[t.probe]
            } else {
                0.0
            };
            let mu = (flux * p).max(RATE_FLOOR_HZ) * t.duration;
            ll -= mu - t.counts;
            if t.counts > 0.0 {
                ll += t.counts * (mu / t.counts).ln();
            }
        }
        ll
    }
}

fn check_coverage(records: &[MeasurementRecord]) -> Result<()> {
    let mut seen = BTreeMap::new();
    for r in records {
        *seen.entry((r.probe, r.analyzer, r.outcome)).or_insert(0usize) += 1;
    }
    for probe in Probe::ALL {
        for analyzer in Analyzer::ALL {
            for outcome in 0..2u8 {
                if !seen.contains_key(&(probe, analyzer, outcome)) {
                    return Err(Error::Reconstruction(format!(
                        "missing setting: probe {probe}, analyzer {analyzer}, outcome {outcome}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Poisson log-likelihood of `records` under `chi`, relative to the
/// saturated model.
pub fn log_likelihood(chi: &ProcessMatrix, records: &[MeasurementRecord]) -> Result<f64> {
    Ok(Likelihood::new(records)?.evaluate(chi.chi()))
}

/// Outcome of a maximum-likelihood reconstruction.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub process: ProcessMatrix,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Maximum-likelihood process matrix for the given records.
pub fn mle_reconstruct(records: &[MeasurementRecord]) -> Result<ProcessMatrix> {
    mle_reconstruct_detailed(records).map(|r| r.process)
}

/// As [`mle_reconstruct`], also returning the likelihood and iteration count.
///
/// χ is parameterized as `L·L†` with `L` lower triangular (16 reals), then
/// mapped onto the trace-preserving set by [`project_trace_preserving`] on
/// every evaluation, so every candidate is a valid channel. The simplex starts
/// from the linear-inversion estimate.
pub fn mle_reconstruct_detailed(records: &[MeasurementRecord]) -> Result<Reconstruction> {
    let likelihood = Likelihood::new(records)?;
    let seed = linear_inversion(records)?;
    // Factor with the dominant basis elements first so the leading columns of
    // L carry most of the weight.
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| seed[(b, b)].re.total_cmp(&seed[(a, a)].re));
    let permuted = ComplexMatrix::from_fn(4, |i, j| seed[(order[i], order[j])]);
    let x0 = cholesky_parameters(&permuted)
        .ok_or_else(|| Error::Reconstruction("linear-inversion seed is not positive definite".into()))?;
    let mut inverse = [0; 4];
    for (k, &o) in order.iter().enumerate() {
        inverse[o] = k;
    }
    let chi_of = |x: &[f64]| {
        let m = lower_product(x);
        ComplexMatrix::from_fn(4, |i, j| m[(inverse[i], inverse[j])])
    };

    let mut objective = |x: &[f64]| match project_trace_preserving(&chi_of(x)) {
        Some(chi) => -likelihood.evaluate(&chi),
        None => f64::INFINITY,
    };
    let opts = SimplexOptions {
        step: 0.02,
        f_tolerance: MLE_TOLERANCE,
        max_iterations: MLE_MAX_ITERATIONS,
    };
    let result = nelder_mead_restarting(&mut objective, &x0, opts);
    if !result.converged {
        return Err(Error::NonConvergence {
            iterations: result.iterations,
            gradient_norm: gradient_norm(&mut objective, &result.x),
        });
    }
    let chi = project_trace_preserving(&chi_of(&result.x))
        .ok_or_else(|| Error::Reconstruction("optimizer ended on a singular channel".into()))?;
    let process = ProcessMatrix::new(chi.hermitian_part())?;
    Ok(Reconstruction {
        log_likelihood: likelihood.evaluate(process.chi()),
        process,
        iterations: result.iterations,
    })
}

/// Linear-inversion estimate of χ: output Bloch vectors per probe, the
/// channel's action on matrix units, then the process matrix, made positive
/// definite and trace preserving.
fn linear_inversion(records: &[MeasurementRecord]) -> Result<ComplexMatrix> {
    let mut tallies: BTreeMap<(Probe, Analyzer), [f64; 2]> = BTreeMap::new();
    for r in records {
        tallies.entry((r.probe, r.analyzer)).or_insert([0.0; 2])[r.outcome as usize] += r.counts / r.duration_s;
    }
    let contrast = |p: Probe, a: Analyzer| {
        let n = tallies.get(&(p, a)).copied().unwrap_or([0.0; 2]);
        let total = n[0] + n[1];
        if total > 0.0 {
            (n[0] - n[1]) / total
        } else {
            0.0
        }
    };
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let output = |p: Probe| {
        let (sz, sx, sy) = (contrast(p, Analyzer::HV), contrast(p, Analyzer::DA), contrast(p, Analyzer::RL));
        ComplexMatrix::from_rows(&[
            vec![c((1.0 + sz) / 2.0, 0.0), c(sx / 2.0, -sy / 2.0)],
            vec![c(sx / 2.0, sy / 2.0), c((1.0 - sz) / 2.0, 0.0)],
        ])
        .unwrap()
    };
    let hh = output(Probe::H);
    let vv = output(Probe::V);
    let da = &output(Probe::D) - &output(Probe::A);
    let rl = &output(Probe::R) - &output(Probe::L);
    let i = c(0.0, 1.0);
    let hv = (&da + &rl.scale(i)).scale_real(0.5);
    let vh = (&da - &rl.scale(i)).scale_real(0.5);
    let images = [hh, hv, vh, vv];

    let chi = chi_of_linear_map(|m| {
        let mut out = ComplexMatrix::zeros(2);
        for (k, img) in images.iter().enumerate() {
            out = &out + &img.scale(m[(k / 2, k % 2)]);
        }
        out
    });

    // Clip to a strictly positive spectrum and mix in a trace of the
    // depolarizing channel so the Cholesky seed exists.
    let clipped = chi.hermitian_function(|x| x.max(0.0));
    let tr = clipped.trace().re.max(1e-12);
    let mixed = &clipped.scale_real(0.999 / tr) + &ComplexMatrix::identity(4).scale_real(0.001 / 4.0);
    project_trace_preserving(&mixed)
        .ok_or_else(|| Error::Reconstruction("linear-inversion estimate is singular".into()))
}

/// `L·L†` for the 16-parameter lower-triangular `L`: four real diagonal
/// entries followed by (re, im) pairs of the strictly-lower entries in row order.
fn lower_product(x: &[f64]) -> ComplexMatrix {
    let l = lower_from_parameters(x);
    &l * &l.adjoint()
}

fn lower_from_parameters(x: &[f64]) -> ComplexMatrix {
    let mut l = ComplexMatrix::zeros(4);
    for i in 0..4 {
        l[(i, i)] = Complex64::new(x[i], 0.0);
    }
    let mut k = 4;
    for i in 1..4 {
        for j in 0..i {
            l[(i, j)] = Complex64::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    l
}

/// Cholesky factor parameters of a Hermitian positive definite matrix.
fn cholesky_parameters(m: &ComplexMatrix) -> Option<Vec<f64>> {
    let n = 4;
    let mut l = ComplexMatrix::zeros(n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    let mut x: Vec<f64> = (0..4).map(|i| l[(i, i)].re).collect();
    for i in 1..4 {
        for j in 0..i {
            x.push(l[(i, j)].re);
            x.push(l[(i, j)].im);
        }
    }
    Some(x)
}

/// χ₁₁, the identity-process weight of the channel.
pub fn process_identity_fidelity(chi: &ProcessMatrix) -> f64 {
    chi.identity_weight()
}

/// Best identity weight reachable by following the channel with a unitary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitaryAlignment {
    pub value: f64,
    /// (θ, φ, λ) of the correcting unitary Rz(φ)·Ry(θ)·Rz(λ).
    pub angles: [f64; 3],
}

pub const GRID_THETA: usize = 13;
pub const GRID_PHI: usize = 25;
pub const GRID_LAMBDA: usize = 25;

/// χ′₁₁ of ρ ↦ U ε(ρ) U†, which is `a·χ·a†` with `a_i = Tr(U O_i)/2`.
pub fn identity_weight_after_unitary(chi: &ProcessMatrix, angles: [f64; 3]) -> f64 {
    let u = unitary_from_angles(angles[0], angles[1], angles[2]);
    let basis = OperatorBasis::standard();
    let a: [Complex64; 4] = std::array::from_fn(|i| (&u * basis.get(i)).trace() * 0.5);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            acc += a[i] * chi.element(i, j) * a[j].conj();
        }
    }
    acc.re
}

/// Maximizes χ′₁₁ over unitaries applied after the channel: a 13×25×25 grid
/// over θ ∈ [0, π], φ, λ ∈ [0, 2π), then simplex refinement from the best node.
pub fn max_identity_over_unitaries(chi: &ProcessMatrix) -> UnitaryAlignment {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut best = ([0.0; 3], identity_weight_after_unitary(chi, [0.0; 3]));
    for i in 0..GRID_THETA {
        let theta = std::f64::consts::PI * i as f64 / (GRID_THETA - 1) as f64;
        for j in 0..GRID_PHI {
            let phi = two_pi * j as f64 / GRID_PHI as f64;
            for k in 0..GRID_LAMBDA {
                let lam = two_pi * k as f64 / GRID_LAMBDA as f64;
                let v = identity_weight_after_unitary(chi, [theta, phi, lam]);
                if v > best.1 {
                    best = ([theta, phi, lam], v);
                }
            }
        }
    }
    let mut f = |x: &[f64]| -identity_weight_after_unitary(chi, [x[0], x[1], x[2]]);
    let refined = nelder_mead(
        &mut f,
        &best.0,
        SimplexOptions {
            step: std::f64::consts::PI / GRID_PHI as f64,
            f_tolerance: 1e-14,
            max_iterations: 5_000,
        },
    );
    let (angles, value) = if -refined.value > best.1 {
        ([refined.x[0], refined.x[1], refined.x[2]], -refined.value)
    } else {
        best
    };
    UnitaryAlignment {
        value: value.clamp(0.0, 1.0),
        angles: angles.map(|a| a.rem_euclid(two_pi)),
    }
}

fn format_counts(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{c:.0}")
    } else {
        format!("{c}")
    }
}

/// Writes records as `probe,analyzer,outcome,counts,duration_s`.
pub fn write_records_csv<W: Write>(records: &[MeasurementRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.probe.to_string(),
            r.analyzer.to_string(),
            r.outcome.to_string(),
            format_counts(r.counts),
            format!("{}", r.duration_s),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Reads the CSV written by [`write_records_csv`]; errors carry line numbers.
pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<MeasurementRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Format(format!("line 1: {e}")))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Format(format!(
            "line 1: expected header `{}`",
            CSV_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Format(e.to_string()))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let at = |e: Error| Error::Format(format!("line {line}: {e}"));
        let field = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("line {line}: cannot parse {} \"{}\"", CSV_HEADER[i], field(i))))
        };
        let outcome: u8 = field(2)
            .parse()
            .map_err(|_| Error::Format(format!("line {line}: cannot parse outcome \"{}\"", field(2))))?;
        out.push(
            MeasurementRecord::new(
                field(0).parse().map_err(at)?,
                field(1).parse().map_err(at)?,
                outcome,
                num(3)?,
                num(4)?,
            )
            .map_err(at)?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(signal: f64, background: f64, seed: u64) -> TomographyConfig {
        TomographyConfig {
            signal_rate_hz: signal,
            background_rate_hz: background,
            duration_per_setting_s: 1.0,
            rng_seed: seed,
        }
    }

    #[test]
    fn probe_pairs_are_orthogonal() {
        let set = ProbeSet::standard();
        for (a, b) in [(Probe::H, Probe::V), (Probe::D, Probe::A), (Probe::R, Probe::L)] {
            let (x, y) = (set.state(a).amplitudes(), set.state(b).amplitudes());
            let ip = x[0].conj() * y[0] + x[1].conj() * y[1];
            assert!(ip.norm() < 1e-15);
        }
    }

    #[test]
    fn identity_channel_h_probe_counts_all_land_in_h() {
        let means = expected_counts(&ProcessMatrix::identity(), &cfg(1e5, 0.0, 1)).unwrap();
        let h_hv: Vec<_> = means
            .iter()
            .filter(|r| r.probe == Probe::H && r.analyzer == Analyzer::HV)
            .collect();
        assert!((h_hv[0].counts - 1e5).abs() < 1e-9);
        assert!(h_hv[1].counts.abs() < 1e-9);
        let sim = simulate_counts(&ProcessMatrix::identity(), &cfg(1e5, 0.0, 1)).unwrap();
        let r = sim.iter().find(|r| r.probe == Probe::H && r.analyzer == Analyzer::HV && r.outcome == 1).unwrap();
        assert_eq!(r.counts, 0.0);
    }

    #[test]
    fn depolarizing_channel_has_flat_means() {
        let means = expected_counts(&ProcessMatrix::depolarizing(0.0).unwrap(), &cfg(800.0, 60.0, 0)).unwrap();
        assert_eq!(means.len(), 36);
        for r in means {
            assert!((r.counts - (400.0 + 30.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let chi = ProcessMatrix::depolarizing(0.5).unwrap();
        let a = simulate_counts(&chi, &cfg(1e4, 10.0, 42)).unwrap();
        let b = simulate_counts(&chi, &cfg(1e4, 10.0, 42)).unwrap();
        let c = simulate_counts(&chi, &cfg(1e4, 10.0, 43)).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_records_csv(&a, &mut ba).unwrap();
        write_records_csv(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_ne!(a, c);
    }

    #[test]
    fn background_subtraction_arithmetic() {
        let r = MeasurementRecord::new(Probe::H, Analyzer::HV, 0, 100.0, 2.0).unwrap();
        assert_eq!(subtract_background(&[r], 0.0).unwrap()[0], r);
        assert_eq!(subtract_background(&[r], 10.0).unwrap()[0].counts, 90.0);
        let small = MeasurementRecord { counts: 3.0, duration_s: 1.0, ..r };
        assert_eq!(subtract_background(&[small], 20.0).unwrap()[0].counts, 0.0);
        assert!(subtract_background(&[r], -1.0).is_err());
    }

    #[test]
    fn record_validation() {
        assert!(MeasurementRecord::new(Probe::H, Analyzer::HV, 2, 1.0, 1.0).is_err());
        assert!(MeasurementRecord::new(Probe::H, Analyzer::HV, 0, -1.0, 1.0).is_err());
        assert!(MeasurementRecord::new(Probe::H, Analyzer::HV, 0, 1.0, 0.0).is_err());
    }

    #[test]
    fn reconstruction_requires_every_setting() {
        let mut recs = simulate_counts(&ProcessMatrix::identity(), &cfg(1e4, 0.0, 3)).unwrap();
        recs.remove(17);
        match mle_reconstruct(&recs) {
            Err(Error::Reconstruction(msg)) => assert!(msg.contains("missing setting")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn noiseless_identity_recovery() {
        let recs = expected_counts(&ProcessMatrix::identity(), &cfg(1e5, 0.0, 0)).unwrap();
        let chi = mle_reconstruct(&recs).unwrap();
        assert!(process_identity_fidelity(&chi) >= 0.999, "{chi:?}");
    }

    #[test]
    fn noiseless_x_recovery() {
        let x = ProcessMatrix::basis_conjugation(2).unwrap();
        let recs = expected_counts(&x, &cfg(1e5, 0.0, 0)).unwrap();
        let chi = mle_reconstruct(&recs).unwrap();
        assert!(chi.element(2, 2).re >= 0.999, "{chi:?}");
    }

    #[test]
    fn depolarizing_round_trip_identity_weight() {
        let truth = ProcessMatrix::depolarizing(0.9).unwrap();
        let recs = simulate_counts(&truth, &cfg(1e5, 0.0, 11)).unwrap();
        let chi = mle_reconstruct(&recs).unwrap();
        assert!((chi.identity_weight() - 0.925).abs() < 0.01);
    }

    #[test]
    fn linear_inversion_is_exact_on_noiseless_data() {
        let truth = ProcessMatrix::from_unitary(&unitary_from_angles(0.4, 1.0, 2.0))
            .unwrap()
            .then(&ProcessMatrix::depolarizing(0.8).unwrap())
            .unwrap();
        let recs = expected_counts(&truth, &cfg(1e5, 0.0, 0)).unwrap();
        let seed = linear_inversion(&recs).unwrap();
        assert!(seed.max_abs_diff(truth.chi()) < 2e-3);
    }

    #[test]
    fn cholesky_parameters_round_trip() {
        let m = ProcessMatrix::depolarizing(0.3).unwrap().chi().clone();
        let x = cholesky_parameters(&m).unwrap();
        assert!(lower_product(&x).max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn unitary_search_on_fixed_unitary_channel() {
        let v = unitary_from_angles(1.2, 0.4, 4.0);
        let chi = ProcessMatrix::from_unitary(&v).unwrap();
        let found = max_identity_over_unitaries(&chi);
        assert!(found.value >= 0.999, "{found:?}");
    }

    #[test]
    fn unitary_search_on_identity_stays_at_origin() {
        let found = max_identity_over_unitaries(&ProcessMatrix::identity());
        assert!((found.value - 1.0).abs() < 1e-12);
        let u = unitary_from_angles(found.angles[0], found.angles[1], found.angles[2]);
        assert!(crate::quantum::same_up_to_phase(&u, &ComplexMatrix::identity(2), 1e-9));
    }

    #[test]
    fn unitary_search_cannot_improve_depolarizing() {
        for w in [0.2, 0.6, 0.95] {
            let found = max_identity_over_unitaries(&ProcessMatrix::depolarizing(w).unwrap());
            assert!((found.value - (1.0 + 3.0 * w) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let recs = simulate_counts(&ProcessMatrix::depolarizing(0.4).unwrap(), &cfg(500.0, 5.0, 9)).unwrap();
        let corrected = subtract_background(&recs, 5.0).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&corrected, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("probe,analyzer,outcome,counts,duration_s\n"));
        assert_eq!(read_records_csv(buf.as_slice()).unwrap(), corrected);

        let bad = "probe,analyzer,outcome,counts,duration_s\nH,HV,0,10,1\nQ,HV,0,1,1\n";
        let err = read_records_csv(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let bad_header = "probe,analyser,outcome,counts,duration_s\n";
        assert!(read_records_csv(bad_header.as_bytes()).is_err());
    }
}
