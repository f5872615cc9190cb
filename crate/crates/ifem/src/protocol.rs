//! The qubit-coupled k-electron measurement process and its estimators.
//!
//! A charge qubit starts in (|0>+|1>)/sqrt(2). Each of k probe electrons
//! entangles with the qubit and, after its detection, leaves the relative
//! phase advanced by e^{i(dphi + err)}: dphi is the signal (the specimen
//! phase difference between the two probe positions) and err is the
//! uncompensable residual of that electron's error channels. After k
//! electrons the qubit is read out in the +/- basis, landing "left" with
//! probability
//!
//! ```text
//! P_left = (1 + sin(k dphi + phi_tot)) / 2,
//! ```
//!
//! so one readout carries k electrons' worth of phase. Two error channels
//! act per electron:
//!
//! * **destructive** (probability `p_fail`): high-angle elastic scattering
//!   or inner-shell ionization destroys the which-path coherence; the
//!   process is spoiled and its readout is a fair coin.
//! * **plasmon** (probability `p_inel`): a bulk plasmon loss kicks the
//!   electron by theta_A (the Lorentzian angular law in [`crate::inelastic`])
//!   and adds the wedge-prism phase err = k_wave d01' theta_A^2 cos(chi),
//!   chi the kick azimuth. The kick is not heralded, so it accumulates in
//!   phi_tot rather than spoiling the readout.
//!
//! Estimating dphi from n readouts of depth k gives standard error
//! 1/(k sqrt(n)): k times better than k n independent single-electron
//! readouts at the same electron dose N = k n. Destructive events tax this
//! as e^{k p_d}, making the depth a budget decision with optimum
//! k_m = 1/p_d and net contrast gain sqrt(k_m/e) over the unentangled
//! protocol; [`optimal_k`] and [`minimize_var_integer_k`] expose both the
//! closed form and the direct integer scan.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::inelastic::{self, InelasticModel};
use crate::kinematics::BeamParameters;
use crate::rng::Xoshiro256StarStar;
use crate::{Error, Result};

/// Tolerance on |c0|^2 + |c1|^2 = 1 accepted by state constructors and
/// guaranteed after every update.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Default axial separation d01' of the two probe regions in nm.
pub const DEFAULT_D01_NM: f64 = 30.0;

/// Default plasmon energy loss in eV (bulk plasmon of vitreous ice).
pub const DEFAULT_PLASMON_ENERGY_EV: f64 = 20.0;

/// Charge-qubit state c0|0> + c1|1>.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpbState {
    pub c0: Complex64,
    pub c1: Complex64,
}

impl CpbState {
    /// The process starting point (|0> + |1>)/sqrt(2).
    pub fn equal_superposition() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        CpbState { c0: a, c1: a }
    }

    /// Wrap amplitudes, requiring normalization within [`NORM_TOLERANCE`].
    pub fn new(c0: Complex64, c1: Complex64) -> Result<Self> {
        let state = CpbState { c0, c1 };
        let err = (state.norm_sqr() - 1.0).abs();
        if !(err <= NORM_TOLERANCE) {
            return Err(Error::Domain(format!(
                "qubit state must be normalized: |c0|^2 + |c1|^2 differs from 1 by {err:.3e}"
            )));
        }
        Ok(state)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    /// Readout probability in the +/- basis,
    /// P_left = (1 + 2 Im(conj(c0) c1))/2; for the equal superposition with
    /// relative phase phi this is (1 + sin phi)/2.
    pub fn p_left(&self) -> f64 {
        let cross = (self.c0.conj() * self.c1).im;
        (0.5 + cross).clamp(0.0, 1.0)
    }
}

/// Advance the qubit by one detected electron: c1 picks up
/// e^{i(dphi + injected_error)}, c0 is untouched (the compensable part of
/// the electron's phase is assumed already corrected away; the argument is
/// precisely the uncompensable residual).
pub fn single_electron_update(state: &CpbState, dphi: f64, injected_error: f64) -> CpbState {
    let phase = dphi + injected_error;
    let c1 = if phase == 0.0 {
        state.c1
    } else {
        state.c1 * Complex64::cis(phase)
    };
    CpbState { c0: state.c0, c1 }
}

/// What a spoiled process contributes to the record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailurePolicy {
    /// Keep spoiled readouts; decoherence has already made them fair coins.
    /// This is the default: the experimenter need not know which processes
    /// failed.
    Randomize,
    /// Drop spoiled readouts from the estimator (their dose is still
    /// spent); requires heralding every destructive event.
    Discard,
}

impl fmt::Display for FailurePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailurePolicy::Randomize => "randomize",
            FailurePolicy::Discard => "discard",
        })
    }
}

impl FromStr for FailurePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "randomize" => Ok(FailurePolicy::Randomize),
            "discard" => Ok(FailurePolicy::Discard),
            other => Err(Error::Config(format!(
                "unknown failure policy {other:?}; expected randomize or discard"
            ))),
        }
    }
}

/// Per-electron error channels of the k-electron process.
#[derive(Debug, Clone, Copy)]
pub struct ErrorModel {
    /// Destructive-event probability per electron (high-angle elastic plus
    /// inner-shell aggregate).
    pub p_fail: f64,
    /// Plasmon-event probability per electron.
    pub p_inel: f64,
    /// Axial probe separation d01' in nm feeding the wedge-prism phase.
    pub d01: f64,
    /// How spoiled processes enter the estimator.
    pub policy: FailurePolicy,
    beam: BeamParameters,
    inelastic: InelasticModel,
}

impl ErrorModel {
    /// Build a model; probabilities must be in [0, 1] with
    /// p_fail + p_inel <= 1 (each electron suffers at most one fate in the
    /// aggregated budget), d01' positive, plasmon energy positive.
    pub fn new(
        beam: &BeamParameters,
        p_fail: f64,
        p_inel: f64,
        d01_nm: f64,
        plasmon_energy_ev: f64,
        policy: FailurePolicy,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_fail) {
            return Err(Error::Domain(format!(
                "destructive probability must lie in [0, 1], got {p_fail}"
            )));
        }
        if !(0.0..=1.0).contains(&p_inel) {
            return Err(Error::Domain(format!(
                "plasmon probability must lie in [0, 1], got {p_inel}"
            )));
        }
        if p_fail + p_inel > 1.0 {
            return Err(Error::Domain(format!(
                "p_fail + p_inel = {} exceeds 1",
                p_fail + p_inel
            )));
        }
        if !(d01_nm > 0.0) || !d01_nm.is_finite() {
            return Err(Error::Domain(format!(
                "probe separation d01' must be positive and finite, got {d01_nm}"
            )));
        }
        let inelastic = InelasticModel::new(beam, plasmon_energy_ev, p_inel)?;
        Ok(ErrorModel {
            p_fail,
            p_inel,
            d01: d01_nm,
            policy,
            beam: *beam,
            inelastic,
        })
    }

    /// Both channels off; useful as the ideal-protocol baseline.
    pub fn error_free(beam: &BeamParameters) -> Self {
        ErrorModel::new(
            beam,
            0.0,
            0.0,
            DEFAULT_D01_NM,
            DEFAULT_PLASMON_ENERGY_EV,
            FailurePolicy::Randomize,
        )
        .expect("zero-error model parameters are valid")
    }

    pub fn beam(&self) -> &BeamParameters {
        &self.beam
    }

    pub fn inelastic(&self) -> &InelasticModel {
        &self.inelastic
    }
}

/// Qubit readout basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Readout {
    Left,
    Right,
}

/// Record of one k-electron process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessOutcome {
    pub readout: Readout,
    /// True iff at least one destructive event occurred.
    pub spoiled: bool,
    /// Total uncompensated plasmon phase phi_tot in rad.
    pub accumulated_error: f64,
    /// Number of plasmon events among the k electrons.
    pub inelastic_count: u32,
}

/// Run one k-electron process, drawing from `rng`.
///
/// Per electron, in fixed draw order: the destructive channel (one uniform,
/// only if p_fail > 0), then the plasmon channel (one uniform, only if
/// p_inel > 0; on a hit, one uniform for the angle and one for the azimuth).
/// Channels with zero probability consume no randomness, so an error-free
/// run uses exactly one draw, the readout. A destructive event latches
/// `spoiled` but the process always completes all k electrons (the
/// experimenter cannot abort what is not heralded); a spoiled readout is a
/// fair coin, otherwise left lands with probability
/// (1 + sin(k dphi + phi_tot))/2.
pub fn k_electron_process(
    k: u32,
    dphi: f64,
    em: &ErrorModel,
    rng: &mut Xoshiro256StarStar,
) -> ProcessOutcome {
    debug_assert!(k >= 1, "a process needs at least one electron");
    let mut state = CpbState::equal_superposition();
    // The error-free rotation is the same for every electron; cis is worth
    // hoisting out of the hot loop (and skipping outright when dphi = 0,
    // which multiplies by exactly 1 + 0i).
    let clean_rotation = if dphi == 0.0 {
        None
    } else {
        Some(Complex64::cis(dphi))
    };
    let mut spoiled = false;
    let mut accumulated_error = 0.0;
    let mut inelastic_count = 0u32;
    for _ in 0..k {
        if em.p_fail > 0.0 && rng.next_f64() < em.p_fail {
            spoiled = true;
        }
        let mut err = 0.0;
        if em.p_inel > 0.0 && rng.next_f64() < em.p_inel {
            let theta_a = inelastic::sample_angle(&em.inelastic, rng.next_f64());
            let chi = 2.0 * PI * rng.next_f64();
            err = inelastic::phase_error_diverging(&em.beam, em.d01, theta_a, chi);
            accumulated_error += err;
            inelastic_count += 1;
        }
        state = if err != 0.0 {
            single_electron_update(&state, dphi, err)
        } else if let Some(rot) = clean_rotation {
            CpbState {
                c0: state.c0,
                c1: state.c1 * rot,
            }
        } else {
            state
        };
        debug_assert!((state.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE);
    }
    let p_left = if spoiled { 0.5 } else { state.p_left() };
    let readout = if rng.next_f64() < p_left {
        Readout::Left
    } else {
        Readout::Right
    };
    ProcessOutcome {
        readout,
        spoiled,
        accumulated_error,
        inelastic_count,
    }
}

/// Run `count` independent processes; process i draws from the stream
/// (seed, i), so the batch is reproducible bit for bit regardless of how
/// rayon schedules it (outcomes are collected in process order).
pub fn run_processes(
    count: usize,
    k: u32,
    dphi: f64,
    em: &ErrorModel,
    seed: u64,
) -> Vec<ProcessOutcome> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = Xoshiro256StarStar::stream(seed, i);
            k_electron_process(k, dphi, em, &mut rng)
        })
        .collect()
}

/// The outcomes the estimator may use under `policy`: all of them when
/// spoiled readouts are randomized, only unspoiled ones when discarding.
pub fn usable_outcomes(outcomes: &[ProcessOutcome], policy: FailurePolicy) -> Vec<ProcessOutcome> {
    match policy {
        FailurePolicy::Randomize => outcomes.to_vec(),
        FailurePolicy::Discard => outcomes.iter().copied().filter(|o| !o.spoiled).collect(),
    }
}

/// Phase estimator applied to the left-count of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Estimator {
    /// dphi_hat = (2X/n - 1)/k, the small-angle linearization; biased by
    /// sin once k dphi is no longer small.
    Linear,
    /// dphi_hat = asin(2X/n - 1)/k, exact inversion of the readout law on
    /// its principal branch. The default.
    Arcsine,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Linear => "linear",
            Estimator::Arcsine => "arcsine",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Estimator::Linear),
            "arcsine" => Ok(Estimator::Arcsine),
            other => Err(Error::Config(format!(
                "unknown estimator {other:?}; expected linear or arcsine"
            ))),
        }
    }
}

/// Estimate dphi from usable outcomes of depth-k processes; returns
/// (dphi_hat, stderr) in rad.
///
/// With X lefts among n outcomes and s = 2X/n - 1: linear gives s/k with
/// the delta-method error 2 sqrt(p(1-p)/n)/k; arcsine gives
/// asin(clamp(s))/k, whose propagated error is exactly 1/(k sqrt(n)) (the
/// arcsine is the variance-stabilizing transform of the binomial, so the
/// p-dependence cancels). Pass the output of [`usable_outcomes`]; an empty
/// slice is the zero-usable-outcomes error.
pub fn estimate_phase(
    outcomes: &[ProcessOutcome],
    k: u32,
    estimator: Estimator,
) -> Result<(f64, f64)> {
    if outcomes.is_empty() {
        return Err(Error::Estimation(
            "zero usable outcomes: every process was spoiled and discarded".into(),
        ));
    }
    if k == 0 {
        return Err(Error::Domain("process depth k must be at least 1".into()));
    }
    let n = outcomes.len() as f64;
    let x = outcomes
        .iter()
        .filter(|o| o.readout == Readout::Left)
        .count() as f64;
    let p = x / n;
    let s = 2.0 * p - 1.0;
    let kf = f64::from(k);
    match estimator {
        Estimator::Linear => {
            let stderr = 2.0 * (p * (1.0 - p) / n).sqrt() / kf;
            Ok((s / kf, stderr))
        }
        Estimator::Arcsine => {
            let estimate = s.clamp(-1.0, 1.0).asin() / kf;
            Ok((estimate, 1.0 / (kf * n.sqrt())))
        }
    }
}

/// Loss-optimal process depth for destructive probability p_d:
/// k_m = round(1/p_d), with the net contrast gain sqrt(k_m/e) over the
/// unentangled protocol at equal dose.
pub fn optimal_k(p_d: f64) -> (u64, f64) {
    debug_assert!(
        p_d > 0.0 && p_d < 1.0,
        "destructive probability must lie in (0, 1), got {p_d}"
    );
    let k_m = (1.0 / p_d).round() as u64;
    (k_m, (k_m as f64 / E).sqrt())
}

/// Direct integer minimizer of the dose-normalized variance factor
/// e^{k p_d}/k; agrees with round(1/p_d) to within 1 and exists as an
/// independent check of the closed form.
pub fn minimize_var_integer_k(p_d: f64) -> u64 {
    debug_assert!(
        p_d > 0.0 && p_d < 1.0,
        "destructive probability must lie in (0, 1), got {p_d}"
    );
    // e^{k p}/k is unimodal in k with its continuum minimum at 1/p; scanning
    // past 2/p safely brackets the integer minimum.
    let hi = (2.0 / p_d).ceil() as u64 + 1;
    let mut best_k = 1u64;
    let mut best = f64::INFINITY;
    for k in 1..=hi {
        let v = (k as f64 * p_d).exp() / k as f64;
        if v < best {
            best = v;
            best_k = k;
        }
    }
    best_k
}
