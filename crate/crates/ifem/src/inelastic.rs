//! Plasmon (bulk inelastic) scattering statistics and phase errors.
//!
//! Angular law: the double-differential inelastic cross section behaves as
//! a Lorentzian in angle, dP/dθ ∝ θ/(θ² + θ_E²), with the characteristic
//! angle θ_E = E/(γm₀v²) and a Bethe-ridge cutoff θ_cut = √(2θ_E). On
//! [0, θ_cut] the normalized cumulative fraction is
//!
//!   f(θ) = ln(1 + (θ/θ_E)²) / ln(1 + (θ_cut/θ_E)²),
//!
//! inverted exactly for inverse-transform sampling. At 300 keV and
//! E = 20 eV this gives θ_E ≈ 41 μrad, θ_cut ≈ 9.0 mrad and a median
//! scattering angle of about 0.61 mrad.
//!
//! Phase errors: a plasmon kick δθ tilts the scattered wave, acting like a
//! weak wedge prism. For two side-by-side probe regions separated by d₀₁
//! the first-order path difference gives φ = k·d₀₁·δθ. For two regions
//! separated along the axis by d′₀₁ (the diverging-probe geometry) the
//! first-order term cancels and the error is second order,
//! φ_err = k·d′₀₁·δθ²·cosχ with χ the azimuth between kick and separation;
//! the azimuth-free magnitude is k·d′₀₁·δθ²/2.
//!
//! Delocalization: the inelastic interaction is nonlocal with a
//! square-root point-spread amplitude ∝ e^{−r/b_max}/r, b_max = 1/(kθ_E).
//!
//! The plasmon itself is modeled as a ring of N coupled oscillators
//! (nearest-neighbor coupling C, on-site restoring force C′, mass m) whose
//! normal modes obey ω_k² = [2C(1 − cos ka) + C′]/m. In the weak-coupling
//! regime a bare single-site excitation nearly coincides with a plasmon
//! mode; the overlap quantifies how good that identification is.

use crate::kinematics::BeamParameters;
use crate::linalg;
use crate::{Error, Result};

/// Angular model of a single plasmon loss channel.
#[derive(Debug, Clone, Copy)]
pub struct InelasticModel {
    /// Characteristic angle θ_E = E/(γm₀v²), rad.
    pub theta_e: f64,
    /// Bethe-ridge cutoff θ_cut = √(2θ_E), rad.
    pub theta_cut: f64,
    /// Energy loss E, eV.
    pub energy_loss_ev: f64,
    /// Probability of plasmon excitation per beam electron.
    pub p_inel: f64,
    /// Delocalization radius b_max = 1/(kθ_E), nm.
    pub b_max: f64,
}

impl InelasticModel {
    pub fn new(beam: &BeamParameters, energy_loss_ev: f64, p_inel: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_inel) {
            return Err(Error::Domain(format!(
                "plasmon probability must lie in [0, 1], got {p_inel}"
            )));
        }
        let theta_e = crate::kinematics::characteristic_inelastic_angle(beam, energy_loss_ev)?;
        let theta_cut = (2.0 * theta_e).sqrt();
        let b_max = 1.0 / (beam.wavenumber_k * theta_e);
        Ok(Self { theta_e, theta_cut, energy_loss_ev, p_inel, b_max })
    }

    /// Log-normalization L = ln(1 + (θ_cut/θ_E)²) of the angular law.
    fn log_norm(&self) -> f64 {
        (1.0 + (self.theta_cut / self.theta_e).powi(2)).ln()
    }

    /// Closed-form mean of the sampled angle,
    /// E[θ] = (2/L)(θ_cut − θ_E·atan(θ_cut/θ_E)).
    pub fn mean_angle(&self) -> f64 {
        let l = self.log_norm();
        2.0 / l * (self.theta_cut - self.theta_e * (self.theta_cut / self.theta_e).atan())
    }

    /// Closed-form median, the f = 1/2 point of the angular fraction.
    pub fn median_angle(&self) -> f64 {
        let r2 = (self.theta_cut / self.theta_e).powi(2);
        self.theta_e * ((1.0 + r2).sqrt() - 1.0).sqrt()
    }
}

/// Cumulative fraction of inelastic events scattered within θ_A.
pub fn angular_fraction(model: &InelasticModel, theta_a: f64) -> Result<f64> {
    if !(theta_a >= 0.0) || theta_a > model.theta_cut {
        return Err(Error::Domain(format!(
            "angle {theta_a} outside the angular law's support [0, {}]",
            model.theta_cut
        )));
    }
    Ok((1.0 + (theta_a / model.theta_e).powi(2)).ln() / model.log_norm())
}

/// Inverse-transform sample of the plasmon scattering angle:
/// θ = θ_E·√((1 + (θ_cut/θ_E)²)^u − 1) for u uniform in [0, 1).
pub fn sample_angle(model: &InelasticModel, u: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&u), "u = {u} outside [0, 1)");
    let base = 1.0 + (model.theta_cut / model.theta_e).powi(2);
    model.theta_e * (base.powf(u) - 1.0).sqrt()
}

/// First-order wedge-prism phase error for side-by-side probe regions
/// separated by d₀₁: φ = k·d₀₁·δθ.
pub fn phase_error_focused(beam: &BeamParameters, d01_nm: f64, delta_theta: f64) -> f64 {
    debug_assert!(d01_nm > 0.0, "d01 = {d01_nm} must be positive");
    beam.wavenumber_k * d01_nm * delta_theta
}

/// Second-order phase error for axially separated probe regions at
/// distance d′₀₁: φ_err = k·d′₀₁·δθ²·cosχ, χ the kick azimuth.
pub fn phase_error_diverging(
    beam: &BeamParameters,
    d01_prime_nm: f64,
    delta_theta: f64,
    chi: f64,
) -> f64 {
    debug_assert!(d01_prime_nm > 0.0, "d01' = {d01_prime_nm} must be positive");
    beam.wavenumber_k * d01_prime_nm * delta_theta * delta_theta * chi.cos()
}

/// Azimuth-free magnitude of the second-order phase error,
/// k·d′₀₁·δθ²/2 (the path-difference form).
pub fn phase_error_diverging_magnitude(
    beam: &BeamParameters,
    d01_prime_nm: f64,
    delta_theta: f64,
) -> f64 {
    debug_assert!(d01_prime_nm > 0.0, "d01' = {d01_prime_nm} must be positive");
    beam.wavenumber_k * d01_prime_nm * delta_theta * delta_theta / 2.0
}

/// Square-root point-spread amplitude of the delocalized inelastic
/// interaction, e^{−r/b_max}/r (unnormalized).
pub fn delocalization_psf(model: &InelasticModel, r_nm: f64) -> Result<f64> {
    if !(r_nm > 0.0) {
        return Err(Error::Domain(format!(
            "delocalization PSF has a pole at r = 0; got r = {r_nm} nm"
        )));
    }
    Ok((-r_nm / model.b_max).exp() / r_nm)
}

/// Ring of N oscillators carrying the plasmon toy model.
#[derive(Debug, Clone, Copy)]
pub struct PlasmonChain {
    /// Site count.
    pub n: usize,
    /// Lattice spacing (sets the mode wavenumbers k_n = 2πn/(Na)).
    pub a: f64,
    /// Nearest-neighbor coupling.
    pub c: f64,
    /// On-site restoring constant.
    pub c_prime: f64,
    /// Oscillator mass.
    pub m: f64,
}

impl PlasmonChain {
    pub fn new(n: usize, a: f64, c: f64, c_prime: f64, m: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("chain needs at least 2 sites, got {n}")));
        }
        if !(a > 0.0) {
            return Err(Error::Domain(format!("lattice spacing must be positive, got {a}")));
        }
        if !(c >= 0.0) {
            return Err(Error::Domain(format!("coupling C must be non-negative, got {c}")));
        }
        if !(c_prime > 0.0) {
            return Err(Error::Domain(format!(
                "on-site constant C' must be positive, got {c_prime}"
            )));
        }
        if !(m > 0.0) {
            return Err(Error::Domain(format!("mass must be positive, got {m}")));
        }
        Ok(Self { n, a, c, c_prime, m })
    }

    /// Bare single-site frequency ω_b = √(C′/m).
    pub fn bare_frequency(&self) -> f64 {
        (self.c_prime / self.m).sqrt()
    }

    /// Closed-form dispersion ω(k)² = [2C(1 − cos ka) + C′]/m.
    pub fn dispersion_squared(&self, k: f64) -> f64 {
        (2.0 * self.c * (1.0 - (k * self.a).cos()) + self.c_prime) / self.m
    }
}

/// Normal modes (k_n, ω_n) of the ring, by numerical diagonalization of
/// the coupling matrix. Mode n carries k_n = 2πn/(Na), n = 0..N−1.
pub fn plasmon_chain_modes(chain: &PlasmonChain) -> Result<Vec<(f64, f64)>> {
    let n = chain.n;
    // Coupling matrix of the quadratic form (1/2)q^T D q, divided by m so
    // eigenvalues are ω². Built bond by bond, which also handles the N = 2
    // ring where both bonds join the same pair of sites.
    let mut d = vec![0.0; n * n];
    for s in 0..n {
        d[s * n + s] += chain.c_prime / chain.m;
        let t = (s + 1) % n;
        let c = chain.c / chain.m;
        d[s * n + s] += c;
        d[t * n + t] += c;
        d[s * n + t] -= c;
        d[t * n + s] -= c;
    }
    let eig = linalg::eigh(&d, n)?;

    // Label modes by pairing sorted eigenvalues with the sorted closed-form
    // branch: the dispersion is monotone in the folded index min(n, N−n),
    // so ranks identify labels up to degenerate ±k pairs, which share ω.
    let mut expected: Vec<(usize, f64)> = (0..n)
        .map(|j| {
            let k = 2.0 * std::f64::consts::PI * j as f64 / (n as f64 * chain.a);
            (j, chain.dispersion_squared(k))
        })
        .collect();
    expected.sort_by(|x, y| x.1.total_cmp(&y.1));

    let mut labeled: Vec<(usize, f64)> = expected
        .iter()
        .zip(&eig.values)
        .map(|(&(j, _), &lam)| (j, lam))
        .collect();
    labeled.sort_by_key(|&(j, _)| j);

    Ok(labeled
        .into_iter()
        .map(|(j, lam)| {
            let k = 2.0 * std::f64::consts::PI * j as f64 / (n as f64 * chain.a);
            (k, lam.max(0.0).sqrt())
        })
        .collect())
}

/// Fidelity between the exact one-plasmon mode state and the uniform-phase
/// superposition of bare single-site excitations, (1/√N)Σ_s e^{ik n s a}a_s†.
///
/// By translation symmetry the spatial profiles coincide; what differs is
/// the quadrature scaling between a mode at ω and a bare oscillator at
/// ω_b. Writing the mode operator over bare operators gives Bogoliubov
/// weights μ, ν = (√(ω/ω_b) ± √(ω_b/ω))/2, and the single-excitation
/// fidelity is the creation-operator weight μ²/(μ² + ν²).
pub fn weak_coupling_operator_overlap(chain: &PlasmonChain, mode_index: usize) -> Result<f64> {
    if mode_index >= chain.n {
        return Err(Error::Config(format!(
            "mode index {mode_index} out of range for a {}-site chain",
            chain.n
        )));
    }
    let modes = plasmon_chain_modes(chain)?;
    let omega = modes[mode_index].1;
    let omega_b = chain.bare_frequency();
    if omega == omega_b {
        return Ok(1.0);
    }
    let r = (omega / omega_b).sqrt();
    let mu = 0.5 * (r + 1.0 / r);
    let nu = 0.5 * (r - 1.0 / r);
    Ok(mu * mu / (mu * mu + nu * nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::electron_parameters;
    use crate::rng::Xoshiro256StarStar;

    fn model300() -> (BeamParameters, InelasticModel) {
        let beam = electron_parameters(300.0).unwrap();
        let model = InelasticModel::new(&beam, 20.0, 0.10).unwrap();
        (beam, model)
    }

    #[test]
    fn model_reference_values() {
        let (beam, m) = model300();
        assert!((m.theta_e - 4.089_764_129_749_061e-5).abs() / m.theta_e < 1e-12);
        assert!((m.theta_cut - 9.044_074_446_563_409e-3).abs() / m.theta_cut < 1e-12);
        assert!((m.b_max - 7.661_471_339_885_497).abs() / m.b_max < 1e-12);
        // Structural identities.
        assert!((m.theta_cut / (2.0 * m.theta_e).sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(m.b_max, 1.0 / (beam.wavenumber_k * m.theta_e));
        // Ballpark agreement with the round working numbers.
        assert!((m.b_max / 7.6 - 1.0).abs() < 0.03);
        assert!((m.theta_cut / 9.1e-3 - 1.0).abs() < 0.02);
    }

    #[test]
    fn angular_fraction_endpoints_and_domain() {
        let (_, m) = model300();
        assert_eq!(angular_fraction(&m, 0.0).unwrap(), 0.0);
        let f1 = angular_fraction(&m, m.theta_cut).unwrap();
        assert!((f1 - 1.0).abs() < 1e-14);
        assert!(matches!(
            angular_fraction(&m, m.theta_cut * 1.001),
            Err(Error::Domain(_))
        ));
        assert!(matches!(angular_fraction(&m, -1e-6), Err(Error::Domain(_))));
    }

    #[test]
    fn median_inversion_reference() {
        let (_, m) = model300();
        let med = sample_angle(&m, 0.5);
        assert!((med - 6.068_051_394_958_937e-4).abs() / med < 1e-12, "{med}");
        assert!((med / 0.61e-3 - 1.0).abs() < 0.02);
        assert!((m.median_angle() - med).abs() / med < 1e-12);
    }

    #[test]
    fn sampling_round_trips_through_cdf() {
        let (_, m) = model300();
        for u in [0.0, 1e-6, 0.1, 0.3, 0.5, 0.7, 0.9, 0.999, 1.0 - 1e-12] {
            let th = sample_angle(&m, u);
            let back = angular_fraction(&m, th).unwrap();
            assert!((back - u).abs() < 1e-10, "u = {u}, back = {back}");
        }
        assert_eq!(sample_angle(&m, 0.0), 0.0);
        assert!(sample_angle(&m, 1.0 - 1e-15) <= m.theta_cut);
    }

    #[test]
    fn sample_statistics_match_closed_forms() {
        let (_, m) = model300();
        let mut rng = Xoshiro256StarStar::from_seed(11);
        let n = 1_000_000;
        let mut v: Vec<f64> = (0..n).map(|_| sample_angle(&m, rng.next_f64())).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let exact_mean = m.mean_angle();
        assert!(
            (mean / exact_mean - 1.0).abs() < 5e-3,
            "sample mean {mean} vs closed form {exact_mean}"
        );
        v.sort_by(f64::total_cmp);
        let med = 0.5 * (v[n / 2 - 1] + v[n / 2]);
        assert!((med / 0.61e-3 - 1.0).abs() < 0.02, "median {med}");
        // The closed-form mean itself sits near 1.66 mrad.
        assert!((exact_mean - 1.663_334_945_007_713_6e-3).abs() / exact_mean < 1e-12);
    }

    #[test]
    fn kolmogorov_smirnov_at_one_percent() {
        let (_, m) = model300();
        let mut rng = Xoshiro256StarStar::from_seed(12);
        let n = 1_000_000;
        let mut v: Vec<f64> = (0..n).map(|_| sample_angle(&m, rng.next_f64())).collect();
        v.sort_by(f64::total_cmp);
        let mut d = 0.0_f64;
        for (i, &x) in v.iter().enumerate() {
            let f = angular_fraction(&m, x.min(m.theta_cut)).unwrap();
            d = d.max((f - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - f).abs());
        }
        // Two-sided critical value at alpha = 0.01: sqrt(-ln(0.005)/2)/sqrt(n).
        let crit = 1.627_623_630_718_729_3 / (n as f64).sqrt();
        assert!(d < crit, "KS statistic {d} exceeds critical {crit}");
    }

    #[test]
    fn focused_phase_error_reference() {
        let (beam, _) = model300();
        let phi = phase_error_focused(&beam, 1.0, 1.8e-3);
        assert!((phi - 5.744_630_004_922_431).abs() / phi < 1e-12, "{phi}");
        assert!((phi / 5.7 - 1.0).abs() < 0.03);
        assert_eq!(phase_error_focused(&beam, 1.0, 0.0), 0.0);
        assert_eq!(
            phase_error_focused(&beam, 2.0, 1.8e-3),
            2.0 * phase_error_focused(&beam, 1.0, 1.8e-3)
        );
    }

    #[test]
    fn diverging_phase_error_reference() {
        let (beam, _) = model300();
        let hi = phase_error_diverging_magnitude(&beam, 30.0, 1.8e-3);
        assert!((hi - 0.155_105_010_132_905_65).abs() / hi < 1e-12, "{hi}");
        assert!((hi / 0.155 - 1.0).abs() < 0.05);
        let lo = phase_error_diverging_magnitude(&beam, 30.0, 0.61e-3);
        assert!((lo - 0.017_813_140_206_930_304).abs() / lo < 1e-12, "{lo}");
        assert!((lo / 0.018 - 1.0).abs() < 0.05);
        // Azimuth at 90 degrees kills the error.
        let z = phase_error_diverging(&beam, 30.0, 1.8e-3, std::f64::consts::FRAC_PI_2);
        assert!(z.abs() < 1e-15);
        // cos chi = 1 gives twice the magnitude form.
        let full = phase_error_diverging(&beam, 30.0, 1.8e-3, 0.0);
        assert!((full - 2.0 * hi).abs() / full < 1e-12);
    }

    #[test]
    fn azimuth_average_and_absolute_moment() {
        let (beam, _) = model300();
        let d01p = 30.0;
        let dth = 1.3e-3;
        let mut rng = Xoshiro256StarStar::from_seed(13);
        let n = 2_000_000;
        let (mut s, mut sa) = (0.0, 0.0);
        for _ in 0..n {
            let chi = 2.0 * std::f64::consts::PI * rng.next_f64();
            let p = phase_error_diverging(&beam, d01p, dth, chi);
            s += p;
            sa += p.abs();
        }
        let scale = beam.wavenumber_k * d01p * dth * dth;
        let mean = s / n as f64;
        // E[cos chi] = 0; the MC mean has SE = scale/sqrt(2n).
        assert!(mean.abs() < 5.0 * scale / (2.0 * n as f64).sqrt(), "{mean}");
        let abs_mean = sa / n as f64;
        let expect = 2.0 / std::f64::consts::PI * scale;
        assert!((abs_mean / expect - 1.0).abs() < 5e-3, "{abs_mean} vs {expect}");
    }

    #[test]
    fn delocalization_psf_shape() {
        let (_, m) = model300();
        let b = m.b_max;
        let ratio = delocalization_psf(&m, b).unwrap() / delocalization_psf(&m, 2.0 * b).unwrap();
        assert!((ratio - 2.0 * std::f64::consts::E).abs() / ratio < 1e-12, "{ratio}");
        assert!(delocalization_psf(&m, 1e4).unwrap() < 1e-300);
        assert!(matches!(delocalization_psf(&m, 0.0), Err(Error::Domain(_))));
        assert!(matches!(delocalization_psf(&m, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn two_site_chain_by_hand() {
        let chain = PlasmonChain::new(2, 1.0, 1.0, 1.0, 1.0).unwrap();
        let modes = plasmon_chain_modes(&chain).unwrap();
        assert_eq!(modes.len(), 2);
        assert!((modes[0].0 - 0.0).abs() < 1e-15);
        assert!((modes[0].1 * modes[0].1 - 1.0).abs() < 1e-9);
        assert!((modes[1].0 - std::f64::consts::PI).abs() < 1e-12);
        assert!((modes[1].1 * modes[1].1 - 5.0).abs() < 1e-9);
    }

    #[test]
    fn decoupled_chain_is_flat() {
        let chain = PlasmonChain::new(16, 0.7, 0.0, 2.5, 0.5).unwrap();
        let wb = chain.bare_frequency();
        for (_, w) in plasmon_chain_modes(&chain).unwrap() {
            assert_eq!(w, wb);
        }
    }

    #[test]
    fn dispersion_matches_closed_form_all_modes() {
        let chain = PlasmonChain::new(64, 0.43, 1.7, 0.9, 1.3).unwrap();
        for (k, w) in plasmon_chain_modes(&chain).unwrap() {
            let expect = chain.dispersion_squared(k);
            assert!(
                (w * w / expect - 1.0).abs() < 1e-9,
                "k = {k}: {} vs {expect}",
                w * w
            );
        }
    }

    #[test]
    fn small_k_dispersion_is_quadratic() {
        let chain = PlasmonChain::new(128, 1.0, 1.0, 1.0, 1.0).unwrap();
        let modes = plasmon_chain_modes(&chain).unwrap();
        let w0sq = modes[0].1 * modes[0].1;
        let r1 = (modes[1].1 * modes[1].1 - w0sq) / (modes[1].0 * modes[1].0);
        let r2 = (modes[2].1 * modes[2].1 - w0sq) / (modes[2].0 * modes[2].0);
        assert!(r1 > 0.0 && r2 > 0.0);
        assert!((r2 / r1 - 1.0).abs() < 0.01, "{r1} vs {r2}");
    }

    #[test]
    fn overlap_decoupled_is_exactly_one() {
        let chain = PlasmonChain::new(8, 1.0, 0.0, 1.0, 1.0).unwrap();
        for j in 0..8 {
            assert_eq!(weak_coupling_operator_overlap(&chain, j).unwrap(), 1.0);
        }
    }

    #[test]
    fn overlap_weak_coupling_near_unity() {
        let chain = PlasmonChain::new(64, 1.0, 1e-3, 1.0, 1.0).unwrap();
        let f = weak_coupling_operator_overlap(&chain, 1).unwrap();
        assert!(f >= 0.999 && f <= 1.0, "{f}");
    }

    #[test]
    fn overlap_zone_edge_regression() {
        let chain = PlasmonChain::new(64, 1.0, 1.0, 1.0, 1.0).unwrap();
        let f = weak_coupling_operator_overlap(&chain, 32).unwrap();
        assert!((f - 0.872_677_996_249_965).abs() < 1e-12, "{f}");
    }

    #[test]
    fn chain_validation() {
        assert!(PlasmonChain::new(1, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(PlasmonChain::new(4, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(PlasmonChain::new(4, 1.0, -0.1, 1.0, 1.0).is_err());
        assert!(PlasmonChain::new(4, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(PlasmonChain::new(4, 1.0, 1.0, 1.0, 0.0).is_err());
        let chain = PlasmonChain::new(4, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(weak_coupling_operator_overlap(&chain, 4).is_err());
    }
}
