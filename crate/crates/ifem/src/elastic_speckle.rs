//! Far-field speckle of a nanometre electron probe crossing an amorphous
//! slab, and the dark-field failure statistics built on it.
//!
//! Lengths are in nm and angles in rad throughout. A Gaussian probe of
//! waist w transmits the angular field
//!
//! ```text
//! psi_T(theta) = -i (k w^2 / 2) exp(-k^2 w^2 theta^2 / 4),
//! ```
//!
//! a Gaussian of 1/e half-width theta_G = 2/(k w) and Rayleigh range
//! z_R = k w^2 / 2. Two probe modes matter here:
//!
//! * **Focused**: waist w0 in the specimen plane. Each atom j at (x_j, y_j)
//!   scatters with the local illumination weight, giving the far field
//!   `psi_P(theta) = sum_j exp(-r_j^2/w0^2) f_j(theta) exp(-i k x_j theta)`
//!   along the detector deflection axis x. For a random configuration the
//!   dark-field intensity is speckle: exponentially distributed with mean
//!   `E = (pi/2) w0^2 sum_el n_el f_el(theta)^2` (n_el areal densities) and
//!   variance E^2.
//!
//! * **Diverging**: waist w0' a distance dz upstream, so the slab sees a
//!   spherical wave with divergence theta_G' = 2/(k w0') and expansion
//!   parameter eps = z_R/dz = k w0'^2/(2 dz) << 1. Fresnel propagation of
//!   the scattered waves to the far field gives
//!   `psi'_P(theta) = -i eps sum_j exp(ik[(x_j - dz theta)^2 + y_j^2]/(2 dz))
//!    exp(-eps k r_j^2/(2 dz)) f_j(|theta - x_j/dz|)`.
//!
//! In the diverging mode the ensemble-mean scattered intensity relative to
//! the transmitted peak is governed by the spike convolution
//!
//! ```text
//! H(theta) = sum_el N_el Int_{theta-5tG'}^{theta+5tG'} dgamma
//!            exp(-2 (gamma/tG')^2) g_el^2(theta - gamma),
//! ```
//!
//! with N_el the atoms per Bohr area and g = f/a0. A dark-field detection
//! at angle theta fails when the scattered background outshines the
//! transmitted peak, i.e. when `sqrt(pi/2) tG' H(theta)` exceeds
//! `exp(-2 (theta/tG')^2)`; the first crossing theta_c and the failure
//! probability per electron
//!
//! ```text
//! p'_d = sqrt(8 pi)/tG' Int_{theta_c}^{pi} H(theta) sin(theta) dtheta
//! ```
//!
//! summarise how often an elastic scattering event lands inside the
//! bright-field acceptance and spoils the readout.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::kinematics::BeamParameters;
use crate::quad;
use crate::rng::Xoshiro256StarStar;
use crate::specimen::{
    amplitude_evaluator, AmplitudeEvaluator, AmplitudeSource, Composition, Element,
};
use crate::{Error, Result};

/// Sampled atom discs extend this many beam footprints from the axis, far
/// enough that the truncated illumination tail is negligible.
pub const DISC_RADIUS_FACTOR: f64 = 4.0;

/// Validity bound for the diverging-beam expansion; the scattered-field sum
/// refuses geometries with eps = z_R/dz at or above this.
pub const MAX_DIVERGENCE_EPSILON: f64 = 0.1;

/// Gaussian probe geometry at the specimen plane.
///
/// Both modes carry the waist w (nm), the angular width theta_G = 2/(k w)
/// and the Rayleigh range z_R = k w^2/2; the diverging mode adds the
/// upstream focus distance dz and the expansion parameter eps = z_R/dz.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum ProbeGeometry {
    /// Waist in the specimen plane.
    Focused { waist: f64, theta_g: f64, z_r: f64 },
    /// Waist a distance `delta_z` upstream of the specimen.
    Diverging {
        waist: f64,
        theta_g: f64,
        z_r: f64,
        delta_z: f64,
        epsilon: f64,
    },
}

impl ProbeGeometry {
    /// Probe focused in the specimen plane with waist `waist_nm`.
    pub fn focused(waist_nm: f64, beam: &BeamParameters) -> Result<Self> {
        if !(waist_nm > 0.0) || !waist_nm.is_finite() {
            return Err(Error::Domain(format!(
                "probe waist must be positive and finite, got {waist_nm}"
            )));
        }
        let k = beam.wavenumber_k;
        Ok(ProbeGeometry::Focused {
            waist: waist_nm,
            theta_g: 2.0 / (k * waist_nm),
            z_r: k * waist_nm * waist_nm / 2.0,
        })
    }

    /// Probe whose waist sits `delta_z_nm` upstream of the specimen, so the
    /// slab is illuminated by the diverging part of the beam.
    pub fn diverging(waist_nm: f64, delta_z_nm: f64, beam: &BeamParameters) -> Result<Self> {
        if !(waist_nm > 0.0) || !waist_nm.is_finite() {
            return Err(Error::Domain(format!(
                "probe waist must be positive and finite, got {waist_nm}"
            )));
        }
        if !(delta_z_nm > 0.0) || !delta_z_nm.is_finite() {
            return Err(Error::Domain(format!(
                "focus offset must be positive and finite, got {delta_z_nm}"
            )));
        }
        let k = beam.wavenumber_k;
        let z_r = k * waist_nm * waist_nm / 2.0;
        let epsilon = z_r / delta_z_nm;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Domain(format!(
                "diverging probe needs 0 < z_R/delta_z < 1, got {epsilon:.3e}; \
                 move the focus further upstream of the specimen"
            )));
        }
        Ok(ProbeGeometry::Diverging {
            waist: waist_nm,
            theta_g: 2.0 / (k * waist_nm),
            z_r,
            delta_z: delta_z_nm,
            epsilon,
        })
    }

    /// Waist w in nm.
    pub fn waist(&self) -> f64 {
        match *self {
            ProbeGeometry::Focused { waist, .. } | ProbeGeometry::Diverging { waist, .. } => waist,
        }
    }

    /// Angular 1/e half-width theta_G = 2/(k w).
    pub fn theta_g(&self) -> f64 {
        match *self {
            ProbeGeometry::Focused { theta_g, .. }
            | ProbeGeometry::Diverging { theta_g, .. } => theta_g,
        }
    }

    /// Rayleigh range z_R = k w^2/2 in nm.
    pub fn z_r(&self) -> f64 {
        match *self {
            ProbeGeometry::Focused { z_r, .. } | ProbeGeometry::Diverging { z_r, .. } => z_r,
        }
    }

    /// Upstream focus distance in nm; `None` for a focused probe.
    pub fn delta_z(&self) -> Option<f64> {
        match *self {
            ProbeGeometry::Focused { .. } => None,
            ProbeGeometry::Diverging { delta_z, .. } => Some(delta_z),
        }
    }

    /// Expansion parameter eps = z_R/dz; `None` for a focused probe.
    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            ProbeGeometry::Focused { .. } => None,
            ProbeGeometry::Diverging { epsilon, .. } => Some(epsilon),
        }
    }

    pub fn is_focused(&self) -> bool {
        matches!(self, ProbeGeometry::Focused { .. })
    }

    /// 1/e radius of the illuminated spot in the specimen plane: the waist
    /// itself when focused, dz * theta_G when diverging.
    pub fn footprint_radius(&self) -> f64 {
        match *self {
            ProbeGeometry::Focused { waist, .. } => waist,
            ProbeGeometry::Diverging { theta_g, delta_z, .. } => delta_z * theta_g,
        }
    }
}

/// One snapshot of scatterer positions inside the illuminated disc.
#[derive(Debug, Clone)]
pub struct AtomConfiguration {
    /// (x, y, element) per atom, nm, with x along the detector deflection
    /// axis and the probe axis at the origin.
    pub atoms: Vec<(f64, f64, Element)>,
    /// Seed of the stream the positions were drawn from; 0 for explicit
    /// positions.
    pub seed: u64,
}

impl AtomConfiguration {
    /// Wrap explicit positions (for gratings, sheets, regression inputs).
    pub fn from_positions(atoms: Vec<(f64, f64, Element)>) -> Self {
        AtomConfiguration { atoms, seed: 0 }
    }

    /// Draw configuration number `config_index` of the ensemble `seed`.
    ///
    /// The disc radius is [`DISC_RADIUS_FACTOR`] beam footprints. Each
    /// element contributes the rounded expected count for its areal density;
    /// positions are i.i.d. uniform over the disc, drawn element by element
    /// in the fixed order H, C, N, O, S from the stream (seed, config_index)
    /// so configurations are reproducible and independent.
    pub fn sample(
        comp: &Composition,
        geom: &ProbeGeometry,
        seed: u64,
        config_index: u64,
    ) -> Self {
        let radius = DISC_RADIUS_FACTOR * geom.footprint_radius();
        let area = PI * radius * radius;
        let mut rng = Xoshiro256StarStar::stream(seed, config_index);
        let mut atoms = Vec::new();
        for &el in Element::ALL.iter() {
            let count = (comp.areal_density(el) * area).round() as usize;
            for _ in 0..count {
                let r = radius * rng.next_f64().sqrt();
                let phi = 2.0 * PI * rng.next_f64();
                atoms.push((r * phi.cos(), r * phi.sin(), el));
            }
        }
        AtomConfiguration { atoms, seed }
    }
}

/// Transmitted far field psi_T(theta) = -i (k w^2/2) exp(-k^2 w^2 theta^2/4)
/// of the bare probe, in nm.
pub fn transmitted_far_field(
    geom: &ProbeGeometry,
    beam: &BeamParameters,
    theta: f64,
) -> Complex64 {
    debug_assert!(theta.is_finite());
    let kw = beam.wavenumber_k * geom.waist();
    let amp = 0.5 * kw * geom.waist() * (-(kw * kw * theta * theta) / 4.0).exp();
    Complex64::new(0.0, -amp)
}

/// Per-element amplitude evaluators for the elements actually present in
/// `atoms`, validated up front so the hot loop cannot fail.
fn evaluators_for<'a>(
    atoms: &[(f64, f64, Element)],
    src: &'a AmplitudeSource,
    beam: &BeamParameters,
) -> Result<[Option<AmplitudeEvaluator<'a>>; 5]> {
    let mut evals: [Option<AmplitudeEvaluator>; 5] = [None; 5];
    for &(_, _, el) in atoms {
        let slot = &mut evals[el.index()];
        if slot.is_none() {
            *slot = Some(amplitude_evaluator(src, el, beam)?);
        }
    }
    Ok(evals)
}

/// Scattered far field of a focused probe,
/// `sum_j exp(-r_j^2/w0^2) f_j(theta) exp(-i k x_j theta)`, in nm.
///
/// Terms are accumulated in atom order, so splitting a configuration into
/// consecutive runs and adding the partial sums reproduces the total.
pub fn scattered_field_focused(
    atoms: &AtomConfiguration,
    geom: &ProbeGeometry,
    src: &AmplitudeSource,
    beam: &BeamParameters,
    theta: f64,
) -> Result<Complex64> {
    let ProbeGeometry::Focused { waist, .. } = *geom else {
        return Err(Error::Domain(
            "focused-probe scattered field asked of a diverging geometry".into(),
        ));
    };
    debug_assert!(theta.is_finite());
    let evals = evaluators_for(&atoms.atoms, src, beam)?;
    // f(theta) is the same for every atom of an element at fixed theta.
    let mut f_at = [0.0f64; 5];
    for (slot, ev) in f_at.iter_mut().zip(evals.iter()) {
        if let Some(ev) = ev {
            *slot = ev.f_nm(theta);
        }
    }
    let inv_w2 = 1.0 / (waist * waist);
    let k_theta = beam.wavenumber_k * theta;
    let mut sum = Complex64::new(0.0, 0.0);
    for &(x, y, el) in &atoms.atoms {
        let weight = (-(x * x + y * y) * inv_w2).exp();
        sum += Complex64::from_polar(weight * f_at[el.index()], -k_theta * x);
    }
    Ok(sum)
}

/// Scattered far field of a diverging probe,
/// `-i eps sum_j exp(ik[(x_j - dz theta)^2 + y_j^2]/(2 dz))
///  exp(-eps k r_j^2/(2 dz)) f_j(|theta - x_j/dz|)`, in nm.
///
/// Valid for eps < [`MAX_DIVERGENCE_EPSILON`]; accumulation order is the
/// atom order, as in the focused case.
pub fn scattered_field_diverging(
    atoms: &AtomConfiguration,
    geom: &ProbeGeometry,
    src: &AmplitudeSource,
    beam: &BeamParameters,
    theta: f64,
) -> Result<Complex64> {
    let ProbeGeometry::Diverging { delta_z, epsilon, .. } = *geom else {
        return Err(Error::Domain(
            "diverging-probe scattered field asked of a focused geometry".into(),
        ));
    };
    if epsilon >= MAX_DIVERGENCE_EPSILON {
        return Err(Error::Domain(format!(
            "diverging-beam expansion needs eps < {MAX_DIVERGENCE_EPSILON}, got {epsilon:.3e}"
        )));
    }
    debug_assert!(theta.is_finite());
    let evals = evaluators_for(&atoms.atoms, src, beam)?;
    let k_half_dz = 0.5 * beam.wavenumber_k / delta_z;
    let mut sum = Complex64::new(0.0, 0.0);
    for &(x, y, el) in &atoms.atoms {
        let dx = x - delta_z * theta;
        let phase = k_half_dz * (dx * dx + y * y);
        let damp = (-epsilon * k_half_dz * (x * x + y * y)).exp();
        let f = evals[el.index()]
            .expect("evaluator prevalidated")
            .f_nm(theta - x / delta_z);
        sum += Complex64::from_polar(damp * f, phase);
    }
    Ok(sum * Complex64::new(0.0, -epsilon))
}

/// Closed-form scattered wave of a uniform sheet of areal density
/// `areal_density` (atoms per nm^2) with forward amplitude `f0_nm` under a
/// diverging probe:
///
/// ```text
/// psi'(theta) = n pi w'^2 f0 exp(-(theta/theta_G')^2 / (1 + i eps)) / (1 + i eps).
/// ```
///
/// Relative to the transmitted wave this sits in quadrature up to the eps
/// tilt: psi'/psi_T(0) = i q/(1 + i eps) with q = f0 lambda n, which is the
/// phase-object limit of a thin uniform slab.
pub fn uniform_sheet_scattered_wave(
    geom: &ProbeGeometry,
    f0_nm: f64,
    areal_density: f64,
    theta: f64,
) -> Result<Complex64> {
    let ProbeGeometry::Diverging { waist, theta_g, epsilon, .. } = *geom else {
        return Err(Error::Domain(
            "the uniform-sheet wave is defined for a diverging geometry".into(),
        ));
    };
    let one_plus = Complex64::new(1.0, epsilon);
    let t = theta / theta_g;
    let prefactor = areal_density * PI * waist * waist * f0_nm;
    Ok(prefactor * (-Complex64::from(t * t) / one_plus).exp() / one_plus)
}

/// Ensemble mean and variance of the focused-probe dark-field intensity,
/// `E = (pi/2) w0^2 sum_el n_el f_el(theta)^2` and `Var = E^2` (fully
/// developed speckle), in nm^2 and nm^4.
///
/// Valid on the dark-field side of the transmitted peak; angles below
/// 3 theta_G are refused because the transmitted wave still overlaps there.
pub fn speckle_moments_focused(
    comp: &Composition,
    src: &AmplitudeSource,
    geom: &ProbeGeometry,
    beam: &BeamParameters,
    theta: f64,
) -> Result<(f64, f64)> {
    let ProbeGeometry::Focused { waist, theta_g, .. } = *geom else {
        return Err(Error::Domain(
            "focused-probe speckle moments asked of a diverging geometry".into(),
        ));
    };
    if !(theta >= 3.0 * theta_g) {
        return Err(Error::Domain(format!(
            "speckle statistics hold in the dark field only: need theta >= 3 theta_G = {:.3e}, got {theta:.3e}",
            3.0 * theta_g
        )));
    }
    let mut mean = 0.0;
    for &el in Element::ALL.iter() {
        let n = comp.areal_density(el);
        if n == 0.0 {
            continue;
        }
        let f = amplitude_evaluator(src, el, beam)?.f_nm(theta);
        mean += 0.5 * PI * n * waist * waist * f * f;
    }
    Ok((mean, mean * mean))
}

/// Monte Carlo sample statistics of the dark-field speckle intensity.
#[derive(Debug, Clone, Serialize)]
pub struct SpeckleEnsemble {
    /// Number of configurations averaged.
    pub configs: usize,
    /// Sample mean of |psi_P(theta)|^2 in nm^2.
    pub mean_intensity: f64,
    /// Unbiased sample variance in nm^4.
    pub variance: f64,
    /// Standard error of the mean in nm^2.
    pub se_mean: f64,
}

/// Dark-field intensity statistics over random atom configurations of a
/// focused probe.
///
/// Configuration i is drawn from the stream (seed, i) and evaluated
/// independently (in parallel); the reduction runs in configuration order,
/// so results are bit-identical for any worker count.
pub fn monte_carlo_speckle_focused(
    comp: &Composition,
    src: &AmplitudeSource,
    geom: &ProbeGeometry,
    beam: &BeamParameters,
    theta: f64,
    configs: usize,
    seed: u64,
) -> Result<SpeckleEnsemble> {
    if !geom.is_focused() {
        return Err(Error::Domain(
            "focused-probe speckle ensemble asked of a diverging geometry".into(),
        ));
    }
    if configs < 2 {
        return Err(Error::Config(format!(
            "speckle statistics need at least 2 configurations, got {configs}"
        )));
    }
    // Surface source/composition mismatches before spawning work.
    for &el in Element::ALL.iter() {
        if comp.areal_density(el) > 0.0 {
            amplitude_evaluator(src, el, beam)?;
        }
    }
    let intensities = (0..configs as u64)
        .into_par_iter()
        .map(|i| {
            let config = AtomConfiguration::sample(comp, geom, seed, i);
            scattered_field_focused(&config, geom, src, beam, theta).map(|psi| psi.norm_sqr())
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = intensities.len() as f64;
    let mean = intensities.iter().sum::<f64>() / n;
    let variance = intensities.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok(SpeckleEnsemble {
        configs,
        mean_intensity: mean,
        variance,
        se_mean: (variance / n).sqrt(),
    })
}

/// Per-element weights and evaluators of the spike sum
/// `S(u) = sum_el N_el g_el^2(|u|)` with N_el in atoms per Bohr area.
fn spike_terms<'a>(
    comp: &Composition,
    src: &'a AmplitudeSource,
    beam: &BeamParameters,
) -> Result<Vec<(f64, AmplitudeEvaluator<'a>)>> {
    let mut terms = Vec::new();
    for &el in Element::ALL.iter() {
        let n = comp.atoms_per_bohr_area(el);
        if n > 0.0 {
            terms.push((n, amplitude_evaluator(src, el, beam)?));
        }
    }
    Ok(terms)
}

/// H(theta) for prebuilt spike terms; the window covers the 5 sigma support
/// of the Gaussian weight around the g^2 spike.
fn h_eval(
    terms: &[(f64, AmplitudeEvaluator)],
    theta_gp: f64,
    theta: f64,
) -> Result<f64> {
    let lo = theta - 5.0 * theta_gp;
    let hi = theta + 5.0 * theta_gp;
    // Break at the weight maximum (gamma = 0) and the g^2 spike (gamma =
    // theta); both are sharp features on the window scale.
    let mut pts = vec![lo, theta, hi];
    if lo < 0.0 && 0.0 < hi {
        pts.push(0.0);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut h = 0.0;
    for &(n, ev) in terms {
        let contribution = quad::integrate_with_breakpoints(
            |gamma| {
                let t = gamma / theta_gp;
                let g = ev.g(theta - gamma);
                (-2.0 * t * t).exp() * g * g
            },
            &pts,
            0.0,
            1e-9,
        )?;
        h += n * contribution;
    }
    Ok(h)
}

/// Spike convolution H(theta) of the diverging probe (see module docs).
pub fn h_function(
    comp: &Composition,
    src: &AmplitudeSource,
    geom: &ProbeGeometry,
    beam: &BeamParameters,
    theta: f64,
) -> Result<f64> {
    let ProbeGeometry::Diverging { theta_g, .. } = *geom else {
        return Err(Error::Domain(
            "the spike convolution is defined for a diverging geometry".into(),
        ));
    };
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!(
            "scattering angle must be non-negative, got {theta}"
        )));
    }
    let terms = spike_terms(comp, src, beam)?;
    h_eval(&terms, theta_g, theta)
}

/// Dark-field threshold angle theta_c and failure probability p'_d of the
/// diverging probe.
///
/// theta_c is the first angle where the normalised scattered background
/// `sqrt(pi/2) theta_G' H(theta)` reaches the transmitted peak
/// `exp(-2 (theta/theta_G')^2)`, located by a coarse scan (step 0.5 mrad)
/// and bisection to 1e-6 rad; p'_d integrates the background beyond it,
/// `sqrt(8 pi)/theta_G' Int_{theta_c}^{pi} H sin(theta) dtheta`.
///
/// A specimen whose background never reaches the peak below pi has no
/// threshold and is reported as a degenerate-specimen configuration error.
pub fn speckle_threshold_and_failure(
    comp: &Composition,
    src: &AmplitudeSource,
    geom: &ProbeGeometry,
    beam: &BeamParameters,
) -> Result<(f64, f64)> {
    let ProbeGeometry::Diverging { theta_g, .. } = *geom else {
        return Err(Error::Domain(
            "the dark-field threshold is defined for a diverging geometry".into(),
        ));
    };
    let terms = spike_terms(comp, src, beam)?;
    let prefactor = (0.5 * PI).sqrt() * theta_g;
    let cross = |th: f64| -> Result<f64> {
        let t = th / theta_g;
        Ok(prefactor * h_eval(&terms, theta_g, th)? - (-2.0 * t * t).exp())
    };

    const SCAN_STEP: f64 = 5e-4;
    let f0 = cross(0.0)?;
    let bracket = if f0 >= 0.0 {
        // Background already dominates on axis; the threshold degenerates
        // to zero and every elastic event counts.
        Some((0.0, 0.0))
    } else {
        let mut found = None;
        let mut lo = 0.0;
        let mut f_lo = f0;
        let mut i = 1u64;
        loop {
            let th = i as f64 * SCAN_STEP;
            if th > PI {
                break;
            }
            let f = cross(th)?;
            if f_lo < 0.0 && f >= 0.0 {
                found = Some((lo, th));
                break;
            }
            lo = th;
            f_lo = f;
            i += 1;
        }
        found
    };
    let Some((mut blo, mut bhi)) = bracket else {
        return Err(Error::Config(
            "degenerate specimen: the transmitted peak stays above the scattered \
             background all the way to theta = pi, so no dark-field threshold \
             exists (specimen too thin or empty)"
                .into(),
        ));
    };
    while bhi - blo > 1e-6 {
        let mid = 0.5 * (blo + bhi);
        if cross(mid)? >= 0.0 {
            bhi = mid;
        } else {
            blo = mid;
        }
    }
    let theta_c = 0.5 * (blo + bhi);
    if theta_c >= PI {
        return Ok((theta_c, 0.0));
    }

    // The outer integrand needs a plain f64 closure; failures inside the
    // inner convolution are stashed and re-raised after integration.
    let stash: RefCell<Option<Error>> = RefCell::new(None);
    let integrand = |th: f64| -> f64 {
        if stash.borrow().is_some() {
            return 0.0;
        }
        match h_eval(&terms, theta_g, th) {
            Ok(h) => h * th.sin(),
            Err(e) => {
                *stash.borrow_mut() = Some(e);
                0.0
            }
        }
    };
    let mut pts = vec![theta_c];
    for cand in [theta_c + 5.0 * theta_g, theta_c + 25.0 * theta_g] {
        if cand < PI {
            pts.push(cand);
        }
    }
    pts.push(PI);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let integral = quad::integrate_with_breakpoints(integrand, &pts, 0.0, 1e-8)?;
    if let Some(e) = stash.into_inner() {
        return Err(e);
    }
    let p_fail = (8.0 * PI).sqrt() / theta_g * integral;
    Ok((theta_c, p_fail))
}
