//! Pixel-by-pixel phase imaging with the entangled k-electron protocol
//! against a shot-noise-limited conventional baseline.
//!
//! The specimen is a [`PhaseMap`]: a grid of phase shifts (rad) on square
//! pixels of `pixel_size` nm. At each pixel the instrument compares two
//! probe regions, a tight inner spot and a wide outer reference, so the
//! measured signal is the difference of Gaussian-weighted means
//!
//! ```text
//! dphi_eff(x, y) = <map>_inner(x, y) - <map>_outer(x, y),
//! ```
//!
//! kernels truncated at 3 sigma with mirrored edges. The entangled
//! simulator spends the pixel's electron budget N_px = dose * pixel_size^2
//! on n = floor(N_px/k) k-electron processes ([`crate::protocol`]) and maps
//! the estimator output; the conventional simulator models ideal in-focus
//! phase contrast at the same dose, dphi_eff plus zero-mean Gaussian noise
//! of standard deviation 1/sqrt(N_px). Identical jobs produce bit-identical
//! images for any worker count: pixel p draws from the stream
//! (seed, p) and the reduction runs in pixel order.
//!
//! [`gaussian_smooth`] and [`laplacian_filter`] reproduce the display
//! filters used on such images, and [`make_phantom`] supplies deterministic
//! specimens (disc, shell, sinusoid, blob cluster) scaled to the few-mrad
//! phase shifts expected of a protein in ice.

use std::f64::consts::PI;
use std::str::FromStr;

use rayon::prelude::*;

use crate::protocol::{
    estimate_phase, k_electron_process, usable_outcomes, ErrorModel, Estimator,
};
use crate::rng::Xoshiro256StarStar;
use crate::{Error, Result};

/// Phase-shift image: row-major values in rad on square pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    width: usize,
    height: usize,
    pixel_size: f64,
    values: Vec<f64>,
}

impl PhaseMap {
    /// Wrap row-major `values`; the grid must be nonempty, the pixel size
    /// positive, and every value finite.
    pub fn new(width: usize, height: usize, pixel_size: f64, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "phase map needs a nonempty grid, got {width}x{height}"
            )));
        }
        if !(pixel_size > 0.0) || !pixel_size.is_finite() {
            return Err(Error::Config(format!(
                "pixel size must be positive and finite, got {pixel_size}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Config(format!(
                "value count {} does not match {width}x{height}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "phase map values must be finite, found {bad}"
            )));
        }
        Ok(PhaseMap {
            width,
            height,
            pixel_size,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, pixel_size: f64, value: f64) -> Result<Self> {
        PhaseMap::new(width, height, pixel_size, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixel edge length in nm.
    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    /// Row-major pixel values in rad.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.values[y * self.width + x]
    }

    /// Root-mean-square difference to a map of the same shape, in rad.
    pub fn rms_difference(&self, other: &PhaseMap) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Config(format!(
                "cannot compare {}x{} against {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((sum / self.values.len() as f64).sqrt())
    }

    /// Same-shape map with `f` applied to every value; `f` must keep the
    /// values finite.
    fn map_values(&self, f: impl Fn(f64) -> f64) -> PhaseMap {
        PhaseMap {
            width: self.width,
            height: self.height,
            pixel_size: self.pixel_size,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Mirror an out-of-range index back into [0, n): -1 -> 0, n -> n-1, with
/// the reflection repeating for indices further out.
fn mirror_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let j = i.rem_euclid(period);
    if j < n {
        j as usize
    } else {
        (period - 1 - j) as usize
    }
}

/// Gaussian intensity radii of the two probe regions at the specimen.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ProbeFootprints {
    /// Inner (signal) spot radius sigma in nm.
    pub sigma_inner: f64,
    /// Outer (reference) spot radius sigma in nm.
    pub sigma_outer: f64,
    /// Axial separation of the two waists in nm.
    pub d01: f64,
}

impl ProbeFootprints {
    pub fn new(sigma_inner: f64, sigma_outer: f64, d01: f64) -> Result<Self> {
        if !(sigma_inner > 0.0 && sigma_outer > sigma_inner) {
            return Err(Error::Config(format!(
                "footprints need sigma_outer > sigma_inner > 0, got {sigma_inner} and {sigma_outer}"
            )));
        }
        if !(d01 > 0.0) || !d01.is_finite() {
            return Err(Error::Config(format!(
                "waist separation must be positive and finite, got {d01}"
            )));
        }
        Ok(ProbeFootprints {
            sigma_inner,
            sigma_outer,
            d01,
        })
    }
}

impl Default for ProbeFootprints {
    /// The reference geometry: beam diameters 0.6 nm and 3.0 nm (radii
    /// 0.3/1.5 nm) separated by 30 nm.
    fn default() -> Self {
        ProbeFootprints {
            sigma_inner: 0.3,
            sigma_outer: 1.5,
            d01: 30.0,
        }
    }
}

/// Gaussian-weighted mean of the map around (x, y), sigma in nm, kernel
/// truncated at 3 sigma, edges mirrored, weights normalized to 1.
fn footprint_mean(map: &PhaseMap, sigma_nm: f64, x: usize, y: usize) -> f64 {
    let sigma_px = sigma_nm / map.pixel_size;
    let reach = (3.0 * sigma_px).ceil() as i64;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma_px * sigma_px);
    let mut weight_sum = 0.0;
    let mut value_sum = 0.0;
    for dy in -reach..=reach {
        let yy = mirror_index(y as i64 + dy, map.height);
        for dx in -reach..=reach {
            let xx = mirror_index(x as i64 + dx, map.width);
            let w = (-((dx * dx + dy * dy) as f64) * inv_two_sigma_sq).exp();
            weight_sum += w;
            value_sum += w * map.get(xx, yy);
        }
    }
    value_sum / weight_sum
}

/// The signal a readout at pixel (x, y) actually measures: the map's mean
/// under the inner footprint minus its mean under the outer one, each
/// normalized, truncated at 3 sigma, and mirrored past the edges.
pub fn effective_delta_phi(
    map: &PhaseMap,
    footprints: &ProbeFootprints,
    x: usize,
    y: usize,
) -> f64 {
    debug_assert!(x < map.width && y < map.height, "pixel out of bounds");
    footprint_mean(map, footprints.sigma_inner, x, y)
        - footprint_mean(map, footprints.sigma_outer, x, y)
}

/// [`effective_delta_phi`] over the whole grid.
pub fn effective_map(map: &PhaseMap, footprints: &ProbeFootprints) -> PhaseMap {
    let values = (0..map.height)
        .flat_map(|y| (0..map.width).map(move |x| (x, y)))
        .map(|(x, y)| effective_delta_phi(map, footprints, x, y))
        .collect();
    PhaseMap {
        width: map.width,
        height: map.height,
        pixel_size: map.pixel_size,
        values,
    }
}

/// One image acquisition: specimen, dose budget, protocol depth and error
/// model, estimator, and the seed all randomness derives from.
#[derive(Debug, Clone)]
pub struct ImageJob {
    pub phase_map: PhaseMap,
    /// Electron dose in electrons per nm^2.
    pub dose: f64,
    /// Electrons per k-electron process.
    pub k: u32,
    pub footprints: ProbeFootprints,
    pub error_model: ErrorModel,
    pub estimator: Estimator,
    pub seed: u64,
}

impl ImageJob {
    /// Validate the acquisition: positive dose and at least one full
    /// k-electron process per pixel (N_px = dose * pixel_size^2 >= k).
    pub fn new(
        phase_map: PhaseMap,
        dose: f64,
        k: u32,
        footprints: ProbeFootprints,
        error_model: ErrorModel,
        estimator: Estimator,
        seed: u64,
    ) -> Result<Self> {
        if !(dose > 0.0) || !dose.is_finite() {
            return Err(Error::Config(format!(
                "dose must be positive and finite, got {dose}"
            )));
        }
        if k == 0 {
            return Err(Error::Config("process depth k must be at least 1".into()));
        }
        let n_px = dose * phase_map.pixel_size * phase_map.pixel_size;
        if n_px < f64::from(k) {
            return Err(Error::Config(format!(
                "pixel budget N_px = {n_px:.3} electrons cannot host one {k}-electron process; \
                 raise the dose or lower k"
            )));
        }
        Ok(ImageJob {
            phase_map,
            dose,
            k,
            footprints,
            error_model,
            estimator,
            seed,
        })
    }

    /// Electron budget per pixel, N_px = dose * pixel_size^2.
    pub fn electrons_per_pixel(&self) -> f64 {
        self.dose * self.phase_map.pixel_size * self.phase_map.pixel_size
    }

    /// Full k-electron processes per pixel, floor(N_px/k); the remainder of
    /// the budget is unused (and reported by the CLI).
    pub fn processes_per_pixel(&self) -> usize {
        (self.electrons_per_pixel() / f64::from(self.k)) as usize
    }
}

/// Measure every pixel with the entangled protocol; returns the estimate
/// map and the per-pixel spoil-rate map.
///
/// Pixel p runs its n processes from the stream (seed, p) against
/// dphi_eff(p) and feeds the job's estimator the outcomes its policy keeps.
/// A pixel whose processes were all spoiled and discarded has no usable
/// readouts; it reports estimate 0.0 and spoil rate 1.0 rather than
/// aborting the image.
pub fn simulate_entangled_image(job: &ImageJob) -> Result<(PhaseMap, PhaseMap)> {
    let dphi = effective_map(&job.phase_map, &job.footprints);
    let n = job.processes_per_pixel();
    let results: Vec<(f64, f64)> = dphi
        .values
        .par_iter()
        .enumerate()
        .map(|(p, &signal)| {
            let mut rng = Xoshiro256StarStar::stream(job.seed, p as u64);
            let mut outcomes = Vec::with_capacity(n);
            for _ in 0..n {
                outcomes.push(k_electron_process(job.k, signal, &job.error_model, &mut rng));
            }
            let spoiled = outcomes.iter().filter(|o| o.spoiled).count();
            let usable = usable_outcomes(&outcomes, job.error_model.policy);
            let estimate = if usable.is_empty() {
                0.0
            } else {
                estimate_phase(&usable, job.k, job.estimator)
                    .expect("usable outcomes are nonempty and k >= 1")
                    .0
            };
            (estimate, spoiled as f64 / n as f64)
        })
        .collect();
    let estimates = results.iter().map(|r| r.0).collect();
    let spoil_rates = results.iter().map(|r| r.1).collect();
    Ok((
        PhaseMap::new(dphi.width, dphi.height, dphi.pixel_size, estimates)?,
        PhaseMap::new(dphi.width, dphi.height, dphi.pixel_size, spoil_rates)?,
    ))
}

/// Measure every pixel with ideal in-focus phase contrast at the same
/// dose: dphi_eff plus zero-mean Gaussian noise of standard deviation
/// 1/sqrt(N_px) (the shot-noise limit), one draw per pixel from the stream
/// (seed, p).
pub fn simulate_conventional_image(job: &ImageJob) -> Result<PhaseMap> {
    let dphi = effective_map(&job.phase_map, &job.footprints);
    let sigma = 1.0 / job.electrons_per_pixel().sqrt();
    let values: Vec<f64> = dphi
        .values
        .par_iter()
        .enumerate()
        .map(|(p, &signal)| {
            let mut rng = Xoshiro256StarStar::stream(job.seed, p as u64);
            signal + sigma * rng.next_normal()
        })
        .collect();
    PhaseMap::new(dphi.width, dphi.height, dphi.pixel_size, values)
}

/// Separable Gaussian blur with standard deviation `sigma_nm` (in nm),
/// kernel truncated at 4 sigma and normalized, edges mirrored; sigma = 0
/// returns the map unchanged.
pub fn gaussian_smooth(map: &PhaseMap, sigma_nm: f64) -> PhaseMap {
    debug_assert!(
        sigma_nm >= 0.0 && sigma_nm.is_finite(),
        "smoothing sigma must be finite and non-negative, got {sigma_nm}"
    );
    if sigma_nm == 0.0 {
        return map.clone();
    }
    let sigma_px = sigma_nm / map.pixel_size;
    let reach = (4.0 * sigma_px).ceil() as i64;
    let mut kernel = Vec::with_capacity(2 * reach as usize + 1);
    for i in -reach..=reach {
        kernel.push((-(i * i) as f64 / (2.0 * sigma_px * sigma_px)).exp());
    }
    let total: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= total;
    }

    let (w, h) = (map.width, map.height);
    // Horizontal pass, then vertical.
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kw) in kernel.iter().enumerate() {
                let xx = mirror_index(x as i64 + j as i64 - reach, w);
                acc += kw * map.values[y * w + xx];
            }
            rows[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kw) in kernel.iter().enumerate() {
                let yy = mirror_index(y as i64 + j as i64 - reach, h);
                acc += kw * rows[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    PhaseMap {
        width: w,
        height: h,
        pixel_size: map.pixel_size,
        values: out,
    }
}

/// Negated 5-point Laplacian, out = 4*center - sum(4-neighbors), with
/// mirrored edges: a positive blob yields a positive center response, the
/// usual display convention for high-pass-filtered phase images.
pub fn laplacian_filter(map: &PhaseMap) -> Result<PhaseMap> {
    if map.width < 3 || map.height < 3 {
        return Err(Error::Config(format!(
            "the 5-point stencil needs at least 3x3 pixels, got {}x{}",
            map.width, map.height
        )));
    }
    let (w, h) = (map.width, map.height);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let left = map.values[y * w + mirror_index(x as i64 - 1, w)];
            let right = map.values[y * w + mirror_index(x as i64 + 1, w)];
            let up = map.values[mirror_index(y as i64 - 1, h) * w + x];
            let down = map.values[mirror_index(y as i64 + 1, h) * w + x];
            out[y * w + x] = 4.0 * map.values[y * w + x] - (left + right + up + down);
        }
    }
    Ok(PhaseMap {
        width: w,
        height: h,
        pixel_size: map.pixel_size,
        values: out,
    })
}

/// Default phantom amplitude: the few-mrad shift a protein complex in ice
/// imprints on a 300 keV electron.
pub const DEFAULT_PHANTOM_AMPLITUDE_RAD: f64 = 5e-3;

/// Built-in synthetic specimen shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum PhantomKind {
    /// Filled disc of radius 0.25 min(w, h).
    Disc,
    /// Annulus between radii 0.175 and 0.25 min(w, h).
    Shell,
    /// Horizontal cosine of period max(2, width/8) pixels.
    Sinusoid,
    /// Five fixed Gaussian blobs of sigma 0.06 min(w, h), peak-normalized.
    BlobCluster,
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disc" => Ok(PhantomKind::Disc),
            "shell" => Ok(PhantomKind::Shell),
            "sinusoid" => Ok(PhantomKind::Sinusoid),
            "blob-cluster" => Ok(PhantomKind::BlobCluster),
            other => Err(Error::Config(format!(
                "unknown phantom {other:?}; expected disc, shell, sinusoid, or blob-cluster"
            ))),
        }
    }
}

impl std::fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhantomKind::Disc => "disc",
            PhantomKind::Shell => "shell",
            PhantomKind::Sinusoid => "sinusoid",
            PhantomKind::BlobCluster => "blob-cluster",
        })
    }
}

/// Deterministic synthetic phase map with peak value `amplitude` rad
/// (capped at 0.5 rad: these phantoms stand in for weak phase objects).
pub fn make_phantom(
    kind: PhantomKind,
    amplitude: f64,
    width: usize,
    height: usize,
    pixel_size: f64,
) -> Result<PhaseMap> {
    if !(0.0..=0.5).contains(&amplitude) {
        return Err(Error::Config(format!(
            "phantom amplitude must lie in [0, 0.5] rad, got {amplitude}"
        )));
    }
    let base = PhaseMap::constant(width, height, pixel_size, 0.0)?;
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let scale = width.min(height) as f64;
    let values: Vec<f64> = match kind {
        PhantomKind::Disc => (0..width * height)
            .map(|p| {
                let (x, y) = (p % width, p / width);
                let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if r <= 0.25 * scale {
                    amplitude
                } else {
                    0.0
                }
            })
            .collect(),
        PhantomKind::Shell => (0..width * height)
            .map(|p| {
                let (x, y) = (p % width, p / width);
                let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if r >= 0.175 * scale && r <= 0.25 * scale {
                    amplitude
                } else {
                    0.0
                }
            })
            .collect(),
        PhantomKind::Sinusoid => {
            let period = (width as f64 / 8.0).max(2.0);
            (0..width * height)
                .map(|p| {
                    let x = (p % width) as f64;
                    amplitude * (2.0 * PI * x / period).cos()
                })
                .collect()
        }
        PhantomKind::BlobCluster => {
            let sigma = 0.06 * scale;
            let centers = [
                (0.32, 0.30),
                (0.68, 0.28),
                (0.50, 0.55),
                (0.30, 0.74),
                (0.70, 0.72),
            ];
            let raw: Vec<f64> = (0..width * height)
                .map(|p| {
                    let (x, y) = ((p % width) as f64, (p / width) as f64);
                    centers
                        .iter()
                        .map(|&(fx, fy)| {
                            let dx = x - fx * (width as f64 - 1.0);
                            let dy = y - fy * (height as f64 - 1.0);
                            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
                        })
                        .sum()
                })
                .collect();
            let peak = raw.iter().cloned().fold(0.0, f64::max);
            raw.iter().map(|&v| amplitude * v / peak).collect()
        }
    };
    Ok(PhaseMap { values, ..base })
}
