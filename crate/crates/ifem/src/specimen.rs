//! Specimen composition and per-element scattering data.
//!
//! The target is a frozen-hydrated biological specimen: an amorphous ice
//! matrix with embedded protein, reduced to per-element volumetric number
//! densities for {H, C, N, O, S}. A slab of thickness t then has areal
//! densities n_el = density × t (atoms/nm²), and the dimensionless
//! per-Bohr-area counts N_el = n_el·a₀² that the speckle statistics use.
//!
//! Elastic scattering amplitudes come from either
//!
//! * the analytic screened-atom (Lenz/Wentzel) model,
//!   f(θ) = 2γZ / (a₀k²(θ² + θ₀²)),  θ₀ = Z^{1/3}/(k a₀),
//!   which is self-contained and accurate to tens of percent, or
//! * a tabulated per-element curve g_el(θ) = f_el(θ)/a₀ on an angle grid,
//!   interpolated linearly, for reproducing cross sections derived from
//!   published atomic-scattering data.
//!
//! Event probabilities follow the single-scattering (thin-specimen) rule:
//! probability = areal density × cross section, summed over elements. The
//! 30 nm reference slab gives an elastic scattering probability p_d ≈ 5.2%
//! with the tabulated amplitudes; bulk plasmon excitation is taken twice
//! as frequent, and inner-shell (K/L) ionization comes from a small
//! cross-section table since computing those from first principles is out
//! of scope here.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::constants::{AVOGADRO_PER_NM3, BOHR_RADIUS_NM};
use crate::kinematics::BeamParameters;
use crate::{quad, Error, Result};

/// The elements tracked in the specimen model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    H,
    C,
    N,
    O,
    S,
}

impl Element {
    pub const ALL: [Element; 5] = [Element::H, Element::C, Element::N, Element::O, Element::S];

    pub fn atomic_number(self) -> f64 {
        match self {
            Element::H => 1.0,
            Element::C => 6.0,
            Element::N => 7.0,
            Element::O => 8.0,
            Element::S => 16.0,
        }
    }

    /// Standard atomic weight in g/mol.
    pub fn atomic_mass(self) -> f64 {
        match self {
            Element::H => 1.008,
            Element::C => 12.011,
            Element::N => 14.007,
            Element::O => 15.999,
            Element::S => 32.06,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::S => "S",
        }
    }

    pub fn from_symbol(s: &str) -> Result<Element> {
        match s.trim() {
            "H" => Ok(Element::H),
            "C" => Ok(Element::C),
            "N" => Ok(Element::N),
            "O" => Ok(Element::O),
            "S" => Ok(Element::S),
            other => Err(Error::Config(format!("unknown element symbol {other:?}"))),
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Element::H => 0,
            Element::C => 1,
            Element::N => 2,
            Element::O => 3,
            Element::S => 4,
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Per-element number densities of a specimen slab.
#[derive(Debug, Clone)]
pub struct Composition {
    density: [f64; 5],
    thickness: f64,
}

impl Composition {
    /// Build a composition from volumetric densities (atoms/nm³; missing
    /// elements count as zero) and a slab thickness in nm.
    pub fn new(densities: &BTreeMap<Element, f64>, thickness_nm: f64) -> Result<Self> {
        if !(thickness_nm > 0.0) || !thickness_nm.is_finite() {
            return Err(Error::Domain(format!(
                "slab thickness must be positive and finite, got {thickness_nm} nm"
            )));
        }
        let mut density = [0.0; 5];
        for (&el, &d) in densities {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::Domain(format!(
                    "number density for {el} must be non-negative, got {d}"
                )));
            }
            density[el.index()] = d;
        }
        Ok(Self { density, thickness: thickness_nm })
    }

    /// Volumetric number density in atoms/nm³.
    pub fn volumetric_density(&self, el: Element) -> f64 {
        self.density[el.index()]
    }

    /// Areal number density n_el = density × thickness, atoms/nm².
    pub fn areal_density(&self, el: Element) -> f64 {
        self.density[el.index()] * self.thickness
    }

    /// Dimensionless areal count N_el = n_el · a₀² (atoms per squared Bohr
    /// radius), the natural unit for speckle statistics.
    pub fn atoms_per_bohr_area(&self, el: Element) -> f64 {
        self.areal_density(el) * (BOHR_RADIUS_NM * BOHR_RADIUS_NM)
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }
}

/// Reference volumetric densities of a typical frozen-hydrated biological
/// specimen, atoms/nm³.
const REFERENCE_DENSITIES: [(Element, f64); 5] = [
    (Element::H, 62.0),
    (Element::C, 6.4),
    (Element::N, 1.8),
    (Element::O, 28.0),
    (Element::S, 0.067),
];

/// The built-in reference composition at a given slab thickness.
pub fn builtin_composition(thickness_nm: f64) -> Result<Composition> {
    let map = REFERENCE_DENSITIES.iter().copied().collect();
    Composition::new(&map, thickness_nm)
}

/// Average elemental stoichiometry of one protein residue (atoms per
/// residue), from the Dayhoff (1978) amino-acid composition survey with a
/// water molecule condensed out of each free amino acid.
pub fn reference_residue_stoichiometry() -> BTreeMap<Element, f64> {
    // Free amino acid formulas (C, H, N, O, S) and Dayhoff frequencies.
    const AA: [([f64; 5], f64); 20] = [
        ([3.0, 7.0, 1.0, 2.0, 0.0], 0.087),  // Ala
        ([6.0, 14.0, 4.0, 2.0, 0.0], 0.041), // Arg
        ([4.0, 8.0, 2.0, 3.0, 0.0], 0.040),  // Asn
        ([4.0, 7.0, 1.0, 4.0, 0.0], 0.047),  // Asp
        ([3.0, 7.0, 1.0, 2.0, 1.0], 0.033),  // Cys
        ([5.0, 10.0, 2.0, 3.0, 0.0], 0.038), // Gln
        ([5.0, 9.0, 1.0, 4.0, 0.0], 0.050),  // Glu
        ([2.0, 5.0, 1.0, 2.0, 0.0], 0.089),  // Gly
        ([6.0, 9.0, 3.0, 2.0, 0.0], 0.034),  // His
        ([6.0, 13.0, 1.0, 2.0, 0.0], 0.037), // Ile
        ([6.0, 13.0, 1.0, 2.0, 0.0], 0.085), // Leu
        ([6.0, 14.0, 2.0, 2.0, 0.0], 0.081), // Lys
        ([5.0, 11.0, 1.0, 2.0, 1.0], 0.015), // Met
        ([9.0, 11.0, 1.0, 2.0, 0.0], 0.040), // Phe
        ([5.0, 9.0, 1.0, 2.0, 0.0], 0.051),  // Pro
        ([3.0, 7.0, 1.0, 3.0, 0.0], 0.070),  // Ser
        ([4.0, 9.0, 1.0, 3.0, 0.0], 0.058),  // Thr
        ([11.0, 12.0, 2.0, 2.0, 0.0], 0.010), // Trp
        ([9.0, 11.0, 1.0, 3.0, 0.0], 0.030), // Tyr
        ([5.0, 11.0, 1.0, 2.0, 0.0], 0.065), // Val
    ];
    let freq_sum: f64 = AA.iter().map(|(_, f)| f).sum();
    // Peptide-bond condensation removes one H2O per residue.
    let mut sums = [0.0; 5]; // order C, H, N, O, S
    for ([c, h, n, o, s], f) in AA {
        sums[0] += c * f;
        sums[1] += (h - 2.0) * f;
        sums[2] += n * f;
        sums[3] += (o - 1.0) * f;
        sums[4] += s * f;
    }
    [
        (Element::C, sums[0] / freq_sum),
        (Element::H, sums[1] / freq_sum),
        (Element::N, sums[2] / freq_sum),
        (Element::O, sums[3] / freq_sum),
        (Element::S, sums[4] / freq_sum),
    ]
    .into_iter()
    .collect()
}

/// Derive volumetric densities (atoms/nm³) from a two-phase mass balance:
/// a water phase of the given mass fraction and ice density, and a protein
/// phase with the given density and per-residue stoichiometry. Phase
/// volume fractions follow from the mass fractions and phase densities;
/// each phase contributes molecules/nm³ = density × 602.21408 / molar mass.
pub fn derive_composition(
    water_mass_fraction: f64,
    ice_density_g_cc: f64,
    protein_density_g_cc: f64,
    residue_stoichiometry: &BTreeMap<Element, f64>,
) -> Result<BTreeMap<Element, f64>> {
    if !(0.0..=1.0).contains(&water_mass_fraction) {
        return Err(Error::Domain(format!(
            "water mass fraction must lie in [0, 1], got {water_mass_fraction}"
        )));
    }
    if residue_stoichiometry.is_empty() {
        return Err(Error::Config(
            "residue stoichiometry table is empty".into(),
        ));
    }
    for (&el, &v) in residue_stoichiometry {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!(
                "stoichiometry for {el} must be non-negative, got {v}"
            )));
        }
    }
    let w = water_mass_fraction;
    let use_water = w > 0.0;
    let use_protein = w < 1.0;
    if use_water && !(ice_density_g_cc > 0.0) {
        return Err(Error::Domain(format!(
            "ice density must be positive, got {ice_density_g_cc} g/cc"
        )));
    }
    if use_protein && !(protein_density_g_cc > 0.0) {
        return Err(Error::Domain(format!(
            "protein density must be positive, got {protein_density_g_cc} g/cc"
        )));
    }

    // Volume fraction of the water phase from the mass balance.
    let v_w = if !use_water {
        0.0
    } else if !use_protein {
        1.0
    } else {
        let ww = w / ice_density_g_cc;
        ww / (ww + (1.0 - w) / protein_density_g_cc)
    };

    let mut densities: BTreeMap<Element, f64> =
        Element::ALL.iter().map(|&el| (el, 0.0)).collect();

    if use_water {
        let m_h2o = 2.0 * Element::H.atomic_mass() + Element::O.atomic_mass();
        let n_h2o = ice_density_g_cc * AVOGADRO_PER_NM3 / m_h2o;
        *densities.get_mut(&Element::H).unwrap() += v_w * n_h2o * 2.0;
        *densities.get_mut(&Element::O).unwrap() += v_w * n_h2o;
    }
    if use_protein {
        let m_res: f64 = residue_stoichiometry
            .iter()
            .map(|(&el, &c)| c * el.atomic_mass())
            .sum();
        if !(m_res > 0.0) {
            return Err(Error::Config(
                "residue stoichiometry has zero molar mass".into(),
            ));
        }
        let n_res = protein_density_g_cc * AVOGADRO_PER_NM3 / m_res;
        for (&el, &c) in residue_stoichiometry {
            *densities.get_mut(&el).unwrap() += (1.0 - v_w) * n_res * c;
        }
    }
    Ok(densities)
}

/// Screening angle θ₀ = Z^{1/3}/(k a₀) of the analytic screened atom.
pub fn screening_angle(atomic_number: f64, beam: &BeamParameters) -> f64 {
    atomic_number.cbrt() / (beam.wavenumber_k * BOHR_RADIUS_NM)
}

/// Tabulated dimensionless amplitudes g_el(θ) = f_el(θ)/a₀ on a shared
/// strictly increasing angle grid starting at θ = 0.
#[derive(Debug, Clone)]
pub struct AmplitudeTable {
    grid: Vec<f64>,
    curves: BTreeMap<Element, Vec<f64>>,
}

impl AmplitudeTable {
    /// Minimum angle the grid must reach, rad.
    pub const MIN_THETA_MAX: f64 = 0.2;

    pub fn new(grid: Vec<f64>, curves: BTreeMap<Element, Vec<f64>>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::Data("amplitude grid needs at least two angles".into()));
        }
        if grid[0] != 0.0 {
            return Err(Error::Data(format!(
                "amplitude grid must start at 0, got {}",
                grid[0]
            )));
        }
        for w in grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Data(format!(
                    "amplitude grid must strictly increase: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let theta_max = *grid.last().expect("grid is non-empty");
        if !(theta_max >= Self::MIN_THETA_MAX) {
            return Err(Error::Data(format!(
                "amplitude grid must reach at least {} rad, ends at {theta_max}",
                Self::MIN_THETA_MAX
            )));
        }
        if curves.is_empty() {
            return Err(Error::Data("amplitude table has no element curves".into()));
        }
        for (el, c) in &curves {
            if c.len() != grid.len() {
                return Err(Error::Data(format!(
                    "amplitude curve for {el} has {} values for {} grid angles",
                    c.len(),
                    grid.len()
                )));
            }
            if let Some(bad) = c.iter().find(|&&g| !(g >= 0.0) || !g.is_finite()) {
                return Err(Error::Data(format!(
                    "amplitude curve for {el} contains invalid value {bad}"
                )));
            }
        }
        Ok(Self { grid, curves })
    }

    /// Parse the CSV format `theta_rad,g_H,g_C,g_N,g_O,g_S`.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(format!("amplitude CSV header: {e}")))?
            .clone();
        let expected = ["theta_rad", "g_H", "g_C", "g_N", "g_O", "g_S"];
        if headers.iter().map(str::trim).ne(expected.iter().copied()) {
            return Err(Error::Data(format!(
                "amplitude CSV header must be {}, got {:?}",
                expected.join(","),
                headers
            )));
        }
        let mut grid = Vec::new();
        let mut cols: [Vec<f64>; 5] = Default::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("amplitude CSV row {}: {e}", i + 2)))?;
            if rec.len() != 6 {
                return Err(Error::Data(format!(
                    "amplitude CSV row {} has {} fields, expected 6",
                    i + 2,
                    rec.len()
                )));
            }
            let parse = |j: usize| -> Result<f64> {
                rec[j].trim().parse::<f64>().map_err(|e| {
                    Error::Data(format!("amplitude CSV row {} field {}: {e}", i + 2, j + 1))
                })
            };
            grid.push(parse(0)?);
            for (j, col) in cols.iter_mut().enumerate() {
                col.push(parse(j + 1)?);
            }
        }
        let [h, c, n, o, s] = cols;
        let curves = [
            (Element::H, h),
            (Element::C, c),
            (Element::N, n),
            (Element::O, o),
            (Element::S, s),
        ]
        .into_iter()
        .collect();
        Self::new(grid, curves)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn theta_max(&self) -> f64 {
        *self.grid.last().expect("grid is non-empty")
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn curve(&self, el: Element) -> Option<&[f64]> {
        self.curves.get(&el).map(Vec::as_slice)
    }

    /// Dimensionless g_el(θ) by linear interpolation, clamped to the last
    /// grid value beyond θ_max.
    pub fn g_at(&self, el: Element, theta: f64) -> Result<f64> {
        let curve = self.curves.get(&el).ok_or_else(|| {
            Error::Config(format!("amplitude table has no curve for element {el}"))
        })?;
        Ok(interp_clamped(&self.grid, curve, theta))
    }
}

/// Hot-path amplitude evaluator: one validated lookup up front, then
/// branch-light g(θ) evaluations inside quadratures and atom sums. Angles
/// are taken by absolute value (amplitudes are even) and clamped at π.
#[derive(Debug, Clone, Copy)]
pub(crate) enum AmplitudeEvaluator<'a> {
    Lenz { coef: f64, th0_sq: f64 },
    Table { grid: &'a [f64], curve: &'a [f64] },
}

impl AmplitudeEvaluator<'_> {
    /// Dimensionless g(θ) = f(θ)/a₀.
    #[inline]
    pub(crate) fn g(&self, theta: f64) -> f64 {
        let th = theta.abs().min(std::f64::consts::PI);
        match *self {
            AmplitudeEvaluator::Lenz { coef, th0_sq } => coef / (th * th + th0_sq),
            AmplitudeEvaluator::Table { grid, curve } => interp_clamped(grid, curve, th),
        }
    }

    /// Amplitude f(θ) in nm.
    #[inline]
    pub(crate) fn f_nm(&self, theta: f64) -> f64 {
        self.g(theta) * BOHR_RADIUS_NM
    }
}

pub(crate) fn amplitude_evaluator<'a>(
    src: &'a AmplitudeSource,
    element: Element,
    beam: &BeamParameters,
) -> Result<AmplitudeEvaluator<'a>> {
    match src {
        AmplitudeSource::Analytic { atomic_numbers } => {
            let z = *atomic_numbers.get(&element).ok_or_else(|| {
                Error::Config(format!("no atomic number configured for element {element}"))
            })?;
            let th0 = screening_angle(z, beam);
            let k = beam.wavenumber_k;
            let coef = 2.0 * beam.gamma * z / (BOHR_RADIUS_NM * BOHR_RADIUS_NM * k * k);
            Ok(AmplitudeEvaluator::Lenz { coef, th0_sq: th0 * th0 })
        }
        AmplitudeSource::Tabulated(table) => {
            let curve = table.curves.get(&element).ok_or_else(|| {
                Error::Config(format!("amplitude table has no curve for element {element}"))
            })?;
            Ok(AmplitudeEvaluator::Table { grid: &table.grid, curve })
        }
    }
}

/// Piecewise-linear interpolation on a sorted grid, clamping outside.
fn interp_clamped(grid: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= grid[0] {
        return values[0];
    }
    let last = grid.len() - 1;
    if x >= grid[last] {
        return values[last];
    }
    // partition_point gives the first index with grid[i] > x; x is strictly
    // inside the grid here so 1 <= i <= last.
    let i = grid.partition_point(|&g| g <= x);
    let (x0, x1) = (grid[i - 1], grid[i]);
    let t = (x - x0) / (x1 - x0);
    values[i - 1] + t * (values[i] - values[i - 1])
}

/// Where elastic amplitudes come from.
#[derive(Debug, Clone)]
pub enum AmplitudeSource {
    /// Screened-atom model with an explicit Z per element.
    Analytic { atomic_numbers: BTreeMap<Element, f64> },
    /// Interpolated per-element curves.
    Tabulated(AmplitudeTable),
}

impl AmplitudeSource {
    /// Analytic model with the standard Z of all five elements.
    pub fn analytic() -> Self {
        AmplitudeSource::Analytic {
            atomic_numbers: Element::ALL
                .iter()
                .map(|&el| (el, el.atomic_number()))
                .collect(),
        }
    }

    pub fn tabulated(table: AmplitudeTable) -> Self {
        AmplitudeSource::Tabulated(table)
    }

    /// The tabulated curves shipped with the library (300 keV).
    pub fn builtin_tabulated() -> Result<Self> {
        Ok(AmplitudeSource::Tabulated(builtin_amplitude_table()?))
    }
}

/// The amplitude table shipped with the library, valid at 300 keV.
pub fn builtin_amplitude_table() -> Result<AmplitudeTable> {
    AmplitudeTable::from_csv_str(include_str!("../data/elastic_amplitudes_300kev.csv"))
}

/// The inner-shell (K/L ionization) cross-section table shipped with the
/// library, nm² per atom, calibrated to the 30 nm reference slab.
pub fn builtin_inner_shell_table() -> Result<BTreeMap<Element, f64>> {
    inner_shell_from_csv_str(include_str!("../data/inner_shell_xsec.csv"))
}

/// Parse the CSV format `element,sigma_nm2`.
pub fn inner_shell_from_csv_str(text: &str) -> Result<BTreeMap<Element, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("inner-shell CSV header: {e}")))?
        .clone();
    let expected = ["element", "sigma_nm2"];
    if headers.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Data(format!(
            "inner-shell CSV header must be {}, got {:?}",
            expected.join(","),
            headers
        )));
    }
    let mut map = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("inner-shell CSV row {}: {e}", i + 2)))?;
        if rec.len() != 2 {
            return Err(Error::Data(format!(
                "inner-shell CSV row {} has {} fields, expected 2",
                i + 2,
                rec.len()
            )));
        }
        let el = Element::from_symbol(&rec[0])?;
        let sigma: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|e| Error::Data(format!("inner-shell CSV row {}: {e}", i + 2)))?;
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Data(format!(
                "inner-shell cross section for {el} must be non-negative, got {sigma}"
            )));
        }
        map.insert(el, sigma);
    }
    Ok(map)
}

pub fn inner_shell_from_csv_path(path: &Path) -> Result<BTreeMap<Element, f64>> {
    let text = std::fs::read_to_string(path)?;
    inner_shell_from_csv_str(&text)
}

/// Elastic scattering amplitude f_el(θ) in pm.
pub fn elastic_amplitude(
    src: &AmplitudeSource,
    element: Element,
    theta: f64,
    beam: &BeamParameters,
) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!(
            "scattering angle must be non-negative, got {theta}"
        )));
    }
    match src {
        AmplitudeSource::Analytic { atomic_numbers } => {
            let z = *atomic_numbers.get(&element).ok_or_else(|| {
                Error::Config(format!("no atomic number configured for element {element}"))
            })?;
            let th0 = screening_angle(z, beam);
            let k = beam.wavenumber_k;
            let f_nm = 2.0 * beam.gamma * z
                / (BOHR_RADIUS_NM * k * k * (theta * theta + th0 * th0));
            Ok(f_nm * 1.0e3)
        }
        AmplitudeSource::Tabulated(table) => {
            Ok(table.g_at(element, theta)? * BOHR_RADIUS_NM * 1.0e3)
        }
    }
}

/// Total elastic cross section σ_el = ∫₀^π |f_el(θ)|² 2π sinθ dθ in nm².
pub fn elastic_cross_section(
    src: &AmplitudeSource,
    element: Element,
    beam: &BeamParameters,
) -> Result<f64> {
    match src {
        AmplitudeSource::Analytic { atomic_numbers } => {
            let z = *atomic_numbers.get(&element).ok_or_else(|| {
                Error::Config(format!("no atomic number configured for element {element}"))
            })?;
            let th0 = screening_angle(z, beam);
            let k = beam.wavenumber_k;
            let c = 2.0 * beam.gamma * z / (BOHR_RADIUS_NM * k * k); // nm rad²
            let integrand = move |th: f64| {
                let f = c / (th * th + th0 * th0);
                f * f * 2.0 * std::f64::consts::PI * th.sin()
            };
            // The integrand peaks at the θ₀ scale; seed the subdivision
            // there so refinement starts on the right footing.
            let mut pts = vec![0.0, th0, 10.0 * th0, 100.0 * th0, std::f64::consts::PI];
            pts.retain(|&p| p < std::f64::consts::PI);
            pts.push(std::f64::consts::PI);
            quad::integrate_with_breakpoints(integrand, &pts, 0.0, 1e-11)
        }
        AmplitudeSource::Tabulated(table) => {
            let curve = table
                .curves
                .get(&element)
                .ok_or_else(|| {
                    Error::Config(format!("amplitude table has no curve for element {element}"))
                })?
                .as_slice();
            let grid = table.grid();
            let a0 = BOHR_RADIUS_NM;
            let integrand = move |th: f64| {
                let f = a0 * interp_clamped(grid, curve, th);
                f * f * 2.0 * std::f64::consts::PI * th.sin()
            };
            // Use every grid node as a break point: the interpolant has a
            // kink at each one, and each cell integrand is smooth.
            let mut pts: Vec<f64> = grid
                .iter()
                .copied()
                .filter(|&t| t < std::f64::consts::PI)
                .collect();
            pts.push(std::f64::consts::PI);
            quad::integrate_with_breakpoints(integrand, &pts, 0.0, 1e-10)
        }
    }
}

/// Elastic single-scattering probability p_d = Σ_el n_el σ_el.
pub fn total_elastic_probability(
    comp: &Composition,
    src: &AmplitudeSource,
    beam: &BeamParameters,
) -> Result<f64> {
    let mut p = 0.0;
    for &el in &Element::ALL {
        let n = comp.areal_density(el);
        if n > 0.0 {
            p += n * elastic_cross_section(src, el, beam)?;
        }
    }
    Ok(p)
}

/// Inner-shell ionization probability Σ_el n_el σ_el^{inner} from a
/// user-supplied cross-section table (nm² per atom).
pub fn inner_shell_probability(
    comp: &Composition,
    k_l_cross_sections: &BTreeMap<Element, f64>,
) -> Result<f64> {
    let missing: Vec<&str> = Element::ALL
        .iter()
        .filter(|&&el| comp.volumetric_density(el) > 0.0 && !k_l_cross_sections.contains_key(&el))
        .map(|&el| el.symbol())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "inner-shell cross-section table is missing entries for: {}",
            missing.join(", ")
        )));
    }
    let mut p = 0.0;
    for (&el, &sigma) in k_l_cross_sections {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!(
                "inner-shell cross section for {el} must be non-negative, got {sigma}"
            )));
        }
        p += comp.areal_density(el) * sigma;
    }
    Ok(p)
}

/// Bulk plasmon excitation probability wired to the elastic one: inelastic
/// scattering is taken to occur twice as often as elastic scattering.
pub fn inelastic_probability_from_elastic(p_d: f64) -> f64 {
    2.0 * p_d
}

/// Default plasmon excitation probability for the 30 nm reference slab:
/// 2 × 5.2% = 10.4%, rounded down to a working value of 10%.
pub const DEFAULT_INELASTIC_PROBABILITY: f64 = 0.10;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::electron_parameters;
    use std::f64::consts::PI;

    fn beam300() -> BeamParameters {
        electron_parameters(300.0).unwrap()
    }

    #[test]
    fn builtin_composition_reference_values() {
        let c = builtin_composition(30.0).unwrap();
        assert!((c.areal_density(Element::C) - 192.0).abs() < 1e-10);
        assert!((c.areal_density(Element::H) - 1860.0).abs() < 1e-10);
        assert!((c.areal_density(Element::N) - 54.0).abs() < 1e-10);
        assert!((c.areal_density(Element::O) - 840.0).abs() < 1e-10);
        assert!((c.areal_density(Element::S) - 2.01).abs() < 1e-10);
    }

    #[test]
    fn areal_density_vanishes_with_thickness() {
        let c = builtin_composition(1e-12).unwrap();
        for &el in &Element::ALL {
            assert!(c.areal_density(el) < 1e-9);
        }
        assert!(builtin_composition(0.0).is_err());
        assert!(builtin_composition(-1.0).is_err());
    }

    #[test]
    fn bohr_area_unit_identity() {
        let c = builtin_composition(30.0).unwrap();
        let a0sq = BOHR_RADIUS_NM * BOHR_RADIUS_NM;
        for &el in &Element::ALL {
            let ratio = c.atoms_per_bohr_area(el) / c.areal_density(el);
            assert!((ratio - a0sq).abs() / a0sq < 1e-15, "{el}: {ratio}");
        }
    }

    #[test]
    fn residue_stoichiometry_reference() {
        let sto = reference_residue_stoichiometry();
        let expect = [
            (Element::C, 4.826_173_826_173_826),
            (Element::H, 7.595_404_595_404_593_5),
            (Element::N, 1.359_640_359_640_359_5),
            (Element::O, 1.429_570_429_570_429_7),
            (Element::S, 0.047_952_047_952_047_945),
        ];
        for (el, want) in expect {
            let got = sto[&el];
            assert!((got - want).abs() / want < 1e-12, "{el}: {got} vs {want}");
        }
        let m_res: f64 = sto.iter().map(|(&el, &c)| c * el.atomic_mass()).sum();
        assert!((m_res - 109.076_864_135_864_13).abs() / m_res < 1e-12, "{m_res}");
    }

    #[test]
    fn derived_composition_matches_reference_slab() {
        let sto = reference_residue_stoichiometry();
        let d = derive_composition(0.76, 0.94, 1.35, &sto).unwrap();
        for (el, want) in REFERENCE_DENSITIES {
            let got = d[&el];
            assert!(
                (got / want - 1.0).abs() < 0.15,
                "{el}: derived {got} vs reference {want}"
            );
        }
        // Regression against the hand-computed mass balance.
        let frozen = [
            (Element::H, 61.7218),
            (Element::C, 6.4838),
            (Element::N, 1.8266),
            (Element::O, 27.6794),
            (Element::S, 0.064_422),
        ];
        for (el, want) in frozen {
            assert!((d[&el] / want - 1.0).abs() < 1e-4, "{el}: {}", d[&el]);
        }
    }

    #[test]
    fn pure_water_limit() {
        let sto = reference_residue_stoichiometry();
        let d = derive_composition(1.0, 0.94, f64::NAN, &sto).unwrap();
        assert!((d[&Element::O] / 31.4 - 1.0).abs() < 0.01, "O {}", d[&Element::O]);
        assert!((d[&Element::H] / 62.9 - 1.0).abs() < 0.01, "H {}", d[&Element::H]);
        assert_eq!(d[&Element::C], 0.0);
        assert_eq!(d[&Element::N], 0.0);
        assert_eq!(d[&Element::S], 0.0);
    }

    #[test]
    fn protein_only_with_carbon_table() {
        let table: BTreeMap<Element, f64> = [(Element::C, 1.0)].into_iter().collect();
        let d = derive_composition(0.0, f64::NAN, 1.35, &table).unwrap();
        assert!(d[&Element::C] > 0.0);
        for el in [Element::H, Element::N, Element::O, Element::S] {
            assert_eq!(d[&el], 0.0, "{el}");
        }
    }

    #[test]
    fn derive_composition_rejects_bad_inputs() {
        let sto = reference_residue_stoichiometry();
        assert!(matches!(
            derive_composition(1.5, 0.94, 1.35, &sto),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            derive_composition(0.76, 0.94, 1.35, &BTreeMap::new()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            derive_composition(0.76, -1.0, 1.35, &sto),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn analytic_amplitude_reference_points() {
        let beam = beam300();
        let src = AmplitudeSource::analytic();
        let f0 = elastic_amplitude(&src, Element::C, 0.0, &beam).unwrap();
        assert!((f0 - 305.223_126_188_708_1).abs() / f0 < 1e-12, "{f0}");
        // Closed form f(0) = 2 gamma Z^{1/3} a0.
        let closed = 2.0 * beam.gamma * 6.0_f64.cbrt() * BOHR_RADIUS_NM * 1e3;
        assert!((f0 - closed).abs() / f0 < 1e-12);
        // Half value at the screening angle.
        let th0 = screening_angle(6.0, &beam);
        let fh = elastic_amplitude(&src, Element::C, th0, &beam).unwrap();
        assert!((fh - f0 / 2.0).abs() / f0 < 1e-12);
        // Lorentzian decay at large angle.
        let ff = elastic_amplitude(&src, Element::C, 10.0, &beam).unwrap();
        assert!(ff < 1e-4 * f0, "{ff}");
    }

    #[test]
    fn screening_angles_reference() {
        let beam = beam300();
        let expect = [
            (Element::H, 5.921_163_057_365_014e-3),
            (Element::C, 1.075_946_732_505_487_9e-2),
            (Element::N, 1.132_677_745_071_343_2e-2),
            (Element::O, 1.184_232_611_473_002_8e-2),
            (Element::S, 1.492_039_595_166_813_3e-2),
        ];
        for (el, want) in expect {
            let got = screening_angle(el.atomic_number(), &beam);
            assert!((got - want).abs() / want < 1e-12, "{el}: {got}");
        }
    }

    #[test]
    fn amplitude_rejects_bad_inputs() {
        let beam = beam300();
        let src = AmplitudeSource::Analytic {
            atomic_numbers: [(Element::C, 6.0)].into_iter().collect(),
        };
        assert!(matches!(
            elastic_amplitude(&src, Element::S, 0.0, &beam),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            elastic_amplitude(&src, Element::C, -0.1, &beam),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn builtin_table_loads_and_interpolates() {
        let beam = beam300();
        let table = builtin_amplitude_table().unwrap();
        assert!(table.theta_max() >= AmplitudeTable::MIN_THETA_MAX);
        // At a grid node the interpolant equals the stored value.
        let grid = table.grid().to_vec();
        let j = 37;
        let g = table.curve(Element::C).unwrap()[j];
        let src = AmplitudeSource::Tabulated(table);
        let f = elastic_amplitude(&src, Element::C, grid[j], &beam).unwrap();
        assert!((f - g * BOHR_RADIUS_NM * 1e3).abs() / f < 1e-12);
        // Clamped beyond the grid.
        let f_end = elastic_amplitude(&src, Element::C, 10.0, &beam).unwrap();
        let f_pi = elastic_amplitude(&src, Element::C, PI, &beam).unwrap();
        assert_eq!(f_end, f_pi);
    }

    #[test]
    fn table_validation_rejects_bad_data() {
        let good_grid = vec![0.0, 0.1, 0.25];
        let curve = |v: f64| vec![v; 3];
        let curves = |v: f64| -> BTreeMap<Element, Vec<f64>> {
            [(Element::C, curve(v))].into_iter().collect()
        };
        assert!(AmplitudeTable::new(good_grid.clone(), curves(1.0)).is_ok());
        assert!(AmplitudeTable::new(vec![0.0, 0.1, 0.1], curves(1.0)).is_err());
        assert!(AmplitudeTable::new(vec![0.01, 0.1, 0.25], curves(1.0)).is_err());
        assert!(AmplitudeTable::new(vec![0.0, 0.1, 0.15], curves(1.0)).is_err());
        assert!(AmplitudeTable::new(good_grid.clone(), curves(-1.0)).is_err());
        let short: BTreeMap<Element, Vec<f64>> =
            [(Element::C, vec![1.0, 1.0])].into_iter().collect();
        assert!(AmplitudeTable::new(good_grid, short).is_err());
    }

    #[test]
    fn csv_header_is_enforced() {
        let bad = "theta,gH\n0.0,1.0\n";
        assert!(AmplitudeTable::from_csv_str(bad).is_err());
        let bad2 = "element,sigma\nC,1.0\n";
        assert!(inner_shell_from_csv_str(bad2).is_err());
    }

    #[test]
    fn analytic_cross_sections_reference() {
        let beam = beam300();
        let src = AmplitudeSource::analytic();
        let expect = [
            (Element::H, 3.107_431_441_952_819e-6),
            (Element::C, 3.387_490_750_942_081_6e-5),
            (Element::N, 4.160_369_604_733_204_4e-5),
            (Element::O, 4.971_030_237_531_075e-5),
            (Element::S, 1.252_464_919_833_037_6e-4),
        ];
        for (el, want) in expect {
            let got = elastic_cross_section(&src, el, &beam).unwrap();
            assert!((got / want - 1.0).abs() < 1e-7, "{el}: {got} vs {want}");
            // Small-angle closed form sigma = 4 pi gamma^2 Z^{4/3} / k^2.
            let closed = 4.0 * PI * beam.gamma * beam.gamma
                * el.atomic_number().powf(4.0 / 3.0)
                / (beam.wavenumber_k * beam.wavenumber_k);
            assert!((got / closed - 1.0).abs() < 1e-3, "{el}: {got} vs closed {closed}");
        }
    }

    #[test]
    fn cross_section_decreases_with_energy() {
        let src = AmplitudeSource::analytic();
        let mut last = f64::INFINITY;
        for t in [100.0, 200.0, 300.0] {
            let beam = electron_parameters(t).unwrap();
            let s = elastic_cross_section(&src, Element::C, &beam).unwrap();
            assert!(s < last, "sigma at {t} keV is {s}, previous {last}");
            last = s;
        }
    }

    #[test]
    fn elastic_probability_reference_slab() {
        let beam = beam300();
        let comp = builtin_composition(30.0).unwrap();

        let p_tab =
            total_elastic_probability(&comp, &AmplitudeSource::builtin_tabulated().unwrap(), &beam)
                .unwrap();
        assert!((p_tab / 0.052 - 1.0).abs() < 0.10, "tabulated p_d {p_tab}");
        assert!((p_tab / 5.201_074_807_070_9e-2 - 1.0).abs() < 1e-6, "{p_tab}");

        let p_an =
            total_elastic_probability(&comp, &AmplitudeSource::analytic(), &beam).unwrap();
        assert!(p_an / 0.052 < 3.0 && 0.052 / p_an < 3.0, "analytic p_d {p_an}");
        assert!((p_an / 5.653_880_375_454_444e-2 - 1.0).abs() < 1e-7, "{p_an}");
    }

    #[test]
    fn elastic_probability_vanishing_thickness() {
        let beam = beam300();
        let comp = builtin_composition(1e-300).unwrap();
        let p = total_elastic_probability(&comp, &AmplitudeSource::analytic(), &beam).unwrap();
        assert!(p < 1e-290, "{p}");
    }

    #[test]
    fn tabulated_analytic_sanity_ratio_logged() {
        // Data-vs-model agreement gate: logged, not asserted hard.
        let beam = beam300();
        let tab = AmplitudeSource::builtin_tabulated().unwrap();
        let an = AmplitudeSource::analytic();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for i in 0..=49 {
            let th = 1e-3 + (0.05 - 1e-3) * i as f64 / 49.0;
            let r = elastic_amplitude(&tab, Element::C, th, &beam).unwrap()
                / elastic_amplitude(&an, Element::C, th, &beam).unwrap();
            assert!(r.is_finite() && r > 0.0);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        eprintln!("carbon tabulated/analytic amplitude ratio over [1, 50] mrad: [{lo:.4}, {hi:.4}]");
    }

    #[test]
    fn inner_shell_reference_slab() {
        let comp = builtin_composition(30.0).unwrap();
        let table = builtin_inner_shell_table().unwrap();
        let p = inner_shell_probability(&comp, &table).unwrap();
        assert!((p / 8.6e-4 - 1.0).abs() < 1e-12, "{p}");

        // Doubling thickness doubles the probability exactly.
        let comp2 = builtin_composition(60.0).unwrap();
        let p2 = inner_shell_probability(&comp2, &table).unwrap();
        assert_eq!(p2, 2.0 * p);

        // All-zero cross sections give zero.
        let zeros: BTreeMap<Element, f64> =
            Element::ALL.iter().map(|&el| (el, 0.0)).collect();
        assert_eq!(inner_shell_probability(&comp, &zeros).unwrap(), 0.0);
    }

    #[test]
    fn inner_shell_missing_entries_listed() {
        let comp = builtin_composition(30.0).unwrap();
        let partial: BTreeMap<Element, f64> =
            [(Element::C, 1e-6), (Element::H, 0.0)].into_iter().collect();
        match inner_shell_probability(&comp, &partial) {
            Err(Error::Config(msg)) => {
                assert!(msg.contains('N') && msg.contains('O') && msg.contains('S'), "{msg}");
            }
            other => panic!("expected configuration error, got {other:?}"),
        }
    }

    #[test]
    fn inelastic_probability_wiring() {
        let p = inelastic_probability_from_elastic(0.052);
        assert!((p - 0.104).abs() < 1e-15, "{p}");
        assert_eq!(DEFAULT_INELASTIC_PROBABILITY, 0.10);
    }
}
