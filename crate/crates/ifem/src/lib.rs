//! Error-budget simulator for interaction-free electron microscopy.
//!
//! An entanglement-assisted transmission microscope probes each specimen
//! position with `k` electrons whose which-path state is tied to a
//! superconducting qubit, so the signal phase accumulates `k` times per
//! readout while the dose grows only linearly. Whether that trade wins in
//! practice is decided by the error budget: elastic scattering throws
//! speckle into the reference beam and spoils readouts, plasmon excitation
//! deflects the probe and leaves an uncompensable phase error, and
//! inner-shell ionization destroys the electron outright.
//!
//! The crates here quantify each budget line for a frozen-hydrated
//! biological specimen and chain them into an end-to-end Monte Carlo
//! imaging experiment:
//!
//! * [`kinematics`] — relativistic beam parameters (γ, β, k, λ).
//! * [`specimen`] — composition, elastic amplitudes, event probabilities.
//! * [`elastic_speckle`] — Gaussian-probe fields, speckle statistics, and
//!   the diverging-beam failure analysis (θ_c, p′_d).
//! * [`inelastic`] — plasmon angular law, wedge-prism phase errors, and a
//!   harmonic-chain plasmon model.
//! * [`protocol`] — the qubit-coupled k-electron process and its
//!   estimators.
//! * [`imaging`] — phantom images measured pixel-by-pixel with either the
//!   entangled protocol or a shot-noise-limited conventional baseline.
//! * [`verification`] — the built-in acceptance battery behind the CLI's
//!   `reproduce-paper` subcommand.
//!
//! Internal units are keV, nanometers, and radians throughout; conversions
//! happen at I/O boundaries only. All randomness flows through the
//! deterministic streams in [`rng`], so every simulation is reproducible
//! bit-for-bit regardless of thread count.

pub mod constants;
pub mod elastic_speckle;
mod error;
pub mod imaging;
pub mod inelastic;
pub mod kinematics;
pub mod linalg;
pub mod protocol;
pub mod quad;
pub mod rng;
pub mod specimen;
pub mod verification;

pub use error::{Error, Result};
