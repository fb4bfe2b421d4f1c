//! Power evolution of a wideband WDM comb under inter-channel stimulated
//! Raman scattering (SRS) in a single-mode fiber span.
//!
//! Two solvers share one physical model:
//!
//! * [`numerical`] — log-domain Euler/RK4 integration of the coupled
//!   channel-power ODEs; the reference path.
//! * [`perturbative`] — a regular-perturbation series in the integrated
//!   Raman coupling, orders computed recursively, with a closed-form
//!   first order and an analytic second order for flat loss.
//!
//! [`accuracy`] turns the series magnitudes into an a-priori remainder
//! bound and picks the lowest order meeting a dB tolerance. [`config`] and
//! [`runner`] wrap everything for file-driven runs and the bandwidth
//! benchmark sweep.
//!
//! Internals are strictly SI (Hz, m, W, 1/m); dB/THz/km appear only at I/O
//! boundaries (see [`units`]).
//!
//! ```
//! use ramancomb::{build_comb, integrate, Band, LaunchSpec, NumericalSettings};
//! use ramancomb::fiber::{FiberGeometry, FiberSpan, LossModel, RamanGainTable};
//!
//! # fn main() -> ramancomb::Result<()> {
//! let comb = build_comb(
//!     &[Band::standard("C")?],
//!     75e9,
//!     &LaunchSpec::Flat { power_dbm: -1.0 },
//! )?;
//! let span = FiberSpan::new(
//!     70_000.0,
//!     LossModel::Flat { alpha_db_km: 0.2 },
//!     FiberGeometry::default(),
//!     RamanGainTable::bundled(),
//! )?;
//! let settings = NumericalSettings { dz_m: 50.0, ..Default::default() };
//! let evo = integrate(&comb, &span, &settings)?;
//! // 14 dB of span loss, redistributed but not created
//! assert!(evo.total_power_at(evo.z_grid_m.len() - 1) < evo.total_power_at(0));
//! # Ok(())
//! # }
//! ```

pub mod accuracy;
pub mod config;
pub mod coupling;
pub mod error;
pub mod fiber;
pub mod numerical;
pub mod perturbative;
pub mod plot;
pub mod report;
pub mod runner;
pub mod spectrum;
pub mod units;

pub use accuracy::{bound_for_theta, relative_error, select_order, ErrorReport, OrderSelection};
pub use config::{Scenario, ScenarioConfig};
pub use coupling::CouplingMatrix;
pub use error::{Error, Result};
pub use fiber::{FiberGeometry, FiberSpan, GainConvention, LossModel, LossProfile, RamanGainTable};
pub use numerical::{integrate, NumericalSettings, PowerEvolution, Scheme};
pub use perturbative::{
    effective_length, gamma_first_order, truncated_power_profile, PerturbativeOrders,
    TruncatedSolution,
};
pub use spectrum::{build_comb, flat_launch, Band, LaunchSpec, WdmComb};
