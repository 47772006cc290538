//! Semilinear radiative transport with multi-photon absorption: forward solvers,
//! diffusion limit, Peierls-operator spectral analysis and inversion from internal data.

pub mod angular;
pub mod banded;
pub mod diffusion;
pub mod error;
pub mod fd;
pub mod field;
pub mod forward;
pub mod geometry;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod krylov;
pub mod mpa;
pub mod peierls;
mod par;
pub mod scan;
pub mod scattering;
pub mod source;
pub mod spectral;
pub mod transport;

pub use angular::AngularQuadrature;
pub use error::{Error, Result};
pub use forward::{
    fixed_point_solve, internal_data, lemma_lower_bound, FixedPointConfig, ForwardSolution, InitialGuess,
};
pub use field::{angular_average, AngularField, ScalarField};
pub use geometry::{Domain, Point};
pub use grid::SpatialGrid;
pub use mpa::{MpaModel, SmoothingKernel};
pub use scattering::{am_gm_gap, apply_scattering, ScatteringModel};
pub use source::BoundarySource;
pub use transport::{
    attenuation, solve_linear_rte, solve_linear_rte_from, sweep, AttenuationCache, LinearMethod,
    LinearSolution, TransportConfig,
};
