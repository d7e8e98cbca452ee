//! Time grids, random streams, paths and pathwise stochastic calculus.

pub mod calculus;
pub mod exact;
pub mod grid;
pub mod path;
pub mod rng;
pub mod strategy;

pub use calculus::{covariation, ito_integral, quadratic_variation, sample_brownian, stochastic_exponential, time_integral};
pub use exact::{
    integral_x_dw, simulate_x, simulate_x_stopped, substep, ExactSample, ReciprocalBesselStepper, TauHit, TauRule,
    DEFAULT_KAPPA,
};
pub use grid::{make_grid, TimeGrid};
pub use path::Path;
pub use rng::{RandomSource, SubStream};
pub use strategy::{constant_fraction, wealth_process, Strategy, WealthOutcome};
