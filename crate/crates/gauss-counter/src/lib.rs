//! Exact total-photon-number statistics of multimode Gaussian states:
//! forward distributions, constructive inversion back to normal parameters,
//! Monte Carlo oracles, and maximum-likelihood fitting from counts.

pub mod error;
pub mod forward;
pub mod inverse;
pub mod kernel;
pub mod ml;
pub mod moments;
pub mod numeric;
pub mod oracle;
pub mod poly;
pub mod state;

pub use error::{GcError, Result};
pub use forward::{forward_distribution, forward_from_spec, PhotonDistribution};
pub use inverse::{invert_distribution, InversionOptions, InversionReport};
pub use ml::{fit, negative_log_likelihood, FitConfig, FitResult};
pub use oracle::{empirical_distribution, mc_probability, sample_counts, SampleRun};
pub use state::{extract_normal_parameters, GaussianStateSpec, NormalParameters};
