//! Augmented mutual information for planning over high-dimensional beliefs.
//!
//! The objective scored for an action is `H[X] − H[X, X_new | Z]`: the
//! information its future observations `Z` carry about the prior state `X`
//! together with the new state blocks `X_new` the action appends. The value
//! only depends on the prior blocks the action reads, so every estimator can
//! run on that small marginal (see [`invmi`]).
//!
//! * [`state`]: block layouts, particle sets, Gaussians, linear-Gaussian models
//! * [`oracle`]: closed-form values for linear-Gaussian problems
//! * [`estimators`]: KDE and the re-substitution entropy estimator
//! * [`mismc`]: sequential Monte Carlo estimator with anytime updates
//! * [`invmi`]: involved-block reduction and the calculator interface
//! * [`planner`]: belief-tree search with information rewards
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); `f64` aliases are
//! exported at the root.

pub mod error;
pub mod estimators;
pub mod invmi;
mod linalg;
pub mod mismc;
pub mod oracle;
pub mod planner;
pub mod scalar;
pub mod scenario;
pub mod seeds;
pub mod state;

pub use error::{Error, Result};
pub use estimators::{Method, MiEstimate};
pub use invmi::{determine_involved, invmi, union_involved, InvolvedSet, MiCalculator};
pub use mismc::{mismc_estimate, mismc_update, MismcAccumulator, SampleBudget};
pub use oracle::{augmented_mi_analytic, Subset};
pub use scalar::Real;
pub use state::{Action, Belief, BlockId, BlockSet, StateLayout};

pub type GaussianDensity64 = state::GaussianDensity<f64>;
pub type ParticleSet64 = state::WeightedParticleSet<f64>;
pub type Model64 = state::LinearGaussianModel<f64>;
pub type Action64 = state::Action<f64>;
pub type Belief64 = state::Belief<f64>;
pub type Scenario64 = scenario::Scenario<f64>;
pub type MiEstimate64 = estimators::MiEstimate<f64>;
