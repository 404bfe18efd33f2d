//! State layouts, beliefs and linear-Gaussian models.

mod gaussian;
mod layout;
mod model;
mod particles;

pub use gaussian::{marginalize_gaussian, sample_particles, GaussianDensity};
pub use layout::{block_set, BlockId, BlockSet, StateLayout, VariableBlock};
pub use model::{
    log_density, Action, CompiledAction, LinearGaussianModel, Observation, ResolvedAction,
    Scratch,
};
pub use particles::{marginalize_particles, WeightedParticleSet};

use crate::error::Result;
use crate::scalar::Real;

/// Either belief representation accepted by the MI calculators.
#[derive(Debug, Clone)]
pub enum Belief<T: Real> {
    Particles(WeightedParticleSet<T>),
    Gaussian(GaussianDensity<T>),
}

impl<T: Real> Belief<T> {
    pub fn layout(&self) -> &StateLayout {
        match self {
            Belief::Particles(p) => p.layout(),
            Belief::Gaussian(g) => g.layout(),
        }
    }

    pub fn marginalize(&self, keep: &BlockSet) -> Result<Self> {
        Ok(match self {
            Belief::Particles(p) => Belief::Particles(p.marginalize(keep)?),
            Belief::Gaussian(g) => Belief::Gaussian(g.marginalize(keep)?),
        })
    }
}

impl<T: Real> From<WeightedParticleSet<T>> for Belief<T> {
    fn from(p: WeightedParticleSet<T>) -> Self {
        Belief::Particles(p)
    }
}

impl<T: Real> From<GaussianDensity<T>> for Belief<T> {
    fn from(g: GaussianDensity<T>) -> Self {
        Belief::Gaussian(g)
    }
}
