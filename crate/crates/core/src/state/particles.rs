use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::state::{BlockSet, StateLayout};

/// Weighted particle approximation of a belief.
///
/// Particles are stored row-major in one flat buffer; weights are normalized
/// on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParticleSet<T> {
    layout: StateLayout,
    data: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> WeightedParticleSet<T> {
    pub fn new(layout: StateLayout, particles: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        let dim = layout.total_dim();
        if let Some((i, p)) = particles.iter().enumerate().find(|(_, p)| p.len() != dim) {
            return Err(Error::InvalidParticles(format!(
                "particle {i} has length {}, layout needs {dim}",
                p.len()
            )));
        }
        let data = particles.into_iter().flatten().collect();
        Self::from_flat(layout, data, weights)
    }

    pub fn from_flat(layout: StateLayout, data: Vec<T>, weights: Vec<T>) -> Result<Self> {
        let dim = layout.total_dim();
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidParticles("no particles".into()));
        }
        if data.len() != n * dim {
            return Err(Error::InvalidParticles(format!(
                "{} values for {n} particles of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParticles("non-finite coordinate".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::InvalidParticles("weights must be finite and non-negative".into()));
        }
        let total = weights.iter().fold(T::zero(), |a, w| a + *w);
        if !(total > T::zero()) {
            return Err(Error::InvalidParticles("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            layout,
            data,
            weights,
        })
    }

    /// Equal weights `1/N`.
    pub fn uniform(layout: StateLayout, data: Vec<T>) -> Result<Self> {
        let dim = layout.total_dim().max(1);
        let n = data.len() / dim;
        let w = T::one() / T::from_count(n.max(1));
        let mut set = Self::from_flat(layout, data, vec![T::one(); n])?;
        set.weights = vec![w; n];
        Ok(set)
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn particle(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        let d = self.dim().max(1);
        self.data.chunks(d).zip(self.weights.iter().copied())
    }

    /// Effective sample size `1/Σw²`.
    pub fn effective_size(&self) -> T {
        T::one() / self.weights.iter().fold(T::zero(), |a, w| a + *w * *w)
    }

    /// Projects every particle onto the blocks in `keep`; weights are untouched.
    pub fn marginalize(&self, keep: &BlockSet) -> Result<Self> {
        let (layout, coords) = self.layout.restrict(keep)?;
        let mut data = Vec::with_capacity(self.len() * coords.len());
        for (p, _) in self.iter() {
            data.extend(coords.iter().map(|&c| p[c]));
        }
        Ok(Self {
            layout,
            data,
            weights: self.weights.clone(),
        })
    }

    /// Appends the columns of `extra` (same particle count) after this set's blocks.
    pub fn append_columns(&self, extra_layout: &StateLayout, extra: &[T]) -> Result<Self> {
        let layout = self.layout.concat(extra_layout)?;
        let ed = extra_layout.total_dim();
        if extra.len() != ed * self.len() {
            return Err(Error::DimensionMismatch {
                expected: ed * self.len(),
                found: extra.len(),
                context: "appended particle columns",
            });
        }
        let mut data = Vec::with_capacity(self.len() * layout.total_dim());
        for (i, (p, _)) in self.iter().enumerate() {
            data.extend_from_slice(p);
            data.extend_from_slice(&extra[i * ed..(i + 1) * ed]);
        }
        Ok(Self {
            layout,
            data,
            weights: self.weights.clone(),
        })
    }
}

/// Free-function form of [`WeightedParticleSet::marginalize`].
pub fn marginalize_particles<T: Real>(
    b: &WeightedParticleSet<T>,
    keep: &BlockSet,
) -> Result<WeightedParticleSet<T>> {
    b.marginalize(keep)
}
