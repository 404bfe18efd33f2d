use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    chol_log_det, jittered_cholesky, schur_condition, select_block, select_vector,
    symmetrize_checked,
};
use crate::scalar::Real;
use crate::state::{BlockSet, StateLayout, WeightedParticleSet};

/// Multivariate normal over a block layout.
///
/// The covariance stored is the one that was actually factorized, i.e. after
/// the one-shot jitter when the raw input was only semi-definite.
#[derive(Debug, Clone)]
pub struct GaussianDensity<T: Real> {
    layout: StateLayout,
    mean: DVector<T>,
    covariance: DMatrix<T>,
    chol_lower: DMatrix<T>,
    log_det: T,
}

impl<T: Real> GaussianDensity<T> {
    pub fn new(layout: StateLayout, mean: DVector<T>, covariance: DMatrix<T>) -> Result<Self> {
        let d = layout.total_dim();
        if mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: mean.len(),
                context: "gaussian mean",
            });
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: covariance.nrows(),
                context: "gaussian covariance",
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite mean".into()));
        }
        let covariance = symmetrize_checked(covariance, "covariance")?;
        let (covariance, chol) = jittered_cholesky(covariance, "covariance")?;
        let log_det = chol_log_det(&chol);
        Ok(Self {
            layout,
            mean,
            covariance,
            chol_lower: chol.l(),
            log_det,
        })
    }

    pub fn from_row_major(layout: StateLayout, mean: Vec<T>, cov: Vec<T>) -> Result<Self> {
        let d = layout.total_dim();
        if cov.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: cov.len(),
                context: "row-major covariance",
            });
        }
        Self::new(
            layout,
            DVector::from_vec(mean),
            DMatrix::from_row_slice(d, d, &cov),
        )
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.covariance
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky_lower(&self) -> &DMatrix<T> {
        &self.chol_lower
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    pub fn marginalize(&self, keep: &BlockSet) -> Result<Self> {
        let (layout, coords) = self.layout.restrict(keep)?;
        Self::new(
            layout,
            select_vector(&self.mean, &coords),
            select_block(&self.covariance, &coords, &coords),
        )
    }

    /// Conditions on the blocks `given` taking the value `value` (concatenated in
    /// layout order) and returns the density over the remaining blocks.
    pub fn condition(&self, given: &BlockSet, value: &DVector<T>) -> Result<Self> {
        let (_, given_idx) = self.layout.restrict(given)?;
        if value.len() != given_idx.len() {
            return Err(Error::DimensionMismatch {
                expected: given_idx.len(),
                found: value.len(),
                context: "conditioning value",
            });
        }
        let rest: BlockSet = self
            .layout
            .ids()
            .filter(|id| !given.contains(*id))
            .cloned()
            .collect();
        let (rest_layout, rest_idx) = self.layout.restrict(&rest)?;
        let (cov, gain) = schur_condition(&self.covariance, &rest_idx, &given_idx)?;
        let innovation = value - select_vector(&self.mean, &given_idx);
        let mean = select_vector(&self.mean, &rest_idx) + gain * innovation;
        Self::new(rest_layout, mean, cov)
    }

    pub fn log_pdf(&self, x: &DVector<T>) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
                context: "log_pdf point",
            });
        }
        let r = x - &self.mean;
        let y = self
            .chol_lower
            .solve_lower_triangular(&r)
            .expect("factor has positive diagonal");
        let d = T::from_count(self.dim());
        Ok(-T::lit(0.5) * (y.norm_squared() + self.log_det + d * T::ln_two_pi()))
    }

    /// One draw written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, eps: &mut [T], out: &mut [T]) {
        let d = self.dim();
        for e in eps.iter_mut().take(d) {
            *e = T::lit(rng.sample::<f64, _>(StandardNormal));
        }
        for r in 0..d {
            let mut acc = self.mean[r];
            for c in 0..=r {
                acc += self.chol_lower[(r, c)] * eps[c];
            }
            out[r] = acc;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<WeightedParticleSet<T>> {
        if n == 0 {
            return Err(Error::InvalidArgument("particle count must be positive".into()));
        }
        let d = self.dim();
        let mut data = vec![T::zero(); n * d];
        let mut eps = vec![T::zero(); d];
        for chunk in data.chunks_mut(d.max(1)) {
            self.sample_into(rng, &mut eps, chunk);
        }
        WeightedParticleSet::uniform(self.layout.clone(), data)
    }
}

/// Free-function form of [`GaussianDensity::marginalize`].
pub fn marginalize_gaussian<T: Real>(
    g: &GaussianDensity<T>,
    keep: &BlockSet,
) -> Result<GaussianDensity<T>> {
    g.marginalize(keep)
}

/// `n` equally weighted draws from `g`.
pub fn sample_particles<T: Real, R: Rng + ?Sized>(
    g: &GaussianDensity<T>,
    n: usize,
    rng: &mut R,
) -> Result<WeightedParticleSet<T>> {
    g.sample(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::block_set;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_density(blocks: usize, seed: u64) -> GaussianDensity<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<(String, usize)> = (0..blocks).map(|i| (format!("b{i}"), 1 + i % 3)).collect();
        let layout = StateLayout::new(ids).unwrap();
        let d = layout.total_dim();
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
        let mean = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        GaussianDensity::new(layout, mean, cov).unwrap()
    }

    #[test]
    fn marginal_is_submatrix() {
        let l = StateLayout::new([("a", 1), ("b", 1)]).unwrap();
        let g = GaussianDensity::from_row_major(l, vec![0.0, 0.0], vec![1.0, 0.5, 0.5, 2.0])
            .unwrap();
        let m = marginalize_gaussian(&g, &block_set(["a"])).unwrap();
        assert_eq!(m.mean().as_slice(), &[0.0]);
        assert_eq!(m.covariance()[(0, 0)], 1.0);
        let all = g.marginalize(&block_set(["a", "b"])).unwrap();
        assert_eq!(all.covariance(), g.covariance());
    }

    #[test]
    fn marginal_of_marginal() {
        let g = random_density(10, 3);
        let ids: Vec<_> = g.layout().ids().cloned().collect();
        for k in 1..ids.len() {
            let outer: BlockSet = ids.iter().step_by(2).take(k).cloned().collect();
            let outer = if outer.is_empty() { block_set(["b0"]) } else { outer };
            let inner: BlockSet = outer.iter().take(1.max(outer.len() / 2)).cloned().collect();
            let twice = g.marginalize(&outer).unwrap().marginalize(&inner).unwrap();
            let once = g.marginalize(&inner).unwrap();
            assert_eq!(twice.mean(), once.mean());
            assert_eq!(twice.covariance(), once.covariance());
        }
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let l = StateLayout::new([("a", 2)]).unwrap();
        let r = GaussianDensity::from_row_major(l, vec![0.0, 0.0], vec![1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(r, Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn sampling_is_seeded_and_uniform() {
        let g = random_density(4, 1);
        let a = sample_particles(&g, 300, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_particles(&g, 300, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
        assert!(a.weights().iter().all(|w| (*w - 1.0 / 300.0).abs() < 1e-15));
        let one = sample_particles(&g, 1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(one.weights(), &[1.0]);
        assert!(sample_particles(&g, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn sample_mean_law_of_large_numbers() {
        let l = StateLayout::new([("a", 1), ("b", 1)]).unwrap();
        let g = GaussianDensity::from_row_major(l, vec![1.0, -2.0], vec![1.0, 0.3, 0.3, 4.0])
            .unwrap();
        let n = 1_000_000;
        let s = g.sample(n, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for (c, sigma) in [(0usize, 1.0f64), (1, 2.0)] {
            let m: f64 = s.iter().map(|(p, _)| p[c]).sum::<f64>() / n as f64;
            assert!((m - g.mean()[c]).abs() < 4.0 / (n as f64).sqrt() * sigma);
        }
    }

    #[test]
    fn conditioning_matches_hand_result() {
        // x ~ N(0,1), z = x + v, v ~ N(0,1): x | z ~ N(z/2, 1/2)
        let l = StateLayout::new([("x", 1), ("z", 1)]).unwrap();
        let g = GaussianDensity::from_row_major(l, vec![0.0, 0.0], vec![1.0, 1.0, 1.0, 2.0])
            .unwrap();
        let post: GaussianDensity<f64> = g.condition(&block_set(["z"]), &DVector::from_vec(vec![3.0])).unwrap();
        assert!((post.mean()[0] - 1.5).abs() < 1e-15);
        assert!((post.covariance()[(0, 0)] - 0.5).abs() < 1e-15);
    }
}
