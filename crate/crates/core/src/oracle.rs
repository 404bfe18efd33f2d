//! Closed-form Gaussian entropies and augmented-MI values.
//!
//! Everything here is exact up to floating-point round-off and serves as the
//! reference the sampling estimators are checked against. Units are nats.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{jittered_cholesky, schur_condition, select_block, select_vector, spd_log_det};
use crate::scalar::Real;
use crate::state::{Action, BlockSet, GaussianDensity, StateLayout};

/// Which prior blocks an analytic evaluation runs over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subset {
    Full,
    Blocks(BlockSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiDims {
    /// Dimension of the prior handed in.
    pub full: usize,
    /// Dimension of the prior the value was computed over.
    pub evaluated: usize,
    /// Dimension of the blocks added by the action's transitions.
    pub new: usize,
}

/// `H[X] − H[X, X_new | Z]` with its two entropy terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedMiResult<T> {
    pub value: T,
    pub prior_entropy: T,
    pub posterior_entropy: T,
    pub dims: MiDims,
}

/// The three entropies of the superposition form,
/// `MI = −H[X_new | X] − H[Z | X, X_new] + H[Z]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpositionTerms<T> {
    pub transition_entropy: T,
    pub observation_entropy: T,
    pub marginal_observation_entropy: T,
}

impl<T: Real> SuperpositionTerms<T> {
    pub fn value(&self) -> T {
        -self.transition_entropy - self.observation_entropy + self.marginal_observation_entropy
    }
}

/// Joint density over `(prior blocks, new blocks, observation blocks)`.
#[derive(Debug, Clone)]
pub struct JointModel<T: Real> {
    pub joint: GaussianDensity<T>,
    pub prior_blocks: BlockSet,
    pub new_blocks: BlockSet,
    pub observation_blocks: BlockSet,
}

impl<T: Real> JointModel<T> {
    pub fn state_blocks(&self) -> BlockSet {
        self.prior_blocks.union(&self.new_blocks).cloned().collect()
    }
}

fn entropy_from_log_det<T: Real>(dim: usize, log_det: T) -> T {
    T::lit(0.5) * (T::from_count(dim) * (T::one() + T::ln_two_pi()) + log_det)
}

/// `0.5·ln((2πe)^d det Σ)`.
pub fn gaussian_entropy<T: Real>(g: &GaussianDensity<T>) -> T {
    entropy_from_log_det(g.dim(), g.log_det())
}

fn coords<T: Real>(g: &GaussianDensity<T>, set: &BlockSet) -> Result<Vec<usize>> {
    if let Some(missing) = set.iter().find(|id| !g.layout().contains(id)) {
        return Err(Error::UnknownBlock(missing.clone()));
    }
    Ok(g.layout()
        .blocks()
        .iter()
        .filter(|b| set.contains(&b.id))
        .flat_map(|b| b.range())
        .collect())
}

fn conditional_entropy_idx<T: Real>(cov: &DMatrix<T>, target: &[usize], given: &[usize]) -> Result<T> {
    if target.is_empty() {
        return Ok(T::zero());
    }
    let (cond, _) = schur_condition(cov, target, given)?;
    let log_det = spd_log_det(&cond, "conditional covariance")?;
    Ok(entropy_from_log_det(target.len(), log_det))
}

/// `H[target | given]` for blocks of a joint Gaussian; empty `given` gives the
/// marginal entropy and empty `target` gives zero.
pub fn conditional_entropy<T: Real>(
    joint: &GaussianDensity<T>,
    target: &BlockSet,
    given: &BlockSet,
) -> Result<T> {
    if let Some(shared) = target.intersection(given).next() {
        return Err(Error::OverlappingParts(shared.clone()));
    }
    conditional_entropy_idx(joint.covariance(), &coords(joint, target)?, &coords(joint, given)?)
}

/// Propagates the prior through the action's linear maps and noises.
pub fn joint_state_observation<T: Real>(
    prior: &GaussianDensity<T>,
    action: &Action<T>,
) -> Result<GaussianDensity<T>> {
    Ok(joint_model(prior, action)?.joint)
}

/// [`joint_state_observation`] plus the block partition of the result.
pub fn joint_model<T: Real>(prior: &GaussianDensity<T>, action: &Action<T>) -> Result<JointModel<T>> {
    let resolved = action.resolve(prior.layout())?;
    let mut layout = prior.layout().clone();
    let mut mean = prior.mean().clone();
    let mut cov = prior.covariance().clone();
    let models = action
        .transitions()
        .iter()
        .chain(action.observations().iter().map(|o| &o.model));
    for m in models {
        let idx = layout.coordinates_of(m.inputs())?;
        let a = m.matrix();
        let n = cov.nrows();
        let k = m.output_dim();
        let cross = a * select_block(&cov, &idx, &(0..n).collect::<Vec<_>>());
        let var = select_cols(&cross, &idx) * a.transpose() + m.noise_cov();
        let mut next = DMatrix::zeros(n + k, n + k);
        next.view_mut((0, 0), (n, n)).copy_from(&cov);
        next.view_mut((n, 0), (k, n)).copy_from(&cross);
        next.view_mut((0, n), (n, k)).copy_from(&cross.transpose());
        next.view_mut((n, n), (k, k)).copy_from(&var);
        let mut next_mean = DVector::zeros(n + k);
        next_mean.rows_mut(0, n).copy_from(&mean);
        next_mean
            .rows_mut(n, k)
            .copy_from(&(a * select_vector(&mean, &idx)));
        cov = next;
        mean = next_mean;
        layout = layout.with_block(m.output().clone(), k)?;
    }
    Ok(JointModel {
        joint: GaussianDensity::new(layout, mean, cov)?,
        prior_blocks: prior.layout().id_set(),
        new_blocks: resolved.new_layout.id_set(),
        observation_blocks: resolved.observation_layout.id_set(),
    })
}

fn select_cols<T: Real>(m: &DMatrix<T>, cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

/// Restricts the prior to `subset` after checking it covers the footprint.
pub fn restrict_prior<T: Real>(
    prior: &GaussianDensity<T>,
    action: &Action<T>,
    subset: &Subset,
) -> Result<GaussianDensity<T>> {
    let footprint = action.prior_footprint(prior.layout())?;
    match subset {
        Subset::Full => Ok(prior.clone()),
        Subset::Blocks(set) => {
            check_footprint(prior.layout(), action, &footprint, set)?;
            prior.marginalize(set)
        }
    }
}

pub(crate) fn check_footprint<T: Real>(
    layout: &StateLayout,
    action: &Action<T>,
    footprint: &BlockSet,
    set: &BlockSet,
) -> Result<()> {
    if let Some(unknown) = set.iter().find(|id| !layout.contains(id)) {
        return Err(Error::UnknownBlock(unknown.clone()));
    }
    if let Some(missing) = footprint.iter().find(|id| !set.contains(*id)) {
        return Err(Error::FootprintViolation {
            action: action.id().to_string(),
            block: missing.clone(),
        });
    }
    Ok(())
}

/// `H[X_S] − H[X_S, X_new | Z]` via Schur-complement conditioning.
pub fn augmented_mi_analytic<T: Real>(
    prior: &GaussianDensity<T>,
    action: &Action<T>,
    subset: &Subset,
) -> Result<AugmentedMiResult<T>> {
    let reduced = restrict_prior(prior, action, subset)?;
    let jm = joint_model(&reduced, action)?;
    let prior_entropy = gaussian_entropy(&reduced);
    let posterior_entropy = conditional_entropy(&jm.joint, &jm.state_blocks(), &jm.observation_blocks)?;
    Ok(AugmentedMiResult {
        value: prior_entropy - posterior_entropy,
        prior_entropy,
        posterior_entropy,
        dims: MiDims {
            full: prior.dim(),
            evaluated: reduced.dim(),
            new: jm.joint.dim() - reduced.dim() - obs_dim(&jm),
        },
    })
}

fn obs_dim<T: Real>(jm: &JointModel<T>) -> usize {
    jm.observation_blocks
        .iter()
        .map(|id| jm.joint.layout().get(id).map_or(0, |b| b.dim))
        .sum()
}

/// `H[A] + H[B] − H[A, B]`.
pub fn mi_analytic<T: Real>(joint: &GaussianDensity<T>, part_a: &BlockSet, part_b: &BlockSet) -> Result<T> {
    if part_a.is_empty() || part_b.is_empty() {
        return Err(Error::EmptySelection);
    }
    conditional_mi(joint, part_a, part_b, &BlockSet::new())
}

/// `H[A | C] + H[B | C] − H[A, B | C]`.
pub fn conditional_mi<T: Real>(
    joint: &GaussianDensity<T>,
    part_a: &BlockSet,
    part_b: &BlockSet,
    given: &BlockSet,
) -> Result<T> {
    if let Some(shared) = part_a.intersection(part_b).next() {
        return Err(Error::OverlappingParts(shared.clone()));
    }
    let ab: BlockSet = part_a.union(part_b).cloned().collect();
    Ok(conditional_entropy(joint, part_a, given)? + conditional_entropy(joint, part_b, given)?
        - conditional_entropy(joint, &ab, given)?)
}

/// The three conditional entropies of the superposition form over `involved`.
pub fn superposition_terms<T: Real>(
    prior: &GaussianDensity<T>,
    action: &Action<T>,
    involved: &BlockSet,
) -> Result<SuperpositionTerms<T>> {
    let reduced = restrict_prior(prior, action, &Subset::Blocks(involved.clone()))?;
    let jm = joint_model(&reduced, action)?;
    let state = jm.state_blocks();
    Ok(SuperpositionTerms {
        transition_entropy: conditional_entropy(&jm.joint, &jm.new_blocks, &jm.prior_blocks)?,
        observation_entropy: conditional_entropy(&jm.joint, &jm.observation_blocks, &state)?,
        marginal_observation_entropy: conditional_entropy(
            &jm.joint,
            &jm.observation_blocks,
            &BlockSet::new(),
        )?,
    })
}

/// `−H[X_new | X^inv] − H[Z | X^inv, X_new] + H[Z]`.
pub fn superposition_mi_analytic<T: Real>(
    prior: &GaussianDensity<T>,
    action: &Action<T>,
    involved: &BlockSet,
) -> Result<T> {
    Ok(superposition_terms(prior, action, involved)?.value())
}

/// `MI({X, X_new}; Z) − H[X_new | X]` over `subset`.
pub fn mi_minus_transition_entropy<T: Real>(
    prior: &GaussianDensity<T>,
    action: &Action<T>,
    subset: &Subset,
) -> Result<T> {
    let reduced = restrict_prior(prior, action, subset)?;
    let jm = joint_model(&reduced, action)?;
    let state = jm.state_blocks();
    let mi = if jm.observation_blocks.is_empty() {
        T::zero()
    } else {
        conditional_mi(&jm.joint, &state, &jm.observation_blocks, &BlockSet::new())?
    };
    Ok(mi - conditional_entropy(&jm.joint, &jm.new_blocks, &jm.prior_blocks)?)
}

/// Precomputed `p(state | z)` for a joint model: the covariance is fixed and
/// the mean is affine in `z`.
#[derive(Debug, Clone)]
pub struct LinearPosterior<T: Real> {
    state_layout: StateLayout,
    state_mean: DVector<T>,
    obs_mean: DVector<T>,
    gain: DMatrix<T>,
    covariance: DMatrix<T>,
    chol_lower: DMatrix<T>,
    obs_marginal: GaussianDensity<T>,
}

impl<T: Real> LinearPosterior<T> {
    pub fn new(jm: &JointModel<T>) -> Result<Self> {
        let state = jm.state_blocks();
        let (state_layout, state_idx) = jm.joint.layout().restrict(&state)?;
        let obs_idx = coords(&jm.joint, &jm.observation_blocks)?;
        let (covariance, gain) = schur_condition(jm.joint.covariance(), &state_idx, &obs_idx)?;
        let (covariance, chol) = jittered_cholesky(covariance, "posterior covariance")?;
        let obs_marginal = if jm.observation_blocks.is_empty() {
            None
        } else {
            Some(jm.joint.marginalize(&jm.observation_blocks)?)
        };
        let obs_mean = select_vector(jm.joint.mean(), &obs_idx);
        Ok(Self {
            state_layout,
            state_mean: select_vector(jm.joint.mean(), &state_idx),
            obs_mean,
            gain,
            chol_lower: chol.l(),
            covariance,
            obs_marginal: match obs_marginal {
                Some(g) => g,
                None => GaussianDensity::new(
                    StateLayout::new(Vec::<(String, usize)>::new())?,
                    DVector::zeros(0),
                    DMatrix::zeros(0, 0),
                )?,
            },
        })
    }

    pub fn state_layout(&self) -> &StateLayout {
        &self.state_layout
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.covariance
    }

    pub fn cholesky_lower(&self) -> &DMatrix<T> {
        &self.chol_lower
    }

    /// Predictive density of the observation vector.
    pub fn observation_marginal(&self) -> &GaussianDensity<T> {
        &self.obs_marginal
    }

    pub fn mean_given(&self, z: &DVector<T>) -> DVector<T> {
        &self.state_mean + &self.gain * (z - &self.obs_mean)
    }

    pub fn density_given(&self, z: &DVector<T>) -> Result<GaussianDensity<T>> {
        GaussianDensity::new(self.state_layout.clone(), self.mean_given(z), self.covariance.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{block_set, LinearGaussianModel, Observation};

    const H1: f64 = 1.418_938_533_204_672_7; // 0.5·ln(2πe)

    fn scalar_prior(var: f64) -> GaussianDensity<f64> {
        GaussianDensity::from_row_major(StateLayout::new([("x", 1)]).unwrap(), vec![0.0], vec![var])
            .unwrap()
    }

    fn chain(q: f64, r: f64, h: f64) -> Action<f64> {
        let t = LinearGaussianModel::from_rows("x1", &["x"], 1, &[1.0], &[q]).unwrap();
        let z = LinearGaussianModel::from_rows("z1", &["x1"], 1, &[h], &[r]).unwrap();
        Action::new("chain", vec![t], vec![Observation { step: 1, model: z }]).unwrap()
    }

    #[test]
    fn entropy_closed_forms() {
        assert!((gaussian_entropy(&scalar_prior(1.0)) - H1).abs() < 1e-12);
        assert!((gaussian_entropy(&scalar_prior(4.0)) - 2.112_085_713_764_618).abs() < 1e-12);
        let g = GaussianDensity::<f64>::from_row_major(
            StateLayout::new([("a", 2)]).unwrap(),
            vec![0.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        assert!((gaussian_entropy(&g) - 2.837_877_066_409_345).abs() < 1e-12);
    }

    #[test]
    fn joint_propagation_by_hand() {
        let t = LinearGaussianModel::from_rows("x1", &["x"], 1, &[1.0], &[1.0]).unwrap();
        let a = Action::new("t", vec![t], vec![]).unwrap();
        let j = joint_state_observation(&scalar_prior(1.0), &a).unwrap();
        assert_eq!(j.covariance().as_slice(), &[1.0, 1.0, 1.0, 2.0]);
        let j = joint_state_observation(&scalar_prior(1.0), &chain(1.0, 1.0, 1.0)).unwrap();
        let row: Vec<f64> = (0..3).map(|c| j.covariance()[(2, c)]).collect();
        assert_eq!(row, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn chain_value_matches_hand_schur() {
        // posterior cov over (x, x1) = [[2/3,1/3],[1/3,2/3]], det 1/3
        let expected = 0.5 * 3f64.ln() - H1;
        assert!((expected + 0.869_632_388_870_617_8).abs() < 1e-12);
        let r = augmented_mi_analytic(&scalar_prior(1.0), &chain(1.0, 1.0, 1.0), &Subset::Full).unwrap();
        assert!((r.value - expected).abs() < 1e-12);
        assert!((r.value - (r.prior_entropy - r.posterior_entropy)).abs() < 1e-12);
        assert_eq!(r.dims, MiDims { full: 1, evaluated: 1, new: 1 });
        let s = superposition_mi_analytic(&scalar_prior(1.0), &chain(1.0, 1.0, 1.0), &block_set(["x"]))
            .unwrap();
        assert!((s - expected).abs() < 1e-12);
    }

    #[test]
    fn uninformative_observation_gives_minus_transition_entropy() {
        let a = chain(2.0, 1.0, 0.0);
        let h_new = H1 + 0.5 * 2f64.ln();
        let r = augmented_mi_analytic(&scalar_prior(1.0), &a, &Subset::Full).unwrap();
        assert!((r.value + h_new).abs() < 1e-12);
        let s = superposition_mi_analytic(&scalar_prior(1.0), &a, &block_set(["x"])).unwrap();
        assert!((s + h_new).abs() < 1e-12);
    }

    #[test]
    fn mi_closed_forms() {
        let g = GaussianDensity::from_row_major(
            StateLayout::new([("x", 1), ("z", 1), ("u", 1)]).unwrap(),
            vec![0.0; 3],
            vec![1.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 3.0],
        )
        .unwrap();
        let v = mi_analytic(&g, &block_set(["x"]), &block_set(["z"])).unwrap();
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!(mi_analytic(&g, &block_set(["x"]), &block_set(["u"])).unwrap().abs() < 1e-12);
        assert!(matches!(
            mi_analytic(&g, &block_set(["x"]), &block_set(["x", "z"])),
            Err(Error::OverlappingParts(_))
        ));
    }

    #[test]
    fn missing_involved_block_is_an_error() {
        let prior = GaussianDensity::from_row_major(
            StateLayout::new([("x", 1), ("y", 1)]).unwrap(),
            vec![0.0; 2],
            vec![1.0, 0.5, 0.5, 1.0],
        )
        .unwrap();
        let r = augmented_mi_analytic(&prior, &chain(1.0, 1.0, 1.0), &Subset::Blocks(block_set(["y"])));
        assert!(matches!(r, Err(Error::FootprintViolation { .. })));
        let ok = augmented_mi_analytic(&prior, &chain(1.0, 1.0, 1.0), &Subset::Blocks(block_set(["x"])))
            .unwrap();
        let full = augmented_mi_analytic(&prior, &chain(1.0, 1.0, 1.0), &Subset::Full).unwrap();
        assert!((ok.value - full.value).abs() < 1e-12);
    }

    #[test]
    fn action_without_observations() {
        let t = LinearGaussianModel::from_rows("x1", &["x"], 1, &[1.0], &[3.0]).unwrap();
        let a = Action::new("t", vec![t], vec![]).unwrap();
        let r = augmented_mi_analytic(&scalar_prior(1.0), &a, &Subset::Full).unwrap();
        assert!((r.value + H1 + 0.5 * 3f64.ln()).abs() < 1e-12);
        let s = superposition_mi_analytic(&scalar_prior(1.0), &a, &block_set(["x"])).unwrap();
        assert!((s - r.value).abs() < 1e-12);
        let l = mi_minus_transition_entropy(&scalar_prior(1.0), &a, &Subset::Full).unwrap();
        assert!((l - r.value).abs() < 1e-12);
    }

    #[test]
    fn posterior_mean_is_affine() {
        let jm = joint_model(&scalar_prior(1.0), &chain(1.0, 1.0, 1.0)).unwrap();
        let post = LinearPosterior::new(&jm).unwrap();
        let m = post.mean_given(&DVector::from_vec(vec![3.0]));
        // E[x|z] = z/3, E[x1|z] = 2z/3
        assert!((m[0] - 1.0).abs() < 1e-12 && (m[1] - 2.0).abs() < 1e-12);
        assert!((post.covariance()[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert!((post.observation_marginal().covariance()[(0, 0)] - 3.0).abs() < 1e-12);
    }
}
