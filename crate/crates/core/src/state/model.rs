use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, jittered_cholesky, row_major, symmetrize_checked};
use crate::scalar::Real;
use crate::state::{BlockId, BlockSet, StateLayout};

/// `output = matrix · inputs + w`, `w ~ N(0, noise_cov)`.
///
/// `inputs` is the dependency footprint; `output` names the block the model
/// produces (a new state block for transitions, a measurement for observations).
#[derive(Debug, Clone)]
pub struct LinearGaussianModel<T: Real> {
    output: BlockId,
    inputs: Vec<BlockId>,
    matrix: DMatrix<T>,
    noise_cov: DMatrix<T>,
    matrix_rm: Vec<T>,
    noise_lower_rm: Vec<T>,
    inv_diag: Vec<T>,
    log_norm: T,
}

impl<T: Real> LinearGaussianModel<T> {
    pub fn new(
        output: impl Into<BlockId>,
        inputs: Vec<BlockId>,
        matrix: DMatrix<T>,
        noise_cov: DMatrix<T>,
    ) -> Result<Self> {
        let output = output.into();
        let k = matrix.nrows();
        if k == 0 {
            return Err(Error::InvalidArgument(format!("model `{output}` has no outputs")));
        }
        if noise_cov.nrows() != k || noise_cov.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: noise_cov.nrows(),
                context: "noise covariance",
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("model `{output}` has non-finite matrix")));
        }
        let noise_cov = symmetrize_checked(noise_cov, "noise covariance")?;
        let (noise_cov, chol) = jittered_cholesky(noise_cov, "noise covariance")?;
        let log_norm =
            -T::lit(0.5) * (chol_log_det(&chol) + T::from_count(k) * T::ln_two_pi());
        let lower = chol.l();
        Ok(Self {
            output,
            inputs,
            inv_diag: lower.diagonal().iter().map(|d| T::one() / *d).collect(),
            matrix_rm: row_major(&matrix),
            noise_lower_rm: row_major(&lower),
            matrix,
            noise_cov,
            log_norm,
        })
    }

    /// Convenience constructor from row-major slices.
    pub fn from_rows(
        output: impl Into<BlockId>,
        inputs: &[&str],
        output_dim: usize,
        matrix: &[f64],
        noise_cov: &[f64],
    ) -> Result<Self> {
        if output_dim == 0 || !matrix.len().is_multiple_of(output_dim) {
            return Err(Error::InvalidArgument("matrix length not a multiple of output_dim".into()));
        }
        let cols = matrix.len() / output_dim;
        if noise_cov.len() != output_dim * output_dim {
            return Err(Error::DimensionMismatch {
                expected: output_dim * output_dim,
                found: noise_cov.len(),
                context: "noise covariance",
            });
        }
        let m = DMatrix::from_row_slice(output_dim, cols, matrix).map(T::lit);
        let q = DMatrix::from_row_slice(output_dim, output_dim, noise_cov).map(T::lit);
        Self::new(output, inputs.iter().map(|s| BlockId::from(*s)).collect(), m, q)
    }

    pub fn output(&self) -> &BlockId {
        &self.output
    }

    pub fn inputs(&self) -> &[BlockId] {
        &self.inputs
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn noise_cov(&self) -> &DMatrix<T> {
        &self.noise_cov
    }

    /// `ln N(output; matrix · inputs, noise_cov)`.
    pub fn log_density(&self, inputs: &[T], output: &[T]) -> Result<T> {
        if inputs.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: inputs.len(),
                context: "model inputs",
            });
        }
        if output.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                found: output.len(),
                context: "model output",
            });
        }
        let mut resid = vec![T::zero(); self.output_dim()];
        Ok(self.log_density_raw(inputs, output, &mut resid))
    }

    #[inline]
    pub(crate) fn log_density_raw(&self, inputs: &[T], output: &[T], resid: &mut [T]) -> T {
        let k = self.output_dim();
        let n = self.input_dim();
        let mut quad = T::zero();
        for r in 0..k {
            let row = &self.matrix_rm[r * n..(r + 1) * n];
            let mut pred = T::zero();
            for c in 0..n {
                pred += row[c] * inputs[c];
            }
            let lrow = &self.noise_lower_rm[r * k..(r + 1) * k];
            let mut v = output[r] - pred;
            for c in 0..r {
                v -= lrow[c] * resid[c];
            }
            v *= self.inv_diag[r];
            resid[r] = v;
            quad += v * v;
        }
        self.log_norm - T::lit(0.5) * quad
    }

    /// `L⁻¹ v` for the noise Cholesky factor `L`, in place.
    #[inline]
    pub(crate) fn whiten_in_place(&self, v: &mut [T]) {
        let k = self.output_dim();
        for r in 0..k {
            let lrow = &self.noise_lower_rm[r * k..(r + 1) * k];
            let mut acc = v[r];
            for c in 0..r {
                acc -= lrow[c] * v[c];
            }
            v[r] = acc * self.inv_diag[r];
        }
    }

    /// Whitened mean `L⁻¹ A u` written into `out`.
    pub(crate) fn whitened_mean(&self, inputs: &[T], out: &mut [T]) {
        let n = self.input_dim();
        for (r, o) in out.iter_mut().enumerate().take(self.output_dim()) {
            let row = &self.matrix_rm[r * n..(r + 1) * n];
            *o = row.iter().zip(inputs).fold(T::zero(), |a, (m, x)| a + *m * *x);
        }
        self.whiten_in_place(out);
    }

    pub(crate) fn log_norm(&self) -> T {
        self.log_norm
    }

    /// Draws an output for `inputs` into `out`; returns its log-density.
    #[inline]
    pub(crate) fn sample_raw<R: Rng + ?Sized>(
        &self,
        inputs: &[T],
        rng: &mut R,
        eps: &mut [T],
        out: &mut [T],
    ) -> T {
        let k = self.output_dim();
        let n = self.input_dim();
        let mut quad = T::zero();
        for e in eps.iter_mut().take(k) {
            let v = T::lit(rng.sample::<f64, _>(StandardNormal));
            *e = v;
            quad += v * v;
        }
        for r in 0..k {
            let row = &self.matrix_rm[r * n..(r + 1) * n];
            let mut acc = T::zero();
            for c in 0..n {
                acc += row[c] * inputs[c];
            }
            let lrow = &self.noise_lower_rm[r * k..(r + 1) * k];
            for c in 0..=r {
                acc += lrow[c] * eps[c];
            }
            out[r] = acc;
        }
        self.log_norm - T::lit(0.5) * quad
    }
}

/// Free-function form of [`LinearGaussianModel::log_density`].
pub fn log_density<T: Real>(model: &LinearGaussianModel<T>, inputs: &[T], output: &[T]) -> Result<T> {
    model.log_density(inputs, output)
}

#[derive(Debug, Clone)]
pub struct Observation<T: Real> {
    /// Number of transitions applied before this measurement is taken.
    pub step: usize,
    pub model: LinearGaussianModel<T>,
}

/// A candidate action: one transition per planning step plus the observations
/// taken along the way.
#[derive(Debug, Clone)]
pub struct Action<T: Real> {
    id: String,
    transitions: Vec<LinearGaussianModel<T>>,
    observations: Vec<Observation<T>>,
}

impl<T: Real> Action<T> {
    pub fn new(
        id: impl Into<String>,
        transitions: Vec<LinearGaussianModel<T>>,
        observations: Vec<Observation<T>>,
    ) -> Result<Self> {
        let id = id.into();
        let mut seen = BlockSet::new();
        for m in transitions.iter().chain(observations.iter().map(|o| &o.model)) {
            if !seen.insert(m.output().clone()) {
                return Err(Error::DuplicateBlock(m.output().clone()));
            }
        }
        if let Some(o) = observations.iter().find(|o| o.step > transitions.len()) {
            return Err(Error::InvalidArgument(format!(
                "action `{id}`: observation `{}` at step {} but only {} transitions",
                o.model.output(),
                o.step,
                transitions.len()
            )));
        }
        Ok(Self {
            id,
            transitions,
            observations,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn transitions(&self) -> &[LinearGaussianModel<T>] {
        &self.transitions
    }

    pub fn observations(&self) -> &[Observation<T>] {
        &self.observations
    }

    pub fn steps(&self) -> usize {
        self.transitions.len()
    }

    /// Resolves every input reference against `prior` and the blocks produced
    /// by earlier transitions; checks matrix widths.
    pub fn resolve(&self, prior: &StateLayout) -> Result<ResolvedAction> {
        let mut new_dims: BTreeMap<BlockId, usize> = BTreeMap::new();
        let mut new_order = Vec::new();
        let mut footprint = BlockSet::new();
        let check = |m: &LinearGaussianModel<T>,
                         available: &BTreeMap<BlockId, usize>,
                         footprint: &mut BlockSet|
         -> Result<()> {
            let mut width = 0;
            for input in m.inputs() {
                if let Some(b) = prior.get(input) {
                    width += b.dim;
                    footprint.insert(input.clone());
                } else if let Some(d) = available.get(input) {
                    width += d;
                } else {
                    return Err(Error::DanglingReference {
                        action: self.id.clone(),
                        block: input.clone(),
                    });
                }
            }
            if width != m.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    found: m.input_dim(),
                    context: "model matrix columns",
                });
            }
            Ok(())
        };
        let mut per_step: Vec<BTreeMap<BlockId, usize>> = vec![new_dims.clone()];
        for t in &self.transitions {
            if prior.contains(t.output()) {
                return Err(Error::DuplicateBlock(t.output().clone()));
            }
            check(t, &new_dims, &mut footprint)?;
            new_dims.insert(t.output().clone(), t.output_dim());
            new_order.push((t.output().clone(), t.output_dim()));
            per_step.push(new_dims.clone());
        }
        let mut obs_order = Vec::new();
        for o in &self.observations {
            if prior.contains(o.model.output()) {
                return Err(Error::DuplicateBlock(o.model.output().clone()));
            }
            check(&o.model, &per_step[o.step], &mut footprint)?;
            obs_order.push((o.model.output().clone(), o.model.output_dim()));
        }
        Ok(ResolvedAction {
            footprint,
            new_layout: StateLayout::new(new_order)?,
            observation_layout: StateLayout::new(obs_order)?,
        })
    }

    /// Prior blocks read by any transition or observation of this action.
    /// Every block id read by some model of the action, prior or new.
    pub fn referenced_blocks(&self) -> BlockSet {
        self.transitions
            .iter()
            .chain(self.observations.iter().map(|o| &o.model))
            .flat_map(|m| m.inputs().iter().cloned())
            .collect()
    }

    pub fn prior_footprint(&self, prior: &StateLayout) -> Result<BlockSet> {
        Ok(self.resolve(prior)?.footprint)
    }

    /// `self` followed by `next`; `next`'s observation steps are shifted.
    pub fn compose(&self, next: &Action<T>, id: impl Into<String>) -> Result<Action<T>> {
        let shift = self.transitions.len();
        let transitions = self
            .transitions
            .iter()
            .chain(next.transitions.iter())
            .cloned()
            .collect();
        let observations = self
            .observations
            .iter()
            .cloned()
            .chain(next.observations.iter().map(|o| Observation {
                step: o.step + shift,
                model: o.model.clone(),
            }))
            .collect();
        Action::new(id, transitions, observations)
    }

    /// Index plan for fast sampling and density evaluation against `prior`.
    pub fn compile(&self, prior: &StateLayout) -> Result<CompiledAction<'_, T>> {
        let resolved = self.resolve(prior)?;
        let prior_dim = prior.total_dim();
        let coords = |inputs: &[BlockId]| -> Vec<usize> {
            let mut out = Vec::new();
            for id in inputs {
                if let Some(b) = prior.get(id) {
                    out.extend(b.range());
                } else {
                    let b = resolved.new_layout.get(id).expect("resolved above");
                    out.extend(b.range().map(|c| c + prior_dim));
                }
            }
            out
        };
        let transitions = self
            .transitions
            .iter()
            .map(|m| Slot {
                model: m,
                input_coords: coords(m.inputs()),
                out_offset: resolved.new_layout.get(m.output()).unwrap().offset,
            })
            .collect();
        let observations = self
            .observations
            .iter()
            .map(|o| Slot {
                model: &o.model,
                input_coords: coords(o.model.inputs()),
                out_offset: resolved.observation_layout.get(o.model.output()).unwrap().offset,
            })
            .collect();
        let max_dim = self
            .transitions
            .iter()
            .chain(self.observations.iter().map(|o| &o.model))
            .map(|m| m.input_dim().max(m.output_dim()))
            .max()
            .unwrap_or(0);
        Ok(CompiledAction {
            prior_dim,
            new_dim: resolved.new_layout.total_dim(),
            obs_dim: resolved.observation_layout.total_dim(),
            resolved,
            transitions,
            observations,
            max_dim,
        })
    }
}

/// Result of resolving an action against a prior layout.
#[derive(Debug, Clone)]
pub struct ResolvedAction {
    pub footprint: BlockSet,
    pub new_layout: StateLayout,
    pub observation_layout: StateLayout,
}

#[derive(Debug)]
struct Slot<'a, T: Real> {
    model: &'a LinearGaussianModel<T>,
    input_coords: Vec<usize>,
    out_offset: usize,
}

/// Reusable buffers for [`CompiledAction`] hot loops.
#[derive(Debug, Clone)]
pub struct Scratch<T> {
    input: Vec<T>,
    aux: Vec<T>,
}

/// An action with all block references turned into flat coordinates over
/// `[prior | new]`, for allocation-free sampling and likelihood evaluation.
#[derive(Debug)]
pub struct CompiledAction<'a, T: Real> {
    prior_dim: usize,
    new_dim: usize,
    obs_dim: usize,
    resolved: ResolvedAction,
    transitions: Vec<Slot<'a, T>>,
    observations: Vec<Slot<'a, T>>,
    max_dim: usize,
}

impl<'a, T: Real> CompiledAction<'a, T> {
    pub fn prior_dim(&self) -> usize {
        self.prior_dim
    }

    pub fn new_dim(&self) -> usize {
        self.new_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn resolved(&self) -> &ResolvedAction {
        &self.resolved
    }

    pub fn scratch(&self) -> Scratch<T> {
        Scratch {
            input: vec![T::zero(); self.max_dim],
            aux: vec![T::zero(); self.max_dim],
        }
    }

    #[inline]
    fn gather(&self, coords: &[usize], prior: &[T], new: &[T], buf: &mut [T]) {
        let pd = self.prior_dim;
        for (dst, &c) in buf.iter_mut().zip(coords) {
            *dst = if c < pd { prior[c] } else { new[c - pd] };
        }
    }

    /// Samples every new block given a prior point; returns `ln F_T`.
    pub fn sample_transitions<R: Rng + ?Sized>(
        &self,
        prior: &[T],
        new_out: &mut [T],
        scratch: &mut Scratch<T>,
        rng: &mut R,
    ) -> T {
        let mut total = T::zero();
        for slot in &self.transitions {
            let n = slot.input_coords.len();
            self.gather(&slot.input_coords, prior, new_out, &mut scratch.input[..n]);
            let k = slot.model.output_dim();
            let (_, tail) = new_out.split_at_mut(slot.out_offset);
            total += slot.model.sample_raw(
                &scratch.input[..n],
                rng,
                &mut scratch.aux,
                &mut tail[..k],
            );
        }
        total
    }

    /// Samples the observation vector; returns `ln F_Z`.
    pub fn sample_observations<R: Rng + ?Sized>(
        &self,
        prior: &[T],
        new: &[T],
        z_out: &mut [T],
        scratch: &mut Scratch<T>,
        rng: &mut R,
    ) -> T {
        let mut total = T::zero();
        for slot in &self.observations {
            let n = slot.input_coords.len();
            self.gather(&slot.input_coords, prior, new, &mut scratch.input[..n]);
            let k = slot.model.output_dim();
            total += slot.model.sample_raw(
                &scratch.input[..n],
                rng,
                &mut scratch.aux,
                &mut z_out[slot.out_offset..slot.out_offset + k],
            );
        }
        total
    }

    /// `ln F_Z(z | prior, new)`.
    #[inline]
    pub fn log_observation(&self, prior: &[T], new: &[T], z: &[T], scratch: &mut Scratch<T>) -> T {
        let mut total = T::zero();
        for slot in &self.observations {
            let n = slot.input_coords.len();
            self.gather(&slot.input_coords, prior, new, &mut scratch.input[..n]);
            let k = slot.model.output_dim();
            total += slot.model.log_density_raw(
                &scratch.input[..n],
                &z[slot.out_offset..slot.out_offset + k],
                &mut scratch.aux,
            );
        }
        total
    }

    /// Sum of the observation models' log normalizing constants, the value
    /// of `ln F_Z` at zero whitened residual.
    pub fn observation_log_norm(&self) -> T {
        self.observations
            .iter()
            .fold(T::zero(), |a, s| a + s.model.log_norm())
    }

    /// Whitened observation means for a `(prior, new)` point; with
    /// [`Self::whiten_observation`] this gives
    /// `ln F_Z = observation_log_norm − ½‖ẑ − m̂‖²`.
    pub fn whitened_observation_mean(
        &self,
        prior: &[T],
        new: &[T],
        out: &mut [T],
        scratch: &mut Scratch<T>,
    ) {
        for slot in &self.observations {
            let n = slot.input_coords.len();
            self.gather(&slot.input_coords, prior, new, &mut scratch.input[..n]);
            let k = slot.model.output_dim();
            slot.model.whitened_mean(
                &scratch.input[..n],
                &mut out[slot.out_offset..slot.out_offset + k],
            );
        }
    }

    pub fn whiten_observation(&self, z: &[T], out: &mut [T]) {
        out.copy_from_slice(z);
        for slot in &self.observations {
            let k = slot.model.output_dim();
            slot.model
                .whiten_in_place(&mut out[slot.out_offset..slot.out_offset + k]);
        }
    }

    /// `ln F_T(new | prior)`.
    pub fn log_transition(&self, prior: &[T], new: &[T], scratch: &mut Scratch<T>) -> T {
        let mut total = T::zero();
        for slot in &self.transitions {
            let n = slot.input_coords.len();
            self.gather(&slot.input_coords, prior, new, &mut scratch.input[..n]);
            let k = slot.model.output_dim();
            total += slot.model.log_density_raw(
                &scratch.input[..n],
                &new[slot.out_offset..slot.out_offset + k],
                &mut scratch.aux,
            );
        }
        total
    }
}
