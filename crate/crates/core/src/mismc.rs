//! Sequential Monte Carlo estimator of augmented MI from the superposition
//! form `−H[X_new | X^inv] − H[Z | X^inv, X_new] + H[Z]`.
//!
//! Prior particles are propagated through the transition and observation
//! models; the `H[Z]` term uses a nested estimate of the observation
//! normalizer. No posterior density is ever reconstructed.
//!
//! Every outer particle `i` draws from its own ChaCha stream keyed by
//! `(seed, i)`, so results do not depend on how the outer loop is chunked:
//! an accumulator fed 100 then 200 particles matches a 300-particle batch.
//! The normalizer particles are propagated once per seed on a separate
//! stream and shared by all sampled observations.

use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{Diagnostics, Method, MiEstimate, SampleCounts};
use crate::scalar::Real;
use crate::state::{Action, CompiledAction, Scratch, WeightedParticleSet};

/// Likelihood floor applied to the normalizer before taking its log.
pub const NORMALIZER_FLOOR: f64 = 1e-300;

/// Loop sizes: `n1` prior particles, `n2` transition draws per particle, `n3`
/// observation draws per transition, `n4` normalizer particles, `n5`
/// normalizer transition draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleBudget {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
    pub n5: usize,
}

impl SampleBudget {
    pub fn new(n1: usize, n2: usize, n3: usize, n4: usize, n5: usize) -> Result<Self> {
        let b = Self { n1, n2, n3, n4, n5 };
        b.validate()?;
        Ok(b)
    }

    /// `n1 = n4 = n`, all inner loops of size one.
    pub fn single(n: usize) -> Result<Self> {
        Self::new(n, 1, 1, n, 1)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.n1, self.n2, self.n3, self.n4, self.n5];
        if let Some(pos) = all.iter().position(|v| *v == 0) {
            return Err(Error::InvalidBudget(format!("n{} must be at least 1", pos + 1)));
        }
        Ok(())
    }

    /// Number of observation instances, `n1·n2·n3`.
    pub fn m(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    /// Normalizer samples per observation, `n4·n5`.
    pub fn n(&self) -> usize {
        self.n4 * self.n5
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizerEstimate<T> {
    /// `η̂⁻¹` after flooring.
    pub value: T,
    pub log_value: T,
    pub floored: bool,
}

/// Running log-sum-exp.
#[derive(Debug, Clone, Copy)]
struct LogSum<T> {
    max: T,
    acc: T,
    empty: bool,
}

impl<T: Real> LogSum<T> {
    fn new() -> Self {
        Self {
            max: T::zero(),
            acc: T::zero(),
            empty: true,
        }
    }

    #[inline]
    fn push(&mut self, v: T) {
        if !v.is_finite() {
            return;
        }
        if self.empty {
            self.max = v;
            self.acc = T::one();
            self.empty = false;
        } else if v > self.max {
            self.acc = self.acc * (self.max - v).exp() + T::one();
            self.max = v;
        } else {
            self.acc += (v - self.max).exp();
        }
    }

    fn value(&self) -> T {
        if self.empty {
            T::min_value().unwrap_or(-T::max_value().unwrap())
        } else {
            self.max + self.acc.ln()
        }
    }
}

enum NormalizerDraw {
    Enumerate,
    Resample(WeightedIndex<f64>),
}

/// Fixed inputs of one estimate: the prior set, the compiled action and the
/// loop sizes. Accumulators check they are fed by a matching context.
pub struct MismcContext<'a, T: Real> {
    prior: &'a WeightedParticleSet<T>,
    action_id: String,
    compiled: CompiledAction<'a, T>,
    budget: SampleBudget,
    log_weights: Vec<T>,
    normalizer: NormalizerDraw,
}

impl<'a, T: Real> MismcContext<'a, T> {
    pub fn new(
        prior: &'a WeightedParticleSet<T>,
        action: &'a Action<T>,
        budget: SampleBudget,
    ) -> Result<Self> {
        budget.validate()?;
        if budget.n1 > prior.len() {
            return Err(Error::InvalidBudget(format!(
                "n1 = {} exceeds the {} prior particles",
                budget.n1,
                prior.len()
            )));
        }
        let compiled = action.compile(prior.layout())?;
        let normalizer = if budget.n4 == prior.len() {
            NormalizerDraw::Enumerate
        } else {
            let w: Vec<f64> = prior.weights().iter().map(|w| w.as_f64()).collect();
            NormalizerDraw::Resample(
                WeightedIndex::new(&w).map_err(|e| Error::InvalidParticles(e.to_string()))?,
            )
        };
        Ok(Self {
            prior,
            action_id: action.id().to_string(),
            log_weights: prior.weights().iter().map(|w| w.ln()).collect(),
            compiled,
            budget,
            normalizer,
        })
    }

    pub fn budget(&self) -> SampleBudget {
        self.budget
    }

    fn tag(&self) -> ContextTag {
        ContextTag {
            action_id: self.action_id.clone(),
            n2: self.budget.n2,
            n3: self.budget.n3,
            n4: self.budget.n4,
            n5: self.budget.n5,
            particles: self.prior.len(),
            dim: self.prior.dim(),
        }
    }

    fn buffers(&self) -> Buffers<T> {
        Buffers {
            new: vec![T::zero(); self.compiled.new_dim()],
            z: vec![T::zero(); self.compiled.obs_dim()],
            zw: vec![T::zero(); self.compiled.obs_dim()],
            scratch: self.compiled.scratch(),
        }
    }

    /// Propagates the normalizer particles once: `n4·n5` new-block draws
    /// from a stream reserved for the normalizer, shared by every observation.
    fn normalizer_set(&self, seed: u64) -> NormalizerSet<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(NORMALIZER_STREAM);
        self.normalizer_set_from(&mut rng)
    }

    fn normalizer_set_from<R: Rng + ?Sized>(&self, rng: &mut R) -> NormalizerSet<T> {
        let (n4, n5) = (self.budget.n4, self.budget.n5);
        let nd = self.compiled.new_dim();
        let od = self.compiled.obs_dim();
        let ln_n5 = T::from_count(n5).ln();
        let ln_n4 = T::from_count(n4).ln();
        let mut log_weight = Vec::with_capacity(n4 * n5);
        let mut mean = vec![T::zero(); n4 * n5 * od];
        let mut new = vec![T::zero(); nd];
        let mut scratch = self.compiled.scratch();
        let mut row = 0;
        for l in 0..n4 {
            let (idx, lw) = match &self.normalizer {
                NormalizerDraw::Enumerate => (l, self.log_weights[l]),
                NormalizerDraw::Resample(dist) => (dist.sample(rng), -ln_n4),
            };
            let x = self.prior.particle(idx);
            for _ in 0..n5 {
                self.compiled
                    .sample_transitions(x, &mut new, &mut scratch, rng);
                self.compiled.whitened_observation_mean(
                    x,
                    &new,
                    &mut mean[row * od..(row + 1) * od],
                    &mut scratch,
                );
                log_weight.push(lw - ln_n5);
                row += 1;
            }
        }
        let shift = log_weight
            .iter()
            .copied()
            .filter(|v: &T| v.is_finite())
            .fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.max(v))))
            .unwrap_or_else(T::zero);
        for v in log_weight.iter_mut() {
            *v -= shift;
        }
        NormalizerSet {
            log_weight,
            mean,
            offset: shift + self.compiled.observation_log_norm(),
        }
    }

    /// `ln η̂⁻¹(z)` given the whitened observation `zw`.
    fn log_normalizer(&self, set: &NormalizerSet<T>, zw: &[T]) -> T {
        let od = zw.len();
        if od == 0 {
            return T::zero();
        }
        let half = T::lit(0.5);
        // every term is at most one, so the plain sum cannot overflow
        let mut total = T::zero();
        for (lw, m) in set.log_weight.iter().zip(set.mean.chunks_exact(od)) {
            let mut quad = T::zero();
            for (a, b) in zw.iter().zip(m) {
                let d = *a - *b;
                quad += d * d;
            }
            total += (*lw - half * quad).exp();
        }
        if total > T::lit(1e-250) {
            return set.offset + total.ln();
        }
        let mut sum = LogSum::new();
        for (lw, m) in set.log_weight.iter().zip(set.mean.chunks_exact(od)) {
            let mut quad = T::zero();
            for (a, b) in zw.iter().zip(m) {
                let d = *a - *b;
                quad += d * d;
            }
            sum.push(*lw - half * quad);
        }
        set.offset + sum.value()
    }

    /// Unweighted contributions `(value_1, value_2, value_3)` of outer particle `i`.
    fn particle_terms(
        &self,
        seed: u64,
        i: usize,
        set: &NormalizerSet<T>,
        buf: &mut Buffers<T>,
    ) -> (T, T, T, usize) {
        let mut rng = particle_rng(seed, i);
        let x = self.prior.particle(i);
        let n2 = T::from_count(self.budget.n2);
        let n23 = n2 * T::from_count(self.budget.n3);
        let floor = T::lit(NORMALIZER_FLOOR).ln();
        let (mut v1, mut v2, mut v3) = (T::zero(), T::zero(), T::zero());
        let mut floors = 0;
        for _ in 0..self.budget.n2 {
            let lt = self
                .compiled
                .sample_transitions(x, &mut buf.new, &mut buf.scratch, &mut rng);
            v1 += lt / n2;
            for _ in 0..self.budget.n3 {
                let lz = self.compiled.sample_observations(
                    x,
                    &buf.new,
                    &mut buf.z,
                    &mut buf.scratch,
                    &mut rng,
                );
                v2 += lz / n23;
                self.compiled.whiten_observation(&buf.z, &mut buf.zw);
                let mut le = self.log_normalizer(set, &buf.zw);
                if !(le >= floor) {
                    le = floor;
                    floors += 1;
                }
                v3 += le / n23;
            }
        }
        (v1, v2, v3, floors)
    }
}

/// Propagated normalizer particles, stored as whitened observation means
/// (row-major) with log weights relative to `offset`.
struct NormalizerSet<T> {
    log_weight: Vec<T>,
    mean: Vec<T>,
    offset: T,
}

/// Stream id reserved for normalizer propagation; outer particle `i` uses stream `i`.
const NORMALIZER_STREAM: u64 = u64::MAX;

struct Buffers<T> {
    new: Vec<T>,
    z: Vec<T>,
    zw: Vec<T>,
    scratch: Scratch<T>,
}

fn particle_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ContextTag {
    action_id: String,
    n2: usize,
    n3: usize,
    n4: usize,
    n5: usize,
    particles: usize,
    dim: usize,
}

/// Anytime state: weight-normalized running sums over the outer particles
/// consumed so far. The current estimate is always `sum1 + sum2 − sum3`.
#[derive(Debug, Clone, PartialEq)]
pub struct MismcAccumulator<T> {
    pub sum1: T,
    pub sum2: T,
    pub sum3: T,
    weight_mass: T,
    consumed: usize,
    seed: u64,
    floor_events: usize,
    elapsed: std::time::Duration,
    tag: Option<ContextTag>,
}

impl<T: Real> MismcAccumulator<T> {
    /// Empty accumulator whose particle streams derive from `seed`.
    pub fn new(seed: u64) -> Self {
        Self {
            sum1: T::zero(),
            sum2: T::zero(),
            sum3: T::zero(),
            weight_mass: T::zero(),
            consumed: 0,
            seed,
            floor_events: 0,
            elapsed: std::time::Duration::ZERO,
            tag: None,
        }
    }

    /// Empty accumulator seeded by one draw from `rng`.
    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(rng.random())
    }

    pub fn estimate(&self) -> T {
        self.sum1 + self.sum2 - self.sum3
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn floor_events(&self) -> usize {
        self.floor_events
    }

    pub fn to_estimate(&self, budget: SampleBudget) -> MiEstimate<T> {
        MiEstimate {
            value: self.estimate(),
            method: Method::Mismc,
            elapsed: self.elapsed,
            samples: SampleCounts::Mismc(SampleBudget {
                n1: self.consumed,
                ..budget
            }),
            seed: None,
            diagnostics: Diagnostics {
                clamp_events: 0,
                floor_events: self.floor_events,
            },
        }
    }
}

/// Consumes the next `additional_n1` outer particles of the context's prior.
pub fn mismc_update<T: Real>(
    acc: MismcAccumulator<T>,
    additional_n1: usize,
    ctx: &MismcContext<'_, T>,
) -> Result<MismcAccumulator<T>> {
    let tag = ctx.tag();
    if let Some(existing) = &acc.tag {
        if *existing != tag {
            return Err(Error::ContextMismatch(format!(
                "accumulator built for {existing:?}, context is {tag:?}"
            )));
        }
    }
    if additional_n1 == 0 {
        return Ok(acc);
    }
    let end = acc.consumed + additional_n1;
    if end > ctx.prior.len() {
        return Err(Error::InvalidBudget(format!(
            "{end} outer particles requested, prior holds {}",
            ctx.prior.len()
        )));
    }
    let start = Instant::now();
    let mut buf = ctx.buffers();
    let set = ctx.normalizer_set(acc.seed);
    let (mut s1, mut s2, mut s3) = (
        acc.sum1 * acc.weight_mass,
        acc.sum2 * acc.weight_mass,
        acc.sum3 * acc.weight_mass,
    );
    let mut mass = acc.weight_mass;
    let mut floors = acc.floor_events;
    for i in acc.consumed..end {
        let w = ctx.prior.weight(i);
        if w == T::zero() {
            continue;
        }
        let (v1, v2, v3, f) = ctx.particle_terms(acc.seed, i, &set, &mut buf);
        s1 += w * v1;
        s2 += w * v2;
        s3 += w * v3;
        mass += w;
        floors += f;
    }
    let norm = if mass > T::zero() { mass } else { T::one() };
    Ok(MismcAccumulator {
        sum1: s1 / norm,
        sum2: s2 / norm,
        sum3: s3 / norm,
        weight_mass: mass,
        consumed: end,
        seed: acc.seed,
        floor_events: floors,
        elapsed: acc.elapsed + start.elapsed(),
        tag: Some(tag),
    })
}

/// Batch estimate over the first `budget.n1` particles of `prior`.
pub fn mismc_estimate<T: Real, R: Rng + ?Sized>(
    prior: &WeightedParticleSet<T>,
    action: &Action<T>,
    budget: SampleBudget,
    rng: &mut R,
) -> Result<MiEstimate<T>> {
    let ctx = MismcContext::new(prior, action, budget)?;
    let acc = mismc_update(MismcAccumulator::from_rng(rng), budget.n1, &ctx)?;
    Ok(acc.to_estimate(budget))
}

/// Nested estimate `η̂⁻¹ = Σ_l w_l (1/n5) Σ_m F_Z(z | x_l, x_new^(l,m))`.
pub fn estimate_normalizer<T: Real, R: Rng + ?Sized>(
    prior: &WeightedParticleSet<T>,
    action: &Action<T>,
    z: &[T],
    n4: usize,
    n5: usize,
    rng: &mut R,
) -> Result<NormalizerEstimate<T>> {
    let budget = SampleBudget::new(1, 1, 1, n4, n5)?;
    let ctx = MismcContext::new(prior, action, budget)?;
    if z.len() != ctx.compiled.obs_dim() {
        return Err(Error::DimensionMismatch {
            expected: ctx.compiled.obs_dim(),
            found: z.len(),
            context: "observation vector",
        });
    }
    let set = ctx.normalizer_set_from(rng);
    let mut zw = vec![T::zero(); z.len()];
    ctx.compiled.whiten_observation(z, &mut zw);
    let log_value = ctx.log_normalizer(&set, &zw);
    let floor = T::lit(NORMALIZER_FLOOR);
    let value = log_value.exp();
    Ok(if value >= floor {
        NormalizerEstimate {
            value,
            log_value,
            floored: false,
        }
    } else {
        NormalizerEstimate {
            value: floor,
            log_value: floor.ln(),
            floored: true,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{augmented_mi_analytic, superposition_terms, Subset};
    use crate::state::{block_set, GaussianDensity, LinearGaussianModel, Observation, StateLayout};

    fn chain(h: f64) -> Action<f64> {
        let t = LinearGaussianModel::from_rows("x1", &["x"], 1, &[1.0], &[1.0]).unwrap();
        let z = LinearGaussianModel::from_rows("z1", &["x1"], 1, &[h], &[1.0]).unwrap();
        Action::new("chain", vec![t], vec![Observation { step: 1, model: z }]).unwrap()
    }

    fn prior_particles(n: usize, seed: u64) -> WeightedParticleSet<f64> {
        let g = GaussianDensity::from_row_major(StateLayout::new([("x", 1)]).unwrap(), vec![0.0], vec![1.0])
            .unwrap();
        g.sample(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn stats(v: &[f64]) -> (f64, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        (m, s)
    }

    #[test]
    fn budget_validation() {
        assert!(SampleBudget::new(1, 1, 0, 1, 1).is_err());
        let b = SampleBudget::new(3, 2, 5, 7, 11).unwrap();
        assert_eq!((b.m(), b.n()), (30, 77));
        let p = prior_particles(10, 1);
        assert!(mismc_estimate(&p, &chain(1.0), SampleBudget::single(11).unwrap(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn single_particle_normalizer_is_one_likelihood() {
        let p = prior_particles(1, 2);
        let a = chain(1.0);
        let z = [0.7];
        let est = estimate_normalizer(&p, &a, &z, 1, 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        // replay the single propagation draw
        let c = a.compile(p.layout()).unwrap();
        let mut s = c.scratch();
        let mut new = [0.0];
        c.sample_transitions(p.particle(0), &mut new, &mut s, &mut ChaCha8Rng::seed_from_u64(3));
        let direct = a.observations()[0].model.log_density(&new, &z).unwrap().exp();
        assert!((est.value - direct).abs() < 1e-14 * direct.max(1.0));
        assert!(!est.floored);
    }

    #[test]
    fn normalizer_matches_marginal_likelihood() {
        let a = chain(1.0);
        let z = [1.3f64];
        // z ~ N(0, 3) marginally
        let truth = (-0.5 * z[0] * z[0] / 3.0).exp() / (2.0 * std::f64::consts::PI * 3.0).sqrt();
        let vals: Vec<f64> = (0..20)
            .map(|s| {
                let p = prior_particles(10_000, 100 + s);
                estimate_normalizer(&p, &a, &z, 10_000, 1, &mut ChaCha8Rng::seed_from_u64(s)).unwrap().value
            })
            .collect();
        let (m, sd) = stats(&vals);
        assert!((m - truth).abs() < 3.0 * sd, "{m} vs {truth} (sd {sd})");
    }

    #[test]
    fn uninformative_observation_collapses_to_transition_term() {
        let a = chain(0.0);
        let p = prior_particles(200, 4);
        let ctx = MismcContext::new(&p, &a, SampleBudget::single(200).unwrap()).unwrap();
        let acc = mismc_update(MismcAccumulator::new(9), 200, &ctx).unwrap();
        assert!((acc.sum2 - acc.sum3).abs() < 1e-12);
        assert!((acc.estimate() - acc.sum1).abs() < 1e-12);
    }

    #[test]
    fn chain_estimate_is_consistent() {
        let a = chain(1.0);
        let prior = GaussianDensity::from_row_major(StateLayout::new([("x", 1)]).unwrap(), vec![0.0], vec![1.0])
            .unwrap();
        let truth = augmented_mi_analytic(&prior, &a, &Subset::Full).unwrap().value;
        let run = |n: usize| -> Vec<f64> {
            (0..30)
                .map(|s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(1000 + s);
                    let p = prior.sample(n, &mut rng).unwrap();
                    mismc_estimate(&p, &a, SampleBudget::single(n).unwrap(), &mut rng).unwrap().value
                })
                .collect()
        };
        let (m_small, s_small) = stats(&run(100));
        let (m_big, s_big) = stats(&run(1000));
        assert!((m_big - truth).abs() < 3.0 * s_big, "{m_big} vs {truth}");
        assert!((m_small - truth).abs() < 3.0 * s_small + 0.05);
        assert!(s_small / s_big > 2.0, "{s_small} / {s_big}");
    }

    #[test]
    fn terms_track_superposition_entropies() {
        let layout = StateLayout::new([("p", 2), ("l", 2)]).unwrap();
        let prior = GaussianDensity::from_row_major(
            layout,
            vec![0.0, 0.0, 3.0, 1.0],
            vec![
                0.5, 0.1, 0.2, 0.0, //
                0.1, 0.4, 0.0, 0.1, //
                0.2, 0.0, 2.0, 0.3, //
                0.0, 0.1, 0.3, 1.5,
            ],
        )
        .unwrap();
        let t = LinearGaussianModel::from_rows("p1", &["p"], 2, &[1.0, 0.0, 0.0, 1.0], &[0.1, 0.0, 0.0, 0.1]).unwrap();
        let z = LinearGaussianModel::from_rows(
            "z1",
            &["l", "p1"],
            2,
            &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0],
            &[0.2, 0.0, 0.0, 0.2],
        )
        .unwrap();
        let a = Action::new("obs", vec![t], vec![Observation { step: 1, model: z }]).unwrap();
        let terms = superposition_terms(&prior, &a, &block_set(["p", "l"])).unwrap();
        let mut per = (vec![], vec![], vec![]);
        for s in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let p = prior.sample(2000, &mut rng).unwrap();
            let ctx = MismcContext::new(&p, &a, SampleBudget::single(2000).unwrap()).unwrap();
            let acc: MismcAccumulator<f64> = mismc_update(MismcAccumulator::from_rng(&mut rng), 2000, &ctx).unwrap();
            assert!(acc.estimate().is_finite());
            per.0.push(acc.sum1);
            per.1.push(acc.sum2);
            per.2.push(acc.sum3);
        }
        for (v, reference) in [
            (&per.0, -terms.transition_entropy),
            (&per.1, -terms.observation_entropy),
            (&per.2, -terms.marginal_observation_entropy),
        ] {
            let (m, sd) = stats(v);
            assert!((m - reference).abs() < 3.0 * sd.max(1e-3), "{m} vs {reference} (sd {sd})");
        }
    }

    #[test]
    fn incremental_matches_batch() {
        let a = chain(1.0);
        let p = prior_particles(300, 6);
        let budget = SampleBudget::single(300).unwrap();
        let batch = mismc_estimate(&p, &a, budget, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let ctx = MismcContext::new(&p, &a, budget).unwrap();
        let acc = MismcAccumulator::from_rng(&mut ChaCha8Rng::seed_from_u64(77));
        let acc = mismc_update(acc, 100, &ctx).unwrap();
        let same = mismc_update(acc.clone(), 0, &ctx).unwrap();
        assert_eq!(same, acc);
        let acc = mismc_update(acc, 200, &ctx).unwrap();
        assert!((acc.estimate() - batch.value).abs() < 1e-12);
        assert_eq!(acc.consumed(), 300);
    }

    #[test]
    fn every_checkpoint_satisfies_the_sum_identity() {
        let a = chain(1.0);
        let p = prior_particles(100, 7);
        let ctx = MismcContext::new(&p, &a, SampleBudget::single(100).unwrap()).unwrap();
        let mut acc = MismcAccumulator::new(5);
        for _ in 0..10 {
            acc = mismc_update(acc, 10, &ctx).unwrap();
            assert_eq!(acc.estimate(), acc.sum1 + acc.sum2 - acc.sum3);
        }
        assert!(mismc_update(acc, 1, &ctx).is_err());
    }

    #[test]
    fn context_mismatch_is_rejected() {
        let a = chain(1.0);
        let p = prior_particles(50, 8);
        let c1 = MismcContext::new(&p, &a, SampleBudget::single(50).unwrap()).unwrap();
        let c2 = MismcContext::new(&p, &a, SampleBudget::new(50, 2, 1, 50, 1).unwrap()).unwrap();
        let acc = mismc_update(MismcAccumulator::new(1), 10, &c1).unwrap();
        assert!(matches!(mismc_update(acc, 10, &c2), Err(Error::ContextMismatch(_))));
    }

    #[test]
    fn replicated_particles_leave_estimate_statistically_unchanged() {
        let a = chain(1.0);
        let base = prior_particles(500, 9);
        let rows: Vec<Vec<f64>> = base
            .iter()
            .flat_map(|(x, _)| std::iter::repeat(x.to_vec()).take(3))
            .collect();
        let tripled = WeightedParticleSet::new(base.layout().clone(), rows, vec![1.0; 1500]).unwrap();
        let run = |p: &WeightedParticleSet<f64>, n4: usize| -> Vec<f64> {
            (0..20)
                .map(|s| {
                    mismc_estimate(p, &a, SampleBudget::new(p.len(), 1, 1, n4, 1).unwrap(), &mut ChaCha8Rng::seed_from_u64(s))
                        .unwrap()
                        .value
                })
                .collect()
        };
        let (m1, s1) = stats(&run(&base, 500));
        let (m3, s3) = stats(&run(&tripled, 1500));
        assert!((m1 - m3).abs() < 3.0 * (s1 * s1 / 20.0 + s3 * s3 / 20.0).sqrt() + 1e-3);
    }
}
