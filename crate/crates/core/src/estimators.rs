//! Kernel density estimation, the re-substitution entropy estimator, and the
//! two KDE pipelines for augmented MI (full state and involved subset).

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mismc::SampleBudget;
use crate::oracle::{check_footprint, joint_model, LinearPosterior};
use crate::scalar::Real;
use crate::state::{Action, BlockSet, GaussianDensity, WeightedParticleSet};

/// Floor applied to KDE log densities.
pub const LOG_DENSITY_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule<T> {
    /// `h_j = σ_j · n_eff^(−1/(d+4))`
    Scott,
    /// `h_j = σ_j · (n_eff (d+2) / 4)^(−1/(d+4))`
    Silverman,
    Fixed(T),
}

/// Gaussian-kernel KDE settings. The bandwidth matrix is diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeConfig<T> {
    pub bandwidth: BandwidthRule<T>,
}

impl<T> Default for KdeConfig<T> {
    fn default() -> Self {
        Self {
            bandwidth: BandwidthRule::Scott,
        }
    }
}

impl<T: Real> KdeConfig<T> {
    pub fn fixed(h: T) -> Result<Self> {
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::InvalidArgument("fixed bandwidth must be positive".into()));
        }
        Ok(Self {
            bandwidth: BandwidthRule::Fixed(h),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Analytic,
    NaiveKde,
    InvmiKde,
    Mismc,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::NaiveKde => "naive_kde",
            Method::InvmiKde => "invmi_kde",
            Method::Mismc => "mismc",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampling budget actually spent by an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCounts {
    Analytic,
    Kde {
        prior_particles: usize,
        observation_draws: usize,
    },
    Mismc(SampleBudget),
}

impl SampleCounts {
    /// Headline particle count (prior particles for every sampling method).
    pub fn particles(&self) -> usize {
        match self {
            SampleCounts::Analytic => 0,
            SampleCounts::Kde {
                prior_particles, ..
            } => *prior_particles,
            SampleCounts::Mismc(b) => b.n1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Diagnostics {
    /// KDE log densities raised to [`LOG_DENSITY_FLOOR`].
    pub clamp_events: usize,
    /// Normalizer values raised to the likelihood floor.
    pub floor_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate<T> {
    pub value: T,
    pub method: Method,
    pub elapsed: Duration,
    pub samples: SampleCounts,
    pub seed: Option<u64>,
    pub diagnostics: Diagnostics,
}

impl<T> MiEstimate<T> {
    pub fn analytic(value: T, elapsed: Duration) -> Self {
        Self {
            value,
            method: Method::Analytic,
            elapsed,
            samples: SampleCounts::Analytic,
            seed: None,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Particle visiting order that does not depend on how the set was listed,
/// so sums come out bit-identical under permutation.
fn canonical_order<T: Real>(samples: &WeightedParticleSet<T>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| {
        samples
            .particle(a)
            .iter()
            .zip(samples.particle(b))
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(
                samples
                    .weight(a)
                    .partial_cmp(&samples.weight(b))
                    .unwrap_or(Ordering::Equal),
            )
    });
    idx
}

/// Per-coordinate bandwidths for `samples` under `cfg`.
pub fn bandwidths<T: Real>(samples: &WeightedParticleSet<T>, cfg: &KdeConfig<T>) -> Result<Vec<T>> {
    let d = samples.dim();
    match cfg.bandwidth {
        BandwidthRule::Fixed(h) => {
            if !(h > T::zero()) {
                return Err(Error::InvalidArgument("fixed bandwidth must be positive".into()));
            }
            Ok(vec![h; d])
        }
        rule => {
            let order = canonical_order(samples);
            let sum_w2 = order
                .iter()
                .fold(T::zero(), |a, &i| a + samples.weight(i) * samples.weight(i));
            let n_eff = T::one() / sum_w2;
            let correction = T::one() - sum_w2;
            let dd = T::from_count(d);
            let exponent = -T::one() / (dd + T::lit(4.0));
            let factor = match rule {
                BandwidthRule::Scott => n_eff.powf(exponent),
                _ => (n_eff * (dd + T::lit(2.0)) / T::lit(4.0)).powf(exponent),
            };
            let mut out = Vec::with_capacity(d);
            for c in 0..d {
                let mean = order
                    .iter()
                    .fold(T::zero(), |a, &i| a + samples.weight(i) * samples.particle(i)[c]);
                let ss = order.iter().fold(T::zero(), |a, &i| {
                    let r = samples.particle(i)[c] - mean;
                    a + samples.weight(i) * r * r
                });
                let var = if correction > T::zero() { ss / correction } else { T::zero() };
                let h = var.sqrt() * factor;
                if !(h > T::zero()) || !h.is_finite() {
                    return Err(Error::SingularBandwidth { coordinate: c });
                }
                out.push(h);
            }
            Ok(out)
        }
    }
}

/// A fitted Gaussian-kernel density with diagonal bandwidth.
#[derive(Debug, Clone)]
pub struct Kde<T: Real> {
    dim: usize,
    order: Vec<usize>,
    scaled: Vec<T>,
    weights: Vec<T>,
    inv_h: Vec<T>,
    log_norm: T,
}

impl<T: Real> Kde<T> {
    pub fn fit(samples: &WeightedParticleSet<T>, cfg: &KdeConfig<T>) -> Result<Self> {
        let h = bandwidths(samples, cfg)?;
        let dim = samples.dim();
        let inv_h: Vec<T> = h.iter().map(|v| T::one() / *v).collect();
        let order = canonical_order(samples);
        let mut scaled = Vec::with_capacity(samples.len() * dim);
        let mut weights = Vec::with_capacity(samples.len());
        for &i in &order {
            scaled.extend(samples.particle(i).iter().zip(&inv_h).map(|(x, s)| *x * *s));
            weights.push(samples.weight(i));
        }
        let log_norm = -h.iter().fold(T::zero(), |a, v| a + v.ln())
            - T::lit(0.5) * T::from_count(dim) * T::ln_two_pi();
        Ok(Self {
            dim,
            order,
            scaled,
            weights,
            inv_h,
            log_norm,
        })
    }

    pub fn bandwidths(&self) -> Vec<T> {
        self.inv_h.iter().map(|v| T::one() / *v).collect()
    }

    /// Log density at a query already divided by the bandwidth; returns the
    /// unclamped value.
    fn log_density_scaled(&self, q: &[T], exps: &mut Vec<T>) -> T {
        exps.clear();
        let mut best = T::min_value().unwrap_or(-T::max_value().unwrap());
        for p in self.scaled.chunks(self.dim.max(1)) {
            let mut s = T::zero();
            for (a, b) in p.iter().zip(q) {
                let r = *a - *b;
                s += r * r;
            }
            let e = -T::lit(0.5) * s;
            if e > best {
                best = e;
            }
            exps.push(e);
        }
        let mut acc = T::zero();
        for (e, w) in exps.iter().zip(&self.weights) {
            acc += *w * (*e - best).exp();
        }
        self.log_norm + best + acc.ln()
    }

    fn clamp(v: T, clamps: &mut usize) -> T {
        let floor = T::lit(LOG_DENSITY_FLOOR);
        if v < floor || !v.is_finite() {
            *clamps += 1;
            floor
        } else {
            v
        }
    }

    pub fn log_density(&self, query: &[T]) -> Result<T> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
                context: "KDE query",
            });
        }
        let q: Vec<T> = query.iter().zip(&self.inv_h).map(|(x, s)| *x * *s).collect();
        let mut exps = Vec::with_capacity(self.weights.len());
        let mut clamps = 0;
        Ok(Self::clamp(self.log_density_scaled(&q, &mut exps), &mut clamps))
    }

    /// `−Σ_i w_i ln b̂(x_i)` over the fitted samples; second value counts clamps.
    pub fn resubstitution(&self) -> (T, usize) {
        let mut exps = Vec::with_capacity(self.weights.len());
        let mut clamps = 0;
        let mut total = T::zero();
        for (p, w) in self.scaled.chunks(self.dim.max(1)).zip(&self.weights) {
            let v = Self::clamp(self.log_density_scaled(p, &mut exps), &mut clamps);
            total += *w * v;
        }
        (-total, clamps)
    }

    /// Position of each fitted sample in the canonical order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// `ln Σ_i w_i K_H(query − x_i)` with a Gaussian kernel.
pub fn kde_log_density<T: Real>(
    samples: &WeightedParticleSet<T>,
    cfg: &KdeConfig<T>,
    query: &[T],
) -> Result<T> {
    Kde::fit(samples, cfg)?.log_density(query)
}

/// Re-substitution entropy estimate `−Σ_i w_i ln b̂(x_i)` in nats.
pub fn resubstitution_entropy<T: Real>(samples: &WeightedParticleSet<T>, cfg: &KdeConfig<T>) -> Result<T> {
    Ok(Kde::fit(samples, cfg)?.resubstitution().0)
}

/// Shared KDE pipeline: `Ĥ[X] − Ê_Z Ĥ[X, X_new | Z]` with posterior draws
/// taken from the exact linear-Gaussian conditional (perfect inference).
///
/// Each of the `n` observation draws contributes one posterior sample,
/// expressed relative to its own conditional mean; the pooled residuals are a
/// sample of the (observation-independent) posterior shape.
fn kde_pipeline<T: Real, R: Rng + ?Sized>(
    prior: &GaussianDensity<T>,
    action: &Action<T>,
    n: usize,
    cfg: &KdeConfig<T>,
    rng: &mut R,
    method: Method,
) -> Result<MiEstimate<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument("KDE pipelines need at least 2 particles".into()));
    }
    let start = Instant::now();
    let prior_samples = prior.sample(n, rng)?;
    let prior_kde = Kde::fit(&prior_samples, cfg)?;
    let (prior_entropy, c1) = prior_kde.resubstitution();

    let jm = joint_model(prior, action)?;
    let posterior = LinearPosterior::new(&jm)?;
    let obs = posterior.observation_marginal();
    let sd = posterior.state_layout().total_dim();
    let od = obs.dim();
    let mut z = vec![T::zero(); od];
    let mut eps = vec![T::zero(); sd.max(od)];
    let mut residuals = vec![T::zero(); n * sd];
    let chol = posterior.cholesky_lower();
    for i in 0..n {
        obs.sample_into(rng, &mut eps, &mut z);
        let mean = posterior.mean_given(&DVector::from_column_slice(&z));
        let row = &mut residuals[i * sd..(i + 1) * sd];
        for e in eps.iter_mut().take(sd) {
            *e = T::lit(rng.sample::<f64, _>(rand_distr::StandardNormal));
        }
        for r in 0..sd {
            let mut draw = mean[r];
            for c in 0..=r {
                draw += chol[(r, c)] * eps[c];
            }
            row[r] = draw - mean[r];
        }
    }
    let posterior_samples =
        WeightedParticleSet::uniform(posterior.state_layout().clone(), residuals)?;
    let (posterior_entropy, c2) = Kde::fit(&posterior_samples, cfg)?.resubstitution();

    Ok(MiEstimate {
        value: prior_entropy - posterior_entropy,
        method,
        elapsed: start.elapsed(),
        samples: SampleCounts::Kde {
            prior_particles: n,
            observation_draws: n,
        },
        seed: None,
        diagnostics: Diagnostics {
            clamp_events: c1 + c2,
            floor_events: 0,
        },
    })
}

/// KDE re-substitution over the entire prior state.
pub fn naive_kde_augmented_mi<T: Real, R: Rng + ?Sized>(
    prior: &GaussianDensity<T>,
    action: &Action<T>,
    n: usize,
    cfg: &KdeConfig<T>,
    rng: &mut R,
) -> Result<MiEstimate<T>> {
    kde_pipeline(prior, action, n, cfg, rng, Method::NaiveKde)
}

/// KDE re-substitution after marginalizing the prior onto `involved`.
pub fn invmi_kde_augmented_mi<T: Real, R: Rng + ?Sized>(
    prior: &GaussianDensity<T>,
    action: &Action<T>,
    involved: &BlockSet,
    n: usize,
    cfg: &KdeConfig<T>,
    rng: &mut R,
) -> Result<MiEstimate<T>> {
    let footprint = action.prior_footprint(prior.layout())?;
    check_footprint(prior.layout(), action, &footprint, involved)?;
    let reduced = prior.marginalize(involved)?;
    kde_pipeline(&reduced, action, n, cfg, rng, Method::InvmiKde)
}
