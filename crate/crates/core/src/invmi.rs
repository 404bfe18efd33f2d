//! Involved-variable reduction: find the prior blocks an action touches,
//! marginalize the prior onto them, and hand the smaller problem to any MI
//! calculator.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{naive_kde_augmented_mi, resubstitution_entropy, KdeConfig, Method, MiEstimate};
use crate::mismc::{mismc_estimate, SampleBudget};
use crate::oracle::{augmented_mi_analytic, check_footprint, gaussian_entropy, Subset};
use crate::scalar::Real;
use crate::state::{Action, Belief, BlockSet, StateLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvolvedSource {
    ExactFootprint,
    UnionOverActions,
    UserSupplied,
}

/// A non-empty subset of a prior layout's blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct InvolvedSet {
    blocks: BlockSet,
    source: InvolvedSource,
    layout: StateLayout,
}

impl InvolvedSet {
    /// Wraps a caller-chosen superset of some footprint.
    pub fn user_supplied(layout: &StateLayout, blocks: BlockSet) -> Result<Self> {
        Self::checked(layout, blocks, InvolvedSource::UserSupplied)
    }

    fn checked(layout: &StateLayout, blocks: BlockSet, source: InvolvedSource) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::EmptySelection);
        }
        if let Some(id) = blocks.iter().find(|id| !layout.contains(id)) {
            return Err(Error::UnknownBlock(id.clone()));
        }
        Ok(Self {
            blocks,
            source,
            layout: layout.clone(),
        })
    }

    pub fn blocks(&self) -> &BlockSet {
        &self.blocks
    }

    pub fn source(&self) -> InvolvedSource {
        self.source
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    /// Total dimension of the selected blocks.
    pub fn dim(&self) -> usize {
        self.blocks
            .iter()
            .filter_map(|id| self.layout.get(id))
            .map(|b| b.dim)
            .sum()
    }

    /// Errors unless every prior block read by `action` is in the set.
    pub fn check_covers<T: Real>(&self, action: &Action<T>) -> Result<()> {
        let footprint = action.prior_footprint(&self.layout)?;
        check_footprint(&self.layout, action, &footprint, &self.blocks)
    }
}

/// Prior blocks read by any transition or observation of `action`.
pub fn determine_involved<T: Real>(layout: &StateLayout, action: &Action<T>) -> Result<InvolvedSet> {
    let footprint = action.prior_footprint(layout)?;
    InvolvedSet::checked(layout, footprint, InvolvedSource::ExactFootprint)
}

/// Union of involved sets over the same layout, for one-time marginalization
/// across several candidate actions.
pub fn union_involved(sets: &[InvolvedSet]) -> Result<InvolvedSet> {
    let first = sets.first().ok_or(Error::EmptySelection)?;
    let mut blocks = BlockSet::new();
    for s in sets {
        if s.layout != first.layout {
            return Err(Error::LayoutMismatch);
        }
        blocks.extend(s.blocks.iter().cloned());
    }
    InvolvedSet::checked(&first.layout, blocks, InvolvedSource::UnionOverActions)
}

/// Anything that turns a belief and an action into an augmented-MI estimate.
pub trait MiCalculator<T: Real> {
    fn method(&self) -> Method;

    fn evaluate(&self, belief: &Belief<T>, action: &Action<T>, rng: &mut dyn RngCore) -> Result<MiEstimate<T>>;

    /// Differential entropy of a belief, for information-gain rewards.
    fn entropy(&self, _belief: &Belief<T>, _rng: &mut dyn RngCore) -> Result<T> {
        Err(Error::Unsupported {
            calculator: self.method().as_str(),
            what: "entropy evaluation",
        })
    }

    /// True when results cannot depend on the observed values, which lets a
    /// planner skip observation branching.
    fn observation_independent(&self) -> bool {
        false
    }
}

/// Closed-form value; Gaussian beliefs only.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticCalculator;

impl<T: Real> MiCalculator<T> for AnalyticCalculator {
    fn method(&self) -> Method {
        Method::Analytic
    }

    fn evaluate(&self, belief: &Belief<T>, action: &Action<T>, _rng: &mut dyn RngCore) -> Result<MiEstimate<T>> {
        let Belief::Gaussian(g) = belief else {
            return Err(Error::Unsupported {
                calculator: "analytic",
                what: "particle beliefs",
            });
        };
        let start = std::time::Instant::now();
        let r = augmented_mi_analytic(g, action, &Subset::Full)?;
        Ok(MiEstimate::analytic(r.value, start.elapsed()))
    }

    fn entropy(&self, belief: &Belief<T>, _rng: &mut dyn RngCore) -> Result<T> {
        match belief {
            Belief::Gaussian(g) => Ok(gaussian_entropy(g)),
            Belief::Particles(_) => Err(Error::Unsupported {
                calculator: "analytic",
                what: "particle beliefs",
            }),
        }
    }

    fn observation_independent(&self) -> bool {
        true
    }
}

/// KDE re-substitution pipeline with `n` samples; Gaussian beliefs only.
#[derive(Debug, Clone, Copy)]
pub struct KdeCalculator<T> {
    pub n: usize,
    pub config: KdeConfig<T>,
}

impl<T: Real> MiCalculator<T> for KdeCalculator<T> {
    fn method(&self) -> Method {
        Method::NaiveKde
    }

    fn evaluate(&self, belief: &Belief<T>, action: &Action<T>, rng: &mut dyn RngCore) -> Result<MiEstimate<T>> {
        let Belief::Gaussian(g) = belief else {
            return Err(Error::Unsupported {
                calculator: "kde",
                what: "particle beliefs",
            });
        };
        naive_kde_augmented_mi(g, action, self.n, &self.config, rng)
    }

    fn entropy(&self, belief: &Belief<T>, rng: &mut dyn RngCore) -> Result<T> {
        match belief {
            Belief::Gaussian(g) => resubstitution_entropy(&g.sample(self.n, rng)?, &self.config),
            Belief::Particles(p) => resubstitution_entropy(p, &self.config),
        }
    }
}

/// Sequential Monte Carlo estimator. Gaussian beliefs are first sampled
/// with `n1` particles.
#[derive(Debug, Clone, Copy)]
pub struct MismcCalculator {
    pub budget: SampleBudget,
}

impl<T: Real> MiCalculator<T> for MismcCalculator {
    fn method(&self) -> Method {
        Method::Mismc
    }

    fn evaluate(&self, belief: &Belief<T>, action: &Action<T>, rng: &mut dyn RngCore) -> Result<MiEstimate<T>> {
        match belief {
            Belief::Particles(p) => mismc_estimate(p, action, self.budget, rng),
            Belief::Gaussian(g) => {
                let p = g.sample(self.budget.n1, rng)?;
                mismc_estimate(&p, action, self.budget, rng)
            }
        }
    }
}

/// Marginalizes `prior` onto the action's involved blocks and evaluates
/// `calc` there. Full-state KDE results are relabelled as involved KDE.
pub fn invmi<T: Real>(
    prior: &Belief<T>,
    action: &Action<T>,
    calc: &dyn MiCalculator<T>,
    rng: &mut dyn RngCore,
) -> Result<MiEstimate<T>> {
    let involved = determine_involved(prior.layout(), action)?;
    invmi_over(prior, action, &involved, calc, rng)
}

/// As [`invmi`] with a caller-provided superset such as a union over actions.
pub fn invmi_over<T: Real>(
    prior: &Belief<T>,
    action: &Action<T>,
    involved: &InvolvedSet,
    calc: &dyn MiCalculator<T>,
    rng: &mut dyn RngCore,
) -> Result<MiEstimate<T>> {
    let attach = |e: Error| Error::Calculator {
        involved: involved.blocks.iter().cloned().collect(),
        source: Box::new(e),
    };
    if involved.layout != *prior.layout() {
        return Err(attach(Error::LayoutMismatch));
    }
    involved.check_covers(action).map_err(attach)?;
    let reduced = prior.marginalize(&involved.blocks).map_err(attach)?;
    let mut est = calc.evaluate(&reduced, action, rng).map_err(attach)?;
    if est.method == Method::NaiveKde {
        est.method = Method::InvmiKde;
    }
    Ok(est)
}
