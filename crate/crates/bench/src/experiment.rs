//! The two benchmark experiments: estimator spread per action on one
//! scenario, and spread and cost as the state dimension grows.

use std::time::{Duration, Instant};

use augmi::estimators::{invmi_kde_augmented_mi, naive_kde_augmented_mi, KdeConfig, Method};
use augmi::mismc::{mismc_estimate, SampleBudget};
use augmi::oracle::{augmented_mi_analytic, Subset};
use augmi::scenario::Scenario;
use augmi::seeds::{derive_seed, label_hash};
use augmi::state::{Action, GaussianDensity};
use augmi::determine_involved;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::generator::{generate_scenario, ActionSelection, ScenarioParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub action_id: String,
    pub trial: usize,
    pub dim_full: usize,
    pub dim_involved: usize,
    pub n_particles: usize,
    pub mi_estimate: f64,
    pub elapsed_ns: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub n_particles: usize,
    pub trials: usize,
    pub seed: u64,
    /// Record wall time; when off `elapsed_ns` is 0 and output is
    /// byte-reproducible.
    pub timing: bool,
    pub kde: KdeConfig<f64>,
}

impl ExperimentConfig {
    pub fn new(n_particles: usize, trials: usize, seed: u64) -> Self {
        Self {
            n_particles,
            trials,
            seed,
            timing: true,
            kde: KdeConfig::default(),
        }
    }
}

/// Parses `analytic`, `naive-kde`, `invmi-kde`, `mismc` (`_` also accepted).
pub fn parse_method(s: &str) -> Result<Method> {
    match s.trim().replace('-', "_").as_str() {
        "analytic" => Ok(Method::Analytic),
        "naive_kde" => Ok(Method::NaiveKde),
        "invmi_kde" => Ok(Method::InvmiKde),
        "mismc" => Ok(Method::Mismc),
        other => Err(BenchError::Usage(format!("unknown method `{other}`"))),
    }
}

pub fn trial_seed(seed: u64, method: Method, action: &str, trial: usize) -> u64 {
    derive_seed(seed, &[label_hash(method.as_str()), label_hash(action), trial as u64])
}

/// One estimate; returns the value and the time spent in the estimator.
pub fn evaluate(
    prior: &GaussianDensity<f64>,
    action: &Action<f64>,
    method: Method,
    n_particles: usize,
    kde: &KdeConfig<f64>,
    seed: u64,
) -> Result<(f64, Duration)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let involved = determine_involved(prior.layout(), action)?;
    Ok(match method {
        Method::Analytic => {
            let start = Instant::now();
            let v = augmented_mi_analytic(prior, action, &Subset::Full)?.value;
            (v, start.elapsed())
        }
        Method::NaiveKde => {
            let start = Instant::now();
            let v = naive_kde_augmented_mi(prior, action, n_particles, kde, &mut rng)?.value;
            (v, start.elapsed())
        }
        Method::InvmiKde => {
            let start = Instant::now();
            let v = invmi_kde_augmented_mi(prior, action, involved.blocks(), n_particles, kde, &mut rng)?.value;
            (v, start.elapsed())
        }
        Method::Mismc => {
            // the full-state belief is given; reducing it is part of the method
            let particles = prior.sample(n_particles, &mut rng)?;
            let budget = SampleBudget::single(n_particles)?;
            let start = Instant::now();
            let reduced = particles.marginalize(involved.blocks())?;
            let v = mismc_estimate(&reduced, action, budget, &mut rng)?.value;
            (v, start.elapsed())
        }
    })
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.method.as_str(), a.action_id.as_str(), a.trial).cmp(&(b.method.as_str(), b.action_id.as_str(), b.trial))
    });
}

/// Estimates every (method, action, trial). The analytic method runs once
/// per action. Failed estimates are reported on stderr and kept as rows
/// with a NaN estimate.
pub fn run_actions_experiment(
    scenario: &Scenario<f64>,
    methods: &[Method],
    cfg: &ExperimentConfig,
) -> Result<Vec<ResultRow>> {
    if cfg.trials == 0 {
        return Err(BenchError::Usage("trials must be at least 1".into()));
    }
    let mut rows = Vec::new();
    let dim_full = scenario.prior.dim();
    for &method in methods {
        for action in &scenario.actions {
            let dim_involved = determine_involved(scenario.prior.layout(), action)?.dim();
            let trials = if method == Method::Analytic { 1 } else { cfg.trials };
            for trial in 0..trials {
                let seed = trial_seed(cfg.seed, method, action.id(), trial);
                let (value, elapsed) =
                    match evaluate(&scenario.prior, action, method, cfg.n_particles, &cfg.kde, seed) {
                        Ok(r) => r,
                        Err(e) => {
                            eprintln!("warning: {method} on `{}` trial {trial}: {e}", action.id());
                            (f64::NAN, Duration::ZERO)
                        }
                    };
                rows.push(ResultRow {
                    method: method.as_str().to_string(),
                    action_id: action.id().to_string(),
                    trial,
                    dim_full,
                    dim_involved,
                    n_particles: if method == Method::Analytic { 0 } else { cfg.n_particles },
                    mi_estimate: value,
                    elapsed_ns: if cfg.timing { elapsed.as_nanos() as u64 } else { 0 },
                    seed,
                });
            }
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Same target action (observing `l0` from the current pose) at each
/// dimension; only the uninvolved part of the state grows.
pub fn run_dimension_sweep(
    dims: &[usize],
    params: &ScenarioParams,
    methods: &[Method],
    cfg: &ExperimentConfig,
) -> Result<Vec<ResultRow>> {
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::Usage("dimensions must be strictly ascending".into()));
    }
    let mut rows = Vec::new();
    for &d in dims {
        let p = ScenarioParams {
            target_dim: d,
            n_actions: 1,
            selection: ActionSelection::Nearest,
            ..*params
        };
        let s = generate_scenario(&p)?;
        let c = ExperimentConfig {
            seed: derive_seed(cfg.seed, &[d as u64]),
            ..*cfg
        };
        rows.extend(run_actions_experiment(&s.scenario, methods, &c)?);
    }
    rows.sort_by(|a, b| {
        (a.method.as_str(), a.dim_full, a.action_id.as_str(), a.trial).cmp(&(
            b.method.as_str(),
            b.dim_full,
            b.action_id.as_str(),
            b.trial,
        ))
    });
    Ok(rows)
}

/// Mean and sample standard deviation of the finite estimates.
pub fn summarize<'a>(rows: impl IntoIterator<Item = &'a ResultRow>) -> Summary {
    let mut v = Vec::new();
    let mut t = Vec::new();
    for r in rows {
        if r.mi_estimate.is_finite() {
            v.push(r.mi_estimate);
            t.push(r.elapsed_ns as f64);
        }
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Summary {
        count: v.len(),
        mean,
        std,
        mean_elapsed_ns: t.iter().sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_elapsed_ns: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names() {
        assert_eq!(parse_method("naive-kde").unwrap(), Method::NaiveKde);
        assert_eq!(parse_method("invmi_kde").unwrap(), Method::InvmiKde);
        assert!(parse_method("knn").is_err());
    }

    #[test]
    fn analytic_rows_only() {
        let s = generate_scenario(&ScenarioParams::new(40, 4, 1)).unwrap();
        let rows = run_actions_experiment(&s.scenario, &[Method::Analytic], &ExperimentConfig::new(300, 10, 0)).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.trial == 0 && r.n_particles == 0 && r.dim_involved == 4));
    }

    #[test]
    fn one_row_per_method_and_action() {
        let s = generate_scenario(&ScenarioParams::new(30, 2, 2)).unwrap();
        let methods = [Method::NaiveKde, Method::InvmiKde, Method::Mismc];
        let rows = run_actions_experiment(&s.scenario, &methods, &ExperimentConfig::new(50, 1, 0)).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.mi_estimate.is_finite()));
        let mut sorted = rows.clone();
        sort_rows(&mut sorted);
        assert_eq!(rows, sorted);
    }

    #[test]
    fn failures_become_nan_rows() {
        let s = generate_scenario(&ScenarioParams::new(30, 1, 2)).unwrap();
        // one particle is too few for KDE
        let rows = run_actions_experiment(&s.scenario, &[Method::InvmiKde], &ExperimentConfig::new(1, 2, 0)).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.mi_estimate.is_nan()));
    }

    #[test]
    fn sweep_keeps_the_involved_dimension() {
        let rows = run_dimension_sweep(&[10, 30], &ScenarioParams::new(0, 1, 4), &[Method::Analytic], &ExperimentConfig::new(10, 1, 0))
            .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].dim_full, 10);
        assert_eq!(rows[1].dim_full, 30);
        assert!(rows.iter().all(|r| r.dim_involved == 4));
        assert!((rows[0].mi_estimate - rows[1].mi_estimate).abs() < 1e-9);
        assert!(run_dimension_sweep(&[30, 10], &ScenarioParams::new(0, 1, 4), &[Method::Analytic], &ExperimentConfig::new(10, 1, 0)).is_err());
    }
}
