//! Planar active-SLAM scenarios.
//!
//! The state holds a chain of 2D poses (`x0` is the current pose, `x1` the
//! one before it, ...) and 2D landmarks `l0, l1, ...` laid out on a jittered
//! grid that spirals out from the current pose. Every per-block attribute
//! (position jitter, landmark variance, shared correlation factors) is drawn
//! from a stream keyed by the block label, so a block looks the same at every
//! target dimension. In particular the marginal over `{x0, l0}` does not
//! depend on `D`.
//!
//! Each action drives to a new pose `x_new = x0 + w` and observes one
//! landmark through `z = l − x_new + v`; the noise on `v` grows with the
//! landmark's distance from the current pose.

use augmi::oracle::{augmented_mi_analytic, Subset};
use augmi::scenario::Scenario;
use augmi::seeds::{derive_seed, label_hash};
use augmi::state::{Action, GaussianDensity, LinearGaussianModel, Observation, StateLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Current-pose standard deviation.
const POSE_STD: f64 = 0.3;
/// Odometry standard deviation per step along the chain.
const CHAIN_STD: f64 = 0.15;
const GRID_SPACING: f64 = 2.0;
const MOTION_STD: f64 = 0.1;
const RANGE_STD: f64 = 0.15;
const FACTORS: usize = 4;
/// Minimum analytic-value gap between any two actions, in nats.
pub const MIN_SEPARATION: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSelection {
    /// Spread targets across the ranking of in-range landmarks by value.
    SpreadByValue,
    /// Observe in-range landmarks in spiral order from the current pose,
    /// `l0` first.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub target_dim: usize,
    pub n_actions: usize,
    /// Scale of the cross-block correlations, in `[0, 1)`.
    pub correlation_strength: f64,
    pub sensing_range: f64,
    pub selection: ActionSelection,
    pub seed: u64,
}

impl ScenarioParams {
    pub fn new(target_dim: usize, n_actions: usize, seed: u64) -> Self {
        Self {
            target_dim,
            n_actions,
            correlation_strength: 0.5,
            sensing_range: 3.0 * GRID_SPACING,
            selection: ActionSelection::SpreadByValue,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SlamScenario {
    pub params: ScenarioParams,
    pub scenario: Scenario<f64>,
    pub landmarks: Vec<[f64; 2]>,
    pub poses: usize,
}

impl SlamScenario {
    pub fn prior(&self) -> &GaussianDensity<f64> {
        &self.scenario.prior
    }

    pub fn actions(&self) -> &[Action<f64>] {
        &self.scenario.actions
    }
}

fn block_rng(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[label_hash(label)]))
}

/// Grid cell `j` of a square spiral around the origin, skipping the origin.
fn spiral_cell(j: usize) -> (i64, i64) {
    let (mut x, mut y) = (0i64, 0i64);
    let (mut dx, mut dy) = (1i64, 0i64);
    let (mut run, mut walked, mut turns) = (1, 0, 0);
    for _ in 0..=j {
        x += dx;
        y += dy;
        walked += 1;
        if walked == run {
            walked = 0;
            (dx, dy) = (-dy, dx);
            turns += 1;
            if turns % 2 == 0 {
                run += 1;
            }
        }
    }
    (x, y)
}

/// `(poses, landmarks)` for a target dimension: about a sixth of the state
/// is poses, the rest landmarks.
pub fn composition(target_dim: usize) -> (usize, usize) {
    let poses = ((target_dim as f64 / 6.0).round() as usize).max(1);
    let landmarks = (target_dim.saturating_sub(2 * poses)) / 2;
    (poses, landmarks)
}

pub fn generate_scenario(params: &ScenarioParams) -> Result<SlamScenario> {
    let c = params.correlation_strength;
    if !(0.0..1.0).contains(&c) {
        return Err(BenchError::Usage(format!("correlation strength {c} outside [0, 1)")));
    }
    if params.target_dim < 6 || params.n_actions == 0 {
        return Err(BenchError::Usage(
            "need a target dimension of at least 6 and at least one action".into(),
        ));
    }
    let (poses, n_landmarks) = composition(params.target_dim);
    let seed = params.seed;
    let mut ids = Vec::new();
    let mut base_var = Vec::new();
    for a in 0..poses {
        ids.push(format!("x{a}"));
        base_var.push(POSE_STD * POSE_STD + CHAIN_STD * CHAIN_STD * a as f64);
    }
    let mut landmarks = Vec::new();
    for j in 0..n_landmarks {
        let label = format!("l{j}");
        let mut rng = block_rng(seed, &label);
        let (gx, gy) = spiral_cell(j);
        let jitter: [f64; 2] = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
        landmarks.push([
            GRID_SPACING * gx as f64 + jitter[0],
            GRID_SPACING * gy as f64 + jitter[1],
        ]);
        // landmark std log-uniform on [0.05, 3]
        let log_std = rng.random_range((0.05f64).ln()..(3.0f64).ln());
        base_var.push((2.0 * log_std).exp());
        ids.push(label);
    }
    let nb = ids.len();
    let dim = 2 * nb;
    // shared low-rank factors, two rows per block
    let mut factors = vec![0.0; dim * FACTORS];
    for (b, id) in ids.iter().enumerate() {
        let mut rng = block_rng(seed ^ 0x5eed, id);
        let s = (base_var[b] / FACTORS as f64).sqrt();
        for r in 0..2 {
            for f in 0..FACTORS {
                let g: f64 = rng.sample(StandardNormal);
                factors[(2 * b + r) * FACTORS + f] = s * g;
            }
        }
    }
    let mut cov = vec![0.0; dim * dim];
    for bi in 0..nb {
        for bj in 0..nb {
            for r in 0..2 {
                let i = 2 * bi + r;
                let j = 2 * bj + r;
                let v = if bi == bj {
                    base_var[bi]
                } else if bi < poses && bj < poses {
                    c * (POSE_STD * POSE_STD + CHAIN_STD * CHAIN_STD * bi.min(bj) as f64)
                } else {
                    0.0
                };
                cov[i * dim + j] += v;
            }
        }
    }
    for i in 0..dim {
        for j in 0..dim {
            let dot: f64 = (0..FACTORS)
                .map(|f| factors[i * FACTORS + f] * factors[j * FACTORS + f])
                .sum();
            cov[i * dim + j] += c * dot;
        }
    }
    let layout = StateLayout::new(ids.iter().map(|id| (id.clone(), 2)))?;
    let mut mean = vec![0.0; dim];
    for a in 0..poses {
        mean[2 * a] = -(a as f64) * 0.8 * GRID_SPACING;
        mean[2 * a + 1] = 0.3 * (a as f64).sin();
    }
    for (j, p) in landmarks.iter().enumerate() {
        mean[2 * (poses + j)] = p[0];
        mean[2 * (poses + j) + 1] = p[1];
    }
    let prior = GaussianDensity::from_row_major(layout, mean, cov)?;

    let in_range: Vec<usize> = (0..n_landmarks)
        .filter(|j| landmarks[*j][0].hypot(landmarks[*j][1]) <= params.sensing_range)
        .collect();
    if in_range.len() < params.n_actions {
        return Err(BenchError::Scenario(format!(
            "{} landmarks in sensing range at D = {}, {} actions requested",
            in_range.len(),
            params.target_dim,
            params.n_actions
        )));
    }
    let candidate = |j: usize| observe_action(&format!("obs_l{j}"), j, landmarks[j], params.sensing_range);
    let chosen: Vec<usize> = match params.selection {
        ActionSelection::Nearest => in_range.iter().copied().take(params.n_actions).collect(),
        ActionSelection::SpreadByValue => {
            let mut scored = Vec::new();
            for &j in &in_range {
                let a = candidate(j)?;
                scored.push((augmented_mi_analytic(&prior, &a, &Subset::Full)?.value, j));
            }
            scored.sort_by(|a, b| a.0.total_cmp(&b.0));
            let m = scored.len();
            let k = params.n_actions;
            (0..k)
                .map(|i| if k == 1 { scored[m - 1].1 } else { scored[i * (m - 1) / (k - 1)].1 })
                .collect()
        }
    };
    let actions = chosen.iter().map(|&j| candidate(j)).collect::<Result<Vec<_>>>()?;
    let scenario = Scenario { prior, actions };
    check_separation(&scenario)?;
    Ok(SlamScenario {
        params: *params,
        scenario,
        landmarks,
        poses,
    })
}

fn observe_action(id: &str, j: usize, at: [f64; 2], range: f64) -> Result<Action<f64>> {
    let q = MOTION_STD * MOTION_STD;
    let dist = at[0].hypot(at[1]);
    let r = RANGE_STD * RANGE_STD * (1.0 + (dist / range).powi(2));
    let t = LinearGaussianModel::from_rows("x_new", &["x0"], 2, &[1.0, 0.0, 0.0, 1.0], &[q, 0.0, 0.0, q])?;
    let landmark = format!("l{j}");
    let z = LinearGaussianModel::from_rows(
        "z",
        &[landmark.as_str(), "x_new"],
        2,
        &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0],
        &[r, 0.0, 0.0, r],
    )?;
    Ok(Action::new(id, vec![t], vec![Observation { step: 1, model: z }])?)
}

/// Errors when two actions' analytic values are closer than [`MIN_SEPARATION`].
pub fn check_separation(s: &Scenario<f64>) -> Result<()> {
    let mut values = Vec::new();
    for a in &s.actions {
        values.push((augmented_mi_analytic(&s.prior, a, &Subset::Full)?.value, a.id().to_string()));
    }
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in values.windows(2) {
        if w[1].0 - w[0].0 < MIN_SEPARATION {
            return Err(BenchError::Scenario(format!(
                "actions `{}` and `{}` are within {MIN_SEPARATION} nats ({} vs {})",
                w[0].1, w[1].1, w[0].0, w[1].0
            )));
        }
    }
    Ok(())
}
