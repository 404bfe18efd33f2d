#![allow(dead_code)]

use augmi::state::{Action, GaussianDensity, LinearGaussianModel, Observation, StateLayout};
use augmi::BlockSet;
use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| gauss(rng))
}

pub fn random_spd(k: usize, floor: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = random_matrix(k, k, rng);
    &a * a.transpose() / k as f64 + DMatrix::identity(k, k) * floor
}

/// Dense prior over blocks of dimension 1–3 summing to `dim`.
pub fn random_prior(dim: usize, rng: &mut ChaCha8Rng) -> GaussianDensity<f64> {
    let mut blocks = Vec::new();
    let mut left = dim;
    while left > 0 {
        let d = rng.random_range(1..=3).min(left);
        blocks.push((format!("b{}", blocks.len()), d));
        left -= d;
    }
    let layout = StateLayout::new(blocks).unwrap();
    let mean = nalgebra::DVector::from_fn(dim, |_, _| gauss(rng) * 3.0);
    // dense correlations: full-rank random factor plus a diagonal floor
    let cov = random_spd(dim, 0.2, rng);
    GaussianDensity::new(layout, mean, cov).unwrap()
}

/// Prior blocks whose dims add up to exactly `d`, when possible.
pub fn pick_blocks(prior: &GaussianDensity<f64>, d: usize, rng: &mut ChaCha8Rng) -> Vec<(String, usize)> {
    loop {
        let mut all: Vec<(String, usize)> =
            prior.layout().blocks().iter().map(|b| (b.id.to_string(), b.dim)).collect();
        all.shuffle(rng);
        let mut chosen = Vec::new();
        let mut total = 0;
        for (id, dim) in all {
            if total + dim <= d {
                total += dim;
                chosen.push((id, dim));
            }
            if total == d {
                return chosen;
            }
        }
    }
}

fn model(output: &str, inputs: &[(String, usize)], out_dim: usize, rng: &mut ChaCha8Rng) -> LinearGaussianModel<f64> {
    let cols: usize = inputs.iter().map(|(_, d)| d).sum();
    LinearGaussianModel::new(
        output,
        inputs.iter().map(|(id, _)| id.as_str().into()).collect(),
        random_matrix(out_dim, cols, rng),
        random_spd(out_dim, 0.1, rng),
    )
    .unwrap()
}

pub struct Instance {
    pub prior: GaussianDensity<f64>,
    pub action: Action<f64>,
    pub involved: BlockSet,
}

/// Random one- or two-step action reading exactly `d` prior dimensions.
pub fn random_instance(dim: usize, d: usize, rng: &mut ChaCha8Rng) -> Instance {
    let prior = random_prior(dim, rng);
    let inv = pick_blocks(&prior, d, rng);
    let split = rng.random_range(1..=inv.len());
    let (tr_in, obs_in) = inv.split_at(split);
    let steps = rng.random_range(1..=2);
    let mut transitions = Vec::new();
    let mut observations = Vec::new();
    let mut prev: Vec<(String, usize)> = tr_in.to_vec();
    for s in 0..steps {
        let out = format!("new{s}");
        let out_dim = rng.random_range(1..=3);
        transitions.push(model(&out, &prev, out_dim, rng));
        prev = vec![(out.clone(), out_dim)];
        let mut inputs = vec![(out, out_dim)];
        if s == 0 {
            inputs.extend(obs_in.iter().cloned());
        }
        let zd = rng.random_range(1..=3);
        observations.push(Observation {
            step: s + 1,
            model: model(&format!("z{s}"), &inputs, zd, rng),
        });
    }
    let action = Action::new("a", transitions, observations).unwrap();
    Instance {
        prior,
        action,
        involved: inv.into_iter().map(|(id, _)| id.into()).collect(),
    }
}

/// Random two-step planning problem: a pose block `b0` feeds `p1` then `p2`,
/// each candidate observing one random prior block from the new pose.
pub fn random_planning_problem(
    dim: usize,
    n_actions: usize,
    rng: &mut ChaCha8Rng,
) -> (GaussianDensity<f64>, Vec<Vec<Action<f64>>>) {
    let prior = random_prior(dim, rng);
    let pose = prior.layout().blocks()[0].clone();
    let others: Vec<(String, usize)> = prior.layout().blocks()[1..]
        .iter()
        .map(|b| (b.id.to_string(), b.dim))
        .collect();
    let mut steps = Vec::new();
    let mut from = (pose.id.to_string(), pose.dim);
    for s in 0..2 {
        let out = format!("p{}", s + 1);
        let mut set = Vec::new();
        for a in 0..n_actions {
            let t = model(&out, &[from.clone()], 2, rng);
            let seen = others.choose(rng).unwrap().clone();
            let z = model("z", &[(out.clone(), 2), seen], rng.random_range(1..=2), rng);
            set.push(Action::new(format!("s{s}a{a}"), vec![t], vec![Observation { step: 1, model: z }]).unwrap());
        }
        steps.push(set);
        from = (out, 2);
    }
    (prior, steps)
}
