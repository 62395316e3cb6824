#![allow(dead_code)]

use nob_core::diffcore::{Activation, GradCheckOptions, ParamStore, Tape, Tensor, Var};
pub use nob_core::harness::{toy_dims, toy_input};
use nob_core::operators::{Model, ModelConfig, ModelInput, ARCHITECTURES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn toy_config(arch: &str) -> ModelConfig {
    nob_core::harness::toy_config(arch).unwrap()
}

pub fn all_archs() -> impl Iterator<Item = &'static str> {
    ARCHITECTURES.iter().copied()
}

pub fn mse_forward<'a>(model: &'a Model, input: &'a ModelInput, target: &'a Tensor) -> impl Fn(&mut Tape, &ParamStore) -> nob_core::Result<Var> + 'a {
    move |t, s| {
        let y = model.forward_with(t, s, input)?;
        t.mse(y, target)
    }
}

pub fn gradcheck_options() -> GradCheckOptions {
    GradCheckOptions {
        samples: 48,
        ..GradCheckOptions::default()
    }
}

pub fn set_all(store: &mut ParamStore, v: f64) {
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        store.value_mut(id).data_mut().fill(v);
    }
}

pub const SMOOTH: Activation = Activation::Gelu;
