//! Toy-size models and inputs for gradient checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{grad_check, GradCheckOptions, GradCheckReport, Tensor};
use crate::enhancements::FusionConfig;
use crate::error::Result;
use crate::operators::{DataDims, GridSpec, Model, ModelConfig, ModelInput};

pub const TOY_POINTS: usize = 9;

pub fn toy_dims() -> DataDims {
    let mut d = DataDims::new(2, 3, 2);
    d.grid = [4, 4, 4];
    d
}

/// Smallest configuration of `arch`: latent width 8, two layers.
pub fn toy_config(arch: &str) -> Result<ModelConfig> {
    let mut c = ModelConfig::new(arch)?;
    c.hidden = Some(8);
    c.layers = 2;
    c.slices = 3;
    c.knn = 3;
    c.modes = [2, 2, 2];
    c.grid = Some(GridSpec {
        dims: [4, 4, 4],
        lo: [0.0; 3],
        hi: [1.0; 3],
    });
    c.radius = Some(0.45);
    c.omega0 = 3.0;
    Ok(c)
}

pub fn toy_input(seed: u64, n: usize) -> ModelInput {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n).map(|_| [r.random(), r.random(), r.random()]).collect();
    let params = (0..2).map(|_| r.random()).collect();
    let loads = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
    ModelInput::new(coords, params, loads)
}

/// Finite-difference check of the squared loss of a toy `arch` model.
pub fn gradcheck_model(arch: &str, fusion: FusionConfig, seed: u64) -> Result<GradCheckReport> {
    let mut cfg = toy_config(arch)?;
    cfg.fusion = fusion;
    let dims = toy_dims();
    let model = Model::build(&cfg, &dims, seed)?;
    let input = toy_input(seed.wrapping_add(1), TOY_POINTS);
    let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let target = Tensor::matrix(
        TOY_POINTS,
        dims.channels,
        (0..TOY_POINTS * dims.channels).map(|_| r.random()).collect(),
    )?;
    let opts = GradCheckOptions {
        samples: 48,
        seed,
        ..GradCheckOptions::default()
    };
    grad_check(
        |t, s| {
            let y = model.forward_with(t, s, &input)?;
            t.mse(y, &target)
        },
        &model.store,
        opts,
    )
}
