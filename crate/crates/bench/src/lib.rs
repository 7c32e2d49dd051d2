//! Benchmark fixtures.

use graphbal_core::graph::{generate_sbm, make_imbalanced_split, EvalQuota, ImbalanceSpec, SbmSpec, Setting};
use graphbal_core::train::HyperParams;
use graphbal_core::Graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Homophilic SBM with the last block as a down-sampled minority, masks set.
pub fn imbalanced_sbm(sizes: Vec<usize>, seed: u64) -> (Graph, ImbalanceSpec) {
    let minority = sizes.len() - 1;
    let mut g = generate_sbm(&SbmSpec::with_axis_means(sizes, 0.1, 0.01, 8, 3.0, 1.0, seed)).expect("valid spec");
    let spec = ImbalanceSpec::new(vec![minority], 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks = make_imbalanced_split(&g, &spec, Setting::Semi, EvalQuota::default(), &mut rng).expect("split");
    g.set_masks(masks).expect("masks fit");
    (g, spec)
}

/// Hyperparameters for a run of exactly `epochs` epochs after warm-up.
pub fn fixed_epochs(epochs: usize) -> HyperParams {
    HyperParams {
        epochs,
        min_epochs: epochs,
        patience: epochs,
        warmup_epochs: 1,
        lambda: 0.5,
        lr: Some(0.01),
        ..HyperParams::default()
    }
}
