use contkd_core::data::{gen_gaussian_mixture, gen_noisy_sine, holdout, GaussianMixtureParams, NoisySineParams};
use contkd_core::distill::{accuracy, train_scratch};
use contkd_core::models::mlp_spec;
use contkd_core::{
    evaluate, Activation, DataSplits, Dataset, DatasetMeta, DistillConfig, Method, Network, Targets,
    Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn linear_probe_separates_a_wide_mixture() {
    let d = gen_gaussian_mixture(&GaussianMixtureParams {
        n_classes: 2,
        dim: 8,
        n_per_class: 500,
        spread: 0.5,
        separation: 10.0,
        seed: 4,
    })
    .unwrap();
    let (train, val) = holdout(&d, 0.1, 4).unwrap();
    let probe = Network::init(mlp_spec(8, &[], 2, Activation::Relu), 4).unwrap();
    let mut cfg = DistillConfig::new(Method::Scratch);
    cfg.epochs = 5;
    cfg.optimizer.learning_rate = 0.01;
    let data = DataSplits { train, val };
    let rec = train_scratch(probe, &data, &cfg).unwrap();
    assert!(evaluate(&rec.best_checkpoint, &data.train).unwrap() >= 0.99);
    assert!(evaluate(&rec.best_checkpoint, &data.val).unwrap() >= 0.99);
}

#[test]
fn random_logits_score_near_chance() {
    // Binomial(1000, 0.5) has std 0.0158; [0.44, 0.56] is about ±3.8 std.
    let labels: Vec<usize> = (0..1000).map(|i| i % 2).collect();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let acc = accuracy(&Tensor::matrix(1000, 2, logits).unwrap(), &labels);
        assert!((0.44..=0.56).contains(&acc), "seed {seed}: {acc}");
    }
}

#[test]
fn zero_regressor_on_zero_targets_scores_zero() {
    let spec = mlp_spec(1, &[4], 1, Activation::Tanh);
    let n_params: usize = spec.iter().map(|l| l.param_count()).sum();
    let net = Network::from_flat(spec, &vec![0.0; n_params]).unwrap();
    let ds = Dataset::new(
        Tensor::matrix(5, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap(),
        Targets::Values(Tensor::matrix(5, 1, vec![0.0; 5]).unwrap()),
        None,
        DatasetMeta::default(),
    )
    .unwrap();
    assert_eq!(evaluate(&net, &ds).unwrap(), 0.0);
}

#[test]
fn generators_are_pure() {
    let p = NoisySineParams {
        n_samples: 200,
        seed: 3,
        ..NoisySineParams::default()
    };
    assert_eq!(gen_noisy_sine(&p).unwrap(), gen_noisy_sine(&p).unwrap());
    let q = NoisySineParams { seed: 4, ..p };
    assert_ne!(gen_noisy_sine(&p).unwrap(), gen_noisy_sine(&q).unwrap());
}
