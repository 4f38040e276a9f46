use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symkfcv_core::datagen::{generate_dataset, GrammarConfig, Point};
use symkfcv_core::model::{
    decoder_logits, encode, encode_points, examples_from_dataset, load_checkpoint,
    loss_and_gradient, point_features, save_checkpoint, validate, Batch, Example, ModelConfig,
    ModelParams, Trainer,
};
use symkfcv_core::TokenVocabulary;

fn micro_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        layers: 1,
        heads: 2,
        context_len: 8,
        learning_rate: 1e-3,
        batch_size: 4,
        epochs: 1,
        dropout: 0.0,
        seed: 5,
        max_points: 6,
        variable_count: 1,
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| Point {
            x: vec![rng.random_range(-3.0..3.0)],
            y: rng.random_range(-20.0..20.0),
        })
        .collect()
}

/// Parameters with every tensor randomised, so no gradient path is blocked
/// by the zero output head.
fn perturbed(cfg: &ModelConfig, vocab: usize, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(cfg, vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in p.as_mut_slice() {
        *v += rng.random_range(-0.3..0.3);
    }
    p
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let cfg = micro_config();
    let vocab = TokenVocabulary::new(1);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let params = perturbed(&cfg, vocab.len(), 3);
    let seqs: [&[u32]; 3] = [&[3, 13, 14], &[8, 14], &[4, 14, 5, 13, 14]];
    let examples: Vec<Example> = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| Example::new(&random_points(&mut rng, 3 + i), s.to_vec(), &cfg).unwrap())
        .collect();
    let rows: Vec<&Example> = examples.iter().collect();
    let batch = Batch::assemble(&rows, &vocab, &cfg);
    let (_, count, grad) = loss_and_gradient(&params, &batch, 0);
    // the gradient is of the mean loss; the first field is the summed loss
    let mean_loss = |p: &ModelParams| loss_and_gradient(p, &batch, 0).0 / count as f64;

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus.as_mut_slice()[i] += h;
        let mut minus = params.clone();
        minus.as_mut_slice()[i] -= h;
        let numeric = (mean_loss(&plus) - mean_loss(&minus)) / (2.0 * h);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        if rel >= 1e-4 {
            bad += 1;
        }
    }
    eprintln!("gradient check: {bad} of {} over 1e-4, worst {worst:.2e}", params.len());
    assert!(bad * 100 <= params.len(), "{bad} of {} parameters over 1e-4", params.len());
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn encoder_ignores_point_order_and_padding() {
    let cfg = ModelConfig::desk();
    let params = perturbed(&cfg, 15, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let n = rng.random_range(1..=40);
        let pts = random_points(&mut rng, n);
        let base = encode_points(&params, &pts).unwrap();
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut rng);
        assert_eq!(encode_points(&params, &shuffled).unwrap(), base);

        // interleave garbage rows that the mask hides
        let mut flat = Vec::new();
        let mut mask = Vec::new();
        for f in point_features(&pts).chunks(2) {
            flat.extend_from_slice(&[99.0, -99.0]);
            mask.push(false);
            flat.extend_from_slice(f);
            mask.push(true);
        }
        assert_eq!(encode(&params, &flat, &mask).unwrap(), base);
    }
}

#[test]
fn decoder_is_causal() {
    let cfg = ModelConfig::desk();
    let vocab = TokenVocabulary::new(1);
    let params = perturbed(&cfg, vocab.len(), 2);
    let emb = encode_points(&params, &random_points(&mut ChaCha8Rng::seed_from_u64(1), 12)).unwrap();
    let a = [3u32, 13, 8, 14, 14];
    let base = decoder_logits(&params, &emb, &a, vocab.start_id()).unwrap();
    for k in 0..a.len() {
        let mut b = a;
        b[k] = if a[k] == 9 { 10 } else { 9 };
        let changed = decoder_logits(&params, &emb, &b, vocab.start_id()).unwrap();
        assert_eq!(changed[..=k], base[..=k], "position {k} leaked backwards");
        assert_ne!(changed[k + 1], base[k + 1]);
    }
}

fn small_dataset(count: usize, seed: u64) -> Vec<symkfcv_core::DatasetIndex> {
    generate_dataset(&GrammarConfig::default(), count, seed).unwrap().0
}

#[test]
fn untrained_model_predicts_uniformly() {
    let cfg = ModelConfig::desk();
    let vocab = TokenVocabulary::new(1);
    let params = ModelParams::init(&cfg, vocab.len());
    let ex = examples_from_dataset(&small_dataset(6, 1), &vocab, &cfg).unwrap();
    let l = validate(&params, &ex, &vocab).unwrap();
    assert!((l - (vocab.len() as f64).ln()).abs() < 1e-12, "{l}");
}

#[test]
fn zero_learning_rate_epoch_equals_validation() {
    let cfg = ModelConfig {
        learning_rate: 0.0,
        batch_size: 4,
        ..ModelConfig::desk()
    };
    let vocab = TokenVocabulary::new(1);
    let ex = examples_from_dataset(&small_dataset(10, 2), &vocab, &cfg).unwrap();
    let params = perturbed(&cfg, vocab.len(), 8);
    let mut trainer = Trainer::new(params.clone());
    let train = trainer.train_epoch(&ex, &vocab, 3).unwrap();
    assert_eq!(trainer.params, params);
    let val = validate(&params, &ex, &vocab).unwrap();
    assert!((train - val).abs() <= 1e-12 * val, "{train} vs {val}");
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let cfg = ModelConfig::desk();
    let vocab = TokenVocabulary::new(1);
    let ex = examples_from_dataset(&small_dataset(16, 3), &vocab, &cfg).unwrap();
    let run = || {
        let mut t = Trainer::new(ModelParams::init(&cfg, vocab.len()));
        let losses: Vec<f64> = (0..5).map(|e| t.train_epoch(&ex, &vocab, e).unwrap()).collect();
        (losses, t.params)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    assert!(a[4] < a[0]);
}

#[test]
fn checkpoint_round_trip_preserves_validation_loss() {
    let cfg = ModelConfig::desk();
    let vocab = TokenVocabulary::new(1);
    let ex = examples_from_dataset(&small_dataset(8, 4), &vocab, &cfg).unwrap();
    let params = perturbed(&cfg, vocab.len(), 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    save_checkpoint(&path, &params, &vocab).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.params, params);
    assert_eq!(loaded.vocabulary, vocab);
    let before = validate(&params, &ex, &vocab).unwrap();
    let after = validate(&loaded.params, &ex, &vocab).unwrap();
    assert_eq!(before.to_bits(), after.to_bits());
}

#[test]
fn checkpoint_with_edited_config_is_rejected() {
    let cfg = ModelConfig::desk();
    let vocab = TokenVocabulary::new(1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    save_checkpoint(&path, &ModelParams::init(&cfg, vocab.len()), &vocab).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"epochs\":10", "\"epochs\":11", 1)).unwrap();
    let err = load_checkpoint(&path).unwrap_err().to_string();
    assert!(err.contains("hash"), "{err}");
}
