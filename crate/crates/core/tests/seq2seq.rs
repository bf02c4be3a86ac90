use actcap::chunker::ChunkSequence;
use actcap::observation::ObservationSequence;
use actcap::seq2seq::{
    toy_dims, toy_gradient_check, toy_input, train, EncoderInput, ModelDims, ModelInput, Seq2SeqModel, TrainConfig, TrainSample, Variant, EOS,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gradients_match_finite_differences_for_every_variant() {
    for variant in Variant::ALL {
        let report = toy_gradient_check(variant, 17).unwrap();
        assert!(report.max_rel_error < 1e-4, "{variant}: {report:?}");
        assert!(report.entries > 100);
    }
}

#[test]
fn shape_laws_and_wiring() {
    for variant in Variant::ALL {
        let model = Seq2SeqModel::new(toy_dims(variant), 3).unwrap();
        assert_eq!(model.has_attention(), variant.uses_attention());
        assert_eq!(model.has_chunk_embedding(), variant.uses_chunks());
        assert_eq!(model.output_rows(), 6);
        let input = toy_input(variant, 9, 7);
        let enc = model.encode(input.as_input()).unwrap();
        assert_eq!(enc.len(), 7);
        assert_eq!(enc.states().ncols(), 4);

        let wrong = toy_input(if variant.uses_chunks() { Variant::Vanilla } else { Variant::Explicit }, 9, 7);
        assert!(model.encode(wrong.as_input()).is_err());
        let empty = toy_input(variant, 9, 0);
        assert!(model.encode(empty.as_input()).is_err());

        let (ids, trace) = model.decode_greedy(&enc, 12);
        assert!(ids.len() <= 12);
        assert!(!ids.contains(&0));
        match trace {
            Some(t) => {
                assert!(variant.uses_attention());
                assert!(t.decoder_steps() >= ids.len());
                for row in &t.weights {
                    assert_eq!(row.len(), 7);
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    assert!(row.iter().all(|&w| w >= 0.0));
                }
            }
            None => assert!(!variant.uses_attention()),
        }
        assert!(model.decode_greedy(&enc, 0).0.is_empty());
    }
}

#[test]
fn bad_gold_captions_are_rejected() {
    let model = Seq2SeqModel::new(toy_dims(Variant::Vanilla), 3).unwrap();
    let enc = model.encode(toy_input(Variant::Vanilla, 1, 3).as_input()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(model.decode_train(&enc, &[3, 4], None::<(f64, &mut ChaCha8Rng)>).is_err());
    assert!(model.decode_train(&enc, &[9, EOS], None::<(f64, &mut ChaCha8Rng)>).is_err());
    let loss = model.decode_train(&enc, &[3, EOS], Some((0.5, &mut rng))).unwrap();
    assert!(loss >= 0.0);
}

#[test]
fn untrained_loss_is_near_log_vocab() {
    let dims = ModelDims {
        variant: Variant::Implicit,
        input_dim: 22,
        chunk_vocab: 0,
        hidden: 32,
        caption_vocab: 40,
    };
    let model = Seq2SeqModel::new(dims, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = Array2::from_shape_fn((60, 22), |_| rng.gen_range(-1.0..1.0));
    let seq = ObservationSequence::from_array(data).unwrap();
    let enc = model.encode(EncoderInput::Raw(&seq)).unwrap();
    let gold: Vec<usize> = (0..8).map(|_| rng.gen_range(3..40)).chain([EOS]).collect();
    let loss = model.decode_train(&enc, &gold, None::<(f64, &mut ChaCha8Rng)>).unwrap();
    let ln_v = 40f64.ln();
    assert!((loss - ln_v).abs() < 0.1 * ln_v, "{loss} vs {ln_v}");
}

fn overfit(variant: Variant) -> (f64, Vec<usize>, Vec<usize>) {
    let dims = ModelDims {
        variant,
        input_dim: 22,
        chunk_vocab: 12,
        hidden: 16,
        caption_vocab: 10,
    };
    let mut model = Seq2SeqModel::new(dims, 21).unwrap();
    let input = if variant.uses_chunks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        ModelInput::Chunks(ChunkSequence((0..10).map(|_| rng.gen_range(0..12)).collect()))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        ModelInput::Raw(ObservationSequence::from_array(Array2::from_shape_fn((40, 22), |_| rng.gen_range(-1.0..1.0))).unwrap())
    };
    let gold = vec![3, 7, 4, 9, 5, EOS];
    let sample = TrainSample {
        input,
        captions: vec![gold.clone()],
    };
    let cfg = TrainConfig {
        lr: 0.01,
        dropout: 0.0,
        weight_decay: 0.0,
        max_epochs: 500,
        ..TrainConfig::default()
    };
    train(&mut model, std::slice::from_ref(&sample), &[], &cfg).unwrap();
    let enc = model.encode(sample.input.as_input()).unwrap();
    let loss = model.decode_train(&enc, &gold, None::<(f64, &mut ChaCha8Rng)>).unwrap();
    let (ids, _) = model.decode_greedy(&enc, 30);
    (loss, ids, gold[..gold.len() - 1].to_vec())
}

#[test]
fn single_pair_is_memorized() {
    for variant in Variant::ALL {
        let (loss, ids, gold) = overfit(variant);
        assert!(loss < 0.01, "{variant}: {loss}");
        assert_eq!(ids, gold, "{variant}");
    }
}

#[test]
fn training_is_deterministic_and_keeps_best_epoch() {
    let dims = toy_dims(Variant::Hybrid);
    let make = || {
        let samples: Vec<TrainSample> = (0..4)
            .map(|i| TrainSample {
                input: toy_input(Variant::Hybrid, i, 4 + i as usize),
                captions: vec![vec![3 + (i as usize % 3), EOS], vec![4, 5, EOS]],
            })
            .collect();
        samples
    };
    let data = make();
    let cfg = TrainConfig {
        batch_size: 3,
        max_epochs: 15,
        patience: 3,
        ..TrainConfig::default()
    };
    let mut a = Seq2SeqModel::new(dims, 4).unwrap();
    let mut b = Seq2SeqModel::new(dims, 4).unwrap();
    let ra = train(&mut a, &data[..3], &data[3..], &cfg).unwrap();
    let rb = train(&mut b, &data[..3], &data[3..], &cfg).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.named_tensors(), b.named_tensors());
    let argmin = ra
        .val_curve
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0;
    assert_eq!(ra.best_epoch, argmin);
    assert!(train(&mut a, &[], &data, &cfg).is_err());
}
