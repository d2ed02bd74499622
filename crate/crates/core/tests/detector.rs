use handstate::data_model::ContactState;
use handstate::detector::{
    load_checkpoint, save_checkpoint, train, DetectorModel, MemoryImageProvider, ModelConfig,
    TrainConfig,
};
use handstate::nn::image_to_tensor;
use handstate::synth::{generate_scene, SceneConfig};
use handstate::Error;
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn one_scene() -> (handstate::data_model::ImageRecord, image::RgbImage) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    generate_scene(
        &mut rng,
        &SceneConfig::default(),
        "one",
        "u",
        Some(&[ContactState::PortableObject]),
    )
}

fn check_invariants(model: &DetectorModel, x: &Array3<f32>) {
    let (hands, objects) = model.forward(x).unwrap();
    for w in hands.windows(2) {
        assert!(w[0].score >= w[1].score);
    }
    for w in objects.windows(2) {
        assert!(w[0].score >= w[1].score);
    }
    for h in &hands {
        assert!((0.0..=1.0).contains(&h.score));
        assert!((h.side_probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!((h.state_probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(h.state_probs.iter().chain(&h.side_probs).all(|p| (0.0..=1.0).contains(p)));
        assert!((h.offset_dir[0].hypot(h.offset_dir[1]) - 1.0).abs() < 1e-6);
        assert!(h.offset_mag >= 0.0);
    }
    for o in &objects {
        assert!((0.0..=1.0).contains(&o.score));
    }
}

#[test]
fn untrained_model_respects_output_contract() {
    let (_, img) = one_scene();
    let x = image_to_tensor(&img);
    check_invariants(&DetectorModel::new(ModelConfig::default(), 0), &x);
    let strict = ModelConfig {
        score_floor: 0.99,
        ..Default::default()
    };
    let (h, o) = DetectorModel::new(strict, 0).forward(&x).unwrap();
    assert!(h.is_empty() && o.is_empty());
}

#[test]
fn too_small_input_is_rejected() {
    let model = DetectorModel::new(ModelConfig::default(), 0);
    let err = model.forward(&Array3::zeros((3, 4, 64))).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn batch_outputs_align_with_inputs() {
    let model = DetectorModel::new(ModelConfig::default(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<_> = (0..3)
        .map(|i| {
            let (_, img) = generate_scene(&mut rng, &SceneConfig::default(), &i.to_string(), "u", None);
            image_to_tensor(&img)
        })
        .collect();
    let batch = model.forward_batch(&xs).unwrap();
    assert_eq!(batch.len(), 3);
    for (x, out) in xs.iter().zip(&batch) {
        assert_eq!(&model.forward(x).unwrap(), out);
    }
}

#[test]
fn single_image_overfit_and_checkpoint_identity() {
    let (rec, img) = one_scene();
    let mut provider = MemoryImageProvider::default();
    provider.insert("one", img.clone());
    let cfg = TrainConfig {
        epochs: 80,
        learning_rate: 2e-3,
        ..Default::default()
    };
    let (model, report) = train(std::slice::from_ref(&rec), &provider, &cfg, None).unwrap();
    let first = report.losses[0].total;
    let last = report.losses.last().unwrap().total;
    assert!(last < first, "loss {first} -> {last}");

    let (hands, _) = model.detect(&img).unwrap();
    let gt = &rec.hands[0];
    let best = &hands[0];
    assert!(best.bbox.iou(&gt.bbox) >= 0.75, "{best:?} vs {gt:?}");
    assert_eq!(best.side(), gt.side);
    assert_eq!(best.state(), gt.state);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&path, &model, Some(&cfg)).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let x = image_to_tensor(&img);
    assert_eq!(model.forward(&x).unwrap(), back.forward(&x).unwrap());
}

#[test]
fn fixed_seed_reproduces_loss_trajectory() {
    let (rec, img) = one_scene();
    let mut provider = MemoryImageProvider::default();
    provider.insert("one", img);
    let cfg = TrainConfig {
        epochs: 3,
        ..Default::default()
    };
    let set = std::slice::from_ref(&rec);
    let a = train(set, &provider, &cfg, None).unwrap().1;
    let b = train(set, &provider, &cfg, None).unwrap().1;
    assert_eq!(a.losses, b.losses);
}

#[test]
fn missing_image_is_reported() {
    let (rec, _) = one_scene();
    let err = train(&[rec], &MemoryImageProvider::default(), &TrainConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::UnresolvedImage(id) if id == "one"));
}

#[test]
fn divergent_training_aborts_with_non_finite_loss() {
    let (rec, img) = one_scene();
    let mut provider = MemoryImageProvider::default();
    provider.insert("one", img);
    let cfg = TrainConfig {
        epochs: 50,
        learning_rate: 1e18,
        ..Default::default()
    };
    match train(&[rec], &provider, &cfg, None) {
        Err(Error::NonFiniteLoss { .. }) => {}
        other => panic!("expected non-finite loss, got {:?}", other.map(|r| r.1.losses.last().copied())),
    }
}
