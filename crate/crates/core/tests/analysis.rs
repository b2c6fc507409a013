use attrflip_core::analysis::{
    correlation_matrix, epoch_overlap, flippability_rows, natural_adversarial_scan, overlap_from_outcomes,
    paired_t_test, run_attacks, sample_indices, trivial_baseline, AdvType, FlipSource, FLIP_THRESHOLDS,
};
use attrflip_core::attack::{verify_flip, AttackConfig, Method, Mode};
use attrflip_core::data::outcomes::{parse_outcomes, write_outcomes, OutcomeRecord};
use attrflip_core::data::synth::{synth_dataset, SynthConfig};
use attrflip_core::data::AttributeDataset;
use attrflip_core::model::{Activation, ClassifierModel, HeadKind, LayerSpec, ModelSpec, TrainConfig, Trainer};
use attrflip_core::pass::{pass_score, PassConfig};

fn toy() -> (ClassifierModel, ClassifierModel, AttributeDataset) {
    let cfg = SynthConfig {
        height: 16,
        width: 16,
        train_count: 300,
        val_count: 20,
        test_count: 20,
        seed: 4,
        ..SynthConfig::default()
    };
    let data = synth_dataset(&cfg).unwrap();
    let spec = ModelSpec {
        input_shape: cfg.shape(),
        hidden: vec![
            LayerSpec::conv(4, 3, Activation::Relu),
            LayerSpec::AvgPool { size: 2 },
            LayerSpec::dense(16, Activation::Relu),
        ],
        head: HeadKind::EuclideanMulti,
        attribute_names: cfg.attribute_names(),
        channel_mean: Some(vec![128.0; 3]),
    };
    let tc = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 16,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(ClassifierModel::new(&spec, 2).unwrap(), tc).unwrap();
    trainer.train_epoch(&data.train).unwrap();
    let early = trainer.model().clone();
    for _ in 0..3 {
        trainer.train_epoch(&data.train).unwrap();
    }
    let sample = data.train.subset(&sample_indices(data.train.len(), 30, 8)).unwrap();
    (early, trainer.into_model(), sample)
}

#[test]
fn reports_recount_from_serialized_outcomes() {
    let (early, model, images) = toy();
    let pass = PassConfig::default();
    let cfg = AttackConfig::new(Method::Ffa, Mode::LineSearch);
    let outcomes = run_attacks(&model, &images, &cfg, &pass).unwrap();
    let records: Vec<OutcomeRecord> = outcomes
        .iter()
        .map(|o| OutcomeRecord {
            model_id: "m".into(),
            config_hash: "h".into(),
            outcome: o.clone(),
        })
        .collect();
    let mut buf = Vec::new();
    write_outcomes(&mut buf, &records).unwrap();
    let back: Vec<_> = parse_outcomes(std::str::from_utf8(&buf).unwrap())
        .unwrap()
        .into_iter()
        .map(|r| r.outcome)
        .collect();
    assert_eq!(back, outcomes);

    let rows = flippability_rows("ffa", &back, &FLIP_THRESHOLDS);
    for row in &rows {
        assert!(row.counts.windows(2).all(|w| w[0] >= w[1]));
        let group: Vec<_> = back.iter().filter(|o| AdvType::of(o) == row.adv_type).collect();
        assert_eq!(row.total, group.len());
        for (k, &tau) in FLIP_THRESHOLDS.iter().enumerate() {
            // recount from pixels: fresh forward pass and fresh PASS
            let recount = group
                .iter()
                .filter(|o| {
                    let x = &images.find(&o.image_id).unwrap().image;
                    let flipped = verify_flip(&model, x, &o.perturbed, o.attribute, o.ground_truth, o.natural).unwrap();
                    flipped && pass_score(x, &o.perturbed, &pass).unwrap().score >= tau
                })
                .count();
            assert_eq!(recount, row.counts[k]);
        }
    }

    let sources = FlipSource::from_outcomes(&back, &images, pass.tau, |o| o.attribute).unwrap();
    let m = correlation_matrix(&model, &sources).unwrap();
    for i in 0..m.size() {
        if m.valid(i) {
            assert_eq!(m.get(i, i), Some(1.0));
        }
        for j in 0..m.size() {
            let brute = sources
                .iter()
                .filter(|s| s.row == i)
                .filter(|s| model.predict(s.original).unwrap()[j] != model.predict(s.perturbed).unwrap()[j])
                .count();
            assert_eq!(brute, m.hits[i][j]);
        }
    }

    let same = epoch_overlap(&model, &model, &images, &cfg, &pass).unwrap();
    for s in &same {
        assert_eq!((s.overlap_count, s.count_early), (s.count_converged, s.count_converged));
    }
    let early_out = run_attacks(&early, &images, &cfg, &pass).unwrap();
    for s in overlap_from_outcomes("ffa", &early_out, &back) {
        assert!(s.overlap_count <= s.count_early.min(s.count_converged));
    }
}

#[test]
fn natural_scan_records_satisfy_correction() {
    let (early, _, images) = toy();
    let pass = PassConfig::default();
    let scan = natural_adversarial_scan(
        &early,
        &images,
        &AttackConfig::new(Method::Ffa, Mode::LineSearch),
        &pass,
    )
    .unwrap();
    for r in &scan.records {
        let x = &images.find(&r.image_id).unwrap().image;
        assert_ne!(early.predict(x).unwrap()[r.attribute], r.ground_truth);
        assert_eq!(early.predict(&r.perturbed).unwrap()[r.attribute], r.ground_truth);
        assert!(pass_score(x, &r.perturbed, &pass).unwrap().score >= 0.95);
    }
    assert!(scan.records.len() <= scan.misclassified);
}

#[test]
fn t_test_against_closed_form() {
    // df = 2: P(T <= t) = (1 + t / sqrt(2 + t^2)) / 2
    let r = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
    let t = 2.0 / (1.0f64 / 3.0).sqrt();
    let p = 2.0 * (1.0 - 0.5 * (1.0 + t / (2.0 + t * t).sqrt()));
    assert!((r.t - t).abs() < 1e-6 && (r.t - 3.4641).abs() < 1e-4);
    assert_eq!(r.df, 2.0);
    assert!((r.p - p).abs() < 1e-4 && (r.p - 0.0742).abs() < 1e-4);
    let neg = paired_t_test(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!((neg.t + r.t).abs() < 1e-12 && (neg.p - r.p).abs() < 1e-12);
    // df = 1 is Cauchy: P(T <= t) = 1/2 + atan(t)/pi
    let r = paired_t_test(&[1.0, 3.0], &[0.0, 0.0]).unwrap();
    let p = 1.0 - 2.0 * r.t.abs().atan() / std::f64::consts::PI;
    assert!((r.p - p).abs() < 1e-10);
}

#[test]
fn baseline_counts() {
    let train: Vec<Vec<i8>> = (0..10).map(|i| vec![if i < 6 { 1 } else { -1 }, -1]).collect();
    let test: Vec<Vec<i8>> = (0..10).map(|i| vec![if i < 3 { -1 } else { 1 }, -1]).collect();
    let b = trivial_baseline(&train, &test).unwrap();
    assert_eq!(b.predictions, vec![1, -1]);
    assert!((b.errors[0] - 0.3).abs() < 1e-12 && b.errors[1] == 0.0);
}
