use attrflip_core::attack::{
    ffa_direction, fgs_direction, line_search_along, run_attack, AttackConfig, FlipGoal, Method, Mode,
};
use attrflip_core::model::layers::weight_count;
use attrflip_core::model::{Activation, ClassifierModel, HeadKind, LayerSpec};
use attrflip_core::pass::PassConfig;
use attrflip_core::{ImageTensor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear(w: &[f64], bias: f64) -> ClassifierModel {
    let mut weights = w.to_vec();
    weights.push(bias);
    ClassifierModel::from_parts(
        Shape::new(1, w.len(), 1),
        vec![LayerSpec::dense(1, Activation::Identity)],
        HeadKind::EuclideanSingle,
        vec!["a".into()],
        None,
        weights,
    )
    .unwrap()
}

fn score(w: &[f64], b: f64, x: &[f64], d: &[f64], eps: f64) -> f64 {
    w.iter()
        .zip(x)
        .zip(d)
        .map(|((w, x), d)| w * (x + eps * d).clamp(0.0, 255.0))
        .sum::<f64>()
        + b
}

#[test]
fn analytic_fixture_epsilon() {
    let m = linear(&[1.0, -2.0, 0.0], 0.0);
    let x = ImageTensor::new(Shape::new(1, 3, 1), vec![1.0, 0.25, 9.0]).unwrap();
    let goal = FlipGoal::for_image(&m, &x, 0, 1).unwrap();
    let cfg = AttackConfig::default();
    let d = ffa_direction(&m, &x, 0).unwrap();
    assert_eq!(d, vec![-0.5, 1.0, 0.0]);
    let eps = line_search_along(&m, &x, &d, &goal, &cfg).unwrap().unwrap();
    assert!((eps - 0.2).abs() < 1e-3);

    // FGS: w = (1, -1.5, 0) gives sign direction (-1, 1, 0), w.d = -2.5, f = 0.5
    let m = linear(&[1.0, -1.5, 0.0], -0.125);
    assert_eq!(fgs_direction(&m, &x, 0, 1).unwrap(), vec![-1.0, 1.0, 0.0]);
    let out = run_attack(
        &m,
        "x",
        &x,
        0,
        1,
        &AttackConfig::new(Method::Fgs, Mode::LineSearch),
        &PassConfig::default(),
    )
    .unwrap();
    assert!((out.epsilon.unwrap() - 0.2).abs() < 1e-3);
    assert!(out.flipped);
}

#[test]
fn line_search_is_minimal_on_a_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = AttackConfig::default();
    let mut checked = 0;
    for _ in 0..400 {
        let n = rng.random_range(2..8);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..=255) as f64).collect();
        let b = rng.random_range(-20.0..20.0);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = linear(&w, b);
        let img = ImageTensor::new(Shape::new(1, n, 1), x.clone()).unwrap();
        let goal = FlipGoal::for_image(&m, &img, 0, 1).unwrap();
        let Some(eps) = line_search_along(&m, &img, &d, &goal, &cfg).unwrap() else {
            continue;
        };
        let flips = |e: f64| (if score(&w, b, &x, &d, e) > 0.0 { 1 } else { -1 }) == goal.target_class;
        assert!(flips(eps), "found epsilon does not flip");
        // the score is linear, hence monotone, until the first pixel saturates
        let saturate = x
            .iter()
            .zip(&d)
            .map(|(x, d)| {
                if *d > 0.0 {
                    (255.0 - x) / d
                } else if *d < 0.0 {
                    -x / d
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min);
        let step = 1e-3;
        let mut e = 0.0;
        while e < (eps - 1e-3).min(saturate) {
            assert!(!flips(e), "flip at {e} before reported {eps}");
            e += step;
        }
        checked += 1;
    }
    assert!(checked > 50, "{checked}");
}

#[test]
fn outcome_invariants_on_small_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = Shape::new(12, 12, 3);
    let pass = PassConfig::default();
    for trial in 0..6 {
        let layers = vec![
            LayerSpec::conv(3, 3, Activation::Relu),
            LayerSpec::AvgPool { size: 2 },
            LayerSpec::dense(2, Activation::Identity),
        ];
        let count = weight_count(shape, &layers).unwrap();
        let weights = (0..count).map(|_| rng.random_range(-0.02..0.02)).collect();
        let m = ClassifierModel::from_parts(
            shape,
            layers,
            HeadKind::EuclideanMulti,
            vec!["a".into(), "b".into()],
            None,
            weights,
        )
        .unwrap();
        let x = ImageTensor::new(
            shape,
            (0..shape.len()).map(|_| rng.random_range(0..=255) as f64).collect(),
        )
        .unwrap();
        for method in [Method::Fgs, Method::Ffa] {
            for mode in [Mode::LineSearch, Mode::Iterative] {
                let cfg = AttackConfig::new(method, mode);
                let y = if trial % 2 == 0 { 1 } else { -1 };
                let out = run_attack(&m, "x", &x, 0, y, &cfg, &pass).unwrap();
                assert!(out.perturbed.is_quantized());
                assert!(out.perturbed.pixels().iter().all(|p| (0.0..=255.0).contains(p)));
                if mode == Mode::LineSearch {
                    assert!(out.gradient_evaluations <= 1);
                }
                if method == Method::Fgs && mode == Mode::Iterative {
                    let eta = out.eta(&x).unwrap();
                    let linf = eta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    assert!(linf <= out.iterations as f64);
                }
                if out.flipped {
                    let before = m.forward(&x).unwrap().class_of(0);
                    let after = m.forward(&out.perturbed).unwrap().class_of(0);
                    assert_ne!(before, after);
                    assert_eq!(out.is_adversarial, out.pass_score.unwrap() >= pass.tau);
                }
            }
        }
    }
}
