use attrflip_core::model::{Activation, ClassifierModel, HeadKind, LayerSpec, LossSpec, ModelSpec};
use attrflip_core::{ImageTensor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(head: HeadKind, rng: &mut ChaCha8Rng) -> ClassifierModel {
    let shape = Shape::new(
        rng.random_range(4..8),
        rng.random_range(4..8),
        if rng.random_bool(0.5) { 3 } else { 1 },
    );
    let mut hidden = vec![LayerSpec::conv(rng.random_range(1..4), 3, Activation::Tanh)];
    if rng.random_bool(0.5) {
        hidden.push(LayerSpec::AvgPool { size: 2 });
    }
    hidden.push(LayerSpec::dense(rng.random_range(2..6), Activation::Tanh));
    let attributes = match head {
        HeadKind::EuclideanSingle => 1,
        _ => rng.random_range(1..4),
    };
    let spec = ModelSpec {
        input_shape: shape,
        hidden,
        head,
        attribute_names: (0..attributes).map(|i| format!("a{i}")).collect(),
        channel_mean: Some(vec![128.0; shape.channels]),
    };
    ClassifierModel::new(&spec, rng.random()).unwrap()
}

fn random_image(shape: Shape, rng: &mut ChaCha8Rng) -> ImageTensor {
    ImageTensor::new(shape, (0..shape.len()).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap()
}

/// Worst componentwise relative error of the analytic gradient against
/// central differences; components far below the gradient's scale are
/// compared against that scale instead of their own.
fn worst_relative_error(model: &ClassifierModel, x: &ImageTensor, loss: &LossSpec<'_>) -> f64 {
    let analytic = model.input_gradient(x, loss).unwrap();
    let h = 1e-3;
    let eval = |img: &ImageTensor| match loss {
        LossSpec::Labels(y) => model.loss(img, y).unwrap(),
        LossSpec::Target(t) => {
            let f = model.forward(img).unwrap();
            0.5 * f.scores.iter().zip(t.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        }
        LossSpec::AttributeLabel { .. } => unreachable!(),
    };
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let mut plus = x.clone();
        plus.pixels_mut()[k] += h;
        let mut minus = x.clone();
        minus.pixels_mut()[k] -= h;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let denom = a.abs().max(numeric.abs()).max(1e-3 * scale).max(1e-12);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

#[test]
fn input_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for head in [
        HeadKind::EuclideanSingle,
        HeadKind::EuclideanMulti,
        HeadKind::SoftmaxLogits,
    ] {
        for _ in 0..25 {
            let model = random_model(head, &mut rng);
            let x = random_image(model.input_shape(), &mut rng);
            let labels: Vec<i8> = (0..model.attribute_count())
                .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                .collect();
            let target: Vec<f64> = (0..model.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e1 = worst_relative_error(&model, &x, &LossSpec::Labels(&labels));
            let e2 = worst_relative_error(&model, &x, &LossSpec::Target(&target));
            assert!(e1 < 1e-4 && e2 < 1e-4, "{head:?}: {e1} {e2}");
        }
    }
}
