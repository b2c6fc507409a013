use attrflip_core::pass::{ecc_align, pass_score, ssim, EccConfig, PassConfig, SsimConfig};
use attrflip_core::{ImageTensor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean over all fully-inside 11x11 windows, each weighted by a directly
/// evaluated 2-D Gaussian.
fn brute_force_ssim(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let (n, sigma) = (11usize, 1.5f64);
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut g = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (dy, dx) = (y as f64 - 5.0, x as f64 - 5.0);
            g[y * n + x] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    let mut channel_sum = 0.0;
    for c in 0..a.channels() {
        let (mut sum, mut count) = (0.0, 0);
        for y0 in 0..=a.height() - n {
            for x0 in 0..=a.width() - n {
                let (mut ma, mut mb) = (0.0, 0.0);
                for y in 0..n {
                    for x in 0..n {
                        ma += g[y * n + x] * a.get(y0 + y, x0 + x, c);
                        mb += g[y * n + x] * b.get(y0 + y, x0 + x, c);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for y in 0..n {
                    for x in 0..n {
                        let (p, q) = (a.get(y0 + y, x0 + x, c) - ma, b.get(y0 + y, x0 + x, c) - mb);
                        va += g[y * n + x] * p * p;
                        vb += g[y * n + x] * q * q;
                        cov += g[y * n + x] * p * q;
                    }
                }
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        channel_sum += sum / count as f64;
    }
    channel_sum / a.channels() as f64
}

fn random(shape: Shape, rng: &mut ChaCha8Rng) -> ImageTensor {
    ImageTensor::new(
        shape,
        (0..shape.len()).map(|_| rng.random_range(0..=255) as f64).collect(),
    )
    .unwrap()
}

#[test]
fn ssim_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = SsimConfig::default();
    for i in 0..20 {
        let shape = Shape::new(16, 16, if i % 2 == 0 { 1 } else { 3 });
        let a = random(shape, &mut rng);
        let mut b = a.clone();
        for p in b.pixels_mut() {
            *p = (*p + rng.random_range(-40.0..40.0)).clamp(0.0, 255.0);
        }
        let fast = ssim(&a, &b, &cfg).unwrap();
        let slow = brute_force_ssim(&a, &b);
        assert!((fast - slow).abs() < 1e-8, "{fast} vs {slow}");
    }
}

fn smooth(phase: f64, dx: f64, dy: f64) -> ImageTensor {
    let (h, w) = (32, 32);
    let px = (0..h * w)
        .map(|p| {
            let (y, x) = ((p / w) as f64 - dy, (p % w) as f64 - dx);
            128.0 + 50.0 * (x / 5.0 + phase).sin() * (y / 6.0 - phase).cos() + 20.0 * ((x + y) / 9.0).cos()
        })
        .collect();
    ImageTensor::new(Shape::new(h, w, 1), px).unwrap().quantized()
}

#[test]
fn ecc_recovers_integer_translations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = EccConfig::default();
    let mut good = 0;
    for _ in 0..40 {
        let phase = rng.random_range(0.0..6.0);
        let (dx, dy) = (rng.random_range(-3..=3) as f64, rng.random_range(-3..=3) as f64);
        let a = smooth(phase, 0.0, 0.0);
        let b = smooth(phase, dx, dy);
        let al = ecc_align(&a, &b, &cfg).unwrap();
        // reference point (x, y) sits at (x + dx, y + dy) in the moving image
        let (cx, cy) = (15.5, 15.5);
        let (mx, my) = al.homography.apply(cx, cy);
        if al.converged && (mx - cx - dx).abs() < 0.1 && (my - cy - dy).abs() < 0.1 {
            good += 1;
        }
    }
    assert!(good >= 38, "{good}/40");
}

#[test]
fn pass_of_identical_and_shifted_images() {
    let cfg = PassConfig::default();
    let a = smooth(1.0, 0.0, 0.0);
    let r = pass_score(&a, &a, &cfg).unwrap();
    assert_eq!(r.score, 1.0);
    assert!(r.homography.is_identity());
    let b = smooth(1.0, 2.0, -1.0);
    assert!(pass_score(&a, &b, &cfg).unwrap().score > 0.98);
}
