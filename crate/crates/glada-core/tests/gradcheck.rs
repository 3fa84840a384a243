//! Central finite-difference checks of every hand-written backward pass:
//! the encoder (eval- and train-mode batch norm), the classifier under
//! cross-entropy, the discriminator under the adversarial losses, the
//! adversarial loss gradients themselves, and the center-loss family.

use glada_core::align::{
    center_grad, center_loss, discriminator_loss_grad, encoder_adv_loss, encoder_adv_loss_grad,
    AdvMode, CenterBank,
};
use glada_core::nets::{
    classifier_backward, classifier_forward, discriminator_backward, discriminator_forward,
    discriminator_forward_cached, encoder_backward, encoder_forward_eval_cached,
    encoder_forward_train, EncoderConfig, Grads, NetParams, FEATURE_DIM,
};
use glada_core::pretrain::cross_entropy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_EPS: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff < 1e-8 {
        return 0.0;
    }
    diff / a.abs().max(b.abs()).max(1e-8)
}

fn rand_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect()
}

/// Compares analytic parameter gradients against central differences on a
/// deterministic sample of coordinates from every trainable array.
fn check_param_grads(
    params: &NetParams,
    analytic: &Grads,
    eval: &dyn Fn(&NetParams) -> f64,
    tol: f64,
    coords_per_array: usize,
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trainable = params.trainable_indices();
    for (gi, &pi) in trainable.iter().enumerate() {
        let len = params.array(pi).len();
        let coords: Vec<usize> = if len <= coords_per_array {
            (0..len).collect()
        } else {
            (0..coords_per_array).map(|_| rng.gen_range(0..len)).collect()
        };
        for c in coords {
            let w = params.array(pi)[c];
            let h = FD_EPS * w.abs().max(1.0);
            let mut plus = params.clone();
            plus.array_mut(pi)[c] = w + h;
            let mut minus = params.clone();
            minus.array_mut(pi)[c] = w - h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.arrays[gi][c];
            assert!(
                rel_err(a, fd) < tol,
                "array {} coord {c}: analytic {a:.3e} vs fd {fd:.3e}",
                params.arrays()[pi].name,
            );
        }
    }
}

/// Same idea for gradients on a dense input buffer.
fn check_input_grads(
    input: &[f64],
    analytic: &[f64],
    eval: &dyn Fn(&[f64]) -> f64,
    tol: f64,
    coords: usize,
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..coords.min(input.len()) {
        let c = rng.gen_range(0..input.len());
        let v = input[c];
        let h = FD_EPS * v.abs().max(1.0);
        let mut plus = input.to_vec();
        plus[c] = v + h;
        let mut minus = input.to_vec();
        minus[c] = v - h;
        let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
        assert!(
            rel_err(analytic[c], fd) < tol,
            "input coord {c}: analytic {:.3e} vs fd {fd:.3e}",
            analytic[c]
        );
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn encoder_eval_mode_gradients_match_fd() {
    let (b, m, n) = (2, 2, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut enc = NetParams::encoder(EncoderConfig::multivariate(m), 3).unwrap();
    // Non-trivial running stats so eval-mode normalization is exercised.
    for block in 0..3usize {
        let base = block * 5;
        let len = enc.array(base + 3).len();
        *enc.array_mut(base + 3) = rand_vec(&mut rng, len, 0.3);
        let rv: Vec<f64> = rand_vec(&mut rng, len, 0.4).iter().map(|v| 0.8 + v.abs()).collect();
        *enc.array_mut(base + 4) = rv;
    }
    let x = rand_vec(&mut rng, b * m * n, 1.0);
    let r = rand_vec(&mut rng, b * FEATURE_DIM, 1.0);

    let (_, cache) = encoder_forward_eval_cached(&enc, &x, b, m, n).unwrap();
    let analytic = encoder_backward(&enc, &cache, &r);
    let eval = |p: &NetParams| {
        let (f, _) = encoder_forward_eval_cached(p, &x, b, m, n).unwrap();
        dot(&f, &r)
    };
    check_param_grads(&enc, &analytic, &eval, 1e-3, 25, 101);
}

#[test]
fn encoder_train_mode_gradients_match_fd() {
    // Batch statistics are input-dependent here, so this exercises the full
    // coupled batch-norm backward. Dropout is disabled (rate 0) to keep the
    // function smooth.
    let (b, m, n) = (3, 2, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let cfg = EncoderConfig { dropout_rate: 0.0, ..EncoderConfig::multivariate(m) };
    let enc = NetParams::encoder(cfg, 5).unwrap();
    let x = rand_vec(&mut rng, b * m * n, 1.0);
    let r = rand_vec(&mut rng, b * FEATURE_DIM, 1.0);

    let run = |p: &NetParams| {
        let mut scratch = p.clone();
        let mut drop_rng = ChaCha8Rng::seed_from_u64(7);
        encoder_forward_train(&mut scratch, &x, b, m, n, &mut drop_rng).unwrap()
    };
    let (_, cache) = run(&enc);
    let analytic = encoder_backward(&enc, &cache, &r);
    let eval = |p: &NetParams| dot(&run(p).0, &r);
    check_param_grads(&enc, &analytic, &eval, 1e-3, 20, 201);
}

#[test]
fn classifier_gradients_match_fd() {
    let (b, k) = (4, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let clf = NetParams::classifier(k, 9).unwrap();
    let features = rand_vec(&mut rng, b * FEATURE_DIM, 1.0);
    let labels: Vec<i32> = (0..b).map(|_| rng.gen_range(0..k as i32)).collect();

    let (_, probs) = classifier_forward(&clf, &features, b).unwrap();
    let (_, dlogits) = cross_entropy(&probs, &labels, k).unwrap();
    let (analytic, dfeat) = classifier_backward(&clf, &features, &dlogits, b);

    let eval = |p: &NetParams| {
        let (_, probs) = classifier_forward(p, &features, b).unwrap();
        cross_entropy(&probs, &labels, k).unwrap().0
    };
    check_param_grads(&clf, &analytic, &eval, 1e-3, 60, 301);

    let eval_input = |f: &[f64]| {
        let (_, probs) = classifier_forward(&clf, f, b).unwrap();
        cross_entropy(&probs, &labels, k).unwrap().0
    };
    check_input_grads(&features, &dfeat, &eval_input, 1e-3, 60, 302);
}

#[test]
fn discriminator_gradients_match_fd() {
    let b = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let disc = NetParams::discriminator(11);
    let features = rand_vec(&mut rng, b * FEATURE_DIM, 1.0);

    for mode in [AdvMode::SharedHalf, AdvMode::Literal] {
        let (d, cache) = discriminator_forward_cached(&disc, &features, b).unwrap();
        let (_, g) = encoder_adv_loss_grad(&d, mode).unwrap();
        let (analytic, dfeat) = discriminator_backward(&disc, &cache, &g);

        let eval = |p: &NetParams| {
            let d = discriminator_forward(p, &features, b).unwrap();
            encoder_adv_loss(&d, mode).unwrap()
        };
        check_param_grads(&disc, &analytic, &eval, 1e-3, 30, 401);

        let eval_input = |f: &[f64]| {
            let d = discriminator_forward(&disc, f, b).unwrap();
            encoder_adv_loss(&d, mode).unwrap()
        };
        check_input_grads(&features, &dfeat, &eval_input, 1e-3, 40, 402);
    }
}

#[test]
fn adversarial_loss_gradients_match_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for mode in [AdvMode::SharedHalf, AdvMode::Literal] {
        // Stay away from the 0.5 clamp boundary of the literal mode.
        let d_src: Vec<f64> = (0..6).map(|_| 0.05 + rng.gen::<f64>() * 0.4).collect();
        let d_tgt: Vec<f64> = (0..5).map(|_| 0.55 + rng.gen::<f64>() * 0.4).collect();
        let (_, g_src, g_tgt) = discriminator_loss_grad(&d_src, &d_tgt, mode).unwrap();
        for i in 0..d_src.len() {
            let h = 1e-7;
            let mut plus = d_src.clone();
            plus[i] += h;
            let mut minus = d_src.clone();
            minus[i] -= h;
            let fd = (discriminator_loss_grad(&plus, &d_tgt, mode).unwrap().0
                - discriminator_loss_grad(&minus, &d_tgt, mode).unwrap().0)
                / (2.0 * h);
            assert!(rel_err(g_src[i], fd) < 1e-4, "{} d_src[{i}]", mode.name());
        }
        for i in 0..d_tgt.len() {
            let h = 1e-7;
            let mut plus = d_tgt.clone();
            plus[i] += h;
            let mut minus = d_tgt.clone();
            minus[i] -= h;
            let fd = (discriminator_loss_grad(&d_src, &plus, mode).unwrap().0
                - discriminator_loss_grad(&d_src, &minus, mode).unwrap().0)
                / (2.0 * h);
            assert!(rel_err(g_tgt[i], fd) < 1e-4, "{} d_tgt[{i}]", mode.name());
        }

        let (_, ge) = encoder_adv_loss_grad(&d_tgt, mode).unwrap();
        for i in 0..d_tgt.len() {
            let h = 1e-7;
            let mut plus = d_tgt.clone();
            plus[i] += h;
            let mut minus = d_tgt.clone();
            minus[i] -= h;
            let fd = (encoder_adv_loss(&plus, mode).unwrap()
                - encoder_adv_loss(&minus, mode).unwrap())
                / (2.0 * h);
            assert!(rel_err(ge[i], fd) < 1e-4, "{} encoder d[{i}]", mode.name());
        }
    }
}

#[test]
fn center_grad_matches_fd_tightly() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    for _ in 0..20 {
        let k = rng.gen_range(2..5usize);
        let dim = rng.gen_range(2..6usize);
        let b = rng.gen_range(1..7usize);
        // Random centers via per-class means of a one-row-per-class batch.
        let centers = rand_vec(&mut rng, k * dim, 2.0);
        let labels_init: Vec<i32> = (0..k as i32).collect();
        let bank = CenterBank::from_class_means(&centers, &labels_init, k, dim);
        let f = rand_vec(&mut rng, b * dim, 2.0);
        let y: Vec<i32> = (0..b).map(|_| rng.gen_range(0..k as i32)).collect();

        let analytic = center_grad(&f, &y, &bank).unwrap();
        for c in 0..f.len() {
            let h = 1e-6 * f[c].abs().max(1.0);
            let mut plus = f.clone();
            plus[c] += h;
            let mut minus = f.clone();
            minus[c] -= h;
            let fd = (center_loss(&plus, &y, &bank).unwrap()
                - center_loss(&minus, &y, &bank).unwrap())
                / (2.0 * h);
            assert!(
                rel_err(analytic[c], fd) < 1e-6,
                "coord {c}: analytic {:.6e} vs fd {fd:.6e}",
                analytic[c]
            );
        }
    }
}
