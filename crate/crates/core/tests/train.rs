use depthflow::rng::normal;
use depthflow::train::*;
use depthflow::{Activation, FullyIidLaw, ModelConfig, ParamLaw, SeedSpec};
use nalgebra::DMatrix;
use rand::Rng;

fn tiny_model(depth: usize, width: usize, phi: Activation, psi: Activation, sw: f64, sb: f64) -> ModelConfig {
    let law = ParamLaw::FullyIid(FullyIidLaw::new(sw, sb).unwrap());
    ModelConfig::new(depth, width, 1.0, phi, psi, law).unwrap()
}

fn batch(b: usize, z: usize, y: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = SeedSpec::new(seed).rng();
    let zs = DMatrix::from_fn(b, z, |_, _| normal(&mut rng));
    let ys = DMatrix::from_fn(b, y, |r, c| if c == r % y { 1.0 } else { 0.0 });
    (zs, ys)
}

/// Straight loops over scalars, no shared code with the library forward pass.
fn naive_loss(net: &Network, z: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let (b, zd) = z.shape();
    let d = net.adapt.w_i.nrows();
    let yd = net.adapt.w_o.nrows();
    let mut total = 0.0;
    for n in 0..b {
        let mut x = vec![0.0; d];
        for r in 0..d {
            for i in 0..zd {
                x[r] += net.adapt.w_i[(r, i)] * z[(n, i)];
            }
        }
        for l in 0..net.params.depth() {
            let (sw, sb) = match net.params.mode {
                GradientMode::Reparametrized => (net.params.scale_w, net.params.scale_b),
                GradientMode::Standard => (1.0, 1.0),
            };
            let mut next = x.clone();
            for r in 0..d {
                let mut h = net.params.biases[l][r] * sb;
                for c in 0..d {
                    h += net.params.weights[l][(r, c)] * sw * net.psi.eval(x[c]);
                }
                next[r] += net.phi.eval(h);
            }
            x = next;
        }
        let logits: Vec<f64> = (0..yd)
            .map(|k| (0..d).map(|r| net.adapt.w_o[(k, r)] * x[r]).sum())
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for k in 0..yd {
            total -= y[(n, k)] * (logits[k] - lse);
        }
    }
    total / b as f64
}

#[test]
fn loss_matches_naive_reimplementation() {
    let m = tiny_model(3, 4, Activation::Tanh, Activation::Identity, 1.0, 1.0);
    let net = Network::init(&m, GradientMode::Reparametrized, 3, 2, SeedSpec::new(11), true).unwrap();
    let (z, y) = batch(5, 3, 2, 4);
    let (loss, _) = forward_loss(&net, &z, &y).unwrap();
    assert!((loss - naive_loss(&net, &z, &y)).abs() < 1e-12);
    let std = net.with_mode(GradientMode::Standard);
    assert!((forward_loss(&std, &z, &y).unwrap().0 - naive_loss(&std, &z, &y)).abs() < 1e-12);
}

fn rel_err(a: f64, b: f64) -> f64 {
    // gradient entries near zero are compared on an absolute scale
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Largest relative error between analytic and central-difference gradients
/// over every trainable entry.
pub fn max_gradient_error(net: &Network, z: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let h = 1e-5;
    let (_, cache) = forward_loss(net, z, y).unwrap();
    let g = backward(net, &cache);
    let loss_at = |n: &Network| forward_loss(n, z, y).unwrap().0;
    let mut worst: f64 = 0.0;
    let mut probe = |get: &dyn Fn(&mut Network) -> &mut f64, analytic: f64| {
        let mut p = net.clone();
        *get(&mut p) += h;
        let up = loss_at(&p);
        *get(&mut p) -= 2.0 * h;
        let down = loss_at(&p);
        worst = worst.max(rel_err(analytic, (up - down) / (2.0 * h)));
    };
    let d = net.params.width();
    for l in 0..net.params.depth() {
        for r in 0..d {
            for c in 0..d {
                probe(&|n: &mut Network| &mut n.params.weights[l][(r, c)], g.weights[l][(r, c)]);
            }
            probe(&|n: &mut Network| &mut n.params.biases[l][r], g.biases[l][r]);
        }
    }
    let gi = g.w_i.as_ref().unwrap();
    for r in 0..gi.nrows() {
        for c in 0..gi.ncols() {
            probe(&|n: &mut Network| &mut n.adapt.w_i[(r, c)], gi[(r, c)]);
        }
    }
    let go = g.w_o.as_ref().unwrap();
    for r in 0..go.nrows() {
        for c in 0..go.ncols() {
            probe(&|n: &mut Network| &mut n.adapt.w_o[(r, c)], go[(r, c)]);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_on_random_tiny_nets() {
    let mut rng = SeedSpec::new(2024).rng();
    for case in 0..20 {
        let depth = rng.random_range(1..=4);
        let width = rng.random_range(2..=5);
        let phi = if case % 2 == 0 { Activation::Tanh } else { Activation::Swish };
        let psi = if case % 4 < 2 { Activation::Identity } else { Activation::Tanh };
        let m = tiny_model(depth, width, phi, psi, rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        let (zd, yd) = (rng.random_range(2..=3), rng.random_range(2..=3));
        let (z, y) = batch(rng.random_range(1..=4), zd, yd, case);
        for mode in [GradientMode::Reparametrized, GradientMode::Standard] {
            let net = Network::init(&m, mode, zd, yd, SeedSpec::new(case), true).unwrap();
            let err = max_gradient_error(&net, &z, &y);
            assert!(err <= 1e-5, "case {case} {mode:?}: {err}");
        }
    }
}

#[test]
fn learning_rate_zero_full_batch_is_flat() {
    let data = separable_toy(40, SeedSpec::new(3));
    let m = tiny_model(2, 4, Activation::Tanh, Activation::Identity, 1.0, 1.0);
    let cfg = TrainConfig { learning_rate: 0.0, batch_size: 40, epochs: 5, ..TrainConfig::default() };
    let t = sgd_run(&m, &cfg, SeedSpec::new(0), &data, None).unwrap();
    assert_eq!(t.losses.len(), 5);
    // batches hold the same rows in shuffled order, so only summation order differs
    assert!(t.losses.iter().all(|l| (l - t.losses[0]).abs() <= 1e-12 * t.losses[0]));
}

#[test]
fn separable_toy_is_learned() {
    let data = separable_toy(200, SeedSpec::new(5));
    let m = tiny_model(4, 8, Activation::Tanh, Activation::Identity, 1.0, 1.0);
    let cfg = TrainConfig { learning_rate: 0.05, batch_size: 20, epochs: 50, ..TrainConfig::default() };
    let t = sgd_run(&m, &cfg, SeedSpec::new(1), &data, None).unwrap();
    assert!(!t.diverged);
    assert!(t.train_accuracy >= 0.95, "{}", t.train_accuracy);
}

#[test]
fn training_is_deterministic() {
    let data = synthetic_digits(400, SeedSpec::new(6));
    let m = tiny_model(3, 8, Activation::Swish, Activation::Identity, 1.0, 1.0);
    let cfg = TrainConfig { learning_rate: 0.01, batch_size: 50, epochs: 2, ..TrainConfig::default() };
    let a = sgd_run(&m, &cfg, SeedSpec::new(9), &data, Some(&data)).unwrap();
    let b = sgd_run(&m, &cfg, SeedSpec::new(9), &data, Some(&data)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loss_is_invariant_under_hidden_permutation() {
    let m = tiny_model(3, 5, Activation::Tanh, Activation::Tanh, 1.0, 1.0);
    let net = Network::init(&m, GradientMode::Standard, 3, 3, SeedSpec::new(12), true).unwrap();
    let perm = [3, 0, 4, 1, 2];
    let mut p = net.clone();
    for l in 0..3 {
        p.params.weights[l] = DMatrix::from_fn(5, 5, |r, c| net.params.weights[l][(perm[r], perm[c])]);
        p.params.biases[l] = net.params.biases[l].select_rows(&perm);
    }
    p.adapt.w_i = net.adapt.w_i.select_rows(&perm);
    p.adapt.w_o = net.adapt.w_o.select_columns(&perm);
    let (z, y) = batch(4, 3, 3, 8);
    let (a, b) = (forward_loss(&net, &z, &y).unwrap().0, forward_loss(&p, &z, &y).unwrap().0);
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn idx_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img");
    let lab = dir.path().join("lab");
    let mut bytes = Vec::new();
    for h in [0x803u32, 2, 2, 2] {
        bytes.extend_from_slice(&h.to_be_bytes());
    }
    bytes.extend_from_slice(&[0, 255, 128, 64, 9, 9, 9, 9]);
    std::fs::write(&img, &bytes).unwrap();
    let mut lb = Vec::new();
    for h in [0x801u32, 2] {
        lb.extend_from_slice(&h.to_be_bytes());
    }
    lb.extend_from_slice(&[4, 9]);
    std::fs::write(&lab, &lb).unwrap();
    let d = load_idx(&img, &lab).unwrap();
    assert_eq!(d.labels(), vec![4, 9]);
    assert_eq!(d.inputs[(0, 1)], 1.0);

    lb[7] = 1;
    std::fs::write(&lab, &lb).unwrap();
    assert!(matches!(load_idx(&img, &lab), Err(depthflow::Error::Consistency(_))));
    assert!(matches!(load_idx(&lab, &img), Err(depthflow::Error::Format { .. })));
    assert!(matches!(load_idx(dir.path().join("missing"), &lab), Err(depthflow::Error::Io { .. })));
}
