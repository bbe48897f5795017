use depthflow::resnet::eoc_solve;
use depthflow::Activation;

// Frozen before the solver existed, from an independent adaptive quadrature.
const TANH_EOC_SB2_005: f64 = 1.760_954_639_606_739_5;

/// Dense trapezoid over [-12, 12] for `E[f(sqrt(q) Z)]`.
fn dense_expectation(q: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = 4_000;
    let h = 24.0 / n as f64;
    let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    (0..=n)
        .map(|i| {
            let z = -12.0 + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * h * c * (-0.5 * z * z).exp() * f(q.sqrt() * z)
        })
        .sum()
}

fn dense_eoc(sb2: f64) -> f64 {
    let fixed_point = |sw2: f64| {
        let (mut lo, mut hi) = (1e-9, 50.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if sb2 + sw2 * dense_expectation(mid, |u| u.tanh().powi(2)) > mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let chi = |sw2: f64| sw2 * dense_expectation(fixed_point(sw2), |u| 1.0 / u.cosh().powi(4));
    let (mut lo, mut hi) = (1.0, 4.0);
    for _ in 0..45 {
        let mid = 0.5 * (lo + hi);
        if chi(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn tanh_edge_of_chaos_matches_frozen_value() {
    let got = eoc_solve(Activation::Tanh, 0.05).unwrap();
    assert!((got - TANH_EOC_SB2_005).abs() < 1e-6, "{got}");
}

#[test]
fn tanh_edge_of_chaos_matches_dense_grid() {
    let dense = dense_eoc(0.05);
    assert!((dense - TANH_EOC_SB2_005).abs() < 1e-6, "dense oracle {dense}");
    assert!((eoc_solve(Activation::Tanh, 0.05).unwrap() - dense).abs() < 1e-6);
}

#[test]
fn closed_form_cases() {
    assert_eq!(eoc_solve(Activation::Relu, 0.0).unwrap(), 2.0);
    assert!((eoc_solve(Activation::Tanh, 0.0).unwrap() - 1.0).abs() < 1e-9);
}
