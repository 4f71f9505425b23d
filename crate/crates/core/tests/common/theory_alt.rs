use qsass::theory::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()) || a == b
}

pub fn random_inputs(rng: &mut ChaCha8Rng) -> TheoryInputs {
    let sigma_lb = 10f64.powf(rng.random_range(-2.0..0.0));
    let sigma_ub = sigma_lb * 10f64.powf(rng.random_range(0.0..2.0));
    let theta = rng.random_range(0.05..0.95);
    let mut inp = TheoryInputs {
        l: 10f64.powf(rng.random_range(-1.0..2.0)),
        beta: Some(10f64.powf(rng.random_range(-3.0..-1.0))),
        theta,
        gamma: rng.random_range(0.1..0.95),
        alpha_0: 10f64.powf(rng.random_range(-2.0..1.0)),
        sigma_lb,
        sigma_ub,
        tau: rng.random_range(0.0..10.0),
        kappa: rng.random_range(0.1..10.0),
        eta: 0.0,
        eps: 10f64.powf(rng.random_range(-3.0..0.0)),
        eps_f: if rng.random_bool(0.2) { 0.0 } else { 10f64.powf(rng.random_range(-18.0..-10.0)) },
        eps_g: rng.random_range(0.0..1e-3),
        delta: rng.random_range(0.0..0.3),
        nu: rng.random_range(0.0..1.0),
        b: rng.random_range(0.0..1.0),
        u: rng.random_range(0.0..1.0),
        p_hat: 0.0,
        s: if rng.random_bool(0.2) { 0.0 } else { 10f64.powf(rng.random_range(-18.0..-10.0)) },
        z0: rng.random_range(0.0..10.0),
        noise_mode: if rng.random_bool(0.5) { NoiseMode::Bounded } else { NoiseMode::General },
    };
    // keep the second step-size branch positive
    let k = (1.0 - theta) * sigma_lb / sigma_ub;
    inp.eta = inp.eta_limit().min(k / (1.0 + k)) * rng.random_range(0.01..0.9);
    inp
}

// Rearranged closed forms, written independently of the library.

pub fn alpha_bar_alt(i: &TheoryInputs) -> (f64, f64) {
    let first = (1.0 - i.theta) * (i.sigma_lb / i.sigma_ub) * 2.0 / (i.l * i.sigma_ub + 2.0 * i.kappa);
    let second = 2.0 / (i.l * i.sigma_ub) * ((1.0 - i.theta) * (i.sigma_lb / i.sigma_ub) - i.eta / (1.0 - i.eta));
    (first, second)
}

pub fn p_alt(i: &TheoryInputs) -> f64 {
    match i.noise_mode {
        NoiseMode::Bounded => 1.0 - i.delta,
        NoiseMode::General => {
            let a = i.u * i.u / (2.0 * i.nu * i.nu);
            let b = i.u / (2.0 * i.b);
            1.0 - (i.delta + (-(if a < b { a } else { b })).exp())
        }
    }
}

pub fn m1_alt(i: &TheoryInputs) -> f64 {
    let shrink = (1.0 - i.eta).powi(2).min((1.0 + i.tau).powi(-2));
    i.theta * shrink * i.sigma_lb
}

pub fn warmup_alt(alpha_0: f64, alpha_bar: f64, gamma: f64) -> f64 {
    let v = (alpha_bar / alpha_0).ln() / (2.0 * gamma.ln());
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn failure_alt(p: f64, p_hat: f64, t: f64, s: f64, nu_r: f64, b_r: f64) -> f64 {
    let ratio = 1.0 - p_hat / p;
    let second = if s == 0.0 { 1.0 } else { (-(t * s * (s / (2.0 * nu_r * nu_r)).min(1.0 / (2.0 * b_r)))).exp() };
    (-0.5 * t * ratio * ratio).exp() + second
}
