use qsass::problems::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRESETS: [&str; 3] = ["toy-1q", "h2-like", "lih-like"];

#[test]
fn every_builtin_passes_self_test() {
    for name in
        ["quadratic", "quadratic:100", "ill-conditioned-quadratic", "rosenbrock-chain", "cosine-chain", "trig-sum"]
    {
        for n in [2, 5, 10] {
            builtin_problem(name, n).unwrap().self_test().unwrap();
        }
    }
    for preset in PRESETS {
        builtin_problem(&format!("vqe:{preset}"), 0).unwrap().self_test().unwrap();
    }
}

#[test]
fn energies_stay_inside_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for preset in PRESETS {
        let v = vqe_problem(preset).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..v.num_parameters()).map(|_| rng.random_range(-10.0..10.0)).collect();
            let e = v.energy(&x);
            assert!(e >= v.ground_energy() - 1e-12 && e <= v.max_energy() + 1e-12);
            let probs = v.outcome_probabilities(&x);
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn measurement_mean_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let shots = 1_000_000u64;
    for preset in PRESETS {
        let v = vqe_problem(preset).unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = (0..v.num_parameters()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mean = vqe_measure(&v, &x, shots, &mut rng);
            let se = (v.shot_variance(&x) / shots as f64).sqrt();
            assert!((mean - v.energy(&x)).abs() <= 5.0 * se + 1e-15, "{preset}");
        }
    }
}

#[test]
fn ansatz_reaches_ground_state() {
    // every preset can attain its ground energy, so the optimality gap is meaningful
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for preset in ["toy-1q", "h2-like"] {
        let v = vqe_problem(preset).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..20 {
            let mut x: Vec<f64> = (0..v.num_parameters()).map(|_| rng.random_range(-3.0..3.0)).collect();
            for _ in 0..5000 {
                let g = v.gradient(&x);
                for (xi, gi) in x.iter_mut().zip(&g) {
                    *xi -= 0.5 * gi;
                }
            }
            best = best.min(v.energy(&x));
        }
        assert!(best - v.ground_energy() < 1e-8, "{preset}: {best}");
    }
}
