//! Input files of the `theory` subcommand.
//!
//! ```text
//! L = 10
//! beta = 1          # optional, enables the strongly convex bounds
//! sigma_lb = 0.5
//! sigma_ub = 2
//! eta = 0.1
//! eps = 1e-2
//! eps_f = 1e-6
//! eps_g = 1e-4
//! nu = 1e-6
//! b = 1e-6
//! u = 1e-6
//! p_hat = 0.8
//! s = 0
//! z0 = 10
//! noise = general   # or bounded
//! ```
//!
//! `theta`, `gamma`, `alpha_0`, `tau`, `kappa` and `delta` default to the
//! experiment values 0.2, 0.8, 1, 10, 1 and 0.1.

use qsass::theory::{NoiseMode, TheoryInputs};

use crate::kv::KeyValues;
use crate::BenchError;

pub const REQUIRED: [&str; 14] =
    ["L", "sigma_lb", "sigma_ub", "eta", "eps", "eps_f", "eps_g", "nu", "b", "u", "p_hat", "s", "z0", "noise"];

pub fn parse_theory_inputs(text: &str) -> Result<TheoryInputs, BenchError> {
    let mut kv = KeyValues::parse(text)?;
    let noise_mode = match kv.take("noise") {
        None => return Err(BenchError::spec(0, "missing required key 'noise'")),
        Some(e) => match e.value.as_str() {
            "bounded" => NoiseMode::Bounded,
            "general" => NoiseMode::General,
            other => return Err(BenchError::spec(e.line, format!("noise must be bounded or general, got '{other}'"))),
        },
    };
    let inputs = TheoryInputs {
        l: kv.require("L")?,
        beta: kv.take_parsed("beta")?,
        theta: kv.take_parsed("theta")?.unwrap_or(0.2),
        gamma: kv.take_parsed("gamma")?.unwrap_or(0.8),
        alpha_0: kv.take_parsed("alpha_0")?.unwrap_or(1.0),
        sigma_lb: kv.require("sigma_lb")?,
        sigma_ub: kv.require("sigma_ub")?,
        tau: kv.take_parsed("tau")?.unwrap_or(10.0),
        kappa: kv.take_parsed("kappa")?.unwrap_or(1.0),
        eta: kv.require("eta")?,
        eps: kv.require("eps")?,
        eps_f: kv.require("eps_f")?,
        eps_g: kv.require("eps_g")?,
        delta: kv.take_parsed("delta")?.unwrap_or(0.1),
        nu: kv.require("nu")?,
        b: kv.require("b")?,
        u: kv.require("u")?,
        p_hat: kv.require("p_hat")?,
        s: kv.require("s")?,
        z0: kv.require("z0")?,
        noise_mode,
    };
    kv.finish()?;
    Ok(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "L = 10\nsigma_lb = 0.5\nsigma_ub = 2\neta = 0.1\neps = 1e-2\neps_f = 0\neps_g = 0\n\
                        nu = 0\nb = 0\nu = 0\np_hat = 0.8\ns = 0\nz0 = 10\nnoise = bounded\n";

    #[test]
    fn parses_with_defaults() {
        let inp = parse_theory_inputs(FULL).unwrap();
        assert_eq!((inp.theta, inp.gamma, inp.delta), (0.2, 0.8, 0.1));
        assert_eq!(inp.noise_mode, NoiseMode::Bounded);
        assert_eq!(inp.beta, None);
        assert!(inp.issues().is_empty());
    }

    #[test]
    fn missing_and_unknown_keys_are_spec_errors() {
        let missing = FULL.replace("eta = 0.1\n", "");
        assert!(matches!(parse_theory_inputs(&missing), Err(BenchError::Spec { .. })));
        let unknown = format!("{FULL}zeta = 1\n");
        assert!(matches!(parse_theory_inputs(&unknown), Err(BenchError::Spec { .. })));
    }
}
