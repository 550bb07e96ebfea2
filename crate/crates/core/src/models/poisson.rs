use rand::{Rng, RngCore};
use statrs::function::gamma::ln_gamma;

/// `log(y!)` through the log-gamma function.
pub fn ln_factorial(y: u64) -> f64 {
    if y < 2 {
        0.0
    } else {
        ln_gamma(y as f64 + 1.0)
    }
}

/// Poisson draw: CDF inversion for `lambda < 30`, Hörmann's transformed
/// rejection (PTRS) above.
pub fn sample_poisson(lambda: f64, rng: &mut dyn RngCore) -> u64 {
    assert!(
        lambda.is_finite() && lambda >= 0.0,
        "Poisson rate must be finite and nonnegative, got {lambda}"
    );
    if lambda == 0.0 {
        0
    } else if lambda < 30.0 {
        inversion(lambda, rng)
    } else {
        ptrs(lambda, rng)
    }
}

fn inversion(lambda: f64, rng: &mut dyn RngCore) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= lambda / k as f64;
        if p == 0.0 {
            break;
        }
        cdf += p;
    }
    k
}

fn ptrs(lambda: f64, rng: &mut dyn RngCore) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln()
            <= -lambda + k * loglam - ln_gamma(k + 1.0)
        {
            return k as u64;
        }
    }
}
