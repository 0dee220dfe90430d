//! Failure and repair sampling.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::instance::{FailureProfile, RepairDistribution};

fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Option<f64> {
    if rate <= 0.0 {
        return None;
    }
    let d = Exp::new(rate).ok()?;
    // Exp can return 0.0 for an extreme draw; offsets must be strictly positive.
    Some(d.sample(rng).max(f64::MIN_POSITIVE))
}

/// Time until the next breakdown of a machine that has survived `age` time
/// units since its last renewal, or `None` when the profile never fails.
pub fn sample_failure<R: Rng + ?Sized>(profile: &FailureProfile, age: f64, load: f64, rng: &mut R) -> Option<f64> {
    match *profile {
        FailureProfile::WeibullAging { shape, scale, .. } => {
            // Inverse of the conditional survival function S(a + x) / S(a).
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let h0 = (age / scale).powf(shape);
            let total = scale * (h0 - u.ln()).powf(1.0 / shape);
            Some((total - age).max(f64::MIN_POSITIVE))
        }
        FailureProfile::ExponentialNominal { rate, .. } => exponential(rate, rng),
        FailureProfile::LoadDependent { base_rate, load_coefficient, .. } => {
            exponential(base_rate * (1.0 + load_coefficient * load.clamp(0.0, 1.0)), rng)
        }
    }
}

pub fn sample_repair<R: Rng + ?Sized>(dist: &RepairDistribution, rng: &mut R) -> f64 {
    match *dist {
        RepairDistribution::Constant { value } => value,
        RepairDistribution::Exponential { mean } => exponential(1.0 / mean, rng).unwrap_or(mean),
        RepairDistribution::Uniform { low, high } => {
            if high > low {
                rng.random_range(low..high)
            } else {
                low
            }
        }
    }
}
