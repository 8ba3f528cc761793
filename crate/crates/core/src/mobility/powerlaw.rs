//! Truncated power-law (Pareto) sampling and exponent fitting.
//!
//! The exponent `a` is the tail index: the density is proportional to
//! `x^-(1+a)` on `[lo, hi]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedPareto {
    pub exponent: f64,
    pub min: f64,
    pub max: f64,
}

impl TruncatedPareto {
    pub fn new(exponent: f64, min: f64, max: f64) -> Result<Self> {
        let d = TruncatedPareto { exponent, min, max };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent <= 2.0) {
            return Err(Error::Mobility(format!(
                "power-law exponent must lie in (0, 2], got {}",
                self.exponent
            )));
        }
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) {
            return Err(Error::Mobility(format!(
                "truncation bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.max <= self.min {
            return self.min;
        }
        let a = self.exponent;
        let lo = self.min.powf(-a);
        let hi = self.max.powf(-a);
        let u: f64 = rng.random();
        (lo - u * (lo - hi)).powf(-1.0 / a).clamp(self.min, self.max)
    }
}

/// Maximum-likelihood tail index of a sample from a power law truncated to
/// `[lo, hi]`. Returns `None` for fewer than two usable points.
pub fn fit_truncated_exponent(samples: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let xs: Vec<f64> = samples
        .iter()
        .copied()
        .filter(|x| *x >= lo && *x <= hi)
        .collect();
    if xs.len() < 2 || hi <= lo {
        return None;
    }
    let n = xs.len() as f64;
    let mean_log = xs.iter().map(|x| x.ln()).sum::<f64>() / n;
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    // Score per sample; the log-likelihood is concave in a so the root is
    // unique.
    let score = |a: f64| {
        let pl = (-a * ln_lo).exp();
        let ph = (-a * ln_hi).exp();
        1.0 / a - mean_log + (ln_lo * pl - ln_hi * ph) / (pl - ph)
    };
    let (mut a, mut b) = (1e-4, 20.0);
    if score(a) < 0.0 {
        return Some(a);
    }
    if score(b) > 0.0 {
        return Some(b);
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if score(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn samples_respect_bounds() {
        let d = TruncatedPareto::new(1.2, 2.0, 50.0).unwrap();
        let mut rng = stream(1, Stream::Mobility);
        for _ in 0..10_000 {
            let x = d.sample(&mut rng);
            assert!((2.0..=50.0).contains(&x));
        }
    }

    #[test]
    fn fit_recovers_exponent() {
        for &a in &[0.8, 1.2, 1.6, 2.0] {
            let d = TruncatedPareto::new(a, 1.0, 1000.0).unwrap();
            let mut rng = stream(42, Stream::Mobility);
            let xs: Vec<f64> = (0..20_000).map(|_| d.sample(&mut rng)).collect();
            let fit = fit_truncated_exponent(&xs, 1.0, 1000.0).unwrap();
            assert!((fit - a).abs() < 0.05, "a={a} fit={fit}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TruncatedPareto::new(0.0, 1.0, 2.0).is_err());
        assert!(TruncatedPareto::new(2.5, 1.0, 2.0).is_err());
        assert!(TruncatedPareto::new(1.0, 3.0, 2.0).is_err());
    }
}
