//! Atom-free innovation laws on `(0, ∞)`.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[derive(Default)]
pub enum InnovationDist {
    /// Unit Fréchet, `F(z) = exp(-1/z)`.
    #[default]
    Frechet,
    LogNormal { mu: f64, sigma: f64 },
    /// Lomax (Pareto shifted to start at zero): `F(z) = 1 - (1 + z)^(-alpha)`.
    Pareto { alpha: f64 },
}


fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid")
}

impl InnovationDist {
    pub fn parse(s: &str) -> Option<Self> {
        let lower = s.to_ascii_lowercase();
        let (name, args) = match lower.split_once(':') {
            Some((n, a)) => (n.to_string(), a.split(',').map(str::trim).collect::<Vec<_>>()),
            None => (lower.clone(), Vec::new()),
        };
        let num = |i: usize, d: f64| args.get(i).map_or(Some(d), |v| v.parse::<f64>().ok());
        match name.as_str() {
            "frechet" => Some(InnovationDist::Frechet),
            "lognormal" => {
                let (mu, sigma) = (num(0, 0.0)?, num(1, 1.0)?);
                (sigma > 0.0 && mu.is_finite()).then_some(InnovationDist::LogNormal { mu, sigma })
            }
            "pareto" | "lomax" => {
                let alpha = num(0, 2.0)?;
                (alpha > 0.0).then_some(InnovationDist::Pareto { alpha })
            }
            _ => None,
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.ln_cdf(z).exp()
    }

    pub fn ln_cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if z.is_infinite() {
            return 0.0;
        }
        match *self {
            InnovationDist::Frechet => -1.0 / z,
            InnovationDist::LogNormal { mu, sigma } => {
                let t = (z.ln() - mu) / sigma;
                let p = std_normal().cdf(t);
                if p > 0.0 {
                    p.ln()
                } else {
                    // Mills ratio tail for very small probabilities
                    let n = std_normal();
                    n.ln_pdf(t) - (-t).ln()
                }
            }
            InnovationDist::Pareto { alpha } => {
                let tail = (1.0 + z).powf(-alpha);
                (-tail).ln_1p()
            }
        }
    }

    pub fn ln_pdf(&self, z: f64) -> f64 {
        if z <= 0.0 || !z.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            InnovationDist::Frechet => -2.0 * z.ln() - 1.0 / z,
            InnovationDist::LogNormal { mu, sigma } => {
                let t = (z.ln() - mu) / sigma;
                std_normal().ln_pdf(t) - z.ln() - sigma.ln()
            }
            InnovationDist::Pareto { alpha } => alpha.ln() - (alpha + 1.0) * (1.0 + z).ln(),
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        self.ln_pdf(z).exp()
    }

    /// Inverse of the distribution function for `p` in `(0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            InnovationDist::Frechet => -1.0 / p.ln(),
            InnovationDist::LogNormal { mu, sigma } => {
                (mu + sigma * std_normal().inverse_cdf(p)).exp()
            }
            InnovationDist::Pareto { alpha } => (1.0 - p).powf(-1.0 / alpha) - 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                let z = self.quantile(u);
                if z > 0.0 && z.is_finite() {
                    return z;
                }
            }
        }
    }

    /// Draw from the law conditioned on `Z < bound`.
    pub fn sample_below<R: Rng + ?Sized>(&self, rng: &mut R, bound: f64) -> f64 {
        if bound.is_infinite() {
            return self.sample(rng);
        }
        loop {
            let u: f64 = rng.random();
            if u <= 0.0 {
                continue;
            }
            let z = match *self {
                InnovationDist::Frechet => 1.0 / (1.0 / bound - u.ln()),
                _ => {
                    let ln_p = u.ln() + self.ln_cdf(bound);
                    self.quantile(ln_p.exp())
                }
            };
            if z > 0.0 && z < bound {
                return z;
            }
        }
    }
}
