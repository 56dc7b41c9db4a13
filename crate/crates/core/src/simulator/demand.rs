use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::model::SideMoments;

/// Continuous samples are floored here so that `c, p > 0` always holds.
pub const SAMPLE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub c: f64,
    pub p: f64,
    pub weight: f64,
}

/// Parameters of a lognormal variable: `exp(mu + sigma Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormal {
    pub fn from_mean_var(mean: f64, var: f64) -> Self {
        let s2 = (1.0 + var / (mean * mean)).ln();
        Self {
            mu: mean.ln() - s2 / 2.0,
            sigma: s2.sqrt(),
        }
    }

    /// `E[X^a]`.
    pub fn raw_moment(&self, a: f64) -> f64 {
        (a * self.mu + 0.5 * a * a * self.sigma * self.sigma).exp()
    }
}

/// Conditional law of `(c, p)` on one side, given an arrival on that side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SideDemand {
    PointMass {
        c: f64,
        p: f64,
    },
    Discrete {
        atoms: Vec<Atom>,
    },
    /// Independent lognormal `c` and `p`.
    Lognormal {
        c: LogNormal,
        p: LogNormal,
    },
    /// Bivariate lognormal: the logs are jointly Gaussian with correlation `rho`.
    Copula {
        c: LogNormal,
        p: LogNormal,
        rho: f64,
    },
}

/// Random inputs consumed by one side per step, drawn regardless of the
/// family so that different markets and policies share random numbers.
#[derive(Debug, Clone, Copy)]
pub struct SideDraw {
    pub u: f64,
    pub z1: f64,
    pub z2: f64,
}

impl SideDemand {
    pub fn point_mass(c: f64, p: f64) -> Self {
        SideDemand::PointMass { c, p }
    }

    /// Two-point law taking `(c1, p1)` with probability `w`.
    pub fn two_point(c1: f64, p1: f64, c2: f64, p2: f64, w: f64) -> Self {
        SideDemand::Discrete {
            atoms: vec![
                Atom {
                    c: c1,
                    p: p1,
                    weight: w,
                },
                Atom {
                    c: c2,
                    p: p2,
                    weight: 1.0 - w,
                },
            ],
        }
    }

    pub fn lognormal(mean_c: f64, var_c: f64, mean_p: f64, var_p: f64) -> Self {
        SideDemand::Lognormal {
            c: LogNormal::from_mean_var(mean_c, var_c),
            p: LogNormal::from_mean_var(mean_p, var_p),
        }
    }

    /// Bivariate lognormal whose log-correlation is set by bisection so that
    /// `E[c p]` hits `target_mu_cp`.
    pub fn correlated_lognormal(
        mean_c: f64,
        var_c: f64,
        mean_p: f64,
        var_p: f64,
        target_mu_cp: f64,
    ) -> Result<Self, SimError> {
        let c = LogNormal::from_mean_var(mean_c, var_c);
        let p = LogNormal::from_mean_var(mean_p, var_p);
        let mu_cp = |rho: f64| copula_moment(&c, &p, rho, 1.0, 1.0);
        let (lo, hi) = (mu_cp(-1.0), mu_cp(1.0));
        if !(target_mu_cp >= lo && target_mu_cp <= hi) {
            return Err(SimError::UnattainableCorrelation {
                target: target_mu_cp,
                lo,
                hi,
            });
        }
        let (mut a, mut b) = (-1.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mu_cp(mid) < target_mu_cp {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < 1e-15 {
                break;
            }
        }
        Ok(SideDemand::Copula {
            c,
            p,
            rho: 0.5 * (a + b),
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidDemand(m.to_string()));
        match self {
            SideDemand::PointMass { c, p } => {
                if !(*c >= 0.0 && p.is_finite()) {
                    return bad("point mass needs c >= 0 and finite p");
                }
            }
            SideDemand::Discrete { atoms } => {
                if atoms.is_empty() {
                    return bad("discrete law without atoms");
                }
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                if atoms
                    .iter()
                    .any(|a| !(a.weight >= 0.0) || !(a.c > 0.0) || !(a.p > 0.0))
                {
                    return bad("atoms need positive c, p and nonnegative weight");
                }
                if (total - 1.0).abs() > 1e-12 {
                    return bad("atom weights must sum to one");
                }
            }
            SideDemand::Lognormal { c, p } | SideDemand::Copula { c, p, .. } => {
                if !(c.sigma >= 0.0 && p.sigma >= 0.0 && c.mu.is_finite() && p.mu.is_finite()) {
                    return bad("lognormal parameters must be finite with sigma >= 0");
                }
                if let SideDemand::Copula { rho, .. } = self {
                    if !(rho.abs() <= 1.0) {
                        return bad("copula correlation outside [-1, 1]");
                    }
                }
            }
        }
        Ok(())
    }

    /// Analytic conditional moments of the law.
    pub fn moments(&self) -> SideMoments {
        let m = |a: f64, b: f64| self.mixed_moment(a, b);
        SideMoments {
            mu_c: m(1.0, 0.0),
            mu_c2: m(2.0, 0.0),
            mu_cp: m(1.0, 1.0),
            mu_c2p: m(2.0, 1.0),
            mu_c2p2: m(2.0, 2.0),
            mu_p: Some(m(0.0, 1.0)),
            mu_p2: Some(m(0.0, 2.0)),
        }
    }

    /// `E[c^a p^b]`.
    pub fn mixed_moment(&self, a: f64, b: f64) -> f64 {
        match self {
            SideDemand::PointMass { c, p } => c.powf(a) * p.powf(b),
            SideDemand::Discrete { atoms } => atoms
                .iter()
                .map(|t| t.weight * t.c.powf(a) * t.p.powf(b))
                .sum(),
            SideDemand::Lognormal { c, p } => c.raw_moment(a) * p.raw_moment(b),
            SideDemand::Copula { c, p, rho } => copula_moment(c, p, *rho, a, b),
        }
    }

    /// Maps one side's draws to `(c, p)`.
    pub fn sample(&self, d: &SideDraw) -> (f64, f64) {
        match self {
            SideDemand::PointMass { c, p } => (*c, *p),
            SideDemand::Discrete { atoms } => {
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.weight;
                    if d.u < acc {
                        return (a.c, a.p);
                    }
                }
                let last = atoms[atoms.len() - 1];
                (last.c, last.p)
            }
            SideDemand::Lognormal { c, p } => (
                (c.mu + c.sigma * d.z1).exp().max(SAMPLE_FLOOR),
                (p.mu + p.sigma * d.z2).exp().max(SAMPLE_FLOOR),
            ),
            SideDemand::Copula { c, p, rho } => {
                let zp = rho * d.z1 + (1.0 - rho * rho).max(0.0).sqrt() * d.z2;
                (
                    (c.mu + c.sigma * d.z1).exp().max(SAMPLE_FLOOR),
                    (p.mu + p.sigma * zp).exp().max(SAMPLE_FLOOR),
                )
            }
        }
    }

    /// Finite support, if any.
    pub fn atoms(&self) -> Option<Vec<Atom>> {
        match self {
            SideDemand::PointMass { c, p } => Some(vec![Atom {
                c: *c,
                p: *p,
                weight: 1.0,
            }]),
            SideDemand::Discrete { atoms } => Some(atoms.clone()),
            _ => None,
        }
    }
}

fn copula_moment(c: &LogNormal, p: &LogNormal, rho: f64, a: f64, b: f64) -> f64 {
    let var = a * a * c.sigma * c.sigma
        + b * b * p.sigma * p.sigma
        + 2.0 * a * b * rho * c.sigma * p.sigma;
    (a * c.mu + b * p.mu + 0.5 * var).exp()
}

/// Relative mismatch check between implied and target moments.
pub fn check_moments(
    side: &'static str,
    implied: &SideMoments,
    target: &SideMoments,
    rel_tol: f64,
) -> Result<(), SimError> {
    let pairs = [
        ("mu_c", implied.mu_c, target.mu_c),
        ("mu_c2", implied.mu_c2, target.mu_c2),
        ("mu_cp", implied.mu_cp, target.mu_cp),
        ("mu_c2p", implied.mu_c2p, target.mu_c2p),
        ("mu_c2p2", implied.mu_c2p2, target.mu_c2p2),
    ];
    for (field, a, t) in pairs {
        if (a - t).abs() > rel_tol * t.abs().max(1e-300) {
            return Err(SimError::MomentMismatch {
                side,
                field,
                target: t,
                implied: a,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lognormal_moments_match_inputs() {
        let d = SideDemand::lognormal(100.0, 2e4, 5.0, 4.0);
        let m = d.moments();
        assert!((m.mu_c - 100.0).abs() < 1e-9);
        assert!((m.mu_c2 - 3e4).abs() < 1e-6);
        assert!((m.mu_cp - 500.0).abs() < 1e-9);
        assert!((m.mu_p.unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn copula_hits_target_cross_moment() {
        let d = SideDemand::correlated_lognormal(100.0, 2e4, 5.0, 4.0, 560.0).unwrap();
        let m = d.moments();
        assert!((m.mu_cp - 560.0).abs() < 1e-9);
        assert!((m.mu_c - 100.0).abs() < 1e-9);
        match d {
            SideDemand::Copula { rho, .. } => assert!(rho > 0.0),
            _ => unreachable!(),
        }
        assert!(SideDemand::correlated_lognormal(100.0, 2e4, 5.0, 4.0, 5000.0).is_err());
    }

    #[test]
    fn discrete_sampling_follows_weights() {
        let d = SideDemand::two_point(1.0, 2.0, 3.0, 4.0, 0.25);
        let draw = |u| SideDraw {
            u,
            z1: 0.0,
            z2: 0.0,
        };
        assert_eq!(d.sample(&draw(0.1)), (1.0, 2.0));
        assert_eq!(d.sample(&draw(0.3)), (3.0, 4.0));
        let m = d.moments();
        assert!((m.mu_cp - (0.25 * 2.0 + 0.75 * 12.0)).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(SideDemand::two_point(1.0, 2.0, 3.0, 4.0, 0.25)
            .validate()
            .is_ok());
        assert!(SideDemand::Discrete { atoms: vec![] }.validate().is_err());
        assert!(SideDemand::two_point(1.0, 2.0, -3.0, 4.0, 0.25)
            .validate()
            .is_err());
        assert!(SideDemand::point_mass(0.0, 5.0).validate().is_ok());
    }
}
