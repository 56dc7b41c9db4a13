//! Exhaustive dynamic program over a finite outcome tree and a finite
//! control grid. Independent of the closed-form recursions.
//!
//! Value is linear in cash, so each node carries only inventory. Search at
//! each node is a full scan of the coarse grid followed by a full scan of the
//! fine grid within one coarse cell of the coarse optimum. At the last action
//! time the expected terminal value is affine in inventory for a fixed
//! control, which lets those nodes be answered from precomputed lines.
//! Cost grows like `(grid size * outcomes)^(steps - 1)`; two steps take about
//! a second.

use crate::error::SimError;
use crate::model::frechet_bounds;

use super::demand::Atom;
use super::SimMarket;

const MAX_STEPS: usize = 3;
const MAX_ATOMS: usize = 4;

/// A market with finitely supported demand and a deterministic price path.
#[derive(Debug, Clone)]
pub struct DiscreteMarket {
    pub pi_plus: Vec<f64>,
    pub pi_minus: Vec<f64>,
    pub pi_joint: Vec<f64>,
    pub plus: Vec<Atom>,
    pub minus: Vec<Atom>,
    pub lambda: f64,
    pub s0: f64,
    /// Price increment over each interval.
    pub drift: Vec<f64>,
}

impl DiscreteMarket {
    pub fn from_sim(m: &SimMarket) -> Result<Self, SimError> {
        let continuous = || SimError::BruteForce("demand has continuous support".into());
        if m.price.innovation_std != 0.0 {
            return Err(SimError::BruteForce(
                "price innovations have continuous support".into(),
            ));
        }
        let n = m.n_steps();
        Ok(Self {
            pi_plus: m.params.arrivals.pi_plus.clone(),
            pi_minus: m.params.arrivals.pi_minus.clone(),
            pi_joint: m.params.arrivals.pi_joint.clone(),
            plus: m.plus.atoms().ok_or_else(continuous)?,
            minus: m.minus.atoms().ok_or_else(continuous)?,
            lambda: m.params.lambda,
            s0: m.price.s0,
            drift: m.price.drift.path(n),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.pi_plus.len()
    }

    fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::BruteForce(m));
        let n = self.n_steps();
        if n == 0 || n > MAX_STEPS {
            return err(format!("needs 1..={MAX_STEPS} steps, got {n}"));
        }
        if self.pi_minus.len() != n || self.pi_joint.len() != n || self.drift.len() != n {
            return err("per-step arrays differ in length".into());
        }
        for atoms in [&self.plus, &self.minus] {
            if atoms.is_empty() || atoms.len() > MAX_ATOMS {
                return err(format!("needs 1..={MAX_ATOMS} atoms per side"));
            }
            let total: f64 = atoms.iter().map(|a| a.weight).sum();
            if (total - 1.0).abs() > 1e-12 || atoms.iter().any(|a| a.weight < 0.0) {
                return err("atom weights must be nonnegative and sum to one".into());
            }
        }
        for k in 0..n {
            let (pp, pm, pj) = (self.pi_plus[k], self.pi_minus[k], self.pi_joint[k]);
            let (lo, hi) = frechet_bounds(pp, pm);
            if !(0.0..=1.0).contains(&pp) || !(0.0..=1.0).contains(&pm) || pj < lo || pj > hi {
                return err(format!("arrival probabilities invalid at step {k}"));
            }
        }
        if !(self.lambda >= 0.0) {
            return err("lambda must be nonnegative".into());
        }
        Ok(())
    }

    fn outcomes(&self, k: usize) -> Vec<Outcome> {
        let (pp, pm, pj) = (self.pi_plus[k], self.pi_minus[k], self.pi_joint[k]);
        let none = Atom {
            c: 0.0,
            p: 0.0,
            weight: 1.0,
        };
        let mut out = Vec::new();
        let mut push = |prob: f64, a: &Atom, b: &Atom| {
            if prob > 0.0 {
                out.push(Outcome {
                    prob,
                    c_plus: a.c,
                    p_plus: a.p,
                    c_minus: b.c,
                    p_minus: b.p,
                });
            }
        };
        for a in &self.plus {
            for b in &self.minus {
                push(pj * a.weight * b.weight, a, b);
            }
        }
        for a in &self.plus {
            push((pp - pj) * a.weight, a, &none);
        }
        for b in &self.minus {
            push((pm - pj) * b.weight, &none, b);
        }
        push(1.0 - pp - pm + pj, &none, &none);
        out
    }

    fn price(&self, k: usize) -> f64 {
        self.s0 + self.drift[..k].iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    prob: f64,
    c_plus: f64,
    p_plus: f64,
    c_minus: f64,
    p_minus: f64,
}

impl Outcome {
    /// `(cash, inventory change)` at price `s` for spreads `(lp, lm)`.
    fn apply(&self, s: f64, lp: f64, lm: f64) -> (f64, f64) {
        let qp = self.c_plus * (self.p_plus - lp);
        let qm = self.c_minus * (self.p_minus - lm);
        ((s + lp) * qp - (s - lm) * qm, qm - qp)
    }
}

/// Spreads searched on `lo, lo + fine, ..., hi` on each side, scanning every
/// `coarse` first.
#[derive(Debug, Clone, Copy)]
pub struct ControlGrid {
    pub lo: f64,
    pub hi: f64,
    pub coarse: f64,
    pub fine: f64,
}

impl ControlGrid {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            coarse: 0.1,
            fine: 0.01,
        }
    }

    fn n_fine(&self) -> usize {
        ((self.hi - self.lo) / self.fine).round() as usize
    }

    fn ratio(&self) -> usize {
        ((self.coarse / self.fine).round() as usize).max(1)
    }

    fn value(&self, idx: usize) -> f64 {
        self.lo + idx as f64 * self.fine
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForceResult {
    /// Optimal expected objective from `W = 0, I = 0` at the first step.
    pub value: f64,
    /// Maximising `(L+, L-)` at the first step.
    pub controls: (f64, f64),
}

struct Solver<'a> {
    m: &'a DiscreteMarket,
    grid: ControlGrid,
    outcomes: Vec<Vec<Outcome>>,
    /// Lines `a + b I` for every fine control pair at the last step.
    line_a: Vec<f64>,
    line_b: Vec<f64>,
    width: usize,
}

impl Solver<'_> {
    fn search<F: FnMut(usize, usize) -> f64>(&self, mut eval: F) -> (f64, usize, usize) {
        let n = self.grid.n_fine();
        let r = self.grid.ratio();
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for ip in (0..=n).step_by(r) {
            for im in (0..=n).step_by(r) {
                let v = eval(ip, im);
                if v > best.0 {
                    best = (v, ip, im);
                }
            }
        }
        let (_, cp, cm) = best;
        for ip in cp.saturating_sub(r)..=(cp + r).min(n) {
            for im in cm.saturating_sub(r)..=(cm + r).min(n) {
                let v = eval(ip, im);
                if v > best.0 {
                    best = (v, ip, im);
                }
            }
        }
        best
    }

    /// Value (excluding cash) at step `k` with inventory `i`.
    fn node(&self, k: usize, i: f64) -> (f64, usize, usize) {
        let last = self.m.n_steps() - 1;
        if k == last {
            let s_t = self.m.price(k + 1);
            let (v, ip, im) = self.search(|ip, im| {
                let j = ip * self.width + im;
                self.line_a[j] + self.line_b[j] * i
            });
            return (v + s_t * i - self.m.lambda * i * i, ip, im);
        }
        let s = self.m.price(k);
        let outs = &self.outcomes[k];
        self.search(|ip, im| {
            let (lp, lm) = (self.grid.value(ip), self.grid.value(im));
            outs.iter()
                .map(|o| {
                    let (cash, d) = o.apply(s, lp, lm);
                    o.prob * (cash + self.node(k + 1, i + d).0)
                })
                .sum()
        })
    }
}

/// Exhaustive optimum of the expected terminal objective over the grid.
pub fn brute_force_value_small(
    market: &DiscreteMarket,
    grid: &ControlGrid,
) -> Result<BruteForceResult, SimError> {
    market.validate()?;
    if !(grid.fine > 0.0 && grid.coarse >= grid.fine && grid.hi > grid.lo) {
        return Err(SimError::BruteForce("degenerate control grid".into()));
    }
    let n = market.n_steps();
    let last = n - 1;
    let outcomes: Vec<Vec<Outcome>> = (0..n).map(|k| market.outcomes(k)).collect();
    let width = grid.n_fine() + 1;
    let s = market.price(last);
    let s_t = market.price(n);
    let lambda = market.lambda;
    let mut line_a = vec![0.0; width * width];
    let mut line_b = vec![0.0; width * width];
    for ip in 0..width {
        for im in 0..width {
            let (lp, lm) = (grid.value(ip), grid.value(im));
            let (mut a, mut b) = (0.0, 0.0);
            for o in &outcomes[last] {
                let (cash, d) = o.apply(s, lp, lm);
                a += o.prob * (cash + s_t * d - lambda * d * d);
                b += o.prob * d;
            }
            line_a[ip * width + im] = a;
            line_b[ip * width + im] = -2.0 * lambda * b;
        }
    }
    let solver = Solver {
        m: market,
        grid: *grid,
        outcomes,
        line_a,
        line_b,
        width,
    };
    let (value, ip, im) = solver.node(0, 0.0);
    Ok(BruteForceResult {
        value,
        controls: (grid.value(ip), grid.value(im)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_market() -> DiscreteMarket {
        let atom = vec![Atom {
            c: 1.0,
            p: 4.0,
            weight: 1.0,
        }];
        DiscreteMarket {
            pi_plus: vec![1.0],
            pi_minus: vec![1.0],
            pi_joint: vec![1.0],
            plus: atom.clone(),
            minus: atom,
            lambda: 0.0,
            s0: 100.0,
            drift: vec![0.0],
        }
    }

    #[test]
    fn unit_one_step() {
        let r = brute_force_value_small(&unit_market(), &ControlGrid::new(0.0, 5.0)).unwrap();
        assert!((r.value - 8.0).abs() < 1e-9);
        assert!((r.controls.0 - 2.0).abs() < 0.011 && (r.controls.1 - 2.0).abs() < 0.011);
    }

    #[test]
    fn one_sided_matches_monopoly_optimum() {
        let mut m = unit_market();
        m.pi_minus = vec![0.0];
        m.pi_joint = vec![0.0];
        m.pi_plus = vec![0.3];
        m.plus = vec![
            Atom {
                c: 2.0,
                p: 3.0,
                weight: 0.5,
            },
            Atom {
                c: 4.0,
                p: 6.0,
                weight: 0.5,
            },
        ];
        let r = brute_force_value_small(&m, &ControlGrid::new(0.0, 8.0)).unwrap();
        // pi mu_cp^2 / (4 mu_c) with mu_cp = 15, mu_c = 3
        let exact = 0.3 * 225.0 / 12.0;
        assert!(r.value <= exact + 1e-9);
        assert!(exact - r.value < 0.3 * 3.0 * 0.005 * 0.005 + 1e-9);
    }

    #[test]
    fn rejects_oversized_or_continuous() {
        let mut m = unit_market();
        m.pi_plus = vec![1.0; 4];
        assert!(brute_force_value_small(&m, &ControlGrid::new(0.0, 5.0)).is_err());
        let p = crate::model::symmetric_params(1.0, 4.0, 1.0, 1.0, 0.0, 1).unwrap();
        let sim = SimMarket::unchecked(
            p,
            super::super::SideDemand::lognormal(1.0, 1.0, 4.0, 1.0),
            super::super::SideDemand::point_mass(1.0, 4.0),
            super::super::PriceModel::martingale(100.0, 0.0),
        );
        assert!(DiscreteMarket::from_sim(&sim).is_err());
    }
}
