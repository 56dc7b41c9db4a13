//! Synthetic trading days as order-book event streams.
//!
//! At every action time the generator cancels its ladder and re-posts
//! `ladder_levels` levels per side around a half-tick midprice, each level
//! holding `round(c)` shares for that interval's demand slope `c`. A market
//! order arriving on a side has volume `round(c) * (p - 1/2)` ticks and sweeps
//! the ladder level by level. A quote resting `l` ticks from the mid (on a
//! ladder price) therefore faces demand exactly `c (p - l)`, clipped at zero.
//!
//! Units: prices are ticks and the currency unit is one tick.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::lob::{BookEvent, EventKind, Side};
use crate::model::{ArrivalSchedule, DemandMoments, MarketParams, TimeGrid};

use super::demand::SideDemand;
use super::{arrivals_from_uniform, path_rng, side_draw};

/// Refresh events are stamped this long before each action time.
pub const REFRESH_LEAD_NS: i64 = 1_000;

/// 09:30 as nanoseconds after midnight.
pub const SESSION_OPEN_NS: i64 = 34_200_000_000_000;

/// Three-state trend regime driving one-tick midprice moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeWalk {
    /// Per-step probability of redrawing the regime uniformly.
    pub switch_prob: f64,
    /// In a trend regime: probability of a one-tick move with the trend...
    pub with_trend: f64,
    /// ...and against it.
    pub against_trend: f64,
    /// In the flat regime: probability of a one-tick move (either direction).
    pub flat_move: f64,
    /// When set, a redrawn trend points back toward the opening price with
    /// probability growing linearly in the displacement, reaching one at this
    /// many ticks.
    pub reversion_band: Option<f64>,
}

impl RegimeWalk {
    pub fn still() -> Self {
        Self {
            switch_prob: 0.0,
            with_trend: 0.0,
            against_trend: 0.0,
            flat_move: 0.0,
            reversion_band: None,
        }
    }

    /// Regime after a switch: flat with probability 1/3, otherwise a trend.
    fn redraw(&self, u: f64, displacement: f64) -> i8 {
        if u < 1.0 / 3.0 {
            return 0;
        }
        let v = (u - 1.0 / 3.0) * 1.5;
        let p_up = match self.reversion_band {
            Some(b) => (0.5 - 0.5 * displacement / b).clamp(0.0, 1.0),
            None => 0.5,
        };
        if v < p_up {
            1
        } else {
            -1
        }
    }

    fn step(&self, regime: i8, u: f64) -> i64 {
        match regime {
            0 => {
                if u < self.flat_move / 2.0 {
                    1
                } else if u < self.flat_move {
                    -1
                } else {
                    0
                }
            }
            r => {
                let dir = r as i64;
                if u < self.with_trend {
                    dir
                } else if u < self.with_trend + self.against_trend {
                    -dir
                } else {
                    0
                }
            }
        }
    }
}

impl Default for RegimeWalk {
    fn default() -> Self {
        Self {
            switch_prob: 1.0 / 150.0,
            with_trend: 0.15,
            against_trend: 0.0,
            flat_move: 0.02,
            reversion_band: Some(15.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticDay {
    pub grid: TimeGrid,
    pub arrivals: ArrivalSchedule,
    pub plus: SideDemand,
    pub minus: SideDemand,
    pub ladder_levels: usize,
    /// Best bid at the open, in ticks.
    pub start_bid: u32,
    pub walk: RegimeWalk,
}

/// Ground truth drawn for one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalTruth {
    pub ind_plus: bool,
    pub ind_minus: bool,
    /// Posted level size and effective reservation depth on each side.
    pub c_plus: f64,
    pub p_plus: f64,
    pub c_minus: f64,
    pub p_minus: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticOutput {
    pub events: Vec<BookEvent>,
    /// Midprice in ticks at `t_0 .. t_{N+1}`.
    pub mids: Vec<f64>,
    pub truth: Vec<IntervalTruth>,
}

impl SyntheticDay {
    /// Quadratic U-shaped intraday arrivals with `pi_joint = joint_share * pi`.
    pub fn u_shaped(n_steps: usize, plus: SideDemand, minus: SideDemand, joint_share: f64) -> Self {
        let grid = TimeGrid {
            session_start_ns: SESSION_OPEN_NS,
            ..TimeGrid::new(n_steps, 1.0)
        };
        let pi: Vec<f64> = (0..n_steps).map(|k| u_shape(k as f64)).collect();
        Self {
            arrivals: ArrivalSchedule {
                pi_joint: pi.iter().map(|p| joint_share * p).collect(),
                pi_minus: pi.clone(),
                pi_plus: pi,
            },
            grid,
            plus,
            minus,
            ladder_levels: 12,
            start_bid: 100_000,
            walk: RegimeWalk::default(),
        }
    }

    /// The default synthetic world: lognormal demand with mean size 100
    /// (sd 20) and mean reservation depth 4 ticks (sd 1) on both sides,
    /// joint arrivals at 30% of the one-sided rate.
    pub fn reference(n_steps: usize) -> Self {
        let d = SideDemand::lognormal(100.0, 400.0, 4.0, 1.0);
        Self::u_shaped(n_steps, d.clone(), d, 0.3)
    }

    /// Model parameters matching the generator (tick size 1).
    pub fn params(&self, lambda: f64) -> MarketParams {
        MarketParams {
            grid: self.grid.clone(),
            arrivals: self.arrivals.clone(),
            moments: DemandMoments {
                plus: self.plus.moments(),
                minus: self.minus.moments(),
            },
            lambda,
            tick_size: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.plus.validate()?;
        self.minus.validate()?;
        if self.arrivals.len() != self.grid.n_steps {
            return Err(SimError::InvalidDemand(
                "arrival schedule length differs from grid".into(),
            ));
        }
        if self.ladder_levels == 0 || (self.start_bid as usize) < self.ladder_levels + 1 {
            return Err(SimError::InvalidDemand(
                "ladder does not fit above price zero".into(),
            ));
        }
        if self.grid.step_ns() <= 2 * REFRESH_LEAD_NS {
            return Err(SimError::InvalidDemand(
                "step too short for the event layout".into(),
            ));
        }
        Ok(())
    }

    /// Generates day `day` of the history seeded by `seed`.
    pub fn generate(&self, seed: u64, day: u64) -> Result<SyntheticOutput, SimError> {
        self.validate()?;
        let n = self.grid.n_steps;
        let mut rng = path_rng(seed, day);
        let levels = self.ladder_levels;
        let mut events = Vec::with_capacity((n + 1) * (4 * levels + 4));
        let mut mids = Vec::with_capacity(n + 1);
        let mut truth = Vec::with_capacity(n);
        let mut resting: Vec<Resting> = Vec::with_capacity(2 * levels);
        let mut next_ref = 1u64;
        let mut bid = self.start_bid as i64;
        let mut regime = 0i8;
        let floor = levels as i64 + 1;
        let step = self.grid.step_ns();

        for k in 0..=n {
            let ts = self.grid.time_ns(k) - REFRESH_LEAD_NS;
            let draw = (k < n).then(|| {
                let u: f64 = rng.gen();
                let (ip, im) = arrivals_from_uniform(&self.arrivals, k, u);
                let (cp, pp) = self.plus.sample(&side_draw(&mut rng));
                let (cm, pm) = self.minus.sample(&side_draw(&mut rng));
                (ip, im, cp, pp, cm, pm)
            });
            // the closing ladder carries mean-sized levels for liquidation
            let size_plus = level_size(draw.map_or(self.plus.moments().mu_c, |d| d.2));
            let size_minus = level_size(draw.map_or(self.minus.moments().mu_c, |d| d.4));

            for r in resting.drain(..) {
                if r.remaining > 0 {
                    events.push(BookEvent::new(
                        ts,
                        EventKind::Cancel,
                        r.side,
                        r.price,
                        r.remaining,
                        r.order_ref,
                    ));
                }
            }
            for j in 0..levels as u32 {
                for (side, price, size) in [
                    (Side::Bid, bid as u32 - j, size_minus),
                    (Side::Ask, bid as u32 + 1 + j, size_plus),
                ] {
                    events.push(BookEvent::new(
                        ts,
                        EventKind::Add,
                        side,
                        price,
                        size,
                        next_ref,
                    ));
                    resting.push(Resting {
                        side,
                        price,
                        remaining: size,
                        order_ref: next_ref,
                    });
                    next_ref += 1;
                }
            }
            mids.push(bid as f64 + 0.5);

            let Some((ip, im, _, pp, _, pm)) = draw else {
                break;
            };
            let t_k = self.grid.time_ns(k);
            let vol_plus = mo_volume(size_plus, pp, levels);
            let vol_minus = mo_volume(size_minus, pm, levels);
            if ip && vol_plus > 0 {
                sweep(
                    &mut events,
                    &mut resting,
                    Side::Ask,
                    vol_plus,
                    t_k + step / 4,
                );
            }
            if im && vol_minus > 0 {
                sweep(
                    &mut events,
                    &mut resting,
                    Side::Bid,
                    vol_minus,
                    t_k + step / 2,
                );
            }
            truth.push(IntervalTruth {
                ind_plus: ip && vol_plus > 0,
                ind_minus: im && vol_minus > 0,
                c_plus: size_plus as f64,
                p_plus: vol_plus as f64 / size_plus as f64 + 0.5,
                c_minus: size_minus as f64,
                p_minus: vol_minus as f64 / size_minus as f64 + 0.5,
            });

            let u_switch: f64 = rng.gen();
            let u_regime: f64 = rng.gen();
            let u_move: f64 = rng.gen();
            if u_switch < self.walk.switch_prob {
                regime = self
                    .walk
                    .redraw(u_regime, (bid - self.start_bid as i64) as f64);
            }
            bid = (bid + self.walk.step(regime, u_move)).max(floor);
        }
        Ok(SyntheticOutput {
            events,
            mids,
            truth,
        })
    }
}

/// `0.3 - 8e-6 t + 4e-10 t^2` with `t` in seconds.
pub fn u_shape(t: f64) -> f64 {
    U_SHAPE[0] + U_SHAPE[1] * t + U_SHAPE[2] * t * t
}

pub const U_SHAPE: [f64; 3] = [0.3, -8e-6, 4e-10];

#[derive(Debug, Clone, Copy)]
struct Resting {
    side: Side,
    price: u32,
    remaining: u32,
    order_ref: u64,
}

fn level_size(c: f64) -> u32 {
    c.round().clamp(1.0, u32::MAX as f64 / 64.0) as u32
}

fn mo_volume(size: u32, p: f64, levels: usize) -> u64 {
    let v = (size as f64 * (p - 0.5)).round().max(0.0) as u64;
    v.min(size as u64 * levels as u64)
}

fn sweep(
    events: &mut Vec<BookEvent>,
    resting: &mut [Resting],
    side: Side,
    mut volume: u64,
    ts: i64,
) {
    // `resting` interleaves bid/ask per level, best level first.
    for r in resting.iter_mut().filter(|r| r.side == side) {
        if volume == 0 {
            break;
        }
        let take = volume.min(r.remaining as u64) as u32;
        if take == 0 {
            continue;
        }
        events.push(BookEvent::new(
            ts,
            EventKind::Execute,
            side,
            r.price,
            take,
            r.order_ref,
        ));
        r.remaining -= take;
        volume -= take as u64;
    }
}
