//! Limit-order-book reconstruction from normalized event streams and
//! measurement of market-order flow against hypothetical quotes.
//!
//! Prices are integer ticks throughout; conversion to currency happens only in
//! [`midprice`] and [`liquidate`]. `side` on an event is always the resting
//! side: an execution on the ask side is part of a buy market order.

mod io;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use io::{
    load_events, read_events_binary, read_events_csv, save_events, write_events_binary,
    write_events_csv, RECORD_BYTES,
};

use crate::error::LobError;
use crate::model::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Add,
    Cancel,
    Execute,
    /// Execution against non-displayed liquidity: counts toward market-order
    /// volume but leaves the visible book unchanged.
    Trade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookEvent {
    pub ts_ns: i64,
    pub kind: EventKind,
    pub side: Side,
    #[serde(rename = "price_ticks")]
    pub price: u32,
    pub size: u32,
    pub order_ref: u64,
}

impl BookEvent {
    pub fn new(
        ts_ns: i64,
        kind: EventKind,
        side: Side,
        price: u32,
        size: u32,
        order_ref: u64,
    ) -> Self {
        Self {
            ts_ns,
            kind,
            side,
            price,
            size,
            order_ref,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Level {
    pub price: u32,
    pub size: u64,
}

/// Top-of-book ladders: bids best (highest) first, asks best (lowest) first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BookState {
    pub bids: Vec<Level>,
    pub asks: Vec<Level>,
}

impl BookState {
    pub fn side(&self, side: Side) -> &[Level] {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    pub fn best_bid(&self) -> Option<u32> {
        self.bids.first().map(|l| l.price)
    }

    pub fn best_ask(&self) -> Option<u32> {
        self.asks.first().map(|l| l.price)
    }

    /// Midprice in ticks (may be a half tick).
    pub fn mid_ticks(&self) -> Option<f64> {
        Some((self.best_bid()? as f64 + self.best_ask()? as f64) / 2.0)
    }
}

/// Midprice in currency units.
pub fn midprice(book: &BookState, tick_size: f64) -> Result<f64, LobError> {
    book.mid_ticks()
        .map(|m| m * tick_size)
        .ok_or(LobError::OneSided)
}

#[derive(Debug, Clone, Copy)]
struct Order {
    side: Side,
    price: u32,
    remaining: u64,
}

/// Full-depth order book.
#[derive(Debug, Clone, Default)]
pub struct Book {
    bids: BTreeMap<u32, u64>,
    asks: BTreeMap<u32, u64>,
    orders: HashMap<u64, Order>,
}

impl Book {
    pub fn new() -> Self {
        Self::default()
    }

    fn ladder(&mut self, side: Side) -> &mut BTreeMap<u32, u64> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    pub fn best_bid(&self) -> Option<u32> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<u32> {
        self.asks.keys().next().copied()
    }

    pub fn n_orders(&self) -> usize {
        self.orders.len()
    }

    /// Applies `ev`; `index` only labels errors. On error the book is unchanged.
    pub fn apply(&mut self, index: usize, ev: &BookEvent) -> Result<(), LobError> {
        let bad = |reason: String| LobError::Inconsistent {
            index,
            ts_ns: ev.ts_ns,
            reason,
        };
        if ev.size == 0 || ev.price == 0 {
            return Err(bad("size and price must be positive".into()));
        }
        let size = ev.size as u64;
        match ev.kind {
            EventKind::Add => {
                if self.orders.contains_key(&ev.order_ref) {
                    return Err(LobError::DuplicateOrder {
                        index,
                        order_ref: ev.order_ref,
                    });
                }
                let crosses = match ev.side {
                    Side::Bid => self.best_ask().is_some_and(|a| ev.price >= a),
                    Side::Ask => self.best_bid().is_some_and(|b| ev.price <= b),
                };
                if crosses {
                    return Err(bad(format!("add at {} crosses the book", ev.price)));
                }
                self.orders.insert(
                    ev.order_ref,
                    Order {
                        side: ev.side,
                        price: ev.price,
                        remaining: size,
                    },
                );
                *self.ladder(ev.side).entry(ev.price).or_insert(0) += size;
            }
            EventKind::Cancel | EventKind::Execute => {
                let order = *self
                    .orders
                    .get(&ev.order_ref)
                    .ok_or(LobError::UnknownOrder {
                        index,
                        order_ref: ev.order_ref,
                    })?;
                if order.side != ev.side || order.price != ev.price {
                    return Err(bad(format!(
                        "order {} rests at {:?} {}, event says {:?} {}",
                        ev.order_ref, order.side, order.price, ev.side, ev.price
                    )));
                }
                if size > order.remaining {
                    return Err(bad(format!(
                        "size {} exceeds remaining {} of order {}",
                        size, order.remaining, ev.order_ref
                    )));
                }
                let left = order.remaining - size;
                if left == 0 {
                    self.orders.remove(&ev.order_ref);
                } else if let Some(o) = self.orders.get_mut(&ev.order_ref) {
                    o.remaining = left;
                }
                let ladder = self.ladder(ev.side);
                let level = ladder.get_mut(&ev.price).expect("live order has a level");
                *level -= size;
                if *level == 0 {
                    ladder.remove(&ev.price);
                }
            }
            EventKind::Trade => {}
        }
        Ok(())
    }

    pub fn top(&self, side: Side, k: usize) -> Vec<Level> {
        let map = |(&price, &size): (&u32, &u64)| Level { price, size };
        match side {
            Side::Bid => self.bids.iter().rev().take(k).map(map).collect(),
            Side::Ask => self.asks.iter().take(k).map(map).collect(),
        }
    }

    pub fn snapshot(&self, k: usize) -> BookState {
        BookState {
            bids: self.top(Side::Bid, k),
            asks: self.top(Side::Ask, k),
        }
    }

    fn top_into(&self, side: Side, k: usize, out: &mut Vec<Level>) {
        let map = |(&price, &size): (&u32, &u64)| Level { price, size };
        match side {
            Side::Bid => out.extend(self.bids.iter().rev().take(k).map(map)),
            Side::Ask => out.extend(self.asks.iter().take(k).map(map)),
        }
    }
}

/// Free-function form of [`Book::apply`].
pub fn apply_event(book: &mut Book, index: usize, ev: &BookEvent) -> Result<(), LobError> {
    book.apply(index, ev)
}

/// One market order: consecutive executions on one side at one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoRecord {
    pub ts_ns: i64,
    /// Resting side that was hit.
    pub side: Side,
    pub volume: u64,
    depth_start: u32,
    depth_len: u32,
}

/// Market orders arriving during one interval, each with the ladder of the
/// side it hit as it stood just before the order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalFlow {
    pub mos: Vec<MoRecord>,
    levels: Vec<Level>,
}

impl IntervalFlow {
    pub fn depth(&self, mo: &MoRecord) -> &[Level] {
        let s = mo.depth_start as usize;
        &self.levels[s..s + mo.depth_len as usize]
    }

    pub fn has_side(&self, side: Side) -> bool {
        self.mos.iter().any(|m| m.side == side)
    }

    pub fn volume(&self, side: Side) -> u64 {
        self.mos
            .iter()
            .filter(|m| m.side == side)
            .map(|m| m.volume)
            .sum()
    }

    /// Adds a market order with an explicit pre-order ladder.
    pub fn push(&mut self, ts_ns: i64, side: Side, volume: u64, depth: &[Level]) {
        let start = self.levels.len() as u32;
        self.levels.extend_from_slice(depth);
        self.mos.push(MoRecord {
            ts_ns,
            side,
            volume,
            depth_start: start,
            depth_len: depth.len() as u32,
        });
    }
}

/// Standing volume strictly better than `price` on `side` of a ladder.
pub fn better_volume(depth: &[Level], side: Side, price: u32) -> u64 {
    let better = |l: &Level| match side {
        Side::Ask => l.price < price,
        Side::Bid => l.price > price,
    };
    depth.iter().take_while(|l| better(l)).map(|l| l.size).sum()
}

/// Shares filled for a quote resting at `placed_price` on `side`, ahead of
/// all standing volume at that price.
pub fn fill_quantity(placed_price: u32, placed_size: u64, side: Side, flow: &IntervalFlow) -> u64 {
    let mut filled = 0u64;
    for mo in flow.mos.iter().filter(|m| m.side == side) {
        if filled >= placed_size {
            break;
        }
        let ahead = better_volume(flow.depth(mo), side, placed_price);
        filled += mo.volume.saturating_sub(ahead).min(placed_size - filled);
    }
    filled
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Liquidation {
    pub avg_price: f64,
    /// `avg_price * inventory` (negative when buying back a short).
    pub proceeds: f64,
    /// Depth ran out; the remainder was priced at the deepest level.
    pub insufficient_depth: bool,
}

/// Unwinds `inventory` against the opposite ladder, best level first.
pub fn liquidate(
    book: &BookState,
    inventory: f64,
    tick_size: f64,
) -> Result<Liquidation, LobError> {
    if inventory == 0.0 {
        return Ok(Liquidation {
            avg_price: 0.0,
            proceeds: 0.0,
            insufficient_depth: false,
        });
    }
    let ladder = if inventory > 0.0 {
        &book.bids
    } else {
        &book.asks
    };
    let deepest = ladder.last().ok_or(LobError::EmptySide)?;
    let mut left = inventory.abs();
    let mut notional = 0.0;
    for l in ladder {
        let take = left.min(l.size as f64);
        notional += take * l.price as f64;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    let insufficient_depth = left > 0.0;
    if insufficient_depth {
        log::debug!(
            "liquidation of {inventory} exceeds visible depth; extrapolating at the deepest level"
        );
        notional += left * deepest.price as f64;
    }
    let avg_price = notional / inventory.abs() * tick_size;
    Ok(Liquidation {
        avg_price,
        proceeds: avg_price * inventory,
        insufficient_depth,
    })
}

/// Book snapshot at one action time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t_ns: i64,
    pub book: BookState,
    pub mid_ticks: Option<f64>,
}

/// A stream replayed onto a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    /// Snapshots at `t_0 .. t_{N+1}`; each reflects every event with `ts < t_k`.
    pub snapshots: Vec<Snapshot>,
    /// Market-order flow of interval `[t_k, t_{k+1})`.
    pub flows: Vec<IntervalFlow>,
    /// Longest stretch without events inside `[t_0, T]`.
    pub max_gap_ns: i64,
    pub n_events: usize,
}

/// Replays `events` and cuts snapshots and per-interval market-order flow on
/// `grid`. Events at or after the terminal time are ignored.
pub fn replay_intervals(
    events: &[BookEvent],
    grid: &TimeGrid,
    k_levels: usize,
) -> Result<Replay, LobError> {
    let n = grid.n_steps;
    let times: Vec<i64> = (0..=n).map(|k| grid.time_ns(k)).collect();
    let mut book = Book::new();
    let mut snapshots = Vec::with_capacity(n + 1);
    let mut flows = vec![IntervalFlow::default(); n];
    let mut next = 0usize; // next boundary to snapshot
                           // open market order: (ts, side, interval)
    let mut open: Option<(i64, Side, usize)> = None;
    let mut last_ts = times[0];
    let mut max_gap = 0i64;
    let mut prev_ts = i64::MIN;
    let mut applied = 0usize;

    let snap = |book: &Book, t: i64| {
        let b = book.snapshot(k_levels);
        let mid_ticks = b.mid_ticks();
        Snapshot {
            t_ns: t,
            book: b,
            mid_ticks,
        }
    };

    for (index, ev) in events.iter().enumerate() {
        if ev.ts_ns < prev_ts {
            return Err(LobError::Inconsistent {
                index,
                ts_ns: ev.ts_ns,
                reason: "timestamps decrease".into(),
            });
        }
        prev_ts = ev.ts_ns;
        while next <= n && ev.ts_ns >= times[next] {
            snapshots.push(snap(&book, times[next]));
            next += 1;
        }
        if next > n {
            break;
        }
        if next > 0 {
            max_gap = max_gap.max(ev.ts_ns - last_ts);
            last_ts = ev.ts_ns;
        }
        let is_mo = matches!(ev.kind, EventKind::Execute | EventKind::Trade);
        if is_mo && next > 0 {
            let interval = next - 1;
            let flow = &mut flows[interval];
            match open {
                Some((ts, side, iv)) if ts == ev.ts_ns && side == ev.side && iv == interval => {
                    flow.mos.last_mut().expect("open order recorded").volume += ev.size as u64;
                }
                _ => {
                    let start = flow.levels.len() as u32;
                    book.top_into(ev.side, k_levels, &mut flow.levels);
                    let len = flow.levels.len() as u32 - start;
                    flow.mos.push(MoRecord {
                        ts_ns: ev.ts_ns,
                        side: ev.side,
                        volume: ev.size as u64,
                        depth_start: start,
                        depth_len: len,
                    });
                    open = Some((ev.ts_ns, ev.side, interval));
                }
            }
        } else {
            open = None;
        }
        book.apply(index, ev)?;
        applied += 1;
    }
    while next <= n {
        snapshots.push(snap(&book, times[next]));
        next += 1;
    }
    max_gap = max_gap.max(times[n] - last_ts);
    Ok(Replay {
        snapshots,
        flows,
        max_gap_ns: max_gap,
        n_events: applied,
    })
}

/// Snapshots at every grid time (including the terminal time).
pub fn snapshots_at(
    events: &[BookEvent],
    grid: &TimeGrid,
    k_levels: usize,
) -> Result<Vec<Snapshot>, LobError> {
    Ok(replay_intervals(events, grid, k_levels)?.snapshots)
}

/// Writes one row per snapshot with up to `k` levels on each side.
pub fn write_snapshots_csv<W: std::io::Write>(
    snaps: &[Snapshot],
    k: usize,
    out: W,
) -> Result<(), LobError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t_ns".to_string(), "mid_ticks".to_string()];
    for i in 1..=k {
        header.extend([
            format!("bid_px_{i}"),
            format!("bid_sz_{i}"),
            format!("ask_px_{i}"),
            format!("ask_sz_{i}"),
        ]);
    }
    w.write_record(&header)?;
    for s in snaps {
        let mut row = vec![
            s.t_ns.to_string(),
            s.mid_ticks.map(|m| m.to_string()).unwrap_or_default(),
        ];
        for i in 0..k {
            let cell = |l: Option<&Level>| {
                l.map(|l| (l.price.to_string(), l.size.to_string()))
                    .unwrap_or_default()
            };
            let (bp, bs) = cell(s.book.bids.get(i));
            let (ap, asz) = cell(s.book.asks.get(i));
            row.extend([bp, bs, ap, asz]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
