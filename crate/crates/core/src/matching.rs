//! Continuous double auction with price-time priority.
//!
//! Executions happen at the resting order's limit price. An incoming order that crosses
//! several resting orders produces one trade per resting order consumed, all stamped with
//! the incoming order's timestamp. Self-crossing is executed like any other cross.

use std::collections::{BTreeMap, HashMap, VecDeque};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::tape::{
    mid_from_top, Aggressor, OrderAction, OrderEvent, Quote, Side, StreamKey, Trade,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RestingOrder {
    pub order_ref: u64,
    pub trader: String,
    pub remaining: u64,
    pub arrival_ms: u32,
}

/// Limit order book. Each price level is a FIFO queue.
#[derive(Clone, Debug, Default)]
pub struct OrderBook {
    bids: BTreeMap<u64, VecDeque<RestingOrder>>,
    asks: BTreeMap<u64, VecDeque<RestingOrder>>,
    index: HashMap<u64, (Side, u64)>,
}

/// One execution against a resting order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fill {
    pub resting_ref: u64,
    pub resting_trader: String,
    pub price_ticks: u64,
    pub size: u64,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_bid(&self) -> Option<u64> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<u64> {
        self.asks.keys().next().copied()
    }

    /// Mid-price: bid/ask midpoint, else the last trade price, else undefined.
    pub fn mid_price(&self, last_trade: Option<u64>) -> Option<f64> {
        mid_from_top(self.best_bid(), self.best_ask(), last_trade)
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    /// Side, price and remaining size of a live order.
    pub fn order(&self, order_ref: u64) -> Option<(Side, u64, u64)> {
        let &(side, price) = self.index.get(&order_ref)?;
        let level = self.side(side).get(&price)?;
        let o = level.iter().find(|o| o.order_ref == order_ref)?;
        Some((side, price, o.remaining))
    }

    /// Levels of one side from the best price outward.
    pub fn levels(&self, side: Side) -> Vec<(u64, Vec<RestingOrder>)> {
        let collect = |(p, q): (&u64, &VecDeque<RestingOrder>)| (*p, q.iter().cloned().collect());
        match side {
            Side::Buy => self.bids.iter().rev().map(collect).collect(),
            Side::Sell => self.asks.iter().map(collect).collect(),
        }
    }

    fn side(&self, side: Side) -> &BTreeMap<u64, VecDeque<RestingOrder>> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut BTreeMap<u64, VecDeque<RestingOrder>> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    /// Match an incoming limit order, then rest any residual at its limit price.
    /// Returns false (and does nothing) when `order_ref` is already live.
    pub fn submit(
        &mut self,
        order_ref: u64,
        trader: &str,
        side: Side,
        limit: u64,
        size: u64,
        timestamp_ms: u32,
        fills: &mut Vec<Fill>,
    ) -> bool {
        if self.index.contains_key(&order_ref) {
            return false;
        }
        let mut remaining = size;
        let opposite = side.opposite();
        while remaining > 0 {
            let best = match side {
                Side::Buy => self.best_ask().filter(|&p| p <= limit),
                Side::Sell => self.best_bid().filter(|&p| p >= limit),
            };
            let Some(price) = best else { break };
            let book = self.side_mut(opposite);
            let level = book.get_mut(&price).expect("best level exists");
            let front = level.front_mut().expect("levels are never empty");
            let qty = remaining.min(front.remaining);
            fills.push(Fill {
                resting_ref: front.order_ref,
                resting_trader: front.trader.clone(),
                price_ticks: price,
                size: qty,
            });
            front.remaining -= qty;
            remaining -= qty;
            if front.remaining == 0 {
                let done = level.pop_front().expect("front exists");
                if level.is_empty() {
                    book.remove(&price);
                }
                self.index.remove(&done.order_ref);
            }
        }
        if remaining > 0 {
            self.side_mut(side)
                .entry(limit)
                .or_default()
                .push_back(RestingOrder {
                    order_ref,
                    trader: trader.to_owned(),
                    remaining,
                    arrival_ms: timestamp_ms,
                });
            self.index.insert(order_ref, (side, limit));
        }
        true
    }

    /// Remove a live order. Returns its remaining size, or `None` if it is not resting.
    pub fn cancel(&mut self, order_ref: u64) -> Option<u64> {
        let (side, price) = self.index.remove(&order_ref)?;
        let book = self.side_mut(side);
        let level = book.get_mut(&price)?;
        let pos = level.iter().position(|o| o.order_ref == order_ref)?;
        let removed = level.remove(pos)?;
        if level.is_empty() {
            book.remove(&price);
        }
        Some(removed.remaining)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayDiagnostic {
    pub timestamp_ms: u32,
    pub order_ref: u64,
    pub message: String,
}

/// Output of replaying one (stock, day) stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayOutput {
    pub trades: Vec<Trade>,
    pub quotes: Vec<Quote>,
    pub diagnostics: Vec<ReplayDiagnostic>,
}

/// Incremental engine for one (stock, day). Used directly by the market generator, which
/// needs to observe the book between events.
#[derive(Clone, Debug)]
pub struct MatchingEngine {
    stock: String,
    day: NaiveDate,
    book: OrderBook,
    next_seq: u64,
    last_trade: Option<u64>,
    top: (Option<u64>, Option<u64>),
    out: ReplayOutput,
    fills: Vec<Fill>,
}

impl MatchingEngine {
    pub fn new(stock: &str, day: NaiveDate) -> Self {
        MatchingEngine {
            stock: stock.to_owned(),
            day,
            book: OrderBook::new(),
            next_seq: 1,
            last_trade: None,
            top: (None, None),
            out: ReplayOutput::default(),
            fills: Vec::new(),
        }
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn last_trade_price(&self) -> Option<u64> {
        self.last_trade
    }

    pub fn mid_price(&self) -> Option<f64> {
        self.book.mid_price(self.last_trade)
    }

    pub fn trades(&self) -> &[Trade] {
        &self.out.trades
    }

    /// Apply one event; returns the number of trades it produced (the newest entries of
    /// [`Self::trades`]).
    pub fn apply(&mut self, ev: &OrderEvent) -> usize {
        let before = self.out.trades.len();
        match ev.action {
            OrderAction::Submit {
                side,
                price_ticks,
                size,
            } => {
                self.fills.clear();
                let mut fills = std::mem::take(&mut self.fills);
                if !self.book.submit(
                    ev.order_ref,
                    &ev.trader,
                    side,
                    price_ticks,
                    size,
                    ev.timestamp_ms,
                    &mut fills,
                ) {
                    self.diagnose(ev, "duplicate live order_ref; submit ignored");
                }
                for f in fills.drain(..) {
                    let (seller, buyer) = match side {
                        Side::Buy => (f.resting_trader, ev.trader.clone()),
                        Side::Sell => (ev.trader.clone(), f.resting_trader),
                    };
                    self.out.trades.push(Trade {
                        stock: self.stock.clone(),
                        day: self.day,
                        timestamp_ms: ev.timestamp_ms,
                        seller,
                        buyer,
                        price_ticks: f.price_ticks,
                        size: f.size,
                        aggressor: Aggressor::of(side),
                        seq: self.next_seq,
                    });
                    self.next_seq += 1;
                    self.last_trade = Some(f.price_ticks);
                }
                self.fills = fills;
            }
            OrderAction::Cancel => {
                if self.book.cancel(ev.order_ref).is_none() {
                    self.diagnose(ev, "cancel of an order that is filled or unknown; ignored");
                }
            }
        }
        let top = (self.book.best_bid(), self.book.best_ask());
        if top != self.top {
            self.top = top;
            self.out.quotes.push(Quote {
                stock: self.stock.clone(),
                day: self.day,
                timestamp_ms: ev.timestamp_ms,
                bid_ticks: top.0,
                ask_ticks: top.1,
            });
        }
        self.out.trades.len() - before
    }

    fn diagnose(&mut self, ev: &OrderEvent, message: &str) {
        self.out.diagnostics.push(ReplayDiagnostic {
            timestamp_ms: ev.timestamp_ms,
            order_ref: ev.order_ref,
            message: message.to_owned(),
        });
    }

    pub fn finish(self) -> ReplayOutput {
        self.out
    }
}

/// Replay one validated (stock, day) stream through a fresh book.
pub fn replay(key: &StreamKey, events: &[OrderEvent]) -> ReplayOutput {
    let mut engine = MatchingEngine::new(&key.stock, key.day);
    for ev in events {
        engine.apply(ev);
    }
    engine.finish()
}
