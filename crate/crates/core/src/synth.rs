//! Seeded synthetic markets: zero-intelligence background order flow plus injected
//! manipulator trades with ground-truth labels.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::MatchingEngine;
use crate::network::MotifKind;
use crate::tape::{Aggressor, OrderEvent, Session, Side, MINUTE_MS, SESSION_MINUTES};

/// Prefix of generated background account ids; injected accounts may not use it.
pub const BACKGROUND_PREFIX: &str = "BG";
/// Reach of an activity bump on either side of an injected trade, in trading minutes.
pub const BUMP_HORIZON: i64 = 200;
/// How long an injection leg may wait for a wide enough spread.
pub const DEFER_BUDGET_MS: u32 = 60_000;

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2003, 1, 2).unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    pub n_background_traders: usize,
    /// Background orders per minute per stock, before bumps.
    pub order_rate: f64,
    /// Currency value of one tick; informational.
    pub tick_size: f64,
    pub initial_price: u64,
    pub lot_size: u64,
    /// Median order size in lots.
    pub size_median_lots: f64,
    /// Log-scale spread of order sizes.
    pub size_sigma: f64,
    /// Background limit prices are the mid plus a uniform offset in ±`price_offset` ticks.
    pub price_offset: u64,
    /// Mean lifetime of a background order before it is canceled, in minutes.
    pub order_lifetime_minutes: f64,
    /// Background traders never submit an order that would cross their own resting order.
    pub self_trade_prevention: bool,
    pub start_date: NaiveDate,
    pub session: Session,
    pub seed: u64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            n_stocks: 1,
            n_days: 20,
            n_background_traders: 1_000,
            order_rate: 10.0,
            tick_size: 0.01,
            initial_price: 1_000,
            lot_size: 100,
            size_median_lots: 1.0,
            size_sigma: 0.5,
            price_offset: 5,
            order_lifetime_minutes: 5.0,
            self_trade_prevention: false,
            start_date: default_start(),
            session: Session::default(),
            seed: 0,
        }
    }
}

impl MarketConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_stocks", self.n_stocks as f64),
            ("n_days", self.n_days as f64),
            ("n_background_traders", self.n_background_traders as f64),
            ("order_rate", self.order_rate),
            ("tick_size", self.tick_size),
            ("initial_price", self.initial_price as f64),
            ("lot_size", self.lot_size as f64),
            ("size_median_lots", self.size_median_lots),
            ("order_lifetime_minutes", self.order_lifetime_minutes),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!(
                    "config: {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.size_sigma >= 0.0) {
            return Err(Error::Invalid(format!(
                "config: size_sigma must be ≥ 0, got {}",
                self.size_sigma
            )));
        }
        if self.session.close_ms() > 86_400_000 {
            return Err(Error::Invalid("config: session runs past midnight".into()));
        }
        Ok(())
    }

    pub fn stock_names(&self) -> Vec<String> {
        (0..self.n_stocks).map(|i| format!("STK{i:03}")).collect()
    }

    /// Weekdays from `start_date`.
    pub fn trading_days(&self) -> Vec<NaiveDate> {
        trading_days(self.start_date, self.n_days)
    }
}

pub fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn background_name(i: usize) -> String {
    format!("{BACKGROUND_PREFIX}{i:07}")
}

/// Who sells in a scheduled two-account trade.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// The first listed account sells to the second.
    #[default]
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amplitude: f64,
    pub exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledTrade {
    /// Index into the trading calendar.
    pub day: usize,
    /// Session minute, 1..=240.
    pub minute: usize,
    /// Millisecond within the minute; drawn from the stock's generator when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_ms: Option<u32>,
    pub size: u64,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default = "buyer_initiated")]
    pub aggressor: Aggressor,
}

fn buyer_initiated() -> Aggressor {
    Aggressor::Buyer
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub kind: MotifKind,
    /// One account for A, two for B and C.
    pub traders: Vec<String>,
    pub schedule: Vec<ScheduledTrade>,
    /// Background order rate around each scheduled trade is scaled by 1 + a·|t|^−b.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump: Option<Bump>,
}

impl Injection {
    /// Seller and buyer of a scheduled trade.
    pub fn parties(&self, trade: &ScheduledTrade) -> (&str, &str) {
        match (self.kind, trade.direction) {
            (MotifKind::A, _) => (&self.traders[0], &self.traders[0]),
            (_, Direction::Forward) => (&self.traders[0], &self.traders[1]),
            (_, Direction::Backward) => (&self.traders[1], &self.traders[0]),
        }
    }
}

/// Injections keyed by stock name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectionPlan {
    pub stocks: BTreeMap<String, Vec<Injection>>,
}

impl InjectionPlan {
    pub fn n_injections(&self) -> usize {
        self.stocks.values().map(Vec::len).sum()
    }
}

pub fn validate_plan(config: &MarketConfig, plan: &InjectionPlan) -> Result<()> {
    let names: HashSet<String> = config.stock_names().into_iter().collect();
    for (stock, injections) in &plan.stocks {
        if !names.contains(stock) {
            return Err(Error::Plan(format!("unknown stock {stock}")));
        }
        let mut pinned: HashSet<(usize, u32, &str)> = HashSet::new();
        for (k, inj) in injections.iter().enumerate() {
            let at = |msg: String| Error::Plan(format!("{stock} injection {k}: {msg}"));
            let want = if inj.kind == MotifKind::A { 1 } else { 2 };
            if inj.traders.len() != want {
                return Err(at(format!("kind {} needs {want} accounts", inj.kind)));
            }
            for t in &inj.traders {
                if t.is_empty() || t.starts_with(BACKGROUND_PREFIX) || t.contains(',') {
                    return Err(at(format!(
                        "account id {t:?} is empty, reserved or contains a comma"
                    )));
                }
            }
            if want == 2 && inj.traders[0] == inj.traders[1] {
                return Err(at("the two accounts must differ".into()));
            }
            if inj.schedule.is_empty() {
                return Err(at("empty schedule".into()));
            }
            let forward = inj
                .schedule
                .iter()
                .filter(|s| s.direction == Direction::Forward)
                .count();
            let backward = inj.schedule.len() - forward;
            match inj.kind {
                MotifKind::B if forward == 0 || backward == 0 => {
                    return Err(at("B needs trades in both directions".into()))
                }
                MotifKind::C if forward < 2 && backward < 2 => {
                    return Err(at("C needs two trades in one direction".into()))
                }
                _ => {}
            }
            if let Some(b) = inj.bump {
                if !(b.amplitude >= 0.0) || !(b.exponent >= 0.0) {
                    return Err(at("bump amplitude and exponent must be ≥ 0".into()));
                }
            }
            for s in &inj.schedule {
                if s.day >= config.n_days {
                    return Err(at(format!(
                        "day {} beyond the {}-day calendar",
                        s.day, config.n_days
                    )));
                }
                if !(1..=SESSION_MINUTES).contains(&s.minute) {
                    return Err(at(format!("minute {} outside 1..=240", s.minute)));
                }
                if s.size == 0 {
                    return Err(at("trade size must be positive".into()));
                }
                if let Some(off) = s.offset_ms {
                    if off >= MINUTE_MS {
                        return Err(at(format!("offset_ms {off} ≥ one minute")));
                    }
                    let ms = (s.minute as u32 - 1) * MINUTE_MS + off;
                    let (seller, buyer) = inj.parties(s);
                    let accounts: HashSet<&str> = [seller, buyer].into();
                    for acct in accounts {
                        if !pinned.insert((s.day, ms, acct)) {
                            return Err(at(format!(
                                "account {acct} trades twice at day {} ms {ms}",
                                s.day
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Ground truth for one injected trade.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub stock: String,
    pub day: NaiveDate,
    pub ts_ms: u32,
    pub kind: MotifKind,
    /// The account for A; seller then buyer for B and C.
    pub traders: Vec<String>,
    pub size: u64,
    /// Index of the injection within its stock's plan.
    pub injection: usize,
    pub aggressor: Aggressor,
}

impl Label {
    pub fn seller(&self) -> &str {
        &self.traders[0]
    }

    pub fn buyer(&self) -> &str {
        self.traders.last().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoidedLabel {
    #[serde(flatten)]
    pub label: Label,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthOutput {
    /// Stocks in name order, days ascending, events in timestamp order.
    pub tape: Vec<OrderEvent>,
    pub labels: Vec<Label>,
    /// Labels of injections in which some leg could not be placed or was intercepted.
    pub voided: Vec<VoidedLabel>,
}

pub fn generate(config: &MarketConfig, plan: &InjectionPlan) -> Result<SynthOutput> {
    config.validate()?;
    validate_plan(config, plan)?;
    let empty = Vec::new();
    let parts: Vec<SynthOutput> = config
        .stock_names()
        .par_iter()
        .enumerate()
        .map(|(i, name)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            StockGenerator::new(config, name, plan.stocks.get(name).unwrap_or(&empty), rng).run()
        })
        .collect();
    let mut out = SynthOutput::default();
    for p in parts {
        out.tape.extend(p.tape);
        out.labels.extend(p.labels);
        out.voided.extend(p.voided);
    }
    Ok(out)
}

/// One injected trade waiting to be placed.
#[derive(Clone, Debug)]
struct Leg {
    injection: usize,
    ts: u32,
    scheduled_ts: u32,
    seller: String,
    buyer: String,
    size: u64,
    aggressor: Aggressor,
}

struct StockGenerator<'a> {
    config: &'a MarketConfig,
    stock: &'a str,
    injections: &'a [Injection],
    rng: ChaCha8Rng,
    days: Vec<NaiveDate>,
    /// Background rate multiplier per global trading minute.
    rate_factor: Vec<f64>,
    sizes: LogNormal<f64>,
    out: SynthOutput,
    void_reasons: BTreeMap<usize, String>,
    reference_price: f64,
}

/// Per-day mutable state.
struct Day {
    date: NaiveDate,
    engine: MatchingEngine,
    next_ref: u64,
    cancels: BinaryHeap<Reverse<(u32, u64)>>,
    owner: HashMap<u64, usize>,
    live: HashMap<usize, Vec<u64>>,
}

impl<'a> StockGenerator<'a> {
    fn new(
        config: &'a MarketConfig,
        stock: &'a str,
        injections: &'a [Injection],
        rng: ChaCha8Rng,
    ) -> Self {
        let days = config.trading_days();
        let mut rate_factor = vec![1.0; days.len() * SESSION_MINUTES];
        for inj in injections {
            let Some(b) = inj.bump else { continue };
            for s in &inj.schedule {
                let center = (s.day * SESSION_MINUTES + s.minute - 1) as i64;
                let lo = (center - BUMP_HORIZON).max(0);
                let hi = (center + BUMP_HORIZON).min(rate_factor.len() as i64 - 1);
                for g in lo..=hi {
                    let dt = (g - center).abs().max(1) as f64;
                    rate_factor[g as usize] += b.amplitude * dt.powf(-b.exponent);
                }
            }
        }
        StockGenerator {
            config,
            stock,
            injections,
            rng,
            days,
            rate_factor,
            sizes: LogNormal::new(config.size_median_lots.ln(), config.size_sigma)
                .expect("validated"),
            out: SynthOutput::default(),
            void_reasons: BTreeMap::new(),
            reference_price: config.initial_price as f64,
        }
    }

    fn legs_by_day(&mut self) -> Vec<Vec<Leg>> {
        let open = self.config.session.open_ms;
        let mut by_day: Vec<Vec<Leg>> = vec![Vec::new(); self.days.len()];
        let mut taken: HashSet<(usize, u32)> = HashSet::new();
        for s in self.injections.iter().flat_map(|i| &i.schedule) {
            if let Some(off) = s.offset_ms {
                taken.insert((s.day, open + (s.minute as u32 - 1) * MINUTE_MS + off));
            }
        }
        for (k, inj) in self.injections.iter().enumerate() {
            for s in &inj.schedule {
                let base = open + (s.minute as u32 - 1) * MINUTE_MS;
                let ts = match s.offset_ms {
                    Some(off) => base + off,
                    None => loop {
                        let ts = base + self.rng.random_range(0..MINUTE_MS);
                        if taken.insert((s.day, ts)) {
                            break ts;
                        }
                    },
                };
                let (seller, buyer) = inj.parties(s);
                by_day[s.day].push(Leg {
                    injection: k,
                    ts,
                    scheduled_ts: ts,
                    seller: seller.to_owned(),
                    buyer: buyer.to_owned(),
                    size: s.size,
                    aggressor: s.aggressor,
                });
            }
        }
        for legs in &mut by_day {
            legs.sort_by_key(|l| (l.ts, l.injection));
        }
        by_day
    }

    fn run(mut self) -> SynthOutput {
        let legs = self.legs_by_day();
        for (d, legs) in legs.into_iter().enumerate() {
            self.run_day(d, legs);
        }
        let reasons = std::mem::take(&mut self.void_reasons);
        let (kept, voided): (Vec<Label>, Vec<Label>) = std::mem::take(&mut self.out.labels)
            .into_iter()
            .partition(|l| !reasons.contains_key(&l.injection));
        for l in &voided {
            log::info!(
                "{}: injection {} voided: {}",
                self.stock,
                l.injection,
                reasons[&l.injection]
            );
        }
        self.out.labels = kept;
        self.out.voided = voided
            .into_iter()
            .map(|label| VoidedLabel {
                reason: reasons[&label.injection].clone(),
                label,
            })
            .collect();
        self.out
    }

    fn void(&mut self, injection: usize, reason: String) {
        self.void_reasons.entry(injection).or_insert(reason);
    }

    fn run_day(&mut self, d: usize, legs: Vec<Leg>) {
        let date = self.days[d];
        let mut day = Day {
            date,
            engine: MatchingEngine::new(self.stock, date),
            next_ref: 1,
            cancels: BinaryHeap::new(),
            owner: HashMap::new(),
            live: HashMap::new(),
        };
        let mut arrivals = Arrivals::new(d, &mut self.rng);
        let mut next_arrival = arrivals.next(self);
        let mut legs = std::collections::VecDeque::from(legs);
        const NEVER: u32 = u32::MAX;
        loop {
            let t_cancel = day.cancels.peek().map_or(NEVER, |Reverse((t, _))| *t);
            let t_arrival = next_arrival.unwrap_or(NEVER);
            let t_leg = legs.front().map_or(NEVER, |l| l.ts);
            if t_cancel == NEVER && t_arrival == NEVER && t_leg == NEVER {
                break;
            }
            if t_cancel <= t_arrival && t_cancel <= t_leg {
                let Reverse((ts, order_ref)) = day.cancels.pop().unwrap();
                if day.engine.book().order(order_ref).is_some() {
                    let trader = background_name(day.owner[&order_ref]);
                    let ev = OrderEvent::cancel(self.stock, date, ts, &trader, order_ref);
                    day.engine.apply(&ev);
                    self.out.tape.push(ev);
                }
            } else if t_leg <= t_arrival {
                let leg = legs.pop_front().unwrap();
                let next_bg = t_cancel.min(t_arrival);
                if let Some(deferred) = self.place_leg(&mut day, leg, next_bg) {
                    // retry after the next background event
                    let pos = legs.partition_point(|l| l.ts <= deferred.ts);
                    legs.insert(pos, deferred);
                }
            } else {
                self.background_order(&mut day, t_arrival);
                next_arrival = arrivals.next(self);
            }
        }
        if let Some(p) = day.engine.last_trade_price() {
            self.reference_price = p as f64;
        }
    }

    fn submit(
        &mut self,
        day: &mut Day,
        ts: u32,
        trader: &str,
        side: Side,
        price: u64,
        size: u64,
    ) -> (u64, usize) {
        let order_ref = day.next_ref;
        day.next_ref += 1;
        let ev = OrderEvent::submit(
            self.stock, day.date, ts, trader, order_ref, side, price, size,
        );
        let n = day.engine.apply(&ev);
        self.out.tape.push(ev);
        (order_ref, n)
    }

    fn background_order(&mut self, day: &mut Day, ts: u32) {
        let cfg = self.config;
        let mid = day.engine.mid_price().unwrap_or(self.reference_price);
        let side = if self.rng.random::<bool>() {
            Side::Buy
        } else {
            Side::Sell
        };
        let offset = self
            .rng
            .random_range(-(cfg.price_offset as i64)..=cfg.price_offset as i64);
        let price = (mid.round() as i64 + offset).max(1) as u64;
        let lots = self.sizes.sample(&mut self.rng).round().max(1.0) as u64;
        let mut trader = self.rng.random_range(0..cfg.n_background_traders);
        if cfg.self_trade_prevention {
            for _ in 0..16 {
                if !self.would_self_cross(day, trader, side, price) {
                    break;
                }
                trader = self.rng.random_range(0..cfg.n_background_traders);
            }
            if self.would_self_cross(day, trader, side, price) {
                return;
            }
        }
        let (order_ref, _) = self.submit(
            day,
            ts,
            &background_name(trader),
            side,
            price,
            lots * cfg.lot_size,
        );
        if day.engine.book().order(order_ref).is_none() {
            return;
        }
        let life: f64 = Exp1.sample(&mut self.rng);
        let expiry = ts as f64 + (life * cfg.order_lifetime_minutes * MINUTE_MS as f64).ceil();
        if expiry < cfg.session.close_ms() as f64 {
            day.cancels.push(Reverse((expiry as u32, order_ref)));
            day.owner.insert(order_ref, trader);
        }
        if cfg.self_trade_prevention {
            day.live.entry(trader).or_default().push(order_ref);
        }
    }

    fn would_self_cross(&self, day: &mut Day, trader: usize, side: Side, price: u64) -> bool {
        let Some(refs) = day.live.get_mut(&trader) else {
            return false;
        };
        let book = day.engine.book();
        refs.retain(|&r| book.order(r).is_some());
        refs.iter().any(|&r| match book.order(r) {
            Some((s, p, _)) if s != side => match side {
                Side::Buy => p <= price,
                Side::Sell => p >= price,
            },
            _ => false,
        })
    }

    /// Place one injected trade as a resting order strictly inside the spread and a
    /// counter order one tick through it. Returns the leg when the spread is too tight.
    fn place_leg(&mut self, day: &mut Day, mut leg: Leg, next_bg: u32) -> Option<Leg> {
        let close = self.config.session.close_ms();
        let book = day.engine.book();
        let (bid, ask) = (book.best_bid(), book.best_ask());
        // a seller-initiated counter goes one tick below the resting bid
        let lo = match leg.aggressor {
            Aggressor::Buyer => bid.map_or(1, |b| b + 1),
            Aggressor::Seller => bid.map_or(2, |b| b + 1).max(2),
        };
        let hi = ask.map_or(u64::MAX, |a| a - 1);
        if lo > hi {
            if next_bg >= close || next_bg - leg.scheduled_ts > DEFER_BUDGET_MS {
                self.record_label(day, &leg);
                self.void(leg.injection, format!("spread too tight at {} ms", leg.ts));
                return None;
            }
            leg.ts = next_bg + 1;
            return Some(leg);
        }
        let target = day
            .engine
            .mid_price()
            .unwrap_or(self.reference_price)
            .round() as u64;
        let (rest_side, counter_side) = match leg.aggressor {
            Aggressor::Buyer => (Side::Sell, Side::Buy),
            Aggressor::Seller => (Side::Buy, Side::Sell),
        };
        let price = target.clamp(lo, hi);
        let (rester, counter) = match leg.aggressor {
            Aggressor::Buyer => (leg.seller.clone(), leg.buyer.clone()),
            Aggressor::Seller => (leg.buyer.clone(), leg.seller.clone()),
        };
        let counter_price = match counter_side {
            Side::Buy => price + 1,
            Side::Sell => price - 1,
        };
        self.record_label(day, &leg);
        let (rest_ref, n) = self.submit(day, leg.ts, &rester, rest_side, price, leg.size);
        if n > 0 {
            self.void(
                leg.injection,
                format!("resting leg traded on entry at {} ms", leg.ts),
            );
            return None;
        }
        let (_, n) = self.submit(day, leg.ts, &counter, counter_side, counter_price, leg.size);
        let trades = day.engine.trades();
        let fills = &trades[trades.len() - n..];
        let clean = n == 1
            && fills[0].seller == leg.seller
            && fills[0].buyer == leg.buyer
            && fills[0].size == leg.size
            && fills[0].aggressor == leg.aggressor;
        if !clean {
            self.void(
                leg.injection,
                format!("counter leg intercepted at {} ms", leg.ts),
            );
            if day.engine.book().order(rest_ref).is_some() {
                let ev = OrderEvent::cancel(self.stock, day.date, leg.ts, &rester, rest_ref);
                day.engine.apply(&ev);
                self.out.tape.push(ev);
            }
        }
        None
    }

    fn record_label(&mut self, day: &Day, leg: &Leg) {
        let kind = self.injections[leg.injection].kind;
        let traders = if kind == MotifKind::A {
            vec![leg.seller.clone()]
        } else {
            vec![leg.seller.clone(), leg.buyer.clone()]
        };
        self.out.labels.push(Label {
            stock: self.stock.to_owned(),
            day: day.date,
            ts_ms: leg.ts,
            kind,
            traders,
            size: leg.size,
            injection: leg.injection,
            aggressor: leg.aggressor,
        });
    }
}

/// Poisson arrivals with a piecewise-constant per-minute rate, by time change.
struct Arrivals {
    day: usize,
    minute: usize,
    /// Position within the current minute, in [0, 1).
    pos: f64,
    /// Remaining unit-rate exponential clock.
    clock: f64,
}

impl Arrivals {
    fn new(day: usize, rng: &mut ChaCha8Rng) -> Arrivals {
        Arrivals {
            day,
            minute: 0,
            pos: 0.0,
            clock: Exp1.sample(rng),
        }
    }

    fn next(&mut self, g: &mut StockGenerator) -> Option<u32> {
        while self.minute < SESSION_MINUTES {
            let rate =
                g.config.order_rate * g.rate_factor[self.day * SESSION_MINUTES + self.minute];
            let available = rate * (1.0 - self.pos);
            if self.clock < available {
                self.pos += self.clock / rate;
                self.clock = Exp1.sample(&mut g.rng);
                let ms = ((self.minute as f64 + self.pos) * MINUTE_MS as f64) as u32;
                return Some(
                    g.config.session.open_ms + ms.min(SESSION_MINUTES as u32 * MINUTE_MS - 1),
                );
            }
            self.clock -= available;
            self.minute += 1;
            self.pos = 0.0;
        }
        None
    }
}

/// A plan of `per_stock` injections per stock on fresh accounts, cycling through kinds
/// A, B and C, with random days, minutes and sizes.
pub fn random_plan(config: &MarketConfig, per_stock: usize, seed: u64) -> InjectionPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stocks = BTreeMap::new();
    for stock in config.stock_names() {
        let mut injections = Vec::with_capacity(per_stock);
        for k in 0..per_stock {
            let kind = MotifKind::ALL[k % 3];
            let id = |role: &str| format!("{stock}-{role}{k:04}");
            let traders = match kind {
                MotifKind::A => vec![id("W")],
                _ => vec![id("P"), id("Q")],
            };
            let n_trades = rng.random_range(2..=4);
            let schedule = (0..n_trades)
                .map(|j| ScheduledTrade {
                    day: rng.random_range(0..config.n_days),
                    minute: rng.random_range(1..=SESSION_MINUTES),
                    offset_ms: None,
                    size: config.lot_size * rng.random_range(1..=20),
                    direction: match kind {
                        MotifKind::B if j % 2 == 1 => Direction::Backward,
                        _ => Direction::Forward,
                    },
                    aggressor: if rng.random::<bool>() {
                        Aggressor::Buyer
                    } else {
                        Aggressor::Seller
                    },
                })
                .collect();
            injections.push(Injection {
                kind,
                traders,
                schedule,
                bump: None,
            });
        }
        stocks.insert(stock, injections);
    }
    InjectionPlan { stocks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, detect_motifs};
    use crate::tape::StreamKey;

    fn small() -> MarketConfig {
        MarketConfig {
            n_days: 3,
            order_rate: 5.0,
            n_background_traders: 50,
            seed: 7,
            ..MarketConfig::default()
        }
    }

    fn replay_all(tape: &[OrderEvent]) -> Vec<crate::tape::Trade> {
        let mut streams: BTreeMap<StreamKey, Vec<OrderEvent>> = BTreeMap::new();
        for ev in tape {
            streams.entry(ev.key()).or_default().push(ev.clone());
        }
        streams
            .iter()
            .flat_map(|(k, evs)| crate::matching::replay(k, evs).trades)
            .collect()
    }

    #[test]
    fn calendar_skips_weekends() {
        let d = trading_days(default_start(), 3);
        // 2003-01-02 is a Thursday
        assert_eq!(d[2], NaiveDate::from_ymd_opt(2003, 1, 6).unwrap());
    }

    #[test]
    fn deterministic_and_time_ordered() {
        let a = generate(&small(), &InjectionPlan::default()).unwrap();
        let b = generate(&small(), &InjectionPlan::default()).unwrap();
        assert_eq!(a.tape, b.tape);
        assert!(a.tape.len() > 1000);
        assert!(a
            .tape
            .windows(2)
            .all(|w| w[0].key() != w[1].key() || w[0].timestamp_ms <= w[1].timestamp_ms));
        let other = generate(
            &MarketConfig { seed: 8, ..small() },
            &InjectionPlan::default(),
        )
        .unwrap();
        assert_ne!(a.tape, other.tape);
    }

    #[test]
    fn one_wash_trade() {
        let mut plan = InjectionPlan::default();
        plan.stocks.insert(
            "STK000".into(),
            vec![Injection {
                kind: MotifKind::A,
                traders: vec!["W1".into()],
                schedule: vec![ScheduledTrade {
                    day: 1,
                    minute: 30,
                    offset_ms: Some(500),
                    size: 300,
                    direction: Direction::Forward,
                    aggressor: Aggressor::Buyer,
                }],
                bump: None,
            }],
        );
        let out = generate(&small(), &plan).unwrap();
        assert_eq!(out.labels.len() + out.voided.len(), 1);
        let trades = replay_all(&out.tape);
        let wash: Vec<_> = trades
            .iter()
            .filter(|t| t.seller == "W1" && t.buyer == "W1")
            .collect();
        if let Some(label) = out.labels.first() {
            assert_eq!(wash.len(), 1);
            assert_eq!(small().session.minute_of(wash[0].timestamp_ms), 30);
            assert_eq!(label.ts_ms, wash[0].timestamp_ms);
        }
        let rep = detect_motifs(&build_network(&trades));
        assert!(rep.census.a.motifs >= wash.len() as u64);
    }

    #[test]
    fn plan_validation() {
        let cfg = small();
        let trade = ScheduledTrade {
            day: 0,
            minute: 1,
            offset_ms: Some(0),
            size: 100,
            direction: Direction::Forward,
            aggressor: Aggressor::Buyer,
        };
        let with = |inj: Injection| InjectionPlan {
            stocks: BTreeMap::from([("STK000".to_string(), vec![inj])]),
        };
        let b_one_way = Injection {
            kind: MotifKind::B,
            traders: vec!["P".into(), "Q".into()],
            schedule: vec![trade.clone(), trade.clone()],
            bump: None,
        };
        assert!(matches!(
            validate_plan(&cfg, &with(b_one_way)),
            Err(Error::Plan(_))
        ));
        let clash = Injection {
            kind: MotifKind::C,
            traders: vec!["P".into(), "Q".into()],
            schedule: vec![trade.clone(), trade.clone()],
            bump: None,
        };
        assert!(matches!(
            validate_plan(&cfg, &with(clash)),
            Err(Error::Plan(_))
        ));
        let late = Injection {
            kind: MotifKind::A,
            traders: vec!["W".into()],
            schedule: vec![ScheduledTrade {
                day: 3,
                ..trade.clone()
            }],
            bump: None,
        };
        assert!(validate_plan(&cfg, &with(late)).is_err());
        let reserved = Injection {
            kind: MotifKind::A,
            traders: vec!["BG0000001".into()],
            schedule: vec![trade],
            bump: None,
        };
        assert!(validate_plan(&cfg, &with(reserved)).is_err());
        assert!(validate_plan(&cfg, &random_plan(&cfg, 30, 1)).is_ok());
    }

    #[test]
    fn bumps_raise_activity() {
        let cfg = MarketConfig {
            n_days: 1,
            ..small()
        };
        let trade = ScheduledTrade {
            day: 0,
            minute: 120,
            offset_ms: None,
            size: 100,
            direction: Direction::Forward,
            aggressor: Aggressor::Buyer,
        };
        let plan = |amplitude| InjectionPlan {
            stocks: BTreeMap::from([(
                "STK000".to_string(),
                vec![Injection {
                    kind: MotifKind::A,
                    traders: vec!["W".into()],
                    schedule: vec![trade.clone()],
                    bump: Some(Bump {
                        amplitude,
                        exponent: 0.5,
                    }),
                }],
            )]),
        };
        let flat = generate(&cfg, &plan(0.0)).unwrap().tape.len();
        let bumped = generate(&cfg, &plan(20.0)).unwrap().tape.len();
        assert!(bumped > 2 * flat, "{bumped} vs {flat}");
    }

    #[test]
    fn config_validation() {
        assert!(MarketConfig {
            n_days: 0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(MarketConfig {
            order_rate: f64::NAN,
            ..small()
        }
        .validate()
        .is_err());
        let json = r#"{"n_stocks": 2, "seed": 3}"#;
        let cfg: MarketConfig = serde_json::from_str(json).unwrap();
        assert_eq!((cfg.n_stocks, cfg.n_days), (2, 20));
        assert!(serde_json::from_str::<MarketConfig>(r#"{"n_stockz": 2}"#).is_err());
    }
}
