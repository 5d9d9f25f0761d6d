//! Canonical order-flow and trade records, tape parsing and minute bars.
//!
//! Prices are integer ticks and sizes integer shares. Timestamps are milliseconds
//! since midnight. A trading session is modelled as 240 contiguous one-minute bins
//! starting at [`Session::open_ms`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, CsvHeader, Format};

pub const SESSION_MINUTES: usize = 240;
pub const MINUTE_MS: u32 = 60_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

/// Which side's incoming order triggered an execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggressor {
    Buyer,
    Seller,
}

impl Aggressor {
    pub fn of(side: Side) -> Aggressor {
        match side {
            Side::Buy => Aggressor::Buyer,
            Side::Sell => Aggressor::Seller,
        }
    }

    pub fn flipped(self) -> Aggressor {
        match self {
            Aggressor::Buyer => Aggressor::Seller,
            Aggressor::Seller => Aggressor::Buyer,
        }
    }
}

impl fmt::Display for Aggressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggressor::Buyer => "buyer",
            Aggressor::Seller => "seller",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OrderAction {
    Submit {
        side: Side,
        price_ticks: u64,
        size: u64,
    },
    Cancel,
}

/// One submission or cancelation on the tape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderEvent {
    pub stock: String,
    pub day: NaiveDate,
    pub timestamp_ms: u32,
    pub trader: String,
    pub order_ref: u64,
    pub action: OrderAction,
}

impl OrderEvent {
    pub fn submit(
        stock: &str,
        day: NaiveDate,
        timestamp_ms: u32,
        trader: &str,
        order_ref: u64,
        side: Side,
        price_ticks: u64,
        size: u64,
    ) -> Self {
        OrderEvent {
            stock: stock.to_owned(),
            day,
            timestamp_ms,
            trader: trader.to_owned(),
            order_ref,
            action: OrderAction::Submit {
                side,
                price_ticks,
                size,
            },
        }
    }

    pub fn cancel(
        stock: &str,
        day: NaiveDate,
        timestamp_ms: u32,
        trader: &str,
        order_ref: u64,
    ) -> Self {
        OrderEvent {
            stock: stock.to_owned(),
            day,
            timestamp_ms,
            trader: trader.to_owned(),
            order_ref,
            action: OrderAction::Cancel,
        }
    }

    pub fn key(&self) -> StreamKey {
        StreamKey {
            stock: self.stock.clone(),
            day: self.day,
        }
    }

    pub fn to_row(&self) -> OrderRow {
        let (action, side, price_ticks, size) = match self.action {
            OrderAction::Submit {
                side,
                price_ticks,
                size,
            } => (RowAction::Submit, Some(side), Some(price_ticks), Some(size)),
            OrderAction::Cancel => (RowAction::Cancel, None, None, None),
        };
        OrderRow {
            stock: self.stock.clone(),
            day: self.day,
            timestamp_ms: self.timestamp_ms,
            trader: self.trader.clone(),
            action,
            side,
            price_ticks,
            size,
            order_ref: self.order_ref,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowAction {
    Submit,
    Cancel,
}

/// Flat file rendering of an [`OrderEvent`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRow {
    pub stock: String,
    pub day: NaiveDate,
    pub timestamp_ms: u32,
    pub trader: String,
    pub action: RowAction,
    pub side: Option<Side>,
    pub price_ticks: Option<u64>,
    pub size: Option<u64>,
    pub order_ref: u64,
}

impl CsvHeader for OrderRow {
    const HEADER: &'static [&'static str] = &[
        "stock",
        "day",
        "timestamp_ms",
        "trader",
        "action",
        "side",
        "price_ticks",
        "size",
        "order_ref",
    ];
}

impl OrderRow {
    fn into_event(self) -> std::result::Result<OrderEvent, String> {
        if self.stock.is_empty() {
            return Err("empty stock".into());
        }
        if self.trader.is_empty() {
            return Err("empty trader".into());
        }
        let action = match self.action {
            RowAction::Submit => {
                let side = self.side.ok_or("submit without side")?;
                let price_ticks = self.price_ticks.ok_or("submit without price")?;
                let size = self.size.ok_or("submit without size")?;
                if price_ticks == 0 {
                    return Err("price must be positive".into());
                }
                if size == 0 {
                    return Err("size must be positive".into());
                }
                OrderAction::Submit {
                    side,
                    price_ticks,
                    size,
                }
            }
            RowAction::Cancel => {
                if self.side.is_some() || self.price_ticks.is_some() || self.size.is_some() {
                    return Err(
                        "cancel rows carry only order_ref (side, price and size must be empty)"
                            .into(),
                    );
                }
                OrderAction::Cancel
            }
        };
        Ok(OrderEvent {
            stock: self.stock,
            day: self.day,
            timestamp_ms: self.timestamp_ms,
            trader: self.trader,
            order_ref: self.order_ref,
            action,
        })
    }
}

/// One (stock, trading day) stream.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamKey {
    pub stock: String,
    pub day: NaiveDate,
}

/// One execution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub stock: String,
    pub day: NaiveDate,
    pub timestamp_ms: u32,
    pub seller: String,
    pub buyer: String,
    pub price_ticks: u64,
    pub size: u64,
    pub aggressor: Aggressor,
    /// 1-based sequence number within the (stock, day).
    pub seq: u64,
}

impl CsvHeader for Trade {
    const HEADER: &'static [&'static str] = &[
        "stock",
        "day",
        "timestamp_ms",
        "seller",
        "buyer",
        "price_ticks",
        "size",
        "aggressor",
        "seq",
    ];
}

impl Trade {
    pub fn trade_ref(&self) -> TradeRef {
        TradeRef {
            day: self.day,
            seq: self.seq,
        }
    }
}

/// Identifies a trade within one stock across the whole sample. Renders as `YYYY-MM-DD/seq`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TradeRef {
    pub day: NaiveDate,
    pub seq: u64,
}

impl fmt::Display for TradeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.day.format("%Y-%m-%d"), self.seq)
    }
}

impl std::str::FromStr for TradeRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("malformed trade reference {s:?}"));
        let (day, seq) = s.split_once('/').ok_or_else(bad)?;
        Ok(TradeRef {
            day: NaiveDate::parse_from_str(day, "%Y-%m-%d").map_err(|_| bad())?,
            seq: seq.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for TradeRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TradeRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Top of book after an event that changed the best bid or best ask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quote {
    pub stock: String,
    pub day: NaiveDate,
    pub timestamp_ms: u32,
    pub bid_ticks: Option<u64>,
    pub ask_ticks: Option<u64>,
}

impl CsvHeader for Quote {
    const HEADER: &'static [&'static str] =
        &["stock", "day", "timestamp_ms", "bid_ticks", "ask_ticks"];
}

/// Mid-price of a top of book: the bid/ask midpoint when both sides exist, else the
/// last trade price, else undefined.
pub fn mid_from_top(bid: Option<u64>, ask: Option<u64>, last_trade: Option<u64>) -> Option<f64> {
    match (bid, ask) {
        (Some(b), Some(a)) => Some((b + a) as f64 / 2.0),
        _ => last_trade.map(|p| p as f64),
    }
}

/// The trading session: 240 contiguous minutes from `open_ms`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub open_ms: u32,
}

impl Default for Session {
    fn default() -> Self {
        // 09:30
        Session {
            open_ms: 34_200_000,
        }
    }
}

impl Session {
    pub fn close_ms(&self) -> u32 {
        self.open_ms + SESSION_MINUTES as u32 * MINUTE_MS
    }

    /// Minute index t' in 1..=240. Timestamps outside the session clamp to the first or last bin.
    pub fn minute_of(&self, timestamp_ms: u32) -> usize {
        if timestamp_ms < self.open_ms {
            return 1;
        }
        (((timestamp_ms - self.open_ms) / MINUTE_MS) as usize + 1).min(SESSION_MINUTES)
    }

    /// Exclusive end timestamp of minute `t'`.
    pub fn minute_end_ms(&self, minute: usize) -> u32 {
        self.open_ms + minute as u32 * MINUTE_MS
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    MalformedRow,
    TimestampRegression,
    UnknownOrderRef,
    DuplicateOrderRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: u64,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {:?}: {}", self.line, self.kind, self.message)
    }
}

/// Validated order events grouped by (stock, day), each stream in timestamp order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedTape {
    pub streams: BTreeMap<StreamKey, Vec<OrderEvent>>,
    /// Rejected rows. Every rejected row is dropped from `streams`.
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedTape {
    pub fn n_events(&self) -> usize {
        self.streams.values().map(Vec::len).sum()
    }

    /// All events, streams in (stock, day) order.
    pub fn events(&self) -> impl Iterator<Item = &OrderEvent> {
        self.streams.values().flatten()
    }
}

#[derive(Default)]
struct StreamState {
    last_ts: Option<u32>,
    live: HashSet<u64>,
    seen: HashSet<u64>,
}

#[derive(Default)]
struct TapeValidator {
    tape: ParsedTape,
    state: BTreeMap<StreamKey, StreamState>,
}

impl TapeValidator {
    fn reject(&mut self, line: u64, kind: DiagnosticKind, message: String) {
        self.tape.diagnostics.push(Diagnostic {
            line,
            kind,
            message,
        });
    }

    fn push(&mut self, line: u64, row: OrderRow) {
        let event = match row.into_event() {
            Ok(e) => e,
            Err(msg) => return self.reject(line, DiagnosticKind::MalformedRow, msg),
        };
        let key = event.key();
        let st = self.state.entry(key.clone()).or_default();
        if let Some(prev) = st.last_ts {
            if event.timestamp_ms < prev {
                let msg = format!(
                    "timestamp {} precedes {} earlier in stream {}/{}",
                    event.timestamp_ms, prev, key.stock, key.day
                );
                return self.reject(line, DiagnosticKind::TimestampRegression, msg);
            }
        }
        match event.action {
            OrderAction::Submit { .. } => {
                if !st.seen.insert(event.order_ref) {
                    let msg = format!("order_ref {} already used in this stream", event.order_ref);
                    return self.reject(line, DiagnosticKind::DuplicateOrderRef, msg);
                }
                st.live.insert(event.order_ref);
            }
            OrderAction::Cancel => {
                if !st.live.remove(&event.order_ref) {
                    let msg = format!(
                        "cancel of unknown or already canceled order_ref {}",
                        event.order_ref
                    );
                    return self.reject(line, DiagnosticKind::UnknownOrderRef, msg);
                }
            }
        }
        st.last_ts = Some(event.timestamp_ms);
        self.tape.streams.entry(key).or_default().push(event);
    }
}

pub fn parse_order_tape(path: &Path, format: Format) -> Result<ParsedTape> {
    parse_order_tape_from(io::open(path)?, format)
}

/// Parse an order tape. Row-level problems become diagnostics; only unreadable input or a
/// wrong CSV header is an error.
pub fn parse_order_tape_from<R: Read>(reader: R, format: Format) -> Result<ParsedTape> {
    let mut v = TapeValidator::default();
    match format {
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(true)
                .from_reader(reader);
            let headers = rdr.headers()?.clone();
            if !headers.is_empty() && headers.iter().ne(OrderRow::HEADER.iter().copied()) {
                return Err(Error::Invalid(format!(
                    "order tape header must be {:?}, found {:?}",
                    OrderRow::HEADER.join(","),
                    headers.iter().collect::<Vec<_>>().join(",")
                )));
            }
            for rec in rdr.records() {
                let rec = match rec {
                    Ok(r) => r,
                    Err(e) => {
                        let line = e.position().map(|p| p.line()).unwrap_or(0);
                        v.reject(line, DiagnosticKind::MalformedRow, e.to_string());
                        continue;
                    }
                };
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                match rec.deserialize::<OrderRow>(Some(&headers)) {
                    Ok(row) => v.push(line, row),
                    Err(e) => v.reject(line, DiagnosticKind::MalformedRow, e.to_string()),
                }
            }
        }
        Format::Jsonl => {
            for (idx, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = idx as u64 + 1;
                let text = line?;
                if text.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<OrderRow>(&text) {
                    Ok(row) => v.push(line_no, row),
                    Err(e) => v.reject(line_no, DiagnosticKind::MalformedRow, e.to_string()),
                }
            }
        }
    }
    Ok(v.tape)
}

pub fn write_order_tape(path: &Path, events: &[OrderEvent], format: Format) -> Result<()> {
    let rows: Vec<OrderRow> = events.iter().map(OrderEvent::to_row).collect();
    io::write_records(path, &rows, format)
}

pub fn write_order_tape_to<W: std::io::Write>(
    w: W,
    events: &[OrderEvent],
    format: Format,
) -> Result<()> {
    let rows: Vec<OrderRow> = events.iter().map(OrderEvent::to_row).collect();
    io::write_records_to(w, &rows, format)
}

// ---------------------------------------------------------------------------
// Minute bars
// ---------------------------------------------------------------------------

/// Financial variables tracked per minute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    /// Absolute log return of the mid-price.
    Volatility,
    /// Total traded shares.
    Volume,
    /// Shares per trade.
    AvgTradeSize,
    /// Sum of price times size.
    Turnover,
}

impl Variable {
    pub const ALL: [Variable; 4] = [
        Variable::Volatility,
        Variable::Volume,
        Variable::AvgTradeSize,
        Variable::Turnover,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Volatility => "volatility",
            Variable::Volume => "volume",
            Variable::AvgTradeSize => "avg_trade_size",
            Variable::Turnover => "turnover",
        }
    }
}

impl std::str::FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variable::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown variable {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinuteBar {
    pub stock: String,
    pub day: NaiveDate,
    /// t' in 1..=240.
    pub minute: usize,
    pub volatility: f64,
    pub volume: u64,
    pub avg_trade_size: f64,
    /// Ticks times shares.
    pub turnover: u64,
    pub n_trades: u64,
    pub mid_close: Option<f64>,
}

impl CsvHeader for MinuteBar {
    const HEADER: &'static [&'static str] = &[
        "stock",
        "day",
        "minute",
        "volatility",
        "volume",
        "avg_trade_size",
        "turnover",
        "n_trades",
        "mid_close",
    ];
}

impl MinuteBar {
    pub fn value(&self, var: Variable) -> f64 {
        match var {
            Variable::Volatility => self.volatility,
            Variable::Volume => self.volume as f64,
            Variable::AvgTradeSize => self.avg_trade_size,
            Variable::Turnover => self.turnover as f64,
        }
    }
}

/// Aggregate one (stock, day) of trades and quotes into 240 minute bars.
///
/// The mid at the close of minute t' is the top of book of the last quote strictly before
/// the minute's end, falling back to the last trade price before that instant. A minute
/// with no defined mid carries the previous close forward. Volatility of the first bar is
/// measured against the session-opening mid, which is the mid at the open or, for a book
/// that starts empty, the first mid defined during the day. Volatility is 0 while either
/// endpoint is undefined.
pub fn bar_series(
    stock: &str,
    day: NaiveDate,
    trades: &[Trade],
    quotes: &[Quote],
    session: Session,
) -> Vec<MinuteBar> {
    let mut bars: Vec<MinuteBar> = (1..=SESSION_MINUTES)
        .map(|minute| MinuteBar {
            stock: stock.to_owned(),
            day,
            minute,
            volatility: 0.0,
            volume: 0,
            avg_trade_size: 0.0,
            turnover: 0,
            n_trades: 0,
            mid_close: None,
        })
        .collect();

    for t in trades {
        let bar = &mut bars[session.minute_of(t.timestamp_ms) - 1];
        bar.volume += t.size;
        bar.turnover += t.price_ticks * t.size;
        bar.n_trades += 1;
    }

    let mut top: (Option<u64>, Option<u64>) = (None, None);
    let mut last_trade: Option<u64> = None;
    let (mut qi, mut ti) = (0, 0);
    let mut advance = |until: u32, top: &mut (Option<u64>, Option<u64>), last: &mut Option<u64>| {
        while qi < quotes.len() && quotes[qi].timestamp_ms < until {
            *top = (quotes[qi].bid_ticks, quotes[qi].ask_ticks);
            qi += 1;
        }
        while ti < trades.len() && trades[ti].timestamp_ms < until {
            *last = Some(trades[ti].price_ticks);
            ti += 1;
        }
    };

    advance(session.open_ms, &mut top, &mut last_trade);
    let mut opening = mid_from_top(top.0, top.1, last_trade);

    let mut prev_close: Option<f64> = None;
    for bar in bars.iter_mut() {
        advance(session.minute_end_ms(bar.minute), &mut top, &mut last_trade);
        bar.mid_close = mid_from_top(top.0, top.1, last_trade).or(prev_close);
        if bar.n_trades > 0 {
            bar.avg_trade_size = bar.volume as f64 / bar.n_trades as f64;
        }
        prev_close = bar.mid_close;
    }

    if opening.is_none() {
        opening = bars.iter().find_map(|b| b.mid_close);
    }
    let mut reference = opening;
    for bar in bars.iter_mut() {
        if let (Some(prev), Some(cur)) = (reference, bar.mid_close) {
            bar.volatility = (cur.ln() - prev.ln()).abs();
        }
        reference = bar.mid_close;
    }
    bars
}
