//! Trade-by-trade price impact of motif trades against matched benchmark trades.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::SideFilter;
use crate::io::CsvHeader;
use crate::stats::{one_sample_t_test, stars, TTest};
use crate::tape::{Aggressor, Trade, TradeRef};

/// Lags run from −MAX_LAG to MAX_LAG.
pub const MAX_LAG: usize = 10;
pub const N_LAGS: usize = 2 * MAX_LAG + 1;
pub const BENCHMARK_SIZE: usize = 20;
pub const MIN_BENCHMARKS: usize = 5;
/// Reported means are multiplied by this factor.
pub const REPORT_SCALE: f64 = 1e5;

/// A stock's trades pooled over all days in (day, seq) order.
#[derive(Clone, Debug)]
pub struct TradeSeries {
    trades: Vec<Trade>,
    ln_price: Vec<f64>,
    /// First and last position of each trade's day.
    day_span: Vec<(usize, usize)>,
    /// Days in order; `day_of[i]` indexes into it.
    day_of: Vec<usize>,
    days: Vec<chrono::NaiveDate>,
    position: HashMap<TradeRef, usize>,
}

impl TradeSeries {
    pub fn new(mut trades: Vec<Trade>) -> TradeSeries {
        trades.sort_by_key(|t| t.trade_ref());
        let ln_price = trades.iter().map(|t| (t.price_ticks as f64).ln()).collect();
        let mut day_span = vec![(0, 0); trades.len()];
        let mut day_of = vec![0; trades.len()];
        let mut days = Vec::new();
        let mut start = 0;
        while start < trades.len() {
            let day = trades[start].day;
            let end = start + trades[start..].iter().take_while(|t| t.day == day).count();
            for i in start..end {
                day_span[i] = (start, end - 1);
                day_of[i] = days.len();
            }
            days.push(day);
            start = end;
        }
        let position = trades
            .iter()
            .enumerate()
            .map(|(i, t)| (t.trade_ref(), i))
            .collect();
        TradeSeries {
            trades,
            ln_price,
            day_span,
            day_of,
            days,
            position,
        }
    }

    pub fn trades(&self) -> &[Trade] {
        &self.trades
    }

    pub fn position(&self, trade: TradeRef) -> Option<usize> {
        self.position.get(&trade).copied()
    }

    /// True when trades m−11..=m+10 all fall on trade m's day.
    pub fn has_window(&self, m: usize) -> bool {
        let (lo, hi) = self.day_span[m];
        m > lo + MAX_LAG && m + MAX_LAG <= hi
    }

    /// Log returns r_i = ln p(m+i) − ln p(m+i−1) for i = −10..=10.
    pub fn returns(&self, m: usize) -> Option<Vec<f64>> {
        if !self.has_window(m) {
            return None;
        }
        Some(
            (m - MAX_LAG..=m + MAX_LAG)
                .map(|j| self.ln_price[j] - self.ln_price[j - 1])
                .collect(),
        )
    }
}

/// Window of trade-by-trade returns for a trade, `None` when the day lacks enough
/// trades on either side.
pub fn trade_returns(series: &TradeSeries, trade: TradeRef) -> Option<Vec<f64>> {
    series.returns(series.position(trade)?)
}

/// Benchmark candidates grouped by aggressor and day, each list in timestamp order.
pub struct BenchmarkPool {
    by_side_day: HashMap<(Aggressor, usize), Vec<usize>>,
}

impl BenchmarkPool {
    /// Every non-event trade with a complete return window.
    pub fn new(series: &TradeSeries, events: &HashSet<usize>) -> BenchmarkPool {
        let mut by_side_day: HashMap<(Aggressor, usize), Vec<usize>> = HashMap::new();
        for (i, t) in series.trades.iter().enumerate() {
            if !events.contains(&i) && series.has_window(i) {
                by_side_day
                    .entry((t.aggressor, series.day_of[i]))
                    .or_default()
                    .push(i);
            }
        }
        BenchmarkPool { by_side_day }
    }
}

/// Ranking key of a candidate: intraday distance, calendar-day distance, pooled position.
fn rank_key(series: &TradeSeries, m: usize, c: usize) -> (u32, i64, usize) {
    let (e, t) = (&series.trades[m], &series.trades[c]);
    (
        e.timestamp_ms.abs_diff(t.timestamp_ms),
        (t.day - e.day).num_days().abs(),
        c,
    )
}

/// The nearest candidates of one day: at least `k` of them when available, plus any
/// tied with the k-th.
fn nearest_in_day(series: &TradeSeries, list: &[usize], ts: u32, k: usize, out: &mut Vec<usize>) {
    let dist = |i: usize| series.trades[list[i]].timestamp_ms.abs_diff(ts);
    let split = list.partition_point(|&c| series.trades[c].timestamp_ms < ts);
    let (mut left, mut right) = (split, split);
    let mut taken = 0;
    let mut last = None;
    loop {
        let next = match (left > 0, right < list.len()) {
            (false, false) => break,
            (true, false) => {
                left -= 1;
                left
            }
            (false, true) => {
                right += 1;
                right - 1
            }
            (true, true) => {
                if dist(left - 1) <= dist(right) {
                    left -= 1;
                    left
                } else {
                    right += 1;
                    right - 1
                }
            }
        };
        let d = dist(next);
        if taken >= k && Some(d) != last {
            break;
        }
        out.push(list[next]);
        taken += 1;
        last = Some(d);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BenchmarkSet {
    /// Twenty benchmarks, best first.
    Full(Vec<usize>),
    /// Between five and nineteen benchmarks: all that exist.
    Partial(Vec<usize>),
    Unavailable {
        candidates: usize,
    },
}

/// Control trades for the event at position `m`: same aggressor, other days, nearest in
/// intraday time.
pub fn benchmark_set(series: &TradeSeries, pool: &BenchmarkPool, m: usize) -> BenchmarkSet {
    let event = &series.trades[m];
    let event_day = series.day_of[m];
    let mut candidates = Vec::new();
    for d in 0..series.days.len() {
        if d == event_day {
            continue;
        }
        if let Some(list) = pool.by_side_day.get(&(event.aggressor, d)) {
            nearest_in_day(
                series,
                list,
                event.timestamp_ms,
                BENCHMARK_SIZE,
                &mut candidates,
            );
        }
    }
    candidates.sort_by_key(|&c| rank_key(series, m, c));
    match candidates.len() {
        n if n >= BENCHMARK_SIZE => {
            candidates.truncate(BENCHMARK_SIZE);
            BenchmarkSet::Full(candidates)
        }
        n if n >= MIN_BENCHMARKS => BenchmarkSet::Partial(candidates),
        n => BenchmarkSet::Unavailable { candidates: n },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnWindow {
    pub trade: TradeRef,
    pub aggressor: Aggressor,
    pub raw: Vec<f64>,
    pub benchmark_mean: Vec<f64>,
    pub excess: Vec<f64>,
}

/// Subtract the mean benchmark window from the event window.
pub fn excess_returns(
    trade: TradeRef,
    aggressor: Aggressor,
    raw: Vec<f64>,
    benchmarks: &[Vec<f64>],
) -> ReturnWindow {
    let mut benchmark_mean = vec![0.0; raw.len()];
    for b in benchmarks {
        for (m, v) in benchmark_mean.iter_mut().zip(b) {
            *m += v;
        }
    }
    let n = benchmarks.len().max(1) as f64;
    benchmark_mean.iter_mut().for_each(|m| *m /= n);
    let excess = raw
        .iter()
        .zip(&benchmark_mean)
        .map(|(r, b)| r - b)
        .collect();
    ReturnWindow {
        trade,
        aggressor,
        raw,
        benchmark_mean,
        excess,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagStats {
    /// A lag such as "-3", or a span such as "[1,10]".
    pub label: String,
    pub n: usize,
    pub mean_raw: f64,
    pub mean_excess: f64,
    /// Absent with fewer than two events.
    pub p_raw: Option<f64>,
    pub p_excess: Option<f64>,
    /// Either test saw zero sample variance.
    pub degenerate: bool,
}

impl LagStats {
    fn new(label: String, raw: &[f64], excess: &[f64]) -> LagStats {
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let (tr, te): (Option<TTest>, Option<TTest>) =
            (one_sample_t_test(raw), one_sample_t_test(excess));
        LagStats {
            label,
            n: raw.len(),
            mean_raw: mean(raw),
            mean_excess: mean(excess),
            p_raw: tr.map(|t| t.p_value),
            p_excess: te.map(|t| t.p_value),
            degenerate: tr.is_some_and(|t| t.degenerate) || te.is_some_and(|t| t.degenerate),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagTable {
    pub side: Aggressor,
    pub n_events: usize,
    /// Lags −10..=10.
    pub lags: Vec<LagStats>,
    /// Per-event sums over [−10,−1], 0 and [1,10].
    pub cumulative: Vec<LagStats>,
}

pub const CUMULATIVE_SPANS: [(&str, i64, i64); 3] =
    [("[-10,-1]", -10, -1), ("0", 0, 0), ("[1,10]", 1, 10)];

/// Per-lag and cumulative mean returns with two-sided t-tests, for the windows of one side.
pub fn lag_table(windows: &[ReturnWindow], side: Aggressor) -> Result<LagTable> {
    let chosen: Vec<&ReturnWindow> = windows.iter().filter(|w| w.aggressor == side).collect();
    if chosen.is_empty() {
        return Err(Error::EmptyGroup(format!("no {side} windows")));
    }
    if chosen.len() < 2 {
        log::warn!("only one {side} window; no t-tests");
    }
    let column = |k: usize, pick: fn(&ReturnWindow) -> &Vec<f64>| -> Vec<f64> {
        chosen.iter().map(|w| pick(w)[k]).collect()
    };
    let lags = (0..N_LAGS)
        .map(|k| {
            LagStats::new(
                (k as i64 - MAX_LAG as i64).to_string(),
                &column(k, |w| &w.raw),
                &column(k, |w| &w.excess),
            )
        })
        .collect();
    let span_sum = |v: &[f64], lo: i64, hi: i64| -> f64 {
        let (a, b) = (
            (lo + MAX_LAG as i64) as usize,
            (hi + MAX_LAG as i64) as usize,
        );
        v[a..=b].iter().sum()
    };
    let cumulative = CUMULATIVE_SPANS
        .iter()
        .map(|&(label, lo, hi)| {
            let raw: Vec<f64> = chosen.iter().map(|w| span_sum(&w.raw, lo, hi)).collect();
            let excess: Vec<f64> = chosen.iter().map(|w| span_sum(&w.excess, lo, hi)).collect();
            LagStats::new(label.to_owned(), &raw, &excess)
        })
        .collect();
    Ok(LagTable {
        side,
        n_events: chosen.len(),
        lags,
        cumulative,
    })
}

/// Table row for CSV export, means scaled by 10^5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagRow {
    pub side: Aggressor,
    pub panel: String,
    pub i: String,
    pub mean_raw_e5: f64,
    pub p_raw: Option<f64>,
    pub sig_raw: String,
    pub mean_excess_e5: f64,
    pub p_excess: Option<f64>,
    pub sig_excess: String,
    pub n: usize,
}

impl CsvHeader for LagRow {
    const HEADER: &'static [&'static str] = &[
        "side",
        "panel",
        "i",
        "mean_raw_e5",
        "p_raw",
        "sig_raw",
        "mean_excess_e5",
        "p_excess",
        "sig_excess",
        "n",
    ];
}

impl LagTable {
    pub fn rows(&self) -> Vec<LagRow> {
        let row = |panel: &str, s: &LagStats| LagRow {
            side: self.side,
            panel: panel.to_owned(),
            i: s.label.clone(),
            mean_raw_e5: s.mean_raw * REPORT_SCALE,
            p_raw: s.p_raw,
            sig_raw: s.p_raw.map(stars).unwrap_or_default().to_owned(),
            mean_excess_e5: s.mean_excess * REPORT_SCALE,
            p_excess: s.p_excess,
            sig_excess: s.p_excess.map(stars).unwrap_or_default().to_owned(),
            n: s.n,
        };
        self.lags
            .iter()
            .map(|s| row("A", s))
            .chain(self.cumulative.iter().map(|s| row("B", s)))
            .collect()
    }
}

/// Event trades of one stock together with all of its trades.
#[derive(Clone, Debug)]
pub struct StockImpactInput {
    pub trades: Vec<Trade>,
    pub events: Vec<TradeRef>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpactCounts {
    pub events: usize,
    pub dropped_history: usize,
    pub dropped_benchmark: usize,
    pub partial_benchmark: usize,
    pub used: usize,
}

impl ImpactCounts {
    fn add(&mut self, o: &ImpactCounts) {
        self.events += o.events;
        self.dropped_history += o.dropped_history;
        self.dropped_benchmark += o.dropped_benchmark;
        self.partial_benchmark += o.partial_benchmark;
        self.used += o.used;
    }
}

/// Return windows for every usable event of one stock.
pub fn stock_return_windows(input: &StockImpactInput) -> (Vec<ReturnWindow>, ImpactCounts) {
    let series = TradeSeries::new(input.trades.clone());
    let positions: Vec<usize> = input
        .events
        .iter()
        .filter_map(|&r| series.position(r))
        .collect();
    let event_set: HashSet<usize> = positions.iter().copied().collect();
    let pool = BenchmarkPool::new(&series, &event_set);
    let mut counts = ImpactCounts {
        events: positions.len(),
        ..Default::default()
    };
    let mut windows = Vec::new();
    for &m in &positions {
        let Some(raw) = series.returns(m) else {
            counts.dropped_history += 1;
            continue;
        };
        let chosen = match benchmark_set(&series, &pool, m) {
            BenchmarkSet::Full(b) => b,
            BenchmarkSet::Partial(b) => {
                counts.partial_benchmark += 1;
                b
            }
            BenchmarkSet::Unavailable { .. } => {
                counts.dropped_benchmark += 1;
                continue;
            }
        };
        let bench: Vec<Vec<f64>> = chosen.iter().filter_map(|&c| series.returns(c)).collect();
        let t = &series.trades[m];
        windows.push(excess_returns(t.trade_ref(), t.aggressor, raw, &bench));
        counts.used += 1;
    }
    if counts.dropped_history > 0 || counts.dropped_benchmark > 0 || counts.partial_benchmark > 0 {
        log::warn!(
            "{}: {} events lack history, {} lack benchmarks, {} use fewer than {BENCHMARK_SIZE} benchmarks",
            input.trades.first().map(|t| t.stock.as_str()).unwrap_or("?"),
            counts.dropped_history,
            counts.dropped_benchmark,
            counts.partial_benchmark
        );
    }
    (windows, counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideResult {
    pub side: Aggressor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<LagTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub scale: f64,
    pub counts: ImpactCounts,
    pub sides: Vec<SideResult>,
}

impl ImpactReport {
    pub fn table(&self, side: Aggressor) -> Option<&LagTable> {
        self.sides
            .iter()
            .find(|s| s.side == side)
            .and_then(|s| s.table.as_ref())
    }

    pub fn rows(&self) -> Vec<LagRow> {
        self.sides
            .iter()
            .filter_map(|s| s.table.as_ref())
            .flat_map(|t| t.rows())
            .collect()
    }
}

pub fn impact_study(stocks: &[StockImpactInput], side: SideFilter) -> ImpactReport {
    let per_stock: Vec<(Vec<ReturnWindow>, ImpactCounts)> =
        stocks.par_iter().map(stock_return_windows).collect();
    let mut counts = ImpactCounts::default();
    let mut windows = Vec::new();
    for (w, c) in per_stock {
        counts.add(&c);
        windows.extend(w);
    }
    let sides = [Aggressor::Buyer, Aggressor::Seller]
        .into_iter()
        .filter(|&a| side.admits(a))
        .map(|a| match lag_table(&windows, a) {
            Ok(table) => SideResult {
                side: a,
                table: Some(table),
                note: None,
            },
            Err(e) => SideResult {
                side: a,
                table: None,
                note: Some(e.to_string()),
            },
        })
        .collect();
    ImpactReport {
        scale: REPORT_SCALE,
        counts,
        sides,
    }
}
