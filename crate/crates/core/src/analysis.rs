//! Whole-market stages: replay every stream, then per-stock motif, event-study and
//! impact inputs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::events::{motif_events, StockEvents};
use crate::impact::StockImpactInput;
use crate::io::CsvHeader;
use crate::matching::{replay, ReplayDiagnostic};
use crate::network::{
    build_network, cluster_sizes, detect_motifs, edge_count_sample, motif_edges, subnetwork_of,
    KindCensus, MotifCensus, MotifKind,
};
use crate::synth::Label;
use crate::tape::{bar_series, MinuteBar, OrderEvent, Quote, Session, StreamKey, Trade, TradeRef};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayResult {
    pub trades: Vec<Trade>,
    pub quotes: Vec<Quote>,
    pub bars: Vec<MinuteBar>,
    pub diagnostics: Vec<(StreamKey, ReplayDiagnostic)>,
}

/// Replay every (stock, day) stream in parallel; outputs follow stream order.
pub fn replay_streams(
    streams: &BTreeMap<StreamKey, Vec<OrderEvent>>,
    session: Session,
) -> ReplayResult {
    let parts: Vec<_> = streams
        .par_iter()
        .map(|(key, events)| {
            let out = replay(key, events);
            let bars = bar_series(&key.stock, key.day, &out.trades, &out.quotes, session);
            (key, out, bars)
        })
        .collect();
    let mut result = ReplayResult::default();
    for (key, out, bars) in parts {
        result.trades.extend(out.trades);
        result.quotes.extend(out.quotes);
        result.bars.extend(bars);
        result
            .diagnostics
            .extend(out.diagnostics.into_iter().map(|d| (key.clone(), d)));
    }
    result
}

/// Group a time-ordered event list into streams and replay them.
pub fn replay_events(events: &[OrderEvent], session: Session) -> ReplayResult {
    let mut streams: BTreeMap<StreamKey, Vec<OrderEvent>> = BTreeMap::new();
    for ev in events {
        streams.entry(ev.key()).or_default().push(ev.clone());
    }
    replay_streams(&streams, session)
}

/// Minute bars for every (stock, day) present in the trades or quotes.
pub fn bars_from(trades: &[Trade], quotes: &[Quote], session: Session) -> Vec<MinuteBar> {
    let mut days: BTreeMap<StreamKey, (Vec<Trade>, Vec<Quote>)> = BTreeMap::new();
    for t in trades {
        days.entry(StreamKey {
            stock: t.stock.clone(),
            day: t.day,
        })
        .or_default()
        .0
        .push(t.clone());
    }
    for q in quotes {
        days.entry(StreamKey {
            stock: q.stock.clone(),
            day: q.day,
        })
        .or_default()
        .1
        .push(q.clone());
    }
    let per_day: Vec<Vec<MinuteBar>> = days
        .par_iter_mut()
        .map(|(key, (t, q))| {
            t.sort_by_key(|t| t.seq);
            q.sort_by_key(|q| q.timestamp_ms);
            bar_series(&key.stock, key.day, t, q, session)
        })
        .collect();
    per_day.into_iter().flatten().collect()
}

/// Trades per stock, each list in (day, seq) order.
pub fn trades_by_stock(trades: &[Trade]) -> BTreeMap<String, Vec<Trade>> {
    let mut out: BTreeMap<String, Vec<Trade>> = BTreeMap::new();
    for t in trades {
        out.entry(t.stock.clone()).or_default().push(t.clone());
    }
    for list in out.values_mut() {
        list.sort_by_key(|t| t.trade_ref());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifRecord {
    pub kind: MotifKind,
    pub traders: Vec<String>,
    pub trades: Vec<TradeRef>,
}

/// Weakly connected component sizes of each motif sub-network, largest first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSizes {
    #[serde(rename = "A")]
    pub a: Vec<usize>,
    #[serde(rename = "B")]
    pub b: Vec<usize>,
    #[serde(rename = "C")]
    pub c: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StockMotifs {
    pub stock: String,
    pub n_traders: usize,
    pub n_trades: usize,
    pub census: MotifCensus,
    pub clusters: ClusterSizes,
    /// Parallel-edge counts of the C instances.
    pub c_edge_counts: Vec<u64>,
    pub instances: Vec<MotifRecord>,
}

impl StockMotifs {
    /// Every trade that belongs to at least one instance, sorted.
    pub fn event_trades(&self) -> Vec<TradeRef> {
        let set: BTreeSet<TradeRef> = self
            .instances
            .iter()
            .flat_map(|i| i.trades.iter().copied())
            .collect();
        set.into_iter().collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotifFileReport {
    /// Sums over stocks.
    pub total: MotifCensus,
    pub stocks: Vec<StockMotifs>,
}

impl MotifFileReport {
    pub fn stock(&self, name: &str) -> Option<&StockMotifs> {
        self.stocks.iter().find(|s| s.stock == name)
    }
}

pub fn stock_motifs(stock: &str, trades: &[Trade]) -> StockMotifs {
    let net = build_network(trades);
    let report = detect_motifs(&net);
    let clusters = |kind| cluster_sizes(&subnetwork_of(&net, &report.instances, kind));
    let instances = report
        .instances
        .iter()
        .map(|i| MotifRecord {
            kind: i.kind,
            traders: i
                .traders
                .iter()
                .map(|&n| net.node_name(n).to_owned())
                .collect(),
            trades: i.edges.iter().map(|&e| net.edges()[e].trade).collect(),
        })
        .collect();
    StockMotifs {
        stock: stock.to_owned(),
        n_traders: net.nodes().len(),
        n_trades: net.edges().len(),
        census: report.census,
        clusters: ClusterSizes {
            a: clusters(MotifKind::A),
            b: clusters(MotifKind::B),
            c: clusters(MotifKind::C),
        },
        c_edge_counts: edge_count_sample(&report.instances, MotifKind::C).expect("kind C"),
        instances,
    }
}

fn add(into: &mut KindCensus, k: &KindCensus) {
    into.motifs += k.motifs;
    into.traders += k.traders;
    into.trader_measure += k.trader_measure;
}

/// Networks and motifs of every stock in the trade list.
pub fn analyze_motifs(trades: &[Trade]) -> MotifFileReport {
    let by_stock = trades_by_stock(trades);
    let stocks: Vec<StockMotifs> = by_stock
        .par_iter()
        .map(|(s, t)| stock_motifs(s, t))
        .collect();
    let mut total = MotifCensus::default();
    for s in &stocks {
        add(&mut total.a, &s.census.a);
        add(&mut total.b, &s.census.b);
        add(&mut total.c, &s.census.c);
    }
    MotifFileReport { total, stocks }
}

/// Event-study inputs: each stock's bars and the events behind its motif trades.
pub fn event_inputs(
    bars: &[MinuteBar],
    trades: &[Trade],
    motifs: &MotifFileReport,
    session: Session,
) -> Vec<StockEvents> {
    let mut bars_by_stock: BTreeMap<&str, Vec<MinuteBar>> = BTreeMap::new();
    for b in bars {
        bars_by_stock.entry(&b.stock).or_default().push(b.clone());
    }
    let by_stock = trades_by_stock(trades);
    let empty = Vec::new();
    bars_by_stock
        .into_iter()
        .map(|(stock, bars)| {
            let trades = by_stock.get(stock).unwrap_or(&empty);
            let net = build_network(trades);
            let index: HashMap<TradeRef, usize> = net
                .edges()
                .iter()
                .enumerate()
                .map(|(i, e)| (e.trade, i))
                .collect();
            let edges: Vec<usize> = motifs
                .stock(stock)
                .map(|m| {
                    m.event_trades()
                        .iter()
                        .filter_map(|r| index.get(r).copied())
                        .collect()
                })
                .unwrap_or_default();
            StockEvents {
                events: motif_events(stock, &net, &edges, session),
                bars,
            }
        })
        .collect()
}

/// Impact inputs: each stock's trades and its motif trades.
pub fn impact_inputs(trades: &[Trade], motifs: &MotifFileReport) -> Vec<StockImpactInput> {
    trades_by_stock(trades)
        .into_iter()
        .map(|(stock, trades)| StockImpactInput {
            events: motifs
                .stock(&stock)
                .map(|m| m.event_trades())
                .unwrap_or_default(),
            trades,
        })
        .collect()
}

/// All motif edges of a stock's trades, as edge indices of its network.
pub fn motif_edge_indices(trades: &[Trade]) -> Vec<usize> {
    motif_edges(&detect_motifs(&build_network(trades)).instances)
}

/// One row of the motif edge list: an instance's trade with its counterparties.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifEdgeRow {
    pub stock: String,
    pub kind: MotifKind,
    /// Index of the instance within its stock.
    pub instance: usize,
    pub seller: String,
    pub buyer: String,
    pub trade: TradeRef,
    pub size: u64,
}

impl CsvHeader for MotifEdgeRow {
    const HEADER: &'static [&'static str] = &[
        "stock", "kind", "instance", "seller", "buyer", "trade", "size",
    ];
}

/// Every (instance, trade) pair of the report, stocks and instances in report order.
pub fn motif_edge_rows(trades: &[Trade], motifs: &MotifFileReport) -> Vec<MotifEdgeRow> {
    let index: HashMap<(&str, TradeRef), &Trade> = trades
        .iter()
        .map(|t| ((t.stock.as_str(), t.trade_ref()), t))
        .collect();
    let mut rows = Vec::new();
    for s in &motifs.stocks {
        for (i, inst) in s.instances.iter().enumerate() {
            for r in &inst.trades {
                let Some(t) = index.get(&(s.stock.as_str(), *r)) else {
                    continue;
                };
                rows.push(MotifEdgeRow {
                    stock: s.stock.clone(),
                    kind: inst.kind,
                    instance: i,
                    seller: t.seller.clone(),
                    buyer: t.buyer.clone(),
                    trade: *r,
                    size: t.size,
                });
            }
        }
    }
    rows
}

/// Ground-truth check of detected motifs against synthetic labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub labels: usize,
    /// Labels matched by a replayed trade with the same day, time, parties and size.
    pub found: usize,
    /// Labels whose trade must carry the labeled motif. A C label in a direction its
    /// injection used only once is checked for presence only.
    pub eligible: usize,
    pub recovered: usize,
    pub instances: usize,
    /// Instances whose traders are all labeled accounts.
    pub injected_instances: usize,
    pub missing: Vec<Label>,
}

impl LabelScore {
    pub fn recall(&self) -> f64 {
        if self.eligible == 0 {
            1.0
        } else {
            self.recovered as f64 / self.eligible as f64
        }
    }

    pub fn precision(&self) -> Option<f64> {
        (self.instances > 0).then(|| self.injected_instances as f64 / self.instances as f64)
    }
}

fn instance_matches(label: &Label, record: &MotifRecord) -> bool {
    if record.kind != label.kind {
        return false;
    }
    match label.kind {
        MotifKind::A => record.traders == [label.seller()],
        MotifKind::B => {
            let mut want = [label.seller(), label.buyer()];
            want.sort_unstable();
            let mut got: Vec<&str> = record.traders.iter().map(String::as_str).collect();
            got.sort_unstable();
            got == want
        }
        MotifKind::C => record.traders == [label.seller(), label.buyer()],
    }
}

pub fn score_labels(trades: &[Trade], motifs: &MotifFileReport, labels: &[Label]) -> LabelScore {
    type Key<'a> = (&'a str, chrono::NaiveDate, u32, &'a str, &'a str, u64);
    let mut by_key: HashMap<Key, Vec<TradeRef>> = HashMap::new();
    for t in trades {
        by_key
            .entry((&t.stock, t.day, t.timestamp_ms, &t.seller, &t.buyer, t.size))
            .or_default()
            .push(t.trade_ref());
    }
    let mut holders: HashMap<(&str, TradeRef), Vec<&MotifRecord>> = HashMap::new();
    for s in &motifs.stocks {
        for inst in &s.instances {
            for &r in &inst.trades {
                holders.entry((&s.stock, r)).or_default().push(inst);
            }
        }
    }
    let mut direction_uses: HashMap<(&str, usize, &str, &str), usize> = HashMap::new();
    for l in labels {
        *direction_uses
            .entry((&l.stock, l.injection, l.seller(), l.buyer()))
            .or_default() += 1;
    }
    let accounts: std::collections::HashSet<&str> = labels
        .iter()
        .flat_map(|l| l.traders.iter().map(String::as_str))
        .collect();
    let mut score = LabelScore {
        labels: labels.len(),
        ..Default::default()
    };
    for l in labels {
        let found = by_key
            .get(&(
                l.stock.as_str(),
                l.day,
                l.ts_ms,
                l.seller(),
                l.buyer(),
                l.size,
            ))
            .map(Vec::as_slice)
            .unwrap_or_default();
        if !found.is_empty() {
            score.found += 1;
        }
        let eligible = l.kind != MotifKind::C
            || direction_uses[&(l.stock.as_str(), l.injection, l.seller(), l.buyer())] >= 2;
        if !eligible {
            if found.is_empty() {
                score.missing.push(l.clone());
            }
            continue;
        }
        score.eligible += 1;
        let recovered = found.iter().any(|&r| {
            holders
                .get(&(l.stock.as_str(), r))
                .is_some_and(|list| list.iter().any(|inst| instance_matches(l, inst)))
        });
        if recovered {
            score.recovered += 1;
        } else {
            score.missing.push(l.clone());
        }
    }
    for s in &motifs.stocks {
        score.instances += s.instances.len();
        score.injected_instances += s
            .instances
            .iter()
            .filter(|i| i.traders.iter().all(|t| accounts.contains(t.as_str())))
            .count();
    }
    score
}
