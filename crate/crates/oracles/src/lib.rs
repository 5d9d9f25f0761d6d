//! Slow, direct reference implementations used to cross-check the library in tests.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use motifwatch::events::{EventRef, SizeGroup};
use motifwatch::matching::MatchingEngine;
use motifwatch::network::{MotifKind, TradingNetwork};
use motifwatch::tape::{Aggressor, OrderAction, OrderEvent, Quote, Side, Trade, TradeRef};

pub fn day(offset: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2003, 1, 6).unwrap() + chrono::Days::new(offset)
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
struct Resting {
    order_ref: u64,
    trader: String,
    side: Side,
    price: u64,
    remaining: u64,
    arrival: usize,
}

/// Matcher that keeps one flat list of resting orders and rescans it for every fill.
pub fn naive_replay(events: &[OrderEvent]) -> (Vec<Trade>, Vec<Quote>, usize) {
    let mut book: Vec<Resting> = Vec::new();
    let mut trades = Vec::new();
    let mut quotes = Vec::new();
    let mut diagnostics = 0;
    let mut top = (None, None);
    for (arrival, ev) in events.iter().enumerate() {
        match ev.action {
            OrderAction::Submit {
                side,
                price_ticks,
                size,
            } => {
                if book.iter().any(|r| r.order_ref == ev.order_ref) {
                    diagnostics += 1;
                } else {
                    let mut left = size;
                    while left > 0 {
                        let best = book
                            .iter()
                            .enumerate()
                            .filter(|(_, r)| {
                                r.side != side
                                    && match side {
                                        Side::Buy => r.price <= price_ticks,
                                        Side::Sell => r.price >= price_ticks,
                                    }
                            })
                            .min_by_key(|(_, r)| {
                                let price_rank = match side {
                                    Side::Buy => r.price as i128,
                                    Side::Sell => -(r.price as i128),
                                };
                                (price_rank, r.arrival)
                            })
                            .map(|(i, _)| i);
                        let Some(i) = best else { break };
                        let q = left.min(book[i].remaining);
                        let (seller, buyer) = match side {
                            Side::Buy => (book[i].trader.clone(), ev.trader.clone()),
                            Side::Sell => (ev.trader.clone(), book[i].trader.clone()),
                        };
                        trades.push(Trade {
                            stock: ev.stock.clone(),
                            day: ev.day,
                            timestamp_ms: ev.timestamp_ms,
                            seller,
                            buyer,
                            price_ticks: book[i].price,
                            size: q,
                            aggressor: Aggressor::of(side),
                            seq: trades.len() as u64 + 1,
                        });
                        left -= q;
                        book[i].remaining -= q;
                        if book[i].remaining == 0 {
                            book.remove(i);
                        }
                    }
                    if left > 0 {
                        book.push(Resting {
                            order_ref: ev.order_ref,
                            trader: ev.trader.clone(),
                            side,
                            price: price_ticks,
                            remaining: left,
                            arrival,
                        });
                    }
                }
            }
            OrderAction::Cancel => match book.iter().position(|r| r.order_ref == ev.order_ref) {
                Some(i) => {
                    book.remove(i);
                }
                None => diagnostics += 1,
            },
        }
        let bid = book
            .iter()
            .filter(|r| r.side == Side::Buy)
            .map(|r| r.price)
            .max();
        let ask = book
            .iter()
            .filter(|r| r.side == Side::Sell)
            .map(|r| r.price)
            .min();
        if (bid, ask) != top {
            top = (bid, ask);
            quotes.push(Quote {
                stock: ev.stock.clone(),
                day: ev.day,
                timestamp_ms: ev.timestamp_ms,
                bid_ticks: bid,
                ask_ticks: ask,
            });
        }
    }
    (trades, quotes, diagnostics)
}

/// Replay `events` and check every incoming order against the book just before it:
/// fills walk the opposite side from the best price outward, oldest first within a
/// level, and stop at the limit; traded shares leave the book; queues stay in arrival
/// order. Returns the first violation.
pub fn check_priority(events: &[OrderEvent]) -> Result<(), String> {
    let Some(first) = events.first() else {
        return Ok(());
    };
    let mut engine = MatchingEngine::new(&first.stock, first.day);
    for (k, ev) in events.iter().enumerate() {
        let OrderAction::Submit {
            side,
            price_ticks,
            size,
        } = ev.action
        else {
            engine.apply(ev);
            continue;
        };
        let before = engine.book().levels(side.opposite());
        for (_, queue) in &before {
            if queue.windows(2).any(|w| w[0].arrival_ms > w[1].arrival_ms) {
                return Err(format!("event {k}: queue out of arrival order"));
            }
        }
        let volume = |levels: &[(u64, Vec<motifwatch::matching::RestingOrder>)]| -> u64 {
            levels
                .iter()
                .flat_map(|(_, q)| q.iter().map(|o| o.remaining))
                .sum()
        };
        let mut expected = Vec::new();
        let mut left = size;
        'walk: for (price, queue) in &before {
            let crosses = match side {
                Side::Buy => *price <= price_ticks,
                Side::Sell => *price >= price_ticks,
            };
            if !crosses {
                break;
            }
            for o in queue {
                if left == 0 {
                    break 'walk;
                }
                let q = left.min(o.remaining);
                expected.push((o.trader.clone(), *price, q));
                left -= q;
            }
        }
        let n = engine.apply(ev);
        let trades = engine.trades();
        let got: Vec<(String, u64, u64)> = trades[trades.len() - n..]
            .iter()
            .map(|t| {
                let resting = match side {
                    Side::Buy => t.seller.clone(),
                    Side::Sell => t.buyer.clone(),
                };
                (resting, t.price_ticks, t.size)
            })
            .collect();
        if got != expected {
            return Err(format!("event {k}: fills {got:?}, expected {expected:?}"));
        }
        let traded: u64 = got.iter().map(|f| f.2).sum();
        if traded > size {
            return Err(format!("event {k}: traded {traded} of {size}"));
        }
        let after = engine.book().levels(side.opposite());
        if volume(&before) - volume(&after) != traded {
            return Err(format!("event {k}: book volume not conserved"));
        }
    }
    Ok(())
}

/// A small random tape with a tight price range, for property checks.
pub fn random_scenario(rng: &mut impl Rng, n_events: usize) -> Vec<OrderEvent> {
    let mut out = Vec::with_capacity(n_events);
    let mut ts = 0;
    for r in 1..=n_events as u64 {
        ts += rng.random_range(0..3);
        let trader = format!("T{}", rng.random_range(0..4));
        if r > 1 && rng.random::<f64>() < 0.2 {
            out.push(OrderEvent::cancel(
                "S",
                day(0),
                ts,
                &trader,
                rng.random_range(1..r),
            ));
        } else {
            let side = if rng.random::<bool>() {
                Side::Buy
            } else {
                Side::Sell
            };
            out.push(OrderEvent::submit(
                "S",
                day(0),
                ts,
                &trader,
                r,
                side,
                rng.random_range(8..=12),
                rng.random_range(1..=5),
            ));
        }
    }
    out
}

/// A valid single-stream tape: unique refs, non-decreasing timestamps, cancels only of
/// previously submitted and not yet canceled orders (which may have been filled).
pub fn random_tape(seed: u64, n_events: usize) -> Vec<OrderEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traders: Vec<String> = (0..20).map(|i| format!("T{i}")).collect();
    let mut open: Vec<(u64, usize)> = Vec::new();
    let mut ts = 34_200_000u32;
    let mut next_ref = 1;
    let mut out = Vec::with_capacity(n_events);
    while out.len() < n_events {
        ts += rng.random_range(0..50);
        if !open.is_empty() && rng.random::<f64>() < 0.25 {
            let (r, t) = open.swap_remove(rng.random_range(0..open.len()));
            out.push(OrderEvent::cancel("S", day(0), ts, &traders[t], r));
        } else {
            let t = rng.random_range(0..traders.len());
            let side = if rng.random::<bool>() {
                Side::Buy
            } else {
                Side::Sell
            };
            let price = rng.random_range(95..=105);
            let size = rng.random_range(1..=10) * 10;
            out.push(OrderEvent::submit(
                "S",
                day(0),
                ts,
                &traders[t],
                next_ref,
                side,
                price,
                size,
            ));
            open.push((next_ref, t));
            next_ref += 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

/// Random trades over at most `max_nodes` traders, self-loops and parallels allowed.
pub fn random_trades(seed: u64, max_nodes: usize, max_edges: usize) -> Vec<Trade> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_nodes = rng.random_range(1..=max_nodes);
    let n_edges = rng.random_range(0..=max_edges);
    // a small active core makes reciprocal and repeated pairs common
    let core = rng.random_range(1..=n_nodes.min(8));
    (0..n_edges)
        .map(|i| {
            let mut pick = || {
                if rng.random::<f64>() < 0.5 {
                    rng.random_range(0..core)
                } else {
                    rng.random_range(0..n_nodes)
                }
            };
            let (s, b) = (pick(), pick());
            Trade {
                stock: "S".into(),
                day: day(i as u64 / 100),
                timestamp_ms: 34_200_000 + i as u32,
                seller: format!("N{s:02}"),
                buyer: format!("N{b:02}"),
                price_ticks: 100,
                size: 100,
                aggressor: if i % 2 == 0 {
                    Aggressor::Buyer
                } else {
                    Aggressor::Seller
                },
                seq: i as u64 % 100 + 1,
            }
        })
        .collect()
}

/// An instance keyed by trader names with its trade references.
pub type NamedInstance = (MotifKind, Vec<String>, BTreeSet<TradeRef>);

/// Enumerate every node and every node pair, scanning all edges for each.
pub fn brute_force_motifs(net: &TradingNetwork) -> Vec<NamedInstance> {
    let n = net.nodes().len() as u32;
    let edges = net.edges();
    let between = |s: u32, b: u32| -> BTreeSet<TradeRef> {
        edges
            .iter()
            .filter(|e| e.seller == s && e.buyer == b)
            .map(|e| e.trade)
            .collect()
    };
    let name = |i: u32| net.node_name(i).to_owned();
    let mut out = Vec::new();
    for i in 0..n {
        let loops = between(i, i);
        if !loops.is_empty() {
            out.push((MotifKind::A, vec![name(i)], loops));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let ij = between(i, j);
            if i < j {
                let ji = between(j, i);
                if !ij.is_empty() && !ji.is_empty() {
                    out.push((
                        MotifKind::B,
                        vec![name(i), name(j)],
                        ij.union(&ji).copied().collect(),
                    ));
                }
            }
            if ij.len() >= 2 {
                out.push((MotifKind::C, vec![name(i), name(j)], ij));
            }
        }
    }
    out.sort();
    out
}

/// (N, distinct traders) per kind, counted from brute-force instances.
pub fn brute_force_census(instances: &[NamedInstance]) -> BTreeMap<MotifKind, (u64, u64)> {
    let mut out = BTreeMap::new();
    for kind in MotifKind::ALL {
        let of: Vec<&NamedInstance> = instances.iter().filter(|i| i.0 == kind).collect();
        let traders: HashSet<&String> = of.iter().flat_map(|i| i.1.iter()).collect();
        let count = match kind {
            MotifKind::A => of.iter().map(|i| i.2.len() as u64).sum(),
            _ => of.len() as u64,
        };
        out.insert(kind, (count, traders.len() as u64));
    }
    out
}

/// Component sizes by breadth-first search over an undirected adjacency list.
pub fn bfs_components(net: &TradingNetwork) -> Vec<usize> {
    let n = net.nodes().len();
    let mut adj = vec![Vec::new(); n];
    for e in net.edges() {
        adj[e.seller as usize].push(e.buyer as usize);
        adj[e.buyer as usize].push(e.seller as usize);
    }
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut size = 0;
        while let Some(v) = queue.pop_front() {
            size += 1;
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

// ---------------------------------------------------------------------------
// Power laws
// ---------------------------------------------------------------------------

/// Discrete power-law sampler from an explicit cumulative table, with a continuous
/// approximation beyond the table.
pub struct TablePowerLaw {
    alpha: f64,
    x_min: u64,
    cdf: Vec<f64>,
    tail_mass: f64,
}

impl TablePowerLaw {
    const TABLE: u64 = 1_000_000;

    pub fn new(alpha: f64, x_min: u64) -> TablePowerLaw {
        let mut cdf = Vec::with_capacity(Self::TABLE as usize);
        let mut acc = 0.0;
        for x in x_min..x_min + Self::TABLE {
            acc += (x as f64).powf(-alpha);
            cdf.push(acc);
        }
        let edge = (x_min + Self::TABLE) as f64 - 0.5;
        let tail = edge.powf(1.0 - alpha) / (alpha - 1.0);
        let total = acc + tail;
        cdf.iter_mut().for_each(|c| *c /= total);
        TablePowerLaw {
            alpha,
            x_min,
            cdf,
            tail_mass: tail / total,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < u);
        if i < self.cdf.len() {
            return self.x_min + i as u64;
        }
        // inverse of the continuous tail beyond the table
        let v = (1.0 - u) / self.tail_mass;
        let edge = (self.x_min + Self::TABLE) as f64 - 0.5;
        (edge * v.powf(-1.0 / (self.alpha - 1.0))).round() as u64
    }
}

/// OLS slope and intercept from raw sums (normal equations).
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope, (sy - slope * sx) / n)
}

// ---------------------------------------------------------------------------
// Events and impact
// ---------------------------------------------------------------------------

/// Greedy distinct-day selection re-derived from a ranking of positions: L by rank, S by
/// reverse rank, M by distance from the median index with the larger-size side first.
pub fn reference_select(events: &[EventRef], group: SizeGroup, group_size: usize) -> Vec<EventRef> {
    let mut sorted = events.to_vec();
    sorted.sort_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then(a.day.cmp(&b.day))
            .then(a.trade.seq.cmp(&b.trade.seq))
    });
    let n = sorted.len();
    let mut order: Vec<usize> = (0..n).collect();
    match group {
        SizeGroup::L => {}
        SizeGroup::S => order.reverse(),
        SizeGroup::M => {
            let m = (n.max(1) - 1) as i64 / 2;
            order.sort_by_key(|&i| {
                let d = i as i64 - m;
                (d.abs(), d > 0)
            });
        }
    }
    let mut used_days = Vec::new();
    let mut out = Vec::new();
    for i in order {
        if out.len() >= group_size {
            break;
        }
        if !used_days.contains(&sorted[i].day) {
            used_days.push(sorted[i].day);
            out.push(sorted[i].clone());
        }
    }
    out
}

/// Benchmark ranking by a full scan of all trades (sorted by trade reference).
pub fn reference_benchmarks(
    trades: &[Trade],
    event: usize,
    events: &HashSet<usize>,
    k: usize,
) -> Vec<usize> {
    let has_window = |i: usize| {
        let d = trades[i].day;
        i >= 11 && i + 10 < trades.len() && trades[i - 11].day == d && trades[i + 10].day == d
    };
    let e = &trades[event];
    let mut cands: Vec<usize> = (0..trades.len())
        .filter(|&i| {
            trades[i].day != e.day
                && trades[i].aggressor == e.aggressor
                && !events.contains(&i)
                && has_window(i)
        })
        .collect();
    cands.sort_by_key(|&i| {
        (
            (trades[i].timestamp_ms as i64 - e.timestamp_ms as i64).abs(),
            (trades[i].day - e.day).num_days().abs(),
            trades[i].day,
            trades[i].seq,
        )
    });
    cands.truncate(k);
    cands
}

/// Returns of trades m−10..=m+10 straight from the price list, or `None` across a day.
pub fn reference_returns(trades: &[Trade], m: usize) -> Option<Vec<f64>> {
    if m < 11 || m + 10 >= trades.len() {
        return None;
    }
    let d = trades[m].day;
    if (m - 11..=m + 10).any(|j| trades[j].day != d) {
        return None;
    }
    Some(
        (m - 10..=m + 10)
            .map(|j| (trades[j].price_ticks as f64 / trades[j - 1].price_ticks as f64).ln())
            .collect(),
    )
}

/// A geometric random walk of trades: `n_days` days of `per_day` trades at prices near
/// 10^6 ticks with log-return sd `sigma`. `jumps` adds a log-return at chosen positions.
/// Timestamps are drawn on a coarse grid so that ties across days are common.
pub fn price_path_trades(
    seed: u64,
    n_days: u64,
    per_day: usize,
    sigma: f64,
    jumps: &BTreeMap<usize, f64>,
) -> Vec<Trade> {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut log_price = 1e6f64.ln();
    let mut out = Vec::with_capacity(n_days as usize * per_day);
    for d in 0..n_days {
        let mut stamps: Vec<u32> = (0..per_day)
            .map(|_| 34_200_000 + rng.random_range(0..2_000) * 1_000)
            .collect();
        stamps.sort_unstable();
        for (k, ts) in stamps.into_iter().enumerate() {
            let i = out.len();
            log_price += noise.sample(&mut rng) + jumps.get(&i).copied().unwrap_or(0.0);
            out.push(Trade {
                stock: "S".into(),
                day: day(d),
                timestamp_ms: ts,
                seller: format!("T{}", rng.random_range(0..50)),
                buyer: format!("T{}", rng.random_range(0..50)),
                price_ticks: log_price.exp().round() as u64,
                size: 100,
                aggressor: if rng.random::<bool>() {
                    Aggressor::Buyer
                } else {
                    Aggressor::Seller
                },
                seq: k as u64 + 1,
            });
        }
    }
    out
}
