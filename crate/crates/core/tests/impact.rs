use std::collections::{BTreeMap, HashSet};

use motifwatch::events::SideFilter;
use motifwatch::impact::{
    benchmark_set, excess_returns, impact_study, lag_table, stock_return_windows, BenchmarkPool,
    BenchmarkSet, StockImpactInput, TradeSeries, BENCHMARK_SIZE, MAX_LAG, N_LAGS,
};
use motifwatch::stats::one_sample_t_test;
use motifwatch::tape::{Aggressor, Trade, TradeRef};
use motifwatch_oracles::{price_path_trades, reference_benchmarks, reference_returns};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

fn pick_events(trades: &[Trade], n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set: Vec<usize> = (0..n).map(|_| rng.random_range(0..trades.len())).collect();
    set.sort_unstable();
    set.dedup();
    set
}

#[test]
fn returns_match_price_list() {
    let trades = price_path_trades(1, 6, 60, 1e-4, &BTreeMap::new());
    let series = TradeSeries::new(trades.clone());
    for m in 0..trades.len() {
        match (series.returns(m), reference_returns(&trades, m)) {
            (None, None) => {}
            (Some(a), Some(b)) => assert!(
                a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12),
                "position {m}"
            ),
            (a, b) => panic!("position {m}: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn benchmarks_match_full_scan() {
    for seed in 0..5 {
        let trades = price_path_trades(seed, 12, 80, 1e-4, &BTreeMap::new());
        let series = TradeSeries::new(trades.clone());
        let events: HashSet<usize> = pick_events(&trades, 60, seed).into_iter().collect();
        let pool = BenchmarkPool::new(&series, &events);
        for &m in &events {
            let reference = reference_benchmarks(&trades, m, &events, BENCHMARK_SIZE);
            match benchmark_set(&series, &pool, m) {
                BenchmarkSet::Full(b) => assert_eq!(b, reference),
                BenchmarkSet::Partial(b) => {
                    assert!(b.len() < BENCHMARK_SIZE);
                    assert_eq!(b, reference);
                }
                BenchmarkSet::Unavailable { candidates } => assert_eq!(candidates, reference.len()),
            }
        }
    }
}

#[test]
fn sparse_history_gives_partial_or_no_benchmarks() {
    let trades = price_path_trades(9, 3, 30, 1e-4, &BTreeMap::new());
    let series = TradeSeries::new(trades);
    let pool = BenchmarkPool::new(&series, &HashSet::new());
    let set = benchmark_set(&series, &pool, 15);
    assert!(
        matches!(
            set,
            BenchmarkSet::Partial(_) | BenchmarkSet::Unavailable { .. }
        ),
        "{set:?}"
    );
}

#[test]
fn p_values_agree_with_reference_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let n = rng.random_range(2..60);
        let shift = rng.random_range(-1.0..1.0);
        let sample: Vec<f64> = (0..n)
            .map(|_| shift + rng.random_range(-2.0..2.0))
            .collect();
        let test = one_sample_t_test(&sample).unwrap();
        let t = test.t.unwrap();
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap();
        let p = 2.0 * (1.0 - dist.cdf(t.abs()));
        assert!(
            (test.p_value - p).abs() < 1e-9,
            "n {n}: {} vs {p}",
            test.p_value
        );
    }
    assert!(one_sample_t_test(&[1.0]).is_none());
    let flat = one_sample_t_test(&[2.0; 5]).unwrap();
    assert!(flat.degenerate && flat.t.is_none() && flat.p_value == 0.0);
    assert_eq!(one_sample_t_test(&[0.0; 5]).unwrap().p_value, 1.0);
}

fn windows_for(trades: Vec<Trade>, events: &[usize]) -> Vec<motifwatch::impact::ReturnWindow> {
    let refs: Vec<TradeRef> = events.iter().map(|&i| trades[i].trade_ref()).collect();
    stock_return_windows(&StockImpactInput {
        trades,
        events: refs,
    })
    .0
}

#[test]
fn cumulative_means_sum_lag_means() {
    let trades = price_path_trades(3, 20, 200, 2e-4, &BTreeMap::new());
    let events = pick_events(&trades, 300, 3);
    let windows = windows_for(trades, &events);
    for side in [Aggressor::Buyer, Aggressor::Seller] {
        let table = lag_table(&windows, side).unwrap();
        assert_eq!(table.lags.len(), N_LAGS);
        let sum = |lo: usize, hi: usize, f: fn(&motifwatch::impact::LagStats) -> f64| -> f64 {
            table.lags[lo..=hi].iter().map(f).sum()
        };
        let pairs = [
            (0, MAX_LAG - 1),
            (MAX_LAG, MAX_LAG),
            (MAX_LAG + 1, N_LAGS - 1),
        ];
        for (c, &(lo, hi)) in table.cumulative.iter().zip(&pairs) {
            assert!((c.mean_raw - sum(lo, hi, |l| l.mean_raw)).abs() < 1e-12);
            assert!((c.mean_excess - sum(lo, hi, |l| l.mean_excess)).abs() < 1e-12);
        }
    }
}

#[test]
fn mirrored_market_flips_signs() {
    // prices dividing K mirror exactly to K / p
    const K: u64 = 720_720;
    let divisors: Vec<u64> = (1..=K)
        .filter(|d| K.is_multiple_of(*d) && (100..=10_000).contains(d))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut trades = price_path_trades(4, 10, 100, 1e-4, &BTreeMap::new());
    for t in &mut trades {
        t.price_ticks = divisors[rng.random_range(0..divisors.len())];
    }
    let mirrored: Vec<Trade> = trades
        .iter()
        .map(|t| Trade {
            price_ticks: K / t.price_ticks,
            aggressor: t.aggressor.flipped(),
            ..t.clone()
        })
        .collect();
    let events = pick_events(&trades, 80, 4);
    let a = windows_for(trades, &events);
    let b = windows_for(mirrored, &events);
    for side in [Aggressor::Buyer, Aggressor::Seller] {
        let ta = lag_table(&a, side).unwrap();
        let tb = lag_table(&b, side.flipped()).unwrap();
        for (x, y) in ta
            .lags
            .iter()
            .chain(&ta.cumulative)
            .zip(tb.lags.iter().chain(&tb.cumulative))
        {
            assert!((x.mean_raw + y.mean_raw).abs() < 1e-12);
            assert!((x.mean_excess + y.mean_excess).abs() < 1e-12);
        }
    }
}

#[test]
fn injected_jump_is_recovered() {
    let jump = 144.61e-5;
    let n_days = 40;
    let per_day = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut jumps = BTreeMap::new();
    for d in 0..n_days {
        for _ in 0..3 {
            let i = d * per_day + rng.random_range(20..per_day - 20);
            jumps.insert(i, 0.0);
        }
    }
    let probe = price_path_trades(5, n_days as u64, per_day, 1e-3, &BTreeMap::new());
    for (&i, j) in jumps.iter_mut() {
        *j = if probe[i].aggressor == Aggressor::Buyer {
            jump
        } else {
            -jump
        };
    }
    let trades = price_path_trades(5, n_days as u64, per_day, 1e-3, &jumps);
    let events: Vec<usize> = jumps.keys().copied().collect();
    let refs = events.iter().map(|&i| trades[i].trade_ref()).collect();
    let input = StockImpactInput {
        trades,
        events: refs,
    };
    let report = impact_study(std::slice::from_ref(&input), SideFilter::Both);
    let (windows, _) = stock_return_windows(&input);
    for (side, sign) in [(Aggressor::Buyer, 1.0), (Aggressor::Seller, -1.0)] {
        let table = report.table(side).unwrap();
        let lag0: Vec<f64> = windows
            .iter()
            .filter(|w| w.aggressor == side)
            .map(|w| w.excess[MAX_LAG])
            .collect();
        let test = one_sample_t_test(&lag0).unwrap();
        let se = test.std_dev / (test.n as f64).sqrt();
        assert!((table.lags[MAX_LAG].mean_excess - sign * jump).abs() < 2.0 * se);
        assert!(table.lags[MAX_LAG].mean_excess * sign > 0.0);
        assert!(table.lags[MAX_LAG].p_excess.unwrap() < 0.05);
    }
}

#[test]
fn excess_subtracts_benchmark_mean() {
    let raw = vec![1.0; N_LAGS];
    let benches = vec![vec![0.5; N_LAGS], vec![1.5; N_LAGS], vec![0.0; N_LAGS]];
    let w = excess_returns(
        TradeRef {
            day: motifwatch_oracles::day(0),
            seq: 1,
        },
        Aggressor::Buyer,
        raw,
        &benches,
    );
    assert!(w
        .benchmark_mean
        .iter()
        .all(|&v| (v - 2.0 / 3.0).abs() < 1e-15));
    assert!(w.excess.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn empty_side_is_reported_not_fatal() {
    let trades = price_path_trades(6, 5, 100, 1e-4, &BTreeMap::new());
    let report = impact_study(
        &[StockImpactInput {
            trades,
            events: Vec::new(),
        }],
        SideFilter::Both,
    );
    assert!(report
        .sides
        .iter()
        .all(|s| s.table.is_none() && s.note.is_some()));
    assert!(report.rows().is_empty());
}
