use chrono::NaiveDate;
use motifwatch::events::{
    deseasonalize, event_dynamics_exponents, event_study, extract_window, group_average,
    intraday_pattern, select_events, EventRef, EventStudyConfig, EventWindow, MinuteGrid,
    SideFilter, SizeGroup, StockEvents, HALF_WINDOW, WINDOW_LEN,
};
use motifwatch::powerlaw::FitRange;
use motifwatch::tape::{Aggressor, MinuteBar, TradeRef, Variable};
use motifwatch_oracles::{day, reference_select};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MINUTES: usize = 240;

fn grid(days: usize, mut f: impl FnMut(usize, usize) -> f64) -> MinuteGrid {
    let mut values = Vec::with_capacity(days * MINUTES);
    for d in 0..days {
        for m in 1..=MINUTES {
            values.push(f(d, m));
        }
    }
    MinuteGrid {
        stock: "S".into(),
        variable: Variable::Volume,
        days: (0..days as u64).map(day).collect(),
        values,
    }
}

fn event(d: NaiveDate, minute: usize, seq: u64, size: u64, aggressor: Aggressor) -> EventRef {
    EventRef {
        stock: "S".into(),
        day: d,
        minute,
        trade: TradeRef { day: d, seq },
        timestamp_ms: 0,
        size,
        normalized_size: size as f64,
        aggressor,
    }
}

fn bars(days: usize, volume: impl Fn(usize, usize) -> u64) -> Vec<MinuteBar> {
    let mut out = Vec::new();
    for d in 0..days {
        for minute in 1..=MINUTES {
            let v = volume(d, minute);
            out.push(MinuteBar {
                stock: "S".into(),
                day: day(d as u64),
                minute,
                volatility: 0.0,
                volume: v,
                avg_trade_size: v as f64,
                turnover: v * 10,
                n_trades: u64::from(v > 0),
                mid_close: Some(10.0),
            });
        }
    }
    out
}

#[test]
fn pattern_is_the_per_minute_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = grid(30, |_, _| rng.random_range(0.0..500.0));
    let p = intraday_pattern(&g);
    assert_eq!(p.n_days, 30);
    for m in 1..=MINUTES {
        let mut sum = 0.0;
        for d in 0..30 {
            sum += g.get(d, m);
        }
        assert!((p.values[m - 1] - sum / 30.0).abs() < 1e-12);
    }
    let r = deseasonalize(&g, &p);
    for d in 0..30 {
        for m in 1..=MINUTES {
            assert!((r.get(d, m) * p.values[m - 1] - g.get(d, m)).abs() < 1e-9);
        }
    }
    let again = deseasonalize(&r, &intraday_pattern(&r));
    for (a, b) in again.values.iter().zip(&r.values) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn constant_input_deseasonalizes_to_one() {
    for c in [0.0, 1.0, 37.5, 1e6] {
        let g = grid(10, |_, _| c);
        let r = deseasonalize(&g, &intraday_pattern(&g));
        assert!(r.values.iter().all(|v| (v - 1.0).abs() <= 1e-12));
    }
}

#[test]
fn selection_matches_reference() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events: Vec<EventRef> = (0..500)
            .map(|i| {
                let d = day(rng.random_range(0..250));
                event(
                    d,
                    rng.random_range(1..=MINUTES),
                    i + 1,
                    rng.random_range(1..60) * 100,
                    Aggressor::Buyer,
                )
            })
            .collect();
        for group in SizeGroup::ALL {
            for size in [1, 20, 100, 400] {
                let ours = select_events(&events, group, size);
                assert_eq!(
                    ours,
                    reference_select(&events, group, size),
                    "seed {seed} {group} {size}"
                );
            }
        }
    }
}

#[test]
fn windows_cross_day_boundaries() {
    let g = grid(12, |d, m| (d * 1000 + m) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let d = rng.random_range(0..12);
        let minute = rng.random_range(1..=MINUTES);
        let e = event(day(d as u64), minute, 1, 100, Aggressor::Buyer);
        let center = d as i64 * MINUTES as i64 + minute as i64 - 1;
        let fits = center >= HALF_WINDOW && center + HALF_WINDOW < (12 * MINUTES) as i64;
        match extract_window(&g, &e) {
            None => assert!(!fits),
            Some(w) => {
                assert!(fits);
                assert_eq!(w.trajectory.len(), WINDOW_LEN);
                for (k, v) in w.trajectory.iter().enumerate() {
                    let global = center - HALF_WINDOW + k as i64;
                    let (wd, wm) = (global as usize / MINUTES, global as usize % MINUTES + 1);
                    assert_eq!(*v, (wd * 1000 + wm) as f64);
                }
                assert_eq!(
                    w.trajectory[HALF_WINDOW as usize],
                    (d * 1000 + minute) as f64
                );
            }
        }
    }
    assert!(extract_window(&g, &event(day(40), 10, 1, 1, Aggressor::Buyer)).is_none());
}

fn window(trajectory: Vec<f64>) -> EventWindow {
    EventWindow {
        event: event(day(0), 1, 1, 1, Aggressor::Buyer),
        variable: Variable::Volume,
        trajectory,
    }
}

#[test]
fn averages_are_pointwise_means() {
    let ones: Vec<EventWindow> = (0..20).map(|_| window(vec![1.0; WINDOW_LEN])).collect();
    assert!(group_average(&ones).unwrap().iter().all(|&v| v == 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let windows: Vec<EventWindow> = (0..50)
        .map(|_| {
            window(
                (0..WINDOW_LEN)
                    .map(|_| rng.random_range(0.0..10.0))
                    .collect(),
            )
        })
        .collect();
    let mean = group_average(&windows).unwrap();
    for t in 0..WINDOW_LEN {
        let naive = windows.iter().map(|w| w.trajectory[t]).sum::<f64>() / 50.0;
        assert!((mean[t] - naive).abs() < 1e-12);
    }
    assert!(group_average(&[]).is_err());
}

#[test]
fn exact_power_law_trajectories() {
    for beta in [0.111, 0.217] {
        let traj: Vec<f64> = (-HALF_WINDOW..=HALF_WINDOW)
            .map(|t| (t.abs().max(1) as f64).powf(-beta))
            .collect();
        let windows: Vec<EventWindow> = (0..5).map(|_| window(traj.clone())).collect();
        let d = event_dynamics_exponents(&group_average(&windows).unwrap(), FitRange::default())
            .unwrap();
        assert!((d.pre.beta - beta).abs() < 1e-9);
        assert!((d.post.beta - beta).abs() < 1e-9);
    }
}

#[test]
fn event_study_on_flat_market() {
    let n_days = 30;
    let stock = StockEvents {
        bars: bars(n_days, |_, m| 100 + m as u64),
        events: (2..28)
            .map(|d| {
                let aggressor = if d % 2 == 0 {
                    Aggressor::Buyer
                } else {
                    Aggressor::Seller
                };
                event(day(d), 120, 1, d * 100, aggressor)
            })
            .collect(),
    };
    let config = EventStudyConfig {
        variables: vec![Variable::Volume, Variable::Turnover],
        group_size: 5,
        ..EventStudyConfig::default()
    };
    let report = event_study(std::slice::from_ref(&stock), &config).unwrap();
    assert_eq!(report.groups.len(), 6);
    for g in &report.groups {
        assert_eq!(g.n_events, 5);
        assert!(g.trajectory.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert_eq!(g.beta_pre, Some(0.0));
        assert_eq!(g.beta_post, Some(0.0));
    }
    let large = report.group(SizeGroup::L, Variable::Volume).unwrap();
    assert_eq!(
        large.mean_normalized_size,
        Some((27 + 26 + 25 + 24 + 23) as f64 * 100.0 / 5.0)
    );
    let buyers = event_study(
        &[stock],
        &EventStudyConfig {
            side: SideFilter::Buyer,
            ..config
        },
    )
    .unwrap();
    let large = buyers.group(SizeGroup::L, Variable::Volume).unwrap();
    assert_eq!(
        large.mean_normalized_size,
        Some((26 + 24 + 22 + 20 + 18) as f64 * 100.0 / 5.0)
    );
    assert_eq!(report.trajectory_rows().len(), 6 * WINDOW_LEN);
}

#[test]
fn edge_events_are_counted_unavailable() {
    let stock = StockEvents {
        bars: bars(3, |_, _| 5),
        events: vec![
            event(day(0), 1, 1, 500, Aggressor::Buyer),
            event(day(1), 120, 1, 100, Aggressor::Buyer),
        ],
    };
    let config = EventStudyConfig {
        variables: vec![Variable::Volume],
        ..EventStudyConfig::default()
    };
    let report = event_study(&[stock], &config).unwrap();
    let large = report.group(SizeGroup::L, Variable::Volume).unwrap();
    assert_eq!((large.n_events, large.n_unavailable), (1, 1));
    let empty = event_study(&[], &config).unwrap();
    assert!(empty
        .groups
        .iter()
        .all(|g| g.n_events == 0 && g.note.is_some() && g.beta_pre.is_none()));
}

proptest! {
    #[test]
    fn deseasonalized_minutes_average_to_one(
        values in prop::collection::vec(0.0f64..1e4, 5 * MINUTES),
    ) {
        let g = grid(5, |d, m| values[d * MINUTES + m - 1]);
        let p = intraday_pattern(&g);
        let r = deseasonalize(&g, &p);
        prop_assert!(r.values.iter().all(|&v| v >= 0.0));
        let rp = intraday_pattern(&r);
        for (m, v) in rp.values.iter().enumerate() {
            if p.values[m] > 0.0 {
                prop_assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }
}
