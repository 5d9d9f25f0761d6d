use std::collections::{BTreeSet, HashSet};
use std::time::Instant;

use motifwatch::network::{
    build_network, cluster_sizes, detect_motifs, edge_count_sample, motif_subnetwork, MotifCensus,
    MotifKind, TradingNetwork,
};
use motifwatch::tape::{Aggressor, Trade, TradeRef};
use motifwatch_oracles::{
    bfs_components, brute_force_census, brute_force_motifs, day, random_trades, NamedInstance,
};
use proptest::prelude::*;

fn named(net: &TradingNetwork) -> Vec<NamedInstance> {
    let mut out: Vec<NamedInstance> = detect_motifs(net)
        .instances
        .iter()
        .map(|i| {
            (
                i.kind,
                i.traders
                    .iter()
                    .map(|&n| net.node_name(n).to_owned())
                    .collect(),
                i.edges.iter().map(|&e| net.edges()[e].trade).collect(),
            )
        })
        .collect();
    out.sort();
    out
}

fn census_matches(census: &MotifCensus, instances: &[NamedInstance]) -> bool {
    let oracle = brute_force_census(instances);
    MotifKind::ALL.iter().all(|&k| {
        let (count, traders) = oracle[&k];
        let c = census.kind(k);
        let measure = if k == MotifKind::A {
            traders as f64
        } else {
            traders as f64 / 2.0
        };
        c.motifs == count && c.traders == traders && c.trader_measure == measure
    })
}

fn trade(i: usize, seller: &str, buyer: &str) -> Trade {
    Trade {
        stock: "S".into(),
        day: day(0),
        timestamp_ms: i as u32,
        seller: seller.into(),
        buyer: buyer.into(),
        price_ticks: 1,
        size: 1,
        aggressor: Aggressor::Buyer,
        seq: i as u64 + 1,
    }
}

#[test]
fn detection_matches_pair_enumeration() {
    let start = Instant::now();
    for seed in 0..100 {
        let trades = random_trades(seed, 50, 500);
        let net = build_network(&trades);
        let rep = detect_motifs(&net);
        let oracle = brute_force_motifs(&net);
        assert_eq!(named(&net), oracle, "seed {seed}");
        assert!(census_matches(&rep.census, &oracle), "seed {seed}");
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn nodes_and_edges_match_direct_scan() {
    let trades = random_trades(3, 50, 1_000);
    let net = build_network(&trades);
    let ids: BTreeSet<&str> = trades
        .iter()
        .flat_map(|t| [t.seller.as_str(), t.buyer.as_str()])
        .collect();
    assert_eq!(
        net.nodes()
            .iter()
            .map(String::as_str)
            .collect::<BTreeSet<_>>(),
        ids
    );
    assert_eq!(net.edges().len(), trades.len());
}

#[test]
fn subnetworks_and_clusters_match_oracles() {
    for seed in 0..50 {
        let net = build_network(&random_trades(seed, 50, 500));
        let oracle = brute_force_motifs(&net);
        for kind in MotifKind::ALL {
            let sub = motif_subnetwork(&net, kind);
            let want: BTreeSet<TradeRef> = oracle
                .iter()
                .filter(|i| i.0 == kind)
                .flat_map(|i| i.2.iter().copied())
                .collect();
            let got: BTreeSet<TradeRef> = sub.edges().iter().map(|e| e.trade).collect();
            assert_eq!(got, want, "seed {seed} kind {kind}");
            assert_eq!(cluster_sizes(&sub), bfs_components(&sub));
        }
        assert_eq!(cluster_sizes(&net), bfs_components(&net));
    }
}

#[test]
fn injected_multiplicities_are_recovered() {
    let multiplicities = [2usize, 7, 3, 3, 12, 2, 5];
    let mut trades = Vec::new();
    for (k, &m) in multiplicities.iter().enumerate() {
        for _ in 0..m {
            trades.push(trade(trades.len(), &format!("P{k}"), &format!("Q{k}")));
        }
    }
    // one-off background trades between fresh accounts
    for i in 0..100 {
        trades.push(trade(trades.len(), &format!("X{i}"), &format!("Y{i}")));
    }
    let rep = detect_motifs(&build_network(&trades));
    let mut got = edge_count_sample(&rep.instances, MotifKind::C).unwrap();
    let mut want: Vec<u64> = multiplicities.iter().map(|&m| m as u64).collect();
    got.sort_unstable();
    want.sort_unstable();
    assert_eq!(got, want);
}

#[test]
fn detection_scales_linearly() {
    let edges = |n: usize| -> Vec<Trade> {
        let mut rng_state = 0x9e37_79b9_7f4a_7c15u64;
        (0..n)
            .map(|i| {
                rng_state = rng_state
                    .wrapping_mul(6_364_136_223_846_793_005)
                    .wrapping_add(1_442_695_040_888_963_407);
                let s = (rng_state >> 33) % 200_000;
                let b = (rng_state >> 13) % 200_000;
                trade(i, &format!("{s}"), &format!("{b}"))
            })
            .collect()
    };
    let time = |n: usize| {
        let net = build_network(&edges(n));
        let t = Instant::now();
        let rep = detect_motifs(&net);
        std::hint::black_box(rep);
        t.elapsed().as_secs_f64()
    };
    time(50_000);
    let (small, large) = (time(250_000), time(500_000));
    assert!(large / small < 3.0, "{small} s then {large} s");
}

proptest! {
    #[test]
    fn census_is_consistent_and_restriction_idempotent(seed in 0u64..100_000) {
        let net = build_network(&random_trades(seed, 12, 80));
        let rep = detect_motifs(&net);
        prop_assert_eq!(MotifCensus::from_instances(&rep.instances), rep.census);
        for kind in MotifKind::ALL {
            let c = rep.census.kind(kind);
            prop_assert!(c.trader_measure <= c.motifs as f64);
            let of: Vec<_> = rep.instances.iter().filter(|i| i.kind == kind).collect();
            let disjoint = {
                let mut seen = HashSet::new();
                of.iter().all(|i| i.traders.iter().all(|t| seen.insert(*t)))
                    && (kind != MotifKind::A || of.iter().all(|i| i.n_edges() == 1))
            };
            prop_assert_eq!(c.trader_measure == c.motifs as f64, disjoint);
            let sub = motif_subnetwork(&net, kind);
            let again = named(&sub);
            let before: Vec<NamedInstance> = named(&net).into_iter().filter(|i| i.0 == kind).collect();
            for inst in &before {
                prop_assert!(again.contains(inst));
            }
        }
    }

    #[test]
    fn heavy_pairs_give_one_b_and_two_c(forward in 2usize..6, backward in 2usize..6) {
        let mut trades = Vec::new();
        for _ in 0..forward { trades.push(trade(trades.len(), "X", "Y")); }
        for _ in 0..backward { trades.push(trade(trades.len(), "Y", "X")); }
        let c = detect_motifs(&build_network(&trades)).census;
        prop_assert_eq!((c.b.motifs, c.c.motifs), (1, 2));
    }
}
