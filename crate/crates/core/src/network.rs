//! Per-stock trading networks and the three abnormal two-node motifs.
//!
//! Every trade is a directed edge from seller to buyer; parallel edges and self-loops are
//! kept. Motifs:
//!
//! * **A**, self-loop: a trader on both sides of a trade. One instance per trader; the
//!   census counts self-loop *edges*.
//! * **B**, two-node loop: an unordered pair with at least one edge in each direction.
//! * **C**, two-node multiple arcs: an ordered pair with at least two parallel edges.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::CsvHeader;
use crate::tape::{Aggressor, Trade, TradeRef};

pub type NodeId = u32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub seller: NodeId,
    pub buyer: NodeId,
    pub trade: TradeRef,
    pub timestamp_ms: u32,
    pub price_ticks: u64,
    pub size: u64,
    pub aggressor: Aggressor,
}

/// Directed multigraph over trader ids. Node ids index `nodes`, which is sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TradingNetwork {
    nodes: Vec<String>,
    edges: Vec<Edge>,
}

impl TradingNetwork {
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id as usize]
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Build a network from a list of edges given by trader name.
    fn from_named_edges(edges: Vec<(&str, &str, Edge)>) -> Self {
        let names: BTreeSet<&str> = edges.iter().flat_map(|&(s, b, _)| [s, b]).collect();
        let nodes: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let ids: HashMap<&str, NodeId> = names
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, i as NodeId))
            .collect();
        let edges = edges
            .into_iter()
            .map(|(s, b, e)| Edge {
                seller: ids[s],
                buyer: ids[b],
                ..e
            })
            .collect();
        TradingNetwork { nodes, edges }
    }

    pub fn edge_rows(&self) -> Vec<EdgeRow> {
        self.edges
            .iter()
            .map(|e| EdgeRow {
                seller: self.node_name(e.seller).to_owned(),
                buyer: self.node_name(e.buyer).to_owned(),
                seq: e.trade,
            })
            .collect()
    }
}

/// One edge per trade; nodes are every trader that bought or sold. Edges follow the
/// order of `trades`.
pub fn build_network(trades: &[Trade]) -> TradingNetwork {
    let named = trades.iter().map(|t| {
        (
            t.seller.as_str(),
            t.buyer.as_str(),
            Edge {
                seller: 0,
                buyer: 0,
                trade: t.trade_ref(),
                timestamp_ms: t.timestamp_ms,
                price_ticks: t.price_ticks,
                size: t.size,
                aggressor: t.aggressor,
            },
        )
    });
    TradingNetwork::from_named_edges(named.collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotifKind {
    A,
    B,
    C,
}

impl MotifKind {
    pub const ALL: [MotifKind; 3] = [MotifKind::A, MotifKind::B, MotifKind::C];
}

impl fmt::Display for MotifKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for MotifKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(MotifKind::A),
            "B" | "b" => Ok(MotifKind::B),
            "C" | "c" => Ok(MotifKind::C),
            _ => Err(Error::Usage(format!("unknown motif kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotifInstance {
    pub kind: MotifKind,
    /// A: the trader. B: the pair, lower id first. C: seller then buyer.
    pub traders: Vec<NodeId>,
    /// Indices into the network's edge list, ascending.
    pub edges: Vec<usize>,
}

impl MotifInstance {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
}

/// Occurrence and trader counts for one motif kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KindCensus {
    /// Motif occurrences. For A this is the number of self-loop edges.
    pub motifs: u64,
    /// Distinct traders involved.
    pub traders: u64,
    /// Trader count for A; half the trader count for B and C (pairs equivalent).
    pub trader_measure: f64,
}

impl KindCensus {
    /// True when two motifs share a trader, i.e. the trader measure falls below the count.
    pub fn overlapping(&self) -> bool {
        self.trader_measure < self.motifs as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotifCensus {
    #[serde(rename = "A")]
    pub a: KindCensus,
    #[serde(rename = "B")]
    pub b: KindCensus,
    #[serde(rename = "C")]
    pub c: KindCensus,
}

impl MotifCensus {
    pub fn kind(&self, kind: MotifKind) -> &KindCensus {
        match kind {
            MotifKind::A => &self.a,
            MotifKind::B => &self.b,
            MotifKind::C => &self.c,
        }
    }

    fn kind_mut(&mut self, kind: MotifKind) -> &mut KindCensus {
        match kind {
            MotifKind::A => &mut self.a,
            MotifKind::B => &mut self.b,
            MotifKind::C => &mut self.c,
        }
    }

    /// Recompute the census from a list of instances.
    pub fn from_instances(instances: &[MotifInstance]) -> MotifCensus {
        let mut census = MotifCensus::default();
        for kind in MotifKind::ALL {
            let of_kind = instances.iter().filter(|i| i.kind == kind);
            let traders: BTreeSet<NodeId> = of_kind
                .clone()
                .flat_map(|i| i.traders.iter().copied())
                .collect();
            let motifs = match kind {
                MotifKind::A => of_kind.map(|i| i.edges.len() as u64).sum(),
                _ => of_kind.count() as u64,
            };
            let n = traders.len() as u64;
            *census.kind_mut(kind) = KindCensus {
                motifs,
                traders: n,
                trader_measure: match kind {
                    MotifKind::A => n as f64,
                    _ => n as f64 / 2.0,
                },
            };
        }
        census
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MotifReport {
    pub instances: Vec<MotifInstance>,
    pub census: MotifCensus,
}

/// Edge index lists keyed by ordered (seller, buyer) pair, built in one pass.
struct PairGroups {
    /// pair -> (first edge, last edge, count)
    heads: HashMap<(NodeId, NodeId), (u32, u32, u32)>,
    next: Vec<u32>,
}

impl PairGroups {
    const END: u32 = u32::MAX;

    fn new(net: &TradingNetwork) -> Self {
        assert!(
            net.edges.len() < Self::END as usize,
            "too many edges for one network"
        );
        let mut heads: HashMap<(NodeId, NodeId), (u32, u32, u32)> =
            HashMap::with_capacity(net.edges.len());
        let mut next = vec![Self::END; net.edges.len()];
        for (i, e) in net.edges.iter().enumerate() {
            let i = i as u32;
            heads
                .entry((e.seller, e.buyer))
                .and_modify(|(_, tail, n)| {
                    next[*tail as usize] = i;
                    *tail = i;
                    *n += 1;
                })
                .or_insert((i, i, 1));
        }
        PairGroups { heads, next }
    }

    fn edges(&self, head: u32) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(head), move |&i| {
            Some(self.next[i as usize]).filter(|&n| n != Self::END)
        })
        .map(|i| i as usize)
    }
}

/// Find all A, B and C instances and their census in time linear in the edge count.
/// Instances are ordered by kind, then by trader ids.
pub fn detect_motifs(net: &TradingNetwork) -> MotifReport {
    let groups = PairGroups::new(net);
    let mut instances = Vec::new();
    for (&(s, b), &(head, _, count)) in &groups.heads {
        if s == b {
            instances.push(MotifInstance {
                kind: MotifKind::A,
                traders: vec![s],
                edges: groups.edges(head).collect(),
            });
            continue;
        }
        if count >= 2 {
            instances.push(MotifInstance {
                kind: MotifKind::C,
                traders: vec![s, b],
                edges: groups.edges(head).collect(),
            });
        }
        if s < b {
            if let Some(&(back, _, _)) = groups.heads.get(&(b, s)) {
                let mut edges: Vec<usize> = groups.edges(head).chain(groups.edges(back)).collect();
                edges.sort_unstable();
                instances.push(MotifInstance {
                    kind: MotifKind::B,
                    traders: vec![s, b],
                    edges,
                });
            }
        }
    }
    instances.sort_unstable_by(|x, y| (x.kind, &x.traders).cmp(&(y.kind, &y.traders)));
    let census = MotifCensus::from_instances(&instances);
    MotifReport { instances, census }
}

/// Restrict a network to the edges of the given instances of one kind, and their endpoints.
pub fn subnetwork_of(
    net: &TradingNetwork,
    instances: &[MotifInstance],
    kind: MotifKind,
) -> TradingNetwork {
    let keep: BTreeSet<usize> = instances
        .iter()
        .filter(|i| i.kind == kind)
        .flat_map(|i| i.edges.iter().copied())
        .collect();
    let named = keep.into_iter().map(|i| {
        let e = &net.edges[i];
        (net.node_name(e.seller), net.node_name(e.buyer), e.clone())
    });
    TradingNetwork::from_named_edges(named.collect())
}

pub fn motif_subnetwork(net: &TradingNetwork, kind: MotifKind) -> TradingNetwork {
    subnetwork_of(net, &detect_motifs(net).instances, kind)
}

/// Disjoint sets with union by size and path halving.
struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Node counts of the weakly connected components, largest first.
pub fn cluster_sizes(net: &TradingNetwork) -> Vec<usize> {
    let mut sets = DisjointSets::new(net.nodes.len());
    for e in &net.edges {
        sets.union(e.seller as usize, e.buyer as usize);
    }
    let mut sizes: Vec<usize> = (0..net.nodes.len())
        .filter_map(|i| {
            if sets.find(i) == i {
                Some(sets.size[i])
            } else {
                None
            }
        })
        .collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Parallel-edge multiplicities of every C instance.
pub fn edge_count_sample(instances: &[MotifInstance], kind: MotifKind) -> Result<Vec<u64>> {
    if kind != MotifKind::C {
        return Err(Error::Usage(format!(
            "edge-count samples are defined for motif C only, not {kind}"
        )));
    }
    Ok(instances
        .iter()
        .filter(|i| i.kind == MotifKind::C)
        .map(|i| i.n_edges() as u64)
        .collect())
}

/// Edge indices belonging to at least one instance, ascending.
pub fn motif_edges(instances: &[MotifInstance]) -> Vec<usize> {
    let set: BTreeSet<usize> = instances
        .iter()
        .flat_map(|i| i.edges.iter().copied())
        .collect();
    set.into_iter().collect()
}

/// Edge-list export row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub seller: String,
    pub buyer: String,
    pub seq: TradeRef,
}

impl CsvHeader for EdgeRow {
    const HEADER: &'static [&'static str] = &["seller", "buyer", "seq"];
}
