use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{validate_transport, NetError, NodeId, TransportNetwork};

/// A node of the time-expanded graph. Physical nodes sort before virtual ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TsnNode {
    Physical(NodeId),
    Virtual(u32),
}

/// Arc kinds in canonical rank order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArcKind {
    Idle,
    NormalTravel,
    CongestionTravel,
    Exit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsnArc {
    pub id: usize,
    pub kind: ArcKind,
    pub origin: TsnNode,
    pub destination: TsnNode,
    /// 1-based timespan.
    pub span: u32,
    /// kW drawn while the arc is traversed.
    pub energy: f64,
    /// Enabled when the span is congested.
    pub congested_enabled: bool,
    /// Enabled when the span is not congested.
    pub normal_enabled: bool,
}

impl TsnArc {
    pub fn is_travel(&self) -> bool {
        self.kind != ArcKind::Idle
    }

    pub fn is_always_on(&self) -> bool {
        self.congested_enabled && self.normal_enabled
    }
}

/// Intermediate node of a multi-span traversal chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualNode {
    pub id: u32,
    pub edge_origin: NodeId,
    pub edge_destination: NodeId,
    /// True for nodes on the congested chain of a congestible edge.
    pub congestion: bool,
    /// Hop count from the edge origin (1-based).
    pub hop: u32,
}

/// Flow conservation across one span boundary: arcs leaving `node` at
/// `span + 1` must carry the flow arriving at `node` during `span`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationPair {
    pub node: TsnNode,
    pub span: u32,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArcQuery {
    ConservationPairs,
    Arrivals(NodeId),
    Enabled { span: u32, congested: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArcGroups {
    Pairs(Vec<ConservationPair>),
    Arcs(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSpaceNetwork {
    pub horizon: u32,
    pub spans: u32,
    pub physical_nodes: Vec<NodeId>,
    pub virtual_nodes: Vec<VirtualNode>,
    pub arcs: Vec<TsnArc>,
    pub arcs_per_span: usize,
    pub ca: Vec<usize>,
    pub nca: Vec<usize>,
    pub always_on: Vec<usize>,
    pub travel_arcs: Vec<usize>,
    /// Idle arc of each charging station, indexed by `span - 1`.
    pub idle_cs_arcs: BTreeMap<NodeId, Vec<usize>>,
    pub conservation_pairs: Vec<ConservationPair>,
    /// A^{i+}: every arc whose origin is physical node i.
    pub arrival_sets: BTreeMap<NodeId, Vec<usize>>,
}

struct ArcTemplate {
    kind: ArcKind,
    origin: TsnNode,
    destination: TsnNode,
    energy: f64,
    congested_enabled: bool,
    normal_enabled: bool,
}

/// Expands the road network over `horizon` timesteps (`horizon - 1` spans).
///
/// Every traversal is decomposed into one-span hops through virtual
/// waypoints. The first hop of a congestible edge's normal chain is only
/// enabled without congestion, the first hop of its congested chain only
/// with congestion; every hop leaving a virtual node is an always-on exit.
pub fn build_tsn(tn: &TransportNetwork, horizon: u32) -> Result<TimeSpaceNetwork, NetError> {
    if horizon < 2 {
        return Err(NetError::InvalidHorizon(horizon));
    }
    let report = validate_transport(tn);
    if !report.is_empty() {
        return Err(NetError::Invalid(report));
    }
    let spans = horizon - 1;
    let physical_nodes = tn.sorted_nodes();

    let mut edges: Vec<_> = tn.edges.iter().collect();
    edges.sort_by_key(|e| (e.origin, e.destination));

    let mut virtual_nodes = Vec::new();
    let mut template = Vec::new();
    for &n in &physical_nodes {
        template.push(ArcTemplate {
            kind: ArcKind::Idle,
            origin: TsnNode::Physical(n),
            destination: TsnNode::Physical(n),
            energy: 0.0,
            congested_enabled: true,
            normal_enabled: true,
        });
    }
    for e in edges {
        let congestible = e.is_congestible();
        let mut chain = |hops: u32, congestion: bool, first: ArcKind, ca: bool, nca: bool| {
            let mut prev = TsnNode::Physical(e.origin);
            for hop in 1..=hops {
                let next = if hop == hops {
                    TsnNode::Physical(e.destination)
                } else {
                    let id = virtual_nodes.len() as u32;
                    virtual_nodes.push(VirtualNode {
                        id,
                        edge_origin: e.origin,
                        edge_destination: e.destination,
                        congestion,
                        hop,
                    });
                    TsnNode::Virtual(id)
                };
                let (kind, c, n) = if hop == 1 {
                    (first, ca, nca)
                } else {
                    (ArcKind::Exit, true, true)
                };
                template.push(ArcTemplate {
                    kind,
                    origin: prev,
                    destination: next,
                    energy: e.move_energy,
                    congested_enabled: c,
                    normal_enabled: n,
                });
                prev = next;
            }
        };
        chain(
            e.normal_travel_spans,
            false,
            ArcKind::NormalTravel,
            !congestible,
            true,
        );
        if congestible {
            chain(
                e.congested_travel_spans,
                true,
                ArcKind::CongestionTravel,
                true,
                false,
            );
        }
    }
    template
        .sort_by(|a, b| (a.kind, a.origin, a.destination).cmp(&(b.kind, b.origin, b.destination)));
    let arcs_per_span = template.len();

    let mut arcs = Vec::with_capacity(arcs_per_span * spans as usize);
    for span in 1..=spans {
        for t in &template {
            arcs.push(TsnArc {
                id: arcs.len(),
                kind: t.kind,
                origin: t.origin,
                destination: t.destination,
                span,
                energy: t.energy,
                congested_enabled: t.congested_enabled,
                normal_enabled: t.normal_enabled,
            });
        }
    }

    let ids = |pred: &dyn Fn(&TsnArc) -> bool| {
        arcs.iter()
            .filter(|a| pred(a))
            .map(|a| a.id)
            .collect::<Vec<_>>()
    };
    let ca = ids(&|a| a.congested_enabled);
    let nca = ids(&|a| a.normal_enabled);
    let always_on = ids(&|a| a.is_always_on());
    let travel_arcs = ids(&|a| a.is_travel());

    let mut idle_cs_arcs = BTreeMap::new();
    for c in tn.sorted_cs() {
        let v: Vec<usize> = ids(&|a| a.kind == ArcKind::Idle && a.origin == TsnNode::Physical(c));
        idle_cs_arcs.insert(c, v);
    }
    let mut arrival_sets = BTreeMap::new();
    for &n in &physical_nodes {
        arrival_sets.insert(n, ids(&|a| a.origin == TsnNode::Physical(n)));
    }

    let mut tsn = TimeSpaceNetwork {
        horizon,
        spans,
        physical_nodes,
        virtual_nodes,
        arcs,
        arcs_per_span,
        ca,
        nca,
        always_on,
        travel_arcs,
        idle_cs_arcs,
        conservation_pairs: Vec::new(),
        arrival_sets,
    };
    let mut pairs = Vec::new();
    for span in 1..spans {
        for node in tsn.all_nodes() {
            let from = tsn.departures(node, span + 1);
            let to: Vec<usize> = tsn
                .span_arcs(span)
                .iter()
                .filter(|a| a.destination == node)
                .map(|a| a.id)
                .collect();
            if !from.is_empty() || !to.is_empty() {
                pairs.push(ConservationPair {
                    node,
                    span,
                    from,
                    to,
                });
            }
        }
    }
    tsn.conservation_pairs = pairs;
    Ok(tsn)
}

impl TimeSpaceNetwork {
    pub fn all_nodes(&self) -> Vec<TsnNode> {
        self.physical_nodes
            .iter()
            .map(|&n| TsnNode::Physical(n))
            .chain(self.virtual_nodes.iter().map(|v| TsnNode::Virtual(v.id)))
            .collect()
    }

    /// Arcs of one timespan, in canonical order.
    pub fn span_arcs(&self, span: u32) -> &[TsnArc] {
        let s = (span - 1) as usize;
        &self.arcs[s * self.arcs_per_span..(s + 1) * self.arcs_per_span]
    }

    pub fn departures(&self, node: TsnNode, span: u32) -> Vec<usize> {
        self.span_arcs(span)
            .iter()
            .filter(|a| a.origin == node)
            .map(|a| a.id)
            .collect()
    }

    pub fn idle_arc(&self, node: NodeId, span: u32) -> Option<usize> {
        self.span_arcs(span)
            .iter()
            .find(|a| a.kind == ArcKind::Idle && a.origin == TsnNode::Physical(node))
            .map(|a| a.id)
    }

    /// Arcs usable during `span` under the given traffic state.
    pub fn enabled(&self, span: u32, congested: bool) -> Vec<usize> {
        self.span_arcs(span)
            .iter()
            .filter(|a| {
                if congested {
                    a.congested_enabled
                } else {
                    a.normal_enabled
                }
            })
            .map(|a| a.id)
            .collect()
    }

    pub fn arrivals(&self, node: NodeId) -> Result<&[usize], NetError> {
        self.arrival_sets
            .get(&node)
            .map(|v| v.as_slice())
            .ok_or(NetError::UnknownNode(node))
    }

    pub fn arc_groups(&self, query: ArcQuery) -> Result<ArcGroups, NetError> {
        match query {
            ArcQuery::ConservationPairs => Ok(ArcGroups::Pairs(self.conservation_pairs.clone())),
            ArcQuery::Arrivals(n) => Ok(ArcGroups::Arcs(self.arrivals(n)?.to_vec())),
            ArcQuery::Enabled { span, congested } => {
                Ok(ArcGroups::Arcs(self.enabled(span, congested)))
            }
        }
    }

    pub fn is_congestion_node(&self, node: TsnNode) -> bool {
        match node {
            TsnNode::Virtual(id) => self.virtual_nodes[id as usize].congestion,
            TsnNode::Physical(_) => false,
        }
    }

    /// Physical nodes an EV starting at `start` can occupy at the start of
    /// each span under `congestion`, with `required[s]` pinning span s when set.
    /// Returns `None` when the pins cannot be met.
    pub fn reachable(
        &self,
        start: NodeId,
        congestion: &[bool],
        required: &BTreeMap<u32, NodeId>,
    ) -> Option<Vec<Vec<TsnNode>>> {
        let mut layers: Vec<Vec<TsnNode>> = Vec::with_capacity(self.spans as usize + 1);
        let mut current = alloc::vec![TsnNode::Physical(start)];
        for span in 1..=self.spans {
            if let Some(&must) = required.get(&span) {
                let pin = TsnNode::Physical(must);
                if !current.contains(&pin) {
                    return None;
                }
                current = alloc::vec![pin];
            }
            layers.push(current.clone());
            let jam = congestion.get(span as usize - 1).copied().unwrap_or(false);
            let mut next: Vec<TsnNode> = self
                .span_arcs(span)
                .iter()
                .filter(|a| {
                    current.contains(&a.origin)
                        && if jam {
                            a.congested_enabled
                        } else {
                            a.normal_enabled
                        }
                })
                .map(|a| a.destination)
                .collect();
            next.sort();
            next.dedup();
            current = next;
        }
        layers.push(current);
        Some(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::Edge;
    use alloc::collections::BTreeSet;
    use alloc::vec;

    fn single_edge(normal: u32, congested: u32) -> TransportNetwork {
        TransportNetwork {
            nodes: vec![1, 2],
            edges: vec![Edge {
                origin: 1,
                destination: 2,
                normal_travel_spans: normal,
                congested_travel_spans: congested,
                move_energy: 3.0,
            }],
            cs_nodes: vec![1],
        }
    }

    const A: TsnNode = TsnNode::Physical(1);
    const B: TsnNode = TsnNode::Physical(2);
    const V: TsnNode = TsnNode::Virtual(0);

    #[test]
    fn single_congestible_edge_multiset() {
        let tsn = build_tsn(&single_edge(1, 2), 3).unwrap();
        assert_eq!(tsn.spans, 2);
        let got: Vec<_> = tsn
            .arcs
            .iter()
            .map(|a| (a.span, a.kind, a.origin, a.destination))
            .collect();
        let mut expected = Vec::new();
        for s in 1..=2 {
            expected.push((s, ArcKind::Idle, A, A));
            expected.push((s, ArcKind::Idle, B, B));
            expected.push((s, ArcKind::NormalTravel, A, B));
            expected.push((s, ArcKind::CongestionTravel, A, V));
            expected.push((s, ArcKind::Exit, V, B));
        }
        assert_eq!(got, expected);
        assert_eq!(tsn.virtual_nodes.len(), 1);
        assert!(tsn.virtual_nodes[0].congestion);
        let idle_energy: f64 = tsn
            .arcs
            .iter()
            .filter(|a| a.kind == ArcKind::Idle)
            .map(|a| a.energy)
            .sum();
        assert_eq!(idle_energy, 0.0);
        assert!(tsn
            .arcs
            .iter()
            .filter(|a| a.kind == ArcKind::Exit)
            .all(|a| matches!(a.origin, TsnNode::Virtual(_))));
    }

    #[test]
    fn degenerate_congestion_creates_no_virtual_node() {
        let tsn = build_tsn(&single_edge(1, 1), 4).unwrap();
        assert!(tsn.virtual_nodes.is_empty());
        assert_eq!(tsn.arcs_per_span, 3);
        let travel = tsn
            .arcs
            .iter()
            .find(|a| a.kind == ArcKind::NormalTravel)
            .unwrap();
        assert!(travel.is_always_on());
    }

    #[test]
    fn multi_span_edge_uses_waypoints() {
        let tsn = build_tsn(&single_edge(2, 3), 5).unwrap();
        // normal chain: one waypoint, congested chain: two virtual nodes
        assert_eq!(tsn.virtual_nodes.len(), 3);
        assert_eq!(tsn.arcs_per_span, 2 + 2 + 3);
        assert!(tsn
            .arcs
            .iter()
            .all(|a| a.kind != ArcKind::Exit || a.is_always_on()));
    }

    #[test]
    fn short_horizon_is_rejected() {
        assert_eq!(
            build_tsn(&single_edge(1, 2), 1),
            Err(NetError::InvalidHorizon(1))
        );
    }

    #[test]
    fn enabled_sets_and_arrivals() {
        let tsn = build_tsn(&single_edge(1, 2), 3).unwrap();
        for s in 1..=tsn.spans {
            let jam: BTreeSet<_> = tsn.enabled(s, true).into_iter().collect();
            let free: BTreeSet<_> = tsn.enabled(s, false).into_iter().collect();
            let on: BTreeSet<_> = tsn
                .span_arcs(s)
                .iter()
                .filter(|a| a.is_always_on())
                .map(|a| a.id)
                .collect();
            assert_eq!(
                jam.intersection(&free).copied().collect::<BTreeSet<_>>(),
                on
            );
        }
        // arcs leaving node 2 are its idle arcs only
        let b_idle: Vec<usize> = tsn
            .arcs
            .iter()
            .filter(|a| a.kind == ArcKind::Idle && a.origin == B)
            .map(|a| a.id)
            .collect();
        assert_eq!(tsn.arrivals(2).unwrap(), b_idle.as_slice());
        let a_out: Vec<usize> = tsn
            .arcs
            .iter()
            .filter(|a| a.origin == A)
            .map(|a| a.id)
            .collect();
        assert_eq!(tsn.arrivals(1).unwrap(), a_out.as_slice());
        assert_eq!(tsn.arrivals(7), Err(NetError::UnknownNode(7)));
    }

    #[test]
    fn each_arc_in_exactly_one_to_set_per_boundary() {
        let tsn = build_tsn(&single_edge(2, 3), 6).unwrap();
        for s in 1..tsn.spans {
            let mut count = BTreeMap::new();
            for p in tsn.conservation_pairs.iter().filter(|p| p.span == s) {
                for &a in &p.to {
                    *count.entry(a).or_insert(0) += 1;
                }
            }
            for a in tsn.span_arcs(s) {
                assert_eq!(count.get(&a.id), Some(&1), "arc {} at boundary {}", a.id, s);
            }
        }
    }

    #[test]
    fn reachability_respects_congestion() {
        let tsn = build_tsn(&single_edge(1, 2), 4).unwrap();
        let mut req = BTreeMap::new();
        req.insert(2, 2);
        assert!(tsn.reachable(1, &[false, false, false], &req).is_some());
        assert!(tsn.reachable(1, &[true, false, false], &req).is_none());
        req.clear();
        req.insert(3, 2);
        assert!(tsn.reachable(1, &[true, false, false], &req).is_some());
    }
}
