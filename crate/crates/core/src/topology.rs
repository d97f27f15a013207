//! AS relationship graph, Gao-Rexford route propagation, origin hijacks and
//! hijack resilience.
//!
//! Internally every AS is addressed by a dense index. Indices are assigned in
//! ascending AS-number order, so comparing indices is the same as comparing
//! AS numbers; the lowest-next-hop tie-break relies on this.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

/// An autonomous system number. Always `>= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AsId(u32);

impl AsId {
    pub fn new(value: u32) -> Option<AsId> {
        (value >= 1).then_some(AsId(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

impl From<AsId> for u32 {
    fn from(id: AsId) -> u32 {
        id.0
    }
}

impl fmt::Display for AsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for AsId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let s = s.strip_prefix("AS").unwrap_or(s);
        let v: u32 = s.parse().map_err(|_| format!("invalid AS number `{s}`"))?;
        AsId::new(v).ok_or_else(|| "AS number must be >= 1".to_string())
    }
}

/// Shorthand used heavily in tests and fixtures. Panics on 0.
pub fn asn(value: u32) -> AsId {
    AsId::new(value).expect("AS number must be >= 1")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelKind {
    /// `a` is a provider of `b`.
    ProviderCustomer,
    PeerPeer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Relationship {
    pub a: AsId,
    pub b: AsId,
    pub kind: RelKind,
}

impl Relationship {
    pub fn provider_customer(provider: AsId, customer: AsId) -> Self {
        Relationship { a: provider, b: customer, kind: RelKind::ProviderCustomer }
    }

    pub fn peer(a: AsId, b: AsId) -> Self {
        Relationship { a, b, kind: RelKind::PeerPeer }
    }

    fn unordered_key(&self) -> (AsId, AsId) {
        if self.a < self.b {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }
}

/// Role of a directed hop `x -> y` seen from `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRole {
    /// `y` is a provider of `x` (uphill).
    ToProvider,
    ToPeer,
    /// `y` is a customer of `x` (downhill).
    ToCustomer,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("conflicting relationships for AS pair {0}-{1}")]
    Conflict(AsId, AsId),
    #[error("self-loop on AS{0}")]
    SelfLoop(AsId),
    #[error("provider-customer cycle involving AS{0}")]
    ProviderCycle(AsId),
    #[error("unknown AS{0}")]
    UnknownAs(AsId),
    #[error("source and destination must differ (AS{0})")]
    SameEndpoints(AsId),
}

/// An ordered AS sequence from source to destination, both inclusive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AsPath(Vec<AsId>);

impl AsPath {
    pub fn new(ases: Vec<AsId>) -> Self {
        AsPath(ases)
    }

    pub fn ases(&self) -> &[AsId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn source(&self) -> Option<AsId> {
        self.0.first().copied()
    }

    pub fn destination(&self) -> Option<AsId> {
        self.0.last().copied()
    }

    pub fn contains(&self, id: AsId) -> bool {
        self.0.contains(&id)
    }

    /// 1-based position of `id` on the path.
    pub fn position(&self, id: AsId) -> Option<usize> {
        self.0.iter().position(|&x| x == id).map(|i| i + 1)
    }

    /// Second-to-last AS; a two-AS path yields its source.
    pub fn penultimate(&self) -> Option<AsId> {
        (self.0.len() >= 2).then(|| self.0[self.0.len() - 2])
    }
}

impl From<Vec<AsId>> for AsPath {
    fn from(v: Vec<AsId>) -> Self {
        AsPath(v)
    }
}

impl fmt::Display for AsPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Immutable annotated AS-relationship graph.
#[derive(Debug, Clone)]
pub struct AsGraph {
    ids: Vec<AsId>,
    index: HashMap<AsId, usize>,
    customers: Vec<Vec<usize>>,
    providers: Vec<Vec<usize>>,
    peers: Vec<Vec<usize>>,
    edges: Vec<Relationship>,
    /// Providers before customers.
    topo_order: Vec<usize>,
}

impl AsGraph {
    /// Builds a graph from relationships plus optional extra (possibly
    /// isolated) nodes. Exact duplicate relationships are merged.
    pub fn new(
        nodes: impl IntoIterator<Item = AsId>,
        relationships: impl IntoIterator<Item = Relationship>,
    ) -> Result<AsGraph, TopologyError> {
        let mut seen: HashMap<(AsId, AsId), Relationship> = HashMap::new();
        let mut edges = Vec::new();
        let mut node_set: BTreeSet<AsId> = nodes.into_iter().collect();
        for rel in relationships {
            if rel.a == rel.b {
                return Err(TopologyError::SelfLoop(rel.a));
            }
            let canonical = match rel.kind {
                RelKind::PeerPeer => {
                    let (a, b) = rel.unordered_key();
                    Relationship::peer(a, b)
                }
                RelKind::ProviderCustomer => rel,
            };
            match seen.get(&rel.unordered_key()) {
                Some(existing) if *existing == canonical => continue,
                Some(_) => {
                    let (a, b) = rel.unordered_key();
                    return Err(TopologyError::Conflict(a, b));
                }
                None => {
                    seen.insert(rel.unordered_key(), canonical);
                    node_set.insert(rel.a);
                    node_set.insert(rel.b);
                    edges.push(canonical);
                }
            }
        }
        let ids: Vec<AsId> = node_set.into_iter().collect();
        let index: HashMap<AsId, usize> = ids.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let n = ids.len();
        let mut customers = vec![Vec::new(); n];
        let mut providers = vec![Vec::new(); n];
        let mut peers = vec![Vec::new(); n];
        for e in &edges {
            let (a, b) = (index[&e.a], index[&e.b]);
            match e.kind {
                RelKind::ProviderCustomer => {
                    customers[a].push(b);
                    providers[b].push(a);
                }
                RelKind::PeerPeer => {
                    peers[a].push(b);
                    peers[b].push(a);
                }
            }
        }
        for list in customers.iter_mut().chain(providers.iter_mut()).chain(peers.iter_mut()) {
            list.sort_unstable();
        }
        edges.sort();

        // Kahn's algorithm from the top of the hierarchy downwards.
        let mut remaining: Vec<usize> = providers.iter().map(|p| p.len()).collect();
        let mut stack: Vec<usize> = (0..n).rev().filter(|&i| remaining[i] == 0).collect();
        let mut topo_order = Vec::with_capacity(n);
        while let Some(x) = stack.pop() {
            topo_order.push(x);
            for &c in customers[x].iter().rev() {
                remaining[c] -= 1;
                if remaining[c] == 0 {
                    stack.push(c);
                }
            }
        }
        if topo_order.len() != n {
            let stuck = (0..n).find(|&i| remaining[i] > 0).expect("cycle member");
            return Err(TopologyError::ProviderCycle(ids[stuck]));
        }

        Ok(AsGraph { ids, index, customers, providers, peers, edges, topo_order })
    }

    pub fn from_relationships(
        relationships: impl IntoIterator<Item = Relationship>,
    ) -> Result<AsGraph, TopologyError> {
        AsGraph::new(std::iter::empty(), relationships)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// All ASes in ascending order.
    pub fn ases(&self) -> &[AsId] {
        &self.ids
    }

    pub fn relationships(&self) -> &[Relationship] {
        &self.edges
    }

    pub fn contains(&self, id: AsId) -> bool {
        self.index.contains_key(&id)
    }

    pub(crate) fn idx(&self, id: AsId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub(crate) fn id_at(&self, idx: usize) -> AsId {
        self.ids[idx]
    }

    fn require(&self, id: AsId) -> Result<usize, TopologyError> {
        self.idx(id).ok_or(TopologyError::UnknownAs(id))
    }

    pub(crate) fn customers_idx(&self, i: usize) -> &[usize] {
        &self.customers[i]
    }

    pub(crate) fn providers_idx(&self, i: usize) -> &[usize] {
        &self.providers[i]
    }

    pub(crate) fn peers_idx(&self, i: usize) -> &[usize] {
        &self.peers[i]
    }

    fn map_ids(&self, idxs: &[usize]) -> Vec<AsId> {
        idxs.iter().map(|&i| self.ids[i]).collect()
    }

    pub fn customers_of(&self, id: AsId) -> Vec<AsId> {
        self.idx(id).map(|i| self.map_ids(&self.customers[i])).unwrap_or_default()
    }

    pub fn providers_of(&self, id: AsId) -> Vec<AsId> {
        self.idx(id).map(|i| self.map_ids(&self.providers[i])).unwrap_or_default()
    }

    pub fn peers_of(&self, id: AsId) -> Vec<AsId> {
        self.idx(id).map(|i| self.map_ids(&self.peers[i])).unwrap_or_default()
    }

    /// Every AS adjacent to `id`, ascending.
    pub fn neighbors(&self, id: AsId) -> Vec<AsId> {
        let Some(i) = self.idx(id) else { return Vec::new() };
        let mut all: Vec<usize> = self.customers[i]
            .iter()
            .chain(&self.providers[i])
            .chain(&self.peers[i])
            .copied()
            .collect();
        all.sort_unstable();
        self.map_ids(&all)
    }

    pub(crate) fn role_idx(&self, from: usize, to: usize) -> Option<EdgeRole> {
        if self.providers[from].binary_search(&to).is_ok() {
            Some(EdgeRole::ToProvider)
        } else if self.customers[from].binary_search(&to).is_ok() {
            Some(EdgeRole::ToCustomer)
        } else if self.peers[from].binary_search(&to).is_ok() {
            Some(EdgeRole::ToPeer)
        } else {
            None
        }
    }

    /// Role of the hop `from -> to`, or `None` if they are not adjacent.
    pub fn role(&self, from: AsId, to: AsId) -> Option<EdgeRole> {
        self.role_idx(self.idx(from)?, self.idx(to)?)
    }

    /// ASes with no customers: the candidate client ISPs.
    pub fn client_isp_ases(&self) -> BTreeSet<AsId> {
        (0..self.len()).filter(|&i| self.customers[i].is_empty()).map(|i| self.ids[i]).collect()
    }

    /// Serializes to the `as1|as2|rel` line format. Isolated ASes have no
    /// representation in that format and are dropped.
    pub fn to_serial2(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let code = match e.kind {
                RelKind::ProviderCustomer => -1,
                RelKind::PeerPeer => 0,
            };
            out.push_str(&format!("{}|{}|{}\n", e.a, e.b, code));
        }
        out
    }
}

/// Parses `as1|as2|rel` relationship text. Lines starting with `#` and
/// blank lines are skipped; a trailing source column is ignored.
pub fn parse_as_relationships(text: &str) -> Result<AsGraph, TopologyError> {
    let mut rels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| TopologyError::Parse { line: line_no, reason };
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(err(format!("expected `as1|as2|rel`, got `{line}`")));
        }
        let a: AsId = fields[0].parse().map_err(err)?;
        let b: AsId = fields[1].parse().map_err(err)?;
        if a == b {
            return Err(err(format!("self-loop on AS{a}")));
        }
        let rel = match fields[2].trim() {
            "-1" => Relationship::provider_customer(a, b),
            "0" => Relationship::peer(a, b),
            other => return Err(err(format!("unknown relationship code `{other}`"))),
        };
        rels.push(rel);
    }
    AsGraph::from_relationships(rels)
}

fn role_trace_valid(roles: impl Iterator<Item = EdgeRole>, max_peer_links: usize) -> bool {
    // 0 = climbing, 1 = descending (after a peer or downhill edge)
    let mut descending = false;
    let mut peers = 0;
    for role in roles {
        match role {
            EdgeRole::ToProvider => {
                if descending {
                    return false;
                }
            }
            EdgeRole::ToPeer => {
                if descending || peers >= max_peer_links.min(1) {
                    return false;
                }
                peers += 1;
                descending = true;
            }
            EdgeRole::ToCustomer => descending = true,
        }
    }
    true
}

/// Checks simplicity, adjacency, and the uphill* [peer] downhill* shape.
/// Unknown ASes are reported as an error rather than `false`.
pub fn validate_path(graph: &AsGraph, path: &AsPath, max_peer_links: usize) -> Result<bool, TopologyError> {
    let idxs: Vec<usize> = path.ases().iter().map(|&a| graph.require(a)).collect::<Result<_, _>>()?;
    if idxs.is_empty() {
        return Ok(false);
    }
    let mut seen = HashSet::with_capacity(idxs.len());
    if !idxs.iter().all(|i| seen.insert(*i)) {
        return Ok(false);
    }
    let mut roles = Vec::with_capacity(idxs.len());
    for w in idxs.windows(2) {
        match graph.role_idx(w[0], w[1]) {
            Some(r) => roles.push(r),
            None => return Ok(false),
        }
    }
    Ok(role_trace_valid(roles.into_iter(), max_peer_links))
}

/// How a route was learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RouteClass {
    Origin,
    Customer,
    Peer,
    Provider,
}

const NONE: u32 = u32::MAX;

/// Routes selected by every AS toward one or more originators of a prefix.
#[derive(Debug, Clone)]
struct Routes {
    next_hop: Vec<u32>,
    length: Vec<u32>,
    class: Vec<Option<RouteClass>>,
    origin: Vec<u32>,
}

impl Routes {
    fn has_route(&self, i: usize) -> bool {
        self.class[i].is_some()
    }

    fn set(&mut self, i: usize, via: usize, class: RouteClass) {
        self.next_hop[i] = via as u32;
        self.length[i] = self.length[via] + 1;
        self.class[i] = Some(class);
        self.origin[i] = self.origin[via];
    }
}

/// Three-phase Gao-Rexford propagation: customer routes climb the
/// hierarchy, then cross one peer link, then descend to customers. Ties on
/// length are broken by the lowest next-hop AS.
fn propagate(graph: &AsGraph, origins: &[usize]) -> Routes {
    let n = graph.len();
    let mut r = Routes {
        next_hop: vec![NONE; n],
        length: vec![0; n],
        class: vec![None; n],
        origin: vec![NONE; n],
    };
    for &o in origins {
        r.length[o] = 1;
        r.class[o] = Some(RouteClass::Origin);
        r.origin[o] = o as u32;
    }
    let pick = |r: &Routes, cands: &[usize], accept: &dyn Fn(RouteClass) -> bool| -> Option<usize> {
        let mut best: Option<usize> = None;
        for &c in cands {
            if let Some(cl) = r.class[c] {
                if accept(cl) && best.is_none_or(|b| r.length[c] < r.length[b]) {
                    best = Some(c);
                }
            }
        }
        best
    };
    let customer_learned = |cl: RouteClass| matches!(cl, RouteClass::Origin | RouteClass::Customer);

    for &x in graph.topo_order.iter().rev() {
        if r.has_route(x) {
            continue;
        }
        if let Some(c) = pick(&r, &graph.customers[x], &customer_learned) {
            r.set(x, c, RouteClass::Customer);
        }
    }
    // Peer routes must only see customer/origin routes, so collect first.
    let peer_choices: Vec<(usize, usize)> = (0..n)
        .filter(|&x| !r.has_route(x))
        .filter_map(|x| pick(&r, &graph.peers[x], &customer_learned).map(|p| (x, p)))
        .collect();
    for (x, p) in peer_choices {
        r.set(x, p, RouteClass::Peer);
    }
    for &x in &graph.topo_order {
        if r.has_route(x) {
            continue;
        }
        if let Some(p) = pick(&r, &graph.providers[x], &|_| true) {
            r.set(x, p, RouteClass::Provider);
        }
    }
    r
}

/// Per-AS best routes toward one destination.
#[derive(Debug, Clone)]
pub struct RoutingState<'g> {
    graph: &'g AsGraph,
    destination: AsId,
    routes: Routes,
}

impl<'g> RoutingState<'g> {
    pub fn destination(&self) -> AsId {
        self.destination
    }

    pub fn graph(&self) -> &'g AsGraph {
        self.graph
    }

    pub fn has_route(&self, src: AsId) -> bool {
        self.graph.idx(src).is_some_and(|i| self.routes.has_route(i))
    }

    pub fn class_of(&self, src: AsId) -> Option<RouteClass> {
        self.routes.class[self.graph.idx(src)?]
    }

    pub fn next_hop(&self, src: AsId) -> Option<AsId> {
        let i = self.graph.idx(src)?;
        let nh = self.routes.next_hop[i];
        (nh != NONE).then(|| self.graph.id_at(nh as usize))
    }

    /// Path length in ASes, both endpoints included.
    pub fn path_len(&self, src: AsId) -> Option<usize> {
        let i = self.graph.idx(src)?;
        self.routes.has_route(i).then(|| self.routes.length[i] as usize)
    }

    pub(crate) fn path_idx(&self, mut i: usize) -> Option<Vec<usize>> {
        if !self.routes.has_route(i) {
            return None;
        }
        let mut out = Vec::with_capacity(self.routes.length[i] as usize);
        out.push(i);
        while self.routes.next_hop[i] != NONE {
            i = self.routes.next_hop[i] as usize;
            out.push(i);
        }
        Some(out)
    }

    pub fn path(&self, src: AsId) -> Option<AsPath> {
        let idx = self.path_idx(self.graph.idx(src)?)?;
        Some(AsPath(idx.into_iter().map(|i| self.graph.id_at(i)).collect()))
    }

    /// Second-to-last AS on `src`'s route; `None` for the destination itself.
    pub fn penultimate(&self, src: AsId) -> Option<AsId> {
        if src == self.destination {
            return None;
        }
        let mut i = self.graph.idx(src)?;
        if !self.routes.has_route(i) {
            return None;
        }
        loop {
            let nh = self.routes.next_hop[i] as usize;
            if self.routes.next_hop[nh] == NONE {
                return Some(self.graph.id_at(i));
            }
            i = nh;
        }
    }

    /// Whether any AS in `set` lies on `src`'s route (endpoints included).
    pub fn path_hits(&self, src: AsId, set: &HashSet<AsId>) -> Option<bool> {
        let idx = self.path_idx(self.graph.idx(src)?)?;
        Some(idx.into_iter().any(|i| set.contains(&self.graph.id_at(i))))
    }

    /// All ASes with a route, paired with their path. Ascending by AS.
    pub fn paths(&self) -> impl Iterator<Item = (AsId, AsPath)> + '_ {
        self.graph.ases().iter().filter_map(|&a| self.path(a).map(|p| (a, p)))
    }
}

pub fn routing_state(graph: &AsGraph, destination: AsId) -> Result<RoutingState<'_>, TopologyError> {
    let d = graph.require(destination)?;
    Ok(RoutingState { graph, destination, routes: propagate(graph, &[d]) })
}

pub fn best_path(graph: &AsGraph, src: AsId, dst: AsId) -> Result<Option<AsPath>, TopologyError> {
    graph.require(src)?;
    Ok(routing_state(graph, dst)?.path(src))
}

pub fn penultimate_hop(graph: &AsGraph, src: AsId, dst: AsId) -> Result<Option<AsId>, TopologyError> {
    if src == dst {
        return Err(TopologyError::SameEndpoints(src));
    }
    graph.require(src)?;
    Ok(routing_state(graph, dst)?.penultimate(src))
}

/// Outcome of an equally-specific origin hijack: `hijacked[AS]` is true
/// when that AS routes to the attacker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HijackOutcome {
    pub origin: AsId,
    pub attacker: AsId,
    hijacked: Vec<bool>,
    ases: Vec<AsId>,
}

impl HijackOutcome {
    pub fn is_hijacked(&self, id: AsId) -> bool {
        match self.ases.binary_search(&id) {
            Ok(i) => self.hijacked[i],
            Err(_) => false,
        }
    }

    pub fn hijacked_ases(&self) -> BTreeSet<AsId> {
        self.ases.iter().zip(&self.hijacked).filter(|(_, &h)| h).map(|(&a, _)| a).collect()
    }

    pub fn to_map(&self) -> std::collections::BTreeMap<AsId, bool> {
        self.ases.iter().copied().zip(self.hijacked.iter().copied()).collect()
    }
}

pub(crate) fn hijack_vec(graph: &AsGraph, origin: usize, attacker: usize) -> Vec<bool> {
    let r = propagate(graph, &[origin, attacker]);
    (0..graph.len()).map(|i| r.origin[i] == attacker as u32).collect()
}

/// Both `origin` and `attacker` announce the same prefix; every AS picks by
/// the usual preference rules over the union of announcements.
pub fn simulate_hijack(graph: &AsGraph, origin: AsId, attacker: AsId) -> Result<HijackOutcome, TopologyError> {
    if origin == attacker {
        return Err(TopologyError::SameEndpoints(origin));
    }
    let o = graph.require(origin)?;
    let hijacked = match graph.idx(attacker) {
        Some(a) => hijack_vec(graph, o, a),
        // An attacker outside the graph reaches nobody.
        None => vec![false; graph.len()],
    };
    Ok(HijackOutcome { origin, attacker, hijacked, ases: graph.ases().to_vec() })
}

/// Exact hijack resilience: `safe` of `candidates` attackers fail to divert
/// the client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resilience {
    pub safe: usize,
    pub candidates: usize,
}

impl Resilience {
    pub fn value(&self) -> f64 {
        if self.candidates == 0 {
            1.0
        } else {
            self.safe as f64 / self.candidates as f64
        }
    }
}

pub fn resilience(graph: &AsGraph, client: AsId, guard_as: AsId) -> Result<Resilience, TopologyError> {
    if client == guard_as {
        return Err(TopologyError::SameEndpoints(client));
    }
    let c = graph.require(client)?;
    let g = graph.require(guard_as)?;
    let attackers: Vec<usize> = (0..graph.len()).filter(|&a| a != c && a != g).collect();
    let safe = attackers
        .par_iter()
        .filter(|&&a| {
            let r = propagate(graph, &[g, a]);
            r.origin[c] != a as u32
        })
        .count();
    Ok(Resilience { safe, candidates: attackers.len() })
}

/// Resilience of every client AS toward `guard_as`, running each attacker's
/// hijack once. The guard's own AS maps to `None`.
pub fn resilience_table(graph: &AsGraph, guard_as: AsId) -> Result<Vec<(AsId, Option<Resilience>)>, TopologyError> {
    let g = graph.require(guard_as)?;
    let n = graph.len();
    let hijacks: Vec<Vec<bool>> = (0..n)
        .into_par_iter()
        .map(|a| if a == g { Vec::new() } else { hijack_vec(graph, g, a) })
        .collect();
    let candidates = n.saturating_sub(2);
    Ok((0..n)
        .map(|c| {
            if c == g {
                return (graph.id_at(c), None);
            }
            let diverted = (0..n).filter(|&a| a != g && a != c && hijacks[a][c]).count();
            (graph.id_at(c), Some(Resilience { safe: candidates - diverted, candidates }))
        })
        .collect())
}

/// Length-pruning table for valley-free enumeration toward one destination.
struct RemainingLen {
    /// Shortest pure-downhill path (ASes) from node to destination.
    down: Vec<u32>,
    /// Shortest valley-free path allowing the full pattern.
    any: Vec<u32>,
}

impl RemainingLen {
    fn new(graph: &AsGraph, dst: usize, allow_peer: bool) -> Self {
        let n = graph.len();
        let inf = u32::MAX / 2;
        let mut down = vec![inf; n];
        down[dst] = 1;
        for &x in graph.topo_order.iter().rev() {
            for &c in &graph.customers[x] {
                down[x] = down[x].min(down[c] + 1);
            }
            if x == dst {
                down[x] = 1;
            }
        }
        let mut any = down.clone();
        if allow_peer {
            for x in 0..n {
                for &p in &graph.peers[x] {
                    any[x] = any[x].min(down[p] + 1);
                }
            }
        }
        for &x in &graph.topo_order {
            for &p in &graph.providers[x] {
                any[x] = any[x].min(any[p] + 1);
            }
        }
        RemainingLen { down, any }
    }
}

/// Every simple valley-free path from `src` to `dst` with at most
/// `max_peer_links` peer edges and at most `max_len` ASes.
pub fn routable_paths(
    graph: &AsGraph,
    src: AsId,
    dst: AsId,
    max_peer_links: usize,
    max_len: usize,
) -> Result<BTreeSet<AsPath>, TopologyError> {
    if src == dst {
        return Err(TopologyError::SameEndpoints(src));
    }
    let s = graph.require(src)?;
    let d = graph.require(dst)?;
    let allow_peer = max_peer_links >= 1;
    let bound = RemainingLen::new(graph, d, allow_peer);
    let mut out = BTreeSet::new();
    let mut on_path = vec![false; graph.len()];
    let mut stack = vec![s];
    on_path[s] = true;

    struct Ctx<'a> {
        graph: &'a AsGraph,
        dst: usize,
        max_len: usize,
        allow_peer: bool,
        bound: &'a RemainingLen,
    }

    fn dfs(ctx: &Ctx<'_>, stack: &mut Vec<usize>, on_path: &mut [bool], descending: bool, out: &mut BTreeSet<AsPath>) {
        let x = *stack.last().expect("non-empty");
        if x == ctx.dst {
            out.insert(AsPath(stack.iter().map(|&i| ctx.graph.id_at(i)).collect()));
            return;
        }
        let len = stack.len();
        let reachable = |next: usize, desc: bool, on_path: &[bool]| {
            let rem = if desc { ctx.bound.down[next] } else { ctx.bound.any[next] };
            !on_path[next] && len + rem as usize <= ctx.max_len
        };
        let mut step = |next: usize, desc: bool, stack: &mut Vec<usize>, on_path: &mut [bool]| {
            stack.push(next);
            on_path[next] = true;
            dfs(ctx, stack, on_path, desc, out);
            on_path[next] = false;
            stack.pop();
        };
        if !descending {
            for &p in ctx.graph.providers_idx(x) {
                if reachable(p, false, on_path) {
                    step(p, false, stack, on_path);
                }
            }
            if ctx.allow_peer {
                for &p in ctx.graph.peers_idx(x) {
                    if reachable(p, true, on_path) {
                        step(p, true, stack, on_path);
                    }
                }
            }
        }
        for &c in ctx.graph.customers_idx(x) {
            if reachable(c, true, on_path) {
                step(c, true, stack, on_path);
            }
        }
    }

    if bound.any[s] as usize <= max_len {
        let ctx = Ctx { graph, dst: d, max_len, allow_peer, bound: &bound };
        dfs(&ctx, &mut stack, &mut on_path, false, &mut out);
    }
    Ok(out)
}

/// ASes with zero customers.
pub fn client_isp_ases(graph: &AsGraph) -> BTreeSet<AsId> {
    graph.client_isp_ases()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn t6() -> AsGraph {
        parse_as_relationships(include_str!("../../../fixtures/t6.txt")).unwrap()
    }

    fn p(v: &[u32]) -> AsPath {
        AsPath(v.iter().map(|&x| asn(x)).collect())
    }

    #[test]
    fn parse_maps_codes() {
        let g = parse_as_relationships("1|3|-1\n1|2|0\n").unwrap();
        assert_eq!(g.role(asn(1), asn(3)), Some(EdgeRole::ToCustomer));
        assert_eq!(g.role(asn(3), asn(1)), Some(EdgeRole::ToProvider));
        assert_eq!(g.role(asn(1), asn(2)), Some(EdgeRole::ToPeer));
        assert_eq!(g.role(asn(2), asn(3)), None);
    }

    #[test]
    fn parse_errors_name_line() {
        assert!(matches!(parse_as_relationships("1|x|-1"), Err(TopologyError::Parse { line: 1, .. })));
        assert!(matches!(parse_as_relationships("# c\n1|2|-1\n1|2|5"), Err(TopologyError::Parse { line: 3, .. })));
        assert!(matches!(parse_as_relationships("4|4|0"), Err(TopologyError::Parse { line: 1, .. })));
        assert!(matches!(parse_as_relationships("0|4|0"), Err(TopologyError::Parse { line: 1, .. })));
    }

    #[test]
    fn parse_rejects_conflicts_and_cycles() {
        assert_eq!(parse_as_relationships("1|2|-1\n1|2|0").unwrap_err(), TopologyError::Conflict(asn(1), asn(2)));
        assert_eq!(parse_as_relationships("1|2|-1\n2|1|-1").unwrap_err(), TopologyError::Conflict(asn(1), asn(2)));
        assert!(matches!(
            parse_as_relationships("1|2|-1\n2|3|-1\n3|1|-1"),
            Err(TopologyError::ProviderCycle(_))
        ));
        // exact duplicates and mirrored peerings merge
        let g = parse_as_relationships("1|2|0\n2|1|0\n1|3|-1\n1|3|-1\n").unwrap();
        assert_eq!(g.relationships().len(), 2);
    }

    #[test]
    fn parse_accepts_crlf_and_source_column() {
        let g = parse_as_relationships("# header\r\n1|2|-1|bgp\r\n\r\n2|3|0\r\n").unwrap();
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn validate_t6_examples() {
        let g = t6();
        assert!(validate_path(&g, &p(&[5, 2, 4, 6]), 1).unwrap());
        assert!(validate_path(&g, &p(&[3, 1, 2, 4]), 1).unwrap());
        assert!(!validate_path(&g, &p(&[3, 1, 2, 4]), 0).unwrap());
        assert!(!validate_path(&g, &p(&[3, 6, 4]), 1).unwrap());
        assert_eq!(validate_path(&g, &p(&[3, 9]), 1), Err(TopologyError::UnknownAs(asn(9))));
        assert!(!validate_path(&g, &p(&[6, 4, 6]), 1).unwrap());
        assert!(!validate_path(&g, &p(&[6, 5]), 1).unwrap());
    }

    #[test]
    fn routing_t6_examples() {
        let g = t6();
        let to5 = routing_state(&g, asn(5)).unwrap();
        assert_eq!(to5.path(asn(6)), Some(p(&[6, 4, 2, 5])));
        assert_eq!(to5.path(asn(3)), Some(p(&[3, 1, 2, 5])));
        assert_eq!(to5.path(asn(5)), Some(p(&[5])));
        let to1 = routing_state(&g, asn(1)).unwrap();
        assert_eq!(to1.path(asn(6)), Some(p(&[6, 3, 1])));
        assert_eq!(best_path(&g, asn(6), asn(1)).unwrap(), Some(p(&[6, 3, 1])));
    }

    #[test]
    fn penultimate_t6_examples() {
        let g = t6();
        assert_eq!(penultimate_hop(&g, asn(6), asn(5)).unwrap(), Some(asn(2)));
        assert_eq!(penultimate_hop(&g, asn(3), asn(5)).unwrap(), Some(asn(2)));
        assert_eq!(penultimate_hop(&g, asn(2), asn(5)).unwrap(), Some(asn(2)));
        assert!(penultimate_hop(&g, asn(5), asn(5)).is_err());
    }

    #[test]
    fn hijack_t6_examples() {
        let g = t6();
        assert!(simulate_hijack(&g, asn(5), asn(3)).unwrap().is_hijacked(asn(6)));
        assert!(!simulate_hijack(&g, asn(4), asn(1)).unwrap().is_hijacked(asn(6)));
        assert!(simulate_hijack(&g, asn(4), asn(3)).unwrap().is_hijacked(asn(6)));
        let h = simulate_hijack(&g, asn(5), asn(3)).unwrap();
        assert!(!h.is_hijacked(asn(5)));
        assert!(h.is_hijacked(asn(3)));
    }

    #[test]
    fn detached_attacker_hijacks_only_itself() {
        let g = AsGraph::new([asn(9)], t6().relationships().to_vec()).unwrap();
        let h = simulate_hijack(&g, asn(5), asn(9)).unwrap();
        assert_eq!(h.hijacked_ases(), BTreeSet::from([asn(9)]));
        let outside = simulate_hijack(&g, asn(5), asn(77)).unwrap();
        assert!(outside.hijacked_ases().is_empty());
    }

    #[test]
    fn resilience_t6() {
        let g = t6();
        // attackers 1, 2, 5 fail; 3 wins on the next-hop tie-break
        assert_eq!(resilience(&g, asn(6), asn(4)).unwrap(), Resilience { safe: 3, candidates: 4 });
        assert_eq!(resilience(&g, asn(6), asn(5)).unwrap(), Resilience { safe: 0, candidates: 4 });
        let single = parse_as_relationships("1|2|-1").unwrap();
        assert_eq!(resilience(&single, asn(2), asn(1)).unwrap().value(), 1.0);
    }

    #[test]
    fn resilience_table_matches_pointwise() {
        let g = t6();
        for &guard in g.ases() {
            for (client, r) in resilience_table(&g, guard).unwrap() {
                match r {
                    None => assert_eq!(client, guard),
                    Some(r) => assert_eq!(r, resilience(&g, client, guard).unwrap()),
                }
            }
        }
    }

    #[test]
    fn routable_t6_examples() {
        let g = t6();
        let all = routable_paths(&g, asn(6), asn(5), 1, 5).unwrap();
        let expect: BTreeSet<AsPath> = [p(&[6, 4, 2, 5]), p(&[6, 3, 1, 2, 5]), p(&[6, 4, 1, 2, 5])].into();
        assert_eq!(all, expect);
        assert_eq!(routable_paths(&g, asn(6), asn(5), 1, 4).unwrap(), BTreeSet::from([p(&[6, 4, 2, 5])]));
        assert_eq!(routable_paths(&g, asn(6), asn(5), 0, 5).unwrap(), BTreeSet::from([p(&[6, 4, 2, 5])]));
    }

    #[test]
    fn client_isps() {
        assert_eq!(client_isp_ases(&t6()), BTreeSet::from([asn(5), asn(6)]));
        let single = parse_as_relationships("1|2|-1").unwrap();
        assert_eq!(client_isp_ases(&single), BTreeSet::from([asn(2)]));
        let tri = parse_as_relationships("1|2|0\n2|3|0\n1|3|0").unwrap();
        assert_eq!(client_isp_ases(&tri).len(), 3);
    }

    #[test]
    fn serial2_roundtrip() {
        let g = t6();
        let again = parse_as_relationships(&g.to_serial2()).unwrap();
        assert_eq!(g.relationships(), again.relationships());
    }
}
