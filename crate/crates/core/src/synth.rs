//! Seeded synthetic inputs and brute-force reference implementations.
//!
//! The reference routines here share nothing with the fast routing code
//! beyond the graph's relationship lookup, so they can serve as oracles.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::anonnet::{Relay, RelaySet};
use crate::attacks::RouteChangeRecord;
use crate::mobility::{CheckIn, CountryAsMap, MobilityTrace};
use crate::topology::{asn, AsGraph, AsId, AsPath, EdgeRole, Relationship, Resilience, TopologyError};

/// Largest graph the path enumerator accepts.
pub const ORACLE_MAX_ASES: usize = 16;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("oracle limited to {ORACLE_MAX_ASES} ASes, graph has {0}")]
    TooLarge(usize),
    #[error("source and destination are both AS{0}")]
    SameEndpoints(AsId),
    #[error("route selection did not settle after {0} rounds")]
    NoConvergence(usize),
    #[error("invalid generator parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyGenParams {
    pub n_ases: usize,
    pub n_tiers: usize,
    /// Chance that a non-core AS gets one lateral peer in its own tier.
    pub peer_prob: f64,
    /// Chance that a non-core AS buys transit from a second provider.
    pub multihome_prob: f64,
    pub seed: u64,
}

impl Default for TopologyGenParams {
    fn default() -> Self {
        TopologyGenParams { n_ases: 100, n_tiers: 3, peer_prob: 0.3, multihome_prob: 0.3, seed: 0 }
    }
}

/// Tier sizes growing threefold per level, each at least one.
fn tier_sizes(n: usize, tiers: usize) -> Vec<usize> {
    let raw: Vec<f64> = (0..tiers).map(|t| 3f64.powi(t as i32)).collect();
    let total: f64 = raw.iter().sum();
    let mut sizes: Vec<usize> = raw.iter().map(|r| ((r / total) * n as f64).floor().max(1.0) as usize).collect();
    let mut assigned: usize = sizes.iter().sum();
    let last = tiers - 1;
    while assigned < n {
        sizes[last] += 1;
        assigned += 1;
    }
    let mut t = last;
    while assigned > n {
        if sizes[t] > 1 {
            sizes[t] -= 1;
            assigned -= 1;
        } else {
            t -= 1;
        }
    }
    sizes
}

/// Tiered hierarchy: the top tier is a peering clique, every other AS has a
/// provider in the tier directly above (plus an optional second one from
/// any higher tier) and may peer laterally. AS numbers run 1..=n, tier by
/// tier.
pub fn gen_topology(p: &TopologyGenParams) -> Result<AsGraph, SynthError> {
    if p.n_ases == 0 || p.n_tiers == 0 {
        return Err(SynthError::InvalidParams("need at least one AS and one tier".into()));
    }
    for (name, v) in [("peer_prob", p.peer_prob), ("multihome_prob", p.multihome_prob)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(SynthError::InvalidParams(format!("{name} = {v}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let sizes = tier_sizes(p.n_ases, p.n_tiers.min(p.n_ases));
    let mut tiers: Vec<Vec<AsId>> = Vec::new();
    let mut next = 1u32;
    for s in sizes {
        tiers.push((next..next + s as u32).map(asn).collect());
        next += s as u32;
    }
    let mut rels = Vec::new();
    let mut linked: HashSet<(AsId, AsId)> = HashSet::new();
    let link = |a: AsId, b: AsId, linked: &mut HashSet<(AsId, AsId)>| linked.insert((a.min(b), a.max(b)));
    for (i, &a) in tiers[0].iter().enumerate() {
        for &b in &tiers[0][i + 1..] {
            link(a, b, &mut linked);
            rels.push(Relationship::peer(a, b));
        }
    }
    for t in 1..tiers.len() {
        let higher: Vec<AsId> = tiers[..t].iter().flatten().copied().collect();
        for &c in &tiers[t] {
            let prov = tiers[t - 1][rng.gen_range(0..tiers[t - 1].len())];
            link(prov, c, &mut linked);
            rels.push(Relationship::provider_customer(prov, c));
            if rng.gen_bool(p.multihome_prob) {
                let second = higher[rng.gen_range(0..higher.len())];
                if link(second, c, &mut linked) {
                    rels.push(Relationship::provider_customer(second, c));
                }
            }
        }
        for &a in &tiers[t] {
            if tiers[t].len() > 1 && rng.gen_bool(p.peer_prob) {
                let b = tiers[t][rng.gen_range(0..tiers[t].len())];
                if a != b && link(a, b, &mut linked) {
                    rels.push(Relationship::peer(a, b));
                }
            }
        }
    }
    let nodes: Vec<AsId> = tiers.into_iter().flatten().collect();
    Ok(AsGraph::new(nodes, rels)?)
}

/// Moves `n_changes` provider links to a different provider, skipping
/// rewires that would create a cycle. Deterministic in `seed`.
pub fn perturb_topology(graph: &AsGraph, n_changes: usize, seed: u64) -> Result<AsGraph, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rels: Vec<Relationship> = graph.relationships().to_vec();
    let ases = graph.ases().to_vec();
    let mut done = 0;
    let mut attempts = 0;
    while done < n_changes && attempts < 50 * (n_changes + 1) {
        attempts += 1;
        let pc: Vec<usize> = (0..rels.len()).filter(|&i| rels[i].kind == crate::topology::RelKind::ProviderCustomer).collect();
        let Some(&i) = pc.choose(&mut rng) else { break };
        let cust = rels[i].b;
        let new_prov = ases[rng.gen_range(0..ases.len())];
        if new_prov == cust || rels.iter().any(|r| (r.a == new_prov && r.b == cust) || (r.a == cust && r.b == new_prov)) {
            continue;
        }
        let mut trial = rels.clone();
        trial[i] = Relationship::provider_customer(new_prov, cust);
        if AsGraph::new(ases.clone(), trial.clone()).is_ok() {
            rels = trial;
            done += 1;
        }
    }
    Ok(AsGraph::new(ases, rels)?)
}

/// Daily penultimate hops toward `destination`, one snapshot per day.
/// Probes whose AS has no route that day produce no record.
pub fn gen_route_changes(
    snapshots: &[AsGraph],
    probes: &[(String, AsId)],
    destination: AsId,
) -> Result<Vec<RouteChangeRecord>, SynthError> {
    let mut out = Vec::new();
    for (day, g) in snapshots.iter().enumerate() {
        let st = crate::topology::routing_state(g, destination)?;
        for (probe, a) in probes {
            if let Some(p) = st.penultimate(*a) {
                out.push(RouteChangeRecord { probe: probe.clone(), day: day as i64, origin_as: *a, penultimate: p });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityGenParams {
    pub n_users: usize,
    pub n_days: usize,
    pub countries: Vec<String>,
    /// Chance per day of relocating to a uniformly chosen country.
    pub move_prob: f64,
    /// Chance per day of a check-in.
    pub checkin_prob: f64,
    pub start_day: i64,
    pub seed: u64,
}

pub fn gen_mobility_traces(p: &MobilityGenParams) -> Result<Vec<MobilityTrace>, SynthError> {
    if p.countries.is_empty() {
        return Err(SynthError::InvalidParams("no countries".into()));
    }
    for (name, v) in [("move_prob", p.move_prob), ("checkin_prob", p.checkin_prob)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(SynthError::InvalidParams(format!("{name} = {v}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let width = p.n_users.max(1).to_string().len();
    let mut out = Vec::with_capacity(p.n_users);
    for u in 0..p.n_users {
        let user = format!("u{u:0width$}");
        let mut here = rng.gen_range(0..p.countries.len());
        let mut checkins = Vec::new();
        for d in 0..p.n_days {
            if d > 0 && rng.gen_bool(p.move_prob) {
                here = rng.gen_range(0..p.countries.len());
            }
            if rng.gen_bool(p.checkin_prob) {
                checkins.push(CheckIn {
                    user: user.clone(),
                    day: p.start_day + d as i64,
                    country: p.countries[here].clone(),
                });
            }
        }
        out.push(MobilityTrace::new(user, checkins));
    }
    Ok(out)
}

/// Maps each country to a distinct client ISP where possible.
pub fn gen_country_map(graph: &AsGraph, countries: &[String], seed: u64) -> Result<CountryAsMap, SynthError> {
    let mut pool: Vec<AsId> = graph.client_isp_ases().into_iter().collect();
    if pool.is_empty() {
        pool = graph.ases().to_vec();
    }
    if pool.is_empty() {
        return Err(SynthError::InvalidParams("empty graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    Ok(CountryAsMap::new(countries.iter().enumerate().map(|(i, c)| (c.clone(), pool[i % pool.len()])).collect()))
}

/// `n_relays` relays on random ASes with heavy-tailed bandwidth.
pub fn gen_relays(graph: &AsGraph, n_relays: usize, guard_frac: f64, seed: u64) -> Result<RelaySet, SynthError> {
    if !(0.0..=1.0).contains(&guard_frac) {
        return Err(SynthError::InvalidParams(format!("guard_frac = {guard_frac}")));
    }
    if graph.is_empty() {
        return Err(SynthError::InvalidParams("empty graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_relays.max(1).to_string().len();
    let relays = (0..n_relays)
        .map(|i| {
            let host_as = graph.ases()[rng.gen_range(0..graph.len())];
            let u: f64 = rng.gen();
            Relay {
                id: format!("r{i:0width$}"),
                host_as,
                bandwidth: (100.0 * (1.0 - u).powf(-0.7)).round(),
                is_guard: rng.gen_bool(guard_frac),
            }
        })
        .collect();
    RelaySet::new(relays).map_err(|e| SynthError::InvalidParams(e.to_string()))
}

fn check_size(graph: &AsGraph) -> Result<(), SynthError> {
    if graph.len() > ORACLE_MAX_ASES {
        return Err(SynthError::TooLarge(graph.len()));
    }
    Ok(())
}

/// Phase of a path walk: 0 climbing, 1 after the peer hop or any descent.
fn step_ok(phase: u8, peers: usize, role: EdgeRole, max_peer: usize) -> Option<(u8, usize)> {
    match (role, phase) {
        (EdgeRole::ToProvider, 0) => Some((0, peers)),
        (EdgeRole::ToPeer, 0) if peers < max_peer.min(1) => Some((1, peers + 1)),
        (EdgeRole::ToCustomer, _) => Some((1, peers)),
        _ => None,
    }
}

/// Every simple valley-free path from `src` to `dst` with at most
/// `max_len` ASes, by exhaustive search.
pub fn oracle_enumerate_paths(
    graph: &AsGraph,
    src: AsId,
    dst: AsId,
    max_peer_links: usize,
    max_len: usize,
) -> Result<BTreeSet<AsPath>, SynthError> {
    check_size(graph)?;
    if src == dst {
        return Err(SynthError::SameEndpoints(src));
    }
    for a in [src, dst] {
        if !graph.contains(a) {
            return Err(TopologyError::UnknownAs(a).into());
        }
    }
    let mut out = BTreeSet::new();
    let mut path = vec![src];
    walk(graph, dst, max_peer_links, 0, 0, &mut path, &mut out);
    out.retain(|p| p.len() <= max_len);
    Ok(out)
}

fn walk(
    graph: &AsGraph,
    dst: AsId,
    max_peer: usize,
    phase: u8,
    peers: usize,
    path: &mut Vec<AsId>,
    out: &mut BTreeSet<AsPath>,
) {
    let here = *path.last().expect("non-empty");
    if here == dst {
        out.insert(AsPath::new(path.clone()));
        return;
    }
    for next in graph.neighbors(here) {
        if path.contains(&next) {
            continue;
        }
        let role = graph.role(here, next).expect("neighbor");
        if let Some((ph, pe)) = step_ok(phase, peers, role, max_peer) {
            path.push(next);
            walk(graph, dst, max_peer, ph, pe, path, out);
            path.pop();
        }
    }
}

fn first_hop_rank(graph: &AsGraph, path: &[AsId]) -> u8 {
    match graph.role(path[0], path[1]).expect("edge") {
        EdgeRole::ToCustomer => 0,
        EdgeRole::ToPeer => 1,
        EdgeRole::ToProvider => 2,
    }
}

/// Stable route choice when every AS in `origins` announces the same
/// prefix, found by iterating best-response over enumerated paths until no
/// AS changes its mind. An AS's choice must extend its next hop's current
/// choice; valley-freeness of the whole path encodes the export rules.
pub fn oracle_routes(graph: &AsGraph, origins: &[AsId]) -> Result<BTreeMap<AsId, Option<AsPath>>, SynthError> {
    check_size(graph)?;
    let origin_set: BTreeSet<AsId> = origins.iter().copied().collect();
    let mut candidates: BTreeMap<AsId, Vec<AsPath>> = BTreeMap::new();
    for &x in graph.ases() {
        if origin_set.contains(&x) {
            continue;
        }
        let mut all = Vec::new();
        for &o in &origin_set {
            if !graph.contains(o) {
                continue;
            }
            // a path may only end at the first origin it meets
            all.extend(
                oracle_enumerate_paths(graph, x, o, 1, usize::MAX)?
                    .into_iter()
                    .filter(|p| p.ases()[..p.len() - 1].iter().all(|a| !origin_set.contains(a))),
            );
        }
        candidates.insert(x, all);
    }
    let mut chosen: BTreeMap<AsId, Option<AsPath>> =
        graph.ases().iter().map(|&a| (a, origin_set.contains(&a).then(|| AsPath::new(vec![a])))).collect();
    let max_rounds = 2 * graph.len() + 5;
    for _ in 0..max_rounds {
        let mut next = chosen.clone();
        for (&x, paths) in &candidates {
            let best = paths
                .iter()
                .filter(|p| chosen[&p.ases()[1]].as_ref().is_some_and(|c| c.ases() == &p.ases()[1..]))
                .min_by_key(|p| (first_hop_rank(graph, p.ases()), p.len(), p.ases()[1]));
            next.insert(x, best.cloned());
        }
        if next == chosen {
            return Ok(chosen);
        }
        chosen = next;
    }
    Err(SynthError::NoConvergence(max_rounds))
}

/// Which ASes route to `attacker` when it announces `origin`'s prefix.
pub fn oracle_hijack(graph: &AsGraph, origin: AsId, attacker: AsId) -> Result<BTreeMap<AsId, bool>, SynthError> {
    if origin == attacker {
        return Err(SynthError::SameEndpoints(origin));
    }
    let routes = oracle_routes(graph, &[origin, attacker])?;
    Ok(routes
        .into_iter()
        .map(|(a, p)| (a, p.is_some_and(|p| p.destination() == Some(attacker))))
        .collect())
}

pub fn oracle_resilience(graph: &AsGraph, client: AsId, guard_as: AsId) -> Result<Resilience, SynthError> {
    if client == guard_as {
        return Err(SynthError::SameEndpoints(client));
    }
    let mut safe = 0;
    let mut candidates = 0;
    for &a in graph.ases() {
        if a == client || a == guard_as {
            continue;
        }
        candidates += 1;
        if !oracle_hijack(graph, guard_as, a)?[&client] {
            safe += 1;
        }
    }
    Ok(Resilience { safe, candidates })
}


/// Simple, adjacent, and uphill* [peer] downhill* with the peer budget.
pub fn oracle_valley_free(graph: &AsGraph, path: &[AsId], max_peer_links: usize) -> bool {
    if path.is_empty() || path.iter().any(|a| !graph.contains(*a)) {
        return false;
    }
    let distinct: BTreeSet<AsId> = path.iter().copied().collect();
    if distinct.len() != path.len() {
        return false;
    }
    let (mut phase, mut peers) = (0u8, 0usize);
    for w in path.windows(2) {
        let Some(role) = graph.role(w[0], w[1]) else { return false };
        match step_ok(phase, peers, role, max_peer_links) {
            Some((ph, pe)) => (phase, peers) = (ph, pe),
            None => return false,
        }
    }
    true
}

/// Client ISPs with a simple valley-free path of exactly `position - 1`
/// ASes ending at `predecessor`.
pub fn oracle_location_set(
    graph: &AsGraph,
    predecessor: AsId,
    position: usize,
    max_peer_links: usize,
) -> Result<BTreeSet<AsId>, SynthError> {
    check_size(graph)?;
    let want = position.saturating_sub(1);
    let mut out = BTreeSet::new();
    for s in graph.client_isp_ases() {
        let hit = if s == predecessor {
            want == 1
        } else {
            oracle_enumerate_paths(graph, s, predecessor, max_peer_links, want)?.iter().any(|p| p.len() == want)
        };
        if hit {
            out.insert(s);
        }
    }
    Ok(out)
}

/// Midway and full path of a connection from `src` to `dst` through
/// `helper`, using oracle routes for both half-paths.
pub fn oracle_phi(graph: &AsGraph, src: AsId, helper: AsId, dst: AsId) -> Result<Option<(AsId, AsPath)>, SynthError> {
    let to_helper = oracle_routes(graph, &[helper])?;
    let to_dst = oracle_routes(graph, &[dst])?;
    let Some(half) = to_helper.get(&src).cloned().flatten() else { return Ok(None) };
    for i in (0..half.len()).rev() {
        let m = half.ases()[i];
        let Some(tail) = to_dst.get(&m).cloned().flatten() else { continue };
        let full: Vec<AsId> = half.ases()[..=i].iter().chain(&tail.ases()[1..]).copied().collect();
        if oracle_valley_free(graph, &full, 1) {
            return Ok(Some((m, AsPath::new(full))));
        }
    }
    Ok(None)
}

/// Bandwidth-weighted guard distribution over guards whose oracle route
/// from `client` avoids every suspect.
pub fn oracle_gselect(
    graph: &AsGraph,
    relays: &RelaySet,
    client: AsId,
    suspects: &BTreeSet<AsId>,
) -> Result<BTreeMap<String, f64>, SynthError> {
    let mut weights = BTreeMap::new();
    for r in relays.relays() {
        if !r.is_guard || r.bandwidth <= 0.0 {
            continue;
        }
        let path = if r.host_as == client {
            Some(AsPath::new(vec![client]))
        } else {
            oracle_routes(graph, &[r.host_as])?.remove(&client).flatten()
        };
        if path.is_some_and(|p| p.ases().iter().all(|a| !suspects.contains(a))) {
            weights.insert(r.id.clone(), r.bandwidth);
        }
    }
    let total: f64 = weights.values().sum();
    Ok(weights.into_iter().map(|(k, w)| (k, w / total)).collect())
}
