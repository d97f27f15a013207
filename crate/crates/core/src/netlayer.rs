//! Network-layer anonymity protocols: Dovetail head paths, PHI half-paths
//! with midway back-off, and what an on-path AS observes in each (plus
//! HORNET's penultimate-hop view at the destination).

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::topology::{
    routable_paths, routing_state, validate_path, AsGraph, AsId, AsPath, RoutingState, TopologyError,
};

#[derive(Debug, Error)]
pub enum NetlayerError {
    #[error("observation position must be >= 2, got {0}")]
    InvalidPosition(usize),
    #[error("source, helper and destination must be distinct")]
    NotDistinct,
    #[error("observation line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DovetailParams {
    pub min_head_len: usize,
    pub max_peer_links: usize,
    pub max_len: usize,
}

impl Default for DovetailParams {
    fn default() -> Self {
        DovetailParams { min_head_len: 6, max_peer_links: 1, max_len: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DovetailPath {
    pub head: AsPath,
    pub dovetail: AsId,
    pub matchmaker: AsId,
}

impl DovetailPath {
    /// The dovetail is the second-to-last AS of the head segment.
    pub fn from_head(head: AsPath) -> Option<DovetailPath> {
        let dovetail = head.penultimate()?;
        let matchmaker = head.destination()?;
        Some(DovetailPath { head, dovetail, matchmaker })
    }

    /// What `adversary` learns when it sits in the dovetail position. The
    /// source AS has no predecessor, so a dovetail at position 1 yields
    /// nothing.
    pub fn observe(&self, adversary: AsId) -> Option<DovetailObservation> {
        if self.dovetail != adversary {
            return None;
        }
        let ases = self.head.ases();
        let idx = ases.len() - 2;
        if idx == 0 {
            return None;
        }
        Some(DovetailObservation { predecessor: ases[idx - 1], position: idx + 1, destination: self.matchmaker })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DovetailObservation {
    pub predecessor: AsId,
    /// 1-based; the source is position 1.
    pub position: usize,
    pub destination: AsId,
}

/// Head segments eligible for a Dovetail connection, in canonical order.
pub fn dovetail_candidates(
    graph: &AsGraph,
    src: AsId,
    matchmaker: AsId,
    params: DovetailParams,
) -> Result<Vec<AsPath>, NetlayerError> {
    Ok(routable_paths(graph, src, matchmaker, params.max_peer_links, params.max_len)?
        .into_iter()
        .filter(|p| p.len() >= params.min_head_len)
        .collect())
}

/// Picks a head segment uniformly among the candidates. Draws from `rng`
/// only when there is at least one candidate.
pub fn choose_head<R: Rng + ?Sized>(candidates: &[AsPath], rng: &mut R) -> Option<DovetailPath> {
    if candidates.is_empty() {
        return None;
    }
    let i = rng.gen_range(0..candidates.len());
    DovetailPath::from_head(candidates[i].clone())
}

pub fn dovetail_build<R: Rng + ?Sized>(
    graph: &AsGraph,
    src: AsId,
    matchmaker: AsId,
    params: DovetailParams,
    rng: &mut R,
) -> Result<Option<DovetailPath>, NetlayerError> {
    let candidates = dovetail_candidates(graph, src, matchmaker, params)?;
    Ok(choose_head(&candidates, rng))
}

/// Client ISPs that can reach `predecessor` over a simple valley-free path
/// of exactly `position - 1` ASes.
pub fn dovetail_location_set(
    graph: &AsGraph,
    obs: &DovetailObservation,
    max_peer_links: usize,
) -> Result<BTreeSet<AsId>, NetlayerError> {
    if obs.position < 2 {
        return Err(NetlayerError::InvalidPosition(obs.position));
    }
    let target = graph.idx(obs.predecessor).ok_or(TopologyError::UnknownAs(obs.predecessor))?;
    let m = obs.position - 1;
    let search = ExactLengthSearch::new(graph, target, m, max_peer_links >= 1);
    Ok(graph
        .client_isp_ases()
        .into_iter()
        .filter(|&s| search.exists_from(graph.idx(s).expect("graph member")))
        .collect())
}

/// Existence of simple valley-free paths of an exact length ending at a
/// fixed AS. Walk-feasibility tables (which ignore simplicity) prune the
/// simple-path DFS.
struct ExactLengthSearch<'g> {
    graph: &'g AsGraph,
    target: usize,
    len: usize,
    allow_peer: bool,
    /// `up[l][x]`: some walk of `l` ASes from `x` to target in climbing phase.
    up: Vec<Vec<bool>>,
    down: Vec<Vec<bool>>,
}

impl<'g> ExactLengthSearch<'g> {
    fn new(graph: &'g AsGraph, target: usize, len: usize, allow_peer: bool) -> Self {
        let n = graph.len();
        let mut up = vec![vec![false; n]; len + 1];
        let mut down = vec![vec![false; n]; len + 1];
        if len >= 1 {
            up[1][target] = true;
            down[1][target] = true;
        }
        for l in 1..len {
            for x in 0..n {
                let d = graph.customers_idx(x).iter().any(|&c| down[l][c]);
                down[l + 1][x] = d;
                up[l + 1][x] = d
                    || graph.providers_idx(x).iter().any(|&p| up[l][p])
                    || (allow_peer && graph.peers_idx(x).iter().any(|&q| down[l][q]));
            }
        }
        ExactLengthSearch { graph, target, len, allow_peer, up, down }
    }

    fn exists_from(&self, start: usize) -> bool {
        if self.len == 0 || !self.up[self.len][start] {
            return false;
        }
        let mut on_path = vec![false; self.graph.len()];
        on_path[start] = true;
        self.dfs(start, self.len, false, &mut on_path)
    }

    fn dfs(&self, x: usize, remaining: usize, descending: bool, on_path: &mut [bool]) -> bool {
        if remaining == 1 {
            return x == self.target;
        }
        if x == self.target {
            return false;
        }
        let next = remaining - 1;
        let try_step = |y: usize, desc: bool, on_path: &mut [bool]| {
            let feasible = if desc { self.down[next][y] } else { self.up[next][y] };
            if !feasible || on_path[y] {
                return false;
            }
            on_path[y] = true;
            let found = self.dfs(y, next, desc, on_path);
            on_path[y] = false;
            found
        };
        if !descending {
            for &p in self.graph.providers_idx(x) {
                if try_step(p, false, on_path) {
                    return true;
                }
            }
            if self.allow_peer {
                for &q in self.graph.peers_idx(x) {
                    if try_step(q, true, on_path) {
                        return true;
                    }
                }
            }
        }
        for &c in self.graph.customers_idx(x) {
            if try_step(c, true, on_path) {
                return true;
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiPath {
    pub half_path: AsPath,
    pub helper: AsId,
    pub midway: AsId,
    pub full_path: AsPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelativePosition {
    BeforeMidway,
    Midway,
    AfterMidway,
}

impl RelativePosition {
    pub fn as_str(&self) -> &'static str {
        match self {
            RelativePosition::BeforeMidway => "before_midway",
            RelativePosition::Midway => "midway",
            RelativePosition::AfterMidway => "after_midway",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhiObservation {
    pub predecessor: AsId,
    pub relative_position: RelativePosition,
    pub destination: AsId,
}

/// Backs off from the helper toward the source until an AS is found whose
/// route to `dst`, appended to the half-path prefix, stays valley-free.
/// The source itself always qualifies when it has a route to `dst`.
pub fn phi_from_half_path(half_path: AsPath, dst_routes: &RoutingState<'_>) -> Option<PhiPath> {
    let graph = dst_routes.graph();
    let helper = half_path.destination()?;
    let ases = half_path.ases();
    for i in (0..ases.len()).rev() {
        let m = ases[i];
        let Some(tail) = dst_routes.path(m) else { continue };
        let mut full: Vec<AsId> = ases[..=i].to_vec();
        full.extend_from_slice(&tail.ases()[1..]);
        let full = AsPath::new(full);
        if validate_path(graph, &full, 1).unwrap_or(false) {
            return Some(PhiPath { half_path, helper, midway: m, full_path: full });
        }
    }
    None
}

pub fn phi_build(graph: &AsGraph, src: AsId, helper: AsId, dst: AsId) -> Result<Option<PhiPath>, NetlayerError> {
    if src == helper || src == dst || helper == dst {
        return Err(NetlayerError::NotDistinct);
    }
    let to_helper = routing_state(graph, helper)?;
    let to_dst = routing_state(graph, dst)?;
    let Some(half) = to_helper.path(src) else { return Ok(None) };
    Ok(phi_from_half_path(half, &to_dst))
}

/// Observation of `adversary` on a PHI path, if it learns the destination.
pub fn phi_observe(path: &PhiPath, adversary: AsId) -> Option<PhiObservation> {
    let full = path.full_path.ases();
    let pos = full.iter().position(|&a| a == adversary)?;
    let mid = full.iter().position(|&a| a == path.midway)?;
    if pos == 0 || pos < mid {
        return None;
    }
    let relative_position = if pos == mid { RelativePosition::Midway } else { RelativePosition::AfterMidway };
    Some(PhiObservation {
        predecessor: full[pos - 1],
        relative_position,
        destination: *full.last().expect("non-empty"),
    })
}

/// Routing states toward a fixed set of destinations, built once and then
/// shared read-only.
pub struct RouteCache<'g> {
    graph: &'g AsGraph,
    states: HashMap<AsId, RoutingState<'g>>,
}

impl<'g> RouteCache<'g> {
    pub fn new(graph: &'g AsGraph, destinations: impl IntoIterator<Item = AsId>) -> Result<Self, TopologyError> {
        let mut states = HashMap::new();
        for d in destinations {
            if !states.contains_key(&d) {
                states.insert(d, routing_state(graph, d)?);
            }
        }
        Ok(RouteCache { graph, states })
    }

    pub fn graph(&self) -> &'g AsGraph {
        self.graph
    }

    pub fn get(&self, dst: AsId) -> Option<&RoutingState<'g>> {
        self.states.get(&dst)
    }

    /// PHI connection built from cached states; `None` if either state is
    /// missing or no route exists.
    pub fn phi(&self, src: AsId, helper: AsId, dst: AsId) -> Option<PhiPath> {
        if src == helper || src == dst || helper == dst {
            return None;
        }
        let half = self.get(helper)?.path(src)?;
        phi_from_half_path(half, self.get(dst)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HornetObservation {
    pub destination: AsId,
    pub penultimate: AsId,
    pub timestamp: i64,
}

/// Sources whose route to the state's destination enters through
/// `penultimate`.
pub fn hornet_source_set_with(routes: &RoutingState<'_>, penultimate: AsId) -> BTreeSet<AsId> {
    routes
        .graph()
        .ases()
        .iter()
        .copied()
        .filter(|&s| s != routes.destination() && routes.penultimate(s) == Some(penultimate))
        .collect()
}

pub fn hornet_source_set(graph: &AsGraph, dst: AsId, penultimate: AsId) -> Result<BTreeSet<AsId>, NetlayerError> {
    Ok(hornet_source_set_with(&routing_state(graph, dst)?, penultimate))
}

/// One adversary observation in the shared CSV shape
/// `kind,predecessor,position,destination,timestamp`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObservationRecord {
    Dovetail { obs: DovetailObservation, timestamp: i64 },
    Phi { obs: PhiObservation, timestamp: i64 },
    Hornet(HornetObservation),
}

pub const OBSERVATION_HEADER: &str = "kind,predecessor,position,destination,timestamp";

impl fmt::Display for ObservationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservationRecord::Dovetail { obs, timestamp } => {
                write!(f, "dovetail,{},{},{},{}", obs.predecessor, obs.position, obs.destination, timestamp)
            }
            ObservationRecord::Phi { obs, timestamp } => write!(
                f,
                "phi,{},{},{},{}",
                obs.predecessor,
                obs.relative_position.as_str(),
                obs.destination,
                timestamp
            ),
            ObservationRecord::Hornet(h) => write!(f, "hornet,{},,{},{}", h.penultimate, h.destination, h.timestamp),
        }
    }
}

pub fn parse_observations(text: &str) -> Result<Vec<ObservationRecord>, NetlayerError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() || (line == 1 && raw == OBSERVATION_HEADER) {
            continue;
        }
        let err = |reason: String| NetlayerError::Parse { line, reason };
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", f.len())));
        }
        let predecessor: AsId = f[1].parse().map_err(err)?;
        let destination: AsId = f[3].parse().map_err(err)?;
        let timestamp: i64 = f[4].parse().map_err(|_| err(format!("bad timestamp `{}`", f[4])))?;
        let rec = match f[0] {
            "dovetail" => {
                let position: usize = f[2].parse().map_err(|_| err(format!("bad position `{}`", f[2])))?;
                if position < 2 {
                    return Err(err(format!("position must be >= 2, got {position}")));
                }
                ObservationRecord::Dovetail { obs: DovetailObservation { predecessor, position, destination }, timestamp }
            }
            "phi" => {
                let relative_position = match f[2] {
                    "midway" => RelativePosition::Midway,
                    "after_midway" => RelativePosition::AfterMidway,
                    other => return Err(err(format!("unusable PHI position `{other}`"))),
                };
                ObservationRecord::Phi { obs: PhiObservation { predecessor, relative_position, destination }, timestamp }
            }
            "hornet" => ObservationRecord::Hornet(HornetObservation { destination, penultimate: predecessor, timestamp }),
            other => return Err(err(format!("unknown observation kind `{other}`"))),
        };
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{asn, parse_as_relationships};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t6() -> AsGraph {
        parse_as_relationships(include_str!("../../../fixtures/t6.txt")).unwrap()
    }

    fn p(v: &[u32]) -> AsPath {
        AsPath::new(v.iter().map(|&x| asn(x)).collect())
    }

    fn params(min_head_len: usize) -> DovetailParams {
        DovetailParams { min_head_len, max_peer_links: 1, max_len: 5 }
    }

    #[test]
    fn dovetail_build_t6() {
        let g = t6();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = dovetail_build(&g, asn(6), asn(5), params(5), &mut rng).unwrap().unwrap();
            assert!(d.head == p(&[6, 3, 1, 2, 5]) || d.head == p(&[6, 4, 1, 2, 5]));
            assert_eq!(d.dovetail, asn(2));
        }
        assert!(dovetail_build(&g, asn(6), asn(5), params(6), &mut rng).unwrap().is_none());
        let a = dovetail_build(&g, asn(6), asn(5), params(4), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = dovetail_build(&g, asn(6), asn(5), params(4), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dovetail_observation_position() {
        let d = DovetailPath::from_head(p(&[6, 3, 1, 2, 5])).unwrap();
        let o = d.observe(asn(2)).unwrap();
        assert_eq!((o.predecessor, o.position, o.destination), (asn(1), 4, asn(5)));
        assert!(d.observe(asn(1)).is_none());
        assert!(DovetailPath::from_head(p(&[6, 5])).unwrap().observe(asn(6)).is_none());
    }

    #[test]
    fn location_sets_t6() {
        let g = t6();
        let obs = |pred, k| DovetailObservation { predecessor: asn(pred), position: k, destination: asn(5) };
        assert_eq!(dovetail_location_set(&g, &obs(4, 3), 1).unwrap(), BTreeSet::from([asn(6)]));
        assert!(dovetail_location_set(&g, &obs(4, 2), 1).unwrap().is_empty());
        assert_eq!(dovetail_location_set(&g, &obs(6, 2), 1).unwrap(), BTreeSet::from([asn(6)]));
        // [5,2,1] climbs then crosses the 2-1 peering; [6,3,1] and [6,4,1] climb
        assert_eq!(dovetail_location_set(&g, &obs(1, 4), 1).unwrap(), BTreeSet::from([asn(5), asn(6)]));
        assert_eq!(dovetail_location_set(&g, &obs(1, 4), 0).unwrap(), BTreeSet::from([asn(6)]));
        assert!(dovetail_location_set(&g, &obs(1, 1), 1).is_err());
    }

    #[test]
    fn phi_t6() {
        let g = t6();
        let a = phi_build(&g, asn(6), asn(1), asn(5)).unwrap().unwrap();
        assert_eq!(a.half_path, p(&[6, 3, 1]));
        assert_eq!(a.midway, asn(1));
        assert_eq!(a.full_path, p(&[6, 3, 1, 2, 5]));
        let b = phi_build(&g, asn(6), asn(2), asn(5)).unwrap().unwrap();
        assert_eq!(b.half_path, p(&[6, 4, 2]));
        assert_eq!(b.midway, asn(2));
        assert_eq!(b.full_path, p(&[6, 4, 2, 5]));
        assert!(matches!(phi_build(&g, asn(6), asn(5), asn(5)), Err(NetlayerError::NotDistinct)));
        assert!(matches!(phi_build(&g, asn(6), asn(6), asn(5)), Err(NetlayerError::NotDistinct)));
    }

    #[test]
    fn phi_observations_t6() {
        let g = t6();
        let path = phi_build(&g, asn(6), asn(1), asn(5)).unwrap().unwrap();
        assert_eq!(
            phi_observe(&path, asn(2)),
            Some(PhiObservation { predecessor: asn(1), relative_position: RelativePosition::AfterMidway, destination: asn(5) })
        );
        assert_eq!(
            phi_observe(&path, asn(1)),
            Some(PhiObservation { predecessor: asn(3), relative_position: RelativePosition::Midway, destination: asn(5) })
        );
        assert_eq!(phi_observe(&path, asn(3)), None);
        assert_eq!(phi_observe(&path, asn(4)), None);
    }

    #[test]
    fn phi_backs_off_to_transit_capable_as() {
        // 1 and 2 peer and both provide 3; 4 hangs off 1, 6 off 5 off 2.
        let g = parse_as_relationships("1|2|0\n1|3|-1\n2|3|-1\n1|4|-1\n2|5|-1\n5|6|-1").unwrap();
        let path = phi_build(&g, asn(6), asn(1), asn(4)).unwrap().unwrap();
        assert!(validate_path(&g, &path.full_path, 1).unwrap());
        assert_eq!(path.half_path, p(&[6, 5, 2, 1]));
        assert_eq!(path.midway, asn(1));
        // helper 3 reached downhill via [6,5,2,3]; 3 can't climb back, so back off to 2
        let path = phi_build(&g, asn(6), asn(3), asn(4)).unwrap().unwrap();
        assert_eq!(path.half_path, p(&[6, 5, 2, 3]));
        assert_eq!(path.midway, asn(2));
        assert_eq!(path.full_path, p(&[6, 5, 2, 1, 4]));
    }

    #[test]
    fn hornet_sets_t6() {
        let g = t6();
        assert_eq!(
            hornet_source_set(&g, asn(5), asn(2)).unwrap(),
            [1, 2, 3, 4, 6].into_iter().map(asn).collect::<BTreeSet<_>>()
        );
        assert!(hornet_source_set(&g, asn(5), asn(4)).unwrap().is_empty());
        let split = parse_as_relationships("1|2|-1\n3|4|-1").unwrap();
        assert!(hornet_source_set(&split, asn(4), asn(3)).unwrap() == BTreeSet::from([asn(3)]));
        assert!(hornet_source_set(&split, asn(4), asn(1)).unwrap().is_empty());
    }

    #[test]
    fn observation_csv_roundtrip() {
        let recs = vec![
            ObservationRecord::Dovetail {
                obs: DovetailObservation { predecessor: asn(1), position: 4, destination: asn(5) },
                timestamp: 3,
            },
            ObservationRecord::Phi {
                obs: PhiObservation { predecessor: asn(3), relative_position: RelativePosition::Midway, destination: asn(5) },
                timestamp: 0,
            },
            ObservationRecord::Hornet(HornetObservation { destination: asn(5), penultimate: asn(2), timestamp: 17000 }),
        ];
        let mut text = format!("{OBSERVATION_HEADER}\n");
        for r in &recs {
            text.push_str(&format!("{r}\n"));
        }
        assert_eq!(parse_observations(&text).unwrap(), recs);
        assert!(parse_observations("dovetail,1,1,5,0\n").is_err());
    }
}
