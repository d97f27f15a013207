//! Relays and the guard-selection algorithms: bandwidth-weighted (vanilla),
//! suspect-free (g-select), resilience-blended (Counter-RAPTOR style), and
//! a trust-feature clustering of client locations.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::topology::{routing_state, AsGraph, AsId, Resilience, RoutingState, TopologyError};

#[derive(Debug, Error)]
pub enum AnonnetError {
    #[error("relay file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate relay id `{0}`")]
    DuplicateRelay(String),
    #[error("no guard relay with positive bandwidth")]
    NoEligibleGuard,
    #[error("no suspect-free guard for client AS{0}")]
    NoSuspectFreeGuard(AsId),
    #[error("guard weights are all zero")]
    DegenerateWeights,
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("medoid list is empty")]
    NoMedoids,
    #[error("top_k_guards must be at least 1")]
    InvalidTopK,
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relay {
    pub id: String,
    pub host_as: AsId,
    pub bandwidth: f64,
    pub is_guard: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelaySet {
    relays: Vec<Relay>,
}

impl RelaySet {
    pub fn new(relays: Vec<Relay>) -> Result<RelaySet, AnonnetError> {
        let mut seen = HashSet::new();
        for r in &relays {
            if !seen.insert(r.id.as_str()) {
                return Err(AnonnetError::DuplicateRelay(r.id.clone()));
            }
        }
        Ok(RelaySet { relays })
    }

    pub fn relays(&self) -> &[Relay] {
        &self.relays
    }

    pub fn len(&self) -> usize {
        self.relays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relays.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Relay> {
        self.relays.iter().find(|r| r.id == id)
    }

    /// Guards with positive bandwidth, in file order.
    pub fn eligible_guards(&self) -> impl Iterator<Item = &Relay> {
        self.relays.iter().filter(|r| r.is_guard && r.bandwidth > 0.0)
    }

    /// Distinct ASes hosting an eligible guard.
    pub fn guard_ases(&self) -> BTreeSet<AsId> {
        self.eligible_guards().map(|r| r.host_as).collect()
    }

    /// The `k` highest-bandwidth guards, ties broken by relay id.
    pub fn top_guards(&self, k: usize) -> Vec<&Relay> {
        let mut g: Vec<&Relay> = self.eligible_guards().collect();
        g.sort_by(|a, b| b.bandwidth.total_cmp(&a.bandwidth).then_with(|| a.id.cmp(&b.id)));
        g.truncate(k);
        g
    }
}

pub fn relays_to_csv(relays: &RelaySet) -> String {
    let mut out = String::from("id,as,bandwidth,is_guard\n");
    for r in relays.relays() {
        out.push_str(&format!("{},{},{},{}\n", r.id, r.host_as, r.bandwidth, u8::from(r.is_guard)));
    }
    out
}

/// Parses `id,as,bandwidth,is_guard` CSV. An empty input yields an empty set.
pub fn parse_relays(text: &str) -> Result<RelaySet, AnonnetError> {
    if text.trim().is_empty() {
        return Ok(RelaySet::default());
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| AnonnetError::Parse { line: 1, reason: e.to_string() })?.clone();
    let expected = ["id", "as", "bandwidth", "is_guard"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(AnonnetError::Parse { line: 1, reason: format!("expected header `{}`", expected.join(",")) });
    }
    let mut relays = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| AnonnetError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let err = |reason: String| AnonnetError::Parse { line, reason };
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(err("empty relay id".into()));
        }
        let host_as: AsId = rec[1].parse().map_err(err)?;
        let bandwidth: f64 = rec[2].parse().map_err(|_| err(format!("bad bandwidth `{}`", &rec[2])))?;
        if !bandwidth.is_finite() || bandwidth < 0.0 {
            return Err(err(format!("bandwidth must be non-negative, got `{}`", &rec[2])));
        }
        let is_guard = match &rec[3] {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("is_guard must be 0 or 1, got `{other}`"))),
        };
        relays.push(Relay { id, host_as, bandwidth, is_guard });
    }
    RelaySet::new(relays)
}

/// A probability distribution over relay ids.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardDistribution {
    support: BTreeMap<String, f64>,
}

impl GuardDistribution {
    /// Normalizes non-negative weights. Zero-weight entries are dropped.
    pub fn from_weights(weights: impl IntoIterator<Item = (String, f64)>) -> Result<Self, AnonnetError> {
        let weights: Vec<(String, f64)> = weights.into_iter().filter(|(_, w)| *w > 0.0).collect();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if weights.is_empty() || total <= 0.0 {
            return Err(AnonnetError::DegenerateWeights);
        }
        Ok(GuardDistribution { support: weights.into_iter().map(|(id, w)| (id, w / total)).collect() })
    }

    pub fn prob(&self, relay_id: &str) -> f64 {
        self.support.get(relay_id).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.support.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.support.values().sum()
    }

    /// `entity,probability` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("entity,probability\n");
        for (k, v) in &self.support {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }
}

pub fn vanilla_guard_dist(relays: &RelaySet) -> Result<GuardDistribution, AnonnetError> {
    let weights: Vec<(String, f64)> = relays.eligible_guards().map(|r| (r.id.clone(), r.bandwidth)).collect();
    if weights.is_empty() {
        return Err(AnonnetError::NoEligibleGuard);
    }
    GuardDistribution::from_weights(weights)
}

/// Bandwidth-weighted choice among guards whose route from `client`
/// contains no suspect AS (endpoints included).
pub fn gselect_guard_dist(
    graph: &AsGraph,
    relays: &RelaySet,
    client: AsId,
    suspects: &BTreeSet<AsId>,
) -> Result<GuardDistribution, AnonnetError> {
    let routes = GuardRoutes::new(graph, relays)?;
    gselect_with_routes(&routes, relays, client, suspects)
}

/// Routing states toward every guard-hosting AS, computed once and shared
/// across clients.
pub struct GuardRoutes<'g> {
    states: HashMap<AsId, RoutingState<'g>>,
}

impl<'g> GuardRoutes<'g> {
    pub fn new(graph: &'g AsGraph, relays: &RelaySet) -> Result<Self, AnonnetError> {
        let mut states = HashMap::new();
        for a in relays.guard_ases() {
            if graph.contains(a) {
                states.insert(a, routing_state(graph, a)?);
            }
        }
        Ok(GuardRoutes { states })
    }

    pub fn state(&self, guard_as: AsId) -> Option<&RoutingState<'g>> {
        self.states.get(&guard_as)
    }

    /// Whether any AS of `set` is on the client→guard route. `None` when
    /// the guard is unreachable.
    pub fn hits(&self, client: AsId, guard_as: AsId, set: &HashSet<AsId>) -> Option<bool> {
        self.states.get(&guard_as)?.path_hits(client, set)
    }
}

pub fn gselect_with_routes(
    routes: &GuardRoutes<'_>,
    relays: &RelaySet,
    client: AsId,
    suspects: &BTreeSet<AsId>,
) -> Result<GuardDistribution, AnonnetError> {
    if relays.eligible_guards().next().is_none() {
        return Err(AnonnetError::NoEligibleGuard);
    }
    let suspects: HashSet<AsId> = suspects.iter().copied().collect();
    let weights: Vec<(String, f64)> = relays
        .eligible_guards()
        .filter(|g| routes.hits(client, g.host_as, &suspects) == Some(false))
        .map(|g| (g.id.clone(), g.bandwidth))
        .collect();
    if weights.is_empty() {
        return Err(AnonnetError::NoSuspectFreeGuard(client));
    }
    GuardDistribution::from_weights(weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterRaptorConfig {
    alpha: f64,
}

impl CounterRaptorConfig {
    pub const DEFAULT_ALPHA: f64 = 0.5;

    pub fn new(alpha: f64) -> Result<Self, AnonnetError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(AnonnetError::InvalidAlpha(alpha));
        }
        Ok(CounterRaptorConfig { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for CounterRaptorConfig {
    fn default() -> Self {
        CounterRaptorConfig { alpha: Self::DEFAULT_ALPHA }
    }
}

/// Blends resilience with normalized bandwidth: `alpha * R + (1 - alpha) * bw / sum_bw`.
///
/// `resilience_of(guard_as)` supplies R for the client; a guard inside the
/// client's own AS can't be hijacked away and gets R = 1.
pub fn counter_raptor_blend(
    relays: &RelaySet,
    client: AsId,
    cfg: CounterRaptorConfig,
    mut resilience_of: impl FnMut(AsId) -> Result<Resilience, AnonnetError>,
) -> Result<GuardDistribution, AnonnetError> {
    let guards: Vec<&crate::anonnet::Relay> = relays.eligible_guards().collect();
    if guards.is_empty() {
        return Err(AnonnetError::NoEligibleGuard);
    }
    let total_bw: f64 = guards.iter().map(|g| g.bandwidth).sum();
    let mut cache: HashMap<AsId, f64> = HashMap::new();
    let mut weights = Vec::with_capacity(guards.len());
    for g in guards {
        let r = match cache.get(&g.host_as) {
            Some(&r) => r,
            None => {
                let r = if g.host_as == client { 1.0 } else { resilience_of(g.host_as)?.value() };
                cache.insert(g.host_as, r);
                r
            }
        };
        let w = cfg.alpha * r + (1.0 - cfg.alpha) * (g.bandwidth / total_bw);
        weights.push((g.id.clone(), w));
    }
    GuardDistribution::from_weights(weights)
}

pub fn counter_raptor_guard_dist(
    graph: &AsGraph,
    relays: &RelaySet,
    client: AsId,
    cfg: CounterRaptorConfig,
) -> Result<GuardDistribution, AnonnetError> {
    counter_raptor_blend(relays, client, cfg, |guard_as| Ok(crate::topology::resilience(graph, client, guard_as)?))
}

/// Assignment of client ASes to medoid-identified clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub assignment: BTreeMap<AsId, AsId>,
    pub medoids: Vec<AsId>,
}

impl Clustering {
    pub fn cluster_of(&self, client: AsId) -> Option<AsId> {
        self.assignment.get(&client).copied()
    }

    pub fn members(&self, cluster: AsId) -> BTreeSet<AsId> {
        self.assignment.iter().filter(|(_, &c)| c == cluster).map(|(&a, _)| a).collect()
    }
}

/// Feature bits for one client: one bit per (top guard, adversary AS),
/// set when the adversary lies on the client→guard route. An unreachable
/// guard counts as observed.
pub fn taps_features(routes: &GuardRoutes<'_>, client: AsId, guard_ases: &[AsId], adversaries: &[AsId]) -> Vec<bool> {
    let mut bits = Vec::with_capacity(guard_ases.len() * adversaries.len());
    for &g in guard_ases {
        let path = routes.state(g).and_then(|s| s.path(client));
        for &adv in adversaries {
            bits.push(path.as_ref().is_none_or(|p| p.contains(adv)));
        }
    }
    bits
}

pub(crate) fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Assigns every client to the medoid whose feature vector is nearest in
/// Hamming distance; ties go to the lowest medoid AS. Deterministic.
pub fn taps_cluster(
    graph: &AsGraph,
    client_ases: &BTreeSet<AsId>,
    medoids: &[AsId],
    adversary_ases: &[AsId],
    guards: &RelaySet,
    top_k_guards: usize,
) -> Result<Clustering, AnonnetError> {
    if medoids.is_empty() {
        return Err(AnonnetError::NoMedoids);
    }
    if top_k_guards == 0 {
        return Err(AnonnetError::InvalidTopK);
    }
    let routes = GuardRoutes::new(graph, guards)?;
    let guard_ases: Vec<AsId> = guards.top_guards(top_k_guards).iter().map(|g| g.host_as).collect();
    let mut sorted_medoids: Vec<AsId> = medoids.to_vec();
    sorted_medoids.sort();
    sorted_medoids.dedup();
    let medoid_features: Vec<(AsId, Vec<bool>)> = sorted_medoids
        .iter()
        .map(|&m| (m, taps_features(&routes, m, &guard_ases, adversary_ases)))
        .collect();
    let assignment = client_ases
        .iter()
        .map(|&c| {
            let f = taps_features(&routes, c, &guard_ases, adversary_ases);
            let (best, _) = medoid_features
                .iter()
                .map(|(m, mf)| (*m, hamming(&f, mf)))
                .min_by_key(|&(m, d)| (d, m))
                .expect("non-empty medoids");
            (c, best)
        })
        .collect();
    Ok(Clustering { assignment, medoids: sorted_medoids })
}
