//! Temporal deanonymization engines. Each is a deterministic function of
//! its inputs and an explicit rng stream.
//!
//! Connection linking is treated as given: a simulation knows which
//! observations belong to the simulated client and feeds the engine only
//! the observation contents an adversary would see.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::{Arc, Mutex};

use rand::Rng;
use thiserror::Error;

use crate::anonnet::{
    counter_raptor_blend, gselect_with_routes, AnonnetError, CounterRaptorConfig, GuardDistribution, GuardRoutes,
    RelaySet,
};
use crate::metrics::entropy_bits;
use crate::mobility::{CountryAsMap, MobilityError, MobilityTrace};
use crate::netlayer::{
    choose_head, dovetail_candidates, dovetail_location_set, phi_observe, DovetailObservation, DovetailParams,
    NetlayerError, PhiObservation, RouteCache,
};
use crate::topology::{hijack_vec, resilience_table, AsGraph, AsId, AsPath, Resilience, RoutingState, TopologyError};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("observations are inconsistent with every candidate")]
    Inconsistent,
    #[error("prior puts mass on AS{0}, which is not a candidate")]
    PriorOutsideCandidates(AsId),
    #[error("probability weights are empty or all zero")]
    EmptyBelief,
    #[error("location list is empty")]
    NoLocations,
    #[error("client AS{0} is not assigned in every clustering")]
    Unassigned(AsId),
    #[error("true client AS{0} is not among the candidates")]
    TruthNotCandidate(AsId),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("route-change log line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Anonnet(#[from] AnonnetError),
    #[error(transparent)]
    Netlayer(#[from] NetlayerError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Possibility set over candidate client locations (or users).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnonymitySet<T: Ord = AsId> {
    members: BTreeSet<T>,
}

/// Result of one intersection; `inconsistent` flags an empty result, which
/// signals a linking error rather than a failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intersection<T: Ord = AsId> {
    pub set: AnonymitySet<T>,
    pub inconsistent: bool,
}

impl<T: Ord + Clone> AnonymitySet<T> {
    pub fn new(members: impl IntoIterator<Item = T>) -> Self {
        AnonymitySet { members: members.into_iter().collect() }
    }

    pub fn members(&self) -> &BTreeSet<T> {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, x: &T) -> bool {
        self.members.contains(x)
    }
}

pub fn intersect<T: Ord + Clone>(anonset: &AnonymitySet<T>, update: &BTreeSet<T>) -> Intersection<T> {
    let members: BTreeSet<T> = anonset.members.intersection(update).cloned().collect();
    let inconsistent = members.is_empty();
    Intersection { set: AnonymitySet { members }, inconsistent }
}

/// Probability distribution over candidate client ASes.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorBelief {
    probabilities: BTreeMap<AsId, f64>,
}

impl PosteriorBelief {
    pub fn uniform(candidates: impl IntoIterator<Item = AsId>) -> Result<Self, AttackError> {
        Self::from_weights(candidates.into_iter().map(|a| (a, 1.0)))
    }

    /// Normalizes non-negative weights; zero-weight entries stay in the
    /// support with probability zero.
    pub fn from_weights(weights: impl IntoIterator<Item = (AsId, f64)>) -> Result<Self, AttackError> {
        let mut probabilities: BTreeMap<AsId, f64> = weights.into_iter().collect();
        let total: f64 = probabilities.values().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(AttackError::EmptyBelief);
        }
        for p in probabilities.values_mut() {
            *p /= total;
        }
        Ok(PosteriorBelief { probabilities })
    }

    pub fn prob(&self, a: AsId) -> f64 {
        self.probabilities.get(&a).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AsId, f64)> + '_ {
        self.probabilities.iter().map(|(&a, &p)| (a, p))
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Most probable AS; ties go to the lowest AS number.
    pub fn map_estimate(&self) -> Option<(AsId, f64)> {
        let mut best: Option<(AsId, f64)> = None;
        for (&a, &p) in &self.probabilities {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((a, p));
            }
        }
        best
    }

    /// One Bayes step: multiply by `likelihood(location)` and renormalize.
    pub fn update(&self, likelihood: impl Fn(AsId) -> f64) -> Result<Self, AttackError> {
        let weighted: BTreeMap<AsId, f64> =
            self.probabilities.iter().map(|(&a, &p)| (a, if p > 0.0 { p * likelihood(a) } else { 0.0 })).collect();
        let total: f64 = weighted.values().sum();
        if !(total > 0.0) {
            return Err(AttackError::Inconsistent);
        }
        Ok(PosteriorBelief { probabilities: weighted.into_iter().map(|(a, w)| (a, w / total)).collect() })
    }
}

/// Posterior over `candidates` proportional to `prior(L) * prod_i likelihood(obs_i, L)`.
pub fn bayes_location_inference<O>(
    candidates: &BTreeSet<AsId>,
    likelihood: impl Fn(&O, AsId) -> f64,
    prior: &PosteriorBelief,
    observations: &[O],
) -> Result<PosteriorBelief, AttackError> {
    if let Some((a, _)) = prior.iter().find(|(a, p)| *p > 0.0 && !candidates.contains(a)) {
        return Err(AttackError::PriorOutsideCandidates(a));
    }
    let mut belief = PosteriorBelief::from_weights(candidates.iter().map(|&a| (a, prior.prob(a))))?;
    for obs in observations {
        belief = belief.update(|l| likelihood(obs, l))?;
    }
    Ok(belief)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision<T> {
    Guess(T),
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuessOutcome<T> {
    pub decision: Decision<T>,
    pub score: f64,
}

impl<T> GuessOutcome<T> {
    pub fn from_score(top: Option<T>, score: f64, threshold: f64) -> Self {
        let decision = match top {
            Some(t) if score >= threshold => Decision::Guess(t),
            _ => Decision::Reject,
        };
        GuessOutcome { decision, score }
    }
}

/// Guess the MAP location when its posterior reaches `threshold`.
pub fn guess_from_belief(belief: &PosteriorBelief, threshold: f64) -> GuessOutcome<AsId> {
    match belief.map_estimate() {
        Some((a, p)) => GuessOutcome::from_score(Some(a), p, threshold),
        None => GuessOutcome { decision: Decision::Reject, score: 0.0 },
    }
}

/// Probability that a client who picks its guard at `locations[0]` and keeps
/// it is compromised at one or more locations:
/// `sum_g Pr(g) * [exists l: compromised(l, host_as(g))]`.
pub fn mobility_compromise_prob(
    relays: &RelaySet,
    locations: &[AsId],
    guard_dist_fn: impl FnOnce(AsId) -> Result<GuardDistribution, AnonnetError>,
    mut compromised: impl FnMut(AsId, AsId) -> bool,
) -> Result<f64, AttackError> {
    let first = *locations.first().ok_or(AttackError::NoLocations)?;
    let dist = guard_dist_fn(first)?;
    if dist.is_empty() {
        return Err(AnonnetError::NoEligibleGuard.into());
    }
    let mut total = 0.0;
    for (id, p) in dist.iter() {
        let relay = relays.get(id).ok_or_else(|| AttackError::InvalidParameter(format!("unknown relay `{id}`")))?;
        if locations.iter().any(|&l| compromised(l, relay.host_as)) {
            total += p;
        }
    }
    Ok(total.min(1.0))
}

/// Whether a set of adversary ASes lies on client→guard routes.
pub struct OnPathPredicate<'a, 'g> {
    routes: &'a GuardRoutes<'g>,
    adversaries: HashSet<AsId>,
}

impl<'a, 'g> OnPathPredicate<'a, 'g> {
    pub fn new(routes: &'a GuardRoutes<'g>, adversaries: impl IntoIterator<Item = AsId>) -> Self {
        OnPathPredicate { routes, adversaries: adversaries.into_iter().collect() }
    }

    pub fn check(&self, client: AsId, guard_as: AsId) -> bool {
        self.routes.hits(client, guard_as, &self.adversaries).unwrap_or(false)
    }
}

/// Whether `attacker`'s origin hijack of the guard's prefix diverts the
/// client. Outcomes for `guard_ases` are computed up front; other guard
/// ASes are evaluated on demand.
pub struct HijackPredicate<'g> {
    graph: &'g AsGraph,
    attacker: AsId,
    cache: HashMap<AsId, Vec<bool>>,
}

impl<'g> HijackPredicate<'g> {
    pub fn new(graph: &'g AsGraph, attacker: AsId, guard_ases: impl IntoIterator<Item = AsId>) -> Self {
        let mut cache = HashMap::new();
        if let Some(a) = graph.idx(attacker) {
            for g in guard_ases {
                if let Some(gi) = graph.idx(g) {
                    if g != attacker {
                        cache.insert(g, hijack_vec(graph, gi, a));
                    }
                }
            }
        }
        HijackPredicate { graph, attacker, cache }
    }

    pub fn check(&self, client: AsId, guard_as: AsId) -> bool {
        if guard_as == self.attacker {
            return false;
        }
        let (Some(a), Some(g), Some(c)) = (self.graph.idx(self.attacker), self.graph.idx(guard_as), self.graph.idx(client))
        else {
            return false;
        };
        match self.cache.get(&guard_as) {
            Some(v) => v[c],
            None => hijack_vec(self.graph, g, a)[c],
        }
    }
}

/// Resilience of every client toward every guard AS.
pub struct ResilienceTables {
    tables: HashMap<AsId, HashMap<AsId, Resilience>>,
}

impl ResilienceTables {
    pub fn new(graph: &AsGraph, relays: &RelaySet) -> Result<Self, AttackError> {
        let mut tables = HashMap::new();
        for g in relays.guard_ases() {
            if !graph.contains(g) {
                continue;
            }
            let t: HashMap<AsId, Resilience> =
                resilience_table(graph, g)?.into_iter().filter_map(|(c, r)| r.map(|r| (c, r))).collect();
            tables.insert(g, t);
        }
        Ok(ResilienceTables { tables })
    }

    pub fn get(&self, client: AsId, guard_as: AsId) -> Option<Resilience> {
        self.tables.get(&guard_as)?.get(&client).copied()
    }

    pub fn guard_dist(&self, relays: &RelaySet, client: AsId, cfg: CounterRaptorConfig) -> Result<GuardDistribution, AnonnetError> {
        counter_raptor_blend(relays, client, cfg, |g| {
            // unknown guard ASes cannot be reached at all
            Ok(self.get(client, g).unwrap_or(Resilience { safe: 0, candidates: 1 }))
        })
    }
}

pub(crate) fn sample_guard<R: Rng + ?Sized>(dist: &GuardDistribution, rng: &mut R) -> String {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (id, p) in dist.iter() {
        acc += p;
        last = Some(id);
        if u < acc {
            return id.to_string();
        }
    }
    last.expect("non-empty distribution").to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRun {
    /// Guards observed, in order.
    pub guards: Vec<String>,
    /// `beliefs[i]` is the posterior after `i` observations.
    pub beliefs: Vec<PosteriorBelief>,
}

/// Repeated guard selections from `true_client` with replacement, each fed
/// into a cumulative Bayes update over `candidates` with a uniform prior.
/// A candidate without a valid distribution has likelihood zero.
pub fn guard_inference_sim<R: Rng + ?Sized>(
    dists: &BTreeMap<AsId, Option<GuardDistribution>>,
    true_client: AsId,
    n_observations: usize,
    rng: &mut R,
) -> Result<InferenceRun, AttackError> {
    let truth = dists
        .get(&true_client)
        .ok_or(AttackError::TruthNotCandidate(true_client))?
        .as_ref()
        .ok_or(AnonnetError::NoSuspectFreeGuard(true_client))?;
    let mut belief = PosteriorBelief::uniform(dists.keys().copied())?;
    let mut beliefs = vec![belief.clone()];
    let mut guards = Vec::with_capacity(n_observations);
    for _ in 0..n_observations {
        let g = sample_guard(truth, rng);
        belief = belief.update(|l| dists[&l].as_ref().map_or(0.0, |d| d.prob(&g)))?;
        beliefs.push(belief.clone());
        guards.push(g);
    }
    Ok(InferenceRun { guards, beliefs })
}

/// g-select distributions for every candidate.
pub fn gselect_dists(
    graph: &AsGraph,
    relays: &RelaySet,
    suspects: &BTreeSet<AsId>,
    candidates: &BTreeSet<AsId>,
) -> Result<BTreeMap<AsId, Option<GuardDistribution>>, AttackError> {
    let routes = GuardRoutes::new(graph, relays)?;
    candidates
        .iter()
        .map(|&c| match gselect_with_routes(&routes, relays, c, suspects) {
            Ok(d) => Ok((c, Some(d))),
            Err(AnonnetError::NoSuspectFreeGuard(_)) => Ok((c, None)),
            Err(e) => Err(e.into()),
        })
        .collect()
}

pub fn counter_raptor_dists(
    graph: &AsGraph,
    relays: &RelaySet,
    cfg: CounterRaptorConfig,
    candidates: &BTreeSet<AsId>,
) -> Result<BTreeMap<AsId, Option<GuardDistribution>>, AttackError> {
    let tables = ResilienceTables::new(graph, relays)?;
    candidates
        .iter()
        .map(|&c| match tables.guard_dist(relays, c, cfg) {
            Ok(d) => Ok((c, Some(d))),
            Err(AnonnetError::DegenerateWeights) => Ok((c, None)),
            Err(e) => Err(e.into()),
        })
        .collect()
}

pub fn denasa_guard_inference_sim<R: Rng + ?Sized>(
    graph: &AsGraph,
    relays: &RelaySet,
    suspects: &BTreeSet<AsId>,
    true_client: AsId,
    candidates: &BTreeSet<AsId>,
    n_observations: usize,
    rng: &mut R,
) -> Result<InferenceRun, AttackError> {
    if !candidates.contains(&true_client) {
        return Err(AttackError::TruthNotCandidate(true_client));
    }
    let dists = gselect_dists(graph, relays, suspects, candidates)?;
    guard_inference_sim(&dists, true_client, n_observations, rng)
}

/// Ranks candidates by the expected posterior entropy after one guard
/// observation, leakiest (lowest) first. Ties by AS number.
pub fn leakiness_ranking(dists: &BTreeMap<AsId, Option<GuardDistribution>>) -> Result<Vec<(AsId, f64)>, AttackError> {
    let prior = PosteriorBelief::uniform(dists.keys().copied())?;
    let mut out = Vec::new();
    for (&l, d) in dists {
        let Some(d) = d else { continue };
        let mut h = 0.0;
        for (g, p) in d.iter() {
            let post = prior.update(|c| dists[&c].as_ref().map_or(0.0, |dc| dc.prob(g)))?;
            h += p * entropy_bits(&post);
        }
        out.push((l, h));
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Shared state for repeated Dovetail simulations on one graph: location
/// sets depend only on the observation, head candidates only on the pair.
pub struct DovetailEngine<'g> {
    graph: &'g AsGraph,
    params: DovetailParams,
    locations: Mutex<HashMap<(AsId, usize), Arc<BTreeSet<AsId>>>>,
    heads: Mutex<HashMap<(AsId, AsId), Arc<Vec<AsPath>>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DovetailRun {
    pub initial_size: usize,
    /// Set size after each connection.
    pub sizes: Vec<usize>,
    pub observations: Vec<Option<DovetailObservation>>,
    pub final_set: AnonymitySet,
    pub inconsistent: bool,
}

impl<'g> DovetailEngine<'g> {
    pub fn new(graph: &'g AsGraph, params: DovetailParams) -> Self {
        DovetailEngine { graph, params, locations: Mutex::new(HashMap::new()), heads: Mutex::new(HashMap::new()) }
    }

    pub fn params(&self) -> DovetailParams {
        self.params
    }

    pub fn heads(&self, src: AsId, matchmaker: AsId) -> Result<Arc<Vec<AsPath>>, AttackError> {
        if let Some(h) = self.heads.lock().expect("lock").get(&(src, matchmaker)) {
            return Ok(h.clone());
        }
        let h = Arc::new(dovetail_candidates(self.graph, src, matchmaker, self.params)?);
        self.heads.lock().expect("lock").insert((src, matchmaker), h.clone());
        Ok(h)
    }

    pub fn location_set(&self, obs: &DovetailObservation) -> Result<Arc<BTreeSet<AsId>>, AttackError> {
        let key = (obs.predecessor, obs.position);
        if let Some(s) = self.locations.lock().expect("lock").get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(dovetail_location_set(self.graph, obs, self.params.max_peer_links)?);
        self.locations.lock().expect("lock").insert(key, s.clone());
        Ok(s)
    }

    /// One client making `n_connections` connections, each to a matchmaker
    /// drawn uniformly from `matchmakers`.
    pub fn intersection_sim<R: Rng + ?Sized>(
        &self,
        adversary: AsId,
        true_client: AsId,
        matchmakers: &[AsId],
        n_connections: usize,
        rng: &mut R,
    ) -> Result<DovetailRun, AttackError> {
        let universe = self.graph.client_isp_ases();
        if !universe.contains(&true_client) {
            return Err(AttackError::InvalidParameter(format!("AS{true_client} is not a client ISP")));
        }
        if matchmakers.is_empty() {
            return Err(AttackError::InvalidParameter("no matchmakers".into()));
        }
        let mut set = AnonymitySet::new(universe);
        let initial_size = set.len();
        let mut sizes = Vec::with_capacity(n_connections);
        let mut observations = Vec::with_capacity(n_connections);
        let mut inconsistent = false;
        for _ in 0..n_connections {
            let mm = matchmakers[rng.gen_range(0..matchmakers.len())];
            let mut seen = None;
            if mm != true_client {
                let heads = self.heads(true_client, mm)?;
                if let Some(path) = choose_head(&heads, rng) {
                    if let Some(obs) = path.observe(adversary) {
                        let loc = self.location_set(&obs)?;
                        let step = intersect(&set, &loc);
                        inconsistent |= step.inconsistent;
                        set = step.set;
                        seen = Some(obs);
                    }
                }
            }
            observations.push(seen);
            sizes.push(set.len());
        }
        Ok(DovetailRun { initial_size, sizes, observations, final_set: set, inconsistent })
    }

    /// Fraction of sampled (source, matchmaker) pairs in which each AS is
    /// the dovetail. Pairs with no eligible head count toward the total.
    pub fn frequency<R: Rng + ?Sized>(
        &self,
        sources: &[AsId],
        matchmakers: &[AsId],
        n_samples: usize,
        rng: &mut R,
    ) -> Result<BTreeMap<AsId, f64>, AttackError> {
        if n_samples == 0 || sources.is_empty() || matchmakers.is_empty() {
            return Err(AttackError::InvalidParameter("empty sampling pools or zero samples".into()));
        }
        let mut counts: BTreeMap<AsId, usize> = BTreeMap::new();
        for _ in 0..n_samples {
            let src = sources[rng.gen_range(0..sources.len())];
            let mm = matchmakers[rng.gen_range(0..matchmakers.len())];
            if src == mm {
                continue;
            }
            if let Some(path) = choose_head(&self.heads(src, mm)?, rng) {
                *counts.entry(path.dovetail).or_default() += 1;
            }
        }
        Ok(counts.into_iter().map(|(a, c)| (a, c as f64 / n_samples as f64)).collect())
    }
}

pub fn dovetail_intersection_sim<R: Rng + ?Sized>(
    graph: &AsGraph,
    adversary: AsId,
    true_client: AsId,
    matchmakers: &[AsId],
    n_connections: usize,
    params: DovetailParams,
    rng: &mut R,
) -> Result<DovetailRun, AttackError> {
    DovetailEngine::new(graph, params).intersection_sim(adversary, true_client, matchmakers, n_connections, rng)
}

/// Sources drawn from the client ISPs, matchmakers from all ASes.
pub fn dovetail_frequency<R: Rng + ?Sized>(
    graph: &AsGraph,
    n_samples: usize,
    params: DovetailParams,
    rng: &mut R,
) -> Result<BTreeMap<AsId, f64>, AttackError> {
    let sources: Vec<AsId> = graph.client_isp_ases().into_iter().collect();
    DovetailEngine::new(graph, params).frequency(&sources, graph.ases(), n_samples, rng)
}

/// Per-day penultimate hops a destination AS sees for `trace`'s owner, one
/// per day with a check-in whose AS has a route.
pub fn hornet_target_observations(
    trace: &MobilityTrace,
    map: &CountryAsMap,
    routes: &RoutingState<'_>,
) -> Result<Vec<(i64, AsId)>, AttackError> {
    let mut out = Vec::new();
    for (day, country) in trace.daily_country() {
        let a = map.lookup(country)?;
        if let Some(p) = routes.penultimate(a) {
            out.push((day, p));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HornetMobilityResult {
    pub outcome: GuessOutcome<String>,
    /// Highest-weight survivor, whether or not it was guessed.
    pub top: Option<String>,
    pub survivors: Vec<String>,
}

/// Links a pseudonym's per-day penultimate hops to identified users'
/// check-ins, then scores survivors by `exp(a * N_i)`.
pub fn hornet_mobility_attack(
    traces: &[MobilityTrace],
    map: &CountryAsMap,
    routes: &RoutingState<'_>,
    target_connections: &[(i64, AsId)],
    a: f64,
    threshold: f64,
) -> Result<HornetMobilityResult, AttackError> {
    if !(a > 0.0) {
        return Err(AttackError::InvalidParameter(format!("weight exponent must be > 0, got {a}")));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(AttackError::InvalidParameter(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    let mut penult_cache: HashMap<AsId, Option<AsId>> = HashMap::new();
    let mut daily: Vec<BTreeMap<i64, Option<AsId>>> = Vec::with_capacity(traces.len());
    for t in traces {
        let mut m = BTreeMap::new();
        for (day, country) in t.daily_country() {
            let asn = map.lookup(country)?;
            let p = *penult_cache.entry(asn).or_insert_with(|| routes.penultimate(asn));
            m.insert(day, p);
        }
        daily.push(m);
    }
    let mut alive: Vec<usize> = (0..traces.len()).collect();
    for &(day, penult) in target_connections {
        alive.retain(|&i| match daily[i].get(&day) {
            None => true,
            Some(p) => *p == Some(penult),
        });
    }
    let survivors: Vec<String> = alive.iter().map(|&i| traces[i].user.clone()).collect();
    let Some(&top) = alive.iter().min_by(|&&x, &&y| {
        traces[y].n_points().cmp(&traces[x].n_points()).then_with(|| traces[x].user.cmp(&traces[y].user))
    }) else {
        return Ok(HornetMobilityResult {
            outcome: GuessOutcome { decision: Decision::Reject, score: 0.0 },
            top: None,
            survivors,
        });
    };
    let n_top = traces[top].n_points() as f64;
    let denom: f64 = alive.iter().map(|&j| (a * (traces[j].n_points() as f64 - n_top)).exp()).sum();
    let score = 1.0 / denom;
    Ok(HornetMobilityResult {
        outcome: GuessOutcome::from_score(Some(traces[top].user.clone()), score, threshold),
        top: Some(traces[top].user.clone()),
        survivors,
    })
}

/// Intersection of the client's cluster across formations.
pub fn taps_intersection_attack(
    clusterings: &[crate::anonnet::Clustering],
    client: AsId,
) -> Result<AnonymitySet, AttackError> {
    Ok(taps_intersection_steps(clusterings, client)?.pop().unwrap_or_else(|| AnonymitySet::new([client])))
}

/// The client's anonymity set after each formation.
pub fn taps_intersection_steps(
    clusterings: &[crate::anonnet::Clustering],
    client: AsId,
) -> Result<Vec<AnonymitySet>, AttackError> {
    let mut out: Vec<AnonymitySet> = Vec::with_capacity(clusterings.len());
    for c in clusterings {
        let cluster = c.cluster_of(client).ok_or(AttackError::Unassigned(client))?;
        let members = c.members(cluster);
        let next = match out.last() {
            None => AnonymitySet::new(members),
            Some(prev) => intersect(prev, &members).set,
        };
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RouteChangeRecord {
    pub probe: String,
    pub day: i64,
    pub origin_as: AsId,
    pub penultimate: AsId,
}

pub const ROUTE_CHANGE_HEADER: &str = "probe,day,origin_as,penultimate_as";

/// Parses `probe,day,origin_as,penultimate_as`, rejecting repeated
/// `(probe, day)` pairs.
pub fn parse_route_changes(text: &str) -> Result<Vec<RouteChangeRecord>, AttackError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r').trim();
        if raw.is_empty() || (line == 1 && raw == ROUTE_CHANGE_HEADER) {
            continue;
        }
        let err = |reason: String| AttackError::Parse { line, reason };
        let f: Vec<&str> = raw.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", f.len())));
        }
        let day: i64 = f[1].parse().map_err(|_| err(format!("bad day `{}`", f[1])))?;
        let rec = RouteChangeRecord {
            probe: f[0].to_string(),
            day,
            origin_as: f[2].parse().map_err(err)?,
            penultimate: f[3].parse().map_err(err)?,
        };
        if !seen.insert((rec.probe.clone(), day)) {
            return Err(err(format!("duplicate record for probe `{}` day {day}", rec.probe)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn route_changes_to_csv(records: &[RouteChangeRecord]) -> String {
    let mut out = format!("{ROUTE_CHANGE_HEADER}\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.probe, r.day, r.origin_as, r.penultimate));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteChange {
    pub probe: String,
    pub origin_as: AsId,
    pub day_before: i64,
    pub day_after: i64,
    pub penultimate_before: AsId,
    pub penultimate_after: AsId,
    pub before: AnonymitySet,
    pub after: AnonymitySet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsChangeStats {
    pub probes: usize,
    pub mean_changes: f64,
    /// Means over this AS's changes; `None` when it had none.
    pub mean_before: Option<f64>,
    pub mean_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteChangeReport {
    pub changes: Vec<RouteChange>,
    pub per_as: BTreeMap<AsId, AsChangeStats>,
}

/// Penultimate-hop changes per probe and their effect on the probe's
/// anonymity set. The before-set holds origin ASes of probes that shared
/// the old penultimate hop on the earlier day; the after-set keeps only
/// probes that also shared the new hop on the later day.
pub fn route_change_analysis(records: &[RouteChangeRecord]) -> RouteChangeReport {
    let mut by_probe: BTreeMap<&str, Vec<&RouteChangeRecord>> = BTreeMap::new();
    let mut by_day_hop: HashMap<(i64, AsId), BTreeSet<&str>> = HashMap::new();
    let mut origin_on: HashMap<(&str, i64), AsId> = HashMap::new();
    for r in records {
        by_probe.entry(&r.probe).or_default().push(r);
        by_day_hop.entry((r.day, r.penultimate)).or_default().insert(&r.probe);
        origin_on.insert((&r.probe, r.day), r.origin_as);
    }
    let empty = BTreeSet::new();
    let mut changes = Vec::new();
    let mut change_count: BTreeMap<&str, usize> = BTreeMap::new();
    for (probe, recs) in by_probe.iter_mut() {
        recs.sort_by_key(|r| r.day);
        change_count.insert(probe, 0);
        for w in recs.windows(2) {
            let (prev, next) = (w[0], w[1]);
            if prev.penultimate == next.penultimate {
                continue;
            }
            *change_count.get_mut(probe).expect("inserted") += 1;
            let s0 = by_day_hop.get(&(prev.day, prev.penultimate)).unwrap_or(&empty);
            let s1 = by_day_hop.get(&(next.day, next.penultimate)).unwrap_or(&empty);
            let before = AnonymitySet::new(s0.iter().map(|p| origin_on[&(*p, prev.day)]));
            let after = AnonymitySet::new(s0.intersection(s1).map(|p| origin_on[&(*p, prev.day)]));
            changes.push(RouteChange {
                probe: probe.to_string(),
                origin_as: prev.origin_as,
                day_before: prev.day,
                day_after: next.day,
                penultimate_before: prev.penultimate,
                penultimate_after: next.penultimate,
                before,
                after,
            });
        }
    }
    let mut probe_as: BTreeMap<AsId, Vec<&str>> = BTreeMap::new();
    for (probe, recs) in &by_probe {
        probe_as.entry(recs[0].origin_as).or_default().push(probe);
    }
    let per_as = probe_as
        .into_iter()
        .map(|(a, probes)| {
            let total: usize = probes.iter().map(|p| change_count[p]).sum();
            let mine: Vec<&RouteChange> = changes.iter().filter(|c| c.origin_as == a).collect();
            let mean = |f: &dyn Fn(&RouteChange) -> usize| {
                (!mine.is_empty()).then(|| mine.iter().map(|c| f(c) as f64).sum::<f64>() / mine.len() as f64)
            };
            let stats = AsChangeStats {
                probes: probes.len(),
                mean_changes: total as f64 / probes.len() as f64,
                mean_before: mean(&|c| c.before.len()),
                mean_after: mean(&|c| c.after.len()),
            };
            (a, stats)
        })
        .collect();
    RouteChangeReport { changes, per_as }
}

/// Likelihood of each usable PHI observation for every candidate source,
/// assuming clients pick helpers uniformly from the pool (minus themselves
/// and the destination). Non-observations carry no term.
pub struct PhiLikelihoods {
    table: BTreeMap<AsId, HashMap<PhiObservation, f64>>,
}

impl PhiLikelihoods {
    pub fn compute(
        cache: &RouteCache<'_>,
        candidates: &BTreeSet<AsId>,
        helpers: &[AsId],
        dst: AsId,
        adversary: AsId,
    ) -> PhiLikelihoods {
        let mut table = BTreeMap::new();
        for &l in candidates {
            let pool: Vec<AsId> = helpers.iter().copied().filter(|&h| h != l && h != dst).collect();
            let mut counts: HashMap<PhiObservation, f64> = HashMap::new();
            for &h in &pool {
                if let Some(obs) = cache.phi(l, h, dst).and_then(|p| phi_observe(&p, adversary)) {
                    *counts.entry(obs).or_default() += 1.0;
                }
            }
            for v in counts.values_mut() {
                *v /= pool.len() as f64;
            }
            table.insert(l, counts);
        }
        PhiLikelihoods { table }
    }

    pub fn likelihood(&self, obs: &PhiObservation, location: AsId) -> f64 {
        self.table.get(&location).and_then(|m| m.get(obs)).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiStep {
    pub observation: Option<PhiObservation>,
    pub top: AsId,
    pub score: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiRun {
    pub source: AsId,
    pub destination: AsId,
    /// `steps[0]` is the uniform prior; `steps[i]` follows connection `i`.
    pub steps: Vec<PhiStep>,
}

/// A client in `src` repeatedly connects to `dst`, picking a helper
/// uniformly per connection. The adversary updates its belief over all
/// ASes but `dst` whenever it observes with the destination known.
pub fn phi_guess_sim<R: Rng + ?Sized>(
    cache: &RouteCache<'_>,
    adversary: AsId,
    src: AsId,
    dst: AsId,
    helpers: &[AsId],
    n_connections: usize,
    rng: &mut R,
) -> Result<PhiRun, AttackError> {
    let graph = cache.graph();
    let candidates: BTreeSet<AsId> = graph.ases().iter().copied().filter(|&a| a != dst).collect();
    if !candidates.contains(&src) {
        return Err(AttackError::TruthNotCandidate(src));
    }
    let lik = PhiLikelihoods::compute(cache, &candidates, helpers, dst, adversary);
    let pool: Vec<AsId> = helpers.iter().copied().filter(|&h| h != src && h != dst).collect();
    let mut belief = PosteriorBelief::uniform(candidates.iter().copied())?;
    let step_of = |b: &PosteriorBelief, o: Option<PhiObservation>| {
        let (top, score) = b.map_estimate().expect("non-empty");
        PhiStep { observation: o, top, score, correct: top == src }
    };
    let mut steps = vec![step_of(&belief, None)];
    for _ in 0..n_connections {
        let mut observed = None;
        if !pool.is_empty() {
            let h = pool[rng.gen_range(0..pool.len())];
            if let Some(obs) = cache.phi(src, h, dst).and_then(|p| phi_observe(&p, adversary)) {
                belief = belief.update(|l| lik.likelihood(&obs, l))?;
                observed = Some(obs);
            }
        }
        steps.push(step_of(&belief, observed));
    }
    Ok(PhiRun { source: src, destination: dst, steps })
}

/// Fraction of uniformly drawn distinct (source, helper, destination)
/// triples in which each AS serves as midway.
pub fn phi_midway_frequency<R: Rng + ?Sized>(
    graph: &AsGraph,
    n_samples: usize,
    rng: &mut R,
) -> Result<BTreeMap<AsId, f64>, AttackError> {
    let ases = graph.ases();
    if ases.len() < 3 || n_samples == 0 {
        return Err(AttackError::InvalidParameter("need at least 3 ASes and 1 sample".into()));
    }
    let mut states: HashMap<AsId, RoutingState<'_>> = HashMap::new();
    let mut counts: BTreeMap<AsId, usize> = BTreeMap::new();
    for _ in 0..n_samples {
        let (s, h, d) = loop {
            let s = ases[rng.gen_range(0..ases.len())];
            let h = ases[rng.gen_range(0..ases.len())];
            let d = ases[rng.gen_range(0..ases.len())];
            if s != h && s != d && h != d {
                break (s, h, d);
            }
        };
        for a in [h, d] {
            if !states.contains_key(&a) {
                states.insert(a, crate::topology::routing_state(graph, a)?);
            }
        }
        let Some(half) = states[&h].path(s) else { continue };
        if let Some(p) = crate::netlayer::phi_from_half_path(half, &states[&d]) {
            *counts.entry(p.midway).or_default() += 1;
        }
    }
    Ok(counts.into_iter().map(|(a, c)| (a, c as f64 / n_samples as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anonnet::{gselect_guard_dist, vanilla_guard_dist, Relay};
    use crate::mobility::CheckIn;
    use crate::topology::{asn, parse_as_relationships, routing_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t6() -> AsGraph {
        parse_as_relationships(include_str!("../../../fixtures/t6.txt")).unwrap()
    }

    fn relays(rows: &[(&str, u32, f64)]) -> RelaySet {
        RelaySet::new(
            rows.iter()
                .map(|&(id, a, bw)| Relay { id: id.into(), host_as: asn(a), bandwidth: bw, is_guard: true })
                .collect(),
        )
        .unwrap()
    }

    fn set(v: &[u32]) -> BTreeSet<AsId> {
        v.iter().map(|&x| asn(x)).collect()
    }

    #[test]
    fn compromise_on_path() {
        let g = t6();
        let one = relays(&[("g5", 5, 300.0)]);
        let routes = GuardRoutes::new(&g, &one).unwrap();
        let pred = OnPathPredicate::new(&routes, [asn(2)]);
        let p = mobility_compromise_prob(&one, &[asn(6)], |_| vanilla_guard_dist(&one), |c, ga| pred.check(c, ga)).unwrap();
        assert_eq!(p, 1.0);

        let two = relays(&[("g5", 5, 100.0), ("g3", 3, 100.0)]);
        let routes = GuardRoutes::new(&g, &two).unwrap();
        let pred = OnPathPredicate::new(&routes, [asn(2)]);
        let p = mobility_compromise_prob(&two, &[asn(6)], |_| vanilla_guard_dist(&two), |c, ga| pred.check(c, ga)).unwrap();
        assert!((p - 0.5).abs() < 1e-12);

        let pred = OnPathPredicate::new(&routes, [asn(99)]);
        let p = mobility_compromise_prob(&two, &[asn(6)], |_| vanilla_guard_dist(&two), |c, ga| pred.check(c, ga)).unwrap();
        assert_eq!(p, 0.0);
        assert!(matches!(
            mobility_compromise_prob(&two, &[], |_| vanilla_guard_dist(&two), |_, _| true),
            Err(AttackError::NoLocations)
        ));
    }

    #[test]
    fn compromise_accumulates_over_moves() {
        // g3's route from 6 is [6,3]; from 4 it is [4,1,3]. Adversary 1 only
        // sees the client once it moves to 4.
        let g = t6();
        let r = relays(&[("g3", 3, 100.0)]);
        let routes = GuardRoutes::new(&g, &r).unwrap();
        let pred = OnPathPredicate::new(&routes, [asn(1)]);
        let stay = mobility_compromise_prob(&r, &[asn(6)], |_| vanilla_guard_dist(&r), |c, ga| pred.check(c, ga)).unwrap();
        let moved =
            mobility_compromise_prob(&r, &[asn(6), asn(4)], |_| vanilla_guard_dist(&r), |c, ga| pred.check(c, ga)).unwrap();
        assert_eq!((stay, moved), (0.0, 1.0));
    }

    #[test]
    fn hijack_predicate_t6() {
        let g = t6();
        let p = HijackPredicate::new(&g, asn(3), [asn(5)]);
        assert!(p.check(asn(6), asn(5)));
        assert!(p.check(asn(6), asn(4)));
        assert!(!p.check(asn(6), asn(3)));
        let p = HijackPredicate::new(&g, asn(1), [asn(4)]);
        assert!(!p.check(asn(6), asn(4)));
        let absent = HijackPredicate::new(&g, asn(42), [asn(5)]);
        assert!(!absent.check(asn(6), asn(5)));
    }

    #[test]
    fn bayes_examples() {
        let cands = set(&[4, 6]);
        let prior = PosteriorBelief::uniform(cands.iter().copied()).unwrap();
        let lik = |_: &(), l: AsId| if l == asn(4) { 0.0 } else { 0.25 };
        let post = bayes_location_inference(&cands, lik, &prior, &[()]).unwrap();
        assert_eq!(post.prob(asn(6)), 1.0);
        assert_eq!(post.prob(asn(4)), 0.0);

        let cands = set(&[1, 2]);
        let prior = PosteriorBelief::uniform(cands.iter().copied()).unwrap();
        let lik = |_: &(), l: AsId| if l == asn(1) { 0.5 } else { 0.25 };
        let post = bayes_location_inference(&cands, lik, &prior, &[()]).unwrap();
        assert!((post.prob(asn(1)) - 2.0 / 3.0).abs() < 1e-12);
        assert!((post.prob(asn(2)) - 1.0 / 3.0).abs() < 1e-12);

        let post = bayes_location_inference::<()>(&cands, |_, _| 0.0, &prior, &[]).unwrap();
        assert_eq!(post, prior);
        assert!(matches!(bayes_location_inference(&cands, |_: &(), _| 0.0, &prior, &[()]), Err(AttackError::Inconsistent)));
        let wide = PosteriorBelief::uniform(set(&[1, 2, 3])).unwrap();
        assert!(matches!(
            bayes_location_inference::<()>(&cands, |_, _| 1.0, &wide, &[]),
            Err(AttackError::PriorOutsideCandidates(_))
        ));
    }

    #[test]
    fn intersect_examples() {
        let a = AnonymitySet::new(["a", "b", "c"]);
        let r = intersect(&a, &BTreeSet::from(["b", "c", "d"]));
        assert_eq!(r.set, AnonymitySet::new(["b", "c"]));
        assert!(!r.inconsistent);
        assert_eq!(intersect(&a, a.members()).set, a);
        let r = intersect(&AnonymitySet::new(["a"]), &BTreeSet::from(["b"]));
        assert!(r.set.is_empty() && r.inconsistent);
    }

    #[test]
    fn denasa_inference_t6() {
        let g = t6();
        let r = relays(&[("g5", 5, 300.0), ("g3", 3, 100.0)]);
        let suspects = set(&[1]);
        let cands = set(&[4, 6]);
        for seed in 0..20 {
            let run =
                denasa_guard_inference_sim(&g, &r, &suspects, asn(6), &cands, 6, &mut ChaCha8Rng::seed_from_u64(seed))
                    .unwrap();
            assert_eq!(run.beliefs[0].prob(asn(6)), 0.5);
            for (i, gid) in run.guards.iter().enumerate() {
                if gid == "g3" {
                    assert_eq!(run.beliefs[i + 1].prob(asn(6)), 1.0);
                }
            }
            assert!(run.beliefs.iter().all(|b| b.prob(asn(6)) > 0.0));
        }
        // truth 4 only ever selects g5, so its posterior never drops
        let d6 = gselect_guard_dist(&g, &r, asn(6), &suspects).unwrap();
        let run = denasa_guard_inference_sim(&g, &r, &suspects, asn(4), &cands, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (n, b) in run.beliefs.iter().enumerate() {
            let expect = 1.0 / (1.0 + d6.prob("g5").powi(n as i32));
            assert!((b.prob(asn(4)) - expect).abs() < 1e-12);
        }
        let zero = denasa_guard_inference_sim(&g, &r, &suspects, asn(6), &cands, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(zero.beliefs.len(), 1);
        assert_eq!(zero.beliefs[0].prob(asn(4)), 0.5);
    }

    #[test]
    fn leakiness_prefers_revealing_clients() {
        let g = t6();
        let r = relays(&[("g5", 5, 300.0), ("g3", 3, 100.0)]);
        let dists = gselect_dists(&g, &r, &set(&[1]), &set(&[4, 6])).unwrap();
        let rank = leakiness_ranking(&dists).unwrap();
        // AS6 reveals itself whenever it picks g3; AS4 never does
        assert_eq!(rank[0].0, asn(6));
    }

    #[test]
    fn dovetail_t6_first_observation() {
        let g = t6();
        let params = DovetailParams { min_head_len: 5, max_peer_links: 1, max_len: 5 };
        let run = dovetail_intersection_sim(&g, asn(2), asn(6), &[asn(5)], 3, params, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        let obs = run.observations[0].unwrap();
        assert_eq!((obs.predecessor, obs.position), (asn(1), 4));
        // [5,2,1] also reaches 1 in three ASes, so nothing is ruled out
        assert_eq!(run.final_set.members(), &set(&[5, 6]));
        assert_eq!(run.initial_size, 2);
        assert!(run.sizes.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn dovetail_frequency_deterministic() {
        let g = t6();
        let params = DovetailParams { min_head_len: 4, max_peer_links: 1, max_len: 6 };
        let a = dovetail_frequency(&g, 200, params, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = dovetail_frequency(&g, 200, params, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.values().sum::<f64>() <= 1.0 + 1e-12);
    }

    fn trace(user: &str, days: &[(i64, &str)], extra_points: usize) -> MobilityTrace {
        let mut c: Vec<CheckIn> =
            days.iter().map(|&(d, k)| CheckIn { user: user.into(), day: d, country: k.into() }).collect();
        // padding check-ins far in the past only raise N
        for i in 0..extra_points {
            c.push(CheckIn { user: user.into(), day: -1000 - i as i64, country: days[0].1.into() });
        }
        MobilityTrace::new(user, c)
    }

    #[test]
    fn hornet_weight_ratio_reject() {
        let g = t6();
        let routes = routing_state(&g, asn(5)).unwrap();
        let map = CountryAsMap::new([("A".to_string(), asn(6))].into());
        let traces = vec![trace("u1", &[(0, "A")], 9), trace("u2", &[(0, "A")], 1)];
        let r = hornet_mobility_attack(&traces, &map, &routes, &[(0, asn(2))], 0.1, 0.75).unwrap();
        let expect = 2.718282f64 / (2.718282 + 1.221403);
        assert!((r.outcome.score - expect).abs() < 1e-6, "{}", r.outcome.score);
        assert_eq!(r.outcome.decision, Decision::Reject);
        assert_eq!(r.survivors.len(), 2);
    }

    #[test]
    fn hornet_elimination_and_guess() {
        let g = t6();
        let routes = routing_state(&g, asn(5)).unwrap();
        // toward AS5 both AS6 and AS2 arrive via AS2
        let map = CountryAsMap::new([("A".to_string(), asn(6)), ("B".to_string(), asn(2))].into());
        let traces = vec![
            trace("target", &[(0, "A"), (1, "B")], 0),
            trace("other", &[(0, "A"), (1, "A")], 0),
            trace("idle", &[(5, "A")], 0),
        ];
        let obs = hornet_target_observations(&traces[0], &map, &routes).unwrap();
        assert_eq!(obs, vec![(0, asn(2)), (1, asn(2))]);
        let r = hornet_mobility_attack(&traces, &map, &routes, &obs, 0.1, 0.5).unwrap();
        // AS6 and AS2 share penultimate hop 2 toward AS5, so nobody is ruled out
        assert_eq!(r.survivors.len(), 3);

        let map = CountryAsMap::new([("A".to_string(), asn(3)), ("B".to_string(), asn(4))].into());
        let to1 = routing_state(&g, asn(1)).unwrap();
        // into AS1: AS3 arrives directly (penultimate 3), AS4 directly (4)
        let traces = vec![trace("target", &[(0, "A")], 0), trace("other", &[(0, "B")], 0)];
        let obs = hornet_target_observations(&traces[0], &map, &to1).unwrap();
        let r = hornet_mobility_attack(&traces, &map, &to1, &obs, 0.1, 0.75).unwrap();
        assert_eq!(r.survivors, vec!["target".to_string()]);
        assert_eq!(r.outcome.decision, Decision::Guess("target".to_string()));
        assert_eq!(r.outcome.score, 1.0);

        assert!(hornet_mobility_attack(&traces, &map, &to1, &obs, 0.0, 0.75).is_err());
        assert!(hornet_mobility_attack(&traces, &map, &to1, &obs, 0.1, 0.0).is_err());
        let r = hornet_mobility_attack(&traces, &map, &to1, &[(0, asn(2))], 0.1, 0.75).unwrap();
        assert_eq!(r.outcome, GuessOutcome { decision: Decision::Reject, score: 0.0 });
    }

    #[test]
    fn hornet_symmetric_pair_rejects() {
        let g = t6();
        let routes = routing_state(&g, asn(1)).unwrap();
        let map = CountryAsMap::new([("A".to_string(), asn(3))].into());
        let traces = vec![trace("a", &[(0, "A"), (1, "A")], 3), trace("b", &[(0, "A"), (1, "A")], 3)];
        let obs = hornet_target_observations(&traces[0], &map, &routes).unwrap();
        let r = hornet_mobility_attack(&traces, &map, &routes, &obs, 0.1, 0.51).unwrap();
        assert_eq!(r.outcome.score, 0.5);
        assert_eq!(r.outcome.decision, Decision::Reject);
    }

    #[test]
    fn taps_intersection_examples() {
        use crate::anonnet::Clustering;
        let mk = |pairs: &[(u32, u32)]| Clustering {
            assignment: pairs.iter().map(|&(a, c)| (asn(a), asn(c))).collect(),
            medoids: vec![],
        };
        let c1 = mk(&[(4, 6), (6, 6), (3, 3)]);
        let c2 = mk(&[(4, 4), (6, 3), (3, 3)]);
        assert_eq!(taps_intersection_attack(&[c1.clone(), c2], asn(6)).unwrap().members(), &set(&[6]));
        assert_eq!(taps_intersection_attack(&[c1.clone(), c1.clone()], asn(6)).unwrap().members(), &set(&[4, 6]));
        assert!(matches!(taps_intersection_attack(&[c1], asn(9)), Err(AttackError::Unassigned(_))));
    }

    fn rec(p: &str, day: i64, origin: u32, pen: u32) -> RouteChangeRecord {
        RouteChangeRecord { probe: p.into(), day, origin_as: asn(origin), penultimate: asn(pen) }
    }

    #[test]
    fn route_change_examples() {
        let (x, y, z) = (100, 200, 300);
        let r = route_change_analysis(&[rec("p1", 1, 10, x), rec("p1", 2, 10, x)]);
        assert!(r.changes.is_empty());
        assert_eq!(r.per_as[&asn(10)].mean_changes, 0.0);

        let log = [
            rec("p1", 1, 10, x),
            rec("p1", 2, 10, y),
            rec("p2", 1, 11, x),
            rec("p2", 2, 11, x),
            rec("p3", 1, 12, z),
            rec("p3", 2, 12, y),
        ];
        let r = route_change_analysis(&log);
        let p1: Vec<&RouteChange> = r.changes.iter().filter(|c| c.probe == "p1").collect();
        assert_eq!(p1.len(), 1);
        assert_eq!(p1[0].before.members(), &set(&[10, 11]));
        assert_eq!(p1[0].after.members(), &set(&[10]));
        assert_eq!(r.per_as[&asn(10)].mean_changes, 1.0);
        assert_eq!(r.per_as[&asn(11)].mean_changes, 0.0);
        assert_eq!(r.per_as[&asn(10)].mean_after, Some(1.0));

        let single = route_change_analysis(&[rec("p", 1, 7, x), rec("p", 2, 7, y), rec("p", 3, 7, x)]);
        assert_eq!(single.changes.len(), 2);
        assert!(single.changes.iter().all(|c| c.after.members() == &set(&[7])));
    }

    #[test]
    fn route_change_csv() {
        let log = vec![rec("p1", 1, 10, 100), rec("p1", 2, 10, 200)];
        let text = route_changes_to_csv(&log);
        assert_eq!(parse_route_changes(&text).unwrap(), log);
        assert!(parse_route_changes("probe,day,origin_as,penultimate_as\np1,1,10,100\np1,1,10,200\n").is_err());
        assert!(matches!(
            parse_route_changes("probe,day,origin_as,penultimate_as\np1,x,10,100\n"),
            Err(AttackError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn phi_engine_soundness_t6() {
        let g = t6();
        let cache = RouteCache::new(&g, g.ases().iter().copied()).unwrap();
        let helpers: Vec<AsId> = g.ases().to_vec();
        let run = phi_guess_sim(&cache, asn(2), asn(6), asn(5), &helpers, 10, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(run.steps.len(), 11);
        assert!(run.steps.iter().any(|s| s.observation.is_some()));
        let freq = phi_midway_frequency(&g, 100, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(freq.values().sum::<f64>() <= 1.0 + 1e-12);
    }
}
