//! Runners binding configs to the attack engines.
//!
//! Every trial draws from its own stream `(seed, trial)`; setup choices such
//! as sampled pools use the reserved stream `SETUP_STREAM`. Trials run in
//! parallel and are reassembled in trial order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use anonsim::anonnet::{
    gselect_guard_dist, parse_relays, taps_cluster, vanilla_guard_dist, AnonnetError, Clustering, CounterRaptorConfig,
    GuardDistribution, GuardRoutes, RelaySet,
};
use anonsim::attacks::{
    counter_raptor_dists, gselect_dists, guard_inference_sim, hornet_mobility_attack, hornet_target_observations,
    leakiness_ranking, mobility_compromise_prob, parse_route_changes, phi_guess_sim, phi_midway_frequency,
    route_change_analysis, taps_intersection_steps, DovetailEngine, GuessOutcome, HijackPredicate,
    OnPathPredicate, ResilienceTables,
};
use anonsim::metrics::{accuracy_at_rejection_rate, accuracy_rejection, entropy_bits};
use anonsim::mobility::{country_sequence, parse_checkins, parse_country_map, CountryAsMap, MobilityTrace};
use anonsim::netlayer::{DovetailParams, RouteCache};
use anonsim::topology::{parse_as_relationships, routing_state, AsGraph, AsId};
use anonsim::trial_rng;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{
    DovetailConfig, ExperimentConfig, HornetMobilityParams, HornetRoutingConfig, InferenceParams, Kind, MobilityParams,
    Params, PhiConfig, TapsConfig,
};
use crate::error::CliError;
use crate::output::{ResultTable, Row};

pub const SETUP_STREAM: u64 = u64::MAX;

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load_graph(path: &Path) -> Result<AsGraph, CliError> {
    parse_as_relationships(&read(path)?).map_err(|e| CliError::ingest(path, e))
}

pub fn load_relays(path: &Path) -> Result<RelaySet, CliError> {
    parse_relays(&read(path)?).map_err(|e| CliError::ingest(path, e))
}

fn load_traces(path: &Path) -> Result<Vec<MobilityTrace>, CliError> {
    parse_checkins(&read(path)?).map_err(|e| CliError::ingest(path, e))
}

fn load_country_map(path: &Path) -> Result<CountryAsMap, CliError> {
    parse_country_map(&read(path)?).map_err(|e| CliError::ingest(path, e))
}

fn as_ids(field: &str, values: &[u32]) -> Result<Vec<AsId>, CliError> {
    values
        .iter()
        .map(|&v| AsId::new(v).ok_or_else(|| CliError::Config(format!("params.{field}: {v} is not a valid AS number"))))
        .collect()
}

fn require_in(graph: &AsGraph, field: &str, ids: &[AsId]) -> Result<(), CliError> {
    match ids.iter().find(|a| !graph.contains(**a)) {
        Some(a) => Err(CliError::Config(format!("params.{field}: AS{a} is not in the topology"))),
        None => Ok(()),
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs `f` for trials `0..n` in parallel and concatenates rows in trial order.
fn run_trials<F>(n: usize, f: F) -> Result<Vec<Row>, CliError>
where
    F: Fn(u64) -> Result<Vec<Row>, CliError> + Sync,
{
    let per: Vec<Vec<Row>> = (0..n as u64).into_par_iter().map(&f).collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}

fn row(trial: u64, step: u64, metric: &str, value: f64) -> Row {
    Row { trial, step, metric: metric.to_string(), value }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, CliError> {
    let mut table = match (&cfg.params, cfg.kind) {
        (Params::Mobility(p), kind) => run_mobility(kind, p)?,
        (Params::HornetMobility(p), _) => run_hornet_mobility(p)?,
        (Params::Inference(p), kind) => run_inference(kind, cfg.seed, p)?,
        (Params::Dovetail(p), _) => run_dovetail(cfg.seed, p)?,
        (Params::Phi(p), _) => run_phi(cfg.seed, p)?,
        (Params::Taps(p), _) => run_taps(p)?,
        (Params::HornetRouting(p), _) => run_hornet_routing(p)?,
    };
    table.canonicalize();
    Ok(table)
}

fn locations_of(trace: &MobilityTrace, map: &CountryAsMap, graph: &AsGraph) -> Result<Vec<AsId>, String> {
    country_sequence(trace)
        .iter()
        .map(|c| {
            let a = map.lookup(c).map_err(|e| e.to_string())?;
            if graph.contains(a) {
                Ok(a)
            } else {
                Err(format!("country `{c}` maps to AS{a}, which is not in the topology"))
            }
        })
        .collect()
}

/// Per user and per number of countries visited so far, the probability
/// that the guard chosen at the first location is compromised at least once.
fn run_mobility(kind: Kind, p: &MobilityParams) -> Result<ResultTable, CliError> {
    let graph = load_graph(&p.topology)?;
    let relays = load_relays(&p.relays)?;
    let mut traces = load_traces(&p.checkins)?;
    let map = load_country_map(&p.country_map)?;
    if let Some(m) = p.max_users {
        traces.truncate(m);
    }
    let adversaries = as_ids("adversaries", &p.adversaries)?;
    let suspects: BTreeSet<AsId> = as_ids("suspects", &p.suspects)?.into_iter().collect();
    let routes = GuardRoutes::new(&graph, &relays).map_err(CliError::run)?;
    let guard_ases = relays.guard_ases();

    let vanilla = vanilla_guard_dist(&relays).map_err(CliError::run)?;
    let tables = match kind {
        Kind::CrMobility => Some(ResilienceTables::new(&graph, &relays).map_err(CliError::run)?),
        _ => None,
    };
    let cr_cfg = CounterRaptorConfig::new(p.alpha).map_err(|e| CliError::Config(format!("params.alpha: {e}")))?;
    let on_path: Vec<OnPathPredicate> = adversaries.iter().map(|&a| OnPathPredicate::new(&routes, [a])).collect();
    let hijackers: Vec<HijackPredicate> = match kind {
        Kind::CrMobility => adversaries
            .par_iter()
            .map(|&a| HijackPredicate::new(&graph, a, guard_ases.iter().copied()))
            .collect(),
        _ => Vec::new(),
    };
    let suspect_path = OnPathPredicate::new(&routes, suspects.iter().copied());

    let dist_at = |first: AsId| -> Result<GuardDistribution, AnonnetError> {
        match kind {
            Kind::VanillaMobility => Ok(vanilla.clone()),
            Kind::CrMobility => tables.as_ref().expect("built for cr").guard_dist(&relays, first, cr_cfg),
            _ => gselect_guard_dist(&graph, &relays, first, &suspects),
        }
    };

    type UserOut = (Vec<Row>, String);
    let per_user: Vec<UserOut> = (0..traces.len())
        .into_par_iter()
        .map(|u| -> Result<UserOut, CliError> {
            let trace = &traces[u];
            let trial = u as u64;
            let locs = locations_of(trace, &map, &graph).map_err(|e| CliError::ingest(&p.country_map, e))?;
            let mut rows = Vec::new();
            if locs.is_empty() {
                return Ok((rows, format!("{trial},{},0,no-checkins\n", trace.user)));
            }
            let dist = match dist_at(locs[0]) {
                Ok(d) => d,
                Err(AnonnetError::NoSuspectFreeGuard(_) | AnonnetError::DegenerateWeights) => {
                    return Ok((rows, format!("{trial},{},{},no-guard\n", trace.user, locs.len())));
                }
                Err(e) => return Err(CliError::run(e)),
            };
            for k in 1..=locs.len() {
                let prefix = &locs[..k];
                let value = match kind {
                    Kind::DenasaMobility => mobility_compromise_prob(
                        &relays,
                        prefix,
                        |_| Ok(dist.clone()),
                        |c, g| suspect_path.check(c, g),
                    )
                    .map_err(CliError::run)?,
                    _ => {
                        let mut total = 0.0;
                        for i in 0..adversaries.len() {
                            total += mobility_compromise_prob(
                                &relays,
                                prefix,
                                |_| Ok(dist.clone()),
                                |c, g| match kind {
                                    Kind::CrMobility => hijackers[i].check(c, g),
                                    _ => on_path[i].check(c, g),
                                },
                            )
                            .map_err(CliError::run)?;
                        }
                        total / adversaries.len() as f64
                    }
                };
                rows.push(row(trial, k as u64, "compromise_prob", value));
            }
            Ok((rows, format!("{trial},{},{},ok\n", trace.user, locs.len())))
        })
        .collect::<Result<_, _>>()?;

    let mut table = ResultTable::default();
    let mut users = String::from("trial,user,countries,status\n");
    for (rows, line) in per_user {
        table.extend_trial(rows);
        users.push_str(&line);
    }
    table.side.insert("users.csv".into(), users);
    Ok(table)
}

fn bucket_of(n: usize, width: usize, cap: Option<usize>) -> usize {
    let b = n / width * width;
    match cap {
        Some(c) if b >= c => c,
        _ => b,
    }
}

fn run_hornet_mobility(p: &HornetMobilityParams) -> Result<ResultTable, CliError> {
    let graph = load_graph(&p.topology)?;
    let traces = load_traces(&p.checkins)?;
    let map = load_country_map(&p.country_map)?;
    let dests = as_ids("destinations", &p.destinations)?;
    require_in(&graph, "destinations", &dests)?;
    let targets: Vec<usize> = (0..traces.len()).filter(|&i| traces[i].n_points() >= p.min_points).collect();
    let mut table = ResultTable::default();
    let mut trials = String::from("trial,destination,user\n");
    let mut thresholds = String::from("destination,threshold,n_total,n_guesses,accuracy,rejection_rate\n");
    let mut accuracy = String::from("destination,bucket,rejection_rate,n,accuracy\n");
    for (di, &dst) in dests.iter().enumerate() {
        let routes = routing_state(&graph, dst).map_err(CliError::run)?;
        let base = (di * targets.len()) as u64;
        type Outcome = (Option<String>, f64, usize, Vec<Row>);
        let outcomes: Vec<Outcome> = targets
            .par_iter()
            .enumerate()
            .map(|(ti, &u)| -> Result<Outcome, CliError> {
                let trial = base + ti as u64;
                let target = &traces[u];
                let obs =
                    hornet_target_observations(target, &map, &routes).map_err(|e| CliError::ingest(&p.country_map, e))?;
                let r = hornet_mobility_attack(&traces, &map, &routes, &obs, p.a, 1.0)
                    .map_err(|e| CliError::ingest(&p.country_map, e))?;
                let correct = r.top.as_deref() == Some(target.user.as_str());
                let rows = vec![
                    row(trial, 0, "n_points", target.n_points() as f64),
                    row(trial, 0, "survivors", r.survivors.len() as f64),
                    row(trial, 0, "score", r.outcome.score),
                    row(trial, 0, "top_correct", flag(correct)),
                ];
                Ok((r.top, r.outcome.score, u, rows))
            })
            .collect::<Result<_, _>>()?;
        for (ti, (_, _, u, rows)) in outcomes.iter().enumerate() {
            table.extend_trial(rows.clone());
            let _ = writeln!(trials, "{},{dst},{}", base + ti as u64, traces[*u].user);
        }
        for &t in &p.thresholds {
            let judged: Vec<(GuessOutcome<String>, String)> = outcomes
                .iter()
                .map(|(top, score, u, _)| (GuessOutcome::from_score(top.clone(), *score, t), traces[*u].user.clone()))
                .collect();
            if judged.is_empty() {
                continue;
            }
            let rep = accuracy_rejection(&judged).map_err(CliError::run)?;
            let _ = writeln!(
                thresholds,
                "{dst},{t},{},{},{},{}",
                rep.n_total,
                rep.n_guesses,
                opt_cell(rep.accuracy),
                rep.rejection_rate
            );
        }
        let mut buckets: BTreeMap<usize, Vec<(f64, bool)>> = BTreeMap::new();
        for (top, score, u, _) in &outcomes {
            let b = bucket_of(traces[*u].n_points(), p.bucket_width, p.bucket_cap);
            buckets.entry(b).or_default().push((*score, top.as_deref() == Some(traces[*u].user.as_str())));
        }
        for &rr in &p.rejection_rates {
            for (b, cases) in &buckets {
                let acc = accuracy_at_rejection_rate(cases, rr).map_err(CliError::run)?;
                let _ = writeln!(accuracy, "{dst},{b},{rr},{},{}", cases.len(), opt_cell(acc));
            }
        }
    }
    table.side.insert("trials.csv".into(), trials);
    if !p.thresholds.is_empty() {
        table.side.insert("thresholds.csv".into(), thresholds);
    }
    if !p.rejection_rates.is_empty() {
        table.side.insert("accuracy.csv".into(), accuracy);
    }
    Ok(table)
}

fn run_inference(kind: Kind, seed: u64, p: &InferenceParams) -> Result<ResultTable, CliError> {
    let graph = load_graph(&p.topology)?;
    let relays = load_relays(&p.relays)?;
    let candidates: BTreeSet<AsId> = match &p.candidates {
        Some(c) => {
            let ids = as_ids("candidates", c)?;
            require_in(&graph, "candidates", &ids)?;
            ids.into_iter().collect()
        }
        None => graph.client_isp_ases(),
    };
    let dists = match kind {
        Kind::DenasaInference => {
            let suspects: BTreeSet<AsId> = as_ids("suspects", &p.suspects)?.into_iter().collect();
            gselect_dists(&graph, &relays, &suspects, &candidates).map_err(CliError::run)?
        }
        _ => {
            let cfg = CounterRaptorConfig::new(p.alpha).map_err(|e| CliError::Config(format!("params.alpha: {e}")))?;
            counter_raptor_dists(&graph, &relays, cfg, &candidates).map_err(CliError::run)?
        }
    };
    let mut table = ResultTable::default();
    let clients: Vec<AsId> = match (&p.clients, p.leaky_clients) {
        (Some(c), _) => {
            let ids = as_ids("clients", c)?;
            if let Some(bad) = ids.iter().find(|a| !candidates.contains(a)) {
                return Err(CliError::Config(format!("params.clients: AS{bad} is not a candidate")));
            }
            ids
        }
        (None, Some(n)) => {
            let rank = leakiness_ranking(&dists).map_err(CliError::run)?;
            let mut text = String::from("as,expected_entropy_bits\n");
            for (a, h) in &rank {
                let _ = writeln!(text, "{a},{h}");
            }
            table.side.insert("leakiness.csv".into(), text);
            rank.into_iter().take(n).map(|(a, _)| a).collect()
        }
        (None, None) => unreachable!("validated at load"),
    };
    if let Some(c) = clients.iter().find(|c| dists[c].is_none()) {
        return Err(CliError::Run(format!("client AS{c} has no valid guard distribution")));
    }

    let n = clients.len() * p.trials;
    let per: Vec<(Vec<Row>, String)> = (0..n as u64)
        .into_par_iter()
        .map(|trial| -> Result<(Vec<Row>, String), CliError> {
            let truth = clients[trial as usize / p.trials];
            let mut rng = trial_rng(seed, trial);
            let run = guard_inference_sim(&dists, truth, p.observations, &mut rng).map_err(CliError::run)?;
            let mut rows = Vec::new();
            for (k, b) in run.beliefs.iter().enumerate() {
                let k = k as u64;
                rows.push(row(trial, k, "entropy_bits", entropy_bits(b)));
                rows.push(row(trial, k, "truth_prob", b.prob(truth)));
                rows.push(row(trial, k, "map_correct", flag(b.map_estimate().map(|m| m.0) == Some(truth))));
                if p.emit_posterior {
                    for (a, pr) in b.iter() {
                        rows.push(row(trial, k, &format!("posterior_as{a}"), pr));
                    }
                }
            }
            let mut obs = String::new();
            for (k, g) in run.guards.iter().enumerate() {
                let _ = writeln!(obs, "{trial},{},{g}", k + 1);
            }
            Ok((rows, obs))
        })
        .collect::<Result<_, _>>()?;
    let mut observations = String::from("trial,step,guard\n");
    let mut trials = String::from("trial,client\n");
    for (t, (rows, obs)) in per.into_iter().enumerate() {
        table.extend_trial(rows);
        observations.push_str(&obs);
        let _ = writeln!(trials, "{t},{}", clients[t / p.trials]);
    }
    table.side.insert("observations.csv".into(), observations);
    table.side.insert("trials.csv".into(), trials);
    Ok(table)
}

fn most_frequent(freq: &BTreeMap<AsId, f64>) -> Option<AsId> {
    freq.iter().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0))).map(|(&a, _)| a)
}

fn frequency_csv(freq: &BTreeMap<AsId, f64>) -> String {
    let mut v: Vec<(&AsId, &f64)> = freq.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
    let mut out = String::from("as,fraction\n");
    for (a, f) in v {
        let _ = writeln!(out, "{a},{f}");
    }
    out
}

fn run_dovetail(seed: u64, p: &DovetailConfig) -> Result<ResultTable, CliError> {
    let graph = load_graph(&p.topology)?;
    let params = DovetailParams { min_head_len: p.min_head_len, max_peer_links: p.max_peer_links, max_len: p.max_len };
    let engine = DovetailEngine::new(&graph, params);
    let sources: Vec<AsId> = graph.client_isp_ases().into_iter().collect();
    if sources.is_empty() {
        return Err(CliError::Run("topology has no client ISPs".into()));
    }
    let mut table = ResultTable::default();
    let adversary = match p.adversary {
        Some(a) => {
            let a = as_ids("adversary", &[a])?[0];
            require_in(&graph, "adversary", &[a])?;
            a
        }
        None => {
            let mut rng = trial_rng(seed, SETUP_STREAM);
            let freq = engine.frequency(&sources, graph.ases(), p.frequency_samples, &mut rng).map_err(CliError::run)?;
            table.side.insert("dovetail_frequency.csv".into(), frequency_csv(&freq));
            most_frequent(&freq).ok_or_else(|| CliError::Run("no dovetail paths could be built".into()))?
        }
    };
    let ases = graph.ases();
    let n_mm = p.matchmakers.min(ases.len());
    let per: Vec<(Vec<Row>, AsId)> = (0..p.trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<(Vec<Row>, AsId), CliError> {
            let mut rng = trial_rng(seed, trial);
            let src = sources[rng.gen_range(0..sources.len())];
            let mms: Vec<AsId> = sample(&mut rng, ases.len(), n_mm).into_iter().map(|i| ases[i]).collect();
            let run = engine.intersection_sim(adversary, src, &mms, p.connections, &mut rng).map_err(CliError::run)?;
            let mut rows = vec![row(trial, 0, "set_size", run.initial_size as f64)];
            for (i, s) in run.sizes.iter().enumerate() {
                rows.push(row(trial, i as u64 + 1, "set_size", *s as f64));
            }
            rows.push(row(trial, p.connections as u64, "inconsistent", flag(run.inconsistent)));
            Ok((rows, src))
        })
        .collect::<Result<_, _>>()?;
    let mut trials = String::from("trial,source,adversary\n");
    for (t, (rows, src)) in per.into_iter().enumerate() {
        table.extend_trial(rows);
        let _ = writeln!(trials, "{t},{src},{adversary}");
    }
    table.side.insert("trials.csv".into(), trials);
    Ok(table)
}

fn distinct_pair<R: Rng>(rng: &mut R, n: usize) -> (usize, usize) {
    loop {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            return (a, b);
        }
    }
}

fn run_phi(seed: u64, p: &PhiConfig) -> Result<ResultTable, CliError> {
    let graph = load_graph(&p.topology)?;
    let ases = graph.ases();
    if ases.len() < 3 {
        return Err(CliError::Run("phi needs at least 3 ASes".into()));
    }
    let mut table = ResultTable::default();
    let adversary = match p.adversary {
        Some(a) => {
            let a = as_ids("adversary", &[a])?[0];
            require_in(&graph, "adversary", &[a])?;
            a
        }
        None => {
            let mut rng = trial_rng(seed, SETUP_STREAM);
            let freq = phi_midway_frequency(&graph, p.midway_samples, &mut rng).map_err(CliError::run)?;
            table.side.insert("midway_frequency.csv".into(), frequency_csv(&freq));
            most_frequent(&freq).ok_or_else(|| CliError::Run("no phi paths could be built".into()))?
        }
    };
    let n_help = p.helpers.min(ases.len());
    type TrialOut = (Vec<Row>, Vec<(f64, bool)>, AsId, AsId);
    let per: Vec<TrialOut> = (0..p.trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<TrialOut, CliError> {
            let mut rng = trial_rng(seed, trial);
            let (s, d) = distinct_pair(&mut rng, ases.len());
            let (src, dst) = (ases[s], ases[d]);
            let helpers: Vec<AsId> = sample(&mut rng, ases.len(), n_help).into_iter().map(|i| ases[i]).collect();
            let cache = RouteCache::new(&graph, helpers.iter().copied().chain([dst])).map_err(CliError::run)?;
            let run = phi_guess_sim(&cache, adversary, src, dst, &helpers, p.connections, &mut rng)
                .map_err(CliError::run)?;
            let mut rows = Vec::new();
            let mut cases = Vec::new();
            for (k, st) in run.steps.iter().enumerate() {
                let k = k as u64;
                rows.push(row(trial, k, "score", st.score));
                rows.push(row(trial, k, "correct", flag(st.correct)));
                if k > 0 {
                    rows.push(row(trial, k, "observed", flag(st.observation.is_some())));
                }
                cases.push((st.score, st.correct));
            }
            Ok((rows, cases, src, dst))
        })
        .collect::<Result<_, _>>()?;
    let mut trials = String::from("trial,source,destination,adversary\n");
    let steps = p.connections + 1;
    let mut by_step: Vec<Vec<(f64, bool)>> = vec![Vec::new(); steps];
    for (t, (rows, cases, src, dst)) in per.into_iter().enumerate() {
        table.extend_trial(rows);
        for (k, c) in cases.into_iter().enumerate() {
            by_step[k].push(c);
        }
        let _ = writeln!(trials, "{t},{src},{dst},{adversary}");
    }
    table.side.insert("trials.csv".into(), trials);
    if !p.rejection_rates.is_empty() {
        let mut acc = String::from("step,rejection_rate,accuracy\n");
        for &rr in &p.rejection_rates {
            for (k, cases) in by_step.iter().enumerate() {
                let a = accuracy_at_rejection_rate(cases, rr).map_err(CliError::run)?;
                let _ = writeln!(acc, "{k},{rr},{}", opt_cell(a));
            }
        }
        table.side.insert("accuracy.csv".into(), acc);
    }
    Ok(table)
}

fn run_taps(p: &TapsConfig) -> Result<ResultTable, CliError> {
    let medoids = as_ids("medoids", &p.medoids)?;
    let adversaries = as_ids("adversaries", &p.adversaries)?;
    let clusterings: Vec<Clustering> = p
        .formations
        .par_iter()
        .map(|f| -> Result<Clustering, CliError> {
            let graph = load_graph(&f.topology)?;
            let relays = load_relays(&f.relays)?;
            require_in(&graph, "medoids", &medoids)?;
            let universe: BTreeSet<AsId> = graph.ases().iter().copied().collect();
            taps_cluster(&graph, &universe, &medoids, &adversaries, &relays, p.top_k_guards)
                .map_err(|e| CliError::ingest(&f.relays, e))
        })
        .collect::<Result<_, _>>()?;
    let mut stable: BTreeSet<AsId> = clusterings[0].assignment.keys().copied().collect();
    for c in &clusterings[1..] {
        stable.retain(|a| c.assignment.contains_key(a));
    }
    let stable: Vec<AsId> = stable.into_iter().collect();
    let rows = run_trials(stable.len(), |trial| {
        let client = stable[trial as usize];
        let steps = taps_intersection_steps(&clusterings, client).map_err(CliError::run)?;
        Ok(steps.iter().enumerate().map(|(i, s)| row(trial, i as u64 + 1, "set_size", s.len() as f64)).collect())
    })?;
    let mut table = ResultTable { rows, ..Default::default() };
    let mut trials = String::from("trial,as\n");
    for (t, a) in stable.iter().enumerate() {
        let _ = writeln!(trials, "{t},{a}");
    }
    table.side.insert("trials.csv".into(), trials);
    Ok(table)
}

fn run_hornet_routing(p: &HornetRoutingConfig) -> Result<ResultTable, CliError> {
    let records = parse_route_changes(&read(&p.route_changes)?).map_err(|e| CliError::ingest(&p.route_changes, e))?;
    let report = route_change_analysis(&records);
    let mut table = ResultTable::default();
    let mut changes = String::from("trial,probe,origin_as,day_before,day_after,penultimate_before,penultimate_after\n");
    for (i, c) in report.changes.iter().enumerate() {
        let t = i as u64;
        table.push(t, 0, "set_size", c.before.len() as f64);
        table.push(t, 1, "set_size", c.after.len() as f64);
        let _ = writeln!(
            changes,
            "{t},{},{},{},{},{},{}",
            c.probe, c.origin_as, c.day_before, c.day_after, c.penultimate_before, c.penultimate_after
        );
    }
    let mut per_as = String::from("as,probes,mean_changes,mean_before,mean_after\n");
    for (a, s) in &report.per_as {
        let _ = writeln!(
            per_as,
            "{a},{},{},{},{}",
            s.probes,
            s.mean_changes,
            opt_cell(s.mean_before),
            opt_cell(s.mean_after)
        );
    }
    table.side.insert("changes.csv".into(), changes);
    table.side.insert("per_as.csv".into(), per_as);
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use anonsim::topology::asn;

    #[test]
    fn buckets_floor_and_cap() {
        assert_eq!(bucket_of(49, 50, None), 0);
        assert_eq!(bucket_of(120, 50, None), 100);
        assert_eq!(bucket_of(420, 50, Some(200)), 200);
    }

    #[test]
    fn most_frequent_breaks_ties_low() {
        let f = BTreeMap::from([(asn(9), 0.2), (asn(3), 0.2), (asn(5), 0.1)]);
        assert_eq!(most_frequent(&f), Some(asn(3)));
        assert_eq!(frequency_csv(&f), "as,fraction\n3,0.2\n9,0.2\n5,0.1\n");
    }

    #[test]
    fn distinct_pairs_differ() {
        let mut rng = trial_rng(1, 2);
        for _ in 0..100 {
            let (a, b) = distinct_pair(&mut rng, 3);
            assert_ne!(a, b);
        }
    }
}
