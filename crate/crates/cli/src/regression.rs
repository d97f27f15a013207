//! Key/value table of every hand-checkable quantity on a small topology,
//! computed either by the brute-force oracles or by the fast engines.

use std::collections::BTreeSet;
use std::fmt::Display;

use anonsim::anonnet::{gselect_guard_dist, RelaySet};
use anonsim::netlayer::{dovetail_location_set, phi_build, DovetailObservation};
use anonsim::synth::{
    oracle_enumerate_paths, oracle_gselect, oracle_hijack, oracle_location_set, oracle_phi, oracle_resilience,
    oracle_routes,
};
use anonsim::topology::{resilience, routable_paths, routing_state, simulate_hijack, AsGraph, AsId, AsPath};

use crate::error::CliError;

pub const REGRESSION_HEADER: &str = "key,value";
pub const MAX_POSITION: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Oracle,
    Fast,
}

fn join<T: Display>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

fn path_cell(p: Option<&AsPath>) -> String {
    p.map(|p| join(p.ases(), "-")).unwrap_or_else(|| "none".into())
}

fn paths_cell(ps: &BTreeSet<AsPath>) -> String {
    join(ps.iter().map(|p| join(p.ases(), "-")), " ")
}

fn set_cell(s: &BTreeSet<AsId>) -> String {
    join(s, " ")
}

/// Suspect sets probed for every client.
fn suspect_sets(ases: &[AsId]) -> Vec<BTreeSet<AsId>> {
    let mut out = vec![BTreeSet::new()];
    out.extend(ases.iter().map(|&a| BTreeSet::from([a])));
    out
}

pub fn regression_table(graph: &AsGraph, relays: &RelaySet, engine: Engine) -> Result<Vec<(String, String)>, CliError> {
    let ases = graph.ases().to_vec();
    let n = ases.len();
    let mut rows = Vec::new();
    let mut put = |k: String, v: String| rows.push((k, v));

    for &dst in &ases {
        let fast = routing_state(graph, dst).map_err(CliError::run)?;
        let oracle = oracle_routes(graph, &[dst]).map_err(CliError::run)?;
        for &src in ases.iter().filter(|&&s| s != dst) {
            let path = match engine {
                Engine::Fast => fast.path(src),
                Engine::Oracle => oracle.get(&src).cloned().flatten(),
            };
            let pen = path.as_ref().and_then(|p| p.penultimate());
            put(format!("route/{src}/{dst}"), path_cell(path.as_ref()));
            put(format!("penultimate/{src}/{dst}"), pen.map(|p| p.to_string()).unwrap_or_else(|| "none".into()));
        }
    }
    for mp in [0, 1] {
        for &src in &ases {
            for &dst in ases.iter().filter(|&&d| d != src) {
                let ps = match engine {
                    Engine::Fast => routable_paths(graph, src, dst, mp, n).map_err(CliError::run)?,
                    Engine::Oracle => oracle_enumerate_paths(graph, src, dst, mp, n).map_err(CliError::run)?,
                };
                put(format!("routable/mp{mp}/{src}/{dst}"), paths_cell(&ps));
            }
        }
    }
    for &origin in &ases {
        for &attacker in ases.iter().filter(|&&a| a != origin) {
            let hijacked: BTreeSet<AsId> = match engine {
                Engine::Fast => simulate_hijack(graph, origin, attacker).map_err(CliError::run)?.hijacked_ases(),
                Engine::Oracle => oracle_hijack(graph, origin, attacker)
                    .map_err(CliError::run)?
                    .into_iter()
                    .filter_map(|(a, h)| h.then_some(a))
                    .collect(),
            };
            put(format!("hijack/{origin}/{attacker}"), set_cell(&hijacked));
        }
    }
    for &client in &ases {
        for &guard in ases.iter().filter(|&&g| g != client) {
            let r = match engine {
                Engine::Fast => resilience(graph, client, guard).map_err(CliError::run)?,
                Engine::Oracle => oracle_resilience(graph, client, guard).map_err(CliError::run)?,
            };
            put(format!("resilience/{client}/{guard}"), format!("{}/{}", r.safe, r.candidates));
        }
    }
    for &client in &ases {
        for suspects in suspect_sets(&ases) {
            let cell = match engine {
                Engine::Fast => match gselect_guard_dist(graph, relays, client, &suspects) {
                    Ok(d) => join(d.iter().map(|(id, p)| format!("{id}:{p}")), " "),
                    Err(_) => "none".into(),
                },
                Engine::Oracle => {
                    let d = oracle_gselect(graph, relays, client, &suspects).map_err(CliError::run)?;
                    if d.is_empty() {
                        "none".into()
                    } else {
                        join(d.iter().map(|(id, p)| format!("{id}:{p}")), " ")
                    }
                }
            };
            put(format!("gselect/{client}/{}", join(&suspects, "+")), cell);
        }
    }
    for mp in [0, 1] {
        for &pred in &ases {
            for position in 2..=MAX_POSITION {
                let set = match engine {
                    Engine::Fast => {
                        let obs = DovetailObservation { predecessor: pred, position, destination: pred };
                        dovetail_location_set(graph, &obs, mp).map_err(CliError::run)?
                    }
                    Engine::Oracle => oracle_location_set(graph, pred, position, mp).map_err(CliError::run)?,
                };
                put(format!("locset/mp{mp}/{pred}/{position}"), set_cell(&set));
            }
        }
    }
    for &src in &ases {
        for &helper in &ases {
            for &dst in &ases {
                if src == helper || src == dst || helper == dst {
                    continue;
                }
                let got = match engine {
                    Engine::Fast => phi_build(graph, src, helper, dst)
                        .map_err(CliError::run)?
                        .map(|p| (p.midway, p.full_path)),
                    Engine::Oracle => oracle_phi(graph, src, helper, dst).map_err(CliError::run)?,
                };
                let cell = match got {
                    Some((m, full)) => format!("{m} {}", join(full.ases(), "-")),
                    None => "none".into(),
                };
                put(format!("phi/{src}/{helper}/{dst}"), cell);
            }
        }
    }
    Ok(rows)
}

pub fn table_csv(rows: &[(String, String)]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REGRESSION_HEADER.split(','))?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Run(e.to_string()))?;
    String::from_utf8(bytes).map_err(CliError::run)
}

pub fn parse_table(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}
