use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anonsim::anonnet::relays_to_csv;
use anonsim::attacks::route_changes_to_csv;
use anonsim::mobility::{country_map_to_csv, day_index, traces_to_csv};
use anonsim::synth::{
    gen_country_map, gen_mobility_traces, gen_relays, gen_route_changes, gen_topology, oracle_enumerate_paths,
    oracle_hijack, oracle_resilience, oracle_routes, perturb_topology, MobilityGenParams, TopologyGenParams,
};
use anonsim::topology::{routable_paths, routing_state, AsGraph, AsId};
use anonsim_cli::config::ExperimentConfig;
use anonsim_cli::error::CliError;
use anonsim_cli::experiments::{load_graph, load_relays, run_experiment};
use anonsim_cli::output::{summarize, write_outputs};
use anonsim_cli::regression::{regression_table, table_csv, Engine};
use clap::{Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "anonsim", version, about = "AS-level anonymity attack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its result tables.
    Run {
        config: PathBuf,
        /// Output directory (default: `out/<config stem>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for trial execution.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Quartile summary of a results table per group.
    Summarize {
        results: PathBuf,
        #[arg(long)]
        group_by: String,
        /// Only rows with this metric.
        #[arg(long)]
        metric: Option<String>,
    },
    /// Best route and every routable path between two ASes.
    Paths {
        topology: PathBuf,
        src: AsId,
        dst: AsId,
        #[arg(long, default_value_t = 1)]
        max_peer: usize,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
    },
    /// Brute-force reference computations on small graphs.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Synthetic inputs in the same formats as real data.
    #[command(subcommand)]
    Generate(GenerateCmd),
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Every simple valley-free path.
    Paths {
        topology: PathBuf,
        src: AsId,
        dst: AsId,
        #[arg(long, default_value_t = 1)]
        max_peer: usize,
        #[arg(long, default_value_t = 16)]
        max_len: usize,
    },
    /// Preferred route of every AS toward `dst`.
    Routes { topology: PathBuf, dst: AsId },
    /// ASes captured when `attacker` announces `origin`'s prefix.
    Hijack { topology: PathBuf, origin: AsId, attacker: AsId },
    /// Fraction of attackers that fail to divert `client` from `guard`.
    Resilience { topology: PathBuf, client: AsId, guard: AsId },
    /// Key/value regression table over all pairs and triples.
    Table {
        topology: PathBuf,
        relays: PathBuf,
        #[arg(long, value_enum, default_value_t = EngineArg::Oracle)]
        engine: EngineArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Oracle,
    Fast,
}

#[derive(Subcommand)]
enum GenerateCmd {
    /// Tiered AS topology in serial-2 format.
    Topology {
        #[arg(long, default_value_t = 100)]
        ases: usize,
        #[arg(long, default_value_t = 3)]
        tiers: usize,
        #[arg(long, default_value_t = 0.3)]
        peer_prob: f64,
        #[arg(long, default_value_t = 0.3)]
        multihome_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relay list on a topology.
    Relays {
        topology: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0.5)]
        guard_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Daily check-in traces over synthetic country codes.
    Checkins {
        #[arg(long, default_value_t = 100)]
        users: usize,
        #[arg(long, default_value_t = 365)]
        days: usize,
        #[arg(long, default_value_t = 14)]
        countries: usize,
        #[arg(long, default_value_t = 0.05)]
        move_prob: f64,
        #[arg(long, default_value_t = 0.5)]
        checkin_prob: f64,
        #[arg(long, default_value = "2020-01-01")]
        start_date: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Country-code to AS map over the topology's client ISPs.
    CountryMap {
        topology: PathBuf,
        #[arg(long, default_value_t = 14)]
        countries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Topology with some provider links rewired.
    Perturb {
        topology: PathBuf,
        #[arg(long, default_value_t = 10)]
        changes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Daily penultimate hops seen by probes toward one destination.
    RouteChanges {
        topology: PathBuf,
        #[arg(long)]
        destination: AsId,
        #[arg(long, default_value_t = 30)]
        days: usize,
        #[arg(long, default_value_t = 5)]
        changes_per_day: usize,
        #[arg(long, default_value_t = 200)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Synthetic country codes `C01`, `C02`, ...
fn country_codes(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("C{i:02}")).collect()
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn join(ases: &[AsId]) -> String {
    ases.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ")
}

fn require(graph: &AsGraph, id: AsId) -> Result<(), CliError> {
    if graph.contains(id) {
        Ok(())
    } else {
        Err(CliError::Run(format!("AS{id} is not in the topology")))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, threads } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(CliError::run)?;
            }
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| {
                Path::new("out").join(config.file_stem().unwrap_or_else(|| "run".as_ref()))
            });
            let table = run_experiment(&cfg)?;
            write_outputs(&out, &cfg, &table)?;
            println!("{} rows -> {}", table.rows.len(), out.display());
        }
        Command::Summarize { results, group_by, metric } => {
            let text = std::fs::read_to_string(&results).map_err(|e| CliError::io(&results, e))?;
            print!("{}", summarize(&text, &group_by, metric.as_deref())?);
        }
        Command::Paths { topology, src, dst, max_peer, max_len } => {
            let graph = load_graph(&topology)?;
            require(&graph, src)?;
            let state = routing_state(&graph, dst).map_err(CliError::run)?;
            match state.path(src) {
                Some(p) => println!("best {}", join(p.ases())),
                None => println!("best none"),
            }
            for p in routable_paths(&graph, src, dst, max_peer, max_len).map_err(CliError::run)? {
                println!("{}", join(p.ases()));
            }
        }
        Command::Oracle(cmd) => oracle(cmd)?,
        Command::Generate(cmd) => generate(cmd)?,
    }
    Ok(())
}

fn oracle(cmd: OracleCmd) -> Result<(), CliError> {
    match cmd {
        OracleCmd::Paths { topology, src, dst, max_peer, max_len } => {
            let graph = load_graph(&topology)?;
            for p in oracle_enumerate_paths(&graph, src, dst, max_peer, max_len).map_err(CliError::run)? {
                println!("{}", join(p.ases()));
            }
        }
        OracleCmd::Routes { topology, dst } => {
            let graph = load_graph(&topology)?;
            for (a, p) in oracle_routes(&graph, &[dst]).map_err(CliError::run)? {
                match p {
                    Some(p) => println!("{a}: {}", join(p.ases())),
                    None => println!("{a}: none"),
                }
            }
        }
        OracleCmd::Hijack { topology, origin, attacker } => {
            let graph = load_graph(&topology)?;
            let hit: Vec<AsId> = oracle_hijack(&graph, origin, attacker)
                .map_err(CliError::run)?
                .into_iter()
                .filter_map(|(a, h)| h.then_some(a))
                .collect();
            println!("{}", join(&hit));
        }
        OracleCmd::Resilience { topology, client, guard } => {
            let graph = load_graph(&topology)?;
            let r = oracle_resilience(&graph, client, guard).map_err(CliError::run)?;
            println!("{}/{} = {}", r.safe, r.candidates, r.value());
        }
        OracleCmd::Table { topology, relays, engine, out } => {
            let graph = load_graph(&topology)?;
            let relays = load_relays(&relays)?;
            let engine = match engine {
                EngineArg::Oracle => Engine::Oracle,
                EngineArg::Fast => Engine::Fast,
            };
            let text = table_csv(&regression_table(&graph, &relays, engine)?)?;
            match out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn generate(cmd: GenerateCmd) -> Result<(), CliError> {
    match cmd {
        GenerateCmd::Topology { ases, tiers, peer_prob, multihome_prob, seed, out } => {
            let p = TopologyGenParams { n_ases: ases, n_tiers: tiers, peer_prob, multihome_prob, seed };
            write(&out, &gen_topology(&p).map_err(CliError::run)?.to_serial2())?;
        }
        GenerateCmd::Relays { topology, count, guard_frac, seed, out } => {
            let graph = load_graph(&topology)?;
            write(&out, &relays_to_csv(&gen_relays(&graph, count, guard_frac, seed).map_err(CliError::run)?))?;
        }
        GenerateCmd::Checkins { users, days, countries, move_prob, checkin_prob, start_date, seed, out } => {
            let start = chrono_day(&start_date)?;
            let p = MobilityGenParams {
                n_users: users,
                n_days: days,
                countries: country_codes(countries),
                move_prob,
                checkin_prob,
                start_day: start,
                seed,
            };
            write(&out, &traces_to_csv(&gen_mobility_traces(&p).map_err(CliError::run)?))?;
        }
        GenerateCmd::CountryMap { topology, countries, seed, out } => {
            let graph = load_graph(&topology)?;
            let map = gen_country_map(&graph, &country_codes(countries), seed).map_err(CliError::run)?;
            write(&out, &country_map_to_csv(&map))?;
        }
        GenerateCmd::Perturb { topology, changes, seed, out } => {
            let graph = load_graph(&topology)?;
            write(&out, &perturb_topology(&graph, changes, seed).map_err(CliError::run)?.to_serial2())?;
        }
        GenerateCmd::RouteChanges { topology, destination, days, changes_per_day, probes, seed, out } => {
            let graph = load_graph(&topology)?;
            require(&graph, destination)?;
            let mut snapshots = vec![graph];
            for d in 1..days {
                let prev = snapshots.last().expect("non-empty");
                let next = perturb_topology(prev, changes_per_day, seed.wrapping_add(d as u64)).map_err(CliError::run)?;
                snapshots.push(next);
            }
            let hosts: Vec<AsId> = snapshots[0]
                .client_isp_ases()
                .into_iter()
                .filter(|&a| a != destination)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if hosts.is_empty() {
                return Err(CliError::Run("no client ISPs to host probes".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let width = probes.max(1).to_string().len();
            let probe_list: Vec<(String, AsId)> = (0..probes)
                .map(|i| (format!("p{i:0width$}"), *hosts.choose(&mut rng).expect("non-empty")))
                .collect();
            let records = gen_route_changes(&snapshots, &probe_list, destination).map_err(CliError::run)?;
            write(&out, &route_changes_to_csv(&records))?;
        }
    }
    Ok(())
}

fn chrono_day(s: &str) -> Result<i64, CliError> {
    let d = s.parse().map_err(|e| CliError::Run(format!("bad --start-date `{s}`: {e}")))?;
    Ok(day_index(d))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
