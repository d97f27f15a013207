//! JSON experiment configuration.
//!
//! A config names an experiment kind, a master seed and a `params` object
//! whose schema depends on the kind. Relative file paths resolve against
//! the config file's directory.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    VanillaMobility,
    CrMobility,
    DenasaMobility,
    HornetMobility,
    DenasaInference,
    CrInference,
    Dovetail,
    Phi,
    Taps,
    HornetRouting,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::VanillaMobility => "vanilla-mobility",
            Kind::CrMobility => "cr-mobility",
            Kind::DenasaMobility => "denasa-mobility",
            Kind::HornetMobility => "hornet-mobility",
            Kind::DenasaInference => "denasa-inference",
            Kind::CrInference => "cr-inference",
            Kind::Dovetail => "dovetail",
            Kind::Phi => "phi",
            Kind::Taps => "taps",
            Kind::HornetRouting => "hornet-routing",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Kind,
    seed: u64,
    #[serde(default)]
    description: Option<String>,
    /// Percentiles reported per (step, metric) in `aggregate.csv`.
    #[serde(default)]
    percentiles: Vec<f64>,
    params: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    pub description: Option<String>,
    pub percentiles: Vec<f64>,
    pub params: Params,
    /// Raw config bytes, hashed into the run metadata.
    pub source: Vec<u8>,
}

#[derive(Debug, Clone)]
pub enum Params {
    Mobility(MobilityParams),
    HornetMobility(HornetMobilityParams),
    Inference(InferenceParams),
    Dovetail(DovetailConfig),
    Phi(PhiConfig),
    Taps(TapsConfig),
    HornetRouting(HornetRoutingConfig),
}

fn default_alpha() -> f64 {
    0.5
}

fn default_a() -> f64 {
    0.1
}

/// Shared by the three guard-compromise mobility experiments.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityParams {
    pub topology: PathBuf,
    pub relays: PathBuf,
    pub checkins: PathBuf,
    pub country_map: PathBuf,
    /// Single-AS adversaries, averaged over (vanilla and cr).
    #[serde(default)]
    pub adversaries: Vec<u32>,
    /// Suspect ASes (denasa); they also act as the adversary.
    #[serde(default)]
    pub suspects: Vec<u32>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Only the first `max_users` traces are evaluated.
    #[serde(default)]
    pub max_users: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HornetMobilityParams {
    pub topology: PathBuf,
    pub checkins: PathBuf,
    pub country_map: PathBuf,
    pub destinations: Vec<u32>,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub rejection_rates: Vec<f64>,
    /// Targets need at least this many check-ins.
    #[serde(default)]
    pub min_points: usize,
    #[serde(default = "default_bucket_width")]
    pub bucket_width: usize,
    /// Buckets starting at or above this are merged.
    #[serde(default)]
    pub bucket_cap: Option<usize>,
}

fn default_bucket_width() -> usize {
    50
}

/// Guard-observation inference (denasa and cr).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceParams {
    pub topology: PathBuf,
    pub relays: PathBuf,
    #[serde(default)]
    pub suspects: Vec<u32>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Candidate client locations; defaults to the client ISPs.
    #[serde(default)]
    pub candidates: Option<Vec<u32>>,
    /// True client locations to simulate.
    #[serde(default)]
    pub clients: Option<Vec<u32>>,
    /// Instead of `clients`, take the leakiest candidates by ranking.
    #[serde(default)]
    pub leaky_clients: Option<usize>,
    pub trials: usize,
    pub observations: usize,
    /// Emit one posterior row per candidate per step.
    #[serde(default)]
    pub emit_posterior: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DovetailConfig {
    pub topology: PathBuf,
    /// Fixed adversary; defaults to the most frequent dovetail.
    #[serde(default)]
    pub adversary: Option<u32>,
    #[serde(default = "default_frequency_samples")]
    pub frequency_samples: usize,
    pub matchmakers: usize,
    pub connections: usize,
    pub trials: usize,
    #[serde(default = "default_min_head_len")]
    pub min_head_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_peer_links")]
    pub max_peer_links: usize,
}

fn default_frequency_samples() -> usize {
    10_000
}

fn default_min_head_len() -> usize {
    6
}

fn default_max_len() -> usize {
    8
}

fn default_peer_links() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    pub topology: PathBuf,
    #[serde(default)]
    pub adversary: Option<u32>,
    #[serde(default = "default_frequency_samples")]
    pub midway_samples: usize,
    pub helpers: usize,
    pub connections: usize,
    pub trials: usize,
    #[serde(default)]
    pub rejection_rates: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Formation {
    pub topology: PathBuf,
    pub relays: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapsConfig {
    pub formations: Vec<Formation>,
    pub medoids: Vec<u32>,
    pub adversaries: Vec<u32>,
    pub top_k_guards: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HornetRoutingConfig {
    pub route_changes: PathBuf,
}

fn parse_params<T: DeserializeOwned>(v: serde_json::Value) -> Result<T, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("params: {e}")))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_fraction(name: &str, v: f64, closed_top: bool) -> Result<(), CliError> {
    let ok = if closed_top { (0.0..=1.0).contains(&v) } else { (0.0..1.0).contains(&v) };
    if ok {
        Ok(())
    } else {
        Err(invalid(format!("params.{name}: {v} is out of range")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_bytes(&bytes, &base)
    }

    pub fn from_bytes(bytes: &[u8], base: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = serde_json::from_slice(bytes).map_err(|e| CliError::Config(e.to_string()))?;
        for &p in &raw.percentiles {
            if !(0.0..=100.0).contains(&p) {
                return Err(invalid(format!("percentiles: {p} is outside [0, 100]")));
            }
        }
        let mut params = match raw.kind {
            Kind::VanillaMobility | Kind::CrMobility | Kind::DenasaMobility => {
                let p: MobilityParams = parse_params(raw.params)?;
                match raw.kind {
                    Kind::DenasaMobility if p.suspects.is_empty() => return Err(invalid("params.suspects: required")),
                    Kind::VanillaMobility | Kind::CrMobility if p.adversaries.is_empty() => {
                        return Err(invalid("params.adversaries: required"))
                    }
                    _ => {}
                }
                check_fraction("alpha", p.alpha, true)?;
                Params::Mobility(p)
            }
            Kind::HornetMobility => {
                let p: HornetMobilityParams = parse_params(raw.params)?;
                if p.destinations.is_empty() {
                    return Err(invalid("params.destinations: required"));
                }
                if !(p.a > 0.0) {
                    return Err(invalid("params.a: must be positive"));
                }
                for &t in &p.thresholds {
                    if !(t > 0.0 && t <= 1.0) {
                        return Err(invalid(format!("params.thresholds: {t} is outside (0, 1]")));
                    }
                }
                for &r in &p.rejection_rates {
                    check_fraction("rejection_rates", r, false)?;
                }
                if p.bucket_width == 0 {
                    return Err(invalid("params.bucket_width: must be positive"));
                }
                Params::HornetMobility(p)
            }
            Kind::DenasaInference | Kind::CrInference => {
                let p: InferenceParams = parse_params(raw.params)?;
                if raw.kind == Kind::DenasaInference && p.suspects.is_empty() {
                    return Err(invalid("params.suspects: required"));
                }
                check_fraction("alpha", p.alpha, true)?;
                if p.clients.is_some() == p.leaky_clients.is_some() {
                    return Err(invalid("params: exactly one of `clients` and `leaky_clients` is required"));
                }
                if p.trials == 0 {
                    return Err(invalid("params.trials: must be positive"));
                }
                Params::Inference(p)
            }
            Kind::Dovetail => {
                let p: DovetailConfig = parse_params(raw.params)?;
                if p.matchmakers == 0 || p.trials == 0 || p.frequency_samples == 0 {
                    return Err(invalid("params: matchmakers, trials and frequency_samples must be positive"));
                }
                if p.min_head_len < 3 || p.max_len < p.min_head_len {
                    return Err(invalid("params: need 3 <= min_head_len <= max_len"));
                }
                Params::Dovetail(p)
            }
            Kind::Phi => {
                let p: PhiConfig = parse_params(raw.params)?;
                if p.helpers == 0 || p.trials == 0 || p.midway_samples == 0 {
                    return Err(invalid("params: helpers, trials and midway_samples must be positive"));
                }
                for &r in &p.rejection_rates {
                    check_fraction("rejection_rates", r, false)?;
                }
                Params::Phi(p)
            }
            Kind::Taps => {
                let p: TapsConfig = parse_params(raw.params)?;
                if p.formations.is_empty() || p.medoids.is_empty() || p.adversaries.is_empty() {
                    return Err(invalid("params: formations, medoids and adversaries must be non-empty"));
                }
                if p.top_k_guards == 0 {
                    return Err(invalid("params.top_k_guards: must be positive"));
                }
                Params::Taps(p)
            }
            Kind::HornetRouting => Params::HornetRouting(parse_params(raw.params)?),
        };
        params.resolve_paths(base);
        Ok(ExperimentConfig {
            kind: raw.kind,
            seed: raw.seed,
            description: raw.description,
            percentiles: raw.percentiles,
            params,
            source: bytes.to_vec(),
        })
    }
}

impl Params {
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            Params::Mobility(p) => {
                for f in [&mut p.topology, &mut p.relays, &mut p.checkins, &mut p.country_map] {
                    fix(f);
                }
            }
            Params::HornetMobility(p) => {
                for f in [&mut p.topology, &mut p.checkins, &mut p.country_map] {
                    fix(f);
                }
            }
            Params::Inference(p) => {
                fix(&mut p.topology);
                fix(&mut p.relays);
            }
            Params::Dovetail(p) => fix(&mut p.topology),
            Params::Phi(p) => fix(&mut p.topology),
            Params::Taps(p) => {
                for f in &mut p.formations {
                    fix(&mut f.topology);
                    fix(&mut f.relays);
                }
            }
            Params::HornetRouting(p) => fix(&mut p.route_changes),
        }
    }
}
