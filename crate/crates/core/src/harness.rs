//! Experiment runner: the four deployment presets, load sweeps, the
//! calibration profile and report emission.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{render_cluster_report, HeatMap};
use crate::qos::{QosError, Sla};
use crate::simnet::{self, DispatchPolicy, MetricsReport, RequestRow, RunOutput, SimError, SimSetup, SimTime};
use crate::topology::{AgentKind, NodeId, NodeRole, NodeSpec, Topology, TopologyError, TopologySpec};
use crate::workload::{generate_scenario, ScenarioParams, WorkloadError, ACCESS_NODE_BASE, EDGE_NODE_BASE};

pub const CLOUD_NODE: NodeId = NodeId(0);
pub const FOG_NODE: NodeId = NodeId(1);
pub const FOG2_NODE: NodeId = NodeId(2);

const DEFAULT_PROFILE: &str = include_str!("../calibration/default.json");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("reports cover different sweeps")]
    SweepMismatch,
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("unknown preset `{0}` (expected fog1, cloud-only, mf2c-1fog or mf2c-2fog)")]
    UnknownPreset(String),
    #[error("invalid calibration profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Qos(#[from] QosError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfigPreset {
    /// Everything runs on the single fog node.
    Fog1,
    /// Everything runs in the cloud.
    CloudOnly,
    /// Predictive dispatch over one fog node and the cloud.
    #[serde(rename = "mf2c-1fog")]
    Mf2c1Fog,
    /// Predictive dispatch over two fog nodes and the cloud.
    #[serde(rename = "mf2c-2fog")]
    Mf2c2Fog,
}

impl ConfigPreset {
    pub const ALL: [ConfigPreset; 4] =
        [ConfigPreset::Fog1, ConfigPreset::CloudOnly, ConfigPreset::Mf2c1Fog, ConfigPreset::Mf2c2Fog];

    pub fn name(self) -> &'static str {
        match self {
            ConfigPreset::Fog1 => "fog1",
            ConfigPreset::CloudOnly => "cloud-only",
            ConfigPreset::Mf2c1Fog => "mf2c-1fog",
            ConfigPreset::Mf2c2Fog => "mf2c-2fog",
        }
    }

    pub fn fog_nodes(self) -> &'static [NodeId] {
        match self {
            ConfigPreset::Mf2c2Fog => &[FOG_NODE, FOG2_NODE],
            _ => &[FOG_NODE],
        }
    }

    pub fn policy(self) -> DispatchPolicy {
        match self {
            ConfigPreset::Fog1 => DispatchPolicy::Fixed { node: FOG_NODE },
            ConfigPreset::CloudOnly => DispatchPolicy::Fixed { node: CLOUD_NODE },
            ConfigPreset::Mf2c1Fog | ConfigPreset::Mf2c2Fog => {
                let mut candidates = self.fog_nodes().to_vec();
                candidates.push(CLOUD_NODE);
                DispatchPolicy::Qos { candidates }
            }
        }
    }
}

impl fmt::Display for ConfigPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConfigPreset {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConfigPreset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::UnknownPreset(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Requests per second, strictly increasing.
    pub rates: Vec<f64>,
    pub duration_s: f64,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.rates.is_empty() {
            return Err(HarnessError::InvalidSweep("no rates".into()));
        }
        if self.rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(HarnessError::InvalidSweep("rates must be positive".into()));
        }
        if self.rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::InvalidSweep("rates must be strictly increasing".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(HarnessError::InvalidSweep("duration must be positive".into()));
        }
        Ok(())
    }
}

/// Node capacities and link latencies for the stock topologies plus the
/// default workload knobs. Service rates are in demand units per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub name: String,
    pub note: String,
    /// Gateway to access agent, one way.
    pub edge_link_ms: f64,
    /// Access agent to fog node, one way.
    pub access_link_ms: f64,
    /// Fog node to cloud, one way.
    pub cloud_link_ms: f64,
    /// First fog node to the second one, one way.
    pub fog_peer_link_ms: f64,
    pub fog_service_rate: f64,
    pub fog_capacity: u32,
    pub cloud_service_rate: f64,
    pub cloud_capacity: u32,
    pub agent_service_rate: f64,
    pub agent_capacity: u32,
    pub demand: u32,
    pub traveler_count: usize,
    pub sla_ms: f64,
    pub alpha: f64,
    pub probe_interval_ms: f64,
    pub sweep: SweepSpec,
}

impl Calibration {
    /// The frozen profile shipped with the crate.
    pub fn frozen() -> Self {
        serde_json::from_str(DEFAULT_PROFILE).expect("bundled calibration parses")
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let cal: Calibration = serde_json::from_str(&text)?;
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let positive = [
            self.edge_link_ms,
            self.access_link_ms,
            self.cloud_link_ms,
            self.fog_peer_link_ms,
            self.fog_service_rate,
            self.cloud_service_rate,
            self.agent_service_rate,
            self.sla_ms,
            self.probe_interval_ms,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(HarnessError::InvalidProfile("latencies, rates and limits must be positive".into()));
        }
        if self.demand == 0 || self.fog_capacity == 0 || self.cloud_capacity == 0 || self.agent_capacity == 0 {
            return Err(HarnessError::InvalidProfile("demand and capacities must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(HarnessError::InvalidProfile("alpha must lie in [0, 1]".into()));
        }
        self.sweep.validate()
    }

    pub fn sla(&self, service_class: &str) -> Result<Sla, HarnessError> {
        Ok(Sla::new(service_class, self.sla_ms)?)
    }

    /// Workload defaults for this profile.
    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams { traveler_count: self.traveler_count, demand: self.demand, ..ScenarioParams::default() }
    }

    /// One-way latency from a gateway to the first fog node.
    pub fn fog_latency_ms(&self) -> f64 {
        self.edge_link_ms + self.access_link_ms
    }

    /// One-way latency from a gateway to the cloud.
    pub fn cloud_latency_ms(&self) -> f64 {
        self.fog_latency_ms() + self.cloud_link_ms
    }
}

fn spec(id: u64, kind: AgentKind, role: NodeRole, parent: Option<u64>, rate: f64, cap: u32, ms: f64) -> NodeSpec {
    NodeSpec {
        id: NodeId(id),
        kind,
        role,
        parent: parent.map(NodeId),
        service_rate: rate,
        capacity: cap,
        link_latency_up_ms: ms,
    }
}

/// Cloud, fog node, eight access agents and one gateway microagent per
/// access point. The two-fog preset hangs a second fog node off the first.
pub fn topology_for(preset: ConfigPreset, cal: &Calibration) -> Result<Topology, HarnessError> {
    let mut nodes = vec![
        spec(CLOUD_NODE.0, AgentKind::CloudAgent, NodeRole::Cloud, None, cal.cloud_service_rate, cal.cloud_capacity, 0.0),
        spec(
            FOG_NODE.0,
            AgentKind::Agent,
            NodeRole::Fog,
            Some(CLOUD_NODE.0),
            cal.fog_service_rate,
            cal.fog_capacity,
            cal.cloud_link_ms,
        ),
    ];
    if preset == ConfigPreset::Mf2c2Fog {
        nodes.push(spec(
            FOG2_NODE.0,
            AgentKind::Agent,
            NodeRole::Fog,
            Some(FOG_NODE.0),
            cal.fog_service_rate,
            cal.fog_capacity,
            cal.fog_peer_link_ms,
        ));
    }
    for i in 0..8 {
        let (access, edge) = (ACCESS_NODE_BASE + i, EDGE_NODE_BASE + i);
        nodes.push(spec(
            access,
            AgentKind::Agent,
            NodeRole::Access,
            Some(FOG_NODE.0),
            cal.agent_service_rate,
            cal.agent_capacity,
            cal.access_link_ms,
        ));
        nodes.push(spec(
            edge,
            AgentKind::Microagent,
            NodeRole::Edge,
            Some(access),
            cal.agent_service_rate,
            cal.agent_capacity,
            cal.edge_link_ms,
        ));
    }
    Ok(Topology::build(&TopologySpec { nodes })?)
}

/// Two fog areas under the cloud: access points 1-4 belong to fog A (node 1),
/// 5-8 to fog B (node 2).
pub fn two_area_topology(cal: &Calibration) -> Result<Topology, HarnessError> {
    let mut nodes =
        vec![spec(CLOUD_NODE.0, AgentKind::CloudAgent, NodeRole::Cloud, None, cal.cloud_service_rate, cal.cloud_capacity, 0.0)];
    for fog in [FOG_NODE, FOG2_NODE] {
        nodes.push(spec(
            fog.0,
            AgentKind::Agent,
            NodeRole::Fog,
            Some(CLOUD_NODE.0),
            cal.fog_service_rate,
            cal.fog_capacity,
            cal.cloud_link_ms,
        ));
    }
    for i in 0..8 {
        let fog = if i < 4 { FOG_NODE } else { FOG2_NODE };
        let (access, edge) = (ACCESS_NODE_BASE + i, EDGE_NODE_BASE + i);
        nodes.push(spec(
            access,
            AgentKind::Agent,
            NodeRole::Access,
            Some(fog.0),
            cal.agent_service_rate,
            cal.agent_capacity,
            cal.access_link_ms,
        ));
        nodes.push(spec(
            edge,
            AgentKind::Microagent,
            NodeRole::Edge,
            Some(access),
            cal.agent_service_rate,
            cal.agent_capacity,
            cal.edge_link_ms,
        ));
    }
    Ok(Topology::build(&TopologySpec { nodes })?)
}

pub fn setup_for(preset: ConfigPreset, cal: &Calibration, service_class: &str) -> Result<SimSetup, HarnessError> {
    let mut setup = SimSetup::new(preset.name(), preset.policy(), cal.sla(service_class)?);
    setup.alpha = cal.alpha;
    setup.probe_interval = Some(SimTime::from_millis_f64(cal.probe_interval_ms));
    Ok(setup)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub cluster_eps_m: Option<f64>,
    pub record_trace: bool,
}

/// One simulation per sweep rate, run in parallel and returned in rate order.
/// The workload depends only on the scenario parameters, rate and seed, so
/// every preset sees the same travelers and request stream.
pub fn run_experiment(
    preset: ConfigPreset,
    cal: &Calibration,
    sweep: &SweepSpec,
    params: &ScenarioParams,
    options: &RunOptions,
) -> Result<Vec<RunOutput>, HarnessError> {
    sweep.validate()?;
    let topology = topology_for(preset, cal)?;
    let mut setup = setup_for(preset, cal, &params.service_class)?;
    setup.cluster_eps_m = options.cluster_eps_m;
    setup.record_trace = options.record_trace;
    sweep
        .rates
        .par_iter()
        .map(|&rate| {
            let point = ScenarioParams { request_rate_per_s: rate, duration_s: sweep.duration_s, ..params.clone() };
            let scenario = generate_scenario(&point, sweep.seed)?;
            Ok(simnet::run(&scenario, &topology, &setup, sweep.seed)?)
        })
        .collect()
}

/// `1 - mean(a) / mean(b)` averaged over the sweep.
pub fn compare(a: &[MetricsReport], b: &[MetricsReport]) -> Result<f64, HarnessError> {
    if a.is_empty()
        || a.len() != b.len()
        || a.iter().zip(b).any(|(x, y)| x.rate_per_s != y.rate_per_s || x.duration_s != y.duration_s)
    {
        return Err(HarnessError::SweepMismatch);
    }
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| if y.mean_response_ms > 0.0 { 1.0 - x.mean_response_ms / y.mean_response_ms } else { 0.0 })
        .sum();
    Ok(total / a.len() as f64)
}

/// Writes `heatmap.csv` and `heatmap.pgm` into `dir`.
pub fn export_heatmap(heatmap: &HeatMap, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("heatmap.csv");
    fs::write(&csv_path, heatmap.to_csv()).map_err(io_err(&csv_path))?;
    let pgm_path = dir.join("heatmap.pgm");
    fs::write(&pgm_path, heatmap.to_pgm()).map_err(io_err(&pgm_path))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    id: u64,
    config: &'a str,
    rate: f64,
    created_at: String,
    target: Option<u64>,
    response_ms: Option<String>,
    violated: bool,
    predicted_violation: bool,
    outcome: simnet::RequestOutcome,
}

/// Per-request log; `created_at` is in seconds with microsecond precision.
pub fn write_requests_csv<'a>(
    path: &Path,
    runs: impl IntoIterator<Item = (f64, &'a [RequestRow])>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for (rate, rows) in runs {
        for r in rows {
            w.serialize(CsvRow {
                id: r.id,
                config: &r.config,
                rate,
                created_at: format!("{:.6}", r.created_at.as_secs_f64()),
                target: r.target.map(|t| t.0),
                response_ms: r.response_ms.map(|v| format!("{v:.3}")),
                violated: r.violated,
                predicted_violation: r.predicted_violation,
                outcome: r.outcome,
            })?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaSummary {
    pub service_class: String,
    pub max_response_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub calibration: String,
    pub seed: u64,
    pub duration_s: f64,
    pub rates: Vec<f64>,
    pub sla: SlaSummary,
    pub presets: BTreeMap<String, Vec<MetricsReport>>,
    /// `compare(preset, cloud-only)` for each preset, when cloud-only ran.
    pub improvement_vs_cloud: BTreeMap<String, f64>,
}

pub struct ExperimentRequest<'a> {
    pub presets: &'a [ConfigPreset],
    pub calibration: &'a Calibration,
    pub sweep: &'a SweepSpec,
    pub params: &'a ScenarioParams,
    pub options: RunOptions,
    pub export_heatmap: bool,
}

/// Runs every preset over the sweep and writes `requests.csv`,
/// `summary.json` and, on request, the heat map and cluster log into `out`.
pub fn run_and_write(req: &ExperimentRequest<'_>, out: &Path) -> Result<Summary, HarnessError> {
    req.calibration.validate()?;
    req.params.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;

    let mut runs: BTreeMap<ConfigPreset, Vec<RunOutput>> = BTreeMap::new();
    for &preset in req.presets {
        if let std::collections::btree_map::Entry::Vacant(slot) = runs.entry(preset) {
            slot.insert(run_experiment(preset, req.calibration, req.sweep, req.params, &req.options)?);
        }
    }

    write_requests_csv(
        &out.join("requests.csv"),
        runs.values().flat_map(|outputs| outputs.iter().map(|o| (o.report.rate_per_s, o.rows.as_slice()))),
    )?;

    let presets: BTreeMap<String, Vec<MetricsReport>> =
        runs.iter().map(|(p, o)| (p.name().to_string(), o.iter().map(|r| r.report.clone()).collect())).collect();
    let mut improvement_vs_cloud = BTreeMap::new();
    if let Some(cloud) = presets.get(ConfigPreset::CloudOnly.name()) {
        for (name, reports) in presets.iter().filter(|(n, _)| n.as_str() != ConfigPreset::CloudOnly.name()) {
            improvement_vs_cloud.insert(name.clone(), compare(reports, cloud)?);
        }
    }
    let summary = Summary {
        calibration: req.calibration.name.clone(),
        seed: req.sweep.seed,
        duration_s: req.sweep.duration_s,
        rates: req.sweep.rates.clone(),
        sla: SlaSummary { service_class: req.params.service_class.clone(), max_response_ms: req.calibration.sla_ms },
        presets,
        improvement_vs_cloud,
    };
    let summary_path = out.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&summary_path, text).map_err(io_err(&summary_path))?;

    // The crowd does not depend on the preset or the rate, so the first run
    // stands in for all of them.
    if let Some(first) = runs.values().next().and_then(|o| o.first()) {
        if req.export_heatmap {
            export_heatmap(&first.heatmap, out)?;
        }
        if req.options.cluster_eps_m.is_some() {
            let path = out.join("clusters.jsonl");
            fs::write(&path, render_cluster_report(&first.clusters)).map_err(io_err(&path))?;
        }
    }
    Ok(summary)
}

/// Human-readable table of a summary.
pub fn render_table(summary: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sla {}: {} ms", summary.sla.service_class, summary.sla.max_response_ms);
    let _ = writeln!(out, "{:<12} {:>8} {:>10} {:>10} {:>10} {:>8} {:>8}", "preset", "rate", "mean_ms", "p95_ms", "p99_ms", "viol", "rej");
    for (name, reports) in &summary.presets {
        for r in reports {
            let _ = writeln!(
                out,
                "{:<12} {:>8.1} {:>10.2} {:>10.2} {:>10.2} {:>8.3} {:>8.3}",
                name,
                r.rate_per_s,
                r.mean_response_ms,
                r.p95_response_ms,
                r.p99_response_ms,
                r.sla_violation_rate,
                r.rejection_rate
            );
        }
    }
    for (name, ratio) in &summary.improvement_vs_cloud {
        let _ = writeln!(out, "improvement {name} vs cloud-only: {ratio:.3}");
    }
    out
}
