//! Deterministic discrete-event engine.
//!
//! Nodes are single FIFO servers with deterministic service times
//! (`demand / service_rate`); links add their fixed one-way latency in each
//! direction. Time is an integer microsecond clock and events are ordered by
//! `(time, sequence)`, so a run is a pure function of its inputs.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{detect_clusters, AnalyticsError, ClusterSnapshot, HeatMap};
use crate::placement::{self, reserve_on, try_local, Outcome, PlacementDecision, ServiceRequest};
use crate::positioning::{fresh_observations, serving_ap, trilaterate};
use crate::qos::{analytic_response_ms, QosError, QosPredictor, Sla};
use crate::recommender::ProfileStore;
use crate::rng::{stream, SimRng};
use crate::topology::{NodeId, NodeSpec, Topology, TopologyError};
use crate::workload::{emit_rssi, fog_area, poll_flights, reinstall, step_traveler, Scenario, Traveler};

/// Microseconds since scenario start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e6).round().max(0.0) as u64)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        SimTime((ms * 1e3).round().max(0.0) as u64)
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum DispatchPolicy {
    /// Every request goes to one node.
    Fixed { node: NodeId },
    /// Predicted-response argmin over the candidates that can admit the
    /// request; recursive placement when none can.
    Qos { candidates: Vec<NodeId> },
    /// Plain recursive placement from the request's origin.
    Recursive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "snake_case")]
pub enum TopologyChange {
    Add { node: NodeSpec },
    Remove { node: NodeId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledChange {
    pub at: SimTime,
    pub change: TopologyChange,
}

/// The traveler at index `traveler` reinstalls the app at `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledReinstall {
    pub at: SimTime,
    pub traveler: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetup {
    /// Label written to every request row.
    pub config: String,
    pub policy: DispatchPolicy,
    pub sla: Sla,
    pub alpha: f64,
    /// Period of the monitoring heartbeat: each tick feeds every dispatch
    /// candidate's current model response time (latency, service and queued
    /// work) into the predictor as an observation.
    pub probe_interval: Option<SimTime>,
    pub sample_interval: SimTime,
    pub heatmap_cell_m: f64,
    pub cluster_eps_m: Option<f64>,
    pub cluster_min_size: usize,
    pub max_pending_events: usize,
    pub changes: Vec<ScheduledChange>,
    pub reinstalls: Vec<ScheduledReinstall>,
    pub record_trace: bool,
}

impl SimSetup {
    pub fn new(config: impl Into<String>, policy: DispatchPolicy, sla: Sla) -> Self {
        SimSetup {
            config: config.into(),
            policy,
            sla,
            alpha: crate::qos::DEFAULT_ALPHA,
            probe_interval: Some(SimTime::from_millis_f64(20.0)),
            sample_interval: SimTime::from_secs_f64(1.0),
            heatmap_cell_m: 2.0,
            cluster_eps_m: None,
            cluster_min_size: 3,
            max_pending_events: 1_000_000,
            changes: Vec::new(),
            reinstalls: Vec::new(),
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("event queue exceeded {0} pending events")]
    ScenarioOverflow(usize),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Qos(#[from] QosError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    /// A client issues request `request`; the orchestrator decides where it runs.
    RequestArrival { request: usize },
    /// The request reaches its target's queue.
    NodeArrival { request: usize, node: NodeId },
    ServiceStart { node: NodeId },
    ServiceEnd { node: NodeId, request: usize },
    ResponseDelivered { request: usize },
    NodeChange { index: usize },
    Reinstall { index: usize },
    Sample,
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    at: SimTime,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub at: SimTime,
    pub seq: u64,
    /// Time of the event that scheduled this one.
    pub scheduled_at: SimTime,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestOutcome {
    Completed,
    Rejected,
    /// Lost with a removed node.
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRow {
    pub id: u64,
    pub config: String,
    pub created_at: SimTime,
    pub target: Option<NodeId>,
    pub response_ms: Option<f64>,
    pub violated: bool,
    pub predicted_violation: bool,
    pub outcome: RequestOutcome,
}

/// Aggregates for one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: String,
    pub rate_per_s: f64,
    pub duration_s: f64,
    pub count: u64,
    pub completions: u64,
    pub rejections: u64,
    pub dropped: u64,
    pub mean_response_ms: f64,
    pub p50_response_ms: f64,
    pub p95_response_ms: f64,
    pub p99_response_ms: f64,
    pub throughput_per_s: f64,
    pub sla_ms: f64,
    pub sla_violation_rate: f64,
    pub rejection_rate: f64,
    pub predicted_violations: u64,
    pub served_by: BTreeMap<NodeId, u64>,
    pub utilization: BTreeMap<NodeId, f64>,
    pub position_samples: u64,
    pub flight_alerts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub report: MetricsReport,
    /// Ordered by request id.
    pub rows: Vec<RequestRow>,
    pub heatmap: HeatMap,
    pub clusters: Vec<ClusterSnapshot>,
    /// Activity seen by each fog area (the cloud for gateways outside any).
    pub area_profiles: BTreeMap<NodeId, ProfileStore>,
    /// All areas merged.
    pub profiles: ProfileStore,
    pub trace: Vec<TraceEntry>,
}

/// Nearest-rank percentile of an ascending sample; 0 when empty.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Default)]
struct NodeQueue {
    fifo: VecDeque<usize>,
    busy: bool,
    in_service: Option<usize>,
    busy_until: SimTime,
    busy_time: u64,
}

#[derive(Debug)]
struct InFlight {
    request: ServiceRequest,
    decision: Option<PlacementDecision>,
    predicted_violation: bool,
    service: SimTime,
    one_way: SimTime,
    done: bool,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    setup: &'a SimSetup,
    topology: Topology,
    predictor: QosPredictor,
    now: SimTime,
    seq: u64,
    heap: BinaryHeap<Reverse<(Key, SimTime, usize)>>,
    events: Vec<EventKind>,
    queues: BTreeMap<NodeId, NodeQueue>,
    inflight: Vec<InFlight>,
    rows: Vec<RequestRow>,
    travelers: Vec<Traveler>,
    origins: Vec<NodeId>,
    noise: Vec<SimRng>,
    installs: SimRng,
    stores: BTreeMap<NodeId, ProfileStore>,
    /// Waypoint index of each traveler's last recorded visit.
    visit_mark: Vec<Option<usize>>,
    last_origin: Option<NodeId>,
    heatmap: HeatMap,
    clusters: Vec<ClusterSnapshot>,
    trace: Vec<TraceEntry>,
    position_samples: u64,
    flight_alerts: u64,
    last_poll: SimTime,
    predicted_violations: u64,
    last_event_at: SimTime,
}

fn service_time(demand: u32, rate: f64) -> SimTime {
    SimTime((f64::from(demand) / rate * 1e6).round() as u64)
}

impl<'a> Engine<'a> {
    fn schedule(&mut self, at: SimTime, kind: EventKind) -> Result<(), SimError> {
        debug_assert!(at >= self.now, "causality");
        let idx = self.events.len();
        self.events.push(kind);
        self.heap.push(Reverse((Key { at, seq: self.seq }, self.now, idx)));
        self.seq += 1;
        if self.heap.len() > self.setup.max_pending_events {
            return Err(SimError::ScenarioOverflow(self.setup.max_pending_events));
        }
        Ok(())
    }

    fn queue_delay_ms(queues: &BTreeMap<NodeId, NodeQueue>, inflight: &[InFlight], now: SimTime, node: NodeId) -> f64 {
        let Some(q) = queues.get(&node) else {
            return 0.0;
        };
        let running = if q.in_service.is_some() { q.busy_until.saturating_sub(now).0 } else { 0 };
        let waiting: u64 = q.fifo.iter().map(|&i| inflight[i].service.0).sum();
        (running + waiting) as f64 / 1e3
    }

    fn decide(&mut self, request: &ServiceRequest) -> Result<Option<(PlacementDecision, bool)>, SimError> {
        let topology = &mut self.topology;
        match &self.setup.policy {
            DispatchPolicy::Fixed { node } => Ok(reserve_on(topology, request, *node).ok().map(|d| (d, false))),
            DispatchPolicy::Recursive => Ok(placement::place(topology, request).ok().map(|d| (d, false))),
            DispatchPolicy::Qos { candidates } => {
                let admit: Vec<NodeId> = candidates
                    .iter()
                    .copied()
                    .filter(|c| try_local(topology, *c, request).unwrap_or(false))
                    .collect();
                if admit.is_empty() {
                    return Ok(placement::place(topology, request).ok().map(|d| (d, false)));
                }
                let (queues, inflight, now) = (&self.queues, &self.inflight, self.now);
                let probe = |n: NodeId| Self::queue_delay_ms(queues, inflight, now, n);
                let choice = self.predictor.dispatch(topology, &admit, request, &self.setup.sla, &probe)?;
                let d = reserve_on(topology, request, choice.node).expect("candidate admitted the demand");
                Ok(Some((d, choice.predicted_violation)))
            }
        }
    }

    fn reject(&mut self, request: &ServiceRequest, outcome: RequestOutcome, target: Option<NodeId>) {
        self.rows.push(RequestRow {
            id: request.id,
            config: self.setup.config.clone(),
            created_at: request.created_at,
            target,
            response_ms: None,
            violated: false,
            predicted_violation: false,
            outcome,
        });
    }

    fn on_request(&mut self, index: usize) -> Result<(), SimError> {
        let spec = self.scenario.requests[index];
        if let Some(next) = self.scenario.requests.get(index + 1) {
            self.schedule(next.at, EventKind::RequestArrival { request: index + 1 })?;
        }
        let origin = self.origins[spec.traveler];
        self.last_origin = Some(origin);
        let request = ServiceRequest {
            id: spec.id,
            service_class: self.setup.sla.service_class.clone(),
            demand: self.scenario.params.demand,
            origin,
            created_at: self.now,
            deadline_ms: Some(self.setup.sla.max_response_ms),
        };
        let slot = self.inflight.len();
        match self.decide(&request)? {
            None => {
                self.reject(&request, RequestOutcome::Rejected, None);
                self.inflight.push(InFlight {
                    request,
                    decision: None,
                    predicted_violation: false,
                    service: SimTime::ZERO,
                    one_way: SimTime::ZERO,
                    done: true,
                });
            }
            Some((decision, predicted_violation)) => {
                if predicted_violation {
                    self.predicted_violations += 1;
                }
                let target = self.topology.node(decision.target)?;
                let service = service_time(request.demand, target.service_rate);
                let one_way = SimTime::from_millis_f64(self.topology.latency_ms(origin, decision.target)?);
                let node = decision.target;
                self.inflight.push(InFlight {
                    request,
                    decision: Some(decision),
                    predicted_violation,
                    service,
                    one_way,
                    done: false,
                });
                self.schedule(self.now + one_way, EventKind::NodeArrival { request: slot, node })?;
            }
        }
        Ok(())
    }

    fn drop_request(&mut self, slot: usize) {
        let f = &mut self.inflight[slot];
        if f.done {
            return;
        }
        f.done = true;
        let (request, target) = (f.request.clone(), f.decision.as_ref().map(|d| d.target));
        self.reject(&request, RequestOutcome::Dropped, target);
    }

    fn on_node_arrival(&mut self, slot: usize, node: NodeId) -> Result<(), SimError> {
        if self.inflight[slot].done {
            return Ok(());
        }
        if !self.topology.contains(node) {
            self.drop_request(slot);
            return Ok(());
        }
        let q = self.queues.entry(node).or_default();
        q.fifo.push_back(slot);
        if !q.busy {
            q.busy = true;
            self.schedule(self.now, EventKind::ServiceStart { node })?;
        }
        Ok(())
    }

    fn on_service_start(&mut self, node: NodeId) -> Result<(), SimError> {
        let now = self.now;
        let Some(q) = self.queues.get_mut(&node) else {
            return Ok(());
        };
        let Some(slot) = q.fifo.pop_front() else {
            q.busy = false;
            return Ok(());
        };
        let end = now + self.inflight[slot].service;
        q.in_service = Some(slot);
        q.busy_until = end;
        self.schedule(end, EventKind::ServiceEnd { node, request: slot })
    }

    fn on_service_end(&mut self, node: NodeId, slot: usize) -> Result<(), SimError> {
        let Some(q) = self.queues.get_mut(&node) else {
            return Ok(());
        };
        q.in_service = None;
        q.busy_time += self.inflight[slot].service.0;
        let more = !q.fifo.is_empty();
        if !more {
            q.busy = false;
        }
        if let Some(d) = &self.inflight[slot].decision {
            // Capacity held by a removed node is gone with it.
            let _ = placement::release(&mut self.topology, d);
        }
        if more {
            self.schedule(self.now, EventKind::ServiceStart { node })?;
        }
        let back = self.now + self.inflight[slot].one_way;
        self.schedule(back, EventKind::ResponseDelivered { request: slot })
    }

    fn on_delivered(&mut self, slot: usize) {
        let f = &mut self.inflight[slot];
        if f.done {
            return;
        }
        f.done = true;
        let response_ms = self.now.saturating_sub(f.request.created_at).as_millis_f64();
        let target = f.decision.as_ref().expect("delivered requests were placed").target;
        let violated =
            self.predictor.record(f.request.id, target, response_ms, &self.setup.sla, self.now).is_some();
        self.rows.push(RequestRow {
            id: f.request.id,
            config: self.setup.config.clone(),
            created_at: f.request.created_at,
            target: Some(target),
            response_ms: Some(response_ms),
            violated,
            predicted_violation: f.predicted_violation,
            outcome: RequestOutcome::Completed,
        });
    }

    fn on_node_change(&mut self, index: usize) -> Result<(), SimError> {
        match &self.setup.changes[index].change {
            TopologyChange::Add { node } => self.topology.add_node(node)?,
            TopologyChange::Remove { node } => {
                let removed = self.topology.remove_node(*node)?;
                for id in removed {
                    if let Some(q) = self.queues.remove(&id) {
                        for slot in q.in_service.into_iter().chain(q.fifo) {
                            self.drop_request(slot);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn on_sample(&mut self) -> Result<(), SimError> {
        let scenario = self.scenario;
        let params = &scenario.params;
        let map = &params.map;
        let dt = self.setup.sample_interval.as_secs_f64();
        let first = self.now == SimTime::ZERO;
        let window = SimTime::from_secs_f64(params.staleness_s);
        let mut snapshot = Vec::with_capacity(self.travelers.len());

        for i in 0..self.travelers.len() {
            if !first {
                let (next, _) = step_traveler(&self.travelers[i], dt, map);
                self.travelers[i] = next;
            }
            let truth = self.travelers[i].position;
            let readings = emit_rssi(
                truth,
                &map.access_points,
                &params.path_loss,
                params.noise_sigma_db,
                map.radio_range_m,
                self.now,
                &mut self.noise[i],
            );
            let readings = fresh_observations(&readings, self.now, window);
            let Ok(serving) = serving_ap(&readings) else {
                continue;
            };
            let ap = map.access_points.iter().find(|a| a.id == serving).expect("reading from a known AP");
            if self.topology.contains(ap.attached_node) {
                self.origins[i] = ap.attached_node;
            }
            let t = &self.travelers[i];
            if let Some(poi) = t.dwelling_at() {
                if self.visit_mark[i] != Some(t.next_waypoint) {
                    self.visit_mark[i] = Some(t.next_waypoint);
                    let area = fog_area(&self.topology, self.origins[i]).unwrap_or(self.topology.root());
                    self.stores
                        .entry(area)
                        .or_default()
                        .record_visit(t.uuid, poi, self.now)
                        .expect("samples advance in time");
                }
            }
            let estimate = trilaterate(&readings, &map.access_points, &params.path_loss).unwrap_or(ap.position);
            let estimate = self.heatmap.clamp(map.clamp(estimate));
            self.heatmap.ingest(estimate)?;
            self.position_samples += 1;
            snapshot.push((self.travelers[i].uuid, estimate));
        }

        if let Some(eps) = self.setup.cluster_eps_m {
            let clusters = detect_clusters(&snapshot, eps, self.setup.cluster_min_size);
            self.clusters.push(ClusterSnapshot { at_s: self.now.as_secs_f64(), clusters });
        }

        let news = poll_flights(&scenario.flights, self.last_poll, self.now);
        for e in &news {
            self.flight_alerts += self.travelers.iter().filter(|t| t.flight_id == e.flight_id).count() as u64;
        }
        self.last_poll = self.now;

        let next = self.now + self.setup.sample_interval;
        if next < scenario.duration() {
            self.schedule(next, EventKind::Sample)?;
        }
        Ok(())
    }

    fn on_probe(&mut self) -> Result<(), SimError> {
        let (DispatchPolicy::Qos { candidates }, Some(interval)) = (&self.setup.policy, self.setup.probe_interval)
        else {
            return Ok(());
        };
        if let Some(origin) = self.last_origin {
            for &c in candidates {
                if !self.topology.contains(c) {
                    continue;
                }
                let wait = Self::queue_delay_ms(&self.queues, &self.inflight, self.now, c);
                let ms = analytic_response_ms(&self.topology, origin, c, self.scenario.params.demand, wait)?;
                self.predictor.observe(c, ms, self.now);
            }
        }
        let next = self.now + interval;
        if next < self.scenario.duration() {
            self.schedule(next, EventKind::Probe)?;
        }
        Ok(())
    }

    fn run(mut self) -> Result<RunOutput, SimError> {
        self.schedule(SimTime::ZERO, EventKind::Sample)?;
        if let (DispatchPolicy::Qos { .. }, Some(interval)) = (&self.setup.policy, self.setup.probe_interval) {
            self.schedule(interval, EventKind::Probe)?;
        }
        let changes = self.setup.changes.iter().enumerate().map(|(i, c)| (c.at, EventKind::NodeChange { index: i }));
        let installs =
            self.setup.reinstalls.iter().enumerate().map(|(i, r)| (r.at, EventKind::Reinstall { index: i }));
        let fixed: Vec<(SimTime, EventKind)> = changes.chain(installs).collect();
        for (at, kind) in fixed {
            let idx = self.events.len();
            self.events.push(kind);
            self.heap.push(Reverse((Key { at, seq: self.seq }, SimTime::ZERO, idx)));
            self.seq += 1;
        }
        if let Some(first) = self.scenario.requests.first() {
            self.schedule(first.at, EventKind::RequestArrival { request: 0 })?;
        }

        while let Some(Reverse((key, scheduled_at, idx))) = self.heap.pop() {
            debug_assert!(key.at >= self.now);
            self.now = key.at;
            self.last_event_at = key.at;
            let kind = self.events[idx];
            if self.setup.record_trace {
                self.trace.push(TraceEntry { at: key.at, seq: key.seq, scheduled_at, kind });
            }
            match kind {
                EventKind::RequestArrival { request } => self.on_request(request)?,
                EventKind::NodeArrival { request, node } => self.on_node_arrival(request, node)?,
                EventKind::ServiceStart { node } => self.on_service_start(node)?,
                EventKind::ServiceEnd { node, request } => self.on_service_end(node, request)?,
                EventKind::ResponseDelivered { request } => self.on_delivered(request),
                EventKind::NodeChange { index } => self.on_node_change(index)?,
                EventKind::Reinstall { index } => {
                    let i = self.setup.reinstalls[index].traveler;
                    if let Some(t) = self.travelers.get(i) {
                        self.travelers[i] = reinstall(t, &mut self.installs);
                        self.visit_mark[i] = None;
                    }
                }
                EventKind::Sample => self.on_sample()?,
                EventKind::Probe => self.on_probe()?,
            }
        }
        Ok(self.finish())
    }

    fn finish(mut self) -> RunOutput {
        self.rows.sort_by_key(|r| r.id);
        let mut responses: Vec<f64> = self.rows.iter().filter_map(|r| r.response_ms).collect();
        responses.sort_by(f64::total_cmp);
        let completions = responses.len() as u64;
        let count = self.rows.len() as u64;
        let rejections = count - completions;
        let dropped = self.rows.iter().filter(|r| r.outcome == RequestOutcome::Dropped).count() as u64;
        let violations = self.rows.iter().filter(|r| r.violated).count() as u64;
        let mut served_by = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.outcome == RequestOutcome::Completed) {
            *served_by.entry(r.target.expect("completed rows carry a target")).or_insert(0) += 1;
        }
        let duration = self.scenario.duration();
        let span = duration.max(self.last_event_at).0.max(1) as f64;
        let utilization = self.queues.iter().map(|(id, q)| (*id, q.busy_time as f64 / span)).collect();
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };

        let report = MetricsReport {
            config: self.setup.config.clone(),
            rate_per_s: self.scenario.params.request_rate_per_s,
            duration_s: self.scenario.params.duration_s,
            count,
            completions,
            rejections,
            dropped,
            mean_response_ms: if responses.is_empty() { 0.0 } else { responses.iter().sum::<f64>() / responses.len() as f64 },
            p50_response_ms: nearest_rank(&responses, 50.0),
            p95_response_ms: nearest_rank(&responses, 95.0),
            p99_response_ms: nearest_rank(&responses, 99.0),
            throughput_per_s: completions as f64 / duration.as_secs_f64(),
            sla_ms: self.setup.sla.max_response_ms,
            sla_violation_rate: ratio(violations, completions),
            rejection_rate: ratio(rejections, count),
            predicted_violations: self.predicted_violations,
            served_by,
            utilization,
            position_samples: self.position_samples,
            flight_alerts: self.flight_alerts,
        };
        let mut profiles = ProfileStore::new();
        for store in self.stores.values() {
            profiles.merge(store);
        }
        RunOutput {
            report,
            rows: self.rows,
            heatmap: self.heatmap,
            clusters: self.clusters,
            area_profiles: self.stores,
            profiles,
            trace: self.trace,
        }
    }
}

/// Runs one scenario against one topology. `seed` drives the radio noise;
/// the scenario already fixes the request stream and the crowd.
pub fn run(scenario: &Scenario, topology: &Topology, setup: &SimSetup, seed: u64) -> Result<RunOutput, SimError> {
    let (min, max) = scenario.params.map.bounds();
    let heatmap = HeatMap::covering(min, max, setup.heatmap_cell_m)?;
    let travelers = scenario.travelers.clone();
    let n = travelers.len();
    let default_origin = scenario
        .params
        .map
        .access_points
        .first()
        .map(|a| a.attached_node)
        .filter(|id| topology.contains(*id))
        .unwrap_or(topology.root());
    let engine = Engine {
        scenario,
        setup,
        topology: topology.clone(),
        predictor: QosPredictor::new(setup.alpha)?,
        now: SimTime::ZERO,
        seq: 0,
        heap: BinaryHeap::new(),
        events: Vec::new(),
        queues: BTreeMap::new(),
        inflight: Vec::with_capacity(scenario.requests.len()),
        rows: Vec::with_capacity(scenario.requests.len()),
        travelers,
        origins: vec![default_origin; n],
        noise: (0..n as u64).map(|i| stream(seed, "rssi", i)).collect(),
        installs: stream(seed, "reinstall", 0),
        stores: BTreeMap::new(),
        visit_mark: vec![None; n],
        last_origin: None,
        heatmap,
        clusters: Vec::new(),
        trace: Vec::new(),
        position_samples: 0,
        flight_alerts: 0,
        last_poll: SimTime::ZERO,
        predicted_violations: 0,
        last_event_at: SimTime::ZERO,
    };
    engine.run()
}

/// Share of completed requests served by one of `nodes`.
pub fn local_share(rows: &[RequestRow], nodes: &[NodeId]) -> f64 {
    let done: Vec<&RequestRow> = rows.iter().filter(|r| r.outcome == RequestOutcome::Completed).collect();
    if done.is_empty() {
        return 0.0;
    }
    let hits = done.iter().filter(|r| r.target.is_some_and(|t| nodes.contains(&t))).count();
    hits as f64 / done.len() as f64
}

impl From<Outcome> for RequestOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Rejected => RequestOutcome::Rejected,
            Outcome::Local | Outcome::Delegated => RequestOutcome::Completed,
        }
    }
}
