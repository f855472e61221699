//! Response-time contracts, the per-node response predictor and the
//! dispatch policy built on it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::placement::ServiceRequest;
use crate::simnet::SimTime;
use crate::topology::{NodeId, Topology, TopologyError};

pub const DEFAULT_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sla {
    pub service_class: String,
    pub max_response_ms: f64,
}

impl Sla {
    pub fn new(service_class: impl Into<String>, max_response_ms: f64) -> Result<Self, QosError> {
        if !(max_response_ms.is_finite() && max_response_ms > 0.0) {
            return Err(QosError::InvalidSla(max_response_ms));
        }
        Ok(Sla { service_class: service_class.into(), max_response_ms })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub request_id: u64,
    pub service_class: String,
    pub node: NodeId,
    pub observed_ms: f64,
    pub limit_ms: f64,
    pub at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QosError {
    #[error("no dispatch candidates")]
    NoCandidates,
    #[error("SLA limit must be positive, got {0}")]
    InvalidSla(f64),
    #[error("smoothing factor must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Snapshot of how long new work would wait at a node before starting.
pub trait QueueProbe {
    fn queue_delay_ms(&self, node: NodeId) -> f64;
}

/// Every queue empty.
pub struct IdleQueues;

impl QueueProbe for IdleQueues {
    fn queue_delay_ms(&self, _node: NodeId) -> f64 {
        0.0
    }
}

impl<F: Fn(NodeId) -> f64> QueueProbe for F {
    fn queue_delay_ms(&self, node: NodeId) -> f64 {
        self(node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeEstimate {
    pub estimate_ms: f64,
    pub sample_count: u64,
    pub last_update: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosPredictor {
    alpha: f64,
    estimates: BTreeMap<NodeId, NodeEstimate>,
    violations: Vec<ViolationRecord>,
}

/// Outcome of a dispatch decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub node: NodeId,
    pub predicted_ms: f64,
    /// Every candidate was predicted to miss the SLA.
    pub predicted_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeQos {
    pub node: NodeId,
    pub estimate_ms: Option<f64>,
    pub sample_count: u64,
    pub free_capacity: u32,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosReport {
    pub service_class: String,
    pub nodes: Vec<NodeQos>,
    pub violations: Vec<ViolationRecord>,
}

/// Round trip plus service time plus the current wait at the node.
pub fn analytic_response_ms(
    topology: &Topology,
    origin: NodeId,
    node: NodeId,
    demand: u32,
    queue_delay_ms: f64,
) -> Result<f64, TopologyError> {
    let one_way = topology.latency_ms(origin, node)?;
    let rate = topology.node(node)?.service_rate;
    Ok(2.0 * one_way + f64::from(demand) / rate * 1000.0 + queue_delay_ms)
}

impl Default for QosPredictor {
    fn default() -> Self {
        QosPredictor { alpha: DEFAULT_ALPHA, estimates: BTreeMap::new(), violations: Vec::new() }
    }
}

impl QosPredictor {
    pub fn new(alpha: f64) -> Result<Self, QosError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(QosError::InvalidAlpha(alpha));
        }
        Ok(QosPredictor { alpha, ..Default::default() })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn estimate(&self, node: NodeId) -> Option<&NodeEstimate> {
        self.estimates.get(&node)
    }

    pub fn violations(&self) -> &[ViolationRecord] {
        &self.violations
    }

    /// Smoothed estimate once the node has history, analytic model before.
    pub fn predict(
        &self,
        topology: &Topology,
        node: NodeId,
        request: &ServiceRequest,
        queues: &dyn QueueProbe,
    ) -> Result<f64, QosError> {
        topology.node(node)?;
        match self.estimates.get(&node) {
            Some(e) if e.sample_count > 0 => Ok(e.estimate_ms),
            _ => Ok(analytic_response_ms(
                topology,
                request.origin,
                node,
                request.demand,
                queues.queue_delay_ms(node),
            )?),
        }
    }

    /// Folds a value into the node's moving average. The first sample
    /// replaces the estimate outright.
    pub fn observe(&mut self, node: NodeId, value_ms: f64, at: SimTime) {
        let alpha = self.alpha;
        self.estimates
            .entry(node)
            .and_modify(|e| {
                e.estimate_ms = alpha * value_ms + (1.0 - alpha) * e.estimate_ms;
                e.sample_count += 1;
                e.last_update = at;
            })
            .or_insert(NodeEstimate { estimate_ms: value_ms, sample_count: 1, last_update: at });
    }

    pub fn record(
        &mut self,
        request_id: u64,
        node: NodeId,
        observed_ms: f64,
        sla: &Sla,
        at: SimTime,
    ) -> Option<ViolationRecord> {
        debug_assert!(observed_ms >= 0.0);
        self.observe(node, observed_ms, at);
        if observed_ms <= sla.max_response_ms {
            return None;
        }
        let v = ViolationRecord {
            request_id,
            service_class: sla.service_class.clone(),
            node,
            observed_ms,
            limit_ms: sla.max_response_ms,
            at,
        };
        self.violations.push(v.clone());
        Some(v)
    }

    /// Lowest predicted response wins; ties go to the lowest id. Never
    /// refuses, only flags when even the best candidate misses the SLA.
    pub fn dispatch(
        &self,
        topology: &Topology,
        candidates: &[NodeId],
        request: &ServiceRequest,
        sla: &Sla,
        queues: &dyn QueueProbe,
    ) -> Result<Dispatch, QosError> {
        let mut best: Option<(NodeId, f64)> = None;
        for &c in candidates {
            let p = self.predict(topology, c, request, queues)?;
            best = match best {
                Some((id, bp)) if bp < p || (bp == p && id < c) => Some((id, bp)),
                _ => Some((c, p)),
            };
        }
        let (node, predicted_ms) = best.ok_or(QosError::NoCandidates)?;
        Ok(Dispatch { node, predicted_ms, predicted_violation: predicted_ms > sla.max_response_ms })
    }

    pub fn qos_report(&self, topology: &Topology, service_class: &str) -> QosReport {
        QosReport {
            service_class: service_class.to_string(),
            nodes: topology
                .nodes()
                .map(|n| {
                    let e = self.estimates.get(&n.id);
                    NodeQos {
                        node: n.id,
                        estimate_ms: e.map(|e| e.estimate_ms),
                        sample_count: e.map_or(0, |e| e.sample_count),
                        free_capacity: n.free_capacity,
                        capacity: n.capacity,
                    }
                })
                .collect(),
            violations: self.violations.iter().filter(|v| v.service_class == service_class).cloned().collect(),
        }
    }
}
