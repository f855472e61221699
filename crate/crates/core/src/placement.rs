//! Recursive service placement over the agent hierarchy.
//!
//! A request is first tried on the node that received it. If the node is
//! short on capacity, the node searches the agents it manages (children in
//! ascending id order, depth first). Failing that, the request moves to the
//! cluster leader and then one layer up, where the same search repeats over
//! everything not yet visited. Reaching the cloud agent without a fit
//! rejects the request and leaves every capacity untouched.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simnet::SimTime;
use crate::topology::{AgentKind, NodeId, Topology, TopologyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub id: u64,
    pub service_class: String,
    /// Service-units; must be positive.
    pub demand: u32,
    pub origin: NodeId,
    pub created_at: SimTime,
    pub deadline_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Local,
    Delegated,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementDecision {
    pub request_id: u64,
    pub target: NodeId,
    /// Nodes the request travelled through, origin first.
    pub path: Vec<NodeId>,
    pub hops_up: u32,
    pub outcome: Outcome,
    pub demand: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlacementError {
    #[error("request {request_id} rejected: no node can admit demand {demand}")]
    RejectedNoCapacity { request_id: u64, demand: u32, visited: usize },
    #[error("request demand must be positive")]
    ZeroDemand,
    #[error("unknown target {0}")]
    UnknownTarget(NodeId),
    #[error("request {0} was already released")]
    DoubleRelease(u64),
    #[error("target {target} cannot admit demand {demand}")]
    InsufficientCapacity { target: NodeId, demand: u32 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

pub fn try_local(topology: &Topology, node: NodeId, request: &ServiceRequest) -> Result<bool, TopologyError> {
    Ok(topology.node(node)?.free_capacity >= request.demand)
}

/// Depth-first, children ascending. Returns the descent from `start` to the
/// first node that admits `demand`, marking every inspected node visited.
fn search_subtree(
    topology: &Topology,
    start: NodeId,
    demand: u32,
    visited: &mut BTreeSet<NodeId>,
) -> Option<Vec<NodeId>> {
    if !visited.insert(start) {
        return None;
    }
    let node = topology.get(start)?;
    if node.free_capacity >= demand {
        return Some(vec![start]);
    }
    for &child in &node.children {
        if visited.contains(&child) {
            continue;
        }
        if let Some(mut rest) = search_subtree(topology, child, demand, visited) {
            rest.insert(0, start);
            return Some(rest);
        }
    }
    None
}

/// Where a full node escalates to: its parent when the parent leads its
/// cluster, otherwise straight to the parent's cluster leader.
fn escalation_target(topology: &Topology, node: NodeId, visited: &BTreeSet<NodeId>) -> Option<NodeId> {
    let parent = topology.get(node)?.parent?;
    if topology.get(parent)?.is_leader || visited.contains(&parent) {
        return Some(parent);
    }
    match topology.cluster_leader(parent) {
        Some(leader) if !visited.contains(&leader) => Some(leader),
        _ => Some(parent),
    }
}

pub fn place(topology: &mut Topology, request: &ServiceRequest) -> Result<PlacementDecision, PlacementError> {
    if request.demand == 0 {
        return Err(PlacementError::ZeroDemand);
    }
    topology.node(request.origin)?;

    let mut visited = BTreeSet::new();
    let mut path = vec![request.origin];
    let mut hops_up = 0;
    let mut current = request.origin;

    loop {
        if let Some(descent) = search_subtree(topology, current, request.demand, &mut visited) {
            path.extend(descent.into_iter().skip(1));
            return commit(topology, request, path, hops_up);
        }

        let node = topology.node(current)?;
        if node.kind != AgentKind::Microagent {
            if node.is_leader {
                // A leader also manages its cluster peers.
                if let Some(members) = topology.clusters().get(&current) {
                    for &m in members {
                        if let Some(descent) = search_subtree(topology, m, request.demand, &mut visited) {
                            path.extend(descent);
                            return commit(topology, request, path, hops_up);
                        }
                    }
                }
            } else if let Some(leader) = topology.cluster_leader(current) {
                if !visited.contains(&leader) {
                    path.push(leader);
                    current = leader;
                    continue;
                }
            }
        }

        match escalation_target(topology, current, &visited) {
            Some(next) => {
                hops_up += 1;
                path.push(next);
                current = next;
            }
            None => {
                return Err(PlacementError::RejectedNoCapacity {
                    request_id: request.id,
                    demand: request.demand,
                    visited: visited.len(),
                })
            }
        }
    }
}

fn commit(
    topology: &mut Topology,
    request: &ServiceRequest,
    path: Vec<NodeId>,
    hops_up: u32,
) -> Result<PlacementDecision, PlacementError> {
    let target = *path.last().expect("path is never empty");
    let node = topology.node_mut(target)?;
    debug_assert!(node.free_capacity >= request.demand);
    node.free_capacity -= request.demand;
    topology.reservations.insert(request.id, (target, request.demand));
    Ok(PlacementDecision {
        request_id: request.id,
        target,
        hops_up,
        outcome: if target == request.origin { Outcome::Local } else { Outcome::Delegated },
        path,
        demand: request.demand,
    })
}

/// Reserves capacity on a node chosen by an external policy. The recorded
/// path is the tree route from the origin.
pub fn reserve_on(
    topology: &mut Topology,
    request: &ServiceRequest,
    target: NodeId,
) -> Result<PlacementDecision, PlacementError> {
    if request.demand == 0 {
        return Err(PlacementError::ZeroDemand);
    }
    topology.node(request.origin)?;
    let node = topology.get(target).ok_or(PlacementError::UnknownTarget(target))?;
    if node.free_capacity < request.demand {
        return Err(PlacementError::InsufficientCapacity { target, demand: request.demand });
    }
    let (path, hops_up) = tree_route(topology, request.origin, target)?;
    commit(topology, request, path, hops_up)
}

/// Unique tree route between two nodes and the number of upward hops on it.
pub fn tree_route(topology: &Topology, from: NodeId, to: NodeId) -> Result<(Vec<NodeId>, u32), TopologyError> {
    let up = topology.ancestry(from)?;
    let down = topology.ancestry(to)?;
    let meet_idx = up.iter().position(|n| down.contains(n)).expect("common root");
    let meet = up[meet_idx];
    let mut path: Vec<NodeId> = up[..=meet_idx].to_vec();
    let down_idx = down.iter().position(|n| *n == meet).expect("meet on both chains");
    path.extend(down[..down_idx].iter().rev());
    Ok((path, meet_idx as u32))
}

pub fn release(topology: &mut Topology, decision: &PlacementDecision) -> Result<(), PlacementError> {
    if !topology.contains(decision.target) {
        return Err(PlacementError::UnknownTarget(decision.target));
    }
    let outstanding = topology.reservations.remove(&decision.request_id);
    let node = topology.node_mut(decision.target)?;
    match outstanding {
        Some((target, demand)) if target == decision.target => {
            node.free_capacity = (node.free_capacity + demand).min(node.capacity);
            Ok(())
        }
        Some(other) => {
            topology.reservations.insert(decision.request_id, other);
            Err(PlacementError::UnknownTarget(decision.target))
        }
        None => {
            node.free_capacity = node.free_capacity.min(node.capacity);
            Err(PlacementError::DoubleRelease(decision.request_id))
        }
    }
}
