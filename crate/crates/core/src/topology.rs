//! Layered agent hierarchy: one cloud agent at layer 0, agents below it and
//! microagents as leaves. Siblings that can manage other agents form a
//! cluster with an elected leader and, when possible, a backup.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    CloudAgent,
    Agent,
    /// Constrained device; never manages other agents.
    Microagent,
}

/// Deployment role of a node. Only used by experiment presets to pick
/// fixed targets and dispatch candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Cloud,
    Fog,
    Access,
    Edge,
    #[default]
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentNode {
    pub id: NodeId,
    pub kind: AgentKind,
    pub role: NodeRole,
    pub layer: u32,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Service-units per second.
    pub service_rate: f64,
    pub capacity: u32,
    pub free_capacity: u32,
    /// One-way milliseconds to the parent (zero for the cloud agent).
    pub link_latency_up_ms: f64,
    pub is_leader: bool,
    pub backup_of: Option<NodeId>,
}

/// Declarative node entry, as found in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: AgentKind,
    #[serde(default)]
    pub role: NodeRole,
    #[serde(default)]
    pub parent: Option<NodeId>,
    pub service_rate: f64,
    pub capacity: u32,
    #[serde(default)]
    pub link_latency_up_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopologySpec {
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("topology must declare exactly one cloud agent, found {0}")]
    MissingCloudAgent(usize),
    #[error("cycle detected through node {0}")]
    CycleDetected(NodeId),
    #[error("microagent {0} cannot have children")]
    MicroagentWithChildren(NodeId),
    #[error("node {0} has an invalid capacity or service rate")]
    InvalidCapacity(NodeId),
    #[error("node {0} has an invalid link latency")]
    InvalidLatency(NodeId),
    #[error("node {0} references unknown parent {1}")]
    UnknownParent(NodeId, NodeId),
    #[error("parent {0} is a microagent")]
    ParentIsMicroagent(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("node {0} has no parent but is not the cloud agent")]
    OrphanNode(NodeId),
    #[error("the cloud agent cannot have a parent")]
    CloudAgentHasParent,
    #[error("the cloud agent cannot be removed")]
    CannotRemoveRoot,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("cannot elect a leader for an empty cluster")]
    EmptyCluster,
    #[error("microagent {0} cannot lead a cluster")]
    MicroagentLeader(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    nodes: BTreeMap<NodeId, AgentNode>,
    root: NodeId,
    /// Leader id to the sorted member list (leader included).
    clusters: BTreeMap<NodeId, Vec<NodeId>>,
    /// Outstanding placements: request id to (target, demand).
    #[serde(default)]
    pub(crate) reservations: BTreeMap<u64, (NodeId, u32)>,
}

/// Picks the leader (highest service rate, lowest id on ties) and the
/// runner-up as backup. Input order is irrelevant.
pub fn elect_leader(members: &[AgentNode]) -> Result<(NodeId, Option<NodeId>), TopologyError> {
    if let Some(m) = members.iter().find(|m| m.kind == AgentKind::Microagent) {
        return Err(TopologyError::MicroagentLeader(m.id));
    }
    let ranked = rank(members.iter().map(|m| (m.id, m.service_rate)));
    match ranked.as_slice() {
        [] => Err(TopologyError::EmptyCluster),
        [leader] => Ok((*leader, None)),
        [leader, backup, ..] => Ok((*leader, Some(*backup))),
    }
}

fn rank(entries: impl Iterator<Item = (NodeId, f64)>) -> Vec<NodeId> {
    let mut v: Vec<(NodeId, f64)> = entries.collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(id, _)| id).collect()
}

fn validate_spec(spec: &NodeSpec) -> Result<(), TopologyError> {
    if spec.capacity == 0 || !(spec.service_rate.is_finite() && spec.service_rate > 0.0) {
        return Err(TopologyError::InvalidCapacity(spec.id));
    }
    let latency_ok = spec.link_latency_up_ms.is_finite()
        && if spec.kind == AgentKind::CloudAgent {
            spec.link_latency_up_ms >= 0.0
        } else {
            spec.link_latency_up_ms > 0.0
        };
    if !latency_ok {
        return Err(TopologyError::InvalidLatency(spec.id));
    }
    Ok(())
}

fn node_from_spec(spec: &NodeSpec, layer: u32) -> AgentNode {
    AgentNode {
        id: spec.id,
        kind: spec.kind,
        role: spec.role,
        layer,
        parent: spec.parent,
        children: Vec::new(),
        service_rate: spec.service_rate,
        capacity: spec.capacity,
        free_capacity: spec.capacity,
        link_latency_up_ms: if spec.kind == AgentKind::CloudAgent { 0.0 } else { spec.link_latency_up_ms },
        is_leader: false,
        backup_of: None,
    }
}

impl Topology {
    pub fn build(spec: &TopologySpec) -> Result<Self, TopologyError> {
        let clouds: Vec<&NodeSpec> = spec.nodes.iter().filter(|n| n.kind == AgentKind::CloudAgent).collect();
        if clouds.len() != 1 {
            return Err(TopologyError::MissingCloudAgent(clouds.len()));
        }
        let root = clouds[0].id;
        if clouds[0].parent.is_some() {
            return Err(TopologyError::CloudAgentHasParent);
        }

        let mut by_id: BTreeMap<NodeId, &NodeSpec> = BTreeMap::new();
        for n in &spec.nodes {
            validate_spec(n)?;
            if by_id.insert(n.id, n).is_some() {
                return Err(TopologyError::DuplicateNode(n.id));
            }
        }
        for n in &spec.nodes {
            match n.parent {
                None if n.kind != AgentKind::CloudAgent => return Err(TopologyError::OrphanNode(n.id)),
                Some(p) => {
                    let parent = by_id.get(&p).ok_or(TopologyError::UnknownParent(n.id, p))?;
                    if parent.kind == AgentKind::Microagent {
                        return Err(TopologyError::MicroagentWithChildren(p));
                    }
                }
                None => {}
            }
        }

        // Walk every chain up to the root; anything that revisits a node is a cycle.
        for n in &spec.nodes {
            let mut seen = BTreeSet::new();
            let mut cur = n;
            while let Some(p) = cur.parent {
                if !seen.insert(cur.id) {
                    return Err(TopologyError::CycleDetected(cur.id));
                }
                cur = by_id[&p];
            }
        }

        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for n in &spec.nodes {
            if let Some(p) = n.parent {
                children.entry(p).or_default().push(n.id);
            }
        }

        let mut nodes = BTreeMap::new();
        let mut stack = vec![(root, 0u32)];
        while let Some((id, layer)) = stack.pop() {
            let mut node = node_from_spec(by_id[&id], layer);
            let mut kids = children.remove(&id).unwrap_or_default();
            kids.sort();
            for &k in &kids {
                stack.push((k, layer + 1));
            }
            node.children = kids;
            nodes.insert(id, node);
        }

        let mut topo = Topology { nodes, root, clusters: BTreeMap::new(), reservations: BTreeMap::new() };
        topo.elect_all()?;
        Ok(topo)
    }

    fn elect_all(&mut self) -> Result<(), TopologyError> {
        self.clusters.clear();
        for n in self.nodes.values_mut() {
            n.is_leader = false;
            n.backup_of = None;
        }
        let root = self.root;
        self.set_cluster(vec![root], root, None);
        let parents: Vec<NodeId> = self.nodes.keys().copied().collect();
        for p in parents {
            let members = self.manageable_children(p);
            if members.is_empty() {
                continue;
            }
            let snapshot: Vec<AgentNode> = members.iter().map(|m| self.nodes[m].clone()).collect();
            let (leader, backup) = elect_leader(&snapshot)?;
            self.set_cluster(members, leader, backup);
        }
        Ok(())
    }

    fn set_cluster(&mut self, mut members: Vec<NodeId>, leader: NodeId, backup: Option<NodeId>) {
        members.sort();
        for m in &members {
            let n = self.nodes.get_mut(m).expect("cluster member exists");
            n.is_leader = *m == leader;
            n.backup_of = if Some(*m) == backup { Some(leader) } else { None };
        }
        self.clusters.insert(leader, members);
    }

    /// Children of `parent` that are not microagents.
    fn manageable_children(&self, parent: NodeId) -> Vec<NodeId> {
        self.nodes[&parent]
            .children
            .iter()
            .copied()
            .filter(|c| self.nodes[c].kind != AgentKind::Microagent)
            .collect()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn get(&self, id: NodeId) -> Option<&AgentNode> {
        self.nodes.get(&id)
    }

    pub fn node(&self, id: NodeId) -> Result<&AgentNode, TopologyError> {
        self.nodes.get(&id).ok_or(TopologyError::UnknownNode(id))
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Result<&mut AgentNode, TopologyError> {
        self.nodes.get_mut(&id).ok_or(TopologyError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &AgentNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clusters(&self) -> &BTreeMap<NodeId, Vec<NodeId>> {
        &self.clusters
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> Vec<NodeId> {
        self.nodes.values().filter(|n| n.role == role).map(|n| n.id).collect()
    }

    /// Leader of the cluster `id` belongs to; `None` for microagents.
    pub fn cluster_leader(&self, id: NodeId) -> Option<NodeId> {
        self.clusters
            .iter()
            .find(|(_, members)| members.binary_search(&id).is_ok())
            .map(|(leader, _)| *leader)
    }

    pub fn backup_of(&self, leader: NodeId) -> Option<NodeId> {
        self.clusters
            .get(&leader)?
            .iter()
            .copied()
            .find(|m| self.nodes[m].backup_of == Some(leader))
    }

    /// Nodes from `id` up to the root, inclusive at both ends.
    pub fn ancestry(&self, id: NodeId) -> Result<Vec<NodeId>, TopologyError> {
        let mut chain = vec![id];
        let mut cur = self.node(id)?;
        while let Some(p) = cur.parent {
            chain.push(p);
            cur = &self.nodes[&p];
        }
        Ok(chain)
    }

    /// Sum of link latencies along the unique tree path between `a` and `b`.
    pub fn latency_ms(&self, a: NodeId, b: NodeId) -> Result<f64, TopologyError> {
        let up_a = self.ancestry(a)?;
        let up_b = self.ancestry(b)?;
        let set_b: BTreeSet<NodeId> = up_b.iter().copied().collect();
        let meet = *up_a.iter().find(|n| set_b.contains(n)).expect("tree has a common root");
        let climb = |chain: &[NodeId]| -> f64 {
            chain.iter().take_while(|&&n| n != meet).map(|n| self.nodes[n].link_latency_up_ms).sum()
        };
        Ok(climb(&up_a) + climb(&up_b))
    }

    pub fn add_node(&mut self, spec: &NodeSpec) -> Result<(), TopologyError> {
        validate_spec(spec)?;
        if self.nodes.contains_key(&spec.id) {
            return Err(TopologyError::DuplicateNode(spec.id));
        }
        if spec.kind == AgentKind::CloudAgent {
            return Err(TopologyError::MissingCloudAgent(2));
        }
        let parent_id = spec.parent.ok_or(TopologyError::OrphanNode(spec.id))?;
        let parent = self
            .nodes
            .get(&parent_id)
            .ok_or(TopologyError::UnknownParent(spec.id, parent_id))?;
        if parent.kind == AgentKind::Microagent {
            return Err(TopologyError::ParentIsMicroagent(parent_id));
        }
        let node = node_from_spec(spec, parent.layer + 1);
        let kids = &mut self.nodes.get_mut(&parent_id).expect("checked").children;
        let pos = kids.binary_search(&spec.id).unwrap_err();
        kids.insert(pos, spec.id);
        self.nodes.insert(spec.id, node);

        if spec.kind == AgentKind::Microagent {
            return Ok(());
        }
        let siblings = self.manageable_children(parent_id);
        let current_leader = siblings.iter().copied().find(|s| self.nodes[s].is_leader);
        match current_leader {
            // Leaders are sticky; only fill a missing backup.
            Some(leader) => {
                let mut members = self.clusters.remove(&leader).unwrap_or_default();
                members.push(spec.id);
                let backup = match self.backup_of(leader) {
                    Some(b) => Some(b),
                    None => self.runner_up(&members, leader),
                };
                self.set_cluster(members, leader, backup);
            }
            None => self.set_cluster(vec![spec.id], spec.id, None),
        }
        Ok(())
    }

    fn runner_up(&self, members: &[NodeId], leader: NodeId) -> Option<NodeId> {
        rank(
            members
                .iter()
                .filter(|&&m| m != leader)
                .map(|m| (*m, self.nodes[m].service_rate)),
        )
        .first()
        .copied()
    }

    /// Removes `id` together with its subtree. Returns the removed ids.
    pub fn remove_node(&mut self, id: NodeId) -> Result<Vec<NodeId>, TopologyError> {
        if id == self.root {
            return Err(TopologyError::CannotRemoveRoot);
        }
        let node = self.node(id)?.clone();
        let parent_id = node.parent.expect("non-root has a parent");

        let mut removed = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let gone = self.nodes.remove(&n).expect("subtree node exists");
            stack.extend(gone.children.iter().copied());
            self.clusters.remove(&n);
            removed.push(n);
        }
        removed.sort();
        self.reservations.retain(|_, (target, _)| removed.binary_search(target).is_err());
        self.nodes.get_mut(&parent_id).expect("parent exists").children.retain(|c| *c != id);

        if node.kind == AgentKind::Microagent {
            return Ok(removed);
        }
        let members = self.manageable_children(parent_id);
        if members.is_empty() {
            return Ok(removed);
        }
        let old_key = if node.is_leader {
            node.id
        } else {
            members.iter().copied().find(|m| self.nodes[m].is_leader).expect("cluster keeps its leader")
        };
        self.clusters.remove(&old_key);
        let leader = if node.is_leader {
            members
                .iter()
                .copied()
                .find(|m| self.nodes[m].backup_of == Some(node.id))
                .unwrap_or_else(|| rank(members.iter().map(|m| (*m, self.nodes[m].service_rate)))[0])
        } else {
            old_key
        };
        let backup = members
            .iter()
            .copied()
            .find(|m| *m != leader && self.nodes[m].backup_of == Some(leader))
            .or_else(|| self.runner_up(&members, leader));
        self.set_cluster(members, leader, backup);
        Ok(removed)
    }

    /// Structural check used by tests and after mutations.
    pub fn validate(&self) -> Result<(), TopologyError> {
        let clouds = self.nodes.values().filter(|n| n.kind == AgentKind::CloudAgent).count();
        if clouds != 1 {
            return Err(TopologyError::MissingCloudAgent(clouds));
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                return Err(TopologyError::CycleDetected(id));
            }
            let n = self.node(id)?;
            if n.kind == AgentKind::Microagent && !n.children.is_empty() {
                return Err(TopologyError::MicroagentWithChildren(id));
            }
            if n.free_capacity > n.capacity {
                return Err(TopologyError::InvalidCapacity(id));
            }
            for c in &n.children {
                let child = self.node(*c)?;
                if child.parent != Some(id) || child.layer != n.layer + 1 {
                    return Err(TopologyError::CycleDetected(*c));
                }
                stack.push(*c);
            }
        }
        if seen.len() != self.nodes.len() {
            let stray = self.nodes.keys().find(|k| !seen.contains(k)).copied().expect("stray node");
            return Err(TopologyError::OrphanNode(stray));
        }
        for (leader, members) in &self.clusters {
            let leaders = members.iter().filter(|m| self.nodes[m].is_leader).count();
            let backups = members.iter().filter(|m| self.nodes[m].backup_of.is_some()).count();
            if leaders != 1 || !self.nodes[leader].is_leader || backups > 1 {
                return Err(TopologyError::EmptyCluster);
            }
            if let Some(m) = members.iter().find(|m| self.nodes[m].kind == AgentKind::Microagent) {
                return Err(TopologyError::MicroagentLeader(*m));
            }
        }
        Ok(())
    }
}
