//! Fixture generators and brute-force reference implementations shared by
//! the integration test targets.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use fogport::positioning::Position;
use fogport::recommender::{normalize_rating, Poi, PoiId, RecommenderConfig, UserProfile, Visit};
use fogport::rng::{stream, SimRng};
use fogport::simnet::SimTime;
use fogport::topology::{AgentKind, NodeId, NodeRole, NodeSpec, Topology, TopologySpec};
use rand::Rng;
use uuid::Uuid;

pub fn rng(seed: u64, label: &str) -> SimRng {
    stream(seed, label, 0)
}

pub fn uuid_from(rng: &mut SimRng) -> Uuid {
    uuid::Builder::from_random_bytes(rng.random()).into_uuid()
}

/// Random valid tree: a cloud root, then each node hangs off a uniformly
/// chosen earlier non-microagent node.
pub fn random_topology_spec(rng: &mut SimRng, max_nodes: usize) -> TopologySpec {
    let n = rng.random_range(1..=max_nodes);
    let mut nodes = vec![NodeSpec {
        id: NodeId(0),
        kind: AgentKind::CloudAgent,
        role: NodeRole::Cloud,
        parent: None,
        service_rate: rng.random_range(1.0..100.0),
        capacity: rng.random_range(1..=8),
        link_latency_up_ms: 0.0,
    }];
    let mut managers = vec![0u64];
    for i in 1..n as u64 {
        let parent = managers[rng.random_range(0..managers.len())];
        let kind = if rng.random_bool(0.4) { AgentKind::Microagent } else { AgentKind::Agent };
        if kind == AgentKind::Agent {
            managers.push(i);
        }
        nodes.push(NodeSpec {
            id: NodeId(i),
            kind,
            role: NodeRole::Generic,
            parent: Some(NodeId(parent)),
            service_rate: rng.random_range(1.0..100.0),
            capacity: rng.random_range(1..=8),
            link_latency_up_ms: rng.random_range(0.1..5.0),
        });
    }
    TopologySpec { nodes }
}

/// Whether any node in the system has room for `demand`.
pub fn any_admits(topology: &Topology, demand: u32) -> bool {
    topology.nodes().any(|n| n.free_capacity >= demand)
}

pub fn capacities(topology: &Topology) -> BTreeMap<NodeId, (u32, u32)> {
    topology.nodes().map(|n| (n.id, (n.free_capacity, n.capacity))).collect()
}

/// Connected components of the `eps`-neighbourhood graph by breadth-first
/// search, each sorted, the list sorted lexicographically.
pub fn closure_clusters(points: &[(Uuid, Position)], eps: f64, min_size: usize) -> Vec<Vec<Uuid>> {
    let n = points.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(points[i].0);
            for j in 0..n {
                if !seen[j] && points[i].1.distance(&points[j].1) <= eps {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if members.len() >= min_size.max(1) {
            members.sort();
            out.push(members);
        }
    }
    out.sort();
    out
}

/// Points on a half-metre lattice so that distances equal to `eps` occur.
pub fn lattice_points(rng: &mut SimRng, n: usize, side: u32) -> Vec<(Uuid, Position)> {
    (0..n)
        .map(|_| {
            let x = f64::from(rng.random_range(0..=side)) * 0.5;
            let y = f64::from(rng.random_range(0..=side)) * 0.5;
            (uuid_from(rng), Position::new(x, y))
        })
        .collect()
}

pub struct RecFixture {
    pub users: Vec<UserProfile>,
    pub pois: Vec<Poi>,
    pub now: SimTime,
    pub k: usize,
}

const TOPICS: [&str; 6] = ["coffee", "food", "books", "fashion", "tech", "kids"];
const CATEGORIES: [&str; 4] = ["cafe", "shop", "restaurant", "service"];

/// Random users and POIs; `cold` strips the first user of topics, visits
/// and peers' ratings so the favorites fallback is exercised.
pub fn rec_fixture(rng: &mut SimRng, cold: bool) -> RecFixture {
    let n_pois = rng.random_range(1..=20u32);
    let n_users = rng.random_range(1..=10usize);
    let hour = 3600.0;
    let now = SimTime::from_secs_f64(rng.random_range(0.0..96.0) * hour);
    let users: Vec<UserProfile> = (0..n_users)
        .map(|_| {
            let uuid = uuid_from(rng);
            let selected_topics: BTreeSet<String> =
                TOPICS.iter().filter(|_| rng.random_bool(0.3)).map(|t| t.to_string()).collect();
            let mut stamps: Vec<u64> = (0..rng.random_range(0..6)).map(|_| rng.random_range(0..=now.0)).collect();
            stamps.sort();
            let visits = stamps
                .into_iter()
                .map(|at| Visit { poi_id: PoiId(rng.random_range(1..=n_pois)), at: SimTime(at) })
                .collect();
            let mut ratings = BTreeMap::new();
            for p in 1..=n_pois {
                if rng.random_bool(0.3) {
                    ratings.insert(PoiId(p), rng.random_range(1..=5u8));
                }
            }
            UserProfile { uuid, selected_topics, visits, ratings, flight_id: None }
        })
        .collect();
    let pois = (1..=n_pois)
        .map(|id| {
            let mut ratings = Vec::new();
            for u in &users {
                if rng.random_bool(0.4) {
                    ratings.push((u.uuid, rng.random_range(1..=5u8)));
                }
            }
            Poi {
                id: PoiId(id),
                name: format!("poi{id}"),
                category: CATEGORIES[rng.random_range(0..CATEGORIES.len())].to_string(),
                topics: TOPICS.iter().filter(|_| rng.random_bool(0.3)).map(|t| t.to_string()).collect(),
                position: Position::new(rng.random_range(0.0..100.0), rng.random_range(0.0..50.0)),
                ratings,
            }
        })
        .collect();
    let mut fx = RecFixture { users, pois, now, k: rng.random_range(1..=25) };
    if cold {
        let u = &mut fx.users[0];
        u.selected_topics.clear();
        u.visits.clear();
        u.ratings.clear();
    }
    fx
}

fn cosine(a: &UserProfile, b: &UserProfile) -> f64 {
    let keys: BTreeSet<PoiId> = a.ratings.keys().chain(b.ratings.keys()).copied().collect();
    let va: Vec<f64> = keys.iter().map(|k| a.ratings.get(k).map_or(0.0, |r| f64::from(*r))).collect();
    let vb: Vec<f64> = keys.iter().map(|k| b.ratings.get(k).map_or(0.0, |r| f64::from(*r))).collect();
    let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// Straight-line restatement of the ranking rules, one POI at a time.
/// Returns `(poi, score)` in ranked order.
pub fn brute_force_recommend(
    user: &UserProfile,
    users: &[UserProfile],
    pois: &[Poi],
    now: SimTime,
    k: usize,
    cfg: &RecommenderConfig,
) -> Vec<(PoiId, f64)> {
    let mut rows = Vec::new();
    for poi in pois {
        let recent_visit = user
            .visits
            .iter()
            .any(|v| v.poi_id == poi.id && v.at <= now && now.0 - v.at.0 <= cfg.tau.0);
        if recent_visit {
            continue;
        }
        let mut hits = 0;
        for t in &user.selected_topics {
            if poi.topics.contains(t) {
                hits += 1;
            }
        }
        let topic = f64::from(hits) / (user.selected_topics.len().max(1) as f64);

        let mut num = 0.0;
        let mut den = 0.0;
        for other in users {
            if other.uuid == user.uuid {
                continue;
            }
            if let Some(r) = other.ratings.get(&poi.id) {
                let s = cosine(user, other);
                num += s * normalize_rating(*r);
                den += s;
            }
        }
        let collab = if den > 0.0 { num / den } else { 0.0 };

        let mut latest: Option<SimTime> = None;
        for v in &user.visits {
            let cat = pois.iter().find(|p| p.id == v.poi_id).map(|p| &p.category);
            if cat == Some(&poi.category) && latest.is_none_or(|l| v.at > l) {
                latest = Some(v.at);
            }
        }
        let recency = latest.map_or(0.0, |at| (-((now.0 - at.0) as f64) / cfg.tau.0 as f64).exp());

        let w = cfg.weights;
        rows.push((poi.id, w.topic * topic + w.collab * collab + w.recency * recency));
    }

    if rows.iter().all(|(_, s)| *s == 0.0) {
        // Favorites: mean rating desc, rating count desc, id asc; unrated last by id.
        let key = |id: PoiId| {
            let p = pois.iter().find(|p| p.id == id).unwrap();
            if p.ratings.is_empty() {
                (1, 0.0, 0, id)
            } else {
                let mean = p.ratings.iter().map(|(_, s)| f64::from(*s)).sum::<f64>() / p.ratings.len() as f64;
                (0, -mean, -(p.ratings.len() as i64), id)
            }
        };
        rows.sort_by(|a, b| {
            let (ka, kb) = (key(a.0), key(b.0));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.cmp(&kb.2)).then(ka.3.cmp(&kb.3))
        });
    } else {
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    }
    rows.truncate(k);
    rows
}
