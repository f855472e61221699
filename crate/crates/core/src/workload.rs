//! Airport workload: terminal map, travelers walking their itineraries,
//! simulated WiFi readings, the proximity request stream and the flight
//! status feed.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::analytics::{nearest_on_boundary, polygon_contains, Zone, ZoneShape};
use crate::positioning::{distance_to_rssi, AccessPoint, ApId, PathLossParams, Position, RssiObservation};
use crate::recommender::{Poi, PoiId};
use crate::rng::{stream, SimRng};
use crate::simnet::SimTime;
use crate::topology::{NodeId, NodeRole, Topology};

/// Node id of the access agent behind access point `i` (1-based) in the
/// stock topologies.
pub const ACCESS_NODE_BASE: u64 = 10;

/// Node id of the gateway microagent co-located with access point `i`
/// (1-based); requests from travelers enter the system there.
pub const EDGE_NODE_BASE: u64 = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
    #[error("map coverage gap at ({x}, {y}): only {heard} access points in range")]
    CoverageGap { x: f64, y: f64, heard: usize },
}

/// Fresh random identity from a seeded stream; carries no device data.
pub fn new_uuid(rng: &mut SimRng) -> Uuid {
    uuid::Builder::from_random_bytes(rng.random()).into_uuid()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub id: String,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalMap {
    /// Outline of the walkable area.
    pub boundary: Vec<Position>,
    pub entrance: Position,
    pub security: Position,
    pub gates: Vec<Gate>,
    pub access_points: Vec<AccessPoint>,
    pub pois: Vec<Poi>,
    pub zones: Vec<Zone>,
    pub radio_range_m: f64,
}

impl TerminalMap {
    pub fn bounds(&self) -> (Position, Position) {
        let min = self.boundary.iter().fold(Position::new(f64::INFINITY, f64::INFINITY), |m, p| {
            Position::new(m.x.min(p.x), m.y.min(p.y))
        });
        let max = self.boundary.iter().fold(Position::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| {
            Position::new(m.x.max(p.x), m.y.max(p.y))
        });
        (min, max)
    }

    pub fn contains(&self, p: Position) -> bool {
        polygon_contains(&self.boundary, p)
    }

    pub fn clamp(&self, p: Position) -> Position {
        if self.contains(p) {
            p
        } else {
            nearest_on_boundary(&self.boundary, p)
        }
    }

    pub fn gate(&self, id: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.id == id)
    }

    /// Checks the outline, unique AP ids and that every point of a 1 m
    /// lattice inside the outline hears at least three APs.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.boundary.len() < 3 {
            return Err(WorkloadError::InvalidParams("map outline needs at least 3 vertices".into()));
        }
        let ids: BTreeSet<ApId> = self.access_points.iter().map(|a| a.id).collect();
        if ids.len() != self.access_points.len() {
            return Err(WorkloadError::InvalidParams("duplicate access point id".into()));
        }
        if !self.access_points.iter().all(|a| a.position.is_finite()) {
            return Err(WorkloadError::InvalidParams("access point position not finite".into()));
        }
        let ids: BTreeSet<PoiId> = self.pois.iter().map(|p| p.id).collect();
        if ids.len() != self.pois.len() {
            return Err(WorkloadError::InvalidParams("duplicate POI id".into()));
        }
        let landmarks = [self.entrance, self.security]
            .into_iter()
            .chain(self.gates.iter().map(|g| g.position))
            .chain(self.pois.iter().map(|p| p.position));
        for p in landmarks {
            if !self.contains(p) {
                return Err(WorkloadError::InvalidParams(format!("landmark ({}, {}) outside the map", p.x, p.y)));
            }
        }
        let (min, max) = self.bounds();
        let mut y = min.y;
        while y <= max.y {
            let mut x = min.x;
            while x <= max.x {
                let p = Position::new(x, y);
                if self.contains(p) {
                    let heard = self.access_points.iter().filter(|a| a.position.distance(&p) <= self.radio_range_m).count();
                    if heard < 3 {
                        return Err(WorkloadError::CoverageGap { x, y, heard });
                    }
                }
                x += 1.0;
            }
            y += 1.0;
        }
        Ok(())
    }

    /// 120 m x 60 m terminal with eight access points on a 4 x 2 grid.
    pub fn default_airport() -> Self {
        let mut access_points = Vec::new();
        for (i, x) in [15.0, 45.0, 75.0, 105.0].into_iter().enumerate() {
            for (j, y) in [15.0, 45.0].into_iter().enumerate() {
                let id = (i * 2 + j + 1) as u32;
                access_points.push(AccessPoint {
                    id: ApId(id),
                    position: Position::new(x, y),
                    attached_node: NodeId(EDGE_NODE_BASE + u64::from(id) - 1),
                });
            }
        }
        let poi = |id: u32, name: &str, category: &str, topics: &[&str], x: f64, y: f64| Poi {
            id: PoiId(id),
            name: name.into(),
            category: category.into(),
            topics: topics.iter().map(|t| t.to_string()).collect(),
            position: Position::new(x, y),
            ratings: Vec::new(),
        };
        let pois = vec![
            poi(1, "Espresso Bar", "cafe", &["coffee", "food"], 35.0, 10.0),
            poi(2, "Duty Free", "shop", &["perfume", "shopping", "liquor"], 50.0, 30.0),
            poi(3, "Book Corner", "shop", &["books", "shopping"], 65.0, 50.0),
            poi(4, "Restroom East", "restroom", &["services"], 80.0, 30.0),
            poi(5, "Information Desk", "info", &["services", "flights"], 25.0, 50.0),
            poi(6, "Noodle House", "restaurant", &["food"], 90.0, 10.0),
            poi(7, "Tech Store", "shop", &["electronics", "shopping"], 60.0, 8.0),
            poi(8, "Skyline Lounge", "lounge", &["rest", "coffee"], 100.0, 45.0),
        ];
        let zones = pois
            .iter()
            .map(|p| Zone {
                poi_id: p.id,
                shape: ZoneShape::Circle { center: p.position, radius_m: 5.0 },
                capacity: if p.category == "restroom" { 8 } else { 20 },
            })
            .collect();
        let gate = |id: &str, x: f64, y: f64| Gate { id: id.into(), position: Position::new(x, y) };
        TerminalMap {
            boundary: vec![
                Position::new(0.0, 0.0),
                Position::new(120.0, 0.0),
                Position::new(120.0, 60.0),
                Position::new(0.0, 60.0),
            ],
            entrance: Position::new(2.0, 30.0),
            security: Position::new(15.0, 30.0),
            gates: vec![
                gate("A1", 115.0, 8.0),
                gate("A2", 115.0, 22.0),
                gate("A3", 115.0, 38.0),
                gate("A4", 115.0, 52.0),
                gate("B1", 95.0, 57.0),
                gate("B2", 75.0, 57.0),
            ],
            access_points,
            pois,
            zones,
            radio_range_m: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Position,
    pub dwell_s: f64,
    #[serde(default)]
    pub poi: Option<PoiId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traveler {
    pub uuid: Uuid,
    /// Entrance, security, optional POIs, gate.
    pub itinerary: Vec<Waypoint>,
    pub speed_mps: f64,
    pub flight_id: String,
    /// Number of app installs so far; bumps on every reinstall.
    pub install_generation: u32,
    pub position: Position,
    /// Index of the waypoint being walked to (== len once at the gate).
    pub next_waypoint: usize,
    pub dwell_remaining_s: f64,
}

impl Traveler {
    pub fn at_final_waypoint(&self) -> bool {
        self.next_waypoint >= self.itinerary.len() && self.dwell_remaining_s <= 0.0
    }

    /// POI of the waypoint the traveler is dwelling at, if any.
    pub fn dwelling_at(&self) -> Option<PoiId> {
        if self.dwell_remaining_s > 0.0 && self.next_waypoint > 0 {
            self.itinerary[self.next_waypoint - 1].poi
        } else {
            None
        }
    }
}

/// Advances the traveler by `dt_s` seconds along the itinerary.
pub fn step_traveler(traveler: &Traveler, dt_s: f64, map: &TerminalMap) -> (Traveler, Position) {
    let mut t = traveler.clone();
    let mut left = dt_s.max(0.0);
    while left > 0.0 {
        if t.dwell_remaining_s > 0.0 {
            let d = left.min(t.dwell_remaining_s);
            t.dwell_remaining_s -= d;
            left -= d;
            continue;
        }
        let Some(wp) = t.itinerary.get(t.next_waypoint).copied() else {
            break;
        };
        let dist = t.position.distance(&wp.position);
        let reach = t.speed_mps * left;
        if reach < dist {
            let f = reach / dist;
            t.position = Position::new(
                t.position.x + (wp.position.x - t.position.x) * f,
                t.position.y + (wp.position.y - t.position.y) * f,
            );
            break;
        }
        left -= dist / t.speed_mps;
        t.position = wp.position;
        t.dwell_remaining_s = wp.dwell_s;
        t.next_waypoint += 1;
    }
    t.position = map.clamp(t.position);
    let p = t.position;
    (t, p)
}

/// Readings from every access point in range, with Gaussian noise in dB.
pub fn emit_rssi(
    position: Position,
    aps: &[AccessPoint],
    params: &PathLossParams,
    noise_sigma_db: f64,
    range_m: f64,
    at: SimTime,
    rng: &mut SimRng,
) -> Vec<RssiObservation> {
    let noise = (noise_sigma_db > 0.0).then(|| Normal::new(0.0, noise_sigma_db).expect("finite sigma"));
    aps.iter()
        .filter_map(|ap| {
            let d = ap.position.distance(&position);
            if d > range_m {
                return None;
            }
            // Inside the reference distance the model saturates at p0.
            let clean = distance_to_rssi(d.max(params.d0_m), params);
            let jitter = noise.as_ref().map_or(0.0, |n| n.sample(rng));
            Some(RssiObservation { ap_id: ap.id, rssi_dbm: clean + jitter, at })
        })
        .collect()
}

/// New install, new identity. History stays with the old uuid.
pub fn reinstall(traveler: &Traveler, rng: &mut SimRng) -> Traveler {
    Traveler { uuid: new_uuid(rng), install_generation: traveler.install_generation + 1, ..traveler.clone() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlightStatus {
    Scheduled,
    Boarding,
    GateChange,
    Delayed,
    Departed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightEvent {
    pub flight_id: String,
    pub status: FlightStatus,
    pub gate: String,
    pub at: SimTime,
}

/// Simulated airport flight-status API.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlightFeed {
    /// Sorted by time.
    pub events: Vec<FlightEvent>,
}

/// Events with `since < at <= now`, in time order.
pub fn poll_flights(feed: &FlightFeed, since: SimTime, now: SimTime) -> Vec<FlightEvent> {
    let start = feed.events.partition_point(|e| e.at <= since);
    feed.events[start..].iter().take_while(|e| e.at <= now).cloned().collect()
}

/// Scheduled first, Departed last and only once, Boarding at most once;
/// gate changes and delays anywhere in between.
pub fn valid_flight_sequence(events: &[&FlightEvent]) -> bool {
    let Some((first, rest)) = events.split_first() else {
        return true;
    };
    if first.status != FlightStatus::Scheduled {
        return false;
    }
    let mut boarded = false;
    let mut departed = false;
    let mut last = first.at;
    for e in rest {
        if departed || e.at < last {
            return false;
        }
        last = e.at;
        match e.status {
            FlightStatus::Scheduled => return false,
            FlightStatus::Boarding if boarded => return false,
            FlightStatus::Boarding => boarded = true,
            FlightStatus::Departed => departed = true,
            FlightStatus::GateChange | FlightStatus::Delayed => {}
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub traveler_count: usize,
    /// System-wide proximity requests per second.
    pub request_rate_per_s: f64,
    pub duration_s: f64,
    pub map: TerminalMap,
    pub path_loss: PathLossParams,
    pub noise_sigma_db: f64,
    pub staleness_s: f64,
    pub speed_mps: (f64, f64),
    pub dwell_s: (f64, f64),
    pub security_dwell_s: f64,
    pub max_poi_stops: usize,
    pub flight_count: usize,
    /// Service-units per proximity request.
    pub demand: u32,
    pub service_class: String,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            traveler_count: 200,
            request_rate_per_s: 10.0,
            duration_s: 60.0,
            map: TerminalMap::default_airport(),
            path_loss: PathLossParams::default(),
            noise_sigma_db: 2.0,
            staleness_s: 2.0,
            speed_mps: (0.8, 1.4),
            dwell_s: (30.0, 240.0),
            security_dwell_s: 20.0,
            max_poi_stops: 2,
            flight_count: 12,
            demand: 1,
            service_class: "proximity".into(),
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidParams(m.into()));
        if !(self.request_rate_per_s.is_finite() && self.request_rate_per_s >= 0.0) {
            return bad("request rate must be finite and non-negative");
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.speed_mps.0 > 0.0 && self.speed_mps.1 >= self.speed_mps.0) {
            return bad("speed range must be positive and ordered");
        }
        if !(self.dwell_s.0 >= 0.0 && self.dwell_s.1 >= self.dwell_s.0 && self.security_dwell_s >= 0.0) {
            return bad("dwell range must be non-negative and ordered");
        }
        if !(self.noise_sigma_db.is_finite() && self.noise_sigma_db >= 0.0) {
            return bad("noise sigma must be non-negative");
        }
        if self.demand == 0 {
            return bad("demand must be positive");
        }
        if self.map.gates.is_empty() {
            return bad("map needs at least one gate");
        }
        self.path_loss.validate().map_err(|e| WorkloadError::InvalidParams(e.to_string()))?;
        self.map.validate()
    }
}

/// One proximity request: who asks and when.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestSpec {
    pub id: u64,
    pub at: SimTime,
    pub traveler: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub seed: u64,
    pub travelers: Vec<Traveler>,
    pub requests: Vec<RequestSpec>,
    pub flights: FlightFeed,
}

impl Scenario {
    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.params.duration_s)
    }
}

fn uniform(rng: &mut SimRng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

fn generate_flights(params: &ScenarioParams, seed: u64) -> (Vec<(String, String)>, FlightFeed) {
    let mut rng = stream(seed, "flights", 0);
    let horizon = params.duration_s;
    let mut flights = Vec::new();
    let mut events = Vec::new();
    for i in 0..params.flight_count.max(1) {
        let id = format!("FL{}", 100 + i);
        let gate = params.map.gates.choose(&mut rng).expect("gates checked").id.clone();
        let departure = rng.random_range(0.5 * horizon..3.0 * horizon);
        let boarding = departure * 0.8;
        let ev = |status, gate: &str, at: f64| FlightEvent {
            flight_id: id.clone(),
            status,
            gate: gate.to_string(),
            at: SimTime::from_secs_f64(at),
        };
        let mut list = vec![ev(FlightStatus::Scheduled, &gate, 1.0)];
        let mut current_gate = gate.clone();
        if rng.random_bool(0.3) {
            let next = params.map.gates.choose(&mut rng).expect("gates checked").id.clone();
            current_gate = next;
            let at = rng.random_range(1.0..boarding.max(1.5));
            list.push(ev(FlightStatus::GateChange, &current_gate, at));
        }
        if rng.random_bool(0.3) {
            let at = rng.random_range(1.0..boarding.max(1.5));
            list.push(ev(FlightStatus::Delayed, &current_gate, at));
        }
        list[1..].sort_by_key(|e| e.at);
        let last = list.last().map_or(SimTime::ZERO, |e| e.at);
        let board_at = SimTime::from_secs_f64(boarding).max(SimTime(last.0 + 1));
        list.push(FlightEvent { at: board_at, ..ev(FlightStatus::Boarding, &current_gate, 0.0) });
        let dep_at = SimTime::from_secs_f64(departure).max(SimTime(board_at.0 + 1));
        list.push(FlightEvent { at: dep_at, ..ev(FlightStatus::Departed, &current_gate, 0.0) });
        events.extend(list);
        flights.push((id, gate));
    }
    events.sort_by(|a, b| a.at.cmp(&b.at).then(a.flight_id.cmp(&b.flight_id)));
    (flights, FlightFeed { events })
}

fn generate_traveler(params: &ScenarioParams, flights: &[(String, String)], seed: u64, index: usize) -> Traveler {
    let mut rng = stream(seed, "travelers", index as u64);
    let map = &params.map;
    let uuid = new_uuid(&mut rng);
    let (flight_id, gate_id) = flights.choose(&mut rng).expect("at least one flight").clone();
    let gate = map.gate(&gate_id).expect("flight gate on map").position;

    let mut itinerary = vec![
        Waypoint { position: map.entrance, dwell_s: 0.0, poi: None },
        Waypoint { position: map.security, dwell_s: params.security_dwell_s, poi: None },
    ];
    let stops = rng.random_range(0..=params.max_poi_stops.min(map.pois.len()));
    for poi in map.pois.choose_multiple(&mut rng, stops) {
        itinerary.push(Waypoint { position: poi.position, dwell_s: uniform(&mut rng, params.dwell_s), poi: Some(poi.id) });
    }
    itinerary.push(Waypoint { position: gate, dwell_s: 0.0, poi: None });

    // Spread the crowd: start somewhere along a random leg.
    let leg = rng.random_range(0..itinerary.len());
    let f: f64 = rng.random();
    let (position, next_waypoint) = match itinerary.get(leg + 1) {
        Some(next) => {
            let a = itinerary[leg].position;
            (Position::new(a.x + (next.position.x - a.x) * f, a.y + (next.position.y - a.y) * f), leg + 1)
        }
        None => (itinerary[leg].position, itinerary.len()),
    };
    Traveler {
        uuid,
        itinerary,
        speed_mps: uniform(&mut rng, params.speed_mps),
        flight_id,
        install_generation: 1,
        position,
        next_waypoint,
        dwell_remaining_s: 0.0,
    }
}

/// Pure function of `(params, seed)`. Travelers and flights do not depend
/// on the request rate, so scenarios at different rates share a crowd.
pub fn generate_scenario(params: &ScenarioParams, seed: u64) -> Result<Scenario, WorkloadError> {
    params.validate()?;
    let (flights, feed) = generate_flights(params, seed);
    let travelers: Vec<Traveler> =
        (0..params.traveler_count).map(|i| generate_traveler(params, &flights, seed, i)).collect();

    let mut requests = Vec::new();
    if !travelers.is_empty() && params.request_rate_per_s > 0.0 {
        let mut rng = stream(seed, "arrivals", 0);
        let gap = Exp::new(params.request_rate_per_s).expect("positive rate");
        let end = SimTime::from_secs_f64(params.duration_s);
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            let at = SimTime::from_secs_f64(t);
            if at >= end {
                break;
            }
            let traveler = rng.random_range(0..travelers.len());
            requests.push(RequestSpec { id: requests.len() as u64, at, traveler });
        }
    }
    Ok(Scenario { params: params.clone(), seed, travelers, requests, flights: feed })
}

/// Fog node whose area contains `node`: the nearest ancestor with the fog role.
pub fn fog_area(topology: &Topology, node: NodeId) -> Option<NodeId> {
    topology
        .ancestry(node)
        .ok()?
        .into_iter()
        .find(|n| topology.get(*n).is_some_and(|a| a.role == NodeRole::Fog))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walker(itinerary: Vec<Waypoint>) -> Traveler {
        Traveler {
            uuid: Uuid::nil(),
            position: itinerary[0].position,
            itinerary,
            speed_mps: 1.0,
            flight_id: "FL100".into(),
            install_generation: 1,
            next_waypoint: 1,
            dwell_remaining_s: 0.0,
        }
    }

    fn wp(x: f64, y: f64, dwell_s: f64) -> Waypoint {
        Waypoint { position: Position::new(x, y), dwell_s, poi: None }
    }

    #[test]
    fn default_map_is_covered() {
        TerminalMap::default_airport().validate().unwrap();
    }

    #[test]
    fn moves_one_metre_per_second() {
        let map = TerminalMap::default_airport();
        let t = walker(vec![wp(10.0, 10.0, 0.0), wp(20.0, 10.0, 0.0)]);
        let (t, p) = step_traveler(&t, 1.0, &map);
        assert!((p.x - 11.0).abs() < 1e-12 && p.y == 10.0);
        let (t, p) = step_traveler(&t, 100.0, &map);
        assert_eq!(p, Position::new(20.0, 10.0));
        assert!(t.at_final_waypoint());
        let (_, p2) = step_traveler(&t, 5.0, &map);
        assert_eq!(p2, p);
    }

    #[test]
    fn dwell_holds_position() {
        let map = TerminalMap::default_airport();
        let t = walker(vec![wp(10.0, 10.0, 0.0), wp(11.0, 10.0, 30.0), wp(20.0, 10.0, 0.0)]);
        let (mut t, _) = step_traveler(&t, 1.0, &map);
        for _ in 0..30 {
            let (next, p) = step_traveler(&t, 1.0, &map);
            assert_eq!(p, Position::new(11.0, 10.0));
            t = next;
        }
        let (_, p) = step_traveler(&t, 1.0, &map);
        assert!((p.x - 12.0).abs() < 1e-12);
    }

    #[test]
    fn movement_is_clamped() {
        let map = TerminalMap::default_airport();
        let t = walker(vec![wp(10.0, 10.0, 0.0), wp(200.0, 10.0, 0.0)]);
        let (_, p) = step_traveler(&t, 500.0, &map);
        assert!(map.contains(p));
        assert_eq!(p, Position::new(120.0, 10.0));
    }

    #[test]
    fn rssi_forward_model() {
        let params = PathLossParams::default();
        let aps = [
            AccessPoint { id: ApId(1), position: Position::new(0.0, 0.0), attached_node: NodeId(10) },
            AccessPoint { id: ApId(2), position: Position::new(10.0, 0.0), attached_node: NodeId(11) },
            AccessPoint { id: ApId(3), position: Position::new(500.0, 0.0), attached_node: NodeId(12) },
        ];
        let mut rng = stream(1, "rssi", 0);
        let o = emit_rssi(Position::new(0.0, 0.0), &aps, &params, 0.0, 60.0, SimTime::ZERO, &mut rng);
        assert_eq!(o.len(), 2);
        assert_eq!(o[0].rssi_dbm, -40.0);
        assert!((o[1].rssi_dbm - -60.0).abs() < 1e-12);
    }

    #[test]
    fn polling_windows() {
        let e = |at: f64, status| FlightEvent {
            flight_id: "FL1".into(),
            status,
            gate: "A1".into(),
            at: SimTime::from_secs_f64(at),
        };
        let feed = FlightFeed { events: vec![e(1.0, FlightStatus::Scheduled), e(100.0, FlightStatus::GateChange)] };
        let s = |v| SimTime::from_secs_f64(v);
        assert!(poll_flights(&feed, s(2.0), s(50.0)).is_empty());
        let got = poll_flights(&feed, s(90.0), s(110.0));
        assert_eq!(got, vec![feed.events[1].clone()]);
        assert_eq!(got, poll_flights(&feed, s(90.0), s(110.0)));
        assert!(poll_flights(&feed, s(100.0), s(200.0)).is_empty());
    }

    #[test]
    fn flight_order_rules() {
        let e = |status, at: u64| FlightEvent { flight_id: "F".into(), status, gate: "A1".into(), at: SimTime(at) };
        let ok = [e(FlightStatus::Scheduled, 0), e(FlightStatus::GateChange, 1), e(FlightStatus::Boarding, 2), e(FlightStatus::Delayed, 3), e(FlightStatus::Departed, 4)];
        assert!(valid_flight_sequence(&ok.iter().collect::<Vec<_>>()));
        let bad = [e(FlightStatus::Scheduled, 0), e(FlightStatus::Departed, 1), e(FlightStatus::Delayed, 2)];
        assert!(!valid_flight_sequence(&bad.iter().collect::<Vec<_>>()));
        let bad = [e(FlightStatus::Boarding, 0)];
        assert!(!valid_flight_sequence(&bad.iter().collect::<Vec<_>>()));
    }

    #[test]
    fn reinstall_changes_identity_only() {
        let params = ScenarioParams { traveler_count: 1, ..Default::default() };
        let s = generate_scenario(&params, 3).unwrap();
        let mut rng = stream(3, "reinstall", 0);
        let a = reinstall(&s.travelers[0], &mut rng);
        let b = reinstall(&a, &mut rng);
        assert_ne!(a.uuid, s.travelers[0].uuid);
        assert_ne!(a.uuid, b.uuid);
        assert_eq!(b.install_generation, 3);
        assert_eq!(a.itinerary, s.travelers[0].itinerary);
    }

    #[test]
    fn invalid_params() {
        let p = ScenarioParams { duration_s: 0.0, ..Default::default() };
        assert!(matches!(generate_scenario(&p, 1), Err(WorkloadError::InvalidParams(_))));
        let mut p = ScenarioParams::default();
        p.map.radio_range_m = 10.0;
        assert!(matches!(generate_scenario(&p, 1), Err(WorkloadError::CoverageGap { .. })));
    }

    #[test]
    fn no_travelers_no_requests() {
        let p = ScenarioParams { traveler_count: 0, ..Default::default() };
        assert!(generate_scenario(&p, 1).unwrap().requests.is_empty());
    }
}
