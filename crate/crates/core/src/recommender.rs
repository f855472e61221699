//! POI recommendations, community favorites and contextual alerts.
//!
//! A POI's score blends three signals: how many of the user's selected
//! topics it carries, how similar users rated it (cosine similarity over
//! rating vectors) and how recently the user spent time in the same
//! category.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::positioning::Position;
use crate::simnet::SimTime;
use crate::workload::{FlightEvent, FlightStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoiId(pub u32);

impl fmt::Display for PoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "poi{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: PoiId,
    pub name: String,
    pub category: String,
    pub topics: BTreeSet<String>,
    pub position: Position,
    /// Scores from 1 to 5.
    #[serde(default)]
    pub ratings: Vec<(Uuid, u8)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub poi_id: PoiId,
    pub at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UserProfile {
    pub uuid: Uuid,
    #[serde(default)]
    pub selected_topics: BTreeSet<String>,
    /// Ordered by time.
    #[serde(default)]
    pub visits: Vec<Visit>,
    #[serde(default)]
    pub ratings: BTreeMap<PoiId, u8>,
    #[serde(default)]
    pub flight_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecommenderError {
    #[error("rating {0} outside 1..=5")]
    InvalidRating(u8),
    #[error("visit at {at:?} precedes the last recorded visit")]
    NonMonotoneVisit { at: SimTime },
    #[error("weights must be non-negative and sum to 1")]
    InvalidWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub topic: f64,
    pub collab: f64,
    pub recency: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { topic: 0.4, collab: 0.4, recency: 0.2 }
    }
}

impl Weights {
    pub fn new(topic: f64, collab: f64, recency: f64) -> Result<Self, RecommenderError> {
        let w = Weights { topic, collab, recency };
        let ok = [topic, collab, recency].iter().all(|v| v.is_finite() && *v >= 0.0)
            && (topic + collab + recency - 1.0).abs() < 1e-9;
        if ok {
            Ok(w)
        } else {
            Err(RecommenderError::InvalidWeights)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecommenderConfig {
    pub weights: Weights,
    /// Recency time constant; visits younger than this also suppress the POI.
    pub tau: SimTime,
    pub nearby_radius_m: f64,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        RecommenderConfig {
            weights: Weights::default(),
            tau: SimTime::from_secs_f64(24.0 * 3600.0),
            nearby_radius_m: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreComponents {
    pub topic: f64,
    pub collab: f64,
    pub recency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub poi_id: PoiId,
    pub score: f64,
    pub components: ScoreComponents,
}

/// Rating mapped onto [0, 1].
pub fn normalize_rating(score: u8) -> f64 {
    (f64::from(score) - 1.0) / 4.0
}

/// Cosine similarity of two rating vectors (absent ratings are zero).
pub fn similarity(a: &UserProfile, b: &UserProfile) -> f64 {
    let dot: f64 = a
        .ratings
        .iter()
        .filter_map(|(poi, ra)| b.ratings.get(poi).map(|rb| f64::from(*ra) * f64::from(*rb)))
        .sum();
    let norm = |p: &UserProfile| p.ratings.values().map(|r| f64::from(*r).powi(2)).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

fn mean_rating(poi: &Poi) -> f64 {
    poi.ratings.iter().map(|(_, s)| f64::from(*s)).sum::<f64>() / poi.ratings.len() as f64
}

/// Most rated POIs: at least `min_ratings` ratings, best mean first, then
/// more ratings, then lower id.
pub fn favorites(pois: &[Poi], min_ratings: usize) -> Vec<PoiId> {
    let mut eligible: Vec<(&Poi, f64)> = pois
        .iter()
        .filter(|p| p.ratings.len() >= min_ratings.max(1))
        .map(|p| (p, mean_rating(p)))
        .collect();
    eligible.sort_by(|(a, ma), (b, mb)| {
        mb.total_cmp(ma).then(b.ratings.len().cmp(&a.ratings.len())).then(a.id.cmp(&b.id))
    });
    eligible.into_iter().map(|(p, _)| p.id).collect()
}

pub fn recommend(
    user: &UserProfile,
    all_users: &[UserProfile],
    pois: &[Poi],
    now: SimTime,
    k: usize,
    config: &RecommenderConfig,
) -> Vec<Recommendation> {
    let by_id: BTreeMap<PoiId, &Poi> = pois.iter().map(|p| (p.id, p)).collect();
    let tau_us = config.tau.0 as f64;

    let peers: Vec<(&UserProfile, f64)> = all_users
        .iter()
        .filter(|u| u.uuid != user.uuid)
        .map(|u| (u, similarity(user, u)))
        .collect();

    // Most recent visit per category and per POI.
    let mut last_in_category: BTreeMap<&str, SimTime> = BTreeMap::new();
    let mut last_at_poi: BTreeMap<PoiId, SimTime> = BTreeMap::new();
    for v in &user.visits {
        if let Some(p) = by_id.get(&v.poi_id) {
            let c = last_in_category.entry(p.category.as_str()).or_insert(v.at);
            *c = (*c).max(v.at);
            let l = last_at_poi.entry(v.poi_id).or_insert(v.at);
            *l = (*l).max(v.at);
        }
    }

    let mut scored: Vec<Recommendation> = Vec::new();
    for poi in pois {
        if last_at_poi.get(&poi.id).is_some_and(|at| now.0.saturating_sub(at.0) <= config.tau.0) {
            continue;
        }
        let matched = poi.topics.intersection(&user.selected_topics).count();
        let topic = matched as f64 / user.selected_topics.len().max(1) as f64;

        let (mut num, mut den) = (0.0, 0.0);
        for (peer, sim) in &peers {
            if let Some(r) = peer.ratings.get(&poi.id) {
                num += sim * normalize_rating(*r);
                den += sim;
            }
        }
        let collab = if den > 0.0 { num / den } else { 0.0 };

        let recency = last_in_category
            .get(poi.category.as_str())
            .map_or(0.0, |at| (-(now.0.saturating_sub(at.0) as f64) / tau_us).exp());

        let w = config.weights;
        scored.push(Recommendation {
            poi_id: poi.id,
            score: w.topic * topic + w.collab * collab + w.recency * recency,
            components: ScoreComponents { topic, collab, recency },
        });
    }

    if scored.iter().all(|r| r.score == 0.0) {
        // Nothing personal to go on: community favorites, then the rest by id.
        let rank: BTreeMap<PoiId, usize> = favorites(pois, 1).into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        scored.sort_by_key(|r| (rank.get(&r.poi_id).copied().unwrap_or(usize::MAX), r.poi_id));
    } else {
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.poi_id.cmp(&b.poi_id)));
    }
    scored.truncate(k);
    scored
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlertKind {
    Flight { flight_id: String, status: FlightStatus, gate: String },
    NearbyPoi { poi_id: PoiId, distance_m: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub kind: AlertKind,
    /// Shown as a red spot until read.
    pub unread: bool,
}

/// Per-user alert state for one visit to the terminal.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NotificationSession {
    alerted_pois: BTreeSet<PoiId>,
    flight_state: Option<(FlightStatus, String)>,
}

impl NotificationSession {
    pub fn new() -> Self {
        Self::default()
    }

    /// Flight alerts for any status or gate change on the user's flight,
    /// and one alert per matching POI within range per session.
    pub fn notifications(
        &mut self,
        user: &UserProfile,
        position: Position,
        pois: &[Poi],
        flight_events: &[FlightEvent],
        config: &RecommenderConfig,
    ) -> Vec<Alert> {
        let mut alerts = Vec::new();
        if let Some(flight) = &user.flight_id {
            for e in flight_events.iter().filter(|e| &e.flight_id == flight) {
                let state = (e.status, e.gate.clone());
                if self.flight_state.as_ref() != Some(&state) {
                    alerts.push(Alert {
                        kind: AlertKind::Flight { flight_id: e.flight_id.clone(), status: e.status, gate: e.gate.clone() },
                        unread: true,
                    });
                    self.flight_state = Some(state);
                }
            }
        }
        for poi in pois {
            let d = poi.position.distance(&position);
            if d > config.nearby_radius_m || poi.topics.is_disjoint(&user.selected_topics) {
                continue;
            }
            if self.alerted_pois.insert(poi.id) {
                alerts.push(Alert { kind: AlertKind::NearbyPoi { poi_id: poi.id, distance_m: d }, unread: true });
            }
        }
        alerts
    }
}

/// Profiles keyed by app identity. Each fog area keeps one; merging them
/// joins the activity of a user seen in several areas.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileStore {
    profiles: BTreeMap<Uuid, UserProfile>,
}

impl ProfileStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn profile(&self, uuid: &Uuid) -> Option<&UserProfile> {
        self.profiles.get(uuid)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &UserProfile> {
        self.profiles.values()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    fn entry(&mut self, uuid: Uuid) -> &mut UserProfile {
        self.profiles.entry(uuid).or_insert_with(|| UserProfile { uuid, ..Default::default() })
    }

    pub fn upsert(&mut self, profile: UserProfile) {
        self.profiles.insert(profile.uuid, profile);
    }

    pub fn record_visit(&mut self, uuid: Uuid, poi_id: PoiId, at: SimTime) -> Result<(), RecommenderError> {
        let p = self.entry(uuid);
        if p.visits.last().is_some_and(|v| v.at > at) {
            return Err(RecommenderError::NonMonotoneVisit { at });
        }
        p.visits.push(Visit { poi_id, at });
        Ok(())
    }

    pub fn rate(&mut self, uuid: Uuid, poi_id: PoiId, score: u8) -> Result<(), RecommenderError> {
        if !(1..=5).contains(&score) {
            return Err(RecommenderError::InvalidRating(score));
        }
        self.entry(uuid).ratings.insert(poi_id, score);
        Ok(())
    }

    /// Folds another store in, keeping visits time-ordered per user.
    pub fn merge(&mut self, other: &ProfileStore) {
        for (uuid, theirs) in &other.profiles {
            let mine = self.entry(*uuid);
            mine.visits.extend(theirs.visits.iter().copied());
            mine.visits.sort_by_key(|v| v.at);
            mine.selected_topics.extend(theirs.selected_topics.iter().cloned());
            for (poi, r) in &theirs.ratings {
                mine.ratings.insert(*poi, *r);
            }
            if mine.flight_id.is_none() {
                mine.flight_id.clone_from(&theirs.flight_id);
            }
        }
    }
}
