//! RSSI ranging and 2-D trilateration.
//!
//! Signal strength maps to distance through the log-distance path-loss
//! model `rssi = p0 - 10 n log10(d / d0)`. Positions come from the
//! circle-difference linearization solved by ordinary least squares.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simnet::SimTime;
use crate::topology::NodeId;

/// Normal-matrix determinant below which the anchors count as collinear.
pub const DEGENERATE_DET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ApId(pub u32);

impl fmt::Display for ApId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ap{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub id: ApId,
    pub position: Position,
    /// Access-layer agent the radio is attached to.
    pub attached_node: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// RSSI at the reference distance.
    pub p0_dbm: f64,
    pub d0_m: f64,
    /// Path-loss exponent.
    pub n: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        PathLossParams { p0_dbm: -40.0, d0_m: 1.0, n: 2.0 }
    }
}

impl PathLossParams {
    pub fn validate(&self) -> Result<(), PositioningError> {
        if self.d0_m > 0.0 && self.n > 0.0 && self.p0_dbm.is_finite() && self.d0_m.is_finite() && self.n.is_finite() {
            Ok(())
        } else {
            Err(PositioningError::InvalidParams)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiObservation {
    pub ap_id: ApId,
    pub rssi_dbm: f64,
    pub at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PositioningError {
    #[error("need observations from at least 3 distinct access points, got {0}")]
    InsufficientObservations(usize),
    #[error("access point geometry is degenerate (determinant {0:e})")]
    DegenerateGeometry(f64),
    #[error("no observations")]
    NoObservations,
    #[error("unknown access point {0}")]
    UnknownAccessPoint(ApId),
    #[error("invalid path-loss parameters")]
    InvalidParams,
}

pub fn rssi_to_distance(rssi_dbm: f64, params: &PathLossParams) -> f64 {
    params.d0_m * 10f64.powf((params.p0_dbm - rssi_dbm) / (10.0 * params.n))
}

/// Inverse of [`rssi_to_distance`].
pub fn distance_to_rssi(distance_m: f64, params: &PathLossParams) -> f64 {
    params.p0_dbm - 10.0 * params.n * (distance_m / params.d0_m).log10()
}

/// Drops observations older than `window` at time `now`.
pub fn fresh_observations(observations: &[RssiObservation], now: SimTime, window: SimTime) -> Vec<RssiObservation> {
    observations.iter().filter(|o| now.0.saturating_sub(o.at.0) <= window.0).copied().collect()
}

/// Latest observation per access point, ordered by access point id.
fn latest_per_ap(observations: &[RssiObservation]) -> BTreeMap<ApId, RssiObservation> {
    let mut latest: BTreeMap<ApId, RssiObservation> = BTreeMap::new();
    for o in observations {
        latest
            .entry(o.ap_id)
            .and_modify(|cur| {
                if o.at > cur.at || (o.at == cur.at && o.rssi_dbm > cur.rssi_dbm) {
                    *cur = *o;
                }
            })
            .or_insert(*o);
    }
    latest
}

pub fn trilaterate(
    observations: &[RssiObservation],
    aps: &[AccessPoint],
    params: &PathLossParams,
) -> Result<Position, PositioningError> {
    params.validate()?;
    let latest = latest_per_ap(observations);
    if latest.len() < 3 {
        return Err(PositioningError::InsufficientObservations(latest.len()));
    }
    let mut anchors = Vec::with_capacity(latest.len());
    for (id, o) in &latest {
        let ap = aps.iter().find(|a| a.id == *id).ok_or(PositioningError::UnknownAccessPoint(*id))?;
        anchors.push((ap.position, rssi_to_distance(o.rssi_dbm, params)));
    }

    // Work relative to the first anchor; the first circle becomes x^2 + y^2 = r0^2.
    let (p0, r0) = anchors[0];
    let (mut ata00, mut ata01, mut ata11, mut atb0, mut atb1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(p, r) in &anchors[1..] {
        let (ax, ay) = (p.x - p0.x, p.y - p0.y);
        let row = (2.0 * ax, 2.0 * ay);
        let rhs = r0 * r0 - r * r + ax * ax + ay * ay;
        ata00 += row.0 * row.0;
        ata01 += row.0 * row.1;
        ata11 += row.1 * row.1;
        atb0 += row.0 * rhs;
        atb1 += row.1 * rhs;
    }
    let det = ata00 * ata11 - ata01 * ata01;
    if det.abs() < DEGENERATE_DET {
        return Err(PositioningError::DegenerateGeometry(det));
    }
    let x = (atb0 * ata11 - atb1 * ata01) / det;
    let y = (ata00 * atb1 - ata01 * atb0) / det;
    Ok(Position::new(x + p0.x, y + p0.y))
}

/// Strongest signal wins; ties go to the lowest access point id.
pub fn serving_ap(observations: &[RssiObservation]) -> Result<ApId, PositioningError> {
    observations
        .iter()
        .min_by(|a, b| b.rssi_dbm.total_cmp(&a.rssi_dbm).then(a.ap_id.cmp(&b.ap_id)))
        .map(|o| o.ap_id)
        .ok_or(PositioningError::NoObservations)
}
