//! Crowd analytics over position snapshots: heat maps, proximity clusters,
//! zone occupancy, advisories and virtual queues.

use std::collections::VecDeque;
use std::fmt::Write as _;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::positioning::Position;
use crate::recommender::PoiId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("position ({x}, {y}) lies outside the heat map")]
    OutOfBounds { x: f64, y: f64 },
    #[error("heat map needs a positive cell size and at least one cell")]
    InvalidGrid,
}

/// Grid of sample counts, row-major with row 0 at the origin's y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub origin: Position,
    pub cell_size_m: f64,
    pub width: usize,
    pub height: usize,
    counts: Vec<u64>,
}

impl HeatMap {
    pub fn new(origin: Position, cell_size_m: f64, width: usize, height: usize) -> Result<Self, AnalyticsError> {
        if !(cell_size_m.is_finite() && cell_size_m > 0.0) || width == 0 || height == 0 || !origin.is_finite() {
            return Err(AnalyticsError::InvalidGrid);
        }
        Ok(HeatMap { origin, cell_size_m, width, height, counts: vec![0; width * height] })
    }

    /// Smallest grid with the given cell size that covers the rectangle.
    pub fn covering(min: Position, max: Position, cell_size_m: f64) -> Result<Self, AnalyticsError> {
        let w = ((max.x - min.x) / cell_size_m).ceil().max(1.0) as usize;
        let h = ((max.y - min.y) / cell_size_m).ceil().max(1.0) as usize;
        HeatMap::new(min, cell_size_m, w, h)
    }

    pub fn cell_of(&self, p: Position) -> Result<(usize, usize), AnalyticsError> {
        let cx = ((p.x - self.origin.x) / self.cell_size_m).floor();
        let cy = ((p.y - self.origin.y) / self.cell_size_m).floor();
        if !(cx >= 0.0 && cy >= 0.0 && (cx as usize) < self.width && (cy as usize) < self.height) {
            return Err(AnalyticsError::OutOfBounds { x: p.x, y: p.y });
        }
        Ok((cx as usize, cy as usize))
    }

    pub fn ingest(&mut self, p: Position) -> Result<(usize, usize), AnalyticsError> {
        let (cx, cy) = self.cell_of(p)?;
        self.counts[cy * self.width + cx] += 1;
        Ok((cx, cy))
    }

    /// Pulls a point onto the grid (the far edges are exclusive).
    pub fn clamp(&self, p: Position) -> Position {
        let max_x = self.origin.x + self.width as f64 * self.cell_size_m;
        let max_y = self.origin.y + self.height as f64 * self.cell_size_m;
        let inside = |v: f64, lo: f64, hi: f64| if v >= hi { hi - self.cell_size_m * 1e-6 } else { v.max(lo) };
        Position::new(inside(p.x, self.origin.x, max_x), inside(p.y, self.origin.y, max_y))
    }

    pub fn count(&self, cx: usize, cy: usize) -> u64 {
        self.counts[cy * self.width + cx]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.width)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Plain (P2) greymap; brighter means more samples.
    pub fn to_pgm(&self) -> String {
        let maxval = self.max_count().clamp(1, 65535);
        let mut out = format!("P2\n{} {}\n{}\n", self.width, self.height, maxval);
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|c| c.min(&maxval).to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Sorted ascending.
    pub members: Vec<Uuid>,
    pub centroid: Position,
    pub size: usize,
}

/// Single-linkage clustering: persons within `eps_m` of each other are
/// linked and clusters are the connected components of at least
/// `min_size` persons. Largest first, ties by smallest member.
pub fn detect_clusters(positions: &[(Uuid, Position)], eps_m: f64, min_size: usize) -> Vec<Cluster> {
    let mut sorted: Vec<(Uuid, Position)> = positions.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.x.total_cmp(&b.1.x)).then(a.1.y.total_cmp(&b.1.y)));

    let n = sorted.len();
    let mut uf = UnionFind::<usize>::new(n);
    let eps2 = eps_m * eps_m;
    for i in 0..n {
        for j in i + 1..n {
            let dx = sorted[i].1.x - sorted[j].1.x;
            let dy = sorted[i].1.y - sorted[j].1.y;
            if dx * dx + dy * dy <= eps2 {
                uf.union(i, j);
            }
        }
    }

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .filter(|g| g.len() >= min_size.max(1))
        .map(|g| {
            let size = g.len();
            let (sx, sy) = g.iter().fold((0.0, 0.0), |(sx, sy), &i| (sx + sorted[i].1.x, sy + sorted[i].1.y));
            Cluster {
                members: g.iter().map(|&i| sorted[i].0).collect(),
                centroid: Position::new(sx / size as f64, sy / size as f64),
                size,
            }
        })
        .collect();
    clusters.sort_by(|a, b| b.size.cmp(&a.size).then(a.members[0].cmp(&b.members[0])));
    clusters
}

/// Clusters seen at one sampling instant, as written to `clusters.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub at_s: f64,
    pub clusters: Vec<Cluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ZoneShape {
    Circle { center: Position, radius_m: f64 },
    Polygon { vertices: Vec<Position> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub poi_id: PoiId,
    pub shape: ZoneShape,
    /// Maximum persons allowed inside.
    pub capacity: u32,
}

const BOUNDARY_EPS: f64 = 1e-9;

fn project_onto_segment(p: Position, a: Position, b: Position) -> Position {
    let (abx, aby) = (b.x - a.x, b.y - a.y);
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0) };
    Position::new(a.x + t * abx, a.y + t * aby)
}

fn on_segment(p: Position, a: Position, b: Position) -> bool {
    p.distance(&project_onto_segment(p, a, b)) <= BOUNDARY_EPS
}

impl Zone {
    /// Boundary points count as inside.
    pub fn contains(&self, p: Position) -> bool {
        match &self.shape {
            ZoneShape::Circle { center, radius_m } => {
                let (dx, dy) = (p.x - center.x, p.y - center.y);
                dx * dx + dy * dy <= radius_m * radius_m * (1.0 + 1e-12)
            }
            ZoneShape::Polygon { vertices } => polygon_contains(vertices, p),
        }
    }
}

/// Even-odd test with an inclusive boundary.
pub fn polygon_contains(vertices: &[Position], p: Position) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
    }
    inside
}

/// Closest point on the polygon outline.
pub fn nearest_on_boundary(vertices: &[Position], p: Position) -> Position {
    let n = vertices.len();
    let mut best = vertices.first().copied().unwrap_or(p);
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let q = project_onto_segment(p, vertices[i], vertices[(i + 1) % n]);
        let d = p.distance(&q);
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

pub fn occupancy(zone: &Zone, positions: &[Position]) -> usize {
    positions.iter().filter(|p| zone.contains(**p)).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "advice", rename_all = "snake_case")]
pub enum Advice {
    Admit,
    /// Go to a less busy alternative, or join the virtual queue here.
    Redirect { to: PoiId, queue_offer: bool },
    QueueOnly,
}

/// `alternatives` pairs each candidate zone with its current occupancy.
/// Only alternatives with room left are suggested.
pub fn advise(zone: &Zone, occupancy: usize, alternatives: &[(Zone, usize)]) -> Advice {
    if occupancy < zone.capacity as usize {
        return Advice::Admit;
    }
    let ratio = |z: &Zone, occ: usize| occ as f64 / f64::from(z.capacity);
    alternatives
        .iter()
        .filter(|(z, occ)| z.poi_id != zone.poi_id && *occ < z.capacity as usize)
        .min_by(|(za, oa), (zb, ob)| ratio(za, *oa).total_cmp(&ratio(zb, *ob)).then(za.poi_id.cmp(&zb.poi_id)))
        .map_or(Advice::QueueOnly, |(z, _)| Advice::Redirect { to: z.poi_id, queue_offer: true })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualQueue {
    pub poi_id: PoiId,
    waiting: VecDeque<Uuid>,
}

impl VirtualQueue {
    pub fn new(poi_id: PoiId) -> Self {
        VirtualQueue { poi_id, waiting: VecDeque::new() }
    }

    /// False when the user is already waiting.
    pub fn join(&mut self, user: Uuid) -> bool {
        if self.waiting.contains(&user) {
            return false;
        }
        self.waiting.push_back(user);
        true
    }

    pub fn leave(&mut self, user: Uuid) -> bool {
        let before = self.waiting.len();
        self.waiting.retain(|u| *u != user);
        before != self.waiting.len()
    }

    pub fn len(&self) -> usize {
        self.waiting.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waiting.is_empty()
    }

    pub fn waiting(&self) -> impl Iterator<Item = &Uuid> {
        self.waiting.iter()
    }

    /// Head of the queue, removed, when the zone has room.
    pub fn pop_on_space(&mut self, zone: &Zone, occupancy: usize) -> Option<Uuid> {
        if occupancy < zone.capacity as usize {
            self.waiting.pop_front()
        } else {
            None
        }
    }
}

pub fn render_cluster_report(snapshots: &[ClusterSnapshot]) -> String {
    let mut out = String::new();
    for s in snapshots {
        let _ = writeln!(out, "{}", serde_json::to_string(s).expect("snapshot serializes"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(n: u128) -> Uuid {
        Uuid::from_u128(n)
    }

    fn circle(id: u32, capacity: u32) -> Zone {
        Zone { poi_id: PoiId(id), shape: ZoneShape::Circle { center: Position::new(0.0, 0.0), radius_m: 5.0 }, capacity }
    }

    #[test]
    fn heatmap_cells() {
        let mut h = HeatMap::new(Position::new(0.0, 0.0), 1.0, 4, 4).unwrap();
        assert_eq!(h.ingest(Position::new(1.2, 1.7)).unwrap(), (1, 1));
        assert_eq!(h.count(1, 1), 1);
        assert_eq!(h.total(), 1);
        assert_eq!(h.ingest(Position::new(2.0, 3.0)).unwrap(), (2, 3));
        assert!(matches!(h.ingest(Position::new(4.0, 0.0)), Err(AnalyticsError::OutOfBounds { .. })));
        assert!(h.ingest(Position::new(-0.1, 0.0)).is_err());
        assert_eq!(h.total(), 2);
        assert!(h.ingest(h.clamp(Position::new(9.0, -3.0))).is_ok());
        assert!(HeatMap::new(Position::default(), 0.0, 1, 1).is_err());
    }

    #[test]
    fn heatmap_exports() {
        let mut h = HeatMap::new(Position::new(0.0, 0.0), 1.0, 3, 2).unwrap();
        h.ingest(Position::new(0.5, 0.5)).unwrap();
        h.ingest(Position::new(0.5, 0.5)).unwrap();
        h.ingest(Position::new(2.5, 1.5)).unwrap();
        assert_eq!(h.to_csv(), "2,0,0\n0,0,1\n");
        assert_eq!(h.to_pgm(), "P2\n3 2\n2\n2 0 0\n0 0 1\n");
        let empty = HeatMap::new(Position::new(0.0, 0.0), 1.0, 2, 1).unwrap();
        assert_eq!(empty.to_pgm(), "P2\n2 1\n1\n0 0\n");
    }

    #[test]
    fn clusters_link_transitively() {
        let pts = |xs: &[f64]| -> Vec<(Uuid, Position)> {
            xs.iter().enumerate().map(|(i, x)| (u(i as u128 + 1), Position::new(*x, 0.0))).collect()
        };
        let c = detect_clusters(&pts(&[0.0, 1.0]), 2.0, 2);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].size, 2);
        assert_eq!(c[0].centroid, Position::new(0.5, 0.0));
        assert!(detect_clusters(&pts(&[0.0, 5.0]), 2.0, 2).is_empty());
        let chain = detect_clusters(&pts(&[0.0, 1.5, 3.0]), 2.0, 2);
        assert_eq!(chain.len(), 1);
        assert_eq!(chain[0].size, 3);
    }

    #[test]
    fn clusters_sorted_by_size_then_member() {
        let mut pts = vec![
            (u(9), Position::new(0.0, 0.0)),
            (u(8), Position::new(0.5, 0.0)),
            (u(3), Position::new(50.0, 0.0)),
            (u(4), Position::new(50.5, 0.0)),
            (u(5), Position::new(51.0, 0.0)),
            (u(1), Position::new(100.0, 0.0)),
            (u(2), Position::new(100.5, 0.0)),
        ];
        let c = detect_clusters(&pts, 1.0, 2);
        assert_eq!(c.iter().map(|c| c.size).collect::<Vec<_>>(), vec![3, 2, 2]);
        assert_eq!(c[1].members, vec![u(1), u(2)]);
        assert_eq!(c[2].members, vec![u(8), u(9)]);
        pts.reverse();
        assert_eq!(detect_clusters(&pts, 1.0, 2), c);
    }

    #[test]
    fn occupancy_boundaries() {
        let z = circle(1, 10);
        assert_eq!(occupancy(&z, &[]), 0);
        assert_eq!(occupancy(&z, &[Position::new(3.0, 4.0)]), 1);
        let pts = [
            Position::new(0.0, 0.0),
            Position::new(1.0, 1.0),
            Position::new(-2.0, 0.0),
            Position::new(6.0, 0.0),
            Position::new(0.0, -9.0),
        ];
        assert_eq!(occupancy(&z, &pts), 3);

        let square = Zone {
            poi_id: PoiId(2),
            shape: ZoneShape::Polygon {
                vertices: vec![
                    Position::new(0.0, 0.0),
                    Position::new(4.0, 0.0),
                    Position::new(4.0, 4.0),
                    Position::new(0.0, 4.0),
                ],
            },
            capacity: 3,
        };
        assert!(square.contains(Position::new(4.0, 2.0)));
        assert!(square.contains(Position::new(0.0, 0.0)));
        assert!(square.contains(Position::new(2.0, 2.0)));
        assert!(!square.contains(Position::new(4.1, 2.0)));
    }

    #[test]
    fn advice_rules() {
        let z = circle(1, 10);
        assert_eq!(advise(&z, 7, &[]), Advice::Admit);
        let alt = vec![(circle(3, 10), 3), (circle(2, 10), 8)];
        assert_eq!(advise(&z, 10, &alt), Advice::Redirect { to: PoiId(3), queue_offer: true });
        assert_eq!(advise(&z, 10, &[]), Advice::QueueOnly);
        assert_eq!(advise(&z, 12, &[(circle(4, 5), 5)]), Advice::QueueOnly);
        let tie = vec![(circle(6, 10), 5), (circle(5, 20), 10)];
        assert_eq!(advise(&z, 10, &tie), Advice::Redirect { to: PoiId(5), queue_offer: true });
    }

    #[test]
    fn queue_fifo() {
        let z = circle(1, 2);
        let mut q = VirtualQueue::new(PoiId(1));
        assert_eq!(q.pop_on_space(&z, 0), None);
        assert!(q.join(u(1)));
        assert!(q.join(u(2)));
        assert!(!q.join(u(1)));
        assert_eq!(q.pop_on_space(&z, 2), None);
        assert_eq!(q.len(), 2);
        assert_eq!(q.pop_on_space(&z, 1), Some(u(1)));
        assert_eq!(q.waiting().copied().collect::<Vec<_>>(), vec![u(2)]);
    }
}
