//! Road-topology primitives shared by every other module: positions, lanes,
//! intersections and the conflict matrix that drives virtual-traffic-light
//! conflict detection.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("unknown lane id {0:?}")]
    UnknownLane(LaneId),
    #[error("unknown intersection id {0:?}")]
    UnknownIntersection(IntersectionId),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("non-positive dimension: {0}")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    /// meters east
    pub x: f64,
    /// meters north
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

pub fn euclidean_distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct VehicleId(pub u64);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct LaneId(pub usize);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct IntersectionId(pub usize);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ApproachId(pub usize);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusFlags {
    #[serde(default)]
    pub light_bar_in_use: bool,
    #[serde(default)]
    pub sirene_in_use: bool,
    #[serde(default)]
    pub emergency_brake: bool,
}

impl StatusFlags {
    pub fn any(&self) -> bool {
        self.light_bar_in_use || self.sirene_in_use || self.emergency_brake
    }
}

/// Kinematic and lane state of one simulated vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub pos: Position,
    /// radians in [0, 2pi), math convention (0 = east, ccw positive)
    pub heading: f64,
    /// m/s, never negative
    pub speed: f64,
    pub accel: f64,
    pub lane: LaneId,
    /// meters along the lane polyline, front-bumper position
    pub longitudinal_offset: f64,
    pub flags: StatusFlags,
}

impl VehicleState {
    /// Unit velocity vector scaled by speed.
    pub fn velocity(&self) -> (f64, f64) {
        (self.speed * self.heading.cos(), self.speed * self.heading.sin())
    }
}

/// Lane geometry as an arc-length parameterized polyline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    pub polyline: Vec<Position>,
    pub length: f64,
    /// Set when this lane feeds an intersection.
    pub approach_of: Option<(IntersectionId, ApproachId)>,
    /// Distance along the lane of the stop line, when an approach.
    pub stop_line_offset: Option<f64>,
}

impl Lane {
    fn arc_length(polyline: &[Position]) -> f64 {
        polyline
            .windows(2)
            .map(|w| euclidean_distance(w[0], w[1]))
            .sum()
    }

    /// Position at a given arc-length offset (clamped to the lane).
    pub fn position_at(&self, offset: f64) -> Position {
        let mut remaining = offset.clamp(0.0, self.length);
        for w in self.polyline.windows(2) {
            let seg = euclidean_distance(w[0], w[1]);
            if remaining <= seg {
                if seg == 0.0 {
                    return w[0];
                }
                let f = remaining / seg;
                return Position::new(
                    w[0].x + f * (w[1].x - w[0].x),
                    w[0].y + f * (w[1].y - w[0].y),
                );
            }
            remaining -= seg;
        }
        *self.polyline.last().expect("lane polyline non-empty")
    }

    /// Tangent heading at a given offset, radians in [0, 2pi).
    pub fn heading_at(&self, offset: f64) -> f64 {
        let mut remaining = offset.clamp(0.0, self.length);
        for w in self.polyline.windows(2) {
            let seg = euclidean_distance(w[0], w[1]);
            if remaining <= seg && seg > 0.0 {
                let h = (w[1].y - w[0].y).atan2(w[1].x - w[0].x);
                return h.rem_euclid(2.0 * PI);
            }
            remaining -= seg;
        }
        let n = self.polyline.len();
        let a = self.polyline[n - 2];
        let b = self.polyline[n - 1];
        (b.y - a.y).atan2(b.x - a.x).rem_euclid(2.0 * PI)
    }
}

/// Boolean entry per unordered approach pair: true iff crossing paths intersect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConflictMatrix {
    n: usize,
    entries: Vec<bool>,
}

impl ConflictMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, entries: vec![false; n * n] }
    }

    pub fn set_conflict(&mut self, a: ApproachId, b: ApproachId) {
        if a == b {
            return;
        }
        self.entries[a.0 * self.n + b.0] = true;
        self.entries[b.0 * self.n + a.0] = true;
    }

    pub fn conflicts(&self, a: ApproachId, b: ApproachId) -> bool {
        a != b && self.entries[a.0 * self.n + b.0]
    }

    pub fn approach_count(&self) -> usize {
        self.n
    }

    pub fn is_symmetric_with_false_diagonal(&self) -> bool {
        for i in 0..self.n {
            if self.entries[i * self.n + i] {
                return false;
            }
            for j in 0..self.n {
                if self.entries[i * self.n + j] != self.entries[j * self.n + i] {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntersectionSpec {
    pub id: IntersectionId,
    pub center: Position,
    /// approach id -> incoming lanes
    pub approaches: BTreeMap<ApproachId, Vec<LaneId>>,
    pub conflict_matrix: ConflictMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub lanes: Vec<Lane>,
    pub intersections: Vec<IntersectionSpec>,
    /// lane -> successor lane, when connected
    pub successors: BTreeMap<LaneId, LaneId>,
}

impl RoadNetwork {
    pub fn lane(&self, id: LaneId) -> Result<&Lane, TopologyError> {
        self.lanes.get(id.0).filter(|l| l.id == id).ok_or(TopologyError::UnknownLane(id))
    }

    pub fn intersection(&self, id: IntersectionId) -> Result<&IntersectionSpec, TopologyError> {
        self.intersections
            .get(id.0)
            .filter(|i| i.id == id)
            .ok_or(TopologyError::UnknownIntersection(id))
    }

    pub fn successor(&self, lane: LaneId) -> Option<LaneId> {
        self.successors.get(&lane).copied()
    }

    /// Structural invariant check; run by constructors' tests and on custom
    /// network load.
    pub fn validate(&self) -> Result<(), TopologyError> {
        for (idx, lane) in self.lanes.iter().enumerate() {
            if lane.id.0 != idx {
                return Err(TopologyError::Invalid(format!(
                    "lane at index {idx} has id {:?}",
                    lane.id
                )));
            }
            if lane.polyline.len() < 2 {
                return Err(TopologyError::Invalid(format!(
                    "lane {:?} polyline has fewer than 2 points",
                    lane.id
                )));
            }
            if !lane.polyline.iter().all(Position::is_finite) {
                return Err(TopologyError::Invalid(format!(
                    "lane {:?} has non-finite polyline points",
                    lane.id
                )));
            }
            let arc = Lane::arc_length(&lane.polyline);
            let rel = (arc - lane.length).abs() / lane.length.max(1e-12);
            if rel > 1e-9 {
                return Err(TopologyError::Invalid(format!(
                    "lane {:?} length {} disagrees with arc length {}",
                    lane.id, lane.length, arc
                )));
            }
            if let Some(sl) = lane.stop_line_offset {
                if sl > lane.length {
                    return Err(TopologyError::Invalid(format!(
                        "lane {:?} stop line {} beyond length {}",
                        lane.id, sl, lane.length
                    )));
                }
            }
            if lane.approach_of.is_some() != lane.stop_line_offset.is_some() {
                return Err(TopologyError::Invalid(format!(
                    "lane {:?} approach/stop-line fields inconsistent",
                    lane.id
                )));
            }
        }
        // Every approach lane referenced by exactly one intersection.
        let mut referenced: BTreeMap<LaneId, usize> = BTreeMap::new();
        for (idx, ix) in self.intersections.iter().enumerate() {
            if ix.id.0 != idx {
                return Err(TopologyError::Invalid(format!(
                    "intersection at index {idx} has id {:?}",
                    ix.id
                )));
            }
            if ix.approaches.len() < 2 {
                return Err(TopologyError::Invalid(format!(
                    "intersection {:?} has fewer than 2 approaches",
                    ix.id
                )));
            }
            if !ix.conflict_matrix.is_symmetric_with_false_diagonal() {
                return Err(TopologyError::Invalid(format!(
                    "intersection {:?} conflict matrix not symmetric/diagonal-false",
                    ix.id
                )));
            }
            for (ap, lanes) in &ix.approaches {
                for lane_id in lanes {
                    let lane = self.lane(*lane_id)?;
                    if lane.approach_of != Some((ix.id, *ap)) {
                        return Err(TopologyError::Invalid(format!(
                            "lane {:?} approach_of disagrees with intersection {:?}",
                            lane_id, ix.id
                        )));
                    }
                    *referenced.entry(*lane_id).or_insert(0) += 1;
                }
            }
        }
        for lane in &self.lanes {
            let refs = referenced.get(&lane.id).copied().unwrap_or(0);
            match (lane.approach_of, refs) {
                (Some(_), 1) | (None, 0) => {}
                _ => {
                    return Err(TopologyError::Invalid(format!(
                        "lane {:?} referenced by {refs} intersections",
                        lane.id
                    )))
                }
            }
        }
        for (from, to) in &self.successors {
            self.lane(*from)?;
            self.lane(*to)?;
        }
        Ok(())
    }
}

/// Distance from the vehicle's front bumper to the stop line of the
/// intersection its lane approaches. `None` when the vehicle is past the stop
/// line or the lane is not an approach.
pub fn distance_to_intersection(
    v: &VehicleState,
    net: &RoadNetwork,
) -> Result<Option<f64>, TopologyError> {
    let lane = net.lane(v.lane)?;
    match lane.stop_line_offset {
        Some(sl) => {
            let d = sl - v.longitudinal_offset;
            Ok(if d >= 0.0 { Some(d) } else { None })
        }
        None => Ok(None),
    }
}

/// Straight road with `lanes_per_dir` lanes in each direction, no
/// intersections. Opposing directions are offset laterally by one lane width.
pub fn build_straight_road(length: f64, lanes_per_dir: usize) -> Result<RoadNetwork, TopologyError> {
    if length <= 0.0 {
        return Err(TopologyError::NonPositive("length"));
    }
    if lanes_per_dir == 0 {
        return Err(TopologyError::NonPositive("lanes_per_dir"));
    }
    const LANE_WIDTH: f64 = 3.5;
    let mut lanes = Vec::new();
    // Eastbound lanes at y < 0, westbound at y > 0 (right-hand traffic).
    for k in 0..lanes_per_dir {
        let y = -(LANE_WIDTH / 2.0 + k as f64 * LANE_WIDTH);
        lanes.push(Lane {
            id: LaneId(lanes.len()),
            polyline: vec![Position::new(0.0, y), Position::new(length, y)],
            length,
            approach_of: None,
            stop_line_offset: None,
        });
    }
    for k in 0..lanes_per_dir {
        let y = LANE_WIDTH / 2.0 + k as f64 * LANE_WIDTH;
        lanes.push(Lane {
            id: LaneId(lanes.len()),
            polyline: vec![Position::new(length, y), Position::new(0.0, y)],
            length,
            approach_of: None,
            stop_line_offset: None,
        });
    }
    let net = RoadNetwork { lanes, intersections: Vec::new(), successors: BTreeMap::new() };
    net.validate()?;
    Ok(net)
}

/// Number of polyline segments per loop of the eight circuit. 128 keeps the
/// arc-length error well under 0.1% at radius 100 m.
pub const EIGHT_SEGMENTS: usize = 128;

/// Default stop-line setback from the lane end (the crossing point), meters.
pub const EIGHT_STOP_LINE_SETBACK: f64 = 5.0;

fn circle_loop(center: Position, radius: f64, start_angle: f64, ccw: bool) -> Vec<Position> {
    let n = EIGHT_SEGMENTS;
    let mut pts = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let sweep = 2.0 * PI * i as f64 / n as f64;
        let ang = if ccw { start_angle + sweep } else { start_angle - sweep };
        pts.push(Position::new(
            center.x + radius * ang.cos(),
            center.y + radius * ang.sin(),
        ));
    }
    // close exactly on the start point so cyclic lanes line up
    pts[n] = pts[0];
    pts
}

/// Figure-"eight" circuit: two tangent circular loops meeting at the origin,
/// traversable in both orientations. Each of the four lanes is a full loop
/// ending at the shared crossing point, so the single intersection has four
/// approaches; every pair of distinct approaches passes through the crossing
/// point and is marked conflicting.
///
/// Lane layout (ids): 0 = left loop forward, 1 = right loop forward (successor
/// chain 0 -> 1 -> 0), 2 = left loop reverse, 3 = right loop reverse
/// (2 -> 3 -> 2).
pub fn build_eight_circuit(loop_radius: f64) -> Result<RoadNetwork, TopologyError> {
    build_eight_circuit_with_setback(loop_radius, EIGHT_STOP_LINE_SETBACK)
}

pub fn build_eight_circuit_with_setback(
    loop_radius: f64,
    stop_line_setback: f64,
) -> Result<RoadNetwork, TopologyError> {
    if loop_radius <= 0.0 {
        return Err(TopologyError::NonPositive("loop_radius"));
    }
    let left = Position::new(-loop_radius, 0.0);
    let right = Position::new(loop_radius, 0.0);
    let ix_id = IntersectionId(0);

    // All four loops start and end at the origin (the tangent point).
    let polylines = [
        circle_loop(left, loop_radius, 0.0, true),   // left forward (ccw)
        circle_loop(right, loop_radius, PI, false),  // right forward (cw)
        circle_loop(left, loop_radius, 0.0, false),  // left reverse (cw)
        circle_loop(right, loop_radius, PI, true),   // right reverse (ccw)
    ];
    let mut lanes = Vec::new();
    let mut approaches = BTreeMap::new();
    for (i, polyline) in polylines.into_iter().enumerate() {
        let length = Lane::arc_length(&polyline);
        let setback = stop_line_setback.min(length / 2.0);
        let id = LaneId(i);
        lanes.push(Lane {
            id,
            polyline,
            length,
            approach_of: Some((ix_id, ApproachId(i))),
            stop_line_offset: Some(length - setback),
        });
        approaches.insert(ApproachId(i), vec![id]);
    }
    let mut cm = ConflictMatrix::new(4);
    for a in 0..4 {
        for b in (a + 1)..4 {
            cm.set_conflict(ApproachId(a), ApproachId(b));
        }
    }
    let intersections = vec![IntersectionSpec {
        id: ix_id,
        center: Position::new(0.0, 0.0),
        approaches,
        conflict_matrix: cm,
    }];
    let mut successors = BTreeMap::new();
    successors.insert(LaneId(0), LaneId(1));
    successors.insert(LaneId(1), LaneId(0));
    successors.insert(LaneId(2), LaneId(3));
    successors.insert(LaneId(3), LaneId(2));

    let net = RoadNetwork { lanes, intersections, successors };
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vehicle_on(lane: LaneId, offset: f64) -> VehicleState {
        VehicleState {
            id: VehicleId(0),
            pos: Position::new(0.0, 0.0),
            heading: 0.0,
            speed: 0.0,
            accel: 0.0,
            lane,
            longitudinal_offset: offset,
            flags: StatusFlags::default(),
        }
    }

    fn approach_lane_net() -> RoadNetwork {
        // single 250 m approach lane with stop line at 250 m feeding a minimal
        // 2-approach intersection (second approach reuses a stub lane)
        let mk = |id: usize, y: f64| Lane {
            id: LaneId(id),
            polyline: vec![Position::new(0.0, y), Position::new(250.0, y)],
            length: 250.0,
            approach_of: Some((IntersectionId(0), ApproachId(id))),
            stop_line_offset: Some(250.0),
        };
        let mut cm = ConflictMatrix::new(2);
        cm.set_conflict(ApproachId(0), ApproachId(1));
        let mut approaches = BTreeMap::new();
        approaches.insert(ApproachId(0), vec![LaneId(0)]);
        approaches.insert(ApproachId(1), vec![LaneId(1)]);
        let net = RoadNetwork {
            lanes: vec![mk(0, 0.0), mk(1, 10.0)],
            intersections: vec![IntersectionSpec {
                id: IntersectionId(0),
                center: Position::new(250.0, 5.0),
                approaches,
                conflict_matrix: cm,
            }],
            successors: BTreeMap::new(),
        };
        net.validate().unwrap();
        net
    }

    #[test]
    fn distance_to_intersection_basic() {
        let net = approach_lane_net();
        let d = distance_to_intersection(&vehicle_on(LaneId(0), 50.0), &net).unwrap();
        assert_eq!(d, Some(200.0));
    }

    #[test]
    fn distance_past_stop_line_is_none() {
        let net = approach_lane_net();
        let d = distance_to_intersection(&vehicle_on(LaneId(0), 251.0), &net).unwrap();
        assert_eq!(d, None);
    }

    #[test]
    fn distance_on_non_approach_lane_is_none() {
        let net = build_straight_road(2000.0, 1).unwrap();
        let d = distance_to_intersection(&vehicle_on(LaneId(0), 50.0), &net).unwrap();
        assert_eq!(d, None);
    }

    #[test]
    fn distance_unknown_lane_errors() {
        let net = approach_lane_net();
        assert!(distance_to_intersection(&vehicle_on(LaneId(9), 0.0), &net).is_err());
    }

    #[test]
    fn straight_road_shape() {
        let net = build_straight_road(2000.0, 1).unwrap();
        assert_eq!(net.lanes.len(), 2);
        assert!(net.intersections.is_empty());
        net.validate().unwrap();
    }

    #[test]
    fn straight_road_degenerate_and_invalid() {
        assert!(build_straight_road(1.0, 1).is_ok());
        assert!(build_straight_road(0.0, 1).is_err());
        assert!(build_straight_road(-3.0, 1).is_err());
    }

    #[test]
    fn eight_circuit_shape() {
        let net = build_eight_circuit(100.0).unwrap();
        assert_eq!(net.intersections.len(), 1);
        let ix = &net.intersections[0];
        assert_eq!(ix.approaches.len(), 4);
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(
                    ix.conflict_matrix.conflicts(ApproachId(a), ApproachId(b)),
                    a != b
                );
            }
        }
        // every lane has a successor (cyclic)
        for lane in &net.lanes {
            assert!(net.successor(lane.id).is_some());
        }
        net.validate().unwrap();
    }

    #[test]
    fn eight_circuit_arc_length_closure() {
        // Arc-length of each discretized loop within 0.1% of 2*pi*r.
        let r = 100.0;
        let net = build_eight_circuit(r).unwrap();
        let exact = 2.0 * PI * r;
        for lane in &net.lanes {
            let rel = (lane.length - exact).abs() / exact;
            assert!(rel < 1e-3, "lane {:?} rel error {rel}", lane.id);
            // polyline closes exactly on the crossing point
            let first = lane.polyline[0];
            let last = *lane.polyline.last().unwrap();
            assert_eq!(first, last);
        }
    }

    #[test]
    fn eight_circuit_rejects_bad_radius() {
        assert!(build_eight_circuit(-5.0).is_err());
        assert!(build_eight_circuit(0.0).is_err());
    }

    #[test]
    fn euclidean_pythagorean() {
        assert_eq!(
            euclidean_distance(Position::new(0.0, 0.0), Position::new(3.0, 4.0)),
            5.0
        );
        let p = Position::new(1.5, -2.0);
        assert_eq!(euclidean_distance(p, p), 0.0);
    }

    proptest! {
        #[test]
        fn euclidean_symmetric(ax in -1e4f64..1e4, ay in -1e4f64..1e4,
                               bx in -1e4f64..1e4, by in -1e4f64..1e4) {
            let a = Position::new(ax, ay);
            let b = Position::new(bx, by);
            prop_assert_eq!(euclidean_distance(a, b), euclidean_distance(b, a));
            prop_assert!(euclidean_distance(a, b) >= 0.0);
        }

        #[test]
        fn eight_conflict_matrix_symmetric(r in 1.0f64..500.0) {
            let net = build_eight_circuit(r).unwrap();
            prop_assert!(net.intersections[0]
                .conflict_matrix
                .is_symmetric_with_false_diagonal());
        }
    }

    #[test]
    fn lane_position_and_heading_lookup() {
        let net = build_straight_road(100.0, 1).unwrap();
        let lane = net.lane(LaneId(0)).unwrap();
        let p = lane.position_at(40.0);
        assert!((p.x - 40.0).abs() < 1e-12);
        assert_eq!(lane.heading_at(40.0), 0.0);
        let west = net.lane(LaneId(1)).unwrap();
        assert!((west.heading_at(40.0) - PI).abs() < 1e-12);
    }
}
