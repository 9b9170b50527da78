//! Manhattan-grid road network and lane-following mobility.
//!
//! Streets form an evenly spaced grid over the simulation rectangle. Interior
//! streets carry two lanes per direction at ±(w/2, 3w/2) from the centerline
//! (right-hand traffic); boundary streets carry one lane per direction, both
//! placed inside the area, so every lane lies strictly within the rectangle
//! and every intersection offers a turn in each direction. Vehicles travel
//! along lanes, turn at intersections (straight 0.5, left 0.25, right 0.25,
//! renormalized where straight would leave the area), and therefore never
//! despawn.

use rand::Rng;
use serde::{Deserialize, Serialize};

pub const LANE_WIDTH_M: f64 = 3.5;

/// Travel direction along a lane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heading {
    /// +y
    North,
    /// −y
    South,
    /// +x
    East,
    /// −x
    West,
}

impl Heading {
    pub fn is_vertical(self) -> bool {
        matches!(self, Heading::North | Heading::South)
    }

    /// Sign of motion along the movement axis.
    fn step_sign(self) -> f64 {
        match self {
            Heading::North | Heading::East => 1.0,
            Heading::South | Heading::West => -1.0,
        }
    }

    fn left(self) -> Heading {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    fn right(self) -> Heading {
        self.left().left().left()
    }
}

/// One lane: a full-length line at a fixed cross coordinate.
#[derive(Clone, Copy, Debug)]
pub struct Lane {
    pub heading: Heading,
    /// x for vertical lanes, y for horizontal lanes.
    pub cross: f64,
}

/// Immutable road geometry.
#[derive(Clone, Debug)]
pub struct RoadGrid {
    width_m: f64,
    height_m: f64,
    /// x coordinates of vertical street centerlines.
    v_streets: Vec<f64>,
    /// y coordinates of horizontal street centerlines.
    h_streets: Vec<f64>,
    lanes: Vec<Lane>,
}

/// A vehicle's kinematic state on the grid.
#[derive(Clone, Copy, Debug)]
pub struct VehiclePose {
    pub lane: usize,
    pub x: f64,
    pub y: f64,
}

impl RoadGrid {
    /// Grid with `blocks_x` × `blocks_y` rectangular blocks filling
    /// `width_m` × `height_m`.
    pub fn new(width_m: f64, height_m: f64, blocks_x: usize, blocks_y: usize) -> Self {
        assert!(width_m > 0.0 && height_m > 0.0);
        assert!(blocks_x >= 1 && blocks_y >= 1);
        let v_streets: Vec<f64> = (0..=blocks_x)
            .map(|i| width_m * i as f64 / blocks_x as f64)
            .collect();
        let h_streets: Vec<f64> = (0..=blocks_y)
            .map(|i| height_m * i as f64 / blocks_y as f64)
            .collect();

        let near = LANE_WIDTH_M / 2.0;
        let far = 1.5 * LANE_WIDTH_M;
        let mut lanes = Vec::new();
        let n_v = v_streets.len();
        for (i, &xc) in v_streets.iter().enumerate() {
            if i == 0 {
                lanes.push(Lane { heading: Heading::North, cross: xc + near });
                lanes.push(Lane { heading: Heading::South, cross: xc + far });
            } else if i == n_v - 1 {
                lanes.push(Lane { heading: Heading::South, cross: xc - near });
                lanes.push(Lane { heading: Heading::North, cross: xc - far });
            } else {
                // right-hand traffic: northbound east of the centerline
                lanes.push(Lane { heading: Heading::North, cross: xc + near });
                lanes.push(Lane { heading: Heading::North, cross: xc + far });
                lanes.push(Lane { heading: Heading::South, cross: xc - near });
                lanes.push(Lane { heading: Heading::South, cross: xc - far });
            }
        }
        let n_h = h_streets.len();
        for (j, &yc) in h_streets.iter().enumerate() {
            if j == 0 {
                lanes.push(Lane { heading: Heading::East, cross: yc + near });
                lanes.push(Lane { heading: Heading::West, cross: yc + far });
            } else if j == n_h - 1 {
                lanes.push(Lane { heading: Heading::West, cross: yc - near });
                lanes.push(Lane { heading: Heading::East, cross: yc - far });
            } else {
                // right-hand traffic: eastbound south of the centerline
                lanes.push(Lane { heading: Heading::East, cross: yc - near });
                lanes.push(Lane { heading: Heading::East, cross: yc - far });
                lanes.push(Lane { heading: Heading::West, cross: yc + near });
                lanes.push(Lane { heading: Heading::West, cross: yc + far });
            }
        }
        Self {
            width_m,
            height_m,
            v_streets,
            h_streets,
            lanes,
        }
    }

    pub fn width_m(&self) -> f64 {
        self.width_m
    }

    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    /// Uniform position over the total lane length.
    pub fn random_pose<R: Rng>(&self, rng: &mut R) -> VehiclePose {
        let total: f64 = self.lanes.iter().map(|l| self.lane_len(l)).sum();
        let mut at = rng.random_range(0.0..total);
        let mut lane_idx = 0;
        for (i, lane) in self.lanes.iter().enumerate() {
            let len = self.lane_len(lane);
            if at < len || i == self.lanes.len() - 1 {
                lane_idx = i;
                break;
            }
            at -= len;
        }
        let lane = self.lanes[lane_idx];
        if lane.heading.is_vertical() {
            VehiclePose { lane: lane_idx, x: lane.cross, y: at.min(self.height_m) }
        } else {
            VehiclePose { lane: lane_idx, x: at.min(self.width_m), y: lane.cross }
        }
    }

    fn lane_len(&self, lane: &Lane) -> f64 {
        if lane.heading.is_vertical() {
            self.height_m
        } else {
            self.width_m
        }
    }

    /// True if `pose` lies on its lane and inside the rectangle.
    pub fn on_lane(&self, pose: &VehiclePose, tol: f64) -> bool {
        let lane = match self.lanes.get(pose.lane) {
            Some(l) => l,
            None => return false,
        };
        let (cross, along, extent) = if lane.heading.is_vertical() {
            (pose.x, pose.y, self.height_m)
        } else {
            (pose.y, pose.x, self.width_m)
        };
        (cross - lane.cross).abs() <= tol && (-tol..=extent + tol).contains(&along)
    }

    /// Crossing-street centerline coordinates for a lane with this heading.
    fn crossings(&self, heading: Heading) -> &[f64] {
        if heading.is_vertical() {
            &self.h_streets
        } else {
            &self.v_streets
        }
    }

    /// Street index whose centerline is nearest to `coord` among crossing
    /// streets of `heading`.
    fn street_at(&self, heading: Heading, coord: f64) -> usize {
        let streets = self.crossings(heading);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &c) in streets.iter().enumerate() {
            let d = (c - coord).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Lane of `target` heading nearest to the intersection at `at_cross`
    /// (the crossing street's centerline coordinate).
    fn turn_lane(&self, target: Heading, street_center: f64) -> usize {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.heading != target {
                continue;
            }
            let d = (lane.cross - street_center).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        debug_assert!(best_d <= 2.0 * LANE_WIDTH_M, "no lane near street center");
        best
    }

    /// Advance `pose` by `dist` meters, turning at intersections.
    ///
    /// Draws one uniform variate per intersection reached, whether or not the
    /// vehicle turns, so the stream of random numbers consumed depends only on
    /// the trajectory.
    pub fn advance<R: Rng>(&self, pose: &mut VehiclePose, dist: f64, rng: &mut R) {
        assert!(dist >= 0.0);
        let mut remaining = dist;
        // bounded iterations as a guard against degenerate geometry
        for _ in 0..10_000 {
            if remaining <= 0.0 {
                return;
            }
            let lane = self.lanes[pose.lane];
            let sign = lane.heading.step_sign();
            let (along, extent) = if lane.heading.is_vertical() {
                (pose.y, self.height_m)
            } else {
                (pose.x, self.width_m)
            };
            // nearest crossing strictly ahead
            let next_cross = self
                .crossings(lane.heading)
                .iter()
                .copied()
                .filter(|&c| (c - along) * sign > 1e-9)
                .min_by(|a, b| {
                    ((a - along) * sign)
                        .partial_cmp(&((b - along) * sign))
                        .unwrap()
                });
            let target_along = match next_cross {
                Some(c) if (c - along).abs() <= remaining => c,
                _ => {
                    // no intersection within reach; clamp at the area edge
                    let stepped = along + sign * remaining;
                    let stepped = stepped.clamp(0.0, extent);
                    if lane.heading.is_vertical() {
                        pose.y = stepped;
                    } else {
                        pose.x = stepped;
                    }
                    return;
                }
            };
            remaining -= (target_along - along).abs();
            if lane.heading.is_vertical() {
                pose.y = target_along;
            } else {
                pose.x = target_along;
            }

            // straight exits the area when the crossing sits on the boundary
            let straight_ok = target_along > 1e-9 && target_along < extent - 1e-9;
            let u: f64 = rng.random();
            let choice = if straight_ok {
                if u < 0.5 {
                    None
                } else if u < 0.75 {
                    Some(lane.heading.left())
                } else {
                    Some(lane.heading.right())
                }
            } else if u < 0.5 {
                Some(lane.heading.left())
            } else {
                Some(lane.heading.right())
            };
            if let Some(target) = choice {
                let street = self.street_at(lane.heading, target_along);
                let center = self.crossings(lane.heading)[street];
                let new_lane = self.turn_lane(target, center);
                pose.lane = new_lane;
                let cross = self.lanes[new_lane].cross;
                if target.is_vertical() {
                    pose.x = cross;
                } else {
                    pose.y = cross;
                }
                // the cross coordinate snaps onto the new lane; the residual
                // distance continues along the new heading
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> RoadGrid {
        RoadGrid::new(1299.0, 750.0, 3, 3)
    }

    #[test]
    fn streets_are_evenly_spaced() {
        let g = grid();
        assert_eq!(g.v_streets, vec![0.0, 433.0, 866.0, 1299.0]);
        assert_eq!(g.h_streets, vec![0.0, 250.0, 500.0, 750.0]);
    }

    #[test]
    fn all_lanes_inside_area() {
        let g = grid();
        for lane in g.lanes() {
            assert!(lane.cross > 0.0);
            let max = if lane.heading.is_vertical() {
                g.width_m()
            } else {
                g.height_m()
            };
            assert!(lane.cross < max, "lane at {} outside {}", lane.cross, max);
        }
    }

    #[test]
    fn random_poses_are_on_lanes() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = g.random_pose(&mut rng);
            assert!(g.on_lane(&p, 1e-9));
            assert!(p.x >= 0.0 && p.x <= g.width_m());
            assert!(p.y >= 0.0 && p.y <= g.height_m());
        }
    }

    #[test]
    fn zero_distance_is_identity() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = g.random_pose(&mut rng);
        let before = (p.lane, p.x, p.y);
        g.advance(&mut p, 0.0, &mut rng);
        assert_eq!(before, (p.lane, p.x, p.y));
    }

    #[test]
    fn straight_segment_displacement_matches_speed() {
        let g = grid();
        // northbound lane east of the x = 433 street, far from intersections
        let lane = g
            .lanes()
            .iter()
            .position(|l| l.heading == Heading::North && (l.cross - 434.75).abs() < 1e-9)
            .unwrap();
        let mut p = VehiclePose { lane, x: 434.75, y: 100.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dist = 10.0 / 3.6 * 0.1; // 10 km/h for 0.1 s
        g.advance(&mut p, dist, &mut rng);
        assert!((p.y - (100.0 + 0.27778)).abs() < 1e-4, "y = {}", p.y);
        assert_eq!(p.x, 434.75);
    }

    #[test]
    fn long_walk_stays_on_lanes() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut poses: Vec<VehiclePose> = (0..8).map(|_| g.random_pose(&mut rng)).collect();
        for step in 0..10_000 {
            for p in poses.iter_mut() {
                g.advance(p, 1.1, &mut rng);
                assert!(g.on_lane(p, 1e-6), "off lane at step {}: {:?}", step, p);
            }
        }
    }

    #[test]
    fn turning_happens_over_long_horizons() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p = g.random_pose(&mut rng);
        let start_lane = p.lane;
        let mut turned = false;
        for _ in 0..5000 {
            g.advance(&mut p, 2.0, &mut rng);
            if p.lane != start_lane {
                turned = true;
                break;
            }
        }
        assert!(turned, "vehicle never changed lanes over 10 km of travel");
    }
}
