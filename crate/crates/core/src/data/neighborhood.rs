use super::{Point, Scene, Trajectory};
use crate::error::{Error, Result};
use crate::model::hardwired_weights;

pub const SLOTS_PER_DIRECTION: usize = 10;
pub const DIRECTION_COUNT: usize = 3;
pub const SLOT_COUNT: usize = SLOTS_PER_DIRECTION * DIRECTION_COUNT;

/// Sector of a neighbour relative to the target's heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Front,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; DIRECTION_COUNT] = [Direction::Front, Direction::Left, Direction::Right];

    pub fn index(self) -> usize {
        match self {
            Direction::Front => 0,
            Direction::Left => 1,
            Direction::Right => 2,
        }
    }

    /// Sector for a signed bearing in degrees (positive = counter-clockwise = left).
    /// Returns `None` for the rear sector.
    pub fn from_bearing(deg: f64) -> Option<Direction> {
        if deg.abs() <= 45.0 {
            Some(Direction::Front)
        } else if deg > 45.0 && deg <= 135.0 {
            Some(Direction::Left)
        } else if (-135.0..-45.0).contains(&deg) {
            Some(Direction::Right)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSlot {
    pub trajectory: Vec<Point>,
    pub weights: Vec<f64>,
    pub is_dummy: bool,
    /// Pedestrians merged into this slot (one id, several for the mean slot, none for dummies).
    pub sources: Vec<i64>,
}

impl NeighborSlot {
    fn dummy(target: &[Point]) -> Self {
        Self {
            trajectory: target.to_vec(),
            weights: vec![0.0; target.len()],
            is_dummy: true,
            sources: Vec::new(),
        }
    }
}

/// Front slots `0..10`, left `10..20`, right `20..30`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodTensor {
    pub slots: Vec<NeighborSlot>,
}

impl NeighborhoodTensor {
    pub fn empty(target: &[Point]) -> Self {
        Self {
            slots: (0..SLOT_COUNT).map(|_| NeighborSlot::dummy(target)).collect(),
        }
    }

    pub fn direction(&self, d: Direction) -> &[NeighborSlot] {
        let start = d.index() * SLOTS_PER_DIRECTION;
        &self.slots[start..start + SLOTS_PER_DIRECTION]
    }

    pub fn real_slots(&self) -> impl Iterator<Item = &NeighborSlot> {
        self.slots.iter().filter(|s| !s.is_dummy)
    }

    pub fn dummy_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_dummy).count()
    }
}

struct Candidate {
    pedestrian_id: i64,
    path: Vec<Point>,
    mean_dist: f64,
}

/// Neighbour positions over `len` frames from `start`, holding the nearest observed
/// position across missing frames. `None` if fewer than half the frames are observed.
fn overlapping_path(traj: &Trajectory, start: i64, len: usize) -> Option<Vec<Point>> {
    let observed: Vec<Option<Point>> = (0..len).map(|k| traj.position_at(start + k as i64)).collect();
    let count = observed.iter().filter(|p| p.is_some()).count();
    if count == 0 || 2 * count < len {
        return None;
    }
    let first_seen = observed.iter().flatten().next().copied()?;
    let mut last = first_seen;
    Some(
        observed
            .into_iter()
            .map(|p| {
                if let Some(p) = p {
                    last = p;
                }
                last
            })
            .collect(),
    )
}

/// Unit heading from first to last point; `+x` when the target does not move.
pub fn mean_heading(path: &[Point]) -> Point {
    let (a, b) = (path[0], path[path.len() - 1]);
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let n = dx.hypot(dy);
    if n < 1e-12 {
        Point::new(1.0, 0.0)
    } else {
        Point::new(dx / n, dy / n)
    }
}

/// Signed angle in degrees of `rel` measured from `heading`.
fn bearing(heading: Point, rel: Point) -> f64 {
    let cross = heading.x * rel.y - heading.y * rel.x;
    let dot = heading.x * rel.x + heading.y * rel.y;
    cross.atan2(dot).to_degrees()
}

/// Front/left/right neighbourhood of `target` over `t_obs` frames from `window_start`.
pub fn build_neighborhood(
    scene: &Scene,
    target: &Trajectory,
    window_start: i64,
    t_obs: usize,
) -> Result<NeighborhoodTensor> {
    let target_path = target.window(window_start, t_obs).ok_or_else(|| {
        Error::arg(format!(
            "pedestrian {} does not cover frames {window_start}..{}",
            target.pedestrian_id,
            window_start + t_obs as i64
        ))
    })?;
    if t_obs == 0 {
        return Err(Error::arg("empty observation window"));
    }
    let heading = mean_heading(&target_path);

    let mut sectors: [Vec<Candidate>; DIRECTION_COUNT] = Default::default();
    for other in &scene.trajectories {
        if other.pedestrian_id == target.pedestrian_id
            || other.last_frame() < window_start
            || other.first_frame() >= window_start + t_obs as i64
        {
            continue;
        }
        let Some(path) = overlapping_path(other, window_start, t_obs) else {
            continue;
        };
        let n = t_obs as f64;
        let (mut rx, mut ry, mut dist) = (0.0, 0.0, 0.0);
        for (p, q) in path.iter().zip(&target_path) {
            rx += p.x - q.x;
            ry += p.y - q.y;
            dist += p.dist(q);
        }
        let rel = Point::new(rx / n, ry / n);
        let Some(dir) = Direction::from_bearing(bearing(heading, rel)) else {
            continue;
        };
        sectors[dir.index()].push(Candidate {
            pedestrian_id: other.pedestrian_id,
            path,
            mean_dist: dist / n,
        });
    }

    let mut slots = Vec::with_capacity(SLOT_COUNT);
    for mut cands in sectors {
        cands.sort_by(|a, b| {
            a.mean_dist
                .total_cmp(&b.mean_dist)
                .then(a.pedestrian_id.cmp(&b.pedestrian_id))
        });
        let mut filled: Vec<NeighborSlot> = Vec::with_capacity(SLOTS_PER_DIRECTION);
        if cands.len() <= SLOTS_PER_DIRECTION {
            for c in cands {
                filled.push(real_slot(&target_path, c.path, vec![c.pedestrian_id]));
            }
        } else {
            let rest = cands.split_off(SLOTS_PER_DIRECTION - 1);
            for c in cands {
                filled.push(real_slot(&target_path, c.path, vec![c.pedestrian_id]));
            }
            let mean: Vec<Point> = (0..t_obs)
                .map(|k| {
                    let (sx, sy) = rest
                        .iter()
                        .fold((0.0, 0.0), |(sx, sy), c| (sx + c.path[k].x, sy + c.path[k].y));
                    Point::new(sx / rest.len() as f64, sy / rest.len() as f64)
                })
                .collect();
            filled.push(real_slot(
                &target_path,
                mean,
                rest.iter().map(|c| c.pedestrian_id).collect(),
            ));
        }
        while filled.len() < SLOTS_PER_DIRECTION {
            filled.push(NeighborSlot::dummy(&target_path));
        }
        slots.extend(filled);
    }
    Ok(NeighborhoodTensor { slots })
}

fn real_slot(target: &[Point], path: Vec<Point>, sources: Vec<i64>) -> NeighborSlot {
    NeighborSlot {
        weights: hardwired_weights(target, &path),
        trajectory: path,
        is_dummy: false,
        sources,
    }
}
