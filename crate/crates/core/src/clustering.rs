//! DBSCAN, entry/exit trajectory clustering and nearest-centroid assignment.

use std::collections::VecDeque;

use crate::data::{Point, Scene, Trajectory};
use crate::error::{Error, Result};

pub const NOISE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanConfig {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanConfig {
    fn default() -> Self {
        Self { eps: 0.08, min_pts: 5 }
    }
}

impl DbscanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("dbscan eps must be positive, got {}", self.eps)));
        }
        if self.min_pts == 0 {
            return Err(Error::Config("dbscan min_pts must be positive".into()));
        }
        Ok(())
    }
}

/// Per-point labels: [`NOISE`] or a cluster index `0..K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<i64>,
}

impl ClusterAssignment {
    pub fn cluster_count(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn members(&self, cluster: i64) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == cluster)
            .map(|(i, _)| i)
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Classic DBSCAN with Euclidean distance.
///
/// Points are scanned in input order; a core point has at least `min_pts` points
/// (itself included) within `eps`. Each new cluster is expanded breadth-first before
/// the scan continues, so a border point reachable from several clusters belongs to
/// the one discovered first.
pub fn dbscan(points: &[Vec<f64>], config: &DbscanConfig) -> Result<ClusterAssignment> {
    config.validate()?;
    if let Some(first) = points.first() {
        if points.iter().any(|p| p.len() != first.len()) {
            return Err(Error::arg("dbscan points differ in dimension"));
        }
    }
    let n = points.len();
    let eps2 = config.eps * config.eps;
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| sq_dist(&points[i], &points[j]) <= eps2)
                .collect()
        })
        .collect();
    const UNVISITED: i64 = -2;
    let mut labels = vec![UNVISITED; n];
    let mut next_cluster = 0;
    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        if neighbours[i].len() < config.min_pts {
            labels[i] = NOISE;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = neighbours[i].iter().copied().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = cluster;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = cluster;
            if neighbours[j].len() >= config.min_pts {
                queue.extend(neighbours[j].iter().copied());
            }
        }
    }
    Ok(ClusterAssignment { labels })
}

/// `(x_first, y_first, x_last, y_last)`.
pub fn entry_exit_features(traj: &Trajectory) -> Result<[f64; 4]> {
    if traj.len() < 2 {
        return Err(Error::arg(format!(
            "pedestrian {} needs at least two frames for entry/exit features",
            traj.pedestrian_id
        )));
    }
    let (a, b) = (traj.frames[0].pos, traj.frames[traj.len() - 1].pos);
    Ok([a.x, a.y, b.x, b.y])
}

/// Positions sampled at `samples` evenly spaced frame offsets, flattened.
pub fn resampled_features(traj: &Trajectory, samples: usize) -> Result<Vec<f64>> {
    if traj.len() < 2 || samples < 2 {
        return Err(Error::arg("resampling needs at least two frames and two samples"));
    }
    let last = (traj.len() - 1) as f64;
    let mut out = Vec::with_capacity(2 * samples);
    for k in 0..samples {
        let s = last * k as f64 / (samples - 1) as f64;
        let i = s.floor() as usize;
        let frac = s - i as f64;
        let a = traj.frames[i].pos;
        let b = traj.frames[(i + 1).min(traj.len() - 1)].pos;
        out.push(a.x + frac * (b.x - a.x));
        out.push(a.y + frac * (b.y - a.y));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterFeatures {
    #[default]
    EntryExit,
    /// Whole trajectory resampled to a fixed number of points.
    Full,
}

pub const FULL_FEATURE_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDescriptor {
    pub cluster_id: i64,
    /// Pointwise mean of the members' first `t_obs` positions.
    pub centroid_observed: Vec<Point>,
    pub member_count: usize,
}

/// Clusters a filtered, normalized scene and computes one centroid per cluster.
/// Noise trajectories are left out of every descriptor.
pub fn cluster_training_set(
    scene: &Scene,
    config: &DbscanConfig,
    t_obs: usize,
    features: ClusterFeatures,
) -> Result<(ClusterAssignment, Vec<ClusterDescriptor>)> {
    if let Some(t) = scene.trajectories.iter().find(|t| t.len() < t_obs) {
        return Err(Error::arg(format!(
            "pedestrian {} has {} frames, fewer than t_obs = {t_obs}",
            t.pedestrian_id,
            t.len()
        )));
    }
    let points = scene
        .trajectories
        .iter()
        .map(|t| match features {
            ClusterFeatures::EntryExit => entry_exit_features(t).map(|f| f.to_vec()),
            ClusterFeatures::Full => resampled_features(t, FULL_FEATURE_SAMPLES),
        })
        .collect::<Result<Vec<_>>>()?;
    let assignment = dbscan(&points, config)?;
    let k = assignment.cluster_count();
    if k == 0 {
        return Err(Error::Config(format!(
            "dbscan found no clusters among {} trajectories (eps = {}, min_pts = {}); try a larger eps",
            points.len(),
            config.eps,
            config.min_pts
        )));
    }
    let descriptors = (0..k as i64)
        .map(|c| {
            let members: Vec<&Trajectory> = assignment.members(c).map(|i| &scene.trajectories[i]).collect();
            let n = members.len() as f64;
            let centroid_observed = (0..t_obs)
                .map(|j| {
                    let (sx, sy) = members
                        .iter()
                        .fold((0.0, 0.0), |(sx, sy), t| (sx + t.frames[j].pos.x, sy + t.frames[j].pos.y));
                    Point::new(sx / n, sy / n)
                })
                .collect();
            ClusterDescriptor {
                cluster_id: c,
                centroid_observed,
                member_count: members.len(),
            }
        })
        .collect();
    Ok((assignment, descriptors))
}

/// Summed pointwise Euclidean distance between two equal-length paths.
pub fn path_distance(a: &[Point], b: &[Point]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.dist(q)).sum()
}

/// Nearest centroid by summed pointwise distance; ties go to the lower cluster id.
pub fn assign_cluster(observed: &[Point], descriptors: &[ClusterDescriptor]) -> Result<i64> {
    let mut best: Option<(f64, i64)> = None;
    for d in descriptors {
        if d.centroid_observed.len() != observed.len() {
            return Err(Error::arg(format!(
                "observed length {} differs from centroid length {}",
                observed.len(),
                d.centroid_observed.len()
            )));
        }
        let dist = path_distance(observed, &d.centroid_observed);
        let better = match best {
            None => true,
            Some((bd, bid)) => dist < bd || (dist == bd && d.cluster_id < bid),
        };
        if better {
            best = Some((dist, d.cluster_id));
        }
    }
    best.map(|(_, id)| id)
        .ok_or_else(|| Error::arg("no cluster descriptors to assign against"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_far_groups() {
        let mut pts = Vec::new();
        for base in [0.0, 100.0] {
            for k in 0..5 {
                pts.push(vec![base + 0.1 * k as f64, 0.0]);
            }
        }
        let a = dbscan(&pts, &DbscanConfig { eps: 1.0, min_pts: 3 }).unwrap();
        assert_eq!(a.labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert_eq!(a.noise_count(), 0);
    }

    #[test]
    fn isolated_and_identical_points() {
        let a = dbscan(&[vec![1.0, 2.0]], &DbscanConfig { eps: 1.0, min_pts: 2 }).unwrap();
        assert_eq!(a.labels, vec![NOISE]);
        let pts = vec![vec![0.5, 0.5]; 7];
        let a = dbscan(&pts, &DbscanConfig { eps: 1e-6, min_pts: 7 }).unwrap();
        assert_eq!(a.labels, vec![0; 7]);
    }

    #[test]
    fn dimension_mismatch_and_bad_config() {
        let pts = vec![vec![0.0, 0.0], vec![1.0]];
        assert!(matches!(dbscan(&pts, &DbscanConfig::default()), Err(Error::InvalidArgument(_))));
        assert!(dbscan(&[], &DbscanConfig { eps: 0.0, min_pts: 2 }).is_err());
    }

    #[test]
    fn border_point_goes_to_first_cluster() {
        // Two dense groups sharing one border point at x = 2.0.
        let pts: Vec<Vec<f64>> = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
            .iter()
            .map(|&x| vec![x])
            .collect();
        let a = dbscan(&pts, &DbscanConfig { eps: 0.5, min_pts: 3 }).unwrap();
        assert!(a.labels.iter().all(|&l| l == 0));
        let split: Vec<Vec<f64>> = [0.0, 0.05, 0.1, 0.2, 0.5, 0.8, 0.9, 0.95, 1.0]
            .iter()
            .map(|&x| vec![x])
            .collect();
        let a = dbscan(&split, &DbscanConfig { eps: 0.35, min_pts: 4 }).unwrap();
        assert_eq!(a.labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn entry_exit_features_basics() {
        let t = Trajectory::from_points(1, 0, &[Point::new(0.0, 0.0), Point::new(0.5, 0.5), Point::new(1.0, 1.0)]).unwrap();
        assert_eq!(entry_exit_features(&t).unwrap(), [0.0, 0.0, 1.0, 1.0]);
        let mut rev = t.positions();
        rev.reverse();
        let r = Trajectory::from_points(1, 0, &rev).unwrap();
        assert_eq!(entry_exit_features(&r).unwrap(), [1.0, 1.0, 0.0, 0.0]);
        let single = Trajectory::from_points(1, 0, &[Point::new(0.0, 0.0)]).unwrap();
        assert!(entry_exit_features(&single).is_err());
    }

    #[test]
    fn assignment_rules() {
        let d = |id, x: f64| ClusterDescriptor {
            cluster_id: id,
            centroid_observed: vec![Point::new(x, 0.0), Point::new(x, 1.0)],
            member_count: 5,
        };
        let ds = vec![d(0, 0.0), d(1, 2.0)];
        assert_eq!(assign_cluster(&ds[1].centroid_observed, &ds).unwrap(), 1);
        assert_eq!(assign_cluster(&[Point::new(1.0, 0.0), Point::new(1.0, 1.0)], &ds).unwrap(), 0);
        assert_eq!(assign_cluster(&[Point::new(9.0, 0.0), Point::new(9.0, 9.0)], &ds[..1]).unwrap(), 0);
        assert!(assign_cluster(&[Point::new(0.0, 0.0)], &[]).is_err());
    }
}
