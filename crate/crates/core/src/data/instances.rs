use super::{build_neighborhood, NeighborhoodTensor, Point, Scene};
use crate::error::{Error, Result};

/// One sliding window: `t_obs` observed points, the ground-truth continuation and
/// the neighbourhood seen during observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub pedestrian_id: i64,
    pub start_frame: i64,
    pub observed: Vec<Point>,
    pub future: Vec<Point>,
    pub neighborhood: NeighborhoodTensor,
    pub cluster_id: Option<i64>,
}

impl TrainingInstance {
    pub fn t_obs(&self) -> usize {
        self.observed.len()
    }

    pub fn t_pred(&self) -> usize {
        self.observed.len() + self.future.len()
    }

    pub fn full_path(&self) -> Vec<Point> {
        self.observed.iter().chain(&self.future).copied().collect()
    }
}

/// Number of windows of length `t_pred` at `stride` in a trajectory of `len` frames.
pub fn window_count(len: usize, t_pred: usize, stride: usize) -> usize {
    if len < t_pred {
        0
    } else {
        (len - t_pred) / stride + 1
    }
}

/// Cuts every trajectory into windows of `t_pred` frames taken every `stride` frames.
/// Windows spanning a frame gap are skipped.
pub fn make_instances(scene: &Scene, t_obs: usize, t_pred: usize, stride: usize) -> Result<Vec<TrainingInstance>> {
    if t_obs < 2 || t_pred <= t_obs {
        return Err(Error::arg(format!(
            "need t_pred > t_obs >= 2, got t_obs={t_obs}, t_pred={t_pred}"
        )));
    }
    if stride == 0 {
        return Err(Error::arg("stride must be at least 1"));
    }
    let mut out = Vec::new();
    for traj in &scene.trajectories {
        let mut offset = 0;
        while offset + t_pred <= traj.len() {
            let start = traj.frames[offset].frame_index;
            if let Some(path) = traj.window(start, t_pred) {
                let neighborhood = build_neighborhood(scene, traj, start, t_obs)?;
                out.push(TrainingInstance {
                    pedestrian_id: traj.pedestrian_id,
                    start_frame: start,
                    observed: path[..t_obs].to_vec(),
                    future: path[t_obs..].to_vec(),
                    neighborhood,
                    cluster_id: None,
                });
            }
            offset += stride;
        }
    }
    Ok(out)
}
