use super::{Bounds, Frame, Point, Scene, Trajectory};
use crate::error::{Error, Result};

/// Aspect-preserving affine map `p ↦ (p − origin) · scale` into the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform {
    pub origin: Point,
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self {
            origin: Point::new(0.0, 0.0),
            scale: 1.0,
        }
    }

    pub fn for_bounds(bounds: &Bounds) -> Result<Self> {
        let (w, h) = (bounds.width(), bounds.height());
        if !(w > 0.0 && h > 0.0) || !w.is_finite() || !h.is_finite() {
            return Err(Error::DegenerateScene(format!(
                "bounds {w} x {h} have zero area"
            )));
        }
        Ok(Self {
            origin: Point::new(bounds.min_x, bounds.min_y),
            scale: 1.0 / w.max(h),
        })
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new((p.x - self.origin.x) * self.scale, (p.y - self.origin.y) * self.scale)
    }

    pub fn invert(&self, p: Point) -> Point {
        Point::new(p.x / self.scale + self.origin.x, p.y / self.scale + self.origin.y)
    }

    pub fn apply_all(&self, pts: &[Point]) -> Vec<Point> {
        pts.iter().map(|&p| self.apply(p)).collect()
    }

    pub fn invert_all(&self, pts: &[Point]) -> Vec<Point> {
        pts.iter().map(|&p| self.invert(p)).collect()
    }

    /// Lengths scale linearly.
    pub fn invert_length(&self, d: f64) -> f64 {
        d / self.scale
    }

    pub fn apply_scene(&self, scene: &Scene) -> Scene {
        let trajectories = scene
            .trajectories
            .iter()
            .map(|t| Trajectory {
                pedestrian_id: t.pedestrian_id,
                frames: t
                    .frames
                    .iter()
                    .map(|f| Frame {
                        frame_index: f.frame_index,
                        pos: self.apply(f.pos),
                    })
                    .collect(),
            })
            .collect();
        let lo = self.apply(Point::new(scene.bounds.min_x, scene.bounds.min_y));
        let hi = self.apply(Point::new(scene.bounds.max_x, scene.bounds.max_y));
        Scene {
            trajectories,
            frame_rate: scene.frame_rate,
            bounds: Bounds {
                min_x: lo.x,
                min_y: lo.y,
                max_x: hi.x,
                max_y: hi.y,
            },
        }
    }
}

/// Maps the scene's bounds into `[0,1]²`, keeping the aspect ratio.
pub fn normalize(scene: &Scene) -> Result<(Scene, NormalizationTransform)> {
    let t = NormalizationTransform::for_bounds(&scene.bounds)?;
    Ok((t.apply_scene(scene), t))
}
