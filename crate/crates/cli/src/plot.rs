//! Static SVG plots: observed (green), ground truth (blue), neighbours (purple),
//! prediction (red), all in scene units.

use std::fmt::Write;

use trajpred::data::{NormalizationTransform, Point, TrainingInstance};

pub const OBSERVED: &str = "green";
pub const TRUTH: &str = "blue";
pub const NEIGHBOR: &str = "purple";
pub const PREDICTION: &str = "red";

const SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;

pub struct Polylines {
    pub pedestrian_id: i64,
    pub observed: Vec<Point>,
    pub truth: Vec<Point>,
    pub prediction: Vec<Point>,
    /// `(neighbour id, path)`; merged slots carry the first source id.
    pub neighbors: Vec<(i64, Vec<Point>)>,
}

impl Polylines {
    pub fn new(window: &TrainingInstance, prediction: &[Point], tf: &NormalizationTransform) -> Self {
        let neighbors = window
            .neighborhood
            .slots
            .iter()
            .filter(|s| !s.is_dummy)
            .map(|s| (s.sources.first().copied().unwrap_or(-1), tf.invert_all(&s.trajectory)))
            .collect();
        Self {
            pedestrian_id: window.pedestrian_id,
            observed: tf.invert_all(&window.observed),
            truth: tf.invert_all(&window.future),
            prediction: tf.invert_all(prediction),
            neighbors,
        }
    }

    fn layers(&self) -> Vec<(&'static str, String, &[Point])> {
        let mut out: Vec<(&'static str, String, &[Point])> = self
            .neighbors
            .iter()
            .map(|(id, p)| (NEIGHBOR, format!("neighbor:{id}"), p.as_slice()))
            .collect();
        out.push((OBSERVED, "observed".into(), &self.observed));
        out.push((TRUTH, "truth".into(), &self.truth));
        out.push((PREDICTION, "prediction".into(), &self.prediction));
        out
    }

    /// `role,index,x,y`; the truth and prediction rows continue the observed path.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("pedestrian_id,role,index,x,y\n");
        for (_, role, pts) in self.layers() {
            for (i, p) in pts.iter().enumerate() {
                let _ = writeln!(s, "{},{role},{i},{:?},{:?}", self.pedestrian_id, p.x, p.y);
            }
        }
        s
    }

    pub fn to_svg(&self) -> String {
        let all: Vec<&Point> = self.layers().into_iter().flat_map(|(_, _, p)| p.iter()).collect();
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &all {
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
        if all.is_empty() {
            (min_x, min_y, max_x, max_y) = (0.0, 0.0, 1.0, 1.0);
        }
        let span = (max_x - min_x).max(max_y - min_y).max(1e-9);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        // Scene y points up, SVG y points down.
        let map = |p: &Point| (MARGIN + (p.x - min_x) * scale, SIZE - MARGIN - (p.y - min_y) * scale);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        );
        let _ = writeln!(s, r#"  <title>pedestrian {}</title>"#, self.pedestrian_id);
        let _ = writeln!(s, r#"  <rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
        for (color, role, pts) in self.layers() {
            if pts.is_empty() {
                continue;
            }
            let coords: Vec<String> = pts
                .iter()
                .map(|p| {
                    let (x, y) = map(p);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"  <polyline class="{role}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                coords.join(" ")
            );
        }
        for (i, (color, label)) in [
            (OBSERVED, "given"),
            (TRUTH, "ground truth"),
            (NEIGHBOR, "neighbours"),
            (PREDICTION, "prediction"),
        ]
        .iter()
        .enumerate()
        {
            let y = 14.0 + 14.0 * i as f64;
            let _ = writeln!(
                s,
                r#"  <text x="6" y="{y}" font-size="11" font-family="sans-serif" fill="{color}">{label}</text>"#
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
