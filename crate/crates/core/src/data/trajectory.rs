use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub frame_index: i64,
    pub pos: Point,
}

/// One pedestrian's positions, ordered by frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub pedestrian_id: i64,
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn new(pedestrian_id: i64, frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Data(format!("pedestrian {pedestrian_id} has no frames")));
        }
        if frames.windows(2).any(|w| w[1].frame_index <= w[0].frame_index) {
            return Err(Error::Data(format!(
                "pedestrian {pedestrian_id}: frame indices must be strictly increasing"
            )));
        }
        Ok(Self { pedestrian_id, frames })
    }

    /// Builds a gap-free trajectory starting at `first_frame`.
    pub fn from_points(pedestrian_id: i64, first_frame: i64, points: &[Point]) -> Result<Self> {
        let frames = points
            .iter()
            .enumerate()
            .map(|(k, &pos)| Frame {
                frame_index: first_frame + k as i64,
                pos,
            })
            .collect();
        Self::new(pedestrian_id, frames)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first_frame(&self) -> i64 {
        self.frames[0].frame_index
    }

    pub fn last_frame(&self) -> i64 {
        self.frames[self.frames.len() - 1].frame_index
    }

    pub fn is_contiguous(&self) -> bool {
        self.frames
            .windows(2)
            .all(|w| w[1].frame_index - w[0].frame_index == 1)
    }

    pub fn positions(&self) -> Vec<Point> {
        self.frames.iter().map(|f| f.pos).collect()
    }

    pub fn position_at(&self, frame_index: i64) -> Option<Point> {
        self.frames
            .binary_search_by_key(&frame_index, |f| f.frame_index)
            .ok()
            .map(|i| self.frames[i].pos)
    }

    /// Positions for `len` consecutive frames starting at `start`, or `None` if any is missing.
    pub fn window(&self, start: i64, len: usize) -> Option<Vec<Point>> {
        let i = self
            .frames
            .binary_search_by_key(&start, |f| f.frame_index)
            .ok()?;
        let slice = self.frames.get(i..i + len)?;
        if slice
            .iter()
            .enumerate()
            .all(|(k, f)| f.frame_index == start + k as i64)
        {
            Some(slice.iter().map(|f| f.pos).collect())
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Bounds {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in it {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub trajectories: Vec<Trajectory>,
    /// Frames per second; metadata only.
    pub frame_rate: f64,
    pub bounds: Bounds,
}

pub const DEFAULT_FRAME_RATE: f64 = 1.0;

impl Scene {
    /// Builds a scene with bounds fitted to the data. Pedestrian ids must be unique.
    pub fn new(mut trajectories: Vec<Trajectory>, frame_rate: f64) -> Result<Self> {
        trajectories.sort_by_key(|t| t.pedestrian_id);
        if trajectories
            .windows(2)
            .any(|w| w[0].pedestrian_id == w[1].pedestrian_id)
        {
            return Err(Error::Data("duplicate pedestrian id in scene".into()));
        }
        let bounds = Bounds::of_points(
            trajectories
                .iter()
                .flat_map(|t| t.frames.iter().map(|f| &f.pos)),
        )
        .unwrap_or(Bounds {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 0.0,
            max_y: 0.0,
        });
        Ok(Self {
            trajectories,
            frame_rate,
            bounds,
        })
    }

    pub fn trajectory(&self, pedestrian_id: i64) -> Option<&Trajectory> {
        self.trajectories
            .binary_search_by_key(&pedestrian_id, |t| t.pedestrian_id)
            .ok()
            .map(|i| &self.trajectories[i])
    }

    pub fn point_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryFormat {
    /// Header `frame_id,pedestrian_id,x,y`.
    Csv,
}

pub const CSV_HEADER: [&str; 4] = ["frame_id", "pedestrian_id", "x", "y"];

/// Reads observations in any row order and groups them per pedestrian.
pub fn parse_trajectories<R: Read>(source: R, format: TrajectoryFormat) -> Result<Scene> {
    match format {
        TrajectoryFormat::Csv => parse_csv(source),
    }
}

fn parse_csv<R: Read>(source: R) -> Result<Scene> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, got {:?}", CSV_HEADER.join(","), header),
        });
    }
    let mut grouped: BTreeMap<i64, BTreeMap<i64, Point>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, got {}", record.len()),
            });
        }
        let int = |k: usize| -> Result<i64> {
            record[k].parse().map_err(|_| Error::Parse {
                line,
                message: format!("{} is not an integer: {:?}", CSV_HEADER[k], &record[k]),
            })
        };
        let real = |k: usize| -> Result<f64> {
            match record[k].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    line,
                    message: format!("{} is not a finite number: {:?}", CSV_HEADER[k], &record[k]),
                }),
            }
        };
        let (frame, ped, x, y) = (int(0)?, int(1)?, real(2)?, real(3)?);
        if grouped
            .entry(ped)
            .or_default()
            .insert(frame, Point::new(x, y))
            .is_some()
        {
            return Err(Error::Data(format!(
                "duplicate observation of pedestrian {ped} at frame {frame} (line {line})"
            )));
        }
    }
    let trajectories = grouped
        .into_iter()
        .map(|(ped, frames)| {
            Trajectory::new(
                ped,
                frames
                    .into_iter()
                    .map(|(frame_index, pos)| Frame { frame_index, pos })
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Scene::new(trajectories, DEFAULT_FRAME_RATE)
}

/// Writes a scene as CSV, rows ordered by frame then pedestrian.
pub fn write_trajectories<W: Write>(scene: &Scene, sink: W) -> Result<()> {
    let mut rows: Vec<(i64, i64, Point)> = scene
        .trajectories
        .iter()
        .flat_map(|t| t.frames.iter().map(move |f| (f.frame_index, t.pedestrian_id, f.pos)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut writer = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    writer.write_record(CSV_HEADER).map_err(io)?;
    for (frame, ped, p) in rows {
        writer
            .write_record([frame.to_string(), ped.to_string(), p.x.to_string(), p.y.to_string()])
            .map_err(io)?;
    }
    writer.flush()?;
    Ok(())
}

/// Drops trajectories shorter than `min_length` and any with a frame gap.
pub fn filter_trajectories(scene: &Scene, min_length: usize) -> Result<Scene> {
    if min_length < 2 {
        return Err(Error::arg(format!("min_length must be at least 2, got {min_length}")));
    }
    Ok(Scene {
        trajectories: scene
            .trajectories
            .iter()
            .filter(|t| t.len() >= min_length && t.is_contiguous())
            .cloned()
            .collect(),
        frame_rate: scene.frame_rate,
        bounds: scene.bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scene> {
        parse_trajectories(text.as_bytes(), TrajectoryFormat::Csv)
    }

    fn straight(id: i64, first: i64, len: usize) -> Trajectory {
        let pts: Vec<Point> = (0..len).map(|k| Point::new(k as f64, 0.0)).collect();
        Trajectory::from_points(id, first, &pts).unwrap()
    }

    #[test]
    fn two_rows_one_trajectory() {
        let scene = parse("frame_id,pedestrian_id,x,y\n5,1,0.0,1.0\n6,1,0.5,1.5\n").unwrap();
        assert_eq!(scene.trajectories.len(), 1);
        assert_eq!(scene.trajectories[0].len(), 2);
        assert_eq!(scene.trajectories[0].first_frame(), 5);
    }

    #[test]
    fn row_order_does_not_matter() {
        let sorted = parse("frame_id,pedestrian_id,x,y\n1,1,0,0\n1,2,5,5\n2,1,1,0\n2,2,6,5\n").unwrap();
        let shuffled = parse("frame_id,pedestrian_id,x,y\n2,2,6,5\n2,1,1,0\n1,2,5,5\n1,1,0,0\n").unwrap();
        assert_eq!(sorted, shuffled);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse("frame_id,pedestrian_id,x,y\n1,1,0,0\n2,1,abc,0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("frame_id,pedestrian_id,x,y\n1,1,0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(matches!(parse("a,b,c,d\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_observation_is_data_error() {
        let err = parse("frame_id,pedestrian_id,x,y\n1,1,0,0\n1,1,2,0\n").unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let scene = Scene::new(vec![straight(3, 10, 4), straight(1, 0, 3)], DEFAULT_FRAME_RATE).unwrap();
        let mut buf = Vec::new();
        write_trajectories(&scene, &mut buf).unwrap();
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), scene);
    }

    #[test]
    fn filter_rules() {
        let mut gappy = straight(3, 0, 51);
        gappy.frames.remove(25);
        let scene = Scene::new(
            vec![straight(1, 0, 39), straight(2, 0, 40), gappy],
            DEFAULT_FRAME_RATE,
        )
        .unwrap();
        let kept = filter_trajectories(&scene, 40).unwrap();
        let ids: Vec<_> = kept.trajectories.iter().map(|t| t.pedestrian_id).collect();
        assert_eq!(ids, [2]);
        assert!(filter_trajectories(&scene, 1).is_err());
    }

    #[test]
    fn window_requires_contiguous_frames() {
        let mut t = straight(1, 0, 10);
        assert_eq!(t.window(2, 3).unwrap().len(), 3);
        assert!(t.window(8, 3).is_none());
        t.frames.remove(4);
        assert!(t.window(2, 4).is_none());
    }
}
