//! Seeded crowd generator: goal-seeking walkers with pairwise exponential repulsion.
//!
//! Each pedestrian spawns inside an entry zone, relaxes toward its desired velocity
//! along its route (optional via points, then an exit zone) and is pushed away from
//! nearby walkers in proportion to `interaction_strength`. Anomalies are injected
//! per pedestrian with a fixed probability and reported as labels.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Point, Scene, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zone {
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub entry: usize,
    pub exit: usize,
    pub via: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneLayout {
    pub zones: Vec<Zone>,
    pub routes: Vec<Route>,
}

impl ZoneLayout {
    /// Named layouts for a `width x height` scene:
    /// `corridor` (west/east, both ways), `crossing` (four doors, straight through),
    /// `junction` (three doors, routes bending through the centre) and
    /// `plaza` (four doors, every ordered pair).
    pub fn preset(name: &str, width: f64, height: f64) -> Result<Self> {
        let m = 1.5;
        let zone = |x: f64, y: f64| Zone {
            center: Point::new(x, y),
            radius: 1.5,
        };
        let route = |entry, exit| Route { entry, exit, via: Vec::new() };
        let (w, h) = (width, height);
        let layout = match name {
            "corridor" => ZoneLayout {
                zones: vec![zone(m, h / 2.0), zone(w - m, h / 2.0)],
                routes: vec![route(0, 1), route(1, 0)],
            },
            "crossing" => ZoneLayout {
                zones: vec![zone(m, h / 2.0), zone(w - m, h / 2.0), zone(w / 2.0, m), zone(w / 2.0, h - m)],
                routes: vec![route(0, 1), route(1, 0), route(2, 3), route(3, 2)],
            },
            "junction" => {
                let centre = Point::new(w / 2.0, h * 0.3);
                let via = |entry, exit| Route {
                    entry,
                    exit,
                    via: vec![centre],
                };
                ZoneLayout {
                    zones: vec![zone(m, h * 0.3), zone(w - m, h * 0.3), zone(w / 2.0, h - m)],
                    routes: vec![via(0, 2), via(1, 2), via(2, 0), via(2, 1)],
                }
            }
            "plaza" => {
                let zones = vec![zone(m, h / 2.0), zone(w - m, h / 2.0), zone(w / 2.0, m), zone(w / 2.0, h - m)];
                let routes = (0..4)
                    .flat_map(|a| (0..4).filter(move |&b| b != a).map(move |b| route(a, b)))
                    .collect();
                ZoneLayout { zones, routes }
            }
            _ => return Self::parse(name),
        };
        Ok(layout)
    }

    /// Custom layout `zones/routes`: zones are `x:y:r` separated by `;`, routes are
    /// `entry>exit` with optional via points `~x:y`, separated by `;`.
    /// Example: `1:10:1.5;19:10:1.5/0>1;1>0~10:14`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("zone_layout {text:?}: {msg}"));
        let (zones_part, routes_part) = text
            .split_once('/')
            .ok_or_else(|| bad("expected a preset name or `zones/routes`".into()))?;
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("{s:?} is not a number")))
        };
        let point = |s: &str| -> Result<Point> {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 2 {
                return Err(bad(format!("via point {s:?} must be x:y")));
            }
            Ok(Point::new(num(parts[0])?, num(parts[1])?))
        };
        let zones = zones_part
            .split(';')
            .map(|z| {
                let parts: Vec<&str> = z.split(':').collect();
                if parts.len() != 3 {
                    return Err(bad(format!("zone {z:?} must be x:y:r")));
                }
                Ok(Zone {
                    center: Point::new(num(parts[0])?, num(parts[1])?),
                    radius: num(parts[2])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let routes = routes_part
            .split(';')
            .map(|r| {
                let mut pieces = r.split('~');
                let head = pieces.next().unwrap_or("");
                let (a, b) = head
                    .split_once('>')
                    .ok_or_else(|| bad(format!("route {r:?} must be entry>exit")))?;
                let idx = |s: &str| -> Result<usize> {
                    s.trim().parse().map_err(|_| bad(format!("{s:?} is not a zone index")))
                };
                Ok(Route {
                    entry: idx(a)?,
                    exit: idx(b)?,
                    via: pieces.map(point).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ZoneLayout { zones, routes })
    }

    pub fn validate(&self, width: f64, height: f64) -> Result<()> {
        if self.zones.is_empty() || self.routes.is_empty() {
            return Err(Error::Config("zone layout needs at least one zone and one route".into()));
        }
        for (k, z) in self.zones.iter().enumerate() {
            if !(z.radius > 0.0) {
                return Err(Error::Config(format!("zone {k} has non-positive radius")));
            }
            if !(0.0..=width).contains(&z.center.x) || !(0.0..=height).contains(&z.center.y) {
                return Err(Error::Config(format!("zone {k} lies outside the {width} x {height} scene")));
            }
        }
        for (k, r) in self.routes.iter().enumerate() {
            if r.entry >= self.zones.len() || r.exit >= self.zones.len() {
                return Err(Error::Config(format!("route {k} references a missing zone")));
            }
            if r.entry == r.exit {
                return Err(Error::Config(format!("route {k} enters and exits through zone {}", r.entry)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "normal" => Ok(Label::Normal),
            "abnormal" => Ok(Label::Abnormal),
            other => Err(Error::Data(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    Fast,
    Slow,
    Turn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_pedestrians: usize,
    pub n_frames: usize,
    pub zone_layout: ZoneLayout,
    pub interaction_strength: f64,
    pub seed: u64,
    pub frame_rate: f64,
    pub width: f64,
    pub height: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
    /// Uniform deviation (degrees) of the initial heading from the first goal.
    pub heading_noise_deg: f64,
    pub anomaly_rate: f64,
    /// Fast anomalies walk at `speed × factor`, slow ones at `speed / factor`.
    pub anomaly_speed_factor: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let (width, height) = (30.0, 30.0);
        Self {
            n_pedestrians: 120,
            n_frames: 600,
            zone_layout: ZoneLayout::preset("crossing", width, height).expect("built-in preset"),
            interaction_strength: 1.0,
            seed: 0,
            frame_rate: 5.0,
            width,
            height,
            speed_mean: 1.3,
            speed_std: 0.15,
            heading_noise_deg: 0.0,
            anomaly_rate: 0.0,
            anomaly_speed_factor: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pedestrians == 0 || self.n_frames < 2 {
            return Err(Error::Config("need at least one pedestrian and two frames".into()));
        }
        let positive = [
            ("frame_rate", self.frame_rate),
            ("width", self.width),
            ("height", self.height),
            ("speed_mean", self.speed_mean),
            ("anomaly_speed_factor", self.anomaly_speed_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.interaction_strength >= 0.0) || !(self.speed_std >= 0.0) || !(self.heading_noise_deg >= 0.0) {
            return Err(Error::Config(
                "interaction_strength, speed_std and heading_noise_deg must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.anomaly_rate) {
            return Err(Error::Config(format!("anomaly_rate must lie in [0, 1], got {}", self.anomaly_rate)));
        }
        self.zone_layout.validate(self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub scene: Scene,
    pub labels: BTreeMap<i64, Label>,
    /// Route index taken by each pedestrian.
    pub routes: BTreeMap<i64, usize>,
    pub anomalies: BTreeMap<i64, AnomalyKind>,
}

/// One walker for [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub pedestrian_id: i64,
    pub spawn_frame: usize,
    pub start: Point,
    pub goals: Vec<Point>,
    pub desired_speed: f64,
    pub initial_velocity: Point,
    /// Frames after spawn at which the walker turns by the given angle (radians)
    /// and heads straight on for `turn_distance`.
    pub turn: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub frame_rate: f64,
    pub interaction_strength: f64,
    pub relaxation_time: f64,
    /// Repulsion magnitude (m/s²) and range (m).
    pub repulsion_a: f64,
    pub repulsion_b: f64,
    pub body_radius: f64,
    pub interaction_cutoff: f64,
    pub arrival_radius: f64,
    pub turn_distance: f64,
    pub bounds: (f64, f64),
}

impl SimParams {
    pub fn new(frame_rate: f64, interaction_strength: f64, width: f64, height: f64) -> Self {
        Self {
            frame_rate,
            interaction_strength,
            relaxation_time: 0.5,
            repulsion_a: 2.1,
            repulsion_b: 0.3,
            body_radius: 0.3,
            interaction_cutoff: 5.0,
            arrival_radius: 0.6,
            turn_distance: 12.0,
            bounds: (width, height),
        }
    }
}

struct Walker {
    spec_idx: usize,
    pos: Point,
    vel: Point,
    goal: usize,
    goals: Vec<Point>,
    age: usize,
    path: Vec<Point>,
    done: bool,
}

fn unit(dx: f64, dy: f64) -> Point {
    let n = dx.hypot(dy);
    if n < 1e-12 {
        Point::new(0.0, 0.0)
    } else {
        Point::new(dx / n, dy / n)
    }
}

fn rotate(p: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    Point::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

/// Steps all agents frame by frame and returns one trajectory per agent that
/// recorded at least one position.
pub fn simulate(agents: &[AgentSpec], params: &SimParams, n_frames: usize) -> Result<Vec<Trajectory>> {
    let dt = 1.0 / params.frame_rate;
    let (width, height) = params.bounds;
    let margin = 2.0;
    let mut active: Vec<Walker> = Vec::new();
    let mut finished: Vec<(usize, Vec<Point>)> = Vec::new();
    let mut order: Vec<usize> = (0..agents.len()).collect();
    order.sort_by_key(|&i| (agents[i].spawn_frame, i));
    let mut next = 0;

    for frame in 0..n_frames {
        while next < order.len() && agents[order[next]].spawn_frame == frame {
            let spec = &agents[order[next]];
            active.push(Walker {
                spec_idx: order[next],
                pos: spec.start,
                vel: spec.initial_velocity,
                goal: 0,
                goals: spec.goals.clone(),
                age: 0,
                path: vec![spec.start],
                done: false,
            });
            next += 1;
        }

        // Forces are computed from positions at the start of the step.
        let snapshot: Vec<Point> = active.iter().map(|w| w.pos).collect();
        for (i, w) in active.iter_mut().enumerate() {
            if w.age == 0 {
                w.age = 1;
                continue;
            }
            let spec = &agents[w.spec_idx];
            if let Some((at, angle)) = spec.turn {
                if w.age == at {
                    let dir = rotate(unit(w.vel.x, w.vel.y), angle);
                    w.vel = Point::new(dir.x * spec.desired_speed, dir.y * spec.desired_speed);
                    let target = Point::new(
                        (w.pos.x + dir.x * params.turn_distance).clamp(0.0, width),
                        (w.pos.y + dir.y * params.turn_distance).clamp(0.0, height),
                    );
                    w.goals = vec![target];
                    w.goal = 0;
                }
            }
            let goal = w.goals[w.goal];
            let e = unit(goal.x - w.pos.x, goal.y - w.pos.y);
            let mut fx = (spec.desired_speed * e.x - w.vel.x) / params.relaxation_time;
            let mut fy = (spec.desired_speed * e.y - w.vel.y) / params.relaxation_time;
            if params.interaction_strength > 0.0 {
                for (j, q) in snapshot.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let (dx, dy) = (w.pos.x - q.x, w.pos.y - q.y);
                    let d = dx.hypot(dy);
                    if d >= params.interaction_cutoff || d < 1e-9 {
                        continue;
                    }
                    let mag = params.interaction_strength
                        * params.repulsion_a
                        * ((2.0 * params.body_radius - d) / params.repulsion_b).exp();
                    fx += mag * dx / d;
                    fy += mag * dy / d;
                }
            }
            w.vel.x += fx * dt;
            w.vel.y += fy * dt;
            let speed = w.vel.x.hypot(w.vel.y);
            let cap = 1.5 * spec.desired_speed;
            if speed > cap {
                w.vel.x *= cap / speed;
                w.vel.y *= cap / speed;
            }
            w.pos.x += w.vel.x * dt;
            w.pos.y += w.vel.y * dt;
            w.age += 1;
            w.path.push(w.pos);

            if w.pos.dist(&w.goals[w.goal]) < params.arrival_radius {
                if w.goal + 1 < w.goals.len() {
                    w.goal += 1;
                } else {
                    w.done = true;
                }
            }
            if w.pos.x < -margin || w.pos.y < -margin || w.pos.x > width + margin || w.pos.y > height + margin {
                w.done = true;
            }
        }
        let (done, still): (Vec<Walker>, Vec<Walker>) = active.into_iter().partition(|w| w.done);
        finished.extend(done.into_iter().map(|w| (w.spec_idx, w.path)));
        active = still;
    }
    finished.extend(active.into_iter().map(|w| (w.spec_idx, w.path)));
    finished.sort_by_key(|(i, _)| *i);
    finished
        .into_iter()
        .map(|(i, path)| {
            let spec = &agents[i];
            Trajectory::from_points(spec.pedestrian_id, spec.spawn_frame as i64, &path)
        })
        .collect()
}

fn point_in_disc<R: Rng>(rng: &mut R, zone: &Zone) -> Point {
    let r = zone.radius * rng.gen::<f64>().sqrt();
    let a = rng.gen_range(0.0..2.0 * PI);
    Point::new(zone.center.x + r * a.cos(), zone.center.y + r * a.sin())
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Generates a labelled scene; identical configs give bitwise-identical output.
pub fn synth_generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layout = &config.zone_layout;
    let mut agents = Vec::with_capacity(config.n_pedestrians);
    let mut labels = BTreeMap::new();
    let mut routes = BTreeMap::new();
    let mut anomalies = BTreeMap::new();

    for k in 0..config.n_pedestrians {
        let id = k as i64 + 1;
        let spawn_frame = rng.gen_range(0..config.n_frames);
        let route_idx = rng.gen_range(0..layout.routes.len());
        let route = &layout.routes[route_idx];
        let start = point_in_disc(&mut rng, &layout.zones[route.entry]);
        let mut goals: Vec<Point> = route
            .via
            .iter()
            .map(|v| Point::new(v.x + rng.gen_range(-1.0..1.0), v.y + rng.gen_range(-1.0..1.0)))
            .collect();
        goals.push(point_in_disc(&mut rng, &layout.zones[route.exit]));
        let mut speed = (config.speed_mean + config.speed_std * normal(&mut rng)).clamp(
            0.4 * config.speed_mean,
            1.6 * config.speed_mean,
        );
        let noise = if config.heading_noise_deg > 0.0 {
            rng.gen_range(-config.heading_noise_deg..=config.heading_noise_deg).to_radians()
        } else {
            0.0
        };
        let anomaly_draw: f64 = rng.gen();
        let kind_draw = rng.gen_range(0..3);
        let turn_at = rng.gen_range(4..16);
        let turn_angle = rng.gen_range(100.0_f64..150.0).to_radians() * if rng.gen::<bool>() { 1.0 } else { -1.0 };

        let mut turn = None;
        let label = if anomaly_draw < config.anomaly_rate {
            let kind = match kind_draw {
                0 => AnomalyKind::Fast,
                1 => AnomalyKind::Slow,
                _ => AnomalyKind::Turn,
            };
            match kind {
                AnomalyKind::Fast => speed *= config.anomaly_speed_factor,
                AnomalyKind::Slow => speed /= config.anomaly_speed_factor,
                AnomalyKind::Turn => turn = Some((turn_at, turn_angle)),
            }
            anomalies.insert(id, kind);
            Label::Abnormal
        } else {
            Label::Normal
        };
        let dir = rotate(unit(goals[0].x - start.x, goals[0].y - start.y), noise);
        agents.push(AgentSpec {
            pedestrian_id: id,
            spawn_frame,
            start,
            goals,
            desired_speed: speed,
            initial_velocity: Point::new(dir.x * speed, dir.y * speed),
            turn,
        });
        labels.insert(id, label);
        routes.insert(id, route_idx);
    }

    let params = SimParams::new(
        config.frame_rate,
        config.interaction_strength,
        config.width,
        config.height,
    );
    let trajectories = simulate(&agents, &params, config.n_frames)?;
    let scene = Scene::new(trajectories, config.frame_rate)?;
    Ok(SynthOutput {
        scene,
        labels,
        routes,
        anomalies,
    })
}

/// Writes `pedestrian_id,label` rows.
pub fn write_labels<W: std::io::Write>(labels: &BTreeMap<i64, Label>, mut sink: W) -> Result<()> {
    writeln!(sink, "pedestrian_id,label")?;
    for (id, label) in labels {
        writeln!(sink, "{id},{}", label.as_str())?;
    }
    Ok(())
}

pub fn parse_labels<R: std::io::Read>(source: R) -> Result<BTreeMap<i64, Label>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != ["pedestrian_id", "label"] {
        return Err(Error::Parse {
            line: 1,
            message: "expected header pedestrian_id,label".into(),
        });
    }
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id: i64 = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                line,
                message: "bad pedestrian_id".into(),
            })?;
        let label = Label::parse(record.get(1).unwrap_or("")).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if out.insert(id, label).is_some() {
            return Err(Error::Data(format!("pedestrian {id} labelled twice")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_distance(a: &Trajectory, b: &Trajectory) -> f64 {
        a.frames
            .iter()
            .filter_map(|f| b.position_at(f.frame_index).map(|q| f.pos.dist(&q)))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn zero_interaction_walks_straight() {
        let config = SynthConfig {
            n_pedestrians: 30,
            interaction_strength: 0.0,
            seed: 3,
            ..SynthConfig::default()
        };
        let out = synth_generate(&config).unwrap();
        for t in &out.scene.trajectories {
            let p = t.positions();
            if p.len() < 3 {
                continue;
            }
            let d0 = (p[1].x - p[0].x, p[1].y - p[0].y);
            for w in p.windows(2) {
                let d = (w[1].x - w[0].x, w[1].y - w[0].y);
                assert!((d.0 - d0.0).abs() < 1e-9 && (d.1 - d0.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn repulsion_keeps_head_on_walkers_apart() {
        let agents = |_: ()| {
            vec![
                AgentSpec {
                    pedestrian_id: 1,
                    spawn_frame: 0,
                    start: Point::new(2.0, 15.0),
                    goals: vec![Point::new(28.0, 15.2)],
                    desired_speed: 1.3,
                    initial_velocity: Point::new(1.3, 0.0),
                    turn: None,
                },
                AgentSpec {
                    pedestrian_id: 2,
                    spawn_frame: 0,
                    start: Point::new(28.0, 15.0),
                    goals: vec![Point::new(2.0, 14.8)],
                    desired_speed: 1.3,
                    initial_velocity: Point::new(-1.3, 0.0),
                    turn: None,
                },
            ]
        };
        let run = |strength| {
            let params = SimParams::new(5.0, strength, 30.0, 30.0);
            let t = simulate(&agents(()), &params, 200).unwrap();
            min_distance(&t[0], &t[1])
        };
        let free = run(0.0);
        let social = run(1.0);
        assert!(social > free, "with repulsion {social}, without {free}");
    }

    #[test]
    fn same_seed_same_scene() {
        let config = SynthConfig {
            n_pedestrians: 40,
            anomaly_rate: 0.2,
            seed: 77,
            ..SynthConfig::default()
        };
        assert_eq!(synth_generate(&config).unwrap(), synth_generate(&config).unwrap());
    }

    #[test]
    fn invalid_layouts_are_config_errors() {
        assert!(matches!(ZoneLayout::preset("nowhere", 30.0, 30.0), Err(Error::Config(_))));
        let bad_route = ZoneLayout::parse("1:1:1;5:5:1/0>3").unwrap();
        assert!(matches!(bad_route.validate(30.0, 30.0), Err(Error::Config(_))));
        let outside = ZoneLayout::parse("100:1:1;5:5:1/0>1").unwrap();
        assert!(outside.validate(30.0, 30.0).is_err());
        let custom = ZoneLayout::parse("1:10:1.5;19:10:1.5/0>1;1>0~10:14").unwrap();
        assert_eq!(custom.routes[1].via, vec![Point::new(10.0, 14.0)]);
        custom.validate(20.0, 20.0).unwrap();
    }

    #[test]
    fn labels_round_trip() {
        let mut labels = BTreeMap::new();
        labels.insert(3, Label::Abnormal);
        labels.insert(1, Label::Normal);
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        assert_eq!(parse_labels(buf.as_slice()).unwrap(), labels);
    }
}
