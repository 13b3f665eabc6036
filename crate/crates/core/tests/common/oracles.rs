//! Brute-force references for the metrics and DBSCAN, written without touching the
//! library's helpers.

use trajpred::clustering::NOISE;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use trajpred::data::Point;

pub fn oracle_ade(pred: &[Vec<Point>], truth: &[Vec<Point>], t_obs: usize, t_pred: usize, squared: bool, literal: bool) -> f64 {
    let mut num = 0.0;
    for i in 0..pred.len() {
        // Frames t_obs+1 ..= t_pred map to sequence positions 0 .. t_pred-t_obs.
        for t in (t_obs + 1)..=t_pred {
            let k = t - t_obs - 1;
            let dx = pred[i][k].x - truth[i][k].x;
            let dy = pred[i][k].y - truth[i][k].y;
            let d2 = dx * dx + dy * dy;
            num += if squared { d2 } else { d2.sqrt() };
        }
    }
    let per = if literal { t_pred - (t_obs + 1) } else { t_pred - t_obs };
    num / (pred.len() * per) as f64
}

pub fn oracle_fde(pred: &[Vec<Point>], truth: &[Vec<Point>]) -> f64 {
    let mut s = 0.0;
    for i in 0..pred.len() {
        let last = pred[i].len() - 1;
        s += ((pred[i][last].x - truth[i][last].x).powi(2) + (pred[i][last].y - truth[i][last].y).powi(2)).sqrt();
    }
    s / pred.len() as f64
}

pub fn oracle_nade(pred: &[Vec<Point>], truth: &[Vec<Point>], thr: f64, squared: bool) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0usize;
    for i in 0..pred.len() {
        let p = &pred[i];
        for k in 1..p.len().saturating_sub(1) {
            let ddx = p[k + 1].x - 2.0 * p[k].x + p[k - 1].x;
            let ddy = p[k + 1].y - 2.0 * p[k].y + p[k - 1].y;
            if (ddx * ddx + ddy * ddy).sqrt() > thr {
                let d2 = (p[k].x - truth[i][k].x).powi(2) + (p[k].y - truth[i][k].y).powi(2);
                num += if squared { d2 } else { d2.sqrt() };
                den += 1;
            }
        }
    }
    if den == 0 {
        None
    } else {
        Some(num / den as f64)
    }
}

/// Union-find over core points; clusters numbered by their lowest core index; a border
/// point joins the lowest-numbered cluster among its core neighbours.
pub fn oracle_dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = points.len();
    let near = |a: usize, b: usize| {
        let d: f64 = points[a].iter().zip(&points[b]).map(|(x, y)| (x - y).powi(2)).sum();
        d <= eps * eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    // Roots are the smallest index of each component, so sorting roots numbers clusters.
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| find(&mut parent, i)).collect();
    roots.sort_unstable();
    roots.dedup();
    let id_of = |root: usize| roots.binary_search(&root).unwrap() as i64;
    (0..n)
        .map(|i| {
            if core[i] {
                id_of(find(&mut parent.clone(), i))
            } else {
                (0..n)
                    .filter(|&j| core[j] && near(i, j))
                    .map(|j| id_of(find(&mut parent.clone(), j)))
                    .min()
                    .unwrap_or(NOISE)
            }
        })
        .collect()
}

/// `n ≤ 20` random 20-step predicted/true path pairs; `curved` makes the predicted
/// heading wander so the nonlinearity indicator fires.
pub fn random_instances(rng: &mut ChaCha8Rng, curved: bool) -> (Vec<Vec<Point>>, Vec<Vec<Point>>) {
    let n = rng.gen_range(1..=20);
    let horizon = 20;
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for _ in 0..n {
        let (mut x, mut y) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut p = Vec::new();
        let mut t = Vec::new();
        for _ in 0..horizon {
            if curved {
                heading += rng.gen_range(-0.4..0.4);
            }
            x += 0.4 * heading.cos();
            y += 0.4 * heading.sin();
            p.push(Point::new(x, y));
            t.push(Point::new(x + rng.gen_range(-0.5..0.5), y + rng.gen_range(-0.5..0.5)));
        }
        pred.push(p);
        truth.push(t);
    }
    (pred, truth)
}
