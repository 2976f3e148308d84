//! Geometric primitives behind the pick features: total-least-squares plane
//! fitting, surface lookup, local height maps and the segment adjacency graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{SensorFrame, EMPTY};

/// Half-width of the local height map window (meters).
pub const HEIGHT_MAP_HALF_WIDTH: f64 = 0.3;
/// Height-map grid side.
pub const HEIGHT_MAP_GRID: usize = 8;
/// Two segments are adjacent when any of their cells are within this many
/// cells of each other (Chebyshev distance).
pub const ADJACENCY_GAP: usize = 2;
pub const HEIGHT_MAP_FILL: f64 = 0.0;
pub const PATCH_RADIUS: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    /// Unit normal with non-negative z.
    pub normal: [f64; 3],
    /// Centroid of the fitted points.
    pub point: [f64; 3],
    /// Root-mean-square orthogonal distance of the points to the plane.
    pub rmse: f64,
}

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues ascending and the matching eigenvectors as columns.
pub(crate) fn symmetric_eigen3(m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        let scale = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
        if off == 0.0 || off <= f64::EPSILON * 1e-3 * scale {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let vals = [a[order[0]][order[0]], a[order[1]][order[1]], a[order[2]][order[2]]];
    let mut vecs = [[0.0; 3]; 3];
    for (col, &o) in order.iter().enumerate() {
        for r in 0..3 {
            vecs[r][col] = v[r][o];
        }
    }
    (vals, vecs)
}

/// Total-least-squares plane through `points`, normal oriented z-up.
pub fn fit_plane(points: &[[f64; 3]]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("plane fit needs ≥ 3 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    for ck in &mut c {
        *ck /= n;
    }
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        for i in 0..3 {
            for j in i..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..3 {
        for j in i..3 {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }
    let (vals, vecs) = symmetric_eigen3(cov);
    if vals[2] <= 0.0 || vals[1] <= 1e-12 * vals[2] {
        return Err(Error::DegenerateGeometry("points are collinear or coincident".into()));
    }
    let mut normal = [vecs[0][0], vecs[1][0], vecs[2][0]];
    let len = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
    for v in &mut normal {
        *v /= len;
    }
    if normal[2] < 0.0 || (normal[2] == 0.0 && (normal[0] < 0.0 || (normal[0] == 0.0 && normal[1] < 0.0))) {
        for v in &mut normal {
            *v = -*v;
        }
    }
    let ss: f64 = points
        .iter()
        .map(|p| {
            let d = normal[0] * (p[0] - c[0]) + normal[1] * (p[1] - c[1]) + normal[2] * (p[2] - c[2]);
            d * d
        })
        .sum();
    Ok(PlaneFit {
        normal,
        point: c,
        rmse: (ss / n).sqrt(),
    })
}

pub const UP: [f64; 3] = [0.0, 0.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub z: f64,
    pub normal: [f64; 3],
    pub segment: i32,
}

/// Surface height, normal and segment label below (x, y). The normal comes
/// from a plane fit over same-segment cells within `patch_radius`, falling
/// back to straight up when the patch is too small to fit.
pub fn surface_at(frame: &SensorFrame, x: f64, y: f64, patch_radius: f64) -> Result<SurfacePoint> {
    let (ix, iy) = frame.cell_of(x, y).ok_or(Error::OutOfBounds { x, y })?;
    let k = frame.idx(ix, iy);
    let segment = frame.segmentgrid[k];
    if segment == EMPTY {
        return Ok(SurfacePoint {
            z: 0.0,
            normal: UP,
            segment,
        });
    }
    let mut pts = Vec::with_capacity(400);
    frame.for_each_in_disk(x, y, patch_radius, |cx, cy, j| {
        if frame.segmentgrid[j] == segment {
            let (px, py) = frame.cell_center(cx, cy);
            pts.push([px, py, frame.heightgrid[j]]);
        }
    });
    let normal = fit_plane(&pts).map_or(UP, |f| f.normal);
    Ok(SurfacePoint {
        z: frame.heightgrid[k],
        normal,
        segment,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightMap {
    /// Row-major G×G values; row index follows y, column index follows x.
    pub grid: Vec<f64>,
    pub size: usize,
    pub center: [f64; 2],
    pub extent: f64,
    pub fill_value: f64,
}

impl HeightMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.grid[row * self.size + col]
    }
}

/// Height map over [center ± d]² on a G×G grid: each bin holds the mean
/// surface height of the sensor cells whose centers fall in it (conveyor
/// cells count as z = 0). Bins with no cell inside the conveyor hold the
/// fill value. Averaging rather than taking the max makes partially covered
/// bins report how much of them a package covers.
pub fn local_height_map(frame: &SensorFrame, center: [f64; 2], d: f64, g: usize) -> HeightMap {
    assert!(d > 0.0 && g >= 2, "height map needs d > 0 and G ≥ 2");
    let mut sums = vec![(0.0f64, 0u32); g * g];
    let bin = 2.0 * d / g as f64;
    let (x0, y0) = (center[0] - d, center[1] - d);
    if let Some((ix0, ix1, iy0, iy1)) = frame.cell_window(center[0], center[1], d) {
        let cols: Vec<Option<usize>> = (ix0..=ix1)
            .map(|ix| {
                let (px, _) = frame.cell_center(ix, 0);
                let bx = ((px - x0) / bin).floor();
                (bx >= 0.0 && bx < g as f64).then_some(bx as usize)
            })
            .collect();
        for iy in iy0..=iy1 {
            let (_, py) = frame.cell_center(0, iy);
            let by = ((py - y0) / bin).floor();
            if by < 0.0 || by >= g as f64 {
                continue;
            }
            let row = by as usize * g;
            let base = frame.idx(0, iy);
            for (j, bx) in cols.iter().enumerate() {
                if let Some(bx) = bx {
                    let e = &mut sums[row + bx];
                    e.0 += frame.heightgrid[base + ix0 + j];
                    e.1 += 1;
                }
            }
        }
    }
    let grid = sums
        .into_iter()
        .map(|(s, n)| if n > 0 { s / n as f64 } else { HEIGHT_MAP_FILL })
        .collect();
    HeightMap {
        grid,
        size: g,
        center,
        extent: d,
        fill_value: HEIGHT_MAP_FILL,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyInfo {
    pub segment_id: i32,
    pub neighbor_ids: BTreeSet<i32>,
    /// 1 = highest among itself and its neighbors.
    pub rank: usize,
    pub n_higher: usize,
    /// Mean cell height of the segment, the ranking key.
    pub height: f64,
}

/// `a` outranks `b` when it is higher, or equally high with the lower id.
pub fn outranks(a: (i32, f64), b: (i32, f64)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

pub fn segment_mean_heights(frame: &SensorFrame) -> BTreeMap<i32, f64> {
    let mut acc: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    for (k, &s) in frame.segmentgrid.iter().enumerate() {
        if s != EMPTY {
            let e = acc.entry(s).or_insert((0.0, 0));
            e.0 += frame.heightgrid[k];
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(s, (sum, n))| (s, sum / n as f64)).collect()
}

/// Segment adjacency graph with per-segment height ranks.
pub fn adjacency_graph(frame: &SensorFrame) -> BTreeMap<i32, AdjacencyInfo> {
    let heights = segment_mean_heights(frame);
    let gap = ADJACENCY_GAP as i64;
    // Forward half of the (2·gap+1)² neighborhood; the other half is covered
    // when the scan reaches the partner cell.
    let offsets: Vec<(i64, i64)> = (0..=gap)
        .flat_map(|dy| (-gap..=gap).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dy > 0 || dx > 0)
        .collect();
    let (nx, ny) = (frame.nx as i64, frame.ny as i64);
    let mut edges: BTreeSet<(i32, i32)> = BTreeSet::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let s = frame.segmentgrid[(iy * nx + ix) as usize];
            if s == EMPTY {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (jx, jy) = (ix + dx, iy + dy);
                if jx < 0 || jx >= nx || jy >= ny {
                    continue;
                }
                let t = frame.segmentgrid[(jy * nx + jx) as usize];
                if t != EMPTY && t != s {
                    edges.insert((s.min(t), s.max(t)));
                }
            }
        }
    }
    let mut out: BTreeMap<i32, AdjacencyInfo> = heights
        .iter()
        .map(|(&s, &h)| {
            (
                s,
                AdjacencyInfo {
                    segment_id: s,
                    neighbor_ids: BTreeSet::new(),
                    rank: 1,
                    n_higher: 0,
                    height: h,
                },
            )
        })
        .collect();
    for &(a, b) in &edges {
        out.get_mut(&a).unwrap().neighbor_ids.insert(b);
        out.get_mut(&b).unwrap().neighbor_ids.insert(a);
    }
    for info in out.values_mut() {
        let me = (info.segment_id, info.height);
        info.n_higher = info.neighbor_ids.iter().filter(|&&n| outranks((n, heights[&n]), me)).count();
        info.rank = 1 + info.n_higher;
    }
    out
}
