//! The fixed-length pick feature vector shared by the success model and the
//! refinement chain.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{adjacency_graph, fit_plane, local_height_map, AdjacencyInfo, HEIGHT_MAP_GRID, HEIGHT_MAP_HALF_WIDTH};
use crate::pick::{evaluate_cups, segment_cells, GripperConfig, PickAction};
use crate::scene::{visible_segments, PackageKind, SegmentSummary, SensorFrame};

pub const FEATURE_DIM: usize = 78;

pub const IDX_HEIGHT: usize = 0;
pub const IDX_PLANE_RMSE: usize = 1;
pub const IDX_CUPS: usize = 2;
pub const IDX_ALIGN_MEAN: usize = 3;
pub const IDX_ALIGN_MAX: usize = 4;
pub const IDX_NEIGHBORS: usize = 5;
pub const IDX_RANK: usize = 6;
pub const IDX_BOUNDARY: usize = 7;
pub const IDX_CENTROID: usize = 8;
pub const IDX_HMAP: usize = 9;
pub const IDX_HMAP_VAR: usize = 73;
pub const IDX_HMAP_RANGE: usize = 74;
pub const IDX_KIND: usize = 75;

/// Boundary distances are searched out to this radius and clamped there.
pub const BOUNDARY_SEARCH_CAP: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn check_dim(&self) -> Result<()> {
        if self.0.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut v: Vec<String> = [
            "pkg_height",
            "plane_fit_rmse",
            "n_active_cups",
            "cup_align_mean",
            "cup_align_max",
            "n_neighbors",
            "adjacency_rank_norm",
            "dist_to_boundary",
            "dist_to_centroid",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for r in 0..HEIGHT_MAP_GRID {
            for c in 0..HEIGHT_MAP_GRID {
                v.push(format!("hmap_r{r}_c{c}"));
            }
        }
        v.extend(["hmap_var", "hmap_range", "kind_box", "kind_polybag", "kind_envelope"].map(String::from));
        debug_assert_eq!(v.len(), FEATURE_DIM);
        v
    })
}

pub fn feature_index(name: &str) -> Option<usize> {
    feature_names().iter().position(|n| n == name)
}

/// Per-segment facts reused by every feature evaluation on one frame.
#[derive(Clone, Debug)]
pub struct SegmentStats {
    pub summary: SegmentSummary,
    pub cells: Vec<usize>,
    /// Rmse of a plane fitted over the whole segment (0 when unfittable).
    pub plane_rmse: f64,
}

/// A rendered frame plus everything perception derives from it: segment
/// summaries, the adjacency graph and per-segment statistics.
#[derive(Clone, Debug)]
pub struct Perception {
    pub frame: SensorFrame,
    pub segments: BTreeMap<i32, SegmentStats>,
    pub adjacency: BTreeMap<i32, AdjacencyInfo>,
}

impl Perception {
    pub fn new(frame: SensorFrame) -> Perception {
        let adjacency = adjacency_graph(&frame);
        let segments = visible_segments(&frame)
            .into_iter()
            .map(|summary| {
                let cells = segment_cells(&frame, summary.id);
                let pts: Vec<[f64; 3]> = cells
                    .iter()
                    .map(|&k| {
                        let (x, y) = frame.cell_center(k % frame.nx, k / frame.nx);
                        [x, y, frame.heightgrid[k]]
                    })
                    .collect();
                let plane_rmse = fit_plane(&pts).map_or(0.0, |f| f.rmse);
                (
                    summary.id,
                    SegmentStats {
                        summary,
                        cells,
                        plane_rmse,
                    },
                )
            })
            .collect();
        Perception {
            frame,
            segments,
            adjacency,
        }
    }

    pub fn summaries(&self) -> impl Iterator<Item = &SegmentSummary> {
        self.segments.values().map(|s| &s.summary)
    }

    /// The topmost rank-1 segment with at least `min_cells` cells: highest
    /// mean height, ties to the lower id.
    pub fn target_segment(&self, min_cells: usize) -> Option<&SegmentSummary> {
        self.segments
            .values()
            .filter(|s| s.cells.len() >= min_cells)
            .filter(|s| self.adjacency.get(&s.summary.id).is_some_and(|a| a.rank == 1))
            .max_by(|a, b| {
                let ha = self.adjacency[&a.summary.id].height;
                let hb = self.adjacency[&b.summary.id].height;
                ha.total_cmp(&hb).then(b.summary.id.cmp(&a.summary.id))
            })
            .map(|s| &s.summary)
    }
}

/// Distance from (x, y) to the nearest cell center not labeled `segment`.
/// Cells beyond the grid count as non-segment. Clamped at the search cap.
pub fn boundary_distance(frame: &SensorFrame, segment: i32, x: f64, y: f64) -> f64 {
    let res = frame.resolution;
    let Some((ix, iy)) = frame.cell_of(x, y) else {
        return 0.0;
    };
    if frame.segmentgrid[frame.idx(ix, iy)] != segment {
        return 0.0;
    }
    let (ix, iy) = (ix as i64, iy as i64);
    let max_ring = (BOUNDARY_SEARCH_CAP / res).ceil() as i64 + 1;
    let mut best2 = BOUNDARY_SEARCH_CAP * BOUNDARY_SEARCH_CAP;
    let visit = |jx: i64, jy: i64, best2: &mut f64| {
        let inside = jx >= 0 && jy >= 0 && (jx as usize) < frame.nx && (jy as usize) < frame.ny;
        if inside && frame.segmentgrid[jy as usize * frame.nx + jx as usize] == segment {
            return;
        }
        let cx = frame.bounds.x_min + (jx as f64 + 0.5) * res;
        let cy = frame.bounds.y_min + (jy as f64 + 0.5) * res;
        let d2 = (cx - x).powi(2) + (cy - y).powi(2);
        if d2 < *best2 {
            *best2 = d2;
        }
    };
    for k in 1..=max_ring {
        let lower = (k as f64 - 0.5) * res;
        if lower * lower >= best2 {
            break;
        }
        for d in -k..=k {
            visit(ix + d, iy - k, &mut best2);
            visit(ix + d, iy + k, &mut best2);
        }
        for d in -k + 1..k {
            visit(ix - k, iy + d, &mut best2);
            visit(ix + k, iy + d, &mut best2);
        }
    }
    best2.sqrt()
}

fn line_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).abs();
    dot.min(1.0).acos()
}

/// φ(scene, action) in canonical order.
pub fn compute_features(p: &Perception, gripper: &GripperConfig, action: &PickAction) -> Result<FeatureVector> {
    let seg = p
        .segments
        .get(&action.target_segment)
        .ok_or(Error::MissingSegment(action.target_segment))?;
    let adj = &p.adjacency[&action.target_segment];
    let frame = &p.frame;
    let mut v = vec![0.0; FEATURE_DIM];

    v[IDX_HEIGHT] = action.z;
    v[IDX_PLANE_RMSE] = seg.plane_rmse;

    let cups = evaluate_cups(frame, gripper, action.x, action.y, action.r);
    let angles: Vec<f64> = cups.iter().filter_map(|c| c.normal).map(|n| line_angle(action.normal, n)).collect();
    v[IDX_CUPS] = angles.len() as f64;
    if !angles.is_empty() {
        v[IDX_ALIGN_MEAN] = angles.iter().sum::<f64>() / angles.len() as f64;
        v[IDX_ALIGN_MAX] = angles.iter().copied().fold(0.0, f64::max);
        // Guard the mean ≤ max ordering against summation rounding.
        v[IDX_ALIGN_MEAN] = v[IDX_ALIGN_MEAN].min(v[IDX_ALIGN_MAX]);
    }

    let n_neighbors = adj.neighbor_ids.len();
    v[IDX_NEIGHBORS] = n_neighbors as f64;
    v[IDX_RANK] = adj.rank as f64 / (1 + n_neighbors) as f64;
    v[IDX_BOUNDARY] = boundary_distance(frame, action.target_segment, action.x, action.y);
    let [cx, cy] = seg.summary.centroid;
    v[IDX_CENTROID] = ((action.x - cx).powi(2) + (action.y - cy).powi(2)).sqrt();

    let hm = local_height_map(frame, [action.x, action.y], HEIGHT_MAP_HALF_WIDTH, HEIGHT_MAP_GRID);
    v[IDX_HMAP..IDX_HMAP_VAR].copy_from_slice(&hm.grid);
    let (var, range) = block_stats(&v[IDX_HMAP..IDX_HMAP_VAR]);
    v[IDX_HMAP_VAR] = var;
    v[IDX_HMAP_RANGE] = range;

    v[IDX_KIND + seg.summary.kind.index()] = 1.0;
    Ok(FeatureVector(v))
}

/// Population variance and range of a block of values.
pub fn block_stats(block: &[f64]) -> (f64, f64) {
    let n = block.len() as f64;
    let mean = block.iter().sum::<f64>() / n;
    let var = block.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let max = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = block.iter().copied().fold(f64::INFINITY, f64::min);
    (var, max - min)
}

pub fn kind_of(phi: &FeatureVector) -> PackageKind {
    PackageKind::ALL
        .into_iter()
        .max_by(|a, b| phi[IDX_KIND + a.index()].total_cmp(&phi[IDX_KIND + b.index()]))
        .unwrap_or(PackageKind::Box)
}

/// CSV dump: header of feature names, one row per vector.
pub fn write_csv<W: std::io::Write>(mut out: W, rows: &[FeatureVector]) -> std::io::Result<()> {
    writeln!(out, "{}", feature_names().join(","))?;
    for row in rows {
        let line: Vec<String> = row.0.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{render_sensor, Bounds, PackageSpec, Scene};

    fn pkg(id: u32, kind: PackageKind, c: [f64; 2], dims: [f64; 3]) -> PackageSpec {
        PackageSpec {
            id,
            kind,
            center: [c[0], c[1], 0.5 * dims[2]],
            yaw: 0.0,
            dims,
            top_tilt: [0.0, 0.0],
        }
    }

    fn perceive(packages: Vec<PackageSpec>) -> Perception {
        let scene = Scene {
            packages,
            conveyor_bounds: Bounds::default(),
            seed: 0,
        };
        Perception::new(render_sensor(&scene, 0.005).unwrap())
    }

    #[test]
    fn names_are_canonical() {
        let n = feature_names();
        assert_eq!(n.len(), FEATURE_DIM);
        assert_eq!(n[0], "pkg_height");
        assert_eq!(n[2], "n_active_cups");
        assert_eq!(n[9], "hmap_r0_c0");
        assert_eq!(n[72], "hmap_r7_c7");
        assert_eq!(n[77], "kind_envelope");
        assert_eq!(feature_index("dist_to_boundary"), Some(IDX_BOUNDARY));
    }

    #[test]
    fn flat_box_centered_pick() {
        let p = perceive(vec![pkg(1, PackageKind::Box, [0.6, 0.5], [0.4, 0.4, 0.1])]);
        let g = GripperConfig::default();
        let a = PickAction::new(&p.frame, &g, 0.6, 0.5, 0.0).unwrap();
        let phi = compute_features(&p, &g, &a).unwrap();
        assert_eq!(phi.0.len(), FEATURE_DIM);
        assert_eq!(phi[IDX_HEIGHT], 0.1);
        assert!(phi[IDX_PLANE_RMSE] < 1e-9);
        assert_eq!(phi[IDX_CUPS], 8.0);
        assert_eq!(phi[IDX_ALIGN_MEAN], 0.0);
        assert_eq!(phi[IDX_ALIGN_MAX], 0.0);
        assert_eq!(phi[IDX_NEIGHBORS], 0.0);
        assert_eq!(phi[IDX_RANK], 1.0);
        assert_eq!(phi[IDX_BOUNDARY], BOUNDARY_SEARCH_CAP);
        assert!(phi[IDX_CENTROID] < 0.005);
        assert_eq!(&phi.0[IDX_KIND..], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn polybag_one_hot() {
        let p = perceive(vec![pkg(1, PackageKind::Polybag, [0.6, 0.5], [0.3, 0.3, 0.1])]);
        let g = GripperConfig::default();
        let a = PickAction::new(&p.frame, &g, 0.6, 0.5, 0.0).unwrap();
        let phi = compute_features(&p, &g, &a).unwrap();
        assert_eq!(&phi.0[IDX_KIND..], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn missing_segment_is_an_error() {
        let p = perceive(vec![pkg(1, PackageKind::Box, [0.6, 0.5], [0.3, 0.3, 0.1])]);
        let g = GripperConfig::default();
        let mut a = PickAction::new(&p.frame, &g, 0.6, 0.5, 0.0).unwrap();
        a.target_segment = 9;
        assert!(matches!(compute_features(&p, &g, &a), Err(Error::MissingSegment(9))));
    }

    #[test]
    fn boundary_distance_brute_force() {
        let p = perceive(vec![
            pkg(1, PackageKind::Box, [0.6, 0.5], [0.3, 0.2, 0.1]),
            pkg(2, PackageKind::Box, [0.8, 0.45], [0.2, 0.2, 0.2]),
        ]);
        let f = &p.frame;
        for (x, y) in [(0.6, 0.5), (0.52, 0.43), (0.69, 0.55), (0.47, 0.59)] {
            let s = f.segment_at(x, y);
            let mut best = BOUNDARY_SEARCH_CAP;
            for iy in -40i64..(f.ny as i64 + 40) {
                for ix in -40i64..(f.nx as i64 + 40) {
                    let inside = ix >= 0 && iy >= 0 && (ix as usize) < f.nx && (iy as usize) < f.ny;
                    if inside && f.segmentgrid[iy as usize * f.nx + ix as usize] == s {
                        continue;
                    }
                    let cx = f.bounds.x_min + (ix as f64 + 0.5) * f.resolution;
                    let cy = f.bounds.y_min + (iy as f64 + 0.5) * f.resolution;
                    best = best.min(((cx - x).powi(2) + (cy - y).powi(2)).sqrt());
                }
            }
            assert!((boundary_distance(f, s, x, y) - best).abs() < 1e-12, "({x},{y})");
        }
    }

    #[test]
    fn target_segment_prefers_top_of_pile() {
        let mut top = pkg(2, PackageKind::Box, [0.62, 0.5], [0.2, 0.2, 0.1]);
        top.center[2] += 0.1;
        let p = perceive(vec![pkg(1, PackageKind::Box, [0.6, 0.5], [0.4, 0.4, 0.1]), top, pkg(3, PackageKind::Box, [0.15, 0.15], [0.15, 0.15, 0.05])]);
        assert_eq!(p.target_segment(10).unwrap().id, 2);
    }
}
