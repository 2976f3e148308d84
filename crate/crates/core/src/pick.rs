//! Multi-suction end-of-arm tool, pick actions, deterministic cup activation,
//! the heuristic candidate sampler, feasibility checks and simulated execution.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{fit_plane, surface_at, PATCH_RADIUS};
use crate::rng::StreamRng;
use crate::scene::{SegmentSummary, SensorFrame, EMPTY};

pub const N_CUPS: usize = 8;

/// Wraps an angle to (−π, π].
pub fn wrap_angle(r: f64) -> f64 {
    let mut a = r % TAU;
    if a > PI {
        a -= TAU;
    } else if a <= -PI {
        a += TAU;
    }
    a
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EoatModel {
    /// Cup centers in the tool frame (meters): four outer cups then four
    /// inner cups, quadrant order (+,+), (−,+), (−,−), (+,−).
    pub cup_centers: [[f64; 2]; N_CUPS],
    pub cup_radius: f64,
    /// Side of the square bounding the cups.
    pub footprint: f64,
}

impl Default for EoatModel {
    /// Eight cups on the diagonals of a 25 cm square ("X" pattern).
    fn default() -> Self {
        let (o, i) = (0.105, 0.045);
        EoatModel {
            cup_centers: [[o, o], [-o, o], [-o, -o], [o, -o], [i, i], [-i, i], [-i, -i], [i, -i]],
            cup_radius: 0.02,
            footprint: 0.25,
        }
    }
}

impl EoatModel {
    /// World (x, y) of cup `i` for a tool at (x, y) rotated by r.
    pub fn cup_world(&self, i: usize, x: f64, y: f64, r: f64) -> (f64, f64) {
        let (s, c) = r.sin_cos();
        let [u, v] = self.cup_centers[i];
        (x + c * u - s * v, y + s * u + c * v)
    }
}

/// Seal and multi-pick thresholds of the gripper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperConfig {
    pub eoat: EoatModel,
    pub seal_rmse_max: f64,
    pub seal_dz_max: f64,
    /// Fraction of a cup's disk area that another package must cover under
    /// the cup's flange for a multi-pick.
    pub multipick_overlap: f64,
    /// Flange radius as a multiple of the cup radius.
    pub flange_factor: f64,
}

impl Default for GripperConfig {
    fn default() -> Self {
        GripperConfig {
            eoat: EoatModel::default(),
            seal_rmse_max: 0.005,
            seal_dz_max: 0.01,
            multipick_overlap: 0.5,
            flange_factor: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkspaceConfig {
    pub arm_base: [f64; 3],
    pub reach: f64,
    pub tilt_max: f64,
    pub min_cups: usize,
}

impl Default for WorkspaceConfig {
    /// Arm base at the midpoint of the default conveyor's long edge, 0.4 m back.
    fn default() -> Self {
        WorkspaceConfig {
            arm_base: [0.6, -0.4, 0.0],
            reach: 1.831,
            tilt_max: 0.5,
            min_cups: 1,
        }
    }
}

/// Subset of the eight cups as a bit mask; serialized as a sorted index list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<u8>", from = "Vec<u8>")]
pub struct CupSet(pub u8);

impl CupSet {
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..N_CUPS).filter(move |&i| self.contains(i))
    }
}

impl From<CupSet> for Vec<u8> {
    fn from(c: CupSet) -> Self {
        c.iter().map(|i| i as u8).collect()
    }
}

impl From<Vec<u8>> for CupSet {
    fn from(v: Vec<u8>) -> Self {
        let mut c = CupSet::default();
        for i in v.into_iter().filter(|&i| (i as usize) < N_CUPS) {
            c.insert(i as usize);
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PickAction {
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub cups: CupSet,
    pub z: f64,
    pub normal: [f64; 3],
    pub target_segment: i32,
}

impl PickAction {
    /// Builds an action at (x, y, r), deriving z, normal, target segment and
    /// active cups from the frame so none of them can go stale.
    pub fn new(frame: &SensorFrame, gripper: &GripperConfig, x: f64, y: f64, r: f64) -> Result<PickAction> {
        let surface = surface_at(frame, x, y, PATCH_RADIUS)?;
        let r = wrap_angle(r);
        Ok(PickAction {
            x,
            y,
            r,
            cups: activate_cups(frame, gripper, x, y, r),
            z: surface.z,
            normal: surface.normal,
            target_segment: surface.segment,
        })
    }

    /// Tool tilt: angle between the surface normal and +z.
    pub fn tilt(&self) -> f64 {
        self.normal[2].clamp(-1.0, 1.0).acos()
    }

    pub fn pose(&self) -> [f64; 3] {
        [self.x, self.y, self.r]
    }
}

/// Per-cup seal evaluation; `normal` is the fitted surface normal under the
/// cup when the cup is active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CupEval {
    pub active: bool,
    pub normal: Option<[f64; 3]>,
}

/// Evaluates each cup's seal conditions: disk entirely on the target segment,
/// planar enough under the disk, and close in height to the pick point.
pub fn evaluate_cups(frame: &SensorFrame, gripper: &GripperConfig, x: f64, y: f64, r: f64) -> [CupEval; N_CUPS] {
    let mut out = [CupEval { active: false, normal: None }; N_CUPS];
    let target = frame.segment_at(x, y);
    if target == EMPTY {
        return out;
    }
    let z0 = frame.height_at(x, y);
    let radius = gripper.eoat.cup_radius;
    let b = frame.bounds;
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(64);
    for (i, slot) in out.iter_mut().enumerate() {
        let (cx, cy) = gripper.eoat.cup_world(i, x, y, r);
        if cx - radius < b.x_min || cx + radius > b.x_max || cy - radius < b.y_min || cy + radius > b.y_max {
            continue;
        }
        if (frame.height_at(cx, cy) - z0).abs() > gripper.seal_dz_max {
            continue;
        }
        pts.clear();
        let mut on_target = true;
        frame.for_each_in_disk(cx, cy, radius, |ix, iy, k| {
            if frame.segmentgrid[k] != target {
                on_target = false;
            } else if on_target {
                let (px, py) = frame.cell_center(ix, iy);
                pts.push([px, py, frame.heightgrid[k]]);
            }
        });
        if !on_target {
            continue;
        }
        if let Ok(fit) = fit_plane(&pts) {
            if fit.rmse <= gripper.seal_rmse_max {
                *slot = CupEval {
                    active: true,
                    normal: Some(fit.normal),
                };
            }
        }
    }
    out
}

pub fn activate_cups(frame: &SensorFrame, gripper: &GripperConfig, x: f64, y: f64, r: f64) -> CupSet {
    let mut set = CupSet::default();
    for (i, e) in evaluate_cups(frame, gripper, x, y, r).iter().enumerate() {
        if e.active {
            set.insert(i);
        }
    }
    set
}

/// Flat indices of every cell labeled `segment`, row-major.
pub fn segment_cells(frame: &SensorFrame, segment: i32) -> Vec<usize> {
    frame
        .segmentgrid
        .iter()
        .enumerate()
        .filter_map(|(k, &s)| (s == segment).then_some(k))
        .collect()
}

/// Orientation of the dominant axis of a set of cells, in (−π/2, π/2].
pub fn principal_axis(frame: &SensorFrame, cells: &[usize]) -> f64 {
    let n = cells.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for &k in cells {
        let (x, y) = frame.cell_center(k % frame.nx, k / frame.nx);
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &k in cells {
        let (x, y) = frame.cell_center(k % frame.nx, k / frame.nx);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    if theta <= -PI / 2.0 {
        theta + PI
    } else {
        theta
    }
}

pub const MIN_SEGMENT_CELLS: usize = 10;

/// Heuristic sampler: the first candidate sits at the segment centroid (or the
/// nearest segment cell when the centroid falls off the segment) aligned with
/// the principal axis; the rest are uniform over the segment's cells with the
/// rotation jittered within ±π/4 of that axis.
pub fn sample_candidates(
    frame: &SensorFrame,
    gripper: &GripperConfig,
    segment: &SegmentSummary,
    k: usize,
    rng: &mut StreamRng,
) -> Vec<PickAction> {
    let cells = segment_cells(frame, segment.id);
    if cells.len() < MIN_SEGMENT_CELLS || k == 0 {
        return Vec::new();
    }
    let axis = principal_axis(frame, &cells);
    let [cx, cy] = segment.centroid;
    let (x0, y0) = if frame.segment_at(cx, cy) == segment.id {
        (cx, cy)
    } else {
        let nearest = cells
            .iter()
            .map(|&c| {
                let (x, y) = frame.cell_center(c % frame.nx, c / frame.nx);
                ((x - cx).powi(2) + (y - cy).powi(2), x, y)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("segment has cells");
        (nearest.1, nearest.2)
    };
    let mut out = Vec::with_capacity(k);
    if let Ok(a) = PickAction::new(frame, gripper, x0, y0, axis) {
        out.push(a);
    }
    let half = 0.5 * frame.resolution;
    while out.len() < k {
        let c = cells[rng.random_range(0..cells.len())];
        let (px, py) = frame.cell_center(c % frame.nx, c / frame.nx);
        let x = px + rng.random_range(-half..half);
        let y = py + rng.random_range(-half..half);
        let r = axis + rng.random_range(-FRAC_PI_4..FRAC_PI_4);
        if let Ok(a) = PickAction::new(frame, gripper, x, y, r) {
            if a.target_segment == segment.id {
                out.push(a);
            }
        }
    }
    out
}

/// Reach, tool-tilt and minimum-cup checks.
pub fn check_feasible(action: &PickAction, workspace: &WorkspaceConfig) -> bool {
    let b = workspace.arm_base;
    let d = ((action.x - b[0]).powi(2) + (action.y - b[1]).powi(2) + (action.z - b[2]).powi(2)).sqrt();
    d <= workspace.reach && action.tilt() <= workspace.tilt_max && action.cups.len() >= workspace.min_cups
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PickResult {
    Success,
    Missed,
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PickOutcome {
    pub result: PickResult,
    pub multipick: bool,
    pub p_true: f64,
}

impl PickOutcome {
    pub fn infeasible() -> Self {
        PickOutcome {
            result: PickResult::Infeasible,
            multipick: false,
            p_true: 0.0,
        }
    }
}

/// True when an active cup's flange covers another package, at a compatible
/// height, over at least `multipick_overlap` of the cup's disk area.
pub fn detects_multipick(frame: &SensorFrame, gripper: &GripperConfig, action: &PickAction) -> bool {
    let radius = gripper.eoat.cup_radius;
    let flange = gripper.flange_factor * radius;
    let cell_area = frame.resolution * frame.resolution;
    let needed = gripper.multipick_overlap * PI * radius * radius;
    let mut counts: Vec<(i32, usize)> = Vec::new();
    for i in action.cups.iter() {
        let (cx, cy) = gripper.eoat.cup_world(i, action.x, action.y, action.r);
        let zc = frame.height_at(cx, cy);
        counts.clear();
        frame.for_each_in_disk(cx, cy, flange, |_, _, k| {
            let s = frame.segmentgrid[k];
            if s != EMPTY && s != action.target_segment && (frame.heightgrid[k] - zc).abs() <= gripper.seal_dz_max {
                match counts.iter_mut().find(|(id, _)| *id == s) {
                    Some(e) => e.1 += 1,
                    None => counts.push((s, 1)),
                }
            }
        });
        if counts.iter().any(|&(_, n)| n as f64 * cell_area >= needed) {
            return true;
        }
    }
    false
}

/// Executes a pick against a success oracle. Infeasible actions return
/// without touching `rng`; feasible ones consume exactly one uniform draw.
pub fn simulate_execute(
    frame: &SensorFrame,
    gripper: &GripperConfig,
    workspace: &WorkspaceConfig,
    action: &PickAction,
    oracle: impl FnOnce(&PickAction) -> f64,
    rng: &mut StreamRng,
) -> PickOutcome {
    if !check_feasible(action, workspace) {
        return PickOutcome::infeasible();
    }
    let p_true = oracle(action);
    let u: f64 = rng.random();
    PickOutcome {
        result: if u < p_true { PickResult::Success } else { PickResult::Missed },
        multipick: detects_multipick(frame, gripper, action),
        p_true,
    }
}

/// One line of the executed-pick log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PickRecord {
    pub scene_seed: u64,
    pub pick_index: u64,
    pub action: Option<PickAction>,
    pub active_cups: Vec<u8>,
    pub outcome: PickResult,
    pub multipick: bool,
    pub p_true: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::scene::{render_sensor, visible_segments, Bounds, PackageKind, PackageSpec, Scene};

    pub(crate) fn boxed(id: u32, c: [f64; 2], dims: [f64; 3], yaw: f64) -> PackageSpec {
        PackageSpec {
            id,
            kind: PackageKind::Box,
            center: [c[0], c[1], 0.5 * dims[2]],
            yaw,
            dims,
            top_tilt: [0.0, 0.0],
        }
    }

    fn frame_of(packages: Vec<PackageSpec>) -> SensorFrame {
        let scene = Scene {
            packages,
            conveyor_bounds: Bounds::default(),
            seed: 0,
        };
        render_sensor(&scene, 0.005).unwrap()
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
        for k in -20..20 {
            let a = wrap_angle(0.37 * k as f64);
            assert!(a > -PI && a <= PI);
        }
    }

    #[test]
    fn default_layout_fits_footprint() {
        let e = EoatModel::default();
        for c in e.cup_centers {
            assert!(c[0].abs() + e.cup_radius <= 0.5 * e.footprint + 1e-12);
            assert!(c[1].abs() + e.cup_radius <= 0.5 * e.footprint + 1e-12);
        }
    }

    #[test]
    fn all_cups_on_large_flat_box() {
        let f = frame_of(vec![boxed(1, [0.6, 0.5], [0.5, 0.5, 0.2], 0.0)]);
        let g = GripperConfig::default();
        assert_eq!(activate_cups(&f, &g, 0.6, 0.5, 0.0).len(), 8);
        assert_eq!(activate_cups(&f, &g, 0.6, 0.5, 0.7).len(), 8);
    }

    #[test]
    fn no_cups_on_conveyor() {
        let f = frame_of(vec![boxed(1, [0.6, 0.5], [0.5, 0.5, 0.2], 0.0)]);
        assert!(activate_cups(&f, &GripperConfig::default(), 0.1, 0.1, 0.0).is_empty());
    }

    #[test]
    fn shifting_toward_the_edge_adds_cups() {
        // Box spans x ∈ [0.5, 0.7]. Centered, the outer cups (x ± 0.105,
        // radius 0.02) overhang both edges, leaving the 4 inner cups. At
        // x = 0.63 the −x outer pair spans [0.505, 0.545] and seals too,
        // while the +x pair still overhangs.
        let f = frame_of(vec![boxed(1, [0.6, 0.5], [0.2, 0.5, 0.1], 0.0)]);
        let g = GripperConfig::default();
        assert_eq!(activate_cups(&f, &g, 0.60, 0.5, 0.0).len(), 4);
        let shifted = activate_cups(&f, &g, 0.63, 0.5, 0.0);
        assert_eq!(shifted.len(), 6);
        assert!(shifted.contains(1) && shifted.contains(2));
        assert!(!shifted.contains(0) && !shifted.contains(3));
    }

    #[test]
    fn candidates_follow_the_heuristic() {
        let f = frame_of(vec![boxed(4, [0.6, 0.5], [0.4, 0.2, 0.1], 0.0)]);
        let segs = visible_segments(&f);
        let g = GripperConfig::default();
        let one = sample_candidates(&f, &g, &segs[0], 1, &mut stream(1, "c", 0));
        assert_eq!(one.len(), 1);
        assert!((one[0].x - 0.6).abs() <= 0.005 && (one[0].y - 0.5).abs() <= 0.005);
        assert!(one[0].r.abs() < 1e-9);

        let tall = frame_of(vec![boxed(4, [0.6, 0.5], [0.2, 0.4, 0.1], 0.0)]);
        let segs_t = visible_segments(&tall);
        let c = sample_candidates(&tall, &g, &segs_t[0], 1, &mut stream(1, "c", 0));
        assert!((c[0].r - PI / 2.0).abs() < 1e-9);

        let five = sample_candidates(&f, &g, &segs[0], 5, &mut stream(2, "c", 0));
        assert_eq!(five.len(), 5);
        for (i, a) in five.iter().enumerate() {
            assert!(crate::scene::polygon_contains(&segs[0].polygon, a.x, a.y) || f.segment_at(a.x, a.y) == 4);
            assert_eq!(a.target_segment, 4);
            for b in &five[..i] {
                assert_ne!(a.pose(), b.pose());
            }
        }
        assert_eq!(five, sample_candidates(&f, &g, &segs[0], 5, &mut stream(2, "c", 0)));
    }

    #[test]
    fn tiny_segment_gives_no_candidates() {
        let f = frame_of(vec![boxed(1, [0.6, 0.5], [0.012, 0.012, 0.1], 0.0)]);
        let segs = visible_segments(&f);
        assert!(segs[0].cell_count < MIN_SEGMENT_CELLS);
        assert!(sample_candidates(&f, &GripperConfig::default(), &segs[0], 3, &mut stream(0, "c", 0)).is_empty());
    }

    #[test]
    fn feasibility_checks() {
        let f = frame_of(vec![boxed(1, [0.6, 0.5], [0.5, 0.5, 0.2], 0.0)]);
        let g = GripperConfig::default();
        let w = WorkspaceConfig::default();
        let mut a = PickAction::new(&f, &g, 0.6, 0.5, 0.0).unwrap();
        a.cups = CupSet(0b0111);
        assert!(check_feasible(&a, &w));
        a.cups = CupSet(0);
        assert!(!check_feasible(&a, &w));

        let far = WorkspaceConfig {
            arm_base: [0.6, 0.5 - 2.0, 0.2],
            ..WorkspaceConfig::default()
        };
        let b = PickAction::new(&f, &g, 0.6, 0.5, 0.0).unwrap();
        assert!(!check_feasible(&b, &far));
    }

    #[test]
    fn raising_min_cups_never_helps() {
        let f = frame_of(vec![boxed(1, [0.6, 0.5], [0.2, 0.5, 0.1], 0.0)]);
        let g = GripperConfig::default();
        for x in [0.52, 0.56, 0.6, 0.64, 0.68] {
            let a = PickAction::new(&f, &g, x, 0.5, 0.3).unwrap();
            let mut prev = true;
            for m in 0..=8 {
                let w = WorkspaceConfig {
                    min_cups: m,
                    ..WorkspaceConfig::default()
                };
                let ok = check_feasible(&a, &w);
                assert!(prev || !ok);
                prev = ok;
            }
        }
    }

    #[test]
    fn degenerate_oracles_and_binomial_rate() {
        let f = frame_of(vec![boxed(1, [0.6, 0.5], [0.5, 0.5, 0.2], 0.0)]);
        let g = GripperConfig::default();
        let w = WorkspaceConfig::default();
        let a = PickAction::new(&f, &g, 0.6, 0.5, 0.0).unwrap();
        let mut rng = stream(3, "outcome", 0);
        for _ in 0..100 {
            assert_eq!(simulate_execute(&f, &g, &w, &a, |_| 1.0, &mut rng).result, PickResult::Success);
            assert_eq!(simulate_execute(&f, &g, &w, &a, |_| 0.0, &mut rng).result, PickResult::Missed);
        }
        let mut rng = stream(4, "outcome", 0);
        let n = 10_000;
        let wins = (0..n)
            .filter(|_| simulate_execute(&f, &g, &w, &a, |_| 0.9, &mut rng).result == PickResult::Success)
            .count();
        let frac = wins as f64 / n as f64;
        assert!((frac - 0.9).abs() <= 3.0 * (0.9f64 * 0.1 / n as f64).sqrt(), "{frac}");
    }

    #[test]
    fn one_draw_per_feasible_pick() {
        let f = frame_of(vec![boxed(1, [0.6, 0.5], [0.5, 0.5, 0.2], 0.0)]);
        let g = GripperConfig::default();
        let w = WorkspaceConfig::default();
        let good = PickAction::new(&f, &g, 0.6, 0.5, 0.0).unwrap();
        let bad = PickAction::new(&f, &g, 0.05, 0.05, 0.0).unwrap();
        let mut r1 = stream(5, "o", 0);
        let mut r2 = stream(5, "o", 0);
        let o = simulate_execute(&f, &g, &w, &bad, |_| 0.5, &mut r1);
        assert_eq!(o, PickOutcome::infeasible());
        simulate_execute(&f, &g, &w, &good, |_| 0.5, &mut r1);
        let _: f64 = r2.random();
        assert_eq!(r1.random::<u64>(), r2.random::<u64>());
    }

    #[test]
    fn multipick_between_flush_boxes() {
        // Two equally tall boxes touching along x = 0.6.
        let f = frame_of(vec![
            boxed(1, [0.5, 0.5], [0.2, 0.4, 0.1], 0.0),
            boxed(2, [0.7, 0.5], [0.2, 0.4, 0.1], 0.0),
        ]);
        let g = GripperConfig::default();
        let near_seam = PickAction::new(&f, &g, 0.535, 0.5, 0.0).unwrap();
        assert!(!near_seam.cups.is_empty());
        assert!(detects_multipick(&f, &g, &near_seam));
        let centered = PickAction::new(&f, &g, 0.5, 0.5, 0.0).unwrap();
        assert!(!detects_multipick(&f, &g, &centered));
    }

    #[test]
    fn cupset_serializes_as_index_list() {
        let c = CupSet(0b1000_0101);
        assert_eq!(serde_json::to_string(&c).unwrap(), "[0,2,7]");
        let back: CupSet = serde_json::from_str("[0,2,7]").unwrap();
        assert_eq!(back, c);
    }
}
