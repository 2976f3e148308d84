//! Synthetic cluttered-package scenes and their top-down sensor rendering.
//!
//! Conveyor frame: right-handed, z up, conveyor plane at z = 0. Package tops
//! are planes tilted by `top_tilt`; the renderer is a z-buffer over a regular
//! grid of cell centers, so every labeled cell is guaranteed to lie inside the
//! labeling package's footprint.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Segment label for cells that show bare conveyor.
pub const EMPTY: i32 = -1;

pub const MAX_PACKAGE_HEIGHT: f64 = 0.6;
pub const MAX_FOOTPRINT_SIDE: f64 = 0.6;
pub const MAX_TOP_TILT: f64 = 0.25;
pub const MIN_RESOLUTION: f64 = 0.002;
pub const MAX_RESOLUTION: f64 = 0.02;
pub const DEFAULT_RESOLUTION: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PackageKind {
    Box,
    Polybag,
    Envelope,
}

impl PackageKind {
    pub const ALL: [PackageKind; 3] = [PackageKind::Box, PackageKind::Polybag, PackageKind::Envelope];

    pub fn index(self) -> usize {
        match self {
            PackageKind::Box => 0,
            PackageKind::Polybag => 1,
            PackageKind::Envelope => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PackageKind::Box => "box",
            PackageKind::Polybag => "polybag",
            PackageKind::Envelope => "envelope",
        }
    }
}

/// Axis-aligned rectangle in the conveyor plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 1.2,
            y_max: 1.0,
        }
    }
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Bounds {
        Bounds {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackageSpec {
    pub id: u32,
    pub kind: PackageKind,
    /// Box center in the conveyor frame (meters).
    pub center: [f64; 3],
    pub yaw: f64,
    /// (length, width, height), meters.
    pub dims: [f64; 3],
    /// Top-surface tilt about the conveyor x and y axes (radians).
    pub top_tilt: [f64; 2],
}

impl PackageSpec {
    pub fn base_z(&self) -> f64 {
        self.center[2] - 0.5 * self.dims[2]
    }

    pub fn top_center_z(&self) -> f64 {
        self.center[2] + 0.5 * self.dims[2]
    }

    /// Slopes (dz/dx, dz/dy) of the top plane. Tilting about x raises +y,
    /// tilting about y lowers +x.
    pub fn top_slopes(&self) -> (f64, f64) {
        (-self.top_tilt[1].tan(), self.top_tilt[0].tan())
    }

    /// Upward unit normal of the (unclamped) top plane.
    pub fn top_normal(&self) -> [f64; 3] {
        let (sx, sy) = self.top_slopes();
        let n = (sx * sx + sy * sy + 1.0).sqrt();
        [-sx / n, -sy / n, 1.0 / n]
    }

    /// Height of the top surface above (x, y). The tilted plane is clamped at
    /// the package base so steep, thin packages never dip below their support.
    pub fn top_z(&self, x: f64, y: f64) -> f64 {
        let (sx, sy) = self.top_slopes();
        let plane = self.top_center_z() + sx * (x - self.center[0]) + sy * (y - self.center[1]);
        plane.max(self.base_z())
    }

    /// Exact point-in-rotated-rectangle test in the package's local frame.
    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= 0.5 * self.dims[0] && v.abs() <= 0.5 * self.dims[1]
    }

    /// Footprint corners, counter-clockwise.
    pub fn footprint_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = 0.5 * self.dims[0];
        let hw = 0.5 * self.dims[1];
        let mut out = [[0.0; 2]; 4];
        for (k, (u, v)) in [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].into_iter().enumerate() {
            out[k] = [self.center[0] + c * u - s * v, self.center[1] + s * u + c * v];
        }
        // (hl, hw) then (-hl, hw) goes counter-clockwise in the local frame.
        out
    }

    fn footprint_aabb(&self) -> (f64, f64, f64, f64) {
        let corners = self.footprint_corners();
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for [x, y] in corners {
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub packages: Vec<PackageSpec>,
    pub conveyor_bounds: Bounds,
    pub seed: u64,
}

impl Scene {
    pub fn package(&self, id: i32) -> Option<&PackageSpec> {
        self.packages.iter().find(|p| p.id as i64 == id as i64)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Scene {
        let mut s = self.clone();
        for p in &mut s.packages {
            p.center[0] += dx;
            p.center[1] += dy;
        }
        s.conveyor_bounds = s.conveyor_bounds.translated(dx, dy);
        s
    }
}

/// Per-kind dimension ranges, each `[min, max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimRange {
    pub length: [f64; 2],
    pub width: [f64; 2],
    pub height: [f64; 2],
    /// Maximum |tilt| per axis (radians).
    pub max_tilt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindMix {
    #[serde(rename = "box")]
    pub box_weight: f64,
    pub polybag: f64,
    pub envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub count_min: usize,
    pub count_max: usize,
    pub kind_mix: KindMix,
    pub box_dims: DimRange,
    pub polybag_dims: DimRange,
    pub envelope_dims: DimRange,
    pub pile_probability: f64,
    pub bounds: Bounds,
    /// Package centers stay at least this far inside the conveyor bounds.
    pub margin: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            count_min: 4,
            count_max: 12,
            kind_mix: KindMix {
                box_weight: 0.60,
                polybag: 0.25,
                envelope: 0.15,
            },
            box_dims: DimRange {
                length: [0.15, 0.55],
                width: [0.10, 0.40],
                height: [0.05, 0.40],
                max_tilt: 0.03,
            },
            polybag_dims: DimRange {
                length: [0.15, 0.45],
                width: [0.10, 0.35],
                height: [0.03, 0.15],
                max_tilt: 0.25,
            },
            envelope_dims: DimRange {
                length: [0.20, 0.40],
                width: [0.12, 0.30],
                height: [0.005, 0.02],
                max_tilt: 0.01,
            },
            pile_probability: 0.3,
            bounds: Bounds::default(),
            margin: 0.1,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count_min > self.count_max {
            return Err(Error::config("count_min", "must not exceed count_max"));
        }
        let m = &self.kind_mix;
        for (name, w) in [("kind_mix.box", m.box_weight), ("kind_mix.polybag", m.polybag), ("kind_mix.envelope", m.envelope)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(name, "weight must be finite and non-negative"));
            }
        }
        if m.box_weight + m.polybag + m.envelope <= 0.0 {
            return Err(Error::config("kind_mix", "weights must not all be zero"));
        }
        for (name, d) in [("box_dims", &self.box_dims), ("polybag_dims", &self.polybag_dims), ("envelope_dims", &self.envelope_dims)] {
            for (axis, r, cap) in [
                ("length", d.length, MAX_FOOTPRINT_SIDE),
                ("width", d.width, MAX_FOOTPRINT_SIDE),
                ("height", d.height, MAX_PACKAGE_HEIGHT),
            ] {
                let field = format!("{name}.{axis}");
                if !(r[0] > 0.0 && r[1] > 0.0) {
                    return Err(Error::config(field, "dimensions must be strictly positive"));
                }
                if r[0] > r[1] {
                    return Err(Error::config(field, "empty range (min > max)"));
                }
                if r[1] > cap {
                    return Err(Error::config(field, format!("exceeds {cap} m")));
                }
            }
            if !(0.0..=MAX_TOP_TILT).contains(&d.max_tilt) {
                return Err(Error::config(format!("{name}.max_tilt"), format!("must lie in [0, {MAX_TOP_TILT}]")));
            }
        }
        if !(0.0..=1.0).contains(&self.pile_probability) {
            return Err(Error::config("pile_probability", "must lie in [0, 1]"));
        }
        let b = &self.bounds;
        if !(b.width() > 0.0 && b.height() > 0.0) {
            return Err(Error::config("bounds", "empty rectangle"));
        }
        if !(self.margin >= 0.0 && 2.0 * self.margin < b.width().min(b.height())) {
            return Err(Error::config("margin", "must be non-negative and leave a non-empty placement area"));
        }
        Ok(())
    }

    fn dims_for(&self, kind: PackageKind) -> &DimRange {
        match kind {
            PackageKind::Box => &self.box_dims,
            PackageKind::Polybag => &self.polybag_dims,
            PackageKind::Envelope => &self.envelope_dims,
        }
    }
}

fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Highest package surface strictly beneath (x, y), or the conveyor plane.
fn support_z(packages: &[PackageSpec], x: f64, y: f64) -> f64 {
    packages
        .iter()
        .filter(|p| p.footprint_contains(x, y))
        .map(|p| p.top_z(x, y))
        .fold(0.0, f64::max)
}

/// Deterministic scene sampler. Each new package rests on the highest surface
/// beneath its footprint center; with `pile_probability` it is deliberately
/// dropped onto a previously placed package.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let rng = &mut crate::rng::stream(seed, "scene", 0);
    let count = rng.random_range(config.count_min..=config.count_max);
    let b = config.bounds;
    let (lo_x, hi_x) = (b.x_min + config.margin, b.x_max - config.margin);
    let (lo_y, hi_y) = (b.y_min + config.margin, b.y_max - config.margin);
    let mix = &config.kind_mix;
    let total_w = mix.box_weight + mix.polybag + mix.envelope;

    let mut packages: Vec<PackageSpec> = Vec::with_capacity(count);
    for i in 0..count {
        let u = rng.random::<f64>() * total_w;
        let kind = if u < mix.box_weight {
            PackageKind::Box
        } else if u < mix.box_weight + mix.polybag {
            PackageKind::Polybag
        } else {
            PackageKind::Envelope
        };
        let d = config.dims_for(kind);
        let a = uniform(rng, d.length[0], d.length[1]);
        let w = uniform(rng, d.width[0], d.width[1]);
        let h = uniform(rng, d.height[0], d.height[1]);
        let (length, width) = if a >= w { (a, w) } else { (w, a) };
        let yaw = uniform(rng, -std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
        let tilt = [uniform(rng, -d.max_tilt, d.max_tilt), uniform(rng, -d.max_tilt, d.max_tilt)];

        let pile = !packages.is_empty() && rng.random::<f64>() < config.pile_probability;
        let (cx, cy) = if pile {
            let under = &packages[rng.random_range(0..packages.len())];
            let ox = uniform(rng, -0.25, 0.25) * under.dims[0];
            let oy = uniform(rng, -0.25, 0.25) * under.dims[1];
            let (s, c) = under.yaw.sin_cos();
            (
                (under.center[0] + c * ox - s * oy).clamp(lo_x, hi_x),
                (under.center[1] + s * ox + c * oy).clamp(lo_y, hi_y),
            )
        } else {
            (uniform(rng, lo_x, hi_x), uniform(rng, lo_y, hi_y))
        };
        let base = support_z(&packages, cx, cy);
        packages.push(PackageSpec {
            id: i as u32 + 1,
            kind,
            center: [cx, cy, base + 0.5 * h],
            yaw,
            dims: [length, width, h],
            top_tilt: tilt,
        });
    }
    Ok(Scene {
        packages,
        conveyor_bounds: b,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub bounds: Bounds,
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major (`iy * nx + ix`) surface heights; conveyor cells are 0.
    pub heightgrid: Vec<f64>,
    /// Row-major package ids, `EMPTY` for bare conveyor.
    pub segmentgrid: Vec<i32>,
    /// Package-type label attached to every rendered id.
    pub kinds: BTreeMap<i32, PackageKind>,
}

impl SensorFrame {
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.bounds.x_min + (ix as f64 + 0.5) * self.resolution,
            self.bounds.y_min + (iy as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing (x, y); points on the max edge belong to the last cell.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.bounds.contains(x, y) {
            return None;
        }
        let ix = (((x - self.bounds.x_min) / self.resolution).floor() as usize).min(self.nx - 1);
        let iy = (((y - self.bounds.y_min) / self.resolution).floor() as usize).min(self.ny - 1);
        Some((ix, iy))
    }

    pub fn segment_at(&self, x: f64, y: f64) -> i32 {
        self.cell_of(x, y).map_or(EMPTY, |(ix, iy)| self.segmentgrid[self.idx(ix, iy)])
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.cell_of(x, y).map_or(0.0, |(ix, iy)| self.heightgrid[self.idx(ix, iy)])
    }

    /// Inclusive cell-index window overlapping the square [x ± r] × [y ± r],
    /// clipped to the grid. `None` when the square misses the grid.
    pub fn cell_window(&self, x: f64, y: f64, r: f64) -> Option<(usize, usize, usize, usize)> {
        let res = self.resolution;
        let fx0 = ((x - r - self.bounds.x_min) / res - 0.5).ceil();
        let fx1 = ((x + r - self.bounds.x_min) / res - 0.5).floor();
        let fy0 = ((y - r - self.bounds.y_min) / res - 0.5).ceil();
        let fy1 = ((y + r - self.bounds.y_min) / res - 0.5).floor();
        if fx1 < 0.0 || fy1 < 0.0 || fx0 > (self.nx - 1) as f64 || fy0 > (self.ny - 1) as f64 || fx0 > fx1 || fy0 > fy1 {
            return None;
        }
        Some((
            fx0.max(0.0) as usize,
            (fx1 as usize).min(self.nx - 1),
            fy0.max(0.0) as usize,
            (fy1 as usize).min(self.ny - 1),
        ))
    }

    /// Number of grid cells whose centers lie within `radius` of (x, y),
    /// counting cells beyond the grid edge too (those are never segment cells).
    pub fn disk_cell_total(&self, x: f64, y: f64, radius: f64) -> usize {
        let res = self.resolution;
        let r2 = radius * radius;
        let gx = (x - self.bounds.x_min) / res - 0.5;
        let gy = (y - self.bounds.y_min) / res - 0.5;
        let span = radius / res;
        let (i0, i1) = ((gx - span).ceil() as i64, (gx + span).floor() as i64);
        let (j0, j1) = ((gy - span).ceil() as i64, (gy + span).floor() as i64);
        let mut n = 0;
        for j in j0..=j1 {
            let cy = self.bounds.y_min + (j as f64 + 0.5) * res - y;
            for i in i0..=i1 {
                let cx = self.bounds.x_min + (i as f64 + 0.5) * res - x;
                if cx * cx + cy * cy <= r2 {
                    n += 1;
                }
            }
        }
        n
    }

    /// Visit every in-grid cell whose center lies within `radius` of (x, y).
    pub fn for_each_in_disk(&self, x: f64, y: f64, radius: f64, mut f: impl FnMut(usize, usize, usize)) {
        let Some((ix0, ix1, iy0, iy1)) = self.cell_window(x, y, radius) else {
            return;
        };
        let r2 = radius * radius;
        for iy in iy0..=iy1 {
            let (_, cy) = self.cell_center(0, iy);
            let dy = cy - y;
            for ix in ix0..=ix1 {
                let (cx, _) = self.cell_center(ix, 0);
                let dx = cx - x;
                if dx * dx + dy * dy <= r2 {
                    f(ix, iy, self.idx(ix, iy));
                }
            }
        }
    }

    /// One (x, y, z) point per non-empty cell, row-major.
    pub fn points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.ny).flat_map(move |iy| {
            (0..self.nx).filter_map(move |ix| {
                let k = self.idx(ix, iy);
                (self.segmentgrid[k] != EMPTY).then(|| {
                    let (x, y) = self.cell_center(ix, iy);
                    [x, y, self.heightgrid[k]]
                })
            })
        })
    }
}

fn grid_extent(length: f64, resolution: f64) -> usize {
    ((length / resolution) - 1e-9).ceil().max(1.0) as usize
}

/// Z-buffer top-down rendering of `scene` at `resolution` meters per cell.
pub fn render_sensor(scene: &Scene, resolution: f64) -> Result<SensorFrame> {
    if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&resolution) {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]"
        )));
    }
    let bounds = scene.conveyor_bounds;
    let nx = grid_extent(bounds.width(), resolution);
    let ny = grid_extent(bounds.height(), resolution);
    let mut frame = SensorFrame {
        bounds,
        resolution,
        nx,
        ny,
        heightgrid: vec![0.0; nx * ny],
        segmentgrid: vec![EMPTY; nx * ny],
        kinds: BTreeMap::new(),
    };
    for p in &scene.packages {
        let (x0, y0, x1, y1) = p.footprint_aabb();
        let (cx, cy, r) = (0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.5 * (x1 - x0).max(y1 - y0));
        let Some((ix0, ix1, iy0, iy1)) = frame.cell_window(cx, cy, r) else {
            continue;
        };
        let id = p.id as i32;
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                let (x, y) = frame.cell_center(ix, iy);
                if !p.footprint_contains(x, y) {
                    continue;
                }
                let z = p.top_z(x, y);
                let k = frame.idx(ix, iy);
                if z > frame.heightgrid[k] || (frame.segmentgrid[k] == EMPTY && z >= frame.heightgrid[k]) {
                    frame.heightgrid[k] = z;
                    frame.segmentgrid[k] = id;
                }
            }
        }
    }
    let present: std::collections::BTreeSet<i32> = frame.segmentgrid.iter().copied().filter(|&s| s != EMPTY).collect();
    for p in &scene.packages {
        let id = p.id as i32;
        if present.contains(&id) {
            frame.kinds.insert(id, p.kind);
        }
    }
    Ok(frame)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub id: i32,
    pub kind: PackageKind,
    pub cell_count: usize,
    pub centroid: [f64; 2],
    /// Convex hull of the member cell centers, counter-clockwise.
    pub polygon: Vec<[f64; 2]>,
}

/// One summary per visible package id, sorted by id.
pub fn visible_segments(frame: &SensorFrame) -> Vec<SegmentSummary> {
    struct Acc {
        n: usize,
        sx: f64,
        sy: f64,
        extremes: Vec<[f64; 2]>,
        row: usize,
        row_lo: [f64; 2],
        row_hi: [f64; 2],
    }
    let mut acc: BTreeMap<i32, Acc> = BTreeMap::new();
    for iy in 0..frame.ny {
        for ix in 0..frame.nx {
            let s = frame.segmentgrid[frame.idx(ix, iy)];
            if s == EMPTY {
                continue;
            }
            let (x, y) = frame.cell_center(ix, iy);
            let a = acc.entry(s).or_insert_with(|| Acc {
                n: 0,
                sx: 0.0,
                sy: 0.0,
                extremes: Vec::new(),
                row: iy,
                row_lo: [x, y],
                row_hi: [x, y],
            });
            if a.row != iy {
                a.extremes.push(a.row_lo);
                a.extremes.push(a.row_hi);
                a.row = iy;
                a.row_lo = [x, y];
                a.row_hi = [x, y];
            }
            if x < a.row_lo[0] {
                a.row_lo = [x, y];
            }
            if x > a.row_hi[0] {
                a.row_hi = [x, y];
            }
            a.n += 1;
            a.sx += x;
            a.sy += y;
        }
    }
    acc.into_iter()
        .map(|(id, mut a)| {
            a.extremes.push(a.row_lo);
            a.extremes.push(a.row_hi);
            SegmentSummary {
                id,
                kind: frame.kinds.get(&id).copied().unwrap_or(PackageKind::Box),
                cell_count: a.n,
                centroid: [a.sx / a.n as f64, a.sy / a.n as f64],
                polygon: convex_hull(a.extremes),
            }
        })
        .collect()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; collinear points are dropped.
pub fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Point-in-convex-polygon test (boundary counts as inside).
pub fn polygon_contains(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    match poly.len() {
        0 => false,
        1 => poly[0] == [x, y],
        2 => cross(poly[0], poly[1], [x, y]).abs() < 1e-12,
        n => (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], [x, y]) >= -1e-12),
    }
}
