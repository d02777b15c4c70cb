//! Workspaces in the unit hypercube: axis-aligned box obstacles, an occupancy
//! raster, collision queries, free-space sampling and local occupancy patches.
//!
//! Box boundaries count as occupied everywhere in this module. A segment that
//! only grazes a box face is in collision, and a raster cell whose center lies
//! on a face is occupied.

use std::fmt;
use std::ops::Index;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default wall thickness of the narrow-passage family.
pub const DEFAULT_WALL_THICKNESS: f64 = 0.04;
/// Minimum clearance between two walls and between a wall and the boundary.
pub const MIN_WALL_SEPARATION: f64 = 0.15;
/// Consecutive rejections after which free-space sampling gives up.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported dimension {0} (only 2 and 3 are supported)")]
    UnsupportedDimension(usize),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("state {0:?} lies outside the unit hypercube")]
    OutOfBounds(Vec<f64>),
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("free-space sampling exhausted after {0} consecutive rejections")]
    SamplingExhausted(usize),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
}

/// A point in `[0,1]^d` for `d` in {2, 3}. Stored inline so states are `Copy`.
#[derive(Clone, Copy, PartialEq)]
pub struct State {
    coords: [f64; 3],
    dim: usize,
}

impl State {
    pub fn new(coords: &[f64]) -> Result<Self, EnvError> {
        let dim = coords.len();
        if !(2..=3).contains(&dim) {
            return Err(EnvError::UnsupportedDimension(dim));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(EnvError::NonFinite);
        }
        let mut arr = [0.0; 3];
        arr[..dim].copy_from_slice(coords);
        Ok(Self { coords: arr, dim })
    }

    pub(crate) fn from_array(coords: [f64; 3], dim: usize) -> Self {
        debug_assert!((2..=3).contains(&dim));
        Self { coords, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn distance(&self, other: &State) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn distance_squared(&self, other: &State) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Point at parameter `t` on the segment from `self` to `other`.
    pub fn lerp(&self, other: &State, t: f64) -> State {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.coords[i] + t * (other.coords[i] - self.coords[i]);
        }
        State::from_array(out, self.dim)
    }

    pub fn in_unit_box(&self) -> bool {
        self.as_slice().iter().all(|c| (0.0..=1.0).contains(c))
    }
}

impl Index<usize> for State {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Serialize for State {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        State::new(&v).map_err(serde::de::Error::custom)
    }
}

/// Closed axis-aligned box inside the unit hypercube.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AabbRepr", into = "AabbRepr")]
pub struct Aabb {
    min: [f64; 3],
    max: [f64; 3],
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct AabbRepr {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl TryFrom<AabbRepr> for Aabb {
    type Error = EnvError;
    fn try_from(r: AabbRepr) -> Result<Self, EnvError> {
        Aabb::new(&r.min, &r.max)
    }
}

impl From<Aabb> for AabbRepr {
    fn from(b: Aabb) -> Self {
        AabbRepr {
            min: b.min().to_vec(),
            max: b.max().to_vec(),
        }
    }
}

impl fmt::Debug for Aabb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Aabb({:?} .. {:?})", self.min(), self.max())
    }
}

impl Aabb {
    pub fn new(min: &[f64], max: &[f64]) -> Result<Self, EnvError> {
        let dim = min.len();
        if !(2..=3).contains(&dim) {
            return Err(EnvError::UnsupportedDimension(dim));
        }
        if max.len() != dim {
            return Err(EnvError::DimensionMismatch {
                expected: dim,
                got: max.len(),
            });
        }
        for i in 0..dim {
            let (lo, hi) = (min[i], max[i]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(EnvError::NonFinite);
            }
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
                return Err(EnvError::InvalidObstacle(format!(
                    "axis {i}: [{lo}, {hi}] leaves the unit interval"
                )));
            }
            if lo >= hi {
                return Err(EnvError::InvalidObstacle(format!(
                    "axis {i}: min {lo} is not below max {hi}"
                )));
            }
        }
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        a[..dim].copy_from_slice(min);
        b[..dim].copy_from_slice(max);
        Ok(Self {
            min: a,
            max: b,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min(&self) -> &[f64] {
        &self.min[..self.dim]
    }

    pub fn max(&self) -> &[f64] {
        &self.max[..self.dim]
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        (0..self.dim).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Slab test for the closed segment `a`–`b` against the closed box.
    pub fn intersects_segment(&self, a: &[f64], b: &[f64]) -> bool {
        let mut t_enter = 0.0f64;
        let mut t_exit = 1.0f64;
        for i in 0..self.dim {
            let d = b[i] - a[i];
            if d == 0.0 {
                if a[i] < self.min[i] || a[i] > self.max[i] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d;
            let mut t0 = (self.min[i] - a[i]) * inv;
            let mut t1 = (self.max[i] - a[i]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
            if t_enter > t_exit {
                return false;
            }
        }
        true
    }

    /// Euclidean distance from `p` to the box; zero inside.
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| {
                let d = (self.min[i] - p[i]).max(0.0).max(p[i] - self.max[i]);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Cells per axis of the occupancy raster.
pub fn raster_side(dim: usize) -> usize {
    match dim {
        2 => 100,
        _ => 36,
    }
}

/// Cells per axis of a local patch.
pub fn patch_side(dim: usize) -> usize {
    match dim {
        2 => 10,
        _ => 12,
    }
}

/// Number of values in a local patch for the given dimension.
pub fn patch_len(dim: usize) -> usize {
    patch_side(dim).pow(dim as u32)
}

/// Binary occupancy grid, row-major with axis 0 slowest.
#[derive(Clone, PartialEq)]
pub struct Raster {
    side: usize,
    dim: usize,
    cells: Vec<u8>,
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Raster({}^{}, {} occupied)",
            self.side,
            self.dim,
            self.occupied_count()
        )
    }
}

impl Raster {
    fn rasterize(dim: usize, obstacles: &[Aabb]) -> Self {
        let side = raster_side(dim);
        let total = side.pow(dim as u32);
        let mut cells = vec![0u8; total];
        let mut center = [0.0; 3];
        for (flat, cell) in cells.iter_mut().enumerate() {
            let mut rem = flat;
            for axis in (0..dim).rev() {
                center[axis] = ((rem % side) as f64 + 0.5) / side as f64;
                rem /= side;
            }
            if obstacles.iter().any(|b| b.contains(&center[..dim])) {
                *cell = 1;
            }
        }
        Self { side, dim, cells }
    }

    pub(crate) fn from_cells(dim: usize, cells: Vec<u8>) -> Result<Self, EnvError> {
        let side = raster_side(dim);
        if cells.len() != side.pow(dim as u32) {
            return Err(EnvError::InvalidRaster(format!(
                "expected {} cells, found {}",
                side.pow(dim as u32),
                cells.len()
            )));
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(EnvError::InvalidRaster("non-binary cell".into()));
        }
        Ok(Self { side, dim, cells })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.side; self.dim]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == 1).count()
    }

    /// Cell value at signed integer coordinates; out-of-range cells read as occupied.
    pub fn get(&self, idx: &[isize]) -> u8 {
        let mut flat = 0usize;
        for &i in idx {
            if i < 0 || i as usize >= self.side {
                return 1;
            }
            flat = flat * self.side + i as usize;
        }
        self.cells[flat]
    }

    /// Integer coordinates of the cell containing `x`.
    pub fn cell_of(&self, x: &[f64]) -> [isize; 3] {
        let mut out = [0isize; 3];
        for (o, &c) in out.iter_mut().zip(x) {
            let i = (c * self.side as f64).floor() as isize;
            *o = i.clamp(0, self.side as isize - 1);
        }
        out
    }

    pub(crate) fn flat_index(&self, cell: &[isize]) -> usize {
        cell.iter().fold(0usize, |acc, &i| acc * self.side + i as usize)
    }
}

/// Flattened local occupancy grid centered on a state.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocalPatch {
    values: Vec<u8>,
}

impl fmt::Debug for LocalPatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "LocalPatch(len={}, occupied={})",
            self.values.len(),
            self.occupied_count()
        )
    }
}

impl LocalPatch {
    pub fn from_values(values: Vec<u8>) -> Result<Self, EnvError> {
        if values.len() != patch_len(2) && values.len() != patch_len(3) {
            return Err(EnvError::InvalidRaster(format!(
                "patch length {} matches neither 2D nor 3D",
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(EnvError::InvalidRaster("non-binary patch value".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn occupied_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn to_features(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    dim: usize,
    obstacles: Vec<Aabb>,
    raster: Raster,
    seed: u64,
}

impl Environment {
    /// Builds an environment and its raster from a list of boxes.
    ///
    /// Free space is not required to be nonempty here; generated environments
    /// guarantee it and [`Environment::sample_free`] reports the degenerate case.
    pub fn new(dim: usize, obstacles: Vec<Aabb>, seed: u64) -> Result<Self, EnvError> {
        if !(2..=3).contains(&dim) {
            return Err(EnvError::UnsupportedDimension(dim));
        }
        if let Some(b) = obstacles.iter().find(|b| b.dim() != dim) {
            return Err(EnvError::DimensionMismatch {
                expected: dim,
                got: b.dim(),
            });
        }
        let raster = Raster::rasterize(dim, &obstacles);
        Ok(Self {
            dim,
            obstacles,
            raster,
            seed,
        })
    }

    pub fn empty(dim: usize) -> Result<Self, EnvError> {
        Self::new(dim, Vec::new(), 0)
    }

    pub(crate) fn with_raster(
        dim: usize,
        obstacles: Vec<Aabb>,
        seed: u64,
        raster: Raster,
    ) -> Result<Self, EnvError> {
        let env = Self::new(dim, obstacles, seed)?;
        if env.raster != raster {
            return Err(EnvError::InvalidRaster(
                "stored raster disagrees with the obstacle boxes".into(),
            ));
        }
        Ok(env)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn obstacles(&self) -> &[Aabb] {
        &self.obstacles
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn has_free_cell(&self) -> bool {
        self.raster.cells.contains(&0)
    }

    fn check_dim(&self, x: &State) -> Result<(), EnvError> {
        if x.dim() != self.dim {
            return Err(EnvError::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// True iff `x` lies in no obstacle box (faces count as occupied).
    pub fn point_free(&self, x: &State) -> Result<bool, EnvError> {
        self.check_dim(x)?;
        Ok(self.is_free(x))
    }

    /// True iff the closed segment `a`–`b` misses every obstacle box.
    pub fn segment_free(&self, a: &State, b: &State) -> Result<bool, EnvError> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        Ok(self.is_segment_free(a, b))
    }

    pub(crate) fn is_free(&self, x: &State) -> bool {
        let p = x.as_slice();
        !self.obstacles.iter().any(|b| b.contains(p))
    }

    pub(crate) fn is_segment_free(&self, a: &State, b: &State) -> bool {
        let (pa, pb) = (a.as_slice(), b.as_slice());
        !self.obstacles.iter().any(|o| o.intersects_segment(pa, pb))
    }

    /// Distance from `x` to the nearest obstacle; infinite without obstacles.
    pub fn clearance(&self, x: &State) -> f64 {
        self.obstacles
            .iter()
            .map(|b| b.distance_to(x.as_slice()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Uniform draw from `[0,1)^d`, free or not.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let mut c = [0.0; 3];
        for v in c.iter_mut().take(self.dim) {
            *v = rng.random::<f64>();
        }
        State::from_array(c, self.dim)
    }

    /// Rejection sampling of a uniformly distributed free state.
    pub fn sample_free<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<State, EnvError> {
        for _ in 0..MAX_CONSECUTIVE_REJECTIONS {
            let x = self.sample_uniform(rng);
            if self.is_free(&x) {
                return Ok(x);
            }
        }
        Err(EnvError::SamplingExhausted(MAX_CONSECUTIVE_REJECTIONS))
    }

    /// Local occupancy window around the raster cell containing `x`.
    ///
    /// The window has side 10 (2D) or 12 (3D); the cell containing `x` sits at
    /// index `side / 2` along every axis. Cells outside the workspace read as
    /// occupied.
    pub fn local_patch(&self, x: &State) -> Result<LocalPatch, EnvError> {
        self.check_dim(x)?;
        if !x.in_unit_box() {
            return Err(EnvError::OutOfBounds(x.as_slice().to_vec()));
        }
        Ok(self.patch_at_cell(&self.raster.cell_of(x.as_slice())))
    }

    pub(crate) fn patch_at_cell(&self, cell: &[isize; 3]) -> LocalPatch {
        let mut values = Vec::with_capacity(patch_len(self.dim));
        self.for_each_patch_value(cell, |v| values.push(v));
        LocalPatch { values }
    }

    /// Indices of the occupied entries of the patch at `cell`, ascending.
    pub(crate) fn patch_active_at_cell(&self, cell: &[isize; 3], out: &mut Vec<usize>) {
        out.clear();
        let mut k = 0;
        self.for_each_patch_value(cell, |v| {
            if v == 1 {
                out.push(k);
            }
            k += 1;
        });
    }

    fn for_each_patch_value<F: FnMut(u8)>(&self, cell: &[isize; 3], mut f: F) {
        let side = patch_side(self.dim) as isize;
        let half = side / 2;
        let mut idx = [0isize; 3];
        match self.dim {
            2 => {
                for i in 0..side {
                    for j in 0..side {
                        idx[0] = cell[0] - half + i;
                        idx[1] = cell[1] - half + j;
                        f(self.raster.get(&idx[..2]));
                    }
                }
            }
            _ => {
                for i in 0..side {
                    for j in 0..side {
                        for k in 0..side {
                            idx[0] = cell[0] - half + i;
                            idx[1] = cell[1] - half + j;
                            idx[2] = cell[2] - half + k;
                            f(self.raster.get(&idx));
                        }
                    }
                }
            }
        }
    }
}

/// Parameters of the procedural narrow-passage family.
///
/// Walls are perpendicular to axis 0 and span the other axes completely. In
/// 2D a gap is an interval along axis 1; in 3D it is a square hole.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NarrowPassageParams {
    pub dim: usize,
    pub num_walls: usize,
    pub gaps_per_wall: usize,
    pub gap_width: f64,
    /// Extent of each wall along axis 0, i.e. the length of its passages.
    #[serde(default = "default_wall_thickness")]
    pub wall_thickness: f64,
}

fn default_wall_thickness() -> f64 {
    DEFAULT_WALL_THICKNESS
}

impl Default for NarrowPassageParams {
    fn default() -> Self {
        Self {
            dim: 2,
            num_walls: 3,
            gaps_per_wall: 2,
            gap_width: 0.03,
            wall_thickness: DEFAULT_WALL_THICKNESS,
        }
    }
}

pub fn generate_narrow_passage(
    params: &NarrowPassageParams,
    seed: u64,
) -> Result<Environment, EnvError> {
    let NarrowPassageParams {
        dim,
        num_walls,
        gaps_per_wall,
        gap_width,
        wall_thickness,
    } = *params;
    if !(2..=3).contains(&dim) {
        return Err(EnvError::UnsupportedDimension(dim));
    }
    if !(wall_thickness > 0.0 && wall_thickness < 1.0) {
        return Err(EnvError::InfeasibleGeometry(format!(
            "wall thickness {wall_thickness} must lie in (0, 1)"
        )));
    }
    if num_walls == 0 {
        return Err(EnvError::InfeasibleGeometry("at least one wall is required".into()));
    }
    if gaps_per_wall > 0
        && !(gap_width > 0.0 && gap_width < 1.0 / (2.0 * gaps_per_wall as f64))
    {
        return Err(EnvError::InfeasibleGeometry(format!(
            "gap width {gap_width} must lie in (0, {}) for {gaps_per_wall} gaps per wall",
            1.0 / (2.0 * gaps_per_wall as f64)
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = place_walls(num_walls, wall_thickness, &mut rng)?;

    let mut obstacles = Vec::new();
    for &c in &centers {
        let x0 = c - wall_thickness / 2.0;
        let x1 = c + wall_thickness / 2.0;
        let mut gaps = Vec::with_capacity(gaps_per_wall);
        let stratum = 1.0 / gaps_per_wall.max(1) as f64;
        for k in 0..gaps_per_wall {
            // half a gap width of margin keeps every wall piece nondegenerate
            let lo = k as f64 * stratum + gap_width / 2.0;
            let hi = (k + 1) as f64 * stratum - 1.5 * gap_width;
            let start = rng.random_range(lo..hi);
            let hole = if dim == 3 {
                Some(rng.random_range(gap_width / 2.0..1.0 - 1.5 * gap_width))
            } else {
                None
            };
            gaps.push((start, hole));
        }

        let mut y = 0.0;
        for &(start, hole) in &gaps {
            obstacles.push(wall_piece(dim, x0, x1, y, start, 0.0, 1.0)?);
            if let Some(z) = hole {
                let y1 = start + gap_width;
                obstacles.push(wall_piece(dim, x0, x1, start, y1, 0.0, z)?);
                obstacles.push(wall_piece(dim, x0, x1, start, y1, z + gap_width, 1.0)?);
            }
            y = start + gap_width;
        }
        obstacles.push(wall_piece(dim, x0, x1, y, 1.0, 0.0, 1.0)?);
    }

    let env = Environment::new(dim, obstacles, seed)?;
    if !env.has_free_cell() {
        return Err(EnvError::InfeasibleGeometry("no free raster cell".into()));
    }
    Ok(env)
}

fn wall_piece(
    dim: usize,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    z0: f64,
    z1: f64,
) -> Result<Aabb, EnvError> {
    if dim == 2 {
        Aabb::new(&[x0, y0], &[x1, y1])
    } else {
        Aabb::new(&[x0, y0, z0], &[x1, y1, z1])
    }
}

/// Sorted wall centers whose faces keep `MIN_WALL_SEPARATION` clearance from
/// each other and from the workspace boundary, uniform over all such layouts.
fn place_walls<R: Rng>(count: usize, thickness: f64, rng: &mut R) -> Result<Vec<f64>, EnvError> {
    let lo = MIN_WALL_SEPARATION + thickness / 2.0;
    let spacing = MIN_WALL_SEPARATION + thickness;
    let slack = (1.0 - 2.0 * lo) - (count - 1) as f64 * spacing;
    if slack < 0.0 {
        return Err(EnvError::InfeasibleGeometry(format!(
            "{count} walls of thickness {thickness} do not fit with {MIN_WALL_SEPARATION} clearance"
        )));
    }
    // sorted uniform offsets within the slack, then shifted apart by the spacing
    let mut offsets: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * slack).collect();
    offsets.sort_by(f64::total_cmp);
    Ok(offsets
        .into_iter()
        .enumerate()
        .map(|(i, u)| lo + u + i as f64 * spacing)
        .collect())
}
