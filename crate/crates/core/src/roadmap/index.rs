//! Uniform-grid spatial hash for exact fixed-radius neighbor queries.

use crate::env::State;

const MAX_CELLS_PER_AXIS_2D: usize = 512;
const MAX_CELLS_PER_AXIS_3D: usize = 64;

/// Bucket grid over `[0,1]^d` with cells at least as wide as the query radius,
/// so a radius query only has to visit the 3^d cells around the query point.
#[derive(Debug, Clone)]
pub struct GridIndex {
    dim: usize,
    cells_per_axis: usize,
    cell_size: f64,
    radius: f64,
    buckets: Vec<Vec<usize>>,
}

impl GridIndex {
    pub fn new(points: &[State], dim: usize, radius: f64) -> Self {
        let cap = if dim == 2 {
            MAX_CELLS_PER_AXIS_2D
        } else {
            MAX_CELLS_PER_AXIS_3D
        };
        let cells_per_axis = if radius > 0.0 && radius.is_finite() {
            ((1.0 / radius).floor() as usize).clamp(1, cap)
        } else {
            1
        };
        let cell_size = 1.0 / cells_per_axis as f64;
        let mut index = Self {
            dim,
            cells_per_axis,
            cell_size,
            radius,
            buckets: vec![Vec::new(); cells_per_axis.pow(dim as u32)],
        };
        for (i, p) in points.iter().enumerate() {
            let b = index.bucket_of(p);
            index.buckets[b].push(i);
        }
        index
    }

    fn axis_cell(&self, c: f64) -> usize {
        ((c / self.cell_size).floor().max(0.0) as usize).min(self.cells_per_axis - 1)
    }

    fn bucket_of(&self, p: &State) -> usize {
        p.as_slice()
            .iter()
            .fold(0, |acc, &c| acc * self.cells_per_axis + self.axis_cell(c))
    }

    /// Indices `j` with `‖points[j] − q‖ ≤ radius`, in ascending order.
    pub fn within_radius(&self, points: &[State], q: &State) -> Vec<usize> {
        let mut out = Vec::new();
        let r2 = self.radius * self.radius;
        let n = self.cells_per_axis as isize;
        let mut center = [0isize; 3];
        for (axis, &c) in q.as_slice().iter().enumerate() {
            center[axis] = self.axis_cell(c) as isize;
        }
        let span = |axis: usize| {
            if self.cells_per_axis <= 3 {
                0..n
            } else {
                (center[axis] - 1).max(0)..(center[axis] + 2).min(n)
            }
        };
        let mut visit = |flat: usize| {
            for &j in &self.buckets[flat] {
                if points[j].distance_squared(q) <= r2 {
                    out.push(j);
                }
            }
        };
        if self.dim == 2 {
            for i in span(0) {
                for k in span(1) {
                    visit((i * n + k) as usize);
                }
            }
        } else {
            for i in span(0) {
                for k in span(1) {
                    for l in span(2) {
                        visit(((i * n + k) * n + l) as usize);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[State], q: &State, r: f64) -> Vec<usize> {
        (0..points.len())
            .filter(|&j| {
                let d: f64 = points[j]
                    .as_slice()
                    .iter()
                    .zip(q.as_slice())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                d <= r * r
            })
            .collect()
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in prop::collection::vec(prop::array::uniform3(0.0f64..=1.0), 1..120),
            q in prop::array::uniform3(0.0f64..=1.0),
            r in 0.01f64..1.5,
            three_d in any::<bool>(),
        ) {
            let dim = if three_d { 3 } else { 2 };
            let points: Vec<State> = pts.iter().map(|p| State::new(&p[..dim]).unwrap()).collect();
            let q = State::new(&q[..dim]).unwrap();
            let index = GridIndex::new(&points, dim, r);
            prop_assert_eq!(index.within_radius(&points, &q), brute(&points, &q, r));
        }
    }
}
