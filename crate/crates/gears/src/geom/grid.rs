//! Uniform hash grid for fixed-radius neighbor queries.

use crate::math::Vec3;
use std::collections::HashMap;

/// Spatial index over a fixed point set. Cell size equals the query radius,
/// so a radius query only ever touches the 27 cells around the query point.
pub struct HashGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl HashGrid {
    /// Builds the grid for queries of radius `radius` (> 0).
    pub fn build(points: &[Vec3], radius: f64) -> Self {
        assert!(radius > 0.0, "query radius must be positive");
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, radius)).or_default().push(i as u32);
        }
        Self { cell: radius, cells }
    }

    fn key(p: &Vec3, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Indices of all points with `|p - center| < radius`, ascending. The
    /// distance predicate is evaluated exactly as written, so results match
    /// a brute-force scan bit for bit.
    pub fn query(&self, points: &[Vec3], center: &Vec3, radius: f64) -> Vec<u32> {
        debug_assert!(radius <= self.cell * (1.0 + 1e-12), "grid built for a smaller radius");
        let (cx, cy, cz) = Self::key(center, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in bucket {
                            if (points[i as usize] - center).norm() < radius {
                                out.push(i);
                            }
                        }
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
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], center: &Vec3, radius: f64) -> Vec<u32> {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| (*p - center).norm() < radius)
            .map(|(i, _)| i as u32)
            .collect()
    }

    #[test]
    fn grid_query_equals_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for scene in 0..50 {
            let n = rng.gen_range(1..400);
            let points: Vec<Vec3> = (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-0.2..0.2),
                        rng.gen_range(-0.2..0.2),
                        rng.gen_range(-0.2..0.2),
                    )
                })
                .collect();
            let radius = rng.gen_range(0.005..0.08);
            let grid = HashGrid::build(&points, radius);
            for _ in 0..5 {
                let c = Vec3::new(
                    rng.gen_range(-0.25..0.25),
                    rng.gen_range(-0.25..0.25),
                    rng.gen_range(-0.25..0.25),
                );
                assert_eq!(
                    grid.query(&points, &c, radius),
                    brute(&points, &c, radius),
                    "scene {scene}"
                );
            }
        }
    }

    #[test]
    fn boundary_points_are_excluded_by_strict_inequality() {
        let points = vec![Vec3::new(0.05, 0.0, 0.0), Vec3::new(0.049, 0.0, 0.0)];
        let grid = HashGrid::build(&points, 0.05);
        let hits = grid.query(&points, &Vec3::zeros(), 0.05);
        assert_eq!(hits, vec![1]);
    }

    #[test]
    fn empty_input_yields_empty_queries() {
        let points: Vec<Vec3> = Vec::new();
        let grid = HashGrid::build(&points, 0.01);
        assert!(grid.query(&points, &Vec3::zeros(), 0.01).is_empty());
    }
}
