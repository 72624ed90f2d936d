//! Hand–object interaction metrics: joint error, penetration depth,
//! intersection volume, and contact IoU.
//!
//! Inside/outside queries use the generalized winding number, which stays
//! robust on the slightly irregular meshes the capsule hand produces. The
//! intersection volume voxelizes the overlap region with vertical ray-parity
//! columns, which is exact in the limit for watertight inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{closest_point_on_mesh, HashGrid, TriMesh};
use crate::hand::JointSet;
use crate::math::Vec3;

/// Contact distance threshold between hand and object surfaces (2 mm).
pub const CONTACT_TOL_M: f64 = 0.002;
/// Default voxel edge for intersection-volume estimation (2 mm).
pub const IV_VOXEL_M: f64 = 0.002;
/// Grasp-synthesis rejection threshold on intersection volume, in cm³.
pub const IV_FILTER_CM3: f64 = 4.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("sequence length mismatch: {what} has {got} frames, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("empty sequence")]
    EmptySequence,
}

/// Mean per-joint position error in meters for one frame pair.
pub fn mpjpe_frame_m(pred: &JointSet, gt: &JointSet) -> f64 {
    let total: f64 = pred
        .iter()
        .zip(gt.iter())
        .map(|(p, g)| (p - g).norm())
        .sum();
    total / pred.len() as f64
}

/// Solid angle subtended by triangle (v0, v1, v2) at point `p`
/// (van Oosterom–Strackee).
fn solid_angle(p: &Vec3, v0: &Vec3, v1: &Vec3, v2: &Vec3) -> f64 {
    let a = v0 - p;
    let b = v1 - p;
    let c = v2 - p;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let det = a.dot(&b.cross(&c));
    let denom = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
    2.0 * det.atan2(denom)
}

/// Generalized winding number of the mesh around `p`; ~1 inside a watertight
/// outward-oriented surface, ~0 outside.
pub fn winding_number(mesh: &TriMesh, p: &Vec3) -> f64 {
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_corners(f);
        total += solid_angle(p, &a, &b, &c);
    }
    total / (4.0 * std::f64::consts::PI)
}

/// Point containment via the winding number, thresholded at one half.
pub fn inside_mesh(mesh: &TriMesh, p: &Vec3) -> bool {
    winding_number(mesh, p) > 0.5
}

/// Maximum penetration depth of `points` into `object` in meters: for every
/// point inside the object, its distance to the object surface; zero when
/// nothing penetrates. Points outside the object's bounding box are skipped
/// before the winding test.
pub fn penetration_depth_m(points: &[Vec3], object: &TriMesh) -> f64 {
    let (lo, hi) = object.aabb();
    let mut depth = 0.0f64;
    for p in points {
        if p.x < lo.x || p.y < lo.y || p.z < lo.z || p.x > hi.x || p.y > hi.y || p.z > hi.z {
            continue;
        }
        if inside_mesh(object, p) {
            let (_, d) = closest_point_on_mesh(p, object);
            depth = depth.max(d);
        }
    }
    depth
}

/// Triangles bucketed by the (x, y) columns their projection overlaps, plus
/// the z-crossings of each column's vertical line with the mesh.
struct ColumnParity {
    crossings: Vec<Vec<f64>>,
    nx: usize,
}

impl ColumnParity {
    fn build(mesh: &TriMesh, x0: f64, y0: f64, voxel: f64, nx: usize, ny: usize) -> Self {
        let mut bins: Vec<Vec<u32>> = vec![Vec::new(); nx * ny];
        for f in 0..mesh.faces.len() {
            let [a, b, c] = mesh.face_corners(f);
            let txmin = a.x.min(b.x).min(c.x);
            let txmax = a.x.max(b.x).max(c.x);
            let tymin = a.y.min(b.y).min(c.y);
            let tymax = a.y.max(b.y).max(c.y);
            let ix0 = (((txmin - x0) / voxel - 0.5).floor().max(0.0)) as usize;
            let iy0 = (((tymin - y0) / voxel - 0.5).floor().max(0.0)) as usize;
            let ix1 = ((txmax - x0) / voxel).ceil() as usize;
            let iy1 = ((tymax - y0) / voxel).ceil() as usize;
            for iy in iy0..=iy1.min(ny.saturating_sub(1)) {
                for ix in ix0..=ix1.min(nx.saturating_sub(1)) {
                    bins[iy * nx + ix].push(f as u32);
                }
            }
        }
        let mut crossings = vec![Vec::new(); nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let jitter = column_jitter(ix as u64, iy as u64);
                let x = x0 + (ix as f64 + 0.5 + jitter.0) * voxel;
                let y = y0 + (iy as f64 + 0.5 + jitter.1) * voxel;
                let hits = &mut crossings[iy * nx + ix];
                for &f in &bins[iy * nx + ix] {
                    let [a, b, c] = mesh.face_corners(f as usize);
                    if let Some(z) = vertical_hit(&a, &b, &c, x, y) {
                        hits.push(z);
                    }
                }
                hits.sort_by(|p, q| p.partial_cmp(q).unwrap());
            }
        }
        Self { crossings, nx }
    }

    /// Is the point at column (ix, iy), height z, inside the mesh?
    fn inside(&self, ix: usize, iy: usize, z: f64) -> bool {
        let hits = &self.crossings[iy * self.nx + ix];
        let above = hits.len() - hits.partition_point(|&h| h <= z);
        above % 2 == 1
    }
}

/// z of the vertical line (x, y) crossing the triangle, if it does.
fn vertical_hit(a: &Vec3, b: &Vec3, c: &Vec3, x: f64, y: f64) -> Option<f64> {
    let d = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
    if d.abs() < 1e-18 {
        return None;
    }
    let l0 = ((b.y - c.y) * (x - c.x) + (c.x - b.x) * (y - c.y)) / d;
    let l1 = ((c.y - a.y) * (x - c.x) + (a.x - c.x) * (y - c.y)) / d;
    let l2 = 1.0 - l0 - l1;
    if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
        return None;
    }
    Some(l0 * a.z + l1 * b.z + l2 * c.z)
}

/// Deterministic sub-voxel jitter so column rays never pass exactly through
/// mesh edges or vertices of axis-aligned geometry.
fn column_jitter(ix: u64, iy: u64) -> (f64, f64) {
    let h = crate::math::split_seed(ix.wrapping_mul(0x9e3779b97f4a7c15), iy);
    let a = ((h & 0xffff) as f64 / 65536.0 - 0.5) * 1e-4;
    let b = (((h >> 16) & 0xffff) as f64 / 65536.0 - 0.5) * 1e-4;
    (a, b)
}

/// Volume of the intersection of two watertight meshes in cubic meters,
/// estimated on a voxel grid of edge `voxel` covering the AABB overlap.
pub fn intersection_volume_m3(a: &TriMesh, b: &TriMesh, voxel: f64) -> f64 {
    assert!(voxel > 0.0, "voxel edge must be positive");
    if a.faces.is_empty() || b.faces.is_empty() {
        return 0.0;
    }
    let ((alo, ahi), (blo, bhi)) = (a.aabb(), b.aabb());
    let lo = Vec3::new(alo.x.max(blo.x), alo.y.max(blo.y), alo.z.max(blo.z));
    let hi = Vec3::new(ahi.x.min(bhi.x), ahi.y.min(bhi.y), ahi.z.min(bhi.z));
    if lo.x >= hi.x || lo.y >= hi.y || lo.z >= hi.z {
        return 0.0;
    }
    let nx = ((hi.x - lo.x) / voxel).ceil() as usize;
    let ny = ((hi.y - lo.y) / voxel).ceil() as usize;
    let nz = ((hi.z - lo.z) / voxel).ceil() as usize;

    let pa = ColumnParity::build(a, lo.x, lo.y, voxel, nx, ny);
    let pb = ColumnParity::build(b, lo.x, lo.y, voxel, nx, ny);

    let mut count = 0u64;
    for iy in 0..ny {
        for ix in 0..nx {
            for iz in 0..nz {
                let z = lo.z + (iz as f64 + 0.5) * voxel;
                if pa.inside(ix, iy, z) && pb.inside(ix, iy, z) {
                    count += 1;
                }
            }
        }
    }
    count as f64 * voxel * voxel * voxel
}

/// Per-object-vertex contact flags: true where any point of `hand` lies
/// within `tol` meters.
pub fn contact_map(object_vertices: &[Vec3], hand_vertices: &[Vec3], tol: f64) -> Vec<bool> {
    if hand_vertices.is_empty() {
        return vec![false; object_vertices.len()];
    }
    let grid = HashGrid::build(hand_vertices, tol);
    object_vertices
        .iter()
        .map(|v| !grid.query(hand_vertices, v, tol).is_empty())
        .collect()
}

/// IoU of two contact maps; `None` when both maps are empty (no contact in
/// either, the undefined 0/0 case).
pub fn contact_iou(a: &[bool], b: &[bool]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        None
    } else {
        Some(inter as f64 / union as f64)
    }
}

/// Everything the evaluator needs per sequence. All meshes are posed in world
/// coordinates, one per frame.
pub struct MetricsInput<'a> {
    pub gt_joints: &'a [JointSet],
    pub pred_joints: &'a [JointSet],
    pub gt_hand: &'a [TriMesh],
    pub pred_hand: &'a [TriMesh],
    pub object: &'a [TriMesh],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerFrame {
    pub mpjpe_mm: Vec<f64>,
    pub pd_mm: Vec<f64>,
    pub iv_cm3: Vec<f64>,
    pub ciou_pct: Vec<Option<f64>>,
    pub max_pd_mm: f64,
    pub max_iv_cm3: f64,
}

/// Sequence-level interaction report. Top-level numbers are per-frame means
/// (contact IoU averages only the frames where either hand touches the
/// object); the arrays and maxima live under `per_frame`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceReport {
    pub mpjpe_mm: f64,
    pub pd_mm: f64,
    pub iv_cm3: f64,
    pub ciou_pct: f64,
    pub per_frame: PerFrame,
}

pub fn evaluate_sequence(
    input: &MetricsInput,
    voxel: f64,
    contact_tol: f64,
) -> Result<SequenceReport, MetricsError> {
    let t = input.gt_joints.len();
    if t == 0 {
        return Err(MetricsError::EmptySequence);
    }
    for (what, got) in [
        ("pred_joints", input.pred_joints.len()),
        ("gt_hand", input.gt_hand.len()),
        ("pred_hand", input.pred_hand.len()),
        ("object", input.object.len()),
    ] {
        if got != t {
            return Err(MetricsError::LengthMismatch { what, got, expected: t });
        }
    }
    for (i, obj) in input.object.iter().enumerate() {
        if !obj.is_watertight() {
            eprintln!(
                "warning: object mesh at frame {i} is not watertight; \
                 volume and containment metrics may be unreliable"
            );
        }
    }

    let mut per = PerFrame {
        mpjpe_mm: Vec::with_capacity(t),
        pd_mm: Vec::with_capacity(t),
        iv_cm3: Vec::with_capacity(t),
        ciou_pct: Vec::with_capacity(t),
        max_pd_mm: 0.0,
        max_iv_cm3: 0.0,
    };
    for i in 0..t {
        per.mpjpe_mm
            .push(mpjpe_frame_m(&input.pred_joints[i], &input.gt_joints[i]) * 1000.0);

        let pd = penetration_depth_m(&input.pred_hand[i].vertices, &input.object[i]) * 1000.0;
        per.max_pd_mm = per.max_pd_mm.max(pd);
        per.pd_mm.push(pd);

        let iv = intersection_volume_m3(&input.pred_hand[i], &input.object[i], voxel) * 1e6;
        per.max_iv_cm3 = per.max_iv_cm3.max(iv);
        per.iv_cm3.push(iv);

        let gt_contacts = contact_map(
            &input.object[i].vertices,
            &input.gt_hand[i].vertices,
            contact_tol,
        );
        let pred_contacts = contact_map(
            &input.object[i].vertices,
            &input.pred_hand[i].vertices,
            contact_tol,
        );
        per.ciou_pct
            .push(contact_iou(&gt_contacts, &pred_contacts).map(|x| x * 100.0));
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let cious: Vec<f64> = per.ciou_pct.iter().flatten().copied().collect();
    let ciou_pct = if cious.is_empty() { 0.0 } else { mean(&cious) };

    Ok(SequenceReport {
        mpjpe_mm: mean(&per.mpjpe_mm),
        pd_mm: mean(&per.pd_mm),
        iv_cm3: mean(&per.iv_cm3),
        ciou_pct,
        per_frame: per,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn box_mesh(center: Vec3, half: Vec3) -> TriMesh {
        let mut vertices = Vec::with_capacity(8);
        for iz in [-1.0, 1.0] {
            for iy in [-1.0, 1.0] {
                for ix in [-1.0, 1.0] {
                    vertices.push(center + Vec3::new(half.x * ix, half.y * iy, half.z * iz));
                }
            }
        }
        let quads = [
            [1, 3, 7, 5],
            [0, 4, 6, 2],
            [2, 6, 7, 3],
            [0, 1, 5, 4],
            [4, 5, 7, 6],
            [0, 2, 3, 1],
        ];
        let mut faces = Vec::new();
        for q in quads {
            faces.push([q[0], q[1], q[2]]);
            faces.push([q[0], q[2], q[3]]);
        }
        TriMesh::new(vertices, faces).unwrap()
    }

    /// Möller–Trumbore ray-triangle intersection used as the parity oracle.
    fn ray_hits_triangle(orig: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
        let e1 = b - a;
        let e2 = c - a;
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-14 {
            return false;
        }
        let inv = 1.0 / det;
        let s = orig - a;
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return false;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return false;
        }
        e2.dot(&q) * inv > 0.0
    }

    fn inside_by_ray_parity(mesh: &TriMesh, p: &Vec3, rng: &mut ChaCha8Rng) -> bool {
        let dir = loop {
            let d = Vec3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            );
            if d.norm() > 1e-3 {
                break d.normalize();
            }
        };
        let mut hits = 0;
        for f in 0..mesh.faces.len() {
            let [a, b, c] = mesh.face_corners(f);
            if ray_hits_triangle(p, &dir, &a, &b, &c) {
                hits += 1;
            }
        }
        hits % 2 == 1
    }

    #[test]
    fn winding_number_matches_ray_parity_on_a_thousand_points() {
        // Two disjoint boxes: the winding number must handle multiple
        // components without any special casing.
        let mut mesh = box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.03, 0.02, 0.025));
        let other = box_mesh(Vec3::new(0.09, 0.01, 0.0), Vec3::new(0.015, 0.03, 0.02));
        let base = mesh.vertices.len() as u32;
        mesh.vertices.extend_from_slice(&other.vertices);
        for f in &other.faces {
            mesh.faces.push([f[0] + base, f[1] + base, f[2] + base]);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut agreements = 0;
        let n = 1000;
        for _ in 0..n {
            let p = Vec3::new(
                rng.gen::<f64>() * 0.16 - 0.04,
                rng.gen::<f64>() * 0.12 - 0.06,
                rng.gen::<f64>() * 0.10 - 0.05,
            );
            let winding = inside_mesh(&mesh, &p);
            let parity = inside_by_ray_parity(&mesh, &p, &mut rng);
            if winding == parity {
                agreements += 1;
            }
        }
        assert_eq!(agreements, n, "winding vs ray parity disagreed");
    }

    #[test]
    fn penetration_depth_of_a_known_point() {
        let object = box_mesh(Vec3::new(0.02, 0.02, 0.02), Vec3::new(0.02, 0.02, 0.02));
        // 10 mm from the -x face, farther from all others.
        let inside = Vec3::new(0.01, 0.02, 0.02);
        let outside = Vec3::new(-0.01, 0.02, 0.02);
        let d = penetration_depth_m(&[inside, outside], &object);
        assert!((d - 0.01).abs() < 1e-12, "depth {d}");
        assert_eq!(penetration_depth_m(&[outside], &object), 0.0);
    }

    #[test]
    fn intersection_volume_of_overlapping_boxes_is_analytic() {
        // Boxes [0,0.04]^3 and [0.02,0.06]x[0,0.04]^2 overlap in
        // 0.02 * 0.04 * 0.04 m^3 = 32 cm^3.
        let a = box_mesh(Vec3::new(0.02, 0.02, 0.02), Vec3::new(0.02, 0.02, 0.02));
        let b = box_mesh(Vec3::new(0.04, 0.02, 0.02), Vec3::new(0.02, 0.02, 0.02));
        let vol = intersection_volume_m3(&a, &b, 0.0005);
        let expect = 0.02 * 0.04 * 0.04;
        let rel = (vol - expect).abs() / expect;
        assert!(rel < 0.05, "volume {vol} vs {expect} (rel {rel})");
    }

    #[test]
    fn intersection_volume_of_disjoint_boxes_is_zero() {
        let a = box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.01, 0.01, 0.01));
        let b = box_mesh(Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.01, 0.01, 0.01));
        assert_eq!(intersection_volume_m3(&a, &b, 0.002), 0.0);
    }

    #[test]
    fn contact_map_and_iou_behave() {
        let object = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.01, 0.0, 0.0),
            Vec3::new(0.02, 0.0, 0.0),
        ];
        let hand_a = vec![Vec3::new(0.0, 0.0015, 0.0)];
        let hand_b = vec![Vec3::new(0.01, 0.0015, 0.0)];
        let map_a = contact_map(&object, &hand_a, CONTACT_TOL_M);
        let map_b = contact_map(&object, &hand_b, CONTACT_TOL_M);
        assert_eq!(map_a, vec![true, false, false]);
        assert_eq!(map_b, vec![false, true, false]);
        assert_eq!(contact_iou(&map_a, &map_b), Some(0.0));
        assert_eq!(contact_iou(&map_a, &map_a), Some(1.0));
        let empty = vec![false, false, false];
        assert_eq!(contact_iou(&empty, &empty), None);
    }

    #[test]
    fn mpjpe_matches_a_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut gt = [Vec3::zeros(); 21];
        let mut pred = [Vec3::zeros(); 21];
        for i in 0..21 {
            gt[i] = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            pred[i] = gt[i] + Vec3::new(0.001, 0.0, 0.0) * (i as f64);
        }
        let expect: f64 = (0..21).map(|i| 0.001 * i as f64).sum::<f64>() / 21.0;
        assert!((mpjpe_frame_m(&pred, &gt) - expect).abs() < 1e-12);
    }

    #[test]
    fn evaluate_sequence_full_pass() {
        let object = box_mesh(Vec3::new(0.02, 0.02, 0.02), Vec3::new(0.02, 0.02, 0.02));
        // Frame 0: hand coincides with the object — full volume overlap and
        // every object vertex in contact, but no vertex strictly inside.
        let coincident = object.clone();
        // Frame 1: hand pokes 10 mm through the +x face.
        let poking = box_mesh(Vec3::new(0.05, 0.02, 0.02), Vec3::new(0.02, 0.01, 0.01));
        // Frame 2: far away.
        let far = box_mesh(Vec3::new(0.2, 0.0, 0.0), Vec3::new(0.01, 0.01, 0.01));

        let mut gt = [Vec3::zeros(); 21];
        for (i, j) in gt.iter_mut().enumerate() {
            j.x = i as f64 * 0.01;
        }
        let mut pred = gt;
        for j in pred.iter_mut() {
            j.y += 0.002;
        }

        let hands = [coincident, poking, far];
        let input = MetricsInput {
            gt_joints: &[gt, gt, gt],
            pred_joints: &[pred, pred, pred],
            gt_hand: &hands,
            pred_hand: &hands,
            object: &[object.clone(), object.clone(), object.clone()],
        };
        let report = evaluate_sequence(&input, 0.001, CONTACT_TOL_M).unwrap();

        assert!((report.mpjpe_mm - 2.0).abs() < 1e-9);
        // Coincident surfaces have no strictly interior vertices; the poking
        // box's deepest corners sit 10 mm from the nearest face.
        assert_eq!(report.per_frame.pd_mm[0], 0.0);
        assert!((report.per_frame.pd_mm[1] - 10.0).abs() < 1e-6);
        assert_eq!(report.per_frame.pd_mm[2], 0.0);
        assert!((report.per_frame.max_pd_mm - 10.0).abs() < 1e-6);
        // Overlaps: the full 64 cm^3 box, a 10x20x20 mm notch, nothing.
        assert!((report.per_frame.iv_cm3[0] - 64.0).abs() < 1.5);
        assert!((report.per_frame.iv_cm3[1] - 4.0).abs() < 0.2);
        assert_eq!(report.per_frame.iv_cm3[2], 0.0);
        assert!((report.per_frame.max_iv_cm3 - 64.0).abs() < 1.5);
        // Identical gt and predicted hands: IoU is 100% on the contact frame
        // and undefined (excluded) on the no-contact frames.
        assert_eq!(report.per_frame.ciou_pct[0], Some(100.0));
        assert_eq!(report.per_frame.ciou_pct[1], None);
        assert_eq!(report.per_frame.ciou_pct[2], None);
        assert!((report.ciou_pct - 100.0).abs() < 1e-9);

        let json = serde_json::to_value(&report).unwrap();
        let mut keys: Vec<&str> = json.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["ciou_pct", "iv_cm3", "mpjpe_mm", "pd_mm", "per_frame"]);
    }

    #[test]
    fn evaluate_sequence_validates_lengths() {
        let object = box_mesh(Vec3::zeros(), Vec3::new(0.01, 0.01, 0.01));
        let joints = [Vec3::zeros(); 21];
        let input = MetricsInput {
            gt_joints: &[joints],
            pred_joints: &[joints, joints],
            gt_hand: &[object.clone()],
            pred_hand: &[object.clone()],
            object: &[object.clone()],
        };
        assert!(matches!(
            evaluate_sequence(&input, IV_VOXEL_M, CONTACT_TOL_M),
            Err(MetricsError::LengthMismatch { what: "pred_joints", .. })
        ));
    }
}
