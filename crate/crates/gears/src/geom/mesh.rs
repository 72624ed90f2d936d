//! Indexed triangle mesh with OBJ round trip and basic queries.

use super::GeomError;
use crate::math::{Mat3, Vec3};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Indexed triangle mesh. Vertices are meters; faces are CCW-outward;
/// per-vertex normals are optional and unit length when present.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vec3>>,
}

impl TriMesh {
    /// Validates face indices and drops zero-area (degenerate) faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self, GeomError> {
        for (fi, f) in faces.iter().enumerate() {
            for &ix in f {
                if ix as usize >= vertices.len() {
                    return Err(GeomError::IndexOutOfRange {
                        face: fi,
                        index: ix,
                        count: vertices.len(),
                    });
                }
            }
        }
        let mut mesh = Self { vertices, faces, normals: None };
        mesh.faces.retain(|f| {
            let [a, b, c] = face_corners_of(&mesh.vertices, f);
            (b - a).cross(&(c - a)).norm() > 0.0
        });
        Ok(mesh)
    }

    pub fn face_corners(&self, face: usize) -> [Vec3; 3] {
        face_corners_of(&self.vertices, &self.faces[face])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_corners(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.face_corners(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::from_element(f64::INFINITY);
        let mut hi = Vec3::from_element(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Rigidly transformed copy (normals rotate).
    pub fn transformed(&self, rotation: &Mat3, translation: &Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| rotation * v + translation).collect(),
            faces: self.faces.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| rotation * n).collect()),
        }
    }

    /// True when every undirected edge is shared by exactly two faces and
    /// every directed edge appears exactly once (consistent orientation).
    pub fn is_watertight(&self) -> bool {
        use std::collections::HashMap;
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        for f in &self.faces {
            for e in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *directed.entry(e).or_insert(0) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// V - E + F; 2 for a closed genus-0 surface.
    pub fn euler_characteristic(&self) -> i64 {
        use std::collections::HashSet;
        let mut edges: HashSet<(u32, u32)> = HashSet::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.faces.len() as i64
    }

    /// Reads a triangulated mesh from Wavefront OBJ. Polygon faces are
    /// fan-triangulated; `vt` and grouping statements are ignored; normals
    /// are kept only when every vertex receives one.
    pub fn read_obj(path: &Path) -> Result<Self, GeomError> {
        let file = std::fs::File::open(path)?;
        let mut vertices: Vec<Vec3> = Vec::new();
        let mut normals_pool: Vec<Vec3> = Vec::new();
        let mut vertex_normal: Vec<Option<Vec3>> = Vec::new();
        let mut faces: Vec<[u32; 3]> = Vec::new();
        for (ln, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let line_no = ln + 1;
            let mut it = line.split_whitespace();
            let parse_err = |message: &str| GeomError::ObjParse {
                line: line_no,
                message: message.to_string(),
            };
            match it.next() {
                Some("v") => {
                    let mut c = [0.0; 3];
                    for x in c.iter_mut() {
                        *x = it
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| parse_err("vertex needs 3 coordinates"))?;
                    }
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                    vertex_normal.push(None);
                }
                Some("vn") => {
                    let mut c = [0.0; 3];
                    for x in c.iter_mut() {
                        *x = it
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| parse_err("normal needs 3 coordinates"))?;
                    }
                    normals_pool.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let mut ids: Vec<u32> = Vec::new();
                    for tok in it {
                        let mut parts = tok.split('/');
                        let vi: i64 = parts
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| parse_err("bad face vertex index"))?;
                        let vi = if vi < 0 { vertices.len() as i64 + vi } else { vi - 1 };
                        if vi < 0 || vi as usize >= vertices.len() {
                            return Err(parse_err("face index out of range"));
                        }
                        // Optional texture slot, then normal index.
                        let _vt = parts.next();
                        if let Some(nid) = parts.next().and_then(|t| t.parse::<i64>().ok()) {
                            let ni =
                                if nid < 0 { normals_pool.len() as i64 + nid } else { nid - 1 };
                            if ni >= 0 && (ni as usize) < normals_pool.len() {
                                vertex_normal[vi as usize] = Some(normals_pool[ni as usize]);
                            }
                        }
                        ids.push(vi as u32);
                    }
                    if ids.len() < 3 {
                        return Err(parse_err("face needs at least 3 vertices"));
                    }
                    for i in 1..ids.len() - 1 {
                        faces.push([ids[0], ids[i], ids[i + 1]]);
                    }
                }
                _ => {}
            }
        }
        let normals = if !vertex_normal.is_empty() && vertex_normal.iter().all(Option::is_some) {
            Some(vertex_normal.into_iter().map(|n| n.unwrap().normalize()).collect())
        } else {
            None
        };
        let mut mesh = Self::new(vertices, faces)?;
        mesh.normals = normals;
        Ok(mesh)
    }

    /// Writes OBJ with full round-trip precision (shortest representation
    /// that parses back to the identical f64).
    pub fn write_obj(&self, path: &Path) -> Result<(), GeomError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for v in &self.vertices {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
        }
        if let Some(ns) = &self.normals {
            for n in ns {
                writeln!(out, "vn {} {} {}", n.x, n.y, n.z)?;
            }
            for f in &self.faces {
                writeln!(
                    out,
                    "f {0}//{0} {1}//{1} {2}//{2}",
                    f[0] + 1,
                    f[1] + 1,
                    f[2] + 1
                )?;
            }
        } else {
            for f in &self.faces {
                writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
            }
        }
        Ok(())
    }
}

fn face_corners_of(vertices: &[Vec3], f: &[u32; 3]) -> [Vec3; 3] {
    [
        vertices[f[0] as usize],
        vertices[f[1] as usize],
        vertices[f[2] as usize],
    ]
}

/// Closest point on a triangle to `p` (Ericson's region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Closest point on the mesh surface to `p`, by exhaustive face scan.
pub fn closest_point_on_mesh(p: &Vec3, mesh: &TriMesh) -> (Vec3, f64) {
    let (_, point, dist) = closest_face_point(p, mesh);
    (point, dist)
}

/// Like [`closest_point_on_mesh`] but also reports which face holds the
/// closest point, so callers can consult that face's normal.
pub fn closest_face_point(p: &Vec3, mesh: &TriMesh) -> (usize, Vec3, f64) {
    let mut best = Vec3::zeros();
    let mut best_face = 0;
    let mut best_d2 = f64::INFINITY;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_corners(f);
        let q = closest_point_on_triangle(p, &a, &b, &c);
        let d2 = (q - p).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best = q;
            best_face = f;
        }
    }
    (best_face, best, best_d2.sqrt())
}

/// Distance to the surface of a convex, outward-oriented mesh, negative
/// inside. The sign comes from the closest face's normal, which is exact for
/// convex bodies.
pub fn signed_distance_convex(p: &Vec3, mesh: &TriMesh) -> f64 {
    let (face, point, dist) = closest_face_point(p, mesh);
    if (p - point).dot(&mesh.face_normal(face)) < 0.0 {
        -dist
    } else {
        dist
    }
}
