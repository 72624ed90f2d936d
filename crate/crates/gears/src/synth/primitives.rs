//! Watertight primitive meshes for synthetic objects.
//!
//! All generators weld shared vertices, orient triangles outward, and
//! tessellate densely enough that vertex-level contact tests against a 2 mm
//! threshold behave like surface tests.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geom::TriMesh;
use crate::math::Vec3;

/// Target edge length for object tessellation, in meters.
pub const TARGET_EDGE_M: f64 = 0.0022;

/// Parameters of a synthetic object, kept serializable so a sequence records
/// exactly what it was generated from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObjectSpec {
    Box { half_extents: [f64; 3] },
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
    Capsule { radius: f64, height: f64 },
}

impl ObjectSpec {
    pub fn mesh(&self) -> TriMesh {
        match *self {
            ObjectSpec::Box { half_extents } => box_mesh(
                Vec3::new(half_extents[0], half_extents[1], half_extents[2]),
                TARGET_EDGE_M,
            ),
            ObjectSpec::Sphere { radius } => icosphere(radius, sphere_subdivisions(radius)),
            ObjectSpec::Cylinder { radius, height } => {
                let segs = radial_segments(radius);
                cylinder(radius, height, segs, stacks_for(height))
            }
            ObjectSpec::Capsule { radius, height } => {
                let segs = radial_segments(radius);
                capsule(radius, height, segs, stacks_for(height))
            }
        }
    }
}

fn sphere_subdivisions(radius: f64) -> u32 {
    // Icosahedron edge is ~1.05 r and halves per subdivision.
    let mut edge = 1.0515 * radius;
    let mut n = 0;
    while edge > TARGET_EDGE_M && n < 5 {
        edge *= 0.5;
        n += 1;
    }
    n
}

fn radial_segments(radius: f64) -> usize {
    let circumference = 2.0 * std::f64::consts::PI * radius;
    ((circumference / TARGET_EDGE_M).ceil() as usize).clamp(16, 96)
}

fn stacks_for(height: f64) -> usize {
    ((height / TARGET_EDGE_M).ceil() as usize).max(1)
}

/// Axis-aligned box centered at the origin, each face a welded grid with
/// cells no larger than `max_edge`.
pub fn box_mesh(half: Vec3, max_edge: f64) -> TriMesh {
    let n = [
        ((2.0 * half.x / max_edge).ceil() as i64).max(1),
        ((2.0 * half.y / max_edge).ceil() as i64).max(1),
        ((2.0 * half.z / max_edge).ceil() as i64).max(1),
    ];
    let mut index: HashMap<(i64, i64, i64), u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    let mut vertex_at = |key: (i64, i64, i64), vertices: &mut Vec<Vec3>| -> u32 {
        *index.entry(key).or_insert_with(|| {
            let p = Vec3::new(
                -half.x + 2.0 * half.x * key.0 as f64 / n[0] as f64,
                -half.y + 2.0 * half.y * key.1 as f64 / n[1] as f64,
                -half.z + 2.0 * half.z * key.2 as f64 / n[2] as f64,
            );
            vertices.push(p);
            (vertices.len() - 1) as u32
        })
    };

    // For each face: the fixed axis, its lattice value, the two in-plane axes,
    // and whether (u x v) already points outward.
    let face_defs: [(usize, i64, usize, usize, bool); 6] = [
        (0, n[0], 1, 2, true),
        (0, 0, 1, 2, false),
        (1, n[1], 0, 2, false),
        (1, 0, 0, 2, true),
        (2, n[2], 0, 1, true),
        (2, 0, 0, 1, false),
    ];
    for (axis, level, ua, va, outward) in face_defs {
        for i in 0..n[ua] {
            for j in 0..n[va] {
                let mut key = |du: i64, dv: i64| {
                    let mut k = [0i64; 3];
                    k[axis] = level;
                    k[ua] = i + du;
                    k[va] = j + dv;
                    vertex_at((k[0], k[1], k[2]), &mut vertices)
                };
                let (a, b, c, d) = (key(0, 0), key(1, 0), key(1, 1), key(0, 1));
                if outward {
                    faces.push([a, b, c]);
                    faces.push([a, c, d]);
                } else {
                    faces.push([a, c, b]);
                    faces.push([a, d, c]);
                }
            }
        }
    }
    TriMesh::new(vertices, faces).expect("box mesh is valid")
}

/// Icosphere: subdivided icosahedron projected onto the radius.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize() * radius)
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    let m = ((vertices[a as usize] + vertices[b as usize]) / 2.0)
                        .normalize()
                        * radius;
                    vertices.push(m);
                    (vertices.len() - 1) as u32
                })
            };
            let (ab, bc, ca) = (
                mid(f[0], f[1], &mut vertices),
                mid(f[1], f[2], &mut vertices),
                mid(f[2], f[0], &mut vertices),
            );
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    TriMesh::new(vertices, faces).expect("icosphere is valid")
}

/// Flat disk cap at height `z`, welded to an existing rim ring. Interior
/// vertices are laid out on concentric rings so cap edges stay near the
/// rim's circumferential spacing instead of radius-length fan spokes.
fn disk_cap(
    vertices: &mut Vec<Vec3>,
    faces: &mut Vec<[u32; 3]>,
    radius: f64,
    z: f64,
    segments: usize,
    rim_start: u32,
    facing_up: bool,
) {
    let rings = ((segments as f64) / (2.0 * std::f64::consts::PI))
        .round()
        .max(1.0) as usize;
    let mut starts = Vec::with_capacity(rings);
    for k in 1..rings {
        let rk = radius * k as f64 / rings as f64;
        starts.push(vertices.len() as u32);
        for i in 0..segments {
            let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
            vertices.push(Vec3::new(rk * a.cos(), rk * a.sin(), z));
        }
    }
    starts.push(rim_start);
    let center = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, z));

    let seg = segments as u32;
    let inner = starts[0];
    for i in 0..seg {
        let j = (i + 1) % seg;
        if facing_up {
            faces.push([center, inner + i, inner + j]);
        } else {
            faces.push([center, inner + j, inner + i]);
        }
    }
    for k in 1..rings {
        let (a, b) = (starts[k - 1], starts[k]);
        for i in 0..seg {
            let j = (i + 1) % seg;
            if facing_up {
                faces.push([a + i, b + i, b + j]);
                faces.push([a + i, b + j, a + j]);
            } else {
                faces.push([a + j, b + j, b + i]);
                faces.push([a + j, b + i, a + i]);
            }
        }
    }
}

/// Capped cylinder along z, centered at the origin.
pub fn cylinder(radius: f64, height: f64, segments: usize, stacks: usize) -> TriMesh {
    let mut vertices = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let ring = |s: usize| (s * segments) as u32;

    for s in 0..=stacks {
        let z = -height / 2.0 + height * s as f64 / stacks as f64;
        for i in 0..segments {
            let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
            vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    for s in 0..stacks {
        let r0 = ring(s);
        let r1 = ring(s + 1);
        for i in 0..segments as u32 {
            let j = (i + 1) % segments as u32;
            faces.push([r0 + i, r0 + j, r1 + j]);
            faces.push([r0 + i, r1 + j, r1 + i]);
        }
    }
    let top_ring = (stacks * segments) as u32;
    disk_cap(&mut vertices, &mut faces, radius, -height / 2.0, segments, 0, false);
    disk_cap(&mut vertices, &mut faces, radius, height / 2.0, segments, top_ring, true);
    TriMesh::new(vertices, faces).expect("cylinder is valid")
}

/// Capsule along z: a cylinder of the given height with hemispherical caps.
pub fn capsule(radius: f64, height: f64, segments: usize, stacks: usize) -> TriMesh {
    let cap_rings = (segments / 4).max(3);
    let mut vertices = Vec::new();
    let mut rings: Vec<u32> = Vec::new();

    let push_ring = |z: f64, r: f64, vertices: &mut Vec<Vec3>, rings: &mut Vec<u32>| {
        rings.push(vertices.len() as u32);
        for i in 0..segments {
            let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
            vertices.push(Vec3::new(r * a.cos(), r * a.sin(), z));
        }
    };

    let south_pole = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, -height / 2.0 - radius));
    // Bottom hemisphere from pole toward the equator ring.
    for k in 1..=cap_rings {
        let lat = std::f64::consts::FRAC_PI_2 * k as f64 / cap_rings as f64;
        push_ring(
            -height / 2.0 - radius * lat.cos(),
            radius * lat.sin(),
            &mut vertices,
            &mut rings,
        );
    }
    for s in 1..=stacks {
        push_ring(
            -height / 2.0 + height * s as f64 / stacks as f64,
            radius,
            &mut vertices,
            &mut rings,
        );
    }
    for k in 1..cap_rings {
        let lat = std::f64::consts::FRAC_PI_2 * (1.0 - k as f64 / cap_rings as f64);
        push_ring(
            height / 2.0 + radius * lat.cos(),
            radius * lat.sin(),
            &mut vertices,
            &mut rings,
        );
    }
    let north_pole = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, height / 2.0 + radius));

    let mut faces: Vec<[u32; 3]> = Vec::new();
    for i in 0..segments as u32 {
        let j = (i + 1) % segments as u32;
        faces.push([south_pole, rings[0] + j, rings[0] + i]);
        let last = *rings.last().unwrap();
        faces.push([north_pole, last + i, last + j]);
    }
    for w in rings.windows(2) {
        let (r0, r1) = (w[0], w[1]);
        for i in 0..segments as u32 {
            let j = (i + 1) % segments as u32;
            faces.push([r0 + i, r0 + j, r1 + j]);
            faces.push([r0 + i, r1 + j, r1 + i]);
        }
    }
    TriMesh::new(vertices, faces).expect("capsule is valid")
}

/// Signed volume via the divergence theorem; positive for outward-oriented
/// closed meshes.
pub fn signed_volume(mesh: &TriMesh) -> f64 {
    let mut v = 0.0;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_corners(f);
        v += a.dot(&b.cross(&c)) / 6.0;
    }
    v
}
