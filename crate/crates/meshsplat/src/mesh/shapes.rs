//! Procedural meshes used by the synthetic scenes and tests.

use super::TriMesh;
use crate::math::Vec3;

/// Axis-aligned cube centered at the origin with the given edge length,
/// 12 faces, normals pointing outward.
pub fn cube(edge: f64) -> (TriMesh, usize) {
    let h = edge * 0.5;
    let v = |x: f64, y: f64, z: f64| Vec3::new(x * h, y * h, z * h);
    let vertices = vec![
        v(-1.0, -1.0, -1.0), // 0
        v(1.0, -1.0, -1.0),  // 1
        v(1.0, 1.0, -1.0),   // 2
        v(-1.0, 1.0, -1.0),  // 3
        v(-1.0, -1.0, 1.0),  // 4
        v(1.0, -1.0, 1.0),   // 5
        v(1.0, 1.0, 1.0),    // 6
        v(-1.0, 1.0, 1.0),   // 7
    ];
    // Outward winding (counter-clockwise seen from outside).
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2], // bottom  (-z)
        [4, 5, 6],
        [4, 6, 7], // top     (+z)
        [0, 1, 5],
        [0, 5, 4], // front   (-y)
        [2, 3, 7],
        [2, 7, 6], // back    (+y)
        [0, 4, 7],
        [0, 7, 3], // left    (-x)
        [1, 2, 6],
        [1, 6, 5], // right   (+x)
    ];
    let (mesh, dropped) = TriMesh::from_parts(vertices, faces).expect("cube is valid");
    (mesh, dropped)
}

/// Icosphere of the given radius; `subdivisions` = 0 yields the icosahedron
/// (20 faces), each level multiplies the face count by 4.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices = vec![
        Vec3::new(-1.0, t, 0.0),
        Vec3::new(1.0, t, 0.0),
        Vec3::new(-1.0, -t, 0.0),
        Vec3::new(1.0, -t, 0.0),
        Vec3::new(0.0, -1.0, t),
        Vec3::new(0.0, 1.0, t),
        Vec3::new(0.0, -1.0, -t),
        Vec3::new(0.0, 1.0, -t),
        Vec3::new(t, 0.0, -1.0),
        Vec3::new(t, 0.0, 1.0),
        Vec3::new(-t, 0.0, -1.0),
        Vec3::new(-t, 0.0, 1.0),
    ];
    for v in &mut vertices {
        *v = v.normalized().unwrap();
    }
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
        let mut midpoints = std::collections::HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]) * 0.5;
                vertices.push(m.normalized().unwrap());
                (vertices.len() - 1) as u32
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([ab, b, bc]);
            next.push([ca, bc, c]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }

    for v in &mut vertices {
        *v = *v * radius;
    }
    TriMesh::from_parts(vertices, faces).expect("icosphere is valid").0
}

/// Flat grid in the z = 0 plane spanning [-half, half]^2 with
/// `nx` x `ny` quads (2 nx ny triangles).
pub fn grid_plane(half: f64, nx: usize, ny: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec3::new(
                -half + 2.0 * half * i as f64 / nx as f64,
                -half + 2.0 * half * j as f64 / ny as f64,
                0.0,
            ));
        }
    }
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::from_parts(vertices, faces).expect("grid is valid").0
}

/// Cube with each face subdivided into an n x n grid (12 n^2 triangles),
/// the triangle-density analogue of a decimated scan. Seam vertices are
/// duplicated per face.
pub fn cube_grid(edge: f64, n: usize) -> TriMesh {
    assert!(n >= 1, "at least one cell per face");
    let h = edge * 0.5;
    // (normal, u, v) with u x v = normal so the winding faces outward.
    let axes = [
        (Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)),
        (Vec3::new(0.0, 0.0, -1.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, -1.0, 0.0)),
        (Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)),
        (Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0)),
        (Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0)),
        (Vec3::new(0.0, -1.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0)),
    ];
    let mut vertices = Vec::with_capacity(6 * (n + 1) * (n + 1));
    let mut faces = Vec::with_capacity(12 * n * n);
    for (normal, u, v) in axes {
        let base = vertices.len() as u32;
        for j in 0..=n {
            for i in 0..=n {
                let a = -h + edge * i as f64 / n as f64;
                let b = -h + edge * j as f64 / n as f64;
                vertices.push(normal * h + u * a + v * b);
            }
        }
        let idx = |i: usize, j: usize| base + (j * (n + 1) + i) as u32;
        for j in 0..n {
            for i in 0..n {
                faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
    }
    TriMesh::from_parts(vertices, faces).expect("cube grid is valid").0
}
