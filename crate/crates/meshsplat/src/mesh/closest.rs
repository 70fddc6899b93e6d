//! Closest point on a triangle (Voronoi-region walk).

use crate::math::Vec3;

/// Which feature of the triangle the closest point lies on. Edge 0 is ab,
/// edge 1 is bc, edge 2 is ca; vertices are numbered a=0, b=1, c=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Interior,
    Edge(u8),
    Vertex(u8),
}

/// Closest point to `p` on triangle (a, b, c): the point, its distance to
/// `p`, and the feature it lies on. Boundary cases resolve to the first
/// matching feature, so results are deterministic.
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> (Vec3, f64, Region) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;

    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return finish(p, a, Region::Vertex(0));
    }

    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return finish(p, b, Region::Vertex(1));
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return finish(p, a + ab * v, Region::Edge(0));
    }

    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return finish(p, c, Region::Vertex(2));
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return finish(p, a + ac * w, Region::Edge(2));
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return finish(p, b + (c - b) * w, Region::Edge(1));
    }

    let denom = va + vb + vc;
    if denom <= 0.0 {
        // Degenerate triangle; fall back to the nearest vertex.
        let mut best = (a, (p - a).norm(), Region::Vertex(0));
        for (i, v) in [(1u8, b), (2u8, c)] {
            let d = (p - v).norm();
            if d < best.1 {
                best = (v, d, Region::Vertex(i));
            }
        }
        return best;
    }
    let inv = 1.0 / denom;
    let v = vb * inv;
    let w = vc * inv;
    finish(p, a + ab * v + ac * w, Region::Interior)
}

fn finish(p: Vec3, q: Vec3, region: Region) -> (Vec3, f64, Region) {
    (q, (p - q).norm(), region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const A: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    const B: Vec3 = Vec3::new(2.0, 0.0, 0.0);
    const C: Vec3 = Vec3::new(0.0, 2.0, 0.0);

    #[test]
    fn interior_point_projects_to_plane() {
        let (q, d, r) = closest_point_on_triangle(Vec3::new(0.5, 0.5, 3.0), A, B, C);
        assert!((q - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
        assert!((d - 3.0).abs() < 1e-12);
        assert_eq!(r, Region::Interior);
    }

    #[test]
    fn vertex_and_edge_regions() {
        let (q, d, r) = closest_point_on_triangle(Vec3::new(-1.0, -1.0, 0.0), A, B, C);
        assert_eq!(q, A);
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r, Region::Vertex(0));

        let (q, _, r) = closest_point_on_triangle(Vec3::new(1.0, -1.0, 0.0), A, B, C);
        assert!((q - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(r, Region::Edge(0));

        let (q, _, r) = closest_point_on_triangle(Vec3::new(2.0, 2.0, 0.0), A, B, C);
        assert!((q - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
        assert_eq!(r, Region::Edge(1));

        let (q, _, r) = closest_point_on_triangle(Vec3::new(-1.0, 1.0, 0.5), A, B, C);
        assert!((q - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        assert_eq!(r, Region::Edge(2));
    }

    #[test]
    fn on_triangle_point_is_its_own_closest_point() {
        let p = Vec3::new(0.4, 0.3, 0.0);
        let (q, d, r) = closest_point_on_triangle(p, A, B, C);
        assert!((q - p).norm() < 1e-12);
        assert!(d < 1e-12);
        assert_eq!(r, Region::Interior);
    }

    #[test]
    fn distance_is_lipschitz_in_query_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..2000 {
            let p = Vec3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let dp = Vec3::new(
                rng.gen_range(-1e-3..1e-3),
                rng.gen_range(-1e-3..1e-3),
                rng.gen_range(-1e-3..1e-3),
            );
            let (_, d1, _) = closest_point_on_triangle(p, A, B, C);
            let (_, d2, _) = closest_point_on_triangle(p + dp, A, B, C);
            assert!((d1 - d2).abs() <= dp.norm() + 1e-12, "distance moved faster than the point");
        }
    }

    #[test]
    fn closest_point_always_inside_triangle_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..2000 {
            let p = Vec3::new(
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
            );
            let (q, d, _) = closest_point_on_triangle(p, A, B, C);
            // Inside the triangle's plane bounds.
            assert!(q.x >= -1e-12 && q.y >= -1e-12 && q.x + q.y <= 2.0 + 1e-9);
            assert!(q.z.abs() < 1e-12);
            // No sampled point on the triangle may be closer.
            for _ in 0..20 {
                let (mut u, mut v) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                let s = A + (B - A) * u + (C - A) * v;
                assert!((p - s).norm() >= d - 1e-9);
            }
        }
    }
}
