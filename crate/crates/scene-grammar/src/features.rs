//! The feature function over entity sets.
//!
//! A rule application is scored on the features of its applicands. Every
//! applicand is an entity: either a single symbol over a terminal span, or
//! an intermediate carrying the constituent leaf parts it was chained
//! from. Intermediates are transparent to features: they expand into their
//! leaf parts, so a rule over `{CPU_FS, CPUTop}` sees all three parts.
//!
//! The vector is node features for every leaf part followed by pair
//! features for every unordered part pair, both in canonical order (part
//! name, then lowest covered terminal), which makes the function invariant
//! to how the rule's RHS happened to be listed.
//!
//! Schema `geom-v1` is purely geometric, derived from segment statistics;
//! see `docs/features.md` for the full definition.

use nalgebra::Vector3;

use crate::grammar::SymbolId;
use crate::scene::SegmentStats;
use crate::span::Span;

pub const NODE_DIM: usize = 8;
pub const PAIR_DIM: usize = 6;

/// `cos(15°)`: alignment gate for the coplanarity feature.
const COPLANAR_DOT_MIN: f64 = 0.9659258262890683;

pub type FeatureVector = Vec<f64>;

#[derive(Clone, Copy, Debug)]
pub struct FeatureSchema {
    pub id: &'static str,
    pub node_names: [&'static str; NODE_DIM],
    pub pair_names: [&'static str; PAIR_DIM],
}

pub const GEOM_V1: FeatureSchema = FeatureSchema {
    id: "geom-v1",
    node_names: [
        "centroid_z",
        "normal_z",
        "hull_area",
        "linearness",
        "planarness",
        "scatter",
        "vertical_extent",
        "horizontal_extent",
    ],
    pair_names: [
        "horiz_centroid_dist",
        "vert_centroid_disp",
        "normal_dot",
        "min_dist",
        "coplanarity",
        "z_gap_signed",
    ],
};

impl FeatureSchema {
    /// Vector length for a rule whose RHS expands to `k` leaf parts.
    pub fn vector_len(&self, k: usize) -> usize {
        NODE_DIM * k + PAIR_DIM * k * (k - 1) / 2
    }
}

/// Geometry derived once from a part's statistics.
///
/// Eigenvalues are per-point (the centered scatter divided by the point
/// count, units m²) so features do not depend on sampling density.
#[derive(Clone, Debug)]
pub struct PartGeom {
    pub centroid: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub eigenvalues: [f64; 3],
    pub horizontal_extent: f64,
    pub radius: f64,
}

impl PartGeom {
    pub fn new(stats: &SegmentStats) -> Self {
        let (normal, _) = stats.principal_plane();
        let n = stats.point_count as f64;
        let eigenvalues = stats.eigenvalues_desc().map(|l| l / n);
        let centered = stats.centered_scatter();
        let horiz = (centered[(0, 0)] + centered[(1, 1)]).max(0.0) / n;
        PartGeom {
            centroid: stats.centroid(),
            normal,
            eigenvalues,
            // Diagonal of the horizontal bounding box for a uniform patch.
            horizontal_extent: (12.0 * horiz).sqrt(),
            radius: (3.0 * eigenvalues[0]).sqrt(),
        }
    }
}

/// One leaf part of an entity.
#[derive(Clone, Debug)]
pub struct Part {
    pub symbol: SymbolId,
    pub name_rank: u32,
    pub span: Span,
    pub stats: SegmentStats,
    pub geom: PartGeom,
}

impl Part {
    pub fn new(symbol: SymbolId, name_rank: u32, span: Span, stats: SegmentStats) -> Self {
        Part {
            symbol,
            name_rank,
            geom: PartGeom::new(&stats),
            span,
            stats,
        }
    }

    fn order_key(&self) -> (u32, usize) {
        (self.name_rank, self.span.min_index().unwrap_or(0))
    }
}

/// A symbol over a terminal span, with merged statistics and the leaf
/// parts feature computation sees.
///
/// Non-intermediate entities contribute themselves as a single part;
/// intermediate entities pass their children's parts through.
#[derive(Clone, Debug)]
pub struct Entity {
    pub symbol: SymbolId,
    pub span: Span,
    pub stats: SegmentStats,
    pub parts: Vec<Part>,
}

impl Entity {
    pub fn leaf(symbol: SymbolId, name_rank: u32, span: Span, stats: SegmentStats) -> Self {
        Entity {
            symbol,
            parts: vec![Part::new(symbol, name_rank, span.clone(), stats)],
            span,
            stats,
        }
    }

    pub fn compose(
        symbol: SymbolId,
        name_rank: u32,
        intermediate: bool,
        span: Span,
        stats: SegmentStats,
        children: &[&Entity],
    ) -> Self {
        let parts = if intermediate {
            let mut parts: Vec<Part> = children
                .iter()
                .flat_map(|c| c.parts.iter().cloned())
                .collect();
            parts.sort_by_key(Part::order_key);
            parts
        } else {
            vec![Part::new(symbol, name_rank, span.clone(), stats)]
        };
        Entity {
            symbol,
            span,
            stats,
            parts,
        }
    }

    pub fn min_index(&self) -> usize {
        self.span.min_index().unwrap_or(0)
    }
}

fn push_node_features(stats: &SegmentStats, geom: &PartGeom, out: &mut FeatureVector) {
    let [l0, l1, l2] = geom.eigenvalues;
    out.push(geom.centroid.z);
    out.push(geom.normal.z);
    out.push(stats.hull_area);
    out.push((l0 - l1).max(0.0));
    out.push((l1 - l2).max(0.0));
    out.push(l0);
    out.push(stats.z_max - stats.z_min);
    out.push(geom.horizontal_extent);
}

fn push_pair_features(a: &Part, b: &Part, out: &mut FeatureVector) {
    let (ga, gb) = (&a.geom, &b.geom);
    let d = ga.centroid - gb.centroid;
    out.push(d.xy().norm());
    out.push(d.z);
    let normal_dot = ga.normal.dot(&gb.normal);
    out.push(normal_dot);
    // Signed surface-gap estimate; negative when the bounding spheres
    // overlap. Clamping at zero would flatten the distribution of exactly
    // the close pairs rules care about.
    out.push(d.norm() - ga.radius - gb.radius);
    let coplanarity = if normal_dot > COPLANAR_DOT_MIN {
        (-d.dot(&ga.normal).abs()).exp()
    } else {
        0.0
    };
    out.push(coplanarity);
    out.push(a.stats.z_min - b.stats.z_max);
}

/// Node features of a single part.
pub fn node_features(part: &Part) -> FeatureVector {
    let mut out = Vec::with_capacity(NODE_DIM);
    push_node_features(&part.stats, &part.geom, &mut out);
    out
}

/// Pair features in the given order: the asymmetric entries are first
/// minus second. [`feature_vector`] passes parts in canonical order.
pub fn pair_features(a: &Part, b: &Part) -> FeatureVector {
    let mut out = Vec::with_capacity(PAIR_DIM);
    push_pair_features(a, b, &mut out);
    out
}

/// The feature function: node blocks for every leaf part in canonical
/// order, then pair blocks for every unordered pair in canonical order.
pub fn feature_vector(entities: &[&Entity]) -> FeatureVector {
    let mut parts: Vec<&Part> = entities.iter().flat_map(|e| e.parts.iter()).collect();
    parts.sort_by_key(|p| p.order_key());
    let k = parts.len();
    let mut out = Vec::with_capacity(GEOM_V1.vector_len(k));
    for p in &parts {
        push_node_features(&p.stats, &p.geom, &mut out);
    }
    for i in 0..k {
        for j in (i + 1)..k {
            push_pair_features(parts[i], parts[j], &mut out);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn stats_of(points: &[[f64; 3]], hull: f64) -> SegmentStats {
        let pts: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::from(*p)).collect();
        SegmentStats::from_points(&pts, hull)
    }

    fn grid(
        cx: f64,
        cy: f64,
        cz: f64,
        half_u: f64,
        half_v: f64,
        vertical: bool,
    ) -> Vec<[f64; 3]> {
        let mut pts = Vec::new();
        let steps = 6;
        for i in 0..=steps {
            for j in 0..=steps {
                let u = -half_u + 2.0 * half_u * i as f64 / steps as f64;
                let v = -half_v + 2.0 * half_v * j as f64 / steps as f64;
                if vertical {
                    pts.push([cx + u, cy, cz + v]);
                } else {
                    pts.push([cx + u, cy + v, cz]);
                }
            }
        }
        pts
    }

    fn part_at(rank: u32, index: usize, stats: SegmentStats) -> Part {
        Part::new(SymbolId(rank), rank, Span::singleton(1, index), stats)
    }

    #[test]
    fn horizontal_plane_node_features() {
        let stats = stats_of(&grid(0.0, 0.0, 0.7, 0.5, 0.4, false), 0.8);
        let p = part_at(0, 0, stats);
        let f = node_features(&p);
        assert_relative_eq!(f[0], 0.7, epsilon = 1e-12); // centroid_z
        assert_relative_eq!(f[1], 1.0, epsilon = 1e-9); // normal_z
        assert_relative_eq!(f[2], 0.8, epsilon = 1e-12); // hull_area
        assert!(f[4] > 1.0e-2, "planarness should be large, got {}", f[4]);
        assert_relative_eq!(f[5], p.geom.eigenvalues[0], epsilon = 1e-12);
        assert_relative_eq!(f[6], 0.0, epsilon = 1e-12); // vertical extent
    }

    #[test]
    fn vertical_wall_extent() {
        let stats = stats_of(&grid(0.0, 1.0, 1.0, 2.0, 1.0, true), 8.0);
        let p = part_at(0, 0, stats);
        let f = node_features(&p);
        assert_relative_eq!(f[6], 2.0, epsilon = 1e-12);
        assert_relative_eq!(f[1].abs(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn thin_rod_is_linear_not_planar() {
        let pts: Vec<[f64; 3]> = (0..50).map(|i| [i as f64 * 0.02, 0.0, 0.0]).collect();
        let stats = stats_of(&pts, 0.0);
        let p = part_at(0, 0, stats);
        let f = node_features(&p);
        // Brute-force eigenvalues of a line: only lambda0 is nonzero.
        let l0: f64 = pts
            .iter()
            .map(|q| {
                let mean = 49.0 * 0.02 / 2.0;
                (q[0] - mean) * (q[0] - mean)
            })
            .sum::<f64>()
            / pts.len() as f64;
        assert_relative_eq!(f[3], l0, max_relative = 1e-9); // linearness ~= lambda0
        assert!(f[4].abs() < 1e-12, "planarness should vanish, got {}", f[4]);
    }

    #[test]
    fn pair_contact_and_self_cases() {
        // First part (lower rank) is the top surface resting on the second.
        let top = part_at(0, 0, stats_of(&grid(0.0, 0.0, 0.7, 0.5, 0.3, false), 0.6));
        let leg = part_at(1, 1, {
            let mut s = stats_of(&grid(0.0, 0.0, 0.35, 0.05, 0.35, true), 0.07);
            s.z_max = 0.7;
            s
        });
        let f = pair_features(&top, &leg);
        assert_relative_eq!(f[5], 0.0, epsilon = 1e-12); // z_min(top) - z_max(leg)

        let other = part_at(0, 0, stats_of(&grid(0.0, 0.0, 0.7, 0.5, 0.3, false), 0.6));
        let f = pair_features(&top, &other);
        assert_relative_eq!(f[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(f[2], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn parallel_planes_half_meter_apart() {
        let upper = part_at(0, 0, stats_of(&grid(0.0, 0.0, 1.0, 0.5, 0.5, false), 1.0));
        let lower = part_at(1, 1, stats_of(&grid(0.0, 0.0, 0.5, 0.5, 0.5, false), 1.0));
        let f = pair_features(&upper, &lower);
        assert_relative_eq!(f[1], 0.5, epsilon = 1e-9);
        assert_relative_eq!(f[2], 1.0, epsilon = 1e-9);
    }

    fn entity_of(symbol: u32, rank: u32, index: usize, stats: SegmentStats) -> Entity {
        Entity::leaf(SymbolId(symbol), rank, Span::singleton(1, index), stats)
    }

    #[test]
    fn vector_lengths() {
        assert_eq!(GEOM_V1.vector_len(1), 8);
        assert_eq!(GEOM_V1.vector_len(2), 22);
        assert_eq!(GEOM_V1.vector_len(3), 42);
        for k in 1..6 {
            assert_eq!(
                GEOM_V1.vector_len(k),
                NODE_DIM * k + PAIR_DIM * k * (k - 1) / 2
            );
        }
    }

    #[test]
    fn intermediate_expansion_matches_flat_set() {
        let a = entity_of(1, 1, 0, stats_of(&grid(0.0, 0.0, 0.4, 0.2, 0.2, false), 0.2));
        let b = entity_of(2, 2, 1, stats_of(&grid(0.5, 0.0, 0.4, 0.2, 0.2, true), 0.2));
        let c = entity_of(3, 3, 2, stats_of(&grid(0.0, 0.5, 0.8, 0.2, 0.2, false), 0.2));

        let span = a.span.union(&b.span);
        let stats = a.stats.merge(&b.stats);
        let inter = Entity::compose(SymbolId(9), 9, true, span, stats, &[&a, &b]);

        let expanded = feature_vector(&[&inter, &c]);
        let flat = feature_vector(&[&a, &b, &c]);
        assert_eq!(expanded, flat, "expansion must be bitwise identical");
        assert_eq!(expanded.len(), 42);
    }

    #[test]
    fn unary_vector_is_node_block() {
        let a = entity_of(1, 1, 0, stats_of(&grid(0.0, 0.0, 0.4, 0.2, 0.2, false), 0.2));
        let f = feature_vector(&[&a]);
        assert_eq!(f.len(), 8);
        assert_eq!(f, node_features(&a.parts[0]));
    }

    #[test]
    fn permutation_invariance() {
        let a = entity_of(1, 1, 0, stats_of(&grid(0.0, 0.0, 0.4, 0.3, 0.2, false), 0.2));
        let b = entity_of(2, 2, 1, stats_of(&grid(0.5, 0.1, 0.6, 0.2, 0.2, true), 0.2));
        let c = entity_of(3, 3, 2, stats_of(&grid(0.1, 0.5, 0.8, 0.1, 0.2, false), 0.2));
        let orders: [[&Entity; 3]; 3] = [[&a, &b, &c], [&c, &a, &b], [&b, &c, &a]];
        let base = feature_vector(&orders[0]);
        for o in &orders[1..] {
            assert_eq!(feature_vector(o), base);
        }
    }

    #[test]
    fn node_features_rigid_motion_invariance() {
        let pts = grid(0.3, -0.2, 0.55, 0.4, 0.25, false);
        let stats = stats_of(&pts, 0.4);
        let base = node_features(&part_at(0, 0, stats));

        let angle = 1.234_f64;
        let (s, c) = angle.sin_cos();
        let moved: Vec<[f64; 3]> = pts
            .iter()
            .map(|p| [c * p[0] - s * p[1] + 5.0, s * p[0] + c * p[1] - 2.0, p[2]])
            .collect();
        let rotated = node_features(&part_at(0, 0, stats_of(&moved, 0.4)));
        for (x, y) in base.iter().zip(&rotated) {
            assert_relative_eq!(x, y, max_relative = 1e-9, epsilon = 1e-9);
        }

        let lifted: Vec<[f64; 3]> = pts.iter().map(|p| [p[0], p[1], p[2] + 1.5]).collect();
        let shifted = node_features(&part_at(0, 0, stats_of(&lifted, 0.4)));
        assert_relative_eq!(shifted[0], base[0] + 1.5, epsilon = 1e-9);
        for i in 1..NODE_DIM {
            assert_relative_eq!(shifted[i], base[i], max_relative = 1e-9, epsilon = 1e-9);
        }
    }

    #[test]
    fn degenerate_geometry_is_finite() {
        let stats = stats_of(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], 0.0);
        let p = part_at(0, 0, stats);
        let f = node_features(&p);
        assert!(f.iter().all(|v| v.is_finite()));
        let g = pair_features(&p, &p);
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
