//! Segmented 3D scenes as attributed adjacency graphs.
//!
//! A segment is summarized by additive second-moment statistics: point
//! count, coordinate sum, 3x3 scatter matrix about the origin, z extent,
//! and convex-hull area. Merging two summaries is componentwise, so any
//! union of segments has exact statistics without retaining points; the
//! best-fit plane and its residual fall out of the eigendecomposition of
//! the centered scatter.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::span::Span;
use crate::{Error, Result};

pub type SegmentId = u32;

/// Segments closer than this are adjacent.
pub const ADJACENCY_DIST: f64 = 0.05;
/// Segments closer than this are adjacent when the pair is flagged occluded.
pub const ADJACENCY_DIST_OCCLUDED: f64 = 0.5;

/// Additive second-moment summary of a point set.
///
/// `scatter` holds raw second moments about the origin (`sum of p pᵀ`), so
/// merging is plain addition. The centered scatter, eigenvalues, centroid
/// and plane fit are derived on demand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentStats {
    pub point_count: u64,
    pub sum: Vector3<f64>,
    pub scatter: Matrix3<f64>,
    pub z_min: f64,
    pub z_max: f64,
    pub hull_area: f64,
}

impl SegmentStats {
    pub fn from_points(points: &[Vector3<f64>], hull_area: f64) -> Self {
        assert!(!points.is_empty(), "a segment needs at least one point");
        let mut sum = Vector3::zeros();
        let mut scatter = Matrix3::zeros();
        let mut z_min = f64::INFINITY;
        let mut z_max = f64::NEG_INFINITY;
        for p in points {
            sum += p;
            scatter += p * p.transpose();
            z_min = z_min.min(p.z);
            z_max = z_max.max(p.z);
        }
        SegmentStats {
            point_count: points.len() as u64,
            sum,
            scatter,
            z_min,
            z_max,
            hull_area,
        }
    }

    /// Componentwise merge. The hull area is the sum of the children's hull
    /// areas; point lists are gone by this point, so the union hull is not
    /// recomputable and the additive value is the documented approximation.
    pub fn merge(&self, other: &SegmentStats) -> SegmentStats {
        SegmentStats {
            point_count: self.point_count + other.point_count,
            sum: self.sum + other.sum,
            scatter: self.scatter + other.scatter,
            z_min: self.z_min.min(other.z_min),
            z_max: self.z_max.max(other.z_max),
            hull_area: self.hull_area + other.hull_area,
        }
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.sum / self.point_count as f64
    }

    /// Second moments about the centroid: `scatter − sum sumᵀ / count`.
    pub fn centered_scatter(&self) -> Matrix3<f64> {
        self.scatter - self.sum * self.sum.transpose() / self.point_count as f64
    }

    /// Eigenvalues of the centered scatter, descending, clamped at zero.
    pub fn eigenvalues_desc(&self) -> [f64; 3] {
        let eig = SymmetricEigen::new(self.centered_scatter());
        let mut vals = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
        vals.sort_by(|a, b| b.total_cmp(a));
        vals.map(|v| v.max(0.0))
    }

    /// Unit normal of the best-fit plane (eigenvector of the smallest
    /// eigenvalue), oriented canonically, and the residual: the smallest
    /// eigenvalue, i.e. the sum of squared point-to-plane distances.
    pub fn plane_fit(&self) -> Result<(Vector3<f64>, f64)> {
        if self.point_count < 3 {
            return Err(Error::InsufficientPoints(self.point_count));
        }
        Ok(self.principal_plane())
    }

    /// Same as [`plane_fit`](Self::plane_fit) without the point-count guard;
    /// with fewer than 3 points the residual is exactly 0 and the normal is
    /// an arbitrary canonical choice.
    pub fn principal_plane(&self) -> (Vector3<f64>, f64) {
        let eig = SymmetricEigen::new(self.centered_scatter());
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let smallest = order[0];
        let normal = canonical_normal(eig.eigenvectors.column(smallest).into_owned());
        let residual = eig.eigenvalues[smallest].max(0.0);
        (normal, residual)
    }

    /// Plane-fit residual without the normal.
    pub fn plane_residual(&self) -> f64 {
        self.eigenvalues_desc()[2]
    }

    /// Radius proxy from the dominant eigenvalue; exact for a uniform rod,
    /// a mild underestimate for plates.
    pub fn bounding_radius(&self) -> f64 {
        let l0 = self.eigenvalues_desc()[0];
        (3.0 * l0 / self.point_count as f64).sqrt()
    }
}

/// Free-function alias for the componentwise merge.
pub fn merge_stats(a: &SegmentStats, b: &SegmentStats) -> SegmentStats {
    a.merge(b)
}

/// Flip `n` so its z component is positive, tie-breaking on x then y.
fn canonical_normal(n: Vector3<f64>) -> Vector3<f64> {
    let n = n.normalize();
    let flip = if n.z != 0.0 {
        n.z < 0.0
    } else if n.x != 0.0 {
        n.x < 0.0
    } else {
        n.y < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

/// One terminal of the scene: a planar segment with derived geometry.
#[derive(Clone, Debug)]
pub struct Segment {
    pub id: SegmentId,
    pub stats: SegmentStats,
    pub centroid: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// Eigenvalues of the centered scatter, descending, clamped at zero.
    pub eigenvalues: [f64; 3],
}

impl Segment {
    pub fn new(id: SegmentId, stats: SegmentStats) -> Self {
        let (normal, _) = stats.principal_plane();
        Segment {
            id,
            stats,
            centroid: stats.centroid(),
            normal,
            eigenvalues: stats.eigenvalues_desc(),
        }
    }
}

fn ordered(a: SegmentId, b: SegmentId) -> (SegmentId, SegmentId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A segmented scene: terminals plus the adjacency graph over them.
#[derive(Clone, Debug)]
pub struct Scene {
    segments: Vec<Segment>,
    index_of: HashMap<SegmentId, usize>,
    edges: BTreeSet<(SegmentId, SegmentId)>,
    occluded: BTreeSet<(SegmentId, SegmentId)>,
    min_dist: BTreeMap<(SegmentId, SegmentId), f64>,
    neighbor_masks: Vec<Span>,
    span_words: usize,
}

impl Scene {
    pub fn new(
        segments: Vec<Segment>,
        edges: BTreeSet<(SegmentId, SegmentId)>,
        occluded: BTreeSet<(SegmentId, SegmentId)>,
        min_dist: BTreeMap<(SegmentId, SegmentId), f64>,
    ) -> Result<Self> {
        let mut segments = segments;
        segments.sort_by_key(|s| s.id);
        let mut index_of = HashMap::new();
        for (i, s) in segments.iter().enumerate() {
            if index_of.insert(s.id, i).is_some() {
                return Err(Error::Invalid(format!("duplicate segment id {}", s.id)));
            }
        }
        for &(a, b) in &edges {
            if a == b {
                return Err(Error::Invalid(format!("self-edge on segment {a}")));
            }
            for id in [a, b] {
                if !index_of.contains_key(&id) {
                    return Err(Error::Invalid(format!("edge references unknown id {id}")));
                }
            }
        }
        let span_words = Span::words_for(segments.len());
        let mut neighbor_masks = vec![Span::empty(span_words); segments.len()];
        for &(a, b) in &edges {
            let (ia, ib) = (index_of[&a], index_of[&b]);
            neighbor_masks[ia].insert(ib);
            neighbor_masks[ib].insert(ia);
        }
        Ok(Scene {
            segments,
            index_of,
            edges,
            occluded,
            min_dist,
            neighbor_masks,
            span_words,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn n_terminals(&self) -> usize {
        self.segments.len()
    }

    pub fn span_words(&self) -> usize {
        self.span_words
    }

    pub fn edges(&self) -> &BTreeSet<(SegmentId, SegmentId)> {
        &self.edges
    }

    pub fn occluded(&self) -> &BTreeSet<(SegmentId, SegmentId)> {
        &self.occluded
    }

    pub fn min_dist(&self) -> &BTreeMap<(SegmentId, SegmentId), f64> {
        &self.min_dist
    }

    pub fn index_of(&self, id: SegmentId) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    pub fn id_of(&self, index: usize) -> SegmentId {
        self.segments[index].id
    }

    pub fn segment(&self, index: usize) -> &Segment {
        &self.segments[index]
    }

    pub fn neighbor_mask(&self, index: usize) -> &Span {
        &self.neighbor_masks[index]
    }

    /// Union of neighbor masks over the span: every terminal adjacent to it.
    pub fn span_neighborhood(&self, span: &Span) -> Span {
        let mut out = Span::empty(self.span_words);
        for i in span.iter() {
            out.union_with(&self.neighbor_masks[i]);
        }
        out
    }

    /// Exact merged statistics for a span, folded in ascending terminal
    /// order so the result depends only on the span, not on how a
    /// derivation happened to build it.
    pub fn span_stats(&self, span: &Span) -> SegmentStats {
        let mut it = span.iter();
        let first = it.next().expect("span must be non-empty");
        let mut acc = self.segments[first].stats;
        for i in it {
            acc = acc.merge(&self.segments[i].stats);
        }
        acc
    }

    pub fn spans_adjacent(&self, a: &Span, b: &Span) -> bool {
        self.span_neighborhood(a).intersects(b)
    }

    /// True when the span induces a connected subgraph.
    pub fn span_connected(&self, span: &Span) -> bool {
        let Some(start) = span.min_index() else {
            return false;
        };
        let mut reached = Span::singleton(self.span_words, start);
        let mut frontier = vec![start];
        while let Some(i) = frontier.pop() {
            for j in self.neighbor_masks[i].iter() {
                if span.contains(j) && !reached.contains(j) {
                    reached.insert(j);
                    frontier.push(j);
                }
            }
        }
        reached.len() == span.len()
    }
}

/// Pairwise minimum distances plus occlusion flags, the inputs adjacency
/// is derived from. Distances absent from the table fall back to centroid
/// distance minus bounding radii.
#[derive(Clone, Debug, Default)]
pub struct AdjacencyInput {
    pub min_dist: BTreeMap<(SegmentId, SegmentId), f64>,
    pub occluded: BTreeSet<(SegmentId, SegmentId)>,
}

impl AdjacencyInput {
    pub fn set_dist(&mut self, a: SegmentId, b: SegmentId, d: f64) {
        self.min_dist.insert(ordered(a, b), d);
    }

    pub fn flag_occluded(&mut self, a: SegmentId, b: SegmentId) {
        self.occluded.insert(ordered(a, b));
    }
}

/// Connect segments less than 0.05 m apart, or less than 0.5 m apart when
/// the pair is flagged occluded.
pub fn build_adjacency(segments: Vec<Segment>, input: &AdjacencyInput) -> Result<Scene> {
    let mut edges = BTreeSet::new();
    for i in 0..segments.len() {
        for j in (i + 1)..segments.len() {
            let (a, b) = (&segments[i], &segments[j]);
            let key = ordered(a.id, b.id);
            let d = input.min_dist.get(&key).copied().unwrap_or_else(|| {
                let gap = (a.centroid - b.centroid).norm()
                    - a.stats.bounding_radius()
                    - b.stats.bounding_radius();
                gap.max(0.0)
            });
            let limit = if input.occluded.contains(&key) {
                ADJACENCY_DIST_OCCLUDED
            } else {
                ADJACENCY_DIST
            };
            if d < limit {
                edges.insert(key);
            }
        }
    }
    Scene::new(
        segments,
        edges,
        input.occluded.clone(),
        input.min_dist.clone(),
    )
}

/// A manually labeled derivation: internal nodes carry symbol names,
/// leaves reference scene segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroundTruthTree {
    Node {
        label: String,
        children: Vec<GroundTruthTree>,
    },
    Leaf(SegmentId),
}

impl GroundTruthTree {
    pub fn node(label: impl Into<String>, children: Vec<GroundTruthTree>) -> Self {
        GroundTruthTree::Node {
            label: label.into(),
            children,
        }
    }

    pub fn leaf(id: SegmentId) -> Self {
        GroundTruthTree::Leaf(id)
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            GroundTruthTree::Node { label, .. } => Some(label),
            GroundTruthTree::Leaf(_) => None,
        }
    }

    pub fn leaf_ids(&self) -> Vec<SegmentId> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<SegmentId>) {
        match self {
            GroundTruthTree::Leaf(id) => out.push(*id),
            GroundTruthTree::Node { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    /// Check leaf uniqueness and non-empty internal nodes.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        self.validate_inner(&mut seen)
    }

    fn validate_inner(&self, seen: &mut HashSet<SegmentId>) -> Result<()> {
        match self {
            GroundTruthTree::Leaf(id) => {
                if !seen.insert(*id) {
                    return Err(Error::DuplicateLeaf(*id));
                }
            }
            GroundTruthTree::Node { label, children } => {
                if children.is_empty() {
                    return Err(Error::Invalid(format!(
                        "internal node {label:?} has no children"
                    )));
                }
                for c in children {
                    c.validate_inner(seen)?;
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SegmentDto {
    id: SegmentId,
    count: u64,
    sum: [f64; 3],
    scatter: [[f64; 3]; 3],
    z_min: f64,
    z_max: f64,
    hull_area: f64,
}

#[derive(Serialize, Deserialize)]
struct SceneDto {
    segments: Vec<SegmentDto>,
    edges: Vec<[SegmentId; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    occluded: Vec<[SegmentId; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    min_dist: Vec<(SegmentId, SegmentId, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TreeDto {
    Leaf { leaf: SegmentId },
    Node { label: String, children: Vec<TreeDto> },
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    scene_from_json(&text, &path.display().to_string())
}

pub fn scene_from_json(text: &str, file: &str) -> Result<Scene> {
    let dto: SceneDto = serde_json::from_str(text).map_err(|source| Error::Json {
        path: file.to_string(),
        source,
    })?;
    let mut segments = Vec::with_capacity(dto.segments.len());
    for (i, s) in dto.segments.iter().enumerate() {
        let at = |field: &str| format!("segments[{i}].{field}");
        if s.count < 1 {
            return Err(Error::format(file, at("count"), "must be at least 1"));
        }
        let all = s
            .sum
            .iter()
            .chain(s.scatter.iter().flatten())
            .chain([&s.z_min, &s.z_max, &s.hull_area]);
        for v in all {
            if !v.is_finite() {
                return Err(Error::format(file, format!("segments[{i}]"), "non-finite value"));
            }
        }
        if s.z_min > s.z_max {
            return Err(Error::format(file, at("z_min"), "exceeds z_max"));
        }
        if s.hull_area < 0.0 {
            return Err(Error::format(file, at("hull_area"), "must be nonnegative"));
        }
        let scatter = Matrix3::from_fn(|r, c| s.scatter[r][c]);
        let scale = scatter.norm().max(1.0);
        if (scatter - scatter.transpose()).norm() > 1e-9 * scale {
            return Err(Error::format(file, at("scatter"), "not symmetric"));
        }
        let stats = SegmentStats {
            point_count: s.count,
            sum: Vector3::from(s.sum),
            scatter,
            z_min: s.z_min,
            z_max: s.z_max,
            hull_area: s.hull_area,
        };
        // PSD holds for any real point set; validate via the centered form.
        if stats.centered_scatter().symmetric_eigenvalues().min() < -1e-6 * scale {
            return Err(Error::format(file, at("scatter"), "not positive semidefinite"));
        }
        segments.push(Segment::new(s.id, stats));
    }
    let known: HashSet<SegmentId> = segments.iter().map(|s| s.id).collect();
    if known.len() != segments.len() {
        return Err(Error::format(file, "segments", "duplicate segment id"));
    }
    let mut edges = BTreeSet::new();
    for (i, &[a, b]) in dto.edges.iter().enumerate() {
        let at = format!("edges[{i}]");
        if a == b {
            return Err(Error::format(file, at, format!("self-edge on segment {a}")));
        }
        if !known.contains(&a) || !known.contains(&b) {
            return Err(Error::format(file, at, "unknown segment id"));
        }
        edges.insert(ordered(a, b));
    }
    let mut occluded = BTreeSet::new();
    for (i, &[a, b]) in dto.occluded.iter().enumerate() {
        if !known.contains(&a) || !known.contains(&b) {
            return Err(Error::format(file, format!("occluded[{i}]"), "unknown segment id"));
        }
        occluded.insert(ordered(a, b));
    }
    let mut min_dist = BTreeMap::new();
    for (i, &(a, b, d)) in dto.min_dist.iter().enumerate() {
        let at = format!("min_dist[{i}]");
        if !known.contains(&a) || !known.contains(&b) {
            return Err(Error::format(file, at, "unknown segment id"));
        }
        if !d.is_finite() || d < 0.0 {
            return Err(Error::format(file, at, "distance must be a nonnegative number"));
        }
        min_dist.insert(ordered(a, b), d);
    }
    Scene::new(segments, edges, occluded, min_dist)
}

pub fn scene_to_json(scene: &Scene) -> String {
    let dto = SceneDto {
        segments: scene
            .segments
            .iter()
            .map(|s| SegmentDto {
                id: s.id,
                count: s.stats.point_count,
                sum: [s.stats.sum.x, s.stats.sum.y, s.stats.sum.z],
                scatter: [
                    [s.stats.scatter[(0, 0)], s.stats.scatter[(0, 1)], s.stats.scatter[(0, 2)]],
                    [s.stats.scatter[(1, 0)], s.stats.scatter[(1, 1)], s.stats.scatter[(1, 2)]],
                    [s.stats.scatter[(2, 0)], s.stats.scatter[(2, 1)], s.stats.scatter[(2, 2)]],
                ],
                z_min: s.stats.z_min,
                z_max: s.stats.z_max,
                hull_area: s.stats.hull_area,
            })
            .collect(),
        edges: scene.edges.iter().map(|&(a, b)| [a, b]).collect(),
        occluded: scene.occluded.iter().map(|&(a, b)| [a, b]).collect(),
        min_dist: scene.min_dist.iter().map(|(&(a, b), &d)| (a, b, d)).collect(),
    };
    serde_json::to_string_pretty(&dto).expect("scene serialization cannot fail")
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &scene_to_json(scene))
}

pub fn load_tree(path: impl AsRef<Path>) -> Result<GroundTruthTree> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    tree_from_json(&text, &path.display().to_string())
}

pub fn tree_from_json(text: &str, file: &str) -> Result<GroundTruthTree> {
    let dto: TreeDto = serde_json::from_str(text).map_err(|source| Error::Json {
        path: file.to_string(),
        source,
    })?;
    fn convert(dto: &TreeDto) -> GroundTruthTree {
        match dto {
            TreeDto::Leaf { leaf } => GroundTruthTree::Leaf(*leaf),
            TreeDto::Node { label, children } => GroundTruthTree::Node {
                label: label.clone(),
                children: children.iter().map(convert).collect(),
            },
        }
    }
    let tree = convert(&dto);
    if matches!(tree, GroundTruthTree::Leaf(_)) {
        return Err(Error::format(file, "root", "tree root must be a labeled node"));
    }
    tree.validate()?;
    Ok(tree)
}

pub fn tree_to_json(tree: &GroundTruthTree) -> String {
    fn convert(t: &GroundTruthTree) -> TreeDto {
        match t {
            GroundTruthTree::Leaf(id) => TreeDto::Leaf { leaf: *id },
            GroundTruthTree::Node { label, children } => TreeDto::Node {
                label: label.clone(),
                children: children.iter().map(convert).collect(),
            },
        }
    }
    serde_json::to_string_pretty(&convert(tree)).expect("tree serialization cannot fail")
}

pub fn save_tree(tree: &GroundTruthTree, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &tree_to_json(tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn stats_of(points: &[[f64; 3]]) -> SegmentStats {
        let pts: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::from(*p)).collect();
        SegmentStats::from_points(&pts, 1.0)
    }

    fn random_stats(rng: &mut StdRng) -> SegmentStats {
        let n = rng.random_range(3..20);
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ]
            })
            .collect();
        stats_of(&pts)
    }

    #[test]
    fn merge_doubles_on_self() {
        let s = stats_of(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [0.5, 0.5, 0.5]]);
        let m = s.merge(&s);
        assert_eq!(m.point_count, 2 * s.point_count);
        assert_eq!(m.scatter, s.scatter * 2.0);
        assert_eq!(m.sum, s.sum * 2.0);
        assert_eq!(m.hull_area, 2.0 * s.hull_area);
    }

    #[test]
    fn merge_two_single_points() {
        let a = stats_of(&[[0.0, 0.0, 0.0]]);
        let b = stats_of(&[[1.0, 0.0, 0.0]]);
        let m = a.merge(&b);
        assert_eq!(m.point_count, 2);
        assert_eq!(m.sum, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(m.scatter[(0, 0)], 1.0);
    }

    #[test]
    fn merge_commutes_and_associates() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..100 {
            let (a, b, c) = (random_stats(&mut rng), random_stats(&mut rng), random_stats(&mut rng));
            let ab = a.merge(&b);
            let ba = b.merge(&a);
            assert_eq!(ab.point_count, ba.point_count);
            assert_eq!(ab.sum, ba.sum);
            assert_eq!(ab.scatter, ba.scatter);

            let left = ab.merge(&c);
            let right = a.merge(&b.merge(&c));
            assert_eq!(left.point_count, right.point_count);
            for r in 0..3 {
                for col in 0..3 {
                    assert_relative_eq!(
                        left.scatter[(r, col)],
                        right.scatter[(r, col)],
                        max_relative = 1e-12,
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn plane_fit_coplanar() {
        let s = stats_of(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
        ]);
        let (n, d) = s.plane_fit().unwrap();
        assert_relative_eq!(n.z, 1.0, epsilon = 1e-12);
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn plane_fit_unit_cube_corners() {
        // Centered scatter of the 8 corners is diag(2, 2, 2); the smallest
        // eigenvalue, hence the residual, is exactly 2.
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push([x, y, z]);
                }
            }
        }
        let s = stats_of(&pts);
        let (_, d) = s.plane_fit().unwrap();
        assert_relative_eq!(d, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn plane_fit_zero_residual_stable_under_inplane_points() {
        let mut pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        for k in 0..20 {
            pts.push([k as f64 * 0.1, (20 - k) as f64 * 0.05, 0.0]);
            let s = stats_of(&pts);
            let (_, d) = s.plane_fit().unwrap();
            assert!(d.abs() < 1e-9, "residual grew to {d}");
        }
    }

    #[test]
    fn plane_fit_requires_three_points() {
        let s = stats_of(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!(matches!(s.plane_fit(), Err(Error::InsufficientPoints(2))));
        assert_eq!(s.plane_residual(), 0.0);
    }

    #[test]
    fn plane_residual_rotation_invariant() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let pts: Vec<[f64; 3]> = (0..30)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-0.01..0.01),
                    ]
                })
                .collect();
            let s = stats_of(&pts);
            let (_, d0) = s.plane_fit().unwrap();

            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            let rotated: Vec<Vector3<f64>> = pts.iter().map(|p| rot * Vector3::from(*p)).collect();
            let s2 = SegmentStats::from_points(&rotated, 1.0);
            let (_, d1) = s2.plane_fit().unwrap();
            assert_relative_eq!(d0, d1, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    fn flat_segment(id: SegmentId, cx: f64, cy: f64) -> Segment {
        let pts: Vec<[f64; 3]> = vec![
            [cx - 0.1, cy - 0.1, 0.0],
            [cx + 0.1, cy - 0.1, 0.0],
            [cx - 0.1, cy + 0.1, 0.0],
            [cx + 0.1, cy + 0.1, 0.0],
        ];
        Segment::new(id, stats_of(&pts))
    }

    #[test]
    fn adjacency_thresholds() {
        let segs = vec![flat_segment(0, 0.0, 0.0), flat_segment(1, 10.0, 0.0)];
        let mut input = AdjacencyInput::default();
        input.set_dist(0, 1, 0.03);
        let scene = build_adjacency(segs.clone(), &input).unwrap();
        assert!(scene.edges().contains(&(0, 1)));

        let mut input = AdjacencyInput::default();
        input.set_dist(0, 1, 0.4);
        let scene = build_adjacency(segs.clone(), &input).unwrap();
        assert!(scene.edges().is_empty());

        input.flag_occluded(0, 1);
        let scene = build_adjacency(segs.clone(), &input).unwrap();
        assert!(scene.edges().contains(&(0, 1)));

        let mut input = AdjacencyInput::default();
        input.set_dist(0, 1, 0.6);
        input.flag_occluded(0, 1);
        let scene = build_adjacency(segs, &input).unwrap();
        assert!(scene.edges().is_empty());
    }

    #[test]
    fn adjacency_falls_back_to_centroid_gap() {
        // 0.2 m squares 0.05 m apart edge to edge, no distance table.
        let segs = vec![flat_segment(0, 0.0, 0.0), flat_segment(1, 0.22, 0.0)];
        let scene = build_adjacency(segs, &AdjacencyInput::default()).unwrap();
        assert!(scene.edges().contains(&(0, 1)));
    }

    #[test]
    fn scene_roundtrip_and_validation() {
        let text = r#"{
            "segments": [
                {"id": 3, "count": 4, "sum": [0.0,0.0,0.0], "scatter": [[1.0,0,0],[0,1.0,0],[0,0,0.0]], "z_min": 0.0, "z_max": 0.0, "hull_area": 0.5}
            ],
            "edges": []
        }"#;
        let scene = scene_from_json(text, "inline").unwrap();
        assert_eq!(scene.n_terminals(), 1);
        let json = scene_to_json(&scene);
        let back = scene_from_json(&json, "roundtrip").unwrap();
        assert_eq!(back.n_terminals(), 1);
        assert_eq!(back.segment(0).id, 3);

        let bad = text.replace("\"count\": 4", "\"count\": 0");
        let err = scene_from_json(&bad, "inline").unwrap_err();
        assert!(err.to_string().contains("segments[0].count"), "{err}");

        let bad_edge = text.replace("\"edges\": []", "\"edges\": [[3,9]]");
        let err = scene_from_json(&bad_edge, "inline").unwrap_err();
        assert!(err.to_string().contains("edges[0]"), "{err}");
    }

    #[test]
    fn tree_parse_and_duplicate_leaf() {
        let text = r#"{"label":"Table","children":[{"leaf":1},{"label":"tableTop","children":[{"leaf":2}]}]}"#;
        let tree = tree_from_json(text, "inline").unwrap();
        assert_eq!(tree.leaf_ids(), vec![1, 2]);

        let dup = r#"{"label":"Table","children":[{"leaf":1},{"leaf":1}]}"#;
        let err = tree_from_json(dup, "inline").unwrap_err();
        assert!(matches!(err, Error::DuplicateLeaf(1)));
    }

    #[test]
    fn span_connectivity() {
        let segs = vec![
            flat_segment(0, 0.0, 0.0),
            flat_segment(1, 1.0, 0.0),
            flat_segment(2, 2.0, 0.0),
        ];
        let mut input = AdjacencyInput::default();
        input.set_dist(0, 1, 0.01);
        input.set_dist(1, 2, 0.01);
        input.set_dist(0, 2, 1.0);
        let scene = build_adjacency(segs, &input).unwrap();
        let w = scene.span_words();
        let mut all = Span::empty(w);
        for i in 0..3 {
            all.insert(i);
        }
        assert!(scene.span_connected(&all));
        let mut gap = Span::singleton(w, 0);
        gap.insert(2);
        assert!(!scene.span_connected(&gap));
        assert!(scene.spans_adjacent(&Span::singleton(w, 0), &Span::singleton(w, 1)));
        assert!(!scene.spans_adjacent(&Span::singleton(w, 0), &Span::singleton(w, 2)));
    }
}
