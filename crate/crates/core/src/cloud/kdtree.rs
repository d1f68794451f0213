//! Exact nearest-neighbor lookup: a k-d tree for large targets with a
//! linear-scan fallback for small ones. Both strategies return the
//! lexicographic minimum over (squared distance, point index), so results
//! are identical regardless of strategy.

use nalgebra::Point3;

use super::CloudError;

/// Below this many points a linear scan beats tree traversal.
const BRUTE_FORCE_LIMIT: usize = 500;

#[derive(Debug, Clone)]
struct Node {
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

#[derive(Debug, Clone)]
enum Strategy {
    Brute,
    Tree { nodes: Vec<Node>, root: i32 },
}

/// Nearest-neighbor index over a fixed point set.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Point3<f64>>,
    strategy: Strategy,
}

impl NeighborIndex {
    /// Builds an index; sets smaller than the brute-force limit skip tree
    /// construction entirely.
    pub fn build(points: &[Point3<f64>]) -> Result<NeighborIndex, CloudError> {
        Self::build_with(points, points.len() >= BRUTE_FORCE_LIMIT)
    }

    /// Forces the tree or brute strategy; exposed for equivalence tests.
    pub(crate) fn build_with(
        points: &[Point3<f64>],
        use_tree: bool,
    ) -> Result<NeighborIndex, CloudError> {
        if points.is_empty() {
            return Err(CloudError::EmptyCloud);
        }
        let points = points.to_vec();
        let strategy = if use_tree {
            let mut indices: Vec<u32> = (0..points.len() as u32).collect();
            let mut nodes = Vec::with_capacity(points.len());
            let root = build_subtree(&points, &mut indices, &mut nodes);
            Strategy::Tree { nodes, root }
        } else {
            Strategy::Brute
        };
        Ok(NeighborIndex { points, strategy })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the nearest point; ties broken by the
    /// lowest index.
    pub fn nearest(&self, query: &Point3<f64>) -> (usize, f64) {
        match &self.strategy {
            Strategy::Brute => {
                let mut best = (0usize, f64::INFINITY);
                for (i, p) in self.points.iter().enumerate() {
                    let d2 = (p - query).norm_squared();
                    if d2 < best.1 {
                        best = (i, d2);
                    }
                }
                best
            }
            Strategy::Tree { nodes, root } => {
                let mut best = (u32::MAX, f64::INFINITY);
                descend(&self.points, nodes, *root, query, &mut best);
                (best.0 as usize, best.1)
            }
        }
    }
}

/// Longest-extent axis of a point subset.
fn widest_axis(points: &[Point3<f64>], indices: &[u32]) -> u8 {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for &i in indices {
        let p = &points[i as usize];
        for a in 0..3 {
            min[a] = min[a].min(p[a]);
            max[a] = max[a].max(p[a]);
        }
    }
    let mut axis = 0;
    let mut widest = max[0] - min[0];
    for a in 1..3 {
        let extent = max[a] - min[a];
        if extent > widest {
            widest = extent;
            axis = a;
        }
    }
    axis as u8
}

fn build_subtree(points: &[Point3<f64>], indices: &mut [u32], nodes: &mut Vec<Node>) -> i32 {
    if indices.is_empty() {
        return -1;
    }
    let axis = widest_axis(points, indices);
    indices.sort_unstable_by(|&a, &b| {
        points[a as usize][axis as usize]
            .partial_cmp(&points[b as usize][axis as usize])
            .expect("finite coordinates")
            .then(a.cmp(&b))
    });
    let mid = indices.len() / 2;
    let point = indices[mid];
    let slot = nodes.len() as i32;
    nodes.push(Node {
        point,
        axis,
        left: -1,
        right: -1,
    });
    let (left_half, rest) = indices.split_at_mut(mid);
    let left = build_subtree(points, left_half, nodes);
    let right = build_subtree(points, &mut rest[1..], nodes);
    nodes[slot as usize].left = left;
    nodes[slot as usize].right = right;
    slot
}

fn descend(
    points: &[Point3<f64>],
    nodes: &[Node],
    slot: i32,
    query: &Point3<f64>,
    best: &mut (u32, f64),
) {
    if slot < 0 {
        return;
    }
    let node = &nodes[slot as usize];
    let p = &points[node.point as usize];
    let d2 = (p - query).norm_squared();
    if d2 < best.1 || (d2 == best.1 && node.point < best.0) {
        *best = (node.point, d2);
    }
    let axis = node.axis as usize;
    let delta = query[axis] - p[axis];
    let (near, far) = if delta < 0.0 {
        (node.left, node.right)
    } else {
        (node.right, node.left)
    };
    descend(points, nodes, near, query, best);
    // The far side can still hold an equally near point with a lower
    // index, so prune only on strictly greater plane distance.
    if delta * delta <= best.1 {
        descend(points, nodes, far, query, best);
    }
}
