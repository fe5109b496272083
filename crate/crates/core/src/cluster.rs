//! Single-linkage grouping of image positions.

use serde::Serialize;

use crate::lens::PlanePoint;

/// A partition of points into spatial groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    /// Point indices per group, groups ordered by their smallest index.
    pub groups: Vec<Vec<usize>>,
    /// Shortest link cut between groups divided by the longest link kept
    /// inside a group. Infinite when every group is a single point.
    pub gap_ratio: f64,
    /// Smallest distance between group centroids divided by the largest
    /// centroid-to-member distance. Infinite for a single group or when every
    /// group is a single point.
    pub separation_ratio: f64,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }
}

/// Minimum spanning tree edges `(length, a, b)` by Prim's algorithm.
fn spanning_tree(points: &[PlanePoint]) -> Vec<(f64, usize, usize)> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![(f64::INFINITY, 0usize); n];
    in_tree[0] = true;
    for j in 1..n {
        best[j] = (points[0].dist(&points[j]), 0);
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let (next, &(d, from)) = best
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_tree[*i])
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .expect("points remain outside the tree");
        in_tree[next] = true;
        edges.push((d, from, next));
        for j in 0..n {
            if !in_tree[j] {
                let dj = points[next].dist(&points[j]);
                if dj < best[j].0 {
                    best[j] = (dj, next);
                }
            }
        }
    }
    edges
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clustering into exactly `n_clusters` groups (cutting the
/// longest spanning-tree links).
pub fn single_linkage(points: &[PlanePoint], n_clusters: usize) -> Clustering {
    let n = points.len();
    let k = n_clusters.clamp(1, n.max(1));
    let mut edges = spanning_tree(points);
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let keep = n.saturating_sub(k);
    let mut parent: Vec<usize> = (0..n).collect();
    for &(_, a, b) in &edges[..keep] {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra.max(rb)] = ra.min(rb);
    }
    let longest_kept = if keep > 0 { edges[keep - 1].0 } else { 0.0 };
    let shortest_cut = edges.get(keep).map_or(f64::INFINITY, |e| e.0);
    let gap_ratio = if longest_kept > 0.0 {
        shortest_cut / longest_kept
    } else {
        f64::INFINITY
    };

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = std::collections::HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let slot = *root_slot.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(i);
    }
    let separation_ratio = separation_ratio(points, &groups);
    Clustering {
        groups,
        gap_ratio,
        separation_ratio,
    }
}

fn separation_ratio(points: &[PlanePoint], groups: &[Vec<usize>]) -> f64 {
    let centroids: Vec<PlanePoint> = groups
        .iter()
        .map(|g| g.iter().fold(PlanePoint::ORIGIN, |a, &i| a + points[i]) * (1.0 / g.len() as f64))
        .collect();
    let radius = groups
        .iter()
        .zip(&centroids)
        .flat_map(|(g, c)| g.iter().map(move |&i| points[i].dist(c)))
        .fold(0.0, f64::max);
    let mut spacing = f64::INFINITY;
    for (i, a) in centroids.iter().enumerate() {
        for b in &centroids[i + 1..] {
            spacing = spacing.min(a.dist(b));
        }
    }
    if radius > 0.0 {
        spacing / radius
    } else {
        f64::INFINITY
    }
}

/// Single-linkage clustering cut at the largest relative gap between
/// consecutive spanning-tree link lengths.
pub fn cluster_by_largest_gap(points: &[PlanePoint]) -> Clustering {
    let mut lengths: Vec<f64> = spanning_tree(points).into_iter().map(|e| e.0).collect();
    lengths.sort_by(|a, b| a.total_cmp(b));
    let mut best_k = 1;
    let mut best_ratio = 0.0;
    for i in 0..lengths.len().saturating_sub(1) {
        if lengths[i] <= 0.0 {
            continue;
        }
        let ratio = lengths[i + 1] / lengths[i];
        if ratio > best_ratio {
            best_ratio = ratio;
            // keeping links 0..=i leaves n - (i + 1) groups
            best_k = points.len() - (i + 1);
        }
    }
    single_linkage(points, best_k)
}
