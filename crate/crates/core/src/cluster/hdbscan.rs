use serde::{Deserialize, Serialize};

use super::{check_points, euclidean};
use crate::error::{Error, Result};

/// λ assigned to merges at distance zero.
const MAX_LAMBDA: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    /// When the whole data set is selected as one cluster, a small group
    /// that joins it at a distance more than this many times the next
    /// merge distance is marked as noise. `None` keeps every point.
    pub root_outlier_ratio: Option<f64>,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 2,
            min_samples: 1,
            root_outlier_ratio: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster index per point, `None` for noise. Index 0 is the major
    /// cluster.
    pub labels: Vec<Option<usize>>,
    /// Member indices per cluster, largest first. Equal sizes are ordered by
    /// smaller mean pairwise distance, then by smallest member index.
    pub clusters: Vec<Vec<usize>>,
}

impl ClusterResult {
    pub fn major(&self) -> Option<&[usize]> {
        self.clusters.first().map(Vec::as_slice)
    }

    pub fn noise(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i].is_none())
            .collect()
    }
}

/// Mutual-reachability distances, where the core distance of a point is the
/// distance to its `min_samples`-th nearest other point. The diagonal is 0.
pub fn mutual_reachability(points: &[Vec<f64>], min_samples: usize) -> Result<Vec<Vec<f64>>> {
    check_points(points, 2)?;
    if min_samples == 0 {
        return Err(Error::arg("min_samples must be at least 1"));
    }
    let n = points.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&points[i], &points[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let k = min_samples.min(n - 1);
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[i][j]).collect();
            row.sort_by(f64::total_cmp);
            row[k - 1]
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                dist[i][j] = dist[i][j].max(core[i]).max(core[j]);
            }
        }
    }
    Ok(dist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm on a dense symmetric matrix, grown from vertex 0.
pub fn minimum_spanning_tree(dist: &[Vec<f64>]) -> Vec<MstEdge> {
    let n = dist.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut cur = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            if dist[cur][j] < best[j] {
                best[j] = dist[cur][j];
                from[j] = cur;
            }
            if next == usize::MAX || best[j] < best[next] {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: from[next],
            b: next,
            weight: best[next],
        });
        cur = next;
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Internal node of the single-linkage dendrogram.
struct Merge {
    left: usize,
    right: usize,
    dist: f64,
    size: usize,
}

fn single_linkage(n: usize, mut edges: Vec<MstEdge>) -> Vec<Merge> {
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.min(x.b).cmp(&y.a.min(y.b)))
            .then(x.a.max(x.b).cmp(&y.a.max(y.b)))
    });
    // Nodes 0..n are points, n + k is the k-th merge.
    let mut uf = UnionFind::new(2 * n - 1);
    let mut size = vec![1; 2 * n - 1];
    let mut merges = Vec::with_capacity(n - 1);
    for (k, e) in edges.iter().enumerate() {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        let node = n + k;
        uf.parent[ra] = node;
        uf.parent[rb] = node;
        size[node] = size[ra] + size[rb];
        merges.push(Merge {
            left: ra,
            right: rb,
            dist: e.weight,
            size: size[node],
        });
    }
    merges
}

enum Child {
    Point(usize),
    Cluster(usize),
}

/// One row of the condensed tree: `child` leaves `parent` at `lambda`.
struct Row {
    parent: usize,
    child: Child,
    lambda: f64,
    size: usize,
}

fn lambda_of(dist: f64) -> f64 {
    if dist > 0.0 {
        (1.0 / dist).min(MAX_LAMBDA)
    } else {
        MAX_LAMBDA
    }
}

/// Collapses the dendrogram so that only splits into two groups of at least
/// `min_size` create new clusters. Cluster 0 is the root; children always
/// have larger ids than their parent.
fn condense(n: usize, merges: &[Merge], min_size: usize) -> (Vec<Row>, usize) {
    let node_size = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let leaves = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                stack.push(merges[x - n].right);
                stack.push(merges[x - n].left);
            }
        }
        out
    };

    let mut rows = Vec::new();
    let mut n_clusters = 1;
    let mut queue = std::collections::VecDeque::from([(2 * n - 2, 0usize)]);
    while let Some((node, cluster)) = queue.pop_front() {
        if node < n {
            continue;
        }
        let m = &merges[node - n];
        let lambda = lambda_of(m.dist);
        let (ls, rs) = (node_size(m.left), node_size(m.right));
        let fall_out = |side: usize, rows: &mut Vec<Row>| {
            for p in leaves(side) {
                rows.push(Row {
                    parent: cluster,
                    child: Child::Point(p),
                    lambda,
                    size: 1,
                });
            }
        };
        match (ls >= min_size, rs >= min_size) {
            (true, true) => {
                for (side, size) in [(m.left, ls), (m.right, rs)] {
                    let id = n_clusters;
                    n_clusters += 1;
                    rows.push(Row {
                        parent: cluster,
                        child: Child::Cluster(id),
                        lambda,
                        size,
                    });
                    queue.push_back((side, id));
                }
            }
            (false, false) => {
                fall_out(m.left, &mut rows);
                fall_out(m.right, &mut rows);
            }
            (true, false) => {
                fall_out(m.right, &mut rows);
                queue.push_back((m.left, cluster));
            }
            (false, true) => {
                fall_out(m.left, &mut rows);
                queue.push_back((m.right, cluster));
            }
        }
    }
    (rows, n_clusters)
}

/// Excess-of-mass selection. The root takes part, so a data set without
/// internal density gaps comes out as a single cluster.
fn select_clusters(rows: &[Row], n_clusters: usize) -> Vec<bool> {
    let mut birth = vec![0.0; n_clusters];
    let mut children = vec![Vec::new(); n_clusters];
    for r in rows {
        if let Child::Cluster(c) = r.child {
            birth[c] = r.lambda;
            children[r.parent].push(c);
        }
    }
    let mut stability = vec![0.0; n_clusters];
    for r in rows {
        stability[r.parent] += (r.lambda - birth[r.parent]) * r.size as f64;
    }

    let mut selected = vec![false; n_clusters];
    let mut subtree = vec![0.0; n_clusters];
    for c in (0..n_clusters).rev() {
        let below: f64 = children[c].iter().map(|&k| subtree[k]).sum();
        if children[c].is_empty() || stability[c] >= below {
            selected[c] = true;
            subtree[c] = stability[c];
            let mut stack = children[c].clone();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                stack.extend_from_slice(&children[k]);
            }
        } else {
            subtree[c] = below;
        }
    }
    selected
}

/// Points that leave the root early and far from everything else.
fn root_outliers(rows: &[Row], n: usize, min_size: usize, ratio: f64) -> Vec<usize> {
    // Departure events from the root, farthest first.
    let mut events: Vec<(f64, Vec<usize>, bool)> = Vec::new();
    let mut root_rows: Vec<&Row> = rows.iter().filter(|r| r.parent == 0).collect();
    root_rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    for r in root_rows {
        let (point, is_split) = match r.child {
            Child::Point(p) => (Some(p), false),
            Child::Cluster(_) => (None, true),
        };
        match events.last_mut() {
            Some(last) if last.0 == r.lambda => {
                last.1.extend(point);
                last.2 |= is_split;
            }
            _ => events.push((r.lambda, point.into_iter().collect(), is_split)),
        }
    }

    let mut cut = None;
    let mut removed = 0;
    for k in 0..events.len().saturating_sub(1) {
        let (lambda, ref pts, is_split) = events[k];
        if is_split || pts.len() >= min_size {
            break;
        }
        removed += pts.len();
        if 2 * (n - removed) < n {
            break;
        }
        // λ is an inverse distance, so the distance ratio is λ_next / λ.
        if events[k + 1].0 > ratio * lambda {
            cut = Some(k);
        }
    }
    match cut {
        Some(k) => events[..=k]
            .iter()
            .flat_map(|e| e.1.iter().copied())
            .collect(),
        None => Vec::new(),
    }
}

fn members(rows: &[Row], cluster: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![cluster];
    while let Some(c) = stack.pop() {
        for r in rows.iter().filter(|r| r.parent == c) {
            match r.child {
                Child::Point(p) => out.push(p),
                Child::Cluster(k) => stack.push(k),
            }
        }
    }
    out.sort_unstable();
    out
}

fn mean_pairwise(points: &[Vec<f64>], idx: &[usize]) -> f64 {
    if idx.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            total += euclidean(&points[i], &points[j]);
        }
    }
    total / (idx.len() * (idx.len() - 1) / 2) as f64
}

/// HDBSCAN with excess-of-mass cluster selection over Euclidean distance.
pub fn hdbscan(points: &[Vec<f64>], params: &HdbscanParams) -> Result<ClusterResult> {
    check_points(points, 2)?;
    if params.min_cluster_size < 2 {
        return Err(Error::arg("min_cluster_size must be at least 2"));
    }
    if let Some(r) = params.root_outlier_ratio {
        if !(r.is_finite() && r > 1.0) {
            return Err(Error::arg(format!(
                "root_outlier_ratio must exceed 1, got {r}"
            )));
        }
    }
    let n = points.len();
    let mreach = mutual_reachability(points, params.min_samples)?;
    let merges = single_linkage(n, minimum_spanning_tree(&mreach));
    let (rows, n_clusters) = condense(n, &merges, params.min_cluster_size);
    let selected = select_clusters(&rows, n_clusters);

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for c in (0..n_clusters).filter(|&c| selected[c]) {
        let mut m = members(&rows, c);
        if c == 0 {
            if let Some(ratio) = params.root_outlier_ratio {
                let out = root_outliers(&rows, n, params.min_cluster_size, ratio);
                m.retain(|p| !out.contains(p));
            }
        }
        if !m.is_empty() {
            groups.push(m);
        }
    }

    let mut keyed: Vec<(usize, f64, Vec<usize>)> = groups
        .into_iter()
        .map(|g| (g.len(), mean_pairwise(points, &g), g))
        .collect();
    keyed.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2[0].cmp(&b.2[0]))
    });
    let clusters: Vec<Vec<usize>> = keyed.into_iter().map(|k| k.2).collect();
    let mut labels = vec![None; n];
    for (id, c) in clusters.iter().enumerate() {
        for &p in c {
            labels[p] = Some(id);
        }
    }
    Ok(ClusterResult { labels, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn mutual_reachability_on_a_line() {
        let m = mutual_reachability(&line(&[0.0, 1.0, 2.0, 10.0]), 1).unwrap();
        // core distances 1, 1, 1, 8
        let expected = [
            [0.0, 1.0, 2.0, 10.0],
            [1.0, 0.0, 1.0, 9.0],
            [2.0, 1.0, 0.0, 8.0],
            [10.0, 9.0, 8.0, 0.0],
        ];
        for i in 0..4 {
            assert_eq!(m[i], expected[i]);
        }
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = vec![vec![0.5, 0.5]; 6];
        let r = hdbscan(&pts, &HdbscanParams::default()).unwrap();
        assert_eq!(r.clusters, vec![(0..6).collect::<Vec<_>>()]);
    }

    #[test]
    fn far_singleton_is_noise() {
        let mut xs: Vec<f64> = (0..9).map(|i| i as f64 * 0.01).collect();
        xs.push(50.0);
        let r = hdbscan(&line(&xs), &HdbscanParams::default()).unwrap();
        assert_eq!(r.labels[9], None);
        assert_eq!(r.major().unwrap(), (0..9).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn too_few_points() {
        assert!(hdbscan(&[vec![1.0]], &HdbscanParams::default()).is_err());
    }
}
