//! Ward agglomerative clustering of 2D points and a size-bounded dendrogram cut.

use crate::geometry::{dist, Point};

/// One agglomeration step. Node ids below `n` are leaves, `n + k` is the
/// cluster formed by merge `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug)]
pub struct Dendrogram {
    leaves: usize,
    merges: Vec<Merge>,
}

/// Ward linkage on Euclidean distances using the Lance-Williams recurrence.
/// Heights follow the usual convention where merging two singletons at
/// distance `d` has height `d`. Ties merge the lowest-index pair first.
pub fn ward(points: &[Point]) -> Dendrogram {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist(&points[i], &points[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut node = (0..n).collect::<Vec<_>>();
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let v = d[i * n + j];
                if v < best.0 {
                    best = (v, i, j);
                }
            }
        }
        let (h, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for &k in &active {
            if k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let dik = d[i * n + k];
            let djk = d[j * n + k];
            let v = (((ni + nk) * dik * dik + (nj + nk) * djk * djk - nk * h * h) / (ni + nj + nk))
                .max(0.0)
                .sqrt();
            d[i * n + k] = v;
            d[k * n + i] = v;
        }
        let (lo, hi) = if node[i] < node[j] { (node[i], node[j]) } else { (node[j], node[i]) };
        size[i] += size[j];
        merges.push(Merge {
            a: lo,
            b: hi,
            height: h,
            size: size[i],
        });
        node[i] = n + merges.len() - 1;
        active.retain(|&k| k != j);
    }
    Dendrogram { leaves: n, merges }
}

impl Dendrogram {
    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    fn node_size(&self, node: usize) -> usize {
        if node < self.leaves {
            1
        } else {
            self.merges[node - self.leaves].size
        }
    }

    fn collect_leaves(&self, node: usize, out: &mut Vec<usize>) {
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if v < self.leaves {
                out.push(v);
            } else {
                let m = self.merges[v - self.leaves];
                stack.push(m.a);
                stack.push(m.b);
            }
        }
    }

    /// Coarsest cut of the tree in which no cluster has more than `max_size`
    /// members: clusters are split top-down until they fit. Members are
    /// sorted and clusters ordered by their smallest member.
    pub fn cut_max_size(&self, max_size: usize) -> Vec<Vec<usize>> {
        assert!(max_size >= 1);
        if self.leaves == 0 {
            return Vec::new();
        }
        let root = self.leaves + self.merges.len() - 1;
        let root = if self.merges.is_empty() { 0 } else { root };
        let mut pending = vec![root];
        let mut clusters = Vec::new();
        while let Some(v) = pending.pop() {
            if self.node_size(v) > max_size {
                let m = self.merges[v - self.leaves];
                pending.push(m.a);
                pending.push(m.b);
            } else {
                let mut members = Vec::new();
                self.collect_leaves(v, &mut members);
                members.sort_unstable();
                clusters.push(members);
            }
        }
        clusters.sort_by_key(|c| c[0]);
        clusters
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point;

    #[test]
    fn trivial_inputs() {
        assert!(ward(&[]).cut_max_size(3).is_empty());
        let one = ward(&[point(1.0, 1.0)]);
        assert_eq!(one.cut_max_size(1), vec![vec![0]]);
    }

    #[test]
    fn pairs_merge_first() {
        let pts = [point(0.0, 0.0), point(10.0, 0.0), point(0.1, 0.0), point(10.2, 0.0)];
        let dg = ward(&pts);
        assert_eq!(dg.merges()[0], Merge { a: 0, b: 2, height: 0.1, size: 2 });
        assert_eq!((dg.merges()[1].a, dg.merges()[1].b), (1, 3));
        assert_eq!(dg.cut_max_size(2), vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(dg.cut_max_size(4), vec![vec![0, 1, 2, 3]]);
        assert_eq!(dg.cut_max_size(1).len(), 4);
    }

    #[test]
    fn ward_height_of_three_points() {
        // singletons at 0 and 1, then a third at 5: Lance-Williams gives
        // sqrt((2*25 + 2*16 - 1) / 3)
        let dg = ward(&[point(0.0, 0.0), point(1.0, 0.0), point(5.0, 0.0)]);
        let expected = ((2.0 * 25.0 + 2.0 * 16.0 - 1.0) / 3.0f64).sqrt();
        assert!((dg.merges()[1].height - expected).abs() < 1e-12);
    }
}
