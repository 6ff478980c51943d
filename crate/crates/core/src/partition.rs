//! Areas of responsibility: the Voronoi partition of all primary
//! pseudo-inputs, tagged with the expert owning each site.
//!
//! Membership is answered by nearest-site search. Adjacency and the shared
//! boundary segments come from the Delaunay triangulation of the sites.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{dist2, point, Aabb, Point, Vector};

/// Margin added around the sites' bounding box when clipping unbounded cells.
pub const CLIP_MARGIN: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpertId(pub u64);

impl std::fmt::Display for ExpertId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "expert {}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Site {
    pub location: Point,
    pub expert: ExpertId,
}

/// Voronoi edge between two sites owned by different experts.
#[derive(Clone, Debug)]
struct BoundaryEdge {
    a: usize,
    b: usize,
    // None when the edge lies outside the clip box
    segment: Option<(Point, Point)>,
}

#[derive(Clone, Debug, Default)]
pub struct PartitionIndex {
    sites: Vec<Site>,
    edges: Vec<BoundaryEdge>,
    adjacency: BTreeMap<ExpertId, BTreeSet<ExpertId>>,
    bounds: Option<Aabb>,
}

impl PartitionIndex {
    pub fn build(sites: Vec<Site>) -> Self {
        let mut adjacency: BTreeMap<ExpertId, BTreeSet<ExpertId>> = BTreeMap::new();
        for s in &sites {
            adjacency.entry(s.expert).or_default();
        }
        let bounds = Aabb::from_points(sites.iter().map(|s| &s.location)).map(|b| b.expanded(CLIP_MARGIN));
        let mut index = PartitionIndex {
            sites,
            edges: Vec::new(),
            adjacency,
            bounds,
        };
        if index.adjacency.len() > 1 {
            index.triangulate();
        }
        index
    }

    /// Index over `(expert, primary pseudo-inputs)` pairs, in the given order.
    pub fn from_experts<'a>(experts: impl IntoIterator<Item = (ExpertId, &'a [Point])>) -> Self {
        let sites = experts
            .into_iter()
            .flat_map(|(id, pts)| pts.iter().map(move |p| Site { location: *p, expert: id }))
            .collect();
        Self::build(sites)
    }

    fn triangulate(&mut self) {
        let mut tri: DelaunayTriangulation<spade::Point2<f64>> = DelaunayTriangulation::new();
        // vertex index -> first site inserted at that location
        let mut vertex_site: Vec<Option<usize>> = Vec::new();
        for (i, s) in self.sites.iter().enumerate() {
            let Ok(handle) = tri.insert(spade::Point2::new(s.location.x, s.location.y)) else {
                continue;
            };
            let v = handle.index();
            if v >= vertex_site.len() {
                vertex_site.resize(v + 1, None);
            }
            vertex_site[v].get_or_insert(i);
        }
        let bounds = self.bounds.expect("nonempty sites have bounds");

        for edge in tri.undirected_edges() {
            let d = edge.as_directed();
            let (Some(a), Some(b)) = (
                vertex_site[d.from().fix().index()],
                vertex_site[d.to().fix().index()],
            ) else {
                continue;
            };
            if self.sites[a].expert == self.sites[b].expert {
                continue;
            }
            let pa = self.sites[a].location;
            let pb = self.sites[b].location;
            let ab = pb - pa;
            let left_normal = Vector::new(-ab.y, ab.x);
            let to_point = |p: spade::Point2<f64>| point(p.x, p.y);
            let left = d.face().as_inner().map(|f| to_point(f.circumcenter()));
            let right = d.rev().face().as_inner().map(|f| to_point(f.circumcenter()));
            let clipped = match (left, right) {
                (Some(cl), Some(cr)) => {
                    if (cr - cl).norm() <= 1e-12 {
                        // cocircular sites: the cells only touch at a vertex
                        continue;
                    }
                    bounds.clip(&cl, &(cr - cl), 0.0, 1.0)
                }
                (Some(cl), None) => bounds.clip(&cl, &(-left_normal), 0.0, f64::INFINITY),
                (None, Some(cr)) => bounds.clip(&cr, &left_normal, 0.0, f64::INFINITY),
                (None, None) => {
                    let mid = pa + ab * 0.5;
                    bounds.clip(&mid, &left_normal, f64::NEG_INFINITY, f64::INFINITY)
                }
            };
            let (ea, eb) = (self.sites[a].expert, self.sites[b].expert);
            self.adjacency.entry(ea).or_default().insert(eb);
            self.adjacency.entry(eb).or_default().insert(ea);
            self.edges.push(BoundaryEdge {
                a,
                b,
                segment: clipped,
            });
        }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, id: ExpertId) -> bool {
        self.adjacency.contains_key(&id)
    }

    pub fn experts(&self) -> impl Iterator<Item = ExpertId> + '_ {
        self.adjacency.keys().copied()
    }

    /// Clip box for unbounded cells.
    pub fn bounds(&self) -> Option<Aabb> {
        self.bounds
    }

    /// Index and squared distance of the nearest site. Ties go to the lowest
    /// expert id, then the earliest site.
    pub fn nearest_site(&self, p: &Point) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in self.sites.iter().enumerate() {
            let d = dist2(&s.location, p);
            let better = match best {
                None => true,
                Some((j, bd)) => d < bd || (d == bd && s.expert < self.sites[j].expert),
            };
            if better {
                best = Some((i, d));
            }
        }
        best
    }

    /// Expert whose area of responsibility contains `p`.
    pub fn responsible_expert(&self, p: &Point) -> Option<ExpertId> {
        self.nearest_site(p).map(|(i, _)| self.sites[i].expert)
    }

    /// Distance from `p` to the closest primary pseudo-input of any expert.
    pub fn nearest_distance(&self, p: &Point) -> Option<f64> {
        self.nearest_site(p).map(|(_, d)| d.sqrt())
    }

    pub fn neighbors(&self, id: ExpertId) -> Result<&BTreeSet<ExpertId>> {
        self.adjacency
            .get(&id)
            .ok_or_else(|| Error::Precondition(format!("{id} is not in the partition")))
    }

    /// `per_edge` evenly spaced points on every clipped Voronoi edge separating
    /// a site of `i` from a site of `j`.
    pub fn boundary_samples(&self, i: ExpertId, j: ExpertId, per_edge: usize) -> Result<Vec<Point>> {
        if !self.neighbors(i)?.contains(&j) {
            return Err(Error::Precondition(format!("{i} and {j} are not adjacent")));
        }
        let mut out = Vec::new();
        for e in &self.edges {
            let (ea, eb) = (self.sites[e.a].expert, self.sites[e.b].expert);
            if !((ea == i && eb == j) || (ea == j && eb == i)) {
                continue;
            }
            if let Some((p, q)) = e.segment {
                for m in 0..per_edge {
                    let t = (m as f64 + 0.5) / per_edge as f64;
                    out.push(p + (q - p) * t);
                }
            }
        }
        Ok(out)
    }

    /// Like [`boundary_samples`](Self::boundary_samples) but also returns the
    /// pair of sites generating each point.
    pub fn boundary_samples_with_sites(
        &self,
        i: ExpertId,
        j: ExpertId,
        per_edge: usize,
    ) -> Result<Vec<(Point, usize, usize)>> {
        if !self.neighbors(i)?.contains(&j) {
            return Err(Error::Precondition(format!("{i} and {j} are not adjacent")));
        }
        let mut out = Vec::new();
        for e in &self.edges {
            let (ea, eb) = (self.sites[e.a].expert, self.sites[e.b].expert);
            if !((ea == i && eb == j) || (ea == j && eb == i)) {
                continue;
            }
            if let Some((p, q)) = e.segment {
                for m in 0..per_edge {
                    let t = (m as f64 + 0.5) / per_edge as f64;
                    out.push((p + (q - p) * t, e.a, e.b));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dist;
    use proptest::prelude::*;

    const A: ExpertId = ExpertId(0);
    const B: ExpertId = ExpertId(1);
    const C: ExpertId = ExpertId(2);

    fn site(x: f64, y: f64, e: ExpertId) -> Site {
        Site {
            location: point(x, y),
            expert: e,
        }
    }

    fn two_sites() -> PartitionIndex {
        PartitionIndex::build(vec![site(0.0, 0.0, A), site(2.0, 0.0, B)])
    }

    #[test]
    fn nearest_site_wins() {
        let idx = two_sites();
        assert_eq!(idx.responsible_expert(&point(0.9, 0.0)), Some(A));
        assert_eq!(idx.responsible_expert(&point(1.1, 0.0)), Some(B));
        assert_eq!(idx.responsible_expert(&point(1.0, 0.0)), Some(A));
        // tie goes to the lower id regardless of insertion order
        let rev = PartitionIndex::build(vec![site(2.0, 0.0, B), site(0.0, 0.0, A)]);
        assert_eq!(rev.responsible_expert(&point(1.0, 0.0)), Some(A));
    }

    #[test]
    fn neighbor_sets() {
        let idx = two_sites();
        assert_eq!(idx.neighbors(A).unwrap().iter().copied().collect::<Vec<_>>(), vec![B]);
        assert_eq!(idx.neighbors(B).unwrap().iter().copied().collect::<Vec<_>>(), vec![A]);

        let single = PartitionIndex::build(vec![site(0.0, 0.0, A), site(1.0, 1.0, A)]);
        assert!(single.neighbors(A).unwrap().is_empty());
        assert!(single.neighbors(B).is_err());

        let line = PartitionIndex::build(vec![
            site(0.0, 0.0, A),
            site(1.0, 0.0, B),
            site(2.0, 0.0, C),
        ]);
        assert_eq!(
            line.neighbors(B).unwrap().iter().copied().collect::<Vec<_>>(),
            vec![A, C]
        );
        assert_eq!(line.neighbors(A).unwrap().iter().copied().collect::<Vec<_>>(), vec![B]);
    }

    #[test]
    fn bisector_samples() {
        let idx = two_sites();
        // sites' box [0,2]x[0,0] expanded by 1 is [-1,3]x[-1,1]
        let one = idx.boundary_samples(A, B, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0].x - 1.0).abs() < 1e-12);
        assert!(one[0].y.abs() < 1e-12);

        let three = idx.boundary_samples(A, B, 3).unwrap();
        assert_eq!(three.len(), 3);
        let gaps: Vec<f64> = three.windows(2).map(|w| dist(&w[0], &w[1])).collect();
        assert!((gaps[0] - gaps[1]).abs() < 1e-12);
        for p in &three {
            assert!((p.x - 1.0).abs() < 1e-12);
            assert!(p.y.abs() <= 1.0);
        }
    }

    #[test]
    fn non_adjacent_pair_rejected() {
        let line = PartitionIndex::build(vec![
            site(0.0, 0.0, A),
            site(1.0, 0.0, B),
            site(2.0, 0.0, C),
        ]);
        assert!(line.boundary_samples(A, C, 2).is_err());
    }

    #[test]
    fn cocircular_sites_touching_at_a_vertex_are_not_neighbors() {
        // square corners: diagonal cells meet only at the center
        let idx = PartitionIndex::build(vec![
            site(0.0, 0.0, A),
            site(1.0, 0.0, B),
            site(1.0, 1.0, A),
            site(0.0, 1.0, B),
            site(0.5, 5.0, C),
        ]);
        let bs = idx.boundary_samples(A, B, 4).unwrap();
        for p in bs {
            let da = dist(&p, &point(0.0, 0.0)).min(dist(&p, &point(1.0, 1.0)));
            let db = dist(&p, &point(1.0, 0.0)).min(dist(&p, &point(0.0, 1.0)));
            assert!((da - db).abs() < 1e-6);
        }
    }

    fn arb_sites() -> impl Strategy<Value = Vec<Site>> {
        proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, 0u64..4), 4..30).prop_map(|v| {
            v.into_iter()
                .map(|(x, y, e)| site(x, y, ExpertId(e)))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn responsible_owns_nearest_site(sites in arb_sites(), px in -7.0..7.0f64, py in -7.0..7.0f64) {
            let idx = PartitionIndex::build(sites.clone());
            let p = point(px, py);
            let owner = idx.responsible_expert(&p).unwrap();
            let best = sites.iter().map(|s| dist(&s.location, &p)).fold(f64::INFINITY, f64::min);
            prop_assert!(sites.iter().any(|s| s.expert == owner && dist(&s.location, &p) == best));
        }

        #[test]
        fn samples_lie_on_bisectors_and_separate_owners(sites in arb_sites()) {
            let idx = PartitionIndex::build(sites);
            let experts: Vec<_> = idx.experts().collect();
            for &i in &experts {
                for &j in idx.neighbors(i).unwrap() {
                    for (p, a, b) in idx.boundary_samples_with_sites(i, j, 3).unwrap() {
                        let sa = idx.sites()[a];
                        let sb = idx.sites()[b];
                        prop_assert!((dist(&p, &sa.location) - dist(&p, &sb.location)).abs() < 1e-6);
                        // step off the edge along the site axis
                        let axis = (sb.location - sa.location).normalize();
                        let to_a = p - axis * 1e-3;
                        let to_b = p + axis * 1e-3;
                        let (na, _) = idx.nearest_site(&to_a).unwrap();
                        let (nb, _) = idx.nearest_site(&to_b).unwrap();
                        // skip samples within 1e-3 of a Voronoi vertex
                        let clear = |q: &Point, s: usize| {
                            let d = dist(q, &idx.sites()[s].location);
                            idx.sites().iter().enumerate().all(|(k, o)| k == s || dist(q, &o.location) > d + 1e-9)
                        };
                        if clear(&to_a, a) && clear(&to_b, b) {
                            prop_assert_eq!(idx.sites()[na].expert, sa.expert);
                            prop_assert_eq!(idx.sites()[nb].expert, sb.expert);
                            prop_assert_ne!(sa.expert, sb.expert);
                        }
                    }
                }
            }
        }
    }
}
