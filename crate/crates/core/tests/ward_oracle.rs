use gpmap::cluster::ward;
use gpmap::fixtures::{blobs, spread_points};
use gpmap::geometry::dist;
use gpmap::{point, Point};
use proptest::prelude::*;

fn kodama_heights(pts: &[Point]) -> Vec<f64> {
    let n = pts.len();
    let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            condensed.push(dist(&pts[i], &pts[j]));
        }
    }
    let dg = kodama::linkage(&mut condensed, n, kodama::Method::Ward);
    let mut h: Vec<f64> = dg.steps().iter().map(|s| s.dissimilarity).collect();
    h.sort_by(f64::total_cmp);
    h
}

fn our_heights(pts: &[Point]) -> Vec<f64> {
    let mut h: Vec<f64> = ward(pts).merges().iter().map(|m| m.height).collect();
    h.sort_by(f64::total_cmp);
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn merge_heights_match_reference(seed in 0u64..10_000, n in 2usize..40) {
        let pts = spread_points(n, 10.0, 1e-3, seed);
        let ours = our_heights(&pts);
        let theirs = kodama_heights(&pts);
        prop_assert_eq!(ours.len(), theirs.len());
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{} vs {}", a, b);
        }
    }
}

#[test]
fn blob_cut_separates_blobs() {
    let pts = blobs(&[point(0.0, 0.0), point(15.0, 0.0)], 40, 1.0, 4);
    let clusters = ward(&pts).cut_max_size(40);
    assert_eq!(clusters.len(), 2);
    assert_eq!(clusters[0], (0..40).collect::<Vec<_>>());
    assert_eq!(clusters[1], (40..80).collect::<Vec<_>>());
    // reference: the top merge joins the two blobs with a height far above
    // every within-blob merge
    let h = kodama_heights(&pts);
    assert!(h[h.len() - 1] > 5.0 * h[h.len() - 2]);
}
