mod common;

use num_traits::{One, Zero};
use proptest::prelude::*;
use quadlab::cvs::{cvs_finite, Quadrangulation};
use quadlab::metrics::{ball, ball_equal, bfs_distances, canonical_code, local_distance, maps_equal, renumber, BallCompare, LocalDistance};

const INF: u32 = u32::MAX / 4;

fn floyd_warshall(q: &Quadrangulation) -> Vec<Vec<u32>> {
    let n = q.vertex_count();
    let mut d = vec![vec![INF; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0;
    }
    for &(a, b) in &q.edges {
        if a != b {
            d[a as usize][b as usize] = 1;
            d[b as usize][a as usize] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

fn map(max_edges: usize) -> impl Strategy<Value = Quadrangulation> {
    common::tree(0i64..=0, max_edges).prop_map(|t| cvs_finite(&t).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bfs_matches_floyd_warshall(q in map(48)) {
        let fw = floyd_warshall(&q);
        for s in 0..q.vertex_count() {
            let d = bfs_distances(&q, s as u32);
            for (t, &dt) in d.iter().enumerate() {
                prop_assert_eq!(dt, fw[s][t]);
            }
        }
    }

    #[test]
    fn graph_distance_is_a_metric(q in map(30)) {
        let d = floyd_warshall(&q);
        let n = q.vertex_count();
        for i in 0..n {
            for j in 0..n {
                prop_assert!(d[i][j] < INF);
                prop_assert_eq!(d[i][j], d[j][i]);
                prop_assert_eq!(d[i][j] == 0, i == j);
                for k in 0..n {
                    prop_assert!(d[i][j] <= d[i][k] + d[k][j]);
                }
            }
        }
    }

    #[test]
    fn labels_are_one_lipschitz(q in map(40)) {
        for &(a, b) in &q.edges {
            prop_assert_eq!((q.labels[a as usize] - q.labels[b as usize]).abs(), 1);
        }
        let star = q.marked.unwrap();
        let min = *q.labels.iter().min().unwrap();
        prop_assert_eq!(q.labels[star as usize], min);
        let d = bfs_distances(&q, star);
        for v in 0..q.vertex_count() {
            prop_assert_eq!(d[v] as i64, q.labels[v] - min);
        }
    }

    #[test]
    fn balls_are_nested(q in map(40), center in any::<prop::sample::Index>()) {
        let c = center.index(q.vertex_count()) as u32;
        let far = *bfs_distances(&q, c).iter().max().unwrap();
        let mut prev: Vec<u32> = Vec::new();
        for r in 0..=far + 1 {
            let b = ball(&q, c, r);
            prop_assert!(prev.iter().all(|v| b.vertices.contains(v)));
            prop_assert!(b.certified);
            prop_assert_eq!(b.exhausts, r >= far);
            prop_assert_eq!(b.map.vertex_count(), b.vertices.len());
            prev = b.vertices;
        }
        prop_assert_eq!(prev.len(), q.vertex_count());
    }

    #[test]
    fn code_ignores_vertex_names(q in map(30), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut perm: Vec<u32> = (0..q.vertex_count() as u32).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let r = renumber(&q, &perm);
        prop_assert_eq!(maps_equal(&q, &r), Some(true));
        prop_assert_eq!(canonical_code(&q), canonical_code(&r));
        prop_assert_eq!(ball_equal(&q, q.root.0, &r, r.root.0, 2), BallCompare::Equal);
        prop_assert_eq!(local_distance(&q, &r, 50), LocalDistance::Exact(Zero::zero()));
    }
}

#[test]
fn distinct_trees_give_positive_local_distance() {
    let a = cvs_finite(&common::build(0, &[(0, 1), (0, 1)])).unwrap();
    let b = cvs_finite(&common::build(0, &[(0, -1)])).unwrap();
    assert_eq!(maps_equal(&a, &b), Some(false));
    match local_distance(&a, &b, 10) {
        LocalDistance::Exact(d) => assert!(d > Zero::zero() && d <= One::one()),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn incomplete_balls_are_unknown() {
    let mut q = cvs_finite(&common::build(0, &[(0, 1), (0, 0), (1, -1)])).unwrap();
    let c = q.root.0;
    q.complete[c as usize] = false;
    assert!(!ball(&q, c, 1).certified);
    assert_eq!(ball_equal(&q, c, &q, c, 1), BallCompare::Unknown);
    assert!(matches!(local_distance(&q, &q, 3), LocalDistance::Unknown { equal_through: None }));
}
