use std::collections::HashSet;

use quadlab::cvs::{build_geodesic_boundary_quad, cvs_finite, extract_geodesics, GeodesicKind};
use quadlab::law::enumerate_labeled_trees;
use quadlab::metrics::{bfs_distances, canonical_code, face_degrees, is_bipartite_by_parity, verify_geodesic};

#[test]
fn three_edge_family_is_injective_with_square_faces() {
    let trees: Vec<_> = enumerate_labeled_trees(3, 0).unwrap().into_iter().filter(|t| t.edges() == 3).collect();
    assert_eq!(trees.len(), 135);
    let mut codes = HashSet::new();
    for t in &trees {
        let q = cvs_finite(t).unwrap();
        assert_eq!((q.vertex_count(), q.edge_count()), (5, 6));
        let faces = face_degrees(&q).unwrap();
        assert_eq!(faces, vec![4; 3], "tree {t}");
        let star = q.marked.unwrap();
        let d = bfs_distances(&q, star);
        for v in 0..5 {
            assert_eq!(d[v] as i64, q.labels[v] - q.labels[star as usize]);
        }
        assert!(is_bipartite_by_parity(&q));
        assert!(codes.insert(canonical_code(&q).unwrap()));
    }
}

#[test]
fn small_trees_give_quadrangulations() {
    for t in enumerate_labeled_trees(5, 0).unwrap() {
        let q = cvs_finite(&t).unwrap();
        let faces = face_degrees(&q).unwrap();
        let n = t.edges();
        assert_eq!(q.vertex_count(), n + 2);
        assert_eq!(q.edge_count(), 2 * n.max(1) - usize::from(n == 0));
        if n > 0 {
            assert!(faces.iter().all(|&f| f == 4), "tree {t}: {faces:?}");
            assert_eq!(faces.len(), n);
        }
        let path = extract_geodesics(&q, &t, GeodesicKind::Tau);
        assert!(verify_geodesic(&q, &path, true).ok());
    }
}

#[test]
fn geodesic_boundary_quads_have_square_inner_faces() {
    for t in enumerate_labeled_trees(4, 0).unwrap() {
        let g = build_geodesic_boundary_quad(&t).unwrap();
        let n = t.edges();
        let delta = g.delta as usize;
        assert_eq!(g.quad.edge_count(), 2 * n + delta, "tree {t}");
        assert_eq!(g.quad.vertex_count(), n + 1 + delta);
        let mut faces = face_degrees(&g.quad).unwrap();
        faces.sort();
        let mut expected = vec![4; n];
        expected.push(2 * delta);
        expected.sort();
        assert_eq!(faces, expected, "tree {t}");
        assert!(verify_geodesic(&g.quad, &g.gamma, true).ok());
        assert!(verify_geodesic(&g.quad, &g.gamma_tilde, true).ok());
    }
}
