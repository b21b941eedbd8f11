use std::collections::{HashMap, HashSet};

use quadlab::cvs::{
    build_geodesic_boundary_quad, cvs_infinite, glue_half_planes, glue_half_planes_mapped, glue_half_planes_upto, restrict_to_embedded_submap,
    InfiniteVariant,
};
use quadlab::metrics::{bfs_distances, canonical_code, verify_geodesic};
use quadlab::samplers::{rng_for, sample_theta_bar, sample_theta_bar1_submap_window, sample_theta_infinity, sample_theta_n, SampleError, SamplerBudget};

#[test]
fn submap_matches_line_extended_subtree() {
    let budget = SamplerBudget { horizon: 1_000_000, ..SamplerBudget::with_edges(200_000) };
    let mut ok = 0;
    for rep in 0..300 {
        let mut rng = rng_for(11, rep);
        let n = 1 + (rep % 3) as i64;
        let st = match sample_theta_bar1_submap_window(n, &mut rng, &budget) {
            Ok(st) => st,
            Err(_) => continue,
        };
        let (sub, theta) = restrict_to_embedded_submap(&st, n).unwrap();
        let direct = build_geodesic_boundary_quad(&theta).unwrap();
        assert_eq!(canonical_code(&sub.quad), canonical_code(&direct.quad), "rep {rep}");
        ok += 1;
    }
    assert!(ok > 250);
}

#[test]
fn submap_law_close_to_conditioned_tree() {
    let budget = SamplerBudget { horizon: 100_000, ..SamplerBudget::with_edges(2) };
    let n_samples = 10_000u64;
    let mut a: HashMap<_, f64> = HashMap::new();
    let mut b: HashMap<_, f64> = HashMap::new();
    for rep in 0..n_samples {
        // trees above the edge budget share one "large" class on both sides
        let key_a = match sample_theta_bar1_submap_window(1, &mut rng_for(3, rep), &budget) {
            Ok(st) => {
                let (sub, theta) = restrict_to_embedded_submap(&st, 1).unwrap();
                (theta.edges() <= 2).then(|| canonical_code(&sub.quad).unwrap())
            }
            Err(SampleError::Budget { component: "submap-window", .. }) | Err(SampleError::Horizon { .. }) => continue,
            Err(SampleError::Budget { .. }) => None,
            Err(e) => panic!("{e}"),
        };
        *a.entry(key_a).or_default() += 1.0;
        let key_b = match sample_theta_n(1, &mut rng_for(4, rep), &budget) {
            Ok(t) => Some(canonical_code(&build_geodesic_boundary_quad(&t.tree.shifted(-1)).unwrap().quad).unwrap()),
            Err(SampleError::Budget { .. }) => None,
            Err(e) => panic!("{e}"),
        };
        *b.entry(key_b).or_default() += 1.0;
    }
    let keys: HashSet<_> = a.keys().chain(b.keys()).collect();
    let tv: f64 = keys
        .into_iter()
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
        / (2.0 * n_samples as f64);
    assert!(tv < 0.03, "tv {tv}");
}

#[test]
fn patches_have_square_complete_faces() {
    let budget = SamplerBudget::with_edges(100_000);
    for rep in 0..40 {
        let mut rng = rng_for(5, rep);
        for (st, v) in [
            (sample_theta_infinity(30, &mut rng, &budget), InfiniteVariant::SMinus),
            (sample_theta_bar(1, 30, &mut rng, &budget), InfiniteVariant::S1),
            (sample_theta_bar(2, 30, &mut rng, &budget), InfiniteVariant::S2),
        ] {
            let Ok(st) = st else { continue };
            let Ok(p) = cvs_infinite(&st, v) else { continue };
            let faces = p.quad.complete_faces().unwrap();
            assert!(faces.iter().all(|f| f.len() == 4), "{v:?} rep {rep}: {:?}", faces.iter().map(|f| f.len()).collect::<Vec<_>>());
        }
    }
}

#[test]
fn glued_patch_faces_and_seam() {
    let budget = SamplerBudget::with_edges(100_000);
    for rep in 0..40 {
        let mut rng = rng_for(6, rep);
        let Ok(s1) = sample_theta_bar(1, 30, &mut rng, &budget) else { continue };
        let Ok(s2) = sample_theta_bar(2, 30, &mut rng, &budget) else { continue };
        let p1 = cvs_infinite(&s1, InfiniteVariant::S1).unwrap();
        let p2 = cvs_infinite(&s2, InfiniteVariant::S2).unwrap();
        let (g, seam) = glue_half_planes(&p1, &p2).unwrap();
        let faces = g.complete_faces().unwrap();
        assert!(faces.iter().all(|f| f.len() == 4));
        for (i, &v) in seam.iter().enumerate() {
            assert_eq!(g.labels[v as usize], -(i as i64));
        }
        assert!(verify_geodesic(&g, &seam, false).adjacent);
        let d1 = bfs_distances(&p1.quad, 0);
        let dg = bfs_distances(&g, 0);
        for v in 0..p1.quad.vertex_count() {
            assert!(dg[v] <= d1[v]);
        }
    }
}

#[test]
fn gluing_above_zero_extends_the_seam() {
    let budget = SamplerBudget::with_edges(100_000);
    let mut extended = 0;
    for rep in 0..40 {
        let mut rng = rng_for(7, rep);
        let Ok(s1) = sample_theta_bar(1, 30, &mut rng, &budget) else { continue };
        let Ok(s2) = sample_theta_bar(2, 30, &mut rng, &budget) else { continue };
        let p1 = cvs_infinite(&s1, InfiniteVariant::S1).unwrap();
        let p2 = cvs_infinite(&s2, InfiniteVariant::S2).unwrap();
        let base = glue_half_planes_mapped(&p1, &p2).unwrap();
        let same = glue_half_planes_upto(&p1, &p2, 0).unwrap();
        assert_eq!(base.quad, same.quad);
        let g = glue_half_planes_upto(&p1, &p2, 3).unwrap();
        let top = g.quad.labels[g.seam[0] as usize];
        assert!((0..=3).contains(&top));
        for (i, &v) in g.seam.iter().enumerate() {
            assert_eq!(g.quad.labels[v as usize], top - i as i64);
        }
        assert_eq!(g.seam.len(), base.seam.len() + top as usize);
        for (&k, &v) in &p2.lambda {
            let m = g.second[v as usize];
            if k <= top && g.seam.contains(&m) {
                assert_eq!(g.quad.labels[m as usize], k);
            }
        }
        assert_eq!(g.quad.edge_count(), p1.quad.edge_count() + p2.quad.edge_count());
        extended += usize::from(top > 0);
    }
    assert!(extended > 0);
}

#[test]
fn frontier_lists_first_corners_once() {
    let budget = SamplerBudget::with_edges(100_000);
    for rep in 0..40 {
        let mut rng = rng_for(8, rep);
        for (st, v) in [
            (sample_theta_bar(1, 20, &mut rng, &budget), InfiniteVariant::S1),
            (sample_theta_bar(2, 20, &mut rng, &budget), InfiniteVariant::S2),
        ] {
            let Ok(st) = st else { continue };
            let p = cvs_infinite(&st, v).unwrap();
            let f = p.frontier();
            let labels: HashSet<i64> = f.first.iter().map(|&(_, l)| l).collect();
            assert_eq!(labels.len(), f.first.len());
            assert_eq!(labels, p.tree.labels().iter().copied().collect::<HashSet<_>>());
            assert_eq!(f.min_label, p.tree.min_label());
            for &(u, l) in &f.first {
                assert_eq!(p.tree.label(u), l);
            }
            assert!(f.unmatched.windows(2).all(|w| w[0] < w[1]));
            assert!(f.unmatched.iter().all(|&u| (u as usize) < p.tree.len()));
        }
    }
}
