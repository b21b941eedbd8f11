mod common;

use proptest::prelude::*;
use quadlab::tree::{LabeledTree, Validity};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn text_round_trip(t in common::tree(-5i64..=5, 40)) {
        let back = LabeledTree::from_text(&t.to_text()).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_text(), t.to_text());
    }

    #[test]
    fn address_round_trip(t in common::tree(-5i64..=5, 30)) {
        let back = LabeledTree::from_addresses(&t.addresses()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn labels_step_by_at_most_one(t in common::tree(-5i64..=5, 40)) {
        prop_assert_eq!(t.validate(), Validity::Valid);
        for v in 1..t.len() as u32 {
            let p = t.parent(v).unwrap();
            prop_assert!((t.label(v) - t.label(p)).abs() <= 1);
        }
    }

    #[test]
    fn contour_processes(t in common::tree(0i64..=0, 40)) {
        let (contour, labels) = t.contour_label_processes();
        prop_assert_eq!(contour.len(), 2 * t.edges() + 1);
        prop_assert_eq!(labels.len(), contour.len());
        prop_assert_eq!(contour[0], 0);
        prop_assert_eq!(*contour.last().unwrap(), 0);
        for w in contour.windows(2) {
            prop_assert_eq!(w[0].abs_diff(w[1]), 1);
        }
        for w in labels.windows(2) {
            prop_assert!((w[0] - w[1]).abs() <= 1);
        }
        prop_assert_eq!(labels.iter().min().copied(), Some(t.min_label()));
    }

    #[test]
    fn corners_visit_each_vertex_by_degree(t in common::tree(0i64..=0, 40)) {
        let cs = t.corners();
        prop_assert_eq!(cs.len(), (2 * t.edges()).max(1));
        let mut seen = vec![0usize; t.len()];
        for &v in &cs.vertices {
            seen[v as usize] += 1;
        }
        for v in 0..t.len() as u32 {
            let degree = t.children(v).count() + usize::from(v != 0);
            prop_assert_eq!(seen[v as usize], degree.max(1));
        }
    }

    #[test]
    fn rerooting_keeps_size_and_labels(t in common::tree(0i64..=0, 30), c in any::<prop::sample::Index>()) {
        let corners = t.corners().len();
        let c = c.index(corners);
        let (r, map) = t.reroot_at_corner(c).unwrap();
        prop_assert_eq!(r.edges(), t.edges());
        prop_assert_eq!(r.validate(), Validity::Valid);
        for v in 0..t.len() {
            prop_assert_eq!(r.label(map[v]), t.label(v as u32));
        }
        prop_assert_eq!(r.root_label(), t.label(t.corners().vertices[c]));
        let (same, _) = t.reroot_at_corner(0).unwrap();
        prop_assert_eq!(same, t);
    }

    #[test]
    fn shifting_is_invertible(t in common::tree(-3i64..=3, 30), k in -10i64..=10) {
        let s = t.shifted(k);
        prop_assert_eq!(s.min_label(), t.min_label() + k);
        prop_assert_eq!(s.max_label(), t.max_label() + k);
        prop_assert_eq!(s.shifted(-k), t);
    }
}

#[test]
fn malformed_text_is_rejected() {
    for bad in ["", "tree", "tree 0 1 (", "tree 0 2 (+)", "tree 0 1 (x)", "tree a 0 ()", "tree 0 1 (+))"] {
        assert!(LabeledTree::from_text(bad).is_err(), "accepted {bad:?}");
    }
    assert_eq!(LabeledTree::from_text("tree 0 0 ()").unwrap(), LabeledTree::single(0));
}

#[test]
fn invalid_addresses_are_reported() {
    let jump = [(vec![], 0), (vec![1], 2)];
    assert!(LabeledTree::from_addresses(&jump).is_err());
    let orphan = [(vec![], 0), (vec![2], 1)];
    assert!(LabeledTree::from_addresses(&orphan).is_err());
}
