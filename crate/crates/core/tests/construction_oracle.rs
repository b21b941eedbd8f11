use quadlab::law::{enumerate_labeled_trees, law_mass, Law};
use quadlab::samplers::{t_k_construction_probability, theta_n_construction_probability};

#[test]
fn tri_path_construction_reproduces_conditioned_masses() {
    for k in 1..=3 {
        let mut checked = 0;
        for t in enumerate_labeled_trees(5, k).unwrap() {
            if t.min_label() > 0 {
                continue;
            }
            let expected = law_mass(&t, Law::RhoMinus(k)).unwrap();
            assert_eq!(theta_n_construction_probability(&t), expected, "k = {k}, tree {t}");
            checked += 1;
        }
        assert!(checked > 0);
    }
}

#[test]
fn spine_construction_reproduces_rerooted_masses() {
    for k in 1..=3 {
        for t in enumerate_labeled_trees(5, k).unwrap() {
            if t.min_label() > 0 {
                continue;
            }
            let cs = t.corners();
            let j = cs.labels.iter().position(|&l| l == 0).unwrap();
            let (r, _) = t.reroot_at_corner(j).unwrap();
            let gap = (cs.len() - j) % cs.len();
            let expected = law_mass(&t, Law::RhoMinus(k)).unwrap();
            assert_eq!(t_k_construction_probability(&r, gap), expected, "k = {k}, tree {t}");
        }
    }
}
