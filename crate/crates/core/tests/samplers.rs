use quadlab::chains::w_f64;
use quadlab::samplers::{
    rng_for, sample_rho, sample_rho_banded, sample_rho_plus_banded, sample_rho_plus_exact, sample_theta_bar, sample_theta_infinity,
    sample_theta_n, SampleError, SamplerBudget,
};
use quadlab::tree::{LabeledTree, Validity};

const N: u64 = 20_000;

fn frequency(mut draw: impl FnMut(u64) -> Option<bool>) -> f64 {
    let (mut hits, mut trials) = (0u64, 0u64);
    for i in 0..N {
        if let Some(hit) = draw(i) {
            trials += 1;
            hits += u64::from(hit);
        }
    }
    assert!(trials as f64 > 0.99 * N as f64, "too many budget failures: {trials}/{N}");
    hits as f64 / trials as f64
}

fn assert_binomial(freq: f64, p: f64) {
    let sigma = (p * (1.0 - p) / N as f64).sqrt();
    assert!((freq - p).abs() <= 4.0 * sigma, "frequency {freq} vs {p} (sigma {sigma:.2e})");
}

#[test]
fn leaf_probability_of_rho() {
    let budget = SamplerBudget::with_edges(100_000);
    let f = frequency(|i| sample_rho(0, &mut rng_for(11, i), &budget).ok().map(|t| t.edges() == 0));
    assert_binomial(f, 0.5);
}

#[test]
fn banded_rho_keeps_band_hitting() {
    let budget = SamplerBudget::with_edges(1_000_000);
    let f = frequency(|i| sample_rho_banded(0, -2, 2, &mut rng_for(12, i), &budget).ok().map(|t| t.min_label() <= -2));
    assert_binomial(f, 1.0 - w_f64(2));
    let f = frequency(|i| sample_rho_banded(2, 0, 4, &mut rng_for(13, i), &budget).ok().map(|t| t.min_label() >= 1));
    assert_binomial(f, w_f64(2));
}

#[test]
fn banded_trees_are_valid() {
    let budget = SamplerBudget::with_edges(1_000_000);
    for i in 0..500 {
        let t = sample_rho_banded(1, -3, 3, &mut rng_for(14, i), &budget).unwrap();
        assert_eq!(t.validate(), Validity::Valid);
        assert_eq!(t.root_label(), 1);
        let p = sample_rho_plus_banded(1, -3, 3, &mut rng_for(15, i), &budget).unwrap();
        assert!(p.min_label() >= 1);
    }
    assert!(matches!(sample_rho_plus_banded(1, 2, 5, &mut rng_for(0, 0), &budget), Err(SampleError::Parameter(_))));
}

#[test]
fn conditioned_leaf_probability() {
    let budget = SamplerBudget::with_edges(1_000_000);
    // P(single vertex | positive) = (1/2) / w(x)
    let f = frequency(|i| {
        let t = sample_rho_plus_exact(1, &mut rng_for(16, i), &budget).ok()?;
        assert!(t.min_label() >= 1);
        Some(t.edges() == 0)
    });
    assert_binomial(f, 0.5 / w_f64(1));
    let f = frequency(|i| sample_rho_plus_banded(1, -3, 3, &mut rng_for(17, i), &budget).ok().map(|t| t.edges() == 0));
    assert_binomial(f, 0.5 / w_f64(1));
}

#[test]
fn streams_are_reproducible() {
    let budget = SamplerBudget::with_edges(100_000);
    let draw = |s: u64| -> Vec<LabeledTree> { (0..50).filter_map(|i| sample_rho(0, &mut rng_for(s, i), &budget).ok()).collect() };
    assert_eq!(draw(21), draw(21));
    assert_ne!(draw(21), draw(22));
    let a = sample_theta_n(3, &mut rng_for(5, 1), &budget).map(|m| m.tree);
    let b = sample_theta_n(3, &mut rng_for(5, 1), &budget).map(|m| m.tree);
    assert_eq!(a, b);
}

#[test]
fn conditioned_tree_marks_first_zero_corner() {
    let budget = SamplerBudget::with_edges(1_000_000);
    for i in 0..200 {
        let Ok(m) = sample_theta_n(4, &mut rng_for(31, i), &budget) else { continue };
        let t = &m.tree;
        assert_eq!(t.validate(), Validity::Valid);
        assert_eq!(t.root_label(), 4);
        let tau = m.mark("tau").unwrap();
        let labels = t.corners().labels;
        assert_eq!(labels[tau], 0);
        assert!(labels[..tau].iter().all(|&l| l != 0));
    }
}

#[test]
fn spine_trees_compose() {
    let budget = SamplerBudget { horizon: 12, ..SamplerBudget::with_edges(1_000_000) };
    for i in 0..100 {
        let Ok(st) = sample_theta_infinity(12, &mut rng_for(41, i), &budget) else { continue };
        assert_eq!(st.horizon(), 12);
        let flat = st.flatten();
        assert_eq!(flat.tree.validate(), Validity::Valid);
        assert_eq!(flat.spine.len(), 13);
        let edges = 12 + st.left.iter().chain(&st.right).map(LabeledTree::edges).sum::<usize>();
        assert_eq!(flat.tree.edges(), edges);
        let Ok(half) = sample_theta_bar(1, 12, &mut rng_for(42, i), &budget) else { continue };
        assert!(half.spine_labels.iter().all(|&x| x >= 0));
        assert!(half.right.iter().skip(1).all(|t| t.min_label() >= 1));
        let second = sample_theta_bar(2, 12, &mut rng_for(42, i), &budget).unwrap();
        assert_eq!(second.spine_labels, half.spine_labels.iter().map(|x| x + 1).collect::<Vec<_>>());
    }
}
