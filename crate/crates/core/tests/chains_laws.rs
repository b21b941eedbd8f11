use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use quadlab::chains::{hitting_probability, return_probability, w, x_step, y_step, Q};
use quadlab::law::{catalan, enumerate_exact, labeled_count, law_mass, law_table, Law};

fn q(a: i64, b: i64) -> Q {
    Q::new(BigInt::from(a), BigInt::from(b))
}

/// P(rho(x) has `n` edges and only positive labels), by splitting off the
/// first child subtree: T = leaf / 2 + (child subtree) (rest of root) / 2.
fn positive_by_size(x: i64, max_edges: usize) -> Vec<Q> {
    let top = (x + max_edges as i64 + 2) as usize;
    let mut a: Vec<Vec<Q>> = vec![vec![Q::zero(); top + 1]; max_edges + 1];
    for n in 0..=max_edges {
        for y in 1..top {
            let mut v = if n == 0 { q(1, 2) } else { Q::zero() };
            for m in 0..n {
                let k = n - 1 - m;
                let child: Q = [y - 1, y, y + 1].iter().filter(|&&z| z >= 1).map(|&z| a[m][z].clone()).sum::<Q>() / q(3, 1);
                v += q(1, 2) * child * &a[k][y];
            }
            a[n][y] = v;
        }
    }
    a.into_iter().map(|row| row[x as usize].clone()).collect()
}

#[test]
fn w_solves_the_positive_fixed_point() {
    let wq = |x: i64| if x <= 0 { Q::zero() } else { w(x) };
    for x in 1..60 {
        let mean = (wq(x - 1) + wq(x) + wq(x + 1)) / q(3, 1);
        assert_eq!(wq(x), Q::one() / (q(2, 1) - mean), "x = {x}");
    }
    assert_eq!(w(1), q(2, 3));
    assert_eq!(w(2), q(5, 6));
}

#[test]
fn step_probabilities_sum_to_one() {
    for x in 1..80 {
        let (u, s, d) = x_step(x);
        assert_eq!(u + s + d, Q::one(), "X at {x}");
        let (u, s, d) = y_step(x).unwrap();
        assert_eq!(u + s + d, Q::one(), "Y at {x}");
    }
    assert_eq!(x_step(0), (Q::one(), Q::zero(), Q::zero()));
}

#[test]
fn return_probability_matches_one_step_analysis() {
    for k in 1..30 {
        let (u, s, d) = x_step(k);
        let down = if k > 1 { d * hitting_probability(k - 1, k).unwrap().value } else { d };
        let up = u * hitting_probability(k + 1, k).unwrap().value;
        assert_eq!(return_probability(k), up + s + down, "k = {k}");
    }
}

#[test]
fn enumeration_counts() {
    for n in 0..=5 {
        let exact = enumerate_exact(n, 0).unwrap();
        assert_eq!(BigInt::from(exact.len()), catalan(n) * BigInt::from(3).pow(n as u32));
        let distinct: std::collections::HashSet<_> = exact.iter().map(|t| t.to_text()).collect();
        assert_eq!(distinct.len(), exact.len());
    }
    assert_eq!(labeled_count(3), BigInt::from(1 + 3 + 18 + 135));
}

#[test]
fn rho_masses_sum_by_size() {
    let table = law_table(Law::Rho(0), 5).unwrap();
    let mut by_size: HashMap<usize, Q> = HashMap::new();
    for (code, m) in &table {
        let edges: usize = code.split_whitespace().nth(2).unwrap().parse().unwrap();
        *by_size.entry(edges).or_insert_with(Q::zero) += m;
    }
    for n in 0..=5 {
        // P(|T| = n) for the geometric(1/2) Galton-Watson tree
        let expected = Q::from_integer(catalan(n)) / Q::from_integer(BigInt::from(2).pow(2 * n as u32 + 1));
        assert_eq!(by_size[&n], expected, "n = {n}");
    }
}

#[test]
fn conditioned_masses_match_the_size_recursion() {
    for x in 1..=3 {
        let oracle = positive_by_size(x, 5);
        let table = law_table(Law::RhoPlus(x), 5).unwrap();
        let mut by_size = vec![Q::zero(); 6];
        for (code, m) in &table {
            let edges: usize = code.split_whitespace().nth(2).unwrap().parse().unwrap();
            by_size[edges] += m;
        }
        for n in 0..=5 {
            assert_eq!(&by_size[n] * w(x), oracle[n], "x = {x}, n = {n}");
        }
    }
}

#[test]
fn complementary_laws_partition_rho() {
    for t in enumerate_exact(4, 2).unwrap() {
        let plus = law_mass(&t, Law::RhoPlus(2)).unwrap() * w(2);
        let minus = law_mass(&t, Law::RhoMinus(2)).unwrap() * (Q::one() - w(2));
        assert_eq!(plus + minus, law_mass(&t, Law::Rho(2)).unwrap());
    }
}
