#![allow(dead_code)]

use proptest::prelude::*;
use quadlab::tree::{LabeledTree, TreeBuilder};

/// Tree whose vertex `i + 1` hangs below vertex `parent % (i + 1)` with the
/// given label step.
pub fn build(root: i64, steps: &[(u32, i64)]) -> LabeledTree {
    let mut b = TreeBuilder::new(root);
    let mut labels = vec![root];
    for (i, &(p, d)) in steps.iter().enumerate() {
        let parent = p % (i as u32 + 1);
        let l = labels[parent as usize] + d;
        b.add_child(parent, l);
        labels.push(l);
    }
    b.build().0
}

pub fn tree(root: impl Strategy<Value = i64>, max_edges: usize) -> impl Strategy<Value = LabeledTree> {
    (root, prop::collection::vec((any::<u32>(), -1i64..=1), 0..=max_edges)).prop_map(|(r, s)| build(r, &s))
}
