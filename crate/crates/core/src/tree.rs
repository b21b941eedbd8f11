//! Rooted planar labeled trees: storage, validation, corners, contour
//! processes, rerooting, spine decompositions and the text format.

use std::fmt;

use thiserror::Error;

pub const NONE: u32 = u32::MAX;

/// Plane tree stored as parent / first-child / next-sibling arrays.
///
/// Vertices are numbered in depth-first preorder, so two trees with the
/// same shape always have identical arrays and derived equality is
/// structural equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PlanarTree {
    parent: Vec<u32>,
    first_child: Vec<u32>,
    next_sibling: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabeledTree {
    tree: PlanarTree,
    labels: Vec<i64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("edge count mismatch: header says {declared}, body has {actual}")]
    EdgeCount { declared: usize, actual: usize },
    #[error("label step violation at vertex {vertex}")]
    LabelStep { vertex: u32 },
    #[error("corner index {0} out of range")]
    Corner(usize),
}

impl PlanarTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn edges(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn parent(&self, v: u32) -> Option<u32> {
        let p = self.parent[v as usize];
        (p != NONE).then_some(p)
    }

    pub fn first_child(&self, v: u32) -> Option<u32> {
        let c = self.first_child[v as usize];
        (c != NONE).then_some(c)
    }

    pub fn next_sibling(&self, v: u32) -> Option<u32> {
        let c = self.next_sibling[v as usize];
        (c != NONE).then_some(c)
    }

    pub fn children(&self, v: u32) -> Children<'_> {
        Children { tree: self, next: self.first_child[v as usize] }
    }

    pub fn child_count(&self, v: u32) -> usize {
        self.children(v).count()
    }

    pub fn depth(&self, mut v: u32) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent(v) {
            v = p;
            d += 1;
        }
        d
    }

    /// Ulam-Harris address of `v` (children numbered from 1).
    pub fn address(&self, v: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut v = v;
        while let Some(p) = self.parent(v) {
            let idx = self.children(p).position(|c| c == v).unwrap() as u32 + 1;
            out.push(idx);
            v = p;
        }
        out.reverse();
        out
    }

    /// Vertex sequence of the closed contour walk, length `2|t| + 1`.
    pub fn contour(&self) -> Vec<u32> {
        let mut walk = Vec::with_capacity(2 * self.len());
        walk.push(0);
        let mut v = 0u32;
        let mut came_from_child: Option<u32> = None;
        loop {
            let next = match came_from_child {
                None => self.first_child(v),
                Some(c) => self.next_sibling(c),
            };
            match next {
                Some(c) => {
                    v = c;
                    came_from_child = None;
                    walk.push(v);
                }
                None => match self.parent(v) {
                    Some(p) => {
                        came_from_child = Some(v);
                        v = p;
                        walk.push(v);
                    }
                    None => break,
                },
            }
        }
        walk
    }
}

pub struct Children<'a> {
    tree: &'a PlanarTree,
    next: u32,
}

impl Iterator for Children<'_> {
    type Item = u32;
    fn next(&mut self) -> Option<u32> {
        if self.next == NONE {
            return None;
        }
        let c = self.next;
        self.next = self.tree.next_sibling[c as usize];
        Some(c)
    }
}

/// Incremental builder. Children are appended in planar (left to right)
/// order; `build` renumbers everything into preorder.
#[derive(Clone, Debug, Default)]
pub struct TreeBuilder {
    kids: Vec<Vec<u32>>,
    labels: Vec<i64>,
}

impl TreeBuilder {
    pub fn new(root_label: i64) -> Self {
        TreeBuilder { kids: vec![Vec::new()], labels: vec![root_label] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, v: u32) -> i64 {
        self.labels[v as usize]
    }

    pub fn child_count(&self, v: u32) -> usize {
        self.kids[v as usize].len()
    }

    pub fn add_child(&mut self, parent: u32, label: i64) -> u32 {
        let id = self.labels.len() as u32;
        self.labels.push(label);
        self.kids.push(Vec::new());
        self.kids[parent as usize].push(id);
        id
    }

    /// Appends a copy of `sub` below `parent`: the children of the root of
    /// `sub` become the next children of `parent`. Labels of `sub` are
    /// shifted by `shift`.
    pub fn graft_children(&mut self, parent: u32, sub: &LabeledTree, shift: i64) -> Vec<u32> {
        let mut map = vec![NONE; sub.len()];
        map[0] = parent;
        for v in 1..sub.len() as u32 {
            let p = sub.tree.parent[v as usize];
            let id = self.add_child(map[p as usize], sub.labels[v as usize] + shift);
            map[v as usize] = id;
        }
        map
    }

    /// Returns the tree and the map from builder ids to preorder ids.
    pub fn build(self) -> (LabeledTree, Vec<u32>) {
        let n = self.labels.len();
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![0u32];
        while let Some(v) = stack.pop() {
            order.push(v);
            for &c in self.kids[v as usize].iter().rev() {
                stack.push(c);
            }
        }
        let mut new_id = vec![NONE; n];
        for (i, &v) in order.iter().enumerate() {
            new_id[v as usize] = i as u32;
        }
        let mut parent = vec![NONE; n];
        let mut first_child = vec![NONE; n];
        let mut next_sibling = vec![NONE; n];
        let mut labels = vec![0; n];
        for (old, kids) in self.kids.iter().enumerate() {
            let p = new_id[old];
            labels[p as usize] = self.labels[old];
            let mut prev = NONE;
            for &c in kids {
                let c = new_id[c as usize];
                parent[c as usize] = p;
                if prev == NONE {
                    first_child[p as usize] = c;
                } else {
                    next_sibling[prev as usize] = c;
                }
                prev = c;
            }
        }
        let tree = LabeledTree { tree: PlanarTree { parent, first_child, next_sibling }, labels };
        (tree, new_id)
    }
}

/// Corners of a finite tree in clockwise (contour) order, starting at the
/// root corner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CornerSequence {
    pub vertices: Vec<u32>,
    pub labels: Vec<i64>,
}

impl CornerSequence {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Cyclic interval from corner `i` to corner `j`, clockwise.
    pub fn interval(&self, i: usize, j: usize) -> Vec<usize> {
        corner_interval(self.len(), i, j)
    }
}

/// Cyclic clockwise interval `[c_i, c_j]` on a sequence of `len` corners.
pub fn corner_interval(len: usize, i: usize, j: usize) -> Vec<usize> {
    assert!(i < len && j < len, "corner index out of range");
    let mut out = vec![i];
    let mut k = i;
    while k != j {
        k = (k + 1) % len;
        out.push(k);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Validity {
    Valid,
    MissingRoot,
    Duplicate { address: Vec<u32> },
    MissingParent { address: Vec<u32> },
    PrefixGap { address: Vec<u32> },
    LabelStep { address: Vec<u32>, parent_label: i64, label: i64 },
}

/// Checks a tree given as Ulam-Harris addresses (children numbered from 1)
/// with labels. Reports the first violated condition.
pub fn validate_addresses(vertices: &[(Vec<u32>, i64)]) -> Validity {
    use std::collections::BTreeMap;
    let mut map: BTreeMap<Vec<u32>, i64> = BTreeMap::new();
    for (addr, l) in vertices {
        if map.insert(addr.clone(), *l).is_some() {
            return Validity::Duplicate { address: addr.clone() };
        }
    }
    if !map.contains_key(&Vec::new()) {
        return Validity::MissingRoot;
    }
    for (addr, &l) in &map {
        if addr.is_empty() {
            continue;
        }
        let (last, prefix) = addr.split_last().unwrap();
        let Some(&pl) = map.get(prefix) else {
            return Validity::MissingParent { address: addr.clone() };
        };
        if *last == 0 {
            return Validity::PrefixGap { address: addr.clone() };
        }
        if *last > 1 {
            let mut sib = prefix.to_vec();
            sib.push(last - 1);
            if !map.contains_key(&sib) {
                return Validity::PrefixGap { address: addr.clone() };
            }
        }
        if (pl - l).abs() > 1 {
            return Validity::LabelStep { address: addr.clone(), parent_label: pl, label: l };
        }
    }
    Validity::Valid
}

impl LabeledTree {
    pub fn single(label: i64) -> Self {
        TreeBuilder::new(label).build().0
    }

    /// Builds a tree from Ulam-Harris addresses, failing on invalid input.
    pub fn from_addresses(vertices: &[(Vec<u32>, i64)]) -> Result<Self, Validity> {
        match validate_addresses(vertices) {
            Validity::Valid => {}
            bad => return Err(bad),
        }
        let mut sorted: Vec<_> = vertices.to_vec();
        sorted.sort();
        let mut b = TreeBuilder::new(sorted[0].1);
        let mut ids = std::collections::BTreeMap::new();
        ids.insert(Vec::<u32>::new(), 0u32);
        for (addr, l) in sorted.iter().skip(1) {
            let p = ids[&addr[..addr.len() - 1]];
            let id = b.add_child(p, *l);
            ids.insert(addr.clone(), id);
        }
        Ok(b.build().0)
    }

    pub fn planar(&self) -> &PlanarTree {
        &self.tree
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn edges(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn label(&self, v: u32) -> i64 {
        self.labels[v as usize]
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn root_label(&self) -> i64 {
        self.labels[0]
    }

    pub fn min_label(&self) -> i64 {
        *self.labels.iter().min().unwrap()
    }

    pub fn max_label(&self) -> i64 {
        *self.labels.iter().max().unwrap()
    }

    pub fn parent(&self, v: u32) -> Option<u32> {
        self.tree.parent(v)
    }

    pub fn children(&self, v: u32) -> Children<'_> {
        self.tree.children(v)
    }

    pub fn shifted(&self, k: i64) -> Self {
        LabeledTree { tree: self.tree.clone(), labels: self.labels.iter().map(|l| l + k).collect() }
    }

    /// Checks the label constraint along every edge.
    pub fn validate(&self) -> Validity {
        for v in 1..self.len() as u32 {
            let p = self.tree.parent[v as usize];
            let (pl, l) = (self.labels[p as usize], self.labels[v as usize]);
            if (pl - l).abs() > 1 {
                return Validity::LabelStep { address: self.tree.address(v), parent_label: pl, label: l };
            }
        }
        Validity::Valid
    }

    pub fn addresses(&self) -> Vec<(Vec<u32>, i64)> {
        (0..self.len() as u32).map(|v| (self.tree.address(v), self.label(v))).collect()
    }

    /// Corner sequence; a single corner for the 0-edge tree.
    pub fn corners(&self) -> CornerSequence {
        let mut walk = self.tree.contour();
        if walk.len() > 1 {
            walk.pop();
        }
        let labels = walk.iter().map(|&v| self.labels[v as usize]).collect();
        CornerSequence { vertices: walk, labels }
    }

    /// Contour (depth) and label processes, both of length `2|t| + 1`.
    pub fn contour_label_processes(&self) -> (Vec<u32>, Vec<i64>) {
        let walk = self.tree.contour();
        let mut depth = vec![0u32; self.len()];
        for v in 1..self.len() {
            depth[v] = depth[self.tree.parent[v] as usize] + 1;
        }
        let contour = walk.iter().map(|&v| depth[v as usize]).collect();
        let labels = walk.iter().map(|&v| self.labels[v as usize]).collect();
        (contour, labels)
    }

    /// Index of the first corner of every vertex in the corner sequence.
    pub fn first_corner(&self) -> Vec<usize> {
        let cs = self.corners();
        let mut first = vec![usize::MAX; self.len()];
        for (i, &v) in cs.vertices.iter().enumerate() {
            if first[v as usize] == usize::MAX {
                first[v as usize] = i;
            }
        }
        first
    }

    /// Rerooted copy whose root corner is corner `c` of the current tree.
    /// Also returns the map from old to new vertex ids.
    pub fn reroot_at_corner(&self, c: usize) -> Result<(LabeledTree, Vec<u32>), TreeError> {
        let cs = self.corners();
        if c >= cs.len() {
            return Err(TreeError::Corner(c));
        }
        if self.len() == 1 {
            return Ok((self.clone(), vec![0]));
        }
        let n = cs.len();
        let start = cs.vertices[c];
        let mut b = TreeBuilder::new(self.label(start));
        let mut map = vec![NONE; self.len()];
        map[start as usize] = 0;
        // stack of old vertex ids along the current branch
        let mut stack = vec![start];
        for step in 1..=n {
            let v = cs.vertices[(c + step) % n];
            if stack.len() >= 2 && stack[stack.len() - 2] == v {
                stack.pop();
            } else {
                let top = *stack.last().unwrap();
                let id = b.add_child(map[top as usize], self.label(v));
                map[v as usize] = id;
                stack.push(v);
            }
        }
        let (t, renum) = b.build();
        let map = map.into_iter().map(|x| renum[x as usize]).collect();
        Ok((t, map))
    }

    /// Text form: `tree <root_label> <edges> (<body>)` where each child is a
    /// delta in `-`, `0`, `+` optionally followed by its own parenthesized
    /// children.
    pub fn to_text(&self) -> String {
        let mut s = format!("tree {} {} ", self.root_label(), self.edges());
        self.write_body(0, &mut s);
        s
    }

    fn write_body(&self, v: u32, s: &mut String) {
        s.push('(');
        let mut stack: Vec<(u32, bool)> = self.children(v).map(|c| (c, false)).collect::<Vec<_>>();
        stack.reverse();
        while let Some((u, closing)) = stack.pop() {
            if closing {
                s.push(')');
                continue;
            }
            let d = self.label(u) - self.label(self.parent(u).unwrap());
            s.push(match d {
                -1 => '-',
                0 => '0',
                _ => '+',
            });
            if self.tree.first_child[u as usize] != NONE {
                s.push('(');
                stack.push((u, true));
                let mut kids: Vec<_> = self.children(u).map(|c| (c, false)).collect();
                kids.reverse();
                stack.extend(kids);
            }
        }
        s.push(')');
    }

    pub fn from_text(line: &str) -> Result<Self, TreeError> {
        let err = |pos: usize, msg: &str| TreeError::Parse { pos, msg: msg.to_string() };
        let mut parts = line.trim_end().splitn(4, ' ');
        if parts.next() != Some("tree") {
            return Err(err(0, "expected `tree`"));
        }
        let root: i64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(5, "bad root label"))?;
        let edges: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(5, "bad edge count"))?;
        let body = parts.next().ok_or_else(|| err(line.len(), "missing body"))?;
        let offset = line.len() - line.trim_start().len() + line.trim().len() - body.len();
        let bytes = body.as_bytes();
        if bytes.first() != Some(&b'(') {
            return Err(err(offset, "body must start with `(`"));
        }
        let mut b = TreeBuilder::new(root);
        let mut stack = vec![0u32];
        let mut last: Option<u32> = None;
        let mut i = 1;
        while i < bytes.len() {
            let ch = bytes[i];
            match ch {
                b'-' | b'0' | b'+' => {
                    let p = *stack.last().ok_or_else(|| err(offset + i, "unbalanced"))?;
                    let d = match ch {
                        b'-' => -1,
                        b'0' => 0,
                        _ => 1,
                    };
                    let id = b.add_child(p, b.label(p) + d);
                    last = Some(id);
                }
                b'(' => {
                    let v = last.take().ok_or_else(|| err(offset + i, "`(` without a vertex"))?;
                    stack.push(v);
                }
                b')' => {
                    stack.pop().ok_or_else(|| err(offset + i, "unbalanced `)`"))?;
                    last = None;
                    if stack.is_empty() {
                        if i + 1 != bytes.len() {
                            return Err(err(offset + i + 1, "trailing characters"));
                        }
                        break;
                    }
                }
                _ => return Err(err(offset + i, "unexpected character")),
            }
            i += 1;
        }
        if !stack.is_empty() {
            return Err(err(offset + bytes.len(), "unterminated body"));
        }
        let (t, _) = b.build();
        if t.edges() != edges {
            return Err(TreeError::EdgeCount { declared: edges, actual: t.edges() });
        }
        Ok(t)
    }
}

impl fmt::Display for LabeledTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Vertex interval `[v, w]`: vertices having a corner in the intersection
/// of all cyclic corner intervals from a corner of `v` to a corner of `w`.
pub fn vertex_interval(t: &LabeledTree, v: u32, w: u32) -> Vec<u32> {
    let cs = t.corners();
    let n = cs.len();
    let cv: Vec<usize> = (0..n).filter(|&i| cs.vertices[i] == v).collect();
    let cw: Vec<usize> = (0..n).filter(|&i| cs.vertices[i] == w).collect();
    let mut keep = vec![true; n];
    for &i in &cv {
        for &j in &cw {
            let mut inside = vec![false; n];
            for k in corner_interval(n, i, j) {
                inside[k] = true;
            }
            for k in 0..n {
                keep[k] &= inside[k];
            }
        }
    }
    let mut out: Vec<u32> = (0..n).filter(|&k| keep[k]).map(|k| cs.vertices[k]).collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SpineVariant {
    ThetaInfinity,
    ThetaBar1,
    ThetaBar2,
    Rerooted,
    /// First half-plane tree with the irrelevant part above a last visit
    /// elided; spine labels may jump there.
    SubmapWindow,
}

/// Truncation of a one-spine tree at spine height `horizon`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpineTree {
    pub spine_labels: Vec<i64>,
    pub left: Vec<LabeledTree>,
    pub right: Vec<LabeledTree>,
    pub variant: SpineVariant,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpineError {
    #[error("root label of left subtree {0} does not match the spine")]
    Left(usize),
    #[error("root label of right subtree {0} does not match the spine")]
    Right(usize),
    #[error("spine labels jump by more than one at index {0}")]
    Step(usize),
    #[error("component lengths disagree")]
    Length,
}

/// A spine tree flattened into an ordinary finite tree, together with the
/// spine vertex ids and the two corner indices of the top spine vertex that
/// face the truncated continuation.
#[derive(Clone, Debug)]
pub struct FlatSpine {
    pub tree: LabeledTree,
    pub spine: Vec<u32>,
    /// Corner index (in `tree.corners()`) of the top spine vertex sitting
    /// where the spine would continue.
    pub gap_corner: usize,
}

impl SpineTree {
    pub fn compose(
        spine_labels: Vec<i64>,
        left: Vec<LabeledTree>,
        right: Vec<LabeledTree>,
        variant: SpineVariant,
    ) -> Result<Self, SpineError> {
        if left.len() != spine_labels.len() || right.len() != spine_labels.len() || spine_labels.is_empty() {
            return Err(SpineError::Length);
        }
        for i in 1..spine_labels.len() {
            if (spine_labels[i] - spine_labels[i - 1]).abs() > 1 {
                return Err(SpineError::Step(i));
            }
        }
        for (i, t) in left.iter().enumerate() {
            if t.root_label() != spine_labels[i] {
                return Err(SpineError::Left(i));
            }
        }
        for (i, t) in right.iter().enumerate() {
            if t.root_label() != spine_labels[i] {
                return Err(SpineError::Right(i));
            }
        }
        Ok(SpineTree { spine_labels, left, right, variant })
    }

    pub fn decompose(&self) -> (Vec<i64>, Vec<LabeledTree>, Vec<LabeledTree>) {
        (self.spine_labels.clone(), self.left.clone(), self.right.clone())
    }

    pub fn horizon(&self) -> usize {
        self.spine_labels.len() - 1
    }

    /// Children of each spine vertex are ordered as left subtree, spine
    /// child, right subtree.
    pub fn flatten(&self) -> FlatSpine {
        let mut b = TreeBuilder::new(self.spine_labels[0]);
        let mut spine_ids = vec![0u32];
        let h = self.horizon();
        for i in 0..=h {
            let v = spine_ids[i];
            b.graft_children(v, &self.left[i], 0);
            if i < h {
                let s = b.add_child(v, self.spine_labels[i + 1]);
                spine_ids.push(s);
            }
        }
        // right subtrees after the spine child, added bottom-up is fine since
        // each vertex's children keep insertion order
        for i in 0..=h {
            b.graft_children(spine_ids[i], &self.right[i], 0);
        }
        let (tree, map) = b.build();
        let spine: Vec<u32> = spine_ids.iter().map(|&v| map[v as usize]).collect();
        let top = *spine.last().unwrap();
        let cs = tree.corners();
        // the gap corner of the top vertex is the corner right after its
        // last left child, or its first corner when the left part is empty
        let n_left = self.left[h].edges_at_root();
        let mut seen = 0;
        let mut gap = usize::MAX;
        for (i, &v) in cs.vertices.iter().enumerate() {
            if v == top {
                if seen == n_left {
                    gap = i;
                    break;
                }
                seen += 1;
            }
        }
        if gap == usize::MAX {
            // 0-edge flattened tree
            gap = 0;
        }
        FlatSpine { tree, spine, gap_corner: gap }
    }
}

impl LabeledTree {
    /// Number of children of the root.
    pub fn edges_at_root(&self) -> usize {
        self.tree.child_count(0)
    }

    /// Subtree rooted at `v` as a standalone tree.
    pub fn subtree(&self, v: u32) -> LabeledTree {
        let mut b = TreeBuilder::new(self.label(v));
        let mut stack = vec![(v, 0u32)];
        while let Some((u, id)) = stack.pop() {
            let kids: Vec<u32> = self.children(u).collect();
            let mut ids = Vec::new();
            for &c in &kids {
                ids.push(b.add_child(id, self.label(c)));
            }
            for (c, i) in kids.into_iter().zip(ids).rev() {
                stack.push((c, i));
            }
        }
        b.build().0
    }

    /// Tree made of the root of `v` and the children of `v` in `range`
    /// (with all their descendants).
    pub fn fan(&self, v: u32, range: std::ops::Range<usize>) -> LabeledTree {
        let kids: Vec<u32> = self.children(v).collect();
        let mut b = TreeBuilder::new(self.label(v));
        for &c in &kids[range] {
            let sub = self.subtree(c);
            let id = b.add_child(0, sub.root_label());
            b.graft_children(id, &sub, 0);
        }
        b.build().0
    }
}
