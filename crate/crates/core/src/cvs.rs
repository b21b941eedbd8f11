//! The Cori-Vauquelin-Schaeffer construction and its variants: finite
//! pointed quadrangulations, truncated patches of the infinite versions,
//! quadrangulations with a geodesic boundary, half-plane gluing and the
//! embedded submap of the half-plane tree.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::tree::{CornerSequence, LabeledTree, SpineTree, SpineVariant, TreeBuilder};

/// Rooted, optionally pointed, planar map. Half-edge `2e` runs from
/// `edges[e].0` to `edges[e].1` and `2e + 1` the other way.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quadrangulation {
    pub labels: Vec<i64>,
    pub edges: Vec<(u32, u32)>,
    pub root: (u32, u32),
    /// Half-edge carrying the root, when the rotation system is known.
    pub root_half: Option<u32>,
    pub marked: Option<u32>,
    pub complete: Vec<bool>,
    /// Cyclic order of outgoing half-edges around each vertex.
    pub rotation: Option<Vec<Vec<u32>>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CvsError {
    #[error("root label must be 0, got {0}")]
    RootLabel(i64),
    #[error("window too small: {0}")]
    Insufficient(String),
    #[error("geodesic index ranges do not match: {0}")]
    RangeMismatch(String),
    #[error("submap successor leaves the expected vertex set at corner {0}")]
    Escape(usize),
    #[error("map parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Successor {
    Corner(usize),
    /// The distinguished vertex of a finite map.
    Sink,
    /// Vertex λ_i of the half-plane variant.
    Lambda(i64),
    /// Not decidable from the visible window.
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfiniteVariant {
    SMinus,
    S1,
    S2,
}

impl Quadrangulation {
    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn head(&self, h: u32) -> u32 {
        let (a, b) = self.edges[(h / 2) as usize];
        if h.is_multiple_of(2) {
            b
        } else {
            a
        }
    }

    pub fn tail(&self, h: u32) -> u32 {
        self.head(h ^ 1)
    }

    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.labels.len()];
        for &(a, b) in &self.edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        adj
    }

    /// Faces as cycles of half-edges. Requires a rotation system.
    pub fn faces(&self) -> Option<Vec<Vec<u32>>> {
        let rot = self.rotation.as_ref()?;
        let mut pos = vec![(0u32, 0usize); 2 * self.edges.len()];
        for (v, r) in rot.iter().enumerate() {
            for (i, &h) in r.iter().enumerate() {
                pos[h as usize] = (v as u32, i);
            }
        }
        let mut seen = vec![false; 2 * self.edges.len()];
        let mut faces = Vec::new();
        for start in 0..2 * self.edges.len() as u32 {
            if seen[start as usize] {
                continue;
            }
            let mut face = Vec::new();
            let mut h = start;
            while !seen[h as usize] {
                seen[h as usize] = true;
                face.push(h);
                let v = self.head(h) as usize;
                let (_, i) = pos[(h ^ 1) as usize];
                let r = &rot[v];
                h = r[(i + r.len() - 1) % r.len()];
            }
            faces.push(face);
        }
        Some(faces)
    }

    /// Faces whose vertices are all complete.
    pub fn complete_faces(&self) -> Option<Vec<Vec<u32>>> {
        let faces = self.faces()?;
        Some(
            faces
                .into_iter()
                .filter(|f| f.iter().all(|&h| self.complete[self.tail(h) as usize]))
                .collect(),
        )
    }

    /// Edge-list text: header, one edge per line, then labels.
    pub fn to_text(&self) -> String {
        let mut s = format!("quad {} {} root {} {}", self.labels.len(), self.edges.len(), self.root.0, self.root.1);
        if let Some(m) = self.marked {
            s.push_str(&format!(" marked {m}"));
        }
        s.push('\n');
        for &(a, b) in &self.edges {
            s.push_str(&format!("{a} {b}\n"));
        }
        s.push_str("labels:");
        for (v, l) in self.labels.iter().enumerate() {
            s.push_str(&format!(" {v}:{l}"));
        }
        s.push('\n');
        let inc: Vec<String> = (0..self.labels.len()).filter(|&v| !self.complete[v]).map(|v| v.to_string()).collect();
        if !inc.is_empty() {
            s.push_str(&format!("incomplete: {}\n", inc.join(" ")));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CvsError> {
        let err = |line: usize, msg: &str| CvsError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty input"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() < 6 || h[0] != "quad" || h[3] != "root" {
            return Err(err(1, "bad header"));
        }
        let num = |s: &str, line: usize| s.parse::<u32>().map_err(|_| err(line, "bad number"));
        let nv = num(h[1], 1)? as usize;
        let ne = num(h[2], 1)? as usize;
        let root = (num(h[4], 1)?, num(h[5], 1)?);
        let mut marked = None;
        let mut rest = &h[6..];
        if rest.len() >= 2 && rest[0] == "marked" {
            marked = Some(num(rest[1], 1)?);
            rest = &rest[2..];
        }
        if !rest.is_empty() && rest[0] != "center" {
            return Err(err(1, "trailing header fields"));
        }
        let mut edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (i, l) = lines.next().ok_or_else(|| err(0, "missing edge lines"))?;
            let mut it = l.split_whitespace();
            let a = num(it.next().ok_or_else(|| err(i + 1, "missing endpoint"))?, i + 1)?;
            let b = num(it.next().ok_or_else(|| err(i + 1, "missing endpoint"))?, i + 1)?;
            if a as usize >= nv || b as usize >= nv {
                return Err(err(i + 1, "vertex out of range"));
            }
            edges.push((a, b));
        }
        let (i, l) = lines.next().ok_or_else(|| err(0, "missing labels"))?;
        let body = l.strip_prefix("labels:").ok_or_else(|| err(i + 1, "expected labels:"))?;
        let mut labels = vec![0i64; nv];
        let mut count = 0;
        for item in body.split_whitespace() {
            let (v, lab) = item.split_once(':').ok_or_else(|| err(i + 1, "bad label item"))?;
            let v = num(v, i + 1)? as usize;
            if v >= nv {
                return Err(err(i + 1, "vertex out of range"));
            }
            labels[v] = lab.parse().map_err(|_| err(i + 1, "bad label"))?;
            count += 1;
        }
        if count != nv {
            return Err(err(i + 1, "label count mismatch"));
        }
        let mut complete = vec![true; nv];
        let mut next = lines.next();
        if let Some((i, l)) = next {
            if let Some(body) = l.strip_prefix("incomplete:") {
                for v in body.split_whitespace() {
                    let v = num(v, i + 1)? as usize;
                    if v >= nv {
                        return Err(err(i + 1, "vertex out of range"));
                    }
                    complete[v] = false;
                }
                next = lines.next();
            }
        }
        // ball exports end with a center annotation
        if let Some((i, l)) = next {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 4 || f[0] != "center" || f[2] != "radius" {
                return Err(err(i + 1, "unexpected line"));
            }
            num(f[1], i + 1)?;
            num(f[3], i + 1)?;
            next = lines.next();
        }
        if let Some((i, _)) = next {
            return Err(err(i + 1, "trailing lines"));
        }
        Ok(Quadrangulation { labels, edges, root, root_half: None, marked, complete, rotation: None })
    }
}

/// Parses several maps written one after another.
pub fn parse_maps(text: &str) -> Result<Vec<Quadrangulation>, CvsError> {
    let lines: Vec<&str> = text.lines().collect();
    let starts: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].starts_with("quad ")).collect();
    if starts.first().map_or(lines.iter().any(|l| !l.trim().is_empty()), |&s| lines[..s].iter().any(|l| !l.trim().is_empty())) {
        return Err(CvsError::Parse { line: 1, msg: "expected a `quad` header".into() });
    }
    let mut out = Vec::with_capacity(starts.len());
    for (k, &s) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(lines.len());
        let mut e = end;
        while e > s && lines[e - 1].trim().is_empty() {
            e -= 1;
        }
        let chunk = lines[s..e].join("\n");
        let q = Quadrangulation::from_text(&chunk).map_err(|err| match err {
            CvsError::Parse { line, msg } => CvsError::Parse { line: if line == 0 { 0 } else { line + s }, msg },
            other => other,
        })?;
        out.push(q);
    }
    Ok(out)
}

/// Cyclic successors on a finite corner sequence; `None` means no corner
/// carries the label one less.
pub fn cyclic_successors(labels: &[i64]) -> Vec<Option<usize>> {
    let n = labels.len();
    if n == 0 {
        return Vec::new();
    }
    let lo = *labels.iter().min().unwrap();
    let hi = *labels.iter().max().unwrap();
    let mut next = vec![usize::MAX; (hi - lo + 2) as usize];
    let mut out = vec![None; n];
    for idx in (0..2 * n).rev() {
        let c = idx % n;
        if idx < n {
            let want = labels[c] - 1;
            if want >= lo {
                let p = next[(want - lo) as usize];
                if p != usize::MAX {
                    out[c] = Some(p % n);
                }
            }
        }
        next[(labels[c] - lo) as usize] = idx;
    }
    out
}

/// Successors on a linear window. Corners with no match in the window get
/// λ when every unseen later label is at least `floor`, and are otherwise
/// indeterminate.
pub fn window_successors(labels: &[i64], floor: Option<i64>) -> Vec<Successor> {
    let n = labels.len();
    if n == 0 {
        return Vec::new();
    }
    let lo = *labels.iter().min().unwrap();
    let hi = *labels.iter().max().unwrap();
    let mut next = vec![usize::MAX; (hi - lo + 2) as usize];
    let mut out = vec![Successor::Indeterminate; n];
    for c in (0..n).rev() {
        let want = labels[c] - 1;
        let found = if want >= lo { next[(want - lo) as usize] } else { usize::MAX };
        out[c] = if found != usize::MAX {
            Successor::Corner(found)
        } else {
            match floor {
                Some(f) if want < f => Successor::Lambda(want),
                _ => Successor::Indeterminate,
            }
        };
        next[(labels[c] - lo) as usize] = c;
    }
    out
}

/// Successor of corner `i` of a finite tree.
pub fn successor(cs: &CornerSequence, i: usize) -> Successor {
    match cyclic_successors(&cs.labels)[i] {
        Some(j) => Successor::Corner(j),
        None => Successor::Sink,
    }
}

/// Arc target used by the map builder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    Corner(usize),
    Vertex(u32),
}

struct Built {
    edges: Vec<(u32, u32)>,
    rotation: Vec<Vec<u32>>,
    arc_of_corner: Vec<Option<u32>>,
}

/// Builds arcs and a rotation system from a tree contour. `succ[j]` is the
/// arc leaving corner `j`; `kept[j]` keeps the tree edge traversed between
/// corners `j` and `j + 1`. Extra vertices (sinks) get ids from
/// `tree_len` on; `extra_edges` are added between sink vertices.
fn corner_map(
    cs: &CornerSequence,
    tree_len: usize,
    n_vertices: usize,
    succ: &[Option<Target>],
    kept: &[bool],
    extra_edges: &[(u32, u32)],
) -> Built {
    let l = cs.len();
    let mut edges = Vec::new();
    let mut arc_of_corner = vec![None; l];
    // per corner: (sort key, half-edge)
    let mut at_corner: Vec<Vec<(usize, u32)>> = vec![Vec::new(); l];
    let mut at_sink: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n_vertices.saturating_sub(tree_len)];
    for j in 0..l {
        let Some(t) = succ[j] else { continue };
        let e = edges.len() as u32;
        let src = cs.vertices[j];
        match t {
            Target::Corner(q) => {
                edges.push((src, cs.vertices[q]));
                at_corner[j].push((2 * ((q + l - j) % l), 2 * e));
                at_corner[q].push((2 * ((j + l - q) % l), 2 * e + 1));
            }
            Target::Vertex(v) => {
                edges.push((src, v));
                at_corner[j].push((1, 2 * e));
                if (v as usize) >= tree_len {
                    at_sink[v as usize - tree_len].push((j, 2 * e + 1));
                }
            }
        }
        arc_of_corner[j] = Some(e);
    }
    // tree edges kept in the map, one id per tree edge
    let mut tree_edge: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    let mut arrival: Vec<Option<u32>> = vec![None; l];
    if l > 1 {
        for j in 0..l {
            if !kept[j] {
                continue;
            }
            let a = cs.vertices[j];
            let b = cs.vertices[(j + 1) % l];
            let key = (a.min(b), a.max(b));
            let e = *tree_edge.entry(key).or_insert_with(|| {
                edges.push(key);
                (edges.len() - 1) as u32
            });
            // half-edge leaving the arrival vertex b towards a
            let h = if edges[e as usize].0 == b { 2 * e } else { 2 * e + 1 };
            arrival[(j + 1) % l] = Some(h);
        }
    }
    let mut rotation: Vec<Vec<u32>> = vec![Vec::new(); n_vertices];
    for j in 0..l {
        let v = cs.vertices[j] as usize;
        if let Some(h) = arrival[j] {
            rotation[v].push(h);
        }
        let mut items = std::mem::take(&mut at_corner[j]);
        items.sort_unstable();
        rotation[v].extend(items.into_iter().rev().map(|x| x.1));
    }
    for (k, mut items) in at_sink.into_iter().enumerate() {
        items.sort_unstable();
        rotation[tree_len + k].extend(items.into_iter().rev().map(|x| x.1));
    }
    for &(a, b) in extra_edges {
        let e = edges.len() as u32;
        edges.push((a, b));
        rotation[a as usize].push(2 * e);
        rotation[b as usize].push(2 * e + 1);
    }
    Built { edges, rotation, arc_of_corner }
}

/// Finite construction for a tree with root label 0. Tree vertex `v` is
/// map vertex `v`; the distinguished vertex is the last one.
pub fn cvs_finite(t: &LabeledTree) -> Result<Quadrangulation, CvsError> {
    if t.root_label() != 0 {
        return Err(CvsError::RootLabel(t.root_label()));
    }
    let cs = t.corners();
    let n = t.len();
    let star = n as u32;
    let succ: Vec<Option<Target>> = cyclic_successors(&cs.labels)
        .into_iter()
        .map(|s| Some(s.map(Target::Corner).unwrap_or(Target::Vertex(star))))
        .collect();
    let built = corner_map(&cs, n, n + 1, &succ, &vec![false; cs.len()], &[]);
    let mut labels = t.labels().to_vec();
    labels.push(t.min_label() - 1);
    let e0 = built.arc_of_corner[0].unwrap();
    let root = (0, built.edges[e0 as usize].1);
    Ok(Quadrangulation {
        labels,
        edges: built.edges,
        root,
        root_half: Some(2 * e0),
        marked: Some(star),
        complete: vec![true; n + 1],
        rotation: Some(built.rotation),
    })
}

/// First corner with label `root - i` in clockwise order (`clockwise`) or in
/// the order c_0, c_{L-1}, c_{L-2}, ... otherwise, for i = 0, 1, ... down
/// to the minimum label. Returns corner indices.
pub fn tau_corners(cs: &CornerSequence, clockwise: bool) -> Vec<usize> {
    let l = cs.len();
    let root = cs.labels[0];
    let min = *cs.labels.iter().min().unwrap();
    let mut out = Vec::new();
    for i in 0..=(root - min) {
        let want = root - i;
        let found = if clockwise {
            (0..l).find(|&j| cs.labels[j] == want)
        } else {
            std::iter::once(0).chain((1..l).rev()).find(|&j| cs.labels[j] == want)
        };
        match found {
            Some(j) => out.push(j),
            None => break,
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeodesicKind {
    Tau,
    TauHat,
}

/// Vertex path of a distinguished geodesic in the map built from `t`. For
/// `Tau` the path ends at the distinguished vertex when the map has one.
pub fn extract_geodesics(quad: &Quadrangulation, t: &LabeledTree, which: GeodesicKind) -> Vec<u32> {
    let cs = t.corners();
    let corners = tau_corners(&cs, which == GeodesicKind::Tau);
    let mut path: Vec<u32> = corners.iter().map(|&j| cs.vertices[j]).collect();
    if which == GeodesicKind::Tau {
        if let Some(m) = quad.marked {
            path.push(m);
        }
    }
    path
}

/// A truncated patch of an infinite variant.
#[derive(Clone, Debug)]
pub struct Patch {
    pub quad: Quadrangulation,
    pub tree: LabeledTree,
    /// Corner index (in `tree.corners()`) of the left-exploration end.
    pub gap_corner: usize,
    /// λ level to map vertex.
    pub lambda: BTreeMap<i64, u32>,
    pub variant: InfiniteVariant,
    /// Lower bound assumed for unseen labels after the window (S2 only).
    pub floor: Option<i64>,
}

/// Window corners of a truncation that touch the unseen part of the tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frontier {
    /// Vertices with a corner whose successor lies beyond the window.
    pub unmatched: Vec<u32>,
    /// `(vertex, label)` of the first window corner with each label; an
    /// unseen corner labelled `label + 1` before the window attaches there.
    pub first: Vec<(u32, i64)>,
    pub min_label: i64,
}

impl Patch {
    pub fn frontier(&self) -> Frontier {
        let cs = self.tree.corners();
        let order = window_order(cs.len(), self.gap_corner);
        let labels: Vec<i64> = order.iter().map(|&i| cs.labels[i]).collect();
        let succ = window_successors(&labels, self.floor);
        let mut unmatched: Vec<u32> = order
            .iter()
            .zip(&succ)
            .filter(|(_, s)| **s == Successor::Indeterminate)
            .map(|(&c, _)| cs.vertices[c])
            .collect();
        unmatched.sort_unstable();
        unmatched.dedup();
        let mut seen = std::collections::HashSet::new();
        let first = order.iter().filter(|&&c| seen.insert(cs.labels[c])).map(|&c| (cs.vertices[c], cs.labels[c])).collect();
        Frontier { unmatched, first, min_label: labels.iter().copied().min().unwrap_or(0) }
    }
}

/// Labels of the flattened truncation in window order c_{-b}, ..., c_a.
fn window_order(len: usize, gap: usize) -> Vec<usize> {
    (gap + 1..len).chain(0..=gap).collect()
}

/// Truncated version of the construction for one-spine trees. Arcs are
/// drawn only where the successor is decided by the window.
pub fn cvs_infinite(st: &SpineTree, variant: InfiniteVariant) -> Result<Patch, CvsError> {
    cvs_infinite_with_floor(st, variant, None)
}

/// As [`cvs_infinite`], with a known lower bound on the unseen labels after
/// the window for the S2 variant (default: 2 for the second half-plane
/// tree, else the window minimum).
pub fn cvs_infinite_with_floor(st: &SpineTree, variant: InfiniteVariant, unseen_floor: Option<i64>) -> Result<Patch, CvsError> {
    let flat = st.flatten();
    let t = &flat.tree;
    let cs = t.corners();
    let l = cs.len();
    let order = window_order(l, flat.gap_corner);
    let lin_labels: Vec<i64> = order.iter().map(|&i| cs.labels[i]).collect();
    let floor = match variant {
        InfiniteVariant::S2 => Some(unseen_floor.unwrap_or(match st.variant {
            SpineVariant::ThetaBar2 => 2,
            _ => lin_labels.iter().copied().min().unwrap_or(0),
        })),
        _ => None,
    };
    let lin = window_successors(&lin_labels, floor);
    let n = t.len();
    let mut lambda: BTreeMap<i64, u32> = BTreeMap::new();
    for s in &lin {
        if let Successor::Lambda(k) = s {
            lambda.insert(*k, 0);
        }
    }
    if let (Some(&lo), Some(_)) = (lambda.keys().next(), floor) {
        let hi = floor.unwrap() - 1;
        for k in lo..=hi {
            lambda.insert(k, 0);
        }
    }
    for (i, v) in lambda.values_mut().enumerate() {
        *v = (n + i) as u32;
    }
    let mut succ = vec![None; l];
    let mut determinate = vec![true; l];
    for (p, s) in lin.iter().enumerate() {
        let c = order[p];
        succ[c] = match *s {
            Successor::Corner(q) => Some(Target::Corner(order[q])),
            Successor::Lambda(k) => Some(Target::Vertex(lambda[&k])),
            Successor::Sink => None,
            Successor::Indeterminate => {
                determinate[c] = false;
                None
            }
        };
    }
    // corner c_j is safe from unseen far-right arcs if an earlier window
    // corner carries the same label
    let mut certified = vec![false; l];
    let mut seen = std::collections::HashSet::new();
    for &c in &order {
        certified[c] = seen.contains(&cs.labels[c]);
        seen.insert(cs.labels[c]);
    }
    let top = *flat.spine.last().unwrap();
    let mut complete = vec![true; n + lambda.len()];
    for c in 0..l {
        let v = cs.vertices[c] as usize;
        if !determinate[c] || !certified[c] {
            complete[v] = false;
        }
    }
    complete[top as usize] = false;
    for &v in lambda.values() {
        complete[v as usize] = false;
    }
    if !complete.iter().any(|&c| c) {
        return Err(CvsError::Insufficient("no complete vertex".into()));
    }
    let chain: Vec<(u32, u32)> = lambda.iter().zip(lambda.iter().skip(1)).map(|((_, &a), (_, &b))| (b, a)).collect();
    let built = corner_map(&cs, n, n + lambda.len(), &succ, &vec![false; l], &chain);
    let mut labels = t.labels().to_vec();
    labels.extend(lambda.keys().copied());
    let (root, root_half) = match built.arc_of_corner[0] {
        Some(e) => ((0, built.edges[e as usize].1), Some(2 * e)),
        None => ((0, 0), None),
    };
    Ok(Patch {
        quad: Quadrangulation {
            labels,
            edges: built.edges,
            root,
            root_half,
            marked: None,
            complete,
            rotation: Some(built.rotation),
        },
        tree: flat.tree.clone(),
        gap_corner: flat.gap_corner,
        lambda,
        variant,
        floor,
    })
}

#[derive(Clone, Debug)]
pub struct GeodesicBoundaryQuad {
    pub quad: Quadrangulation,
    /// Successor geodesic from the root corner, root to distinguished vertex.
    pub gamma: Vec<u32>,
    /// The added vertex line, root to distinguished vertex.
    pub gamma_tilde: Vec<u32>,
    pub delta: i64,
}

/// Tree with the vertex line appended as the last child of the root, plus
/// the map from corners of the extended tree back to its vertices.
struct LineTree {
    tree: LabeledTree,
    cs: CornerSequence,
    line: Vec<u32>,
    /// Root corner between the last original child and the line.
    excluded: usize,
}

fn with_line(t: &LabeledTree, delta: i64) -> LineTree {
    let mut b = TreeBuilder::new(t.root_label());
    b.graft_children(0, t, 0);
    let mut line = vec![0u32];
    let mut v = 0u32;
    for i in 1..=delta {
        v = b.add_child(v, -i);
        line.push(v);
    }
    let (tree, map) = b.build();
    let line: Vec<u32> = line.iter().map(|&x| map[x as usize]).collect();
    let cs = tree.corners();
    // the root corner right before descending into the line
    let excluded = (0..cs.len())
        .find(|&j| cs.vertices[j] == 0 && cs.vertices[(j + 1) % cs.len()] == line[1])
        .unwrap();
    LineTree { tree, cs, line, excluded }
}

fn assemble_boundary_quad(lt: &LineTree, succ: Vec<Option<Target>>, delta: i64) -> GeodesicBoundaryQuad {
    let cs = &lt.cs;
    let l = cs.len();
    let on_line: Vec<bool> = {
        let mut v = vec![false; lt.tree.len()];
        for &x in &lt.line[1..] {
            v[x as usize] = true;
        }
        v
    };
    let kept: Vec<bool> = (0..l)
        .map(|j| {
            let a = cs.vertices[j];
            let b = cs.vertices[(j + 1) % l];
            on_line[a as usize] || on_line[b as usize]
        })
        .collect();
    let n = lt.tree.len();
    let built = corner_map(cs, n, n, &succ, &kept, &[]);
    // a single-vertex tree leaves only the line edge at the root
    let h0 = built.arc_of_corner[0].map(|e| 2 * e).unwrap_or(built.rotation[0][0]);
    let mut gamma = vec![0u32];
    let mut j = 0usize;
    while let Some(Target::Corner(q)) = succ[j] {
        gamma.push(cs.vertices[q]);
        j = q;
    }
    let star = *lt.line.last().unwrap();
    let root = (0, if h0.is_multiple_of(2) { built.edges[(h0 / 2) as usize].1 } else { built.edges[(h0 / 2) as usize].0 });
    GeodesicBoundaryQuad {
        quad: Quadrangulation {
            labels: lt.tree.labels().to_vec(),
            edges: built.edges,
            root,
            root_half: Some(h0),
            marked: Some(star),
            complete: vec![true; n],
            rotation: Some(built.rotation),
        },
        gamma,
        gamma_tilde: lt.line.clone(),
        delta,
    }
}

/// Quadrangulation with two boundary geodesics: the successor geodesic of
/// the root corner and a line of δ - 1 added vertices ending at the
/// distinguished vertex, δ = 1 - min label.
pub fn build_geodesic_boundary_quad(t: &LabeledTree) -> Result<GeodesicBoundaryQuad, CvsError> {
    if t.root_label() != 0 {
        return Err(CvsError::RootLabel(t.root_label()));
    }
    let delta = 1 - t.min_label();
    let lt = with_line(t, delta);
    let cs = &lt.cs;
    let on_line = |v: u32| lt.line[1..].contains(&v);
    let cyc = cyclic_successors(&cs.labels);
    let succ: Vec<Option<Target>> = (0..cs.len())
        .map(|j| {
            if on_line(cs.vertices[j]) || j == lt.excluded {
                None
            } else {
                Some(Target::Corner(cyc[j].expect("the line reaches every lower label")))
            }
        })
        .collect();
    Ok(assemble_boundary_quad(&lt, succ, delta))
}

/// Embedded submap of a half-plane tree truncation (first variant) around
/// the last visit of label `n` by the spine. Arcs are computed in the
/// ambient window and transported to the line-extended subtree.
pub fn restrict_to_embedded_submap(st: &SpineTree, n: i64) -> Result<(GeodesicBoundaryQuad, LabeledTree), CvsError> {
    let flat = st.flatten();
    let t = &flat.tree;
    let cs = t.corners();
    let l = cs.len();
    let s_n = st
        .spine_labels
        .iter()
        .rposition(|&x| x == n)
        .ok_or_else(|| CvsError::Insufficient(format!("spine never visits {n}")))?;
    if s_n == st.horizon() {
        return Err(CvsError::Insufficient("last visit at the horizon".into()));
    }
    let top = flat.spine[s_n];
    let above = flat.spine[s_n + 1];
    // left gap: corner of `top` just before descending to `above`
    let lg = (0..l).find(|&j| cs.vertices[j] == top && cs.vertices[(j + 1) % l] == above).unwrap();
    let rg = (0..l).find(|&j| cs.vertices[j] == top && cs.vertices[(j + l - 1) % l] == above).unwrap();
    // the truncated subtree made of the spine up to s_n
    let sub = SpineTree::compose(
        st.spine_labels[..=s_n].to_vec(),
        st.left[..=s_n].to_vec(),
        st.right[..=s_n].to_vec(),
        SpineVariant::ThetaBar1,
    )
    .map_err(|e| CvsError::Insufficient(e.to_string()))?;
    let a_flat = sub.flatten();
    let g = a_flat.gap_corner;
    let (rerooted, _) = a_flat.tree.reroot_at_corner(g).unwrap();
    let theta = rerooted.shifted(-n);
    let delta = 1 - theta.min_label();
    let lt = with_line(&theta, delta);
    let m = a_flat.tree.corners().len();
    // ambient corner index of each subtree corner
    let amb = |i: usize| if i <= g { i } else { rg + (i - g) };
    // window order of the ambient corners: c_{-b}, ..., c_a
    let order = window_order(l, flat.gap_corner);
    let lin_labels: Vec<i64> = order.iter().map(|&c| cs.labels[c]).collect();
    let mut amb_succ = vec![None; l];
    for (p, s) in window_successors(&lin_labels, None).into_iter().enumerate() {
        if let Successor::Corner(q) = s {
            amb_succ[order[p]] = Some(order[q]);
        }
    }
    // right boundary corners: γ(i) for i = 0..=delta
    let mut gamma_r = vec![lg];
    for i in 1..=delta {
        let prev = *gamma_r.last().unwrap();
        let c = amb_succ[prev].ok_or_else(|| CvsError::Insufficient(format!("boundary label {}", n - i)))?;
        gamma_r.push(c);
    }
    // extended-tree corner of each ambient corner in the subtree
    let lcs = &lt.cs;
    let mut ext_of_amb: BTreeMap<usize, usize> = BTreeMap::new();
    // extended corners run c~_0 = g (right side), g+1, ..., m-1, 0, ..., g-1,
    // then the excluded root corner (left side), then the line
    for k in 0..m {
        let i = (g + k) % m;
        let a = if k == 0 { rg } else { amb(i) };
        ext_of_amb.insert(a, k);
    }
    ext_of_amb.insert(lg, lt.excluded);
    let first = lt.tree.first_corner();
    let line_first: Vec<usize> = lt.line.iter().map(|&v| first[v as usize]).collect();
    let mut succ = vec![None; lcs.len()];
    for (&a, &k) in &ext_of_amb {
        if a == lg {
            continue;
        }
        let q = amb_succ[a].ok_or(CvsError::Insufficient(format!("successor of corner {a}")))?;
        let target = if let Some(&kq) = ext_of_amb.get(&q) {
            kq
        } else if let Some(i) = gamma_r.iter().position(|&c| c == q) {
            line_first[i]
        } else {
            return Err(CvsError::Escape(a));
        };
        succ[k] = Some(Target::Corner(target));
    }
    Ok((assemble_boundary_quad(&lt, succ, delta), theta))
}

/// Result of gluing two patches.
#[derive(Clone, Debug)]
pub struct Glued {
    pub quad: Quadrangulation,
    /// Merged boundary vertices, label 0 first.
    pub seam: Vec<u32>,
    /// Vertex of the glued map for each vertex of the second patch. The
    /// first patch keeps its ids.
    pub second: Vec<u32>,
}

/// Gluing of a first-variant patch and a second-variant patch along their
/// boundary geodesics over labels `lo..=0`.
pub fn glue_half_planes(p1: &Patch, p2: &Patch) -> Result<(Quadrangulation, Vec<u32>), CvsError> {
    let g = glue_half_planes_mapped(p1, p2)?;
    Ok((g.quad, g.seam))
}

pub fn glue_half_planes_mapped(p1: &Patch, p2: &Patch) -> Result<Glued, CvsError> {
    glue_half_planes_upto(p1, p2, 0)
}

/// Gluing along levels down to the lowest common one and up to `up`. A
/// positive level n joins λ_n to the first window corner labelled n, which
/// is its boundary vertex when no unseen corner before the window carries
/// label n; the caller vouches for that.
pub fn glue_half_planes_upto(p1: &Patch, p2: &Patch, up: i64) -> Result<Glued, CvsError> {
    let cs1 = p1.tree.corners();
    let lin: Vec<usize> = (0..=p1.gap_corner).collect();
    let mut seam1: BTreeMap<i64, u32> = BTreeMap::new();
    let mut i = 0i64;
    while let Some(&c) = lin.iter().find(|&&c| cs1.labels[c] == i) {
        seam1.insert(i, cs1.vertices[c]);
        i -= 1;
    }
    let order = window_order(cs1.len(), p1.gap_corner);
    for n in 1..=up {
        match order.iter().find(|&&c| cs1.labels[c] == n) {
            Some(&c) if p2.lambda.contains_key(&n) => {
                seam1.insert(n, cs1.vertices[c]);
            }
            _ => break,
        }
    }
    let up = seam1.keys().next_back().copied().unwrap_or(0);
    let lo = seam1.keys().next().copied().unwrap_or(0).max(p2.lambda.keys().next().copied().unwrap_or(1));
    if !seam1.contains_key(&0) || !p2.lambda.contains_key(&0) {
        return Err(CvsError::RangeMismatch("level 0 missing on one side".into()));
    }
    let q1 = &p1.quad;
    let q2 = &p2.quad;
    let n1 = q1.vertex_count() as u32;
    let mut map2 = vec![u32::MAX; q2.vertex_count()];
    let mut next = n1;
    let seam_of_2: BTreeMap<u32, i64> = p2.lambda.iter().filter(|(&k, _)| k >= lo && k <= up).map(|(&k, &v)| (v, k)).collect();
    for v in 0..q2.vertex_count() as u32 {
        if let Some(k) = seam_of_2.get(&v) {
            map2[v as usize] = seam1[k];
        } else {
            map2[v as usize] = next;
            next += 1;
        }
    }
    let total = next as usize;
    let mut labels = q1.labels.clone();
    labels.resize(total, 0);
    let mut complete = q1.complete.clone();
    complete.resize(total, true);
    for v in 0..q2.vertex_count() {
        let m = map2[v] as usize;
        if m >= n1 as usize {
            labels[m] = q2.labels[v];
            complete[m] = q2.complete[v];
        } else {
            complete[m] = false;
        }
    }
    let mut edges = q1.edges.clone();
    let off = q1.edges.len() as u32;
    edges.extend(q2.edges.iter().map(|&(a, b)| (map2[a as usize], map2[b as usize])));
    let mut rotation = vec![Vec::new(); total];
    if let (Some(r1), Some(r2)) = (&q1.rotation, &q2.rotation) {
        for (v, r) in r1.iter().enumerate() {
            rotation[v].extend(r.iter().copied());
        }
        for (v, r) in r2.iter().enumerate() {
            rotation[map2[v] as usize].extend(r.iter().map(|h| h + 2 * off));
        }
    }
    let seam: Vec<u32> = (lo..=up).rev().map(|k| seam1[&k]).collect();
    let root_v = seam1[&0];
    let root_half = rotation[root_v as usize].first().copied();
    let root = match root_half {
        Some(h) => {
            let (a, b) = edges[(h / 2) as usize];
            if h % 2 == 0 {
                (a, b)
            } else {
                (b, a)
            }
        }
        None => (root_v, root_v),
    };
    Ok(Glued {
        quad: Quadrangulation { labels, edges, root, root_half, marked: None, complete, rotation: Some(rotation) },
        seam,
        second: map2,
    })
}
