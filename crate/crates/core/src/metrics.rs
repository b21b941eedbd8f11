//! Graph distances, balls, rooted-map codes and the local distance.

use std::collections::VecDeque;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::cvs::Quadrangulation;

pub const UNREACHED: u32 = u32::MAX;

pub fn bfs_distances(quad: &Quadrangulation, source: u32) -> Vec<u32> {
    bfs_adj(&quad.adjacency(), source)
}

fn bfs_adj(adj: &[Vec<u32>], source: u32) -> Vec<u32> {
    let mut dist = vec![UNREACHED; adj.len()];
    let mut queue = VecDeque::new();
    dist[source as usize] = 0;
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v as usize] {
            if dist[w as usize] == UNREACHED {
                dist[w as usize] = dist[v as usize] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Rooted-map code: a breadth-first exploration following rotations from
/// the root half-edge. Equal codes mean root-preserving isomorphic maps.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalCode(pub Vec<u32>);

impl CanonicalCode {
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|x| format!("{x:x}")).collect::<Vec<_>>().join(".")
    }
}

fn head_of(edges: &[(u32, u32)], h: u32) -> u32 {
    let (a, b) = edges[(h / 2) as usize];
    if h.is_multiple_of(2) {
        b
    } else {
        a
    }
}

fn code_from(edges: &[(u32, u32)], rot: &[Vec<u32>], start: Option<u32>, root_vertex: u32, marked: Option<u32>) -> CanonicalCode {
    let mut pos = vec![0usize; 2 * edges.len()];
    for r in rot {
        for (i, &h) in r.iter().enumerate() {
            pos[h as usize] = i;
        }
    }
    let mut num = vec![UNREACHED; rot.len()];
    let mut code = Vec::new();
    let mut queue = VecDeque::new();
    num[root_vertex as usize] = 0;
    let mut count = 1u32;
    queue.push_back((root_vertex, start));
    while let Some((v, entry)) = queue.pop_front() {
        let r = &rot[v as usize];
        code.push(r.len() as u32);
        let offset = entry.map(|h| pos[h as usize]).unwrap_or(0);
        for k in 0..r.len() {
            let h = r[(offset + k) % r.len()];
            let w = head_of(edges, h);
            if num[w as usize] == UNREACHED {
                num[w as usize] = count;
                count += 1;
                queue.push_back((w, Some(h ^ 1)));
            }
            code.push(num[w as usize]);
        }
    }
    code.push(count);
    code.push(marked.map(|m| num[m as usize]).unwrap_or(UNREACHED));
    CanonicalCode(code)
}

/// Code of the component of the root. `None` without a rotation system.
pub fn canonical_code(quad: &Quadrangulation) -> Option<CanonicalCode> {
    let rot = quad.rotation.as_ref()?;
    Some(code_from(&quad.edges, rot, quad.root_half, quad.root.0, quad.marked))
}

/// Rooted-isomorphism test; `None` when either map lacks a rotation system.
pub fn maps_equal(a: &Quadrangulation, b: &Quadrangulation) -> Option<bool> {
    Some(canonical_code(a)? == canonical_code(b)?)
}

/// The same map with vertices renamed by `perm` (old id to new id).
pub fn renumber(quad: &Quadrangulation, perm: &[u32]) -> Quadrangulation {
    let n = quad.vertex_count();
    let mut labels = vec![0; n];
    let mut complete = vec![true; n];
    for v in 0..n {
        labels[perm[v] as usize] = quad.labels[v];
        complete[perm[v] as usize] = quad.complete[v];
    }
    let rotation = quad.rotation.as_ref().map(|rot| {
        let mut r = vec![Vec::new(); n];
        for v in 0..n {
            r[perm[v] as usize] = rot[v].clone();
        }
        r
    });
    Quadrangulation {
        labels,
        edges: quad.edges.iter().map(|&(a, b)| (perm[a as usize], perm[b as usize])).collect(),
        root: (perm[quad.root.0 as usize], perm[quad.root.1 as usize]),
        root_half: quad.root_half,
        marked: quad.marked.map(|m| perm[m as usize]),
        complete,
        rotation,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BallView {
    pub center: u32,
    pub radius: u32,
    /// Original ids of the ball vertices; position is the id in `map`.
    pub vertices: Vec<u32>,
    pub map: Quadrangulation,
    /// Every vertex within the radius is complete.
    pub certified: bool,
    /// No vertex of the ambient map lies outside the ball.
    pub exhausts: bool,
}

pub fn ball(quad: &Quadrangulation, center: u32, r: u32) -> BallView {
    let dist = bfs_distances(quad, center);
    let vertices: Vec<u32> = (0..quad.vertex_count() as u32).filter(|&v| dist[v as usize] <= r).collect();
    let mut new_id = vec![UNREACHED; quad.vertex_count()];
    for (i, &v) in vertices.iter().enumerate() {
        new_id[v as usize] = i as u32;
    }
    let mut edge_id = vec![UNREACHED; quad.edge_count()];
    let mut edges = Vec::new();
    for (e, &(a, b)) in quad.edges.iter().enumerate() {
        if new_id[a as usize] != UNREACHED && new_id[b as usize] != UNREACHED {
            edge_id[e] = edges.len() as u32;
            edges.push((new_id[a as usize], new_id[b as usize]));
        }
    }
    let remap = |h: u32| -> Option<u32> {
        let e = edge_id[(h / 2) as usize];
        (e != UNREACHED).then(|| 2 * e + h % 2)
    };
    let rotation = quad.rotation.as_ref().map(|rot| {
        vertices.iter().map(|&v| rot[v as usize].iter().filter_map(|&h| remap(h)).collect()).collect::<Vec<Vec<u32>>>()
    });
    let root_half = if center == quad.root.0 { quad.root_half.and_then(remap) } else { None };
    let root = match root_half {
        Some(h) => {
            let (a, b) = edges[(h / 2) as usize];
            if h % 2 == 0 {
                (a, b)
            } else {
                (b, a)
            }
        }
        None => (new_id[center as usize], new_id[center as usize]),
    };
    let certified = vertices.iter().all(|&v| quad.complete[v as usize]);
    let exhausts = certified && vertices.len() == quad.vertex_count();
    let map = Quadrangulation {
        labels: vertices.iter().map(|&v| dist[v as usize] as i64).collect(),
        edges,
        root,
        root_half,
        marked: None,
        complete: vec![true; vertices.len()],
        rotation,
    };
    BallView { center, radius: r, vertices, map, certified, exhausts }
}

impl BallView {
    /// Code of the ball; for a center other than the root the minimum over
    /// all starting half-edges at the center.
    pub fn code(&self) -> Option<CanonicalCode> {
        let rot = self.map.rotation.as_ref()?;
        let c = self.map.root.0;
        if self.map.root_half.is_some() {
            return Some(code_from(&self.map.edges, rot, self.map.root_half, c, None));
        }
        let starts = &rot[c as usize];
        if starts.is_empty() {
            return Some(code_from(&self.map.edges, rot, None, c, None));
        }
        starts.iter().map(|&h| code_from(&self.map.edges, rot, Some(h), c, None)).min()
    }

    /// Ball export: map format with a center line.
    pub fn to_text(&self) -> String {
        let mut s = self.map.to_text();
        s.push_str(&format!("center {} radius {}\n", self.map.root.0, self.radius));
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BallCompare {
    Equal,
    Different,
    Unknown,
}

pub fn ball_equal(a: &Quadrangulation, ca: u32, b: &Quadrangulation, cb: u32, r: u32) -> BallCompare {
    let ba = ball(a, ca, r);
    let bb = ball(b, cb, r);
    if !ba.certified || !bb.certified {
        return BallCompare::Unknown;
    }
    match (ba.code(), bb.code()) {
        (Some(x), Some(y)) if x == y => BallCompare::Equal,
        (Some(_), Some(_)) => BallCompare::Different,
        _ => BallCompare::Unknown,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LocalDistance {
    Exact(BigRational),
    AtMost(BigRational),
    Unknown { equal_through: Option<u32> },
}

fn recip(k: u32) -> BigRational {
    BigRational::new(BigInt::from(1), BigInt::from(k))
}

/// D(m, m') = 1 / (1 + sup{r : balls of radius r agree}), explored up to
/// radius `cap`.
pub fn local_distance(a: &Quadrangulation, b: &Quadrangulation, cap: u32) -> LocalDistance {
    let mut equal_through = None;
    for r in 0..=cap {
        let ba = ball(a, a.root.0, r);
        let bb = ball(b, b.root.0, r);
        if !ba.certified || !bb.certified {
            return LocalDistance::Unknown { equal_through };
        }
        let (Some(x), Some(y)) = (ba.code(), bb.code()) else {
            return LocalDistance::Unknown { equal_through };
        };
        if x != y {
            return LocalDistance::Exact(match equal_through {
                None => recip(1),
                Some(s) => recip(1 + s),
            });
        }
        if ba.exhausts && bb.exhausts {
            return LocalDistance::Exact(BigRational::from_integer(0.into()));
        }
        equal_through = Some(r);
    }
    LocalDistance::AtMost(recip(1 + cap))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeodesicReport {
    pub adjacent: bool,
    pub endpoints: bool,
    pub pairwise: Option<bool>,
}

impl GeodesicReport {
    pub fn ok(&self) -> bool {
        self.adjacent && self.endpoints && self.pairwise.unwrap_or(true)
    }
}

pub fn verify_geodesic(quad: &Quadrangulation, path: &[u32], full: bool) -> GeodesicReport {
    if path.is_empty() {
        return GeodesicReport { adjacent: false, endpoints: false, pairwise: None };
    }
    let adj = quad.adjacency();
    let adjacent = path.windows(2).all(|w| adj[w[0] as usize].contains(&w[1]));
    let d0 = bfs_adj(&adj, path[0]);
    let endpoints = d0[*path.last().unwrap() as usize] == (path.len() - 1) as u32;
    let pairwise = full.then(|| {
        path.iter().enumerate().all(|(i, &p)| {
            let d = bfs_adj(&adj, p);
            path.iter().enumerate().all(|(j, &q)| d[q as usize] as usize == i.abs_diff(j))
        })
    });
    GeodesicReport { adjacent, endpoints, pairwise }
}

/// Face degrees, or `None` without a rotation system.
pub fn face_degrees(quad: &Quadrangulation) -> Option<Vec<usize>> {
    Some(quad.faces()?.iter().map(Vec::len).collect())
}

pub fn is_bipartite_by_parity(quad: &Quadrangulation) -> bool {
    quad.edges.iter().all(|&(a, b)| (quad.labels[a as usize] - quad.labels[b as usize]).rem_euclid(2) == 1)
}
