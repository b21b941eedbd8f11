//! Samplers for the random labeled trees: plain and conditioned
//! Galton-Watson trees, the path-and-forest constructions of the
//! conditioned tree and its rerooting, and truncations of the infinite
//! one-spine trees.

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chains::{self, h_f64, no_return, w, w_f64, Q};
use crate::law::rho_mass;
use crate::tree::{LabeledTree, SpineError, SpineTree, SpineVariant, TreeBuilder};

/// Stream `replicate` of the generator seeded by `seed`.
pub fn rng_for(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerBudget {
    /// Total edges a single output may have.
    pub max_tree_edges: usize,
    pub max_rejections: usize,
    /// Spine truncation depth for infinite trees.
    pub horizon: usize,
    /// Allowed error of each last-visit truncation.
    pub epsilon_tail: f64,
    /// Abort as soon as a label below this value appears.
    pub label_floor: Option<i64>,
    /// Vertices explored outside the kept part of a window sampler.
    pub max_window_edges: usize,
}

impl Default for SamplerBudget {
    fn default() -> Self {
        SamplerBudget {
            max_tree_edges: 4_000_000,
            max_rejections: 1_000_000,
            horizon: 64,
            epsilon_tail: 1e-6,
            label_floor: None,
            max_window_edges: 1_000_000,
        }
    }
}

impl SamplerBudget {
    pub fn with_edges(max_tree_edges: usize) -> Self {
        SamplerBudget { max_tree_edges, ..Default::default() }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("{component}: edge budget of {edges} exceeded")]
    Budget { component: &'static str, edges: usize },
    #[error("{component}: gave up after {attempts} attempts (acceptance rate {acceptance_rate:.4})")]
    Rejections { component: &'static str, attempts: usize, acceptance_rate: f64 },
    #[error("{component}: label below the requested floor")]
    BelowFloor { component: &'static str },
    #[error("{component}: target not found by spine depth {depth}")]
    Horizon { component: &'static str, depth: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Spine(#[from] SpineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Rho,
    RhoPlus,
    RhoMinus,
    /// Three paths and six forests glued together.
    TriPath,
    /// Spine from the last-visit chain.
    SpineLastVisit,
    Reroot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mark {
    pub name: &'static str,
    pub corner: usize,
}

#[derive(Clone, Debug)]
pub struct MarkedTree {
    pub tree: LabeledTree,
    pub marks: Vec<Mark>,
    pub origin: Origin,
    /// Label paths used by the construction, by name.
    pub paths: Vec<(&'static str, Vec<i64>)>,
    /// Vertex carrying the truncated infinite continuation, if any, with
    /// the corner through which it leaves.
    pub stub: Option<(u32, usize)>,
}

impl MarkedTree {
    pub fn mark(&self, name: &str) -> Option<usize> {
        self.marks.iter().find(|m| m.name == name).map(|m| m.corner)
    }

    pub fn path(&self, name: &str) -> Option<&[i64]> {
        self.paths.iter().find(|p| p.0 == name).map(|p| p.1.as_slice())
    }
}

/// Incremental tree growth with budget and floor checks.
struct Grower<'a, R: Rng> {
    b: TreeBuilder,
    rng: &'a mut R,
    cap: usize,
    floor: Option<i64>,
}

fn geometric<R: Rng>(rng: &mut R, success: f64) -> usize {
    let mut k = 0;
    while rng.gen::<f64>() < success {
        k += 1;
    }
    k
}

impl<'a, R: Rng> Grower<'a, R> {
    fn new(root: i64, rng: &'a mut R, budget: &SamplerBudget) -> Self {
        Grower { b: TreeBuilder::new(root), rng, cap: budget.max_tree_edges, floor: budget.label_floor }
    }

    fn add(&mut self, parent: u32, label: i64, component: &'static str) -> Result<u32, SampleError> {
        if self.b.len() > self.cap {
            return Err(SampleError::Budget { component, edges: self.cap });
        }
        if let Some(fl) = self.floor {
            if label < fl {
                return Err(SampleError::BelowFloor { component });
            }
        }
        Ok(self.b.add_child(parent, label))
    }

    /// Children of `v` drawn as a ρ tree rooted at `v`.
    fn rho(&mut self, v: u32, component: &'static str) -> Result<(), SampleError> {
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            let k = geometric(self.rng, 0.5);
            let lu = self.b.label(u);
            for _ in 0..k {
                let d = self.rng.gen_range(-1..=1);
                let c = self.add(u, lu + d, component)?;
                stack.push(c);
            }
        }
        Ok(())
    }

    /// Children of `v` drawn as a ρ⁺ tree rooted at `v`, with labels
    /// lowered by `offset` before applying the law.
    fn rho_plus(&mut self, v: u32, offset: i64, component: &'static str) -> Result<(), SampleError> {
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            let x = self.b.label(u) - offset;
            let ws = [w_f64(x - 1), w_f64(x), w_f64(x + 1)];
            let total: f64 = ws.iter().sum();
            let k = geometric(self.rng, total / 6.0);
            for _ in 0..k {
                let r = self.rng.gen::<f64>() * total;
                let d = if r < ws[0] {
                    -1
                } else if r < ws[0] + ws[1] {
                    0
                } else {
                    1
                };
                let c = self.add(u, x + d + offset, component)?;
                stack.push(c);
            }
        }
        Ok(())
    }

    /// Children of `v` drawn as a ρ tree in which every subtree that never
    /// meets `[lo, hi]` is cut down to its root.
    fn rho_banded(&mut self, v: u32, lo: i64, hi: i64, component: &'static str) -> Result<(), SampleError> {
        // probability that a ρ tree rooted at `y` meets the band
        let meets = |y: i64| {
            let gap = if y > hi { y - hi } else { lo - y };
            if gap <= 0 {
                1.0
            } else {
                1.0 - w_f64(gap)
            }
        };
        let mut stack = vec![(v, false)];
        let mut labels = Vec::new();
        let mut hits = Vec::new();
        while let Some((u, conditioned)) = stack.pop() {
            let y = self.b.label(u);
            let inside = (lo..=hi).contains(&y);
            if !inside && !conditioned && self.rng.gen::<f64>() >= meets(y) {
                continue;
            }
            // outside the band, draw the offspring conditioned on some
            // child subtree meeting it
            loop {
                labels.clear();
                hits.clear();
                for _ in 0..geometric(self.rng, 0.5) {
                    let c = y + self.rng.gen_range(-1..=1);
                    labels.push(c);
                    hits.push(inside || self.rng.gen::<f64>() < meets(c));
                }
                if inside || hits.iter().any(|&h| h) {
                    break;
                }
            }
            for i in 0..labels.len() {
                let c = self.add(u, labels[i], component)?;
                if inside {
                    stack.push((c, false));
                } else if hits[i] {
                    stack.push((c, true));
                }
            }
        }
        Ok(())
    }

    fn edges(&self) -> usize {
        self.b.len() - 1
    }
}

/// Smallest level L > k with h(k)/h(L) <= eps.
pub fn certified_level(k: i64, eps: f64) -> i64 {
    let hk = h_f64(k);
    let mut l = k + 1;
    while hk / h_f64(l) > eps {
        l += 1;
    }
    l
}

/// X from 0 up to its last visit of `target`, detected by running until a
/// certified level is reached.
pub fn x_path_last_visit<R: Rng>(target: i64, eps: f64, rng: &mut R) -> Vec<i64> {
    if target == 0 {
        return vec![0];
    }
    let level = certified_level(target, eps);
    let mut path = vec![0i64];
    let mut last = 0usize;
    let mut x = 0;
    while x < level {
        x = chains::step_x(x, rng);
        path.push(x);
        if x == target {
            last = path.len() - 1;
        }
    }
    path.truncate(last + 1);
    path
}

pub fn sample_rho<R: Rng>(x: i64, rng: &mut R, budget: &SamplerBudget) -> Result<LabeledTree, SampleError> {
    let mut g = Grower::new(x, rng, budget);
    g.rho(0, "rho")?;
    Ok(g.b.build().0)
}

/// ρ(x) with every subtree that never meets `[lo, hi]` cut down to its
/// root. Corners labelled inside the band keep their relative order, so
/// successor arcs between band labels are those of the full tree.
pub fn sample_rho_banded<R: Rng>(x: i64, lo: i64, hi: i64, rng: &mut R, budget: &SamplerBudget) -> Result<LabeledTree, SampleError> {
    let mut g = Grower::new(x, rng, budget);
    g.rho_banded(0, lo, hi, "rho_banded")?;
    Ok(g.b.build().0)
}

/// ρ⁺(x) cut down as in [`sample_rho_banded`], by rejection on positivity;
/// needs `lo <= 1`, so that a removed subtree below the band is never
/// positive.
pub fn sample_rho_plus_banded<R: Rng>(x: i64, lo: i64, hi: i64, rng: &mut R, budget: &SamplerBudget) -> Result<LabeledTree, SampleError> {
    if x < 1 || lo > 1 {
        return Err(SampleError::Parameter(format!("rho_plus_banded needs x >= 1 and lo <= 1, got x = {x}, lo = {lo}")));
    }
    for _ in 0..budget.max_rejections {
        let t = sample_rho_banded(x, lo, hi, rng, budget)?;
        if t.min_label() >= 1 {
            return Ok(t);
        }
    }
    Err(SampleError::Rejections { component: "rho_plus_banded", attempts: budget.max_rejections, acceptance_rate: 0.0 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RejectionStats {
    pub attempts: usize,
}

impl RejectionStats {
    pub fn acceptance_rate(&self) -> f64 {
        1.0 / self.attempts as f64
    }
}

/// ρ(x) conditioned on all labels being positive, by rejection.
pub fn sample_rho_plus<R: Rng>(
    x: i64,
    rng: &mut R,
    budget: &SamplerBudget,
) -> Result<(LabeledTree, RejectionStats), SampleError> {
    if x < 1 {
        return Err(SampleError::Parameter(format!("rho_plus needs x >= 1, got {x}")));
    }
    let mut b = budget.clone();
    b.label_floor = Some(1);
    for attempt in 1..=budget.max_rejections {
        match sample_rho(x, rng, &b) {
            Ok(t) => return Ok((t, RejectionStats { attempts: attempt })),
            Err(SampleError::BelowFloor { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SampleError::Rejections { component: "rho_plus", attempts: budget.max_rejections, acceptance_rate: 0.0 })
}

/// ρ(x) conditioned on some label being non-positive, by rejection.
pub fn sample_rho_minus<R: Rng>(
    x: i64,
    rng: &mut R,
    budget: &SamplerBudget,
) -> Result<(LabeledTree, RejectionStats), SampleError> {
    for attempt in 1..=budget.max_rejections {
        let t = sample_rho(x, rng, budget)?;
        if t.min_label() <= 0 {
            return Ok((t, RejectionStats { attempts: attempt }));
        }
    }
    Err(SampleError::Rejections {
        component: "rho_minus",
        attempts: budget.max_rejections,
        acceptance_rate: 0.0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Truncated {
    Small(LabeledTree),
    /// More than the requested number of edges.
    Large,
    /// Edge budget hit before the outcome was known.
    Censored,
}

/// ρ⁻(x) restricted to trees with at most `max_edges` edges. Growth stops
/// as soon as the tree is accepted and already too large.
pub fn sample_rho_minus_truncated<R: Rng>(
    x: i64,
    max_edges: usize,
    rng: &mut R,
    budget: &SamplerBudget,
) -> Result<Truncated, SampleError> {
    'attempt: for _ in 0..budget.max_rejections {
        let mut b = TreeBuilder::new(x);
        let mut accepted = x <= 0;
        let mut stack = vec![0u32];
        while let Some(u) = stack.pop() {
            let k = geometric(rng, 0.5);
            let lu = b.label(u);
            for _ in 0..k {
                if b.len() > budget.max_tree_edges {
                    return Ok(Truncated::Censored);
                }
                let l = lu + rng.gen_range(-1..=1);
                accepted |= l <= 0;
                stack.push(b.add_child(u, l));
            }
            if accepted && b.len() - 1 > max_edges {
                return Ok(Truncated::Large);
            }
        }
        if !accepted {
            continue 'attempt;
        }
        let t = b.build().0;
        return Ok(if t.edges() <= max_edges { Truncated::Small(t) } else { Truncated::Large });
    }
    Err(SampleError::Rejections { component: "rho_minus", attempts: budget.max_rejections, acceptance_rate: 0.0 })
}

/// Exact ρ⁺(x) sampler (no rejection).
pub fn sample_rho_plus_exact<R: Rng>(x: i64, rng: &mut R, budget: &SamplerBudget) -> Result<LabeledTree, SampleError> {
    if x < 1 {
        return Err(SampleError::Parameter(format!("rho_plus needs x >= 1, got {x}")));
    }
    let mut g = Grower::new(x, rng, budget);
    g.rho_plus(0, 0, "rho_plus")?;
    Ok(g.b.build().0)
}

/// Y from `k` with the sequential stopping rule: returns (y_0, ..., y_J).
pub fn y_path_stopped<R: Rng>(k: i64, rng: &mut R) -> Vec<i64> {
    let mut ys = vec![k];
    loop {
        let y = *ys.last().unwrap();
        if rng.gen::<f64>() >= w_f64(y - 1) {
            return ys;
        }
        ys.push(chains::step_y(y, rng));
    }
}

fn last_corner_of(t: &LabeledTree, v: u32) -> usize {
    let cs = t.corners();
    (0..cs.len()).rev().find(|&i| cs.vertices[i] == v).unwrap()
}

/// The conditioned tree with root label `n` built from three label paths
/// and six forests. Marks `tau` (first corner with label 0) and `tau_hat`
/// (first counter-clockwise corner with label 1).
pub fn sample_theta_n<R: Rng>(n: i64, rng: &mut R, budget: &SamplerBudget) -> Result<MarkedTree, SampleError> {
    if n < 1 {
        return Err(SampleError::Parameter(format!("theta_n needs n >= 1, got {n}")));
    }
    let ys = y_path_stopped(n, rng);
    let top = *ys.last().unwrap();
    let xs = x_path_last_visit(top, budget.epsilon_tail, rng);
    let xh: Vec<i64> = x_path_last_visit(top - 1, budget.epsilon_tail, rng).into_iter().map(|v| v + 1).collect();
    let (jn, xn, m) = (ys.len() - 1, xs.len() - 1, xh.len() - 1);
    if jn + xn + m > budget.max_tree_edges {
        return Err(SampleError::Budget { component: "paths", edges: budget.max_tree_edges });
    }
    let mut g = Grower::new(n, rng, budget);
    let mut v = 0u32;
    for i in 0..jn {
        g.rho_plus(v, 0, "y-left")?;
        let next = g.add(v, ys[i + 1], "y-path")?;
        g.rho_plus(v, 1, "y-right")?;
        v = next;
    }
    let branch = v;
    g.rho_plus(branch, 0, "branch-left")?;
    // X path from the branch vertex down to tau
    let mut u = g.add(branch, xs[xn - 1], "x-path")?;
    g.rho(branch, "branch-middle")?;
    let mut hat = branch;
    if m >= 1 {
        hat = g.add(branch, xh[m - 1], "xhat-path")?;
        g.rho_plus(branch, 1, "branch-right")?;
    }
    for i in (1..xn).rev() {
        g.rho_plus(u, 0, "x-left")?;
        let next = g.add(u, xs[i - 1], "x-path")?;
        g.rho(u, "x-right")?;
        u = next;
    }
    g.rho(u, "tau")?;
    let tau_v = u;
    if m >= 1 {
        for i in (1..m).rev() {
            g.rho(hat, "xhat-left")?;
            let next = g.add(hat, xh[i - 1], "xhat-path")?;
            g.rho_plus(hat, 1, "xhat-right")?;
            hat = next;
        }
        g.rho(hat, "tau-hat")?;
    }
    let (tree, map) = g.b.build();
    let tau_v = map[tau_v as usize];
    let hat_v = map[hat as usize];
    let tau = tree.first_corner()[tau_v as usize];
    let tau_hat = if hat_v == 0 { 0 } else { last_corner_of(&tree, hat_v) };
    Ok(MarkedTree {
        tree,
        marks: vec![Mark { name: "tau", corner: tau }, Mark { name: "tau_hat", corner: tau_hat }],
        origin: Origin::TriPath,
        paths: vec![("y", ys), ("x", xs), ("xhat", xh)],
        stub: None,
    })
}

/// Rooted at the bottom of a spine following X from 0 to its last visit of
/// `k`; the spine top carries the `top` mark on its gap corner.
pub fn sample_t_k<R: Rng>(k: i64, rng: &mut R, budget: &SamplerBudget) -> Result<MarkedTree, SampleError> {
    if k < 1 {
        return Err(SampleError::Parameter(format!("T_k needs k >= 1, got {k}")));
    }
    let xs = x_path_last_visit(k, budget.epsilon_tail, rng);
    if xs.len() - 1 > budget.max_tree_edges {
        return Err(SampleError::Budget { component: "spine", edges: budget.max_tree_edges });
    }
    let mut g = Grower::new(0, rng, budget);
    let mut v = 0u32;
    let s = xs.len() - 1;
    let mut left_at_top = 0;
    for i in 0..=s {
        g.rho(v, "left")?;
        if i == s {
            left_at_top = g.b.child_count(v);
            break;
        }
        let next = g.add(v, xs[i + 1], "spine")?;
        if i >= 1 {
            g.rho_plus(v, 0, "right")?;
        }
        v = next;
    }
    g.rho_plus(v, 0, "right")?;
    let (tree, map) = g.b.build();
    let top = map[v as usize];
    let gap = nth_corner_of(&tree, top, left_at_top);
    Ok(MarkedTree {
        tree,
        marks: vec![Mark { name: "root", corner: 0 }, Mark { name: "top", corner: gap }],
        origin: Origin::SpineLastVisit,
        paths: vec![("x", xs)],
        stub: None,
    })
}

/// Corner of `v` reached after returning from its `j`-th child (j = 0 is
/// the arrival corner).
pub fn nth_corner_of(t: &LabeledTree, v: u32, j: usize) -> usize {
    let cs = t.corners();
    cs.vertices.iter().enumerate().filter(|(_, &u)| u == v).nth(j).map(|(i, _)| i).unwrap_or(0)
}

fn grow_tree<R: Rng>(
    root: i64,
    plus: Option<i64>,
    rng: &mut R,
    budget: &SamplerBudget,
    used: &mut usize,
    component: &'static str,
) -> Result<LabeledTree, SampleError> {
    let mut b = budget.clone();
    b.max_tree_edges = budget.max_tree_edges.saturating_sub(*used);
    let mut g = Grower::new(root, rng, &b);
    match plus {
        None => g.rho(0, component)?,
        Some(off) => g.rho_plus(0, off, component)?,
    }
    *used += g.edges();
    Ok(g.b.build().0)
}

/// Θ∞ truncated at spine height `horizon`.
pub fn sample_theta_infinity<R: Rng>(horizon: usize, rng: &mut R, budget: &SamplerBudget) -> Result<SpineTree, SampleError> {
    let mut spine = vec![0i64];
    for _ in 0..horizon {
        let l = *spine.last().unwrap() + rng.gen_range(-1..=1);
        spine.push(l);
    }
    let mut used = horizon;
    let mut left = Vec::with_capacity(horizon + 1);
    let mut right = Vec::with_capacity(horizon + 1);
    for &l in &spine {
        left.push(grow_tree(l, None, rng, budget, &mut used, "left")?);
        right.push(grow_tree(l, None, rng, budget, &mut used, "right")?);
    }
    Ok(SpineTree::compose(spine, left, right, SpineVariant::ThetaInfinity)?)
}

/// The half-plane trees truncated at spine height `horizon`.
pub fn sample_theta_bar<R: Rng>(
    variant: u8,
    horizon: usize,
    rng: &mut R,
    budget: &SamplerBudget,
) -> Result<SpineTree, SampleError> {
    let mut spine = vec![0i64];
    for _ in 0..horizon {
        let x = chains::step_x(*spine.last().unwrap(), rng);
        spine.push(x);
    }
    let mut used = horizon;
    let mut left = Vec::with_capacity(horizon + 1);
    let mut right = Vec::with_capacity(horizon + 1);
    for (i, &x) in spine.iter().enumerate() {
        left.push(grow_tree(x, None, rng, budget, &mut used, "left")?);
        if i == 0 {
            right.push(LabeledTree::single(0));
        } else {
            right.push(grow_tree(x, Some(0), rng, budget, &mut used, "right")?);
        }
    }
    match variant {
        1 => Ok(SpineTree::compose(spine, left, right, SpineVariant::ThetaBar1)?),
        2 => {
            let spine = spine.iter().map(|x| x + 1).collect();
            let l2 = right.iter().map(|t| t.shifted(1)).collect();
            let r2 = left.iter().map(|t| t.shifted(1)).collect();
            Ok(SpineTree::compose(spine, l2, r2, SpineVariant::ThetaBar2)?)
        }
        _ => Err(SampleError::Parameter(format!("variant must be 1 or 2, got {variant}"))),
    }
}

/// Θ∞ rerooted at the first left-exploration corner with label -n, labels
/// shifted by +n. The spine is continued `budget.horizon` steps beyond the
/// spine vertex where that corner was found; the top spine vertex is the
/// stub.
pub fn sample_theta_infinity_rerooted<R: Rng>(
    n: i64,
    rng: &mut R,
    budget: &SamplerBudget,
) -> Result<MarkedTree, SampleError> {
    if n < 1 {
        return Err(SampleError::Parameter(format!("n must be >= 1, got {n}")));
    }
    let mut spine = vec![0i64];
    let mut left: Vec<LabeledTree> = Vec::new();
    let mut used = 0usize;
    // grow the left side lazily until a label -n shows up
    let found_at;
    loop {
        let i = spine.len() - 1;
        let t = grow_tree(spine[i], None, rng, budget, &mut used, "left")?;
        let hit = t.min_label() <= -n;
        left.push(t);
        if hit {
            found_at = i;
            break;
        }
        if used >= budget.max_tree_edges {
            return Err(SampleError::Horizon { component: "theta_inf_rerooted", depth: i });
        }
        let l = spine[i] + rng.gen_range(-1..=1);
        spine.push(l);
        used += 1;
    }
    let top_index = found_at + budget.horizon;
    while spine.len() <= top_index {
        let l = *spine.last().unwrap() + rng.gen_range(-1..=1);
        spine.push(l);
        used += 1;
    }
    for i in left.len()..spine.len() {
        let t = grow_tree(spine[i], None, rng, budget, &mut used, "left")?;
        left.push(t);
    }
    let mut right = Vec::with_capacity(spine.len());
    for &l in &spine {
        right.push(grow_tree(l, None, rng, budget, &mut used, "right")?);
    }
    let st = SpineTree::compose(spine.clone(), left, right, SpineVariant::Rerooted)?;
    let flat = st.flatten();
    let cs = flat.tree.corners();
    let j = (0..=flat.gap_corner).find(|&i| cs.labels[i] == -n).expect("label -n lies in the left exploration");
    let (rerooted, map) = flat.tree.reroot_at_corner(j).expect("valid corner");
    let len = cs.len();
    let tree = rerooted.shifted(n);
    let stub_v = map[*flat.spine.last().unwrap() as usize];
    let stub_c = (flat.gap_corner + len - j) % len;
    let old_root = map[0];
    let old_root_corner = (len - j) % len;
    Ok(MarkedTree {
        tree,
        marks: vec![Mark { name: "old_root", corner: old_root_corner }],
        origin: Origin::Reroot,
        paths: vec![("spine", spine), ("old_root_vertex", vec![old_root as i64])],
        stub: Some((stub_v, stub_c)),
    })
}

/// Probability that the three-path construction produces `t` (root label
/// n >= 1, some label <= 0). Used as an exact oracle against ρ⁻ masses.
pub fn theta_n_construction_probability(t: &LabeledTree) -> Q {
    let n = t.root_label();
    if n < 1 || t.min_label() > 0 {
        return Q::zero();
    }
    let cs = t.corners();
    let len = cs.len();
    let tau_c = (0..len).find(|&i| cs.labels[i] == 0).unwrap();
    let order = std::iter::once(0).chain((1..len).rev());
    let hat_c = order.into_iter().find(|&i| cs.labels[i] == 1);
    let Some(hat_c) = hat_c else { return Q::zero() };
    let tau = cs.vertices[tau_c];
    let hat = cs.vertices[hat_c];
    let anc = |v: u32| {
        let mut p = vec![v];
        let mut v = v;
        while let Some(u) = t.parent(v) {
            p.push(u);
            v = u;
        }
        p.reverse();
        p
    };
    let pt = anc(tau);
    let ph = anc(hat);
    let mut common = 0;
    while common < pt.len() && common < ph.len() && pt[common] == ph[common] {
        common += 1;
    }
    let yv = &pt[..common];
    let branch = *yv.last().unwrap();
    let ys: Vec<i64> = yv.iter().map(|&v| t.label(v)).collect();
    let top = *ys.last().unwrap();
    let kids = |v: u32| -> Vec<u32> { t.children(v).collect() };
    let pos = |v: u32, c: u32| kids(v).iter().position(|&x| x == c).unwrap();
    let rho_fan = |v: u32, r: std::ops::Range<usize>| rho_mass(t.fan(v, r).edges());
    let plus_fan = |v: u32, r: std::ops::Range<usize>, off: i64| -> Q {
        let f = t.fan(v, r).shifted(-off);
        let x = f.root_label();
        if x < 1 || f.min_label() < 1 {
            return Q::zero();
        }
        rho_mass(f.edges()) / w(x)
    };
    let mut p = Q::one();
    let jn = ys.len() - 1;
    for i in 0..jn {
        let (up, stay, down) = match chains::y_step(ys[i]) {
            Ok(s) => s,
            Err(_) => return Q::zero(),
        };
        p *= match ys[i + 1] - ys[i] {
            1 => up,
            0 => stay,
            _ => down,
        };
        p *= w(ys[i] - 1);
        let v = yv[i];
        let c = pos(v, yv[i + 1]);
        let nk = kids(v).len();
        p *= plus_fan(v, 0..c, 0);
        if ys[i] < 2 {
            return Q::zero();
        }
        p *= plus_fan(v, c + 1..nk, 1);
    }
    p *= Q::one() - w(top - 1);
    // X path from tau up to the branch vertex
    let xv: Vec<u32> = pt[common - 1..].iter().rev().copied().collect();
    let xs: Vec<i64> = xv.iter().map(|&v| t.label(v)).collect();
    if xs[1..].iter().any(|&x| x < 1) {
        return Q::zero();
    }
    for i in 0..xs.len() - 1 {
        let (up, stay, down) = chains::x_step(xs[i]);
        p *= match xs[i + 1] - xs[i] {
            1 => up,
            0 => stay,
            _ => down,
        };
    }
    p *= no_return(top);
    let hv: Vec<u32> = ph[common - 1..].iter().rev().copied().collect();
    let xh: Vec<i64> = hv.iter().map(|&v| t.label(v)).collect();
    let m = xh.len() - 1;
    if xh[1..].iter().any(|&x| x < 2) {
        return Q::zero();
    }
    for i in 0..m {
        let (up, stay, down) = chains::x_step(xh[i] - 1);
        p *= match xh[i + 1] - xh[i] {
            1 => up,
            0 => stay,
            _ => down,
        };
    }
    p *= no_return(top - 1);
    // forests on the X path
    p *= rho_mass(t.subtree(tau).edges());
    let xn = xs.len() - 1;
    for i in 1..xn {
        let v = xv[i];
        let c = pos(v, xv[i - 1]);
        let nk = kids(v).len();
        p *= plus_fan(v, 0..c, 0);
        p *= rho_fan(v, c + 1..nk);
    }
    let nk = kids(branch).len();
    let cx = pos(branch, xv[xn - 1]);
    p *= plus_fan(branch, 0..cx, 0);
    if m == 0 {
        p *= rho_fan(branch, cx + 1..nk);
    } else {
        let ch = pos(branch, hv[m - 1]);
        if ch < cx {
            return Q::zero();
        }
        p *= rho_fan(branch, cx + 1..ch);
        p *= plus_fan(branch, ch + 1..nk, 1);
        p *= rho_mass(t.subtree(hat).edges());
        for i in 1..m {
            let v = hv[i];
            let c = pos(v, hv[i - 1]);
            let nk = kids(v).len();
            p *= rho_fan(v, 0..c);
            p *= plus_fan(v, c + 1..nk, 1);
        }
    }
    p
}

/// Probability that the last-visit spine construction produces `t` with
/// its top gap corner at `gap`.
pub fn t_k_construction_probability(t: &LabeledTree, gap: usize) -> Q {
    if t.root_label() != 0 {
        return Q::zero();
    }
    let cs = t.corners();
    let top = cs.vertices[gap];
    let k = t.label(top);
    if k < 1 {
        return Q::zero();
    }
    let mut path = vec![top];
    let mut v = top;
    while let Some(u) = t.parent(v) {
        path.push(u);
        v = u;
    }
    path.reverse();
    let xs: Vec<i64> = path.iter().map(|&v| t.label(v)).collect();
    let mut p = Q::one();
    for i in 0..xs.len() - 1 {
        let (up, stay, down) = chains::x_step(xs[i]);
        p *= match xs[i + 1] - xs[i] {
            1 => up,
            0 => stay,
            _ => down,
        };
    }
    p *= no_return(k);
    let s = path.len() - 1;
    for i in 0..=s {
        let v = path[i];
        let kids: Vec<u32> = t.children(v).collect();
        let split = if i < s {
            kids.iter().position(|&c| c == path[i + 1]).unwrap()
        } else {
            // gap corner is the arrival corner or the return from child j
            cs.vertices[..gap].iter().filter(|&&u| u == top).count()
        };
        let (l_end, r_start) = if i < s { (split, split + 1) } else { (split, split) };
        p *= rho_mass(t.fan(v, 0..l_end).edges());
        let r = t.fan(v, r_start..kids.len());
        if i == 0 {
            if r.edges() > 0 {
                return Q::zero();
            }
        } else {
            if r.min_label() < 1 {
                return Q::zero();
            }
            p *= rho_mass(r.edges()) / w(xs[i]);
        }
    }
    p
}

/// Probability that a ρ tree rooted at `z` carries a label <= `y`.
fn reaches(z: i64, y: i64) -> f64 {
    1.0 - w_f64(z - y)
}

/// The spine chain X killed at each vertex whose left subtree reaches
/// `target`. Only the level of the killing vertex is sampled.
struct Climb {
    target: i64,
    /// escape[z]: from a surviving vertex at level z, probability of a
    /// surviving vertex at level z + 1 before any kill.
    escape: Vec<f64>,
}

impl Climb {
    fn new(target: i64) -> Self {
        Climb { target, escape: vec![0.0] }
    }

    fn kill(&self, z: i64) -> f64 {
        reaches(z, self.target)
    }

    fn escape(&mut self, z: i64) -> f64 {
        while self.escape.len() <= z as usize {
            let k = self.escape.len() as i64;
            let (up, stay, down) = chains::x_step_f64(k);
            let below = if k >= 2 { down * (1.0 - self.kill(k - 1)) * self.escape[(k - 1) as usize] } else { 0.0 };
            let e = up * (1.0 - self.kill(k + 1)) / (1.0 - stay * (1.0 - self.kill(k)) - below);
            self.escape.push(e);
        }
        self.escape[z as usize]
    }

    /// Level of the next killed vertex after a surviving vertex at `z`.
    fn next_kill<R: Rng>(&mut self, mut z: i64, max_level: usize, rng: &mut R) -> Option<i64> {
        loop {
            if z as usize > max_level {
                return None;
            }
            if rng.gen::<f64>() < self.escape(z) {
                z += 1;
                continue;
            }
            // a kill happens before level z + 1 is reached alive. Returns
            // to z do not change what follows, so only the round that
            // ends at z matters: a kill one level up, here or one level
            // down, or an excursion below z that itself ends in a kill.
            loop {
                let (up, stay, down) = chains::x_step_f64(z);
                let below = if down > 0.0 { down * (1.0 - self.kill(z - 1)) * (1.0 - self.escape(z - 1)) } else { 0.0 };
                let ways = [
                    (up * self.kill(z + 1), Some(z + 1)),
                    (stay * self.kill(z), Some(z)),
                    (if down > 0.0 { down * self.kill(z - 1) } else { 0.0 }, Some(z - 1)),
                    (below, None),
                ];
                let total: f64 = ways.iter().map(|w| w.0).sum();
                let mut r = rng.gen::<f64>() * total;
                let mut pick = ways[3].1;
                for w in ways {
                    if r < w.0 {
                        pick = w.1;
                        break;
                    }
                    r -= w.0;
                }
                match pick {
                    Some(level) => return Some(level),
                    None => z -= 1,
                }
            }
        }
    }
}

/// Truncation of the first half-plane tree just large enough to read off
/// the embedded submap around the last spine visit of `n`. The part below
/// that visit is complete. Above it, left subtrees are explored in contour
/// order only along the branches that lead to the next boundary label:
/// a branch whose labels all stay above the label being searched for
/// cannot carry an arc of the submap and is left out, and so are spine
/// vertices above the last visit whose left subtree has no such branch.
/// `budget.horizon` caps the spine level reached.
pub fn sample_theta_bar1_submap_window<R: Rng>(
    n: i64,
    rng: &mut R,
    budget: &SamplerBudget,
) -> Result<SpineTree, SampleError> {
    if n < 0 {
        return Err(SampleError::Parameter(format!("n must be >= 0, got {n}")));
    }
    let level = certified_level(n, budget.epsilon_tail);
    let mut spine = vec![0i64];
    let mut last = 0usize;
    while *spine.last().unwrap() < level {
        let x = chains::step_x(*spine.last().unwrap(), rng);
        spine.push(x);
        if x == n {
            last = spine.len() - 1;
        }
    }
    let mut used = last;
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut min = i64::MAX;
    for (i, &x) in spine.iter().enumerate().take(last + 1) {
        let l = grow_tree(x, None, rng, budget, &mut used, "left")?;
        let r = if i == 0 { LabeledTree::single(0) } else { grow_tree(x, Some(0), rng, budget, &mut used, "right")? };
        min = min.min(l.min_label()).min(r.min_label());
        left.push(l);
        right.push(r);
    }
    // labels n - 1 down to min - 1, each searched after the previous one
    let mut target = n - 1;
    let mut i = last + 1;
    let mut labels = spine[..=last].to_vec();
    let mut x = *spine.last().unwrap();
    let mut climb = Climb::new(target);
    while target >= min - 1 {
        if i < spine.len() {
            x = spine[i];
            i += 1;
            if rng.gen::<f64>() >= reaches(x, target) {
                continue;
            }
        } else {
            if climb.target != target {
                climb = Climb::new(target);
            }
            match climb.next_kill(x, budget.horizon, rng) {
                Some(z) => x = z,
                None => return Err(SampleError::Horizon { component: "submap-window", depth: budget.horizon }),
            }
        }
        let mut b = TreeBuilder::new(x);
        // (vertex, its subtree is known to reach the target)
        let mut stack = vec![(0u32, true)];
        while let Some(top) = stack.last_mut() {
            if target < min - 1 {
                break;
            }
            let u = top.0;
            let forced = std::mem::take(&mut top.1);
            let a = b.label(u);
            let hit: f64 = (-1..=1).map(|d| reaches(a + d, target)).sum::<f64>() / 3.0;
            // next relevant event in u's remaining children: a child whose
            // subtree reaches the target, or the end of the children
            if !forced && rng.gen::<f64>() >= hit / (1.0 + hit) {
                stack.pop();
                continue;
            }
            let ws = [reaches(a - 1, target), reaches(a, target), reaches(a + 1, target)];
            let r = rng.gen::<f64>() * (ws[0] + ws[1] + ws[2]);
            let d = if r < ws[0] {
                -1
            } else if r < ws[0] + ws[1] {
                0
            } else {
                1
            };
            if b.len() > budget.max_window_edges {
                return Err(SampleError::Budget { component: "submap-window", edges: budget.max_window_edges });
            }
            let c = b.add_child(u, a + d);
            let found = a + d == target;
            if found {
                target -= 1;
            }
            stack.push((c, !found));
        }
        labels.push(x);
        left.push(b.build().0);
        right.push(LabeledTree::single(x));
    }
    // one more spine vertex so the last visit is strictly below the top
    let x = if i < spine.len() { spine[i] } else { chains::step_x(x, rng) };
    labels.push(x);
    left.push(LabeledTree::single(x));
    right.push(LabeledTree::single(x));
    // spine steps above the last visit are not consecutive, so the label
    // step check of `compose` does not apply
    Ok(SpineTree { spine_labels: labels, left, right, variant: SpineVariant::SubmapWindow })
}
