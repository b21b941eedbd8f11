//! The label chains X and Y: exact transition data, hitting probabilities,
//! Green functions with brute-force oracles, the kernel sum and the second
//! moment scaling check.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

pub type Q = BigRational;

fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("state 0 is absorbing for Y")]
    Absorbing,
    #[error("closed forms are only available for k >= 2 (got k = {0})")]
    UnsupportedTarget(i64),
    #[error("negative state {0}")]
    Negative(i64),
    #[error("brute-force solve did not reach tolerance {tol} by window {window}")]
    NoConvergence { tol: f64, window: usize },
}

/// Probability that a ρ(x) tree has only positive labels. Zero for x <= 0.
pub fn w(x: i64) -> Q {
    if x <= 0 {
        return Q::zero();
    }
    q(x * (x + 3), (x + 1) * (x + 2))
}

pub fn w_f64(x: i64) -> f64 {
    if x <= 0 {
        return 0.0;
    }
    let x = x as f64;
    x * (x + 3.0) / ((x + 1.0) * (x + 2.0))
}

pub fn f(x: i64) -> i64 {
    x * (x + 3) * (2 * x + 3)
}

pub fn h(x: i64) -> BigInt {
    BigInt::from(x) * (x + 1) * (x + 2) * (x + 3) * (2 * x + 3)
}

pub fn h_f64(x: i64) -> f64 {
    let x = x as f64;
    x * (x + 1.0) * (x + 2.0) * (x + 3.0) * (2.0 * x + 3.0)
}

pub fn g(n: i64) -> BigInt {
    BigInt::from(n) * (n + 4) * (5 * n * n + 20 * n + 17)
}

pub fn c_const(x: i64) -> Q {
    q(3, 14) * qi((x + 1) * (x + 2) - 6)
}

pub fn a_const(x: i64, k: i64) -> Q {
    qi(k + 2) + q((x - k - 1) * (x + k + 4), 2)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constants {
    pub w: Q,
    pub f: Q,
    pub h: Q,
    pub g: Q,
    pub c: Q,
}

pub fn model_constants(x: i64) -> Constants {
    Constants {
        w: w(x),
        f: qi(f(x)),
        h: Q::from_integer(h(x)),
        g: Q::from_integer(g(x)),
        c: c_const(x),
    }
}

/// (up, stay, down) probabilities of X at `x`.
pub fn x_step(x: i64) -> (Q, Q, Q) {
    if x == 0 {
        return (Q::one(), Q::zero(), Q::zero());
    }
    let up = q((x + 4) * (2 * x + 5), 3 * (x + 2) * (2 * x + 3));
    let stay = w(x) / qi(3);
    let down = q((x - 1) * (2 * x + 1), 3 * (x + 1) * (2 * x + 3));
    (up, stay, down)
}

/// (up, stay, down) probabilities of Y at `x`.
pub fn y_step(x: i64) -> Result<(Q, Q, Q), ChainError> {
    if x == 0 {
        return Err(ChainError::Absorbing);
    }
    if x < 0 {
        return Err(ChainError::Negative(x));
    }
    let wx = w(x);
    let base = &wx / (qi(3) * (Q::one() - &wx));
    let up = &base * (Q::one() - w(x + 1));
    let down = &base * (Q::one() - w(x - 1));
    Ok((up, wx / qi(3), down))
}

pub fn x_step_f64(x: i64) -> (f64, f64, f64) {
    if x == 0 {
        return (1.0, 0.0, 0.0);
    }
    let xf = x as f64;
    let up = (xf + 4.0) * (2.0 * xf + 5.0) / (3.0 * (xf + 2.0) * (2.0 * xf + 3.0));
    let down = (xf - 1.0) * (2.0 * xf + 1.0) / (3.0 * (xf + 1.0) * (2.0 * xf + 3.0));
    (up, w_f64(x) / 3.0, down)
}

pub fn y_step_f64(x: i64) -> (f64, f64, f64) {
    let wx = w_f64(x);
    let base = wx / (3.0 * (1.0 - wx));
    (base * (1.0 - w_f64(x + 1)), wx / 3.0, base * (1.0 - w_f64(x - 1)))
}

pub fn step_x<R: Rng + ?Sized>(x: i64, rng: &mut R) -> i64 {
    let (up, stay, _) = x_step_f64(x);
    let u: f64 = rng.gen();
    if u < up {
        x + 1
    } else if u < up + stay {
        x
    } else {
        x - 1
    }
}

pub fn step_y<R: Rng + ?Sized>(x: i64, rng: &mut R) -> i64 {
    let (up, stay, _) = y_step_f64(x);
    let u: f64 = rng.gen();
    if u < up {
        x + 1
    } else if u < up + stay {
        x
    } else {
        x - 1
    }
}

/// P_k(X returns to k) for k >= 1.
pub fn return_probability(k: i64) -> Q {
    q(6 * k - 1, 3 * (2 * k + 3))
}

/// Probability that X started at k never comes back to k. For k = 0 the
/// chain leaves 0 forever at its first step.
pub fn no_return(k: i64) -> Q {
    if k == 0 {
        return Q::one();
    }
    Q::one() - return_probability(k)
}

pub fn no_return_f64(k: i64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    10.0 / (3.0 * (2.0 * k as f64 + 3.0))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hitting {
    pub value: Q,
    /// Set when the value is not given by a closed form (start below target).
    pub note: Option<&'static str>,
}

/// P_x(H_k < ∞), with H_k the first hitting time after time 0 when x = k.
pub fn hitting_probability(x: i64, k: i64) -> Result<Hitting, ChainError> {
    if x < 0 || k < 0 {
        return Err(ChainError::Negative(x.min(k)));
    }
    if x < k {
        return Ok(Hitting { value: Q::one(), note: Some("start below target: hit almost surely") });
    }
    if k == 0 {
        // X never steps from 1 down to 0 and leaves 0 at once
        return Ok(Hitting { value: Q::zero(), note: None });
    }
    let value = if x == k { return_probability(k) } else { Q::new(h(k), h(x)) };
    Ok(Hitting { value, note: None })
}

fn check_k(k: i64) -> Result<(), ChainError> {
    if k < 2 {
        Err(ChainError::UnsupportedTarget(k))
    } else {
        Ok(())
    }
}

/// Expected number of visits to k (time 0 included) of X started at x.
pub fn green_h(x: i64, k: i64) -> Result<Q, ChainError> {
    check_k(k)?;
    if x < 1 {
        return Err(ChainError::Negative(x));
    }
    let base = q(3 * (2 * k + 3), 10);
    if x <= k {
        Ok(base)
    } else {
        Ok(base * Q::new(h(k), h(x)))
    }
}

/// Visits to k weighted by (time + 2).
pub fn green_hstar(x: i64, k: i64) -> Result<Q, ChainError> {
    check_k(k)?;
    if x < 1 {
        return Err(ChainError::Negative(x));
    }
    let at_or_below = |x: i64| -> Q {
        qi(3 * f(k)) / (qi(f(1)) * w(k)) - qi(3) * c_const(x) * qi(2 * k + 3) / qi(10)
    };
    if x <= k {
        Ok(at_or_below(x))
    } else {
        let inner = at_or_below(k) + q(3, 10) * a_const(x, k) * qi(2 * k + 3);
        Ok(Q::new(h(k), h(x)) * inner)
    }
}

pub fn green_h_f64(x: i64, k: i64) -> f64 {
    let base = 0.3 * (2 * k + 3) as f64;
    if x <= k {
        base
    } else {
        base * h_f64(k) / h_f64(x)
    }
}

pub fn green_hstar_f64(x: i64, k: i64) -> f64 {
    let kf = k as f64;
    let below = |x: i64| {
        let c = 3.0 / 14.0 * (((x + 1) * (x + 2) - 6) as f64);
        3.0 * f(k) as f64 / (f(1) as f64 * w_f64(k)) - 0.3 * c * (2.0 * kf + 3.0)
    };
    if x <= k {
        below(x)
    } else {
        let a = (kf + 2.0) + ((x - k - 1) * (x + k + 4)) as f64 / 2.0;
        h_f64(k) / h_f64(x) * (below(k) + 0.3 * a * (2.0 * kf + 3.0))
    }
}

/// Residual of the one-step recurrence satisfied by H* when the closed
/// forms are substituted. Zero means the closed forms are consistent.
pub fn hstar_recurrence_residual(x: i64, k: i64) -> Result<Q, ChainError> {
    check_k(k)?;
    if x < 1 {
        return Err(ChainError::Negative(x));
    }
    let (up, stay, down) = x_step(x);
    let below = if x > 1 { green_hstar(x - 1, k)? } else { Q::zero() };
    let indicator = if x == k { Q::one() } else { Q::zero() };
    let rhs = ((Q::one() - stay) * green_hstar(x, k)? - down * below - green_h(x, k)? - indicator) / up;
    Ok(green_hstar(x + 1, k)? - rhs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreenEstimate {
    pub h: f64,
    pub hstar: f64,
    /// Rigorous bound on the truncation error of `h`.
    pub h_bound: f64,
    /// Estimated truncation error of `hstar` (difference between the last
    /// two windows).
    pub hstar_bound: f64,
    pub window: usize,
}

/// Solves u = b + P u on states 0..=n with u(n + 1) = 0 (tridiagonal).
fn solve_window(n: usize, b: &[f64]) -> Vec<f64> {
    // row x: -down(x) u(x-1) + (1 - stay(x)) u(x) - up(x) u(x+1) = b(x)
    let mut c_prime = vec![0.0; n + 1];
    let mut d_prime = vec![0.0; n + 1];
    for x in 0..=n {
        let (up, stay, down) = x_step_f64(x as i64);
        let a = -down;
        let diag = 1.0 - stay;
        let c = -up;
        let (prev_c, prev_d) = if x == 0 { (0.0, 0.0) } else { (c_prime[x - 1], d_prime[x - 1]) };
        let m = diag - a * prev_c;
        c_prime[x] = c / m;
        d_prime[x] = (b[x] - a * prev_d) / m;
    }
    let mut u = vec![0.0; n + 1];
    u[n] = d_prime[n];
    for x in (0..n).rev() {
        u[x] = d_prime[x] - c_prime[x] * u[x + 1];
    }
    u
}

fn green_window(k: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut b = vec![0.0; n + 1];
    b[k] = 1.0;
    let hv = solve_window(n, &b);
    let mut b2 = hv.clone();
    b2[k] += 1.0;
    let hs = solve_window(n, &b2);
    (hv, hs)
}

/// Numerical Green functions for every start state in `0..=x_max` at
/// target `k`, by solving the killed problem on growing windows.
pub fn green_bruteforce_all(x_max: usize, k: i64, tol: f64) -> Result<Vec<GreenEstimate>, ChainError> {
    if k < 0 {
        return Err(ChainError::Negative(k));
    }
    let ku = k as usize;
    let mut n = 64usize.max(2 * (ku.max(x_max) + 1));
    let (mut h_prev, mut hs_prev) = green_window(ku, n);
    let escape = if k == 0 { 1.0 } else { no_return_f64(k) };
    loop {
        let n2 = 2 * n;
        let (hv, hs) = green_window(ku, n2);
        // visits after the window exit are at most H_{n2+1}(k)
        let h_bound = if k == 0 { 0.0 } else { h_f64(k) / h_f64(n2 as i64 + 1) / escape };
        let diff = (0..=x_max).map(|x| (hs[x] - hs_prev[x]).abs()).fold(0.0, f64::max);
        let hdiff = (0..=x_max).map(|x| (hv[x] - h_prev[x]).abs()).fold(0.0, f64::max);
        if h_bound.max(hdiff) < tol && diff < tol {
            return Ok((0..=x_max)
                .map(|x| GreenEstimate {
                    h: hv[x],
                    hstar: hs[x],
                    h_bound: h_bound.max(hdiff),
                    hstar_bound: diff,
                    window: n2,
                })
                .collect());
        }
        if n2 > 1 << 22 {
            return Err(ChainError::NoConvergence { tol, window: n2 });
        }
        n = n2;
        h_prev = hv;
        hs_prev = hs;
    }
}

pub fn green_bruteforce(x: i64, k: i64, tol: f64) -> Result<GreenEstimate, ChainError> {
    if x < 0 {
        return Err(ChainError::Negative(x));
    }
    let mut all = green_bruteforce_all(x as usize, k, tol)?;
    Ok(all.swap_remove(x as usize))
}

/// G_k(n) from the kernel display.
pub fn big_g(k: i64, n: i64) -> Q {
    if k <= n {
        Q::new(BigInt::from(3) * g(k), BigInt::from(35 * (n + 1) * (n + 2) * (n + 3)))
    } else {
        Q::new(BigInt::from(3) * g(n), BigInt::from(35 * (k + 1) * (k + 2) * (k + 3)))
    }
}

fn big_g_f64(k: i64, n: i64) -> f64 {
    let gf = |n: i64| {
        let n = n as f64;
        n * (n + 4.0) * (5.0 * n * n + 20.0 * n + 17.0)
    };
    let c = |a: i64| {
        let a = a as f64;
        35.0 * (a + 1.0) * (a + 2.0) * (a + 3.0)
    };
    if k <= n {
        3.0 * gf(k) / c(n)
    } else {
        3.0 * gf(n) / c(k)
    }
}

/// One term of the kernel. `elapsed` is the number of steps already spent
/// before the window (0 by default).
pub fn kernel_h(x: i64, y: i64, k: i64, n: i64, elapsed: f64) -> f64 {
    let f1 = f(1) as f64;
    let pre = f1 * w_f64(k + 1) / (3.0 * f(k + 1) as f64) * f1 * w_f64(k) / (3.0 * f(k) as f64)
        * big_g_f64(k, n - 1);
    let hx1 = green_h_f64(x, k + 1);
    let hy = green_h_f64(y, k);
    pre * (green_hstar_f64(x, k + 1) * hy + hx1 * green_hstar_f64(y, k) + (2.0 * elapsed - 5.0) * hx1 * hy)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSum {
    pub value: f64,
    /// Part of the sum coming from k >= n.
    pub upper_block: f64,
    pub tail_estimate: f64,
    pub k_max: i64,
    pub warning: Option<String>,
}

/// Sum of the kernel over 2 <= k <= k_max (default 20 n), with a power-law
/// extrapolation of the omitted tail.
pub fn kernel_sum(x: i64, y: i64, n: i64, k_max: Option<i64>, elapsed: f64) -> KernelSum {
    let k_max = k_max.unwrap_or(20 * n);
    let mut value = 0.0;
    let mut upper = 0.0;
    for k in 2..=k_max {
        let t = kernel_h(x, y, k, n, elapsed);
        value += t;
        if k >= n {
            upper += t;
        }
    }
    let t_end = kernel_h(x, y, k_max, n, elapsed);
    let t_half = kernel_h(x, y, k_max / 2, n, elapsed);
    let mut warning = None;
    let tail_estimate = if t_end > 0.0 && t_half > 0.0 {
        let decay = (t_half / t_end).ln() / 2f64.ln();
        if decay > 1.0 {
            t_end * k_max as f64 / (decay - 1.0)
        } else {
            warning = Some(format!("tail not summable at k_max = {k_max} (decay exponent {decay:.3})"));
            f64::INFINITY
        }
    } else {
        0.0
    };
    KernelSum { value, upper_block: upper, tail_estimate, k_max, warning }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Density {
    Value(Q),
    Zero(&'static str),
}

impl Density {
    pub fn value(&self) -> Q {
        match self {
            Density::Value(v) => v.clone(),
            Density::Zero(_) => Q::zero(),
        }
    }
}

fn is_walk(p: &[i64]) -> bool {
    p.windows(2).all(|s| (s[1] - s[0]).abs() <= 1)
}

/// Law of the path triple describing the rerooted infinite tree with root
/// label `n`. Paths are given including both endpoints.
pub fn theta_infty_n_density(n: i64, x: &[i64], y: &[i64], z: &[i64]) -> Density {
    // the second and third paths may be empty (b = 0 or c = 0); without
    // these terms the law does not sum to one
    if x.len() < 2 || y.is_empty() || z.is_empty() {
        return Density::Zero("first path needs a step, the others a vertex");
    }
    let k = *x.last().unwrap();
    if k < 1 {
        return Density::Zero("common value must be at least 1");
    }
    if x[0] != 0 || y[0] != 1 || z[0] != k || *y.last().unwrap() != k || *z.last().unwrap() != n {
        return Density::Zero("endpoint mismatch");
    }
    if !is_walk(x) || !is_walk(y) || !is_walk(z) {
        return Density::Zero("step larger than one");
    }
    if x[1..].iter().any(|&v| v <= 0) {
        return Density::Zero("first path must stay positive");
    }
    if y[1..].iter().any(|&v| v <= 1) || z[1..].iter().any(|&v| v <= 1) {
        return Density::Zero("second and third paths must stay above 1");
    }
    let (a, b, c) = (x.len() - 1, y.len() - 1, z.len() - 1);
    let mut v = Q::new(BigInt::from(a + b + 1), BigInt::from(3).pow((a + b + c) as u32));
    for &xi in &x[1..] {
        v *= w(xi);
    }
    for &yi in &y[1..] {
        v *= w(yi - 1);
    }
    for &zi in &z[1..] {
        v *= w(zi) * w(zi - 1);
    }
    Density::Value(v)
}

/// Probability that the sequential stopping rule stops exactly at index j
/// along the Y path `y` (for every j in 0..y.len()).
pub fn j_stop_law(y: &[i64]) -> Vec<Q> {
    let mut survive = Q::one();
    let mut out = Vec::with_capacity(y.len());
    for &yi in y {
        let keep = w(yi - 1);
        out.push(&survive * (Q::one() - &keep));
        survive *= keep;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// E[X_n^2] / n for X started at 0.
pub fn scaling_second_moment(n: usize, mode: MomentMode) -> f64 {
    match mode {
        MomentMode::Exact => {
            // X moves by at most one per step so the window 0..=n is exact
            let mut dist = vec![0.0f64; n + 2];
            let mut next = vec![0.0f64; n + 2];
            dist[0] = 1.0;
            let steps: Vec<(f64, f64, f64)> = (0..=n as i64 + 1).map(x_step_f64).collect();
            for t in 0..n {
                next.iter_mut().for_each(|v| *v = 0.0);
                for x in 0..=t.min(n) {
                    let m = dist[x];
                    if m == 0.0 {
                        continue;
                    }
                    let (up, stay, down) = steps[x];
                    next[x + 1] += m * up;
                    next[x] += m * stay;
                    if x > 0 {
                        next[x - 1] += m * down;
                    }
                }
                std::mem::swap(&mut dist, &mut next);
            }
            let m2: f64 = dist.iter().enumerate().map(|(x, p)| (x * x) as f64 * p).sum();
            m2 / n as f64
        }
        MomentMode::MonteCarlo { samples, seed } => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut acc = 0.0;
            for _ in 0..samples {
                let mut x = 0;
                for _ in 0..n {
                    x = step_x(x, &mut rng);
                }
                acc += (x * x) as f64;
            }
            acc / samples as f64 / n as f64
        }
    }
}

/// Converts a rational to f64.
pub fn to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_values() {
        assert_eq!(f(1), 20);
        assert_eq!(w(1), q(2, 3));
        assert_eq!(h(1), BigInt::from(120));
        assert_eq!(h(2), BigInt::from(840));
        assert!(c_const(1).is_zero());
        assert_eq!(x_step(1), (q(7, 9), q(2, 9), Q::zero()));
        assert_eq!(y_step(1).unwrap(), (q(1, 9), q(2, 9), q(2, 3)));
        assert_eq!(y_step(0), Err(ChainError::Absorbing));
        assert_eq!(big_g(1, 2), q(3, 10));
    }

    #[test]
    fn green_pins() {
        assert_eq!(green_h(1, 2).unwrap(), q(21, 10));
        assert_eq!(green_h(3, 2).unwrap(), q(49, 90));
        assert_eq!(green_hstar(2, 2).unwrap(), q(99, 10));
        assert_eq!(green_h(1, 1), Err(ChainError::UnsupportedTarget(1)));
    }

    #[test]
    fn hitting_pins() {
        assert_eq!(hitting_probability(1, 1).unwrap().value, q(1, 3));
        assert_eq!(hitting_probability(2, 1).unwrap().value, q(1, 7));
        assert!(hitting_probability(1, 3).unwrap().note.is_some());
    }

    #[test]
    fn first_moment_step() {
        assert_eq!(scaling_second_moment(1, MomentMode::Exact), 1.0);
    }
}
