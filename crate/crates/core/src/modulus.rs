//! p-modulus of a family of linear admissibility constraints.
//!
//! A family member is a nonnegative coefficient vector `c` on edges; a density
//! `rho` is admissible when `sum_e c_e rho_e >= 1` for every member. The
//! modulus is the least energy `sum_e mu_e rho_e^p` over admissible densities.
//! [`solve_modulus`] works on the Lagrange dual: for multipliers `lambda >= 0`
//! the optimal density is
//! `rho_e = (sum_j lambda_j c_je / (p mu_e))^(1 / (p - 1))`
//! and the dual objective is `sum lambda - (p - 1) sum mu rho^p`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{Density, ToroidalComplex};
use crate::linalg::dense_solve;

pub const P_MIN: f64 = 1.05;
pub const P_MAX: f64 = 20.0;

/// Largest restricted family handled by the dense barrier polish.
const BARRIER_MAX_MEMBERS: usize = 1500;

/// Clamps an exponent into the supported range.
pub fn clamp_p(p: f64) -> f64 {
    p.clamp(P_MIN, P_MAX)
}

/// Hoelder conjugate `p / (p - 1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

#[derive(Debug, Error)]
pub enum ModulusError {
    #[error("family contains a member with no positive coefficient; modulus is infinite")]
    NoAdmissible,
    #[error("solver did not converge after {} iterations (min constraint {:.3e})", .0.iterations, .0.min_constraint)]
    NotConverged(Box<SolveReport>),
    #[error("exponent {0} is not a finite number greater than 1")]
    InvalidExponent(f64),
    #[error("brute force limited to 64 members and 64 edges (got {members} members, {edges} edges)")]
    SizeLimit { members: usize, edges: usize },
    #[error("member refers to edge {edge} but the complex has {edges} edges")]
    EdgeOutOfRange { edge: usize, edges: usize },
}

/// A family member: sorted `(edge, coefficient)` pairs with positive coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub coefs: Vec<(usize, f64)>,
}

impl Member {
    /// Sorts, merges repeated edges by summing, and drops zero coefficients.
    pub fn new(mut coefs: Vec<(usize, f64)>) -> Self {
        coefs.sort_by_key(|&(e, _)| e);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
        for (e, c) in coefs {
            match out.last_mut() {
                Some(last) if last.0 == e => last.1 += c,
                _ => out.push((e, c)),
            }
        }
        out.retain(|&(_, c)| c > 0.0);
        Self { coefs: out }
    }

    pub fn weight(&self, rho: &[f64]) -> f64 {
        self.coefs.iter().map(|&(e, c)| c * rho[e]).sum()
    }

    pub fn support(&self) -> Vec<usize> {
        self.coefs.iter().map(|&(e, _)| e).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.is_empty()
    }

    fn key(&self) -> Vec<(usize, u64)> {
        self.coefs.iter().map(|&(e, c)| (e, c.to_bits())).collect()
    }

    /// Whether every constraint of `other` is implied by this one
    /// (`self.c <= other.c` edgewise).
    pub fn dominates(&self, other: &Member) -> bool {
        let mut j = 0;
        for &(e, c) in &self.coefs {
            while j < other.coefs.len() && other.coefs[j].0 < e {
                j += 1;
            }
            match other.coefs.get(j) {
                Some(&(f, d)) if f == e && c <= d => {}
                _ => return false,
            }
        }
        true
    }
}

/// Picks the better of two candidates: lower weight, then lexicographically
/// smaller support.
pub fn prefer(a: &(Member, f64), b: &(Member, f64)) -> bool {
    match a.1.total_cmp(&b.1) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.0.support() < b.0.support(),
    }
}

/// Minimum-weight member queries against a fixed complex.
pub trait ConstraintOracle: Sync {
    /// The member minimizing `sum c_e rho_e`, with that weight. `None` when the family is empty.
    fn most_violated(&self, rho: &[f64]) -> Option<(Member, f64)>;

    /// Several low-weight members. The first entry must be a minimizer.
    fn candidates(&self, rho: &[f64]) -> Vec<(Member, f64)> {
        self.most_violated(rho).into_iter().collect()
    }

    /// The whole family, when it is small enough to list.
    fn enumerate_all(&self) -> Option<Vec<Member>> {
        None
    }
}

/// A family given as an explicit list.
#[derive(Debug, Clone)]
pub struct ExplicitFamily {
    pub members: Vec<Member>,
}

impl ConstraintOracle for ExplicitFamily {
    fn most_violated(&self, rho: &[f64]) -> Option<(Member, f64)> {
        let mut best: Option<(Member, f64)> = None;
        for m in &self.members {
            let cand = (m.clone(), m.weight(rho));
            if best.as_ref().map_or(true, |b| prefer(&cand, b)) {
                best = Some(cand);
            }
        }
        best
    }

    fn candidates(&self, rho: &[f64]) -> Vec<(Member, f64)> {
        let mut all: Vec<_> = self.members.iter().map(|m| (m.clone(), m.weight(rho))).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.support().cmp(&b.0.support())));
        all
    }

    fn enumerate_all(&self) -> Option<Vec<Member>> {
        Some(self.members.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveMember {
    pub member: Member,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max(0, 1 - min_constraint)`.
    pub feasibility: f64,
    /// Largest relative gap between the density and the multiplier formula.
    pub stationarity: f64,
    /// `max_j lambda_j |sum c_j rho - 1|` over active members.
    pub complementary: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub p: f64,
    pub value: f64,
    pub dual_value: f64,
    pub density: Density,
    pub active_members: Vec<ActiveMember>,
    pub min_constraint: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt: KktResiduals,
}

impl SolveReport {
    /// Relative gap between the primal energy and the dual bound.
    pub fn duality_gap(&self) -> f64 {
        (self.value - self.dual_value).abs() / self.value.abs().max(f64::MIN_POSITIVE)
    }
}

struct DualState {
    mu: Vec<f64>,
    p: f64,
    inv: f64,
    members: Vec<Member>,
    lambda: Vec<f64>,
    a: Vec<f64>,
}

impl DualState {
    fn new(mu: Vec<f64>, p: f64) -> Self {
        let n = mu.len();
        Self { mu, p, inv: 1.0 / (p - 1.0), members: Vec::new(), lambda: Vec::new(), a: vec![0.0; n] }
    }

    #[inline]
    fn rho_of(&self, e: usize, a: f64) -> f64 {
        if a <= 0.0 {
            0.0
        } else {
            (a / (self.p * self.mu[e])).powf(self.inv)
        }
    }

    fn rho(&self) -> Vec<f64> {
        (0..self.a.len()).map(|e| self.rho_of(e, self.a[e])).collect()
    }

    fn rebuild(&mut self) {
        self.a.iter_mut().for_each(|x| *x = 0.0);
        for (m, &l) in self.members.iter().zip(&self.lambda) {
            if l > 0.0 {
                for &(e, c) in &m.coefs {
                    self.a[e] += l * c;
                }
            }
        }
    }

    fn g(&self, j: usize) -> f64 {
        self.members[j].coefs.iter().map(|&(e, c)| c * self.rho_of(e, self.a[e])).sum()
    }

    fn residual(&self, j: usize) -> f64 {
        let g = self.g(j);
        if self.lambda[j] > 0.0 {
            (g - 1.0).abs()
        } else {
            (1.0 - g).max(0.0)
        }
    }

    /// Exact maximization of the dual over `lambda_j` alone.
    fn step(&mut self, j: usize) {
        let old = self.lambda[j];
        let m = &self.members[j];
        let base: Vec<f64> = m.coefs.iter().map(|&(e, c)| (self.a[e] - old * c).max(0.0)).collect();
        let (p, inv) = (self.p, self.inv);
        let mu = &self.mu;
        let eval = |lam: f64| -> (f64, f64) {
            let mut g = 0.0;
            let mut dg = 0.0;
            for (&(e, c), &b) in m.coefs.iter().zip(&base) {
                let x = (b + lam * c) / (p * mu[e]);
                if x > 0.0 {
                    let r = x.powf(inv);
                    g += c * r;
                    dg += c * c * inv * r / (x * p * mu[e]);
                } else if inv < 1.0 {
                    dg = f64::INFINITY;
                }
            }
            (g, dg)
        };
        let new = if eval(0.0).0 >= 1.0 {
            0.0
        } else {
            let s: f64 = m.coefs.iter().map(|&(e, c)| c * (c / (p * mu[e])).powf(inv)).sum();
            let mut hi = (1.0 / s).powf(p - 1.0);
            let mut lo = 0.0;
            let mut lam = if old > lo && old < hi { old } else { hi };
            for _ in 0..200 {
                let (g, dg) = eval(lam);
                let r = g - 1.0;
                if r.abs() <= 1e-15 {
                    break;
                }
                if r > 0.0 {
                    hi = lam;
                } else {
                    lo = lam;
                }
                if hi - lo <= 1e-16 * hi {
                    break;
                }
                let newton = lam - r / dg;
                lam = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            }
            lam
        };
        for (&(e, c), &b) in m.coefs.iter().zip(&base) {
            self.a[e] = b + new * c;
        }
        self.lambda[j] = new;
    }

    /// One cyclic pass; returns the largest KKT residual over members.
    fn sweep(&mut self) -> f64 {
        self.rebuild();
        for j in 0..self.members.len() {
            self.step(j);
        }
        (0..self.members.len()).map(|j| self.residual(j)).fold(0.0, f64::max)
    }

    fn max_residual(&mut self) -> f64 {
        self.rebuild();
        (0..self.members.len()).map(|j| self.residual(j)).fold(0.0, f64::max)
    }

    fn dual_at(&self, lambda: &[f64]) -> f64 {
        let mut a = vec![0.0; self.a.len()];
        for (m, &l) in self.members.iter().zip(lambda) {
            if l > 0.0 {
                for &(e, c) in &m.coefs {
                    a[e] += l * c;
                }
            }
        }
        let en: f64 = (0..a.len()).map(|e| self.mu[e] * self.rho_of(e, a[e]).powf(self.p)).sum();
        lambda.iter().sum::<f64>() - (self.p - 1.0) * en
    }

    /// Solves `J d = rhs` for the dual Hessian restricted to `act`, matrix-free.
    fn newton_direction(&self, act: &[usize], a: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = a.len();
        let slope: Vec<f64> = (0..n)
            .map(|e| if a[e] > 0.0 { self.rho_of(e, a[e]) / ((self.p - 1.0) * a[e]) } else { 0.0 })
            .collect();
        let members = &self.members;
        let mut tmp = vec![0.0; n];
        let mut apply = |v: &[f64], out: &mut [f64]| {
            tmp.iter_mut().for_each(|x| *x = 0.0);
            for (r, &j) in act.iter().enumerate() {
                for &(e, c) in &members[j].coefs {
                    tmp[e] += v[r] * c;
                }
            }
            for (r, &j) in act.iter().enumerate() {
                out[r] = members[j].coefs.iter().map(|&(e, c)| c * slope[e] * tmp[e]).sum::<f64>() + 1e-14 * v[r];
            }
        };
        let na = act.len();
        let mut d = vec![0.0; na];
        let mut res = rhs.to_vec();
        let mut dir = res.clone();
        let mut jd = vec![0.0; na];
        let mut rr: f64 = res.iter().map(|x| x * x).sum();
        let r0 = rr.sqrt();
        for _ in 0..(2 * na + 50) {
            if rr.sqrt() <= 1e-13 * r0 || rr == 0.0 {
                break;
            }
            apply(&dir, &mut jd);
            let dj: f64 = dir.iter().zip(&jd).map(|(a, b)| a * b).sum();
            if dj <= 0.0 {
                break;
            }
            let alpha = rr / dj;
            for r in 0..na {
                d[r] += alpha * dir[r];
                res[r] -= alpha * jd[r];
            }
            let rr_new: f64 = res.iter().map(|x| x * x).sum();
            let beta = rr_new / rr;
            rr = rr_new;
            for r in 0..na {
                dir[r] = res[r] + beta * dir[r];
            }
        }
        d
    }

    fn loads_at(&self, lambda: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.a.len()];
        for (m, &l) in self.members.iter().zip(lambda) {
            if l > 0.0 {
                for &(e, c) in &m.coefs {
                    a[e] += l * c;
                }
            }
        }
        a
    }

    /// Active-set Newton step: solve the stationarity equations of the members
    /// with positive multipliers, dropping any member whose multiplier would
    /// turn nonpositive, then line-search along the segment to the result.
    fn newton(&mut self) {
        let mut lam = self.lambda.clone();
        let mut act: Vec<usize> = (0..lam.len()).filter(|&j| lam[j] > 0.0).collect();
        let mut target = None;
        for _ in 0..20 {
            if act.is_empty() {
                break;
            }
            let a = self.loads_at(&lam);
            let rhs: Vec<f64> = act
                .iter()
                .map(|&j| 1.0 - self.members[j].coefs.iter().map(|&(e, c)| c * self.rho_of(e, a[e])).sum::<f64>())
                .collect();
            let d = self.newton_direction(&act, &a, &rhs);
            let drop: Vec<usize> = act.iter().enumerate().filter(|&(r, &j)| lam[j] + d[r] <= 0.0).map(|(_, &j)| j).collect();
            if drop.is_empty() {
                let mut t = lam.clone();
                for (r, &j) in act.iter().enumerate() {
                    t[j] += d[r];
                }
                target = Some(t);
                break;
            }
            for &j in &drop {
                lam[j] = 0.0;
            }
            act.retain(|j| !drop.contains(j));
        }
        let Some(target) = target else { return };
        let d0 = self.dual_at(&self.lambda);
        let mut step = 1.0;
        for _ in 0..30 {
            let trial: Vec<f64> = self.lambda.iter().zip(&target).map(|(x, t)| (x + step * (t - x)).max(0.0)).collect();
            if self.dual_at(&trial) > d0 {
                self.lambda = trial;
                break;
            }
            step *= 0.5;
        }
        self.rebuild();
    }

    /// Log-barrier Newton on the restricted dual, for degenerate families
    /// where coordinate ascent crawls. Keeps the result only if it raises the dual.
    fn barrier_polish(&mut self, target: f64) {
        let m = self.members.len();
        if m == 0 || m > BARRIER_MAX_MEMBERS {
            return;
        }
        let lmax = self.lambda.iter().copied().fold(0.0, f64::max);
        if lmax <= 0.0 {
            return;
        }
        let mut lam: Vec<f64> = self.lambda.iter().map(|&l| l.max(1e-3 * lmax)).collect();
        let mut by_edge: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.a.len()];
        for (j, mem) in self.members.iter().enumerate() {
            for &(e, c) in &mem.coefs {
                by_edge[e].push((j, c));
            }
        }
        let objective = |lam: &[f64], s: f64| self.dual_at(lam) + s * lam.iter().map(|l| l.ln()).sum::<f64>();
        // Start near the current gap; the barrier optimum has duality gap m s.
        let scale = self.dual_at(&lam).abs();
        let gap = self.relative_gap(self.restricted_min());
        let mut s = (gap.min(1e-2) * scale / m as f64).max(f64::MIN_POSITIVE);
        let s_min = 0.1 * target * scale / m as f64;
        loop {
            for _ in 0..50 {
                let a = self.loads_at(&lam);
                let slope: Vec<f64> =
                    (0..a.len()).map(|e| if a[e] > 0.0 { self.rho_of(e, a[e]) / ((self.p - 1.0) * a[e]) } else { 0.0 }).collect();
                let mut h = vec![0.0; m * m];
                for (e, list) in by_edge.iter().enumerate() {
                    if slope[e] == 0.0 {
                        continue;
                    }
                    for &(j, cj) in list {
                        let f = cj * slope[e];
                        for &(k, ck) in list {
                            h[j * m + k] += f * ck;
                        }
                    }
                }
                let grad: Vec<f64> = (0..m)
                    .map(|j| {
                        let g: f64 = self.members[j].coefs.iter().map(|&(e, c)| c * self.rho_of(e, a[e])).sum();
                        1.0 - g + s / lam[j]
                    })
                    .collect();
                for j in 0..m {
                    h[j * m + j] += s / (lam[j] * lam[j]);
                }
                let Some(d) = dense_solve(h, grad.clone()) else { return };
                let decrement: f64 = d.iter().zip(&grad).map(|(x, y)| x * y).sum();
                // Fraction to the boundary, then backtracking on the barrier objective.
                let mut step: f64 = 1.0;
                for (l, dj) in lam.iter().zip(&d) {
                    if *dj < 0.0 {
                        step = step.min(-0.99 * l / dj);
                    }
                }
                let f0 = objective(&lam, s);
                let mut moved = false;
                for _ in 0..40 {
                    let trial: Vec<f64> = lam.iter().zip(&d).map(|(l, dj)| l + step * dj).collect();
                    if objective(&trial, s) >= f0 {
                        lam = trial;
                        moved = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !moved || decrement <= 1e-2 * m as f64 * s {
                    break;
                }
            }
            if s <= s_min {
                break;
            }
            s = (0.05 * s).max(s_min);
        }
        if self.dual_at(&lam) >= self.dual_at(&self.lambda) {
            self.lambda = lam;
        }
        self.rebuild();
    }

    /// Relative gap between the energy of `rho / w` and the dual value, where
    /// `w` is the least constraint value. Both bound the modulus of any family
    /// on which every member has weight at least `w`.
    fn relative_gap(&self, w: f64) -> f64 {
        if !(w > 0.0) {
            return f64::INFINITY;
        }
        let rho = self.rho();
        let upper = self.energy(&rho) / w.powf(self.p);
        (upper - self.dual_value(&rho)) / upper.max(f64::MIN_POSITIVE)
    }

    fn restricted_min(&self) -> f64 {
        (0..self.members.len()).map(|j| self.g(j)).fold(f64::INFINITY, f64::min)
    }

    /// Adds a member unless an existing one implies it; drops members it implies.
    fn insert(&mut self, m: Member) -> bool {
        if self.members.iter().any(|o| o.dominates(&m)) {
            return false;
        }
        let mut j = 0;
        while j < self.members.len() {
            if m.dominates(&self.members[j]) {
                self.members.swap_remove(j);
                self.lambda.swap_remove(j);
            } else {
                j += 1;
            }
        }
        self.members.push(m);
        self.lambda.push(0.0);
        true
    }

    fn energy(&self, rho: &[f64]) -> f64 {
        self.mu.iter().zip(rho).map(|(m, r)| m * r.powf(self.p)).sum()
    }

    fn dual_value(&self, rho: &[f64]) -> f64 {
        self.lambda.iter().sum::<f64>() - (self.p - 1.0) * self.energy(rho)
    }
}

fn check_p(p: f64) -> Result<f64, ModulusError> {
    if !p.is_finite() || p <= 1.0 {
        return Err(ModulusError::InvalidExponent(p));
    }
    Ok(clamp_p(p))
}

fn check_member(m: &Member, edges: usize) -> Result<(), ModulusError> {
    if m.is_empty() {
        return Err(ModulusError::NoAdmissible);
    }
    if let Some(&(edge, _)) = m.coefs.iter().find(|&&(e, _)| e >= edges) {
        return Err(ModulusError::EdgeOutOfRange { edge, edges });
    }
    Ok(())
}

/// Constraint generation around exact dual coordinate ascent.
pub fn solve_modulus(
    c: &ToroidalComplex,
    oracle: &dyn ConstraintOracle,
    p: f64,
    opts: &SolveOptions,
) -> Result<SolveReport, ModulusError> {
    let p = check_p(p)?;
    let n = c.num_edges();
    let tol = opts.tol;
    let final_tol = tol * 1e-3;
    let mut state = DualState::new(c.edges.iter().map(|e| e.mu).collect(), p);
    let mut seen: HashSet<Vec<(usize, u64)>> = HashSet::new();
    let mut iterations = 0;
    let mut stalls = 0;
    let mut inner_res = 0.0;
    let (min_constraint, converged) = loop {
        let rho = state.rho();
        let cands = oracle.candidates(&rho);
        for (m, _) in &cands {
            check_member(m, n)?;
        }
        let Some(min_w) = cands.iter().map(|x| x.1).min_by(f64::total_cmp) else {
            break (f64::INFINITY, true);
        };
        // Early subproblems only need to be solved to the accuracy of the
        // current outer violation. The final one needs a certified gap of tol.
        let (target, gap_target) = if min_w >= 1.0 - tol {
            if inner_res <= final_tol || state.relative_gap(min_w) <= tol {
                break (min_w, true);
            }
            (final_tol, 0.1 * tol)
        } else {
            let mut added = 0;
            for (m, w) in cands {
                if w < 1.0 - tol && seen.insert(m.key()) && state.insert(m) {
                    added += 1;
                }
            }
            if added == 0 {
                stalls += 1;
                if stalls > 3 {
                    break (min_w, false);
                }
                (final_tol, 0.1 * tol)
            } else {
                let t = (1e-2 * (1.0 - min_w)).clamp(final_tol, 1e-2);
                (t, t)
            }
        };
        let solved =
            |state: &DualState, res: f64| res <= target || state.relative_gap(state.restricted_min()) <= gap_target;
        let mut done = false;
        let mut sweeps = 0;
        while iterations < opts.max_iter {
            iterations += 1;
            sweeps += 1;
            inner_res = state.sweep();
            if inner_res <= target {
                done = true;
                break;
            }
            if sweeps % 50 == 20 {
                state.barrier_polish(gap_target);
                inner_res = state.max_residual();
                if solved(&state, inner_res) {
                    done = true;
                    break;
                }
            }
            if sweeps % 2 == 0 {
                state.newton();
                inner_res = state.max_residual();
                if solved(&state, inner_res) {
                    done = true;
                    break;
                }
            }
        }
        if !done {
            let rho = state.rho();
            let w = oracle.most_violated(&rho).map_or(f64::INFINITY, |x| x.1);
            break (w, false);
        }
        log::debug!(
            "modulus: {} members, min weight {:.6e}, {} sweeps, restricted gap {:.2e}, residual {:.2e}",
            state.members.len(),
            min_w,
            iterations,
            state.relative_gap(state.restricted_min()),
            inner_res
        );
    };

    state.rebuild();
    let rho = state.rho();
    let value = state.energy(&rho);
    let dual_value = state.dual_value(&rho);
    let mut complementary: f64 = 0.0;
    for j in 0..state.members.len() {
        complementary = complementary.max(state.lambda[j] * (state.g(j) - 1.0).abs());
    }
    let active_members: Vec<ActiveMember> = state
        .members
        .iter()
        .zip(&state.lambda)
        .filter(|(_, &l)| l > 0.0)
        .map(|(m, &l)| ActiveMember { member: m.clone(), lambda: l })
        .collect();
    let stationarity = stationarity_residual(c, p, &rho, &active_members);
    let report = SolveReport {
        p,
        value,
        dual_value,
        density: Density { values: rho },
        active_members,
        min_constraint,
        iterations,
        converged,
        kkt: KktResiduals { feasibility: (1.0 - min_constraint).max(0.0), stationarity, complementary },
    };
    if converged {
        Ok(report)
    } else {
        Err(ModulusError::NotConverged(Box::new(report)))
    }
}

/// Largest relative deviation of `rho` from the density implied by the multipliers.
pub fn stationarity_residual(c: &ToroidalComplex, p: f64, rho: &[f64], active: &[ActiveMember]) -> f64 {
    let mut a = vec![0.0; rho.len()];
    for am in active {
        for &(e, coef) in &am.member.coefs {
            a[e] += am.lambda * coef;
        }
    }
    let mut worst: f64 = 0.0;
    for (e, edge) in c.edges.iter().enumerate() {
        let want = if a[e] > 0.0 { (a[e] / (p * edge.mu)).powf(1.0 / (p - 1.0)) } else { 0.0 };
        worst = worst.max((rho[e] - want).abs() / (1.0 + want));
    }
    worst
}

/// Drops members implied by another member (and later duplicates).
pub fn prune_dominated(members: &[Member]) -> Vec<Member> {
    let mut keep = Vec::new();
    'outer: for (j, m) in members.iter().enumerate() {
        for (k, o) in members.iter().enumerate() {
            if k != j && o.dominates(m) && (!m.dominates(o) || k < j) {
                continue 'outer;
            }
        }
        keep.push(m.clone());
    }
    keep
}

/// Modulus with every constraint present, by a primal log-barrier method.
/// Test oracle for small families.
pub fn brute_force_modulus(c: &ToroidalComplex, members: &[Member], p: f64) -> Result<f64, ModulusError> {
    let p = check_p(p)?;
    let n = c.num_edges();
    if members.len() > 5000 || n > 64 {
        return Err(ModulusError::SizeLimit { members: members.len(), edges: n });
    }
    for m in members {
        check_member(m, n)?;
        if m.is_empty() {
            return Err(ModulusError::NoAdmissible);
        }
    }
    if members.is_empty() {
        return Ok(0.0);
    }
    let members = prune_dominated(members);
    let mu: Vec<f64> = c.edges.iter().map(|e| e.mu).collect();
    let energy = |rho: &[f64]| -> f64 { (0..n).map(|e| mu[e] * rho[e].powf(p)).sum() };
    let slacks = |rho: &[f64]| -> Vec<f64> { members.iter().map(|m| m.weight(rho) - 1.0).collect() };
    let barrier = |rho: &[f64], t: f64| -> f64 {
        if rho.iter().any(|&r| r <= 0.0) {
            return f64::INFINITY;
        }
        let sl = slacks(rho);
        if sl.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        t * energy(rho) - sl.iter().map(|v| v.ln()).sum::<f64>() - rho.iter().map(|r| r.ln()).sum::<f64>()
    };

    let least = members
        .iter()
        .map(|m| m.coefs.iter().map(|&(_, v)| v).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let mut rho = vec![2.0 / least; n];
    let ncons = (members.len() + n) as f64;
    let mut t = ncons / energy(&rho);
    loop {
        for _ in 0..100 {
            let sl = slacks(&rho);
            let mut g: Vec<f64> = (0..n).map(|e| t * p * mu[e] * rho[e].powf(p - 1.0) - 1.0 / rho[e]).collect();
            let mut h = vec![0.0; n * n];
            for e in 0..n {
                h[e * n + e] = t * p * (p - 1.0) * mu[e] * rho[e].powf(p - 2.0) + 1.0 / (rho[e] * rho[e]);
            }
            for (m, &sj) in members.iter().zip(&sl) {
                for &(e, ce) in &m.coefs {
                    g[e] -= ce / sj;
                    for &(f, cf) in &m.coefs {
                        h[e * n + f] += ce * cf / (sj * sj);
                    }
                }
            }
            let Some(d) = dense_solve(h, g.iter().map(|v| -v).collect()) else { break };
            let decrement: f64 = -g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
            if decrement <= 1e-18 {
                break;
            }
            let f0 = barrier(&rho, t);
            let mut step = 1.0;
            let next = loop {
                let cand: Vec<f64> = rho.iter().zip(&d).map(|(r, v)| r + step * v).collect();
                if barrier(&cand, t) <= f0 - 0.25 * step * decrement {
                    break Some(cand);
                }
                step *= 0.5;
                if step < 1e-12 {
                    break None;
                }
            };
            match next {
                Some(r) => rho = r,
                None => break,
            }
        }
        if ncons / t <= 1e-13 * energy(&rho) {
            break;
        }
        t *= 8.0;
    }
    let gmin = slacks(&rho).iter().fold(f64::INFINITY, |a, &v| a.min(v + 1.0));
    Ok(energy(&rho) / gmin.powf(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_ring, scale_metric};

    fn ring_member(c: &ToroidalComplex) -> Member {
        Member::new(c.edges.iter().enumerate().map(|(i, e)| (i, e.ell)).collect())
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn single_cycle_closed_forms() {
        for (len, p, want) in [(1.0, 2.0, 1.0), (2.0, 2.0, 0.5), (2.0, 3.0, 0.25), (1.0, 1.5, 1.0)] {
            let c = build_ring(3, len, 1.0).unwrap();
            let fam = ExplicitFamily { members: vec![ring_member(&c)] };
            let r = solve_modulus(&c, &fam, p, &SolveOptions::default()).unwrap();
            assert!(close(r.value, want, 1e-6), "{len} {p}: {}", r.value);
            assert!(r.kkt.feasibility <= 1e-6 && r.kkt.stationarity <= 1e-6 && r.kkt.complementary <= 1e-6);
            assert!(close(brute_force_modulus(&c, &fam.members, p).unwrap(), want, 1e-9));
        }
    }

    #[test]
    fn zero_member_has_no_admissible_density() {
        let c = build_ring(3, 1.0, 1.0).unwrap();
        let fam = ExplicitFamily { members: vec![ring_member(&c), Member::new(vec![(0, 0.0)])] };
        assert!(matches!(solve_modulus(&c, &fam, 2.0, &SolveOptions::default()), Err(ModulusError::NoAdmissible)));
        assert!(matches!(brute_force_modulus(&c, &fam.members, 2.0), Err(ModulusError::NoAdmissible)));
    }

    #[test]
    fn duplicates_are_inert_and_disjoint_members_add() {
        let c = build_ring(4, 1.0, 1.0).unwrap();
        let m = ring_member(&c);
        let one = brute_force_modulus(&c, &[m.clone()], 2.0).unwrap();
        let two = brute_force_modulus(&c, &[m.clone(), m], 2.0).unwrap();
        assert!(close(one, two, 1e-12));

        let a = Member::new(vec![(0, 0.5), (1, 0.5)]);
        let b = Member::new(vec![(2, 0.5), (3, 0.5)]);
        let both = brute_force_modulus(&c, &[a.clone(), b.clone()], 2.0).unwrap();
        let sa = brute_force_modulus(&c, &[a], 2.0).unwrap();
        let sb = brute_force_modulus(&c, &[b], 2.0).unwrap();
        assert!(close(both, sa + sb, 1e-9));
    }

    #[test]
    fn overlapping_family_matches_brute_force() {
        let c = build_ring(6, 1.0, 1.0).unwrap();
        let members: Vec<Member> = (0..6)
            .map(|s| Member::new((0..3).map(|i| ((s + i) % 6, 1.0 + 0.1 * i as f64)).collect()))
            .collect();
        let fam = ExplicitFamily { members: members.clone() };
        for p in [1.5, 2.0, 4.0] {
            let r = solve_modulus(&c, &fam, p, &SolveOptions { tol: 1e-10, max_iter: 100_000 }).unwrap();
            let b = brute_force_modulus(&c, &members, p).unwrap();
            assert!(close(r.value, b, 1e-7), "p={p}: {} vs {b}", r.value);
            // Monotone in the family.
            let sub = brute_force_modulus(&c, &members[..3], p).unwrap();
            assert!(sub <= b + 1e-12);
        }
    }

    #[test]
    fn homogeneous_in_the_measure() {
        let c = build_ring(3, 1.0, 1.0).unwrap();
        let m = ring_member(&c);
        for s in [0.5, 2.0] {
            let mut d = c.clone();
            for e in &mut d.edges {
                e.mu *= s;
            }
            let fam = ExplicitFamily { members: vec![m.clone()] };
            let r = solve_modulus(&d, &fam, 2.0, &SolveOptions::default()).unwrap();
            assert!(close(r.value, s, 1e-6));
        }
        assert!(scale_metric(&c, 2.0).is_ok());
    }

    #[test]
    fn member_normalization() {
        let m = Member::new(vec![(3, 1.0), (1, 0.5), (3, 1.0), (2, 0.0)]);
        assert_eq!(m.coefs, vec![(1, 0.5), (3, 2.0)]);
        assert!(Member::new(vec![(1, 0.5)]).dominates(&m));
        assert!(!m.dominates(&Member::new(vec![(1, 0.5)])));
    }
}
