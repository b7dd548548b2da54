//! Weighted scalarization and convex Pareto front construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::simplex::{Cmp, LinearProgram, LpOutcome};
use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy, state_values, BeliefMdp, Objective, ObjectiveSpec, Policy};

/// Lexicographic backward DP. `levels[l][o]` weighs the natural value of
/// objective `o` at priority level `l`; ties within a relative tolerance of
/// 1e-12 fall through to the next level, then to the lowest action index.
pub(crate) fn lex_choice(mdp: &BeliefMdp, objectives: &[Objective], levels: &[Vec<f64>]) -> Result<Vec<usize>> {
    let order = mdp.topological_order()?;
    let k = objectives.len();
    let mut v = vec![vec![0.0; k]; mdp.states.len()];
    let mut choice = vec![0usize; mdp.states.len()];
    let mut q = Vec::new();
    let mut candidates: Vec<usize> = Vec::new();
    for &s in order.iter().rev() {
        let st = &mdp.states[s];
        if st.role.is_absorbing() {
            for (o, obj) in objectives.iter().enumerate() {
                v[s][o] = obj.terminal(st.role);
            }
            continue;
        }
        q.clear();
        for a in &st.actions {
            let mut qa = vec![0.0; k];
            for (o, obj) in objectives.iter().enumerate() {
                let mut x = obj.reward(a);
                for &(t, p) in &a.transitions {
                    x += p * v[t][o];
                }
                qa[o] = x;
            }
            q.push(qa);
        }
        candidates.clear();
        candidates.extend(0..st.actions.len());
        for w in levels {
            if candidates.len() == 1 {
                break;
            }
            let score = |a: usize| -> f64 { w.iter().zip(&q[a]).map(|(wi, qi)| wi * qi).sum() };
            let best = candidates.iter().map(|&a| score(a)).fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-12 * best.abs().max(1.0);
            candidates.retain(|&a| score(a) >= best - tol);
        }
        let a = candidates[0];
        choice[s] = a;
        v[s] = q[a].clone();
    }
    Ok(choice)
}

/// Maximizes `Σ w_k·(signed objective k)` over deterministic policies.
pub fn scalarize_solve(mdp: &BeliefMdp, spec: &ObjectiveSpec, weights: &[f64]) -> Result<(Policy, Vec<f64>)> {
    spec.validate(mdp.cost_names.len())?;
    if weights.len() != spec.len() {
        return Err(Error::InvalidInput(format!("expected {} weights, got {}", spec.len(), weights.len())));
    }
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("weights must be nonnegative and sum to 1".into()));
    }
    let level: Vec<f64> = weights.iter().zip(spec.signs()).map(|(w, s)| w * s).collect();
    let choice = lex_choice(mdp, &spec.objectives, &[level])?;
    let policy = Policy::deterministic(mdp, &choice);
    let values = evaluate_policy(mdp, &policy, spec)?;
    Ok((policy, values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontOptions {
    /// Stop when the inner/outer gap (in range-normalized units) is below this.
    pub gap_tol: f64,
    pub max_queries: usize,
    /// Weight count for fronts with four objectives.
    pub grid_size: usize,
}

impl Default for FrontOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-6, max_queries: 500, grid_size: 512 }
    }
}

/// A deterministic Pareto-optimal policy and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontVertex {
    /// Objective values in natural signs, ordered as the objective list.
    pub values: Vec<f64>,
    /// Expected totals of every cost entry of the MDP.
    pub costs: Vec<f64>,
    /// Normalized weight at which the vertex was found.
    pub weight: Vec<f64>,
    /// Chosen action label per state id.
    pub actions: Vec<String>,
}

impl FrontVertex {
    pub fn policy(&self, mdp: &BeliefMdp) -> Result<Policy> {
        policy_from_labels(mdp, &self.actions)
    }
}

pub fn policy_from_labels(mdp: &BeliefMdp, labels: &[String]) -> Result<Policy> {
    if labels.len() != mdp.states.len() {
        return Err(Error::InvalidPolicy("label list does not cover the MDP".into()));
    }
    let choice = mdp
        .states
        .iter()
        .zip(labels)
        .map(|(s, l)| {
            s.actions
                .iter()
                .position(|a| &a.label == l)
                .ok_or_else(|| Error::InvalidPolicy(format!("state {} has no action {l:?}", s.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Policy::deterministic(mdp, &choice))
}

/// Supporting hyperplane `Σ coeffs_o·value_o ≤ support` of the achievable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub coeffs: Vec<f64>,
    pub support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub objectives: ObjectiveSpec,
    pub names: Vec<String>,
    pub cost_names: Vec<String>,
    pub vertices: Vec<FrontVertex>,
    pub facets: Vec<Facet>,
    pub refinement_gap: f64,
    pub queries: usize,
}

struct Solver<'a> {
    mdp: &'a BeliefMdp,
    spec: &'a ObjectiveSpec,
    signs: Vec<f64>,
    scale: Vec<f64>,
    /// Scaled signed points (all objectives maximized).
    points: Vec<Vec<f64>>,
    vertices: Vec<FrontVertex>,
    /// Queried scaled weights and their optimal scaled values.
    queried: Vec<(Vec<f64>, f64)>,
}

impl<'a> Solver<'a> {
    fn k(&self) -> usize {
        self.spec.len()
    }

    /// Lexicographic query: scaled weight `w` first, then each objective.
    fn query(&mut self, w: &[f64]) -> Result<f64> {
        let k = self.k();
        let mut levels = vec![(0..k).map(|o| w[o] * self.signs[o] / self.scale[o]).collect::<Vec<_>>()];
        for o in 0..k {
            let mut e = vec![0.0; k];
            e[o] = self.signs[o];
            levels.push(e);
        }
        let choice = lex_choice(self.mdp, &self.spec.objectives, &levels)?;
        let policy = Policy::deterministic(self.mdp, &choice);
        let values = evaluate_policy(self.mdp, &policy, self.spec)?;
        let y: Vec<f64> = (0..k).map(|o| values[o] * self.signs[o] / self.scale[o]).collect();
        let support = dot(w, &y);
        self.queried.push((w.to_vec(), support));
        let duplicate = self.vertices.iter().any(|v| same_point(&v.values, &values));
        if !duplicate {
            let all_costs: Vec<Objective> = (0..self.mdp.cost_names.len()).map(Objective::Cost).collect();
            let costs = if all_costs.is_empty() {
                Vec::new()
            } else {
                state_values(self.mdp, &policy, &all_costs)?[self.mdp.initial].clone()
            };
            let actions = self.mdp.states.iter().zip(&choice).map(|(s, &c)| s.actions[c].label.clone()).collect();
            self.vertices.push(FrontVertex { values, costs, weight: w.to_vec(), actions });
            self.points.push(y);
        }
        Ok(support)
    }

    fn inner_value(&self, w: &[f64]) -> f64 {
        self.points.iter().map(|p| dot(w, p)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Upper bound on the optimal scalarized value at `w` from the queried
    /// supporting hyperplanes.
    fn outer_value(&self, w: &[f64]) -> Result<f64> {
        let k = self.k();
        let mut lp = LinearProgram::new(2 * k);
        for o in 0..k {
            lp.objective[o] = w[o];
            lp.objective[k + o] = -w[o];
        }
        for (q, b) in &self.queried {
            let mut row = vec![0.0; 2 * k];
            for o in 0..k {
                row[o] = q[o];
                row[k + o] = -q[o];
            }
            lp.add_row(row, Cmp::Le, *b);
        }
        match lp.solve()? {
            LpOutcome::Optimal { value, .. } => Ok(value),
            _ => Err(Error::Numerical("outer bound LP failed".into())),
        }
    }

    fn gap(&self, w: &[f64]) -> Result<f64> {
        Ok((self.outer_value(w)? - self.inner_value(w)).max(0.0))
    }

    fn was_queried(&self, w: &[f64]) -> bool {
        self.queried.iter().any(|(q, _)| q.iter().zip(w).all(|(a, b)| (a - b).abs() < 1e-9))
    }

    /// Vertices of the upper envelope `max_p w·p` over the weight simplex.
    fn corner_weights(&self) -> Vec<Vec<f64>> {
        let k = self.k();
        let n_p = self.points.len();
        // Constraint ids: 0..k are `w_o = 0`, k.. are `u = w·p`.
        let total = k + n_p;
        let mut corners: Vec<Vec<f64>> = Vec::new();
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            if idx.iter().any(|&c| c >= k) {
                if let Some(w) = self.solve_corner(&idx) {
                    if !corners.iter().any(|c| c.iter().zip(&w).all(|(a, b)| (a - b).abs() < 1e-9)) {
                        corners.push(w);
                    }
                }
            }
            // Next combination of k ids from 0..total.
            let mut pos = k;
            while pos > 0 && idx[pos - 1] == total - k + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            idx[pos - 1] += 1;
            for t in pos..k {
                idx[t] = idx[t - 1] + 1;
            }
        }
        corners
    }

    fn solve_corner(&self, active: &[usize]) -> Option<Vec<f64>> {
        let k = self.k();
        let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
        let mut b = DVector::<f64>::zeros(k + 1);
        for o in 0..k {
            a[(0, o)] = 1.0;
        }
        b[0] = 1.0;
        for (r, &c) in active.iter().enumerate() {
            if c < k {
                a[(r + 1, c)] = 1.0;
            } else {
                let p = &self.points[c - k];
                for o in 0..k {
                    a[(r + 1, o)] = p[o];
                }
                a[(r + 1, k)] = -1.0;
            }
        }
        let lu = a.lu();
        let sol = lu.solve(&b)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let w: Vec<f64> = sol.iter().take(k).copied().collect();
        if w.iter().any(|&x| x < -1e-10) {
            return None;
        }
        let u = sol[k];
        if self.inner_value(&w) > u + 1e-9 * u.abs().max(1.0) {
            return None;
        }
        let total: f64 = w.iter().map(|x| x.max(0.0)).sum();
        Some(w.iter().map(|x| x.max(0.0) / total).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
}

/// Computes the vertices of the convex Pareto front.
pub fn compute_front(mdp: &BeliefMdp, spec: &ObjectiveSpec, opts: &FrontOptions) -> Result<ParetoFront> {
    spec.validate(mdp.cost_names.len())?;
    let k = spec.len();
    if k > 4 {
        return Err(Error::InvalidInput("at most four objectives are supported".into()));
    }
    mdp.topological_order()?;
    let signs = spec.signs();
    let mut solver = Solver {
        mdp,
        spec,
        signs: signs.clone(),
        scale: vec![1.0; k],
        points: Vec::new(),
        vertices: Vec::new(),
        queried: Vec::new(),
    };
    // Extreme points fix the normalization of every objective.
    for o in 0..k {
        let mut e = vec![0.0; k];
        e[o] = 1.0;
        solver.query(&e)?;
    }
    for o in 0..k {
        let vals: Vec<f64> = solver.vertices.iter().map(|v| v.values[o]).collect();
        let range = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - vals.iter().cloned().fold(f64::INFINITY, f64::min);
        solver.scale[o] = if range > 1e-12 { range } else { 1.0 };
    }
    let rescaled: Vec<Vec<f64>> =
        solver.vertices.iter().map(|v| (0..k).map(|o| v.values[o] * signs[o] / solver.scale[o]).collect()).collect();
    solver.points = rescaled;
    solver.queried = (0..k)
        .map(|o| {
            let mut e = vec![0.0; k];
            e[o] = 1.0;
            let b = solver.inner_value(&e);
            (e, b)
        })
        .collect();

    let mut gap = 0.0;
    if k <= 3 {
        loop {
            let mut best: Option<(Vec<f64>, f64)> = None;
            for c in solver.corner_weights() {
                if solver.was_queried(&c) {
                    continue;
                }
                let g = solver.gap(&c)?;
                if best.as_ref().is_none_or(|(_, bg)| g > *bg) {
                    best = Some((c, g));
                }
            }
            let Some((w, g)) = best else {
                gap = 0.0;
                break;
            };
            gap = g;
            if g < opts.gap_tol || solver.queried.len() >= opts.max_queries {
                break;
            }
            solver.query(&w)?;
        }
    } else {
        for w in simplex_grid(k, opts.grid_size.min(opts.max_queries), 0) {
            solver.query(&w)?;
        }
        for w in simplex_grid(k, 128, opts.grid_size + 7) {
            gap = f64::max(gap, solver.gap(&w)?);
        }
    }

    let keep = nondominated(&solver.points)?;
    let mut vertices: Vec<FrontVertex> =
        solver.vertices.iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| v.clone()).collect();
    vertices.sort_by(|a, b| {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let facets = solver
        .queried
        .iter()
        .map(|(w, b)| Facet { coeffs: (0..k).map(|o| w[o] * signs[o] / solver.scale[o]).collect(), support: *b })
        .collect();
    Ok(ParetoFront {
        objectives: spec.clone(),
        names: spec.names(mdp),
        cost_names: mdp.cost_names.clone(),
        vertices,
        facets,
        refinement_gap: gap,
        queries: solver.queried.len(),
    })
}

/// Flags points not dominated by any convex combination of the others.
fn nondominated(points: &[Vec<f64>]) -> Result<Vec<bool>> {
    let n = points.len();
    let mut keep = vec![true; n];
    if n <= 1 {
        return Ok(keep);
    }
    let k = points[0].len();
    for v in 0..n {
        let others: Vec<usize> = (0..n).filter(|&q| q != v).collect();
        let mut lp = LinearProgram::new(others.len());
        for (c, &q) in others.iter().enumerate() {
            lp.objective[c] = points[q].iter().sum();
        }
        lp.add_row(vec![1.0; others.len()], Cmp::Eq, 1.0);
        for o in 0..k {
            lp.add_row(others.iter().map(|&q| points[q][o]).collect(), Cmp::Ge, points[v][o]);
        }
        if let LpOutcome::Optimal { value, .. } = lp.solve()? {
            if value - points[v].iter().sum::<f64>() > 1e-9 {
                keep[v] = false;
            }
        }
    }
    Ok(keep)
}

/// Quasi-random weights on the simplex (Halton digits, sorted spacings).
pub fn simplex_grid(k: usize, count: usize, offset: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 4] = [2, 3, 5, 7];
    (0..count)
        .map(|n| {
            let idx = (n + offset + 1) as u64;
            let mut cuts: Vec<f64> = (0..k - 1).map(|d| radical_inverse(idx, PRIMES[d])).collect();
            cuts.sort_by(f64::total_cmp);
            let mut w = Vec::with_capacity(k);
            let mut prev = 0.0;
            for c in cuts {
                w.push(c - prev);
                prev = c;
            }
            w.push(1.0 - prev);
            w
        })
        .collect()
}

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut x = 0.0;
    while n > 0 {
        x += (n % base) as f64 * inv;
        n /= base;
        inv /= base as f64;
    }
    x
}
