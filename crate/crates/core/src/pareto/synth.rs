//! Randomized policy synthesis through the occupation-measure LP.

use serde::{Deserialize, Serialize};

use super::front::{compute_front, FrontOptions, ParetoFront};
use super::simplex::{Cmp, LinearProgram, LpOutcome};
use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy, BeliefMdp, Objective, ObjectiveSpec, Policy, Sense};

/// Per-objective bounds: `≥` for maximized objectives, `≤` for minimized ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub bounds: Vec<Option<f64>>,
}

impl TargetPoint {
    pub fn new(bounds: Vec<Option<f64>>) -> Self {
        Self { bounds }
    }

    /// Parses `name>=v,name<=v,...`. Names must belong to `spec`; the
    /// comparison has to match the objective's sense.
    pub fn parse(expr: &str, spec: &ObjectiveSpec, mdp: &BeliefMdp) -> Result<Self> {
        let names = spec.names(mdp);
        let mut bounds = vec![None; spec.len()];
        for part in expr.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, cmp, value) = if let Some((n, v)) = part.split_once(">=") {
                (n, Sense::Maximize, v)
            } else if let Some((n, v)) = part.split_once("<=") {
                (n, Sense::Minimize, v)
            } else {
                return Err(Error::InvalidInput(format!("bound {part:?} needs >= or <=")));
            };
            let name = name.trim();
            let k = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidInput(format!("{name:?} is not a selected objective")))?;
            if spec.objectives[k].sense() != cmp {
                return Err(Error::InvalidInput(format!("bound on {name:?} points the wrong way")));
            }
            let v: f64 =
                value.trim().parse().map_err(|_| Error::InvalidInput(format!("bad number in {part:?}")))?;
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("bound on {name:?} is not finite")));
            }
            bounds[k] = Some(v);
        }
        let point = Self { bounds };
        point.validate(spec)?;
        Ok(point)
    }

    pub fn validate(&self, spec: &ObjectiveSpec) -> Result<()> {
        if self.bounds.len() != spec.len() {
            return Err(Error::InvalidInput("bound list does not match the objectives".into()));
        }
        if self.bounds.iter().all(Option::is_none) {
            return Err(Error::InvalidInput("at least one bound is required".into()));
        }
        Ok(())
    }

    pub fn satisfied_by(&self, spec: &ObjectiveSpec, values: &[f64], tol: f64) -> bool {
        self.bounds.iter().zip(&spec.objectives).zip(values).all(|((b, o), v)| match b {
            Some(b) => o.sign() * (v - b) >= -tol,
            None => true,
        })
    }
}

/// Linear functional of objective `o` over the occupation measure.
fn functional(mdp: &BeliefMdp, vars: &[(usize, usize)], o: Objective) -> Vec<f64> {
    vars.iter()
        .map(|&(s, a)| {
            let act = &mdp.states[s].actions[a];
            o.reward(act) + act.transitions.iter().map(|&(t, p)| p * o.terminal(mdp.states[t].role)).sum::<f64>()
        })
        .collect()
}

/// Finds a randomized policy meeting every bound of `point`; unbounded
/// objectives are then optimized in turn, cost objectives first.
pub fn synthesize_policy(mdp: &BeliefMdp, spec: &ObjectiveSpec, point: &TargetPoint) -> Result<(Policy, Vec<f64>)> {
    spec.validate(mdp.cost_names.len())?;
    point.validate(spec)?;
    mdp.topological_order()?;
    let initial_absorbing = mdp.states[mdp.initial].role.is_absorbing();

    let transient: Vec<usize> = mdp.states.iter().filter(|s| !s.role.is_absorbing()).map(|s| s.id).collect();
    let mut row_of = vec![usize::MAX; mdp.states.len()];
    for (r, &s) in transient.iter().enumerate() {
        row_of[s] = r;
    }
    let vars: Vec<(usize, usize)> =
        transient.iter().flat_map(|&s| (0..mdp.states[s].actions.len()).map(move |a| (s, a))).collect();
    let n = vars.len();

    let mut lp = LinearProgram::new(n);
    if !initial_absorbing {
        let mut flow = vec![vec![0.0; n]; transient.len()];
        for (c, &(s, a)) in vars.iter().enumerate() {
            flow[row_of[s]][c] += 1.0;
            for &(t, p) in &mdp.states[s].actions[a].transitions {
                if row_of[t] != usize::MAX {
                    flow[row_of[t]][c] -= p;
                }
            }
        }
        for (r, row) in flow.into_iter().enumerate() {
            lp.add_row(row, Cmp::Eq, if transient[r] == mdp.initial { 1.0 } else { 0.0 });
        }
    }
    let fns: Vec<Vec<f64>> = spec.objectives.iter().map(|&o| functional(mdp, &vars, o)).collect();
    for (k, b) in point.bounds.iter().enumerate() {
        if let Some(b) = *b {
            let sign = spec.objectives[k].sign();
            let relax = (1e-9 * b.abs().max(1.0)).min(1e-7);
            lp.add_row(fns[k].iter().map(|c| sign * c).collect(), Cmp::Ge, sign * b - relax);
        }
    }

    let mut free: Vec<usize> = (0..spec.len()).filter(|&k| point.bounds[k].is_none()).collect();
    free.sort_by_key(|&k| spec.objectives[k].is_probability());

    let infeasible = || -> Result<(Policy, Vec<f64>)> {
        let front = compute_front(mdp, spec, &FrontOptions::default())?;
        Err(Error::Unachievable { nearest: nearest_point(&front, point) })
    };

    let mut x = match lp.solve()? {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Infeasible => return infeasible(),
        LpOutcome::Unbounded => return Err(Error::Numerical("occupation LP is unbounded".into())),
    };
    for &k in &free {
        let sign = spec.objectives[k].sign();
        lp.objective = fns[k].iter().map(|c| sign * c).collect();
        match lp.solve()? {
            LpOutcome::Optimal { x: xk, value } => {
                x = xk;
                lp.objective = vec![0.0; n];
                lp.add_row(fns[k].iter().map(|c| sign * c).collect(), Cmp::Ge, value - 1e-9 * value.abs().max(1.0));
            }
            LpOutcome::Infeasible => return infeasible(),
            LpOutcome::Unbounded => return Err(Error::Numerical("occupation LP is unbounded".into())),
        }
    }

    let mut dist: Vec<Vec<f64>> = mdp
        .states
        .iter()
        .map(|s| {
            let mut d = vec![0.0; s.actions.len()];
            d[0] = 1.0;
            d
        })
        .collect();
    let mut c = 0;
    for &s in &transient {
        let m = mdp.states[s].actions.len();
        let y: Vec<f64> = x[c..c + m].iter().map(|v| v.max(0.0)).collect();
        c += m;
        let total: f64 = y.iter().sum();
        if total > 1e-12 {
            let mut d: Vec<f64> = y.iter().map(|v| v / total).collect();
            let sum: f64 = d.iter().sum();
            d.iter_mut().for_each(|p| *p /= sum);
            dist[s] = d;
        }
    }
    let policy = Policy { dist };
    let values = evaluate_policy(mdp, &policy, spec)?;
    if !point.satisfied_by(spec, &values, 1e-6) {
        return Err(Error::Numerical(format!("synthesized policy misses its bounds: {values:?}")));
    }
    Ok((policy, values))
}

/// Achievable point (convex combination of front vertices) closest to
/// satisfying `point`, by Frank-Wolfe on the squared bound shortfall.
pub fn nearest_point(front: &ParetoFront, point: &TargetPoint) -> Vec<f64> {
    let verts: Vec<&Vec<f64>> = front.vertices.iter().map(|v| &v.values).collect();
    if verts.is_empty() {
        return Vec::new();
    }
    let k = verts[0].len();
    let signs = front.objectives.signs();
    let shortfall = |y: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|o| match point.bounds.get(o).copied().flatten() {
                Some(b) => (signs[o] * (b - y[o])).max(0.0),
                None => 0.0,
            })
            .collect()
    };
    let f = |y: &[f64]| shortfall(y).iter().map(|g| g * g).sum::<f64>();
    let mix = |lam: &[f64]| -> Vec<f64> {
        (0..k).map(|o| lam.iter().zip(&verts).map(|(l, v)| l * v[o]).sum()).collect()
    };
    let start = (0..verts.len()).min_by(|&a, &b| f(verts[a]).total_cmp(&f(verts[b]))).unwrap_or(0);
    let mut lam = vec![0.0; verts.len()];
    lam[start] = 1.0;
    for _ in 0..2000 {
        let y = mix(&lam);
        let g = shortfall(&y);
        // ∇f = -2·sign·g per objective.
        let grad: Vec<f64> = (0..k).map(|o| -2.0 * signs[o] * g[o]).collect();
        let score = |v: &Vec<f64>| -> f64 { grad.iter().zip(v).map(|(a, b)| a * b).sum() };
        let best = (0..verts.len()).min_by(|&a, &b| score(verts[a]).total_cmp(&score(verts[b]))).unwrap();
        let current: f64 = grad.iter().zip(&y).map(|(a, b)| a * b).sum();
        if current - score(verts[best]) < 1e-15 {
            break;
        }
        // Golden-section line search toward the chosen vertex.
        let along = |t: f64| -> f64 {
            let z: Vec<f64> = (0..k).map(|o| (1.0 - t) * y[o] + t * verts[best][o]).collect();
            f(&z)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let a = hi - r * (hi - lo);
            let b = lo + r * (hi - lo);
            if along(a) <= along(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let t = 0.5 * (lo + hi);
        if t <= 0.0 {
            break;
        }
        lam.iter_mut().for_each(|l| *l *= 1.0 - t);
        lam[best] += t;
    }
    mix(&lam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::model::fixtures::two_action;

    fn spec3() -> ObjectiveSpec {
        ObjectiveSpec::new(vec![Objective::PTarg, Objective::PColl, Objective::Cost(0)])
    }

    #[test]
    fn mixture_reaches_interior_point() {
        let m = two_action();
        let (p, v) = synthesize_policy(&m, &spec3(), &TargetPoint::new(vec![Some(0.75), None, None])).unwrap();
        assert!((p.dist[0][0] - 0.5).abs() < 1e-6);
        assert!((p.dist[0][1] - 0.5).abs() < 1e-6);
        assert!((v[0] - 0.75).abs() < 1e-6 && (v[1] - 0.25).abs() < 1e-6 && (v[2] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn impossible_probability_reports_projection() {
        let m = two_action();
        let err = synthesize_policy(&m, &spec3(), &TargetPoint::new(vec![Some(1.01), None, None])).unwrap_err();
        match err {
            Error::Unachievable { nearest } => {
                assert!(nearest.iter().zip([1.0, 0.0, 10.0]).all(|(a, b)| (a - b).abs() < 1e-9));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn vertex_bound_returns_vertex() {
        let m = two_action();
        let (p, v) = synthesize_policy(&m, &spec3(), &TargetPoint::new(vec![None, None, Some(2.0)])).unwrap();
        assert!((p.dist[0][1] - 1.0).abs() < 1e-6);
        assert!((v[0] - 0.5).abs() < 1e-6 && (v[2] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn parse_bounds() {
        let m = two_action();
        let t = TargetPoint::parse("ptarg>=0.9, energy<=5", &spec3(), &m).unwrap();
        assert_eq!(t.bounds, vec![Some(0.9), None, Some(5.0)]);
        assert!(TargetPoint::parse("ptarg<=0.9", &spec3(), &m).is_err());
        assert!(TargetPoint::parse("speed>=1", &spec3(), &m).is_err());
        assert!(TargetPoint::parse("", &spec3(), &m).is_err());
    }
}
