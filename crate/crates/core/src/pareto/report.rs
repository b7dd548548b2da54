use std::io::Write;

use serde::{Deserialize, Serialize};

use super::front::ParetoFront;
use crate::abstraction::baseline_policies;
use crate::document::{check_version, Provenance, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy, BeliefMdp, Objective, ObjectiveSpec};

/// Reference schedule values used for savings columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub name: String,
    /// Objective values, ordered as the front's objectives.
    pub values: Vec<f64>,
    /// Every cost entry of the MDP.
    pub costs: Vec<f64>,
}

/// Values of the built-in always-on and always-off schedules.
pub fn evaluate_baselines(mdp: &BeliefMdp, spec: &ObjectiveSpec) -> Result<Vec<Baseline>> {
    let all_costs = ObjectiveSpec::new((0..mdp.cost_names.len()).map(Objective::Cost).collect());
    baseline_policies(mdp)
        .into_iter()
        .map(|(name, p)| {
            Ok(Baseline { name, values: evaluate_policy(mdp, &p, spec)?, costs: evaluate_policy(mdp, &p, &all_costs)? })
        })
        .collect()
}

/// Versioned front file with the baseline evaluations embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontDocument {
    pub format_version: u32,
    pub provenance: Provenance,
    pub mdp_hash: String,
    pub gap_tol: f64,
    pub front: ParetoFront,
    pub baselines: Vec<Baseline>,
}

impl FrontDocument {
    pub fn new(provenance: Provenance, mdp_hash: String, gap_tol: f64, front: ParetoFront, baselines: Vec<Baseline>) -> Self {
        Self { format_version: FORMAT_VERSION, provenance, mdp_hash, gap_tol, front, baselines }
    }

    pub fn check(&self) -> Result<()> {
        check_version(self.format_version, "front file")
    }

    pub fn baseline(&self, name: &str) -> Result<&Baseline> {
        self.baselines
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("front file has no baseline {name:?}")))
    }
}

/// Savings of the vertices of one front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontSavings {
    pub provenance: Provenance,
    pub front_hash: String,
    pub names: Vec<String>,
    pub cost_names: Vec<String>,
    pub baseline: Baseline,
    pub rows: Vec<SavingsRow>,
}

/// Versioned savings report over one or more fronts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavingsDocument {
    pub format_version: u32,
    pub tool_version: String,
    pub baseline: String,
    pub fronts: Vec<FrontSavings>,
}

impl SavingsDocument {
    pub fn new(baseline: &str, fronts: Vec<FrontSavings>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            baseline: baseline.to_string(),
            fronts,
        }
    }

    pub fn check(&self) -> Result<()> {
        check_version(self.format_version, "savings report")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub vertex: usize,
    pub values: Vec<f64>,
    pub costs: Vec<f64>,
    /// Percent saved per cost entry; `None` when the baseline spends nothing.
    pub saved: Vec<Option<f64>>,
}

pub fn savings_percent(baseline: f64, value: f64) -> Option<f64> {
    (baseline.abs() > 1e-12).then(|| 100.0 * (baseline - value) / baseline)
}

pub fn savings_report(front: &ParetoFront, baseline: &Baseline) -> Result<Vec<SavingsRow>> {
    if baseline.costs.len() != front.cost_names.len() {
        return Err(Error::InvalidInput(format!("baseline {:?} does not match the cost entries", baseline.name)));
    }
    Ok(front
        .vertices
        .iter()
        .enumerate()
        .map(|(k, v)| SavingsRow {
            vertex: k,
            values: v.values.clone(),
            costs: v.costs.clone(),
            saved: baseline.costs.iter().zip(&v.costs).map(|(&b, &c)| savings_percent(b, c)).collect(),
        })
        .collect())
}

/// One row per baseline, then one row per vertex with savings relative to
/// `reference`.
pub fn write_front_csv<W: Write>(
    out: W,
    front: &ParetoFront,
    baselines: &[Baseline],
    reference: Option<&Baseline>,
) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["point".to_string()];
    header.extend(front.names.iter().cloned());
    header.extend(front.cost_names.iter().map(|c| format!("total_{c}")));
    if reference.is_some() {
        header.extend(front.cost_names.iter().map(|c| format!("{c}_saved_pct")));
    }
    w.write_record(&header).map_err(csv_err)?;
    let fmt = |x: f64| format!("{x:.6}");
    let blanks = if reference.is_some() { front.cost_names.len() } else { 0 };
    for b in baselines {
        let mut rec = vec![b.name.clone()];
        rec.extend(b.values.iter().map(|&x| fmt(x)));
        rec.extend(b.costs.iter().map(|&x| fmt(x)));
        rec.extend(std::iter::repeat_n(String::new(), blanks));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let rows = match reference {
        Some(r) => savings_report(front, r)?,
        None => front
            .vertices
            .iter()
            .enumerate()
            .map(|(k, v)| SavingsRow { vertex: k, values: v.values.clone(), costs: v.costs.clone(), saved: vec![] })
            .collect(),
    };
    for r in rows {
        let mut rec = vec![format!("{}", r.vertex + 1)];
        rec.extend(r.values.iter().map(|&x| fmt(x)));
        rec.extend(r.costs.iter().map(|&x| fmt(x)));
        rec.extend(r.saved.iter().map(|s| s.map(|x| format!("{x:.2}")).unwrap_or_default()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::model::fixtures::two_action;
    use crate::mdp::{Objective, ObjectiveSpec};
    use crate::pareto::{compute_front, FrontOptions};

    #[test]
    fn percent_saved() {
        let s = savings_percent(21790.20, 5243.21).unwrap();
        assert!((s - 75.94).abs() < 0.005);
        assert!((savings_percent(21790.20, 4502.19).unwrap() - 79.34).abs() < 0.005);
        assert_eq!(savings_percent(10.0, 10.0), Some(0.0));
        assert_eq!(savings_percent(3029.0, 0.0), Some(100.0));
        assert_eq!(savings_percent(0.0, 1.0), None);
    }

    #[test]
    fn csv_has_one_row_per_vertex() {
        let m = two_action();
        let spec = ObjectiveSpec::new(vec![Objective::PTarg, Objective::Cost(0)]);
        let f = compute_front(&m, &spec, &FrontOptions::default()).unwrap();
        let base = Baseline { name: "ref".into(), values: vec![1.0, 10.0], costs: vec![10.0] };
        let mut buf = Vec::new();
        write_front_csv(&mut buf, &f, std::slice::from_ref(&base), Some(&base)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "point,ptarg,energy,total_energy,energy_saved_pct");
        assert!(lines.iter().any(|l| l.ends_with(",80.00")));
    }
}
