use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};

use locsched::abstraction::{baseline_policies, build_mdp, BuildOptions, MdpDocument};
use locsched::document::{content_hash, read_json, write_json, Provenance};
use locsched::mdp::{evaluate_policy, ObjectiveSpec};
use locsched::pareto::{
    compute_front, evaluate_baselines, savings_report, synthesize_policy, write_front_csv, FrontDocument, FrontOptions,
    FrontSavings, SavingsDocument, TargetPoint,
};
use locsched::scenario::OBJECTIVE_NAMES;
use locsched::schedule::{check_feasibility, policy_to_schedule, ScheduleDocument, ScheduleSource};
use locsched::sim::{render_svg, validate, write_traces_csv, SimOptions, SimulationDocument, ValidateOptions};
use locsched::{Error, Scenario};

/// Probability allowance and relative cost tolerance used to flag
/// simulation/abstraction disagreement.
const PROB_ALLOWANCE: f64 = 0.05;
const COST_REL_TOL: f64 = 0.05;
const SVG_RUNS: usize = 100;

fn load_mdp(path: &Path) -> Result<MdpDocument> {
    let doc: MdpDocument = read_json(path)?;
    doc.check().with_context(|| format!("checking {}", path.display()))?;
    Ok(doc)
}

fn load_front(path: &Path) -> Result<FrontDocument> {
    let doc: FrontDocument = read_json(path)?;
    doc.check().with_context(|| format!("checking {}", path.display()))?;
    Ok(doc)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn abstract_mdp(scenario: &Path, particles: usize, seed: u64, out: &Path) -> Result<()> {
    let sc = Scenario::load(scenario)?;
    let opts = BuildOptions { particles, seed };
    let start = Instant::now();
    let mdp = build_mdp(&sc, &opts)?;
    info!(
        "{}: {} states, {} state-action pairs in {:.1} s",
        sc.name,
        mdp.states.len(),
        mdp.state_action_pairs(),
        start.elapsed().as_secs_f64()
    );
    write_json(out, &MdpDocument::new(&sc, &opts, mdp))?;
    Ok(())
}

fn parse_objectives(list: &str) -> Result<Vec<String>> {
    let names: Vec<String> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
    for n in &names {
        if !OBJECTIVE_NAMES.contains(&n.as_str()) {
            bail!("unknown objective {n:?}; expected one of {}", OBJECTIVE_NAMES.join(", "));
        }
    }
    if names.len() < 2 {
        bail!("at least two objectives are required");
    }
    Ok(names)
}

pub fn pareto(mdp_path: &Path, objectives: &str, gap_tol: f64, max_queries: usize, out: &Path, csv: &Path) -> Result<()> {
    let doc = load_mdp(mdp_path)?;
    let names = parse_objectives(objectives)?;
    let spec = ObjectiveSpec::parse(&names, &doc.mdp.cost_names)?;
    let opts = FrontOptions { gap_tol, max_queries, ..Default::default() };
    let start = Instant::now();
    let front = compute_front(&doc.mdp, &spec, &opts)?;
    info!(
        "{} vertices after {} queries, gap {:.2e}, in {:.1} s",
        front.vertices.len(),
        front.queries,
        front.refinement_gap,
        start.elapsed().as_secs_f64()
    );
    let baselines = evaluate_baselines(&doc.mdp, &spec)?;
    let mdp_hash = content_hash(&doc)?;
    let provenance = Provenance { parent_hash: Some(mdp_hash.clone()), ..doc.provenance.clone() }
        .with_parameter("objectives", names.join(","))
        .with_parameter("gap_tol", gap_tol)
        .with_parameter("max_queries", max_queries);
    let front_doc = FrontDocument::new(provenance, mdp_hash, gap_tol, front, baselines);
    write_json(out, &front_doc)?;
    write_front_csv(create(csv)?, &front_doc.front, &front_doc.baselines, front_doc.baselines.first())?;
    Ok(())
}

pub fn synthesize(mdp_path: &Path, front_path: &Path, point: &str, out: &Path) -> Result<()> {
    let mdp_doc = load_mdp(mdp_path)?;
    let front_doc = load_front(front_path)?;
    let mdp_hash = content_hash(&mdp_doc)?;
    if front_doc.mdp_hash != mdp_hash {
        bail!("{} was computed from a different MDP file", front_path.display());
    }
    let mdp = &mdp_doc.mdp;
    let front = &front_doc.front;
    let spec = &front.objectives;
    let point = point.trim();
    let (source, policy, values) = if let Ok(k) = point.parse::<usize>() {
        let v = k
            .checked_sub(1)
            .and_then(|i| front.vertices.get(i))
            .with_context(|| format!("vertex {k} does not exist; the front has {} vertices", front.vertices.len()))?;
        (ScheduleSource::Vertex { index: k - 1 }, v.policy(mdp)?, v.values.clone())
    } else if let Some((name, p)) = baseline_policies(mdp).into_iter().find(|(n, _)| n == point) {
        let values = evaluate_policy(mdp, &p, spec)?;
        (ScheduleSource::Baseline { name }, p, values)
    } else {
        let target = TargetPoint::parse(point, spec, mdp)?;
        match synthesize_policy(mdp, spec, &target) {
            Ok((p, values)) => (ScheduleSource::Target { point: point.to_string() }, p, values),
            Err(Error::Unachievable { nearest }) => {
                let listed: Vec<String> = front.names.iter().zip(&nearest).map(|(n, v)| format!("{n}={v:.6}")).collect();
                bail!("point {point:?} is not achievable; nearest achievable point: {}", listed.join(", "));
            }
            Err(e) => return Err(e.into()),
        }
    };
    let schedule = policy_to_schedule(&policy, mdp)?;
    info!("schedule covers {} nodes; values {:?}", schedule.nodes.len(), values);
    let provenance = Provenance { parent_hash: Some(content_hash(&front_doc)?), ..front_doc.provenance.clone() }
        .with_parameter("point", point);
    let doc = ScheduleDocument::new(provenance, source, mdp_hash, front.names.clone(), values, schedule);
    write_json(out, &doc)?;
    Ok(())
}

pub struct SimulateArgs {
    pub runs: usize,
    pub seed: u64,
    pub presample: bool,
    pub svg: Option<PathBuf>,
    pub traces: Option<PathBuf>,
}

pub fn simulate(scenario: &Path, schedule: &Path, out: &Path, args: &SimulateArgs) -> Result<()> {
    let sc = Scenario::load(scenario)?;
    let sdoc: ScheduleDocument = read_json(schedule)?;
    sdoc.check().with_context(|| format!("checking {}", schedule.display()))?;
    if sdoc.provenance.scenario_hash != sc.hash() {
        warn!("schedule was synthesized for a different version of scenario {:?}", sdoc.provenance.scenario);
    }
    let record_trace = args.svg.is_some() || args.traces.is_some();
    let opts = ValidateOptions {
        runs: args.runs,
        seed: args.seed,
        sim: SimOptions { presample: args.presample, record_trace, ..Default::default() },
    };
    let start = Instant::now();
    let (report, records) = validate(&sc, &sdoc.schedule, &sdoc.objectives, &sdoc.values, &opts)?;
    info!("{} runs in {:.1} s", records.len(), start.elapsed().as_secs_f64());
    for check in &report.objectives {
        info!(
            "{}: empirical {:.6} ± {:.6}, theoretical {:.6}",
            check.name, check.empirical, check.half_width, check.theoretical
        );
    }
    for f in report.failures(PROB_ALLOWANCE, COST_REL_TOL) {
        warn!("outside tolerance: {f}");
    }
    let infeasible = records.iter().filter(|r| !check_feasibility(&r.actions, sc.resources.t_boot).is_empty()).count();
    if infeasible > 0 {
        warn!("{infeasible} runs produced infeasible localization traces");
    }
    let schedule_hash = content_hash(&sdoc)?;
    let mut provenance = Provenance::new(&sc)
        .with_parameter("runs", args.runs)
        .with_parameter("presample", args.presample);
    provenance.seed = Some(args.seed);
    provenance.parent_hash = Some(schedule_hash.clone());
    write_json(out, &SimulationDocument::new(provenance, schedule_hash, args.presample, report, infeasible))?;
    if let Some(path) = &args.traces {
        write_traces_csv(create(path)?, &records)?;
    }
    if let Some(path) = &args.svg {
        let shown = &records[..records.len().min(SVG_RUNS)];
        std::fs::write(path, render_svg(&sc.workspace, &sc.waypoints, shown))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn report(fronts: &[PathBuf], baseline: &str, out: &Path) -> Result<()> {
    let json = out.with_extension("json");
    if json == out {
        bail!("report output {} must not be a .json file", out.display());
    }
    let mut sections = Vec::with_capacity(fronts.len());
    for path in fronts {
        let doc = load_front(path)?;
        if doc.front.vertices.is_empty() {
            bail!("{} contains no front vertices", path.display());
        }
        let b = doc.baseline(baseline)?.clone();
        let rows = savings_report(&doc.front, &b)?;
        sections.push(FrontSavings {
            provenance: doc.provenance.clone(),
            front_hash: content_hash(&doc)?,
            names: doc.front.names.clone(),
            cost_names: doc.front.cost_names.clone(),
            baseline: b,
            rows,
        });
    }
    let first = &sections[0];
    if sections.iter().any(|s| s.names != first.names || s.cost_names != first.cost_names) {
        bail!("fronts use different objectives and cannot share one table");
    }

    let mut w = csv::Writer::from_writer(create(out)?);
    let mut header = vec!["scenario".to_string(), "point".to_string()];
    header.extend(first.names.iter().cloned());
    header.extend(first.cost_names.iter().map(|c| format!("total_{c}")));
    header.extend(first.cost_names.iter().map(|c| format!("{c}_saved_pct")));
    w.write_record(&header)?;
    let fmt = |x: f64| format!("{x:.6}");
    let pct = |s: Option<f64>| s.map(|x| format!("{x:.2}")).unwrap_or_default();
    for s in &sections {
        let scenario = &s.provenance.scenario;
        let mut rec = vec![scenario.clone(), s.baseline.name.clone()];
        rec.extend(s.baseline.values.iter().map(|&x| fmt(x)));
        rec.extend(s.baseline.costs.iter().map(|&x| fmt(x)));
        rec.extend(s.baseline.costs.iter().map(|&c| pct(locsched::pareto::savings_percent(c, c))));
        w.write_record(&rec)?;
        for r in &s.rows {
            let mut rec = vec![scenario.clone(), (r.vertex + 1).to_string()];
            rec.extend(r.values.iter().map(|&x| fmt(x)));
            rec.extend(r.costs.iter().map(|&x| fmt(x)));
            rec.extend(r.saved.iter().map(|&x| pct(x)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    write_json(&json, &SavingsDocument::new(baseline, sections))?;
    Ok(())
}
