use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use locsched::abstraction::MdpDocument;
use locsched::document::{read_json, write_json};
use locsched::pareto::FrontDocument;
use locsched::schedule::{ScheduleDocument, ScheduleSource};
use locsched::sim::SimulationDocument;

const ONE_WAYPOINT: &str = r#"
name = "one"
waypoints = [[2.0, 0.0]]

[workspace]
bounds = { min = [-1.0, -2.0], max = [4.0, 2.0] }
target = { circle = { center = [2.0, 0.0], radius = 0.4 } }
obstacles = [{ rect = { min = [0.5, 0.5], max = [1.5, 2.0] } }]

[dynamics]
kind = "linear_drift"
initial_state = [0.0, 0.0]

[noise]
sigma_w = 0.05
sigma_od = 0.2
sigma_lo = 0.03

[sensors]
odometry_rate = 20.0
localization_rate = 10.0

[controller]
gain = 1.0

[resources]
p_on = 8.0
p_base = 42.0
t_boot = 5.0
e_boot = 40.0
"#;

const LINE: &str = r#"
name = "line"
waypoints = [[1.5, 0.0], [3.0, 0.0], [4.5, 0.0], [6.0, 0.0]]

[workspace]
bounds = { min = [-1.0, -2.0], max = [7.0, 2.0] }
target = { circle = { center = [6.0, 0.0], radius = 0.3 } }
obstacles = [{ rect = { min = [2.0, 0.3], max = [4.0, 2.0] } }]

[dynamics]
kind = "linear_drift"
initial_state = [0.0, 0.0]

[noise]
sigma_w = 0.07
sigma_od = 0.2
sigma_lo = 0.03

[sensors]
odometry_rate = 20.0
localization_rate = 16.0

[controller]
gain = 1.0

[resources]
p_on = 8.0
p_base = 42.0
t_boot = 1.0
e_boot = 8.0
"#;

fn locsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locsched")).args(args).env("RUST_LOG", "warn").output().expect("spawn")
}

fn ok(args: &[&str]) {
    let out = locsched(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(scenario: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("scenario.toml"), scenario).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn abstract_mdp(&self, out: &str, seed: &str) {
        ok(&["abstract", "--scenario", p(&self.path("scenario.toml")), "--particles", "200", "--seed", seed, "--out", p(&self.path(out))]);
    }

    fn pareto(&self, mdp: &str, out: &str) {
        ok(&["pareto", "--mdp", p(&self.path(mdp)), "--out", p(&self.path(out))]);
    }
}

#[test]
fn minimal_scenario_has_six_states_and_is_reproducible() {
    let f = Fixture::new(ONE_WAYPOINT);
    f.abstract_mdp("a.json", "3");
    f.abstract_mdp("b.json", "3");
    let doc: MdpDocument = read_json(&f.path("a.json")).unwrap();
    assert_eq!(doc.mdp.states.len(), 6);
    assert_eq!(doc.format_version, 1);
    assert_eq!(doc.provenance.seed, Some(3));
    assert_eq!(doc.provenance.particles, Some(200));
    assert_eq!(std::fs::read(f.path("a.json")).unwrap(), std::fs::read(f.path("b.json")).unwrap());
}

#[test]
fn schema_violations_fail_with_location() {
    let f = Fixture::new(&LINE.replace("gain = 1.0", "gain = 1.0\nbogus = 2"));
    let out = locsched(&["abstract", "--scenario", p(&f.path("scenario.toml")), "--out", p(&f.path("m.json"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("line"), "{err}");
    assert!(!f.path("m.json").exists());
}

#[test]
fn single_policy_mdp_gives_single_vertex() {
    let f = Fixture::new(LINE);
    f.abstract_mdp("mdp.json", "1");
    let mut doc: MdpDocument = read_json(&f.path("mdp.json")).unwrap();
    for s in &mut doc.mdp.states {
        s.actions.truncate(1);
    }
    write_json(&f.path("single.json"), &doc).unwrap();
    f.pareto("single.json", "front.json");
    let csv = std::fs::read_to_string(f.path("front.csv")).unwrap();
    let vertex_rows: Vec<&str> = csv.lines().skip(1).filter(|l| !l.starts_with("always_")).collect();
    assert_eq!(vertex_rows.len(), 1, "{csv}");
}

#[test]
fn full_pipeline_with_provenance_chain() {
    let f = Fixture::new(LINE);
    f.abstract_mdp("mdp.json", "1");
    f.pareto("mdp.json", "front.json");
    let front: FrontDocument = read_json(&f.path("front.json")).unwrap();
    let mdp: MdpDocument = read_json(&f.path("mdp.json")).unwrap();
    assert_eq!(front.mdp_hash, locsched::document::content_hash(&mdp).unwrap());
    assert_eq!(front.provenance.parameters["objectives"], "ptarg,pcoll,energy");
    assert!(!front.front.vertices.is_empty());

    ok(&["synthesize", "--mdp", p(&f.path("mdp.json")), "--front", p(&f.path("front.json")), "--point", "1", "--out", p(&f.path("v.json"))]);
    let v: ScheduleDocument = read_json(&f.path("v.json")).unwrap();
    assert_eq!(v.source, ScheduleSource::Vertex { index: 0 });
    assert_eq!(v.values, front.front.vertices[0].values);

    ok(&["synthesize", "--mdp", p(&f.path("mdp.json")), "--front", p(&f.path("front.json")), "--point", "always_on", "--out", p(&f.path("on.json"))]);
    ok(&[
        "simulate", "--scenario", p(&f.path("scenario.toml")), "--schedule", p(&f.path("on.json")), "--runs", "100",
        "--seed", "4", "--out", p(&f.path("sim.json")), "--svg", p(&f.path("sim.svg")), "--traces", p(&f.path("t.csv")),
    ]);
    let sim: SimulationDocument = read_json(&f.path("sim.json")).unwrap();
    assert_eq!(sim.report.runs, 100);
    assert_eq!(sim.infeasible_runs, 0);
    assert_eq!(sim.provenance.seed, Some(4));
    assert!(sim.report.failures(0.05, 0.05).is_empty(), "{:?}", sim.report.objectives);
    let svg = std::fs::read_to_string(f.path("sim.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let traces = std::fs::read_to_string(f.path("t.csv")).unwrap();
    assert!(traces.starts_with("run,t,x,y,est_x,est_y,cov_trace,status"));
}

#[test]
fn unachievable_point_reports_nearest() {
    let f = Fixture::new(LINE);
    f.abstract_mdp("mdp.json", "1");
    f.pareto("mdp.json", "front.json");
    let out = locsched(&[
        "synthesize", "--mdp", p(&f.path("mdp.json")), "--front", p(&f.path("front.json")), "--point",
        "ptarg>=1,energy<=1", "--out", p(&f.path("s.json")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nearest achievable point") && err.contains("ptarg="), "{err}");
    assert!(!f.path("s.json").exists());
}

#[test]
fn report_savings_and_degenerate_fronts() {
    let f = Fixture::new(LINE);
    f.abstract_mdp("mdp.json", "1");
    f.pareto("mdp.json", "front.json");
    ok(&["report", "--front", p(&f.path("front.json")), "--baseline", "off", "--out", p(&f.path("r.csv"))]);
    let csv = std::fs::read_to_string(f.path("r.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "energy_saved_pct").unwrap();
    let off_row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(off_row[1], "always_off");
    assert_eq!(off_row[col], "0.00");
    assert!(f.path("r.json").exists());

    let mut doc: FrontDocument = read_json(&f.path("front.json")).unwrap();
    doc.front.vertices.clear();
    write_json(&f.path("empty.json"), &doc).unwrap();
    std::fs::write(f.path("blank.json"), "").unwrap();
    for bad in ["empty.json", "blank.json"] {
        let out = locsched(&["report", "--front", p(&f.path(bad)), "--out", p(&f.path("x.csv"))]);
        assert!(!out.status.success());
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let f = Fixture::new(LINE);
    for (threads, out) in [("1", "a.json"), ("3", "b.json")] {
        ok(&["--threads", threads, "abstract", "--scenario", p(&f.path("scenario.toml")), "--particles", "300", "--out", p(&f.path(out))]);
    }
    assert_eq!(std::fs::read(f.path("a.json")).unwrap(), std::fs::read(f.path("b.json")).unwrap());
}
