//! Monte Carlo execution of the continuous closed loop under a schedule.

mod export;
mod run;
mod validate;

pub use export::{render_svg, write_traces_csv, SimulationDocument};
pub use run::{simulate_mission, Outcome, RunRecord, SimOptions, TracePoint};
pub use validate::{
    run_seed, simulate_batch, summarize, validate, ObjectiveCheck, OutcomeFrequencies, ValidateOptions,
    ValidationReport,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{baseline_policies, build_mdp, BuildOptions};
    use crate::mdp::{evaluate_policy, ObjectiveSpec};
    use crate::schedule::{check_feasibility, policy_to_schedule, Schedule};
    use crate::Scenario;

    const LINE: &str = r#"
name = "line"
waypoints = [[1.5, 0.0], [3.0, 0.0], [4.5, 0.0], [6.0, 0.0]]

[workspace]
bounds = { min = [-1.0, -2.0], max = [7.0, 2.0] }
target = { circle = { center = [6.0, 0.0], radius = 0.3 } }
obstacles = [{ rect = { min = [2.0, 0.35], max = [4.0, 2.0] } }]

[dynamics]
kind = "linear_drift"
initial_state = [0.0, 0.0]

[noise]
sigma_w = 0.05
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

    fn scenario() -> Scenario {
        Scenario::from_toml_str(LINE).unwrap()
    }

    fn schedules(sc: &Scenario) -> Vec<(Schedule, Vec<f64>)> {
        let mdp = build_mdp(sc, &BuildOptions { particles: 300, seed: 4 }).unwrap();
        let spec = ObjectiveSpec::parse(&["ptarg", "pcoll", "energy", "duration"], &mdp.cost_names).unwrap();
        baseline_policies(&mdp)
            .into_iter()
            .map(|(_, p)| (policy_to_schedule(&p, &mdp).unwrap(), evaluate_policy(&mdp, &p, &spec).unwrap()))
            .collect()
    }

    #[test]
    fn noise_free_on_schedule_reaches_target() {
        let mut sc = scenario();
        sc.noise.sigma_w = 0.0;
        sc.noise.sigma_od = 1e-6;
        sc.noise.sigma_lo = 1e-6;
        let (on, _) = schedules(&sc).remove(0);
        let r = simulate_mission(&sc, &on, 3, &SimOptions::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Target);
        let duration = r.cost[2];
        let power = sc.resources.p_base + sc.resources.p_on;
        assert!((r.cost[0] - duration * power).abs() < 1e-9 * r.cost[0]);
        assert!(check_feasibility(&r.actions, sc.resources.t_boot).is_empty());
    }

    struct Blocked<'a>(&'a Schedule);

    impl run::MissionTask for Blocked<'_> {
        type Output = Vec<RunRecord>;
        fn run<const N: usize, D: crate::plant::Dynamics<N> + Clone + Sync>(
            self,
            m: &run::Mission<N, D>,
        ) -> crate::Result<Vec<RunRecord>> {
            let mut cl = m.cl.clone();
            cl.workspace.obstacles = vec![crate::geometry::Shape::rect([0.5, -2.0], [1.0, 2.0])];
            let blocked = run::Mission { cl, plan: m.plan.clone(), resources: m.resources };
            (0..5).map(|seed| blocked.run(self.0, seed, &SimOptions::default())).collect()
        }
    }

    #[test]
    fn blocked_corridor_always_collides() {
        let sc = scenario();
        let (on, _) = schedules(&sc).remove(0);
        for r in run::with_mission(&sc, Blocked(&on)).unwrap() {
            assert_eq!(r.outcome, Outcome::Collision);
            assert_eq!(r.waypoint_times.len(), 1);
        }
    }

    #[test]
    fn runs_are_seed_deterministic_and_traces_end_at_collision() {
        let sc = scenario();
        let (off, _) = schedules(&sc).remove(1);
        let opts = SimOptions { record_trace: true, max_trace_points: 50, ..Default::default() };
        for seed in 0..20 {
            let a = simulate_mission(&sc, &off, seed, &opts).unwrap();
            let b = simulate_mission(&sc, &off, seed, &opts).unwrap();
            assert_eq!(a, b);
            assert!(a.trace.len() <= 50);
            if a.outcome == Outcome::Collision {
                let last = a.trace.last().unwrap();
                assert!((last.t - a.cost[2]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn validation_matches_abstraction() {
        let sc = scenario();
        let names: Vec<String> = ["ptarg", "pcoll", "energy", "duration"].map(String::from).to_vec();
        for (sched, theo) in schedules(&sc) {
            let opts = ValidateOptions { runs: 400, seed: 9, ..Default::default() };
            let (rep, records) = validate(&sc, &sched, &names, &theo, &opts).unwrap();
            let o = rep.outcomes;
            assert_eq!(o.collision + o.target + o.free, 1.0);
            assert!(rep.failures(0.05, 0.05).is_empty(), "{:?}", rep.objectives);
            for r in &records {
                assert!(check_feasibility(&r.actions, sc.resources.t_boot).is_empty());
            }
        }
    }

    #[test]
    fn validation_needs_enough_runs() {
        let sc = scenario();
        let (on, theo) = schedules(&sc).remove(0);
        let opts = ValidateOptions { runs: 10, ..Default::default() };
        assert!(validate(&sc, &on, &["ptarg".into()], &theo[..1], &opts).is_err());
    }
}
