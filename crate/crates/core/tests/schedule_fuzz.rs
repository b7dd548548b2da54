use locsched::abstraction::{build_mdp, BuildOptions};
use locsched::mdp::{BeliefMdp, Policy, ACTION_SBO};
use locsched::schedule::{check_feasibility, policy_to_schedule, LocAction};
use locsched::sim::{simulate_batch, SimOptions};
use locsched::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CORRIDOR: &str = r#"
name = "corridor"
waypoints = [[1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0], [5.0, 0.0], [6.0, 0.0]]

[workspace]
bounds = { min = [-1.0, -2.0], max = [7.0, 2.0] }
target = { circle = { center = [6.0, 0.0], radius = 0.4 } }
obstacles = [{ rect = { min = [2.0, 0.45], max = [4.0, 2.0] } }]

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
t_boot = 1.3
e_boot = 6.0
"#;

fn random_policy(m: &BeliefMdp, rng: &mut ChaCha8Rng, deterministic: bool) -> Policy {
    let dist = m
        .states
        .iter()
        .map(|s| {
            let n = s.actions.len();
            if deterministic {
                let mut d = vec![0.0; n];
                d[rng.random_range(0..n)] = 1.0;
                d
            } else {
                let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect()
            }
        })
        .collect();
    Policy { dist }
}

#[test]
fn random_policies_induce_feasible_traces() {
    let sc = Scenario::from_toml_str(CORRIDOR).unwrap();
    let mdp = build_mdp(&sc, &BuildOptions { particles: 200, seed: 3 }).unwrap();
    assert!(mdp.states.iter().any(|s| s.actions.iter().any(|a| a.label == ACTION_SBO)));
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut boots = 0;
    for k in 0..100 {
        let policy = random_policy(&mdp, &mut rng, k % 2 == 0);
        let schedule = policy_to_schedule(&policy, &mdp).unwrap();
        let records = simulate_batch(&sc, &schedule, 4, k, &SimOptions::default()).unwrap();
        for r in &records {
            let v = check_feasibility(&r.actions, sc.resources.t_boot);
            assert!(v.is_empty(), "policy {k}: {v:?} in {:?}", r.actions);
            boots += r.actions.actions.iter().filter(|a| a.action == LocAction::Start).count();
        }
    }
    assert!(boots > 0);
}
