use smdp_core::agents::{evaluate_policy, train_offline, Algorithm};
use smdp_core::data::{self, BehaviorMix};
use smdp_core::tabular::smdp_value_iteration;
use smdp_core::{EnvVariant, GridState, RunConfig};

#[test]
fn sbcq_follows_the_demonstrated_route_from_optimal_data() {
    let variant = EnvVariant::offline();
    let oracle = smdp_value_iteration(&variant, 1e-12, 10_000).unwrap();
    let mix = BehaviorMix::new(0.0, 0.0).unwrap();
    let train = data::generate_dataset::<f64>(&variant, &oracle, mix, 100, 1).unwrap();
    let validation = data::validation_dataset(&variant, &oracle, 250).unwrap();
    let mut config = RunConfig::offline();
    config.epochs = 60;
    let run = train_offline(Algorithm::Sbcq, &train, Some(&validation), &config).unwrap();

    assert_eq!(run.epochs.len(), 60);
    let losses: Vec<f64> = run.epochs.iter().map(|e| e.validation_loss.unwrap()).collect();
    assert!(losses[run.best_epoch] < losses[0]);
    assert!(run.epochs.last().unwrap().train_loss < run.epochs[0].train_loss);

    let start = GridState::default_start();
    let ep = evaluate_policy(Algorithm::Sbcq, &run.final_net, run.cloner.as_ref(), 0.3, &variant, start, 100).unwrap();
    assert!(ep.reached_goal, "{:?}", ep.path);
    let best = rollout_oracle(&variant, &oracle);
    assert!((ep.discounted_return - best).abs() < 1e-9);
}

fn rollout_oracle(variant: &EnvVariant, q: &smdp_core::TabularQ64) -> f64 {
    smdp_core::gridworld::rollout(variant, GridState::default_start(), 100, |s| Ok(q.greedy(s.index())))
        .unwrap()
        .discounted_return
}

#[test]
fn datasets_round_trip_through_files() {
    let variant = EnvVariant::online();
    let oracle = smdp_value_iteration(&variant, 1e-12, 10_000).unwrap();
    let mix = BehaviorMix::new(0.25, 0.25).unwrap();
    let d = data::generate_dataset::<f64>(&variant, &oracle, mix, 300, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    data::serialize(&d, &path).unwrap();
    let back: smdp_core::Dataset64 = data::deserialize(&path).unwrap();
    assert_eq!(back, d);
    for t in &back.transitions {
        assert!((data::replay_rho(t, &variant).unwrap() - t.rho).abs() < 1e-12);
    }
}
