//! Snapshot of the first baseline step. Regenerate with `UPDATE_GOLDEN=1`.

use std::path::PathBuf;

use clusternash::experiments::{output::trajectory_csv, Experiment, RunConfig};
use clusternash::game::Game;
use clusternash::oracle::{gradient_oracle, PerturbationStream};

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/baseline_one_step.csv")
}

#[test]
fn baseline_one_step_snapshot() {
    let exp = Experiment::prepare(&RunConfig::baseline()).unwrap();
    let traj = exp.run_seed(1, 1, true).unwrap();
    let csv = trajectory_csv(&traj, exp.game.layout());
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(golden_path(), &csv).unwrap();
    }
    let expected = std::fs::read_to_string(golden_path()).unwrap();
    assert_eq!(csv, expected);
}

#[test]
fn first_action_is_a_scaled_oracle_step() {
    // with Y_0 = 0 and phi_0 = G(x_0), agent j's first action is -alpha_i g^i_{jk}(x_0)
    let exp = Experiment::prepare(&RunConfig::baseline()).unwrap();
    let traj = exp.run_seed(1, 1, true).unwrap();
    let layout = exp.game.layout();
    let stream = PerturbationStream::new(1);
    let x0 = vec![0.0; 24];
    for i in 0..3 {
        for k in 0..layout.cluster_coords(i) {
            let j = k / 2;
            let zeta = stream.sample(0, i, j, 24).values;
            let g = gradient_oracle(&exp.game, i, j, &x0, &zeta, 1e-4).unwrap().gradient[k];
            let expected = -exp.steps.alpha(i) * g;
            let got = traj.positions[1][layout.cluster_offset(i) + k];
            assert!((got - expected).abs() <= 1e-15 * expected.abs().max(1.0));
        }
    }
}
