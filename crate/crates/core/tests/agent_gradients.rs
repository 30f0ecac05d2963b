//! Finite-difference checks of the agent's analytic gradients.

use cmdp_core::multipliers::MultiplierConfig;
use cmdp_core::sac::{AgentConfig, LogStdMode, SacLagrangian};
use cmdp_core::Matrix;
use cmdp_core::{ConstraintSpec, TaskSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn agent(mode: LogStdMode, seed: u64) -> SacLagrangian {
    let task = TaskSpec {
        gamma: 0.9,
        constraints: vec![ConstraintSpec::upper("a", 0.1), ConstraintSpec::lower("b", 0.5)],
        success: Some(ConstraintSpec::lower("s", 0.9)),
        use_bootstrap: true,
    };
    let cfg = AgentConfig {
        policy_hidden: vec![6, 5],
        critic_hidden: vec![7],
        log_std_mode: mode,
        ..AgentConfig::default()
    };
    let names: Vec<String> = ["a", "b", "s"].iter().map(|s| s.to_string()).collect();
    SacLagrangian::new(cfg, task, &MultiplierConfig::default(), 3, 2, &names, seed).unwrap()
}

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.sample(StandardNormal)).collect())
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn check(mode: LogStdMode) {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut a = agent(mode, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let obs = normal(&mut rng, 8, 3);
        let noise = normal(&mut rng, 8, 2);
        let weights: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let obj = a.policy_objective(&obs, noise.clone(), &weights);
        let n = a.policy().net().params().len();
        let mut fd = vec![0.0; n];
        for i in 0..n {
            let p0 = a.policy().net().params()[i];
            a.policy_mut().net_mut().params_mut()[i] = p0 + h;
            let up = a.policy_objective(&obs, noise.clone(), &weights).value;
            a.policy_mut().net_mut().params_mut()[i] = p0 - h;
            let dn = a.policy_objective(&obs, noise.clone(), &weights).value;
            a.policy_mut().net_mut().params_mut()[i] = p0;
            fd[i] = (up - dn) / (2.0 * h);
        }
        worst = worst.max(rel_err(&obj.net_grad, &fd));
        if mode == LogStdMode::Global {
            let mut fd = vec![0.0; 2];
            for (i, g) in fd.iter_mut().enumerate() {
                let p0 = a.policy().global_log_std()[i];
                a.policy_mut().global_log_std_mut()[i] = p0 + h;
                let up = a.policy_objective(&obs, noise.clone(), &weights).value;
                a.policy_mut().global_log_std_mut()[i] = p0 - h;
                let dn = a.policy_objective(&obs, noise.clone(), &weights).value;
                a.policy_mut().global_log_std_mut()[i] = p0;
                *g = (up - dn) / (2.0 * h);
            }
            worst = worst.max(rel_err(&obj.log_std_grad, &fd));
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn policy_objective_gradient_state_dependent() {
    check(LogStdMode::StateDependent);
}

#[test]
fn policy_objective_gradient_global_log_std() {
    check(LogStdMode::Global);
}
