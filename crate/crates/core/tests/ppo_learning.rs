//! End-to-end learning check for the PPO machinery: on a single-state
//! bandit that rewards trees containing the best-so-far operand, the
//! sampled distribution must concentrate on rewarded trees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use metabbo::engine::{FlaState, StepRecord, Trajectory};
use metabbo::expr::NodeKind;
use metabbo::policy::{construct_rule, DecodeMode, PolicyConfig, PolicyParams};
use metabbo::trainer::{clip_grad_norm, Optimizer, OptimConfig, PpoConfig};

#[test]
fn ppo_learns_a_tree_bandit() {
    let mut params = PolicyParams::init(
        PolicyConfig { hidden: 16 },
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    let state = FlaState([0.5; 9]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ppo = PpoConfig {
        update_epochs: 6,
        entropy_coef: 0.003,
        center_advantages_per_episode: false,
        ..PpoConfig::default()
    };
    let mut opt = Optimizer::new(
        OptimConfig {
            learning_rate: 0.005,
            ..OptimConfig::default()
        },
        params.len(),
    );

    let hit = |nodes: &[NodeKind]| nodes.iter().any(|n| matches!(n, NodeKind::BestSoFar));

    for round in 0..60 {
        let mut trajs = Vec::new();
        let mut hits = 0;
        for _ in 0..16 {
            let d = construct_rule(&params, &state, &mut rng, DecodeMode::Sample);
            let r = if hit(d.tree.nodes()) { 1.0 } else { 0.0 };
            hits += r as usize;
            trajs.push(Trajectory {
                steps: vec![StepRecord {
                    state,
                    rule: d.tree.to_prefix(),
                    nodes: d.tree.nodes().to_vec(),
                    log_probs: d.log_probs,
                    reward: r,
                    value_estimate: d.value,
                    next_state: state,
                }],
                episode_return: r,
                final_best: 0.0,
            });
        }
        if round % 10 == 0 {
            println!("round {round}: hits {hits}/16");
        }
        for _ in 0..ppo.update_epochs {
            let (_, mut grad) = metabbo::trainer::ppo_loss_grad(&params, &trajs, &ppo).unwrap();
            clip_grad_norm(&mut grad, ppo.grad_clip);
            opt.step(&mut params.theta, &grad);
        }
    }
    let mut hits = 0;
    for _ in 0..100 {
        let d = construct_rule(&params, &state, &mut rng, DecodeMode::Sample);
        if hit(d.tree.nodes()) {
            hits += 1;
        }
    }
    println!("final sampled hit rate: {hits}/100");
    assert!(hits > 70, "PPO failed to learn the bandit: {hits}/100");
}
