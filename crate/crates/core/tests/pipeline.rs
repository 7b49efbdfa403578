//! End-to-end exercise of the library API on a miniature problem: train a
//! tiny teacher, distill it into a spiking student, and push both through
//! the model format. Sizes are chosen for speed, not for reward quality —
//! the full-strength defaults are covered by the CLI crate's acceptance
//! suite.

use sdn_core::distill::{agreement, collect_states, evaluate_student, train_sdn, DistillConfig};
use sdn_core::env::EnvConfig;
use sdn_core::model_io;
use sdn_core::network::{LayerDesc, Network};
use sdn_core::snn::LifConfig;
use sdn_core::teacher::{evaluate_teacher, train_teacher, DqnConfig};

fn micro_env() -> EnvConfig {
    EnvConfig { height: 8, width: 8, episode_cap: 40 }
}

fn micro_dqn() -> DqnConfig {
    DqnConfig {
        max_epochs: 2,
        epoch_steps: 150,
        train_start: 32,
        batch_size: 16,
        buffer_capacity: 256,
        eps_decay_steps: 200,
        frame_stack: 4,
        stop_avg_reward: 1_000.0,
        ..DqnConfig::default()
    }
}

fn micro_arch() -> Vec<LayerDesc> {
    vec![LayerDesc::Dense { units: 16 }, LayerDesc::Dense { units: 2 }]
}

fn micro_distill() -> DistillConfig {
    DistillConfig {
        epochs: 4,
        thresh_epoch: 1,
        episodes_per_epoch: 1,
        batches_per_epoch: 3,
        batch_size: 8,
        pool_capacity: 256,
        ..DistillConfig::default()
    }
}

fn micro_student(seed: u64) -> Network {
    let lif = LifConfig { t_steps: 4, ..LifConfig::default() };
    Network::snn(64, &[6, 2], lif, seed).unwrap()
}

#[test]
fn teacher_distill_roundtrip() {
    let env = micro_env();
    let teacher = train_teacher(&env, &micro_arch(), &micro_dqn(), 11).unwrap();
    assert!(teacher.env_steps > 0);
    assert!(!teacher.curve.is_empty());
    assert!(teacher.episodes > 0);

    let run = train_sdn(&teacher.network, micro_student(12), &env, &micro_distill(), 11).unwrap();
    assert!(run.opt_steps > 0, "no optimizer steps were taken");
    assert!(run.pool_len > 0);

    // Both networks survive the binary format byte-for-byte.
    for net in [&teacher.network, &run.student] {
        let bytes = model_io::to_bytes(net).unwrap();
        assert_eq!(bytes.len(), model_io::serialized_len(net).unwrap());
        let back = model_io::from_bytes(&bytes).unwrap();
        assert_eq!(model_io::to_bytes(&back).unwrap(), bytes);
    }

    // Evaluation and agreement run to completion and stay in range.
    let t_reward = evaluate_teacher(&teacher.network, &env, 4, 3, 77).unwrap();
    let s_reward = evaluate_student(&run.student, &env, 3, 77).unwrap();
    assert!(t_reward.is_finite() && s_reward.is_finite());
    let stacks = collect_states(&run.student, &env, 50, 99).unwrap();
    let agree = agreement(&teacher.network, &run.student, &stacks).unwrap();
    assert!((0.0..=1.0).contains(&agree), "agreement {agree} out of range");
}

#[test]
fn identical_seeds_reproduce_identical_models() {
    let env = micro_env();
    let a = train_teacher(&env, &micro_arch(), &micro_dqn(), 5).unwrap();
    let b = train_teacher(&env, &micro_arch(), &micro_dqn(), 5).unwrap();
    assert_eq!(
        model_io::to_bytes(&a.network).unwrap(),
        model_io::to_bytes(&b.network).unwrap()
    );

    let sa = train_sdn(&a.network, micro_student(6), &env, &micro_distill(), 5).unwrap();
    let sb = train_sdn(&b.network, micro_student(6), &env, &micro_distill(), 5).unwrap();
    assert_eq!(
        model_io::to_bytes(&sa.student).unwrap(),
        model_io::to_bytes(&sb.student).unwrap()
    );
}

#[test]
fn geometry_mismatches_are_rejected() {
    let env = micro_env();
    let teacher = train_teacher(&env, &micro_arch(), &micro_dqn(), 11).unwrap();

    // Student integrating more timesteps than the teacher stacks frames.
    let wide = Network::snn(64, &[6, 2], LifConfig { t_steps: 8, ..LifConfig::default() }, 1).unwrap();
    assert!(train_sdn(&teacher.network, wide, &env, &micro_distill(), 1).is_err());

    // Student sized for a different board.
    let small =
        Network::snn(36, &[6, 2], LifConfig { t_steps: 4, ..LifConfig::default() }, 1).unwrap();
    assert!(train_sdn(&teacher.network, small, &env, &micro_distill(), 1).is_err());
}
