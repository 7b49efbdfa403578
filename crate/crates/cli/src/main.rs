//! `sdn`: train the DQN teacher on MiniPong, distill it into a spiking
//! student, and run the analysis harnesses. Exit codes: 0 success, 1
//! usage error, 2 runtime failure.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdn_cli::config::{load_config, RunConfig};
use sdn_cli::output::{emit_coding_csv, emit_curve, emit_qlog, read_qlog};
use sdn_cli::CliError;
use sdn_core::coding::{required_timesteps, ValueRange};
use sdn_core::distill::{
    agreement, collect_states, evaluate_student, train_sdn, DistillConfig, LossMode,
};
use sdn_core::env::{Action, EnvConfig, MiniPong};
use sdn_core::model_io;
use sdn_core::network::{Network, NetworkKind};
use sdn_core::teacher::{evaluate_teacher, train_teacher};

#[derive(Parser)]
#[command(
    name = "sdn",
    version,
    about = "Spiking distillation pipeline on MiniPong",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the DQN teacher; writes curve, Q-value log, and model.
    TrainTeacher {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Distill a saved teacher into a spiking student.
    Distill {
        #[arg(long)]
        config: PathBuf,
        /// Teacher model; defaults to `<out-dir>/teacher.sdnm`.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Greedy evaluation of a saved model (teacher or student).
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Environment settings; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 1000)]
        seed: u64,
    },
    /// Rate-coding timestep analysis of a recorded Q-value log.
    AnalyzeCoding {
        /// CSV with header `step,q0,q1` (written by train-teacher).
        #[arg(long)]
        qvalues: PathBuf,
        /// Resolution at which the value range must be represented.
        #[arg(long, default_value_t = 2e-4)]
        acc_x: f64,
        /// Optional CSV destination for the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distill the same teacher under all four loss treatments.
    CompareLosses {
        #[arg(long)]
        config: PathBuf,
        /// Teacher model; defaults to `<out-dir>/teacher.sdnm`.
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Directory receiving the four curve CSVs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Size/parameter comparison of exactly two saved models.
    Capacity {
        /// Repeat twice: --model a.sdnm --model b.sdnm.
        #[arg(long = "model")]
        model: Vec<PathBuf>,
    },
    /// Export environment frames as PGM images.
    DumpFrames {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PolicyArg::Tracking)]
        policy: PolicyArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// Scripted paddle that follows the ball.
    Tracking,
    /// Uniform random actions.
    Random,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::TrainTeacher { config, out_dir } => cmd_train_teacher(&config, out_dir),
        Cmd::Distill { config, teacher, out_dir } => cmd_distill(&config, teacher, out_dir),
        Cmd::Eval { model, config, episodes, seed } => cmd_eval(&model, config, episodes, seed),
        Cmd::AnalyzeCoding { qvalues, acc_x, out } => cmd_analyze_coding(&qvalues, acc_x, out),
        Cmd::CompareLosses { config, teacher, out } => cmd_compare_losses(&config, teacher, &out),
        Cmd::Capacity { model } => cmd_capacity(&model),
        Cmd::DumpFrames { out, episodes, config, seed, policy } => {
            cmd_dump_frames(&out, episodes, config, seed, policy)
        }
    }
}

fn env_of(cfg: &RunConfig) -> EnvConfig {
    cfg.environment.env_config()
}

/// Seed offsets keep the pipeline's RNG streams distinct while staying a
/// pure function of the config seed.
const STUDENT_INIT_OFFSET: u64 = 0x77;
const HELD_OUT_OFFSET: u64 = 0x99;
const EVAL_OFFSET: u64 = 0xE7;

fn cmd_train_teacher(config: &Path, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let out = out_dir.unwrap_or_else(|| cfg.outputs.dir.clone());
    let seed = cfg.environment.seed;
    let env = env_of(&cfg);
    let run = train_teacher(&env, &cfg.teacher.architecture, &cfg.teacher.dqn, seed)?;

    let curve_path = out.join("teacher-curve.csv");
    let qlog_path = out.join("teacher-qvalues.csv");
    let model_path = out.join("teacher.sdnm");
    emit_curve(&run.curve, &curve_path)?;
    emit_qlog(&run.q_log, &qlog_path)?;
    let bytes = model_io::save(&run.network, &model_path)?;

    let eval = evaluate_teacher(
        &run.network,
        &env,
        cfg.teacher.dqn.frame_stack,
        20,
        seed ^ EVAL_OFFSET,
    )?;
    println!(
        "teacher: {} env steps, {} episodes, stopped early: {}",
        run.env_steps, run.episodes, run.stopped_early
    );
    if let Some(avg) = run.trailing_avg_reward(100) {
        println!("trailing-100 average reward: {avg:.3}");
    }
    println!("greedy evaluation over 20 episodes: {eval:.3}");
    println!("Q-value range: [{:.4}, {:.4}]", run.q_min, run.q_max);
    println!("wrote {}", curve_path.display());
    println!("wrote {}", qlog_path.display());
    println!("wrote {} ({bytes} bytes)", model_path.display());
    Ok(())
}

fn teacher_path_of(out: &Path, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| out.join("teacher.sdnm"))
}

fn build_student(cfg: &RunConfig) -> Result<Network, CliError> {
    let input_dim = cfg.environment.height * cfg.environment.width;
    Ok(Network::snn(
        input_dim,
        &cfg.student.widths,
        cfg.student.lif,
        cfg.environment.seed ^ STUDENT_INIT_OFFSET,
    )?)
}

fn cmd_distill(
    config: &Path,
    teacher: Option<PathBuf>,
    out_dir: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let out = out_dir.unwrap_or_else(|| cfg.outputs.dir.clone());
    let seed = cfg.environment.seed;
    let env = env_of(&cfg);
    let teacher_net = model_io::load(&teacher_path_of(&out, teacher))?;
    let student = build_student(&cfg)?;
    let run = train_sdn(&teacher_net, student, &env, &cfg.distill, seed)?;

    let curve_path = out.join("student-curve.csv");
    let model_path = out.join("student.sdnm");
    emit_curve(&run.curve, &curve_path)?;
    let bytes = model_io::save(&run.student, &model_path)?;

    let held_out = collect_states(&run.student, &env, 1000, seed ^ HELD_OUT_OFFSET)?;
    let agree = agreement(&teacher_net, &run.student, &held_out)?;
    let stack = cfg.student.lif.t_steps;
    let teacher_reward = evaluate_teacher(&teacher_net, &env, stack, 20, seed ^ EVAL_OFFSET)?;
    let student_reward = evaluate_student(&run.student, &env, 20, seed ^ EVAL_OFFSET)?;
    println!(
        "distill: {} env steps, {} episodes, {} optimizer steps, pool {}",
        run.env_steps, run.episodes, run.opt_steps, run.pool_len
    );
    println!("argmax agreement on 1000 held-out states: {:.1}%", agree * 100.0);
    println!("greedy reward over 20 episodes: teacher {teacher_reward:.3}, student {student_reward:.3}");
    println!("wrote {}", curve_path.display());
    println!("wrote {} ({bytes} bytes)", model_path.display());
    Ok(())
}

fn cmd_eval(
    model: &Path,
    config: Option<PathBuf>,
    episodes: usize,
    seed: u64,
) -> Result<(), CliError> {
    let cfg = match config {
        Some(p) => load_config(&p)?,
        None => RunConfig::default(),
    };
    let env = env_of(&cfg);
    let net = model_io::load(model)?;
    let reward = match net.kind {
        NetworkKind::Dnn => {
            let stack = net.input_shape.first().copied().unwrap_or(1);
            evaluate_teacher(&net, &env, stack, episodes, seed)?
        }
        NetworkKind::Snn => evaluate_student(&net, &env, episodes, seed)?,
    };
    println!(
        "{}: average reward over {episodes} greedy episodes: {reward:.3}",
        model.display()
    );
    Ok(())
}

fn cmd_analyze_coding(qvalues: &Path, acc_x: f64, out: Option<PathBuf>) -> Result<(), CliError> {
    let rows = read_qlog(qvalues)?;
    let mut range = ValueRange::empty(acc_x)?;
    for (_, q0, q1) in &rows {
        range.observe(*q0);
        range.observe(*q1);
    }
    let report = required_timesteps(&range)?;
    println!("observed {} Q-value pairs from {}", rows.len(), qvalues.display());
    println!("value range: [{}, {}] (width {})", range.x_min, range.x_max, range.width());
    println!("resolution acc_x = {acc_x}");
    println!("lossless rate-coding needs {} timesteps per decision", report.required_timesteps);
    println!("(rate grid 1/{}, step {})", report.acc_fr, report.step);
    if let Some(path) = out {
        emit_coding_csv(&range, &report, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_compare_losses(
    config: &Path,
    teacher: Option<PathBuf>,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let seed = cfg.environment.seed;
    let env = env_of(&cfg);
    let teacher_net = model_io::load(&teacher_path_of(&cfg.outputs.dir, teacher))?;
    let modes = [
        (LossMode::CeWithT, "ce-with-t"),
        (LossMode::Mse1, "mse-1"),
        (LossMode::Mse2, "mse-2"),
        (LossMode::Mse3, "mse-3"),
    ];
    let mut finals = Vec::new();
    for (mode, name) in modes {
        let distill_cfg = DistillConfig { loss_mode: mode, ..cfg.distill };
        // Same student init and seed for every mode: curves differ only by
        // the loss treatment.
        let student = build_student(&cfg)?;
        let run = train_sdn(&teacher_net, student, &env, &distill_cfg, seed)?;
        let path = out.join(format!("{name}.csv"));
        emit_curve(&run.curve, &path)?;
        let last = run.curve.last().expect("non-empty curve");
        finals.push((name, last.avg_reward));
        println!("{name}: final epoch avg reward {:.3}, wrote {}", last.avg_reward, path.display());
    }
    let best = finals
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite rewards"))
        .expect("four modes");
    println!("highest final reward: {} ({:.3})", best.0, best.1);
    Ok(())
}

fn cmd_capacity(models: &[PathBuf]) -> Result<(), CliError> {
    if models.len() != 2 {
        return Err(CliError::Usage(format!(
            "capacity compares exactly two models; got {} --model flags",
            models.len()
        )));
    }
    let a = model_io::load(&models[0])?;
    let b = model_io::load(&models[1])?;
    let report = model_io::capacity_report(&a, &b)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(format!("serialize report: {e}")))?;
    println!("{json}");
    Ok(())
}

fn cmd_dump_frames(
    out: &Path,
    episodes: usize,
    config: Option<PathBuf>,
    seed: u64,
    policy: PolicyArg,
) -> Result<(), CliError> {
    if episodes == 0 {
        return Err(CliError::Usage("dump-frames needs at least one episode".into()));
    }
    let cfg = match config {
        Some(p) => load_config(&p)?,
        None => RunConfig::default(),
    };
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Runtime(format!("create {}: {e}", out.display())))?;
    let mut env = MiniPong::new(env_of(&cfg), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut written = 0usize;
    for ep in 0..episodes {
        let mut step = 0usize;
        loop {
            let frame = env.frame();
            let path = out.join(format!("ep{ep:03}-step{step:04}.pgm"));
            std::fs::write(&path, frame.to_pgm())
                .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))?;
            written += 1;
            let action = match policy {
                PolicyArg::Tracking => env.tracking_policy(),
                PolicyArg::Random => Action::from_index(rng.gen_range(0..2))?,
            };
            let (_, _, done) = env.step(action)?;
            step += 1;
            if done {
                env.reset();
                break;
            }
        }
    }
    println!("wrote {written} frames to {}", out.display());
    Ok(())
}
