//! Teacher→student distillation: the student drives the environment and
//! fills a state pool, the frozen teacher labels sampled batches with its
//! logits, and the student's firing rates are fit with a blend of a
//! temperature-softened cross-entropy and a one-hot binary cross-entropy
//! (or one of three mean-squared-error target mappings).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{frame_stack_bytes, frames_from_stack, stacks_to_tensor, EnvConfig, Frame, MiniPong};
use crate::error::{Result, SdnError};
use crate::network::{Network, NetworkKind};
use crate::replay::Ring;
use crate::snn::{snn_backward, snn_forward, LifConfig};
use crate::stats::EpisodeStats;
use crate::tensor::{softmax_t, Adam, AdamConfig, Tensor};

/// Log-argument clamp shared by every loss in this module.
const LOG_EPS: f64 = 1e-7;

/// How student firing rates are fit to teacher logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Temperature-softened cross-entropy (with optional `T²` scaling)
    /// blended with the one-hot hard loss. The default.
    CeWithT,
    /// Squared error against a one-hot target at the teacher's argmax.
    #[serde(rename = "mse-1")]
    Mse1,
    /// Squared error; the teacher's max logit is zoomed into `[0, 1]`
    /// via the running range of max logits, other entries target 0.
    #[serde(rename = "mse-2")]
    Mse2,
    /// Squared error; every logit is divided by `scale` and non-max
    /// entries are additionally lowered by `d`, then clamped to `[0, 1]`.
    #[serde(rename = "mse-3")]
    Mse3,
    /// Verbatim printed form of the soft loss kept for comparison runs:
    /// `−Σ_a z_a·ln q_a + (1−z_a)·ln(1 − q_a/T)` with `z` the softened
    /// student distribution and `q` the softened teacher distribution.
    /// Blended with the hard loss like `ce-with-t` but never `T²`-scaled.
    PaperLiteralSoft,
}

impl LossMode {
    pub fn is_mse(self) -> bool {
        matches!(self, LossMode::Mse1 | LossMode::Mse2 | LossMode::Mse3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct DistillConfig {
    /// Softening temperature `T` for the soft loss.
    pub temperature: f64,
    /// Blend weight: `loss = λ·soft + (1−λ)·hard`.
    pub lambda: f64,
    /// Optimizer steps only begin once `epoch > thresh_epoch`; earlier
    /// epochs purely accumulate pool states.
    pub thresh_epoch: usize,
    pub loss_mode: LossMode,
    /// Divisor applied to teacher logits in `mse-3` targets.
    pub scale: f64,
    /// Offset subtracted from non-max `mse-3` targets.
    pub d: f64,
    pub pool_capacity: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Full environment episodes accumulated into the pool per epoch.
    pub episodes_per_epoch: usize,
    /// Optimizer steps attempted per training epoch.
    pub batches_per_epoch: usize,
    /// Multiply the soft cross-entropy (value and gradient) by `T²` so
    /// its gradient scale stays stable across temperatures.
    pub t2_scaling: bool,
    pub adam: AdamConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            temperature: 10.0,
            lambda: 0.9,
            thresh_epoch: 10,
            loss_mode: LossMode::CeWithT,
            scale: 10.0,
            d: 0.3,
            pool_capacity: 10_000,
            batch_size: 32,
            epochs: 50,
            episodes_per_epoch: 2,
            batches_per_epoch: 100,
            t2_scaling: true,
            adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(SdnError::parameter(
                "temperature",
                format!("must be > 0, got {}", self.temperature),
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(SdnError::parameter(
                "lambda",
                format!("must be in [0, 1], got {}", self.lambda),
            ));
        }
        if !(self.scale > 0.0) {
            return Err(SdnError::parameter("scale", format!("must be > 0, got {}", self.scale)));
        }
        if self.d < 0.0 {
            return Err(SdnError::parameter("d", format!("must be >= 0, got {}", self.d)));
        }
        if self.batch_size == 0 || self.batch_size > self.pool_capacity {
            return Err(SdnError::parameter(
                "batch-size",
                format!("must be in [1, pool-capacity={}]", self.pool_capacity),
            ));
        }
        if self.epochs == 0 || self.episodes_per_epoch == 0 || self.batches_per_epoch == 0 {
            return Err(SdnError::parameter(
                "epochs/episodes-per-epoch/batches-per-epoch",
                "must be >= 1",
            ));
        }
        Ok(())
    }
}

/// Temperature-softened cross-entropy between the teacher's softened
/// logits `q = softmax(o/T)` (target, constant) and the student's softened
/// rates `z = softmax(fr/T)`. Returns the loss and `dL/dfr`. With
/// `t2_scaling` both are multiplied by `T²` (the gradient then scales as
/// `T·(z−q)` instead of `(z−q)/T`).
pub fn soft_loss(o: &Tensor, fr: &Tensor, t_kd: f64, t2_scaling: bool) -> Result<(f64, Tensor)> {
    check_pair(o, fr)?;
    let q = softmax_t(o, t_kd)?;
    let z = softmax_t(fr, t_kd)?;
    let ce: f64 = q
        .data()
        .iter()
        .zip(z.data())
        .map(|(&qa, &za)| -qa * za.max(LOG_EPS).ln())
        .sum();
    let scale = if t2_scaling { t_kd * t_kd } else { 1.0 };
    let gscale = scale / t_kd;
    let grad = Tensor::from_vec(
        fr.shape(),
        z.data().iter().zip(q.data()).map(|(&za, &qa)| gscale * (za - qa)).collect(),
    )?;
    Ok((scale * ce, grad))
}

/// One-hot binary cross-entropy: the label is one-hot at the teacher's
/// argmax (ties to the lowest index); rates are clamped to
/// `[1e-7, 1−1e-7]` inside the logs and the gradient is zero where the
/// clamp was active. Returns the loss and `dL/dfr`.
pub fn hard_loss(o: &Tensor, fr: &Tensor) -> Result<(f64, Tensor)> {
    check_pair(o, fr)?;
    let label = o.argmax();
    let mut value = 0.0;
    let mut grad = vec![0.0; fr.len()];
    for (a, &f) in fr.data().iter().enumerate() {
        let c = f.clamp(LOG_EPS, 1.0 - LOG_EPS);
        let l = if a == label { 1.0 } else { 0.0 };
        value -= l * c.ln() + (1.0 - l) * (1.0 - c).ln();
        if (LOG_EPS..=1.0 - LOG_EPS).contains(&f) {
            grad[a] = -l / c + (1.0 - l) / (1.0 - c);
        }
    }
    Ok((value, Tensor::from_vec(fr.shape(), grad)?))
}

/// The `paper-literal-soft` form: `L = −Σ_a z_a·ln q_a + (1−z_a)·ln(1 −
/// q_a/T)` with `z = softmax(fr/T)` variable and `q = softmax(o/T)`
/// constant. Log arguments are clamped below at `1e-7`; `L` is linear in
/// `z`, so the chain rule only runs through the softmax Jacobian.
pub fn literal_soft_loss(o: &Tensor, fr: &Tensor, t_kd: f64) -> Result<(f64, Tensor)> {
    check_pair(o, fr)?;
    let q = softmax_t(o, t_kd)?;
    let z = softmax_t(fr, t_kd)?;
    let mut value = 0.0;
    // g_a = dL/dz_a, a constant in z.
    let mut g = vec![0.0; fr.len()];
    for (a, (&qa, &za)) in q.data().iter().zip(z.data()).enumerate() {
        let ln_q = qa.max(LOG_EPS).ln();
        let ln_comp = (1.0 - qa / t_kd).max(LOG_EPS).ln();
        value -= za * ln_q + (1.0 - za) * ln_comp;
        g[a] = -(ln_q - ln_comp);
    }
    let dot: f64 = g.iter().zip(z.data()).map(|(ga, za)| ga * za).sum();
    let grad = Tensor::from_vec(
        fr.shape(),
        z.data().iter().zip(&g).map(|(&za, &ga)| za / t_kd * (ga - dot)).collect(),
    )?;
    Ok((value, grad))
}

fn check_pair(o: &Tensor, fr: &Tensor) -> Result<()> {
    if o.shape() != fr.shape() || o.shape().len() != 1 || o.is_empty() {
        return Err(SdnError::shape("distill loss", o.shape(), fr.shape()));
    }
    Ok(())
}

/// Builds mean-squared-error targets from teacher logits for the three
/// `mse-*` modes. `mse-2` keeps a running range of the teacher's max
/// logits (fed via [`MseMapper::observe`]) for its zoom; before any
/// observation, or when the range is a single point, the zoomed target is
/// 1.
#[derive(Debug, Clone)]
pub struct MseMapper {
    mode: LossMode,
    scale: f64,
    d: f64,
    seen_min: f64,
    seen_max: f64,
}

impl MseMapper {
    pub fn new(mode: LossMode, scale: f64, d: f64) -> Result<Self> {
        if !mode.is_mse() {
            return Err(SdnError::parameter("loss-mode", format!("{mode:?} is not an MSE mode")));
        }
        if !(scale > 0.0) {
            return Err(SdnError::parameter("scale", "must be > 0"));
        }
        if d < 0.0 {
            return Err(SdnError::parameter("d", "must be >= 0"));
        }
        Ok(Self { mode, scale, d, seen_min: f64::INFINITY, seen_max: f64::NEG_INFINITY })
    }

    /// Feeds one teacher output row into the running max-logit range.
    pub fn observe(&mut self, o: &Tensor) {
        let m = o.max_value();
        self.seen_min = self.seen_min.min(m);
        self.seen_max = self.seen_max.max(m);
    }

    /// Target vector for one teacher row.
    pub fn target(&self, o: &Tensor) -> Tensor {
        let k = o.argmax();
        let mut y = vec![0.0; o.len()];
        match self.mode {
            LossMode::Mse1 => y[k] = 1.0,
            LossMode::Mse2 => {
                let span = self.seen_max - self.seen_min;
                y[k] = if span.is_finite() && span > 0.0 {
                    ((o.data()[k] - self.seen_min) / span).clamp(0.0, 1.0)
                } else {
                    1.0
                };
            }
            LossMode::Mse3 => {
                for (a, t) in y.iter_mut().enumerate() {
                    let mapped = o.data()[a] / self.scale - if a == k { 0.0 } else { self.d };
                    *t = mapped.clamp(0.0, 1.0);
                }
            }
            _ => unreachable!("constructor admits only MSE modes"),
        }
        Tensor::from_vec(o.shape(), y).expect("target matches logit shape")
    }

    /// Mean squared error between the mapped target and the rates, with
    /// `dL/dfr`.
    pub fn loss(&self, o: &Tensor, fr: &Tensor) -> Result<(f64, Tensor)> {
        check_pair(o, fr)?;
        let y = self.target(o);
        let a = fr.len() as f64;
        let value = fr
            .data()
            .iter()
            .zip(y.data())
            .map(|(&f, &t)| (f - t) * (f - t))
            .sum::<f64>()
            / a;
        let grad = Tensor::from_vec(
            fr.shape(),
            fr.data().iter().zip(y.data()).map(|(&f, &t)| 2.0 * (f - t) / a).collect(),
        )?;
        Ok((value, grad))
    }
}

/// Per-sample training loss under `cfg`: the λ-blend of soft and hard
/// losses for the cross-entropy modes, or the mapped MSE alone (`mapper`
/// must be supplied exactly for the MSE modes). Returns the loss and
/// `dL/dfr`.
pub fn distill_loss(
    o: &Tensor,
    fr: &Tensor,
    cfg: &DistillConfig,
    mapper: Option<&MseMapper>,
) -> Result<(f64, Tensor)> {
    match (cfg.loss_mode, mapper) {
        (LossMode::Mse1 | LossMode::Mse2 | LossMode::Mse3, Some(m)) => m.loss(o, fr),
        (LossMode::Mse1 | LossMode::Mse2 | LossMode::Mse3, None) => {
            Err(SdnError::Contract("MSE mode requires a target mapper".into()))
        }
        (mode, _) => {
            let (sv, sg) = match mode {
                LossMode::CeWithT => soft_loss(o, fr, cfg.temperature, cfg.t2_scaling)?,
                LossMode::PaperLiteralSoft => literal_soft_loss(o, fr, cfg.temperature)?,
                _ => unreachable!("MSE handled above"),
            };
            let (hv, hg) = hard_loss(o, fr)?;
            let l = cfg.lambda;
            let value = l * sv + (1.0 - l) * hv;
            let grad = Tensor::from_vec(
                fr.shape(),
                sg.data()
                    .iter()
                    .zip(hg.data())
                    .map(|(&s, &h)| l * s + (1.0 - l) * h)
                    .collect(),
            )?;
            Ok((value, grad))
        }
    }
}

/// Firing rates of the student on one stored byte stack.
pub fn student_rates(student: &Network, stack: &[u8]) -> Result<Tensor> {
    let lif = student_lif(student)?;
    let frames = frames_from_stack(stack, lif.t_steps)?;
    let (fr, _) = snn_forward(student, &frames, &lif)?;
    Ok(fr)
}

fn student_lif(student: &Network) -> Result<LifConfig> {
    if student.kind != NetworkKind::Snn {
        return Err(SdnError::Contract("student must be a spiking network".into()));
    }
    student
        .lif
        .ok_or_else(|| SdnError::Contract("spiking network without LIF parameters".into()))
}

/// Fraction of `stacks` on which teacher and student pick the same action
/// (both argmaxes resolve ties to the lowest index).
pub fn agreement(teacher: &Network, student: &Network, stacks: &[Vec<u8>]) -> Result<f64> {
    if stacks.is_empty() {
        return Err(SdnError::Contract("agreement over zero samples".into()));
    }
    let lif = student_lif(student)?;
    let (t_steps, h, w) = teacher_geometry(teacher)?;
    let refs: Vec<&[u8]> = stacks.iter().map(|s| s.as_slice()).collect();
    let logits = teacher.forward_dnn(&stacks_to_tensor(&refs, t_steps, h, w)?)?;
    let actions = logits.shape()[1];
    let mut same = 0usize;
    for (i, stack) in stacks.iter().enumerate() {
        let row = &logits.data()[i * actions..(i + 1) * actions];
        let t_pick = (1..actions).fold(0, |best, j| if row[j] > row[best] { j } else { best });
        let frames = frames_from_stack(stack, lif.t_steps)?;
        let (fr, _) = snn_forward(student, &frames, &lif)?;
        if fr.argmax() == t_pick {
            same += 1;
        }
    }
    Ok(same as f64 / stacks.len() as f64)
}

fn teacher_geometry(teacher: &Network) -> Result<(usize, usize, usize)> {
    if teacher.kind != NetworkKind::Dnn {
        return Err(SdnError::Contract("teacher must be a conventional network".into()));
    }
    match teacher.input_shape.as_slice() {
        [t, h, w] => Ok((*t, *h, *w)),
        other => Err(SdnError::shape("teacher input", other, &[0, 0, 0])),
    }
}

/// Runs `episodes` complete episodes with the student acting greedily on
/// its firing rates (ties → action 0), pushing every pre-action state
/// stack into `pool`. Returns (env steps taken, per-episode rewards).
pub fn accumulate_pool(
    student: &Network,
    env: &mut MiniPong,
    pool: &mut Ring<Vec<u8>>,
    episodes: usize,
) -> Result<(usize, Vec<f64>)> {
    let lif = student_lif(student)?;
    let mut steps = 0usize;
    let mut rewards = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut history: Vec<Frame> = vec![env.frame()];
        let mut total = 0.0;
        loop {
            let stack = frame_stack_bytes(&history, lif.t_steps)?;
            let frames = frames_from_stack(&stack, lif.t_steps)?;
            let (fr, _) = snn_forward(student, &frames, &lif)?;
            pool.push(stack);
            let (frame, reward, done) =
                env.step(crate::env::Action::from_index(fr.argmax())?)?;
            history.push(frame);
            if history.len() > lif.t_steps {
                history.remove(0);
            }
            steps += 1;
            total += reward;
            if done {
                env.reset();
                rewards.push(total);
                break;
            }
        }
    }
    Ok((steps, rewards))
}

/// Greedily collects `n` visited state stacks from fresh episodes — the
/// held-out sample generator for agreement measurements.
pub fn collect_states(
    student: &Network,
    env_cfg: &EnvConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<u8>>> {
    if n == 0 {
        return Err(SdnError::Contract("collect_states of zero states".into()));
    }
    let lif = student_lif(student)?;
    let mut env = MiniPong::new(*env_cfg, seed)?;
    let mut out = Vec::with_capacity(n);
    let mut history: Vec<Frame> = vec![env.frame()];
    while out.len() < n {
        let stack = frame_stack_bytes(&history, lif.t_steps)?;
        let frames = frames_from_stack(&stack, lif.t_steps)?;
        let (fr, _) = snn_forward(student, &frames, &lif)?;
        out.push(stack);
        let (frame, _, done) = env.step(crate::env::Action::from_index(fr.argmax())?)?;
        history.push(frame);
        if history.len() > lif.t_steps {
            history.remove(0);
        }
        if done {
            env.reset();
            history = vec![env.frame()];
        }
    }
    Ok(out)
}

/// Greedy evaluation of the student: average total reward over `episodes`
/// fresh episodes.
pub fn evaluate_student(
    student: &Network,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    if episodes == 0 {
        return Err(SdnError::Contract("evaluate over zero episodes".into()));
    }
    let lif = student_lif(student)?;
    let mut env = MiniPong::new(*env_cfg, seed)?;
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut history: Vec<Frame> = vec![env.frame()];
        loop {
            let stack = frame_stack_bytes(&history, lif.t_steps)?;
            let frames = frames_from_stack(&stack, lif.t_steps)?;
            let (fr, _) = snn_forward(student, &frames, &lif)?;
            let (frame, reward, done) =
                env.step(crate::env::Action::from_index(fr.argmax())?)?;
            history.push(frame);
            if history.len() > lif.t_steps {
                history.remove(0);
            }
            total += reward;
            if done {
                env.reset();
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}

/// Everything a distillation run produces.
#[derive(Debug, Clone)]
pub struct DistillRun {
    pub student: Network,
    pub curve: Vec<EpisodeStats>,
    pub env_steps: usize,
    pub episodes: usize,
    pub opt_steps: u64,
    /// Batches skipped because the pool was still smaller than the batch.
    pub skipped_batches: usize,
    pub pool_len: usize,
}

/// Distills the frozen `teacher` into `student`. Per epoch the student
/// accumulates pool states from its own greedy play; after `thresh_epoch`
/// epochs, each epoch additionally draws `batches_per_epoch` pool batches,
/// labels them with the teacher, and applies one optimizer step per batch
/// via the spiking backward pass. Deterministic in (`cfg`, `seed`, the
/// given networks).
pub fn train_sdn(
    teacher: &Network,
    student: Network,
    env_cfg: &EnvConfig,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<DistillRun> {
    cfg.validate()?;
    env_cfg.validate()?;
    teacher.validate()?;
    student.validate()?;
    let lif = student_lif(&student)?;
    let (t_steps, h, w) = teacher_geometry(teacher)?;
    if t_steps != lif.t_steps {
        return Err(SdnError::Contract(format!(
            "teacher stacks {t_steps} frames but the student integrates {} timesteps",
            lif.t_steps
        )));
    }
    if (h, w) != (env_cfg.height, env_cfg.width)
        || student.input_shape.iter().product::<usize>() != h * w
    {
        return Err(SdnError::Contract(format!(
            "network geometry does not match the {h}x{w} environment"
        )));
    }

    let mut student = student;
    let mut env = MiniPong::new(*env_cfg, seed ^ 0x55)?;
    let mut pool: Ring<Vec<u8>> = Ring::new(cfg.pool_capacity)?;
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x66);
    let mut adam = Adam::new(cfg.adam);
    let mut mapper = if cfg.loss_mode.is_mse() {
        Some(MseMapper::new(cfg.loss_mode, cfg.scale, cfg.d)?)
    } else {
        None
    };

    let mut run = DistillRun {
        student: student.clone(),
        curve: Vec::new(),
        env_steps: 0,
        episodes: 0,
        opt_steps: 0,
        skipped_batches: 0,
        pool_len: 0,
    };
    let mut last_avg_reward = 0.0;
    for epoch in 1..=cfg.epochs {
        let (steps, rewards) = accumulate_pool(&student, &mut env, &mut pool, cfg.episodes_per_epoch)?;
        run.env_steps += steps;
        run.episodes += rewards.len();
        if !rewards.is_empty() {
            last_avg_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
        }

        let mut losses = Vec::new();
        if epoch > cfg.thresh_epoch {
            for _ in 0..cfg.batches_per_epoch {
                if pool.len() < cfg.batch_size {
                    run.skipped_batches += 1;
                    eprintln!(
                        "warning: epoch {epoch}: pool holds {} states, batch needs {}; skipping",
                        pool.len(),
                        cfg.batch_size
                    );
                    continue;
                }
                let batch = pool.sample(cfg.batch_size, &mut sample_rng)?;
                let refs: Vec<&[u8]> = batch.iter().map(|s| s.as_slice()).collect();
                let logits = teacher.forward_dnn(&stacks_to_tensor(&refs, t_steps, h, w)?)?;
                let actions = logits.shape()[1];
                let n = batch.len() as f64;
                if let Some(m) = mapper.as_mut() {
                    for i in 0..batch.len() {
                        let row = Tensor::from_vec(
                            &[actions],
                            logits.data()[i * actions..(i + 1) * actions].to_vec(),
                        )?;
                        m.observe(&row);
                    }
                }
                let mut batch_value = 0.0;
                let mut grads: Option<Vec<Tensor>> = None;
                for (i, stack) in batch.iter().enumerate() {
                    let o = Tensor::from_vec(
                        &[actions],
                        logits.data()[i * actions..(i + 1) * actions].to_vec(),
                    )?;
                    let frames = frames_from_stack(stack, lif.t_steps)?;
                    let (fr, trace) = snn_forward(&student, &frames, &lif)?;
                    let (value, dfr) = distill_loss(&o, &fr, cfg, mapper.as_ref())?;
                    batch_value += value / n;
                    let dfr_mean = dfr.map(|g| g / n);
                    let sample_grads = snn_backward(&student, &trace, &dfr_mean, &lif)?;
                    match grads.as_mut() {
                        None => grads = Some(sample_grads),
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(&sample_grads) {
                                for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                                    *av += gv;
                                }
                            }
                        }
                    }
                }
                if !batch_value.is_finite() {
                    return Err(SdnError::Training(format!(
                        "epoch {epoch}: non-finite distillation loss {batch_value}"
                    )));
                }
                let grads = grads.expect("non-empty batch");
                let grad_refs: Vec<Option<&Tensor>> = grads.iter().map(Some).collect();
                adam.step(&mut student.params_mut(), &grad_refs)?;
                run.opt_steps += 1;
                losses.push(batch_value);
            }
        }
        let loss = if losses.is_empty() {
            0.0
        } else {
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        run.curve.push(EpisodeStats {
            epoch,
            episodes: run.episodes,
            env_steps: run.env_steps,
            avg_reward: last_avg_reward,
            loss,
        });
    }
    run.pool_len = pool.len();
    run.student = student;
    Ok(run)
}
