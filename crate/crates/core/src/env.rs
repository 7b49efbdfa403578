//! MiniPong: a deterministic, two-action, image-observed paddle game on a
//! small grid. One player defends the right edge; the ball reflects off the
//! other three sides. Binary frames are the only observation, so velocity
//! is observable only across frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdnError};
use crate::tensor::Tensor;

/// Rows occupied by the paddle.
pub const PADDLE_HEIGHT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct EnvConfig {
    pub height: usize,
    pub width: usize,
    /// Steps after which the episode truncates (reward-neutral).
    pub episode_cap: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { height: 16, width: 16, episode_cap: 500 }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < PADDLE_HEIGHT + 1 || self.width < 4 {
            return Err(SdnError::parameter(
                "env",
                format!("grid {}x{} too small", self.height, self.width),
            ));
        }
        if self.episode_cap == 0 {
            return Err(SdnError::parameter("episode_cap", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up = 0,
    Down = 1,
}

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Action::Up),
            1 => Ok(Action::Down),
            other => Err(SdnError::parameter("action", format!("unknown action index {other}"))),
        }
    }
}

/// One binary observation: 1 at the ball cell and the three paddle cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    /// Row-major 0/1 cells, length `height * width`.
    pub cells: Vec<u8>,
}

impl Frame {
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            &[self.height, self.width],
            self.cells.iter().map(|&c| c as f64).collect(),
        )
        .expect("cell count matches the grid")
    }

    /// Binary PGM (P5) bytes, 0 for empty cells and 255 for occupied ones.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.cells.iter().map(|&c| if c != 0 { 255 } else { 0 }));
        out
    }
}

/// Stacks the last `t` frames of `history` oldest-first into a
/// `[t, H, W]` tensor, repeating the oldest frame when the history is
/// still shorter than the window.
pub fn frame_stack(history: &[Frame], t: usize) -> Result<Tensor> {
    let bytes = frame_stack_bytes(history, t)?;
    let (h, w) = (history[0].height, history[0].width);
    Tensor::from_vec(&[t, h, w], bytes.iter().map(|&c| c as f64).collect())
}

/// Same stacking and padding as [`frame_stack`], kept as raw 0/1 bytes for
/// compact replay storage.
pub fn frame_stack_bytes(history: &[Frame], t: usize) -> Result<Vec<u8>> {
    if history.is_empty() {
        return Err(SdnError::Contract("frame_stack of empty history".into()));
    }
    if t == 0 {
        return Err(SdnError::parameter("frame_stack", "window must be >= 1"));
    }
    let (h, w) = (history[0].height, history[0].width);
    let mut data = Vec::with_capacity(t * h * w);
    for slot in 0..t {
        // Index into history so the window ends at the newest frame.
        let idx = (history.len() + slot).saturating_sub(t).min(history.len() - 1);
        let frame = &history[idx];
        if frame.height != h || frame.width != w {
            return Err(SdnError::Contract("mixed frame sizes in history".into()));
        }
        data.extend_from_slice(&frame.cells);
    }
    Ok(data)
}

/// Splits a byte stack into its `t` per-timestep frames, each a flat
/// `[H·W]` tensor in chronological order — the spiking network's input
/// view of the same state the stacked tensor gives a conventional
/// network.
pub fn frames_from_stack(stack: &[u8], t: usize) -> Result<Vec<Tensor>> {
    if t == 0 || stack.is_empty() || stack.len() % t != 0 {
        return Err(SdnError::Contract(format!(
            "cannot split a {}-byte stack into {t} frames",
            stack.len()
        )));
    }
    let dim = stack.len() / t;
    (0..t)
        .map(|i| {
            Tensor::from_vec(&[dim], stack[i * dim..(i + 1) * dim].iter().map(|&c| c as f64).collect())
        })
        .collect()
}

/// Re-inflates one or more byte stacks into an `[N, t, H, W]` batch.
pub fn stacks_to_tensor(stacks: &[&[u8]], t: usize, h: usize, w: usize) -> Result<Tensor> {
    let plane = t * h * w;
    let mut data = Vec::with_capacity(stacks.len() * plane);
    for s in stacks {
        if s.len() != plane {
            return Err(SdnError::shape("frame stack bytes", &[s.len()], &[plane]));
        }
        data.extend(s.iter().map(|&c| c as f64));
    }
    Tensor::from_vec(&[stacks.len(), t, h, w], data)
}

#[derive(Debug, Clone)]
pub struct MiniPong {
    cfg: EnvConfig,
    rng: ChaCha8Rng,
    /// Ball position and velocity.
    r: usize,
    c: usize,
    dr: i32,
    dc: i32,
    /// Paddle top row, occupying `p..p + PADDLE_HEIGHT` in the last column.
    p: usize,
    steps: usize,
    done: bool,
}

impl MiniPong {
    /// Creates the environment and performs the first reset. The RNG is
    /// seeded once; later resets continue its stream, so a whole multi-
    /// episode run is a pure function of (seed, action sequence).
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut env = Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            r: 0,
            c: 0,
            dr: 1,
            dc: 1,
            p: 0,
            steps: 0,
            done: false,
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Starts a fresh episode: ball at (H/2, 1) moving right, random
    /// vertical direction, paddle centered.
    pub fn reset(&mut self) -> Frame {
        self.r = self.cfg.height / 2;
        self.c = 1;
        self.dr = if self.rng.gen::<bool>() { 1 } else { -1 };
        self.dc = 1;
        self.p = (self.cfg.height - PADDLE_HEIGHT) / 2;
        self.steps = 0;
        self.done = false;
        self.frame()
    }

    pub fn frame(&self) -> Frame {
        let (h, w) = (self.cfg.height, self.cfg.width);
        let mut cells = vec![0u8; h * w];
        for row in self.p..self.p + PADDLE_HEIGHT {
            cells[row * w + (w - 1)] = 1;
        }
        cells[self.r * w + self.c] = 1;
        Frame { height: h, width: w, cells }
    }

    /// Advances one step: the paddle moves, walls and the paddle reflect
    /// the ball at its current cell, then the ball moves. Reaching the last
    /// column means a miss (−1, done); deflecting the ball earns +1; the
    /// step cap truncates without changing the reward.
    pub fn step(&mut self, action: Action) -> Result<(Frame, f64, bool)> {
        if self.done {
            return Err(SdnError::Contract("step on a finished episode".into()));
        }
        let h = self.cfg.height as i32;
        let w = self.cfg.width as i32;
        match action {
            Action::Up => self.p = self.p.saturating_sub(1),
            Action::Down => {
                self.p = (self.p + 1).min(self.cfg.height - PADDLE_HEIGHT);
            }
        }
        let mut reward = 0.0;
        if self.r == 0 && self.dr < 0 {
            self.dr = 1;
        }
        if self.r as i32 == h - 1 && self.dr > 0 {
            self.dr = -1;
        }
        if self.c == 0 && self.dc < 0 {
            self.dc = 1;
        }
        let on_paddle = self.r >= self.p && self.r < self.p + PADDLE_HEIGHT;
        if self.c as i32 == w - 2 && self.dc > 0 && on_paddle {
            self.dc = -1;
            reward = 1.0;
        }
        self.r = (self.r as i32 + self.dr) as usize;
        self.c = (self.c as i32 + self.dc) as usize;
        if self.c as i32 == w - 1 {
            reward = -1.0;
            self.done = true;
        }
        self.steps += 1;
        if self.steps >= self.cfg.episode_cap {
            self.done = true;
        }
        Ok((self.frame(), reward, self.done))
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn ball(&self) -> (usize, usize) {
        (self.r, self.c)
    }

    pub fn velocity(&self) -> (i32, i32) {
        (self.dr, self.dc)
    }

    pub fn paddle_top(&self) -> usize {
        self.p
    }

    /// Scripted expert: steer the paddle center toward the ball row. Never
    /// concedes, so it bounds the attainable episode reward.
    pub fn tracking_policy(&self) -> Action {
        let center = self.p + 1;
        if self.r < center {
            Action::Up
        } else if self.r > center {
            Action::Down
        } else if self.dr < 0 {
            Action::Up
        } else {
            Action::Down
        }
    }
}
