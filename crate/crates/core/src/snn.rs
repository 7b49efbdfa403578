//! Leaky integrate-and-fire dynamics: the T-step spiking forward pass with
//! firing-rate decoding, and the backward pass through the unrolled membrane
//! recurrence (reverse traversal over both layer index and time index, with
//! a rectangular surrogate derivative at the spike threshold).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdnError};
use crate::network::{Layer, Network, NetworkKind};
use crate::tensor::{dense_forward, Tensor};

/// LIF neuron constants shared by every layer of a spiking network.
///
/// `tau` may be 0 (memoryless neuron, `u_t = i_t`) or 1 (no leak); both
/// degenerate ends are useful for analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct LifConfig {
    /// Leak factor applied to the surviving membrane each step.
    pub tau: f64,
    /// Firing threshold on the membrane potential.
    pub v_thresh: f64,
    /// Simulation window length T.
    pub t_steps: usize,
    /// Width of the rectangular surrogate derivative around the threshold.
    pub surrogate_a: f64,
    /// When true, the reset factor `(1 - o_{t-1})` is treated as a constant
    /// in the backward pass instead of being differentiated through the
    /// surrogate.
    pub detach_reset: bool,
}

impl Default for LifConfig {
    fn default() -> Self {
        Self { tau: 0.5, v_thresh: 0.5, t_steps: 8, surrogate_a: 1.0, detach_reset: false }
    }
}

impl LifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(SdnError::parameter("tau", format!("must be in [0, 1], got {}", self.tau)));
        }
        if !(self.v_thresh > 0.0) {
            return Err(SdnError::parameter("v_thresh", format!("must be > 0, got {}", self.v_thresh)));
        }
        if self.t_steps == 0 {
            return Err(SdnError::parameter("t_steps", "must be >= 1"));
        }
        if !(self.surrogate_a > 0.0) {
            return Err(SdnError::parameter(
                "surrogate_a",
                format!("must be > 0, got {}", self.surrogate_a),
            ));
        }
        Ok(())
    }
}

/// Per-layer neuron state carried between timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    /// Membrane potentials u.
    pub u: Tensor,
    /// Previous-step spikes, entries in {0, 1}.
    pub o_prev: Tensor,
}

impl LifState {
    pub fn zeros(width: usize) -> Self {
        Self { u: Tensor::zeros(&[width]), o_prev: Tensor::zeros(&[width]) }
    }
}

/// Rectangular surrogate derivative of the spike nonlinearity:
/// `(1/a) · 1[|u - v_thresh| <= a/2]`.
pub fn rect_surrogate(u: f64, v_thresh: f64, a: f64) -> f64 {
    if (u - v_thresh).abs() <= a / 2.0 {
        1.0 / a
    } else {
        0.0
    }
}

/// One membrane update: `u_t = tau * u_{t-1} * (1 - o_{t-1}) + i_t`, spikes
/// where `u_t >= v_thresh`, hard reset carried by the `(1 - o)` factor on
/// the next step. The bias is part of `i_t` and appears exactly once.
pub fn lif_step(state: &LifState, i_t: &Tensor, cfg: &LifConfig) -> Result<(LifState, Tensor)> {
    if state.u.shape() != i_t.shape() || state.o_prev.shape() != i_t.shape() {
        return Err(SdnError::shape("lif_step", state.u.shape(), i_t.shape()));
    }
    let mut u = i_t.clone();
    for ((u, &up), &op) in u.data_mut().iter_mut().zip(state.u.data()).zip(state.o_prev.data()) {
        *u += cfg.tau * up * (1.0 - op);
    }
    let o = u.map(|v| if v >= cfg.v_thresh { 1.0 } else { 0.0 });
    Ok((LifState { u, o_prev: o.clone() }, o))
}

/// Everything the backward pass needs from one forward window: the input
/// frames and, per layer and timestep, the synaptic current `i_t`, the
/// membrane `u_t` (pre-reset), and the spikes `o_t`.
#[derive(Debug, Clone)]
pub struct SpikeTrace {
    /// Flattened input frame per timestep, each `[input_dim]`.
    pub frames: Vec<Tensor>,
    /// `currents[layer][t]`, shape `[width(layer)]`.
    pub currents: Vec<Vec<Tensor>>,
    /// `membranes[layer][t]` — the thresholded (pre-reset) potential.
    pub membranes: Vec<Vec<Tensor>>,
    /// `spikes[layer][t]`, entries in {0, 1}.
    pub spikes: Vec<Vec<Tensor>>,
}

fn check_snn(net: &Network) -> Result<()> {
    if net.kind != NetworkKind::Snn {
        return Err(SdnError::Contract("spiking forward on a non-spiking network".into()));
    }
    net.validate()
}

/// Runs the spiking network over `frames` (chronological order, one per
/// timestep) and decodes the output firing rates `fr = (sum_t o_t) / T`.
/// State starts at zero; the trace retains all intermediates for the
/// backward pass.
pub fn snn_forward(net: &Network, frames: &[Tensor], cfg: &LifConfig) -> Result<(Tensor, SpikeTrace)> {
    check_snn(net)?;
    cfg.validate()?;
    if frames.is_empty() {
        return Err(SdnError::Contract("empty frame sequence".into()));
    }
    if frames.len() != cfg.t_steps {
        return Err(SdnError::Contract(format!(
            "got {} frames for a {}-step window",
            frames.len(),
            cfg.t_steps
        )));
    }
    let input_dim: usize = net.input_shape.iter().product();
    let widths = net.layer_widths();
    let layers = net.layers.len();
    let mut states: Vec<LifState> = widths.iter().map(|&w| LifState::zeros(w)).collect();
    let mut trace = SpikeTrace {
        frames: Vec::with_capacity(frames.len()),
        currents: vec![Vec::with_capacity(frames.len()); layers],
        membranes: vec![Vec::with_capacity(frames.len()); layers],
        spikes: vec![Vec::with_capacity(frames.len()); layers],
    };
    let out_dim = *widths.last().expect("validated network has layers");
    let mut spike_sum = Tensor::zeros(&[out_dim]);
    for frame in frames {
        if frame.len() != input_dim {
            return Err(SdnError::shape("snn frame", frame.shape(), &net.input_shape));
        }
        let flat = frame.reshaped(&[frame.len()])?;
        trace.frames.push(flat.clone());
        let mut x = flat;
        for (l, layer) in net.layers.iter().enumerate() {
            let Layer::LifDense { w, b } = layer else { unreachable!("validated snn") };
            let i_t = dense_forward(&x.reshaped(&[1, x.len()])?, w, b)?.reshaped(&[widths[l]])?;
            let (next, o) = lif_step(&states[l], &i_t, cfg)?;
            trace.currents[l].push(i_t);
            trace.membranes[l].push(next.u.clone());
            trace.spikes[l].push(o.clone());
            states[l] = next;
            x = o;
        }
        for (s, &o) in spike_sum.data_mut().iter_mut().zip(x.data()) {
            *s += o;
        }
    }
    let fr = spike_sum.map(|v| v / frames.len() as f64);
    Ok((fr, trace))
}

/// Gradients of a scalar loss with respect to every parameter, given the
/// loss gradient at the firing-rate output. Returned in [`Network::params`]
/// order (per layer: weights, then bias).
///
/// The traversal runs backwards over time and, within each timestep, from
/// the output layer down. Per layer `l` and step `t`:
///
/// * `d o_t` collects the same-step contribution from layer `l+1` (or
///   `dfr / T` at the output), plus — unless `detach_reset` — the next-step
///   reset-path term `-tau * u_t * d u_{t+1}`;
/// * `d u_t = d o_t * surrogate'(u_t) + tau * (1 - o_t) * d u_{t+1}`;
/// * `d i_t = d u_t`, which feeds the weight/bias gradients and the
///   downward pass `W^T d i_t`.
pub fn snn_backward(
    net: &Network,
    trace: &SpikeTrace,
    dfr: &Tensor,
    cfg: &LifConfig,
) -> Result<Vec<Tensor>> {
    check_snn(net)?;
    cfg.validate()?;
    let widths = net.layer_widths();
    let layers = net.layers.len();
    let t_steps = trace.frames.len();
    if t_steps != cfg.t_steps
        || trace.currents.len() != layers
        || trace.currents.iter().any(|c| c.len() != t_steps)
    {
        return Err(SdnError::Contract("trace does not match network/window".into()));
    }
    let out_dim = *widths.last().expect("validated network");
    if dfr.len() != out_dim {
        return Err(SdnError::shape("snn_backward loss grad", dfr.shape(), &[out_dim]));
    }

    let mut grads: Vec<(Tensor, Tensor)> = net
        .layers
        .iter()
        .map(|layer| {
            let Layer::LifDense { w, b } = layer else { unreachable!("validated snn") };
            (Tensor::zeros(w.shape()), Tensor::zeros(b.shape()))
        })
        .collect();
    // d loss / d u_{t+1} per layer, from the previously processed timestep.
    let mut du_next: Vec<Tensor> = widths.iter().map(|&w| Tensor::zeros(&[w])).collect();
    let inv_t = 1.0 / t_steps as f64;

    for t in (0..t_steps).rev() {
        // Gradient arriving at layer l's spikes from layer l+1 at this step.
        let mut dx_above: Option<Tensor> = None;
        for l in (0..layers).rev() {
            let u_t = &trace.membranes[l][t];
            let o_t = &trace.spikes[l][t];
            let mut do_t = if l == layers - 1 {
                dfr.map(|v| v * inv_t)
            } else {
                dx_above.take().expect("set by the layer above")
            };
            if !cfg.detach_reset {
                for ((d, &du1), &u) in
                    do_t.data_mut().iter_mut().zip(du_next[l].data()).zip(u_t.data())
                {
                    *d += -cfg.tau * u * du1;
                }
            }
            let mut du_t = Tensor::zeros(&[widths[l]]);
            for (i, du) in du_t.data_mut().iter_mut().enumerate() {
                let surr = rect_surrogate(u_t.data()[i], cfg.v_thresh, cfg.surrogate_a);
                *du = do_t.data()[i] * surr
                    + cfg.tau * (1.0 - o_t.data()[i]) * du_next[l].data()[i];
            }
            let x_in = if l == 0 { &trace.frames[t] } else { &trace.spikes[l - 1][t] };
            let (dw, db) = &mut grads[l];
            let in_dim = x_in.len();
            for (o, &du) in du_t.data().iter().enumerate() {
                if du != 0.0 {
                    let row = &mut dw.data_mut()[o * in_dim..(o + 1) * in_dim];
                    for (gw, &x) in row.iter_mut().zip(x_in.data()) {
                        *gw += du * x;
                    }
                }
                db.data_mut()[o] += du;
            }
            if l > 0 {
                let Layer::LifDense { w, .. } = &net.layers[l] else { unreachable!() };
                let mut dx = Tensor::zeros(&[in_dim]);
                for (o, &du) in du_t.data().iter().enumerate() {
                    if du != 0.0 {
                        let row = &w.data()[o * in_dim..(o + 1) * in_dim];
                        for (gx, &wv) in dx.data_mut().iter_mut().zip(row) {
                            *gx += du * wv;
                        }
                    }
                }
                dx_above = Some(dx);
            }
            du_next[l] = du_t;
        }
    }
    Ok(grads.into_iter().flat_map(|(w, b)| [w, b]).collect())
}

/// Closed-form membrane accumulation of a single subthreshold neuron:
/// `u_T = sum_t tau^{T-t} * i_t`, cross-checked against iterated
/// [`lif_step`]. A spike before the final step violates the caller's
/// precondition and is reported.
pub fn membrane_accumulation(inputs: &[f64], tau: f64, v_thresh: f64) -> Result<f64> {
    if inputs.is_empty() {
        return Err(SdnError::Contract("membrane_accumulation of no inputs".into()));
    }
    let cfg = LifConfig { tau, v_thresh, t_steps: inputs.len(), ..LifConfig::default() };
    cfg.validate()?;
    let t_total = inputs.len();
    let closed: f64 = inputs
        .iter()
        .enumerate()
        .map(|(idx, &i)| tau.powi((t_total - 1 - idx) as i32) * i)
        .sum();
    let mut state = LifState::zeros(1);
    let mut iterated = 0.0;
    for (idx, &i) in inputs.iter().enumerate() {
        let (next, o) = lif_step(&state, &Tensor::from_vec(&[1], vec![i])?, &cfg)?;
        iterated = next.u.data()[0];
        if o.data()[0] != 0.0 && idx + 1 < t_total {
            return Err(SdnError::Contract(format!(
                "spike fired at step {} of {}, before the window end",
                idx + 1,
                t_total
            )));
        }
        state = next;
    }
    assert!(
        (closed - iterated).abs() <= 1e-12,
        "closed form {closed} and iterated update {iterated} disagree"
    );
    Ok(closed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(tau: f64, v_thresh: f64, t_steps: usize) -> LifConfig {
        LifConfig { tau, v_thresh, t_steps, ..LifConfig::default() }
    }

    fn one(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    #[test]
    fn quiescent_neuron_stays_silent() {
        let (next, o) = lif_step(&LifState::zeros(1), &one(0.0), &cfg(0.5, 1.0, 1)).unwrap();
        assert_eq!(next.u.data(), &[0.0]);
        assert_eq!(o.data(), &[0.0]);
    }

    #[test]
    fn scalar_recurrence_fires_and_hard_resets() {
        let c = cfg(0.5, 1.0, 2);
        let state = LifState { u: one(0.8), o_prev: one(0.0) };
        let (state, o) = lif_step(&state, &one(0.7), &c).unwrap();
        assert_eq!(state.u.data(), &[1.1]);
        assert_eq!(o.data(), &[1.0]);
        // After the spike, the surviving membrane contributes exactly zero.
        let (state, o) = lif_step(&state, &one(0.2), &c).unwrap();
        assert_eq!(state.u.data(), &[0.2]);
        assert_eq!(o.data(), &[0.0]);
    }

    fn one_neuron_net(w: f64, b: f64, lif: LifConfig) -> Network {
        let mut net = Network::snn(1, &[1], lif, 0).unwrap();
        let Layer::LifDense { w: wt, b: bt } = &mut net.layers[0] else { unreachable!() };
        wt.data_mut()[0] = w;
        bt.data_mut()[0] = b;
        net
    }

    #[test]
    fn zero_frames_zero_bias_give_zero_rate() {
        let lif = cfg(0.5, 0.5, 4);
        let net = Network::snn(4, &[3, 2], lif, 9).unwrap();
        let frames = vec![Tensor::zeros(&[4]); 4];
        let (fr, _) = snn_forward(&net, &frames, &lif).unwrap();
        assert_eq!(fr.data(), &[0.0, 0.0]);
    }

    #[test]
    fn single_step_rates_are_binary() {
        let lif = cfg(0.5, 0.5, 1);
        let net = Network::snn(3, &[2], lif, 21).unwrap();
        let frames = vec![Tensor::from_vec(&[3], vec![1.0, 0.0, 1.0]).unwrap()];
        let (fr, _) = snn_forward(&net, &frames, &lif).unwrap();
        assert!(fr.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn constant_suprathreshold_drive_saturates_rate() {
        let lif = cfg(0.7, 0.5, 6);
        let net = one_neuron_net(2.0 * lif.v_thresh, 0.0, lif);
        let frames = vec![Tensor::from_vec(&[1], vec![1.0]).unwrap(); 6];
        let (fr, trace) = snn_forward(&net, &frames, &lif).unwrap();
        assert_eq!(fr.data(), &[1.0]);
        assert!(trace.spikes[0].iter().all(|o| o.data() == [1.0]));
    }

    #[test]
    fn rates_are_multiples_of_one_over_t() {
        let lif = cfg(0.5, 0.5, 8);
        let net = Network::snn(6, &[5, 2], lif, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let frames: Vec<Tensor> = (0..8)
                .map(|_| Tensor::from_fn(&[6], |_| rng.gen_range(0.0..1.5)))
                .collect();
            let (fr, trace) = snn_forward(&net, &frames, &lif).unwrap();
            for &v in fr.data() {
                let scaled = v * 8.0;
                assert!((scaled - scaled.round()).abs() < 1e-12 && (0.0..=1.0).contains(&v));
            }
            for per_layer in &trace.spikes {
                for o in per_layer {
                    assert!(o.data().iter().all(|&s| s == 0.0 || s == 1.0));
                }
            }
        }
    }

    #[test]
    fn frame_order_changes_rates() {
        // One neuron, tau = 1, threshold 1: [1, -0.5] spikes once,
        // [-0.5, 1] never reaches threshold (residual -0.5 cancels the 1).
        let lif = cfg(1.0, 1.0, 2);
        let net = one_neuron_net(1.0, 0.0, lif);
        let a = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![-0.5]).unwrap();
        let (fr_ab, _) = snn_forward(&net, &[a.clone(), b.clone()], &lif).unwrap();
        let (fr_ba, _) = snn_forward(&net, &[b, a], &lif).unwrap();
        assert_eq!(fr_ab.data(), &[0.5]);
        assert_eq!(fr_ba.data(), &[0.0]);
    }

    #[test]
    fn forward_rejects_empty_and_miscounted_frames() {
        let lif = cfg(0.5, 0.5, 2);
        let net = Network::snn(2, &[2], lif, 0).unwrap();
        assert!(snn_forward(&net, &[], &lif).is_err());
        let one = vec![Tensor::zeros(&[2])];
        assert!(snn_forward(&net, &one, &lif).is_err());
    }

    #[test]
    fn accumulation_closed_forms() {
        let plain_sum = membrane_accumulation(&[0.1, 0.2, 0.3], 1.0, 10.0).unwrap();
        assert!((plain_sum - 0.6).abs() <= 1e-12);
        assert_eq!(membrane_accumulation(&[0.1, 0.2, 0.3], 0.0, 10.0).unwrap(), 0.3);
        assert_eq!(membrane_accumulation(&[1.0, 1.0, 1.0], 0.5, 10.0).unwrap(), 1.75);
    }

    #[test]
    fn accumulation_reports_early_spike() {
        let err = membrane_accumulation(&[5.0, 0.0, 0.0], 0.5, 1.0).unwrap_err();
        assert!(err.to_string().contains("step 1"), "{err}");
    }

    #[test]
    fn subthreshold_identity_random_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let t = rng.gen_range(1..=16);
            let tau = [0.0, 0.25, 0.5, 1.0][rng.gen_range(0..4)];
            let inputs: Vec<f64> = (0..t).map(|_| rng.gen_range(-0.05..0.05)).collect();
            // Threshold far above any reachable potential: never spikes.
            let u = membrane_accumulation(&inputs, tau, 10.0).unwrap();
            let closed: f64 = inputs
                .iter()
                .enumerate()
                .map(|(idx, &i)| tau.powi((t - 1 - idx) as i32) * i)
                .sum();
            assert!((u - closed).abs() <= 1e-12);
        }
    }

    #[test]
    fn narrow_surrogate_far_membranes_zero_gradients() {
        // All membrane potentials sit far from threshold; with a tiny
        // surrogate window, nothing propagates.
        let lif = LifConfig { tau: 0.5, v_thresh: 0.5, t_steps: 3, surrogate_a: 1e-9, detach_reset: false };
        let net = one_neuron_net(0.1, 0.0, lif);
        let frames = vec![Tensor::from_vec(&[1], vec![0.5]).unwrap(); 3];
        let (_, trace) = snn_forward(&net, &frames, &lif).unwrap();
        let grads = snn_backward(&net, &trace, &Tensor::scalar(1.0), &lif).unwrap();
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_step_subthreshold_matches_affine_gradients() {
        // T = 1, membranes inside the unit surrogate window but below
        // threshold: the backward pass reduces to the affine network's
        // gradient, dW = dfr (x)^T and db = dfr.
        let lif = cfg(0.5, 0.5, 1);
        let mut net = Network::snn(3, &[2], lif, 15).unwrap();
        {
            let Layer::LifDense { w, b } = &mut net.layers[0] else { unreachable!() };
            w.data_mut().copy_from_slice(&[0.5, 0.4, 0.3, 0.2, 0.6, 0.1]);
            b.data_mut().copy_from_slice(&[0.05, 0.02]);
        }
        let frame = Tensor::from_vec(&[3], vec![0.2, 0.1, 0.05]).unwrap();
        let (fr, trace) = snn_forward(&net, &[frame.clone()], &lif).unwrap();
        assert_eq!(fr.data(), &[0.0, 0.0]);
        for &u in trace.membranes[0][0].data() {
            assert!(u < lif.v_thresh && u > lif.v_thresh - 0.5, "u = {u} outside window");
        }
        let dfr = Tensor::from_vec(&[2], vec![0.3, -0.6]).unwrap();
        let grads = snn_backward(&net, &trace, &dfr, &lif).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                let expect = dfr.data()[o] * frame.data()[i];
                assert!((grads[0].data()[o * 3 + i] - expect).abs() < 1e-12);
            }
            assert!((grads[1].data()[o] - dfr.data()[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn detach_reset_changes_gradients_when_spiking() {
        let coupled = LifConfig { tau: 0.8, v_thresh: 0.5, t_steps: 3, surrogate_a: 2.0, detach_reset: false };
        let detached = LifConfig { detach_reset: true, ..coupled };
        let net = one_neuron_net(1.0, 0.0, coupled);
        let frames = vec![Tensor::from_vec(&[1], vec![0.6]).unwrap(); 3];
        let (_, trace) = snn_forward(&net, &frames, &coupled).unwrap();
        let g_coupled = snn_backward(&net, &trace, &Tensor::scalar(1.0), &coupled).unwrap();
        let g_detached = snn_backward(&net, &trace, &Tensor::scalar(1.0), &detached).unwrap();
        assert_ne!(g_coupled[0].data(), g_detached[0].data());
    }

    #[test]
    fn config_validation_bounds() {
        assert!(LifConfig { tau: -0.1, ..LifConfig::default() }.validate().is_err());
        assert!(LifConfig { tau: 1.1, ..LifConfig::default() }.validate().is_err());
        assert!(LifConfig { v_thresh: 0.0, ..LifConfig::default() }.validate().is_err());
        assert!(LifConfig { t_steps: 0, ..LifConfig::default() }.validate().is_err());
        assert!(LifConfig { surrogate_a: 0.0, ..LifConfig::default() }.validate().is_err());
        assert!(LifConfig { tau: 0.0, ..LifConfig::default() }.validate().is_ok());
        assert!(LifConfig { tau: 1.0, ..LifConfig::default() }.validate().is_ok());
    }
}
