//! Gain network: FC (tanh) → GRU cell → FC (linear), mapping Re/Im-stacked
//! innovation features to a complex gain matrix.
//!
//! All parameters live in one flat `Vec<f64>` in the tensor order
//! `fc_in.w, fc_in.b, w_z, u_z, b_z, w_r, u_r, b_r, w_n, u_n, b_n, fc_out.w, fc_out.b`.
//! Weight matrices are row-major `out × in`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use crate::error::dim_err;
use crate::numerics::{unvec, vec as vectorize, ComplexMatrix, ComplexVector};
use crate::rng::seeded;
use crate::{Error, Result, C64};

#[allow(unused_imports)]
use num_traits::Float;

/// Default hidden width multiplier relative to the input width.
pub const HIDDEN_PER_INPUT: usize = 4;

/// Names of the parameter tensors, in storage order.
pub const TENSOR_NAMES: [&str; 13] = [
    "fc_in.w", "fc_in.b", "gru.w_z", "gru.u_z", "gru.b_z", "gru.w_r", "gru.u_r", "gru.b_r", "gru.w_n", "gru.u_n",
    "gru.b_n", "fc_out.w", "fc_out.b",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    input: usize,
    hidden: usize,
    output: usize,
}

#[derive(Clone, Copy)]
enum T {
    FcInW = 0,
    FcInB,
    Wz,
    Uz,
    Bz,
    Wr,
    Ur,
    Br,
    Wn,
    Un,
    Bn,
    FcOutW,
    FcOutB,
}

impl Layout {
    fn sizes(&self) -> [usize; 13] {
        let (i, h, o) = (self.input, self.hidden, self.output);
        [i * h, h, h * h, h * h, h, h * h, h * h, h, h * h, h * h, h, o * h, o]
    }

    fn ranges(&self) -> [Range<usize>; 13] {
        let sizes = self.sizes();
        let mut start = 0;
        core::array::from_fn(|k| {
            let r = start..start + sizes[k];
            start = r.end;
            r
        })
    }

    fn count(&self) -> usize {
        self.sizes().iter().sum()
    }

    fn fan_in(&self, k: usize) -> usize {
        match k {
            0 | 1 => self.input,
            _ => self.hidden,
        }
    }
}

/// Innovation features of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GainFeatures {
    /// `Δy_t = y_t − ŷ_{t|t−1}` (τN).
    pub delta_y: ComplexVector,
    /// `Δx_t = x̂_{t−1|t−1} − x̂_{t−1|t−2}` (pMN).
    pub delta_x: ComplexVector,
}

impl GainFeatures {
    /// `[Re Δy, Im Δy, Re Δx, Im Δx]`.
    pub fn to_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * (self.delta_y.len() + self.delta_x.len()));
        for part in [&self.delta_y, &self.delta_x] {
            v.extend(part.0.iter().map(|c| c.re));
            v.extend(part.0.iter().map(|c| c.im));
        }
        v
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.delta_y.is_finite() && self.delta_x.is_finite()
    }
}

/// GRU hidden state plus the update toggle.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    /// Hidden vector.
    pub h: Vec<f64>,
    /// When false the hidden vector is never overwritten.
    pub update_enabled: bool,
}

impl RecurrentState {
    /// Zero hidden state of the given width.
    pub fn zeros(hidden: usize, update_enabled: bool) -> Self {
        Self {
            h: vec![0.0; hidden],
            update_enabled,
        }
    }
}

/// Intermediate values of one forward call, consumed by [`KpinNetwork::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    x: Vec<f64>,
    a: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    h_new: Vec<f64>,
    update_enabled: bool,
    layout: (usize, usize, usize),
}

impl ForwardTape {
    /// Whether the hidden state was propagated by this step.
    pub fn update_enabled(&self) -> bool {
        self.update_enabled
    }
}

/// Gradients of one backward call.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGradients {
    /// Parameter gradient in flat storage order.
    pub params: Vec<f64>,
    /// `∂L/∂Re Δy + j·∂L/∂Im Δy`.
    pub delta_y: ComplexVector,
    /// `∂L/∂Re Δx + j·∂L/∂Im Δx`.
    pub delta_x: ComplexVector,
    /// Gradient with respect to the incoming hidden state.
    pub hidden: Vec<f64>,
}

/// Gradients with respect to the inputs of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGradients {
    /// `∂L/∂Re Δy + j·∂L/∂Im Δy`.
    pub delta_y: ComplexVector,
    /// `∂L/∂Re Δx + j·∂L/∂Im Δx`.
    pub delta_x: ComplexVector,
    /// Gradient with respect to the incoming hidden state.
    pub hidden: Vec<f64>,
}

/// The FC–GRU–FC gain network.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KpinNetwork {
    signal_dim: usize,
    state_dim: usize,
    hidden_dim: usize,
    seed: u64,
    params: Vec<f64>,
}

impl KpinNetwork {
    /// Randomly initialized network: each tensor uniform in `±1/√fan_in`.
    /// `hidden_dim = None` selects `4·in_dim`.
    pub fn new(signal_dim: usize, state_dim: usize, hidden_dim: Option<usize>, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(signal_dim, state_dim, hidden_dim)?;
        net.seed = seed;
        let layout = net.layout();
        let mut rng = seeded(seed);
        for (k, range) in layout.ranges().into_iter().enumerate() {
            let bound = 1.0 / (layout.fan_in(k) as f64).sqrt();
            for w in &mut net.params[range] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    /// Network with every parameter zero.
    pub fn zeros(signal_dim: usize, state_dim: usize, hidden_dim: Option<usize>) -> Result<Self> {
        if signal_dim == 0 || state_dim == 0 {
            return Err(Error::InvalidParameter("network dimensions must be positive".into()));
        }
        let in_dim = 2 * (signal_dim + state_dim);
        let hidden_dim = hidden_dim.unwrap_or(HIDDEN_PER_INPUT * in_dim);
        if hidden_dim == 0 {
            return Err(Error::InvalidParameter("hidden width must be positive".into()));
        }
        let mut net = Self {
            signal_dim,
            state_dim,
            hidden_dim,
            seed: 0,
            params: Vec::new(),
        };
        net.params = vec![0.0; net.layout().count()];
        Ok(net)
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_params(signal_dim: usize, state_dim: usize, hidden_dim: usize, seed: u64, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(signal_dim, state_dim, Some(hidden_dim))?;
        net.seed = seed;
        net.set_params(params)?;
        Ok(net)
    }

    fn layout(&self) -> Layout {
        Layout {
            input: self.in_dim(),
            hidden: self.hidden_dim,
            output: self.out_dim(),
        }
    }

    /// Signal dimension τN.
    pub fn signal_dim(&self) -> usize {
        self.signal_dim
    }

    /// State dimension pMN.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// `2·(τN + pMN)`.
    pub fn in_dim(&self) -> usize {
        2 * (self.signal_dim + self.state_dim)
    }

    /// GRU width.
    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// `2·pMN·τN`.
    pub fn out_dim(&self) -> usize {
        2 * self.signal_dim * self.state_dim
    }

    /// Initialization seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Flat parameters.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable flat parameters.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Replaces all parameters.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(dim_err("KpinNetwork::set_params", self.params.len(), params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite network parameter".into()));
        }
        self.params = params;
        Ok(())
    }

    /// `(name, range)` of every tensor in storage order.
    pub fn tensors(&self) -> Vec<(&'static str, Range<usize>)> {
        TENSOR_NAMES.iter().copied().zip(self.layout().ranges()).collect()
    }

    /// Euclidean norm of the parameter vector.
    pub fn param_norm(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum::<f64>().sqrt()
    }

    /// Fresh zero hidden state.
    pub fn initial_state(&self, update_enabled: bool) -> RecurrentState {
        RecurrentState::zeros(self.hidden_dim, update_enabled)
    }

    fn tensor(&self, t: T) -> &[f64] {
        let r = self.layout().ranges()[t as usize].clone();
        &self.params[r]
    }

    /// Gain for one step, without recording a tape.
    pub fn forward(&self, feats: &GainFeatures, state: &RecurrentState) -> Result<(ComplexMatrix, RecurrentState)> {
        let (gain, next, _) = self.forward_taped(feats, state)?;
        Ok((gain, next))
    }

    /// Gain for one step plus the tape needed for the backward pass.
    pub fn forward_taped(
        &self,
        feats: &GainFeatures,
        state: &RecurrentState,
    ) -> Result<(ComplexMatrix, RecurrentState, ForwardTape)> {
        if feats.delta_y.len() != self.signal_dim {
            return Err(dim_err("KpinNetwork::forward (delta_y)", self.signal_dim, feats.delta_y.len()));
        }
        if feats.delta_x.len() != self.state_dim {
            return Err(dim_err("KpinNetwork::forward (delta_x)", self.state_dim, feats.delta_x.len()));
        }
        if state.h.len() != self.hidden_dim {
            return Err(dim_err("KpinNetwork::forward (hidden)", self.hidden_dim, state.h.len()));
        }
        let Layout { input, hidden, output } = self.layout();
        let x = feats.to_input();

        let mut a = self.tensor(T::FcInB).to_vec();
        matvec_acc(self.tensor(T::FcInW), hidden, input, &x, &mut a);
        a.iter_mut().for_each(|v| *v = v.tanh());

        let h_prev = state.h.clone();
        let z = gate(self.tensor(T::Wz), self.tensor(T::Uz), self.tensor(T::Bz), &a, &h_prev, sigmoid);
        let r = gate(self.tensor(T::Wr), self.tensor(T::Ur), self.tensor(T::Br), &a, &h_prev, sigmoid);
        let rh: Vec<f64> = r.iter().zip(&h_prev).map(|(r, h)| r * h).collect();
        let n = gate(self.tensor(T::Wn), self.tensor(T::Un), self.tensor(T::Bn), &a, &rh, f64::tanh);
        let h_new: Vec<f64> = (0..hidden).map(|i| (1.0 - z[i]) * n[i] + z[i] * h_prev[i]).collect();

        let mut out = self.tensor(T::FcOutB).to_vec();
        matvec_acc(self.tensor(T::FcOutW), output, hidden, &h_new, &mut out);
        let gain = self.out_to_gain(&out)?;

        let next = RecurrentState {
            h: if state.update_enabled { h_new.clone() } else { state.h.clone() },
            update_enabled: state.update_enabled,
        };
        let tape = ForwardTape {
            x,
            a,
            h_prev,
            z,
            r,
            n,
            h_new,
            update_enabled: state.update_enabled,
            layout: (input, hidden, output),
        };
        Ok((gain, next, tape))
    }

    fn out_to_gain(&self, out: &[f64]) -> Result<ComplexMatrix> {
        let half = out.len() / 2;
        let k = ComplexVector((0..half).map(|i| C64::new(out[i], out[half + i])).collect());
        unvec(&k, self.state_dim, self.signal_dim)
    }

    /// Reverse pass of one step.
    ///
    /// `grad_gain` follows the `∂L/∂Re + j·∂L/∂Im` convention; `grad_hidden_next`
    /// is the gradient arriving at this step's outgoing hidden state.
    pub fn backward(&self, tape: &ForwardTape, grad_gain: &ComplexMatrix, grad_hidden_next: &[f64]) -> Result<StepGradients> {
        let mut params = vec![0.0; self.params.len()];
        let inputs = self.backward_accumulate(tape, grad_gain, grad_hidden_next, &mut params)?;
        Ok(StepGradients {
            params,
            delta_y: inputs.delta_y,
            delta_x: inputs.delta_x,
            hidden: inputs.hidden,
        })
    }

    /// Like [`backward`](Self::backward), but adds the parameter gradient
    /// into `acc` instead of allocating it.
    pub fn backward_accumulate(
        &self,
        tape: &ForwardTape,
        grad_gain: &ComplexMatrix,
        grad_hidden_next: &[f64],
        acc: &mut [f64],
    ) -> Result<InputGradients> {
        let layout = self.layout();
        if acc.len() != self.params.len() {
            return Err(dim_err("KpinNetwork::backward (accumulator)", self.params.len(), acc.len()));
        }
        if tape.layout != (layout.input, layout.hidden, layout.output) {
            return Err(Error::TapeMismatch);
        }
        if grad_gain.shape() != (self.state_dim, self.signal_dim) {
            return Err(dim_err("KpinNetwork::backward", self.state_dim * self.signal_dim, grad_gain.rows() * grad_gain.cols()));
        }
        if grad_hidden_next.len() != layout.hidden {
            return Err(dim_err("KpinNetwork::backward (hidden)", layout.hidden, grad_hidden_next.len()));
        }
        let Layout { input, hidden, output } = layout;
        let ranges = layout.ranges();
        let g = acc;

        let gk = vectorize(grad_gain);
        let half = output / 2;
        let mut dout = vec![0.0; output];
        for i in 0..half {
            dout[i] = gk[i].re;
            dout[half + i] = gk[i].im;
        }

        // fc_out
        outer_acc(&mut g[ranges[T::FcOutW as usize].clone()], &dout, &tape.h_new);
        add_to(&mut g[ranges[T::FcOutB as usize].clone()], &dout);
        let mut dh_new = vec![0.0; hidden];
        matvec_t_acc(self.tensor(T::FcOutW), output, hidden, &dout, &mut dh_new);
        if tape.update_enabled {
            dh_new.iter_mut().zip(grad_hidden_next).for_each(|(d, g)| *d += g);
        }

        // GRU
        let (z, r, n, h) = (&tape.z, &tape.r, &tape.n, &tape.h_prev);
        let mut dh_prev: Vec<f64> = (0..hidden).map(|i| dh_new[i] * z[i]).collect();
        let dan: Vec<f64> = (0..hidden).map(|i| dh_new[i] * (1.0 - z[i]) * (1.0 - n[i] * n[i])).collect();
        let daz: Vec<f64> = (0..hidden).map(|i| dh_new[i] * (h[i] - n[i]) * z[i] * (1.0 - z[i])).collect();
        let rh: Vec<f64> = (0..hidden).map(|i| r[i] * h[i]).collect();

        let mut da = vec![0.0; hidden];
        outer_acc(&mut g[ranges[T::Wn as usize].clone()], &dan, &tape.a);
        outer_acc(&mut g[ranges[T::Un as usize].clone()], &dan, &rh);
        add_to(&mut g[ranges[T::Bn as usize].clone()], &dan);
        matvec_t_acc(self.tensor(T::Wn), hidden, hidden, &dan, &mut da);
        let mut drh = vec![0.0; hidden];
        matvec_t_acc(self.tensor(T::Un), hidden, hidden, &dan, &mut drh);
        let dar: Vec<f64> = (0..hidden).map(|i| drh[i] * h[i] * r[i] * (1.0 - r[i])).collect();
        for i in 0..hidden {
            dh_prev[i] += drh[i] * r[i];
        }

        for (w, u, b, d) in [(T::Wz, T::Uz, T::Bz, &daz), (T::Wr, T::Ur, T::Br, &dar)] {
            outer_acc(&mut g[ranges[w as usize].clone()], d, &tape.a);
            outer_acc(&mut g[ranges[u as usize].clone()], d, h);
            add_to(&mut g[ranges[b as usize].clone()], d);
            matvec_t_acc(self.tensor(w), hidden, hidden, d, &mut da);
            matvec_t_acc(self.tensor(u), hidden, hidden, d, &mut dh_prev);
        }

        // fc_in
        let da1: Vec<f64> = (0..hidden).map(|i| da[i] * (1.0 - tape.a[i] * tape.a[i])).collect();
        outer_acc(&mut g[ranges[T::FcInW as usize].clone()], &da1, &tape.x);
        add_to(&mut g[ranges[T::FcInB as usize].clone()], &da1);
        let mut dx = vec![0.0; input];
        matvec_t_acc(self.tensor(T::FcInW), hidden, input, &da1, &mut dx);

        let (m, s) = (self.signal_dim, self.state_dim);
        let delta_y = ComplexVector((0..m).map(|i| C64::new(dx[i], dx[m + i])).collect());
        let delta_x = ComplexVector((0..s).map(|i| C64::new(dx[2 * m + i], dx[2 * m + s + i])).collect());
        Ok(InputGradients {
            delta_y,
            delta_x,
            hidden: dh_prev,
        })
    }
}

/// Total parameter gradient of a sequence of steps whose only coupling is
/// the recurrent hidden state: steps are processed in reverse, and the hidden
/// gradient is chained backward when the update is enabled.
pub fn bptt_accumulate(net: &KpinNetwork, tapes: &[ForwardTape], grad_gains: &[ComplexMatrix]) -> Result<Vec<f64>> {
    if tapes.len() != grad_gains.len() {
        return Err(dim_err("bptt_accumulate", tapes.len(), grad_gains.len()));
    }
    let mut total = vec![0.0; net.param_count()];
    let mut dh = vec![0.0; net.hidden_dim()];
    for (tape, gk) in tapes.iter().zip(grad_gains).rev() {
        let step = net.backward_accumulate(tape, gk, &dh, &mut total)?;
        dh = if tape.update_enabled { step.hidden } else { vec![0.0; net.hidden_dim()] };
    }
    Ok(total)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gate(w: &[f64], u: &[f64], b: &[f64], x: &[f64], h: &[f64], act: fn(f64) -> f64) -> Vec<f64> {
    let n = b.len();
    let mut out = b.to_vec();
    matvec_acc(w, n, x.len(), x, &mut out);
    matvec_acc(u, n, h.len(), h, &mut out);
    out.iter_mut().for_each(|v| *v = act(*v));
    out
}

/// `out += W·x` for row-major `W` (`rows × cols`).
fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        let row = &w[i * cols..(i + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ·d`.
fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, d: &[f64], out: &mut [f64]) {
    for i in 0..rows {
        let di = d[i];
        if di == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        out.iter_mut().zip(row).for_each(|(o, w)| *o += di * w);
    }
}

/// `g += d·xᵀ`.
fn add_to(g: &mut [f64], d: &[f64]) {
    g.iter_mut().zip(d).for_each(|(g, d)| *g += d);
}

fn outer_acc(g: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (i, di) in d.iter().enumerate() {
        if *di == 0.0 {
            continue;
        }
        g[i * cols..(i + 1) * cols].iter_mut().zip(x).for_each(|(g, x)| *g += di * x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian_matrix, complex_gaussian_vector};

    fn feats(rng: &mut crate::rng::SeededRng, m: usize, s: usize) -> GainFeatures {
        GainFeatures {
            delta_y: complex_gaussian_vector(rng, m, 1.0),
            delta_x: complex_gaussian_vector(rng, s, 1.0),
        }
    }

    /// Real loss `Re⟨W, K⟩ = Σ Re(conj(W)·K)`, whose gradient in the
    /// `∂/∂Re + j∂/∂Im` convention is exactly `W`.
    fn linear_loss(w: &ComplexMatrix, k: &ComplexMatrix) -> f64 {
        w.as_slice().iter().zip(k.as_slice()).map(|(a, b)| (a.conj() * b).re).sum()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn parameter_count_and_dims() {
        let net = KpinNetwork::new(2, 3, None, 1).unwrap();
        let (i, h, o) = (10, 40, 12);
        assert_eq!(net.in_dim(), i);
        assert_eq!(net.hidden_dim(), h);
        assert_eq!(net.out_dim(), o);
        assert_eq!(net.param_count(), i * h + h + 3 * (h * h + h * h + h) + o * h + o);
        assert!(net.params().iter().all(|p| p.is_finite() && p.abs() <= 1.0 / (i as f64).sqrt()));
        assert_eq!(net.tensors().len(), 13);
    }

    #[test]
    fn zero_network_gives_zero_gain() {
        let net = KpinNetwork::zeros(2, 4, Some(5)).unwrap();
        let mut rng = seeded(3);
        let (k, _) = net.forward(&feats(&mut rng, 2, 4), &net.initial_state(true)).unwrap();
        assert_eq!(k.shape(), (4, 2));
        assert_eq!(k.max_abs(), 0.0);
    }

    #[test]
    fn disabled_update_is_stateless() {
        let net = KpinNetwork::new(2, 2, Some(6), 5).unwrap();
        let mut rng = seeded(4);
        let f = feats(&mut rng, 2, 2);
        let mut state = net.initial_state(false);
        let (k1, s1) = net.forward(&f, &state).unwrap();
        assert_eq!(s1, state);
        for _ in 0..3 {
            state = net.forward(&feats(&mut rng, 2, 2), &state).unwrap().1;
        }
        let (k2, _) = net.forward(&f, &state).unwrap();
        assert_eq!(k1, k2);

        let mut on = net.initial_state(true);
        let (k_on, s_on) = net.forward(&f, &on).unwrap();
        assert_eq!(k_on, k1);
        assert_ne!(s_on.h, on.h);
        on = s_on;
        assert_ne!(net.forward(&f, &on).unwrap().0, k1);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = KpinNetwork::new(3, 2, Some(7), 9).unwrap();
        let mut rng = seeded(1);
        let f = feats(&mut rng, 3, 2);
        let mut s = net.initial_state(true);
        s.h = (0..7).map(|i| 0.1 * i as f64).collect();
        assert_eq!(net.forward(&f, &s).unwrap(), net.forward(&f, &s).unwrap());
        assert_eq!(KpinNetwork::new(3, 2, Some(7), 9).unwrap(), net);
    }

    #[test]
    fn forward_dimension_errors() {
        let net = KpinNetwork::new(2, 2, Some(3), 0).unwrap();
        let mut rng = seeded(1);
        let bad = feats(&mut rng, 3, 2);
        assert!(net.forward(&bad, &net.initial_state(true)).is_err());
        let good = feats(&mut rng, 2, 2);
        assert!(net.forward(&good, &RecurrentState::zeros(4, true)).is_err());
    }

    /// Straight-line evaluation of the same equations on separately
    /// unpacked weights.
    fn oracle_forward(net: &KpinNetwork, x: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = net.params();
        let (ni, nh, no) = (net.in_dim(), net.hidden_dim(), net.out_dim());
        let mut off = 0;
        let mut take = |len: usize| {
            let s = &p[off..off + len];
            off += len;
            s.to_vec()
        };
        let w1 = take(ni * nh);
        let b1 = take(nh);
        let mut gates = Vec::new();
        for _ in 0..3 {
            let w = take(nh * nh);
            let u = take(nh * nh);
            let b = take(nh);
            gates.push((w, u, b));
        }
        let w2 = take(no * nh);
        let b2 = take(no);

        let mut a = vec![0.0; nh];
        for i in 0..nh {
            let mut s = b1[i];
            for j in 0..ni {
                s += w1[i * ni + j] * x[j];
            }
            a[i] = s.tanh();
        }
        let lin = |g: &(Vec<f64>, Vec<f64>, Vec<f64>), hh: &[f64], i: usize| {
            let mut s = g.2[i];
            for j in 0..nh {
                s += g.0[i * nh + j] * a[j] + g.1[i * nh + j] * hh[j];
            }
            s
        };
        let z: Vec<f64> = (0..nh).map(|i| 1.0 / (1.0 + (-lin(&gates[0], h, i)).exp())).collect();
        let r: Vec<f64> = (0..nh).map(|i| 1.0 / (1.0 + (-lin(&gates[1], h, i)).exp())).collect();
        let rh: Vec<f64> = (0..nh).map(|i| r[i] * h[i]).collect();
        let n: Vec<f64> = (0..nh).map(|i| lin(&gates[2], &rh, i).tanh()).collect();
        let h2: Vec<f64> = (0..nh).map(|i| (1.0 - z[i]) * n[i] + z[i] * h[i]).collect();
        let out = (0..no)
            .map(|i| b2[i] + (0..nh).map(|j| w2[i * nh + j] * h2[j]).sum::<f64>())
            .collect();
        (out, h2)
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        // in_dim = 4, out_dim = 4
        let mut net = KpinNetwork::new(1, 1, Some(3), 17).unwrap();
        let mut rng = seeded(8);
        let params: Vec<f64> = (0..net.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        net.set_params(params).unwrap();
        let f = feats(&mut rng, 1, 1);
        let mut s = net.initial_state(true);
        s.h = vec![0.3, -0.2, 0.7];
        let (k, s2) = net.forward(&f, &s).unwrap();
        let (out, h2) = oracle_forward(&net, &f.to_input(), &s.h);
        assert!((k[(0, 0)].re - out[0]).abs() < 1e-12);
        assert!((k[(0, 0)].im - out[1]).abs() < 1e-12);
        for i in 0..3 {
            assert!((s2.h[i] - h2[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gain_layout_is_column_stacked() {
        let mut net = KpinNetwork::zeros(2, 3, Some(2)).unwrap();
        let bias = net.tensors()[12].1.clone();
        for (i, j) in bias.clone().enumerate() {
            net.params_mut()[j] = i as f64;
        }
        let mut rng = seeded(0);
        let (k, _) = net.forward(&feats(&mut rng, 2, 3), &net.initial_state(true)).unwrap();
        // vec index of (r, c) is c·rows + r; imaginary half offset by 6
        assert_eq!(k[(1, 0)], C64::new(1.0, 7.0));
        assert_eq!(k[(0, 1)], C64::new(3.0, 9.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = KpinNetwork::new(2, 2, Some(4), 3).unwrap();
        let mut rng = seeded(2);
        let (_, _, tape) = net.forward_taped(&feats(&mut rng, 2, 2), &net.initial_state(true)).unwrap();
        let g = net.backward(&tape, &ComplexMatrix::zeros(2, 2), &[0.0; 4]).unwrap();
        assert!(g.params.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tape_mismatch_is_reported() {
        let a = KpinNetwork::new(2, 2, Some(4), 3).unwrap();
        let b = KpinNetwork::new(2, 2, Some(5), 3).unwrap();
        let mut rng = seeded(2);
        let (_, _, tape) = a.forward_taped(&feats(&mut rng, 2, 2), &a.initial_state(true)).unwrap();
        assert!(matches!(
            b.backward(&tape, &ComplexMatrix::zeros(2, 2), &[0.0; 5]),
            Err(Error::TapeMismatch)
        ));
    }

    #[test]
    fn single_step_gradients_match_finite_differences() {
        let net = KpinNetwork::new(2, 2, Some(5), 11).unwrap();
        let mut rng = seeded(12);
        let f = feats(&mut rng, 2, 2);
        let mut s = net.initial_state(true);
        s.h = (0..5).map(|_| rng.random_range(-0.5..0.5)).collect();
        let w = complex_gaussian_matrix(&mut rng, 2, 2, 1.0);
        let hw: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        // loss = Re⟨W, K⟩ + hw·h'
        let loss = |net: &KpinNetwork, f: &GainFeatures, s: &RecurrentState| {
            let (k, s2) = net.forward(f, s).unwrap();
            linear_loss(&w, &k) + s2.h.iter().zip(&hw).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, _, tape) = net.forward_taped(&f, &s).unwrap();
        let g = net.backward(&tape, &w, &hw).unwrap();
        let step = 1e-5;
        for i in 0..net.param_count() {
            let mut plus = net.clone();
            plus.params_mut()[i] += step;
            let mut minus = net.clone();
            minus.params_mut()[i] -= step;
            let fd = (loss(&plus, &f, &s) - loss(&minus, &f, &s)) / (2.0 * step);
            assert!(rel_err(fd, g.params[i]) < 1e-5, "param {i}: fd {fd} vs {}", g.params[i]);
        }
        for i in 0..2 {
            let parts: [(C64, fn(C64) -> f64); 2] = [(C64::new(1.0, 0.0), |c| c.re), (C64::new(0.0, 1.0), |c| c.im)];
            for (dir, part) in parts {
                let mut fp = f.clone();
                fp.delta_y[i] += dir * step;
                let mut fm = f.clone();
                fm.delta_y[i] -= dir * step;
                let fd = (loss(&net, &fp, &s) - loss(&net, &fm, &s)) / (2.0 * step);
                assert!(rel_err(fd, part(g.delta_y[i])) < 1e-5, "delta_y {i}");
            }
        }
        for i in 0..5 {
            let mut sp = s.clone();
            sp.h[i] += step;
            let mut sm = s.clone();
            sm.h[i] -= step;
            let fd = (loss(&net, &f, &sp) - loss(&net, &f, &sm)) / (2.0 * step);
            assert!(rel_err(fd, g.hidden[i]) < 1e-5, "hidden {i}");
        }
    }

    fn unrolled(net: &KpinNetwork, fs: &[GainFeatures], ws: &[ComplexMatrix], update: bool) -> f64 {
        let mut s = net.initial_state(update);
        let mut total = 0.0;
        for (f, w) in fs.iter().zip(ws) {
            let (k, s2) = net.forward(f, &s).unwrap();
            total += linear_loss(w, &k);
            s = s2;
        }
        total
    }

    fn bptt(net: &KpinNetwork, fs: &[GainFeatures], ws: &[ComplexMatrix], update: bool) -> Vec<f64> {
        let mut s = net.initial_state(update);
        let mut tapes = Vec::new();
        for f in fs {
            let (_, s2, tape) = net.forward_taped(f, &s).unwrap();
            tapes.push(tape);
            s = s2;
        }
        bptt_accumulate(net, &tapes, ws).unwrap()
    }

    #[test]
    fn bptt_matches_unrolled_finite_differences() {
        let net = KpinNetwork::new(1, 2, Some(4), 21).unwrap();
        let mut rng = seeded(22);
        let fs: Vec<_> = (0..2).map(|_| feats(&mut rng, 1, 2)).collect();
        let ws: Vec<_> = (0..2).map(|_| complex_gaussian_matrix(&mut rng, 2, 1, 1.0)).collect();
        let g = bptt(&net, &fs, &ws, true);
        let step = 1e-5;
        for i in 0..net.param_count() {
            let mut plus = net.clone();
            plus.params_mut()[i] += step;
            let mut minus = net.clone();
            minus.params_mut()[i] -= step;
            let fd = (unrolled(&plus, &fs, &ws, true) - unrolled(&minus, &fs, &ws, true)) / (2.0 * step);
            assert!(rel_err(fd, g[i]) < 1e-5, "param {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn bptt_single_step_equals_backward() {
        let net = KpinNetwork::new(2, 1, Some(3), 4).unwrap();
        let mut rng = seeded(5);
        let f = feats(&mut rng, 2, 1);
        let w = complex_gaussian_matrix(&mut rng, 1, 2, 1.0);
        let (_, _, tape) = net.forward_taped(&f, &net.initial_state(true)).unwrap();
        let direct = net.backward(&tape, &w, &[0.0; 3]).unwrap().params;
        assert_eq!(bptt_accumulate(&net, &[tape], &[w]).unwrap(), direct);
    }

    #[test]
    fn bptt_without_update_is_sum_of_steps() {
        let net = KpinNetwork::new(2, 1, Some(3), 4).unwrap();
        let mut rng = seeded(6);
        let fs: Vec<_> = (0..3).map(|_| feats(&mut rng, 2, 1)).collect();
        let ws: Vec<_> = (0..3).map(|_| complex_gaussian_matrix(&mut rng, 1, 2, 1.0)).collect();
        let total = bptt(&net, &fs, &ws, false);
        let mut sum = vec![0.0; net.param_count()];
        for (f, w) in fs.iter().zip(&ws) {
            let (_, _, tape) = net.forward_taped(f, &net.initial_state(false)).unwrap();
            let g = net.backward(&tape, w, &[0.0; 3]).unwrap();
            sum.iter_mut().zip(&g.params).for_each(|(s, g)| *s += g);
        }
        for (a, b) in total.iter().zip(&sum) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
