//! Hybrid filter-then-predict rollout with a learned gain, the supervision
//! strategies, backpropagation through the whole recursion, and Adam.
//!
//! A rollout starts cold (`x̂ = 0`, `Δx = 0`, zero hidden state) and, for each
//! observation `y_t`, computes
//!
//! ```text
//! Δy_t   = y_t − D·x̂_{t|t−1}
//! K_t    = g_ψ(Δy_t, Δx_t)
//! x̂_{t|t}   = x̂_{t|t−1} + K_t·Δy_t
//! Δx_{t+1}  = K_t·Δy_t
//! x̂_{t+1|t} = A·x̂_{t|t}
//! ```

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::ar_ssm::Ssm;
use crate::error::dim_err;
use crate::ftp::{kalman_gain, kf_filter_step, kf_predict_step, KalmanState, PredictionRecord, PredictionTrace};
use crate::net::{ForwardTape, GainFeatures, KpinNetwork, RecurrentState};
use crate::numerics::{ComplexMatrix, ComplexVector};
use crate::rng::{complex_gaussian_vector, seeded, SeededRng};
use crate::{Error, Result, C64};

#[allow(unused_imports)]
use num_traits::Float;

/// Which quantity the training loss supervises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Strategy {
    /// `‖h_t − ĥ_{t|t}‖²`: filtered estimate against channel labels.
    FilterSupervised,
    /// `‖h_t − ĥ_{t|t−1}‖²`: predicted channel against channel labels.
    PredictionSupervised,
    /// `‖y_t − ŷ_{t|t−1}‖²`: predicted signal against the received signal.
    Unsupervised,
}

impl Strategy {
    /// Whether the strategy consumes channel labels.
    pub fn needs_labels(self) -> bool {
        !matches!(self, Strategy::Unsupervised)
    }

    /// Short label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::FilterSupervised => "S1",
            Strategy::PredictionSupervised => "S2",
            Strategy::Unsupervised => "S3",
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    /// Subsequence length T_s.
    pub t_s: usize,
    /// Subsequences per epoch n_b.
    pub n_b: usize,
    /// Number of epochs n_e.
    pub n_e: usize,
    /// Adam learning rate.
    pub lr: f64,
    /// Weight of the `‖ψ‖` penalty.
    pub beta: f64,
    /// Loss head.
    pub strategy: Strategy,
    /// Relative label noise level (γ for S1, σ for S2).
    pub label_noise: Option<f64>,
    /// Whether the GRU hidden state is propagated.
    pub gru_update: bool,
    /// Seed for subsequence sampling and label noise.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            t_s: 10,
            n_b: 10,
            n_e: 50,
            lr: 1e-3,
            beta: 1e-5,
            strategy: Strategy::Unsupervised,
            label_noise: None,
            gru_update: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Checks the configuration against a training prefix of `len` slots.
    pub fn validate(&self, len: usize) -> Result<usize> {
        if self.t_s == 0 || self.n_b == 0 {
            return Err(Error::InvalidParameter("T_s and n_b must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::InvalidParameter("lr and beta must be non-negative".into()));
        }
        if matches!(self.label_noise, Some(x) if !(x >= 0.0)) {
            return Err(Error::InvalidParameter("label noise must be non-negative".into()));
        }
        let n_s = len / self.t_s;
        if self.n_b > n_s {
            return Err(Error::InvalidParameter(alloc::format!(
                "n_b = {} exceeds the {n_s} available subsequences",
                self.n_b
            )));
        }
        Ok(n_s)
    }
}

/// Anything that supplies one gain matrix per rollout step.
pub trait GainSource {
    /// Gain for the step with the given features.
    fn next_gain(&mut self, feats: &GainFeatures) -> Result<ComplexMatrix>;
}

/// The gain network with its recurrent state, optionally recording tapes.
#[derive(Debug, Clone)]
pub struct NetGain<'a> {
    net: &'a KpinNetwork,
    state: RecurrentState,
    tapes: Option<Vec<ForwardTape>>,
}

impl<'a> NetGain<'a> {
    /// Fresh zero hidden state.
    pub fn new(net: &'a KpinNetwork, gru_update: bool) -> Self {
        Self {
            net,
            state: net.initial_state(gru_update),
            tapes: None,
        }
    }

    /// Like [`NetGain::new`] but keeps every forward tape.
    pub fn recording(net: &'a KpinNetwork, gru_update: bool) -> Self {
        Self {
            tapes: Some(Vec::new()),
            ..Self::new(net, gru_update)
        }
    }

    /// Current recurrent state.
    pub fn state(&self) -> &RecurrentState {
        &self.state
    }

    /// Recorded tapes, in step order.
    pub fn into_tapes(self) -> Vec<ForwardTape> {
        self.tapes.unwrap_or_default()
    }
}

impl GainSource for NetGain<'_> {
    fn next_gain(&mut self, feats: &GainFeatures) -> Result<ComplexMatrix> {
        let (gain, next, tape) = self.net.forward_taped(feats, &self.state)?;
        self.state = next;
        if let Some(t) = self.tapes.as_mut() {
            t.push(tape);
        }
        Ok(gain)
    }
}

/// Supplies the covariance-derived Kalman gain, tracking the covariances
/// alongside the rollout (they do not depend on the data).
#[derive(Debug, Clone)]
pub struct KalmanGainInjector<'a> {
    ssm: &'a Ssm,
    state: KalmanState,
}

impl<'a> KalmanGainInjector<'a> {
    /// Starts from the covariances of `init`.
    pub fn new(ssm: &'a Ssm, init: &KalmanState) -> Self {
        Self {
            ssm,
            state: init.clone(),
        }
    }
}

impl GainSource for KalmanGainInjector<'_> {
    fn next_gain(&mut self, _feats: &GainFeatures) -> Result<ComplexMatrix> {
        let k = kalman_gain(&self.state, self.ssm)?;
        let y = self.state.y_pred.clone();
        let filtered = kf_filter_step(&self.state, &y, self.ssm)?;
        self.state = kf_predict_step(&filtered, self.ssm)?;
        Ok(k)
    }
}

/// Recursion state carried between hybrid steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    /// `x̂_{t|t−1}`.
    pub x_prior: ComplexVector,
    /// `ŷ_{t|t−1}`.
    pub y_pred: ComplexVector,
    /// `Δx_t`, the previous posterior correction.
    pub delta_x: ComplexVector,
}

impl HybridState {
    /// Cold start: everything zero.
    pub fn cold(ssm: &Ssm) -> Self {
        Self {
            x_prior: ComplexVector::zeros(ssm.state_dim()),
            y_pred: ComplexVector::zeros(ssm.signal_dim()),
            delta_x: ComplexVector::zeros(ssm.state_dim()),
        }
    }

    /// Starts at a given prior mean (e.g. from a Kalman state).
    pub fn from_prior(ssm: &Ssm, x_prior: ComplexVector) -> Result<Self> {
        if x_prior.len() != ssm.state_dim() {
            return Err(dim_err("HybridState::from_prior", ssm.state_dim(), x_prior.len()));
        }
        Ok(Self {
            y_pred: ssm.d.mul_vec(&x_prior)?,
            delta_x: ComplexVector::zeros(ssm.state_dim()),
            x_prior,
        })
    }
}

/// Everything computed in one hybrid step.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridStep {
    /// `x̂_{t|t−1}` used by the step.
    pub x_prior: ComplexVector,
    /// Network features (`Δy_t`, `Δx_t`).
    pub features: GainFeatures,
    /// Gain `K_t`.
    pub gain: ComplexMatrix,
    /// `x̂_{t|t}`.
    pub x_post: ComplexVector,
    /// `ĥ_{t+1|t}`.
    pub h_pred: ComplexVector,
    /// `ŷ_{t+1|t}`.
    pub y_pred: ComplexVector,
}

/// One hybrid filter-then-predict step on observation `y`.
pub fn hybrid_ftp_step<G: GainSource + ?Sized>(
    ssm: &Ssm,
    gains: &mut G,
    state: &HybridState,
    y: &ComplexVector,
) -> Result<(HybridState, HybridStep)> {
    if y.len() != ssm.signal_dim() {
        return Err(dim_err("hybrid_ftp_step", ssm.signal_dim(), y.len()));
    }
    let features = GainFeatures {
        delta_y: y - &state.y_pred,
        delta_x: state.delta_x.clone(),
    };
    let gain = gains.next_gain(&features)?;
    let correction = gain.mul_vec(&features.delta_y)?;
    let x_post = &state.x_prior + &correction;
    let x_prior = ssm.a.mul_vec(&x_post)?;
    let y_pred = ssm.d.mul_vec(&x_prior)?;
    let step = HybridStep {
        x_prior: state.x_prior.clone(),
        features,
        gain,
        x_post,
        h_pred: ssm.extract(&x_prior),
        y_pred: y_pred.clone(),
    };
    let next = HybridState {
        x_prior,
        y_pred,
        delta_x: correction,
    };
    Ok((next, step))
}

/// Rolls the hybrid recursion over all `signals`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridRollout {
    /// Per-step records.
    pub steps: Vec<HybridStep>,
    /// State after the last step.
    pub last: HybridState,
}

impl HybridRollout {
    /// Runs the recursion from `init`.
    pub fn run<G: GainSource + ?Sized>(ssm: &Ssm, gains: &mut G, init: HybridState, signals: &[ComplexVector]) -> Result<Self> {
        let mut state = init;
        let mut steps = Vec::with_capacity(signals.len());
        for y in signals {
            let (next, step) = hybrid_ftp_step(ssm, gains, &state, y)?;
            steps.push(step);
            state = next;
        }
        Ok(Self { steps, last: state })
    }

    /// Predictions as a trace.
    pub fn to_trace(&self) -> PredictionTrace {
        PredictionTrace::new(
            self.steps
                .iter()
                .map(|s| PredictionRecord {
                    h_pred: s.h_pred.clone(),
                    y_pred: s.y_pred.clone(),
                    x_post: Some(s.x_post.clone()),
                })
                .collect(),
        )
    }
}

/// `‖y_next − D·A·(x̂_prior + K·Δy)‖²`.
pub fn single_step_loss(
    ssm: &Ssm,
    x_prior: &ComplexVector,
    gain: &ComplexMatrix,
    delta_y: &ComplexVector,
    y_next: &ComplexVector,
) -> Result<f64> {
    let x_post = x_prior + &gain.mul_vec(delta_y)?;
    let pred = ssm.d.mul_vec(&ssm.a.mul_vec(&x_post)?)?;
    if pred.len() != y_next.len() {
        return Err(dim_err("single_step_loss", pred.len(), y_next.len()));
    }
    Ok((y_next - &pred).norm_sqr())
}

/// `(1/(n_b·T_s))·Σ losses + β·‖ψ‖`, one inner list per subsequence.
pub fn epoch_objective(losses: &[Vec<f64>], net: &KpinNetwork, beta: f64) -> Result<f64> {
    let t_s = losses.first().ok_or(Error::Empty("subsequence losses"))?.len();
    if t_s == 0 || losses.iter().any(|l| l.len() != t_s) {
        return Err(Error::InvalidParameter("every subsequence needs the same nonzero number of losses".into()));
    }
    let total: f64 = losses.iter().flatten().sum();
    Ok(total / (losses.len() * t_s) as f64 + beta * net.param_norm())
}

/// Channel labels with circular Gaussian noise of relative level `level`:
/// each label receives noise with per-entry variance `level²·‖h‖²/len`.
pub fn perturb_labels(labels: &[ComplexVector], level: f64, seed: u64) -> Vec<ComplexVector> {
    let mut rng = seeded(seed);
    labels
        .iter()
        .map(|h| {
            let var = level * level * h.norm_sqr() / h.len().max(1) as f64;
            h + &complex_gaussian_vector(&mut rng, h.len(), var)
        })
        .collect()
}

/// Per-step losses of one subsequence together with the parameter gradient
/// of their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsequenceGradient {
    /// Loss of every step.
    pub losses: Vec<f64>,
    /// Gradient of the summed losses.
    pub grad: Vec<f64>,
}

/// Per-step strategy losses of a finished rollout.
pub fn strategy_losses(
    ssm: &Ssm,
    steps: &[HybridStep],
    strategy: Strategy,
    labels: Option<&[ComplexVector]>,
) -> Result<Vec<f64>> {
    let labels = check_labels(strategy, labels, steps.len())?;
    let mn = ssm.channel_dim();
    steps
        .iter()
        .enumerate()
        .map(|(t, s)| {
            Ok(match strategy {
                Strategy::Unsupervised => s.features.delta_y.norm_sqr(),
                Strategy::PredictionSupervised => (&labels[t] - &s.x_prior.head(mn)).norm_sqr(),
                Strategy::FilterSupervised => (&labels[t] - &s.x_post.head(mn)).norm_sqr(),
            })
        })
        .collect()
}

fn check_labels(strategy: Strategy, labels: Option<&[ComplexVector]>, len: usize) -> Result<&[ComplexVector]> {
    match (strategy.needs_labels(), labels) {
        (true, Some(l)) if l.len() == len => Ok(l),
        (true, Some(l)) => Err(dim_err("strategy labels", len, l.len())),
        (true, None) => Err(Error::InvalidParameter(alloc::format!("{} needs channel labels", strategy.label()))),
        (false, Some(_)) => Err(Error::InvalidParameter("the unsupervised strategy takes no labels".into())),
        (false, None) => Ok(&[]),
    }
}

/// Cold-start rollout over one subsequence followed by reverse-mode
/// differentiation through the gain network, the hidden state, and the
/// filter state path.
pub fn subsequence_gradient(
    ssm: &Ssm,
    net: &KpinNetwork,
    signals: &[ComplexVector],
    labels: Option<&[ComplexVector]>,
    strategy: Strategy,
    gru_update: bool,
) -> Result<SubsequenceGradient> {
    let mut gains = NetGain::recording(net, gru_update);
    let rollout = HybridRollout::run(ssm, &mut gains, HybridState::cold(ssm), signals)?;
    let tapes = gains.into_tapes();
    let losses = strategy_losses(ssm, &rollout.steps, strategy, labels)?;
    let labels = check_labels(strategy, labels, signals.len())?;

    let mn = ssm.channel_dim();
    let n = ssm.state_dim();
    let mut grad = vec![0.0; net.param_count()];
    let mut g_x_next = ComplexVector::zeros(n);
    let mut g_dx_next = ComplexVector::zeros(n);
    let mut g_h_next = vec![0.0; net.hidden_dim()];
    let two = C64::new(2.0, 0.0);

    for (t, (step, tape)) in rollout.steps.iter().zip(&tapes).enumerate().rev() {
        let mut g_post = ssm.a.adjoint_mul_vec(&g_x_next)?;
        if strategy == Strategy::FilterSupervised {
            let r = &labels[t] - &step.x_post.head(mn);
            for i in 0..mn {
                g_post[i] -= two * r[i];
            }
        }
        let g_w = &g_post + &g_dx_next;
        let g_gain = g_w.outer_adjoint(&step.features.delta_y);
        let back = net.backward_accumulate(tape, &g_gain, &g_h_next, &mut grad)?;

        let mut g_dy = &step.gain.adjoint_mul_vec(&g_w)? + &back.delta_y;
        if strategy == Strategy::Unsupervised {
            g_dy = &g_dy + &step.features.delta_y.scale(two);
        }
        let mut g_prior = &g_post - &ssm.d.adjoint_mul_vec(&g_dy)?;
        if strategy == Strategy::PredictionSupervised {
            let r = &labels[t] - &step.x_prior.head(mn);
            for i in 0..mn {
                g_prior[i] -= two * r[i];
            }
        }
        g_x_next = g_prior;
        g_dx_next = back.delta_x;
        g_h_next = back.hidden;
    }
    Ok(SubsequenceGradient { losses, grad })
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    /// Step size.
    pub lr: f64,
    /// First-moment decay.
    pub beta1: f64,
    /// Second-moment decay.
    pub beta2: f64,
    /// Denominator offset.
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    /// Standard decays 0.9 / 0.999 and offset 1e-8.
    pub fn new(lr: f64, n_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(dim_err("Adam::step", self.m.len(), params.len().max(grad.len())));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    /// Number of updates applied.
    pub fn steps_taken(&self) -> u32 {
        self.t
    }
}

/// Start indices of the `floor(len/T_s)` disjoint consecutive subsequences.
pub fn segment(len: usize, t_s: usize) -> Vec<core::ops::Range<usize>> {
    if t_s == 0 {
        return Vec::new();
    }
    (0..len / t_s).map(|j| j * t_s..(j + 1) * t_s).collect()
}

/// Value and gradient of the epoch objective over the given subsequences.
pub fn objective_and_gradient(
    ssm: &Ssm,
    net: &KpinNetwork,
    signals: &[ComplexVector],
    labels: Option<&[ComplexVector]>,
    batch: &[core::ops::Range<usize>],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut losses = Vec::with_capacity(batch.len());
    let mut grad = vec![0.0; net.param_count()];
    for r in batch {
        let sub = subsequence_gradient(
            ssm,
            net,
            &signals[r.clone()],
            labels.map(|l| &l[r.clone()]),
            cfg.strategy,
            cfg.gru_update,
        )?;
        grad.iter_mut().zip(&sub.grad).for_each(|(g, s)| *g += s);
        losses.push(sub.losses);
    }
    let value = epoch_objective(&losses, net, cfg.beta)?;
    let scale = 1.0 / (batch.len() * cfg.t_s) as f64;
    let norm = net.param_norm();
    for (g, p) in grad.iter_mut().zip(net.params()) {
        *g *= scale;
        if norm > 0.0 {
            *g += cfg.beta * p / norm;
        }
    }
    Ok((value, grad))
}

/// Stateful training loop; one call to [`Trainer::run_epoch`] is one
/// optimizer update.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    ssm: &'a Ssm,
    signals: &'a [ComplexVector],
    labels: Option<Vec<ComplexVector>>,
    cfg: TrainConfig,
    segments: Vec<core::ops::Range<usize>>,
    net: KpinNetwork,
    adam: Adam,
    rng: SeededRng,
    curve: Vec<f64>,
}

impl<'a> Trainer<'a> {
    /// Validates the configuration and prepares (possibly perturbed) labels.
    pub fn new(
        signals: &'a [ComplexVector],
        ssm: &'a Ssm,
        net: KpinNetwork,
        cfg: TrainConfig,
        labels: Option<&[ComplexVector]>,
    ) -> Result<Self> {
        cfg.validate(signals.len())?;
        if net.signal_dim() != ssm.signal_dim() || net.state_dim() != ssm.state_dim() {
            return Err(dim_err("Trainer::new", ssm.state_dim(), net.state_dim()));
        }
        let labels = match labels {
            Some(l) if l.len() < signals.len() => return Err(dim_err("Trainer::new (labels)", signals.len(), l.len())),
            Some(l) => {
                let l = &l[..signals.len()];
                Some(match cfg.label_noise {
                    Some(level) if level > 0.0 => perturb_labels(l, level, cfg.seed ^ 0x5eed_1abe_1000),
                    _ => l.to_vec(),
                })
            }
            None => None,
        };
        check_labels(cfg.strategy, labels.as_deref().map(|l| &l[..0]), 0)?;
        let adam = Adam::new(cfg.lr, net.param_count());
        Ok(Self {
            ssm,
            signals,
            labels,
            segments: segment(signals.len(), cfg.t_s),
            rng: seeded(cfg.seed),
            cfg,
            net,
            adam,
            curve: Vec::new(),
        })
    }

    /// Samples `n_b` subsequences with replacement, evaluates the objective
    /// and its gradient, and applies one Adam update. Returns the objective
    /// before the update.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let batch: Vec<_> = (0..self.cfg.n_b)
            .map(|_| self.segments[self.rng.random_range(0..self.segments.len())].clone())
            .collect();
        let (value, grad) =
            objective_and_gradient(self.ssm, &self.net, self.signals, self.labels.as_deref(), &batch, &self.cfg)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NotConverged("training objective became non-finite"));
        }
        self.adam.step(self.net.params_mut(), &grad)?;
        self.curve.push(value);
        Ok(value)
    }

    /// Objective values of the epochs run so far.
    pub fn curve(&self) -> &[f64] {
        &self.curve
    }

    /// Current network.
    pub fn net(&self) -> &KpinNetwork {
        &self.net
    }

    /// Consumes the trainer.
    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            net: self.net,
            loss_curve: self.curve,
        }
    }
}

/// Trained network and per-epoch objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Final parameters.
    pub net: KpinNetwork,
    /// Objective of every epoch.
    pub loss_curve: Vec<f64>,
}

/// Full training run of `cfg.n_e` epochs.
pub fn train(
    signals: &[ComplexVector],
    ssm: &Ssm,
    net: KpinNetwork,
    cfg: &TrainConfig,
    labels: Option<&[ComplexVector]>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(signals, ssm, net, cfg.clone(), labels)?;
    for _ in 0..cfg.n_e {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}

/// Frozen-parameter rollout from a cold start over the first `horizon`
/// signals, emitting `ĥ_{t+1|t}` after each one.
pub fn test(signals: &[ComplexVector], ssm: &Ssm, net: &KpinNetwork, horizon: usize, gru_update: bool) -> Result<PredictionTrace> {
    if horizon > signals.len() {
        return Err(Error::InvalidParameter(alloc::format!(
            "horizon {horizon} exceeds {} signals",
            signals.len()
        )));
    }
    let mut gains = NetGain::new(net, gru_update);
    Ok(HybridRollout::run(ssm, &mut gains, HybridState::cold(ssm), &signals[..horizon])?.to_trace())
}
