//! The feature-weaving network.
//!
//! Both agent streams are kept stacked along the batch axis: a batch of `B`
//! instances becomes a `[2B, N, N, C]` state whose first `B` entries hold the
//! side-A tensors `Z^A[b, i, j, :]` (agent `a_i` looking at candidate `b_j`)
//! and whose last `B` entries hold the side-B tensors `Z^B[b, j, i, :]`.
//! Cross-concatenation appends to every feature the partner stream's view of
//! the same pair, so each layer sees both sides' opinions.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weavematch_autodiff::{BatchStats, Checkpoint, ParamId, ParamStore, Scalar, Tape, Tensor, Var};
use weavematch_core::{scale_ranks, PreferenceInstance};

use crate::config::{ModelConfig, Variant};
use crate::error::{NnError, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; running statistics are reported back.
    Train,
    /// Frozen running statistics.
    Eval,
}

#[derive(Debug, Clone)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

#[derive(Debug, Clone)]
struct Encoder {
    conv1: ParamId,
    alpha1: ParamId,
    conv2: ParamId,
    alpha2: ParamId,
    /// One norm, or one per stream (asymmetric variant).
    norms: Vec<Norm>,
}

/// Batch statistics to fold into one norm's running averages.
#[derive(Debug, Clone)]
pub struct NormUpdate<T> {
    mean: ParamId,
    var: ParamId,
    stats: BatchStats<T>,
}

/// Result of a recorded forward pass.
pub struct Output<T> {
    /// Combined logits `[B, N, M]`.
    pub logits: Var,
    pub norm_updates: Vec<NormUpdate<T>>,
}

/// Logits and both softmax views of a batch, detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMatching<T> {
    /// `[B, N, M]`.
    pub logits: Tensor<T>,
    /// Softmax over candidates for each A agent, `[B, N, M]`.
    pub row_softmax: Tensor<T>,
    /// Softmax over A agents for each candidate, `[B, M, N]`.
    pub col_softmax: Tensor<T>,
}

impl<T: Scalar> SoftMatching<T> {
    pub fn batch(&self) -> usize {
        self.logits.shape()[0]
    }

    /// Row-major `N x M` logits of instance `b`, widened to f64.
    pub fn instance_logits(&self, b: usize) -> Vec<f64> {
        let s = self.logits.shape();
        let len = s[1] * s[2];
        self.logits.data()[b * len..(b + 1) * len].iter().map(|v| v.to_f64_lossy()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct WeaveNet<T> {
    config: ModelConfig,
    store: ParamStore<T>,
    /// Per layer, one encoder (or two for the dual variant).
    layers: Vec<Vec<Encoder>>,
    projection: Option<ParamId>,
    head_w: ParamId,
    head_b: ParamId,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform<T: Scalar>(&mut self, shape: &[usize], bound: f64) -> Tensor<T> {
        Tensor::from_fn(shape.to_vec(), |_| T::of(self.rng.random_range(-bound..=bound)))
    }
}

impl<T: Scalar> WeaveNet<T> {
    /// Fresh weights drawn from `seed`: every linear map is uniform in
    /// `±1/sqrt(fan_in)`, PReLU slopes start at 0.25, batch norms at identity.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init { rng: ChaCha8Rng::seed_from_u64(seed) };
        let mut store = ParamStore::new();
        let (d, dp) = (config.width, config.pool_width);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 1..=config.layers {
            let cat = 2 * config.layer_input_width(l);
            let (encoders, norms) = match config.variant {
                Variant::Symmetric => (1, 1),
                Variant::Asymmetric => (1, 2),
                Variant::Dual => (2, 1),
            };
            let mut layer = Vec::with_capacity(encoders);
            for e in 0..encoders {
                let p = format!("layer{l}.enc{e}");
                let conv1 = store.add(format!("{p}.conv1"), init.uniform(&[cat, dp], (cat as f64).powf(-0.5)), true)?;
                let alpha1 = store.add(format!("{p}.alpha1"), Tensor::full(vec![1], T::of(PRELU_INIT)), true)?;
                let conv2 = store.add(
                    format!("{p}.conv2"),
                    init.uniform(&[cat + dp, d], ((cat + dp) as f64).powf(-0.5)),
                    true,
                )?;
                let alpha2 = store.add(format!("{p}.alpha2"), Tensor::full(vec![1], T::of(PRELU_INIT)), true)?;
                let mut ns = Vec::with_capacity(norms);
                for k in 0..norms {
                    let q = format!("{p}.bn{k}");
                    ns.push(Norm {
                        gamma: store.add(format!("{q}.gamma"), Tensor::full(vec![d], T::one()), true)?,
                        beta: store.add(format!("{q}.beta"), Tensor::zeros(vec![d]), true)?,
                        mean: store.add(format!("{q}.running_mean"), Tensor::zeros(vec![d]), false)?,
                        var: store.add(format!("{q}.running_var"), Tensor::full(vec![d], T::one()), false)?,
                    });
                }
                layer.push(Encoder { conv1, alpha1, conv2, alpha2, norms: ns });
            }
            layers.push(layer);
        }
        let projection = if config.shortcuts().any(|(_, s)| config.needs_projection(s)) {
            let c = config.input_channels();
            Some(store.add("shortcut.proj", init.uniform(&[c, d], (c as f64).powf(-0.5)), true)?)
        } else {
            None
        };
        let bound = ((2 * d) as f64).powf(-0.5);
        let head_w = store.add("head.w", init.uniform(&[2 * d, 1], bound), true)?;
        let head_b = store.add("head.b", init.uniform(&[1], bound), true)?;
        Ok(Self { config, store, layers, projection, head_w, head_b })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn num_params(&self) -> usize {
        self.store.num_trainable()
    }

    /// Places the score tensors on the tape as constants.
    pub fn inputs(&self, tape: &mut Tape<T>, sa: &Tensor<T>, sb: &Tensor<T>) -> (Var, Var) {
        (tape.constant(sa.clone()), tape.constant(sb.clone()))
    }

    /// Records a forward pass. `sa` is `[B, N, M]` with `sa[b, i, j]` the
    /// scaled score a_i gives b_j; `sb` is `[B, M, N]` with `sb[b, j, i]` the
    /// score b_j gives a_i. The network needs `N = M`.
    pub fn forward(&self, tape: &mut Tape<T>, sa: Var, sb: Var, mode: Mode) -> Result<Output<T>> {
        let (ash, bsh) = (tape.shape(sa).to_vec(), tape.shape(sb).to_vec());
        if ash.len() != 3 || bsh.len() != 3 || ash[0] != bsh[0] || ash[1] != bsh[2] || ash[2] != bsh[1] {
            return Err(NnError::Input(format!("score tensors {ash:?} and {bsh:?} do not describe one market")));
        }
        let (batch, n, m) = (ash[0], ash[1], ash[2]);
        if n != m {
            return Err(NnError::Input(format!("the network needs square markets, got {n}x{m}")));
        }
        if batch == 0 || n == 0 {
            return Err(NnError::Input("empty batch".into()));
        }
        let mut za = tape.reshape(sa, &[batch, n, n, 1])?;
        let mut zb = tape.reshape(sb, &[batch, n, n, 1])?;
        if self.config.variant == Variant::Asymmetric {
            (za, zb) = make_asymmetric_inputs(tape, za, zb)?;
        }
        let z0 = tape.cat0(&[za, zb])?;

        let mut updates = Vec::new();
        let mut outs = vec![z0];
        for (l, layer) in self.layers.iter().enumerate() {
            let l = l + 1;
            let woven = cross_concatenate(tape, outs[l - 1], batch)?;
            let mut z = match self.config.variant {
                Variant::Dual => {
                    let xa = tape.narrow0(woven, 0, batch)?;
                    let xb = tape.narrow0(woven, batch, batch)?;
                    let ya = self.set_encoder(tape, &layer[0], xa, mode, &mut updates)?;
                    let yb = self.set_encoder(tape, &layer[1], xb, mode, &mut updates)?;
                    tape.cat0(&[ya, yb])?
                }
                _ => self.set_encoder(tape, &layer[0], woven, mode, &mut updates)?,
            };
            if let Some((_, source)) = self.config.shortcuts().find(|&(t, _)| t == l) {
                let mut skip = outs[source];
                if self.config.needs_projection(source) {
                    let w = tape.param(&self.store, self.projection.expect("projection exists"));
                    skip = tape.linear(skip, w, None)?;
                }
                z = tape.add(z, skip)?;
            }
            outs.push(z);
        }

        let last = *outs.last().expect("at least one layer");
        let woven = cross_concatenate(tape, last, batch)?;
        let w = tape.param(&self.store, self.head_w);
        let b = tape.param(&self.store, self.head_b);
        let raw = tape.linear(woven, w, Some(b))?;
        let raw = tape.reshape(raw, &[2 * batch, n, n])?;
        let from_a = tape.narrow0(raw, 0, batch)?;
        let from_b = tape.narrow0(raw, batch, batch)?;
        let from_b = tape.swap_axes(from_b, 1)?;
        let sum = tape.add(from_a, from_b)?;
        let logits = tape.scale(sum, 0.5);
        Ok(Output { logits, norm_updates: updates })
    }

    /// Shared set encoder: conv1 -> PReLU -> max over candidates, the pooled
    /// vector appended to each input feature -> conv2 -> batch norm -> PReLU.
    /// `x` is `[S, N, M, C]`; the candidate set is axis 2.
    fn set_encoder(
        &self,
        tape: &mut Tape<T>,
        enc: &Encoder,
        x: Var,
        mode: Mode,
        updates: &mut Vec<NormUpdate<T>>,
    ) -> Result<Var> {
        let set = tape.shape(x)[2];
        let w1 = tape.param(&self.store, enc.conv1);
        let a1 = tape.param(&self.store, enc.alpha1);
        let h = tape.linear(x, w1, None)?;
        let h = tape.prelu(h, a1)?;
        let pooled = tape.max_over_set(h)?;
        let spread = tape.repeat_over_set(pooled, set)?;
        let joined = tape.concat_last(&[x, spread])?;
        let w2 = tape.param(&self.store, enc.conv2);
        let h = tape.linear(joined, w2, None)?;
        let h = if enc.norms.len() == 2 {
            let half = tape.shape(h)[0] / 2;
            let ha = tape.narrow0(h, 0, half)?;
            let hb = tape.narrow0(h, half, half)?;
            let na = self.norm(tape, &enc.norms[0], ha, mode, updates)?;
            let nb = self.norm(tape, &enc.norms[1], hb, mode, updates)?;
            tape.cat0(&[na, nb])?
        } else {
            self.norm(tape, &enc.norms[0], h, mode, updates)?
        };
        let a2 = tape.param(&self.store, enc.alpha2);
        Ok(tape.prelu(h, a2)?)
    }

    fn norm(&self, tape: &mut Tape<T>, norm: &Norm, x: Var, mode: Mode, updates: &mut Vec<NormUpdate<T>>) -> Result<Var> {
        let gamma = tape.param(&self.store, norm.gamma);
        let beta = tape.param(&self.store, norm.beta);
        match mode {
            Mode::Train => {
                let (y, stats) = tape.batch_norm_train(x, gamma, beta, BN_EPS)?;
                updates.push(NormUpdate { mean: norm.mean, var: norm.var, stats });
                Ok(y)
            }
            Mode::Eval => {
                let mean = self.store.get(norm.mean).value.data();
                let var = self.store.get(norm.var).value.data();
                Ok(tape.batch_norm_eval(x, gamma, beta, mean, var, BN_EPS)?)
            }
        }
    }

    /// Folds batch statistics into the running averages.
    pub fn apply_norm_updates(&mut self, updates: &[NormUpdate<T>]) {
        let mom = T::of(BN_MOMENTUM);
        for u in updates {
            for (id, batch) in [(u.mean, &u.stats.mean), (u.var, &u.stats.var)] {
                for (r, &b) in self.store.get_mut(id).value.data_mut().iter_mut().zip(batch) {
                    *r = (T::one() - mom) * *r + mom * b;
                }
            }
        }
    }

    /// Eval-mode prediction without recording gradients.
    pub fn predict(&self, sa: &Tensor<T>, sb: &Tensor<T>) -> Result<SoftMatching<T>> {
        let mut tape = Tape::new();
        let (a, b) = self.inputs(&mut tape, sa, sb);
        let out = self.forward(&mut tape, a, b, Mode::Eval)?;
        soft_matching(&mut tape, out.logits)
    }

    /// Eval-mode prediction for square instances of one size.
    pub fn predict_instances(&self, instances: &[PreferenceInstance]) -> Result<SoftMatching<T>> {
        let (sa, sb) = score_tensors(instances, self.config.c_min)?;
        self.predict(&sa, &sb)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint<T>> {
        Ok(Checkpoint::from_store(&self.store, serde_json::to_string(&self.config)?))
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(&ck.metadata)?;
        let mut net = Self::new(config, 0)?;
        ck.restore_into(&mut net.store)?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Appends to each stream the transposed features of the other stream:
/// `[Z^A, (Z^B)^T]` and `[Z^B, (Z^A)^T]` on the feature axis. `z` holds the
/// A streams in its first `batch` entries and the B streams after them.
pub fn cross_concatenate<T: Scalar>(tape: &mut Tape<T>, z: Var, batch: usize) -> Result<Var> {
    let a = tape.narrow0(z, 0, batch)?;
    let b = tape.narrow0(z, batch, batch)?;
    let partner = tape.cat0(&[b, a])?;
    let partner = tape.swap_axes(partner, 1)?;
    Ok(tape.concat_last(&[z, partner])?)
}

/// Appends a side code channel: 1 on every A feature, 0 on every B feature.
pub fn make_asymmetric_inputs<T: Scalar>(tape: &mut Tape<T>, za: Var, zb: Var) -> Result<(Var, Var)> {
    let mut code_shape = tape.shape(za).to_vec();
    *code_shape.last_mut().expect("non-scalar input") = 1;
    let ones = tape.constant(Tensor::full(code_shape.clone(), T::one()));
    let mut code_shape_b = tape.shape(zb).to_vec();
    *code_shape_b.last_mut().expect("non-scalar input") = 1;
    let zeros = tape.constant(Tensor::zeros(code_shape_b));
    Ok((tape.concat_last(&[za, ones])?, tape.concat_last(&[zb, zeros])?))
}

/// Builds both softmax views of recorded logits.
pub fn soft_matching<T: Scalar>(tape: &mut Tape<T>, logits: Var) -> Result<SoftMatching<T>> {
    let rows = tape.softmax_last(logits)?;
    let t = tape.swap_axes(logits, 1)?;
    let cols = tape.softmax_last(t)?;
    Ok(SoftMatching {
        logits: tape.value(logits).clone(),
        row_softmax: tape.value(rows).clone(),
        col_softmax: tape.value(cols).clone(),
    })
}

/// Scaled score tensors `[B, N, M]` and `[B, M, N]` for instances sharing one size.
pub fn score_tensors<T: Scalar>(instances: &[PreferenceInstance], c_min: f64) -> Result<(Tensor<T>, Tensor<T>)> {
    let Some(first) = instances.first() else {
        return Err(NnError::Input("no instances".into()));
    };
    let (n, m) = (first.n(), first.m());
    let mut sa = Vec::with_capacity(instances.len() * n * m);
    let mut sb = Vec::with_capacity(instances.len() * n * m);
    for inst in instances {
        if (inst.n(), inst.m()) != (n, m) {
            return Err(NnError::Input(format!(
                "mixed market sizes in one batch: {n}x{m} and {}x{}",
                inst.n(),
                inst.m()
            )));
        }
        let s = scale_ranks(inst, c_min)?;
        sa.extend(s.sa.iter().map(|&v| T::of(v)));
        sb.extend(s.sb.iter().map(|&v| T::of(v)));
    }
    let b = instances.len();
    Ok((Tensor::new(vec![b, n, m], sa)?, Tensor::new(vec![b, m, n], sb)?))
}
