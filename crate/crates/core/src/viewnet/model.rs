use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AngleQuery, ViewNetConfig};
use crate::error::{shape_err, Result};
use crate::tensor::{BatchNormState, Init, NormMode, Scalar, Tape, Tensor, Var};

pub type ParamMap<T> = BTreeMap<String, Tensor<T>>;
pub type NormStates<T> = BTreeMap<String, BatchNormState<T>>;
/// Tape handles of every parameter, keyed like [`ParamMap`].
pub type ParamVars = BTreeMap<String, Var>;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewOutput<T: Scalar> {
    /// `[3,S,S]` (or `[B,3,S,S]` for batched input), values in `[0,1]`.
    pub rgb: Tensor<T>,
    /// `[1,S,S]` (or `[B,1,S,S]`), values in `[0,1]`.
    pub depth: Tensor<T>,
}

enum ParamInit {
    /// Xavier/Glorot uniform.
    Xavier {
        fan_in: usize,
        fan_out: usize,
    },
    Zeros,
    Ones,
    Value(f64),
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: ParamInit,
}

/// Angle-conditioned encoder/decoder producing RGB and depth views.
///
/// Encoder blocks are `conv3x3 -> batchnorm -> relu -> maxpool2x2`. The
/// pooled map is flattened into a latent vector, joined with the angle
/// encoding and passed through fully connected layers that are reshaped back
/// into the bottleneck map. Decoder blocks are
/// `upsample2x -> conv3x3 -> batchnorm -> relu` and each adds its mirrored
/// encoder activation scaled by a learnable shortcut weight. Two branches of
/// two convolutions each end in a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewNet<T: Scalar = f32> {
    config: ViewNetConfig,
    params: ParamMap<T>,
    norm: NormStates<T>,
}

fn conv_spec(specs: &mut Vec<ParamSpec>, prefix: &str, c_in: usize, c_out: usize) {
    specs.push(ParamSpec {
        name: format!("{prefix}.w"),
        shape: vec![c_out, c_in, 3, 3],
        init: ParamInit::Xavier {
            fan_in: c_in * 9,
            fan_out: c_out * 9,
        },
    });
    specs.push(ParamSpec {
        name: format!("{prefix}.b"),
        shape: vec![c_out],
        init: ParamInit::Zeros,
    });
}

fn bn_spec(specs: &mut Vec<ParamSpec>, prefix: &str, c: usize) {
    specs.push(ParamSpec {
        name: format!("{prefix}.gamma"),
        shape: vec![c],
        init: ParamInit::Ones,
    });
    specs.push(ParamSpec {
        name: format!("{prefix}.beta"),
        shape: vec![c],
        init: ParamInit::Zeros,
    });
}

fn fc_spec(specs: &mut Vec<ParamSpec>, prefix: &str, k: usize, j: usize) {
    specs.push(ParamSpec {
        name: format!("{prefix}.w"),
        shape: vec![j, k],
        init: ParamInit::Xavier {
            fan_in: k,
            fan_out: j,
        },
    });
    specs.push(ParamSpec {
        name: format!("{prefix}.b"),
        shape: vec![j],
        init: ParamInit::Zeros,
    });
}

/// Parameters in construction order, plus `(bn layer name, channels)`.
fn layout(cfg: &ViewNetConfig) -> (Vec<ParamSpec>, Vec<(String, usize)>) {
    let mut specs = Vec::new();
    let mut bns = Vec::new();
    let ch = &cfg.encoder_channels;
    let n = ch.len();
    let mut c_prev = cfg.input_channels;
    for (i, &c) in ch.iter().enumerate() {
        conv_spec(&mut specs, &format!("enc{i}.conv"), c_prev, c);
        bn_spec(&mut specs, &format!("enc{i}.bn"), c);
        bns.push((format!("enc{i}.bn"), c));
        c_prev = c;
    }
    let s = cfg.bottleneck_size();
    let flat = ch[n - 1] * s * s;
    fc_spec(&mut specs, "fc.latent", flat, cfg.latent_dim);
    let mut width = cfg.latent_dim + cfg.angle_encoding_dim;
    for (j, &w) in cfg.fc_widths.iter().enumerate() {
        fc_spec(&mut specs, &format!("fc{j}"), width, w);
        width = w;
    }
    fc_spec(&mut specs, "fc.bottleneck", width, flat);
    let mut c_prev = ch[n - 1];
    for i in 0..n {
        let level = n - 1 - i;
        conv_spec(&mut specs, &format!("dec{i}.conv"), c_prev, ch[level]);
        bn_spec(&mut specs, &format!("dec{i}.bn"), ch[level]);
        bns.push((format!("dec{i}.bn"), ch[level]));
        c_prev = ch[level];
    }
    for (i, &v) in cfg.skip_weights.iter().enumerate() {
        specs.push(ParamSpec {
            name: format!("skip{i}"),
            shape: vec![1],
            init: ParamInit::Value(v),
        });
    }
    for (branch, hidden, out) in [
        ("rgb", cfg.branch_channels.0, 3),
        ("depth", cfg.branch_channels.1, 1),
    ] {
        conv_spec(&mut specs, &format!("{branch}.conv1"), ch[0], hidden);
        bn_spec(&mut specs, &format!("{branch}.bn1"), hidden);
        bns.push((format!("{branch}.bn1"), hidden));
        conv_spec(&mut specs, &format!("{branch}.conv2"), hidden, out);
    }
    (specs, bns)
}

impl<T: Scalar> ViewNet<T> {
    /// Xavier-uniform weights, zero biases/betas, unit gammas, shortcut
    /// weights from the config. Deterministic in `(config, seed)`.
    pub fn build(config: ViewNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (specs, bns) = layout(&config);
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for spec in specs {
            let init = match spec.init {
                ParamInit::Xavier { fan_in, fan_out } => {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Init::Uniform {
                        low: -bound,
                        high: bound,
                        seed: seeds.next_u64(),
                    }
                }
                ParamInit::Zeros => Init::Zeros,
                ParamInit::Ones => Init::Constant(1.0),
                ParamInit::Value(v) => Init::Constant(v),
            };
            params.insert(spec.name, Tensor::new(&spec.shape, init)?);
        }
        let norm = bns
            .into_iter()
            .map(|(name, c)| (name, BatchNormState::new(c)))
            .collect();
        Ok(ViewNet {
            config,
            params,
            norm,
        })
    }

    /// Reassembles a network from stored parts, checking every name and shape
    /// against the layout implied by `config`.
    pub fn from_parts(
        config: ViewNetConfig,
        params: ParamMap<T>,
        norm: NormStates<T>,
    ) -> Result<Self> {
        config.validate()?;
        let (specs, bns) = layout(&config);
        if specs.len() != params.len() {
            return Err(shape_err!(
                "expected {} parameters, got {}",
                specs.len(),
                params.len()
            ));
        }
        for spec in &specs {
            match params.get(&spec.name) {
                Some(t) if t.shape() == spec.shape.as_slice() => {}
                Some(t) => {
                    return Err(shape_err!(
                        "parameter {} has shape {:?}, expected {:?}",
                        spec.name,
                        t.shape(),
                        spec.shape
                    ))
                }
                None => return Err(shape_err!("missing parameter {}", spec.name)),
            }
        }
        if bns.len() != norm.len() {
            return Err(shape_err!(
                "expected {} norm states, got {}",
                bns.len(),
                norm.len()
            ));
        }
        for (name, c) in &bns {
            match norm.get(name) {
                Some(s) if s.channels() == *c && s.running_var.len() == *c => {}
                _ => return Err(shape_err!("missing or mis-sized norm state {name}")),
            }
        }
        Ok(ViewNet {
            config,
            params,
            norm,
        })
    }

    pub fn config(&self) -> &ViewNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamMap<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamMap<T> {
        &mut self.params
    }

    pub fn norm_states(&self) -> &NormStates<T> {
        &self.norm
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Current shortcut weights, encoder block order.
    pub fn skip_weights(&self) -> Vec<f64> {
        (0..self.config.blocks())
            .map(|i| self.params[&format!("skip{i}")].data()[0].as_f64())
            .collect()
    }

    pub fn set_skip_weights(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.config.blocks() {
            return Err(shape_err!(
                "expected {} skip weights, got {}",
                self.config.blocks(),
                values.len()
            ));
        }
        for (i, &v) in values.iter().enumerate() {
            self.params
                .get_mut(&format!("skip{i}"))
                .expect("layout")
                .data_mut()[0] = T::from_f64(v);
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ViewNet<U> {
        ViewNet {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
            norm: self
                .norm
                .iter()
                .map(|(k, s)| {
                    (
                        k.clone(),
                        BatchNormState {
                            running_mean: s
                                .running_mean
                                .iter()
                                .map(|v| U::from_f64(v.as_f64()))
                                .collect(),
                            running_var: s
                                .running_var
                                .iter()
                                .map(|v| U::from_f64(v.as_f64()))
                                .collect(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Places every parameter on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> ParamVars {
        self.params
            .iter()
            .map(|(k, t)| {
                let v = if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect()
    }

    /// Encodes `queries` as a `[B,4]` tensor.
    pub fn angle_tensor(queries: &[AngleQuery]) -> Result<Tensor<T>> {
        let data: Vec<f64> = queries.iter().flat_map(|q| q.encode()).collect();
        Tensor::from_f64(&[queries.len(), super::ANGLE_ENCODING_DIM], &data)
    }

    /// Records the forward pass on `tape`. `input` is `[B,C,S,S]`, `angles`
    /// `[B,4]`. Train mode updates the running batch-norm statistics.
    pub fn forward_tape(
        &mut self,
        tape: &mut Tape<T>,
        vars: &ParamVars,
        input: Var,
        angles: Var,
        mode: NormMode,
    ) -> Result<(Var, Var)> {
        forward_graph(
            &self.config,
            &mut self.norm,
            tape,
            vars,
            input,
            angles,
            mode,
        )
    }

    /// Runs the generator on `[C,S,S]` with one query, or on `[B,C,S,S]` with
    /// `B` queries. Outputs keep the input's rank.
    pub fn forward(
        &mut self,
        input: &Tensor<T>,
        queries: &[AngleQuery],
        mode: NormMode,
    ) -> Result<ViewOutput<T>> {
        let mut norm = std::mem::take(&mut self.norm);
        let out = run(&self.params, &self.config, &mut norm, input, queries, mode);
        self.norm = norm;
        out
    }

    /// Eval-mode generation; never mutates the network.
    pub fn generate(&self, input: &Tensor<T>, queries: &[AngleQuery]) -> Result<ViewOutput<T>> {
        let mut norm = self.norm.clone();
        run(
            &self.params,
            &self.config,
            &mut norm,
            input,
            queries,
            NormMode::Eval,
        )
    }
}

fn run<T: Scalar>(
    params: &ParamMap<T>,
    cfg: &ViewNetConfig,
    norm: &mut NormStates<T>,
    input: &Tensor<T>,
    queries: &[AngleQuery],
    mode: NormMode,
) -> Result<ViewOutput<T>> {
    let s = cfg.input_size;
    let batched = match input.shape() {
        [c, h, w] if *c == cfg.input_channels && *h == s && *w == s => false,
        [_, c, h, w] if *c == cfg.input_channels && *h == s && *w == s => true,
        other => {
            return Err(shape_err!(
                "input must be [{c},{s},{s}] or [B,{c},{s},{s}], got {other:?}",
                c = cfg.input_channels
            ))
        }
    };
    let b = if batched { input.shape()[0] } else { 1 };
    if queries.len() != b {
        return Err(shape_err!("{b} inputs but {} angle queries", queries.len()));
    }
    let mut tape = Tape::new();
    let vars: ParamVars = params
        .iter()
        .map(|(k, t)| (k.clone(), tape.constant(t.clone())))
        .collect();
    let x = tape.constant(input.clone().reshape(&[b, cfg.input_channels, s, s])?);
    let a = tape.constant(ViewNet::<T>::angle_tensor(queries)?);
    let (rgb, depth) = forward_graph(cfg, norm, &mut tape, &vars, x, a, mode)?;
    let rgb = tape.value(rgb).clone();
    let depth = tape.value(depth).clone();
    if batched {
        Ok(ViewOutput { rgb, depth })
    } else {
        Ok(ViewOutput {
            rgb: rgb.reshape(&[3, s, s])?,
            depth: depth.reshape(&[1, s, s])?,
        })
    }
}

fn forward_graph<T: Scalar>(
    cfg: &ViewNetConfig,
    norm: &mut NormStates<T>,
    tape: &mut Tape<T>,
    vars: &ParamVars,
    input: Var,
    angles: Var,
    mode: NormMode,
) -> Result<(Var, Var)> {
    let p = |name: &str| -> Result<Var> {
        vars.get(name)
            .copied()
            .ok_or_else(|| shape_err!("parameter {name} is not bound"))
    };
    let (b, s) = match *tape.value(input).shape() {
        [b, c, h, w] if c == cfg.input_channels && h == cfg.input_size && w == cfg.input_size => {
            (b, h)
        }
        ref other => return Err(shape_err!("ViewNet input has shape {other:?}")),
    };
    if tape.value(angles).shape() != [b, cfg.angle_encoding_dim] {
        return Err(shape_err!(
            "angle tensor must be [{b},{}], got {:?}",
            cfg.angle_encoding_dim,
            tape.value(angles).shape()
        ));
    }

    let mut conv_bn_relu = |tape: &mut Tape<T>, x: Var, conv: &str, bn: &str| -> Result<Var> {
        let y = tape.conv2d(x, p(&format!("{conv}.w"))?, p(&format!("{conv}.b"))?)?;
        let state = norm
            .get_mut(bn)
            .ok_or_else(|| shape_err!("missing norm state {bn}"))?;
        let y = tape.batchnorm(
            y,
            p(&format!("{bn}.gamma"))?,
            p(&format!("{bn}.beta"))?,
            state,
            mode,
        )?;
        Ok(tape.relu(y))
    };

    let n = cfg.blocks();
    let mut acts = Vec::with_capacity(n);
    let mut h = input;
    for i in 0..n {
        let a = conv_bn_relu(tape, h, &format!("enc{i}.conv"), &format!("enc{i}.bn"))?;
        acts.push(a);
        h = tape.maxpool2x2(a)?;
    }

    let bs = cfg.bottleneck_size();
    let c_last = cfg.encoder_channels[n - 1];
    let flat_len = c_last * bs * bs;
    let flat = tape.reshape(h, &[b, flat_len])?;
    let latent = tape.fully_connected(flat, p("fc.latent.w")?, p("fc.latent.b")?)?;
    let latent = tape.relu(latent);
    let l4 = tape.reshape(latent, &[b, cfg.latent_dim, 1, 1])?;
    let a4 = tape.reshape(angles, &[b, cfg.angle_encoding_dim, 1, 1])?;
    let joined = tape.concat_channels(l4, a4)?;
    let mut z = tape.reshape(joined, &[b, cfg.latent_dim + cfg.angle_encoding_dim])?;
    for j in 0..cfg.fc_widths.len() {
        z = tape.fully_connected(z, p(&format!("fc{j}.w"))?, p(&format!("fc{j}.b"))?)?;
        z = tape.relu(z);
    }
    z = tape.fully_connected(z, p("fc.bottleneck.w")?, p("fc.bottleneck.b")?)?;
    z = tape.relu(z);
    let mut h = tape.reshape(z, &[b, c_last, bs, bs])?;

    for i in 0..n {
        let level = n - 1 - i;
        let up = tape.bilinear_upsample2x(h)?;
        let y = conv_bn_relu(tape, up, &format!("dec{i}.conv"), &format!("dec{i}.bn"))?;
        let skip = tape.scale_by(acts[level], p(&format!("skip{level}"))?)?;
        h = tape.add(y, skip)?;
    }
    debug_assert_eq!(tape.value(h).shape()[2], s);

    let mut branch = |tape: &mut Tape<T>, name: &str| -> Result<Var> {
        let y = conv_bn_relu(tape, h, &format!("{name}.conv1"), &format!("{name}.bn1"))?;
        let y = tape.conv2d(
            y,
            p(&format!("{name}.conv2.w"))?,
            p(&format!("{name}.conv2.b"))?,
        )?;
        Ok(tape.sigmoid(y))
    };
    let rgb = branch(tape, "rgb")?;
    let depth = branch(tape, "depth")?;
    Ok((rgb, depth))
}

/// Relative weights of the two reconstruction terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rgb: f64,
    pub depth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            rgb: 1.0,
            depth: 1.0,
        }
    }
}

/// Tape handles of the loss terms from [`ViewNet::loss_tape`].
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub rgb: Var,
    pub depth: Var,
}

impl<T: Scalar> ViewNet<T> {
    /// `weights.rgb * mse(rgb) + weights.depth * mse(depth)` for a batch.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_tape(
        &mut self,
        tape: &mut Tape<T>,
        vars: &ParamVars,
        input: Var,
        angles: Var,
        target_rgb: Var,
        target_depth: Var,
        weights: LossWeights,
        mode: NormMode,
    ) -> Result<LossVars> {
        let (rgb, depth) = self.forward_tape(tape, vars, input, angles, mode)?;
        let l_rgb = tape.mse_loss(rgb, target_rgb)?;
        let l_depth = tape.mse_loss(depth, target_depth)?;
        let a = tape.scale(l_rgb, T::from_f64(weights.rgb));
        let b = tape.scale(l_depth, T::from_f64(weights.depth));
        let total = tape.add(a, b)?;
        Ok(LossVars {
            total,
            rgb: l_rgb,
            depth: l_depth,
        })
    }
}
