use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AngleQuery, LossWeights, ViewNet, ViewNetConfig};
use crate::error::Result;
use crate::tensor::{NormMode, Tape, Tensor};

#[derive(Debug, Clone)]
pub struct ModelGradCheck {
    pub max_rel_error: f64,
    /// Parameter with the largest error.
    pub worst_param: String,
    pub coordinates: usize,
}

/// Finite-difference check of the full training loss with respect to every
/// parameter coordinate, in 64-bit precision, on a batch of two random
/// inputs with random targets and queries.
pub fn model_grad_check(config: &ViewNetConfig, seed: u64, eps: f64) -> Result<ModelGradCheck> {
    let net = ViewNet::<f64>::build(config.clone(), seed)?;
    // Perturb shortcut weights, gammas and biases off their init values so
    // the check covers generic parameter values.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut net = net;
    for (name, t) in net.params_mut() {
        if !name.ends_with(".w") {
            for v in t.data_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
    }

    let s = config.input_size;
    let b = 2;
    let mut uniform = |shape: &[usize]| -> Result<Tensor<f64>> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
    };
    let input = uniform(&[b, config.input_channels, s, s])?;
    let target_rgb = uniform(&[b, 3, s, s])?;
    let target_depth = uniform(&[b, 1, s, s])?;
    let queries = [AngleQuery::new(37.0, 12.0), AngleQuery::new(-120.0, 3.0)];
    let angles = ViewNet::<f64>::angle_tensor(&queries)?;

    let loss_of =
        |net: &ViewNet<f64>, trainable: bool| -> Result<(f64, Option<Vec<(String, Vec<f64>)>>)> {
            let mut net = net.clone();
            let mut tape = Tape::new();
            let vars = net.bind(&mut tape, trainable);
            let x = tape.constant(input.clone());
            let a = tape.constant(angles.clone());
            let tr = tape.constant(target_rgb.clone());
            let td = tape.constant(target_depth.clone());
            let loss = net.loss_tape(
                &mut tape,
                &vars,
                x,
                a,
                tr,
                td,
                LossWeights::default(),
                NormMode::Train,
            )?;
            let value = tape.value(loss.total).data()[0];
            if !trainable {
                return Ok((value, None));
            }
            tape.backward(loss.total)?;
            let grads = vars
                .iter()
                .map(|(k, v)| (k.clone(), tape.grad(*v).expect("param grad").to_f64_vec()))
                .collect();
            Ok((value, Some(grads)))
        };

    let (_, grads) = loss_of(&net, true)?;
    let grads = grads.expect("trainable pass returns grads");
    let mut worst = (0.0f64, String::new());
    let mut coordinates = 0;
    for (name, analytic) in &grads {
        for (i, &g) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut().get_mut(name).expect("bound").data_mut()[i] += eps;
            let mut minus = net.clone();
            minus.params_mut().get_mut(name).expect("bound").data_mut()[i] -= eps;
            let numeric = (loss_of(&plus, false)?.0 - loss_of(&minus, false)?.0) / (2.0 * eps);
            let rel = (g - numeric).abs() / numeric.abs().max(1.0);
            if rel > worst.0 || worst.1.is_empty() {
                worst = (rel.max(worst.0), name.clone());
            }
            coordinates += 1;
        }
    }
    Ok(ModelGradCheck {
        max_rel_error: worst.0,
        worst_param: worst.1,
        coordinates,
    })
}
