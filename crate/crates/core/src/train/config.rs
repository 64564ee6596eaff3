use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::viewnet::LossWeights;

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

/// Everything the training loop needs besides the network and the data.
///
/// One iteration is one batch update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: AdamConfig,
    pub iterations: usize,
    pub batch_size: usize,
    /// Elementwise gradient clamp `[lo, hi]`.
    pub clip_range: (f64, f64),
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Fraction of instances kept out of training for evaluation.
    pub holdout: f64,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        TrainConfig {
            optimizer: AdamConfig::default(),
            iterations: 5000,
            batch_size: 16,
            clip_range: (-1.0, 1.0),
            loss_weights: LossWeights::default(),
            seed: 1,
            holdout: 0.2,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    /// Schedule of the original full-resolution runs.
    pub fn full_scale() -> Self {
        TrainConfig {
            iterations: 70_000,
            checkpoint_every: 5000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size < 2 {
            return fail(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            ));
        }
        if !(self.clip_range.0 < self.clip_range.1) {
            return fail(format!("clip range {:?} is not ordered", self.clip_range));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return fail(format!(
                "holdout fraction must be in [0, 1), got {}",
                self.holdout
            ));
        }
        let w = self.loss_weights;
        if !(w.rgb >= 0.0 && w.depth >= 0.0 && w.rgb + w.depth > 0.0) {
            return fail(format!(
                "loss weights {w:?} must be non-negative and not both zero"
            ));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("train.learning_rate", self.optimizer.learning_rate);
        doc.set("train.beta1", self.optimizer.beta1);
        doc.set("train.beta2", self.optimizer.beta2);
        doc.set("train.epsilon", self.optimizer.epsilon);
        doc.set("train.iterations", self.iterations);
        doc.set("train.iteration_unit", "batch");
        doc.set("train.batch_size", self.batch_size);
        doc.set("train.clip_min", self.clip_range.0);
        doc.set("train.clip_max", self.clip_range.1);
        doc.set("train.clip_mode", "elementwise");
        doc.set("train.loss_weight_rgb", self.loss_weights.rgb);
        doc.set("train.loss_weight_depth", self.loss_weights.depth);
        doc.set("train.seed", self.seed);
        doc.set("train.holdout", self.holdout);
        doc.set("train.checkpoint_every", self.checkpoint_every);
        doc
    }

    /// Reads the `train.` section; absent keys take their defaults and
    /// unknown `train.` keys are rejected.
    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let d = Self::default();
        let section = doc.section("train");
        let mut r = section.reader();
        let cfg = TrainConfig {
            optimizer: AdamConfig {
                learning_rate: r.value("train.learning_rate", d.optimizer.learning_rate)?,
                beta1: r.value("train.beta1", d.optimizer.beta1)?,
                beta2: r.value("train.beta2", d.optimizer.beta2)?,
                epsilon: r.value("train.epsilon", d.optimizer.epsilon)?,
            },
            iterations: r.value("train.iterations", d.iterations)?,
            batch_size: r.value("train.batch_size", d.batch_size)?,
            clip_range: (
                r.value("train.clip_min", d.clip_range.0)?,
                r.value("train.clip_max", d.clip_range.1)?,
            ),
            loss_weights: LossWeights {
                rgb: r.value("train.loss_weight_rgb", d.loss_weights.rgb)?,
                depth: r.value("train.loss_weight_depth", d.loss_weights.depth)?,
            },
            seed: r.value("train.seed", d.seed)?,
            holdout: r.value("train.holdout", d.holdout)?,
            checkpoint_every: r.value("train.checkpoint_every", d.checkpoint_every)?,
        };
        for (key, want) in [
            ("train.iteration_unit", "batch"),
            ("train.clip_mode", "elementwise"),
        ] {
            let got: String = r.value(key, want.to_string())?;
            if got != want {
                return Err(Error::Config(format!(
                    "{key} only supports `{want}`, got `{got}`"
                )));
            }
        }
        r.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let cfg = TrainConfig {
            seed: 42,
            iterations: 17,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        TrainConfig::full_scale().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "train.batch_size = 1",
            "train.learning_rate = 0",
            "train.clip_min = 1\ntrain.clip_max = -1",
            "train.momentum = 0.5",
            "train.clip_mode = norm",
        ] {
            let doc = KvDoc::parse(text).unwrap();
            assert!(TrainConfig::from_kv(&doc).is_err(), "{text}");
        }
    }
}
