use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::tensor::{BN_EPSILON, BN_MOMENTUM};

/// Width of the angle encoding appended to the latent vector.
pub const ANGLE_ENCODING_DIM: usize = 4;

/// Architecture of a [`super::ViewNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ViewNetConfig {
    /// Square input/output side in pixels; a power of two.
    pub input_size: usize,
    /// 4 for RGB + mask, 4 for RGB + depth as well.
    pub input_channels: usize,
    /// Output channels of each encoder block; decoders mirror this list.
    pub encoder_channels: Vec<usize>,
    /// Width of the latent vector produced from the flattened encoder output.
    pub latent_dim: usize,
    /// Hidden fully connected widths applied after angle concatenation.
    pub fc_widths: Vec<usize>,
    pub angle_encoding_dim: usize,
    /// Initial value of each learnable shortcut weight, one per encoder block.
    pub skip_weights: Vec<f64>,
    /// Hidden channels of the (RGB, depth) output branches.
    pub branch_channels: (usize, usize),
}

impl Default for ViewNetConfig {
    /// Desk-scale default: 64 px, four blocks.
    fn default() -> Self {
        ViewNetConfig {
            input_size: 64,
            input_channels: 4,
            encoder_channels: vec![16, 32, 64, 128],
            latent_dim: 256,
            fc_widths: vec![256, 256],
            angle_encoding_dim: ANGLE_ENCODING_DIM,
            skip_weights: vec![1.0; 4],
            branch_channels: (16, 16),
        }
    }
}

impl ViewNetConfig {
    /// 16 px, two blocks. Small enough for full finite-difference checks.
    pub fn micro() -> Self {
        ViewNetConfig {
            input_size: 16,
            input_channels: 4,
            encoder_channels: vec![3, 4],
            latent_dim: 6,
            fc_widths: vec![5],
            angle_encoding_dim: ANGLE_ENCODING_DIM,
            skip_weights: vec![1.0; 2],
            branch_channels: (3, 2),
        }
    }

    /// Full-resolution variant matching the 128 px crops of the original pipeline.
    pub fn full_scale() -> Self {
        ViewNetConfig {
            input_size: 128,
            encoder_channels: vec![32, 64, 128, 256, 256],
            latent_dim: 512,
            fc_widths: vec![512, 512],
            skip_weights: vec![1.0; 5],
            branch_channels: (32, 32),
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "micro" => Ok(Self::micro()),
            "desk" | "default" => Ok(Self::default()),
            "full" => Ok(Self::full_scale()),
            other => Err(Error::Config(format!(
                "unknown model preset `{other}` (expected micro, desk or full)"
            ))),
        }
    }

    pub fn blocks(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Spatial side of the bottleneck feature map.
    pub fn bottleneck_size(&self) -> usize {
        self.input_size >> self.blocks()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !self.input_size.is_power_of_two() {
            return fail(format!(
                "input_size {} is not a power of two",
                self.input_size
            ));
        }
        if self.input_channels == 0 {
            return fail("input_channels must be positive".into());
        }
        if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
            return fail("encoder_channels must be a non-empty list of positive counts".into());
        }
        if self.input_size >> self.blocks() < 4 || self.input_size < (4 << self.blocks()) {
            return fail(format!(
                "input_size / 2^blocks must be >= 4 (input_size {}, {} blocks)",
                self.input_size,
                self.blocks()
            ));
        }
        if self.skip_weights.len() != self.blocks() {
            return fail(format!(
                "skip_weights has {} entries but there are {} encoder blocks",
                self.skip_weights.len(),
                self.blocks()
            ));
        }
        if self.angle_encoding_dim != ANGLE_ENCODING_DIM {
            return fail(format!(
                "angle_encoding_dim must be {ANGLE_ENCODING_DIM}, got {}",
                self.angle_encoding_dim
            ));
        }
        if self.latent_dim == 0 || self.fc_widths.contains(&0) {
            return fail("latent_dim and fc_widths must be positive".into());
        }
        if self.branch_channels.0 == 0 || self.branch_channels.1 == 0 {
            return fail("branch_channels must be positive".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("viewnet.input_size", self.input_size);
        doc.set("viewnet.input_channels", self.input_channels);
        doc.set_list("viewnet.encoder_channels", &self.encoder_channels);
        doc.set("viewnet.latent_dim", self.latent_dim);
        doc.set_list("viewnet.fc_widths", &self.fc_widths);
        doc.set("viewnet.angle_encoding_dim", self.angle_encoding_dim);
        doc.set_list("viewnet.skip_weights", &self.skip_weights);
        doc.set("viewnet.branch_channels_rgb", self.branch_channels.0);
        doc.set("viewnet.branch_channels_depth", self.branch_channels.1);
        // Fixed choices, echoed for provenance; not tunable.
        doc.set("viewnet.conv_kernel", 3);
        doc.set("viewnet.conv_padding", 1);
        doc.set("viewnet.downsample", "maxpool2x2");
        doc.set("viewnet.bn_epsilon", BN_EPSILON);
        doc.set("viewnet.bn_momentum", BN_MOMENTUM);
        doc
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let d = Self::default();
        let mut r = doc.reader();
        let cfg = ViewNetConfig {
            input_size: r.value("viewnet.input_size", d.input_size)?,
            input_channels: r.value("viewnet.input_channels", d.input_channels)?,
            encoder_channels: r.list("viewnet.encoder_channels", d.encoder_channels)?,
            latent_dim: r.value("viewnet.latent_dim", d.latent_dim)?,
            fc_widths: r.list("viewnet.fc_widths", d.fc_widths)?,
            angle_encoding_dim: r.value("viewnet.angle_encoding_dim", d.angle_encoding_dim)?,
            skip_weights: r.list("viewnet.skip_weights", d.skip_weights)?,
            branch_channels: (
                r.value("viewnet.branch_channels_rgb", d.branch_channels.0)?,
                r.value("viewnet.branch_channels_depth", d.branch_channels.1)?,
            ),
        };
        let fixed: [(&str, f64); 4] = [
            ("viewnet.conv_kernel", 3.0),
            ("viewnet.conv_padding", 1.0),
            ("viewnet.bn_epsilon", BN_EPSILON),
            ("viewnet.bn_momentum", BN_MOMENTUM),
        ];
        for (key, want) in fixed {
            let got: f64 = r.value(key, want)?;
            if got != want {
                return Err(Error::Config(format!(
                    "{key} is fixed at {want}, got {got}"
                )));
            }
        }
        let down: String = r.value("viewnet.downsample", "maxpool2x2".to_string())?;
        if down != "maxpool2x2" {
            return Err(Error::Config(format!("unsupported downsample `{down}`")));
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
    fn presets_are_valid() {
        for name in ["micro", "desk", "full"] {
            ViewNetConfig::preset(name).unwrap().validate().unwrap();
        }
        assert_eq!(ViewNetConfig::default().bottleneck_size(), 4);
    }

    #[test]
    fn kv_round_trip_is_exact() {
        let mut cfg = ViewNetConfig::micro();
        cfg.skip_weights = vec![0.1, 1.0 / 3.0];
        assert_eq!(ViewNetConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn invariant_violations_are_named() {
        let mut cfg = ViewNetConfig::default();
        cfg.skip_weights.pop();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("skip_weights"), "{err}");

        let mut cfg = ViewNetConfig::micro();
        cfg.encoder_channels.push(8);
        cfg.skip_weights.push(1.0);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("2^blocks"), "{err}");

        let mut cfg = ViewNetConfig::default();
        cfg.input_size = 48;
        assert!(cfg.validate().is_err());
    }
}
