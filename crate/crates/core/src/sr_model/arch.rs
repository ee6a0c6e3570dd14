use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// EDSR-style residual network shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrArchitecture {
    pub n_resblocks: usize,
    pub n_feats: usize,
    pub scale: usize,
    pub residual_scaling: f64,
    #[serde(default = "default_channels")]
    pub channels: usize,
}

fn default_channels() -> usize {
    3
}

impl SrArchitecture {
    /// 8 blocks x 64 filters, residual scaling 1.0.
    pub fn desk(scale: usize) -> Self {
        Self { n_resblocks: 8, n_feats: 64, scale, residual_scaling: 1.0, channels: 3 }
    }

    /// 32 blocks x 256 filters, residual scaling 0.1.
    pub fn edsr(scale: usize) -> Self {
        Self { n_resblocks: 32, n_feats: 256, scale, residual_scaling: 0.1, channels: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scale, 2..=4) {
            return Err(Error::UnsupportedScale(self.scale));
        }
        if self.n_feats == 0 || self.n_resblocks == 0 {
            return Err(Error::InvalidConfig("architecture needs at least one block and one filter".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidConfig(format!("unsupported channel count {}", self.channels)));
        }
        Ok(())
    }

    /// Pixel-shuffle factors, applied in order: x2, x3, x4 = x2 * x2.
    pub fn upsample_factors(&self) -> Vec<usize> {
        match self.scale {
            4 => vec![2, 2],
            s => vec![s],
        }
    }

    /// Name of the last convolution of the residual body, the layer just
    /// before the first pixel-shuffle stage.
    pub fn body_output_layer(&self) -> String {
        format!("body.{}", self.n_resblocks)
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let conv = |cin: usize, cout: usize| cin * cout * 9 + cout;
        let f = self.n_feats;
        let head = conv(self.channels, f);
        let body = self.n_resblocks * 2 * conv(f, f) + conv(f, f);
        let ups: usize = self.upsample_factors().iter().map(|r| conv(f, f * r * r)).sum();
        let tail = conv(f, self.channels);
        head + body + ups + tail
    }
}
