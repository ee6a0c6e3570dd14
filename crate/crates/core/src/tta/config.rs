use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which image space `crop` is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropSpace {
    #[default]
    Lr,
    Hr,
}

/// Which parameters stay fixed while adapting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeRule {
    #[default]
    Upsampling,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    /// Number of most-activated filters.
    pub m: usize,
    /// Images taken per filter.
    pub k: usize,
    pub lr: f64,
    pub crop: usize,
    pub crop_space: CropSpace,
    pub epochs: usize,
    /// Crops drawn per epoch, across all selected images.
    pub crops_per_epoch: usize,
    pub freeze: FreezeRule,
    pub seed: u64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            m: 5,
            k: 2,
            lr: 1e-4,
            crop: 32,
            crop_space: CropSpace::Lr,
            epochs: 30,
            crops_per_epoch: 64,
            freeze: FreezeRule::Upsampling,
            seed: 0,
        }
    }
}

impl AdaptationConfig {
    /// Crop side in LR pixels for a model of the given scale.
    pub fn lr_crop(&self, scale: usize) -> Result<usize> {
        match self.crop_space {
            CropSpace::Lr => Ok(self.crop),
            CropSpace::Hr if self.crop.is_multiple_of(scale) => Ok(self.crop / scale),
            CropSpace::Hr => Err(Error::InvalidConfig(format!("HR crop {} is not a multiple of scale {scale}", self.crop))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::InvalidConfig("m and k must be positive".into()));
        }
        if self.crop == 0 || self.crops_per_epoch == 0 {
            return Err(Error::InvalidConfig("crop and crops_per_epoch must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}
