//! Segmentation of scalar volumes into binary masks: Otsu thresholding,
//! two-component Gaussian mixtures and seeded region growing.

mod gmm;
mod histogram;
mod region;

use serde::{Deserialize, Serialize};

pub use gmm::{fit_gmm, gmm_threshold, GmmConfig, GmmModel};
pub use histogram::{histogram, otsu_cut, otsu_threshold, Histogram, BINS};
pub use region::{largest_component, region_grow, threshold_segment, Connectivity, RegionGrowConfig};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{BinaryMask, ScalarVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Otsu,
    Gmm,
    RegionGrowing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationConfig {
    pub method: Method,
    #[serde(default)]
    pub gmm: GmmConfig,
    #[serde(default)]
    pub rg: Option<RegionGrowConfig>,
}

impl SegmentationConfig {
    pub fn otsu() -> Self {
        Self { method: Method::Otsu, gmm: GmmConfig::default(), rg: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == Method::RegionGrowing {
            match &self.rg {
                None => return Err(Error::InvalidParameter("region_growing requires an `rg` section".into())),
                Some(rg) if rg.seeds.is_empty() => {
                    return Err(Error::InvalidParameter("rg.seeds must not be empty".into()))
                }
                Some(rg) if !(rg.tolerance >= 0.0) => {
                    return Err(Error::InvalidParameter("rg.tolerance must be nonnegative".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// A mask plus what produced it.
#[derive(Debug, Clone)]
pub struct Segmentation<T: Real> {
    pub mask: BinaryMask<T>,
    /// Intensity threshold for Otsu and GMM.
    pub threshold: Option<T>,
    pub model: Option<GmmModel<T>>,
}

/// Run the configured method.
pub fn segment<T: Real>(volume: &ScalarVolume<T>, config: &SegmentationConfig) -> Result<Segmentation<T>> {
    config.validate()?;
    match config.method {
        Method::Otsu => {
            let t = otsu_threshold(&histogram(volume))?;
            Ok(Segmentation { mask: threshold_segment(volume, t, None)?, threshold: Some(t), model: None })
        }
        Method::Gmm => {
            let samples: Vec<T> = volume.data().iter().map(|&v| T::lit(v as f64)).collect();
            let model = fit_gmm(&samples, &config.gmm)?;
            let t = gmm_threshold(&model)?;
            Ok(Segmentation { mask: threshold_segment(volume, t, None)?, threshold: Some(t), model: Some(model) })
        }
        Method::RegionGrowing => {
            let rg = config.rg.as_ref().expect("validated");
            Ok(Segmentation { mask: region_grow(volume, rg)?, threshold: None, model: None })
        }
    }
}
