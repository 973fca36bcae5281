//! Pipeline configuration file: two parameter columns (full image and
//! area of interest) plus detector, tracker and training sections.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::background::SubtractionConfig;
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::gmphd::PhdConfig;
use crate::nn::REGRESSOR_HIDDEN;
use crate::registration::{RegistrationMode, RegistrationParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Full,
    Aoi,
}

/// One column of background and acceptance parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    /// Number of previous frames `L`.
    pub history: usize,
    pub tau: f64,
    pub open_kernel: [usize; 2],
    pub brightness_radius: usize,
    pub phi: f64,
    pub kappa: f64,
}

impl Profile {
    pub fn full() -> Self {
        Self::from_parts(&SubtractionConfig::full(), 0.8, 0.25)
    }

    pub fn aoi() -> Self {
        Self::from_parts(&SubtractionConfig::aoi(), 0.8, 0.25)
    }

    fn from_parts(s: &SubtractionConfig, phi: f64, kappa: f64) -> Self {
        Self {
            history: s.history,
            tau: s.tau,
            open_kernel: [s.open_kernel.0, s.open_kernel.1],
            brightness_radius: s.brightness_radius,
            phi,
            kappa,
        }
    }

    pub fn subtraction(&self) -> SubtractionConfig {
        SubtractionConfig {
            tau: self.tau,
            open_kernel: (self.open_kernel[0], self.open_kernel[1]),
            brightness_radius: self.brightness_radius,
            history: self.history,
        }
    }
}

/// Detector settings that do not vary between the two columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub cell_size: usize,
    pub window_side: usize,
    pub max_direct_area: usize,
    pub min_overlap: usize,
    pub regression_side: usize,
    pub response_side: usize,
    pub default_box_side: f64,
    pub dedup_radius: f64,
    pub stack_depth: usize,
    pub regression_margin: f64,
    pub oracle_radius: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorConfig::default();
        Self {
            cell_size: d.cell_size,
            window_side: d.window_side,
            max_direct_area: d.max_direct_area,
            min_overlap: d.min_overlap,
            regression_side: d.regression_side,
            response_side: d.response_side,
            default_box_side: d.default_box_side,
            dedup_radius: d.dedup_radius,
            stack_depth: d.stack_depth,
            regression_margin: d.regression_margin,
            oracle_radius: d.oracle_radius,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationSection {
    pub mode: RegistrationMode,
    pub max_corners: usize,
    pub ransac_iterations: usize,
    pub inlier_tol: f64,
    pub pyramid_levels: usize,
}

impl Default for RegistrationSection {
    fn default() -> Self {
        let p = RegistrationParams::default();
        Self {
            mode: RegistrationMode::Direct,
            max_corners: p.max_corners,
            ransac_iterations: p.ransac_iterations,
            inlier_tol: p.inlier_tol,
            pyramid_levels: p.pyramid_levels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub classifier_epochs: usize,
    pub regressor_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub regressor_hidden: usize,
    /// Fraction of samples held out for the reported validation accuracy.
    pub holdout: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            classifier_epochs: 8,
            regressor_epochs: 10,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            regressor_hidden: REGRESSOR_HIDDEN,
            holdout: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Column used by every command.
    pub profile: ProfileName,
    pub seed: u64,
    pub full: Profile,
    pub aoi: Profile,
    pub detector: DetectorSection,
    pub registration: RegistrationSection,
    pub tracker: PhdConfig,
    pub training: TrainingSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            profile: ProfileName::Full,
            seed: 0,
            full: Profile::full(),
            aoi: Profile::aoi(),
            detector: DetectorSection::default(),
            registration: RegistrationSection::default(),
            tracker: PhdConfig::default(),
            training: TrainingSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn active(&self) -> &Profile {
        match self.profile {
            ProfileName::Full => &self.full,
            ProfileName::Aoi => &self.aoi,
        }
    }

    pub fn active_mut(&mut self) -> &mut Profile {
        match self.profile {
            ProfileName::Full => &mut self.full,
            ProfileName::Aoi => &mut self.aoi,
        }
    }

    pub fn subtraction(&self) -> SubtractionConfig {
        self.active().subtraction()
    }

    pub fn detector(&self) -> DetectorConfig {
        let d = &self.detector;
        let p = self.active();
        DetectorConfig {
            cell_size: d.cell_size,
            window_side: d.window_side,
            phi: p.phi,
            kappa: p.kappa,
            max_direct_area: d.max_direct_area,
            min_overlap: d.min_overlap,
            regression_side: d.regression_side,
            response_side: d.response_side,
            default_box_side: d.default_box_side,
            dedup_radius: d.dedup_radius,
            stack_depth: d.stack_depth,
            regression_margin: d.regression_margin,
            oracle_radius: d.oracle_radius,
        }
    }

    pub fn registration_params(&self) -> RegistrationParams {
        let r = &self.registration;
        RegistrationParams {
            max_corners: r.max_corners,
            ransac_iterations: r.ransac_iterations,
            inlier_tol: r.inlier_tol,
            pyramid_levels: r.pyramid_levels,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        for p in [&self.full, &self.aoi] {
            p.subtraction().validate().map_err(wrap)?;
        }
        self.detector().validate().map_err(wrap)?;
        self.tracker.validate().map_err(wrap)?;
        let t = &self.training;
        if t.batch_size < 2 || t.regressor_hidden == 0 || !(t.learning_rate > 0.0) || !(0.0..1.0).contains(&t.holdout) {
            return Err(Error::Config(
                "training needs batch_size >= 2, regressor_hidden >= 1, a positive learning rate and holdout in [0, 1)".into(),
            ));
        }
        if self.registration.max_corners == 0 || self.registration.ransac_iterations == 0 {
            return Err(Error::Config("registration needs corners and RANSAC iterations".into()));
        }
        Ok(())
    }
}
