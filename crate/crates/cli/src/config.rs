//! TOML configuration with one section per module.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use deva_fuse::metrics::{MetricOptions, Window};
use deva_fuse::pipeline::{Mode, PipelineConfig};
use deva_fuse::synth::{NoiseConfig, SceneConfig};
use deva_fuse::ClassId;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// The shipped benchmark profile.
pub const TABLE6_PROFILE: &str = include_str!("../profiles/table6.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub clip_size: usize,
    pub merge_period: usize,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusSection {
    pub alpha: f64,
    pub iou_threshold: f64,
    pub spatial_alignment: bool,
    /// Largest support-graph component solved exactly.
    pub exact_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationSection {
    pub deletion_limit: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub videos: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<String>,
    pub stuff_classes: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: PipelineSection,
    pub consensus: ConsensusSection,
    pub association: AssociationSection,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
    pub synth: SynthSection,
    pub eval: EvalSection,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        PipelineSection {
            clip_size: p.clip_size,
            merge_period: p.merge_period,
            mode: p.mode,
        }
    }
}

impl Default for ConsensusSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        ConsensusSection {
            alpha: p.alpha,
            iou_threshold: p.iou_threshold,
            spatial_alignment: p.spatial_alignment,
            exact_cap: p.exact_cap,
        }
    }
}

impl Default for AssociationSection {
    fn default() -> Self {
        AssociationSection {
            deletion_limit: PipelineConfig::default().deletion_limit,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { videos: 4, seed: 0 }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ks: Window::STANDARD.iter().map(|w| w.to_string()).collect(),
            stuff_classes: Vec::new(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Config::parse(&text).map_err(|e| CliError::malformed(path, e))
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }

    pub fn table6() -> Self {
        Config::parse(TABLE6_PROFILE).expect("shipped profile is valid")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.pipeline_config()
            .validate()
            .map_err(|e| e.to_string())?;
        self.scene.validate().map_err(|e| e.to_string())?;
        self.noise.validate().map_err(|e| e.to_string())?;
        self.windows()?;
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            clip_size: self.pipeline.clip_size,
            merge_period: self.pipeline.merge_period,
            alpha: self.consensus.alpha,
            iou_threshold: self.consensus.iou_threshold,
            deletion_limit: self.association.deletion_limit,
            mode: self.pipeline.mode,
            spatial_alignment: self.consensus.spatial_alignment,
            exact_cap: self.consensus.exact_cap,
        }
    }

    pub fn windows(&self) -> Result<Vec<Window>, String> {
        parse_windows(&self.eval.ks.join(","))
    }

    pub fn metric_options(&self) -> MetricOptions {
        MetricOptions {
            stuff_classes: self
                .eval
                .stuff_classes
                .iter()
                .map(|&c| ClassId(c))
                .collect::<BTreeSet<_>>(),
        }
    }
}

/// Parses a comma-separated window list such as `1,2,4,6,8,10,inf`.
pub fn parse_windows(list: &str) -> Result<Vec<Window>, String> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let w: Window = part.parse().map_err(|e: deva_fuse::Error| e.to_string())?;
        if !out.contains(&w) {
            out.push(w);
        }
    }
    if out.is_empty() {
        return Err("no VPQ windows given".into());
    }
    Ok(out)
}
