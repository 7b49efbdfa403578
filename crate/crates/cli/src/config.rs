//! JSON run configuration: one document with `environment`, `teacher`,
//! `student`, `distill`, and `outputs` sections. Every key is optional
//! (defaults are documented in the README); unknown keys are rejected and
//! diagnostics name the offending key path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdn_core::distill::DistillConfig;
use sdn_core::env::EnvConfig;
use sdn_core::network::LayerDesc;
use sdn_core::snn::LifConfig;
use sdn_core::teacher::DqnConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct RunConfig {
    pub environment: EnvSection,
    pub teacher: TeacherSection,
    pub student: StudentSection,
    pub distill: DistillConfig,
    pub outputs: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct EnvSection {
    pub height: usize,
    pub width: usize,
    pub episode_cap: usize,
    /// Master seed for the run; every RNG stream derives from it.
    pub seed: u64,
}

impl Default for EnvSection {
    fn default() -> Self {
        let env = EnvConfig::default();
        Self { height: env.height, width: env.width, episode_cap: env.episode_cap, seed: 42 }
    }
}

impl EnvSection {
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig { height: self.height, width: self.width, episode_cap: self.episode_cap }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct TeacherSection {
    pub dqn: DqnConfig,
    pub architecture: Vec<LayerDesc>,
}

impl Default for TeacherSection {
    fn default() -> Self {
        Self { dqn: DqnConfig::default(), architecture: default_teacher_arch() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct StudentSection {
    /// Layer widths of the spiking student, hidden layers then the output
    /// (the input width is the flattened frame).
    pub widths: Vec<usize>,
    pub lif: LifConfig,
}

impl Default for StudentSection {
    fn default() -> Self {
        Self { widths: vec![10, 2], lif: LifConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct OutputSection {
    /// Directory receiving curves, logs, and models unless a flag
    /// overrides it.
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// The default teacher: two strided conv layers and a dense head, sized
/// so training fits a desktop-CPU budget while staying far larger than
/// the student.
///
/// The first conv uses a 4-wide kernel deliberately: with valid padding
/// and stride 2 on a 16-cell edge, 3-wide windows stop at column 14 and
/// the paddle column (15) would be invisible to the whole network — a
/// policy that cannot see its own paddle never improves. 4-wide windows
/// at stride 2 cover every cell and still emit a 7×7 map.
pub fn default_teacher_arch() -> Vec<LayerDesc> {
    vec![
        LayerDesc::Conv2d { filters: 8, kernel: 4, stride: 2 },
        LayerDesc::Conv2d { filters: 16, kernel: 3, stride: 2 },
        LayerDesc::Dense { units: 256 },
        LayerDesc::Dense { units: 64 },
        LayerDesc::Dense { units: 2 },
    ]
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path.is_empty() || path == "." {
            CliError::Runtime(format!("config: {}", e.inner()))
        } else {
            CliError::Runtime(format!("config key `{path}`: {}", e.inner()))
        }
    })?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("config {}: {e}", path.display())))?;
    parse_config(&text)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let section = |name: &str, r: sdn_core::Result<()>| {
        r.map_err(|e| CliError::Runtime(format!("config section `{name}`: {e}")))
    };
    section("environment", cfg.environment.env_config().validate())?;
    section("teacher.dqn", cfg.teacher.dqn.validate())?;
    section("student.lif", cfg.student.lif.validate())?;
    section("distill", cfg.distill.validate())?;
    if cfg.teacher.architecture.is_empty() {
        return Err(CliError::Runtime(
            "config key `teacher.architecture`: must list at least one layer".into(),
        ));
    }
    if cfg.student.widths.is_empty() {
        return Err(CliError::Runtime(
            "config key `student.widths`: must list at least one layer width".into(),
        ));
    }
    if cfg.student.lif.t_steps != cfg.teacher.dqn.frame_stack {
        return Err(CliError::Runtime(format!(
            "config key `student.lif.t-steps`: student integrates {} timesteps but \
             `teacher.dqn.frame-stack` stacks {} frames; they must match",
            cfg.student.lif.t_steps, cfg.teacher.dqn.frame_stack
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.environment.height, 16);
        assert_eq!(cfg.distill.temperature, 10.0);
        assert_eq!(cfg.distill.lambda, 0.9);
    }

    #[test]
    fn matching_settings_accepted() {
        let cfg = parse_config(r#"{"distill": {"temperature": 10, "lambda": 0.9}}"#).unwrap();
        assert_eq!(cfg.distill.temperature, 10.0);
    }

    #[test]
    fn out_of_range_value_names_the_key_path() {
        let err = parse_config(r#"{"distill": {"lambda": 1.5}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("distill") && msg.contains("lambda"), "message: {msg}");
    }

    #[test]
    fn unknown_key_names_the_path() {
        let err = parse_config(r#"{"teacher": {"dqn": {"gama": 0.9}}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("teacher.dqn") && msg.contains("gama"), "message: {msg}");
    }

    #[test]
    fn top_level_unknown_key_rejected() {
        assert!(parse_config(r#"{"teachers": {}}"#).is_err());
    }

    #[test]
    fn mismatched_window_rejected() {
        let err = parse_config(r#"{"student": {"lif": {"t-steps": 4}}}"#).unwrap_err();
        assert!(err.to_string().contains("t-steps"), "message: {err}");
    }

    #[test]
    fn kebab_case_keys_round_trip() {
        let cfg = parse_config(
            r#"{"environment": {"episode-cap": 100},
                "teacher": {"dqn": {"eps-decay-steps": 500, "paper-literal-td": true}},
                "distill": {"loss-mode": "mse-2", "thresh-epoch": 3, "t2-scaling": false}}"#,
        )
        .unwrap();
        assert_eq!(cfg.environment.episode_cap, 100);
        assert_eq!(cfg.teacher.dqn.eps_decay_steps, 500);
        assert!(cfg.teacher.dqn.paper_literal_td);
        assert_eq!(cfg.distill.loss_mode, sdn_core::distill::LossMode::Mse2);
        assert!(!cfg.distill.t2_scaling);
        let json = serde_json::to_string(&cfg).unwrap();
        let back = parse_config(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn architecture_parses_layer_kinds() {
        let cfg = parse_config(
            r#"{"teacher": {"architecture": [
                {"kind": "conv2d", "filters": 4, "kernel": 3, "stride": 2},
                {"kind": "dense", "units": 2}
            ]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.teacher.architecture.len(), 2);
    }

    #[test]
    fn syntax_error_is_distinct_from_schema_error() {
        let err = parse_config("{not json").unwrap_err();
        assert!(err.to_string().contains("config"), "message: {err}");
    }

    #[test]
    fn default_teacher_sees_every_input_cell() {
        // Occlusion check: flipping any single cell of the stacked input
        // must change the output. Guards against conv geometries whose
        // valid-padding windows skip edge cells (a 3-wide kernel at
        // stride 2 on a 16-cell edge never covers the last column, which
        // holds the paddle).
        use sdn_core::network::Network;
        use sdn_core::tensor::Tensor;
        let cfg = RunConfig::default();
        let (h, w) = (cfg.environment.height, cfg.environment.width);
        let stack = cfg.teacher.dqn.frame_stack;
        let net = Network::dnn(&[stack, h, w], &cfg.teacher.architecture, 7).unwrap();
        let zeros = Tensor::zeros(&[1, stack, h, w]);
        let base = net.forward_dnn(&zeros).unwrap();
        for cell in 0..stack * h * w {
            let moved = [1.0, -1.0].iter().any(|&v| {
                let mut probe = zeros.clone();
                probe.data_mut()[cell] = v;
                let out = net.forward_dnn(&probe).unwrap();
                out.data().iter().zip(base.data()).any(|(a, b)| (a - b).abs() > 1e-12)
            });
            assert!(moved, "input cell {cell} is invisible to the network");
        }
    }
}
