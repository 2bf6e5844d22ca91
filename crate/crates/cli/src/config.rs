//! JSON configuration files; command line flags override their fields.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use clothsep::field::features::DEFAULT_LEVELS;
use clothsep::field::FieldArch;
use clothsep::render::TrainConfig;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> clothsep::Result<T> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            clothsep::Error::FileNotFound(path.to_path_buf())
        } else {
            e.into()
        }
    })?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> clothsep::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Everything `train` needs besides the scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainJob {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub arch: FieldArch,
    /// Pyramid levels of the image features; fixes the architecture's feature width.
    pub feature_levels: usize,
    /// Scene bounds `[-h, h]³`.
    pub half_extent: f64,
}

impl Default for TrainJob {
    fn default() -> Self {
        Self { train: TrainConfig::default(), arch: FieldArch::default(), feature_levels: DEFAULT_LEVELS, half_extent: 0.5 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_train_json_fills_defaults() {
        let job: TrainJob = serde_json::from_str(r#"{"epochs": 7, "arch": {"hidden_width": 16}}"#).unwrap();
        assert_eq!(job.train.epochs, 7);
        assert_eq!(job.arch.hidden_width, 16);
        assert_eq!(job.arch.hidden_layers, FieldArch::default().hidden_layers);
        assert_eq!(job.half_extent, 0.5);
        let back: TrainJob = serde_json::from_str(&serde_json::to_string(&job).unwrap()).unwrap();
        assert_eq!(back, job);
    }
}
