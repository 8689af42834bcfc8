//! Versioned JSON model files.

use super::KoopmanSpectralModel;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

pub const MODEL_SCHEMA: &str = "koopman-mfc/model/v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema: String,
    state_checksum: String,
    model: KoopmanSpectralModel,
}

/// SHA-256 over the dimensions and the bit patterns of every stored state.
pub fn state_checksum(model: &KoopmanSpectralModel) -> String {
    let mut hasher = Sha256::new();
    hasher.update((model.state_dim as u64).to_le_bytes());
    hasher.update((model.control_dim as u64).to_le_bytes());
    hasher.update((model.states.len() as u64).to_le_bytes());
    for s in &model.states {
        for v in s.flatten() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest.iter() {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

pub fn model_to_string(model: &KoopmanSpectralModel) -> Result<String> {
    let file = ModelFile {
        schema: MODEL_SCHEMA.to_string(),
        state_checksum: state_checksum(model),
        model: model.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn model_from_str(text: &str) -> Result<KoopmanSpectralModel> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Schema(format!("unreadable model file: {e}")))?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(MODEL_SCHEMA) => {}
        Some(other) => {
            return Err(Error::Schema(format!(
                "expected schema `{MODEL_SCHEMA}`, found `{other}`"
            )))
        }
        None => return Err(Error::Schema("model file has no schema tag".into())),
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    let computed = state_checksum(&file.model);
    if computed != file.state_checksum {
        return Err(Error::Checksum {
            stored: file.state_checksum,
            computed,
        });
    }
    file.model
        .validate()
        .map_err(|e| Error::Schema(e.to_string()))?;
    Ok(file.model)
}

pub fn save_model(model: &KoopmanSpectralModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<KoopmanSpectralModel> {
    model_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AggregatedState;
    use crate::model::{EigenPair, ExpansionCoefficients, ObservableModel};
    use crate::spectral::FilterKind;
    use num_complex::Complex64;

    fn small_model() -> KoopmanSpectralModel {
        let states: Vec<AggregatedState> = (0..3)
            .map(|i| AggregatedState::deterministic(vec![0.1 * i as f64 + 1.0 / 3.0], vec![-0.7]))
            .collect();
        KoopmanSpectralModel {
            state_dim: 1,
            control_dim: 1,
            eigenpairs: vec![EigenPair {
                theta: 2.0,
                table: (0..3)
                    .map(|i| Complex64::from_polar(1.0, i as f64 / 7.0))
                    .collect(),
                norm: 0.999_999_999_7,
                source: "e1".into(),
            }],
            observables: vec![ObservableModel {
                label: "F".into(),
                expansion: ExpansionCoefficients {
                    coefficients: vec![Complex64::new(1.0 / 3.0, -2e-17)],
                    residual: 1e-300,
                },
                density: vec![vec![Complex64::new(0.1, 0.2); 5]; 3],
            }],
            states,
            quadrature: 5,
            continuous_order: 2,
            continuous_filter: FilterKind::Sharp,
            neighbors: 4,
        }
    }

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        let first = std::fs::read(&path).unwrap();
        save_model(&loaded, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn truncated_file_is_schema_error() {
        let text = model_to_string(&small_model()).unwrap();
        let err = model_from_str(&text[..text.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn wrong_schema_tag() {
        let text = model_to_string(&small_model())
            .unwrap()
            .replace(MODEL_SCHEMA, "koopman-mfc/model/v0");
        assert!(matches!(
            model_from_str(&text).unwrap_err(),
            Error::Schema(_)
        ));
    }

    #[test]
    fn tampered_states_fail_checksum() {
        let mut value: serde_json::Value =
            serde_json::from_str(&model_to_string(&small_model()).unwrap()).unwrap();
        value["model"]["states"][0]["x"][0] = serde_json::json!(5.0);
        let err = model_from_str(&value.to_string()).unwrap_err();
        assert!(matches!(err, Error::Checksum { .. }), "{err}");
    }
}
