use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DataError;

/// How inputs are scaled before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingMode {
    /// Subtract the train-split mean and divide by the train-split
    /// standard deviation, per column.
    Standardize,
    /// Leave inputs untouched.
    None,
}

impl ScalingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalingMode::Standardize => "standardize",
            ScalingMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self, DataError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standardize" => Ok(ScalingMode::Standardize),
            "none" => Ok(ScalingMode::None),
            other => Err(DataError::Schema(format!(
                "unknown input_scaling '{other}' (expected 'standardize' or 'none')"
            ))),
        }
    }
}

/// Column schema of a dataset: named inputs, one named output, the
/// output normalization constant, and the input scaling mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub input_names: Vec<String>,
    pub output_name: String,
    pub output_norm_constant: f64,
    pub input_scaling: ScalingMode,
}

impl DatasetSchema {
    pub fn new(
        input_names: Vec<String>,
        output_name: String,
        output_norm_constant: f64,
        input_scaling: ScalingMode,
    ) -> Result<Self, DataError> {
        if input_names.is_empty() {
            return Err(DataError::Schema("schema needs at least one input".into()));
        }
        let mut seen = BTreeSet::new();
        for name in input_names.iter().chain(std::iter::once(&output_name)) {
            if name.is_empty() {
                return Err(DataError::Schema("empty column name".into()));
            }
            if name.contains(',') || name.contains('\n') {
                return Err(DataError::Schema(format!(
                    "column name '{name}' contains a separator character"
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(DataError::Schema(format!("duplicate column name '{name}'")));
            }
        }
        if !(output_norm_constant > 0.0) || !output_norm_constant.is_finite() {
            return Err(DataError::Schema(format!(
                "output_norm_constant must be a positive finite real, got {output_norm_constant}"
            )));
        }
        Ok(DatasetSchema {
            input_names,
            output_name,
            output_norm_constant,
            input_scaling,
        })
    }

    /// Generic schema with inputs `x00..` and output `y`, constant 1.
    pub fn generic(d: usize) -> DatasetSchema {
        let width = (d.max(2) - 1).to_string().len();
        DatasetSchema {
            input_names: (0..d).map(|i| format!("x{i:0width$}")).collect(),
            output_name: "y".into(),
            output_norm_constant: 1.0,
            input_scaling: ScalingMode::Standardize,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_names.len()
    }

    /// Render as a `[schema]` key=value section.
    pub fn to_config_text(&self) -> String {
        let mut out = String::from("[schema]\n");
        out.push_str(&format!("inputs = {}\n", self.input_names.join(",")));
        out.push_str(&format!("output = {}\n", self.output_name));
        out.push_str(&format!(
            "output_norm_constant = {}\n",
            self.output_norm_constant
        ));
        out.push_str(&format!("input_scaling = {}\n", self.input_scaling.as_str()));
        out
    }

    /// Parse the `[schema]` section written by [`Self::to_config_text`].
    pub fn from_config_text(text: &str) -> Result<DatasetSchema, DataError> {
        let mut inputs: Option<Vec<String>> = None;
        let mut output: Option<String> = None;
        let mut constant: Option<f64> = None;
        let mut scaling = ScalingMode::Standardize;
        let mut in_section = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                in_section = line == "[schema]";
                continue;
            }
            if !in_section {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| DataError::Parse {
                line: lineno + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let value = value.trim();
            match key.trim() {
                "inputs" => {
                    inputs = Some(
                        value
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect(),
                    )
                }
                "output" => output = Some(value.to_string()),
                "output_norm_constant" => {
                    constant = Some(value.parse::<f64>().map_err(|e| DataError::Parse {
                        line: lineno + 1,
                        message: format!("bad output_norm_constant '{value}': {e}"),
                    })?)
                }
                "input_scaling" => scaling = ScalingMode::parse(value)?,
                other => {
                    return Err(DataError::Parse {
                        line: lineno + 1,
                        message: format!("unknown schema key '{other}'"),
                    })
                }
            }
        }
        DatasetSchema::new(
            inputs.ok_or_else(|| DataError::Schema("missing 'inputs'".into()))?,
            output.ok_or_else(|| DataError::Schema("missing 'output'".into()))?,
            constant.unwrap_or(1.0),
            scaling,
        )
    }

    pub fn write_file(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_config_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<DatasetSchema, DataError> {
        let text = std::fs::read_to_string(path)?;
        DatasetSchema::from_config_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_config_text() {
        let schema = DatasetSchema::new(
            vec!["t0".into(), "q0".into(), "v0".into()],
            "heat_flux".into(),
            1e-3,
            ScalingMode::Standardize,
        )
        .unwrap();
        let text = schema.to_config_text();
        let parsed = DatasetSchema::from_config_text(&text).unwrap();
        assert_eq!(parsed, schema);
    }

    #[test]
    fn tiny_norm_constants_accepted() {
        // e.g. 1e-3 as used for radiative-flux style outputs
        let schema =
            DatasetSchema::new(vec!["a".into()], "y".into(), 1e-3, ScalingMode::Standardize);
        assert!(schema.is_ok());
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = DatasetSchema::new(
            vec!["a".into(), "a".into()],
            "y".into(),
            1.0,
            ScalingMode::None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn non_positive_constant_rejected() {
        assert!(
            DatasetSchema::new(vec!["a".into()], "y".into(), 0.0, ScalingMode::None).is_err()
        );
        assert!(
            DatasetSchema::new(vec!["a".into()], "y".into(), -1.0, ScalingMode::None).is_err()
        );
    }

    #[test]
    fn generic_names_are_unique_and_sized() {
        let schema = DatasetSchema::generic(12);
        assert_eq!(schema.input_dim(), 12);
        assert_eq!(schema.input_names[0], "x00");
        assert_eq!(schema.input_names[11], "x11");
    }
}
