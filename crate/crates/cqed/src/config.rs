//! Device description files.
//!
//! ```toml
//! name = "device_a"
//! control = 0
//! j0_ghz = 0.0062
//!
//! [[qubits]]
//! frequency_ghz = 5.1518
//! anharmonicity_ghz = -0.302
//!
//! [[qubits]]
//! frequency_ghz = 5.0892
//! anharmonicity_ghz = -0.302
//!
//! [[buses]]
//! frequency_ghz = 5.9638
//! g_ghz = [0.0885, 0.0875]
//!
//! [coherence]
//! t1_us = [115.0, 117.0]
//! t2_us = [129.0, 139.0]
//! ```
//!
//! `levels` may be given per qubit or bus; `[reference]` with `j_mhz` and
//! `detuning_mhz` sets the single-coupler comparison used by `sweep`.

use std::ops::Range;
use std::path::{Path, PathBuf};

use cqed_core::channels::Coherence;
use cqed_core::model::{
    validate_model, BusModeSpec, DeviceModel, TransmonSpec, DEFAULT_BUS_LEVELS,
    DEFAULT_TRANSMON_LEVELS,
};
use cqed_core::spectrum::ReferenceCoupler;
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}, line {line}: {message}")]
    Invalid {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl ConfigError {
    /// 1-based line of the offending entry, when known.
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Invalid { line, .. } => Some(*line),
            ConfigError::Parse { .. } | ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransmon {
    frequency_ghz: f64,
    anharmonicity_ghz: f64,
    levels: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBus {
    frequency_ghz: f64,
    g_ghz: [f64; 2],
    levels: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    name: Option<String>,
    control: Option<Spanned<usize>>,
    j0_ghz: Option<Spanned<f64>>,
    qubits: Spanned<Vec<Spanned<RawTransmon>>>,
    #[serde(default)]
    buses: Vec<Spanned<RawBus>>,
    coherence: Option<Spanned<Coherence>>,
    reference: Option<ReferenceCoupler>,
}

/// A validated device file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceConfig {
    pub name: String,
    pub control: usize,
    pub model: DeviceModel,
    pub coherence: Option<Coherence>,
    pub reference: Option<ReferenceCoupler>,
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    let end = span.start.min(text.len());
    text.as_bytes()[..end]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

impl DeviceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parses `text`; `path` only labels error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let raw: RawDevice = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        let invalid = |span: Range<usize>, message: String| ConfigError::Invalid {
            path: path.to_path_buf(),
            line: line_of(text, span),
            message,
        };

        let transmons = raw.qubits.get_ref();
        if transmons.len() != 2 {
            return Err(invalid(
                raw.qubits.span(),
                format!(
                    "expected exactly 2 [[qubits]] entries, found {}",
                    transmons.len()
                ),
            ));
        }
        let spec = |t: &RawTransmon| TransmonSpec {
            frequency_ghz: t.frequency_ghz,
            anharmonicity_ghz: t.anharmonicity_ghz,
            levels: t.levels.unwrap_or(DEFAULT_TRANSMON_LEVELS),
        };
        let model = DeviceModel {
            transmons: [spec(transmons[0].get_ref()), spec(transmons[1].get_ref())],
            j0_ghz: raw.j0_ghz.as_ref().map_or(0.0, |j| *j.get_ref()),
            buses: raw
                .buses
                .iter()
                .map(|b| {
                    let b = b.get_ref();
                    BusModeSpec {
                        frequency_ghz: b.frequency_ghz,
                        couplings_ghz: b.g_ghz,
                        levels: b.levels.unwrap_or(DEFAULT_BUS_LEVELS),
                    }
                })
                .collect(),
        };

        if let Some(v) = validate_model(&model).into_iter().next() {
            let span = if let Some(rest) = v.field.strip_prefix("transmons[") {
                transmons[index_prefix(rest)].span()
            } else if let Some(rest) = v.field.strip_prefix("buses[") {
                raw.buses[index_prefix(rest)].span()
            } else {
                raw.j0_ghz.as_ref().map_or(0..0, |j| j.span())
            };
            return Err(invalid(span, v.to_string()));
        }

        let control = match &raw.control {
            Some(c) if *c.get_ref() > 1 => {
                return Err(invalid(
                    c.span(),
                    format!("control must be 0 or 1, got {}", c.get_ref()),
                ));
            }
            Some(c) => *c.get_ref(),
            None => 0,
        };
        if let Some(c) = &raw.coherence {
            c.get_ref()
                .validate()
                .map_err(|e| invalid(c.span(), e.to_string()))?;
        }
        Ok(Self {
            name: raw.name.unwrap_or_else(|| {
                path.file_stem().map_or_else(
                    || String::from("device"),
                    |s| s.to_string_lossy().into_owned(),
                )
            }),
            control,
            model,
            coherence: raw.coherence.map(Spanned::into_inner),
            reference: raw.reference,
        })
    }
}

fn index_prefix(rest: &str) -> usize {
    rest.split(']')
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "\
j0_ghz = 0.0062

[[qubits]]
frequency_ghz = 5.1518
anharmonicity_ghz = -0.302

[[qubits]]
frequency_ghz = 5.0892
anharmonicity_ghz = -0.302
";

    #[test]
    fn parses_minimal_file() {
        let c = DeviceConfig::parse(TWO, Path::new("x.toml")).unwrap();
        assert_eq!(c.name, "x");
        assert_eq!(c.control, 0);
        assert!((c.model.j0_ghz - 0.0062).abs() < 1e-15);
        assert_eq!(c.model.transmons[1].levels, DEFAULT_TRANSMON_LEVELS);
        assert!(c.model.buses.is_empty());
    }

    #[test]
    fn invalid_entry_reports_its_line() {
        let bad = TWO.replace(
            "anharmonicity_ghz = -0.302\n\n",
            "anharmonicity_ghz = -0.302\nlevels = 1\n\n",
        );
        let err = DeviceConfig::parse(&bad, Path::new("x.toml")).unwrap_err();
        assert_eq!(err.line(), Some(3), "{err}");
        assert!(err.to_string().contains("levels"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = DeviceConfig::parse("j0_ghz = \n", Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn wrong_transmon_count() {
        let one = TWO
            .split("\n\n[[qubits]]\nfrequency_ghz = 5.0892")
            .next()
            .unwrap();
        assert!(DeviceConfig::parse(one, Path::new("x.toml")).is_err());
    }
}
