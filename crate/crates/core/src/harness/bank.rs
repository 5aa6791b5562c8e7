use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PredictorParams;
use crate::error::{Error, Result};

/// One simulated model: its label selects the augmentation it sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub label: String,
    #[serde(flatten)]
    pub params: PredictorParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BankFile {
    model: Vec<toml::Table>,
}

/// Parses a bank file: one `[[model]]` section per model, each holding
/// `label = "..."` plus any `PredictorParams` keys (missing keys default to
/// the identity predictor).
pub fn parse_bank(text: &str) -> Result<Vec<PredictorSpec>> {
    let file: BankFile = toml::from_str(text).map_err(|e| Error::parse("bank", e.to_string()))?;
    if file.model.is_empty() {
        return Err(Error::InvalidInput("bank has no models".into()));
    }
    file.model
        .into_iter()
        .enumerate()
        .map(|(i, mut section)| {
            let loc = format!("bank: model[{i}]");
            let label = match section.remove("label") {
                Some(toml::Value::String(s)) => s,
                _ => return Err(Error::parse(loc, "missing string key `label`")),
            };
            let params: PredictorParams = section
                .try_into()
                .map_err(|e: toml::de::Error| Error::parse(loc.clone(), e.to_string()))?;
            params.validate()?;
            Ok(PredictorSpec { label, params })
        })
        .collect()
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<Vec<PredictorSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bank(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
        other => other,
    })
}

/// `n` exact predictors.
pub fn identity_bank(n: usize) -> Vec<PredictorSpec> {
    (0..n)
        .map(|i| PredictorSpec {
            label: format!("identity{i}"),
            params: PredictorParams {
                seed: i as u64,
                ..Default::default()
            },
        })
        .collect()
}

/// Five intensity- and degree-sensitive predictors, one per augmentation
/// label. Seeds are derived from `seed` so each model has its own stream.
pub fn default_bank(seed: u64) -> Vec<PredictorSpec> {
    const LABELS: [&str; 5] = ["original", "nlt", "hlt", "vlt", "hvlt"];
    LABELS
        .iter()
        .enumerate()
        .map(|(i, label)| PredictorSpec {
            label: label.to_string(),
            params: PredictorParams {
                jitter_sigma: 1.0,
                p_drop_base: 0.03,
                degree_drop_gain: 0.02,
                intensity_gamma: 4.0,
                intensity_drop_gain: 0.1,
                intensity_jitter_gain: 30.0,
                p_spurious: 0.02,
                seed: seed.wrapping_mul(31).wrapping_add(i as u64),
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrip() {
        let text = r#"
[[model]]
label = "original"
jitter_sigma = 1.0
p_drop_base = 0.1
seed = 4

[[model]]
label = "nlt"
"#;
        let bank = parse_bank(text).unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank[0].params.jitter_sigma, 1.0);
        assert_eq!(bank[0].params.seed, 4);
        assert_eq!(bank[1].params, PredictorParams::default());
    }

    #[test]
    fn rejects_bad_banks() {
        assert!(matches!(
            parse_bank("model = []"),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            parse_bank("[[model]]\nlabel = \"a\"\nbogus = 1\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_bank("[[model]]\nlabel = \"a\"\np_drop_base = 1.5\n"),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn default_bank_has_distinct_seeds() {
        let bank = default_bank(7);
        assert_eq!(bank.len(), 5);
        let seeds: std::collections::BTreeSet<u64> = bank.iter().map(|s| s.params.seed).collect();
        assert_eq!(seeds.len(), 5);
    }
}
