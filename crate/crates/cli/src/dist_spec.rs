//! Textual distribution specs: `uniform:n`, `linear:n`, `zipf:n:s`,
//! `file:path` (JSON array) and `inline:w1,w2,...`.

use std::fs;
use std::str::FromStr;

use maxload::{validate_distribution, Distribution};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct DistSpec {
    /// The spec exactly as given; echoed in reports and CSV.
    pub text: String,
    pub dist: Distribution,
}

fn bad(token: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Parse(format!("invalid distribution spec token `{token}`: {why}"))
}

fn parse_count(token: &str) -> Result<usize, CliError> {
    match token.parse::<usize>() {
        Ok(0) => Err(bad(token, "bin count must be at least 1")),
        Ok(n) => Ok(n),
        Err(e) => Err(bad(token, e)),
    }
}

fn from_weights(weights: &[f64], tokens: &[&str]) -> Result<Distribution, CliError> {
    validate_distribution(weights).map_err(|e| {
        let culprit = match e {
            maxload::Error::NegativeWeight { index, .. } | maxload::Error::NonFinite { index } => {
                tokens.get(index).copied()
            }
            _ => None,
        };
        match culprit {
            Some(t) => bad(t, &e),
            None => CliError::Parse(format!("invalid distribution: {e}")),
        }
    })
}

impl FromStr for DistSpec {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self, CliError> {
        let (kind, rest) = text
            .split_once(':')
            .ok_or_else(|| bad(text, "expected <kind>:<args>"))?;
        let dist = match kind {
            "uniform" => Distribution::uniform(parse_count(rest)?).map_err(|e| bad(rest, e))?,
            "linear" => Distribution::linear(parse_count(rest)?).map_err(|e| bad(rest, e))?,
            "zipf" => {
                let (n, s) = rest
                    .split_once(':')
                    .ok_or_else(|| bad(rest, "expected zipf:<n>:<s>"))?;
                let s_val: f64 = s.parse().map_err(|e| bad(s, e))?;
                if !s_val.is_finite() {
                    return Err(bad(s, "exponent must be finite"));
                }
                Distribution::zipf(parse_count(n)?, s_val).map_err(|e| bad(s, e))?
            }
            "inline" => {
                let tokens: Vec<&str> = rest.split(',').map(str::trim).collect();
                let weights = tokens
                    .iter()
                    .map(|t| t.parse::<f64>().map_err(|e| bad(t, e)))
                    .collect::<Result<Vec<_>, _>>()?;
                from_weights(&weights, &tokens)?
            }
            "file" => {
                let raw = fs::read_to_string(rest).map_err(|e| bad(rest, e))?;
                let weights: Vec<f64> = serde_json::from_str(&raw).map_err(|e| bad(rest, e))?;
                from_weights(&weights, &[])?
            }
            other => {
                return Err(bad(
                    other,
                    "unknown kind (uniform, linear, zipf, file, inline)",
                ));
            }
        };
        Ok(Self {
            text: text.to_string(),
            dist,
        })
    }
}
