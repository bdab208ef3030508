//! Parameter files.
//!
//! A parameter file is TOML with one key per rate plus the calibration
//! anchor:
//!
//! ```toml
//! beta_E = 10.0
//! nu_E = 0.05
//! delta_E = 0.03
//! delta_M = 0.1
//! delta_F = 0.04
//! delta_s = 0.12
//! nu = 0.49
//! gamma_s = 1.0
//! anchor = "F_bar"
//! anchor_value = 11037
//! ```
//!
//! Missing keys take the reference values above.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::params::{calibrate_capacity, Anchor, Params, Rates};

/// Keys accepted in parameter files and `key=value` overrides.
pub const KEYS: [&str; 10] = [
    "beta_E",
    "nu_E",
    "delta_E",
    "delta_M",
    "delta_F",
    "delta_s",
    "nu",
    "gamma_s",
    "anchor",
    "anchor_value",
];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    #[serde(rename = "beta_E")]
    beta_e: Option<f64>,
    #[serde(rename = "nu_E")]
    nu_e: Option<f64>,
    #[serde(rename = "delta_E")]
    delta_e: Option<f64>,
    #[serde(rename = "delta_M")]
    delta_m: Option<f64>,
    #[serde(rename = "delta_F")]
    delta_f: Option<f64>,
    delta_s: Option<f64>,
    nu: Option<f64>,
    gamma_s: Option<f64>,
    #[serde(alias = "calibration_anchor")]
    anchor: Option<String>,
    anchor_value: Option<f64>,
}

/// Rates and calibration anchor as read from a file, before `K` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamConfig {
    pub rates: Rates,
    pub anchor: Anchor,
}

impl Default for ParamConfig {
    fn default() -> Self {
        ParamConfig {
            rates: Rates::reference(0.05),
            anchor: Anchor::REFERENCE,
        }
    }
}

impl ParamConfig {
    pub fn params(&self) -> Result<Params> {
        calibrate_capacity(self.rates, self.anchor)
    }

    pub fn with_nu_e(mut self, nu_e: f64) -> Self {
        self.rates.nu_e = nu_e;
        self
    }
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form key=value")))?;
    let k = k.trim();
    if !KEYS.contains(&k) {
        return Err(Error::Config(format!(
            "unknown parameter `{k}`; expected one of {}",
            KEYS.join(", ")
        )));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

fn parse_anchor(name: &str, value: f64) -> Result<Anchor> {
    match name {
        "F_bar" => Ok(Anchor::FBar(value)),
        "M_bar" => Ok(Anchor::MBar(value)),
        "E_bar" => Ok(Anchor::EBar(value)),
        other => Err(Error::Config(format!(
            "unknown anchor `{other}`; expected F_bar, M_bar or E_bar"
        ))),
    }
}

/// Parses parameter-file text and applies overrides.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<ParamConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    for (k, v) in overrides {
        let value = if k == "anchor" {
            toml::Value::String(v.trim_matches('"').to_string())
        } else {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("value `{v}` for `{k}` is not a number")))?;
            toml::Value::Float(x)
        };
        table.insert(k.clone(), value);
    }
    // integers are accepted where floats are expected
    for (_, v) in table.iter_mut() {
        if let toml::Value::Integer(i) = *v {
            *v = toml::Value::Float(i as f64);
        }
    }
    let file: ParamFile = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    let base = ParamConfig::default();
    let r = base.rates;
    let rates = Rates {
        beta_e: file.beta_e.unwrap_or(r.beta_e),
        nu_e: file.nu_e.unwrap_or(r.nu_e),
        delta_e: file.delta_e.unwrap_or(r.delta_e),
        delta_m: file.delta_m.unwrap_or(r.delta_m),
        delta_f: file.delta_f.unwrap_or(r.delta_f),
        delta_s: file.delta_s.unwrap_or(r.delta_s),
        nu: file.nu.unwrap_or(r.nu),
        gamma_s: file.gamma_s.unwrap_or(r.gamma_s),
    };
    let anchor = match (file.anchor, file.anchor_value) {
        (None, None) => base.anchor,
        (name, value) => parse_anchor(
            name.as_deref().unwrap_or("F_bar"),
            value.unwrap_or(base.anchor.value()),
        )?,
    };
    Ok(ParamConfig { rates, anchor })
}

/// Reads an optional parameter file and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ParamConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference() {
        let c = parse_config("", &[]).unwrap();
        assert_eq!(c, ParamConfig::default());
        assert_eq!(c.params().unwrap(), Params::reference(0.05).unwrap());
    }

    #[test]
    fn file_and_overrides() {
        let text = "beta_E = 10\nnu_E = 0.25\nanchor = \"M_bar\"\nanchor_value = 5106\n";
        let ov = vec![parse_override("nu_E=0.1").unwrap()];
        let c = parse_config(text, &ov).unwrap();
        assert_eq!(c.rates.nu_e, 0.1);
        assert_eq!(c.anchor, Anchor::MBar(5106.0));
        let p = c.params().unwrap();
        assert!((p.m_bar() - 5106.0).abs() < 1e-9 * 5106.0);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        assert!(matches!(parse_config("bogus = 1", &[]), Err(Error::Config(_))));
        assert!(matches!(parse_override("nope=1"), Err(Error::Config(_))));
        assert!(matches!(parse_override("nu_E"), Err(Error::Config(_))));
        assert!(matches!(
            parse_config("", &[("nu".into(), "abc".into())]),
            Err(Error::Config(_))
        ));
        assert!(matches!(parse_config("anchor = \"X\"", &[]), Err(Error::Config(_))));
    }
}
