//! Flag-value parsers and the JSON defaults file.
//!
//! Spec strings accepted on the command line: integer ranges `1..6`
//! (inclusive), comma lists `4,8,16` (members may be ranges), and float
//! grids `lo:hi:step` (inclusive of both ends). A `--config` file holds a
//! flat JSON object keyed by long flag names; explicit flags win over it.

use std::path::PathBuf;

use randamp::sources::BiasRule;

use crate::CliError;

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

/// Integer spec: `"4"`, `"1..6"`, or a comma list of either.
pub fn parse_multi(spec: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: usize = lo
                .trim()
                .parse()
                .map_err(|_| usage(format!("malformed range {part:?}")))?;
            let hi: usize = hi
                .trim()
                .parse()
                .map_err(|_| usage(format!("malformed range {part:?}")))?;
            if lo > hi {
                return Err(usage(format!("empty range {part:?}")));
            }
            out.extend(lo..=hi);
        } else {
            out.push(
                part.parse()
                    .map_err(|_| usage(format!("malformed integer {part:?}")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(usage(format!("empty spec {spec:?}")));
    }
    Ok(out)
}

/// Float grid: a single value or `lo:hi:step` including both endpoints.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [one] => Ok(vec![one
            .trim()
            .parse()
            .map_err(|_| usage(format!("malformed number {spec:?}")))?]),
        [lo, hi, step] => {
            let lo: f64 = lo
                .trim()
                .parse()
                .map_err(|_| usage(format!("malformed grid {spec:?}")))?;
            let hi: f64 = hi
                .trim()
                .parse()
                .map_err(|_| usage(format!("malformed grid {spec:?}")))?;
            let step: f64 = step
                .trim()
                .parse()
                .map_err(|_| usage(format!("malformed grid {spec:?}")))?;
            let valid = lo.is_finite() && hi.is_finite() && step.is_finite() && step > 0.0 && hi >= lo;
            if !valid {
                return Err(usage(format!("grid {spec:?} must have hi >= lo, step > 0")));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|k| lo + k as f64 * step).collect())
        }
        _ => Err(usage(format!("malformed grid {spec:?}; expected lo:hi:step"))),
    }
}

/// Source rule names: `unbiased`, `constant:<bias>`, `history-parity`,
/// `toward:<bits>`, `away:<bits>`.
pub fn parse_rule(spec: &str) -> Result<BiasRule, CliError> {
    if spec == "unbiased" {
        return Ok(BiasRule::Unbiased);
    }
    if spec == "history-parity" {
        return Ok(BiasRule::HistoryParity);
    }
    if let Some(bias) = spec.strip_prefix("constant:") {
        let bias: f64 = bias
            .parse()
            .map_err(|_| usage(format!("malformed bias in {spec:?}")))?;
        return Ok(BiasRule::Constant(bias));
    }
    let bits = |s: &str| -> Result<Vec<u8>, CliError> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(usage(format!("pattern in {spec:?} must be 0/1 bits"))),
            })
            .collect()
    };
    if let Some(p) = spec.strip_prefix("toward:") {
        return Ok(BiasRule::TowardPattern { pattern: bits(p)? });
    }
    if let Some(p) = spec.strip_prefix("away:") {
        return Ok(BiasRule::AwayFromPattern { pattern: bits(p)? });
    }
    Err(usage(format!(
        "unknown rule {spec:?}; expected unbiased, constant:<bias>, history-parity, toward:<bits>, or away:<bits>"
    )))
}

/// Device selector for the certification commands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceSpec {
    Honest,
    AllEqual,
    Attack,
    Custom(PathBuf),
}

pub fn parse_device(spec: &str) -> Result<DeviceSpec, CliError> {
    match spec {
        "honest" => Ok(DeviceSpec::Honest),
        "all-equal" => Ok(DeviceSpec::AllEqual),
        "attack" => Ok(DeviceSpec::Attack),
        other => match other.strip_prefix("custom:") {
            Some(path) if !path.is_empty() => Ok(DeviceSpec::Custom(PathBuf::from(path))),
            _ => Err(usage(format!(
                "unknown device {spec:?}; expected honest, all-equal, attack, or custom:<path>"
            ))),
        },
    }
}

/// Defaults loaded from `--config`: a flat JSON object keyed by long flag
/// names. Values may be numbers or strings; strings are accepted wherever
/// a spec string is expected.
pub struct Config(serde_json::Map<String, serde_json::Value>);

impl Config {
    pub fn empty() -> Self {
        Self(serde_json::Map::new())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| usage(format!("malformed config {}: {e}", path.display())))?;
        match value {
            serde_json::Value::Object(map) => Ok(Self(map)),
            _ => Err(usage(format!(
                "config {} must be a JSON object",
                path.display()
            ))),
        }
    }

    /// Spec-string value: strings pass through, numbers are stringified.
    pub fn get_spec(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
            Some(serde_json::Value::Number(n)) => Ok(Some(n.to_string())),
            Some(other) => Err(usage(format!("config key {key:?} has unusable value {other}"))),
        }
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| usage(format!("config key {key:?} must be an unsigned integer"))),
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| usage(format!("config key {key:?} must be a number"))),
        }
    }
}

/// Explicit flag, then config value, then built-in default.
pub fn fallback<T>(cli: Option<T>, cfg: Option<T>, default: T) -> T {
    cli.or(cfg).unwrap_or(default)
}

/// Explicit flag or config value; absence is a usage error.
pub fn require<T>(cli: Option<T>, cfg: Option<T>, flag: &str) -> Result<T, CliError> {
    cli.or(cfg)
        .ok_or_else(|| usage(format!("missing required --{flag}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_accepts_scalars_ranges_and_lists() {
        assert_eq!(parse_multi("4").unwrap(), vec![4]);
        assert_eq!(parse_multi("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_multi("4,8,16").unwrap(), vec![4, 8, 16]);
        assert_eq!(parse_multi("1..3,8").unwrap(), vec![1, 2, 3, 8]);
        assert!(parse_multi("6..1").is_err());
        assert!(parse_multi("1..x").is_err());
        assert!(parse_multi("").is_err());
    }

    #[test]
    fn grid_includes_both_endpoints() {
        let g = parse_grid("0:0.25:0.005").unwrap();
        assert_eq!(g.len(), 51);
        assert!((g[0] - 0.0).abs() < 1e-15);
        assert!((g[50] - 0.25).abs() < 1e-12);
        assert_eq!(parse_grid("0.1").unwrap(), vec![0.1]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:-0.1").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }

    #[test]
    fn rules_and_devices_parse() {
        assert_eq!(parse_rule("unbiased").unwrap(), BiasRule::Unbiased);
        assert_eq!(parse_rule("history-parity").unwrap(), BiasRule::HistoryParity);
        assert_eq!(parse_rule("constant:0.55").unwrap(), BiasRule::Constant(0.55));
        assert_eq!(
            parse_rule("toward:0110").unwrap(),
            BiasRule::TowardPattern {
                pattern: vec![0, 1, 1, 0]
            }
        );
        assert!(parse_rule("toward:012").is_err());
        assert!(parse_rule("sideways").is_err());

        assert_eq!(parse_device("honest").unwrap(), DeviceSpec::Honest);
        assert_eq!(parse_device("all-equal").unwrap(), DeviceSpec::AllEqual);
        assert_eq!(parse_device("attack").unwrap(), DeviceSpec::Attack);
        assert_eq!(
            parse_device("custom:dev.json").unwrap(),
            DeviceSpec::Custom(PathBuf::from("dev.json"))
        );
        assert!(parse_device("custom:").is_err());
        assert!(parse_device("quantumish").is_err());
    }
}
