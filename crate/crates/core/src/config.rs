//! Flat `key = value` scenario files and command-line overrides.
//!
//! ```text
//! # comment
//! num_uus = 8
//! num_subbands = 16
//! interference_cap = 10
//! ```

use std::path::Path;

use crate::channel::ScenarioConfig;
use crate::error::{Error, Result};

pub const VALID_KEYS: [&str; 13] = [
    "num_uus",
    "num_subbands",
    "power_cap",
    "interference_cap",
    "epsilon",
    "seed",
    "noise_floor",
    "fading_scale",
    "max_outer_iters",
    "max_inner_iters",
    "subset_exact_threshold",
    "tolerance",
    "revenue_guard",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("invalid value `{value}` for `{key}`")))
}

/// Sets one field by name. The value is parsed according to the field type;
/// `max_outer_iters` also accepts `auto`.
pub fn set_key(config: &mut ScenarioConfig, key: &str, value: &str) -> Result<()> {
    let value = value.trim();
    match key {
        "num_uus" => config.num_uus = parse(key, value)?,
        "num_subbands" => config.num_subbands = parse(key, value)?,
        "power_cap" => config.power_cap = parse(key, value)?,
        "interference_cap" => config.interference_cap = parse(key, value)?,
        "epsilon" => config.epsilon = parse(key, value)?,
        "seed" => config.seed = parse(key, value)?,
        "noise_floor" => config.noise_floor = parse(key, value)?,
        "fading_scale" => config.fading_scale = parse(key, value)?,
        "max_outer_iters" => {
            config.max_outer_iters = if value == "auto" { None } else { Some(parse(key, value)?) }
        }
        "max_inner_iters" => config.max_inner_iters = parse(key, value)?,
        "subset_exact_threshold" => config.subset_exact_threshold = parse(key, value)?,
        "tolerance" => config.tolerance = parse(key, value)?,
        "revenue_guard" => config.revenue_guard = parse(key, value)?,
        _ => {
            return Err(Error::UnknownKey {
                key: key.to_string(),
                valid: VALID_KEYS.join(", "),
            })
        }
    }
    Ok(())
}

/// Splits `key=value`.
pub fn split_pair(pair: &str) -> Result<(&str, &str)> {
    let (k, v) = pair
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("expected key=value, got `{pair}`")))?;
    Ok((k.trim(), v.trim()))
}

pub fn apply_overrides<S: AsRef<str>>(config: &mut ScenarioConfig, overrides: &[S]) -> Result<()> {
    for o in overrides {
        let (k, v) = split_pair(o.as_ref())?;
        set_key(config, k, v)?;
    }
    Ok(())
}

/// Parses a config file body on top of `base`.
pub fn parse_config(text: &str, base: ScenarioConfig) -> Result<ScenarioConfig> {
    let mut config = base;
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_pair(line).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("line {}: {msg}", n + 1)),
            other => other,
        })?;
        set_key(&mut config, k, v)?;
    }
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config = parse_config(&text, ScenarioConfig::default())?;
    config.validate()?;
    Ok(config)
}

/// Renders a config in the file format; [`parse_config`] reads it back.
pub fn render_config(config: &ScenarioConfig) -> String {
    let outer = config
        .max_outer_iters
        .map_or_else(|| "auto".to_string(), |n| n.to_string());
    format!(
        "num_uus = {}\nnum_subbands = {}\npower_cap = {}\ninterference_cap = {}\nepsilon = {}\nseed = {}\n\
         noise_floor = {}\nfading_scale = {}\nmax_outer_iters = {}\nmax_inner_iters = {}\n\
         subset_exact_threshold = {}\ntolerance = {}\nrevenue_guard = {}\n",
        config.num_uus,
        config.num_subbands,
        config.power_cap,
        config.interference_cap,
        config.epsilon,
        config.seed,
        config.noise_floor,
        config.fading_scale,
        outer,
        config.max_inner_iters,
        config.subset_exact_threshold,
        config.tolerance,
        config.revenue_guard,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let c = parse_config("# hi\n\nnum_uus = 7 # trailing\npower_cap=2.5\nmax_outer_iters = 40\n", ScenarioConfig::default())
            .unwrap();
        assert_eq!(c.num_uus, 7);
        assert_eq!(c.power_cap, 2.5);
        assert_eq!(c.max_outer_iters, Some(40));
    }

    #[test]
    fn unknown_key_lists_every_valid_key() {
        let err = parse_config("num_users = 3\n", ScenarioConfig::default()).unwrap_err();
        let msg = err.to_string();
        for k in VALID_KEYS {
            assert!(msg.contains(k), "{msg}");
        }
        assert!(msg.contains("num_users"));
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert!(parse_config("num_uus 3\n", ScenarioConfig::default()).is_err());
        assert!(parse_config("num_uus = three\n", ScenarioConfig::default()).is_err());
        assert!(parse_config("revenue_guard = maybe\n", ScenarioConfig::default()).is_err());
    }

    #[test]
    fn render_round_trips() {
        let c = ScenarioConfig {
            seed: 99,
            interference_cap: 0.125,
            max_outer_iters: Some(7),
            revenue_guard: false,
            ..ScenarioConfig::new(5, 6)
        };
        assert_eq!(parse_config(&render_config(&c), ScenarioConfig::default()).unwrap(), c);
        let d = ScenarioConfig::default();
        assert_eq!(parse_config(&render_config(&d), ScenarioConfig::new(1, 1)).unwrap(), d);
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut c = ScenarioConfig::default();
        apply_overrides(&mut c, &["seed=3", "seed = 4", "max_outer_iters=auto"]).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.max_outer_iters, None);
        assert!(apply_overrides(&mut c, &["nope"]).is_err());
    }
}
