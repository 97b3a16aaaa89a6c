//! Flat `key = value` scenario files.
//!
//! Blank lines and `#` comments are ignored. Unspecified keys keep the
//! defaults of [`ScenarioConfig::default`]. Power is in watts, bandwidth in
//! hertz, times in seconds, distances in meters; `noise_psd_dbm` is the only
//! logarithmic key.

use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::channel::{dbm_to_watts, ChannelError, McsTable};
use crate::sched::MlwdfUpdate;
use crate::simkit::{ScenarioConfig, SchedulerChoice, SimError};
use crate::traffic::RateRule;

pub const KEYS: &[&str] = &[
    "voice_users",
    "video_users",
    "data_users",
    "distances",
    "total_power",
    "total_bandwidth",
    "frame_len",
    "frames",
    "warmup",
    "seed",
    "scheduler",
    "quantize",
    "mcs_file",
    "alpha",
    "initial_rate",
    "rt_cap",
    "n_sub",
    "defer_threshold",
    "force_fraction",
    "rt_rate_rule",
    "flush_window",
    "rt_fragmentation",
    "mlwdf_update",
    "noise_psd_dbm",
    "snr_gap",
    "shadow_mean_db",
    "shadow_sigma_db",
    "fast_coherence",
    "slow_coherence",
    "voice_packet_bits",
    "voice_interval",
    "video_packet_bits",
    "video_interval",
    "file_bits",
    "voice_delay_bound",
    "video_delay_bound",
    "data_delay_bound",
    "exceed_prob",
    "voice_duty_cycle",
    "voice_talkspurt",
    "solver_max_outer",
    "solver_max_inner",
    "degrade_factor",
    "removal_floor",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: expected `key = value`, found {text:?}")]
    Syntax { origin: String, text: String },
    #[error("{origin}: unknown key `{key}`; valid keys: {}", KEYS.join(", "))]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: `{key}` expects {expected}, found {value:?}")]
    BadValue { origin: String, key: String, value: String, expected: String },
    #[error("{origin}: cannot load MCS table {path:?}")]
    Mcs { origin: String, path: PathBuf, source: ChannelError },
    #[error(transparent)]
    Invalid(#[from] SimError),
}

fn parse_num<T: FromStr>(origin: &str, key: &str, value: &str, expected: &str) -> Result<T, ConfigError> {
    value.parse::<T>().map_err(|_| ConfigError::BadValue {
        origin: origin.into(),
        key: key.into(),
        value: value.into(),
        expected: expected.into(),
    })
}

fn parse_bool(origin: &str, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::BadValue {
            origin: origin.into(),
            key: key.into(),
            value: value.into(),
            expected: "on or off".into(),
        }),
    }
}

fn count(origin: &str, key: &str, value: &str) -> Result<usize, ConfigError> {
    parse_num(origin, key, value, "a nonnegative integer")
}

/// Sets one key. `origin` names the source in error messages.
pub fn apply(cfg: &mut ScenarioConfig, origin: &str, key: &str, value: &str) -> Result<(), ConfigError> {
    let real = |v: &str| parse_num::<f64>(origin, key, v, "a number");
    let value = value.trim();
    match key {
        "voice_users" => cfg.voice_users = count(origin, key, value)?,
        "video_users" => cfg.video_users = count(origin, key, value)?,
        "data_users" => cfg.data_users = count(origin, key, value)?,
        "distances" => {
            cfg.distances = value
                .split(',')
                .map(|d| parse_num::<f64>(origin, key, d.trim(), "a comma-separated list of meters"))
                .collect::<Result<_, _>>()?
        }
        "total_power" => cfg.budget.total_power = real(value)?,
        "total_bandwidth" => cfg.budget.total_bandwidth = real(value)?,
        "frame_len" => cfg.frame_len = real(value)?,
        "frames" => {
            let n: i64 = parse_num(origin, key, value, "an integer")?;
            if n < 1 {
                return Err(SimError::Config(format!("{origin}: frames must be at least 1, got {n}")).into());
            }
            cfg.frames = n as u64;
        }
        "warmup" => cfg.warmup = real(value)?,
        "seed" => cfg.seed = parse_num(origin, key, value, "a 64-bit unsigned integer")?,
        "scheduler" => {
            cfg.scheduler = SchedulerChoice::from_str(value).map_err(|expected| ConfigError::BadValue {
                origin: origin.into(),
                key: key.into(),
                value: value.into(),
                expected,
            })?
        }
        "quantize" => cfg.quantize = parse_bool(origin, key, value)?,
        "mcs_file" => {
            let path = PathBuf::from(value);
            cfg.mcs =
                McsTable::load(&path).map_err(|source| ConfigError::Mcs { origin: origin.into(), path, source })?;
        }
        "alpha" => cfg.alpha = real(value)?,
        "initial_rate" => cfg.initial_rate = real(value)?,
        "rt_cap" => {
            cfg.rt_cap = if value.eq_ignore_ascii_case("auto") { None } else { Some(count(origin, key, value)?) }
        }
        "n_sub" => cfg.n_sub = count(origin, key, value)?,
        "defer_threshold" => cfg.defer_threshold = real(value)?,
        "force_fraction" => cfg.force_fraction = real(value)?,
        "rt_rate_rule" => {
            cfg.rate_rule = match value.to_ascii_lowercase().as_str() {
                "flush" => RateRule::Flush,
                "paced" => RateRule::DeadlinePaced,
                _ => {
                    return Err(ConfigError::BadValue {
                        origin: origin.into(),
                        key: key.into(),
                        value: value.into(),
                        expected: "flush or paced".into(),
                    })
                }
            }
        }
        "flush_window" => cfg.flush_window = real(value)?,
        "rt_fragmentation" => cfg.traffic.rt_fragmentation = parse_bool(origin, key, value)?,
        "mlwdf_update" => {
            cfg.mlwdf_update = match value.to_ascii_lowercase().as_str() {
                "subchannel" => MlwdfUpdate::PerSubchannel,
                "frame" => MlwdfUpdate::PerFrame,
                _ => {
                    return Err(ConfigError::BadValue {
                        origin: origin.into(),
                        key: key.into(),
                        value: value.into(),
                        expected: "subchannel or frame".into(),
                    })
                }
            }
        }
        "noise_psd_dbm" => cfg.propagation.noise_psd = dbm_to_watts(real(value)?),
        "snr_gap" => cfg.propagation.snr_gap = real(value)?,
        "shadow_mean_db" => cfg.propagation.shadow_mean_db = real(value)?,
        "shadow_sigma_db" => cfg.propagation.shadow_sigma_db = real(value)?,
        "fast_coherence" => cfg.propagation.fast_coherence = real(value)?,
        "slow_coherence" => cfg.propagation.slow_coherence = real(value)?,
        "voice_packet_bits" => cfg.traffic.voice_packet_bits = real(value)?,
        "voice_interval" => cfg.traffic.voice_interval = real(value)?,
        "video_packet_bits" => cfg.traffic.video_packet_bits = real(value)?,
        "video_interval" => cfg.traffic.video_interval = real(value)?,
        "file_bits" => cfg.traffic.file_bits = real(value)?,
        "voice_delay_bound" => cfg.traffic.voice_delay_bound = real(value)?,
        "video_delay_bound" => cfg.traffic.video_delay_bound = real(value)?,
        "data_delay_bound" => cfg.traffic.data_delay_bound = real(value)?,
        "exceed_prob" => cfg.traffic.exceed_prob = real(value)?,
        "voice_duty_cycle" => cfg.traffic.voice_duty_cycle = real(value)?,
        "voice_talkspurt" => cfg.traffic.voice_talkspurt = real(value)?,
        "solver_max_outer" => cfg.solver.max_outer = count(origin, key, value)?,
        "solver_max_inner" => cfg.solver.max_inner = count(origin, key, value)?,
        "degrade_factor" => cfg.solver.degrade_factor = real(value)?,
        "removal_floor" => cfg.solver.removal_floor = real(value)?,
        _ => return Err(ConfigError::UnknownKey { origin: origin.into(), key: key.into() }),
    }
    Ok(())
}

fn split_pair(origin: &str, text: &str) -> Result<(String, String), ConfigError> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ConfigError::Syntax { origin: origin.into(), text: text.into() }),
    }
}

/// Parses a `key=value` override as given on the command line.
pub fn parse_override(text: &str) -> Result<(String, String), ConfigError> {
    split_pair(&format!("override {text:?}"), text)
}

/// Parses a scenario file, applies `overrides` last, and validates.
pub fn parse_config_with(text: &str, overrides: &[(String, String)]) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let origin = format!("line {}", i + 1);
        let (key, value) = split_pair(&origin, line)?;
        apply(&mut cfg, &origin, &key, &value)?;
    }
    for (key, value) in overrides {
        apply(&mut cfg, &format!("override {key}={value}"), key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    parse_config_with(text, &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!((cfg.voice_users, cfg.video_users, cfg.data_users), (20, 20, 20));
        assert_eq!(cfg.budget.total_power, 20.0);
        assert_eq!(cfg.budget.total_bandwidth, 8.3e6);
        assert_eq!(cfg.frame_len, 1e-3);
        assert_eq!(cfg.distances, vec![300.0, 600.0, 900.0, 1200.0, 1500.0]);
        assert_eq!(cfg.propagation.shadow_sigma_db, 8.0);
        assert_eq!((cfg.propagation.fast_coherence, cfg.propagation.slow_coherence), (0.005, 0.3));
    }

    #[test]
    fn single_override_keeps_other_defaults() {
        let cfg = parse_config("total_power = 10\n").unwrap();
        assert_eq!(cfg.budget.total_power, 10.0);
        assert_eq!(ScenarioConfig { budget: ScenarioConfig::default().budget, ..cfg }, ScenarioConfig::default());
    }

    #[test]
    fn negative_frames_fail_validation() {
        let err = parse_config("frames = -5").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let msg = parse_config("# header\nvoice_user = 3\n").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("voice_users") && msg.contains("removal_floor"), "{msg}");
    }

    #[test]
    fn type_mismatch_reports_line() {
        let msg = parse_config("seed = 4\n\ntotal_power = lots\n").unwrap_err().to_string();
        assert!(msg.starts_with("line 3"), "{msg}");
    }

    #[test]
    fn comments_lists_and_overrides() {
        let text = "distances = 100, 200 # two rings\nscheduler = mlwdf\nquantize = on\nrt_cap = 4\n";
        let cfg = parse_config_with(text, &[("seed".into(), "9".into()), ("quantize".into(), "off".into())]).unwrap();
        assert_eq!(cfg.distances, vec![100.0, 200.0]);
        assert_eq!(cfg.scheduler, SchedulerChoice::Mlwdf);
        assert!(!cfg.quantize);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.effective_rt_cap(), 4);
    }

    #[test]
    fn noise_is_given_in_dbm() {
        let cfg = parse_config("noise_psd_dbm = -140").unwrap();
        assert!((cfg.propagation.noise_psd / 1e-17 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn every_listed_key_is_accepted() {
        for key in KEYS {
            let sample = match *key {
                "scheduler" => "both",
                "quantize" | "rt_fragmentation" => "off",
                "rt_rate_rule" => "paced",
                "mlwdf_update" => "frame",
                "distances" => "500",
                "mcs_file" => continue,
                "noise_psd_dbm" | "shadow_mean_db" => "-1",
                _ => "0.5",
            };
            let mut cfg = ScenarioConfig::default();
            match apply(&mut cfg, "test", key, sample) {
                Ok(()) | Err(ConfigError::BadValue { .. }) => {}
                Err(e) => panic!("{key}: {e}"),
            }
        }
    }

    #[test]
    fn malformed_line_is_a_syntax_error() {
        assert!(matches!(parse_config("frames 10"), Err(ConfigError::Syntax { .. })));
        assert!(parse_override("seed").is_err());
        assert_eq!(parse_override("seed=3").unwrap(), ("seed".to_string(), "3".to_string()));
    }
}
