//! Session configuration overrides shared by `aegis run` flags and the
//! gateway's `POST /sessions` body, so both build identical sessions.

use aegis_core::orchestrator::{Clock, Mode, SessionConfig};
use aegis_core::reviewer::OnExhaust;
use clap::Args;
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFlags {
    /// auto runs straight through; interactive stops at the plan and review gates
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Review acceptance threshold in [0, 1]
    #[arg(long, value_parser = unit_interval)]
    pub tau: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_attempts: Option<u32>,
    /// take_best or escalate
    #[arg(long, value_parser = parse_on_exhaust)]
    pub on_exhaust: Option<OnExhaust>,
    /// Generator infidelity in [0, 1]
    #[arg(long, value_parser = unit_interval)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(64..=4096))]
    pub width: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(64..=4096))]
    pub height: Option<u64>,
    /// Watermark strength, DCT units
    #[arg(long, value_parser = positive)]
    pub lambda: Option<f64>,
    /// Watermark key, decimal or 0x-prefixed hex
    #[arg(long, value_parser = parse_key)]
    #[serde(deserialize_with = "key_from_json")]
    pub key: Option<u64>,
    /// Maximum overlap ratio left between placed elements
    #[arg(long, value_parser = unit_interval)]
    pub theta: Option<f64>,
    /// Pin the clock to this many UTC seconds
    #[arg(long)]
    pub fixed_clock: Option<i64>,
    #[arg(long)]
    pub account: Option<String>,
    #[arg(long)]
    pub project: Option<String>,
}

impl ConfigFlags {
    pub fn to_config(&self) -> Result<SessionConfig, String> {
        let mut cfg = SessionConfig::new(self.mode.unwrap_or(Mode::Auto));
        if let Some(v) = self.tau {
            cfg.review.tau = v;
        }
        if let Some(v) = self.max_attempts {
            cfg.review.max_attempts = v;
        }
        if let Some(v) = self.on_exhaust {
            cfg.review.on_exhaust = v;
        }
        if let Some(v) = self.eta {
            cfg.generator.eta = v;
        }
        if let Some(v) = self.seed {
            cfg.generator.seed = v;
        }
        if let Some(v) = self.width {
            cfg.generator.canvas_w = v as usize;
        }
        if let Some(v) = self.height {
            cfg.generator.canvas_h = v as usize;
        }
        if let Some(v) = self.lambda {
            cfg.watermark.lambda = v;
        }
        if let Some(v) = self.key {
            cfg.watermark.key = v;
        }
        if let Some(v) = self.theta {
            cfg.integrator.theta = v;
        }
        if let Some(v) = &self.account {
            cfg.identity.account_id = v.clone();
        }
        if let Some(v) = &self.project {
            cfg.identity.project_id = v.clone();
        }
        cfg.clock = match self.fixed_clock {
            Some(epoch_s) => Clock::Fixed { epoch_s },
            None => Clock::System,
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "auto" => Ok(Mode::Auto),
        "interactive" => Ok(Mode::Interactive),
        _ => Err("expected auto or interactive".into()),
    }
}

fn parse_on_exhaust(s: &str) -> Result<OnExhaust, String> {
    match s {
        "take_best" => Ok(OnExhaust::TakeBest),
        "escalate" => Ok(OnExhaust::Escalate),
        _ => Err("expected take_best or escalate".into()),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

pub fn parse_key(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(&h.replace('_', ""), 16),
        None => s.parse(),
    };
    parsed.map_err(|_| format!("'{s}' is not a 64-bit key"))
}

/// Keys exceed what JSON numbers carry safely in browsers, so a string
/// form is accepted too.
fn key_from_json<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Key {
        Num(u64),
        Text(String),
    }
    match Option::<Key>::deserialize(d)? {
        None => Ok(None),
        Some(Key::Num(n)) => Ok(Some(n)),
        Some(Key::Text(t)) => parse_key(&t).map(Some).map_err(serde::de::Error::custom),
    }
}
