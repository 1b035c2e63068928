//! Run configuration: a line-oriented `key = value` format.
//!
//! `#` starts a comment, blank lines are skipped, unknown keys are rejected
//! with the offending line number. Device noise comes in exactly one of two
//! forms: direct probabilities (`p_ad`, `p_d`) or hardware timing (`t1_us`,
//! `t2_us`, `tr_ns`, converted via P = 1 - exp(-Tr/T)); readout errors
//! (`p01`, `p10`) may accompany either. Model parameters (`alpha`, `kappa`,
//! `steps`) are validated when a command asks for them, so partial configs
//! (e.g. calibration-only) still parse.

use thiserror::Error;

use crate::collision::{Basis, ModelParams, NoiseParams};
use crate::protocol::ModelTag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: &'static str },
    #[error("line {line}: malformed value for `{key}`: {reason}")]
    MalformedValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("line {line}: `{key}` conflicts with the other noise form")]
    ConflictingNoiseForms { line: usize, key: String },
}

/// Raw device-noise specification, before conversion to probabilities.
#[derive(Debug, Clone, PartialEq)]
enum NoiseForm {
    Direct { p_ad: f64, p_d: f64 },
    Timing { t1_us: f64, t2_us: f64, tr_ns: f64 },
}

/// Parsed run configuration. Model keys are optional at parse time and
/// demanded by the accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub steps: Option<u32>,
    pub omega0: f64,
    pub shots: u64,
    pub seed: u64,
    pub basis: Basis,
    pub table_model: ModelTag,
    pub prune_threshold: f64,
    pub output_path: Option<String>,
    noise_form: Option<NoiseForm>,
    p01: f64,
    p10: f64,
    pub t_final: f64,
    pub dt_start: f64,
    pub halvings: u32,
}

const MAX_EXACT_STEPS: u32 = 16;

impl RunConfig {
    /// Model parameters; errors if `alpha`, `kappa`, or `steps` is missing,
    /// or if `steps` exceeds the exact-enumeration cap without pruning.
    pub fn model(&self) -> Result<ModelParams<f64>, ConfigError> {
        let alpha = self.alpha.ok_or(ConfigError::MissingKey { key: "alpha" })?;
        let kappa = self.kappa.ok_or(ConfigError::MissingKey { key: "kappa" })?;
        let steps = self.steps.ok_or(ConfigError::MissingKey { key: "steps" })?;
        if steps > MAX_EXACT_STEPS && self.prune_threshold <= 0.0 {
            return Err(ConfigError::MalformedValue {
                line: 0,
                key: "steps".into(),
                reason: format!(
                    "steps {steps} exceeds {MAX_EXACT_STEPS}; set prune_threshold > 0"
                ),
            });
        }
        Ok(ModelParams::new(alpha, kappa, steps)
            .with_omega0(self.omega0)
            .with_basis(self.basis))
    }

    /// Device noise as probabilities; `enabled = false` when no noise keys
    /// were present.
    pub fn noise(&self) -> NoiseParams<f64> {
        match &self.noise_form {
            Some(NoiseForm::Direct { p_ad, p_d }) => {
                NoiseParams::direct(*p_ad, *p_d, self.p01, self.p10)
            }
            Some(NoiseForm::Timing { t1_us, t2_us, tr_ns }) => {
                NoiseParams::from_timing(*t1_us, *t2_us, *tr_ns, self.p01, self.p10)
            }
            None if self.p01 != 0.0 || self.p10 != 0.0 => {
                NoiseParams::direct(0.0, 0.0, self.p01, self.p10)
            }
            None => NoiseParams::off(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(
    line: usize,
    key: &str,
    value: &str,
) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::MalformedValue {
        line,
        key: key.to_owned(),
        reason: format!("cannot parse `{value}`"),
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig {
        alpha: None,
        kappa: None,
        steps: None,
        omega0: 1.0,
        shots: 10_000,
        seed: 0,
        basis: Basis::X,
        table_model: ModelTag::Ideal,
        prune_threshold: 0.0,
        output_path: None,
        noise_form: None,
        p01: 0.0,
        p10: 0.0,
        t_final: 2.0,
        dt_start: 1e-2,
        halvings: 6,
    };
    // collected raw noise keys; reconciled after the scan
    let mut direct: [Option<(usize, f64)>; 2] = [None, None]; // p_ad, p_d
    let mut timing: [Option<(usize, f64)>; 3] = [None, None, None]; // t1, t2, tr

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            ConfigError::MalformedValue {
                line,
                key: content.to_owned(),
                reason: "expected `key = value`".into(),
            }
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "alpha" => cfg.alpha = Some(parse_num(line, key, value)?),
            "kappa" => cfg.kappa = Some(parse_num(line, key, value)?),
            "steps" => cfg.steps = Some(parse_num(line, key, value)?),
            "omega0" => cfg.omega0 = parse_num(line, key, value)?,
            "shots" => cfg.shots = parse_num(line, key, value)?,
            "seed" => cfg.seed = parse_num(line, key, value)?,
            "prune_threshold" => cfg.prune_threshold = parse_num(line, key, value)?,
            "output_path" => cfg.output_path = Some(value.to_owned()),
            "p01" => cfg.p01 = parse_num(line, key, value)?,
            "p10" => cfg.p10 = parse_num(line, key, value)?,
            "p_ad" => direct[0] = Some((line, parse_num(line, key, value)?)),
            "p_d" => direct[1] = Some((line, parse_num(line, key, value)?)),
            "t1_us" => timing[0] = Some((line, parse_num(line, key, value)?)),
            "t2_us" => timing[1] = Some((line, parse_num(line, key, value)?)),
            "tr_ns" => timing[2] = Some((line, parse_num(line, key, value)?)),
            "t_final" => cfg.t_final = parse_num(line, key, value)?,
            "dt_start" => cfg.dt_start = parse_num(line, key, value)?,
            "halvings" => cfg.halvings = parse_num(line, key, value)?,
            "basis" => {
                cfg.basis = match value {
                    "x" => Basis::X,
                    "z" => Basis::Z,
                    other => {
                        return Err(ConfigError::MalformedValue {
                            line,
                            key: key.to_owned(),
                            reason: format!("expected `x` or `z`, got `{other}`"),
                        })
                    }
                }
            }
            "table_model" => {
                cfg.table_model = match value {
                    "ideal" => ModelTag::Ideal,
                    "noisy" => ModelTag::Noisy,
                    other => {
                        return Err(ConfigError::MalformedValue {
                            line,
                            key: key.to_owned(),
                            reason: format!("expected `ideal` or `noisy`, got `{other}`"),
                        })
                    }
                }
            }
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_owned(),
                })
            }
        }
    }

    let direct_present = direct.iter().any(Option::is_some);
    let timing_present = timing.iter().any(Option::is_some);
    if direct_present && timing_present {
        let (line, key) = timing
            .iter()
            .zip(["t1_us", "t2_us", "tr_ns"])
            .find_map(|(slot, name)| slot.map(|(l, _)| (l, name)))
            .expect("timing key present");
        return Err(ConfigError::ConflictingNoiseForms {
            line,
            key: key.to_owned(),
        });
    }
    if direct_present {
        cfg.noise_form = Some(NoiseForm::Direct {
            p_ad: direct[0].map_or(0.0, |(_, v)| v),
            p_d: direct[1].map_or(0.0, |(_, v)| v),
        });
    } else if timing_present {
        let [t1, t2, tr] = timing;
        let missing = [("t1_us", t1), ("t2_us", t2), ("tr_ns", tr)]
            .into_iter()
            .find(|(_, v)| v.is_none());
        if let Some((key, _)) = missing {
            return Err(ConfigError::MissingKey { key });
        }
        cfg.noise_form = Some(NoiseForm::Timing {
            t1_us: t1.unwrap().1,
            t2_us: t2.unwrap().1,
            tr_ns: tr.unwrap().1,
        });
    }
    Ok(cfg)
}
