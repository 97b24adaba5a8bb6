//! Experiment configuration: TOML with optional dB suffixes on levels.

use std::fmt;
use std::path::{Path, PathBuf};

use isac_core::estimation::{Estimator, GridSpec};
use isac_core::model::{GaussianMixture, SystemConfig, TargetEnvironment, UserGeometry};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// `x dB` → `10^(x/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `x dBm` → watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Parses `"30 dBm"`, `"-5 dB"` or a plain number.
pub fn parse_level(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (num, conv): (&str, fn(f64) -> f64) = if let Some(v) = t.strip_suffix("dBm") {
        (v, dbm_to_watts)
    } else if let Some(v) = t.strip_suffix("dB") {
        (v, db_to_linear)
    } else {
        (t, |x| x)
    };
    num.trim().parse::<f64>().map(conv).map_err(|_| {
        format!("cannot parse level {s:?} (expected a number, \"<x> dB\" or \"<x> dBm\")")
    })
}

struct LevelVisitor;

impl Visitor<'_> for LevelVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or a string such as \"-5 dB\" or \"30 dBm\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        parse_level(v).map_err(E::custom)
    }
}

fn level<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    d.deserialize_any(LevelVisitor)
}

fn levels<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    struct Seq;
    impl<'de> Visitor<'de> for Seq {
        type Value = Vec<f64>;
        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an array of levels")
        }
        fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
            #[derive(Deserialize)]
            struct L(#[serde(deserialize_with = "level")] f64);
            let mut out = Vec::new();
            while let Some(L(v)) = seq.next_element()? {
                out.push(v);
            }
            Ok(out)
        }
    }
    d.deserialize_seq(Seq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_user: usize,
    pub symbols: usize,
    /// Watts.
    #[serde(deserialize_with = "level")]
    pub power: f64,
    /// Watts.
    #[serde(deserialize_with = "level")]
    pub noise_comm: f64,
    /// Watts.
    #[serde(deserialize_with = "level")]
    pub noise_sense: f64,
    pub spacing_over_lambda: f64,
    pub bs_height_m: f64,
    pub target_range_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    #[serde(deserialize_with = "levels")]
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(deserialize_with = "level")]
    pub rician_k: f64,
    /// Path loss at 1 m.
    #[serde(deserialize_with = "level")]
    pub ref_loss: f64,
    pub exponent: f64,
    pub user_range_m: f64,
    pub user_height_m: f64,
    pub user_angle: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    /// Normalised receive SNR `P|α|²L/σ_s²`; `α` has phase 0.
    #[serde(deserialize_with = "level")]
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

pub const SWEEP_VARIABLES: &[&str] = &["rate_target"];

impl SweepSection {
    /// Explicit values, or `start, start+step, …` up to `stop` inclusive.
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        if !SWEEP_VARIABLES.contains(&self.variable.as_str()) {
            return Err(CliError::Config(format!(
                "sweep.variable {:?} is not one of {SWEEP_VARIABLES:?}",
                self.variable
            )));
        }
        let grid = match (&self.values, self.start, self.stop, self.step) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(h)) => {
                if !(h > 0.0) || !(b >= a) {
                    return Err(CliError::Config(
                        "sweep needs step > 0 and stop >= start".into(),
                    ));
                }
                let n = ((b - a) / h + 1e-9).floor() as usize;
                // rounding keeps 5.0 + 3·0.2 printed as 5.6
                (0..=n)
                    .map(|i| ((a + h * i as f64) * 1e10).round() / 1e10)
                    .collect()
            }
            _ => {
                return Err(CliError::Config(
                    "sweep needs either `values` or all of `start`, `stop`, `step`".into(),
                ))
            }
        };
        if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config(
                "sweep grid must be nonempty and finite".into(),
            ));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub trials: usize,
    pub seed: u64,
    /// Estimator for the prior-based designs; benchmarks always use MLE.
    pub estimator: Estimator,
    /// Normalised SNR grid (linear after parsing).
    #[serde(deserialize_with = "levels")]
    pub snr: Vec<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_true")]
    pub benchmarks: bool,
}

fn default_grid_points() -> usize {
    GridSpec::<f64>::default().points
}

fn default_true() -> bool {
    true
}

impl MonteCarloSection {
    pub fn grid_spec(&self) -> GridSpec<f64> {
        GridSpec {
            points: self.grid_points,
            ..GridSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    /// `σ_e²` of the inexact-angle benchmark.
    #[serde(deserialize_with = "level")]
    pub perturb_variance: f64,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            perturb_variance: db_to_linear(-15.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// bit/s/Hz.
    pub rate_target: f64,
    pub system: SystemSection,
    pub prior: PriorSection,
    pub channel: ChannelSection,
    pub env: EnvSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub montecarlo: Option<MonteCarloSection>,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.rate_target >= 0.0) || !self.rate_target.is_finite() {
            return Err(CliError::Config(
                "rate_target must be finite and >= 0".into(),
            ));
        }
        self.system_config()?;
        self.prior_model()?;
        self.environment()?;
        self.geometry()
            .validate(&self.system_config()?)
            .map_err(config_err)?;
        if let Some(s) = &self.sweep {
            s.grid()?;
        }
        if let Some(mc) = &self.montecarlo {
            if mc.trials == 0 {
                return Err(CliError::Config("montecarlo.trials must be >= 1".into()));
            }
            if mc.snr.is_empty() || mc.snr.iter().any(|s| !(*s > 0.0)) {
                return Err(CliError::Config(
                    "montecarlo.snr must be a nonempty list of positive levels".into(),
                ));
            }
            if mc.grid_points < 2 {
                return Err(CliError::Config(
                    "montecarlo.grid_points must be >= 2".into(),
                ));
            }
        }
        if !(self.benchmark.perturb_variance >= 0.0) || !self.benchmark.perturb_variance.is_finite()
        {
            return Err(CliError::Config(
                "benchmark.perturb_variance must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn system_config(&self) -> Result<SystemConfig<f64>, CliError> {
        let s = &self.system;
        let cfg = SystemConfig {
            n_tx: s.n_tx,
            n_rx: s.n_rx,
            n_user: s.n_user,
            symbols: s.symbols,
            power_w: s.power,
            noise_comm_w: s.noise_comm,
            noise_sense_w: s.noise_sense,
            spacing_over_lambda: s.spacing_over_lambda,
            bs_height_m: s.bs_height_m,
            target_range_m: s.target_range_m,
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn prior_model(&self) -> Result<GaussianMixture<f64>, CliError> {
        let p = &self.prior;
        GaussianMixture::from_parts(&p.weights, &p.means, &p.variances).map_err(config_err)
    }

    pub fn environment(&self) -> Result<TargetEnvironment<f64>, CliError> {
        self.environment_at(self.env.snr)
    }

    /// Environment at another normalised SNR, same noise and power.
    pub fn environment_at(&self, snr: f64) -> Result<TargetEnvironment<f64>, CliError> {
        TargetEnvironment::from_normalized_snr(snr, &self.system_config()?).map_err(config_err)
    }

    pub fn geometry(&self) -> UserGeometry<f64> {
        let c = &self.channel;
        UserGeometry {
            rician_k: c.rician_k,
            ref_loss: c.ref_loss,
            exponent: c.exponent,
            user_range_m: c.user_range_m,
            user_height_m: c.user_height_m,
            user_angle: c.user_angle,
        }
    }
}

fn config_err(e: isac_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// The default scenario shipped in `configs/default.toml`.
pub fn default_scenario() -> ExperimentConfig {
    ExperimentConfig {
        rate_target: 6.5,
        system: SystemSection {
            n_tx: 10,
            n_rx: 12,
            n_user: 8,
            symbols: 25,
            power: dbm_to_watts(30.0),
            noise_comm: dbm_to_watts(-90.0),
            noise_sense: dbm_to_watts(-90.0),
            spacing_over_lambda: 0.5,
            bs_height_m: 10.0,
            target_range_m: 50.0,
        },
        prior: PriorSection {
            weights: vec![0.31, 0.24, 0.28, 0.17],
            means: vec![-0.74, -0.54, 0.75, 0.95],
            variances: vec![
                db_to_linear(-25.0),
                db_to_linear(-20.0),
                db_to_linear(-20.0),
                db_to_linear(-25.0),
            ],
        },
        channel: ChannelSection {
            rician_k: db_to_linear(-8.0),
            ref_loss: db_to_linear(-30.0),
            exponent: 3.5,
            user_range_m: 400.0,
            user_height_m: 1.0,
            user_angle: 0.36,
            seed: 7,
        },
        env: EnvSection {
            snr: db_to_linear(-5.0),
        },
        sweep: Some(SweepSection {
            variable: "rate_target".into(),
            values: None,
            start: Some(5.0),
            stop: Some(7.2),
            step: Some(0.2),
        }),
        montecarlo: Some(MonteCarloSection {
            trials: 500,
            seed: 1,
            estimator: Estimator::Map,
            snr: [-10.0, -5.0, 0.0, 5.0, 10.0].map(db_to_linear).to_vec(),
            grid_points: default_grid_points(),
            benchmarks: true,
        }),
        benchmark: BenchmarkSection::default(),
        output: OutputSection::default(),
    }
}
