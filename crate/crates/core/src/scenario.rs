//! Simulated regression problems with known `f` and error distribution.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream_for, Stream};
use crate::summary::ExactDensity;

pub const GAMMA_SHAPE: f64 = 0.3;
pub const GAMMA_SCALE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    T20,
    T3,
    LogGamma,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::T20, ScenarioKind::T3, ScenarioKind::LogGamma];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::T20 => "t20",
            ScenarioKind::T3 => "t3",
            ScenarioKind::LogGamma => "loggamma",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t20" => Ok(ScenarioKind::T20),
            "t3" => Ok(ScenarioKind::T3),
            "loggamma" => Ok(ScenarioKind::LogGamma),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario `{}` (expected t20, t3 or loggamma)",
                other
            ))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n: usize,
    pub seed: u64,
}

/// Density of the simulated errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueErrorDensity {
    StudentT { df: f64 },
    /// `e = shift - g` with `g ~ Gamma(shape, scale)`.
    NegatedGamma { shape: f64, scale: f64, shift: f64 },
}

impl ExactDensity for TrueErrorDensity {
    fn pdf(&self, x: f64) -> f64 {
        match *self {
            TrueErrorDensity::StudentT { df } => crate::dist::ln_student_t_pdf(x, df, 0.0, 1.0).exp(),
            TrueErrorDensity::NegatedGamma { shape, scale, shift } => {
                let g = shift - x;
                if g <= 0.0 {
                    0.0
                } else {
                    gamma(shape, scale).pdf(g)
                }
            }
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match *self {
            TrueErrorDensity::StudentT { df } => statrs::distribution::StudentsT::new(0.0, 1.0, df)
                .expect("positive df")
                .cdf(x),
            TrueErrorDensity::NegatedGamma { shape, scale, shift } => {
                let g = shift - x;
                if g <= 0.0 {
                    1.0
                } else {
                    gamma(shape, scale).sf(g)
                }
            }
        }
    }
}

fn gamma(shape: f64, scale: f64) -> statrs::distribution::Gamma {
    statrs::distribution::Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters")
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub scenario: Scenario,
    pub data: Dataset,
    /// `f(x_i)` on the original scale.
    pub f_true: Vec<f64>,
    pub errors: Vec<f64>,
    pub truth: TrueErrorDensity,
}

pub fn true_f(x: f64) -> f64 {
    10.0 * x * x * x
}

/// `x ~ U(-1, 1)`, `y = 10 x^3 + e` with errors per scenario. The log-gamma
/// errors are gamma draws, negated and then demeaned by their sample mean.
pub fn simulate(scenario: Scenario) -> Result<SimulatedData> {
    if scenario.n < 2 {
        return Err(Error::InvalidArgument("a scenario needs at least 2 observations".into()));
    }
    let mut rng = stream_for(scenario.seed, Stream::Scenario);
    let n = scenario.n;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (errors, truth) = match scenario.kind {
        ScenarioKind::T20 | ScenarioKind::T3 => {
            let df = if scenario.kind == ScenarioKind::T20 { 20.0 } else { 3.0 };
            let t = StudentT::new(df).expect("positive df");
            ((0..n).map(|_| t.sample(&mut rng)).collect(), TrueErrorDensity::StudentT { df })
        }
        ScenarioKind::LogGamma => {
            let g = Gamma::new(GAMMA_SHAPE, GAMMA_SCALE).expect("positive gamma parameters");
            let mut e: Vec<f64> = (0..n).map(|_| -g.sample(&mut rng)).collect();
            let mean = e.iter().sum::<f64>() / n as f64;
            for v in e.iter_mut() {
                *v -= mean;
            }
            (
                e,
                TrueErrorDensity::NegatedGamma {
                    shape: GAMMA_SHAPE,
                    scale: GAMMA_SCALE,
                    shift: -mean,
                },
            )
        }
    };
    let f_true: Vec<f64> = x.iter().map(|&v| true_f(v)).collect();
    let y: Vec<f64> = f_true.iter().zip(&errors).map(|(f, e)| f + e).collect();
    let data = Dataset::new(x.iter().map(|&v| vec![v]).collect(), y)?;
    Ok(SimulatedData {
        scenario,
        data,
        f_true,
        errors,
        truth,
    })
}
