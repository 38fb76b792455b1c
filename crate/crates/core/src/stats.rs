//! Distribution samplers and moment estimators.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::sim::{CounterRng, RunResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Exponential { rate: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Gamma { alpha: f64, theta: f64 },
}

impl Distribution {
    fn validate(&self) -> Result<(), StatsError> {
        let ok = match *self {
            Distribution::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Distribution::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            Distribution::Gamma { alpha, theta } => {
                alpha > 0.0 && theta > 0.0 && alpha.is_finite() && theta.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(StatsError::InvalidParameter(format!("{self:?}")))
        }
    }

    /// Population skewness.
    pub fn analytic_skewness(&self) -> f64 {
        match *self {
            Distribution::Exponential { .. } => 2.0,
            Distribution::LogNormal { sigma, .. } => {
                let s2 = (sigma * sigma).exp();
                (s2 + 2.0) * (s2 - 1.0).sqrt()
            }
            Distribution::Gamma { alpha, .. } => 2.0 / alpha.sqrt(),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Distribution::Exponential { rate } => format!("Exponential(rate={rate})"),
            Distribution::LogNormal { mu, sigma } => format!("LogNormal(mu={mu}, sigma={sigma})"),
            Distribution::Gamma { alpha, theta } => format!("Gamma(alpha={alpha}, theta={theta})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("variable '{0}' missing from run")]
    MissingVariable(String),
}

fn exponential(rng: &mut CounterRng) -> f64 {
    -rng.next_open_unit().ln()
}

/// Marsaglia–Tsang squeeze/rejection for shape >= 1; shapes below one use
/// the boost `G(a) = G(a + 1) * U^(1/a)`.
fn gamma_rejection(alpha: f64, rng: &mut CounterRng) -> f64 {
    if alpha < 1.0 {
        let u = rng.next_open_unit();
        return gamma_rejection(alpha + 1.0, rng) * u.powf(1.0 / alpha);
    }
    let d = alpha - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = rng.next_standard_normal();
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.next_open_unit();
        if u < 1.0 - 0.0331 * z.powi(4) || u.ln() < 0.5 * z * z + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Draw `n` values. Exponential uses the inverse CDF, lognormal the
/// exponential of a normal deviate, gamma a sum of exponentials for integer
/// shape and Marsaglia–Tsang rejection otherwise. Deterministic in `seed`.
pub fn sample(dist: Distribution, n: usize, seed: u64) -> Result<Vec<f64>, StatsError> {
    dist.validate()?;
    if n == 0 {
        return Err(StatsError::InsufficientData { needed: 1, got: 0 });
    }
    let mut rng = CounterRng::new(seed, 0x5A4D_504C);
    let draw = |rng: &mut CounterRng| match dist {
        Distribution::Exponential { rate } => exponential(rng) / rate,
        Distribution::LogNormal { mu, sigma } => (mu + sigma * rng.next_standard_normal()).exp(),
        Distribution::Gamma { alpha, theta } => {
            if alpha.fract() == 0.0 && alpha <= 64.0 {
                (0..alpha as usize).map(|_| exponential(rng)).sum::<f64>() * theta
            } else {
                gamma_rejection(alpha, rng) * theta
            }
        }
    };
    Ok((0..n).map(|_| draw(&mut rng)).collect())
}

fn mean<S: Scalar>(xs: &[S]) -> S {
    xs.iter().fold(S::zero(), |a, &x| a + x) / S::lit(xs.len() as f64)
}

/// Adjusted Fisher–Pearson skewness `G1 = g1 * sqrt(n(n-1)) / (n-2)` with
/// `g1 = m3 / m2^(3/2)` from biased central moments (two-pass).
pub fn skewness<S: Scalar>(xs: &[S]) -> Result<S, StatsError> {
    let n = xs.len();
    if n < 3 {
        return Err(StatsError::InsufficientData { needed: 3, got: n });
    }
    let m = mean(xs);
    let (mut m2, mut m3) = (S::zero(), S::zero());
    for &x in xs {
        let d = x - m;
        m2 = m2 + d * d;
        m3 = m3 + d * d * d;
    }
    let nf = S::lit(n as f64);
    m2 = m2 / nf;
    m3 = m3 / nf;
    if m2 == S::zero() {
        return Err(StatsError::ZeroVariance);
    }
    let g1 = m3 / (m2 * m2.sqrt());
    let adj = (nf * (nf - S::one())).sqrt() / (nf - S::lit(2.0));
    Ok(g1 * adj)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub sd: f64,
    /// `None` when n < 3 or the sample is constant.
    pub skewness: Option<f64>,
}

pub fn summarize_values(xs: &[f64]) -> Result<SampleSummary, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::InsufficientData { needed: 1, got: 0 });
    }
    let n = xs.len();
    let m = mean(xs);
    let sd = if n > 1 { (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    Ok(SampleSummary { n, mean: m, sd, skewness: skewness(xs).ok() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reducer {
    TimeMean,
    FinalValue,
}

impl Reducer {
    pub fn reduce<S: Scalar>(self, series: &[S]) -> f64 {
        match self {
            Reducer::TimeMean => mean(series).as_f64(),
            Reducer::FinalValue => series.last().map_or(f64::NAN, |v| v.as_f64()),
        }
    }
}

/// Reduce each run's `variable` series to one scalar, then summarize across runs.
pub fn summarize<S: Scalar>(
    ensemble: &[RunResult<S>],
    variable: &str,
    reducer: Reducer,
) -> Result<SampleSummary, StatsError> {
    let values = ensemble
        .iter()
        .map(|r| {
            r.series(variable)
                .map(|s| reducer.reduce(s))
                .ok_or_else(|| StatsError::MissingVariable(variable.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    summarize_values(&values)
}
