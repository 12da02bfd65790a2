//! Least-squares rate extraction on `log y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 8;

/// Abscissa of the log-linear fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Abscissa {
    /// `log y ~ slope * t`: exponential rates.
    T,
    /// `log y ~ slope * e^t`: super-exponential rates.
    ExpT,
}

impl Abscissa {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Abscissa::T => t,
            Abscissa::ExpT => t.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub quantity: String,
    pub mode: Abscissa,
    pub slope: f64,
    /// Standard error of the slope.
    pub slope_error: f64,
    pub intercept: f64,
    /// `max |fit - y| / y` over the window.
    pub max_relative_residual: f64,
    pub window: (f64, f64),
    pub samples: Vec<(f64, f64)>,
}

/// Fits `log y = intercept + slope * x(t)` over `window` (default: the last
/// half of the time range).
pub fn rate_fit(
    quantity: &str,
    samples: &[(f64, f64)],
    mode: Abscissa,
    window: Option<(f64, f64)>,
) -> Result<RateReport> {
    let window = match window {
        Some(w) => w,
        None => {
            let t0 = samples.first().map_or(0.0, |s| s.0);
            let t1 = samples.last().map_or(0.0, |s| s.0);
            (0.5 * (t0 + t1), t1)
        }
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (index, &(t, y)) in samples.iter().enumerate() {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::NonPositiveSample { index, value: y });
        }
        xs.push(mode.eval(t));
        ys.push(y.ln());
    }
    if xs.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: 1,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut sse = 0.0;
    let mut max_rel: f64 = 0.0;
    for (x, ly) in xs.iter().zip(&ys) {
        let r = ly - (intercept + slope * x);
        sse += r * r;
        max_rel = max_rel.max((r.exp() - 1.0).abs() / r.exp());
    }
    let slope_error = if xs.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateReport {
        quantity: quantity.to_string(),
        mode,
        slope,
        slope_error,
        intercept,
        max_relative_residual: max_rel,
        window,
        samples: samples.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn series(f: impl Fn(f64) -> f64, t1: f64, n: usize) -> Vec<(f64, f64)> {
        (0..=n).map(|i| t1 * i as f64 / n as f64).map(|t| (t, f(t))).collect()
    }

    #[test]
    fn exponential_rates() {
        let r = rate_fit("y", &series(|t| (-t).exp(), 10.0, 100), Abscissa::T, None).unwrap();
        assert!((r.slope + 1.0).abs() < 1e-12);
        assert!(r.max_relative_residual < 1e-12);
        let r = rate_fit("y", &series(|t| 3.0 * (-t / 2.0).exp(), 10.0, 100), Abscissa::T, None).unwrap();
        assert!((r.slope + 0.5).abs() < 1e-12);
        assert!((r.intercept - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn super_exponential_rate() {
        let b0 = 1.5;
        let s = series(|t| 0.2 * (-PI * PI * (t.exp() - 1.0) / b0).exp(), 2.0, 200);
        let r = rate_fit("mode", &s, Abscissa::ExpT, Some((0.0, 2.0))).unwrap();
        assert!((r.slope + PI * PI / b0).abs() < 1e-6);
    }

    #[test]
    fn window_errors() {
        let mut s = series(|t| (-t).exp(), 10.0, 20);
        assert!(matches!(
            rate_fit("y", &s[..6], Abscissa::T, None),
            Err(Error::TooFewSamples { .. })
        ));
        s[18].1 = 0.0;
        assert!(matches!(
            rate_fit("y", &s, Abscissa::T, None),
            Err(Error::NonPositiveSample { index: 18, .. })
        ));
        // A bad sample outside the window is ignored.
        assert!(rate_fit("y", &s, Abscissa::T, Some((0.0, 8.0))).is_ok());
    }
}
