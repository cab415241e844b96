//! Exponential fits of correlation decay.

use serde::Serialize;

use crate::error::{ExpError, Result};

/// Bins with fewer samples are left out of fits.
pub const MIN_BIN_SAMPLES: usize = 30;
/// Bins with smaller means are left out of fits.
pub const NOISE_FLOOR: f64 = 1e-12;
/// Slopes above `−FLAT_SLOPE` count as no decay.
pub const FLAT_SLOPE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayPoint {
    pub distance: f64,
    pub mean: f64,
    pub std_err: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    /// Correlation length; `f64::INFINITY` when the fit is flat.
    #[serde(serialize_with = "finite_or_null")]
    pub xi: f64,
    /// Amplitude `c₁` of `c₁ e^{−d/ξ}`.
    pub c1: f64,
    pub slope: f64,
    /// Pearson correlation of `ln mean` against distance.
    pub r: f64,
    /// Distances used in the fit.
    pub points: Vec<f64>,
    /// No decay detected.
    pub flat: bool,
}

fn finite_or_null<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

impl DecayFit {
    /// `1/ξ`, zero when flat.
    pub fn inverse_xi(&self) -> f64 {
        if self.flat {
            0.0
        } else {
            1.0 / self.xi
        }
    }
}

/// Weighted least squares of `ln mean` on distance over the usable bins,
/// with weights `(mean/se)²` when every standard error is positive and
/// uniform weights otherwise.
pub fn fit_exponential(points: &[DecayPoint]) -> Result<DecayFit> {
    let used: Vec<&DecayPoint> = points
        .iter()
        .filter(|p| p.n_samples >= MIN_BIN_SAMPLES && p.mean > NOISE_FLOOR && p.mean.is_finite())
        .collect();
    if used.len() < 3 {
        return Err(ExpError::Fit(format!("{} usable bins, need 3", used.len())));
    }
    let xs: Vec<f64> = used.iter().map(|p| p.distance).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.mean.ln()).collect();
    let weighted = used.iter().all(|p| p.std_err > 0.0 && p.std_err.is_finite());
    let ws: Vec<f64> = used
        .iter()
        .map(|p| if weighted { (p.mean / p.std_err).powi(2) } else { 1.0 })
        .collect();
    let sw: f64 = ws.iter().sum();
    let mx = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = ws.iter().zip(xs.iter().zip(&ys)).map(|(w, (x, y))| w * (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(ExpError::Fit("all usable bins share one distance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let flat = slope > -FLAT_SLOPE;
    Ok(DecayFit {
        xi: if flat { f64::INFINITY } else { -1.0 / slope },
        c1: intercept.exp(),
        slope,
        r: pearson(&xs, &ys),
        points: xs,
        flat,
    })
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Ordinary least-squares line `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pts(mut f: impl FnMut(f64) -> f64) -> Vec<DecayPoint> {
        (1..=6)
            .map(|d| DecayPoint {
                distance: d as f64,
                mean: f(d as f64),
                std_err: 0.0,
                n_samples: 100,
            })
            .collect()
    }

    #[test]
    fn exact_exponential() {
        let fit = fit_exponential(&pts(|d| 0.7 * (-d / 2.0).exp())).unwrap();
        assert!((fit.xi - 2.0).abs() < 1e-9);
        assert!((fit.c1 - 0.7).abs() < 1e-9);
        assert!((fit.r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_points_are_flagged() {
        let fit = fit_exponential(&pts(|_| 0.3)).unwrap();
        assert!(fit.flat && fit.xi.is_infinite());
        assert_eq!(fit.inverse_xi(), 0.0);
    }

    #[test]
    fn noisy_exponential_recovers_length() {
        let mut rng = gibbscode::rng::substream(4, 0);
        let fit = fit_exponential(&pts(|d| (-d / 1.5).exp() * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))).unwrap();
        assert!((fit.xi - 1.5).abs() < 0.05 * 1.5);
    }

    #[test]
    fn floor_and_sample_filters() {
        let mut p = pts(|d| (-d).exp());
        p[0].n_samples = 5;
        p[1].mean = 1e-13;
        p[2].mean = 0.0;
        p[3].mean = 1e-14;
        assert!(fit_exponential(&p).is_err());
    }

    #[test]
    fn straight_line() {
        let (a, b) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }
}
