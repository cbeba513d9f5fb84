//! How closely a regression model tracks the clean low-frequency function,
//! and how much high-frequency content its predictions carry.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use contkd_core::data::NoisySineParams;
use contkd_core::{Dataset, Network, Tensor};

use crate::error::{AppError, Result};
use crate::metrics::{csv_err, writer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    pub mse_to_clean: f64,
    pub highfreq_energy: f64,
}

/// Prediction, clean and noisy values on the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTrace {
    pub x: Vec<f64>,
    pub prediction: Vec<f64>,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
}

/// `n` cell midpoints of `[lo, hi]`.
pub fn midpoint_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(|j| lo + (j as f64 + 0.5) * h).collect()
}

/// Energy `Σ|X_k|² / N²` of the DFT bins whose angular frequency over a
/// window of length `span` exceeds `cutoff`.
pub fn highfreq_energy(samples: &[f64], span: f64, cutoff: f64) -> f64 {
    let n = samples.len();
    if n == 0 {
        return 0.0;
    }
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let norm = (n * n) as f64;
    buf.iter()
        .enumerate()
        .filter(|(k, _)| {
            let bin = (*k).min(n - k) as f64;
            std::f64::consts::TAU * bin / span > cutoff
        })
        .map(|(_, c)| c.norm_sqr() / norm)
        .sum()
}

fn sine_params(ds: &Dataset) -> Result<NoisySineParams> {
    if ds.clean_targets().is_none() {
        return Err(AppError::Config(
            "smoothness report needs a dataset with clean targets".into(),
        ));
    }
    NoisySineParams::from_meta(ds.meta()).ok_or_else(|| {
        AppError::Config("dataset metadata does not describe a noisy-sine generator".into())
    })
}

/// Evaluates `model` on a midpoint grid over the generator's x range.
pub fn trace(model: &Network, ds: &Dataset, grid_size: usize) -> Result<GridTrace> {
    let p = sine_params(ds)?;
    if grid_size < 2 {
        return Err(AppError::Config("grid_size must be at least 2".into()));
    }
    if model.in_dim() != 1 || model.out_dim() != 1 {
        return Err(AppError::Config(format!(
            "smoothness report needs a 1 -> 1 regression model, got {} -> {}",
            model.in_dim(),
            model.out_dim()
        )));
    }
    let x = midpoint_grid(p.lo, p.hi, grid_size);
    let pred = model.predict(&Tensor::matrix(grid_size, 1, x.clone())?)?;
    Ok(GridTrace {
        prediction: pred.data().to_vec(),
        clean: x.iter().map(|&v| p.clean(v)).collect(),
        noisy: x.iter().map(|&v| p.noisy(v)).collect(),
        x,
    })
}

pub fn score(t: &GridTrace, ds: &Dataset) -> Result<Smoothness> {
    let p = sine_params(ds)?;
    let n = t.x.len() as f64;
    let mse = t
        .prediction
        .iter()
        .zip(&t.clean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    Ok(Smoothness {
        mse_to_clean: mse,
        highfreq_energy: highfreq_energy(&t.prediction, p.hi - p.lo, 4.0 * p.base_freq),
    })
}

pub fn write_trace(path: &Path, t: &GridTrace) -> Result<()> {
    let mut w = writer(Vec::new());
    w.write_record(["x", "prediction", "clean", "noisy"])
        .map_err(|e| csv_err(path, e))?;
    for i in 0..t.x.len() {
        w.write_record([
            t.x[i].to_string(),
            t.prediction[i].to_string(),
            t.clean[i].to_string(),
            t.noisy[i].to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::io(path, e.into_error()))?;
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

/// Scores `model` and, when `plot_path` is given, writes the grid trace there.
pub fn smoothness_report(
    model: &Network,
    ds: &Dataset,
    grid_size: usize,
    plot_path: Option<&Path>,
) -> Result<Smoothness> {
    let t = trace(model, ds, grid_size)?;
    if let Some(path) = plot_path {
        write_trace(path, &t)?;
    }
    score(&t, ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_dft_energy(samples: &[f64], span: f64, cutoff: f64) -> f64 {
        let n = samples.len();
        let mut total = 0.0;
        for k in 0..n {
            let bin = k.min(n - k) as f64;
            if std::f64::consts::TAU * bin / span <= cutoff {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in samples.iter().enumerate() {
                let a = -std::f64::consts::TAU * (k * j) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            total += (re * re + im * im) / (n * n) as f64;
        }
        total
    }

    #[test]
    fn fft_energy_matches_direct_dft() {
        let xs = midpoint_grid(-3.0, 3.0, 96);
        let ys: Vec<f64> = xs.iter().map(|x| x.sin() + 0.3 * (7.0 * x).cos() + 0.01 * x).collect();
        let fast = highfreq_energy(&ys, 6.0, 4.0);
        let slow = brute_dft_energy(&ys, 6.0, 4.0);
        assert!((fast - slow).abs() < 1e-12 * slow.max(1.0), "{fast} vs {slow}");
    }

    #[test]
    fn pure_tone_energy_is_half_amplitude_squared() {
        let span = std::f64::consts::TAU;
        let xs = midpoint_grid(-std::f64::consts::PI, std::f64::consts::PI, 256);
        let noise: Vec<f64> = xs.iter().map(|x| 0.3 * (20.0 * x).sin()).collect();
        assert!((highfreq_energy(&noise, span, 4.0) - 0.045).abs() < 1e-12);
        let clean: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        assert!(highfreq_energy(&clean, span, 4.0) < 1e-20);
    }
}
