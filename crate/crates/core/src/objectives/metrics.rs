use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ssim::{ssim_value, SsimParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Decibels; `+inf` when the images are identical.
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
}

pub fn mse(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().max(1) as f64;
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}

/// `10·log₁₀(R²/mse)`, infinite for `mse = 0`.
pub fn psnr_from_mse(mse: f64, range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (range * range / mse).log10()
    }
}

/// PSNR, SSIM and RMSE of `x` against reference `y`, both shaped `[.., H, W]`.
pub fn evaluate_metrics(x: &Tensor<f64>, y: &Tensor<f64>, p: &SsimParams) -> Result<Metrics> {
    if x.shape() != y.shape() {
        return Err(Error::shape(
            "evaluate_metrics",
            format!("{:?} vs {:?}", x.shape(), y.shape()),
        ));
    }
    let m = mse(x.data(), y.data());
    Ok(Metrics {
        psnr: psnr_from_mse(m, p.range),
        ssim: ssim_value(x, y, p)?,
        rmse: m.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub sample_id: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

pub const METRICS_HEADER: &str = "sample_id,psnr,ssim,rmse";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.sample_id, r.metrics.psnr, r.metrics.ssim, r.metrics.rmse
        ));
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(metrics_csv(rows).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation. Infinite entries give an infinite
    /// mean with zero spread when all are infinite.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        if values.iter().all(|v| v.is_infinite() && *v > 0.0) {
            return Self { mean: f64::INFINITY, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}±{:.3}", self.mean, self.std)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub psnr: MeanStd,
    pub ssim: MeanStd,
    pub rmse: MeanStd,
}

impl MetricSummary {
    pub fn of(rows: &[MetricRow]) -> Self {
        let col = |f: fn(&Metrics) -> f64| rows.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>();
        Self {
            psnr: MeanStd::of(&col(|m| m.psnr)),
            ssim: MeanStd::of(&col(|m| m.ssim)),
            rmse: MeanStd::of(&col(|m| m.rmse)),
        }
    }

    /// Two-line table: header and one `mean±std` row labelled `method`.
    pub fn table(&self, method: &str) -> String {
        format!(
            "method\tPSNR\tSSIM\tRMSE\n{method}\t{}\t{}\t{}\n",
            self.psnr, self.ssim, self.rmse
        )
    }
}
