//! Training losses and image-quality metrics.

mod losses;
mod metrics;
mod ssim;

pub use losses::{
    adversarial_loss, critic_loss, generator_total_loss, gradient_penalty,
    gradient_penalty_with_alpha, interpolate, mse_loss, sample_alpha, LossWeights,
};
pub use metrics::{
    evaluate_metrics, metrics_csv, mse, psnr_from_mse, write_metrics_csv, MeanStd, MetricRow,
    MetricSummary, Metrics, METRICS_HEADER,
};
pub use ssim::{ssim, ssim_loss, ssim_map, ssim_per_sample, ssim_value, SsimParams, WindowKind};
