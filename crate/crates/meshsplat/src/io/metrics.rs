//! Quality metrics and the per-iteration CSV log written during training.

use crate::error::{Error, Result};
use crate::loss::LossBreakdown;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Peak signal-to-noise ratio in dB between two same-length linear images.
/// Identical images give infinity.
pub fn psnr(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "image sizes differ");
    assert!(!a.is_empty(), "empty images");
    let mse: f64 =
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Appends one CSV row per training iteration.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub const HEADER: &'static str =
        "iter,loss_image,loss_normal,loss_scale,loss_projection,loss_total";

    pub fn create(path: &Path) -> Result<MetricsWriter> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", Self::HEADER).map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter { out })
    }

    pub fn append(&mut self, iter: usize, loss: &LossBreakdown) -> std::io::Result<()> {
        writeln!(
            self.out,
            "{iter},{},{},{},{},{}",
            loss.image, loss.normal, loss.scale, loss.projection, loss.total
        )
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}
