use super::volume::Volume;
use crate::error::{Error, Result};

impl Volume {
    /// Z-score normalization over the nonzero voxels.
    ///
    /// Zero-valued voxels are treated as empty reconstruction fill: they are
    /// excluded from the statistics and stay 0 in the output. Uses the
    /// population standard deviation.
    pub fn znormalize(&self) -> Result<Volume> {
        let (n, sum) = self
            .data()
            .iter()
            .filter(|&&v| v != 0.0)
            .fold((0usize, 0.0f64), |(n, s), &v| (n + 1, s + v));
        if n == 0 {
            return Err(Error::Normalization("volume has no nonzero voxels".into()));
        }
        let mean = sum / n as f64;
        let var = self
            .data()
            .iter()
            .filter(|&&v| v != 0.0)
            .map(|&v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::Normalization(
                "nonzero voxels have zero variance".into(),
            ));
        }
        let data = self
            .data()
            .iter()
            .map(|&v| if v == 0.0 { 0.0 } else { (v - mean) / std })
            .collect();
        Volume::new(self.grid().clone(), data)
    }
}
