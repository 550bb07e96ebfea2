use crate::error::{BenchError, Result};

/// Linear-interpolation quantile: sort, then interpolate at `h = p (n - 1)`.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(BenchError::Config("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(BenchError::Config(format!("quantile level {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}
