use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, Median, Statistics};

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.mean()
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        Data::new(values.to_vec()).median()
    }
}

/// Half-width of the two-sided 95% Student-t interval around the mean.
/// `None` with fewer than two samples.
pub(crate) fn t_half_width_95(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let sd = values.std_dev();
    if sd == 0.0 {
        return Some(0.0);
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?.inverse_cdf(0.975);
    Some(t * sd / (n as f64).sqrt())
}
