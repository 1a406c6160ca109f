//! Order-independent summary statistics.
//!
//! Values are sorted before summation so that the result does not depend on
//! the order replications finished in.

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    sorted(values).iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return if n == 1 { 0.0 } else { f64::NAN };
    }
    let m = mean(values);
    let dev: Vec<f64> = values.iter().map(|x| (x - m) * (x - m)).collect();
    (sorted(&dev).iter().sum::<f64>() / (n - 1) as f64).sqrt()
}

pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let logs: Vec<f64> = values.iter().map(|x| x.ln()).collect();
    mean(&logs).exp()
}
