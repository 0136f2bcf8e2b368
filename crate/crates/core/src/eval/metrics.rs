use crate::error::{Error, Result};

fn check(est: &[f64], truth: &[f64]) -> Result<()> {
    if est.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            op: "metric",
            lhs: vec![est.len()],
            rhs: vec![truth.len()],
        });
    }
    if est.is_empty() {
        return Err(Error::InsufficientData("metric of empty vectors".into()));
    }
    Ok(())
}

/// Root mean square error.
pub fn rmse(est: &[f64], truth: &[f64]) -> Result<f64> {
    check(est, truth)?;
    let ss: f64 = est.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / est.len() as f64).sqrt())
}

/// `||est - truth|| / ||truth||` in percent.
pub fn re(est: &[f64], truth: &[f64]) -> Result<f64> {
    check(est, truth)?;
    let num: f64 = est.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = truth.iter().map(|b| b * b).sum();
    if den == 0.0 {
        return Err(Error::InvalidArgument("relative error of an all-zero truth vector".into()));
    }
    Ok((num / den).sqrt() * 100.0)
}
