//! Central finite-difference gradient checking.

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Coordinate where the worst error occurred.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Central-difference gradient of `f` at `x`.
pub fn numerical_gradient<F>(f: F, x: &[f64], epsilon: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    ensure!(epsilon > 0.0 && epsilon.is_finite(), Error::InvalidArgument("epsilon must be positive".into()));
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let plus = f(&probe)?;
        probe[i] = orig - epsilon;
        let minus = f(&probe)?;
        probe[i] = orig;
        ensure!(
            plus.is_finite() && minus.is_finite(),
            Error::NonFinite(format!("loss at perturbed coordinate {i}"))
        );
        grad.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(grad)
}

/// Compare the analytic gradient returned by `f` against central
/// differences. Relative error per coordinate uses the denominator
/// `max(|analytic|, |numeric|, epsilon)`.
pub fn finite_difference_check<F>(f: F, x: &[f64], epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    ensure!(x.iter().all(|v| v.is_finite()), Error::NonFinite("gradient check input".into()));
    let (value, analytic) = f(x)?;
    ensure!(value.is_finite(), Error::NonFinite("loss at the check point".into()));
    ensure!(
        analytic.len() == x.len(),
        Error::Shape(format!("{} gradient entries for {} inputs", analytic.len(), x.len()))
    );
    let numeric = numerical_gradient(|p| f(p).map(|(v, _)| v), x, epsilon)?;
    let mut worst = (0.0, 0);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let denom = a.abs().max(n.abs()).max(epsilon);
        let err = (a - n).abs() / denom;
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(GradCheckReport { max_relative_error: worst.0, worst_index: worst.1, analytic, numeric })
}
