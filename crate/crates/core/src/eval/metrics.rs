use super::{EvalError, Result};

fn check_lengths(predicted: &[f64], truth: &[f64], min: usize) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(EvalError::Input(format!(
            "length mismatch: {} predictions, {} truth values",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.len() < min {
        return Err(EvalError::Input(format!("need at least {min} values, got {}", truth.len())));
    }
    if predicted.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(EvalError::Input("non-finite value".into()));
    }
    Ok(())
}

/// Coefficient of determination, `1 - SS_res / SS_tot`. Unbounded below.
pub fn r_squared(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(predicted, truth, 2)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::Metric("truth vector is constant".into()));
    }
    let ss_res: f64 = predicted.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mean_absolute_error(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(predicted, truth, 1)?;
    Ok(predicted.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / truth.len() as f64)
}

/// Kendall's tau-a between two orderings of the same items.
pub fn kendall_tau<T: PartialEq + std::fmt::Debug>(order_a: &[T], order_b: &[T]) -> Result<f64> {
    let n = order_a.len();
    if n != order_b.len() || n < 2 {
        return Err(EvalError::Input("orderings must have equal length of at least 2".into()));
    }
    let pos_b: Vec<usize> = order_a
        .iter()
        .map(|x| {
            order_b
                .iter()
                .position(|y| y == x)
                .ok_or_else(|| EvalError::Input(format!("{x:?} missing from second ordering")))
        })
        .collect::<Result<_>>()?;
    let mut seen = pos_b.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != n {
        return Err(EvalError::Input("orderings are not permutations of each other".into()));
    }
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += if pos_b[i] < pos_b[j] { 1 } else { -1 };
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}
