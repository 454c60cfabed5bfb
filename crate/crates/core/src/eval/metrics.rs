/// Mean absolute error between ground-truth and predicted counts.
/// Returns `None` for empty input or mismatched lengths.
pub fn mae(gt: &[f64], pred: &[f64]) -> Option<f64> {
    if gt.is_empty() || gt.len() != pred.len() {
        return None;
    }
    let sum: f64 = gt.iter().zip(pred).map(|(c, p)| (c - p).abs()).sum();
    Some(sum / gt.len() as f64)
}

/// Root mean squared error between ground-truth and predicted counts.
pub fn rmse(gt: &[f64], pred: &[f64]) -> Option<f64> {
    if gt.is_empty() || gt.len() != pred.len() {
        return None;
    }
    let sum: f64 = gt.iter().zip(pred).map(|(c, p)| (c - p) * (c - p)).sum();
    Some((sum / gt.len() as f64).sqrt())
}
