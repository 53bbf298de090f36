//! MAE, R² and RMSE over every (sample, node) cell.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastMetrics {
    #[serde(rename = "MAE")]
    pub mae: f64,
    /// NaN (serialized as null) when the targets are constant.
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "RMSE")]
    pub rmse: f64,
    pub r2_defined: bool,
}

/// `R² = 1 - SS_res / SS_tot` with the mean taken over all cells.
pub fn evaluate(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<ForecastMetrics> {
    if pred.len() != target.len() || pred.iter().zip(target).any(|(p, t)| p.len() != t.len()) {
        return Err(Error::shape("predictions and targets differ in shape"));
    }
    let cells = target.iter().map(Vec::len).sum::<usize>();
    if cells == 0 {
        return Err(Error::data("no targets to score"));
    }
    let n = cells as f64;
    let mean = target.iter().flatten().sum::<f64>() / n;
    let (mut abs, mut sq, mut tot) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().flatten().zip(target.iter().flatten()) {
        abs += (p - t).abs();
        sq += (p - t).powi(2);
        tot += (t - mean).powi(2);
    }
    let r2_defined = tot > 0.0;
    Ok(ForecastMetrics { mae: abs / n, r2: if r2_defined { 1.0 - sq / tot } else { f64::NAN }, rmse: (sq / n).sqrt(), r2_defined })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect() {
        let y = vec![vec![1.0, 2.0], vec![3.0, 5.0]];
        let m = evaluate(&y, &y).unwrap();
        assert_eq!((m.mae, m.r2, m.rmse), (0.0, 1.0, 0.0));
    }

    #[test]
    fn hand_example() {
        let m = evaluate(&[vec![1.0], vec![3.0]], &[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(m.mae, 0.5);
        assert!((m.rmse - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.r2, -1.0);
    }

    #[test]
    fn mean_prediction_scores_zero() {
        let t = vec![vec![1.0, 4.0], vec![2.0, 9.0]];
        let p = vec![vec![4.0, 4.0], vec![4.0, 4.0]];
        assert_eq!(evaluate(&p, &t).unwrap().r2, 0.0);
    }

    #[test]
    fn constant_targets_flagged() {
        let m = evaluate(&[vec![1.0], vec![2.0]], &[vec![3.0], vec![3.0]]).unwrap();
        assert!(m.r2.is_nan() && !m.r2_defined);
        assert_eq!(serde_json::to_value(m).unwrap()["R2"], serde_json::Value::Null);
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(evaluate(&[vec![1.0]], &[vec![1.0, 2.0]]), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn matches_brute_force(cells in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..60), width in 1usize..4) {
            let rows = cells.len() / width;
            prop_assume!(rows >= 1);
            let pred: Vec<Vec<f64>> = (0..rows).map(|r| (0..width).map(|c| cells[r * width + c].0).collect()).collect();
            let target: Vec<Vec<f64>> = (0..rows).map(|r| (0..width).map(|c| cells[r * width + c].1).collect()).collect();
            let m = evaluate(&pred, &target).unwrap();
            let p: Vec<f64> = pred.concat();
            let t: Vec<f64> = target.concat();
            let k = t.len() as f64;
            let mae = p.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum::<f64>() / k;
            let mse = p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / k;
            let mean = t.iter().sum::<f64>() / k;
            let sst = t.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>();
            let sse = mse * k;
            prop_assert!((m.mae - mae).abs() <= 1e-12 * mae.max(1.0));
            prop_assert!((m.rmse - mse.sqrt()).abs() <= 1e-12 * mse.sqrt().max(1.0));
            if sst > 1e-9 {
                prop_assert!((m.r2 - (1.0 - sse / sst)).abs() <= 1e-12 * (sse / sst).max(1.0));
            }
        }
    }
}
