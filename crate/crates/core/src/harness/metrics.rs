use serde::{Deserialize, Serialize};

use crate::alignment::PersonalityVector;
use crate::error::{Error, Result};

/// Accuracy (%) and MSE per trait, in `[O, C, E, A, N]` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: [f64; 5],
    pub average_accuracy: f64,
    pub mse: [f64; 5],
    pub samples: usize,
    /// Standard deviation of per-trait accuracy across seeds, for aggregated
    /// reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_std: Option<[f64; 5]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_std: Option<f64>,
}

/// Per-trait accuracy `100 · (1 − mean |ŷ − y|)` and its mean over traits.
pub fn accuracy(preds: &[PersonalityVector], labels: &[PersonalityVector]) -> Result<MetricReport> {
    if preds.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let n = preds.len() as f64;
    let mut abs = [0.0; 5];
    let mut sq = [0.0; 5];
    for (p, y) in preds.iter().zip(labels) {
        for k in 0..5 {
            let e = p.scores()[k] - y.scores()[k];
            abs[k] += 1.0 - e.abs();
            sq[k] += e * e;
        }
    }
    let acc = abs.map(|a| a / n * 100.0);
    Ok(MetricReport {
        accuracy: acc,
        average_accuracy: acc.iter().sum::<f64>() / 5.0,
        mse: sq.map(|s| s / n),
        samples: preds.len(),
        accuracy_std: None,
        average_std: None,
    })
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl MetricReport {
    /// Mean of several reports (e.g. one per seed) with sample standard
    /// deviations of the accuracies.
    pub fn mean_of(reports: &[MetricReport]) -> Result<MetricReport> {
        if reports.is_empty() {
            return Err(Error::InvalidArgument("no reports to aggregate".into()));
        }
        let mut accuracy = [0.0; 5];
        let mut std = [0.0; 5];
        let mut mse = [0.0; 5];
        for k in 0..5 {
            (accuracy[k], std[k]) = mean_std(reports.iter().map(|r| r.accuracy[k]));
            mse[k] = mean_std(reports.iter().map(|r| r.mse[k])).0;
        }
        let (_, average_std) = mean_std(reports.iter().map(|r| r.average_accuracy));
        Ok(MetricReport {
            accuracy,
            average_accuracy: accuracy.iter().sum::<f64>() / 5.0,
            mse,
            samples: reports.iter().map(|r| r.samples).sum(),
            accuracy_std: Some(std),
            average_std: Some(average_std),
        })
    }

    /// Accuracies within `[0, 100]` and the average consistent with them.
    pub fn validate(&self) -> Result<()> {
        if self.accuracy.iter().any(|a| !(0.0..=100.0).contains(a)) {
            return Err(Error::Validation(format!(
                "accuracy outside [0, 100]: {:?}",
                self.accuracy
            )));
        }
        let mean = self.accuracy.iter().sum::<f64>() / 5.0;
        if (mean - self.average_accuracy).abs() > 1e-9 {
            return Err(Error::Validation("average accuracy is not the trait mean".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(x: [f64; 5]) -> PersonalityVector {
        PersonalityVector::new(x).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let ys = vec![pv([0.1, 0.2, 0.3, 0.4, 0.5]), pv([1.0, 0.0, 0.5, 0.5, 0.25])];
        let r = accuracy(&ys, &ys).unwrap();
        assert_eq!(r.accuracy, [100.0; 5]);
        assert_eq!(r.average_accuracy, 100.0);
        assert_eq!(r.mse, [0.0; 5]);
    }

    #[test]
    fn single_sample() {
        let r = accuracy(&[pv([0.3, 0.5, 0.5, 0.5, 0.5])], &[pv([0.5; 5])]).unwrap();
        assert!((r.accuracy[0] - 80.0).abs() < 1e-12);
        r.validate().unwrap();
    }

    #[test]
    fn length_mismatch() {
        assert!(accuracy(&[pv([0.5; 5])], &[]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn aggregation() {
        let a = accuracy(&[pv([0.3; 5])], &[pv([0.5; 5])]).unwrap();
        let b = accuracy(&[pv([0.5; 5])], &[pv([0.5; 5])]).unwrap();
        let m = MetricReport::mean_of(&[a, b]).unwrap();
        assert!((m.average_accuracy - 90.0).abs() < 1e-12);
        assert!((m.average_std.unwrap() - 200f64.sqrt()).abs() < 1e-9);
        assert_eq!(m.samples, 2);
        m.validate().unwrap();
    }
}
