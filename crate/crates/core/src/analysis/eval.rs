use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::learners::{Samples, TrainedModel};

/// A ratio that may be undefined because its denominator is zero. Serialized
/// as a number, or as the string `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric(pub Option<f64>);

impl Metric {
    pub const UNDEFINED: Metric = Metric(None);

    pub fn ratio(num: usize, den: usize) -> Self {
        Metric((den > 0).then(|| num as f64 / den as f64))
    }

    pub fn value(self) -> Option<f64> {
        self.0
    }

    pub fn is_undefined(self) -> bool {
        self.0.is_none()
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("undefined"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct MetricVisitor;
        impl Visitor<'_> for MetricVisitor {
            type Value = Metric;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"undefined\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Metric, E> {
                Ok(Metric(Some(v)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Metric, E> {
                Ok(Metric(Some(v as f64)))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Metric, E> {
                Ok(Metric(Some(v as f64)))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Metric, E> {
                if v == "undefined" {
                    Ok(Metric(None))
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(MetricVisitor)
    }
}

/// Confusion counts for the positive ("top user") class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn precision(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; undefined if either is.
    pub fn f1(&self) -> Metric {
        match (self.precision().0, self.recall().0) {
            (Some(p), Some(r)) if p + r > 0.0 => Metric(Some(2.0 * p * r / (p + r))),
            (Some(_), Some(_)) => Metric(Some(0.0)),
            _ => Metric::UNDEFINED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
}

/// Minimum, mean and maximum of the per-fold accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub confusion: Confusion,
    /// Share of examples predicted positive.
    pub flagged_fraction: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<FoldReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_accuracy: Option<FoldSummary>,
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        let total = confusion.total();
        Self {
            accuracy: confusion.accuracy(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            f1: confusion.f1(),
            confusion,
            flagged_fraction: if total == 0 {
                0.0
            } else {
                (confusion.tp + confusion.fp) as f64 / total as f64
            },
            folds: Vec::new(),
            fold_accuracy: None,
        }
    }

    /// Pools fold confusions (micro-average) and records the fold spread.
    pub fn pooled(folds: Vec<FoldReport>) -> Self {
        let mut pooled = Confusion::default();
        for f in &folds {
            pooled.add(&f.confusion);
        }
        let mut report = Self::from_confusion(pooled);
        if !folds.is_empty() {
            let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
            report.fold_accuracy = Some(FoldSummary {
                min: accs.iter().copied().fold(f64::INFINITY, f64::min),
                mean: accs.iter().sum::<f64>() / accs.len() as f64,
                max: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
        report.folds = folds;
        report
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let c = &self.confusion;
        for (k, v) in [
            ("accuracy", self.accuracy.to_string()),
            ("precision", self.precision.to_string()),
            ("recall", self.recall.to_string()),
            ("f1", self.f1.to_string()),
            ("flagged_fraction", self.flagged_fraction.to_string()),
            ("tp", c.tp.to_string()),
            ("fp", c.fp.to_string()),
            ("fn", c.fn_.to_string()),
            ("tn", c.tn.to_string()),
        ] {
            out.push_str(&format!("{k},{v}\n"));
        }
        if let Some(s) = self.fold_accuracy {
            out.push_str(&format!("fold_accuracy_min,{}\nfold_accuracy_mean,{}\nfold_accuracy_max,{}\n", s.min, s.mean, s.max));
        }
        out
    }
}

pub fn predict_all(model: &TrainedModel, data: &Samples) -> Result<Vec<bool>, AnalysisError> {
    data.rows
        .iter()
        .map(|r| model.predict(r).map(|p| p.label).map_err(AnalysisError::from))
        .collect()
}

/// Scores `model` on `test`; pure, so repeated calls give identical reports.
pub fn evaluate(model: &TrainedModel, test: &Samples) -> Result<EvalReport, AnalysisError> {
    let predicted = predict_all(model, test)?;
    Ok(EvalReport::from_confusion(Confusion::from_predictions(&predicted, &test.labels)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_example() {
        let c = Confusion {
            tp: 2,
            fp: 1,
            fn_: 0,
            tn: 7,
        };
        let r = EvalReport::from_confusion(c);
        assert!((r.precision.value().unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.recall.value(), Some(1.0));
        assert!((r.f1.value().unwrap() - 0.8).abs() < 1e-12);
        assert!((r.accuracy - 0.9).abs() < 1e-12);
        assert!((r.flagged_fraction - 0.3).abs() < 1e-12);
    }

    #[test]
    fn naive_predictors_on_imbalanced_data() {
        let actual: Vec<bool> = (0..100).map(|i| i < 5).collect();
        let none = EvalReport::from_confusion(Confusion::from_predictions(&[false; 100], &actual));
        assert!((none.accuracy - 0.95).abs() < 1e-12);
        assert_eq!(none.recall.value(), Some(0.0));
        assert!(none.precision.is_undefined());
        assert!(none.f1.is_undefined());

        let all = EvalReport::from_confusion(Confusion::from_predictions(&[true; 100], &actual));
        assert_eq!(all.recall.value(), Some(1.0));
        let f1 = all.f1.value().unwrap();
        assert!((f1 - 2.0 * 0.05 / 1.05).abs() < 1e-12);
        assert!((f1 - 0.09).abs() < 0.01);
        assert_eq!(all.flagged_fraction, 1.0);
    }

    #[test]
    fn zero_precision_and_recall_give_zero_f1() {
        let c = Confusion {
            tp: 0,
            fp: 3,
            fn_: 2,
            tn: 5,
        };
        assert_eq!(c.f1(), Metric(Some(0.0)));
    }

    #[test]
    fn undefined_marker_serialization() {
        let r = EvalReport::from_confusion(Confusion {
            tp: 0,
            fp: 0,
            fn_: 4,
            tn: 6,
        });
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""precision":"undefined""#), "{json}");
        assert!(json.contains(r#""fn":4"#));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv().contains("precision,undefined"));
    }

    #[test]
    fn pooling() {
        let folds = vec![
            FoldReport {
                fold: 0,
                accuracy: 0.5,
                confusion: Confusion { tp: 1, fp: 1, fn_: 0, tn: 0 },
            },
            FoldReport {
                fold: 1,
                accuracy: 1.0,
                confusion: Confusion { tp: 1, fp: 0, fn_: 0, tn: 1 },
            },
        ];
        let r = EvalReport::pooled(folds);
        assert_eq!(r.confusion.total(), 4);
        assert_eq!(r.accuracy, 0.75);
        let s = r.fold_accuracy.unwrap();
        assert_eq!((s.min, s.mean, s.max), (0.5, 0.75, 1.0));
    }
}
