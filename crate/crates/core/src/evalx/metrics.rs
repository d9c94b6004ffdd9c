//! Per-label precision, recall and F1, support-weighted averages and
//! aggregation over runs.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{Label, LabelSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// A zero denominator was replaced by 0 for at least one metric.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Builds the metrics of one label from its confusion counts.
pub fn label_metrics(label: Label, tp: usize, fp: usize, fn_: usize) -> LabelMetrics {
    let mut zero_division = false;
    let precision = ratio(tp, tp + fp, &mut zero_division);
    let recall = ratio(tp, tp + fn_, &mut zero_division);
    let f1 = if precision + recall == 0.0 {
        zero_division = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    LabelMetrics {
        label,
        precision,
        recall,
        f1,
        support: tp + fn_,
        zero_division,
    }
}

/// Precision, recall, F1 and support for each label column.
pub fn per_label_metrics(
    y_true: &[LabelSet],
    y_pred: &[LabelSet],
) -> Result<[LabelMetrics; 4], EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::Argument(format!(
            "{} gold rows but {} predicted rows",
            y_true.len(),
            y_pred.len()
        )));
    }
    Ok(Label::ALL.map(|label| {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (t, p) in y_true.iter().zip(y_pred) {
            match (t.get(label), p.get(label)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        label_metrics(label, tp, fp, fn_)
    }))
}

/// Averages each metric over labels with weights `support / total support`.
pub fn weighted_average(metrics: &[LabelMetrics]) -> Result<WeightedMetrics, EvalError> {
    let total: usize = metrics.iter().map(|m| m.support).sum();
    if total == 0 {
        return Err(EvalError::Argument("every label has zero support".into()));
    }
    let w = |f: fn(&LabelMetrics) -> f64| {
        metrics
            .iter()
            .map(|m| f(m) * m.support as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(WeightedMetrics {
        precision: w(|m| m.precision),
        recall: w(|m| m.recall),
        f1: w(|m| m.f1),
    })
}

/// Where a report came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub protocol: String,
    /// Apps whose reviews were evaluated.
    pub apps: Vec<String>,
    /// `in_domain` or `out_domain` for the leave-one-out protocol.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub held_out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Number of reports averaged into this one (1 for a single run).
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_label: [LabelMetrics; 4],
    pub weighted: WeightedMetrics,
    pub n_examples: usize,
    pub meta: RunMeta,
}

impl MetricsReport {
    pub fn evaluate(
        y_true: &[LabelSet],
        y_pred: &[LabelSet],
        meta: RunMeta,
    ) -> Result<Self, EvalError> {
        let per_label = per_label_metrics(y_true, y_pred)?;
        let weighted = weighted_average(&per_label)?;
        Ok(MetricsReport {
            per_label,
            weighted,
            n_examples: y_true.len(),
            meta,
        })
    }

    pub fn label(&self, label: Label) -> &LabelMetrics {
        &self.per_label[label.index()]
    }

    /// Fixed-width table: one row per label plus the weighted average.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<18}{:>10}{:>10}{:>10}{:>10}\n",
            "", "Precision", "Recall", "F1", "Support"
        );
        for m in &self.per_label {
            out += &format!(
                "{:<18}{:>10.2}{:>10.2}{:>10.2}{:>10}\n",
                m.label.display_name(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let support: usize = self.per_label.iter().map(|m| m.support).sum();
        out += &format!(
            "{:<18}{:>10.2}{:>10.2}{:>10.2}{:>10}\n",
            "Weighted Average", self.weighted.precision, self.weighted.recall, self.weighted.f1, support
        );
        out
    }
}

/// Unweighted mean of every metric across reports; supports and example
/// counts are summed, zero-division flags are OR-ed.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport, EvalError> {
    let first = reports
        .first()
        .ok_or_else(|| EvalError::Argument("no reports to aggregate".into()))?;
    let k = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let per_label = Label::ALL.map(|label| {
        let i = label.index();
        LabelMetrics {
            label,
            precision: mean(&|r| r.per_label[i].precision),
            recall: mean(&|r| r.per_label[i].recall),
            f1: mean(&|r| r.per_label[i].f1),
            support: reports.iter().map(|r| r.per_label[i].support).sum(),
            zero_division: reports.iter().any(|r| r.per_label[i].zero_division),
        }
    });
    let weighted = WeightedMetrics {
        precision: mean(&|r| r.weighted.precision),
        recall: mean(&|r| r.weighted.recall),
        f1: mean(&|r| r.weighted.f1),
    };
    let mut apps: Vec<String> = reports.iter().flat_map(|r| r.meta.apps.clone()).collect();
    apps.sort();
    apps.dedup();
    let same = |f: &dyn Fn(&RunMeta) -> Option<String>| {
        let v = f(&first.meta);
        reports.iter().all(|r| f(&r.meta) == v).then_some(v).flatten()
    };
    Ok(MetricsReport {
        per_label,
        weighted,
        n_examples: reports.iter().map(|r| r.n_examples).sum(),
        meta: RunMeta {
            protocol: first.meta.protocol.clone(),
            apps,
            domain: same(&|m| m.domain.clone()),
            held_out: same(&|m| m.held_out.clone()),
            run: None,
            seed: None,
            runs: reports.iter().map(|r| r.meta.runs.max(1)).sum(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::reference;
    use proptest::prelude::*;

    fn rows(m: &[[u8; 4]]) -> Vec<LabelSet> {
        m.iter().map(|r| LabelSet::from_flags(r.map(|x| x == 1))).collect()
    }

    #[test]
    fn hand_built_case() {
        let t = rows(&[
            [1, 0, 0, 1],
            [1, 1, 0, 0],
            [0, 1, 0, 0],
            [1, 0, 1, 0],
            [0, 0, 1, 1],
            [1, 0, 0, 0],
        ]);
        let p = rows(&[
            [1, 0, 0, 0],
            [1, 0, 0, 0],
            [0, 1, 0, 1],
            [0, 0, 1, 0],
            [1, 0, 0, 1],
            [1, 1, 0, 0],
        ]);
        let m = per_label_metrics(&t, &p).unwrap();
        // rating: tp 3, fp 1, fn 1
        assert_eq!((m[0].precision, m[0].recall, m[0].support), (0.75, 0.75, 4));
        // bug report: tp 1, fp 1, fn 1
        assert_eq!((m[1].precision, m[1].recall), (0.5, 0.5));
        // feature request: tp 1, fp 0, fn 1
        assert_eq!((m[2].precision, m[2].recall), (1.0, 0.5));
        assert!((m[2].f1 - 2.0 / 3.0).abs() < 1e-15);
        // user experience: tp 1, fp 1, fn 1
        assert_eq!(m[3].f1, 0.5);
        assert!(m.iter().all(|x| !x.zero_division));
    }

    #[test]
    fn zero_division_is_flagged() {
        let t = rows(&[[1, 0, 0, 0], [1, 0, 0, 0]]);
        let p = rows(&[[1, 0, 0, 0], [0, 0, 0, 0]]);
        let m = per_label_metrics(&t, &p).unwrap();
        assert!(!m[0].zero_division);
        assert!(m[1].zero_division);
        assert_eq!((m[1].precision, m[1].recall, m[1].f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let t = rows(&[[1, 0, 0, 0]]);
        assert!(matches!(per_label_metrics(&t, &[]), Err(EvalError::Argument(_))));
    }

    #[test]
    fn perfect_predictions() {
        let t = rows(&[[1, 1, 0, 0], [0, 0, 1, 1], [1, 0, 1, 0]]);
        let m = per_label_metrics(&t, &t).unwrap();
        assert!(m.iter().all(|x| (x.precision, x.recall, x.f1) == (1.0, 1.0, 1.0)));
    }

    fn with(label: Label, p: f64, r: f64, f1: f64, support: usize) -> LabelMetrics {
        LabelMetrics { label, precision: p, recall: r, f1, support, zero_division: false }
    }

    #[test]
    fn weighted_average_cases() {
        let m = [
            with(Label::Rating, 1.0, 1.0, 1.0, 5),
            with(Label::BugReport, 0.0, 0.0, 0.0, 5),
            with(Label::FeatureRequest, 1.0, 1.0, 1.0, 5),
            with(Label::UserExperience, 0.0, 0.0, 0.0, 5),
        ];
        assert_eq!(weighted_average(&m).unwrap().f1, 0.5);
        let single = [
            with(Label::Rating, 0.3, 0.6, 0.4, 0),
            with(Label::BugReport, 0.7, 0.8, 0.75, 9),
            with(Label::FeatureRequest, 0.1, 0.1, 0.1, 0),
            with(Label::UserExperience, 0.2, 0.2, 0.2, 0),
        ];
        assert_eq!(
            weighted_average(&single).unwrap(),
            WeightedMetrics { precision: 0.7, recall: 0.8, f1: 0.75 }
        );
        let zero = single.map(|m| LabelMetrics { support: 0, ..m });
        assert!(matches!(weighted_average(&zero), Err(EvalError::Argument(_))));
    }

    #[test]
    fn published_rows_with_whole_corpus_supports() {
        // Per-label rows of the same-apps results table, weighted with the
        // whole-corpus label counts.
        let rows = [
            (Label::Rating, 0.88, 0.93, 0.91),
            (Label::BugReport, 0.92, 0.93, 0.93),
            (Label::FeatureRequest, 0.85, 0.83, 0.84),
            (Label::UserExperience, 0.81, 0.73, 0.77),
        ];
        let m = rows.map(|(l, p, r, f)| with(l, p, r, f, reference::support(l)));
        let w = weighted_average(&m).unwrap();
        // computed by hand: 6990.10 / 7890, 6915.51 / 7890, 7007.50 / 7890
        assert!((w.f1 - 6990.10 / 7890.0).abs() < 1e-12);
        assert!((w.precision - 6915.51 / 7890.0).abs() < 1e-12);
        assert!((w.recall - 7007.50 / 7890.0).abs() < 1e-12);
        assert!((w.f1 - 0.89).abs() <= 0.01, "{}", w.f1);
        assert!((w.precision - 0.88).abs() <= 0.01, "{}", w.precision);
        assert!((w.recall - 0.89).abs() <= 0.01, "{}", w.recall);
    }

    fn report(f1: f64) -> MetricsReport {
        let m = Label::ALL.map(|l| with(l, f1, f1, f1, 10));
        MetricsReport {
            per_label: m,
            weighted: weighted_average(&m).unwrap(),
            n_examples: 20,
            meta: RunMeta { protocol: "same_apps".into(), runs: 1, ..Default::default() },
        }
    }

    #[test]
    fn aggregate_cases() {
        let a = aggregate(&[report(0.8), report(0.9)]).unwrap();
        assert!((a.weighted.f1 - 0.85).abs() < 1e-15);
        assert_eq!(a.per_label[0].support, 20);
        assert_eq!(a.meta.runs, 2);
        let same = aggregate(&[report(0.7), report(0.7)]).unwrap();
        assert_eq!(same.per_label[1].f1, 0.7);
        let one = aggregate(&[report(0.6)]).unwrap();
        assert_eq!(one.per_label, report(0.6).per_label);
        assert_eq!(one.weighted, report(0.6).weighted);
        assert!(matches!(aggregate(&[]), Err(EvalError::Argument(_))));
    }

    #[test]
    fn table_has_every_row() {
        let t = report(0.5).table();
        for name in ["Rating", "Bug Report", "Feature Request", "User Experience", "Weighted Average"] {
            assert!(t.contains(name), "{t}");
        }
    }

    fn matrix() -> impl Strategy<Value = (Vec<LabelSet>, Vec<LabelSet>)> {
        (1usize..30).prop_flat_map(|n| {
            let row = prop::array::uniform4(any::<bool>()).prop_map(LabelSet::from_flags);
            (prop::collection::vec(row.clone(), n), prop::collection::vec(row, n))
        })
    }

    proptest! {
        #[test]
        fn metric_bounds((t, p) in matrix()) {
            for m in per_label_metrics(&t, &p).unwrap() {
                for v in [m.precision, m.recall, m.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                if m.precision == 0.0 && m.recall == 0.0 {
                    prop_assert_eq!(m.f1, 0.0);
                } else {
                    let lo = m.precision.min(m.recall);
                    let hi = m.precision.max(m.recall);
                    prop_assert!(m.f1 >= lo - 1e-12 && m.f1 <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn uniform_supports_give_plain_mean(v in prop::array::uniform4(0.0f64..1.0), s in 1usize..100) {
            let m = Label::ALL.map(|l| with(l, v[l.index()], v[l.index()], v[l.index()], s));
            let w = weighted_average(&m).unwrap();
            let mean = v.iter().sum::<f64>() / 4.0;
            prop_assert!((w.f1 - mean).abs() < 1e-12);
        }

        #[test]
        fn aggregate_is_mean(f in prop::collection::vec(0.0f64..1.0, 1..12)) {
            let reports: Vec<_> = f.iter().map(|&x| report(x)).collect();
            let a = aggregate(&reports).unwrap();
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            prop_assert!((a.weighted.f1 - mean).abs() < 1e-12);
            prop_assert!((a.per_label[3].recall - mean).abs() < 1e-12);
        }
    }
}
