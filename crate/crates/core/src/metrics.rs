//! Binary confusion matrix and classification report (fight is positive).

use std::fmt::Write as _;

use serde::Serialize;

use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionMatrix2 {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix2 {
    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

pub fn confusion_matrix(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix2> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Metrics(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Metrics("no labels".into()));
    }
    let mut cm = ConfusionMatrix2::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (Label::Normal, Label::Normal) => cm.tn += 1,
            (Label::Normal, Label::Fight) => cm.fp += 1,
            (Label::Fight, Label::Normal) => cm.fn_ += 1,
            (Label::Fight, Label::Fight) => cm.tp += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub normal: ClassMetrics,
    pub fight: ClassMetrics,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    /// Micro-averaged precision over both classes.
    pub overall_precision: f64,
    /// Set when any metric had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64, flag: &mut bool) -> f64 {
    if p + r == 0.0 {
        *flag = true;
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn classification_report(cm: &ConfusionMatrix2) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Metrics("empty confusion matrix".into()));
    }
    let mut zero = false;
    let class = |correct: u64, predicted: u64, actual: u64, zero: &mut bool| {
        let precision = ratio(correct, predicted, zero);
        let recall = ratio(correct, actual, zero);
        ClassMetrics { precision, recall, f1: f1(precision, recall, zero), support: actual }
    };
    let normal = class(cm.tn, cm.tn + cm.fn_, cm.tn + cm.fp, &mut zero);
    let fight = class(cm.tp, cm.tp + cm.fp, cm.tp + cm.fn_, &mut zero);

    let macro_avg = Averages {
        precision: (normal.precision + fight.precision) / 2.0,
        recall: (normal.recall + fight.recall) / 2.0,
        f1: (normal.f1 + fight.f1) / 2.0,
    };
    let (wn, wf) = (normal.support as f64 / total as f64, fight.support as f64 / total as f64);
    let weighted_avg = Averages {
        precision: wn * normal.precision + wf * fight.precision,
        recall: wn * normal.recall + wf * fight.recall,
        f1: wn * normal.f1 + wf * fight.f1,
    };
    let accuracy = (cm.tn + cm.tp) as f64 / total as f64;
    Ok(ClassificationReport {
        normal,
        fight,
        accuracy,
        macro_avg,
        weighted_avg,
        overall_precision: accuracy,
        zero_division: zero,
    })
}

/// Text table with two-decimal cells. `with_overall_precision` appends the
/// micro precision as a percentage line.
pub fn render_report(report: &ClassificationReport, with_overall_precision: bool) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<18}{:>10}{:>10}{:>10}", "", "Precision", "Recall", "F1-score");
    let row = |s: &mut String, name: &str, p: f64, r: f64, f: f64| {
        let _ = writeln!(s, "{name:<18}{p:>10.2}{r:>10.2}{f:>10.2}");
    };
    row(&mut s, "Class 0: Normal", report.normal.precision, report.normal.recall, report.normal.f1);
    row(&mut s, "Class 1: Fight", report.fight.precision, report.fight.recall, report.fight.f1);
    let _ = writeln!(s, "{:<18}{:>10}{:>10}{:>10.2}", "Accuracy", "-", "-", report.accuracy);
    let m = report.macro_avg;
    row(&mut s, "Macro average", m.precision, m.recall, m.f1);
    let w = report.weighted_avg;
    row(&mut s, "Weighted average", w.precision, w.recall, w.f1);
    if with_overall_precision {
        let pct = format!("{:.2}%", report.overall_precision * 100.0);
        let _ = writeln!(s, "{:<18}{:>10}{:>10}{:>10}", "Precision", pct, "-", "-");
    }
    s
}

/// Full-precision JSON with the same fields as the text table plus the matrix.
pub fn render_report_machine(report: &ClassificationReport, cm: &ConfusionMatrix2) -> Result<String> {
    #[derive(Serialize)]
    struct Export<'a> {
        confusion_matrix: &'a ConfusionMatrix2,
        report: &'a ClassificationReport,
    }
    Ok(serde_json::to_string_pretty(&Export { confusion_matrix: cm, report })?)
}
