//! Paper-convention metrics: normal is the positive class for sensitivity
//! and F1, murmur for specificity.

use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset_io::Label;
use crate::model::Branches;

/// A metric value, or `None` when undefined (e.g. no murmur cases in a
/// fold). Serialized as a number or the string `"n/a"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric(pub Option<f64>);

impl Metric {
    fn ratio(num: usize, den: usize) -> Metric {
        Metric((den > 0).then(|| num as f64 / den as f64))
    }

    pub fn value(self) -> Option<f64> {
        self.0
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.4}"),
            None => f.write_str("n/a"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("n/a"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Metric(Some(v))),
            Raw::Text(t) if t == "n/a" => Ok(Metric(None)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected metric {t:?}"))),
        }
    }
}

/// `tp_n`: normal predicted normal, `fn_n`: normal predicted murmur,
/// `tn_m`: murmur predicted murmur, `fp_m`: murmur predicted normal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tn_m: usize,
    pub fp_m: usize,
    pub fn_n: usize,
    pub tp_n: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Normal, Label::Normal) => self.tp_n += 1,
            (Label::Normal, Label::Murmur) => self.fn_n += 1,
            (Label::Murmur, Label::Murmur) => self.tn_m += 1,
            (Label::Murmur, Label::Normal) => self.fp_m += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = Confusion::default();
        for (t, p) in pairs {
            c.add(t, p);
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tn_m + self.fp_m + self.fn_n + self.tp_n
    }

    pub fn sensitivity(&self) -> Metric {
        Metric::ratio(self.tp_n, self.tp_n + self.fn_n)
    }

    pub fn specificity(&self) -> Metric {
        Metric::ratio(self.tn_m, self.tn_m + self.fp_m)
    }

    /// F1 of the normal class.
    pub fn f1_normal(&self) -> Metric {
        Metric::ratio(2 * self.tp_n, 2 * self.tp_n + self.fp_m + self.fn_n)
    }

    pub fn accuracy(&self) -> Metric {
        Metric::ratio(self.tp_n + self.tn_m, self.total())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub sensitivity: Metric,
    pub specificity: Metric,
    pub f1_normal: Metric,
    pub accuracy: Metric,
    pub confusion: Confusion,
}

impl FoldMetrics {
    pub fn new(fold: usize, confusion: Confusion) -> Self {
        FoldMetrics {
            fold,
            sensitivity: confusion.sensitivity(),
            specificity: confusion.specificity(),
            f1_normal: confusion.f1_normal(),
            accuracy: confusion.accuracy(),
            confusion,
        }
    }
}

/// Mean and population standard deviation over the folds where the metric
/// is defined; `folds` counts those folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Metric,
    pub std: Metric,
    pub folds: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = Metric>) -> Self {
        let v: Vec<f64> = values.into_iter().filter_map(Metric::value).collect();
        if v.is_empty() {
            return Summary {
                mean: Metric(None),
                std: Metric(None),
                folds: 0,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Summary {
            mean: Metric(Some(mean)),
            std: Metric(Some(var.sqrt())),
            folds: v.len(),
        }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.mean.0, self.std.0) {
            (Some(m), Some(s)) => write!(f, "{m:.4} ± {s:.4}"),
            _ => f.write_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sensitivity: Summary,
    pub specificity: Summary,
    pub f1_normal: Summary,
    pub accuracy: Summary,
}

impl Aggregate {
    pub fn of(folds: &[FoldMetrics]) -> Self {
        Aggregate {
            sensitivity: Summary::of(folds.iter().map(|f| f.sensitivity)),
            specificity: Summary::of(folds.iter().map(|f| f.specificity)),
            f1_normal: Summary::of(folds.iter().map(|f| f.f1_normal)),
            accuracy: Summary::of(folds.iter().map(|f| f.accuracy)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Branches,
    pub seed: u64,
    pub folds: Vec<FoldMetrics>,
    pub aggregate: Aggregate,
}

impl MetricsReport {
    pub fn new(mode: Branches, seed: u64, folds: Vec<FoldMetrics>) -> Self {
        for (name, s) in [
            ("sensitivity", &folds.iter().map(|f| f.sensitivity).collect::<Vec<_>>()),
            ("specificity", &folds.iter().map(|f| f.specificity).collect()),
        ] {
            let missing = s.iter().filter(|m| m.0.is_none()).count();
            if missing > 0 {
                log::warn!("{name} undefined in {missing} fold(s); excluded from its mean and std");
            }
        }
        let aggregate = Aggregate::of(&folds);
        MetricsReport {
            mode,
            seed,
            folds,
            aggregate,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::Error::Corrupt(format!("metrics report: {e}")))
    }
}

/// Table with one row per report (model) and mean ± std columns.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let header = ["Model", "Sensitivity", "Specificity", "F1 Score"];
    let rows: Vec<[String; 4]> = reports
        .iter()
        .map(|r| {
            [
                r.mode.display_name().to_string(),
                r.aggregate.sensitivity.to_string(),
                r.aggregate.specificity.to_string(),
                r.aggregate.f1_normal.to_string(),
            ]
        })
        .collect();
    let width = |c: usize| {
        rows.iter()
            .map(|r| r[c].chars().count())
            .chain([header[c].len()])
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..4).map(width).collect();
    let mut out = String::new();
    let line = |cells: [&str; 4], out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "| {} |", padded.join(" | "));
    };
    line(header, &mut out);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
    for r in &rows {
        line([&r[0], &r[1], &r[2], &r[3]], &mut out);
    }
    out
}
