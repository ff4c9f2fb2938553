use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{percent_change, round_half_up, EvalError, Metrics, PercentChange};
use crate::corpus::{Combination, Task};
use crate::table::Table;
use crate::taxonomy::GuidelineSchema;

pub const BINARY_ROWS: [&str; 3] = ["Precision (Positive)", "Recall (Positive)", "F-1(Positive)"];
pub const ACCURACY_ROW: &str = "Overall Accuracy";

/// Metric values of one experiment cell, unrounded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    #[serde(default)]
    pub precision_positive: f64,
    #[serde(default)]
    pub recall_positive: f64,
    #[serde(default)]
    pub f1_positive: f64,
    /// Per-category F1 keyed by class id (multiclass).
    #[serde(default)]
    pub class_f1: BTreeMap<u8, f64>,
    pub accuracy: f64,
    /// Overall accuracy differs significantly from the gold-only cell.
    #[serde(default)]
    pub significant: bool,
}

impl ReportCell {
    pub fn from_metrics(metrics: &Metrics, task: Task, significant: bool) -> Self {
        let mut cell = ReportCell {
            accuracy: metrics.accuracy,
            significant,
            ..ReportCell::default()
        };
        match task {
            Task::Binary => {
                if let Some(pos) = metrics.per_class.get(1) {
                    cell.precision_positive = pos.precision;
                    cell.recall_positive = pos.recall;
                    cell.f1_positive = pos.f1;
                }
            }
            Task::Multiclass => {
                for (index, m) in metrics.per_class.iter().enumerate() {
                    cell.class_f1.insert(task.class_id(index), m.f1);
                }
            }
        }
        cell
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub row: String,
    pub combination: Combination,
    pub change: PercentChange,
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub table: Table,
    pub deltas: Vec<DeltaCell>,
}

fn value(v: f64) -> String {
    format!("{:.2}", round_half_up(v, 2))
}

/// Reads one row's value out of a cell.
type Getter = Box<dyn Fn(&ReportCell) -> f64>;

/// Builds the comparison table: one column per combination present (gold
/// only first), each non-baseline cell annotated with its change against
/// the gold-only value.
pub fn render_report(
    cells: &BTreeMap<Combination, ReportCell>,
    task: Task,
    schema: &GuidelineSchema,
) -> Result<RenderedReport, EvalError> {
    let baseline = cells.get(&Combination::Gold).ok_or(EvalError::MissingBaseline)?;
    let columns: Vec<Combination> = Combination::ALL.into_iter().filter(|c| cells.contains_key(c)).collect();

    let mut rows: Vec<(String, Getter, bool)> = Vec::new();
    match task {
        Task::Binary => {
            rows.push((
                BINARY_ROWS[0].into(),
                Box::new(|c: &ReportCell| c.precision_positive),
                false,
            ));
            rows.push((
                BINARY_ROWS[1].into(),
                Box::new(|c: &ReportCell| c.recall_positive),
                false,
            ));
            rows.push((BINARY_ROWS[2].into(), Box::new(|c: &ReportCell| c.f1_positive), false));
        }
        Task::Multiclass => {
            for category in schema.categories() {
                let id = category.id;
                rows.push((
                    category.display_label().to_string(),
                    Box::new(move |c: &ReportCell| c.class_f1.get(&id).copied().unwrap_or(0.0)),
                    false,
                ));
            }
        }
    }
    rows.push((ACCURACY_ROW.into(), Box::new(|c: &ReportCell| c.accuracy), true));

    let first = match task {
        Task::Binary => "Metric",
        Task::Multiclass => "Category",
    };
    let mut header = vec![first.to_string()];
    header.extend(columns.iter().map(|c| c.column_title().to_string()));
    let mut table = Table::new(header);
    let mut deltas = Vec::new();
    for (label, get, is_accuracy) in &rows {
        let base = get(baseline);
        let mut line = vec![label.clone()];
        for combination in &columns {
            let cell = &cells[combination];
            let v = get(cell);
            if *combination == Combination::Gold {
                line.push(value(v));
                continue;
            }
            match percent_change(base, v) {
                Ok(change) => {
                    let star = if *is_accuracy && cell.significant { "*" } else { "" };
                    let rendered = change.render();
                    line.push(format!("{} ({rendered}{star})", value(v)));
                    deltas.push(DeltaCell {
                        row: label.clone(),
                        combination: *combination,
                        change,
                        rendered,
                    });
                }
                Err(EvalError::ZeroBaseline) => line.push(format!("{} (n/a)", value(v))),
                Err(e) => return Err(e),
            }
        }
        table.push_row(line);
    }
    Ok(RenderedReport { table, deltas })
}
