use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::compare::{Category, ComparisonOutcome};

pub type CategoryCounts = BTreeMap<Category, usize>;

/// A graded attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedOutcome {
    pub question_id: String,
    pub template_id: String,
    pub attempt: u32,
    pub outcome: ComparisonOutcome,
}

/// Templates 1 and 2 both return entity lists and are reported together.
pub fn template_family(template_id: &str) -> &str {
    match template_id {
        "T1" | "T2" => "T1+T2",
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub total: usize,
    pub per_template: BTreeMap<String, CategoryCounts>,
    pub per_family: BTreeMap<String, CategoryCounts>,
    pub overall: CategoryCounts,
    /// Correct answers over attempts, keyed by template id, family and
    /// `overall`.
    pub accuracy: BTreeMap<String, f64>,
}

fn zero_counts() -> CategoryCounts {
    Category::ALL.iter().map(|&c| (c, 0)).collect()
}

fn accuracy_of(counts: &CategoryCounts) -> f64 {
    let total: usize = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    let correct: usize = counts
        .iter()
        .filter(|(c, _)| c.is_correct())
        .map(|(_, n)| n)
        .sum();
    correct as f64 / total as f64
}

pub fn summarize(outcomes: &[GradedOutcome]) -> MetricsSummary {
    let mut summary = MetricsSummary {
        overall: zero_counts(),
        ..Default::default()
    };
    for o in outcomes {
        let category = o.outcome.category;
        *summary
            .per_template
            .entry(o.template_id.clone())
            .or_insert_with(zero_counts)
            .entry(category)
            .or_default() += 1;
        *summary
            .per_family
            .entry(template_family(&o.template_id).to_owned())
            .or_insert_with(zero_counts)
            .entry(category)
            .or_default() += 1;
        *summary.overall.entry(category).or_default() += 1;
    }
    summary.total = outcomes.len();
    for (id, counts) in summary.per_template.iter().chain(&summary.per_family) {
        summary.accuracy.insert(id.clone(), accuracy_of(counts));
    }
    summary
        .accuracy
        .insert("overall".into(), accuracy_of(&summary.overall));
    summary
}

impl MetricsSummary {
    /// `{template_id: {category: count}, accuracy: {template_id: fraction}}`.
    pub fn to_report_json(&self) -> Value {
        let mut out = Map::new();
        for (id, counts) in &self.per_template {
            let counts: Map<String, Value> = counts
                .iter()
                .map(|(c, n)| (c.as_str().to_owned(), json!(n)))
                .collect();
            out.insert(id.clone(), Value::Object(counts));
        }
        out.insert("accuracy".into(), json!(self.accuracy));
        Value::Object(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} graded attempts", self.total);
        let groups = self
            .per_family
            .iter()
            .filter(|(f, _)| !self.per_template.contains_key(*f));
        for (id, counts) in self.per_template.iter().chain(groups) {
            let total: usize = counts.values().sum();
            let _ = writeln!(
                out,
                "\n{id}: {total} attempts, accuracy {:.3}",
                self.accuracy.get(id).copied().unwrap_or(0.0)
            );
            for (c, n) in counts.iter().filter(|(_, n)| **n > 0) {
                let _ = writeln!(out, "  {:<16} {n}", c.as_str());
            }
        }
        let _ = writeln!(
            out,
            "\noverall accuracy {:.3}",
            self.accuracy.get("overall").copied().unwrap_or(0.0)
        );
        out
    }
}
