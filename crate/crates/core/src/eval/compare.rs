use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::db::{Cell, RowSet};

pub const DEFAULT_SCALAR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    SyntaxError,
    WrongShape,
    ExactMatch,
    Superset,
    Subset,
    Disjoint,
    PartialOverlap,
    ScalarExact,
    ScalarDiff,
    ZeroResult,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::SyntaxError,
        Category::WrongShape,
        Category::ExactMatch,
        Category::Superset,
        Category::Subset,
        Category::Disjoint,
        Category::PartialOverlap,
        Category::ScalarExact,
        Category::ScalarDiff,
        Category::ZeroResult,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::SyntaxError => "syntax_error",
            Category::WrongShape => "wrong_shape",
            Category::ExactMatch => "exact_match",
            Category::Superset => "superset",
            Category::Subset => "subset",
            Category::Disjoint => "disjoint",
            Category::PartialOverlap => "partial_overlap",
            Category::ScalarExact => "scalar_exact",
            Category::ScalarDiff => "scalar_diff",
            Category::ZeroResult => "zero_result",
        }
    }

    /// Counted as a correct answer.
    pub fn is_correct(self) -> bool {
        matches!(self, Category::ExactMatch | Category::ScalarExact)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    pub category: Category,
    pub fp_rate: Option<f64>,
    pub fn_rate: Option<f64>,
    pub scalar_delta: Option<f64>,
}

impl ComparisonOutcome {
    pub fn of(category: Category) -> Self {
        Self {
            category,
            fp_rate: None,
            fn_rate: None,
            scalar_delta: None,
        }
    }
}

/// Rows projected onto alphabetically sorted columns, duplicates collapsed.
fn normalized(rows: &RowSet) -> (Vec<String>, HashSet<Vec<Cell>>) {
    let mut order: Vec<(String, usize)> = rows
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| (c.to_lowercase(), i))
        .collect();
    order.sort();
    let names = order.iter().map(|(n, _)| n.clone()).collect();
    let set = rows
        .data
        .iter()
        .map(|row| {
            order
                .iter()
                .map(|&(_, i)| row.get(i).cloned().unwrap_or(Cell::Null))
                .collect()
        })
        .collect();
    (names, set)
}

/// Set comparison of two result tables after sorting their columns by name.
pub fn compare_result_sets(gold: &RowSet, generated: &RowSet) -> ComparisonOutcome {
    let (gold_cols, gold_set) = normalized(gold);
    let (gen_cols, gen_set) = normalized(generated);
    if gold_cols != gen_cols {
        return ComparisonOutcome::of(Category::WrongShape);
    }
    let common = gold_set.intersection(&gen_set).count();
    let extra = gen_set.len() - common;
    let missing = gold_set.len() - common;
    match (extra, missing) {
        (0, 0) => ComparisonOutcome::of(Category::ExactMatch),
        (_, 0) => ComparisonOutcome {
            fp_rate: Some(extra as f64 / gen_set.len() as f64),
            ..ComparisonOutcome::of(Category::Superset)
        },
        (0, _) => ComparisonOutcome {
            fn_rate: Some(missing as f64 / gold_set.len() as f64),
            ..ComparisonOutcome::of(Category::Subset)
        },
        _ if common == 0 => ComparisonOutcome::of(Category::Disjoint),
        _ => ComparisonOutcome::of(Category::PartialOverlap),
    }
}

/// Compares a scalar answer; a missing generated value counts as 0.
/// `tolerance` is relative to the larger magnitude.
pub fn compare_scalar(gold: f64, generated: Option<f64>, tolerance: f64) -> ComparisonOutcome {
    let value = generated.unwrap_or(0.0);
    let delta = value - gold;
    let scale = gold.abs().max(value.abs());
    if delta == 0.0 || delta.abs() <= tolerance * scale {
        return ComparisonOutcome {
            scalar_delta: Some(delta),
            ..ComparisonOutcome::of(Category::ScalarExact)
        };
    }
    if value == 0.0 && gold > 0.0 {
        return ComparisonOutcome {
            scalar_delta: Some(delta),
            ..ComparisonOutcome::of(Category::ZeroResult)
        };
    }
    ComparisonOutcome {
        scalar_delta: Some(delta),
        ..ComparisonOutcome::of(Category::ScalarDiff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("result is not a single numeric value")]
pub struct NotScalar;

/// The single numeric value of a result, when it has that shape. Empty
/// results and NULL give `Ok(None)`.
pub fn scalar_of(rows: &RowSet) -> Result<Option<f64>, NotScalar> {
    if rows.columns.len() != 1 {
        return Err(NotScalar);
    }
    match rows.data.as_slice() {
        [] => Ok(None),
        [row] => match row.first() {
            None | Some(Cell::Null) => Ok(None),
            Some(cell) => cell.as_f64().map(Some).ok_or(NotScalar),
        },
        _ => Err(NotScalar),
    }
}
