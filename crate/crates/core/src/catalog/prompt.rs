use std::fmt::Write;

use serde::Serialize;

use super::{Catalog, ForeignKeyDescriptor, RuleSet, TableDescriptor};

pub const DEFAULT_TASK: &str = "You are an AI assistant designed to answer questions about public transport \
services by writing SQL queries for a SQLite database that stores the GTFS data of several agencies. \
Write one query that retrieves the data needed to answer the user's question, following the rules below \
and adapting the closest examples.";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptExemplar {
    pub question: String,
    pub sql: String,
    /// Similarity to the current question; lowest is dropped first when the
    /// prompt is over budget.
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptDocument {
    pub task_text: String,
    pub tables: Vec<TableDescriptor>,
    pub foreign_keys: Vec<ForeignKeyDescriptor>,
    pub rules: RuleSet,
    pub exemplars: Vec<PromptExemplar>,
}

impl PromptDocument {
    pub fn new(catalog: &Catalog, rules: RuleSet) -> Self {
        Self {
            task_text: DEFAULT_TASK.to_owned(),
            tables: catalog.tables.clone(),
            foreign_keys: catalog.foreign_keys.clone(),
            rules,
            exemplars: Vec::new(),
        }
    }

    pub fn with_exemplars(mut self, exemplars: Vec<PromptExemplar>) -> Self {
        self.exemplars = exemplars;
        self
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Indented block with each non-empty line of `text` on its own line.
fn push_block(out: &mut String, indent: &str, text: &str) {
    for line in text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty())
    {
        let _ = writeln!(out, "{indent}{}", escape(line));
    }
}

fn render_table(out: &mut String, table: &TableDescriptor) {
    out.push_str("    <table>\n");
    let _ = writeln!(out, "      <name>{}</name>", escape(&table.name));
    let _ = writeln!(
        out,
        "      <description>{}</description>",
        escape(&table.description)
    );
    out.push_str("      <definition>\n");
    push_block(out, "        ", &table.ddl);
    out.push_str("      </definition>\n");
    out.push_str("      <comments>\n");
    for (column, comment) in &table.column_comments {
        let _ = writeln!(
            out,
            "        COMMENT ON column {}.{} IS '{}';",
            escape(&table.name),
            escape(column),
            escape(&comment.replace('\'', "''"))
        );
    }
    out.push_str("      </comments>\n");
    out.push_str("    </table>\n");
}

/// Renders the document as nested tags: task, database (tables then foreign
/// keys), rules, and finally the exemplars.
pub fn render_prompt(doc: &PromptDocument) -> String {
    let mut out = String::from("<prompt>\n");
    let _ = writeln!(out, "  <task>{}</task>", escape(&doc.task_text));
    out.push_str("  <database>\n");
    for table in &doc.tables {
        render_table(&mut out, table);
    }
    out.push_str("    <foreign_keys>\n");
    for fk in &doc.foreign_keys {
        let _ = writeln!(out, "      {}", escape(&fk.to_ddl()));
    }
    out.push_str("    </foreign_keys>\n");
    out.push_str("  </database>\n");
    out.push_str("  <rules>\n");
    for rule in &doc.rules.rules {
        let _ = writeln!(out, "    <rule>{}</rule>", escape(rule));
    }
    out.push_str("  </rules>\n");
    if !doc.exemplars.is_empty() {
        out.push_str("  <examples>\n");
        for ex in &doc.exemplars {
            out.push_str("    <example>\n");
            let _ = writeln!(out, "      <question>{}</question>", escape(&ex.question));
            out.push_str("      <sql>\n");
            push_block(&mut out, "        ", &ex.sql);
            out.push_str("      </sql>\n");
            out.push_str("    </example>\n");
        }
        out.push_str("  </examples>\n");
    }
    out.push_str("</prompt>\n");
    out
}

/// Renders within `max_chars`, dropping the least similar exemplars first.
/// Returns the text and how many exemplars were dropped; the result may still
/// exceed the budget when nothing is left to drop.
pub fn render_prompt_within(doc: &PromptDocument, max_chars: usize) -> (String, usize) {
    let mut working = doc.clone();
    let mut order: Vec<usize> = (0..working.exemplars.len()).collect();
    // stable: among equal similarity, later exemplars go first
    order.sort_by(|&a, &b| {
        working.exemplars[a]
            .similarity
            .total_cmp(&working.exemplars[b].similarity)
            .then(b.cmp(&a))
    });
    let mut dropped = Vec::new();
    loop {
        let text = render_prompt(&working);
        if text.chars().count() <= max_chars || dropped.len() == order.len() {
            return (text, dropped.len());
        }
        dropped.push(order[dropped.len()]);
        working.exemplars = doc
            .exemplars
            .iter()
            .enumerate()
            .filter(|(i, _)| !dropped.contains(i))
            .map(|(_, e)| e.clone())
            .collect();
    }
}
