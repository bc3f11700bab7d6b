//! Name resolution of a parsed query against the catalog: tables, aliases,
//! columns, literal/column type agreement and known functions.

use sqlparser::ast::{
    BinaryOperator, Expr, FunctionArg, FunctionArgExpr, FunctionArguments, GroupByExpr, Ident,
    JoinConstraint, JoinOperator, OrderByKind, Query, Select, SelectItem,
    SelectItemQualifiedWildcardKind, SetExpr, Spanned, TableFactor, UnaryOperator, Value,
    WindowType,
};
use sqlparser::tokenizer::{Location, Span};

use super::{Diagnostic, DiagnosticCode, TextSpan};
use crate::catalog::{Affinity, Catalog};

/// Functions the guard recognizes; anything else only raises a warning.
pub const KNOWN_FUNCTIONS: &[&str] = &[
    "abs",
    "char",
    "coalesce",
    "concat",
    "concat_ws",
    "format",
    "glob",
    "hex",
    "ifnull",
    "iif",
    "instr",
    "length",
    "like",
    "likelihood",
    "likely",
    "lower",
    "ltrim",
    "max",
    "min",
    "nullif",
    "printf",
    "quote",
    "random",
    "replace",
    "round",
    "rtrim",
    "sign",
    "soundex",
    "substr",
    "substring",
    "trim",
    "typeof",
    "unhex",
    "unicode",
    "unlikely",
    "upper",
    "avg",
    "count",
    "group_concat",
    "string_agg",
    "sum",
    "total",
    "date",
    "time",
    "datetime",
    "julianday",
    "unixepoch",
    "strftime",
    "timediff",
    "current_date",
    "current_time",
    "current_timestamp",
    "ceil",
    "ceiling",
    "floor",
    "exp",
    "ln",
    "log",
    "log10",
    "log2",
    "mod",
    "pi",
    "pow",
    "power",
    "sqrt",
    "trunc",
    "json",
    "json_extract",
    "json_array",
    "json_object",
    "json_group_array",
    "json_group_object",
    "json_each",
    "row_number",
    "rank",
    "dense_rank",
    "ntile",
    "lag",
    "lead",
    "first_value",
    "last_value",
    "nth_value",
    "percent_rank",
    "cume_dist",
];

const AGGREGATES: &[&str] = &[
    "count",
    "sum",
    "avg",
    "total",
    "group_concat",
    "string_agg",
    "min",
    "max",
];

/// Maps sqlparser line/column locations to byte offsets.
pub struct LineIndex<'a> {
    text: &'a str,
    starts: Vec<usize>,
}

impl<'a> LineIndex<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        Self { text, starts }
    }

    fn offset(&self, loc: Location) -> Option<usize> {
        if loc.line == 0 {
            return None;
        }
        let line_start = *self.starts.get(loc.line as usize - 1)?;
        let line = &self.text[line_start..];
        let col = loc.column.saturating_sub(1) as usize;
        Some(line_start + line.char_indices().nth(col).map_or(line.len(), |(i, _)| i))
    }

    pub fn span(&self, span: Span) -> TextSpan {
        match (self.offset(span.start), self.offset(span.end)) {
            (Some(s), Some(e)) if e >= s => TextSpan { start: s, end: e },
            (Some(s), _) => TextSpan { start: s, end: s },
            _ => TextSpan {
                start: 0,
                end: self.text.len(),
            },
        }
    }
}

#[derive(Debug, Clone)]
struct Column {
    name: String,
    affinity: Affinity,
}

#[derive(Debug, Clone)]
struct Relation {
    name: String,
    /// `None` when the columns cannot be known (table functions, unknown
    /// tables); lookups then succeed silently.
    columns: Option<Vec<Column>>,
}

impl Relation {
    fn column(&self, name: &str) -> Option<Option<Affinity>> {
        match &self.columns {
            None => Some(None),
            Some(cols) => cols
                .iter()
                .find(|c| c.name.eq_ignore_ascii_case(name))
                .map(|c| Some(c.affinity)),
        }
    }
}

struct Scope<'p> {
    relations: Vec<Relation>,
    aliases: Vec<String>,
    parent: Option<&'p Scope<'p>>,
}

impl<'p> Scope<'p> {
    fn child(parent: Option<&'p Scope<'p>>) -> Self {
        Self {
            relations: Vec::new(),
            aliases: Vec::new(),
            parent,
        }
    }

    fn levels(&self) -> impl Iterator<Item = &Scope<'p>> {
        std::iter::successors(Some(self), |s| s.parent)
    }
}

pub struct Resolver<'a> {
    catalog: &'a Catalog,
    lines: LineIndex<'a>,
    ctes: Vec<Vec<Relation>>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq)]
enum Literal {
    Number(String),
    Text(String),
}

fn literal(expr: &Expr) -> Option<Literal> {
    match expr {
        Expr::Value(v) => match &v.value {
            Value::Number(n, _) => Some(Literal::Number(n.clone())),
            Value::SingleQuotedString(s) => Some(Literal::Text(s.clone())),
            _ => None,
        },
        Expr::UnaryOp {
            op: UnaryOperator::Minus | UnaryOperator::Plus,
            expr,
        } => match literal(expr)? {
            Literal::Number(n) => Some(Literal::Number(n)),
            Literal::Text(_) => None,
        },
        Expr::Nested(e) => literal(e),
        _ => None,
    }
}

fn is_comparison(op: &BinaryOperator) -> bool {
    matches!(
        op,
        BinaryOperator::Eq
            | BinaryOperator::NotEq
            | BinaryOperator::Lt
            | BinaryOperator::LtEq
            | BinaryOperator::Gt
            | BinaryOperator::GtEq
    )
}

fn function_args(args: &FunctionArguments) -> Vec<&Expr> {
    match args {
        FunctionArguments::List(list) => list
            .args
            .iter()
            .filter_map(|a| match a {
                FunctionArg::Unnamed(FunctionArgExpr::Expr(e))
                | FunctionArg::Named {
                    arg: FunctionArgExpr::Expr(e),
                    ..
                }
                | FunctionArg::ExprNamed {
                    arg: FunctionArgExpr::Expr(e),
                    ..
                } => Some(e),
                _ => None,
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// True when `expr` calls an aggregate outside any subquery.
pub fn contains_aggregate(expr: &Expr) -> bool {
    match expr {
        Expr::Function(f) => {
            let name = f.name.to_string().to_ascii_lowercase();
            let args = function_args(&f.args);
            let arity_ok = match name.as_str() {
                "min" | "max" => args.len() <= 1,
                _ => true,
            };
            (f.over.is_none() && arity_ok && AGGREGATES.contains(&name.as_str()))
                || args.into_iter().any(contains_aggregate)
        }
        Expr::BinaryOp { left, right, .. } => contains_aggregate(left) || contains_aggregate(right),
        Expr::UnaryOp { expr, .. } | Expr::Nested(expr) | Expr::Cast { expr, .. } => {
            contains_aggregate(expr)
        }
        Expr::Case {
            operand,
            conditions,
            else_result,
            ..
        } => {
            operand.as_deref().is_some_and(contains_aggregate)
                || conditions
                    .iter()
                    .any(|c| contains_aggregate(&c.condition) || contains_aggregate(&c.result))
                || else_result.as_deref().is_some_and(contains_aggregate)
        }
        _ => false,
    }
}

fn ident_key(id: &Ident) -> String {
    id.value.to_ascii_lowercase()
}

impl<'a> Resolver<'a> {
    pub fn new(catalog: &'a Catalog, sql: &'a str) -> Self {
        Self {
            catalog,
            lines: LineIndex::new(sql),
            ctes: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    fn error(&mut self, code: DiagnosticCode, message: String, span: Span) {
        let span = self.lines.span(span);
        self.diagnostics
            .push(Diagnostic::error(code, message, span));
    }

    fn warning(&mut self, code: DiagnosticCode, message: String, span: Span) {
        let span = self.lines.span(span);
        self.diagnostics
            .push(Diagnostic::warning(code, message, span));
    }

    pub fn check_query(&mut self, query: &Query) {
        self.query(query, None);
    }

    fn lookup_cte(&self, name: &str) -> Option<Relation> {
        self.ctes
            .iter()
            .rev()
            .flat_map(|frame| frame.iter().rev())
            .find(|r| r.name.eq_ignore_ascii_case(name))
            .cloned()
    }

    fn query(&mut self, query: &Query, parent: Option<&Scope<'_>>) -> Option<Vec<Column>> {
        self.ctes.push(Vec::new());
        if let Some(with) = &query.with {
            for cte in &with.cte_tables {
                let name = cte.alias.name.value.clone();
                if with.recursive {
                    self.ctes.last_mut().unwrap().push(Relation {
                        name: name.clone(),
                        columns: None,
                    });
                }
                let mut cols = self.query(&cte.query, parent);
                if !cte.alias.columns.is_empty() {
                    let aff = |i: usize| {
                        cols.as_ref()
                            .and_then(|c| c.get(i))
                            .map_or(Affinity::Unknown, |c| c.affinity)
                    };
                    cols = Some(
                        cte.alias
                            .columns
                            .iter()
                            .enumerate()
                            .map(|(i, c)| Column {
                                name: c.name.value.clone(),
                                affinity: aff(i),
                            })
                            .collect(),
                    );
                }
                let frame = self.ctes.last_mut().unwrap();
                frame.retain(|r| !r.name.eq_ignore_ascii_case(&name));
                frame.push(Relation {
                    name,
                    columns: cols,
                });
            }
        }
        let (outputs, scope_relations) = self.set_expr(&query.body, parent);
        if let Some(order_by) = &query.order_by {
            if let OrderByKind::Expressions(exprs) = &order_by.kind {
                let mut scope = Scope::child(parent);
                scope.relations = scope_relations;
                scope.aliases = outputs.iter().flatten().map(|c| c.name.clone()).collect();
                for e in exprs {
                    self.expr(&e.expr, &scope);
                }
            }
        }
        self.ctes.pop();
        outputs
    }

    /// Returns the output columns and, for a plain SELECT body, the relations
    /// visible to a trailing ORDER BY.
    fn set_expr(
        &mut self,
        body: &SetExpr,
        parent: Option<&Scope<'_>>,
    ) -> (Option<Vec<Column>>, Vec<Relation>) {
        match body {
            SetExpr::Select(select) => self.select(select, parent),
            SetExpr::Query(q) => (self.query(q, parent), Vec::new()),
            SetExpr::SetOperation { left, right, .. } => {
                let (out, _) = self.set_expr(left, parent);
                self.set_expr(right, parent);
                (out, Vec::new())
            }
            SetExpr::Values(values) => {
                let scope = Scope::child(parent);
                for row in &values.rows {
                    for e in row {
                        self.expr(e, &scope);
                    }
                }
                let width = values.rows.first().map_or(0, Vec::len);
                let cols = (1..=width)
                    .map(|i| Column {
                        name: format!("column{i}"),
                        affinity: Affinity::Unknown,
                    })
                    .collect();
                (Some(cols), Vec::new())
            }
            _ => (None, Vec::new()),
        }
    }

    fn table_factor(
        &mut self,
        factor: &TableFactor,
        parent: Option<&Scope<'_>>,
        out: &mut Vec<Relation>,
    ) {
        match factor {
            TableFactor::Table {
                name, alias, args, ..
            } => {
                let table = name
                    .0
                    .last()
                    .and_then(|p| p.as_ident())
                    .map(|i| i.value.clone())
                    .unwrap_or_default();
                let visible = alias
                    .as_ref()
                    .map_or_else(|| table.clone(), |a| a.name.value.clone());
                let columns = if let Some(cte) = self.lookup_cte(&table) {
                    cte.columns
                } else if let Some(t) = self.catalog.table(&table) {
                    Some(
                        t.columns
                            .iter()
                            .map(|c| Column {
                                name: c.name.clone(),
                                affinity: c.affinity(),
                            })
                            .collect(),
                    )
                } else if args.is_some() {
                    None
                } else {
                    self.error(
                        DiagnosticCode::UnknownTable,
                        format!("table `{table}` does not exist"),
                        name.span(),
                    );
                    None
                };
                out.push(Relation {
                    name: visible,
                    columns,
                });
            }
            TableFactor::Derived {
                subquery, alias, ..
            } => {
                let columns = self.query(subquery, parent);
                out.push(Relation {
                    name: alias
                        .as_ref()
                        .map(|a| a.name.value.clone())
                        .unwrap_or_default(),
                    columns,
                });
            }
            TableFactor::NestedJoin {
                table_with_joins,
                alias,
            } => {
                let mut inner = Vec::new();
                self.table_factor(&table_with_joins.relation, parent, &mut inner);
                for join in &table_with_joins.joins {
                    self.table_factor(&join.relation, parent, &mut inner);
                }
                match alias {
                    Some(a) => out.push(Relation {
                        name: a.name.value.clone(),
                        columns: None,
                    }),
                    None => out.extend(inner),
                }
            }
            other => {
                let name = match other {
                    TableFactor::Function { alias: Some(a), .. }
                    | TableFactor::TableFunction { alias: Some(a), .. } => a.name.value.clone(),
                    _ => String::new(),
                };
                out.push(Relation {
                    name,
                    columns: None,
                });
            }
        }
    }

    fn select(
        &mut self,
        select: &Select,
        parent: Option<&Scope<'_>>,
    ) -> (Option<Vec<Column>>, Vec<Relation>) {
        let mut scope = Scope::child(parent);
        for twj in &select.from {
            self.table_factor(&twj.relation, parent, &mut scope.relations);
            for join in &twj.joins {
                self.table_factor(&join.relation, parent, &mut scope.relations);
                let constraint = match &join.join_operator {
                    JoinOperator::Join(c)
                    | JoinOperator::Inner(c)
                    | JoinOperator::Left(c)
                    | JoinOperator::LeftOuter(c)
                    | JoinOperator::Right(c)
                    | JoinOperator::RightOuter(c)
                    | JoinOperator::FullOuter(c)
                    | JoinOperator::CrossJoin(c) => Some(c),
                    _ => None,
                };
                match constraint {
                    Some(JoinConstraint::On(e)) => {
                        self.expr(e, &scope);
                    }
                    Some(JoinConstraint::Using(cols)) => {
                        for col in cols {
                            if let Some(id) = col.0.last().and_then(|p| p.as_ident()) {
                                let found = scope
                                    .relations
                                    .iter()
                                    .filter(|r| r.column(&id.value).is_some())
                                    .count();
                                if found < 2 {
                                    self.error(
                                        DiagnosticCode::UnknownColumn,
                                        format!("column `{}` in USING is not present on both sides of the join", id.value),
                                        id.span,
                                    );
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
        }

        let mut outputs: Option<Vec<Column>> = Some(Vec::new());
        for item in &select.projection {
            match item {
                SelectItem::UnnamedExpr(e) => {
                    let aff = self.expr(e, &scope);
                    let name = match e {
                        Expr::Identifier(id) => id.value.clone(),
                        Expr::CompoundIdentifier(ids) => {
                            ids.last().map(|i| i.value.clone()).unwrap_or_default()
                        }
                        other => other.to_string(),
                    };
                    if let Some(o) = outputs.as_mut() {
                        o.push(Column {
                            name,
                            affinity: aff.unwrap_or(Affinity::Unknown),
                        });
                    }
                }
                SelectItem::ExprWithAlias { expr, alias } => {
                    let aff = self.expr(expr, &scope);
                    scope.aliases.push(alias.value.clone());
                    if let Some(o) = outputs.as_mut() {
                        o.push(Column {
                            name: alias.value.clone(),
                            affinity: aff.unwrap_or(Affinity::Unknown),
                        });
                    }
                }
                SelectItem::Wildcard(_) => {
                    let all: Option<Vec<Column>> = scope
                        .relations
                        .iter()
                        .map(|r| r.columns.clone())
                        .collect::<Option<Vec<_>>>()
                        .map(|v| v.concat());
                    outputs = outputs.zip(all).map(|(mut o, a)| {
                        o.extend(a);
                        o
                    });
                }
                SelectItem::QualifiedWildcard(kind, _) => {
                    let cols = match kind {
                        SelectItemQualifiedWildcardKind::ObjectName(name) => {
                            let id = name.0.last().and_then(|p| p.as_ident()).cloned();
                            match id {
                                Some(id) => {
                                    match scope
                                        .relations
                                        .iter()
                                        .find(|r| r.name.eq_ignore_ascii_case(&id.value))
                                    {
                                        Some(r) => r.columns.clone(),
                                        None => {
                                            self.error(
                                            DiagnosticCode::UnknownAlias,
                                            format!("alias or table `{}` is not declared in this query", id.value),
                                            id.span,
                                        );
                                            None
                                        }
                                    }
                                }
                                None => None,
                            }
                        }
                        SelectItemQualifiedWildcardKind::Expr(_) => None,
                    };
                    outputs = outputs.zip(cols).map(|(mut o, a)| {
                        o.extend(a);
                        o
                    });
                }
            }
        }
        if let Some(e) = &select.selection {
            self.expr(e, &scope);
        }
        if let GroupByExpr::Expressions(exprs, _) = &select.group_by {
            for e in exprs {
                self.expr(e, &scope);
            }
        }
        if let Some(e) = &select.having {
            self.expr(e, &scope);
        }
        (outputs, scope.relations)
    }

    fn column_ref(&mut self, ids: &[Ident], scope: &Scope<'_>) -> Option<Affinity> {
        match ids {
            [id] => {
                let key = ident_key(id);
                if matches!(
                    key.as_str(),
                    "rowid"
                        | "oid"
                        | "_rowid_"
                        | "current_date"
                        | "current_time"
                        | "current_timestamp"
                ) {
                    return Some(if key == "rowid" || key == "oid" || key == "_rowid_" {
                        Affinity::Integer
                    } else {
                        Affinity::Text
                    });
                }
                for level in scope.levels() {
                    if let Some(found) = level.relations.iter().find_map(|r| r.column(&id.value)) {
                        return found;
                    }
                    if level
                        .aliases
                        .iter()
                        .any(|a| a.eq_ignore_ascii_case(&id.value))
                    {
                        return None;
                    }
                }
                let hint = if id.quote_style == Some('"') {
                    "; string literals take single quotes"
                } else {
                    ""
                };
                self.error(
                    DiagnosticCode::UnknownColumn,
                    format!("no column named `{}` in scope{hint}", id.value),
                    id.span,
                );
                None
            }
            [.., qualifier, column] => {
                let relation = scope.levels().find_map(|l| {
                    l.relations
                        .iter()
                        .find(|r| r.name.eq_ignore_ascii_case(&qualifier.value))
                });
                match relation {
                    None => {
                        self.error(
                            DiagnosticCode::UnknownAlias,
                            format!(
                                "alias or table `{}` is not declared in this query",
                                qualifier.value
                            ),
                            qualifier.span,
                        );
                        None
                    }
                    Some(rel) => match rel.column(&column.value) {
                        Some(aff) => aff,
                        None => {
                            let name = rel.name.clone();
                            self.error(
                                DiagnosticCode::UnknownColumn,
                                format!("`{name}` has no column named `{}`", column.value),
                                column.span,
                            );
                            None
                        }
                    },
                }
            }
            [] => None,
        }
    }

    fn check_types(&mut self, column: &Expr, col_aff: Option<Affinity>, other: &Expr) {
        let (Some(aff), Some(lit)) = (col_aff, literal(other)) else {
            return;
        };
        let mismatch = match (&lit, aff) {
            (Literal::Number(_), Affinity::Text) => true,
            (Literal::Text(s), a) if a.is_numeric() => s.trim().parse::<f64>().is_err(),
            _ => false,
        };
        if mismatch {
            let (kind, shown) = match &lit {
                Literal::Number(n) => ("the number", n.clone()),
                Literal::Text(s) => ("the string", format!("'{s}'")),
            };
            let holds = if aff == Affinity::Text {
                "text"
            } else {
                "numbers"
            };
            self.error(
                DiagnosticCode::TypeMismatch,
                format!("`{column}` holds {holds} but is compared with {kind} {shown}"),
                column.span().union(&other.span()),
            );
        }
    }

    fn compare(&mut self, left: &Expr, right: &Expr, scope: &Scope<'_>) {
        let la = self.expr(left, scope);
        let ra = self.expr(right, scope);
        if is_column(left) {
            self.check_types(left, la, right);
        }
        if is_column(right) {
            self.check_types(right, ra, left);
        }
    }

    fn subquery(&mut self, query: &Query, scope: &Scope<'_>) -> Option<Affinity> {
        let cols = self.query(query, Some(scope));
        cols.and_then(|c| c.first().map(|c| c.affinity))
    }

    /// Resolves names in `expr` and returns the affinity of a bare column
    /// reference when known.
    fn expr(&mut self, expr: &Expr, scope: &Scope<'_>) -> Option<Affinity> {
        match expr {
            Expr::Identifier(id) => self.column_ref(std::slice::from_ref(id), scope),
            Expr::CompoundIdentifier(ids) => self.column_ref(ids, scope),
            Expr::BinaryOp { left, op, right } => {
                if is_comparison(op) {
                    self.compare(left, right, scope);
                } else {
                    self.expr(left, scope);
                    self.expr(right, scope);
                }
                None
            }
            Expr::UnaryOp { expr, .. } => {
                self.expr(expr, scope);
                None
            }
            Expr::Nested(e) => self.expr(e, scope),
            Expr::Value(_) | Expr::TypedString(_) => None,
            Expr::Function(f) => {
                let name = f.name.to_string().to_ascii_lowercase();
                if !KNOWN_FUNCTIONS.contains(&name.as_str()) {
                    self.warning(
                        DiagnosticCode::UnknownFunction,
                        format!("function `{name}` is not known to the checker"),
                        f.name.span(),
                    );
                }
                for a in function_args(&f.args) {
                    self.expr(a, scope);
                }
                if let FunctionArguments::Subquery(q) = &f.args {
                    self.subquery(q, scope);
                }
                if let Some(filter) = &f.filter {
                    self.expr(filter, scope);
                }
                if let Some(WindowType::WindowSpec(spec)) = &f.over {
                    for e in &spec.partition_by {
                        self.expr(e, scope);
                    }
                    for o in &spec.order_by {
                        self.expr(&o.expr, scope);
                    }
                }
                None
            }
            Expr::Case {
                operand,
                conditions,
                else_result,
                ..
            } => {
                let op_aff = operand.as_deref().and_then(|o| self.expr(o, scope));
                for c in conditions {
                    self.expr(&c.condition, scope);
                    if let Some(o) = operand.as_deref() {
                        if is_column(o) {
                            self.check_types(o, op_aff, &c.condition);
                        }
                    }
                    self.expr(&c.result, scope);
                }
                if let Some(e) = else_result {
                    self.expr(e, scope);
                }
                None
            }
            Expr::Cast { expr, .. } => {
                self.expr(expr, scope);
                None
            }
            Expr::InList { expr, list, .. } => {
                let aff = self.expr(expr, scope);
                for item in list {
                    self.expr(item, scope);
                    if is_column(expr) {
                        self.check_types(expr, aff, item);
                    }
                }
                None
            }
            Expr::InSubquery { expr, subquery, .. } => {
                self.expr(expr, scope);
                self.subquery(subquery, scope);
                None
            }
            Expr::Between {
                expr, low, high, ..
            } => {
                let aff = self.expr(expr, scope);
                self.expr(low, scope);
                self.expr(high, scope);
                if is_column(expr) {
                    self.check_types(expr, aff, low);
                    self.check_types(expr, aff, high);
                }
                None
            }
            Expr::Like { expr, pattern, .. }
            | Expr::ILike { expr, pattern, .. }
            | Expr::SimilarTo { expr, pattern, .. }
            | Expr::RLike { expr, pattern, .. } => {
                self.expr(expr, scope);
                self.expr(pattern, scope);
                None
            }
            Expr::IsNull(e)
            | Expr::IsNotNull(e)
            | Expr::IsTrue(e)
            | Expr::IsNotTrue(e)
            | Expr::IsFalse(e)
            | Expr::IsNotFalse(e)
            | Expr::IsUnknown(e)
            | Expr::IsNotUnknown(e) => {
                self.expr(e, scope);
                None
            }
            Expr::IsDistinctFrom(a, b) | Expr::IsNotDistinctFrom(a, b) => {
                self.compare(a, b, scope);
                None
            }
            Expr::Exists { subquery, .. } => {
                self.subquery(subquery, scope);
                None
            }
            Expr::Subquery(q) => self.subquery(q, scope),
            Expr::Tuple(items) => {
                for e in items {
                    self.expr(e, scope);
                }
                None
            }
            Expr::Collate { expr, .. } => self.expr(expr, scope),
            Expr::Substring {
                expr,
                substring_from,
                substring_for,
                ..
            } => {
                self.expr(expr, scope);
                for e in [substring_from, substring_for].into_iter().flatten() {
                    self.expr(e, scope);
                }
                None
            }
            Expr::Trim {
                expr, trim_what, ..
            } => {
                self.expr(expr, scope);
                if let Some(w) = trim_what {
                    self.expr(w, scope);
                }
                None
            }
            Expr::Ceil { expr, .. } | Expr::Floor { expr, .. } | Expr::Extract { expr, .. } => {
                self.expr(expr, scope);
                None
            }
            Expr::Position { expr, r#in } => {
                self.expr(expr, scope);
                self.expr(r#in, scope);
                None
            }
            // Rare forms are left to the database-backed check.
            _ => None,
        }
    }
}

fn is_column(expr: &Expr) -> bool {
    matches!(expr, Expr::Identifier(_) | Expr::CompoundIdentifier(_))
}
