//! Result tables, post-hoc audits and their CSV/JSON rendering.

use serde_json::{Map, Value};
use waiid_core::io::{fmt17, json_f64, to_json_string};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            _ => None,
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt17(*x),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            Cell::Float(x) => json_f64(*x),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    /// Negative zero is stored as zero so that equal values print equally.
    fn from(x: f64) -> Self {
        Cell::Float(if x == 0.0 { 0.0 } else { x })
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::from)
    }
}

/// Read-only view of one row by column name.
pub struct Row<'a> {
    columns: &'a [String],
    cells: &'a [Cell],
}

impl Row<'_> {
    pub fn get(&self, column: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == column)?;
        self.cells[i].as_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditKind {
    /// An inequality that holds on every row.
    Exact,
    /// A Monte Carlo comparison at three standard errors.
    Statistical,
}

impl AuditKind {
    fn name(self) -> &'static str {
        match self {
            AuditKind::Exact => "exact",
            AuditKind::Statistical => "statistical",
        }
    }
}

/// Row predicate; `None` means the row carries nothing to check.
pub type Check = Box<dyn Fn(&Row) -> Option<bool> + Send + Sync>;

pub struct Audit {
    pub name: &'static str,
    pub kind: AuditKind,
    pub check: Check,
}

impl Audit {
    pub fn exact(name: &'static str, check: impl Fn(&Row) -> Option<bool> + Send + Sync + 'static) -> Self {
        Audit { name, kind: AuditKind::Exact, check: Box::new(check) }
    }

    pub fn statistical(
        name: &'static str,
        check: impl Fn(&Row) -> Option<bool> + Send + Sync + 'static,
    ) -> Self {
        Audit { name, kind: AuditKind::Statistical, check: Box::new(check) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditResult {
    pub name: &'static str,
    pub kind: AuditKind,
    pub checked: usize,
    pub violations: usize,
}

impl AuditResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn audit(&self, audit: &Audit) -> AuditResult {
        let mut checked = 0;
        let mut violations = 0;
        for cells in &self.rows {
            let row = Row { columns: &self.columns, cells };
            if let Some(ok) = (audit.check)(&row) {
                checked += 1;
                if !ok {
                    violations += 1;
                }
            }
        }
        AuditResult { name: audit.name, kind: audit.kind, checked, violations }
    }
}

/// A finished experiment: rows plus the audits evaluated on them.
pub struct Report {
    pub table: Table,
    pub audits: Vec<AuditResult>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(table: Table, audits: &[Audit], notes: Vec<String>) -> Self {
        let audits = audits.iter().map(|a| table.audit(a)).collect();
        Report { table, audits, notes }
    }

    pub fn passed(&self) -> bool {
        self.audits.iter().all(AuditResult::passed)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.table.columns).expect("in-memory write");
        for row in &self.table.rows {
            w.write_record(row.iter().map(Cell::csv)).expect("in-memory write");
        }
        let mut out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells");
        for a in &self.audits {
            out.push_str(&format!(
                "# audit {} {} checked={} violations={} {}\n",
                a.name,
                a.kind.name(),
                a.checked,
                a.violations,
                if a.passed() { "pass" } else { "fail" }
            ));
        }
        for note in &self.notes {
            out.push_str(&format!("# note {note}\n"));
        }
        out.push_str(&format!("# summary {}\n", if self.passed() { "pass" } else { "fail" }));
        out
    }

    pub fn to_json(&self, config: Value) -> String {
        let rows: Vec<Value> = self
            .table
            .rows
            .iter()
            .map(|cells| {
                let obj: Map<String, Value> = self
                    .table
                    .columns
                    .iter()
                    .cloned()
                    .zip(cells.iter().map(Cell::json))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let audits: Vec<Value> = self
            .audits
            .iter()
            .map(|a| {
                let mut m = Map::new();
                m.insert("name".into(), Value::from(a.name));
                m.insert("kind".into(), Value::from(a.kind.name()));
                m.insert("checked".into(), Value::from(a.checked));
                m.insert("violations".into(), Value::from(a.violations));
                m.insert("passed".into(), Value::from(a.passed()));
                Value::Object(m)
            })
            .collect();
        let mut summary = Map::new();
        summary.insert("audits".into(), Value::from(audits));
        summary.insert("notes".into(), Value::from(self.notes.clone()));
        summary.insert("passed".into(), Value::from(self.passed()));
        let mut top = Map::new();
        top.insert("config".into(), config);
        top.insert("columns".into(), Value::from(self.table.columns.clone()));
        top.insert("rows".into(), Value::from(rows));
        top.insert("summary".into(), Value::Object(summary));
        let mut s = to_json_string(&Value::Object(top));
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["n", "value", "bound", "mode"]);
        t.push(vec![Cell::from(2usize), Cell::from(0.5), Cell::from(1.0), Cell::from("exact")]);
        t.push(vec![Cell::from(3usize), Cell::from(2.0), Cell::from(1.0), Cell::from("a,b")]);
        t.push(vec![Cell::from(4usize), Cell::from(0.1), Cell::Empty, Cell::from("exact")]);
        t
    }

    #[test]
    fn audits_skip_rows_without_bounds() {
        let t = sample();
        let a = Audit::exact("value_le_bound", |r| Some(r.get("value")? <= r.get("bound")?));
        let res = t.audit(&a);
        assert_eq!((res.checked, res.violations), (2, 1));
    }

    #[test]
    fn csv_has_header_rows_and_summary() {
        let rep = Report::new(sample(), &[Audit::exact("never", |_| Some(true))], vec!["hello".into()]);
        let text = rep.to_csv();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,value,bound,mode");
        assert_eq!(lines[1], "2,5.0000000000000000e-1,1.0000000000000000e0,exact");
        assert_eq!(lines[2], "3,2.0000000000000000e0,1.0000000000000000e0,\"a,b\"");
        assert_eq!(lines[3], "4,1.0000000000000001e-1,,exact");
        assert_eq!(lines[4], "# audit never exact checked=3 violations=0 pass");
        assert_eq!(lines[5], "# note hello");
        assert_eq!(lines[6], "# summary pass");
    }

    #[test]
    fn json_rows_are_objects() {
        let rep = Report::new(sample(), &[], vec![]);
        let v: Value = serde_json::from_str(&rep.to_json(Value::Null)).unwrap();
        assert_eq!(v["rows"][1]["value"], Value::from(2.0));
        assert_eq!(v["rows"][2]["bound"], Value::Null);
        assert_eq!(v["summary"]["passed"], Value::from(true));
    }
}
