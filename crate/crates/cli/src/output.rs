//! Self-describing result tables written as CSV or JSON.

use std::io::Write;

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            // shortest round-trip representation, locale independent
            Cell::Num(x) if x.is_nan() => "nan".into(),
            Cell::Num(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Num(x) => format!("{x:?}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) => Value::String(self.csv()),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub command: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    /// Ordered key/value metadata shared by every row.
    pub meta: Vec<(String, String)>,
}

impl Table {
    pub fn new(command: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            command: command.into(),
            columns: columns
                .iter()
                .map(|(n, u)| Column {
                    name: (*n).into(),
                    unit: (*u).into(),
                })
                .collect(),
            rows: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Metadata as `# key: value` lines, then the header row and the data.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# command: {}", self.command)?;
        for (k, v) in &self.meta {
            writeln!(w, "# {k}: {v}")?;
        }
        let units: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("{} [{}]", c.name, c.unit))
            .collect();
        writeln!(w, "# columns: {}", units.join(", "))?;
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(w, "{}", names.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let meta: Map<String, Value> = self
            .meta
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        json!({
            "command": self.command,
            "meta": meta,
            "columns": self.columns.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
            "units": self.columns.iter().map(|c| c.unit.clone()).collect::<Vec<_>>(),
            "rows": self
                .rows
                .iter()
                .map(|r| r.iter().map(Cell::json).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        })
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_json())?;
        writeln!(w)
    }
}
