use serde_json::{Map, Value};

use crate::config::{Format, RunConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(&'static str),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&'static str> for Cell {
    fn from(v: &'static str) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(*s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// CSV with the resolved config as `# `-prefixed TOML, or a JSON document
/// `{config, columns, rows}`.
pub fn render(config: &RunConfig, table: &Table) -> String {
    match config.output.format {
        Format::Csv => {
            let mut out = String::new();
            for line in config.to_toml().lines() {
                out.push_str("# ");
                out.push_str(line);
                out.push('\n');
            }
            out.push_str(&table.columns.join(","));
            out.push('\n');
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|row| {
                    let mut m = Map::new();
                    for (name, cell) in table.columns.iter().zip(row) {
                        m.insert(name.to_string(), cell.json());
                    }
                    Value::Object(m)
                })
                .collect();
            let mut doc = Map::new();
            doc.insert("config".into(), serde_json::to_value(config).expect("config serializes"));
            doc.insert("columns".into(), Value::from(table.columns.clone()));
            doc.insert("rows".into(), Value::Array(rows));
            let mut s = serde_json::to_string_pretty(&Value::Object(doc)).expect("json serializes");
            s.push('\n');
            s
        }
    }
}
