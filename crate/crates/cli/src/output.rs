//! Tables rendered as schema-tagged CSV or JSON, with fixed float format.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};
use serde_json::{Map, Value};

use crate::config::Format;

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits, `.` decimal point.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Empty,
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Empty => String::new(),
            Cell::Str(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => float(*x),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Empty => Value::Null,
            Cell::Str(s) => Value::String(s.clone()),
            Cell::Int(i) => Value::from(*i),
            Cell::Float(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Bool(b) => Value::Bool(*b),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.into())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

macro_rules! int_cell {
    ($($t:ty),*) => {$(
        impl From<$t> for Cell {
            fn from(i: $t) -> Self {
                Cell::Int(i as i64)
            }
        }
    )*};
}
int_cell!(i64, u64, u32, usize);

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Rows keyed by a fixed column list.
#[derive(Debug, Clone)]
pub struct Table {
    pub schema: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// One row under construction; unset columns stay empty.
pub struct Row {
    columns: Vec<&'static str>,
    cells: Vec<Cell>,
}

impl Row {
    pub fn set(&mut self, column: &str, value: impl Into<Cell>) -> &mut Self {
        let k = self.columns.iter().position(|c| *c == column).unwrap_or_else(|| panic!("no column {column}"));
        self.cells[k] = value.into();
        self
    }
}

impl Table {
    pub fn new(schema: &'static str, columns: &[&'static str]) -> Self {
        Table { schema, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn row(&self) -> Row {
        Row { columns: self.columns.clone(), cells: vec![Cell::Empty; self.columns.len()] }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row.cells);
    }

    pub fn to_csv(&self, generated: Option<&str>) -> io::Result<Vec<u8>> {
        let mut buf = Vec::new();
        writeln!(buf, "# schema: {} v{SCHEMA_VERSION}", self.schema)?;
        if let Some(t) = generated {
            writeln!(buf, "# generated: {t}")?;
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv))?;
        }
        w.flush()?;
        drop(w);
        Ok(buf)
    }

    pub fn to_json(&self, generated: Option<&str>, config: &impl Serialize) -> io::Result<Vec<u8>> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj: Map<String, Value> =
                    self.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect();
                Value::Object(obj)
            })
            .collect();
        let mut doc = Map::new();
        doc.insert("schema".into(), Value::String(self.schema.into()));
        doc.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
        if let Some(t) = generated {
            doc.insert("generated".into(), Value::String(t.into()));
        }
        doc.insert("config".into(), serde_json::to_value(config).map_err(io::Error::other)?);
        doc.insert("columns".into(), Value::from(self.columns.clone()));
        doc.insert("rows".into(), Value::Array(rows));
        json_bytes(&Value::Object(doc))
    }

    pub fn render(&self, format: Format, generated: Option<&str>, config: &impl Serialize) -> io::Result<Vec<u8>> {
        match format {
            Format::Csv => self.to_csv(generated),
            Format::Json => self.to_json(generated, config),
        }
    }
}

/// Pretty JSON with every float printed to 17 significant digits.
struct FixedFloats(serde_json::ser::PrettyFormatter<'static>);

impl Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(float(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn json_bytes(value: &impl Serialize) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, FixedFloats(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(io::Error::other)?;
    buf.push(b'\n');
    Ok(buf)
}

/// Writes to `path`, or stdout when there is none.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> io::Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, bytes)
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(float(0.1), "1.0000000000000001e-1");
        assert_eq!(float(1.0), "1.0000000000000000e0");
        assert_eq!(float(f64::INFINITY), "inf");
        let s = float(std::f64::consts::PI);
        assert_eq!(s.parse::<f64>().unwrap(), std::f64::consts::PI);
    }

    #[test]
    fn csv_has_schema_line_and_quoting() {
        let mut t = Table::new("demo", &["a", "b"]);
        let mut r = t.row();
        r.set("a", "x,y").set("b", 2u32);
        t.push(r);
        t.push(t.row());
        let s = String::from_utf8(t.to_csv(None).unwrap()).unwrap();
        assert_eq!(s, "# schema: demo v1\na,b\n\"x,y\",2\n,\n");
    }

    #[test]
    fn json_floats_use_fixed_format() {
        let v = serde_json::json!({"x": 0.5, "n": 3, "bad": f64::NAN});
        let s = String::from_utf8(json_bytes(&v).unwrap()).unwrap();
        assert!(s.contains("\"x\": 5.0000000000000000e-1"), "{s}");
        assert!(s.contains("\"n\": 3"));
        assert!(s.contains("\"bad\": null"));
    }
}
