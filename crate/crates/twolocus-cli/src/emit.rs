//! Output plumbing: a small column-oriented table abstraction rendered as
//! CSV or JSON, and atomic file writes so a crashed run never leaves a
//! partial artifact behind.

use std::io::Write;
use std::path::Path;
use twolocus::error::{Error, Result};

/// Output format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (csv or json)")),
        }
    }
}

/// One cell of an output table.
#[derive(Debug, Clone)]
pub enum Field {
    Str(String),
    /// Floating-point value, printed with shortest round-trip formatting so
    /// reruns are byte-identical.
    Num(f64),
    Int(u64),
    Null,
}

/// A rectangular result table with named columns.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Render in the requested format; both carry identical values.
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn render_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(csv_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn render_json(&self) -> String {
        let mut records = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut obj = serde_json::Map::new();
            for (name, cell) in self.columns.iter().zip(row) {
                obj.insert(name.to_string(), json_cell(cell));
            }
            records.push(serde_json::Value::Object(obj));
        }
        let mut s = serde_json::to_string_pretty(&serde_json::Value::Array(records))
            .expect("tables serialize");
        s.push('\n');
        s
    }
}

fn csv_cell(f: &Field) -> String {
    match f {
        Field::Str(s) => {
            if s.contains(',') || s.contains('"') || s.contains('\n') {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        }
        Field::Num(v) => format!("{v}"),
        Field::Int(v) => format!("{v}"),
        Field::Null => String::new(),
    }
}

fn json_cell(f: &Field) -> serde_json::Value {
    match f {
        Field::Str(s) => serde_json::Value::String(s.clone()),
        Field::Num(v) => serde_json::Number::from_f64(*v)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null),
        Field::Int(v) => serde_json::Value::Number((*v).into()),
        Field::Null => serde_json::Value::Null,
    }
}

/// Write `content` to `path` atomically: stage in a sibling temporary file,
/// then rename over the destination.
pub fn atomic_write(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| Error::Invalid(format!("cannot stage output near {}: {e}", path.display())))?;
    tmp.write_all(content.as_bytes())
        .map_err(|e| Error::Invalid(format!("write failed: {e}")))?;
    tmp.persist(path)
        .map_err(|e| Error::Invalid(format!("cannot move output into place: {e}")))?;
    Ok(())
}

/// Send rendered output to `--out` if given, else stdout.
pub fn deliver(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => atomic_write(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table() -> Table {
        let mut t = Table::new(vec!["rho", "method", "value", "note"]);
        t.push(vec![
            Field::Num(50.0),
            Field::Str("pade:5".into()),
            Field::Num(0.125),
            Field::Null,
        ]);
        t.push(vec![
            Field::Num(0.5),
            Field::Str("a,b".into()),
            Field::Null,
            Field::Str("pole".into()),
        ]);
        t
    }

    #[test]
    fn csv_quotes_and_nulls() {
        let csv = sample_table().render(Format::Csv);
        assert_eq!(
            csv,
            "rho,method,value,note\n50,pade:5,0.125,\n0.5,\"a,b\",,pole\n"
        );
    }

    #[test]
    fn json_matches_csv_values() {
        let json = sample_table().render(Format::Json);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v[0]["value"].as_f64().unwrap(), 0.125);
        assert!(v[1]["value"].is_null());
        assert_eq!(v[1]["method"], "a,b");
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        atomic_write(&path, "first\n").unwrap();
        atomic_write(&path, "second\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second\n");
    }
}
