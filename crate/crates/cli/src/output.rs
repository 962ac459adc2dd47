//! Tables rendered as CSV or JSON lines, preceded by a header block.

use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    B(bool),
    Null,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::U(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::U(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::B(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Null, Cell::F)
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(x) => format_float(*x),
            Cell::U(x) => x.to_string(),
            Cell::B(b) => b.to_string(),
            Cell::Null => String::new(),
            Cell::S(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::S(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            // shortest round-trip representation; JSON has no NaN or infinity
            Cell::F(x) if x.is_finite() => Value::from(*x),
            Cell::F(_) | Cell::Null => Value::Null,
            Cell::U(x) => Value::from(*x),
            Cell::B(b) => Value::Bool(*b),
            Cell::S(s) => Value::String(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self { name, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub version: &'static str,
    pub command: String,
    pub base_seed: u64,
    /// Resolved configuration, in lookup order.
    pub config: Vec<(String, String)>,
    /// Command-specific scalar results, e.g. the critical temperature.
    pub records: Vec<(String, Cell)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

pub fn render(header: &Header, tables: &[Table], format: Format) -> String {
    match format {
        Format::Csv => render_csv(header, tables),
        Format::Jsonl => render_jsonl(header, tables),
    }
}

fn render_csv(header: &Header, tables: &[Table]) -> String {
    let mut out = String::new();
    out.push_str(&format!("# remglass {}\n# command = {}\n# base_seed = {}\n", header.version, header.command, header.base_seed));
    for (k, v) in &header.config {
        out.push_str(&format!("# config.{k} = {v}\n"));
    }
    for (k, v) in &header.records {
        out.push_str(&format!("# record.{k} = {}\n", v.csv()));
    }
    for t in tables {
        out.push_str(&format!("# table = {}\n", t.name));
        out.push_str(&t.columns.join(","));
        out.push('\n');
        for row in &t.rows {
            out.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
    }
    out
}

fn render_jsonl(header: &Header, tables: &[Table]) -> String {
    let mut out = String::new();
    let mut h = Map::new();
    h.insert("record".into(), "header".into());
    h.insert("version".into(), header.version.into());
    h.insert("command".into(), header.command.clone().into());
    h.insert("base_seed".into(), header.base_seed.into());
    h.insert("config".into(), Value::Object(header.config.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect()));
    h.insert("records".into(), Value::Object(header.records.iter().map(|(k, v)| (k.clone(), v.json())).collect()));
    out.push_str(&Value::Object(h).to_string());
    out.push('\n');
    for t in tables {
        for row in &t.rows {
            let mut obj = Map::new();
            obj.insert("record".into(), "row".into());
            obj.insert("table".into(), t.name.into());
            for (c, v) in t.columns.iter().zip(row) {
                obj.insert((*c).into(), v.json());
            }
            out.push_str(&Value::Object(obj).to_string());
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Header, Vec<Table>) {
        let header = Header {
            version: "0.0.0",
            command: "solve".into(),
            base_seed: 5,
            config: vec![("beta".into(), "1.0,2.0".into())],
            records: vec![("beta_cr".into(), Cell::F(1.25))],
        };
        let mut t = Table::new("solutions", &["beta", "regime", "q_star"]);
        t.push(vec![Cell::F(1.0), "high".into(), Cell::Null]);
        t.push(vec![Cell::F(0.1), "low, really".into(), Cell::F(f64::NAN)]);
        (header, vec![t])
    }

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1.7976931348623157e308] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_layout() {
        let (h, t) = sample();
        let text = render(&h, &t, Format::Csv);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# remglass 0.0.0");
        assert!(lines.contains(&"# config.beta = 1.0,2.0"));
        assert!(lines.contains(&"# record.beta_cr = 1.2500000000000000e0"));
        assert!(lines.contains(&"beta,regime,q_star"));
        assert!(lines.contains(&"1.0000000000000000e0,high,"));
        assert!(lines.contains(&"1.0000000000000001e-1,\"low, really\",nan"));
    }

    #[test]
    fn jsonl_layout() {
        let (h, t) = sample();
        let text = render(&h, &t, Format::Jsonl);
        let recs: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0]["record"], "header");
        assert_eq!(recs[0]["records"]["beta_cr"], 1.25);
        assert_eq!(recs[1]["table"], "solutions");
        assert_eq!(recs[1]["q_star"], Value::Null);
        assert_eq!(recs[2]["q_star"], Value::Null);
        assert_eq!(recs[2]["beta"].as_f64().unwrap(), 0.1);
        let keys: Vec<&String> = recs[1].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["record", "table", "beta", "regime", "q_star"]);
    }
}
