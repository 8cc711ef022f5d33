//! Tables and their CSV / JSON rendering.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Number, Value};

use crate::CliError;

pub const SCHEMA_VERSION: u64 = 1;

/// Per-threshold output: aligned columns indexed by `n = 0..=n_max`, extra
/// JSON fields and comment lines.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub x: f64,
    /// Name of the row index; `n` unless set.
    pub index: Option<&'static str>,
    pub columns: Vec<Column>,
    pub extra: Map<String, Value>,
    pub footer: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
    /// Whether the column holds probabilities (plotted), not errors.
    pub is_u: bool,
}

impl Report {
    pub fn new(x: f64) -> Self {
        Self {
            x,
            ..Self::default()
        }
    }

    pub fn push_u(&mut self, name: &str, values: Vec<f64>) {
        self.columns.push(Column {
            name: name.into(),
            values,
            is_u: true,
        });
    }

    pub fn push_aux(&mut self, name: &str, values: Vec<f64>) {
        self.columns.push(Column {
            name: name.into(),
            values,
            is_u: false,
        });
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    fn index_name(&self) -> &'static str {
        self.index.unwrap_or("n")
    }

    fn rows(&self) -> usize {
        self.columns.iter().map(|c| c.values.len()).max().unwrap_or(0)
    }
}

/// 17 significant digits; non-finite values become `null`.
pub fn json_num(v: f64) -> Value {
    if v.is_finite() {
        Value::Number(Number::from_str(&format!("{v:.16e}")).expect("formatted float is valid JSON"))
    } else {
        Value::Null
    }
}

pub fn json_complex(re: f64, im: f64) -> Value {
    Value::Array(vec![json_num(re), json_num(im)])
}

/// 10 significant digits, fixed notation for moderate magnitudes.
pub fn csv_num(v: f64) -> String {
    if !v.is_finite() {
        return "nan".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.9e}")
    }
}

pub fn render_csv(reports: &[Report], with_x: bool) -> String {
    let mut out = String::new();
    let Some(first) = reports.first() else {
        return out;
    };
    let mut header: Vec<String> = Vec::new();
    if with_x {
        header.push("x".into());
    }
    header.push(first.index_name().into());
    header.extend(first.columns.iter().map(|c| c.name.clone()));
    out.push_str(&header.join(","));
    out.push('\n');
    for r in reports {
        for i in 0..r.rows() {
            let mut row: Vec<String> = Vec::new();
            if with_x {
                row.push(csv_num(r.x));
            }
            row.push(i.to_string());
            for c in &r.columns {
                row.push(c.values.get(i).map(|v| csv_num(*v)).unwrap_or_default());
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        for f in &r.footer {
            out.push_str("# ");
            out.push_str(f);
            out.push('\n');
        }
    }
    out
}

fn report_json(r: &Report) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("x".into(), json_num(r.x));
    m.insert(
        r.index_name().into(),
        Value::Array((0..r.rows()).map(|i| Value::from(i as u64)).collect()),
    );
    for c in &r.columns {
        m.insert(c.name.clone(), Value::Array(c.values.iter().map(|v| json_num(*v)).collect()));
    }
    for (k, v) in &r.extra {
        m.insert(k.clone(), v.clone());
    }
    if !r.footer.is_empty() {
        m.insert(
            "notes".into(),
            Value::Array(r.footer.iter().map(|s| Value::String(s.clone())).collect()),
        );
    }
    m
}

/// A single threshold gives a flat object; a sweep nests one object per
/// threshold under `runs`.
pub fn render_json(header: Map<String, Value>, reports: &[Report], sweep: bool) -> String {
    let mut top = Map::new();
    top.insert("schema".into(), Value::from(SCHEMA_VERSION));
    top.extend(header);
    if sweep {
        top.insert(
            "runs".into(),
            Value::Array(reports.iter().map(|r| Value::Object(report_json(r))).collect()),
        );
    } else if let Some(r) = reports.first() {
        top.extend(report_json(r));
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(top)).expect("JSON values serialise");
    s.push('\n');
    s
}

/// Long format `n,u,method` (with a leading `x` for sweeps).
pub fn render_plot_data(reports: &[Report], with_x: bool) -> String {
    let mut out = String::from(if with_x { "x,n,u,method\n" } else { "n,u,method\n" });
    for r in reports {
        for c in r.columns.iter().filter(|c| c.is_u) {
            for (n, v) in c.values.iter().enumerate() {
                if with_x {
                    out.push_str(&csv_num(r.x));
                    out.push(',');
                }
                out.push_str(&format!("{n},{},{}\n", csv_num(*v), c.name));
            }
        }
    }
    out
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(contents.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_digits() {
        assert_eq!(csv_num(0.5), "0.5");
        assert_eq!(csv_num(1.0 / 3.0), "0.3333333333");
        assert_eq!(csv_num(123.456), "123.456");
        assert_eq!(csv_num(1.5e-9), "1.500000000e-9");
        assert_eq!(csv_num(-2.0), "-2");
    }

    #[test]
    fn json_digits() {
        assert_eq!(json_num(0.1).to_string(), "1.0000000000000001e-1");
        assert_eq!(json_num(f64::NAN), Value::Null);
    }
}
