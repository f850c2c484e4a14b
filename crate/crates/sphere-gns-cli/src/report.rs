//! Output assembly: every command produces a metadata object plus a
//! rectangular table, rendered as CSV with a `#`-prefixed JSON header
//! line or as a single JSON document.

use crate::config::OutputFormat;

pub struct Report {
    pub metadata: serde_json::Value,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<serde_json::Value>>,
}

fn csv_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.replace(',', ";"),
        other => other.to_string(),
    }
}

impl Report {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => {
                let mut out = String::new();
                out.push_str("# ");
                out.push_str(&self.metadata.to_string());
                out.push('\n');
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(csv_cell).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            OutputFormat::Json => {
                let doc = serde_json::json!({
                    "metadata": self.metadata,
                    "columns": self.columns,
                    "rows": self.rows,
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("serializable report");
                s.push('\n');
                s
            }
        }
    }
}
