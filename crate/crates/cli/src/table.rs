//! Plain-text, TSV and JSON rendering of row data.

use std::io::{self, Write};

use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned columns.
    Table,
    /// Tab-separated, header first.
    Tsv,
    /// One JSON array of objects.
    Json,
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.headers.len());
        self.rows.push(cells);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, out: &mut dyn Write, format: Format) -> io::Result<()> {
        match format {
            Format::Table => {
                let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
                for r in &self.rows {
                    for (w, c) in widths.iter_mut().zip(r) {
                        *w = (*w).max(c.chars().count());
                    }
                }
                let line = |cells: &[String]| {
                    let padded: Vec<String> =
                        cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}", w = *w)).collect();
                    padded.join("  ").trim_end().to_string()
                };
                writeln!(out, "{}", line(&self.headers))?;
                for r in &self.rows {
                    writeln!(out, "{}", line(r))?;
                }
            }
            Format::Tsv => {
                writeln!(out, "{}", self.headers.join("\t"))?;
                for r in &self.rows {
                    writeln!(out, "{}", r.join("\t"))?;
                }
            }
            Format::Json => {
                let objects: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let m: Map<String, Value> = self
                            .headers
                            .iter()
                            .zip(r)
                            .map(|(h, c)| (h.to_lowercase(), Value::String(c.clone())))
                            .collect();
                        Value::Object(m)
                    })
                    .collect();
                writeln!(out, "{}", Value::Array(objects))?;
            }
        }
        Ok(())
    }
}

/// Key/value pairs, rendered as a two-column table.
pub fn pairs(out: &mut dyn Write, format: Format, items: &[(&str, String)]) -> io::Result<()> {
    let mut t = Table::new(&["FIELD", "VALUE"]);
    for (k, v) in items {
        t.row(vec![k.to_string(), v.clone()]);
    }
    t.write(out, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(t: &Table, f: Format) -> String {
        let mut buf = Vec::new();
        t.write(&mut buf, f).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn aligned_and_tab_separated() {
        let mut t = Table::new(&["MAC", "RSSI"]);
        t.row(vec!["C0:7A:00:00:00:01".into(), "-45".into()]);
        t.row(vec!["x".into(), "-100".into()]);
        assert_eq!(render(&t, Format::Table), "MAC                RSSI\nC0:7A:00:00:00:01  -45\nx                  -100\n");
        assert_eq!(render(&t, Format::Tsv), "MAC\tRSSI\nC0:7A:00:00:00:01\t-45\nx\t-100\n");
        assert_eq!(
            render(&t, Format::Json),
            "[{\"mac\":\"C0:7A:00:00:00:01\",\"rssi\":\"-45\"},{\"mac\":\"x\",\"rssi\":\"-100\"}]\n"
        );
    }
}
