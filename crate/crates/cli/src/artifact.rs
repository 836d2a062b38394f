//! Tabular run records written as CSV or JSON, with the resolved config
//! embedded.

use critlab::format::{f17, f17_json};

use crate::config::{ExperimentConfig, Format};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    B(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(x) => f17(*x),
            Cell::U(n) => n.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::F(x) => f17_json(*x),
            Cell::U(n) => n.to_string(),
            Cell::S(s) => json_str(s),
            Cell::B(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::U(n)
    }
}

impl From<u32> for Cell {
    fn from(n: u32) -> Self {
        Cell::U(n as u64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::B(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Vec<(&'static str, Cell)>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// CSV has its config as leading `# key=value` comment lines.
pub fn render(table: &Table, cfg: &ExperimentConfig) -> String {
    match cfg.format {
        Format::Csv => {
            let mut out = format!("# subcommand={}\n# seed={}\n", cfg.subcommand, cfg.seed);
            for (k, v) in &cfg.params {
                out += &format!("# {k}={v}\n");
            }
            for (k, v) in &table.summary {
                out += &format!("# result.{k}={}\n", v.csv());
            }
            out += &table.columns.join(",");
            out.push('\n');
            for row in &table.rows {
                out += &row.iter().map(Cell::csv).collect::<Vec<_>>().join(",");
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let params: Vec<String> = cfg.params.iter().map(|(k, v)| format!("{}: {}", json_str(k), json_str(v))).collect();
            let rows: Vec<String> = table
                .rows
                .iter()
                .map(|row| {
                    let fields: Vec<String> =
                        table.columns.iter().zip(row).map(|(c, v)| format!("\"{c}\": {}", v.json())).collect();
                    format!("    {{{}}}", fields.join(", "))
                })
                .collect();
            let rows = if rows.is_empty() { "[]".to_string() } else { format!("[\n{}\n  ]", rows.join(",\n")) };
            let summary: Vec<String> = table.summary.iter().map(|(k, v)| format!("\"{k}\": {}", v.json())).collect();
            format!(
                "{{\n  \"subcommand\": {},\n  \"seed\": {},\n  \"config\": {{{}}},\n  \"rows\": {},\n  \"summary\": {{{}}}\n}}\n",
                json_str(cfg.subcommand),
                cfg.seed,
                params.join(", "),
                rows,
                summary.join(", ")
            )
        }
    }
}
