//! In-memory CSV tables and optional gnuplot scripts.

use std::path::Path;

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn artifact(&self, name: &str, plot: Option<Plot>) -> Artifact {
        Artifact {
            name: name.to_string(),
            contents: self.to_csv(),
            plot,
        }
    }
}

/// A gnuplot recipe for one CSV: y columns against an x column.
#[derive(Debug, Clone)]
pub struct Plot {
    x: String,
    ys: Vec<String>,
    log: bool,
    mode_zero_only: bool,
}

impl Plot {
    pub fn lines(x: &str, ys: &[&str]) -> Self {
        Self {
            x: x.into(),
            ys: ys.iter().map(|s| s.to_string()).collect(),
            log: false,
            mode_zero_only: false,
        }
    }

    pub fn loglog(x: &str, ys: &[&str]) -> Self {
        Self {
            log: true,
            ..Self::lines(x, ys)
        }
    }

    /// Plot only rows whose `mode` column is 0.
    pub fn filter_mode(mut self) -> Self {
        self.mode_zero_only = true;
        self
    }

    pub fn script(&self, csv_name: &str) -> String {
        let stem = csv_name.trim_end_matches(".csv");
        let mut s = String::new();
        s.push_str("set datafile separator ','\n");
        s.push_str("set key autotitle columnhead\n");
        s.push_str(&format!("set terminal pngcairo size 800,600\nset output '{stem}.png'\n"));
        s.push_str(&format!("set xlabel '{}'\n", self.x));
        if self.log {
            s.push_str("set logscale xy 2\n");
        }
        let curves: Vec<String> = self
            .ys
            .iter()
            .map(|y| {
                let ycol = if self.mode_zero_only {
                    format!("(column('mode') == 0 ? column('{y}') : 1/0)")
                } else {
                    format!("(column('{y}'))")
                };
                format!("'{csv_name}' using (column('{}')):{ycol} with linespoints title '{y}'", self.x)
            })
            .collect();
        s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
        s
    }
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
    pub plot: Option<Plot>,
}

/// Writes every artifact (and its plot script when `plots`) into `dir`.
pub fn write_all(dir: &Path, artifacts: &[Artifact], plots: bool) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
        if let (true, Some(p)) = (plots, &a.plot) {
            let gp = a.name.trim_end_matches(".csv").to_string() + ".gp";
            std::fs::write(dir.join(gp), p.script(&a.name))?;
        }
    }
    Ok(())
}
