/// Plain aligned text table. Columns holding numbers are right-aligned.
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }

    pub fn render(&self) -> String {
        let n = self.headers.len();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        let mut numeric = vec![true; n];
        for row in &self.rows {
            for (j, cell) in row.iter().enumerate().take(n) {
                widths[j] = widths[j].max(cell.chars().count());
                if !is_number(cell) {
                    numeric[j] = false;
                }
            }
        }
        let fmt_row = |cells: &[String]| {
            let parts: Vec<String> = (0..n)
                .map(|j| {
                    let c = cells.get(j).map(String::as_str).unwrap_or("");
                    if numeric[j] && !self.rows.is_empty() {
                        format!("{c:>w$}", w = widths[j])
                    } else {
                        format!("{c:<w$}", w = widths[j])
                    }
                })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = fmt_row(&self.headers);
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        out
    }
}

fn is_number(s: &str) -> bool {
    s.is_empty() || s == "-" || s == "inf" || s.parse::<f64>().is_ok()
}

pub fn num(x: f64, places: usize) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.places$}")
    }
}

pub fn opt(x: Option<f64>, places: usize) -> String {
    x.map_or_else(|| "-".into(), |v| num(v, places))
}
