//! Plain-text and JSON report documents.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Content {
    Text(Vec<String>),
    Table(Table),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub content: Content,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportDocument {
    pub sections: Vec<Section>,
}

impl ReportDocument {
    pub fn text<S: Into<String>>(&mut self, title: &str, lines: impl IntoIterator<Item = S>) {
        self.sections.push(Section {
            title: title.into(),
            content: Content::Text(lines.into_iter().map(Into::into).collect()),
        });
    }

    pub fn table(&mut self, title: &str, headers: &[&str], rows: Vec<Vec<String>>) {
        self.sections.push(Section {
            title: title.into(),
            content: Content::Table(Table {
                headers: headers.iter().map(|h| h.to_string()).collect(),
                rows,
            }),
        });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Tables render with the first column left-aligned and the rest right-aligned.
    pub fn render_plain(&self) -> String {
        let mut out = String::new();
        for (i, section) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&section.title);
            out.push('\n');
            out.push_str(&"-".repeat(section.title.chars().count()));
            out.push('\n');
            match &section.content {
                Content::Text(lines) => {
                    for l in lines {
                        out.push_str(l);
                        out.push('\n');
                    }
                }
                Content::Table(t) => render_table(&mut out, t),
            }
        }
        out
    }
}

fn render_table(out: &mut String, t: &Table) {
    let cols = t.headers.len();
    let mut widths: Vec<usize> = t.headers.iter().map(|h| h.chars().count()).collect();
    for row in &t.rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |out: &mut String, cells: &[String]| {
        let mut parts = Vec::with_capacity(cols);
        for (j, w) in widths.iter().enumerate() {
            let cell = cells.get(j).map(String::as_str).unwrap_or("");
            parts.push(if j == 0 {
                format!("{cell:<w$}")
            } else {
                format!("{cell:>w$}")
            });
        }
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(out, &t.headers);
    for row in &t.rows {
        line(out, row);
    }
}

/// Fixed decimals.
pub fn fixed(x: f64, decimals: usize) -> String {
    format!("{x:.decimals$}")
}

/// Four significant figures; scientific below 1e-4, floored at the
/// smallest p-value worth printing.
pub fn p_value(p: f64) -> String {
    if p.is_nan() {
        return "NA".into();
    }
    if p < 2.2e-16 {
        return "< 2.2e-16".into();
    }
    if p < 1e-4 {
        return scientific(p, 3);
    }
    let magnitude = p.log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    format!("{p:.decimals$}")
}

/// `d.ddde-XX` style with a signed two-digit exponent.
pub fn scientific(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn significance_stars(p: f64) -> &'static str {
    match p {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        p if p < 0.1 => ".",
        _ => "",
    }
}
