//! Table reformulation of a series and its four text grammars.
//!
//! Every grammar is byte-exact and uses `\n` as the line separator:
//!
//! * DFLoader: `pd.DataFrame({`, one `"<name>": [v1, v2, ...],` line per
//!   column starting with `time`, then `})`. Column oriented.
//! * Markdown: header row, `| --- |` separator row, one row per time step.
//! * JSON: a single-line array of row objects with keys `time, c1..cm`.
//! * HTML: a single-line `<table>` with `<thead>` and `<tbody>`, no attributes.
//!
//! Numbers are written fixed-point with `precision` decimals, then trailing
//! zeros and a trailing decimal point are removed (`-0` is written as `0`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Series, TimeSeriesSample};
use crate::error::TableError;

pub const DEFAULT_PRECISION: usize = 4;
const DFLOADER_OPEN: &str = "pd.DataFrame({";
const DFLOADER_CLOSE: &str = "})";

/// The augmented table: a time column plus one named column per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TableDocument {
    pub time_index: Vec<String>,
    pub channel_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl TableDocument {
    pub fn new(time_index: Vec<String>, channel_names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self, TableError> {
        let doc = Self { time_index, channel_names, values };
        doc.validate()?;
        Ok(doc)
    }

    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<(), TableError> {
        let (t, m) = (self.values.len(), self.channel_names.len());
        if t == 0 || m == 0 {
            return Err(TableError::Shape("table needs at least one row and one channel".into()));
        }
        if self.time_index.len() != t {
            return Err(TableError::Shape(format!("{} time labels for {t} rows", self.time_index.len())));
        }
        if let Some(dup) = self.channel_names.iter().enumerate().find_map(|(i, n)| self.channel_names[..i].contains(n).then_some(n)) {
            return Err(TableError::Shape(format!("duplicate channel name '{dup}'")));
        }
        if self.channel_names.iter().any(|n| n == "time") {
            return Err(TableError::Shape("channel name 'time' collides with the time column".into()));
        }
        if let Some(row) = self.values.iter().find(|r| r.len() != m) {
            return Err(TableError::Shape(format!("row of {} values for {m} channels", row.len())));
        }
        let numeric: Option<Vec<f64>> = self.time_index.iter().map(|s| s.parse::<f64>().ok()).collect();
        if let Some(ts) = numeric {
            if ts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(TableError::Shape("numeric time index must be strictly increasing".into()));
            }
        }
        Ok(())
    }
}

/// Builds the table for a sample with time labels `0..t-1`.
pub fn to_table(sample: &TimeSeriesSample, channel_names: &[String]) -> Result<TableDocument, TableError> {
    series_to_table(&sample.values, channel_names)
}

pub fn series_to_table(series: &Series, channel_names: &[String]) -> Result<TableDocument, TableError> {
    if channel_names.len() != series.channels() {
        return Err(TableError::NameCount { expected: series.channels(), got: channel_names.len() });
    }
    TableDocument::new(
        (0..series.len()).map(|i| i.to_string()).collect(),
        channel_names.to_vec(),
        series.rows().map(<[f64]>::to_vec).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatKind {
    DfLoader,
    Markdown,
    Json,
    Html,
}

impl FormatKind {
    pub const ALL: [FormatKind; 4] = [FormatKind::DfLoader, FormatKind::Markdown, FormatKind::Json, FormatKind::Html];

    pub fn as_str(self) -> &'static str {
        match self {
            FormatKind::DfLoader => "dfloader",
            FormatKind::Markdown => "markdown",
            FormatKind::Json => "json",
            FormatKind::Html => "html",
        }
    }
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatKind {
    type Err = TableError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dfloader" => Ok(FormatKind::DfLoader),
            "markdown" | "md" => Ok(FormatKind::Markdown),
            "json" => Ok(FormatKind::Json),
            "html" => Ok(FormatKind::Html),
            _ => Err(TableError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableFormat {
    pub kind: FormatKind,
    pub float_precision: usize,
}

impl TableFormat {
    pub fn new(kind: FormatKind) -> Self {
        Self { kind, float_precision: DEFAULT_PRECISION }
    }

    pub fn with_precision(kind: FormatKind, float_precision: usize) -> Self {
        Self { kind, float_precision: float_precision.max(1) }
    }
}

/// Fixed-point with `precision` decimals, trailing zeros and point trimmed.
pub fn format_float(v: f64, precision: usize) -> String {
    let mut s = format!("{v:.precision$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Time labels that parse as numbers are emitted bare, others as JSON strings.
fn time_token(label: &str) -> String {
    if label.parse::<f64>().is_ok() {
        label.to_string()
    } else {
        json_string(label)
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn md_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('|', "\\|")
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn serialize(table: &TableDocument, format: TableFormat) -> String {
    let p = format.float_precision;
    let num = |v: f64| format_float(v, p);
    match format.kind {
        FormatKind::DfLoader => {
            let mut lines = Vec::with_capacity(table.channel_names.len() + 3);
            lines.push(DFLOADER_OPEN.to_string());
            let times: Vec<String> = table.time_index.iter().map(|t| time_token(t)).collect();
            lines.push(format!("\"time\": [{}],", times.join(", ")));
            for (j, name) in table.channel_names.iter().enumerate() {
                let col: Vec<String> = table.values.iter().map(|r| num(r[j])).collect();
                lines.push(format!("{}: [{}],", json_string(name), col.join(", ")));
            }
            lines.push(DFLOADER_CLOSE.to_string());
            lines.join("\n")
        }
        FormatKind::Markdown => {
            let mut lines = Vec::with_capacity(table.rows() + 2);
            let header: Vec<String> = std::iter::once("time".to_string()).chain(table.channel_names.iter().map(|c| md_escape(c))).collect();
            lines.push(format!("| {} |", header.join(" | ")));
            lines.push(format!("|{}", " --- |".repeat(header.len())));
            for (t, row) in table.time_index.iter().zip(&table.values) {
                let cells: Vec<String> = std::iter::once(md_escape(t)).chain(row.iter().map(|&v| num(v))).collect();
                lines.push(format!("| {} |", cells.join(" | ")));
            }
            lines.join("\n")
        }
        FormatKind::Json => {
            let keys: Vec<String> = table.channel_names.iter().map(|c| json_string(c)).collect();
            let rows: Vec<String> = table
                .time_index
                .iter()
                .zip(&table.values)
                .map(|(t, row)| {
                    let mut fields = vec![format!("\"time\": {}", time_token(t))];
                    fields.extend(keys.iter().zip(row).map(|(k, &v)| format!("{k}: {}", num(v))));
                    format!("{{{}}}", fields.join(", "))
                })
                .collect();
            format!("[{}]", rows.join(", "))
        }
        FormatKind::Html => {
            let mut out = String::from("<table><thead><tr><th>time</th>");
            for c in &table.channel_names {
                out.push_str(&format!("<th>{}</th>", html_escape(c)));
            }
            out.push_str("</tr></thead><tbody>");
            for (t, row) in table.time_index.iter().zip(&table.values) {
                out.push_str(&format!("<tr><td>{}</td>", html_escape(t)));
                for &v in row {
                    out.push_str(&format!("<td>{}</td>", num(v)));
                }
                out.push_str("</tr>");
            }
            out.push_str("</tbody></table>");
            out
        }
    }
}

/// Rough token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn grammar(msg: impl Into<String>) -> TableError {
    TableError::Grammar(msg.into())
}

fn parse_number(s: &str) -> Result<f64, TableError> {
    s.trim().parse::<f64>().map_err(|_| grammar(format!("invalid number '{}'", s.trim())))
}

/// Recovers a table from text produced by [`serialize`] with the same format.
pub fn parse_table(text: &str, format: TableFormat) -> Result<TableDocument, TableError> {
    if text.trim().is_empty() {
        return Err(grammar("empty input"));
    }
    let doc = match format.kind {
        FormatKind::DfLoader => parse_dfloader(text)?,
        FormatKind::Markdown => parse_markdown(text)?,
        FormatKind::Json => parse_json(text)?,
        FormatKind::Html => parse_html(text)?,
    };
    doc.validate().map_err(|e| grammar(e.to_string()))?;
    Ok(doc)
}

fn parse_dfloader(text: &str) -> Result<TableDocument, TableError> {
    let lines: Vec<&str> = text.split('\n').collect();
    if lines.len() < 4 || lines[0] != DFLOADER_OPEN || lines[lines.len() - 1] != DFLOADER_CLOSE {
        return Err(grammar("expected pd.DataFrame({ ... }) framing"));
    }
    let mut columns: Vec<(String, Vec<String>)> = Vec::new();
    for line in &lines[1..lines.len() - 1] {
        let body = line.strip_suffix("],").ok_or_else(|| grammar(format!("column line must end with '],': {line}")))?;
        let split = body.find(": [").ok_or_else(|| grammar(format!("missing ': [' in {line}")))?;
        let name: String = serde_json::from_str(&body[..split]).map_err(|e| grammar(format!("bad column name: {e}")))?;
        let list = &body[split + 3..];
        let items: Vec<String> = if list.is_empty() { Vec::new() } else { split_list(list)? };
        columns.push((name, items));
    }
    let (first, rest) = columns.split_first().ok_or_else(|| grammar("no columns"))?;
    if first.0 != "time" {
        return Err(grammar("first column must be 'time'"));
    }
    let t = first.1.len();
    let time_index = first.1.iter().map(|s| unquote_time(s)).collect::<Result<Vec<_>, _>>()?;
    let mut values = vec![Vec::with_capacity(rest.len()); t];
    for (name, col) in rest {
        if col.len() != t {
            return Err(grammar(format!("column '{name}' has {} values, expected {t}", col.len())));
        }
        for (row, v) in values.iter_mut().zip(col) {
            row.push(parse_number(v)?);
        }
    }
    Ok(TableDocument { time_index, channel_names: rest.iter().map(|(n, _)| n.clone()).collect(), values })
}

/// Splits a `, `-separated list whose items are numbers or JSON strings.
fn split_list(list: &str) -> Result<Vec<String>, TableError> {
    let mut items = Vec::new();
    let mut cur = String::new();
    let mut in_str = false;
    let mut escaped = false;
    for ch in list.chars() {
        if in_str {
            cur.push(ch);
            match (escaped, ch) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
        } else if ch == ',' {
            items.push(std::mem::take(&mut cur).trim().to_string());
        } else {
            if ch == '"' {
                in_str = true;
            }
            cur.push(ch);
        }
    }
    if in_str {
        return Err(grammar("unterminated string"));
    }
    items.push(cur.trim().to_string());
    Ok(items)
}

fn unquote_time(token: &str) -> Result<String, TableError> {
    if token.starts_with('"') {
        serde_json::from_str(token).map_err(|e| grammar(format!("bad time label: {e}")))
    } else {
        parse_number(token)?;
        Ok(token.to_string())
    }
}

fn md_cells(line: &str) -> Result<Vec<String>, TableError> {
    let inner = line
        .strip_prefix("| ")
        .and_then(|l| l.strip_suffix(" |"))
        .ok_or_else(|| grammar(format!("markdown row must be framed by '| ' and ' |': {line}")))?;
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = inner.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '\\' => cur.push(chars.next().ok_or_else(|| grammar("dangling escape"))?),
            '|' => {
                let cell = std::mem::take(&mut cur);
                cells.push(cell.strip_suffix(' ').unwrap_or(&cell).to_string());
                if chars.next() != Some(' ') {
                    return Err(grammar("cells must be separated by ' | '"));
                }
            }
            _ => cur.push(ch),
        }
    }
    cells.push(cur);
    Ok(cells)
}

fn parse_markdown(text: &str) -> Result<TableDocument, TableError> {
    let lines: Vec<&str> = text.split('\n').collect();
    if lines.len() < 3 {
        return Err(grammar("markdown table needs header, separator and rows"));
    }
    let header = md_cells(lines[0])?;
    if header.first().map(String::as_str) != Some("time") || header.len() < 2 {
        return Err(grammar("header must start with 'time'"));
    }
    if lines[1] != format!("|{}", " --- |".repeat(header.len())) {
        return Err(grammar("bad separator row"));
    }
    let mut time_index = Vec::new();
    let mut values = Vec::new();
    for line in &lines[2..] {
        let cells = md_cells(line)?;
        if cells.len() != header.len() {
            return Err(grammar(format!("row has {} cells, expected {}", cells.len(), header.len())));
        }
        time_index.push(cells[0].clone());
        values.push(cells[1..].iter().map(|c| parse_number(c)).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(TableDocument { time_index, channel_names: header[1..].to_vec(), values })
}

fn parse_json(text: &str) -> Result<TableDocument, TableError> {
    let rows: Vec<serde_json::Map<String, serde_json::Value>> =
        serde_json::from_str(text).map_err(|e| grammar(format!("invalid json: {e}")))?;
    let first = rows.first().ok_or_else(|| grammar("empty row array"))?;
    let keys: Vec<String> = first.keys().cloned().collect();
    if keys.first().map(String::as_str) != Some("time") {
        return Err(grammar("first key must be 'time'"));
    }
    let mut time_index = Vec::new();
    let mut values = Vec::new();
    for row in &rows {
        if row.keys().ne(keys.iter()) {
            return Err(grammar("rows disagree on keys"));
        }
        time_index.push(match &row["time"] {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(grammar(format!("bad time value {other}"))),
        });
        values.push(
            keys[1..]
                .iter()
                .map(|k| row[k].as_f64().ok_or_else(|| grammar(format!("non-numeric value for '{k}'"))))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(TableDocument { time_index, channel_names: keys[1..].to_vec(), values })
}

fn html_unescape(s: &str) -> String {
    s.replace("&lt;", "<").replace("&gt;", ">").replace("&amp;", "&")
}

/// Extracts the contents of consecutive `<tag>...</tag>` elements.
fn html_elements<'a>(mut s: &'a str, tag: &str) -> Result<Vec<&'a str>, TableError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut out = Vec::new();
    while !s.is_empty() {
        let rest = s.strip_prefix(open.as_str()).ok_or_else(|| grammar(format!("expected {open}")))?;
        let end = rest.find(close.as_str()).ok_or_else(|| grammar(format!("missing {close}")))?;
        out.push(&rest[..end]);
        s = &rest[end + close.len()..];
    }
    Ok(out)
}

fn parse_html(text: &str) -> Result<TableDocument, TableError> {
    let body = text
        .strip_prefix("<table><thead>")
        .and_then(|s| s.strip_suffix("</tbody></table>"))
        .ok_or_else(|| grammar("expected <table><thead>...</tbody></table>"))?;
    let (head, rows) = body.split_once("</thead><tbody>").ok_or_else(|| grammar("missing </thead><tbody>"))?;
    let head_rows = html_elements(head, "tr")?;
    let [head_row] = head_rows.as_slice() else {
        return Err(grammar("thead must hold exactly one row"));
    };
    let header: Vec<String> = html_elements(head_row, "th")?.into_iter().map(html_unescape).collect();
    if header.first().map(String::as_str) != Some("time") || header.len() < 2 {
        return Err(grammar("header must start with 'time'"));
    }
    let mut time_index = Vec::new();
    let mut values = Vec::new();
    for row in html_elements(rows, "tr")? {
        let cells = html_elements(row, "td")?;
        if cells.len() != header.len() {
            return Err(grammar(format!("row has {} cells, expected {}", cells.len(), header.len())));
        }
        time_index.push(html_unescape(cells[0]));
        values.push(cells[1..].iter().map(|c| parse_number(c)).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(TableDocument { time_index, channel_names: header[1..].to_vec(), values })
}
