//! Panel CSV files: an optional label column followed by the X block and
//! the Y block of ordinal codes `1..=q`.

use std::io::{Read, Write};

use ordlatent::baselines::ContingencyTable;
use ordlatent::{ModelConfig, OrdinalDataset};

use crate::error::{CliError, CliResult};

/// Column layout hints supplied on the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Layout {
    pub p_x: Option<usize>,
    pub p_y: Option<usize>,
    pub q: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// Header of the label column, if present.
    pub label_header: Option<String>,
    pub labels: Option<Vec<String>>,
    pub x_names: Vec<String>,
    pub y_names: Vec<String>,
    /// 1-based codes, X block first.
    pub rows: Vec<Vec<usize>>,
    pub q: usize,
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn block_prefix(name: &str) -> Option<(char, &str)> {
    let (head, rest) = name.split_at_checked(2)?;
    match head.to_ascii_uppercase().as_str() {
        "X:" => Some(('X', rest.trim())),
        "Y:" => Some(('Y', rest.trim())),
        _ => None,
    }
}

struct Columns {
    label: bool,
    x_names: Vec<String>,
    y_names: Vec<String>,
}

fn resolve_columns(headers: &[String], layout: &Layout) -> CliResult<Columns> {
    let prefixed = headers.iter().any(|h| block_prefix(h).is_some());
    if prefixed {
        let label = block_prefix(&headers[0]).is_none();
        let mut x_names = Vec::new();
        let mut y_names = Vec::new();
        for (c, h) in headers.iter().enumerate().skip(usize::from(label)) {
            match block_prefix(h) {
                Some(('X', name)) if y_names.is_empty() => x_names.push(name.to_string()),
                Some(('X', _)) => {
                    return Err(input(format!(
                        "column {} ({h}): X columns must precede Y columns",
                        c + 1
                    )))
                }
                Some((_, name)) => y_names.push(name.to_string()),
                None => {
                    return Err(input(format!(
                        "column {} ({h}): expected an X: or Y: prefix",
                        c + 1
                    )))
                }
            }
        }
        for (flag, declared, found) in [("--px", layout.p_x, x_names.len()), ("--py", layout.p_y, y_names.len())] {
            if declared.is_some_and(|d| d != found) {
                return Err(input(format!(
                    "{flag} {} disagrees with the {found} columns in the header",
                    declared.unwrap()
                )));
            }
        }
        if x_names.is_empty() || y_names.is_empty() {
            return Err(input("the header needs at least one X: and one Y: column"));
        }
        return Ok(Columns { label, x_names, y_names });
    }
    let (Some(p_x), Some(p_y)) = (layout.p_x, layout.p_y) else {
        return Err(input("the header has no X:/Y: prefixes; pass --px and --py"));
    };
    if p_x == 0 || p_y == 0 {
        return Err(input("--px and --py must be at least 1"));
    }
    let label = match headers.len() {
        n if n == p_x + p_y => false,
        n if n == p_x + p_y + 1 => true,
        n => {
            return Err(input(format!(
                "{n} columns do not match --px {p_x} and --py {p_y} (with an optional label column)"
            )))
        }
    };
    let names = &headers[usize::from(label)..];
    Ok(Columns {
        label,
        x_names: names[..p_x].to_vec(),
        y_names: names[p_x..].to_vec(),
    })
}

fn csv_error(e: csv::Error) -> CliError {
    match e.position() {
        Some(p) => input(format!("line {}: {e}", p.line())),
        None => input(e.to_string()),
    }
}

/// Parses a panel; every cell must be an integer in `1..=q`, with `q` taken
/// from the layout or, when absent, from the largest code (at least 2).
pub fn parse_panel(reader: impl Read, layout: &Layout) -> CliResult<Panel> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = csv.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(input("the file has no header row"));
    }
    let cols = resolve_columns(&headers, layout)?;
    let offset = usize::from(cols.label);
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (r, record) in csv.records().enumerate() {
        let record = record.map_err(csv_error)?;
        if cols.label {
            labels.push(record[0].to_string());
        }
        let mut row = Vec::with_capacity(record.len() - offset);
        for c in offset..record.len() {
            let cell = &record[c];
            let at = || format!("row {}, column {} ({})", r + 1, c + 1, headers[c]);
            let code: i64 = cell
                .parse()
                .map_err(|_| input(format!("{}: {cell:?} is not an integer", at())))?;
            let max = layout.q.map_or(i64::MAX, |q| q as i64);
            if code < 1 || code > max {
                let range = layout.q.map_or("1 or more".to_string(), |q| format!("1..={q}"));
                return Err(input(format!("{}: category {code} outside {range}", at())));
            }
            row.push(code as usize);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(input("the panel has no data rows"));
    }
    let q = layout
        .q
        .unwrap_or_else(|| rows.iter().flatten().copied().max().unwrap_or(2).max(2));
    Ok(Panel {
        label_header: cols.label.then(|| headers[0].clone()),
        labels: cols.label.then_some(labels),
        x_names: cols.x_names,
        y_names: cols.y_names,
        rows,
        q,
    })
}

pub fn write_panel(mut w: impl Write, panel: &Panel) -> std::io::Result<()> {
    let mut csv = csv::Writer::from_writer(&mut w);
    let mut header: Vec<String> = Vec::new();
    if panel.labels.is_some() {
        header.push(panel.label_header.clone().unwrap_or_else(|| "id".into()));
    }
    header.extend(panel.x_names.iter().map(|n| format!("X:{n}")));
    header.extend(panel.y_names.iter().map(|n| format!("Y:{n}")));
    csv.write_record(&header)?;
    for (i, row) in panel.rows.iter().enumerate() {
        let mut cells: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(labels) = &panel.labels {
            cells.push(labels[i].clone());
        }
        cells.extend(row.iter().map(usize::to_string));
        csv.write_record(&cells)?;
    }
    csv.flush()
}

impl Panel {
    pub fn from_dataset(data: &OrdinalDataset) -> Self {
        let cfg = data.config();
        Panel {
            label_header: Some("id".into()),
            labels: Some((1..=data.n()).map(|i| i.to_string()).collect()),
            x_names: (1..=cfg.p_x).map(|k| format!("X{k}")).collect(),
            y_names: (1..=cfg.p_y).map(|k| format!("Y{k}")).collect(),
            rows: data.codes(),
            q: cfg.q,
        }
    }

    pub fn dataset(&self, shared_thresholds: bool) -> CliResult<OrdinalDataset> {
        let cfg = ModelConfig::new(self.x_names.len(), self.y_names.len(), self.q, shared_thresholds)
            .map_err(|e| input(e.to_string()))?;
        OrdinalDataset::from_codes(cfg, &self.rows).map_err(|e| input(e.to_string()))
    }

    /// Row labels, or `1..=n` when the file has none.
    pub fn row_labels(&self) -> Vec<String> {
        self.labels
            .clone()
            .unwrap_or_else(|| (1..=self.rows.len()).map(|i| i.to_string()).collect())
    }
}

/// Parses a headerless CSV of non-negative counts; `#` starts a comment line.
pub fn parse_table(reader: impl Read) -> CliResult<ContingencyTable> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut counts = Vec::new();
    for (r, record) in csv.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<u64>().map_err(|_| {
                    input(format!("row {}, column {}: {cell:?} is not a count", r + 1, c + 1))
                })
            })
            .collect::<CliResult<Vec<u64>>>()?;
        counts.push(row);
    }
    ContingencyTable::new(counts).map_err(|e| input(e.to_string()))
}
