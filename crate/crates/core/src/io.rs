//! Point CSV input and label CSV output.
//!
//! Points are comma-separated floats, one per row, with an optional header
//! row and an optional trailing integer label column.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How to treat the last column of a point file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    /// A label column when the header names it `label`, or, without a
    /// header, when there are at least three columns and every value in the
    /// last one is a non-negative integer literal.
    #[default]
    Auto,
    /// The last column is always a label.
    Last,
    /// Every column is a coordinate.
    None,
}

impl std::str::FromStr for LabelColumn {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(LabelColumn::Auto),
            "last" => Ok(LabelColumn::Last),
            "none" => Ok(LabelColumn::None),
            _ => Err(format!("unknown label column mode {s:?} (auto | last | none)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointFile {
    pub header: Option<Vec<String>>,
    pub points: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl PointFile {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

pub fn read_points(path: &Path, mode: LabelColumn) -> Result<PointFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_points(&text, mode)
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

pub fn parse_points(text: &str, mode: LabelColumn) -> Result<PointFile> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows: Vec<(u64, Vec<String>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    if rows.is_empty() {
        return Err(Error::invalid("point file has no rows"));
    }

    let header = match rows[0].1.iter().any(|f| f.parse::<f64>().is_err()) {
        true => Some(rows.remove(0).1),
        false => None,
    };
    if rows.is_empty() {
        return Err(Error::invalid("point file has a header but no points"));
    }
    let width = header.as_ref().map_or(rows[0].1.len(), Vec::len);
    for (line, row) in &rows {
        if row.len() != width {
            return Err(parse_error(*line, format!("expected {width} fields, found {}", row.len())));
        }
    }

    let is_uint = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let has_label = match mode {
        LabelColumn::Last => true,
        LabelColumn::None => false,
        LabelColumn::Auto => match &header {
            Some(h) => h.last().is_some_and(|n| n.eq_ignore_ascii_case("label")),
            None => width >= 3 && rows.iter().all(|(_, r)| is_uint(&r[width - 1])),
        },
    };
    let dim = width - usize::from(has_label);
    if dim == 0 {
        return Err(Error::invalid("point file has no coordinate columns"));
    }

    let mut points = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(if has_label { rows.len() } else { 0 });
    for (line, row) in &rows {
        let p = row[..dim]
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_error(*line, format!("expected a finite number, got {f:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(p);
        if has_label {
            let f = &row[dim];
            labels.push(f.parse::<usize>().map_err(|_| parse_error(*line, format!("expected an integer label, got {f:?}")))?);
        }
    }
    Ok(PointFile { header, points, labels: has_label.then_some(labels) })
}

/// Writes `index,label` rows with a header.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::from("index,label\n");
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads labels from a CSV whose header has a `label` column (point label
/// files and generated point sets), a headerless grid of labels, or a label
/// PNG.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        return Ok(crate::image::LabelImage::read(path)?.labels);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::invalid(format!("{}: not UTF-8", path.display())))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let Some(column) = first.split(',').position(|f| f.trim().eq_ignore_ascii_case("label")) else {
        return Ok(crate::image::LabelImage::read(path)?.labels);
    };
    let mut labels = Vec::new();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let field = line.split(',').nth(column).unwrap_or("").trim();
        labels.push(
            field
                .parse::<usize>()
                .map_err(|_| parse_error(i as u64 + 1, format!("expected an integer label, got {field:?}")))?,
        );
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_label() {
        let f = parse_points("x,y,label\n1,2,0\n3.5,-4e-1,1\n", LabelColumn::Auto).unwrap();
        assert_eq!(f.header.as_deref(), Some(&["x".to_string(), "y".into(), "label".into()][..]));
        assert_eq!(f.points, vec![vec![1.0, 2.0], vec![3.5, -0.4]]);
        assert_eq!(f.labels, Some(vec![0, 1]));
    }

    #[test]
    fn headerless_detection() {
        let two = parse_points("1,2\n3,4\n", LabelColumn::Auto).unwrap();
        assert_eq!((two.dim(), two.header, two.labels), (2, None, None));
        let labelled = parse_points("0.5,2,1\n3,4,2\n", LabelColumn::Auto).unwrap();
        assert_eq!((labelled.dim(), labelled.labels), (2, Some(vec![1, 2])));
        let float_last = parse_points("0.5,2,1\n3,4,2.5\n", LabelColumn::Auto).unwrap();
        assert_eq!((float_last.dim(), float_last.labels), (3, None));
        let forced = parse_points("0.5,2,1\n3,4,2\n", LabelColumn::None).unwrap();
        assert_eq!(forced.dim(), 3);
        let header_no_label = parse_points("a,b,c\n1,2,3\n", LabelColumn::Auto).unwrap();
        assert_eq!((header_no_label.dim(), header_no_label.labels), (3, None));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_points("x,y\n1,2\n3,oops\n", LabelColumn::Auto).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_points("1,2\n3\n", LabelColumn::Auto).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_points("1,2\ninf,2\n", LabelColumn::Auto).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_points("", LabelColumn::Auto).is_err());
        assert!(parse_points("x,y\n", LabelColumn::Auto).is_err());
    }

    #[test]
    fn label_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        write_labels(&p, &[2, 0, 1]).unwrap();
        assert_eq!(read_labels(&p).unwrap(), vec![2, 0, 1]);
        let grid = dir.path().join("g.csv");
        std::fs::write(&grid, "0,1\n1,1\n").unwrap();
        assert_eq!(read_labels(&grid).unwrap(), vec![0, 1, 1, 1]);
        let points = dir.path().join("p.csv");
        std::fs::write(&points, "x,y,label\n0.5,1,3\n2,2,0\n").unwrap();
        assert_eq!(read_labels(&points).unwrap(), vec![3, 0]);
    }
}
