//! Comma-separated text formats: IRIS rows (`f1,f2,f3,f4,name`) and generic
//! signals (`label,v1,v2,...`). UTF-8, `.` decimals, no header unless asked.

use std::fmt::Write as _;
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub skip_header: bool,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str, opts: CsvOptions) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(usize::from(opts.skip_header))
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn number(line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("'{}' is not a number", field.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite value '{}'", field.trim())));
    }
    Ok(v)
}

/// Four numeric features followed by a class name. Classes are numbered in
/// order of first appearance.
pub fn parse_iris(text: &str, opts: CsvOptions) -> Result<LabeledDataset> {
    let mut names: Vec<String> = Vec::new();
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (line, row) in data_lines(text, opts) {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                line,
                format!("expected 4 features and a class name, found {} fields", fields.len()),
            ));
        }
        let features = fields[..4]
            .iter()
            .map(|f| number(line, f))
            .collect::<Result<Vec<_>>>()?;
        let name = fields[4].trim();
        if name.is_empty() {
            return Err(Error::parse(line, "empty class name"));
        }
        let label = match names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                names.push(name.to_string());
                names.len() - 1
            }
        };
        samples.push(Tensor::vector(features));
        labels.push(label);
    }
    if samples.is_empty() {
        return Err(Error::parse(0, "no data rows"));
    }
    Ok(LabeledDataset::new(samples, labels, names.len())?
        .with_class_names(names)
        .with_provenance("iris"))
}

pub fn load_iris(path: impl AsRef<Path>, opts: CsvOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    Ok(parse_iris(&read(path)?, opts)?.with_provenance(format!("iris:{}", path.display())))
}

/// Integer label followed by a fixed number of samples per row. The class
/// count is one more than the largest label.
pub fn parse_signals_csv(text: &str, opts: CsvOptions) -> Result<LabeledDataset> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, row) in data_lines(text, opts) {
        let mut fields = row.split(',');
        let label_field = fields.next().unwrap_or_default().trim();
        let label: usize = label_field
            .parse()
            .map_err(|_| Error::parse(line, format!("label '{label_field}' is not a non-negative integer")))?;
        let values = fields.map(|f| number(line, f)).collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::parse(line, "row has a label but no samples"));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::parse(
                    line,
                    format!("row has {} samples, earlier rows have {w}", values.len()),
                ))
            }
            _ => {}
        }
        samples.push(Tensor::vector(values));
        labels.push(label);
    }
    if samples.is_empty() {
        return Err(Error::parse(0, "no data rows"));
    }
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    Ok(LabeledDataset::new(samples, labels, class_count)?.with_provenance("signals"))
}

pub fn load_signals_csv(path: impl AsRef<Path>, opts: CsvOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    Ok(parse_signals_csv(&read(path)?, opts)?.with_provenance(format!("signals:{}", path.display())))
}

/// Writes the signal format; values use the shortest exact round-trip form.
pub fn write_signals_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if data.sample_shape().is_some_and(|s| s.len() != 1) {
        return Err(Error::Unsupported("only 1D signals can be written as CSV".into()));
    }
    let mut out = String::new();
    for (s, l) in data.iter() {
        write!(out, "{l}").expect("write to string");
        for v in s.data() {
            write!(out, ",{v:?}").expect("write to string");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iris_rows() {
        let text = "5.1,3.5,1.4,0.2,Iris-setosa\n7.0,3.2,4.7,1.4,Iris-versicolor\n\n";
        let d = parse_iris(text, CsvOptions::default()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.class_count(), 2);
        assert_eq!(d.samples()[1].data(), &[7.0, 3.2, 4.7, 1.4]);
        let one = parse_iris("5.1,3.5,1.4,0.2,Iris-setosa", CsvOptions::default()).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn iris_errors_carry_line_numbers() {
        assert!(matches!(parse_iris("", CsvOptions::default()), Err(Error::Parse { .. })));
        let bad = "5.1,3.5,1.4,0.2,Iris-setosa\n5.1,x,1.4,0.2,Iris-setosa\n";
        match parse_iris(bad, CsvOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let hdr = "a,b,c,d,class\n5.1,3.5,1.4,0.2,Iris-setosa\n";
        assert!(parse_iris(hdr, CsvOptions::default()).is_err());
        assert_eq!(parse_iris(hdr, CsvOptions { skip_header: true }).unwrap().len(), 1);
    }

    #[test]
    fn signals_rows() {
        let d = parse_signals_csv("0,1.0,2.0\n1,3.0,4.0\n", CsvOptions::default()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.samples()[0].shape(), &[2]);
        assert_eq!(d.labels(), &[0, 1]);
        assert!(matches!(
            parse_signals_csv("0,1.0,2.0\n1,3.0\n", CsvOptions::default()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn signals_round_trip() {
        let text = "1,0.1,-2.5,3e-7\n0,1e300,0.3333333333333333,-0.0\n";
        let d = parse_signals_csv(text, CsvOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_signals_csv(&d, &p).unwrap();
        let back = load_signals_csv(&p, CsvOptions::default()).unwrap();
        assert_eq!(back.samples(), d.samples());
        assert_eq!(back.labels(), d.labels());
    }
}
