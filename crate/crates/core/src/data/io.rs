//! Dataset readers.
//!
//! Two on-disk formats are understood:
//!
//! * delimited text: UTF-8, one sample per line, comma separated, `d` numeric
//!   feature fields followed by one integer class label. A first line that
//!   does not parse as numbers is taken to be a header and skipped.
//! * IDX image/label pairs (the MNIST layout): big-endian `u32` magic
//!   `0x00000803`, count, rows, cols, then `count·rows·cols` unsigned bytes;
//!   labels use magic `0x00000801`, count, then one byte per label.
//!
//! Multiclass labels are collapsed to binary against a set of positive
//! classes. Image pixels are scaled to `[0, 1]`; delimited features pass
//! through unchanged.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::LabeledDataset;
use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetFile {
    Delimited(PathBuf),
    IdxPair { images: PathBuf, labels: PathBuf },
}

pub fn load_dataset(file: &DatasetFile, positive_classes: &BTreeSet<u32>) -> Result<LabeledDataset> {
    match file {
        DatasetFile::Delimited(path) => load_delimited(path, positive_classes),
        DatasetFile::IdxPair { images, labels } => load_idx_pair(images, labels, positive_classes),
    }
}

pub fn load_delimited(path: &Path, positive_classes: &BTreeSet<u32>) -> Result<LabeledDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (features, classes) = parse_delimited(&bytes)?;
    binarize(features, &classes, positive_classes)
}

pub fn load_idx_pair(
    images: &Path,
    labels: &Path,
    positive_classes: &BTreeSet<u32>,
) -> Result<LabeledDataset> {
    let image_bytes = fs::read(images).map_err(|e| Error::io(images, e))?;
    let label_bytes = fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let features = parse_idx_images(&image_bytes)?;
    let classes = parse_idx_labels(&label_bytes)?;
    if features.nrows() != classes.len() {
        return Err(Error::Shape(format!(
            "{} images but {} labels",
            features.nrows(),
            classes.len()
        )));
    }
    binarize(features, &classes, positive_classes)
}

/// Writes `features..., label` rows with a header line, using the shortest
/// representation that parses back to the same `f64`.
pub fn write_delimited(path: &Path, data: &LabeledDataset) -> Result<()> {
    let mut out = Vec::new();
    let header: Vec<String> = (0..data.n_features())
        .map(|j| format!("x{j}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    writeln!(out, "{}", header.join(",")).expect("write to Vec");
    for (row, y) in data.features().rows().into_iter().zip(data.labels()) {
        for v in row.iter() {
            write!(out, "{v},").expect("write to Vec");
        }
        writeln!(out, "{y}").expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn binarize(
    features: Array2<f64>,
    classes: &[u32],
    positive_classes: &BTreeSet<u32>,
) -> Result<LabeledDataset> {
    if positive_classes.is_empty() {
        return Err(Error::InvalidArgument("positive class set is empty".into()));
    }
    let present: BTreeSet<u32> = classes.iter().copied().collect();
    if let Some(&missing) = positive_classes.iter().find(|c| !present.contains(c)) {
        return Err(Error::UnknownClass(missing));
    }
    let labels = classes
        .iter()
        .map(|c| u8::from(positive_classes.contains(c)))
        .collect();
    LabeledDataset::new(features, labels)
}

fn parse_delimited(bytes: &[u8]) -> Result<(Array2<f64>, Vec<u32>)> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse(e.valid_up_to() as u64, "invalid UTF-8"))?;

    let mut values: Vec<f64> = Vec::new();
    let mut classes: Vec<u32> = Vec::new();
    let mut width: Option<usize> = None;
    let mut offset = 0u64;

    for (line_no, raw) in text.split_inclusive('\n').enumerate() {
        let line_offset = offset;
        offset += raw.len() as u64;
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();

        let parsed: Option<Vec<f64>> = fields[..fields.len() - 1]
            .iter()
            .map(|f| f.parse::<f64>().ok())
            .collect();
        let class = fields[fields.len() - 1].parse::<u32>().ok();
        let (row, class) = match (parsed, class) {
            (Some(row), Some(class)) => (row, class),
            _ if line_no == 0 => continue,
            _ => {
                return Err(Error::parse(
                    line_offset,
                    format!("line {}: expected numeric features and an integer label", line_no + 1),
                ))
            }
        };
        if row.is_empty() {
            return Err(Error::parse(
                line_offset,
                format!("line {}: no feature columns", line_no + 1),
            ));
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(
                    line_offset,
                    format!("line {}: {} features, expected {w}", line_no + 1, row.len()),
                ))
            }
            Some(_) => {}
        }
        values.extend(row);
        classes.push(class);
    }

    let width = width.ok_or_else(|| Error::parse(0, "no data rows"))?;
    let features = Array2::from_shape_vec((classes.len(), width), values)
        .expect("row widths checked while parsing");
    Ok((features, classes))
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> IdxReader<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::parse(self.pos as u64, format!("truncated header: missing {what}"))
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let got = self.u32("magic number")?;
        if got != expected {
            return Err(Error::parse(
                0,
                format!("bad magic number {got:#010x}, expected {expected:#010x}"),
            ));
        }
        Ok(())
    }

    fn body(&self, len: usize) -> Result<&'a [u8]> {
        let have = self.bytes.len() - self.pos;
        if have < len {
            return Err(Error::parse(
                self.bytes.len() as u64,
                format!("truncated body: expected {len} bytes, found {have}"),
            ));
        }
        if have > len {
            return Err(Error::parse(
                (self.pos + len) as u64,
                format!("{} trailing bytes after body", have - len),
            ));
        }
        Ok(&self.bytes[self.pos..])
    }
}

fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = IdxReader { bytes, pos: 0 };
    r.magic(IDX_IMAGES_MAGIC)?;
    let count = r.u32("image count")? as usize;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    let pixels = rows * cols;
    let body = r.body(count * pixels)?;
    let data = body.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(Array2::from_shape_vec((count, pixels), data).expect("length checked"))
}

fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    let mut r = IdxReader { bytes, pos: 0 };
    r.magic(IDX_LABELS_MAGIC)?;
    let count = r.u32("label count")? as usize;
    Ok(r.body(count)?.iter().map(|&b| u32::from(b)).collect())
}
