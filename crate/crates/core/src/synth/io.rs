//! Dataset files: one JSON object per line.
//!
//! Line 1 is a header:
//!
//! ```text
//! {"format":"viewgate-dataset","version":1,"feature_dim":32,"attribute_count":16,"view_count":3,"samples":12000,"generator":"<16 hex>"}
//! ```
//!
//! Every following line is one sample:
//!
//! ```text
//! {"x":[0.12,-1.5,...],"attrs":[0,1,...],"view":2}
//! ```
//!
//! `x` holds `feature_dim` reals written in shortest round-trip decimal
//! form, `attrs` holds `attribute_count` values in {0, 1}, and `view` is a
//! view index or `-1` when unknown.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Dataset, Sample};

pub const FORMAT_NAME: &str = "viewgate-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    feature_dim: usize,
    attribute_count: usize,
    view_count: usize,
    samples: usize,
    generator: String,
}

pub fn write_dataset_to<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        feature_dim: dataset.feature_dim,
        attribute_count: dataset.attribute_count,
        view_count: dataset.view_count,
        samples: dataset.len(),
        generator: dataset.generator.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for s in &dataset.samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset_from<R: Read>(input: R) -> Result<Dataset> {
    let mut lines = BufReader::new(input).lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::format_at_line(1, "missing header"))?;
    let first = first.map_err(|e| Error::format_at_line(1, e.to_string()))?;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::format_at_line(1, format!("bad header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(Error::format_at_line(
            1,
            format!("unknown format `{}`", header.format),
        ));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: header.version,
            expected: FORMAT_VERSION,
        });
    }

    let mut samples = Vec::with_capacity(header.samples);
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::format_at_line(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(&line)
            .map_err(|e| Error::format_at_line(lineno, e.to_string()))?;
        if s.x.len() != header.feature_dim {
            return Err(Error::format_at_line(
                lineno,
                format!(
                    "x has {} values, header says {}",
                    s.x.len(),
                    header.feature_dim
                ),
            ));
        }
        if s.attrs.len() != header.attribute_count {
            return Err(Error::format_at_line(
                lineno,
                format!(
                    "attrs has {} values, header says {}",
                    s.attrs.len(),
                    header.attribute_count
                ),
            ));
        }
        if s.attrs.iter().any(|&a| a > 1) {
            return Err(Error::format_at_line(lineno, "attrs must be 0 or 1"));
        }
        if s.view < -1 || s.view >= header.view_count as i64 {
            return Err(Error::format_at_line(
                lineno,
                format!("view {} out of range", s.view),
            ));
        }
        samples.push(s);
    }
    if samples.len() != header.samples {
        return Err(Error::format_at_line(
            samples.len() + 2,
            format!(
                "header announces {} samples, found {}",
                header.samples,
                samples.len()
            ),
        ));
    }
    Ok(Dataset {
        feature_dim: header.feature_dim,
        attribute_count: header.attribute_count,
        view_count: header.view_count,
        generator: header.generator,
        samples,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset {
            feature_dim: 2,
            attribute_count: 3,
            view_count: 3,
            generator: "abc".into(),
            samples: vec![
                Sample {
                    x: vec![0.1, -1e-300],
                    attrs: vec![0, 1, 1],
                    view: 2,
                },
                Sample {
                    x: vec![1.0 / 3.0, 7.0],
                    attrs: vec![1, 0, 0],
                    view: -1,
                },
            ],
        }
    }

    fn to_string(d: &Dataset) -> String {
        let mut buf = Vec::new();
        write_dataset_to(d, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn unknown_view_preserved() {
        let d = tiny();
        let back = read_dataset_from(to_string(&d).as_bytes()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.samples[1].view, -1);
    }

    #[test]
    fn wrong_attr_length_names_line() {
        let text = to_string(&tiny()).replace("[1,0,0]", "[1,0]");
        let err = read_dataset_from(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn malformed_record_names_line() {
        let text = to_string(&tiny()).replace("\"view\":2", "\"view\":oops");
        let err = read_dataset_from(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn sample_count_checked() {
        let text = to_string(&tiny());
        let truncated: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            read_dataset_from(truncated.as_bytes()),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn version_checked() {
        let text = to_string(&tiny()).replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(
            read_dataset_from(text.as_bytes()),
            Err(Error::Version { found: 9, .. })
        ));
    }
}
