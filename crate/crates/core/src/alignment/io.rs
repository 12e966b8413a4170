//! JSON Lines dataset files.
//!
//! Line 1 is a header `{"n":..,"d_face":..,"d_bg":..,"d_audio":..,"vocab_size":..}`;
//! every following line is one video:
//! `{"domain":int,"label":[5 floats]|null,"records":[{"tok","face","bg","audio","pad"},..]}`.
//! Floats are written with 17 significant digits so reading a file back
//! reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{AlignedSequence, FeatureDims, FeatureRecord, PersonalityVector};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub n: usize,
    pub d_face: usize,
    pub d_bg: usize,
    pub d_audio: usize,
    pub vocab_size: usize,
}

impl DatasetHeader {
    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            face: self.d_face,
            background: self.d_bg,
            audio: self.d_audio,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub domain: usize,
    pub sequence: AlignedSequence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub entries: Vec<DatasetEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    tok: usize,
    face: Vec<f64>,
    bg: Vec<f64>,
    audio: Vec<f64>,
    pad: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    domain: usize,
    label: Option<[f64; 5]>,
    records: Vec<RawRecord>,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?
        .map_err(|e| Error::io(path, e))?;
    let header: DatasetHeader = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(parse_entry(&line, line_no, &header)?);
    }
    Ok(Dataset { header, entries })
}

fn parse_entry(line: &str, line_no: usize, header: &DatasetHeader) -> Result<DatasetEntry> {
    let parse_err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let raw: RawEntry = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
    if raw.records.len() != header.n {
        return Err(parse_err(format!(
            "{} records, header says n = {}",
            raw.records.len(),
            header.n
        )));
    }
    let mut records = Vec::with_capacity(raw.records.len());
    for (k, r) in raw.records.into_iter().enumerate() {
        for (name, got, want) in [
            ("face", r.face.len(), header.d_face),
            ("bg", r.bg.len(), header.d_bg),
            ("audio", r.audio.len(), header.d_audio),
        ] {
            if got != want {
                return Err(parse_err(format!(
                    "record {k}: {name} has dim {got}, header says {want}"
                )));
            }
        }
        if r.tok >= header.vocab_size {
            return Err(parse_err(format!(
                "record {k}: token {} outside vocabulary of {}",
                r.tok, header.vocab_size
            )));
        }
        records.push(FeatureRecord {
            token_id: r.tok,
            face: r.face,
            background: r.bg,
            audio: r.audio,
            is_pad: r.pad,
        });
    }
    let label = raw
        .label
        .map(PersonalityVector::new)
        .transpose()
        .map_err(|e| Error::Validation(format!("line {line_no}: {e}")))?;
    let sequence = AlignedSequence::from_records(records, label)
        .map_err(|e| parse_err(e.to_string()))?;
    Ok(DatasetEntry {
        domain: raw.domain,
        sequence,
    })
}

/// Serializes a dataset. Output depends only on the data, so equal datasets
/// produce identical bytes.
pub fn dataset_to_string(data: &Dataset) -> Result<String> {
    let h = &data.header;
    let mut out = serde_json::to_string(h)?;
    out.push('\n');
    for (i, entry) in data.entries.iter().enumerate() {
        let seq = &entry.sequence;
        if seq.len() != h.n || seq.dims() != h.dims() {
            return Err(Error::Validation(format!(
                "entry {i} does not match the header (n = {}, dims {:?})",
                seq.len(),
                seq.dims()
            )));
        }
        write!(out, "{{\"domain\":{},\"label\":", entry.domain).unwrap();
        match &seq.label {
            Some(p) => write_floats(&mut out, p.scores(), i)?,
            None => out.push_str("null"),
        }
        out.push_str(",\"records\":[");
        for (k, r) in seq.records().iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{{\"tok\":{},\"face\":", r.token_id).unwrap();
            write_floats(&mut out, &r.face, i)?;
            out.push_str(",\"bg\":");
            write_floats(&mut out, &r.background, i)?;
            out.push_str(",\"audio\":");
            write_floats(&mut out, &r.audio, i)?;
            write!(out, ",\"pad\":{}}}", r.is_pad).unwrap();
        }
        out.push_str("]}\n");
    }
    Ok(out)
}

pub fn write_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = dataset_to_string(data)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_floats(out: &mut String, values: &[f64], entry: usize) -> Result<()> {
    out.push('[');
    for (k, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Validation(format!("entry {entry}: non-finite value {v}")));
        }
        if k > 0 {
            out.push(',');
        }
        write!(out, "{v:.16e}").unwrap();
    }
    out.push(']');
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DIMS: FeatureDims = FeatureDims {
        face: 2,
        background: 1,
        audio: 2,
    };

    fn header() -> DatasetHeader {
        DatasetHeader {
            n: 4,
            d_face: 2,
            d_bg: 1,
            d_audio: 2,
            vocab_size: 10,
        }
    }

    fn record(tok: usize, x: f64) -> FeatureRecord {
        FeatureRecord {
            token_id: tok,
            face: vec![x, -x],
            background: vec![x * 0.1],
            audio: vec![x + 1.0, 1.0 / 3.0],
            is_pad: false,
        }
    }

    fn sample() -> Dataset {
        let a = AlignedSequence::from_valid(
            vec![record(1, 0.1), record(5, 2.5e-7)],
            4,
            DIMS,
            Some(PersonalityVector::new([0.1, 0.2, 0.3, 0.4, 1.0]).unwrap()),
        )
        .unwrap();
        let b = AlignedSequence::from_valid(vec![record(9, -3.0); 6], 4, DIMS, None).unwrap();
        Dataset {
            header: header(),
            entries: vec![
                DatasetEntry { domain: 0, sequence: a },
                DatasetEntry { domain: 3, sequence: b },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let data = sample();
        write_dataset(&data, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, data);
        write_dataset(&back, dir.path().join("e.jsonl")).unwrap();
        assert_eq!(
            fs::read(&path).unwrap(),
            fs::read(dir.path().join("e.jsonl")).unwrap()
        );
    }

    #[test]
    fn empty_record_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let data = Dataset {
            header: header(),
            entries: vec![],
        };
        write_dataset(&data, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), data);
    }

    #[test]
    fn dim_mismatch_names_line_and_record() {
        let text = dataset_to_string(&sample()).unwrap();
        let broken = text.replacen("\"face\":[", "\"face\":[0.0,", 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        fs::write(&path, broken).unwrap();
        match load_dataset(&path) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("record 0"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn label_out_of_range_is_validation_error() {
        let text = dataset_to_string(&sample()).unwrap();
        let broken = text.replacen("1.0000000000000000e0]", "1.5e0]", 1);
        assert_ne!(broken, text);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        fs::write(&path, broken).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = write_dataset(&sample(), "/nonexistent-dir/x/d.jsonl").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn floats_round_trip_bit_exact(
            xs in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 3),
        ) {
            let mut s = String::new();
            write_floats(&mut s, &xs, 0).unwrap();
            let back: Vec<f64> = serde_json::from_str(&s).unwrap();
            for (a, b) in xs.iter().zip(&back) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
