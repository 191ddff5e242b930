use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingRecord, EmbeddingSet};
use crate::{Error, Regime, Result};

pub const FORMAT_NAME: &str = "FEET-EMB";
pub const FORMAT_VERSION: u32 = 1;
pub const BINARY_MAGIC: &[u8; 8] = b"FEETEMB1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    model_id: String,
    task_id: String,
    regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shot: Option<u32>,
    dim: u32,
    num_classes: u32,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    id: String,
    label: u32,
    vector: Vec<f64>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    label: u32,
    vector: &'a [f32],
}

fn header_of(set: &EmbeddingSet) -> Header {
    Header {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        model_id: set.model_id.clone(),
        task_id: set.task_id.clone(),
        regime: set.regime,
        shot: set.shot,
        dim: set.dim as u32,
        num_classes: set.num_classes,
        extra: set.metadata.clone(),
    }
}

/// Incrementally validates records against a header.
struct Builder<'p> {
    path: &'p Path,
    set: EmbeddingSet,
    seen: HashSet<String>,
}

impl<'p> Builder<'p> {
    fn new(path: &'p Path, header: Header) -> Result<Self> {
        let malformed = |reason: &str| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: 1,
            reason: reason.to_string(),
        };
        if header.format != FORMAT_NAME {
            return Err(malformed(&format!(
                "format is `{}`, expected `{FORMAT_NAME}`",
                header.format
            )));
        }
        if header.version != FORMAT_VERSION {
            return Err(malformed(&format!(
                "unsupported version {}",
                header.version
            )));
        }
        if header.dim == 0 {
            return Err(malformed("dim must be positive"));
        }
        if header.num_classes < 2 {
            return Err(malformed("num_classes must be at least 2"));
        }
        match (header.regime, header.shot) {
            (Regime::Fewshot, Some(0)) => return Err(malformed("shot must be positive")),
            (Regime::Frozen | Regime::Finetuned, Some(_)) => {
                return Err(malformed("shot is only allowed for the fewshot regime"))
            }
            _ => {}
        }
        Ok(Builder {
            path,
            set: EmbeddingSet {
                model_id: header.model_id,
                task_id: header.task_id,
                regime: header.regime,
                shot: header.shot,
                dim: header.dim as usize,
                num_classes: header.num_classes,
                metadata: header.extra,
                records: Vec::new(),
            },
            seen: HashSet::new(),
        })
    }

    fn push(&mut self, line: usize, id: String, label: u32, vector: Vec<f32>) -> Result<()> {
        let path = self.path.to_path_buf();
        if vector.len() != self.set.dim {
            return Err(Error::DimMismatch {
                path,
                line,
                expected: self.set.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { path, line });
        }
        if label >= self.set.num_classes {
            return Err(Error::LabelOutOfRange {
                path,
                line,
                label,
                num_classes: self.set.num_classes,
            });
        }
        if !self.seen.insert(id.clone()) {
            return Err(Error::DuplicateId { path, line, id });
        }
        self.set.records.push(EmbeddingRecord { id, label, vector });
        Ok(())
    }
}

/// Loads an embedding set from either encoding.
pub fn load_embedding_set(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(path, &bytes)
    } else {
        parse_canonical(path, &bytes)
    }
}

/// Parses the canonical line-delimited encoding. `path` is used for error
/// messages only. Line numbers are 1-based; the header is line 1.
pub fn parse_canonical(path: &Path, bytes: &[u8]) -> Result<EmbeddingSet> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedRecord {
        path: path.to_path_buf(),
        line: 0,
        reason: format!("invalid UTF-8: {e}"),
    })?;
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().unwrap_or((1, ""));
    let header: Header = serde_json::from_str(first).map_err(|e| Error::MalformedRecord {
        path: path.to_path_buf(),
        line: 1,
        reason: format!("bad header: {e}"),
    })?;
    let mut builder = Builder::new(path, header)?;
    let mut trailing_blank = false;
    for (line, content) in lines {
        if trailing_blank {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: line - 1,
                reason: "blank line".into(),
            });
        }
        if content.is_empty() {
            trailing_blank = true;
            continue;
        }
        let rec: RecordIn = serde_json::from_str(content).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        let vector = rec.vector.iter().map(|&v| v as f32).collect();
        builder.push(line, rec.id, rec.label, vector)?;
    }
    Ok(builder.set)
}

/// Cursor over the binary encoding; errors carry the logical line number
/// (header = 1, record i = i + 2) so both encodings report alike.
struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, line: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::MalformedRecord {
                path: self.path.to_path_buf(),
                line,
                reason: "unexpected end of file".into(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, line: usize) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, line)?.try_into().unwrap()))
    }

    fn u64(&mut self, line: usize) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, line)?.try_into().unwrap()))
    }

    fn utf8(&mut self, n: usize, line: usize) -> Result<&'a str> {
        let raw = self.take(n, line)?;
        std::str::from_utf8(raw).map_err(|e| Error::MalformedRecord {
            path: self.path.to_path_buf(),
            line,
            reason: format!("invalid UTF-8: {e}"),
        })
    }
}

pub fn parse_binary(path: &Path, bytes: &[u8]) -> Result<EmbeddingSet> {
    let malformed = |line: usize, reason: String| Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut r = Reader { path, bytes, pos: 0 };
    if r.take(8, 1)? != BINARY_MAGIC {
        return Err(malformed(1, "bad magic".into()));
    }
    let version = r.u32(1)?;
    let dim = r.u32(1)?;
    let num_classes = r.u32(1)?;
    let count = r.u64(1)?;
    let header_len = r.u32(1)? as usize;
    let header: Header = serde_json::from_str(r.utf8(header_len, 1)?)
        .map_err(|e| malformed(1, format!("bad header: {e}")))?;
    if header.version != version || header.dim != dim || header.num_classes != num_classes {
        return Err(malformed(
            1,
            "fixed fields disagree with the JSON header".into(),
        ));
    }
    let mut builder = Builder::new(path, header)?;
    let dim = dim as usize;
    for i in 0..count as usize {
        let line = i + 2;
        let id_len = r.u32(line)? as usize;
        let id = r.utf8(id_len, line)?.to_string();
        let label = r.u32(line)?;
        let raw = r.take(4 * dim, line)?;
        let vector = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        builder.push(line, id, label, vector)?;
    }
    if r.pos != bytes.len() {
        return Err(malformed(
            count as usize + 2,
            "trailing bytes after last record".into(),
        ));
    }
    Ok(builder.set)
}

pub fn write_canonical<W: Write>(set: &EmbeddingSet, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, &header_of(set))?;
    out.write_all(b"\n")?;
    for r in &set.records {
        serde_json::to_writer(
            &mut out,
            &RecordOut {
                id: &r.id,
                label: r.label,
                vector: &r.vector,
            },
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_binary<W: Write>(set: &EmbeddingSet, mut out: W) -> std::io::Result<()> {
    let header = serde_json::to_vec(&header_of(set))?;
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(set.dim as u32).to_le_bytes())?;
    out.write_all(&set.num_classes.to_le_bytes())?;
    out.write_all(&(set.records.len() as u64).to_le_bytes())?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    for r in &set.records {
        out.write_all(&(r.id.len() as u32).to_le_bytes())?;
        out.write_all(r.id.as_bytes())?;
        out.write_all(&r.label.to_le_bytes())?;
        for v in &r.vector {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Writes `set` to `path`, choosing the binary encoding for `.bin` paths and
/// the canonical one otherwise.
pub fn save_embedding_set(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    let binary = path.extension().is_some_and(|e| e == "bin");
    if binary {
        write_binary(set, &mut buf)
    } else {
        write_canonical(set, &mut buf)
    }
    .map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"format":"FEET-EMB","version":1,"model_id":"m","task_id":"t","regime":"frozen","dim":4,"num_classes":2}"#;

    fn parse(text: &str) -> Result<EmbeddingSet> {
        parse_canonical(Path::new("mem"), text.as_bytes())
    }

    #[test]
    fn three_line_file() {
        let text = format!(
            "{HEADER}\n{}\n{}\n{}\n",
            r#"{"id":"a","label":0,"vector":[1,2,3,4]}"#,
            r#"{"id":"b","label":1,"vector":[0.5,0,0,-1]}"#,
            r#"{"id":"c","label":1,"vector":[0,0,0,0]}"#
        );
        let set = parse(&text).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.dim, 4);
        assert_eq!(set.ids(), vec!["a", "b", "c"]);
        assert_eq!(set.records[1].vector, vec![0.5, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn short_vector_reports_line() {
        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"id":"a","label":0,"vector":[1,2,3]}"#
        );
        match parse(&text) {
            Err(Error::DimMismatch {
                line,
                expected,
                found,
                ..
            }) => assert_eq!((line, expected, found), (2, 4, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_id() {
        let rec = r#"{"id":"a","label":0,"vector":[1,2,3,4]}"#;
        let text = format!("{HEADER}\n{rec}\n{rec}\n");
        assert!(matches!(parse(&text), Err(Error::DuplicateId { line: 3, .. })));
    }

    #[test]
    fn overflowing_value_is_non_finite() {
        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"id":"a","label":0,"vector":[1e300,2,3,4]}"#
        );
        assert!(matches!(parse(&text), Err(Error::NonFiniteValue { line: 2, .. })));
    }

    #[test]
    fn label_must_be_below_num_classes() {
        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"id":"a","label":2,"vector":[1,2,3,4]}"#
        );
        assert!(matches!(parse(&text), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn garbage_line_is_malformed() {
        let text = format!("{HEADER}\nnot json\n");
        assert!(matches!(parse(&text), Err(Error::MalformedRecord { line: 2, .. })));
    }

    #[test]
    fn shot_on_frozen_is_rejected() {
        let text = HEADER.replace("\"dim\"", "\"shot\":4,\"dim\"");
        assert!(matches!(parse(&text), Err(Error::MalformedRecord { line: 1, .. })));
    }

    #[test]
    fn extra_header_keys_are_kept() {
        let text = HEADER.replace("\"dim\"", "\"pooling\":\"cls\",\"dim\"") + "\n";
        let set = parse(&text).unwrap();
        assert_eq!(set.metadata["pooling"], "cls");
        let mut out = Vec::new();
        write_canonical(&set, &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("\"pooling\":\"cls\""));
    }

    #[test]
    fn truncated_binary() {
        let set = parse(&format!(
            "{HEADER}\n{}\n",
            r#"{"id":"a","label":0,"vector":[1,2,3,4]}"#
        ))
        .unwrap();
        let mut bin = Vec::new();
        write_binary(&set, &mut bin).unwrap();
        bin.truncate(bin.len() - 2);
        assert!(matches!(
            parse_binary(Path::new("mem"), &bin),
            Err(Error::MalformedRecord { line: 2, .. })
        ));
    }
}
