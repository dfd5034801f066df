//! Byte-level reader and writer for the checkpoint container.
//!
//! Layout: an 8-byte little-endian header length `N`, `N` bytes of JSON
//! header, then the concatenated tensor payloads. Header offsets are relative
//! to the first payload byte and must tile the payload region exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{Checkpoint, Dtype, TensorRecord};
use crate::error::{Error, Result};

const METADATA_KEY: &str = "__metadata__";

/// Header JSON is padded with spaces to this many bytes.
const ALIGNMENT: usize = 8;

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = encode_header(ckpt, true)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for t in ckpt.tensors.values() {
            out.write_all(&t.data)?;
        }
        out.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Serializes a checkpoint into the container layout in memory.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let header = encode_header(ckpt, true)?;
    let payload: usize = ckpt.tensors.values().map(|t| t.data.len()).sum();
    let mut out = Vec::with_capacity(8 + header.len() + payload);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in ckpt.tensors.values() {
        out.extend_from_slice(&t.data);
    }
    Ok(out)
}

/// Canonical header bytes: sorted keys, compact JSON, space-padded to
/// [`ALIGNMENT`]. Payload offsets follow lexicographic tensor order.
pub(crate) fn encode_header(ckpt: &Checkpoint, with_metadata: bool) -> Result<Vec<u8>> {
    ckpt.validate()?;
    let mut header = Map::new();
    if with_metadata && !ckpt.metadata.is_empty() {
        let meta: Map<String, Value> = ckpt
            .metadata
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        header.insert(METADATA_KEY.to_string(), Value::Object(meta));
    }
    let mut offset = 0usize;
    for t in ckpt.tensors.values() {
        if t.name == METADATA_KEY {
            return Err(Error::InvalidTensor {
                name: t.name.clone(),
                reason: "name is reserved for container metadata".into(),
            });
        }
        let end = offset + t.data.len();
        header.insert(
            t.name.clone(),
            json!({
                "dtype": t.dtype.as_str(),
                "shape": t.shape,
                "data_offsets": [offset, end],
            }),
        );
        offset = end;
    }
    let mut bytes = serde_json::to_vec(&Value::Object(header)).expect("header is plain JSON");
    let padded = bytes.len().div_ceil(ALIGNMENT) * ALIGNMENT;
    bytes.resize(padded, b' ');
    Ok(bytes)
}

/// Top-level header object kept as an ordered entry list so repeated keys
/// are visible instead of silently collapsing.
struct HeaderEntries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for HeaderEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = HeaderEntries;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut entries = Vec::with_capacity(map.size_hint().unwrap_or(0));
                while let Some(entry) = map.next_entry::<String, Value>()? {
                    entries.push(entry);
                }
                Ok(HeaderEntries(entries))
            }
        }

        deserializer.deserialize_map(EntriesVisitor)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorInfo {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedHeader(msg.into())
}

/// Parses a complete container held in memory.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 {
        return Err(malformed(format!("file is {} bytes, shorter than the length prefix", bytes.len())));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let available = (bytes.len() - 8) as u64;
    if header_len > available {
        return Err(malformed(format!(
            "header length {header_len} exceeds the {available} bytes after the prefix"
        )));
    }
    let header_end = 8 + header_len as usize;
    let header = std::str::from_utf8(&bytes[8..header_end]).map_err(|e| malformed(format!("header is not UTF-8: {e}")))?;
    let HeaderEntries(entries) =
        serde_json::from_str(header).map_err(|e| malformed(format!("header JSON: {e}")))?;
    let payload = &bytes[header_end..];

    let mut ckpt = Checkpoint::new();
    let mut seen_metadata = false;
    let mut spans: Vec<(usize, usize, String)> = Vec::with_capacity(entries.len());
    for (name, value) in entries {
        if name == METADATA_KEY {
            if seen_metadata {
                return Err(Error::DuplicateName(name));
            }
            seen_metadata = true;
            ckpt.metadata = parse_metadata(value)?;
            continue;
        }
        if ckpt.tensors.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        if name.is_empty() {
            return Err(malformed("empty tensor name"));
        }
        let info: TensorInfo =
            serde_json::from_value(value).map_err(|e| malformed(format!("entry `{name}`: {e}")))?;
        let dtype: Dtype = info.dtype.parse()?;
        let [begin, end] = info.data_offsets;
        if begin > end || end > payload.len() {
            return Err(malformed(format!(
                "offsets [{begin}, {end}] of `{name}` fall outside the {}-byte payload",
                payload.len()
            )));
        }
        let expected = info
            .shape
            .iter()
            .try_fold(dtype.size_in_bytes(), |acc, &d| acc.checked_mul(d));
        if expected != Some(end - begin) {
            return Err(malformed(format!(
                "`{name}` spans {} bytes but shape {:?} of {dtype} needs {}",
                end - begin,
                info.shape,
                expected.map_or_else(|| "overflowing".to_string(), |n| n.to_string())
            )));
        }
        spans.push((begin, end, name.clone()));
        let record = TensorRecord {
            name: name.clone(),
            dtype,
            shape: info.shape,
            data: payload[begin..end].to_vec(),
        };
        ckpt.tensors.insert(name, record);
    }

    spans.sort();
    let mut cursor = 0usize;
    for (begin, end, name) in &spans {
        if *begin != cursor {
            let what = if *begin < cursor { "overlaps" } else { "leaves a gap before" };
            return Err(malformed(format!("`{name}` at [{begin}, {end}] {what} byte {cursor}")));
        }
        cursor = *end;
    }
    if cursor != payload.len() {
        return Err(malformed(format!(
            "tensors cover {cursor} bytes but the payload holds {}",
            payload.len()
        )));
    }
    Ok(ckpt)
}

fn parse_metadata(value: Value) -> Result<BTreeMap<String, String>> {
    let Value::Object(map) = value else {
        return Err(malformed("`__metadata__` is not an object"));
    };
    map.into_iter()
        .map(|(k, v)| match v {
            Value::String(s) => Ok((k, s)),
            other => Err(malformed(format!("metadata value for `{k}` is not a string: {other}"))),
        })
        .collect()
}
