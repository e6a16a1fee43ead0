//! Binary file formats, all fields little-endian.
//!
//! Plain tensor (`KTEN`):
//!
//! ```text
//! "KTEN" | version u16 | rank u8 | dims u64 x rank | payload f64 x prod(dims)
//! ```
//!
//! Masked container (`KCDM`):
//!
//! ```text
//! "KCDM" | version u16 | nonce [16] | fingerprint [8] | options block |
//! rank u8 | dims u64 x rank | payload f64 x prod(dims)
//! ```
//!
//! The options block layout is documented on [`CipherOptions::encode`]. The
//! key never appears in either format.

use std::fs;
use std::path::Path;

use crate::cipher::{ByteReader, CipherOptions, MaskedTensor};
use crate::error::{Error, Result};
use crate::keystream::Nonce;
use crate::tensor::{element_count, Tensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"KTEN";
pub const CONTAINER_MAGIC: &[u8; 4] = b"KCDM";
pub const FORMAT_VERSION: u16 = 1;

fn write_shape_and_payload(out: &mut Vec<u8>, t: &Tensor) -> Result<()> {
    let rank =
        u8::try_from(t.rank()).map_err(|_| Error::InvalidShape(format!("rank {} exceeds 255", t.rank())))?;
    out.push(rank);
    for &dim in t.shape() {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    out.reserve(t.len() * 8);
    for v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn read_shape_and_payload(r: &mut ByteReader<'_>) -> Result<Tensor> {
    let rank = r.u8()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let dim = r.u64()?;
        shape.push(
            usize::try_from(dim).map_err(|_| Error::CorruptFile(format!("dimension {dim} too large")))?,
        );
    }
    let count =
        element_count(&shape).ok_or_else(|| Error::CorruptFile(format!("shape {shape:?} overflows")))?;
    let bytes = count
        .checked_mul(8)
        .ok_or_else(|| Error::CorruptFile(format!("shape {shape:?} overflows")))?;
    let rest = r.rest();
    if rest.len() != bytes {
        return Err(Error::CorruptFile(format!(
            "payload has {} bytes, shape {shape:?} needs {bytes}",
            rest.len()
        )));
    }
    let data = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    r.take(bytes)?;
    Tensor::new(shape, data)
}

fn read_preamble(r: &mut ByteReader<'_>, magic: &[u8; 4]) -> Result<()> {
    let got = r
        .take(4)
        .map_err(|_| Error::UnsupportedFormat("file shorter than its magic".into()))?;
    if got != magic {
        return Err(Error::UnsupportedFormat(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(got)
        )));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    Ok(())
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(7 + 8 * t.rank() + 8 * t.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    write_shape_and_payload(&mut out, t)?;
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = ByteReader::new(bytes);
    read_preamble(&mut r, TENSOR_MAGIC)?;
    read_shape_and_payload(&mut r)
}

pub fn encode_container(m: &MaskedTensor) -> Result<Vec<u8>> {
    let options = m.options.encode();
    let mut out = Vec::with_capacity(30 + options.len() + 1 + 8 * m.tensor.rank() + 8 * m.tensor.len());
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(m.nonce.as_bytes());
    out.extend_from_slice(&m.fingerprint);
    out.extend_from_slice(&options);
    write_shape_and_payload(&mut out, &m.tensor)?;
    Ok(out)
}

/// Parse a container. The stored fingerprint is returned as-is; checking it
/// against the options is left to decryption.
pub fn decode_container(bytes: &[u8]) -> Result<MaskedTensor> {
    let mut r = ByteReader::new(bytes);
    read_preamble(&mut r, CONTAINER_MAGIC)?;
    let nonce = Nonce::from_slice(r.take(16)?)?;
    let fingerprint: [u8; 8] = r.take(8)?.try_into().unwrap();
    let (options, used) = CipherOptions::decode(r.rest())?;
    r.take(used)?;
    let tensor = read_shape_and_payload(&mut r)?;
    Ok(MaskedTensor {
        nonce,
        fingerprint,
        options,
        tensor,
    })
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    fs::write(path, encode_tensor(t)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

pub fn write_container(path: impl AsRef<Path>, m: &MaskedTensor) -> Result<()> {
    fs::write(path, encode_container(m)?)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<MaskedTensor> {
    decode_container(&fs::read(path)?)
}

/// Parse headerless CSV of numbers into an `n x d` tensor (one row per line).
pub fn parse_csv(text: &str) -> Result<Tensor> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::InvalidInput(format!(
                "csv row {} has {} fields, expected {}",
                line + 1,
                record.len(),
                width.unwrap()
            )));
        }
        for field in record.iter() {
            data.push(field.parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("csv row {}: not a number: {field:?}", line + 1))
            })?);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::InvalidInput("csv has no rows".into()))?;
    Tensor::new(vec![rows, width], data)
}

/// Tensor as CSV, one line per row of its `n x d` view. Values use the
/// shortest representation that parses back to the same binary64.
pub fn to_csv(t: &Tensor) -> String {
    let width = t.shape().last().copied().unwrap_or(1).max(1);
    let mut out = String::new();
    for row in t.values().chunks(width) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Tensor> {
    parse_csv(&fs::read_to_string(path)?)
}

pub fn write_csv(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    fs::write(path, to_csv(t))?;
    Ok(())
}
