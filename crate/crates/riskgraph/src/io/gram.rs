//! Binary Gram matrices.
//!
//! Layout: the magic `RGGRAM01`, a little-endian `u64` header length, a JSON
//! [`GramHeader`], then `n * n` little-endian `f64` values in row-major order.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use riskgraph_core::kernels::{self, KernelConfig, KernelMatrix, PsdReport};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

const MAGIC: &[u8; 8] = b"RGGRAM01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramHeader {
    pub n: usize,
    pub kernel: String,
    pub params: KernelConfig,
    /// Scene reference of each row.
    pub refs: Vec<String>,
    pub config_digest: String,
    pub psd: Option<PsdReport>,
}

pub fn encode(gram: &KernelMatrix, refs: &[String], digest: &str) -> Vec<u8> {
    let header = GramHeader {
        n: gram.n(),
        kernel: gram.config.name().to_owned(),
        params: gram.config.clone(),
        refs: refs.to_vec(),
        config_digest: digest.to_owned(),
        psd: gram.psd.clone(),
    };
    let header = serde_json::to_vec(&header).expect("serialisable header");
    let mut out = Vec::with_capacity(16 + header.len() + 8 * gram.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in gram.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses and re-validates a Gram file: shape, finiteness, symmetry and,
/// independently of the stored report, positive semi-definiteness.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(GramHeader, KernelMatrix)> {
    let bad = |reason: &str| RunError::data(path, reason);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a Gram file"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..)
        .filter(|b| b.len() >= len)
        .ok_or_else(|| bad("truncated header"))?;
    let header: GramHeader =
        serde_json::from_slice(&body[..len]).map_err(|e| RunError::data(path, e))?;
    let raw = &body[len..];
    if header.refs.len() != header.n
        || Some(raw.len()) != header.n.checked_mul(header.n).map(|c| c * 8)
    {
        return Err(bad("value block does not match the announced size"));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut gram = KernelMatrix::new(header.n, values, header.params.clone())
        .map_err(|e| RunError::data(path, e))?;
    gram.psd = Some(kernels::psd_check(&gram).map_err(|e| RunError::data(path, e))?);
    Ok((header, gram))
}

pub fn write_gram(path: &Path, gram: &KernelMatrix, refs: &[String], digest: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    }
    fs::write(path, encode(gram, refs, digest)).map_err(|e| RunError::io(path, e))
}

pub fn read_gram(path: &Path) -> Result<(GramHeader, KernelMatrix)> {
    let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
    decode(&bytes, path)
}

/// Header without the value block, for staleness checks.
pub fn read_header(path: &Path) -> Result<GramHeader> {
    use std::io::Read;
    let mut file = File::open(path).map_err(|e| RunError::io(path, e))?;
    let mut prefix = [0u8; 16];
    file.read_exact(&mut prefix)
        .map_err(|e| RunError::io(path, e))?;
    if &prefix[..8] != MAGIC {
        return Err(RunError::data(path, "not a Gram file"));
    }
    let len = u64::from_le_bytes(prefix[8..].try_into().expect("8 bytes"));
    let mut header = Vec::new();
    file.take(len)
        .read_to_end(&mut header)
        .map_err(|e| RunError::io(path, e))?;
    serde_json::from_slice(&header).map_err(|e| RunError::data(path, e))
}

/// CSV export: a header of scene references, then one labelled row each.
pub fn write_gram_csv(path: &Path, gram: &KernelMatrix, refs: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| RunError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| RunError::data(path, e);
    let mut header = vec![String::from("scene_ref")];
    header.extend(refs.iter().cloned());
    w.write_record(&header).map_err(io)?;
    for (i, r) in refs.iter().enumerate() {
        let mut row = vec![r.clone()];
        row.extend(gram.row(i).iter().map(f64::to_string));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (KernelMatrix, Vec<String>) {
        let values = vec![2.0, 0.5, 0.1, 0.5, 1.0, 0.3, 0.1, 0.3, 1.5];
        let mut k = KernelMatrix::new(3, values, KernelConfig::Spgk { normalize: false }).unwrap();
        k.check_psd().unwrap();
        (k, vec!["a".into(), "b".into(), "c".into()])
    }

    #[test]
    fn round_trip_is_exact() {
        let (k, refs) = sample();
        let bytes = encode(&k, &refs, "d1");
        let (header, back) = decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(header.n, 3);
        assert_eq!(header.kernel, "spgk");
        assert_eq!(header.refs, refs);
        assert_eq!(back.values(), k.values());
        assert!(back.psd.is_some());
    }

    #[test]
    fn tampered_files_are_rejected() {
        let (k, refs) = sample();
        let bytes = encode(&k, &refs, "d1");
        assert!(decode(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
        let mut asym = bytes.clone();
        let off = bytes.len() - 8 * 9 + 8;
        asym[off..off + 8].copy_from_slice(&0.9f64.to_le_bytes());
        assert!(decode(&asym, Path::new("mem")).is_err());

        // symmetric but indefinite: [[1, 2], [2, 1]]
        let m = KernelMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0], KernelConfig::Linear).unwrap();
        let bad = encode(&m, &refs[..2], "d");
        assert!(decode(&bad, Path::new("mem")).is_err());
    }

    #[test]
    fn header_only_read_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let (k, refs) = sample();
        let p = dir.path().join("g.bin");
        write_gram(&p, &k, &refs, "xyz").unwrap();
        assert_eq!(read_header(&p).unwrap().config_digest, "xyz");
        let c = dir.path().join("g.csv");
        write_gram_csv(&c, &k, &refs).unwrap();
        let text = fs::read_to_string(&c).unwrap();
        assert_eq!(text.lines().next().unwrap(), "scene_ref,a,b,c");
        assert_eq!(text.lines().nth(2).unwrap(), "b,0.5,1,0.3");
    }
}
