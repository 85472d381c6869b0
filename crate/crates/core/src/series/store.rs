//! Dataset manifest (CSV) and binary sample cache.
//!
//! Cache layout, little-endian:
//!
//! ```text
//! magic   [u8; 4] = "WTS3"
//! version u32
//! count   u64      number of sequences
//! n       u32      tokens per sequence
//! s       u32      patch length
//! count × {
//!     channel   u8       255 when the series is not a SCADA channel
//!     start     i64
//!     id_len    u16, then id_len bytes of UTF-8 turbine id
//!     mean, std f64
//!     values    n·s × f64
//! }
//! crc32   u32      over every preceding byte
//! ```

use std::io::{Read, Write};

use super::s3::{NormStats, S3Sequence};
use crate::clean::Channel;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: [u8; 4] = *b"WTS3";
pub const CACHE_VERSION: u32 = 1;
const NO_CHANNEL: u8 = 255;

/// One row of the dataset index: where a window came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub sample_id: usize,
    pub split: String,
    pub turbine_id: String,
    /// File the window was cut from.
    pub source: String,
    /// Row of `source` holding the first point.
    pub offset: usize,
    pub start: i64,
    pub length: usize,
}

const MANIFEST_HEADER: [&str; 7] = ["sample_id", "split", "turbine_id", "source", "offset", "start", "length"];

pub fn write_manifest(entries: &[ManifestEntry], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MANIFEST_HEADER)?;
    for e in entries {
        w.write_record([
            e.sample_id.to_string(),
            e.split.clone(),
            e.turbine_id.clone(),
            e.source.clone(),
            e.offset.to_string(),
            e.start.to_string(),
            e.length.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<manifest>", e))?;
    Ok(())
}

pub fn read_manifest(reader: impl Read) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(MANIFEST_HEADER) {
        return Err(Error::invalid(format!("manifest header must be {}", MANIFEST_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::invalid(format!("manifest row {}: bad {what}", line + 2));
        out.push(ManifestEntry {
            sample_id: rec[0].parse().map_err(|_| bad("sample_id"))?,
            split: rec[1].to_string(),
            turbine_id: rec[2].to_string(),
            source: rec[3].to_string(),
            offset: rec[4].parse().map_err(|_| bad("offset"))?,
            start: rec[5].parse().map_err(|_| bad("start"))?,
            length: rec[6].parse().map_err(|_| bad("length"))?,
        });
    }
    Ok(out)
}

pub fn write_cache(seqs: &[S3Sequence], s: usize, mut writer: impl Write) -> Result<()> {
    let len = seqs.first().map_or(s, |q| q.values.len());
    if s == 0 || len % s != 0 || seqs.iter().any(|q| q.values.len() != len) {
        return Err(Error::invalid(format!("cache needs equal-length sequences divisible by {s}")));
    }
    let mut buf = Vec::with_capacity(32 + seqs.len() * (len * 8 + 64));
    buf.extend_from_slice(&CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(seqs.len() as u64).to_le_bytes());
    buf.extend_from_slice(&((len / s) as u32).to_le_bytes());
    buf.extend_from_slice(&(s as u32).to_le_bytes());
    for q in seqs {
        buf.push(q.channel.map_or(NO_CHANNEL, |c| c.index() as u8));
        buf.extend_from_slice(&q.start.to_le_bytes());
        let id = q.turbine_id.as_bytes();
        let id_len = u16::try_from(id.len()).map_err(|_| Error::invalid("turbine id too long"))?;
        buf.extend_from_slice(&id_len.to_le_bytes());
        buf.extend_from_slice(id);
        buf.extend_from_slice(&q.stats.mean.to_le_bytes());
        buf.extend_from_slice(&q.stats.std.to_le_bytes());
        for v in &q.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    writer.write_all(&buf).map_err(|e| Error::io("<cache>", e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::invalid("cache truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Returns the sequences and the patch length.
pub fn read_cache(mut reader: impl Read) -> Result<(Vec<S3Sequence>, usize)> {
    let mut all = Vec::new();
    reader.read_to_end(&mut all).map_err(|e| Error::io("<cache>", e))?;
    if all.len() < 28 {
        return Err(Error::invalid("cache truncated"));
    }
    let (body, tail) = all.split_at(all.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().expect("4 bytes")) {
        return Err(Error::invalid("cache checksum mismatch"));
    }
    let mut c = Cursor { buf: body, pos: 0 };
    if c.array::<4>()? != CACHE_MAGIC {
        return Err(Error::invalid("not a sample cache (bad magic)"));
    }
    let version = u32::from_le_bytes(c.array()?);
    if version != CACHE_VERSION {
        return Err(Error::invalid(format!("cache version {version}, expected {CACHE_VERSION}")));
    }
    let count = u64::from_le_bytes(c.array()?) as usize;
    let n = u32::from_le_bytes(c.array()?) as usize;
    let s = u32::from_le_bytes(c.array()?) as usize;
    let mut out = Vec::with_capacity(count.min(body.len() / 8));
    for _ in 0..count {
        let channel = match c.array::<1>()?[0] {
            NO_CHANNEL => None,
            i => Some(*Channel::ALL
                .get(i as usize)
                .ok_or_else(|| Error::invalid("bad channel index in cache"))?),
        };
        let start = i64::from_le_bytes(c.array()?);
        let id_len = u16::from_le_bytes(c.array()?) as usize;
        let turbine_id = std::str::from_utf8(c.take(id_len)?)
            .map_err(|_| Error::invalid("turbine id is not UTF-8"))?
            .to_string();
        let mean = f64::from_le_bytes(c.array()?);
        let std = f64::from_le_bytes(c.array()?);
        let values = c
            .take(n * s * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        out.push(S3Sequence {
            values,
            channel,
            stats: NormStats { mean, std },
            turbine_id,
            start,
        });
    }
    if c.pos != body.len() {
        return Err(Error::invalid("trailing bytes in cache"));
    }
    Ok((out, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(ch: Channel, start: i64) -> S3Sequence {
        S3Sequence {
            values: (0..12).map(|i| (i as f64).sin() / 3.0).collect(),
            channel: Some(ch),
            stats: NormStats { mean: 0.1, std: 7.0 },
            turbine_id: "T07".into(),
            start,
        }
    }

    #[test]
    fn cache_round_trip_and_corruption() {
        let mut seqs = vec![seq(Channel::Power, 0), seq(Channel::AmbientTemperature, 600)];
        seqs[1].channel = None;
        let mut buf = Vec::new();
        write_cache(&seqs, 4, &mut buf).unwrap();
        let (back, s) = read_cache(&buf[..]).unwrap();
        assert_eq!((back, s), (seqs, 4));
        assert!(read_cache(&buf[..buf.len() - 3]).is_err());
        let mut flipped = buf.clone();
        flipped[40] ^= 1;
        assert!(read_cache(&flipped[..]).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let e = ManifestEntry {
            sample_id: 3,
            split: "test".into(),
            turbine_id: "T01".into(),
            source: "clean/T01.csv".into(),
            offset: 120,
            start: 1_672_531_200,
            length: 768,
        };
        let mut buf = Vec::new();
        write_manifest(std::slice::from_ref(&e), &mut buf).unwrap();
        assert_eq!(read_manifest(&buf[..]).unwrap(), vec![e]);
    }
}
