//! Matrix, mask and column-stream files.
//!
//! Binary matrix (`.rpcm`): a 16-byte header
//!
//! ```text
//! offset  size  field
//! 0       4     magic "RPCM"
//! 4       2     version (u16 LE, currently 1)
//! 6       2     flags   (u16 LE, must be 0)
//! 8       4     m       (u32 LE)
//! 12      4     n       (u32 LE)
//! ```
//!
//! followed by `m·n` little-endian `f64` values in row-major order. Values
//! must be finite.
//!
//! Text matrix (`.csv`): first line `m,n`, then `m` lines of `n`
//! comma-separated decimals. Mask: one `row,col` pair per line, zero-based,
//! sorted; an optional `row,col` header line is accepted on input.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use super::Mask;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

pub const MAGIC: &[u8; 4] = b"RPCM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 16;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

fn parse_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Parse { offset, line: None, message: message.into() }
}

fn line_err(offset: u64, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset, line: Some(line), message: message.into() }
}

/// Header of a binary matrix file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryHeader {
    pub m: usize,
    pub n: usize,
}

impl BinaryHeader {
    fn encode(&self) -> Result<[u8; 16]> {
        let m = u32::try_from(self.m).map_err(|_| Error::Parameter(format!("row count {} exceeds u32", self.m)))?;
        let n = u32::try_from(self.n).map_err(|_| Error::Parameter(format!("column count {} exceeds u32", self.n)))?;
        let mut h = [0u8; 16];
        h[0..4].copy_from_slice(MAGIC);
        h[4..6].copy_from_slice(&VERSION.to_le_bytes());
        h[6..8].copy_from_slice(&0u16.to_le_bytes());
        h[8..12].copy_from_slice(&m.to_le_bytes());
        h[12..16].copy_from_slice(&n.to_le_bytes());
        Ok(h)
    }

    fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut h = [0u8; 16];
        let got = read_fully(r, &mut h)?;
        if got == 0 {
            return Err(parse_err(0, "empty file"));
        }
        if got < h.len() {
            return Err(parse_err(got as u64, format!("truncated header ({got} of 16 bytes)")));
        }
        if &h[0..4] != MAGIC {
            return Err(parse_err(0, "bad magic (expected \"RPCM\")"));
        }
        let version = u16::from_le_bytes([h[4], h[5]]);
        if version != VERSION {
            return Err(parse_err(4, format!("unsupported version {version}")));
        }
        let flags = u16::from_le_bytes([h[6], h[7]]);
        if flags != 0 {
            return Err(parse_err(6, format!("unsupported flags {flags:#06x}")));
        }
        let m = u32::from_le_bytes([h[8], h[9], h[10], h[11]]) as usize;
        let n = u32::from_le_bytes([h[12], h[13], h[14], h[15]]) as usize;
        Ok(Self { m, n })
    }
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Io { path: "<stream>".into(), message: e.to_string() }),
        }
    }
    Ok(filled)
}

pub fn write_binary<W: Write>(w: &mut W, a: &Matrix) -> Result<()> {
    let header = BinaryHeader { m: a.nrows(), n: a.ncols() }.encode()?;
    let wrap = |e: std::io::Error| Error::Io { path: "<stream>".into(), message: e.to_string() };
    w.write_all(&header).map_err(wrap)?;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            w.write_all(&a[(i, j)].to_le_bytes()).map_err(wrap)?;
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(r: &mut R) -> Result<Matrix> {
    let BinaryHeader { m, n } = BinaryHeader::read(r)?;
    let mut a = Matrix::zeros(m, n);
    let mut buf = [0u8; 8];
    for i in 0..m {
        for j in 0..n {
            let offset = HEADER_LEN + 8 * (i * n + j) as u64;
            let got = read_fully(r, &mut buf)?;
            if got < 8 {
                return Err(parse_err(
                    offset + got as u64,
                    format!("truncated payload: expected {} values, got {}", m * n, i * n + j),
                ));
            }
            let v = f64::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(parse_err(offset, format!("non-finite value at ({i}, {j})")));
            }
            a[(i, j)] = v;
        }
    }
    let mut extra = [0u8; 1];
    if read_fully(r, &mut extra)? != 0 {
        return Err(parse_err(HEADER_LEN + 8 * (m * n) as u64, "trailing bytes after payload"));
    }
    Ok(a)
}

pub fn save_binary(path: &Path, a: &Matrix) -> Result<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    write_binary(&mut w, a)?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_binary(path: &Path) -> Result<Matrix> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_binary(&mut BufReader::new(f))
}

pub fn write_text<W: Write>(w: &mut W, a: &Matrix) -> Result<()> {
    let wrap = |e: std::io::Error| Error::Io { path: "<stream>".into(), message: e.to_string() };
    writeln!(w, "{},{}", a.nrows(), a.ncols()).map_err(wrap)?;
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:?}", a[(i, j)])).collect();
        writeln!(w, "{}", row.join(",")).map_err(wrap)?;
    }
    Ok(())
}

pub fn read_text<R: BufRead>(r: R) -> Result<Matrix> {
    let mut offset = 0u64;
    let mut lines = r.lines();
    let mut next_line = |offset: &mut u64| -> Result<Option<(String, u64)>> {
        match lines.next() {
            None => Ok(None),
            Some(Ok(l)) => {
                let start = *offset;
                *offset += l.len() as u64 + 1;
                Ok(Some((l, start)))
            }
            Some(Err(e)) => Err(parse_err(*offset, e.to_string())),
        }
    };
    let (header, _) = next_line(&mut offset)?.ok_or_else(|| parse_err(0, "empty file"))?;
    let dims: Vec<&str> = header.trim().split(',').collect();
    let parse_dim =
        |s: &str| s.trim().parse::<usize>().map_err(|_| line_err(0, 1, format!("bad dimension `{s}` in header")));
    if dims.len() != 2 {
        return Err(line_err(0, 1, "header must be `m,n`"));
    }
    let (m, n) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let mut a = Matrix::zeros(m, n);
    for i in 0..m {
        let line_no = i + 2;
        let (line, start) = next_line(&mut offset)?
            .ok_or_else(|| line_err(offset, line_no, format!("expected {m} data rows, found {i}")))?;
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != n {
            return Err(line_err(start, line_no, format!("expected {n} values, found {}", fields.len())));
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 =
                f.trim().parse().map_err(|_| line_err(start, line_no, format!("bad number `{f}` in column {j}")))?;
            if !v.is_finite() {
                return Err(line_err(start, line_no, format!("non-finite value in column {j}")));
            }
            a[(i, j)] = v;
        }
    }
    while let Some((line, start)) = next_line(&mut offset)? {
        if !line.trim().is_empty() {
            return Err(line_err(start, m + 2, format!("header declares {m} rows but more data follows")));
        }
    }
    Ok(a)
}

pub fn save_text(path: &Path, a: &Matrix) -> Result<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    write_text(&mut w, a)?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_text(path: &Path) -> Result<Matrix> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_text(BufReader::new(f))
}

/// Loads a matrix, choosing the text format for `.csv`/`.txt` files and the
/// binary format otherwise.
pub fn load_matrix(path: &Path) -> Result<Matrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("txt") => load_text(path),
        _ => load_binary(path),
    }
}

pub fn save_matrix(path: &Path, a: &Matrix) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("txt") => save_text(path, a),
        _ => save_binary(path, a),
    }
}

pub fn write_mask<W: Write>(w: &mut W, mask: &Mask) -> Result<()> {
    for &(i, j) in mask.indices() {
        writeln!(w, "{i},{j}").map_err(|e| Error::Io { path: "<stream>".into(), message: e.to_string() })?;
    }
    Ok(())
}

pub fn read_mask<R: BufRead>(r: R, m: usize, n: usize) -> Result<Mask> {
    let mut idx = Vec::new();
    let mut offset = 0u64;
    let mut prev: Option<(usize, usize)> = None;
    for (line_idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| parse_err(offset, e.to_string()))?;
        let start = offset;
        offset += line.len() as u64 + 1;
        let t = line.trim();
        if t.is_empty() || (line_idx == 0 && t.eq_ignore_ascii_case("row,col")) {
            continue;
        }
        let parts: Vec<&str> = t.split(',').collect();
        if parts.len() != 2 {
            return Err(line_err(start, line_idx + 1, "expected `row,col`"));
        }
        let parse =
            |s: &str| s.trim().parse::<usize>().map_err(|_| line_err(start, line_idx + 1, format!("bad index `{s}`")));
        let pair = (parse(parts[0])?, parse(parts[1])?);
        if pair.0 >= m || pair.1 >= n {
            return Err(line_err(start, line_idx + 1, format!("index ({}, {}) outside {m} x {n}", pair.0, pair.1)));
        }
        if let Some(p) = prev {
            if pair <= p {
                return Err(line_err(start, line_idx + 1, "mask entries must be sorted and distinct"));
            }
        }
        prev = Some(pair);
        idx.push(pair);
    }
    Mask::new(m, n, idx)
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    write_mask(&mut w, mask)?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_mask(path: &Path, m: usize, n: usize) -> Result<Mask> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_mask(BufReader::new(f), m, n)
}

/// Reads a binary matrix file one column (sample) at a time.
pub struct ColumnStream<R> {
    reader: R,
    header: BinaryHeader,
    next: usize,
}

impl ColumnStream<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| io_err(path, e))?;
        Self::new(BufReader::new(f))
    }
}

impl<R: Read + Seek> ColumnStream<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let header = BinaryHeader::read(&mut reader)?;
        Ok(Self { reader, header, next: 0 })
    }

    /// Sample dimension `m`.
    pub fn dim(&self) -> usize {
        self.header.m
    }

    /// Number of samples `n`.
    pub fn len(&self) -> usize {
        self.header.n
    }

    pub fn is_empty(&self) -> bool {
        self.header.n == 0
    }

    /// Next column, or `None` after the last one.
    pub fn next_column(&mut self) -> Result<Option<Vector>> {
        let BinaryHeader { m, n } = self.header;
        if self.next >= n {
            return Ok(None);
        }
        let j = self.next;
        let mut col = Vector::zeros(m);
        let mut buf = [0u8; 8];
        for i in 0..m {
            let offset = HEADER_LEN + 8 * (i * n + j) as u64;
            self.reader.seek(SeekFrom::Start(offset)).map_err(|e| parse_err(offset, e.to_string()))?;
            let got = read_fully(&mut self.reader, &mut buf)?;
            if got < 8 {
                return Err(parse_err(offset + got as u64, format!("truncated payload in column {j}")));
            }
            let v = f64::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(parse_err(offset, format!("non-finite value at ({i}, {j})")));
            }
            col[i] = v;
        }
        self.next += 1;
        Ok(Some(col))
    }
}

impl<R: Read + Seek> Iterator for ColumnStream<R> {
    type Item = Result<Vector>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_column().transpose()
    }
}
