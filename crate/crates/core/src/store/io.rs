use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::Vocab;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"DEVF";
const VERSION: u32 = 1;

/// On-disk vector format.
///
/// * `Text`: header line `<count> <dim>`, then `token v1 … vd` per line.
/// * `Binary`: magic `DEVF`, u32 version, u64 count, u32 dim, then per row a
///   u32 token length, the UTF-8 token and `dim` little-endian f32 values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    Text,
    Binary,
}

impl VectorFormat {
    /// `.bin` means binary, anything else text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => VectorFormat::Binary,
            _ => VectorFormat::Text,
        }
    }
}

impl FromStr for VectorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(VectorFormat::Text),
            "binary" | "bin" => Ok(VectorFormat::Binary),
            other => Err(Error::invalid(format!("unknown vector format `{other}`"))),
        }
    }
}

/// Named rows of equal dimension, as read from or written to a vector file.
#[derive(Debug, Clone)]
pub struct VectorTable {
    pub dim: usize,
    pub vocab: Vocab,
    pub data: Vec<f64>,
}

impl VectorTable {
    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn read_vectors(path: &Path, format: VectorFormat) -> Result<VectorTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    match format {
        VectorFormat::Text => read_text(BufReader::new(file), &name),
        VectorFormat::Binary => read_binary(BufReader::new(file), &name),
    }
}

pub fn write_vectors(path: &Path, format: VectorFormat, table: &VectorTable) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        VectorFormat::Text => write_text(&mut w, table),
        VectorFormat::Binary => write_binary(&mut w, table),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text<R: BufRead>(reader: R, name: &str) -> Result<VectorTable> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(Error::parse(name, 0, "no vectors")),
            Some((i, line)) => {
                let line = line.map_err(|e| Error::io(name, e))?;
                if !line.trim().is_empty() {
                    break (i + 1, line);
                }
            }
        }
    };
    let mut parts = header.1.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(name, header.0, "header must be `<count> <dim>`"))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(name, header.0, "header must be `<count> <dim>`"))?;
    if dim == 0 {
        return Err(Error::parse(name, header.0, "dimension must be positive"));
    }
    let mut vocab = Vocab::new();
    let mut data = Vec::with_capacity(count * dim);
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(name, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line has a token");
        let start = data.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(name, lineno, format!("bad number `{f}` for `{token}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(name, lineno, format!("non-finite value for `{token}`")));
            }
            data.push(v);
        }
        let got = data.len() - start;
        if got != dim {
            return Err(Error::parse(name, lineno, format!("row `{token}` has {got} values, expected {dim}")));
        }
        if vocab.insert_new(token).is_none() {
            return Err(Error::parse(name, lineno, format!("duplicate token `{token}`")));
        }
    }
    if vocab.is_empty() {
        return Err(Error::parse(name, header.0, "no vectors"));
    }
    if vocab.len() != count {
        log::warn!("{name}: header declares {count} rows, found {}", vocab.len());
    }
    Ok(VectorTable { dim, vocab, data })
}

fn write_text<W: Write>(w: &mut W, table: &VectorTable) -> std::io::Result<()> {
    writeln!(w, "{} {}", table.len(), table.dim)?;
    for (i, name) in table.vocab.names().iter().enumerate() {
        write!(w, "{name}")?;
        for v in table.row(i) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R, name: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::io(name, e))?;
    Ok(buf)
}

pub(crate) fn read_binary<R: Read>(mut r: R, name: &str) -> Result<VectorTable> {
    let magic: [u8; 4] = read_exact(&mut r, name)?;
    if &magic != MAGIC {
        return Err(Error::parse(name, 0, "not a binary vector file (bad magic)"));
    }
    let version = u32::from_le_bytes(read_exact(&mut r, name)?);
    if version != VERSION {
        return Err(Error::parse(name, 0, format!("unsupported binary vector version {version}")));
    }
    let count = u64::from_le_bytes(read_exact(&mut r, name)?) as usize;
    let dim = u32::from_le_bytes(read_exact(&mut r, name)?) as usize;
    if count == 0 {
        return Err(Error::parse(name, 0, "no vectors"));
    }
    if dim == 0 {
        return Err(Error::parse(name, 0, "dimension must be positive"));
    }
    let mut vocab = Vocab::new();
    let mut data = Vec::with_capacity(count * dim);
    for row in 1..=count {
        let len = u32::from_le_bytes(read_exact(&mut r, name)?) as usize;
        let mut tok = vec![0u8; len];
        r.read_exact(&mut tok).map_err(|e| Error::io(name, e))?;
        let tok = String::from_utf8(tok).map_err(|_| Error::parse(name, row, "token is not UTF-8"))?;
        for _ in 0..dim {
            let v = f32::from_le_bytes(read_exact(&mut r, name)?);
            if !v.is_finite() {
                return Err(Error::parse(name, row, format!("non-finite value for `{tok}`")));
            }
            data.push(v as f64);
        }
        if vocab.insert_new(&tok).is_none() {
            return Err(Error::parse(name, row, format!("duplicate token `{tok}`")));
        }
    }
    Ok(VectorTable { dim, vocab, data })
}

fn write_binary<W: Write>(w: &mut W, table: &VectorTable) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(table.len() as u64).to_le_bytes())?;
    w.write_all(&(table.dim as u32).to_le_bytes())?;
    for (i, name) in table.vocab.names().iter().enumerate() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        for &v in table.row(i) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, Vec<f64>)]) -> VectorTable {
        let mut vocab = Vocab::new();
        let mut data = Vec::new();
        for (n, v) in rows {
            vocab.intern(n);
            data.extend(v);
        }
        VectorTable { dim: rows[0].1.len(), vocab, data }
    }

    #[test]
    fn three_words_of_dimension_300() {
        let mut text = String::from("3 300\n");
        for w in ["x", "y", "z"] {
            text.push_str(w);
            for k in 0..300 {
                text.push_str(&format!(" {}", k as f64 * 0.001));
            }
            text.push('\n');
        }
        let t = read_text(text.as_bytes(), "mem").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dim, 300);
    }

    #[test]
    fn empty_input_has_no_vectors() {
        let err = read_text("".as_bytes(), "mem").unwrap_err();
        assert!(err.to_string().contains("no vectors"), "{err}");
        let err = read_text("0 5\n".as_bytes(), "mem").unwrap_err();
        assert!(err.to_string().contains("no vectors"), "{err}");
    }

    #[test]
    fn wrong_row_length_names_the_row() {
        let err = read_text("2 2\na 1 2\nb 1 2 3\n".as_bytes(), "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mem:3") && msg.contains("`b`"), "{msg}");
    }

    #[test]
    fn duplicates_and_non_finite_are_rejected() {
        assert!(read_text("2 1\na 1\na 2\n".as_bytes(), "mem").unwrap_err().to_string().contains("duplicate"));
        assert!(read_text("1 1\na NaN\n".as_bytes(), "mem").is_err());
        assert!(read_text("1 1\na inf\n".as_bytes(), "mem").is_err());
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let t = table(&[("a", vec![0.1f32 as f64, -2.5]), ("bé", vec![3.0, 1e-7f32 as f64])]);
        let mut buf = Vec::new();
        write_binary(&mut buf, &t).unwrap();
        let back = read_binary(buf.as_slice(), "mem").unwrap();
        let mut buf2 = Vec::new();
        write_binary(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
        assert_eq!(back.data, t.data);
        assert_eq!(back.vocab.names(), t.vocab.names());
    }

    #[test]
    fn text_round_trip() {
        let t = table(&[("a", vec![0.123456789, -2.5]), ("b", vec![3.0, 1e-9])]);
        let mut buf = Vec::new();
        write_text(&mut buf, &t).unwrap();
        let back = read_text(buf.as_slice(), "mem").unwrap();
        for (x, y) in back.data.iter().zip(&t.data) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn bad_magic() {
        assert!(read_binary(&b"XXXX\x01\0\0\0"[..], "mem").is_err());
    }
}
