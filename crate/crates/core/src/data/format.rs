//! On-disk sample files and dataset manifests.
//!
//! Sample layout, little-endian:
//!
//! ```text
//! "ENFD" | version u32 | N u32 | d u16 | n_a u16 | n_u u16 | l_mu u16
//! | f32 coords[N*d] | f32 a[N*n_a] | f32 u[N*n_u] | f32 mu[l_mu]
//! | u8 mask[N] | crc32 u32 (of all preceding bytes)
//! ```
//!
//! The manifest is UTF-8 text with `[train]` and `[test]` sections holding
//! one sample path per line, relative to the manifest's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::sample::FieldSample;
use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SAMPLE_MAGIC: &[u8; 4] = b"ENFD";
pub const SAMPLE_VERSION: u32 = 1;

fn dim16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v)
        .map_err(|_| Error::Config(format!("{what} = {v} does not fit the sample format")))
}

pub fn encode_sample(s: &FieldSample) -> Result<Vec<u8>> {
    let n = u32::try_from(s.len()).map_err(|_| Error::Config("too many points".into()))?;
    let mut w = ByteWriter::new();
    w.bytes(SAMPLE_MAGIC);
    w.u32(SAMPLE_VERSION);
    w.u32(n);
    w.u16(dim16(s.dim(), "d")?);
    w.u16(dim16(s.input.cols(), "n_a")?);
    w.u16(dim16(s.output.cols(), "n_u")?);
    w.u16(dim16(s.mu.len(), "l_mu")?);
    w.f32s(s.coords.data().iter().copied());
    w.f32s(s.input.data().iter().copied());
    w.f32s(s.output.data().iter().copied());
    w.f32s(s.mu.iter().copied());
    let mask: Vec<u8> = s.surface.iter().map(|&b| b as u8).collect();
    w.bytes(&mask);
    Ok(w.finish())
}

pub fn decode_sample(bytes: &[u8]) -> Result<FieldSample> {
    let mut r = ByteReader::checked(bytes)?;
    r.expect_magic(SAMPLE_MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != SAMPLE_VERSION {
        return Err(Error::format(
            at,
            format!("unsupported sample version {version}"),
        ));
    }
    let n = r.u32("point count")? as usize;
    let d = r.u16("d")? as usize;
    let n_a = r.u16("n_a")? as usize;
    let n_u = r.u16("n_u")? as usize;
    let l_mu = r.u16("l_mu")? as usize;
    if n == 0 || d == 0 || n_a == 0 || n_u == 0 {
        return Err(Error::format(
            r.offset(),
            format!("empty extents N={n} d={d} n_a={n_a} n_u={n_u}"),
        ));
    }
    let coords = Tensor::from_rows(n, d, r.f32s(n * d, "coordinates")?)?;
    let input = Tensor::from_rows(n, n_a, r.f32s(n * n_a, "input field")?)?;
    let output = Tensor::from_rows(n, n_u, r.f32s(n * n_u, "output field")?)?;
    let mu = r.f32s(l_mu, "global parameters")?;
    let at = r.offset();
    let mask = r.take(n, "surface mask")?;
    let surface = mask
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(
                at,
                format!("mask byte {other} is not 0 or 1"),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    FieldSample::new(coords, input, output, mu, surface)
}

pub fn write_sample(path: &Path, s: &FieldSample) -> Result<()> {
    write_file(path, &encode_sample(s)?)
}

pub fn read_sample(path: &Path) -> Result<FieldSample> {
    let bytes = read_file(path)?;
    decode_sample(&bytes).map_err(|e| match e {
        Error::Format { offset, msg } => {
            Error::format(offset, format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = String::from("[train]\n");
        for p in &self.train {
            let _ = writeln!(s, "{}", p.display());
        }
        s.push_str("[test]\n");
        for p in &self.test {
            let _ = writeln!(s, "{}", p.display());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Manifest> {
        let mut m = Manifest::default();
        let mut section: Option<bool> = None;
        let mut offset = 0u64;
        for line in text.lines() {
            let t = line.trim();
            match t {
                "" => {}
                _ if t.starts_with('#') => {}
                "[train]" => section = Some(true),
                "[test]" => section = Some(false),
                _ => match section {
                    Some(true) => m.train.push(PathBuf::from(t)),
                    Some(false) => m.test.push(PathBuf::from(t)),
                    None => {
                        return Err(Error::format(
                            offset,
                            format!("path {t:?} outside a section"),
                        ))
                    }
                },
            }
            offset += line.len() as u64 + 1;
        }
        Ok(m)
    }
}

/// Samples of both splits, loaded in manifest order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<FieldSample>,
    pub test: Vec<FieldSample>,
}

impl Dataset {
    /// Write `train/NNNNN.enfd`, `test/NNNNN.enfd` and `manifest.txt` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<Manifest> {
        let mut m = Manifest::default();
        for (split, samples, list) in [
            ("train", &self.train, &mut m.train),
            ("test", &self.test, &mut m.test),
        ] {
            for (i, s) in samples.iter().enumerate() {
                let rel = PathBuf::from(split).join(format!("{i:05}.enfd"));
                write_sample(&dir.join(&rel), s)?;
                list.push(rel);
            }
        }
        write_file(&dir.join("manifest.txt"), m.render().as_bytes())?;
        Ok(m)
    }

    /// Load from a manifest file or a directory containing `manifest.txt`.
    pub fn load(path: &Path) -> Result<Dataset> {
        let manifest_path = if path.is_dir() {
            path.join("manifest.txt")
        } else {
            path.to_path_buf()
        };
        let text = String::from_utf8(read_file(&manifest_path)?).map_err(|e| {
            Error::format(e.utf8_error().valid_up_to() as u64, "manifest is not UTF-8")
        })?;
        let m = Manifest::parse(&text)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let load = |ps: &[PathBuf]| {
            ps.iter()
                .map(|p| read_sample(&base.join(p)))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Dataset {
            train: load(&m.train)?,
            test: load(&m.test)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FieldSample {
        FieldSample::new(
            Tensor::from_rows(3, 2, vec![0.5, -1.25, 0.1, 0.2, 2.0, 3.0]).unwrap(),
            Tensor::from_rows(3, 1, vec![0.0, 0.75, 1.5]).unwrap(),
            Tensor::from_rows(3, 1, vec![1.0, -3.0, 0.0]).unwrap(),
            vec![0.5, 0.25],
            vec![true, false, false],
        )
        .unwrap()
        .to_f32_precision()
    }

    #[test]
    fn header_layout() {
        let b = encode_sample(&sample()).unwrap();
        assert_eq!(&b[0..4], b"ENFD");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 3);
        assert_eq!(&b[12..20], &[2, 0, 1, 0, 1, 0, 2, 0]);
        assert_eq!(b.len(), 20 + 4 * (6 + 3 + 3 + 2) + 3 + 4);
    }

    #[test]
    fn decode_inverts_encode() {
        let s = sample();
        assert_eq!(decode_sample(&encode_sample(&s).unwrap()).unwrap(), s);
    }

    #[test]
    fn flipped_byte_fails_the_checksum() {
        let mut b = encode_sample(&sample()).unwrap();
        b[30] ^= 0x10;
        assert!(matches!(decode_sample(&b), Err(Error::Checksum { .. })));
    }

    #[test]
    fn truncation_is_reported_with_an_offset() {
        let b = encode_sample(&sample()).unwrap();
        let mut w = ByteWriter::new();
        w.bytes(&b[..40]);
        match decode_sample(&w.finish()) {
            Err(Error::Format { offset, .. }) => assert!(offset <= 40),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let b = encode_sample(&sample()).unwrap();
        let mut w = ByteWriter::new();
        w.bytes(b"ENFC");
        w.bytes(&b[4..b.len() - 4]);
        assert!(matches!(
            decode_sample(&w.finish()),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn manifest_sections() {
        let m = Manifest {
            train: vec!["train/0.enfd".into()],
            test: vec!["test/0.enfd".into(), "test/1.enfd".into()],
        };
        let text = m.render();
        assert_eq!(
            text,
            "[train]\ntrain/0.enfd\n[test]\ntest/0.enfd\ntest/1.enfd\n"
        );
        assert_eq!(Manifest::parse(&text).unwrap(), m);
        assert!(Manifest::parse("a.enfd\n").is_err());
    }
}
