//! Output formats.
//!
//! Binary correlation files start with a 16-byte little-endian header
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 0..4  | magic `NFCR`                            |
//! | 4..8  | format version (`1`)                    |
//! | 8..12 | matrix dimension `M`                    |
//! | 12..16| flags: bit 0 packed upper triangle (always set), bit 1 far-field matrix |
//!
//! followed by the upper triangle in row-major order (`n <= m`), each entry
//! stored as two `f64` values (real, imaginary).
//!
//! CSV files open with a `# schema=<name>` line and `# key=value` metadata
//! lines, then a header row.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use num_complex::Complex64;

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::sim::NmseCurve;
use crate::subspace::EigenSpectrum;

pub const MAGIC: [u8; 4] = *b"NFCR";
pub const BINARY_VERSION: u32 = 1;
pub const FLAG_UPPER_TRIANGLE: u32 = 1;
pub const FLAG_FAR_FIELD: u32 = 1 << 1;

pub const EIGENSPECTRUM_SCHEMA: &str = "nearfield.eigenspectrum.v1";
pub const NMSE_SCHEMA: &str = "nearfield.nmse.v1";
pub const CORRELATION_SCHEMA: &str = "nearfield.correlation.v1";

pub type Metadata = [(String, String)];

pub fn encode_correlation<W: Write>(mut w: W, matrix: &CorrelationMatrix, far_field: bool) -> Result<()> {
    let m = matrix.dim();
    let dim = u32::try_from(m).map_err(|_| Error::validation("matrix too large for the binary format"))?;
    let flags = FLAG_UPPER_TRIANGLE | if far_field { FLAG_FAR_FIELD } else { 0 };
    w.write_all(&MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    for n in 0..m {
        for col in n..m {
            let z = matrix.get(n, col);
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Header fields of a binary correlation file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryHeader {
    pub version: u32,
    pub dim: usize,
    pub flags: u32,
}

/// Reads a binary correlation file. `beta` is recovered as `tr(R) / M`.
pub fn decode_correlation<R: Read>(mut r: R) -> Result<(BinaryHeader, CorrelationMatrix)> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[..4] != MAGIC {
        return Err(Error::validation("not a correlation file (bad magic)"));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != BINARY_VERSION {
        return Err(Error::validation(format!("unsupported correlation file version {version}")));
    }
    let dim = word(8) as usize;
    let flags = word(12);
    if flags & FLAG_UPPER_TRIANGLE == 0 {
        return Err(Error::validation("only packed upper-triangle files are supported"));
    }
    let mut entries = Mat::<Complex64>::zeros(dim, dim);
    let mut buf = [0u8; 16];
    for n in 0..dim {
        for col in n..dim {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(buf[8..].try_into().expect("8 bytes"));
            let z = Complex64::new(re, im);
            entries[(n, col)] = z;
            entries[(col, n)] = z.conj();
        }
    }
    let trace: f64 = (0..dim).map(|i| entries[(i, i)].re).sum();
    let beta = if dim > 0 { trace / dim as f64 } else { 0.0 };
    Ok((BinaryHeader { version, dim, flags }, CorrelationMatrix::new(entries, beta)?))
}

pub fn write_correlation_binary(path: &Path, matrix: &CorrelationMatrix, far_field: bool) -> Result<()> {
    encode_correlation(BufWriter::new(File::create(path)?), matrix, far_field)
}

pub fn read_correlation_binary(path: &Path) -> Result<CorrelationMatrix> {
    Ok(decode_correlation(BufReader::new(File::open(path)?))?.1)
}

fn write_preamble<W: Write>(w: &mut W, schema: &str, metadata: &Metadata) -> Result<()> {
    writeln!(w, "# schema={schema}")?;
    for (key, value) in metadata {
        writeln!(w, "# {key}={value}")?;
    }
    Ok(())
}

fn db(x: f64) -> String {
    if x > 0.0 {
        format!("{:.6}", 10.0 * x.log10())
    } else {
        "-inf".to_string()
    }
}

/// Full matrix as `n,m,re,im` rows with 1-based indices.
pub fn write_correlation_csv<W: Write>(mut w: W, matrix: &CorrelationMatrix, metadata: &Metadata) -> Result<()> {
    write_preamble(&mut w, CORRELATION_SCHEMA, metadata)?;
    writeln!(w, "n,m,re,im")?;
    for n in 0..matrix.dim() {
        for m in 0..matrix.dim() {
            let z = matrix.get(n, m);
            writeln!(w, "{},{},{:e},{:e}", n + 1, m + 1, z.re, z.im)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `index,eigenvalue,eigenvalue_db,cumulative_fraction` rows, 1-based index.
pub fn write_eigenspectrum_csv<W: Write>(mut w: W, spectrum: &EigenSpectrum, metadata: &Metadata) -> Result<()> {
    write_preamble(&mut w, EIGENSPECTRUM_SCHEMA, metadata)?;
    writeln!(w, "index,eigenvalue,eigenvalue_db,cumulative_fraction")?;
    for (idx, (value, cumulative)) in spectrum
        .eigenvalues()
        .iter()
        .zip(spectrum.cumulative_fractions())
        .enumerate()
    {
        writeln!(w, "{},{:e},{},{:e}", idx + 1, value, db(*value), cumulative)?;
    }
    w.flush()?;
    Ok(())
}

/// `block,estimator,nmse,nmse_db,stderr` rows, blocks 1-based.
pub fn write_nmse_csv<W: Write>(mut w: W, curve: &NmseCurve, metadata: &Metadata) -> Result<()> {
    write_preamble(&mut w, NMSE_SCHEMA, metadata)?;
    writeln!(w, "block,estimator,nmse,nmse_db,stderr")?;
    for block in 1..=curve.blocks {
        for c in &curve.curves {
            writeln!(
                w,
                "{},{},{:e},{},{:e}",
                block,
                c.estimator.name(),
                c.at(block),
                db(c.at(block)),
                c.stderr_at(block)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{representative_correlation, ScatteringRegion};
    use crate::geometry::ArrayGeometry;
    use proptest::prelude::*;

    fn sample_matrix() -> CorrelationMatrix {
        let g = ArrayGeometry::new(3, 2, 0.05, 0.1).unwrap();
        let region = ScatteringRegion::new((-0.5, 0.5), (-0.3, 0.0), (10.0, 20.0)).unwrap();
        representative_correlation(&g, &region, 2.0).unwrap()
    }

    #[test]
    fn binary_layout() {
        let r = sample_matrix();
        let mut bytes = Vec::new();
        encode_correlation(&mut bytes, &r, true).unwrap();
        assert_eq!(bytes.len(), 16 + 21 * 16);
        assert_eq!(&bytes[..4], b"NFCR");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 6);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        // Second entry is (1, 2).
        let re = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[40..48].try_into().unwrap());
        assert_eq!(Complex64::new(re, im), r.get(0, 1));

        let (header, back) = decode_correlation(bytes.as_slice()).unwrap();
        assert_eq!(header.flags & FLAG_FAR_FIELD, FLAG_FAR_FIELD);
        assert_eq!(back.max_abs_diff(&r).unwrap(), 0.0);
        assert!((back.beta() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn binary_rejects_garbage() {
        assert!(decode_correlation(&b"XXXX0000000000000000"[..]).is_err());
        let mut bytes = Vec::new();
        encode_correlation(&mut bytes, &sample_matrix(), false).unwrap();
        bytes.truncate(40);
        assert!(decode_correlation(bytes.as_slice()).is_err());
    }

    #[test]
    fn correlation_csv_rows() {
        let r = sample_matrix();
        let mut out = Vec::new();
        write_correlation_csv(&mut out, &r, &[("preset".into(), "smoke".into())]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema=nearfield.correlation.v1");
        assert_eq!(lines[1], "# preset=smoke");
        assert_eq!(lines[2], "n,m,re,im");
        assert_eq!(lines.len(), 3 + 36);
        assert!(lines[3].starts_with("1,1,2e0,0e0"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn binary_roundtrip(values in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 10)) {
            // 4x4 Hermitian matrix from 10 upper-triangle values.
            let mut entries = Mat::<Complex64>::zeros(4, 4);
            let mut it = values.iter();
            for n in 0..4 {
                for m in n..4 {
                    let &(re, im) = it.next().unwrap();
                    let z = if n == m { Complex64::new(re.abs(), 0.0) } else { Complex64::new(re, im) };
                    entries[(n, m)] = z;
                    entries[(m, n)] = z.conj();
                }
            }
            let r = CorrelationMatrix::new(entries, 1.0).unwrap();
            let mut bytes = Vec::new();
            encode_correlation(&mut bytes, &r, false).unwrap();
            let (_, back) = decode_correlation(bytes.as_slice()).unwrap();
            prop_assert_eq!(back.max_abs_diff(&r).unwrap(), 0.0);
        }
    }
}
