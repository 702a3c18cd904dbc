//! File writers (CSV, JSON, 16-bit PGM) and the per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use sparsemag_core::field::{FieldMap, PRESET_VERSION};

use crate::config::ExperimentConfig;
use crate::CliError;

const PGM_MAX: u32 = 65535;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// Plain-text.
    P2,
    /// Binary, big-endian 16-bit samples.
    P5,
}

impl PgmFormat {
    pub fn from_config(name: &str) -> Self {
        if name == "p2" {
            PgmFormat::P2
        } else {
            PgmFormat::P5
        }
    }
}

/// Encodes a normalized map; values are clamped to `[0, 1]` for the image only.
pub fn encode_pgm(map: &FieldMap, format: PgmFormat) -> Vec<u8> {
    let level = |v: f64| (v.clamp(0.0, 1.0) * PGM_MAX as f64).round() as u16;
    let magic = match format {
        PgmFormat::P2 => "P2",
        PgmFormat::P5 => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n{PGM_MAX}\n", map.width, map.height).into_bytes();
    match format {
        PgmFormat::P5 => {
            for &v in &map.values {
                out.extend_from_slice(&level(v).to_be_bytes());
            }
        }
        PgmFormat::P2 => {
            for row in map.values.chunks(map.width) {
                let line: Vec<String> = row.iter().map(|&v| level(v).to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

#[cfg(test)]
/// Parses P2 or P5 with any maxval up to 65535; values are scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<FieldMap, CliError> {
    let bad = |m: &str| CliError::Numerical(format!("malformed PGM: {m}"));
    let mut pos = 0;
    let mut token = || -> Result<String, CliError> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| s.parse::<usize>().map_err(|_| bad("bad number"));
    let width = num(token()?)?;
    let height = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > PGM_MAX as usize {
        return Err(bad("maxval out of range"));
    }
    let count = width * height;
    let values: Vec<f64> = match magic.as_str() {
        "P2" => (0..count)
            .map(|_| num(token()?).map(|v| v as f64 / maxval as f64))
            .collect::<Result<_, _>>()?,
        "P5" => {
            let data = &bytes[(pos + 1).min(bytes.len())..];
            let wide = maxval > 255;
            let need = if wide { 2 * count } else { count };
            if data.len() < need {
                return Err(bad("truncated raster"));
            }
            (0..count)
                .map(|k| {
                    let v = if wide { u16::from_be_bytes([data[2 * k], data[2 * k + 1]]) as f64 } else { data[k] as f64 };
                    v / maxval as f64
                })
                .collect()
        }
        _ => return Err(bad("unknown magic")),
    };
    FieldMap::new(width, height, values).map_err(CliError::from)
}

/// Collects the files of one command run and writes them with a manifest.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<(String, String)>,
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    name: &'a str,
    sha256: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_sha256: String,
    preset_version: u32,
    tool_version: &'a str,
    files: Vec<ManifestFile<'a>>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_map(&mut self, stem: &str, map: &FieldMap, format: PgmFormat) -> Result<(), CliError> {
        self.write_bytes(&format!("{stem}.pgm"), &encode_pgm(map, format))?;
        let rows: Vec<Vec<String>> = (0..map.height)
            .flat_map(|j| (0..map.width).map(move |i| (i, j)))
            .map(|(i, j)| vec![i.to_string(), j.to_string(), num(map.get(i, j))])
            .collect();
        self.write_csv(&format!("{stem}.csv"), &["x_index", "y_index", "value"], &rows)
    }

    /// Writes the resolved `config.toml` and a `manifest.json` listing every file written.
    pub fn finish(mut self, command: &str, cfg: &ExperimentConfig) -> Result<(), CliError> {
        self.write_bytes("config.toml", cfg.to_toml().as_bytes())?;
        let manifest = Manifest {
            command,
            seed: cfg.seed(),
            config_sha256: cfg.hash(),
            preset_version: PRESET_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            files: self.files.iter().map(|(n, h)| ManifestFile { name: n, sha256: h }).collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Numerical(e.to_string()))?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

/// Shortest round-trip decimal; non-finite values as `inf`, `-inf`, `nan`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> FieldMap {
        FieldMap::new(4, 3, (0..12).map(|k| k as f64 / 11.0).collect()).unwrap()
    }

    #[test]
    fn pgm_roundtrip_both_formats() {
        let m = ramp();
        for f in [PgmFormat::P2, PgmFormat::P5] {
            let back = decode_pgm(&encode_pgm(&m, f)).unwrap();
            assert_eq!((back.width, back.height), (4, 3));
            for (a, b) in back.values.iter().zip(&m.values) {
                assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
    }

    #[test]
    fn pgm_layout_is_row_major_top_left() {
        let bytes = encode_pgm(&ramp(), PgmFormat::P5);
        let header = b"P5\n4 3\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let raster = &bytes[header.len()..];
        assert_eq!(raster.len(), 24);
        assert_eq!(u16::from_be_bytes([raster[0], raster[1]]), 0);
        assert_eq!(u16::from_be_bytes([raster[22], raster[23]]), 65535);
        let p2 = String::from_utf8(encode_pgm(&ramp(), PgmFormat::P2)).unwrap();
        assert!(p2.lines().nth(3).unwrap().starts_with("0 "));
    }

    #[test]
    fn images_clamp_but_values_do_not() {
        let m = FieldMap::new(2, 1, vec![-0.2, 1.3]).unwrap();
        let back = decode_pgm(&encode_pgm(&m, PgmFormat::P5)).unwrap();
        assert_eq!(back.values, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_pgm(b"P7\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n4 4\n65535\n\x00\x01").is_err());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(f64::NAN), "nan");
    }
}
