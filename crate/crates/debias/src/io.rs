//! File access with input digests, PNG coding, run manifests and
//! all-or-nothing output commits.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use debias_core::region::RasterImage;
use serde::Serialize;
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// Reads input files and remembers their digests for the manifest.
#[derive(Debug, Default)]
pub struct Inputs {
    digests: Vec<FileDigest>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.digests.push(FileDigest {
            name: file_name(path),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn read_text(&mut self, path: &Path) -> Result<String> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|_| Error::input(path, "not valid UTF-8"))
    }

    pub fn digests(&self) -> &[FileDigest] {
        &self.digests
    }
}

/// Decodes any 8/16-bit PNG into 1- or 3-channel 8-bit pixels (alpha dropped).
pub fn decode_png(bytes: &[u8]) -> Result<RasterImage, String> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(|e| format!("cannot decode PNG: {e}"))?;
    let size = reader.output_buffer_size().ok_or("PNG too large")?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| format!("cannot decode PNG: {e}"))?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width, info.height);
    let (src, dst) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => return Err("indexed PNG was not expanded".into()),
    };
    let data: Vec<u8> = if src == dst {
        buf
    } else {
        buf.chunks_exact(src).flat_map(|p| p[..dst].iter().copied()).collect()
    };
    RasterImage::from_raw(w, h, dst as u8, data).map_err(|e| e.to_string())
}

pub fn encode_png(img: &RasterImage) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width(), img.height());
        enc.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        // Writing into a Vec with a buffer of the declared size cannot fail.
        let mut w = enc.write_header().expect("PNG header");
        w.write_image_data(img.data()).expect("PNG data");
        w.finish().expect("PNG finish");
    }
    out
}

/// Run record written beside every output.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("manifest serializes");
        v.push(b'\n');
        v
    }
}

/// One output of a command: a single file, or a directory of files.
#[derive(Debug, Clone)]
pub enum Output {
    File {
        path: PathBuf,
        bytes: Vec<u8>,
    },
    Dir {
        path: PathBuf,
        files: Vec<(String, Vec<u8>)>,
    },
}

impl Output {
    pub fn file(path: impl Into<PathBuf>, bytes: Vec<u8>) -> Self {
        Output::File {
            path: path.into(),
            bytes,
        }
    }

    fn digests(&self) -> Vec<FileDigest> {
        match self {
            Output::File { path, bytes } => vec![FileDigest {
                name: file_name(path),
                sha256: sha256_hex(bytes),
            }],
            Output::Dir { files, .. } => files
                .iter()
                .map(|(n, b)| FileDigest {
                    name: n.clone(),
                    sha256: sha256_hex(b),
                })
                .collect(),
        }
    }
}

/// Path of the manifest accompanying a file output.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

enum Staged {
    File(tempfile::NamedTempFile, PathBuf),
    Dir(tempfile::TempDir, PathBuf),
}

fn stage_file(path: &Path, bytes: &[u8]) -> Result<Staged> {
    let dir = parent_dir(path);
    let mut tmp = tempfile::Builder::new()
        .prefix(".debias-")
        .tempfile_in(dir)
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    Ok(Staged::File(tmp, path.to_path_buf()))
}

fn stage_dir(path: &Path, files: &[(String, Vec<u8>)], manifest: &[u8]) -> Result<Staged> {
    if path.exists() {
        let empty = fs::read_dir(path).map_err(|e| Error::io(path, e))?.next().is_none();
        if !empty {
            return Err(Error::input(path, "output directory exists and is not empty"));
        }
    }
    let tmp = tempfile::Builder::new()
        .prefix(".debias-")
        .tempdir_in(parent_dir(path))
        .map_err(|e| Error::io(path, e))?;
    for (name, bytes) in files
        .iter()
        .map(|(n, b)| (n.as_str(), b.as_slice()))
        .chain([("manifest.json", manifest)])
    {
        fs::write(tmp.path().join(name), bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(Staged::Dir(tmp, path.to_path_buf()))
}

/// Writes all outputs and their manifests, or none of them: everything is
/// staged in temporary files beside its target before the first rename.
pub fn commit(outputs: Vec<Output>, command: &str, config: serde_json::Value, inputs: &Inputs) -> Result<()> {
    let manifest = Manifest {
        tool: "debias",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config,
        inputs: inputs.digests().to_vec(),
        outputs: outputs.iter().flat_map(Output::digests).collect(),
    }
    .to_bytes();

    let mut staged = Vec::new();
    for o in &outputs {
        match o {
            Output::File { path, bytes } => {
                staged.push(stage_file(path, bytes)?);
                staged.push(stage_file(&manifest_path(path), &manifest)?);
            }
            Output::Dir { path, files } => staged.push(stage_dir(path, files, &manifest)?),
        }
    }
    for s in staged {
        match s {
            Staged::File(tmp, path) => {
                tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
            }
            Staged::Dir(tmp, path) => {
                let src = tmp.keep();
                if let Err(e) = fs::rename(&src, &path) {
                    let _ = fs::remove_dir_all(&src);
                    return Err(Error::io(&path, e));
                }
            }
        }
    }
    Ok(())
}
