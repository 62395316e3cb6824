use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::normalize::NormRecord;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

pub const FORMAT_VERSION: u32 = 1;

/// Lattice shape and axis bounds of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub shape: [usize; 3],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub format_version: u32,
    pub n_samples: usize,
    pub geo_dim: usize,
    pub load_dim: usize,
    pub channels: usize,
    pub grid: GridInfo,
    /// Whether fields are trained in min-max normalized units (sigmoid output).
    #[serde(default)]
    pub normalized: bool,
    /// Field statistics recorded at generation time, if any.
    #[serde(default)]
    pub normalization: Option<NormRecord>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format {
                path: PathBuf::from("manifest.json"),
                offset: 0,
                msg: format!("format version {} (expected {FORMAT_VERSION})", self.format_version),
            });
        }
        if self.channels == 0 {
            return Err(Error::config("manifest declares zero field channels"));
        }
        for a in 0..3 {
            if !(self.grid.lo[a] < self.grid.hi[a]) {
                return Err(Error::config(format!("manifest bounds on axis {a} are not increasing")));
            }
        }
        if self.grid.shape.iter().any(|&d| d < 2) {
            return Err(Error::config("manifest grid extents must be >= 2"));
        }
        Ok(())
    }
}

/// One design instance as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub coords: Vec<[f32; 3]>,
    pub params: Vec<f32>,
    pub loads: Vec<f32>,
    /// `N x channels`, row-major.
    pub field: Vec<f32>,
    pub channels: usize,
    /// Directed (source, target) pairs.
    pub edges: Option<Vec<[u32; 2]>>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coords.is_empty() {
            return Err(Error::Input("sample has no points".into()));
        }
        if self.field.len() != self.coords.len() * self.channels {
            return Err(Error::shape(format!(
                "field has {} values for {} points x {} channels",
                self.field.len(),
                self.coords.len(),
                self.channels
            )));
        }
        let finite = self.coords.iter().flatten().chain(&self.params).chain(&self.loads).chain(&self.field);
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("sample contains non-finite values".into()));
        }
        if let Some(e) = &self.edges {
            let n = self.coords.len() as u32;
            if e.iter().flatten().any(|&i| i >= n) {
                return Err(Error::Input("edge index out of range".into()));
            }
        }
        Ok(())
    }

    pub fn coords_f64(&self) -> Vec<[f64; 3]> {
        self.coords.iter().map(|p| p.map(f64::from)).collect()
    }

    pub fn field_f64(&self) -> Vec<f64> {
        self.field.iter().map(|&v| v as f64).collect()
    }
}

fn write_f32(path: &Path, vals: impl Iterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = vals.flat_map(f32::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn decode_f32(path: &Path, bytes: &[u8], expected: Option<usize>) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (bytes.len() - bytes.len() % 4) as u64,
            msg: format!("{} bytes is not a whole number of binary32 values", bytes.len()),
        });
    }
    if let Some(n) = expected {
        if bytes.len() != n * 4 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: bytes.len().min(n * 4) as u64,
                msg: format!("expected {} bytes, found {}", n * 4, bytes.len()),
            });
        }
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn sample_dir(root: &Path, i: usize) -> PathBuf {
    root.join("samples").join(format!("{i:06}"))
}

/// Writes the four arrays (and edges, when present) into `dir`.
pub fn write_sample(dir: &Path, s: &Sample) -> Result<()> {
    s.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_f32(&dir.join("coords.f32"), s.coords.iter().flatten().copied())?;
    write_f32(&dir.join("params.f32"), s.params.iter().copied())?;
    write_f32(&dir.join("loads.f32"), s.loads.iter().copied())?;
    write_f32(&dir.join("field.f32"), s.field.iter().copied())?;
    let ep = dir.join("edges.u32");
    match &s.edges {
        Some(e) => {
            let bytes: Vec<u8> = e.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
            fs::write(&ep, bytes).map_err(|e| Error::io(&ep, e))?;
        }
        None if ep.exists() => fs::remove_file(&ep).map_err(|e| Error::io(&ep, e))?,
        None => {}
    }
    Ok(())
}

/// Reads one sample; sizes are checked against the manifest dimensions.
pub fn read_sample(dir: &Path, geo_dim: usize, load_dim: usize, channels: usize) -> Result<Sample> {
    let cp = dir.join("coords.f32");
    let cb = read_bytes(&cp)?;
    if cb.len() % 12 != 0 || cb.is_empty() {
        return Err(Error::Format {
            path: cp,
            offset: (cb.len() - cb.len() % 12) as u64,
            msg: format!("{} bytes is not a whole number of 3-D points", cb.len()),
        });
    }
    let flat = decode_f32(&cp, &cb, None)?;
    let coords: Vec<[f32; 3]> = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let n = coords.len();
    let pp = dir.join("params.f32");
    let params = decode_f32(&pp, &read_bytes(&pp)?, Some(geo_dim))?;
    let lp = dir.join("loads.f32");
    let loads = decode_f32(&lp, &read_bytes(&lp)?, Some(load_dim))?;
    let fp = dir.join("field.f32");
    let field = decode_f32(&fp, &read_bytes(&fp)?, Some(n * channels))?;
    let ep = dir.join("edges.u32");
    let edges = if ep.exists() {
        let b = read_bytes(&ep)?;
        if b.len() % 8 != 0 {
            return Err(Error::Format {
                path: ep,
                offset: (b.len() - b.len() % 8) as u64,
                msg: "edge file is not a whole number of u32 pairs".into(),
            });
        }
        let mut out = Vec::with_capacity(b.len() / 8);
        for (k, c) in b.chunks_exact(8).enumerate() {
            let s = u32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let t = u32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            if s as usize >= n || t as usize >= n {
                return Err(Error::Format {
                    path: ep,
                    offset: (k * 8) as u64,
                    msg: format!("edge ({s}, {t}) outside {n} points"),
                });
            }
            out.push([s, t]);
        }
        Some(out)
    } else {
        None
    };
    Ok(Sample {
        coords,
        params,
        loads,
        field,
        channels,
        edges,
    })
}

pub fn write_manifest(root: &Path, m: &DatasetManifest) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let p = root.join("manifest.json");
    let text = serde_json::to_string_pretty(m)?;
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let p = root.join("manifest.json");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: p.clone(),
        offset: byte_offset(&text, e.line(), e.column()),
        msg: e.to_string(),
    })?;
    m.validate()?;
    Ok(m)
}

fn byte_offset(text: &str, line: usize, column: usize) -> u64 {
    let before: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (before + column.saturating_sub(1)) as u64
}

/// A manifest with all of its samples in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Dataset> {
        let manifest = read_manifest(root)?;
        let samples = par::map_range(Exec::available(), manifest.n_samples, |i| {
            read_sample(&sample_dir(root, i), manifest.geo_dim, manifest.load_dim, manifest.channels)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            root: root.to_path_buf(),
            manifest,
            samples,
        })
    }

    /// Writes the manifest and every sample under `root`.
    pub fn write(root: &Path, manifest: &DatasetManifest, samples: &[Sample]) -> Result<()> {
        if manifest.n_samples != samples.len() {
            return Err(Error::config(format!(
                "manifest lists {} samples, {} given",
                manifest.n_samples,
                samples.len()
            )));
        }
        write_manifest(root, manifest)?;
        par::map_range(Exec::available(), samples.len(), |i| write_sample(&sample_dir(root, i), &samples[i]))
            .into_iter()
            .collect()
    }
}
