//! Binary PGM16 exports of the heightmap and depth frames, with JSON sidecars.

use std::io::Write;
use std::path::{Path, PathBuf};

use offtersim_core::{Grid, Obstacle, TerrainModel, TerrainParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Sidecar of a heightmap export; `pixel / 65535 · (h_max − h_min) + h_min`
/// recovers the height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightmapMeta {
    pub width: usize,
    pub height: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub resolution: f64,
    pub seed: u64,
    pub params: TerrainParams,
}

/// Quantizes `values` to 16 bits over their own range. A constant field maps to 0.
pub fn quantize(values: &[f64]) -> (Vec<u16>, f64, f64) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() {
        return (Vec::new(), 0.0, 0.0);
    }
    let span = hi - lo;
    let px = values
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 65535.0).round() as u16 } else { 0 })
        .collect();
    (px, lo, hi)
}

/// Encodes a binary 16-bit PGM (big-endian samples, maxval 65535).
pub fn encode_pgm16(width: usize, height: usize, pixels: &[u16]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count must match dimensions");
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(pixels.len() * 2);
    for p in pixels {
        out.extend_from_slice(&p.to_be_bytes());
    }
    out
}

/// Parses what `encode_pgm16` writes.
pub fn decode_pgm16(bytes: &[u8]) -> Option<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return None;
    }
    let w: usize = fields[1].parse().ok()?;
    let h: usize = fields[2].parse().ok()?;
    let body = bytes.get(pos..)?;
    if body.len() != w * h * 2 {
        return None;
    }
    Some((w, h, body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

/// Heightmap as PGM: image row `i` is grid row `i` (constant x), columns run along y.
pub fn heightmap_pgm(terrain: &TerrainModel) -> (Vec<u8>, HeightmapMeta) {
    let h = terrain.heights();
    let (px, lo, hi) = quantize(h.as_slice());
    let params = terrain.params().clone();
    let meta = HeightmapMeta {
        width: h.cols(),
        height: h.rows(),
        h_min: lo,
        h_max: hi,
        resolution: params.resolution,
        seed: params.seed,
        params,
    };
    (encode_pgm16(h.cols(), h.rows(), &px), meta)
}

/// Depth frame as PGM with the same self-normalizing quantization.
pub fn depth_pgm(depth: &Grid<f32>) -> Vec<u8> {
    let values: Vec<f64> = depth.iter().map(|&d| f64::from(d)).collect();
    let (px, _, _) = quantize(&values);
    encode_pgm16(depth.cols(), depth.rows(), &px)
}

pub fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `out` (PGM), `out.json` (metadata) and `out.obstacles.json`.
pub fn write_terrain(terrain: &TerrainModel, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (pgm, meta) = heightmap_pgm(terrain);
    let meta_path = sidecar_path(out, ".json");
    let obstacles_path = sidecar_path(out, ".obstacles.json");
    write_file(out, &pgm)?;
    write_file(&meta_path, &to_json(&meta)?)?;
    let obstacles: &[Obstacle] = terrain.obstacles();
    write_file(&obstacles_path, &to_json(&obstacles)?)?;
    Ok(vec![out.to_path_buf(), meta_path, obstacles_path])
}
