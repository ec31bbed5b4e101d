use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat};
use serde::{Deserialize, Serialize};

use super::{Cell, FloorPlan};
use crate::error::{Error, Result};

/// Pixel values below this are walls.
pub const WALL_THRESHOLD: u8 = 128;

/// JSON sidecar describing a map graymap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub resolution_m: f64,
    #[serde(default)]
    pub origin_m: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture_path: Option<String>,
}

/// Read an 8-bit portable graymap (`P5` or `P2`). Returns (width, height, pixels).
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !(bytes.starts_with(b"P5") || bytes.starts_with(b"P2")) {
        return Err(Error::format(path, "not a portable graymap (expected P5 or P2 magic)"));
    }
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let gray = img.to_luma8();
    Ok((gray.width() as usize, gray.height() as usize, gray.into_raw()))
}

/// Write a binary (`P5`) graymap.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let img = GrayImage::from_raw(width as u32, height as u32, pixels.to_vec())
        .ok_or_else(|| Error::Validation(format!("{} pixels for a {width}x{height} image", pixels.len())))?;
    let mut out = Vec::with_capacity(pixels.len() + 32);
    image::codecs::pnm::PnmEncoder::new(&mut out)
        .with_subtype(image::codecs::pnm::PnmSubtype::Graymap(
            image::codecs::pnm::SampleEncoding::Binary,
        ))
        .encode(img.as_raw().as_slice(), img.width(), img.height(), image::ExtendedColorType::L8)
        .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn metadata_path(map_path: &Path) -> PathBuf {
    map_path.with_extension("json")
}

/// Load a map graymap plus its sibling `<stem>.json` metadata document.
pub fn load_floorplan(path: &Path) -> Result<FloorPlan> {
    let (width, height, pixels) = read_pgm(path)?;
    let meta_path = metadata_path(path);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: MapMetadata = serde_json::from_str(&meta_text)
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
    if !(meta.resolution_m > 0.0) {
        return Err(Error::Validation(format!(
            "resolution must be positive, got {}",
            meta.resolution_m
        )));
    }

    let occupancy = pixels
        .iter()
        .map(|&p| if p < WALL_THRESHOLD { Cell::Wall } else { Cell::Free })
        .collect();

    let texture = match &meta.texture_path {
        Some(rel) => {
            let tex_path = path.parent().unwrap_or(Path::new(".")).join(rel);
            let (tw, th, tex) = read_pgm(&tex_path)?;
            if (tw, th) != (width, height) {
                return Err(Error::Validation(format!(
                    "texture layer is {tw}x{th}, map is {width}x{height}"
                )));
            }
            Some(tex)
        }
        None => None,
    };

    FloorPlan::new(width, height, meta.resolution_m, meta.origin_m, occupancy, texture)
}

/// Write `<path>` (occupancy graymap), `<stem>.json` metadata and, when the map
/// carries texture, `<stem>_texture.pgm`.
pub fn save_floorplan(map: &FloorPlan, path: &Path) -> Result<()> {
    let pixels: Vec<u8> = map
        .occupancy()
        .iter()
        .map(|c| if c.is_wall() { 0 } else { 255 })
        .collect();
    write_pgm(path, map.width(), map.height(), &pixels)?;

    let texture_path = match map.texture() {
        Some(tex) => {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("map");
            let name = format!("{stem}_texture.pgm");
            write_pgm(&path.with_file_name(&name), map.width(), map.height(), tex)?;
            Some(name)
        }
        None => None,
    };
    let meta = MapMetadata {
        resolution_m: map.resolution(),
        origin_m: map.origin(),
        texture_path,
    };
    let meta_path = metadata_path(path);
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
}
