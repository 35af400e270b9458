//! Flow (`.flo`), depth (PFM) and image (PNG) files.
//!
//! `.flo` is the Middlebury layout: the float sentinel `202021.25`, `i32`
//! width and height, then row-major interleaved `(u, v)` `f32` pairs, all
//! little-endian. Invalid flow vectors are written as `1e10` and read back as
//! invalid (anything above `1e9` in magnitude). Fields are stored as `f64`
//! internally and narrowed to `f32` on write.
//!
//! PFM depth maps are single channel (`Pf`); a negative scale marks a
//! little-endian payload, rows are stored bottom to top. Invalid depths are
//! written as `0`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Direction, FlowField, FlowKind};
use crate::image::Image;

pub const FLO_MAGIC: f32 = 202021.25;
const FLO_UNKNOWN: f32 = 1e10;
const FLO_UNKNOWN_THRESHOLD: f32 = 1e9;

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.data.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for (u, &ok) in flow.data.iter().zip(&flow.valid) {
        let (a, b) = if ok { (u.x as f32, u.y as f32) } else { (FLO_UNKNOWN, FLO_UNKNOWN) };
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    out
}

/// Decodes a `.flo` buffer as a forward optical flow; `path` is only used in errors.
pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    let truncated = || Error::TruncatedFile { path: path.to_owned() };
    if bytes.len() < 4 {
        return Err(truncated());
    }
    if f32::from_le_bytes(bytes[0..4].try_into().unwrap()) != FLO_MAGIC {
        return Err(Error::BadMagic { path: path.to_owned() });
    }
    if bytes.len() < 12 {
        return Err(truncated());
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 || width > 1 << 16 || height > 1 << 16 {
        return Err(Error::Decode(format!("{}: implausible size {width}x{height}", path.display())));
    }
    let (width, height) = (width as usize, height as usize);
    let n = width * height;
    let payload = &bytes[12..];
    if payload.len() < n * 8 {
        return Err(truncated());
    }
    let mut flow = FlowField::zeros(width, height, FlowKind::OpticalFlow, Direction::Forward);
    for (i, chunk) in payload[..n * 8].chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
        let v = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
        flow.data[i] = Vector2::new(u as f64, v as f64);
        flow.valid[i] = u.is_finite()
            && v.is_finite()
            && u.abs() <= FLO_UNKNOWN_THRESHOLD
            && v.abs() <= FLO_UNKNOWN_THRESHOLD;
    }
    Ok(flow)
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    fs::write(path, encode_flo(flow))?;
    Ok(())
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    decode_flo(&fs::read(path)?, path)
}

pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", depth.width, depth.height).into_bytes();
    for row in (0..depth.height).rev() {
        for col in 0..depth.width {
            let z = depth.get(col, row).unwrap_or(0.0) as f32;
            out.extend_from_slice(&z.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let mut cursor = 0usize;
    let mut next_line = || -> Result<String> {
        let rest = &bytes[cursor..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::TruncatedFile { path: path.to_owned() })?;
        cursor += end + 1;
        String::from_utf8(rest[..end].to_vec())
            .map(|s| s.trim().to_owned())
            .map_err(|_| Error::Decode(format!("{}: header is not text", path.display())))
    };
    match next_line()?.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::UnsupportedVariant("colour PFM (PF); depth maps are single channel".into())),
        _ => return Err(Error::BadMagic { path: path.to_owned() }),
    }
    let dims = next_line()?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (width, height) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) if w > 0 && h > 0 => (w, h),
        _ => return Err(Error::Decode(format!("{}: bad size line {dims:?}", path.display()))),
    };
    let scale: f64 = next_line()?
        .parse()
        .map_err(|_| Error::Decode(format!("{}: bad scale line", path.display())))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Decode(format!("{}: scale must be nonzero", path.display())));
    }
    let little = scale < 0.0;
    let payload = &bytes[cursor..];
    if payload.len() < width * height * 4 {
        return Err(Error::TruncatedFile { path: path.to_owned() });
    }
    let mut data = vec![0.0; width * height];
    for (k, chunk) in payload[..width * height * 4].chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let z = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, col) = (k / width, k % width);
        data[(height - 1 - file_row) * width + col] = z as f64;
    }
    DepthMap::from_values(width, height, data)
}

pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    fs::write(path, encode_pfm(depth))?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    decode_pfm(&fs::read(path)?, path)
}

/// Reads an 8-bit PNG as a 3-channel image. Gray and RGBA inputs are converted.
pub fn read_png(path: &Path) -> Result<Image> {
    let file = fs::File::open(path)?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| decode_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| decode_err(path, e))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedVariant(format!(
            "{}: {:?}-bit PNG, expected 8-bit",
            path.display(),
            info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let bytes = &buf[..info.buffer_size()];
    let src_channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(Error::UnsupportedVariant(format!("{}: colour type {other:?}", path.display())));
        }
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for px in bytes.chunks_exact(src_channels) {
        if src_channels < 3 {
            data.extend([px[0]; 3].map(|b| b as f32 / 255.0));
        } else {
            data.extend(px[..3].iter().map(|&b| b as f32 / 255.0));
        }
    }
    Image::from_data(w, h, 3, data)
}

fn decode_err(path: &Path, e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::Io(io),
        other => Error::Decode(format!("{}: {other}", path.display())),
    }
}

/// Quantizes to 8 bits (`round(v * 255)`, clamped).
pub fn to_u8(image: &Image) -> Vec<u8> {
    image.data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
}

/// Writes a 1- or 3-channel image as an 8-bit PNG.
pub fn write_png(path: &Path, image: &Image) -> Result<()> {
    let color = match image.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        n => return Err(Error::UnsupportedVariant(format!("{n}-channel image"))),
    };
    write_png_bytes(path, image.width, image.height, color, &to_u8(image))
}

/// Writes a boolean mask as an 8-bit gray PNG (255 = true).
pub fn write_mask_png(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_png_bytes(path, width, height, png::ColorType::Grayscale, &bytes)
}

/// Reads a mask written by [`write_mask_png`] (any nonzero gray value is true).
pub fn read_mask_png(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = read_png(path)?;
    Ok((img.width, img.height, img.data.chunks_exact(3).map(|p| p[0] > 0.0).collect()))
}

fn write_png_bytes(path: &Path, width: usize, height: usize, color: png::ColorType, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    writer.finish().map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Flushes a UTF-8 text file in one write.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}
