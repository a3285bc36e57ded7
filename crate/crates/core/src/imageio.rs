//! Image and edge-field files.
//!
//! Intensities map linearly between `[0, 1]` and `[0, maxval]`; values outside
//! `[0, 1]` are clamped on write.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use crate::error::{DmsError, Result};
use crate::grid::{edge_count, DifferenceOperator, EdgeField, Image};

const EDGE_HEADER: &str = "# dms edge field v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary PGM with 8 or 16 bits per sample.
    Pgm { bits: u8 },
    /// 8-bit grayscale PNG.
    Png,
}

impl ImageFormat {
    /// From the file extension: `.png`, or `.pgm`/`.pnm` (16-bit).
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("png") => Ok(ImageFormat::Png),
            Some("pgm") | Some("pnm") => Ok(ImageFormat::Pgm { bits: 16 }),
            _ => Err(DmsError::Format(format!(
                "cannot infer image format from '{}'",
                path.display()
            ))),
        }
    }
}

fn quantize(v: f64, maxval: u32) -> u32 {
    (v.clamp(0.0, 1.0) * maxval as f64).round() as u32
}

pub fn encode_pgm(img: &Image, bits: u8, out: &mut impl Write) -> Result<()> {
    let maxval: u32 = match bits {
        8 => 255,
        16 => 65535,
        _ => return Err(DmsError::Format(format!("PGM supports 8 or 16 bits, not {bits}"))),
    };
    write!(out, "P5\n{} {}\n{}\n", img.width(), img.height(), maxval)?;
    let mut bytes = Vec::with_capacity(img.len() * bits as usize / 8);
    for &v in img.values() {
        let q = quantize(v, maxval);
        if bits == 8 {
            bytes.push(q as u8);
        } else {
            bytes.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    out.write_all(&bytes)?;
    Ok(())
}

fn pgm_token(r: &mut impl BufRead) -> Result<String> {
    let mut token = String::new();
    loop {
        let mut byte = [0u8];
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c == '#' && token.is_empty() {
            let mut comment = Vec::new();
            r.read_until(b'\n', &mut comment)?;
        } else if c.is_ascii_whitespace() {
            if !token.is_empty() {
                break;
            }
        } else {
            token.push(c);
        }
    }
    if token.is_empty() {
        return Err(DmsError::Format("truncated PGM header".into()));
    }
    Ok(token)
}

fn pgm_number(r: &mut impl BufRead, what: &str) -> Result<usize> {
    let t = pgm_token(r)?;
    t.parse()
        .map_err(|_| DmsError::Format(format!("bad PGM {what}: '{t}'")))
}

pub fn decode_pgm(r: &mut impl BufRead) -> Result<Image> {
    if pgm_token(r)? != "P5" {
        return Err(DmsError::Format("only binary PGM (P5) is supported".into()));
    }
    let width = pgm_number(r, "width")?;
    let height = pgm_number(r, "height")?;
    let maxval = pgm_number(r, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(DmsError::Format(format!("PGM maxval {maxval} out of range")));
    }
    let wide = maxval > 255;
    let mut bytes = vec![0u8; width * height * if wide { 2 } else { 1 }];
    r.read_exact(&mut bytes)
        .map_err(|_| DmsError::Format("truncated PGM pixel data".into()))?;
    let scale = 1.0 / maxval as f64;
    let values = if wide {
        bytes
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 * scale)
            .collect()
    } else {
        bytes.iter().map(|&b| b as f64 * scale).collect()
    };
    Image::new(height, width, values)
}

pub fn encode_png(img: &Image, out: impl Write) -> Result<()> {
    let data: Vec<u8> = img.values().iter().map(|&v| quantize(v, 255) as u8).collect();
    write_png(out, img.width(), img.height(), png::ColorType::Grayscale, &data)
}

fn write_png(out: impl Write, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let mut enc = png::Encoder::new(out, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_error)?;
    writer.write_image_data(data).map_err(png_error)?;
    writer.finish().map_err(png_error)
}

fn png_error(e: impl std::fmt::Display) -> DmsError {
    DmsError::Format(format!("png: {e}"))
}

/// Reads an 8- or 16-bit grayscale PNG (low bit depths are expanded).
pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(png_error)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| DmsError::Format("png image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_error)?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(DmsError::Format(format!(
            "expected a grayscale PNG, found {:?}",
            info.color_type
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let values = match info.bit_depth {
        png::BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect(),
        _ => buf[..w * h].iter().map(|&b| b as f64 / 255.0).collect(),
    };
    Image::new(h, w, values)
}

pub fn read_image(path: &Path) -> Result<Image> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(&mut Cursor::new(bytes))
    } else {
        Err(DmsError::Format(format!("'{}' is neither PNG nor binary PGM", path.display())))
    }
}

pub fn write_image(path: &Path, img: &Image, format: ImageFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        ImageFormat::Pgm { bits } => encode_pgm(img, bits, &mut out)?,
        ImageFormat::Png => encode_png(img, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

/// RGB rendering of `img` with every edge where `|e| > threshold` painted red.
///
/// An edge is drawn on its second pixel (below or to the right of the interface).
pub fn encode_overlay_png(img: &Image, e: &EdgeField, threshold: f64, out: impl Write) -> Result<()> {
    if e.height() != img.height() || e.width() != img.width() {
        return Err(DmsError::Shape {
            expected: format!("{}x{}", img.height(), img.width()),
            actual: format!("{}x{}", e.height(), e.width()),
        });
    }
    let mut rgb: Vec<u8> = img
        .values()
        .iter()
        .flat_map(|&v| {
            let g = quantize(v, 255) as u8;
            [g, g, g]
        })
        .collect();
    let op = DifferenceOperator::new(img.height(), img.width())?;
    for (&(_, q), &v) in op.rows().iter().zip(e.values()) {
        if v.abs() > threshold {
            rgb[3 * q..3 * q + 3].copy_from_slice(&[255, 0, 0]);
        }
    }
    write_png(out, img.width(), img.height(), png::ColorType::Rgb, &rgb)
}

pub fn write_overlay(path: &Path, img: &Image, e: &EdgeField, threshold: f64) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    encode_overlay_png(img, e, threshold, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Text sidecar: a header line, `height width`, then the `(height-1) x width`
/// vertical block and the `height x (width-1)` horizontal block, one grid row
/// per line.
pub fn encode_edge_field(e: &EdgeField, out: &mut impl Write) -> Result<()> {
    let (h, w) = (e.height(), e.width());
    writeln!(out, "{EDGE_HEADER}")?;
    writeln!(out, "{h} {w}")?;
    let (vertical, horizontal) = e.values().split_at(e.vertical_count());
    for row in vertical.chunks(w.max(1)) {
        write_row(out, row)?;
    }
    for row in horizontal.chunks((w - 1).max(1)) {
        write_row(out, row)?;
    }
    Ok(())
}

fn write_row(out: &mut impl Write, row: &[f64]) -> Result<()> {
    let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
    writeln!(out, "{}", line.join(" "))?;
    Ok(())
}

pub fn decode_edge_field(text: &str) -> Result<EdgeField> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(EDGE_HEADER) {
        return Err(DmsError::Format("missing edge-field header".into()));
    }
    let dims: Vec<usize> = lines
        .next()
        .unwrap_or_default()
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| DmsError::Format(format!("bad dimension '{t}'"))))
        .collect::<Result<_>>()?;
    let [h, w] = dims[..] else {
        return Err(DmsError::Format("expected 'height width'".into()));
    };
    let values: Vec<f64> = lines
        .flat_map(str::split_whitespace)
        .map(|t| t.parse().map_err(|_| DmsError::Format(format!("bad value '{t}'"))))
        .collect::<Result<_>>()?;
    if h < 1 || w < 1 || values.len() != edge_count(h, w) {
        return Err(DmsError::Format(format!(
            "{} values do not fit a {h}x{w} edge lattice",
            values.len()
        )));
    }
    EdgeField::new(h, w, values)
}

pub fn write_edge_field(path: &Path, e: &EdgeField) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    encode_edge_field(e, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn read_edge_field(path: &Path) -> Result<EdgeField> {
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    decode_edge_field(&text)
}
