//! 8-bit RGB PNG frames.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use cycconf_core::synth::Frame;

use crate::error::{io_err, Error, Result};

pub fn write_png(path: &Path, frame: &Frame) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), frame.width as u32, frame.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::format(path, e.to_string());
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&frame.rgb).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// Reads an 8-bit RGB or RGBA PNG; alpha is dropped.
pub fn read_png(path: &Path) -> Result<Frame> {
    let file = File::open(path).map_err(io_err(path))?;
    let png_err = |e: png::DecodingError| Error::format(path, e.to_string());
    let mut reader = png::Decoder::new(BufReader::new(file)).read_info().map_err(png_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, format!("expected 8-bit samples, got {:?}", info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf[..w * h * 3].to_vec(),
        png::ColorType::Rgba => buf[..w * h * 4].chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        other => return Err(Error::format(path, format!("expected an RGB image, got {other:?}"))),
    };
    Ok(Frame::from_rgb(w, h, rgb)?)
}
