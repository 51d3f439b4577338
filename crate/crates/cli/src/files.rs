//! File helpers: atomic writes and image or depth ingestion by extension.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use camsplat::image::Image;
use camsplat::io::{depth_from_pgm, read_pfm, read_pgm, read_ppm, write_ppm};
use camsplat::scale::MetricDepthMap;
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, produce: impl FnOnce(&mut BufWriter<&mut File>) -> CliResult<()>) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        produce(&mut w)?;
        w.flush().map_err(|e| io_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_atomic(path, |w| w.write_all(bytes).map_err(|e| io_err(path, e)))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| io_err(path, e))?))
}

fn in_file(path: &Path, e: camsplat::error::Error) -> CliError {
    match CliError::from(e) {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    }
}

pub fn png_bytes(image: &Image) -> CliResult<Vec<u8>> {
    let (w, h) = (image.width as u32, image.height as u32);
    let color = match image.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(CliError::input(format!("cannot write {c}-channel PNG"))),
    };
    let data: Vec<u8> = image.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, w, h);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| CliError::Io(e.to_string()))?;
    writer.write_image_data(&data).map_err(|e| CliError::Io(e.to_string()))?;
    writer.finish().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(out)
}

fn read_png(path: &Path) -> CliResult<Image> {
    let mut decoder = png::Decoder::new(open(path)?);
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let px = &buf[..info.buffer_size()];
    let rgb: Vec<f64> = match info.color_type {
        png::ColorType::Rgb => px.iter().map(|&b| b as f64 / 255.0).collect(),
        png::ColorType::Rgba => px.chunks_exact(4).flat_map(|p| p[..3].iter().map(|&b| b as f64 / 255.0)).collect(),
        png::ColorType::Grayscale => px.iter().flat_map(|&b| [b as f64 / 255.0; 3]).collect(),
        png::ColorType::GrayscaleAlpha => px.chunks_exact(2).flat_map(|p| [p[0] as f64 / 255.0; 3]).collect(),
        png::ColorType::Indexed => return Err(CliError::input(format!("{}: unexpanded palette", path.display()))),
    };
    Ok(Image::from_data(info.width as usize, info.height as usize, 3, rgb)?)
}

/// Reads an RGB image from `.ppm` or `.png`.
pub fn read_image(path: &Path) -> CliResult<Image> {
    match extension(path).as_str() {
        "ppm" => read_ppm(&mut open(path)?).map_err(|e| in_file(path, e)),
        "png" => read_png(path),
        other => Err(CliError::input(format!("{}: unsupported image type {other:?}", path.display()))),
    }
}

/// Writes `stem.ppm` and `stem.png`.
pub fn write_image_pair(dir: &Path, stem: &str, image: &Image) -> CliResult<()> {
    let ppm = dir.join(format!("{stem}.ppm"));
    write_atomic(&ppm, |w| write_ppm(w, image).map_err(CliError::from))?;
    write_bytes(&dir.join(format!("{stem}.png")), &png_bytes(image)?)
}

/// Reads metric depth from `.pfm` (meters) or 16-bit `.pgm` (`sample·scale`).
pub fn read_depth(path: &Path, pgm_scale: f64) -> CliResult<MetricDepthMap> {
    match extension(path).as_str() {
        "pfm" => read_pfm(&mut open(path)?).and_then(|f| f.to_depth()).map_err(|e| in_file(path, e)),
        "pgm" => read_pgm(&mut open(path)?).and_then(|p| depth_from_pgm(&p, pgm_scale)).map_err(|e| in_file(path, e)),
        other => Err(CliError::input(format!("{}: unsupported depth type {other:?}", path.display()))),
    }
}

pub fn frame_stem(prefix: &str, i: usize) -> String {
    format!("{prefix}_{i:04}")
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn open_reader(path: &Path) -> CliResult<BufReader<File>> {
    open(path)
}
