//! Depth maps as PFM (single channel, 32-bit float) or headerless CSV.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use deformtrack_core::correspond::DepthImage;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthFormat {
    Pfm,
    Csv,
}

impl DepthFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::Pfm => "pfm",
            DepthFormat::Csv => "csv",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "pfm" => Some(DepthFormat::Pfm),
            "csv" => Some(DepthFormat::Csv),
            _ => None,
        }
    }
}

pub fn read_depth(path: &Path) -> Result<DepthImage> {
    match DepthFormat::from_path(path) {
        Some(DepthFormat::Pfm) => read_pfm(path),
        Some(DepthFormat::Csv) => read_csv(path),
        None => Err(Error::format(path, "unknown depth format, expected .pfm or .csv")),
    }
}

pub fn write_depth(path: &Path, depth: &DepthImage) -> Result<()> {
    match DepthFormat::from_path(path) {
        Some(DepthFormat::Pfm) => write_pfm(path, depth),
        Some(DepthFormat::Csv) => write_csv(path, depth),
        None => Err(Error::format(path, "unknown depth format, expected .pfm or .csv")),
    }
}

fn header_line(path: &Path, reader: &mut impl BufRead, what: &str) -> Result<String> {
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::format(path, format!("truncated header: missing {what}")));
        }
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            return Ok(t.to_string());
        }
    }
}

/// Rows are stored bottom to top; a negative scale marks little-endian
/// data. Non-finite samples become 0 (invalid).
pub fn read_pfm(path: &Path) -> Result<DepthImage> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let magic = header_line(path, &mut reader, "magic")?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::format(path, "colour PFM not supported, expected single channel `Pf`")),
        other => return Err(Error::format(path, format!("bad magic `{other}`, expected `Pf`"))),
    }
    let dims = header_line(path, &mut reader, "dimensions")?;
    let parsed: Vec<usize> = dims.split_whitespace().filter_map(|s| s.parse().ok()).collect();
    let [width, height] = parsed[..] else {
        return Err(Error::format(path, format!("bad dimensions `{dims}`")));
    };
    let scale_line = header_line(path, &mut reader, "scale")?;
    let scale: f32 = scale_line
        .parse()
        .map_err(|_| Error::format(path, format!("bad scale `{scale_line}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(path, format!("bad scale `{scale_line}`")));
    }
    let little = scale < 0.0;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let expected = width * height * 4;
    if bytes.len() != expected {
        return Err(Error::format(path, format!("payload has {} bytes, expected {expected} for {width}x{height}", bytes.len())));
    }
    let mut data = vec![0.0; width * height];
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (col, file_row) = (i % width, i / width);
        let row = height - 1 - file_row;
        data[row * width + col] = if v.is_finite() { v as f64 } else { 0.0 };
    }
    Ok(DepthImage::new(width, height, data))
}

pub fn write_pfm(path: &Path, depth: &DepthImage) -> Result<()> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", depth.width, depth.height).into_bytes();
    for row in (0..depth.height).rev() {
        for col in 0..depth.width {
            out.extend_from_slice(&(depth.get(col, row) as f32).to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One line per image row, values in mm. `nan` is accepted and read as 0.
pub fn read_csv(path: &Path) -> Result<DepthImage> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut data = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::format(path, format!("row {row} has {} columns, expected {}", record.len(), width.unwrap())));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::format(path, format!("row {row}, column {col}: `{field}` is not a number")))?;
            data.push(if v.is_finite() { v } else { 0.0 });
        }
        height += 1;
    }
    let width = width.filter(|&w| w > 0).ok_or_else(|| Error::format(path, "empty depth map"))?;
    Ok(DepthImage::new(width, height, data))
}

pub fn write_csv(path: &Path, depth: &DepthImage) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for row in 0..depth.height {
        let line: Vec<String> = (0..depth.width).map(|col| depth.get(col, row).to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
