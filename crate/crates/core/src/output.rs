//! Frame files.
//!
//! * `rawf32`: `<stem>_<index>.f32`, a text header followed by the values as
//!   little-endian `f32`, row-major:
//!
//!   ```text
//!   STEMDIFF-F32 1
//!   width <W>
//!   height <H>
//!   timestamp_s <t>
//!   units u/m^2
//!   data
//!   <W·H·4 bytes>
//!   ```
//!
//! * `pgm16`: `<stem>_<index>.pgm`, binary 16-bit PGM (`P5`, maxval 65535,
//!   big-endian samples). Values are scaled by the maximum over the whole
//!   sequence, so frames are buffered until [`FrameSink::finish`]. The scale
//!   goes to `<stem>_pgm16_scale.txt`.
//!
//! * `csv`: `<stem>_<index>.csv` with header `row,col,value`.
//!
//! `<index>` is zero-padded to five digits.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::render::{FieldFrame, FrameSink};

pub const RAW_MAGIC: &str = "STEMDIFF-F32 1";
pub const UNITS: &str = "u/m^2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    #[default]
    Rawf32,
    Pgm16,
    Csv,
}

impl FrameFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FrameFormat::Rawf32 => "f32",
            FrameFormat::Pgm16 => "pgm",
            FrameFormat::Csv => "csv",
        }
    }

    /// Opens the sink for this format, creating `dir` if needed.
    pub fn sink(self, dir: &Path, stem: &str) -> io::Result<Box<dyn FrameSink>> {
        fs::create_dir_all(dir)?;
        Ok(match self {
            FrameFormat::Rawf32 => Box::new(RawF32Sink::new(dir, stem)),
            FrameFormat::Pgm16 => Box::new(Pgm16Sink::new(dir, stem)),
            FrameFormat::Csv => Box::new(CsvSink::new(dir, stem)),
        })
    }
}

impl fmt::Display for FrameFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameFormat::Rawf32 => "rawf32",
            FrameFormat::Pgm16 => "pgm16",
            FrameFormat::Csv => "csv",
        })
    }
}

impl FromStr for FrameFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rawf32" => Ok(FrameFormat::Rawf32),
            "pgm16" => Ok(FrameFormat::Pgm16),
            "csv" => Ok(FrameFormat::Csv),
            other => Err(format!("unknown frame format {other:?} (rawf32|pgm16|csv)")),
        }
    }
}

pub fn frame_path(dir: &Path, stem: &str, index: usize, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_{index:05}.{ext}"))
}

pub struct RawF32Sink {
    dir: PathBuf,
    stem: String,
}

impl RawF32Sink {
    pub fn new(dir: &Path, stem: &str) -> Self {
        Self {
            dir: dir.to_path_buf(),
            stem: stem.to_string(),
        }
    }
}

pub fn write_rawf32<W: Write>(mut out: W, frame: &FieldFrame) -> io::Result<()> {
    writeln!(out, "{RAW_MAGIC}")?;
    writeln!(out, "width {}", frame.width)?;
    writeln!(out, "height {}", frame.height)?;
    writeln!(out, "timestamp_s {:e}", frame.timestamp)?;
    writeln!(out, "units {UNITS}")?;
    writeln!(out, "data")?;
    for &v in &frame.values {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    out.flush()
}

/// Decoded `rawf32` frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    pub timestamp: f64,
    pub values: Vec<f32>,
}

pub fn read_rawf32<R: Read>(input: R) -> io::Result<RawFrame> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    let mut next_line = |reader: &mut BufReader<R>| -> io::Result<String> {
        line.clear();
        reader.read_line(&mut line)?;
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut reader)? != RAW_MAGIC {
        return Err(bad("missing STEMDIFF-F32 magic"));
    }
    let mut width = None;
    let mut height = None;
    let mut timestamp = None;
    loop {
        let l = next_line(&mut reader)?;
        if l == "data" {
            break;
        }
        let (key, value) = l
            .split_once(' ')
            .ok_or_else(|| bad("malformed header line"))?;
        match key {
            "width" => width = value.parse().ok(),
            "height" => height = value.parse().ok(),
            "timestamp_s" => timestamp = value.parse().ok(),
            "units" => {}
            _ => return Err(bad("unknown header key")),
        }
    }
    let (width, height, timestamp) = match (width, height, timestamp) {
        (Some(w), Some(h), Some(t)) => (w, h, t),
        _ => return Err(bad("incomplete header")),
    };
    let mut bytes = vec![0u8; width * height * 4];
    reader.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(RawFrame {
        width,
        height,
        timestamp,
        values,
    })
}

impl FrameSink for RawF32Sink {
    fn write_frame(&mut self, index: usize, frame: &FieldFrame) -> io::Result<()> {
        let path = frame_path(&self.dir, &self.stem, index, "f32");
        write_rawf32(BufWriter::new(File::create(path)?), frame)
    }
}

pub struct CsvSink {
    dir: PathBuf,
    stem: String,
}

impl CsvSink {
    pub fn new(dir: &Path, stem: &str) -> Self {
        Self {
            dir: dir.to_path_buf(),
            stem: stem.to_string(),
        }
    }
}

impl FrameSink for CsvSink {
    fn write_frame(&mut self, index: usize, frame: &FieldFrame) -> io::Result<()> {
        let path = frame_path(&self.dir, &self.stem, index, "csv");
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "row,col,value")?;
        for (i, v) in frame.values.iter().enumerate() {
            writeln!(out, "{},{},{:e}", i / frame.width, i % frame.width, v)?;
        }
        out.flush()
    }
}

/// Buffers the sequence (as `f32`) and writes all PGMs on `finish`.
pub struct Pgm16Sink {
    dir: PathBuf,
    stem: String,
    frames: Vec<(usize, usize, usize, f64, Vec<f32>)>,
    max: f64,
}

impl Pgm16Sink {
    pub fn new(dir: &Path, stem: &str) -> Self {
        Self {
            dir: dir.to_path_buf(),
            stem: stem.to_string(),
            frames: Vec::new(),
            max: 0.0,
        }
    }

    pub fn scale_path(dir: &Path, stem: &str) -> PathBuf {
        dir.join(format!("{stem}_pgm16_scale.txt"))
    }
}

/// 16-bit grey level for `value` under a sequence maximum of `max`.
pub fn pgm_level(value: f64, max: f64) -> u16 {
    if max > 0.0 {
        (value / max * 65535.0).round().clamp(0.0, 65535.0) as u16
    } else {
        0
    }
}

impl FrameSink for Pgm16Sink {
    fn write_frame(&mut self, index: usize, frame: &FieldFrame) -> io::Result<()> {
        for &v in &frame.values {
            if v > self.max {
                self.max = v;
            }
        }
        self.frames.push((
            index,
            frame.width,
            frame.height,
            frame.timestamp,
            frame.values.iter().map(|&v| v as f32).collect(),
        ));
        Ok(())
    }

    fn finish(&mut self) -> io::Result<()> {
        let max = self.max;
        for (index, width, height, _, values) in &self.frames {
            let path = frame_path(&self.dir, &self.stem, *index, "pgm");
            let mut out = BufWriter::new(File::create(path)?);
            write!(out, "P5\n{width} {height}\n65535\n")?;
            for &v in values {
                out.write_all(&pgm_level(v as f64, max).to_be_bytes())?;
            }
            out.flush()?;
        }
        let mut scale = BufWriter::new(File::create(Self::scale_path(&self.dir, &self.stem))?);
        writeln!(scale, "max_value {max:e}")?;
        writeln!(scale, "units {UNITS}")?;
        writeln!(scale, "frames {}", self.frames.len())?;
        writeln!(scale, "# level = round(value / max_value * 65535)")?;
        for (index, _, _, t, _) in &self.frames {
            writeln!(scale, "timestamp_s {index:05} {t:e}")?;
        }
        scale.flush()?;
        self.frames.clear();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> FieldFrame {
        FieldFrame {
            timestamp: 2.5e-5,
            width: 3,
            height: 2,
            values: vec![0.0, 1.0, 2.0, 3.0, 4.0, 8.0],
            events_active: 2,
        }
    }

    #[test]
    fn rawf32_round_trip() {
        let mut buf = Vec::new();
        write_rawf32(&mut buf, &frame()).unwrap();
        let back = read_rawf32(buf.as_slice()).unwrap();
        assert_eq!(back.width, 3);
        assert_eq!(back.height, 2);
        assert_eq!(back.timestamp, 2.5e-5);
        assert_eq!(back.values, vec![0.0, 1.0, 2.0, 3.0, 4.0, 8.0]);
        assert!(read_rawf32(&b"P5\n"[..]).is_err());
    }

    #[test]
    fn pgm_sequence_normalised_by_global_max() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = Pgm16Sink::new(dir.path(), "f");
        let mut second = frame();
        second.values.iter_mut().for_each(|v| *v *= 0.5);
        sink.write_frame(0, &frame()).unwrap();
        sink.write_frame(1, &second).unwrap();
        sink.finish().unwrap();
        let bytes = fs::read(dir.path().join("f_00001.pgm")).unwrap();
        let header = b"P5\n3 2\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let pixels: Vec<u16> = bytes[header.len()..]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect();
        assert_eq!(pixels, vec![0, 4096, 8192, 12288, 16384, 32768]);
        let scale = fs::read_to_string(Pgm16Sink::scale_path(dir.path(), "f")).unwrap();
        assert!(scale.starts_with("max_value 8e0\n"));
        assert_eq!(pgm_level(1.0, 0.0), 0);
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = CsvSink::new(dir.path(), "f");
        sink.write_frame(7, &frame()).unwrap();
        let text = fs::read_to_string(dir.path().join("f_00007.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "row,col,value");
        assert_eq!(lines[4], "1,0,3e0");
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn format_names() {
        for f in [FrameFormat::Rawf32, FrameFormat::Pgm16, FrameFormat::Csv] {
            assert_eq!(f.to_string().parse::<FrameFormat>().unwrap(), f);
        }
        assert!("png".parse::<FrameFormat>().is_err());
    }
}
