//! Grayscale frame sequences: PGM directories, raw packed Y8 and Y4M.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Smallest frame edge accepted anywhere in the pipeline.
pub const MIN_FRAME_DIM: usize = 16;

/// One 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: u64,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(index: u64, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_FRAME_DIM || height < MIN_FRAME_DIM {
            return Err(Error::Frame {
                index,
                message: format!("dimensions {width}x{height} below minimum {MIN_FRAME_DIM}"),
            });
        }
        if pixels.len() != width * height {
            return Err(Error::Frame {
                index,
                message: format!(
                    "pixel buffer holds {} bytes, expected {}",
                    pixels.len(),
                    width * height
                ),
            });
        }
        Ok(Self {
            index,
            width,
            height,
            pixels,
        })
    }

    pub fn filled(index: u64, width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(index, width, height, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// On-disk layout of a frame sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    /// Directory of binary `P5` PGM files, ordered by file name.
    PgmDir,
    /// Headerless concatenation of `width*height` byte frames.
    RawY8,
    /// YUV4MPEG2 stream; only the luma plane is kept.
    Y4m,
}

impl FromStr for FrameFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm_dir" | "pgm" => Ok(FrameFormat::PgmDir),
            "raw_y8" | "raw" => Ok(FrameFormat::RawY8),
            "y4m" => Ok(FrameFormat::Y4m),
            other => Err(Error::InvalidParameter(format!(
                "unknown frame format {other:?}"
            ))),
        }
    }
}

/// Ordered stream of frames read lazily from disk.
pub struct FrameStream {
    inner: StreamKind,
    next_index: u64,
    dims: Option<(usize, usize)>,
    done: bool,
}

enum StreamKind {
    Pgm(std::vec::IntoIter<PathBuf>),
    Raw {
        reader: BufReader<File>,
        width: usize,
        height: usize,
    },
    Y4m {
        reader: BufReader<File>,
        width: usize,
        height: usize,
        chroma_bytes: usize,
    },
}

/// Open a frame sequence. `dims` is required for [`FrameFormat::RawY8`] and
/// ignored otherwise.
pub fn open_sequence(
    path: &Path,
    format: FrameFormat,
    dims: Option<(usize, usize)>,
) -> Result<FrameStream> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "path does not exist"),
        ));
    }
    let inner = match format {
        FrameFormat::PgmDir => {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
                .collect();
            if files.is_empty() {
                return Err(Error::NoFrames(path.to_path_buf()));
            }
            files.sort();
            StreamKind::Pgm(files.into_iter())
        }
        FrameFormat::RawY8 => {
            let (width, height) = dims.ok_or_else(|| {
                Error::InvalidParameter("raw_y8 input needs frame width and height".into())
            })?;
            if width < MIN_FRAME_DIM || height < MIN_FRAME_DIM {
                return Err(Error::InvalidParameter(format!(
                    "raw_y8 dimensions {width}x{height} below minimum {MIN_FRAME_DIM}"
                )));
            }
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let len = file.metadata().map_err(|e| Error::io(path, e))?.len() as usize;
            if len == 0 {
                return Err(Error::NoFrames(path.to_path_buf()));
            }
            if !len.is_multiple_of(width * height) {
                return Err(Error::Frame {
                    index: (len / (width * height)) as u64,
                    message: format!(
                        "truncated frame: file size {len} is not a multiple of {}",
                        width * height
                    ),
                });
            }
            StreamKind::Raw {
                reader: BufReader::new(file),
                width,
                height,
            }
        }
        FrameFormat::Y4m => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let mut reader = BufReader::new(file);
            let (width, height, chroma_bytes) = read_y4m_header(&mut reader)?;
            StreamKind::Y4m {
                reader,
                width,
                height,
                chroma_bytes,
            }
        }
    };
    Ok(FrameStream {
        inner,
        next_index: 0,
        dims: None,
        done: false,
    })
}

impl FrameStream {
    fn read_next(&mut self) -> Result<Option<Frame>> {
        let index = self.next_index;
        let frame = match &mut self.inner {
            StreamKind::Pgm(files) => match files.next() {
                None => return Ok(None),
                Some(p) => read_pgm(&p, index)?,
            },
            StreamKind::Raw {
                reader,
                width,
                height,
            } => {
                let mut buf = vec![0u8; *width * *height];
                if !read_exact_or_eof(reader, &mut buf, index)? {
                    return Ok(None);
                }
                Frame::new(index, *width, *height, buf)?
            }
            StreamKind::Y4m {
                reader,
                width,
                height,
                chroma_bytes,
            } => {
                let mut line = Vec::new();
                let n = reader
                    .read_until(b'\n', &mut line)
                    .map_err(|e| frame_err(index, e.to_string()))?;
                if n == 0 {
                    return Ok(None);
                }
                if !line.starts_with(b"FRAME") {
                    return Err(frame_err(index, "missing FRAME marker".into()));
                }
                let mut buf = vec![0u8; *width * *height];
                if !read_exact_or_eof(reader, &mut buf, index)? {
                    return Err(frame_err(index, "truncated luma plane".into()));
                }
                let mut chroma = vec![0u8; *chroma_bytes];
                if !read_exact_or_eof(reader, &mut chroma, index)? && *chroma_bytes > 0 {
                    return Err(frame_err(index, "truncated chroma planes".into()));
                }
                Frame::new(index, *width, *height, buf)?
            }
        };
        match self.dims {
            None => self.dims = Some(frame.dims()),
            Some((w, h)) if (w, h) != frame.dims() => {
                return Err(Error::DimensionMismatch {
                    index,
                    want_w: w,
                    want_h: h,
                    got_w: frame.width,
                    got_h: frame.height,
                })
            }
            Some(_) => {}
        }
        self.next_index += 1;
        Ok(Some(frame))
    }
}

impl Iterator for FrameStream {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_next() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

fn frame_err(index: u64, message: String) -> Error {
    Error::Frame { index, message }
}

/// Fill `buf` completely. Returns `false` on a clean EOF before any byte.
fn read_exact_or_eof(r: &mut impl Read, buf: &mut [u8], index: u64) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(frame_err(index, e.to_string())),
        }
    }
    if filled == 0 {
        return Ok(false);
    }
    if filled < buf.len() {
        return Err(frame_err(
            index,
            format!("truncated: {filled} of {} bytes", buf.len()),
        ));
    }
    Ok(true)
}

fn read_y4m_header(r: &mut impl BufRead) -> Result<(usize, usize, usize)> {
    let mut line = String::new();
    r.read_line(&mut line)
        .map_err(|e| frame_err(0, format!("y4m header: {e}")))?;
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(frame_err(
            0,
            "corrupt header: missing YUV4MPEG2 signature".into(),
        ));
    }
    let (mut w, mut h, mut colorspace) = (None, None, "420jpeg".to_string());
    for t in tokens {
        let (tag, val) = t.split_at(1);
        match tag {
            "W" => w = val.parse::<usize>().ok(),
            "H" => h = val.parse::<usize>().ok(),
            "C" => colorspace = val.to_string(),
            _ => {}
        }
    }
    let (w, h) = match (w, h) {
        (Some(w), Some(h)) => (w, h),
        _ => return Err(frame_err(0, "corrupt header: missing W/H".into())),
    };
    let chroma = if colorspace.starts_with("420") {
        2 * w.div_ceil(2) * h.div_ceil(2)
    } else if colorspace.starts_with("422") {
        2 * w.div_ceil(2) * h
    } else if colorspace.starts_with("444") {
        2 * w * h
    } else if colorspace.starts_with("mono") {
        0
    } else {
        return Err(frame_err(
            0,
            format!("unsupported y4m colorspace C{colorspace}"),
        ));
    };
    Ok((w, h, chroma))
}

fn read_pgm(path: &Path, index: u64) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, index)
}

/// Parse a binary (`P5`, maxval 255) PGM image.
pub fn parse_pgm(bytes: &[u8], index: u64) -> Result<Frame> {
    let mut pos = 0usize;
    let mut fields = [0usize; 3];
    let magic = next_token(bytes, &mut pos).ok_or_else(|| frame_err(index, "empty PGM".into()))?;
    if magic != b"P5" {
        return Err(frame_err(
            index,
            "corrupt header: not a binary P5 PGM".into(),
        ));
    }
    for f in fields.iter_mut() {
        let tok = next_token(bytes, &mut pos)
            .ok_or_else(|| frame_err(index, "corrupt header: truncated".into()))?;
        *f = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| frame_err(index, "corrupt header: bad number".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(frame_err(index, format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(frame_err(index, "truncated raster".into()));
    }
    Frame::new(index, width, height, bytes[pos..pos + need].to_vec())
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write_pgm(frame: &Frame, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(frame.width, frame.height, &frame.pixels))
        .map_err(|e| Error::io(path, e))
}

/// Write frames in `format`. For [`FrameFormat::PgmDir`] `path` is a
/// directory and files are named by zero-padded index.
pub fn write_sequence(frames: &[Frame], path: &Path, format: FrameFormat) -> Result<()> {
    match format {
        FrameFormat::PgmDir => {
            fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
            for f in frames {
                write_pgm(f, &path.join(format!("{:06}.pgm", f.index)))?;
            }
            Ok(())
        }
        FrameFormat::RawY8 => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            for f in frames {
                w.write_all(&f.pixels).map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        FrameFormat::Y4m => {
            let Some(first) = frames.first() else {
                return Err(Error::InsufficientData("no frames to write".into()));
            };
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            let chroma = vec![128u8; 2 * first.width.div_ceil(2) * first.height.div_ceil(2)];
            let io = |e| Error::io(path, e);
            writeln!(
                w,
                "YUV4MPEG2 W{} H{} F25:1 Ip A1:1 C420jpeg",
                first.width, first.height
            )
            .map_err(io)?;
            for f in frames {
                w.write_all(b"FRAME\n").map_err(io)?;
                w.write_all(&f.pixels).map_err(io)?;
                w.write_all(&chroma).map_err(io)?;
            }
            w.flush().map_err(io)
        }
    }
}
