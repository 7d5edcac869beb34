//! Raw video frames and the DVTV interchange file.
//!
//! Decoding real containers is out of scope; frames arrive either from the
//! synthetic generator or from an external decoder that writes this trivial
//! raw format (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "DVTV"
//! version  u16      currently 1
//! width    u32
//! height   u32
//! fps      u32
//! n_frames u32
//! frames   n_frames * width * height * 3 bytes, RGB8 row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const DVTV_MAGIC: &[u8; 4] = b"DVTV";
pub const DVTV_VERSION: u16 = 1;

/// One RGB8 raster. A black frame has every channel value 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, rgb: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if width == 0 || height == 0 {
            return Err(Error::validation("frame dimensions must be positive"));
        }
        if rgb.len() != expected {
            return Err(Error::validation(format!(
                "frame payload is {} bytes, expected {expected}",
                rgb.len()
            )));
        }
        Ok(Frame { width, height, rgb })
    }

    pub fn black(width: u32, height: u32) -> Self {
        Frame { width, height, rgb: vec![0; width as usize * height as usize * 3] }
    }

    pub fn solid(width: u32, height: u32, color: [u8; 3]) -> Self {
        let mut rgb = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            rgb.extend_from_slice(&color);
        }
        Frame { width, height, rgb }
    }

    /// Mean Rec.601 luma over the raster, scaled to [0, 1].
    pub fn mean_luma(&self) -> f64 {
        let mut sum = 0.0;
        for px in self.rgb.chunks_exact(3) {
            sum += 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
        }
        sum / (self.rgb.len() as f64 / 3.0) / 255.0
    }

    pub fn is_all_zero(&self) -> bool {
        self.rgb.iter().all(|&v| v == 0)
    }
}

/// A decoded frame sequence with a nominal frame rate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Video {
    pub fps: u32,
    pub frames: Vec<Frame>,
}

impl Video {
    pub fn new(fps: u32, frames: Vec<Frame>) -> Result<Self> {
        if fps == 0 {
            return Err(Error::validation("fps must be positive"));
        }
        if frames.is_empty() {
            return Err(Error::validation("video has no frames"));
        }
        let (w, h) = (frames[0].width, frames[0].height);
        if frames.iter().any(|f| f.width != w || f.height != h) {
            return Err(Error::validation("all frames must share dimensions"));
        }
        Ok(Video { fps, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.frames[0].width
    }

    pub fn height(&self) -> u32 {
        self.frames[0].height
    }
}

pub fn write_video_to<W: Write>(mut w: W, video: &Video) -> Result<()> {
    w.write_all(DVTV_MAGIC)?;
    w.write_all(&DVTV_VERSION.to_le_bytes())?;
    w.write_all(&video.width().to_le_bytes())?;
    w.write_all(&video.height().to_le_bytes())?;
    w.write_all(&video.fps.to_le_bytes())?;
    w.write_all(&(video.len() as u32).to_le_bytes())?;
    for frame in &video.frames {
        w.write_all(&frame.rgb)?;
    }
    Ok(())
}

pub fn write_video(path: &Path, video: &Video) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_video_to(&mut w, video)?;
    w.flush()?;
    Ok(())
}

fn read_exact_or_format<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(format!("truncated video file while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

pub fn read_video_from<R: Read>(mut r: R) -> Result<Video> {
    let mut magic = [0u8; 4];
    read_exact_or_format(&mut r, &mut magic, "magic")?;
    if &magic != DVTV_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected \"DVTV\"")));
    }
    let mut u16buf = [0u8; 2];
    read_exact_or_format(&mut r, &mut u16buf, "version")?;
    let version = u16::from_le_bytes(u16buf);
    if version != DVTV_VERSION {
        return Err(Error::format(format!("unsupported video file version {version}")));
    }
    let mut u32buf = [0u8; 4];
    read_exact_or_format(&mut r, &mut u32buf, "width")?;
    let width = u32::from_le_bytes(u32buf);
    read_exact_or_format(&mut r, &mut u32buf, "height")?;
    let height = u32::from_le_bytes(u32buf);
    read_exact_or_format(&mut r, &mut u32buf, "fps")?;
    let fps = u32::from_le_bytes(u32buf);
    read_exact_or_format(&mut r, &mut u32buf, "frame count")?;
    let n_frames = u32::from_le_bytes(u32buf) as usize;
    if width == 0 || height == 0 || fps == 0 || n_frames == 0 {
        return Err(Error::format("degenerate video header"));
    }

    let frame_bytes = width as usize * height as usize * 3;
    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let mut rgb = vec![0u8; frame_bytes];
        read_exact_or_format(&mut r, &mut rgb, &format!("frame {i}"))?;
        frames.push(Frame { width, height, rgb });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::format("trailing bytes after last frame"));
    }
    Video::new(fps, frames)
}

pub fn read_video(path: &Path) -> Result<Video> {
    read_video_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_frame_has_zero_luma() {
        let f = Frame::black(8, 6);
        assert_eq!(f.mean_luma(), 0.0);
        assert!(f.is_all_zero());
    }

    #[test]
    fn solid_white_has_unit_luma() {
        let f = Frame::solid(8, 6, [255, 255, 255]);
        assert!((f.mean_luma() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn video_round_trips() {
        let video = Video::new(
            24,
            vec![Frame::solid(4, 3, [10, 20, 30]), Frame::black(4, 3), Frame::solid(4, 3, [200, 0, 50])],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_video_to(&mut buf, &video).unwrap();
        let back = read_video_from(buf.as_slice()).unwrap();
        assert_eq!(back, video);
    }

    #[test]
    fn mismatched_frame_dims_rejected() {
        let err = Video::new(24, vec![Frame::black(4, 3), Frame::black(5, 3)]).unwrap_err();
        assert!(err.to_string().contains("dimensions"), "{err}");
    }

    #[test]
    fn truncated_video_is_a_format_error() {
        let video = Video::new(24, vec![Frame::black(4, 3); 2]).unwrap();
        let mut buf = Vec::new();
        write_video_to(&mut buf, &video).unwrap();
        buf.truncate(buf.len() - 1);
        let err = read_video_from(buf.as_slice()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }
}
