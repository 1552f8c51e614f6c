//! Raw video I/O: planar 8-bit YUV 4:2:0 frames, YUV4MPEG2 reading and
//! writing, BT.601 RGB conversion, and binary PPM export.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

/// One 8-bit sample plane, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Plane {
        Plane { width, height, data: vec![0; width * height] }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Plane {
        Plane { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Plane {
        assert_eq!(data.len(), width * height, "plane data length mismatch");
        Plane { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }
}

impl fmt::Debug for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Plane({}x{})", self.width, self.height)
    }
}

/// One 4:2:0 picture. Luma is `width`x`height`, chroma planes are quarter
/// area. Dimensions are multiples of 16 so every frame tiles exactly into
/// 16x16 macroblocks.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pub y: Plane,
    pub u: Plane,
    pub v: Plane,
    pub index: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize, index: usize) -> Frame {
        assert!(width.is_multiple_of(16) && height.is_multiple_of(16), "frame dims must be multiples of 16");
        Frame {
            y: Plane::new(width, height),
            u: Plane::new(width / 2, height / 2),
            v: Plane::new(width / 2, height / 2),
            index,
        }
    }

    pub fn filled(width: usize, height: usize, index: usize, y: u8, u: u8, v: u8) -> Frame {
        let mut f = Frame::new(width, height, index);
        f.y = Plane::filled(width, height, y);
        f.u = Plane::filled(width / 2, height / 2, u);
        f.v = Plane::filled(width / 2, height / 2, v);
        f
    }

    pub fn width(&self) -> usize {
        self.y.width()
    }

    pub fn height(&self) -> usize {
        self.y.height()
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame#{}({}x{})", self.index, self.width(), self.height())
    }
}

/// An ordered run of equally sized frames plus the frame rate.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct VideoSequence {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frames: Vec<Frame>,
}

impl VideoSequence {
    pub fn new(width: usize, height: usize, fps_num: u32, fps_den: u32) -> VideoSequence {
        VideoSequence { width, height, fps_num, fps_den, frames: Vec::new() }
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames.len() as f64 * self.fps_den as f64 / self.fps_num as f64
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::format("zero frame dimension"));
    }
    if !width.is_multiple_of(16) || !height.is_multiple_of(16) {
        return Err(Error::format(format!(
            "dimensions {width}x{height} are not multiples of 16"
        )));
    }
    if width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(Error::format("frame dimension exceeds 65535"));
    }
    Ok(())
}

/// Reads a YUV4MPEG2 stream. Only the C420 colorspace is accepted; C420jpeg
/// and C420paldv carry chroma siting we do not model and are rejected.
pub fn read_y4m<R: Read>(reader: R) -> Result<VideoSequence> {
    let mut r = BufReader::new(reader);
    let mut header = Vec::new();
    r.read_until(b'\n', &mut header)?;
    if header.last() != Some(&b'\n') {
        return Err(Error::format("missing y4m header line"));
    }
    header.pop();
    let header = String::from_utf8(header).map_err(|_| Error::format("y4m header is not utf-8"))?;

    let mut tokens = header.split_ascii_whitespace();
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(Error::format("not a YUV4MPEG2 stream"));
    }

    let mut width = None;
    let mut height = None;
    let mut fps = (25u32, 1u32);
    for tok in tokens {
        let (tag, rest) = tok.split_at(1);
        match tag {
            "W" => width = Some(rest.parse::<usize>().map_err(|_| Error::format("bad W token"))?),
            "H" => height = Some(rest.parse::<usize>().map_err(|_| Error::format("bad H token"))?),
            "F" => {
                let (n, d) = rest.split_once(':').ok_or_else(|| Error::format("bad F token"))?;
                let n = n.parse::<u32>().map_err(|_| Error::format("bad F numerator"))?;
                let d = d.parse::<u32>().map_err(|_| Error::format("bad F denominator"))?;
                if n == 0 || d == 0 {
                    return Err(Error::format("zero frame rate"));
                }
                fps = (n, d);
            }
            "C"
                if rest != "420" => {
                    return Err(Error::format(format!("unsupported colorspace C{rest}")));
                }
            // Interlacing and aspect tokens don't affect the sample layout.
            _ => {}
        }
    }
    let width = width.ok_or_else(|| Error::format("y4m header missing W"))?;
    let height = height.ok_or_else(|| Error::format("y4m header missing H"))?;
    check_dims(width, height)?;

    let mut seq = VideoSequence::new(width, height, fps.0, fps.1);
    let luma = width * height;
    let chroma = luma / 4;
    loop {
        let mut marker = Vec::new();
        let n = r.read_until(b'\n', &mut marker)?;
        if n == 0 {
            break; // clean end of stream
        }
        if marker.last() != Some(&b'\n') || !marker.starts_with(b"FRAME") {
            return Err(Error::format("malformed FRAME marker"));
        }
        let mut frame = Frame::new(width, height, seq.frames.len());
        for plane in [&mut frame.y, &mut frame.u, &mut frame.v] {
            let want = if plane.width() == width { luma } else { chroma };
            r.read_exact(&mut plane.data_mut()[..want])
                .map_err(|_| Error::format("truncated frame payload"))?;
        }
        seq.frames.push(frame);
    }
    Ok(seq)
}

/// Writes a sequence as YUV4MPEG2. `read_y4m(write_y4m(seq)) == seq` exactly.
pub fn write_y4m<W: Write>(seq: &VideoSequence, mut w: W) -> Result<()> {
    writeln!(
        w,
        "YUV4MPEG2 W{} H{} F{}:{} C420",
        seq.width, seq.height, seq.fps_num, seq.fps_den
    )?;
    for frame in &seq.frames {
        w.write_all(b"FRAME\n")?;
        w.write_all(frame.y.data())?;
        w.write_all(frame.u.data())?;
        w.write_all(frame.v.data())?;
    }
    Ok(())
}

fn clip_round(x: f64) -> u8 {
    // f64::round is round-half-away-from-zero.
    let r = x.round();
    if r < 0.0 {
        0
    } else if r > 255.0 {
        255
    } else {
        r as u8
    }
}

/// BT.601 limited-range YUV to RGB, chroma replicated to full resolution.
/// Returns a flat `3*width*height` RGB byte grid in row-major order.
pub fn frame_to_rgb(frame: &Frame) -> Vec<u8> {
    let (w, h) = (frame.width(), frame.height());
    let mut rgb = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            let ys = frame.y.get(x, y) as f64;
            let us = frame.u.get(x / 2, y / 2) as f64;
            let vs = frame.v.get(x / 2, y / 2) as f64;
            let yy = 1.164 * (ys - 16.0);
            let r = yy + 1.596 * (vs - 128.0);
            let g = yy - 0.813 * (vs - 128.0) - 0.391 * (us - 128.0);
            let b = yy + 2.018 * (us - 128.0);
            rgb.push(clip_round(r));
            rgb.push(clip_round(g));
            rgb.push(clip_round(b));
        }
    }
    rgb
}

/// Binary PPM (P6) export via [`frame_to_rgb`].
pub fn write_ppm<W: Write>(frame: &Frame, mut w: W) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", frame.width(), frame.height())?;
    w.write_all(&frame_to_rgb(frame))?;
    Ok(())
}

/// Grayscale PPM export of a single plane (used for edge maps).
pub fn write_ppm_gray<W: Write>(plane: &Plane, mut w: W) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", plane.width(), plane.height())?;
    let mut rgb = Vec::with_capacity(3 * plane.data().len());
    for &s in plane.data() {
        rgb.extend_from_slice(&[s, s, s]);
    }
    w.write_all(&rgb)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_seq(frames: usize) -> VideoSequence {
        let mut seq = VideoSequence::new(16, 16, 30, 1);
        for i in 0..frames {
            let mut f = Frame::new(16, 16, i);
            for (k, s) in f.y.data_mut().iter_mut().enumerate() {
                *s = ((k * 7 + i * 13) % 256) as u8;
            }
            for (k, s) in f.u.data_mut().iter_mut().enumerate() {
                *s = ((k * 3 + i) % 256) as u8;
            }
            for (k, s) in f.v.data_mut().iter_mut().enumerate() {
                *s = ((k * 5 + i * 2) % 256) as u8;
            }
            seq.frames.push(f);
        }
        seq
    }

    #[test]
    fn reads_single_frame() {
        let mut bytes = b"YUV4MPEG2 W16 H16 F30:1\nFRAME\n".to_vec();
        bytes.extend(std::iter::repeat_n(9u8, 384));
        let seq = read_y4m(&bytes[..]).unwrap();
        assert_eq!(seq.frames.len(), 1);
        assert_eq!((seq.width, seq.height), (16, 16));
        assert_eq!((seq.fps_num, seq.fps_den), (30, 1));
        assert!(seq.frames[0].y.data().iter().all(|&s| s == 9));
    }

    #[test]
    fn empty_body_is_zero_frames() {
        let seq = read_y4m(&b"YUV4MPEG2 W16 H16 F30:1\n"[..]).unwrap();
        assert_eq!(seq.frames.len(), 0);
    }

    #[test]
    fn short_payload_is_error() {
        let mut bytes = b"YUV4MPEG2 W16 H16 F30:1\nFRAME\n".to_vec();
        bytes.extend(std::iter::repeat_n(0u8, 383));
        let err = read_y4m(&bytes[..]).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn tolerates_interlace_and_aspect_tokens() {
        let mut bytes = b"YUV4MPEG2 W16 H16 F25:1 Ip A1:1 C420 XYSCSS=420\nFRAME\n".to_vec();
        bytes.extend(std::iter::repeat_n(5u8, 384));
        let seq = read_y4m(&bytes[..]).unwrap();
        assert_eq!(seq.frames.len(), 1);
        assert_eq!((seq.fps_num, seq.fps_den), (25, 1));
    }

    #[test]
    fn rejects_other_subsampling() {
        for cs in ["C420jpeg", "C420paldv", "C422", "C444"] {
            let hdr = format!("YUV4MPEG2 W16 H16 F30:1 {cs}\n");
            assert!(read_y4m(hdr.as_bytes()).is_err(), "{cs} must be rejected");
        }
    }

    #[test]
    fn rejects_unaligned_dims() {
        assert!(read_y4m(&b"YUV4MPEG2 W20 H16 F30:1\n"[..]).is_err());
    }

    #[test]
    fn round_trip_identity() {
        let seq = tiny_seq(2);
        let mut buf = Vec::new();
        write_y4m(&seq, &mut buf).unwrap();
        let back = read_y4m(&buf[..]).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn zero_frame_sequence_writes_header_only() {
        let seq = VideoSequence::new(16, 16, 30, 1);
        let mut buf = Vec::new();
        write_y4m(&seq, &mut buf).unwrap();
        assert_eq!(buf, b"YUV4MPEG2 W16 H16 F30:1 C420\n");
        assert_eq!(read_y4m(&buf[..]).unwrap(), seq);
    }

    #[test]
    fn cif_payload_size() {
        let mut seq = VideoSequence::new(352, 288, 30, 1);
        for i in 0..2 {
            seq.frames.push(Frame::new(352, 288, i));
        }
        let mut buf = Vec::new();
        write_y4m(&seq, &mut buf).unwrap();
        let header_len = "YUV4MPEG2 W352 H288 F30:1 C420\n".len();
        assert_eq!(buf.len(), header_len + 2 * (6 + 152064));
    }

    #[test]
    fn rgb_anchors() {
        let mut f = Frame::filled(16, 16, 0, 16, 128, 128);
        let rgb = frame_to_rgb(&f);
        assert_eq!(&rgb[0..3], &[0, 0, 0]);

        f.y = Plane::filled(16, 16, 235);
        let rgb = frame_to_rgb(&f);
        assert_eq!(&rgb[0..3], &[255, 255, 255]);

        f.y = Plane::filled(16, 16, 128);
        let rgb = frame_to_rgb(&f);
        assert_eq!(&rgb[0..3], &[130, 130, 130]);
    }

    #[test]
    fn ppm_black_frame() {
        // PPM headers carry true dims even though frames are 16-aligned;
        // build the 2x2 check on a synthetic plane pair instead.
        let f = Frame::filled(16, 16, 0, 16, 128, 128);
        let mut buf = Vec::new();
        write_ppm(&f, &mut buf).unwrap();
        assert!(buf.starts_with(b"P6\n16 16\n255\n"));
        assert!(buf[13..].iter().all(|&b| b == 0));
        assert_eq!(buf.len(), 13 + 3 * 256);
    }

    #[test]
    fn ppm_gray_frame_is_130() {
        let f = Frame::filled(16, 16, 0, 128, 128, 128);
        let mut buf = Vec::new();
        write_ppm(&f, &mut buf).unwrap();
        assert!(buf[13..].iter().all(|&b| b == 130));
    }
}
