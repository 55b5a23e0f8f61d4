//! `.pcv` point-cloud-video files.
//!
//! Each record is a text header line
//! `pcv v1 T=<int> N=<int> C=<int> label_kind=<none|video|frame|point>` followed by
//! little-endian `f32` payload, frame-major (per frame: `N x 3` coordinates, then
//! `N x C` features), then `i32` labels (1, `T` or `T*N` of them, none for `none`).
//! A file may hold several records back to back.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::video::{LabelKind, Labels, PointCloudVideo};
use crate::error::{Error, Result};

const FORMAT: &str = "pcv";

pub fn write_pcv<W: Write>(video: &PointCloudVideo, mut w: W) -> Result<()> {
    let (t, n, c) = (video.frames(), video.points_per_frame(), video.channels());
    writeln!(w, "pcv v1 T={t} N={n} C={c} label_kind={}", video.labels().kind().as_str())?;
    let mut buf = Vec::with_capacity(t * n * (3 + c) * 4);
    for f in 0..t {
        for p in video.frame(f) {
            for v in p {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        for i in 0..n {
            for v in video.feature(f, i) {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    let labels: &[u32] = match video.labels() {
        Labels::None => &[],
        Labels::Video(l) => std::slice::from_ref(l),
        Labels::Frame(l) | Labels::Point(l) => l,
    };
    for &l in labels {
        let l = i32::try_from(l).map_err(|_| Error::format(FORMAT, "label does not fit in i32"))?;
        buf.extend_from_slice(&l.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn header_field(token: Option<&str>, key: &str) -> Result<usize> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(FORMAT, format!("missing or invalid {key}")))
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::format(FORMAT, "truncated payload"));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn parse_record(bytes: &mut &[u8]) -> Result<PointCloudVideo> {
    let line_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(FORMAT, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..line_end]).map_err(|_| Error::format(FORMAT, "header is not UTF-8"))?;
    let mut tokens = header.split_ascii_whitespace();
    if tokens.next() != Some("pcv") || tokens.next() != Some("v1") {
        return Err(Error::format(FORMAT, format!("bad header {header:?}")));
    }
    let t = header_field(tokens.next(), "T")?;
    let n = header_field(tokens.next(), "N")?;
    let c = header_field(tokens.next(), "C")?;
    let kind = tokens
        .next()
        .and_then(|s| s.strip_prefix("label_kind="))
        .and_then(LabelKind::parse)
        .ok_or_else(|| Error::format(FORMAT, "missing or invalid label_kind"))?;
    if tokens.next().is_some() {
        return Err(Error::format(FORMAT, "unexpected header fields"));
    }
    *bytes = &bytes[line_end + 1..];

    let f32s = |raw: &[u8]| -> Vec<f64> {
        raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64).collect()
    };
    let mut coords = Vec::with_capacity(t * n);
    let mut feats = Vec::with_capacity(t * n * c);
    for _ in 0..t {
        let xyz = f32s(take(bytes, n * 3 * 4)?);
        coords.extend(xyz.chunks_exact(3).map(|p| [p[0], p[1], p[2]]));
        feats.extend(f32s(take(bytes, n * c * 4)?));
    }
    let count = match kind {
        LabelKind::None => 0,
        LabelKind::Video => 1,
        LabelKind::Frame => t,
        LabelKind::Point => t * n,
    };
    let labels: Vec<u32> = take(bytes, count * 4)?
        .chunks_exact(4)
        .map(|b| {
            u32::try_from(i32::from_le_bytes(b.try_into().expect("4 bytes")))
                .map_err(|_| Error::format(FORMAT, "negative label"))
        })
        .collect::<Result<_>>()?;
    let labels = match kind {
        LabelKind::None => Labels::None,
        LabelKind::Video => Labels::Video(labels[0]),
        LabelKind::Frame => Labels::Frame(labels),
        LabelKind::Point => Labels::Point(labels),
    };
    PointCloudVideo::new(t, n, coords, c, feats, labels).map_err(|e| Error::format(FORMAT, e.to_string()))
}

/// Parses every record in `bytes`.
pub fn parse_pcv(mut bytes: &[u8]) -> Result<Vec<PointCloudVideo>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        out.push(parse_record(&mut bytes)?);
    }
    if out.is_empty() {
        return Err(Error::format(FORMAT, "no records"));
    }
    Ok(out)
}

/// Reads a `.pcv` file, or every `.pcv` file of a directory in name order.
pub fn read_pcv(path: impl AsRef<Path>) -> Result<Vec<PointCloudVideo>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "pcv"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(parse_pcv(&fs::read(f)?)?);
        }
        if out.is_empty() {
            return Err(Error::format(FORMAT, format!("no .pcv files in {}", path.display())));
        }
        return Ok(out);
    }
    parse_pcv(&fs::read(path)?)
}

pub fn write_pcv_file<'a>(videos: impl IntoIterator<Item = &'a PointCloudVideo>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    for v in videos {
        write_pcv(v, &mut buf)?;
    }
    fs::write(path, buf)?;
    Ok(())
}
