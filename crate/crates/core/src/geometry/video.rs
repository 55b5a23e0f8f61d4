use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Supervision attached to a video.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Labels {
    None,
    /// One class for the whole video.
    Video(u32),
    /// One class per frame, length `T`.
    Frame(Vec<u32>),
    /// One class per point, frame-major, length `T * N`.
    Point(Vec<u32>),
}

impl Labels {
    pub fn kind(&self) -> LabelKind {
        match self {
            Labels::None => LabelKind::None,
            Labels::Video(_) => LabelKind::Video,
            Labels::Frame(_) => LabelKind::Frame,
            Labels::Point(_) => LabelKind::Point,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelKind {
    None,
    Video,
    Frame,
    Point,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::None => "none",
            LabelKind::Video => "video",
            LabelKind::Frame => "frame",
            LabelKind::Point => "point",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => LabelKind::None,
            "video" => LabelKind::Video,
            "frame" => LabelKind::Frame,
            "point" => LabelKind::Point,
            _ => return None,
        })
    }
}

/// `T` frames of exactly `N` points each, with optional `C`-dim point features.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudVideo {
    frames: usize,
    points: usize,
    channels: usize,
    coords: Vec<Point3>,
    feats: Vec<f64>,
    labels: Labels,
}

impl PointCloudVideo {
    pub fn new(
        frames: usize,
        points: usize,
        coords: Vec<Point3>,
        channels: usize,
        feats: Vec<f64>,
        labels: Labels,
    ) -> Result<Self> {
        if frames == 0 || points == 0 {
            return Err(Error::invalid("a video needs at least one frame and one point"));
        }
        if coords.len() != frames * points {
            return Err(Error::shape(format!(
                "{} coordinates for {frames} frames of {points} points",
                coords.len()
            )));
        }
        if feats.len() != frames * points * channels {
            return Err(Error::shape(format!("{} feature values for C={channels}", feats.len())));
        }
        if coords.iter().flatten().chain(&feats).any(|v| !v.is_finite()) {
            return Err(Error::invalid("coordinates and features must be finite"));
        }
        let ok = match &labels {
            Labels::None | Labels::Video(_) => true,
            Labels::Frame(l) => l.len() == frames,
            Labels::Point(l) => l.len() == frames * points,
        };
        if !ok {
            return Err(Error::shape("label count does not match the label kind"));
        }
        Ok(Self { frames, points, channels, coords, feats, labels })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn points_per_frame(&self) -> usize {
        self.points
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn set_labels(&mut self, labels: Labels) -> Result<()> {
        let ok = match &labels {
            Labels::None | Labels::Video(_) => true,
            Labels::Frame(l) => l.len() == self.frames,
            Labels::Point(l) => l.len() == self.frames * self.points,
        };
        if !ok {
            return Err(Error::shape("label count does not match the label kind"));
        }
        self.labels = labels;
        Ok(())
    }

    /// All points of frame `t`.
    pub fn frame(&self, t: usize) -> &[Point3] {
        &self.coords[t * self.points..(t + 1) * self.points]
    }

    pub fn point(&self, t: usize, i: usize) -> Point3 {
        self.coords[t * self.points + i]
    }

    /// Feature vector of point `i` in frame `t` (empty when `C = 0`).
    pub fn feature(&self, t: usize, i: usize) -> &[f64] {
        let c = self.channels;
        let at = (t * self.points + i) * c;
        &self.feats[at..at + c]
    }

    pub fn coords(&self) -> &[Point3] {
        &self.coords
    }

    pub fn feats(&self) -> &[f64] {
        &self.feats
    }

    /// Frames `start..start + len` as a new video (labels sliced accordingly).
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames {
            return Err(Error::invalid(format!("frames {start}..{} of {}", start + len, self.frames)));
        }
        let n = self.points;
        let labels = match &self.labels {
            Labels::Frame(l) => Labels::Frame(l[start..start + len].to_vec()),
            Labels::Point(l) => Labels::Point(l[start * n..(start + len) * n].to_vec()),
            other => other.clone(),
        };
        Self::new(
            len,
            n,
            self.coords[start * n..(start + len) * n].to_vec(),
            self.channels,
            self.feats[start * n * self.channels..(start + len) * n * self.channels].to_vec(),
            labels,
        )
    }
}

pub fn dist2(a: Point3, b: Point3) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}
