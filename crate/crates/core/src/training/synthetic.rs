use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Labels, Point3, PointCloudVideo};
use crate::model::TaskKind;

/// Parameters of the synthetic moving-blob generator.
///
/// A video is a handful of Gaussian blobs moved rigidly about the z axis.
/// Class `c` rotates clockwise when even and counterclockwise when odd; classes
/// beyond the first pair add a translation direction and a vertical
/// oscillation frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub task: TaskKind,
    pub classes: usize,
    pub videos: usize,
    pub frames: usize,
    pub points: usize,
    /// Per-point feature channels (constant over time).
    pub channels: usize,
    pub blobs: usize,
    pub blob_std: f64,
    /// Standard deviation of per-frame coordinate jitter.
    pub noise: f64,
    /// Rotation per frame, radians.
    pub angular_speed: f64,
    /// Translation per frame along the class direction.
    pub translation_speed: f64,
    /// Base vertical oscillation frequency, cycles per frame.
    pub oscillation_freq: f64,
    pub oscillation_amp: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            task: TaskKind::Recognition,
            classes: 2,
            videos: 200,
            frames: 8,
            points: 128,
            channels: 0,
            blobs: 3,
            blob_std: 0.12,
            noise: 0.01,
            angular_speed: 0.3,
            translation_speed: 0.04,
            oscillation_freq: 0.1,
            oscillation_amp: 0.1,
        }
    }
}

/// Rigid motion of one class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Motion {
    /// Signed rotation per frame about z; negative is clockwise.
    pub angular_velocity: f64,
    pub translation: [f64; 3],
    pub oscillation_freq: f64,
}

impl Motion {
    pub const STATIC: Motion = Motion { angular_velocity: 0.0, translation: [0.0; 3], oscillation_freq: 0.0 };
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.videos == 0 || self.frames == 0 || self.points == 0 || self.blobs == 0 {
            return Err(Error::Config("synthetic classes, videos, frames, points and blobs must be positive".into()));
        }
        if self.points < self.blobs {
            return Err(Error::Config("every blob needs at least one point".into()));
        }
        if self.task == TaskKind::SemanticSegmentation && (self.classes != 2 || self.blobs < 2) {
            return Err(Error::Config("moving/static segmentation uses 2 classes and at least 2 blobs".into()));
        }
        if self.task == TaskKind::ActionSegmentation && self.classes < 2 {
            return Err(Error::Config("frame segmentation needs at least 2 classes".into()));
        }
        let reals = [self.blob_std, self.noise, self.angular_speed, self.translation_speed, self.oscillation_freq, self.oscillation_amp];
        if reals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("synthetic magnitudes must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Motion assigned to class `c`.
    pub fn motion(&self, class: usize) -> Motion {
        let sign = if class.is_multiple_of(2) { -1.0 } else { 1.0 };
        let group = class / 2;
        let groups = self.classes.div_ceil(2).max(2) - 1;
        let (translation, oscillation_freq) = if group == 0 {
            ([0.0; 3], 0.0)
        } else {
            let theta = TAU * (group - 1) as f64 / groups as f64;
            let v = self.translation_speed;
            ([v * theta.cos(), v * theta.sin(), 0.0], self.oscillation_freq * group as f64)
        };
        Motion { angular_velocity: sign * self.angular_speed, translation, oscillation_freq }
    }
}

/// Class-independent random draws of one video.
struct Scene {
    base: Vec<Point3>,
    blob_of: Vec<usize>,
    feats: Vec<f64>,
    phase: f64,
    jitter: Vec<Point3>,
}

fn scene(spec: &SyntheticSpec, index: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let centers: Vec<Point3> = (0..spec.blobs)
        .map(|_| {
            let r = rng.random_range(0.3..0.8);
            let phi = rng.random_range(0.0..TAU);
            [r * phi.cos(), r * phi.sin(), rng.random_range(-0.2..0.2)]
        })
        .collect();
    let blob_of: Vec<usize> = (0..spec.points).map(|i| i % spec.blobs).collect();
    let base = blob_of
        .iter()
        .map(|&b| {
            let c = centers[b];
            [
                c[0] + spec.blob_std * unit.sample(&mut rng),
                c[1] + spec.blob_std * unit.sample(&mut rng),
                c[2] + spec.blob_std * unit.sample(&mut rng),
            ]
        })
        .collect();
    let feats = (0..spec.points * spec.channels).map(|_| rng.random_range(0.0..1.0)).collect();
    let phase = rng.random_range(0.0..TAU);
    let jitter = (0..spec.frames * spec.points)
        .map(|_| [unit.sample(&mut rng), unit.sample(&mut rng), unit.sample(&mut rng)].map(|v| v * spec.noise))
        .collect();
    Scene { base, blob_of, feats, phase, jitter }
}

/// Pose of a point after accumulated rotation `angle`, offset `shift` and oscillation height `lift`.
fn place(p: Point3, angle: f64, shift: [f64; 3], lift: f64) -> Point3 {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1], p[2] + shift[2] + lift]
}

/// Integrated pose of a per-frame motion sequence.
#[derive(Clone, Copy, Default)]
struct Pose {
    angle: f64,
    shift: [f64; 3],
    osc_phase: f64,
}

impl Pose {
    fn advance(&mut self, m: &Motion) {
        self.angle += m.angular_velocity;
        for (s, v) in self.shift.iter_mut().zip(m.translation) {
            *s += v;
        }
        self.osc_phase += TAU * m.oscillation_freq;
    }
}

fn assemble(spec: &SyntheticSpec, sc: &Scene, poses: &[Vec<Pose>], labels: Labels) -> Result<PointCloudVideo> {
    let n = spec.points;
    let mut coords = Vec::with_capacity(spec.frames * n);
    for t in 0..spec.frames {
        for i in 0..n {
            let pose = poses[sc.blob_of[i]][t];
            let lift = spec.oscillation_amp * pose.osc_phase.sin();
            let p = place(sc.base[i], sc.phase + pose.angle, pose.shift, lift);
            let j = sc.jitter[t * n + i];
            coords.push([p[0] + j[0], p[1] + j[1], p[2] + j[2]]);
        }
    }
    let feats: Vec<f64> = (0..spec.frames).flat_map(|_| sc.feats.iter().copied()).collect();
    PointCloudVideo::new(spec.frames, n, coords, spec.channels, feats, labels)
}

fn poses_for(frames: &[Motion]) -> Vec<Pose> {
    let mut pose = Pose::default();
    frames
        .iter()
        .map(|m| {
            let here = pose;
            pose.advance(m);
            here
        })
        .collect()
}

/// Recognition video `index` showing class `class`. Everything except the
/// motion is drawn from `(seed, index)`, so two classes of the same index differ
/// only in their motion.
pub fn generate_recognition_video(spec: &SyntheticSpec, index: usize, class: usize) -> Result<PointCloudVideo> {
    spec.validate()?;
    if class >= spec.classes {
        return Err(Error::invalid(format!("class {class} outside {} classes", spec.classes)));
    }
    let sc = scene(spec, index);
    let motion = spec.motion(class);
    let track = poses_for(&vec![motion; spec.frames]);
    let poses = vec![track; spec.blobs];
    assemble(spec, &sc, &poses, Labels::Video(class as u32))
}

fn phase_labels(spec: &SyntheticSpec, index: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(index as u64);
    let phases = rng.random_range(2..=3usize).min(spec.frames);
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() + 1 < phases {
        let c = rng.random_range(1..spec.frames);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut labels = Vec::with_capacity(spec.frames);
    let mut class = rng.random_range(0..spec.classes);
    for t in 0..spec.frames {
        if cuts.contains(&t) {
            class = (class + rng.random_range(1..spec.classes)) % spec.classes;
        }
        labels.push(class);
    }
    labels
}

/// Generates video `index` of the dataset described by `spec`.
pub fn generate_video(spec: &SyntheticSpec, index: usize) -> Result<PointCloudVideo> {
    spec.validate()?;
    match spec.task {
        TaskKind::Recognition => generate_recognition_video(spec, index, index % spec.classes),
        TaskKind::ActionSegmentation => {
            let sc = scene(spec, index);
            let labels = phase_labels(spec, index);
            let motions: Vec<Motion> = labels.iter().map(|&c| spec.motion(c)).collect();
            let poses = vec![poses_for(&motions); spec.blobs];
            assemble(spec, &sc, &poses, Labels::Frame(labels.iter().map(|&c| c as u32).collect()))
        }
        TaskKind::SemanticSegmentation => {
            let sc = scene(spec, index);
            // blob 0 always moves, blob 1 never does, the rest alternate with the index
            let moving: Vec<bool> = (0..spec.blobs).map(|b| b == 0 || (b > 1 && (b + index).is_multiple_of(2))).collect();
            let spin = spec.motion(index % 2);
            let poses = moving
                .iter()
                .map(|&m| poses_for(&vec![if m { spin } else { Motion::STATIC }; spec.frames]))
                .collect::<Vec<_>>();
            let per_point: Vec<u32> = sc.blob_of.iter().map(|&b| u32::from(moving[b])).collect();
            let labels = (0..spec.frames).flat_map(|_| per_point.iter().copied()).collect();
            assemble(spec, &sc, &poses, Labels::Point(labels))
        }
    }
}

/// The whole synthetic dataset, deterministic in `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<PointCloudVideo>> {
    (0..spec.videos).map(|i| generate_video(spec, i)).collect()
}
