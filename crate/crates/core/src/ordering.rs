//! Serialization of spatio-temporal tokens into a single scan sequence.
//!
//! Points are ranked inside each frame by a one-axis key (`X`, `Y`, `Z`) or a
//! lexicographic three-axis key (`XYZ`, ...). Sequential scanning walks frames in
//! time order and each frame from its largest to smallest key; cross-temporal
//! scanning walks ranks from largest to smallest and, at every rank, visits all
//! frames in time order. Unidirectional scanning keeps storage order.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScanStrategy {
    Sequential,
    CrossTemporal,
    Unidirectional,
}

/// Axis ordering used to rank points inside a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisKey {
    X,
    Y,
    Z,
    Xyz,
    Xzy,
    Yxz,
    Yzx,
    Zxy,
    Zyx,
}

impl AxisKey {
    pub const ALL: [AxisKey; 9] = [
        AxisKey::X,
        AxisKey::Y,
        AxisKey::Z,
        AxisKey::Xyz,
        AxisKey::Xzy,
        AxisKey::Yxz,
        AxisKey::Yzx,
        AxisKey::Zxy,
        AxisKey::Zyx,
    ];

    /// Coordinate indices compared in order.
    pub fn axes(self) -> &'static [usize] {
        match self {
            AxisKey::X => &[0],
            AxisKey::Y => &[1],
            AxisKey::Z => &[2],
            AxisKey::Xyz => &[0, 1, 2],
            AxisKey::Xzy => &[0, 2, 1],
            AxisKey::Yxz => &[1, 0, 2],
            AxisKey::Yzx => &[1, 2, 0],
            AxisKey::Zxy => &[2, 0, 1],
            AxisKey::Zyx => &[2, 1, 0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AxisKey::X => "X",
            AxisKey::Y => "Y",
            AxisKey::Z => "Z",
            AxisKey::Xyz => "XYZ",
            AxisKey::Xzy => "XZY",
            AxisKey::Yxz => "YXZ",
            AxisKey::Yzx => "YZX",
            AxisKey::Zxy => "ZXY",
            AxisKey::Zyx => "ZYX",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        AxisKey::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Serialization strategy paired with its axis key (none for unidirectional).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScanOrder {
    strategy: ScanStrategy,
    axis: Option<AxisKey>,
}

impl ScanOrder {
    pub fn new(strategy: ScanStrategy, axis: Option<AxisKey>) -> Result<Self> {
        match (strategy, axis) {
            (ScanStrategy::Unidirectional, None) => {}
            (ScanStrategy::Unidirectional, Some(_)) => {
                return Err(Error::invalid("unidirectional scanning takes no axis key"))
            }
            (_, None) => return Err(Error::invalid("sequential and cross-temporal scans need an axis key")),
            _ => {}
        }
        Ok(Self { strategy, axis })
    }

    pub const UNIDIRECTIONAL: ScanOrder = ScanOrder { strategy: ScanStrategy::Unidirectional, axis: None };

    pub fn sequential(axis: AxisKey) -> Self {
        Self { strategy: ScanStrategy::Sequential, axis: Some(axis) }
    }

    pub fn cross(axis: AxisKey) -> Self {
        Self { strategy: ScanStrategy::CrossTemporal, axis: Some(axis) }
    }

    pub fn strategy(self) -> ScanStrategy {
        self.strategy
    }

    pub fn axis(self) -> Option<AxisKey> {
        self.axis
    }

    /// The 19 inter-frame orders: 9 sequential, 9 cross-temporal, unidirectional.
    pub fn all_inter() -> Vec<ScanOrder> {
        AxisKey::ALL
            .into_iter()
            .map(ScanOrder::sequential)
            .chain(AxisKey::ALL.into_iter().map(ScanOrder::cross))
            .chain([ScanOrder::UNIDIRECTIONAL])
            .collect()
    }

    /// The 10 single-frame orders: the 9 axis keys and unidirectional.
    pub fn all_intra() -> Vec<ScanOrder> {
        AxisKey::ALL.into_iter().map(ScanOrder::sequential).chain([ScanOrder::UNIDIRECTIONAL]).collect()
    }
}

impl fmt::Display for ScanOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.strategy, self.axis) {
            (ScanStrategy::Sequential, Some(k)) => write!(f, "seq:{}", k.name()),
            (ScanStrategy::CrossTemporal, Some(k)) => write!(f, "cross:{}", k.name()),
            _ => f.write_str("uni"),
        }
    }
}

impl FromStr for ScanOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uni" {
            return Ok(ScanOrder::UNIDIRECTIONAL);
        }
        let bad = || Error::invalid(format!("unknown scan order {s:?}"));
        let (strategy, key) = s.split_once(':').ok_or_else(bad)?;
        let axis = AxisKey::parse(key).ok_or_else(bad)?;
        match strategy {
            "seq" => Ok(ScanOrder::sequential(axis)),
            "cross" => Ok(ScanOrder::cross(axis)),
            _ => Err(bad()),
        }
    }
}

/// Indices of `points` sorted ascending by `axis` (lexicographic for three-axis
/// keys), ties broken by index.
pub fn spatial_rank(points: &[Point3], axis: AxisKey) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    let axes = axis.axes();
    idx.sort_by(|&a, &b| {
        axes.iter()
            .map(|&k| points[a][k].total_cmp(&points[b][k]))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Bijection between tokens (`frame * n + point`) and scan positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Serialization {
    /// `permutation[position] = token`.
    pub permutation: Vec<usize>,
    /// `inverse[token] = position`.
    pub inverse: Vec<usize>,
}

impl Serialization {
    fn from_permutation(permutation: Vec<usize>) -> Self {
        let mut inverse = vec![0; permutation.len()];
        for (pos, &tok) in permutation.iter().enumerate() {
            inverse[tok] = pos;
        }
        Self { permutation, inverse }
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.len()];
        for &t in &self.permutation {
            if t >= seen.len() || std::mem::replace(&mut seen[t], true) {
                return false;
            }
        }
        self.permutation.iter().enumerate().all(|(p, &t)| self.inverse[t] == p)
    }
}

/// Serializes `frames` (one coordinate list per anchor frame, equal lengths).
pub fn serialize(frames: &[Vec<Point3>], order: ScanOrder) -> Result<Serialization> {
    let n = frames.first().map_or(0, Vec::len);
    if frames.is_empty() || n == 0 {
        return Err(Error::invalid("nothing to serialize"));
    }
    if frames.iter().any(|f| f.len() != n) {
        return Err(Error::invalid("every frame must carry the same number of tokens"));
    }
    let f_count = frames.len();
    let perm = match (order.strategy, order.axis) {
        (ScanStrategy::Unidirectional, _) | (_, None) => (0..f_count * n).collect(),
        (strategy, Some(axis)) => {
            let ranks: Vec<Vec<usize>> = frames.iter().map(|f| spatial_rank(f, axis)).collect();
            let mut perm = Vec::with_capacity(f_count * n);
            match strategy {
                ScanStrategy::Sequential => {
                    for (f, rank) in ranks.iter().enumerate() {
                        perm.extend(rank.iter().rev().map(|&i| f * n + i));
                    }
                }
                _ => {
                    for r in (0..n).rev() {
                        perm.extend(ranks.iter().enumerate().map(|(f, rank)| f * n + rank[r]));
                    }
                }
            }
            perm
        }
    };
    Ok(Serialization::from_permutation(perm))
}

/// Restores token order of a `[F*n, d]` sequence; returns the `[F*n, d]` data in
/// token order (`frame`-major).
pub fn deserialize(seq: &[f64], d: usize, ser: &Serialization) -> Result<Vec<f64>> {
    if d == 0 || seq.len() != ser.len() * d {
        return Err(Error::shape(format!(
            "sequence of {} values for {} tokens of width {d}",
            seq.len(),
            ser.len()
        )));
    }
    let mut out = vec![0.0; seq.len()];
    for (tok, &pos) in ser.inverse.iter().enumerate() {
        out[tok * d..(tok + 1) * d].copy_from_slice(&seq[pos * d..(pos + 1) * d]);
    }
    Ok(out)
}

/// Applies the serialization to token-ordered data.
pub fn apply(tokens: &[f64], d: usize, ser: &Serialization) -> Result<Vec<f64>> {
    if d == 0 || tokens.len() != ser.len() * d {
        return Err(Error::shape("token data does not match the serialization"));
    }
    let mut out = Vec::with_capacity(tokens.len());
    for &tok in &ser.permutation {
        out.extend_from_slice(&tokens[tok * d..(tok + 1) * d]);
    }
    Ok(out)
}
