//! The 20-marker capture schema and per-frame marker storage.
//!
//! Odd ids sit on the right side of the body, even ids on the left. Markers
//! 17 through 20 are sewn onto the resistance bands rather than the body.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

pub const MARKER_COUNT: usize = 20;

pub const RIGHT_ANKLE: u8 = 1;
pub const LEFT_ANKLE: u8 = 2;
pub const RIGHT_KNEE: u8 = 3;
pub const LEFT_KNEE: u8 = 4;
pub const RIGHT_HIP: u8 = 5;
pub const LEFT_HIP: u8 = 6;
pub const RIGHT_SIDE: u8 = 7;
pub const LEFT_SIDE: u8 = 8;
pub const RIGHT_SHOULDER: u8 = 9;
pub const LEFT_SHOULDER: u8 = 10;
pub const RIGHT_ELBOW: u8 = 11;
pub const LEFT_ELBOW: u8 = 12;
pub const RIGHT_WRIST: u8 = 13;
pub const LEFT_WRIST: u8 = 14;
pub const C4_SPINOUS: u8 = 15;
pub const STERNUM: u8 = 16;
/// Band marker closest to the knee clip, right band.
pub const RIGHT_BAND_KNEE: u8 = 17;
pub const LEFT_BAND_KNEE: u8 = 18;
/// Band marker closest to the wrist clip, right band.
pub const RIGHT_BAND_WRIST: u8 = 19;
pub const LEFT_BAND_WRIST: u8 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn ankle(self) -> u8 {
        self.pick(LEFT_ANKLE, RIGHT_ANKLE)
    }

    pub fn knee(self) -> u8 {
        self.pick(LEFT_KNEE, RIGHT_KNEE)
    }

    pub fn hip(self) -> u8 {
        self.pick(LEFT_HIP, RIGHT_HIP)
    }

    pub fn side_marker(self) -> u8 {
        self.pick(LEFT_SIDE, RIGHT_SIDE)
    }

    pub fn shoulder(self) -> u8 {
        self.pick(LEFT_SHOULDER, RIGHT_SHOULDER)
    }

    pub fn elbow(self) -> u8 {
        self.pick(LEFT_ELBOW, RIGHT_ELBOW)
    }

    pub fn wrist(self) -> u8 {
        self.pick(LEFT_WRIST, RIGHT_WRIST)
    }

    pub fn band_knee(self) -> u8 {
        self.pick(LEFT_BAND_KNEE, RIGHT_BAND_KNEE)
    }

    pub fn band_wrist(self) -> u8 {
        self.pick(LEFT_BAND_WRIST, RIGHT_BAND_WRIST)
    }

    /// Mirror partner of a marker id (left <-> right); midline markers map to themselves.
    pub fn mirror_id(id: u8) -> u8 {
        match id {
            C4_SPINOUS | STERNUM => id,
            _ if id % 2 == 1 => id + 1,
            _ => id - 1,
        }
    }

    fn pick(self, left: u8, right: u8) -> u8 {
        match self {
            Side::Left => left,
            Side::Right => right,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(format!("unknown side `{other}`")),
        }
    }
}

/// Which capture axis points up. Frames are rotated so the vertical axis
/// becomes +z before any angle is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerticalAxis {
    X,
    Y,
    #[default]
    Z,
}

impl VerticalAxis {
    /// Cyclic permutation taking this axis onto +z (a proper rotation).
    pub fn to_z_up(self, p: Vec3) -> Vec3 {
        match self {
            VerticalAxis::Z => p,
            VerticalAxis::Y => Vec3::new(p.z, p.x, p.y),
            VerticalAxis::X => Vec3::new(p.y, p.z, p.x),
        }
    }
}

pub fn is_valid_id(id: u8) -> bool {
    (1..=MARKER_COUNT as u8).contains(&id)
}

/// One motion-capture sample: positions in meters plus a validity flag per marker.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerFrame {
    pub t: f64,
    pub seq: u64,
    positions: [Vec3; MARKER_COUNT],
    valid: [bool; MARKER_COUNT],
}

impl MarkerFrame {
    /// A frame with every marker invalid.
    pub fn new(t: f64, seq: u64) -> Self {
        Self {
            t,
            seq,
            positions: [Vec3::zeros(); MARKER_COUNT],
            valid: [false; MARKER_COUNT],
        }
    }

    /// Marks `id` valid at `pos`. Panics on an id outside 1..=20.
    pub fn set(&mut self, id: u8, pos: Vec3) {
        let i = Self::index(id);
        self.positions[i] = pos;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, id: u8) {
        let i = Self::index(id);
        self.valid[i] = false;
    }

    pub fn get(&self, id: u8) -> Option<Vec3> {
        let i = Self::index(id);
        self.valid[i].then(|| self.positions[i])
    }

    pub fn is_valid(&self, id: u8) -> bool {
        self.valid[Self::index(id)]
    }

    /// Raw stored position, meaningful only when the marker is valid.
    pub fn raw_position(&self, id: u8) -> Vec3 {
        self.positions[Self::index(id)]
    }

    pub fn ids() -> impl Iterator<Item = u8> {
        1..=MARKER_COUNT as u8
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Applies `f` to every valid position.
    pub fn map_positions(&mut self, mut f: impl FnMut(Vec3) -> Vec3) {
        for i in 0..MARKER_COUNT {
            if self.valid[i] {
                self.positions[i] = f(self.positions[i]);
            }
        }
    }

    /// Swaps every left marker with its right partner and reflects y.
    pub fn mirrored(&self) -> Self {
        let mut out = MarkerFrame::new(self.t, self.seq);
        for id in Self::ids() {
            if let Some(p) = self.get(id) {
                out.set(Side::mirror_id(id), Vec3::new(p.x, -p.y, p.z));
            }
        }
        out
    }

    fn index(id: u8) -> usize {
        assert!(is_valid_id(id), "marker id {id} outside 1..=20");
        id as usize - 1
    }
}

/// A row-level item of a capture stream: either a frame or an operator set boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameRecord {
    Frame(MarkerFrame),
    SetEnd { t: f64, seq: u64 },
}

impl FrameRecord {
    pub fn seq(&self) -> u64 {
        match self {
            FrameRecord::Frame(f) => f.seq,
            FrameRecord::SetEnd { seq, .. } => *seq,
        }
    }
}
