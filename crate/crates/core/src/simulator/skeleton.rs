//! Rigid-segment body model and band routing.
//!
//! Feet are planted. The pelvis height follows from the knee command with the
//! shank taking 40% of the bend and the thigh 60%; knees are then placed by
//! two-link inverse kinematics so every segment keeps its length. The torso
//! is a rigid body rooted at the pelvis centre. Each band runs from a strap
//! just below the knee, up to the hip, through the frame routing and out of
//! an anchor near the shoulder to the wrist.

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use crate::markers::{self as mk, MarkerFrame, Side, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Anthropometry {
    pub stature_m: f64,
    pub ankle_height_m: f64,
    pub shank_m: f64,
    pub thigh_m: f64,
    pub hip_width_m: f64,
    /// Pelvis centre to the shoulder line.
    pub torso_m: f64,
    pub shoulder_width_m: f64,
    pub upper_arm_m: f64,
    pub forearm_m: f64,
}

impl Default for Anthropometry {
    /// A 1.75 m adult.
    fn default() -> Self {
        Self {
            stature_m: 1.75,
            ankle_height_m: 0.08,
            shank_m: 0.43,
            thigh_m: 0.43,
            hip_width_m: 0.30,
            torso_m: 0.50,
            shoulder_width_m: 0.38,
            upper_arm_m: 0.30,
            forearm_m: 0.27,
        }
    }
}

impl Anthropometry {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("stature_m", self.stature_m),
            ("ankle_height_m", self.ankle_height_m),
            ("shank_m", self.shank_m),
            ("thigh_m", self.thigh_m),
            ("hip_width_m", self.hip_width_m),
            ("torso_m", self.torso_m),
            ("shoulder_width_m", self.shoulder_width_m),
            ("upper_arm_m", self.upper_arm_m),
            ("forearm_m", self.forearm_m),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        let shoulder_height = self.ankle_height_m + self.shank_m + self.thigh_m + self.torso_m;
        if shoulder_height >= self.stature_m {
            return Err(format!(
                "segments stack to a shoulder height of {shoulder_height} m, not below the {} m stature",
                self.stature_m
            ));
        }
        Ok(())
    }

    pub fn arm_m(&self) -> f64 {
        self.upper_arm_m + self.forearm_m
    }
}

/// Where the band attaches and how it is routed. The rest path length is
/// derived so a forward-reaching arm pose produces `transverse_force_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandRig {
    /// Anchor drop below the shoulder, along the torso axis.
    pub anchor_drop_m: f64,
    /// Anchor offset from the shoulder toward the midline.
    pub anchor_medial_m: f64,
    /// Knee strap distance below the knee marker along the shank.
    pub strap_below_knee_m: f64,
    /// Fixed path through the frame between the hip and the anchor.
    pub routing_m: f64,
    /// Rest distance of the wrist-side sewn marker from the wrist strap.
    pub wrist_marker_m: f64,
    /// Rest distance of the knee-side sewn marker from the wrist strap.
    pub knee_marker_m: f64,
    pub transverse_force_n: f64,
}

impl Default for BandRig {
    fn default() -> Self {
        Self {
            anchor_drop_m: 0.05,
            anchor_medial_m: 0.16,
            strap_below_knee_m: 0.01,
            routing_m: 0.40,
            wrist_marker_m: 0.05,
            knee_marker_m: 0.30,
            transverse_force_n: 20.0,
        }
    }
}

impl BandRig {
    /// Rest spacing of the two sewn markers, cm.
    pub fn rest_marker_spacing_cm(&self) -> f64 {
        (self.knee_marker_m - self.wrist_marker_m) * 100.0
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.knee_marker_m > self.wrist_marker_m && self.wrist_marker_m >= 0.0) {
            return Err("knee-side marker must sit further from the wrist than the wrist-side marker".into());
        }
        if !(self.routing_m >= 0.0 && self.strap_below_knee_m >= 0.0 && self.transverse_force_n > 0.0) {
            return Err("band routing lengths and target force must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmPose {
    /// Arms straight up in world coordinates (overhead squat).
    Overhead,
    /// Sagittal elevation from the torso's forward axis, degrees; positive raises.
    Elevation(f64),
    /// Coronal abduction from hanging, degrees.
    Abduction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stance {
    Parallel,
    /// Split stance, left foot forward by this much and right foot back.
    Split(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseCommand {
    pub knee_deg: f64,
    pub lean_deg: f64,
    /// Pelvic tilt; positive raises the left hip.
    pub obliquity_deg: f64,
    /// Trunk side bend; positive bends toward the right.
    pub roll_deg: f64,
    pub yaw_deg: f64,
    pub arms: ArmPose,
    pub stance: Stance,
}

impl PoseCommand {
    pub fn standing(arms: ArmPose) -> Self {
        Self {
            knee_deg: 0.0,
            lean_deg: 0.0,
            obliquity_deg: 0.0,
            roll_deg: 0.0,
            yaw_deg: 0.0,
            arms,
            stance: Stance::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbPoints {
    pub ankle: Vec3,
    pub knee: Vec3,
    pub hip: Vec3,
    pub shoulder: Vec3,
    pub elbow: Vec3,
    pub wrist: Vec3,
    pub side_marker: Vec3,
    pub anchor: Vec3,
    pub knee_strap: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub pelvis: Vec3,
    pub left: LimbPoints,
    pub right: LimbPoints,
    pub c4: Vec3,
    pub sternum: Vec3,
}

impl Pose {
    pub fn limb(&self, side: Side) -> &LimbPoints {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Band path length: knee strap to hip, frame routing, anchor to wrist.
    pub fn band_path_m(&self, side: Side, rig: &BandRig) -> f64 {
        let l = self.limb(side);
        (l.knee_strap - l.hip).norm() + rig.routing_m + (l.wrist - l.anchor).norm()
    }
}

/// Places the knee of a two-link leg with the knee bending forward (+x).
fn solve_knee(ankle: Vec3, hip: Vec3, shank: f64, thigh: f64) -> Vec3 {
    let span = hip - ankle;
    let d = span.norm();
    let e1 = span / d;
    let fwd = Vec3::x();
    let e2 = (fwd - e1 * fwd.dot(&e1)).normalize();
    let cb = ((shank * shank + d * d - thigh * thigh) / (2.0 * shank * d)).clamp(-1.0, 1.0);
    let sb = (1.0 - cb * cb).max(0.0).sqrt();
    ankle + (e1 * cb + e2 * sb) * shank
}

pub fn pose(a: &Anthropometry, rig: &BandRig, cmd: &PoseCommand) -> Pose {
    let th = cmd.knee_deg.to_radians();
    let half_w = a.hip_width_m / 2.0;
    let (mut centre, ankle_l, ankle_r) = match cmd.stance {
        Stance::Parallel => {
            let (sa, ta) = (0.4 * th, 0.6 * th);
            let hx = a.shank_m * sa.sin() - a.thigh_m * ta.sin();
            let hz = a.ankle_height_m + a.shank_m * sa.cos() + a.thigh_m * ta.cos();
            (
                Vec3::new(hx, 0.0, hz),
                Vec3::new(0.0, half_w, a.ankle_height_m),
                Vec3::new(0.0, -half_w, a.ankle_height_m),
            )
        }
        Stance::Split(offset) => {
            let d2 = a.shank_m.powi(2) + a.thigh_m.powi(2) + 2.0 * a.shank_m * a.thigh_m * th.cos();
            let hz = a.ankle_height_m + (d2 - offset * offset).max(0.0).sqrt();
            (
                Vec3::new(0.0, 0.0, hz),
                Vec3::new(offset, half_w, a.ankle_height_m),
                Vec3::new(-offset, -half_w, a.ankle_height_m),
            )
        }
    };

    // Tilt the pelvis about the hip that rises, so the other hip drops and
    // both legs stay within reach.
    let phi = cmd.obliquity_deg.to_radians();
    let nominal_l = centre + Vec3::new(0.0, half_w, 0.0);
    let nominal_r = centre - Vec3::new(0.0, half_w, 0.0);
    let tilt = Rotation3::from_axis_angle(&Vec3::x_axis(), phi);
    let (hip_l, hip_r) = if phi >= 0.0 {
        (nominal_l, nominal_l + tilt * (nominal_r - nominal_l))
    } else {
        (nominal_r + tilt * (nominal_l - nominal_r), nominal_r)
    };
    centre = (hip_l + hip_r) / 2.0;

    let knee_l = solve_knee(ankle_l, hip_l, a.shank_m, a.thigh_m);
    let knee_r = solve_knee(ankle_r, hip_r, a.shank_m, a.thigh_m);

    let torso = Rotation3::from_axis_angle(&Vec3::z_axis(), cmd.yaw_deg.to_radians())
        * Rotation3::from_axis_angle(&Vec3::x_axis(), cmd.roll_deg.to_radians())
        * Rotation3::from_axis_angle(&Vec3::y_axis(), cmd.lean_deg.to_radians());
    let up = torso * Vec3::z();
    let fwd = torso * Vec3::x();
    let lat = torso * Vec3::y();

    let limb = |side: Side, ankle: Vec3, knee: Vec3, hip: Vec3| -> LimbPoints {
        let sg = match side {
            Side::Left => 1.0,
            Side::Right => -1.0,
        };
        let shoulder = centre + up * a.torso_m + lat * (sg * a.shoulder_width_m / 2.0);
        let anchor = shoulder - up * rig.anchor_drop_m - lat * (sg * rig.anchor_medial_m);
        let dir = match cmd.arms {
            ArmPose::Overhead => Vec3::z(),
            ArmPose::Elevation(e) => {
                let e = e.to_radians();
                fwd * e.cos() + up * e.sin()
            }
            ArmPose::Abduction(ab) => {
                let ab = ab.to_radians();
                lat * (sg * ab.sin()) - up * ab.cos()
            }
        };
        let shank_dir = (ankle - knee).normalize();
        LimbPoints {
            ankle,
            knee,
            hip,
            shoulder,
            elbow: shoulder + dir * a.upper_arm_m,
            wrist: shoulder + dir * a.arm_m(),
            side_marker: centre + up * 0.25 + lat * (sg * 0.16),
            anchor,
            knee_strap: knee + shank_dir * rig.strap_below_knee_m,
        }
    };

    Pose {
        pelvis: centre,
        left: limb(Side::Left, ankle_l, knee_l, hip_l),
        right: limb(Side::Right, ankle_r, knee_r, hip_r),
        c4: centre + up * 0.58 - fwd * 0.05,
        sternum: centre + up * 0.40 + fwd * 0.08,
    }
}

/// Rest path length that makes the forward-reach pose hit the rig's target force
/// under the given stiffness model parameters.
pub fn rest_path_m(a: &Anthropometry, rig: &BandRig, k_cal: f64, f_i: f64, l_cal: f64) -> f64 {
    let p = pose(a, rig, &PoseCommand::standing(ArmPose::Elevation(0.0)));
    let path = p.band_path_m(Side::Left, rig);
    path / (1.0 + (rig.transverse_force_n - f_i) / (k_cal * l_cal))
}

/// Writes the body markers and both sewn band markers for a pose. `strain`
/// holds the left and right band strain relative to rest.
pub fn marker_frame(p: &Pose, rig: &BandRig, strain: [f64; 2], t: f64, seq: u64) -> MarkerFrame {
    let mut f = MarkerFrame::new(t, seq);
    for (side, eps) in [(Side::Left, strain[0]), (Side::Right, strain[1])] {
        let l = p.limb(side);
        f.set(side.ankle(), l.ankle);
        f.set(side.knee(), l.knee);
        f.set(side.hip(), l.hip);
        f.set(side.side_marker(), l.side_marker);
        f.set(side.shoulder(), l.shoulder);
        f.set(side.elbow(), l.elbow);
        f.set(side.wrist(), l.wrist);
        let u = (l.anchor - l.wrist).normalize();
        f.set(side.band_wrist(), l.wrist + u * (rig.wrist_marker_m * (1.0 + eps)));
        f.set(side.band_knee(), l.wrist + u * (rig.knee_marker_m * (1.0 + eps)));
    }
    f.set(mk::C4_SPINOUS, p.c4);
    f.set(mk::STERNUM, p.sternum);
    f
}
