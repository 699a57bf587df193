//! Synthetic three-arm cohorts with a planted training effect.
//!
//! Each subject carries a habitual pelvic obliquity drawn around
//! `baseline_obliquity_deg`. In the groups named by the planted effect, the
//! per-rep obliquity falls linearly across the 75 training reps by
//! `magnitude_deg` and stays at the improved level afterwards. Trunk roll
//! follows obliquity so the whole posture shifts together.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CaptureSpec, FormSpec, RepCommand, SessionSpec, SimError};
use crate::protocol::{standard_protocol, Group, SegmentLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    /// Obliquity reduction reached by the end of training, degrees.
    pub magnitude_deg: f64,
    pub groups: Vec<Group>,
}

impl Default for PlantedEffect {
    fn default() -> Self {
        Self {
            magnitude_deg: 5.0,
            groups: vec![Group::Visual, Group::Resistance],
        }
    }
}

impl PlantedEffect {
    pub fn none() -> Self {
        Self {
            magnitude_deg: 0.0,
            groups: Vec::new(),
        }
    }

    fn applies_to(&self, group: Group) -> bool {
        self.groups.contains(&group)
    }
}

fn default_n() -> usize {
    12
}
fn default_rate() -> f64 {
    60.0
}
fn default_baseline() -> f64 {
    6.0
}
fn default_one() -> f64 {
    1.0
}
fn default_depth_sd() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    #[serde(default = "default_n")]
    pub n_per_group: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rate")]
    pub capture_rate_hz: f64,
    #[serde(default)]
    pub noise_std_m: f64,
    #[serde(default = "default_baseline")]
    pub baseline_obliquity_deg: f64,
    /// Spread of the habitual obliquity between subjects.
    #[serde(default = "default_one")]
    pub subject_sd_deg: f64,
    /// Rep-to-rep obliquity noise.
    #[serde(default = "default_one")]
    pub rep_noise_deg: f64,
    #[serde(default = "default_depth_sd")]
    pub depth_sd_deg: f64,
    #[serde(default = "default_one")]
    pub lean_sd_deg: f64,
    #[serde(default = "default_one")]
    pub trunk_roll_per_obliquity: f64,
    #[serde(default)]
    pub effect: PlantedEffect,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_per_group: default_n(),
            seed: 0,
            capture_rate_hz: default_rate(),
            noise_std_m: 0.0,
            baseline_obliquity_deg: default_baseline(),
            subject_sd_deg: 1.0,
            rep_noise_deg: 1.0,
            depth_sd_deg: default_depth_sd(),
            lean_sd_deg: 1.0,
            trunk_roll_per_obliquity: 1.0,
            effect: PlantedEffect::default(),
        }
    }
}

/// One generated subject: the session settings and every rep's command.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSubject {
    pub spec: SessionSpec,
    pub plan: Vec<Vec<RepCommand>>,
}

impl CohortSubject {
    pub fn synthesize(&self) -> Result<super::Synthesis, SimError> {
        super::synthesize_session_with(&self.spec, &self.plan)
    }
}

fn normal(sd: f64) -> Result<Normal<f64>, SimError> {
    Normal::new(0.0, sd).map_err(|_| SimError::InvalidSpec(format!("standard deviation {sd} is invalid")))
}

impl CohortSpec {
    pub fn subject_count(&self) -> usize {
        self.n_per_group * Group::ALL.len()
    }

    /// Subject `index` in 0..subject_count; groups are laid out in `Group::ALL`
    /// order. Each subject draws from its own stream, so generation order
    /// does not matter.
    pub fn subject(&self, index: usize) -> Result<CohortSubject, SimError> {
        if self.n_per_group == 0 {
            return Err(SimError::InvalidSpec("n_per_group must be at least 1".into()));
        }
        if index >= self.subject_count() {
            return Err(SimError::InvalidSpec(format!("subject {index} outside the cohort")));
        }
        let group = Group::ALL[index / self.n_per_group];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let base_obl = self.baseline_obliquity_deg + normal(self.subject_sd_deg)?.sample(&mut rng);
        let depth = 120.0 + normal(self.depth_sd_deg)?.sample(&mut rng);
        let lean = 33.0 + normal(self.lean_sd_deg)?.sample(&mut rng);
        let rep_noise = normal(self.rep_noise_deg)?;
        let effect = if self.effect.applies_to(group) {
            self.effect.magnitude_deg
        } else {
            0.0
        };

        let segments = standard_protocol();
        let training_reps: usize = segments
            .iter()
            .filter(|s| s.label == SegmentLabel::Training)
            .map(|s| s.planned_sets * s.planned_reps)
            .sum();
        let mut trained = 0usize;
        let mut plan = Vec::new();
        for seg in &segments {
            for _ in 0..seg.planned_sets {
                let mut set = Vec::with_capacity(seg.planned_reps);
                for _ in 0..seg.planned_reps {
                    let progress = match seg.label {
                        SegmentLabel::Baseline => 0.0,
                        SegmentLabel::Training => {
                            let p = trained as f64 / (training_reps.max(2) - 1) as f64;
                            trained += 1;
                            p
                        }
                        SegmentLabel::Post | SegmentLabel::Retention => 1.0,
                    };
                    let obliquity = base_obl - effect * progress + rep_noise.sample(&mut rng);
                    set.push(RepCommand {
                        depth_deg: depth,
                        lean_deg: lean,
                        obliquity_deg: obliquity,
                        roll_deg: self.trunk_roll_per_obliquity * obliquity,
                    });
                }
                plan.push(set);
            }
        }

        let capture = CaptureSpec {
            capture_rate_hz: self.capture_rate_hz,
            noise_std_m: self.noise_std_m,
            seed: rng.random(),
            ..CaptureSpec::default()
        };
        let spec = SessionSpec {
            subject_id: format!("{}-{:02}", group.as_str(), index % self.n_per_group + 1),
            group,
            segments,
            form: FormSpec {
                depth_deg: depth,
                lean_deg: lean,
                ..FormSpec::default()
            },
            capture,
            ..SessionSpec::new("", group)
        };
        Ok(CohortSubject { spec, plan })
    }
}
