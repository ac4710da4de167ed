//! Procedural skeleton sequences for fight and normal actions.
//!
//! Each actor is a stick figure in body-height units (hip centre at the
//! origin, `y` up, `z` toward where the body faces). Joint angles follow
//! per-action sinusoids; the figure is turned by its heading and projected
//! orthographically into the image. Fight actions raise a guard and move the
//! wrists or ankles faster and further than the normal actions.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Label, LabeledSample};
use crate::error::{Error, Result};
use crate::keypoint::{
    bbox_from_skeleton, index, normalize_skeleton, FrameDetections, Keypoint, PersonDetection, Skeleton,
    NUM_KEYPOINTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Walk,
    Stand,
    Hug,
    PushTrolley,
    KickBall,
    Punch,
    Kick,
    Push,
}

impl Action {
    pub const ALL: [Action; 8] = [
        Action::Walk,
        Action::Stand,
        Action::Hug,
        Action::PushTrolley,
        Action::KickBall,
        Action::Punch,
        Action::Kick,
        Action::Push,
    ];
    pub const NORMAL: [Action; 5] = [Action::Walk, Action::Stand, Action::Hug, Action::PushTrolley, Action::KickBall];
    pub const FIGHT: [Action; 3] = [Action::Punch, Action::Kick, Action::Push];

    pub fn label(self) -> Label {
        match self {
            Action::Punch | Action::Kick | Action::Push => Label::Fight,
            _ => Label::Normal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Walk => "walk",
            Action::Stand => "stand",
            Action::Hug => "hug",
            Action::PushTrolley => "push-trolley",
            Action::KickBall => "kick-ball",
            Action::Punch => "punch",
            Action::Kick => "kick",
            Action::Push => "push",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown action {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorSpec {
    pub action: Action,
    /// Hip centre in pixels at frame 0.
    pub start_position: (f64, f64),
    /// Body yaw in radians; `0` faces the camera. Walkers move along it.
    pub heading: f64,
    pub label: Label,
}

impl ActorSpec {
    pub fn new(action: Action, start_position: (f64, f64), heading: f64) -> Self {
        Self { action, start_position, heading, label: action.label() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub duration_frames: u64,
    pub fps: f64,
    pub actors: Vec<ActorSpec>,
    /// Gaussian keypoint jitter in body-height units.
    pub noise_sigma: f64,
    pub seed: u64,
    pub image_width: u32,
    pub image_height: u32,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.duration_frames == 0 {
            return Err(Error::Config("duration must be at least one frame".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be non-negative, got {}", self.noise_sigma)));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        for a in &self.actors {
            if a.label != a.action.label() {
                return Err(Error::Config(format!("action {} cannot carry label {}", a.action, a.label)));
            }
            if !(a.start_position.0.is_finite() && a.start_position.1.is_finite() && a.heading.is_finite()) {
                return Err(Error::Config(format!("non-finite placement for {} actor", a.action)));
            }
        }
        Ok(())
    }

    fn base(seed: u64, duration_frames: u64, actors: Vec<ActorSpec>) -> Self {
        Self {
            duration_frames,
            fps: 30.0,
            actors,
            noise_sigma: 0.004,
            seed,
            image_width: 1280,
            image_height: 720,
        }
    }

    /// A puncher on the left and a walker in place on the right.
    pub fn fight_with_bystander(seed: u64, duration_frames: u64) -> Self {
        Self::base(
            seed,
            duration_frames,
            vec![
                ActorSpec::new(Action::Punch, (380.0, 400.0), 0.7),
                ActorSpec::new(Action::Walk, (900.0, 400.0), 0.0),
            ],
        )
    }

    /// One walker crossing the image at an angle.
    pub fn single_walker(seed: u64, duration_frames: u64) -> Self {
        Self::base(seed, duration_frames, vec![ActorSpec::new(Action::Walk, (300.0, 400.0), 0.8)])
    }

    /// One person walking in place, facing the camera.
    pub fn stationary_walk(seed: u64, duration_frames: u64) -> Self {
        Self::base(seed, duration_frames, vec![ActorSpec::new(Action::Walk, (640.0, 400.0), 0.0)])
    }

    /// Two walkers on parallel paths that never meet.
    pub fn two_walkers(seed: u64, duration_frames: u64) -> Self {
        Self::base(
            seed,
            duration_frames,
            vec![
                ActorSpec::new(Action::Walk, (250.0, 400.0), 0.6),
                ActorSpec::new(Action::Walk, (1030.0, 400.0), -0.6),
            ],
        )
    }

    /// `n` people on a grid cycling through every action.
    pub fn crowd(seed: u64, duration_frames: u64, n: usize) -> Self {
        let cols = n.clamp(1, 5);
        let actors = (0..n)
            .map(|i| {
                let (row, col) = (i / cols, i % cols);
                let x = 180.0 + 380.0 * col as f64;
                let y = 260.0 + 420.0 * row as f64;
                ActorSpec::new(Action::ALL[i % Action::ALL.len()], (x, y), 0.0)
            })
            .collect();
        Self { image_width: 1920, image_height: 260 + 420 * n.div_ceil(cols) as u32, ..Self::base(seed, duration_frames, actors) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStream {
    pub frames: Vec<FrameDetections>,
    /// `ground_truth[f][p]` labels person `p` of frame `f`; persons keep the
    /// order of the scenario's actors.
    pub ground_truth: Vec<Vec<Label>>,
}

#[derive(Debug, Clone, Copy)]
struct Limb {
    swing: f64,
    abduct: f64,
    bend: f64,
}

impl Limb {
    const fn new(swing: f64, abduct: f64, bend: f64) -> Self {
        Self { swing, abduct, bend }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pose {
    lean: f64,
    /// Left, right.
    arms: [Limb; 2],
    legs: [Limb; 2],
}

/// Per-actor randomness: proportions, tempo, amplitude and phase.
#[derive(Debug, Clone, Copy)]
struct Style {
    shoulder_half: f64,
    hip_half: f64,
    upper_arm: f64,
    forearm: f64,
    thigh: f64,
    shin: f64,
    tempo: f64,
    amplitude: f64,
    phase: f64,
    lead: usize,
}

impl Style {
    fn sample<R: Rng>(rng: &mut R) -> Self {
        let mut jitter = |v: f64| v * rng.random_range(0.93..1.07);
        Self {
            shoulder_half: jitter(0.12),
            hip_half: jitter(0.08),
            upper_arm: jitter(0.16),
            forearm: jitter(0.15),
            thigh: jitter(0.24),
            shin: jitter(0.24),
            tempo: rng.random_range(0.85..1.15),
            amplitude: rng.random_range(0.85..1.15),
            phase: rng.random_range(0.0..TAU),
            lead: rng.random_range(0..2),
        }
    }
}

const GUARD: Limb = Limb::new(0.4, 0.25, 2.3);
const STANCE: [Limb; 2] = [Limb::new(0.25, 0.2, 0.25), Limb::new(-0.2, 0.2, 0.2)];

fn pose(action: Action, t: f64, s: &Style) -> Pose {
    let a = s.amplitude;
    let w = |hz: f64| TAU * hz * s.tempo * t + s.phase;
    let pos = |v: f64| v.max(0.0);
    let mut p = match action {
        Action::Stand => Pose {
            lean: 0.0,
            arms: [Limb::new(0.05, 0.08, 0.15); 2],
            legs: [Limb::new(0.0, 0.03, 0.0); 2],
        },
        Action::Walk => {
            let ph = w(0.9);
            let (sw, bend) = (0.35 * a * ph.sin(), 0.35 * a * pos((ph + PI / 2.0).sin()));
            let bend2 = 0.35 * a * pos((ph - PI / 2.0).sin());
            Pose {
                lean: 0.05,
                arms: [Limb::new(sw, 0.08, 0.3), Limb::new(-sw, 0.08, 0.3)],
                legs: [Limb::new(-sw, 0.03, bend), Limb::new(sw, 0.03, bend2)],
            }
        }
        Action::Hug => {
            let sway = 0.05 * w(0.3).sin();
            Pose {
                lean: 0.1,
                arms: [Limb::new(1.0 + sway, -0.5, 1.6); 2],
                legs: [Limb::new(0.0, 0.03, 0.05); 2],
            }
        }
        Action::PushTrolley => {
            let ph = w(0.6);
            let sw = 0.2 * a * ph.sin();
            Pose {
                lean: 0.25,
                arms: [Limb::new(0.9, 0.05, 0.5); 2],
                legs: [Limb::new(-sw, 0.03, 0.2), Limb::new(sw, 0.03, 0.2)],
            }
        }
        Action::KickBall => {
            let e = pos(w(0.5).sin()).powi(2);
            let mut legs = [Limb::new(-0.1, 0.05, 0.1), Limb::new(0.0, 0.05, 0.1)];
            legs[1] = Limb::new(0.6 * a * e - 0.1, 0.05, 0.5 * (1.0 - e));
            Pose {
                lean: -0.05,
                arms: [Limb::new(-0.2, 0.35, 0.2), Limb::new(0.2, 0.35, 0.2)],
                legs,
            }
        }
        Action::Punch => {
            let ph = w(2.5);
            let strike = |e: f64| {
                let e = (a * e).min(1.0);
                Limb::new(GUARD.swing + 1.15 * e, GUARD.abduct, GUARD.bend * (1.0 - e))
            };
            Pose { lean: 0.15, arms: [strike(pos(ph.sin())), strike(pos(-ph.sin()))], legs: STANCE }
        }
        Action::Kick => {
            let e = pos(w(1.2).sin());
            let mut legs = STANCE;
            legs[1] = Limb::new(1.4 * a * e, 0.05, 2.4 * e * (1.0 - e));
            Pose { lean: -0.15, arms: [GUARD; 2], legs }
        }
        Action::Push => {
            let e = 0.5 + 0.5 * w(1.6).sin();
            let arm = Limb::new(1.6, 0.35, 1.8 * (1.0 - e));
            let lunge = [Limb::new(0.45, 0.2, 0.45), Limb::new(-0.35, 0.2, 0.1)];
            Pose { lean: 0.2 + 0.15 * a * e, arms: [arm; 2], legs: lunge }
        }
    };
    if s.lead == 1 {
        p.arms.swap(0, 1);
        p.legs.swap(0, 1);
    }
    p
}

type Vec3 = [f64; 3];

fn add(a: Vec3, b: Vec3, k: f64) -> Vec3 {
    [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2]]
}

/// Unit direction of a segment hanging from a joint; `side` is +1 left, −1 right.
fn direction(swing: f64, abduct: f64, side: f64) -> Vec3 {
    [side * abduct.sin(), -swing.cos() * abduct.cos(), swing.sin() * abduct.cos()]
}

/// Keypoints in body coordinates, COCO order.
fn body_points(p: &Pose, s: &Style) -> [Vec3; NUM_KEYPOINTS] {
    let mut pts = [[0.0; 3]; NUM_KEYPOINTS];
    pts[index::NOSE] = [0.0, 0.45, 0.05];
    pts[index::LEFT_EYE] = [0.03, 0.47, 0.035];
    pts[index::RIGHT_EYE] = [-0.03, 0.47, 0.035];
    pts[index::LEFT_EAR] = [0.065, 0.46, -0.01];
    pts[index::RIGHT_EAR] = [-0.065, 0.46, -0.01];
    for (k, side) in [(0usize, 1.0), (1, -1.0)] {
        let shoulder = [side * s.shoulder_half, 0.33, 0.0];
        let arm = p.arms[k];
        let elbow = add(shoulder, direction(arm.swing, arm.abduct, side), s.upper_arm);
        let wrist = add(elbow, direction(arm.swing + arm.bend, arm.abduct, side), s.forearm);
        let (si, ei, wi) = if k == 0 {
            (index::LEFT_SHOULDER, index::LEFT_ELBOW, index::LEFT_WRIST)
        } else {
            (index::RIGHT_SHOULDER, index::RIGHT_ELBOW, index::RIGHT_WRIST)
        };
        pts[si] = shoulder;
        pts[ei] = elbow;
        pts[wi] = wrist;
    }
    // Lean the upper body forward about the hips.
    let (sl, cl) = p.lean.sin_cos();
    for pt in pts.iter_mut().take(index::LEFT_HIP) {
        let [x, y, z] = *pt;
        *pt = [x, y * cl - z * sl, y * sl + z * cl];
    }
    for (k, side) in [(0usize, 1.0), (1, -1.0)] {
        let hip = [side * s.hip_half, 0.0, 0.0];
        let leg = p.legs[k];
        let knee = add(hip, direction(leg.swing, leg.abduct, side), s.thigh);
        let ankle = add(knee, direction(leg.swing - leg.bend, leg.abduct, side), s.shin);
        let (hi, ki, ai) = if k == 0 {
            (index::LEFT_HIP, index::LEFT_KNEE, index::LEFT_ANKLE)
        } else {
            (index::RIGHT_HIP, index::RIGHT_KNEE, index::RIGHT_ANKLE)
        };
        pts[hi] = hip;
        pts[ki] = knee;
        pts[ai] = ankle;
    }
    pts
}

/// Walking speed in body heights per second.
const WALK_SPEED: f64 = 0.6;

#[derive(Debug, Clone, Copy)]
struct Placement {
    origin: (f64, f64),
    heading: f64,
    /// Pixels per body height.
    scale: f64,
}

fn project<R: Rng>(
    pts: &[Vec3; NUM_KEYPOINTS],
    at: &Placement,
    noise: Option<&Normal<f64>>,
    rng: &mut R,
) -> Result<Skeleton> {
    let (sy, cy) = at.heading.sin_cos();
    let keypoints = pts
        .iter()
        .map(|&[x, y, z]| {
            let (mut u, mut v) = (x * cy + z * sy, y);
            if let Some(n) = noise {
                u += n.sample(rng);
                v += n.sample(rng);
            }
            let confidence = rng.random_range(0.75..1.0);
            Keypoint::new(at.origin.0 + at.scale * u, at.origin.1 - at.scale * v, confidence)
        })
        .collect();
    Skeleton::new(keypoints)
}

fn noise_dist(sigma: f64) -> Result<Option<Normal<f64>>> {
    if sigma == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, sigma).map(Some).map_err(|e| Error::Config(format!("noise: {e}")))
}

/// Generates every frame of a scenario.
pub fn generate_sequence(spec: &ScenarioSpec) -> Result<SyntheticStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = noise_dist(spec.noise_sigma)?;
    let actors: Vec<(Style, f64)> = spec
        .actors
        .iter()
        .map(|_| (Style::sample(&mut rng), rng.random_range(180.0..220.0)))
        .collect();
    let ground: Vec<Label> = spec.actors.iter().map(|a| a.label).collect();

    let mut frames = Vec::with_capacity(spec.duration_frames as usize);
    for f in 0..spec.duration_frames {
        let t = f as f64 / spec.fps;
        let mut persons = Vec::with_capacity(spec.actors.len());
        for (actor, (style, scale)) in spec.actors.iter().zip(&actors) {
            let drift = if actor.action == Action::Walk { WALK_SPEED * scale * t * actor.heading.sin() } else { 0.0 };
            let at = Placement {
                origin: (actor.start_position.0 + drift, actor.start_position.1),
                heading: actor.heading,
                scale: *scale,
            };
            let pts = body_points(&pose(actor.action, t, style), style);
            let skeleton = project(&pts, &at, noise.as_ref(), &mut rng)?;
            let bbox = bbox_from_skeleton(&skeleton, 0.1)?;
            persons.push(PersonDetection { bbox, skeleton, detection_score: rng.random_range(0.85..1.0) });
        }
        frames.push(FrameDetections {
            frame_index: f,
            timestamp_s: t,
            image_width: spec.image_width,
            image_height: spec.image_height,
            persons,
        });
    }
    let ground_truth = vec![ground; frames.len()];
    Ok(SyntheticStream { frames, ground_truth })
}

/// Labelled feature vectors, one per random frame of a random actor. Each
/// class cycles through its actions so they are equally represented.
pub fn generate_dataset(n_normal: usize, n_fight: usize, seed: u64) -> Result<Vec<LabeledSample>> {
    if n_normal == 0 || n_fight == 0 {
        return Err(Error::Config("both class counts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = noise_dist(0.01)?;
    let mut out = Vec::with_capacity(n_normal + n_fight);
    for (actions, n) in [(&Action::NORMAL[..], n_normal), (&Action::FIGHT[..], n_fight)] {
        for i in 0..n {
            let action = actions[i % actions.len()];
            let style = Style::sample(&mut rng);
            let t = rng.random_range(0.0..4.0);
            let at = Placement {
                origin: (rng.random_range(200.0..1000.0), rng.random_range(250.0..450.0)),
                heading: rng.random_range(-1.4..1.4),
                scale: rng.random_range(120.0..320.0),
            };
            let skeleton = project(&body_points(&pose(action, t, &style), &style), &at, noise.as_ref(), &mut rng)?;
            let bbox = bbox_from_skeleton(&skeleton, 0.1)?;
            out.push(LabeledSample {
                features: normalize_skeleton(&skeleton, &bbox)?,
                label: action.label(),
                provenance: format!("synth:{seed}:{action}:{i}"),
            });
        }
    }
    Ok(out)
}
