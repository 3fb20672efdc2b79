use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::stream;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Steady,
    Occlusion,
    Distractor,
    ReappearSmall,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Steady,
        ScenarioKind::Occlusion,
        ScenarioKind::Distractor,
        ScenarioKind::ReappearSmall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Steady => "steady",
            ScenarioKind::Occlusion => "occlusion",
            ScenarioKind::Distractor => "distractor",
            ScenarioKind::ReappearSmall => "reappear-small",
        }
    }

    fn salt(self) -> u64 {
        match self {
            ScenarioKind::Steady => 1,
            ScenarioKind::Occlusion => 2,
            ScenarioKind::Distractor => 3,
            ScenarioKind::ReappearSmall => 4,
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::Scenario(format!(
                "unknown scenario kind `{s}` (expected steady, occlusion, distractor or reappear-small)"
            ))
        })
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub area: f64,
    pub aspect: f64,
}

/// Half-open frame interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn contains(&self, t: usize) -> bool {
        (self.start..self.end).contains(&t)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distractor {
    /// Cosine between the distractor and target appearance archetypes.
    pub similarity: f64,
    pub keyframes: Vec<Keyframe>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    /// Center jitter, pixels.
    pub center_sigma: f64,
    /// Predicted-IoU jitter.
    pub iou_sigma: f64,
    /// Per-component pointer jitter.
    pub pointer_sigma: f64,
    /// Rotation of the target appearance archetype, radians per frame.
    pub appearance_drift: f64,
}

impl Default for Noise {
    fn default() -> Self {
        Noise {
            center_sigma: 1.0,
            iou_sigma: 0.05,
            pointer_sigma: 0.01,
            appearance_drift: 0.003,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ScenarioKind>,
    pub seed: u64,
    pub length: usize,
    pub frame_size: (u32, u32),
    pub pointer_dim: usize,
    pub noise: Noise,
    #[serde(default)]
    pub occlusions: Vec<Interval>,
    pub target: Vec<Keyframe>,
    #[serde(default)]
    pub distractors: Vec<Distractor>,
}

/// Linear interpolation over keyframes, held constant beyond the ends.
pub(crate) fn interpolate(keys: &[Keyframe], t: usize) -> Keyframe {
    let t_f = t as f64;
    let first = keys[0];
    let last = keys[keys.len() - 1];
    if t <= first.frame {
        return Keyframe { frame: t, ..first };
    }
    if t >= last.frame {
        return Keyframe { frame: t, ..last };
    }
    let i = keys.partition_point(|k| k.frame <= t);
    let (a, b) = (keys[i - 1], keys[i]);
    let w = (t_f - a.frame as f64) / (b.frame - a.frame) as f64;
    let lerp = |p: f64, q: f64| p + (q - p) * w;
    Keyframe {
        frame: t,
        x: lerp(a.x, b.x),
        y: lerp(a.y, b.y),
        area: lerp(a.area, b.area),
        aspect: lerp(a.aspect, b.aspect),
    }
}

impl ScenarioScript {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.length == 0 {
            return bad("`length` must be at least 1".into());
        }
        if self.frame_size.0 == 0 || self.frame_size.1 == 0 {
            return bad("`frame_size` must be non-zero".into());
        }
        if self.pointer_dim < 2 {
            return bad("`pointer_dim` must be at least 2".into());
        }
        let n = self.noise;
        for (name, v) in [
            ("noise.center_sigma", n.center_sigma),
            ("noise.iou_sigma", n.iou_sigma),
            ("noise.pointer_sigma", n.pointer_sigma),
            ("noise.appearance_drift", n.appearance_drift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("`{name}` must be a non-negative number"));
            }
        }
        check_keyframes("target", &self.target, self.length)?;
        for (i, d) in self.distractors.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.similarity) {
                return bad(format!("`distractors[{i}].similarity` must lie in [0, 1]"));
            }
            check_keyframes(&format!("distractors[{i}].keyframes"), &d.keyframes, self.length)?;
        }
        for (i, iv) in self.occlusions.iter().enumerate() {
            if iv.is_empty() || iv.end > self.length {
                return bad(format!(
                    "`occlusions[{i}]` = [{}, {}) must be non-empty and lie within [0, {})",
                    iv.start, iv.end, self.length
                ));
            }
        }
        if self.occlusions.iter().any(|iv| iv.contains(0)) {
            return bad("the target must be visible at frame 0".into());
        }
        Ok(())
    }

    pub fn is_occluded(&self, t: usize) -> bool {
        self.occlusions.iter().any(|iv| iv.contains(t))
    }

    pub fn target_at(&self, t: usize) -> Keyframe {
        interpolate(&self.target, t)
    }

    pub fn distractor_at(&self, k: usize, t: usize) -> Keyframe {
        interpolate(&self.distractors[k].keyframes, t)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario always serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let script: ScenarioScript = toml::from_str(text).map_err(|e| Error::Parse {
            what: "scenario",
            message: e.to_string(),
        })?;
        script.validate()?;
        Ok(script)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { what, message } => Error::Parse {
                what,
                message: format!("{}: {message}", path.display()),
            },
            Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn check_keyframes(name: &str, keys: &[Keyframe], length: usize) -> Result<()> {
    if keys.is_empty() {
        return Err(Error::Scenario(format!("`{name}` needs at least one keyframe")));
    }
    for (i, k) in keys.iter().enumerate() {
        if k.frame >= length {
            return Err(Error::Scenario(format!(
                "`{name}[{i}].frame` = {} is beyond length {length}",
                k.frame
            )));
        }
        if !(k.area > 0.0 && k.aspect > 0.0 && k.x.is_finite() && k.y.is_finite()) {
            return Err(Error::Scenario(format!(
                "`{name}[{i}]` needs positive area and aspect and a finite position"
            )));
        }
        if i > 0 && keys[i - 1].frame >= k.frame {
            return Err(Error::Scenario(format!(
                "`{name}` keyframes must have strictly increasing frames"
            )));
        }
    }
    Ok(())
}

const FRAME: (u32, u32) = (640, 480);
const POINTER_DIM: usize = 64;

fn clamp_into(p: Point, margin: f64) -> Point {
    Point::new(
        p.x.clamp(margin, FRAME.0 as f64 - margin),
        p.y.clamp(margin, FRAME.1 as f64 - margin),
    )
}

fn key(frame: usize, p: Point, area: f64, aspect: f64) -> Keyframe {
    Keyframe {
        frame,
        x: p.x,
        y: p.y,
        area,
        aspect,
    }
}

/// Straight path between two points inside the frame.
fn straight_target(rng: &mut impl Rng, length: usize, area: f64, max_speed: f64) -> Vec<Keyframe> {
    let start = Point::new(rng.random_range(120.0..520.0), rng.random_range(120.0..360.0));
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let speed = rng.random_range(0.5 * max_speed..max_speed);
    let span = (length - 1) as f64;
    let end = clamp_into(start + Point::new(angle.cos(), angle.sin()) * (speed * span), 60.0);
    let aspect = rng.random_range(0.7..1.4);
    vec![
        key(0, start, area, aspect),
        key(length - 1, end, area * rng.random_range(0.9..1.1), aspect),
    ]
}

/// Builds a scenario of the requested kind. Event timing is tied to the
/// config: occlusions are shorter than `l_miss`, reappearance gaps at least
/// `l_miss + 5`, and small targets sit below the small-object threshold.
pub fn generate(kind: ScenarioKind, seed: u64, cfg: &Config) -> ScenarioScript {
    let mut rng = stream(seed, &[kind.salt()]);
    let mut script = ScenarioScript {
        kind: Some(kind),
        seed,
        length: 120,
        frame_size: FRAME,
        pointer_dim: POINTER_DIM,
        noise: Noise::default(),
        occlusions: Vec::new(),
        target: Vec::new(),
        distractors: Vec::new(),
    };
    let l_miss = cfg.l_miss as usize;
    match kind {
        ScenarioKind::Steady => {
            let area = rng.random_range(3000.0..6000.0);
            script.target = straight_target(&mut rng, script.length, area, 2.5);
        }
        ScenarioKind::Occlusion => {
            let area = rng.random_range(3000.0..6000.0);
            script.target = straight_target(&mut rng, script.length, area, 2.5);
            let start = rng.random_range(30..60);
            let len = rng.random_range(4.min(l_miss.max(2) - 1)..l_miss.max(2));
            script.occlusions.push(Interval {
                start,
                end: start + len.max(1),
            });
        }
        ScenarioKind::Distractor => {
            let n = script.length;
            let area = rng.random_range(3000.0..6000.0);
            let aspect = rng.random_range(0.8..1.25);
            let y0 = rng.random_range(150.0..330.0);
            let start = Point::new(rng.random_range(100.0..140.0), y0);
            let end = Point::new(rng.random_range(460.0..540.0), y0 + rng.random_range(-60.0..60.0));
            script.target = vec![key(0, start, area, aspect), key(n - 1, end, area, aspect)];

            let crossing = rng.random_range(45..75);
            let meet = script.target_at(crossing);
            let side = area.sqrt();
            let meet = Point::new(meet.x, meet.y) + Point::new(0.0, rng.random_range(-0.3..0.3) * side);
            let velocity = Point::new(-rng.random_range(1.5..3.0), rng.random_range(-1.0..1.0));
            let d_start = clamp_into(meet + velocity * -(crossing as f64), 40.0);
            let d_end = clamp_into(meet + velocity * ((n - 1 - crossing) as f64), 40.0);
            let d_area = area * rng.random_range(1.2..1.5);
            let d_aspect = aspect * rng.random_range(0.8..1.25);
            script.distractors.push(Distractor {
                similarity: rng.random_range(0.8..0.9),
                keyframes: vec![
                    key(0, d_start, d_area, d_aspect),
                    key(crossing, meet, d_area, d_aspect),
                    key(n - 1, d_end, d_area, d_aspect),
                ],
            });
        }
        ScenarioKind::ReappearSmall => {
            script.length = 90;
            let n = script.length;
            let threshold = cfg.small_area_fraction * FRAME.0 as f64 * FRAME.1 as f64;
            let area = rng.random_range(0.3..0.7) * threshold;
            let aspect = rng.random_range(0.8..1.25);
            let speed = rng.random_range(4.0..5.0);
            let start = Point::new(rng.random_range(50.0..90.0), rng.random_range(100.0..380.0));
            let end = start + Point::new(speed, rng.random_range(-0.5..0.5)) * (n - 1) as f64;
            script.target = vec![key(0, start, area, aspect), key(n - 1, end, area, aspect)];
            let start = rng.random_range(25..35);
            let len = rng.random_range(l_miss + 5..=l_miss + 10);
            script.occlusions.push(Interval {
                start,
                end: (start + len).min(n - 1),
            });
            script.noise.center_sigma = 0.8;
            script.noise.pointer_sigma = 0.015;
        }
    }
    script
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = Config::default();
        for kind in ScenarioKind::ALL {
            let a = generate(kind, 7, &cfg).to_toml_string();
            let b = generate(kind, 7, &cfg).to_toml_string();
            assert_eq!(a, b);
            assert_ne!(a, generate(kind, 8, &cfg).to_toml_string());
        }
    }

    #[test]
    fn generated_scripts_validate() {
        let cfg = Config::default();
        for kind in ScenarioKind::ALL {
            for seed in 0..50 {
                generate(kind, seed, &cfg).validate().unwrap();
            }
        }
    }

    #[test]
    fn kind_contracts() {
        let cfg = Config::default();
        for seed in 0..100 {
            let s = generate(ScenarioKind::Steady, seed, &cfg);
            assert!(s.occlusions.is_empty() && s.distractors.is_empty());

            let s = generate(ScenarioKind::Occlusion, seed, &cfg);
            assert_eq!(s.occlusions.len(), 1);
            assert!(s.occlusions[0].len() < cfg.l_miss as usize);

            let s = generate(ScenarioKind::Distractor, seed, &cfg);
            assert_eq!(s.distractors.len(), 1);
            assert!(s.distractors[0].similarity >= 0.8);

            let s = generate(ScenarioKind::ReappearSmall, seed, &cfg);
            assert_eq!(s.occlusions.len(), 1);
            assert!(s.occlusions[0].len() >= 15);
            let threshold = cfg.small_area_fraction * 640.0 * 480.0;
            assert!(s.target.iter().all(|k| k.area < threshold));
        }
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!("crowded".parse::<ScenarioKind>().is_err());
        assert_eq!(
            "reappear-small".parse::<ScenarioKind>().unwrap(),
            ScenarioKind::ReappearSmall
        );
    }

    #[test]
    fn interpolation() {
        let keys = vec![
            key(0, Point::new(0.0, 0.0), 100.0, 1.0),
            key(10, Point::new(10.0, 20.0), 200.0, 2.0),
        ];
        let k = interpolate(&keys, 5);
        assert_eq!((k.x, k.y, k.area, k.aspect), (5.0, 10.0, 150.0, 1.5));
        assert_eq!(interpolate(&keys, 30).x, 10.0);
    }

    #[test]
    fn round_trip() {
        let cfg = Config::default();
        for kind in ScenarioKind::ALL {
            let s = generate(kind, 3, &cfg);
            assert_eq!(ScenarioScript::from_toml_str(&s.to_toml_string()).unwrap(), s);
        }
    }

    #[test]
    fn missing_length_is_named() {
        let s = generate(ScenarioKind::Steady, 1, &Config::default()).to_toml_string();
        let without: String = s
            .lines()
            .filter(|l| !l.starts_with("length"))
            .collect::<Vec<_>>()
            .join("\n");
        let err = ScenarioScript::from_toml_str(&without).unwrap_err();
        assert!(err.to_string().contains("length"), "{err}");
    }

    #[test]
    fn interval_beyond_length_rejected() {
        let mut s = generate(ScenarioKind::Occlusion, 1, &Config::default());
        s.occlusions[0].end = s.length + 3;
        let err = ScenarioScript::from_toml_str(&s.to_toml_string()).unwrap_err();
        assert!(err.to_string().contains("occlusions[0]"), "{err}");
    }

    #[test]
    fn malformed_file_reports_position() {
        let err = ScenarioScript::from_toml_str("seed = 1\nlength = \n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
