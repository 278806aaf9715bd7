//! Procedural scenes: hard-edged colored shapes on a dark background, each
//! with an exact pixel mask and a caption `a {size} {color} {shape}`.

use std::fmt;

use super::image::{Mask, RgbImage};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const CANVAS: usize = 32;
pub const BACKGROUND: [u8; 3] = [48, 48, 48];
const MAX_PLACEMENT_TRIES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Square,
    Circle,
    Triangle,
    Cross,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Size {
    Small,
    Large,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Square, Shape::Circle, Shape::Triangle, Shape::Cross];

    pub fn word(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
            Shape::Cross => "cross",
        }
    }

    /// Whether pixel `(x, y)` of an `s×s` box belongs to the shape.
    pub fn covers(self, x: usize, y: usize, s: usize) -> bool {
        let (xf, yf, sf) = (x as f64 + 0.5, y as f64 + 0.5, s as f64);
        match self {
            Shape::Square => true,
            Shape::Circle => {
                let (dx, dy) = (xf - sf / 2.0, yf - sf / 2.0);
                dx * dx + dy * dy <= sf * sf / 4.0
            }
            Shape::Triangle => (xf - sf / 2.0).abs() <= (y as f64 + 1.0) / 2.0,
            Shape::Cross => {
                let t = (s + 1) / 3;
                let lo = (s - t) / 2;
                (lo..lo + t).contains(&x) || (lo..lo + t).contains(&y)
            }
        }
    }
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [220, 40, 40],
            Color::Green => [40, 200, 60],
            Color::Blue => [50, 80, 230],
            Color::Yellow => [230, 210, 40],
        }
    }
}

impl Size {
    pub const ALL: [Size; 2] = [Size::Small, Size::Large];

    pub fn word(self) -> &'static str {
        match self {
            Size::Small => "small",
            Size::Large => "large",
        }
    }

    pub fn pixels(self) -> usize {
        match self {
            Size::Small => 8,
            Size::Large => 14,
        }
    }
}

/// Attribute triple identifying an object within a scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectKind {
    pub shape: Shape,
    pub color: Color,
    pub size: Size,
}

impl ObjectKind {
    /// All 32 attribute combinations in a fixed order.
    pub fn all() -> Vec<ObjectKind> {
        let mut out = Vec::with_capacity(32);
        for size in Size::ALL {
            for color in Color::ALL {
                for shape in Shape::ALL {
                    out.push(ObjectKind { shape, color, size });
                }
            }
        }
        out
    }

    pub fn caption(&self) -> String {
        format!(
            "a {} {} {}",
            self.size.word(),
            self.color.word(),
            self.shape.word()
        )
    }

    pub fn parse(caption: &str) -> Result<Self> {
        let words: Vec<&str> = caption.split(' ').collect();
        let find = |w: &str| ObjectKind::all().into_iter().find(|k| k.caption() == w);
        if words.len() != 4 || words[0] != "a" {
            return Err(Error::InvalidInput(format!(
                "malformed caption `{caption}`"
            )));
        }
        find(caption).ok_or_else(|| Error::InvalidInput(format!("malformed caption `{caption}`")))
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.caption())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlacedObject {
    pub kind: ObjectKind,
    pub x: usize,
    pub y: usize,
}

impl PlacedObject {
    fn extent(&self) -> usize {
        self.kind.size.pixels()
    }

    fn overlaps(&self, other: &PlacedObject) -> bool {
        let (a0, a1) = (self.x, self.x + self.extent());
        let (b0, b1) = (other.x, other.x + other.extent());
        let (c0, c1) = (self.y, self.y + self.extent());
        let (d0, d1) = (other.y, other.y + other.extent());
        a0 < b1 && b0 < a1 && c0 < d1 && d0 < c1
    }
}

/// Objects of one scene.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneSpec {
    pub objects: Vec<PlacedObject>,
}

impl SceneSpec {
    /// Draws 1–3 objects with distinct attribute triples and non-overlapping
    /// bounding boxes. Scenes whose placement fails are redrawn.
    pub fn random(rng: &mut Rng) -> SceneSpec {
        let kinds = ObjectKind::all();
        'scene: loop {
            let n = 1 + rng.below(3);
            let chosen = rng.choose_distinct(&kinds, n);
            let mut objects: Vec<PlacedObject> = Vec::with_capacity(n);
            for kind in chosen {
                let span = CANVAS - kind.size.pixels() + 1;
                let placed = (0..MAX_PLACEMENT_TRIES).find_map(|_| {
                    let cand = PlacedObject {
                        kind,
                        x: rng.below(span),
                        y: rng.below(span),
                    };
                    (!objects.iter().any(|o| o.overlaps(&cand))).then_some(cand)
                });
                match placed {
                    Some(p) => objects.push(p),
                    None => continue 'scene,
                }
            }
            return SceneSpec { objects };
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleObject {
    pub caption: String,
    pub mask: Mask,
}

impl SampleObject {
    pub fn kind(&self) -> Result<ObjectKind> {
        ObjectKind::parse(&self.caption)
    }
}

/// One rendered scene.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub image: RgbImage,
    pub objects: Vec<SampleObject>,
}

pub fn render(spec: &SceneSpec, id: String) -> Sample {
    let mut image = RgbImage::filled(CANVAS, CANVAS, BACKGROUND);
    let objects = spec
        .objects
        .iter()
        .map(|o| {
            let s = o.extent();
            let mut mask = Mask::empty(CANVAS, CANVAS);
            for y in 0..s {
                for x in 0..s {
                    if o.kind.shape.covers(x, y, s) {
                        image.set(o.x + x, o.y + y, o.kind.color.rgb());
                        mask.set(o.x + x, o.y + y, true);
                    }
                }
            }
            SampleObject {
                caption: o.kind.caption(),
                mask,
            }
        })
        .collect();
    Sample { id, image, objects }
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:05}")
}

/// Generates `n_samples` scenes; a pure function of `(n_samples, seed)`.
pub fn generate_dataset(n_samples: usize, seed: u64) -> Result<Vec<Sample>> {
    if n_samples < 10 {
        return Err(Error::InvalidInput(format!(
            "dataset needs at least 10 samples, asked for {n_samples}"
        )));
    }
    let mut rng = Rng::new(seed);
    Ok((0..n_samples)
        .map(|i| render(&SceneSpec::random(&mut rng), sample_id(i)))
        .collect())
}
