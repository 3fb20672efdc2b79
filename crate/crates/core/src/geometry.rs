//! Mask geometry summaries and the stable-history reference statistics.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode::TrackingMode;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, w: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * w, self.y + (other.y - self.y) * w)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// Area, centroid and aspect ratio of a mask. Area zero is the absent
/// observation; centroid and aspect ratio are then meaningless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskGeometry {
    pub area: u64,
    pub centroid: Point,
    pub aspect_ratio: f64,
    pub frame_size: (u32, u32),
}

impl MaskGeometry {
    pub fn absent(frame_size: (u32, u32)) -> Self {
        MaskGeometry {
            area: 0,
            centroid: Point::default(),
            aspect_ratio: 1.0,
            frame_size,
        }
    }

    pub fn is_absent(&self) -> bool {
        self.area == 0
    }
}

/// Row-major boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmask {
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl Bitmask {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "bitmask must be at least 1x1");
        Bitmask {
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        assert!(
            rows.iter().all(|r| r.len() == width),
            "bitmask rows must share one width"
        );
        let mut mask = Bitmask::new(width, height);
        for (y, row) in rows.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                mask.set(x, y, v);
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.cells[y * self.width + x] = v;
    }
}

/// Reduces a bitmask to the geometry features the control layer consumes.
pub fn geometry_summary(mask: &Bitmask) -> MaskGeometry {
    let frame_size = (mask.width as u32, mask.height as u32);
    let mut area = 0u64;
    let (mut sx, mut sy) = (0.0, 0.0);
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                area += 1;
                sx += x as f64;
                sy += y as f64;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if area == 0 {
        return MaskGeometry::absent(frame_size);
    }
    // Inclusive bbox extents are always >= 1 cell, so the ratio is finite.
    let bw = (x1 - x0 + 1) as f64;
    let bh = (y1 - y0 + 1) as f64;
    MaskGeometry {
        area,
        centroid: Point::new(sx / area as f64, sy / area as f64),
        aspect_ratio: bw / bh,
        frame_size,
    }
}

/// Median area and aspect ratio over a bounded window of stable frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    capacity: usize,
    history: VecDeque<(u64, f64)>,
    median_area: f64,
    median_aspect: f64,
}

impl ReferenceStats {
    /// Seeds the window with the first-frame geometry.
    pub fn new(first: &MaskGeometry, capacity: usize) -> Result<Self> {
        if first.is_absent() {
            return Err(Error::Contract(
                "reference statistics need a visible first frame".into(),
            ));
        }
        let mut stats = ReferenceStats {
            capacity: capacity.max(1),
            history: VecDeque::with_capacity(capacity),
            median_area: 0.0,
            median_aspect: 0.0,
        };
        stats.push(first.area, first.aspect_ratio);
        Ok(stats)
    }

    pub fn median_area(&self) -> f64 {
        self.median_area
    }

    pub fn median_aspect(&self) -> f64 {
        self.median_aspect
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = &(u64, f64)> {
        self.history.iter()
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Appends the geometry when the frame is stable; other modes leave the
    /// window untouched.
    pub fn update(&mut self, geometry: &MaskGeometry, mode: TrackingMode) -> Result<()> {
        if geometry.is_absent() {
            return Err(Error::Contract(
                "absent geometry cannot update reference statistics".into(),
            ));
        }
        if mode == TrackingMode::Stable {
            self.push(geometry.area, geometry.aspect_ratio);
        }
        Ok(())
    }

    fn push(&mut self, area: u64, aspect: f64) {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back((area, aspect));
        self.median_area = median(self.history.iter().map(|&(a, _)| a as f64));
        self.median_aspect = median(self.history.iter().map(|&(_, r)| r));
    }
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// True when the reference area is below `fraction` of the frame area.
pub fn small_object_flag(stats: &ReferenceStats, frame_size: (u32, u32), fraction: f64) -> bool {
    let frame_area = frame_size.0 as f64 * frame_size.1 as f64;
    stats.median_area() < fraction * frame_area
}
