use alloc::format;

use crate::error::{Error, Result};

/// A temporal interval `[start, end)` measured in feature timesteps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    start: f64,
    end: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::NonFinite(format!("segment [{start}, {end})")));
        }
        if start < 0.0 || end <= start {
            return Err(Error::InvalidInput(format!(
                "segment needs 0 ≤ start < end, got [{start}, {end})"
            )));
        }
        Ok(Self { start, end })
    }

    /// Builds a segment from its centre and length.
    pub fn from_center(loc: f64, len: f64) -> Result<Self> {
        Self::new(loc - len / 2.0, loc + len / 2.0)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Centre.
    pub fn loc(&self) -> f64 {
        (self.start + self.end) / 2.0
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    /// Integer row range `floor(start)..ceil(end)` covering the segment.
    pub fn row_range(&self) -> core::ops::Range<usize> {
        let lo = libm::floor(self.start) as usize;
        let hi = (libm::ceil(self.end) as usize).max(lo + 1);
        lo..hi
    }
}

/// Temporal intersection over union.
pub fn tiou(a: &Segment, b: &Segment) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(a: f64, b: f64) -> Segment {
        Segment::new(a, b).unwrap()
    }

    #[test]
    fn derived_quantities() {
        let s = seg(40.0, 60.0);
        assert_eq!(s.loc(), 50.0);
        assert_eq!(s.len(), 20.0);
        assert_eq!(seg(1.5, 3.2).row_range(), 1..4);
    }

    #[test]
    fn invalid_segments() {
        assert!(Segment::new(5.0, 5.0).is_err());
        assert!(Segment::new(-1.0, 5.0).is_err());
        assert!(Segment::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn tiou_examples() {
        let a = seg(3.0, 9.0);
        assert_eq!(tiou(&a, &a), 1.0);
        assert_eq!(tiou(&seg(0.0, 5.0), &seg(5.0, 8.0)), 0.0);
        assert_eq!(tiou(&seg(0.0, 2.0), &seg(5.0, 8.0)), 0.0);
        assert!((tiou(&seg(0.0, 10.0), &seg(5.0, 15.0)) - 1.0 / 3.0).abs() < 1e-15);
    }
}
