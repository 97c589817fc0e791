//! Synthetic sources for smoke tests and the small-scale separation problem.

use rand::seq::index::sample;
use rand::Rng;

use crate::data::{SourceImage, SourceLabel};
use crate::image::{Image, Shape};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// One or two full-width rows at intensity 1.
    HorizontalBars,
    /// One or two full-height columns at intensity 1.
    VerticalBars,
    /// One to three 2x2 squares at intensity 1.
    Dots,
}

impl Pattern {
    fn tag(self) -> &'static str {
        match self {
            Pattern::HorizontalBars => "hbars",
            Pattern::VerticalBars => "vbars",
            Pattern::Dots => "dots",
        }
    }
}

pub fn render<T: Scalar, R: Rng>(pattern: Pattern, side: usize, rng: &mut R) -> Image<T> {
    let shape = Shape::new(side, side, 1);
    let mut img = Image::zeros(shape);
    match pattern {
        Pattern::HorizontalBars | Pattern::VerticalBars => {
            let n = rng.random_range(1..=2);
            for line in sample(rng, side, n) {
                for k in 0..side {
                    let (r, c) = if pattern == Pattern::HorizontalBars {
                        (line, k)
                    } else {
                        (k, line)
                    };
                    img.set(r, c, 0, T::one());
                }
            }
        }
        Pattern::Dots => {
            let n = rng.random_range(1..=3);
            for _ in 0..n {
                let r = rng.random_range(0..side - 1);
                let c = rng.random_range(0..side - 1);
                for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    img.set(r + dr, c + dc, 0, T::one());
                }
            }
        }
    }
    img
}

/// `count` images of `pattern`, tagged with `label` and ids
/// `"{pattern}-{split}-{i}"`.
pub fn sources<T: Scalar, R: Rng>(
    pattern: Pattern,
    label: SourceLabel,
    side: usize,
    count: usize,
    split: &str,
    rng: &mut R,
) -> Vec<SourceImage<T>> {
    (0..count)
        .map(|i| SourceImage {
            pixels: render(pattern, side, rng),
            label,
            origin_id: format!("{}-{split}-{i}", pattern.tag()),
        })
        .collect()
}
