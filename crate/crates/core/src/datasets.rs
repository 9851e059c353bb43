//! Seeded synthetic inputs: nested-ellipse outline images, filled squares,
//! and weighted point clouds from anisotropic Gaussian mixtures.
//!
//! Image coordinates follow [`grid_support`](crate::measures::grid_support):
//! pixel `(i, j)` of an `h x w` image sits at `(i / (h - 1), j / (w - 1))`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, StandardNormal};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub radii: (f64, f64),
    /// Rotation in radians.
    pub angle: f64,
}

impl Ellipse {
    /// Approximate distance from `p` to the outline.
    fn outline_distance(&self, p: (f64, f64)) -> f64 {
        let (dx, dy) = (p.0 - self.center.0, p.1 - self.center.1);
        let (s, c) = self.angle.sin_cos();
        let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
        let rho = ((u / self.radii.0).powi(2) + (v / self.radii.1).powi(2)).sqrt();
        (rho - 1.0).abs() * self.radii.0.min(self.radii.1)
    }
}

fn pixel_coord(k: usize, len: usize) -> f64 {
    if len <= 1 {
        0.0
    } else {
        k as f64 / (len - 1) as f64
    }
}

/// Anti-aliased outlines, about one pixel wide, clamped to `[0, 1]`.
pub fn render_outlines(size: usize, shapes: &[Ellipse]) -> Array2<f64> {
    let width = 0.75 / (size.max(2) - 1) as f64;
    Array2::from_shape_fn((size, size), |(i, j)| {
        let p = (pixel_coord(i, size), pixel_coord(j, size));
        let total: f64 = shapes
            .iter()
            .map(|e| (1.0 - e.outline_distance(p) / width).max(0.0))
            .sum();
        total.min(1.0)
    })
}

fn random_nested_pair(rng: &mut ChaCha8Rng) -> [Ellipse; 2] {
    let outer = Ellipse {
        center: (0.5 + rng.random_range(-0.08..0.08), 0.5 + rng.random_range(-0.08..0.08)),
        radii: (rng.random_range(0.22..0.38), rng.random_range(0.22..0.38)),
        angle: rng.random_range(0.0..PI),
    };
    let shrink = rng.random_range(0.35..0.6);
    let inner = Ellipse {
        center: (
            outer.center.0 + rng.random_range(-0.04..0.04),
            outer.center.1 + rng.random_range(-0.04..0.04),
        ),
        radii: (
            outer.radii.0 * shrink,
            outer.radii.1 * shrink * rng.random_range(0.8..1.2),
        ),
        angle: rng.random_range(0.0..PI),
    };
    [outer, inner]
}

/// `count` images of two nested random ellipses on a `size x size` grid.
pub fn nested_ellipse_images(size: usize, count: usize, seed: u64) -> Result<Vec<Array2<f64>>> {
    if size < 4 {
        return Err(Error::InvalidArgument(format!(
            "grid size {size} is too small for outlines"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| render_outlines(size, &random_nested_pair(&mut rng)))
        .collect())
}

/// Filled square with the given center and half-width, in unit coordinates.
pub fn square_image(size: usize, center: (f64, f64), half_width: f64) -> Array2<f64> {
    let eps = 1e-12;
    Array2::from_shape_fn((size, size), |(i, j)| {
        let (x, y) = (pixel_coord(i, size), pixel_coord(j, size));
        let inside = (x - center.0).abs() <= half_width + eps && (y - center.1).abs() <= half_width + eps;
        f64::from(u8::from(inside))
    })
}

/// Mixture of anisotropic 2-D Gaussians with power-law component sizes and
/// Pareto-distributed point masses.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec {
    pub points: usize,
    pub components: usize,
    /// Side of the square holding the component centers.
    pub extent: f64,
    /// Component `j` gets mass proportional to `(j + 1)^-size_exponent`.
    pub size_exponent: f64,
    /// Pareto shape of the per-point masses.
    pub mass_shape: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            points: 200,
            components: 6,
            extent: 10.0,
            size_exponent: 1.0,
            mass_shape: 1.5,
        }
    }
}

pub fn gaussian_mixture(spec: &MixtureSpec, seed: u64) -> Result<DiscreteMeasure> {
    if spec.points == 0 || spec.components == 0 {
        return Err(Error::InvalidArgument("mixture needs points and components".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<([f64; 2], [[f64; 2]; 2])> = (0..spec.components)
        .map(|_| {
            let center = [rng.random_range(0.0..spec.extent), rng.random_range(0.0..spec.extent)];
            let major = rng.random_range(0.03..0.1) * spec.extent;
            let minor = major * rng.random_range(0.15..0.5);
            let (s, c) = rng.random_range(0.0..PI).sin_cos();
            // columns are the scaled principal axes
            (center, [[c * major, -s * minor], [s * major, c * minor]])
        })
        .collect();
    let sizes: Vec<f64> = (0..spec.components)
        .map(|j| ((j + 1) as f64).powf(-spec.size_exponent))
        .collect();
    let pick = WeightedIndex::new(&sizes).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mass = Pareto::new(1.0, spec.mass_shape).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut support = Array2::zeros((2, spec.points));
    let mut weights = Array1::zeros(spec.points);
    for p in 0..spec.points {
        let (center, axes) = &comps[pick.sample(&mut rng)];
        let z: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
        for r in 0..2 {
            support[[r, p]] = center[r] + axes[r][0] * z[0] + axes[r][1] * z[1];
        }
        weights[p] = mass.sample(&mut rng);
    }
    DiscreteMeasure::new(support, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipse_images_are_deterministic_and_nonempty() {
        let a = nested_ellipse_images(20, 3, 5).unwrap();
        let b = nested_ellipse_images(20, 3, 5).unwrap();
        assert_eq!(a, b);
        for img in &a {
            assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(img.iter().filter(|&&v| v > 0.0).count() >= 20);
        }
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn square_is_centered() {
        let img = square_image(21, (0.5, 0.25), 0.1);
        assert_eq!(img.sum(), 25.0);
        assert_eq!(img[[10, 5]], 1.0);
        assert_eq!(img[[10, 8]], 0.0);
    }

    #[test]
    fn mixture_is_seeded() {
        let spec = MixtureSpec::default();
        let a = gaussian_mixture(&spec, 1).unwrap();
        assert_eq!(a, gaussian_mixture(&spec, 1).unwrap());
        assert_ne!(a, gaussian_mixture(&spec, 2).unwrap());
        assert_eq!(a.len(), 200);
        assert!((a.weights().sum() - 1.0).abs() < 1e-12);
    }
}
