use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Mutex;

use image::{Rgb, RgbImage};
use imageproc::geometric_transformations::{rotate_about_center, Interpolation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{rotate_point, MeshRecord, Reconstructor, RotatableCrop};
use crate::data_model::{HandSide, Point};

impl RotatableCrop for RgbImage {
    fn size(&self) -> (f64, f64) {
        (self.width() as f64, self.height() as f64)
    }

    fn pad_square(&self) -> Self {
        let (w, h) = self.dimensions();
        let s = w.max(h);
        let mut out = RgbImage::new(s, s);
        image::imageops::replace(&mut out, self, ((s - w) / 2) as i64, ((s - h) / 2) as i64);
        out
    }

    fn rotated(&self, deg: f64) -> Self {
        rotate_about_center(
            self,
            deg.to_radians() as f32,
            Interpolation::Bilinear,
            Rgb([0, 0, 0]),
        )
    }
}

/// Synthetic crop: a canvas with known joint positions and a pose vector.
/// Rotation moves the joints exactly, so reconstructors that read them back
/// are exactly equivariant.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointCrop {
    pub width: f64,
    pub height: f64,
    pub joints: Vec<Point>,
    pub theta: Vec<f64>,
    /// Extra joint noise (fraction of crop side) applied by [`NoisyStub`].
    pub sigma: f64,
    pub id: u64,
    /// Total rotation applied so far, in degrees.
    pub angle: f64,
}

impl KeypointCrop {
    pub fn new(width: f64, height: f64, joints: Vec<Point>, id: u64) -> Self {
        Self {
            width,
            height,
            joints,
            theta: Vec::new(),
            sigma: 0.0,
            id,
            angle: 0.0,
        }
    }
}

impl RotatableCrop for KeypointCrop {
    fn size(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    fn pad_square(&self) -> Self {
        let s = self.width.max(self.height);
        let (dx, dy) = ((s - self.width) / 2.0, (s - self.height) / 2.0);
        Self {
            width: s,
            height: s,
            joints: self.joints.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect(),
            ..self.clone()
        }
    }

    fn rotated(&self, deg: f64) -> Self {
        let c = Point::new(self.width / 2.0, self.height / 2.0);
        Self {
            joints: self.joints.iter().map(|&p| rotate_point(p, c, deg)).collect(),
            angle: self.angle + deg,
            ..self.clone()
        }
    }
}

fn joints_of(crop: &KeypointCrop) -> Vec<[f64; 2]> {
    crop.joints.iter().map(|p| [p.x, p.y]).collect()
}

/// Returns the crop's joints and pose unchanged.
#[derive(Debug, Clone, Default)]
pub struct EquivariantStub;

impl Reconstructor<KeypointCrop> for EquivariantStub {
    fn reconstruct(&self, crop: &KeypointCrop, side: HandSide) -> Result<MeshRecord, String> {
        Ok(MeshRecord {
            theta: crop.theta.clone(),
            beta: None,
            joints_2d: joints_of(crop),
            side,
        })
    }
}

/// Adds Gaussian joint noise with standard deviation
/// `(sigma + crop.sigma) * crop side`. Noise is seeded from the stub seed,
/// the crop id and its rotation, so repeated calls agree.
#[derive(Debug, Clone)]
pub struct NoisyStub {
    pub sigma: f64,
    pub seed: u64,
}

impl Reconstructor<KeypointCrop> for NoisyStub {
    fn reconstruct(&self, crop: &KeypointCrop, side: HandSide) -> Result<MeshRecord, String> {
        let mut h = DefaultHasher::new();
        (self.seed, crop.id, crop.angle.to_bits()).hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let std = (self.sigma + crop.sigma) * crop.width.max(crop.height);
        let normal = Normal::new(0.0, std.max(0.0)).map_err(|e| e.to_string())?;
        let joints_2d = crop
            .joints
            .iter()
            .map(|p| [p.x + normal.sample(&mut rng), p.y + normal.sample(&mut rng)])
            .collect();
        Ok(MeshRecord {
            theta: crop.theta.clone(),
            beta: None,
            joints_2d,
            side,
        })
    }
}

/// Makes a reconstructor that is not safe to share callable from many
/// threads by running one call at a time.
#[derive(Debug, Default)]
pub struct Serialized<R>(Mutex<R>);

impl<R> Serialized<R> {
    pub fn new(inner: R) -> Self {
        Self(Mutex::new(inner))
    }
}

impl<C, R: Reconstructor<C>> Reconstructor<C> for Serialized<R> {
    fn reconstruct(&self, crop: &C, side: HandSide) -> Result<MeshRecord, String> {
        let guard = self.0.lock().map_err(|_| "reconstructor lock poisoned".to_string())?;
        guard.reconstruct(crop, side)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_quality::{consistency_score, score_crops, DEFAULT_ANGLES};
    use std::cell::Cell;

    fn hand_crop(id: u64) -> KeypointCrop {
        let joints = (0..21)
            .map(|i| Point::new(20.0 + (i % 5) as f64 * 6.0, 10.0 + (i / 5) as f64 * 7.0))
            .collect();
        KeypointCrop::new(80.0, 60.0, joints, id)
    }

    #[test]
    fn equivariant_stub_scores_zero() {
        let s = consistency_score(&hand_crop(0), HandSide::Right, &EquivariantStub, &DEFAULT_ANGLES).unwrap();
        assert!(s < 1e-6, "{s}");
        // a globally rotated crop is still consistent
        let turned = hand_crop(0).pad_square().rotated(37.0);
        let s = consistency_score(&turned, HandSide::Right, &EquivariantStub, &DEFAULT_ANGLES).unwrap();
        assert!(s < 1e-6, "{s}");
    }

    #[test]
    fn noise_raises_score_monotonically() {
        let mean = |sigma: f64| {
            let stub = NoisyStub { sigma, seed: 9 };
            (0..100)
                .map(|i| consistency_score(&hand_crop(i), HandSide::Left, &stub, &DEFAULT_ANGLES).unwrap())
                .sum::<f64>()
                / 100.0
        };
        let (a, b, c) = (mean(0.01), mean(0.05), mean(0.1));
        assert!(a < b && b < c, "{a} {b} {c}");
    }

    struct Failing;
    impl Reconstructor<KeypointCrop> for Failing {
        fn reconstruct(&self, crop: &KeypointCrop, _: HandSide) -> Result<MeshRecord, String> {
            if crop.angle > 15.0 {
                Err("blurry".into())
            } else {
                EquivariantStub.reconstruct(crop, HandSide::Left)
            }
        }
    }

    #[test]
    fn failure_reports_angle() {
        match consistency_score(&hand_crop(0), HandSide::Left, &Failing, &DEFAULT_ANGLES) {
            Err(crate::Error::Reconstructor { angle, .. }) => assert_eq!(angle, 20.0),
            other => panic!("{other:?}"),
        }
    }

    /// Not `Sync`: counts calls through a `Cell`.
    struct Counting(Cell<usize>);
    impl Reconstructor<KeypointCrop> for Counting {
        fn reconstruct(&self, crop: &KeypointCrop, side: HandSide) -> Result<MeshRecord, String> {
            self.0.set(self.0.get() + 1);
            EquivariantStub.reconstruct(crop, side)
        }
    }

    #[test]
    fn serialized_adapter_allows_parallel_scoring() {
        let recon = Serialized::new(Counting(Cell::new(0)));
        let crops: Vec<_> = (0..8).map(|i| (hand_crop(i), HandSide::Left)).collect();
        let scores = score_crops(&crops, &recon, &DEFAULT_ANGLES).unwrap();
        assert!(scores.iter().all(|s| *s < 1e-6));
        assert_eq!(recon.0.lock().unwrap().0.get(), 8 * DEFAULT_ANGLES.len());
    }

    #[test]
    fn image_rotation_matches_point_convention() {
        let mut img = RgbImage::new(41, 41);
        // bright pixel right of center
        img.put_pixel(30, 20, Rgb([255, 255, 255]));
        let rot = img.rotated(90.0);
        let (mut bx, mut by, mut best) = (0, 0, 0u8);
        for (x, y, p) in rot.enumerate_pixels() {
            if p[0] > best {
                (bx, by, best) = (x, y, p[0]);
            }
        }
        let want = rotate_point(Point::new(30.5, 20.5), Point::new(20.5, 20.5), 90.0);
        assert!((bx as f64 + 0.5 - want.x).abs() <= 1.0 && (by as f64 + 0.5 - want.y).abs() <= 1.0, "({bx},{by}) vs {want:?}");
    }

    #[test]
    fn image_padding_centers_content() {
        let img = RgbImage::from_pixel(10, 4, Rgb([9, 9, 9]));
        let sq = img.pad_square();
        assert_eq!(sq.dimensions(), (10, 10));
        assert_eq!(sq.get_pixel(0, 2)[0], 0);
        assert_eq!(sq.get_pixel(0, 3)[0], 9);
        assert_eq!(sq.get_pixel(0, 7)[0], 0);
    }
}
