use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remix_core::data::{build_dataset, mix, DatasetManifest, GroundTruth, Mixture, Profile, SourceImage, SourceLabel};
use remix_core::metrics::{evaluate, Assignment, PSNR_CAP_DB};
use remix_core::separator::{ArchDescriptor, ConstantMask, MaskNet, Separator};
use remix_core::{Error, Image, Result, Shape};

fn toy_val(n: usize) -> Vec<Mixture<f32>> {
    let mut m = DatasetManifest::for_profile(Profile::Custom);
    m.n_train = 20;
    m.n_val = n;
    m.seed = 9;
    build_dataset(&m).unwrap().val
}

/// Uses the ground truth to produce the ideal mask `x / (x + b)`.
struct Oracle {
    shape: Shape,
    masks: Vec<Image<f32>>,
}

impl Separator<f32> for Oracle {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn masks(&self, ys: &[Image<f32>]) -> Result<Vec<Image<f32>>> {
        if ys.len() != self.masks.len() {
            return Err(Error::Config("oracle only knows one batch".into()));
        }
        Ok(self.masks.clone())
    }
}

fn oracle_for(val: &[Mixture<f32>]) -> Oracle {
    let masks = val
        .iter()
        .map(|m| {
            let (x, b) = m.components().unwrap();
            x.zip_map(&b, |xv, bv| if xv + bv == 0.0 { 0.5 } else { xv / (xv + bv) })
                .unwrap()
        })
        .collect();
    Oracle {
        shape: val[0].pixels.shape(),
        masks,
    }
}

#[test]
fn ideal_mask_reaches_the_cap() {
    let val = toy_val(30);
    let r = evaluate(&oracle_for(&val), &val).unwrap();
    assert_eq!(r.psnr_mean, PSNR_CAP_DB);
    assert_eq!(r.assignment, Assignment::Direct);
    assert_eq!(r.ssim_mean, None, "8x8 images are below the SSIM window");
}

#[test]
fn report_is_invariant_to_example_order() {
    let val = toy_val(40);
    let model = MaskNet::<f32>::new(
        ArchDescriptor::for_shape(val[0].pixels.shape(), 4).unwrap(),
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let a = evaluate(&model, &val).unwrap();
    let mut shuffled = val.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let b = evaluate(&model, &shuffled).unwrap();
    assert!((a.psnr_mean - b.psnr_mean).abs() < 1e-9);
    assert_eq!(a.assignment, b.assignment);
}

#[test]
fn relabelling_flips_the_assignment_only() {
    let val = toy_val(30);
    let model = ConstantMask {
        shape: val[0].pixels.shape(),
        value: 0.8f32,
    };
    let a = evaluate(&model, &val).unwrap();
    let swapped: Vec<_> = val
        .iter()
        .cloned()
        .map(|mut m| {
            let gt = m.ground_truth.as_mut().unwrap();
            std::mem::swap(&mut gt.x, &mut gt.b);
            m
        })
        .collect();
    let b = evaluate(&model, &swapped).unwrap();
    assert!((a.psnr_mean - b.psnr_mean).abs() < 1e-9);
    assert_ne!(a.assignment, b.assignment);
    assert!((a.psnr_x - b.psnr_x).abs() < 1e-9);
}

#[test]
fn degenerate_mask_scores_below_balanced_mask() {
    let val = toy_val(50);
    let shape = val[0].pixels.shape();
    let all_one = evaluate(&ConstantMask { shape, value: 1.0f32 }, &val).unwrap();
    let half = evaluate(&ConstantMask { shape, value: 0.5f32 }, &val).unwrap();
    assert!(all_one.psnr_mean < half.psnr_mean);
}

#[test]
fn ssim_is_reported_for_large_images() {
    let shape = Shape::new(12, 12, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let val: Vec<_> = (0..4)
        .map(|_| {
            let x = Image::from_vec(shape, (0..144).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap();
            let b = Image::from_vec(shape, (0..144).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap();
            Mixture {
                pixels: mix(&x, &b).unwrap(),
                ground_truth: Some(GroundTruth {
                    x: SourceImage {
                        pixels: x,
                        label: SourceLabel::SourceX,
                        origin_id: "x".into(),
                    },
                    b: SourceImage {
                        pixels: b,
                        label: SourceLabel::SourceB,
                        origin_id: "b".into(),
                    },
                }),
            }
        })
        .collect();
    let r = evaluate(&ConstantMask { shape, value: 0.5f32 }, &val).unwrap();
    let s = r.ssim_mean.unwrap();
    assert!(s > -1.0 && s < 1.0);
    assert!(r.to_csv().lines().nth(1).unwrap().split(',').all(|f| f != "na"));
}

#[test]
fn evaluation_needs_ground_truth() {
    let mut val = toy_val(5);
    val[2].ground_truth = None;
    let shape = val[0].pixels.shape();
    assert!(matches!(
        evaluate(&ConstantMask { shape, value: 0.5f32 }, &val),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        evaluate(&ConstantMask { shape, value: 0.5f32 }, &val[..0]),
        Err(Error::Config(_))
    ));
}
