//! Reconstruction quality: PSNR and single-scale SSIM.

use super::LearnerError;

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;

pub fn mse(original: &[f64], reconstruction: &[f64]) -> Result<f64, LearnerError> {
    if original.len() != reconstruction.len() {
        return Err(LearnerError::ShapeMismatch {
            left: original.len(),
            right: reconstruction.len(),
        });
    }
    if original.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    let sum: f64 = original
        .iter()
        .zip(reconstruction)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / original.len() as f64)
}

/// `10·log10(MAX²/MSE)`; `+∞` when the MSE is zero.
pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (max_value * max_value / mse).log10()
}

pub fn psnr(original: &[f64], reconstruction: &[f64], max_value: f64) -> Result<f64, LearnerError> {
    Ok(psnr_from_mse(mse(original, reconstruction)?, max_value))
}

/// Mean SSIM over every 8×8 window position of two `width`-wide images.
///
/// Window statistics use uniform weights with population (1/N) moments.
pub fn ssim(original: &[f64], reconstruction: &[f64], width: usize, max_value: f64) -> Result<f64, LearnerError> {
    if original.len() != reconstruction.len() {
        return Err(LearnerError::ShapeMismatch {
            left: original.len(),
            right: reconstruction.len(),
        });
    }
    if width == 0 || !original.len().is_multiple_of(width) {
        return Err(LearnerError::ShapeMismatch {
            left: original.len(),
            right: width,
        });
    }
    let height = original.len() / width;
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(LearnerError::TooSmall { width, height });
    }
    let c1 = (0.01 * max_value).powi(2);
    let c2 = (0.03 * max_value).powi(2);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=height - SSIM_WINDOW {
        for left in 0..=width - SSIM_WINDOW {
            let (mut sa, mut sb) = (0.0, 0.0);
            for r in top..top + SSIM_WINDOW {
                for c in left..left + SSIM_WINDOW {
                    sa += original[r * width + c];
                    sb += reconstruction[r * width + c];
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for r in top..top + SSIM_WINDOW {
                for c in left..left + SSIM_WINDOW {
                    let da = original[r * width + c] - ma;
                    let db = reconstruction[r * width + c] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            let (va, vb, cov) = (va / n, vb / n, cov / n);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> Vec<f64> {
        (0..w * h).map(|i| ((i * 37) % 101) as f64 / 100.0).collect()
    }

    #[test]
    fn psnr_cases() {
        assert_eq!(psnr_from_mse(1.0, 1.0), 0.0);
        assert_eq!(psnr_from_mse(4.0, 2.0), 0.0);
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        let a = ramp(8, 8);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(psnr(&a, &a[..10], 1.0), Err(LearnerError::ShapeMismatch { .. })));
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = ramp(8, 8);
        assert!((ssim(&a, &a, 8, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let a = ramp(16, 12);
        assert!((ssim(&a, &a, 16, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_negation_is_anticorrelated() {
        let a = ramp(8, 8);
        let mean = a.iter().sum::<f64>() / 64.0;
        let neg: Vec<f64> = a.iter().map(|v| 2.0 * mean - v).collect();
        assert!(ssim(&a, &neg, 8, 1.0).unwrap() <= 0.0);
    }

    #[test]
    fn ssim_constant_images_reduce_to_luminance() {
        let (x, y) = (0.3, 0.7);
        let a = vec![x; 64];
        let b = vec![y; 64];
        let c1 = 1e-4;
        let oracle = (2.0 * x * y + c1) / (x * x + y * y + c1);
        assert!((ssim(&a, &b, 8, 1.0).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn ssim_shape_errors() {
        let a = ramp(7, 7);
        assert_eq!(ssim(&a, &a, 7, 1.0), Err(LearnerError::TooSmall { width: 7, height: 7 }));
        let b = ramp(8, 8);
        assert!(matches!(ssim(&b, &a, 8, 1.0), Err(LearnerError::ShapeMismatch { .. })));
    }

    proptest! {
        #[test]
        fn psnr_strictly_decreasing_in_mse(m in 1e-8f64..10.0, bump in 1e-6f64..1.0, max in 0.1f64..255.0) {
            prop_assert!(psnr_from_mse(m * (1.0 + bump), max) < psnr_from_mse(m, max));
        }

        #[test]
        fn ssim_in_range(a in proptest::collection::vec(0.0f64..1.0, 64), b in proptest::collection::vec(0.0f64..1.0, 64)) {
            let s = ssim(&a, &b, 8, 1.0).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}
