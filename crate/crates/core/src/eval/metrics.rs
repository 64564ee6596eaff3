use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Largest pixel value of the scoring scale.
pub const PIXEL_MAX: f64 = 255.0;

/// Mean absolute difference between two images on the 0-255 scale.
///
/// Both tensors hold values in `[0, 1]` and must have the same shape; every
/// element counts once, so `[3, N, M]` RGB and `[1, N, M]` depth images are
/// averaged over `N * M * L` values.
pub fn image_error(generated: &Tensor<f32>, reference: &Tensor<f32>) -> Result<f64> {
    if generated.shape() != reference.shape() {
        return Err(shape_err!(
            "cannot compare images of shape {:?} and {:?}",
            generated.shape(),
            reference.shape()
        ));
    }
    if generated.is_empty() {
        return Err(shape_err!("cannot score an empty image"));
    }
    let sum: f64 = generated
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&g, &r)| (g as f64 * PIXEL_MAX - r as f64 * PIXEL_MAX).abs())
        .sum();
    Ok(sum / generated.len() as f64)
}

/// Percentage accuracy `(1 - e / 255) * 100` of an error on the 0-255 scale.
pub fn image_accuracy(e: f64) -> Result<f64> {
    if !(0.0..=PIXEL_MAX).contains(&e) {
        return Err(Error::InvalidArgument(format!(
            "error {e} is outside [0, 255]"
        )));
    }
    Ok((1.0 - e / PIXEL_MAX) * 100.0)
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_offset() {
        let a = Tensor::from_vec(&[1, 2, 2], vec![0.0f32; 4]).unwrap();
        let b = Tensor::from_vec(&[1, 2, 2], vec![10.0 / 255.0; 4]).unwrap();
        assert!((image_error(&b, &a).unwrap() - 10.0).abs() < 1e-4);
        assert_eq!(image_error(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_bounds() {
        assert_eq!(image_accuracy(0.0).unwrap(), 100.0);
        assert_eq!(image_accuracy(255.0).unwrap(), 0.0);
        assert!(image_accuracy(-0.1).is_err());
        assert!(image_accuracy(255.5).is_err());
        assert!(image_accuracy(f64::NAN).is_err());
    }

    #[test]
    fn mean_std_of_constant_is_zero_spread() {
        assert_eq!(mean_std(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
