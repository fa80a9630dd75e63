use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `‖F_pred − F_true‖²_F / ‖F_true‖²_F`.
pub fn relative_test_error(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::invalid(format!(
            "prediction shape {:?} differs from reference {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let den = truth.norm_squared();
    if den == 0.0 {
        return Err(Error::invalid("reference has zero norm"));
    }
    Ok((pred - truth).norm_squared() / den)
}

/// `‖F_pred − F_true‖_F / ‖F_true‖_F`.
pub fn relative_test_error_rooted(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    relative_test_error(pred, truth).map(f64::sqrt)
}

/// Squared relative error of predicting every test row by the mean training row.
pub fn mean_predictor_error(train: &DMatrix<f64>, test: &DMatrix<f64>) -> Result<f64> {
    if train.nrows() == 0 {
        return Err(Error::invalid("no training rows"));
    }
    let mean = train.row_mean();
    let pred = DMatrix::from_fn(test.nrows(), test.ncols(), |_, j| mean[j]);
    relative_test_error(&pred, test)
}
