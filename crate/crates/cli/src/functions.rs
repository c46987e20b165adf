//! Named smooth objectives available to problem documents.

use bpalm::special::{sigmoid, softplus};
use bpalm::SmoothFunction;
use nalgebra::{DMatrix, DVector};

fn xlogx(w: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * w.ln()
    }
}

/// `sum exp(x_i)`
#[derive(Debug, Clone, Copy)]
pub struct SumExp;

impl SmoothFunction for SumExp {
    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|v| v.exp()).sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(f64::exp)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(f64::exp))
    }

    fn conjugate(&self, w: &DVector<f64>) -> Option<f64> {
        if w.iter().any(|&v| v < 0.0) {
            return Some(f64::INFINITY);
        }
        Some(w.iter().map(|&v| xlogx(v) - v).sum())
    }
}

/// `sum ln(1 + exp(x_i))`
#[derive(Debug, Clone, Copy)]
pub struct Logistic;

impl SmoothFunction for Logistic {
    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|&v| softplus(v)).sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(sigmoid)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(|v| {
            let p = sigmoid(v);
            p * (1.0 - p)
        }))
    }

    fn conjugate(&self, w: &DVector<f64>) -> Option<f64> {
        if w.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Some(f64::INFINITY);
        }
        Some(w.iter().map(|&v| xlogx(v) + xlogx(1.0 - v)).sum())
    }
}
