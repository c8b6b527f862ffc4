#![allow(dead_code)]

use std::sync::Arc;

use pertraj::{BvpProblem, CallbackField, ControlSchedule, DomainBox, Matrix, SystemModel, Vector};

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

/// `g(x) = eps (sin x2, sin x1)`.
pub fn sine_field(eps: f64) -> CallbackField {
    CallbackField::new(
        2,
        move |x: &Vector| v(&[eps * x[1].sin(), eps * x[0].sin()]),
        move |x: &Vector| Matrix::from_row_slice(2, 2, &[0.0, eps * x[1].cos(), eps * x[0].cos(), 0.0]),
    )
    .with_hessians(move |x| {
        vec![
            Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -eps * x[1].sin()]),
            Matrix::from_row_slice(2, 2, &[-eps * x[0].sin(), 0.0, 0.0, 0.0]),
        ]
    })
}

pub fn sine_model(eps: f64) -> SystemModel {
    SystemModel::new(
        Matrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.3, -1.5]),
        Arc::new(sine_field(eps)),
        DomainBox::unbounded(2),
    )
    .unwrap()
}

pub fn three_piece_schedule() -> ControlSchedule {
    ControlSchedule::from_fractions(
        1.0,
        &[0.0, 0.25, 0.6, 1.0],
        vec![v(&[1.0, 0.0]), v(&[-0.5, 0.8]), v(&[0.0, -1.0])],
    )
    .unwrap()
}

pub fn sine_problem(eps: f64, steps: usize) -> BvpProblem {
    BvpProblem::periodic(sine_model(eps), three_piece_schedule(), steps).unwrap()
}
