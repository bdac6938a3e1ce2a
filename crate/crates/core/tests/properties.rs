//! Runs every property suite as its own test.

mod support;

use support::properties;

#[test]
fn gradient_and_hessian_match_finite_differences() {
    properties::gradient_and_hessian_match_finite_differences().unwrap();
}

#[test]
fn penalty_gradient_is_grad_of_mu() {
    properties::penalty_gradient_is_grad_of_mu().unwrap();
}

#[test]
fn stability_matrix_is_jacobian_of_gradient() {
    properties::stability_matrix_is_jacobian_of_gradient().unwrap();
}

#[test]
fn eigendecomposition_matches_nalgebra() {
    properties::eigendecomposition_matches_nalgebra().unwrap();
}

#[test]
fn lagrangian_form_agrees_with_penalty_form() {
    properties::lagrangian_form_agrees_with_penalty_form().unwrap();
}

#[test]
fn homogenization_is_homogeneous_and_dehomogenizes() {
    properties::homogenization_is_homogeneous_and_dehomogenizes().unwrap();
}

#[test]
fn system_file_round_trips() {
    properties::system_file_round_trips().unwrap();
}
