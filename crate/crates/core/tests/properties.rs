mod common;

#[test]
fn diff_matches_central_differences() {
    common::diff_matches_central_differences();
}

#[test]
fn diff_is_linear() {
    common::diff_is_linear();
}

#[test]
fn substitution_is_sound() {
    common::substitution_is_sound();
}

#[test]
fn text_and_tape_agree_with_tree() {
    common::text_and_tape_agree_with_tree();
}

#[test]
fn shift_semigroup() {
    common::shift_semigroup();
}

#[test]
fn forward_backward_round_trip() {
    common::forward_backward_round_trip();
}

#[test]
fn pointwise_round_trip_without_closed_form() {
    common::pointwise_round_trip_without_closed_form();
}

#[test]
fn equilibrium_is_shift_invariant() {
    common::equilibrium_is_shift_invariant();
}

#[test]
fn feasibility_is_monotone() {
    common::feasibility_is_monotone();
}

#[test]
fn kappa_bounds_and_dichotomy() {
    common::kappa_bounds_and_dichotomy();
}

#[test]
fn variables_respect_block_sign_rules() {
    common::variables_respect_block_sign_rules();
}

#[test]
fn seeds_drive_distinct_cases() {
    common::seeds_drive_distinct_cases();
}
