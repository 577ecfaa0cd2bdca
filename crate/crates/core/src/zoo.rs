//! Shipped models, embedded at compile time.

use crate::system::{parse_model_unchecked, DiscreteSystem, FlatSpec};

pub const EXAMPLE1_JSON: &str = include_str!("../../../models/example1.json");
pub const ROBOT_JSON: &str = include_str!("../../../models/robot.json");
pub const HELICOPTER_JSON: &str = include_str!("../../../models/helicopter.json");

/// Model names accepted by [`by_name`].
pub const NAMES: [&str; 3] = ["example1", "robot", "helicopter"];

pub fn json(name: &str) -> Option<&'static str> {
    match name {
        "example1" => Some(EXAMPLE1_JSON),
        "robot" => Some(ROBOT_JSON),
        "helicopter" => Some(HELICOPTER_JSON),
        _ => None,
    }
}

pub fn by_name(name: &str) -> Option<(DiscreteSystem, FlatSpec)> {
    json(name).map(|j| parse_model_unchecked(j).expect("shipped model parses"))
}

pub fn example1() -> (DiscreteSystem, FlatSpec) {
    by_name("example1").unwrap()
}

pub fn robot() -> (DiscreteSystem, FlatSpec) {
    by_name("robot").unwrap()
}

pub fn helicopter() -> (DiscreteSystem, FlatSpec) {
    by_name("helicopter").unwrap()
}
