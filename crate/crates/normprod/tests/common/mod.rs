#![allow(dead_code)]

pub mod reductions;
pub mod reference;
