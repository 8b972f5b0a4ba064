#![no_std]
#![doc = "Norm-product belief propagation over factor graphs with configurable counting numbers."]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod counting;
pub mod engine;
pub mod generate;
pub mod map_lp;
pub mod math;
pub mod model;
pub mod oracle;
pub mod qp;
