#![allow(dead_code)]

pub mod dense;
pub mod partition_oracle;
pub mod tiny_rigs;
