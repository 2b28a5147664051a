#![allow(dead_code)]

pub mod fixtures;
pub mod oracles;
pub mod reference;
pub mod ring;
