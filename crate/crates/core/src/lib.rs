pub mod harness;
pub mod metrics;
pub mod mf;
pub mod problems;
pub mod tensor;
pub mod wavelets;
pub mod wno;
