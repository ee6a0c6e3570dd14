//! Minimal CNN toolkit: convolution, pixel shuffle, pooling, losses, Adam.

pub mod adam;
pub mod conv;
pub mod ops;

pub use adam::Adam;
pub use conv::Conv2d;
