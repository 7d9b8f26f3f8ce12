mod elementwise;
mod nn;
mod shape;

pub use nn::Conv2dSpec;
