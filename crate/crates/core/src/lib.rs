pub mod accel;
pub mod experiment;
pub mod ops;
pub mod oracle;
pub mod rng;
pub mod tensor;
pub mod validate;

pub use accel::{simulate, EngineConfig, MemoryConfig, MemoryKind, SimError, SimReport};
pub use ops::{convolve, ConvSpec, OffsetField, OffsetLayout, OpError, Variant, Weights};
pub use tensor::{SeedSpec, Shape, Tensor, TensorError};
