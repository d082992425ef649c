//! Convolutional refiners for pilot-based channel estimates.
//!
//! Tensors are dense `[batch, channels, rows, cols]` buffers. Every layer
//! implements an exact backward pass, and parameters carry layer tags so
//! that whole blocks can be frozen for transfer learning.

pub mod checkpoint;
pub mod cnn;
pub mod error;
pub mod gan;
pub mod init;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod param;
pub mod real;
pub mod refine;
pub mod tensor;
pub mod train;

pub use cnn::{Cnn, CnnSpec};
pub use error::{Error, Result};
pub use gan::{Gan, GanSpec};
pub use network::Network;
pub use optim::Adam;
pub use param::{Buffer, Mode, Param};
pub use real::Real;
pub use tensor::Tensor;
