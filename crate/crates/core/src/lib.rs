pub mod ab;
pub mod block_cyclic;
pub mod blocked;
pub mod error;
pub mod householder;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod scheduler;
pub mod svd;

pub use ab::{analyze, randutv_ab, Task, TaskKind};
pub use blocked::{randutv, UtvConfig, UtvResult};
pub use error::{Error, Result};
pub use matrix::{Matrix, MatMut, MatRef, Trans};
pub use rng::RngState;
