//! Dense multilayer networks with hand-written backpropagation, an
//! optimizer, finite-difference gradient verification, and the binary
//! checkpoint format shared by the agent and the judges.

mod checkpoint;
pub mod gradcheck;
mod mlp;
mod optim;
mod scalar;

pub use checkpoint::{read_network, write_network, CHECKPOINT_MAGIC};
pub use mlp::{Activation, Backward, Dense, Gradients, LayerGrad, Mlp, Tape};
pub use optim::{optimize_step, OptimizerState, StepOutcome, UpdateRule};
pub use scalar::Scalar;
