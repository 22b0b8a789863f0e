//! Waveform encoder: a compact residual CNN trained on proxy tasks, and
//! PCA reduction of its embeddings to the five waveform features.

mod io;
mod network;
mod optim;
mod pca;
mod tasks;
mod train;

pub use io::*;
pub use network::*;
pub use optim::*;
pub use pca::*;
pub use tasks::*;
pub use train::*;
