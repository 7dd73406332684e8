//! RDIS runtime: service loops over live transports, the device simulator
//! and the websocket bridge.

pub mod bridge;
pub mod error;
pub mod odometry;
pub mod runtime;
pub mod scheduler;
pub mod sim;
pub mod state;
pub mod transport;

pub use bridge::{serve, BridgeConfig, BridgeError, BridgeHandle};
pub use error::RuntimeError;
pub use runtime::{ConceptSample, LoopStatus, Runtime, RuntimeConfig, Subscription, DEFAULT_REPLY_TIMEOUT};
pub use sim::{inspect, run_sim, ProfileId, SimConfig, SimError, SimHandle, SimProfile, SimSnapshot};
pub use state::{StateStore, StateValue};
pub use transport::{
    memory_pipe, MemoryFactory, MemoryTransport, ReadOutcome, TcpFactory, Transport, TransportFactory,
};
