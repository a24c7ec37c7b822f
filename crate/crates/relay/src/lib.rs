//! Telemetry relay: routes heart-rate samples from a sensor into a running
//! session and streams authoritative game state to the player and observers.

pub mod connection;
pub mod hub;
pub mod protocol;
pub mod server;

pub use connection::Connection;
pub use hub::{OpenSession, Rejection, Relay, RelayConfig, SessionHandle, StoredQuestionnaire};
pub use protocol::{Body, ErrorCode, Instrument, QuestionnaireItem, Role, StateFrame, WireMessage};
pub use server::{router, serve, spawn, Health};
