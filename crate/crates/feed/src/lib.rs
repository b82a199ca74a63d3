//! Network feed between simulator, engine and display clients.
//!
//! See `docs/protocol.md` for the frame schema.

pub mod server;
pub mod wire;

pub use server::{serve, ServeConfig, ServerHandle, DEFAULT_PORT};
pub use wire::{decode, encode, ErrorCode, FrameDecoder, Role, StateUpdate, WireError, WireMessage, PROTOCOL_VERSION};
