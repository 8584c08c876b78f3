//! Node/server protocol and the simulated link it travels over.

mod auth;
mod line;
mod link;
mod wire;

pub use auth::{CredentialStore, Credentials, Unauthorized};
pub use line::{decode_points, encode_points, ParseError};
pub use link::{link_transmit, Delivery, Direction, Link, LinkModel, OutageWindow};
pub use wire::{WireBody, WireMessage};
