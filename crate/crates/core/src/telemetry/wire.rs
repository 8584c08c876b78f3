use serde::{Deserialize, Serialize};

use super::auth::Credentials;
use crate::datastore::{AckOutcome, CommandState, CommandView};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum WireBody {
    /// Points in the line grammar.
    WritePoints { payload: String },
    FetchCommands,
    AckCommand { command_id: u64, outcome: AckOutcome },
    CommandList { commands: Vec<CommandView> },
    WriteAck { written: usize },
    AckResult { command_id: u64, state: CommandState },
    AuthError,
    BadRequest { line: Option<usize>, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub node_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth: Option<Credentials>,
    #[serde(flatten)]
    pub body: WireBody,
}

impl WireMessage {
    pub fn request(node_id: &str, auth: Option<Credentials>, body: WireBody) -> Self {
        WireMessage { node_id: node_id.to_owned(), auth, body }
    }

    pub fn response(node_id: &str, body: WireBody) -> Self {
        WireMessage { node_id: node_id.to_owned(), auth: None, body }
    }

    pub fn is_request(&self) -> bool {
        matches!(
            self.body,
            WireBody::WritePoints { .. } | WireBody::FetchCommands | WireBody::AckCommand { .. }
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
