use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

impl Credentials {
    pub fn new(username: impl Into<String>, password: impl Into<String>) -> Self {
        Credentials { username: username.into(), password: password.into() }
    }

    /// Value for an `Authorization` header.
    pub fn to_basic_header(&self) -> String {
        format!("Basic {}", STANDARD.encode(format!("{}:{}", self.username, self.password)))
    }

    pub fn from_basic_header(value: &str) -> Option<Self> {
        let (scheme, encoded) = value.trim().split_once(' ')?;
        if !scheme.eq_ignore_ascii_case("basic") {
            return None;
        }
        let decoded = String::from_utf8(STANDARD.decode(encoded.trim()).ok()?).ok()?;
        let (user, pass) = decoded.split_once(':')?;
        Some(Credentials::new(user, pass))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("unauthorized")]
pub struct Unauthorized;

/// Username to password table for Basic authentication.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CredentialStore {
    users: BTreeMap<String, [u8; 32]>,
}

impl CredentialStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, credentials: &Credentials) {
        self.users.insert(credentials.username.clone(), digest(&credentials.password));
    }

    pub fn contains_user(&self, username: &str) -> bool {
        self.users.contains_key(username)
    }

    /// Checks a username/password pair; the password comparison does not
    /// short-circuit on the first differing byte.
    pub fn authenticate(&self, credentials: Option<&Credentials>) -> Result<(), Unauthorized> {
        let c = credentials.ok_or(Unauthorized)?;
        if c.username.is_empty() {
            return Err(Unauthorized);
        }
        let offered = digest(&c.password);
        // compare against a dummy digest for unknown users so both paths do the same work
        let (known, stored) = match self.users.get(&c.username) {
            Some(d) => (true, *d),
            None => (false, digest("\u{0}unknown")),
        };
        let diff = stored.iter().zip(offered.iter()).fold(0u8, |acc, (a, b)| acc | (a ^ b));
        if known & (diff == 0) {
            Ok(())
        } else {
            Err(Unauthorized)
        }
    }
}

fn digest(password: &str) -> [u8; 32] {
    Sha256::digest(password.as_bytes()).into()
}
