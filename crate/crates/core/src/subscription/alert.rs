use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::datastore::Datastore;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub fired_at: Timestamp,
    pub severity: Severity,
    /// Node id or `node.sensor` the alert is about.
    pub subject: String,
    pub message: String,
    pub subscription: String,
}

impl Alert {
    /// One outbox record: `{fired_at, severity, subject, message}` as a JSON line.
    pub fn outbox_record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            fired_at: Timestamp,
            severity: Severity,
            subject: &'a str,
            message: &'a str,
        }
        let mut line = serde_json::to_string(&Record {
            fired_at: self.fired_at,
            severity: self.severity,
            subject: &self.subject,
            message: &self.message,
        })
        .expect("alert records serialize");
        line.push('\n');
        line
    }

    /// Node part of the subject.
    pub fn node(&self) -> &str {
        self.subject.split('.').next().unwrap_or(&self.subject)
    }
}

/// Where alerts go after they are persisted in the datastore. The dashboard
/// stream is fed by the datastore's listeners, not from here.
#[derive(Debug, Clone, Default)]
pub struct AlertSinks {
    pub log: bool,
    pub outbox: Option<PathBuf>,
}

impl AlertSinks {
    pub fn deliver(&self, store: &Datastore, alert: Alert) -> io::Result<()> {
        store.persist_alert(alert.clone());
        if self.log {
            match alert.severity {
                Severity::Info => log::info!("[{}] {}", alert.subject, alert.message),
                Severity::Warning => log::warn!("[{}] {}", alert.subject, alert.message),
                Severity::Critical => log::error!("[{}] {}", alert.subject, alert.message),
            }
        }
        if let Some(path) = &self.outbox {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(alert.outbox_record().as_bytes())?;
        }
        Ok(())
    }
}
