//! Fan-out of store events to open `/stream` connections.
//!
//! Every subscriber gets its own unbounded channel, so a slow reader never
//! blocks the writer that triggered the event and never misses one either.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::Serialize;
use stormnet_core::datastore::{CommandEvent, StoreEvent};
use stormnet_core::subscription::Alert;
use stormnet_core::{Datastore, Point};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamEvent {
    Point(Point),
    Alert(Alert),
    Command(CommandEvent),
}

impl StreamEvent {
    /// SSE event name.
    pub fn name(&self) -> &'static str {
        match self {
            StreamEvent::Point(_) => "point",
            StreamEvent::Alert(_) => "alert",
            StreamEvent::Command(_) => "command",
        }
    }
}

impl From<&StoreEvent> for StreamEvent {
    fn from(e: &StoreEvent) -> Self {
        match e {
            StoreEvent::Point(p) => StreamEvent::Point(p.clone()),
            StoreEvent::Alert(a) => StreamEvent::Alert(a.clone()),
            StoreEvent::Command(c) => StreamEvent::Command(c.clone()),
        }
    }
}

#[derive(Clone, Default)]
pub struct StreamHub {
    subscribers: Arc<Mutex<Vec<UnboundedSender<StreamEvent>>>>,
}

impl StreamHub {
    /// A hub fed by every event `store` emits from now on.
    pub fn attach(store: &Datastore) -> Self {
        let hub = StreamHub::default();
        let subs = hub.subscribers.clone();
        store.add_listener(move |e| {
            let mut subs = subs.lock();
            if subs.is_empty() {
                return;
            }
            let event = StreamEvent::from(e);
            subs.retain(|tx| tx.send(event.clone()).is_ok());
        });
        hub
    }

    pub fn subscribe(&self) -> UnboundedReceiver<StreamEvent> {
        let (tx, rx) = unbounded_channel();
        self.subscribers.lock().push(tx);
        rx
    }

    pub fn subscriber_count(&self) -> usize {
        let mut subs = self.subscribers.lock();
        subs.retain(|tx| !tx.is_closed());
        subs.len()
    }
}
