//! Authenticated classical links between the two labs, with an optional
//! passive tap that records every frame in order.

use std::io::{Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::wire::{read_frame, write_frame, Frame};

/// Frames seen on a link, in transmission order.
pub type Tap = Arc<Mutex<Vec<Frame>>>;

pub fn new_tap() -> Tap {
    Arc::new(Mutex::new(Vec::new()))
}

pub trait Link {
    fn send(&mut self, frame: Frame) -> Result<()>;
    fn recv(&mut self) -> Result<Frame>;
}

/// One end of an in-process link.
pub struct MemLink {
    tx: Sender<Frame>,
    rx: Receiver<Frame>,
    tap: Option<Tap>,
}

/// Two connected in-process ends. Frames are recorded on the tap when sent;
/// with strictly alternating turns the recorded order is deterministic.
pub fn mem_pair(tap: Option<Tap>) -> (MemLink, MemLink) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        MemLink {
            tx: tx_a,
            rx: rx_a,
            tap: tap.clone(),
        },
        MemLink {
            tx: tx_b,
            rx: rx_b,
            tap,
        },
    )
}

impl Link for MemLink {
    fn send(&mut self, frame: Frame) -> Result<()> {
        if let Some(tap) = &self.tap {
            tap.lock().unwrap().push(frame.clone());
        }
        self.tx
            .send(frame)
            .map_err(|_| Error::Session("peer hung up".into()))
    }

    fn recv(&mut self) -> Result<Frame> {
        self.rx
            .recv()
            .map_err(|_| Error::Session("peer hung up".into()))
    }
}

/// A link over a byte stream such as a TCP connection. The tap records both
/// directions as seen from this end.
pub struct StreamLink<S> {
    stream: S,
    tap: Option<Tap>,
}

impl<S: Read + Write> StreamLink<S> {
    pub fn new(stream: S, tap: Option<Tap>) -> Self {
        StreamLink { stream, tap }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl<S: Read + Write> Link for StreamLink<S> {
    fn send(&mut self, frame: Frame) -> Result<()> {
        write_frame(&mut self.stream, &frame)?;
        self.stream.flush()?;
        if let Some(tap) = &self.tap {
            tap.lock().unwrap().push(frame);
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        let frame = read_frame(&mut self.stream)?
            .ok_or_else(|| Error::Session("connection closed by peer".into()))?;
        if let Some(tap) = &self.tap {
            tap.lock().unwrap().push(frame.clone());
        }
        Ok(frame)
    }
}
