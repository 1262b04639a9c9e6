//! Reliable, ordered, connection-per-peer message transport.
//!
//! A [`Link`] is one end of a bidirectional connection carrying encoded
//! wire frames. Two flavors share the type:
//!
//! - **Loopback**: an in-process channel pair. Frames are still encoded to
//!   bytes and decoded on receipt, so loopback runs exercise the exact wire
//!   path TCP does — only the copy differs.
//! - **TCP**: one stream per peer pair, frames back-to-back. A reader
//!   thread parses frame boundaries and hands complete frames to the link's
//!   inbox; sends write directly to the socket.
//!
//! Both deliver reliably and in order per peer pair (the loopback channel
//! is FIFO; TCP guarantees it). Receiving is pull-based with non-blocking
//! and bounded-wait variants so callers can pump several links at once.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::time::Duration;

use super::wire::{decode_frame, encode_frame, FrameHeader, Message, HEADER_LEN};
use super::ClusterError;

enum Sink {
    Loopback(mpsc::Sender<Vec<u8>>),
    Tcp(TcpStream),
}

/// One end of a connection to a single peer.
pub struct Link {
    peer: u16,
    sink: Sink,
    inbox: mpsc::Receiver<Vec<u8>>,
}

impl Drop for Link {
    fn drop(&mut self) {
        // The reader thread owns a duplicate of the socket handle; without
        // an explicit shutdown the connection would stay half-open (and the
        // peer would never see EOF) until that thread exited on its own.
        if let Sink::Tcp(stream) = &self.sink {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
    }
}

impl Link {
    /// Node id this link talks to (for diagnostics).
    pub fn peer(&self) -> u16 {
        self.peer
    }

    /// Encodes and sends one message.
    pub fn send(&mut self, message: &Message) -> Result<(), ClusterError> {
        let frame = encode_frame(message)?;
        match &mut self.sink {
            Sink::Loopback(tx) => tx
                .send(frame)
                .map_err(|_| ClusterError::PeerDisconnected { node_id: self.peer }),
            Sink::Tcp(stream) => {
                stream.write_all(&frame)?;
                stream.flush()?;
                Ok(())
            }
        }
    }

    /// Returns an already-arrived message, or `None` without blocking.
    pub fn try_recv(&mut self) -> Result<Option<Message>, ClusterError> {
        match self.inbox.try_recv() {
            Ok(frame) => Ok(Some(decode_frame(&frame)?.0)),
            Err(mpsc::TryRecvError::Empty) => Ok(None),
            Err(mpsc::TryRecvError::Disconnected) => {
                Err(ClusterError::PeerDisconnected { node_id: self.peer })
            }
        }
    }

    /// Waits up to `timeout` for a message; `None` on timeout.
    pub fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Message>, ClusterError> {
        match self.inbox.recv_timeout(timeout) {
            Ok(frame) => Ok(Some(decode_frame(&frame)?.0)),
            Err(mpsc::RecvTimeoutError::Timeout) => Ok(None),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(ClusterError::PeerDisconnected { node_id: self.peer })
            }
        }
    }
}

/// Builds a connected in-process pair: the first link's peer is
/// `first_peer` (so it is held by the other node), and vice versa. Frames
/// sent on one side arrive, bytes intact and in order, at the other.
pub fn loopback_pair(first_peer: u16, second_peer: u16) -> (Link, Link) {
    let (to_second, second_inbox) = mpsc::channel();
    let (to_first, first_inbox) = mpsc::channel();
    (
        Link { peer: first_peer, sink: Sink::Loopback(to_second), inbox: first_inbox },
        Link { peer: second_peer, sink: Sink::Loopback(to_first), inbox: second_inbox },
    )
}

/// Splits a TCP stream into a [`Link`]: a reader thread cuts the byte
/// stream into frames at header-declared boundaries and queues them; sends
/// go straight to the socket with Nagle disabled.
fn link_from_stream(stream: TcpStream, peer: u16) -> std::io::Result<Link> {
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let (tx, inbox) = mpsc::channel::<Vec<u8>>();
    std::thread::spawn(move || {
        loop {
            let mut frame = vec![0u8; HEADER_LEN];
            if reader.read_exact(&mut frame).is_err() {
                return; // EOF or reset: dropping tx signals disconnect
            }
            match FrameHeader::parse(&frame) {
                Ok(header) => {
                    let payload = header.payload_len();
                    frame.resize(HEADER_LEN + payload, 0);
                    if reader.read_exact(&mut frame[HEADER_LEN..]).is_err() {
                        return;
                    }
                    if tx.send(frame).is_err() {
                        return; // link dropped locally
                    }
                }
                Err(_) => {
                    // Hand the malformed header to the consumer, which will
                    // surface the same decode error, then stop: frame
                    // boundaries are lost.
                    let _ = tx.send(frame);
                    return;
                }
            }
        }
    });
    Ok(Link { peer, sink: Sink::Tcp(stream), inbox })
}

/// Connects to a listening peer.
pub fn tcp_connect(addr: &str, peer: u16) -> std::io::Result<Link> {
    link_from_stream(TcpStream::connect(addr)?, peer)
}

/// Accepts one inbound connection.
pub fn tcp_accept(listener: &TcpListener, peer: u16) -> std::io::Result<Link> {
    let (stream, _) = listener.accept()?;
    link_from_stream(stream, peer)
}
