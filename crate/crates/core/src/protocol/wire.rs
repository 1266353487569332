//! Byte framing and an in-memory duplex channel.
//!
//! A frame is a 4-byte little-endian length, a type byte and the payload; the
//! length covers the type byte and the payload.

use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};

use crate::error::{Error, Result};
use crate::params::HeParams;
use crate::ring::{pack_bits, unpack_bits};

pub const FRAME_HEADER: usize = 5;

pub const MSG_INPUT: u8 = 1;
pub const MSG_OUTPUT: u8 = 2;

pub fn encode_frame(kind: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER + payload.len());
    out.extend_from_slice(&((payload.len() + 1) as u32).to_le_bytes());
    out.push(kind);
    out.extend_from_slice(payload);
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<(u8, &[u8])> {
    if bytes.len() < FRAME_HEADER {
        return Err(Error::Format(format!(
            "frame of {} bytes is shorter than its header",
            bytes.len()
        )));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    if len == 0 || bytes.len() != 4 + len {
        return Err(Error::Format(format!(
            "frame length field {len} but {} bytes follow",
            bytes.len() - 4
        )));
    }
    Ok((bytes[4], &bytes[FRAME_HEADER..]))
}

/// One side of a duplex channel. Counts every byte it sends and receives.
#[derive(Debug)]
pub struct Endpoint {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    pub bytes_sent: usize,
    pub bytes_received: usize,
    pub frames_sent: usize,
    pub frames_received: usize,
}

/// Two connected endpoints.
pub fn duplex() -> (Endpoint, Endpoint) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    let make = |tx, rx| Endpoint {
        tx,
        rx,
        bytes_sent: 0,
        bytes_received: 0,
        frames_sent: 0,
        frames_received: 0,
    };
    (make(tx_a, rx_a), make(tx_b, rx_b))
}

impl Endpoint {
    pub fn send(&mut self, kind: u8, payload: &[u8]) -> Result<()> {
        let frame = encode_frame(kind, payload);
        self.bytes_sent += frame.len();
        self.frames_sent += 1;
        self.tx.send(frame).map_err(|_| Error::Protocol("peer hung up".into()))
    }

    /// Next frame, without blocking: the parties take turns on one thread, so
    /// an empty queue means the peer never sent what the protocol expects.
    pub fn recv(&mut self) -> Result<(u8, Vec<u8>)> {
        let frame = self.rx.try_recv().map_err(|e| match e {
            TryRecvError::Empty => Error::Protocol("expected a message but the channel is empty".into()),
            TryRecvError::Disconnected => Error::Protocol("peer hung up".into()),
        })?;
        self.bytes_received += frame.len();
        self.frames_received += 1;
        let (kind, payload) = decode_frame(&frame)?;
        Ok((kind, payload.to_vec()))
    }

    pub fn recv_kind(&mut self, expected: u8) -> Result<Vec<u8>> {
        let (kind, payload) = self.recv()?;
        if kind != expected {
            return Err(Error::Protocol(format!("expected message type {expected}, got {kind}")));
        }
        Ok(payload)
    }
}

/// A fresh input ciphertext: the seed of `a` and the packed `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputMessage {
    pub seed: [u8; 32],
    pub b: Vec<u64>,
}

impl InputMessage {
    /// Frame bytes beyond the packed ciphertext body.
    pub const OVERHEAD: usize = FRAME_HEADER + 32;

    pub fn encode(&self, params: &HeParams) -> Vec<u8> {
        let mut out = self.seed.to_vec();
        out.extend(pack_bits(&self.b, params.q_bits));
        out
    }

    pub fn decode(payload: &[u8], params: &HeParams) -> Result<Self> {
        let body = params.packed_bytes(params.n);
        if payload.len() != 32 + body {
            return Err(Error::Format(format!(
                "input message of {} bytes, expected {}",
                payload.len(),
                32 + body
            )));
        }
        Ok(InputMessage {
            seed: payload[..32].try_into().expect("32 bytes"),
            b: unpack_bits(&payload[32..], params.q_bits, params.n)?,
        })
    }
}

/// The LWE ciphertexts extracted from one output polynomial. They share the
/// polynomial's `a`, so it is sent once followed by one `b` per coefficient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputMessage {
    pub id: u32,
    pub a: Vec<u64>,
    pub b: Vec<u64>,
}

impl OutputMessage {
    /// Frame bytes beyond the packed ciphertext body.
    pub const OVERHEAD: usize = FRAME_HEADER + 8;

    pub fn encode(&self, params: &HeParams) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + params.packed_bytes(self.a.len() + self.b.len()));
        out.extend_from_slice(&self.id.to_le_bytes());
        out.extend_from_slice(&(self.b.len() as u32).to_le_bytes());
        let mut coeffs = self.a.clone();
        coeffs.extend_from_slice(&self.b);
        out.extend(pack_bits(&coeffs, params.q_bits));
        out
    }

    pub fn decode(payload: &[u8], params: &HeParams) -> Result<Self> {
        if payload.len() < 8 {
            return Err(Error::Format("output message header truncated".into()));
        }
        let id = u32::from_le_bytes(payload[..4].try_into().expect("4 bytes"));
        let count = u32::from_le_bytes(payload[4..8].try_into().expect("4 bytes")) as usize;
        let body = params.packed_bytes(params.n + count);
        if payload.len() != 8 + body {
            return Err(Error::Format(format!(
                "output message of {} bytes, expected {}",
                payload.len(),
                8 + body
            )));
        }
        let mut coeffs = unpack_bits(&payload[8..], params.q_bits, params.n + count)?;
        let b = coeffs.split_off(params.n);
        Ok(OutputMessage { id, a: coeffs, b })
    }
}
